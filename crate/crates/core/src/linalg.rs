//! Dense complex matrix kernels shared by every other module.

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::Stream;

pub type ComplexMatrix = DMatrix<Complex64>;

/// Negative eigenvalues in `[-PSD_CLIP, 0)` are treated as rounding noise.
pub const PSD_CLIP: f64 = 1e-10;

/// Eigenvalues below this fraction of the spectral radius are rounded to zero
/// before taking square roots, so exact-zero eigenvalues perturbed by ~1e-16
/// do not turn into ~1e-8 contributions.
pub const RANK_FLOOR: f64 = 1e-13;

const EIG_EPS: f64 = 1e-15;
const EIG_MAX_ITER: usize = 10_000;

pub fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

pub fn identity(d: usize) -> ComplexMatrix {
    ComplexMatrix::identity(d, d)
}

pub fn zeros(rows: usize, cols: usize) -> ComplexMatrix {
    ComplexMatrix::zeros(rows, cols)
}

pub fn from_real(rows: usize, cols: usize, entries: &[f64]) -> ComplexMatrix {
    ComplexMatrix::from_row_iterator(rows, cols, entries.iter().map(|&x| c(x, 0.0)))
}

pub fn ensure_square(m: &ComplexMatrix) -> Result<usize> {
    if m.nrows() != m.ncols() {
        return Err(Error::NotSquare {
            rows: m.nrows(),
            cols: m.ncols(),
        });
    }
    Ok(m.nrows())
}

pub fn frobenius(m: &ComplexMatrix) -> f64 {
    m.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// `‖a − b‖_F ≤ tol`; shapes must agree.
pub fn approx_eq(a: &ComplexMatrix, b: &ComplexMatrix, tol: f64) -> bool {
    a.shape() == b.shape() && frobenius(&(a - b)) <= tol
}

pub fn trace(m: &ComplexMatrix) -> Complex64 {
    m.diagonal().iter().sum()
}

/// Real part of `Tr(a·b)` without forming the product.
pub fn trace_product_re(a: &ComplexMatrix, b: &ComplexMatrix) -> f64 {
    let n = a.nrows();
    let mut acc = 0.0;
    for i in 0..n {
        for k in 0..a.ncols() {
            acc += (a[(i, k)] * b[(k, i)]).re;
        }
    }
    acc
}

/// Deviation from Hermiticity, `‖m − m†‖_F`.
pub fn hermiticity_residual(m: &ComplexMatrix) -> f64 {
    frobenius(&(m - m.adjoint()))
}

/// `(m + m†)/2`.
pub fn hermitize(m: &ComplexMatrix) -> Result<ComplexMatrix> {
    ensure_square(m)?;
    Ok((m + m.adjoint()).scale(0.5))
}

/// Eigendecomposition of a Hermitian matrix, eigenvalues ascending.
#[derive(Debug, Clone)]
pub struct HermitianEig {
    pub eigenvalues: Vec<f64>,
    /// Unitary whose columns are the eigenvectors.
    pub eigenvectors: ComplexMatrix,
}

impl HermitianEig {
    pub fn min(&self) -> f64 {
        self.eigenvalues.first().copied().unwrap_or(0.0)
    }

    pub fn max(&self) -> f64 {
        self.eigenvalues.last().copied().unwrap_or(0.0)
    }

    pub fn spectral_radius(&self) -> f64 {
        self.min().abs().max(self.max().abs())
    }

    /// `V·diag(f(λ))·V†`.
    pub fn reconstruct_with(&self, f: impl Fn(f64) -> f64) -> ComplexMatrix {
        let v = &self.eigenvectors;
        let mut scaled = v.clone();
        for (j, &lambda) in self.eigenvalues.iter().enumerate() {
            let w = f(lambda);
            scaled.column_mut(j).scale_mut(w);
        }
        scaled * v.adjoint()
    }
}

/// Hermitian eigendecomposition; the input is hermitized first.
pub fn eigh(m: &ComplexMatrix) -> Result<HermitianEig> {
    let h = hermitize(m)?;
    let n = h.nrows();
    if n == 0 {
        return Ok(HermitianEig {
            eigenvalues: Vec::new(),
            eigenvectors: zeros(0, 0),
        });
    }
    let eig = SymmetricEigen::try_new(h, EIG_EPS, EIG_MAX_ITER).ok_or(Error::NoConvergence)?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let eigenvalues = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut eigenvectors = zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        eigenvectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    Ok(HermitianEig {
        eigenvalues,
        eigenvectors,
    })
}

pub fn min_eigenvalue(m: &ComplexMatrix) -> Result<f64> {
    Ok(eigh(m)?.min())
}

/// Largest singular value.
pub fn spectral_norm(m: &ComplexMatrix) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.singular_values().max()
}

/// Sum of singular values.
pub fn nuclear_norm(m: &ComplexMatrix) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.singular_values().sum()
}

fn clipped_spectrum(m: &ComplexMatrix, clip: f64) -> Result<HermitianEig> {
    let eig = eigh(m)?;
    if eig.min() < -clip {
        return Err(Error::NotPositive {
            min_eigenvalue: eig.min(),
        });
    }
    Ok(eig)
}

/// Square root of a positive semidefinite matrix.
///
/// Eigenvalues in `[-clip, 0)` are clipped to zero; anything more negative is
/// reported as [`Error::NotPositive`].
pub fn psd_sqrt(m: &ComplexMatrix, clip: f64) -> Result<ComplexMatrix> {
    let eig = clipped_spectrum(m, clip)?;
    let floor = RANK_FLOOR * eig.spectral_radius();
    Ok(eig.reconstruct_with(|l| if l <= floor { 0.0 } else { l.sqrt() }))
}

/// Moore–Penrose inverse square root restricted to the support, plus the
/// projector onto the support.
pub fn psd_inv_sqrt_on_support(
    m: &ComplexMatrix,
    clip: f64,
) -> Result<(ComplexMatrix, ComplexMatrix)> {
    let eig = clipped_spectrum(m, clip)?;
    let floor = RANK_FLOOR * eig.spectral_radius();
    let inv = eig.reconstruct_with(|l| if l <= floor { 0.0 } else { 1.0 / l.sqrt() });
    let support = eig.reconstruct_with(|l| if l <= floor { 0.0 } else { 1.0 });
    Ok((inv, support))
}

/// Partial trace over the second factor; basis index of `a⊗b` is `a·db + b`.
pub fn partial_trace_b(m: &ComplexMatrix, da: usize, db: usize) -> Result<ComplexMatrix> {
    let n = ensure_square(m)?;
    if n != da * db {
        return Err(Error::mismatch(
            format!("{0}x{0} for dA={da}, dB={db}", da * db),
            format!("{n}x{n}"),
        ));
    }
    Ok(ComplexMatrix::from_fn(da, da, |a, a2| {
        (0..db).map(|b| m[(a * db + b, a2 * db + b)]).sum()
    }))
}

pub fn kron(a: &ComplexMatrix, b: &ComplexMatrix) -> ComplexMatrix {
    a.kronecker(b)
}

/// Block-diagonal `a ⊕ b`.
pub fn direct_sum(a: &ComplexMatrix, b: &ComplexMatrix) -> ComplexMatrix {
    let (ra, ca) = a.shape();
    let (rb, cb) = b.shape();
    let mut out = zeros(ra + rb, ca + cb);
    out.view_mut((0, 0), (ra, ca)).copy_from(a);
    out.view_mut((ra, ca), (rb, cb)).copy_from(b);
    out
}

/// `Σ E†E − I` in Frobenius norm.
pub fn completeness_residual(kraus: &[ComplexMatrix], d: usize) -> f64 {
    let mut acc = -identity(d);
    for e in kraus {
        acc += e.adjoint() * e;
    }
    frobenius(&acc)
}

/// Complex Ginibre matrix with standard complex normal entries.
pub fn ginibre(rows: usize, cols: usize, rng: &mut Stream) -> ComplexMatrix {
    let entries: Vec<Complex64> = (0..rows * cols).map(|_| rng.complex_normal()).collect();
    ComplexMatrix::from_row_slice(rows, cols, &entries)
}

/// Haar-distributed isometry `rows × cols` (`rows ≥ cols`): QR of a Ginibre
/// draw with the phases of `diag(R)` absorbed into `Q`.
pub fn haar_isometry(rows: usize, cols: usize, rng: &mut Stream) -> ComplexMatrix {
    assert!(rows >= cols, "isometry needs rows >= cols");
    if cols == 0 {
        return zeros(rows, 0);
    }
    let qr = ginibre(rows, cols, rng).qr();
    let r = qr.r();
    let mut q = qr.q();
    for j in 0..cols {
        let d = r[(j, j)];
        let phase = if d.norm() > 0.0 { d / d.norm() } else { c(1.0, 0.0) };
        for i in 0..rows {
            q[(i, j)] *= phase;
        }
    }
    q
}

pub fn haar_unitary(d: usize, rng: &mut Stream) -> ComplexMatrix {
    haar_isometry(d, d, rng)
}

/// `G·G†/Tr` with `G` a `d × rank` Ginibre draw.
pub fn random_density(d: usize, rank: usize, rng: &mut Stream) -> Result<ComplexMatrix> {
    if rank == 0 || rank > d {
        return Err(Error::InvalidArgument {
            name: "rank",
            reason: format!("need 1 <= rank <= {d}, got {rank}"),
        });
    }
    let g = ginibre(d, rank, rng);
    let p = &g * g.adjoint();
    let t = trace(&p).re;
    hermitize(&p.unscale(t))
}

/// `n` Kraus operators on `d` dimensions: a Haar isometry `d → n·d` cut into
/// `n` square blocks.
pub fn random_kraus_set(d: usize, n: usize, rng: &mut Stream) -> Vec<ComplexMatrix> {
    assert!(n >= 1, "a Kraus set needs at least one operator");
    let v = haar_isometry(n * d, d, rng);
    (0..n).map(|i| v.rows(i * d, d).into_owned()).collect()
}

/// Random POVM with `outcomes` elements `K_i†K_i` from a random Kraus set.
pub fn random_povm(d: usize, outcomes: usize, rng: &mut Stream) -> Vec<ComplexMatrix> {
    random_kraus_set(d, outcomes, rng)
        .into_iter()
        .map(|k| k.adjoint() * k)
        .collect()
}

/// Exchange format: `{"rows": n, "cols": m, "entries": [[re, im], …]}`, row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixJson {
    pub rows: usize,
    pub cols: usize,
    pub entries: Vec<[f64; 2]>,
}

impl From<&ComplexMatrix> for MatrixJson {
    fn from(m: &ComplexMatrix) -> Self {
        let mut entries = Vec::with_capacity(m.len());
        for i in 0..m.nrows() {
            for j in 0..m.ncols() {
                let z = m[(i, j)];
                entries.push([z.re, z.im]);
            }
        }
        MatrixJson {
            rows: m.nrows(),
            cols: m.ncols(),
            entries,
        }
    }
}

impl TryFrom<&MatrixJson> for ComplexMatrix {
    type Error = Error;

    fn try_from(j: &MatrixJson) -> Result<Self> {
        if j.rows * j.cols != j.entries.len() {
            return Err(Error::Format(format!(
                "matrix declares {}x{} but carries {} entries",
                j.rows,
                j.cols,
                j.entries.len()
            )));
        }
        if j.entries.iter().flatten().any(|x| !x.is_finite()) {
            return Err(Error::Format("matrix has non-finite entries".into()));
        }
        Ok(ComplexMatrix::from_row_iterator(
            j.rows,
            j.cols,
            j.entries.iter().map(|&[re, im]| c(re, im)),
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pauli_x() -> ComplexMatrix {
        from_real(2, 2, &[0.0, 1.0, 1.0, 0.0])
    }

    fn pauli_y() -> ComplexMatrix {
        ComplexMatrix::from_row_slice(2, 2, &[c(0., 0.), c(0., -1.), c(0., 1.), c(0., 0.)])
    }

    #[test]
    fn hermitize_examples() {
        assert_eq!(hermitize(&identity(3)).unwrap(), identity(3));
        let m = from_real(2, 2, &[0.0, 1.0, 0.0, 0.0]);
        assert_eq!(hermitize(&m).unwrap(), from_real(2, 2, &[0.0, 0.5, 0.5, 0.0]));
        let mut rng = Stream::new(1);
        let g = ginibre(4, 4, &mut rng);
        let h = &g + g.adjoint();
        assert!(approx_eq(&hermitize(&h).unwrap(), &h, 1e-15));
        assert!(matches!(
            hermitize(&zeros(2, 3)),
            Err(Error::NotSquare { rows: 2, cols: 3 })
        ));
    }

    #[test]
    fn eigh_reconstructs_and_is_unitary() {
        let mut rng = Stream::new(2);
        for d in 1..=8 {
            let g = ginibre(d, d, &mut rng);
            let h = &g + g.adjoint();
            let eig = eigh(&h).unwrap();
            assert!(eig.eigenvalues.windows(2).all(|w| w[0] <= w[1]));
            let back = eig.reconstruct_with(|l| l);
            assert!(frobenius(&(&back - &h)) <= 1e-10 * frobenius(&h));
            let v = &eig.eigenvectors;
            assert!(approx_eq(&(v.adjoint() * v), &identity(d), 1e-10));
        }
    }

    #[test]
    fn psd_sqrt_examples() {
        assert!(approx_eq(&psd_sqrt(&identity(3), PSD_CLIP).unwrap(), &identity(3), 1e-14));
        let d = from_real(2, 2, &[4.0, 0.0, 0.0, 9.0]);
        let s = psd_sqrt(&d, PSD_CLIP).unwrap();
        assert!(approx_eq(&s, &from_real(2, 2, &[2.0, 0.0, 0.0, 3.0]), 1e-13));

        let mut rng = Stream::new(3);
        let g = ginibre(5, 5, &mut rng);
        let p = &g * g.adjoint();
        let s = psd_sqrt(&p, PSD_CLIP).unwrap();
        let eig_err = eigh(&(&s * &s - &p)).unwrap().spectral_radius();
        assert!(eig_err < 1e-9, "{eig_err}");
    }

    #[test]
    fn psd_sqrt_rejects_indefinite_and_clips_noise() {
        let m = from_real(2, 2, &[1.0, 0.0, 0.0, -1e-3]);
        assert!(matches!(psd_sqrt(&m, PSD_CLIP), Err(Error::NotPositive { .. })));
        let m = from_real(2, 2, &[1.0, 0.0, 0.0, -1e-12]);
        let s = psd_sqrt(&m, PSD_CLIP).unwrap();
        assert_eq!(s[(1, 1)], c(0.0, 0.0));
    }

    #[test]
    fn partial_trace_of_product() {
        let x = pauli_x() + identity(2);
        let y = pauli_y().scale(0.3) + identity(2).scale(2.0);
        let pt = partial_trace_b(&kron(&x, &y), 2, 2).unwrap();
        assert!(approx_eq(&pt, &x.scale(4.0), 1e-14));
        let pt = partial_trace_b(&identity(4), 2, 2).unwrap();
        assert!(approx_eq(&pt, &identity(2).scale(2.0), 0.0));
        assert!(partial_trace_b(&identity(5), 2, 2).is_err());
    }

    #[test]
    fn partial_trace_matches_index_loop() {
        let mut rng = Stream::new(4);
        let m = ginibre(6, 6, &mut rng);
        let pt = partial_trace_b(&m, 3, 2).unwrap();
        // oracle: reshape as m[(a,b),(a',b')] and sum the diagonal b = b'
        for a in 0..3 {
            for a2 in 0..3 {
                let mut acc = c(0.0, 0.0);
                for b in 0..2 {
                    for b2 in 0..2 {
                        if b == b2 {
                            acc += m[(2 * a + b, 2 * a2 + b2)];
                        }
                    }
                }
                assert!((pt[(a, a2)] - acc).norm() < 1e-14);
            }
        }
    }

    #[test]
    fn haar_unitary_examples() {
        let mut rng = Stream::new(5);
        let u1 = haar_unitary(1, &mut rng);
        assert!((u1[(0, 0)].norm() - 1.0).abs() < 1e-12);
        for d in 1..=7 {
            let u = haar_unitary(d, &mut rng);
            assert!(approx_eq(&(u.adjoint() * &u), &identity(d), 1e-10));
        }
        let a = haar_unitary(4, &mut Stream::new(10));
        let b = haar_unitary(4, &mut Stream::new(11));
        assert!(frobenius(&(a - b)) > 1e-6);
    }

    #[test]
    fn random_density_examples() {
        let mut rng = Stream::new(6);
        let pure = random_density(4, 1, &mut rng).unwrap();
        let eig = eigh(&pure).unwrap();
        assert!((eig.max() - 1.0).abs() < 1e-12);
        assert!(eig.eigenvalues[..3].iter().all(|l| l.abs() < 1e-12));
        assert!(random_density(3, 0, &mut rng).is_err());
        assert!(random_density(3, 4, &mut rng).is_err());

        let mut purity = 0.0;
        for _ in 0..1000 {
            let rho = random_density(4, 4, &mut rng).unwrap();
            assert!((trace(&rho).re - 1.0).abs() < 1e-12);
            assert!(min_eigenvalue(&rho).unwrap() >= -1e-12);
            purity += trace_product_re(&rho, &rho);
        }
        purity /= 1000.0;
        assert!(purity > 0.25 && purity < 1.0, "{purity}");
    }

    #[test]
    fn random_kraus_examples() {
        let mut rng = Stream::new(7);
        let single = random_kraus_set(3, 1, &mut rng);
        assert!(approx_eq(&(single[0].adjoint() * &single[0]), &identity(3), 1e-10));

        let ks = random_kraus_set(2, 2, &mut rng);
        let mixed = identity(2).scale(0.5);
        let out = ks
            .iter()
            .fold(zeros(2, 2), |acc, k| acc + k * &mixed * k.adjoint());
        assert!((trace(&out).re - 1.0).abs() < 1e-12);
    }

    #[test]
    fn matrix_json_round_trip() {
        let mut rng = Stream::new(8);
        let m = ginibre(2, 3, &mut rng);
        let j = MatrixJson::from(&m);
        let text = serde_json::to_string(&j).unwrap();
        let back: MatrixJson = serde_json::from_str(&text).unwrap();
        assert_eq!(ComplexMatrix::try_from(&back).unwrap(), m);
        let bad = MatrixJson {
            rows: 2,
            cols: 2,
            entries: vec![[1.0, 0.0]],
        };
        assert!(ComplexMatrix::try_from(&bad).is_err());
    }
}
