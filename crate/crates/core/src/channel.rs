//! Kraus channels on `H^S = H^A⊗H^B ⊕ K`.
//!
//! A channel under which `H^A` is noiseless for perfectly initialized states
//! has Kraus operators `[[I^A⊗C_i, D_i], [0, G_i]]` with
//!
//! * `Σ C_i†C_i = I^B`,
//! * `Σ (I^A⊗C_i)†D_i = 0`,
//! * `Σ (D_i†D_i + G_i†G_i) = I_K`.
//!
//! The `D_i` blocks move population from `K` into the code space; on an
//! imperfectly initialized state they add the PSD [`leak_term`] to the reduced
//! operator on `H^A`.

use crate::error::{Error, Result};
use crate::linalg::{self, ComplexMatrix};
use crate::rng::Stream;
use crate::space::{self, DensityOperator, PositiveOperator, SpaceDecomposition};

pub const COMPLETENESS_TOL: f64 = 1e-9;
pub const BLOCK_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct KrausChannel {
    decomposition: SpaceDecomposition,
    kraus: Vec<ComplexMatrix>,
}

impl KrausChannel {
    pub fn new(decomposition: SpaceDecomposition, kraus: Vec<ComplexMatrix>) -> Result<Self> {
        let ds = decomposition.ds();
        if kraus.is_empty() {
            return Err(Error::InvalidArgument {
                name: "kraus",
                reason: "a channel needs at least one Kraus operator".into(),
            });
        }
        for e in &kraus {
            if e.shape() != (ds, ds) {
                return Err(Error::mismatch(
                    format!("{ds}x{ds} Kraus operator"),
                    format!("{}x{}", e.nrows(), e.ncols()),
                ));
            }
        }
        let residual = linalg::completeness_residual(&kraus, ds);
        if residual > COMPLETENESS_TOL {
            return Err(Error::Invariant {
                name: "kraus_completeness",
                residual,
            });
        }
        Ok(KrausChannel {
            decomposition,
            kraus,
        })
    }

    pub fn identity(decomposition: SpaceDecomposition) -> Self {
        KrausChannel {
            decomposition,
            kraus: vec![linalg::identity(decomposition.ds())],
        }
    }

    /// The unitary channel `ρ ↦ UρU†`.
    pub fn unitary(decomposition: SpaceDecomposition, u: ComplexMatrix) -> Result<Self> {
        KrausChannel::new(decomposition, vec![u])
    }

    pub fn decomposition(&self) -> SpaceDecomposition {
        self.decomposition
    }

    pub fn kraus(&self) -> &[ComplexMatrix] {
        &self.kraus
    }

    pub fn completeness_residual(&self) -> f64 {
        linalg::completeness_residual(&self.kraus, self.decomposition.ds())
    }

    /// Linear action `Σ E_i m E_i†` on an arbitrary `dS × dS` matrix.
    pub fn apply_matrix(&self, m: &ComplexMatrix) -> ComplexMatrix {
        let ds = self.decomposition.ds();
        let mut out = linalg::zeros(ds, ds);
        for e in &self.kraus {
            out += e * m * e.adjoint();
        }
        out
    }

    pub fn apply(&self, rho: &DensityOperator) -> Result<DensityOperator> {
        if rho.decomposition() != self.decomposition {
            return Err(Error::mismatch(
                format!("{:?}", self.decomposition.dims()),
                format!("{:?}", rho.decomposition().dims()),
            ));
        }
        let out = linalg::hermitize(&self.apply_matrix(rho.matrix()))?;
        DensityOperator::new(self.decomposition, out)
    }
}

/// Block data `(C_i, D_i, G_i)` of a channel with noiseless `H^A`.
#[derive(Debug, Clone, PartialEq)]
pub struct StructuredChannelSpec {
    decomposition: SpaceDecomposition,
    c: Vec<ComplexMatrix>,
    d: Vec<ComplexMatrix>,
    g: Vec<ComplexMatrix>,
}

impl StructuredChannelSpec {
    /// Validate shapes and the three block constraints; a violation names the
    /// failing constraint (`c_completeness`, `cd_orthogonality`,
    /// `k_completeness`).
    pub fn new(
        decomposition: SpaceDecomposition,
        c: Vec<ComplexMatrix>,
        d: Vec<ComplexMatrix>,
        g: Vec<ComplexMatrix>,
    ) -> Result<Self> {
        let spec = StructuredChannelSpec {
            decomposition,
            c,
            d,
            g,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn decomposition(&self) -> SpaceDecomposition {
        self.decomposition
    }

    pub fn c(&self) -> &[ComplexMatrix] {
        &self.c
    }

    pub fn d(&self) -> &[ComplexMatrix] {
        &self.d
    }

    pub fn g(&self) -> &[ComplexMatrix] {
        &self.g
    }

    pub fn len(&self) -> usize {
        self.c.len()
    }

    pub fn is_empty(&self) -> bool {
        self.c.is_empty()
    }

    /// Upper-left blocks `I^A⊗C_i`.
    pub fn upper_blocks(&self) -> Vec<ComplexMatrix> {
        let ia = linalg::identity(self.decomposition.da());
        self.c.iter().map(|c| linalg::kron(&ia, c)).collect()
    }

    fn validate(&self) -> Result<()> {
        let dec = self.decomposition;
        let n = self.c.len();
        if n == 0 || self.d.len() != n || self.g.len() != n {
            return Err(Error::InvalidArgument {
                name: "blocks",
                reason: format!(
                    "need equal, non-zero numbers of C, D, G blocks; got {}, {}, {}",
                    n,
                    self.d.len(),
                    self.g.len()
                ),
            });
        }
        check_shapes("C", &self.c, (dec.db(), dec.db()))?;
        check_shapes("D", &self.d, (dec.dab(), dec.dk()))?;
        check_shapes("G", &self.g, (dec.dk(), dec.dk()))?;
        check_block_constraints(&self.upper_blocks(), &self.d, &self.g, dec)?;
        let residual = linalg::completeness_residual(&self.c, dec.db());
        if residual > BLOCK_TOL {
            return Err(Error::Invariant {
                name: "c_completeness",
                residual,
            });
        }
        Ok(())
    }

    /// `true` when every `D_i` vanishes (initialization-free channel).
    pub fn is_initialization_free(&self) -> bool {
        self.d.iter().all(|d| linalg::frobenius(d) == 0.0)
    }
}

fn check_shapes(name: &str, blocks: &[ComplexMatrix], shape: (usize, usize)) -> Result<()> {
    for (i, b) in blocks.iter().enumerate() {
        if b.shape() != shape {
            return Err(Error::mismatch(
                format!("{name}[{i}]: {}x{}", shape.0, shape.1),
                format!("{}x{}", b.nrows(), b.ncols()),
            ));
        }
    }
    Ok(())
}

/// `Σ U_i†D_i = 0` and `Σ (D_i†D_i + G_i†G_i) = I_K` for upper blocks `U_i`.
fn check_block_constraints(
    upper: &[ComplexMatrix],
    d: &[ComplexMatrix],
    g: &[ComplexMatrix],
    dec: SpaceDecomposition,
) -> Result<()> {
    let mut cross = linalg::zeros(dec.dab(), dec.dk());
    let mut k = -linalg::identity(dec.dk());
    for ((u, d), g) in upper.iter().zip(d).zip(g) {
        cross += u.adjoint() * d;
        k += d.adjoint() * d + g.adjoint() * g;
    }
    let residual = linalg::frobenius(&cross);
    if residual > BLOCK_TOL {
        return Err(Error::Invariant {
            name: "cd_orthogonality",
            residual,
        });
    }
    let residual = linalg::frobenius(&k);
    if residual > BLOCK_TOL {
        return Err(Error::Invariant {
            name: "k_completeness",
            residual,
        });
    }
    Ok(())
}

fn block_kraus(dec: SpaceDecomposition, upper: &ComplexMatrix, d: &ComplexMatrix, g: &ComplexMatrix) -> ComplexMatrix {
    let (n, k) = (dec.dab(), dec.dk());
    let mut e = linalg::zeros(n + k, n + k);
    e.view_mut((0, 0), (n, n)).copy_from(upper);
    e.view_mut((0, n), (n, k)).copy_from(d);
    e.view_mut((n, n), (k, k)).copy_from(g);
    e
}

/// Kraus operators `[[I^A⊗C_i, D_i], [0, G_i]]`.
pub fn assemble(spec: &StructuredChannelSpec) -> KrausChannel {
    let dec = spec.decomposition;
    let kraus = spec
        .upper_blocks()
        .iter()
        .zip(&spec.d)
        .zip(&spec.g)
        .map(|((u, d), g)| block_kraus(dec, u, d, g))
        .collect();
    KrausChannel::new(dec, kraus).expect("validated block constraints imply completeness")
}

/// Orthonormal basis (columns) of the range of `m`.
fn range_basis(m: &ComplexMatrix) -> Result<ComplexMatrix> {
    let gram = m * m.adjoint();
    let eig = linalg::eigh(&gram)?;
    let floor = 1e-10 * eig.spectral_radius().max(f64::MIN_POSITIVE);
    let keep: Vec<usize> = (0..eig.eigenvalues.len())
        .filter(|&j| eig.eigenvalues[j] > floor)
        .collect();
    Ok(eig.eigenvectors.select_columns(&keep))
}

/// Leak blocks `(D_i, G_i)` completing a set of upper-left blocks `U_i` with
/// `Σ U_i†U_i = I`.
///
/// A raw Ginibre stack `X` is projected onto the orthogonal complement of
/// `range`, rescaled so that `M = Σ D_i†D_i` has spectral norm `t`, and the
/// `K` blocks are `G_i = R_i·√(I_K − M)` for a random Kraus set `{R_i}` on `K`.
fn leak_blocks(
    dec: SpaceDecomposition,
    forbidden_range: &ComplexMatrix,
    n: usize,
    t: f64,
    rng: &mut Stream,
) -> Result<(Vec<ComplexMatrix>, Vec<ComplexMatrix>)> {
    let (nab, dk) = (dec.dab(), dec.dk());
    let x = linalg::ginibre(n * nab, dk, rng);
    let r = linalg::random_kraus_set(dk, n, rng);
    let projected = &x - forbidden_range * (forbidden_range.adjoint() * &x);
    let norm = linalg::spectral_norm(&projected);
    let stacked = if t > 0.0 && norm > 1e-12 {
        projected.scale(t / norm)
    } else {
        linalg::zeros(n * nab, dk)
    };
    let d: Vec<ComplexMatrix> = (0..n).map(|i| stacked.rows(i * nab, nab).into_owned()).collect();
    let m = stacked.adjoint() * &stacked;
    let rest = linalg::psd_sqrt(&(linalg::identity(dk) - m), linalg::PSD_CLIP)?;
    let g = r.iter().map(|ri| ri * &rest).collect();
    Ok((d, g))
}

fn stack(blocks: &[ComplexMatrix]) -> ComplexMatrix {
    let cols = blocks[0].ncols();
    let rows: usize = blocks.iter().map(|b| b.nrows()).sum();
    let mut out = linalg::zeros(rows, cols);
    let mut at = 0;
    for b in blocks {
        out.view_mut((at, 0), (b.nrows(), cols)).copy_from(b);
        at += b.nrows();
    }
    out
}

fn check_strength(t: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::InvalidArgument {
            name: "leak_strength",
            reason: format!("must lie in [0, 1], got {t}"),
        });
    }
    Ok(())
}

/// Random valid block data with `n` Kraus operators and leak strength `t`.
///
/// `C_i` come from a random Kraus set on `H^B`. Stacking `T = [I⊗C_1; …; I⊗C_n]`
/// gives an isometry, so `I − T·T†` projects raw `D` stacks onto the solutions
/// of `Σ (I⊗C_i)†D_i = 0`. `D` is then rescaled so `‖Σ D_i†D_i‖ = t`.
pub fn random_structured(
    dec: SpaceDecomposition,
    n: usize,
    t: f64,
    rng: &mut Stream,
) -> Result<StructuredChannelSpec> {
    check_strength(t)?;
    if n == 0 {
        return Err(Error::InvalidArgument {
            name: "n_kraus",
            reason: "need at least one Kraus operator".into(),
        });
    }
    let c = linalg::random_kraus_set(dec.db(), n, rng);
    let ia = linalg::identity(dec.da());
    let upper: Vec<ComplexMatrix> = c.iter().map(|ci| linalg::kron(&ia, ci)).collect();
    let isometry = stack(&upper);
    let (d, g) = leak_blocks(dec, &isometry, n, t, rng)?;
    StructuredChannelSpec::new(dec, c, d, g)
}

/// Structured channel with `D_i = 0`.
pub fn random_initialization_free(
    dec: SpaceDecomposition,
    n: usize,
    rng: &mut Stream,
) -> Result<StructuredChannelSpec> {
    random_structured(dec, n, 0.0, rng)
}

/// `E^A⊗E^B ⊕ E_K` realized as the Kraus union
/// `{(A_j⊗B_k) ⊕ 0} ∪ {0 ⊕ K_l}`, which annihilates coherences between the code
/// space and `K`.
pub fn assemble_local_product(
    dec: SpaceDecomposition,
    ea: &[ComplexMatrix],
    eb: &[ComplexMatrix],
    ek: &[ComplexMatrix],
) -> Result<KrausChannel> {
    for (name, set, dim) in [("EA", ea, dec.da()), ("EB", eb, dec.db()), ("EK", ek, dec.dk())] {
        if set.is_empty() {
            return Err(Error::InvalidArgument {
                name: "factor",
                reason: format!("{name} has no Kraus operators"),
            });
        }
        check_shapes(name, set, (dim, dim))?;
        let residual = linalg::completeness_residual(set, dim);
        if residual > COMPLETENESS_TOL {
            return Err(Error::Invariant {
                name: "factor_completeness",
                residual,
            });
        }
    }
    let zab = linalg::zeros(dec.dab(), dec.dab());
    let zk = linalg::zeros(dec.dk(), dec.dk());
    let mut kraus = Vec::with_capacity(ea.len() * eb.len() + ek.len());
    for a in ea {
        for b in eb {
            kraus.push(dec.embed(&linalg::kron(a, b), &zk));
        }
    }
    if dec.dk() > 0 {
        for k in ek {
            kraus.push(dec.embed(&zab, k));
        }
    }
    KrausChannel::new(dec, kraus)
}

/// Random local product channel with 1–3 Kraus operators per factor.
pub fn random_local_product(dec: SpaceDecomposition, rng: &mut Stream) -> (KrausChannel, Vec<ComplexMatrix>) {
    let ea = linalg::random_kraus_set(dec.da(), rng.int_in(1, 3), rng);
    let eb = linalg::random_kraus_set(dec.db(), rng.int_in(1, 3), rng);
    let ek = linalg::random_kraus_set(dec.dk(), rng.int_in(1, 3), rng);
    let ch = assemble_local_product(dec, &ea, &eb, &ek).expect("random factors are complete");
    (ch, ea)
}

/// `Σ_j F_j X F_j†` for a Kraus set on `H^A`.
pub fn apply_on_a(fa: &[ComplexMatrix], x: &ComplexMatrix) -> ComplexMatrix {
    fa.iter()
        .fold(linalg::zeros(x.nrows(), x.ncols()), |acc, f| acc + f * x * f.adjoint())
}

/// Block data of a channel that implements `C^A` (Kraus `{F_j}`) on the
/// encoded information: Kraus operators `[[F_j⊗C_i, D_ji], [0, G_ji]]`.
/// The `D` and `G` blocks are indexed `[j][i]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ComputationSpec {
    decomposition: SpaceDecomposition,
    fa: Vec<ComplexMatrix>,
    c: Vec<ComplexMatrix>,
    d: Vec<Vec<ComplexMatrix>>,
    g: Vec<Vec<ComplexMatrix>>,
}

impl ComputationSpec {
    /// Validate `Σ F_j†F_j = I^A`, `Σ C_i†C_i = I^B`, `Σ (F_j⊗C_i)†D_ji = 0`
    /// and `Σ (D_ji†D_ji + G_ji†G_ji) = I_K`.
    pub fn new(
        decomposition: SpaceDecomposition,
        fa: Vec<ComplexMatrix>,
        c: Vec<ComplexMatrix>,
        d: Vec<Vec<ComplexMatrix>>,
        g: Vec<Vec<ComplexMatrix>>,
    ) -> Result<Self> {
        let spec = ComputationSpec {
            decomposition,
            fa,
            c,
            d,
            g,
        };
        spec.validate()?;
        Ok(spec)
    }

    fn validate(&self) -> Result<()> {
        let dec = self.decomposition;
        let (nf, nc) = (self.fa.len(), self.c.len());
        let rows_ok = |v: &Vec<Vec<ComplexMatrix>>| v.len() == nf && v.iter().all(|r| r.len() == nc);
        if nf == 0 || nc == 0 || !rows_ok(&self.d) || !rows_ok(&self.g) {
            return Err(Error::InvalidArgument {
                name: "blocks",
                reason: format!("need {nf}x{nc} D and G blocks indexed [j][i]"),
            });
        }
        check_shapes("F", &self.fa, (dec.da(), dec.da()))?;
        check_shapes("C", &self.c, (dec.db(), dec.db()))?;
        for row in &self.d {
            check_shapes("D", row, (dec.dab(), dec.dk()))?;
        }
        for row in &self.g {
            check_shapes("G", row, (dec.dk(), dec.dk()))?;
        }
        let residual = linalg::completeness_residual(&self.fa, dec.da());
        if residual > BLOCK_TOL {
            return Err(Error::Invariant {
                name: "f_completeness",
                residual,
            });
        }
        let residual = linalg::completeness_residual(&self.c, dec.db());
        if residual > BLOCK_TOL {
            return Err(Error::Invariant {
                name: "c_completeness",
                residual,
            });
        }
        let d: Vec<ComplexMatrix> = self.d.iter().flatten().cloned().collect();
        let g: Vec<ComplexMatrix> = self.g.iter().flatten().cloned().collect();
        check_block_constraints(&self.upper_blocks(), &d, &g, dec)
    }

    pub fn decomposition(&self) -> SpaceDecomposition {
        self.decomposition
    }

    pub fn fa(&self) -> &[ComplexMatrix] {
        &self.fa
    }

    pub fn c(&self) -> &[ComplexMatrix] {
        &self.c
    }

    pub fn d(&self) -> &[Vec<ComplexMatrix>] {
        &self.d
    }

    pub fn g(&self) -> &[Vec<ComplexMatrix>] {
        &self.g
    }

    /// `F_j⊗C_i`, row-major in `(j, i)`.
    pub fn upper_blocks(&self) -> Vec<ComplexMatrix> {
        let mut out = Vec::with_capacity(self.fa.len() * self.c.len());
        for f in &self.fa {
            for c in &self.c {
                out.push(linalg::kron(f, c));
            }
        }
        out
    }

    /// `Tr_B{Σ D_ji ρ̃₃ D_ji†}`.
    pub fn leak_term(&self, rho: &DensityOperator) -> Result<PositiveOperator> {
        let d: Vec<ComplexMatrix> = self.d.iter().flatten().cloned().collect();
        leak_from_blocks(self.decomposition, &d, rho)
    }
}

/// Kraus operators `[[F_j⊗C_i, D_ji], [0, G_ji]]`.
pub fn assemble_computation(spec: &ComputationSpec) -> KrausChannel {
    let dec = spec.decomposition;
    let d = spec.d.iter().flatten();
    let g = spec.g.iter().flatten();
    let kraus = spec
        .upper_blocks()
        .iter()
        .zip(d)
        .zip(g)
        .map(|((u, d), g)| block_kraus(dec, u, d, g))
        .collect();
    KrausChannel::new(dec, kraus).expect("validated block constraints imply completeness")
}

/// Random computation channel for the given `C^A`, with `n` Kraus operators
/// `C_i` on `H^B` and leak strength `t`.
///
/// The `D_ji` are projected onto the complement of the span of the stacks
/// `[(Y·F_j)⊗C_i]_ji` over all operators `Y` on `H^A`. This implies the
/// completeness condition `Σ (F_j⊗C_i)†D_ji = 0` (take `Y = I`) and also
/// removes the code–`K` coherence contribution to the reduced operator, so
/// the reduced update is `C^A(Tr_B ρ̃₁) + Tr_B{Σ D ρ̃₃ D†}`. For `F = {I}` the
/// span reduces to the range of `[I⊗C_i]_i` used by [`random_structured`].
pub fn random_computation(
    dec: SpaceDecomposition,
    fa: Vec<ComplexMatrix>,
    n: usize,
    t: f64,
    rng: &mut Stream,
) -> Result<ComputationSpec> {
    check_strength(t)?;
    if n == 0 || fa.is_empty() {
        return Err(Error::InvalidArgument {
            name: "n_kraus",
            reason: "need at least one Kraus operator on A and on B".into(),
        });
    }
    let da = dec.da();
    let c = linalg::random_kraus_set(dec.db(), n, rng);
    let mut spanning = Vec::with_capacity(da * da);
    for a in 0..da {
        for a2 in 0..da {
            let mut unit = linalg::zeros(da, da);
            unit[(a, a2)] = linalg::c(1.0, 0.0);
            let blocks: Vec<ComplexMatrix> = fa
                .iter()
                .flat_map(|f| c.iter().map(|ci| linalg::kron(&(&unit * f), ci)).collect::<Vec<_>>())
                .collect();
            spanning.push(stack(&blocks));
        }
    }
    let wide = concat_columns(&spanning);
    let basis = range_basis(&wide)?;
    let (d, g) = leak_blocks(dec, &basis, fa.len() * n, t, rng)?;
    let nc = c.len();
    let d = d.chunks(nc).map(|r| r.to_vec()).collect();
    let g = g.chunks(nc).map(|r| r.to_vec()).collect();
    ComputationSpec::new(dec, fa, c, d, g)
}

fn concat_columns(parts: &[ComplexMatrix]) -> ComplexMatrix {
    let rows = parts[0].nrows();
    let cols: usize = parts.iter().map(|p| p.ncols()).sum();
    let mut out = linalg::zeros(rows, cols);
    let mut at = 0;
    for p in parts {
        out.view_mut((0, at), (rows, p.ncols())).copy_from(p);
        at += p.ncols();
    }
    out
}

fn leak_from_blocks(
    dec: SpaceDecomposition,
    d: &[ComplexMatrix],
    rho: &DensityOperator,
) -> Result<PositiveOperator> {
    if rho.decomposition() != dec {
        return Err(Error::mismatch(
            format!("{:?}", dec.dims()),
            format!("{:?}", rho.decomposition().dims()),
        ));
    }
    let rho3 = rho.blocks().rho3;
    let mut acc = linalg::zeros(dec.dab(), dec.dab());
    for di in d {
        acc += di * &rho3 * di.adjoint();
    }
    let reduced = linalg::partial_trace_b(&acc, dec.da(), dec.db())?;
    PositiveOperator::new(linalg::hermitize(&reduced)?)
}

/// `Tr_B{Σ D_i ρ̃₃ D_i†}`: the PSD operator a structured channel adds to the
/// reduced operator on `H^A` of an imperfectly initialized state.
pub fn leak_term(spec: &StructuredChannelSpec, rho: &DensityOperator) -> Result<PositiveOperator> {
    leak_from_blocks(spec.decomposition, &spec.d, rho)
}

/// Which block of which Kraus operator breaks the noiseless form.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiselessWitness {
    pub kraus_index: usize,
    pub block: &'static str,
    pub residual: f64,
}

/// Result of [`is_noiseless`]: extracted `C_i` on success, a witness otherwise.
#[derive(Debug, Clone, PartialEq)]
pub enum NoiselessCheck {
    Noiseless { c: Vec<ComplexMatrix> },
    Violated(NoiselessWitness),
}

impl NoiselessCheck {
    pub fn is_noiseless(&self) -> bool {
        matches!(self, NoiselessCheck::Noiseless { .. })
    }
}

/// Decide whether `H^A` is noiseless for perfectly initialized states: every
/// Kraus operator must have a vanishing lower-left block and an upper-left
/// block of the form `I^A⊗C_i`.
///
/// `C_i` is extracted as `Tr_A(U_i)/dA`; the upper block has the required
/// form exactly when it equals `I^A⊗C_i`, i.e. commutes with every `X^A⊗I^B`.
pub fn is_noiseless(ch: &KrausChannel) -> NoiselessCheck {
    let dec = ch.decomposition;
    let (n, k, da, db) = (dec.dab(), dec.dk(), dec.da(), dec.db());
    let ia = linalg::identity(da);
    let mut cs = Vec::with_capacity(ch.kraus.len());
    for (idx, e) in ch.kraus.iter().enumerate() {
        let lower_left = e.view((n, 0), (k, n)).into_owned();
        let residual = linalg::frobenius(&lower_left);
        if residual > BLOCK_TOL {
            return NoiselessCheck::Violated(NoiselessWitness {
                kraus_index: idx,
                block: "lower_left",
                residual,
            });
        }
        let upper = e.view((0, 0), (n, n)).into_owned();
        let c = ComplexMatrix::from_fn(db, db, |b, b2| {
            (0..da).map(|a| upper[(a * db + b, a * db + b2)]).sum::<num_complex::Complex64>()
                / da as f64
        });
        let residual = linalg::frobenius(&(&upper - linalg::kron(&ia, &c)));
        if residual > BLOCK_TOL {
            return NoiselessCheck::Violated(NoiselessWitness {
                kraus_index: idx,
                block: "upper_left",
                residual,
            });
        }
        cs.push(c);
    }
    NoiselessCheck::Noiseless { c: cs }
}

/// Unitary swapping `H^A` and `H^B` (`dA = dB`), identity on `K`.
pub fn swap_ab_unitary(dec: SpaceDecomposition) -> Result<ComplexMatrix> {
    if dec.da() != dec.db() {
        return Err(Error::InvalidArgument {
            name: "dims",
            reason: format!("swap needs dA = dB, got {} and {}", dec.da(), dec.db()),
        });
    }
    let d = dec.da();
    let mut s = linalg::zeros(d * d, d * d);
    for a in 0..d {
        for b in 0..d {
            s[(b * d + a, a * d + b)] = linalg::c(1.0, 0.0);
        }
    }
    Ok(dec.embed(&s, &linalg::identity(dec.dk())))
}

/// Reduced operator update of a structured channel:
/// `(reduced(E(ρ̃)), reduced(ρ̃) + leak)`.
pub fn reduced_update(
    spec: &StructuredChannelSpec,
    rho: &DensityOperator,
) -> Result<(ComplexMatrix, ComplexMatrix)> {
    let out = assemble(spec).apply(rho)?;
    let lhs = space::reduced_on_a(&out).matrix().clone();
    let rhs = space::reduced_on_a(rho).matrix() + leak_term(spec, rho)?.matrix();
    Ok((lhs, rhs))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{approx_eq, frobenius, identity};
    use crate::space::BlockView;
    use crate::space::{random_imperfect_state, random_perfect_state, random_state, reduced_on_a};

    fn dims(da: usize, db: usize, dk: usize) -> SpaceDecomposition {
        SpaceDecomposition::new(da, db, dk).unwrap()
    }

    #[test]
    fn assemble_unitary_blocks() {
        let dec = dims(2, 2, 2);
        let mut rng = Stream::new(1);
        let ub = linalg::haar_unitary(2, &mut rng);
        let uk = linalg::haar_unitary(2, &mut rng);
        let spec = StructuredChannelSpec::new(dec, vec![ub.clone()], vec![linalg::zeros(4, 2)], vec![uk.clone()]).unwrap();
        let ch = assemble(&spec);
        assert_eq!(ch.kraus().len(), 1);
        let expected = dec.embed(&linalg::kron(&identity(2), &ub), &uk);
        assert!(approx_eq(&ch.kraus()[0], &expected, 0.0));
    }

    #[test]
    fn assemble_without_k() {
        let dec = dims(2, 2, 0);
        let mut rng = Stream::new(2);
        let spec = random_structured(dec, 3, 1.0, &mut rng).unwrap();
        let ch = assemble(&spec);
        for (e, c) in ch.kraus().iter().zip(spec.c()) {
            assert!(approx_eq(e, &linalg::kron(&identity(2), c), 0.0));
        }
    }

    #[test]
    fn spec_validation_names_constraint() {
        let dec = dims(1, 2, 1);
        let mut rng = Stream::new(3);
        let u = linalg::haar_unitary(2, &mut rng);
        let err = StructuredChannelSpec::new(dec, vec![u.scale(0.5)], vec![linalg::zeros(2, 1)], vec![identity(1)])
            .unwrap_err();
        assert!(matches!(err, Error::Invariant { name: "c_completeness", .. }));
        let mut d = linalg::zeros(2, 1);
        d[(0, 0)] = linalg::c(0.6, 0.0);
        let err = StructuredChannelSpec::new(dec, vec![u.clone()], vec![d], vec![identity(1).scale(0.8)]).unwrap_err();
        assert!(matches!(err, Error::Invariant { name: "cd_orthogonality", .. }));
        let err = StructuredChannelSpec::new(dec, vec![u.clone()], vec![linalg::zeros(2, 1)], vec![identity(1).scale(0.5)])
            .unwrap_err();
        assert!(matches!(err, Error::Invariant { name: "k_completeness", .. }));
        assert!(StructuredChannelSpec::new(dec, vec![u], vec![], vec![]).is_err());
    }

    #[test]
    fn random_structured_is_valid_and_leaks() {
        let mut rng = Stream::new(4);
        for dec in [dims(2, 2, 2), dims(2, 2, 3), dims(3, 2, 2), dims(1, 3, 4)] {
            for n in 1..=4 {
                let spec = random_structured(dec, n, rng.uniform(), &mut rng).unwrap();
                assert!(assemble(&spec).completeness_residual() < 1e-9);
            }
        }
        let dec = dims(2, 2, 2);
        let t0 = random_structured(dec, 3, 0.0, &mut rng).unwrap();
        assert!(t0.is_initialization_free());
        let mut leaked = false;
        for _ in 0..1000 {
            let spec = random_structured(dec, 3, 1.0, &mut rng).unwrap();
            leaked |= spec.d().iter().any(|d| frobenius(d) > 1e-3);
        }
        assert!(leaked);
        assert!(random_structured(dec, 2, 1.5, &mut rng).is_err());
    }

    #[test]
    fn apply_examples() {
        let dec = dims(2, 2, 2);
        let mut rng = Stream::new(5);
        let rho = random_state(dec, &mut rng);
        assert_eq!(KrausChannel::identity(dec).apply(&rho).unwrap(), rho);
        let spec = random_structured(dec, 3, 1.0, &mut rng).unwrap();
        let ch = assemble(&spec);
        let out = ch.apply(&rho).unwrap();
        assert!((linalg::trace(out.matrix()).re - 1.0).abs() < 1e-10);
        let perfect = random_perfect_state(dec, &mut rng);
        let out = ch.apply(&perfect).unwrap();
        assert!(frobenius(&out.blocks().rho2) < 1e-14);
        assert!(frobenius(&out.blocks().rho3) < 1e-14);
        assert!(ch.apply(&random_state(dims(2, 2, 1), &mut rng)).is_err());
    }

    #[test]
    fn initialization_free_examples() {
        let dec = dims(2, 2, 3);
        let mut rng = Stream::new(6);
        let spec = random_initialization_free(dec, 2, &mut rng).unwrap();
        assert!(spec.d().iter().all(|d| frobenius(d) == 0.0));
        let ch = assemble(&spec);
        for _ in 0..20 {
            let rho = random_state(dec, &mut rng);
            let out = ch.apply(&rho).unwrap();
            assert!(approx_eq(reduced_on_a(&out).matrix(), reduced_on_a(&rho).matrix(), 1e-10));
        }
        let single = random_initialization_free(dec, 1, &mut rng).unwrap();
        let c = &single.c()[0];
        let g = &single.g()[0];
        assert!(approx_eq(&(c.adjoint() * c), &identity(2), 1e-10));
        assert!(approx_eq(&(g.adjoint() * g), &identity(3), 1e-10));
    }

    #[test]
    fn leak_term_examples() {
        let dec = dims(2, 2, 2);
        let mut rng = Stream::new(7);
        let spec0 = random_structured(dec, 3, 0.0, &mut rng).unwrap();
        let rho = random_imperfect_state(dec, &mut rng);
        assert_eq!(frobenius(leak_term(&spec0, &rho).unwrap().matrix()), 0.0);
        let spec = random_structured(dec, 3, 1.0, &mut rng).unwrap();
        let perfect = random_perfect_state(dec, &mut rng);
        assert_eq!(frobenius(leak_term(&spec, &perfect).unwrap().matrix()), 0.0);
        for _ in 0..50 {
            let spec = random_structured(dec, 3, rng.uniform(), &mut rng).unwrap();
            let rho = random_imperfect_state(dec, &mut rng);
            let (lhs, rhs) = reduced_update(&spec, &rho).unwrap();
            assert!(approx_eq(&lhs, &rhs, 1e-10));
            assert!(linalg::min_eigenvalue(leak_term(&spec, &rho).unwrap().matrix()).unwrap() >= -1e-10);
        }
    }

    #[test]
    fn noiseless_detection() {
        let dec = dims(2, 2, 1);
        let mut rng = Stream::new(8);
        let spec = random_structured(dec, 3, 1.0, &mut rng).unwrap();
        let check = is_noiseless(&assemble(&spec));
        match check {
            NoiselessCheck::Noiseless { c } => {
                for (got, want) in c.iter().zip(spec.c()) {
                    assert!(approx_eq(got, want, 1e-12));
                }
            }
            NoiselessCheck::Violated(w) => panic!("{w:?}"),
        }
        let mut generic = 0;
        for _ in 0..100 {
            let kraus = linalg::random_kraus_set(dec.ds(), 2, &mut rng);
            let ch = KrausChannel::new(dec, kraus).unwrap();
            generic += usize::from(!is_noiseless(&ch).is_noiseless());
        }
        assert_eq!(generic, 100);

        let swap = KrausChannel::unitary(dec, swap_ab_unitary(dec).unwrap()).unwrap();
        match is_noiseless(&swap) {
            NoiselessCheck::Violated(w) => assert_eq!(w.block, "upper_left"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn local_product_examples() {
        let dec = dims(2, 2, 2);
        let mut rng = Stream::new(9);
        let id = assemble_local_product(dec, &[identity(2)], &[identity(2)], &[identity(2)]).unwrap();
        // compare against the pinching on a basis of Hermitian inputs
        let ds = dec.ds();
        for i in 0..ds {
            for j in i..ds {
                for imag in [false, true] {
                    if i == j && imag {
                        continue;
                    }
                    let mut h = linalg::zeros(ds, ds);
                    let z = if imag { linalg::c(0.0, 1.0) } else { linalg::c(1.0, 0.0) };
                    h[(i, j)] = z;
                    h[(j, i)] = z.conj();
                    let b = BlockView::of(&dec, &h);
                    let pinched = dec.embed(&b.rho1, &b.rho3);
                    assert!(approx_eq(&id.apply_matrix(&h), &pinched, 1e-12));
                }
            }
        }

        let eb = linalg::random_kraus_set(2, 2, &mut rng);
        let ek = linalg::random_kraus_set(2, 3, &mut rng);
        let ch = assemble_local_product(dec, &[identity(2)], &eb, &ek).unwrap();
        let rho = crate::space::project_blocks(&random_state(dec, &mut rng));
        let out = ch.apply(&rho).unwrap();
        assert!(approx_eq(reduced_on_a(&out).matrix(), reduced_on_a(&rho).matrix(), 1e-10));

        for _ in 0..20 {
            let (ch, ea) = random_local_product(dec, &mut rng);
            let rho = random_perfect_state(dec, &mut rng);
            let out = ch.apply(&rho).unwrap();
            let direct = apply_on_a(&ea, reduced_on_a(&rho).matrix());
            assert!(approx_eq(reduced_on_a(&out).matrix(), &direct, 1e-10));
        }

        let bad = vec![identity(2).scale(0.5)];
        assert!(assemble_local_product(dec, &bad, &[identity(2)], &[identity(2)]).is_err());
    }

    #[test]
    fn computation_examples() {
        let dec = dims(2, 2, 2);
        let mut rng = Stream::new(10);

        // F = {I}: same draws give the structured channel (up to rounding)
        let mut r1 = Stream::new(77);
        let mut r2 = Stream::new(77);
        let comp = random_computation(dec, vec![identity(2)], 3, 0.7, &mut r1).unwrap();
        let spec = random_structured(dec, 3, 0.7, &mut r2).unwrap();
        let a = assemble_computation(&comp);
        let b = assemble(&spec);
        for (x, y) in a.kraus().iter().zip(b.kraus()) {
            assert!(approx_eq(x, y, 1e-10));
        }

        let u = linalg::haar_unitary(2, &mut rng);
        let comp = random_computation(dec, vec![u.clone()], 2, 1.0, &mut rng).unwrap();
        let ch = assemble_computation(&comp);
        let rho = random_perfect_state(dec, &mut rng);
        let r = reduced_on_a(&rho);
        let out = ch.apply(&rho).unwrap();
        assert!(approx_eq(reduced_on_a(&out).matrix(), &(&u * r.matrix() * u.adjoint()), 1e-10));

        for _ in 0..50 {
            let fa = linalg::random_kraus_set(2, rng.int_in(1, 3), &mut rng);
            let comp = random_computation(dec, fa.clone(), 2, rng.uniform(), &mut rng).unwrap();
            let ch = assemble_computation(&comp);
            assert!(ch.completeness_residual() < 1e-9);
            let rho = random_perfect_state(dec, &mut rng);
            let out = ch.apply(&rho).unwrap();
            let direct = apply_on_a(&fa, reduced_on_a(&rho).matrix());
            assert!(approx_eq(reduced_on_a(&out).matrix(), &direct, 1e-10));

            let imperfect = random_imperfect_state(dec, &mut rng);
            let out = ch.apply(&imperfect).unwrap();
            let err = reduced_on_a(&out).matrix() - apply_on_a(&fa, reduced_on_a(&imperfect).matrix());
            let leak = comp.leak_term(&imperfect).unwrap();
            assert!(approx_eq(&err, leak.matrix(), 1e-10));
        }
    }

    #[test]
    fn computation_validation() {
        let dec = dims(2, 1, 1);
        let f = vec![identity(2).scale(0.5)];
        let err = ComputationSpec::new(dec, f, vec![identity(1)], vec![vec![linalg::zeros(2, 1)]], vec![vec![identity(1)]])
            .unwrap_err();
        assert!(matches!(err, Error::Invariant { name: "f_completeness", .. }));
    }

    // Completeness alone (Σ (F_j⊗C_i)†D_ji = 0) leaves code-K coherences in the
    // reduced update when C^A has several Kraus operators, so the error term
    // need not be PSD.
    #[test]
    fn weak_constraint_allows_indefinite_error() {
        let dec = dims(2, 2, 2);
        let mut rng = Stream::new(11);
        let mut indefinite = 0;
        for _ in 0..200 {
            let fa = linalg::random_kraus_set(2, 2, &mut rng);
            let c = linalg::random_kraus_set(2, 2, &mut rng);
            let upper: Vec<ComplexMatrix> = fa
                .iter()
                .flat_map(|f| c.iter().map(|ci| linalg::kron(f, ci)).collect::<Vec<_>>())
                .collect();
            let (d, g) = leak_blocks(dec, &stack(&upper), 4, 1.0, &mut rng).unwrap();
            let d = d.chunks(2).map(|r| r.to_vec()).collect();
            let g = g.chunks(2).map(|r| r.to_vec()).collect();
            let comp = ComputationSpec::new(dec, fa.clone(), c, d, g).unwrap();
            let ch = assemble_computation(&comp);
            let rho = random_imperfect_state(dec, &mut rng);
            let out = ch.apply(&rho).unwrap();
            let err = reduced_on_a(&out).matrix() - apply_on_a(&fa, reduced_on_a(&rho).matrix());
            if linalg::min_eigenvalue(&err).unwrap() < -1e-6 {
                indefinite += 1;
            }
        }
        assert!(indefinite > 0);
    }

    // The leak term only sees the K block: a Hermitian input with code-K
    // coherences but nothing on K keeps its reduced operator.
    #[test]
    fn coherences_alone_do_not_leak() {
        let dec = dims(2, 2, 2);
        let mut rng = Stream::new(12);
        for _ in 0..20 {
            let spec = random_structured(dec, 3, 1.0, &mut rng).unwrap();
            let rho1 = linalg::random_density(4, 4, &mut rng).unwrap();
            let x = BlockView {
                rho1,
                rho2: linalg::ginibre(4, 2, &mut rng),
                rho3: linalg::zeros(2, 2),
            }
            .assemble();
            let out = assemble(&spec).apply_matrix(&x);
            let before = linalg::partial_trace_b(&x.view((0, 0), (4, 4)).into_owned(), 2, 2).unwrap();
            let after = linalg::partial_trace_b(&out.view((0, 0), (4, 4)).into_owned(), 2, 2).unwrap();
            assert!(approx_eq(&before, &after, 1e-12));
        }
    }
}
