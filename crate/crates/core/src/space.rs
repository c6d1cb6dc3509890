//! The decomposition `H^S = H^A⊗H^B ⊕ K`, block projections, reduced operators
//! on the protected subsystem, and state generators.
//!
//! Basis convention: indices `0 … dA·dB−1` span `H^A⊗H^B` with `a⊗b` at
//! `a·dB + b`; the remaining `dK` indices span `K`. The reference states
//! `|0^B⟩` and `|0_K⟩` are the first basis vectors of their factors.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, ComplexMatrix};
use crate::rng::Stream;

pub const HERMITIAN_TOL: f64 = 1e-9;
pub const POSITIVITY_TOL: f64 = 1e-10;
pub const TRACE_TOL: f64 = 1e-10;

/// Weights below this are treated as "no support".
pub const ZERO_WEIGHT: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SpaceDecomposition {
    da: usize,
    db: usize,
    dk: usize,
}

impl SpaceDecomposition {
    pub fn new(da: usize, db: usize, dk: usize) -> Result<Self> {
        if da == 0 || db == 0 {
            return Err(Error::InvalidArgument {
                name: "dims",
                reason: format!("dA and dB must be at least 1, got ({da}, {db}, {dk})"),
            });
        }
        Ok(SpaceDecomposition { da, db, dk })
    }

    pub fn da(&self) -> usize {
        self.da
    }

    pub fn db(&self) -> usize {
        self.db
    }

    pub fn dk(&self) -> usize {
        self.dk
    }

    /// `dA·dB`.
    pub fn dab(&self) -> usize {
        self.da * self.db
    }

    /// `dA·dB + dK`.
    pub fn ds(&self) -> usize {
        self.dab() + self.dk
    }

    pub fn dims(&self) -> [usize; 3] {
        [self.da, self.db, self.dk]
    }

    pub fn projector_ab(&self) -> ComplexMatrix {
        linalg::direct_sum(&linalg::identity(self.dab()), &linalg::zeros(self.dk, self.dk))
    }

    pub fn projector_k(&self) -> ComplexMatrix {
        linalg::direct_sum(&linalg::zeros(self.dab(), self.dab()), &linalg::identity(self.dk))
    }

    /// Embed a `dA·dB` block and a `dK` block as `x ⊕ y`.
    pub fn embed(&self, ab: &ComplexMatrix, k: &ComplexMatrix) -> ComplexMatrix {
        linalg::direct_sum(ab, k)
    }

    fn check_matrix(&self, m: &ComplexMatrix) -> Result<()> {
        if m.shape() != (self.ds(), self.ds()) {
            return Err(Error::mismatch(
                format!("{0}x{0} for dims {1:?}", self.ds(), self.dims()),
                format!("{}x{}", m.nrows(), m.ncols()),
            ));
        }
        Ok(())
    }
}

/// Validate a square matrix as Hermitian PSD; returns its hermitized copy and trace.
fn check_positive(m: &ComplexMatrix) -> Result<(ComplexMatrix, f64)> {
    linalg::ensure_square(m)?;
    let herm = linalg::hermiticity_residual(m);
    if herm > HERMITIAN_TOL {
        return Err(Error::Invariant {
            name: "hermitian",
            residual: herm,
        });
    }
    let h = linalg::hermitize(m)?;
    let min = linalg::min_eigenvalue(&h)?;
    if min < -POSITIVITY_TOL {
        return Err(Error::Invariant {
            name: "positive_semidefinite",
            residual: -min,
        });
    }
    let t = linalg::trace(&h).re;
    Ok((h, t))
}

/// Validate a square matrix as a density matrix (Hermitian, PSD, unit trace).
pub fn check_density_matrix(m: &ComplexMatrix) -> Result<ComplexMatrix> {
    let (h, t) = check_positive(m)?;
    if (t - 1.0).abs() > TRACE_TOL {
        return Err(Error::Invariant {
            name: "trace_one",
            residual: (t - 1.0).abs(),
        });
    }
    Ok(h)
}

/// A unit-trace PSD operator on `H^S`.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityOperator {
    decomposition: SpaceDecomposition,
    matrix: ComplexMatrix,
}

impl DensityOperator {
    pub fn new(decomposition: SpaceDecomposition, matrix: ComplexMatrix) -> Result<Self> {
        decomposition.check_matrix(&matrix)?;
        let matrix = check_density_matrix(&matrix)?;
        Ok(DensityOperator {
            decomposition,
            matrix,
        })
    }

    pub fn decomposition(&self) -> SpaceDecomposition {
        self.decomposition
    }

    pub fn matrix(&self) -> &ComplexMatrix {
        &self.matrix
    }

    pub fn into_matrix(self) -> ComplexMatrix {
        self.matrix
    }

    pub fn blocks(&self) -> BlockView {
        BlockView::of(&self.decomposition, &self.matrix)
    }

    /// `Tr P^AB ρ`.
    pub fn ab_weight(&self) -> f64 {
        let n = self.decomposition.dab();
        (0..n).map(|i| self.matrix[(i, i)].re).sum()
    }

    /// `Tr P_K ρ`.
    pub fn k_weight(&self) -> f64 {
        let d = &self.decomposition;
        (d.dab()..d.ds()).map(|i| self.matrix[(i, i)].re).sum()
    }

    /// Convex combination `Σ w_i ρ_i`; weights must be non-negative and sum to one.
    pub fn mixture(parts: &[(f64, &DensityOperator)]) -> Result<DensityOperator> {
        let first = parts.first().ok_or(Error::InvalidArgument {
            name: "parts",
            reason: "empty mixture".into(),
        })?;
        let d = first.1.decomposition;
        let mut acc = linalg::zeros(d.ds(), d.ds());
        for (w, rho) in parts {
            if rho.decomposition != d {
                return Err(Error::mismatch(format!("{:?}", d.dims()), format!("{:?}", rho.decomposition.dims())));
            }
            if *w < 0.0 {
                return Err(Error::InvalidArgument {
                    name: "weights",
                    reason: format!("negative weight {w}"),
                });
            }
            acc += rho.matrix.scale(*w);
        }
        DensityOperator::new(d, acc)
    }
}

/// A PSD operator carrying its own trace weight; used for unnormalized blocks
/// and reduced operators.
#[derive(Debug, Clone, PartialEq)]
pub struct PositiveOperator {
    matrix: ComplexMatrix,
    trace_weight: f64,
}

impl PositiveOperator {
    pub fn new(matrix: ComplexMatrix) -> Result<Self> {
        let (matrix, trace_weight) = check_positive(&matrix)?;
        Ok(PositiveOperator {
            matrix,
            trace_weight,
        })
    }

    pub fn zero(d: usize) -> Self {
        PositiveOperator {
            matrix: linalg::zeros(d, d),
            trace_weight: 0.0,
        }
    }

    pub fn matrix(&self) -> &ComplexMatrix {
        &self.matrix
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn trace_weight(&self) -> f64 {
        self.trace_weight
    }

    pub fn scaled(&self, factor: f64) -> Result<Self> {
        if factor < 0.0 {
            return Err(Error::InvalidArgument {
                name: "factor",
                reason: format!("negative scale {factor}"),
            });
        }
        Ok(PositiveOperator {
            matrix: self.matrix.scale(factor),
            trace_weight: self.trace_weight * factor,
        })
    }

    pub fn plus(&self, other: &PositiveOperator) -> Result<Self> {
        if self.dim() != other.dim() {
            return Err(Error::mismatch(self.dim(), other.dim()));
        }
        PositiveOperator::new(&self.matrix + &other.matrix)
    }

    /// `p / Tr p`, or an error when the weight is below [`ZERO_WEIGHT`].
    pub fn normalized(&self) -> Result<PositiveOperator> {
        if self.trace_weight <= ZERO_WEIGHT {
            return Err(Error::NoCodeSupport {
                weight: self.trace_weight,
            });
        }
        Ok(PositiveOperator {
            matrix: self.matrix.unscale(self.trace_weight),
            trace_weight: 1.0,
        })
    }
}

/// `[[rho1, rho2], [rho2†, rho3]]` split along `H^A⊗H^B ⊕ K`.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockView {
    pub rho1: ComplexMatrix,
    pub rho2: ComplexMatrix,
    pub rho3: ComplexMatrix,
}

impl BlockView {
    pub fn of(d: &SpaceDecomposition, m: &ComplexMatrix) -> Self {
        let (n, k) = (d.dab(), d.dk());
        BlockView {
            rho1: m.view((0, 0), (n, n)).into_owned(),
            rho2: m.view((0, n), (n, k)).into_owned(),
            rho3: m.view((n, n), (k, k)).into_owned(),
        }
    }

    pub fn assemble(&self) -> ComplexMatrix {
        let n = self.rho1.nrows();
        let k = self.rho3.nrows();
        let mut out = linalg::zeros(n + k, n + k);
        out.view_mut((0, 0), (n, n)).copy_from(&self.rho1);
        out.view_mut((0, n), (n, k)).copy_from(&self.rho2);
        out.view_mut((n, 0), (k, n)).copy_from(&self.rho2.adjoint());
        out.view_mut((n, n), (k, k)).copy_from(&self.rho3);
        out
    }
}

/// `P^AB ρ P^AB`, embedded in `dS` dimensions.
pub fn project_ab(rho: &DensityOperator) -> PositiveOperator {
    let d = rho.decomposition;
    let b = rho.blocks();
    PositiveOperator {
        matrix: d.embed(&b.rho1, &linalg::zeros(d.dk(), d.dk())),
        trace_weight: rho.ab_weight(),
    }
}

/// `P_K ρ P_K`, embedded in `dS` dimensions.
pub fn project_k(rho: &DensityOperator) -> PositiveOperator {
    let d = rho.decomposition;
    let b = rho.blocks();
    PositiveOperator {
        matrix: d.embed(&linalg::zeros(d.dab(), d.dab()), &b.rho3),
        trace_weight: rho.k_weight(),
    }
}

/// The pinching `P^AB(·) + P_K(·)`: zeroes the coherences between the code
/// subspace and `K`.
pub fn project_blocks(rho: &DensityOperator) -> DensityOperator {
    let d = rho.decomposition;
    let b = rho.blocks();
    DensityOperator {
        decomposition: d,
        matrix: d.embed(&b.rho1, &b.rho3),
    }
}

/// Unnormalized reduced operator `Tr_B{P^AB ρ P^AB}` on `H^A`.
pub fn reduced_on_a(rho: &DensityOperator) -> PositiveOperator {
    let d = rho.decomposition;
    let rho1 = rho.matrix.view((0, 0), (d.dab(), d.dab())).into_owned();
    let matrix = linalg::partial_trace_b(&rho1, d.da(), d.db())
        .expect("code block has dA·dB rows by construction");
    let matrix = linalg::hermitize(&matrix).expect("square");
    PositiveOperator {
        trace_weight: linalg::trace(&matrix).re,
        matrix,
    }
}

/// Normalized reduced operator `ρ^A`; errors when the code weight is ≤ 1e-12.
pub fn normalized_reduced_on_a(rho: &DensityOperator) -> Result<PositiveOperator> {
    reduced_on_a(rho).normalized()
}

fn check_factor(m: &ComplexMatrix, d: usize, name: &'static str) -> Result<ComplexMatrix> {
    if m.shape() != (d, d) {
        return Err(Error::mismatch(
            format!("{name}: {d}x{d}"),
            format!("{}x{}", m.nrows(), m.ncols()),
        ));
    }
    check_density_matrix(m)
}

/// `(ρ^A ⊗ σ^B) ⊕ 0_K`.
pub fn make_perfect_state(
    d: SpaceDecomposition,
    rho_a: &ComplexMatrix,
    sigma_b: &ComplexMatrix,
) -> Result<DensityOperator> {
    let rho_a = check_factor(rho_a, d.da(), "rhoA")?;
    let sigma_b = check_factor(sigma_b, d.db(), "sigmaB")?;
    let ab = linalg::kron(&rho_a, &sigma_b);
    DensityOperator::new(d, d.embed(&ab, &linalg::zeros(d.dk(), d.dk())))
}

/// Parameters of an imperfect initialization.
#[derive(Debug, Clone)]
pub struct InitError<'a> {
    /// Weight `ε` leaked into `K`.
    pub leak: f64,
    /// State of the leaked part on `K`.
    pub kappa: &'a ComplexMatrix,
    /// Coherence `η` between the code block and `K`, relative to the largest
    /// value that keeps the state positive for the drawn direction.
    pub coherence: f64,
}

/// Imperfectly initialized state
/// `[[(1−ε) ρ^A⊗σ^B, η·√ρ1·W·√ρ3], [·†, ε κ]]` with `W` a random contraction
/// (`‖W‖ = 1`), which keeps the state positive for every `η ∈ [0, 1]`.
pub fn make_imperfect_state(
    d: SpaceDecomposition,
    rho_a: &ComplexMatrix,
    sigma_b: &ComplexMatrix,
    err: &InitError<'_>,
    rng: &mut Stream,
) -> Result<DensityOperator> {
    let eps = err.leak;
    let eta = err.coherence;
    if !(0.0..=1.0).contains(&eps) {
        return Err(Error::InvalidArgument {
            name: "leak",
            reason: format!("epsilon must lie in [0, 1], got {eps}"),
        });
    }
    if !(0.0..=1.0).contains(&eta) {
        return Err(Error::InvalidArgument {
            name: "coherence",
            reason: format!("eta must lie in [0, 1], got {eta}"),
        });
    }
    if eps > 0.0 && d.dk() == 0 {
        return Err(Error::InvalidArgument {
            name: "leak",
            reason: "a positive leak needs dK >= 1".into(),
        });
    }
    let rho_a = check_factor(rho_a, d.da(), "rhoA")?;
    let sigma_b = check_factor(sigma_b, d.db(), "sigmaB")?;
    let kappa = if d.dk() > 0 {
        check_factor(err.kappa, d.dk(), "kappa")?
    } else {
        linalg::zeros(0, 0)
    };

    let rho1 = linalg::kron(&rho_a, &sigma_b).scale(1.0 - eps);
    let rho3 = kappa.scale(eps);
    let mut rho2 = linalg::zeros(d.dab(), d.dk());
    if eta > 0.0 && eps > 0.0 && eps < 1.0 {
        let w = linalg::ginibre(d.dab(), d.dk(), rng);
        let w = w.unscale(linalg::spectral_norm(&w));
        let s1 = linalg::psd_sqrt(&rho1, linalg::PSD_CLIP)?;
        let s3 = linalg::psd_sqrt(&rho3, linalg::PSD_CLIP)?;
        rho2 = (s1 * w * s3).scale(eta);
    }
    let m = BlockView { rho1, rho2, rho3 }.assemble();
    let rho = DensityOperator::new(d, m);
    debug_assert!(rho.is_ok(), "contraction cross term keeps the state positive");
    rho
}

/// A random state with the same reduced operator on `H^A` as `rho`.
///
/// Each step applies one feasibility-preserving move to a previously generated
/// member: a unitary `I^A⊗U^B ⊕ U_K`, a channel `(id^A⊗E^B) ⊕ E_K` realized
/// as a block-diagonal Kraus union, or a convex mixture of two members. The
/// last member generated is returned.
pub fn random_state_same_reduced(
    rho: &DensityOperator,
    rng: &mut Stream,
    steps: usize,
) -> DensityOperator {
    let d = rho.decomposition;
    let mut members = vec![rho.clone()];
    for _ in 0..steps {
        let base = members[rng.int_in(0, members.len() - 1)].matrix.clone();
        let next = match rng.int_in(0, 2) {
            0 => {
                let u = d.embed(
                    &linalg::kron(&linalg::identity(d.da()), &linalg::haar_unitary(d.db(), rng)),
                    &linalg::haar_unitary(d.dk(), rng),
                );
                &u * base * u.adjoint()
            }
            1 => {
                let nb = rng.int_in(1, 3);
                let nk = rng.int_in(1, 3);
                let eb = linalg::random_kraus_set(d.db(), nb, rng);
                let ek = linalg::random_kraus_set(d.dk(), nk, rng);
                let b = BlockView::of(&d, &base);
                let ida = linalg::identity(d.da());
                let mut rho1 = linalg::zeros(d.dab(), d.dab());
                for e in &eb {
                    let k = linalg::kron(&ida, e);
                    rho1 += &k * &b.rho1 * k.adjoint();
                }
                let mut rho3 = linalg::zeros(d.dk(), d.dk());
                for e in &ek {
                    rho3 += e * &b.rho3 * e.adjoint();
                }
                d.embed(&rho1, &rho3)
            }
            _ => {
                let other = &members[rng.int_in(0, members.len() - 1)].matrix;
                let w = rng.uniform();
                base.scale(w) + other.scale(1.0 - w)
            }
        };
        let next = linalg::hermitize(&next).expect("square");
        members.push(DensityOperator {
            decomposition: d,
            matrix: next,
        });
    }
    members.pop().expect("seeded with rho")
}

/// Draw a random density matrix of random rank in `1..=d`.
pub fn random_density_any_rank(d: usize, rng: &mut Stream) -> ComplexMatrix {
    let rank = rng.int_in(1, d);
    linalg::random_density(d, rank, rng).expect("rank within 1..=d")
}

/// Random density operator on `H^S` (generic: coherences between all blocks).
pub fn random_state(d: SpaceDecomposition, rng: &mut Stream) -> DensityOperator {
    DensityOperator {
        decomposition: d,
        matrix: random_density_any_rank(d.ds(), rng),
    }
}

/// Random perfectly initialized state with full-rank factors.
pub fn random_perfect_state(d: SpaceDecomposition, rng: &mut Stream) -> DensityOperator {
    let rho_a = linalg::random_density(d.da(), d.da(), rng).expect("full rank");
    let sigma_b = random_density_any_rank(d.db(), rng);
    make_perfect_state(d, &rho_a, &sigma_b).expect("valid factors")
}

/// Random imperfect state with `ε, η` uniform in `[0, 1)` and independent
/// factors. Requires `dK ≥ 1`.
pub fn random_imperfect_state(d: SpaceDecomposition, rng: &mut Stream) -> DensityOperator {
    let rho_a = linalg::random_density(d.da(), d.da(), rng).expect("full rank");
    random_imperfect_with(d, &rho_a, rng.uniform(), rng)
}

/// Imperfect version of a given A-state with leak `eps` and random
/// `σ^B`, `κ`, `η`.
pub fn random_imperfect_with(
    d: SpaceDecomposition,
    rho_a: &ComplexMatrix,
    eps: f64,
    rng: &mut Stream,
) -> DensityOperator {
    let sigma_b = random_density_any_rank(d.db(), rng);
    let kappa = random_density_any_rank(d.dk().max(1), rng);
    let coherence = rng.uniform();
    let err = InitError {
        leak: eps,
        kappa: &kappa,
        coherence,
    };
    make_imperfect_state(d, rho_a, &sigma_b, &err, rng).expect("valid imperfect state")
}
