//! Uhlmann fidelity, its extension to positive operators, and the fidelity
//! `F^A` between the information encoded in the subsystem `H^A` of two states.
//!
//! `F^A` is available in three forms that must agree:
//! the closed form [`subsystem_fidelity`], the fidelity of the
//! [`canonical_maximizers`], and the minimum overlap over subsystem
//! measurements, achieved by [`optimal_subsystem_povm`].

use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{self, ComplexMatrix, PSD_CLIP};
use crate::rng::Stream;
use crate::space::{
    self, DensityOperator, PositiveOperator, SpaceDecomposition, POSITIVITY_TOL, ZERO_WEIGHT,
};

pub const POVM_SUM_TOL: f64 = 1e-9;

/// `Tr|√a·√b|` for PSD matrices of equal size (no normalization required).
///
/// Evaluated as the nuclear norm of `√a·√b`; its singular values are the
/// square roots of the eigenvalues of `√a·b·√a`, without a second square root
/// amplifying rounding noise near zero.
fn fidelity_kernel(a: &ComplexMatrix, b: &ComplexMatrix) -> Result<f64> {
    if a.shape() != b.shape() {
        return Err(Error::mismatch(
            format!("{}x{}", a.nrows(), a.ncols()),
            format!("{}x{}", b.nrows(), b.ncols()),
        ));
    }
    let sa = linalg::psd_sqrt(a, PSD_CLIP)?;
    let sb = linalg::psd_sqrt(b, PSD_CLIP)?;
    Ok(linalg::nuclear_norm(&(sa * sb)))
}

/// `F(τ, υ) = Tr√(√τ υ √τ)`.
pub fn uhlmann_fidelity(tau: &DensityOperator, upsilon: &DensityOperator) -> Result<f64> {
    if tau.decomposition() != upsilon.decomposition() {
        return Err(decomposition_mismatch(tau, upsilon));
    }
    fidelity_kernel(tau.matrix(), upsilon.matrix())
}

/// Uhlmann fidelity of two density matrices given as raw matrices.
pub fn fidelity_of_matrices(tau: &ComplexMatrix, upsilon: &ComplexMatrix) -> Result<f64> {
    let t = space::check_density_matrix(tau)?;
    let u = space::check_density_matrix(upsilon)?;
    fidelity_kernel(&t, &u)
}

/// `F̌(p, q) = Tr√(√p q √p)` on unnormalized positive operators.
pub fn fcheck(p: &PositiveOperator, q: &PositiveOperator) -> Result<f64> {
    fidelity_kernel(p.matrix(), q.matrix())
}

fn decomposition_mismatch(a: &DensityOperator, b: &DensityOperator) -> Error {
    Error::mismatch(
        format!("{:?}", a.decomposition().dims()),
        format!("{:?}", b.decomposition().dims()),
    )
}

/// The two terms of the closed form and their sum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SubsystemFidelity {
    #[serde(rename = "FA")]
    pub value: f64,
    #[serde(rename = "fA_term")]
    pub code_term: f64,
    #[serde(rename = "K_term")]
    pub k_term: f64,
}

/// Closed form `F^A = √(w_AB(τ) w_AB(υ))·F(τ^A, υ^A) + √(w_K(τ) w_K(υ))`.
///
/// A term whose weights fall below 1e-12 on either side contributes zero.
pub fn subsystem_fidelity_terms(
    tau: &DensityOperator,
    upsilon: &DensityOperator,
) -> Result<SubsystemFidelity> {
    if tau.decomposition() != upsilon.decomposition() {
        return Err(decomposition_mismatch(tau, upsilon));
    }
    let (wt, wu) = (tau.ab_weight(), upsilon.ab_weight());
    let code_term = if wt > ZERO_WEIGHT && wu > ZERO_WEIGHT {
        let ta = space::normalized_reduced_on_a(tau)?;
        let ua = space::normalized_reduced_on_a(upsilon)?;
        (wt * wu).sqrt() * fidelity_kernel(ta.matrix(), ua.matrix())?
    } else {
        0.0
    };
    let (kt, ku) = (tau.k_weight(), upsilon.k_weight());
    let k_term = if kt > ZERO_WEIGHT && ku > ZERO_WEIGHT {
        (kt * ku).sqrt()
    } else {
        0.0
    };
    Ok(SubsystemFidelity {
        value: code_term + k_term,
        code_term,
        k_term,
    })
}

pub fn subsystem_fidelity(tau: &DensityOperator, upsilon: &DensityOperator) -> Result<f64> {
    Ok(subsystem_fidelity_terms(tau, upsilon)?.value)
}

/// `Tr_B{P^AB τ}⊗|0^B⟩⟨0^B| + Tr{P_K τ}|0_K⟩⟨0_K|`.
pub fn canonical_state(tau: &DensityOperator) -> DensityOperator {
    let d = tau.decomposition();
    let reduced = space::reduced_on_a(tau);
    let mut ref_b = linalg::zeros(d.db(), d.db());
    ref_b[(0, 0)] = linalg::c(1.0, 0.0);
    let ab = linalg::kron(reduced.matrix(), &ref_b);
    let mut k = linalg::zeros(d.dk(), d.dk());
    if d.dk() > 0 {
        k[(0, 0)] = linalg::c(tau.k_weight(), 0.0);
    }
    let m = d.embed(&ab, &k);
    DensityOperator::new(d, m).expect("reduced operator and K weight of a state form a state")
}

/// States achieving the maximum in the definition of `F^A`.
pub fn canonical_maximizers(
    tau: &DensityOperator,
    upsilon: &DensityOperator,
) -> Result<(DensityOperator, DensityOperator)> {
    if tau.decomposition() != upsilon.decomposition() {
        return Err(decomposition_mismatch(tau, upsilon));
    }
    Ok((canonical_state(tau), canonical_state(upsilon)))
}

/// Measurement `{P_K, M_i^A⊗I^B}` (the `P_K` outcome only when flagged).
#[derive(Debug, Clone, PartialEq)]
pub struct SubsystemPovm {
    decomposition: SpaceDecomposition,
    elements_on_a: Vec<ComplexMatrix>,
    include_k_outcome: bool,
}

impl SubsystemPovm {
    pub fn new(
        decomposition: SpaceDecomposition,
        elements_on_a: Vec<ComplexMatrix>,
        include_k_outcome: bool,
    ) -> Result<Self> {
        let da = decomposition.da();
        let mut sum = linalg::zeros(da, da);
        for m in &elements_on_a {
            if m.shape() != (da, da) {
                return Err(Error::mismatch(
                    format!("{da}x{da} POVM element"),
                    format!("{}x{}", m.nrows(), m.ncols()),
                ));
            }
            if linalg::hermiticity_residual(m) > POVM_SUM_TOL {
                return Err(Error::Invariant {
                    name: "povm_element_hermitian",
                    residual: linalg::hermiticity_residual(m),
                });
            }
            let min = linalg::min_eigenvalue(m)?;
            if min < -POSITIVITY_TOL {
                return Err(Error::Invariant {
                    name: "povm_element_positive",
                    residual: -min,
                });
            }
            sum += m;
        }
        let residual = linalg::frobenius(&(sum - linalg::identity(da)));
        if residual > POVM_SUM_TOL {
            return Err(Error::Invariant {
                name: "povm_sums_to_identity",
                residual,
            });
        }
        Ok(SubsystemPovm {
            decomposition,
            elements_on_a,
            include_k_outcome,
        })
    }

    /// `{P^AB, P_K}` (the coarsest measurement of the allowed form).
    pub fn trivial(decomposition: SpaceDecomposition) -> Self {
        SubsystemPovm {
            decomposition,
            elements_on_a: vec![linalg::identity(decomposition.da())],
            include_k_outcome: true,
        }
    }

    pub fn decomposition(&self) -> SpaceDecomposition {
        self.decomposition
    }

    pub fn elements_on_a(&self) -> &[ComplexMatrix] {
        &self.elements_on_a
    }

    pub fn includes_k_outcome(&self) -> bool {
        self.include_k_outcome
    }

    /// Elements on `H^S`: `P_K` first when flagged, then `M_i^A⊗I^B ⊕ 0`.
    pub fn global_elements(&self) -> Vec<ComplexMatrix> {
        let d = self.decomposition;
        let zk = linalg::zeros(d.dk(), d.dk());
        let ib = linalg::identity(d.db());
        let mut out = Vec::with_capacity(self.elements_on_a.len() + 1);
        if self.include_k_outcome {
            out.push(d.projector_k());
        }
        out.extend(
            self.elements_on_a
                .iter()
                .map(|m| d.embed(&linalg::kron(m, &ib), &zk)),
        );
        out
    }
}

/// `Σ_i √(Tr M_i a)·√(Tr M_i b)` for arbitrary measurement elements.
pub fn measurement_overlap(elements: &[ComplexMatrix], a: &ComplexMatrix, b: &ComplexMatrix) -> f64 {
    elements
        .iter()
        .map(|m| {
            let pa = linalg::trace_product_re(m, a).max(0.0);
            let pb = linalg::trace_product_re(m, b).max(0.0);
            (pa * pb).sqrt()
        })
        .sum()
}

/// Overlap of the outcome distributions of `τ` and `υ` under `povm`.
pub fn povm_overlap(povm: &SubsystemPovm, tau: &DensityOperator, upsilon: &DensityOperator) -> Result<f64> {
    if tau.decomposition() != povm.decomposition || upsilon.decomposition() != povm.decomposition {
        return Err(decomposition_mismatch(tau, upsilon));
    }
    Ok(measurement_overlap(
        &povm.global_elements(),
        tau.matrix(),
        upsilon.matrix(),
    ))
}

/// Rank-one projective measurement minimizing the overlap between the
/// outcome statistics of two PSD operators.
///
/// The projectors are onto eigenvectors of the geometric-mean operator
/// `a^{-1/2}·√(√a·b·√a)·a^{-1/2}` on the support of `a`, completed by
/// eigenvectors spanning the kernel of `a`.
pub fn optimal_measurement(a: &ComplexMatrix, b: &ComplexMatrix) -> Result<Vec<ComplexMatrix>> {
    let d = linalg::ensure_square(a)?;
    if b.shape() != a.shape() {
        return Err(Error::mismatch(d, b.nrows()));
    }
    let eig = linalg::eigh(a)?;
    if eig.min() < -PSD_CLIP {
        return Err(Error::NotPositive {
            min_eigenvalue: eig.min(),
        });
    }
    let floor = linalg::RANK_FLOOR * eig.spectral_radius();
    let (support, kernel): (Vec<usize>, Vec<usize>) =
        (0..d).partition(|&j| eig.eigenvalues[j] > floor);

    let mut elements: Vec<ComplexMatrix> = kernel
        .iter()
        .map(|&j| {
            let v = eig.eigenvectors.column(j);
            v * v.adjoint()
        })
        .collect();
    if support.is_empty() {
        return Ok(elements);
    }

    // Restrict to the support, where `a` is diagonal and invertible.
    let basis = eig.eigenvectors.select_columns(&support);
    let r = support.len();
    let sqrt_a = ComplexMatrix::from_fn(r, r, |i, j| {
        if i == j {
            linalg::c(eig.eigenvalues[support[i]].sqrt(), 0.0)
        } else {
            linalg::c(0.0, 0.0)
        }
    });
    let inv_sqrt_a = ComplexMatrix::from_fn(r, r, |i, j| {
        if i == j {
            linalg::c(1.0 / eig.eigenvalues[support[i]].sqrt(), 0.0)
        } else {
            linalg::c(0.0, 0.0)
        }
    });
    let b_s = basis.adjoint() * b * &basis;
    let middle = linalg::psd_sqrt(&(&sqrt_a * b_s * &sqrt_a), PSD_CLIP)?;
    let geometric = &inv_sqrt_a * middle * &inv_sqrt_a;
    let g = linalg::eigh(&geometric)?;
    let vectors = &basis * &g.eigenvectors;
    for j in 0..r {
        let v = vectors.column(j);
        elements.push(v * v.adjoint());
    }
    Ok(elements)
}

/// Optimal measurement of the allowed form for `F^A(τ, υ)`.
pub fn optimal_subsystem_povm(tau: &DensityOperator, upsilon: &DensityOperator) -> Result<SubsystemPovm> {
    if tau.decomposition() != upsilon.decomposition() {
        return Err(decomposition_mismatch(tau, upsilon));
    }
    let ta = space::normalized_reduced_on_a(tau)?;
    let ua = space::normalized_reduced_on_a(upsilon)?;
    let elements = optimal_measurement(ta.matrix(), ua.matrix())?;
    SubsystemPovm::new(tau.decomposition(), elements, true)
}

/// Random measurement of the allowed form with `outcomes` elements on `H^A`.
pub fn random_subsystem_povm(d: SpaceDecomposition, outcomes: usize, rng: &mut Stream) -> SubsystemPovm {
    let elements = linalg::random_povm(d.da(), outcomes, rng)
        .into_iter()
        .map(|m| linalg::hermitize(&m).expect("square"))
        .collect();
    SubsystemPovm {
        decomposition: d,
        elements_on_a: elements,
        include_k_outcome: true,
    }
}

/// Number of feasibility-preserving moves per sample in the definition oracle.
pub const ORACLE_STEPS: usize = 4;

/// Largest `F(τ', υ')` over sampled states sharing the reduced operators of
/// `τ` and `υ`.
///
/// A sampled lower bound on `F^A` that exists to falsify the closed form; it
/// never exceeds it. With `inject_canonical` the canonical maximizers are
/// added to the sample set and the bound becomes tight.
pub fn definition_oracle_bound(
    tau: &DensityOperator,
    upsilon: &DensityOperator,
    samples: usize,
    inject_canonical: bool,
    rng: &mut Stream,
) -> Result<f64> {
    let mut best = uhlmann_fidelity(tau, upsilon)?;
    for _ in 0..samples {
        let t = space::random_state_same_reduced(tau, rng, ORACLE_STEPS);
        let u = space::random_state_same_reduced(upsilon, rng, ORACLE_STEPS);
        best = best.max(uhlmann_fidelity(&t, &u)?);
    }
    if inject_canonical {
        let (ts, us) = canonical_maximizers(tau, upsilon)?;
        best = best.max(uhlmann_fidelity(&ts, &us)?);
    }
    Ok(best)
}

/// Fidelities this close to 1 are rounding noise of an exact 1 and map to a
/// zero angle; `arccos` would otherwise turn `1 − 1e-16` into `1.5e-8`.
pub const ANGLE_SNAP: f64 = 16.0 * f64::EPSILON;

fn arccos_clamped(f: f64) -> f64 {
    if f >= 1.0 - ANGLE_SNAP {
        return 0.0;
    }
    f.clamp(0.0, 1.0).acos()
}

/// Angle `arccos F(τ, υ)` between two states.
pub fn angle(tau: &DensityOperator, upsilon: &DensityOperator) -> Result<f64> {
    Ok(arccos_clamped(uhlmann_fidelity(tau, upsilon)?))
}

/// Angle `Λ^A = arccos F^A(τ, υ)` between the encoded information.
pub fn angle_subsystem(tau: &DensityOperator, upsilon: &DensityOperator) -> Result<f64> {
    Ok(arccos_clamped(subsystem_fidelity(tau, upsilon)?))
}
