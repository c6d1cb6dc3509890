//! Seeded randomized verification suites.
//!
//! Every suite runs its trials in parallel. Trial `k` draws from
//! `Stream::for_task(seed, k)`, results are collected in trial order, and all
//! reductions run sequentially afterwards, so a summary depends only on the
//! seed and the configuration. Failures are recorded, never thrown.

use std::collections::BTreeMap;
use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::Serialize;

use crate::channel::{self, KrausChannel};
use crate::error::{Error, Result};
use crate::fidelity;
use crate::linalg::{self, ComplexMatrix, MatrixJson};
use crate::rng::Stream;
use crate::space::{self, DensityOperator, SpaceDecomposition};

/// Tolerances for every pass/fail decision. Echoed in each summary.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Tolerances {
    /// Allowed negative slack of an inequality.
    pub slack: f64,
    /// Frobenius deviation allowed in operator identities.
    pub identity: f64,
    /// Deviation allowed in `F^A(τ,υ) = F^A(υ,τ)`.
    pub symmetry: f64,
    /// Deviation allowed in scalar equalities between fidelity evaluations.
    pub equality: f64,
    /// Deviation allowed between a fidelity and its optimal-measurement overlap.
    pub operational: f64,
    /// Minimum change counted as a strict increase or decrease.
    pub strict: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            slack: 1e-9,
            identity: 1e-10,
            symmetry: 1e-12,
            equality: 1e-9,
            operational: 1e-7,
            strict: 1e-6,
        }
    }
}

impl Tolerances {
    pub const NAMES: [&'static str; 6] = ["slack", "identity", "symmetry", "equality", "operational", "strict"];

    /// Override one tolerance by name.
    pub fn set(&mut self, name: &str, value: f64) -> Result<()> {
        if !(value.is_finite() && value >= 0.0) {
            return Err(Error::InvalidArgument {
                name: "tol",
                reason: format!("{name} must be a finite non-negative number, got {value}"),
            });
        }
        let slot = match name {
            "slack" => &mut self.slack,
            "identity" => &mut self.identity,
            "symmetry" => &mut self.symmetry,
            "equality" => &mut self.equality,
            "operational" => &mut self.operational,
            "strict" => &mut self.strict,
            _ => {
                return Err(Error::InvalidArgument {
                    name: "tol",
                    reason: format!("unknown tolerance {name:?}; expected one of {:?}", Self::NAMES),
                })
            }
        };
        *slot = value;
        Ok(())
    }
}

/// One assertion inside a trial. Passes iff `margin ≥ −tol`; equalities
/// record the negated deviation as their margin.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckResult {
    pub name: &'static str,
    pub margin: f64,
    pub tol: f64,
}

impl CheckResult {
    pub fn at_least(name: &'static str, slack: f64, tol: f64) -> Self {
        CheckResult { name, margin: slack, tol }
    }

    pub fn within(name: &'static str, deviation: f64, tol: f64) -> Self {
        CheckResult {
            name,
            margin: -deviation,
            tol,
        }
    }

    pub fn holds(name: &'static str, ok: bool) -> Self {
        CheckResult {
            name,
            margin: if ok { 0.0 } else { -1.0 },
            tol: 0.0,
        }
    }

    pub fn pass(&self) -> bool {
        self.margin >= -self.tol
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct TrialReport {
    pub trial_index: usize,
    pub seed: u64,
    pub dims: [usize; 3],
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_kraus: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub leak_strength: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fa_before: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fa_after: Option<f64>,
    /// `fa_after − fa_before`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub slack: Option<f64>,
    /// All checks of the trial passed.
    pub pass: bool,
    pub checks: Vec<CheckResult>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    /// Every matrix needed to replay a failed trial.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bundle: Option<BTreeMap<String, MatrixJson>>,
}

impl TrialReport {
    fn new(trial_index: usize, seed: u64, dims: SpaceDecomposition) -> Self {
        TrialReport {
            trial_index,
            seed,
            dims: dims.dims(),
            pass: true,
            ..Default::default()
        }
    }

    fn record_fa(&mut self, before: f64, after: f64) {
        self.fa_before = Some(before);
        self.fa_after = Some(after);
        self.slack = Some(after - before);
    }

    fn finish(mut self, bundle: impl FnOnce() -> Vec<(String, ComplexMatrix)>) -> Self {
        self.pass = self.error.is_none() && self.checks.iter().all(CheckResult::pass);
        if !self.pass {
            self.bundle = Some(bundle().iter().map(|(k, m)| (k.clone(), MatrixJson::from(m))).collect());
        }
        self
    }

    fn failed(mut self, err: Error) -> Self {
        self.error = Some(err.to_string());
        self.pass = false;
        self
    }
}

/// Per-check failure census.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct CheckCensus {
    pub evaluated: usize,
    pub failures: usize,
    /// Smallest margin seen (the most negative slack, or minus the largest
    /// deviation).
    pub worst_margin: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SuiteSummary {
    pub suite: String,
    pub seed: u64,
    pub dims: [usize; 3],
    pub trials: usize,
    pub failures: usize,
    /// Smallest `fa_after − fa_before` over trials that record it.
    pub min_slack: Option<f64>,
    pub parameters: BTreeMap<String, f64>,
    pub tolerances: Tolerances,
    pub checks: BTreeMap<String, CheckCensus>,
    pub counters: BTreeMap<String, usize>,
    pub failed_trials: Vec<TrialReport>,
    #[serde(skip)]
    pub wall_time: Duration,
}

impl SuiteSummary {
    pub fn passed(&self) -> bool {
        self.failures == 0
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("summary serializes")
    }
}

#[derive(Debug, Clone)]
pub struct SuiteRun {
    pub summary: SuiteSummary,
    pub reports: Vec<TrialReport>,
}

/// Shared suite configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct SuiteConfig {
    pub dims: SpaceDecomposition,
    pub trials: usize,
    pub seed: u64,
    /// Kraus operators on `H^B` per structured channel.
    pub n_kraus: usize,
    pub leak_strength: f64,
    /// Random measurements or oracle samples per trial where a suite uses them.
    pub samples: usize,
    pub tolerances: Tolerances,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        SuiteConfig {
            dims: SpaceDecomposition::new(2, 2, 2).expect("valid"),
            trials: 1000,
            seed: 0,
            n_kraus: 3,
            leak_strength: 1.0,
            samples: 20,
            tolerances: Tolerances::default(),
        }
    }
}

impl SuiteConfig {
    pub fn new(dims: SpaceDecomposition, trials: usize, seed: u64) -> Self {
        SuiteConfig {
            dims,
            trials,
            seed,
            ..Default::default()
        }
    }

    fn parameters(&self, keys: &[&str]) -> BTreeMap<String, f64> {
        let mut out = BTreeMap::new();
        for &k in keys {
            let v = match k {
                "n_kraus" => self.n_kraus as f64,
                "leak_strength" => self.leak_strength,
                "samples" => self.samples as f64,
                _ => continue,
            };
            out.insert(k.to_string(), v);
        }
        out
    }
}

fn run_trials<F>(seed: u64, trials: usize, f: F) -> Vec<TrialReport>
where
    F: Fn(usize, &mut Stream) -> TrialReport + Sync,
{
    (0..trials)
        .into_par_iter()
        .map(|k| {
            let mut rng = Stream::for_task(seed, k as u64);
            f(k, &mut rng)
        })
        .collect()
}

fn summarize(
    suite: &str,
    cfg: &SuiteConfig,
    parameters: BTreeMap<String, f64>,
    reports: &[TrialReport],
    started: Instant,
) -> SuiteSummary {
    let mut checks: BTreeMap<String, CheckCensus> = BTreeMap::new();
    for r in reports {
        for c in &r.checks {
            let census = checks.entry(c.name.to_string()).or_default();
            census.evaluated += 1;
            census.failures += usize::from(!c.pass());
            census.worst_margin = Some(census.worst_margin.map_or(c.margin, |w| w.min(c.margin)));
        }
    }
    let min_slack = reports
        .iter()
        .filter_map(|r| r.slack)
        .fold(None, |acc: Option<f64>, s| Some(acc.map_or(s, |a| a.min(s))));
    SuiteSummary {
        suite: suite.to_string(),
        seed: cfg.seed,
        dims: cfg.dims.dims(),
        trials: reports.len(),
        failures: reports.iter().filter(|r| !r.pass).count(),
        min_slack,
        parameters,
        tolerances: cfg.tolerances,
        checks,
        counters: BTreeMap::new(),
        failed_trials: reports.iter().filter(|r| !r.pass).cloned().collect(),
        wall_time: started.elapsed(),
    }
}

/// Sum by recursive halving; keeps rounding error logarithmic in the length.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    match xs.len() {
        0 => 0.0,
        1 => xs[0],
        n => pairwise_sum(&xs[..n / 2]) + pairwise_sum(&xs[n / 2..]),
    }
}

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    pairwise_sum(xs) / xs.len() as f64
}

fn require_k(dims: SpaceDecomposition, suite: &str) -> Result<()> {
    if dims.dk() == 0 {
        return Err(Error::InvalidArgument {
            name: "dims",
            reason: format!("{suite} needs dK >= 1; without K the leak term vanishes"),
        });
    }
    Ok(())
}

fn kraus_bundle(prefix: &str, ch: &KrausChannel) -> Vec<(String, ComplexMatrix)> {
    ch.kraus()
        .iter()
        .enumerate()
        .map(|(i, e)| (format!("{prefix}{i}"), e.clone()))
        .collect()
}

fn frob_dist(a: &ComplexMatrix, b: &ComplexMatrix) -> f64 {
    linalg::frobenius(&(a - b))
}

/// A random state of one of three kinds: generic, perfect, or imperfect
/// (the last only when `dK ≥ 1`).
pub fn random_any_state(dims: SpaceDecomposition, rng: &mut Stream) -> DensityOperator {
    let kinds = if dims.dk() > 0 { 2 } else { 1 };
    match rng.int_in(0, kinds) {
        0 => space::random_state(dims, rng),
        1 => space::random_perfect_state(dims, rng),
        _ => space::random_imperfect_state(dims, rng),
    }
}

/// Outcome of one monotonicity trial under a structured channel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Theorem3Outcome {
    pub fa_before: f64,
    pub fa_after: f64,
    /// `F̌²(R, R̃+L) − F̌²(R, R̃) − F̌²(R, L)`.
    pub chain_margin: f64,
    /// Frobenius deviation between the reduced output and `R̃ + L`.
    pub update_deviation: f64,
}

/// Evaluate `F^A(ρ, E(ρ̃))` against `F^A(ρ, ρ̃)` and the concavity chain for
/// the reduced operators `R`, `R̃` and the leak term `L`.
pub fn theorem3_trial(
    spec: &channel::StructuredChannelSpec,
    rho: &DensityOperator,
    rho_tilde: &DensityOperator,
) -> Result<Theorem3Outcome> {
    let ch = channel::assemble(spec);
    let out = ch.apply(rho_tilde)?;
    let fa_before = fidelity::subsystem_fidelity(rho, rho_tilde)?;
    let fa_after = fidelity::subsystem_fidelity(rho, &out)?;
    let r = space::reduced_on_a(rho);
    let rt = space::reduced_on_a(rho_tilde);
    let leak = channel::leak_term(spec, rho_tilde)?;
    let rt_leak = rt.plus(&leak)?;
    let chain_margin = fidelity::fcheck(&r, &rt_leak)?.powi(2)
        - fidelity::fcheck(&r, &rt)?.powi(2)
        - fidelity::fcheck(&r, &leak)?.powi(2);
    let update_deviation = frob_dist(space::reduced_on_a(&out).matrix(), rt_leak.matrix());
    Ok(Theorem3Outcome {
        fa_before,
        fa_after,
        chain_margin,
        update_deviation,
    })
}

/// Monotonicity of `F^A` under structured channels acting on imperfectly
/// initialized states, with the intermediate concavity chain.
///
/// Even trials compare against an imperfect preparation of the same A-state;
/// odd trials use an unrelated imperfect state.
pub fn run_theorem3(cfg: &SuiteConfig) -> Result<SuiteRun> {
    let started = Instant::now();
    let dims = cfg.dims;
    require_k(dims, "theorem3")?;
    let tol = cfg.tolerances;
    let reports = run_trials(cfg.seed, cfg.trials, |k, rng| {
        let mut report = TrialReport::new(k, cfg.seed, dims);
        report.n_kraus = Some(cfg.n_kraus);
        report.leak_strength = Some(cfg.leak_strength);
        let spec = match channel::random_structured(dims, cfg.n_kraus, cfg.leak_strength, rng) {
            Ok(s) => s,
            Err(e) => return report.failed(e),
        };
        let rho = space::random_perfect_state(dims, rng);
        let rho_tilde = if k % 2 == 0 {
            let rho_a = space::normalized_reduced_on_a(&rho).expect("perfect state has code weight 1");
            space::random_imperfect_with(dims, rho_a.matrix(), rng.uniform(), rng)
        } else {
            space::random_imperfect_state(dims, rng)
        };
        let outcome = match theorem3_trial(&spec, &rho, &rho_tilde) {
            Ok(o) => o,
            Err(e) => return report.failed(e),
        };
        report.record_fa(outcome.fa_before, outcome.fa_after);
        let slack = outcome.fa_after - outcome.fa_before;
        report.checks.push(CheckResult::at_least("monotonicity", slack, tol.slack));
        report.checks.push(CheckResult::at_least("concavity_chain", outcome.chain_margin, tol.slack));
        report
            .checks
            .push(CheckResult::within("leak_update", outcome.update_deviation, tol.identity));
        if cfg.leak_strength == 0.0 {
            report.checks.push(CheckResult::within("zero_leak_invariance", slack.abs(), tol.identity));
        }
        let ch = channel::assemble(&spec);
        report.finish(|| {
            let mut b = vec![("rho".into(), rho.matrix().clone()), ("rho_tilde".into(), rho_tilde.matrix().clone())];
            b.extend(kraus_bundle("kraus", &ch));
            b
        })
    });
    let mut summary = summarize("theorem3", cfg, cfg.parameters(&["n_kraus", "leak_strength"]), &reports, started);
    let chain_ok = |r: &TrialReport| r.checks.iter().find(|c| c.name == "concavity_chain").map(CheckResult::pass);
    let mono_ok = |r: &TrialReport| r.checks.iter().find(|c| c.name == "monotonicity").map(CheckResult::pass);
    let disagreements = reports
        .iter()
        .filter(|r| matches!((chain_ok(r), mono_ok(r)), (Some(true), Some(false))))
        .count();
    let strict = reports
        .iter()
        .filter(|r| r.slack.is_some_and(|s| s > 1e-4))
        .count();
    summary.counters.insert("chain_disagreements".into(), disagreements);
    summary.counters.insert("strict_increases".into(), strict);
    summary.failures += disagreements;
    Ok(SuiteRun { summary, reports })
}

/// Monotonicity of `F^A` under computation channels implementing a random
/// `C^A` with 1–3 Kraus operators.
pub fn run_theorem4(cfg: &SuiteConfig) -> Result<SuiteRun> {
    let started = Instant::now();
    let dims = cfg.dims;
    require_k(dims, "theorem4")?;
    let tol = cfg.tolerances;
    let reports = run_trials(cfg.seed, cfg.trials, |k, rng| {
        let mut report = TrialReport::new(k, cfg.seed, dims);
        report.n_kraus = Some(cfg.n_kraus);
        report.leak_strength = Some(cfg.leak_strength);
        let fa = linalg::random_kraus_set(dims.da(), rng.int_in(1, 3), rng);
        let comp = match channel::random_computation(dims, fa.clone(), cfg.n_kraus, cfg.leak_strength, rng) {
            Ok(c) => c,
            Err(e) => return report.failed(e),
        };
        let ch = channel::assemble_computation(&comp);
        let rho = space::random_perfect_state(dims, rng);
        let rho_tilde = if k % 2 == 0 {
            let rho_a = space::normalized_reduced_on_a(&rho).expect("perfect state has code weight 1");
            space::random_imperfect_with(dims, rho_a.matrix(), rng.uniform(), rng)
        } else {
            space::random_imperfect_state(dims, rng)
        };
        let eval = || -> Result<(f64, f64, Vec<CheckResult>)> {
            let before = fidelity::subsystem_fidelity(&rho, &rho_tilde)?;
            let out = ch.apply(&rho)?;
            let out_tilde = ch.apply(&rho_tilde)?;
            let after = fidelity::subsystem_fidelity(&out, &out_tilde)?;
            let mapped = channel::apply_on_a(&fa, space::reduced_on_a(&rho_tilde).matrix());
            let err_term = space::reduced_on_a(&out_tilde).matrix() - &mapped;
            let leak = comp.leak_term(&rho_tilde)?;
            let perfect_dev = frob_dist(
                space::reduced_on_a(&out).matrix(),
                &channel::apply_on_a(&fa, space::reduced_on_a(&rho).matrix()),
            );
            Ok((before, after, vec![
                CheckResult::at_least("monotonicity", after - before, tol.slack),
                CheckResult::within("perfect_update", perfect_dev, tol.identity),
                CheckResult::within("error_term_is_leak", frob_dist(&err_term, leak.matrix()), tol.identity),
                CheckResult::at_least("error_term_psd", linalg::min_eigenvalue(&err_term)?, tol.identity),
            ]))
        };
        match eval() {
            Ok((before, after, checks)) => {
                report.record_fa(before, after);
                report.checks = checks;
            }
            Err(e) => return report.failed(e),
        }
        report.finish(|| {
            let mut b = vec![("rho".into(), rho.matrix().clone()), ("rho_tilde".into(), rho_tilde.matrix().clone())];
            b.extend(fa.iter().enumerate().map(|(j, f)| (format!("fa{j}"), f.clone())));
            b.extend(kraus_bundle("kraus", &ch));
            b
        })
    });
    let summary = summarize("theorem4", cfg, cfg.parameters(&["n_kraus", "leak_strength"]), &reports, started);
    Ok(SuiteRun { summary, reports })
}

/// Reduced-operator evolution under structured channels: invariance for
/// perfect states, the leak update for imperfect states, and invariance for
/// arbitrary states under channels without `D` blocks.
pub fn run_evolution_identities(cfg: &SuiteConfig) -> Result<SuiteRun> {
    let started = Instant::now();
    let dims = cfg.dims;
    let tol = cfg.tolerances;
    let reports = run_trials(cfg.seed, cfg.trials, |k, rng| {
        let mut report = TrialReport::new(k, cfg.seed, dims);
        report.n_kraus = Some(cfg.n_kraus);
        report.leak_strength = Some(cfg.leak_strength);
        let spec = channel::random_structured(dims, cfg.n_kraus, cfg.leak_strength, rng);
        let free = channel::random_initialization_free(dims, cfg.n_kraus, rng);
        let (spec, free) = match (spec, free) {
            (Ok(s), Ok(f)) => (s, f),
            (Err(e), _) | (_, Err(e)) => return report.failed(e),
        };
        let ch = channel::assemble(&spec);
        let ch_free = channel::assemble(&free);
        let perfect = space::random_perfect_state(dims, rng);
        let imperfect = (dims.dk() > 0).then(|| space::random_imperfect_state(dims, rng));
        let arbitrary = space::random_state(dims, rng);
        let eval = || -> Result<Vec<CheckResult>> {
            let mut checks = Vec::with_capacity(3);
            let out = ch.apply(&perfect)?;
            checks.push(CheckResult::within(
                "perfect_invariance",
                frob_dist(space::reduced_on_a(&out).matrix(), space::reduced_on_a(&perfect).matrix()),
                tol.identity,
            ));
            if let Some(rho) = &imperfect {
                let (lhs, rhs) = channel::reduced_update(&spec, rho)?;
                checks.push(CheckResult::within("leak_update", frob_dist(&lhs, &rhs), tol.identity));
            }
            let out = ch_free.apply(&arbitrary)?;
            checks.push(CheckResult::within(
                "initialization_free_invariance",
                frob_dist(space::reduced_on_a(&out).matrix(), space::reduced_on_a(&arbitrary).matrix()),
                tol.identity,
            ));
            Ok(checks)
        };
        match eval() {
            Ok(checks) => report.checks = checks,
            Err(e) => return report.failed(e),
        }
        report.finish(|| {
            let mut b = vec![
                ("perfect".into(), perfect.matrix().clone()),
                ("arbitrary".into(), arbitrary.matrix().clone()),
            ];
            if let Some(rho) = &imperfect {
                b.push(("imperfect".into(), rho.matrix().clone()));
            }
            b.extend(kraus_bundle("kraus", &ch));
            b.extend(kraus_bundle("kraus_free", &ch_free));
            b
        })
    });
    let summary = summarize("identities", cfg, cfg.parameters(&["n_kraus", "leak_strength"]), &reports, started);
    Ok(SuiteRun { summary, reports })
}

fn random_weights(n: usize, rng: &mut Stream) -> Vec<f64> {
    let raw: Vec<f64> = (0..n).map(|_| -(1.0 - rng.uniform()).ln()).collect();
    let total = pairwise_sum(&raw);
    raw.iter().map(|x| x / total).collect()
}

fn mix(weights: &[f64], states: &[DensityOperator]) -> Result<DensityOperator> {
    let parts: Vec<(f64, &DensityOperator)> = weights.iter().copied().zip(states).collect();
    DensityOperator::mixture(&parts)
}

fn fa(t: &DensityOperator, u: &DensityOperator) -> Result<f64> {
    fidelity::subsystem_fidelity(t, u)
}

fn angle(t: &DensityOperator, u: &DensityOperator) -> Result<f64> {
    fidelity::angle_subsystem(t, u)
}

fn property_checks(
    dims: SpaceDecomposition,
    samples: usize,
    tol: &Tolerances,
    rng: &mut Stream,
    keep: &mut Vec<(String, ComplexMatrix)>,
) -> Result<Vec<CheckResult>> {
    let mut checks = Vec::new();
    let tau = random_any_state(dims, rng);
    let upsilon = random_any_state(dims, rng);
    let phi = random_any_state(dims, rng);
    keep.push(("tau".into(), tau.matrix().clone()));
    keep.push(("upsilon".into(), upsilon.matrix().clone()));
    keep.push(("phi".into(), phi.matrix().clone()));
    let f = fa(&tau, &upsilon)?;

    checks.push(CheckResult::within("symmetry", (f - fa(&upsilon, &tau)?).abs(), tol.symmetry));

    // F^A = 1 exactly when the reduced operators coincide.
    let same = space::random_state_same_reduced(&tau, rng, fidelity::ORACLE_STEPS);
    keep.push(("tau_same_reduced".into(), same.matrix().clone()));
    for (a, b) in [(&tau, &same), (&tau, &upsilon)] {
        let one = (fa(a, b)? - 1.0).abs() <= tol.equality;
        let equal = frob_dist(space::reduced_on_a(a).matrix(), space::reduced_on_a(b).matrix()) <= tol.equality;
        checks.push(CheckResult::holds("normalization", one == equal));
    }

    let m = rng.int_in(1, 4);
    let taus: Vec<DensityOperator> = (0..m).map(|_| random_any_state(dims, rng)).collect();
    let ups: Vec<DensityOperator> = (0..m).map(|_| random_any_state(dims, rng)).collect();
    let p = random_weights(m, rng);
    let q = random_weights(m, rng);
    let mixed_p = mix(&p, &taus)?;
    let lhs = fa(&mixed_p, &mix(&q, &ups)?)?;
    let terms: Vec<f64> = (0..m)
        .map(|i| Ok((p[i] * q[i]).sqrt() * fa(&taus[i], &ups[i])?))
        .collect::<Result<_>>()?;
    checks.push(CheckResult::at_least("strong_concavity", lhs - pairwise_sum(&terms), tol.slack));
    // Concavity of the square holds in each argument separately; with both
    // arguments mixed at once it can fail already for classical states.
    let lhs = fa(&tau, &mix(&p, &ups)?)?.powi(2);
    let terms: Vec<f64> = (0..m)
        .map(|i| Ok(p[i] * fa(&tau, &ups[i])?.powi(2)))
        .collect::<Result<_>>()?;
    checks.push(CheckResult::at_least("square_concavity", lhs - pairwise_sum(&terms), tol.slack));
    let lhs = fa(&mixed_p, &upsilon)?.powi(2);
    let terms: Vec<f64> = (0..m)
        .map(|i| Ok(p[i] * fa(&taus[i], &upsilon)?.powi(2)))
        .collect::<Result<_>>()?;
    checks.push(CheckResult::at_least("square_concavity", lhs - pairwise_sum(&terms), tol.slack));
    for (i, (t, u)) in taus.iter().zip(&ups).enumerate() {
        keep.push((format!("mixture_tau{i}"), t.matrix().clone()));
        keep.push((format!("mixture_upsilon{i}"), u.matrix().clone()));
    }

    let direct = angle(&tau, &upsilon)?;
    let via = angle(&tau, &phi)? + angle(&phi, &upsilon)?;
    checks.push(CheckResult::at_least("triangle", via - direct, tol.slack));
    let degenerate = angle(&tau, &tau)? + direct - direct;
    checks.push(CheckResult::within("triangle_degenerate", degenerate.abs(), tol.symmetry));

    let (ch, _) = channel::random_local_product(dims, rng);
    keep.extend(kraus_bundle("local_kraus", &ch));
    let (et, eu) = (ch.apply(&tau)?, ch.apply(&upsilon)?);
    checks.push(CheckResult::at_least("local_monotonicity", fa(&et, &eu)? - f, tol.slack));
    checks.push(CheckResult::at_least("angle_contractivity", direct - angle(&et, &eu)?, tol.slack));

    let opt = fidelity::optimal_subsystem_povm(&tau, &upsilon)?;
    let achieved = fidelity::povm_overlap(&opt, &tau, &upsilon)?;
    checks.push(CheckResult::within("optimal_subsystem_povm", (achieved - f).abs(), tol.operational));
    let mut lowest = f64::INFINITY;
    for _ in 0..samples {
        let povm = fidelity::random_subsystem_povm(dims, rng.int_in(2, 2 * dims.da()), rng);
        lowest = lowest.min(fidelity::povm_overlap(&povm, &tau, &upsilon)?);
    }
    if samples > 0 {
        checks.push(CheckResult::at_least("random_subsystem_povm", lowest - f, tol.slack));
    }

    let (gc, gf) = global_fuchs_checks(&tau, &upsilon, samples, tol, rng)?;
    checks.push(gc);
    checks.extend(gf);
    Ok(checks)
}

fn global_fuchs_checks(
    tau: &DensityOperator,
    upsilon: &DensityOperator,
    samples: usize,
    tol: &Tolerances,
    rng: &mut Stream,
) -> Result<(CheckResult, Option<CheckResult>)> {
    let f = fidelity::uhlmann_fidelity(tau, upsilon)?;
    let elements = fidelity::optimal_measurement(tau.matrix(), upsilon.matrix())?;
    let achieved = fidelity::measurement_overlap(&elements, tau.matrix(), upsilon.matrix());
    let opt = CheckResult::within("optimal_global_povm", (achieved - f).abs(), tol.operational);
    let ds = tau.decomposition().ds();
    let mut lowest = f64::INFINITY;
    for _ in 0..samples {
        let povm = linalg::random_povm(ds, rng.int_in(2, 2 * ds), rng);
        lowest = lowest.min(fidelity::measurement_overlap(&povm, tau.matrix(), upsilon.matrix()));
    }
    let random = (samples > 0).then(|| CheckResult::at_least("random_global_povm", lowest - f, tol.slack));
    Ok((opt, random))
}

/// The quantified properties of `F^A` and its angle over random instances:
/// symmetry, normalization, strong and square concavity, the triangle
/// inequality, monotonicity and contractivity under local product channels,
/// and both measurement characterizations.
pub fn run_property_suite(cfg: &SuiteConfig) -> Result<SuiteRun> {
    let started = Instant::now();
    let dims = cfg.dims;
    let tol = cfg.tolerances;
    let reports = run_trials(cfg.seed, cfg.trials, |k, rng| {
        let mut report = TrialReport::new(k, cfg.seed, dims);
        let mut keep = Vec::new();
        match property_checks(dims, cfg.samples, &tol, rng, &mut keep) {
            Ok(checks) => report.checks = checks,
            Err(e) => return report.failed(e),
        }
        report.finish(|| keep)
    });
    let summary = summarize("properties", cfg, cfg.parameters(&["samples"]), &reports, started);
    Ok(SuiteRun { summary, reports })
}

/// The closed form against the canonical maximizers, the sampled definition
/// oracle, and the subsystem measurement characterization.
/// `samples` sets both the oracle samples and the random POVMs per pair.
pub fn run_three_form(cfg: &SuiteConfig) -> Result<SuiteRun> {
    let started = Instant::now();
    let dims = cfg.dims;
    let tol = cfg.tolerances;
    let reports = run_trials(cfg.seed, cfg.trials, |k, rng| {
        let mut report = TrialReport::new(k, cfg.seed, dims);
        let tau = random_any_state(dims, rng);
        let upsilon = random_any_state(dims, rng);
        let mut eval = || -> Result<Vec<CheckResult>> {
            let f = fa(&tau, &upsilon)?;
            let (ts, us) = fidelity::canonical_maximizers(&tau, &upsilon)?;
            let at_max = fidelity::uhlmann_fidelity(&ts, &us)?;
            let oracle = fidelity::definition_oracle_bound(&tau, &upsilon, cfg.samples, false, rng)?;
            let opt = fidelity::optimal_subsystem_povm(&tau, &upsilon)?;
            let achieved = fidelity::povm_overlap(&opt, &tau, &upsilon)?;
            let mut lowest = f64::INFINITY;
            for _ in 0..cfg.samples {
                let povm = fidelity::random_subsystem_povm(dims, rng.int_in(2, 2 * dims.da()), rng);
                lowest = lowest.min(fidelity::povm_overlap(&povm, &tau, &upsilon)?);
            }
            let mut checks = vec![
                CheckResult::within("closed_form_vs_maximizers", (f - at_max).abs(), tol.equality),
                CheckResult::at_least("definition_oracle", f - oracle, tol.slack),
                CheckResult::within("optimal_subsystem_povm", (achieved - f).abs(), tol.operational),
            ];
            if cfg.samples > 0 {
                checks.push(CheckResult::at_least("random_subsystem_povm", lowest - f, tol.slack));
            }
            Ok(checks)
        };
        match eval() {
            Ok(checks) => report.checks = checks,
            Err(e) => return report.failed(e),
        }
        report.finish(|| vec![("tau".into(), tau.matrix().clone()), ("upsilon".into(), upsilon.matrix().clone())])
    });
    let summary = summarize("three_form", cfg, cfg.parameters(&["samples"]), &reports, started);
    Ok(SuiteRun { summary, reports })
}

/// The global fidelity against its optimal measurement and `samples` random
/// POVMs per pair.
pub fn run_global_fuchs(cfg: &SuiteConfig) -> Result<SuiteRun> {
    let started = Instant::now();
    let dims = cfg.dims;
    let tol = cfg.tolerances;
    let reports = run_trials(cfg.seed, cfg.trials, |k, rng| {
        let mut report = TrialReport::new(k, cfg.seed, dims);
        let tau = random_any_state(dims, rng);
        let upsilon = random_any_state(dims, rng);
        match global_fuchs_checks(&tau, &upsilon, cfg.samples, &tol, rng) {
            Ok((opt, random)) => report.checks = std::iter::once(opt).chain(random).collect(),
            Err(e) => return report.failed(e),
        }
        report.finish(|| vec![("tau".into(), tau.matrix().clone()), ("upsilon".into(), upsilon.matrix().clone())])
    });
    let summary = summarize("global_fuchs", cfg, cfg.parameters(&["samples"]), &reports, started);
    Ok(SuiteRun { summary, reports })
}

fn basis_state(dims: SpaceDecomposition, a: usize, b: usize) -> DensityOperator {
    let mut m = linalg::zeros(dims.ds(), dims.ds());
    let i = a * dims.db() + b;
    m[(i, i)] = linalg::c(1.0, 0.0);
    DensityOperator::new(dims, m).expect("basis projector is a state")
}

/// Search for a strict increase and a strict decrease of `F^A` under the
/// unitary swapping `H^A` and `H^B`.
///
/// Trials never fail individually. The summary records one failure per
/// direction that was not found and one per handcrafted pair whose change
/// differs from the closed-form prediction.
pub fn swap_counterexample_search(cfg: &SuiteConfig) -> Result<SuiteRun> {
    let started = Instant::now();
    let dims = cfg.dims;
    let tol = cfg.tolerances;
    let swap = KrausChannel::unitary(dims, channel::swap_ab_unitary(dims)?)?;
    let reports = run_trials(cfg.seed, cfg.trials, |k, rng| {
        let mut report = TrialReport::new(k, cfg.seed, dims);
        let tau = random_any_state(dims, rng);
        let upsilon = random_any_state(dims, rng);
        let eval = || -> Result<(f64, f64)> {
            Ok((fa(&tau, &upsilon)?, fa(&swap.apply(&tau)?, &swap.apply(&upsilon)?)?))
        };
        match eval() {
            Ok((before, after)) => report.record_fa(before, after),
            Err(e) => return report.failed(e),
        }
        report.finish(Vec::new)
    });
    let mut summary = summarize("swap", cfg, BTreeMap::new(), &reports, started);
    summary.min_slack = None;
    let increases = reports.iter().filter(|r| r.slack.is_some_and(|s| s > tol.strict)).count();
    let decreases = reports.iter().filter(|r| r.slack.is_some_and(|s| s < -tol.strict)).count();
    summary.counters.insert("increases".into(), increases);
    summary.counters.insert("decreases".into(), decreases);
    summary.failures += usize::from(increases == 0) + usize::from(decreases == 0);

    // |00⟩ vs |10⟩: orthogonal on A before, identical on A after.
    // |00⟩ vs |01⟩: identical on A before, orthogonal on A after.
    let s00 = basis_state(dims, 0, 0);
    let handcrafted = [
        ("handcrafted_increase", basis_state(dims, 1, 0), 0.0, 1.0),
        ("handcrafted_decrease", basis_state(dims, 0, 1), 1.0, 0.0),
    ];
    for (name, other, before, after) in handcrafted {
        let got_before = fa(&s00, &other)?;
        let got_after = fa(&swap.apply(&s00)?, &swap.apply(&other)?)?;
        let dev = (got_before - before).abs().max((got_after - after).abs());
        let check = CheckResult::within(name, dev, tol.equality);
        let census = summary.checks.entry(name.to_string()).or_default();
        census.evaluated = 1;
        census.failures = usize::from(!check.pass());
        census.worst_margin = Some(check.margin);
        summary.failures += census.failures;
    }
    summary.wall_time = started.elapsed();
    Ok(SuiteRun { summary, reports })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub epsilon: f64,
    pub leak_strength: f64,
    pub trial: usize,
    pub fa_before: f64,
    pub fa_after: f64,
    pub slack: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepCell {
    pub epsilon: f64,
    pub leak_strength: f64,
    pub trials: usize,
    pub mean_fa_before: f64,
    pub min_fa_before: f64,
    pub mean_fa_after: f64,
    pub min_fa_after: f64,
    pub min_slack: f64,
    pub pass: bool,
}

#[derive(Debug, Clone)]
pub struct SweepRun {
    pub rows: Vec<SweepRow>,
    pub cells: Vec<SweepCell>,
    pub summary: SuiteSummary,
}

/// `F^A` before and after a structured channel over a grid of leak weights
/// `ε` of the preparation and leak strengths `t` of the channel.
///
/// Each trial prepares a perfect state and an imperfect preparation of the same
/// A-state with weight `ε` in `K`. A cell passes when every trial has slack at
/// least `−tol` and the mean after is at least the mean before minus `tol`.
pub fn sweep_init_error(cfg: &SuiteConfig, epsilons: &[f64], leak_strengths: &[f64]) -> Result<SweepRun> {
    let started = Instant::now();
    let dims = cfg.dims;
    let tol = cfg.tolerances;
    for &e in epsilons {
        if !(0.0..=1.0).contains(&e) {
            return Err(Error::InvalidArgument {
                name: "epsilon",
                reason: format!("must lie in [0, 1], got {e}"),
            });
        }
        if e > 0.0 && dims.dk() == 0 {
            return Err(Error::InvalidArgument {
                name: "epsilon",
                reason: "a positive leak needs dK >= 1".into(),
            });
        }
    }
    for &t in leak_strengths {
        if !(0.0..=1.0).contains(&t) {
            return Err(Error::InvalidArgument {
                name: "leak_strength",
                reason: format!("must lie in [0, 1], got {t}"),
            });
        }
    }
    let grid: Vec<(f64, f64)> = epsilons
        .iter()
        .flat_map(|&e| leak_strengths.iter().map(move |&t| (e, t)))
        .collect();
    let per_cell = cfg.trials;
    let reports = run_trials(cfg.seed, grid.len() * per_cell, |k, rng| {
        let (eps, t) = grid[k / per_cell];
        let mut report = TrialReport::new(k, cfg.seed, dims);
        report.n_kraus = Some(cfg.n_kraus);
        report.leak_strength = Some(t);
        let mut eval = || -> Result<(f64, f64)> {
            let spec = channel::random_structured(dims, cfg.n_kraus, t, rng)?;
            let rho = space::random_perfect_state(dims, rng);
            let rho_a = space::normalized_reduced_on_a(&rho)?;
            let rho_tilde = space::random_imperfect_with(dims, rho_a.matrix(), eps, rng);
            let out = channel::assemble(&spec).apply(&rho_tilde)?;
            Ok((fa(&rho, &rho_tilde)?, fa(&rho, &out)?))
        };
        match eval() {
            Ok((before, after)) => {
                report.record_fa(before, after);
                report.checks.push(CheckResult::at_least("monotonicity", after - before, tol.slack));
            }
            Err(e) => return report.failed(e),
        }
        report.finish(Vec::new)
    });
    let rows: Vec<SweepRow> = reports
        .iter()
        .filter_map(|r| {
            let (eps, t) = grid[r.trial_index / per_cell];
            Some(SweepRow {
                epsilon: eps,
                leak_strength: t,
                trial: r.trial_index % per_cell,
                fa_before: r.fa_before?,
                fa_after: r.fa_after?,
                slack: r.slack?,
            })
        })
        .collect();
    let mut cells = Vec::with_capacity(grid.len());
    let mut cell_failures = 0;
    let min = |xs: &[f64]| xs.iter().copied().fold(f64::INFINITY, f64::min);
    for (c, &(eps, t)) in grid.iter().enumerate() {
        let in_cell = &reports[c * per_cell..(c + 1) * per_cell];
        let before: Vec<f64> = in_cell.iter().filter_map(|r| r.fa_before).collect();
        let after: Vec<f64> = in_cell.iter().filter_map(|r| r.fa_after).collect();
        let slack: Vec<f64> = in_cell.iter().filter_map(|r| r.slack).collect();
        let (mb, ma) = (mean(&before), mean(&after));
        let pass = per_cell == 0 || (in_cell.iter().all(|r| r.pass) && ma >= mb - tol.slack);
        cell_failures += usize::from(!pass);
        cells.push(SweepCell {
            epsilon: eps,
            leak_strength: t,
            trials: slack.len(),
            mean_fa_before: mb,
            min_fa_before: min(&before),
            mean_fa_after: ma,
            min_fa_after: min(&after),
            min_slack: min(&slack),
            pass,
        });
    }
    let mut params = cfg.parameters(&["n_kraus"]);
    params.insert("cells".into(), grid.len() as f64);
    let mut summary = summarize("sweep", cfg, params, &reports, started);
    summary.counters.insert("failed_cells".into(), cell_failures);
    summary.failures = summary.failures.max(cell_failures);
    Ok(SweepRun { rows, cells, summary })
}

fn csv_of<T: Serialize>(rows: &[T]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    for row in rows {
        w.serialize(row).expect("rows serialize to CSV");
    }
    String::from_utf8(w.into_inner().expect("in-memory writer")).expect("CSV is UTF-8")
}

/// Per-trial CSV with columns
/// `epsilon,leak_strength,trial,fa_before,fa_after,slack`.
pub fn sweep_csv(rows: &[SweepRow]) -> String {
    csv_of(rows)
}

/// Per-cell aggregate CSV.
pub fn sweep_cells_csv(cells: &[SweepCell]) -> String {
    csv_of(cells)
}

#[derive(Serialize)]
struct ReportRow {
    trial_index: usize,
    leak_strength: Option<f64>,
    fa_before: Option<f64>,
    fa_after: Option<f64>,
    slack: Option<f64>,
    pass: bool,
}

/// Per-trial CSV of a suite run; columns without a value stay empty.
pub fn reports_csv(reports: &[TrialReport]) -> String {
    let rows: Vec<ReportRow> = reports
        .iter()
        .map(|r| ReportRow {
            trial_index: r.trial_index,
            leak_strength: r.leak_strength,
            fa_before: r.fa_before,
            fa_after: r.fa_after,
            slack: r.slack,
            pass: r.pass,
        })
        .collect();
    csv_of(&rows)
}

/// Names accepted by [`run_suite`].
pub const SUITES: [&str; 7] = ["theorem3", "theorem4", "identities", "properties", "swap", "three_form", "global_fuchs"];

pub fn run_suite(name: &str, cfg: &SuiteConfig) -> Result<SuiteRun> {
    match name {
        "theorem3" => run_theorem3(cfg),
        "theorem4" => run_theorem4(cfg),
        "identities" => run_evolution_identities(cfg),
        "properties" => run_property_suite(cfg),
        "swap" => swap_counterexample_search(cfg),
        "three_form" => run_three_form(cfg),
        "global_fuchs" => run_global_fuchs(cfg),
        _ => Err(Error::InvalidArgument {
            name: "suite",
            reason: format!("unknown suite {name:?}; expected one of {SUITES:?}"),
        }),
    }
}
