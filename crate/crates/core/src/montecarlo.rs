//! Replicated simulation of the detection pipeline: type I and type II
//! error rates, an empirical separation radius by bisection, and the
//! chi-square divergence of the lower-bound construction.
//!
//! Replication `i` draws from `RandomStream::new(seed).split(i)` and the
//! reductions are integer counts (or index-ordered chunk sums), so every
//! estimate is a pure function of its inputs and the seed.

use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, StandardNormal};

use crate::bounds::lower_constant;
use crate::detector::{CBetaMode, Decision, DetectorConfig};
use crate::error::{invalid, Error, Result};
use crate::exec::Execution;
use crate::noise::{CorrelationMatrix, NoiseModel, NoiseSpec};
use crate::rng::RandomStream;
use crate::sequences::{CompensatedSum, ProblemSpec, Signal, ELLIPSOID_TOL};

/// Smallest replication count accepted by the error-rate estimators.
pub const MIN_REPS: u64 = 1_000;

/// Largest bandwidth for which the Monte Carlo divergence estimate runs.
pub const MC_DIVERGENCE_MAX_D: usize = 5;

/// Largest closed-form divergence for which the Monte Carlo estimate runs.
pub const MC_DIVERGENCE_MAX_VALUE: f64 = 5.0;

const BISECTION_RTOL: f64 = 0.02;
const BISECTION_MAX_ITER: usize = 20;
const DIVERGENCE_CHUNK: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct McPlan {
    pub reps: u64,
    pub seed: u64,
    pub exec: Execution,
}

impl McPlan {
    pub fn new(reps: u64, seed: u64) -> Self {
        Self { reps, seed, exec: Execution::default() }
    }

    pub fn with_execution(mut self, exec: Execution) -> Self {
        self.exec = exec;
        self
    }

    fn check(&self) -> Result<()> {
        if self.reps < MIN_REPS {
            return Err(invalid("reps", format!("need at least {MIN_REPS} replications, got {}", self.reps)));
        }
        Ok(())
    }
}

/// A binomial proportion estimate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McEstimate {
    pub successes: u64,
    pub reps: u64,
    pub p_hat: f64,
    /// `√(p̂(1-p̂)/reps)`
    pub std_err: f64,
    pub seed: u64,
    pub wall_time: Duration,
}

impl McEstimate {
    fn from_count(successes: u64, reps: u64, seed: u64, wall_time: Duration) -> Self {
        let p_hat = successes as f64 / reps as f64;
        let std_err = (p_hat * (1.0 - p_hat) / reps as f64).sqrt();
        Self { successes, reps, p_hat, std_err, seed, wall_time }
    }

    /// `p̂ ≤ level + 3 SE`
    pub fn within(&self, level: f64) -> bool {
        self.p_hat <= level + 3.0 * self.std_err
    }
}

/// Number of replications whose decision equals `target`.
fn count_decisions(
    spec: &ProblemSpec,
    config: &DetectorConfig,
    model: &NoiseModel,
    theta: &Signal,
    plan: &McPlan,
    target: Decision,
) -> Result<McEstimate> {
    plan.check()?;
    let d = config.d;
    spec.check_bandwidth(d)?;
    model.check_dimension(d)?;
    let mean: Vec<f64> = (1..=d).map(|k| spec.operator.value(k) * theta.get(k)).collect();
    let root = RandomStream::new(plan.seed);
    let start = Instant::now();
    let hits = plan.exec.count(plan.reps, |i| {
        let mut rng = root.split(i).rng();
        let mut y = vec![0.0; d];
        model.fill(&mut rng, &mut y);
        for (yk, &mk) in y.iter_mut().zip(&mean) {
            *yk = mk + spec.eps * *yk;
        }
        config.decide(&y, spec).expect("bandwidth and length checked above") == target
    });
    Ok(McEstimate::from_count(hits, plan.reps, plan.seed, start.elapsed()))
}

/// Fraction of null replications (`θ = 0`) that reject.
pub fn estimate_type1(spec: &ProblemSpec, config: &DetectorConfig, model: &NoiseModel, plan: &McPlan) -> Result<McEstimate> {
    if !(spec.eps > 0.0) {
        return Err(invalid("eps", "type I estimation needs eps > 0 (at eps = 0 the statistic and threshold both vanish)"));
    }
    count_decisions(spec, config, model, &Signal::zero(), plan, Decision::Reject)
}

/// Fraction of replications under `θ` that accept.
pub fn estimate_type2(
    spec: &ProblemSpec,
    config: &DetectorConfig,
    model: &NoiseModel,
    theta: &Signal,
    plan: &McPlan,
) -> Result<McEstimate> {
    let check = spec.smoothness.ellipsoid_membership(theta)?;
    if !check.inside {
        return Err(Error::OutsideEllipsoid { weighted: check.weighted });
    }
    count_decisions(spec, config, model, theta, plan, Decision::Accept)
}

/// Mass `r` at the deepest coordinate `k ≤ d` with `r² ≤ a_k^{-2}`, so the
/// signal stays inside the ellipsoid. Returns the signal and `k`.
pub fn admissible_signal(spec: &ProblemSpec, d: usize, r: f64) -> Result<(Signal, usize)> {
    spec.check_bandwidth(d)?;
    let k = (1..=d)
        .rev()
        .find(|&k| r * r <= spec.smoothness.inv_sq(k))
        .ok_or(Error::OutsideEllipsoid { weighted: r * r / spec.smoothness.inv_sq(1) })?;
    Ok((spec.boundary_signal(k, r)?, k))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SeparationRadius {
    /// Bisection midpoint at termination.
    pub radius: f64,
    pub lo: f64,
    pub hi: f64,
    pub d: usize,
    pub iterations: usize,
}

/// Smallest `r` for which the boundary signal of norm `r` at `D†` is
/// accepted with frequency at most `β`, by bisection over
/// `[0, a_{D†}^{-1}]`. Every probe reuses the same replication streams.
pub fn empirical_separation_radius(
    spec: &ProblemSpec,
    alpha: f64,
    beta: f64,
    noise: &NoiseSpec,
    mode: CBetaMode,
    plan: &McPlan,
) -> Result<SeparationRadius> {
    let config = DetectorConfig::calibrate(spec, alpha, beta, None, mode)?;
    separation_radius_with(spec, &config, noise, plan)
}

/// As [`empirical_separation_radius`] for an already calibrated test; the
/// signal sits at the test's own bandwidth and the target level is
/// `config.beta`.
pub fn separation_radius_with(
    spec: &ProblemSpec,
    config: &DetectorConfig,
    noise: &NoiseSpec,
    plan: &McPlan,
) -> Result<SeparationRadius> {
    plan.check()?;
    let (d, beta) = (config.d, config.beta);
    let model = noise.instantiate(d)?;
    let accept_rate = |r: f64| -> Result<f64> {
        let theta = spec.boundary_signal(d, r)?;
        Ok(estimate_type2(spec, config, &model, &theta, plan)?.p_hat)
    };
    let mut lo = 0.0;
    let mut hi = spec.smoothness.inv_sq(d).sqrt();
    if accept_rate(lo)? <= beta {
        return Err(Error::NotBracketing(format!("type II at r = 0 is already <= {beta}; the test is miscalibrated")));
    }
    let top = accept_rate(hi)?;
    if top > beta {
        return Err(Error::NotBracketing(format!("type II at the largest admissible r = {hi} is {top} > {beta}")));
    }
    let mut iterations = 0;
    while iterations < BISECTION_MAX_ITER && hi - lo > BISECTION_RTOL * hi {
        let mid = 0.5 * (lo + hi);
        if accept_rate(mid)? <= beta {
            hi = mid;
        } else {
            lo = mid;
        }
        iterations += 1;
    }
    Ok(SeparationRadius { radius: 0.5 * (lo + hi), lo, hi, d, iterations })
}

/// The alternative `θ*` of the lower-bound construction.
#[derive(Debug, Clone, PartialEq)]
pub struct WorstCaseSignal {
    pub theta_star: Signal,
    /// `Σ_{k≤D} b_k^{-2}(Σ*v)_k²`
    pub rho_sq: f64,
    /// `v_k = 1/√D`
    pub v: Vec<f64>,
    pub sigma_v: Vec<f64>,
    /// `v'Σ*v`
    pub v_sigma_v: f64,
}

/// `θ*_k = r b_k^{-1}(Σ*v)_k / ρ` for `k ≤ D`.
pub fn worst_case_signal(spec: &ProblemSpec, d: usize, r: f64, sigma_star: &CorrelationMatrix) -> Result<WorstCaseSignal> {
    spec.check_bandwidth(d)?;
    if sigma_star.dim() != d {
        return Err(Error::DimensionMismatch { expected: d, actual: sigma_star.dim() });
    }
    if !(r >= 0.0 && r.is_finite()) {
        return Err(invalid("r", format!("must be finite and non-negative, got {r}")));
    }
    let bias = spec.bias_term(d)?;
    if r * r > bias * (1.0 + ELLIPSOID_TOL) {
        return Err(Error::OutsideEllipsoid { weighted: r * r / bias });
    }
    let v = DVector::from_element(d, 1.0 / (d as f64).sqrt());
    let sigma_v = sigma_star.matrix() * &v;
    let mut rho_sq = CompensatedSum::default();
    for k in 0..d {
        rho_sq.add(spec.operator.inv_sq(k + 1) * sigma_v[k] * sigma_v[k]);
    }
    let rho_sq = rho_sq.value();
    let rho = rho_sq.sqrt();
    let theta: Vec<f64> = (0..d).map(|k| r * sigma_v[k] / (spec.operator.value(k + 1) * rho)).collect();
    Ok(WorstCaseSignal {
        theta_star: Signal::new(theta),
        rho_sq,
        v_sigma_v: v.dot(&sigma_v),
        v: v.as_slice().to_vec(),
        sigma_v: sigma_v.as_slice().to_vec(),
    })
}

/// Radius used by the lower-bound argument at bandwidth `D`:
/// `min(c ε² Σ_{k≤D} b_k^{-2}, a_D^{-2})` with `c = ln(C_{α,β})/4`.
pub fn prop3_radius_sq(spec: &ProblemSpec, d: usize, alpha: f64, beta: f64) -> Result<f64> {
    let c = lower_constant(alpha, beta)?;
    let sum = spec.sum_inv_b_sq(d)?.value;
    Ok((c * spec.eps * spec.eps * sum).min(spec.bias_term(d)?))
}

/// `ln E₀[L²] = r² v'Σ*v / (ε² ρ²)` for the pair `(θ*, Σ*)`.
pub fn ln_chi_sq_divergence(spec: &ProblemSpec, d: usize, r: f64, sigma_star: &CorrelationMatrix) -> Result<f64> {
    if sigma_star.dim() != d || sigma_star.matrix().clone().cholesky().is_none() {
        return Err(Error::NotPositiveDefinite);
    }
    if !(spec.eps > 0.0) {
        return Err(invalid("eps", "divergence needs eps > 0"));
    }
    let w = worst_case_signal(spec, d, r, sigma_star)?;
    Ok(r * r * w.v_sigma_v / (spec.eps * spec.eps * w.rho_sq))
}

/// Closed-form `E₀[L²_{θ*,Σ*}(Y)]`.
pub fn chi_sq_divergence(spec: &ProblemSpec, d: usize, r: f64, sigma_star: &CorrelationMatrix) -> Result<f64> {
    Ok(ln_chi_sq_divergence(spec, d, r, sigma_star)?.exp())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DivergenceEstimate {
    pub value: f64,
    pub std_err: f64,
    pub samples: usize,
    pub closed_form: f64,
}

impl DivergenceEstimate {
    pub fn relative_error(&self) -> f64 {
        (self.value - self.closed_form).abs() / self.closed_form
    }
}

/// Monte Carlo `E₀[L²]`: samples `ξ ~ N(0, Σ*)` under the null and averages
/// `exp(2μ'Σ*^{-1}ξ - μ'Σ*^{-1}μ)` with `μ_k = b_kθ*_k/ε`. Refused for
/// `D > 5` or closed-form values above 5, where the estimator's variance
/// is unusable.
pub fn chi_sq_divergence_mc(
    spec: &ProblemSpec,
    d: usize,
    r: f64,
    sigma_star: &CorrelationMatrix,
    samples: usize,
    seed: u64,
    exec: Execution,
) -> Result<DivergenceEstimate> {
    if d > MC_DIVERGENCE_MAX_D {
        return Err(Error::EstimatorLimit(format!("D = {d} exceeds {MC_DIVERGENCE_MAX_D}")));
    }
    let closed_form = chi_sq_divergence(spec, d, r, sigma_star)?;
    if closed_form > MC_DIVERGENCE_MAX_VALUE {
        return Err(Error::EstimatorLimit(format!("closed-form divergence {closed_form} exceeds {MC_DIVERGENCE_MAX_VALUE}")));
    }
    if samples == 0 {
        return Err(invalid("samples", "must be positive"));
    }
    let chol = sigma_star.matrix().clone().cholesky().ok_or(Error::NotPositiveDefinite)?;
    let w = worst_case_signal(spec, d, r, sigma_star)?;
    let mu = DVector::from_fn(d, |k, _| spec.operator.value(k + 1) * w.theta_star.get(k + 1) / spec.eps);
    let precision_mu = chol.solve(&mu);
    let quad = mu.dot(&precision_mu);
    let factor: DMatrix<f64> = chol.l();
    let root = RandomStream::new(seed);
    let chunks = samples.div_ceil(DIVERGENCE_CHUNK);
    let partial = exec.map(chunks, |c| {
        let n = DIVERGENCE_CHUNK.min(samples - c * DIVERGENCE_CHUNK);
        let mut rng = root.split(c as u64).rng();
        let (mut s1, mut s2) = (CompensatedSum::default(), CompensatedSum::default());
        for _ in 0..n {
            let z = DVector::from_fn(d, |_, _| StandardNormal.sample(&mut rng));
            let xi = &factor * z;
            let l2 = (2.0 * precision_mu.dot(&xi) - quad).exp();
            s1.add(l2);
            s2.add(l2 * l2);
        }
        (s1.value(), s2.value())
    });
    let (mut s1, mut s2) = (CompensatedSum::default(), CompensatedSum::default());
    for (a, b) in partial {
        s1.add(a);
        s2.add(b);
    }
    let n = samples as f64;
    let mean = s1.value() / n;
    let var = (s2.value() / n - mean * mean).max(0.0);
    Ok(DivergenceEstimate { value: mean, std_err: (var / n).sqrt(), samples, closed_form })
}
