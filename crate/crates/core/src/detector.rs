//! The spectral cut-off test `Ψ = 1{T_D ≥ t}` with a Chebyshev-calibrated
//! threshold, its class constants, the type II calibration constant `C_β`
//! and the bandwidth that minimises the guaranteed separation radius.
//!
//! Class constants come from the fourth-moment bound `C` alone:
//! `C₁ = C - 1` (since `E(ξ²-1)² = Eξ⁴ - 1`) and `C₂ = √C` (Cauchy–Schwarz
//! on `E|ξ³|`).

use crate::error::{invalid, Error, Result};
use crate::search::{scan, Goal};
use crate::sequences::{CompensatedSum, ProblemSpec, Signal};

/// Margins `1 - K₁/C_β` below this value are flagged: the type II guarantee
/// is then dominated by the `(1 - K₁/C_β)^{-2}` blow-up.
pub const MARGIN_FLAG: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectorConstants {
    pub c1: f64,
    pub c2: f64,
    pub k1: f64,
    pub k2: f64,
    pub alpha: f64,
}

impl DetectorConstants {
    /// `(C-1, √C, √(2(C-1)/α), 10 + 5C₁ + 2C₂ + 12√C₁)`.
    pub fn derive(c: f64, alpha: f64) -> Result<Self> {
        if !(c >= 1.0 && c.is_finite()) {
            return Err(invalid("C", format!("fourth-moment bound must be >= 1 (E xi^2 = 1 forces E xi^4 >= 1), got {c}")));
        }
        if !(alpha > 0.0 && alpha <= 1.0) {
            return Err(invalid("alpha", format!("level must lie in (0, 1], got {alpha}")));
        }
        let c1 = c - 1.0;
        let c2 = c.sqrt();
        let k1 = (2.0 * c1).sqrt() / alpha.sqrt();
        let k2 = 10.0 + 5.0 * c1 + 2.0 * c2 + 12.0 * c1.sqrt();
        Ok(Self { c1, c2, k1, k2, alpha })
    }

    /// `t_{1-α,D} = K₁ ε² Σ_{k≤D} b_k^{-2}`
    pub fn threshold(&self, spec: &ProblemSpec, d: usize) -> Result<f64> {
        let sum = spec.sum_inv_b_sq(d)?.value;
        Ok(self.k1 * spec.eps * spec.eps * sum)
    }

    /// Left-hand side of the calibration equation,
    /// `2K₂x^{-1} / (1 - K₁x^{-1})²`.
    pub fn calibration_lhs(&self, x: f64) -> f64 {
        let margin = 1.0 - self.k1 / x;
        2.0 * self.k2 / x / (margin * margin)
    }

    /// Solves for `C_β`. [`CBetaMode::Exact`] returns the largest root of
    /// `βx² - (2βK₁ + 2K₂)x + βK₁² = 0`; [`CBetaMode::Practical`] returns
    /// `8K₂/β` when that value satisfies the calibration inequality and
    /// falls back to the exact root otherwise.
    pub fn solve_c_beta(&self, beta: f64, mode: CBetaMode) -> Result<CBeta> {
        if !(beta > 0.0 && beta < 1.0) {
            return Err(invalid("beta", format!("must lie in (0, 1), got {beta}")));
        }
        let (k1, k2) = (self.k1, self.k2);
        let b = 2.0 * beta * k1 + 2.0 * k2;
        let disc = b * b - 4.0 * beta * beta * k1 * k1;
        let exact = (b + disc.sqrt()) / (2.0 * beta);
        let practical = 8.0 * k2 / beta;
        let (value, used) = match mode {
            CBetaMode::Exact => (exact, CBetaMode::Exact),
            CBetaMode::Practical if practical > k1 && self.calibration_lhs(practical) <= beta => (practical, CBetaMode::Practical),
            CBetaMode::Practical => (exact, CBetaMode::Exact),
        };
        let margin = 1.0 - k1 / value;
        Ok(CBeta { value, mode: used, lhs: self.calibration_lhs(value), margin, margin_flag: margin < MARGIN_FLAG })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CBetaMode {
    Exact,
    Practical,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CBeta {
    pub value: f64,
    /// Mode actually used (practical falls back to exact).
    pub mode: CBetaMode,
    /// Calibration LHS evaluated at `value`.
    pub lhs: f64,
    /// `1 - K₁/C_β`
    pub margin: f64,
    pub margin_flag: bool,
}

/// `T_D = Σ_{k≤D} b_k^{-2}(y_k² - ε²)`
pub fn statistic(y: &[f64], spec: &ProblemSpec, d: usize) -> Result<f64> {
    spec.check_bandwidth(d)?;
    if y.len() < d {
        return Err(Error::DimensionMismatch { expected: d, actual: y.len() });
    }
    let eps2 = spec.eps * spec.eps;
    let mut acc = CompensatedSum::default();
    for (k, &yk) in y.iter().take(d).enumerate() {
        acc.add(spec.operator.inv_sq(k + 1) * (yk * yk - eps2));
    }
    Ok(acc.value())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Decision {
    Reject,
    Accept,
}

/// Chosen bandwidth with the value of the radius objective
/// `C_β ε² Σ_{k≤D} b_k^{-2} + a_D^{-2}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BandwidthChoice {
    pub d: usize,
    pub value: f64,
    pub ln_value: f64,
    /// Minimiser sits at `D_max`; the truncation may be hiding a better `D`.
    pub truncated: bool,
}

/// `D† = argmin_D [C_β ε² Σ_{k≤D} b_k^{-2} + a_D^{-2}]`, ties towards the
/// smaller bandwidth.
pub fn select_bandwidth(spec: &ProblemSpec, c_beta: f64) -> Result<BandwidthChoice> {
    if !(c_beta > 0.0 && c_beta.is_finite()) {
        return Err(invalid("C_beta", format!("must be positive, got {c_beta}")));
    }
    let ln_scale = c_beta.ln() + 2.0 * spec.eps.ln();
    let best = scan(spec, Goal::Minimize, |t| crate::sequences::ln_add_exp(ln_scale + t.ln_s2, t.ln_bias));
    Ok(BandwidthChoice { d: best.d, value: best.ln_value.exp(), ln_value: best.ln_value, truncated: best.truncated })
}

/// A fully calibrated test.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectorConfig {
    pub constants: DetectorConstants,
    pub d: usize,
    pub threshold: f64,
    pub c_beta: CBeta,
    pub beta: f64,
}

impl DetectorConfig {
    /// Calibrates from the spec's class constant. `bandwidth = None` selects
    /// `D†`.
    pub fn calibrate(spec: &ProblemSpec, alpha: f64, beta: f64, bandwidth: Option<usize>, mode: CBetaMode) -> Result<Self> {
        let constants = DetectorConstants::derive(spec.fourth_moment_bound, alpha)?;
        let c_beta = constants.solve_c_beta(beta, mode)?;
        let d = match bandwidth {
            Some(d) => {
                spec.check_bandwidth(d)?;
                d
            }
            None => select_bandwidth(spec, c_beta.value)?.d,
        };
        let threshold = constants.threshold(spec, d)?;
        Ok(Self { constants, d, threshold, c_beta, beta })
    }

    /// Reject iff `T_D ≥ t`.
    pub fn decide(&self, y: &[f64], spec: &ProblemSpec) -> Result<Decision> {
        Ok(decide_statistic(statistic(y, spec, self.d)?, self.threshold))
    }

    /// Guaranteed separation radius at this bandwidth,
    /// `C_β ε² Σ_{k≤D} b_k^{-2} + a_D^{-2}`.
    pub fn radius_sq(&self, spec: &ProblemSpec) -> Result<f64> {
        let sum = spec.sum_inv_b_sq(self.d)?.value;
        Ok(self.c_beta.value * spec.eps * spec.eps * sum + spec.bias_term(self.d)?)
    }

    /// Upper envelope of `Var_θ(T_D)` used in the type II argument:
    /// `K₂{γ(Σ_{k≤D} θ_k²)² + γ^{-1} ε⁴ (Σ_{k≤D} b_k^{-2})²}` with `γ = 1/C_β`.
    pub fn variance_envelope(&self, spec: &ProblemSpec, theta: &Signal) -> Result<f64> {
        let gamma = 1.0 / self.c_beta.value;
        let energy = theta.band_energy(self.d);
        let sum = spec.sum_inv_b_sq(self.d)?.value;
        Ok(self.constants.k2 * (gamma * energy * energy + spec.eps.powi(4) * sum * sum / gamma))
    }
}

pub fn decide_statistic(statistic: f64, threshold: f64) -> Decision {
    if statistic >= threshold {
        Decision::Reject
    } else {
        Decision::Accept
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::noise::{adversarial_sigma, long_range_correlation, null_variance_decomposition, CorrelationMatrix};
    use crate::sequences::{OperatorFamily, SmoothnessFamily};
    use proptest::prelude::*;

    fn spec(op: OperatorFamily, eps: f64) -> ProblemSpec {
        ProblemSpec::new(op, SmoothnessFamily::ordinary(1.0), eps).unwrap()
    }

    #[test]
    fn derive_constants_examples() {
        let k = DetectorConstants::derive(3.0, 0.04).unwrap();
        assert_eq!(k.c1, 2.0);
        assert!((k.c2 - 1.7320508).abs() < 1e-6);
        assert!((k.k1 - 10.0).abs() < 1e-12);
        assert!((k.k2 - 40.4347).abs() < 1e-4);
        let r = DetectorConstants::derive(1.0, 0.3).unwrap();
        assert_eq!((r.c1, r.k1, r.k2), (0.0, 0.0, 12.0));
        assert!((DetectorConstants::derive(3.0, 1.0).unwrap().k1 - 2.0).abs() < 1e-15);
        assert!(DetectorConstants::derive(0.9, 0.1).is_err());
        assert!(DetectorConstants::derive(3.0, 0.0).is_err());
    }

    #[test]
    fn threshold_examples() {
        let k = DetectorConstants::derive(3.0, 1.0).unwrap();
        assert!((k.threshold(&spec(OperatorFamily::well_posed(), 1.0), 1).unwrap() - 2.0).abs() < 1e-15);
        assert_eq!(k.threshold(&spec(OperatorFamily::well_posed(), 0.0), 7).unwrap(), 0.0);
        let k = DetectorConstants::derive(3.0, 0.04).unwrap();
        let t = k.threshold(&spec(OperatorFamily::mildly_ill_posed(1.0), 0.1), 3).unwrap();
        assert!((t - 1.4).abs() < 1e-12);
    }

    #[test]
    fn statistic_and_decision_examples() {
        let zero = spec(OperatorFamily::well_posed(), 0.0);
        assert_eq!(statistic(&[0.0; 4], &zero, 4).unwrap(), 0.0);
        let unit = spec(OperatorFamily::well_posed(), 1.0);
        assert_eq!(statistic(&[1.0, 2.0], &unit, 2).unwrap(), 3.0);
        assert!(matches!(statistic(&[1.0], &unit, 2), Err(Error::DimensionMismatch { .. })));
        assert_eq!(decide_statistic(3.0, 2.0), Decision::Reject);
        assert_eq!(decide_statistic(2.0, 2.0), Decision::Reject);
        assert_eq!(decide_statistic(1.9, 2.0), Decision::Accept);
    }

    #[test]
    fn c_beta_examples() {
        let k = DetectorConstants { c1: 0.0, c2: 0.0, k1: 2.0, k2: 10.0, alpha: 0.5 };
        let exact = k.solve_c_beta(0.5, CBetaMode::Exact).unwrap();
        assert!((exact.value - (44.0 + 1920f64.sqrt()) / 2.0).abs() < 1e-12);
        assert!((exact.value - 43.9089).abs() < 1e-4);
        assert!((exact.lhs - 0.5).abs() < 1e-12);

        let practical = k.solve_c_beta(0.5, CBetaMode::Practical).unwrap();
        assert_eq!(practical.mode, CBetaMode::Practical);
        assert_eq!(practical.value, 160.0);
        assert!((practical.lhs - 0.125 / 0.9875f64.powi(2)).abs() < 1e-12);
        assert!(practical.lhs <= 0.5);

        let rademacher = DetectorConstants::derive(1.0, 0.1).unwrap();
        let root = rademacher.solve_c_beta(0.25, CBetaMode::Exact).unwrap();
        assert_eq!(root.value, 2.0 * 12.0 / 0.25);
    }

    #[test]
    fn practical_mode_falls_back_when_inadequate() {
        // K₁ large relative to 8K₂/β: the practical value violates the inequality.
        let k = DetectorConstants { c1: 0.0, c2: 0.0, k1: 500.0, k2: 10.0, alpha: 0.5 };
        let c = k.solve_c_beta(0.5, CBetaMode::Practical).unwrap();
        assert_eq!(c.mode, CBetaMode::Exact);
        assert!((c.lhs - 0.5).abs() < 1e-9);
    }

    #[test]
    fn margin_flag_raised_for_small_margins() {
        let k = DetectorConstants { c1: 0.0, c2: 0.0, k1: 1000.0, k2: 1.0, alpha: 0.5 };
        let c = k.solve_c_beta(0.9, CBetaMode::Exact).unwrap();
        assert!(c.margin < MARGIN_FLAG && c.margin_flag);
        let ok = DetectorConstants::derive(3.0, 0.05).unwrap().solve_c_beta(0.05, CBetaMode::Exact).unwrap();
        assert!(!ok.margin_flag);
    }

    #[test]
    fn select_bandwidth_examples() {
        // C_β ε² = 0.002 with C_β = 2 and ε² = 0.001
        let s = spec(OperatorFamily::well_posed(), 0.001f64.sqrt());
        let choice = select_bandwidth(&s, 2.0).unwrap();
        // grid-search oracle
        let g = |d: f64| 0.002 * d + 1.0 / (d * d);
        let oracle = (1..=1000).min_by(|&a, &b| g(a as f64).partial_cmp(&g(b as f64)).unwrap()).unwrap();
        assert_eq!(oracle, 10);
        assert_eq!(choice.d, 10);
        assert!((choice.value - 0.03).abs() < 1e-12);
        assert!((g(9.0) - 0.030345679).abs() < 1e-8 && (g(11.0) - 0.030264463).abs() < 1e-8);

        let loud = spec(OperatorFamily::well_posed(), 1e3);
        assert_eq!(select_bandwidth(&loud, 2.0).unwrap().d, 1);

        let quiet = spec(OperatorFamily::well_posed(), 0.0).with_d_max(500).unwrap();
        let c = select_bandwidth(&quiet, 2.0).unwrap();
        assert_eq!(c.d, 500);
        assert!(c.truncated);
    }

    #[test]
    fn calibrated_config_threshold_matches_formula() {
        let s = spec(OperatorFamily::mildly_ill_posed(1.0), 0.01);
        let cfg = DetectorConfig::calibrate(&s, 0.1, 0.1, None, CBetaMode::Exact).unwrap();
        assert!(cfg.c_beta.value > cfg.constants.k1);
        let sum = s.sum_inv_b_sq(cfg.d).unwrap().value;
        assert!((cfg.threshold - cfg.constants.k1 * 1e-4 * sum).abs() < 1e-15 * cfg.threshold.max(1.0));
        assert_eq!(cfg.d, select_bandwidth(&s, cfg.c_beta.value).unwrap().d);
        let fixed = DetectorConfig::calibrate(&s, 0.1, 0.1, Some(4), CBetaMode::Exact).unwrap();
        assert_eq!(fixed.d, 4);
    }

    #[test]
    fn threshold_dominates_gaussian_null_variance() {
        let k = DetectorConstants::derive(3.0, 0.1).unwrap();
        let s = ProblemSpec::new(OperatorFamily::mildly_ill_posed(0.5), SmoothnessFamily::ordinary(1.0), 0.3).unwrap();
        for d in [1usize, 2, 5, 10, 20] {
            let t = k.threshold(&s, d).unwrap();
            for cov in [
                CorrelationMatrix::identity(d),
                adversarial_sigma(&vec![0.99; d]).unwrap(),
                long_range_correlation(d, 0.6, 0.5).unwrap().matrix,
            ] {
                let v = null_variance_decomposition(&s, &cov, d).unwrap();
                assert!(t * t * k.alpha >= v.total());
            }
        }
    }

    proptest! {
        #[test]
        fn exact_root_residual(k1 in 0.0f64..50.0, k2 in 10.0f64..200.0, beta in 0.01f64..0.99) {
            let k = DetectorConstants { c1: 0.0, c2: 0.0, k1, k2, alpha: 0.5 };
            let c = k.solve_c_beta(beta, CBetaMode::Exact).unwrap();
            prop_assert!(c.value > k1);
            prop_assert!(((c.lhs - beta) / beta).abs() <= 1e-8);
        }
    }
}
