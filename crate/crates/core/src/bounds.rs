//! Upper and lower bounds on the minimax separation radius, the classical
//! (independent-noise) comparator, the ratio-regularity check and rate
//! fitting against the benchmark rate table.
//!
//! All radii are computed in the log domain; `ln_*` fields stay exact even
//! when the linear value under- or overflows.

use crate::detector::{select_bandwidth, CBetaMode, DetectorConstants};
use crate::error::{invalid, Error, Result};
use crate::search::{scan, Goal};
use crate::sequences::{ln_add_exp, OperatorFamily, ProblemSpec, SmoothnessFamily};

/// Threshold beyond which a consecutive-term ratio counts as degenerate in
/// [`check_hyp_ab`].
pub const RATIO_DEGENERACY: f64 = 1e-6;

/// Number of largest-`ε` grid points dropped before fitting a rate.
pub const DROPPED_LEADING_POINTS: usize = 2;

/// `C_{α,β} = 1 + 4(1 - α - β)²`
pub fn c_alpha_beta(alpha: f64, beta: f64) -> Result<f64> {
    check_levels(alpha, beta)?;
    Ok(1.0 + 4.0 * (1.0 - alpha - beta).powi(2))
}

/// Lower-bound constant `ln(C_{α,β})/4`.
pub fn lower_constant(alpha: f64, beta: f64) -> Result<f64> {
    Ok(c_alpha_beta(alpha, beta)?.ln() / 4.0)
}

fn check_levels(alpha: f64, beta: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(invalid("alpha", format!("must lie in (0, 1), got {alpha}")));
    }
    if !(beta > 0.0 && alpha + beta < 1.0) {
        return Err(invalid("beta", format!("need 0 < beta < 1 - alpha, got alpha={alpha}, beta={beta}")));
    }
    Ok(())
}

/// A squared radius together with its optimising bandwidth.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Radius {
    pub r2: f64,
    pub ln_r2: f64,
    pub d: usize,
    pub truncated: bool,
}

/// `inf_D [C_β ε² Σ_{k≤D} b_k^{-2} + a_D^{-2}]`
pub fn upper_radius_sq(spec: &ProblemSpec, c_beta: f64) -> Result<Radius> {
    let choice = select_bandwidth(spec, c_beta)?;
    Ok(Radius { r2: choice.value, ln_r2: choice.ln_value, d: choice.d, truncated: choice.truncated })
}

/// `sup_D [c ε² Σ_{k≤D} b_k^{-2} ∧ a_D^{-2}]` with `c = ln(C_{α,β})/4`.
pub fn lower_radius_sq(spec: &ProblemSpec, alpha: f64, beta: f64) -> Result<Radius> {
    let c = lower_constant(alpha, beta)?;
    Ok(lower_radius_with_constant(spec, c))
}

pub(crate) fn lower_radius_with_constant(spec: &ProblemSpec, c: f64) -> Radius {
    let ln_scale = c.ln() + 2.0 * spec.eps.ln();
    let best = scan(spec, Goal::Maximize, |t| (ln_scale + t.ln_s2).min(t.ln_bias));
    Radius { r2: best.ln_value.exp(), ln_r2: best.ln_value, d: best.d, truncated: best.truncated }
}

/// `inf_D [a_D^{-2} + ε² √(Σ_{k≤D} b_k^{-4})]`, the rate available under
/// weakly dependent Gaussian noise.
pub fn classical_upper_radius_sq(spec: &ProblemSpec) -> Radius {
    let ln_eps2 = 2.0 * spec.eps.ln();
    let best = scan(spec, Goal::Minimize, |t| ln_add_exp(ln_eps2 + 0.5 * t.ln_s4, t.ln_bias));
    Radius { r2: best.ln_value.exp(), ln_r2: best.ln_value, d: best.d, truncated: best.truncated }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RadiusBounds {
    pub lower: Radius,
    pub upper: Radius,
    /// `ln(C_{α,β})/4`
    pub c_lower: f64,
    pub c_beta: f64,
}

impl RadiusBounds {
    pub fn lower_r2(&self) -> f64 {
        self.lower.r2
    }

    pub fn upper_r2(&self) -> f64 {
        self.upper.r2
    }

    pub fn ln_ratio(&self) -> f64 {
        self.upper.ln_r2 - self.lower.ln_r2
    }
}

/// Both sides of the minimax radius sandwich. `C_β` is the exact or
/// practical root computed from the spec's class constant.
pub fn theorem1_bounds(spec: &ProblemSpec, alpha: f64, beta: f64, mode: CBetaMode) -> Result<RadiusBounds> {
    check_levels(alpha, beta)?;
    let constants = DetectorConstants::derive(spec.fourth_moment_bound, alpha)?;
    let c_beta = constants.solve_c_beta(beta, mode)?.value;
    let c_lower = lower_constant(alpha, beta)?;
    let lower = lower_radius_with_constant(spec, c_lower);
    let upper = upper_radius_sq(spec, c_beta)?;
    assert!(
        lower.ln_r2 <= upper.ln_r2,
        "lower bound {} exceeds upper bound {} (eps = {})",
        lower.r2,
        upper.r2,
        spec.eps
    );
    Ok(RadiusBounds { lower, upper, c_lower, c_beta })
}

/// Extremes of consecutive ratios `a_{D-1}/a_D` and `b_{D-1}/b_D`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HypAbReport {
    pub a_star: f64,
    pub a_sup: f64,
    pub b_star: f64,
    pub b_sup: f64,
    pub holds: bool,
}

pub fn check_hyp_ab(spec: &ProblemSpec, d_probe: usize) -> Result<HypAbReport> {
    if d_probe < 2 {
        return Err(invalid("D_probe", "must be at least 2"));
    }
    spec.check_bandwidth(d_probe)?;
    let mut r = HypAbReport { a_star: f64::INFINITY, a_sup: 0.0, b_star: f64::INFINITY, b_sup: 0.0, holds: true };
    for d in 2..=d_probe {
        let ra = (spec.smoothness.ln_value(d - 1) - spec.smoothness.ln_value(d)).exp();
        let rb = (spec.operator.ln_value(d - 1) - spec.operator.ln_value(d)).exp();
        r.a_star = r.a_star.min(ra);
        r.a_sup = r.a_sup.max(ra);
        r.b_star = r.b_star.min(rb);
        r.b_sup = r.b_sup.max(rb);
    }
    let bounded = |lo: f64, hi: f64| lo >= RATIO_DEGENERACY && hi <= 1.0 / RATIO_DEGENERACY;
    r.holds = bounded(r.a_star, r.a_sup) && bounded(r.b_star, r.b_sup);
    Ok(r)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FitMode {
    /// Slope of `ln r²` against `ln ε`.
    LogEps,
    /// Slope of `ln r²` against `ln ln(1/ε)`.
    LogLogEps,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RateFit {
    pub exponent: f64,
    pub intercept: f64,
    pub r_squared_of_fit: f64,
    /// `(ε, r²)` pairs used in the fit (after dropping the leading points).
    pub grid: Vec<(f64, f64)>,
    pub dropped: usize,
}

/// Least-squares rate exponent from `(ε, r²)` pairs with `ε` strictly
/// decreasing. The two largest-`ε` points are dropped first.
pub fn fit_rate(values: &[(f64, f64)], mode: FitMode) -> Result<RateFit> {
    if values.iter().any(|&(e, r)| !(e > 0.0 && r > 0.0 && e.is_finite() && r.is_finite())) {
        return Err(Error::DegenerateGrid("eps and r2 must be positive and finite".into()));
    }
    let logs: Vec<(f64, f64)> = values.iter().map(|&(e, r)| (e.ln(), r.ln())).collect();
    fit_rate_ln(&logs, mode)
}

/// As [`fit_rate`], from `(ln ε, ln r²)` pairs. Use this for grids deep
/// enough that `ε²` or `r²` leave `f64` range.
pub fn fit_rate_ln(values: &[(f64, f64)], mode: FitMode) -> Result<RateFit> {
    if values.len() < 5 {
        return Err(Error::DegenerateGrid(format!("need at least 5 grid points, got {}", values.len())));
    }
    if values.windows(2).any(|w| !(w[1].0 < w[0].0)) {
        return Err(Error::DegenerateGrid("eps must be strictly decreasing".into()));
    }
    if values.iter().any(|&(le, lr)| !(le.is_finite() && lr.is_finite())) {
        return Err(Error::DegenerateGrid("non-finite grid value".into()));
    }
    if mode == FitMode::LogLogEps && values.iter().any(|&(le, _)| le >= 0.0) {
        return Err(Error::DegenerateGrid("log-log mode needs eps < 1".into()));
    }
    let used = &values[DROPPED_LEADING_POINTS..];
    let xs: Vec<f64> = used
        .iter()
        .map(|&(le, _)| match mode {
            FitMode::LogEps => le,
            FitMode::LogLogEps => (-le).ln(),
        })
        .collect();
    let ys: Vec<f64> = used.iter().map(|&(_, lr)| lr).collect();
    let (slope, intercept, r2) = least_squares(&xs, &ys);
    Ok(RateFit {
        exponent: slope,
        intercept,
        r_squared_of_fit: r2,
        grid: used.iter().map(|&(le, lr)| (le.exp(), lr.exp())).collect(),
        dropped: DROPPED_LEADING_POINTS,
    })
}

/// Ordinary least squares `y ≈ a + b x`; returns `(b, a, R²)`.
pub fn least_squares(xs: &[f64], ys: &[f64]) -> (f64, f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for (&x, &y) in xs.iter().zip(ys) {
        sxx += (x - mx) * (x - mx);
        sxy += (x - mx) * (y - my);
        syy += (y - my) * (y - my);
    }
    let slope = sxy / sxx;
    let r2 = if syy > 0.0 { sxy * sxy / (sxx * syy) } else { 1.0 };
    (slope, my - slope * mx, r2)
}

/// One cell of the benchmark table: an operator class crossed with a
/// smoothness class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RateCell {
    WellPosedOrdinary,
    WellPosedSuper,
    MildOrdinary,
    MildSuper,
    SevereOrdinary,
    SevereSuper,
}

impl RateCell {
    pub const ALL: [RateCell; 6] = [
        RateCell::WellPosedOrdinary,
        RateCell::WellPosedSuper,
        RateCell::MildOrdinary,
        RateCell::MildSuper,
        RateCell::SevereOrdinary,
        RateCell::SevereSuper,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            RateCell::WellPosedOrdinary => "well_posed/ordinary_smooth",
            RateCell::WellPosedSuper => "well_posed/super_smooth",
            RateCell::MildOrdinary => "mildly_ill_posed/ordinary_smooth",
            RateCell::MildSuper => "mildly_ill_posed/super_smooth",
            RateCell::SevereOrdinary => "severely_ill_posed/ordinary_smooth",
            RateCell::SevereSuper => "severely_ill_posed/super_smooth",
        }
    }

    pub fn parse(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|c| c.name() == name)
    }

    pub fn family(&self, t: f64, s: f64) -> (OperatorFamily, SmoothnessFamily) {
        use RateCell::*;
        let op = match self {
            WellPosedOrdinary | WellPosedSuper => OperatorFamily::well_posed(),
            MildOrdinary | MildSuper => OperatorFamily::mildly_ill_posed(t),
            SevereOrdinary | SevereSuper => OperatorFamily::severely_ill_posed(t),
        };
        let sm = match self {
            WellPosedOrdinary | MildOrdinary | SevereOrdinary => SmoothnessFamily::ordinary(s),
            _ => SmoothnessFamily::super_smooth(s),
        };
        (op, sm)
    }

    /// Cell and `(t, s)` of a spec built from named, unscaled families.
    /// `t` is reported as 0 for well-posed operators.
    pub fn classify(spec: &ProblemSpec) -> Option<(RateCell, f64, f64)> {
        use crate::sequences::{OperatorKind as O, SmoothnessKind as S};
        if spec.operator.scale != 1.0 || spec.smoothness.scale != 1.0 {
            return None;
        }
        let (cell, t, s) = match (&spec.operator.kind, &spec.smoothness.kind) {
            (O::WellPosed, S::OrdinarySmooth { s }) => (RateCell::WellPosedOrdinary, 0.0, *s),
            (O::WellPosed, S::SuperSmooth { s }) => (RateCell::WellPosedSuper, 0.0, *s),
            (O::MildlyIllPosed { t }, S::OrdinarySmooth { s }) => (RateCell::MildOrdinary, *t, *s),
            (O::MildlyIllPosed { t }, S::SuperSmooth { s }) => (RateCell::MildSuper, *t, *s),
            (O::SeverelyIllPosed { t }, S::OrdinarySmooth { s }) => (RateCell::SevereOrdinary, *t, *s),
            (O::SeverelyIllPosed { t }, S::SuperSmooth { s }) => (RateCell::SevereSuper, *t, *s),
            _ => return None,
        };
        Some((cell, t, s))
    }

    /// Power cells have a pure `ε^γ` rate; the rest carry a logarithm.
    pub fn is_power(&self) -> bool {
        matches!(self, RateCell::WellPosedOrdinary | RateCell::MildOrdinary | RateCell::SevereSuper)
    }

    /// Mixed cells `ε²(ln 1/ε)^κ` are fitted on `r²/ε²`.
    pub fn divides_by_eps_sq(&self) -> bool {
        matches!(self, RateCell::WellPosedSuper | RateCell::MildSuper)
    }

    pub fn mode(&self) -> FitMode {
        if self.is_power() {
            FitMode::LogEps
        } else {
            FitMode::LogLogEps
        }
    }

    pub fn tolerance(&self) -> f64 {
        if self.is_power() {
            0.05
        } else {
            0.3
        }
    }

    /// Tabulated exponent in the cell's fit mode.
    pub fn expected_exponent(&self, t: f64, s: f64) -> f64 {
        match self {
            RateCell::WellPosedOrdinary => 4.0 * s / (2.0 * s + 1.0),
            RateCell::MildOrdinary => 4.0 * s / (2.0 * s + 2.0 * t + 1.0),
            RateCell::SevereSuper => 4.0 * s / (2.0 * s + 2.0 * t),
            RateCell::SevereOrdinary => -2.0 * s,
            RateCell::WellPosedSuper => 1.0,
            RateCell::MildSuper => 2.0 * t + 1.0,
        }
    }

    /// Fits the cell's exponent from `(ln ε, ln r²)` pairs.
    pub fn fit(&self, points: &[(f64, f64)]) -> Result<RateFit> {
        let adjusted: Vec<(f64, f64)> = if self.divides_by_eps_sq() {
            points.iter().map(|&(le, lr)| (le, lr - 2.0 * le)).collect()
        } else {
            points.to_vec()
        };
        fit_rate_ln(&adjusted, self.mode())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sequences::{OperatorFamily as Op, SmoothnessFamily as Sm};
    use proptest::prelude::*;

    fn spec(op: Op, sm: Sm, eps: f64) -> ProblemSpec {
        ProblemSpec::new(op, sm, eps).unwrap()
    }

    #[test]
    fn lower_constant_example() {
        assert!((c_alpha_beta(0.05, 0.05).unwrap() - 4.24).abs() < 1e-12);
        assert!((lower_constant(0.05, 0.05).unwrap() - 0.36114).abs() < 1e-5);
        assert!(lower_radius_sq(&spec(Op::well_posed(), Sm::ordinary(1.0), 0.1), 0.6, 0.4).is_err());
    }

    #[test]
    fn upper_radius_examples() {
        let s = spec(Op::well_posed(), Sm::ordinary(1.0), 0.001f64.sqrt());
        let r = upper_radius_sq(&s, 2.0).unwrap();
        assert_eq!(r.d, 10);
        assert!((r.r2 - 0.03).abs() < 1e-12);
        let loud = spec(Op::mildly_ill_posed(1.0), Sm::ordinary(1.0), 100.0);
        let r = upper_radius_sq(&loud, 3.0).unwrap();
        assert_eq!(r.d, 1);
        assert!((r.r2 - (3.0 * 1e4 + 1.0)).abs() < 1e-9);
        let mut previous = f64::INFINITY;
        for eps in [0.5, 0.2, 0.1, 0.05, 0.01, 0.001] {
            let r = upper_radius_sq(&s.with_eps(eps).unwrap(), 50.0).unwrap().r2;
            assert!(r <= previous);
            previous = r;
        }
    }

    #[test]
    fn lower_radius_examples() {
        // c ε² = 0.001 with c = 1
        let s = spec(Op::well_posed(), Sm::ordinary(1.0), 0.001f64.sqrt());
        let r = lower_radius_with_constant(&s, 1.0);
        let oracle = (1..=1000usize)
            .map(|d| (d, (0.001 * d as f64).min(1.0 / (d * d) as f64)))
            .fold((0, f64::NEG_INFINITY), |acc, x| if x.1 > acc.1 { x } else { acc });
        assert_eq!(oracle.0, 10);
        assert_eq!(r.d, 10);
        assert!((r.r2 - 0.01).abs() < 1e-12);
    }

    #[test]
    fn lower_maximiser_at_or_beyond_crossover() {
        let s = spec(Op::mildly_ill_posed(0.5), Sm::ordinary(1.5), 0.01);
        let c = 0.3;
        let r = lower_radius_with_constant(&s, c);
        let crossover = (1..=s.max_bandwidth())
            .take_while(|&d| s.bias_term(d).unwrap() >= c * 1e-4 * s.sum_inv_b_sq(d).unwrap().value)
            .last()
            .unwrap();
        assert!(r.d >= crossover);
    }

    #[test]
    fn theorem1_example_at_eps_tenth() {
        let s = spec(Op::well_posed(), Sm::ordinary(1.0), 0.1);
        let b = theorem1_bounds(&s, 0.05, 0.05, CBetaMode::Exact).unwrap();
        let c_lower = lower_constant(0.05, 0.05).unwrap();
        let k = DetectorConstants::derive(3.0, 0.05).unwrap();
        let c_beta = k.solve_c_beta(0.05, CBetaMode::Exact).unwrap().value;
        // brute-force oracles over D
        let up = (1..=2000).map(|d| c_beta * 0.01 * d as f64 + 1.0 / (d * d) as f64).fold(f64::INFINITY, f64::min);
        let lo = (1..=2000).map(|d| (c_lower * 0.01 * d as f64).min(1.0 / (d * d) as f64)).fold(0.0, f64::max);
        assert!((b.upper_r2() - up).abs() < 1e-12 * up);
        assert!((b.lower_r2() - lo).abs() < 1e-12 * lo);
        assert!(b.lower_r2() <= b.upper_r2());
    }

    #[test]
    fn classical_examples() {
        // ε → 0: bias only, so the minimiser runs to D_max
        let s = spec(Op::well_posed(), Sm::ordinary(1.0), 0.0).with_d_max(300).unwrap();
        let r = classical_upper_radius_sq(&s);
        assert_eq!(r.d, 300);
        assert!((r.r2 - 1.0 / 90000.0).abs() < 1e-15);

        // exponent 8s/(4s+1) for b = 1, a_k = k^s
        for s_exp in [1.0, 2.0] {
            let base = spec(Op::well_posed(), Sm::ordinary(s_exp), 1.0);
            let pts: Vec<(f64, f64)> = (8..=20)
                .map(|j| {
                    let eps = 2f64.powi(-j);
                    (eps.ln(), classical_upper_radius_sq(&base.with_eps(eps).unwrap()).ln_r2)
                })
                .collect();
            let fit = fit_rate_ln(&pts, FitMode::LogEps).unwrap();
            let expected = 8.0 * s_exp / (4.0 * s_exp + 1.0);
            assert!((fit.exponent - expected).abs() < 0.02, "{} vs {expected}", fit.exponent);
        }
    }

    #[test]
    fn classical_below_general_upper_at_small_eps() {
        for op in [Op::well_posed(), Op::mildly_ill_posed(1.0)] {
            let s = spec(op, Sm::ordinary(1.0), 1e-4);
            let classical = classical_upper_radius_sq(&s).r2;
            let general = upper_radius_sq(&s, 1.0).unwrap().r2;
            assert!(classical <= general);
        }
    }

    #[test]
    fn hyp_ab_examples() {
        let ord = check_hyp_ab(&spec(Op::mildly_ill_posed(1.0), Sm::ordinary(2.0), 0.1), 500).unwrap();
        assert!(ord.holds);
        assert!((ord.a_star - 0.25).abs() < 1e-12 && ord.a_sup < 1.0);
        let sup = check_hyp_ab(&spec(Op::severely_ill_posed(0.5), Sm::super_smooth(0.7), 0.1), 200).unwrap();
        assert!(sup.holds);
        assert!((sup.a_star - (-0.7f64).exp()).abs() < 1e-12 && (sup.a_sup - sup.a_star).abs() < 1e-12);
        assert!((sup.b_star - 0.5f64.exp()).abs() < 1e-12);
        // power-exponential a_k = e^{k² s}
        let pe: Vec<f64> = (1..=20).map(|k| (0.5 * (k * k) as f64).exp()).collect();
        let bad = check_hyp_ab(&spec(Op::well_posed(), Sm::custom(pe), 0.1), 20).unwrap();
        assert!(!bad.holds);
        assert!(bad.a_star < RATIO_DEGENERACY);
    }

    #[test]
    fn fit_rate_rejects_degenerate_grids() {
        let pts = [(0.5, 1.0), (0.25, 0.5), (0.125, 0.25), (0.0625, 0.125)];
        assert!(fit_rate(&pts, FitMode::LogEps).is_err());
        let inc = [(0.1, 1.0), (0.2, 1.0), (0.3, 1.0), (0.4, 1.0), (0.5, 1.0)];
        assert!(fit_rate(&inc, FitMode::LogEps).is_err());
        let neg = [(0.5, 1.0), (0.25, 0.0), (0.125, 0.25), (0.0625, 0.125), (0.01, 0.1)];
        assert!(fit_rate(&neg, FitMode::LogEps).is_err());
    }

    #[test]
    fn fit_rate_recovers_synthetic_exponents() {
        let grid: Vec<f64> = (4..=14).map(|j| 2f64.powi(-j)).collect();
        let power: Vec<(f64, f64)> = grid.iter().map(|&e| (e, 3.0 * e.powf(1.25))).collect();
        let f = fit_rate(&power, FitMode::LogEps).unwrap();
        assert!((f.exponent - 1.25).abs() < 1e-12 && (f.r_squared_of_fit - 1.0).abs() < 1e-12);
        assert_eq!(f.grid.len(), 9);
        let log: Vec<(f64, f64)> = grid.iter().map(|&e| (e, (1.0 / e).ln().powf(-2.0))).collect();
        assert!((fit_rate(&log, FitMode::LogLogEps).unwrap().exponent + 2.0).abs() < 1e-12);
    }

    #[derive(Clone, Copy)]
    enum Side {
        Lower,
        Upper,
        Classical,
    }

    /// Points `(ln ε, ln r²)` over a grid for one side of the bounds.
    fn cell_points(cell: RateCell, t: f64, s: f64, eps: &[f64], side: Side) -> Vec<(f64, f64)> {
        let (op, sm) = cell.family(t, s);
        let base = spec(op, sm, 1.0).with_d_max(1 << 20).unwrap();
        eps.iter()
            .map(|&e| {
                let at = base.with_eps(e).unwrap();
                let b = theorem1_bounds(&at, 0.05, 0.05, CBetaMode::Exact).unwrap();
                let v = match side {
                    Side::Lower => b.lower,
                    Side::Upper => b.upper,
                    Side::Classical => classical_upper_radius_sq(&at),
                };
                assert!(!v.truncated);
                (e.ln(), v.ln_r2)
            })
            .collect()
    }

    fn grid(base: f64, first: i32) -> Vec<f64> {
        (0..11).map(|j| base.powi(-(first + j))).collect()
    }

    /// Per-cell grid deep enough for the asymptotic regime to dominate the
    /// large type II constant.
    fn asymptotic_grid(cell: RateCell) -> Vec<f64> {
        match cell {
            RateCell::WellPosedOrdinary => grid(2.0, 4),
            RateCell::MildOrdinary => grid(10.0, 4),
            _ => grid(1e20, 1),
        }
    }

    #[test]
    fn lower_bound_reproduces_rate_table() {
        let eps = grid(2.0, 4);
        for cell in RateCell::ALL {
            let fit = cell.fit(&cell_points(cell, 1.0, 1.0, &eps, Side::Lower)).unwrap();
            let expected = cell.expected_exponent(1.0, 1.0);
            assert!((fit.exponent - expected).abs() <= cell.tolerance(), "{}: {} vs {expected}", cell.name(), fit.exponent);
        }
    }

    #[test]
    fn upper_bound_reproduces_rate_table_on_asymptotic_grids() {
        for cell in RateCell::ALL {
            let fit = cell.fit(&cell_points(cell, 1.0, 1.0, &asymptotic_grid(cell), Side::Upper)).unwrap();
            let expected = cell.expected_exponent(1.0, 1.0);
            assert!((fit.exponent - expected).abs() <= cell.tolerance(), "{}: {} vs {expected}", cell.name(), fit.exponent);
        }
    }

    #[test]
    fn severe_classical_and_general_rates_coincide() {
        for cell in [RateCell::SevereOrdinary, RateCell::SevereSuper] {
            let eps = asymptotic_grid(cell);
            let general = cell.fit(&cell_points(cell, 1.0, 1.0, &eps, Side::Upper)).unwrap().exponent;
            let classical = cell.fit(&cell_points(cell, 1.0, 1.0, &eps, Side::Classical)).unwrap().exponent;
            assert!((general - classical).abs() <= 0.05, "{}: {general} vs {classical}", cell.name());
        }
    }

    #[test]
    fn mild_classical_rate_is_faster() {
        for s_exp in [1.0, 2.0] {
            let cell = RateCell::MildOrdinary;
            let eps = grid(10f64.sqrt(), 8);
            let general = cell.fit(&cell_points(cell, 1.0, s_exp, &eps, Side::Upper)).unwrap().exponent;
            let classical = cell.fit(&cell_points(cell, 1.0, s_exp, &eps, Side::Classical)).unwrap().exponent;
            assert!(classical > general, "s = {s_exp}: {classical} vs {general}");
        }
    }

    fn any_spec() -> impl Strategy<Value = ProblemSpec> {
        let op = prop_oneof![
            Just(Op::well_posed()),
            (0.25f64..2.0).prop_map(Op::mildly_ill_posed),
            (0.25f64..2.0).prop_map(Op::severely_ill_posed),
        ];
        let sm = prop_oneof![(0.5f64..3.0).prop_map(Sm::ordinary), (0.5f64..3.0).prop_map(Sm::super_smooth)];
        (op, sm, -12.0f64..0.0).prop_map(|(o, m, le)| spec(o, m, 10f64.powf(le)))
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn bounds_are_ordered(s in any_spec(), alpha in 0.01f64..0.5, beta in 0.01f64..0.49) {
            let b = theorem1_bounds(&s, alpha, beta, CBetaMode::Exact).unwrap();
            prop_assert!(b.lower.r2 > 0.0);
            prop_assert!(b.lower.ln_r2 <= b.upper.ln_r2);
        }

        #[test]
        fn upper_radius_is_the_grid_minimum(s in any_spec(), c_beta in 1.0f64..5000.0) {
            let r = upper_radius_sq(&s, c_beta).unwrap();
            prop_assume!(!r.truncated);
            let eps2 = s.eps * s.eps;
            for d in 1..=(r.d + 80).min(s.max_bandwidth()) {
                let sum = s.sum_inv_b_sq(d).unwrap();
                prop_assume!(!sum.overflowed);
                let v = c_beta * eps2 * sum.value + s.bias_term(d).unwrap();
                prop_assert!(r.r2 <= v * (1.0 + 1e-9));
            }
        }
    }
}
