//! Operator spectra, smoothness sequences, the ellipsoid and the spectral
//! partial sums every other module is built on.
//!
//! Sequence values are evaluated by formula on demand. Sums of `b_k^{-2}` and
//! `b_k^{-4}` use Neumaier compensated summation; for severely ill-posed
//! spectra the terms leave `f64` range near `k ≈ 355/t`, in which case the
//! sum saturates at `+∞` and is flagged rather than panicking. Bandwidth
//! searches use the log-domain prefix sums in [`LogPrefixSum`], which never
//! overflow.

use crate::error::{invalid, Error, Result};

/// Default truncation of the index set for searches over the bandwidth.
pub const DEFAULT_D_MAX: usize = 1 << 16;

/// Relative slack on the ellipsoid constraint `Σ a_k² θ_k² ≤ 1`, absorbing
/// rounding in `r = a_D^{-1}`.
pub const ELLIPSOID_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub enum OperatorKind {
    WellPosed,
    /// `b_k = scale · k^{-t}`
    MildlyIllPosed { t: f64 },
    /// `b_k = scale · e^{-kt}`
    SeverelyIllPosed { t: f64 },
    /// Explicit positive values `b_1, …, b_n`.
    Custom(Vec<f64>),
}

/// The known operator spectrum `b = (b_k)`.
#[derive(Debug, Clone, PartialEq)]
pub struct OperatorFamily {
    pub kind: OperatorKind,
    pub scale: f64,
}

impl OperatorFamily {
    pub fn well_posed() -> Self {
        Self { kind: OperatorKind::WellPosed, scale: 1.0 }
    }

    pub fn mildly_ill_posed(t: f64) -> Self {
        Self { kind: OperatorKind::MildlyIllPosed { t }, scale: 1.0 }
    }

    pub fn severely_ill_posed(t: f64) -> Self {
        Self { kind: OperatorKind::SeverelyIllPosed { t }, scale: 1.0 }
    }

    pub fn custom(values: Vec<f64>) -> Self {
        Self { kind: OperatorKind::Custom(values), scale: 1.0 }
    }

    pub fn with_scale(mut self, scale: f64) -> Self {
        self.scale = scale;
        self
    }

    fn validate(&self) -> Result<()> {
        if !(self.scale > 0.0 && self.scale.is_finite()) {
            return Err(invalid("operator.scale", format!("must be positive and finite, got {}", self.scale)));
        }
        match &self.kind {
            OperatorKind::WellPosed => Ok(()),
            OperatorKind::MildlyIllPosed { t } | OperatorKind::SeverelyIllPosed { t } => {
                if *t > 0.0 && t.is_finite() {
                    Ok(())
                } else {
                    Err(invalid("operator.t", format!("must be positive, got {t}")))
                }
            }
            OperatorKind::Custom(v) => {
                if v.is_empty() || v.iter().any(|&b| !(b > 0.0 && b.is_finite())) {
                    Err(invalid("operator", "custom spectrum must be non-empty with positive finite entries"))
                } else {
                    Ok(())
                }
            }
        }
    }

    /// Number of defined coefficients (`None` for the infinite named kinds).
    pub fn len(&self) -> Option<usize> {
        match &self.kind {
            OperatorKind::Custom(v) => Some(v.len()),
            _ => None,
        }
    }

    /// `b_k` for `k ≥ 1`. May underflow to 0 for severely ill-posed spectra.
    pub fn value(&self, k: usize) -> f64 {
        self.ln_value(k).exp()
    }

    /// `ln b_k`, exact in the log domain for every named kind.
    pub fn ln_value(&self, k: usize) -> f64 {
        debug_assert!(k >= 1);
        let kf = k as f64;
        let base = match &self.kind {
            OperatorKind::WellPosed => 0.0,
            OperatorKind::MildlyIllPosed { t } => -t * kf.ln(),
            OperatorKind::SeverelyIllPosed { t } => -t * kf,
            OperatorKind::Custom(v) => v[k - 1].ln(),
        };
        base + self.scale.ln()
    }

    /// `b_k^{-2}`, `+∞` once it leaves `f64` range.
    pub fn inv_sq(&self, k: usize) -> f64 {
        match &self.kind {
            OperatorKind::WellPosed => 1.0 / (self.scale * self.scale),
            OperatorKind::MildlyIllPosed { t } => (k as f64).powf(2.0 * t) / (self.scale * self.scale),
            OperatorKind::Custom(v) => {
                let b = v[k - 1] * self.scale;
                1.0 / (b * b)
            }
            OperatorKind::SeverelyIllPosed { .. } => (-2.0 * self.ln_value(k)).exp(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum SmoothnessKind {
    /// `a_k = scale · k^{s}`
    OrdinarySmooth { s: f64 },
    /// `a_k = scale · e^{ks}`
    SuperSmooth { s: f64 },
    /// Explicit values `a_1, …, a_n`.
    Custom(Vec<f64>),
}

/// The smoothness sequence `a = (a_k)` defining the ellipsoid
/// `Σ a_k² θ_k² ≤ 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct SmoothnessFamily {
    pub kind: SmoothnessKind,
    pub scale: f64,
}

impl SmoothnessFamily {
    pub fn ordinary(s: f64) -> Self {
        Self { kind: SmoothnessKind::OrdinarySmooth { s }, scale: 1.0 }
    }

    pub fn super_smooth(s: f64) -> Self {
        Self { kind: SmoothnessKind::SuperSmooth { s }, scale: 1.0 }
    }

    pub fn custom(values: Vec<f64>) -> Self {
        Self { kind: SmoothnessKind::Custom(values), scale: 1.0 }
    }

    pub fn with_scale(mut self, scale: f64) -> Self {
        self.scale = scale;
        self
    }

    fn validate(&self) -> Result<()> {
        if !(self.scale > 0.0 && self.scale.is_finite()) {
            return Err(invalid("smoothness.scale", format!("must be positive and finite, got {}", self.scale)));
        }
        match &self.kind {
            SmoothnessKind::OrdinarySmooth { s } | SmoothnessKind::SuperSmooth { s } => {
                if *s > 0.0 && s.is_finite() {
                    Ok(())
                } else {
                    Err(invalid("smoothness.s", format!("must be positive, got {s}")))
                }
            }
            SmoothnessKind::Custom(v) => {
                if v.is_empty() || v.iter().any(|&a| !(a > 0.0 && a.is_finite())) {
                    return Err(invalid("smoothness", "custom sequence must be non-empty with positive finite entries"));
                }
                if v.windows(2).any(|w| w[1] < w[0]) {
                    return Err(invalid("smoothness", "custom sequence must be non-decreasing"));
                }
                Ok(())
            }
        }
    }

    pub fn len(&self) -> Option<usize> {
        match &self.kind {
            SmoothnessKind::Custom(v) => Some(v.len()),
            _ => None,
        }
    }

    pub fn ln_value(&self, k: usize) -> f64 {
        debug_assert!(k >= 1);
        let kf = k as f64;
        let base = match &self.kind {
            SmoothnessKind::OrdinarySmooth { s } => s * kf.ln(),
            SmoothnessKind::SuperSmooth { s } => s * kf,
            SmoothnessKind::Custom(v) => v[k - 1].ln(),
        };
        base + self.scale.ln()
    }

    /// `a_k`, `+∞` once it leaves `f64` range.
    pub fn value(&self, k: usize) -> f64 {
        match &self.kind {
            SmoothnessKind::OrdinarySmooth { s } => self.scale * (k as f64).powf(*s),
            SmoothnessKind::Custom(v) => self.scale * v[k - 1],
            SmoothnessKind::SuperSmooth { .. } => self.ln_value(k).exp(),
        }
    }

    /// `a_k^{-2}`; underflows gracefully to 0.
    pub fn inv_sq(&self, k: usize) -> f64 {
        (-2.0 * self.ln_value(k)).exp()
    }

    /// Weighted norm `Σ a_k² θ_k²` and the membership verdict.
    pub fn ellipsoid_membership(&self, theta: &Signal) -> Result<EllipsoidCheck> {
        if let Some(n) = self.len() {
            if let Some(last) = theta.coefficients().iter().rposition(|&x| x != 0.0) {
                if last + 1 > n {
                    return Err(Error::DimensionMismatch { expected: n, actual: last + 1 });
                }
            }
        }
        let mut acc = CompensatedSum::default();
        for (i, &x) in theta.coefficients().iter().enumerate() {
            if x != 0.0 {
                let a = self.value(i + 1);
                acc.add(a * a * x * x);
            }
        }
        let weighted = acc.value();
        Ok(EllipsoidCheck { weighted, inside: weighted <= 1.0 + ELLIPSOID_TOL })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EllipsoidCheck {
    pub weighted: f64,
    pub inside: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IndexMode {
    Infinite,
    Finite(usize),
}

/// Experiment geometry: `y_k = b_k θ_k + ε ξ_k` with `θ` in the ellipsoid
/// defined by `a` and `ξ` in the fourth-moment class with constant `C`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProblemSpec {
    pub operator: OperatorFamily,
    pub smoothness: SmoothnessFamily,
    pub eps: f64,
    pub index_mode: IndexMode,
    pub fourth_moment_bound: f64,
    pub d_max: usize,
}

impl ProblemSpec {
    pub fn new(operator: OperatorFamily, smoothness: SmoothnessFamily, eps: f64) -> Result<Self> {
        let spec = Self {
            operator,
            smoothness,
            eps,
            index_mode: IndexMode::Infinite,
            fourth_moment_bound: 3.0,
            d_max: DEFAULT_D_MAX,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn with_fourth_moment_bound(mut self, c: f64) -> Result<Self> {
        self.fourth_moment_bound = c;
        self.validate()?;
        Ok(self)
    }

    pub fn with_index_mode(mut self, mode: IndexMode) -> Result<Self> {
        self.index_mode = mode;
        self.validate()?;
        Ok(self)
    }

    pub fn with_d_max(mut self, d_max: usize) -> Result<Self> {
        self.d_max = d_max;
        self.validate()?;
        Ok(self)
    }

    /// Same geometry at another noise level.
    pub fn with_eps(&self, eps: f64) -> Result<Self> {
        let mut spec = self.clone();
        spec.eps = eps;
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        self.operator.validate()?;
        self.smoothness.validate()?;
        if !(self.eps >= 0.0 && self.eps.is_finite()) {
            return Err(invalid("eps", format!("must be finite and non-negative, got {}", self.eps)));
        }
        if !(self.fourth_moment_bound >= 1.0 && self.fourth_moment_bound.is_finite()) {
            return Err(invalid("C", format!("fourth-moment bound must be >= 1, got {}", self.fourth_moment_bound)));
        }
        if self.d_max == 0 {
            return Err(invalid("D_max", "must be at least 1"));
        }
        if let IndexMode::Finite(0) = self.index_mode {
            return Err(invalid("index_mode", "finite index set must be non-empty"));
        }
        Ok(())
    }

    /// Largest admissible bandwidth: `D_max`, capped by a finite index set
    /// and by the length of custom sequences.
    pub fn max_bandwidth(&self) -> usize {
        let mut m = match self.index_mode {
            IndexMode::Infinite => self.d_max,
            IndexMode::Finite(n) => n.min(self.d_max),
        };
        if let Some(n) = self.operator.len() {
            m = m.min(n);
        }
        if let Some(n) = self.smoothness.len() {
            m = m.min(n);
        }
        m
    }

    pub fn check_bandwidth(&self, d: usize) -> Result<()> {
        let max = self.max_bandwidth();
        if d == 0 || d > max {
            Err(Error::BandwidthOutOfRange { bandwidth: d, max })
        } else {
            Ok(())
        }
    }

    /// `Σ_{k=1}^D b_k^{-2}`
    pub fn sum_inv_b_sq(&self, d: usize) -> Result<SpectralSum> {
        self.check_bandwidth(d)?;
        Ok(SpectralSum::accumulate((1..=d).map(|k| self.operator.inv_sq(k))))
    }

    /// `Σ_{k=1}^D b_k^{-4}`
    pub fn sum_inv_b_4(&self, d: usize) -> Result<SpectralSum> {
        self.check_bandwidth(d)?;
        Ok(SpectralSum::accumulate((1..=d).map(|k| {
            let v = self.operator.inv_sq(k);
            v * v
        })))
    }

    /// The bias term `a_D^{-2}`.
    pub fn bias_term(&self, d: usize) -> Result<f64> {
        self.check_bandwidth(d)?;
        Ok(self.smoothness.inv_sq(d))
    }

    /// Canonical alternative: mass `r` at coordinate `D`, zero elsewhere.
    pub fn boundary_signal(&self, d: usize, r: f64) -> Result<Signal> {
        self.check_bandwidth(d)?;
        if !(r >= 0.0 && r.is_finite()) {
            return Err(invalid("r", format!("must be finite and non-negative, got {r}")));
        }
        let weighted = r * r / self.smoothness.inv_sq(d);
        if weighted > 1.0 + ELLIPSOID_TOL {
            return Err(Error::OutsideEllipsoid { weighted });
        }
        let mut coefficients = vec![0.0; d];
        coefficients[d - 1] = r;
        Ok(Signal::new(coefficients))
    }
}

/// Result of a spectral partial sum. `overflowed` is set when a term or the
/// running total left `f64` range; `value` is then `+∞`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectralSum {
    pub value: f64,
    pub overflowed: bool,
}

impl SpectralSum {
    fn accumulate(terms: impl IntoIterator<Item = f64>) -> Self {
        let mut acc = CompensatedSum::default();
        for term in terms {
            if !term.is_finite() {
                return Self { value: f64::INFINITY, overflowed: true };
            }
            acc.add(term);
        }
        let value = acc.value();
        Self { value, overflowed: !value.is_finite() }
    }
}

/// Neumaier's variant of Kahan summation.
#[derive(Debug, Clone, Copy, Default)]
pub struct CompensatedSum {
    sum: f64,
    compensation: f64,
}

impl CompensatedSum {
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.compensation += (self.sum - t) + x;
        } else {
            self.compensation += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.compensation
    }
}

/// Running `ln Σ_{k≤D} exp(x_k)`; used to evaluate bandwidth objectives for
/// spectra whose terms overflow in the linear domain.
#[derive(Debug, Clone, Copy)]
pub struct LogPrefixSum {
    ln_total: f64,
}

impl Default for LogPrefixSum {
    fn default() -> Self {
        Self { ln_total: f64::NEG_INFINITY }
    }
}

impl LogPrefixSum {
    pub fn push(&mut self, ln_term: f64) -> f64 {
        self.ln_total = ln_add_exp(self.ln_total, ln_term);
        self.ln_total
    }

    pub fn ln_value(&self) -> f64 {
        self.ln_total
    }
}

/// `ln(e^a + e^b)` without overflow.
pub fn ln_add_exp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

/// A finite-support signal `θ = (θ_1, …, θ_n, 0, 0, …)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Signal {
    coefficients: Vec<f64>,
}

impl Signal {
    pub fn new(coefficients: Vec<f64>) -> Self {
        Self { coefficients }
    }

    pub fn zero() -> Self {
        Self { coefficients: Vec::new() }
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coefficients
    }

    /// `θ_k` for `k ≥ 1`, zero beyond the support.
    pub fn get(&self, k: usize) -> f64 {
        self.coefficients.get(k - 1).copied().unwrap_or(0.0)
    }

    pub fn norm_sq(&self) -> f64 {
        let mut acc = CompensatedSum::default();
        for &x in &self.coefficients {
            acc.add(x * x);
        }
        acc.value()
    }

    /// `Σ_{k≤D} θ_k²`
    pub fn band_energy(&self, d: usize) -> f64 {
        self.coefficients.iter().take(d).map(|x| x * x).sum()
    }
}
