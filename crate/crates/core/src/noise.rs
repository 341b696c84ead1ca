//! Noise families in the fourth-moment class, correlation matrices and the
//! exact second-order analysis of the null statistic for Gaussian noise.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{invalid, Error, Result};
use crate::rng::RandomStream;
use crate::sequences::{CompensatedSum, ProblemSpec};

/// Eigenvalues below `-PSD_TOLERANCE` make a proposed correlation matrix
/// invalid without repair.
pub const PSD_TOLERANCE: f64 = 1e-10;

/// Eigenvalue floor used by the repair step; keeps repaired matrices
/// strictly positive definite.
const REPAIR_FLOOR: f64 = 1e-12;
const SHRINK_FACTOR: f64 = 0.8;
const MIN_AMPLITUDE: f64 = 1e-3;

/// A symmetric, unit-diagonal, positive semidefinite matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationMatrix {
    entries: DMatrix<f64>,
}

impl CorrelationMatrix {
    /// Validates symmetry, unit diagonal and `λ_min ≥ -1e-10`.
    pub fn new(entries: DMatrix<f64>) -> Result<Self> {
        if !entries.is_square() || entries.nrows() == 0 {
            return Err(invalid("cov", "correlation matrix must be square and non-empty"));
        }
        let n = entries.nrows();
        for i in 0..n {
            if (entries[(i, i)] - 1.0).abs() > 1e-12 {
                return Err(invalid("cov", format!("diagonal entry {i} is {} (must be 1)", entries[(i, i)])));
            }
            for j in 0..i {
                if (entries[(i, j)] - entries[(j, i)]).abs() > 1e-12 {
                    return Err(invalid("cov", format!("matrix not symmetric at ({i}, {j})")));
                }
            }
        }
        let m = Self { entries };
        let min = m.min_eigenvalue();
        if min < -PSD_TOLERANCE {
            return Err(invalid("cov", format!("minimum eigenvalue {min} below -{PSD_TOLERANCE}")));
        }
        Ok(m)
    }

    pub fn identity(dim: usize) -> Self {
        Self { entries: DMatrix::identity(dim, dim) }
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn get(&self, k: usize, l: usize) -> f64 {
        self.entries[(k, l)]
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn min_eigenvalue(&self) -> f64 {
        SymmetricEigen::new(self.entries.clone()).eigenvalues.min()
    }

    pub fn max_eigenvalue(&self) -> f64 {
        SymmetricEigen::new(self.entries.clone()).eigenvalues.max()
    }

    /// Leading `d × d` block.
    pub fn leading(&self, d: usize) -> Result<Self> {
        if d == 0 || d > self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), actual: d });
        }
        Ok(Self { entries: self.entries.view((0, 0), (d, d)).into_owned() })
    }

    /// Symmetric square root `V diag(√λ⁺) Vᵀ`.
    pub fn symmetric_sqrt(&self) -> DMatrix<f64> {
        let eig = SymmetricEigen::new(self.entries.clone());
        let roots = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
        &eig.eigenvectors * DMatrix::from_diagonal(&roots) * eig.eigenvectors.transpose()
    }

    /// Nearest-correlation repair: clip the spectrum at a tiny positive floor,
    /// then rescale to unit diagonal.
    pub fn repair(proposal: DMatrix<f64>) -> Self {
        let sym = (&proposal + proposal.transpose()) * 0.5;
        let eig = SymmetricEigen::new(sym);
        let clipped = eig.eigenvalues.map(|l| l.max(REPAIR_FLOOR));
        let psd = &eig.eigenvectors * DMatrix::from_diagonal(&clipped) * eig.eigenvectors.transpose();
        let scale = psd.diagonal().map(|d| 1.0 / d.sqrt());
        let n = psd.nrows();
        let entries = DMatrix::from_fn(n, n, |i, j| if i == j { 1.0 } else { psd[(i, j)] * scale[i] * scale[j] });
        Self { entries }
    }
}

/// Adversarial covariance `Σ*_{kl} = d_k d_l` (k ≠ l), unit diagonal.
pub fn adversarial_sigma(d: &[f64]) -> Result<CorrelationMatrix> {
    check_adversarial_weights(d)?;
    let n = d.len();
    let entries = DMatrix::from_fn(n, n, |i, j| if i == j { 1.0 } else { d[i] * d[j] });
    Ok(CorrelationMatrix { entries })
}

fn check_adversarial_weights(d: &[f64]) -> Result<()> {
    if d.is_empty() {
        return Err(invalid("d", "weight sequence must be non-empty"));
    }
    let lo = std::f64::consts::FRAC_1_SQRT_2;
    if let Some(bad) = d.iter().find(|&&x| !(x >= lo - 1e-15 && x < 1.0)) {
        return Err(invalid("d", format!("weights must lie in [1/sqrt(2), 1), got {bad}")));
    }
    Ok(())
}

/// Long-range correlation with decay bound `|Σ_{kl}| ≤ c'|k-l|^{-s}`.
#[derive(Debug, Clone, PartialEq)]
pub struct LongRangeCorrelation {
    pub matrix: CorrelationMatrix,
    /// Amplitude actually achieved after any geometric shrinking.
    pub amplitude: f64,
    pub repaired: bool,
}

/// Proposes `Σ_{kl} = c|k-l|^{-s}`, repairs it to a correlation matrix and
/// verifies the decay bound, shrinking `c` by 0.8 until it holds.
pub fn long_range_correlation(dim: usize, s: f64, c: f64) -> Result<LongRangeCorrelation> {
    if dim == 0 {
        return Err(invalid("D", "dimension must be at least 1"));
    }
    if !(s > 0.0 && s.is_finite()) {
        return Err(invalid("s", format!("decay exponent must be positive, got {s}")));
    }
    if !(c > 0.0 && c <= 1.0) {
        return Err(invalid("c", format!("amplitude must lie in (0, 1], got {c}")));
    }
    let kernel = |amp: f64, i: usize, j: usize| {
        if i == j {
            1.0
        } else {
            amp * ((i as f64) - (j as f64)).abs().powf(-s)
        }
    };
    let mut amp = c;
    while amp >= MIN_AMPLITUDE {
        let proposal = DMatrix::from_fn(dim, dim, |i, j| kernel(amp, i, j));
        let direct = CorrelationMatrix { entries: proposal.clone() };
        let (matrix, repaired) = if direct.min_eigenvalue() >= 0.0 {
            (direct, false)
        } else {
            (CorrelationMatrix::repair(proposal), true)
        };
        let decay_ok = (0..dim).all(|i| (0..i).all(|j| matrix.get(i, j).abs() <= kernel(amp, i, j) * (1.0 + 1e-12)));
        if decay_ok && matrix.min_eigenvalue() >= -PSD_TOLERANCE {
            return Ok(LongRangeCorrelation { matrix, amplitude: amp, repaired });
        }
        amp *= SHRINK_FACTOR;
    }
    Err(Error::CorrelationRepairFailed { min_amplitude: MIN_AMPLITUDE })
}

/// `Cov(ξ_k², ξ_l²) = 2 Σ_{kl}²` for jointly Gaussian unit-variance
/// coordinates (diagonal: `Var ξ_k² = 2`).
pub fn isserlis_cov_sq(cov: &CorrelationMatrix) -> DMatrix<f64> {
    cov.entries.map(|x| 2.0 * x * x)
}

/// The two parts of the null variance of `T_D` for Gaussian noise.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NullVariance {
    /// Diagonal part `2 ε⁴ Σ_k b_k^{-4}`.
    pub r0: f64,
    /// Cross part `ε⁴ Σ_{k≠l} b_k^{-2} b_l^{-2} · 2Σ_{kl}²`.
    pub s0: f64,
}

impl NullVariance {
    pub fn total(&self) -> f64 {
        self.r0 + self.s0
    }
}

pub fn null_variance_decomposition(spec: &ProblemSpec, cov: &CorrelationMatrix, d: usize) -> Result<NullVariance> {
    spec.check_bandwidth(d)?;
    if cov.dim() < d {
        return Err(Error::DimensionMismatch { expected: d, actual: cov.dim() });
    }
    let w: Vec<f64> = (1..=d).map(|k| spec.operator.inv_sq(k)).collect();
    let eps4 = spec.eps.powi(4);
    let mut diag = CompensatedSum::default();
    let mut cross = CompensatedSum::default();
    for k in 0..d {
        diag.add(2.0 * w[k] * w[k]);
        for l in 0..k {
            let rho = cov.get(k, l);
            // both (k, l) and (l, k)
            cross.add(2.0 * w[k] * w[l] * 2.0 * rho * rho);
        }
    }
    Ok(NullVariance { r0: eps4 * diag.value(), s0: eps4 * cross.value() })
}

/// Noise distribution for `(ξ_1, …, ξ_D)`.
#[derive(Debug, Clone, PartialEq)]
pub enum NoiseKind {
    IidGaussian,
    IidRademacher,
    /// Uniform on `[-√3, √3]`.
    IidScaledUniform,
    CorrelatedGaussian(CorrelationMatrix),
    LongRangeGaussian { s: f64, c: f64, correlation: LongRangeCorrelation },
    /// `ξ_k = d_k η_0 + √(1-d_k²) η_k` with one shared factor `η_0`.
    AdversarialEquicorrelated { d: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct NoiseModel {
    kind: NoiseKind,
    claimed_c: f64,
    root: Option<DMatrix<f64>>,
}

impl NoiseModel {
    fn build(kind: NoiseKind, claimed_c: f64) -> Result<Self> {
        if !(claimed_c >= 1.0 && claimed_c.is_finite()) {
            return Err(invalid("claimed_C", format!("must be >= 1, got {claimed_c}")));
        }
        let root = match &kind {
            NoiseKind::CorrelatedGaussian(cov) => Some(cov.symmetric_sqrt()),
            NoiseKind::LongRangeGaussian { correlation, .. } => Some(correlation.matrix.symmetric_sqrt()),
            _ => None,
        };
        Ok(Self { kind, claimed_c, root })
    }

    pub fn iid_gaussian() -> Self {
        Self { kind: NoiseKind::IidGaussian, claimed_c: 3.0, root: None }
    }

    pub fn iid_rademacher() -> Self {
        Self { kind: NoiseKind::IidRademacher, claimed_c: 1.0, root: None }
    }

    pub fn iid_scaled_uniform() -> Self {
        Self { kind: NoiseKind::IidScaledUniform, claimed_c: 1.8, root: None }
    }

    pub fn correlated_gaussian(cov: CorrelationMatrix) -> Self {
        Self::build(NoiseKind::CorrelatedGaussian(cov), 3.0).expect("claimed_C = 3 is valid")
    }

    pub fn long_range_gaussian(dim: usize, s: f64, c: f64) -> Result<Self> {
        let correlation = long_range_correlation(dim, s, c)?;
        Self::build(NoiseKind::LongRangeGaussian { s, c, correlation }, 3.0)
    }

    pub fn adversarial(d: Vec<f64>) -> Result<Self> {
        check_adversarial_weights(&d)?;
        Self::build(NoiseKind::AdversarialEquicorrelated { d }, 3.0)
    }

    /// Adversarial construction with the same weight on every coordinate.
    pub fn adversarial_uniform(dim: usize, d: f64) -> Result<Self> {
        Self::adversarial(vec![d; dim])
    }

    pub fn with_claimed_c(mut self, claimed_c: f64) -> Result<Self> {
        if !(claimed_c >= 1.0 && claimed_c.is_finite()) {
            return Err(invalid("claimed_C", format!("must be >= 1, got {claimed_c}")));
        }
        self.claimed_c = claimed_c;
        Ok(self)
    }

    pub fn kind(&self) -> &NoiseKind {
        &self.kind
    }

    pub fn claimed_c(&self) -> f64 {
        self.claimed_c
    }

    pub fn label(&self) -> &'static str {
        match self.kind {
            NoiseKind::IidGaussian => "iid_gaussian",
            NoiseKind::IidRademacher => "iid_rademacher",
            NoiseKind::IidScaledUniform => "iid_scaled_uniform",
            NoiseKind::CorrelatedGaussian(_) => "correlated_gaussian",
            NoiseKind::LongRangeGaussian { .. } => "long_range_gaussian",
            NoiseKind::AdversarialEquicorrelated { .. } => "adversarial_equicorrelated",
        }
    }

    pub fn is_gaussian(&self) -> bool {
        !matches!(self.kind, NoiseKind::IidRademacher | NoiseKind::IidScaledUniform)
    }

    /// Fixed dimension of the correlated kinds; `None` for i.i.d. kinds.
    pub fn dimension(&self) -> Option<usize> {
        match &self.kind {
            NoiseKind::CorrelatedGaussian(cov) => Some(cov.dim()),
            NoiseKind::LongRangeGaussian { correlation, .. } => Some(correlation.matrix.dim()),
            NoiseKind::AdversarialEquicorrelated { d } => Some(d.len()),
            _ => None,
        }
    }

    /// Exact covariance of `(ξ_1, …, ξ_D)` when the law is known to be
    /// Gaussian; identity for i.i.d. kinds.
    pub fn covariance(&self, dim: usize) -> Result<CorrelationMatrix> {
        self.check_dimension(dim)?;
        match &self.kind {
            NoiseKind::CorrelatedGaussian(cov) => Ok(cov.clone()),
            NoiseKind::LongRangeGaussian { correlation, .. } => Ok(correlation.matrix.clone()),
            NoiseKind::AdversarialEquicorrelated { d } => adversarial_sigma(d),
            _ => Ok(CorrelationMatrix::identity(dim)),
        }
    }

    pub fn check_dimension(&self, dim: usize) -> Result<()> {
        if dim == 0 {
            return Err(invalid("D", "dimension must be at least 1"));
        }
        match self.dimension() {
            Some(n) if n != dim => Err(Error::DimensionMismatch { expected: n, actual: dim }),
            _ => Ok(()),
        }
    }

    /// One draw of `(ξ_1, …, ξ_D)` from `stream`.
    pub fn sample(&self, dim: usize, stream: &RandomStream) -> Result<Vec<f64>> {
        self.check_dimension(dim)?;
        let mut out = vec![0.0; dim];
        self.fill(&mut stream.rng(), &mut out);
        Ok(out)
    }

    /// Fills `out` with one draw; `out.len()` must be a valid dimension.
    pub fn fill<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut [f64]) {
        match &self.kind {
            NoiseKind::IidGaussian => out.iter_mut().for_each(|x| *x = StandardNormal.sample(rng)),
            NoiseKind::IidRademacher => out.iter_mut().for_each(|x| *x = if rng.random::<bool>() { 1.0 } else { -1.0 }),
            NoiseKind::IidScaledUniform => {
                let h = 3f64.sqrt();
                out.iter_mut().for_each(|x| *x = rng.random_range(-h..h));
            }
            NoiseKind::CorrelatedGaussian(_) | NoiseKind::LongRangeGaussian { .. } => {
                let root = self.root.as_ref().expect("correlated kinds carry a square root");
                let z = DVector::from_fn(out.len(), |_, _| StandardNormal.sample(rng));
                let xi = root * z;
                out.copy_from_slice(xi.as_slice());
            }
            NoiseKind::AdversarialEquicorrelated { d } => {
                let shared: f64 = StandardNormal.sample(rng);
                for (x, &dk) in out.iter_mut().zip(d) {
                    let own: f64 = StandardNormal.sample(rng);
                    *x = dk * shared + (1.0 - dk * dk).sqrt() * own;
                }
            }
        }
    }
}

/// Empirical moments of one coordinate with standard errors.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoordinateMoments {
    pub mean: f64,
    pub mean_se: f64,
    pub variance: f64,
    pub variance_se: f64,
    pub fourth_moment: f64,
    pub fourth_moment_se: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MomentReport {
    pub coordinates: Vec<CoordinateMoments>,
    pub claimed_c: f64,
    pub within_xi: bool,
}

impl MomentReport {
    pub fn max_fourth_moment(&self) -> f64 {
        self.coordinates.iter().map(|c| c.fourth_moment).fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Empirical check that a model lies in the class with constant
/// `claimed_C`: per coordinate, `|mean| ≤ 3 SE`, `|var - 1| ≤ 3 SE` and
/// `E ξ⁴ ≤ claimed_C + 3 SE`.
pub fn validate_moments(model: &NoiseModel, dim: usize, reps: usize, stream: &RandomStream) -> Result<MomentReport> {
    if reps < 10_000 {
        return Err(invalid("reps", format!("moment validation needs at least 10^4 replications, got {reps}")));
    }
    model.check_dimension(dim)?;
    let mut rng = stream.rng();
    let mut draws = vec![0.0; dim];
    // raw power sums per coordinate, powers 1..=8
    let mut sums = vec![[0.0f64; 8]; dim];
    for _ in 0..reps {
        model.fill(&mut rng, &mut draws);
        for (acc, &x) in sums.iter_mut().zip(&draws) {
            let mut p = 1.0;
            for slot in acc.iter_mut() {
                p *= x;
                *slot += p;
            }
        }
    }
    let n = reps as f64;
    let coordinates: Vec<CoordinateMoments> = sums
        .iter()
        .map(|s| {
            let m: Vec<f64> = s.iter().map(|v| v / n).collect();
            let (m1, m2, m3, m4, m8) = (m[0], m[1], m[2], m[3], m[7]);
            let variance = m2 - m1 * m1;
            // Var((X - μ)²) via central moments; μ is tiny so the plug-in is fine.
            let c4 = m4 - 4.0 * m1 * m3 + 6.0 * m1 * m1 * m2 - 3.0 * m1.powi(4);
            CoordinateMoments {
                mean: m1,
                mean_se: (variance.max(0.0) / n).sqrt(),
                variance,
                variance_se: ((c4 - variance * variance).max(0.0) / n).sqrt(),
                fourth_moment: m4,
                fourth_moment_se: ((m8 - m4 * m4).max(0.0) / n).sqrt(),
            }
        })
        .collect();
    let claimed_c = model.claimed_c();
    let within_xi = coordinates.iter().all(|c| {
        c.mean.abs() <= 3.0 * c.mean_se
            && (c.variance - 1.0).abs() <= 3.0 * c.variance_se
            && c.fourth_moment <= claimed_c + 3.0 * c.fourth_moment_se
    });
    Ok(MomentReport { coordinates, claimed_c, within_xi })
}

/// Dimension-free description of a noise family. Fixed-dimension models are
/// built per bandwidth with [`NoiseSpec::instantiate`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NoiseSpec {
    IidGaussian,
    IidRademacher,
    IidScaledUniform,
    /// Gaussian with every off-diagonal correlation equal to `rho`.
    Equicorrelated { rho: f64 },
    LongRangeGaussian { s: f64, c: f64 },
    /// Same weight `d` on every coordinate.
    Adversarial { d: f64 },
}

impl NoiseSpec {
    /// The families exercised by default in simulations: the three i.i.d.
    /// laws, long-range Gaussian with `s = 1, c = 0.5`, and the adversarial
    /// construction at `d = 1/√2`.
    pub fn shipped() -> [NoiseSpec; 5] {
        [
            NoiseSpec::IidGaussian,
            NoiseSpec::IidRademacher,
            NoiseSpec::IidScaledUniform,
            NoiseSpec::LongRangeGaussian { s: 1.0, c: 0.5 },
            NoiseSpec::Adversarial { d: std::f64::consts::FRAC_1_SQRT_2 },
        ]
    }

    pub fn instantiate(&self, dim: usize) -> Result<NoiseModel> {
        if dim == 0 {
            return Err(invalid("D", "dimension must be at least 1"));
        }
        match *self {
            NoiseSpec::IidGaussian => Ok(NoiseModel::iid_gaussian()),
            NoiseSpec::IidRademacher => Ok(NoiseModel::iid_rademacher()),
            NoiseSpec::IidScaledUniform => Ok(NoiseModel::iid_scaled_uniform()),
            NoiseSpec::Equicorrelated { rho } => {
                if !(0.0..1.0).contains(&rho) {
                    return Err(invalid("noise.c", format!("equicorrelation must lie in [0, 1), got {rho}")));
                }
                let m = DMatrix::from_fn(dim, dim, |k, l| if k == l { 1.0 } else { rho });
                Ok(NoiseModel::correlated_gaussian(CorrelationMatrix::new(m)?))
            }
            NoiseSpec::LongRangeGaussian { s, c } => NoiseModel::long_range_gaussian(dim, s, c),
            NoiseSpec::Adversarial { d } => NoiseModel::adversarial_uniform(dim, d),
        }
    }
}
