//! The four batch pipelines. Each returns an in-memory [`Report`]; writing
//! files is left to the caller so the outputs can be compared directly.

use std::fmt::Write as _;
use std::time::Instant;

use anyhow::{anyhow, Context, Result};

use seqdetect_core::bounds::{classical_upper_radius_sq, theorem1_bounds, Radius, RadiusBounds, RateCell, RateFit};
use seqdetect_core::detector::DetectorConstants;
use seqdetect_core::montecarlo::{admissible_signal, estimate_type1, estimate_type2, McPlan};
use seqdetect_core::{CBetaMode, DetectorConfig, Execution, ProblemSpec};

use crate::config::{Command, Experiment};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OutputFile {
    pub name: String,
    pub contents: String,
}

#[derive(Debug, Clone)]
pub struct Report {
    pub command: Command,
    pub files: Vec<OutputFile>,
    /// Every asserted check passed.
    pub passed: bool,
    /// Timing and other run-dependent lines destined for the sidecar log.
    pub log: Vec<String>,
}

impl Report {
    pub fn file(&self, name: &str) -> Option<&str> {
        self.files.iter().find(|f| f.name == name).map(|f| f.contents.as_str())
    }
}

pub fn run(command: Command, exp: &Experiment) -> Result<Report> {
    match command {
        Command::Bounds => run_bounds(exp),
        Command::Calibrate => run_calibrate(exp),
        Command::Simulate => run_simulate(exp),
        Command::Rates => run_rates(exp),
    }
}

/// Round-trip float formatting: 17 significant digits.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

fn mode_name(mode: CBetaMode) -> &'static str {
    match mode {
        CBetaMode::Exact => "exact",
        CBetaMode::Practical => "practical",
    }
}

/// Bounds at every grid point, evaluated concurrently and returned in grid
/// order.
fn bounds_over_grid(spec: &ProblemSpec, exp: &Experiment) -> Result<Vec<(f64, RadiusBounds, Radius)>> {
    Execution::default()
        .map(exp.eps_grid.len(), |i| -> Result<_> {
            let eps = exp.eps_grid[i];
            let at = spec.with_eps(eps)?;
            let b = theorem1_bounds(&at, exp.alpha, exp.beta, exp.mode)?;
            Ok((eps, b, classical_upper_radius_sq(&at)))
        })
        .into_iter()
        .collect()
}

fn bounds_csv(rows: &[(f64, RadiusBounds, Radius)]) -> String {
    let mut out = String::from("eps,lower_r2,upper_r2,classical_r2,D_lower,D_upper\n");
    for (eps, b, c) in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            fmt_f64(*eps),
            fmt_f64(b.lower.r2),
            fmt_f64(b.upper.r2),
            fmt_f64(c.r2),
            b.lower.d,
            b.upper.d
        );
    }
    out
}

struct FitLine {
    cell: RateCell,
    bound: &'static str,
    expected: f64,
    fit: RateFit,
    tolerance: f64,
    truncated: bool,
}

impl FitLine {
    fn pass(&self) -> bool {
        !self.truncated && (self.fit.exponent - self.expected).abs() <= self.tolerance
    }

    fn render(&self, out: &mut String) {
        let _ = writeln!(out, "[[fit]]");
        let _ = writeln!(out, "cell = \"{}\"", self.cell.name());
        let _ = writeln!(out, "bound = \"{}\"", self.bound);
        let _ = writeln!(out, "expected_exponent = {}", fmt_f64(self.expected));
        let _ = writeln!(out, "fitted_exponent = {}", fmt_f64(self.fit.exponent));
        let _ = writeln!(out, "tolerance = {}", self.tolerance);
        let _ = writeln!(out, "pass = {}", self.pass());
        let _ = writeln!(out, "r_squared_of_fit = {}", fmt_f64(self.fit.r_squared_of_fit));
        let _ = writeln!(out, "dropped_largest_eps_points = {}", self.fit.dropped);
        let _ = writeln!(out, "truncated = {}", self.truncated);
        out.push('\n');
    }
}

fn fit_side(cell: RateCell, t: f64, s: f64, bound: &'static str, rows: &[(f64, RadiusBounds, Radius)]) -> Result<FitLine> {
    let pick = |b: &RadiusBounds| if bound == "upper" { b.upper } else { b.lower };
    let points: Vec<(f64, f64)> = rows.iter().map(|(e, b, _)| (e.ln(), pick(b).ln_r2)).collect();
    let fit = cell.fit(&points).map_err(|e| anyhow!("fitting {}: {e}", cell.name()))?;
    Ok(FitLine {
        cell,
        bound,
        expected: cell.expected_exponent(t, s),
        fit,
        tolerance: cell.tolerance(),
        truncated: rows.iter().any(|(_, b, _)| pick(b).truncated),
    })
}

/// Both radius bounds and the classical comparator over the ε grid, with a
/// rate fit of the upper bound when the spec is one of the named cells and
/// the grid is long enough.
pub fn run_bounds(exp: &Experiment) -> Result<Report> {
    let start = Instant::now();
    let rows = bounds_over_grid(&exp.spec, exp)?;
    let mut summary = String::new();
    let mut passed = true;
    match RateCell::classify(&exp.spec) {
        Some((cell, t, s)) if rows.len() >= 5 => {
            let line = fit_side(cell, t, s, "upper", &rows)?;
            passed &= line.pass();
            line.render(&mut summary);
        }
        Some(_) => summary.push_str("# fit skipped: fewer than 5 grid points\n"),
        None => summary.push_str("# fit skipped: spec is not one of the named rate cells\n"),
    }
    let truncated = rows.iter().filter(|(_, b, _)| b.upper.truncated || b.lower.truncated).count();
    Ok(Report {
        command: Command::Bounds,
        files: vec![
            OutputFile { name: "bounds.csv".into(), contents: bounds_csv(&rows) },
            OutputFile { name: "bounds_fit.txt".into(), contents: summary },
        ],
        passed,
        log: vec![
            format!("bounds: {} grid points, {truncated} with an optimiser on D_max", rows.len()),
            format!("bounds: wall time {:?}", start.elapsed()),
        ],
    })
}

/// Class constants, both `C_β` variants and the resulting thresholds.
pub fn run_calibrate(exp: &Experiment) -> Result<Report> {
    let c = exp.spec.fourth_moment_bound;
    let constants = DetectorConstants::derive(c, exp.alpha).map_err(|e| anyhow!("{e}"))?;
    let mut out = String::from("requested_mode,mode_used,eps,C,alpha,beta,K1,K2,C_beta,calibration_lhs,margin,margin_flag,D,threshold\n");
    let mut flagged = 0;
    for &eps in &exp.eps_grid {
        let spec = exp.spec.with_eps(eps).map_err(|e| anyhow!("{e}"))?;
        for mode in [CBetaMode::Exact, CBetaMode::Practical] {
            let config = DetectorConfig::calibrate(&spec, exp.alpha, exp.beta, exp.bandwidth, mode).map_err(|e| anyhow!("{e}"))?;
            let cb = config.c_beta;
            flagged += cb.margin_flag as usize;
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
                mode_name(mode),
                mode_name(cb.mode),
                fmt_f64(eps),
                fmt_f64(c),
                fmt_f64(exp.alpha),
                fmt_f64(exp.beta),
                fmt_f64(constants.k1),
                fmt_f64(constants.k2),
                fmt_f64(cb.value),
                fmt_f64(cb.lhs),
                fmt_f64(cb.margin),
                cb.margin_flag,
                config.d,
                fmt_f64(config.threshold)
            );
        }
    }
    Ok(Report {
        command: Command::Calibrate,
        files: vec![OutputFile { name: "calibrate.csv".into(), contents: out }],
        passed: true,
        log: vec![format!("calibrate: {flagged} rows with margin below 0.1")],
    })
}

#[derive(Clone)]
struct SimRow {
    scenario: String,
    noise_kind: String,
    d: usize,
    p1: f64,
    se1: f64,
    p2: f64,
    se2: f64,
}

/// Type I and type II error rates for every (noise, ε) pair. The type II
/// signal has squared norm `C_β ε² Σ_{k≤D} b_k^{-2} + a_D^{-2}`, placed on
/// the deepest coordinate `k ≤ D` where it fits inside the ellipsoid. A
/// final row per scenario reports the worst case over the listed families.
pub fn run_simulate(exp: &Experiment) -> Result<Report> {
    let start = Instant::now();
    let plan = McPlan::new(exp.reps, exp.seed);
    let mut rows = Vec::new();
    let mut log = Vec::new();
    for &eps in &exp.eps_grid {
        let scenario = format!("eps={eps}");
        let spec = exp.spec.with_eps(eps).map_err(|e| anyhow!("{e}"))?;
        let config = DetectorConfig::calibrate(&spec, exp.alpha, exp.beta, exp.bandwidth, exp.mode).map_err(|e| anyhow!("{e}"))?;
        let r = config.radius_sq(&spec).map_err(|e| anyhow!("{e}"))?.sqrt();
        let (theta, k) = admissible_signal(&spec, config.d, r)
            .map_err(|e| anyhow!("{e}"))
            .with_context(|| format!("{scenario}: radius {r} does not fit in the ellipsoid; use a smaller eps"))?;
        log.push(format!("simulate: {scenario} D = {} signal norm {r} on coordinate {k}", config.d));
        let mut worst: Option<SimRow> = None;
        for entry in &exp.noise {
            let model = entry.instantiate(config.d).map_err(|e| anyhow!("{e}"))?;
            let t1 = estimate_type1(&spec, &config, &model, &plan).map_err(|e| anyhow!("{e}"))?;
            let t2 = estimate_type2(&spec, &config, &model, &theta, &plan).map_err(|e| anyhow!("{e}"))?;
            log.push(format!("simulate: {scenario} {} wall time {:?}", model.label(), t1.wall_time + t2.wall_time));
            let row = SimRow {
                scenario: scenario.clone(),
                noise_kind: model.label().into(),
                d: config.d,
                p1: t1.p_hat,
                se1: t1.std_err,
                p2: t2.p_hat,
                se2: t2.std_err,
            };
            let w = worst.get_or_insert_with(|| SimRow { noise_kind: "max_over_listed_families".into(), ..row.clone() });
            if row.p1 > w.p1 {
                (w.p1, w.se1) = (row.p1, row.se1);
            }
            if row.p2 > w.p2 {
                (w.p2, w.se2) = (row.p2, row.se2);
            }
            rows.push(row);
        }
        if exp.noise.len() > 1 {
            rows.extend(worst);
        }
    }
    let mut out = String::from("scenario,noise_kind,alpha,beta,D,reps,seed,p_hat_type1,se1,p_hat_type2,se2,pass\n");
    let mut passed = true;
    for row in &rows {
        let pass = row.p1 <= exp.alpha + 3.0 * row.se1 && row.p2 <= exp.beta + 3.0 * row.se2;
        passed &= pass;
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            row.scenario,
            row.noise_kind,
            fmt_f64(exp.alpha),
            fmt_f64(exp.beta),
            row.d,
            exp.reps,
            exp.seed,
            fmt_f64(row.p1),
            fmt_f64(row.se1),
            fmt_f64(row.p2),
            fmt_f64(row.se2),
            pass
        );
    }
    log.push(format!("simulate: wall time {:?}", start.elapsed()));
    Ok(Report { command: Command::Simulate, files: vec![OutputFile { name: "simulate.csv".into(), contents: out }], passed, log })
}

/// File name for a cell's CSV: `rates_<operator>__<smoothness>.csv`.
pub fn rates_file_name(cell: RateCell) -> String {
    format!("rates_{}.csv", cell.name().replace('/', "__"))
}

/// Fits both bounds for every requested cell and compares them with the
/// tabulated exponents. `t` and `s` come from the problem block.
pub fn run_rates(exp: &Experiment) -> Result<Report> {
    let start = Instant::now();
    let (t, s) = match RateCell::classify(&exp.spec) {
        Some((_, t, s)) => (if t > 0.0 { t } else { 1.0 }, s),
        None => return Err(anyhow!("rates needs named operator and smoothness families")),
    };
    let mut files = Vec::new();
    let mut summary = format!("# t = {t}, s = {s}; the 2 largest-eps points are dropped before fitting\n\n");
    let mut passed = true;
    for &cell in &exp.cells {
        let (op, sm) = cell.family(t, s);
        let mut spec = exp.spec.clone();
        spec.operator = op;
        spec.smoothness = sm;
        let rows = bounds_over_grid(&spec, exp)?;
        files.push(OutputFile { name: rates_file_name(cell), contents: bounds_csv(&rows) });
        for bound in ["upper", "lower"] {
            let line = fit_side(cell, t, s, bound, &rows)?;
            passed &= line.pass();
            line.render(&mut summary);
        }
    }
    files.push(OutputFile { name: "rates_summary.txt".into(), contents: summary });
    Ok(Report { command: Command::Rates, files, passed, log: vec![format!("rates: wall time {:?}", start.elapsed())] })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{ExperimentConfig, Overrides};

    fn experiment(extra: &str, command: Command) -> Experiment {
        let text = format!(
            r#"
eps = 0.1
[operator]
kind = "well_posed"
[smoothness]
kind = "ordinary_smooth"
s = 1.0
[[noise]]
kind = "iid_gaussian"
[[noise]]
kind = "adversarial_equicorrelated"
[test]
alpha = 0.05
beta = 0.05
{extra}
"#
        );
        ExperimentConfig::from_toml(&text).unwrap().resolve(command, Overrides::default()).unwrap()
    }

    #[test]
    fn float_format_round_trips() {
        for x in [0.1, 1.0 / 3.0, 1e-300, 6.02e23] {
            assert_eq!(fmt_f64(x).parse::<f64>().unwrap(), x);
        }
        assert_eq!(fmt_f64(0.5), "5.0000000000000000e-1");
    }

    #[test]
    fn bounds_table_cell_example() {
        let exp = experiment("[run]\neps_grid = [0.0625, 0.03125, 0.015625, 0.0078125, 0.00390625, 0.001953125]", Command::Bounds);
        let report = run_bounds(&exp).unwrap();
        let csv = report.file("bounds.csv").unwrap();
        assert_eq!(csv.lines().next().unwrap(), "eps,lower_r2,upper_r2,classical_r2,D_lower,D_upper");
        assert_eq!(csv.lines().count(), 7);
        let fit = report.file("bounds_fit.txt").unwrap();
        assert!(fit.contains(&format!("expected_exponent = {}", fmt_f64(4.0 / 3.0))), "{fit}");
    }

    #[test]
    fn calibrate_lists_both_modes() {
        let exp = experiment("", Command::Calibrate);
        let csv = run_calibrate(&exp).unwrap().files.remove(0).contents;
        let rows: Vec<&str> = csv.lines().skip(1).collect();
        assert_eq!(rows.len(), 2);
        assert!(rows[0].starts_with("exact,exact,") && rows[1].starts_with("practical,"));
    }

    #[test]
    fn simulate_includes_worst_case_row() {
        let exp = experiment("[run]\nreps = 1000\neps_grid = [0.001]", Command::Simulate);
        let report = run_simulate(&exp).unwrap();
        let csv = report.file("simulate.csv").unwrap();
        assert_eq!(csv.lines().count(), 4);
        assert!(csv.lines().last().unwrap().contains("max_over_listed_families"));
    }
}
