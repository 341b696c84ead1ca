//! Exact integer search over the bandwidth `D ∈ 1..=D_max`.
//!
//! Objectives are evaluated in the log domain from running prefix sums of
//! `b_k^{-2}` and `b_k^{-4}`, so severely ill-posed spectra never overflow.
//! The scan stops early once the objective has moved the wrong way for
//! [`PATIENCE`] consecutive bandwidths; otherwise it runs to `D_max`.

use crate::sequences::{LogPrefixSum, ProblemSpec};

pub const PATIENCE: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Goal {
    Minimize,
    Maximize,
}

/// Log-domain ingredients at bandwidth `D`.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Terms {
    /// `ln Σ_{k≤D} b_k^{-2}`
    pub ln_s2: f64,
    /// `ln Σ_{k≤D} b_k^{-4}`
    pub ln_s4: f64,
    /// `ln a_D^{-2}`
    pub ln_bias: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct ScanResult {
    pub d: usize,
    pub ln_value: f64,
    /// The optimum sits on the truncation boundary `D_max`.
    pub truncated: bool,
}

pub(crate) fn scan(spec: &ProblemSpec, goal: Goal, objective: impl Fn(Terms) -> f64) -> ScanResult {
    let max = spec.max_bandwidth();
    let better = |a: f64, b: f64| match goal {
        Goal::Minimize => a < b,
        Goal::Maximize => a > b,
    };
    let mut s2 = LogPrefixSum::default();
    let mut s4 = LogPrefixSum::default();
    let mut best = ScanResult { d: 1, ln_value: f64::NAN, truncated: false };
    let mut previous = f64::NAN;
    let mut worse_streak = 0usize;
    for d in 1..=max {
        let ln_inv_b2 = -2.0 * spec.operator.ln_value(d);
        let terms = Terms {
            ln_s2: s2.push(ln_inv_b2),
            ln_s4: s4.push(2.0 * ln_inv_b2),
            ln_bias: -2.0 * spec.smoothness.ln_value(d),
        };
        let value = objective(terms);
        if d == 1 || better(value, best.ln_value) {
            best = ScanResult { d, ln_value: value, truncated: false };
        }
        if d > 1 && better(previous, value) {
            worse_streak += 1;
            if worse_streak >= PATIENCE {
                break;
            }
        } else {
            worse_streak = 0;
        }
        previous = value;
    }
    best.truncated = best.d == max;
    best
}
