use serde::{Deserialize, Serialize};

use super::{solve, Solution, SolverSettings};
use crate::error::SolverError;
use crate::model::ModelPrimitives;

/// Solution for one transaction-cost rate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepEntry {
    pub alpha: f64,
    pub solution: Solution,
}

/// A failed comparison between consecutive rates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepViolation {
    /// `"payment"` or `"value"`.
    pub kind: String,
    pub alpha_low: f64,
    pub alpha_high: f64,
    pub v: f64,
    pub output_index: Option<usize>,
    /// How much the quantity rose with the rate.
    pub magnitude: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub entries: Vec<SweepEntry>,
    /// Gridpoint indices at which payment schedules were compared.
    pub probes: Vec<usize>,
    pub violations: Vec<SweepViolation>,
    pub tol_payment: f64,
    pub tol_value: f64,
}

impl SweepReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Default probe gridpoints: the quartiles of the common feasible domain.
fn default_probes(entries: &[SweepEntry]) -> Vec<usize> {
    let (mut lo, mut hi) = (0usize, usize::MAX);
    for e in entries {
        if let Some((a, b)) = e.solution.value.domain() {
            lo = lo.max(a);
            hi = hi.min(b);
        }
    }
    if hi == usize::MAX || lo > hi {
        return Vec::new();
    }
    let mut probes: Vec<usize> = [1usize, 2, 3].iter().map(|q| lo + (hi - lo) * q / 4).collect();
    probes.dedup();
    probes
}

/// Solves for each rate in `alphas` and checks that payments at the probe
/// points and the buyer value everywhere weakly fall as the rate rises.
pub fn transaction_sweep(
    model: &ModelPrimitives,
    settings: &SolverSettings,
    alphas: &[f64],
    probes: Option<&[usize]>,
) -> Result<SweepReport, SolverError> {
    if alphas.iter().any(|a| !(a.is_finite() && *a >= 0.0)) || alphas.windows(2).any(|w| w[0] > w[1]) {
        return Err(SolverError::Config {
            field: "alpha_list",
            rule: "rates must be nonnegative and sorted ascending".into(),
        });
    }
    let mut entries = Vec::with_capacity(alphas.len());
    for &alpha in alphas {
        let s = SolverSettings {
            alpha,
            ..settings.clone()
        };
        entries.push(SweepEntry {
            alpha,
            solution: solve(model, &s)?,
        });
    }
    let probes = probes.map(<[usize]>::to_vec).unwrap_or_else(|| default_probes(&entries));
    let tol_payment = 1e-6 * model.payment_bounds().range();
    let tol_value = 1e-6;
    let mut violations = Vec::new();
    for pair in entries.windows(2) {
        let (low, high) = (&pair[0], &pair[1]);
        for &i in &probes {
            let (Some(a), Some(b)) = (low.solution.policy.contract(i), high.solution.policy.contract(i)) else {
                continue;
            };
            for y in 0..a.payments.len() {
                let rise = b.payments[y] - a.payments[y];
                if rise > tol_payment {
                    violations.push(SweepViolation {
                        kind: "payment".into(),
                        alpha_low: low.alpha,
                        alpha_high: high.alpha,
                        v: a.v,
                        output_index: Some(y),
                        magnitude: rise,
                    });
                }
            }
        }
        let grid = low.solution.value.grid().points();
        for (i, &v) in grid.iter().enumerate() {
            if let (Some(a), Some(b)) = (low.solution.value.value(i), high.solution.value.value(i)) {
                if b - a > tol_value {
                    violations.push(SweepViolation {
                        kind: "value".into(),
                        alpha_low: low.alpha,
                        alpha_high: high.alpha,
                        v,
                        output_index: None,
                        magnitude: b - a,
                    });
                }
            }
        }
    }
    Ok(SweepReport {
        entries,
        probes,
        violations,
        tol_payment,
        tol_value,
    })
}
