//! Recursive contract design over promised utility.
//!
//! [`solve`] runs value iteration on the buyer's value `K(v)`; each
//! [`bellman_update`] chooses, at every promised value on the grid, the
//! effort, payments and continuation promises that maximize the buyer's
//! payoff subject to promise keeping and, under hidden action, incentive
//! compatibility over the whole effort grid.

mod bellman;
pub(crate) mod kernel;
mod lattice;
mod multipliers;
mod sweep;
mod verify;

use serde::{Deserialize, Serialize};

use crate::error::SolverError;
use crate::model::{linspace, ModelPrimitives, PropertyReport};

pub use bellman::{bellman_update, solve, Solution};
pub use multipliers::{recover_multipliers, MultiplierEstimates, MultiplierPoint};
pub use sweep::{transaction_sweep, SweepEntry, SweepReport, SweepViolation};
pub use verify::{ic_best_response, verify_monotonicity, BestResponse, ResultsReport};

/// Whether effort is hidden from the buyer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    MoralHazard,
    FullInfo,
}

/// The set of payments and continuation promises the buyer may offer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ControlSpace {
    /// Any payment in the bounds and any continuation in the feasible domain.
    Continuous,
    /// Finite menus. Promise keeping is imposed as `>= v` since exact
    /// delivery is generally impossible on a lattice.
    Lattice {
        payments: Vec<f64>,
        continuations: Vec<f64>,
    },
}

/// Solver settings with the default tolerances.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverSettings {
    pub mode: Mode,
    pub alpha: f64,
    pub v_points: usize,
    pub tol_vi: f64,
    pub max_iterations: usize,
    pub controls: ControlSpace,
}

impl Default for SolverSettings {
    fn default() -> Self {
        SolverSettings {
            mode: Mode::MoralHazard,
            alpha: 0.0,
            v_points: 101,
            tol_vi: 1e-6,
            max_iterations: 2000,
            controls: ControlSpace::Continuous,
        }
    }
}

impl SolverSettings {
    pub fn new(mode: Mode, alpha: f64) -> Self {
        SolverSettings {
            mode,
            alpha,
            ..SolverSettings::default()
        }
    }

    pub fn validate(&self) -> Result<(), SolverError> {
        let bad = |field, rule: &str| {
            Err(SolverError::Config {
                field,
                rule: rule.to_string(),
            })
        };
        if !(self.alpha.is_finite() && self.alpha >= 0.0) {
            return bad("alpha", "must be finite and nonnegative");
        }
        if self.v_points < 2 {
            return bad("v_points", "need at least 2 promised-value gridpoints");
        }
        if !(self.tol_vi > 0.0) {
            return bad("tol_vi", "must be positive");
        }
        if self.max_iterations == 0 {
            return bad("max_iterations", "must be positive");
        }
        if let ControlSpace::Lattice { payments, continuations } = &self.controls {
            if payments.is_empty() || continuations.is_empty() {
                return bad("controls", "lattice menus must be nonempty");
            }
        }
        Ok(())
    }
}

/// Constraint and monotonicity tolerances.
pub const TOL_PK: f64 = 1e-8;
pub const TOL_IC: f64 = 1e-8;
pub const TOL_FOC: f64 = 1e-3;
pub const TOL_ENV: f64 = 1e-3;

/// Ordered promised values spanning the derived bounds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromisedValueGrid {
    points: Vec<f64>,
}

impl PromisedValueGrid {
    pub fn new(lower: f64, upper: f64, count: usize) -> Result<Self, SolverError> {
        if count < 2 || !(lower < upper) || !lower.is_finite() || !upper.is_finite() {
            return Err(SolverError::Config {
                field: "v_points",
                rule: format!("need count >= 2 and a finite interval, got {count} on [{lower}, {upper}]"),
            });
        }
        Ok(PromisedValueGrid {
            points: linspace(lower, upper, count),
        })
    }

    pub fn for_model(model: &ModelPrimitives, count: usize) -> Result<Self, SolverError> {
        let (lo, hi) = model.derive_v_bounds();
        Self::new(lo, hi, count)
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn step(&self) -> f64 {
        self.points[1] - self.points[0]
    }
}

/// Buyer value on the promised-value grid; `None` marks promises that
/// cannot be delivered.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValueFunction {
    grid: PromisedValueGrid,
    values: Vec<Option<f64>>,
}

impl ValueFunction {
    pub fn new(grid: PromisedValueGrid, values: Vec<Option<f64>>) -> Self {
        assert_eq!(grid.len(), values.len(), "one value per gridpoint");
        ValueFunction { grid, values }
    }

    pub fn zero(grid: PromisedValueGrid) -> Self {
        let values = vec![Some(0.0); grid.len()];
        ValueFunction { grid, values }
    }

    pub fn grid(&self) -> &PromisedValueGrid {
        &self.grid
    }

    pub fn values(&self) -> &[Option<f64>] {
        &self.values
    }

    pub fn value(&self, i: usize) -> Option<f64> {
        self.values.get(i).copied().flatten()
    }

    /// Index range `[first, last]` of feasible gridpoints.
    pub fn domain(&self) -> Option<(usize, usize)> {
        let first = self.values.iter().position(Option::is_some)?;
        let last = self.values.iter().rposition(Option::is_some)?;
        Some((first, last))
    }

    /// Feasible interval of promised values.
    pub fn v_domain(&self) -> Option<(f64, f64)> {
        self.domain()
            .map(|(a, b)| (self.grid.points[a], self.grid.points[b]))
    }

    pub fn feasible_points(&self) -> Vec<(f64, f64)> {
        self.grid
            .points
            .iter()
            .zip(&self.values)
            .filter_map(|(&v, k)| k.map(|k| (v, k)))
            .collect()
    }

    /// Piecewise-linear interpolation on the feasible domain.
    pub fn interpolate(&self, v: f64) -> Option<f64> {
        let (first, last) = self.domain()?;
        let pts = &self.grid.points;
        let slack = 1e-12 * (1.0 + v.abs());
        if v < pts[first] - slack || v > pts[last] + slack {
            return None;
        }
        let v = v.clamp(pts[first], pts[last]);
        if first == last {
            return self.values[first];
        }
        let i = pts[first..=last].partition_point(|&p| p <= v) + first;
        let i = i.clamp(first + 1, last);
        let (v0, v1) = (pts[i - 1], pts[i]);
        let (k0, k1) = (self.values[i - 1]?, self.values[i]?);
        let t = (v - v0) / (v1 - v0);
        Some(k0 + t * (k1 - k0))
    }

    /// Largest absolute change over points feasible in both functions.
    pub fn sup_distance(&self, other: &ValueFunction) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .filter_map(|(a, b)| Some((a.as_ref()? - b.as_ref()?).abs()))
            .fold(0.0, f64::max)
    }

    pub fn same_domain(&self, other: &ValueFunction) -> bool {
        self.values
            .iter()
            .zip(&other.values)
            .all(|(a, b)| a.is_some() == b.is_some())
    }

    /// Range `max K - min K` over the feasible domain.
    pub fn range(&self) -> f64 {
        let vals: Vec<f64> = self.values.iter().flatten().copied().collect();
        let max = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let min = vals.iter().copied().fold(f64::INFINITY, f64::min);
        if vals.is_empty() {
            0.0
        } else {
            max - min
        }
    }

    /// Discrete concavity `K_i >= (K_{i-1} + K_{i+1}) / 2 - tol` at interior
    /// feasible points, with `tol = 1e-6 * range`.
    pub fn check_concavity(&self) -> PropertyReport {
        let mut report = PropertyReport::named("concavity");
        let tol = 1e-6 * self.range();
        for i in 1..self.values.len().saturating_sub(1) {
            if let (Some(a), Some(b), Some(c)) = (self.values[i - 1], self.values[i], self.values[i + 1]) {
                let gap = 0.5 * (a + c) - b;
                if gap > tol {
                    report.record(gap, None, Some(i));
                }
            }
        }
        report
    }
}

/// The contract offered at one promised-value gridpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridContract {
    pub v: f64,
    pub effort_index: usize,
    pub effort: f64,
    pub payments: Vec<f64>,
    pub continuations: Vec<f64>,
    /// Multipliers on promise keeping and incentive compatibility from the
    /// design problem (`None` for lattice controls).
    pub lambda: Option<f64>,
    pub mu: Option<f64>,
    /// Some continuation sits on the edge of the feasible domain.
    pub clamped: bool,
}

/// Per-gridpoint contracts from one Bellman step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContractPolicy {
    pub mode: Mode,
    pub alpha: f64,
    pub grid: PromisedValueGrid,
    pub contracts: Vec<Option<GridContract>>,
}

/// Worst promise-keeping and incentive residuals of a policy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyAudit {
    pub max_pk_residual: f64,
    pub max_ic_gain: f64,
    pub payments_in_bounds: bool,
    pub continuations_in_domain: bool,
}

impl ContractPolicy {
    pub fn contract(&self, i: usize) -> Option<&GridContract> {
        self.contracts.get(i).and_then(Option::as_ref)
    }

    pub fn feasible_indices(&self) -> Vec<usize> {
        (0..self.contracts.len())
            .filter(|&i| self.contracts[i].is_some())
            .collect()
    }

    /// Agent's expected utility `Σ f(y,a) z_y - φ(a)` from following the
    /// schedule with effort `a`.
    pub fn agent_value(c: &GridContract, model: &ModelPrimitives, a: f64) -> f64 {
        let prefs = model.preferences();
        let f = model.distribution().pmf_unchecked(a);
        let rho = prefs.discount();
        let promised: f64 = c
            .payments
            .iter()
            .zip(&c.continuations)
            .zip(&f)
            .map(|((&p, &w), &fy)| fy * (prefs.utility(p) + rho * w))
            .sum();
        promised - prefs.effort_cost(a)
    }

    /// Checks promise keeping and global incentive compatibility at every
    /// feasible gridpoint ("IC" is skipped under full information).
    pub fn audit(&self, model: &ModelPrimitives, domain: (f64, f64)) -> PolicyAudit {
        let bounds = model.payment_bounds();
        let mut out = PolicyAudit {
            max_pk_residual: 0.0,
            max_ic_gain: 0.0,
            payments_in_bounds: true,
            continuations_in_domain: true,
        };
        let slack = 1e-9 * (1.0 + domain.0.abs().max(domain.1.abs()));
        for c in self.contracts.iter().flatten() {
            let own = Self::agent_value(c, model, c.effort);
            out.max_pk_residual = out.max_pk_residual.max((own - c.v).abs());
            if self.mode == Mode::MoralHazard {
                for &a in model.effort_grid().points() {
                    out.max_ic_gain = out.max_ic_gain.max(Self::agent_value(c, model, a) - own);
                }
            }
            out.payments_in_bounds &= c.payments.iter().all(|&p| p >= bounds.min && p <= bounds.max);
            out.continuations_in_domain &= c
                .continuations
                .iter()
                .all(|&w| w >= domain.0 - slack && w <= domain.1 + slack);
        }
        out
    }
}

/// Convergence record of a value iteration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationReport {
    pub iterations: usize,
    pub converged: bool,
    /// Sup-norm change per iteration, over points feasible before and after.
    pub deltas: Vec<f64>,
    /// Iterations at which the set of feasible promises changed.
    pub domain_changes: Vec<usize>,
    pub infeasible: Vec<usize>,
    pub warnings: Vec<String>,
}
