use serde::{Deserialize, Serialize};

use super::ContractPolicy;
use crate::model::{ModelPrimitives, PropertyReport};

/// Monotonicity of the solved schedules in output and in promised value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultsReport {
    /// Payments nondecreasing in output.
    pub r1: PropertyReport,
    /// Continuations nondecreasing in output.
    pub r2: PropertyReport,
    /// Payments and continuations nondecreasing in promised value.
    pub r3: PropertyReport,
    pub tol_payment: f64,
    pub tol_continuation: f64,
}

impl ResultsReport {
    pub fn passed(&self) -> bool {
        self.r1.passed && self.r2.passed && self.r3.passed
    }
}

/// Checks that payments and continuations rise with output at each promised
/// value, and with the promised value at each output. Violations of R1/R2
/// are indexed by (gridpoint, output); R3 by (upper gridpoint, output).
pub fn verify_monotonicity(policy: &ContractPolicy, model: &ModelPrimitives) -> ResultsReport {
    let tol_payment = 1e-6 * model.payment_bounds().range();
    let pts = policy.grid.points();
    let tol_continuation = 1e-6 * (pts[pts.len() - 1] - pts[0]);
    let mut r1 = PropertyReport::named("payments nondecreasing in output");
    let mut r2 = PropertyReport::named("continuations nondecreasing in output");
    let mut r3 = PropertyReport::named("schedules nondecreasing in promised value");
    let feasible = policy.feasible_indices();
    for &i in &feasible {
        let c = policy.contract(i).unwrap();
        for y in 1..c.payments.len() {
            let dp = c.payments[y - 1] - c.payments[y];
            if dp > tol_payment {
                r1.record(dp, Some(i), Some(y));
            }
            let dw = c.continuations[y - 1] - c.continuations[y];
            if dw > tol_continuation {
                r2.record(dw, Some(i), Some(y));
            }
        }
    }
    for pair in feasible.windows(2) {
        let (lo, hi) = (policy.contract(pair[0]).unwrap(), policy.contract(pair[1]).unwrap());
        for y in 0..lo.payments.len() {
            let dp = (lo.payments[y] - hi.payments[y]) / tol_payment;
            let dw = (lo.continuations[y] - hi.continuations[y]) / tol_continuation;
            let worst = dp.max(dw);
            if worst > 1.0 {
                let magnitude = if dp >= dw {
                    lo.payments[y] - hi.payments[y]
                } else {
                    lo.continuations[y] - hi.continuations[y]
                };
                r3.record(magnitude, Some(pair[1]), Some(y));
            }
        }
    }
    ResultsReport {
        r1,
        r2,
        r3,
        tol_payment,
        tol_continuation,
    }
}

/// Agent's best effort against the schedule at one gridpoint.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BestResponse {
    pub effort_index: usize,
    pub effort: f64,
    /// Payoff of the best response minus the payoff of the contracted effort.
    pub gain: f64,
}

/// Brute-force best response over the whole effort grid; ties go to the
/// lowest effort. `None` if the gridpoint carries no contract.
pub fn ic_best_response(policy: &ContractPolicy, model: &ModelPrimitives, index: usize) -> Option<BestResponse> {
    let c = policy.contract(index)?;
    let own = ContractPolicy::agent_value(c, model, c.effort);
    let mut best = (0, f64::NEG_INFINITY);
    for (j, &a) in model.effort_grid().points().iter().enumerate() {
        let value = ContractPolicy::agent_value(c, model, a);
        if value > best.1 {
            best = (j, value);
        }
    }
    Some(BestResponse {
        effort_index: best.0,
        effort: model.effort_grid().points()[best.0],
        gain: best.1 - own,
    })
}
