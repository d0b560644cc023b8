use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::kernel::{ContinuationHull, EffortData, Multipliers, PaymentSide, Stage, StageSolution};
use super::lattice;
use super::{
    ContractPolicy, ControlSpace, GridContract, IterationReport, Mode, PromisedValueGrid, SolverSettings,
    ValueFunction,
};
use crate::error::SolverError;
use crate::model::{check_cdfc, check_mlrp, ModelPrimitives};

/// Converged value function, its policy, and the iteration record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Solution {
    pub value: ValueFunction,
    pub policy: ContractPolicy,
    pub report: IterationReport,
}

/// Everything a Bellman step needs that does not change between iterations.
pub(crate) struct Context<'m> {
    pub(crate) model: &'m ModelPrimitives,
    pub(crate) settings: &'m SolverSettings,
    pub(crate) efforts: Vec<EffortData>,
    pub(crate) pay: PaymentSide,
}

impl<'m> Context<'m> {
    pub(crate) fn new(model: &'m ModelPrimitives, settings: &'m SolverSettings) -> Self {
        let efforts = EffortData::table(model, settings.mode == Mode::MoralHazard);
        let pay = PaymentSide::new(model.preferences(), model.payment_bounds(), settings.alpha);
        Context {
            model,
            settings,
            efforts,
            pay,
        }
    }
}

type Warm = Vec<Option<Multipliers>>;

/// One application of the Bellman operator to `k`.
pub fn bellman_update(
    k: &ValueFunction,
    model: &ModelPrimitives,
    settings: &SolverSettings,
) -> Result<(ValueFunction, ContractPolicy), SolverError> {
    settings.validate()?;
    let ctx = Context::new(model, settings);
    let mut warm = vec![vec![None; ctx.efforts.len()]; k.grid().len()];
    step(&ctx, k, &mut warm)
}

fn step(ctx: &Context, k: &ValueFunction, warm: &mut [Warm]) -> Result<(ValueFunction, ContractPolicy), SolverError> {
    let results = match &ctx.settings.controls {
        ControlSpace::Continuous => continuous_step(ctx, k, warm)?,
        ControlSpace::Lattice { payments, continuations } => lattice::step(ctx, k, payments, continuations)?,
    };
    let grid = k.grid().clone();
    let values = results.iter().map(|r| r.as_ref().map(|(v, _)| *v)).collect();
    let contracts = results.into_iter().map(|r| r.map(|(_, c)| c)).collect();
    let policy = ContractPolicy {
        mode: ctx.settings.mode,
        alpha: ctx.settings.alpha,
        grid: grid.clone(),
        contracts,
    };
    Ok((ValueFunction::new(grid, values), policy))
}

fn continuous_step(
    ctx: &Context,
    k: &ValueFunction,
    warm: &mut [Warm],
) -> Result<Vec<Option<(f64, GridContract)>>, SolverError> {
    let points = k.feasible_points();
    if points.is_empty() {
        return Err(SolverError::EmptyDomain);
    }
    let hull = ContinuationHull::new(&points);
    let stage = Stage::new(&ctx.pay, &hull, ctx.model.discount());
    Ok(k
        .grid()
        .points()
        .par_iter()
        .zip(warm.par_iter_mut())
        .map(|(&v, warm_v)| best_contract(ctx, &stage, k, v, warm_v))
        .collect())
}

/// Buyer value of a solved fixed-effort contract, with payments and
/// continuations mapped back into their boxes.
fn evaluate(ctx: &Context, k: &ValueFunction, e: &EffortData, sol: &StageSolution) -> (f64, Vec<f64>, Vec<f64>, bool) {
    let prefs = ctx.model.preferences();
    let bounds = ctx.model.payment_bounds();
    let (w_lo, w_hi) = k.v_domain().expect("nonempty domain");
    let outputs = ctx.model.output_grid().points();
    let rho = prefs.discount();
    let scale = 1.0 + ctx.settings.alpha;
    let mut value = 0.0;
    let mut clamped = false;
    let payments: Vec<f64> = sol
        .utils
        .iter()
        .map(|&u| prefs.payment_for(u).clamp(bounds.min, bounds.max))
        .collect();
    let conts: Vec<f64> = sol.continuations.iter().map(|&w| w.clamp(w_lo, w_hi)).collect();
    let edge = 1e-12 * (1.0 + w_lo.abs().max(w_hi.abs()));
    for y in 0..payments.len() {
        if e.f[y] > 0.0 {
            let kw = k.interpolate(conts[y]).expect("continuation in domain");
            value += e.f[y] * (outputs[y] - scale * payments[y] + rho * kw);
            clamped |= rho > 0.0 && (conts[y] - w_lo < edge || w_hi - conts[y] < edge) && w_hi > w_lo;
        }
    }
    (value, payments, conts, clamped)
}

fn best_contract(
    ctx: &Context,
    stage: &Stage,
    k: &ValueFunction,
    v: f64,
    warm: &mut Warm,
) -> Option<(f64, GridContract)> {
    let mut order: Vec<(usize, f64)> = ctx
        .efforts
        .iter()
        .enumerate()
        .filter(|(_, e)| e.implementable)
        .map(|(i, e)| {
            let bound = match warm[i] {
                Some(m) => e.expected_output + stage.dual_bound(e, v + e.cost, m),
                None => f64::INFINITY,
            };
            (i, bound)
        })
        .collect();
    order.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));

    let mut best: Option<(f64, usize, StageSolution)> = None;
    for (i, bound) in order {
        let e = &ctx.efforts[i];
        if let Some((value, _, _)) = &best {
            if bound < value - 1e-12 * (1.0 + value.abs()) {
                break;
            }
        }
        let Some(sol) = stage.solve(e, v + e.cost, warm[i]) else {
            warm[i] = None;
            continue;
        };
        let m = sol.multipliers;
        warm[i] = (m.lambda.is_finite() && m.mu.is_finite()).then_some(m);
        let (value, _, _, _) = evaluate(ctx, k, e, &sol);
        let better = match &best {
            None => true,
            Some((b, j, _)) => {
                let eps = 1e-12 * (1.0 + b.abs());
                value > b + eps || (value >= b - eps && i < *j)
            }
        };
        if better {
            best = Some((value, i, sol));
        }
    }
    let (_, i, sol) = best?;
    let e = &ctx.efforts[i];
    let (value, payments, continuations, clamped) = evaluate(ctx, k, e, &sol);
    let finite = |x: f64| x.is_finite().then_some(x);
    Some((
        value,
        GridContract {
            v,
            effort_index: i,
            effort: e.effort,
            payments,
            continuations,
            lambda: finite(sol.multipliers.lambda),
            mu: finite(sol.multipliers.mu),
            clamped,
        },
    ))
}

fn check_contiguous(k: &ValueFunction) -> Result<(), SolverError> {
    let (first, last) = k.domain().ok_or(SolverError::EmptyDomain)?;
    match (first..=last).find(|&i| k.value(i).is_none()) {
        Some(index) => Err(SolverError::NonContiguousDomain { index }),
        None => Ok(()),
    }
}

/// Value iteration from `K ≡ 0` to a fixed point of the Bellman operator.
pub fn solve(model: &ModelPrimitives, settings: &SolverSettings) -> Result<Solution, SolverError> {
    settings.validate()?;
    let mut warnings = Vec::new();
    if settings.mode == Mode::MoralHazard {
        let mlrp = check_mlrp(model.distribution(), model.effort_grid());
        let cdfc = check_cdfc(model.distribution(), model.effort_grid());
        for report in [mlrp, cdfc] {
            if !report.passed {
                let msg = format!("{} fails on this model; monotonicity results are not guaranteed", report.property);
                log::warn!("{msg}");
                warnings.push(msg);
            }
        }
    }
    let grid = PromisedValueGrid::for_model(model, settings.v_points)?;
    let ctx = Context::new(model, settings);
    let mut warm = vec![vec![None; ctx.efforts.len()]; grid.len()];
    let mut k = ValueFunction::zero(grid);
    let mut deltas = Vec::new();
    let mut domain_changes = Vec::new();
    for iteration in 1..=settings.max_iterations {
        let (next, policy) = step(&ctx, &k, &mut warm)?;
        check_contiguous(&next)?;
        let delta = next.sup_distance(&k);
        let same = next.same_domain(&k);
        deltas.push(delta);
        if !same {
            domain_changes.push(iteration);
        }
        k = next;
        if same && delta <= settings.tol_vi {
            let infeasible = (0..k.grid().len()).filter(|&i| k.value(i).is_none()).collect();
            return Ok(Solution {
                value: k,
                policy,
                report: IterationReport {
                    iterations: iteration,
                    converged: true,
                    deltas,
                    domain_changes,
                    infeasible,
                    warnings,
                },
            });
        }
    }
    Err(SolverError::NotConverged {
        iterations: settings.max_iterations,
        last_delta: deltas.last().copied().unwrap_or(f64::NAN),
        history: deltas,
    })
}
