//! Forward simulation of a solved contract.
//!
//! A promised value between two gridpoints is honoured by a public lottery
//! over the two neighbouring gridpoint contracts, with the interpolation
//! weights as probabilities. The agent's expected value then equals the
//! interpolated promise and the buyer's expected value equals the
//! piecewise-linear `K`, so simulation and solution agree by construction.
//!
//! Each path `p` draws from `ChaCha8Rng` seeded with the master seed on
//! stream `p`, two uniforms per period (lottery, then output). Compliant and
//! deviating runs with the same seed therefore share their randomness.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::contract::{ContractPolicy, GridContract, ValueFunction};
use crate::error::SimulationError;
use crate::model::ModelPrimitives;

pub const MIN_PATHS: usize = 100;

/// One simulated period.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Period {
    pub t: usize,
    pub v: f64,
    /// Gridpoint whose contract the lottery selected.
    pub gridpoint: usize,
    pub effort: f64,
    pub output_index: usize,
    pub output: f64,
    pub payment: f64,
    pub next_v: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationHistory {
    pub seed: u64,
    pub v0: f64,
    pub periods: Vec<Period>,
}

/// Monte-Carlo estimate of a discounted payoff.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ValueEstimate {
    pub mean: f64,
    pub stderr: f64,
    pub paths: usize,
    pub horizon: usize,
    /// `ρ^T · max |flow| / (1 - ρ)`.
    pub truncation_bound: f64,
    pub seed: u64,
}

impl ValueEstimate {
    /// `|mean - target| <= 3 stderr + truncation bound + slack`.
    pub fn covers(&self, target: f64, slack: f64) -> bool {
        (self.mean - target).abs() <= 3.0 * self.stderr + self.truncation_bound + slack
    }
}

/// Neumaier-compensated sum.
fn compensated_sum(xs: impl IntoIterator<Item = f64>) -> f64 {
    let (mut sum, mut c) = (0.0f64, 0.0f64);
    for x in xs {
        let t = sum + x;
        if sum.abs() >= x.abs() {
            c += (sum - t) + x;
        } else {
            c += (x - t) + sum;
        }
        sum = t;
    }
    sum + c
}

fn summarize(samples: &[f64], horizon: usize, bound: f64, seed: u64) -> ValueEstimate {
    let n = samples.len() as f64;
    let mean = compensated_sum(samples.iter().copied()) / n;
    let var = compensated_sum(samples.iter().map(|x| (x - mean).powi(2))) / (n - 1.0).max(1.0);
    ValueEstimate {
        mean,
        stderr: var.sqrt() / n.sqrt(),
        paths: samples.len(),
        horizon,
        truncation_bound: bound,
        seed,
    }
}

/// Feasible promised-value interval of a policy.
pub fn policy_domain(policy: &ContractPolicy) -> Option<(f64, f64)> {
    let idx = policy.feasible_indices();
    let pts = policy.grid.points();
    Some((pts[*idx.first()?], pts[*idx.last()?]))
}

/// Gridpoint with the highest buyer value.
pub fn buyer_optimal_v0(k: &ValueFunction) -> Option<f64> {
    let pts = k.grid().points();
    let mut best: Option<(usize, f64)> = None;
    for i in 0..pts.len() {
        if let Some(v) = k.value(i) {
            if best.is_none_or(|(_, b)| v > b) {
                best = Some((i, v));
            }
        }
    }
    best.map(|(i, _)| pts[i])
}

struct Runner<'a> {
    policy: &'a ContractPolicy,
    model: &'a ModelPrimitives,
    first: usize,
    last: usize,
    cdfs: Vec<Vec<f64>>,
}

impl<'a> Runner<'a> {
    fn new(policy: &'a ContractPolicy, model: &'a ModelPrimitives, v0: f64) -> Result<Self, SimulationError> {
        let idx = policy.feasible_indices();
        let (Some(&first), Some(&last)) = (idx.first(), idx.last()) else {
            return Err(SimulationError::InfeasibleStart {
                v0,
                lower: f64::NAN,
                upper: f64::NAN,
            });
        };
        let pts = policy.grid.points();
        let slack = 1e-12 * (1.0 + v0.abs());
        if !(v0 >= pts[first] - slack && v0 <= pts[last] + slack) {
            return Err(SimulationError::InfeasibleStart {
                v0,
                lower: pts[first],
                upper: pts[last],
            });
        }
        let cdfs = model
            .effort_grid()
            .points()
            .iter()
            .map(|&a| {
                let mut acc = 0.0;
                model
                    .distribution()
                    .pmf_unchecked(a)
                    .iter()
                    .map(|p| {
                        acc += p;
                        acc
                    })
                    .collect()
            })
            .collect();
        Ok(Runner {
            policy,
            model,
            first,
            last,
            cdfs,
        })
    }

    /// Gridpoint selected by the lottery at state `v` with uniform draw `u`.
    fn select(&self, v: f64, u: f64) -> (usize, &GridContract) {
        let pts = self.policy.grid.points();
        let v = v.clamp(pts[self.first], pts[self.last]);
        let i = if self.first == self.last {
            self.first
        } else {
            let hi = (pts[self.first..=self.last].partition_point(|&p| p < v) + self.first).clamp(self.first + 1, self.last);
            let weight = (v - pts[hi - 1]) / (pts[hi] - pts[hi - 1]);
            if u < weight {
                hi
            } else {
                hi - 1
            }
        };
        (i, self.policy.contract(i).expect("contiguous feasible domain"))
    }

    fn draw_output(&self, effort_index: usize, u: f64) -> usize {
        let cdf = &self.cdfs[effort_index];
        let n = cdf.len();
        let mut i = cdf.partition_point(|&c| c <= u);
        if i >= n {
            i = n - 1;
        }
        // Never land on an output with zero mass through rounding at the top.
        while i > 0 && (cdf[i] - if i > 0 { cdf[i - 1] } else { 0.0 }) <= 0.0 {
            i -= 1;
        }
        i
    }

    /// Runs one path; `effort_of` picks the effort index given the state and
    /// the selected contract.
    fn path(
        &self,
        seed: u64,
        stream: u64,
        v0: f64,
        horizon: usize,
        effort_of: &(dyn Fn(f64, &GridContract) -> usize + Sync),
        mut visit: impl FnMut(Period),
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        let efforts = self.model.effort_grid().points();
        let outputs = self.model.output_grid().points();
        let mut v = v0;
        for t in 0..horizon {
            let u_lottery: f64 = rng.gen();
            let u_output: f64 = rng.gen();
            let (gridpoint, c) = self.select(v, u_lottery);
            let k = effort_of(v, c);
            let y = self.draw_output(k, u_output);
            let next_v = c.continuations[y];
            visit(Period {
                t,
                v,
                gridpoint,
                effort: efforts[k],
                output_index: y,
                output: outputs[y],
                payment: c.payments[y],
                next_v,
            });
            v = next_v;
        }
    }
}

fn comply(_: f64, c: &GridContract) -> usize {
    c.effort_index
}

/// Simulates one history of length `horizon` from `v0` under compliance.
pub fn simulate(
    policy: &ContractPolicy,
    model: &ModelPrimitives,
    v0: f64,
    horizon: usize,
    seed: u64,
) -> Result<SimulationHistory, SimulationError> {
    let runner = Runner::new(policy, model, v0)?;
    let mut periods = Vec::with_capacity(horizon);
    runner.path(seed, 0, v0, horizon, &comply, |p| periods.push(p));
    Ok(SimulationHistory { seed, v0, periods })
}

fn check_paths(paths: usize) -> Result<(), SimulationError> {
    if paths < MIN_PATHS {
        return Err(SimulationError::TooFewPaths {
            min: MIN_PATHS,
            got: paths,
        });
    }
    Ok(())
}

fn tail_bound(rho: f64, horizon: usize, max_flow: f64) -> f64 {
    rho.powi(horizon as i32) * max_flow / (1.0 - rho)
}

fn agent_samples(
    runner: &Runner,
    v0: f64,
    paths: usize,
    horizon: usize,
    seed: u64,
    effort_of: &(dyn Fn(f64, &GridContract) -> usize + Sync),
) -> Vec<f64> {
    let prefs = runner.model.preferences();
    let rho = prefs.discount();
    (0..paths)
        .into_par_iter()
        .map(|p| {
            let mut flows = Vec::with_capacity(horizon);
            let mut discount = 1.0;
            runner.path(seed, p as u64, v0, horizon, effort_of, |period| {
                flows.push(discount * (prefs.utility(period.payment) - prefs.effort_cost(period.effort)));
                discount *= rho;
            });
            compensated_sum(flows)
        })
        .collect()
}

fn agent_bound(model: &ModelPrimitives) -> f64 {
    let prefs = model.preferences();
    let bounds = model.payment_bounds();
    let phi_max = prefs.effort_cost(model.effort_grid().high());
    let phi_min = prefs.effort_cost(model.effort_grid().low());
    (prefs.utility(bounds.max) - phi_min)
        .abs()
        .max((prefs.utility(bounds.min) - phi_max).abs())
}

/// Discounted agent utility `Σ ρ^t [u(P_t) - φ(a_t)]` under compliance.
pub fn estimate_agent_value(
    policy: &ContractPolicy,
    model: &ModelPrimitives,
    v0: f64,
    paths: usize,
    horizon: usize,
    seed: u64,
) -> Result<ValueEstimate, SimulationError> {
    check_paths(paths)?;
    let runner = Runner::new(policy, model, v0)?;
    let samples = agent_samples(&runner, v0, paths, horizon, seed, &comply);
    let bound = tail_bound(model.discount(), horizon, agent_bound(model));
    Ok(summarize(&samples, horizon, bound, seed))
}

/// Discounted agent utility when the agent secretly plays `deviation`, a
/// map from the current promised value to an effort-grid index, while the
/// buyer follows the contract.
pub fn deviation_value(
    policy: &ContractPolicy,
    model: &ModelPrimitives,
    v0: f64,
    deviation: &(dyn Fn(f64) -> usize + Sync),
    paths: usize,
    horizon: usize,
    seed: u64,
) -> Result<ValueEstimate, SimulationError> {
    check_paths(paths)?;
    let runner = Runner::new(policy, model, v0)?;
    let m = model.effort_grid().len();
    let effort_of = |v: f64, _: &GridContract| deviation(v).min(m - 1);
    let samples = agent_samples(&runner, v0, paths, horizon, seed, &effort_of);
    let bound = tail_bound(model.discount(), horizon, agent_bound(model));
    Ok(summarize(&samples, horizon, bound, seed))
}

/// Discounted buyer payoff `Σ ρ^t [y_t - (1+α) P_t]` under compliance, with
/// `α` taken from the policy.
pub fn estimate_principal_value(
    policy: &ContractPolicy,
    model: &ModelPrimitives,
    v0: f64,
    paths: usize,
    horizon: usize,
    seed: u64,
) -> Result<ValueEstimate, SimulationError> {
    check_paths(paths)?;
    let runner = Runner::new(policy, model, v0)?;
    let rho = model.discount();
    let scale = 1.0 + policy.alpha;
    let samples: Vec<f64> = (0..paths)
        .into_par_iter()
        .map(|p| {
            let mut flows = Vec::with_capacity(horizon);
            let mut discount = 1.0;
            runner.path(seed, p as u64, v0, horizon, &comply, |period| {
                flows.push(discount * (period.output - scale * period.payment));
                discount *= rho;
            });
            compensated_sum(flows)
        })
        .collect();
    let outputs = model.output_grid().points();
    let bounds = model.payment_bounds();
    let (y_lo, y_hi) = (outputs[0], outputs[outputs.len() - 1]);
    let max_flow = (y_hi - scale * bounds.min).abs().max((y_lo - scale * bounds.max).abs());
    Ok(summarize(&samples, horizon, tail_bound(rho, horizon, max_flow), seed))
}

/// Pearson statistic of output counts on compliant paths against the mixture
/// implied by the visited efforts. Report-only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrequencyCheck {
    pub observed: Vec<u64>,
    pub expected: Vec<f64>,
    pub statistic: f64,
    pub degrees_of_freedom: usize,
    /// Wilson-Hilferty approximation of the 0.999 chi-square quantile.
    pub critical_value: f64,
    pub within_critical: bool,
}

pub fn output_frequency_check(
    policy: &ContractPolicy,
    model: &ModelPrimitives,
    v0: f64,
    paths: usize,
    horizon: usize,
    seed: u64,
) -> Result<FrequencyCheck, SimulationError> {
    let runner = Runner::new(policy, model, v0)?;
    let n = model.output_grid().len();
    let pmfs: Vec<Vec<f64>> = model
        .effort_grid()
        .points()
        .iter()
        .map(|&a| model.distribution().pmf_unchecked(a))
        .collect();
    let efforts = model.effort_grid().points();
    let mut observed = vec![0u64; n];
    let mut expected = vec![0.0; n];
    for p in 0..paths {
        runner.path(seed, p as u64, v0, horizon, &comply, |period| {
            observed[period.output_index] += 1;
            let k = efforts.iter().position(|&a| a == period.effort).unwrap_or(0);
            for (e, q) in expected.iter_mut().zip(&pmfs[k]) {
                *e += q;
            }
        });
    }
    let cells: Vec<usize> = (0..n).filter(|&y| expected[y] > 0.0).collect();
    let statistic = cells
        .iter()
        .map(|&y| (observed[y] as f64 - expected[y]).powi(2) / expected[y])
        .sum();
    let dof = cells.len().saturating_sub(1).max(1);
    let k = dof as f64;
    let z = 3.090_232_306_167_813;
    let critical_value = k * (1.0 - 2.0 / (9.0 * k) + z * (2.0 / (9.0 * k)).sqrt()).powi(3);
    Ok(FrequencyCheck {
        observed,
        expected,
        statistic,
        degrees_of_freedom: dof,
        critical_value,
        within_critical: statistic <= critical_value,
    })
}
