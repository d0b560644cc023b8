use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::demand::{check_prices, DemandModel};
use crate::error::MarketError;
use crate::model::PropertyReport;

pub const TOL_FP: f64 = 1e-10;
pub const TOL_FOC: f64 = 1e-8;
pub const TOL_NASH: f64 = 1e-9;
pub const MAX_ITERATIONS: usize = 10_000;

/// Fixed cost plus constant marginal cost.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FirmCost {
    pub fixed: f64,
    pub marginal: f64,
}

impl FirmCost {
    pub fn new(fixed: f64, marginal: f64) -> Result<Self, MarketError> {
        if !(fixed.is_finite() && fixed >= 0.0) {
            return Err(MarketError::Invalid {
                field: "fixed_cost",
                rule: "must be finite and nonnegative".into(),
            });
        }
        if !(marginal.is_finite() && marginal > 0.0) {
            return Err(MarketError::Invalid {
                field: "marginal_cost",
                rule: "must be finite and positive".into(),
            });
        }
        Ok(FirmCost { fixed, marginal })
    }
}

/// Profit `P^i N^i - FC - c^i N^i` of vendor `i`.
pub fn profit(system: &dyn DemandModel, cost: &FirmCost, prices: &[f64], alpha: f64, i: usize) -> f64 {
    let n = system.quantities(prices, alpha)[i];
    (prices[i] - cost.marginal) * n - cost.fixed
}

/// Pricing-condition residual `P (1 - 1/(η (1+α))) - c`.
pub fn foc_residual(system: &dyn DemandModel, cost: &FirmCost, prices: &[f64], alpha: f64, i: usize) -> f64 {
    let eta = system.elasticity_unchecked(prices, alpha, i);
    prices[i] * (1.0 - 1.0 / (eta * (1.0 + alpha))) - cost.marginal
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BestResponse {
    pub price: f64,
    pub profit: f64,
    pub foc_residual: f64,
    /// The maximizer sits at the price cap.
    pub capped: bool,
    /// Profit on the scan rose then fell.
    pub unimodal: bool,
}

const SCAN_POINTS: usize = 401;

/// Profit-maximizing price of vendor `i` against the rival prices in
/// `prices` (its own entry is ignored), searched on `(c^i, cap]`.
pub fn best_response(
    system: &dyn DemandModel,
    cost: &FirmCost,
    prices: &[f64],
    alpha: f64,
    i: usize,
    cap: f64,
) -> Result<BestResponse, MarketError> {
    check_prices(prices, system.vendors())?;
    let c = cost.marginal;
    if !(cap > c) {
        return Err(MarketError::Invalid {
            field: "price_cap",
            rule: format!("cap {cap} must exceed marginal cost {c}"),
        });
    }
    let mut p = prices.to_vec();
    let mut at = |x: f64| {
        p[i] = x;
        profit(system, cost, &p, alpha, i)
    };
    let lo = c * (1.0 + 1e-9);
    let ratio = (cap / lo).ln() / (SCAN_POINTS - 1) as f64;
    let grid: Vec<f64> = (0..SCAN_POINTS).map(|k| lo * (ratio * k as f64).exp()).collect();
    let values: Vec<f64> = grid.iter().map(|&x| at(x)).collect();
    let j = (0..SCAN_POINTS)
        .max_by(|&a, &b| values[a].total_cmp(&values[b]).then(b.cmp(&a)))
        .unwrap();
    let slack = 1e-13 * values[j].abs().max(1e-300);
    let unimodal = values[..=j].windows(2).all(|w| w[1] >= w[0] - slack)
        && values[j..].windows(2).all(|w| w[1] <= w[0] + slack);
    let capped = j == SCAN_POINTS - 1;

    // Golden-section search on the neighbouring scan cells.
    let (mut a, mut b) = (grid[j.saturating_sub(1)], grid[(j + 1).min(SCAN_POINTS - 1)]);
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let (mut x1, mut x2) = (b - g * (b - a), a + g * (b - a));
    let (mut f1, mut f2) = (at(x1), at(x2));
    while b - a > 1e-13 * b {
        if f1 < f2 {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + g * (b - a);
            f2 = at(x2);
        } else {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - g * (b - a);
            f1 = at(x1);
        }
    }
    let mut price = 0.5 * (a + b);

    // The pricing condition pins the maximizer more sharply than profit
    // does; polish with a bracketed secant on the residual.
    if !capped {
        let mut q = prices.to_vec();
        let mut resid = |x: f64| {
            q[i] = x;
            foc_residual(system, cost, &q, alpha, i)
        };
        let step = 1e-6 * price;
        let (mut l, mut h) = (price - step, price + step);
        let (mut rl, mut rh) = (resid(l), resid(h));
        let mut widen = 0;
        while rl.signum() == rh.signum() && widen < 40 {
            l = (l - step * 2f64.powi(widen)).max(lo);
            h = (h + step * 2f64.powi(widen)).min(cap);
            rl = resid(l);
            rh = resid(h);
            widen += 1;
        }
        if rl.signum() != rh.signum() {
            for _ in 0..200 {
                let mut x = l - rl * (h - l) / (rh - rl);
                if !(x > l && x < h) {
                    x = 0.5 * (l + h);
                }
                let r = resid(x);
                if r == 0.0 || h - l <= 4.0 * f64::EPSILON * h {
                    price = x;
                    break;
                }
                if r.signum() == rl.signum() {
                    l = x;
                    rl = r;
                } else {
                    h = x;
                    rh = r;
                }
                price = x;
                if r.abs() < 1e-14 * c {
                    break;
                }
            }
        }
    }
    let mut q = prices.to_vec();
    q[i] = price;
    Ok(BestResponse {
        price,
        profit: profit(system, cost, &q, alpha, i),
        foc_residual: foc_residual(system, cost, &q, alpha, i),
        capped,
        unimodal,
    })
}

/// Inequality check of the elasticity-of-elasticity condition.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct A6Check {
    /// `d ln η / d ln P` by central difference.
    pub lhs: f64,
    /// `1 - η (1+α)`.
    pub rhs: f64,
    pub margin: f64,
    pub holds: bool,
}

pub fn check_a6(system: &dyn DemandModel, prices: &[f64], alpha: f64, i: usize) -> Result<A6Check, MarketError> {
    check_prices(prices, system.vendors())?;
    let h: f64 = 1e-4;
    let mut up = prices.to_vec();
    let mut down = prices.to_vec();
    up[i] *= h.exp();
    down[i] *= (-h).exp();
    let lhs = (system.elasticity_unchecked(&up, alpha, i).ln() - system.elasticity_unchecked(&down, alpha, i).ln())
        / (2.0 * h);
    let rhs = 1.0 - system.elasticity_unchecked(prices, alpha, i) * (1.0 + alpha);
    let margin = lhs - rhs;
    Ok(A6Check {
        lhs,
        rhs,
        margin,
        holds: margin > 0.0,
    })
}

/// Elasticity nondecreasing as vendor `i`'s price rises relative to the
/// (fixed) rival prices: `P^i = ratio · mean rival price`.
pub fn check_a5(system: &dyn DemandModel, rivals: &[f64], i: usize, ratios: &[f64], alpha: f64) -> Result<PropertyReport, MarketError> {
    check_prices(rivals, system.vendors())?;
    let others: Vec<f64> = (0..rivals.len()).filter(|&j| j != i).map(|j| rivals[j]).collect();
    let reference = others.iter().sum::<f64>() / others.len() as f64;
    let mut report = PropertyReport::named("elasticity nondecreasing in relative price");
    let mut last: Option<f64> = None;
    for (k, &r) in ratios.iter().enumerate() {
        let mut p = rivals.to_vec();
        p[i] = r * reference;
        check_prices(&p, system.vendors())?;
        let eta = system.elasticity_unchecked(&p, alpha, i);
        if let Some(prev) = last {
            let drop = prev - eta;
            if drop > 1e-12 * prev.abs().max(1.0) {
                report.record(drop, Some(k), Some(i));
            }
        }
        last = Some(eta);
    }
    Ok(report)
}

/// Largest profit gain any vendor finds on a 101-point deviation scan over
/// `[0.5 P*, 2 P*]`, relative to its variable profit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NashAudit {
    pub max_gain: Vec<f64>,
    pub profit_scale: Vec<f64>,
    pub passed: bool,
}

pub fn nash_audit(system: &dyn DemandModel, costs: &[FirmCost], prices: &[f64], alpha: f64) -> NashAudit {
    let mut max_gain = Vec::new();
    let mut scale = Vec::new();
    let mut passed = true;
    for i in 0..prices.len() {
        let base = profit(system, &costs[i], prices, alpha, i);
        let s = (base + costs[i].fixed).abs().max(f64::MIN_POSITIVE);
        let mut p = prices.to_vec();
        let mut gain = f64::NEG_INFINITY;
        for k in 0..=100 {
            p[i] = prices[i] * (0.5 + 1.5 * k as f64 / 100.0);
            gain = gain.max(profit(system, &costs[i], &p, alpha, i) - base);
        }
        passed &= gain <= TOL_NASH * s;
        max_gain.push(gain);
        scale.push(s);
    }
    NashAudit {
        max_gain,
        profit_scale: scale,
        passed,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquilibriumResult {
    pub prices: Vec<f64>,
    pub demands: Vec<f64>,
    pub elasticities: Vec<f64>,
    /// Profits net of fixed cost.
    pub profits: Vec<f64>,
    pub alpha: f64,
    pub iterations: usize,
    /// Largest price change in the final iteration.
    pub residual: f64,
    pub foc_residuals: Vec<f64>,
    pub a6: Vec<A6Check>,
    pub audit: NashAudit,
    pub capped: bool,
}

/// Price cap for best-response brackets: `100 · max c`.
pub fn price_cap(costs: &[FirmCost]) -> f64 {
    100.0 * costs.iter().map(|c| c.marginal).fold(0.0, f64::max)
}

/// Damped simultaneous best-response iteration from `start` (or `2c`).
pub fn nash_solve(
    system: &dyn DemandModel,
    costs: &[FirmCost],
    alpha: f64,
    damping: f64,
    start: Option<&[f64]>,
) -> Result<EquilibriumResult, MarketError> {
    let v = system.vendors();
    if costs.len() != v {
        return Err(MarketError::Invalid {
            field: "costs",
            rule: format!("need one cost per vendor ({v}), got {}", costs.len()),
        });
    }
    if !(damping > 0.0 && damping <= 1.0) {
        return Err(MarketError::Invalid {
            field: "damping",
            rule: format!("must lie in (0, 1], got {damping}"),
        });
    }
    let cap = price_cap(costs);
    let mut prices: Vec<f64> = match start {
        Some(s) => s.to_vec(),
        None => costs.iter().map(|c| 2.0 * c.marginal).collect(),
    };
    check_prices(&prices, v)?;
    let mut trace = Vec::new();
    for iteration in 1..=MAX_ITERATIONS {
        let mut next = Vec::with_capacity(v);
        let mut capped = false;
        for i in 0..v {
            let br = best_response(system, &costs[i], &prices, alpha, i, cap)?;
            capped |= br.capped;
            next.push((1.0 - damping) * prices[i] + damping * br.price);
        }
        let change = next
            .iter()
            .zip(&prices)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        trace.push(change);
        prices = next;
        if change <= TOL_FP {
            return Ok(summarize(system, costs, alpha, prices, iteration, change, capped));
        }
    }
    Err(MarketError::NotConverged {
        iterations: MAX_ITERATIONS,
        last_change: trace.last().copied().unwrap_or(f64::NAN),
        trace,
    })
}

fn summarize(
    system: &dyn DemandModel,
    costs: &[FirmCost],
    alpha: f64,
    prices: Vec<f64>,
    iterations: usize,
    residual: f64,
    capped: bool,
) -> EquilibriumResult {
    let v = prices.len();
    let demands = system.quantities(&prices, alpha);
    let elasticities = (0..v).map(|i| system.elasticity_unchecked(&prices, alpha, i)).collect();
    let profits = (0..v).map(|i| profit(system, &costs[i], &prices, alpha, i)).collect();
    let foc_residuals = (0..v).map(|i| foc_residual(system, &costs[i], &prices, alpha, i)).collect();
    let a6 = (0..v)
        .map(|i| check_a6(system, &prices, alpha, i).expect("validated prices"))
        .collect();
    let audit = nash_audit(system, costs, &prices, alpha);
    EquilibriumResult {
        prices,
        demands,
        elasticities,
        profits,
        alpha,
        iterations,
        residual,
        foc_residuals,
        a6,
        audit,
        capped,
    }
}

/// Convergence of the damped iteration from random starting prices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    pub starts: Vec<Vec<f64>>,
    pub endpoints: Vec<Vec<f64>>,
    /// Largest distance of any endpoint from the first one.
    pub max_spread: f64,
    pub stable: bool,
}

/// Runs `nash_solve` from `count` starts drawn uniformly in `[c, 10c]`.
pub fn stability(
    system: &dyn DemandModel,
    costs: &[FirmCost],
    alpha: f64,
    damping: f64,
    count: usize,
    seed: u64,
) -> Result<StabilityReport, MarketError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut starts = Vec::with_capacity(count);
    let mut endpoints = Vec::with_capacity(count);
    for _ in 0..count {
        let start: Vec<f64> = costs
            .iter()
            .map(|c| c.marginal * (1.0 + 9.0 * rng.gen::<f64>()))
            .collect();
        let eq = nash_solve(system, costs, alpha, damping, Some(&start))?;
        starts.push(start);
        endpoints.push(eq.prices);
    }
    let max_spread = endpoints
        .iter()
        .map(|e| {
            e.iter()
                .zip(&endpoints[0])
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max)
        })
        .fold(0.0, f64::max);
    Ok(StabilityReport {
        starts,
        endpoints,
        max_spread,
        stable: max_spread <= 1e-8,
    })
}
