use serde::{Deserialize, Serialize};

use super::demand::DemandModel;
use super::equilibrium::{best_response, nash_solve, price_cap, EquilibriumResult, FirmCost};
use crate::error::MarketError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlphaEntry {
    pub alpha: f64,
    pub equilibrium: EquilibriumResult,
    /// `(1+α) P*`.
    pub buyer_prices: Vec<f64>,
    /// Fraction of the per-unit cost `α P*` absorbed by each vendor through
    /// a lower price, `(P*(0) - P*(α)) / (α P*(α))`; `None` at `α = 0`.
    pub vendor_shares: Vec<Option<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparativeStaticsReport {
    pub entries: Vec<AlphaEntry>,
    /// Per vendor: prices strictly fall between every consecutive pair of
    /// rates at which the elasticity condition holds at both ends.
    pub strictly_decreasing: Vec<bool>,
    /// Consecutive pairs skipped because the condition failed.
    pub unverified_pairs: Vec<(f64, f64)>,
}

impl ComparativeStaticsReport {
    pub fn passed(&self) -> bool {
        self.strictly_decreasing.iter().all(|&b| b)
    }
}

/// Equilibrium at each rate, with the buyer's out-of-pocket price and the
/// vendors' share of the transaction cost.
pub fn alpha_sweep(
    system: &dyn DemandModel,
    costs: &[FirmCost],
    alphas: &[f64],
    damping: f64,
) -> Result<ComparativeStaticsReport, MarketError> {
    if alphas.iter().any(|a| !(a.is_finite() && *a >= 0.0)) || alphas.windows(2).any(|w| w[0] > w[1]) {
        return Err(MarketError::Invalid {
            field: "alpha_list",
            rule: "rates must be nonnegative and sorted ascending".into(),
        });
    }
    let mut results = Vec::with_capacity(alphas.len());
    for &alpha in alphas {
        results.push(nash_solve(system, costs, alpha, damping, None)?);
    }
    let baseline = match alphas.iter().position(|&a| a == 0.0) {
        Some(k) => results[k].prices.clone(),
        None => nash_solve(system, costs, 0.0, damping, None)?.prices,
    };
    let v = costs.len();
    let mut strictly_decreasing = vec![true; v];
    let mut unverified_pairs = Vec::new();
    for k in 1..results.len() {
        let (a, b) = (&results[k - 1], &results[k]);
        let verified = a.a6.iter().chain(&b.a6).all(|c| c.holds);
        if !verified {
            unverified_pairs.push((a.alpha, b.alpha));
            continue;
        }
        for i in 0..v {
            strictly_decreasing[i] &= b.prices[i] < a.prices[i];
        }
    }
    let entries = results
        .into_iter()
        .map(|eq| {
            let alpha = eq.alpha;
            let buyer_prices = eq.prices.iter().map(|p| (1.0 + alpha) * p).collect();
            let vendor_shares = eq
                .prices
                .iter()
                .zip(&baseline)
                .map(|(p, p0)| (alpha > 0.0).then(|| (p0 - p) / (alpha * p)))
                .collect();
            AlphaEntry {
                alpha,
                equilibrium: eq,
                buyer_prices,
                vendor_shares,
            }
        })
        .collect();
    Ok(ComparativeStaticsReport {
        entries,
        strictly_decreasing,
        unverified_pairs,
    })
}

/// Duopoly reaction curves on a rival-price grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReactionTable {
    pub alpha: f64,
    pub grid: Vec<f64>,
    /// `r₁(P²)` for `P²` on the grid.
    pub firm1: Vec<f64>,
    /// `r₂(P¹)` for `P¹` on the grid.
    pub firm2: Vec<f64>,
    pub slopes_positive: [bool; 2],
    /// Intersection of the two interpolated curves, if inside the grid.
    pub crossing: Option<(f64, f64)>,
}

fn interpolate(grid: &[f64], values: &[f64], x: f64) -> Option<f64> {
    if x < grid[0] || x > grid[grid.len() - 1] {
        return None;
    }
    let k = grid.partition_point(|&g| g <= x).clamp(1, grid.len() - 1);
    let t = (x - grid[k - 1]) / (grid[k] - grid[k - 1]);
    Some(values[k - 1] + t * (values[k] - values[k - 1]))
}

pub fn reaction_curve_table(
    system: &dyn DemandModel,
    costs: &[FirmCost],
    alpha: f64,
    grid: &[f64],
) -> Result<ReactionTable, MarketError> {
    if system.vendors() != 2 || costs.len() != 2 {
        return Err(MarketError::Invalid {
            field: "vendors",
            rule: "reaction curves are tabulated for duopolies".into(),
        });
    }
    if grid.len() < 2 || grid.iter().any(|g| !(g.is_finite() && *g > 0.0)) || grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(MarketError::Invalid {
            field: "grid",
            rule: "rival prices must be positive and strictly ascending".into(),
        });
    }
    let cap = price_cap(costs);
    let mut firm1 = Vec::with_capacity(grid.len());
    let mut firm2 = Vec::with_capacity(grid.len());
    for &g in grid {
        firm1.push(best_response(system, &costs[0], &[g, g], alpha, 0, cap)?.price);
        firm2.push(best_response(system, &costs[1], &[g, g], alpha, 1, cap)?.price);
    }
    let rising = |r: &[f64]| r.windows(2).all(|w| w[1] > w[0]);
    let slopes_positive = [rising(&firm1), rising(&firm2)];

    // Crossing: P¹ solving P¹ = r₁(r₂(P¹)).
    let gap = |p1: f64| -> Option<f64> {
        let p2 = interpolate(grid, &firm2, p1)?;
        Some(interpolate(grid, &firm1, p2)? - p1)
    };
    let mut crossing = None;
    for w in grid.windows(2) {
        if let (Some(a), Some(b)) = (gap(w[0]), gap(w[1])) {
            if a == 0.0 || a.signum() != b.signum() {
                let (mut lo, mut hi, mut fa) = (w[0], w[1], a);
                for _ in 0..100 {
                    let mid = 0.5 * (lo + hi);
                    let fm = gap(mid).unwrap_or(0.0);
                    if fm.signum() == fa.signum() && fm != 0.0 {
                        lo = mid;
                        fa = fm;
                    } else {
                        hi = mid;
                    }
                }
                let p1 = 0.5 * (lo + hi);
                crossing = interpolate(grid, &firm2, p1).map(|p2| (p1, p2));
                break;
            }
        }
    }
    Ok(ReactionTable {
        alpha,
        grid: grid.to_vec(),
        firm1,
        firm2,
        slopes_positive,
        crossing,
    })
}
