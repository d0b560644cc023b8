use serde::{Deserialize, Serialize};

use super::{ContractPolicy, Mode, ValueFunction};
use crate::model::ModelPrimitives;

/// Multipliers and first-order residuals at one promised value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultiplierPoint {
    pub index: usize,
    pub v: f64,
    /// `-K'(v)` by finite difference.
    pub lambda_fd: f64,
    /// The difference used one side only (edge of the domain).
    pub one_sided: bool,
    /// Least-squares fit of `(1+α)/u'(P) = λ + μ f_a/f` over outputs with
    /// interior payments.
    pub lambda: f64,
    pub mu: f64,
    pub fit_residual: f64,
    pub fitted_outputs: usize,
    /// `μ` is only identified when the fitted outputs carry at least two
    /// distinct likelihood ratios.
    pub mu_identified: bool,
    /// Worst sign violation of the complementary-slackness condition at
    /// outputs whose payment sits on a bound.
    pub corner_violation: f64,
    /// Worst distance of `λ + μ f_a/f` from the supergradient of `K` at the
    /// chosen continuation.
    pub continuation_residual: f64,
    /// Distance of `λ` from the discrete supergradient
    /// `[-(K_i - K_{i-1})/h, -(K_{i+1} - K_i)/h]`.
    pub envelope_bracket_gap: f64,
    /// Two-sided difference available and `μ` identified.
    pub interior: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultiplierEstimates {
    pub mode: Mode,
    pub alpha: f64,
    pub points: Vec<MultiplierPoint>,
    /// Mean `|λ|` over interior points, the scale for relative tolerances.
    pub lambda_scale: f64,
}

impl MultiplierEstimates {
    fn interior(&self) -> impl Iterator<Item = &MultiplierPoint> {
        self.points.iter().filter(|p| p.interior)
    }

    pub fn max_fit_residual(&self) -> f64 {
        self.interior().map(|p| p.fit_residual).fold(0.0, f64::max)
    }

    /// Largest `|λ - λ_fd|`.
    pub fn max_envelope_gap(&self) -> f64 {
        self.interior()
            .map(|p| (p.lambda - p.lambda_fd).abs())
            .fold(0.0, f64::max)
    }

    pub fn max_envelope_bracket_gap(&self) -> f64 {
        self.interior().map(|p| p.envelope_bracket_gap).fold(0.0, f64::max)
    }

    pub fn max_continuation_residual(&self) -> f64 {
        self.interior().map(|p| p.continuation_residual).fold(0.0, f64::max)
    }

    pub fn max_corner_violation(&self) -> f64 {
        self.interior().map(|p| p.corner_violation).fold(0.0, f64::max)
    }
}

/// Supergradient interval `[-K'_+(w), -K'_-(w)]` of the piecewise-linear
/// value at `w`, as shadow prices.
fn shadow_interval(k: &ValueFunction, w: f64) -> Option<(f64, f64)> {
    let (first, last) = k.domain()?;
    let pts = k.grid().points();
    let slope = |i: usize| -> f64 {
        let (a, b) = (k.value(i).unwrap(), k.value(i + 1).unwrap());
        -(b - a) / (pts[i + 1] - pts[i])
    };
    if first == last {
        return Some((f64::NEG_INFINITY, f64::INFINITY));
    }
    let h = pts[first + 1] - pts[first];
    let near = |i: usize| (w - pts[i]).abs() <= 1e-9 * h;
    for i in first..=last {
        if near(i) {
            let left = if i > first { slope(i - 1) } else { f64::NEG_INFINITY };
            let right = if i < last { slope(i) } else { f64::INFINITY };
            return Some((left.min(right), left.max(right)));
        }
    }
    let seg = (first..last).find(|&i| w > pts[i] && w < pts[i + 1])?;
    let s = slope(seg);
    Some((s, s))
}

/// Recovers `λ(v)` and `μ(v)` from a solved policy and checks the
/// first-order conditions for payments and continuations.
///
/// Both multipliers are fitted jointly. The finite-difference `-K'(v)` is
/// reported alongside: on a discrete grid the solved `λ(v)` is a staircase,
/// so it agrees with the centered difference only to `O(h |K''|)`, while it
/// always lies in the one-sided bracket.
pub fn recover_multipliers(
    policy: &ContractPolicy,
    k: &ValueFunction,
    model: &ModelPrimitives,
    alpha: f64,
) -> MultiplierEstimates {
    let prefs = model.preferences();
    let bounds = model.payment_bounds();
    let dist = model.distribution();
    let d = dist.anchor_difference();
    let pts = k.grid().points();
    let (first, last) = k.domain().unwrap_or((0, 0));
    let edge = 1e-9 * bounds.range();
    let mut points = Vec::new();
    for i in policy.feasible_indices() {
        let c = policy.contract(i).unwrap();
        let value = |j: usize| k.value(j);
        let bracket = match (i.checked_sub(1).and_then(value), value(i), value(i + 1)) {
            (Some(a), Some(b), Some(c)) => Some((-(b - a) / (pts[i] - pts[i - 1]), -(c - b) / (pts[i + 1] - pts[i]))),
            _ => None,
        };
        let (lambda_fd, one_sided) = match (i.checked_sub(1).and_then(value), value(i + 1)) {
            (Some(a), Some(b)) if i > first && i < last => (-(b - a) / (pts[i + 1] - pts[i - 1]), false),
            (_, Some(b)) => (-(b - value(i).unwrap()) / (pts[i + 1] - pts[i]), true),
            (Some(a), _) => (-(value(i).unwrap() - a) / (pts[i] - pts[i - 1]), true),
            _ => (f64::NAN, true),
        };
        let f = dist.pmf_unchecked(c.effort);
        let slope = dist.mix_slope(c.effort);
        let ratio: Vec<f64> = f
            .iter()
            .zip(&d)
            .map(|(&fy, &dy)| if fy > 0.0 { slope * dy / fy } else { 0.0 })
            .collect();
        let lhs: Vec<f64> = c
            .payments
            .iter()
            .map(|&p| (1.0 + alpha) / prefs.marginal_utility(p))
            .collect();
        let used: Vec<usize> = (0..f.len())
            .filter(|&y| f[y] > 0.0 && c.payments[y] > bounds.min + edge && c.payments[y] < bounds.max - edge)
            .collect();
        let (lambda, mu, identified) = fit(&used, &lhs, &ratio);
        let fit_residual = used
            .iter()
            .map(|&y| (lhs[y] - lambda - mu * ratio[y]).abs())
            .fold(0.0, f64::max);
        let mut corner_violation: f64 = 0.0;
        let mut continuation_residual: f64 = 0.0;
        for y in 0..f.len() {
            if f[y] <= 0.0 {
                continue;
            }
            let s = lambda + mu * ratio[y];
            if c.payments[y] <= bounds.min + edge {
                corner_violation = corner_violation.max(s - lhs[y]);
            } else if c.payments[y] >= bounds.max - edge {
                corner_violation = corner_violation.max(lhs[y] - s);
            }
            if prefs.discount() > 0.0 {
                if let Some((lo, hi)) = shadow_interval(k, c.continuations[y]) {
                    let gap = if s < lo { lo - s } else if s > hi { s - hi } else { 0.0 };
                    continuation_residual = continuation_residual.max(gap);
                }
            }
        }
        let envelope_bracket_gap = match bracket {
            Some((lo, hi)) => {
                let (lo, hi) = (lo.min(hi), lo.max(hi));
                if lambda < lo {
                    lo - lambda
                } else if lambda > hi {
                    lambda - hi
                } else {
                    0.0
                }
            }
            None => f64::NAN,
        };
        points.push(MultiplierPoint {
            index: i,
            v: c.v,
            lambda_fd,
            one_sided,
            lambda,
            mu,
            fit_residual,
            fitted_outputs: used.len(),
            mu_identified: identified,
            corner_violation,
            continuation_residual,
            envelope_bracket_gap,
            interior: !one_sided && identified,
        });
    }
    let interior: Vec<f64> = points.iter().filter(|p| p.interior).map(|p| p.lambda.abs()).collect();
    let lambda_scale = if interior.is_empty() {
        0.0
    } else {
        interior.iter().sum::<f64>() / interior.len() as f64
    };
    MultiplierEstimates {
        mode: policy.mode,
        alpha,
        points,
        lambda_scale,
    }
}

/// Ordinary least squares of `lhs = λ + μ x` over the used outputs.
fn fit(used: &[usize], lhs: &[f64], x: &[f64]) -> (f64, f64, bool) {
    if used.is_empty() {
        return (f64::NAN, f64::NAN, false);
    }
    let n = used.len() as f64;
    let mean_l = used.iter().map(|&y| lhs[y]).sum::<f64>() / n;
    let mean_x = used.iter().map(|&y| x[y]).sum::<f64>() / n;
    let sxx: f64 = used.iter().map(|&y| (x[y] - mean_x).powi(2)).sum();
    let sxl: f64 = used.iter().map(|&y| (x[y] - mean_x) * (lhs[y] - mean_l)).sum();
    let spread = used.iter().map(|&y| x[y]).fold(f64::NEG_INFINITY, f64::max)
        - used.iter().map(|&y| x[y]).fold(f64::INFINITY, f64::min);
    if spread <= 1e-12 || sxx <= 0.0 {
        return (mean_l, 0.0, false);
    }
    let mu = sxl / sxx;
    (mean_l - mu * mean_x, mu, true)
}
