//! One-period contract design at a fixed promised value and effort.
//!
//! Write `z_y = u(P_y) + ρ w_y` for the utility promised after output `y`.
//! Promise keeping is then `Σ f(y,a) z_y = v + φ(a)` and, because the
//! output distribution is a two-anchor mixture, incentive compatibility over
//! the whole effort grid collapses to an interval constraint on the single
//! functional `D = Σ (f_high - f_low)(y) z_y`. For a fixed `z_y` the split
//! between payment and continuation is a concave one-dimensional problem,
//! so the design problem is a separable concave program with two linear
//! constraints.
//!
//! It is solved through its two-dimensional dual. For given multipliers
//! `(λ, μ)` every output independently buys utility at the shadow price
//! `s_y = λ + μ (f_a / f)(y)`: payments solve `(1+α) / u'(P) = s_y` and
//! continuations sit on the vertex of the concave hull of `K` whose
//! supergradient contains `-s_y`. Both multipliers are found by bracketing
//! monotone root searches, and the primal contract is recovered as the
//! convex combination of the bracket-end responses that meets both
//! constraints exactly.

use crate::model::{ModelPrimitives, PaymentBounds, Preferences};

/// Payment side of the per-output problem: buying `u` utils costs
/// `(1+α) u^{1/γ}` in money.
#[derive(Debug, Clone)]
pub(crate) struct PaymentSide {
    gamma: f64,
    scale: f64,
    u_lo: f64,
    u_hi: f64,
    s_lo: f64,
    s_hi: f64,
    response_exponent: f64,
}

impl PaymentSide {
    pub(crate) fn new(prefs: &Preferences, bounds: PaymentBounds, alpha: f64) -> Self {
        let gamma = prefs.utility_exponent();
        let scale = 1.0 + alpha;
        let u_lo = prefs.utility(bounds.min);
        let u_hi = prefs.utility(bounds.max);
        let mut side = PaymentSide {
            gamma,
            scale,
            u_lo,
            u_hi,
            s_lo: 0.0,
            s_hi: 0.0,
            response_exponent: gamma / (1.0 - gamma),
        };
        side.s_lo = side.marginal(u_lo);
        side.s_hi = side.marginal(u_hi);
        side
    }

    pub(crate) fn u_bounds(&self) -> (f64, f64) {
        (self.u_lo, self.u_hi)
    }

    /// Money cost `(1+α) u^{1/γ}` of delivering `u` utils.
    pub(crate) fn cost(&self, u: f64) -> f64 {
        self.scale * u.max(0.0).powf(1.0 / self.gamma)
    }

    /// Marginal money cost of a util, `(1+α) / u'(P)`.
    pub(crate) fn marginal(&self, u: f64) -> f64 {
        self.scale / self.gamma * u.max(0.0).powf((1.0 - self.gamma) / self.gamma)
    }

    /// Utils bought at shadow price `s`.
    #[inline]
    pub(crate) fn respond(&self, s: f64) -> f64 {
        if s <= self.s_lo {
            self.u_lo
        } else if s >= self.s_hi {
            self.u_hi
        } else {
            let base = self.gamma * s / self.scale;
            if self.response_exponent == 1.0 {
                base
            } else {
                base.powf(self.response_exponent)
            }
        }
    }

    /// `max_u s u - cost(u)` over the payment bounds.
    pub(crate) fn conjugate(&self, s: f64) -> f64 {
        let u = self.respond(s);
        s * u - self.cost(u)
    }
}

/// Upper concave hull of the continuation value function on its feasible
/// domain.
#[derive(Debug, Clone)]
pub(crate) struct ContinuationHull {
    w: Vec<f64>,
    k: Vec<f64>,
    /// `g_j = -(k_{j+1} - k_j) / (w_{j+1} - w_j)`, strictly increasing.
    g: Vec<f64>,
}

impl ContinuationHull {
    pub(crate) fn new(points: &[(f64, f64)]) -> Self {
        let mut hull: Vec<(f64, f64)> = Vec::with_capacity(points.len());
        for &p in points {
            while hull.len() >= 2 {
                let (w0, k0) = hull[hull.len() - 2];
                let (w1, k1) = hull[hull.len() - 1];
                // Drop the middle point when it lies on or below the chord.
                if (k1 - k0) * (p.0 - w0) <= (p.1 - k0) * (w1 - w0) {
                    hull.pop();
                } else {
                    break;
                }
            }
            hull.push(p);
        }
        let g = hull
            .windows(2)
            .map(|s| -(s[1].1 - s[0].1) / (s[1].0 - s[0].0))
            .collect();
        ContinuationHull {
            w: hull.iter().map(|p| p.0).collect(),
            k: hull.iter().map(|p| p.1).collect(),
            g,
        }
    }

    pub(crate) fn domain(&self) -> (f64, f64) {
        (self.w[0], self.w[self.w.len() - 1])
    }

    #[inline]
    pub(crate) fn vertex(&self, s: f64) -> usize {
        self.g.partition_point(|&g| g < s)
    }

    #[inline]
    pub(crate) fn point(&self, j: usize) -> f64 {
        self.w[j]
    }

    pub(crate) fn conjugate(&self, s: f64) -> f64 {
        let j = self.vertex(s);
        self.k[j] + s * self.w[j]
    }

    fn slope_range(&self) -> (f64, f64) {
        match (self.g.first(), self.g.last()) {
            (Some(&a), Some(&b)) => (a, b),
            _ => (f64::INFINITY, f64::NEG_INFINITY),
        }
    }
}

/// Per-effort quantities that do not depend on the promised value.
#[derive(Debug, Clone)]
pub(crate) struct EffortData {
    pub(crate) effort: f64,
    pub(crate) cost: f64,
    pub(crate) f: Vec<f64>,
    /// `f_high - f_low` scaled by nothing; `D = Σ d_y z_y`.
    pub(crate) d: Vec<f64>,
    /// `d_y / f_y` on outputs with positive mass, 0 elsewhere.
    pub(crate) r: Vec<f64>,
    pub(crate) expected_output: f64,
    /// Admissible `D` interval under hidden action; `None` when effort is
    /// contractible.
    pub(crate) ic: Option<(f64, f64)>,
    pub(crate) implementable: bool,
}

impl EffortData {
    /// Per-effort data for every effort on the grid. `hidden_action`
    /// toggles the incentive interval.
    pub(crate) fn table(model: &ModelPrimitives, hidden_action: bool) -> Vec<EffortData> {
        let dist = model.distribution();
        let prefs = model.preferences();
        let efforts = model.effort_grid().points();
        let d = dist.anchor_difference();
        let mixes: Vec<f64> = efforts.iter().map(|&a| dist.mix(a)).collect();
        let costs: Vec<f64> = efforts.iter().map(|&a| prefs.effort_cost(a)).collect();
        let outputs = model.output_grid().points();
        efforts
            .iter()
            .enumerate()
            .map(|(k, &a)| {
                let f = dist.pmf_unchecked(a);
                let r = f
                    .iter()
                    .zip(&d)
                    .map(|(&fy, &dy)| if fy > 0.0 { dy / fy } else { 0.0 })
                    .collect();
                let expected_output = f.iter().zip(outputs).map(|(p, y)| p * y).sum();
                let (ic, implementable) = if hidden_action {
                    incentive_interval(k, &mixes, &costs)
                } else {
                    (None, true)
                };
                EffortData {
                    effort: a,
                    cost: costs[k],
                    f,
                    d: d.clone(),
                    r,
                    expected_output,
                    ic,
                    implementable,
                }
            })
            .collect()
    }
}

/// Interval of `D` for which effort `k` is a best response on the grid:
/// `m_k D - φ_k >= m_j D - φ_j` for every `j`.
pub(crate) fn incentive_interval(k: usize, mixes: &[f64], costs: &[f64]) -> (Option<(f64, f64)>, bool) {
    let mut lo = f64::NEG_INFINITY;
    let mut hi = f64::INFINITY;
    let mut ok = true;
    for j in 0..mixes.len() {
        if j == k {
            continue;
        }
        let dm = mixes[k] - mixes[j];
        let dc = costs[k] - costs[j];
        if dm > 0.0 {
            lo = lo.max(dc / dm);
        } else if dm < 0.0 {
            hi = hi.min(dc / dm);
        } else if dc > 0.0 {
            ok = false;
        }
    }
    (Some((lo, hi)), ok && lo <= hi)
}

/// Multipliers carried between iterations to warm-start the root searches.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub(crate) struct Multipliers {
    pub(crate) lambda: f64,
    pub(crate) mu: f64,
}

/// Solution of the fixed-effort problem, before the objective is evaluated.
#[derive(Debug, Clone)]
pub(crate) struct StageSolution {
    pub(crate) utils: Vec<f64>,
    pub(crate) continuations: Vec<f64>,
    pub(crate) multipliers: Multipliers,
}

/// The fixed-effort problem against a given continuation hull.
pub(crate) struct Stage<'a> {
    pub(crate) pay: &'a PaymentSide,
    pub(crate) hull: &'a ContinuationHull,
    pub(crate) rho: f64,
    z_lo: f64,
    z_hi: f64,
}

#[derive(Debug, Clone, Copy)]
struct Bracket {
    lo: f64,
    hi: f64,
    g_lo: f64,
    g_hi: f64,
}

/// Bracketing root search for a nondecreasing function `g`, possibly with
/// jumps. Returns `lo <= hi` with `g(lo) <= 0 <= g(hi)` and `hi - lo` at
/// rounding level, or `None` when no sign change exists in `[floor, ceil]`.
fn monotone_root(
    mut g: impl FnMut(f64) -> f64,
    guess: f64,
    step: f64,
    floor: f64,
    ceil: f64,
) -> Option<Bracket> {
    let x0 = guess.clamp(floor, ceil);
    let g0 = g(x0);
    if g0 == 0.0 {
        return Some(Bracket { lo: x0, hi: x0, g_lo: 0.0, g_hi: 0.0 });
    }
    let mut step = step.max(1e-12 * (1.0 + x0.abs()));
    let mut br = if g0 > 0.0 {
        let (mut hi, mut g_hi) = (x0, g0);
        loop {
            if hi <= floor {
                return None;
            }
            let x = (hi - step).max(floor);
            let gx = g(x);
            if gx <= 0.0 {
                break Bracket { lo: x, hi, g_lo: gx, g_hi };
            }
            hi = x;
            g_hi = gx;
            step *= 4.0;
        }
    } else {
        let (mut lo, mut g_lo) = (x0, g0);
        loop {
            if lo >= ceil {
                return None;
            }
            let x = (lo + step).min(ceil);
            let gx = g(x);
            if gx >= 0.0 {
                break Bracket { lo, hi: x, g_lo, g_hi: gx };
            }
            lo = x;
            g_lo = gx;
            step *= 4.0;
        }
    };
    if br.g_lo == 0.0 {
        br.hi = br.lo;
        br.g_hi = 0.0;
        return Some(br);
    }
    if br.g_hi == 0.0 {
        br.lo = br.hi;
        br.g_lo = 0.0;
        return Some(br);
    }
    // Illinois regula falsi with forced bisection when progress stalls.
    let (mut w_lo, mut w_hi) = (br.g_lo, br.g_hi);
    let mut last_side = 0i8;
    let mut width = br.hi - br.lo;
    for iter in 0..400 {
        let tol = 4.0 * f64::EPSILON * br.lo.abs().max(br.hi.abs()).max(1.0);
        if br.hi - br.lo <= tol {
            break;
        }
        let mid = 0.5 * (br.lo + br.hi);
        let mut x = if iter % 3 == 2 && br.hi - br.lo > 0.5 * width {
            mid
        } else {
            br.lo - w_lo * (br.hi - br.lo) / (w_hi - w_lo)
        };
        if !(x > br.lo && x < br.hi) {
            x = mid;
            if !(x > br.lo && x < br.hi) {
                break;
            }
        }
        if iter % 3 == 2 {
            width = br.hi - br.lo;
        }
        let gx = g(x);
        if gx == 0.0 {
            return Some(Bracket { lo: x, hi: x, g_lo: 0.0, g_hi: 0.0 });
        }
        if gx < 0.0 {
            br.lo = x;
            br.g_lo = gx;
            w_lo = gx;
            if last_side == -1 {
                w_hi *= 0.5;
            }
            last_side = -1;
        } else {
            br.hi = x;
            br.g_hi = gx;
            w_hi = gx;
            if last_side == 1 {
                w_lo *= 0.5;
            }
            last_side = 1;
        }
    }
    Some(br)
}

/// Responses of every output at one multiplier pair.
#[derive(Debug, Clone)]
struct Response {
    utils: Vec<f64>,
    conts: Vec<f64>,
    z: Vec<f64>,
}

impl Response {
    fn blend(a: &Response, b: &Response, theta: f64) -> Response {
        let mix = |x: &[f64], y: &[f64]| -> Vec<f64> {
            x.iter().zip(y).map(|(p, q)| p + theta * (q - p)).collect()
        };
        Response {
            utils: mix(&a.utils, &b.utils),
            conts: mix(&a.conts, &b.conts),
            z: mix(&a.z, &b.z),
        }
    }

    fn dot(&self, weights: &[f64]) -> f64 {
        self.z.iter().zip(weights).map(|(z, w)| z * w).sum()
    }
}

struct Inner {
    lambda: f64,
    response: Response,
    d_value: f64,
}

impl<'a> Stage<'a> {
    pub(crate) fn new(pay: &'a PaymentSide, hull: &'a ContinuationHull, rho: f64) -> Self {
        let (u_lo, u_hi) = pay.u_bounds();
        let (w_lo, w_hi) = hull.domain();
        Stage {
            pay,
            hull,
            rho,
            z_lo: u_lo + rho * w_lo,
            z_hi: u_hi + rho * w_hi,
        }
    }

    #[inline]
    fn z_of(&self, s: f64) -> f64 {
        self.pay.respond(s) + self.rho * self.hull.point(self.hull.vertex(s))
    }

    /// Shadow prices below `s_floor` buy the minimum; above `s_ceil` the maximum.
    fn s_limits(&self) -> (f64, f64) {
        let (g0, g1) = self.hull.slope_range();
        let floor = self.pay.s_lo.min(g0);
        let ceil = self.pay.s_hi.max(g1);
        let floor = if floor.is_finite() { floor } else { self.pay.s_lo };
        let ceil = if ceil.is_finite() { ceil } else { self.pay.s_hi };
        (floor - 1.0, ceil + 1.0)
    }

    fn zero_mass_z(&self, weight: f64, b: f64) -> f64 {
        if weight > 0.0 {
            self.z_hi
        } else if weight < 0.0 {
            self.z_lo
        } else {
            b.clamp(self.z_lo, self.z_hi)
        }
    }

    fn response(&self, e: &EffortData, lambda: f64, mu: f64, b: f64) -> Response {
        let n = e.f.len();
        let mut out = Response {
            utils: Vec::with_capacity(n),
            conts: Vec::with_capacity(n),
            z: Vec::with_capacity(n),
        };
        for y in 0..n {
            if e.f[y] > 0.0 {
                let s = lambda + mu * e.r[y];
                let u = self.pay.respond(s);
                let w = self.hull.point(self.hull.vertex(s));
                out.utils.push(u);
                out.conts.push(w);
                out.z.push(u + self.rho * w);
            } else {
                let z = self.zero_mass_z(mu * e.d[y], b);
                let (u, w) = self.split(z);
                out.utils.push(u);
                out.conts.push(w);
                out.z.push(z);
            }
        }
        out
    }

    fn pk_sum(&self, e: &EffortData, lambda: f64, mu: f64) -> f64 {
        let mut total = 0.0;
        for y in 0..e.f.len() {
            if e.f[y] > 0.0 {
                total += e.f[y] * self.z_of(lambda + mu * e.r[y]);
            }
        }
        total
    }

    /// Solves promise keeping for `λ` at fixed `μ` and returns the blended
    /// response that meets it exactly.
    fn inner(&self, e: &EffortData, b: f64, mu: f64, guess: f64) -> Option<Inner> {
        let (s_floor, s_ceil) = self.s_limits();
        let (mut r_min, mut r_max) = (f64::INFINITY, f64::NEG_INFINITY);
        for y in 0..e.f.len() {
            if e.f[y] > 0.0 {
                r_min = r_min.min(mu * e.r[y]);
                r_max = r_max.max(mu * e.r[y]);
            }
        }
        let floor = s_floor - r_max;
        let ceil = s_ceil - r_min;
        let step = 1e-3 * (1.0 + guess.abs());
        let br = monotone_root(|l| self.pk_sum(e, l, mu) - b, guess, step, floor, ceil)?;
        let lo = self.response(e, br.lo, mu, b);
        let response = if br.hi == br.lo {
            lo
        } else {
            let hi = self.response(e, br.hi, mu, b);
            let (s_lo, s_hi) = (pos_dot(&lo.z, &e.f), pos_dot(&hi.z, &e.f));
            let theta = if s_hi > s_lo {
                ((b - s_lo) / (s_hi - s_lo)).clamp(0.0, 1.0)
            } else {
                0.5
            };
            Response::blend(&lo, &hi, theta)
        };
        let d_value = response.dot(&e.d);
        Some(Inner {
            lambda: 0.5 * (br.lo + br.hi),
            response,
            d_value,
        })
    }

    /// Extreme feasible `D` at promise level `b`, with the maximizing (or
    /// minimizing) `z`. Fills outputs in order of likelihood ratio.
    fn extreme_d(&self, e: &EffortData, b: f64, maximize: bool) -> (f64, Vec<f64>) {
        let n = e.f.len();
        let mut z = vec![self.z_lo; n];
        let mut order: Vec<usize> = (0..n).filter(|&y| e.f[y] > 0.0).collect();
        order.sort_by(|&a, &c| e.r[a].total_cmp(&e.r[c]));
        if maximize {
            order.reverse();
        }
        let mut budget = b - self.z_lo * order.iter().map(|&y| e.f[y]).sum::<f64>();
        for &y in &order {
            let room = e.f[y] * (self.z_hi - self.z_lo);
            let take = budget.min(room).max(0.0);
            z[y] = self.z_lo + take / e.f[y];
            budget -= take;
        }
        for y in 0..n {
            if e.f[y] <= 0.0 {
                let sign = if maximize { e.d[y] } else { -e.d[y] };
                z[y] = self.zero_mass_z(sign, b);
                if e.d[y] == 0.0 {
                    z[y] = self.z_lo;
                }
            }
        }
        let d = z.iter().zip(&e.d).map(|(z, d)| z * d).sum();
        (d, z)
    }

    /// Optimal split of a utility promise `z` into current utils and
    /// continuation.
    pub(crate) fn split(&self, z: f64) -> (f64, f64) {
        let (floor, ceil) = self.s_limits();
        let z = z.clamp(self.z_lo, self.z_hi);
        let guess = self.pay.marginal(((z - self.rho * self.hull.domain().0).max(0.0)).min(self.pay.u_hi));
        let at = |s: f64| (self.pay.respond(s), self.hull.point(self.hull.vertex(s)));
        let br = match monotone_root(|s| self.z_of(s) - z, guess, 1e-3 * (1.0 + guess.abs()), floor, ceil) {
            Some(br) => br,
            None => return at(floor),
        };
        let (u0, w0) = at(br.lo);
        if br.hi == br.lo {
            return (u0, w0);
        }
        let (u1, w1) = at(br.hi);
        let (z0, z1) = (u0 + self.rho * w0, u1 + self.rho * w1);
        let theta = if z1 > z0 { ((z - z0) / (z1 - z0)).clamp(0.0, 1.0) } else { 0.5 };
        (u0 + theta * (u1 - u0), w0 + theta * (w1 - w0))
    }

    fn finish(&self, response: Response, multipliers: Multipliers) -> StageSolution {
        StageSolution {
            utils: response.utils,
            continuations: response.conts,
            multipliers,
        }
    }

    fn solution_at(&self, z: Vec<f64>, multipliers: Multipliers) -> StageSolution {
        let (utils, conts): (Vec<f64>, Vec<f64>) = z.iter().map(|&zy| self.split(zy)).unzip();
        StageSolution {
            utils,
            continuations: conts,
            multipliers,
        }
    }

    /// Best contract implementing effort `e` while delivering promise level
    /// `b = v + φ(a)`, or `None` if infeasible.
    pub(crate) fn solve(&self, e: &EffortData, b: f64, warm: Option<Multipliers>) -> Option<StageSolution> {
        if !e.implementable {
            return None;
        }
        let mass: f64 = e.f.iter().filter(|&&p| p > 0.0).sum();
        let slack = 1e-12 * (1.0 + b.abs());
        if b < self.z_lo * mass - slack || b > self.z_hi * mass + slack {
            return None;
        }
        let warm = warm.unwrap_or_else(|| Multipliers {
            lambda: self.pay.marginal(self.pay.respond(self.pay.s_lo.max(1.0))),
            mu: 0.0,
        });

        let (d_lo, d_hi) = e.ic.unwrap_or((f64::NEG_INFINITY, f64::INFINITY));
        let free = self.inner(e, b, 0.0, warm.lambda)?;
        if free.d_value >= d_lo && free.d_value <= d_hi {
            let m = Multipliers { lambda: free.lambda, mu: 0.0 };
            return Some(self.finish(free.response, m));
        }
        let target = if free.d_value < d_lo { d_lo } else { d_hi };

        // Feasibility of the (PK, D = target) pair and boundary cases.
        let scale = 1e-10 * (1.0 + target.abs() + b.abs());
        let (d_max, z_max) = self.extreme_d(e, b, true);
        let (d_min, z_min) = self.extreme_d(e, b, false);
        if target > d_max || target < d_min {
            return None;
        }
        if target >= d_max - scale {
            return Some(self.solution_at(z_max, Multipliers { lambda: warm.lambda, mu: f64::INFINITY }));
        }
        if target <= d_min + scale {
            return Some(self.solution_at(z_min, Multipliers { lambda: warm.lambda, mu: f64::NEG_INFINITY }));
        }

        // Outer search on μ; the sign follows which side of the interval binds.
        let upward = target > free.d_value;
        let mut last_lambda = warm.lambda;
        let mut cache: Vec<(f64, Inner)> = Vec::new();
        let mu_guess = if warm.mu.is_finite() && warm.mu != 0.0 && (warm.mu > 0.0) == upward {
            warm.mu
        } else if upward {
            1.0
        } else {
            -1.0
        };
        let (floor, ceil) = if upward { (0.0, 1e12) } else { (-1e12, 0.0) };
        let br = monotone_root(
            |mu| {
                if mu == 0.0 {
                    return free.d_value - target;
                }
                match self.inner(e, b, mu, last_lambda) {
                    Some(inner) => {
                        last_lambda = inner.lambda;
                        let value = inner.d_value - target;
                        cache.push((mu, inner));
                        value
                    }
                    None => {
                        if upward {
                            f64::INFINITY
                        } else {
                            f64::NEG_INFINITY
                        }
                    }
                }
            },
            mu_guess,
            0.25 * mu_guess.abs(),
            floor,
            ceil,
        )?;
        let fetch = |mu: f64| -> Option<&Inner> {
            if mu == 0.0 {
                Some(&free)
            } else {
                cache.iter().rev().find(|(m, _)| *m == mu).map(|(_, inner)| inner)
            }
        };
        let lo = fetch(br.lo)?;
        let hi = fetch(br.hi)?;
        let theta = if hi.d_value > lo.d_value {
            ((target - lo.d_value) / (hi.d_value - lo.d_value)).clamp(0.0, 1.0)
        } else {
            0.5
        };
        let response = Response::blend(&lo.response, &hi.response, theta);
        let m = Multipliers {
            lambda: lo.lambda + theta * (hi.lambda - lo.lambda),
            mu: br.lo + theta * (br.hi - br.lo),
        };
        Some(self.finish(response, m))
    }

    /// Weak-duality upper bound on the fixed-effort objective (excluding the
    /// expected output term) at the given multipliers.
    pub(crate) fn dual_bound(&self, e: &EffortData, b: f64, m: Multipliers) -> f64 {
        if !m.lambda.is_finite() || !m.mu.is_finite() {
            return f64::INFINITY;
        }
        let target = match e.ic {
            Some((lo, hi)) if m.mu != 0.0 => {
                if m.mu > 0.0 {
                    lo
                } else {
                    hi
                }
            }
            _ => 0.0,
        };
        let mu = if e.ic.is_some() { m.mu } else { 0.0 };
        let mut total = -m.lambda * b - mu * target;
        for y in 0..e.f.len() {
            if e.f[y] > 0.0 {
                let s = m.lambda + mu * e.r[y];
                total += e.f[y] * (self.pay.conjugate(s) + self.rho * self.hull.conjugate(s));
            } else {
                let w = mu * e.d[y];
                total += (w * self.z_lo).max(w * self.z_hi);
            }
        }
        total
    }
}

fn pos_dot(z: &[f64], f: &[f64]) -> f64 {
    z.iter().zip(f).filter(|(_, &p)| p > 0.0).map(|(z, p)| z * p).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelPrimitives;

    #[test]
    fn monotone_root_handles_jumps() {
        let step = |x: f64| if x < 1.0 { -1.0 } else { 1.0 };
        let br = monotone_root(step, 0.0, 0.1, -10.0, 10.0).unwrap();
        assert!(br.lo < 1.0 && br.hi >= 1.0 && br.hi - br.lo < 1e-14);
        let smooth = |x: f64| x * x * x - 2.0;
        let br = monotone_root(smooth, 5.0, 0.1, -10.0, 10.0).unwrap();
        assert!((br.lo - 2f64.cbrt()).abs() < 1e-14);
        assert!(monotone_root(|x: f64| x + 100.0, 0.0, 0.1, -10.0, 10.0).is_none());
    }

    #[test]
    fn hull_removes_nonconcave_points() {
        let hull = ContinuationHull::new(&[(0.0, 0.0), (1.0, 0.2), (2.0, 2.0), (3.0, 2.5)]);
        assert_eq!(hull.w, vec![0.0, 2.0, 3.0]);
        assert!(hull.g.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn split_meets_target_promise() {
        let model = ModelPrimitives::default_instance();
        let pay = PaymentSide::new(model.preferences(), model.payment_bounds(), 0.0);
        let pts: Vec<(f64, f64)> = (0..=10).map(|i| {
            let w = i as f64 * 10.0;
            (w, 300.0 - 0.02 * w * w)
        }).collect();
        let hull = ContinuationHull::new(&pts);
        let stage = Stage::new(&pay, &hull, 0.9);
        for &z in &[0.0, 5.0, 33.3, 61.0, 99.0] {
            let (u, w) = stage.split(z);
            assert!((u + 0.9 * w - z).abs() < 1e-9, "z = {z}: u = {u}, w = {w}");
        }
    }

    #[test]
    fn fixed_effort_solution_satisfies_constraints() {
        let model = ModelPrimitives::default_instance();
        let pay = PaymentSide::new(model.preferences(), model.payment_bounds(), 0.0);
        let pts: Vec<(f64, f64)> = (0..=20).map(|i| {
            let w = i as f64 * 5.0;
            (w, 400.0 - 0.03 * w * w)
        }).collect();
        let hull = ContinuationHull::new(&pts);
        let stage = Stage::new(&pay, &hull, 0.9);
        let table = EffortData::table(&model, true);
        for e in table.iter().skip(1).step_by(4) {
            let b = 40.0 + e.cost;
            let sol = stage.solve(e, b, None).expect("feasible");
            let z: Vec<f64> = sol.utils.iter().zip(&sol.continuations).map(|(u, w)| u + 0.9 * w).collect();
            let pk: f64 = z.iter().zip(&e.f).map(|(z, f)| z * f).sum();
            assert!((pk - b).abs() < 1e-9, "PK residual {}", pk - b);
            let d: f64 = z.iter().zip(&e.d).map(|(z, d)| z * d).sum();
            let (lo, _) = e.ic.unwrap();
            assert!(d >= lo - 1e-9, "IC: D = {d} < {lo}");
            assert!(sol.multipliers.mu > 0.0);
        }
    }
}
