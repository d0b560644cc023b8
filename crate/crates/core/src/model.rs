//! Economic primitives of the buyer–provider contracting problem.
//!
//! The provider's one-period payoff is `u(P) - φ(a)` with power utility
//! `u(P) = P^γ` and power effort cost `φ(a) = κ a^θ`. Output is drawn from a
//! finite grid with probabilities that mix a "low" and a "high" anchor
//! distribution:
//!
//! ```text
//! f(y, a) = (1 - m(a)) f_low(y) + m(a) f_high(y)
//! ```
//!
//! With `m` increasing and concave and `f_high` likelihood-ratio dominating
//! `f_low`, both the monotone likelihood ratio property and the convexity of
//! the distribution function condition hold, which is what the monotonicity
//! results for optimal contracts rely on. The checks in this module verify
//! those properties numerically rather than assuming them.

use serde::{Deserialize, Serialize};

use crate::error::ModelError;

/// Probability vectors must sum to one within this tolerance.
pub const NORMALIZATION_TOL: f64 = 1e-12;

/// Ordered benefit levels `y_1 < ... < y_n`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OutputGrid {
    points: Vec<f64>,
}

impl OutputGrid {
    pub fn new(points: Vec<f64>) -> Result<Self, ModelError> {
        if points.len() < 2 {
            return Err(ModelError::invalid(
                "output_grid.points",
                "need at least two output levels",
            ));
        }
        Self::checked(points)
    }

    /// A one-point grid. Output then carries no information about effort;
    /// used for limiting cases.
    pub fn single(y: f64) -> Result<Self, ModelError> {
        Self::checked(vec![y])
    }

    fn checked(points: Vec<f64>) -> Result<Self, ModelError> {
        if points.iter().any(|y| !y.is_finite()) {
            return Err(ModelError::invalid("output_grid.points", "must be finite"));
        }
        if points.windows(2).any(|w| w[1] <= w[0]) {
            return Err(ModelError::invalid(
                "output_grid.points",
                "must be strictly increasing",
            ));
        }
        Ok(OutputGrid { points })
    }

    pub fn uniform(lower: f64, upper: f64, count: usize) -> Result<Self, ModelError> {
        Self::new(linspace(lower, upper, count))
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
}

/// Ordered effort levels on `[a_low, a_high]`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EffortGrid {
    points: Vec<f64>,
}

impl EffortGrid {
    pub fn new(points: Vec<f64>) -> Result<Self, ModelError> {
        if points.len() < 2 {
            return Err(ModelError::invalid(
                "effort_grid",
                "need at least two effort levels",
            ));
        }
        if points.iter().any(|a| !a.is_finite()) {
            return Err(ModelError::invalid("effort_grid", "must be finite"));
        }
        if points[0] < 0.0 {
            return Err(ModelError::invalid("effort_grid", "lowest effort must be >= 0"));
        }
        if points.windows(2).any(|w| w[1] <= w[0]) {
            return Err(ModelError::invalid("effort_grid", "must be strictly increasing"));
        }
        Ok(EffortGrid { points })
    }

    pub fn uniform(lower: f64, upper: f64, count: usize) -> Result<Self, ModelError> {
        if count < 2 || !(upper > lower) {
            return Err(ModelError::invalid(
                "effort_grid",
                "need count >= 2 and upper > lower",
            ));
        }
        Self::new(linspace(lower, upper, count))
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

    pub fn low(&self) -> f64 {
        self.points[0]
    }

    pub fn high(&self) -> f64 {
        self.points[self.points.len() - 1]
    }
}

/// Weight placed on the high anchor distribution as a function of effort.
///
/// Effort is first normalized to `t = (a - a_low) / (a_high - a_low)`, so
/// every variant maps `[a_low, a_high]` onto `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Mixing {
    /// `m(t) = t^k`; linear for `k = 1`, concave for `k < 1`, convex for `k > 1`.
    Power { exponent: f64 },
    /// `m(t) = (1 - e^{-r t}) / (1 - e^{-r})`; concave for `r > 0`.
    Exponential { rate: f64 },
}

impl Mixing {
    pub const LINEAR: Mixing = Mixing::Power { exponent: 1.0 };

    fn validate(&self) -> Result<(), ModelError> {
        match *self {
            Mixing::Power { exponent } if !(exponent > 0.0 && exponent.is_finite()) => Err(
                ModelError::invalid("distribution.mixing.exponent", "must be positive"),
            ),
            Mixing::Exponential { rate } if !(rate != 0.0 && rate.is_finite()) => Err(
                ModelError::invalid("distribution.mixing.rate", "must be finite and nonzero"),
            ),
            _ => Ok(()),
        }
    }

    /// Value and first two derivatives with respect to normalized effort.
    fn eval(&self, t: f64) -> (f64, f64, f64) {
        match *self {
            Mixing::Power { exponent: k } => {
                if k == 1.0 {
                    (t, 1.0, 0.0)
                } else {
                    (
                        t.powf(k),
                        k * t.powf(k - 1.0),
                        k * (k - 1.0) * t.powf(k - 2.0),
                    )
                }
            }
            Mixing::Exponential { rate: r } => {
                let norm = 1.0 - (-r).exp();
                let e = (-r * t).exp();
                ((1.0 - e) / norm, r * e / norm, -r * r * e / norm)
            }
        }
    }
}

/// Output distribution conditional on effort, as a two-anchor mixture.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConditionalOutputDistribution {
    f_low: Vec<f64>,
    f_high: Vec<f64>,
    mixing: Mixing,
    effort_low: f64,
    effort_high: f64,
}

impl ConditionalOutputDistribution {
    /// `effort_range` is the `[a_low, a_high]` interval the mixing weight is
    /// normalized on.
    ///
    /// Likelihood-ratio dominance of `f_high` over `f_low` is *not* required
    /// here; [`check_mlrp`] reports it.
    pub fn new(
        f_low: Vec<f64>,
        f_high: Vec<f64>,
        mixing: Mixing,
        effort_range: (f64, f64),
    ) -> Result<Self, ModelError> {
        if f_low.len() != f_high.len() || f_low.is_empty() {
            return Err(ModelError::invalid(
                "distribution",
                "f_low and f_high must be non-empty and of equal length",
            ));
        }
        for (name, f) in [("distribution.f_low", &f_low), ("distribution.f_high", &f_high)] {
            if f.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
                return Err(ModelError::invalid(name, "entries must be finite and >= 0"));
            }
            let total: f64 = f.iter().sum();
            if (total - 1.0).abs() > NORMALIZATION_TOL {
                return Err(ModelError::invalid(
                    name,
                    format!("must sum to 1 within {NORMALIZATION_TOL:e} (sum = {total})"),
                ));
            }
        }
        mixing.validate()?;
        let (lo, hi) = effort_range;
        if !(hi > lo) {
            return Err(ModelError::invalid(
                "distribution",
                "effort range must have a_high > a_low",
            ));
        }
        Ok(ConditionalOutputDistribution {
            f_low,
            f_high,
            mixing,
            effort_low: lo,
            effort_high: hi,
        })
    }

    /// Triangular anchors on `n` outputs: `f_low ∝ (n, n-1, ..., 1)` and
    /// `f_high ∝ (1, 2, ..., n)`.
    pub fn triangular(n: usize, mixing: Mixing, effort_range: (f64, f64)) -> Result<Self, ModelError> {
        let total = (n * (n + 1) / 2) as f64;
        let f_low = (0..n).map(|i| (n - i) as f64 / total).collect();
        let f_high = (0..n).map(|i| (i + 1) as f64 / total).collect();
        Self::new(f_low, f_high, mixing, effort_range)
    }

    pub fn len(&self) -> usize {
        self.f_low.len()
    }

    pub fn is_empty(&self) -> bool {
        self.f_low.is_empty()
    }

    pub fn f_low(&self) -> &[f64] {
        &self.f_low
    }

    pub fn f_high(&self) -> &[f64] {
        &self.f_high
    }

    pub fn mixing(&self) -> Mixing {
        self.mixing
    }

    fn check_effort(&self, a: f64) -> Result<(), ModelError> {
        let slack = 1e-12 * (1.0 + self.effort_high.abs());
        if !(a >= self.effort_low - slack && a <= self.effort_high + slack) {
            return Err(ModelError::OutOfDomain {
                what: "effort",
                value: a,
                lower: self.effort_low,
                upper: self.effort_high,
            });
        }
        Ok(())
    }

    fn check_index(&self, i: usize) -> Result<(), ModelError> {
        if i >= self.len() {
            return Err(ModelError::IndexOutOfRange {
                index: i,
                len: self.len(),
            });
        }
        Ok(())
    }

    fn span(&self) -> f64 {
        self.effort_high - self.effort_low
    }

    fn normalized(&self, a: f64) -> f64 {
        ((a - self.effort_low) / self.span()).clamp(0.0, 1.0)
    }

    /// Mixing weight `m(a)`.
    pub fn mix(&self, a: f64) -> f64 {
        self.mixing.eval(self.normalized(a)).0
    }

    /// `m'(a)` with respect to effort in its own units.
    pub fn mix_slope(&self, a: f64) -> f64 {
        self.mixing.eval(self.normalized(a)).1 / self.span()
    }

    /// `m''(a)` with respect to effort in its own units.
    pub fn mix_curvature(&self, a: f64) -> f64 {
        let s = self.span();
        self.mixing.eval(self.normalized(a)).2 / (s * s)
    }

    /// `f_high - f_low`; the effort derivative of the density is
    /// `m'(a) * (f_high - f_low)`.
    pub fn anchor_difference(&self) -> Vec<f64> {
        self.f_high
            .iter()
            .zip(&self.f_low)
            .map(|(h, l)| h - l)
            .collect()
    }

    pub(crate) fn pmf_unchecked(&self, a: f64) -> Vec<f64> {
        let m = self.mix(a);
        self.f_low
            .iter()
            .zip(&self.f_high)
            .map(|(l, h)| (1.0 - m) * l + m * h)
            .collect()
    }

    /// `f(y_i, a)`.
    pub fn density(&self, i: usize, a: f64) -> Result<f64, ModelError> {
        self.check_index(i)?;
        self.check_effort(a)?;
        let m = self.mix(a);
        Ok((1.0 - m) * self.f_low[i] + m * self.f_high[i])
    }

    /// The whole probability vector `f(., a)`.
    pub fn pmf(&self, a: f64) -> Result<Vec<f64>, ModelError> {
        self.check_effort(a)?;
        Ok(self.pmf_unchecked(a))
    }

    /// `F(y_i, a) = Σ_{j <= i} f(y_j, a)`.
    pub fn cdf(&self, i: usize, a: f64) -> Result<f64, ModelError> {
        self.check_index(i)?;
        self.check_effort(a)?;
        if i == self.len() - 1 {
            return Ok(1.0);
        }
        Ok(self.pmf_unchecked(a)[..=i].iter().sum())
    }

    /// Analytic effort derivative `f_a(y_i, a)`.
    pub fn density_slope(&self, i: usize, a: f64) -> Result<f64, ModelError> {
        self.check_index(i)?;
        self.check_effort(a)?;
        Ok(self.mix_slope(a) * (self.f_high[i] - self.f_low[i]))
    }

    /// Analytic second effort derivative of the distribution function,
    /// `F_aa(y_i, a) = m''(a) (F_high(y_i) - F_low(y_i))`.
    pub fn cdf_curvature(&self, i: usize, a: f64) -> Result<f64, ModelError> {
        self.check_index(i)?;
        self.check_effort(a)?;
        let gap: f64 = (0..=i).map(|j| self.f_high[j] - self.f_low[j]).sum();
        Ok(self.mix_curvature(a) * gap)
    }
}

/// Provider preferences and the common discount factor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Preferences {
    utility_exponent: f64,
    cost_scale: f64,
    cost_exponent: f64,
    discount: f64,
}

impl Preferences {
    pub fn new(
        utility_exponent: f64,
        cost_scale: f64,
        cost_exponent: f64,
        discount: f64,
    ) -> Result<Self, ModelError> {
        if !(utility_exponent > 0.0 && utility_exponent < 1.0) {
            return Err(ModelError::invalid(
                "preferences.utility_exponent",
                "must lie in (0, 1) for increasing, strictly concave utility",
            ));
        }
        if !(cost_scale > 0.0 && cost_scale.is_finite()) {
            return Err(ModelError::invalid("preferences.cost_scale", "must be > 0"));
        }
        if !(cost_exponent > 1.0 && cost_exponent.is_finite()) {
            return Err(ModelError::invalid("preferences.cost_exponent", "must be > 1"));
        }
        if !(0.0..1.0).contains(&discount) {
            return Err(ModelError::invalid(
                "preferences.discount",
                "must lie in [0, 1); the infinite-horizon problem needs discount < 1",
            ));
        }
        Ok(Preferences {
            utility_exponent,
            cost_scale,
            cost_exponent,
            discount,
        })
    }

    pub fn utility_exponent(&self) -> f64 {
        self.utility_exponent
    }

    pub fn cost_scale(&self) -> f64 {
        self.cost_scale
    }

    pub fn cost_exponent(&self) -> f64 {
        self.cost_exponent
    }

    pub fn discount(&self) -> f64 {
        self.discount
    }

    /// `u(P) = P^γ` without bound checks.
    pub fn utility(&self, payment: f64) -> f64 {
        payment.max(0.0).powf(self.utility_exponent)
    }

    /// `u'(P) = γ P^{γ-1}`; infinite at zero.
    pub fn marginal_utility(&self, payment: f64) -> f64 {
        if payment <= 0.0 {
            f64::INFINITY
        } else {
            self.utility_exponent * payment.powf(self.utility_exponent - 1.0)
        }
    }

    /// Payment delivering `utils` units of utility, `u^{-1}(utils)`.
    pub fn payment_for(&self, utils: f64) -> f64 {
        utils.max(0.0).powf(1.0 / self.utility_exponent)
    }

    /// `φ(a) = κ a^θ` without bound checks.
    pub fn effort_cost(&self, a: f64) -> f64 {
        self.cost_scale * a.max(0.0).powf(self.cost_exponent)
    }
}

/// Limited-liability floor and cap on per-period payments.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PaymentBounds {
    pub min: f64,
    pub max: f64,
}

impl PaymentBounds {
    pub fn new(min: f64, max: f64) -> Result<Self, ModelError> {
        if !(min.is_finite() && max.is_finite()) {
            return Err(ModelError::invalid("payment_bounds", "must be finite"));
        }
        if min < 0.0 {
            return Err(ModelError::invalid("payment_bounds.min", "must be >= 0"));
        }
        if !(max > min) {
            return Err(ModelError::invalid(
                "payment_bounds",
                format!("need min < max (got min = {min}, max = {max})"),
            ));
        }
        Ok(PaymentBounds { min, max })
    }

    pub fn range(&self) -> f64 {
        self.max - self.min
    }
}

/// Everything the contracting problem needs to know about the economy.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModelPrimitives {
    output_grid: OutputGrid,
    effort_grid: EffortGrid,
    distribution: ConditionalOutputDistribution,
    preferences: Preferences,
    payment_bounds: PaymentBounds,
}

impl ModelPrimitives {
    pub fn new(
        output_grid: OutputGrid,
        effort_grid: EffortGrid,
        distribution: ConditionalOutputDistribution,
        preferences: Preferences,
        payment_bounds: PaymentBounds,
    ) -> Result<Self, ModelError> {
        if distribution.len() != output_grid.len() {
            return Err(ModelError::invalid(
                "distribution",
                format!(
                    "has {} probabilities for {} output levels",
                    distribution.len(),
                    output_grid.len()
                ),
            ));
        }
        let tol = 1e-12 * (1.0 + effort_grid.high().abs());
        if (distribution.effort_low - effort_grid.low()).abs() > tol
            || (distribution.effort_high - effort_grid.high()).abs() > tol
        {
            return Err(ModelError::invalid(
                "distribution",
                "mixing effort range must match the effort grid endpoints",
            ));
        }
        Ok(ModelPrimitives {
            output_grid,
            effort_grid,
            distribution,
            preferences,
            payment_bounds,
        })
    }

    /// Five outputs on `[0, 100]`, 21 efforts on `[0, 1]`, `u = √P`,
    /// `φ(a) = a²`, discount 0.9, payments in `[0, 100]`, triangular anchors
    /// and linear mixing.
    pub fn default_instance() -> Self {
        Self::default_with_discount(0.9)
    }

    pub(crate) fn default_with_discount(discount: f64) -> Self {
        let outputs = OutputGrid::uniform(0.0, 100.0, 5).expect("static grid");
        let efforts = EffortGrid::uniform(0.0, 1.0, 21).expect("static grid");
        let dist = ConditionalOutputDistribution::triangular(5, Mixing::LINEAR, (0.0, 1.0))
            .expect("static distribution");
        let prefs = Preferences::new(0.5, 1.0, 2.0, discount).expect("static preferences");
        let bounds = PaymentBounds::new(0.0, 100.0).expect("static bounds");
        Self::new(outputs, efforts, dist, prefs, bounds).expect("static model")
    }

    pub fn output_grid(&self) -> &OutputGrid {
        &self.output_grid
    }

    pub fn effort_grid(&self) -> &EffortGrid {
        &self.effort_grid
    }

    pub fn distribution(&self) -> &ConditionalOutputDistribution {
        &self.distribution
    }

    pub fn preferences(&self) -> &Preferences {
        &self.preferences
    }

    pub fn payment_bounds(&self) -> PaymentBounds {
        self.payment_bounds
    }

    pub fn discount(&self) -> f64 {
        self.preferences.discount
    }

    /// Utility of a payment inside the payment bounds.
    pub fn eval_utility(&self, payment: f64) -> Result<f64, ModelError> {
        let b = self.payment_bounds;
        if !(payment >= b.min && payment <= b.max) {
            return Err(ModelError::OutOfDomain {
                what: "payment",
                value: payment,
                lower: b.min,
                upper: b.max,
            });
        }
        Ok(self.preferences.utility(payment))
    }

    /// Effort cost of an effort inside the effort range.
    pub fn eval_effort_cost(&self, a: f64) -> Result<f64, ModelError> {
        let (lo, hi) = (self.effort_grid.low(), self.effort_grid.high());
        if !(a >= lo && a <= hi) {
            return Err(ModelError::OutOfDomain {
                what: "effort",
                value: a,
                lower: lo,
                upper: hi,
            });
        }
        Ok(self.preferences.effort_cost(a))
    }

    /// Range of promised values any contract can deliver:
    /// every period at the payment floor and top effort, or at the payment
    /// cap and bottom effort.
    pub fn derive_v_bounds(&self) -> (f64, f64) {
        let p = &self.preferences;
        let scale = 1.0 / (1.0 - p.discount);
        let lower = (p.utility(self.payment_bounds.min) - p.effort_cost(self.effort_grid.high())) * scale;
        let upper = (p.utility(self.payment_bounds.max) - p.effort_cost(self.effort_grid.low())) * scale;
        (lower, upper)
    }
}

/// Location and size of the worst violation of a checked property.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub effort_index: Option<usize>,
    pub output_index: Option<usize>,
    pub magnitude: f64,
}

/// Outcome of a structural property check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropertyReport {
    pub property: String,
    pub passed: bool,
    pub worst: Option<Violation>,
    /// `(effort index, output index)` pairs excluded because the density is zero.
    pub flagged: Vec<(usize, usize)>,
    /// Output indices with zero probability under every effort.
    pub degenerate_outputs: Vec<usize>,
}

impl PropertyReport {
    fn new(property: &str) -> Self {
        PropertyReport {
            property: property.to_string(),
            passed: true,
            worst: None,
            flagged: Vec::new(),
            degenerate_outputs: Vec::new(),
        }
    }

    /// Records a violation if it is larger than the current worst.
    pub(crate) fn record(&mut self, magnitude: f64, effort_index: Option<usize>, output_index: Option<usize>) {
        self.passed = false;
        if self.worst.is_none_or(|w| magnitude > w.magnitude) {
            self.worst = Some(Violation {
                effort_index,
                output_index,
                magnitude,
            });
        }
    }

    pub(crate) fn named(property: &str) -> Self {
        Self::new(property)
    }
}

fn degenerate_outputs(dist: &ConditionalOutputDistribution) -> Vec<usize> {
    (0..dist.len())
        .filter(|&i| dist.f_low[i] == 0.0 && dist.f_high[i] == 0.0)
        .collect()
}

/// Monotone likelihood ratio check in derivative form: at every effort on
/// the grid, `f_a(y, a) / f(y, a)` must be nondecreasing in `y`.
pub fn check_mlrp(dist: &ConditionalOutputDistribution, efforts: &EffortGrid) -> PropertyReport {
    let mut report = PropertyReport::new("mlrp");
    report.degenerate_outputs = degenerate_outputs(dist);
    let diff = dist.anchor_difference();
    for (k, &a) in efforts.points().iter().enumerate() {
        let f = dist.pmf_unchecked(a);
        let slope = dist.mix_slope(a);
        let mut previous: Option<f64> = None;
        for i in 0..dist.len() {
            if f[i] <= 0.0 {
                report.flagged.push((k, i));
                continue;
            }
            let ratio = slope * diff[i] / f[i];
            if let Some(prev) = previous {
                let drop = prev - ratio;
                if drop > 1e-12 * (1.0 + prev.abs()) {
                    report.record(drop, Some(k), Some(i));
                }
            }
            previous = Some(ratio);
        }
    }
    report
}

/// Cross-product form of the likelihood ratio property:
/// `f(y, a) f(ỹ, ã) >= f(y, ã) f(ỹ, a)` for all `a > ã`, `y > ỹ` on the grids.
pub fn check_mlrp_cross_product(
    dist: &ConditionalOutputDistribution,
    efforts: &EffortGrid,
) -> PropertyReport {
    let mut report = PropertyReport::new("mlrp_cross_product");
    report.degenerate_outputs = degenerate_outputs(dist);
    let pmfs: Vec<Vec<f64>> = efforts
        .points()
        .iter()
        .map(|&a| dist.pmf_unchecked(a))
        .collect();
    let n = dist.len();
    for hi in 1..pmfs.len() {
        for lo in 0..hi {
            for y in 1..n {
                for yt in 0..y {
                    let lhs = pmfs[hi][y] * pmfs[lo][yt];
                    let rhs = pmfs[lo][y] * pmfs[hi][yt];
                    if lhs < rhs - 1e-12 {
                        report.record(rhs - lhs, Some(hi), Some(y));
                    }
                }
            }
        }
    }
    report
}

/// Convexity of the distribution function in effort: `F_aa(y, a) >= -tol`
/// at every grid point.
pub fn check_cdfc(dist: &ConditionalOutputDistribution, efforts: &EffortGrid) -> PropertyReport {
    const TOL: f64 = 1e-12;
    let mut report = PropertyReport::new("cdfc");
    report.degenerate_outputs = degenerate_outputs(dist);
    for (k, &a) in efforts.points().iter().enumerate() {
        let curvature = dist.mix_curvature(a);
        let mut gap = 0.0;
        // F is identically one at the top output.
        for i in 0..dist.len() - 1 {
            gap += dist.f_high[i] - dist.f_low[i];
            if gap.abs() <= 1e-14 {
                continue;
            }
            let f_aa = curvature * gap;
            if f_aa < -TOL {
                report.record(-f_aa, Some(k), Some(i));
            }
        }
    }
    report
}

pub(crate) fn linspace(lower: f64, upper: f64, count: usize) -> Vec<f64> {
    match count {
        0 => Vec::new(),
        1 => vec![lower],
        _ => {
            let step = (upper - lower) / (count - 1) as f64;
            (0..count)
                .map(|i| {
                    if i == count - 1 {
                        upper
                    } else {
                        lower + step * i as f64
                    }
                })
                .collect()
        }
    }
}
