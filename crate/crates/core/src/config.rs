//! Scenario files.
//!
//! A scenario is a TOML document with the sections `[model.*]`, `[solver]`,
//! `[simulation]`, `[oligopoly]` and `[output]`. Every section and key is
//! optional and falls back to the default instance. Unknown keys are
//! rejected with the closest known key as a hint.
//!
//! ```
//! let cfg = mssp_econ::config::parse_config(
//!     "[model.preferences]\ndiscount = 0.8\n",
//!     "inline.toml",
//! ).unwrap();
//! assert_eq!(cfg.model().discount(), 0.8);
//! assert_eq!(cfg.solver.v_points, 101);
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::contract::{ControlSpace, Mode, SolverSettings};
use crate::error::{ConfigError, ModelError};
use crate::model::{
    ConditionalOutputDistribution, EffortGrid, Mixing, ModelPrimitives, OutputGrid, PaymentBounds, Preferences,
};
use crate::oligopoly::{DemandSystem, FirmCost};
use crate::simulator::MIN_PATHS;

/// Smallest promised-value grid accepted from a scenario file.
pub const MIN_V_POINTS: usize = 51;

/// A grid given either by explicit points or as `count` uniform points.
#[derive(Debug, Clone, PartialEq, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGrid {
    points: Option<Vec<f64>>,
    lower: Option<f64>,
    upper: Option<f64>,
    count: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDistribution {
    f_low: Option<Vec<f64>>,
    f_high: Option<Vec<f64>>,
    mixing: Option<Mixing>,
}

#[derive(Debug, Clone, PartialEq, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPreferences {
    utility_exponent: Option<f64>,
    cost_scale: Option<f64>,
    cost_exponent: Option<f64>,
    discount: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawBounds {
    min: Option<f64>,
    max: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawModel {
    #[serde(default)]
    output_grid: RawGrid,
    #[serde(default)]
    effort_grid: RawGrid,
    #[serde(default)]
    distribution: RawDistribution,
    #[serde(default)]
    preferences: RawPreferences,
    #[serde(default)]
    payment_bounds: RawBounds,
}

#[derive(Debug, Clone, PartialEq, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    #[serde(default)]
    model: RawModel,
    #[serde(default)]
    solver: SolverSection,
    #[serde(default)]
    simulation: SimulationSection,
    #[serde(default)]
    oligopoly: OligopolySection,
    #[serde(default)]
    output: OutputSection,
}

/// The model with grids and anchors written out in full.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSection {
    pub outputs: Vec<f64>,
    pub efforts: Vec<f64>,
    pub f_low: Vec<f64>,
    pub f_high: Vec<f64>,
    pub mixing: Mixing,
    pub utility_exponent: f64,
    pub cost_scale: f64,
    pub cost_exponent: f64,
    pub discount: f64,
    pub payment_min: f64,
    pub payment_max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverSection {
    pub mode: Mode,
    pub alpha: f64,
    pub v_points: usize,
    pub tol_vi: f64,
    pub max_iterations: usize,
    pub controls: ControlSpace,
}

impl Default for SolverSection {
    fn default() -> Self {
        let s = SolverSettings::new(Mode::MoralHazard, 0.0);
        SolverSection {
            mode: s.mode,
            alpha: s.alpha,
            v_points: s.v_points,
            tol_vi: s.tol_vi,
            max_iterations: s.max_iterations,
            controls: s.controls,
        }
    }
}

impl SolverSection {
    pub fn settings(&self) -> SolverSettings {
        SolverSettings {
            mode: self.mode,
            alpha: self.alpha,
            v_points: self.v_points,
            tol_vi: self.tol_vi,
            max_iterations: self.max_iterations,
            controls: self.controls.clone(),
        }
    }
}

/// Where simulated paths start.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum StartValue {
    Value(f64),
    /// The gridpoint maximizing the buyer's value.
    #[serde(with = "buyer_optimal")]
    BuyerOptimal,
}

mod buyer_optimal {
    use serde::{de, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str("buyer-optimal")
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<(), D::Error> {
        let s = String::deserialize(d)?;
        if s == "buyer-optimal" {
            Ok(())
        } else {
            Err(de::Error::custom(format!(
                "expected a number or \"buyer-optimal\", got \"{s}\""
            )))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulationSection {
    pub v0: StartValue,
    pub paths: usize,
    pub horizon: usize,
    pub seed: u64,
}

impl Default for SimulationSection {
    fn default() -> Self {
        SimulationSection {
            v0: StartValue::BuyerOptimal,
            paths: 10_000,
            horizon: 200,
            seed: 20_240_601,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OligopolySection {
    pub market_size: f64,
    pub beta: f64,
    pub outside_weight: f64,
    pub vendors: usize,
    pub marginal_costs: Vec<f64>,
    pub fixed_costs: Vec<f64>,
    /// Rate used by `compete`.
    pub alpha: f64,
    /// Rates used by `sweep`, on both sides of the market.
    pub alpha_list: Vec<f64>,
    pub damping: f64,
    pub starts: usize,
    pub seed: u64,
    pub reaction_lower: f64,
    pub reaction_upper: f64,
    pub reaction_points: usize,
}

impl Default for OligopolySection {
    fn default() -> Self {
        let d = DemandSystem::default();
        OligopolySection {
            market_size: d.market_size,
            beta: d.beta,
            outside_weight: d.outside_weight,
            vendors: d.vendors,
            marginal_costs: vec![1.0; d.vendors],
            fixed_costs: vec![0.0; d.vendors],
            alpha: 0.0,
            alpha_list: vec![0.0, 0.03, 0.06],
            damping: 0.5,
            starts: 10,
            seed: 20_240_601,
            reaction_lower: 1.0,
            reaction_upper: 4.0,
            reaction_points: 61,
        }
    }
}

impl OligopolySection {
    pub fn system(&self) -> DemandSystem {
        DemandSystem {
            market_size: self.market_size,
            beta: self.beta,
            outside_weight: self.outside_weight,
            vendors: self.vendors,
        }
    }

    pub fn costs(&self) -> Vec<FirmCost> {
        self.fixed_costs
            .iter()
            .zip(&self.marginal_costs)
            .map(|(&fixed, &marginal)| FirmCost { fixed, marginal })
            .collect()
    }

    pub fn reaction_grid(&self) -> Vec<f64> {
        let n = self.reaction_points;
        let step = (self.reaction_upper - self.reaction_lower) / (n - 1) as f64;
        (0..n).map(|k| self.reaction_lower + step * k as f64).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    pub directory: PathBuf,
    pub formats: Vec<Format>,
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection {
            directory: PathBuf::from("out"),
            formats: vec![Format::Json, Format::Csv],
        }
    }
}

/// A validated scenario with defaults applied.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub model: ModelSection,
    pub solver: SolverSection,
    pub simulation: SimulationSection,
    pub oligopoly: OligopolySection,
    pub output: OutputSection,
    primitives: ModelPrimitives,
}

#[derive(Serialize)]
struct Canonical<'a> {
    model: &'a ModelSection,
    solver: &'a SolverSection,
    simulation: &'a SimulationSection,
    oligopoly: &'a OligopolySection,
}

#[derive(Serialize)]
struct SolveKey<'a> {
    model: &'a ModelSection,
    solver: &'a SolverSection,
}

fn digest<T: Serialize>(value: &T) -> String {
    // Round-tripping through `Value` sorts object keys.
    let value = serde_json::to_value(value).expect("config serializes");
    let text = serde_json::to_string(&value).expect("config serializes");
    hex::encode(Sha256::digest(text.as_bytes()))
}

impl ScenarioConfig {
    pub fn model(&self) -> &ModelPrimitives {
        &self.primitives
    }

    /// Canonical document the hashes are computed from. The output section
    /// is left out: where results are written does not change them.
    pub fn canonical_json(&self) -> String {
        let value = serde_json::to_value(Canonical {
            model: &self.model,
            solver: &self.solver,
            simulation: &self.simulation,
            oligopoly: &self.oligopoly,
        })
        .expect("config serializes");
        serde_json::to_string_pretty(&value).expect("config serializes")
    }

    /// SHA-256 of the canonical scenario.
    pub fn config_hash(&self) -> String {
        digest(&Canonical {
            model: &self.model,
            solver: &self.solver,
            simulation: &self.simulation,
            oligopoly: &self.oligopoly,
        })
    }

    /// SHA-256 of the model and solver sections, the cache key of a solved
    /// contract.
    pub fn solution_key(&self) -> String {
        digest(&SolveKey {
            model: &self.model,
            solver: &self.solver,
        })
    }

    /// Replaces the simulation and stability seeds.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.simulation.seed = seed;
        self.oligopoly.seed = seed;
        self
    }
}

fn model_field(e: ModelError) -> ConfigError {
    match e {
        ModelError::Invalid { field, rule } => ConfigError::Invalid {
            field: format!("model.{field}"),
            rule,
        },
        other => ConfigError::Invalid {
            field: "model".into(),
            rule: other.to_string(),
        },
    }
}

fn invalid(field: &str, rule: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        field: field.to_string(),
        rule: rule.into(),
    }
}

const SCHEMA: &[(&str, &[&str])] = &[
    ("", &["model", "solver", "simulation", "oligopoly", "output"]),
    ("model", &["output_grid", "effort_grid", "distribution", "preferences", "payment_bounds"]),
    ("model.output_grid", &["points", "lower", "upper", "count"]),
    ("model.effort_grid", &["points", "lower", "upper", "count"]),
    ("model.distribution", &["f_low", "f_high", "mixing"]),
    ("model.distribution.mixing", &["kind", "exponent", "rate"]),
    ("model.preferences", &["utility_exponent", "cost_scale", "cost_exponent", "discount"]),
    ("model.payment_bounds", &["min", "max"]),
    ("solver", &["mode", "alpha", "v_points", "tol_vi", "max_iterations", "controls"]),
    ("solver.controls", &["kind", "payments", "continuations"]),
    ("simulation", &["v0", "paths", "horizon", "seed"]),
    (
        "oligopoly",
        &[
            "market_size",
            "beta",
            "outside_weight",
            "vendors",
            "marginal_costs",
            "fixed_costs",
            "alpha",
            "alpha_list",
            "damping",
            "starts",
            "seed",
            "reaction_lower",
            "reaction_upper",
            "reaction_points",
        ],
    ),
    ("output", &["directory", "formats"]),
];

fn nearest(key: &str, known: &[&str]) -> Option<String> {
    known
        .iter()
        .map(|k| (strsim::normalized_damerau_levenshtein(key, k), *k))
        .filter(|(score, _)| *score >= 0.6)
        .max_by(|a, b| a.0.total_cmp(&b.0))
        .map(|(_, k)| k.to_string())
}

fn check_keys(table: &toml::Table, section: &str) -> Result<(), ConfigError> {
    let Some((_, known)) = SCHEMA.iter().find(|(name, _)| *name == section) else {
        return Ok(());
    };
    for (key, value) in table {
        if !known.contains(&key.as_str()) {
            let hint = nearest(key, known)
                .map(|k| format!("; did you mean `{k}`?"))
                .unwrap_or_default();
            return Err(ConfigError::UnknownKey {
                section: if section.is_empty() { "root".into() } else { section.into() },
                key: key.clone(),
                hint,
            });
        }
        if let toml::Value::Table(inner) = value {
            let path = if section.is_empty() { key.clone() } else { format!("{section}.{key}") };
            check_keys(inner, &path)?;
        }
    }
    Ok(())
}

fn grid(raw: &RawGrid, name: &str, default: (f64, f64, usize)) -> Result<Vec<f64>, ConfigError> {
    let field = format!("model.{name}");
    match (&raw.points, raw.lower, raw.upper, raw.count) {
        (Some(points), None, None, None) => Ok(points.clone()),
        (None, lower, upper, count) => {
            let (lo, hi, n) = (
                lower.unwrap_or(default.0),
                upper.unwrap_or(default.1),
                count.unwrap_or(default.2),
            );
            if n == 0 {
                return Err(invalid(&format!("{field}.count"), "must be >= 1"));
            }
            if n == 1 {
                return Ok(vec![lo]);
            }
            let step = (hi - lo) / (n - 1) as f64;
            Ok((0..n).map(|k| if k + 1 == n { hi } else { lo + step * k as f64 }).collect())
        }
        _ => Err(invalid(&field, "give either `points` or `lower`/`upper`/`count`, not both")),
    }
}

fn build_model(raw: &RawModel) -> Result<(ModelSection, ModelPrimitives), ConfigError> {
    let outputs = grid(&raw.output_grid, "output_grid", (0.0, 100.0, 5))?;
    let efforts = grid(&raw.effort_grid, "effort_grid", (0.0, 1.0, 21))?;
    let output_grid = OutputGrid::new(outputs.clone()).map_err(model_field)?;
    let effort_grid = EffortGrid::new(efforts.clone()).map_err(model_field)?;
    let mixing = raw.distribution.mixing.unwrap_or(Mixing::LINEAR);
    let range = (effort_grid.low(), effort_grid.high());
    let dist = match (&raw.distribution.f_low, &raw.distribution.f_high) {
        (Some(lo), Some(hi)) => ConditionalOutputDistribution::new(lo.clone(), hi.clone(), mixing, range),
        (None, None) => ConditionalOutputDistribution::triangular(outputs.len(), mixing, range),
        _ => {
            return Err(invalid(
                "model.distribution",
                "give both `f_low` and `f_high`, or neither for the triangular default",
            ))
        }
    }
    .map_err(model_field)?;
    let p = &raw.preferences;
    let prefs = Preferences::new(
        p.utility_exponent.unwrap_or(0.5),
        p.cost_scale.unwrap_or(1.0),
        p.cost_exponent.unwrap_or(2.0),
        p.discount.unwrap_or(0.9),
    )
    .map_err(model_field)?;
    let bounds = PaymentBounds::new(
        raw.payment_bounds.min.unwrap_or(0.0),
        raw.payment_bounds.max.unwrap_or(100.0),
    )
    .map_err(model_field)?;
    let section = ModelSection {
        outputs,
        efforts,
        f_low: dist.f_low().to_vec(),
        f_high: dist.f_high().to_vec(),
        mixing,
        utility_exponent: prefs.utility_exponent(),
        cost_scale: prefs.cost_scale(),
        cost_exponent: prefs.cost_exponent(),
        discount: prefs.discount(),
        payment_min: bounds.min,
        payment_max: bounds.max,
    };
    let model = ModelPrimitives::new(output_grid, effort_grid, dist, prefs, bounds).map_err(model_field)?;
    Ok((section, model))
}

fn validate_solver(s: &SolverSection) -> Result<(), ConfigError> {
    if s.v_points < MIN_V_POINTS {
        return Err(invalid(
            "solver.v_points",
            format!("must be >= {MIN_V_POINTS}, got {}", s.v_points),
        ));
    }
    s.settings().validate().map_err(|e| match e {
        crate::error::SolverError::Config { field, rule } => invalid(&format!("solver.{field}"), rule),
        other => invalid("solver", other.to_string()),
    })
}

fn validate_simulation(s: &SimulationSection) -> Result<(), ConfigError> {
    if s.paths < MIN_PATHS {
        return Err(invalid("simulation.paths", format!("must be >= {MIN_PATHS}")));
    }
    if s.horizon == 0 {
        return Err(invalid("simulation.horizon", "must be >= 1"));
    }
    if let StartValue::Value(v) = s.v0 {
        if !v.is_finite() {
            return Err(invalid("simulation.v0", "must be finite"));
        }
    }
    Ok(())
}

fn validate_oligopoly(o: &OligopolySection) -> Result<(), ConfigError> {
    let market = |e: crate::error::MarketError| match e {
        crate::error::MarketError::Invalid { field, rule } => invalid(&format!("oligopoly.{field}"), rule),
        other => invalid("oligopoly", other.to_string()),
    };
    DemandSystem::new(o.market_size, o.beta, o.outside_weight, o.vendors).map_err(market)?;
    if o.marginal_costs.len() != o.vendors || o.fixed_costs.len() != o.vendors {
        return Err(invalid(
            "oligopoly.marginal_costs",
            format!("need one marginal and one fixed cost per vendor ({})", o.vendors),
        ));
    }
    for (&fixed, &marginal) in o.fixed_costs.iter().zip(&o.marginal_costs) {
        FirmCost::new(fixed, marginal).map_err(market)?;
    }
    if !(o.alpha.is_finite() && o.alpha >= 0.0) {
        return Err(invalid("oligopoly.alpha", "must be finite and nonnegative"));
    }
    if o.alpha_list.is_empty()
        || o.alpha_list.iter().any(|a| !(a.is_finite() && *a >= 0.0))
        || o.alpha_list.windows(2).any(|w| w[0] >= w[1])
    {
        return Err(invalid(
            "oligopoly.alpha_list",
            "must be nonempty, nonnegative and strictly ascending",
        ));
    }
    if !(o.damping > 0.0 && o.damping <= 1.0) {
        return Err(invalid("oligopoly.damping", "must lie in (0, 1]"));
    }
    if o.starts == 0 {
        return Err(invalid("oligopoly.starts", "must be >= 1"));
    }
    if !(o.reaction_lower > 0.0 && o.reaction_upper > o.reaction_lower && o.reaction_upper.is_finite()) {
        return Err(invalid(
            "oligopoly.reaction_lower",
            "need 0 < reaction_lower < reaction_upper",
        ));
    }
    if o.reaction_points < 2 {
        return Err(invalid("oligopoly.reaction_points", "must be >= 2"));
    }
    Ok(())
}

/// Parses and validates scenario text. `origin` names the source in errors.
pub fn parse_config(text: &str, origin: impl AsRef<Path>) -> Result<ScenarioConfig, ConfigError> {
    let path = origin.as_ref().to_path_buf();
    let parse = |e: toml::de::Error| ConfigError::Parse {
        path: path.clone(),
        message: e.to_string(),
    };
    let table: toml::Table = toml::from_str(text).map_err(parse)?;
    check_keys(&table, "")?;
    let raw: RawConfig = toml::from_str(text).map_err(parse)?;
    let (model, primitives) = build_model(&raw.model)?;
    validate_solver(&raw.solver)?;
    validate_simulation(&raw.simulation)?;
    validate_oligopoly(&raw.oligopoly)?;
    if raw.output.formats.is_empty() {
        return Err(invalid("output.formats", "name at least one of \"csv\", \"json\""));
    }
    let mut output = raw.output;
    output.formats.sort_by_key(|f| *f as u8);
    output.formats.dedup();
    Ok(ScenarioConfig {
        model,
        solver: raw.solver,
        simulation: raw.simulation,
        oligopoly: raw.oligopoly,
        output,
        primitives,
    })
}

/// Reads and validates a scenario file.
pub fn load_config(path: impl AsRef<Path>) -> Result<ScenarioConfig, ConfigError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_config(&text, path)
}
