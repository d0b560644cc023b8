//! Command dispatch, artifacts and the run manifest.
//!
//! Each command writes its data files into the output directory and then a
//! `manifest.json` naming them. Data files depend only on the scenario, so
//! two runs of the same scenario write identical bytes; timestamps live in
//! the manifest alone.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use chrono::{SecondsFormat, Utc};
use serde::{Deserialize, Serialize};

use crate::config::{Format, ModelSection, ScenarioConfig, SolverSection, StartValue};
use crate::contract::{
    recover_multipliers, solve, transaction_sweep, verify_monotonicity, ControlSpace, Mode, Solution, TOL_FOC, TOL_IC,
    TOL_PK,
};
use crate::error::ConfigError;
use crate::model::{check_cdfc, check_mlrp, check_mlrp_cross_product, PropertyReport};
use crate::oligopoly::{
    alpha_sweep, check_a5, nash_solve, price_cap, reaction_curve_table, stability, TOL_FOC as TOL_FOC_B,
};
use crate::simulator::{
    buyer_optimal_v0, deviation_value, estimate_agent_value, estimate_principal_value, output_frequency_check,
    simulate, ValueEstimate,
};

pub const TOOLKIT_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Command {
    /// Likelihood-ratio and convexity reports for the model.
    Check,
    /// Solve the contract, verify monotonicity, recover multipliers.
    Solve,
    /// Simulate the solved contract and test deviations.
    Simulate,
    /// Price equilibrium, reaction curves and demand conditions.
    Compete,
    /// Transaction-cost sweeps on both sides of the market.
    Sweep,
    /// Re-emit a persisted solution.
    Export,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Check => "check",
            Command::Solve => "solve",
            Command::Simulate => "simulate",
            Command::Compete => "compete",
            Command::Sweep => "sweep",
            Command::Export => "export",
        }
    }
}

/// Outcome of one named check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckRecord {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

/// The first asserted check that failed, or the error that stopped the run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailureRecord {
    pub command: String,
    pub invariant: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub config_hash: String,
    pub toolkit_version: String,
    pub command: String,
    pub started: String,
    pub finished: String,
    pub seeds: BTreeMap<String, u64>,
    pub files: Vec<String>,
    /// Checks that decide the exit status.
    pub asserted: Vec<CheckRecord>,
    /// Checks that are recorded but never fail a run.
    pub report_only: Vec<CheckRecord>,
    /// `"cache"` or `"solved"` for commands that need a solved contract.
    pub solution_source: Option<String>,
    pub failure: Option<FailureRecord>,
}

impl RunManifest {
    /// 0 on success, 1 when an asserted check failed or the run stopped.
    pub fn exit_code(&self) -> i32 {
        if self.failure.is_none() {
            0
        } else {
            1
        }
    }
}

/// Accumulates files and checks for one run.
struct Run<'a> {
    cfg: &'a ScenarioConfig,
    command: Command,
    dir: PathBuf,
    formats: Vec<Format>,
    hash: String,
    files: Vec<String>,
    seeds: BTreeMap<String, u64>,
    asserted: Vec<CheckRecord>,
    report_only: Vec<CheckRecord>,
    solution_source: Option<String>,
    stopped: Option<FailureRecord>,
}

/// Envelope every JSON artifact is written in.
#[derive(Serialize)]
struct Document<'a, T: Serialize> {
    kind: &'a str,
    config_hash: &'a str,
    toolkit_version: &'a str,
    report: &'a T,
}

fn io_error(path: &Path, source: std::io::Error) -> ConfigError {
    ConfigError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Shortest round-trip decimal form; never locale dependent.
fn num(x: f64) -> String {
    if x.is_finite() {
        format!("{x}")
    } else if x.is_nan() {
        "nan".into()
    } else if x > 0.0 {
        "inf".into()
    } else {
        "-inf".into()
    }
}

fn opt(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}

impl<'a> Run<'a> {
    fn wants(&self, f: Format) -> bool {
        self.formats.contains(&f)
    }

    fn write_bytes(&mut self, name: &str, bytes: &[u8]) -> Result<(), ConfigError> {
        let path = self.dir.join(name);
        fs::write(&path, bytes).map_err(|e| io_error(&path, e))?;
        if !self.files.iter().any(|f| f == name) {
            self.files.push(name.to_string());
        }
        Ok(())
    }

    fn json<T: Serialize>(&mut self, kind: &str, name: &str, report: &T) -> Result<(), ConfigError> {
        let doc = Document {
            kind,
            config_hash: &self.hash,
            toolkit_version: TOOLKIT_VERSION,
            report,
        };
        let mut text = serde_json::to_string_pretty(&doc).expect("reports serialize");
        text.push('\n');
        self.write_bytes(name, text.as_bytes())
    }

    /// Comma-separated table with one header row; the first column carries
    /// the config hash.
    fn csv(&mut self, name: &str, header: &[&str], rows: Vec<Vec<String>>) -> Result<(), ConfigError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut head = vec!["config_hash"];
        head.extend_from_slice(header);
        w.write_record(&head).expect("in-memory write");
        for row in rows {
            let mut record = vec![self.hash.clone()];
            record.extend(row);
            w.write_record(&record).expect("in-memory write");
        }
        let bytes = w.into_inner().expect("in-memory write");
        self.write_bytes(name, &bytes)
    }

    fn assert(&mut self, name: &str, passed: bool, detail: impl Into<String>) {
        self.asserted.push(CheckRecord {
            name: name.into(),
            passed,
            detail: detail.into(),
        });
    }

    fn report(&mut self, name: &str, passed: bool, detail: impl Into<String>) {
        self.report_only.push(CheckRecord {
            name: name.into(),
            passed,
            detail: detail.into(),
        });
    }

    /// Records an error that ends the computation.
    fn stop(&mut self, invariant: &str, message: impl Into<String>) {
        self.stopped = Some(FailureRecord {
            command: self.command.name().into(),
            invariant: invariant.into(),
            message: message.into(),
        });
    }

    fn property(report: &PropertyReport) -> String {
        match report.worst {
            Some(w) => format!(
                "worst violation {} at effort {:?}, output {:?}",
                num(w.magnitude),
                w.effort_index,
                w.output_index
            ),
            None => "no violation".into(),
        }
    }
}

/// Persisted solved contract, keyed by the model and solver sections.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PersistedSolution {
    pub solution_key: String,
    pub model: ModelSection,
    pub solver: SolverSection,
    pub solution: Solution,
}

pub fn solution_file(cfg: &ScenarioConfig) -> String {
    format!("solution-{}.json", cfg.solution_key())
}

/// Loads the persisted solution for `cfg` from `dir` if one exists whose
/// key and recorded sections match exactly.
pub fn load_solution(cfg: &ScenarioConfig, dir: &Path) -> Option<Solution> {
    let text = fs::read_to_string(dir.join(solution_file(cfg))).ok()?;
    let doc: serde_json::Value = serde_json::from_str(&text).ok()?;
    let stored: PersistedSolution = serde_json::from_value(doc.get("report")?.clone()).ok()?;
    (stored.solution_key == cfg.solution_key() && stored.model == cfg.model && stored.solver == cfg.solver)
        .then_some(stored.solution)
}

fn run_check(run: &mut Run) -> Result<(), ConfigError> {
    let model = run.cfg.model();
    let mlrp = check_mlrp(model.distribution(), model.effort_grid());
    let cross = check_mlrp_cross_product(model.distribution(), model.effort_grid());
    let cdfc = check_cdfc(model.distribution(), model.effort_grid());
    run.assert("mlrp", mlrp.passed, Run::property(&mlrp));
    run.assert("cdfc", cdfc.passed, Run::property(&cdfc));
    run.report("mlrp_cross_product", cross.passed, Run::property(&cross));
    let (v_min, v_max) = model.derive_v_bounds();
    #[derive(Serialize)]
    struct CheckReport<'r> {
        properties: [&'r PropertyReport; 3],
        v_min: f64,
        v_max: f64,
    }
    if run.wants(Format::Json) {
        let report = CheckReport {
            properties: [&mlrp, &cdfc, &cross],
            v_min,
            v_max,
        };
        run.json("model_check", "check.json", &report)?;
    }
    if run.wants(Format::Csv) {
        let rows = [&mlrp, &cdfc, &cross]
            .iter()
            .map(|r| {
                vec![
                    r.property.clone(),
                    r.passed.to_string(),
                    r.worst.and_then(|w| w.effort_index).map(|i| i.to_string()).unwrap_or_default(),
                    r.worst.and_then(|w| w.output_index).map(|i| i.to_string()).unwrap_or_default(),
                    opt(r.worst.map(|w| w.magnitude)),
                ]
            })
            .collect();
        run.csv(
            "check.csv",
            &["property", "passed", "effort_index", "output_index", "magnitude"],
            rows,
        )?;
    }
    Ok(())
}

/// Solves, persists, and records the contract-side checks.
fn solve_and_verify(run: &mut Run) -> Result<Option<Solution>, ConfigError> {
    let cfg = run.cfg;
    let settings = cfg.solver.settings();
    let solution = match solve(cfg.model(), &settings) {
        Ok(s) => s,
        Err(e) => {
            run.stop("solver.converged", e.to_string());
            return Ok(None);
        }
    };
    persist(run, &solution)?;
    run.solution_source = Some("solved".into());
    verify(run, &solution, true)?;
    Ok(Some(solution))
}

fn persist(run: &mut Run, solution: &Solution) -> Result<(), ConfigError> {
    let stored = PersistedSolution {
        solution_key: run.cfg.solution_key(),
        model: run.cfg.model.clone(),
        solver: run.cfg.solver.clone(),
        solution: solution.clone(),
    };
    let name = solution_file(run.cfg);
    run.json("solution", &name, &stored)
}

/// Contract checks and tables. With `record` false only tables are written.
fn verify(run: &mut Run, solution: &Solution, record: bool) -> Result<(), ConfigError> {
    let model = run.cfg.model();
    let mode = run.cfg.solver.mode;
    let alpha = run.cfg.solver.alpha;
    let policy = &solution.policy;
    let value = &solution.value;
    let results = verify_monotonicity(policy, model);
    let multipliers = recover_multipliers(policy, value, model, alpha);
    let domain = value.v_domain().expect("solved domain is nonempty");
    let audit = policy.audit(model, domain);
    let concavity = value.check_concavity();

    if record {
        run.assert("results.r1_payments_rise_with_output", results.r1.passed, Run::property(&results.r1));
        run.assert("results.r2_continuations_rise_with_output", results.r2.passed, Run::property(&results.r2));
        run.assert("results.r3_schedules_rise_with_promise", results.r3.passed, Run::property(&results.r3));
        let pk = format!("max residual {}", num(audit.max_pk_residual));
        match run.cfg.solver.controls {
            ControlSpace::Continuous => run.assert("policy.promise_keeping", audit.max_pk_residual <= TOL_PK, pk),
            // Finite menus deliver at least the promise, rarely exactly.
            ControlSpace::Lattice { .. } => run.report("policy.promise_keeping", audit.max_pk_residual <= TOL_PK, pk),
        }
        run.assert(
            "policy.bounds",
            audit.payments_in_bounds && audit.continuations_in_domain,
            format!(
                "payments in bounds: {}, continuations in domain: {}",
                audit.payments_in_bounds, audit.continuations_in_domain
            ),
        );
        let ic = format!("max gain {}", num(audit.max_ic_gain));
        match mode {
            Mode::MoralHazard => run.assert("policy.incentive_compatible", audit.max_ic_gain <= TOL_IC, ic),
            Mode::FullInfo => run.report("policy.incentive_compatible", audit.max_ic_gain <= TOL_IC, ic),
        }
        if mode == Mode::FullInfo {
            let range = model.payment_bounds().range();
            let (p_spread, w_spread) = schedule_spread(solution);
            let tol_w = 1e-6 * (domain.1 - domain.0).max(f64::MIN_POSITIVE);
            run.assert(
                "full_info.constant_schedules",
                p_spread <= 1e-6 * range && w_spread <= tol_w,
                format!("payment spread {}, continuation spread {}", num(p_spread), num(w_spread)),
            );
        }
        let scale = multipliers.lambda_scale;
        let fit = multipliers.max_fit_residual();
        run.assert(
            "multipliers.foc_fit",
            fit <= TOL_FOC * scale,
            format!("max residual {} against {}", num(fit), num(TOL_FOC * scale)),
        );
        let bracket = multipliers.max_envelope_bracket_gap();
        run.assert(
            "multipliers.envelope_bracket",
            bracket <= TOL_FOC * scale,
            format!("max gap {}", num(bracket)),
        );
        if mode == Mode::MoralHazard {
            let a_low = model.effort_grid().low();
            let bad = multipliers
                .points
                .iter()
                .filter(|p| p.interior)
                .filter(|p| policy.contract(p.index).is_some_and(|c| c.effort > a_low))
                .filter(|p| !(p.mu > 0.0))
                .count();
            run.assert("multipliers.mu_positive", bad == 0, format!("{bad} interior points with mu <= 0"));
        }
        run.report(
            "multipliers.envelope_fd",
            multipliers.max_envelope_gap() <= TOL_FOC * scale,
            format!("max |lambda + dK/dv| {}", num(multipliers.max_envelope_gap())),
        );
        run.report(
            "multipliers.corner_kkt",
            multipliers.max_corner_violation() <= TOL_FOC * scale,
            format!("max violation {}", num(multipliers.max_corner_violation())),
        );
        run.report(
            "multipliers.continuation_foc",
            multipliers.max_continuation_residual() <= TOL_FOC * scale,
            format!("max residual {}", num(multipliers.max_continuation_residual())),
        );
        run.report("value.concave", concavity.passed, Run::property(&concavity));
        for w in &solution.report.warnings {
            run.report("solver.warning", false, w.clone());
        }
    }

    if run.wants(Format::Json) {
        #[derive(Serialize)]
        struct SolveReport<'r> {
            iterations: usize,
            converged: bool,
            deltas: &'r [f64],
            domain: (f64, f64),
            results: &'r crate::contract::ResultsReport,
            audit: &'r crate::contract::PolicyAudit,
            multipliers: &'r crate::contract::MultiplierEstimates,
            concavity: &'r PropertyReport,
        }
        let report = SolveReport {
            iterations: solution.report.iterations,
            converged: solution.report.converged,
            deltas: &solution.report.deltas,
            domain,
            results: &results,
            audit: &audit,
            multipliers: &multipliers,
            concavity: &concavity,
        };
        run.json("contract_solution", "solve.json", &report)?;
    }
    if run.wants(Format::Csv) {
        let pts = value.grid().points();
        let rows = (0..pts.len())
            .map(|i| vec![num(pts[i]), opt(value.value(i))])
            .collect();
        run.csv("value_function.csv", &["v", "k"], rows)?;
        let outputs = model.output_grid().points();
        let mut rows = Vec::new();
        for c in policy.contracts.iter().flatten() {
            for (y, &out) in outputs.iter().enumerate() {
                rows.push(vec![
                    num(c.v),
                    y.to_string(),
                    num(out),
                    num(c.effort),
                    num(c.payments[y]),
                    num(c.continuations[y]),
                ]);
            }
        }
        run.csv(
            "policy.csv",
            &["v", "output_index", "output", "effort", "payment", "continuation"],
            rows,
        )?;
        let rows = multipliers
            .points
            .iter()
            .map(|p| {
                vec![
                    num(p.v),
                    num(p.lambda),
                    num(p.mu),
                    num(p.lambda_fd),
                    num(p.fit_residual),
                    p.interior.to_string(),
                ]
            })
            .collect();
        run.csv(
            "multipliers.csv",
            &["v", "lambda", "mu", "lambda_fd", "fit_residual", "interior"],
            rows,
        )?;
    }
    Ok(())
}

fn schedule_spread(solution: &Solution) -> (f64, f64) {
    let spread = |xs: &[f64]| {
        let mean = xs.iter().sum::<f64>() / xs.len() as f64;
        xs.iter().map(|x| (x - mean).abs()).fold(0.0, f64::max)
    };
    solution
        .policy
        .contracts
        .iter()
        .flatten()
        .fold((0.0f64, 0.0f64), |(p, w), c| {
            (p.max(spread(&c.payments)), w.max(spread(&c.continuations)))
        })
}

fn cached_or_solved(run: &mut Run) -> Result<Option<Solution>, ConfigError> {
    if let Some(s) = load_solution(run.cfg, &run.dir) {
        run.solution_source = Some("cache".into());
        return Ok(Some(s));
    }
    let settings = run.cfg.solver.settings();
    match solve(run.cfg.model(), &settings) {
        Ok(s) => {
            persist(run, &s)?;
            run.solution_source = Some("solved".into());
            Ok(Some(s))
        }
        Err(e) => {
            run.stop("solver.converged", e.to_string());
            Ok(None)
        }
    }
}

fn run_simulate(run: &mut Run) -> Result<(), ConfigError> {
    let Some(solution) = cached_or_solved(run)? else {
        return Ok(());
    };
    let cfg = run.cfg;
    let model = cfg.model();
    let sim = &cfg.simulation;
    run.seeds.insert("simulation".into(), sim.seed);
    let policy = &solution.policy;
    let v0 = match sim.v0 {
        StartValue::Value(v) => v,
        StartValue::BuyerOptimal => buyer_optimal_v0(&solution.value).expect("solved domain is nonempty"),
    };
    let (paths, horizon, seed) = (sim.paths, sim.horizon, sim.seed);
    let results = (|| {
        let history = simulate(policy, model, v0, horizon, seed)?;
        let agent = estimate_agent_value(policy, model, v0, paths, horizon, seed)?;
        let principal = estimate_principal_value(policy, model, v0, paths, horizon, seed)?;
        let m = model.effort_grid().len();
        let shirk = deviation_value(policy, model, v0, &|_| 0, paths, horizon, seed)?;
        let strive = deviation_value(policy, model, v0, &|_| m - 1, paths, horizon, seed)?;
        let freq = output_frequency_check(policy, model, v0, paths.min(1000), horizon, seed)?;
        Ok::<_, crate::error::SimulationError>((history, agent, principal, shirk, strive, freq))
    })();
    let (history, agent, principal, shirk, strive, freq) = match results {
        Ok(r) => r,
        Err(e) => {
            run.stop("simulation.start", e.to_string());
            return Ok(());
        }
    };

    run.assert(
        "simulation.promise_keeping",
        agent.covers(v0, TOL_PK),
        format!(
            "estimate {} (stderr {}, truncation {}) for v0 = {}",
            num(agent.mean),
            num(agent.stderr),
            num(agent.truncation_bound),
            num(v0)
        ),
    );
    let k0 = solution.value.interpolate(v0);
    run.report(
        "simulation.buyer_value",
        k0.is_some_and(|k| principal.covers(k, TOL_PK)),
        format!("estimate {} against K(v0) = {}", num(principal.mean), opt(k0)),
    );
    for (name, dev) in [("always_low_effort", &shirk), ("always_high_effort", &strive)] {
        let gain = dev.mean - agent.mean;
        let noise = 3.0 * (dev.stderr.powi(2) + agent.stderr.powi(2)).sqrt() + dev.truncation_bound + agent.truncation_bound;
        let detail = format!("gain {} against noise {}", num(gain), num(noise));
        let check = format!("simulation.deviation.{name}");
        match cfg.solver.mode {
            Mode::MoralHazard => run.assert(&check, gain <= noise, detail),
            Mode::FullInfo => run.report(&check, gain <= noise, detail),
        }
    }
    run.report(
        "simulation.output_frequencies",
        freq.within_critical,
        format!("statistic {} against {}", num(freq.statistic), num(freq.critical_value)),
    );

    if run.wants(Format::Json) {
        #[derive(Serialize)]
        struct SimReport<'r> {
            v0: f64,
            agent: &'r ValueEstimate,
            principal: &'r ValueEstimate,
            buyer_value_at_v0: Option<f64>,
            always_low_effort: &'r ValueEstimate,
            always_high_effort: &'r ValueEstimate,
            frequencies: &'r crate::simulator::FrequencyCheck,
        }
        let report = SimReport {
            v0,
            agent: &agent,
            principal: &principal,
            buyer_value_at_v0: k0,
            always_low_effort: &shirk,
            always_high_effort: &strive,
            frequencies: &freq,
        };
        run.json("simulation", "simulate.json", &report)?;
    }
    if run.wants(Format::Csv) {
        let rows = history
            .periods
            .iter()
            .map(|p| {
                vec![
                    p.t.to_string(),
                    num(p.output),
                    num(p.payment),
                    num(p.effort),
                    num(p.v),
                    num(p.next_v),
                ]
            })
            .collect();
        run.csv("history.csv", &["t", "y", "p", "a", "v", "next_v"], rows)?;
        let rows = [("agent", &agent), ("principal", &principal), ("always_low_effort", &shirk), ("always_high_effort", &strive)]
            .iter()
            .map(|(name, e)| {
                vec![
                    name.to_string(),
                    num(e.mean),
                    num(e.stderr),
                    e.paths.to_string(),
                    e.horizon.to_string(),
                    num(e.truncation_bound),
                    e.seed.to_string(),
                ]
            })
            .collect();
        run.csv(
            "estimates.csv",
            &["estimate", "mean", "stderr", "paths", "horizon", "truncation_bound", "seed"],
            rows,
        )?;
    }
    Ok(())
}

fn run_compete(run: &mut Run) -> Result<(), ConfigError> {
    let o = &run.cfg.oligopoly;
    let system = o.system();
    let costs = o.costs();
    run.seeds.insert("stability".into(), o.seed);
    let eq = match nash_solve(&system, &costs, o.alpha, o.damping, None) {
        Ok(eq) => eq,
        Err(e) => {
            run.stop("oligopoly.converged", e.to_string());
            return Ok(());
        }
    };
    let stab = match stability(&system, &costs, o.alpha, o.damping, o.starts, o.seed) {
        Ok(s) => s,
        Err(e) => {
            run.stop("oligopoly.stability", e.to_string());
            return Ok(());
        }
    };
    let foc = eq.foc_residuals.iter().map(|r| r.abs()).fold(0.0, f64::max);
    run.assert("oligopoly.foc", foc <= TOL_FOC_B, format!("max residual {}", num(foc)));
    run.assert(
        "oligopoly.nash_audit",
        eq.audit.passed,
        format!("max gains {:?}", eq.audit.max_gain),
    );
    run.assert(
        "oligopoly.stability",
        stab.stable,
        format!("max spread {} over {} starts", num(stab.max_spread), stab.starts.len()),
    );
    run.assert("oligopoly.below_cap", !eq.capped, format!("cap {}", num(price_cap(&costs))));
    for (i, a6) in eq.a6.iter().enumerate() {
        run.report(&format!("oligopoly.a6.vendor{i}"), a6.holds, format!("margin {}", num(a6.margin)));
    }
    let ratios: Vec<f64> = (0..31).map(|k| 0.5 + 0.05 * k as f64).collect();
    let mut a5 = Vec::new();
    for i in 0..costs.len() {
        match check_a5(&system, &eq.prices, i, &ratios, o.alpha) {
            Ok(r) => {
                run.report(&format!("oligopoly.a5.vendor{i}"), r.passed, Run::property(&r));
                a5.push(r);
            }
            Err(e) => run.report(&format!("oligopoly.a5.vendor{i}"), false, e.to_string()),
        }
    }
    let table = if costs.len() == 2 {
        reaction_curve_table(&system, &costs, o.alpha, &o.reaction_grid()).ok()
    } else {
        None
    };
    if let Some(t) = &table {
        run.report(
            "oligopoly.reaction_slopes_positive",
            t.slopes_positive.iter().all(|&b| b),
            format!("{:?}", t.slopes_positive),
        );
        let step = t.grid[1] - t.grid[0];
        let close = t
            .crossing
            .is_some_and(|(p1, p2)| (p1 - eq.prices[0]).abs() <= step && (p2 - eq.prices[1]).abs() <= step);
        run.report("oligopoly.reaction_crossing", close, format!("crossing {:?}", t.crossing));
    }

    if run.wants(Format::Json) {
        #[derive(Serialize)]
        struct CompeteReport<'r> {
            equilibrium: &'r crate::oligopoly::EquilibriumResult,
            stability: &'r crate::oligopoly::StabilityReport,
            a5: &'r [PropertyReport],
            reaction: Option<&'r crate::oligopoly::ReactionTable>,
        }
        let report = CompeteReport {
            equilibrium: &eq,
            stability: &stab,
            a5: &a5,
            reaction: table.as_ref(),
        };
        run.json("equilibrium", "compete.json", &report)?;
    }
    if run.wants(Format::Csv) {
        let rows = (0..eq.prices.len())
            .map(|i| {
                vec![
                    num(eq.alpha),
                    i.to_string(),
                    num(eq.prices[i]),
                    num(eq.demands[i]),
                    num(eq.elasticities[i]),
                    num(eq.profits[i]),
                    num(eq.a6[i].margin),
                ]
            })
            .collect();
        run.csv(
            "equilibrium.csv",
            &["alpha", "vendor", "price", "demand", "elasticity", "profit", "a6_margin"],
            rows,
        )?;
        if let Some(t) = &table {
            run.csv("reaction_curves.csv", &["alpha", "firm", "grid", "best_response"], reaction_rows(t))?;
        }
    }
    Ok(())
}

fn reaction_rows(t: &crate::oligopoly::ReactionTable) -> Vec<Vec<String>> {
    let mut rows = Vec::new();
    for (firm, curve) in [(1, &t.firm1), (2, &t.firm2)] {
        for (g, r) in t.grid.iter().zip(curve.iter()) {
            rows.push(vec![num(t.alpha), firm.to_string(), num(*g), num(*r)]);
        }
    }
    rows
}

fn run_sweep(run: &mut Run) -> Result<(), ConfigError> {
    let cfg = run.cfg;
    let o = &cfg.oligopoly;
    let alphas = &o.alpha_list;
    let contract = match transaction_sweep(cfg.model(), &cfg.solver.settings(), alphas, None) {
        Ok(r) => r,
        Err(e) => {
            run.stop("sweep.contract_solved", e.to_string());
            return Ok(());
        }
    };
    let market = match alpha_sweep(&o.system(), &o.costs(), alphas, o.damping) {
        Ok(r) => r,
        Err(e) => {
            run.stop("sweep.market_solved", e.to_string());
            return Ok(());
        }
    };
    let worst = contract
        .violations
        .iter()
        .max_by(|a, b| a.magnitude.total_cmp(&b.magnitude));
    run.assert(
        "sweep.contract_falls_with_alpha",
        contract.passed(),
        match worst {
            Some(w) => format!(
                "{} violations; largest: {} rises by {} from alpha {} to {} at v = {}",
                contract.violations.len(),
                w.kind,
                num(w.magnitude),
                num(w.alpha_low),
                num(w.alpha_high),
                num(w.v)
            ),
            None => "no violations".into(),
        },
    );
    run.assert(
        "sweep.prices_fall_with_alpha",
        market.passed(),
        format!("per vendor: {:?}", market.strictly_decreasing),
    );
    run.report(
        "sweep.a6_verified_everywhere",
        market.unverified_pairs.is_empty(),
        format!("unverified pairs: {:?}", market.unverified_pairs),
    );

    if run.wants(Format::Json) {
        #[derive(Serialize)]
        struct SweepDoc<'r> {
            alphas: &'r [f64],
            probes: &'r [usize],
            contract_violations: &'r [crate::contract::SweepViolation],
            tol_payment: f64,
            tol_value: f64,
            market: &'r crate::oligopoly::ComparativeStaticsReport,
        }
        let doc = SweepDoc {
            alphas,
            probes: &contract.probes,
            contract_violations: &contract.violations,
            tol_payment: contract.tol_payment,
            tol_value: contract.tol_value,
            market: &market,
        };
        run.json("comparative_statics", "sweep.json", &doc)?;
    }
    if run.wants(Format::Csv) {
        let outputs = cfg.model().output_grid().points();
        let mut rows = Vec::new();
        for e in &contract.entries {
            for &i in &contract.probes {
                if let Some(c) = e.solution.policy.contract(i) {
                    for (y, &out) in outputs.iter().enumerate() {
                        rows.push(vec![
                            num(e.alpha),
                            num(c.v),
                            y.to_string(),
                            num(out),
                            num(c.payments[y]),
                            num(c.continuations[y]),
                        ]);
                    }
                }
            }
        }
        run.csv(
            "contract_sweep.csv",
            &["alpha", "v", "output_index", "output", "payment", "continuation"],
            rows,
        )?;
        let mut rows = Vec::new();
        for e in &contract.entries {
            let k = &e.solution.value;
            for (i, &v) in k.grid().points().iter().enumerate() {
                rows.push(vec![num(e.alpha), num(v), opt(k.value(i))]);
            }
        }
        run.csv("contract_values.csv", &["alpha", "v", "k"], rows)?;
        let mut rows = Vec::new();
        for e in &market.entries {
            let eq = &e.equilibrium;
            for i in 0..eq.prices.len() {
                rows.push(vec![
                    num(e.alpha),
                    i.to_string(),
                    num(eq.prices[i]),
                    num(e.buyer_prices[i]),
                    opt(e.vendor_shares[i]),
                    num(eq.elasticities[i]),
                    eq.a6[i].holds.to_string(),
                ]);
            }
        }
        run.csv(
            "market_sweep.csv",
            &["alpha", "vendor", "price", "buyer_price", "vendor_share", "elasticity", "a6_holds"],
            rows,
        )?;
    }
    Ok(())
}

fn run_export(run: &mut Run) -> Result<(), ConfigError> {
    let Some(solution) = load_solution(run.cfg, &run.dir) else {
        let name = solution_file(run.cfg);
        run.stop("cache.solution_present", format!("no persisted solution {name}; run `solve` first"));
        return Ok(());
    };
    run.solution_source = Some("cache".into());
    verify(run, &solution, false)
}

/// Runs `command` on `cfg`, writing artifacts and the manifest into `out`.
///
/// Only I/O failures are returned as errors; failed checks and solver
/// errors end up in the manifest's failure record.
pub fn dispatch(command: Command, cfg: &ScenarioConfig, out: &Path, formats: &[Format]) -> Result<RunManifest, ConfigError> {
    let started = Utc::now().to_rfc3339_opts(SecondsFormat::Millis, true);
    fs::create_dir_all(out).map_err(|e| io_error(out, e))?;
    let mut run = Run {
        cfg,
        command,
        dir: out.to_path_buf(),
        formats: formats.to_vec(),
        hash: cfg.config_hash(),
        files: Vec::new(),
        seeds: BTreeMap::new(),
        asserted: Vec::new(),
        report_only: Vec::new(),
        solution_source: None,
        stopped: None,
    };
    match command {
        Command::Check => run_check(&mut run)?,
        Command::Solve => {
            solve_and_verify(&mut run)?;
        }
        Command::Simulate => run_simulate(&mut run)?,
        Command::Compete => run_compete(&mut run)?,
        Command::Sweep => run_sweep(&mut run)?,
        Command::Export => run_export(&mut run)?,
    }
    let failure = run.stopped.clone().or_else(|| {
        run.asserted.iter().find(|c| !c.passed).map(|c| FailureRecord {
            command: command.name().into(),
            invariant: c.name.clone(),
            message: c.detail.clone(),
        })
    });
    let manifest = RunManifest {
        config_hash: run.hash.clone(),
        toolkit_version: TOOLKIT_VERSION.into(),
        command: command.name().into(),
        started,
        finished: Utc::now().to_rfc3339_opts(SecondsFormat::Millis, true),
        seeds: run.seeds,
        files: run.files,
        asserted: run.asserted,
        report_only: run.report_only,
        solution_source: run.solution_source,
        failure,
    };
    let path = out.join("manifest.json");
    let mut text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    text.push('\n');
    fs::write(&path, text).map_err(|e| io_error(&path, e))?;
    Ok(manifest)
}

/// Command-line arguments.
#[derive(Debug, clap::Parser)]
#[command(name = "mssp-econ", version, about = "Dynamic security-outsourcing contracts and vendor price competition")]
pub struct Cli {
    #[arg(value_enum)]
    pub command: Command,
    /// Scenario file.
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory; overrides `[output] directory`.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Seed for simulation and multi-start checks.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Write only this format.
    #[arg(long, value_enum)]
    pub format: Option<CliFormat>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum CliFormat {
    Csv,
    Json,
}

/// Exit status for configuration, usage and I/O errors.
pub const EXIT_USAGE: i32 = 2;

/// Loads the scenario, dispatches, and reports. Returns the exit status.
pub fn run(cli: &Cli) -> i32 {
    let fail = |invariant: &str, message: String| {
        let record = FailureRecord {
            command: cli.command.name().into(),
            invariant: invariant.into(),
            message,
        };
        eprintln!("{}", serde_json::to_string(&record).expect("record serializes"));
        EXIT_USAGE
    };
    let cfg = match crate::config::load_config(&cli.config) {
        Ok(c) => c,
        Err(e) => return fail("config.valid", e.to_string()),
    };
    let cfg = match cli.seed {
        Some(s) => cfg.with_seed(s),
        None => cfg,
    };
    let out = cli.out.clone().unwrap_or_else(|| cfg.output.directory.clone());
    let formats = match cli.format {
        Some(CliFormat::Csv) => vec![Format::Csv],
        Some(CliFormat::Json) => vec![Format::Json],
        None => cfg.output.formats.clone(),
    };
    let manifest = match dispatch(cli.command, &cfg, &out, &formats) {
        Ok(m) => m,
        Err(e) => return fail("io", e.to_string()),
    };
    for c in &manifest.asserted {
        println!("{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
    }
    for c in &manifest.report_only {
        println!("{} {} (report only): {}", if c.passed { "ok  " } else { "note" }, c.name, c.detail);
    }
    if let Some(f) = &manifest.failure {
        eprintln!("{}", serde_json::to_string(f).expect("record serializes"));
    }
    manifest.exit_code()
}

/// Reads `MSSP_ECON_WORKERS` and sizes the global thread pool.
pub fn configure_workers() -> Result<(), String> {
    let Ok(raw) = std::env::var("MSSP_ECON_WORKERS") else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| format!("MSSP_ECON_WORKERS must be a positive integer, got {raw:?}"))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| e.to_string())
}
