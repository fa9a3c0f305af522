//! The five subcommands.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context};
use battsched_core::degradation::{cycle_fade, rainflow_cycles};
use battsched_core::grid::PriceSeries;
use battsched_core::optimizer::{
    brute_force, dp_solve, evaluate_breakdown, gradient_solve, replay, Breakdown, Diagnostics, DpConfig, Model,
    Objective, PenaltyProblem, ReplayReport, Schedule, SolveReport, ViolationRecord,
};
use battsched_core::presets::ParamSet;
use battsched_core::trace::{StateSnapshot, Trace};
use log::{info, warn};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::config::{DegradationMethod, ModelKind, ObjectiveConfig, RunConfig, SolverMethod};
use crate::ingest::{ingest_load, ingest_prices, ingest_schedule};
use crate::output::{sha256_hex, write_json, write_trace_file};
use crate::CliError;

/// Everything a run needs, read and validated.
pub struct Inputs {
    pub cfg: RunConfig,
    pub config_hash: String,
    pub input_hashes: BTreeMap<String, String>,
    pub params: ParamSet,
    pub prices: PriceSeries,
    pub load: Option<Vec<f64>>,
}

fn hash_file(path: &Path) -> anyhow::Result<String> {
    let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(sha256_hex(&bytes))
}

pub fn read_params(path: &Path) -> anyhow::Result<ParamSet> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    ParamSet::from_json(&text).with_context(|| format!("parameters {}", path.display()))
}

impl Inputs {
    pub fn load(config_path: &Path) -> anyhow::Result<Self> {
        let bytes = std::fs::read(config_path).with_context(|| format!("reading {}", config_path.display()))?;
        let text = String::from_utf8(bytes.clone()).context("config is not UTF-8")?;
        let base = config_path.parent().unwrap_or(Path::new("."));
        let cfg = RunConfig::from_json(&text, base).with_context(|| format!("config {}", config_path.display()))?;
        let params = read_params(&cfg.params)?;
        let prices = ingest_prices(&cfg.prices)?;
        let load = cfg.load.as_deref().map(|p| ingest_load(p, &prices.grid)).transpose()?;
        let mut input_hashes = BTreeMap::new();
        input_hashes.insert("params".to_string(), hash_file(&cfg.params)?);
        input_hashes.insert("prices".to_string(), hash_file(&cfg.prices)?);
        if let Some(p) = &cfg.load {
            input_hashes.insert("load".to_string(), hash_file(p)?);
        }
        Ok(Self {
            config_hash: sha256_hex(&bytes),
            cfg,
            input_hashes,
            params,
            prices,
            load,
        })
    }

    pub fn model(&self, kind: ModelKind) -> anyhow::Result<Model> {
        self.cfg.build_model(kind, &self.params)
    }

    pub fn objective(&self) -> anyhow::Result<Objective> {
        self.cfg.build_objective(self.prices.clone(), self.load.clone(), &self.params)
    }

    fn schedule(&self, flag: Option<&Path>) -> anyhow::Result<Schedule> {
        let path = flag
            .or(self.cfg.schedule.as_deref())
            .ok_or_else(|| anyhow!("no schedule given; pass --schedule or set `schedule` in the config"))?;
        info!("schedule {} sha256 {}", path.display(), hash_file(path)?);
        ingest_schedule(path, self.prices.grid)
    }
}

/// Degradation accounting of a trace under every quantification that
/// applies to it.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Ledger {
    pub throughput_mwh: f64,
    pub throughput_fade: f64,
    pub rainflow_fade: f64,
    pub rainflow_cycles: usize,
    /// Film-growth capacity loss (particle model with SEI).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sei_capacity_loss: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sei_thickness_m: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub film_resistance_ohm: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lithium_loss_mol: Option<f64>,
}

impl Ledger {
    pub fn of(trace: &Trace, params: &ParamSet) -> Self {
        let deg = &params.degradation;
        let cycles = rainflow_cycles(&trace.soc_profile());
        let last = trace.last();
        let (loss, sei, film, li) = match last.state {
            StateSnapshot::Spm {
                sei_thickness_m,
                film_resistance_ohm,
                lithium_loss_mol,
                ..
            } => (
                Some(last.capacity_loss),
                Some(sei_thickness_m),
                Some(film_resistance_ohm),
                Some(lithium_loss_mol),
            ),
            _ => (None, None, None, None),
        };
        Self {
            throughput_mwh: trace.total_throughput_mwh(),
            throughput_fade: deg.throughput.fade(trace.total_throughput_mwh()).loss,
            rainflow_fade: cycle_fade(&cycles, &deg.stress),
            rainflow_cycles: cycles.len(),
            sei_capacity_loss: loss,
            sei_thickness_m: sei,
            film_resistance_ohm: film,
            lithium_loss_mol: li,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GradientCheck {
    pub seed: u64,
    pub samples: usize,
    /// Largest component-wise relative gap between adjoint and central
    /// finite-difference gradients.
    pub max_rel_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunReport {
    pub command: &'static str,
    pub timestamp: String,
    pub config_hash: String,
    pub inputs: BTreeMap<String, String>,
    pub model: &'static str,
    pub objective: &'static str,
    pub degradation: DegradationMethod,
    pub degradation_weight: f64,
    pub value: f64,
    pub breakdown: Breakdown,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub certified: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub diagnostics: Option<Diagnostics>,
    pub ledger: Ledger,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gradient_check: Option<GradientCheck>,
}

fn now() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true)
}

impl RunReport {
    fn new(command: &'static str, inputs: &Inputs, model: &Model, breakdown: Breakdown, trace: &Trace) -> Self {
        Self {
            command,
            timestamp: now(),
            config_hash: inputs.config_hash.clone(),
            inputs: inputs.input_hashes.clone(),
            model: model.name(),
            objective: match inputs.cfg.objective {
                ObjectiveConfig::Arbitrage { .. } => "arbitrage",
                ObjectiveConfig::PeakShaving { .. } => "peak_shaving",
            },
            degradation: inputs.cfg.degradation.method,
            degradation_weight: inputs.cfg.degradation.weight,
            value: breakdown.value,
            breakdown,
            certified: None,
            diagnostics: None,
            ledger: Ledger::of(trace, &inputs.params),
            gradient_check: None,
        }
    }
}

fn core_err(e: battsched_core::Error) -> CliError {
    use battsched_core::Error as E;
    match e.innermost() {
        E::SolverFailure(_) | E::Numerical(_) => CliError::Solver(e.into()),
        _ => CliError::Input(e.into()),
    }
}

fn ensure_dir(out: &Path) -> anyhow::Result<()> {
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))
}

pub fn solve_report(inputs: &Inputs, model: &Model, objective: &Objective) -> Result<SolveReport, CliError> {
    let cfg = &inputs.cfg;
    let grid = inputs.prices.grid;
    let levels = cfg.levels(cfg.model, &inputs.params);
    let method = cfg.solver_method();
    info!("solving {} with {:?}", model.name(), method);
    let report = match method {
        SolverMethod::Dp => {
            let dp = DpConfig {
                levels,
                ..cfg.solver.dp.clone()
            };
            dp_solve(model, objective, grid, &dp)
        }
        SolverMethod::BruteForce => brute_force(model, objective, &levels, grid, cfg.solver.brute_force_cap),
        SolverMethod::Gradient => gradient_solve(model, objective, grid, &cfg.solver.gradient),
    }
    .map_err(core_err)?;
    if !report.certified {
        return Err(CliError::Solver(anyhow!("solver returned a schedule that is not certified feasible")));
    }
    Ok(report)
}

/// Central-difference step for the gradient cross-check (A).
const GRADIENT_CHECK_STEP_A: f64 = 1e-6;

fn gradient_check(inputs: &Inputs, model: &Model, objective: &Objective, seed: u64) -> Option<GradientCheck> {
    let Model::Spm { params, .. } = model else {
        return None;
    };
    let samples = inputs.cfg.solver.gradient_check_samples;
    if samples == 0 {
        return None;
    }
    let problem = PenaltyProblem::new(model, objective, inputs.prices.grid, &inputs.cfg.solver.gradient).ok()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let amp = 0.1 * params.i_max_ch_a.min(params.i_max_dis_a);
    let mut worst: f64 = 0.0;
    for _ in 0..samples {
        let u: Vec<f64> = (0..problem.steps()).map(|_| rng.gen_range(-amp..=amp)).collect();
        let adj = match problem.gradient_adjoint(&u) {
            Ok(g) => g,
            Err(e) => {
                warn!("gradient check skipped: {e}");
                return None;
            }
        };
        let fd = problem.gradient_fd_central(&u, GRADIENT_CHECK_STEP_A);
        let scale = fd.iter().fold(0.0f64, |m, g| m.max(g.abs()));
        for (a, f) in adj.iter().zip(&fd) {
            let denom = a.abs().max(f.abs()).max(1e-3 * scale).max(f64::MIN_POSITIVE);
            worst = worst.max((a - f).abs() / denom);
        }
    }
    Some(GradientCheck {
        seed,
        samples,
        max_rel_error: worst,
    })
}

pub fn solve(inputs: &Inputs, out: &Path, seed: u64) -> Result<RunReport, CliError> {
    let model = inputs.model(inputs.cfg.model)?;
    let objective = inputs.objective()?;
    let r = solve_report(inputs, &model, &objective)?;
    let mut report = RunReport::new("solve", inputs, &model, r.breakdown, &r.trace);
    report.certified = Some(r.certified);
    report.diagnostics = Some(r.diagnostics.clone());
    report.gradient_check = gradient_check(inputs, &model, &objective, seed);
    ensure_dir(out)?;
    write_json(&out.join("report.json"), &report)?;
    write_trace_file(&out.join("trace.csv"), &r.trace, &inputs.prices)?;
    Ok(report)
}

pub fn simulate(inputs: &Inputs, out: &Path, schedule: Option<&Path>) -> Result<RunReport, CliError> {
    let model = inputs.model(inputs.cfg.model)?;
    let objective = inputs.objective()?;
    let schedule = inputs.schedule(schedule)?;
    if !model.accepts(&schedule) {
        return Err(CliError::Input(anyhow!(
            "the {} model does not take this kind of schedule directly; use `replay`",
            model.name()
        )));
    }
    let (breakdown, trace) = evaluate_breakdown(&model, &schedule, &objective).map_err(core_err)?;
    let report = RunReport::new("simulate", inputs, &model, breakdown, &trace);
    ensure_dir(out)?;
    write_json(&out.join("report.json"), &report)?;
    write_trace_file(&out.join("trace.csv"), &trace, &inputs.prices)?;
    Ok(report)
}

/// A replay outcome without its trace, for the JSON reports.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReplaySummary {
    pub model: String,
    pub realized_value: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub claimed_value: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gap: Option<f64>,
    pub realized: Breakdown,
    pub violations: Vec<ViolationRecord>,
    pub ledger: Ledger,
}

impl ReplaySummary {
    fn of(r: &ReplayReport, params: &ParamSet) -> Self {
        Self {
            model: r.model.clone(),
            realized_value: r.realized_value,
            claimed_value: r.claimed_value,
            gap: r.gap,
            realized: r.realized,
            violations: r.violations.clone(),
            ledger: Ledger::of(&r.trace, params),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReplayFile {
    pub command: &'static str,
    pub timestamp: String,
    pub config_hash: String,
    pub inputs: BTreeMap<String, String>,
    #[serde(flatten)]
    pub replay: ReplaySummary,
}

pub fn replay_cmd(
    inputs: &Inputs,
    out: &Path,
    schedule: Option<&Path>,
    model: Option<ModelKind>,
    claimed: Option<f64>,
) -> Result<ReplayFile, CliError> {
    let kind = model.unwrap_or(inputs.cfg.model);
    let model = inputs.model(kind)?;
    let objective = inputs.objective()?;
    let schedule = inputs.schedule(schedule)?;
    let r = replay(&schedule, &model, &objective, claimed).map_err(core_err)?;
    let file = ReplayFile {
        command: "replay",
        timestamp: now(),
        config_hash: inputs.config_hash.clone(),
        inputs: inputs.input_hashes.clone(),
        replay: ReplaySummary::of(&r, &inputs.params),
    };
    ensure_dir(out)?;
    write_json(&out.join("replay.json"), &file)?;
    write_trace_file(&out.join("trace.csv"), &r.trace, &inputs.prices)?;
    Ok(file)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CompareFile {
    pub command: &'static str,
    pub timestamp: String,
    pub config_hash: String,
    pub inputs: BTreeMap<String, String>,
    pub solved_on: &'static str,
    pub claimed_value: f64,
    pub replays: Vec<ReplaySummary>,
}

pub fn compare(inputs: &Inputs, out: &Path, seed: u64) -> Result<CompareFile, CliError> {
    let report = solve(inputs, out, seed)?;
    let model = inputs.model(inputs.cfg.model)?;
    let objective = inputs.objective()?;
    let schedule = inputs_schedule_from_trace(out, inputs)?;
    let targets: Vec<(ModelKind, Model)> = inputs
        .cfg
        .compare
        .models
        .iter()
        .map(|&k| inputs.model(k).map(|m| (k, m)))
        .collect::<anyhow::Result<_>>()?;
    let results: Vec<Result<ReplayReport, battsched_core::Error>> = std::thread::scope(|s| {
        let handles: Vec<_> = targets
            .iter()
            .map(|(_, m)| s.spawn(|| replay(&schedule, m, &objective, Some(report.value))))
            .collect();
        handles.into_iter().map(|h| h.join().expect("replay thread panicked")).collect()
    });
    let mut replays = Vec::new();
    for ((kind, _), r) in targets.iter().zip(results) {
        let r = r.map_err(core_err)?;
        write_trace_file(&out.join(format!("trace_{}.csv", kind.name())), &r.trace, &inputs.prices)?;
        replays.push(ReplaySummary::of(&r, &inputs.params));
    }
    let file = CompareFile {
        command: "compare",
        timestamp: now(),
        config_hash: inputs.config_hash.clone(),
        inputs: inputs.input_hashes.clone(),
        solved_on: model.name(),
        claimed_value: report.value,
        replays,
    };
    write_json(&out.join("compare.json"), &file)?;
    Ok(file)
}

/// The schedule just written by `solve`, read back from its trace so the
/// replays run exactly what was reported.
fn inputs_schedule_from_trace(out: &Path, inputs: &Inputs) -> Result<Schedule, CliError> {
    Ok(ingest_schedule(&out.join("trace.csv"), inputs.prices.grid)?)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ParamSummary {
    pub path: PathBuf,
    pub sha256: String,
    pub erm_energy_mwh: f64,
    pub ecm_nominal_energy_mwh: f64,
    pub spm_rated_ah: f64,
    pub spm_shells: usize,
    pub sei: bool,
}

pub fn validate_params(path: &Path) -> Result<ParamSummary, CliError> {
    let p = read_params(path)?;
    let ocv_mid = p.ecm.ocv.points().iter().map(|&(_, v)| v).sum::<f64>() / p.ecm.ocv.points().len() as f64;
    Ok(ParamSummary {
        path: path.to_path_buf(),
        sha256: hash_file(path)?,
        erm_energy_mwh: p.erm.e_max_mwh,
        ecm_nominal_energy_mwh: p.ecm.n_cells as f64 * p.ecm.q_max_ah * ocv_mid / 1e6,
        spm_rated_ah: p.spm.q_rated_ah,
        spm_shells: p.spm.n_shells,
        sei: p.spm.sei.is_some(),
    })
}
