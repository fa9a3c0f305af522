//! Schedule optimization over any of the three cell models, plus replay of
//! a schedule on a model other than the one it was optimized for.

mod brute;
mod dp;
pub mod gradient;
mod objective;
mod replay;

use serde::{Deserialize, Serialize};

use crate::ecm::{ecm_simulate, ecm_step, EcmParams, EcmState};
use crate::erm::{erm_simulate, erm_step, ErmParams, ErmState};
use crate::error::{Error, Result};
use crate::grid::{CurrentSchedule, PowerSchedule, TimeGrid, WATTS_PER_MEGAWATT};
use crate::spm::{spm_simulate, spm_soc, spm_step, SpmParams, SpmState};
use crate::trace::Trace;

pub use brute::{brute_force, DEFAULT_BRUTE_FORCE_CAP};
pub use dp::{dp_solve, DpConfig, ErmGrid};
pub use gradient::{gradient_solve, GradientMethod, PenaltyConfig, PenaltyProblem};
pub use objective::{
    ArbitrageObjective, Breakdown, DegradationPricing, Objective, PeakShavingObjective, Terminal, TERMINAL_TOL,
};
pub use replay::{replay, ReplayReport, ViolationRecord};

pub(crate) use objective::Signals;

/// A cell model with its parameters and starting state.
#[derive(Debug, Clone, PartialEq)]
#[allow(clippy::large_enum_variant)]
pub enum Model {
    Erm { params: ErmParams, init: ErmState },
    Ecm { params: EcmParams, init: EcmState },
    Spm { params: SpmParams, init: SpmState, degrade: bool },
}

/// A schedule in one of the two native control spaces.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Schedule {
    /// Grid-side charge/discharge power (MW).
    Power(PowerSchedule),
    /// Cell current (A, positive = discharge).
    Current(CurrentSchedule),
}

impl Schedule {
    pub fn grid(&self) -> TimeGrid {
        match self {
            Schedule::Power(p) => p.grid,
            Schedule::Current(c) => c.grid,
        }
    }

    /// Net control per interval: MW for power schedules, A for current.
    pub fn net(&self) -> Vec<f64> {
        match self {
            Schedule::Power(p) => p.net(),
            Schedule::Current(c) => c.current.clone(),
        }
    }
}

/// Model state carried by the search routines.
#[derive(Debug, Clone, PartialEq)]
pub(crate) enum CellState {
    Erm(ErmState),
    Ecm(EcmState),
    Spm(SpmState),
}

/// Outcome of applying one control level for one interval.
#[derive(Debug, Clone)]
pub(crate) struct LevelStep {
    pub state: CellState,
    pub pack_mw: f64,
    pub moved_mw: f64,
    pub soc: f64,
    pub capacity_loss: Option<f64>,
}

impl Model {
    pub fn name(&self) -> &'static str {
        match self {
            Model::Erm { .. } => "erm",
            Model::Ecm { .. } => "ecm",
            Model::Spm { .. } => "spm",
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Model::Erm { params, .. } => params.validate(),
            Model::Ecm { params, .. } => params.validate(),
            Model::Spm { params, degrade, .. } => {
                params.validate()?;
                if *degrade && params.sei.is_none() {
                    return Err(Error::Config("SEI degradation needs SEI parameters".into()));
                }
                Ok(())
            }
        }
    }

    /// Whether `schedule` is in this model's native control space.
    pub fn accepts(&self, schedule: &Schedule) -> bool {
        matches!(
            (self, schedule),
            (Model::Erm { .. }, Schedule::Power(_)) | (Model::Ecm { .. } | Model::Spm { .. }, Schedule::Current(_))
        )
    }

    pub fn zero_schedule(&self, grid: TimeGrid) -> Schedule {
        match self {
            Model::Erm { .. } => Schedule::Power(PowerSchedule::zeros(grid)),
            _ => Schedule::Current(CurrentSchedule::zeros(grid)),
        }
    }

    /// Builds a native schedule from net control values.
    pub fn schedule_from_net(&self, grid: TimeGrid, net: &[f64]) -> Result<Schedule> {
        Ok(match self {
            Model::Erm { .. } => Schedule::Power(PowerSchedule::from_net(grid, net)?),
            _ => Schedule::Current(CurrentSchedule::new(grid, net.to_vec())?),
        })
    }

    pub fn simulate(&self, schedule: &Schedule) -> Result<Trace> {
        match (self, schedule) {
            (Model::Erm { params, init }, Schedule::Power(s)) => erm_simulate(s, init, params),
            (Model::Ecm { params, init }, Schedule::Current(s)) => ecm_simulate(s, init, params),
            (Model::Spm { params, init, degrade }, Schedule::Current(s)) => spm_simulate(s, init, params, *degrade),
            _ => Err(Error::Validation(format!(
                "{} model cannot run this schedule directly; use replay",
                self.name()
            ))),
        }
    }

    pub(crate) fn initial_state(&self) -> CellState {
        match self {
            Model::Erm { init, .. } => CellState::Erm(*init),
            Model::Ecm { init, .. } => CellState::Ecm(*init),
            Model::Spm { init, .. } => CellState::Spm(init.clone()),
        }
    }

    pub(crate) fn soc_of(&self, state: &CellState) -> f64 {
        match (self, state) {
            (Model::Erm { params, .. }, CellState::Erm(s)) => s.fraction(params),
            (Model::Ecm { params, .. }, CellState::Ecm(s)) => s.fraction(params),
            (Model::Spm { params, .. }, CellState::Spm(s)) => spm_soc(s, params) / params.q_rated_ah,
            _ => unreachable!("state does not belong to model"),
        }
    }

    /// Applies net control `level` (MW for the reservoir, A otherwise).
    pub(crate) fn step_level(&self, state: &CellState, level: f64, tau_s: f64) -> Result<LevelStep> {
        match (self, state) {
            (Model::Erm { params, .. }, CellState::Erm(s)) => {
                let (ch, dis) = (level.min(0.0).abs(), level.max(0.0));
                let next = erm_step(s, ch, dis, params, tau_s)?;
                Ok(LevelStep {
                    soc: next.fraction(params),
                    state: CellState::Erm(next),
                    pack_mw: dis - ch,
                    moved_mw: ch + dis,
                    capacity_loss: None,
                })
            }
            (Model::Ecm { params, .. }, CellState::Ecm(s)) => {
                let (next, v) = ecm_step(s, level, params, tau_s)?;
                let pack_mw = params.n_cells as f64 * level * v / WATTS_PER_MEGAWATT;
                Ok(LevelStep {
                    soc: next.fraction(params),
                    state: CellState::Ecm(next),
                    pack_mw,
                    moved_mw: pack_mw.abs(),
                    capacity_loss: None,
                })
            }
            (Model::Spm { params, degrade, .. }, CellState::Spm(s)) => {
                let (next, v, _) = spm_step(s, level, params, tau_s, *degrade)?;
                let pack_mw = params.n_cells as f64 * level * v / WATTS_PER_MEGAWATT;
                Ok(LevelStep {
                    soc: spm_soc(&next, params) / params.q_rated_ah,
                    capacity_loss: degrade.then_some(next.ledger.capacity_loss),
                    state: CellState::Spm(next),
                    pack_mw,
                    moved_mw: pack_mw.abs(),
                })
            }
            _ => unreachable!("state does not belong to model"),
        }
    }
}

/// Value of running `schedule` on `model`; fails with the violation if the
/// schedule is infeasible.
pub fn evaluate(model: &Model, schedule: &Schedule, objective: &Objective) -> Result<f64> {
    Ok(evaluate_breakdown(model, schedule, objective)?.0.value)
}

pub fn evaluate_breakdown(model: &Model, schedule: &Schedule, objective: &Objective) -> Result<(Breakdown, Trace)> {
    check_problem(model, objective, schedule.grid())?;
    let trace = model.simulate(schedule)?;
    Ok((objective.evaluate_trace(&trace)?, trace))
}

pub(crate) fn check_problem(model: &Model, objective: &Objective, grid: TimeGrid) -> Result<()> {
    model.validate()?;
    objective.validate(grid.steps)?;
    if objective.prices().grid.tau_s != grid.tau_s {
        return Err(Error::Validation("price and schedule step lengths differ".into()));
    }
    let sei_priced = objective.pricing() == DegradationPricing::Sei;
    if sei_priced && !matches!(model, Model::Spm { degrade: true, .. }) {
        return Err(Error::Config(
            "SEI degradation pricing needs the particle model with degradation enabled".into(),
        ));
    }
    Ok(())
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub solver: String,
    pub iterations: usize,
    pub evaluations: usize,
    pub grid_sizes: Vec<usize>,
    pub converged: bool,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub schedule: Schedule,
    pub value: f64,
    pub breakdown: Breakdown,
    /// The schedule replays without violation on the model it was solved for.
    pub certified: bool,
    pub diagnostics: Diagnostics,
    pub trace: Trace,
}

impl SolveReport {
    pub(crate) fn certify(
        model: &Model,
        objective: &Objective,
        schedule: Schedule,
        diagnostics: Diagnostics,
    ) -> Result<Self> {
        let (breakdown, trace) = evaluate_breakdown(model, &schedule, objective)?;
        if !objective.terminal_ok(&trace.soc_profile()) {
            return Err(Error::SolverFailure("returned schedule misses the terminal SoC".into()));
        }
        Ok(Self {
            schedule,
            value: breakdown.value,
            breakdown,
            certified: true,
            diagnostics,
            trace,
        })
    }
}
