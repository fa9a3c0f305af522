//! Execute a schedule on a model it was not optimized for, clipping each
//! interval to what the model can actually do.

use serde::{Deserialize, Serialize};

use crate::ecm::{ecm_advance, ecm_step, record_ecm_step, EcmParams, EcmState};
use crate::erm::{erm_available_charge_power, erm_step, record_erm_step, ErmParams, ErmState};
use crate::error::{Error, Result, Violation, ViolationKind};
use crate::grid::{CurrentSchedule, PowerSchedule, SECONDS_PER_HOUR, WATTS_PER_MEGAWATT};
use crate::spm::{record_spm_step, spm_advance, spm_step, SpmParams, SpmState};
use crate::trace::{StateSnapshot, Trace};

use super::{check_problem, Breakdown, Model, Objective, Schedule};

const BISECTION_STEPS: usize = 60;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ViolationRecord {
    pub step: usize,
    pub violation: Violation,
    pub magnitude: f64,
}

impl ViolationRecord {
    fn new(step: usize, violation: Violation) -> Self {
        Self {
            step,
            violation,
            magnitude: violation.magnitude(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplayReport {
    pub model: String,
    /// One record per interval whose request had to be changed.
    pub violations: Vec<ViolationRecord>,
    /// What was actually applied, in the model's own control space.
    pub executed: Schedule,
    pub trace: Trace,
    pub realized: Breakdown,
    pub realized_value: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub claimed_value: Option<f64>,
    /// `claimed − realized`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gap: Option<f64>,
}

/// Replays `schedule` on `model`. Power schedules are converted to cell
/// current interval by interval; infeasible requests are scaled back to
/// the largest feasible fraction and logged.
pub fn replay(
    schedule: &Schedule,
    model: &Model,
    objective: &Objective,
    claimed_value: Option<f64>,
) -> Result<ReplayReport> {
    let grid = schedule.grid();
    check_problem(model, objective, grid)?;
    let (executed, trace, violations) = match model {
        Model::Erm { params, init } => {
            let Schedule::Power(p) = schedule else {
                return Err(Error::Validation(
                    "the reservoir model replays power schedules only".into(),
                ));
            };
            replay_erm(p, init, params)?
        }
        Model::Ecm { params, init } => {
            let mut cell = EcmCell { params, state: *init };
            let mut trace = Trace::new(grid, init.snapshot(), init.fraction(params));
            let (current, violations) = replay_current(&mut cell, schedule, &mut trace, grid.tau_s)?;
            (Schedule::Current(CurrentSchedule::new(grid, current)?), trace, violations)
        }
        Model::Spm { params, init, degrade } => {
            let mut cell = SpmCell {
                params,
                state: init.clone(),
                degrade: *degrade,
            };
            let mut trace = Trace::new(
                grid,
                init.snapshot(params),
                crate::spm::spm_soc(init, params) / params.q_rated_ah,
            );
            let (current, violations) = replay_current(&mut cell, schedule, &mut trace, grid.tau_s)?;
            (Schedule::Current(CurrentSchedule::new(grid, current)?), trace, violations)
        }
    };
    let realized = objective.evaluate_trace(&trace)?;
    Ok(ReplayReport {
        model: model.name().to_string(),
        violations,
        executed,
        realized_value: realized.value,
        realized,
        trace,
        claimed_value,
        gap: claimed_value.map(|c| c - realized.value),
    })
}

fn replay_erm(
    schedule: &PowerSchedule,
    init: &ErmState,
    params: &ErmParams,
) -> Result<(Schedule, Trace, Vec<ViolationRecord>)> {
    let grid = schedule.grid;
    let tau_h = grid.tau_s / SECONDS_PER_HOUR;
    let mut trace = Trace::new(grid, StateSnapshot::Erm { soe_mwh: init.soe_mwh }, init.fraction(params));
    let mut state = *init;
    let (mut ch_out, mut dis_out) = (Vec::new(), Vec::new());
    let mut violations = Vec::new();
    for k in 0..grid.steps {
        let (mut ch, mut dis) = (schedule.ch[k], schedule.dis[k]);
        let next = match erm_step(&state, ch, dis, params, grid.tau_s) {
            Ok(s) => s,
            Err(e) => {
                let v = e.violation().ok_or(e)?;
                violations.push(ViolationRecord::new(k, v));
                let room = (params.e_max_mwh - state.soe_mwh).max(0.0);
                ch = ch.min(erm_available_charge_power(&state, params));
                dis = dis.min(params.p_dis_max_mw);
                let net_in = params.eta_ch * ch - dis / params.eta_dis;
                if net_in * tau_h > room {
                    // Only the charge side can overfill.
                    ch = (room / tau_h + dis / params.eta_dis) / params.eta_ch;
                } else if -net_in * tau_h > state.soe_mwh {
                    dis = (state.soe_mwh / tau_h + params.eta_ch * ch) * params.eta_dis;
                }
                erm_step(&state, ch, dis, params, grid.tau_s)?
            }
        };
        state = next;
        record_erm_step(&mut trace, &state, ch, dis, params);
        ch_out.push(ch);
        dis_out.push(dis);
    }
    let executed = Schedule::Power(PowerSchedule::new(grid, ch_out, dis_out)?);
    Ok((executed, trace, violations))
}

/// A current-driven cell that can be stepped with or without bound checks.
trait CurrentCell {
    fn limits(&self) -> (f64, f64);
    fn n_cells(&self) -> f64;
    /// Checked step: returns the voltage and commits nothing.
    fn try_step(&self, current: f64, tau_s: f64) -> Result<f64>;
    /// Voltage with no bounds enforced, if the model can produce one.
    fn loose_voltage(&self, current: f64, tau_s: f64) -> Option<f64>;
    fn commit(&mut self, current: f64, tau_s: f64, trace: &mut Trace) -> Result<()>;
    fn commit_unchecked(&mut self, current: f64, tau_s: f64, trace: &mut Trace) -> Result<()>;
}

struct EcmCell<'a> {
    params: &'a EcmParams,
    state: EcmState,
}

impl CurrentCell for EcmCell<'_> {
    fn limits(&self) -> (f64, f64) {
        (self.params.i_max_ch_a, self.params.i_max_dis_a)
    }
    fn n_cells(&self) -> f64 {
        self.params.n_cells as f64
    }
    fn try_step(&self, current: f64, tau_s: f64) -> Result<f64> {
        ecm_step(&self.state, current, self.params, tau_s).map(|(_, v)| v)
    }
    fn loose_voltage(&self, current: f64, tau_s: f64) -> Option<f64> {
        Some(ecm_advance(&self.state, current, self.params, tau_s).1)
    }
    fn commit(&mut self, current: f64, tau_s: f64, trace: &mut Trace) -> Result<()> {
        let (next, v) = ecm_step(&self.state, current, self.params, tau_s)?;
        self.state = next;
        record_ecm_step(trace, &self.state, current, v, self.params);
        Ok(())
    }
    fn commit_unchecked(&mut self, current: f64, tau_s: f64, trace: &mut Trace) -> Result<()> {
        let (next, v) = ecm_advance(&self.state, current, self.params, tau_s);
        self.state = next;
        record_ecm_step(trace, &self.state, current, v, self.params);
        Ok(())
    }
}

struct SpmCell<'a> {
    params: &'a SpmParams,
    state: SpmState,
    degrade: bool,
}

impl CurrentCell for SpmCell<'_> {
    fn limits(&self) -> (f64, f64) {
        (self.params.i_max_ch_a, self.params.i_max_dis_a)
    }
    fn n_cells(&self) -> f64 {
        self.params.n_cells as f64
    }
    fn try_step(&self, current: f64, tau_s: f64) -> Result<f64> {
        spm_step(&self.state, current, self.params, tau_s, self.degrade).map(|(_, v, _)| v)
    }
    fn loose_voltage(&self, current: f64, tau_s: f64) -> Option<f64> {
        spm_advance(&self.state, current, self.params, tau_s, self.degrade)
            .ok()
            .map(|a| a.voltage)
    }
    fn commit(&mut self, current: f64, tau_s: f64, trace: &mut Trace) -> Result<()> {
        let (next, v, _) = spm_step(&self.state, current, self.params, tau_s, self.degrade)?;
        self.state = next;
        record_spm_step(trace, &self.state, current, v, self.params, self.degrade);
        Ok(())
    }
    fn commit_unchecked(&mut self, current: f64, tau_s: f64, trace: &mut Trace) -> Result<()> {
        let adv = spm_advance(&self.state, current, self.params, tau_s, self.degrade)?;
        self.state = adv.state;
        record_spm_step(trace, &self.state, current, adv.voltage, self.params, self.degrade);
        Ok(())
    }
}

/// Current that draws pack power `target_mw`, or the bound in its
/// direction when the model cannot reach it.
fn current_for_power(cell: &dyn CurrentCell, target_mw: f64, tau_s: f64) -> (f64, bool) {
    if target_mw == 0.0 {
        return (0.0, true);
    }
    let (i_ch, i_dis) = cell.limits();
    let bound = if target_mw > 0.0 { i_dis } else { -i_ch };
    let power = |i: f64| cell.loose_voltage(i, tau_s).map(|v| cell.n_cells() * i * v / WATTS_PER_MEGAWATT);
    // Work with the magnitude so both directions are increasing.
    let reach = |i: f64| power(i).map(|p| p * target_mw.signum());
    let goal = target_mw.abs();
    // Currents where the model has no voltage count as overshooting.
    let (mut lo, mut hi) = (0.0, bound);
    for _ in 0..BISECTION_STEPS {
        let mid = 0.5 * (lo + hi);
        match reach(mid) {
            Some(p) if p < goal => lo = mid,
            _ => hi = mid,
        }
    }
    match reach(hi) {
        Some(p) if (p - goal).abs() <= 1e-9 * goal => (hi, true),
        _ => (lo, false),
    }
}

fn replay_current(
    cell: &mut dyn CurrentCell,
    schedule: &Schedule,
    trace: &mut Trace,
    tau_s: f64,
) -> Result<(Vec<f64>, Vec<ViolationRecord>)> {
    let mut applied = Vec::new();
    let mut violations = Vec::new();
    let requests = schedule.net();
    for (k, &request) in requests.iter().enumerate() {
        let mut first: Option<Violation> = None;
        let wanted = match schedule {
            Schedule::Current(_) => request,
            Schedule::Power(_) => {
                let (i, reached) = current_for_power(cell, request, tau_s);
                if !reached {
                    first = Some(Violation::new(ViolationKind::PowerUnattainable, request, 0.0));
                }
                i
            }
        };
        let current = match cell.try_step(wanted, tau_s) {
            Ok(_) => wanted,
            Err(e) => {
                first.get_or_insert(e.violation().unwrap_or_else(|| match e.innermost() {
                    Error::Saturation(side) => Violation::new(ViolationKind::Saturation(*side), wanted, 0.0),
                    _ => Violation::new(ViolationKind::PowerUnattainable, wanted, 0.0),
                }));
                let (mut lo, mut hi) = (0.0, 1.0);
                if cell.try_step(0.0, tau_s).is_err() {
                    hi = 0.0;
                }
                for _ in 0..BISECTION_STEPS {
                    if hi == 0.0 {
                        break;
                    }
                    let mid = 0.5 * (lo + hi);
                    if cell.try_step(mid * wanted, tau_s).is_ok() {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                lo * wanted
            }
        };
        if let Some(v) = first {
            violations.push(ViolationRecord::new(k, v));
        }
        if cell.try_step(current, tau_s).is_ok() {
            cell.commit(current, tau_s, trace)?;
        } else {
            cell.commit_unchecked(current, tau_s, trace).map_err(|e| e.at_step(k))?;
        }
        applied.push(current);
    }
    Ok((applied, violations))
}
