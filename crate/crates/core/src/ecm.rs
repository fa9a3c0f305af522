//! Equivalent-circuit (voltage-current) cell model: an SoC-dependent voltage
//! source, a series resistance and one parallel RC diffusion branch.

use serde::{Deserialize, Serialize};

use crate::erm::BOUND_RTOL;
use crate::error::{Error, Result, Violation, ViolationKind};
use crate::grid::{pack_power, CurrentSchedule, SECONDS_PER_HOUR, WATTS_PER_MEGAWATT};
use crate::interp::PiecewiseLinear;
use crate::trace::{AppliedControl, StateSnapshot, Trace};

/// Synthetic NMC-like open-circuit voltage table, 21 points at 5 % SoC
/// spacing. Not fitted to any commercial cell.
const SYNTHETIC_NMC_OCV: [f64; 21] = [
    3.00, 3.30, 3.42, 3.50, 3.55, 3.58, 3.61, 3.63, 3.65, 3.67, 3.70, 3.73, 3.77, 3.81, 3.85,
    3.89, 3.94, 3.99, 4.05, 4.12, 4.20,
];

/// Open-circuit voltage as a function of SoC fraction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PiecewiseLinear", into = "PiecewiseLinear")]
pub struct OcvCurve(PiecewiseLinear);

impl OcvCurve {
    pub fn new(points: Vec<(f64, f64)>) -> Result<Self> {
        Self::try_from(PiecewiseLinear::new(points)?)
    }

    pub fn synthetic_nmc() -> Self {
        let points = SYNTHETIC_NMC_OCV
            .iter()
            .enumerate()
            .map(|(k, &v)| (k as f64 / 20.0, v))
            .collect();
        Self::new(points).expect("built-in OCV table is valid")
    }

    pub fn points(&self) -> &[(f64, f64)] {
        self.0.points()
    }

    pub(crate) fn eval_clamped(&self, soc_fraction: f64) -> f64 {
        self.0.eval(soc_fraction.clamp(0.0, 1.0))
    }
}

impl TryFrom<PiecewiseLinear> for OcvCurve {
    type Error = Error;
    fn try_from(curve: PiecewiseLinear) -> Result<Self> {
        if curve.domain() != (0.0, 1.0) {
            return Err(Error::Validation(
                "OCV curve must cover SoC fractions 0 and 1 exactly".into(),
            ));
        }
        if !curve.is_nondecreasing() {
            return Err(Error::Validation("OCV must be nondecreasing in SoC".into()));
        }
        Ok(Self(curve))
    }
}

impl From<OcvCurve> for PiecewiseLinear {
    fn from(c: OcvCurve) -> Self {
        c.0
    }
}

pub fn ocv_eval(curve: &OcvCurve, soc_fraction: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&soc_fraction) {
        return Err(Error::Validation(format!(
            "SoC fraction {soc_fraction} outside [0, 1]"
        )));
    }
    Ok(curve.0.eval(soc_fraction))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EcmParams {
    pub r0_ohm: f64,
    pub rd_ohm: f64,
    pub cd_farad: f64,
    pub eta_c: f64,
    pub q_max_ah: f64,
    pub v_min_v: f64,
    pub v_max_v: f64,
    pub i_max_ch_a: f64,
    pub i_max_dis_a: f64,
    pub n_cells: u32,
    pub ocv: OcvCurve,
    /// Use the zero-order-hold exponential update for the RC branch instead
    /// of the backward-difference recursion.
    #[serde(default)]
    pub exact_hold: bool,
}

impl EcmParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Validation(m.to_string()));
        if !(self.r0_ohm >= 0.0 && self.rd_ohm >= 0.0) {
            return bad("resistances must be nonnegative");
        }
        if !(self.cd_farad > 0.0) {
            return bad("diffusion capacitance must be positive");
        }
        if !(self.eta_c > 0.0 && self.eta_c <= 1.0) {
            return bad("coulombic efficiency must lie in (0, 1]");
        }
        if !(self.q_max_ah > 0.0) {
            return bad("q_max_ah must be positive");
        }
        if !(self.v_min_v < self.v_max_v) {
            return bad("v_min_v must be below v_max_v");
        }
        if !(self.i_max_ch_a >= 0.0 && self.i_max_dis_a >= 0.0) {
            return bad("current bounds must be nonnegative");
        }
        if self.n_cells < 1 {
            return bad("pack needs at least one cell");
        }
        Ok(())
    }

    /// Weights `(a, b)` of the RC update `v_d' = a·v_d + b·I` for a step of
    /// `tau_s` seconds.
    pub fn diffusion_weights(&self, tau_s: f64) -> (f64, f64) {
        let rc = self.rd_ohm * self.cd_farad;
        if self.exact_hold {
            let a = (-tau_s / rc).exp();
            (a, self.rd_ohm * (1.0 - a))
        } else {
            (rc / (tau_s + rc), tau_s * self.rd_ohm / (tau_s + rc))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EcmState {
    pub soc_ah: f64,
    pub v_d: f64,
}

impl EcmState {
    pub fn new(soc_ah: f64, v_d: f64, params: &EcmParams) -> Result<Self> {
        if !(0.0..=params.q_max_ah).contains(&soc_ah) {
            return Err(Error::Validation(format!(
                "initial SoC {soc_ah} Ah outside [0, {}]",
                params.q_max_ah
            )));
        }
        Ok(Self { soc_ah, v_d })
    }

    pub fn fraction(&self, params: &EcmParams) -> f64 {
        self.soc_ah / params.q_max_ah
    }

    pub fn rest_voltage(&self, params: &EcmParams) -> f64 {
        params.ocv.eval_clamped(self.fraction(params)) - self.v_d
    }

    pub(crate) fn snapshot(&self) -> StateSnapshot {
        StateSnapshot::Ecm {
            soc_ah: self.soc_ah,
            v_d: self.v_d,
        }
    }
}

/// Advances the circuit without any bound checks. OCV is read at the
/// post-step SoC (clamped into the table).
pub(crate) fn ecm_advance(state: &EcmState, current_a: f64, params: &EcmParams, tau_s: f64) -> (EcmState, f64) {
    let soc = state.soc_ah - params.eta_c * current_a * tau_s / SECONDS_PER_HOUR;
    let (a, b) = params.diffusion_weights(tau_s);
    let v_d = a * state.v_d + b * current_a;
    let ocv = params.ocv.eval_clamped(soc / params.q_max_ah);
    let v = ocv - current_a * params.r0_ohm - v_d;
    (EcmState { soc_ah: soc, v_d }, v)
}

pub(crate) fn check_current(current_a: f64, i_max_ch: f64, i_max_dis: f64) -> Result<()> {
    if current_a > i_max_dis * (1.0 + BOUND_RTOL) {
        return Err(Error::LimitViolation(Violation::new(
            ViolationKind::DischargeCurrentLimit,
            current_a,
            i_max_dis,
        )));
    }
    if current_a < -i_max_ch * (1.0 + BOUND_RTOL) {
        return Err(Error::LimitViolation(Violation::new(
            ViolationKind::ChargeCurrentLimit,
            current_a,
            -i_max_ch,
        )));
    }
    Ok(())
}

pub(crate) fn check_voltage(v: f64, v_min: f64, v_max: f64) -> Result<()> {
    if v < v_min {
        return Err(Error::InfeasibleStep(Violation::new(
            ViolationKind::VoltageBelowMin,
            v,
            v_min,
        )));
    }
    if v > v_max {
        return Err(Error::InfeasibleStep(Violation::new(
            ViolationKind::VoltageAboveMax,
            v,
            v_max,
        )));
    }
    Ok(())
}

fn check_capacity(soc_ah: f64, q_max: f64) -> Result<()> {
    if soc_ah < -BOUND_RTOL * q_max {
        return Err(Error::InfeasibleStep(Violation::new(
            ViolationKind::CapacityBelowZero,
            soc_ah,
            0.0,
        )));
    }
    if soc_ah > q_max * (1.0 + BOUND_RTOL) {
        return Err(Error::InfeasibleStep(Violation::new(
            ViolationKind::CapacityAboveMax,
            soc_ah,
            q_max,
        )));
    }
    Ok(())
}

/// One interval of the circuit model. Returns the new state and the
/// terminal voltage at the end of the interval.
pub fn ecm_step(state: &EcmState, current_a: f64, params: &EcmParams, tau_s: f64) -> Result<(EcmState, f64)> {
    check_current(current_a, params.i_max_ch_a, params.i_max_dis_a)?;
    let (next, v) = ecm_advance(state, current_a, params, tau_s);
    check_capacity(next.soc_ah, params.q_max_ah)?;
    check_voltage(v, params.v_min_v, params.v_max_v)?;
    let soc_ah = next.soc_ah.clamp(0.0, params.q_max_ah);
    Ok((EcmState { soc_ah, ..next }, v))
}

pub(crate) fn record_ecm_step(trace: &mut Trace, state: &EcmState, current_a: f64, v: f64, params: &EcmParams) {
    let cell_w = current_a * v;
    let pack_mw = pack_power(current_a, v, params.n_cells).unwrap_or(0.0) / WATTS_PER_MEGAWATT;
    trace.push(
        state.snapshot(),
        AppliedControl::Current { current_a },
        state.fraction(params),
        Some(v),
        Some(cell_w),
        pack_mw,
        pack_mw.abs(),
        None,
    );
}

pub fn ecm_simulate(schedule: &CurrentSchedule, init: &EcmState, params: &EcmParams) -> Result<Trace> {
    params.validate()?;
    let grid = schedule.grid;
    let mut trace = Trace::new(grid, init.snapshot(), init.fraction(params));
    let mut state = *init;
    for (k, &i) in schedule.current.iter().enumerate() {
        let (next, v) = ecm_step(&state, i, params, grid.tau_s).map_err(|e| e.at_step(k))?;
        state = next;
        record_ecm_step(&mut trace, &state, i, v, params);
    }
    Ok(trace)
}
