//! Single-particle electrochemical cell model.
//!
//! Each electrode is one spherical particle with radial solid diffusion,
//! Butler–Volmer surface kinetics and a film resistance. The electrolyte
//! concentration is constant and the temperature is a fixed parameter.

pub mod diffusion;
pub mod kinetics;

use serde::{Deserialize, Deserializer, Serialize};

use crate::degradation::{sei_split, sei_update, DegradationLedger, SeiParams, SeiSplitInput};
use crate::ecm::{check_current, check_voltage};
use crate::error::{Electrode, Error, Result, Violation, ViolationKind};
use crate::grid::{pack_power, CurrentSchedule, WATTS_PER_MEGAWATT};
use crate::interp::MonotoneCubic;
use crate::trace::{AppliedControl, StateSnapshot, Trace};

pub use diffusion::{DiffusionScheme, ShellGrid};
pub use kinetics::{butler_volmer_flux, exchange_current_density, flux_from_current, overpotential};

/// Open-circuit potential of one electrode versus surface stoichiometry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MonotoneCubic", into = "MonotoneCubic")]
pub struct OcpCurve(MonotoneCubic);

impl OcpCurve {
    pub fn new(points: Vec<(f64, f64)>) -> Result<Self> {
        Self::try_from(MonotoneCubic::new(points)?)
    }

    pub fn eval(&self, stoich: f64) -> f64 {
        self.0.eval(stoich)
    }

    pub(crate) fn eval_with_slope(&self, stoich: f64) -> (f64, f64) {
        self.0.eval_with_slope(stoich)
    }

    pub fn points(&self) -> Vec<(f64, f64)> {
        self.0.points()
    }
}

impl TryFrom<MonotoneCubic> for OcpCurve {
    type Error = Error;
    fn try_from(curve: MonotoneCubic) -> Result<Self> {
        let (lo, hi) = curve.domain();
        if lo < 0.0 || hi > 1.0 {
            return Err(Error::Validation(
                "OCP breakpoints must be stoichiometries in [0, 1]".into(),
            ));
        }
        if curve.monotone_direction() == 0 {
            return Err(Error::Validation("OCP curve must be strictly monotone".into()));
        }
        Ok(Self(curve))
    }
}

impl From<OcpCurve> for MonotoneCubic {
    fn from(c: OcpCurve) -> Self {
        c.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ElectrodeParams {
    #[serde(skip, default = "default_side")]
    pub side: Electrode,
    pub radius_m: f64,
    pub diffusivity_m2_s: f64,
    /// Reaction rate constant; absorbs whatever units make `j_0` a flux.
    pub rate_constant: f64,
    pub c_max_mol_m3: f64,
    pub c_min_op_mol_m3: f64,
    pub c_max_op_mol_m3: f64,
    pub active_fraction: f64,
    pub volume_m3: f64,
    pub film_resistance_ohm: f64,
    pub ocp: OcpCurve,
}

fn default_side() -> Electrode {
    Electrode::Pos
}

impl ElectrodeParams {
    fn validate(&self) -> Result<()> {
        let side = self.side;
        let bad = |m: &str| Err(Error::Validation(format!("{side} electrode: {m}")));
        if !(0.0 < self.c_min_op_mol_m3
            && self.c_min_op_mol_m3 < self.c_max_op_mol_m3
            && self.c_max_op_mol_m3 <= self.c_max_mol_m3)
        {
            return bad("need 0 < c_min_op < c_max_op <= c_max");
        }
        for (name, v) in [
            ("radius_m", self.radius_m),
            ("diffusivity_m2_s", self.diffusivity_m2_s),
            ("rate_constant", self.rate_constant),
            ("active_fraction", self.active_fraction),
            ("volume_m3", self.volume_m3),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return bad(&format!("{name} must be positive"));
            }
        }
        if !(self.film_resistance_ohm >= 0.0) {
            return bad("film resistance must be nonnegative");
        }
        Ok(())
    }

    /// Active particle surface area `3·ε·ν/R` (m²).
    pub fn surface_area_m2(&self) -> f64 {
        3.0 * self.active_fraction * self.volume_m3 / self.radius_m
    }

    /// Moles of lithium per unit of mean concentration (`ε·ν`).
    pub fn active_volume_m3(&self) -> f64 {
        self.active_fraction * self.volume_m3
    }

    /// Lithium inventory that can cycle inside the operating window (mol).
    pub fn window_inventory_mol(&self) -> f64 {
        (self.c_max_op_mol_m3 - self.c_min_op_mol_m3) * self.active_volume_m3()
    }

    /// Sign of the applied cell current as seen by this electrode.
    pub(crate) fn current_sign(&self) -> f64 {
        match self.side {
            Electrode::Pos => -1.0,
            Electrode::Neg => 1.0,
        }
    }
}

fn deserialize_pos<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<ElectrodeParams, D::Error> {
    let mut e = ElectrodeParams::deserialize(d)?;
    e.side = Electrode::Pos;
    Ok(e)
}

fn deserialize_neg<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<ElectrodeParams, D::Error> {
    let mut e = ElectrodeParams::deserialize(d)?;
    e.side = Electrode::Neg;
    Ok(e)
}

fn default_faraday() -> f64 {
    96485.0
}

fn default_gas_constant() -> f64 {
    8.314
}

fn default_shells() -> usize {
    10
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpmParams {
    #[serde(deserialize_with = "deserialize_pos")]
    pub pos: ElectrodeParams,
    #[serde(deserialize_with = "deserialize_neg")]
    pub neg: ElectrodeParams,
    pub c_el_mol_m3: f64,
    pub temperature_k: f64,
    pub v_min_v: f64,
    pub v_max_v: f64,
    pub i_max_ch_a: f64,
    pub i_max_dis_a: f64,
    pub n_cells: u32,
    #[serde(default = "default_shells")]
    pub n_shells: usize,
    pub q_rated_ah: f64,
    /// Positive-electrode concentration when the negative one sits at the
    /// bottom of its window; fixes the lithium split between electrodes.
    pub pos_conc_at_empty_mol_m3: f64,
    #[serde(default = "default_faraday")]
    pub faraday_c_mol: f64,
    #[serde(default = "default_gas_constant")]
    pub gas_constant_j_mol_k: f64,
    #[serde(default)]
    pub scheme: DiffusionScheme,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sei: Option<SeiParams>,
}

impl SpmParams {
    pub fn validate(&self) -> Result<()> {
        if self.pos.side != Electrode::Pos || self.neg.side != Electrode::Neg {
            return Err(Error::Validation("electrode sides are mislabelled".into()));
        }
        self.pos.validate()?;
        self.neg.validate()?;
        let bad = |m: &str| Err(Error::Validation(m.to_string()));
        if !(self.c_el_mol_m3 > 0.0) {
            return bad("electrolyte concentration must be positive");
        }
        if !(self.temperature_k > 0.0) {
            return bad("temperature must be positive");
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
        if self.n_shells < 3 {
            return bad("need at least three radial shells");
        }
        if !(self.q_rated_ah > 0.0) {
            return bad("q_rated_ah must be positive");
        }
        if !(self.faraday_c_mol > 0.0 && self.gas_constant_j_mol_k > 0.0) {
            return bad("physical constants must be positive");
        }
        if let Some(sei) = &self.sei {
            sei.validate()?;
            if sei.z0_n_ohm != self.neg.film_resistance_ohm {
                return bad("sei.z0_n_ohm must equal the negative film_resistance_ohm");
            }
        }
        Ok(())
    }

    pub fn electrode(&self, side: Electrode) -> &ElectrodeParams {
        match side {
            Electrode::Pos => &self.pos,
            Electrode::Neg => &self.neg,
        }
    }

    /// `2RT/F` in volts.
    pub fn thermal_factor(&self) -> f64 {
        2.0 * self.gas_constant_j_mol_k * self.temperature_k / self.faraday_c_mol
    }

    pub(crate) fn shell_grid(&self, side: Electrode) -> ShellGrid {
        ShellGrid::new(self.electrode(side).radius_m, self.n_shells)
    }

    fn sei_params(&self) -> Result<&SeiParams> {
        self.sei
            .as_ref()
            .ok_or_else(|| Error::Config("SEI degradation requested but no SEI parameters given".into()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpmState {
    pub conc_pos: Vec<f64>,
    pub conc_neg: Vec<f64>,
    /// Intercalation fluxes applied over the last interval; they set the
    /// surface gradient used to read the surface concentration.
    pub flux_pos: f64,
    pub flux_neg: f64,
    pub ledger: DegradationLedger,
}

impl SpmState {
    /// Uniform, relaxed particles at the given SoC fraction of the negative
    /// electrode window.
    pub fn at_soc(params: &SpmParams, soc_fraction: f64) -> Result<Self> {
        params.validate()?;
        if !(0.0..=1.0).contains(&soc_fraction) {
            return Err(Error::Validation(format!(
                "SoC fraction {soc_fraction} outside [0, 1]"
            )));
        }
        let neg = &params.neg;
        let c_neg = neg.c_min_op_mol_m3 + soc_fraction * (neg.c_max_op_mol_m3 - neg.c_min_op_mol_m3);
        let moved = (c_neg - neg.c_min_op_mol_m3) * neg.active_volume_m3();
        let c_pos = params.pos_conc_at_empty_mol_m3 - moved / params.pos.active_volume_m3();
        let ledger = DegradationLedger::new(params.neg.film_resistance_ohm);
        Ok(Self {
            conc_pos: vec![c_pos; params.n_shells],
            conc_neg: vec![c_neg; params.n_shells],
            flux_pos: 0.0,
            flux_neg: 0.0,
            ledger,
        })
    }

    pub fn sei_thickness_m(&self) -> f64 {
        self.ledger.sei_thickness_m
    }

    pub fn surface(&self, side: Electrode, params: &SpmParams) -> f64 {
        let (conc, flux) = match side {
            Electrode::Pos => (&self.conc_pos, self.flux_pos),
            Electrode::Neg => (&self.conc_neg, self.flux_neg),
        };
        params
            .shell_grid(side)
            .surface(conc, flux, params.electrode(side).diffusivity_m2_s)
    }

    pub fn mean(&self, side: Electrode, params: &SpmParams) -> f64 {
        let conc = match side {
            Electrode::Pos => &self.conc_pos,
            Electrode::Neg => &self.conc_neg,
        };
        params.shell_grid(side).mean(conc)
    }

    /// Total lithium held in both electrodes' active material (mol).
    pub fn lithium_inventory_mol(&self, params: &SpmParams) -> f64 {
        self.mean(Electrode::Pos, params) * params.pos.active_volume_m3()
            + self.mean(Electrode::Neg, params) * params.neg.active_volume_m3()
    }

    pub(crate) fn snapshot(&self, params: &SpmParams) -> StateSnapshot {
        StateSnapshot::Spm {
            c_surf_pos: self.surface(Electrode::Pos, params),
            c_surf_neg: self.surface(Electrode::Neg, params),
            c_avg_pos: self.mean(Electrode::Pos, params),
            c_avg_neg: self.mean(Electrode::Neg, params),
            sei_thickness_m: self.ledger.sei_thickness_m,
            film_resistance_ohm: self.ledger.film_resistance_ohm,
            lithium_loss_mol: self.ledger.lithium_loss_mol,
        }
    }
}

/// One diffusion step of an electrode's shell profile under surface flux
/// `flux` (mol/(m²·s), positive out of the particle).
pub fn diffuse_step(
    conc: &[f64],
    flux: f64,
    electrode: &ElectrodeParams,
    tau_s: f64,
    scheme: DiffusionScheme,
) -> Result<Vec<f64>> {
    diffusion::diffuse_shells(conc, flux, electrode.radius_m, electrode.diffusivity_m2_s, tau_s, scheme)
}

/// State of charge (Ah) read from the negative surface concentration
/// against the operating window.
pub fn spm_soc(state: &SpmState, params: &SpmParams) -> f64 {
    let neg = &params.neg;
    let c = state.surface(Electrode::Neg, params);
    params.q_rated_ah * (c - neg.c_min_op_mol_m3) / (neg.c_max_op_mol_m3 - neg.c_min_op_mol_m3)
}

/// Film resistance of the negative electrode, grown film included.
fn negative_film(state: &SpmState) -> f64 {
    state.ledger.film_resistance_ohm
}

/// Solid-phase potential `φ = η + OCP(c_s/c_max) + I_e·Z` of one electrode.
pub(crate) fn solid_potential(
    electrode: &ElectrodeParams,
    flux: f64,
    c_surf: f64,
    current_a: f64,
    film_ohm: f64,
    params: &SpmParams,
) -> Result<f64> {
    let eta = overpotential(flux, c_surf, electrode, params)?;
    let ocp = electrode.ocp.eval(c_surf / electrode.c_max_mol_m3);
    Ok(eta + ocp + electrode.current_sign() * current_a * film_ohm)
}

fn voltage_from_fluxes(
    conc_pos: &[f64],
    conc_neg: &[f64],
    flux_pos: f64,
    flux_neg: f64,
    current_a: f64,
    film_neg: f64,
    params: &SpmParams,
) -> Result<(f64, f64, f64)> {
    let cs_pos = params
        .shell_grid(Electrode::Pos)
        .surface(conc_pos, flux_pos, params.pos.diffusivity_m2_s);
    let cs_neg = params
        .shell_grid(Electrode::Neg)
        .surface(conc_neg, flux_neg, params.neg.diffusivity_m2_s);
    let phi_p = solid_potential(&params.pos, flux_pos, cs_pos, current_a, params.pos.film_resistance_ohm, params)?;
    let phi_n = solid_potential(&params.neg, flux_neg, cs_neg, current_a, film_neg, params)?;
    Ok((phi_p - phi_n, cs_pos, cs_neg))
}

/// Terminal voltage `φ^p − φ^n` for current `I` drawn from `state`,
/// treating all negative-electrode flux as intercalation.
pub fn terminal_voltage(state: &SpmState, current_a: f64, params: &SpmParams) -> Result<f64> {
    let jp = flux_from_current(current_a, Electrode::Pos, params);
    let jn = flux_from_current(current_a, Electrode::Neg, params);
    voltage_from_fluxes(
        &state.conc_pos,
        &state.conc_neg,
        jp,
        jn,
        current_a,
        negative_film(state),
        params,
    )
    .map(|(v, _, _)| v)
}

/// Voltage with no current drawn from the state's shell values.
pub fn rest_voltage(state: &SpmState, params: &SpmParams) -> Result<f64> {
    voltage_from_fluxes(&state.conc_pos, &state.conc_neg, 0.0, 0.0, 0.0, 0.0, params).map(|(v, _, _)| v)
}

/// Outcome of a step before any bound is enforced.
#[derive(Debug, Clone)]
pub(crate) struct SpmAdvance {
    pub state: SpmState,
    pub voltage: f64,
    pub cs_pos: f64,
    pub cs_neg: f64,
}

/// Diffuses, splits and evaluates the voltage; enforces nothing except the
/// kinetic singularity at a saturated surface.
pub(crate) fn spm_advance(
    state: &SpmState,
    current_a: f64,
    params: &SpmParams,
    tau_s: f64,
    degrade: bool,
) -> Result<SpmAdvance> {
    let jp = flux_from_current(current_a, Electrode::Pos, params);
    let jn = flux_from_current(current_a, Electrode::Neg, params);

    let (j_li, j_sei) = if degrade {
        let sei = params.sei_params()?;
        let grid_n = params.shell_grid(Electrode::Neg);
        let split = sei_split(
            &SeiSplitInput {
                j_total: jn,
                c_surf: grid_n.surface(&state.conc_neg, jn, params.neg.diffusivity_m2_s),
                current_a,
                film_ohm: state.ledger.film_resistance_ohm,
            },
            sei,
            params,
        )?;
        (split.j_intercalation, split.j_sei)
    } else {
        (jn, 0.0)
    };

    let conc_pos = diffusion::advance(
        &params.shell_grid(Electrode::Pos),
        &state.conc_pos,
        jp,
        params.pos.diffusivity_m2_s,
        tau_s,
        params.scheme,
    )?;
    let conc_neg = diffusion::advance(
        &params.shell_grid(Electrode::Neg),
        &state.conc_neg,
        j_li,
        params.neg.diffusivity_m2_s,
        tau_s,
        params.scheme,
    )?;
    let ledger = if degrade {
        sei_update(&state.ledger, j_sei, &params.neg, params.sei_params()?, tau_s)?
    } else {
        state.ledger
    };
    let next = SpmState {
        conc_pos,
        conc_neg,
        flux_pos: jp,
        flux_neg: j_li,
        ledger,
    };
    let (voltage, cs_pos, cs_neg) = voltage_from_fluxes(
        &next.conc_pos,
        &next.conc_neg,
        jp,
        j_li,
        current_a,
        negative_film(&next),
        params,
    )?;
    Ok(SpmAdvance {
        state: next,
        voltage,
        cs_pos,
        cs_neg,
    })
}

fn check_window(conc: &[f64], c_surf: f64, e: &ElectrodeParams) -> Result<()> {
    let lowest = conc.iter().copied().fold(c_surf, f64::min);
    let highest = conc.iter().copied().fold(c_surf, f64::max);
    if lowest < e.c_min_op_mol_m3 {
        return Err(Error::InfeasibleStep(Violation::new(
            ViolationKind::ConcentrationBelowMin(e.side),
            lowest,
            e.c_min_op_mol_m3,
        )));
    }
    if highest > e.c_max_op_mol_m3 {
        return Err(Error::InfeasibleStep(Violation::new(
            ViolationKind::ConcentrationAboveMax(e.side),
            highest,
            e.c_max_op_mol_m3,
        )));
    }
    Ok(())
}

pub(crate) fn check_spm_bounds(adv: &SpmAdvance, params: &SpmParams) -> Result<()> {
    if adv.state.conc_pos.iter().chain(&adv.state.conc_neg).any(|&c| c < 0.0) {
        return Err(Error::StepSize("a shell concentration went negative".into()));
    }
    check_window(&adv.state.conc_pos, adv.cs_pos, &params.pos)?;
    check_window(&adv.state.conc_neg, adv.cs_neg, &params.neg)?;
    check_voltage(adv.voltage, params.v_min_v, params.v_max_v)
}

/// One interval of the particle model: returns the new state, terminal
/// voltage (V) and pack power (W).
pub fn spm_step(
    state: &SpmState,
    current_a: f64,
    params: &SpmParams,
    tau_s: f64,
    degrade: bool,
) -> Result<(SpmState, f64, f64)> {
    check_current(current_a, params.i_max_ch_a, params.i_max_dis_a)?;
    let adv = spm_advance(state, current_a, params, tau_s, degrade)?;
    check_spm_bounds(&adv, params)?;
    let power = pack_power(current_a, adv.voltage, params.n_cells)?;
    Ok((adv.state, adv.voltage, power))
}

pub(crate) fn record_spm_step(
    trace: &mut Trace,
    state: &SpmState,
    current_a: f64,
    voltage: f64,
    params: &SpmParams,
    degrade: bool,
) {
    let pack_mw = params.n_cells as f64 * current_a * voltage / WATTS_PER_MEGAWATT;
    trace.push(
        state.snapshot(params),
        AppliedControl::Current { current_a },
        spm_soc(state, params) / params.q_rated_ah,
        Some(voltage),
        Some(current_a * voltage),
        pack_mw,
        pack_mw.abs(),
        degrade.then_some(state.ledger.capacity_loss),
    );
}

pub fn spm_simulate(
    schedule: &CurrentSchedule,
    init: &SpmState,
    params: &SpmParams,
    degrade: bool,
) -> Result<Trace> {
    params.validate()?;
    let grid = schedule.grid;
    let mut trace = Trace::new(grid, init.snapshot(params), spm_soc(init, params) / params.q_rated_ah);
    let mut state = init.clone();
    for (k, &i) in schedule.current.iter().enumerate() {
        let (next, v, _) = spm_step(&state, i, params, grid.tau_s, degrade).map_err(|e| e.at_step(k))?;
        state = next;
        record_spm_step(&mut trace, &state, i, v, params, degrade);
    }
    Ok(trace)
}

#[cfg(test)]
mod tests;
