use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spm::{kinetics, ElectrodeParams, SpmParams};

/// Parasitic side reaction forming the solid–electrolyte interphase on
/// the negative particles.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeiParams {
    pub j0_sei_a_m2: f64,
    pub ocp_sei_v: f64,
    pub molar_mass_kg_mol: f64,
    pub density_kg_m3: f64,
    pub conductivity_s_m: f64,
    pub z0_n_ohm: f64,
}

impl SeiParams {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("j0_sei_a_m2", self.j0_sei_a_m2),
            ("molar_mass_kg_mol", self.molar_mass_kg_mol),
            ("density_kg_m3", self.density_kg_m3),
            ("conductivity_s_m", self.conductivity_s_m),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Validation(format!("SEI parameter {name} must be positive")));
            }
        }
        if !(self.ocp_sei_v.is_finite() && self.z0_n_ohm >= 0.0) {
            return Err(Error::Validation("SEI potential must be finite and z0_n nonnegative".into()));
        }
        Ok(())
    }
}

/// Cumulative degradation state carried along an SPM trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DegradationLedger {
    pub capacity_loss: f64,
    pub lithium_loss_mol: f64,
    pub sei_thickness_m: f64,
    pub film_resistance_ohm: f64,
}

impl DegradationLedger {
    pub fn new(film_resistance_ohm: f64) -> Self {
        Self {
            capacity_loss: 0.0,
            lithium_loss_mol: 0.0,
            sei_thickness_m: 0.0,
            film_resistance_ohm,
        }
    }
}

/// `η_sei = φ_n − OCP_sei − I·Z_n`.
pub fn sei_overpotential(phi_n: f64, current_a: f64, film_ohm: f64, sei: &SeiParams) -> f64 {
    phi_n - sei.ocp_sei_v - current_a * film_ohm
}

/// Cathodic Tafel flux of the side reaction (mol/(m²·s), never positive).
pub fn sei_flux(eta_sei: f64, sei: &SeiParams, params: &SpmParams) -> f64 {
    -(sei.j0_sei_a_m2 / params.faraday_c_mol) * (-eta_sei / params.thermal_factor()).exp()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeiSplitInput {
    /// Total pore-wall flux of the negative electrode.
    pub j_total: f64,
    /// Negative surface concentration the kinetics are evaluated at.
    pub c_surf: f64,
    pub current_a: f64,
    pub film_ohm: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeiSplit {
    pub j_intercalation: f64,
    pub j_sei: f64,
    pub eta_sei: f64,
}

const SPLIT_MAX_ITER: usize = 50;
const SPLIT_RTOL: f64 = 1e-14;

/// Splits the negative flux between intercalation and the side reaction.
///
/// The solid potential depends on the intercalation flux through the
/// Butler–Volmer overpotential, so the split is the fixed point of
/// `J_Li = J_n − J_sei(φ_n(J_Li))`. The side reaction only runs on charge.
pub fn sei_split(input: &SeiSplitInput, sei: &SeiParams, params: &SpmParams) -> Result<SeiSplit> {
    let off = SeiSplit {
        j_intercalation: input.j_total,
        j_sei: 0.0,
        eta_sei: 0.0,
    };
    if input.current_a >= 0.0 || sei.j0_sei_a_m2 == 0.0 {
        return Ok(off);
    }
    let neg = &params.neg;
    let ocp = neg.ocp.eval(input.c_surf / neg.c_max_mol_m3);
    let eval = |j_li: f64| -> Result<(f64, f64)> {
        let eta = kinetics::overpotential(j_li, input.c_surf, neg, params)?;
        let phi = eta + ocp + input.current_a * input.film_ohm;
        let eta_sei = sei_overpotential(phi, input.current_a, input.film_ohm, sei);
        Ok((sei_flux(eta_sei, sei, params), eta_sei))
    };
    let mut j_li = input.j_total;
    for _ in 0..SPLIT_MAX_ITER {
        let (j_sei, eta_sei) = eval(j_li)?;
        let next = input.j_total - j_sei;
        if (next - j_li).abs() <= SPLIT_RTOL * input.j_total.abs().max(j_sei.abs()) {
            return Ok(SeiSplit {
                j_intercalation: next,
                j_sei,
                eta_sei,
            });
        }
        j_li = next;
    }
    Err(Error::Numerical(format!(
        "SEI flux split did not converge in {SPLIT_MAX_ITER} iterations"
    )))
}

/// Grows the film by one interval of side-reaction flux `j_sei ≤ 0`.
pub fn sei_update(
    ledger: &DegradationLedger,
    j_sei: f64,
    neg: &ElectrodeParams,
    sei: &SeiParams,
    tau_s: f64,
) -> Result<DegradationLedger> {
    if j_sei > 0.0 {
        return Err(Error::Validation(format!(
            "SEI flux must be nonpositive (consumption), got {j_sei:e}"
        )));
    }
    let area = neg.surface_area_m2();
    let thickness = ledger.sei_thickness_m - tau_s * j_sei * sei.molar_mass_kg_mol / sei.density_kg_m3;
    let lithium = ledger.lithium_loss_mol - tau_s * area * j_sei;
    Ok(DegradationLedger {
        capacity_loss: lithium / neg.window_inventory_mol(),
        lithium_loss_mol: lithium,
        sei_thickness_m: thickness,
        film_resistance_ohm: sei.z0_n_ohm + thickness / (sei.conductivity_s_m * area),
    })
}
