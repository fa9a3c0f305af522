//! Surface reaction: current-to-flux scaling and Butler–Volmer kinetics.

use crate::error::{Electrode, Error, Result};

use super::{ElectrodeParams, SpmParams};

/// Pore-wall molar flux (mol/(m²·s)) for applied cell current `I`.
///
/// Discharge (`I > 0`) drives lithium out of the negative particles
/// (`J^n > 0`) and into the positive ones (`J^p < 0`).
pub fn flux_from_current(current_a: f64, side: Electrode, params: &SpmParams) -> f64 {
    let e = params.electrode(side);
    let scale = e.radius_m / (3.0 * e.volume_m3 * e.active_fraction * params.faraday_c_mol);
    match side {
        Electrode::Pos => -current_a * scale,
        Electrode::Neg => current_a * scale,
    }
}

/// `j_0 = k·F·sqrt((c_max − c_s)·c_s·c_el)`; zero outside `(0, c_max)`.
pub fn exchange_current_density(c_surf: f64, electrode: &ElectrodeParams, params: &SpmParams) -> f64 {
    let room = electrode.c_max_mol_m3 - c_surf;
    if c_surf <= 0.0 || room <= 0.0 {
        return 0.0;
    }
    electrode.rate_constant * params.faraday_c_mol * (room * c_surf * params.c_el_mol_m3).sqrt()
}

/// Activation overpotential that sustains flux `J` at surface concentration
/// `c_surf`: the closed-form inverse of `J = 2·j_0·sinh(F·η/(2RT))`.
pub fn overpotential(flux: f64, c_surf: f64, electrode: &ElectrodeParams, params: &SpmParams) -> Result<f64> {
    if flux == 0.0 {
        return Ok(0.0);
    }
    let j0 = exchange_current_density(c_surf, electrode, params);
    if j0 <= 0.0 {
        return Err(Error::Saturation(electrode.side));
    }
    Ok(params.thermal_factor() * (flux / (2.0 * j0)).asinh())
}

/// Forward Butler–Volmer law.
pub fn butler_volmer_flux(eta: f64, c_surf: f64, electrode: &ElectrodeParams, params: &SpmParams) -> f64 {
    let j0 = exchange_current_density(c_surf, electrode, params);
    2.0 * j0 * (eta / params.thermal_factor()).sinh()
}

/// Overpotential and its partials `(η, ∂η/∂J, ∂η/∂c_s)` with `c_s` pulled
/// a hair inside `(0, c_max)` so the value stays finite away from the
/// feasible region. Used by the penalty backend.
pub(crate) fn overpotential_relaxed(
    flux: f64,
    c_surf: f64,
    electrode: &ElectrodeParams,
    params: &SpmParams,
) -> (f64, f64, f64) {
    let cmax = electrode.c_max_mol_m3;
    let margin = 1e-6 * cmax;
    let (c, dc_dcs) = if c_surf < margin {
        (margin, 0.0)
    } else if c_surf > cmax - margin {
        (cmax - margin, 0.0)
    } else {
        (c_surf, 1.0)
    };
    let root = ((cmax - c) * c * params.c_el_mol_m3).sqrt();
    let j0 = electrode.rate_constant * params.faraday_c_mol * root;
    let dj0_dc = electrode.rate_constant * params.faraday_c_mol * params.c_el_mol_m3 * (cmax - 2.0 * c)
        / (2.0 * root);
    let x = flux / (2.0 * j0);
    let theta = params.thermal_factor();
    let s = (1.0 + x * x).sqrt();
    let eta = theta * x.asinh();
    let deta_dj = theta / (2.0 * j0 * s);
    let deta_dc = theta / s * (-x / j0) * dj0_dc * dc_dcs;
    (eta, deta_dj, deta_dc)
}
