//! Conservative finite-volume solver for radial diffusion in a sphere.
//!
//! The particle is cut into `n` shells of equal thickness. Unknowns are
//! shell-averaged concentrations; fluxes live on the shell faces, the centre
//! face carries no flux and the outer face carries the surface flux `J`
//! (positive when lithium leaves the particle). Because every face flux
//! enters two neighbouring shells with opposite sign, the volume-weighted
//! mean concentration changes by exactly `-3·J·τ/R` per step.
//!
//! All geometric factors drop the common `4π`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DiffusionScheme {
    /// Backward Euler; unconditionally stable.
    #[default]
    Implicit,
    /// Forward Euler; guarded by its stability limit.
    Explicit,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ShellGrid {
    pub radius: f64,
    pub dr: f64,
    /// `(r_{k+1}^3 - r_k^3) / 3`
    pub volumes: Vec<f64>,
    /// `r_k^2` for faces `k = 0..=n`.
    pub face_areas: Vec<f64>,
}

impl ShellGrid {
    pub fn new(radius: f64, n: usize) -> Self {
        let dr = radius / n as f64;
        let r = |k: usize| if k == n { radius } else { k as f64 * dr };
        let volumes = (0..n)
            .map(|k| (r(k + 1).powi(3) - r(k).powi(3)) / 3.0)
            .collect();
        let face_areas = (0..=n).map(|k| r(k) * r(k)).collect();
        Self {
            radius,
            dr,
            volumes,
            face_areas,
        }
    }

    pub fn n(&self) -> usize {
        self.volumes.len()
    }

    pub fn total_volume(&self) -> f64 {
        self.radius.powi(3) / 3.0
    }

    /// Volume-weighted mean concentration.
    pub fn mean(&self, conc: &[f64]) -> f64 {
        let s: f64 = conc.iter().zip(&self.volumes).map(|(c, w)| c * w).sum();
        s / self.total_volume()
    }

    /// Conductance `D·S_{k+1}/Δr` of the interior face between shells `k`, `k+1`.
    fn conductance(&self, diff: f64, k: usize) -> f64 {
        diff * self.face_areas[k + 1] / self.dr
    }

    /// Symmetric tridiagonal matrix `W/τ + L` of the backward-Euler step:
    /// `(diag, off)` with `off[k]` coupling shells `k` and `k+1`.
    pub fn implicit_matrix(&self, diff: f64, tau_s: f64) -> (Vec<f64>, Vec<f64>) {
        let n = self.n();
        let off: Vec<f64> = (0..n.saturating_sub(1))
            .map(|k| -self.conductance(diff, k))
            .collect();
        let mut diag: Vec<f64> = self.volumes.iter().map(|w| w / tau_s).collect();
        for k in 0..n.saturating_sub(1) {
            let g = self.conductance(diff, k);
            diag[k] += g;
            diag[k + 1] += g;
        }
        (diag, off)
    }

    /// Largest stable forward-Euler step.
    pub fn explicit_step_limit(&self, diff: f64) -> f64 {
        let n = self.n();
        (0..n)
            .map(|k| {
                let mut g = 0.0;
                if k > 0 {
                    g += self.conductance(diff, k - 1);
                }
                if k + 1 < n {
                    g += self.conductance(diff, k);
                }
                if g > 0.0 {
                    self.volumes[k] / g
                } else {
                    f64::INFINITY
                }
            })
            .fold(f64::INFINITY, f64::min)
    }

    /// Second-order estimate of the surface value: the outer shell average
    /// extrapolated half a shell outward along the imposed gradient `-J/D`.
    pub fn surface(&self, conc: &[f64], flux: f64, diff: f64) -> f64 {
        conc[conc.len() - 1] - flux * self.dr / (2.0 * diff)
    }
}

/// Thomas algorithm for a symmetric tridiagonal system.
pub(crate) fn solve_symmetric_tridiagonal(diag: &[f64], off: &[f64], rhs: &[f64]) -> Vec<f64> {
    let n = diag.len();
    let mut c = vec![0.0; n];
    let mut d = vec![0.0; n];
    let mut denom = diag[0];
    if n > 1 {
        c[0] = off[0] / denom;
    }
    d[0] = rhs[0] / denom;
    for k in 1..n {
        denom = diag[k] - off[k - 1] * c[k - 1];
        if k + 1 < n {
            c[k] = off[k] / denom;
        }
        d[k] = (rhs[k] - off[k - 1] * d[k - 1]) / denom;
    }
    let mut x = d;
    for k in (0..n - 1).rev() {
        x[k] -= c[k] * x[k + 1];
    }
    x
}

/// Advances shell concentrations by one step without sign checks.
pub(crate) fn advance(
    grid: &ShellGrid,
    conc: &[f64],
    flux: f64,
    diff: f64,
    tau_s: f64,
    scheme: DiffusionScheme,
) -> Result<Vec<f64>> {
    let n = grid.n();
    if conc.len() != n {
        return Err(Error::Validation(format!(
            "concentration vector has {} shells, grid has {n}",
            conc.len()
        )));
    }
    let outer = grid.face_areas[n] * flux;
    match scheme {
        DiffusionScheme::Implicit => {
            let (diag, off) = grid.implicit_matrix(diff, tau_s);
            let mut rhs: Vec<f64> = conc
                .iter()
                .zip(&grid.volumes)
                .map(|(c, w)| w / tau_s * c)
                .collect();
            rhs[n - 1] -= outer;
            Ok(solve_symmetric_tridiagonal(&diag, &off, &rhs))
        }
        DiffusionScheme::Explicit => {
            let limit = grid.explicit_step_limit(diff);
            if tau_s > limit {
                return Err(Error::Config(format!(
                    "explicit diffusion step {tau_s} s exceeds stability limit {limit:.3e} s; \
                     use the implicit scheme or a smaller step"
                )));
            }
            let mut face = vec![0.0; n + 1];
            for k in 0..n - 1 {
                face[k + 1] = -grid.conductance(diff, k) * (conc[k + 1] - conc[k]);
            }
            face[n] = outer;
            Ok((0..n)
                .map(|k| conc[k] - tau_s / grid.volumes[k] * (face[k + 1] - face[k]))
                .collect())
        }
    }
}

/// One diffusion step with surface flux `flux` (mol/(m²·s)).
pub fn diffuse_shells(
    conc: &[f64],
    flux: f64,
    radius_m: f64,
    diffusivity: f64,
    tau_s: f64,
    scheme: DiffusionScheme,
) -> Result<Vec<f64>> {
    let grid = ShellGrid::new(radius_m, conc.len());
    let next = advance(&grid, conc, flux, diffusivity, tau_s, scheme)?;
    if let Some(k) = next.iter().position(|&c| c < 0.0) {
        return Err(Error::StepSize(format!(
            "shell {k} concentration went negative ({:.6e} mol/m^3)",
            next[k]
        )));
    }
    Ok(next)
}

#[cfg(test)]
mod tests {
    use super::*;

    const R: f64 = 5e-6;
    const D: f64 = 1e-14;

    fn profile(n: usize) -> Vec<f64> {
        (0..n).map(|k| 1.0e4 + 300.0 * (k as f64).sin()).collect()
    }

    #[test]
    fn tridiagonal_solver_matches_direct_product() {
        let diag = vec![4.0, 5.0, 6.0, 7.0];
        let off = vec![-1.0, -2.0, -0.5];
        let x = [1.0, -2.0, 3.0, 0.5];
        let mut b = vec![0.0; 4];
        for k in 0..4 {
            b[k] = diag[k] * x[k];
            if k > 0 {
                b[k] += off[k - 1] * x[k - 1];
            }
            if k < 3 {
                b[k] += off[k] * x[k + 1];
            }
        }
        let sol = solve_symmetric_tridiagonal(&diag, &off, &b);
        for k in 0..4 {
            assert!((sol[k] - x[k]).abs() < 1e-13);
        }
    }

    #[test]
    fn shell_volumes_sum_to_sphere() {
        let g = ShellGrid::new(R, 17);
        let s: f64 = g.volumes.iter().sum();
        assert!((s - g.total_volume()).abs() <= 1e-15 * g.total_volume());
    }

    #[test]
    fn zero_flux_conserves() {
        for scheme in [DiffusionScheme::Implicit, DiffusionScheme::Explicit] {
            let g = ShellGrid::new(R, 10);
            let c0 = profile(10);
            let tau = if scheme == DiffusionScheme::Explicit { 0.4 * g.explicit_step_limit(D) } else { 30.0 };
            let c1 = diffuse_shells(&c0, 0.0, R, D, tau, scheme).unwrap();
            assert!((g.mean(&c1) - g.mean(&c0)).abs() <= 1e-12 * g.mean(&c0));
        }
    }

    #[test]
    fn uniform_profile_at_rest_is_fixed() {
        let c0 = vec![12_345.0; 10];
        let c1 = diffuse_shells(&c0, 0.0, R, D, 3600.0, DiffusionScheme::Implicit).unwrap();
        for c in c1 {
            assert!((c - 12_345.0).abs() < 1e-9);
        }
    }

    #[test]
    fn constant_flux_mass_balance() {
        let g = ShellGrid::new(R, 10);
        let j = 2.0e-6;
        let tau = 10.0;
        let mut c = vec![2.0e4; 10];
        let m0 = g.mean(&c);
        for k in 1..=200 {
            c = diffuse_shells(&c, j, R, D, tau, DiffusionScheme::Implicit).unwrap();
            let expected = m0 - 3.0 * j * tau * k as f64 / R;
            assert!((g.mean(&c) - expected).abs() <= 1e-10 * m0);
        }
    }

    #[test]
    fn explicit_guard_rejects_large_steps() {
        let g = ShellGrid::new(R, 10);
        let limit = g.explicit_step_limit(D);
        let err = diffuse_shells(&profile(10), 0.0, R, D, 2.0 * limit, DiffusionScheme::Explicit).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }

    #[test]
    fn explicit_and_implicit_agree_for_small_steps() {
        let g = ShellGrid::new(R, 8);
        let tau = 0.05 * g.explicit_step_limit(D);
        let mut a = vec![1.5e4; 8];
        let mut b = a.clone();
        for _ in 0..400 {
            a = diffuse_shells(&a, 1e-6, R, D, tau, DiffusionScheme::Explicit).unwrap();
            b = diffuse_shells(&b, 1e-6, R, D, tau, DiffusionScheme::Implicit).unwrap();
        }
        for k in 0..8 {
            assert!((a[k] - b[k]).abs() < 1e-4 * 1.5e4, "shell {k}: {} vs {}", a[k], b[k]);
        }
    }

    #[test]
    fn draining_below_zero_is_a_step_size_error() {
        let err = diffuse_shells(&[1.0; 5], 1.0, R, D, 3600.0, DiffusionScheme::Implicit).unwrap_err();
        assert!(matches!(err, Error::StepSize(_)));
    }
}
