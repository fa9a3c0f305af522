//! Penalty-method ascent on the particle model.
//!
//! Hard bounds become squared hinge penalties with weight `μ`, raised along
//! a ladder. Current limits are kept by projection. The forward model here
//! never fails: kinetics are evaluated with the surface concentration held
//! just inside `(0, c_max)`, so the penalty can pull an infeasible iterate
//! back. The returned schedule is always re-run on the exact model.

use serde::{Deserialize, Serialize};

use crate::degradation::SeiParams;
use crate::error::{Error, Result};
use crate::grid::{CurrentSchedule, TimeGrid, WATTS_PER_MEGAWATT};
use crate::spm::diffusion::{self, solve_symmetric_tridiagonal};
use crate::spm::kinetics::overpotential_relaxed;
use crate::spm::{spm_soc, DiffusionScheme, ElectrodeParams, SpmParams, SpmState};

use super::{
    check_problem, evaluate_breakdown, Diagnostics, Model, Objective, Schedule, Signals, SolveReport, Terminal,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GradientMethod {
    #[default]
    FiniteDifference,
    Adjoint,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PenaltyConfig {
    /// Penalty weights, applied in order.
    pub ladder: Vec<f64>,
    /// Ascent iterations per rung.
    pub max_iter: usize,
    /// A rung ends once an iteration improves the penalized value by less
    /// than this fraction.
    pub rel_tol: f64,
    pub gradient: GradientMethod,
    /// Central-difference step (A).
    pub fd_step_a: f64,
    /// Back-off inside the voltage window (V).
    pub voltage_margin_v: f64,
    /// Back-off inside the concentration window, as a fraction of `c_max`.
    pub conc_margin: f64,
    /// Back-off above the terminal SoC requirement.
    pub soc_margin: f64,
}

impl Default for PenaltyConfig {
    fn default() -> Self {
        Self {
            ladder: vec![1e3, 1e5, 1e7, 1e9],
            max_iter: 200,
            rel_tol: 1e-6,
            gradient: GradientMethod::FiniteDifference,
            fd_step_a: 1e-4,
            voltage_margin_v: 1e-3,
            conc_margin: 1e-5,
            soc_margin: 1e-6,
        }
    }
}

/// Per-electrode constants of the discretized dynamics.
#[derive(Debug, Clone)]
struct Side {
    e: ElectrodeParams,
    /// Flux per ampere of cell current, sign included.
    flux_per_a: f64,
    /// `Δr/(2D)`: surface offset per unit flux.
    half_gap: f64,
    outer_area: f64,
    w_over_tau: Vec<f64>,
    diag: Vec<f64>,
    off: Vec<f64>,
    grid: diffusion::ShellGrid,
}

impl Side {
    fn new(e: &ElectrodeParams, params: &SpmParams, tau_s: f64) -> Self {
        let grid = params.shell_grid(e.side);
        let (diag, off) = grid.implicit_matrix(e.diffusivity_m2_s, tau_s);
        let scale = e.radius_m / (3.0 * e.volume_m3 * e.active_fraction * params.faraday_c_mol);
        Self {
            e: e.clone(),
            flux_per_a: e.current_sign() * scale,
            half_gap: grid.dr / (2.0 * e.diffusivity_m2_s),
            outer_area: grid.face_areas[grid.n()],
            w_over_tau: grid.volumes.iter().map(|w| w / tau_s).collect(),
            diag,
            off,
            grid,
        }
    }

    fn diffuse(&self, conc: &[f64], flux: f64, tau_s: f64, scheme: DiffusionScheme) -> Vec<f64> {
        match scheme {
            DiffusionScheme::Implicit => {
                let mut rhs: Vec<f64> = conc.iter().zip(&self.w_over_tau).map(|(c, w)| w * c).collect();
                let n = rhs.len();
                rhs[n - 1] -= self.outer_area * flux;
                solve_symmetric_tridiagonal(&self.diag, &self.off, &rhs)
            }
            DiffusionScheme::Explicit => {
                diffusion::advance(&self.grid, conc, flux, self.e.diffusivity_m2_s, tau_s, scheme)
                    .expect("explicit stability is checked when the problem is built")
            }
        }
    }
}

/// Everything the reverse pass needs from one forward step.
#[derive(Debug, Clone)]
struct StepTape {
    current: f64,
    voltage: f64,
    pack_mw: f64,
    film_n: f64,
    /// `(dJ_sei/dJ_Li, dJ_sei/dc_s)` when the side reaction ran.
    split: Option<(f64, f64)>,
    cs_p: f64,
    cs_n: f64,
    eta_p: (f64, f64),
    eta_n: (f64, f64),
    ocp_slope_p: f64,
    ocp_slope_n: f64,
    conc_p: Vec<f64>,
    conc_n: Vec<f64>,
}

struct Forward {
    signals: Signals,
    penalty: f64,
    tape: Vec<StepTape>,
}

/// The penalized schedule-value function of a particle-model problem.
#[derive(Debug, Clone)]
pub struct PenaltyProblem {
    params: SpmParams,
    init: SpmState,
    degrade: bool,
    objective: Objective,
    grid: TimeGrid,
    pos: Side,
    neg: Side,
    sei: Option<SeiParams>,
    soc0: f64,
    margins: (f64, f64, f64),
    pub mu: f64,
}

fn hinge(x: f64) -> f64 {
    x.max(0.0)
}

impl PenaltyProblem {
    pub fn new(model: &Model, objective: &Objective, grid: TimeGrid, cfg: &PenaltyConfig) -> Result<Self> {
        check_problem(model, objective, grid)?;
        let Model::Spm { params, init, degrade } = model else {
            return Err(Error::Config("the gradient solver needs the particle model".into()));
        };
        if params.scheme == DiffusionScheme::Explicit {
            for e in [&params.pos, &params.neg] {
                let limit = params.shell_grid(e.side).explicit_step_limit(e.diffusivity_m2_s);
                if grid.tau_s > limit {
                    return Err(Error::Config(format!(
                        "explicit diffusion step {} s exceeds stability limit {limit:.3e} s",
                        grid.tau_s
                    )));
                }
            }
        }
        Ok(Self {
            pos: Side::new(&params.pos, params, grid.tau_s),
            neg: Side::new(&params.neg, params, grid.tau_s),
            sei: if *degrade { params.sei } else { None },
            soc0: spm_soc(init, params) / params.q_rated_ah,
            params: params.clone(),
            init: init.clone(),
            degrade: *degrade,
            objective: objective.clone(),
            grid,
            margins: (cfg.voltage_margin_v, cfg.conc_margin, cfg.soc_margin),
            mu: cfg.ladder.first().copied().unwrap_or(1e3),
        })
    }

    pub fn steps(&self) -> usize {
        self.grid.steps
    }

    /// Projects a current vector onto the charge/discharge limits.
    pub fn project(&self, u: &mut [f64]) {
        for x in u {
            *x = x.clamp(-self.params.i_max_ch_a, self.params.i_max_dis_a);
        }
    }

    fn soc_range(&self) -> f64 {
        self.neg.e.c_max_op_mol_m3 - self.neg.e.c_min_op_mol_m3
    }

    fn conc_bounds(&self, e: &ElectrodeParams) -> (f64, f64) {
        let m = self.margins.1 * e.c_max_mol_m3;
        (e.c_min_op_mol_m3 + m, e.c_max_op_mol_m3 - m)
    }

    /// `(penalty, d penalty / d x)` of one concentration.
    fn conc_penalty(&self, c: f64, e: &ElectrodeParams) -> (f64, f64) {
        let (lo, hi) = self.conc_bounds(e);
        let s = e.c_max_mol_m3;
        let (a, b) = (hinge(c - hi) / s, hinge(lo - c) / s);
        (a * a + b * b, 2.0 * (a - b) / s)
    }

    fn voltage_penalty(&self, v: f64) -> (f64, f64) {
        let m = self.margins.0;
        let (a, b) = (hinge(v - (self.params.v_max_v - m)), hinge(self.params.v_min_v + m - v));
        (a * a + b * b, 2.0 * (a - b))
    }

    fn terminal_penalty(&self, soc_t: f64) -> (f64, f64) {
        match self.objective.terminal() {
            Terminal::Free => (0.0, 0.0),
            Terminal::AtLeastInitial => {
                let gap = hinge(self.soc0 + self.margins.2 - soc_t);
                (gap * gap, -2.0 * gap)
            }
        }
    }

    /// SEI split with relaxed kinetics: `(J_Li, J_sei, dJ_sei/dJ_Li, dJ_sei/dc_s)`.
    fn split(&self, jn: f64, c_surf: f64, current: f64) -> (f64, f64, Option<(f64, f64)>) {
        let Some(sei) = self.sei.as_ref().filter(|s| current < 0.0 && s.j0_sei_a_m2 > 0.0) else {
            return (jn, 0.0, None);
        };
        let p = &self.params;
        let e = &self.neg.e;
        let theta = p.thermal_factor();
        let (ocp, ocp_slope) = e.ocp.eval_with_slope(c_surf / e.c_max_mol_m3);
        let side = |j_li: f64| {
            let (eta, eta_j, eta_c) = overpotential_relaxed(j_li, c_surf, e, p);
            let s = -(sei.j0_sei_a_m2 / p.faraday_c_mol) * (-(eta + ocp - sei.ocp_sei_v) / theta).exp();
            (s, eta_j, eta_c)
        };
        let mut j_li = jn;
        for _ in 0..50 {
            let next = jn - side(j_li).0;
            let done = (next - j_li).abs() <= 1e-14 * jn.abs();
            j_li = next;
            if done {
                break;
            }
        }
        let (s, eta_j, eta_c) = side(j_li);
        let g_j = -s / theta * eta_j;
        let g_c = -s / theta * (eta_c + ocp_slope / e.c_max_mol_m3);
        (jn - s, s, Some((g_j, g_c)))
    }

    fn forward(&self, u: &[f64]) -> Forward {
        let p = &self.params;
        let tau = self.grid.tau_s;
        let n = p.n_shells;
        let mut cp = self.init.conc_pos.clone();
        let mut cn = self.init.conc_neg.clone();
        let mut ledger = self.init.ledger;
        let area = self.neg.e.surface_area_m2();
        let inventory = self.neg.e.window_inventory_mol();
        let mut signals = Signals {
            pack_mw: Vec::with_capacity(u.len()),
            moved_mw: Vec::with_capacity(u.len()),
            soc: vec![self.soc0],
            capacity_loss: 0.0,
        };
        let mut penalty = 0.0;
        let mut tape = Vec::with_capacity(u.len());
        for &i in u {
            let jp = self.pos.flux_per_a * i;
            let jn = self.neg.flux_per_a * i;
            let cs_pre = cn[n - 1] - jn * self.neg.half_gap;
            let (j_li, j_sei, split) = self.split(jn, cs_pre, i);
            cp = self.pos.diffuse(&cp, jp, tau, p.scheme);
            cn = self.neg.diffuse(&cn, j_li, tau, p.scheme);
            if let Some(sei) = &self.sei {
                ledger.sei_thickness_m -= tau * j_sei * sei.molar_mass_kg_mol / sei.density_kg_m3;
                ledger.lithium_loss_mol -= tau * area * j_sei;
                ledger.capacity_loss = ledger.lithium_loss_mol / inventory;
                ledger.film_resistance_ohm = sei.z0_n_ohm + ledger.sei_thickness_m / (sei.conductivity_s_m * area);
            }
            let cs_p = cp[n - 1] - jp * self.pos.half_gap;
            let cs_n = cn[n - 1] - j_li * self.neg.half_gap;
            let (up, up_s) = self.pos.e.ocp.eval_with_slope(cs_p / self.pos.e.c_max_mol_m3);
            let (un, un_s) = self.neg.e.ocp.eval_with_slope(cs_n / self.neg.e.c_max_mol_m3);
            let (etp, etp_j, etp_c) = overpotential_relaxed(jp, cs_p, &self.pos.e, p);
            let (etn, etn_j, etn_c) = overpotential_relaxed(j_li, cs_n, &self.neg.e, p);
            let film_n = ledger.film_resistance_ohm;
            let v = (up + etp - i * self.pos.e.film_resistance_ohm) - (un + etn + i * film_n);
            let pack = p.n_cells as f64 * i * v / WATTS_PER_MEGAWATT;

            penalty += self.voltage_penalty(v).0;
            for (conc, cs, side) in [(&cp, cs_p, &self.pos), (&cn, cs_n, &self.neg)] {
                penalty += conc.iter().map(|&c| self.conc_penalty(c, &side.e).0).sum::<f64>();
                penalty += self.conc_penalty(cs, &side.e).0;
            }

            signals.pack_mw.push(pack);
            signals.moved_mw.push(pack.abs());
            signals.soc.push((cs_n - self.neg.e.c_min_op_mol_m3) / self.soc_range());
            tape.push(StepTape {
                current: i,
                voltage: v,
                pack_mw: pack,
                film_n,
                split,
                cs_p,
                cs_n,
                eta_p: (etp_j, etp_c),
                eta_n: (etn_j, etn_c),
                ocp_slope_p: up_s,
                ocp_slope_n: un_s,
                conc_p: cp.clone(),
                conc_n: cn.clone(),
            });
        }
        if self.degrade {
            signals.capacity_loss = ledger.capacity_loss;
        }
        penalty += self.terminal_penalty(signals.soc[signals.soc.len() - 1]).0;
        Forward {
            signals,
            penalty,
            tape,
        }
    }

    /// Penalized value `f(u) − μ·P(u)`.
    pub fn value(&self, u: &[f64]) -> f64 {
        let f = self.forward(u);
        self.objective.assess(&f.signals, self.grid.tau_hours(), false).0.value - self.mu * f.penalty
    }

    pub fn gradient_fd_forward(&self, u: &[f64], h: f64) -> Vec<f64> {
        let base = self.value(u);
        let mut x = u.to_vec();
        (0..u.len())
            .map(|k| {
                x[k] = u[k] + h;
                let up = self.value(&x);
                x[k] = u[k];
                (up - base) / h
            })
            .collect()
    }

    pub fn gradient_fd_central(&self, u: &[f64], h: f64) -> Vec<f64> {
        let mut x = u.to_vec();
        (0..u.len())
            .map(|k| {
                x[k] = u[k] + h;
                let up = self.value(&x);
                x[k] = u[k] - h;
                let dn = self.value(&x);
                x[k] = u[k];
                (up - dn) / (2.0 * h)
            })
            .collect()
    }

    /// Exact gradient of [`Self::value`] by a reverse sweep over the tape.
    pub fn gradient_adjoint(&self, u: &[f64]) -> Result<Vec<f64>> {
        if self.params.scheme != DiffusionScheme::Implicit {
            return Err(Error::Config("adjoint gradients need the implicit diffusion scheme".into()));
        }
        let p = &self.params;
        let tau = self.grid.tau_s;
        let n = p.n_shells;
        let mu = self.mu;
        let fw = self.forward(u);
        let (_, sens) = self.objective.assess(&fw.signals, self.grid.tau_hours(), true);
        let sens = sens.expect("sensitivities requested");
        let cells = p.n_cells as f64 / WATTS_PER_MEGAWATT;
        let (area, inventory) = (self.neg.e.surface_area_m2(), self.neg.e.window_inventory_mol());
        let (cmax_p, cmax_n) = (self.pos.e.c_max_mol_m3, self.neg.e.c_max_mol_m3);
        let steps = u.len();

        let mut lam_p = vec![0.0; n];
        let mut lam_n = vec![0.0; n];
        let mut lam_delta = 0.0;
        let mut grad = vec![0.0; steps];
        let mut d_soc = sens.d_soc.clone();
        d_soc[steps] -= mu * self.terminal_penalty(fw.signals.soc[steps]).1;

        for t in (0..steps).rev() {
            let s = &fw.tape[t];
            let i = s.current;
            let sign = if s.pack_mw > 0.0 {
                1.0
            } else if s.pack_mw < 0.0 {
                -1.0
            } else {
                0.0
            };
            let d_pack = sens.d_pack[t] + sens.d_moved[t] * sign;
            let g_v = d_pack * cells * i - mu * self.voltage_penalty(s.voltage).1;
            let mut g_i = d_pack * cells * s.voltage - g_v * (self.pos.e.film_resistance_ohm + s.film_n);

            let g_cs_p = g_v * (s.ocp_slope_p / cmax_p + s.eta_p.1) - mu * self.conc_penalty(s.cs_p, &self.pos.e).1;
            let g_cs_n = -g_v * (s.ocp_slope_n / cmax_n + s.eta_n.1) + d_soc[t + 1] / self.soc_range()
                - mu * self.conc_penalty(s.cs_n, &self.neg.e).1;
            let mut g_jp = g_v * s.eta_p.0 - self.pos.half_gap * g_cs_p;
            let mut g_jli = -g_v * s.eta_n.0 - self.neg.half_gap * g_cs_n;

            let mut g_jsei = 0.0;
            if let Some(sei) = &self.sei {
                let g_delta = lam_delta - g_v * i / (sei.conductivity_s_m * area);
                g_jsei = sens.d_loss * (-tau * area / inventory) - tau * sei.molar_mass_kg_mol / sei.density_kg_m3 * g_delta;
                lam_delta = g_delta;
            }

            let mut gc_p = lam_p.clone();
            let mut gc_n = lam_n.clone();
            for (g, &c) in gc_p.iter_mut().zip(&s.conc_p) {
                *g -= mu * self.conc_penalty(c, &self.pos.e).1;
            }
            for (g, &c) in gc_n.iter_mut().zip(&s.conc_n) {
                *g -= mu * self.conc_penalty(c, &self.neg.e).1;
            }
            gc_p[n - 1] += g_cs_p;
            gc_n[n - 1] += g_cs_n;

            let y_p = solve_symmetric_tridiagonal(&self.pos.diag, &self.pos.off, &gc_p);
            let y_n = solve_symmetric_tridiagonal(&self.neg.diag, &self.neg.off, &gc_n);
            lam_p = y_p.iter().zip(&self.pos.w_over_tau).map(|(y, w)| w * y).collect();
            lam_n = y_n.iter().zip(&self.neg.w_over_tau).map(|(y, w)| w * y).collect();
            g_jp -= self.pos.outer_area * y_p[n - 1];
            g_jli -= self.neg.outer_area * y_n[n - 1];

            let g_jn = match s.split {
                Some((g_j, g_c)) => {
                    let q = (g_jli - g_jsei) / (1.0 + g_j);
                    let g_cs_pre = -q * g_c;
                    lam_n[n - 1] += g_cs_pre;
                    g_jsei + q - self.neg.half_gap * g_cs_pre
                }
                None => g_jli,
            };
            g_i += self.pos.flux_per_a * g_jp + self.neg.flux_per_a * g_jn;
            grad[t] = g_i;
        }
        Ok(grad)
    }

    fn gradient(&self, u: &[f64], cfg: &PenaltyConfig) -> Result<Vec<f64>> {
        match cfg.gradient {
            GradientMethod::Adjoint => self.gradient_adjoint(u),
            GradientMethod::FiniteDifference => Ok(self.gradient_fd_central(u, cfg.fd_step_a)),
        }
    }
}

/// Counters from the ascent.
#[derive(Debug, Default)]
struct Progress {
    iterations: usize,
    evaluations: usize,
    converged: bool,
}

fn ascend(problem: &PenaltyProblem, u: &mut Vec<f64>, cfg: &PenaltyConfig, stats: &mut Progress) -> Result<()> {
    let i_max = problem.params.i_max_ch_a.max(problem.params.i_max_dis_a);
    let grad_cost = match cfg.gradient {
        GradientMethod::Adjoint => 1,
        GradientMethod::FiniteDifference => 2 * u.len(),
    };
    let mut f = problem.value(u);
    stats.evaluations += 1;
    let mut alpha: Option<f64> = None;
    stats.converged = false;
    for _ in 0..cfg.max_iter {
        stats.iterations += 1;
        let g = problem.gradient(u, cfg)?;
        stats.evaluations += grad_cost;
        let gmax = g.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
        if gmax == 0.0 || !gmax.is_finite() {
            stats.converged = gmax == 0.0;
            return Ok(());
        }
        let mut step = alpha.unwrap_or(0.1 * i_max / gmax);
        let mut accepted = None;
        for _ in 0..60 {
            let mut trial: Vec<f64> = u.iter().zip(&g).map(|(x, d)| x + step * d).collect();
            problem.project(&mut trial);
            let rise: f64 = trial.iter().zip(u.iter()).zip(&g).map(|((a, b), d)| (a - b) * d).sum();
            let ft = problem.value(&trial);
            stats.evaluations += 1;
            if ft.is_finite() && ft >= f + 1e-4 * rise && rise > 0.0 {
                accepted = Some((trial, ft));
                break;
            }
            step *= 0.5;
        }
        let Some((trial, ft)) = accepted else {
            stats.converged = true;
            return Ok(());
        };
        let gain = ft - f;
        *u = trial;
        f = ft;
        alpha = Some(step * 2.0);
        if gain <= cfg.rel_tol * f.abs().max(1.0) {
            stats.converged = true;
            return Ok(());
        }
    }
    Ok(())
}

/// Penalty-ladder gradient ascent for the particle model.
pub fn gradient_solve(
    model: &Model,
    objective: &Objective,
    grid: TimeGrid,
    cfg: &PenaltyConfig,
) -> Result<SolveReport> {
    if cfg.ladder.is_empty() || cfg.ladder.iter().any(|m| !(*m > 0.0)) {
        return Err(Error::Validation("penalty ladder needs positive weights".into()));
    }
    let mut problem = PenaltyProblem::new(model, objective, grid, cfg)?;
    if cfg.gradient == GradientMethod::Adjoint && problem.params.scheme != DiffusionScheme::Implicit {
        return Err(Error::Config("adjoint gradients need the implicit diffusion scheme".into()));
    }
    let mut u = vec![0.0; grid.steps];
    let mut stats = Progress::default();
    for &mu in &cfg.ladder {
        problem.mu = mu;
        ascend(&problem, &mut u, cfg, &mut stats)?;
    }

    // Shrink toward the zero schedule until the exact model accepts it.
    let mut best: Option<(f64, f64, Schedule)> = None;
    for alpha in [1.0, 0.999, 0.99, 0.98, 0.95, 0.9, 0.8, 0.6, 0.4, 0.2, 0.0] {
        let scaled: Vec<f64> = u.iter().map(|x| alpha * x).collect();
        let schedule = Schedule::Current(CurrentSchedule::new(grid, scaled)?);
        let Ok((b, trace)) = evaluate_breakdown(model, &schedule, objective) else {
            continue;
        };
        if objective.terminal_ok(&trace.soc_profile()) && best.as_ref().is_none_or(|x| b.value > x.1) {
            best = Some((alpha, b.value, schedule));
        }
    }
    let Some((alpha, _, schedule)) = best else {
        return Err(Error::SolverFailure(
            "no scaling of the penalty solution replays on the exact model".into(),
        ));
    };
    let mut notes = vec![format!("gradient: {:?}", cfg.gradient)];
    if alpha < 1.0 {
        notes.push(format!("penalty solution scaled by {alpha} to satisfy the exact model"));
    }
    let diagnostics = Diagnostics {
        solver: "gradient".into(),
        iterations: stats.iterations,
        evaluations: stats.evaluations,
        grid_sizes: vec![problem.params.n_shells],
        converged: stats.converged,
        notes,
    };
    SolveReport::certify(model, objective, schedule, diagnostics)
}
