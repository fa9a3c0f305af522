//! Backward-induction dynamic programming over a discretized state space.
//!
//! Stage rewards must be additive, so the rainflow price is handled by a
//! local search around the DP rollout and peak shaving by enumerating caps
//! on the net load.

use serde::{Deserialize, Serialize};

use crate::ecm::{ecm_step, EcmParams, EcmState};
use crate::erm::{erm_step, ErmParams, ErmState};
use crate::error::{Error, Result};
use crate::grid::{TimeGrid, WATTS_PER_MEGAWATT};

use super::{
    check_problem, evaluate_breakdown, DegradationPricing, Diagnostics, Model, Objective, SolveReport, Terminal,
    TERMINAL_TOL,
};

/// State discretization for the reservoir model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ErmGrid {
    /// Every SoE reachable from the initial state under the control
    /// levels; exact for lattice controls.
    Reachable,
    /// Evenly spaced SoE nodes with linear interpolation.
    Uniform { points: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DpConfig {
    /// Net control levels: MW for the reservoir model, A for the circuit.
    pub levels: Vec<f64>,
    pub erm_grid: ErmGrid,
    pub ecm_soc_points: usize,
    pub ecm_vd_points: usize,
    /// Cap candidates tried for circuit-model peak shaving.
    pub peak_caps: usize,
    /// Passes of single-interval local search used with rainflow pricing.
    pub local_search_passes: usize,
}

impl Default for DpConfig {
    fn default() -> Self {
        Self {
            levels: vec![-1.0, -0.5, 0.0, 0.5, 1.0],
            erm_grid: ErmGrid::Reachable,
            ecm_soc_points: 41,
            ecm_vd_points: 9,
            peak_caps: 24,
            local_search_passes: 10,
        }
    }
}

/// Stage reward for `(t, pack_mw, moved_mw)`; `None` marks a forbidden
/// transition.
type Reward<'a> = dyn Fn(usize, f64, f64) -> Option<f64> + 'a;

/// Ranks two candidate moves: higher value first, then lower next state.
fn better(value: f64, next: f64, best: Option<(f64, f64)>) -> bool {
    match best {
        None => value > f64::NEG_INFINITY,
        Some((bv, bn)) => {
            let tol = 1e-12 * bv.abs().max(1.0);
            value > bv + tol || (value >= bv - tol && next < bn)
        }
    }
}

fn interp_1d(nodes: &[f64], values: &[f64], x: f64) -> f64 {
    let n = nodes.len();
    if n == 1 {
        return values[0];
    }
    let h = nodes[1] - nodes[0];
    let pos = ((x - nodes[0]) / h).clamp(0.0, (n - 1) as f64);
    let i = (pos.floor() as usize).min(n - 2);
    let w = pos - i as f64;
    blend(&[(values[i], 1.0 - w), (values[i + 1], w)])
}

/// Weighted average over finite corners; unreachable corners are dropped
/// and the rest renormalized.
fn blend(corners: &[(f64, f64)]) -> f64 {
    let (mut acc, mut wsum) = (0.0, 0.0);
    for &(v, w) in corners {
        if w > 0.0 && v.is_finite() {
            acc += v * w;
            wsum += w;
        }
    }
    if wsum > 0.0 {
        acc / wsum
    } else {
        f64::NEG_INFINITY
    }
}

struct ErmDp<'a> {
    params: &'a ErmParams,
    init: ErmState,
    grid: TimeGrid,
    levels: &'a [f64],
    terminal: Terminal,
    mode: ErmGrid,
}

struct ErmTables {
    states: Vec<Vec<f64>>,
    values: Vec<Vec<f64>>,
    tol: f64,
}

impl ErmDp<'_> {
    fn step(&self, soe: f64, level: f64) -> Option<(f64, f64, f64)> {
        let (ch, dis) = (level.min(0.0).abs(), level.max(0.0));
        erm_step(&ErmState { soe_mwh: soe }, ch, dis, self.params, self.grid.tau_s)
            .ok()
            .map(|s| (s.soe_mwh, dis - ch, ch + dis))
    }

    fn terminal_value(&self, soe: f64) -> f64 {
        match self.terminal {
            Terminal::Free => 0.0,
            Terminal::AtLeastInitial => {
                let e = self.params.e_max_mwh;
                if soe / e >= self.init.soe_mwh / e - TERMINAL_TOL {
                    0.0
                } else {
                    f64::NEG_INFINITY
                }
            }
        }
    }

    fn build_states(&self) -> Vec<Vec<f64>> {
        let steps = self.grid.steps;
        match self.mode {
            ErmGrid::Uniform { points } => {
                let n = points.max(2);
                let nodes: Vec<f64> = (0..n)
                    .map(|i| self.params.e_max_mwh * i as f64 / (n - 1) as f64)
                    .collect();
                let mut states = vec![nodes; steps + 1];
                states[0] = vec![self.init.soe_mwh];
                states
            }
            ErmGrid::Reachable => {
                let tol = self.dedup_tol();
                let mut states = vec![vec![self.init.soe_mwh]];
                for _ in 0..steps {
                    let mut next: Vec<f64> = states
                        .last()
                        .unwrap()
                        .iter()
                        .flat_map(|&s| self.levels.iter().filter_map(move |&l| self.step(s, l).map(|r| r.0)))
                        .collect();
                    next.sort_by(f64::total_cmp);
                    next.dedup_by(|b, a| (*b - *a).abs() <= tol);
                    states.push(next);
                }
                states
            }
        }
    }

    fn dedup_tol(&self) -> f64 {
        1e-12 * self.params.e_max_mwh
    }

    fn lookup(&self, tables: &ErmTables, t: usize, soe: f64) -> f64 {
        if t == self.grid.steps {
            return self.terminal_value(soe);
        }
        let nodes = &tables.states[t];
        let vals = &tables.values[t];
        match self.mode {
            ErmGrid::Uniform { .. } => interp_1d(nodes, vals, soe),
            ErmGrid::Reachable => {
                let i = nodes.partition_point(|&x| x < soe - tables.tol);
                match nodes.get(i) {
                    Some(&x) if (x - soe).abs() <= tables.tol => vals[i],
                    _ => f64::NEG_INFINITY,
                }
            }
        }
    }

    fn tables(&self, reward: &Reward<'_>) -> ErmTables {
        let states = self.build_states();
        let steps = self.grid.steps;
        let mut tables = ErmTables {
            values: states.iter().map(|s| vec![f64::NEG_INFINITY; s.len()]).collect(),
            states,
            tol: self.dedup_tol(),
        };
        for t in (1..steps).rev() {
            let row: Vec<f64> = tables.states[t]
                .iter()
                .map(|&s| self.best_move(&tables, reward, t, s).map_or(f64::NEG_INFINITY, |m| m.1))
                .collect();
            tables.values[t] = row;
        }
        tables
    }

    /// Best level at `(t, soe)`: `(level index, value, next soe)`.
    fn best_move(&self, tables: &ErmTables, reward: &Reward<'_>, t: usize, soe: f64) -> Option<(usize, f64, f64)> {
        let mut best: Option<(usize, f64, f64)> = None;
        for (j, &l) in self.levels.iter().enumerate() {
            let Some((next, pack, moved)) = self.step(soe, l) else {
                continue;
            };
            let Some(r) = reward(t, pack, moved) else {
                continue;
            };
            let v = r + self.lookup(tables, t + 1, next);
            if better(v, next, best.map(|b| (b.1, b.2))) {
                best = Some((j, v, next));
            }
        }
        best
    }

    /// Solves and rolls the policy out from the true initial state.
    fn solve(&self, reward: &Reward<'_>) -> Option<(Vec<f64>, f64, usize)> {
        let tables = self.tables(reward);
        let mut soe = self.init.soe_mwh;
        let mut net = Vec::with_capacity(self.grid.steps);
        let mut total = None;
        for t in 0..self.grid.steps {
            let (j, v, next) = self.best_move(&tables, reward, t, soe)?;
            if t == 0 {
                total = Some(v);
            }
            net.push(self.levels[j]);
            soe = next;
        }
        let width = tables.states.iter().map(Vec::len).max().unwrap_or(0);
        Some((net, total.unwrap_or(0.0), width))
    }
}

struct EcmDp<'a> {
    params: &'a EcmParams,
    init: EcmState,
    grid: TimeGrid,
    levels: &'a [f64],
    terminal: Terminal,
    soc_nodes: Vec<f64>,
    vd_nodes: Vec<f64>,
}

impl<'a> EcmDp<'a> {
    fn new(
        params: &'a EcmParams,
        init: EcmState,
        grid: TimeGrid,
        levels: &'a [f64],
        terminal: Terminal,
        cfg: &DpConfig,
    ) -> Self {
        let ns = cfg.ecm_soc_points.max(2);
        let soc_nodes = (0..ns).map(|i| params.q_max_ah * i as f64 / (ns - 1) as f64).collect();
        let lo = -params.rd_ohm * params.i_max_ch_a;
        let hi = params.rd_ohm * params.i_max_dis_a;
        let nv = if hi > lo { cfg.ecm_vd_points.max(2) } else { 1 };
        let vd_nodes = if nv == 1 {
            vec![0.0]
        } else {
            (0..nv).map(|j| lo + (hi - lo) * j as f64 / (nv - 1) as f64).collect()
        };
        Self {
            params,
            init,
            grid,
            levels,
            terminal,
            soc_nodes,
            vd_nodes,
        }
    }

    fn step(&self, s: &EcmState, level: f64) -> Option<(EcmState, f64)> {
        ecm_step(s, level, self.params, self.grid.tau_s).ok().map(|(n, v)| {
            let pack = self.params.n_cells as f64 * level * v / WATTS_PER_MEGAWATT;
            (n, pack)
        })
    }

    fn lookup(&self, values: &[Vec<f64>], t: usize, s: &EcmState) -> f64 {
        if t == self.grid.steps {
            return match self.terminal {
                Terminal::Free => 0.0,
                Terminal::AtLeastInitial => {
                    let q = self.params.q_max_ah;
                    if s.soc_ah / q >= self.init.soc_ah / q - TERMINAL_TOL {
                        0.0
                    } else {
                        f64::NEG_INFINITY
                    }
                }
            };
        }
        let v = &values[t];
        let nv = self.vd_nodes.len();
        let locate = |nodes: &[f64], x: f64| -> (usize, f64) {
            if nodes.len() == 1 {
                return (0, 0.0);
            }
            let h = nodes[1] - nodes[0];
            let pos = ((x - nodes[0]) / h).clamp(0.0, (nodes.len() - 1) as f64);
            let i = (pos.floor() as usize).min(nodes.len() - 2);
            (i, pos - i as f64)
        };
        let (i, wi) = locate(&self.soc_nodes, s.soc_ah);
        let (j, wj) = locate(&self.vd_nodes, s.v_d);
        let at = |a: usize, b: usize| v[a * nv + b];
        if nv == 1 {
            return blend(&[(at(i, 0), 1.0 - wi), (at(i + 1, 0), wi)]);
        }
        blend(&[
            (at(i, j), (1.0 - wi) * (1.0 - wj)),
            (at(i + 1, j), wi * (1.0 - wj)),
            (at(i, j + 1), (1.0 - wi) * wj),
            (at(i + 1, j + 1), wi * wj),
        ])
    }

    fn best_move(
        &self,
        values: &[Vec<f64>],
        reward: &Reward<'_>,
        t: usize,
        s: &EcmState,
    ) -> Option<(usize, f64, EcmState)> {
        let mut best: Option<(usize, f64, EcmState)> = None;
        for (k, &l) in self.levels.iter().enumerate() {
            let Some((next, pack)) = self.step(s, l) else {
                continue;
            };
            let Some(r) = reward(t, pack, pack.abs()) else {
                continue;
            };
            let v = r + self.lookup(values, t + 1, &next);
            if better(v, next.soc_ah, best.map(|b| (b.1, b.2.soc_ah))) {
                best = Some((k, v, next));
            }
        }
        best
    }

    fn solve(&self, reward: &Reward<'_>) -> Option<(Vec<f64>, f64, usize)> {
        let steps = self.grid.steps;
        let nv = self.vd_nodes.len();
        let mut values = vec![Vec::new(); steps];
        for t in (1..steps).rev() {
            let mut row = vec![f64::NEG_INFINITY; self.soc_nodes.len() * nv];
            for (i, &soc_ah) in self.soc_nodes.iter().enumerate() {
                for (j, &v_d) in self.vd_nodes.iter().enumerate() {
                    let s = EcmState { soc_ah, v_d };
                    if let Some(m) = self.best_move(&values, reward, t, &s) {
                        row[i * nv + j] = m.1;
                    }
                }
            }
            values[t] = row;
        }
        let mut s = self.init;
        let mut net = Vec::with_capacity(steps);
        let mut total = None;
        for t in 0..steps {
            let (k, v, next) = self.best_move(&values, reward, t, &s)?;
            if !v.is_finite() {
                return None;
            }
            if t == 0 {
                total = Some(v);
            }
            net.push(self.levels[k]);
            s = next;
        }
        Some((net, total.unwrap_or(0.0), self.soc_nodes.len() * nv))
    }
}

/// Grid dynamic programming for the reservoir and circuit models.
pub fn dp_solve(model: &Model, objective: &Objective, grid: TimeGrid, cfg: &DpConfig) -> Result<SolveReport> {
    check_problem(model, objective, grid)?;
    if cfg.levels.is_empty() {
        return Err(Error::Validation("need at least one control level".into()));
    }
    let prices = &objective.prices().prices;
    let tau_h = grid.tau_hours();
    let terminal = objective.terminal();

    let run = |reward: &Reward<'_>| -> Result<Option<(Vec<f64>, f64, usize)>> {
        Ok(match model {
            Model::Erm { params, init } => ErmDp {
                params,
                init: *init,
                grid,
                levels: &cfg.levels,
                terminal,
                mode: cfg.erm_grid,
            }
            .solve(reward),
            Model::Ecm { params, init } => EcmDp::new(params, *init, grid, &cfg.levels, terminal, cfg).solve(reward),
            Model::Spm { .. } => {
                return Err(Error::Config(
                    "dynamic programming supports the reservoir and circuit models; use the gradient solver".into(),
                ))
            }
        })
    };

    let mut notes = Vec::new();
    let mut iterations = 1;
    let (net, width) = match objective {
        Objective::Arbitrage(a) => {
            let through_price = match a.pricing {
                DegradationPricing::Throughput(m) => {
                    a.degradation_weight * a.replacement_cost / a.eol_fraction * m.loss_rate()
                }
                _ => 0.0,
            };
            let reward = |t: usize, pack: f64, moved: f64| Some((prices[t] * pack - through_price * moved) * tau_h);
            let (net, _, width) = run(&reward)?.ok_or_else(no_policy)?;
            (net, width)
        }
        Objective::PeakShaving(p) => {
            let caps = peak_caps(model, p.load_mw.as_slice(), &cfg.levels, cfg.peak_caps);
            iterations = caps.len();
            let mut best: Option<(f64, Vec<f64>, usize)> = None;
            for cap in caps {
                let reward = |t: usize, pack: f64, _moved: f64| {
                    (p.load_mw[t] - pack <= cap + 1e-12 * cap.abs().max(1.0)).then(|| prices[t] * pack * tau_h)
                };
                if let Some((net, v, width)) = run(&reward)? {
                    let total = v - p.demand_charge * cap.max(0.0);
                    if best.as_ref().is_none_or(|b| total > b.0) {
                        best = Some((total, net, width));
                    }
                }
            }
            let (_, net, width) = best.ok_or_else(no_policy)?;
            notes.push(format!("peak shaving solved over {iterations} net-load caps"));
            (net, width)
        }
    };

    let mut schedule = model.schedule_from_net(grid, &net)?;
    if let DegradationPricing::Rainflow(_) = objective.pricing() {
        let (improved, passes) = local_search(model, objective, grid, &cfg.levels, net, cfg.local_search_passes)?;
        schedule = model.schedule_from_net(grid, &improved)?;
        notes.push(format!(
            "rainflow cost applied by local search around the DP rollout ({passes} passes); heuristic"
        ));
    }
    let diagnostics = Diagnostics {
        solver: "dp".into(),
        iterations,
        evaluations: 0,
        grid_sizes: match model {
            Model::Ecm { .. } => vec![cfg.ecm_soc_points, cfg.ecm_vd_points],
            _ => vec![width],
        },
        converged: true,
        notes,
    };
    SolveReport::certify(model, objective, schedule, diagnostics)
}

fn no_policy() -> Error {
    Error::SolverFailure("state grid too coarse: no feasible policy found".into())
}

/// Candidate caps on the net load. Exact for the reservoir model, where
/// pack power is the control itself; evenly spaced otherwise.
fn peak_caps(model: &Model, load: &[f64], levels: &[f64], count: usize) -> Vec<f64> {
    let mut caps: Vec<f64> = match model {
        Model::Erm { .. } => load.iter().flat_map(|l| levels.iter().map(move |p| l - p)).collect(),
        Model::Ecm { params, .. } => {
            let n = params.n_cells as f64 / WATTS_PER_MEGAWATT;
            let p_dis = n * params.i_max_dis_a * params.v_max_v;
            let p_ch = n * params.i_max_ch_a * params.v_max_v;
            let top = load.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let (lo, hi) = (top - p_dis, top + p_ch);
            let k = count.max(2);
            (0..k).map(|i| lo + (hi - lo) * i as f64 / (k - 1) as f64).collect()
        }
        Model::Spm { .. } => Vec::new(),
    };
    let floor = load
        .iter()
        .map(|l| l - levels.iter().copied().fold(f64::NEG_INFINITY, f64::max))
        .fold(f64::NEG_INFINITY, f64::max);
    caps.retain(|&c| c >= floor - 1e-12);
    caps.sort_by(f64::total_cmp);
    caps.dedup_by(|b, a| (*b - *a).abs() <= 1e-12 * a.abs().max(1.0));
    caps
}

/// Single-interval coordinate search on the full objective.
fn local_search(
    model: &Model,
    objective: &Objective,
    grid: TimeGrid,
    levels: &[f64],
    mut net: Vec<f64>,
    passes: usize,
) -> Result<(Vec<f64>, usize)> {
    let score = |net: &[f64]| -> Option<f64> {
        let schedule = model.schedule_from_net(grid, net).ok()?;
        let (b, trace) = evaluate_breakdown(model, &schedule, objective).ok()?;
        objective.terminal_ok(&trace.soc_profile()).then_some(b.value)
    };
    let mut best = score(&net).ok_or_else(no_policy)?;
    let mut done = 0;
    for _ in 0..passes {
        done += 1;
        let mut improved = false;
        for t in 0..net.len() {
            let keep = net[t];
            for &l in levels {
                if l == keep {
                    continue;
                }
                net[t] = l;
                match score(&net) {
                    Some(v) if v > best + 1e-12 * best.abs().max(1.0) => {
                        best = v;
                        improved = true;
                    }
                    _ => net[t] = keep,
                }
                if net[t] != l {
                    continue;
                }
                break;
            }
        }
        if !improved {
            break;
        }
    }
    Ok((net, done))
}
