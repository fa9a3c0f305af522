use crate::error::{Error, Result};
use crate::grid::TimeGrid;

use super::{check_problem, CellState, Diagnostics, Model, Objective, Signals, SolveReport};

/// Largest number of control sequences enumerated by default.
pub const DEFAULT_BRUTE_FORCE_CAP: u64 = 10_000_000;

struct Search<'a> {
    model: &'a Model,
    objective: &'a Objective,
    levels: &'a [f64],
    tau_s: f64,
    tau_h: f64,
    path: Vec<usize>,
    signals: Signals,
    best: Option<(f64, Vec<usize>)>,
    leaves: usize,
}

impl Search<'_> {
    fn descend(&mut self, state: &CellState, t: usize, steps: usize) {
        if t == steps {
            self.leaves += 1;
            if !self.objective.terminal_ok(&self.signals.soc) {
                return;
            }
            let value = self.objective.assess(&self.signals, self.tau_h, false).0.value;
            if self.best.as_ref().is_none_or(|(b, _)| value > *b) {
                self.best = Some((value, self.path.clone()));
            }
            return;
        }
        for (j, &level) in self.levels.iter().enumerate() {
            let Ok(out) = self.model.step_level(state, level, self.tau_s) else {
                continue;
            };
            let loss_before = self.signals.capacity_loss;
            self.path.push(j);
            self.signals.pack_mw.push(out.pack_mw);
            self.signals.moved_mw.push(out.moved_mw);
            self.signals.soc.push(out.soc);
            if let Some(l) = out.capacity_loss {
                self.signals.capacity_loss = l;
            }
            self.descend(&out.state, t + 1, steps);
            self.signals.capacity_loss = loss_before;
            self.signals.soc.pop();
            self.signals.moved_mw.pop();
            self.signals.pack_mw.pop();
            self.path.pop();
        }
    }
}

/// Exhaustive optimum over every sequence of `levels` (MW for the
/// reservoir model, A otherwise). Infeasible prefixes are pruned.
pub fn brute_force(
    model: &Model,
    objective: &Objective,
    levels: &[f64],
    grid: TimeGrid,
    cap: Option<u64>,
) -> Result<SolveReport> {
    check_problem(model, objective, grid)?;
    if levels.is_empty() {
        return Err(Error::Validation("need at least one control level".into()));
    }
    let cap = cap.unwrap_or(DEFAULT_BRUTE_FORCE_CAP);
    let count = (levels.len() as f64).powi(grid.steps as i32);
    if count > cap as f64 {
        return Err(Error::Size(format!(
            "{} levels over {} steps is {count:.3e} sequences, above the cap of {cap}",
            levels.len(),
            grid.steps
        )));
    }
    let init = model.initial_state();
    let mut search = Search {
        model,
        objective,
        levels,
        tau_s: grid.tau_s,
        tau_h: grid.tau_hours(),
        path: Vec::with_capacity(grid.steps),
        signals: Signals {
            pack_mw: Vec::new(),
            moved_mw: Vec::new(),
            soc: vec![model.soc_of(&init)],
            capacity_loss: 0.0,
        },
        best: None,
        leaves: 0,
    };
    search.descend(&init, 0, grid.steps);
    let Some((_, path)) = search.best else {
        return Err(Error::SolverFailure("no feasible control sequence on the lattice".into()));
    };
    let net: Vec<f64> = path.iter().map(|&j| levels[j]).collect();
    let schedule = model.schedule_from_net(grid, &net)?;
    let diagnostics = Diagnostics {
        solver: "brute_force".into(),
        iterations: 1,
        evaluations: search.leaves,
        grid_sizes: vec![levels.len()],
        converged: true,
        notes: Vec::new(),
    };
    SolveReport::certify(model, objective, schedule, diagnostics)
}
