use serde::{Deserialize, Serialize};

use crate::grid::TimeGrid;

/// Model-specific state captured in a trace record.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "lowercase")]
pub enum StateSnapshot {
    Erm {
        soe_mwh: f64,
    },
    Ecm {
        soc_ah: f64,
        v_d: f64,
    },
    Spm {
        c_surf_pos: f64,
        c_surf_neg: f64,
        c_avg_pos: f64,
        c_avg_neg: f64,
        sei_thickness_m: f64,
        film_resistance_ohm: f64,
        lithium_loss_mol: f64,
    },
}

/// Control applied over the interval that ends at a record.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum AppliedControl {
    Power { ch_mw: f64, dis_mw: f64 },
    Current { current_a: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    /// 0 is the initial state; record `k` closes interval `k - 1`.
    pub step: usize,
    pub state: StateSnapshot,
    pub control: Option<AppliedControl>,
    pub soc_fraction: f64,
    pub voltage_v: Option<f64>,
    pub cell_power_w: Option<f64>,
    pub pack_power_mw: f64,
    pub throughput_mwh: f64,
    pub capacity_loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trace {
    pub grid: TimeGrid,
    pub records: Vec<TraceRecord>,
}

impl Trace {
    pub fn new(grid: TimeGrid, initial: StateSnapshot, soc_fraction: f64) -> Self {
        let mut records = Vec::with_capacity(grid.steps + 1);
        records.push(TraceRecord {
            step: 0,
            state: initial,
            control: None,
            soc_fraction,
            voltage_v: None,
            cell_power_w: None,
            pack_power_mw: 0.0,
            throughput_mwh: 0.0,
            capacity_loss: 0.0,
        });
        Self { grid, records }
    }

    /// Appends the record for the next interval, accumulating throughput
    /// from `moved_mw` (energy moved across the pack terminals).
    #[allow(clippy::too_many_arguments)]
    pub(crate) fn push(
        &mut self,
        state: StateSnapshot,
        control: AppliedControl,
        soc_fraction: f64,
        voltage_v: Option<f64>,
        cell_power_w: Option<f64>,
        pack_power_mw: f64,
        moved_mw: f64,
        capacity_loss: Option<f64>,
    ) {
        let last = self.records.last().expect("trace always holds the initial record");
        let throughput_mwh = last.throughput_mwh + moved_mw * self.grid.tau_hours();
        let capacity_loss = capacity_loss.unwrap_or(last.capacity_loss);
        let step = last.step + 1;
        self.records.push(TraceRecord {
            step,
            state,
            control: Some(control),
            soc_fraction,
            voltage_v,
            cell_power_w,
            pack_power_mw,
            throughput_mwh,
            capacity_loss,
        });
    }

    pub fn initial(&self) -> &TraceRecord {
        &self.records[0]
    }

    pub fn last(&self) -> &TraceRecord {
        self.records.last().expect("trace always holds the initial record")
    }

    /// Records after the initial one, one per interval.
    pub fn steps(&self) -> &[TraceRecord] {
        &self.records[1..]
    }

    pub fn total_throughput_mwh(&self) -> f64 {
        self.last().throughput_mwh
    }

    pub fn pack_power_mw(&self) -> Vec<f64> {
        self.steps().iter().map(|r| r.pack_power_mw).collect()
    }

    pub fn soc_profile(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.soc_fraction).collect()
    }

    pub fn voltages(&self) -> Vec<f64> {
        self.steps().iter().filter_map(|r| r.voltage_v).collect()
    }
}
