//! Capacity-fade accounting: energy throughput, rainflow cycle counting and
//! SEI film growth, plus conversion of fade into money.

mod rainflow;
mod sei;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::trace::Trace;

pub(crate) use rainflow::cycle_fade_gradient;
pub use rainflow::{cycle_fade, rainflow_cycles, reversals, Cycle, StressFunction};
pub use sei::{
    sei_flux, sei_overpotential, sei_split, sei_update, DegradationLedger, SeiParams, SeiSplit, SeiSplitInput,
};

/// Capacity-loss fraction at which a battery is considered spent.
pub const DEFAULT_EOL_FRACTION: f64 = 0.20;

fn default_eol() -> f64 {
    DEFAULT_EOL_FRACTION
}

/// Linear fade against delivered energy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThroughputModel {
    pub lifetime_throughput_mwh: f64,
    #[serde(default = "default_eol")]
    pub eol_fraction: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Fade {
    pub loss: f64,
    pub end_of_life: bool,
}

impl ThroughputModel {
    pub fn new(lifetime_throughput_mwh: f64, eol_fraction: f64) -> Result<Self> {
        let m = Self {
            lifetime_throughput_mwh,
            eol_fraction,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lifetime_throughput_mwh > 0.0 && self.lifetime_throughput_mwh.is_finite()) {
            return Err(Error::Validation("lifetime throughput must be positive".into()));
        }
        check_eol(self.eol_fraction)
    }

    /// Loss per MWh of throughput.
    pub fn loss_rate(&self) -> f64 {
        self.eol_fraction / self.lifetime_throughput_mwh
    }

    pub fn fade(&self, throughput_mwh: f64) -> Fade {
        let loss = self.loss_rate() * throughput_mwh;
        Fade {
            loss,
            end_of_life: loss >= self.eol_fraction,
        }
    }
}

pub(crate) fn check_eol(eol: f64) -> Result<()> {
    if !(eol > 0.0 && eol < 1.0) {
        return Err(Error::Validation(format!("end-of-life fraction {eol} outside (0, 1)")));
    }
    Ok(())
}

pub fn throughput_fade(trace: &Trace, model: &ThroughputModel) -> Fade {
    model.fade(trace.total_throughput_mwh())
}

/// Money value of a capacity loss, pricing a full replacement at EoL.
pub fn degradation_cost(loss: f64, replacement_cost: f64, eol_fraction: f64) -> f64 {
    replacement_cost * loss / eol_fraction
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::erm::{erm_simulate, ErmParams, ErmState};
    use crate::grid::{PowerSchedule, TimeGrid};

    #[test]
    fn throughput_examples() {
        let m = ThroughputModel::new(1000.0, 0.2).unwrap();
        assert_eq!(m.fade(0.0).loss, 0.0);
        let full = m.fade(1000.0);
        assert!((full.loss - 0.2).abs() < 1e-15);
        assert!(full.end_of_life);
        let half = m.fade(500.0);
        assert!((half.loss - 0.1).abs() < 1e-15);
        assert!(!half.end_of_life);
    }

    #[test]
    fn throughput_model_validation() {
        assert!(ThroughputModel::new(0.0, 0.2).is_err());
        assert!(ThroughputModel::new(10.0, 1.0).is_err());
        assert!(ThroughputModel::new(10.0, 0.0).is_err());
    }

    #[test]
    fn cost_examples() {
        assert_eq!(degradation_cost(0.0, 1e6, 0.2), 0.0);
        assert!((degradation_cost(0.2, 1e6, 0.2) - 1e6).abs() < 1e-6);
        let a = degradation_cost(0.05, 7e5, 0.2);
        let b = degradation_cost(0.1, 7e5, 0.2);
        assert!((2.0 * a - b).abs() < 1e-9);
    }

    #[test]
    fn throughput_fade_ignores_ordering() {
        let p = ErmParams {
            eta_ch: 0.95,
            eta_dis: 0.95,
            e_max_mwh: 4.0,
            p_ch_max_mw: 1.0,
            p_dis_max_mw: 1.0,
            limit_curve: None,
        };
        let grid = TimeGrid::from_epoch(3600.0, 4).unwrap();
        let model = ThroughputModel::new(100.0, 0.2).unwrap();
        let a = PowerSchedule::from_net(grid, &[-1.0, 0.5, -1.0, 0.5]).unwrap();
        let b = PowerSchedule::from_net(grid, &[-1.0, -1.0, 0.5, 0.5]).unwrap();
        let init = ErmState::new(0.5, &p).unwrap();
        let fa = throughput_fade(&erm_simulate(&a, &init, &p).unwrap(), &model);
        let fb = throughput_fade(&erm_simulate(&b, &init, &p).unwrap(), &model);
        assert!((fa.loss - fb.loss).abs() < 1e-15);
        assert!((fa.loss - 0.2 * 3.0 / 100.0).abs() < 1e-15);
    }
}
