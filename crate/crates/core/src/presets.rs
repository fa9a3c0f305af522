//! Built-in synthetic parameter set: a 5 Ah graphite/NMC-like cell and a
//! 100 000-cell pack, with matching reservoir and circuit descriptions.
//! Not fitted to any commercial cell.

use serde::{Deserialize, Serialize};

use crate::degradation::{StressFunction, ThroughputModel, DEFAULT_EOL_FRACTION};
use crate::ecm::EcmParams;
use crate::erm::ErmParams;
use crate::error::{Error, Result};
use crate::spm::SpmParams;

const DEMO_PARAMS_JSON: &str = include_str!("../data/demo_params.json");

fn default_eol() -> f64 {
    DEFAULT_EOL_FRACTION
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DegradationParams {
    #[serde(default)]
    pub stress: StressFunction,
    pub throughput: ThroughputModel,
    pub replacement_cost_usd: f64,
    #[serde(default = "default_eol")]
    pub eol_fraction: f64,
}

impl DegradationParams {
    pub fn validate(&self) -> Result<()> {
        self.stress.validate()?;
        self.throughput.validate()?;
        crate::degradation::check_eol(self.eol_fraction)?;
        if !(self.replacement_cost_usd >= 0.0 && self.replacement_cost_usd.is_finite()) {
            return Err(Error::Validation("replacement cost must be nonnegative".into()));
        }
        Ok(())
    }
}

/// Parameters for every model fidelity plus the degradation economics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSet {
    pub erm: ErmParams,
    pub ecm: EcmParams,
    pub spm: SpmParams,
    pub degradation: DegradationParams,
}

impl ParamSet {
    pub fn from_json(text: &str) -> Result<Self> {
        let set: Self =
            serde_json::from_str(text).map_err(|e| Error::Validation(format!("parameter JSON: {e}")))?;
        set.validate()?;
        Ok(set)
    }

    pub fn validate(&self) -> Result<()> {
        self.erm.validate()?;
        self.ecm.validate()?;
        self.spm.validate()?;
        self.degradation.validate()
    }
}

pub fn demo() -> ParamSet {
    ParamSet::from_json(DEMO_PARAMS_JSON).expect("bundled demo parameters are valid")
}

pub fn demo_erm() -> ErmParams {
    demo().erm
}

pub fn demo_ecm() -> EcmParams {
    demo().ecm
}

pub fn demo_spm() -> SpmParams {
    demo().spm
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::Electrode;

    #[test]
    fn demo_parses_and_labels_electrodes() {
        let p = demo();
        assert_eq!(p.spm.pos.side, Electrode::Pos);
        assert_eq!(p.spm.neg.side, Electrode::Neg);
        assert_eq!(p.ecm.n_cells, p.spm.n_cells);
    }

    #[test]
    fn demo_round_trips_through_json() {
        let p = demo();
        let text = serde_json::to_string(&p).unwrap();
        assert_eq!(ParamSet::from_json(&text).unwrap(), p);
    }

    #[test]
    fn window_inventory_matches_rated_capacity() {
        let p = demo_spm();
        let ah = p.neg.window_inventory_mol() * p.faraday_c_mol / 3600.0;
        assert!((ah - p.q_rated_ah).abs() < 1e-3 * p.q_rated_ah);
    }
}
