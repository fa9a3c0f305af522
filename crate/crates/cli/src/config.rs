//! Run configuration: which model, objective, degradation pricing and
//! solver to use, and where the inputs live.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use battsched_core::ecm::EcmState;
use battsched_core::erm::ErmState;
use battsched_core::grid::PriceSeries;
use battsched_core::optimizer::{
    ArbitrageObjective, DegradationPricing, DpConfig, Model, Objective, PeakShavingObjective, PenaltyConfig,
    Terminal,
};
use battsched_core::presets::ParamSet;
use battsched_core::spm::SpmState;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Erm,
    Ecm,
    Spm,
}

impl ModelKind {
    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Erm => "erm",
            ModelKind::Ecm => "ecm",
            ModelKind::Spm => "spm",
        }
    }
}

impl std::str::FromStr for ModelKind {
    type Err = anyhow::Error;
    fn from_str(s: &str) -> anyhow::Result<Self> {
        match s {
            "erm" => Ok(ModelKind::Erm),
            "ecm" => Ok(ModelKind::Ecm),
            "spm" => Ok(ModelKind::Spm),
            _ => bail!("unknown model {s:?}; expected erm, ecm or spm"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ObjectiveConfig {
    Arbitrage {
        #[serde(default)]
        terminal: Terminal,
    },
    PeakShaving {
        /// $/MW on the horizon's peak net load.
        demand_charge: f64,
        #[serde(default)]
        terminal: Terminal,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DegradationMethod {
    #[default]
    None,
    Throughput,
    Rainflow,
    Sei,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DegradationConfig {
    #[serde(default)]
    pub method: DegradationMethod,
    /// λ, the weight on the replacement-cost share of fade.
    #[serde(default = "one")]
    pub weight: f64,
}

impl Default for DegradationConfig {
    fn default() -> Self {
        Self {
            method: DegradationMethod::None,
            weight: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverMethod {
    Dp,
    BruteForce,
    Gradient,
}

fn default_fractions() -> Vec<f64> {
    vec![-1.0, -0.5, 0.0, 0.5, 1.0]
}

fn default_check_samples() -> usize {
    3
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverConfig {
    /// Defaults to `dp` for the reservoir and circuit models and `gradient`
    /// for the particle model.
    #[serde(default)]
    pub method: Option<SolverMethod>,
    /// Control lattice as fractions of the model's rated limit: negative
    /// values scale the charge limit, positive ones the discharge limit.
    #[serde(default = "default_fractions")]
    pub level_fractions: Vec<f64>,
    #[serde(default)]
    pub dp: DpConfig,
    #[serde(default)]
    pub gradient: PenaltyConfig,
    #[serde(default)]
    pub brute_force_cap: Option<u64>,
    /// Random schedules used to cross-check adjoint and finite-difference
    /// gradients after a gradient solve (drawn from `--seed`).
    #[serde(default = "default_check_samples")]
    pub gradient_check_samples: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            method: None,
            level_fractions: default_fractions(),
            dp: DpConfig::default(),
            gradient: PenaltyConfig::default(),
            brute_force_cap: None,
            gradient_check_samples: default_check_samples(),
        }
    }
}

fn default_compare_models() -> Vec<ModelKind> {
    vec![ModelKind::Ecm, ModelKind::Spm]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompareConfig {
    /// Models the optimized schedule is replayed on.
    #[serde(default = "default_compare_models")]
    pub models: Vec<ModelKind>,
}

impl Default for CompareConfig {
    fn default() -> Self {
        Self {
            models: default_compare_models(),
        }
    }
}

fn half() -> f64 {
    0.5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelKind,
    /// Starting state of charge as a fraction of capacity.
    #[serde(default = "half")]
    pub initial_soc: f64,
    /// Parameter JSON; relative paths resolve against the config file.
    pub params: PathBuf,
    /// CSV with header `timestamp,price`.
    pub prices: PathBuf,
    /// CSV with header `timestamp,load_mw`; peak shaving only.
    #[serde(default)]
    pub load: Option<PathBuf>,
    /// Schedule CSV for `simulate` and `replay`.
    #[serde(default)]
    pub schedule: Option<PathBuf>,
    pub objective: ObjectiveConfig,
    #[serde(default)]
    pub degradation: DegradationConfig,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub compare: CompareConfig,
    /// Output directory when `--out` is not given.
    #[serde(default)]
    pub out: Option<PathBuf>,
}

impl RunConfig {
    /// Parses `text`, resolving relative paths against `base`.
    pub fn from_json(text: &str, base: &Path) -> anyhow::Result<Self> {
        let mut cfg: Self = serde_json::from_str(text).context("run config")?;
        for p in [&mut cfg.params, &mut cfg.prices] {
            *p = base.join(&*p);
        }
        for p in [&mut cfg.load, &mut cfg.schedule, &mut cfg.out].into_iter().flatten() {
            *p = base.join(&*p);
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        if !(0.0..=1.0).contains(&self.initial_soc) {
            bail!("initial_soc {} outside [0, 1]", self.initial_soc);
        }
        if !(self.degradation.weight >= 0.0 && self.degradation.weight.is_finite()) {
            bail!("degradation weight must be a nonnegative number");
        }
        if self.degradation.method == DegradationMethod::Sei && self.model != ModelKind::Spm {
            bail!(
                "sei degradation requires model spm, got {}; use throughput or rainflow instead",
                self.model.name()
            );
        }
        match &self.objective {
            ObjectiveConfig::PeakShaving { demand_charge, .. } => {
                if demand_charge.is_nan() || *demand_charge < 0.0 {
                    bail!("demand_charge must be nonnegative");
                }
                if self.load.is_none() {
                    bail!("peak shaving needs a load file");
                }
                if self.degradation.method != DegradationMethod::None {
                    bail!("degradation pricing is only available for the arbitrage objective");
                }
            }
            ObjectiveConfig::Arbitrage { .. } => {}
        }
        if self.solver.level_fractions.is_empty() {
            bail!("solver.level_fractions is empty");
        }
        if let Some(f) = self.solver.level_fractions.iter().find(|f| !(-1.0..=1.0).contains(*f)) {
            bail!("level fraction {f} outside [-1, 1]");
        }
        let method = self.solver_method();
        if method == SolverMethod::Dp && self.model == ModelKind::Spm {
            bail!("dp does not support the particle model; use gradient or brute_force");
        }
        if method == SolverMethod::Gradient && self.model != ModelKind::Spm {
            bail!("the gradient solver is for the particle model; use dp or brute_force");
        }
        Ok(())
    }

    pub fn solver_method(&self) -> SolverMethod {
        self.solver.method.unwrap_or(match self.model {
            ModelKind::Spm => SolverMethod::Gradient,
            _ => SolverMethod::Dp,
        })
    }

    /// Net control levels in the model's own units (MW or A).
    pub fn levels(&self, kind: ModelKind, params: &ParamSet) -> Vec<f64> {
        let (ch, dis) = match kind {
            ModelKind::Erm => (params.erm.p_ch_max_mw, params.erm.p_dis_max_mw),
            ModelKind::Ecm => (params.ecm.i_max_ch_a, params.ecm.i_max_dis_a),
            ModelKind::Spm => (params.spm.i_max_ch_a, params.spm.i_max_dis_a),
        };
        self.solver
            .level_fractions
            .iter()
            .map(|&f| if f < 0.0 { f * ch } else { f * dis })
            .collect()
    }

    pub fn build_model(&self, kind: ModelKind, params: &ParamSet) -> anyhow::Result<Model> {
        let soc = self.initial_soc;
        Ok(match kind {
            ModelKind::Erm => Model::Erm {
                init: ErmState::new(soc * params.erm.e_max_mwh, &params.erm)?,
                params: params.erm.clone(),
            },
            ModelKind::Ecm => Model::Ecm {
                init: EcmState::new(soc * params.ecm.q_max_ah, 0.0, &params.ecm)?,
                params: params.ecm.clone(),
            },
            ModelKind::Spm => {
                if self.degradation.method == DegradationMethod::Sei && params.spm.sei.is_none() {
                    bail!("sei degradation needs an `sei` block in the particle-model parameters");
                }
                Model::Spm {
                    init: SpmState::at_soc(&params.spm, soc)?,
                    degrade: params.spm.sei.is_some(),
                    params: params.spm.clone(),
                }
            }
        })
    }

    pub fn build_objective(
        &self,
        prices: PriceSeries,
        load_mw: Option<Vec<f64>>,
        params: &ParamSet,
    ) -> anyhow::Result<Objective> {
        Ok(match &self.objective {
            ObjectiveConfig::Arbitrage { terminal } => {
                let deg = &params.degradation;
                let pricing = match self.degradation.method {
                    DegradationMethod::None => DegradationPricing::None,
                    DegradationMethod::Throughput => DegradationPricing::Throughput(deg.throughput),
                    DegradationMethod::Rainflow => DegradationPricing::Rainflow(deg.stress),
                    DegradationMethod::Sei => DegradationPricing::Sei,
                };
                let mut a = ArbitrageObjective::new(prices);
                a.degradation_weight = self.degradation.weight;
                a.replacement_cost = deg.replacement_cost_usd;
                a.eol_fraction = deg.eol_fraction;
                a.pricing = pricing;
                a.terminal = *terminal;
                Objective::Arbitrage(a)
            }
            ObjectiveConfig::PeakShaving { demand_charge, terminal } => {
                let load_mw = load_mw.context("peak shaving needs a load file")?;
                Objective::PeakShaving(PeakShavingObjective {
                    prices,
                    load_mw,
                    demand_charge: *demand_charge,
                    terminal: *terminal,
                })
            }
        })
    }
}
