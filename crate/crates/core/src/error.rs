use std::fmt;

use serde::{Deserialize, Serialize};

/// Electrode selector for the single-particle model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Electrode {
    Pos,
    Neg,
}

impl fmt::Display for Electrode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Electrode::Pos => f.write_str("positive"),
            Electrode::Neg => f.write_str("negative"),
        }
    }
}

/// Which operating bound was crossed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "electrode")]
pub enum ViolationKind {
    SoeAboveMax,
    SoeBelowZero,
    ChargePowerLimit,
    DischargePowerLimit,
    ChargeCurrentLimit,
    DischargeCurrentLimit,
    VoltageBelowMin,
    VoltageAboveMax,
    CapacityBelowZero,
    CapacityAboveMax,
    ConcentrationBelowMin(Electrode),
    ConcentrationAboveMax(Electrode),
    Saturation(Electrode),
    PowerUnattainable,
}

/// A crossed bound: the offending value and the limit it was checked against.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    #[serde(flatten)]
    pub kind: ViolationKind,
    pub value: f64,
    pub limit: f64,
}

impl Violation {
    pub fn new(kind: ViolationKind, value: f64, limit: f64) -> Self {
        Self { kind, value, limit }
    }

    pub fn magnitude(&self) -> f64 {
        (self.value - self.limit).abs()
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let what = match self.kind {
            ViolationKind::SoeAboveMax => "state-of-energy above capacity".to_string(),
            ViolationKind::SoeBelowZero => "state-of-energy below zero".to_string(),
            ViolationKind::ChargePowerLimit => "charge power above limit".to_string(),
            ViolationKind::DischargePowerLimit => "discharge power above limit".to_string(),
            ViolationKind::ChargeCurrentLimit => "charge current above limit".to_string(),
            ViolationKind::DischargeCurrentLimit => "discharge current above limit".to_string(),
            ViolationKind::VoltageBelowMin => "voltage below minimum".to_string(),
            ViolationKind::VoltageAboveMax => "voltage above maximum".to_string(),
            ViolationKind::CapacityBelowZero => "state-of-charge below zero".to_string(),
            ViolationKind::CapacityAboveMax => "state-of-charge above capacity".to_string(),
            ViolationKind::ConcentrationBelowMin(e) => {
                format!("{e} electrode concentration below operating window")
            }
            ViolationKind::ConcentrationAboveMax(e) => {
                format!("{e} electrode concentration above operating window")
            }
            ViolationKind::Saturation(e) => format!("{e} electrode surface saturated"),
            ViolationKind::PowerUnattainable => "requested power unattainable".to_string(),
        };
        write!(f, "{what} ({} vs limit {})", self.value, self.limit)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    Validation(String),

    /// A state bound (energy, charge, voltage, concentration) was crossed.
    #[error("infeasible step: {0}")]
    InfeasibleStep(Violation),

    /// A control bound (power or current) was exceeded.
    #[error("limit violation: {0}")]
    LimitViolation(Violation),

    #[error("{0} electrode surface saturated; exchange current density is zero")]
    Saturation(Electrode),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("step size too large: {0}")]
    StepSize(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("problem too large: {0}")]
    Size(String),

    #[error("solver failure: {0}")]
    SolverFailure(String),

    #[error("step {step}: {source}")]
    AtStep {
        step: usize,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub fn at_step(self, step: usize) -> Self {
        Error::AtStep {
            step,
            source: Box::new(self),
        }
    }

    /// Step index carried by the error, if it came out of a simulation.
    pub fn step(&self) -> Option<usize> {
        match self {
            Error::AtStep { step, .. } => Some(*step),
            _ => None,
        }
    }

    /// The violated bound, looking through step annotations.
    pub fn violation(&self) -> Option<Violation> {
        match self {
            Error::InfeasibleStep(v) | Error::LimitViolation(v) => Some(*v),
            Error::AtStep { source, .. } => source.violation(),
            _ => None,
        }
    }

    pub fn innermost(&self) -> &Error {
        match self {
            Error::AtStep { source, .. } => source.innermost(),
            e => e,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
