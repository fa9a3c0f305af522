//! Time grids, price series and the two schedule flavours.
//!
//! Everything here is SI internally (seconds, amperes, volts, watts) except
//! the power-energy quantities, which stay in MW and MWh like the markets
//! that price them.

use chrono::{DateTime, Duration, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const SECONDS_PER_HOUR: f64 = 3600.0;
pub const WATTS_PER_MEGAWATT: f64 = 1.0e6;

/// Uniform decision intervals.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    pub t0: DateTime<Utc>,
    pub tau_s: f64,
    pub steps: usize,
}

impl TimeGrid {
    pub fn new(t0: DateTime<Utc>, tau_s: f64, steps: usize) -> Result<Self> {
        if !(tau_s.is_finite() && tau_s > 0.0) {
            return Err(Error::Validation(format!(
                "time step must be positive, got {tau_s} s"
            )));
        }
        if steps == 0 {
            return Err(Error::Validation("time grid needs at least one step".into()));
        }
        Ok(Self { t0, tau_s, steps })
    }

    /// Grid starting at the Unix epoch; handy when only spacing matters.
    pub fn from_epoch(tau_s: f64, steps: usize) -> Result<Self> {
        Self::new(DateTime::<Utc>::UNIX_EPOCH, tau_s, steps)
    }

    pub fn tau_hours(&self) -> f64 {
        self.tau_s / SECONDS_PER_HOUR
    }

    pub fn horizon_s(&self) -> f64 {
        self.tau_s * self.steps as f64
    }

    /// Start time of interval `k`.
    pub fn time_of(&self, k: usize) -> DateTime<Utc> {
        let micros = (self.tau_s * 1.0e6 * k as f64).round() as i64;
        self.t0 + Duration::microseconds(micros)
    }
}

/// Free-function constructor mirroring [`TimeGrid::new`].
pub fn build_time_grid(t0: DateTime<Utc>, tau_s: f64, steps: usize) -> Result<TimeGrid> {
    TimeGrid::new(t0, tau_s, steps)
}

fn check_len(what: &str, len: usize, grid: &TimeGrid) -> Result<()> {
    if len != grid.steps {
        return Err(Error::Validation(format!(
            "{what} has {len} entries but the grid has {} steps",
            grid.steps
        )));
    }
    Ok(())
}

/// Per-interval energy price in $/MWh. Negative prices are legal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriceSeries {
    pub grid: TimeGrid,
    pub prices: Vec<f64>,
}

impl PriceSeries {
    pub fn new(grid: TimeGrid, prices: Vec<f64>) -> Result<Self> {
        check_len("price series", prices.len(), &grid)?;
        if let Some(k) = prices.iter().position(|p| !p.is_finite()) {
            return Err(Error::Validation(format!("price at step {k} is not finite")));
        }
        Ok(Self { grid, prices })
    }
}

/// Charge/discharge power pair per interval (MW, both nonnegative).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerSchedule {
    pub grid: TimeGrid,
    pub ch: Vec<f64>,
    pub dis: Vec<f64>,
}

impl PowerSchedule {
    pub fn new(grid: TimeGrid, ch: Vec<f64>, dis: Vec<f64>) -> Result<Self> {
        check_len("charge schedule", ch.len(), &grid)?;
        check_len("discharge schedule", dis.len(), &grid)?;
        for (k, (&c, &d)) in ch.iter().zip(&dis).enumerate() {
            if !(c >= 0.0 && d >= 0.0 && c.is_finite() && d.is_finite()) {
                return Err(Error::Validation(format!(
                    "step {k}: charge and discharge power must be finite and nonnegative"
                )));
            }
        }
        Ok(Self { grid, ch, dis })
    }

    pub fn zeros(grid: TimeGrid) -> Self {
        Self {
            grid,
            ch: vec![0.0; grid.steps],
            dis: vec![0.0; grid.steps],
        }
    }

    /// Builds the pair from signed net power (positive = discharge).
    pub fn from_net(grid: TimeGrid, net_mw: &[f64]) -> Result<Self> {
        let ch = net_mw.iter().map(|&p| (-p).max(0.0)).collect();
        let dis = net_mw.iter().map(|&p| p.max(0.0)).collect();
        Self::new(grid, ch, dis)
    }

    /// Net grid-side power per step, positive when discharging.
    pub fn net(&self) -> Vec<f64> {
        self.dis.iter().zip(&self.ch).map(|(d, c)| d - c).collect()
    }
}

/// Applied cell current per interval (A, positive on discharge).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurrentSchedule {
    pub grid: TimeGrid,
    pub current: Vec<f64>,
}

impl CurrentSchedule {
    pub fn new(grid: TimeGrid, current: Vec<f64>) -> Result<Self> {
        check_len("current schedule", current.len(), &grid)?;
        if let Some(k) = current.iter().position(|i| !i.is_finite()) {
            return Err(Error::Validation(format!("current at step {k} is not finite")));
        }
        Ok(Self { grid, current })
    }

    pub fn zeros(grid: TimeGrid) -> Self {
        Self {
            grid,
            current: vec![0.0; grid.steps],
        }
    }
}

/// Pack power `N·I·V` in watts; positive means delivering to the grid.
pub fn pack_power(current_a: f64, voltage_v: f64, n_cells: u32) -> Result<f64> {
    if n_cells < 1 {
        return Err(Error::Validation("pack needs at least one cell".into()));
    }
    Ok(n_cells as f64 * current_a * voltage_v)
}
