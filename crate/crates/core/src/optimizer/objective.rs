use serde::{Deserialize, Serialize};

use crate::degradation::{
    cycle_fade, cycle_fade_gradient, degradation_cost, rainflow_cycles, StressFunction, ThroughputModel,
    DEFAULT_EOL_FRACTION,
};
use crate::error::{Error, Result};
use crate::grid::PriceSeries;
use crate::trace::Trace;

/// How capacity fade is priced inside an arbitrage objective.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "lowercase")]
pub enum DegradationPricing {
    #[default]
    None,
    Throughput(ThroughputModel),
    Rainflow(StressFunction),
    /// Film-growth capacity loss from the particle model.
    Sei,
}

/// End-of-horizon requirement on the state of charge.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Terminal {
    #[default]
    Free,
    /// Finish with at least the starting SoC fraction.
    AtLeastInitial,
}

/// Slack on the terminal SoC requirement, in SoC fraction.
pub const TERMINAL_TOL: f64 = 1e-9;

fn default_eol() -> f64 {
    DEFAULT_EOL_FRACTION
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArbitrageObjective {
    pub prices: PriceSeries,
    #[serde(default)]
    pub degradation_weight: f64,
    #[serde(default)]
    pub replacement_cost: f64,
    #[serde(default = "default_eol")]
    pub eol_fraction: f64,
    #[serde(default)]
    pub pricing: DegradationPricing,
    #[serde(default)]
    pub terminal: Terminal,
}

impl ArbitrageObjective {
    pub fn new(prices: PriceSeries) -> Self {
        Self {
            prices,
            degradation_weight: 0.0,
            replacement_cost: 0.0,
            eol_fraction: DEFAULT_EOL_FRACTION,
            pricing: DegradationPricing::None,
            terminal: Terminal::Free,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeakShavingObjective {
    pub prices: PriceSeries,
    pub load_mw: Vec<f64>,
    /// $/MW charged on the horizon's peak net load.
    pub demand_charge: f64,
    #[serde(default)]
    pub terminal: Terminal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "objective", rename_all = "lowercase")]
pub enum Objective {
    Arbitrage(ArbitrageObjective),
    PeakShaving(PeakShavingObjective),
}

/// Per-interval quantities an objective is computed from.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Signals {
    /// Pack power at the grid boundary (MW, positive = export).
    pub pack_mw: Vec<f64>,
    /// Energy moved across the terminals per interval (MW).
    pub moved_mw: Vec<f64>,
    /// SoC fraction at every record, initial one included.
    pub soc: Vec<f64>,
    pub capacity_loss: f64,
}

impl Signals {
    pub fn from_trace(trace: &Trace) -> Self {
        let tau_h = trace.grid.tau_hours();
        Self {
            pack_mw: trace.pack_power_mw(),
            moved_mw: trace
                .records
                .windows(2)
                .map(|w| (w[1].throughput_mwh - w[0].throughput_mwh) / tau_h)
                .collect(),
            soc: trace.soc_profile(),
            capacity_loss: trace.last().capacity_loss,
        }
    }
}

/// Objective value with its parts.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Breakdown {
    pub value: f64,
    /// Energy revenue (arbitrage) or bill saving (peak shaving), $.
    pub revenue: f64,
    pub degradation_cost: f64,
    pub capacity_loss: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bill: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub baseline_bill: Option<f64>,
}

/// Partial derivatives of the value with respect to the signals.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Sensitivity {
    pub d_pack: Vec<f64>,
    pub d_moved: Vec<f64>,
    pub d_soc: Vec<f64>,
    pub d_loss: f64,
}

impl Objective {
    pub fn prices(&self) -> &PriceSeries {
        match self {
            Objective::Arbitrage(a) => &a.prices,
            Objective::PeakShaving(p) => &p.prices,
        }
    }

    pub fn terminal(&self) -> Terminal {
        match self {
            Objective::Arbitrage(a) => a.terminal,
            Objective::PeakShaving(p) => p.terminal,
        }
    }

    pub fn pricing(&self) -> DegradationPricing {
        match self {
            Objective::Arbitrage(a) => a.pricing,
            Objective::PeakShaving(_) => DegradationPricing::None,
        }
    }

    pub fn validate(&self, steps: usize) -> Result<()> {
        let prices = self.prices();
        if prices.prices.len() != steps {
            return Err(Error::Validation(format!(
                "objective has {} prices for a {steps}-step schedule",
                prices.prices.len()
            )));
        }
        match self {
            Objective::Arbitrage(a) => {
                if !(a.degradation_weight >= 0.0 && a.degradation_weight.is_finite()) {
                    return Err(Error::Validation("degradation weight must be nonnegative".into()));
                }
                if !(a.replacement_cost >= 0.0) {
                    return Err(Error::Validation("replacement cost must be nonnegative".into()));
                }
                crate::degradation::check_eol(a.eol_fraction)?;
                match a.pricing {
                    DegradationPricing::Throughput(m) => m.validate()?,
                    DegradationPricing::Rainflow(s) => s.validate()?,
                    _ => {}
                }
            }
            Objective::PeakShaving(p) => {
                if p.load_mw.len() != steps {
                    return Err(Error::Validation(format!(
                        "load has {} values for a {steps}-step schedule",
                        p.load_mw.len()
                    )));
                }
                if !(p.demand_charge >= 0.0) {
                    return Err(Error::Validation("demand charge must be nonnegative".into()));
                }
            }
        }
        Ok(())
    }

    /// Whether a SoC trajectory meets the terminal requirement.
    pub fn terminal_ok(&self, soc: &[f64]) -> bool {
        match self.terminal() {
            Terminal::Free => true,
            Terminal::AtLeastInitial => soc[soc.len() - 1] >= soc[0] - TERMINAL_TOL,
        }
    }

    pub(crate) fn assess(&self, s: &Signals, tau_h: f64, want_grad: bool) -> (Breakdown, Option<Sensitivity>) {
        let t = s.pack_mw.len();
        let prices = &self.prices().prices;
        let mut sens = want_grad.then(|| Sensitivity {
            d_pack: vec![0.0; t],
            d_moved: vec![0.0; t],
            d_soc: vec![0.0; s.soc.len()],
            d_loss: 0.0,
        });
        match self {
            Objective::Arbitrage(a) => {
                let revenue: f64 = prices.iter().zip(&s.pack_mw).map(|(p, w)| p * w * tau_h).sum();
                let scale = a.degradation_weight * a.replacement_cost / a.eol_fraction;
                let loss = match a.pricing {
                    DegradationPricing::None => 0.0,
                    DegradationPricing::Throughput(m) => {
                        let through: f64 = s.moved_mw.iter().sum::<f64>() * tau_h;
                        if let Some(g) = sens.as_mut() {
                            g.d_moved.iter_mut().for_each(|d| *d = -scale * m.loss_rate() * tau_h);
                        }
                        m.fade(through).loss
                    }
                    DegradationPricing::Rainflow(stress) => {
                        if let Some(g) = sens.as_mut() {
                            g.d_soc = cycle_fade_gradient(&s.soc, &stress).into_iter().map(|d| -scale * d).collect();
                        }
                        cycle_fade(&rainflow_cycles(&s.soc), &stress)
                    }
                    DegradationPricing::Sei => {
                        if let Some(g) = sens.as_mut() {
                            g.d_loss = -scale;
                        }
                        s.capacity_loss
                    }
                };
                if let Some(g) = sens.as_mut() {
                    for (d, p) in g.d_pack.iter_mut().zip(prices) {
                        *d = p * tau_h;
                    }
                }
                let cost = a.degradation_weight * degradation_cost(loss, a.replacement_cost, a.eol_fraction);
                (
                    Breakdown {
                        value: revenue - cost,
                        revenue,
                        degradation_cost: cost,
                        capacity_loss: loss,
                        bill: None,
                        baseline_bill: None,
                    },
                    sens,
                )
            }
            Objective::PeakShaving(p) => {
                let bill_of = |net: &mut dyn Iterator<Item = (usize, f64)>| -> (f64, f64, usize) {
                    let mut energy = 0.0;
                    let mut peak = f64::NEG_INFINITY;
                    let mut at = 0;
                    for (k, n) in net {
                        energy += prices[k] * n * tau_h;
                        if n > peak {
                            peak = n;
                            at = k;
                        }
                    }
                    (energy + p.demand_charge * peak.max(0.0), peak, at)
                };
                let (baseline, _, _) = bill_of(&mut p.load_mw.iter().copied().enumerate());
                let (bill, peak, at) =
                    bill_of(&mut p.load_mw.iter().zip(&s.pack_mw).map(|(l, w)| l - w).enumerate());
                if let Some(g) = sens.as_mut() {
                    for (d, pr) in g.d_pack.iter_mut().zip(prices) {
                        *d = pr * tau_h;
                    }
                    if peak > 0.0 {
                        g.d_pack[at] += p.demand_charge;
                    }
                }
                (
                    Breakdown {
                        value: baseline - bill,
                        revenue: baseline - bill,
                        degradation_cost: 0.0,
                        capacity_loss: s.capacity_loss,
                        bill: Some(bill),
                        baseline_bill: Some(baseline),
                    },
                    sens,
                )
            }
        }
    }

    /// Value of a simulated trajectory.
    pub fn evaluate_trace(&self, trace: &Trace) -> Result<Breakdown> {
        self.validate(trace.grid.steps)?;
        Ok(self.assess(&Signals::from_trace(trace), trace.grid.tau_hours(), false).0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::TimeGrid;

    fn signals(pack: &[f64], soc: &[f64]) -> Signals {
        Signals {
            pack_mw: pack.to_vec(),
            moved_mw: pack.iter().map(|p| p.abs()).collect(),
            soc: soc.to_vec(),
            capacity_loss: 0.01,
        }
    }

    fn arbitrage(pricing: DegradationPricing) -> Objective {
        let grid = TimeGrid::from_epoch(3600.0, 4).unwrap();
        Objective::Arbitrage(ArbitrageObjective {
            degradation_weight: 1.5,
            replacement_cost: 1e5,
            pricing,
            ..ArbitrageObjective::new(PriceSeries::new(grid, vec![10.0, -5.0, 40.0, 25.0]).unwrap())
        })
    }

    fn check_gradient(obj: &Objective, s: &Signals) {
        let (_, g) = obj.assess(s, 1.0, true);
        let g = g.unwrap();
        let h = 1e-6;
        let f = |s: &Signals| obj.assess(s, 1.0, false).0.value;
        for k in 0..s.pack_mw.len() {
            let mut up = s.clone();
            let mut dn = s.clone();
            up.pack_mw[k] += h;
            dn.pack_mw[k] -= h;
            up.moved_mw[k] += h;
            dn.moved_mw[k] -= h;
            let fd = (f(&up) - f(&dn)) / (2.0 * h);
            let an = g.d_pack[k] + g.d_moved[k];
            assert!((fd - an).abs() < 1e-6 * an.abs().max(1.0), "pack {k}: {fd} vs {an}");
        }
        for k in 0..s.soc.len() {
            let mut up = s.clone();
            let mut dn = s.clone();
            up.soc[k] += h;
            dn.soc[k] -= h;
            let fd = (f(&up) - f(&dn)) / (2.0 * h);
            assert!((fd - g.d_soc[k]).abs() < 1e-5 * g.d_soc[k].abs().max(1.0), "soc {k}");
        }
        let mut up = s.clone();
        up.capacity_loss += h;
        let fd = (f(&up) - f(s)) / h;
        assert!((fd - g.d_loss).abs() < 1e-6 * g.d_loss.abs().max(1.0));
    }

    #[test]
    fn arbitrage_gradients() {
        let s = signals(&[-1.0, 0.5, 2.0, -0.25], &[0.5, 0.8, 0.6, 0.1, 0.2]);
        for pricing in [
            DegradationPricing::None,
            DegradationPricing::Throughput(ThroughputModel::new(500.0, 0.2).unwrap()),
            DegradationPricing::Rainflow(StressFunction::default()),
            DegradationPricing::Sei,
        ] {
            check_gradient(&arbitrage(pricing), &s);
        }
    }

    #[test]
    fn peak_shaving_value_and_gradient() {
        let grid = TimeGrid::from_epoch(3600.0, 4).unwrap();
        let obj = Objective::PeakShaving(PeakShavingObjective {
            prices: PriceSeries::new(grid, vec![20.0; 4]).unwrap(),
            load_mw: vec![1.0, 3.0, 2.0, 1.0],
            demand_charge: 100.0,
            terminal: Terminal::Free,
        });
        let s = signals(&[-0.5, 1.0, 0.0, 0.0], &[0.5; 5]);
        let (b, _) = obj.assess(&s, 1.0, false);
        // Baseline: 7 MWh * 20 + 100 * 3; with battery: 7.5 * 20 + 100 * 2.
        assert!((b.baseline_bill.unwrap() - 440.0).abs() < 1e-12);
        assert!((b.bill.unwrap() - 330.0).abs() < 1e-12);
        assert!((b.value - 110.0).abs() < 1e-12);
        let s = signals(&[-0.5, 1.2, 0.0, 0.0], &[0.5; 5]);
        check_gradient(&obj, &s);
    }

    #[test]
    fn terminal_check() {
        let mut obj = arbitrage(DegradationPricing::None);
        assert!(obj.terminal_ok(&[0.5, 0.1]));
        if let Objective::Arbitrage(a) = &mut obj {
            a.terminal = Terminal::AtLeastInitial;
        }
        assert!(!obj.terminal_ok(&[0.5, 0.1]));
        assert!(obj.terminal_ok(&[0.5, 0.5]));
    }
}
