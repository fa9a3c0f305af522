//! Report and trace writers.

use std::io::Write;
use std::path::Path;

use anyhow::Context;
use battsched_core::grid::PriceSeries;
use battsched_core::trace::{AppliedControl, StateSnapshot, Trace};
use serde::Serialize;
use sha2::{Digest, Sha256};

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn write_json(path: &Path, value: &impl Serialize) -> anyhow::Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn state_columns(state: &StateSnapshot) -> Vec<(&'static str, f64)> {
    match *state {
        StateSnapshot::Erm { soe_mwh } => vec![("soe_mwh", soe_mwh)],
        StateSnapshot::Ecm { soc_ah, v_d } => vec![("soc_ah", soc_ah), ("v_d", v_d)],
        StateSnapshot::Spm {
            c_surf_pos,
            c_surf_neg,
            c_avg_pos,
            c_avg_neg,
            sei_thickness_m,
            film_resistance_ohm,
            lithium_loss_mol,
        } => vec![
            ("c_surf_pos", c_surf_pos),
            ("c_surf_neg", c_surf_neg),
            ("c_avg_pos", c_avg_pos),
            ("c_avg_neg", c_avg_neg),
            ("sei_thickness_m", sei_thickness_m),
            ("film_resistance_ohm", film_resistance_ohm),
            ("lithium_loss_mol", lithium_loss_mol),
        ],
    }
}

fn num(x: f64) -> String {
    // `Display` for f64 prints the shortest string that parses back exactly.
    format!("{x}")
}

fn opt(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}

/// Writes one row per trace record. Row 0 is the initial state; row `k`
/// closes interval `k − 1` and carries that interval's control and price.
pub fn write_trace(writer: impl Write, trace: &Trace, prices: &PriceSeries) -> anyhow::Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let power = trace
        .steps()
        .first()
        .is_some_and(|r| matches!(r.control, Some(AppliedControl::Power { .. })));
    let mut header: Vec<&str> = vec!["step", "time", "price"];
    header.extend(if power { ["ch_mw", "dis_mw"].as_slice() } else { ["current_a"].as_slice() });
    header.extend([
        "soc_fraction",
        "voltage_v",
        "cell_power_w",
        "pack_power_mw",
        "throughput_mwh",
        "capacity_loss",
    ]);
    header.extend(state_columns(&trace.initial().state).iter().map(|(n, _)| *n));
    w.write_record(&header)?;
    for r in &trace.records {
        let interval = r.step.checked_sub(1);
        let mut row = vec![
            r.step.to_string(),
            trace.grid.time_of(r.step).to_rfc3339(),
            opt(interval.map(|k| prices.prices[k])),
        ];
        match r.control {
            Some(AppliedControl::Power { ch_mw, dis_mw }) => row.extend([num(ch_mw), num(dis_mw)]),
            Some(AppliedControl::Current { current_a }) => row.push(num(current_a)),
            None if power => row.extend([String::new(), String::new()]),
            None => row.push(String::new()),
        }
        row.extend([
            num(r.soc_fraction),
            opt(r.voltage_v),
            opt(r.cell_power_w),
            num(r.pack_power_mw),
            num(r.throughput_mwh),
            num(r.capacity_loss),
        ]);
        row.extend(state_columns(&r.state).into_iter().map(|(_, v)| num(v)));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_trace_file(path: &Path, trace: &Trace, prices: &PriceSeries) -> anyhow::Result<()> {
    let file = std::fs::File::create(path).with_context(|| format!("creating {}", path.display()))?;
    write_trace(std::io::BufWriter::new(file), trace, prices)
}

#[cfg(test)]
mod tests {
    use super::*;
    use battsched_core::erm::ErmState;
    use battsched_core::grid::{PowerSchedule, TimeGrid};
    use battsched_core::optimizer::{Model, Schedule};
    use battsched_core::presets;

    use crate::ingest::read_schedule;

    #[test]
    fn trace_reads_back_as_its_schedule() {
        let params = presets::demo_erm();
        let model = Model::Erm {
            init: ErmState::new(0.9, &params).unwrap(),
            params,
        };
        let grid = TimeGrid::from_epoch(3600.0, 3).unwrap();
        let schedule = Schedule::Power(PowerSchedule::from_net(grid, &[-0.1 / 3.0, 0.7, 0.0]).unwrap());
        let trace = model.simulate(&schedule).unwrap();
        let prices = PriceSeries::new(grid, vec![1.0, 2.0, 3.0]).unwrap();
        let mut buf = Vec::new();
        write_trace(&mut buf, &trace, &prices).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("step,time,price,ch_mw,dis_mw,soc_fraction"));
        assert_eq!(text.lines().count(), 5);
        assert_eq!(read_schedule(text.as_bytes(), grid).unwrap(), schedule);
    }

    #[test]
    fn hashes_are_lowercase_hex() {
        assert_eq!(
            sha256_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }
}
