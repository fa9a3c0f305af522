//! CSV readers for prices, load and schedules.

use std::io::Read;
use std::path::Path;

use anyhow::{anyhow, bail, Context};
use battsched_core::grid::{CurrentSchedule, PowerSchedule, PriceSeries, TimeGrid};
use battsched_core::optimizer::Schedule;
use chrono::{DateTime, NaiveDateTime, Utc};

/// A uniformly spaced time series read from a two-column CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct TimedColumn {
    pub grid: TimeGrid,
    pub values: Vec<f64>,
}

fn parse_timestamp(s: &str) -> Option<DateTime<Utc>> {
    if let Ok(t) = DateTime::parse_from_rfc3339(s) {
        return Some(t.with_timezone(&Utc));
    }
    ["%Y-%m-%dT%H:%M:%S", "%Y-%m-%d %H:%M:%S", "%Y-%m-%dT%H:%M"]
        .iter()
        .find_map(|f| NaiveDateTime::parse_from_str(s, f).ok())
        .map(|t| t.and_utc())
}

/// Reads `timestamp,<column>` rows at uniform spacing.
pub fn read_timed_column(reader: impl Read, column: &str) -> anyhow::Result<TimedColumn> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers().context("reading CSV header")?.clone();
    if headers.len() != 2 || &headers[0] != "timestamp" || &headers[1] != column {
        bail!("expected header `timestamp,{column}`, found `{}`", headers.iter().collect::<Vec<_>>().join(","));
    }
    let mut times: Vec<DateTime<Utc>> = Vec::new();
    let mut values = Vec::new();
    for row in rdr.records() {
        let row = row.context("malformed CSV row")?;
        let line = row.position().map_or(0, |p| p.line());
        let t = parse_timestamp(&row[0]).ok_or_else(|| anyhow!("line {line}: bad timestamp {:?}", &row[0]))?;
        let v: f64 = row[1]
            .parse()
            .map_err(|_| anyhow!("line {line}: bad {column} value {:?}", &row[1]))?;
        if !v.is_finite() {
            bail!("line {line}: {column} is not finite");
        }
        if let Some(&prev) = times.last() {
            if t == prev {
                bail!("line {line}: duplicate timestamp {}", &row[0]);
            }
            if t < prev {
                bail!("line {line}: timestamps must increase");
            }
            if times.len() >= 2 {
                let step = times[1] - times[0];
                let here = t - prev;
                if here != step {
                    if here > step && (here.num_milliseconds() % step.num_milliseconds()) == 0 {
                        bail!("line {line}: gap before {} (expected a row every {}s)", &row[0], step.num_seconds());
                    }
                    bail!("line {line}: non-uniform spacing ({}s after {}s)", here.num_seconds(), step.num_seconds());
                }
            }
        }
        times.push(t);
        values.push(v);
    }
    match times.len() {
        0 => bail!("no data rows"),
        1 => bail!("need at least two rows to infer the step length"),
        _ => {}
    }
    let tau_s = (times[1] - times[0]).num_milliseconds() as f64 / 1000.0;
    let grid = TimeGrid::new(times[0], tau_s, times.len())?;
    Ok(TimedColumn { grid, values })
}

fn open(path: &Path) -> anyhow::Result<std::fs::File> {
    std::fs::File::open(path).with_context(|| format!("opening {}", path.display()))
}

pub fn ingest_prices(path: &Path) -> anyhow::Result<PriceSeries> {
    let col = read_timed_column(open(path)?, "price").with_context(|| format!("prices {}", path.display()))?;
    Ok(PriceSeries::new(col.grid, col.values)?)
}

/// Load series, which must share the price grid.
pub fn ingest_load(path: &Path, grid: &TimeGrid) -> anyhow::Result<Vec<f64>> {
    let col = read_timed_column(open(path)?, "load_mw").with_context(|| format!("load {}", path.display()))?;
    if col.grid != *grid {
        bail!("load {} is not on the price grid", path.display());
    }
    Ok(col.values)
}

/// Reads a schedule from any CSV carrying either `ch_mw` and `dis_mw`
/// columns or a `current_a` column, one row per interval. Rows whose
/// control cells are empty are skipped, so a trace file reads back as the
/// schedule that produced it.
pub fn read_schedule(reader: impl Read, grid: TimeGrid) -> anyhow::Result<Schedule> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers().context("reading CSV header")?.clone();
    let find = |name: &str| headers.iter().position(|h| h == name);
    let parse = |row: &csv::StringRecord, k: usize, name: &str| -> anyhow::Result<Option<f64>> {
        let line = row.position().map_or(0, |p| p.line());
        match row.get(k) {
            None | Some("") => Ok(None),
            Some(s) => s.parse().map(Some).map_err(|_| anyhow!("line {line}: bad {name} value {s:?}")),
        }
    };
    match (find("ch_mw"), find("dis_mw"), find("current_a")) {
        (Some(c), Some(d), _) => {
            let (mut ch, mut dis) = (Vec::new(), Vec::new());
            for row in rdr.records() {
                let row = row?;
                if let (Some(a), Some(b)) = (parse(&row, c, "ch_mw")?, parse(&row, d, "dis_mw")?) {
                    ch.push(a);
                    dis.push(b);
                }
            }
            Ok(Schedule::Power(PowerSchedule::new(grid, ch, dis)?))
        }
        (_, _, Some(i)) => {
            let mut current = Vec::new();
            for row in rdr.records() {
                let row = row?;
                if let Some(a) = parse(&row, i, "current_a")? {
                    current.push(a);
                }
            }
            Ok(Schedule::Current(CurrentSchedule::new(grid, current)?))
        }
        _ => bail!("schedule needs `ch_mw` and `dis_mw` columns or a `current_a` column"),
    }
}

pub fn ingest_schedule(path: &Path, grid: TimeGrid) -> anyhow::Result<Schedule> {
    read_schedule(open(path)?, grid).with_context(|| format!("schedule {}", path.display()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn prices(text: &str) -> anyhow::Result<TimedColumn> {
        read_timed_column(text.as_bytes(), "price")
    }

    #[test]
    fn hourly_rows_give_hourly_grid() {
        let mut text = String::from("timestamp,price\n");
        for h in 0..24 {
            text.push_str(&format!("2024-03-01T{h:02}:00:00Z,{}\n", 20 + h));
        }
        let col = prices(&text).unwrap();
        assert_eq!(col.grid.tau_s, 3600.0);
        assert_eq!(col.grid.steps, 24);
        assert_eq!(col.values[23], 43.0);
    }

    #[test]
    fn duplicate_timestamp_names_the_line() {
        let err = prices("timestamp,price\n2024-01-01T00:00:00Z,1\n2024-01-01T01:00:00Z,2\n2024-01-01T01:00:00Z,3\n")
            .unwrap_err();
        assert!(err.to_string().contains("line 4") && err.to_string().contains("duplicate"), "{err}");
    }

    #[test]
    fn negative_prices_are_accepted() {
        let col = prices("timestamp,price\n2024-01-01T00:00:00Z,-12.5\n2024-01-01T00:30:00Z,4\n").unwrap();
        assert_eq!(col.values, vec![-12.5, 4.0]);
        assert_eq!(col.grid.tau_s, 1800.0);
    }

    #[test]
    fn gaps_and_uneven_spacing_are_rejected() {
        let gap = prices("timestamp,price\n2024-01-01T00:00:00Z,1\n2024-01-01T01:00:00Z,1\n2024-01-01T03:00:00Z,1\n")
            .unwrap_err();
        assert!(gap.to_string().contains("gap"), "{gap}");
        let uneven =
            prices("timestamp,price\n2024-01-01T00:00:00Z,1\n2024-01-01T01:00:00Z,1\n2024-01-01T01:30:00Z,1\n")
                .unwrap_err();
        assert!(uneven.to_string().contains("non-uniform"), "{uneven}");
    }

    #[test]
    fn malformed_rows_and_empty_files() {
        let bad = prices("timestamp,price\n2024-01-01T00:00:00Z,1\n2024-01-01T01:00:00Z,abc\n").unwrap_err();
        assert!(bad.to_string().contains("line 3"), "{bad}");
        assert!(prices("timestamp,price\n").unwrap_err().to_string().contains("no data"));
        assert!(prices("time,price\n2024-01-01T00:00:00Z,1\n").is_err());
    }

    #[test]
    fn schedule_reads_either_control_space() {
        let grid = TimeGrid::from_epoch(3600.0, 2).unwrap();
        let s = read_schedule("step,ch_mw,dis_mw\n0,,\n1,0.5,0\n2,0,0.25\n".as_bytes(), grid).unwrap();
        assert_eq!(s.net(), vec![-0.5, 0.25]);
        let s = read_schedule("current_a\n1.5\n-2\n".as_bytes(), grid).unwrap();
        assert_eq!(s.net(), vec![1.5, -2.0]);
        assert!(read_schedule("x\n1\n".as_bytes(), grid).is_err());
        assert!(read_schedule("current_a\n1\n".as_bytes(), grid).is_err());
    }
}
