//! CSV dumps and text summaries. Every file starts with `#` comment lines
//! carrying the engine version, a hash of the inputs and the δ schedule.

use crate::error::{Error, Result};
use crate::odesim::ValidatedTrace;
use crate::reach::{Partition, ReachTube};
use crate::sweep::{RegionReport, TrendResult};
use sha2::{Digest, Sha256};
use std::fmt::Write as _;
use std::io::Write;

#[derive(Clone, Debug, PartialEq)]
pub struct Header {
    pub config_hash: String,
    pub schedule: Vec<f64>,
    pub extra: Vec<(String, String)>,
}

/// SHA-256 over the given inputs, each length-prefixed.
pub fn config_hash(parts: &[&str]) -> String {
    let mut h = Sha256::new();
    for p in parts {
        h.update((p.len() as u64).to_le_bytes());
        h.update(p.as_bytes());
    }
    h.finalize().iter().fold(String::with_capacity(64), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

impl Header {
    pub fn new(config_hash: String, schedule: Vec<f64>) -> Self {
        Header { config_hash, schedule, extra: Vec::new() }
    }

    pub fn with(mut self, key: &str, value: impl ToString) -> Self {
        self.extra.push((key.to_string(), value.to_string()));
        self
    }

    pub fn write(&self, w: &mut dyn Write) -> Result<()> {
        writeln!(w, "# engine: twreach {}", crate::ENGINE_VERSION)?;
        writeln!(w, "# config-sha256: {}", self.config_hash)?;
        let s: Vec<String> = self.schedule.iter().map(|d| d.to_string()).collect();
        let s = if s.is_empty() { "none".to_string() } else { s.join(";") };
        writeln!(w, "# delta-schedule: {s}")?;
        for (k, v) in &self.extra {
            writeln!(w, "# {k}: {v}")?;
        }
        Ok(())
    }
}

fn csv_err(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e))
}

fn writer<'a>(w: &'a mut dyn Write, header: &Header) -> Result<csv::Writer<&'a mut dyn Write>> {
    header.write(w)?;
    Ok(csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(w))
}

fn bounds_columns(names: &[String]) -> Vec<String> {
    names.iter().flat_map(|n| [format!("{n}_lo"), format!("{n}_hi")]).collect()
}

/// Columns `t`, then per coordinate the node box `lo`/`hi`.
pub fn write_trace(w: &mut dyn Write, header: &Header, trace: &ValidatedTrace, names: &[String]) -> Result<()> {
    let mut c = writer(w, header)?;
    let mut head = vec!["t".to_string()];
    head.extend(bounds_columns(names));
    c.write_record(&head).map_err(csv_err)?;
    for (t, b) in trace.times.iter().zip(&trace.boxes) {
        let mut row = vec![t.to_string()];
        for iv in b {
            row.push(iv.lo.to_string());
            row.push(iv.hi.to_string());
        }
        c.write_record(&row).map_err(csv_err)?;
    }
    c.flush()?;
    Ok(())
}

/// Columns `segment,t_lo,t_hi`, then per coordinate `lo`/`hi`.
pub fn write_tube(w: &mut dyn Write, header: &Header, tube: &ReachTube, names: &[String]) -> Result<()> {
    let mut c = writer(w, header)?;
    let mut head = vec!["segment".to_string(), "t_lo".into(), "t_hi".into()];
    head.extend(bounds_columns(names));
    c.write_record(&head).map_err(csv_err)?;
    for (k, (b, (t0, t1))) in tube.segments.iter().enumerate() {
        let mut row = vec![k.to_string(), t0.to_string(), t1.to_string()];
        for iv in b {
            row.push(iv.lo.to_string());
            row.push(iv.hi.to_string());
        }
        c.write_record(&row).map_err(csv_err)?;
    }
    c.flush()?;
    Ok(())
}

/// Columns `region,delta,round,evaluated`, one verdict column per
/// property, then the per-axis interval. Coordinates `axes` of each cell
/// are written under `names`.
pub fn write_partition(
    w: &mut dyn Write,
    header: &Header,
    partition: &Partition,
    axes: &[usize],
    names: &[String],
) -> Result<()> {
    let mut c = writer(w, header)?;
    let mut head = vec!["region".to_string(), "delta".into(), "round".into(), "evaluated".into()];
    head.extend(partition.properties.iter().cloned());
    head.extend(bounds_columns(names));
    c.write_record(&head).map_err(csv_err)?;
    for (k, leaf) in partition.leaves.iter().enumerate() {
        let mut row = vec![k.to_string(), leaf.delta.to_string(), leaf.round.to_string(), leaf.evaluated.to_string()];
        row.extend(leaf.verdicts.iter().map(|v| v.to_string()));
        let b = leaf.cell.bounds();
        for &a in axes {
            row.push(b[a].lo.to_string());
            row.push(b[a].hi.to_string());
        }
        c.write_record(&row).map_err(csv_err)?;
    }
    c.flush()?;
    Ok(())
}

/// Per-round verdicts of every evaluated cell, for refinement heat maps.
pub fn write_rounds(
    w: &mut dyn Write,
    header: &Header,
    partition: &Partition,
    axes: &[usize],
    names: &[String],
) -> Result<()> {
    let mut c = writer(w, header)?;
    let mut head = vec!["round".to_string(), "delta".into(), "cell".into()];
    head.extend(partition.properties.iter().cloned());
    head.extend(bounds_columns(names));
    c.write_record(&head).map_err(csv_err)?;
    for r in &partition.rounds {
        for (k, (cell, verdicts)) in r.cells.iter().enumerate() {
            let mut row = vec![r.round.to_string(), r.delta.to_string(), k.to_string()];
            row.extend(verdicts.iter().map(|v| v.to_string()));
            let b = cell.bounds();
            for &a in axes {
                row.push(b[a].lo.to_string());
                row.push(b[a].hi.to_string());
            }
            c.write_record(&row).map_err(csv_err)?;
        }
    }
    c.flush()?;
    Ok(())
}

/// One row per contiguous certified region.
pub fn write_regions(w: &mut dyn Write, header: &Header, report: &RegionReport) -> Result<()> {
    let mut c = writer(w, header)?;
    let names: Vec<String> = report.axes.iter().map(|a| format!("p_{}", a.neuron)).collect();
    let mut head = vec!["behavior".to_string(), "region".into(), "cells".into(), "delta".into()];
    head.extend(bounds_columns(&names));
    head.push("measure_p".into());
    head.push("measure_g".into());
    c.write_record(&head).map_err(csv_err)?;
    for br in &report.behaviors {
        for (k, r) in br.regions.iter().enumerate() {
            let mut row = vec![br.behavior.to_string(), k.to_string(), r.cells.to_string(), r.delta.to_string()];
            for iv in &r.bounds {
                row.push(iv.lo.to_string());
                row.push(iv.hi.to_string());
            }
            let mp: f64 = r.bounds.iter().map(|i| i.hi - i.lo).product();
            let mg: f64 = r.bounds.iter().map(|i| 10.0 / i.lo - 10.0 / i.hi).product();
            row.push(mp.to_string());
            row.push(mg.to_string());
            c.write_record(&row).map_err(csv_err)?;
        }
    }
    c.flush()?;
    Ok(())
}

fn fmt_interval(lo: f64, hi: f64) -> String {
    format!("[{lo:.6}, {hi:.6}]")
}

/// Table with one line per behavior: certified ranges, measure, δ.
/// Contains no timing, so identical runs give identical text.
pub fn summary_table(report: &RegionReport) -> String {
    let mut s = String::new();
    let dims = report.axes.len();
    let unit = match dims {
        1 => "length",
        2 => "area",
        _ => "volume",
    };
    let axes: Vec<String> = report.axes.iter().map(|a| format!("p_{}", a.neuron)).collect();
    let _ = writeln!(s, "experiment {} (group {}, axes {})", report.name, report.group, axes.join(", "));
    let _ = writeln!(
        s,
        "{:<13} {:>8} {:>14} {:>14} {:>10}  ranges",
        "behavior", "regions", format!("{unit} (p)"), format!("{unit} (g)"), "min delta"
    );
    for br in &report.behaviors {
        let dmin = br.cells.iter().map(|c| c.1).fold(f64::INFINITY, f64::min);
        let ranges: Vec<String> = br
            .regions
            .iter()
            .take(4)
            .map(|r| r.bounds.iter().map(|i| fmt_interval(i.lo, i.hi)).collect::<Vec<_>>().join("x"))
            .collect();
        let more = if br.regions.len() > 4 { format!(" (+{} more)", br.regions.len() - 4) } else { String::new() };
        let _ = writeln!(
            s,
            "{:<13} {:>8} {:>14.6e} {:>14.6e} {:>10}  {}{}",
            br.behavior.as_str(),
            br.regions.len(),
            br.measure_p,
            br.measure_g,
            if dmin.is_finite() { format!("{dmin:.3e}") } else { "-".into() },
            if ranges.is_empty() { "none".to_string() } else { ranges.join(" ") },
            more
        );
    }
    let _ = writeln!(s, "unknown (p): {:.6e}", report.unknown_measure_p);
    if !report.conflicts.is_empty() {
        let _ = writeln!(s, "cells certified for several behaviors (excluded): {}", report.conflicts.len());
    }
    let _ = writeln!(
        s,
        "cell simulations: {}  unbounded tubes: {}  complete: {}",
        report.simulations, report.partition.numerical_failures, report.complete
    );
    s
}

pub fn trend_table(results: &[TrendResult]) -> String {
    let mut s = String::new();
    for r in results {
        let order: Vec<String> = r.ordering.iter().map(|(b, m)| format!("{b} ({m:.4e})")).collect();
        let verdict = match r.pass {
            Some(true) => "PASS",
            Some(false) => "FAIL",
            None => "n/a",
        };
        let _ = write!(s, "{:<10} {:<5} {}", r.group, verdict, order.join(" > "));
        if let Some(e) = r.expected {
            let _ = write!(s, "  [expected dominant: {e}]");
        }
        if let Some(n) = r.note {
            let _ = write!(s, "  note: {n}");
        }
        s.push('\n');
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::Linear;
    use crate::odesim::{simulate, SimConfig};

    #[test]
    fn hash_is_stable_and_separating() {
        let a = config_hash(&["ab", "c"]);
        assert_eq!(a.len(), 64);
        assert_eq!(a, config_hash(&["ab", "c"]));
        assert_ne!(a, config_hash(&["a", "bc"]));
    }

    #[test]
    fn trace_csv_layout() {
        let tr = simulate(&Linear::scalar(-1.0), &[1.0], &SimConfig::new(0.5, 1e-6, 1.0)).unwrap();
        let mut buf = Vec::new();
        let h = Header::new(config_hash(&["x"]), vec![0.1, 0.05]).with("command", "simulate");
        write_trace(&mut buf, &h, &tr, &["x".to_string()]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert!(lines[0].starts_with("# engine: twreach "));
        assert!(lines[1].starts_with("# config-sha256: "));
        assert_eq!(lines[2], "# delta-schedule: 0.1;0.05");
        assert_eq!(lines[3], "# command: simulate");
        assert_eq!(lines[4], "t,x_lo,x_hi");
        assert_eq!(lines.len(), 5 + tr.len());
        assert!(!text.contains('\r'));
    }
}
