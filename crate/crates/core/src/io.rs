//! CSV artifacts with fixed column orders, readers for the simulator's own
//! files, and atomic file writes (temp file in the target directory, renamed
//! into place once complete).

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use crate::config::{parse_config, ExperimentSpec};
use crate::equilibrium::{CostCurves, EquilibriumReport};
use crate::error::{Error, Result};
use crate::metrics::{CdfPoint, CostSummary, LittleCheck, RunData, TxRow};
use crate::sim::{SeriesPoint, SimOutput};

pub const TRANSACTIONS_CSV: &str = "transactions.csv";
pub const TIPS_CSV: &str = "tips.csv";
pub const UNCONFIRMED_CSV: &str = "unconfirmed.csv";
pub const MANIFEST: &str = "manifest.txt";

pub const TRANSACTIONS_HEADER: [&str; 6] =
    ["logical_id", "strategy", "issue_time", "first_approval_time", "W", "reissues"];
pub const COSTS_HEADER: [&str; 5] = ["p", "mean_S0", "se_S0", "mean_S1", "se_S1"];

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map_or_else(String::new, |x| x.to_string())
}

/// Writes a file by filling a temp file next to it and renaming it into
/// place, so a failure never leaves a partial file at `path`.
pub fn write_atomic(path: &Path, fill: impl FnOnce(&mut dyn Write) -> Result<()>) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    {
        let mut buf = std::io::BufWriter::new(tmp.as_file_mut());
        fill(&mut buf)?;
        buf.flush()?;
    }
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}

pub fn write_transactions(w: &mut dyn Write, rows: &[TxRow]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(TRANSACTIONS_HEADER)?;
    for r in rows {
        out.write_record([
            r.logical_id.to_string(),
            r.strategy.to_string(),
            r.issue_time.to_string(),
            opt(r.first_approval_time),
            opt(r.w),
            r.reissues.to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

fn field<T: std::str::FromStr>(rec: &csv::StringRecord, i: usize, name: &str, line: u64) -> Result<T> {
    let raw = rec.get(i).unwrap_or("");
    raw.trim()
        .parse()
        .map_err(|_| Error::BadRecord { record: line, message: format!("cannot parse {name} from {raw:?}") })
}

fn opt_field<T: std::str::FromStr>(rec: &csv::StringRecord, i: usize, name: &str, line: u64) -> Result<Option<T>> {
    if rec.get(i).is_none_or(|s| s.trim().is_empty()) {
        Ok(None)
    } else {
        field(rec, i, name, line).map(Some)
    }
}

fn time_field(rec: &csv::StringRecord, i: usize, name: &str, line: u64) -> Result<f64> {
    let t: f64 = field(rec, i, name, line)?;
    if !t.is_finite() || t < 0.0 {
        return Err(Error::BadRecord { record: line, message: format!("{name} must be finite and >= 0") });
    }
    Ok(t)
}

fn check_header(reader: &mut csv::Reader<impl Read>, expected: &[&str]) -> Result<()> {
    let header = reader.headers()?;
    if header.len() != expected.len() || header.iter().zip(expected).any(|(a, b)| a.trim() != *b) {
        return Err(Error::BadRecord {
            record: 0,
            message: format!("expected columns {}, got {}", expected.join(","), header.iter().collect::<Vec<_>>().join(",")),
        });
    }
    Ok(())
}

pub fn read_transactions(r: impl Read) -> Result<Vec<TxRow>> {
    let mut reader = csv::ReaderBuilder::new().flexible(false).from_reader(r);
    check_header(&mut reader, &TRANSACTIONS_HEADER)?;
    let mut rows = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec?;
        let line = i as u64 + 1;
        let issue_time = time_field(&rec, 2, "issue_time", line)?;
        let first_approval_time = match opt_field::<f64>(&rec, 3, "first_approval_time", line)? {
            Some(_) => Some(time_field(&rec, 3, "first_approval_time", line)?),
            None => None,
        };
        rows.push(TxRow {
            logical_id: field(&rec, 0, "logical_id", line)?,
            strategy: field(&rec, 1, "strategy", line)?,
            issue_time,
            first_approval_time,
            w: opt_field(&rec, 4, "W", line)?,
            reissues: field(&rec, 5, "reissues", line)?,
        });
    }
    Ok(rows)
}

/// Writes a `(time, value_column)` series.
pub fn write_series(w: &mut dyn Write, value_column: &str, points: &[SeriesPoint]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["time", value_column])?;
    for p in points {
        out.write_record([p.time.to_string(), p.value.to_string()])?;
    }
    out.flush()?;
    Ok(())
}

/// Reads a two-column series with a `time` column first; times must not
/// decrease.
pub fn read_series(r: impl Read) -> Result<Vec<SeriesPoint>> {
    let mut reader = csv::ReaderBuilder::new().flexible(false).from_reader(r);
    let header = reader.headers()?.clone();
    if header.len() != 2 || header.get(0).map(str::trim) != Some("time") {
        return Err(Error::BadRecord { record: 0, message: "expected columns time,<value>".into() });
    }
    let mut points: Vec<SeriesPoint> = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec?;
        let line = i as u64 + 1;
        let time = time_field(&rec, 0, "time", line)?;
        if points.last().is_some_and(|p| p.time > time) {
            return Err(Error::BadRecord { record: line, message: "time decreases".into() });
        }
        points.push(SeriesPoint { time, value: field(&rec, 1, "value", line)? });
    }
    Ok(points)
}

pub fn write_costs(w: &mut dyn Write, points: &[CostSummary]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(COSTS_HEADER)?;
    for s in points {
        out.write_record([
            s.p_greedy.to_string(),
            opt(s.s0.map(|c| c.mean)),
            opt(s.s0.map(|c| c.se)),
            opt(s.s1.map(|c| c.mean)),
            opt(s.s1.map(|c| c.se)),
        ])?;
    }
    out.flush()?;
    Ok(())
}

/// Per-replica costs at one grid point.
pub fn write_replica_costs(w: &mut dyn Write, runs: &[RunData]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["replica", "mean_S0", "n_S0", "mean_S1", "n_S1"])?;
    for (i, run) in runs.iter().enumerate() {
        let s = crate::metrics::mean_costs(std::slice::from_ref(run))?;
        out.write_record([
            i.to_string(),
            opt(s.s0.map(|c| c.mean)),
            s.s0.map_or(0, |c| c.n).to_string(),
            opt(s.s1.map(|c| c.mean)),
            s.s1.map_or(0, |c| c.n).to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_cdf(w: &mut dyn Write, points: &[CdfPoint]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["t", "cdf", "cdf_approved"])?;
    for p in points {
        out.write_record([p.t.to_string(), p.all.to_string(), p.approved.to_string()])?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_little(w: &mut dyn Write, c: &LittleCheck) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["p", "observed", "predicted", "ratio"])?;
    out.write_record([c.p.to_string(), c.observed.to_string(), c.predicted.to_string(), c.ratio.to_string()])?;
    out.flush()?;
    Ok(())
}

/// One row per grid point with raw and fitted costs, followed by the
/// crossing and, for each `gamma`, the regime, stability and `theta0`. The
/// crossing and per-gamma columns repeat on every row.
pub fn write_equilibrium(w: &mut dyn Write, curves: &CostCurves, report: &EquilibriumReport) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    let mut header: Vec<String> =
        ["p", "mean_S0", "mean_S1", "fit_S0", "fit_S1", "p_bar", "p_bar_raw", "roots"].map(String::from).to_vec();
    for g in &report.per_gamma {
        for col in ["regime", "stable", "theta0"] {
            header.push(format!("{col}_gamma{}", g.gamma));
        }
    }
    out.write_record(&header)?;
    let x = &report.crossing;
    let roots = x.roots.iter().map(f64::to_string).collect::<Vec<_>>().join(";");
    for s in &curves.points {
        let p = s.p_greedy;
        let fit = |f: &Option<crate::equilibrium::Fit>| {
            opt(f.as_ref().filter(|f| f.lo <= p && p <= f.hi).map(|f| f.poly.eval(p)))
        };
        let mut rec = vec![
            p.to_string(),
            opt(s.s0.map(|c| c.mean)),
            opt(s.s1.map(|c| c.mean)),
            fit(&curves.s0),
            fit(&curves.s1),
            opt(x.p_bar),
            opt(x.raw),
            roots.clone(),
        ];
        for g in &report.per_gamma {
            rec.push(g.regime.to_string());
            rec.push(opt(g.stability.map(|s| s.stable)));
            rec.push(g.theta0.to_string());
        }
        out.write_record(&rec)?;
    }
    out.flush()?;
    Ok(())
}

pub fn transaction_rows(out: &SimOutput) -> Vec<TxRow> {
    RunData::from_output(out).rows
}

/// Writes the three simulator CSVs and the manifest into `dir`.
pub fn write_run(dir: &Path, out: &SimOutput, manifest: &str) -> Result<()> {
    fs::create_dir_all(dir)?;
    let rows = transaction_rows(out);
    write_atomic(&dir.join(TRANSACTIONS_CSV), |w| write_transactions(w, &rows))?;
    write_atomic(&dir.join(TIPS_CSV), |w| write_series(w, "L", &out.tips_series))?;
    write_atomic(&dir.join(UNCONFIRMED_CSV), |w| write_series(w, "count", &out.unconfirmed_series))?;
    write_atomic(&dir.join(MANIFEST), |w| Ok(w.write_all(manifest.as_bytes())?))?;
    Ok(())
}

/// Reloads a run written by [`write_run`].
pub fn load_run(dir: &Path) -> Result<(ExperimentSpec, RunData)> {
    let spec = parse_config(&fs::read_to_string(dir.join(MANIFEST))?)?;
    let rows = read_transactions(fs::File::open(dir.join(TRANSACTIONS_CSV))?)?;
    let unconfirmed = read_series(fs::File::open(dir.join(UNCONFIRMED_CSV))?)?;
    let c = &spec.sim;
    let data = RunData {
        lambda: c.lambda,
        k_reattach: c.k_reattach,
        m0: c.m0,
        warmup: c.warmup,
        t_end: c.t_end,
        p_greedy: c.p_greedy,
        rows,
        unconfirmed,
    };
    Ok((spec, data))
}
