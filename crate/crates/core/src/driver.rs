//! Runs a validated experiment spec and writes its artifacts.

use std::fs;
use std::path::{Path, PathBuf};

use crate::config::{ExperimentSpec, Mode};
use crate::equilibrium::{analyze, replicate, sweep};
use crate::error::{Error, Result};
use crate::io::{
    write_atomic, write_cdf, write_costs, write_equilibrium, write_little, write_replica_costs, write_run, MANIFEST,
};
use crate::metrics::{approval_cdf, little_check};
use crate::sim::run;
use crate::tangle::snapshot;

/// Largest view exported as DOT.
pub const DOT_LIMIT: usize = 2000;

/// Approval-time grid of the `cdf` mode: 0 to 20 seconds in quarter steps.
pub fn cdf_grid() -> Vec<f64> {
    (0..=80).map(|i| i as f64 * 0.25).collect()
}

/// Failure classes reported by the command line, each with its own exit
/// code.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FailureClass {
    Config,
    Runtime,
    Io,
}

impl FailureClass {
    pub fn of(err: &Error) -> Self {
        match err {
            Error::Config(_) => FailureClass::Config,
            Error::Io(_) | Error::Csv(_) | Error::BadRecord { .. } => FailureClass::Io,
            _ => FailureClass::Runtime,
        }
    }

    pub fn exit_code(self) -> i32 {
        match self {
            FailureClass::Config => 2,
            FailureClass::Runtime => 3,
            FailureClass::Io => 4,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            FailureClass::Config => "config",
            FailureClass::Runtime => "runtime",
            FailureClass::Io => "io",
        }
    }
}

/// Output of [`execute`]: files written and notes for the user.
#[derive(Debug, Default)]
pub struct Report {
    pub files: Vec<PathBuf>,
    pub notes: Vec<String>,
}

/// Runs the experiment in `spec.mode`, writing its CSVs and a manifest into
/// `out`. With `dump_dot`, single mode also writes the final tangle as DOT
/// when it has fewer than [`DOT_LIMIT`] vertices.
pub fn execute(spec: &ExperimentSpec, out: &Path, dump_dot: Option<&Path>) -> Result<Report> {
    spec.validate()?;
    fs::create_dir_all(out)?;
    let mut report = Report::default();
    let manifest = spec.to_manifest();
    let mut write = |name: &str, fill: &mut dyn FnMut(&mut dyn std::io::Write) -> Result<()>| -> Result<()> {
        let path = out.join(name);
        write_atomic(&path, |w| fill(w))?;
        report.files.push(path);
        Ok(())
    };
    match spec.mode {
        Mode::Single => {
            let output = run(&spec.sim)?;
            write_run(out, &output, &manifest)?;
            if let Some(path) = dump_dot {
                let view = snapshot(&output.tangle, spec.sim.t_end, 0.0);
                if view.len() < DOT_LIMIT {
                    write_atomic(path, |w| Ok(w.write_all(view.to_dot().as_bytes())?))?;
                    report.files.push(path.to_path_buf());
                } else {
                    report.notes.push(format!(
                        "DOT export skipped: the tangle has {} vertices, the limit is {DOT_LIMIT}",
                        view.len()
                    ));
                }
            }
            for name in [crate::io::TRANSACTIONS_CSV, crate::io::TIPS_CSV, crate::io::UNCONFIRMED_CSV, MANIFEST] {
                report.files.push(out.join(name));
            }
            return Ok(report);
        }
        Mode::Sweep => match sweep(&spec.sim, &spec.p_grid, spec.replicas) {
            Ok(result) => {
                let equilibrium = analyze(&result.curves, &spec.gammas, spec.n_nodes)?;
                write("costs.csv", &mut |w| write_costs(w, &result.curves.points))?;
                for (i, point) in result.points.iter().enumerate() {
                    write(&format!("costs_p{i:02}.csv"), &mut |w| write_replica_costs(w, &point.runs))?;
                }
                write("equilibrium.csv", &mut |w| write_equilibrium(w, &result.curves, &equilibrium))?;
            }
            Err(failure) => {
                let partial: Vec<_> = failure.completed.iter().map(|p| p.summary).collect();
                write("costs_partial.csv", &mut |w| write_costs(w, &partial))?;
                return Err(failure.source);
            }
        },
        Mode::Cdf => {
            let runs = replicate(&spec.sim, spec.replicas)?;
            let cdf = approval_cdf(&runs, &cdf_grid())?;
            write("cdf.csv", &mut |w| write_cdf(w, &cdf))?;
        }
        Mode::Little => {
            let runs = replicate(&spec.sim, spec.replicas)?;
            let check = little_check(&runs)?;
            write("little.csv", &mut |w| write_little(w, &check))?;
        }
    }
    write(MANIFEST, &mut |w| Ok(w.write_all(manifest.as_bytes())?))?;
    Ok(report)
}
