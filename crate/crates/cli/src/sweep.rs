//! Parameter sweeps over the model parameter and cluster shapes.

use std::fmt::Write as _;

use clap::ValueEnum;
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::error::{CliError, CliResult};
use crate::run::run;

pub const SWEEP_FILE: &str = "sweep.csv";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum SweepParam {
    H,
    U,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepRow {
    pub parameter: f64,
    pub cluster: String,
    pub energy_per_site: Option<f64>,
    pub relaxation_error_per_site: Option<f64>,
    pub iterations: Option<usize>,
    /// `ok`, or the error message of a failed point.
    pub status: String,
}

/// Runs every (cluster, value) point; failures are recorded and skipped.
///
/// Each point writes its own files under `output_dir/<cluster>_<param><value>`
/// and the table goes to `output_dir/sweep.csv`.
pub fn sweep(
    template: &RunConfig,
    param: SweepParam,
    values: &[f64],
    clusters: &[String],
) -> CliResult<Vec<SweepRow>> {
    if values.is_empty() {
        return Err(CliError::Config(
            "the sweep needs at least one parameter value".into(),
        ));
    }
    let clusters = if clusters.is_empty() {
        vec![template.cluster.clone()]
    } else {
        clusters.to_vec()
    };
    let name = match param {
        SweepParam::H => "h",
        SweepParam::U => "u",
    };
    std::fs::create_dir_all(&template.output_dir).map_err(CliError::io(&template.output_dir))?;
    let mut rows = Vec::new();
    for cluster in &clusters {
        for &v in values {
            let mut cfg = template.clone();
            cfg.cluster = cluster.clone();
            cfg.resume_from = None;
            match param {
                SweepParam::H => cfg.h = v,
                SweepParam::U => cfg.u = v,
            }
            cfg.output_dir = template.output_dir.join(format!("{cluster}_{name}{v}"));
            let row = match run(&cfg) {
                Ok(r) => SweepRow {
                    parameter: v,
                    cluster: cluster.clone(),
                    energy_per_site: Some(r.energy_per_site),
                    relaxation_error_per_site: r.relaxation_error_per_site,
                    iterations: Some(r.iterations_run),
                    status: "ok".into(),
                },
                Err(e) => {
                    log::error!("point {name}={v}, cluster {cluster}: {e}");
                    SweepRow {
                        parameter: v,
                        cluster: cluster.clone(),
                        energy_per_site: None,
                        relaxation_error_per_site: None,
                        iterations: None,
                        status: e.to_string(),
                    }
                }
            };
            rows.push(row);
        }
    }
    let path = template.output_dir.join(SWEEP_FILE);
    std::fs::write(&path, render(&rows, name)).map_err(CliError::io(&path))?;
    Ok(rows)
}

fn render(rows: &[SweepRow], name: &str) -> String {
    let opt = |x: Option<f64>| x.map(|v| format!("{v:.16e}")).unwrap_or_default();
    let mut out =
        format!("{name},cluster,energy_per_site,relaxation_error_per_site,iterations,status\n");
    for r in rows {
        let mut status = r.status.replace(['"', '\n'], " ");
        if status.contains(',') {
            status = format!("\"{status}\"");
        }
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            r.parameter,
            r.cluster,
            opt(r.energy_per_site),
            opt(r.relaxation_error_per_site),
            r.iterations.map(|i| i.to_string()).unwrap_or_default(),
            status
        );
    }
    out
}
