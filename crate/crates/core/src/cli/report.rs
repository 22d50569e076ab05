use super::{io_err, CliError};
use crate::sim::SuiteResult;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

/// Result of `report`: the printed text and the files written.
#[derive(Debug, Clone)]
pub struct ReportSummary {
    pub text: String,
    pub written: Vec<PathBuf>,
}

#[derive(Debug, serde::Deserialize)]
struct TrajRow {
    t: f64,
    x: f64,
    y: f64,
    h: f64,
    intervened: u8,
}

fn read_traj(path: &Path) -> Result<Vec<TrajRow>, CliError> {
    let mut rd = csv::Reader::from_path(path).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
    rd.deserialize()
        .collect::<Result<Vec<TrajRow>, _>>()
        .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
}

fn suite_root(dir: &Path) -> Option<PathBuf> {
    [dir.join("suite"), dir.to_path_buf()]
        .into_iter()
        .find(|d| d.join("summary.json").is_file())
}

/// Aggregates a `simulate` output directory. Suites yield the success
/// table plus long-form `h_series.csv` and `paths.csv` for plotting; a
/// single-episode directory yields its metrics and the same two files.
pub fn cmd_report(dir: &Path) -> Result<ReportSummary, CliError> {
    let mut text = String::new();
    let mut series: Vec<(String, String, Vec<TrajRow>)> = Vec::new();
    let out_dir;
    if let Some(root) = suite_root(dir) {
        let path = root.join("summary.json");
        let raw = fs::read_to_string(&path).map_err(io_err(format!("reading {}", path.display())))?;
        let res: SuiteResult =
            serde_json::from_str(&raw).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
        text.push_str(&res.table());
        text.push('\n');
        text.push_str(&res.breakdown());
        for e in &res.episodes {
            let run = format!("{}_r{}", e.scenario, e.repeat);
            let t = root.join(e.mode.as_str()).join(&run).join("trajectory.csv");
            if t.is_file() {
                series.push((e.mode.as_str().to_string(), run, read_traj(&t)?));
            }
        }
        out_dir = root;
    } else if dir.join("trajectory.csv").is_file() {
        let m = dir.join("metrics.json");
        if let Ok(raw) = fs::read_to_string(&m) {
            text.push_str(&raw);
        }
        let run = dir.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        series.push((String::new(), run, read_traj(&dir.join("trajectory.csv"))?));
        out_dir = dir.to_path_buf();
    } else {
        return Err(CliError::Usage(format!(
            "{} holds no simulate output; expected suite/summary.json, summary.json, or trajectory.csv",
            dir.display()
        )));
    }

    let h_path = out_dir.join("h_series.csv");
    let p_path = out_dir.join("paths.csv");
    let mut h = Vec::new();
    let mut p = Vec::new();
    writeln!(h, "mode,run,t,h,intervened").ok();
    writeln!(p, "mode,run,t,x,y").ok();
    for (mode, run, rows) in &series {
        for r in rows {
            writeln!(h, "{mode},{run},{},{},{}", r.t, r.h, r.intervened).ok();
            writeln!(p, "{mode},{run},{},{},{}", r.t, r.x, r.y).ok();
        }
    }
    fs::write(&h_path, h).map_err(io_err(format!("writing {}", h_path.display())))?;
    fs::write(&p_path, p).map_err(io_err(format!("writing {}", p_path.display())))?;
    text.push_str(&format!("\nplot data: {} {}\n", h_path.display(), p_path.display()));
    Ok(ReportSummary {
        text,
        written: vec![h_path, p_path],
    })
}
