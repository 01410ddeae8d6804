use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use super::experiment::{ArmTrace, ExperimentOutput};
use crate::error::{Error, Result};

pub const CSV_HEADER: &str = "iteration,arm,msd_db,consensus_dist_sq,max_slab_dist,alpha";

/// Seventeen significant digits in scientific notation.
pub fn format_float(x: f64) -> String {
    format!("{x:.16e}")
}

/// One row per `(iteration, arm)`, iterations outermost.
pub fn summary_csv(traces: &[ArmTrace]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    let len = traces.iter().map(|t| t.records.len()).max().unwrap_or(0);
    for n in 0..len {
        for t in traces {
            let Some(r) = t.records.get(n) else { continue };
            let _ = writeln!(
                out,
                "{},{},{},{},{},{}",
                r.iteration,
                t.arm,
                format_float(r.msd_db),
                format_float(r.consensus_dist_sq),
                format_float(r.max_slab_dist),
                format_float(r.alpha)
            );
        }
    }
    out
}

fn write(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

/// Writes `summary.csv`, `run_NNN.csv` (when enabled), `config.json` and
/// `plot.gp` into `dir`. Returns the summary path.
pub fn write_outputs(output: &ExperimentOutput, dir: &Path) -> Result<PathBuf> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let summary = dir.join("summary.csv");
    write(&summary, &summary_csv(&output.summary))?;
    if output.config.per_run_csv {
        for (r, traces) in output.runs.iter().enumerate() {
            write(&dir.join(format!("run_{r:03}.csv")), &summary_csv(traces))?;
        }
    }
    write(&dir.join("config.json"), &output.config.to_json())?;
    emit_plot_script(&summary, &dir.join("plot.gp"))?;
    Ok(summary)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub iteration: usize,
    pub arm: String,
    pub msd_db: f64,
    pub consensus_dist_sq: f64,
    pub max_slab_dist: f64,
    pub alpha: f64,
}

pub fn read_summary_csv(path: &Path) -> Result<Vec<SummaryRow>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let parse_err = |line: usize, msg: &str| Error::Parse {
        path: path.to_path_buf(),
        message: format!("line {line}: {msg}"),
    };
    let mut lines = text.lines();
    match lines.next() {
        None => return Ok(Vec::new()),
        Some(h) if h == CSV_HEADER => {}
        Some(_) => return Err(parse_err(1, "unexpected header")),
    }
    lines
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, line)| {
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 6 {
                return Err(parse_err(i + 2, "expected 6 fields"));
            }
            let num = |s: &str| s.parse::<f64>().map_err(|_| parse_err(i + 2, "bad number"));
            Ok(SummaryRow {
                iteration: f[0].parse().map_err(|_| parse_err(i + 2, "bad iteration"))?,
                arm: f[1].to_string(),
                msd_db: num(f[2])?,
                consensus_dist_sq: num(f[3])?,
                max_slab_dist: num(f[4])?,
                alpha: num(f[5])?,
            })
        })
        .collect()
}

/// Writes a gnuplot script with MSD and consensus-distance panels, one curve
/// per arm. The data file is referenced by its bare file name, so the script
/// must sit next to the CSV.
pub fn emit_plot_script(summary_csv: &Path, script: &Path) -> Result<()> {
    let rows = read_summary_csv(summary_csv)?;
    let mut arms: Vec<String> = Vec::new();
    for r in &rows {
        if !arms.contains(&r.arm) {
            arms.push(r.arm.clone());
        }
    }
    let data = summary_csv
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| "summary.csv".into());
    let image = script
        .file_stem()
        .map(|n| format!("{}.png", n.to_string_lossy()))
        .unwrap_or_else(|| "plot.png".into());

    let panel = |column: usize| -> String {
        if arms.is_empty() {
            return "plot NaN notitle".into();
        }
        let curves: Vec<String> = arms
            .iter()
            .map(|a| {
                format!(
                    "'{data}' using 1:(strcol(2) eq \"{a}\" ? ${column} : 1/0) with lines title \"{a}\""
                )
            })
            .collect();
        format!("plot {}", curves.join(", \\\n     "))
    };

    let mut s = String::new();
    s.push_str("set datafile separator ','\n");
    s.push_str("set terminal pngcairo size 900,900\n");
    let _ = writeln!(s, "set output '{image}'");
    s.push_str("set key autotitle columnhead\n");
    s.push_str("set multiplot layout 2,1\n");
    s.push_str("set xlabel 'iteration'\n");
    s.push_str("set ylabel 'MSD (dB)'\n");
    let _ = writeln!(s, "{}", panel(3));
    s.push_str("set ylabel 'consensus distance^2'\n");
    s.push_str("set logscale y\n");
    let _ = writeln!(s, "{}", panel(4));
    s.push_str("unset multiplot\n");
    write(script, &s)
}
