//! Whitespace-separated data files for plotting, one per plot.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use graph_fujita::dynamics::SweepRecord;
use graph_fujita::metrics::DistanceProfile;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PlotError {
    #[error("nothing to plot")]
    EmptyInput,
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

pub enum PlotData<'a> {
    /// Sweep records, reshaped to one `(σ, m, class_code)` row per cell.
    FrontierMap(&'a [SweepRecord]),
    /// `(d, Δd, 1/(2d))` per node with `d > 0`.
    Profile(&'a DistanceProfile),
    /// `(dt, residual)` pairs of a refinement study.
    Convergence(&'a [(f64, f64)]),
}

impl PlotData<'_> {
    pub fn file_name(&self) -> &'static str {
        match self {
            PlotData::FrontierMap(_) => "frontier_map.dat",
            PlotData::Profile(_) => "profile.dat",
            PlotData::Convergence(_) => "convergence.dat",
        }
    }
}

/// Numeric code of an outcome class name, matching the simulator's codes.
pub fn class_code(name: &str) -> i32 {
    match name {
        "blow_up" => 2,
        "steady" => 1,
        "decay" => 0,
        "extinction" => -1,
        _ => 9,
    }
}

/// Writes `data` into `dir` and returns the file path.
pub fn emit_plot_data(data: &PlotData<'_>, dir: &Path) -> Result<PathBuf, PlotError> {
    let path = dir.join(data.file_name());
    let io = |source| PlotError::Io { path: path.clone(), source };
    let body = render(data)?;
    std::fs::create_dir_all(dir).map_err(io)?;
    let mut w = BufWriter::new(File::create(&path).map_err(io)?);
    w.write_all(body.as_bytes()).and_then(|_| w.flush()).map_err(io)?;
    Ok(path)
}

fn render(data: &PlotData<'_>) -> Result<String, PlotError> {
    let mut out = String::new();
    match data {
        PlotData::FrontierMap(records) => {
            if records.is_empty() {
                return Err(PlotError::EmptyInput);
            }
            // one row per (σ, m); with several amplitudes the smallest one is shown
            let scale = records.iter().map(|r| r.u0_scale).fold(f64::INFINITY, f64::min);
            out.push_str("# class codes: blow_up 2, steady 1, decay 0, extinction -1, undecided 9\n");
            out.push_str(&format!("# u0_scale {scale}\n# sigma m class_code\n"));
            let mut rows: Vec<_> = records.iter().filter(|r| r.u0_scale == scale).collect();
            rows.sort_by(|a, b| a.sigma.total_cmp(&b.sigma).then(a.m.total_cmp(&b.m)));
            for r in rows {
                out.push_str(&format!("{} {} {}\n", r.sigma, r.m, class_code(&r.class)));
            }
        }
        PlotData::Profile(profile) => {
            let rows: Vec<_> = profile.entries.iter().filter(|e| e.d > 0.0).collect();
            if rows.is_empty() {
                return Err(PlotError::EmptyInput);
            }
            out.push_str(&format!("# rim starts at d = {}\n# d laplacian_d bound\n", profile.rim_start()));
            for e in rows {
                out.push_str(&format!("{} {} {}\n", e.d, e.laplacian_d, 0.5 / e.d));
            }
        }
        PlotData::Convergence(pairs) => {
            if pairs.is_empty() {
                return Err(PlotError::EmptyInput);
            }
            out.push_str("# dt residual\n");
            for (dt, r) in pairs.iter() {
                out.push_str(&format!("{dt} {r}\n"));
            }
        }
    }
    Ok(out)
}
