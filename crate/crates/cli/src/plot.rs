//! Two-column plot-data emission. Every subcommand's CSV outputs are
//! distilled into `.dat` series (x y per line, full precision) plus a
//! gnuplot stub; any plotting tool that reads whitespace columns works.

use experiments::ExperimentError;
use std::io::Write;
use std::path::{Path, PathBuf};

/// Which CSV columns become which .dat series, per subcommand.
fn series_map(subcommand: &str) -> &'static [(&'static str, &'static str, &'static str, &'static str)] {
    match subcommand {
        "contraction" => &[("contraction_pairs.csv", "ratio_vs_time.dat", "time", "ratio")],
        "mass" => &[("mass_cases.csv", "mass_drift.dat", "kappa", "running_rel_dev")],
        "cocycle" => &[("cocycle_gaps.csv", "restart_gaps.dat", "dt", "gap")],
        "noise-cts" => &[
            ("continuity_gaps.csv", "driver_gaps.dat", "level", "driver_gap"),
            ("continuity_gaps.csv", "solution_gaps.dat", "level", "solution_gap"),
        ],
        "vanishing-reg" => &[
            ("regularization_sweep.csv", "viscosity_sweep.dat", "eta", "gap_to_next"),
            ("energy_ledger.csv", "ledger_residuals.dat", "nodes", "residual"),
        ],
        "flow-stability" => &[(
            "stability_pairs.csv",
            "stability_scatter.dat",
            "rough_metric",
            "flow_distance",
        )],
        "characteristics" => &[("flow_trajectories.csv", "flow_x_vs_t.dat", "t", "x")],
        _ => &[],
    }
}

/// Extract two named columns of a CSV into an `x y` series. Rows whose cells
/// do not parse as finite numbers are skipped (some tables carry sentinel
/// strings such as "event-aligned"). Returns the number of rows written.
pub fn csv_to_dat(
    csv_path: &Path,
    dat_path: &Path,
    x_col: &str,
    y_col: &str,
) -> Result<usize, ExperimentError> {
    let mut rdr = csv::Reader::from_path(csv_path)?;
    let headers = rdr.headers()?.clone();
    let col = |name: &str| headers.iter().position(|h| h == name);
    let (Some(xi), Some(yi)) = (col(x_col), col(y_col)) else {
        return Err(ExperimentError::BadConfig(format!(
            "{} has no columns '{x_col}'/'{y_col}' (found {:?})",
            csv_path.display(),
            headers.iter().collect::<Vec<_>>()
        )));
    };
    let mut out = std::fs::File::create(dat_path)?;
    let mut written = 0;
    for record in rdr.records() {
        let record = record?;
        let parse = |i: usize| record.get(i).and_then(|s| s.parse::<f64>().ok());
        if let (Some(x), Some(y)) = (parse(xi), parse(yi)) {
            if x.is_finite() && y.is_finite() {
                writeln!(out, "{x:.17e} {y:.17e}")?;
                written += 1;
            }
        }
    }
    Ok(written)
}

/// Emit the plot-data series and the gnuplot stub for one finished run.
/// Skips any series whose CSV is absent (configs may disable parts of a
/// campaign) and returns the files actually written.
pub fn emit(subcommand: &str, out_dir: &Path) -> Result<Vec<PathBuf>, ExperimentError> {
    let mut written = Vec::new();
    for (csv_name, dat_name, x_col, y_col) in series_map(subcommand) {
        let csv_path = out_dir.join(csv_name);
        if !csv_path.is_file() {
            continue;
        }
        let dat_path = out_dir.join(dat_name);
        if csv_to_dat(&csv_path, &dat_path, x_col, y_col)? > 0 {
            written.push(dat_path);
        } else {
            std::fs::remove_file(&dat_path)?;
        }
    }
    // solve and analyze write their .dat series directly.
    for name in ["mass_series.dat", "bv_profile.dat"] {
        let p = out_dir.join(name);
        if p.is_file() && !written.contains(&p) {
            written.push(p);
        }
    }
    if !written.is_empty() {
        let stub = out_dir.join("plot.gp");
        let mut f = std::fs::File::create(&stub)?;
        writeln!(f, "# Generated plotting stub; the .dat files are plain x y columns.")?;
        writeln!(f, "set key left top")?;
        for (i, dat) in written.iter().enumerate() {
            let name = dat.file_name().unwrap().to_string_lossy();
            let verb = if i == 0 { "plot" } else { "replot" };
            writeln!(f, "{verb} \"{name}\" using 1:2 with linespoints title \"{name}\"")?;
        }
        writeln!(f, "pause -1")?;
        written.push(stub);
    }
    Ok(written)
}
