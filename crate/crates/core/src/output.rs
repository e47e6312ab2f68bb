//! Plot-ready plain-text outputs: series CSVs, rescaled-curve CSVs, matrices
//! with metadata sidecars, and key=value reports.
//!
//! Floats are rendered with the shortest round-trip representation, so
//! identical data always produces identical bytes.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::Result;
use crate::observables::{log_thin, ObservableSeries};
use crate::scaling::CollapseResult;

/// Series CSV: `# time_unit=...` comment, then `t,value,n_configs,label`.
pub fn render_series_csv(series: &ObservableSeries, thin: bool) -> String {
    let thinned;
    let series = if thin {
        thinned = log_thin(series, 1000, 100);
        &thinned
    } else {
        series
    };
    let mut out = String::new();
    let _ = writeln!(out, "# time_unit={}", series.label.time_unit());
    out.push_str("t,value,n_configs,label\n");
    for (t, v) in series.points() {
        let _ = writeln!(out, "{t},{v},{},{}", series.n_configs, series.label.as_str());
    }
    out
}

pub fn write_series_csv(path: &Path, series: &ObservableSeries, thin: bool) -> Result<()> {
    fs::write(path, render_series_csv(series, thin))?;
    Ok(())
}

/// Space-separated matrix, one row per line.
pub fn write_matrix(path: &Path, rows: &[Vec<f64>]) -> Result<()> {
    let mut out = String::new();
    for row in rows {
        let mut first = true;
        for v in row {
            if !first {
                out.push(' ');
            }
            let _ = write!(out, "{v}");
            first = false;
        }
        out.push('\n');
    }
    fs::write(path, out)?;
    Ok(())
}

/// key=value sidecar / report, keys in the given order.
pub fn write_keyvalues(path: &Path, pairs: &[(&str, String)]) -> Result<()> {
    let mut out = String::new();
    for (k, v) in pairs {
        let _ = writeln!(out, "{k} = {v}");
    }
    fs::write(path, out)?;
    Ok(())
}

/// Rescaled collapse curves: `t_rescaled,value_rescaled,curve_id`.
pub fn write_collapse_csv(path: &Path, result: &CollapseResult) -> Result<()> {
    let mut out = String::new();
    out.push_str("t_rescaled,value_rescaled,curve_id\n");
    for curve in &result.curves {
        for (t, v) in &curve.points {
            let _ = writeln!(out, "{t},{v},{}", curve.id);
        }
    }
    fs::write(path, out)?;
    Ok(())
}

/// Quality table: `exponent,quality`.
pub fn write_quality_csv(path: &Path, table: &[(f64, f64)]) -> Result<()> {
    let mut out = String::new();
    out.push_str("exponent,quality\n");
    for (e, q) in table {
        let _ = writeln!(out, "{e},{q}");
    }
    fs::write(path, out)?;
    Ok(())
}

/// Lyapunov sweep: `beta,lambda_max,stderr`.
pub fn write_lyapunov_csv(path: &Path, rows: &[(f64, f64, f64)]) -> Result<()> {
    let mut out = String::new();
    out.push_str("beta,lambda_max,stderr\n");
    for (beta, lambda, stderr) in rows {
        let _ = writeln!(out, "{beta},{lambda},{stderr}");
    }
    fs::write(path, out)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::observables::SeriesLabel;

    #[test]
    fn series_csv_format() {
        let s = ObservableSeries {
            times: vec![1, 2],
            values: vec![0.5, 0.25],
            n_configs: 3,
            label: SeriesLabel::FlipRate,
        };
        let text = render_series_csv(&s, false);
        assert_eq!(
            text,
            "# time_unit=observable_steps\nt,value,n_configs,label\n1,0.5,3,flip_rate\n2,0.25,3,flip_rate\n"
        );
    }

    #[test]
    fn damage_series_uses_micro_steps() {
        let s = ObservableSeries {
            times: vec![0],
            values: vec![0.1],
            n_configs: 1,
            label: SeriesLabel::DamageFine,
        };
        assert!(render_series_csv(&s, false).starts_with("# time_unit=micro_steps"));
    }

    #[test]
    fn float_rendering_round_trips() {
        let v = 0.1 + 0.2;
        let text = format!("{v}");
        assert_eq!(text.parse::<f64>().unwrap(), v);
    }
}
