//! Exponent estimation and scaling collapses: log-log power-law fits, the
//! nonlinear-correction fit for persistence, finite-size and off-critical
//! collapses with a numeric collapse-quality score.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::observables::ObservableSeries;

/// Points used by the common-grid quality score.
const QUALITY_GRID: usize = 50;
/// Minimum points in a power-law fit window.
const MIN_FIT_POINTS: usize = 5;
/// Default fit window: the last 1.5 decades of available (positive) time.
const DEFAULT_WINDOW_DECADES: f64 = 1.5;

/// Least-squares line on log t vs log value.
#[derive(Debug, Clone)]
pub struct PowerLawFit {
    /// decay exponent (minus the log-log slope)
    pub exponent: f64,
    pub amplitude: f64,
    pub window: (f64, f64),
    /// RMS residual of the log-log fit
    pub residual: f64,
}

fn linear_fit(xs: &[f64], ys: &[f64]) -> (f64, f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for (x, y) in xs.iter().zip(ys) {
        sxx += (x - mx) * (x - mx);
        sxy += (x - mx) * (y - my);
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let mut rss = 0.0;
    for (x, y) in xs.iter().zip(ys) {
        let r = y - (intercept + slope * x);
        rss += r * r;
    }
    (slope, intercept, (rss / n).sqrt())
}

/// Positive (t, v) points of a series with t >= 1.
fn positive_points(series: &ObservableSeries) -> Vec<(f64, f64)> {
    series
        .points()
        .filter(|&(t, v)| t >= 1 && v > 0.0)
        .map(|(t, v)| (t as f64, v))
        .collect()
}

/// Default window over the positive support: [t_last / 10^1.5, t_last].
pub fn default_fit_window(series: &ObservableSeries) -> Result<(f64, f64)> {
    let pts = positive_points(series);
    let Some(&(t_last, _)) = pts.last() else {
        return Err(Error::WindowTooSmall {
            points: 0,
            min: MIN_FIT_POINTS,
        });
    };
    Ok((t_last / 10f64.powf(DEFAULT_WINDOW_DECADES), t_last))
}

/// Fit value = A t^-e on the window by least squares in log-log coordinates.
/// Values <= 0 inside the window are an error, not silently dropped.
pub fn fit_power_law(
    series: &ObservableSeries,
    window: Option<(f64, f64)>,
) -> Result<PowerLawFit> {
    let window = match window {
        Some(w) => w,
        None => default_fit_window(series)?,
    };
    if !(window.0 < window.1) {
        return Err(Error::validation(format!(
            "fit window empty: ({}, {})",
            window.0, window.1
        )));
    }
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for (t, v) in series.points() {
        let tf = t as f64;
        if tf < window.0 || tf > window.1 || t == 0 {
            continue;
        }
        if v <= 0.0 {
            return Err(Error::NonPositiveValue { t, value: v });
        }
        xs.push(tf.ln());
        ys.push(v.ln());
    }
    if xs.len() < MIN_FIT_POINTS {
        return Err(Error::WindowTooSmall {
            points: xs.len(),
            min: MIN_FIT_POINTS,
        });
    }
    let (slope, intercept, residual) = linear_fit(&xs, &ys);
    Ok(PowerLawFit {
        exponent: -slope,
        amplitude: intercept.exp(),
        window,
        residual,
    })
}

/// Local-slope diagnostic: -d log v / d log t over point pairs roughly a
/// factor `ratio` apart in time. Returns (geometric-mean t, local exponent).
pub fn local_slopes(series: &ObservableSeries, ratio: f64) -> Vec<(f64, f64)> {
    let pts = positive_points(series);
    let mut out = Vec::new();
    let mut j = 0usize;
    for i in 0..pts.len() {
        let (ti, vi) = pts[i];
        if j <= i {
            j = i + 1;
        }
        while j < pts.len() && pts[j].0 < ti * ratio {
            j += 1;
        }
        if j >= pts.len() {
            break;
        }
        let (tj, vj) = pts[j];
        let slope = -(vj.ln() - vi.ln()) / (tj.ln() - ti.ln());
        out.push(((ti * tj).sqrt(), slope));
    }
    out
}

/// P(t) ~ C t^-theta (1 + c1 t^-gamma), fitted by linear regression of
/// P(t) t^theta against t^-gamma for each candidate gamma.
#[derive(Debug, Clone)]
pub struct CorrectedFit {
    pub theta: f64,
    pub gamma: f64,
    pub c: f64,
    pub c1: f64,
    /// RMS residual of the winning linear fit
    pub linearity_residual: f64,
}

pub fn fit_corrected_power_law(
    series: &ObservableSeries,
    theta: f64,
    gamma_candidates: &[f64],
) -> Result<CorrectedFit> {
    if gamma_candidates.is_empty() {
        return Err(Error::validation("gamma candidate list is empty"));
    }
    for (t, v) in series.points() {
        if t >= 1 && v <= 0.0 {
            return Err(Error::NonPositiveValue { t, value: v });
        }
    }
    let pts: Vec<(f64, f64)> = series
        .points()
        .filter(|&(t, _)| t >= 1)
        .map(|(t, v)| (t as f64, v))
        .collect();
    if pts.len() < MIN_FIT_POINTS {
        return Err(Error::WindowTooSmall {
            points: pts.len(),
            min: MIN_FIT_POINTS,
        });
    }
    let mut best: Option<CorrectedFit> = None;
    for &gamma in gamma_candidates {
        if !(gamma > 0.0) {
            return Err(Error::validation(format!(
                "gamma candidates must be positive, got {gamma}"
            )));
        }
        let xs: Vec<f64> = pts.iter().map(|(t, _)| t.powf(-gamma)).collect();
        let ys: Vec<f64> = pts.iter().map(|(t, v)| v * t.powf(theta)).collect();
        let (slope, intercept, residual) = linear_fit(&xs, &ys);
        let fit = CorrectedFit {
            theta,
            gamma,
            c: intercept,
            c1: slope / intercept,
            linearity_residual: residual,
        };
        if best
            .as_ref()
            .map_or(true, |b| fit.linearity_residual < b.linearity_residual)
        {
            best = Some(fit);
        }
    }
    Ok(best.expect("non-empty candidate list"))
}

/// One rescaled curve of a collapse: points (t / t_c, v / v(t_c)).
#[derive(Debug, Clone)]
pub struct RescaledCurve {
    pub id: String,
    pub t_c: f64,
    pub points: Vec<(f64, f64)>,
}

/// Result of a scaling collapse. Lower quality is a better collapse.
#[derive(Debug, Clone)]
pub struct CollapseResult {
    /// (decay exponent delta or theta, rescaling exponent z or nu_parallel)
    pub exponent_pair: (f64, f64),
    pub curves: Vec<RescaledCurve>,
    pub quality: f64,
}

/// Value of the measured curve at time `t_c` by linear interpolation of
/// log v against log t over the positive points. If t_c falls outside the
/// positive support the boundary trend (least-squares slope over the nearest
/// 1.5 decades) is extended; candidate rescaling exponents can place t_c
/// beyond the data, and the comparison must still be evaluable.
fn value_at_log(pts: &[(f64, f64)], t_c: f64) -> Result<f64> {
    if pts.len() < 2 {
        return Err(Error::WindowTooSmall {
            points: pts.len(),
            min: 2,
        });
    }
    if !(t_c > 0.0) {
        return Err(Error::validation(format!("t_c must be positive, got {t_c}")));
    }
    let lx = t_c.ln();
    let first = pts.first().unwrap();
    let last = pts.last().unwrap();
    if t_c <= first.0 || t_c >= last.0 {
        // extrapolate from the boundary trend
        let anchor = if t_c <= first.0 { first.0 } else { last.0 };
        let (lo, hi) = if t_c <= first.0 {
            (anchor, anchor * 10f64.powf(DEFAULT_WINDOW_DECADES))
        } else {
            (anchor / 10f64.powf(DEFAULT_WINDOW_DECADES), anchor)
        };
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for &(t, v) in pts {
            if t >= lo && t <= hi {
                xs.push(t.ln());
                ys.push(v.ln());
            }
        }
        if xs.len() < 2 {
            for &(t, v) in pts.iter().take(2) {
                xs.push(t.ln());
                ys.push(v.ln());
            }
        }
        let (slope, intercept, _) = linear_fit(&xs, &ys);
        return Ok((intercept + slope * lx).exp());
    }
    let i = pts.partition_point(|&(t, _)| t < t_c);
    let (t1, v1) = pts[i - 1];
    let (t2, v2) = pts[i];
    if t1 == t_c {
        return Ok(v1);
    }
    let w = (lx - t1.ln()) / (t2.ln() - t1.ln());
    Ok((v1.ln() * (1.0 - w) + v2.ln() * w).exp())
}

fn rescale(series: &ObservableSeries, id: String, t_c: f64) -> Result<RescaledCurve> {
    let pts = positive_points(series);
    let v_c = value_at_log(&pts, t_c)?;
    Ok(RescaledCurve {
        id,
        t_c,
        points: series
            .points()
            .filter(|&(t, _)| t >= 1)
            .map(|(t, v)| (t as f64 / t_c, v / v_c))
            .collect(),
    })
}

/// Mean squared vertical spread (in log value) of the curves about their
/// pointwise median, on a common log-spaced grid of rescaled times spanning
/// the overlap of all positive supports.
fn spread_about_median(curves: &[&RescaledCurve]) -> Result<f64> {
    let mut lo = f64::MIN;
    let mut hi = f64::MAX;
    let positives: Vec<Vec<(f64, f64)>> = curves
        .iter()
        .map(|c| {
            c.points
                .iter()
                .copied()
                .filter(|&(_, v)| v > 0.0)
                .collect::<Vec<_>>()
        })
        .collect();
    for pts in &positives {
        if pts.len() < 2 {
            return Err(Error::InsufficientOverlap { lo: 0.0, hi: 0.0 });
        }
        lo = lo.max(pts.first().unwrap().0);
        hi = hi.min(pts.last().unwrap().0);
    }
    if !(hi / lo >= 10.0) {
        return Err(Error::InsufficientOverlap { lo, hi });
    }
    let log_lo = lo.ln();
    let log_hi = hi.ln();
    let mut total = 0.0;
    let mut count = 0usize;
    for g in 0..QUALITY_GRID {
        let u = (log_lo
            + (log_hi - log_lo) * g as f64 / (QUALITY_GRID - 1) as f64)
            .exp();
        let mut lvs: Vec<f64> = Vec::with_capacity(positives.len());
        for pts in &positives {
            lvs.push(value_at_log(pts, u)?.ln());
        }
        lvs.sort_by(f64::total_cmp);
        let median = if lvs.len() % 2 == 1 {
            lvs[lvs.len() / 2]
        } else {
            0.5 * (lvs[lvs.len() / 2 - 1] + lvs[lvs.len() / 2])
        };
        for lv in &lvs {
            total += (lv - median) * (lv - median);
            count += 1;
        }
    }
    Ok(total / count as f64)
}

/// Finite-size collapse: t_c = N^z per size, values normalized by the
/// interpolated v(t_c).
pub fn finite_size_collapse(
    series_by_n: &[(usize, ObservableSeries)],
    z: f64,
    delta_or_theta: f64,
) -> Result<CollapseResult> {
    let distinct: std::collections::BTreeSet<usize> =
        series_by_n.iter().map(|(n, _)| *n).collect();
    if distinct.len() < 3 {
        return Err(Error::validation(format!(
            "finite-size collapse needs >= 3 distinct sizes, got {}",
            distinct.len()
        )));
    }
    let mut curves = Vec::with_capacity(series_by_n.len());
    for (n, series) in series_by_n {
        let t_c = (*n as f64).powf(z);
        curves.push(rescale(series, format!("N={n}"), t_c)?);
    }
    let quality = spread_about_median(&curves.iter().collect::<Vec<_>>())?;
    Ok(CollapseResult {
        exponent_pair: (delta_or_theta, z),
        curves,
        quality,
    })
}

/// One off-critical input curve: distance Delta = |beta - beta_c| > 0 and
/// which side of the critical point it sits on.
#[derive(Debug, Clone)]
pub struct OffCriticalSeries {
    pub delta: f64,
    /// beta > beta_c (active side)
    pub above: bool,
    pub series: ObservableSeries,
}

/// Off-critical collapse: t_c = Delta^-nu_par, branches rescaled jointly but
/// scored separately; quality is the curve-count-weighted mean of the branch
/// spreads.
pub fn off_critical_collapse(
    series_by_delta: &[OffCriticalSeries],
    nu_par: f64,
    delta_or_theta: f64,
) -> Result<CollapseResult> {
    let distinct: std::collections::BTreeSet<u64> = series_by_delta
        .iter()
        .map(|s| s.delta.to_bits())
        .collect();
    if distinct.len() < 3 {
        return Err(Error::validation(format!(
            "off-critical collapse needs >= 3 distinct Delta values, got {}",
            distinct.len()
        )));
    }
    let mut curves = Vec::with_capacity(series_by_delta.len());
    let mut branch_of: Vec<bool> = Vec::with_capacity(series_by_delta.len());
    for s in series_by_delta {
        if !(s.delta > 0.0) {
            return Err(Error::validation(format!(
                "Delta must be positive, got {}",
                s.delta
            )));
        }
        let t_c = s.delta.powf(-nu_par);
        let side = if s.above { "above" } else { "below" };
        curves.push(rescale(&s.series, format!("{side}_d{}", s.delta), t_c)?);
        branch_of.push(s.above);
    }
    let mut quality_sum = 0.0;
    let mut weight = 0usize;
    for side in [true, false] {
        let branch: Vec<&RescaledCurve> = curves
            .iter()
            .zip(&branch_of)
            .filter(|(_, &b)| b == side)
            .map(|(c, _)| c)
            .collect();
        if branch.len() >= 2 {
            quality_sum += spread_about_median(&branch)? * branch.len() as f64;
            weight += branch.len();
        }
    }
    if weight == 0 {
        return Err(Error::validation(
            "no branch holds two or more curves; nothing to collapse",
        ));
    }
    Ok(CollapseResult {
        exponent_pair: (delta_or_theta, nu_par),
        curves,
        quality: quality_sum / weight as f64,
    })
}

/// Evaluate collapse quality for every candidate exponent and return the
/// argmin along with the full (candidate, quality) table.
pub fn optimize_collapse(
    candidates: &[f64],
    mut eval: impl FnMut(f64) -> Result<CollapseResult>,
) -> Result<(f64, Vec<(f64, f64)>)> {
    if candidates.is_empty() {
        return Err(Error::validation("candidate exponent grid is empty"));
    }
    let mut table = Vec::with_capacity(candidates.len());
    for &c in candidates {
        table.push((c, eval(c)?.quality));
    }
    let best = table
        .iter()
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .expect("non-empty table")
        .0;
    Ok((best, table))
}

/// Quality-vs-z table for a finite-size family.
pub fn optimize_fss_z(
    series_by_n: &[(usize, ObservableSeries)],
    delta_or_theta: f64,
    candidates: &[f64],
) -> Result<(f64, Vec<(f64, f64)>)> {
    optimize_collapse(candidates, |z| {
        finite_size_collapse(series_by_n, z, delta_or_theta)
    })
}

/// Quality-vs-nu_parallel table for an off-critical family.
pub fn optimize_off_nu(
    series_by_delta: &[OffCriticalSeries],
    delta_or_theta: f64,
    candidates: &[f64],
) -> Result<(f64, Vec<(f64, f64)>)> {
    optimize_collapse(candidates, |nu| {
        off_critical_collapse(series_by_delta, nu, delta_or_theta)
    })
}

/// Group curves of a collapse by id for CSV export: (id, points).
pub fn curves_as_rows(result: &CollapseResult) -> BTreeMap<String, Vec<(f64, f64)>> {
    result
        .curves
        .iter()
        .map(|c| (c.id.clone(), c.points.clone()))
        .collect()
}
