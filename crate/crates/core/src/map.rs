//! The single Gauss map f(x) = exp(-nu x^2) + beta: evaluation, derivative,
//! fixed-point location and bifurcation scans.

use crate::error::{Error, Result};

/// Default width parameter used throughout.
pub const DEFAULT_NU: f64 = 7.5;
/// Default absolute residual tolerance for root finding.
pub const DEFAULT_ROOT_TOL: f64 = 1e-12;
/// Iteration cap for bisection.
pub const BISECTION_MAX_ITER: usize = 200;

/// Parameters of the Gauss map.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MapParams {
    pub nu: f64,
    pub beta: f64,
}

impl MapParams {
    pub fn new(nu: f64, beta: f64) -> Result<Self> {
        if !(nu > 0.0) || !nu.is_finite() {
            return Err(Error::validation(format!("nu must be positive, got {nu}")));
        }
        if !beta.is_finite() {
            return Err(Error::validation(format!("beta must be finite, got {beta}")));
        }
        Ok(MapParams { nu, beta })
    }

    /// nu fixed at its default value 7.5.
    pub fn with_beta(beta: f64) -> Self {
        MapParams {
            nu: DEFAULT_NU,
            beta,
        }
    }
}

/// f(x) = exp(-nu x^2) + beta.
#[inline(always)]
pub fn eval_map(x: f64, p: MapParams) -> f64 {
    (-p.nu * x * x).exp() + p.beta
}

/// f'(x) = -2 nu x exp(-nu x^2).
#[inline(always)]
pub fn eval_derivative(x: f64, p: MapParams) -> f64 {
    -2.0 * p.nu * x * (-p.nu * x * x).exp()
}

/// A located fixed point of the map.
#[derive(Debug, Clone, Copy)]
pub struct FixedPointResult {
    pub x_star: f64,
    /// |f(x_star) - x_star|
    pub residual: f64,
    pub derivative_at: f64,
    /// |f'(x_star)| < 1
    pub stable: bool,
}

fn fixed_point_at(x: f64, p: MapParams) -> FixedPointResult {
    let residual = (eval_map(x, p) - x).abs();
    let derivative_at = eval_derivative(x, p);
    FixedPointResult {
        x_star: x,
        residual,
        derivative_at,
        stable: derivative_at.abs() < 1.0,
    }
}

/// Bisection for a root of g(x) = f(x) - x on [lo, hi], assuming g(lo) > 0 >= g(hi).
fn bisect(mut lo: f64, mut hi: f64, p: MapParams, tol: f64) -> Result<FixedPointResult> {
    let g = |x: f64| eval_map(x, p) - x;
    let mut mid = 0.5 * (lo + hi);
    for _ in 0..BISECTION_MAX_ITER {
        mid = 0.5 * (lo + hi);
        let gm = g(mid);
        if gm.abs() < tol {
            return Ok(fixed_point_at(mid, p));
        }
        if gm > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Err(Error::ToleranceNotReached {
        residual: g(mid).abs(),
        tol,
        iterations: BISECTION_MAX_ITER,
    })
}

/// Largest fixed point x* of the map, by bisection on [0, 1 + beta].
///
/// f(x) <= 1 + beta everywhere, so no fixed point exists beyond 1 + beta, and
/// g(x) = f(x) - x is strictly decreasing for x > 0; the root found in this
/// bracket is therefore the greatest one. Requires beta > -1 so that
/// g(0) = 1 + beta > 0.
pub fn largest_fixed_point(p: MapParams, tol: f64) -> Result<FixedPointResult> {
    if !(tol > 0.0) {
        return Err(Error::validation(format!("tolerance must be positive, got {tol}")));
    }
    if p.beta <= -1.0 {
        return Err(Error::BracketInvalid { beta: p.beta });
    }
    bisect(0.0, 1.0 + p.beta, p, tol)
}

/// All fixed points, located by scanning g(x) = f(x) - x on a uniform grid
/// over [beta - 0.1, 1 + beta + 0.1] and bisecting every sign-change
/// interval. Roots are returned in ascending order.
pub fn find_all_fixed_points(p: MapParams, grid: usize) -> Result<Vec<FixedPointResult>> {
    if grid < 100 {
        return Err(Error::validation(format!(
            "grid must hold at least 100 points, got {grid}"
        )));
    }
    let g = |x: f64| eval_map(x, p) - x;
    let lo = p.beta - 0.1;
    let hi = 1.0 + p.beta + 0.1;
    let dx = (hi - lo) / grid as f64;
    let mut roots: Vec<FixedPointResult> = Vec::new();
    let mut x_prev = lo;
    let mut g_prev = g(lo);
    for i in 1..=grid {
        let x = lo + i as f64 * dx;
        let gx = g(x);
        if g_prev == 0.0 {
            roots.push(fixed_point_at(x_prev, p));
        } else if g_prev * gx < 0.0 {
            // bisect with the orientation of this bracket
            let (a, b) = if g_prev > 0.0 { (x_prev, x) } else { (x, x_prev) };
            roots.push(bisect(a, b, p, DEFAULT_ROOT_TOL)?);
        }
        x_prev = x;
        g_prev = gx;
    }
    roots.sort_by(|a, b| a.x_star.total_cmp(&b.x_star));
    roots.dedup_by(|a, b| (a.x_star - b.x_star).abs() < 1e-9);
    Ok(roots)
}

/// Uniform grid of beta values, inclusive of both ends (up to rounding).
pub fn beta_grid(beta_min: f64, beta_max: f64, beta_step: f64) -> Result<Vec<f64>> {
    if !(beta_step > 0.0) || beta_min > beta_max {
        return Err(Error::validation(format!(
            "bad beta range: [{beta_min}, {beta_max}] step {beta_step}"
        )));
    }
    let n = ((beta_max - beta_min) / beta_step + 0.5 * beta_step).floor() as usize;
    Ok((0..=n).map(|i| beta_min + i as f64 * beta_step).collect())
}

/// One column of a bifurcation diagram: the post-transient orbit at one beta.
#[derive(Debug, Clone)]
pub struct BifurcationOrbit {
    pub beta: f64,
    pub values: Vec<f64>,
}

/// Iterate the single map from `x0` at each beta, discard `transient` steps
/// and record the next `keep` values.
pub fn single_map_bifurcation(
    nu: f64,
    betas: &[f64],
    x0: f64,
    transient: usize,
    keep: usize,
) -> Result<Vec<BifurcationOrbit>> {
    if keep < 1 {
        return Err(Error::validation("keep must be >= 1"));
    }
    betas
        .iter()
        .map(|&beta| {
            let p = MapParams::new(nu, beta)?;
            let mut x = x0;
            for _ in 0..transient {
                x = eval_map(x, p);
            }
            let mut values = Vec::with_capacity(keep);
            for _ in 0..keep {
                x = eval_map(x, p);
                values.push(x);
            }
            Ok(BifurcationOrbit { beta, values })
        })
        .collect()
}
