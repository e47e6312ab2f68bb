//! Largest Lyapunov exponent of the coupled lattice by single-vector
//! tangent-space evolution with per-step renormalization.

use rand::Rng;

use crate::error::{Error, Result};
use crate::lattice::{EnsembleSpec, LatticeState};
use crate::map::eval_derivative;

const TANGENT_RNG_SALT: u64 = 0x4c594150;

/// Linearization of one lattice step around `state`, applied to `v`:
///
/// w_i = (1-eps) f'(x_i) v_i + (eps/2) [f'(x_{i-1}) v_{i-1} + f'(x_{i+1}) v_{i+1}]
pub fn jacobian_vector_product(state: &LatticeState, v: &[f64]) -> Result<Vec<f64>> {
    let n = state.len();
    if v.len() != n {
        return Err(Error::LengthMismatch {
            left: n,
            right: v.len(),
        });
    }
    let p = state.params();
    let eps = state.epsilon();
    let one_minus = 1.0 - eps;
    let half_eps = 0.5 * eps;
    let df: Vec<f64> = state.cells().iter().map(|&x| eval_derivative(x, p)).collect();
    let mut w = vec![0.0; n];
    w[0] = one_minus * df[0] * v[0] + half_eps * (df[1] * v[1] + df[n - 1] * v[n - 1]);
    for i in 1..n - 1 {
        w[i] = one_minus * df[i] * v[i]
            + half_eps * (df[i + 1] * v[i + 1] + df[i - 1] * v[i - 1]);
    }
    w[n - 1] =
        one_minus * df[n - 1] * v[n - 1] + half_eps * (df[0] * v[0] + df[n - 2] * v[n - 2]);
    Ok(w)
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Lattice state co-evolved with a unit tangent vector. The tangent is
/// renormalized after every micro-step; `log_sum` accumulates the log of the
/// pre-normalization norm.
#[derive(Debug, Clone)]
pub struct TangentState {
    base: LatticeState,
    tangent: Vec<f64>,
    log_sum: f64,
    steps_counted: u64,
}

impl TangentState {
    pub fn new(base: LatticeState, tangent: Vec<f64>) -> Result<Self> {
        if tangent.len() != base.len() {
            return Err(Error::LengthMismatch {
                left: base.len(),
                right: tangent.len(),
            });
        }
        let nrm = norm(&tangent);
        if !nrm.is_normal() {
            return Err(Error::TangentCollapse {
                step: base.micro_time(),
            });
        }
        Ok(TangentState {
            tangent: tangent.iter().map(|x| x / nrm).collect(),
            base,
            log_sum: 0.0,
            steps_counted: 0,
        })
    }

    pub fn base(&self) -> &LatticeState {
        &self.base
    }

    pub fn tangent(&self) -> &[f64] {
        &self.tangent
    }

    pub fn log_sum(&self) -> f64 {
        self.log_sum
    }

    pub fn steps_counted(&self) -> u64 {
        self.steps_counted
    }

    /// One micro-step of base and tangent. The Jacobian is evaluated at the
    /// pre-step state; results match `jacobian_vector_product` bit-exactly.
    pub fn advance(&mut self) -> Result<()> {
        let w = jacobian_vector_product(&self.base, &self.tangent)?;
        self.base.step();
        let nrm = norm(&w);
        if !(nrm > 0.0) || !nrm.is_finite() {
            return Err(Error::TangentCollapse {
                step: self.base.micro_time(),
            });
        }
        for (t, wi) in self.tangent.iter_mut().zip(&w) {
            *t = wi / nrm;
        }
        self.log_sum += nrm.ln();
        self.steps_counted += 1;
        Ok(())
    }

    /// Running estimate log_sum / steps_counted (per micro-step).
    pub fn lambda(&self) -> f64 {
        self.log_sum / self.steps_counted.max(1) as f64
    }
}

/// Advance `steps` micro-steps and return the exponent estimate.
pub fn measure_lyapunov(
    base: LatticeState,
    tangent: Vec<f64>,
    steps: usize,
) -> Result<f64> {
    let mut ts = TangentState::new(base, tangent)?;
    for _ in 0..steps {
        ts.advance()?;
    }
    Ok(ts.lambda())
}

#[derive(Debug, Clone)]
pub struct LyapunovEstimate {
    /// configuration mean of log_sum / steps (natural log per micro-step)
    pub lambda: f64,
    /// standard error of the configuration mean
    pub stderr: f64,
    pub per_config: Vec<f64>,
}

/// Ensemble-averaged largest Lyapunov exponent at the spec's beta.
///
/// Per configuration: evolve through `transient` micro-steps, seed a random
/// unit tangent, then co-evolve for `measure_steps` micro-steps.
pub fn largest_lyapunov(
    spec: &EnsembleSpec,
    transient: usize,
    measure_steps: usize,
) -> Result<LyapunovEstimate> {
    spec.validate()?;
    if measure_steps < 1 {
        return Err(Error::validation("measure_steps must be >= 1"));
    }
    let mut per_config = Vec::with_capacity(spec.n_configs);
    crate::ensemble::map_reduce_ordered(
        spec.n_configs,
        |idx| {
            let mut base = spec.init_random(idx)?;
            for _ in 0..transient {
                base.step();
            }
            let mut rng = spec.rng_with_salt(idx, TANGENT_RNG_SALT);
            let tangent: Vec<f64> =
                (0..spec.n_sites).map(|_| rng.gen_range(-1.0..1.0)).collect();
            measure_lyapunov(base, tangent, measure_steps)
        },
        |_, lambda| {
            per_config.push(lambda);
            Ok(())
        },
    )?;
    let n = per_config.len() as f64;
    let lambda = per_config.iter().sum::<f64>() / n;
    let stderr = if per_config.len() > 1 {
        let var = per_config
            .iter()
            .map(|l| (l - lambda) * (l - lambda))
            .sum::<f64>()
            / (n - 1.0);
        (var / n).sqrt()
    } else {
        0.0
    };
    Ok(LyapunovEstimate {
        lambda,
        stderr,
        per_config,
    })
}
