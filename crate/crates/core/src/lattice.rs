//! State and synchronous dynamics of the 1-D diffusively coupled Gauss map
//! lattice with periodic boundaries:
//!
//! x_i(t+1) = (1-eps) f(x_i(t)) + (eps/2) [f(x_{i+1}(t)) + f(x_{i-1}(t))]

use rand::distributions::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::map::{eval_map, MapParams};

pub const MIN_SITES: usize = 3;

/// The lattice: one real value per site plus coupling and a micro-step clock.
#[derive(Debug, Clone)]
pub struct LatticeState {
    cells: Vec<f64>,
    epsilon: f64,
    micro_time: u64,
    params: MapParams,
    // scratch buffers reused across steps
    fx: Vec<f64>,
    next: Vec<f64>,
}

impl LatticeState {
    pub fn new(cells: Vec<f64>, epsilon: f64, params: MapParams) -> Result<Self> {
        if cells.len() < MIN_SITES {
            return Err(Error::validation(format!(
                "lattice needs at least {MIN_SITES} sites, got {}",
                cells.len()
            )));
        }
        if !(0.0..=1.0).contains(&epsilon) {
            return Err(Error::validation(format!(
                "epsilon must lie in [0, 1], got {epsilon}"
            )));
        }
        Ok(LatticeState {
            cells,
            epsilon,
            micro_time: 0,
            params,
            fx: Vec::new(),
            next: Vec::new(),
        })
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn cells(&self) -> &[f64] {
        &self.cells
    }

    pub fn cells_mut(&mut self) -> &mut [f64] {
        &mut self.cells
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn micro_time(&self) -> u64 {
        self.micro_time
    }

    pub fn params(&self) -> MapParams {
        self.params
    }

    /// One synchronous update. f is evaluated exactly once per site, then the
    /// diffusive mix is applied.
    pub fn step(&mut self) {
        let n = self.cells.len();
        self.fx.resize(n, 0.0);
        self.next.resize(n, 0.0);
        let p = self.params;
        for (f, &x) in self.fx.iter_mut().zip(self.cells.iter()) {
            *f = eval_map(x, p);
        }
        let one_minus = 1.0 - self.epsilon;
        let half_eps = 0.5 * self.epsilon;
        let fx = &self.fx;
        self.next[0] = one_minus * fx[0] + half_eps * (fx[1] + fx[n - 1]);
        for i in 1..n - 1 {
            self.next[i] = one_minus * fx[i] + half_eps * (fx[i + 1] + fx[i - 1]);
        }
        self.next[n - 1] = one_minus * fx[n - 1] + half_eps * (fx[0] + fx[n - 2]);
        std::mem::swap(&mut self.cells, &mut self.next);
        self.micro_time += 1;
    }

    /// Two micro-steps: one observable time unit.
    pub fn step_pair(&mut self) {
        self.step();
        self.step();
    }
}

/// Everything needed to reproduce an ensemble of configurations.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleSpec {
    pub n_sites: usize,
    pub n_configs: usize,
    pub master_seed: u64,
    pub epsilon: f64,
    pub params: MapParams,
    /// observable steps (one observable step = two micro-steps)
    pub t_max: usize,
    pub init_low: f64,
    pub init_high: f64,
}

impl EnsembleSpec {
    /// Spec with the default initial-condition interval [beta, 1 + beta],
    /// the invariant range of f.
    pub fn new(
        n_sites: usize,
        n_configs: usize,
        master_seed: u64,
        epsilon: f64,
        params: MapParams,
        t_max: usize,
    ) -> Self {
        EnsembleSpec {
            n_sites,
            n_configs,
            master_seed,
            epsilon,
            params,
            t_max,
            init_low: params.beta,
            init_high: 1.0 + params.beta,
        }
    }

    /// Same spec at a different beta; the init interval follows unless it was
    /// customized away from the default of the current beta.
    pub fn with_beta(&self, beta: f64) -> Self {
        let mut spec = self.clone();
        let default_interval = self.init_low == self.params.beta
            && self.init_high == 1.0 + self.params.beta;
        spec.params.beta = beta;
        if default_interval {
            spec.init_low = beta;
            spec.init_high = 1.0 + beta;
        }
        spec
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_sites < MIN_SITES {
            return Err(Error::validation(format!(
                "n_sites must be >= {MIN_SITES}, got {}",
                self.n_sites
            )));
        }
        if self.n_configs < 1 {
            return Err(Error::validation("n_configs must be >= 1"));
        }
        if self.t_max < 1 {
            return Err(Error::validation("t_max must be >= 1"));
        }
        if !(self.init_low < self.init_high) {
            return Err(Error::validation(format!(
                "init interval degenerate: [{}, {})",
                self.init_low, self.init_high
            )));
        }
        if !(0.0..=1.0).contains(&self.epsilon) {
            return Err(Error::validation(format!(
                "epsilon must lie in [0, 1], got {}",
                self.epsilon
            )));
        }
        MapParams::new(self.params.nu, self.params.beta)?;
        Ok(())
    }

    /// Deterministic RNG stream for one configuration. Streams are separated
    /// by the ChaCha stream id, so adding configurations never perturbs
    /// existing ones.
    pub fn rng(&self, config_index: usize) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.master_seed);
        rng.set_stream(config_index as u64);
        rng
    }

    /// Like `rng`, but in a separate seed domain, so consumers other than
    /// `init_random` (damage site choices, tangent directions) never share
    /// draws with the initial conditions.
    pub fn rng_with_salt(&self, config_index: usize, salt: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.master_seed ^ salt);
        rng.set_stream(config_index as u64);
        rng
    }

    /// Fresh lattice with i.i.d. uniform cells on [init_low, init_high),
    /// drawn from the stream of `config_index`.
    pub fn init_random(&self, config_index: usize) -> Result<LatticeState> {
        self.validate()?;
        if config_index >= self.n_configs {
            return Err(Error::validation(format!(
                "config_index {config_index} out of range (n_configs = {})",
                self.n_configs
            )));
        }
        let mut rng = self.rng(config_index);
        let dist = Uniform::new(self.init_low, self.init_high);
        let cells = (0..self.n_sites).map(|_| dist.sample(&mut rng)).collect();
        LatticeState::new(cells, self.epsilon, self.params)
    }
}
