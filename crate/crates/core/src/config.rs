//! Plain-text key=value configuration shared by every subcommand.
//!
//! One `key = value` per line, `#` starts a comment line, unknown keys are a
//! hard error so typos in scientific parameters cannot pass silently.
//! Serialization emits keys in a fixed order, so parse -> serialize -> parse
//! is the identity.

use std::path::Path;

use crate::error::{Error, Result};
use crate::lattice::EnsembleSpec;
use crate::map::MapParams;
use crate::observables::SpaceTimeMode;

/// Which off-critical branches to simulate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sides {
    Both,
    Above,
    Below,
}

impl Sides {
    fn as_str(&self) -> &'static str {
        match self {
            Sides::Both => "both",
            Sides::Above => "above",
            Sides::Below => "below",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Config {
    // map and lattice
    pub nu: f64,
    pub epsilon: f64,
    pub beta_c: f64,
    /// simulation beta; defaults to beta_c when unset
    pub beta: Option<f64>,
    pub n_sites: usize,
    pub n_configs: usize,
    /// observable steps for decay/fss/off-critical runs, micro-steps for damage
    pub t_max: usize,
    pub seed: u64,
    pub init_low: Option<f64>,
    pub init_high: Option<f64>,
    pub workers: usize,
    // beta sweep (lyapunov)
    pub beta_min: f64,
    pub beta_max: f64,
    pub beta_step: f64,
    // bifurcation scans
    pub bif_beta_min: f64,
    pub bif_beta_max: f64,
    pub bif_beta_step: f64,
    pub bif_x0: f64,
    pub bif_transient: usize,
    pub bif_keep: usize,
    pub bif_sites: usize,
    pub bif_n_sites: usize,
    // finite-size and off-critical scaling
    pub size_list: Vec<usize>,
    pub delta_list: Vec<f64>,
    pub t_max_list: Option<Vec<usize>>,
    pub sides: Sides,
    pub z: f64,
    pub nu_par: f64,
    pub delta_exp: f64,
    pub theta: f64,
    pub z_candidates: Vec<f64>,
    pub nu_par_candidates: Vec<f64>,
    pub gamma_candidates: Vec<f64>,
    pub fit_t_min: Option<f64>,
    pub fit_t_max: Option<f64>,
    // damage spreading
    pub damage_k: usize,
    pub damage_delta: f64,
    pub damage_fraction: Option<f64>,
    pub damage_transient: usize,
    /// 0 = auto (about 512 field rows)
    pub field_stride: usize,
    pub record_field: bool,
    // lyapunov
    pub lyap_transient: usize,
    pub lyap_steps: usize,
    // output
    pub log_thin: bool,
    pub space_time: bool,
    pub space_time_mode: SpaceTimeMode,
    pub spatial_profile: bool,
    pub out_dir: String,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            nu: 7.5,
            epsilon: 0.4,
            beta_c: -0.6773,
            beta: None,
            n_sites: 1000,
            n_configs: 100,
            t_max: 1000,
            seed: 12345,
            init_low: None,
            init_high: None,
            workers: 0,
            beta_min: -0.82,
            beta_max: -0.70,
            beta_step: 0.01,
            bif_beta_min: -0.80,
            bif_beta_max: -0.30,
            bif_beta_step: 0.005,
            bif_x0: 0.1,
            bif_transient: 1000,
            bif_keep: 100,
            bif_sites: 8,
            bif_n_sites: 100,
            size_list: vec![40, 80, 160, 320, 640, 1280],
            delta_list: vec![0.005, 0.01, 0.02],
            t_max_list: None,
            sides: Sides::Both,
            z: 1.58,
            nu_par: 1.73,
            delta_exp: 0.158,
            theta: 1.51,
            z_candidates: vec![1.30, 1.44, 1.58, 1.72, 1.86, 2.00],
            nu_par_candidates: vec![1.30, 1.50, 1.73, 1.95, 2.20],
            gamma_candidates: vec![0.20, 0.25, 0.30, 1.0 / 3.0, 0.40, 0.50],
            fit_t_min: None,
            fit_t_max: None,
            damage_k: 2,
            damage_delta: 0.1,
            damage_fraction: None,
            damage_transient: 0,
            field_stride: 0,
            record_field: true,
            lyap_transient: 10_000,
            lyap_steps: 100_000,
            log_thin: false,
            space_time: false,
            space_time_mode: SpaceTimeMode::Spins,
            spatial_profile: false,
            out_dir: "out".to_string(),
        }
    }
}

fn parse_num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::validation(format!("cannot parse {key} = {value:?}")))
}

fn parse_list<T: std::str::FromStr>(key: &str, value: &str) -> Result<Vec<T>> {
    let items: Vec<&str> = value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .collect();
    if items.is_empty() {
        return Err(Error::validation(format!("empty list for {key}")));
    }
    items.iter().map(|s| parse_num(key, s)).collect()
}

fn join<T: std::fmt::Display>(items: &[T]) -> String {
    items
        .iter()
        .map(|x| x.to_string())
        .collect::<Vec<_>>()
        .join(",")
}

impl Config {
    pub fn from_file(path: &Path) -> Result<Config> {
        let text = std::fs::read_to_string(path)?;
        Config::from_str_strict(&text)
    }

    pub fn from_str_strict(text: &str) -> Result<Config> {
        let mut config = Config::default();
        let mut seen = std::collections::HashSet::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(Error::validation(format!(
                    "line {}: expected key = value, got {line:?}",
                    lineno + 1
                )));
            };
            let key = key.trim();
            if !seen.insert(key.to_string()) {
                return Err(Error::validation(format!(
                    "line {}: duplicate key {key:?}",
                    lineno + 1
                )));
            }
            config.set(key, value.trim())?;
        }
        Ok(config)
    }

    /// Apply one `key=value` override (the CLI's --set flag).
    pub fn apply_set(&mut self, assignment: &str) -> Result<()> {
        let Some((key, value)) = assignment.split_once('=') else {
            return Err(Error::validation(format!(
                "--set expects key=value, got {assignment:?}"
            )));
        };
        self.set(key.trim(), value.trim())
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "nu" => self.nu = parse_num(key, value)?,
            "epsilon" => self.epsilon = parse_num(key, value)?,
            "beta_c" => self.beta_c = parse_num(key, value)?,
            "beta" => self.beta = Some(parse_num(key, value)?),
            "n_sites" => self.n_sites = parse_num(key, value)?,
            "n_configs" => self.n_configs = parse_num(key, value)?,
            "t_max" => self.t_max = parse_num(key, value)?,
            "seed" => self.seed = parse_num(key, value)?,
            "init_low" => self.init_low = Some(parse_num(key, value)?),
            "init_high" => self.init_high = Some(parse_num(key, value)?),
            "workers" => self.workers = parse_num(key, value)?,
            "beta_min" => self.beta_min = parse_num(key, value)?,
            "beta_max" => self.beta_max = parse_num(key, value)?,
            "beta_step" => self.beta_step = parse_num(key, value)?,
            "bif_beta_min" => self.bif_beta_min = parse_num(key, value)?,
            "bif_beta_max" => self.bif_beta_max = parse_num(key, value)?,
            "bif_beta_step" => self.bif_beta_step = parse_num(key, value)?,
            "bif_x0" => self.bif_x0 = parse_num(key, value)?,
            "bif_transient" => self.bif_transient = parse_num(key, value)?,
            "bif_keep" => self.bif_keep = parse_num(key, value)?,
            "bif_sites" => self.bif_sites = parse_num(key, value)?,
            "bif_n_sites" => self.bif_n_sites = parse_num(key, value)?,
            "size_list" => self.size_list = parse_list(key, value)?,
            "delta_list" => self.delta_list = parse_list(key, value)?,
            "t_max_list" => self.t_max_list = Some(parse_list(key, value)?),
            "sides" => {
                self.sides = match value {
                    "both" => Sides::Both,
                    "above" => Sides::Above,
                    "below" => Sides::Below,
                    _ => {
                        return Err(Error::validation(format!(
                            "sides must be both/above/below, got {value:?}"
                        )))
                    }
                }
            }
            "z" => self.z = parse_num(key, value)?,
            "nu_par" => self.nu_par = parse_num(key, value)?,
            "delta_exp" => self.delta_exp = parse_num(key, value)?,
            "theta" => self.theta = parse_num(key, value)?,
            "z_candidates" => self.z_candidates = parse_list(key, value)?,
            "nu_par_candidates" => self.nu_par_candidates = parse_list(key, value)?,
            "gamma_candidates" => self.gamma_candidates = parse_list(key, value)?,
            "fit_t_min" => self.fit_t_min = Some(parse_num(key, value)?),
            "fit_t_max" => self.fit_t_max = Some(parse_num(key, value)?),
            "damage_k" => self.damage_k = parse_num(key, value)?,
            "damage_delta" => self.damage_delta = parse_num(key, value)?,
            "damage_fraction" => self.damage_fraction = Some(parse_num(key, value)?),
            "damage_transient" => self.damage_transient = parse_num(key, value)?,
            "field_stride" => self.field_stride = parse_num(key, value)?,
            "record_field" => self.record_field = parse_num(key, value)?,
            "lyap_transient" => self.lyap_transient = parse_num(key, value)?,
            "lyap_steps" => self.lyap_steps = parse_num(key, value)?,
            "log_thin" => self.log_thin = parse_num(key, value)?,
            "space_time" => self.space_time = parse_num(key, value)?,
            "space_time_mode" => {
                self.space_time_mode = match value {
                    "spins" => SpaceTimeMode::Spins,
                    "raw" => SpaceTimeMode::Raw,
                    _ => {
                        return Err(Error::validation(format!(
                            "space_time_mode must be spins/raw, got {value:?}"
                        )))
                    }
                }
            }
            "spatial_profile" => self.spatial_profile = parse_num(key, value)?,
            "out_dir" => self.out_dir = value.to_string(),
            _ => {
                return Err(Error::validation(format!("unknown config key {key:?}")));
            }
        }
        Ok(())
    }

    /// Fixed-order key=value rendering; every non-optional key appears.
    pub fn serialize(&self) -> String {
        let mut out = String::new();
        let mut push = |k: &str, v: String| {
            out.push_str(k);
            out.push_str(" = ");
            out.push_str(&v);
            out.push('\n');
        };
        push("nu", self.nu.to_string());
        push("epsilon", self.epsilon.to_string());
        push("beta_c", self.beta_c.to_string());
        if let Some(beta) = self.beta {
            push("beta", beta.to_string());
        }
        push("n_sites", self.n_sites.to_string());
        push("n_configs", self.n_configs.to_string());
        push("t_max", self.t_max.to_string());
        push("seed", self.seed.to_string());
        if let Some(v) = self.init_low {
            push("init_low", v.to_string());
        }
        if let Some(v) = self.init_high {
            push("init_high", v.to_string());
        }
        push("workers", self.workers.to_string());
        push("beta_min", self.beta_min.to_string());
        push("beta_max", self.beta_max.to_string());
        push("beta_step", self.beta_step.to_string());
        push("bif_beta_min", self.bif_beta_min.to_string());
        push("bif_beta_max", self.bif_beta_max.to_string());
        push("bif_beta_step", self.bif_beta_step.to_string());
        push("bif_x0", self.bif_x0.to_string());
        push("bif_transient", self.bif_transient.to_string());
        push("bif_keep", self.bif_keep.to_string());
        push("bif_sites", self.bif_sites.to_string());
        push("bif_n_sites", self.bif_n_sites.to_string());
        push("size_list", join(&self.size_list));
        push("delta_list", join(&self.delta_list));
        if let Some(list) = &self.t_max_list {
            push("t_max_list", join(list));
        }
        push("sides", self.sides.as_str().to_string());
        push("z", self.z.to_string());
        push("nu_par", self.nu_par.to_string());
        push("delta_exp", self.delta_exp.to_string());
        push("theta", self.theta.to_string());
        push("z_candidates", join(&self.z_candidates));
        push("nu_par_candidates", join(&self.nu_par_candidates));
        push("gamma_candidates", join(&self.gamma_candidates));
        if let Some(v) = self.fit_t_min {
            push("fit_t_min", v.to_string());
        }
        if let Some(v) = self.fit_t_max {
            push("fit_t_max", v.to_string());
        }
        push("damage_k", self.damage_k.to_string());
        push("damage_delta", self.damage_delta.to_string());
        if let Some(v) = self.damage_fraction {
            push("damage_fraction", v.to_string());
        }
        push("damage_transient", self.damage_transient.to_string());
        push("field_stride", self.field_stride.to_string());
        push("record_field", self.record_field.to_string());
        push("lyap_transient", self.lyap_transient.to_string());
        push("lyap_steps", self.lyap_steps.to_string());
        push("log_thin", self.log_thin.to_string());
        push("space_time", self.space_time.to_string());
        push(
            "space_time_mode",
            match self.space_time_mode {
                SpaceTimeMode::Spins => "spins".to_string(),
                SpaceTimeMode::Raw => "raw".to_string(),
            },
        );
        push("spatial_profile", self.spatial_profile.to_string());
        push("out_dir", self.out_dir.clone());
        out
    }

    /// beta used by single-beta experiments.
    pub fn beta(&self) -> f64 {
        self.beta.unwrap_or(self.beta_c)
    }

    pub fn map_params(&self, beta: f64) -> Result<MapParams> {
        MapParams::new(self.nu, beta)
    }

    /// Ensemble spec at the given beta, honoring any custom init interval.
    pub fn ensemble_spec(&self, beta: f64, t_max: usize) -> Result<EnsembleSpec> {
        let params = self.map_params(beta)?;
        let mut spec = EnsembleSpec::new(
            self.n_sites,
            self.n_configs,
            self.seed,
            self.epsilon,
            params,
            t_max,
        );
        if let Some(v) = self.init_low {
            spec.init_low = v;
        }
        if let Some(v) = self.init_high {
            spec.init_high = v;
        }
        spec.validate()?;
        Ok(spec)
    }

    /// Explicit fit window if both ends are configured.
    pub fn fit_window(&self) -> Option<(f64, f64)> {
        match (self.fit_t_min, self.fit_t_max) {
            (Some(lo), Some(hi)) => Some((lo, hi)),
            _ => None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.nu > 0.0) {
            return Err(Error::validation("nu must be positive"));
        }
        if !(0.0..=1.0).contains(&self.epsilon) {
            return Err(Error::validation("epsilon must lie in [0, 1]"));
        }
        if self.n_configs == 0 {
            return Err(Error::validation("n_configs must be >= 1"));
        }
        if self.t_max == 0 {
            return Err(Error::validation("t_max must be >= 1"));
        }
        if let Some(list) = &self.t_max_list {
            if list.len() != self.delta_list.len() {
                return Err(Error::validation(
                    "t_max_list must align with delta_list",
                ));
            }
        }
        for &d in &self.delta_list {
            if !(d > 0.0) {
                return Err(Error::validation("delta_list entries must be positive"));
            }
        }
        if let Some(p) = self.damage_fraction {
            if !(p > 0.0 && p <= 1.0) {
                return Err(Error::validation(
                    "damage_fraction must lie in (0, 1]",
                ));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_carry_reference_parameters() {
        let c = Config::default();
        assert_eq!(c.nu, 7.5);
        assert_eq!(c.epsilon, 0.4);
        assert_eq!(c.beta_c, -0.6773);
        assert_eq!(c.size_list, vec![40, 80, 160, 320, 640, 1280]);
    }

    #[test]
    fn round_trip_is_identity() {
        let mut c = Config::default();
        c.apply_set("beta=-0.69").unwrap();
        c.apply_set("init_low=-0.7").unwrap();
        c.apply_set("init_high=0.33").unwrap();
        c.apply_set("t_max_list=100,200,300").unwrap();
        c.apply_set("nu=7.125").unwrap();
        let text = c.serialize();
        let reparsed = Config::from_str_strict(&text).unwrap();
        assert_eq!(c, reparsed);
        assert_eq!(text, reparsed.serialize());
    }

    #[test]
    fn unknown_key_is_hard_error() {
        let err = Config::from_str_strict("betta = -0.6\n").unwrap_err();
        assert!(matches!(err, Error::Validation(_)), "{err}");
    }

    #[test]
    fn duplicate_key_is_hard_error() {
        let err = Config::from_str_strict("nu = 7.5\nnu = 8.0\n").unwrap_err();
        assert!(matches!(err, Error::Validation(_)));
    }

    #[test]
    fn comments_and_blank_lines_ignored() {
        let c = Config::from_str_strict("# a comment\n\nbeta = -0.65\n").unwrap();
        assert_eq!(c.beta, Some(-0.65));
    }

    #[test]
    fn beta_defaults_to_beta_c() {
        let c = Config::default();
        assert_eq!(c.beta(), -0.6773);
    }

    #[test]
    fn zero_configs_rejected() {
        let mut c = Config::default();
        c.apply_set("n_configs=0").unwrap();
        assert!(c.validate().is_err());
    }

    #[test]
    fn misaligned_t_max_list_rejected() {
        let mut c = Config::default();
        c.apply_set("t_max_list=10,20").unwrap();
        assert!(c.validate().is_err());
    }

    #[test]
    fn malformed_line_rejected() {
        assert!(Config::from_str_strict("nu 7.5\n").is_err());
    }
}
