//! Coarse-graining to spins, the flip rate F(t), local persistence P(t), and
//! spatial / space-time exports.
//!
//! Spins are sampled at even micro-times only: the attractor is band-periodic
//! with period 2, so observable step t compares micro-times 2t-2 and 2t.

use crate::ensemble::{map_reduce_ordered, SeriesAccumulator};
use crate::error::{Error, Result};
use crate::lattice::{EnsembleSpec, LatticeState};
use crate::map::largest_fixed_point;

/// Coarse-grained field: +1 where the cell lies above x*, -1 below.
/// Exact ties (measure zero under the continuous dynamics) count as +1.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SpinField {
    spins: Vec<i8>,
}

impl SpinField {
    pub fn spins(&self) -> &[i8] {
        &self.spins
    }

    pub fn len(&self) -> usize {
        self.spins.len()
    }

    pub fn is_empty(&self) -> bool {
        self.spins.is_empty()
    }
}

/// Spin field of a lattice state relative to the largest fixed point x*.
pub fn coarse_grain(state: &LatticeState, x_star: f64) -> SpinField {
    SpinField {
        spins: state
            .cells()
            .iter()
            .map(|&x| if x >= x_star { 1 } else { -1 })
            .collect(),
    }
}

/// Fraction of sites whose spin differs between the two fields.
pub fn flip_rate(prev: &SpinField, curr: &SpinField) -> Result<f64> {
    if prev.len() != curr.len() {
        return Err(Error::LengthMismatch {
            left: prev.len(),
            right: curr.len(),
        });
    }
    let flips = prev
        .spins
        .iter()
        .zip(&curr.spins)
        .filter(|(a, b)| a != b)
        .count();
    Ok(flips as f64 / prev.len() as f64)
}

/// Tracks which sites still match their initial spin. Once a site deviates
/// it stays non-persistent forever.
#[derive(Debug, Clone)]
pub struct PersistenceTracker {
    reference: SpinField,
    alive: Vec<bool>,
    /// indices of still-persistent sites, kept sorted
    alive_indices: Vec<u32>,
}

impl PersistenceTracker {
    pub fn new(reference: SpinField) -> Self {
        let n = reference.len();
        PersistenceTracker {
            reference,
            alive: vec![true; n],
            alive_indices: (0..n as u32).collect(),
        }
    }

    pub fn count_alive(&self) -> usize {
        self.alive_indices.len()
    }

    pub fn alive(&self) -> &[bool] {
        &self.alive
    }

    /// P after the most recent update: persistent fraction.
    pub fn fraction(&self) -> f64 {
        self.alive_indices.len() as f64 / self.reference.len() as f64
    }

    /// Kill every site whose current spin deviates from its reference spin.
    pub fn update(&mut self, curr: &SpinField) -> Result<()> {
        if curr.len() != self.reference.len() {
            return Err(Error::LengthMismatch {
                left: self.reference.len(),
                right: curr.len(),
            });
        }
        let reference = &self.reference.spins;
        let spins = &curr.spins;
        let alive = &mut self.alive;
        self.alive_indices.retain(|&i| {
            let i = i as usize;
            if spins[i] == reference[i] {
                true
            } else {
                alive[i] = false;
                false
            }
        });
        Ok(())
    }
}

/// Which quantity a series holds.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SeriesLabel {
    FlipRate,
    Persistence,
    DamageFine,
    DamageCoarse,
}

impl SeriesLabel {
    pub fn as_str(&self) -> &'static str {
        match self {
            SeriesLabel::FlipRate => "flip_rate",
            SeriesLabel::Persistence => "persistence",
            SeriesLabel::DamageFine => "damage_fine",
            SeriesLabel::DamageCoarse => "damage_coarse",
        }
    }

    /// Time unit of the series' t column.
    pub fn time_unit(&self) -> &'static str {
        match self {
            SeriesLabel::DamageFine | SeriesLabel::DamageCoarse => "micro_steps",
            _ => "observable_steps",
        }
    }
}

/// A time-indexed ensemble-averaged observable.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservableSeries {
    pub times: Vec<u64>,
    pub values: Vec<f64>,
    pub n_configs: usize,
    pub label: SeriesLabel,
}

impl ObservableSeries {
    pub fn points(&self) -> impl Iterator<Item = (u64, f64)> + '_ {
        self.times.iter().copied().zip(self.values.iter().copied())
    }
}

/// Per-configuration F and P trajectories (flips has t = 1..t_max,
/// persistence has t = 0..t_max).
pub struct ConfigObservables {
    pub flips: Vec<f64>,
    pub persistence: Vec<f64>,
}

/// Run a single configuration and record F(t) and P(t).
pub fn run_config_observables(
    spec: &EnsembleSpec,
    config_index: usize,
    x_star: f64,
) -> Result<ConfigObservables> {
    let mut state = spec.init_random(config_index)?;
    let mut prev = coarse_grain(&state, x_star);
    let mut tracker = PersistenceTracker::new(prev.clone());
    let mut flips = Vec::with_capacity(spec.t_max);
    let mut persistence = Vec::with_capacity(spec.t_max + 1);
    persistence.push(1.0);
    for _ in 1..=spec.t_max {
        state.step_pair();
        let curr = coarse_grain(&state, x_star);
        flips.push(flip_rate(&prev, &curr)?);
        tracker.update(&curr)?;
        persistence.push(tracker.fraction());
        prev = curr;
    }
    Ok(ConfigObservables { flips, persistence })
}

/// Ensemble-averaged flip rate and persistence at the spec's beta.
///
/// Deterministic given the spec: per-configuration runs may execute in
/// parallel but are reduced in configuration-index order.
pub fn run_observables(spec: &EnsembleSpec) -> Result<(ObservableSeries, ObservableSeries)> {
    spec.validate()?;
    let x_star = largest_fixed_point(spec.params, crate::map::DEFAULT_ROOT_TOL)?.x_star;
    let mut acc_f = SeriesAccumulator::new(spec.t_max);
    let mut acc_p = SeriesAccumulator::new(spec.t_max + 1);
    map_reduce_ordered(
        spec.n_configs,
        |idx| run_config_observables(spec, idx, x_star),
        |_, cfg| {
            acc_f.add(&cfg.flips)?;
            acc_p.add(&cfg.persistence)
        },
    )?;
    let f = ObservableSeries {
        times: (1..=spec.t_max as u64).collect(),
        values: acc_f.mean(),
        n_configs: spec.n_configs,
        label: SeriesLabel::FlipRate,
    };
    let p = ObservableSeries {
        times: (0..=spec.t_max as u64).collect(),
        values: acc_p.mean(),
        n_configs: spec.n_configs,
        label: SeriesLabel::Persistence,
    };
    Ok((f, p))
}

/// One row per site: (index, cell value, spin).
pub struct SpatialProfile {
    pub x_star: f64,
    pub rows: Vec<(usize, f64, i8)>,
}

pub fn export_spatial_profile(state: &LatticeState, x_star: f64) -> SpatialProfile {
    let spins = coarse_grain(state, x_star);
    SpatialProfile {
        x_star,
        rows: state
            .cells()
            .iter()
            .zip(spins.spins())
            .enumerate()
            .map(|(i, (&x, &s))| (i, x, s))
            .collect(),
    }
}

/// What a space-time export records per site.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpaceTimeMode {
    Raw,
    Spins,
}

/// Space-time matrix of a single configuration sampled at even micro-times:
/// row r holds the lattice at observable step r, for r = 0..=t_max.
pub fn export_space_time(
    spec: &EnsembleSpec,
    mode: SpaceTimeMode,
) -> Result<Vec<Vec<f64>>> {
    spec.validate()?;
    if spec.n_configs != 1 {
        return Err(Error::validation(
            "space-time export requires n_configs = 1",
        ));
    }
    let x_star = largest_fixed_point(spec.params, crate::map::DEFAULT_ROOT_TOL)?.x_star;
    let mut state = spec.init_random(0)?;
    let snapshot = |state: &LatticeState| -> Vec<f64> {
        match mode {
            SpaceTimeMode::Raw => state.cells().to_vec(),
            SpaceTimeMode::Spins => coarse_grain(state, x_star)
                .spins()
                .iter()
                .map(|&s| s as f64)
                .collect(),
        }
    };
    let mut rows = Vec::with_capacity(spec.t_max + 1);
    rows.push(snapshot(&state));
    for _ in 1..=spec.t_max {
        state.step_pair();
        rows.push(snapshot(&state));
    }
    Ok(rows)
}

/// Thin a series for storage: keep every time <= `dense_until`, then about
/// `per_decade` log-spaced points per decade.
pub fn log_thin(series: &ObservableSeries, dense_until: u64, per_decade: usize) -> ObservableSeries {
    let mut times = Vec::new();
    let mut values = Vec::new();
    let mut last_kept: Option<u64> = None;
    let factor = 10f64.powf(1.0 / per_decade.max(1) as f64);
    for (t, v) in series.points() {
        let keep = t <= dense_until
            || match last_kept {
                None => true,
                Some(prev) => t as f64 >= prev as f64 * factor,
            };
        if keep {
            times.push(t);
            values.push(v);
            last_kept = Some(t);
        }
    }
    ObservableSeries {
        times,
        values,
        n_configs: series.n_configs,
        label: series.label,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::map::{MapParams, DEFAULT_ROOT_TOL};

    const BETA_C: f64 = -0.6773;

    fn x_star(beta: f64) -> f64 {
        largest_fixed_point(MapParams::with_beta(beta), DEFAULT_ROOT_TOL)
            .unwrap()
            .x_star
    }

    fn state_from(cells: Vec<f64>, beta: f64) -> LatticeState {
        LatticeState::new(cells, 0.4, MapParams::with_beta(beta)).unwrap()
    }

    #[test]
    fn coarse_grain_all_above() {
        let xs = x_star(BETA_C);
        let state = state_from(vec![xs + 0.1; 5], BETA_C);
        assert_eq!(coarse_grain(&state, xs).spins(), &[1, 1, 1, 1, 1]);
    }

    #[test]
    fn coarse_grain_alternating() {
        let xs = x_star(BETA_C);
        let state = state_from(vec![xs + 0.1, xs - 0.1, xs + 0.1, xs - 0.1], BETA_C);
        assert_eq!(coarse_grain(&state, xs).spins(), &[1, -1, 1, -1]);
    }

    #[test]
    fn tie_counts_as_up() {
        let xs = x_star(BETA_C);
        let state = state_from(vec![xs, xs - 0.1, xs + 0.1], BETA_C);
        assert_eq!(coarse_grain(&state, xs).spins()[0], 1);
    }

    #[test]
    fn flip_rate_identical_fields_is_zero() {
        let xs = x_star(BETA_C);
        let state = state_from(vec![xs + 0.1; 100], BETA_C);
        let s = coarse_grain(&state, xs);
        assert_eq!(flip_rate(&s, &s).unwrap(), 0.0);
    }

    #[test]
    fn flip_rate_single_site() {
        let xs = x_star(BETA_C);
        let mut cells = vec![xs + 0.1; 100];
        let a = coarse_grain(&state_from(cells.clone(), BETA_C), xs);
        cells[17] = xs - 0.1;
        let b = coarse_grain(&state_from(cells, BETA_C), xs);
        assert_eq!(flip_rate(&a, &b).unwrap(), 0.01);
    }

    #[test]
    fn flip_rate_length_mismatch() {
        let xs = x_star(BETA_C);
        let a = coarse_grain(&state_from(vec![0.0; 4], BETA_C), xs);
        let b = coarse_grain(&state_from(vec![0.0; 5], BETA_C), xs);
        assert!(matches!(
            flip_rate(&a, &b).unwrap_err(),
            Error::LengthMismatch { .. }
        ));
    }

    #[test]
    fn persistence_starts_at_one() {
        let xs = x_star(BETA_C);
        let s = coarse_grain(&state_from(vec![xs + 0.1; 10], BETA_C), xs);
        let mut tracker = PersistenceTracker::new(s.clone());
        tracker.update(&s).unwrap();
        assert_eq!(tracker.fraction(), 1.0);
    }

    #[test]
    fn flip_back_stays_dead() {
        let xs = x_star(BETA_C);
        let up = coarse_grain(&state_from(vec![xs + 0.1; 4], BETA_C), xs);
        let mut cells = vec![xs + 0.1; 4];
        cells[2] = xs - 0.1;
        let flipped = coarse_grain(&state_from(cells, BETA_C), xs);

        let mut tracker = PersistenceTracker::new(up.clone());
        tracker.update(&flipped).unwrap();
        assert_eq!(tracker.fraction(), 0.75);
        // site 2 returns to its initial spin, but persistence is monotone
        tracker.update(&up).unwrap();
        assert_eq!(tracker.fraction(), 0.75);
        assert!(!tracker.alive()[2]);
    }

    #[test]
    fn composition_oracle_single_config() {
        // run_observables with one config / one step must equal the
        // hand-composed pipeline
        let spec = EnsembleSpec::new(5, 1, 77, 0.4, MapParams::with_beta(BETA_C), 1);
        let xs = x_star(BETA_C);

        let mut state = spec.init_random(0).unwrap();
        let s0 = coarse_grain(&state, xs);
        let mut tracker = PersistenceTracker::new(s0.clone());
        state.step_pair();
        let s1 = coarse_grain(&state, xs);
        let f1 = flip_rate(&s0, &s1).unwrap();
        tracker.update(&s1).unwrap();

        let (f, p) = run_observables(&spec).unwrap();
        assert_eq!(f.times, vec![1]);
        assert_eq!(f.values, vec![f1]);
        assert_eq!(p.times, vec![0, 1]);
        assert_eq!(p.values, vec![1.0, tracker.fraction()]);
    }

    #[test]
    fn run_observables_is_deterministic() {
        let spec = EnsembleSpec::new(32, 4, 123, 0.4, MapParams::with_beta(BETA_C), 20);
        let (f1, p1) = run_observables(&spec).unwrap();
        let (f2, p2) = run_observables(&spec).unwrap();
        assert_eq!(f1.values, f2.values);
        assert_eq!(p1.values, p2.values);
    }

    #[test]
    fn bounds_and_monotonicity() {
        let spec = EnsembleSpec::new(64, 8, 5150, 0.4, MapParams::with_beta(-0.68), 200);
        let (f, p) = run_observables(&spec).unwrap();
        for &v in &f.values {
            assert!((0.0..=1.0).contains(&v));
        }
        for &v in &p.values {
            assert!((0.0..=1.0).contains(&v));
        }
        for w in p.values.windows(2) {
            assert!(w[1] <= w[0] + 1e-15, "persistence must not increase");
        }
    }

    #[test]
    fn persistence_bounded_by_accumulated_flips() {
        // a site persistent at t has never flipped, so P(t) >= 1 - sum F
        let spec = EnsembleSpec::new(128, 1, 31337, 0.4, MapParams::with_beta(BETA_C), 300);
        let xs = x_star(BETA_C);
        let cfg = run_config_observables(&spec, 0, xs).unwrap();
        let mut flip_sum = 0.0;
        for t in 1..=spec.t_max {
            flip_sum += cfg.flips[t - 1];
            assert!(
                cfg.persistence[t] >= 1.0 - flip_sum - 1e-12,
                "t={t}: P={} 1-sumF={}",
                cfg.persistence[t],
                1.0 - flip_sum
            );
        }
    }

    #[test]
    fn frozen_regime_spins_repeat_with_period_two() {
        let spec = EnsembleSpec::new(256, 1, 9001, 0.4, MapParams::with_beta(-0.69), 1);
        let xs = x_star(-0.69);
        let mut state = spec.init_random(0).unwrap();
        for _ in 0..4000 {
            state.step();
        }
        let a = coarse_grain(&state, xs);
        state.step_pair();
        let b = coarse_grain(&state, xs);
        assert_eq!(a, b, "coarse-grained pattern must be frozen at even times");
    }

    #[test]
    fn spatial_profile_shape() {
        let xs = x_star(BETA_C);
        let state = state_from(vec![xs + 0.2; 7], BETA_C);
        let profile = export_spatial_profile(&state, xs);
        assert_eq!(profile.rows.len(), 7);
        for (i, (idx, x, s)) in profile.rows.iter().enumerate() {
            assert_eq!(*idx, i);
            assert_eq!(*x, xs + 0.2);
            assert_eq!(*s, 1);
        }
    }

    #[test]
    fn space_time_dimensions_and_values() {
        let spec = EnsembleSpec::new(16, 1, 41, 0.4, MapParams::with_beta(-0.69), 12);
        let rows = export_space_time(&spec, SpaceTimeMode::Spins).unwrap();
        assert_eq!(rows.len(), 13);
        for row in &rows {
            assert_eq!(row.len(), 16);
            for &v in row {
                assert!(v == 1.0 || v == -1.0);
            }
        }
        let raw = export_space_time(&spec, SpaceTimeMode::Raw).unwrap();
        assert_eq!(raw.len(), 13);
    }

    #[test]
    fn space_time_requires_single_config() {
        let spec = EnsembleSpec::new(16, 2, 41, 0.4, MapParams::with_beta(-0.69), 4);
        assert!(export_space_time(&spec, SpaceTimeMode::Raw).is_err());
    }

    #[test]
    fn log_thin_keeps_dense_prefix() {
        let series = ObservableSeries {
            times: (1..=100_000).collect(),
            values: vec![0.5; 100_000],
            n_configs: 1,
            label: SeriesLabel::FlipRate,
        };
        let thinned = log_thin(&series, 1000, 100);
        assert!(thinned.times.len() < 2000);
        assert_eq!(thinned.times[..1000], series.times[..1000]);
        assert_eq!(*thinned.times.last().unwrap(), 100_000);
    }
}
