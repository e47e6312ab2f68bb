//! Multi-replica damage spreading: fine-grained d(t), coarse-grained D(t),
//! and the per-site damage field for two replicas.
//!
//! d and D are recorded every micro-step (not every observable step), since
//! the damage field is a raw space-time quantity.

use rand::Rng;

use crate::ensemble::{map_reduce_ordered, SeriesAccumulator};
use crate::error::{Error, Result};
use crate::lattice::{EnsembleSpec, LatticeState};
use crate::map::largest_fixed_point;
use crate::observables::{ObservableSeries, SeriesLabel};

const DAMAGE_RNG_SALT: u64 = 0x44414d47; // site-choice stream domain

/// k replicas sharing length, coupling and map parameters. Replica 0 is the
/// unperturbed reference.
#[derive(Debug, Clone)]
pub struct ReplicaSet {
    replicas: Vec<LatticeState>,
}

impl ReplicaSet {
    /// k bit-identical copies of `base`.
    pub fn from_base(base: &LatticeState, k: usize) -> Result<Self> {
        if k < 2 {
            return Err(Error::InvalidK { k });
        }
        Ok(ReplicaSet {
            replicas: vec![base.clone(); k],
        })
    }

    /// Build from explicit states (must agree in length, coupling, params).
    pub fn from_states(replicas: Vec<LatticeState>) -> Result<Self> {
        if replicas.len() < 2 {
            return Err(Error::InvalidK { k: replicas.len() });
        }
        let first = &replicas[0];
        for r in &replicas[1..] {
            if r.len() != first.len()
                || r.epsilon() != first.epsilon()
                || r.params() != first.params()
            {
                return Err(Error::validation(
                    "replicas must share length, epsilon and map parameters",
                ));
            }
        }
        Ok(ReplicaSet { replicas })
    }

    pub fn k(&self) -> usize {
        self.replicas.len()
    }

    /// N_P = k (k - 1) / 2
    pub fn n_pairs(&self) -> usize {
        self.k() * (self.k() - 1) / 2
    }

    pub fn n_sites(&self) -> usize {
        self.replicas[0].len()
    }

    pub fn replica(&self, i: usize) -> &LatticeState {
        &self.replicas[i]
    }

    /// Shift cells of every non-reference replica by `delta` at `sites`.
    pub fn perturb(&mut self, sites: &[usize], delta: f64) -> Result<()> {
        let n = self.n_sites();
        for &site in sites {
            if site >= n {
                return Err(Error::IndexOutOfRange {
                    index: site,
                    len: n,
                });
            }
        }
        for replica in &mut self.replicas[1..] {
            for &site in sites {
                replica.cells_mut()[site] += delta;
            }
        }
        Ok(())
    }

    /// Perturb round(p * N) distinct sites in each non-reference replica,
    /// with an independent site choice per replica drawn from `rng`.
    pub fn perturb_fraction(
        &mut self,
        fraction: f64,
        delta: f64,
        rng: &mut impl Rng,
    ) -> Result<()> {
        let n = self.n_sites();
        let m = (fraction * n as f64).round() as usize;
        if m == 0 || m > n {
            return Err(Error::validation(format!(
                "fraction {fraction} selects {m} of {n} sites"
            )));
        }
        for replica in &mut self.replicas[1..] {
            let sites = sample_distinct(n, m, rng);
            for site in sites {
                replica.cells_mut()[site] += delta;
            }
        }
        Ok(())
    }

    pub fn step_all(&mut self) {
        for replica in &mut self.replicas {
            replica.step();
        }
    }
}

/// Partial Fisher-Yates draw of m distinct indices from 0..n.
fn sample_distinct(n: usize, m: usize, rng: &mut impl Rng) -> Vec<usize> {
    let mut indices: Vec<usize> = (0..n).collect();
    for j in 0..m {
        let r = rng.gen_range(j..n);
        indices.swap(j, r);
    }
    indices.truncate(m);
    indices
}

/// d(t) = (1/N_P) sum_{l<m} sum_i |x_i^l - x_i^m|
pub fn damage_fine(rs: &ReplicaSet) -> f64 {
    let k = rs.k();
    let mut total = 0.0;
    for l in 0..k - 1 {
        for m in l + 1..k {
            let mut pair = 0.0;
            for (a, b) in rs.replicas[l].cells().iter().zip(rs.replicas[m].cells()) {
                pair += (a - b).abs();
            }
            total += pair;
        }
    }
    total / rs.n_pairs() as f64
}

/// D(t) = (1/N_P) sum_{l<m} sum_i |s(x_i^l) - s(x_i^m)|; each differing site
/// contributes 2.
pub fn damage_coarse(rs: &ReplicaSet, x_star: f64) -> f64 {
    let k = rs.k();
    let mut total = 0usize;
    for l in 0..k - 1 {
        for m in l + 1..k {
            let differing = rs.replicas[l]
                .cells()
                .iter()
                .zip(rs.replicas[m].cells())
                .filter(|(&a, &b)| (a >= x_star) != (b >= x_star))
                .count();
            total += 2 * differing;
        }
    }
    total as f64 / rs.n_pairs() as f64
}

/// Where the perturbation lands.
#[derive(Debug, Clone, PartialEq)]
pub enum DamageTarget {
    /// the single site N/2
    CentralSite,
    Sites(Vec<usize>),
    /// round(p * N) sites drawn independently per non-reference replica
    Fraction(f64),
}

#[derive(Debug, Clone)]
pub struct DamageOpts {
    pub k: usize,
    pub delta: f64,
    pub target: DamageTarget,
    /// micro-steps to simulate after the perturbation
    pub t_max_micro: usize,
    /// micro-steps to evolve the base before cloning and perturbing
    pub transient_micro: usize,
    /// record the per-site |x_i - y_i| field (k = 2, configuration 0) every
    /// `stride` micro-steps
    pub field_stride: Option<usize>,
}

/// Per-site |x_i(t) - y_i(t)| snapshots for a two-replica run.
#[derive(Debug, Clone)]
pub struct DamageField {
    pub stride: usize,
    pub rows: Vec<Vec<f64>>,
}

#[derive(Debug)]
pub struct DamageRun {
    pub fine: ObservableSeries,
    pub coarse: ObservableSeries,
    /// (d(t_max), D(t_max)) per configuration, in index order
    pub finals: Vec<(f64, f64)>,
    pub field: Option<DamageField>,
}

struct ConfigDamage {
    fine: Vec<f64>,
    coarse: Vec<f64>,
    field: Option<DamageField>,
}

fn run_config_damage(
    spec: &EnsembleSpec,
    opts: &DamageOpts,
    config_index: usize,
    x_star: f64,
) -> Result<ConfigDamage> {
    let mut base = spec.init_random(config_index)?;
    for _ in 0..opts.transient_micro {
        base.step();
    }
    let mut rs = ReplicaSet::from_base(&base, opts.k)?;
    match &opts.target {
        DamageTarget::CentralSite => rs.perturb(&[spec.n_sites / 2], opts.delta)?,
        DamageTarget::Sites(sites) => rs.perturb(sites, opts.delta)?,
        DamageTarget::Fraction(p) => {
            let mut rng = spec.rng_with_salt(config_index, DAMAGE_RNG_SALT);
            rs.perturb_fraction(*p, opts.delta, &mut rng)?;
        }
    }
    let record_field = opts.field_stride.is_some() && opts.k == 2 && config_index == 0;
    let stride = opts.field_stride.unwrap_or(1).max(1);
    let mut field_rows = Vec::new();
    let mut fine = Vec::with_capacity(opts.t_max_micro + 1);
    let mut coarse = Vec::with_capacity(opts.t_max_micro + 1);
    for t in 0..=opts.t_max_micro {
        if t > 0 {
            rs.step_all();
        }
        fine.push(damage_fine(&rs));
        coarse.push(damage_coarse(&rs, x_star));
        if record_field && t % stride == 0 {
            let row = rs.replicas[0]
                .cells()
                .iter()
                .zip(rs.replicas[1].cells())
                .map(|(a, b)| (a - b).abs())
                .collect();
            field_rows.push(row);
        }
    }
    Ok(ConfigDamage {
        fine,
        coarse,
        field: record_field.then_some(DamageField {
            stride,
            rows: field_rows,
        }),
    })
}

/// Evolve perturbed replicas for every configuration and ensemble-average
/// d(t) and D(t) over configurations (index-ordered reduction).
pub fn run_damage(spec: &EnsembleSpec, opts: &DamageOpts) -> Result<DamageRun> {
    spec.validate()?;
    if opts.k < 2 {
        return Err(Error::InvalidK { k: opts.k });
    }
    if opts.t_max_micro < 1 {
        return Err(Error::validation("t_max_micro must be >= 1"));
    }
    let x_star = largest_fixed_point(spec.params, crate::map::DEFAULT_ROOT_TOL)?.x_star;
    let len = opts.t_max_micro + 1;
    let mut acc_fine = SeriesAccumulator::new(len);
    let mut acc_coarse = SeriesAccumulator::new(len);
    let mut finals = Vec::with_capacity(spec.n_configs);
    let mut field = None;
    map_reduce_ordered(
        spec.n_configs,
        |idx| run_config_damage(spec, opts, idx, x_star),
        |_, cfg| {
            acc_fine.add(&cfg.fine)?;
            acc_coarse.add(&cfg.coarse)?;
            finals.push((*cfg.fine.last().unwrap(), *cfg.coarse.last().unwrap()));
            if cfg.field.is_some() {
                field = cfg.field;
            }
            Ok(())
        },
    )?;
    let times: Vec<u64> = (0..=opts.t_max_micro as u64).collect();
    Ok(DamageRun {
        fine: ObservableSeries {
            times: times.clone(),
            values: acc_fine.mean(),
            n_configs: spec.n_configs,
            label: SeriesLabel::DamageFine,
        },
        coarse: ObservableSeries {
            times,
            values: acc_coarse.mean(),
            n_configs: spec.n_configs,
            label: SeriesLabel::DamageCoarse,
        },
        finals,
        field,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::map::{MapParams, DEFAULT_ROOT_TOL};

    fn spec(n: usize, beta: f64, configs: usize, seed: u64) -> EnsembleSpec {
        EnsembleSpec::new(n, configs, seed, 0.4, MapParams::with_beta(beta), 10)
    }

    fn x_star(beta: f64) -> f64 {
        largest_fixed_point(MapParams::with_beta(beta), DEFAULT_ROOT_TOL)
            .unwrap()
            .x_star
    }

    #[test]
    fn k_below_two_rejected() {
        let base = spec(16, -0.6773, 1, 1).init_random(0).unwrap();
        assert!(matches!(
            ReplicaSet::from_base(&base, 1).unwrap_err(),
            Error::InvalidK { k: 1 }
        ));
    }

    #[test]
    fn pair_counts() {
        let base = spec(16, -0.6773, 1, 1).init_random(0).unwrap();
        assert_eq!(ReplicaSet::from_base(&base, 2).unwrap().n_pairs(), 1);
        assert_eq!(ReplicaSet::from_base(&base, 4).unwrap().n_pairs(), 6);
    }

    #[test]
    fn unperturbed_replicas_stay_identical() {
        let base = spec(32, -0.6773, 1, 7).init_random(0).unwrap();
        let mut rs = ReplicaSet::from_base(&base, 3).unwrap();
        for _ in 0..100 {
            rs.step_all();
            assert_eq!(damage_fine(&rs), 0.0);
        }
    }

    #[test]
    fn central_site_initial_damage_equals_delta() {
        let s = spec(101, -0.6773, 1, 3);
        let base = s.init_random(0).unwrap();
        let mut rs = ReplicaSet::from_base(&base, 2).unwrap();
        rs.perturb(&[50], 0.1).unwrap();
        assert!((damage_fine(&rs) - 0.1).abs() < 1e-12);
    }

    #[test]
    fn zero_delta_means_zero_damage_forever() {
        let s = spec(64, -0.65, 1, 5);
        let opts = DamageOpts {
            k: 2,
            delta: 0.0,
            target: DamageTarget::CentralSite,
            t_max_micro: 50,
            transient_micro: 0,
            field_stride: None,
        };
        let run = run_damage(&s, &opts).unwrap();
        assert!(run.fine.values.iter().all(|&v| v == 0.0));
        assert!(run.coarse.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn perturb_rejects_out_of_range_site() {
        let base = spec(16, -0.6773, 1, 1).init_random(0).unwrap();
        let mut rs = ReplicaSet::from_base(&base, 2).unwrap();
        assert!(matches!(
            rs.perturb(&[16], 0.1).unwrap_err(),
            Error::IndexOutOfRange { index: 16, len: 16 }
        ));
    }

    #[test]
    fn constant_offset_oracle_for_three_replicas() {
        // replicas offset sitewise by 0, a, b from a common state:
        // d = (N |a| + N |b| + N |a - b|) / 3
        let p = MapParams::with_beta(-0.6773);
        let n = 10;
        let (a, b) = (0.05, -0.03);
        let base: Vec<f64> = (0..n).map(|i| 0.1 + 0.01 * i as f64).collect();
        let mk = |off: f64| {
            LatticeState::new(base.iter().map(|x| x + off).collect(), 0.4, p).unwrap()
        };
        let rs = ReplicaSet::from_states(vec![mk(0.0), mk(a), mk(b)]).unwrap();
        let expected =
            (n as f64 * a.abs() + n as f64 * b.abs() + n as f64 * (a - b).abs()) / 3.0;
        assert!((damage_fine(&rs) - expected).abs() < 1e-12);
    }

    #[test]
    fn coarse_damage_counts_two_per_differing_site() {
        let beta = -0.6773;
        let xs = x_star(beta);
        let p = MapParams::with_beta(beta);
        let mut above = vec![xs + 0.1; 8];
        let a = LatticeState::new(above.clone(), 0.4, p).unwrap();
        above[3] = xs - 0.1;
        let b = LatticeState::new(above, 0.4, p).unwrap();
        let rs = ReplicaSet::from_states(vec![a.clone(), b]).unwrap();
        assert_eq!(damage_coarse(&rs, xs), 2.0);
        let same = ReplicaSet::from_states(vec![a.clone(), a]).unwrap();
        assert_eq!(damage_coarse(&same, xs), 0.0);
    }

    #[test]
    fn damage_fine_is_replica_permutation_invariant() {
        let s = spec(32, -0.6773, 1, 11);
        let base = s.init_random(0).unwrap();
        let mut rs = ReplicaSet::from_base(&base, 3).unwrap();
        rs.perturb(&[4, 9], 0.07).unwrap();
        for _ in 0..20 {
            rs.step_all();
        }
        let d = damage_fine(&rs);
        let permuted = ReplicaSet::from_states(vec![
            rs.replica(2).clone(),
            rs.replica(0).clone(),
            rs.replica(1).clone(),
        ])
        .unwrap();
        assert_eq!(damage_fine(&permuted), d);
    }

    #[test]
    fn fraction_mode_perturbs_expected_site_count() {
        let s = spec(100, -0.6773, 1, 13);
        let base = s.init_random(0).unwrap();
        let mut rs = ReplicaSet::from_base(&base, 3).unwrap();
        let mut rng = s.rng_with_salt(0, DAMAGE_RNG_SALT);
        rs.perturb_fraction(0.25, 0.1, &mut rng).unwrap();
        for r in 1..3 {
            let differing = rs
                .replica(r)
                .cells()
                .iter()
                .zip(base.cells())
                .filter(|(a, b)| a != b)
                .count();
            assert_eq!(differing, 25, "replica {r}");
        }
        // independent choices: replicas 1 and 2 differ from each other
        assert_ne!(rs.replica(1).cells(), rs.replica(2).cells());
    }

    #[test]
    fn damage_bounds_hold_after_stepping() {
        let s = spec(64, -0.6773, 1, 17);
        let opts = DamageOpts {
            k: 2,
            delta: 0.1,
            target: DamageTarget::CentralSite,
            t_max_micro: 40,
            transient_micro: 0,
            field_stride: None,
        };
        let run = run_damage(&s, &opts).unwrap();
        let n = s.n_sites as f64;
        // cells are confined to [beta, 1+beta] after one step, so per-site
        // fine damage is at most the range width 1
        for (t, &d) in run.fine.times.iter().zip(&run.fine.values).skip(1) {
            assert!(d >= 0.0 && d <= n, "t={t} d={d}");
        }
        for &dc in &run.coarse.values {
            assert!(dc >= 0.0 && dc <= 2.0 * n);
        }
    }

    #[test]
    fn field_recorded_for_two_replicas() {
        let s = spec(32, -0.6773, 2, 19);
        let opts = DamageOpts {
            k: 2,
            delta: 0.1,
            target: DamageTarget::CentralSite,
            t_max_micro: 10,
            transient_micro: 0,
            field_stride: Some(2),
        };
        let run = run_damage(&s, &opts).unwrap();
        let field = run.field.expect("field should be recorded");
        assert_eq!(field.rows.len(), 6); // t = 0, 2, 4, 6, 8, 10
        assert_eq!(field.rows[0].len(), 32);
        assert_eq!(run.finals.len(), 2);
    }
}
