//! Experiment drivers behind the CLI subcommands, and the experiment record
//! that makes every run reproducible.

use std::path::{Path, PathBuf};
use std::time::Instant;

use crate::config::{Config, Sides};
use crate::damage::{DamageOpts, DamageTarget};
use crate::ensemble::with_workers;
use crate::error::{Error, Result};
use crate::lattice::EnsembleSpec;
use crate::map::{beta_grid, largest_fixed_point, single_map_bifurcation, DEFAULT_ROOT_TOL};
use crate::observables::{coarse_grain, export_space_time, run_observables, SpaceTimeMode};
use crate::output;
use crate::scaling::{
    fit_corrected_power_law, fit_power_law, finite_size_collapse, off_critical_collapse,
    optimize_fss_z, optimize_off_nu, OffCriticalSeries,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExperimentKind {
    Bifurcation,
    CriticalDecay,
    Fss,
    OffCritical,
    Damage,
    Lyapunov,
}

impl ExperimentKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            ExperimentKind::Bifurcation => "bifurcation",
            ExperimentKind::CriticalDecay => "critical-decay",
            ExperimentKind::Fss => "fss",
            ExperimentKind::OffCritical => "off-critical",
            ExperimentKind::Damage => "damage",
            ExperimentKind::Lyapunov => "lyapunov",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Ok(match s {
            "bifurcation" => ExperimentKind::Bifurcation,
            "critical-decay" => ExperimentKind::CriticalDecay,
            "fss" => ExperimentKind::Fss,
            "off-critical" => ExperimentKind::OffCritical,
            "damage" => ExperimentKind::Damage,
            "lyapunov" => ExperimentKind::Lyapunov,
            _ => return Err(Error::validation(format!("unknown experiment kind {s:?}"))),
        })
    }
}

/// Everything needed to reproduce a finished run bit-for-bit.
#[derive(Debug, Clone)]
pub struct ExperimentRecord {
    pub kind: ExperimentKind,
    pub config: Config,
    pub outputs: Vec<String>,
    pub wall_time_s: f64,
    pub code_version: String,
}

pub const RECORD_FILE: &str = "record.txt";

impl ExperimentRecord {
    pub fn serialize(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("kind = {}\n", self.kind.as_str()));
        out.push_str(&format!("code_version = {}\n", self.code_version));
        out.push_str(&self.config.serialize());
        out.push_str(&format!("outputs = {}\n", self.outputs.join(",")));
        out.push_str(&format!("wall_time_s = {}\n", self.wall_time_s));
        out
    }

    /// Recover (kind, config) from a record file; run metadata lines are
    /// skipped, so a re-run reproduces the original outputs byte-for-byte.
    pub fn parse_kind_and_config(text: &str) -> Result<(ExperimentKind, Config)> {
        let mut kind = None;
        let mut config = Config::default();
        for line in text.lines() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(Error::validation(format!("bad record line {line:?}")));
            };
            let (key, value) = (key.trim(), value.trim());
            match key {
                "kind" => kind = Some(ExperimentKind::parse(value)?),
                "code_version" | "outputs" | "wall_time_s" => {}
                _ => config.set(key, value)?,
            }
        }
        let kind = kind.ok_or_else(|| Error::validation("record is missing a kind"))?;
        Ok((kind, config))
    }
}

/// Run one experiment into `out_dir`, writing all data files plus the record.
pub fn run_experiment(
    kind: ExperimentKind,
    config: &Config,
    out_dir: &Path,
) -> Result<ExperimentRecord> {
    config.validate()?;
    std::fs::create_dir_all(out_dir)?;
    let start = Instant::now();
    let outputs = with_workers(config.workers, || match kind {
        ExperimentKind::Bifurcation => run_bifurcation(config, out_dir),
        ExperimentKind::CriticalDecay => run_critical_decay(config, out_dir),
        ExperimentKind::Fss => run_fss(config, out_dir),
        ExperimentKind::OffCritical => run_off_critical(config, out_dir),
        ExperimentKind::Damage => run_damage_experiment(config, out_dir),
        ExperimentKind::Lyapunov => run_lyapunov_sweep(config, out_dir),
    })??;
    let record = ExperimentRecord {
        kind,
        config: config.clone(),
        outputs,
        wall_time_s: start.elapsed().as_secs_f64(),
        code_version: env!("CARGO_PKG_VERSION").to_string(),
    };
    std::fs::write(out_dir.join(RECORD_FILE), record.serialize())?;
    Ok(record)
}

/// Re-run a recorded experiment into a fresh directory.
pub fn rerun_from_record(record_path: &Path, out_dir: &Path) -> Result<ExperimentRecord> {
    let text = std::fs::read_to_string(record_path)?;
    let (kind, config) = ExperimentRecord::parse_kind_and_config(&text)?;
    run_experiment(kind, &config, out_dir)
}

fn run_bifurcation(config: &Config, dir: &Path) -> Result<Vec<String>> {
    let betas = beta_grid(config.bif_beta_min, config.bif_beta_max, config.bif_beta_step)?;
    let mut x_stars = Vec::with_capacity(betas.len());
    for &beta in &betas {
        x_stars.push(largest_fixed_point(config.map_params(beta)?, DEFAULT_ROOT_TOL)?.x_star);
    }

    // single map
    let orbits = single_map_bifurcation(
        config.nu,
        &betas,
        config.bif_x0,
        config.bif_transient,
        config.bif_keep,
    )?;
    let mut single = String::from("beta,value,x_star\n");
    for (orbit, &x_star) in orbits.iter().zip(&x_stars) {
        for v in &orbit.values {
            single.push_str(&format!("{},{v},{x_star}\n", orbit.beta));
        }
    }
    std::fs::write(dir.join("single_map_bifurcation.csv"), single)?;

    // coupled lattice, a fixed subset of sites per beta
    let n = config.bif_n_sites;
    let n_sampled = config.bif_sites.clamp(1, n);
    let sites: Vec<usize> = (0..n_sampled).map(|j| j * n / n_sampled).collect();
    let mut coupled = String::from("beta,site,value,x_star\n");
    for (&beta, &x_star) in betas.iter().zip(&x_stars) {
        let spec = EnsembleSpec {
            n_sites: n,
            ..config.ensemble_spec(beta, 1)?
        };
        let mut state = spec.init_random(0)?;
        for _ in 0..config.bif_transient {
            state.step();
        }
        for _ in 0..config.bif_keep {
            state.step();
            for &site in &sites {
                coupled.push_str(&format!("{beta},{site},{},{x_star}\n", state.cells()[site]));
            }
        }
    }
    std::fs::write(dir.join("coupled_bifurcation.csv"), coupled)?;
    Ok(vec![
        "single_map_bifurcation.csv".into(),
        "coupled_bifurcation.csv".into(),
    ])
}

fn run_critical_decay(config: &Config, dir: &Path) -> Result<Vec<String>> {
    let beta = config.beta();
    let spec = config.ensemble_spec(beta, config.t_max)?;
    let (f, p) = run_observables(&spec)?;
    output::write_series_csv(&dir.join("flip_rate.csv"), &f, config.log_thin)?;
    output::write_series_csv(&dir.join("persistence.csv"), &p, config.log_thin)?;
    let mut outputs = vec!["flip_rate.csv".to_string(), "persistence.csv".to_string()];

    let window = config.fit_window();
    let f_fit = fit_power_law(&f, window)?;
    let p_fit = fit_power_law(&p, window)?;
    let corrected = fit_corrected_power_law(&p, config.theta, &config.gamma_candidates)?;
    output::write_keyvalues(
        &dir.join("fit_report.txt"),
        &[
            ("beta", beta.to_string()),
            ("delta", f_fit.exponent.to_string()),
            ("delta_amplitude", f_fit.amplitude.to_string()),
            ("delta_window_t_min", f_fit.window.0.to_string()),
            ("delta_window_t_max", f_fit.window.1.to_string()),
            ("delta_fit_residual", f_fit.residual.to_string()),
            ("theta", p_fit.exponent.to_string()),
            ("theta_amplitude", p_fit.amplitude.to_string()),
            ("theta_window_t_min", p_fit.window.0.to_string()),
            ("theta_window_t_max", p_fit.window.1.to_string()),
            ("theta_fit_residual", p_fit.residual.to_string()),
            ("corrected_theta", corrected.theta.to_string()),
            ("gamma", corrected.gamma.to_string()),
            ("C", corrected.c.to_string()),
            ("c1", corrected.c1.to_string()),
            ("linearity_residual", corrected.linearity_residual.to_string()),
        ],
    )?;
    outputs.push("fit_report.txt".into());

    if config.space_time {
        let st_spec = EnsembleSpec {
            n_configs: 1,
            ..config.ensemble_spec(beta, config.t_max)?
        };
        let rows = export_space_time(&st_spec, config.space_time_mode)?;
        output::write_matrix(&dir.join("space_time.txt"), &rows)?;
        output::write_keyvalues(
            &dir.join("space_time.meta"),
            &[
                ("n_sites", st_spec.n_sites.to_string()),
                ("beta", beta.to_string()),
                ("epsilon", config.epsilon.to_string()),
                ("nu", config.nu.to_string()),
                ("seed", config.seed.to_string()),
                (
                    "mode",
                    match config.space_time_mode {
                        SpaceTimeMode::Spins => "spins".to_string(),
                        SpaceTimeMode::Raw => "raw".to_string(),
                    },
                ),
                ("rows", "observable_steps_0_to_t_max".to_string()),
            ],
        )?;
        outputs.push("space_time.txt".into());
        outputs.push("space_time.meta".into());
    }

    if config.spatial_profile {
        let x_star = largest_fixed_point(config.map_params(beta)?, DEFAULT_ROOT_TOL)?.x_star;
        let mut state = config.ensemble_spec(beta, config.t_max)?.init_random(0)?;
        for _ in 0..config.t_max {
            state.step_pair();
        }
        let spins = coarse_grain(&state, x_star);
        let mut text = format!("# x_star={x_star}\ni,x_i,s_i\n");
        for (i, (&x, &s)) in state.cells().iter().zip(spins.spins()).enumerate() {
            text.push_str(&format!("{i},{x},{s}\n"));
        }
        std::fs::write(dir.join("spatial_profile.csv"), text)?;
        outputs.push("spatial_profile.csv".into());
    }
    Ok(outputs)
}

fn run_fss(config: &Config, dir: &Path) -> Result<Vec<String>> {
    if config.size_list.len() < 3 {
        return Err(Error::validation("fss needs >= 3 sizes in size_list"));
    }
    let beta = config.beta();
    let mut outputs = Vec::new();
    let mut family_f = Vec::new();
    let mut family_p = Vec::new();
    for &n in &config.size_list {
        let spec = EnsembleSpec {
            n_sites: n,
            ..config.ensemble_spec(beta, config.t_max)?
        };
        let (f, p) = run_observables(&spec)?;
        let f_name = format!("flip_rate_N{n}.csv");
        let p_name = format!("persistence_N{n}.csv");
        output::write_series_csv(&dir.join(&f_name), &f, config.log_thin)?;
        output::write_series_csv(&dir.join(&p_name), &p, config.log_thin)?;
        outputs.push(f_name);
        outputs.push(p_name);
        family_f.push((n, f));
        family_p.push((n, p));
    }

    let collapse_f = finite_size_collapse(&family_f, config.z, config.delta_exp)?;
    let collapse_p = finite_size_collapse(&family_p, config.z, config.theta)?;
    output::write_collapse_csv(&dir.join("collapse_flip_rate.csv"), &collapse_f)?;
    output::write_collapse_csv(&dir.join("collapse_persistence.csv"), &collapse_p)?;
    let (best_f, table_f) = optimize_fss_z(&family_f, config.delta_exp, &config.z_candidates)?;
    let (best_p, table_p) = optimize_fss_z(&family_p, config.theta, &config.z_candidates)?;
    output::write_quality_csv(&dir.join("quality_flip_rate.csv"), &table_f)?;
    output::write_quality_csv(&dir.join("quality_persistence.csv"), &table_p)?;
    output::write_keyvalues(
        &dir.join("report.txt"),
        &[
            ("beta", beta.to_string()),
            ("z", config.z.to_string()),
            ("quality_flip_rate", collapse_f.quality.to_string()),
            ("quality_persistence", collapse_p.quality.to_string()),
            ("best_z_flip_rate", best_f.to_string()),
            ("best_z_persistence", best_p.to_string()),
        ],
    )?;
    outputs.extend(
        [
            "collapse_flip_rate.csv",
            "collapse_persistence.csv",
            "quality_flip_rate.csv",
            "quality_persistence.csv",
            "report.txt",
        ]
        .map(String::from),
    );
    Ok(outputs)
}

fn run_off_critical(config: &Config, dir: &Path) -> Result<Vec<String>> {
    if config.delta_list.len() < 3 {
        return Err(Error::validation(
            "off-critical needs >= 3 Delta values in delta_list",
        ));
    }
    let sides: &[bool] = match config.sides {
        Sides::Both => &[true, false],
        Sides::Above => &[true],
        Sides::Below => &[false],
    };
    let mut outputs = Vec::new();
    let mut family_f = Vec::new();
    let mut family_p = Vec::new();
    for (i, &delta) in config.delta_list.iter().enumerate() {
        let t_max = config
            .t_max_list
            .as_ref()
            .map(|l| l[i])
            .unwrap_or(config.t_max);
        for &above in sides {
            let beta = if above {
                config.beta_c + delta
            } else {
                config.beta_c - delta
            };
            let spec = config.ensemble_spec(beta, t_max)?;
            let (f, p) = run_observables(&spec)?;
            let side = if above { "above" } else { "below" };
            let f_name = format!("flip_rate_{side}_d{delta}.csv");
            let p_name = format!("persistence_{side}_d{delta}.csv");
            output::write_series_csv(&dir.join(&f_name), &f, config.log_thin)?;
            output::write_series_csv(&dir.join(&p_name), &p, config.log_thin)?;
            outputs.push(f_name);
            outputs.push(p_name);
            family_f.push(OffCriticalSeries {
                delta,
                above,
                series: f,
            });
            family_p.push(OffCriticalSeries {
                delta,
                above,
                series: p,
            });
        }
    }

    let collapse_f = off_critical_collapse(&family_f, config.nu_par, config.delta_exp)?;
    output::write_collapse_csv(&dir.join("collapse_flip_rate.csv"), &collapse_f)?;
    let (best_f, table_f) =
        optimize_off_nu(&family_f, config.delta_exp, &config.nu_par_candidates)?;
    output::write_quality_csv(&dir.join("quality_flip_rate.csv"), &table_f)?;
    let mut report = vec![
        ("beta_c", config.beta_c.to_string()),
        ("nu_par", config.nu_par.to_string()),
        ("quality_flip_rate", collapse_f.quality.to_string()),
        ("best_nu_par_flip_rate", best_f.to_string()),
    ];
    outputs.extend(["collapse_flip_rate.csv", "quality_flip_rate.csv"].map(String::from));

    // persistence collapse: below-critical curves saturate, so the family can
    // be restricted by `sides`; fit whatever branches are present
    let collapse_p = off_critical_collapse(&family_p, config.nu_par, config.theta)?;
    output::write_collapse_csv(&dir.join("collapse_persistence.csv"), &collapse_p)?;
    let (best_p, table_p) = optimize_off_nu(&family_p, config.theta, &config.nu_par_candidates)?;
    output::write_quality_csv(&dir.join("quality_persistence.csv"), &table_p)?;
    report.push(("quality_persistence", collapse_p.quality.to_string()));
    report.push(("best_nu_par_persistence", best_p.to_string()));
    outputs.extend(["collapse_persistence.csv", "quality_persistence.csv"].map(String::from));

    output::write_keyvalues(&dir.join("report.txt"), &report)?;
    outputs.push("report.txt".into());
    Ok(outputs)
}

fn run_damage_experiment(config: &Config, dir: &Path) -> Result<Vec<String>> {
    let beta = config.beta();
    // damage time resolution is micro-steps
    let spec = config.ensemble_spec(beta, 1)?;
    let stride = if config.field_stride == 0 {
        (config.t_max / 512).max(1)
    } else {
        config.field_stride
    };
    let opts = DamageOpts {
        k: config.damage_k,
        delta: config.damage_delta,
        target: match config.damage_fraction {
            Some(p) => DamageTarget::Fraction(p),
            None => DamageTarget::CentralSite,
        },
        t_max_micro: config.t_max,
        transient_micro: config.damage_transient,
        field_stride: (config.record_field && config.damage_k == 2).then_some(stride),
    };
    let run = crate::damage::run_damage(&spec, &opts)?;
    output::write_series_csv(&dir.join("damage_fine.csv"), &run.fine, config.log_thin)?;
    output::write_series_csv(&dir.join("damage_coarse.csv"), &run.coarse, config.log_thin)?;
    let mut outputs = vec!["damage_fine.csv".to_string(), "damage_coarse.csv".to_string()];
    if let Some(field) = run.field {
        output::write_matrix(&dir.join("damage_field.txt"), &field.rows)?;
        output::write_keyvalues(
            &dir.join("damage_field.meta"),
            &[
                ("n_sites", spec.n_sites.to_string()),
                ("beta", beta.to_string()),
                ("epsilon", config.epsilon.to_string()),
                ("nu", config.nu.to_string()),
                ("seed", config.seed.to_string()),
                ("k", config.damage_k.to_string()),
                ("delta", config.damage_delta.to_string()),
                ("row_stride_micro_steps", field.stride.to_string()),
            ],
        )?;
        outputs.push("damage_field.txt".into());
        outputs.push("damage_field.meta".into());
    }
    Ok(outputs)
}

fn run_lyapunov_sweep(config: &Config, dir: &Path) -> Result<Vec<String>> {
    let betas = beta_grid(config.beta_min, config.beta_max, config.beta_step)?;
    let mut rows = Vec::with_capacity(betas.len());
    for &beta in &betas {
        let spec = config.ensemble_spec(beta, 1)?;
        let est = crate::lyapunov::largest_lyapunov(&spec, config.lyap_transient, config.lyap_steps)?;
        rows.push((beta, est.lambda, est.stderr));
    }
    output::write_lyapunov_csv(&dir.join("lyapunov.csv"), &rows)?;
    Ok(vec!["lyapunov.csv".into()])
}

/// Resolve the output directory: --out beats the config key.
pub fn resolve_out_dir(config: &Config, out_flag: Option<PathBuf>) -> PathBuf {
    out_flag.unwrap_or_else(|| PathBuf::from(&config.out_dir))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_config() -> Config {
        let mut c = Config::default();
        for kv in [
            "n_sites=32",
            "n_configs=2",
            "t_max=50",
            "seed=7",
            "bif_beta_min=-0.70",
            "bif_beta_max=-0.60",
            "bif_beta_step=0.05",
            "bif_transient=50",
            "bif_keep=10",
            "bif_n_sites=16",
            "size_list=8,16,32",
            "lyap_transient=100",
            "lyap_steps=500",
            "beta_min=-0.75",
            "beta_max=-0.70",
            "beta_step=0.05",
        ] {
            c.apply_set(kv).unwrap();
        }
        c
    }

    #[test]
    fn record_round_trip() {
        let config = tiny_config();
        let record = ExperimentRecord {
            kind: ExperimentKind::Damage,
            config: config.clone(),
            outputs: vec!["a.csv".into(), "b.csv".into()],
            wall_time_s: 1.5,
            code_version: "test".into(),
        };
        let text = record.serialize();
        let (kind, parsed) = ExperimentRecord::parse_kind_and_config(&text).unwrap();
        assert_eq!(kind, ExperimentKind::Damage);
        assert_eq!(parsed, config);
    }

    #[test]
    fn kind_parsing() {
        for kind in [
            ExperimentKind::Bifurcation,
            ExperimentKind::CriticalDecay,
            ExperimentKind::Fss,
            ExperimentKind::OffCritical,
            ExperimentKind::Damage,
            ExperimentKind::Lyapunov,
        ] {
            assert_eq!(ExperimentKind::parse(kind.as_str()).unwrap(), kind);
        }
        assert!(ExperimentKind::parse("nope").is_err());
    }

    #[test]
    fn bifurcation_writes_expected_files() {
        let dir = tempfile::tempdir().unwrap();
        let config = tiny_config();
        let record =
            run_experiment(ExperimentKind::Bifurcation, &config, dir.path()).unwrap();
        for name in &record.outputs {
            assert!(dir.path().join(name).exists(), "{name} missing");
        }
        assert!(dir.path().join(RECORD_FILE).exists());
        let single =
            std::fs::read_to_string(dir.path().join("single_map_bifurcation.csv")).unwrap();
        assert!(single.starts_with("beta,value,x_star\n"));
    }

    #[test]
    fn bifurcation_x_star_column_satisfies_fixed_point_equation() {
        let dir = tempfile::tempdir().unwrap();
        let config = tiny_config();
        run_experiment(ExperimentKind::Bifurcation, &config, dir.path()).unwrap();
        let text =
            std::fs::read_to_string(dir.path().join("single_map_bifurcation.csv")).unwrap();
        for line in text.lines().skip(1) {
            let mut parts = line.split(',');
            let beta: f64 = parts.next().unwrap().parse().unwrap();
            let _value: f64 = parts.next().unwrap().parse().unwrap();
            let x_star: f64 = parts.next().unwrap().parse().unwrap();
            let p = crate::map::MapParams::new(config.nu, beta).unwrap();
            assert!((crate::map::eval_map(x_star, p) - x_star).abs() < 1e-10);
        }
    }

    #[test]
    fn critical_decay_fit_report_has_exponent_keys() {
        let dir = tempfile::tempdir().unwrap();
        let mut config = tiny_config();
        config.apply_set("n_sites=256").unwrap();
        config.apply_set("t_max=200").unwrap();
        config.apply_set("n_configs=4").unwrap();
        run_experiment(ExperimentKind::CriticalDecay, &config, dir.path()).unwrap();
        let report = std::fs::read_to_string(dir.path().join("fit_report.txt")).unwrap();
        for key in ["delta =", "theta =", "gamma =", "C =", "c1 =", "delta_window_t_min"] {
            assert!(report.contains(key), "missing {key} in report:\n{report}");
        }
    }

    #[test]
    fn rerun_reproduces_outputs_byte_for_byte() {
        let dir1 = tempfile::tempdir().unwrap();
        let dir2 = tempfile::tempdir().unwrap();
        let config = tiny_config();
        let record =
            run_experiment(ExperimentKind::Damage, &config, dir1.path()).unwrap();
        rerun_from_record(&dir1.path().join(RECORD_FILE), dir2.path()).unwrap();
        for name in &record.outputs {
            let a = std::fs::read(dir1.path().join(name)).unwrap();
            let b = std::fs::read(dir2.path().join(name)).unwrap();
            assert_eq!(a, b, "{name} differs after rerun");
        }
    }
}
