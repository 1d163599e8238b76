//! Monte Carlo evaluation with common random numbers: every method sees the
//! same channel realization for a given pair index, while probing noise and
//! random beams come from per-(pair, method) streams.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::config::{checkpoint_filename, ExperimentConfig};
use super::plot;
use super::results::{emit_results, empirical_cdf, ResultRow};
use crate::baselines;
use crate::channel::{sample_si_channel, sample_user_channels, normalize_realization, ChannelRealization, RawChannels, Scenario};
use crate::error::{Error, Result};
use crate::learner::{self, Checkpoint};
use crate::math::{derive_seed, to_db};
use crate::metrics::{self, BeamPair, NoiseModel};

/// Evaluation methods. Learner and random probing carry their horizon.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    MrtMrc,
    Capacity,
    Learner { horizon: usize },
    RandomProbe { horizon: usize },
}

impl Method {
    pub fn tag(&self) -> String {
        match self {
            Method::MrtMrc => "mrt_mrc".into(),
            Method::Capacity => "capacity".into(),
            Method::Learner { horizon } => format!("learner_{horizon}"),
            Method::RandomProbe { horizon } => format!("random_{horizon}"),
        }
    }

    pub fn horizon(&self) -> usize {
        match self {
            Method::Learner { horizon } | Method::RandomProbe { horizon } => *horizon,
            _ => 0,
        }
    }

    fn stream_tag(&self) -> u64 {
        match self {
            Method::MrtMrc => 1,
            Method::Capacity => 2,
            Method::Learner { .. } => 3,
            Method::RandomProbe { .. } => 4,
        }
    }
}

/// One method run: the method, the seed identifying the trained model (or
/// the probing stream for the random control), and the checkpoint for
/// learner methods.
pub struct MethodRun {
    pub method: Method,
    pub seed: u64,
    pub checkpoint: Option<Checkpoint>,
}

/// Deterministic realization for an evaluation pair index.
///
/// The user-channel stream depends only on `(eval_seed, pair)`, so azimuths
/// and phases are common across methods *and* across Rician factors; the
/// Rayleigh component stream additionally mixes in the Rician factor bits,
/// so it is redrawn per kappa.
pub fn realization_for_pair(
    scenario: &Scenario,
    eval_seed: u64,
    pair: usize,
) -> Result<ChannelRealization> {
    let mut user_rng =
        ChaCha8Rng::seed_from_u64(derive_seed(eval_seed, &[pair as u64, 0x75]));
    let (h_tx, h_rx, az_tx, az_rx) = sample_user_channels(&scenario.geometry, &mut user_rng);
    let mut si_rng = ChaCha8Rng::seed_from_u64(derive_seed(
        eval_seed,
        &[pair as u64, scenario.kappa_db.to_bits(), 0x51],
    ));
    let si = sample_si_channel(scenario.h_bar(), scenario.kappa_db, &mut si_rng)?;
    normalize_realization(
        RawChannels {
            h_tx,
            h_rx,
            si,
            kappa_db: scenario.kappa_db,
            azimuth_tx_deg: az_tx,
            azimuth_rx_deg: az_rx,
        },
        scenario.snr_max_db,
        scenario.inr_max_db,
        scenario.inr_norm,
    )
}

fn serving_pair_for(
    run: &MethodRun,
    ch: &ChannelRealization,
    sigma2: f64,
    eval_seed: u64,
    pair: usize,
) -> Result<BeamPair> {
    let noise = NoiseModel::new(sigma2)?;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(
        eval_seed,
        &[
            pair as u64,
            run.method.stream_tag(),
            run.method.horizon() as u64,
            run.seed,
        ],
    ));
    match &run.method {
        Method::MrtMrc | Method::Capacity => baselines::mrt_mrc(ch),
        Method::Learner { horizon } => {
            let ckpt = run.checkpoint.as_ref().ok_or_else(|| Error::Checkpoint(
                format!("learner_{horizon} evaluation requires a checkpoint"),
            ))?;
            if ckpt.config.horizon != *horizon {
                return Err(Error::Checkpoint(format!(
                    "checkpoint horizon {} does not match requested T={horizon}",
                    ckpt.config.horizon
                )));
            }
            let trace = learner::unroll(&ckpt.params, &ckpt.config, ch, &noise, &mut rng)?;
            Ok(trace.serving)
        }
        Method::RandomProbe { horizon } => {
            let trace = baselines::random_probe_policy(ch, *horizon, &noise, &mut rng)?;
            Ok(trace.serving)
        }
    }
}

fn row_for(
    run: &MethodRun,
    ch: &ChannelRealization,
    serving: &BeamPair,
    kappa_db: f64,
    pair: usize,
) -> Result<ResultRow> {
    // The capacity row reports the interference-free rates (the bound the
    // other methods sit under); everything else reports true achieved values.
    if matches!(run.method, Method::Capacity) {
        let snr_rx = metrics::snr_rx(ch, &serving.w)?;
        let r_tx = (1.0 + metrics::sinr(metrics::snr_tx(ch, &serving.f)?, ch.inr_cross_linear()))
            .log2();
        let r_rx = (1.0 + snr_rx).log2();
        return Ok(ResultRow {
            method: run.method.tag(),
            kappa_db,
            horizon: 0,
            seed: run.seed,
            pair,
            inr_rx_db: to_db(0.0),
            sinr_rx_db: to_db(snr_rx),
            r_tx,
            r_rx,
            r_sum: r_tx + r_rx,
        });
    }
    let rates = metrics::rates(ch, &serving.f, &serving.w)?;
    Ok(ResultRow {
        method: run.method.tag(),
        kappa_db,
        horizon: run.method.horizon(),
        seed: run.seed,
        pair,
        inr_rx_db: to_db(metrics::inr_rx(ch, &serving.f, &serving.w)?),
        sinr_rx_db: to_db(metrics::sinr_rx(ch, &serving.f, &serving.w)?),
        r_tx: rates.r_tx,
        r_rx: rates.r_rx,
        r_sum: rates.r_sum,
    })
}

/// Evaluate every method run on the same `n_pairs` realizations.
pub fn evaluate_methods(
    scenario: &Scenario,
    runs: &[MethodRun],
    n_pairs: usize,
    sigma2: f64,
    eval_seed: u64,
) -> Result<Vec<ResultRow>> {
    let mut rows = Vec::with_capacity(runs.len() * n_pairs);
    for pair in 0..n_pairs {
        let ch = realization_for_pair(scenario, eval_seed, pair)?;
        for run in runs {
            let serving = serving_pair_for(run, &ch, sigma2, eval_seed, pair)?;
            rows.push(row_for(run, &ch, &serving, scenario.kappa_db, pair)?);
        }
    }
    Ok(rows)
}

fn load_checkpoint_for(
    config: &ExperimentConfig,
    dir: &Path,
    horizon: usize,
    kappa_db: f64,
    seed: u64,
) -> Result<Checkpoint> {
    let path = dir.join(checkpoint_filename(horizon, kappa_db, seed));
    if !path.exists() {
        return Err(Error::MissingCheckpoint {
            horizon,
            kappa_db,
            path: path.display().to_string(),
        });
    }
    let ckpt = learner::load_params(&path)?;
    if ckpt.config.n_tx != config.n_tx || ckpt.config.n_rx != config.n_rx {
        return Err(Error::Checkpoint(format!(
            "checkpoint {} was trained for {}x{} antennas, experiment uses {}x{}",
            path.display(),
            ckpt.config.n_tx,
            ckpt.config.n_rx,
            config.n_tx,
            config.n_rx
        )));
    }
    Ok(ckpt)
}

/// CDF experiment output: all rows plus per-method INR/SINR CDF curves.
pub struct CdfOutput {
    pub rows: Vec<ResultRow>,
    pub inr_cdfs: BTreeMap<String, Vec<(f64, f64)>>,
    pub sinr_cdfs: BTreeMap<String, Vec<(f64, f64)>>,
    pub files: Vec<PathBuf>,
}

/// Empirical CDFs of INR and SINR at the serving beams over the evaluation
/// pairs, for MRT+MRC, the random control, and the trained learner at each
/// configured horizon. Uses the first configured seed for probing methods.
pub fn run_cdf_experiment(
    config: &ExperimentConfig,
    checkpoint_dir: &Path,
    out_dir: &Path,
) -> Result<CdfOutput> {
    config.validate()?;
    let kappa = config.cdf_kappa_db;
    let scenario = config.scenario(kappa)?;
    let seed = config.seeds[0];

    let mut runs = vec![
        MethodRun {
            method: Method::MrtMrc,
            seed,
            checkpoint: None,
        },
        MethodRun {
            method: Method::Capacity,
            seed,
            checkpoint: None,
        },
    ];
    for &horizon in &config.horizons {
        runs.push(MethodRun {
            method: Method::Learner { horizon },
            seed,
            checkpoint: Some(load_checkpoint_for(
                config,
                checkpoint_dir,
                horizon,
                kappa,
                seed,
            )?),
        });
        runs.push(MethodRun {
            method: Method::RandomProbe { horizon },
            seed,
            checkpoint: None,
        });
    }

    let rows = evaluate_methods(
        &scenario,
        &runs,
        config.n_eval_pairs,
        config.sigma2,
        config.eval_seed,
    )?;

    let mut inr_cdfs = BTreeMap::new();
    let mut sinr_cdfs = BTreeMap::new();
    for run in &runs {
        let tag = run.method.tag();
        let inr: Vec<f64> = rows
            .iter()
            .filter(|r| r.method == tag)
            .map(|r| r.inr_rx_db)
            .collect();
        let sinr: Vec<f64> = rows
            .iter()
            .filter(|r| r.method == tag)
            .map(|r| r.sinr_rx_db)
            .collect();
        inr_cdfs.insert(tag.clone(), empirical_cdf(&inr));
        sinr_cdfs.insert(tag, empirical_cdf(&sinr));
    }

    std::fs::create_dir_all(out_dir)?;
    let rows_path = out_dir.join("cdf_rows.csv");
    emit_results(&rows, &rows_path)?;
    let inr_path = out_dir.join("inr_cdf.csv");
    write_cdf_csv(&inr_cdfs, "inr_rx_db", &inr_path)?;
    let sinr_path = out_dir.join("sinr_cdf.csv");
    write_cdf_csv(&sinr_cdfs, "sinr_rx_db", &sinr_path)?;
    let inr_svg = out_dir.join("inr_cdf.svg");
    plot::cdf_plot(&inr_cdfs, "Self-interference INR at serving beams", "INR (dB)", &inr_svg)?;
    let sinr_svg = out_dir.join("sinr_cdf.svg");
    plot::cdf_plot(&sinr_cdfs, "Uplink SINR at serving beams", "SINR (dB)", &sinr_svg)?;

    Ok(CdfOutput {
        rows,
        inr_cdfs,
        sinr_cdfs,
        files: vec![rows_path, inr_path, sinr_path, inr_svg, sinr_svg],
    })
}

fn write_cdf_csv(
    cdfs: &BTreeMap<String, Vec<(f64, f64)>>,
    value_name: &str,
    path: &Path,
) -> Result<()> {
    use std::io::Write;
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "method,{value_name},cdf")?;
    for (tag, curve) in cdfs {
        for (v, p) in curve {
            writeln!(out, "{tag},{v},{p}")?;
        }
    }
    Ok(())
}

/// One `(method, kappa)` sweep point: mean sum rate over pairs and seeds.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepPoint {
    pub method: String,
    pub kappa_db: f64,
    pub horizon: usize,
    pub mean_r_sum: f64,
}

pub struct KappaSweepOutput {
    pub points: Vec<SweepPoint>,
    pub rows: Vec<ResultRow>,
    pub files: Vec<PathBuf>,
}

/// Mean sum spectral efficiency per method across the configured Rician
/// factors: MRT+MRC, capacity, and the trained learner at each horizon
/// (averaged over the configured seeds).
pub fn run_kappa_sweep(
    config: &ExperimentConfig,
    checkpoint_dir: &Path,
    out_dir: &Path,
) -> Result<KappaSweepOutput> {
    config.validate()?;
    let mut all_rows = Vec::new();
    for &kappa in &config.kappa_db {
        let scenario = config.scenario(kappa)?;
        let mut runs = vec![
            MethodRun {
                method: Method::MrtMrc,
                seed: config.seeds[0],
                checkpoint: None,
            },
            MethodRun {
                method: Method::Capacity,
                seed: config.seeds[0],
                checkpoint: None,
            },
        ];
        for &horizon in &config.horizons {
            for &seed in &config.seeds {
                runs.push(MethodRun {
                    method: Method::Learner { horizon },
                    seed,
                    checkpoint: Some(load_checkpoint_for(
                        config,
                        checkpoint_dir,
                        horizon,
                        kappa,
                        seed,
                    )?),
                });
            }
        }
        all_rows.extend(evaluate_methods(
            &scenario,
            &runs,
            config.n_eval_pairs,
            config.sigma2,
            config.eval_seed,
        )?);
    }

    // Aggregate to one point per (method, kappa).
    let mut points = Vec::new();
    let mut tags: Vec<(String, usize)> = vec![("mrt_mrc".into(), 0), ("capacity".into(), 0)];
    for &h in &config.horizons {
        tags.push((format!("learner_{h}"), h));
    }
    for &kappa in &config.kappa_db {
        for (tag, horizon) in &tags {
            let vals: Vec<f64> = all_rows
                .iter()
                .filter(|r| &r.method == tag && r.kappa_db == kappa)
                .map(|r| r.r_sum)
                .collect();
            points.push(SweepPoint {
                method: tag.clone(),
                kappa_db: kappa,
                horizon: *horizon,
                mean_r_sum: vals.iter().sum::<f64>() / vals.len() as f64,
            });
        }
    }
    points.sort_by(|a, b| {
        (&a.method, a.kappa_db.to_bits()).cmp(&(&b.method, b.kappa_db.to_bits()))
    });

    std::fs::create_dir_all(out_dir)?;
    let rows_path = out_dir.join("sweep_rows.csv");
    emit_results(&all_rows, &rows_path)?;
    let means_path = out_dir.join("sweep_means.csv");
    {
        use std::io::Write;
        let mut out = std::io::BufWriter::new(std::fs::File::create(&means_path)?);
        writeln!(out, "method,kappa_db,T,mean_r_sum")?;
        for p in &points {
            writeln!(out, "{},{},{},{}", p.method, p.kappa_db, p.horizon, p.mean_r_sum)?;
        }
    }
    let svg_path = out_dir.join("sweep_means.svg");
    let mut series: BTreeMap<String, Vec<(f64, f64)>> = BTreeMap::new();
    for p in &points {
        series
            .entry(p.method.clone())
            .or_default()
            .push((p.kappa_db, p.mean_r_sum));
    }
    for curve in series.values_mut() {
        curve.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("finite kappas"));
    }
    plot::line_plot(
        &series,
        "Mean sum spectral efficiency vs Rician factor",
        "kappa (dB)",
        "mean r_sum (bps/Hz)",
        &svg_path,
    )?;

    Ok(KappaSweepOutput {
        points,
        rows: all_rows,
        files: vec![rows_path, means_path, svg_path],
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_config() -> ExperimentConfig {
        ExperimentConfig {
            n_eval_pairs: 8,
            kappa_db: vec![7.0],
            horizons: vec![2],
            ..ExperimentConfig::default()
        }
    }

    #[test]
    fn common_random_numbers_hold_across_methods_and_kappa() {
        let config = small_config();
        // Same pair index yields identical user channels for different
        // kappas, and identical SI draws for the same kappa.
        let s7 = config.scenario(7.0).unwrap();
        let s17 = config.scenario(17.0).unwrap();
        for pair in 0..4 {
            let a = realization_for_pair(&s7, config.eval_seed, pair).unwrap();
            let b = realization_for_pair(&s7, config.eval_seed, pair).unwrap();
            assert_eq!(a.h_tx, b.h_tx);
            assert_eq!(a.si, b.si);
            let c = realization_for_pair(&s17, config.eval_seed, pair).unwrap();
            assert_eq!(a.azimuth_tx_deg, c.azimuth_tx_deg);
            assert_eq!(a.azimuth_rx_deg, c.azimuth_rx_deg);
            assert_eq!(a.h_tx, c.h_tx);
            assert_ne!(a.si, c.si, "SI must be redrawn per kappa");
        }
        // Different pairs are different draws.
        let a = realization_for_pair(&s7, config.eval_seed, 0).unwrap();
        let b = realization_for_pair(&s7, config.eval_seed, 1).unwrap();
        assert_ne!(a.azimuth_tx_deg, b.azimuth_tx_deg);
    }

    #[test]
    fn baseline_rows_are_deterministic_and_capacity_bounded() {
        let config = small_config();
        let scenario = config.scenario(7.0).unwrap();
        let runs = vec![
            MethodRun {
                method: Method::MrtMrc,
                seed: 0,
                checkpoint: None,
            },
            MethodRun {
                method: Method::Capacity,
                seed: 0,
                checkpoint: None,
            },
            MethodRun {
                method: Method::RandomProbe { horizon: 3 },
                seed: 0,
                checkpoint: None,
            },
        ];
        let rows = evaluate_methods(&scenario, &runs, 8, 0.4, config.eval_seed).unwrap();
        let rows2 = evaluate_methods(&scenario, &runs, 8, 0.4, config.eval_seed).unwrap();
        assert_eq!(rows, rows2);
        assert_eq!(rows.len(), 24);
        let cap = 2.0 * (11.0f64).log2();
        for r in &rows {
            assert!(r.r_sum <= cap + 1e-9, "{} exceeded capacity", r.method);
            assert_eq!(r.r_sum, r.r_tx + r.r_rx);
        }
    }

    #[test]
    fn missing_checkpoint_names_the_point() {
        let config = small_config();
        let dir = tempfile::tempdir().unwrap();
        match run_cdf_experiment(&config, dir.path(), dir.path()) {
            Err(Error::MissingCheckpoint {
                horizon, kappa_db, ..
            }) => {
                assert_eq!(horizon, 2);
                assert_eq!(kappa_db, 7.0);
            }
            other => panic!("expected missing checkpoint, got {:?}", other.err()),
        }
    }
}
