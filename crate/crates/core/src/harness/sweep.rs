//! Monte Carlo sweep runner and its CSV format.
//!
//! Trial `t` draws its channel from ChaCha8 stream `2t` and its noise from
//! stream `2t + 1`, both keyed by the base seed. Every axis value reuses the
//! same draws and every estimator sees the same received frame, so curves
//! differ only through the swept parameter. Trials may run on any number of
//! threads; results are folded in trial order.

use std::io::Write;
use std::path::Path;
use std::time::Instant;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{EstimatorKind, NoisePath, PointSettings, SweepConfig};
use super::metrics::{to_db, PathResponses};
use crate::dd_channel::pilot_response;
use crate::dd_core::{ChannelState, DdVector};
use crate::error::{OtfsError, Result};
use crate::estimators::{
    impulse_baseline, make_pilot_frame, ml_reference, mmle_estimate, tse_estimate, PathEstimates,
};
use crate::scenarios::aircraft_channel;
use crate::waveform_oracle::{add_noise, oracle_end_to_end, NoiseSpec};

/// Header line that precedes the embedded config.
pub const CONFIG_MARKER: &str = "# config:";

/// Description of the random number scheme written into every header.
pub const RNG_DESCRIPTION: &str =
    "ChaCha8 (rand_chacha), seeded from base seed; trial t uses stream 2t for the channel and 2t+1 for noise";

/// Environment variable capping the worker count.
pub const THREADS_ENV: &str = "OTFS_THREADS";

/// One CSV row: an estimator at one axis value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRecord {
    #[serde(rename = "axis")]
    pub axis_value: f64,
    pub estimator: EstimatorKind,
    /// Linear mean over successful trials, in dB.
    pub nmse_db: f64,
    #[serde(rename = "mean_iters")]
    pub mean_iterations: f64,
    #[serde(rename = "mean_hypotheses")]
    pub mean_hypothesis_evaluations: f64,
    pub wall_time_s: Option<f64>,
    pub trials: usize,
    pub seed: u64,
    /// Empty when every trial succeeded.
    pub error: String,
}

#[derive(Debug, Clone)]
struct TrialStats {
    nmse: f64,
    iterations: usize,
    hypotheses: u64,
    seconds: f64,
}

type TrialOutcome = Vec<std::result::Result<TrialStats, String>>;

fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Channel of trial `t`.
pub fn trial_channel(cfg: &SweepConfig, point: &PointSettings, trial: usize) -> Result<ChannelState> {
    aircraft_channel(&point.scenario, &point.params, &mut stream_rng(cfg.seed, 2 * trial as u64))
}

/// Received pilot frame of trial `t` for a given channel (`N0 = 1`).
pub fn trial_frame(cfg: &SweepConfig, point: &PointSettings, channel: &ChannelState, trial: usize) -> Result<DdVector> {
    let mut rng = stream_rng(cfg.seed, 2 * trial as u64 + 1);
    let params = &point.params;
    match cfg.noise_path {
        NoisePath::Fast => {
            let mut x = pilot_response(channel, params);
            add_noise(x.as_mut_slice(), params.mn() as f64, &mut rng);
            Ok(x)
        }
        NoisePath::Waveform => {
            let noise = NoiseSpec { n0: 1.0, seed: rng.next_u64() };
            oracle_end_to_end(&make_pilot_frame(params), channel, params, cfg.oversampling_q, Some(noise))
        }
    }
}

/// Runs one estimator on a received frame with the point's settings.
pub fn run_estimator(kind: EstimatorKind, received: &DdVector, point: &PointSettings) -> Result<PathEstimates> {
    match kind {
        EstimatorKind::Mmle => mmle_estimate(received, &point.estimator, &point.params),
        EstimatorKind::Tse => tse_estimate(received, &point.estimator, &point.params),
        EstimatorKind::Impulse => impulse_baseline(received, &point.params, &point.impulse),
        EstimatorKind::MlReference => {
            let paths = point.scenario.paths.min(2);
            ml_reference(received, &point.params, paths, &point.estimator.grid()?)
        }
    }
}

fn run_trial(cfg: &SweepConfig, point: &PointSettings, trial: usize) -> TrialOutcome {
    let setup = trial_channel(cfg, point, trial).and_then(|ch| {
        let x = trial_frame(cfg, point, &ch, trial)?;
        Ok((PathResponses::new(ch.paths(), &point.params), x))
    });
    let (truth, received) = match setup {
        Ok(v) => v,
        Err(e) => return cfg.estimators.iter().map(|_| Err(e.to_string())).collect(),
    };
    cfg.estimators
        .iter()
        .map(|&kind| {
            let start = Instant::now();
            let est = run_estimator(kind, &received, point).map_err(|e| e.to_string())?;
            let seconds = start.elapsed().as_secs_f64();
            let nmse = truth.nmse_against(&est.paths(), &point.params).map_err(|e| e.to_string())?;
            Ok(TrialStats { nmse, iterations: est.iterations_run, hypotheses: est.counters.hypothesis_evaluations, seconds })
        })
        .collect()
}

fn aggregate(cfg: &SweepConfig, axis_value: f64, index: usize, outcomes: &[TrialOutcome]) -> SweepRecord {
    let kind = cfg.estimators[index];
    let (mut nmse, mut iters, mut hyps, mut secs, mut ok) = (0.0, 0.0, 0.0, 0.0, 0usize);
    let mut failures = 0usize;
    let mut first_error = None;
    for outcome in outcomes {
        match &outcome[index] {
            Ok(s) => {
                nmse += s.nmse;
                iters += s.iterations as f64;
                hyps += s.hypotheses as f64;
                secs += s.seconds;
                ok += 1;
            }
            Err(e) => {
                failures += 1;
                first_error.get_or_insert_with(|| e.clone());
            }
        }
    }
    let denom = ok.max(1) as f64;
    let error = match first_error {
        Some(e) => format!("{failures} of {} trials failed; first: {e}", outcomes.len()),
        None => String::new(),
    };
    SweepRecord {
        axis_value,
        estimator: kind,
        nmse_db: if ok > 0 { to_db(nmse / denom) } else { f64::NAN },
        mean_iterations: iters / denom,
        mean_hypothesis_evaluations: hyps / denom,
        wall_time_s: cfg.record_timing.then_some(secs),
        trials: outcomes.len(),
        seed: cfg.seed,
        error,
    }
}

/// Worker cap from `OTFS_THREADS`, if set to a positive integer.
pub fn threads_from_env() -> Option<usize> {
    std::env::var(THREADS_ENV).ok()?.trim().parse().ok().filter(|&n| n > 0)
}

/// Runs the sweep on at most `threads` workers (all cores when `None`).
/// Writes the CSV when the config names an output path.
pub fn run_sweep_with_threads(cfg: &SweepConfig, threads: Option<usize>) -> Result<Vec<SweepRecord>> {
    cfg.validate()?;
    let points: Vec<(f64, PointSettings)> =
        cfg.axis_values.iter().map(|&v| cfg.point(v).map(|p| (v, p))).collect::<Result<_>>()?;
    let jobs: Vec<(usize, usize)> = (0..points.len()).flat_map(|i| (0..cfg.trials).map(move |t| (i, t))).collect();
    let work = || -> Vec<TrialOutcome> {
        jobs.par_iter().map(|&(i, t)| run_trial(cfg, &points[i].1, t)).collect()
    };
    let outcomes = match threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| OtfsError::Config(format!("thread pool: {e}")))?
            .install(work),
        None => work(),
    };
    let mut records = Vec::with_capacity(points.len() * cfg.estimators.len());
    for (i, (value, _)) in points.iter().enumerate() {
        let slice = &outcomes[i * cfg.trials..(i + 1) * cfg.trials];
        for e in 0..cfg.estimators.len() {
            records.push(aggregate(cfg, *value, e, slice));
        }
    }
    if let Some(path) = &cfg.output_path {
        write_sweep_csv(path, cfg, &records)?;
    }
    Ok(records)
}

/// Runs the sweep with the worker cap taken from `OTFS_THREADS`.
pub fn run_sweep(cfg: &SweepConfig) -> Result<Vec<SweepRecord>> {
    run_sweep_with_threads(cfg, threads_from_env())
}

/// Comment header: code version, RNG scheme and the full config.
pub fn csv_header(cfg: &SweepConfig) -> Result<String> {
    let mut out = format!("# otfs-core {} sweep\n# rng: {RNG_DESCRIPTION}\n{CONFIG_MARKER}\n", env!("CARGO_PKG_VERSION"));
    for line in cfg.to_toml()?.lines() {
        out.push_str("# ");
        out.push_str(line);
        out.push('\n');
    }
    Ok(out)
}

/// Column row and data rows.
pub fn csv_body(records: &[SweepRecord]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in records {
        w.serialize(r)?;
    }
    if records.is_empty() {
        w.write_record(["axis", "estimator", "nmse_db", "mean_iters", "mean_hypotheses", "wall_time_s", "trials", "seed", "error"])?;
    }
    let bytes = w.into_inner().map_err(|e| OtfsError::Io(e.into_error()))?;
    String::from_utf8(bytes).map_err(|e| OtfsError::Config(e.to_string()))
}

pub fn write_sweep_csv(path: impl AsRef<Path>, cfg: &SweepConfig, records: &[SweepRecord]) -> Result<()> {
    let mut file = std::io::BufWriter::new(std::fs::File::create(path)?);
    file.write_all(csv_header(cfg)?.as_bytes())?;
    file.write_all(csv_body(records)?.as_bytes())?;
    file.flush()?;
    Ok(())
}

/// Splits a result file into its embedded config, body text and records.
pub fn read_sweep_csv(path: impl AsRef<Path>) -> Result<(SweepConfig, String, Vec<SweepRecord>)> {
    let text = std::fs::read_to_string(path)?;
    let cfg = SweepConfig::from_csv_header(&text)?;
    let body: String = text.split_inclusive('\n').filter(|l| !l.starts_with('#')).collect();
    let mut reader = csv::Reader::from_reader(body.as_bytes());
    let records = reader.deserialize().collect::<std::result::Result<Vec<SweepRecord>, _>>()?;
    Ok((cfg, body, records))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::config::SweepAxis;

    fn small() -> SweepConfig {
        SweepConfig {
            m: 16,
            n: 8,
            tau_max_us: 4.0,
            nu_max_hz: 4000.0,
            paths: 2,
            trials: 3,
            seed: 5,
            axis_values: vec![10.0, 30.0],
            max_iterations: 4,
            ..Default::default()
        }
    }

    #[test]
    fn records_cover_grid_and_are_finite() {
        let cfg = small();
        let recs = run_sweep_with_threads(&cfg, Some(1)).unwrap();
        assert_eq!(recs.len(), 2 * 3);
        for r in &recs {
            assert!(r.nmse_db.is_finite(), "{r:?}");
            assert_eq!(r.trials, 3);
            assert!(r.error.is_empty());
            assert!(r.wall_time_s.is_none());
        }
        assert_eq!(recs[0].estimator, EstimatorKind::Mmle);
        assert_eq!(recs[3].axis_value, 30.0);
    }

    #[test]
    fn same_draws_across_axis_values() {
        let cfg = SweepConfig { sweep_axis: SweepAxis::NNu, axis_values: vec![1.0, 2.0], ..small() };
        let a = trial_channel(&cfg, &cfg.point(1.0).unwrap(), 2).unwrap();
        let b = trial_channel(&cfg, &cfg.point(2.0).unwrap(), 2).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, trial_channel(&cfg, &cfg.point(1.0).unwrap(), 3).unwrap());
    }

    #[test]
    fn zero_estimate_scores_zero_db() {
        // A threshold no tap can clear leaves the impulse baseline empty.
        let cfg = SweepConfig { estimators: vec![EstimatorKind::Impulse], impulse_threshold_sigma: 1e9, ..small() };
        for r in run_sweep_with_threads(&cfg, Some(1)).unwrap() {
            assert!(r.nmse_db.abs() < 1e-12, "{r:?}");
        }
    }

    #[test]
    fn failures_are_recorded() {
        let cfg = small();
        let point = cfg.point(10.0).unwrap();
        let outcomes: Vec<TrialOutcome> = vec![
            vec![Ok(TrialStats { nmse: 0.1, iterations: 2, hypotheses: 10, seconds: 0.0 })],
            vec![Err("boom".into())],
        ];
        let cfg1 = SweepConfig { estimators: vec![EstimatorKind::Mmle], ..cfg };
        let r = aggregate(&cfg1, 10.0, 0, &outcomes);
        assert_eq!(r.trials, 2);
        assert!((r.nmse_db + 10.0).abs() < 1e-12);
        assert!(r.error.contains("1 of 2") && r.error.contains("boom"));
        let _ = point;
    }

    #[test]
    fn csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("out.csv");
        let cfg = SweepConfig { output_path: Some(path.to_string_lossy().into_owned()), ..small() };
        let recs = run_sweep_with_threads(&cfg, Some(2)).unwrap();
        let (back, body, parsed) = read_sweep_csv(&path).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(parsed, recs);
        assert!(body.starts_with("axis,estimator,nmse_db,mean_iters,mean_hypotheses,wall_time_s,trials,seed,error\n"));
    }
}
