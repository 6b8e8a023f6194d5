use otfs_core::harness::{read_sweep_csv, run_sweep_with_threads, EstimatorKind, NoisePath, SweepAxis, SweepConfig};

fn small(toml_extra: &str) -> SweepConfig {
    let text = format!(
        "m = 16\nn = 8\ntau_max_us = 4.0\nnu_max_hz = 5000.0\npaths = 3\ntrials = 6\nseed = 99\n\
         m_tau = 2\nn_nu = 2\nmax_iterations = 4\naxis_values = [5.0, 25.0]\n{toml_extra}"
    );
    SweepConfig::from_toml_str(&text).unwrap()
}

#[test]
fn csv_round_trips_config_and_records() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("sweep.csv");
    let cfg = SweepConfig { output_path: Some(path.to_string_lossy().into_owned()), ..small("") };
    let records = run_sweep_with_threads(&cfg, Some(1)).unwrap();
    assert_eq!(records.len(), 2 * 3);
    let (back, body, read) = read_sweep_csv(&path).unwrap();
    assert_eq!(back, cfg);
    assert_eq!(read, records);
    assert!(body.starts_with("axis,estimator,nmse_db"));
    assert!(records.iter().all(|r| r.error.is_empty() && r.trials == 6 && r.nmse_db.is_finite()));
}

#[test]
fn results_do_not_depend_on_worker_count() {
    let cfg = small("estimators = [\"mmle\", \"tse\"]\n");
    let one = run_sweep_with_threads(&cfg, Some(1)).unwrap();
    let three = run_sweep_with_threads(&cfg, Some(3)).unwrap();
    assert_eq!(one, three);
}

#[test]
fn higher_psnr_lowers_mmle_error() {
    let cfg = SweepConfig { trials: 20, axis_values: vec![0.0, 30.0], ..small("estimators = [\"mmle\"]\n") };
    let r = run_sweep_with_threads(&cfg, None).unwrap();
    assert!(r[1].nmse_db < r[0].nmse_db - 5.0, "{r:?}");
}

#[test]
fn waveform_noise_path_runs() {
    let cfg = SweepConfig { trials: 2, ..small("estimators = [\"mmle\"]\nnoise_path = \"waveform\"\noversampling_q = 4\n") };
    assert_eq!(cfg.noise_path, NoisePath::Waveform);
    let r = run_sweep_with_threads(&cfg, Some(1)).unwrap();
    assert!(r.iter().all(|x| x.error.is_empty() && x.nmse_db.is_finite()), "{r:?}");
}

#[test]
fn config_rejects_bad_input() {
    assert!(SweepConfig::from_toml_str("bogus_key = 1\n").is_err());
    assert!(SweepConfig::from_toml_str("trials = 0\n").is_err());
    assert!(SweepConfig::from_toml_str("sweep_axis = \"n_nu\"\naxis_values = [1.5]\n").is_err());
    // The joint search is limited to small frames.
    assert!(SweepConfig::from_toml_str("estimators = [\"ml_reference\"]\n").is_err());
    let cfg = SweepConfig::from_toml_str("base_seed = 5\nsweep_axis = \"N\"\naxis_values = [8.0, 16.0]\n").unwrap();
    assert_eq!((cfg.seed, cfg.sweep_axis), (5, SweepAxis::N));
    assert_eq!(cfg.point(16.0).unwrap().params.n(), 16);
    assert_eq!(SweepConfig::default().estimators, vec![EstimatorKind::Mmle, EstimatorKind::Tse, EstimatorKind::Impulse]);
}
