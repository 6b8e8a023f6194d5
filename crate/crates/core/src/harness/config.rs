//! Sweep description. Config files are flat `key = value` TOML; the same
//! text is embedded in every result CSV header so a run can be repeated from
//! its own output.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dd_core::FrameParams;
use crate::error::{OtfsError, Result};
use crate::estimators::{EstimatorConfig, ImpulseConfig, ScanRegion};
use crate::scenarios::AircraftScenarioConfig;

/// Estimators a sweep can run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorKind {
    Mmle,
    Tse,
    Impulse,
    MlReference,
}

impl EstimatorKind {
    pub fn name(self) -> &'static str {
        match self {
            Self::Mmle => "mmle",
            Self::Tse => "tse",
            Self::Impulse => "impulse",
            Self::MlReference => "ml_reference",
        }
    }
}

impl fmt::Display for EstimatorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for EstimatorKind {
    type Err = OtfsError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mmle" => Ok(Self::Mmle),
            "tse" => Ok(Self::Tse),
            "impulse" => Ok(Self::Impulse),
            "ml_reference" => Ok(Self::MlReference),
            other => Err(OtfsError::Config(format!("unknown estimator {other:?}"))),
        }
    }
}

/// Parameter varied along a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SweepAxis {
    #[serde(rename = "psnr")]
    Psnr,
    #[serde(rename = "N")]
    N,
    #[serde(rename = "m_tau")]
    MTau,
    #[serde(rename = "n_nu")]
    NNu,
    #[serde(rename = "epsilon")]
    Epsilon,
}

/// How the received pilot frame is produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NoisePath {
    /// Closed-form pilot response plus i.i.d. `CN(0, M N N0)` samples.
    Fast,
    /// Full sampled-waveform chain with time-domain noise.
    Waveform,
}

/// One Monte Carlo experiment. Units follow the key suffixes: `_hz`, `_us`,
/// `_db`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepConfig {
    pub m: usize,
    pub n: usize,
    pub delta_f_hz: f64,
    /// Support bounds of the frame and of the scenario.
    pub tau_max_us: f64,
    pub nu_max_hz: f64,
    /// Pilot position; the frame centre when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pilot_l: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pilot_k: Option<usize>,

    pub paths: usize,
    pub rice_k_db: f64,
    pub tau_slope_us: f64,
    pub normalize_per_draw: bool,
    #[serde(alias = "base_seed")]
    pub seed: u64,

    pub estimators: Vec<EstimatorKind>,
    pub sweep_axis: SweepAxis,
    pub axis_values: Vec<f64>,
    /// PSNR used when the sweep axis is something else.
    pub psnr_db: f64,
    pub trials: usize,

    pub m_tau: usize,
    pub n_nu: usize,
    pub epsilon: f64,
    pub max_iterations: usize,
    pub scan_region: ScanRegion,
    pub impulse_threshold_sigma: f64,

    pub noise_path: NoisePath,
    pub oversampling_q: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub output_path: Option<String>,
    /// Wall-clock columns make the CSV body machine dependent, so they are
    /// off unless asked for.
    pub record_timing: bool,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            m: 64,
            n: 32,
            delta_f_hz: 30e3,
            tau_max_us: 7.0,
            nu_max_hz: 1700.0,
            pilot_l: None,
            pilot_k: None,
            paths: 5,
            rice_k_db: 15.0,
            tau_slope_us: 1.0,
            normalize_per_draw: true,
            seed: 1,
            estimators: vec![EstimatorKind::Mmle, EstimatorKind::Tse, EstimatorKind::Impulse],
            sweep_axis: SweepAxis::Psnr,
            axis_values: vec![0.0, 5.0, 10.0, 15.0, 20.0, 25.0, 30.0],
            psnr_db: 20.0,
            trials: 200,
            m_tau: 6,
            n_nu: 6,
            epsilon: 1e-4,
            max_iterations: 15,
            scan_region: ScanRegion::Support,
            impulse_threshold_sigma: 3.0,
            noise_path: NoisePath::Fast,
            oversampling_q: crate::waveform_oracle::DEFAULT_OVERSAMPLING,
            output_path: None,
            record_timing: false,
        }
    }
}

/// Settings resolved for one axis value.
#[derive(Debug, Clone, PartialEq)]
pub struct PointSettings {
    pub params: FrameParams,
    pub psnr_db: f64,
    pub estimator: EstimatorConfig,
    pub impulse: ImpulseConfig,
    pub scenario: AircraftScenarioConfig,
}

fn integer_value(axis: &str, v: f64) -> Result<usize> {
    if v.is_finite() && v >= 1.0 && v.fract() == 0.0 && v <= u32::MAX as f64 {
        Ok(v as usize)
    } else {
        Err(OtfsError::Config(format!("{axis} values must be positive integers, got {v}")))
    }
}

impl SweepConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| OtfsError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| OtfsError::Config(e.to_string()))
    }

    /// Recovers the config embedded in a result CSV's comment header.
    pub fn from_csv_header(text: &str) -> Result<Self> {
        let mut lines = text.lines().take_while(|l| l.starts_with('#'));
        if !lines.any(|l| l.trim_end() == super::sweep::CONFIG_MARKER) {
            return Err(OtfsError::Config("no embedded config in CSV header".into()));
        }
        let body: Vec<&str> = lines.map(|l| l.strip_prefix("# ").unwrap_or(l.trim_start_matches('#'))).collect();
        Self::from_toml_str(&body.join("\n"))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(OtfsError::Config(msg));
        if self.trials == 0 {
            return bad("trials must be at least 1".into());
        }
        if self.axis_values.is_empty() {
            return bad("axis_values must not be empty".into());
        }
        if self.estimators.is_empty() {
            return bad("at least one estimator is required".into());
        }
        if self.oversampling_q == 0 {
            return bad("oversampling_q must be at least 1".into());
        }
        if !(self.impulse_threshold_sigma.is_finite() && self.impulse_threshold_sigma >= 0.0) {
            return bad("impulse_threshold_sigma must be non-negative".into());
        }
        for &v in &self.axis_values {
            self.point(v)?;
        }
        Ok(())
    }

    /// Frame, estimator and scenario settings at one axis value.
    pub fn point(&self, axis_value: f64) -> Result<PointSettings> {
        let mut n = self.n;
        let mut psnr_db = self.psnr_db;
        let mut estimator = EstimatorConfig {
            m_tau: self.m_tau,
            n_nu: self.n_nu,
            epsilon: self.epsilon,
            max_iterations: self.max_iterations,
            scan: self.scan_region,
            ..Default::default()
        };
        match self.sweep_axis {
            SweepAxis::Psnr => psnr_db = axis_value,
            SweepAxis::N => n = integer_value("N", axis_value)?,
            SweepAxis::MTau => estimator.m_tau = integer_value("m_tau", axis_value)?,
            SweepAxis::NNu => estimator.n_nu = integer_value("n_nu", axis_value)?,
            SweepAxis::Epsilon => estimator.epsilon = axis_value,
        }
        estimator.validate()?;
        let base = FrameParams::new(self.m, n, self.delta_f_hz, self.tau_max_us * 1e-6, self.nu_max_hz)?;
        let base = base.with_pilot(self.pilot_l.unwrap_or(self.m / 2), self.pilot_k.unwrap_or(n / 2))?;
        let energy = super::metrics::psnr_to_pilot_energy(psnr_db, &base, 1.0)?;
        let params = base.with_pilot_energy(energy)?;
        let scenario = AircraftScenarioConfig {
            paths: self.paths,
            rice_k_db: self.rice_k_db,
            tau_slope: self.tau_slope_us * 1e-6,
            tau_max: self.tau_max_us * 1e-6,
            nu_max: self.nu_max_hz,
            normalize: self.normalize_per_draw,
        };
        scenario.validate(&params)?;
        if self.estimators.contains(&EstimatorKind::MlReference) && params.mn() > crate::estimators::ml_reference::MAX_FRAME {
            return Err(OtfsError::Config(format!(
                "ml_reference needs M N <= {}, got {}",
                crate::estimators::ml_reference::MAX_FRAME,
                params.mn()
            )));
        }
        let impulse = ImpulseConfig { threshold_sigma: self.impulse_threshold_sigma, n0: 1.0 };
        Ok(PointSettings { params, psnr_db, estimator, impulse, scenario })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate_and_round_trip() {
        let cfg = SweepConfig::default();
        cfg.validate().unwrap();
        let text = cfg.to_toml().unwrap();
        assert_eq!(SweepConfig::from_toml_str(&text).unwrap(), cfg);
    }

    #[test]
    fn partial_file_fills_defaults() {
        let cfg = SweepConfig::from_toml_str("m = 16\nn = 8\nbase_seed = 7\nestimators = [\"tse\"]\n").unwrap();
        assert_eq!((cfg.m, cfg.n, cfg.seed), (16, 8, 7));
        assert_eq!(cfg.estimators, vec![EstimatorKind::Tse]);
        assert_eq!(cfg.trials, 200);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(SweepConfig::from_toml_str("bogus = 1").is_err());
        assert!(SweepConfig::from_toml_str("trials = 0").is_err());
        assert!(SweepConfig::from_toml_str("axis_values = []").is_err());
        assert!(SweepConfig::from_toml_str("estimators = [\"ls\"]").is_err());
        assert!(SweepConfig::from_toml_str("sweep_axis = \"N\"\naxis_values = [8.5]").is_err());
        assert!(SweepConfig::from_toml_str("estimators = [\"ml_reference\"]").is_err());
        // scenario spreads beyond the frame's support bounds
        assert!(SweepConfig::from_toml_str("tau_max_us = 40.0").is_err());
    }

    #[test]
    fn axis_values_override_settings() {
        let cfg = SweepConfig::from_toml_str("sweep_axis = \"N\"\naxis_values = [16.0, 64.0]").unwrap();
        let pt = cfg.point(16.0).unwrap();
        assert_eq!(pt.params.n(), 16);
        assert_eq!(pt.params.pilot_doppler_index(), 8);
        // E_p = 10^2 M N at the default 20 dB
        assert!((pt.params.pilot_energy() - 100.0 * 64.0 * 16.0).abs() < 1e-6);

        let cfg = SweepConfig { sweep_axis: SweepAxis::Epsilon, axis_values: vec![1e-3], ..Default::default() };
        assert_eq!(cfg.point(1e-3).unwrap().estimator.epsilon, 1e-3);
        let cfg = SweepConfig { sweep_axis: SweepAxis::NNu, axis_values: vec![4.0], ..Default::default() };
        assert_eq!(cfg.point(4.0).unwrap().estimator.n_nu, 4);
    }

    #[test]
    fn header_parsing() {
        let cfg = SweepConfig { trials: 3, seed: 42, ..Default::default() };
        let mut header = String::from("# otfs sweep\n");
        header.push_str(super::super::sweep::CONFIG_MARKER);
        header.push('\n');
        for line in cfg.to_toml().unwrap().lines() {
            header.push_str(&format!("# {line}\n"));
        }
        header.push_str("axis,estimator\n");
        assert_eq!(SweepConfig::from_csv_header(&header).unwrap(), cfg);
        assert!(SweepConfig::from_csv_header("# nothing\naxis\n").is_err());
    }
}
