//! Random and fixed channels: the aircraft-arrival model (a Rician line of
//! sight plus Rayleigh scatterers with an exponential power-delay profile)
//! and the small illustrative setups behind the pilot-response maps.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::dd_core::{ChannelPath, ChannelState, FrameParams};
use crate::error::{OtfsError, Result};

/// Parameters of the aircraft-arrival channel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AircraftScenarioConfig {
    pub paths: usize,
    pub rice_k_db: f64,
    /// Decay constant of the power-delay profile (s).
    pub tau_slope: f64,
    pub tau_max: f64,
    pub nu_max: f64,
    /// Rescale every draw to unit total power.
    pub normalize: bool,
}

impl Default for AircraftScenarioConfig {
    fn default() -> Self {
        Self { paths: 5, rice_k_db: 15.0, tau_slope: 1e-6, tau_max: 7e-6, nu_max: 1700.0, normalize: true }
    }
}

impl AircraftScenarioConfig {
    pub fn rice_k(&self) -> f64 {
        10f64.powf(self.rice_k_db / 10.0)
    }

    pub fn validate(&self, params: &FrameParams) -> Result<()> {
        let bad = |msg: String| Err(OtfsError::Config(msg));
        if self.paths == 0 {
            return bad("the scenario needs at least one path".into());
        }
        if !self.rice_k_db.is_finite() {
            return bad(format!("Rice factor must be finite, got {} dB", self.rice_k_db));
        }
        if !(self.tau_slope.is_finite() && self.tau_slope > 0.0) {
            return bad(format!("delay slope must be positive, got {}", self.tau_slope));
        }
        if !(self.tau_max >= 0.0 && self.tau_max < params.symbol_period()) {
            return bad(format!("tau_max {} s must lie in [0, T)", self.tau_max));
        }
        if self.tau_max > params.tau_max() * (1.0 + 1e-12) || self.nu_max > params.nu_max() * (1.0 + 1e-12) {
            return bad("scenario spreads exceed the frame's support bounds".into());
        }
        if !(self.nu_max.is_finite() && self.nu_max >= 0.0) {
            return bad(format!("nu_max must be non-negative, got {}", self.nu_max));
        }
        Ok(())
    }
}

/// Mean-square gains of the scattered paths: proportional to
/// `exp(-τ / τ_slope)` and summing to `1 / (K + 1)`.
pub fn scatter_weights(taus: &[f64], cfg: &AircraftScenarioConfig) -> Vec<f64> {
    let raw: Vec<f64> = taus.iter().map(|t| (-t / cfg.tau_slope).exp()).collect();
    let total: f64 = raw.iter().sum();
    let share = 1.0 / (cfg.rice_k() + 1.0);
    raw.iter().map(|w| share * w / total).collect()
}

/// Draws one aircraft-arrival channel. Path 0 is the line of sight at zero
/// delay and maximum Doppler; the others have uniform delays on `(0, τ_max]`
/// and Dopplers `ν_max cos θ` with uniform `θ`.
pub fn aircraft_channel<R: Rng + ?Sized>(cfg: &AircraftScenarioConfig, params: &FrameParams, rng: &mut R) -> Result<ChannelState> {
    cfg.validate(params)?;
    let k = cfg.rice_k();
    let los_phase = 2.0 * PI * rng.random::<f64>();
    let mut paths = vec![ChannelPath::new(
        Complex64::from_polar((k / (k + 1.0)).sqrt(), los_phase),
        0.0,
        cfg.nu_max,
    )];
    let mut taus = Vec::with_capacity(cfg.paths - 1);
    let mut nus = Vec::with_capacity(cfg.paths - 1);
    for _ in 1..cfg.paths {
        taus.push(cfg.tau_max * (1.0 - rng.random::<f64>()));
        let theta = 2.0 * PI * (1.0 - rng.random::<f64>());
        nus.push(cfg.nu_max * theta.cos());
    }
    let weights = scatter_weights(&taus, cfg);
    for ((tau, nu), w) in taus.into_iter().zip(nus).zip(weights) {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        let h = Complex64::new(re, im) * (w / 2.0).sqrt();
        paths.push(ChannelPath::new(h, tau, nu));
    }
    let channel = ChannelState::new(paths)?;
    if cfg.normalize {
        channel.normalized()
    } else {
        Ok(channel)
    }
}

/// Grid resolution of the two-path illustration.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Resolution {
    /// `M = N = 16`: both paths share a resolution cell.
    Coarse,
    /// `M = N = 64`: the paths fall in distinct cells.
    Fine,
}

/// Two fixed paths at 30 kHz spacing, 1.6 μs and 1.2 kHz apart, seen at
/// coarse or fine grid resolution.
pub fn two_path_demo(resolution: Resolution) -> Result<(FrameParams, ChannelState)> {
    let size = match resolution {
        Resolution::Coarse => 16,
        Resolution::Fine => 64,
    };
    let params = FrameParams::new(size, size, 30e3, 3e-6, 1700.0)?.with_pilot(size / 2, size / 2)?;
    let channel = ChannelState::new(vec![
        ChannelPath::new(Complex64::new(0.8, 0.0), 1.0e-6, 300.0),
        ChannelPath::new(Complex64::from_polar(0.6, 0.3 * PI), 2.6e-6, 1500.0),
    ])?
    .normalized()?;
    Ok((params, channel))
}

/// One unit-gain path at 1.3 delay bins and 1.7 Doppler bins, limited to the
/// frame's spread bounds.
pub fn single_path_demo(params: &FrameParams) -> Result<ChannelState> {
    let tau = (1.3 * params.delay_resolution()).min(params.tau_max());
    let nu = (1.7 * params.doppler_resolution()).min(params.nu_max());
    ChannelState::single(Complex64::new(1.0, 0.0), tau, nu)
}

/// Strict local maxima of `|map|` (circular 8-neighbourhood) reaching at least
/// `fraction` of the global maximum.
pub fn count_peaks(map: &crate::dd_core::DdVector, fraction: f64) -> usize {
    let (m, n) = (map.m(), map.n());
    let mag = |l: usize, k: usize| map[(l, k)].norm();
    let top = map.as_slice().iter().map(|v| v.norm()).fold(0.0, f64::max);
    if top == 0.0 {
        return 0;
    }
    let mut count = 0;
    for k in 0..n {
        for l in 0..m {
            let v = mag(l, k);
            if v < fraction * top {
                continue;
            }
            let mut is_peak = true;
            'scan: for dk in [n - 1, 0, 1] {
                for dl in [m - 1, 0, 1] {
                    if dk == 0 && dl == 0 {
                        continue;
                    }
                    let (ll, kk) = ((l + dl) % m, (k + dk) % n);
                    if (ll, kk) != (l, k) && mag(ll, kk) >= v {
                        is_peak = false;
                        break 'scan;
                    }
                }
            }
            if is_peak {
                count += 1;
            }
        }
    }
    count
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dd_channel::pilot_response;
    use crate::dd_core::DdVector;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn section_iv_frame() -> FrameParams {
        FrameParams::new(64, 32, 30e3, 7e-6, 1700.0).unwrap()
    }

    #[test]
    fn rice_factor_sets_los_power() {
        let cfg = AircraftScenarioConfig { normalize: false, ..Default::default() };
        let k = cfg.rice_k();
        assert!((k / (k + 1.0) - 0.969_347).abs() < 1e-6);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let ch = aircraft_channel(&cfg, &section_iv_frame(), &mut rng).unwrap();
        assert!((ch.paths()[0].h.norm_sqr() - k / (k + 1.0)).abs() < 1e-12);
        assert_eq!(ch.paths()[0].tau, 0.0);
        assert_eq!(ch.paths()[0].nu, 1700.0);
    }

    #[test]
    fn draws_respect_bounds_and_normalization() {
        let p = section_iv_frame();
        let cfg = AircraftScenarioConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..500 {
            let ch = aircraft_channel(&cfg, &p, &mut rng).unwrap();
            assert_eq!(ch.len(), 5);
            assert!((ch.total_power() - 1.0).abs() < 1e-12);
            assert!(ch.validate_for(&p).is_ok());
            for path in &ch.paths()[1..] {
                assert!(path.tau > 0.0 && path.tau <= 7e-6);
                assert!(path.nu.abs() <= 1700.0);
            }
        }
    }

    #[test]
    fn same_seed_same_channel() {
        let p = section_iv_frame();
        let cfg = AircraftScenarioConfig::default();
        let a = aircraft_channel(&cfg, &p, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let b = aircraft_channel(&cfg, &p, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn scatter_weights_follow_profile() {
        let cfg = AircraftScenarioConfig::default();
        let w = scatter_weights(&[0.0, 1e-6, 2e-6], &cfg);
        assert!((w.iter().sum::<f64>() - 1.0 / (cfg.rice_k() + 1.0)).abs() < 1e-15);
        assert!((w[1] / w[0] - (-1.0f64).exp()).abs() < 1e-12);
        assert!((w[2] / w[1] - (-1.0f64).exp()).abs() < 1e-12);
    }

    #[test]
    fn zero_spread_single_path_keeps_energy_in_pilot_cell() {
        let p = FrameParams::new(16, 16, 30e3, 0.0, 0.0).unwrap();
        let ch = single_path_demo(&p).unwrap();
        assert_eq!((ch.paths()[0].tau, ch.paths()[0].nu), (0.0, 0.0));
        let y = pilot_response(&ch, &p);
        let at_pilot = y[(p.pilot_delay_index(), p.pilot_doppler_index())].norm_sqr();
        assert!((at_pilot - y.energy()).abs() < 1e-12 * y.energy());
    }

    #[test]
    fn peak_counting() {
        let mut map = DdVector::zeros(8, 8);
        map[(2, 2)] = Complex64::new(1.0, 0.0);
        map[(3, 2)] = Complex64::new(0.9, 0.0);
        assert_eq!(count_peaks(&map, 0.5), 1);
        map[(6, 6)] = Complex64::new(0.0, 0.7);
        assert_eq!(count_peaks(&map, 0.5), 2);
        assert_eq!(count_peaks(&map, 0.8), 1);
        assert_eq!(count_peaks(&DdVector::zeros(4, 4), 0.5), 0);
    }
}
