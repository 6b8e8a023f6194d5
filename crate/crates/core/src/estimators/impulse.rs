//! Threshold baseline: every support-region sample that clears a noise
//! threshold becomes an integer-delay, integer-Doppler pseudo-path.

use num_complex::Complex64;

use super::{PathEstimates, Termination};
use crate::dd_channel::a_column;
use crate::dd_core::{support_region, DdVector, FrameParams};
use crate::error::{OtfsError, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImpulseConfig {
    /// Keep taps whose magnitude exceeds this many noise standard deviations.
    pub threshold_sigma: f64,
    /// Noise spectral density; the delay-Doppler noise variance is `M N N0`.
    pub n0: f64,
}

impl Default for ImpulseConfig {
    fn default() -> Self {
        Self { threshold_sigma: 3.0, n0: 1.0 }
    }
}

/// Reads the pilot response on the support region and keeps the taps above
/// `threshold_sigma * sqrt(M N N0)`, strongest first.
pub fn impulse_baseline(received: &DdVector, params: &FrameParams, config: &ImpulseConfig) -> Result<PathEstimates> {
    if received.m() != params.m() || received.n() != params.n() {
        return Err(OtfsError::DimensionMismatch { expected: params.mn(), got: received.len() });
    }
    if !(config.threshold_sigma.is_finite() && config.threshold_sigma >= 0.0 && config.n0.is_finite() && config.n0 >= 0.0) {
        return Err(OtfsError::InvalidParams("impulse threshold and noise level must be non-negative".into()));
    }
    let amplitude = params.pilot_amplitude();
    let sigma = (params.mn() as f64 * config.n0).sqrt();
    let cut = config.threshold_sigma * sigma;
    let region = support_region(params);

    let mut taps: Vec<(usize, usize, Complex64)> = region
        .cells()
        .map(|(l, k)| (l, k, received[(l, k)]))
        .filter(|(_, _, v)| v.norm() > cut)
        .collect();
    // Stable sort keeps region order among equal magnitudes.
    taps.sort_by(|a, b| b.2.norm_sqr().total_cmp(&a.2.norm_sqr()));

    let norm = params.mn() as f64 * params.pilot_energy();
    let norm = if norm > 0.0 { norm } else { 1.0 };
    let mut out = PathEstimates::empty();
    out.counters.scan_elements = region.len() as u64;
    let mut energy = received.energy();
    out.residual_energies.push(energy / norm);
    for (l, k, v) in taps {
        let (dl, dk) = params.cell_offset(l, k);
        let tau = dl as f64 * params.delay_resolution();
        let nu = dk as f64 * params.doppler_resolution();
        // The closed-form response of a unit integer path at its own cell
        // carries the pilot-position phase.
        let unit = a_column(tau, nu, params).a[(l, k)];
        let gain = if amplitude > 0.0 && unit.norm() > 0.0 { v / unit } else { Complex64::new(0.0, 0.0) };
        out.h_hat.push(gain);
        out.tau_hat.push(tau);
        out.nu_hat.push(nu);
        energy = (energy - v.norm_sqr()).max(0.0);
        out.residual_energies.push(energy / norm);
        out.iterations_run += 1;
    }
    out.terminated_by = Termination::Exhausted;
    Ok(out)
}
