//! Pilot SNR bookkeeping and channel-matrix NMSE.
//!
//! [`PathResponses`] evaluates `‖Σ_i h_i B(τ_i, ν_i)‖_F^2` without forming any
//! `MN x MN` matrix. Per path it keeps the Doppler kernel by offset and both
//! pulse-segment delay responses for every input delay. The Frobenius norm
//! then reduces to pairwise delay-domain inner products times pairwise
//! Dirichlet correlations.

use num_complex::Complex64;

use crate::dd_channel::{DelayPlan, EffectiveChannelMatrix, PathKernel};
use crate::dd_core::{ChannelPath, FrameParams};
use crate::error::{OtfsError, Result};

/// `E_p = 10^(PSNR/10) M N N0`.
pub fn psnr_to_pilot_energy(psnr_db: f64, params: &FrameParams, n0: f64) -> Result<f64> {
    if !(n0.is_finite() && n0 > 0.0) {
        return Err(OtfsError::InvalidParams(format!("noise density must be positive, got {n0}")));
    }
    if !psnr_db.is_finite() {
        return Err(OtfsError::InvalidParams(format!("PSNR must be finite, got {psnr_db}")));
    }
    Ok(10f64.powf(psnr_db / 10.0) * params.mn() as f64 * n0)
}

/// `‖G - Ĝ‖_F^2 / ‖G‖_F^2`.
pub fn nmse(g: &EffectiveChannelMatrix, g_hat: &EffectiveChannelMatrix) -> Result<f64> {
    let reference = g.frobenius_norm_sq();
    if reference == 0.0 {
        return Err(OtfsError::ZeroReference);
    }
    Ok(g.distance_sq(g_hat)? / reference)
}

/// Linear NMSE in dB.
pub fn to_db(linear: f64) -> f64 {
    10.0 * linear.log10()
}

struct Terms {
    weight: Complex64,
    doppler: Vec<Complex64>,
    // l-major: entry l * M + l'
    g1: Vec<Complex64>,
    g2: Vec<Complex64>,
}

/// Cached kernels of a set of paths for fast Frobenius-norm evaluation.
pub struct PathResponses {
    m: usize,
    n: usize,
    terms: Vec<Terms>,
}

impl PathResponses {
    pub fn new(paths: &[ChannelPath], params: &FrameParams) -> Self {
        let plan = DelayPlan::new(params.m());
        Self::with_plan(paths, params, &plan)
    }

    pub fn with_plan(paths: &[ChannelPath], params: &FrameParams, plan: &DelayPlan) -> Self {
        let terms = paths
            .iter()
            .map(|p| {
                let kernel = PathKernel::from_path(p, params);
                let mut g1 = Vec::with_capacity(params.m() * params.m());
                let mut g2 = Vec::with_capacity(params.m() * params.m());
                for (a, b) in kernel.delay_responses_all(plan) {
                    g1.extend(a);
                    g2.extend(b);
                }
                Terms { weight: p.h * kernel.prefactor(), doppler: kernel.doppler_offsets(), g1, g2 }
            })
            .collect();
        Self { m: params.m(), n: params.n(), terms }
    }

    fn pair(&self, a: &Terms, b: &Terms, s: Complex64) -> Complex64 {
        let dop: Complex64 = a.doppler.iter().zip(&b.doppler).map(|(x, y)| x.conj() * y).sum();
        let dot = |x: &[Complex64], y: &[Complex64]| -> Complex64 { x.iter().zip(y).map(|(u, v)| u.conj() * v).sum() };
        let nf = self.n as f64;
        let a11 = dot(&a.g1, &b.g1);
        let a22 = dot(&a.g2, &b.g2);
        let a12 = dot(&a.g1, &b.g2);
        let a21 = dot(&a.g2, &b.g1);
        a.weight.conj() * b.weight * dop * (a11 * nf + a22 * nf + a12 * s + a21 * s.conj())
    }

    fn segment_sum(&self) -> Complex64 {
        (0..self.n)
            .map(|k| Complex64::from_polar(1.0, -2.0 * std::f64::consts::PI * k as f64 / self.n as f64))
            .sum()
    }

    /// `‖Σ_i h_i B(τ_i, ν_i)‖_F^2`.
    pub fn frobenius_norm_sq(&self) -> f64 {
        self.combined_norm_sq(&[])
    }

    fn combined_norm_sq(&self, other: &[Terms]) -> f64 {
        let s = self.segment_sum();
        let all: Vec<&Terms> = self.terms.iter().chain(other.iter()).collect();
        let mut total = 0.0;
        for (i, a) in all.iter().enumerate() {
            total += self.pair(a, a, s).re;
            for b in &all[i + 1..] {
                total += 2.0 * self.pair(a, b, s).re;
            }
        }
        total.max(0.0)
    }

    /// `‖G - Ĝ‖_F^2 / ‖G‖_F^2` with `G` built from these paths and `Ĝ` from
    /// `estimate`.
    pub fn nmse_against(&self, estimate: &[ChannelPath], params: &FrameParams) -> Result<f64> {
        if params.m() != self.m || params.n() != self.n {
            return Err(OtfsError::DimensionMismatch { expected: self.m * self.n, got: params.mn() });
        }
        let reference = self.frobenius_norm_sq();
        if reference == 0.0 {
            return Err(OtfsError::ZeroReference);
        }
        let negated: Vec<ChannelPath> = estimate.iter().map(|p| ChannelPath::new(-p.h, p.tau, p.nu)).collect();
        let other = PathResponses::new(&negated, params);
        Ok(self.combined_norm_sq(&other.terms) / reference)
    }
}

/// NMSE between the matrices of two path lists, without forming them.
pub fn nmse_paths(truth: &[ChannelPath], estimate: &[ChannelPath], params: &FrameParams) -> Result<f64> {
    PathResponses::new(truth, params).nmse_against(estimate, params)
}
