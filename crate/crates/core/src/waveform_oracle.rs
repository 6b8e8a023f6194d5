//! Sampled OTFS transceiver: ISFFT, Heisenberg modulation with a rectangular
//! pulse, a continuous-parameter multipath channel, Wigner demodulation and
//! SFFT.
//!
//! Nothing here uses the closed-form kernels of [`crate::dd_channel`]; the
//! chain works on time samples at `Q M Δf` and serves as the reference the
//! closed form is checked against.

use std::f64::consts::PI;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rustfft::FftPlanner;

use crate::dd_core::{ChannelState, DdVector, FrameParams};
use crate::error::{OtfsError, Result};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Default oversampling factor of the oracle.
pub const DEFAULT_OVERSAMPLING: usize = 32;

/// `M x N` time-frequency grid, stored subcarrier-fastest (`n * M + m`).
#[derive(Debug, Clone, PartialEq)]
pub struct TfGrid {
    m: usize,
    n: usize,
    data: Vec<Complex64>,
}

impl TfGrid {
    pub fn new(m: usize, n: usize, data: Vec<Complex64>) -> Result<Self> {
        if data.len() != m * n {
            return Err(OtfsError::DimensionMismatch { expected: m * n, got: data.len() });
        }
        if data.iter().any(|v| !(v.re.is_finite() && v.im.is_finite())) {
            return Err(OtfsError::InvalidParams("time-frequency grid holds non-finite values".into()));
        }
        Ok(Self { m, n, data })
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn get(&self, m: usize, n: usize) -> Complex64 {
        self.data[n * self.m + m]
    }

    pub fn as_slice(&self) -> &[Complex64] {
        &self.data
    }

    pub fn energy(&self) -> f64 {
        self.data.iter().map(|v| v.norm_sqr()).sum()
    }
}

/// Complex baseband samples at `rate` Hz, with `cp_len` prefix samples ahead
/// of the `Q M N` frame body.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledWaveform {
    pub samples: Vec<Complex64>,
    pub rate: f64,
    pub cp_len: usize,
}

impl SampledWaveform {
    pub fn body(&self) -> &[Complex64] {
        &self.samples[self.cp_len..]
    }

    /// Energy of the frame body, `Σ |x|^2 / rate`.
    pub fn body_energy(&self) -> f64 {
        self.body().iter().map(|v| v.norm_sqr()).sum::<f64>() / self.rate
    }
}

/// White Gaussian noise added by [`apply_channel`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseSpec {
    /// One-sided noise power spectral density (W/Hz).
    pub n0: f64,
    pub seed: u64,
}

/// `X[m, n] = (1/MN) Σ_k Σ_l x[l, k] exp(-j2π(ml/M - nk/N))`.
pub fn isfft(x: &DdVector) -> TfGrid {
    let (m, n) = (x.m(), x.n());
    let mut planner = FftPlanner::new();
    let fwd_m = planner.plan_fft_forward(m);
    let inv_n = planner.plan_fft_inverse(n);
    let mut data = x.as_slice().to_vec();
    for col in data.chunks_exact_mut(m) {
        fwd_m.process(col);
    }
    transform_rows(&mut data, m, n, |row| inv_n.process(row));
    let scale = 1.0 / (m * n) as f64;
    data.iter_mut().for_each(|v| *v *= scale);
    TfGrid { m, n, data }
}

/// `x[l', k'] = Σ_m Σ_n Y[m, n] exp(j2π(ml'/M - nk'/N))`.
pub fn sfft(y: &TfGrid) -> DdVector {
    let (m, n) = (y.m, y.n);
    let mut planner = FftPlanner::new();
    let inv_m = planner.plan_fft_inverse(m);
    let fwd_n = planner.plan_fft_forward(n);
    let mut data = y.data.clone();
    for col in data.chunks_exact_mut(m) {
        inv_m.process(col);
    }
    transform_rows(&mut data, m, n, |row| fwd_n.process(row));
    DdVector::new(m, n, data).expect("grid dimensions are consistent")
}

fn transform_rows(data: &mut [Complex64], m: usize, n: usize, mut f: impl FnMut(&mut [Complex64])) {
    let mut row = vec![ZERO; n];
    for i in 0..m {
        for (j, r) in row.iter_mut().enumerate() {
            *r = data[j * m + i];
        }
        f(&mut row);
        for (j, r) in row.iter().enumerate() {
            data[j * m + i] = *r;
        }
    }
}

/// Cyclic prefix length covering `tau_max` at the oracle rate.
pub fn prefix_len(params: &FrameParams, q: usize) -> usize {
    let rate = sample_rate(params, q);
    (params.tau_max() * rate - 1e-9).ceil().max(0.0) as usize
}

fn sample_rate(params: &FrameParams, q: usize) -> f64 {
    (q * params.m()) as f64 * params.delta_f()
}

/// Samples `x(t) = Σ_m Σ_n X[m, n] g(t - nT) exp(j2πmΔf(t - nT))` at
/// `t = i / (Q M Δf)` with the unit-energy pulse `g = 1/sqrt(T)` on `[0, T)`,
/// and prepends the cyclic prefix.
pub fn heisenberg_rect(x: &TfGrid, q: usize, params: &FrameParams) -> Result<SampledWaveform> {
    if q == 0 {
        return Err(OtfsError::InvalidParams("oversampling factor must be at least 1".into()));
    }
    check_grid(x, params)?;
    let (m, n) = (x.m, x.n);
    let per_symbol = q * m;
    let inv = FftPlanner::new().plan_fft_inverse(per_symbol);
    let amp = params.delta_f().sqrt();
    let mut body = Vec::with_capacity(per_symbol * n);
    let mut block = vec![ZERO; per_symbol];
    for sym in 0..n {
        block.iter_mut().for_each(|v| *v = ZERO);
        block[..m].copy_from_slice(&x.data[sym * m..(sym + 1) * m]);
        inv.process(&mut block);
        body.extend(block.iter().map(|v| v * amp));
    }
    let cp_len = prefix_len(params, q);
    Ok(with_prefix(&body, cp_len, sample_rate(params, q)))
}

fn check_grid(x: &TfGrid, params: &FrameParams) -> Result<()> {
    if x.m != params.m() || x.n != params.n() {
        return Err(OtfsError::DimensionMismatch { expected: params.mn(), got: x.m * x.n });
    }
    Ok(())
}

fn with_prefix(body: &[Complex64], cp_len: usize, rate: f64) -> SampledWaveform {
    let len = body.len();
    let mut samples = Vec::with_capacity(len + cp_len);
    samples.extend((0..cp_len).map(|i| body[(len - cp_len % len + i) % len]));
    samples.extend_from_slice(body);
    SampledWaveform { samples, rate, cp_len }
}

/// Passes `w` through `y(t) = Σ h_i x(t - τ_i) exp(j2πν_i(t - τ_i)) + n(t)`.
///
/// Delays are applied as a DFT phase ramp on the periodic frame; time `t = 0`
/// is the first body sample. Noise, when requested, is circular Gaussian with
/// variance `N0 * rate` per sample.
pub fn apply_channel(w: &SampledWaveform, channel: &ChannelState, noise: Option<NoiseSpec>) -> Result<SampledWaveform> {
    let body = w.body();
    let len = body.len();
    if len == 0 {
        return Err(OtfsError::InvalidParams("waveform has an empty body".into()));
    }
    for path in channel.paths() {
        let delay_samples = path.tau * w.rate;
        if delay_samples > w.cp_len as f64 + 1e-9 {
            return Err(OtfsError::DelayExceedsPrefix { delay_samples, cp_len: w.cp_len });
        }
    }
    let mut planner = FftPlanner::new();
    let fwd = planner.plan_fft_forward(len);
    let inv = planner.plan_fft_inverse(len);
    let mut spectrum = body.to_vec();
    fwd.process(&mut spectrum);

    let total = len + w.cp_len;
    let mut out = vec![ZERO; total];
    let mut delayed = vec![ZERO; len];
    for path in channel.paths() {
        for (j, (d, s)) in delayed.iter_mut().zip(&spectrum).enumerate() {
            let bin = if 2 * j < len { j as f64 } else { j as f64 - len as f64 };
            let freq = bin * w.rate / len as f64;
            *d = s * Complex64::from_polar(1.0 / len as f64, -2.0 * PI * freq * path.tau);
        }
        inv.process(&mut delayed);
        for (i, y) in out.iter_mut().enumerate() {
            let offset = i as i64 - w.cp_len as i64;
            let t = offset as f64 / w.rate;
            let src = delayed[offset.rem_euclid(len as i64) as usize];
            *y += path.h * src * Complex64::from_polar(1.0, 2.0 * PI * path.nu * (t - path.tau));
        }
    }

    if let Some(ns) = noise {
        let mut rng = ChaCha8Rng::seed_from_u64(ns.seed);
        add_noise(&mut out, ns.n0 * w.rate, &mut rng);
    }
    Ok(SampledWaveform { samples: out, rate: w.rate, cp_len: w.cp_len })
}

/// Adds circular complex Gaussian noise of the given per-sample variance.
pub fn add_noise<R: Rng + ?Sized>(samples: &mut [Complex64], variance: f64, rng: &mut R) {
    let sigma = (variance / 2.0).sqrt();
    for v in samples {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        *v += Complex64::new(re, im) * sigma;
    }
}

/// Riemann-sum matched filter `Y[m, n] = ∫ g(t - nT) y(t) exp(-j2πmΔf t) dt`
/// over each symbol interval, with the prefix discarded.
pub fn wigner_rect(y: &SampledWaveform, params: &FrameParams, q: usize) -> Result<TfGrid> {
    let rate = sample_rate(params, q);
    if (y.rate - rate).abs() > 1e-9 * rate {
        return Err(OtfsError::InvalidParams(format!(
            "waveform rate {} Hz does not match Q M Δf = {} Hz",
            y.rate, rate
        )));
    }
    let (m, n) = (params.m(), params.n());
    let per_symbol = q * m;
    let body = y.body();
    if body.len() != per_symbol * n {
        return Err(OtfsError::DimensionMismatch { expected: per_symbol * n, got: body.len() });
    }
    let fwd = FftPlanner::new().plan_fft_forward(per_symbol);
    let scale = 1.0 / (params.symbol_period().sqrt() * rate);
    let mut data = Vec::with_capacity(m * n);
    let mut block = vec![ZERO; per_symbol];
    for sym in 0..n {
        block.copy_from_slice(&body[sym * per_symbol..(sym + 1) * per_symbol]);
        fwd.process(&mut block);
        data.extend(block[..m].iter().map(|v| v * scale));
    }
    Ok(TfGrid { m, n, data })
}

/// Full chain `isfft -> heisenberg -> channel -> wigner -> sfft`.
pub fn oracle_end_to_end(
    x: &DdVector,
    channel: &ChannelState,
    params: &FrameParams,
    q: usize,
    noise: Option<NoiseSpec>,
) -> Result<DdVector> {
    if x.m() != params.m() || x.n() != params.n() {
        return Err(OtfsError::DimensionMismatch { expected: params.mn(), got: x.len() });
    }
    let tx = heisenberg_rect(&isfft(x), q, params)?;
    let rx = apply_channel(&tx, channel, noise)?;
    Ok(sfft(&wigner_rect(&rx, params, q)?))
}

/// Writes samples as interleaved little-endian `f64` I/Q pairs.
pub fn write_iq_f64(path: impl AsRef<Path>, samples: &[Complex64]) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    for v in samples {
        out.write_all(&v.re.to_le_bytes())?;
        out.write_all(&v.im.to_le_bytes())?;
    }
    out.flush()?;
    Ok(())
}
