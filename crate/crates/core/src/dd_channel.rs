//! Closed-form effective delay-Doppler channel for rectangular transmit and
//! receive pulses.
//!
//! For a path `(h, τ, ν)` the gain from input element `(l, k)` to output
//! element `(l', k')` factors into a Doppler term `D_N((k'-k)/N - ν/Δf)` and
//! a delay term `g_{l,k}[l']`. The delay term is evaluated from two sinc
//! tables (one per pulse overlap segment) shared by every `m`, so a full delay
//! response costs `O(M^2)` instead of the `O(M^3)` of the literal triple sum.

use std::f64::consts::PI;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::dd_core::{support_region, ChannelPath, ChannelState, DdVector, FrameParams, SupportRegion};
use crate::error::{OtfsError, Result};

/// Largest `MN` for which a dense `MN x MN` matrix is built by default.
pub const DEFAULT_DENSE_CAP: usize = 4096;

/// Relative magnitude below which sparse storage drops entries by default.
pub const DEFAULT_SPARSE_THRESHOLD: f64 = 1e-6;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Normalized sinc, `sin(πx) / (πx)` with `sinc(0) = 1`.
pub fn sinc(x: f64) -> f64 {
    if x == 0.0 {
        1.0
    } else {
        (PI * x).sin() / (PI * x)
    }
}

/// Dirichlet kernel `D_N(x) = (1/N) Σ_{n<N} exp(-j2πnx)`.
pub fn doppler_kernel(x: f64, n: usize) -> Complex64 {
    let nf = n as f64;
    // D_N has period one, so only the distance to the nearest integer matters.
    let d = x - x.round();
    let phase = Complex64::from_polar(1.0, -PI * (nf - 1.0) * d);
    let den = (PI * d).sin();
    if den.abs() < 1e-9 {
        let t = PI * d;
        phase * (1.0 - (nf * nf - 1.0) * t * t / 6.0)
    } else {
        phase * ((PI * nf * d).sin() / (nf * den))
    }
}

/// Literal `N`-term sum of the Dirichlet kernel.
pub fn doppler_kernel_sum(x: f64, n: usize) -> Complex64 {
    let s: Complex64 = (0..n)
        .map(|i| Complex64::from_polar(1.0, -2.0 * PI * i as f64 * x))
        .sum();
    s / n as f64
}

fn segment_terms(frac: f64, x: f64, p: i64) -> (Complex64, Complex64) {
    let arg = x - p as f64;
    let first = Complex64::from_polar(1.0, PI * (1.0 + frac) * arg) * ((1.0 - frac) * sinc((1.0 - frac) * arg));
    let second = Complex64::from_polar(1.0, PI * frac * arg) * (frac * sinc(frac * arg));
    (first, second)
}

/// The delay-domain kernel `f_{τ,ν,k,l'}(m)` evaluated by its literal sum over
/// `p ∈ [-m, M-1-m]`.
pub fn f_kernel(tau: f64, nu: f64, k: usize, l_prime: usize, m: usize, params: &FrameParams) -> Complex64 {
    let mm = params.m() as i64;
    let t = params.symbol_period();
    let frac = tau / t;
    let x = nu * t;
    let phi = Complex64::from_polar(1.0, -2.0 * PI * k as f64 / params.n() as f64);
    let mut acc = ZERO;
    for p in -(m as i64)..=(mm - 1 - m as i64) {
        let (first, second) = segment_terms(frac, x, p);
        let tw = Complex64::from_polar(1.0, 2.0 * PI * (p * l_prime as i64) as f64 / mm as f64);
        acc += tw * (first + phi * second);
    }
    acc
}

/// `ĥ[l', k', l, k]` summed over the paths of `channel`, term by term.
///
/// This is the reference evaluation; [`PathKernel`] computes the same values
/// in bulk.
pub fn effective_gain(
    l_prime: usize,
    k_prime: usize,
    l: usize,
    k: usize,
    channel: &ChannelState,
    params: &FrameParams,
) -> Result<Complex64> {
    check_index(l_prime, k_prime, params)?;
    check_index(l, k, params)?;
    let (mm, n) = (params.m(), params.n());
    let mut total = ZERO;
    for path in channel.paths() {
        let x = path.nu * params.symbol_period();
        let frac = path.tau * params.delta_f();
        let prefactor = Complex64::from_polar(1.0, -2.0 * PI * x * frac);
        let doppler = doppler_kernel((k_prime as f64 - k as f64) / n as f64 - x, n);
        let mut delay = ZERO;
        for m in 0..mm {
            let arg = l_prime as f64 - l as f64 - mm as f64 * frac;
            let tw = Complex64::from_polar(1.0, 2.0 * PI * m as f64 * arg / mm as f64);
            delay += tw * f_kernel(path.tau, path.nu, k, l_prime, m, params);
        }
        total += path.h * prefactor * doppler * delay / mm as f64;
    }
    Ok(total)
}

fn check_index(l: usize, k: usize, params: &FrameParams) -> Result<()> {
    if l >= params.m() || k >= params.n() {
        return Err(OtfsError::IndexOutOfRange { l, k, m: params.m(), n: params.n() });
    }
    Ok(())
}

/// Element `b_{q,i,l',k'}` of the unit-gain path response, with the 1-based
/// column index `q = kM + l + 1`.
pub fn b_element(q: usize, path: &ChannelPath, l_prime: usize, k_prime: usize, params: &FrameParams) -> Result<Complex64> {
    let mn = params.mn();
    if q == 0 || q > mn {
        return Err(OtfsError::InvalidParams(format!("column index {q} outside 1..={mn}")));
    }
    let l = (q - 1) % params.m();
    let k = (q - 1) / params.m();
    let unit = ChannelState::single(Complex64::new(1.0, 0.0), path.tau, path.nu)?;
    effective_gain(l_prime, k_prime, l, k, &unit, params)
}

/// Precomputed kernels of one `(τ, ν)` hypothesis.
#[derive(Debug, Clone)]
pub struct PathKernel {
    m: usize,
    n: usize,
    tau: f64,
    nu: f64,
    x: f64,
    prefactor: Complex64,
    // F terms of the two pulse-overlap segments, p = -(M-1)..=(M-1).
    f1: Vec<Complex64>,
    f2: Vec<Complex64>,
    // exp(-j2π m τ Δf), m = 0..M
    ramp: Vec<Complex64>,
    // exp(j2π r / M), r = 0..M
    twiddle: Vec<Complex64>,
}

impl PathKernel {
    pub fn new(tau: f64, nu: f64, params: &FrameParams) -> Self {
        let (m, n) = (params.m(), params.n());
        let frac = tau * params.delta_f();
        let x = nu * params.symbol_period();
        let span = 2 * m - 1;
        let mut f1 = Vec::with_capacity(span);
        let mut f2 = Vec::with_capacity(span);
        for p in -(m as i64 - 1)..=(m as i64 - 1) {
            let (a, b) = segment_terms(frac, x, p);
            f1.push(a);
            f2.push(b);
        }
        let ramp = (0..m)
            .map(|i| Complex64::from_polar(1.0, -2.0 * PI * i as f64 * frac))
            .collect();
        let twiddle = (0..m)
            .map(|r| Complex64::from_polar(1.0, 2.0 * PI * r as f64 / m as f64))
            .collect();
        Self {
            m,
            n,
            tau,
            nu,
            x,
            prefactor: Complex64::from_polar(1.0, -2.0 * PI * x * frac),
            f1,
            f2,
            ramp,
            twiddle,
        }
    }

    pub fn from_path(path: &ChannelPath, params: &FrameParams) -> Self {
        Self::new(path.tau, path.nu, params)
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn nu(&self) -> f64 {
        self.nu
    }

    /// Unit-modulus factor `exp(-j2π (ν/Δf)(τ/T))`.
    pub fn prefactor(&self) -> Complex64 {
        self.prefactor
    }

    /// Doppler phase `exp(-j2πk/N)` weighting the second pulse segment.
    pub fn segment_phase(&self, k: usize) -> Complex64 {
        self.twiddle_n(k)
    }

    fn twiddle_n(&self, k: usize) -> Complex64 {
        Complex64::from_polar(1.0, -2.0 * PI * (k % self.n) as f64 / self.n as f64)
    }

    fn f_combined(&self, k: usize) -> Vec<Complex64> {
        let phi = self.twiddle_n(k);
        self.f1.iter().zip(&self.f2).map(|(a, b)| a + phi * b).collect()
    }

    /// `f_{τ,ν,k,l'}(m)` from the precomputed tables.
    pub fn f_value(&self, k: usize, l_prime: usize, m: usize) -> Complex64 {
        let phi = self.twiddle_n(k);
        let off = self.m as i64 - 1;
        let mut acc = ZERO;
        for p in -(m as i64)..=(self.m as i64 - 1 - m as i64) {
            let i = (p + off) as usize;
            let r = (p * l_prime as i64).rem_euclid(self.m as i64) as usize;
            acc += self.twiddle[r] * (self.f1[i] + phi * self.f2[i]);
        }
        acc
    }

    // H[m'] = Σ_m exp(-j2π m l / M) ramp[m] F(m' - m)
    fn spectrum(&self, l: usize, table: &[Complex64]) -> Vec<Complex64> {
        let m = self.m;
        let w: Vec<Complex64> = (0..m)
            .map(|i| self.ramp[i] * self.twiddle[(i * l) % m].conj())
            .collect();
        (0..m)
            .map(|mp| {
                let mut acc = ZERO;
                for (i, wi) in w.iter().enumerate() {
                    acc += wi * table[mp + m - 1 - i];
                }
                acc
            })
            .collect()
    }

    fn synthesize(&self, spectrum: &[Complex64], l_prime: usize) -> Complex64 {
        let m = self.m;
        let mut acc = ZERO;
        for (mp, s) in spectrum.iter().enumerate() {
            acc += s * self.twiddle[(mp * l_prime) % m];
        }
        acc / m as f64
    }

    /// Delay response `g_{l,k}[l']` for all `l'`, without the prefactor.
    pub fn delay_response(&self, l: usize, k: usize) -> Vec<Complex64> {
        self.delay_response_at(l, k, &(0..self.m).collect::<Vec<_>>())
    }

    /// Delay response restricted to the listed output delays.
    pub fn delay_response_at(&self, l: usize, k: usize, l_primes: &[usize]) -> Vec<Complex64> {
        let spectrum = self.spectrum(l, &self.f_combined(k));
        l_primes.iter().map(|&lp| self.synthesize(&spectrum, lp)).collect()
    }

    /// Doppler response `D_N((k' - k)/N - ν/Δf)` for all `k'`.
    pub fn doppler_response(&self, k: usize) -> Vec<Complex64> {
        (0..self.n)
            .map(|kp| doppler_kernel((kp as f64 - k as f64) / self.n as f64 - self.x, self.n))
            .collect()
    }

    /// Doppler kernel by offset `d = (k' - k) mod N`.
    pub fn doppler_offsets(&self) -> Vec<Complex64> {
        self.doppler_response(0)
    }

    /// Unit-gain response to an impulse at `(l, k)`, i.e. column `kM + l` of
    /// `B(τ, ν)`.
    pub fn column(&self, l: usize, k: usize) -> DdVector {
        let g = self.delay_response(l, k);
        let d = self.doppler_response(k);
        DdVector::from_fn(self.m, self.n, |lp, kp| self.prefactor * d[kp] * g[lp])
    }

    /// Column values on the cells of `region` only, in the region's order.
    pub fn column_on(&self, l: usize, k: usize, region: &SupportRegion) -> Vec<Complex64> {
        let g = self.delay_response_at(l, k, region.delay_bins());
        let mut out = Vec::with_capacity(region.len());
        for &kp in region.doppler_bins() {
            let d = self.prefactor * doppler_kernel((kp as f64 - k as f64) / self.n as f64 - self.x, self.n);
            out.extend(g.iter().map(|gv| d * gv));
        }
        out
    }

    /// Delay responses of both pulse segments for every input delay `l`,
    /// evaluated with FFT convolutions. Entry `l` holds `(g1, g2)` with
    /// `g_{l,k} = g1 + exp(-j2πk/N) g2`.
    pub fn delay_responses_all(&self, plan: &DelayPlan) -> Vec<(Vec<Complex64>, Vec<Complex64>)> {
        let m = self.m;
        assert_eq!(plan.m, m, "plan built for a different M");
        let p = plan.len;
        let mut t1 = vec![ZERO; p];
        let mut t2 = vec![ZERO; p];
        t1[..2 * m - 1].copy_from_slice(&self.f1);
        t2[..2 * m - 1].copy_from_slice(&self.f2);
        plan.forward.process(&mut t1);
        plan.forward.process(&mut t2);

        let mut out = Vec::with_capacity(m);
        let mut w = vec![ZERO; p];
        for l in 0..m {
            w.iter_mut().for_each(|v| *v = ZERO);
            for (i, (v, r)) in w.iter_mut().zip(&self.ramp).take(m).enumerate() {
                *v = r * self.twiddle[(i * l) % m].conj();
            }
            plan.forward.process(&mut w);
            let mut pair = Vec::with_capacity(2);
            for table in [&t1, &t2] {
                let mut c: Vec<Complex64> = w.iter().zip(table.iter()).map(|(a, b)| a * b).collect();
                plan.inverse.process(&mut c);
                let scale = 1.0 / (p as f64 * m as f64);
                let mut h: Vec<Complex64> = c[m - 1..2 * m - 1].iter().map(|v| v * scale).collect();
                plan.inverse_m.process(&mut h);
                pair.push(h);
            }
            let g2 = pair.pop().unwrap();
            let g1 = pair.pop().unwrap();
            out.push((g1, g2));
        }
        out
    }
}

/// FFT plans shared by [`PathKernel::delay_responses_all`] calls at one `M`.
#[derive(Clone)]
pub struct DelayPlan {
    m: usize,
    len: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    inverse_m: Arc<dyn Fft<f64>>,
}

impl DelayPlan {
    pub fn new(m: usize) -> Self {
        let len = (3 * m).saturating_sub(2).max(1).next_power_of_two();
        let mut planner = FftPlanner::new();
        Self {
            m,
            len,
            forward: planner.plan_fft_forward(len),
            inverse: planner.plan_fft_inverse(len),
            inverse_m: planner.plan_fft_inverse(m),
        }
    }
}

impl std::fmt::Debug for DelayPlan {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("DelayPlan").field("m", &self.m).field("len", &self.len).finish()
    }
}

/// Received delay-Doppler pilot response `a(τ, ν)` of a unit-gain path.
#[derive(Debug, Clone)]
pub struct PilotColumn {
    pub a: DdVector,
    pub tau: f64,
    pub nu: f64,
}

impl PilotColumn {
    pub fn energy(&self) -> f64 {
        self.a.energy()
    }
}

/// `a(τ, ν) = sqrt(M N E_p) B(τ, ν)[:, k_p M + l_p]`.
pub fn a_column(tau: f64, nu: f64, params: &FrameParams) -> PilotColumn {
    let kernel = PathKernel::new(tau, nu, params);
    let mut a = kernel.column(params.pilot_delay_index(), params.pilot_doppler_index());
    let amp = params.pilot_amplitude();
    a.as_mut_slice().iter_mut().for_each(|v| *v *= amp);
    PilotColumn { a, tau, nu }
}

/// [`a_column`] with every entry outside the pilot support region zeroed.
pub fn a_column_truncated(tau: f64, nu: f64, params: &FrameParams) -> PilotColumn {
    let region = support_region(params);
    let kernel = PathKernel::new(tau, nu, params);
    let values = kernel.column_on(params.pilot_delay_index(), params.pilot_doppler_index(), &region);
    let mut a = DdVector::zeros(params.m(), params.n());
    let amp = params.pilot_amplitude();
    for ((l, k), v) in region.cells().zip(values) {
        a[(l, k)] = v * amp;
    }
    PilotColumn { a, tau, nu }
}

/// Noiseless received pilot frame `Σ_i h_i a(τ_i, ν_i)`.
pub fn pilot_response(channel: &ChannelState, params: &FrameParams) -> DdVector {
    let mut y = DdVector::zeros(params.m(), params.n());
    for path in channel.paths() {
        let a = a_column(path.tau, path.nu, params).a;
        y.subtract_scaled(-path.h, &a);
    }
    y
}

/// How [`assemble_g`] stores the matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Storage {
    /// Dense up to the cap, sparse with [`DEFAULT_SPARSE_THRESHOLD`] above it.
    Auto,
    Dense,
    /// Entries below `threshold * max|G|` are dropped.
    Sparse { threshold: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AssembleOptions {
    pub storage: Storage,
    pub dense_cap: usize,
}

impl Default for AssembleOptions {
    fn default() -> Self {
        Self { storage: Storage::Auto, dense_cap: DEFAULT_DENSE_CAP }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Entries {
    /// Row-major `MN x MN`.
    Dense(Vec<Complex64>),
    /// Per column: `(row, value)` pairs in increasing row order.
    Sparse(Vec<Vec<(u32, Complex64)>>),
}

/// The `MN x MN` effective channel matrix `G` mapping transmitted to
/// received delay-Doppler samples.
#[derive(Debug, Clone, PartialEq)]
pub struct EffectiveChannelMatrix {
    m: usize,
    n: usize,
    entries: Entries,
}

impl EffectiveChannelMatrix {
    /// All-zero dense matrix.
    pub fn zeros(m: usize, n: usize) -> Self {
        let order = m * n;
        if order <= DEFAULT_DENSE_CAP {
            Self { m, n, entries: Entries::Dense(vec![ZERO; order * order]) }
        } else {
            Self { m, n, entries: Entries::Sparse(vec![Vec::new(); order]) }
        }
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Matrix order `MN`.
    pub fn order(&self) -> usize {
        self.m * self.n
    }

    pub fn is_sparse(&self) -> bool {
        matches!(self.entries, Entries::Sparse(_))
    }

    /// Number of stored entries.
    pub fn nnz(&self) -> usize {
        match &self.entries {
            Entries::Dense(d) => d.len(),
            Entries::Sparse(cols) => cols.iter().map(Vec::len).sum(),
        }
    }

    pub fn get(&self, row: usize, col: usize) -> Complex64 {
        let order = self.order();
        assert!(row < order && col < order, "({row}, {col}) outside order {order}");
        match &self.entries {
            Entries::Dense(d) => d[row * order + col],
            Entries::Sparse(cols) => cols[col]
                .binary_search_by_key(&(row as u32), |e| e.0)
                .map(|i| cols[col][i].1)
                .unwrap_or(ZERO),
        }
    }

    pub fn column(&self, col: usize) -> Vec<Complex64> {
        let order = self.order();
        match &self.entries {
            Entries::Dense(d) => (0..order).map(|r| d[r * order + col]).collect(),
            Entries::Sparse(cols) => {
                let mut out = vec![ZERO; order];
                for &(r, v) in &cols[col] {
                    out[r as usize] = v;
                }
                out
            }
        }
    }

    /// `G x`.
    pub fn apply(&self, x: &DdVector) -> Result<DdVector> {
        let order = self.order();
        if x.len() != order {
            return Err(OtfsError::DimensionMismatch { expected: order, got: x.len() });
        }
        let xs = x.as_slice();
        let out = match &self.entries {
            Entries::Dense(d) => d
                .chunks_exact(order)
                .map(|row| row.iter().zip(xs).map(|(g, v)| g * v).sum())
                .collect(),
            Entries::Sparse(cols) => {
                let mut y = vec![ZERO; order];
                for (c, col) in cols.iter().enumerate() {
                    for &(r, v) in col {
                        y[r as usize] += v * xs[c];
                    }
                }
                y
            }
        };
        DdVector::new(self.m, self.n, out)
    }

    pub fn frobenius_norm_sq(&self) -> f64 {
        match &self.entries {
            Entries::Dense(d) => d.iter().map(|v| v.norm_sqr()).sum(),
            Entries::Sparse(cols) => cols.iter().flatten().map(|(_, v)| v.norm_sqr()).sum(),
        }
    }

    /// `‖self - other‖_F^2`.
    pub fn distance_sq(&self, other: &EffectiveChannelMatrix) -> Result<f64> {
        let order = self.order();
        if other.order() != order {
            return Err(OtfsError::DimensionMismatch { expected: order, got: other.order() });
        }
        if let (Entries::Dense(a), Entries::Dense(b)) = (&self.entries, &other.entries) {
            return Ok(a.iter().zip(b).map(|(x, y)| (x - y).norm_sqr()).sum());
        }
        let mut total = 0.0;
        for c in 0..order {
            let a = self.column(c);
            let b = other.column(c);
            total += a.iter().zip(&b).map(|(x, y)| (x - y).norm_sqr()).sum::<f64>();
        }
        Ok(total)
    }

    /// Writes the `OTFSG1` dump: magic, `M` and `N` as little-endian `u32`,
    /// then the matrix row-major as little-endian `f32` (re, im) pairs.
    pub fn write_binary(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut out = BufWriter::new(File::create(path)?);
        out.write_all(b"OTFSG1")?;
        out.write_all(&(self.m as u32).to_le_bytes())?;
        out.write_all(&(self.n as u32).to_le_bytes())?;
        let order = self.order();
        match &self.entries {
            Entries::Dense(d) => {
                for v in d {
                    out.write_all(&(v.re as f32).to_le_bytes())?;
                    out.write_all(&(v.im as f32).to_le_bytes())?;
                }
            }
            Entries::Sparse(_) => {
                let cols: Vec<Vec<Complex64>> = (0..order).map(|c| self.column(c)).collect();
                for r in 0..order {
                    for col in &cols {
                        out.write_all(&(col[r].re as f32).to_le_bytes())?;
                        out.write_all(&(col[r].im as f32).to_le_bytes())?;
                    }
                }
            }
        }
        out.flush()?;
        Ok(())
    }
}

/// Builds `G` with column `q` equal to `B_q(τ, ν) h`.
pub fn assemble_g(channel: &ChannelState, params: &FrameParams, options: AssembleOptions) -> Result<EffectiveChannelMatrix> {
    assemble_from_paths(channel.paths(), params, options)
}

pub(crate) fn assemble_from_paths(
    paths: &[ChannelPath],
    params: &FrameParams,
    options: AssembleOptions,
) -> Result<EffectiveChannelMatrix> {
    let (m, n) = (params.m(), params.n());
    let order = m * n;
    let threshold = match options.storage {
        Storage::Dense if order > options.dense_cap => {
            return Err(OtfsError::MatrixTooLarge { order, cap: options.dense_cap })
        }
        Storage::Dense => None,
        Storage::Auto if order <= options.dense_cap => None,
        Storage::Auto => Some(DEFAULT_SPARSE_THRESHOLD),
        Storage::Sparse { threshold } => {
            if !(threshold.is_finite() && threshold >= 0.0) {
                return Err(OtfsError::InvalidParams(format!("sparse threshold must be non-negative, got {threshold}")));
            }
            Some(threshold)
        }
    };

    let plan = DelayPlan::new(m);
    let kernels: Vec<_> = paths
        .iter()
        .map(|p| {
            let k = PathKernel::from_path(p, params);
            let delays = k.delay_responses_all(&plan);
            let doppler = k.doppler_offsets();
            (p.h * k.prefactor(), k, delays, doppler)
        })
        .collect();

    let column = |l: usize, k: usize, buf: &mut Vec<Complex64>| {
        buf.iter_mut().for_each(|v| *v = ZERO);
        for (weight, kernel, delays, doppler) in &kernels {
            let phi = kernel.segment_phase(k);
            let (g1, g2) = &delays[l];
            let g: Vec<Complex64> = g1.iter().zip(g2).map(|(a, b)| a + phi * b).collect();
            for kp in 0..n {
                let d = weight * doppler[(kp + n - k) % n];
                let row = &mut buf[kp * m..(kp + 1) * m];
                for (r, gv) in row.iter_mut().zip(&g) {
                    *r += d * gv;
                }
            }
        }
    };

    let mut buf = vec![ZERO; order];
    match threshold {
        None => {
            let mut dense = vec![ZERO; order * order];
            for k in 0..n {
                for l in 0..m {
                    column(l, k, &mut buf);
                    let c = k * m + l;
                    for (r, v) in buf.iter().enumerate() {
                        dense[r * order + c] = *v;
                    }
                }
            }
            Ok(EffectiveChannelMatrix { m, n, entries: Entries::Dense(dense) })
        }
        Some(threshold) => {
            let mut cols = Vec::with_capacity(order);
            let mut global_max = 0.0f64;
            for k in 0..n {
                for l in 0..m {
                    column(l, k, &mut buf);
                    let col_max = buf.iter().map(|v| v.norm()).fold(0.0, f64::max);
                    global_max = global_max.max(col_max);
                    let cut = threshold * col_max;
                    let kept: Vec<(u32, Complex64)> = buf
                        .iter()
                        .enumerate()
                        .filter(|(_, v)| v.norm() >= cut && v.norm() > 0.0)
                        .map(|(r, v)| (r as u32, *v))
                        .collect();
                    cols.push(kept);
                }
            }
            // Per-column cuts never exceed the global one, so a second pass
            // yields exactly the globally thresholded set.
            let cut = threshold * global_max;
            for col in &mut cols {
                col.retain(|(_, v)| v.norm() >= cut);
            }
            Ok(EffectiveChannelMatrix { m, n, entries: Entries::Sparse(cols) })
        }
    }
}

/// Normalized magnitude of the inner product of two pilot columns, computed
/// directly from the full columns.
pub fn column_coherence(tau1: f64, nu1: f64, tau2: f64, nu2: f64, params: &FrameParams) -> f64 {
    let a1 = PathKernel::new(tau1, nu1, params).column(params.pilot_delay_index(), params.pilot_doppler_index());
    let a2 = PathKernel::new(tau2, nu2, params).column(params.pilot_delay_index(), params.pilot_doppler_index());
    let den = (a1.energy() * a2.energy()).sqrt();
    if den == 0.0 {
        return 0.0;
    }
    a1.inner(&a2).norm() / den
}

/// Coherence from the factorized form: a delay-domain inner product times the
/// Dirichlet magnitude `|sin(πN(ν1-ν2)T) / (N sin(π(ν1-ν2)T))|`.
pub fn closed_form_coherence(tau1: f64, nu1: f64, tau2: f64, nu2: f64, params: &FrameParams) -> f64 {
    let (lp, kp) = (params.pilot_delay_index(), params.pilot_doppler_index());
    let g1 = PathKernel::new(tau1, nu1, params).delay_response(lp, kp);
    let g2 = PathKernel::new(tau2, nu2, params).delay_response(lp, kp);
    let cross: Complex64 = g1.iter().zip(&g2).map(|(a, b)| a.conj() * b).sum();
    let n1: f64 = g1.iter().map(|v| v.norm_sqr()).sum();
    let n2: f64 = g2.iter().map(|v| v.norm_sqr()).sum();
    let den = (n1 * n2).sqrt();
    if den == 0.0 {
        return 0.0;
    }
    let dirichlet = doppler_kernel((nu1 - nu2) * params.symbol_period(), params.n()).norm();
    cross.norm() * dirichlet / den
}

#[cfg(test)]
mod tests {
    use super::*;

    fn frame(m: usize, n: usize) -> FrameParams {
        FrameParams::new(m, n, 1.0, 0.4, 0.0).unwrap()
    }

    fn close(a: Complex64, b: Complex64, tol: f64) -> bool {
        (a - b).norm() <= tol
    }

    #[test]
    fn dirichlet_special_values() {
        assert!(close(doppler_kernel(0.0, 32), Complex64::new(1.0, 0.0), 1e-15));
        assert!(doppler_kernel(1.0 / 8.0, 8).norm() < 1e-15);
        assert!(close(doppler_kernel(3.0, 7), Complex64::new(1.0, 0.0), 1e-15));
        let x = 0.173;
        let n = 32;
        let magnitude = ((PI * n as f64 * x).sin() / (n as f64 * (PI * x).sin())).abs();
        assert!((doppler_kernel(x, n).norm() - magnitude).abs() < 1e-12);
        assert!(close(doppler_kernel(x, n), doppler_kernel_sum(x, n), 1e-12));
    }

    #[test]
    fn dirichlet_near_integer_branch() {
        for &x in &[1e-12, -3e-11, 2.0 + 4e-12] {
            assert!(close(doppler_kernel(x, 64), doppler_kernel_sum(x, 64), 1e-12));
        }
    }

    #[test]
    fn sinc_values() {
        assert_eq!(sinc(0.0), 1.0);
        assert!(sinc(1.0).abs() < 1e-15);
        assert!((sinc(0.5) - 2.0 / PI).abs() < 1e-15);
    }

    #[test]
    fn f_kernel_zero_path_is_one() {
        let p = frame(8, 4);
        for m in 0..8 {
            for lp in [0, 3, 7] {
                assert!(close(f_kernel(0.0, 0.0, 2, lp, m, &p), Complex64::new(1.0, 0.0), 1e-14));
            }
        }
    }

    #[test]
    fn f_table_matches_literal_sum() {
        let p = frame(8, 4);
        let (tau, nu) = (0.21, -0.37);
        let kernel = PathKernel::new(tau, nu, &p);
        for k in 0..4 {
            for lp in 0..8 {
                for m in 0..8 {
                    let lit = f_kernel(tau, nu, k, lp, m, &p);
                    assert!(close(kernel.f_value(k, lp, m), lit, 1e-12));
                }
            }
        }
    }

    #[test]
    fn zero_path_gain_is_kronecker() {
        let p = frame(4, 4);
        let ch = ChannelState::single(Complex64::new(1.0, 0.0), 0.0, 0.0).unwrap();
        for (lp, kp, l, k) in [(1, 2, 1, 2), (0, 0, 1, 0), (3, 1, 3, 2)] {
            let want = if (lp, kp) == (l, k) { 1.0 } else { 0.0 };
            let got = effective_gain(lp, kp, l, k, &ch, &p).unwrap();
            assert!(close(got, Complex64::new(want, 0.0), 1e-13), "{got}");
        }
    }

    #[test]
    fn kernel_column_matches_literal_gain() {
        let p = frame(8, 4);
        let ch = ChannelState::single(Complex64::new(1.0, 0.0), 0.23, 0.31).unwrap();
        let kernel = PathKernel::from_path(&ch.paths()[0], &p);
        for (l, k) in [(0, 0), (5, 3), (2, 1)] {
            let col = kernel.column(l, k);
            for kp in 0..4 {
                for lp in 0..8 {
                    let lit = effective_gain(lp, kp, l, k, &ch, &p).unwrap();
                    assert!(close(col[(lp, kp)], lit, 1e-12));
                }
            }
        }
    }

    #[test]
    fn fft_delay_responses_match_direct() {
        let p = frame(8, 4);
        let kernel = PathKernel::new(0.17, -0.29, &p);
        let all = kernel.delay_responses_all(&DelayPlan::new(8));
        for (l, (f1, f2)) in all.iter().enumerate() {
            for k in 0..4 {
                let direct = kernel.delay_response(l, k);
                let phi = kernel.segment_phase(k);
                for (lp, &d) in direct.iter().enumerate() {
                    let fast = f1[lp] + phi * f2[lp];
                    assert!(close(fast, d, 1e-12));
                }
            }
        }
    }

    #[test]
    fn b_element_matches_gain() {
        let p = frame(8, 4);
        let path = ChannelPath::new(Complex64::new(1.0, 0.0), 0.11, 0.42);
        let ch = ChannelState::new(vec![path]).unwrap();
        for (l, k, lp, kp) in [(3, 2, 4, 2), (7, 0, 1, 3), (0, 3, 0, 3)] {
            let q = k * 8 + l + 1;
            let b = b_element(q, &path, lp, kp, &p).unwrap();
            assert!(close(b, effective_gain(lp, kp, l, k, &ch, &p).unwrap(), 1e-12));
        }
        assert!(b_element(0, &path, 0, 0, &p).is_err());
        let still = ChannelPath::new(Complex64::new(1.0, 0.0), 0.0, 0.0);
        assert!(close(b_element(1, &still, 0, 0, &p).unwrap(), Complex64::new(1.0, 0.0), 1e-13));
        assert!(b_element(1, &still, 1, 0, &p).unwrap().norm() < 1e-13);
    }

    #[test]
    fn pilot_column_at_origin() {
        let p = frame(4, 4).with_pilot(0, 0).unwrap().with_pilot_energy(2.0).unwrap();
        let a = a_column(0.0, 0.0, &p);
        assert!((a.a[(0, 0)].re - (32.0f64).sqrt()).abs() < 1e-12);
        assert!((a.energy() - 32.0).abs() < 1e-10);
    }

    #[test]
    fn truncated_column_agrees_on_support() {
        let p = FrameParams::new(16, 8, 1.0, 3.0 / 16.0, 1.5 / 8.0).unwrap();
        let full = a_column(0.1, 0.12, &p);
        let trunc = a_column_truncated(0.1, 0.12, &p);
        let region = support_region(&p);
        for l in 0..16 {
            for k in 0..8 {
                if region.contains(l, k) {
                    assert!(close(full.a[(l, k)], trunc.a[(l, k)], 1e-12));
                } else {
                    assert_eq!(trunc.a[(l, k)], ZERO);
                }
            }
        }
    }

    #[test]
    fn identity_channel_gives_identity_matrix() {
        let p = frame(4, 2);
        let ch = ChannelState::single(Complex64::new(1.0, 0.0), 0.0, 0.0).unwrap();
        let g = assemble_g(&ch, &p, AssembleOptions::default()).unwrap();
        for r in 0..8 {
            for c in 0..8 {
                let want = if r == c { 1.0 } else { 0.0 };
                assert!(close(g.get(r, c), Complex64::new(want, 0.0), 1e-13));
            }
        }
    }

    #[test]
    fn matrix_is_not_two_dimensionally_circulant() {
        let p = frame(8, 4);
        let ch = ChannelState::single(Complex64::new(1.0, 0.0), 0.37, 0.21).unwrap();
        let g = assemble_g(&ch, &p, AssembleOptions::default()).unwrap();
        let c0 = g.column(0);
        let c1 = g.column(8 + 1);
        // shift column (1, 1) back by one delay and one Doppler bin
        let mut worst = 0.0f64;
        for kp in 0..4 {
            for lp in 0..8 {
                let shifted = c1[((kp + 1) % 4) * 8 + (lp + 1) % 8];
                worst = worst.max((shifted - c0[kp * 8 + lp]).norm());
            }
        }
        assert!(worst > 1e-3, "columns unexpectedly related by a cyclic shift ({worst})");
    }

    #[test]
    fn sparse_storage_thresholds() {
        let p = frame(8, 4);
        let ch = ChannelState::single(Complex64::new(1.0, 0.0), 0.37, 0.21).unwrap();
        let dense = assemble_g(&ch, &p, AssembleOptions::default()).unwrap();
        let exact = assemble_g(&ch, &p, AssembleOptions { storage: Storage::Sparse { threshold: 0.0 }, ..Default::default() }).unwrap();
        assert!(dense.distance_sq(&exact).unwrap() < 1e-24);
        let thin = assemble_g(&ch, &p, AssembleOptions { storage: Storage::Sparse { threshold: 0.05 }, ..Default::default() }).unwrap();
        assert!(thin.nnz() < dense.nnz());
        let max = (0..32).flat_map(|c| dense.column(c)).map(|v| v.norm()).fold(0.0, f64::max);
        for c in 0..32 {
            for (r, v) in dense.column(c).iter().enumerate() {
                let kept = thin.get(r, c);
                if v.norm() >= 0.05 * max {
                    assert_eq!(kept, *v);
                } else {
                    assert_eq!(kept, ZERO);
                }
            }
        }
    }

    #[test]
    fn dense_cap_is_enforced() {
        let p = frame(8, 4);
        let ch = ChannelState::single(Complex64::new(1.0, 0.0), 0.0, 0.0).unwrap();
        let opts = AssembleOptions { storage: Storage::Dense, dense_cap: 16 };
        assert!(matches!(assemble_g(&ch, &p, opts), Err(OtfsError::MatrixTooLarge { order: 32, cap: 16 })));
    }

    #[test]
    fn apply_matches_column_sum() {
        let p = frame(4, 4);
        let ch = ChannelState::new(vec![
            ChannelPath::new(Complex64::new(0.8, 0.1), 0.13, 0.2),
            ChannelPath::new(Complex64::new(-0.3, 0.5), 0.05, -0.31),
        ])
        .unwrap();
        let g = assemble_g(&ch, &p, AssembleOptions::default()).unwrap();
        let x = DdVector::from_fn(4, 4, |l, k| Complex64::new(l as f64 - 1.5, k as f64 * 0.5));
        let y = g.apply(&x).unwrap();
        for r in 0..16 {
            let (l, k) = (r % 4, r / 4);
            let mut want = ZERO;
            for c in 0..16 {
                want += effective_gain(l, k, c % 4, c / 4, &ch, &p).unwrap() * x.as_slice()[c];
            }
            assert!(close(y.as_slice()[r], want, 1e-11));
        }
    }

    #[test]
    fn binary_dump_layout() {
        let p = frame(2, 2);
        let ch = ChannelState::single(Complex64::new(1.0, 0.0), 0.0, 0.0).unwrap();
        let g = assemble_g(&ch, &p, AssembleOptions::default()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("g.bin");
        g.write_binary(&path).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        assert_eq!(&bytes[..6], b"OTFSG1");
        assert_eq!(u32::from_le_bytes(bytes[6..10].try_into().unwrap()), 2);
        assert_eq!(u32::from_le_bytes(bytes[10..14].try_into().unwrap()), 2);
        assert_eq!(bytes.len(), 14 + 16 * 8);
        let first = f32::from_le_bytes(bytes[14..18].try_into().unwrap());
        assert_eq!(first, 1.0);
    }

    #[test]
    fn coherence_self_is_one() {
        let p = frame(8, 8);
        let c = column_coherence(0.2, 0.3, 0.2, 0.3, &p);
        assert!((c - 1.0).abs() < 1e-12);
        assert!((closed_form_coherence(0.2, 0.3, 0.2, 0.3, &p) - 1.0).abs() < 1e-12);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(64))]

            #[test]
            fn dirichlet_closed_form_matches_sum(x in -2.0f64..2.0, n in 1usize..=256) {
                let d = doppler_kernel(x, n) - doppler_kernel_sum(x, n);
                prop_assert!(d.norm() <= 1e-12);
            }

            #[test]
            fn unit_modulus_prefactor_does_not_change_magnitude(tau in 0.0f64..0.4, nu in -0.45f64..0.45) {
                let p = frame(8, 4);
                let kernel = PathKernel::new(tau, nu, &p);
                prop_assert!((kernel.prefactor().norm() - 1.0).abs() < 1e-15);
            }

            #[test]
            fn pilot_column_never_gains_energy(tau in 0.0f64..0.4, nu in -0.45f64..0.45) {
                let p = frame(16, 8);
                let a = a_column(tau, nu, &p);
                let budget = p.mn() as f64 * p.pilot_energy();
                prop_assert!(a.energy() <= budget * (1.0 + 1e-9));
            }

            #[test]
            fn g_is_linear_in_gains(
                re in -1.0f64..1.0, im in -1.0f64..1.0,
                tau in 0.0f64..0.4, nu in -0.45f64..0.45,
            ) {
                let p = frame(4, 4);
                let h = Complex64::new(re, im);
                let unit = assemble_g(&ChannelState::single(Complex64::new(1.0, 0.0), tau, nu).unwrap(), &p, AssembleOptions::default()).unwrap();
                let scaled = assemble_g(&ChannelState::single(h, tau, nu).unwrap(), &p, AssembleOptions::default()).unwrap();
                for c in [0, 5, 15] {
                    for (a, b) in unit.column(c).iter().zip(scaled.column(c)) {
                        prop_assert!((a * h - b).norm() < 1e-12);
                    }
                }
            }
        }
    }
}
