//! OTFS numerology, delay-Doppler indexing and refined hypothesis grids.
//!
//! Delay-Doppler samples are stored delay-fastest: the sample of the
//! `(l, k)` resource element lives at flat index `k * M + l`.

use std::ops::{Index, IndexMut};

use num_complex::Complex64;

use crate::error::{OtfsError, Result};

/// Slack used when rounding spreads up to whole bins, so that a spread that
/// is an exact multiple of the resolution does not gain a spurious bin.
const CEIL_SLACK: f64 = 1e-9;

/// OTFS frame numerology together with the pilot placement and the channel
/// spread bounds used to size the pilot support region.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameParams {
    m: usize,
    n: usize,
    delta_f: f64,
    pilot_energy: f64,
    pilot_delay: usize,
    pilot_doppler: usize,
    tau_max: f64,
    nu_max: f64,
}

impl FrameParams {
    /// Creates a frame with `m` delay bins, `n` Doppler bins and subcarrier
    /// spacing `delta_f` (Hz). The pilot sits at `(m / 2, n / 2)` with unit
    /// energy.
    pub fn new(m: usize, n: usize, delta_f: f64, tau_max: f64, nu_max: f64) -> Result<Self> {
        let params = Self {
            m,
            n,
            delta_f,
            pilot_energy: 1.0,
            pilot_delay: m / 2,
            pilot_doppler: n / 2,
            tau_max,
            nu_max,
        };
        params.validate()?;
        Ok(params)
    }

    /// Moves the pilot to the `(l_p, k_p)` resource element.
    pub fn with_pilot(mut self, l_p: usize, k_p: usize) -> Result<Self> {
        self.pilot_delay = l_p;
        self.pilot_doppler = k_p;
        self.validate()?;
        Ok(self)
    }

    /// Sets the time-domain pilot energy `E_p` (J).
    pub fn with_pilot_energy(mut self, energy: f64) -> Result<Self> {
        self.pilot_energy = energy;
        self.validate()?;
        Ok(self)
    }

    fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(OtfsError::InvalidParams(msg));
        if self.m == 0 || self.n == 0 {
            return bad(format!("grid must be non-empty, got {}x{}", self.m, self.n));
        }
        if !(self.delta_f.is_finite() && self.delta_f > 0.0) {
            return bad(format!("subcarrier spacing must be positive, got {}", self.delta_f));
        }
        if !(self.pilot_energy.is_finite() && self.pilot_energy >= 0.0) {
            return bad(format!("pilot energy must be non-negative, got {}", self.pilot_energy));
        }
        if self.pilot_delay >= self.m || self.pilot_doppler >= self.n {
            return bad(format!(
                "pilot ({}, {}) outside the {}x{} grid",
                self.pilot_delay, self.pilot_doppler, self.m, self.n
            ));
        }
        if !(self.tau_max.is_finite() && self.tau_max >= 0.0 && self.tau_max < self.symbol_period()) {
            return bad(format!(
                "maximum delay {} s must lie in [0, T) with T = {} s",
                self.tau_max,
                self.symbol_period()
            ));
        }
        if !(self.nu_max.is_finite() && self.nu_max >= 0.0) {
            return bad(format!("maximum Doppler must be non-negative, got {}", self.nu_max));
        }
        if self.delay_span() > self.m {
            return bad(format!("delay spread covers {} bins but M = {}", self.delay_span(), self.m));
        }
        if self.doppler_span() > self.n {
            return bad(format!("Doppler spread covers {} bins but N = {}", self.doppler_span(), self.n));
        }
        Ok(())
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Number of resource elements, `M * N`.
    pub fn mn(&self) -> usize {
        self.m * self.n
    }

    pub fn delta_f(&self) -> f64 {
        self.delta_f
    }

    /// Symbol period `T = 1 / Δf`.
    pub fn symbol_period(&self) -> f64 {
        1.0 / self.delta_f
    }

    /// Frame duration `N T`.
    pub fn frame_duration(&self) -> f64 {
        self.n as f64 / self.delta_f
    }

    pub fn pilot_energy(&self) -> f64 {
        self.pilot_energy
    }

    /// Pilot amplitude in the delay-Doppler domain, `sqrt(M N E_p)`.
    pub fn pilot_amplitude(&self) -> f64 {
        (self.mn() as f64 * self.pilot_energy).sqrt()
    }

    pub fn pilot_delay_index(&self) -> usize {
        self.pilot_delay
    }

    pub fn pilot_doppler_index(&self) -> usize {
        self.pilot_doppler
    }

    pub fn tau_max(&self) -> f64 {
        self.tau_max
    }

    pub fn nu_max(&self) -> f64 {
        self.nu_max
    }

    /// Delay resolution `T / M = 1 / (M Δf)`.
    pub fn delay_resolution(&self) -> f64 {
        1.0 / (self.m as f64 * self.delta_f)
    }

    /// Doppler resolution `Δf / N = 1 / (N T)`.
    pub fn doppler_resolution(&self) -> f64 {
        self.delta_f / self.n as f64
    }

    /// Number of delay bins holding most of the pilot energy,
    /// `ceil(M Δf τ_max) + 1`.
    pub fn delay_span(&self) -> usize {
        let bins = self.tau_max / self.delay_resolution();
        (bins - CEIL_SLACK).ceil().max(0.0) as usize + 1
    }

    /// Number of Doppler bins holding most of the pilot energy,
    /// `2 ceil(ν_max N T) + 1`.
    pub fn doppler_span(&self) -> usize {
        let bins = self.nu_max / self.doppler_resolution();
        2 * (bins - CEIL_SLACK).ceil().max(0.0) as usize + 1
    }

    /// Maps a delay-Doppler index relative to the pilot onto the hypothesis
    /// cell offsets: delay modulo `M` into `[0, M)` and signed Doppler in
    /// `[-floor(N/2), ceil(N/2))`.
    pub fn cell_offset(&self, l: usize, k: usize) -> (i64, i64) {
        let dl = (l as i64 - self.pilot_delay as i64).rem_euclid(self.m as i64);
        let dk = signed_doppler_index(k as i64 - self.pilot_doppler as i64, self.n);
        (dl, dk)
    }

    /// Restricts a delay hypothesis to `[0, τ_max]`.
    pub fn clamp_delay(&self, tau: f64) -> f64 {
        tau.clamp(0.0, self.tau_max)
    }
}

/// Wraps a Doppler index into the signed range `[-floor(N/2), ceil(N/2))`.
pub fn signed_doppler_index(k: i64, n: usize) -> i64 {
    let n = n as i64;
    let lo = -(n / 2);
    (k - lo).rem_euclid(n) + lo
}

/// Flat position of the `(l, k)` sample, `k * M + l`.
pub fn flat_index(l: usize, k: usize, m: usize, n: usize) -> Result<usize> {
    if l >= m || k >= n {
        return Err(OtfsError::IndexOutOfRange { l, k, m, n });
    }
    Ok(k * m + l)
}

/// Inverse of [`flat_index`].
pub fn unflatten(flat: usize, m: usize, n: usize) -> Result<(usize, usize)> {
    if m == 0 || flat >= m * n {
        return Err(OtfsError::IndexOutOfRange { l: flat % m.max(1), k: flat / m.max(1), m, n });
    }
    Ok((flat % m, flat / m))
}

/// One propagation path: complex gain, delay (s) and Doppler shift (Hz).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelPath {
    pub h: Complex64,
    pub tau: f64,
    pub nu: f64,
}

impl ChannelPath {
    pub fn new(h: Complex64, tau: f64, nu: f64) -> Self {
        Self { h, tau, nu }
    }

    /// Integer delay index and fractional remainder in `[-0.5, 0.5]`.
    pub fn delay_taps(&self, params: &FrameParams) -> (i64, f64) {
        split_bins(self.tau / params.delay_resolution())
    }

    /// Integer Doppler index and fractional remainder in `[-0.5, 0.5]`.
    pub fn doppler_taps(&self, params: &FrameParams) -> (i64, f64) {
        split_bins(self.nu / params.doppler_resolution())
    }
}

fn split_bins(bins: f64) -> (i64, f64) {
    let whole = bins.round();
    (whole as i64, bins - whole)
}

/// A parametric multipath channel.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelState {
    paths: Vec<ChannelPath>,
    normalized: bool,
}

impl ChannelState {
    /// Builds a channel from at least one finite path with non-negative delay.
    pub fn new(paths: Vec<ChannelPath>) -> Result<Self> {
        if paths.is_empty() {
            return Err(OtfsError::InvalidChannel("a channel needs at least one path".into()));
        }
        for (i, p) in paths.iter().enumerate() {
            if !(p.h.re.is_finite() && p.h.im.is_finite() && p.tau.is_finite() && p.nu.is_finite()) {
                return Err(OtfsError::InvalidChannel(format!("path {i} has non-finite parameters")));
            }
            if p.tau < 0.0 {
                return Err(OtfsError::InvalidChannel(format!("path {i} has negative delay {}", p.tau)));
            }
        }
        Ok(Self { paths, normalized: false })
    }

    /// Single-path channel.
    pub fn single(h: Complex64, tau: f64, nu: f64) -> Result<Self> {
        Self::new(vec![ChannelPath::new(h, tau, nu)])
    }

    /// Rescales the gains so that `sum |h_i|^2 = 1`.
    pub fn normalize(&mut self) -> Result<()> {
        let power = self.total_power();
        if power <= 0.0 {
            return Err(OtfsError::InvalidChannel("cannot normalize a zero-power channel".into()));
        }
        let scale = power.sqrt().recip();
        for p in &mut self.paths {
            p.h *= scale;
        }
        self.normalized = true;
        Ok(())
    }

    pub fn normalized(mut self) -> Result<Self> {
        self.normalize()?;
        Ok(self)
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn paths(&self) -> &[ChannelPath] {
        &self.paths
    }

    pub fn len(&self) -> usize {
        self.paths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.paths.is_empty()
    }

    pub fn total_power(&self) -> f64 {
        self.paths.iter().map(|p| p.h.norm_sqr()).sum()
    }

    /// Checks every path against the frame's spread bounds.
    pub fn validate_for(&self, params: &FrameParams) -> Result<()> {
        let tol = 1e-9;
        for (i, p) in self.paths.iter().enumerate() {
            if p.tau > params.tau_max() * (1.0 + tol) + f64::MIN_POSITIVE {
                return Err(OtfsError::InvalidChannel(format!(
                    "path {i} delay {} s exceeds tau_max {} s",
                    p.tau,
                    params.tau_max()
                )));
            }
            if p.nu.abs() > params.nu_max() * (1.0 + tol) + f64::MIN_POSITIVE {
                return Err(OtfsError::InvalidChannel(format!(
                    "path {i} Doppler {} Hz exceeds nu_max {} Hz",
                    p.nu,
                    params.nu_max()
                )));
            }
        }
        Ok(())
    }
}

/// A length-`MN` delay-Doppler vector in delay-fastest order.
#[derive(Debug, Clone, PartialEq)]
pub struct DdVector {
    m: usize,
    n: usize,
    data: Vec<Complex64>,
}

impl DdVector {
    pub fn new(m: usize, n: usize, data: Vec<Complex64>) -> Result<Self> {
        if data.len() != m * n {
            return Err(OtfsError::DimensionMismatch { expected: m * n, got: data.len() });
        }
        Ok(Self { m, n, data })
    }

    pub fn zeros(m: usize, n: usize) -> Self {
        Self { m, n, data: vec![Complex64::new(0.0, 0.0); m * n] }
    }

    pub fn from_fn(m: usize, n: usize, mut f: impl FnMut(usize, usize) -> Complex64) -> Self {
        let mut data = Vec::with_capacity(m * n);
        for k in 0..n {
            for l in 0..m {
                data.push(f(l, k));
            }
        }
        Self { m, n, data }
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn as_slice(&self) -> &[Complex64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [Complex64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<Complex64> {
        self.data
    }

    /// Delay column at Doppler index `k` (contiguous, length `M`).
    pub fn delay_column(&self, k: usize) -> &[Complex64] {
        &self.data[k * self.m..(k + 1) * self.m]
    }

    /// Doppler row at delay index `l` (length `N`).
    pub fn doppler_row(&self, l: usize) -> Vec<Complex64> {
        (0..self.n).map(|k| self.data[k * self.m + l]).collect()
    }

    pub fn energy(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum()
    }

    /// Hermitian inner product `selfᴴ other`.
    pub fn inner(&self, other: &DdVector) -> Complex64 {
        self.data.iter().zip(&other.data).map(|(a, b)| a.conj() * b).sum()
    }

    /// `self -= scale * other`.
    pub fn subtract_scaled(&mut self, scale: Complex64, other: &DdVector) {
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a -= scale * b;
        }
    }

    /// Lowest flat index holding the largest magnitude.
    pub fn argmax_energy(&self) -> usize {
        argmax_energy(self.data.iter().copied().enumerate())
    }
}

/// Index of the maximum `|z|^2` with ties broken towards the first entry.
pub(crate) fn argmax_energy(items: impl IntoIterator<Item = (usize, Complex64)>) -> usize {
    let mut best = (0, f64::NEG_INFINITY);
    for (i, z) in items {
        let e = z.norm_sqr();
        if e > best.1 {
            best = (i, e);
        }
    }
    best.0
}

impl Index<(usize, usize)> for DdVector {
    type Output = Complex64;

    fn index(&self, (l, k): (usize, usize)) -> &Complex64 {
        assert!(l < self.m && k < self.n, "({l}, {k}) outside {}x{}", self.m, self.n);
        &self.data[k * self.m + l]
    }
}

impl IndexMut<(usize, usize)> for DdVector {
    fn index_mut(&mut self, (l, k): (usize, usize)) -> &mut Complex64 {
        assert!(l < self.m && k < self.n, "({l}, {k}) outside {}x{}", self.m, self.n);
        &mut self.data[k * self.m + l]
    }
}

/// Sub-bin refinement factors along delay and Doppler.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RefinedGrid {
    m_tau: usize,
    n_nu: usize,
}

impl RefinedGrid {
    pub fn new(m_tau: usize, n_nu: usize) -> Result<Self> {
        if m_tau == 0 || n_nu == 0 {
            return Err(OtfsError::InvalidParams(format!(
                "refinements must be at least 1, got m_tau = {m_tau}, n_nu = {n_nu}"
            )));
        }
        Ok(Self { m_tau, n_nu })
    }

    pub fn m_tau(&self) -> usize {
        self.m_tau
    }

    pub fn n_nu(&self) -> usize {
        self.n_nu
    }

    /// Number of delay hypotheses per cell, `2 floor(m_tau / 2) + 1`.
    pub fn delay_points(&self) -> usize {
        2 * (self.m_tau / 2) + 1
    }

    /// Number of Doppler hypotheses per cell, `2 floor(n_nu / 2) + 1`.
    pub fn doppler_points(&self) -> usize {
        2 * (self.n_nu / 2) + 1
    }

    pub fn cardinality(&self) -> usize {
        self.delay_points() * self.doppler_points()
    }

    /// Raw delay hypotheses around cell `l` (may be negative for `l = 0`).
    pub fn delays(&self, l: i64, params: &FrameParams) -> Vec<f64> {
        offsets(self.m_tau)
            .map(|g| (l as f64 + g as f64 / self.m_tau as f64) * params.delay_resolution())
            .collect()
    }

    /// Signed Doppler hypotheses around cell `k`.
    pub fn dopplers(&self, k: i64, params: &FrameParams) -> Vec<f64> {
        offsets(self.n_nu)
            .map(|c| (k as f64 + c as f64 / self.n_nu as f64) * params.doppler_resolution())
            .collect()
    }

    /// Two-dimensional hypothesis set of cell `(l, k)`, delay-fastest, with
    /// delays clamped into `[0, T)`.
    pub fn points(&self, l: i64, k: i64, params: &FrameParams) -> Vec<(f64, f64)> {
        let delays: Vec<f64> = self
            .delays(l, params)
            .into_iter()
            .map(|t| wrap_delay(t, params))
            .collect();
        let mut points = Vec::with_capacity(self.cardinality());
        for nu in self.dopplers(k, params) {
            for &tau in &delays {
                points.push((tau, nu));
            }
        }
        points
    }
}

fn offsets(refinement: usize) -> impl Iterator<Item = i64> {
    let half = (refinement / 2) as i64;
    -half..=half
}

fn wrap_delay(tau: f64, params: &FrameParams) -> f64 {
    let period = params.symbol_period();
    if tau < 0.0 {
        0.0
    } else if tau >= period {
        tau - period
    } else {
        tau
    }
}

/// `Λ^{(l,k)}`: refined delay-Doppler points around cell `(l, k)`.
pub fn refined_grid_2d(l: i64, k: i64, grid: &RefinedGrid, params: &FrameParams) -> Vec<(f64, f64)> {
    grid.points(l, k, params)
}

/// `Λ_τ^{(l)}` before clamping.
pub fn refined_grid_tau(l: i64, m_tau: usize, params: &FrameParams) -> Result<Vec<f64>> {
    Ok(RefinedGrid::new(m_tau, 1)?.delays(l, params))
}

/// `Λ_ν^{(k)}`.
pub fn refined_grid_nu(k: i64, n_nu: usize, params: &FrameParams) -> Result<Vec<f64>> {
    Ok(RefinedGrid::new(1, n_nu)?.dopplers(k, params))
}

/// The `M_τ x N_ν` block of resource elements around the pilot where the
/// received pilot energy concentrates.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SupportRegion {
    m: usize,
    delay_bins: Vec<usize>,
    doppler_bins: Vec<usize>,
}

impl SupportRegion {
    /// Delay indices, starting at the pilot and wrapping modulo `M`.
    pub fn delay_bins(&self) -> &[usize] {
        &self.delay_bins
    }

    /// Doppler indices, centred on the pilot and wrapping modulo `N`.
    pub fn doppler_bins(&self) -> &[usize] {
        &self.doppler_bins
    }

    pub fn len(&self) -> usize {
        self.delay_bins.len() * self.doppler_bins.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// `(l, k)` pairs, Doppler-major.
    pub fn cells(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.doppler_bins
            .iter()
            .flat_map(move |&k| self.delay_bins.iter().map(move |&l| (l, k)))
    }

    pub fn flat_indices(&self) -> Vec<usize> {
        self.cells().map(|(l, k)| k * self.m + l).collect()
    }

    pub fn contains(&self, l: usize, k: usize) -> bool {
        self.delay_bins.contains(&l) && self.doppler_bins.contains(&k)
    }
}

/// Support region of the received pilot.
pub fn support_region(params: &FrameParams) -> SupportRegion {
    let (m, n) = (params.m(), params.n());
    let delay_bins = (0..params.delay_span())
        .map(|d| (params.pilot_delay_index() + d) % m)
        .collect();
    let half = (params.doppler_span() / 2) as i64;
    let doppler_bins = (-half..=half)
        .map(|d| (params.pilot_doppler_index() as i64 + d).rem_euclid(n as i64) as usize)
        .collect();
    SupportRegion { m, delay_bins, doppler_bins }
}
