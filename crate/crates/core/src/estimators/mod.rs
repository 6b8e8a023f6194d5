//! Pilot-based estimators of the path parameters `(h, τ, ν)`.
//!
//! [`mmle`] and [`tse`] share the successive-cancellation loop in this module
//! and differ only in how a detected peak is turned into a `(τ, ν)` estimate.

pub mod impulse;
pub mod ml_reference;
pub mod mmle;
pub mod tse;

use num_complex::Complex64;

pub use impulse::{impulse_baseline, ImpulseConfig};
pub use ml_reference::ml_reference;
pub use mmle::mmle_estimate;
pub use tse::{tse_delay_step, tse_doppler_step, tse_estimate};

use crate::dd_channel::{a_column, a_column_truncated, assemble_from_paths, AssembleOptions, EffectiveChannelMatrix, PathKernel};
use crate::dd_core::{support_region, ChannelPath, DdVector, FrameParams, RefinedGrid, SupportRegion};
use crate::error::{OtfsError, Result};

/// Why an estimator stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    /// The iteration budget was used up.
    MaxIterations,
    /// Consecutive normalized residual energies differed by at most ε, or the
    /// residual vanished.
    Tolerance,
    /// Non-iterative estimators: every candidate was examined.
    Exhausted,
}

/// Work counters, in complex multiply-accumulate elements.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct OpCounters {
    /// Elements inspected by peak searches.
    pub scan_elements: u64,
    /// `(τ, ν)` hypotheses scored.
    pub hypothesis_evaluations: u64,
    /// Elements entering hypothesis inner products.
    pub inner_product_elements: u64,
    /// Elements touched by gain estimation and cancellation.
    pub cancellation_elements: u64,
}

impl OpCounters {
    /// Peak search plus hypothesis scoring, the part that scales with the
    /// refinement factors and the support region.
    pub fn search_cost(&self) -> u64 {
        self.scan_elements + self.inner_product_elements
    }
}

/// Estimated paths with the residual-energy trace of the run.
#[derive(Debug, Clone, PartialEq)]
pub struct PathEstimates {
    pub h_hat: Vec<Complex64>,
    pub tau_hat: Vec<f64>,
    pub nu_hat: Vec<f64>,
    /// Normalized residual energy before the first and after every iteration.
    pub residual_energies: Vec<f64>,
    pub iterations_run: usize,
    pub terminated_by: Termination,
    /// Iterations whose `(τ, ν)` repeated an earlier estimate; their gain was
    /// added to that entry, so `len() + merges == iterations_run`.
    pub merges: usize,
    /// Detected peaks outside the pilot support region.
    pub off_support_peaks: usize,
    pub counters: OpCounters,
}

impl PathEstimates {
    pub fn empty() -> Self {
        Self {
            h_hat: Vec::new(),
            tau_hat: Vec::new(),
            nu_hat: Vec::new(),
            residual_energies: Vec::new(),
            iterations_run: 0,
            terminated_by: Termination::Exhausted,
            merges: 0,
            off_support_peaks: 0,
            counters: OpCounters::default(),
        }
    }

    pub fn len(&self) -> usize {
        self.h_hat.len()
    }

    pub fn is_empty(&self) -> bool {
        self.h_hat.is_empty()
    }

    pub fn paths(&self) -> Vec<ChannelPath> {
        self.h_hat
            .iter()
            .zip(&self.tau_hat)
            .zip(&self.nu_hat)
            .map(|((&h, &tau), &nu)| ChannelPath::new(h, tau, nu))
            .collect()
    }

    fn push_or_merge(&mut self, h: Complex64, tau: f64, nu: f64) {
        if let Some(i) = self.tau_hat.iter().zip(&self.nu_hat).position(|(&t, &v)| t == tau && v == nu) {
            self.h_hat[i] += h;
            self.merges += 1;
        } else {
            self.h_hat.push(h);
            self.tau_hat.push(tau);
            self.nu_hat.push(nu);
        }
    }
}

/// Where the per-iteration peak search looks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScanRegion {
    /// Only the `M_τ x N_ν` pilot support region.
    Support,
    /// The whole frame; peaks outside the support region are counted.
    Full,
}

/// Settings shared by the iterative estimators.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EstimatorConfig {
    pub m_tau: usize,
    pub n_nu: usize,
    /// Stop once consecutive normalized residual energies differ by at most
    /// this much.
    pub epsilon: f64,
    pub max_iterations: usize,
    pub scan: ScanRegion,
    /// Score hypotheses on full-length columns instead of the support region.
    pub full_vectors: bool,
    /// Residual-energy normalizer; `None` uses `M N E_p`.
    pub rx_pilot_power: Option<f64>,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        Self {
            m_tau: 6,
            n_nu: 6,
            epsilon: 1e-4,
            max_iterations: 15,
            scan: ScanRegion::Support,
            full_vectors: false,
            rx_pilot_power: None,
        }
    }
}

impl EstimatorConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon.is_finite() && self.epsilon > 0.0) {
            return Err(OtfsError::InvalidParams(format!("epsilon must be positive, got {}", self.epsilon)));
        }
        if self.max_iterations == 0 {
            return Err(OtfsError::InvalidParams("max_iterations must be at least 1".into()));
        }
        if let Some(p) = self.rx_pilot_power {
            if !(p.is_finite() && p > 0.0) {
                return Err(OtfsError::InvalidParams(format!("pilot power normalizer must be positive, got {p}")));
            }
        }
        RefinedGrid::new(self.m_tau, self.n_nu)?;
        Ok(())
    }

    pub fn grid(&self) -> Result<RefinedGrid> {
        RefinedGrid::new(self.m_tau, self.n_nu)
    }

    fn normalizer(&self, params: &FrameParams) -> f64 {
        self.rx_pilot_power.unwrap_or(params.mn() as f64 * params.pilot_energy())
    }
}

/// Pilot-only frame: `sqrt(M N E_p)` at `(l_p, k_p)`, zero elsewhere.
pub fn make_pilot_frame(params: &FrameParams) -> DdVector {
    let mut x = DdVector::zeros(params.m(), params.n());
    x[(params.pilot_delay_index(), params.pilot_doppler_index())] = Complex64::new(params.pilot_amplitude(), 0.0);
    x
}

/// `|a(τ, ν)^H r|^2` over the pilot support region.
pub fn objective_phi(tau: f64, nu: f64, residual: &DdVector, params: &FrameParams) -> f64 {
    a_column_truncated(tau, nu, params).a.inner(residual).norm_sqr()
}

/// `|a(τ, ν)^H r|^2` over the full frame.
pub fn objective_phi_full(tau: f64, nu: f64, residual: &DdVector, params: &FrameParams) -> f64 {
    a_column(tau, nu, params).a.inner(residual).norm_sqr()
}

/// Least-squares gain of `a(τ, ν)` in `r`, `a^H r / ‖a‖^2`.
///
/// `‖a‖^2` is within a fraction of a percent of `M N E_p` for paths inside
/// the support region, but dividing by the exact norm keeps the residual
/// orthogonal to the cancelled column.
pub fn gain_estimate(tau: f64, nu: f64, residual: &DdVector, params: &FrameParams) -> Complex64 {
    let a = a_column(tau, nu, params).a;
    let energy = a.energy();
    if energy == 0.0 {
        return Complex64::new(0.0, 0.0);
    }
    a.inner(residual) / energy
}

/// `Ĝ` rebuilt from estimated paths; all zero when there are none.
pub fn reconstruct_g(estimates: &PathEstimates, params: &FrameParams) -> Result<EffectiveChannelMatrix> {
    if estimates.is_empty() {
        return Ok(EffectiveChannelMatrix::zeros(params.m(), params.n()));
    }
    assemble_from_paths(&estimates.paths(), params, AssembleOptions::default())
}

/// Scores `(τ, ν)` hypotheses against a fixed residual on the pilot support
/// region or the whole frame.
pub(crate) struct Scorer<'a> {
    params: &'a FrameParams,
    region: Option<SupportRegion>,
    residual: Vec<Complex64>,
    amplitude: f64,
}

impl<'a> Scorer<'a> {
    pub(crate) fn new(residual: &DdVector, params: &'a FrameParams, full: bool) -> Self {
        let (region, residual) = if full {
            (None, residual.as_slice().to_vec())
        } else {
            let region = support_region(params);
            let values = region.cells().map(|c| residual[c]).collect();
            (Some(region), values)
        };
        Self { params, region, residual, amplitude: params.pilot_amplitude() }
    }

    pub(crate) fn len(&self) -> usize {
        self.residual.len()
    }

    pub(crate) fn score(&self, tau: f64, nu: f64) -> f64 {
        let kernel = PathKernel::new(tau, nu, self.params);
        let (lp, kp) = (self.params.pilot_delay_index(), self.params.pilot_doppler_index());
        let inner: Complex64 = match &self.region {
            Some(region) => kernel
                .column_on(lp, kp, region)
                .iter()
                .zip(&self.residual)
                .map(|(a, r)| a.conj() * r)
                .sum(),
            None => kernel.column(lp, kp).as_slice().iter().zip(&self.residual).map(|(a, r)| a.conj() * r).sum(),
        };
        (inner * self.amplitude).norm_sqr()
    }
}

/// First index of the largest score (lowest index wins ties).
pub(crate) fn argmax(scores: impl IntoIterator<Item = f64>) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, s) in scores.into_iter().enumerate() {
        if best.is_none_or(|(_, b)| s > b) {
            best = Some((i, s));
        }
    }
    best.map(|(i, _)| i)
}

/// Successive peak detection, parameter search, gain estimation and
/// cancellation. `search` maps the residual and the detected peak `(l, k)` to
/// a `(τ, ν)` estimate.
pub(crate) fn cancel_loop(
    received: &DdVector,
    config: &EstimatorConfig,
    params: &FrameParams,
    mut search: impl FnMut(&DdVector, (usize, usize), &mut OpCounters) -> (f64, f64),
) -> Result<PathEstimates> {
    config.validate()?;
    if received.m() != params.m() || received.n() != params.n() {
        return Err(OtfsError::DimensionMismatch { expected: params.mn(), got: received.len() });
    }
    let norm = config.normalizer(params);
    let region = support_region(params);
    let mut scan_cells: Vec<usize> = match config.scan {
        ScanRegion::Support => region.flat_indices(),
        ScanRegion::Full => (0..params.mn()).collect(),
    };
    scan_cells.sort_unstable();

    let mut out = PathEstimates::empty();
    let mut residual = received.clone();
    out.residual_energies.push(residual.energy() / norm);
    out.terminated_by = Termination::MaxIterations;

    for t in 1..=config.max_iterations {
        if residual.energy() == 0.0 {
            out.terminated_by = Termination::Tolerance;
            break;
        }
        let data = residual.as_slice();
        let best = crate::dd_core::argmax_energy(scan_cells.iter().map(|&i| (i, data[i])));
        out.counters.scan_elements += scan_cells.len() as u64;
        let peak = (best % params.m(), best / params.m());
        if !region.contains(peak.0, peak.1) {
            out.off_support_peaks += 1;
        }

        let (tau, nu) = search(&residual, peak, &mut out.counters);

        let a = a_column(tau, nu, params).a;
        let energy = a.energy();
        let h = if energy > 0.0 { a.inner(&residual) / energy } else { Complex64::new(0.0, 0.0) };
        residual.subtract_scaled(h, &a);
        out.counters.cancellation_elements += 2 * params.mn() as u64;

        out.push_or_merge(h, tau, nu);
        out.iterations_run = t;
        out.residual_energies.push(residual.energy() / norm);

        let e = &out.residual_energies;
        if (e[t] - e[t - 1]).abs() <= config.epsilon {
            out.terminated_by = Termination::Tolerance;
            break;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dd_core::ChannelState;

    fn frame() -> FrameParams {
        FrameParams::new(16, 8, 15e3, 3.0 / (16.0 * 15e3), 2.0 * 15e3 / 8.0)
            .unwrap()
            .with_pilot_energy(4.0)
            .unwrap()
    }

    #[test]
    fn pilot_frame_layout() {
        let p = FrameParams::new(4, 2, 1.0, 0.0, 0.0).unwrap();
        let x = make_pilot_frame(&p);
        let nonzero: Vec<_> = x.as_slice().iter().enumerate().filter(|(_, v)| v.norm() > 0.0).collect();
        assert_eq!(nonzero.len(), 1);
        assert_eq!(nonzero[0].0, p.pilot_doppler_index() * 4 + p.pilot_delay_index());
        assert!((nonzero[0].1.re - 8f64.sqrt()).abs() < 1e-15);

        let q = frame();
        assert!((make_pilot_frame(&q).energy() - q.mn() as f64 * q.pilot_energy()).abs() < 1e-9);
    }

    #[test]
    fn phi_of_own_column_is_norm_squared_squared() {
        let p = frame();
        let a = a_column(1.3 / (16.0 * 15e3), 700.0, &p).a;
        let phi = objective_phi_full(1.3 / (16.0 * 15e3), 700.0, &a, &p);
        assert!((phi - a.energy().powi(2)).abs() <= 1e-9 * phi);
    }

    #[test]
    fn phi_of_orthogonal_residual_is_zero() {
        let p = frame();
        let (tau, nu) = (1.3 / (16.0 * 15e3), 700.0);
        let a = a_column(tau, nu, &p).a;
        let mut r = DdVector::from_fn(16, 8, |l, k| Complex64::new(l as f64, k as f64 - 2.0));
        let c = a.inner(&r) / a.energy();
        r.subtract_scaled(c, &a);
        assert!(objective_phi_full(tau, nu, &r, &p) < 1e-18 * a.energy().powi(2));
    }

    #[test]
    fn gain_of_scaled_column_is_exact() {
        let p = frame();
        let (tau, nu) = (2.2 / (16.0 * 15e3), -900.0);
        let h = Complex64::new(0.3, -0.8);
        let mut r = a_column(tau, nu, &p).a;
        r.as_mut_slice().iter_mut().for_each(|v| *v *= h);
        assert!((gain_estimate(tau, nu, &r, &p) - h).norm() < 1e-12);
        assert_eq!(gain_estimate(tau, nu, &DdVector::zeros(16, 8), &p), Complex64::new(0.0, 0.0));
    }

    #[test]
    fn scorer_matches_truncated_objective() {
        let p = frame();
        let ch = ChannelState::single(Complex64::new(1.0, 0.0), 1.7 / (16.0 * 15e3), 1100.0).unwrap();
        let x = a_column(ch.paths()[0].tau, ch.paths()[0].nu, &p).a;
        let scorer = Scorer::new(&x, &p, false);
        let full = Scorer::new(&x, &p, true);
        for (tau, nu) in [(1.5 / (16.0 * 15e3), 1000.0), (0.0, -500.0)] {
            let want = objective_phi(tau, nu, &x, &p);
            assert!((scorer.score(tau, nu) - want).abs() <= 1e-9 * want.max(1.0));
            let want_full = objective_phi_full(tau, nu, &x, &p);
            assert!((full.score(tau, nu) - want_full).abs() <= 1e-9 * want_full.max(1.0));
        }
    }

    #[test]
    fn argmax_takes_first_of_ties() {
        assert_eq!(argmax([1.0, 3.0, 3.0, 2.0]), Some(1));
        assert_eq!(argmax(Vec::<f64>::new()), None);
    }

    #[test]
    fn empty_estimates_reconstruct_to_zero() {
        let p = FrameParams::new(4, 2, 1.0, 0.0, 0.0).unwrap();
        let g = reconstruct_g(&PathEstimates::empty(), &p).unwrap();
        assert_eq!(g.frobenius_norm_sq(), 0.0);
    }

    #[test]
    fn config_validation() {
        assert!(EstimatorConfig::default().validate().is_ok());
        assert!(EstimatorConfig { epsilon: 0.0, ..Default::default() }.validate().is_err());
        assert!(EstimatorConfig { max_iterations: 0, ..Default::default() }.validate().is_err());
        assert!(EstimatorConfig { m_tau: 0, ..Default::default() }.validate().is_err());
    }
}
