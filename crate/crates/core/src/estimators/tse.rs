//! Two-step estimator: the delay is searched on the peak's delay column with
//! the Doppler fixed at the cell centre, then the Doppler is searched on the
//! peak's Doppler row with that delay.

use num_complex::Complex64;

use super::{argmax, cancel_loop, EstimatorConfig, OpCounters, PathEstimates};
use crate::dd_channel::{doppler_kernel, PathKernel};
use crate::dd_core::{support_region, DdVector, FrameParams};
use crate::error::Result;

/// Runs TSE on a received pilot frame.
pub fn tse_estimate(received: &DdVector, config: &EstimatorConfig, params: &FrameParams) -> Result<PathEstimates> {
    config.validate()?;
    cancel_loop(received, config, params, |residual, (l, k), counters| {
        let tau = delay_step(residual, k, l, config, params, counters);
        let nu = doppler_step(residual, l, k, tau, config, params, counters);
        (tau, nu)
    })
}

/// Delay estimate for the peak at `(l_peak, k_dd)`.
pub fn tse_delay_step(residual: &DdVector, k_dd: usize, l_peak: usize, config: &EstimatorConfig, params: &FrameParams) -> f64 {
    delay_step(residual, k_dd, l_peak, config, params, &mut OpCounters::default())
}

/// Doppler estimate for the peak at `(l_peak, k_dd)` given the delay estimate.
pub fn tse_doppler_step(
    residual: &DdVector,
    l_peak: usize,
    k_dd: usize,
    tau_hat: f64,
    config: &EstimatorConfig,
    params: &FrameParams,
) -> f64 {
    doppler_step(residual, l_peak, k_dd, tau_hat, config, params, &mut OpCounters::default())
}

pub(crate) fn delay_step(
    residual: &DdVector,
    k_dd: usize,
    l_peak: usize,
    config: &EstimatorConfig,
    params: &FrameParams,
    counters: &mut OpCounters,
) -> f64 {
    let (dl, dk) = params.cell_offset(l_peak, k_dd);
    let grid = config.grid().expect("validated config");
    let nu = dk as f64 * params.doppler_resolution();
    let rows: Vec<usize> = if config.full_vectors {
        (0..params.m()).collect()
    } else {
        support_region(params).delay_bins().to_vec()
    };
    let column = residual.delay_column(k_dd);
    let d: Vec<Complex64> = rows.iter().map(|&l| column[l]).collect();
    let (lp, kp) = (params.pilot_delay_index(), params.pilot_doppler_index());
    let x = nu * params.symbol_period();
    let doppler = doppler_kernel((k_dd as f64 - kp as f64) / params.n() as f64 - x, params.n());

    let taus: Vec<f64> = grid.delays(dl, params).into_iter().map(|t| params.clamp_delay(t)).collect();
    counters.hypothesis_evaluations += taus.len() as u64;
    counters.inner_product_elements += (taus.len() * rows.len()) as u64;
    let scores = taus.iter().map(|&tau| {
        let kernel = PathKernel::new(tau, nu, params);
        let g = kernel.delay_response_at(lp, kp, &rows);
        let scale = kernel.prefactor() * doppler * params.pilot_amplitude();
        let inner: Complex64 = g.iter().zip(&d).map(|(a, r)| (a * scale).conj() * r).sum();
        inner.norm_sqr()
    });
    taus[argmax(scores).unwrap_or(0)]
}

pub(crate) fn doppler_step(
    residual: &DdVector,
    l_peak: usize,
    k_dd: usize,
    tau_hat: f64,
    config: &EstimatorConfig,
    params: &FrameParams,
    counters: &mut OpCounters,
) -> f64 {
    let (_, dk) = params.cell_offset(l_peak, k_dd);
    let grid = config.grid().expect("validated config");
    let cols: Vec<usize> = if config.full_vectors {
        (0..params.n()).collect()
    } else {
        support_region(params).doppler_bins().to_vec()
    };
    let c: Vec<Complex64> = cols.iter().map(|&k| residual[(l_peak, k)]).collect();
    let (lp, kp) = (params.pilot_delay_index(), params.pilot_doppler_index());
    let n = params.n() as f64;

    let nus = grid.dopplers(dk, params);
    counters.hypothesis_evaluations += nus.len() as u64;
    counters.inner_product_elements += (nus.len() * cols.len()) as u64;
    let scores = nus.iter().map(|&nu| {
        let kernel = PathKernel::new(tau_hat, nu, params);
        let g = kernel.delay_response_at(lp, kp, &[l_peak])[0];
        let scale = kernel.prefactor() * g * params.pilot_amplitude();
        let x = nu * params.symbol_period();
        let inner: Complex64 = cols
            .iter()
            .zip(&c)
            .map(|(&k, r)| (scale * doppler_kernel((k as f64 - kp as f64) / n - x, params.n())).conj() * r)
            .sum();
        inner.norm_sqr()
    });
    nus[argmax(scores).unwrap_or(0)]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dd_channel::a_column;
    use crate::estimators::mmle_estimate;

    fn frame() -> FrameParams {
        FrameParams::new(32, 16, 15e3, 4.0 / (32.0 * 15e3), 2.0 * 15e3 / 16.0)
            .unwrap()
            .with_pilot_energy(10.0)
            .unwrap()
    }

    fn received(p: &FrameParams, tau: f64, nu: f64, h: Complex64) -> DdVector {
        let mut x = a_column(tau, nu, p).a;
        x.as_mut_slice().iter_mut().for_each(|v| *v *= h);
        x
    }

    #[test]
    fn on_grid_delay_at_cell_doppler_is_exact() {
        let p = frame();
        let tau = (3.0 - 1.0 / 6.0) * p.delay_resolution();
        let nu = -p.doppler_resolution();
        let x = received(&p, tau, nu, Complex64::new(1.0, 0.0));
        let (l, k) = (p.pilot_delay_index() + 3, p.pilot_doppler_index() - 1);
        let cfg = EstimatorConfig::default();
        assert_eq!(tse_delay_step(&x, k, l, &cfg, &p), tau);
    }

    #[test]
    fn on_grid_doppler_with_integer_delay_is_exact() {
        let p = frame();
        let tau = 2.0 * p.delay_resolution();
        let nu = (1.0 + 2.0 / 6.0) * p.doppler_resolution();
        let x = received(&p, tau, nu, Complex64::new(0.0, 1.0));
        let (l, k) = (p.pilot_delay_index() + 2, p.pilot_doppler_index() + 1);
        let got = tse_doppler_step(&x, l, k, tau, &EstimatorConfig::default(), &p);
        assert!((got - nu).abs() < 1e-9);
    }

    #[test]
    fn single_hypothesis_grids_return_cell_centres() {
        let p = frame();
        let x = received(&p, 1.3 * p.delay_resolution(), 0.7 * p.doppler_resolution(), Complex64::new(1.0, 0.0));
        let cfg = EstimatorConfig { m_tau: 1, n_nu: 1, ..Default::default() };
        let (l, k) = (p.pilot_delay_index() + 1, p.pilot_doppler_index() + 1);
        assert_eq!(tse_delay_step(&x, k, l, &cfg, &p), p.delay_resolution());
        let nu = tse_doppler_step(&x, l, k, p.delay_resolution(), &cfg, &p);
        assert!((nu - p.doppler_resolution()).abs() < 1e-12);
        let wrapped = tse_doppler_step(&x, l, p.pilot_doppler_index() + 15, 0.0, &cfg, &p);
        assert!((wrapped + p.doppler_resolution()).abs() < 1e-12);
    }

    #[test]
    fn agrees_with_mmle_on_exact_grid_path() {
        let p = frame();
        let tau = (1.0 + 1.0 / 6.0) * p.delay_resolution();
        let nu = p.doppler_resolution();
        let x = received(&p, tau, nu, Complex64::new(0.8, 0.6));
        let cfg = EstimatorConfig::default();
        let a = tse_estimate(&x, &cfg, &p).unwrap();
        let b = mmle_estimate(&x, &cfg, &p).unwrap();
        assert_eq!(a.tau_hat[0], b.tau_hat[0]);
        assert_eq!(a.nu_hat[0], b.nu_hat[0]);
        assert!((a.h_hat[0] - b.h_hat[0]).norm() < 1e-12);
    }

    #[test]
    fn counts_fewer_operations_than_mmle() {
        let p = frame();
        let x = received(&p, 1.37 * p.delay_resolution(), 0.61 * p.doppler_resolution(), Complex64::new(1.0, 0.0));
        let cfg = EstimatorConfig { max_iterations: 3, ..Default::default() };
        let a = tse_estimate(&x, &cfg, &p).unwrap();
        let b = mmle_estimate(&x, &cfg, &p).unwrap();
        assert_eq!(a.iterations_run, b.iterations_run);
        assert!(a.counters.search_cost() < b.counters.search_cost());
        assert!(a.counters.hypothesis_evaluations < b.counters.hypothesis_evaluations);
    }
}
