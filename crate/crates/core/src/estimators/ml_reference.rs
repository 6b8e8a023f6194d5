//! Exhaustive joint maximum-likelihood search for one or two paths, used to
//! check the per-path decoupling of the iterative estimators on small frames.

use num_complex::Complex64;

use super::{PathEstimates, Termination};
use crate::dd_channel::a_column;
use crate::dd_core::{support_region, DdVector, FrameParams, RefinedGrid};
use crate::error::{OtfsError, Result};

/// Largest frame accepted by [`ml_reference`].
pub const MAX_FRAME: usize = 512;

/// Joint search over every one- or two-element subset of the refined grid
/// points of the pilot support region, maximizing `x^H A (A^H A)^{-1} A^H x`.
/// Gains solve the normal equations. Pairs with a numerically singular Gram
/// matrix are skipped.
pub fn ml_reference(received: &DdVector, params: &FrameParams, paths: usize, grid: &RefinedGrid) -> Result<PathEstimates> {
    if !(1..=2).contains(&paths) {
        return Err(OtfsError::InvalidParams(format!("joint search supports 1 or 2 paths, got {paths}")));
    }
    if params.mn() > MAX_FRAME {
        return Err(OtfsError::InvalidParams(format!(
            "joint search is limited to MN <= {MAX_FRAME}, got {}",
            params.mn()
        )));
    }
    if received.m() != params.m() || received.n() != params.n() {
        return Err(OtfsError::DimensionMismatch { expected: params.mn(), got: received.len() });
    }

    let candidates = candidate_points(params, grid);
    let columns: Vec<DdVector> = candidates.iter().map(|&(t, v)| a_column(t, v, params).a).collect();
    let proj: Vec<Complex64> = columns.iter().map(|a| a.inner(received)).collect();
    let norms: Vec<f64> = columns.iter().map(DdVector::energy).collect();
    let total = received.energy();
    let scale = params.mn() as f64 * params.pilot_energy();
    let scale = if scale > 0.0 { scale } else { 1.0 };

    let mut out = PathEstimates::empty();
    out.residual_energies.push(total / scale);
    out.counters.hypothesis_evaluations = match paths {
        1 => candidates.len() as u64,
        _ => (candidates.len() * candidates.len().saturating_sub(1) / 2) as u64,
    };

    let mut chosen: Vec<(usize, Complex64)> = Vec::new();
    let mut best_value = f64::NEG_INFINITY;
    if paths == 1 {
        for i in 0..candidates.len() {
            if norms[i] == 0.0 {
                continue;
            }
            let value = proj[i].norm_sqr() / norms[i];
            if value > best_value {
                best_value = value;
                chosen = vec![(i, proj[i] / norms[i])];
            }
        }
    } else {
        for i in 0..candidates.len() {
            for j in i + 1..candidates.len() {
                let gij = columns[i].inner(&columns[j]);
                let det = norms[i] * norms[j] - gij.norm_sqr();
                if det <= 1e-12 * norms[i] * norms[j] {
                    continue;
                }
                let (bi, bj) = (proj[i], proj[j]);
                let value = (norms[j] * bi.norm_sqr() + norms[i] * bj.norm_sqr() - 2.0 * (bi.conj() * gij * bj).re) / det;
                if value > best_value {
                    best_value = value;
                    let hi = (norms[j] * bi - gij * bj) / det;
                    let hj = (norms[i] * bj - gij.conj() * bi) / det;
                    chosen = vec![(i, hi), (j, hj)];
                }
            }
        }
    }

    chosen.sort_by(|a, b| b.1.norm_sqr().total_cmp(&a.1.norm_sqr()));
    for (i, h) in &chosen {
        out.h_hat.push(*h);
        out.tau_hat.push(candidates[*i].0);
        out.nu_hat.push(candidates[*i].1);
    }
    out.iterations_run = chosen.len();
    if !chosen.is_empty() {
        out.residual_energies.push(((total - best_value) / scale).max(0.0));
    }
    out.terminated_by = Termination::Exhausted;
    Ok(out)
}

/// Distinct refined grid points over every cell of the pilot support region,
/// with delays clamped to `[0, τ_max]`.
pub fn candidate_points(params: &FrameParams, grid: &RefinedGrid) -> Vec<(f64, f64)> {
    let region = support_region(params);
    let mut seen: Vec<(f64, f64)> = Vec::new();
    let tol_tau = 1e-9 * params.delay_resolution();
    let tol_nu = 1e-9 * params.doppler_resolution();
    for (l, k) in region.cells() {
        let (dl, dk) = params.cell_offset(l, k);
        for (tau, nu) in grid.points(dl, dk, params) {
            let tau = params.clamp_delay(tau);
            if !seen.iter().any(|&(t, v)| (t - tau).abs() <= tol_tau && (v - nu).abs() <= tol_nu) {
                seen.push((tau, nu));
            }
        }
    }
    seen
}
