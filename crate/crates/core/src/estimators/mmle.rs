//! Modified maximum-likelihood estimator: every detected peak is refined by
//! an exhaustive search over the 2-D sub-bin grid of its cell.

use super::{argmax, cancel_loop, EstimatorConfig, OpCounters, PathEstimates, Scorer};
use crate::dd_core::{DdVector, FrameParams, RefinedGrid};
use crate::error::Result;

/// Runs M-MLE on a received pilot frame.
pub fn mmle_estimate(received: &DdVector, config: &EstimatorConfig, params: &FrameParams) -> Result<PathEstimates> {
    let grid = config.grid()?;
    cancel_loop(received, config, params, |residual, (l, k), counters| {
        refine_2d(residual, l, k, &grid, config.full_vectors, params, counters)
    })
}

pub(crate) fn refine_2d(
    residual: &DdVector,
    l: usize,
    k: usize,
    grid: &RefinedGrid,
    full: bool,
    params: &FrameParams,
    counters: &mut OpCounters,
) -> (f64, f64) {
    let (dl, dk) = params.cell_offset(l, k);
    let points: Vec<(f64, f64)> = grid
        .points(dl, dk, params)
        .into_iter()
        .map(|(tau, nu)| (params.clamp_delay(tau), nu))
        .collect();
    let scorer = Scorer::new(residual, params, full);
    counters.hypothesis_evaluations += points.len() as u64;
    counters.inner_product_elements += (points.len() * scorer.len()) as u64;
    let best = argmax(points.iter().map(|&(tau, nu)| scorer.score(tau, nu))).unwrap_or(0);
    points[best]
}
