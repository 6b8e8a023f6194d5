//! Agreement between the sampled-waveform chain and the closed-form channel
//! as the oversampling factor grows.

use std::fmt;

use crate::dd_channel::{assemble_g, AssembleOptions};
use crate::dd_core::{ChannelState, DdVector, FrameParams};
use crate::error::{OtfsError, Result};
use crate::waveform_oracle::oracle_end_to_end;

/// Relative mismatch at one oversampling factor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleRow {
    pub q: usize,
    pub mismatch: f64,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleReport {
    pub rows: Vec<OracleRow>,
    /// Mismatch strictly decreases along increasing `Q`, or is already at
    /// round-off level.
    pub monotone: bool,
}

/// Below this the chain is exact and further decrease is noise.
pub const EXACT_LEVEL: f64 = 1e-9;

impl OracleReport {
    pub fn mismatch_at(&self, q: usize) -> Option<f64> {
        self.rows.iter().find(|r| r.q == q).map(|r| r.mismatch)
    }
}

impl fmt::Display for OracleReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "q,mismatch,seconds")?;
        for r in &self.rows {
            writeln!(f, "{},{:.6e},{:.3}", r.q, r.mismatch, r.seconds)?;
        }
        write!(f, "monotone,{}", self.monotone)
    }
}

/// `‖oracle(x) - G x‖ / ‖G x‖` for a noiseless chain.
pub fn oracle_mismatch(x: &DdVector, channel: &ChannelState, params: &FrameParams, q: usize) -> Result<f64> {
    let g = assemble_g(channel, params, AssembleOptions::default())?;
    mismatch_against(&g.apply(x)?, x, channel, params, q)
}

fn mismatch_against(want: &DdVector, x: &DdVector, channel: &ChannelState, params: &FrameParams, q: usize) -> Result<f64> {
    let got = oracle_end_to_end(x, channel, params, q, None)?;
    let reference = want.energy();
    if reference == 0.0 {
        return Err(OtfsError::ZeroReference);
    }
    let diff: f64 = got.as_slice().iter().zip(want.as_slice()).map(|(a, b)| (a - b).norm_sqr()).sum();
    Ok((diff / reference).sqrt())
}

/// Mismatch for each `Q` (sorted ascending) with input frame `x`.
pub fn run_oracle_validation(
    x: &DdVector,
    channel: &ChannelState,
    params: &FrameParams,
    qs: &[usize],
) -> Result<OracleReport> {
    if qs.is_empty() || qs.contains(&0) {
        return Err(OtfsError::InvalidParams("oversampling factors must be positive".into()));
    }
    let mut qs = qs.to_vec();
    qs.sort_unstable();
    qs.dedup();
    let want = assemble_g(channel, params, AssembleOptions::default())?.apply(x)?;
    let mut rows = Vec::with_capacity(qs.len());
    for q in qs {
        let start = std::time::Instant::now();
        let mismatch = mismatch_against(&want, x, channel, params, q)?;
        rows.push(OracleRow { q, mismatch, seconds: start.elapsed().as_secs_f64() });
    }
    let monotone = rows
        .windows(2)
        .all(|w| w[1].mismatch < w[0].mismatch || w[0].mismatch.max(w[1].mismatch) <= EXACT_LEVEL);
    Ok(OracleReport { rows, monotone })
}
