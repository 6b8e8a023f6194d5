//! Operation counts of the iterative estimators and how they scale when the
//! refinement factors or the delay span are doubled.
//!
//! Predicted growth per detected path:
//! M-MLE `m_τ n_ν M_τ N_ν`, TSE `m_τ M_τ + n_ν N_ν + M_τ N_ν`.

use std::fmt;

use crate::dd_channel::pilot_response;
use crate::dd_core::{ChannelState, FrameParams};
use crate::error::{OtfsError, Result};
use crate::estimators::{mmle_estimate, tse, tse_estimate, EstimatorConfig, OpCounters};

/// Average work per iteration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationCost {
    pub hypotheses: f64,
    /// Scan plus inner-product elements.
    pub search: f64,
}

/// Counts at one setting.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ComplexityPoint {
    pub m_tau: usize,
    pub n_nu: usize,
    pub delay_span: usize,
    pub doppler_span: usize,
    pub mmle: IterationCost,
    pub tse: IterationCost,
    /// Inner-product elements of TSE's delay and Doppler steps at the first
    /// peak.
    pub tse_delay_step: f64,
    pub tse_doppler_step: f64,
}

impl ComplexityPoint {
    pub fn mmle_order(&self) -> f64 {
        (self.m_tau * self.n_nu * self.delay_span * self.doppler_span) as f64
    }

    pub fn tse_order(&self) -> f64 {
        (self.m_tau * self.delay_span + self.n_nu * self.doppler_span + self.delay_span * self.doppler_span) as f64
    }
}

fn per_iteration(counters: &OpCounters, iterations: usize) -> Result<IterationCost> {
    if iterations == 0 {
        return Err(OtfsError::InvalidParams("estimator ran no iterations; the test frame is empty".into()));
    }
    let it = iterations as f64;
    Ok(IterationCost { hypotheses: counters.hypothesis_evaluations as f64 / it, search: counters.search_cost() as f64 / it })
}

/// Runs both estimators on the noiseless pilot response of `channel`.
pub fn measure_complexity(channel: &ChannelState, params: &FrameParams, config: &EstimatorConfig) -> Result<ComplexityPoint> {
    let x = pilot_response(channel, params);
    let a = mmle_estimate(&x, config, params)?;
    let b = tse_estimate(&x, config, params)?;
    let peak = crate::dd_core::support_region(params)
        .cells()
        .max_by(|&p, &q| x[p].norm_sqr().total_cmp(&x[q].norm_sqr()))
        .ok_or_else(|| OtfsError::InvalidParams("empty support region".into()))?;
    let mut delay = OpCounters::default();
    let tau = tse::delay_step(&x, peak.1, peak.0, config, params, &mut delay);
    let mut doppler = OpCounters::default();
    tse::doppler_step(&x, peak.0, peak.1, tau, config, params, &mut doppler);
    Ok(ComplexityPoint {
        m_tau: config.m_tau,
        n_nu: config.n_nu,
        delay_span: params.delay_span(),
        doppler_span: params.doppler_span(),
        mmle: per_iteration(&a.counters, a.iterations_run)?,
        tse: per_iteration(&b.counters, b.iterations_run)?,
        tse_delay_step: delay.inner_product_elements as f64,
        tse_doppler_step: doppler.inner_product_elements as f64,
    })
}

/// Which setting was doubled.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Doubled {
    MTau,
    NNu,
    DelaySpan,
}

impl fmt::Display for Doubled {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::MTau => "m_tau",
            Self::NNu => "n_nu",
            Self::DelaySpan => "delay_span",
        })
    }
}

/// Measured against predicted growth of one estimator's search cost.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScalingCheck {
    pub estimator: &'static str,
    pub doubled: Doubled,
    pub measured: f64,
    pub predicted: f64,
}

impl ScalingCheck {
    /// `|measured / predicted - 1|`.
    pub fn relative_error(&self) -> f64 {
        (self.measured / self.predicted - 1.0).abs()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComplexityReport {
    pub base: ComplexityPoint,
    pub varied: Vec<(Doubled, ComplexityPoint)>,
}

impl ComplexityReport {
    pub fn checks(&self) -> Vec<ScalingCheck> {
        let b = &self.base;
        let mut out = Vec::new();
        for (d, p) in &self.varied {
            out.push(ScalingCheck {
                estimator: "mmle",
                doubled: *d,
                measured: p.mmle.search / b.mmle.search,
                predicted: p.mmle_order() / b.mmle_order(),
            });
            out.push(ScalingCheck {
                estimator: "tse",
                doubled: *d,
                measured: p.tse.search / b.tse.search,
                predicted: p.tse_order() / b.tse_order(),
            });
        }
        out
    }
}

impl fmt::Display for ComplexityReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "setting,m_tau,n_nu,delay_span,doppler_span,mmle_hypotheses,mmle_search,tse_hypotheses,tse_search")?;
        let row = |f: &mut fmt::Formatter<'_>, name: &str, p: &ComplexityPoint| {
            writeln!(
                f,
                "{name},{},{},{},{},{},{},{},{}",
                p.m_tau, p.n_nu, p.delay_span, p.doppler_span, p.mmle.hypotheses, p.mmle.search, p.tse.hypotheses, p.tse.search
            )
        };
        row(f, "base", &self.base)?;
        for (d, p) in &self.varied {
            row(f, &format!("double_{d}"), p)?;
        }
        writeln!(f)?;
        writeln!(f, "estimator,doubled,measured_ratio,predicted_ratio")?;
        for c in self.checks() {
            writeln!(f, "{},{},{:.4},{:.4}", c.estimator, c.doubled, c.measured, c.predicted)?;
        }
        Ok(())
    }
}

/// Counts at `config`, then with `m_τ`, `n_ν` and the delay span doubled in
/// turn. The delay span doubles by widening `τ_max` to `(2 M_τ - 1)` bins.
pub fn measure_scaling(channel: &ChannelState, params: &FrameParams, config: &EstimatorConfig) -> Result<ComplexityReport> {
    let base = measure_complexity(channel, params, config)?;
    let mut varied = Vec::with_capacity(3);
    let cfg = EstimatorConfig { m_tau: 2 * config.m_tau, ..*config };
    varied.push((Doubled::MTau, measure_complexity(channel, params, &cfg)?));
    let cfg = EstimatorConfig { n_nu: 2 * config.n_nu, ..*config };
    varied.push((Doubled::NNu, measure_complexity(channel, params, &cfg)?));
    let wide_tau = (2 * params.delay_span() - 1) as f64 * params.delay_resolution();
    let wide = FrameParams::new(params.m(), params.n(), params.delta_f(), wide_tau, params.nu_max())?
        .with_pilot(params.pilot_delay_index(), params.pilot_doppler_index())?
        .with_pilot_energy(params.pilot_energy())?;
    varied.push((Doubled::DelaySpan, measure_complexity(channel, &wide, config)?));
    Ok(ComplexityReport { base, varied })
}
