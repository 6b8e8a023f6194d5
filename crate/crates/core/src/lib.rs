//! Delay-Doppler channel estimation for OTFS with fractional delay and
//! Doppler.
//!
//! The closed-form effective channel for rectangular pulses lives in
//! [`dd_channel`], a sampled-waveform reference chain in [`waveform_oracle`],
//! the iterative M-MLE and TSE estimators (plus an impulse baseline and an
//! exhaustive joint search) in [`estimators`], random aircraft-arrival
//! channels in [`scenarios`] and the Monte Carlo NMSE harness in [`harness`].

pub use num_complex::Complex64;

pub mod dd_channel;
pub mod dd_core;
pub mod error;
pub mod estimators;
pub mod harness;
pub mod scenarios;
pub mod waveform_oracle;

pub use dd_channel::{a_column, assemble_g, pilot_response, AssembleOptions, EffectiveChannelMatrix, PilotColumn};
pub use dd_core::{support_region, ChannelPath, ChannelState, DdVector, FrameParams, RefinedGrid, SupportRegion};
pub use error::{OtfsError, Result};
pub use estimators::{
    impulse_baseline, ml_reference, mmle_estimate, tse_estimate, EstimatorConfig, ImpulseConfig, OpCounters, PathEstimates,
    ScanRegion, Termination,
};
pub use harness::{nmse, nmse_paths, psnr_to_pilot_energy, run_sweep, EstimatorKind, SweepConfig, SweepRecord};
pub use scenarios::{aircraft_channel, AircraftScenarioConfig};
