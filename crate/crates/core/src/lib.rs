//! Near-field beam alignment for partially-connected hybrid XL-MIMO arrays.
//!
//! The crate covers channel synthesis ([`array`], [`channel`]), hybrid-field
//! codebooks ([`codebook`]), subarray-approximated hybrid combining
//! ([`combining`]), two-stage beam training ([`training`]), closed-form beam
//! refinement from subarray phase shifts ([`refinement`]), Kalman-filtered
//! beam tracking ([`tracking`]) and the Monte Carlo experiment drivers
//! ([`harness`]).

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod array;
pub mod channel;
pub mod codebook;
pub mod combining;
pub mod config;
pub mod cvec;
pub mod error;
pub mod harness;
pub mod refinement;
pub mod seed;
pub mod tracking;
pub mod training;

pub use array::{
    element_distance, far_steering, polar_to_cartesian, steering, steering_near,
    steering_quadratic, ArrayConfig, PathParams, QuadraticPhase, Range,
};
pub use channel::{noise_variance, receive, receive_rf, sample_channel, ChannelRealization, Scenario};
pub use codebook::{
    build_far_codebook, build_hybrid_codebook, build_near_codebook, validate_quantization,
    CodebookLayout, CodewordKind, CodewordParams, HybridCodebook, QuantizationReport,
    SubarrayCodebook,
};
pub use combining::{
    design_hybrid, gain_loss_bound, hybrid_beam_gain, quantize_pointing, subarray_pointing,
    AnalogCombiner, CombinerPair,
};
pub use config::RunConfig;
pub use error::{Error, Result};
pub use harness::{beamforming_gain, Scheme, TrainingContext, TrackingSetup};
pub use refinement::{run_brpss, RefinementOutput};
pub use tracking::{TrackState, TrackerConfig, TrackingLog, Trajectory};
pub use training::{ThbtPlan, TrainingResult};
