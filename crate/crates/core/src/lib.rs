//! Joint slot-selection and transmit-power optimization for frame slotted
//! random access with a successive-interference-cancellation receiver.
//!
//! The crate is organized bottom-up:
//!
//! - [`model`]: scenario, activity, allocation, power and channel types;
//! - [`receiver`]: MRC SINR and hard/smoothed SIC decoding;
//! - [`objective`]: per-frame, exact and Monte-Carlo expected decoded counts;
//! - [`grad`]: analytic gradient of the smoothed objective;
//! - [`optim`]: ADAGRAD with simplex/box projections and the training loop;
//! - [`powerred`]: post-hoc transmit power reduction;
//! - [`baselines`]: ALOHA with structured power levels and greedy allocation;
//! - [`runner`]: experiments, metrics and result files.

pub mod baselines;
pub mod error;
pub mod grad;
pub mod model;
pub mod objective;
pub mod optim;
pub mod powerred;
pub mod receiver;
pub mod runner;

pub use error::{Error, Result};
pub use model::{
    compute_pmin, sample_activity, sample_channel, stream, ActivityVector, AllocationMatrix, ChannelMatrix,
    Network, PowerVector, Scenario, Stream,
};
pub use receiver::{order_by_received_power, sic_decode, sic_smooth, sinr, SicOutcome};
