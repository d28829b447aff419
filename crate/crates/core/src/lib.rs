//! Convolution operators as explicit linear maps, plus the measurement
//! machinery to quantify how well grouped variants approximate a standard
//! (dense) convolution.
//!
//! The crate is organized around five pieces:
//!
//! * [`signal`] — multi-channel 1-D signals in channel-major layout.
//! * [`conv`] — standard, grouped, and balanced grouped convolution
//!   operators with explicit forward application and block extraction.
//! * [`sampling`] — seeded, stream-separated random inputs and weight
//!   initializations used by the experiments.
//! * [`estimator`] — least-squares projection of a standard convolution
//!   onto a grouped model class, yielding the approximation error and the
//!   slope/bound summaries built on top of it.
//! * [`cost`] — closed-form operation and parameter counts.

pub mod conv;
pub mod cost;
pub mod error;
pub mod estimator;
pub mod sampling;
pub mod signal;

pub use conv::{
    balanced_from_standard, check_young, conv_single, extract_block_diagonal, intergroup_mean,
    BalancedConv, GroupedConv, Kernel, KernelGrid, PaddingMode, StandardConv, YoungCheck,
};
pub use error::Error;
pub use estimator::VariantKind;
pub use signal::{MultiChannelSignal, SignalShape};

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;
