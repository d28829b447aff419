//! Library side of the `bgconv` harness: configuration resolution, the
//! sweep runner, and the CSV/SVG renderers. The binary in `main.rs` is a
//! thin argument-parsing wrapper around these modules, which are exposed
//! so integration tests can drive sweeps and parse outputs directly.

pub mod config;
pub mod csvout;
pub mod experiment;
pub mod svg;
