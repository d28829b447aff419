//! Seeded random inputs and weight initializations.
//!
//! Reproducibility contract: every draw is addressed by a [`SeedSpec`] —
//! a 64-bit seed shared by a whole experiment plus a 64-bit stream id that
//! isolates one object (one pooled input, one weight trial). The generator
//! is ChaCha with 8 rounds, whose independent stream counter makes draws
//! for stream `s` identical no matter which other streams were sampled,
//! in what order, or on how many threads. Changing the generator would
//! silently re-randomize every experiment, so it is fixed here and the
//! stream-allocation constants below are the only supported way to carve
//! up the stream space.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Normal, StandardNormal, Uniform};

use crate::conv::StandardConv;
use crate::signal::{MultiChannelSignal, SignalShape};
use crate::Result;

/// Stream-id bases reserving disjoint regions of the 64-bit stream space.
/// Index `i` of a family lives at `BASE + i`; families never collide
/// because experiment sizes stay far below 2^32.
pub mod streams {
    /// Pooled experiment inputs: stream `INPUT_BASE + s` for input `s`.
    pub const INPUT_BASE: u64 = 0;
    /// Weight trials: stream `TRIAL_BASE + t` for trial `t`.
    pub const TRIAL_BASE: u64 = 1 << 32;
    /// Independent draw pairs used by Monte Carlo bound checks.
    pub const PAIR_BASE: u64 = 1 << 33;
}

/// Distribution of raw input samples.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InputDistribution {
    /// Standard normal per entry.
    Normal01,
    /// Uniform on the open interval (-1, 1) per entry.
    UniformSym1,
}

impl std::fmt::Display for InputDistribution {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            InputDistribution::Normal01 => write!(f, "normal"),
            InputDistribution::UniformSym1 => write!(f, "uniform"),
        }
    }
}

impl std::str::FromStr for InputDistribution {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "normal" | "gaussian" => Ok(InputDistribution::Normal01),
            "uniform" => Ok(InputDistribution::UniformSym1),
            other => Err(format!("unknown distribution `{other}` (expected normal|uniform)")),
        }
    }
}

/// Weight initialization family. Both are zero-mean i.i.d. normal; they
/// differ only in how the variance is derived from the layer dimensions.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WeightInit {
    /// Variance `2 / (K * n)` — fan-in scaled.
    He,
    /// Variance `2 / (K * n + K * m)` — fan-in plus fan-out scaled.
    Glorot,
}

impl WeightInit {
    /// Per-tap variance for an operator with `out_channels x in_channels`
    /// kernels of `kernel_size` taps.
    pub fn tap_variance(&self, out_channels: usize, in_channels: usize, kernel_size: usize) -> f64 {
        let fan_in = (kernel_size * in_channels) as f64;
        match self {
            WeightInit::He => 2.0 / fan_in,
            WeightInit::Glorot => {
                let fan_out = (kernel_size * out_channels) as f64;
                2.0 / (fan_in + fan_out)
            }
        }
    }
}

impl std::fmt::Display for WeightInit {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            WeightInit::He => write!(f, "he"),
            WeightInit::Glorot => write!(f, "glorot"),
        }
    }
}

impl std::str::FromStr for WeightInit {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "he" | "kaiming" => Ok(WeightInit::He),
            "glorot" | "xavier" => Ok(WeightInit::Glorot),
            other => Err(format!("unknown init `{other}` (expected he|glorot)")),
        }
    }
}

/// Addresses one reproducible random object: experiment seed plus stream id.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SeedSpec {
    pub seed: u64,
    pub stream: u64,
}

impl SeedSpec {
    pub fn new(seed: u64, stream: u64) -> Self {
        Self { seed, stream }
    }

    /// Fresh generator positioned at the start of this spec's stream.
    pub fn rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream);
        rng
    }
}

/// Draws a signal with every entry i.i.d. from the given distribution.
/// Entries are generated channel-major, so the value at (channel, position)
/// is a pure function of the seed spec.
pub fn sample_input(
    shape: SignalShape,
    distribution: InputDistribution,
    seed: SeedSpec,
) -> MultiChannelSignal {
    let mut rng = seed.rng();
    let data: Vec<f64> = match distribution {
        InputDistribution::Normal01 => (0..shape.len()).map(|_| rng.sample(StandardNormal)).collect(),
        InputDistribution::UniformSym1 => {
            let dist = Uniform::new(-1.0, 1.0).expect("fixed bounds are valid");
            (0..shape.len())
                .map(|_| {
                    // Resample the measure-zero left endpoint so entries lie
                    // in the open interval.
                    loop {
                        let v: f64 = rng.sample(dist);
                        if v > -1.0 {
                            break v;
                        }
                    }
                })
                .collect()
        }
    };
    MultiChannelSignal::new(shape, data).expect("sampled data is finite and sized to shape")
}

/// Draws a standard convolution with i.i.d. zero-mean normal taps at the
/// variance dictated by `init`. Taps are generated in (out channel, in
/// channel, tap) order.
pub fn init_standard_conv(
    out_channels: usize,
    in_channels: usize,
    kernel_size: usize,
    init: WeightInit,
    seed: SeedSpec,
) -> Result<StandardConv> {
    let std_dev = init
        .tap_variance(out_channels, in_channels, kernel_size)
        .sqrt();
    let normal = Normal::new(0.0, std_dev).expect("variance is finite and positive");
    let mut rng = seed.rng();
    StandardConv::from_fn(out_channels, in_channels, kernel_size, |_, _, _| {
        rng.sample(normal)
    })
}
