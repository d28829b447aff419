//! Multi-channel 1-D signals.
//!
//! A signal holds `channels` rows of `length` samples in one contiguous
//! channel-major buffer: sample `d` of channel `c` lives at `c * length + d`.
//! All values must be finite; constructors enforce this so the numerical
//! code never has to re-check.

use crate::error::Error;
use crate::Result;

/// Dimensions of a [`MultiChannelSignal`]: channel count and per-channel
/// sample count. Both must be nonzero.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SignalShape {
    channels: usize,
    length: usize,
}

impl SignalShape {
    pub fn new(channels: usize, length: usize) -> Result<Self> {
        if channels == 0 {
            return Err(Error::EmptyDimension { what: "channels" });
        }
        if length == 0 {
            return Err(Error::EmptyDimension { what: "length" });
        }
        Ok(Self { channels, length })
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn length(&self) -> usize {
        self.length
    }

    /// Total number of samples across all channels. Never zero: both
    /// dimensions are validated nonzero at construction.
    #[allow(clippy::len_without_is_empty)]
    pub fn len(&self) -> usize {
        self.channels * self.length
    }
}

/// A finite, channel-major block of samples.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiChannelSignal {
    shape: SignalShape,
    data: Vec<f64>,
}

impl MultiChannelSignal {
    /// Wraps a buffer, checking length and finiteness.
    pub fn new(shape: SignalShape, data: Vec<f64>) -> Result<Self> {
        if data.len() != shape.len() {
            return Err(Error::ShapeMismatch {
                what: "signal buffer length",
                expected: shape.len(),
                actual: data.len(),
            });
        }
        if let Some(index) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                what: "signal data",
                index,
            });
        }
        Ok(Self { shape, data })
    }

    /// All-zero signal of the given shape.
    pub fn zeros(shape: SignalShape) -> Self {
        Self {
            shape,
            data: vec![0.0; shape.len()],
        }
    }

    /// Builds a signal by evaluating `f(channel, position)`.
    pub fn from_fn(shape: SignalShape, mut f: impl FnMut(usize, usize) -> f64) -> Result<Self> {
        let mut data = Vec::with_capacity(shape.len());
        for c in 0..shape.channels() {
            for d in 0..shape.length() {
                data.push(f(c, d));
            }
        }
        Self::new(shape, data)
    }

    pub fn shape(&self) -> SignalShape {
        self.shape
    }

    pub fn channels(&self) -> usize {
        self.shape.channels
    }

    pub fn length(&self) -> usize {
        self.shape.length
    }

    /// Borrow of one channel's samples.
    pub fn channel(&self, c: usize) -> &[f64] {
        let d = self.shape.length;
        &self.data[c * d..(c + 1) * d]
    }

    /// The whole channel-major buffer.
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    /// Euclidean norm over every sample of every channel.
    pub fn l2_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Squared Euclidean norm; cheaper when the square is what is needed.
    pub fn l2_norm_sq(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum()
    }

    pub(crate) fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }
}
