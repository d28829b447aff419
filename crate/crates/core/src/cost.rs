//! Closed-form cost model for the three operator families.
//!
//! Counts are exact integer formulas, not measurements: `conv_ops` counts
//! multiply–accumulates of kernel taps against samples across all output
//! positions, and `mean_ops` counts the additions spent forming the
//! intergroup mean (balanced operators only). Parameter counts mirror
//! [`crate::conv`]'s `tap_count` accessors, which is checked by tests so
//! the model can never drift from the operators it describes.

use crate::error::Error;
use crate::estimator::VariantKind;
use crate::Result;

/// Which operator family a [`LayerSpec`] describes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LayerKind {
    /// Dense standard convolution; group count must be 1.
    Standard,
    /// Grouped convolution with `groups` blocks.
    Grouped,
    /// Balanced grouped convolution with `groups` blocks.
    Balanced,
}

impl LayerKind {
    /// The grouped/balanced kinds as estimator variants; `None` for
    /// standard, which has no approximation to measure.
    pub fn variant(&self) -> Option<VariantKind> {
        match self {
            LayerKind::Standard => None,
            LayerKind::Grouped => Some(VariantKind::Gc),
            LayerKind::Balanced => Some(VariantKind::Bgc),
        }
    }
}

impl From<VariantKind> for LayerKind {
    fn from(v: VariantKind) -> Self {
        match v {
            VariantKind::Gc => LayerKind::Grouped,
            VariantKind::Bgc => LayerKind::Balanced,
        }
    }
}

/// One convolution layer to be costed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LayerSpec {
    kind: LayerKind,
    out_channels: usize,
    in_channels: usize,
    kernel_size: usize,
    length: usize,
    groups: usize,
}

impl LayerSpec {
    /// Validates dimensions: everything nonzero, groups dividing both
    /// channel counts, and standard layers pinned to one group.
    pub fn new(
        kind: LayerKind,
        out_channels: usize,
        in_channels: usize,
        kernel_size: usize,
        length: usize,
        groups: usize,
    ) -> Result<Self> {
        for (what, v) in [
            ("out_channels", out_channels),
            ("in_channels", in_channels),
            ("kernel_size", kernel_size),
            ("length", length),
            ("groups", groups),
        ] {
            if v == 0 {
                return Err(Error::EmptyDimension { what });
            }
        }
        if matches!(kind, LayerKind::Standard) && groups != 1 {
            return Err(Error::GroupMismatch {
                groups,
                channels: in_channels,
            });
        }
        if !out_channels.is_multiple_of(groups) {
            return Err(Error::GroupMismatch {
                groups,
                channels: out_channels,
            });
        }
        if !in_channels.is_multiple_of(groups) {
            return Err(Error::GroupMismatch {
                groups,
                channels: in_channels,
            });
        }
        Ok(Self {
            kind,
            out_channels,
            in_channels,
            kernel_size,
            length,
            groups,
        })
    }

    pub fn kind(&self) -> LayerKind {
        self.kind
    }

    pub fn groups(&self) -> usize {
        self.groups
    }
}

/// Exact operation and parameter counts for one layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CostBreakdown {
    /// Multiply–accumulates spent applying kernels.
    pub conv_ops: u64,
    /// Additions spent forming the intergroup mean (balanced only).
    pub mean_ops: u64,
    /// Stored taps.
    pub params: u64,
}

impl CostBreakdown {
    pub fn total_ops(&self) -> u64 {
        self.conv_ops + self.mean_ops
    }
}

/// Operation counts for a layer:
///
/// * standard: `K * D * m * n` convolution ops;
/// * grouped: `K * D * m * n / N`;
/// * balanced: `2 * K * D * m * n / N` convolution ops plus `D * n` mean
///   additions.
pub fn op_count(spec: &LayerSpec) -> CostBreakdown {
    let k = spec.kernel_size as u64;
    let d = spec.length as u64;
    let m = spec.out_channels as u64;
    let n = spec.in_channels as u64;
    let groups = spec.groups as u64;
    let dense = k * d * m * n;
    let (conv_ops, mean_ops) = match spec.kind {
        LayerKind::Standard => (dense, 0),
        LayerKind::Grouped => (dense / groups, 0),
        LayerKind::Balanced => (2 * dense / groups, d * n),
    };
    CostBreakdown {
        conv_ops,
        mean_ops,
        params: param_count(spec),
    }
}

/// Stored-parameter count for a layer: `K * m * n` dense, divided by N for
/// grouped, twice that for balanced.
pub fn param_count(spec: &LayerSpec) -> u64 {
    let k = spec.kernel_size as u64;
    let m = spec.out_channels as u64;
    let n = spec.in_channels as u64;
    let groups = spec.groups as u64;
    match spec.kind {
        LayerKind::Standard => k * m * n,
        LayerKind::Grouped => k * m * n / groups,
        LayerKind::Balanced => 2 * k * m * n / groups,
    }
}
