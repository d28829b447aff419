//! Shared oracles for integration tests: dense impulse-probed operator
//! matrices, an independent shift-stacked regressor construction, and an
//! SVD-based least-squares reference. Everything here recomputes results
//! from first principles so library paths are checked against genuinely
//! different arithmetic.

#![allow(dead_code)] // not every test file uses every oracle

use bgconv::{MultiChannelSignal, PaddingMode, SignalShape, StandardConv, VariantKind};
use nalgebra::{DMatrix, DVector};

/// Splitmix64: tiny deterministic value generator for test data. Not a
/// statistical RNG — just a way to get varied, reproducible numbers.
pub fn mix(seed: u64) -> u64 {
    let mut z = seed.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Deterministic value in [-1, 1).
pub fn mix_unit(seed: u64) -> f64 {
    (mix(seed) >> 11) as f64 / (1u64 << 52) as f64 * 2.0 - 1.0
}

pub fn seeded_standard(out_channels: usize, in_channels: usize, kernel_size: usize, seed: u64) -> StandardConv {
    StandardConv::from_fn(out_channels, in_channels, kernel_size, |i, j, t| {
        mix_unit(seed ^ mix((i * 1009 + j * 131 + t) as u64))
    })
    .unwrap()
}

pub fn seeded_signal(channels: usize, length: usize, seed: u64) -> MultiChannelSignal {
    MultiChannelSignal::from_fn(SignalShape::new(channels, length).unwrap(), |c, d| {
        mix_unit(seed ^ mix((c * 613 + d * 17 + 3) as u64))
    })
    .unwrap()
}

/// Reads `chan[idx]` under the padding rule, written independently of the
/// library's accumulation loops.
pub fn sample_at(chan: &[f64], idx: isize, padding: PaddingMode) -> f64 {
    let len = chan.len() as isize;
    match padding {
        PaddingMode::ZeroSame => {
            if idx < 0 || idx >= len {
                0.0
            } else {
                chan[idx as usize]
            }
        }
        PaddingMode::Circular => chan[idx.rem_euclid(len) as usize],
    }
}

/// Dense matrix of a linear signal map, built by probing with unit
/// impulses. Row index `i * length + d` is output channel `i`, position
/// `d`; columns likewise over inputs.
pub fn dense_of(
    apply: &dyn Fn(&MultiChannelSignal) -> MultiChannelSignal,
    in_channels: usize,
    length: usize,
) -> DMatrix<f64> {
    let shape = SignalShape::new(in_channels, length).unwrap();
    let probe = apply(&MultiChannelSignal::zeros(shape));
    let out_rows = probe.shape().channels() * probe.shape().length();
    let mut dense = DMatrix::zeros(out_rows, in_channels * length);
    for c in 0..in_channels {
        for d in 0..length {
            let e =
                MultiChannelSignal::from_fn(shape, |cc, dd| f64::from(cc == c && dd == d)).unwrap();
            let y = apply(&e);
            let mut col = dense.column_mut(c * length + d);
            for (r, v) in y.data().iter().enumerate() {
                col[r] = *v;
            }
        }
    }
    dense
}

/// Applies a dense operator matrix to a signal, returning the stacked
/// output vector (channel-major).
pub fn dense_apply(dense: &DMatrix<f64>, x: &MultiChannelSignal) -> DVector<f64> {
    dense * DVector::from_column_slice(x.data())
}

/// Target vector `W x` computed by a direct triple loop — no library
/// forward pass involved. Entry `i * length + d`.
pub fn direct_forward(w: &StandardConv, x: &MultiChannelSignal, padding: PaddingMode) -> DVector<f64> {
    let length = x.shape().length();
    let radius = (w.kernel_size() / 2) as isize;
    let mut y = DVector::zeros(w.out_channels() * length);
    for i in 0..w.out_channels() {
        for d in 0..length {
            let mut acc = 0.0;
            for j in 0..w.in_channels() {
                let taps = w.kernel(i, j).taps();
                for (t, tap) in taps.iter().enumerate() {
                    acc += tap * sample_at(x.channel(j), d as isize + t as isize - radius, padding);
                }
            }
            y[i * length + d] = acc;
        }
    }
    y
}

/// Regressor matrix for one output group, built by shift-stacking input
/// channels: column `j_local * K + t` holds channel `group * n_local +
/// j_local` shifted by `t - radius`, stacked over the pool (row `s *
/// length + d`). For the balanced family the same columns over the
/// intergroup mean follow.
pub fn oracle_design(
    inputs: &[MultiChannelSignal],
    kernel_size: usize,
    groups: usize,
    variant: VariantKind,
    group: usize,
    padding: PaddingMode,
) -> DMatrix<f64> {
    let channels = inputs[0].shape().channels();
    let length = inputs[0].shape().length();
    let n_local = channels / groups;
    let radius = (kernel_size / 2) as isize;
    let block_cols = n_local * kernel_size;
    let cols = match variant {
        VariantKind::Gc => block_cols,
        VariantKind::Bgc => 2 * block_cols,
    };
    let mut a = DMatrix::zeros(inputs.len() * length, cols);
    for (s, x) in inputs.iter().enumerate() {
        for j_local in 0..n_local {
            let chan = x.channel(group * n_local + j_local).to_vec();
            let mean: Vec<f64> = (0..length)
                .map(|d| {
                    (0..groups)
                        .map(|l| x.channel(l * n_local + j_local)[d])
                        .sum::<f64>()
                        / groups as f64
                })
                .collect();
            for t in 0..kernel_size {
                let offset = t as isize - radius;
                for d in 0..length {
                    let row = s * length + d;
                    a[(row, j_local * kernel_size + t)] =
                        sample_at(&chan, d as isize + offset, padding);
                    if variant == VariantKind::Bgc {
                        a[(row, block_cols + j_local * kernel_size + t)] =
                            sample_at(&mean, d as isize + offset, padding);
                    }
                }
            }
        }
    }
    a
}

/// Minimum squared residual `min_w ||A w - b||^2` via nalgebra's SVD —
/// an algorithm unrelated to the library's factored Gram solve.
pub fn svd_min_residual(a: &DMatrix<f64>, b: &DVector<f64>) -> f64 {
    let svd = a.clone().svd(true, true);
    let eps = 1e-12 * svd.singular_values.max().max(1e-300);
    let w = svd.solve(b, eps).expect("svd solve");
    (a * w - b).norm_squared()
}

/// Full reference computation of the approximation error for one cell:
/// for every trial and group, shift-stacked regressors and direct-loop
/// targets go through an SVD least-squares solve, and the squared
/// residuals are pooled exactly as the estimator defines the measure.
pub fn oracle_estimate(
    trials: &[StandardConv],
    inputs: &[MultiChannelSignal],
    groups: usize,
    variant: VariantKind,
    padding: PaddingMode,
) -> f64 {
    let length = inputs[0].shape().length();
    let out_channels = trials[0].out_channels();
    let m_local = out_channels / groups;
    let kernel_size = trials[0].kernel_size();
    let mut total = 0.0;
    for w in trials {
        for group in 0..groups {
            let a = oracle_design(inputs, kernel_size, groups, variant, group, padding);
            for i_local in 0..m_local {
                let i = group * m_local + i_local;
                let mut b = DVector::zeros(inputs.len() * length);
                for (s, x) in inputs.iter().enumerate() {
                    let y = direct_forward(w, x, padding);
                    for d in 0..length {
                        b[s * length + d] = y[i * length + d];
                    }
                }
                total += svd_min_residual(&a, &b);
            }
        }
    }
    total / (trials.len() * inputs.len()) as f64
}
