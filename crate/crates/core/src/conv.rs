//! Convolution operators as explicit linear maps.
//!
//! Everything here is 1-D, multi-channel, bias-free, and uses centered
//! kernels with an odd tap count, so outputs stay aligned with inputs and
//! keep the same length. Three operator families are provided:
//!
//! * [`StandardConv`] — a dense m x n grid of kernels; every output channel
//!   sees every input channel.
//! * [`GroupedConv`] — channels split into N contiguous groups; each output
//!   group sees only its own input group (the block-diagonal part of a
//!   standard operator).
//! * [`BalancedConv`] — a grouped operator plus a per-group "balance" term
//!   applied to the mean of the input groups, which restores a controlled
//!   amount of cross-group mixing at negligible extra cost.
//!
//! The convolution convention is cross-correlation (no kernel flip):
//! `out[d] = sum_t taps[t] * x[d + t - (K-1)/2]`, with out-of-range samples
//! resolved by [`PaddingMode`].

use crate::error::Error;
use crate::signal::{MultiChannelSignal, SignalShape};
use crate::Result;

/// Relative slack used when checking the norm inequality in [`check_young`];
/// compensates for floating-point rounding in the two sides.
pub const YOUNG_REL_SLACK: f64 = 1e-9;

/// How samples outside `0..length` are read during convolution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PaddingMode {
    /// Out-of-range samples are zero; output length equals input length.
    #[default]
    ZeroSame,
    /// Indices wrap around the signal end.
    Circular,
}

impl std::fmt::Display for PaddingMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            PaddingMode::ZeroSame => write!(f, "zero"),
            PaddingMode::Circular => write!(f, "circular"),
        }
    }
}

impl std::str::FromStr for PaddingMode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "zero" | "zero-same" | "same" => Ok(PaddingMode::ZeroSame),
            "circular" | "wrap" => Ok(PaddingMode::Circular),
            other => Err(format!("unknown padding mode `{other}` (expected zero|circular)")),
        }
    }
}

// ── Kernels ──────────────────────────────────────────────────────────────

/// A single 1-D kernel: an odd, nonzero number of taps centered on the
/// output position.
#[derive(Debug, Clone, PartialEq)]
pub struct Kernel {
    taps: Vec<f64>,
}

impl Kernel {
    pub fn new(taps: Vec<f64>) -> Result<Self> {
        if taps.is_empty() || taps.len().is_multiple_of(2) {
            return Err(Error::EvenKernel { len: taps.len() });
        }
        Ok(Self { taps })
    }

    /// All-zero kernel with `size` taps.
    pub fn zeros(size: usize) -> Result<Self> {
        Self::new(vec![0.0; size])
    }

    pub fn size(&self) -> usize {
        self.taps.len()
    }

    /// Taps to each side of the center: `(size - 1) / 2`.
    pub fn radius(&self) -> usize {
        self.taps.len() / 2
    }

    pub fn taps(&self) -> &[f64] {
        &self.taps
    }

    pub fn taps_mut(&mut self) -> &mut [f64] {
        &mut self.taps
    }
}

/// Applies one kernel to one channel. The workhorse all forward passes
/// reduce to; kept public so single-channel behavior is testable in
/// isolation.
pub fn conv_single(kernel: &Kernel, channel: &[f64], padding: PaddingMode) -> Vec<f64> {
    let mut out = vec![0.0; channel.len()];
    conv_single_acc(kernel, channel, padding, &mut out);
    out
}

/// Accumulating form of [`conv_single`]: adds the convolution onto `out`.
fn conv_single_acc(kernel: &Kernel, channel: &[f64], padding: PaddingMode, out: &mut [f64]) {
    debug_assert_eq!(out.len(), channel.len());
    let len = channel.len() as isize;
    let radius = kernel.radius() as isize;
    for (d, slot) in out.iter_mut().enumerate() {
        let mut acc = 0.0;
        for (t, &tap) in kernel.taps.iter().enumerate() {
            let idx = d as isize + t as isize - radius;
            let sample = match padding {
                PaddingMode::ZeroSame => {
                    if idx < 0 || idx >= len {
                        0.0
                    } else {
                        channel[idx as usize]
                    }
                }
                PaddingMode::Circular => channel[idx.rem_euclid(len) as usize],
            };
            acc += tap * sample;
        }
        *slot += acc;
    }
}

// ── Kernel grids ─────────────────────────────────────────────────────────

/// A dense `rows x cols` grid of equally sized kernels; the building block
/// for every operator here. Row `i` maps the `cols` input channels to
/// output channel `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelGrid {
    rows: usize,
    cols: usize,
    kernel_size: usize,
    cells: Vec<Kernel>,
}

impl KernelGrid {
    /// Builds a grid from `rows * cols` kernels in row-major order. Every
    /// kernel must have `kernel_size` taps.
    pub fn new(rows: usize, cols: usize, kernel_size: usize, cells: Vec<Kernel>) -> Result<Self> {
        if rows == 0 {
            return Err(Error::EmptyDimension { what: "grid rows" });
        }
        if cols == 0 {
            return Err(Error::EmptyDimension { what: "grid cols" });
        }
        // Validate the requested size even when no cell has to match it.
        Kernel::zeros(kernel_size)?;
        if cells.len() != rows * cols {
            return Err(Error::ShapeMismatch {
                what: "kernel grid cell count",
                expected: rows * cols,
                actual: cells.len(),
            });
        }
        if let Some(bad) = cells.iter().find(|k| k.size() != kernel_size) {
            return Err(Error::ShapeMismatch {
                what: "kernel tap count",
                expected: kernel_size,
                actual: bad.size(),
            });
        }
        Ok(Self {
            rows,
            cols,
            kernel_size,
            cells,
        })
    }

    /// Grid of all-zero kernels.
    pub fn zeros(rows: usize, cols: usize, kernel_size: usize) -> Result<Self> {
        let kernel = Kernel::zeros(kernel_size)?;
        Self::new(rows, cols, kernel_size, vec![kernel; rows * cols])
    }

    /// Builds a grid by evaluating `f(row, col, tap)`.
    pub fn from_fn(
        rows: usize,
        cols: usize,
        kernel_size: usize,
        mut f: impl FnMut(usize, usize, usize) -> f64,
    ) -> Result<Self> {
        let mut cells = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                cells.push(Kernel::new((0..kernel_size).map(|t| f(i, j, t)).collect())?);
            }
        }
        Self::new(rows, cols, kernel_size, cells)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn kernel_size(&self) -> usize {
        self.kernel_size
    }

    pub fn kernel(&self, row: usize, col: usize) -> &Kernel {
        &self.cells[row * self.cols + col]
    }

    pub fn kernel_mut(&mut self, row: usize, col: usize) -> &mut Kernel {
        &mut self.cells[row * self.cols + col]
    }

    /// Iterates over every tap value in the grid.
    pub fn tap_values(&self) -> impl Iterator<Item = f64> + '_ {
        self.cells.iter().flat_map(|k| k.taps().iter().copied())
    }

    fn sq_tap_sum(&self) -> f64 {
        self.tap_values().map(|v| v * v).sum()
    }

    /// `sum_col conv(kernel[row][col], x[col])` for each row, accumulated
    /// into `out` channel by channel. `x_channels` must yield `cols` rows.
    fn forward_into<'a>(
        &self,
        x_channels: impl Fn(usize) -> &'a [f64],
        padding: PaddingMode,
        out: &mut [f64],
        length: usize,
    ) {
        for i in 0..self.rows {
            let out_row = &mut out[i * length..(i + 1) * length];
            for j in 0..self.cols {
                conv_single_acc(self.kernel(i, j), x_channels(j), padding, out_row);
            }
        }
    }
}

// ── Standard convolution ─────────────────────────────────────────────────

/// Dense multi-channel convolution: output channel `i` is
/// `sum_j conv(kernel[i][j], x[j])`.
#[derive(Debug, Clone, PartialEq)]
pub struct StandardConv {
    grid: KernelGrid,
}

impl StandardConv {
    pub fn new(grid: KernelGrid) -> Self {
        Self { grid }
    }

    /// Builds an `out_channels x in_channels` operator by evaluating
    /// `f(out_channel, in_channel, tap)`.
    pub fn from_fn(
        out_channels: usize,
        in_channels: usize,
        kernel_size: usize,
        f: impl FnMut(usize, usize, usize) -> f64,
    ) -> Result<Self> {
        Ok(Self::new(KernelGrid::from_fn(
            out_channels,
            in_channels,
            kernel_size,
            f,
        )?))
    }

    pub fn out_channels(&self) -> usize {
        self.grid.rows()
    }

    pub fn in_channels(&self) -> usize {
        self.grid.cols()
    }

    pub fn kernel_size(&self) -> usize {
        self.grid.kernel_size()
    }

    pub fn kernel(&self, out_channel: usize, in_channel: usize) -> &Kernel {
        self.grid.kernel(out_channel, in_channel)
    }

    pub fn grid(&self) -> &KernelGrid {
        &self.grid
    }

    /// Number of stored taps: `K * m * n`.
    pub fn tap_count(&self) -> usize {
        self.grid.kernel_size() * self.grid.rows() * self.grid.cols()
    }

    /// Euclidean norm of all taps viewed as one parameter vector.
    pub fn param_l2_norm(&self) -> f64 {
        self.grid.sq_tap_sum().sqrt()
    }

    /// Applies the operator. The input must have `in_channels` channels;
    /// the output has `out_channels` channels of the same length.
    pub fn forward(&self, x: &MultiChannelSignal, padding: PaddingMode) -> Result<MultiChannelSignal> {
        if x.channels() != self.in_channels() {
            return Err(Error::ShapeMismatch {
                what: "input channels",
                expected: self.in_channels(),
                actual: x.channels(),
            });
        }
        let length = x.length();
        let out_shape = SignalShape::new(self.out_channels(), length)?;
        let mut out = MultiChannelSignal::zeros(out_shape);
        self.grid
            .forward_into(|j| x.channel(j), padding, out.data_mut(), length);
        Ok(out)
    }
}

// ── Grouped convolution ──────────────────────────────────────────────────

/// Block-diagonal convolution: channels are split into `groups` contiguous
/// blocks and each output block only sees its own input block.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupedConv {
    groups: usize,
    blocks: Vec<KernelGrid>,
}

impl GroupedConv {
    /// Builds from per-group kernel grids. All grids must share dimensions
    /// and kernel size.
    pub fn new(blocks: Vec<KernelGrid>) -> Result<Self> {
        if blocks.is_empty() {
            return Err(Error::EmptySet { what: "group blocks" });
        }
        let rows = blocks[0].rows();
        let cols = blocks[0].cols();
        let size = blocks[0].kernel_size();
        for grid in &blocks[1..] {
            if grid.rows() != rows {
                return Err(Error::ShapeMismatch {
                    what: "group block rows",
                    expected: rows,
                    actual: grid.rows(),
                });
            }
            if grid.cols() != cols {
                return Err(Error::ShapeMismatch {
                    what: "group block cols",
                    expected: cols,
                    actual: grid.cols(),
                });
            }
            if grid.kernel_size() != size {
                return Err(Error::ShapeMismatch {
                    what: "group block kernel size",
                    expected: size,
                    actual: grid.kernel_size(),
                });
            }
        }
        Ok(Self {
            groups: blocks.len(),
            blocks,
        })
    }

    pub fn groups(&self) -> usize {
        self.groups
    }

    pub fn out_channels(&self) -> usize {
        self.groups * self.blocks[0].rows()
    }

    pub fn in_channels(&self) -> usize {
        self.groups * self.blocks[0].cols()
    }

    pub fn kernel_size(&self) -> usize {
        self.blocks[0].kernel_size()
    }

    /// Kernel grid of group `k`.
    pub fn block(&self, k: usize) -> &KernelGrid {
        &self.blocks[k]
    }

    pub fn block_mut(&mut self, k: usize) -> &mut KernelGrid {
        &mut self.blocks[k]
    }

    /// Number of stored taps: `K * m * n / N`.
    pub fn tap_count(&self) -> usize {
        self.blocks
            .iter()
            .map(|g| g.kernel_size() * g.rows() * g.cols())
            .sum()
    }

    pub fn param_l2_norm(&self) -> f64 {
        self.blocks.iter().map(|g| g.sq_tap_sum()).sum::<f64>().sqrt()
    }

    /// Applies the block-diagonal operator group by group.
    pub fn forward(&self, x: &MultiChannelSignal, padding: PaddingMode) -> Result<MultiChannelSignal> {
        if x.channels() != self.in_channels() {
            return Err(Error::ShapeMismatch {
                what: "input channels",
                expected: self.in_channels(),
                actual: x.channels(),
            });
        }
        let length = x.length();
        let rows = self.blocks[0].rows();
        let cols = self.blocks[0].cols();
        let out_shape = SignalShape::new(self.out_channels(), length)?;
        let mut out = MultiChannelSignal::zeros(out_shape);
        for (k, grid) in self.blocks.iter().enumerate() {
            let out_slice =
                &mut out.data_mut()[k * rows * length..(k + 1) * rows * length];
            grid.forward_into(
                |j_local| x.channel(k * cols + j_local),
                padding,
                out_slice,
                length,
            );
        }
        Ok(out)
    }
}

// ── Balanced grouped convolution ─────────────────────────────────────────

/// A grouped convolution plus a per-group balance term applied to the mean
/// of the input groups: `y_k = diag_k(x_k) + balance_k(mean_group(x))`.
#[derive(Debug, Clone, PartialEq)]
pub struct BalancedConv {
    base: GroupedConv,
    balance: Vec<KernelGrid>,
}

impl BalancedConv {
    /// Builds from a grouped operator and per-group balance grids, which
    /// must match the base blocks in shape and kernel size.
    pub fn new(base: GroupedConv, balance: Vec<KernelGrid>) -> Result<Self> {
        if balance.len() != base.groups() {
            return Err(Error::ShapeMismatch {
                what: "balance grid count",
                expected: base.groups(),
                actual: balance.len(),
            });
        }
        let rows = base.block(0).rows();
        let cols = base.block(0).cols();
        let size = base.kernel_size();
        for grid in &balance {
            if grid.rows() != rows || grid.cols() != cols {
                return Err(Error::ShapeMismatch {
                    what: "balance grid dimensions",
                    expected: rows * cols,
                    actual: grid.rows() * grid.cols(),
                });
            }
            if grid.kernel_size() != size {
                return Err(Error::ShapeMismatch {
                    what: "balance kernel size",
                    expected: size,
                    actual: grid.kernel_size(),
                });
            }
        }
        Ok(Self { base, balance })
    }

    pub fn groups(&self) -> usize {
        self.base.groups()
    }

    pub fn out_channels(&self) -> usize {
        self.base.out_channels()
    }

    pub fn in_channels(&self) -> usize {
        self.base.in_channels()
    }

    pub fn kernel_size(&self) -> usize {
        self.base.kernel_size()
    }

    /// The block-diagonal part.
    pub fn base(&self) -> &GroupedConv {
        &self.base
    }

    /// Balance grid of group `k` (applied to the intergroup mean).
    pub fn balance(&self, k: usize) -> &KernelGrid {
        &self.balance[k]
    }

    /// Number of stored taps: `2 * K * m * n / N`.
    pub fn tap_count(&self) -> usize {
        self.base.tap_count()
            + self
                .balance
                .iter()
                .map(|g| g.kernel_size() * g.rows() * g.cols())
                .sum::<usize>()
    }

    pub fn param_l2_norm(&self) -> f64 {
        let sq = self.base.blocks.iter().map(|g| g.sq_tap_sum()).sum::<f64>()
            + self.balance.iter().map(|g| g.sq_tap_sum()).sum::<f64>();
        sq.sqrt()
    }

    /// Applies the operator: grouped part on the raw input, balance part on
    /// the intergroup mean.
    pub fn forward(&self, x: &MultiChannelSignal, padding: PaddingMode) -> Result<MultiChannelSignal> {
        let mut out = self.base.forward(x, padding)?;
        let mean = intergroup_mean(x, self.groups())?;
        let length = x.length();
        let rows = self.base.block(0).rows();
        for (k, grid) in self.balance.iter().enumerate() {
            let out_slice =
                &mut out.data_mut()[k * rows * length..(k + 1) * rows * length];
            grid.forward_into(|j_local| mean.channel(j_local), padding, out_slice, length);
        }
        Ok(out)
    }
}

// ── Group structure helpers ──────────────────────────────────────────────

/// Channel-wise mean across the `groups` contiguous blocks of `x`:
/// output channel `j` is the average of channel `j` within each block.
/// With one group this is the identity.
pub fn intergroup_mean(x: &MultiChannelSignal, groups: usize) -> Result<MultiChannelSignal> {
    if groups == 0 {
        return Err(Error::EmptyDimension { what: "groups" });
    }
    if !x.channels().is_multiple_of(groups) {
        return Err(Error::GroupMismatch {
            groups,
            channels: x.channels(),
        });
    }
    let per_group = x.channels() / groups;
    let length = x.length();
    let scale = 1.0 / groups as f64;
    let shape = SignalShape::new(per_group, length)?;
    let mut out = MultiChannelSignal::zeros(shape);
    for j in 0..per_group {
        let row = &mut out.data_mut()[j * length..(j + 1) * length];
        for k in 0..groups {
            for (slot, &v) in row.iter_mut().zip(x.channel(k * per_group + j)) {
                *slot += v;
            }
        }
        for slot in row.iter_mut() {
            *slot *= scale;
        }
    }
    Ok(out)
}

fn check_grouping(w: &StandardConv, groups: usize) -> Result<(usize, usize)> {
    if groups == 0 {
        return Err(Error::EmptyDimension { what: "groups" });
    }
    if !w.out_channels().is_multiple_of(groups) {
        return Err(Error::GroupMismatch {
            groups,
            channels: w.out_channels(),
        });
    }
    if !w.in_channels().is_multiple_of(groups) {
        return Err(Error::GroupMismatch {
            groups,
            channels: w.in_channels(),
        });
    }
    Ok((w.out_channels() / groups, w.in_channels() / groups))
}

/// The block-diagonal part of a standard operator under a `groups`-way
/// contiguous channel split: group `k` keeps the kernels mapping input
/// block `k` to output block `k` and discards everything else.
pub fn extract_block_diagonal(w: &StandardConv, groups: usize) -> Result<GroupedConv> {
    let (rows, cols) = check_grouping(w, groups)?;
    let size = w.kernel_size();
    let mut blocks = Vec::with_capacity(groups);
    for k in 0..groups {
        blocks.push(KernelGrid::from_fn(rows, cols, size, |i, j, t| {
            w.kernel(k * rows + i, k * cols + j).taps()[t]
        })?);
    }
    GroupedConv::new(blocks)
}

/// Folds a standard operator into balanced grouped form: the diagonal
/// blocks are kept as-is and the balance grid of group `k` is the tap-wise
/// sum of the off-diagonal blocks in that group row. Applied to the
/// intergroup mean, the balance term replays the discarded cross-group
/// kernels against the average input, which is what makes the balanced
/// family strictly better than plain grouping at approximating `w`.
pub fn balanced_from_standard(w: &StandardConv, groups: usize) -> Result<BalancedConv> {
    let (rows, cols) = check_grouping(w, groups)?;
    let size = w.kernel_size();
    let base = extract_block_diagonal(w, groups)?;
    let mut balance = Vec::with_capacity(groups);
    for k in 0..groups {
        balance.push(KernelGrid::from_fn(rows, cols, size, |i, j, t| {
            let mut acc = 0.0;
            for l in 0..groups {
                if l != k {
                    acc += w.kernel(k * rows + i, l * cols + j).taps()[t];
                }
            }
            acc
        })?);
    }
    BalancedConv::new(base, balance)
}

// ── Norm inequality check ────────────────────────────────────────────────

/// Outcome of [`check_young`]: both sides of the inequality and whether it
/// held within [`YOUNG_REL_SLACK`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct YoungCheck {
    /// `|| W x ||` over all output channels and positions.
    pub lhs: f64,
    /// `sqrt(K) * ||W||_param * ||x||`.
    pub rhs: f64,
    /// `lhs <= rhs` within relative slack.
    pub holds: bool,
}

/// Verifies the deterministic norm bound `||Wx|| <= sqrt(K) ||W|| ||x||`
/// for a standard operator on a concrete input. The bound is exact
/// mathematics, so a violation beyond rounding slack indicates a broken
/// forward pass.
pub fn check_young(w: &StandardConv, x: &MultiChannelSignal, padding: PaddingMode) -> Result<YoungCheck> {
    let y = w.forward(x, padding)?;
    let lhs = y.l2_norm();
    let rhs = (w.kernel_size() as f64).sqrt() * w.param_l2_norm() * x.l2_norm();
    Ok(YoungCheck {
        lhs,
        rhs,
        holds: lhs <= rhs * (1.0 + YOUNG_REL_SLACK),
    })
}
