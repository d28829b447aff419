//! Least-squares measurement of how well grouped operators approximate a
//! standard convolution.
//!
//! For a fixed pool of inputs `x_1..x_S` and a random standard operator
//! `W`, the measure is the minimum over all operators `M` of the chosen
//! grouped family of the mean squared output gap
//! `(1/S) * sum_s ||W x_s - M x_s||^2`, averaged over weight trials. Both
//! operator families are linear in their taps, so for each output channel
//! the inner minimum is an ordinary least-squares problem: the regressor
//! matrix stacks, for every pooled input and signal position, the input
//! window each tap touches.
//!
//! Two structural facts keep the computation cheap enough to sweep group
//! counts at full scale:
//!
//! * All output channels in group `k` share one regressor matrix `A_k`, so
//!   its Gram matrix is factored once per (group count, family) and reused
//!   by every weight trial — only the right-hand sides change.
//! * Every regressor column is either a raw input window column or (for
//!   the balance term) a group-average of such columns. All Gram and
//!   cross-product blocks are therefore slices or block-averages of one
//!   precomputed full Gram, and the per-trial right-hand sides
//!   `A_kᵀ (W x)` collapse to small matrix products against precomputed
//!   cross matrices — no per-trial pass over the input pool at all.
//!
//! Residuals are evaluated in factored form,
//! `||b||^2 - ||L⁻¹ A_k b||^2`, with `||b||^2` derived from the same full
//! Gram. When a Gram pivot collapses (degenerate input pool), the solver
//! falls back to a spectral pseudo-inverse, which yields the minimum-norm
//! least-squares solution and flags the affected trials.

mod linalg;

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::conv::{PaddingMode, StandardConv};
use crate::error::Error;
use crate::sampling::{init_standard_conv, sample_input, streams, InputDistribution, SeedSpec, WeightInit};
use crate::signal::{MultiChannelSignal, SignalShape};
use crate::Result;

/// Relative pivot threshold below which a Gram factorization is treated
/// as rank-deficient and the solver switches to the pseudo-inverse path.
pub const GRAM_PIVOT_REL_TOL: f64 = 1e-12;

/// Relative floor (against the norm factor) under which an error value is
/// excluded from slope fits: such values are numerical zeros — exactly
/// representable cases — and their logs carry no information.
pub const SLOPE_CLAMP_REL: f64 = 1e-14;

/// Grouped model family the standard operator is projected onto.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum VariantKind {
    /// Plain grouped convolution: block-diagonal kernels only.
    Gc,
    /// Balanced grouped convolution: block-diagonal kernels plus a
    /// balance kernel applied to the intergroup mean.
    Bgc,
}

impl VariantKind {
    /// Unknown taps per output channel when approximating an operator
    /// with `in_channels` inputs and `kernel_size` taps at `groups` groups.
    pub fn unknowns_per_channel(
        &self,
        in_channels: usize,
        kernel_size: usize,
        groups: usize,
    ) -> usize {
        let base = kernel_size * in_channels / groups;
        match self {
            VariantKind::Gc => base,
            VariantKind::Bgc => 2 * base,
        }
    }
}

impl std::fmt::Display for VariantKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            VariantKind::Gc => write!(f, "gc"),
            VariantKind::Bgc => write!(f, "bgc"),
        }
    }
}

impl std::str::FromStr for VariantKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "gc" | "grouped" => Ok(VariantKind::Gc),
            "bgc" | "balanced" => Ok(VariantKind::Bgc),
            other => Err(format!("unknown variant `{other}` (expected gc|bgc)")),
        }
    }
}

// ── Design context: everything derived from the input pool ──────────────

/// Pool-level precomputation shared by every design built on the same
/// inputs: the full regressor matrix (all channels, all taps), its Gram,
/// and the pool's mean squared norm. Depends only on the inputs, kernel
/// size, and padding — never on trial weights.
pub struct DesignContext {
    padding: PaddingMode,
    kernel_size: usize,
    channels: usize,
    length: usize,
    s_inputs: usize,
    /// `(s_inputs * length) x (channels * kernel_size)`; column
    /// `j * kernel_size + t` holds, for every (input, position) row, the
    /// sample that tap `t` of a kernel on channel `j` would read.
    x_full: DMatrix<f64>,
    /// `x_fullᵀ x_full`.
    g_full: DMatrix<f64>,
    mean_input_sq: f64,
}

impl DesignContext {
    pub fn new(
        inputs: &[MultiChannelSignal],
        kernel_size: usize,
        padding: PaddingMode,
    ) -> Result<Self> {
        if inputs.is_empty() {
            return Err(Error::EmptySet { what: "input pool" });
        }
        if kernel_size == 0 || kernel_size.is_multiple_of(2) {
            return Err(Error::EvenKernel { len: kernel_size });
        }
        let shape = inputs[0].shape();
        for x in inputs {
            if x.shape() != shape {
                return Err(Error::ShapeMismatch {
                    what: "pooled input shape",
                    expected: shape.len(),
                    actual: x.shape().len(),
                });
            }
        }
        let channels = shape.channels();
        let length = shape.length();
        let s_inputs = inputs.len();
        let rows = s_inputs * length;
        let radius = (kernel_size / 2) as isize;

        let mut x_full = DMatrix::zeros(rows, channels * kernel_size);
        for j in 0..channels {
            for t in 0..kernel_size {
                let offset = t as isize - radius;
                let mut col = x_full.column_mut(j * kernel_size + t);
                for (s, x) in inputs.iter().enumerate() {
                    let chan = x.channel(j);
                    for d in 0..length {
                        let idx = d as isize + offset;
                        col[s * length + d] = match padding {
                            PaddingMode::ZeroSame => {
                                if idx < 0 || idx >= length as isize {
                                    0.0
                                } else {
                                    chan[idx as usize]
                                }
                            }
                            PaddingMode::Circular => chan[idx.rem_euclid(length as isize) as usize],
                        };
                    }
                }
            }
        }

        // One explicit transpose keeps the product on the fast multiply
        // path; the Gram is small compared to the regressor matrix.
        let x_t = x_full.transpose();
        let mut g_full = DMatrix::zeros(channels * kernel_size, channels * kernel_size);
        g_full.gemm(1.0, &x_t, &x_full, 0.0);

        let mean_input_sq =
            inputs.iter().map(MultiChannelSignal::l2_norm_sq).sum::<f64>() / s_inputs as f64;

        Ok(Self {
            padding,
            kernel_size,
            channels,
            length,
            s_inputs,
            x_full,
            g_full,
            mean_input_sq,
        })
    }

    pub fn padding(&self) -> PaddingMode {
        self.padding
    }

    pub fn kernel_size(&self) -> usize {
        self.kernel_size
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn length(&self) -> usize {
        self.length
    }

    pub fn s_inputs(&self) -> usize {
        self.s_inputs
    }

    /// Rows of every design built from this pool.
    pub fn rows(&self) -> usize {
        self.s_inputs * self.length
    }

    /// Mean squared Euclidean norm of the pooled inputs.
    pub fn mean_input_sq(&self) -> f64 {
        self.mean_input_sq
    }

    /// The full regressor matrix (mostly useful to tests and oracles).
    pub fn regressors(&self) -> &DMatrix<f64> {
        &self.x_full
    }

    fn check_groups(&self, groups: usize) -> Result<usize> {
        if groups == 0 {
            return Err(Error::EmptyDimension { what: "groups" });
        }
        if !self.channels.is_multiple_of(groups) {
            return Err(Error::GroupMismatch {
                groups,
                channels: self.channels,
            });
        }
        Ok(self.channels / groups)
    }
}

// ── Per-group design systems ─────────────────────────────────────────────

enum GramFactor {
    Cholesky(DMatrix<f64>),
    Pseudo(linalg::SymmetricPseudo),
}

/// The least-squares system shared by all output channels of one group:
/// regressor matrix, its Gram with a cached factorization, and the cross
/// matrix used to form right-hand sides directly from trial taps.
///
/// Column order: the `kernel_size * channels/groups` block-diagonal tap
/// columns (channel-major, then tap), followed — for the balanced family —
/// by the same layout of balance-tap columns against the intergroup mean.
pub struct DesignSystem {
    variant: VariantKind,
    groups: usize,
    group: usize,
    design: DMatrix<f64>,
    gram: DMatrix<f64>,
    /// `designᵀ x_full`, `(cols) x (channels * kernel_size)`.
    cross: DMatrix<f64>,
    factor: GramFactor,
}

impl DesignSystem {
    fn assemble(ctx: &DesignContext, groups: usize, variant: VariantKind, group: usize) -> Result<Self> {
        let n_local = ctx.check_groups(groups)?;
        if group >= groups {
            return Err(Error::ShapeMismatch {
                what: "group index",
                expected: groups - 1,
                actual: group,
            });
        }
        let k = ctx.kernel_size;
        let c0 = n_local * k; // block-diagonal tap columns
        let cols = variant.unknowns_per_channel(ctx.channels, k, groups);
        let rows = ctx.rows();
        if rows < cols {
            return Err(Error::Underdetermined {
                rows,
                unknowns: cols,
            });
        }
        let base = group * c0;
        let inv_n = 1.0 / groups as f64;

        let mut design = DMatrix::zeros(rows, cols);
        design
            .columns_mut(0, c0)
            .copy_from(&ctx.x_full.columns(base, c0));
        if variant == VariantKind::Bgc {
            let mut mean_cols = design.columns_mut(c0, c0);
            for l in 0..groups {
                mean_cols.zip_apply(&ctx.x_full.columns(l * c0, c0), |d, s| *d += inv_n * s);
            }
        }

        // Gram and cross matrices assembled from the full Gram: every
        // design column is a raw column of the pool regressors or a group
        // average of them, so no large product is needed here.
        let mut gram = DMatrix::zeros(cols, cols);
        gram.view_mut((0, 0), (c0, c0))
            .copy_from(&ctx.g_full.view((base, base), (c0, c0)));
        let tap_cols = ctx.channels * k;
        let mut cross = DMatrix::zeros(cols, tap_cols);
        cross
            .rows_mut(0, c0)
            .copy_from(&ctx.g_full.rows(base, c0));
        if variant == VariantKind::Bgc {
            let mut mean_rows = cross.rows_mut(c0, c0);
            for l in 0..groups {
                mean_rows.zip_apply(&ctx.g_full.rows(l * c0, c0), |d, s| *d += inv_n * s);
            }
            let cross_block = cross.view((c0, base), (c0, c0)).transpose();
            gram.view_mut((0, c0), (c0, c0)).copy_from(&cross_block);
            gram.view_mut((c0, 0), (c0, c0))
                .copy_from(&cross_block.transpose());
            let mut mean_mean = DMatrix::zeros(c0, c0);
            for l in 0..groups {
                // cross rows already hold (1/N) sum over one index; add the
                // second average over the other index.
                mean_mean.zip_apply(&cross.view((c0, l * c0), (c0, c0)), |d, s| *d += inv_n * s);
            }
            gram.view_mut((c0, c0), (c0, c0)).copy_from(&mean_mean);
        }

        let factor = match linalg::cholesky_lower(&gram, GRAM_PIVOT_REL_TOL) {
            Some(l) => GramFactor::Cholesky(l),
            None => GramFactor::Pseudo(linalg::SymmetricPseudo::new(&gram, GRAM_PIVOT_REL_TOL)?),
        };

        Ok(Self {
            variant,
            groups,
            group,
            design,
            gram,
            cross,
            factor,
        })
    }

    pub fn variant(&self) -> VariantKind {
        self.variant
    }

    pub fn groups(&self) -> usize {
        self.groups
    }

    pub fn group(&self) -> usize {
        self.group
    }

    /// Unknowns per output channel.
    pub fn cols(&self) -> usize {
        self.design.ncols()
    }

    /// The materialized regressor matrix `A`.
    pub fn design(&self) -> &DMatrix<f64> {
        &self.design
    }

    /// The Gram matrix `Aᵀ A`.
    pub fn gram(&self) -> &DMatrix<f64> {
        &self.gram
    }

    /// True when the Gram factorization fell back to the pseudo-inverse;
    /// every trial solved through this system is flagged.
    pub fn is_fallback(&self) -> bool {
        matches!(self.factor, GramFactor::Pseudo(_))
    }

    /// Residual sums for one group of a trial: right-hand sides are formed
    /// from the trial's tap matrix, solved against the cached factor, and
    /// the squared-norm identity turns them into residuals. `w_group` has
    /// one column per output channel of this group; `b_sq` holds the
    /// matching squared target norms.
    fn residual_sums(&self, w_group: &nalgebra::DMatrixView<f64>, b_sq: &[f64]) -> f64 {
        let m_local = w_group.ncols();
        debug_assert_eq!(b_sq.len(), m_local);
        let mut rhs = DMatrix::zeros(self.cols(), m_local);
        rhs.gemm(1.0, &self.cross, w_group, 0.0);
        let mut explained = vec![0.0; m_local];
        match &self.factor {
            GramFactor::Cholesky(l) => {
                let mut t = rhs.transpose();
                linalg::solve_lower_transposed(l, &mut t);
                for j in 0..t.ncols() {
                    let col = t.column(j);
                    for c in 0..m_local {
                        explained[c] += col[c] * col[c];
                    }
                }
            }
            GramFactor::Pseudo(p) => {
                let mut u = DMatrix::zeros(p.inv_vals.len(), m_local);
                u.gemm(1.0, &p.vecs_t, &rhs, 0.0);
                for (r, inv) in p.inv_vals.iter().enumerate() {
                    for c in 0..m_local {
                        explained[c] += u[(r, c)] * u[(r, c)] * inv;
                    }
                }
            }
        }
        let mut sum = 0.0;
        for c in 0..m_local {
            // The true residual is nonnegative; rounding can push the
            // factored form a hair below zero on exactly representable
            // targets, so clamp.
            sum += (b_sq[c] - explained[c]).max(0.0);
        }
        sum
    }
}

/// Builds the least-squares system for one group. Prefer
/// [`build_family`] when solving trials, which needs all groups at once.
pub fn build_design(
    ctx: &DesignContext,
    groups: usize,
    variant: VariantKind,
    group: usize,
) -> Result<DesignSystem> {
    DesignSystem::assemble(ctx, groups, variant, group)
}

/// Builds the full family of per-group systems for one (group count,
/// variant) cell, in group order.
pub fn build_family(
    ctx: &DesignContext,
    groups: usize,
    variant: VariantKind,
) -> Result<Vec<DesignSystem>> {
    (0..groups)
        .map(|k| DesignSystem::assemble(ctx, groups, variant, k))
        .collect()
}

// ── Trials ───────────────────────────────────────────────────────────────

/// Tap matrix of a standard operator in design-column order:
/// `(channels * kernel_size) x out_channels`, column `i` holding the taps
/// of output channel `i`.
fn tap_matrix(w: &StandardConv) -> DMatrix<f64> {
    let k = w.kernel_size();
    let mut mat = DMatrix::zeros(w.in_channels() * k, w.out_channels());
    for i in 0..w.out_channels() {
        let mut col = mat.column_mut(i);
        for j in 0..w.in_channels() {
            let taps = w.kernel(i, j).taps();
            for t in 0..k {
                col[j * k + t] = taps[t];
            }
        }
    }
    mat
}

/// Least-squares outcome of one weight trial.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialResult {
    pub trial: usize,
    /// Residual sum (over inputs, positions, and the group's output
    /// channels) for each group.
    pub group_residuals: Vec<f64>,
    /// Minimum mean squared output gap for this trial:
    /// `sum(group_residuals) / s_inputs`.
    pub total: f64,
    /// True when any group's system ran on the pseudo-inverse fallback.
    pub flagged: bool,
}

fn check_trial_shape(ctx: &DesignContext, designs: &[DesignSystem], w: &StandardConv) -> Result<usize> {
    let family = designs.first().ok_or(Error::EmptySet { what: "design family" })?;
    let groups = family.groups();
    if designs.len() != groups
        || designs
            .iter()
            .enumerate()
            .any(|(k, d)| d.group() != k || d.groups() != groups || d.variant() != family.variant())
    {
        return Err(Error::ShapeMismatch {
            what: "design family group coverage",
            expected: groups,
            actual: designs.len(),
        });
    }
    if w.in_channels() != ctx.channels {
        return Err(Error::ShapeMismatch {
            what: "trial input channels",
            expected: ctx.channels,
            actual: w.in_channels(),
        });
    }
    if w.kernel_size() != ctx.kernel_size {
        return Err(Error::ShapeMismatch {
            what: "trial kernel size",
            expected: ctx.kernel_size,
            actual: w.kernel_size(),
        });
    }
    if !w.out_channels().is_multiple_of(groups) {
        return Err(Error::GroupMismatch {
            groups,
            channels: w.out_channels(),
        });
    }
    Ok(groups)
}

/// Solves one weight trial against a full design family, returning the
/// per-group residual sums and their normalized total. `b_sq`, when
/// given, must hold the squared target norm `||W x||^2` summed over the
/// pool for each output channel (as produced by [`prepare_trial_norms`]);
/// otherwise it is derived here from the pool Gram.
pub fn solve_trial(
    ctx: &DesignContext,
    designs: &[DesignSystem],
    w: &StandardConv,
    trial: usize,
    b_sq: Option<&[f64]>,
) -> Result<TrialResult> {
    let groups = check_trial_shape(ctx, designs, w)?;
    let w_mat = tap_matrix(w);
    let owned_b_sq;
    let b_sq = match b_sq {
        Some(v) => {
            if v.len() != w.out_channels() {
                return Err(Error::ShapeMismatch {
                    what: "target norm count",
                    expected: w.out_channels(),
                    actual: v.len(),
                });
            }
            v
        }
        None => {
            owned_b_sq = target_norms(ctx, &w_mat);
            &owned_b_sq
        }
    };
    let m_local = w.out_channels() / groups;
    let mut group_residuals = Vec::with_capacity(groups);
    for (k, design) in designs.iter().enumerate() {
        let w_group = w_mat.columns(k * m_local, m_local);
        group_residuals.push(design.residual_sums(&w_group, &b_sq[k * m_local..(k + 1) * m_local]));
    }
    let total = group_residuals.iter().sum::<f64>() / ctx.s_inputs as f64;
    Ok(TrialResult {
        trial,
        group_residuals,
        total,
        flagged: designs.iter().any(DesignSystem::is_fallback),
    })
}

/// `||W x||^2` summed over the pool, per output channel, evaluated as
/// `w_iᵀ G w_i` against the pool Gram.
fn target_norms(ctx: &DesignContext, w_mat: &DMatrix<f64>) -> Vec<f64> {
    let mut gw = DMatrix::zeros(w_mat.nrows(), w_mat.ncols());
    gw.gemm(1.0, &ctx.g_full, w_mat, 0.0);
    (0..w_mat.ncols())
        .map(|i| w_mat.column(i).dot(&gw.column(i)))
        .collect()
}

/// Per-trial quantities that do not depend on the group count or variant:
/// squared target norms per output channel and the squared parameter norm.
/// Computing them once lets a sweep reuse them across every cell.
pub struct TrialNorms {
    b_sq: Vec<Vec<f64>>,
    w_param_sq: Vec<f64>,
}

impl TrialNorms {
    pub fn s_trials(&self) -> usize {
        self.w_param_sq.len()
    }

    /// Squared target norms of trial `t`, one entry per output channel.
    pub fn target_sq(&self, t: usize) -> &[f64] {
        &self.b_sq[t]
    }

    /// Mean over trials of the squared parameter norm.
    pub fn mean_w_param_sq(&self) -> f64 {
        self.w_param_sq.iter().sum::<f64>() / self.w_param_sq.len().max(1) as f64
    }
}

/// Evaluates [`TrialNorms`] for `s_trials` trials produced by `make_trial`.
pub fn prepare_trial_norms(
    ctx: &DesignContext,
    make_trial: &(dyn Fn(usize) -> Result<StandardConv> + Sync),
    s_trials: usize,
) -> Result<TrialNorms> {
    if s_trials == 0 {
        return Err(Error::EmptySet { what: "weight trials" });
    }
    let per_trial: Vec<(Vec<f64>, f64)> = (0..s_trials)
        .into_par_iter()
        .map(|t| -> Result<(Vec<f64>, f64)> {
            let w = make_trial(t)?;
            if w.in_channels() != ctx.channels || w.kernel_size() != ctx.kernel_size {
                return Err(Error::ShapeMismatch {
                    what: "trial operator shape",
                    expected: ctx.channels * ctx.kernel_size,
                    actual: w.in_channels() * w.kernel_size(),
                });
            }
            let w_mat = tap_matrix(&w);
            let b_sq = target_norms(ctx, &w_mat);
            let param_sq = w_mat.iter().map(|v| v * v).sum();
            Ok((b_sq, param_sq))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut b_sq = Vec::with_capacity(s_trials);
    let mut w_param_sq = Vec::with_capacity(s_trials);
    for (b, p) in per_trial {
        b_sq.push(b);
        w_param_sq.push(p);
    }
    Ok(TrialNorms { b_sq, w_param_sq })
}

// ── The approximation-error estimate ─────────────────────────────────────

/// Aggregated approximation error for one (group count, variant) cell.
#[derive(Debug, Clone, PartialEq)]
pub struct ApproxEstimate {
    /// Mean over trials of the per-trial minimum mean squared output gap.
    pub error: f64,
    /// `error` divided by (mean squared parameter norm x mean squared
    /// input norm); scale-free and comparable across configurations.
    pub rel_error: f64,
    pub mean_w_param_sq: f64,
    pub mean_input_sq: f64,
    pub s_trials: usize,
    /// Trials whose solve ran on the pseudo-inverse fallback.
    pub flagged_trials: Vec<usize>,
}

/// Runs every trial of one cell against a shared context and precomputed
/// trial norms. Trials are dispatched in parallel but reduced in trial
/// order, so results are identical for every worker count.
pub fn estimate_with(
    ctx: &DesignContext,
    make_trial: &(dyn Fn(usize) -> Result<StandardConv> + Sync),
    norms: &TrialNorms,
    groups: usize,
    variant: VariantKind,
) -> Result<ApproxEstimate> {
    let s_trials = norms.s_trials();
    if s_trials == 0 {
        return Err(Error::EmptySet { what: "weight trials" });
    }
    let designs = build_family(ctx, groups, variant)?;
    let results: Vec<TrialResult> = (0..s_trials)
        .into_par_iter()
        .map(|t| solve_trial(ctx, &designs, &make_trial(t)?, t, Some(norms.target_sq(t))))
        .collect::<Result<Vec<_>>>()?;
    let error = results.iter().map(|r| r.total).sum::<f64>() / s_trials as f64;
    let mean_w_param_sq = norms.mean_w_param_sq();
    let denom = mean_w_param_sq * ctx.mean_input_sq();
    let rel_error = if denom > 0.0 { error / denom } else { 0.0 };
    Ok(ApproxEstimate {
        error,
        rel_error,
        mean_w_param_sq,
        mean_input_sq: ctx.mean_input_sq(),
        s_trials,
        flagged_trials: results
            .iter()
            .filter(|r| r.flagged)
            .map(|r| r.trial)
            .collect(),
    })
}

/// Convenience form of [`estimate_with`] for explicit trial and input
/// lists: builds the context and norms, then estimates one cell.
pub fn estimate_error(
    trials: &[StandardConv],
    inputs: &[MultiChannelSignal],
    groups: usize,
    variant: VariantKind,
    padding: PaddingMode,
) -> Result<ApproxEstimate> {
    let first = trials.first().ok_or(Error::EmptySet { what: "weight trials" })?;
    for w in trials {
        if w.in_channels() != first.in_channels()
            || w.out_channels() != first.out_channels()
            || w.kernel_size() != first.kernel_size()
        {
            return Err(Error::ShapeMismatch {
                what: "trial operator shape",
                expected: first.tap_count(),
                actual: w.tap_count(),
            });
        }
    }
    let ctx = DesignContext::new(inputs, first.kernel_size(), padding)?;
    let make_trial = |t: usize| Ok(trials[t].clone());
    let norms = prepare_trial_norms(&ctx, &make_trial, trials.len())?;
    estimate_with(&ctx, &make_trial, &norms, groups, variant)
}

// ── Slope fits ───────────────────────────────────────────────────────────

/// Result of fitting `log(error) = log(c) + gamma * log(1 - 1/N)` over a
/// group-count sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SlopeFit {
    /// Fitted decay exponent.
    pub gamma: f64,
    /// Multiplier with the norm factor divided out: the fit's intercept is
    /// `log(coefficient * norm_factor)`.
    pub coefficient: f64,
    /// Group counts that entered the fit.
    pub kept: Vec<usize>,
    /// Points excluded as degenerate, with the reason.
    pub excluded: Vec<(usize, f64, &'static str)>,
}

/// Ordinary least-squares fit of `log(error)` against `log(1 - 1/N)`.
///
/// Points with `N < 2` (the abscissa degenerates) or with errors at the
/// numerical floor `SLOPE_CLAMP_REL * norm_factor` (exactly representable
/// cases whose logs are rounding noise) are excluded; fewer than two
/// usable points — or no spread in N — is an error that lists them.
pub fn fit_slope(points: &[(usize, f64)], norm_factor: f64) -> Result<SlopeFit> {
    let clamp = SLOPE_CLAMP_REL * norm_factor.max(0.0);
    let mut kept = Vec::new();
    let mut excluded = Vec::new();
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for &(groups, error) in points {
        if groups < 2 {
            excluded.push((groups, error, "group count below 2"));
        } else if !error.is_finite() {
            excluded.push((groups, error, "non-finite error"));
        } else if error <= clamp {
            excluded.push((groups, error, "error at numerical floor"));
        } else {
            kept.push(groups);
            xs.push((1.0 - 1.0 / groups as f64).ln());
            ys.push(error.ln());
        }
    }
    let describe = |excluded: &[(usize, f64, &'static str)]| {
        if excluded.is_empty() {
            "none".to_string()
        } else {
            excluded
                .iter()
                .map(|(n, e, why)| format!("N={n} error={e:.3e} ({why})"))
                .collect::<Vec<_>>()
                .join(", ")
        }
    };
    if kept.len() < 2 {
        return Err(Error::InsufficientSlopePoints {
            kept: kept.len(),
            excluded: describe(&excluded),
        });
    }
    let n = xs.len() as f64;
    let mean_x = xs.iter().sum::<f64>() / n;
    let mean_y = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mean_x) * (x - mean_x)).sum();
    if sxx == 0.0 {
        return Err(Error::InsufficientSlopePoints {
            kept: 1,
            excluded: describe(&excluded),
        });
    }
    let sxy: f64 = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (x - mean_x) * (y - mean_y))
        .sum();
    let gamma = sxy / sxx;
    let intercept = mean_y - gamma * mean_x;
    let coefficient = if norm_factor > 0.0 {
        intercept.exp() / norm_factor
    } else {
        intercept.exp()
    };
    Ok(SlopeFit {
        gamma,
        coefficient,
        kept,
        excluded,
    })
}

/// Normalized bound ratio `rel_error / (1 - 1/N)^p`, the quantity whose
/// theoretical ceiling is `K/n`. Defined for `N >= 2` and the proven
/// exponents `p = 1` (grouped) and `p = 2` (balanced).
pub fn bound_ratio(rel_error: f64, groups: usize, p: u32) -> Result<f64> {
    if groups < 2 {
        return Err(Error::BoundRatioDomain { groups });
    }
    if p != 1 && p != 2 {
        return Err(Error::InvalidExponent { p });
    }
    let base = 1.0 - 1.0 / groups as f64;
    Ok(rel_error / base.powi(p as i32))
}

// ── Randomized checks of the deterministic norm inequality ───────────────

/// Outcome of [`check_young_sweep`]: violation count and the largest
/// observed `lhs / rhs` ratio over all sampled pairs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct YoungSweep {
    pub pairs: usize,
    pub violations: usize,
    /// Maximum of `lhs / rhs` over the sweep; the inequality holds while
    /// this stays at or below 1 (within the forward pass's rounding slack).
    pub max_ratio: f64,
}

/// Checks the deterministic norm inequality `||Wx|| <= sqrt(K) ||W|| ||x||`
/// on `pairs` independently sampled (operator, input) pairs. The
/// inequality is exact mathematics, so any violation indicates a broken
/// forward pass or norm computation.
#[allow(clippy::too_many_arguments)] // flat sweep parameters, mirrored by the CLI flags
pub fn check_young_sweep(
    out_channels: usize,
    in_channels: usize,
    kernel_size: usize,
    length: usize,
    pairs: usize,
    init: WeightInit,
    distribution: InputDistribution,
    padding: PaddingMode,
    seed: u64,
) -> Result<YoungSweep> {
    if pairs == 0 {
        return Err(Error::EmptySet { what: "sampled pairs" });
    }
    let shape = SignalShape::new(in_channels, length)?;
    let ratios: Vec<(bool, f64)> = (0..pairs)
        .into_par_iter()
        .map(|i| -> Result<(bool, f64)> {
            let w = init_standard_conv(
                out_channels,
                in_channels,
                kernel_size,
                init,
                SeedSpec::new(seed, streams::PAIR_BASE + 2 * i as u64),
            )?;
            let x = sample_input(
                shape,
                distribution,
                SeedSpec::new(seed, streams::PAIR_BASE + 2 * i as u64 + 1),
            );
            let check = crate::conv::check_young(&w, &x, padding)?;
            let ratio = if check.rhs > 0.0 { check.lhs / check.rhs } else { 0.0 };
            Ok((check.holds, ratio))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(YoungSweep {
        pairs,
        violations: ratios.iter().filter(|(holds, _)| !holds).count(),
        max_ratio: ratios.iter().map(|(_, r)| *r).fold(0.0, f64::max),
    })
}

// ── Monte Carlo check of the expectation bound ───────────────────────────

/// Outcome of [`check_lemma2_montecarlo`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Lemma2Check {
    /// Monte Carlo mean of `||W x||^2`.
    pub lhs: f64,
    /// `(K/n) * mean ||W||^2 * mean ||x||^2` over the same draws.
    pub rhs: f64,
    /// `rhs - lhs`; nonnegative up to sampling noise when the expectation
    /// bound holds.
    pub margin: f64,
    /// Standard error of `lhs`, for sizing the sampling noise.
    pub lhs_std_error: f64,
    pub draws: usize,
}

/// Monte Carlo check of the sharpened expectation bound
/// `E||Wx||^2 <= (K/n) E||W||^2 E||x||^2` for zero-mean i.i.d. taps.
/// Draws independent (operator, input) pairs — He-initialized taps and
/// standard normal inputs, both zero-mean i.i.d. as the bound requires —
/// and compares the sample means. The bound needs the zero-mean
/// independence assumption: structured weights (for example a constant
/// operator matched to a constant input) can exceed it by a factor up to
/// the channel count, so no check is offered for that regime.
pub fn check_lemma2_montecarlo(
    out_channels: usize,
    in_channels: usize,
    kernel_size: usize,
    length: usize,
    draws: usize,
    seed: u64,
) -> Result<Lemma2Check> {
    if draws < 2 {
        return Err(Error::EmptySet { what: "Monte Carlo draws" });
    }
    let shape = SignalShape::new(in_channels, length)?;
    let samples: Vec<(f64, f64, f64)> = (0..draws)
        .into_par_iter()
        .map(|i| -> Result<(f64, f64, f64)> {
            let w = init_standard_conv(
                out_channels,
                in_channels,
                kernel_size,
                WeightInit::He,
                SeedSpec::new(seed, streams::PAIR_BASE + 2 * i as u64),
            )?;
            let x = sample_input(
                shape,
                InputDistribution::Normal01,
                SeedSpec::new(seed, streams::PAIR_BASE + 2 * i as u64 + 1),
            );
            let y = w.forward(&x, PaddingMode::ZeroSame)?;
            let pn = w.param_l2_norm();
            Ok((y.l2_norm_sq(), pn * pn, x.l2_norm_sq()))
        })
        .collect::<Result<Vec<_>>>()?;
    let nf = draws as f64;
    let lhs = samples.iter().map(|s| s.0).sum::<f64>() / nf;
    let mean_w_sq = samples.iter().map(|s| s.1).sum::<f64>() / nf;
    let mean_x_sq = samples.iter().map(|s| s.2).sum::<f64>() / nf;
    let rhs = kernel_size as f64 / in_channels as f64 * mean_w_sq * mean_x_sq;
    let var_lhs = samples.iter().map(|s| (s.0 - lhs) * (s.0 - lhs)).sum::<f64>() / (nf - 1.0);
    Ok(Lemma2Check {
        lhs,
        rhs,
        margin: rhs - lhs,
        lhs_std_error: (var_lhs / nf).sqrt(),
        draws,
    })
}

// ── Reports ──────────────────────────────────────────────────────────────

/// One row of a group-count sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupRecord {
    pub groups: usize,
    pub error: f64,
    pub rel_error: f64,
    /// Present exactly when `groups >= 2`.
    pub bound_ratio: Option<f64>,
    pub flagged_trials: usize,
}

/// Identifying metadata of one experiment run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunMeta {
    pub out_channels: usize,
    pub in_channels: usize,
    pub kernel_size: usize,
    pub length: usize,
    pub s_trials: usize,
    pub s_inputs: usize,
    pub distribution: InputDistribution,
    pub init: WeightInit,
    pub padding: PaddingMode,
    pub seed: u64,
}

/// Sweep results for one variant: per-group-count records sorted by group
/// count, an optional slope fit, and the run metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct ApproximabilityReport {
    pub variant: VariantKind,
    pub records: Vec<GroupRecord>,
    pub slope: Option<SlopeFit>,
    pub meta: RunMeta,
}

impl ApproximabilityReport {
    /// Sorts records by group count and checks the bound-ratio presence
    /// rule (`Some` exactly for `groups >= 2`).
    pub fn new(
        variant: VariantKind,
        mut records: Vec<GroupRecord>,
        slope: Option<SlopeFit>,
        meta: RunMeta,
    ) -> Result<Self> {
        records.sort_by_key(|r| r.groups);
        for r in &records {
            if (r.groups >= 2) != r.bound_ratio.is_some() {
                return Err(Error::ShapeMismatch {
                    what: "bound ratio presence",
                    expected: usize::from(r.groups >= 2),
                    actual: usize::from(r.bound_ratio.is_some()),
                });
            }
        }
        Ok(Self {
            variant,
            records,
            slope,
            meta,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::SignalShape;

    fn signal(channels: usize, length: usize, data: &[f64]) -> MultiChannelSignal {
        MultiChannelSignal::new(SignalShape::new(channels, length).unwrap(), data.to_vec())
            .unwrap()
    }

    // ── Design construction ──────────────────────────────────────────

    #[test]
    fn depthwise_scalar_design_is_the_input_column() {
        // K = 1, D = 1, groups = channels: the design for group k is the
        // S x 1 column of that channel's scalar samples.
        let inputs = vec![
            signal(2, 1, &[1.0, 10.0]),
            signal(2, 1, &[2.0, 20.0]),
            signal(2, 1, &[3.0, 30.0]),
        ];
        let ctx = DesignContext::new(&inputs, 1, PaddingMode::ZeroSame).unwrap();
        let d0 = build_design(&ctx, 2, VariantKind::Gc, 0).unwrap();
        let d1 = build_design(&ctx, 2, VariantKind::Gc, 1).unwrap();
        assert_eq!(d0.design().as_slice(), &[1.0, 2.0, 3.0]);
        assert_eq!(d1.design().as_slice(), &[10.0, 20.0, 30.0]);
    }

    #[test]
    fn balanced_design_appends_mean_columns() {
        let inputs = vec![signal(2, 1, &[1.0, 3.0]), signal(2, 1, &[5.0, 7.0])];
        let ctx = DesignContext::new(&inputs, 1, PaddingMode::ZeroSame).unwrap();
        let d = build_design(&ctx, 2, VariantKind::Bgc, 0).unwrap();
        assert_eq!(d.cols(), 2);
        // Column 0: group-0 channel; column 1: mean of both channels.
        assert_eq!(d.design().column(0).as_slice(), &[1.0, 5.0]);
        assert_eq!(d.design().column(1).as_slice(), &[2.0, 6.0]);
    }

    #[test]
    fn balanced_doubles_the_unknown_count() {
        for (n, k, groups) in [(8, 3, 2), (8, 1, 4), (12, 5, 3)] {
            let gc = VariantKind::Gc.unknowns_per_channel(n, k, groups);
            let bgc = VariantKind::Bgc.unknowns_per_channel(n, k, groups);
            assert_eq!(bgc, 2 * gc);
        }
    }

    #[test]
    fn underdetermined_pool_is_rejected() {
        // 1 input of length 2 gives 2 rows; GC at 1 group needs K*n = 4.
        let inputs = vec![signal(2, 2, &[1.0, 2.0, 3.0, 4.0])];
        let ctx = DesignContext::new(&inputs, 2 + 1, PaddingMode::ZeroSame);
        // kernel size 3, n = 2: cols = 6 > rows = 2.
        let ctx = ctx.unwrap();
        assert!(matches!(
            build_design(&ctx, 1, VariantKind::Gc, 0),
            Err(Error::Underdetermined { rows: 2, unknowns: 6 })
        ));
    }

    #[test]
    fn gram_matches_explicit_product() {
        // The Gram assembled from pool-level blocks must equal Aᵀ A of the
        // materialized design.
        let inputs: Vec<MultiChannelSignal> = (0..6)
            .map(|s| {
                MultiChannelSignal::from_fn(SignalShape::new(4, 5).unwrap(), |c, d| {
                    ((s * 31 + c * 7 + d * 3) % 11) as f64 * 0.3 - 1.2
                })
                .unwrap()
            })
            .collect();
        let ctx = DesignContext::new(&inputs, 3, PaddingMode::ZeroSame).unwrap();
        for variant in [VariantKind::Gc, VariantKind::Bgc] {
            for group in 0..2 {
                let d = build_design(&ctx, 2, variant, group).unwrap();
                let a = d.design();
                let explicit = a.transpose() * a;
                let err = (&explicit - d.gram()).norm() / explicit.norm();
                assert!(err < 1e-13, "{variant} group {group}: gram mismatch {err}");
            }
        }
    }

    #[test]
    fn context_rejects_mismatched_pool_shapes() {
        let inputs = vec![signal(2, 2, &[0.0; 4]), signal(2, 3, &[0.0; 6])];
        assert!(DesignContext::new(&inputs, 1, PaddingMode::ZeroSame).is_err());
    }

    // ── Slope fitting ────────────────────────────────────────────────

    #[test]
    fn exact_power_law_recovers_slope_and_coefficient() {
        let points: Vec<(usize, f64)> = [4usize, 8, 16, 32, 64]
            .iter()
            .map(|&n| {
                let base = 1.0 - 1.0 / n as f64;
                (n, 7.0 * base * base)
            })
            .collect();
        let fit = fit_slope(&points, 1.0).unwrap();
        assert!((fit.gamma - 2.0).abs() < 1e-9, "gamma {}", fit.gamma);
        assert!((fit.coefficient - 7.0).abs() < 1e-9, "coefficient {}", fit.coefficient);
        assert_eq!(fit.kept, vec![4, 8, 16, 32, 64]);
        assert!(fit.excluded.is_empty());
    }

    #[test]
    fn norm_factor_divides_out_of_coefficient() {
        let points: Vec<(usize, f64)> = [2usize, 4, 8]
            .iter()
            .map(|&n| (n, 3.0 * 5.0 * (1.0 - 1.0 / n as f64)))
            .collect();
        let fit = fit_slope(&points, 5.0).unwrap();
        assert!((fit.gamma - 1.0).abs() < 1e-9);
        assert!((fit.coefficient - 3.0).abs() < 1e-9);
    }

    #[test]
    fn degenerate_points_are_excluded_and_reported() {
        // N = 1 and a numerically-zero error both drop out; one usable
        // point remains, which is an error listing the exclusions.
        let points = vec![(1usize, 0.0), (2, 1e-20), (4, 0.5)];
        let err = fit_slope(&points, 1.0).unwrap_err();
        match err {
            Error::InsufficientSlopePoints { kept, excluded } => {
                assert_eq!(kept, 1);
                assert!(excluded.contains("N=1"), "{excluded}");
                assert!(excluded.contains("numerical floor"), "{excluded}");
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn duplicate_group_counts_cannot_be_fit() {
        let points = vec![(4usize, 0.5), (4, 0.25)];
        assert!(matches!(
            fit_slope(&points, 1.0),
            Err(Error::InsufficientSlopePoints { .. })
        ));
    }

    // ── Bound ratios ─────────────────────────────────────────────────

    #[test]
    fn bound_ratio_divides_by_decay_power() {
        let r = bound_ratio(0.03, 4, 1).unwrap();
        assert!((r - 0.04).abs() < 1e-15);
        let r = bound_ratio(0.03, 4, 2).unwrap();
        assert!((r - 0.03 / 0.5625).abs() < 1e-15);
    }

    #[test]
    fn bound_ratio_rejects_bad_domain() {
        assert!(matches!(
            bound_ratio(0.1, 1, 1),
            Err(Error::BoundRatioDomain { groups: 1 })
        ));
        assert!(matches!(bound_ratio(0.1, 4, 3), Err(Error::InvalidExponent { p: 3 })));
    }

    // ── Report construction ──────────────────────────────────────────

    fn meta() -> RunMeta {
        RunMeta {
            out_channels: 4,
            in_channels: 4,
            kernel_size: 1,
            length: 2,
            s_trials: 3,
            s_inputs: 5,
            distribution: InputDistribution::Normal01,
            init: WeightInit::He,
            padding: PaddingMode::ZeroSame,
            seed: 0,
        }
    }

    #[test]
    fn report_sorts_records_by_group_count() {
        let records = vec![
            GroupRecord { groups: 4, error: 0.2, rel_error: 0.02, bound_ratio: Some(0.03), flagged_trials: 0 },
            GroupRecord { groups: 2, error: 0.1, rel_error: 0.01, bound_ratio: Some(0.02), flagged_trials: 0 },
        ];
        let report = ApproximabilityReport::new(VariantKind::Gc, records, None, meta()).unwrap();
        assert_eq!(report.records[0].groups, 2);
        assert_eq!(report.records[1].groups, 4);
    }

    #[test]
    fn report_rejects_misplaced_bound_ratio() {
        let records = vec![GroupRecord {
            groups: 1,
            error: 0.0,
            rel_error: 0.0,
            bound_ratio: Some(0.0),
            flagged_trials: 0,
        }];
        assert!(ApproximabilityReport::new(VariantKind::Gc, records, None, meta()).is_err());
    }

    // ── Estimator edge cases ─────────────────────────────────────────

    #[test]
    fn young_sweep_small_shapes_have_no_violations() {
        let sweep = check_young_sweep(
            3,
            4,
            3,
            6,
            50,
            WeightInit::He,
            InputDistribution::Normal01,
            PaddingMode::ZeroSame,
            7,
        )
        .unwrap();
        assert_eq!(sweep.pairs, 50);
        assert_eq!(sweep.violations, 0);
        assert!(sweep.max_ratio > 0.0 && sweep.max_ratio <= 1.0 + 1e-9);
    }

    #[test]
    fn lemma2_margin_is_positive_at_moderate_draws() {
        let check = check_lemma2_montecarlo(4, 8, 3, 16, 400, 3).unwrap();
        assert!(check.lhs > 0.0 && check.rhs > 0.0);
        assert!(
            check.margin >= -4.0 * check.lhs_std_error,
            "margin {} se {}",
            check.margin,
            check.lhs_std_error
        );
    }

    #[test]
    fn estimate_rejects_empty_inputs() {
        let w = StandardConv::from_fn(2, 2, 1, |_, _, _| 1.0).unwrap();
        assert!(matches!(
            estimate_error(std::slice::from_ref(&w), &[], 1, VariantKind::Gc, PaddingMode::ZeroSame),
            Err(Error::EmptySet { what: "input pool" })
        ));
        assert!(matches!(
            estimate_error(&[], &[signal(2, 1, &[1.0, 2.0])], 1, VariantKind::Gc, PaddingMode::ZeroSame),
            Err(Error::EmptySet { what: "weight trials" })
        ));
    }

    #[test]
    fn zero_input_pool_flags_trials_and_reports_zero_error() {
        // All-zero inputs make every Gram zero: the pseudo-inverse path
        // takes over, targets are zero, and trials are flagged.
        let w = StandardConv::from_fn(2, 2, 1, |i, j, _| (i + j) as f64 + 1.0).unwrap();
        let inputs = vec![signal(2, 2, &[0.0; 4]), signal(2, 2, &[0.0; 4])];
        let est = estimate_error(&[w], &inputs, 2, VariantKind::Gc, PaddingMode::ZeroSame).unwrap();
        assert_eq!(est.error, 0.0);
        assert_eq!(est.rel_error, 0.0);
        assert_eq!(est.flagged_trials, vec![0]);
    }

    #[test]
    fn single_group_estimate_is_numerically_zero() {
        // With one group the model family contains the target operator,
        // so the minimum is exactly zero up to rounding.
        let trials: Vec<StandardConv> = (0..3)
            .map(|t| {
                StandardConv::from_fn(2, 2, 3, |i, j, tt| {
                    ((t * 17 + i * 5 + j * 3 + tt) % 7) as f64 * 0.4 - 1.0
                })
                .unwrap()
            })
            .collect();
        let inputs: Vec<MultiChannelSignal> = (0..8)
            .map(|s| {
                MultiChannelSignal::from_fn(SignalShape::new(2, 4).unwrap(), |c, d| {
                    ((s * 13 + c * 5 + d) % 9) as f64 * 0.3 - 1.1
                })
                .unwrap()
            })
            .collect();
        for variant in [VariantKind::Gc, VariantKind::Bgc] {
            let est = estimate_error(&trials, &inputs, 1, variant, PaddingMode::ZeroSame).unwrap();
            let scale = est.mean_w_param_sq * est.mean_input_sq;
            assert!(est.error <= 1e-12 * scale, "{variant}: error {}", est.error);
            match variant {
                // The plain grouped family at one group is exactly the
                // standard family: full-rank design, no fallback.
                VariantKind::Gc => assert!(est.flagged_trials.is_empty()),
                // The balanced family at one group duplicates its columns
                // (the intergroup mean of a single group is the signal
                // itself), so the solve legitimately runs on the
                // minimum-norm fallback and every trial is flagged.
                VariantKind::Bgc => assert_eq!(est.flagged_trials, vec![0, 1, 2]),
            }
        }
    }
}
