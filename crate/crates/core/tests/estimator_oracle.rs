//! Estimator correctness against independent references: shift-stacked
//! regressors, SVD least squares, and exact structural invariants of the
//! measure (nesting, dominance, reproducibility).

mod common;

use bgconv::estimator::{
    build_design, build_family, estimate_error, prepare_trial_norms, solve_trial, DesignContext,
    VariantKind,
};
use bgconv::{GroupedConv, KernelGrid, MultiChannelSignal, PaddingMode, SignalShape, StandardConv};
use common::{mix_unit, oracle_design, oracle_estimate, seeded_signal, seeded_standard};
use nalgebra::DVector;

fn pool(channels: usize, length: usize, count: usize, seed: u64) -> Vec<MultiChannelSignal> {
    (0..count)
        .map(|s| seeded_signal(channels, length, seed ^ common::mix(s as u64)))
        .collect()
}

fn trials(m: usize, n: usize, k: usize, count: usize, seed: u64) -> Vec<StandardConv> {
    (0..count)
        .map(|t| seeded_standard(m, n, k, seed ^ common::mix(t as u64 + 1000)))
        .collect()
}

// ── Against the SVD oracle ──────────────────────────────────────────────

#[test]
fn estimate_matches_svd_oracle_across_cells() {
    let (m, n, k, d) = (4, 4, 3, 6);
    let inputs = pool(n, d, 5, 11);
    let ws = trials(m, n, k, 3, 17);
    for padding in [PaddingMode::ZeroSame, PaddingMode::Circular] {
        for groups in [1, 2, 4] {
            for variant in [VariantKind::Gc, VariantKind::Bgc] {
                let est = estimate_error(&ws, &inputs, groups, variant, padding).unwrap();
                let reference = oracle_estimate(&ws, &inputs, groups, variant, padding);
                let scale = est.mean_w_param_sq * est.mean_input_sq;
                assert!(
                    (est.error - reference).abs() <= 1e-10 * scale,
                    "{variant} N={groups} {padding}: {} vs oracle {}",
                    est.error,
                    reference,
                );
            }
        }
    }
}

#[test]
fn estimate_matches_svd_oracle_wide_kernel() {
    // Kernel wider than the signal exercises the padding-heavy regime.
    let (m, n, k, d) = (2, 4, 5, 3);
    let inputs = pool(n, d, 9, 23);
    let ws = trials(m, n, k, 2, 29);
    for padding in [PaddingMode::ZeroSame, PaddingMode::Circular] {
        for variant in [VariantKind::Gc, VariantKind::Bgc] {
            let est = estimate_error(&ws, &inputs, 2, variant, padding).unwrap();
            let reference = oracle_estimate(&ws, &inputs, 2, variant, padding);
            let scale = est.mean_w_param_sq * est.mean_input_sq;
            assert!(
                (est.error - reference).abs() <= 1e-10 * scale,
                "{variant} {padding}: {} vs {}",
                est.error,
                reference,
            );
        }
    }
}

// ── Design content ───────────────────────────────────────────────────────

#[test]
fn design_columns_equal_shift_stacked_reference() {
    let (n, k, d) = (6, 3, 5);
    let inputs = pool(n, d, 8, 31);
    for padding in [PaddingMode::ZeroSame, PaddingMode::Circular] {
        let ctx = DesignContext::new(&inputs, k, padding).unwrap();
        for groups in [1, 2, 3] {
            for variant in [VariantKind::Gc, VariantKind::Bgc] {
                for group in 0..groups {
                    let system = build_design(&ctx, groups, variant, group).unwrap();
                    let reference = oracle_design(&inputs, k, groups, variant, group, padding);
                    assert_eq!(system.design().shape(), reference.shape());
                    let diff = (system.design() - &reference).norm();
                    assert!(
                        diff <= 1e-14 * reference.norm().max(1.0),
                        "{variant} N={groups} k={group} {padding}: diff {diff}"
                    );
                }
            }
        }
    }
}

#[test]
fn design_times_taps_replays_grouped_forward() {
    // Multiplying the design by a tap column must reproduce the grouped
    // operator's forward output for that channel — this pins the design's
    // column layout to the operator semantics.
    let (groups, m, n, k, d) = (2, 4, 4, 3, 5);
    let inputs = pool(n, d, 3, 37);
    let grouped = GroupedConv::new(
        (0..groups)
            .map(|g| {
                KernelGrid::from_fn(m / groups, n / groups, k, |i, j, t| {
                    mix_unit((g * 971 + i * 83 + j * 19 + t) as u64)
                })
                .unwrap()
            })
            .collect(),
    )
    .unwrap();
    let (m_local, n_local) = (m / groups, n / groups);
    let ctx = DesignContext::new(&inputs, k, PaddingMode::ZeroSame).unwrap();
    for group in 0..groups {
        let system = build_design(&ctx, groups, VariantKind::Gc, group).unwrap();
        for i_local in 0..m_local {
            let mut taps = DVector::zeros(n_local * k);
            for j_local in 0..n_local {
                for t in 0..k {
                    taps[j_local * k + t] = grouped.block(group).kernel(i_local, j_local).taps()[t];
                }
            }
            let predicted = system.design() * &taps;
            for (s, x) in inputs.iter().enumerate() {
                let y = grouped.forward(x, PaddingMode::ZeroSame).unwrap();
                let chan = y.channel(group * m_local + i_local);
                for dd in 0..d {
                    let got = predicted[s * d + dd];
                    assert!(
                        (got - chan[dd]).abs() <= 1e-12 * (1.0 + chan[dd].abs()),
                        "group {group} channel {i_local} input {s} pos {dd}: {got} vs {}",
                        chan[dd]
                    );
                }
            }
        }
    }
}

// ── Structural invariants ────────────────────────────────────────────────

#[test]
fn balanced_never_underperforms_grouped() {
    // The balanced design contains every grouped column, so its least
    // squares minimum can only be lower; and errors are nonnegative.
    let (m, n, k, d) = (8, 8, 3, 7);
    let inputs = pool(n, d, 8, 41);
    let ws = trials(m, n, k, 3, 43);
    for groups in [2, 4, 8] {
        let gc = estimate_error(&ws, &inputs, groups, VariantKind::Gc, PaddingMode::ZeroSame).unwrap();
        let bgc = estimate_error(&ws, &inputs, groups, VariantKind::Bgc, PaddingMode::ZeroSame).unwrap();
        let scale = gc.mean_w_param_sq * gc.mean_input_sq;
        assert!(gc.error >= 0.0 && bgc.error >= 0.0);
        assert!(
            bgc.error <= gc.error + 1e-12 * scale,
            "N={groups}: balanced {} exceeds grouped {}",
            bgc.error,
            gc.error
        );
    }
}

#[test]
fn nested_group_counts_increase_the_error() {
    // Groups that refine each other give nested model families: a
    // 2N-group block-diagonal operator is also N-group block-diagonal,
    // so the error is monotone along the divisibility chain — exactly,
    // not statistically.
    let (m, n, k, d) = (8, 8, 3, 7);
    let inputs = pool(n, d, 8, 47);
    let ws = trials(m, n, k, 3, 53);
    let errs: Vec<f64> = [1usize, 2, 4, 8]
        .iter()
        .map(|&groups| {
            estimate_error(&ws, &inputs, groups, VariantKind::Gc, PaddingMode::ZeroSame)
                .unwrap()
                .error
        })
        .collect();
    let scale = 1e-11;
    for pair in errs.windows(2) {
        assert!(
            pair[0] <= pair[1] + scale,
            "refinement decreased the error: {errs:?}"
        );
    }
}

#[test]
fn estimates_are_bit_reproducible() {
    let (m, n, k, d) = (4, 4, 3, 6);
    let inputs = pool(n, d, 5, 59);
    let ws = trials(m, n, k, 4, 61);
    let a = estimate_error(&ws, &inputs, 2, VariantKind::Bgc, PaddingMode::ZeroSame).unwrap();
    let b = estimate_error(&ws, &inputs, 2, VariantKind::Bgc, PaddingMode::ZeroSame).unwrap();
    assert_eq!(a.error.to_bits(), b.error.to_bits());
    assert_eq!(a.rel_error.to_bits(), b.rel_error.to_bits());
}

#[test]
fn worker_count_does_not_change_results() {
    let (m, n, k, d) = (4, 4, 3, 6);
    let inputs = pool(n, d, 5, 67);
    let ws = trials(m, n, k, 6, 71);
    let run = |threads: usize| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| {
                estimate_error(&ws, &inputs, 4, VariantKind::Bgc, PaddingMode::Circular).unwrap()
            })
    };
    let single = run(1);
    let quad = run(4);
    assert_eq!(single.error.to_bits(), quad.error.to_bits());
    assert_eq!(single.rel_error.to_bits(), quad.rel_error.to_bits());
    assert_eq!(single.flagged_trials, quad.flagged_trials);
}

#[test]
fn collinear_channels_fall_back_and_stay_finite() {
    // Duplicate input channels make the regressors rank-deficient; the
    // solve must flag trials and still return the correct (zero) minimum
    // at one group, where the family contains the target.
    let shape = SignalShape::new(2, 4).unwrap();
    let inputs: Vec<MultiChannelSignal> = (0..6)
        .map(|s| {
            MultiChannelSignal::from_fn(shape, |_, d| mix_unit((s * 29 + d) as u64)).unwrap()
        })
        .collect();
    let ws = trials(2, 2, 1, 2, 73);
    let est = estimate_error(&ws, &inputs, 1, VariantKind::Gc, PaddingMode::ZeroSame).unwrap();
    assert_eq!(est.flagged_trials, vec![0, 1]);
    let scale = est.mean_w_param_sq * est.mean_input_sq;
    assert!(est.error <= 1e-10 * scale, "error {}", est.error);
}

#[test]
fn precomputed_norms_match_inline_solves() {
    // solve_trial with and without precomputed target norms must agree to
    // the bit: the norms are derived from the same Gram either way.
    let (m, n, k, d) = (4, 4, 3, 5);
    let inputs = pool(n, d, 4, 79);
    let ws = trials(m, n, k, 3, 83);
    let ctx = DesignContext::new(&inputs, k, PaddingMode::ZeroSame).unwrap();
    let make = |t: usize| Ok(ws[t].clone());
    let norms = prepare_trial_norms(&ctx, &make, ws.len()).unwrap();
    let designs = build_family(&ctx, 2, VariantKind::Bgc).unwrap();
    for (t, w) in ws.iter().enumerate() {
        let with = solve_trial(&ctx, &designs, w, t, Some(norms.target_sq(t))).unwrap();
        let without = solve_trial(&ctx, &designs, w, t, None).unwrap();
        assert_eq!(with.total.to_bits(), without.total.to_bits());
        assert_eq!(with.group_residuals, without.group_residuals);
    }
}
