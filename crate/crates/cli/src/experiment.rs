//! Experiment execution: one shared input pool and trial-norm
//! precomputation per run, then a sweep over (variant, group count) cells
//! with optional per-cell timing, slope fits, and bound ratios.

use crate::config::ExperimentConfig;
use bgconv::estimator::{
    bound_ratio, estimate_with, fit_slope, prepare_trial_norms, ApproxEstimate,
    ApproximabilityReport, DesignContext, GroupRecord, RunMeta, SlopeFit, VariantKind,
};
use bgconv::sampling::{init_standard_conv, sample_input, streams, SeedSpec};
use bgconv::signal::SignalShape;
use bgconv::Error;
use std::time::Instant;

/// One CSV-ready result row.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub variant: VariantKind,
    pub groups: usize,
    pub error: f64,
    pub rel_error: f64,
    /// Present for 2 or more groups.
    pub bound_ratio: Option<f64>,
    /// The variant's fitted slope, repeated on each of its rows.
    pub gamma: Option<f64>,
    /// Filled only when timing collection is enabled.
    pub runtime_ms: Option<u128>,
    pub flagged_trials: usize,
}

/// Complete outcome of a sweep.
#[derive(Debug, Clone)]
pub struct SweepOutcome {
    pub rows: Vec<ResultRow>,
    pub reports: Vec<ApproximabilityReport>,
    /// Non-fatal conditions (failed slope fits, flagged trials), rendered
    /// as comment lines and printed to standard error.
    pub warnings: Vec<String>,
    pub diagnostics: Vec<String>,
    /// The bound ceiling `K/n` all ratios are compared against.
    pub ceiling: f64,
}

impl SweepOutcome {
    /// Largest bound ratio across all rows, if any row has one.
    pub fn max_bound_ratio(&self) -> Option<f64> {
        self.rows
            .iter()
            .filter_map(|r| r.bound_ratio)
            .fold(None, |acc, v| Some(acc.map_or(v, |a: f64| a.max(v))))
    }
}

fn decay_exponent(variant: VariantKind) -> u32 {
    match variant {
        VariantKind::Gc => 1,
        VariantKind::Bgc => 2,
    }
}

/// Runs the full sweep for `scale` (with slope fits) or `bound`
/// (`fit_slopes = false`) modes. Cells are evaluated in deterministic
/// (variant, group) order; trials inside each cell run in parallel with an
/// ordered reduction, so outputs are identical at any worker count.
pub fn run_sweep(
    config: &ExperimentConfig,
    fit_slopes: bool,
    collect_timings: bool,
) -> Result<SweepOutcome, Error> {
    let shape = SignalShape::new(config.in_channels, config.length)?;
    let inputs: Vec<_> = (0..config.s_inputs)
        .map(|s| {
            sample_input(
                shape,
                config.distribution,
                SeedSpec::new(config.seed, streams::INPUT_BASE + s as u64),
            )
        })
        .collect();
    let ctx = DesignContext::new(&inputs, config.kernel_size, config.padding)?;
    let make_trial = {
        let (m, n, k) = (config.out_channels, config.in_channels, config.kernel_size);
        let (init, seed) = (config.init, config.seed);
        move |t: usize| {
            init_standard_conv(m, n, k, init, SeedSpec::new(seed, streams::TRIAL_BASE + t as u64))
        }
    };
    let norms = prepare_trial_norms(&ctx, &make_trial, config.s_trials)?;

    let meta = RunMeta {
        out_channels: config.out_channels,
        in_channels: config.in_channels,
        kernel_size: config.kernel_size,
        length: config.length,
        s_trials: config.s_trials,
        s_inputs: config.s_inputs,
        distribution: config.distribution,
        init: config.init,
        padding: config.padding,
        seed: config.seed,
    };
    let norm_factor = norms.mean_w_param_sq() * ctx.mean_input_sq();
    let ceiling = config.kernel_size as f64 / config.in_channels as f64;

    let mut group_order = config.groups.clone();
    group_order.sort_unstable();

    let mut rows = Vec::new();
    let mut reports = Vec::new();
    let mut warnings = Vec::new();
    let mut diagnostics = Vec::new();

    for &variant in &config.variants {
        let mut estimates: Vec<(usize, ApproxEstimate, Option<u128>)> = Vec::new();
        for &groups in &group_order {
            let started = Instant::now();
            let estimate = estimate_with(&ctx, &make_trial, &norms, groups, variant)?;
            let elapsed = collect_timings.then(|| started.elapsed().as_millis());
            if !estimate.flagged_trials.is_empty() {
                diagnostics.push(format!(
                    "{variant} N={groups}: {} of {} trials solved on the minimum-norm \
                     fallback (rank-deficient regressors)",
                    estimate.flagged_trials.len(),
                    estimate.s_trials,
                ));
            }
            estimates.push((groups, estimate, elapsed));
        }

        let slope = if fit_slopes {
            let points: Vec<(usize, f64)> =
                estimates.iter().map(|(n, e, _)| (*n, e.error)).collect();
            match fit_slope(&points, norm_factor) {
                Ok(fit) => {
                    if !fit.excluded.is_empty() {
                        let detail = fit
                            .excluded
                            .iter()
                            .map(|(n, e, why)| format!("N={n} error={e:.3e} ({why})"))
                            .collect::<Vec<_>>()
                            .join(", ");
                        warnings.push(format!(
                            "{variant}: slope fit excluded degenerate points: {detail}"
                        ));
                    }
                    Some(fit)
                }
                Err(err) => {
                    warnings.push(format!("{variant}: no slope fitted: {err}"));
                    None
                }
            }
        } else {
            None
        };

        let mut records = Vec::new();
        for (groups, estimate, elapsed) in &estimates {
            let ratio = if *groups >= 2 {
                Some(bound_ratio(estimate.rel_error, *groups, decay_exponent(variant))?)
            } else {
                None
            };
            records.push(GroupRecord {
                groups: *groups,
                error: estimate.error,
                rel_error: estimate.rel_error,
                bound_ratio: ratio,
                flagged_trials: estimate.flagged_trials.len(),
            });
            rows.push(ResultRow {
                variant,
                groups: *groups,
                error: estimate.error,
                rel_error: estimate.rel_error,
                bound_ratio: ratio,
                gamma: slope.as_ref().map(|s| s.gamma),
                runtime_ms: *elapsed,
                flagged_trials: estimate.flagged_trials.len(),
            });
        }
        reports.push(ApproximabilityReport::new(variant, records, slope, meta)?);
    }

    Ok(SweepOutcome {
        rows,
        reports,
        warnings,
        diagnostics,
        ceiling,
    })
}

/// One-line fit summary per variant, e.g. `variant=gc gamma=1.215833`.
pub fn summary_lines(outcome: &SweepOutcome) -> Vec<String> {
    outcome
        .reports
        .iter()
        .map(|report| match &report.slope {
            Some(SlopeFit { gamma, coefficient, .. }) => format!(
                "variant={} gamma={gamma:.6} coefficient={coefficient:.6e}",
                report.variant
            ),
            None => format!("variant={} gamma=unavailable", report.variant),
        })
        .collect()
}
