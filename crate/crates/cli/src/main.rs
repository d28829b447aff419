//! `bgconv` — command-line harness around the convolution library.
//!
//! Four subcommands:
//!
//! * `scale` — sweep group counts, estimate approximation errors, and fit
//!   the error-decay exponent per variant.
//! * `bound` — the same sweep with errors normalized against the decay
//!   law, compared to the kernel-density ceiling `K/n`.
//! * `cost` — closed-form parameter and operation counts for one layer.
//! * `lemma-check` — randomized self-checks of the norm inequality and
//!   the expectation bound.
//!
//! Exit codes: 0 success; 2 configuration, usage, or I/O error;
//! 3 numerical failure; 4 bound assertion violated (`--assert-bounds`).

use bgconv::cost::{op_count, LayerKind, LayerSpec};
use bgconv::estimator::{check_lemma2_montecarlo, check_young_sweep};
use bgconv::sampling::{InputDistribution, WeightInit};
use bgconv::PaddingMode;
use bgconv_cli::config::{self, ConfigOverrides, ExperimentConfig};
use bgconv_cli::{csvout, experiment, svg};
use clap::{Args, Parser, Subcommand};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

/// A failed run: exit code plus the message printed to stderr.
struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn config(message: impl Into<String>) -> Self {
        Self {
            code: 2,
            message: message.into(),
        }
    }

    fn numeric(message: impl Into<String>) -> Self {
        Self {
            code: 3,
            message: message.into(),
        }
    }

    fn bounds(message: impl Into<String>) -> Self {
        Self {
            code: 4,
            message: message.into(),
        }
    }
}

impl From<bgconv::Error> for Failure {
    fn from(e: bgconv::Error) -> Self {
        Failure::numeric(e.to_string())
    }
}

fn parse_dist(s: &str) -> Result<InputDistribution, String> {
    s.parse()
}

fn parse_init(s: &str) -> Result<WeightInit, String> {
    s.parse()
}

fn parse_padding(s: &str) -> Result<PaddingMode, String> {
    s.parse()
}

fn parse_layer_kind(s: &str) -> Result<LayerKind, String> {
    match s.to_ascii_lowercase().as_str() {
        "standard" | "std" | "dense" => Ok(LayerKind::Standard),
        "gc" | "grouped" => Ok(LayerKind::Grouped),
        "bgc" | "balanced" => Ok(LayerKind::Balanced),
        other => Err(format!(
            "unknown layer kind `{other}` (expected standard|gc|bgc)"
        )),
    }
}

fn layer_label(kind: LayerKind) -> &'static str {
    match kind {
        LayerKind::Standard => "standard",
        LayerKind::Grouped => "gc",
        LayerKind::Balanced => "bgc",
    }
}

#[derive(Parser)]
#[command(
    name = "bgconv",
    version,
    about = "Measure how well grouped 1-D convolutions approximate dense ones"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sweep group counts and fit the error-decay exponent per variant
    Scale(ScaleArgs),
    /// Sweep group counts and compare normalized errors to the K/n ceiling
    Bound(BoundArgs),
    /// Print closed-form parameter and operation counts for one layer
    Cost(CostArgs),
    /// Run randomized self-checks of the norm and expectation bounds
    LemmaCheck(LemmaArgs),
}

/// Flags shared by the two sweep modes. Precedence: built-in defaults,
/// then the config file, then these flags.
#[derive(Args)]
struct ExperimentFlags {
    /// Config file of `key = value` lines
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output channels
    #[arg(long)]
    m: Option<usize>,
    /// Input channels
    #[arg(long)]
    n: Option<usize>,
    /// Taps per kernel (odd)
    #[arg(long = "K")]
    kernel_size: Option<usize>,
    /// Signal length
    #[arg(long = "D")]
    length: Option<usize>,
    /// Number of weight trials
    #[arg(long = "S")]
    s_trials: Option<usize>,
    /// Pooled input count (defaults to S)
    #[arg(long = "S-inputs")]
    s_inputs: Option<usize>,
    /// Comma-separated group counts, e.g. 4,8,16
    #[arg(long)]
    groups: Option<String>,
    /// Comma-separated variants: gc, bgc
    #[arg(long)]
    variant: Option<String>,
    /// Input distribution: normal | uniform
    #[arg(long, value_parser = parse_dist)]
    dist: Option<InputDistribution>,
    /// Weight initialization: he | glorot
    #[arg(long, value_parser = parse_init)]
    init: Option<WeightInit>,
    /// Padding mode: zero | circular
    #[arg(long, value_parser = parse_padding)]
    padding: Option<PaddingMode>,
    /// Experiment seed
    #[arg(long)]
    seed: Option<u64>,
    /// Write CSV here instead of stdout
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write an SVG plot here
    #[arg(long)]
    svg: Option<PathBuf>,
    /// Worker threads for trial evaluation (default: one per core)
    #[arg(long)]
    workers: Option<usize>,
    /// Record per-cell runtimes in the CSV (breaks byte-reproducibility)
    #[arg(long)]
    timings: bool,
}

impl ExperimentFlags {
    fn resolve(&self) -> Result<ExperimentConfig, Failure> {
        let groups = self
            .groups
            .as_deref()
            .map(config::parse_groups)
            .transpose()
            .map_err(Failure::config)?;
        let variants = self
            .variant
            .as_deref()
            .map(config::parse_variants)
            .transpose()
            .map_err(Failure::config)?;
        let overrides = ConfigOverrides {
            out_channels: self.m,
            in_channels: self.n,
            kernel_size: self.kernel_size,
            length: self.length,
            s_trials: self.s_trials,
            s_inputs: self.s_inputs,
            groups,
            variants,
            distribution: self.dist,
            init: self.init,
            padding: self.padding,
            seed: self.seed,
        };
        config::resolve(self.config.as_deref(), &overrides).map_err(Failure::config)
    }

    /// Writes the CSV to `--out` or stdout, and the plot to `--svg` if
    /// requested. The plot is rendered lazily so sweeps without `--svg`
    /// never pay for it.
    fn emit(&self, csv: &str, plot: impl FnOnce() -> String) -> Result<(), Failure> {
        match &self.out {
            Some(path) => write_file(path, csv)?,
            None => print!("{csv}"),
        }
        if let Some(path) = &self.svg {
            write_file(path, &plot())?;
        }
        Ok(())
    }

    /// Human-facing status lines go to stdout when the CSV went to a
    /// file, and to stderr when the CSV occupies stdout.
    fn status(&self, line: &str) {
        if self.out.is_some() {
            println!("{line}");
        } else {
            eprintln!("{line}");
        }
    }
}

#[derive(Args)]
struct ScaleArgs {
    #[command(flatten)]
    flags: ExperimentFlags,
}

#[derive(Args)]
struct BoundArgs {
    #[command(flatten)]
    flags: ExperimentFlags,
    /// Exit with code 4 if any normalized ratio exceeds the K/n ceiling
    #[arg(long)]
    assert_bounds: bool,
}

#[derive(Args)]
struct CostArgs {
    /// Layer family: standard | gc | bgc
    #[arg(long, value_parser = parse_layer_kind, default_value = "standard")]
    variant: LayerKind,
    /// Output channels
    #[arg(long, default_value_t = 256)]
    m: usize,
    /// Input channels
    #[arg(long, default_value_t = 256)]
    n: usize,
    /// Taps per kernel
    #[arg(long = "K", default_value_t = 3)]
    kernel_size: usize,
    /// Signal length
    #[arg(long = "D", default_value_t = 32)]
    length: usize,
    /// Group count (ignored for standard layers)
    #[arg(long = "N", default_value_t = 1)]
    groups: usize,
}

#[derive(Args)]
struct LemmaArgs {
    /// Output channels
    #[arg(long, default_value_t = 256)]
    m: usize,
    /// Input channels
    #[arg(long, default_value_t = 256)]
    n: usize,
    /// Taps per kernel
    #[arg(long = "K", default_value_t = 3)]
    kernel_size: usize,
    /// Signal length
    #[arg(long = "D", default_value_t = 32)]
    length: usize,
    /// Sampled (operator, input) pairs for the norm-inequality sweep
    #[arg(long, default_value_t = 1000)]
    pairs: usize,
    /// Monte Carlo draws for the expectation bound
    #[arg(long, default_value_t = 1000)]
    draws: usize,
    /// Input distribution for the norm sweep: normal | uniform
    #[arg(long, value_parser = parse_dist, default_value = "normal")]
    dist: InputDistribution,
    /// Weight initialization for the norm sweep: he | glorot
    #[arg(long, value_parser = parse_init, default_value = "he")]
    init: WeightInit,
    /// Padding mode: zero | circular
    #[arg(long, value_parser = parse_padding, default_value = "zero")]
    padding: PaddingMode,
    /// Experiment seed
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Worker threads (default: one per core)
    #[arg(long)]
    workers: Option<usize>,
}

fn write_file(path: &Path, content: &str) -> Result<(), Failure> {
    std::fs::write(path, content)
        .map_err(|e| Failure::config(format!("cannot write {}: {e}", path.display())))
}

fn init_workers(workers: Option<usize>) -> Result<(), Failure> {
    if let Some(n) = workers {
        if n == 0 {
            return Err(Failure::config("--workers must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure::config(format!("cannot configure {n} worker threads: {e}")))?;
    }
    Ok(())
}

fn run_scale(args: &ScaleArgs) -> Result<(), Failure> {
    let cfg = args.flags.resolve()?;
    init_workers(args.flags.workers)?;
    let outcome = experiment::run_sweep(&cfg, true, args.flags.timings)?;
    let csv = csvout::render(&cfg, &outcome, false);
    args.flags.emit(&csv, || svg::render_scale(&outcome))?;
    for line in experiment::summary_lines(&outcome) {
        args.flags.status(&line);
    }
    Ok(())
}

fn run_bound(args: &BoundArgs) -> Result<(), Failure> {
    let cfg = args.flags.resolve()?;
    if cfg.groups.contains(&1) {
        return Err(Failure::config(
            "bound mode requires every group count to be at least 2; drop N = 1 from groups",
        ));
    }
    init_workers(args.flags.workers)?;
    let outcome = experiment::run_sweep(&cfg, false, args.flags.timings)?;
    let csv = csvout::render(&cfg, &outcome, true);
    args.flags.emit(&csv, || svg::render_bound(&outcome))?;
    let max_ratio = outcome
        .max_bound_ratio()
        .ok_or_else(|| Failure::numeric("sweep produced no bound ratios"))?;
    args.flags.status(&format!(
        "bound check: max ratio = {max_ratio:.6e}, ceiling K/n = {:.6e}",
        outcome.ceiling
    ));
    if args.assert_bounds && max_ratio > outcome.ceiling {
        return Err(Failure::bounds(format!(
            "bound violated: max ratio {max_ratio:.6e} exceeds K/n = {:.6e}",
            outcome.ceiling
        )));
    }
    Ok(())
}

fn run_cost(args: &CostArgs) -> Result<(), Failure> {
    let groups = match args.variant {
        LayerKind::Standard => 1,
        _ => args.groups,
    };
    let spec = LayerSpec::new(
        args.variant,
        args.m,
        args.n,
        args.kernel_size,
        args.length,
        groups,
    )
    .map_err(|e| Failure::config(e.to_string()))?;
    let cost = op_count(&spec);
    println!("variant = {}", layer_label(args.variant));
    println!("N = {groups}");
    println!("params = {}", cost.params);
    println!("conv_ops = {}", cost.conv_ops);
    println!("mean_ops = {}", cost.mean_ops);
    println!("total_ops = {}", cost.total_ops());
    Ok(())
}

fn run_lemma_check(args: &LemmaArgs) -> Result<(), Failure> {
    init_workers(args.workers)?;
    let young = check_young_sweep(
        args.m,
        args.n,
        args.kernel_size,
        args.length,
        args.pairs,
        args.init,
        args.dist,
        args.padding,
        args.seed,
    )?;
    println!(
        "norm inequality: pairs = {}, violations = {}, max lhs/rhs = {:.6}",
        young.pairs, young.violations, young.max_ratio
    );
    let mc = check_lemma2_montecarlo(
        args.m,
        args.n,
        args.kernel_size,
        args.length,
        args.draws,
        args.seed,
    )?;
    println!(
        "expectation bound: draws = {}, lhs = {:.6e}, rhs = {:.6e}, margin = {:.6e}, lhs std error = {:.6e}",
        mc.draws, mc.lhs, mc.rhs, mc.margin, mc.lhs_std_error
    );
    let mut failures = Vec::new();
    if young.violations > 0 {
        failures.push(format!(
            "norm inequality violated on {} of {} pairs (max lhs/rhs = {:.6})",
            young.violations, young.pairs, young.max_ratio
        ));
    }
    // The expectation bound is checked statistically: the sample mean may
    // sit above the bound by sampling noise, so allow four standard errors.
    if mc.margin < -4.0 * mc.lhs_std_error {
        failures.push(format!(
            "expectation bound violated beyond noise: margin = {:.6e}, lhs std error = {:.6e}",
            mc.margin, mc.lhs_std_error
        ));
    }
    if failures.is_empty() {
        Ok(())
    } else {
        Err(Failure::numeric(failures.join("; ")))
    }
}

fn run(cli: &Cli) -> Result<(), Failure> {
    match &cli.command {
        Command::Scale(args) => run_scale(args),
        Command::Bound(args) => run_bound(args),
        Command::Cost(args) => run_cost(args),
        Command::LemmaCheck(args) => run_lemma_check(args),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(failure) => {
            eprintln!("error: {}", failure.message);
            ExitCode::from(failure.code)
        }
    }
}
