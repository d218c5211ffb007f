//! Multi-command CLI surface.
//!
//! Exit codes: 0 success, 2 usage error (clap), 1 data error.

use crate::analytics::{self, DiversityQuery, Structure};
use crate::builders::count_violations;
use crate::calibrate::{self, AbsorbMode, CalibrationSet, ConvertOptions};
use crate::error::{Error, Result};
use crate::flow;
use crate::greedy;
use crate::io::{load_mask, load_matrix, save_mask, save_matrix};
use crate::oracle;
use crate::report::{
    BenchEntry, BenchReport, ConvertReport, MaskReport, RatioStats, ViolationReport, SCHEMA_VERSION,
};
use crate::strategy::{StrategyParams, StrategyRegistry};
use crate::synth::gaussian_matrix;
use crate::tensor::{masked_l1, pruned_l1, NmConfig};
use clap::{Args, Parser, Subcommand, ValueEnum};
use std::path::PathBuf;
use std::time::Instant;

#[derive(Parser)]
#[command(
    name = "nmsparse",
    version,
    about = "N:M and transposable sparsity mask toolkit"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build a sparsity mask for a weight matrix
    Mask(MaskArgs),
    /// Exact mask-diversity counts per structure
    Diversity(DiversityArgs),
    /// Validate a mask against an N:M pattern
    Violation(ViolationArgs),
    /// Largest N within a violation-probability budget
    SelectN(SelectNArgs),
    /// Convert a sparse model to a target N:M structure
    Convert(ConvertArgs),
    /// Least-squares refit of masked weights on a calibration set
    Adaprune(AdapruneArgs),
    /// Exhaustive transposable optimum for a small block
    Oracle(OracleArgs),
    /// Runtime and approximation-ratio comparison of flow vs greedy
    Bench(BenchArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum ReportFormat {
    Json,
    Text,
}

#[derive(Clone, Copy, ValueEnum)]
enum AbsorbModeArg {
    SumPreserving,
    PrunedMean,
}

impl From<AbsorbModeArg> for AbsorbMode {
    fn from(v: AbsorbModeArg) -> Self {
        match v {
            AbsorbModeArg::SumPreserving => AbsorbMode::SumPreserving,
            AbsorbModeArg::PrunedMean => AbsorbMode::PrunedMean,
        }
    }
}

#[derive(Args)]
struct MaskArgs {
    /// unstructured | nm | sequential | transposable-opt | transposable-greedy
    #[arg(long)]
    kind: String,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    m: Option<usize>,
    #[arg(long)]
    sparsity: Option<f64>,
    /// Drop surplus pruned entries after greedy selection
    #[arg(long)]
    repair: bool,
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "text")]
    report: ReportFormat,
}

#[derive(Args)]
struct DiversityArgs {
    /// Total tensor element count
    #[arg(long)]
    t: u64,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    m: Option<usize>,
    /// unstructured | structured | transposable | sequential; repeatable
    #[arg(long)]
    structure: Vec<String>,
    /// Comma-separated N:M list for a full grid, e.g. 1:2,2:4,4:8
    #[arg(long)]
    configs: Option<String>,
}

#[derive(Args)]
struct ViolationArgs {
    #[arg(long)]
    mask: PathBuf,
    #[arg(long)]
    n: usize,
    #[arg(long)]
    m: usize,
    #[arg(long, value_enum, default_value = "json")]
    report: ReportFormat,
}

#[derive(Args)]
struct SelectNArgs {
    #[arg(long)]
    rho: f64,
    #[arg(long)]
    m: usize,
    #[arg(long)]
    budget: f64,
}

#[derive(Args)]
struct ConvertArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    mask: PathBuf,
    /// Target structure as N:M, e.g. 4:8
    #[arg(long)]
    target: String,
    #[arg(long)]
    transposable: bool,
    #[arg(long = "bias-fix")]
    bias_fix: bool,
    #[arg(long)]
    adaprune: bool,
    #[arg(long)]
    calib: Option<PathBuf>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long = "absorb-mode", value_enum, default_value = "sum-preserving")]
    absorb_mode: AbsorbModeArg,
    #[arg(long = "out-mask")]
    out_mask: Option<PathBuf>,
    #[arg(long = "out-w")]
    out_weights: Option<PathBuf>,
}

#[derive(Args)]
struct AdapruneArgs {
    #[arg(long)]
    w: PathBuf,
    #[arg(long)]
    mask: PathBuf,
    #[arg(long)]
    calib: PathBuf,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct OracleArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    n: usize,
    #[arg(long)]
    m: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    /// Comma-separated block sides, e.g. 8,64
    #[arg(long)]
    m: String,
    #[arg(long, default_value_t = 100)]
    trials: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

/// Parse argv and run; returns the process exit code.
pub fn dispatch<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(err) => {
            let _ = err.print();
            return err.exit_code();
        }
    };
    match run(cli.command) {
        Ok(()) => 0,
        Err(err) => {
            eprintln!("error: {err}");
            1
        }
    }
}

fn nm_config(n: Option<usize>, m: Option<usize>) -> Result<NmConfig> {
    match (n, m) {
        (Some(n), Some(m)) => NmConfig::new(n, m),
        _ => Err(Error::MissingArgument("--n and --m are required".into())),
    }
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Mask(args) => run_mask(args),
        Command::Diversity(args) => run_diversity(args),
        Command::Violation(args) => run_violation(args),
        Command::SelectN(args) => run_select_n(args),
        Command::Convert(args) => run_convert(args),
        Command::Adaprune(args) => run_adaprune(args),
        Command::Oracle(args) => run_oracle(args),
        Command::Bench(args) => run_bench(args),
    }
}

fn run_mask(args: MaskArgs) -> Result<()> {
    let registry = StrategyRegistry::builtin();
    let strategy = registry.get(&args.kind)?;
    let mat = load_matrix(&args.input)?;
    let cfg = match (args.n, args.m) {
        (Some(n), Some(m)) => Some(NmConfig::new(n, m)?),
        _ => None,
    };
    let params = StrategyParams {
        cfg,
        sparsity: args.sparsity,
        repair: args.repair,
    };
    let mask = strategy.build(&mat, &params)?;
    if let Some(out) = &args.out {
        save_mask(out, &mask)?;
    }
    let report = MaskReport::new(
        strategy.name(),
        &mat,
        &mask,
        cfg.as_ref(),
        strategy.tile_side(&params),
    )?;
    match args.report {
        ReportFormat::Json => println!("{}", serde_json::to_string_pretty(&report)?),
        ReportFormat::Text => {
            println!(
                "kind={} shape={}x{} kept={} sparsity={:.4} kept_l1={} pruned_l1={}",
                report.kind,
                report.rows,
                report.cols,
                report.kept_count,
                report.sparsity,
                report.kept_l1,
                report.pruned_l1
            );
        }
    }
    Ok(())
}

fn parse_structures(raw: &[String]) -> Result<Vec<Structure>> {
    if raw.is_empty() {
        return Ok(vec![
            Structure::Unstructured,
            Structure::Structured,
            Structure::Transposable,
            Structure::Sequential,
        ]);
    }
    raw.iter().map(|s| s.parse()).collect()
}

fn run_diversity(args: DiversityArgs) -> Result<()> {
    let structures = parse_structures(&args.structure)?;
    if let Some(configs) = &args.configs {
        let cfgs: Vec<NmConfig> = configs
            .split(',')
            .map(|s| s.trim().parse())
            .collect::<Result<_>>()?;
        let header: Vec<String> = cfgs.iter().map(|c| c.to_string()).collect();
        println!("T={} {}", args.t, header.join(" "));
        for structure in &structures {
            let cells: Vec<String> = cfgs
                .iter()
                .map(|cfg| {
                    let q = DiversityQuery {
                        tensor_size: args.t,
                        cfg: *cfg,
                        structure: *structure,
                    };
                    analytics::mask_diversity(&q)
                        .map(|v| format!("{} (≈{})", v, analytics::scientific(&v)))
                })
                .collect::<Result<_>>()?;
            println!("{structure}: {}", cells.join(" | "));
        }
        return Ok(());
    }
    let cfg = nm_config(args.n, args.m)?;
    for structure in &structures {
        let q = DiversityQuery {
            tensor_size: args.t,
            cfg,
            structure: *structure,
        };
        let v = analytics::mask_diversity(&q)?;
        if structures.len() == 1 {
            println!("{} (≈{})", v, analytics::scientific(&v));
        } else {
            println!("{structure}: {} (≈{})", v, analytics::scientific(&v));
        }
    }
    Ok(())
}

fn run_violation(args: ViolationArgs) -> Result<()> {
    let mask = load_mask(&args.mask)?;
    let cfg = NmConfig::new(args.n, args.m)?;
    let (violating, flips) = count_violations(&mask, &cfg)?;
    let blocks = mask.rows() * mask.cols() / cfg.m();
    let density = mask.zeros_count() as f64 / (mask.rows() * mask.cols()) as f64;
    let report = ViolationReport {
        schema: SCHEMA_VERSION,
        n: cfg.n(),
        m: cfg.m(),
        blocks,
        violating_blocks: violating,
        flipped_weights: flips,
        empirical_density: density,
        predicted_violation_probability: analytics::violation_probability(density, &cfg),
        empirical_violation_rate: violating as f64 / blocks as f64,
    };
    match args.report {
        ReportFormat::Json => println!("{}", serde_json::to_string_pretty(&report)?),
        ReportFormat::Text => println!(
            "blocks={} violating={} flips={} predicted_violation={:.6}",
            report.blocks,
            report.violating_blocks,
            report.flipped_weights,
            report.predicted_violation_probability
        ),
    }
    Ok(())
}

fn run_select_n(args: SelectNArgs) -> Result<()> {
    if !(0.0..=1.0).contains(&args.rho) {
        return Err(Error::InvalidConfig(format!(
            "rho must be in [0,1], got {}",
            args.rho
        )));
    }
    let n = analytics::select_n_for_budget(args.rho, args.m, args.budget)?;
    println!("{n}");
    Ok(())
}

fn run_convert(args: ConvertArgs) -> Result<()> {
    let w = load_matrix(&args.input)?;
    let source = load_mask(&args.mask)?;
    let target: NmConfig = args.target.parse()?;
    let calib = args
        .calib
        .as_ref()
        .map(|p| load_matrix(p).map(CalibrationSet::new))
        .transpose()?;
    let opts = ConvertOptions {
        bias_fix: args.bias_fix,
        absorb_mode: args.absorb_mode.into(),
        adaprune: args.adaprune,
        lambda: args.lambda,
    };
    let conv = calibrate::convert_mask(
        &w,
        &source,
        &target,
        args.transposable,
        calib.as_ref(),
        &opts,
    )?;
    if let Some(path) = &args.out_mask {
        save_mask(path, &conv.mask)?;
    }
    if let Some(path) = &args.out_weights {
        save_matrix(path, &conv.weights)?;
    }
    let output_mse = calib
        .as_ref()
        .map(|c| calibrate::output_mse(&w, &conv.weights, c.x()))
        .transpose()?;
    let report = ConvertReport {
        schema: SCHEMA_VERSION,
        target_n: target.n(),
        target_m: target.m(),
        transposable: args.transposable,
        bias_fix: args.bias_fix,
        adaprune: args.adaprune,
        flipped_weights: conv.flipped,
        kept_l1: masked_l1(&conv.weights, &conv.mask)?,
        pruned_l1: pruned_l1(&conv.weights, &conv.mask)?,
        output_mse,
    };
    println!("{}", serde_json::to_string_pretty(&report)?);
    Ok(())
}

fn run_adaprune(args: AdapruneArgs) -> Result<()> {
    let w = load_matrix(&args.w)?;
    let mask = load_mask(&args.mask)?;
    let calib = CalibrationSet::new(load_matrix(&args.calib)?);
    let refit = calibrate::adaprune(&w, &mask, &calib, args.lambda)?;
    if let Some(out) = &args.out {
        save_matrix(out, &refit)?;
    }
    let mse = calibrate::output_mse(&w, &refit, calib.x())?;
    println!("{{\"schema\":{SCHEMA_VERSION},\"output_mse\":{mse}}}");
    Ok(())
}

fn run_oracle(args: OracleArgs) -> Result<()> {
    let block = load_matrix(&args.input)?;
    let cfg = NmConfig::new(args.n, args.m)?;
    let (mask, kept) = oracle::exhaustive_transposable_optimum(&block, &cfg)?;
    if let Some(out) = &args.out {
        save_mask(out, &mask)?;
    }
    println!("{{\"schema\":{SCHEMA_VERSION},\"kept_l1\":{kept}}}");
    Ok(())
}

fn median_us(mut samples: Vec<f64>) -> f64 {
    samples.sort_by(f64::total_cmp);
    let mid = samples.len() / 2;
    if samples.len().is_multiple_of(2) {
        (samples[mid - 1] + samples[mid]) / 2.0
    } else {
        samples[mid]
    }
}

fn run_bench(args: BenchArgs) -> Result<()> {
    let sides: Vec<usize> = args
        .m
        .split(',')
        .map(|s| {
            s.trim()
                .parse::<usize>()
                .map_err(|e| Error::InvalidConfig(format!("bad M '{s}': {e}")))
        })
        .collect::<Result<_>>()?;
    if args.trials == 0 {
        return Err(Error::InvalidConfig("--trials must be >= 1".into()));
    }
    let mut entries = Vec::new();
    for m in sides {
        let cfg = NmConfig::new(m / 2, m)?;
        let mut flow_times = Vec::with_capacity(args.trials);
        let mut greedy_times = Vec::with_capacity(args.trials);
        let mut oracle_times = Vec::with_capacity(args.trials);
        let mut ratios = Vec::with_capacity(args.trials);
        for trial in 0..args.trials {
            let block = gaussian_matrix(m, m, 0.0, 1.0, args.seed + trial as u64);

            let t0 = Instant::now();
            let sol = flow::solve_tile(&block, &cfg)?;
            flow_times.push(t0.elapsed().as_secs_f64() * 1e6);

            let t1 = Instant::now();
            let p = greedy::greedy_prune_set(&block, &cfg)?;
            greedy_times.push(t1.elapsed().as_secs_f64() * 1e6);

            if m <= 4 {
                let t2 = Instant::now();
                let _ = oracle::exhaustive_transposable_optimum(&block, &cfg)?;
                oracle_times.push(t2.elapsed().as_secs_f64() * 1e6);
            }

            let greedy_weight: f64 = p.iter().map(|&(i, j)| block.get(i, j).abs()).sum();
            ratios.push(greedy_weight / sol.cost);
        }
        entries.push(BenchEntry {
            m,
            n: cfg.n(),
            trials: args.trials,
            flow_median_us: median_us(flow_times),
            greedy_median_us: median_us(greedy_times),
            oracle_median_us: if oracle_times.is_empty() {
                None
            } else {
                Some(median_us(oracle_times))
            },
            ratio: RatioStats::from_values(&ratios)
                .ok_or_else(|| Error::InvalidConfig("no trials".into()))?,
        });
    }
    let report = BenchReport {
        schema: SCHEMA_VERSION,
        entries,
    };
    println!("{}", serde_json::to_string_pretty(&report)?);
    Ok(())
}
