use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use fchmrf::bench::{exact_note, run_bench};
use fchmrf::em::{AdamW, EmConfig, DEFAULT_PAIR_BUDGET};
use fchmrf::io::{peak_memory_kb, write_fit_bundle, write_simulation_bundle, FitTiming, RunConfig};
use fchmrf::oracle::{run_suite, Suite};
use fchmrf::pipeline::run_pipeline;
use fchmrf::sim::{run_replications, DeltaMuSource, SimConfig};
use fchmrf::volume::GridDims;

/// Environment variable that fixes the worker thread count.
const THREADS_ENV: &str = "FCHMRF_THREADS";

#[derive(Parser)]
#[command(
    name = "fchmrf",
    version,
    about = "Spatial FDR control with a fully connected hidden Markov random field"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit the field to a z-statistic volume and run the LIS procedure.
    Fit(FitArgs),
    /// Replicated synthetic experiments against Benjamini-Hochberg.
    Simulate(SimulateArgs),
    /// Timing table for the lattice filter and one mean-field update.
    Bench(BenchArgs),
    /// Brute-force reference checks.
    Oracle(OracleArgs),
}

#[derive(Args)]
struct EmArgs {
    /// Maximum EM iterations.
    #[arg(long, default_value_t = 25)]
    max_em: usize,
    /// Stop after this many iterations without a new best loss.
    #[arg(long, default_value_t = 5)]
    patience: usize,
    /// Unrolled mean-field iterations.
    #[arg(long = "R", default_value_t = 5)]
    r: usize,
    /// Monte Carlo label samples per EM iteration.
    #[arg(long, default_value_t = 100)]
    samples: usize,
    /// Optimizer steps per EM iteration.
    #[arg(long, default_value_t = 5)]
    epochs: usize,
    #[arg(long, default_value_t = 1e-4)]
    lr: f64,
    #[arg(long, default_value_t = 0.01)]
    weight_decay: f64,
    /// Start the smoothness weight at 5 instead of 1.
    #[arg(long)]
    weak_signal: bool,
    /// Voxel pairs sampled for kernel bandwidths.
    #[arg(long, default_value_t = DEFAULT_PAIR_BUDGET)]
    pair_budget: usize,
}

impl EmArgs {
    fn config(&self, seed: u64) -> EmConfig {
        EmConfig {
            r: self.r,
            samples: self.samples,
            max_iterations: self.max_em,
            patience: self.patience,
            epochs: self.epochs,
            optimizer: AdamW {
                lr: self.lr,
                weight_decay: self.weight_decay,
                ..AdamW::default()
            },
            weak_signal: self.weak_signal,
            pair_budget: self.pair_budget,
            seed,
        }
    }
}

#[derive(Args)]
struct FitArgs {
    /// z-statistic volume (`.hdr` or `.raw` path).
    #[arg(long)]
    zstats: PathBuf,
    /// Group mean-difference volume for the appearance kernel.
    #[arg(long)]
    delta_mu: Option<PathBuf>,
    /// Analysis mask; nonzero voxels are tested.
    #[arg(long)]
    mask: Option<PathBuf>,
    #[arg(long, default_value_t = 0.1)]
    alpha: f64,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Leave runtime and memory fields empty so outputs are byte-identical.
    #[arg(long)]
    reproducible: bool,
    #[command(flatten)]
    em: EmArgs,
}

#[derive(Args)]
struct SimulateArgs {
    /// `N` for a cube or `NX,NY,NZ`.
    #[arg(long, default_value = "20")]
    dims: String,
    /// Target signal proportion.
    #[arg(long, default_value_t = 0.2)]
    proportion: f64,
    #[arg(long, default_value_t = -2.0, allow_hyphen_values = true)]
    mu1: f64,
    #[arg(long, default_value_t = 1.0)]
    sigma1sq: f64,
    #[arg(long, default_value_t = 0.1)]
    alpha: f64,
    #[arg(long, default_value_t = 1)]
    reps: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    /// Every voxel null.
    #[arg(long)]
    all_null: bool,
    /// One mask shared by all replications.
    #[arg(long)]
    fixed_mask: bool,
    /// Fixed mean-difference volume; generated from each mask when absent.
    #[arg(long)]
    delta_mu: Option<PathBuf>,
    /// Leave `runtime_s` empty so outputs are byte-identical.
    #[arg(long)]
    reproducible: bool,
    #[command(flatten)]
    em: EmArgs,
}

#[derive(Args)]
struct BenchArgs {
    /// Ascending comma-separated voxel counts.
    #[arg(long, value_delimiter = ',', default_values_t = [50_000usize, 100_000, 200_000])]
    sizes: Vec<usize>,
    /// Feature dimension of the filtered positions.
    #[arg(long, default_value_t = 4)]
    d: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Clone, Copy, ValueEnum)]
enum SuiteArg {
    Filter,
    Meanfield,
    Lis,
}

#[derive(Args)]
struct OracleArgs {
    #[arg(long, value_enum)]
    suite: SuiteArg,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

fn parse_dims(s: &str) -> Result<GridDims> {
    let parts: Vec<usize> = s
        .split(',')
        .map(|p| p.trim().parse::<usize>())
        .collect::<std::result::Result<_, _>>()
        .with_context(|| format!("invalid --dims {s:?}"))?;
    Ok(match parts[..] {
        [n] => GridDims::cube(n)?,
        [nx, ny, nz] => GridDims::new(nx, ny, nz)?,
        _ => bail!("--dims takes N or NX,NY,NZ, got {s:?}"),
    })
}

fn configure_threads() -> Result<()> {
    if let Ok(v) = std::env::var(THREADS_ENV) {
        let n: usize = v
            .parse()
            .with_context(|| format!("{THREADS_ENV}={v:?} is not a count"))?;
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("configuring the thread pool")?;
    }
    Ok(())
}

fn fit(args: FitArgs) -> Result<bool> {
    let start = Instant::now();
    let config = RunConfig {
        zstats: args.zstats,
        delta_mu: args.delta_mu,
        mask: args.mask,
        out: args.out,
        alpha: args.alpha,
        em: args.em.config(args.seed),
    };
    config.validate()?;
    let inputs = config.load_inputs().context("loading inputs")?;
    let result = run_pipeline(
        &inputs.x,
        &inputs.coords,
        inputs.delta_mu.as_deref(),
        &config.em,
        config.alpha,
    )
    .context("fitting")?;
    let timing = if args.reproducible {
        FitTiming::default()
    } else {
        FitTiming {
            runtime_s: Some(start.elapsed().as_secs_f64()),
            peak_memory_kb: peak_memory_kb(),
        }
    };
    write_fit_bundle(&config, &inputs.mask, &result, timing).context("writing outputs")?;
    eprintln!(
        "fit: m={} k={} w=({:.4}, {:.4}, {:.4}) em_iterations={}",
        inputs.mask.count(),
        result.outcome.k,
        result.weights.w0,
        result.weights.w1,
        result.weights.w2,
        result.state.iteration
    );
    Ok(true)
}

fn simulate(args: SimulateArgs) -> Result<bool> {
    let dims = parse_dims(&args.dims)?;
    let config = SimConfig {
        alpha: args.alpha,
        replications: args.reps,
        seed: args.seed,
        all_null: args.all_null,
        fixed_mask: args.fixed_mask,
        delta_mu: args
            .delta_mu
            .map_or(DeltaMuSource::SignalCorrelated, DeltaMuSource::External),
        em: args.em.config(args.seed),
        ..SimConfig::new(dims, args.proportion, args.mu1, args.sigma1sq)
    };
    config.validate()?;
    let summary = run_replications(&config)?;
    write_simulation_bundle(&args.out, &config, &summary, !args.reproducible)
        .context("writing outputs")?;
    eprintln!(
        "simulate: reps={} lis fdp={:.4} tp={:.1} | bh fdp={:.4} tp={:.1}",
        summary.records.len(),
        summary.lis.fdp.mean,
        summary.lis.tp.mean,
        summary.bh.fdp.mean,
        summary.bh.tp.mean
    );
    Ok(true)
}

fn bench(args: BenchArgs) -> Result<bool> {
    let rows = run_bench(&args.sizes, args.d, args.seed)?;
    let opt = |v: Option<f64>| v.map(|v| format!("{v:.6}")).unwrap_or_default();
    println!("m,lattice_filter_s,mean_field_step_s,exact_filter_s,filter_ratio,mean_field_ratio");
    for r in &rows {
        println!(
            "{},{:.6},{:.6},{},{},{}",
            r.m,
            r.lattice_filter_s,
            r.mean_field_step_s,
            opt(r.exact_filter_s),
            opt(r.filter_ratio),
            opt(r.mean_field_ratio)
        );
    }
    for r in &rows {
        if let Some(note) = exact_note(r.m) {
            eprintln!("{note}");
        }
    }
    Ok(true)
}

fn oracle(args: OracleArgs) -> Result<bool> {
    let suite = match args.suite {
        SuiteArg::Filter => Suite::Filter,
        SuiteArg::Meanfield => Suite::Meanfield,
        SuiteArg::Lis => Suite::Lis,
    };
    let lines = run_suite(suite, args.seed)?;
    for l in &lines {
        println!("{l}");
    }
    let passed = lines.iter().filter(|l| l.pass).count();
    println!("{} summary passed={passed}/{}", suite.name(), lines.len());
    Ok(passed == lines.len())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = configure_threads().and_then(|()| match cli.command {
        Command::Fit(a) => fit(a),
        Command::Simulate(a) => simulate(a),
        Command::Bench(a) => bench(a),
        Command::Oracle(a) => oracle(a),
    });
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
