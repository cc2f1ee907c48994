//! `sil`: data generation, pruning, training, sweeps, packings and plots.
//!
//! Every subcommand writes machine-readable CSV to stdout. Exit codes: 0 success,
//! 1 usage, 2 numeric failure, 3 partial result.

use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use sparse_index_lab::csq::{build_packing, default_coherence_cap, PackingConfig};
use sparse_index_lab::harness::config::KvConfig;
use sparse_index_lab::harness::plot::{emit_plots, PlotKind};
use sparse_index_lab::harness::sweep::{
    compare_pruned_unpruned, point_data, point_train_config, run_sweep, GridPoint, ResultRecord, SweepSpec,
};
use sparse_index_lab::model::{augment, sample_dataset};
use sparse_index_lab::pruning::prune_network;
use sparse_index_lab::rng::derive_seed;
use sparse_index_lab::training::{excess_risk, fit_traced};
use sparse_index_lab::Error;

#[derive(Parser)]
#[command(name = "sil", version, about = "Sparse index-model experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample a dataset and write it as CSV.
    Gen {
        #[command(flatten)]
        grid: GridArgs,
        /// Append the independent augmentation coordinate.
        #[arg(long)]
        augment: bool,
    },
    /// Run the pruning step and write the kept coordinates.
    Prune {
        #[command(flatten)]
        grid: GridArgs,
    },
    /// Prune, train and write the predictor.
    Train {
        #[command(flatten)]
        grid: GridArgs,
    },
    /// Pruned pipeline over a grid; one CSV row per grid point and seed.
    Sweep {
        #[command(flatten)]
        grid: GridArgs,
    },
    /// Pruned and unpruned arms side by side.
    Compare {
        #[command(flatten)]
        grid: GridArgs,
    },
    /// Build a low-correlation family of sparse frames.
    CsqPack {
        #[arg(long)]
        d: usize,
        #[arg(long)]
        s: usize,
        #[arg(long, default_value_t = 1)]
        r: usize,
        /// Number of frames.
        #[arg(long, default_value_t = 32)]
        count: usize,
        /// Correlation power.
        #[arg(long, default_value_t = 2)]
        k: u32,
        #[arg(long, default_value_t = 1.0)]
        q: f64,
        /// Coherence cap; defaults to 8e·ln(d²)/min(√⌊d/r⌋, s).
        #[arg(long)]
        cap: Option<f64>,
        #[arg(long, default_value_t = 10_000)]
        max_attempts: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Render an SVG from a results or coherence CSV.
    Plot {
        /// Input CSV.
        #[arg(long)]
        input: PathBuf,
        /// risk_vs_n | residual_vs_n | coherence_hist
        #[arg(long)]
        kind: String,
        #[arg(long)]
        out: PathBuf,
    },
}

/// Grid flags. Values are passed through the config parser, so lists like
/// `--n 500,2000` are accepted where a sweep expects them.
#[derive(Args)]
struct GridArgs {
    /// `key = value` file; flags override its entries.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    d: Option<String>,
    #[arg(long)]
    n: Option<String>,
    /// Network half-width.
    #[arg(long)]
    m: Option<String>,
    /// Pruning sparsity.
    #[arg(long = "M")]
    big_m: Option<String>,
    #[arg(long)]
    c: Option<String>,
    #[arg(long)]
    s: Option<String>,
    #[arg(long)]
    q: Option<String>,
    #[arg(long)]
    alpha: Option<String>,
    #[arg(long)]
    r: Option<String>,
    #[arg(long)]
    link: Option<String>,
    #[arg(long)]
    mode: Option<String>,
    #[arg(long)]
    delta: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    /// Seeds per grid point.
    #[arg(long)]
    seeds: Option<String>,
    #[arg(long)]
    jobs: Option<String>,
    #[arg(long)]
    kappa: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    resume: bool,
}

enum Failure {
    Usage(String),
    Numeric(String),
    Partial(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::DegenerateLink | Error::NonFinite(_) | Error::EmptySupport | Error::EmptyDataset => {
                Failure::Numeric(e.to_string())
            }
            _ => Failure::Usage(e.to_string()),
        }
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::Usage(e.to_string())
    }
}

type Outcome = std::result::Result<(), Failure>;

impl GridArgs {
    fn spec(&self, single: bool) -> Result<SweepSpec, Failure> {
        let mut kv = match &self.config {
            Some(p) => KvConfig::parse(&fs::read_to_string(p)?)?,
            None => KvConfig::default(),
        };
        if single && kv.get("seeds").is_none() {
            kv.set("seeds", "1");
        }
        let flags = [
            ("d", &self.d),
            ("n", &self.n),
            ("m", &self.m),
            ("M", &self.big_m),
            ("c", &self.c),
            ("s", &self.s),
            ("q", &self.q),
            ("alpha", &self.alpha),
            ("r", &self.r),
            ("link", &self.link),
            ("mode", &self.mode),
            ("delta", &self.delta),
            ("seed", &self.seed),
            ("seeds", &self.seeds),
            ("jobs", &self.jobs),
            ("kappa", &self.kappa),
        ];
        for (k, v) in flags {
            if let Some(v) = v {
                kv.set(k, v.clone());
            }
        }
        if let Some(o) = &self.out {
            kv.set("out", o.display().to_string());
        }
        if self.resume {
            kv.set("resume", "true");
        }
        Ok(SweepSpec::from_config(&kv)?)
    }

    fn single_point(&self) -> Result<(SweepSpec, GridPoint), Failure> {
        let spec = self.spec(true)?;
        let mut points = spec.points();
        if points.len() != 1 {
            return Err(Failure::Usage(format!("expected a single grid point, got {}", points.len())));
        }
        Ok((spec, points.remove(0)))
    }
}

/// Stdout, or a file when `--out` is given.
fn sink(out: Option<&Path>) -> io::Result<Box<dyn Write>> {
    Ok(match out {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn gen(grid: &GridArgs, aug: bool) -> Outcome {
    let (spec, point) = grid.single_point()?;
    let seed = point.seed(spec.base_seed);
    let model = point.model(spec.base_seed, spec.delta)?;
    let mut data = sample_dataset(&model, point.n, seed)?;
    if aug {
        data = augment(&data, seed)?;
    }
    let mut w = sink(grid.out.as_deref())?;
    data.write_csv(&mut w)?;
    w.flush()?;
    Ok(())
}

fn prune(grid: &GridArgs) -> Outcome {
    let (spec, point) = grid.single_point()?;
    let (model, data) = point_data(&spec, &point)?;
    let cfg = point_train_config(&spec, &point, &model, &data);
    let support = prune_network(&data, &cfg.prune_config())?;
    if let Some(p) = &grid.out {
        support.write(BufWriter::new(File::create(p)?))?;
    }
    let mut out = io::stdout().lock();
    writeln!(out, "index,sources")?;
    for i in support.indices() {
        let tags: Vec<&str> = support.sources(i).iter().map(|s| s.tag()).collect();
        writeln!(out, "{i},{}", tags.join(";"))?;
    }
    eprintln!("residual {:.6}", support.residual(model.augmented().directions()));
    Ok(())
}

fn train(grid: &GridArgs) -> Outcome {
    let (spec, point) = grid.single_point()?;
    let (model, data) = point_data(&spec, &point)?;
    let cfg = point_train_config(&spec, &point, &model, &data);
    let (predictor, trace) = fit_traced(&data, &cfg)?;
    if let Some(p) = &grid.out {
        let mut w = BufWriter::new(File::create(p)?);
        predictor.write(&mut w)?;
        w.flush()?;
    }
    let risk = excess_risk(&predictor, &model, spec.n_test, derive_seed(point.seed(spec.base_seed), &[0x7e57]))?;
    let mut out = io::stdout().lock();
    writeln!(out, "support_size,support_residual,excess_risk,iterations,converged")?;
    writeln!(
        out,
        "{},{},{},{},{}",
        predictor.support.len(),
        predictor.support.residual(model.augmented().directions()),
        risk,
        trace.second_layer.iterations,
        trace.second_layer.converged
    )?;
    Ok(())
}

fn grid_run(grid: &GridArgs, compare: bool) -> Outcome {
    let mut spec = grid.spec(false)?;
    if grid.out.is_none() {
        spec.out = PathBuf::from(if compare { "compare.csv" } else { "sweep.csv" });
    }
    let records: Vec<ResultRecord> = if compare { compare_pruned_unpruned(&spec)? } else { run_sweep(&spec)? };
    io::stdout().lock().write_all(&fs::read(&spec.out)?)?;
    let failed = records.iter().filter(|r| !r.ok()).count();
    if failed > 0 {
        return Err(Failure::Numeric(format!("{failed} of {} records failed", records.len())));
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn csq_pack(d: usize, s: usize, r: usize, count: usize, k: u32, q: f64, cap: Option<f64>, max_attempts: usize, seed: u64, out: &Path) -> Outcome {
    let cfg = PackingConfig {
        d,
        r,
        s,
        count,
        k,
        coherence_cap: cap.unwrap_or_else(|| default_coherence_cap(d, r, s)),
        max_attempts,
        seed,
        q,
    };
    let packing = build_packing(&cfg)?;
    packing.export(out)?;
    let mut w = io::stdout().lock();
    writeln!(w, "frames,requested,achieved_coherence,max_column_coherence,acceptance_rate,complete")?;
    writeln!(
        w,
        "{},{count},{},{},{},{}",
        packing.frames.len(),
        packing.achieved_coherence,
        packing.max_column_coherence,
        packing.acceptance_rate,
        packing.complete
    )?;
    if !packing.complete {
        return Err(Failure::Partial(format!("built {} of {count} frames", packing.frames.len())));
    }
    Ok(())
}

fn plot(input: &Path, kind: &str, out: &Path) -> Outcome {
    let kind: PlotKind = kind.parse()?;
    for w in emit_plots(input, kind, out)? {
        eprintln!("warning: {w}");
    }
    println!("svg\n{}", out.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let result = match &cli.command {
        Command::Gen { grid, augment } => gen(grid, *augment),
        Command::Prune { grid } => prune(grid),
        Command::Train { grid } => train(grid),
        Command::Sweep { grid } => grid_run(grid, false),
        Command::Compare { grid } => grid_run(grid, true),
        Command::CsqPack { d, s, r, count, k, q, cap, max_attempts, seed, out } => {
            csq_pack(*d, *s, *r, *count, *k, *q, *cap, *max_attempts, *seed, out)
        }
        Command::Plot { input, kind, out } => plot(input, kind, out),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
        Err(Failure::Numeric(m)) => {
            eprintln!("numeric failure: {m}");
            ExitCode::from(2)
        }
        Err(Failure::Partial(m)) => {
            eprintln!("partial: {m}");
            ExitCode::from(3)
        }
    }
}
