use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use plate_obstacle::experiment::{
    compare_report, emit_all_tables, read_cells, run_experiment, write_cells, ExperimentConfig,
};
use plate_obstacle::pcg::{pcg, KappaStop, PcgOptions, StopReference};
use plate_obstacle::schwarz::{build_decomposition, full_prolongation, one_level_setup, two_level_setup};
use plate_obstacle::sparse::write_vector;
use plate_obstacle::{Cover2D, Execution, ObstacleProblem, Overlap, PreconditionerKind};

#[derive(Parser)]
#[command(name = "plate-obstacle", version, about = "Clamped Kirchhoff plate obstacle problem: PDAS with Schwarz-preconditioned CG")]
struct Cli {
    /// Run sequentially even when built with the `parallel` feature.
    #[arg(long, global = true)]
    serial: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment matrix and write tables, cells and the run log.
    Run(RunArgs),
    /// Render tables from a previous run.
    Tables {
        /// Run directory or cells.json.
        input: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check scaling bands on a previous run; exits nonzero on violations.
    Check {
        /// Run directory or cells.json.
        input: PathBuf,
    },
    /// Write the cover, decomposition, matrices and a residual history for one level.
    Dump(DumpArgs),
}

#[derive(Args)]
struct RunArgs {
    /// TOML config file; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Levels, e.g. `1-6` or `2,3,5`.
    #[arg(long)]
    levels: Option<String>,
    /// Subdomain counts, e.g. `4,16,64`.
    #[arg(long = "J")]
    j: Option<String>,
    /// `small`, `generous` or both comma separated.
    #[arg(long)]
    overlap: Option<String>,
    /// `none`, `one`, `two` comma separated.
    #[arg(long)]
    prec: Option<String>,
    #[arg(long)]
    c: Option<f64>,
    #[arg(long)]
    tol: Option<f64>,
    /// PCG stopping reference: `preconditioned` (‖Bb‖) or `rhs` (‖b‖).
    #[arg(long)]
    stop: Option<String>,
    #[arg(long)]
    max_pdas: Option<usize>,
    #[arg(long = "budget-sec")]
    budget_sec: Option<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct DumpArgs {
    #[arg(long)]
    level: u32,
    #[arg(long = "J", default_value_t = 4)]
    j: usize,
    #[arg(long, default_value = "small")]
    overlap: String,
    #[arg(long, default_value = "one")]
    prec: String,
    #[arg(long, default_value_t = 1e-15)]
    tol: f64,
    #[arg(long)]
    max_iter: Option<usize>,
    #[arg(long, default_value = "preconditioned")]
    stop: String,
    /// Stop once the κ estimate settles, checking every N iterations.
    #[arg(long)]
    kappa_every: Option<usize>,
    /// Seed of the random right-hand side.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

fn parse_list<T: std::str::FromStr>(s: &str) -> anyhow::Result<Vec<T>>
where
    T::Err: std::fmt::Display,
{
    s.split(',')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(|t| t.parse::<T>().map_err(|e| anyhow::anyhow!("invalid value `{t}`: {e}")))
        .collect()
}

fn parse_levels(s: &str) -> anyhow::Result<Vec<u32>> {
    let mut out = Vec::new();
    for part in s.split(',').map(str::trim).filter(|t| !t.is_empty()) {
        match part.split_once('-') {
            Some((a, b)) => {
                let (a, b): (u32, u32) = (a.trim().parse()?, b.trim().parse()?);
                if a > b {
                    bail!("empty level range `{part}`");
                }
                out.extend(a..=b);
            }
            None => out.push(part.parse()?),
        }
    }
    Ok(out)
}

fn parse_stop(s: &str) -> anyhow::Result<StopReference> {
    match s {
        "rhs" => Ok(StopReference::Rhs),
        "preconditioned" => Ok(StopReference::PreconditionedRhs),
        _ => bail!("unknown stopping reference `{s}` (expected rhs or preconditioned)"),
    }
}

fn build_config(args: RunArgs) -> anyhow::Result<ExperimentConfig> {
    let mut cfg = match &args.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(l) = &args.levels {
        cfg.levels = parse_levels(l)?;
    }
    if let Some(j) = &args.j {
        cfg.j_values = parse_list(j)?;
    }
    if let Some(o) = &args.overlap {
        cfg.overlaps = parse_list::<Overlap>(o)?;
    }
    if let Some(p) = &args.prec {
        cfg.preconditioners = parse_list::<PreconditionerKind>(p)?;
    }
    cfg.pdas_c = args.c.unwrap_or(cfg.pdas_c);
    cfg.pcg_rel_tol = args.tol.unwrap_or(cfg.pcg_rel_tol);
    if let Some(s) = &args.stop {
        cfg.pcg_stop = parse_stop(s)?;
    }
    cfg.max_pdas = args.max_pdas.unwrap_or(cfg.max_pdas);
    cfg.budget_sec = args.budget_sec.unwrap_or(cfg.budget_sec);
    cfg.seed = args.seed.unwrap_or(cfg.seed);
    if let Some(o) = args.out {
        cfg.out = o;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn cells_path(input: &Path) -> PathBuf {
    if input.is_dir() {
        input.join("cells.json")
    } else {
        input.to_path_buf()
    }
}

fn run(args: RunArgs, exec: Execution) -> anyhow::Result<ExitCode> {
    let cfg = build_config(args)?;
    let out = cfg.out.clone();
    std::fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
    std::fs::write(out.join("config.toml"), cfg.to_toml())?;
    let log_path = out.join("run_log.jsonl");
    let mut log = BufWriter::new(File::create(&log_path).with_context(|| format!("creating {}", log_path.display()))?);
    let cells = run_experiment(&cfg, exec, Some(&mut log))?;
    log.flush()?;
    write_cells(&cells, &out.join("cells.json"))?;
    for p in emit_all_tables(&cells, &out)? {
        println!("wrote {}", p.display());
    }
    let report = compare_report(&cells);
    std::fs::write(out.join("compare.md"), report.to_markdown())?;
    print!("{}", report.to_markdown());
    Ok(ExitCode::SUCCESS)
}

fn dump(args: DumpArgs, exec: Execution) -> anyhow::Result<()> {
    let out = &args.out;
    std::fs::create_dir_all(out)?;
    let cover = Cover2D::unit_square(args.level)?;
    let overlap: Overlap = args.overlap.parse()?;
    let prec: PreconditionerKind = args.prec.parse()?;
    let dd = build_decomposition(&cover, args.j, overlap)?;
    cover.write_csv(BufWriter::new(File::create(out.join("cover.csv"))?))?;
    dd.write_csv(&cover, BufWriter::new(File::create(out.join("decomposition.csv"))?))?;
    let problem = ObstacleProblem::reference(&cover, plate_obstacle::assembly::DEFAULT_PDAS_C, exec);
    problem
        .stiffness
        .write_matrix_market(BufWriter::new(File::create(out.join("stiffness.mtx"))?))?;
    write_vector(BufWriter::new(File::create(out.join("load.txt"))?), &problem.load)?;
    write_vector(BufWriter::new(File::create(out.join("obstacle.txt"))?), &problem.obstacle)?;
    let a = &problem.stiffness;
    let all: Vec<usize> = (0..a.n()).collect();
    let b = match prec {
        PreconditionerKind::None => None,
        PreconditionerKind::One => Some(one_level_setup(a, &all, &cover, &dd, exec)?),
        PreconditionerKind::Two => {
            let m = (args.j as f64).sqrt().log2().round() as u32;
            let p = full_prolongation(&Cover2D::unit_square(m.max(1))?, &cover)?;
            Some(two_level_setup(a, &all, &cover, &dd, &p, exec)?)
        }
    };
    let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
    let rhs: Vec<f64> = (0..a.n()).map(|_| rng.random_range(-1.0..1.0)).collect();
    write_vector(BufWriter::new(File::create(out.join("rhs.txt"))?), &rhs)?;
    let opts = PcgOptions {
        rel_tol: args.tol,
        reference: parse_stop(&args.stop)?,
        max_iter: args.max_iter,
        kappa_stop: args.kappa_every.map(|every| KappaStop { every, rel_change: 1e-3 }),
        ..PcgOptions::default()
    };
    let res = match &b {
        Some(b) => pcg(|x: &[f64], y: &mut [f64]| a.matvec(x, y, exec), |r: &[f64], z: &mut [f64]| b.apply_into(r, z), &rhs, &opts)?,
        None => pcg(|x: &[f64], y: &mut [f64]| a.matvec(x, y, exec), |r: &[f64], z: &mut [f64]| z.copy_from_slice(r), &rhs, &opts)?,
    };
    std::fs::write(out.join("residuals.csv"), res.residual_csv())?;
    println!(
        "level {} dofs {} J {} {} {}: {} iterations, kappa {:.4e}, Nc {}",
        args.level,
        cover.dof_count(),
        args.j,
        overlap.name(),
        prec.name(),
        res.iterations,
        res.kappa_estimate,
        dd.nc
    );
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let exec = if cli.serial { Execution::Serial } else { Execution::default() };
    let result = match cli.command {
        Command::Run(args) => run(args, exec),
        Command::Tables { input, out } => (|| {
            let cells = read_cells(&cells_path(&input))?;
            let dir = out.unwrap_or_else(|| if input.is_dir() { input.clone() } else { PathBuf::from(".") });
            for p in emit_all_tables(&cells, &dir)? {
                println!("wrote {}", p.display());
            }
            Ok(ExitCode::SUCCESS)
        })(),
        Command::Check { input } => (|| {
            let cells = read_cells(&cells_path(&input))?;
            let report = compare_report(&cells);
            print!("{}", report.to_markdown());
            Ok(if report.violations().next().is_some() { ExitCode::FAILURE } else { ExitCode::SUCCESS })
        })(),
        Command::Dump(args) => dump(args, exec).map(|_| ExitCode::SUCCESS),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
