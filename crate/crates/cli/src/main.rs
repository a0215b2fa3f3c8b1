//! Command-line experiment runner: `run`, `sweep`, `plot`, and `corr`
//! subcommands around the causalid library.

use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use causalid::harness::{
    self, curves_from_csv, emit_correlation, emit_plots, records_from_csv, records_to_csv,
    trace_columns_from_csv, ExperimentConfig, PolicyChoice,
};

#[derive(Parser)]
#[command(name = "causalid", version, about = "Online causal system identification experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a single experiment from a config file.
    Run(RunArgs),
    /// Run a (lookahead, rollout-horizon) sweep plus a base-policy row.
    Sweep(SweepArgs),
    /// Render loss curves (CSV + PNG) from one or more records files.
    Plot(PlotArgs),
    /// Pearson correlation matrix of a trace file.
    Corr(CorrArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Experiment config (TOML).
    config: PathBuf,
    /// Override the config's seed list, e.g. --seeds 1,2,3.
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    /// Override the horizon T.
    #[arg(long)]
    horizon: Option<u64>,
    /// Override the policy (passive | rollout).
    #[arg(long)]
    policy: Option<String>,
    /// Override the output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Record real selection wall-clock in the records CSV (breaks
    /// byte-identical reruns).
    #[arg(long)]
    timing: bool,
}

#[derive(Args)]
struct SweepArgs {
    config: PathBuf,
    /// Grid of (lookahead, rollout-horizon) pairs, e.g. "(1,5),(2,5)".
    #[arg(long)]
    grid: String,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    #[arg(long)]
    horizon: Option<u64>,
}

#[derive(Args)]
struct PlotArgs {
    /// One records.csv per policy; curves are labeled by file stem.
    #[arg(required = true)]
    records: Vec<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    /// Mark a scenario switch step with a vertical line.
    #[arg(long)]
    switch: Option<u64>,
}

#[derive(Args)]
struct CorrArgs {
    trace: PathBuf,
    /// Output CSV path (defaults to stdout).
    #[arg(long)]
    out: Option<PathBuf>,
}

fn load_config(path: &PathBuf) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading config {}", path.display()))?;
    ExperimentConfig::parse(&text).with_context(|| format!("parsing {}", path.display()))
}

fn apply_overrides(
    cfg: &mut ExperimentConfig,
    seeds: &Option<Vec<u64>>,
    horizon: Option<u64>,
    policy: Option<&str>,
    out: &Option<PathBuf>,
    timing: bool,
) -> Result<()> {
    if let Some(seeds) = seeds {
        if seeds.is_empty() {
            bail!("--seeds needs at least one seed");
        }
        cfg.experiment.seeds = seeds.clone();
    }
    if let Some(h) = horizon {
        if h == 0 {
            bail!("--horizon must be at least 1");
        }
        cfg.experiment.horizon = h;
    }
    if let Some(p) = policy {
        cfg.experiment.policy = match p {
            "passive" => PolicyChoice::Passive,
            "rollout" => PolicyChoice::Rollout,
            other => bail!("unknown policy `{other}` (expected passive | rollout)"),
        };
    }
    if let Some(dir) = out {
        cfg.experiment.out_dir = Some(dir.to_string_lossy().to_string());
    }
    if timing {
        cfg.experiment.record_wallclock = true;
    }
    Ok(())
}

fn parse_grid(text: &str) -> Result<Vec<(usize, usize)>> {
    let mut grid = Vec::new();
    for part in text.split("),") {
        let clean = part.trim().trim_start_matches('(').trim_end_matches(')');
        if clean.is_empty() {
            continue;
        }
        let mut nums = clean.split(',');
        let l: usize = nums
            .next()
            .context("missing lookahead in grid entry")?
            .trim()
            .parse()
            .context("grid lookahead")?;
        let m: usize = nums
            .next()
            .context("missing rollout horizon in grid entry")?
            .trim()
            .parse()
            .context("grid rollout horizon")?;
        grid.push((l, m));
    }
    if grid.is_empty() {
        bail!("empty sweep grid");
    }
    Ok(grid)
}

fn main() {
    if let Err(e) = run(Cli::parse()) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run(args) => {
            let mut cfg = load_config(&args.config)?;
            apply_overrides(
                &mut cfg,
                &args.seeds,
                args.horizon,
                args.policy.as_deref(),
                &args.out,
                args.timing,
            )?;
            let out = harness::run_experiment(&cfg)?;
            let final_loss =
                harness::mean_final_loss(&out.records, cfg.experiment.horizon);
            println!(
                "{} rows; mean final loss {final_loss:.4}; mean selection {:.1} ms",
                out.records.len(),
                out.mean_selection_ms
            );
            if cfg.experiment.out_dir.is_none() {
                print!("{}", records_to_csv(&out.records));
            }
        }
        Command::Sweep(args) => {
            let mut cfg = load_config(&args.config)?;
            apply_overrides(&mut cfg, &args.seeds, args.horizon, None, &args.out, false)?;
            let grid = parse_grid(&args.grid)?;
            let rows = harness::run_sweep(&cfg, &grid)?;
            println!("lookahead  rollout_m  mean_final_loss  mean_selection_ms");
            for r in &rows {
                println!(
                    "{:>9}  {:>9}  {:>15.4}  {:>17.1}",
                    r.lookahead.map(|v| v.to_string()).unwrap_or("-".into()),
                    r.rollout_horizon
                        .map(|v| v.to_string())
                        .unwrap_or("-".into()),
                    r.mean_final_loss,
                    r.mean_selection_ms
                );
            }
        }
        Command::Plot(args) => {
            let mut curves = Vec::new();
            for path in &args.records {
                let text = std::fs::read_to_string(path)
                    .with_context(|| format!("reading {}", path.display()))?;
                // Accept either a records.csv or an already-aggregated
                // loss_curves.csv.
                if text.starts_with("policy,t,mean,std") {
                    curves.extend(curves_from_csv(&text).map_err(anyhow::Error::msg)?);
                } else {
                    let records = records_from_csv(&text)?;
                    let label = path
                        .file_stem()
                        .map(|s| s.to_string_lossy().to_string())
                        .unwrap_or_else(|| "run".into());
                    curves.push(harness::curve_from_records(&label, &records));
                }
            }
            let (csv, png) = emit_plots(&curves, args.switch, &args.out)?;
            println!("wrote {} and {}", csv.display(), png.display());
        }
        Command::Corr(args) => {
            let text = std::fs::read_to_string(&args.trace)
                .with_context(|| format!("reading {}", args.trace.display()))?;
            let columns = trace_columns_from_csv(&text)?;
            let matrix = emit_correlation(&columns);
            let csv = matrix.to_csv();
            match &args.out {
                Some(path) => std::fs::write(path, csv)
                    .with_context(|| format!("writing {}", path.display()))?,
                None => print!("{csv}"),
            }
        }
    }
    Ok(())
}
