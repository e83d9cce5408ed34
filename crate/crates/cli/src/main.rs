use std::ops::RangeInclusive;
use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use clap::{Args, Parser, Subcommand};
use npqr::coeff::{Method, ModelSpec};
use npqr::datakit::io::{
    read_complete_csv, read_grid, read_weighted_csv, write_complete_csv, write_curves_csv, write_grid, DataConfig,
    FitFile,
};
use npqr::datakit::{coarsen_to_grid, simulate_study1, simulate_study2, RawObservations, SkewNoise};
use npqr::inference::{
    covariate_grid, default_levels, default_p_range, export_curves, fit_spec, pmse, quantile_levels, select_model,
    FitConfig, FitResult, PointEstimate,
};
use npqr::sampler::McmcConfig;

#[derive(Parser)]
#[command(name = "npqr", version, about = "Bayesian simultaneous quantile regression with monotone B-splines")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Draw a simulated data set.
    Simulate(SimulateArgs),
    /// Replace responses by their bin on an empirical percentile grid.
    Coarsen(CoarsenArgs),
    /// Fit a model and write the fit file.
    Fit(FitArgs),
    /// Quantile curves from a fit file.
    Predict(PredictArgs),
    /// Mean squared error of median predictions on a test set.
    Pmse(PmseArgs),
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long, value_parser = clap::value_parser!(u8).range(1..=2))]
    study: u8,
    #[arg(long)]
    n: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Standardize the skew-normal noise of study 1 to mean 0 and sd 1.
    #[arg(long)]
    sn_centered: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct CoarsenArgs {
    #[arg(long)]
    gap: u32,
    /// Complete data CSV.
    #[arg(long)]
    input: PathBuf,
    /// Observations CSV with bins.
    #[arg(long)]
    out: PathBuf,
    /// Cuts CSV.
    #[arg(long)]
    cuts: PathBuf,
}

#[derive(Args)]
struct FitArgs {
    /// Data CSV; its layout is chosen by --grid or --weighted-grid.
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value = "npsqr")]
    method: Method,
    #[arg(long, default_value_t = 2)]
    m1: usize,
    #[arg(long, default_value_t = 2)]
    m2: usize,
    #[arg(long, requires = "p2", conflicts_with = "select_aic")]
    p1: Option<usize>,
    #[arg(long, requires = "p1", conflicts_with = "select_aic")]
    p2: Option<usize>,
    /// Candidate range `lo:hi` for p1 = p2.
    #[arg(long, value_parser = parse_range)]
    select_aic: Option<RangeInclusive<usize>>,
    #[arg(long, default_value_t = McmcConfig::default().iterations)]
    iters: usize,
    #[arg(long, default_value_t = McmcConfig::default().burn_in)]
    burnin: usize,
    #[arg(long, default_value_t = 1)]
    thin: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Cuts CSV; the data file then holds bins instead of responses.
    #[arg(long, value_name = "CUTS", conflicts_with = "weighted_grid")]
    grid: Option<PathBuf>,
    /// Data file holds weighted cut rows; levels come from the config `rho`.
    #[arg(long, requires = "config")]
    weighted_grid: bool,
    /// TOML with transforms and grid levels.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    no_warmstart: bool,
    /// Fit file to write.
    #[arg(long)]
    out: PathBuf,
    /// Also export quantile curves on a covariate grid.
    #[arg(long)]
    curves: Option<PathBuf>,
    #[command(flatten)]
    curve: CurveArgs,
}

#[derive(Args)]
struct CurveArgs {
    /// Levels as `lo:hi:step`.
    #[arg(long, value_parser = parse_levels)]
    quantiles: Option<Levels>,
    #[arg(long, default_value = "posterior-mean")]
    point_estimate: PointEstimate,
    /// Grid points per covariate.
    #[arg(long, default_value_t = 50)]
    points: usize,
}

#[derive(Args)]
struct PredictArgs {
    #[arg(long)]
    fit: PathBuf,
    /// Covariate row `x1,...,xd`; repeatable. Without it a grid is used.
    #[arg(long, value_delimiter = ',', num_args = 1)]
    at: Vec<f64>,
    #[command(flatten)]
    curve: CurveArgs,
    /// Output CSV; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct PmseArgs {
    #[arg(long)]
    fit: PathBuf,
    /// Complete data CSV.
    #[arg(long)]
    test: PathBuf,
    #[arg(long, default_value = "posterior-mean")]
    point_estimate: PointEstimate,
}

fn parse_range(s: &str) -> std::result::Result<RangeInclusive<usize>, String> {
    let (lo, hi) = s.split_once(':').ok_or("expected lo:hi")?;
    let lo: usize = lo.trim().parse().map_err(|e| format!("{e}"))?;
    let hi: usize = hi.trim().parse().map_err(|e| format!("{e}"))?;
    if lo == 0 || lo > hi {
        return Err(format!("need 1 <= lo <= hi, got {lo}:{hi}"));
    }
    Ok(lo..=hi)
}

#[derive(Clone)]
struct Levels(Vec<f64>);

fn parse_levels(s: &str) -> std::result::Result<Levels, String> {
    let parts: Vec<f64> = s
        .split(':')
        .map(|v| v.trim().parse::<f64>().map_err(|e| format!("{e}")))
        .collect::<std::result::Result<_, _>>()?;
    let [lo, hi, step] = parts[..] else {
        return Err("expected lo:hi:step".into());
    };
    quantile_levels(lo, hi, step).map(Levels).map_err(|e| e.to_string())
}

fn simulate(args: SimulateArgs) -> Result<()> {
    let data = match args.study {
        1 => {
            let noise = if args.sn_centered { SkewNoise::Centered } else { SkewNoise::Standard };
            simulate_study1(args.n, args.seed, noise)?
        }
        _ => {
            ensure!(!args.sn_centered, "--sn-centered applies to study 1 only");
            simulate_study2(args.n, args.seed)?
        }
    };
    write_complete_csv(&args.out, &data).with_context(|| format!("writing {}", args.out.display()))
}

fn coarsen(args: CoarsenArgs) -> Result<()> {
    let data = read_complete_csv(&args.input).with_context(|| format!("reading {}", args.input.display()))?;
    let grid = coarsen_to_grid(&data, args.gap)?;
    write_grid(&args.out, &args.cuts, &grid)?;
    eprintln!("{} observations in {} bins", grid.len(), grid.num_bins());
    Ok(())
}

fn load_observations(args: &FitArgs, config: &DataConfig) -> Result<RawObservations> {
    let context = || format!("reading {}", args.data.display());
    if let Some(cuts) = &args.grid {
        return Ok(RawObservations::Grid(read_grid(&args.data, cuts).with_context(context)?));
    }
    if args.weighted_grid {
        let Some(rho) = config.rho.clone() else {
            bail!("--weighted-grid needs `rho` in the config");
        };
        return Ok(RawObservations::WeightedGrid(read_weighted_csv(&args.data, rho).with_context(context)?));
    }
    Ok(RawObservations::Complete(read_complete_csv(&args.data).with_context(context)?))
}

fn levels(curve: &CurveArgs) -> Vec<f64> {
    curve.quantiles.as_ref().map_or_else(default_levels, |l| l.0.clone())
}

fn write_curves(fit: &FitFile, rows_at: Vec<Vec<f64>>, curve: &CurveArgs, out: Option<&Path>) -> Result<()> {
    let rows = export_curves(&fit.fit, &fit.transforms, &rows_at, &levels(curve), curve.point_estimate)?;
    match out {
        Some(path) => write_curves_csv(path, &rows)?,
        None => {
            let d = fit.transforms.d();
            let header: Vec<String> = (1..=d).map(|j| format!("x{j}")).chain(["tau".into(), "q_hat".into()]).collect();
            println!("{}", header.join(","));
            for r in rows {
                let xs: Vec<String> = r.x.iter().map(f64::to_string).collect();
                println!("{},{},{}", xs.join(","), r.tau, r.q);
            }
        }
    }
    Ok(())
}

fn fit(args: FitArgs) -> Result<()> {
    let config = match &args.config {
        Some(path) => DataConfig::load(path).with_context(|| format!("reading {}", path.display()))?,
        None => DataConfig::default(),
    };
    let raw = load_observations(&args, &config)?;
    let transforms = config.transforms_for(&raw)?;
    let data = raw.to_unit(&transforms)?;
    let fit_config = FitConfig {
        mcmc: McmcConfig {
            iterations: args.iters,
            burn_in: args.burnin,
            thin: args.thin,
            seed: args.seed,
            ..McmcConfig::default()
        },
        warm_start: !args.no_warmstart,
        m1: args.m1,
        m2: args.m2,
        ..FitConfig::default()
    };
    let result: FitResult = match (args.p1, args.p2) {
        (Some(p1), Some(p2)) => {
            let spec = ModelSpec::new(args.method, raw.d(), args.m1, args.m2, p1, p2)?;
            fit_spec(&data, spec, &fit_config)?
        }
        _ => {
            let range = args.select_aic.clone().unwrap_or_else(|| default_p_range(args.method));
            let selection = select_model(&data, args.method, range, &fit_config)?;
            for c in &selection.candidates {
                match &c.outcome {
                    Ok((ll, aic)) => eprintln!("p={:<3} loglik={ll:.4} aic={aic:.4}", c.p),
                    Err(e) => eprintln!("p={:<3} failed: {e}", c.p),
                }
            }
            selection.fit
        }
    };
    let acceptance = result.chain.acceptance_trace.last().copied().unwrap_or(f64::NAN);
    eprintln!(
        "{} p1={} p2={} loglik={:.4} aic={:.4} acceptance={acceptance:.3} samples={}",
        result.spec.method,
        result.spec.p1,
        result.spec.p2,
        result.loglik,
        result.aic,
        result.chain.samples.len()
    );
    let file = FitFile {
        fit: result,
        transforms,
    };
    file.write(&args.out).with_context(|| format!("writing {}", args.out.display()))?;
    if let Some(path) = &args.curves {
        let xs = covariate_grid(&file.transforms, args.curve.points)?;
        write_curves(&file, xs, &args.curve, Some(path))?;
    }
    Ok(())
}

fn predict(args: PredictArgs) -> Result<()> {
    let file = FitFile::read(&args.fit).with_context(|| format!("reading {}", args.fit.display()))?;
    let d = file.transforms.d();
    let xs = if args.at.is_empty() {
        covariate_grid(&file.transforms, args.curve.points)?
    } else {
        ensure!(
            args.at.len().is_multiple_of(d),
            "--at values must come in rows of {d} covariates, got {}",
            args.at.len()
        );
        args.at.chunks(d).map(<[f64]>::to_vec).collect()
    };
    write_curves(&file, xs, &args.curve, args.out.as_deref())
}

fn run_pmse(args: PmseArgs) -> Result<()> {
    let file = FitFile::read(&args.fit).with_context(|| format!("reading {}", args.fit.display()))?;
    let test = read_complete_csv(&args.test).with_context(|| format!("reading {}", args.test.display()))?;
    println!("{}", pmse(&file.fit, &test, &file.transforms, args.point_estimate)?);
    Ok(())
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Simulate(a) => simulate(a),
        Command::Coarsen(a) => coarsen(a),
        Command::Fit(a) => fit(a),
        Command::Predict(a) => predict(a),
        Command::Pmse(a) => run_pmse(a),
    }
}
