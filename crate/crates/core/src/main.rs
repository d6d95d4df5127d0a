use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde_json::json;

use adfgof::estimate::{empirical_density_curve, mle_fit};
use adfgof::harness::{self, ExperimentConfig};
use adfgof::limitdist::{sample_limit_law, LimitLawTable};
use adfgof::models::build_invariant_law;
use adfgof::simulate::{simulate_path, Path, RngStream};
use adfgof::transform::clipped_grid;
use adfgof::{Error, Result};

#[derive(Parser)]
#[command(name = "adfgof", version, about = "Distribution-free Cramér–von Mises tests for diffusion drift")]
struct Cli {
    /// Configuration file (`key = value` lines).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides `master_seed` (and the table seed for `calibrate`).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Overrides `out_dir`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one stationary path and write it as `t,x` CSV.
    Simulate {
        /// Stream index of the path.
        #[arg(long, default_value_t = 0)]
        rep: u64,
    },
    /// Fit the drift parameter by maximum likelihood.
    Fit {
        #[arg(long)]
        path: PathBuf,
    },
    /// Run the goodness-of-fit test on a path.
    Test {
        #[arg(long)]
        path: PathBuf,
    },
    /// Sample the limit law and print its quantiles.
    Calibrate {
        #[arg(long)]
        n_mc: Option<usize>,
        #[arg(long)]
        kl_terms: Option<usize>,
        /// Cache file for the sorted sample.
        #[arg(long)]
        cache: Option<PathBuf>,
    },
    /// Replicated level or power study.
    Experiment,
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig> {
    let mut c = match &cli.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(s) = cli.seed {
        c.master_seed = s;
    }
    if let Some(o) = &cli.out {
        c.out_dir = o.clone();
    }
    c.validate()?;
    Ok(c)
}

fn write_json(config: &ExperimentConfig, name: &str, value: &serde_json::Value) -> Result<()> {
    std::fs::create_dir_all(&config.out_dir)?;
    std::fs::write(config.out_dir.join(name), serde_json::to_string_pretty(value)? + "\n")?;
    Ok(())
}

fn run(cli: &Cli) -> Result<()> {
    let config = load_config(cli)?;
    match &cli.command {
        Command::Simulate { rep } => {
            let m = config.true_model()?;
            let law = build_invariant_law(m.as_ref(), &config.theta, config.law_grid, config.law_nu_clip)?;
            let mut rng = RngStream::new(config.master_seed, *rep);
            let path = simulate_path(m.as_ref(), &config.theta, &law, config.horizon, config.dt, &mut rng)?;
            std::fs::create_dir_all(&config.out_dir)?;
            let file = config.out_dir.join("path.csv");
            path.save(&file)?;
            println!("{}", file.display());
        }
        Command::Fit { path } => {
            let path = Path::load(path)?;
            let m = config.fitted_model()?;
            let fit = mle_fit(m.as_ref(), &path)?;
            let law = build_invariant_law(m.as_ref(), &fit.theta_hat, config.law_grid, config.law_nu_clip)?;
            let xs = clipped_grid(&law, config.nu_clip)?;
            let fhat = empirical_density_curve(&path, &xs, |x| m.sigma(x), config.density_estimator);
            let sup = xs
                .iter()
                .zip(&fhat)
                .map(|(&x, &f)| (f - law.density_at(x)).abs())
                .fold(0.0, f64::max);
            let out = json!({
                "model": m.name(),
                "fit": fit,
                "density_estimator": config.density_estimator,
                "density_sup_error": sup,
            });
            write_json(&config, "fit.json", &out)?;
            println!("{}", serde_json::to_string_pretty(&out)?);
        }
        Command::Test { path } => {
            let path = Path::load(path)?;
            let table = harness::limit_table(&config)?;
            let c_eps = table.quantile_c_eps(config.epsilon)?;
            let (report, curve) = harness::run_test_with_curve(&config, &path, c_eps)?;
            std::fs::create_dir_all(&config.out_dir)?;
            curve.write_csv(std::io::BufWriter::new(std::fs::File::create(config.out_dir.join("curve.csv"))?))?;
            std::fs::write(config.out_dir.join("report.json"), report.to_json() + "\n")?;
            println!("{}", report.to_json());
        }
        Command::Calibrate { n_mc, kl_terms, cache } => {
            let n_mc = n_mc.unwrap_or(config.limit_n_mc);
            let kl = kl_terms.unwrap_or(config.limit_kl_terms);
            let seed = cli.seed.unwrap_or(config.limit_seed);
            let table = match cache {
                Some(p) => LimitLawTable::load_or_sample(p, n_mc, kl, seed)?,
                None => sample_limit_law(n_mc, kl, seed)?,
            };
            let mut quantiles = serde_json::Map::new();
            for eps in [0.10, 0.05, 0.01] {
                quantiles.insert(
                    eps.to_string(),
                    json!({ "c_eps": table.quantile_c_eps(eps)?, "se": table.quantile_se(eps)? }),
                );
            }
            let out = json!({
                "seed": seed,
                "n_mc": n_mc,
                "kl_terms": kl,
                "mean": table.mean(),
                "variance": table.variance(),
                "quantiles": quantiles,
            });
            println!("{}", serde_json::to_string_pretty(&out)?);
        }
        Command::Experiment => {
            let outcome = harness::run_experiment(&config)?;
            println!("{}", serde_json::to_string_pretty(&outcome.summary)?);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Experiment(_) => ExitCode::from(2),
                _ => ExitCode::FAILURE,
            }
        }
    }
}
