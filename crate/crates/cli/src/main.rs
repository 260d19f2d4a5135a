use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use robpost::constants::{thm1_constants, thm2_constants, Preset};
use robpost::experiment::{compare_families, parse_family, radius_scan, run_experiment, split_call, ExperimentConfig};
use robpost::family::verify_assumption_moments;
use robpost::geometry::RadiusRow;
use robpost::Density;

#[derive(Parser)]
#[command(
    name = "robpost",
    version,
    about = "Robust test-based posteriors: constants, radii and simulations"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print the constant ledger for a preset or explicit inputs.
    Constants(ConstantsArgs),
    /// Scan the concentration radius at the truth of a config.
    Radius(ConfigArgs),
    /// Run the configured family over all replications.
    Simulate(ConfigArgs),
    /// Run several families on shared data streams.
    Compare {
        #[command(flatten)]
        io: ConfigArgs,
        /// Comma-separated families; defaults to the config's `families`.
        #[arg(long)]
        families: Option<String>,
    },
    /// Check the moment and variance inequalities on all triples from a density list.
    VerifyAssumptions {
        /// `tv`, `hellinger`, `kl(a)` or `lj(j, R)`.
        #[arg(long)]
        family: String,
        /// Semicolon-separated densities, e.g. `gaussian(0,1); laplace(0.5,1)`.
        #[arg(long)]
        densities: String,
        #[arg(long, default_value_t = 1e-6)]
        tol: f64,
        #[arg(long, default_value_t = 200_000)]
        samples: usize,
        /// Write the full report as JSON.
        #[arg(long)]
        json: Option<PathBuf>,
    },
}

#[derive(Args)]
struct ConstantsArgs {
    /// `tv`, `hellinger` or `power_law_tv`.
    #[arg(long, conflicts_with_all = ["a0", "a1", "tau", "c", "gamma"])]
    preset: Option<String>,
    #[arg(long)]
    a0: Option<f64>,
    #[arg(long)]
    a1: Option<f64>,
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long)]
    c: Option<f64>,
    #[arg(long)]
    gamma: Option<f64>,
    /// With `--beta`, switches to the variance-based ledger.
    #[arg(long, requires = "beta")]
    a2: Option<f64>,
    #[arg(long, requires = "a2")]
    beta: Option<f64>,
}

#[derive(Args)]
struct ConfigArgs {
    /// Flat `key = value` config file.
    config: PathBuf,
    /// Override the config's `csv` output.
    #[arg(long)]
    csv: Option<PathBuf>,
    /// Override the config's `json` output.
    #[arg(long)]
    json: Option<PathBuf>,
    /// Override `key=value` entries.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

impl ConfigArgs {
    fn load(&self) -> Result<ExperimentConfig> {
        let text = fs::read_to_string(&self.config).with_context(|| format!("reading {}", self.config.display()))?;
        let mut map = robpost::experiment::parse_flat(&text)?;
        for kv in &self.set {
            let Some((k, v)) = kv.split_once('=') else {
                bail!("--set expects KEY=VALUE, got `{kv}`");
            };
            map.insert(k.trim().to_string(), v.trim().to_string());
        }
        let mut cfg = ExperimentConfig::from_map(map)?;
        if self.csv.is_some() {
            cfg.csv.clone_from(&self.csv);
        }
        if self.json.is_some() {
            cfg.json.clone_from(&self.json);
        }
        Ok(cfg)
    }
}

fn write(path: &Option<PathBuf>, body: &str) -> Result<()> {
    if let Some(p) = path {
        write_to(p, body)?;
    }
    Ok(())
}

fn write_to(p: &Path, body: &str) -> Result<()> {
    fs::write(p, body).with_context(|| format!("writing {}", p.display()))
}

fn constants(a: &ConstantsArgs) -> Result<()> {
    let ledger = match &a.preset {
        Some(name) => Preset::parse(name)?.ledger()?,
        None => {
            let (Some(a0), Some(a1), Some(tau), Some(c), Some(gamma)) = (a.a0, a.a1, a.tau, a.c, a.gamma) else {
                bail!("give --preset or all of --a0 --a1 --tau --c --gamma");
            };
            match (a.a2, a.beta) {
                (Some(a2), Some(beta)) => thm2_constants(a0, a1, a2, tau, c, gamma, beta)?,
                _ => thm1_constants(a0, a1, tau, c, gamma)?,
            }
        }
    };
    println!("{}", ledger.to_json());
    if !ledger.feasible.all() {
        bail!("infeasible constants");
    }
    Ok(())
}

fn radius(io: &ConfigArgs) -> Result<()> {
    let cfg = io.load()?;
    let (run, res) = radius_scan(&cfg)?;
    let mut csv = format!("{}\n", RadiusRow::CSV_HEADER);
    for row in &res.rows {
        csv.push_str(&row.csv());
        csv.push('\n');
    }
    write(&cfg.csv, &csv)?;
    write(&cfg.json, &serde_json::to_string_pretty(&res)?)?;
    match res.radius {
        Some(r) => println!(
            "family {} beta {} floor {} r_n <= {}",
            run.name, run.config.beta, res.floor, r
        ),
        None => println!(
            "family {} beta {} floor {} r_n exceeds the scan range",
            run.name, run.config.beta, res.floor
        ),
    }
    Ok(())
}

fn simulate(io: &ConfigArgs) -> Result<()> {
    let cfg = io.load()?;
    let report = run_experiment(&cfg)?;
    write(&cfg.csv, &report.to_csv())?;
    write(&cfg.json, &report.to_json())?;
    let s = &report.summary;
    println!(
        "family {} beta {} loss {}: {} ok, {} failed",
        report.family, report.beta, report.loss, s.ok, s.failures
    );
    if let Some([q10, q50, q90]) = s.loss_quantiles {
        println!("estimator loss q10 {q10:.6} median {q50:.6} q90 {q90:.6}");
    }
    if let Some(e) = s.median_param_error {
        println!("median parameter error {e:.6}");
    }
    if let Some(r) = s.median_r_n {
        println!("median r_n {r:.6}");
    }
    Ok(())
}

fn compare(io: &ConfigArgs, families: &Option<String>) -> Result<()> {
    let cfg = io.load()?;
    let list = match families {
        Some(f) => {
            let (_, args) = split_call(&format!("list({f})"))?;
            args
        }
        None => cfg.families.clone(),
    };
    let report = compare_families(&cfg, &list)?;
    let csv = report.to_csv();
    write(&cfg.csv, &csv)?;
    write(&cfg.json, &report.to_json())?;
    print!("{csv}");
    Ok(())
}

fn verify(family: &str, densities: &str, tol: f64, samples: usize, json: &Option<PathBuf>) -> Result<()> {
    let family = parse_family(family)?;
    let (_, items) = split_call(&format!("list({})", densities.replace(';', ",")))?;
    let grid = items
        .iter()
        .map(|d| Density::parse(d))
        .collect::<robpost::Result<Vec<_>>>()?;
    if grid.len() < 2 {
        bail!("need at least two densities");
    }
    let mut pairs = Vec::new();
    for (i, p) in grid.iter().enumerate() {
        for (j, q) in grid.iter().enumerate() {
            if i != j {
                pairs.push((p.clone(), q.clone()));
            }
        }
    }
    let report = verify_assumption_moments(&family, &grid, &pairs, samples, tol);
    write(json, &serde_json::to_string_pretty(&report)?)?;
    println!("{} triples, {} violations", report.checks.len(), report.violations);
    for c in report.checks.iter().filter(|c| !c.ok) {
        println!(
            "  S#{} pair#{}: moment slack {:.3e} variance slack {:?} {}",
            c.s,
            c.pair,
            c.moment_slack,
            c.variance_slack,
            c.error.as_deref().unwrap_or("")
        );
    }
    if report.violations > 0 {
        bail!("assumption violated");
    }
    Ok(())
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    match &cli.command {
        Command::Constants(a) => constants(a),
        Command::Radius(io) => radius(io),
        Command::Simulate(io) => simulate(io),
        Command::Compare { io, families } => compare(io, families),
        Command::VerifyAssumptions {
            family,
            densities,
            tol,
            samples,
            json,
        } => verify(family, densities, *tol, *samples, json),
    }
}
