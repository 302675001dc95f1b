use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use lorentz_avg::dynamics::{integrate_lorentz, IntegrationOptions};
use lorentz_avg::harness::check::run_checks;
use lorentz_avg::harness::{
    run_comparison_full, scaling_study, to_json_bytes, write_curves_csv, write_scaling_csv, write_series_csv, Config,
};
use lorentz_avg::kinetics::write_ensemble_csv;
use lorentz_avg::{Result, Vector};

#[derive(Parser)]
#[command(
    name = "lavg",
    version,
    about = "Lorentz force dynamics against the averaged connection"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate the central trajectory and write trajectory.csv.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Also write the transported ensemble to ensemble.csv.
        #[arg(long)]
        ensemble: bool,
    },
    /// Lorentz against averaged dynamics: report.json, series.csv, curves.csv.
    Compare {
        #[command(flatten)]
        common: Common,
    },
    /// Divergence grid over alpha and energy: scaling.csv, fits.json.
    Scaling {
        #[command(flatten)]
        common: Common,
    },
    /// Invariant suite; exits with status 1 when a check fails.
    Check {
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Args)]
struct Common {
    /// TOML run description; defaults apply when omitted.
    #[arg(short, long)]
    config: Option<PathBuf>,
    /// Overrides run.output_dir.
    #[arg(short, long)]
    out: Option<PathBuf>,
    /// Overrides run.seed.
    #[arg(long)]
    seed: Option<u64>,
}

impl Common {
    fn load(&self) -> Result<(Config, PathBuf)> {
        let mut cfg = match &self.config {
            Some(p) => Config::from_path(p)?,
            None => Config::default(),
        };
        if let Some(s) = self.seed {
            cfg.run.seed = s;
        }
        let out = self.out.clone().unwrap_or_else(|| PathBuf::from(&cfg.run.output_dir));
        fs::create_dir_all(&out)?;
        Ok((cfg, out))
    }
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(dir.join(name))?))
}

fn simulate(common: &Common, ensemble: bool) -> Result<bool> {
    let (cfg, out) = common.load()?;
    cfg.validate()?;
    let metric = cfg.metric_field()?;
    let field = cfg.field_preset()?;
    let opts = IntegrationOptions {
        tol: cfg.run.tol,
        n_out: cfg.run.n_out,
        ..Default::default()
    };
    let x0 = Vector::zeros(cfg.dimension);
    let traj = integrate_lorentz(&metric, &field, &x0, &cfg.center_velocity()?, cfg.run.t, &opts)?;
    traj.write_csv(create(&out, "trajectory.csv")?, &metric)?;
    if ensemble {
        let run = run_comparison_full(&cfg)?;
        write_ensemble_csv(create(&out, "ensemble.csv")?, &run.ensemble)?;
    }
    println!("{} samples written to {}", traj.samples.len(), out.display());
    Ok(true)
}

fn compare(common: &Common) -> Result<bool> {
    let (cfg, out) = common.load()?;
    let run = run_comparison_full(&cfg)?;
    fs::write(out.join("report.json"), to_json_bytes(&run.report)?)?;
    write_series_csv(create(&out, "series.csv")?, &run.report.series)?;
    write_curves_csv(create(&out, "curves.csv")?, &run.lorentz, &run.averaged)?;
    let r = &run.report;
    println!(
        "alpha {:.4} energy {:.3} |F| {:.3}; bounds hold: {}; hypotheses met: {}",
        r.alpha, r.energy, r.norm_f, r.pass, r.hypotheses.satisfied
    );
    Ok(true)
}

fn scaling(common: &Common) -> Result<bool> {
    let (cfg, out) = common.load()?;
    let study = scaling_study(&cfg)?;
    write_scaling_csv(create(&out, "scaling.csv")?, &study.rows)?;
    fs::write(out.join("fits.json"), to_json_bytes(&study.fits)?)?;
    println!(
        "{} runs; bounds hold everywhere: {}",
        study.rows.len(),
        study.fits.all_pass
    );
    Ok(true)
}

fn check(common: &Common) -> Result<bool> {
    let (cfg, out) = common.load()?;
    let results = run_checks(cfg.seed())?;
    for c in &results {
        println!(
            "{} {:<26} {:>11.3e} <= {:.1e}",
            if c.pass { "PASS" } else { "FAIL" },
            c.name,
            c.value,
            c.tolerance
        );
    }
    fs::write(out.join("check.json"), to_json_bytes(&results)?)?;
    Ok(results.iter().all(|c| c.pass))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::Simulate { common, ensemble } => simulate(common, *ensemble),
        Command::Compare { common } => compare(common),
        Command::Scaling { common } => scaling(common),
        Command::Check { common } => check(common),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
