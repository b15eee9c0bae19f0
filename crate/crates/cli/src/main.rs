use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use euler_cert::harness::{cmd_bv, cmd_convergence, cmd_density, cmd_verify, Config, RunOptions};

#[derive(Parser, Debug)]
#[command(name = "euler-cert", version, about = "Certify error bounds for implicit Euler schemes")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Check every bound over the seeded instance suite.
    Verify(Common),
    /// Empirical and certified convergence rates on dyadic meshes.
    Convergence(Common),
    /// Density oracle, mass and concentration checks plus heatmap export.
    Density(Common),
    /// Bounded-variation property suites.
    Bv(Common),
}

#[derive(Args, Debug)]
struct Common {
    /// TOML configuration; defaults apply to missing keys.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Overrides the seed from the configuration.
    #[arg(long, value_name = "U64")]
    seed: Option<u64>,
    #[arg(long, value_name = "DIR", default_value = "out")]
    out: PathBuf,
    /// Worker threads (default: all cores).
    #[arg(long, value_name = "N")]
    jobs: Option<usize>,
}

impl Common {
    fn resolve(&self) -> euler_cert::Result<(Config, RunOptions)> {
        let cfg = match &self.config {
            Some(p) => Config::load(p)?,
            None => Config::default(),
        };
        let opts = RunOptions {
            seed: self.seed.unwrap_or(cfg.seed),
            out: self.out.clone(),
            jobs: self.jobs,
        };
        Ok((cfg, opts))
    }
}

fn run(cli: &Cli) -> euler_cert::Result<bool> {
    match &cli.command {
        Command::Verify(c) => {
            let (cfg, opts) = c.resolve()?;
            let r = cmd_verify(&cfg, &opts)?;
            println!(
                "verify: {}/{} instances pass, min slack {:e}",
                r.passed, r.instances, r.min_slack
            );
            for id in &r.errors {
                let o = r.outcomes.iter().find(|o| o.id == *id).expect("outcome");
                println!("  instance {id}: {}", o.error.as_deref().unwrap_or(""));
            }
            if let Some(w) = &r.wellposedness {
                println!(
                    "wellposedness: modulus min slack {:e}, stability min slack {:e}, lipschitz {}",
                    w.modulus_min_slack,
                    w.stability_min_slack,
                    if w.lipschitz.iter().all(|l| l.report.pass) { "ok" } else { "FAIL" }
                );
            }
            Ok(r.pass)
        }
        Command::Convergence(c) => {
            let (cfg, opts) = c.resolve()?;
            let r = cmd_convergence(&cfg, &opts)?;
            for s in &r.studies {
                println!(
                    "{}: error slope {:.4}, bound slope {:.4} {}",
                    s.name,
                    s.error_slope,
                    s.bound_slope,
                    if s.pass { "ok" } else { "FAIL" }
                );
            }
            Ok(r.pass)
        }
        Command::Density(c) => {
            let (cfg, opts) = c.resolve()?;
            let r = cmd_density(&cfg, &opts)?;
            println!(
                "density: {} cases, oracle error {:e}, marginal error {:e}, concentration min slack {:e}",
                r.cases.len(),
                r.max_oracle_error,
                r.max_marginal_error,
                r.min_concentration_slack
            );
            Ok(r.pass)
        }
        Command::Bv(c) => {
            let (cfg, opts) = c.resolve()?;
            let r = cmd_bv(&cfg, &opts)?;
            println!(
                "bv: shift max excess {:e}, jordan error {:e}, C1 variation {:.8} vs {:.8}",
                r.shift_max_excess, r.jordan_max_reconstruction_error, r.c1_variation, r.c1_integral
            );
            Ok(r.pass)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("FAIL");
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
