use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use nptl::experiment::{oracle_check, run_sweep, run_trial, ExperimentConfig, Scenario};
use nptl::Error;

#[derive(Parser)]
#[command(name = "nptl", version, about = "Neyman-Pearson transfer learning experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every trial at every source size and write aggregates.
    Sweep(Common),
    /// Run one trial at one source size and print per-method metrics.
    Trial {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 0)]
        trial: usize,
        /// Source size per class; defaults to the largest configured size.
        #[arg(long)]
        n_source: Option<usize>,
    },
    /// Compare the pipeline with the exhaustive oracle on a grid.
    OracleCheck {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 0.05)]
        spacing: f64,
        #[arg(long)]
        n_source: Option<usize>,
    },
}

#[derive(Args)]
struct Common {
    /// TOML configuration; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    scenario: Option<Scenario>,
    #[arg(long)]
    alpha: Option<f64>,
}

impl Common {
    fn load(&self) -> Result<ExperimentConfig, Error> {
        let mut cfg = match &self.config {
            Some(p) => ExperimentConfig::load(p)?,
            None => ExperimentConfig::default(),
        };
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(o) = &self.out {
            cfg.output_dir = o.clone();
        }
        if let Some(s) = self.scenario {
            cfg.scenario = s;
        }
        if let Some(a) = self.alpha {
            cfg.alpha = a;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Sweep(common) => {
            let cfg = common.load()?;
            let res = run_sweep(&cfg, Some(&cfg.output_dir))?;
            for row in &res.aggregates {
                println!(
                    "n_source={} method={} {}: mean={:.4} median={:.4} stderr={:.4}",
                    row.n_source, row.method, row.metric, row.mean, row.median, row.stderr
                );
            }
            if res.failures() > 0 {
                eprintln!("{} of {} method runs failed", res.failures(), res.runs.len());
            }
            println!("wrote {}", cfg.output_dir.display());
        }
        Command::Trial { common, trial, n_source } => {
            let cfg = common.load()?;
            let n = n_source.unwrap_or(*cfg.source_sizes.last().expect("validated"));
            for run in run_trial(&cfg, n, trial)? {
                match (&run.metrics, &run.error) {
                    (Some(m), _) => println!(
                        "{}: type1={:.4} type2={:.4} type1_surrogate={:.4} type2_surrogate={:.4}{}",
                        run.method,
                        m.type1_test,
                        m.type2_test,
                        m.type1_surrogate,
                        m.type2_surrogate,
                        m.branch.map(|b| format!(" branch={b}")).unwrap_or_default()
                    ),
                    (None, e) => println!("{}: failed: {}", run.method, e.as_deref().unwrap_or("")),
                }
            }
        }
        Command::OracleCheck { common, spacing, n_source } => {
            let cfg = common.load()?;
            let n = n_source.unwrap_or(cfg.source_sizes[0]);
            let c = oracle_check(&cfg, n, 0, spacing)?;
            println!("alpha_hat oracle={:.6} solver={:.6}", c.alpha_hat_oracle, c.alpha_hat_solver);
            println!(
                "type2 oracle={:.6} solver={:.6} tolerance={:.6}",
                c.type2_oracle,
                c.type2_solver,
                c.type2_tolerance()
            );
            println!("branch oracle={} solver={}", c.branch_oracle, c.branch_solver);
            let ok = c.type2_within_tolerance() && c.constraints_hold(cfg.alpha);
            println!("{}", if ok { "agree" } else { "disagree" });
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(2) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_config() { 2 } else { 1 })
        }
    }
}
