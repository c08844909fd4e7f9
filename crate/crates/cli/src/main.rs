use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anomaly_cli::config::ScenarioConfig;
use anomaly_cli::run::{self, EXIT_CONFIG, EXIT_OK};
use anomaly_cli::suites;
use anomaly_cli::sweep::{self, Axis};
use anomaly_cli::CliError;
use anyhow::Context;
use clap::{Parser, Subcommand};

/// Numerical lab for the anomaly flow and its reductions.
#[derive(Debug, Parser)]
#[command(name = "anomaly", version)]
struct Cli {
    /// Output directory (overrides `output.directory`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Seed (overrides the config's `seed`).
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run one scenario and write its artifacts.
    Run {
        config: PathBuf,
        /// Continue the run stored in the output directory up to the new `t_end`.
        #[arg(long)]
        resume: bool,
    },
    /// Run an invariant suite and print a pass/fail table.
    Check {
        /// calculus-identities, lie-theorem4, surface, fuyau, ma or numerics.
        suite: String,
    },
    /// Run a template over the cartesian product of one or two parameter axes.
    Sweep {
        template: PathBuf,
        /// `key=v1,v2,...` with a dotted key, e.g. `fuyau.M=1,10,100`.
        #[arg(long, required = true)]
        grid: Vec<String>,
        /// Worker threads (defaults to the available parallelism).
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Print the Jacobian spectrum of the Lie flow at a stationary start.
    Linearize { config: PathBuf },
}

fn load(path: &Path, seed: Option<u64>) -> anomaly_cli::Result<ScenarioConfig> {
    let mut cfg = ScenarioConfig::load(path)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn exec(cli: Cli) -> anyhow::Result<i32> {
    match cli.command {
        Command::Run { config, resume } => {
            let cfg = load(&config, cli.seed)?;
            let dir = run::output_dir(&cfg, cli.out.as_deref());
            let (o, rec) = run::run_to_dir(&cfg, &dir, resume)?;
            println!("flow      {}", o.flow.name());
            println!("regime    {}", o.regime);
            println!("t_final   {}", o.t_final);
            println!("records   {}", rec.records);
            println!("output    {}", dir.display());
            for (k, v) in &o.summary {
                println!("  {k:<28} {v:.6e}");
            }
            if let Some(r) = &o.report {
                println!("report    {r}");
            }
            Ok(o.exit_code)
        }
        Command::Check { suite } => {
            let checks = suites::run_suite(&suite)?;
            let text = suites::table(&checks);
            print!("{text}");
            if let Some(dir) = &cli.out {
                std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
                let path = dir.join(format!("check-{suite}.txt"));
                std::fs::write(&path, &text).with_context(|| format!("writing {}", path.display()))?;
            }
            let failed = checks.iter().filter(|c| !c.pass).count();
            println!("{} of {} checks passed", checks.len() - failed, checks.len());
            Ok(if failed == 0 { EXIT_OK } else { EXIT_CONFIG })
        }
        Command::Sweep {
            template,
            grid,
            threads,
        } => {
            let text = std::fs::read_to_string(&template).with_context(|| format!("reading {}", template.display()))?;
            let mut doc: toml::Value =
                toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", template.display())))?;
            if let Some(s) = cli.seed {
                anomaly_cli::config::set_key(&mut doc, "seed", toml::Value::Integer(s as i64))?;
            }
            let axes = grid.iter().map(|g| Axis::parse(g)).collect::<Result<Vec<_>, _>>()?;
            let out = match &cli.out {
                Some(o) => o.clone(),
                None => doc
                    .get("output")
                    .and_then(|o| o.get("directory"))
                    .and_then(|d| d.as_str())
                    .map_or_else(|| PathBuf::from("runs"), PathBuf::from)
                    .join("sweep"),
            };
            let threads = threads.unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
            let rows = sweep::run_sweep(&doc, &axes, &out, threads)?;
            for r in &rows {
                let values: Vec<String> = axes
                    .iter()
                    .zip(&r.values)
                    .map(|(a, v)| format!("{}={v}", a.key))
                    .collect();
                match &r.result {
                    Ok(o) => println!("{:<32} {:<24} exit {}", values.join(" "), o.regime, o.exit_code),
                    Err(e) => println!(
                        "{:<32} {:<24} exit {}: {e}",
                        values.join(" "),
                        "config-error",
                        EXIT_CONFIG
                    ),
                }
            }
            println!("summary   {}", out.join(sweep::SUMMARY_FILE).display());
            Ok(sweep::worst_exit(&rows))
        }
        Command::Linearize { config } => {
            let cfg = load(&config, cli.seed)?;
            let (g, ev) = run::linearize(&cfg)?;
            println!("base point (packed) {:?}", anomaly_core::lieflow::pack(&g));
            for (i, v) in ev.iter().enumerate() {
                println!("lambda_{i}  {:+.6e} {:+.6e}i", v.re, v.im);
            }
            Ok(EXIT_OK)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let _ = e.print();
            return ExitCode::from(code as u8);
        }
    };
    match exec(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_CONFIG as u8)
        }
    }
}
