use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use mlsa_cli::generate::{generate_instance, instance_count, instance_text};
use mlsa_cli::output::{format_summary, read_rows, summarize, write_file, write_run};
use mlsa_cli::{run, run_suite, sweep, ExperimentConfig, RunReport, Suite, Task};

#[derive(Parser)]
#[command(name = "mlsa", version, about = "Level-set aggregation experiments with certified bounds")]
struct Cli {
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum)]
    task: Option<Task>,
    /// Relative singular-value cutoff for the vaw task.
    #[arg(long)]
    svd_tol: Option<f64>,
}

#[derive(Subcommand)]
enum Command {
    /// Write generated instances as whitespace-delimited text.
    Gen(Common),
    /// Generate, run, audit and certify every instance of a config.
    Run(Common),
    /// Run a randomized audit suite.
    Audit {
        #[arg(long, value_enum)]
        suite: Suite,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Instances, trials or repetitions (suite-specific default).
        #[arg(long)]
        count: Option<usize>,
    },
    /// Run the cartesian product of the config's sweep axes.
    Sweep(Common),
    /// Summarize result CSVs into one table.
    Report {
        #[arg(required = true)]
        csv: Vec<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Builds the config from a file and/or flags; flags win.
fn load(common: &Common) -> anyhow::Result<(ExperimentConfig, PathBuf)> {
    let mut config = match (&common.config, common.task, common.seed) {
        (Some(path), _, _) => ExperimentConfig::load(path).with_context(|| format!("loading {}", path.display()))?,
        (None, Some(task), Some(seed)) => ExperimentConfig::new(task, seed),
        (None, _, None) => bail!("a seed is required: pass --seed or a config with `seed`"),
        (None, None, Some(_)) => bail!("pass --config or --task"),
    };
    if let Some(task) = common.task {
        config.task = task;
    }
    if let Some(seed) = common.seed {
        config.seed = seed;
    }
    if common.svd_tol.is_some() {
        config.instance.svd_tol = common.svd_tol;
    }
    config.validate()?;
    let out = common
        .out
        .clone()
        .or_else(|| config.output.dir.clone())
        .unwrap_or_else(|| PathBuf::from("out"));
    Ok((config, out))
}

fn finish_run(report: &RunReport, out: &Path) -> anyhow::Result<bool> {
    write_run(report, out)?;
    for r in report.instances.iter().filter(|r| !r.passed) {
        eprintln!("FAILED {}", r.id);
        for c in r.certificates.iter().filter(|c| !c.passes()) {
            eprintln!("  certificate {}: lhs {} > rhs {}", c.anchor, c.lhs, c.rhs);
        }
        for c in r.checks.iter().filter(|c| !c.passed) {
            eprintln!("  check {}: value {} vs threshold {}", c.name, c.value, c.threshold);
        }
    }
    println!(
        "{} of {} instances passed; wrote {}",
        report.instances_total - report.instances_failed,
        report.instances_total,
        out.display()
    );
    Ok(report.passed)
}

fn dispatch(cli: Cli) -> anyhow::Result<bool> {
    match cli.command {
        Command::Gen(common) => {
            let (config, out) = load(&common)?;
            for k in 0..instance_count(&config) {
                let inst = generate_instance(&config, k)?;
                for (name, text) in instance_text(&inst) {
                    write_file(&out, &name, text.as_bytes())?;
                }
            }
            println!("wrote {} instance(s) to {}", instance_count(&config), out.display());
            Ok(true)
        }
        Command::Run(common) => {
            let (config, out) = load(&common)?;
            finish_run(&run(&config)?, &out)
        }
        Command::Sweep(common) => {
            let (config, out) = load(&common)?;
            finish_run(&sweep(&config)?, &out)
        }
        Command::Audit { suite, seed, out, count } => {
            let result = run_suite(suite, seed, count.unwrap_or(suite.default_count()))?;
            let out = out.unwrap_or_else(|| PathBuf::from("out"));
            result.write(&out)?;
            for f in &result.summary.failures {
                eprintln!("FAILED {f}");
            }
            println!(
                "{} suite: {} ({} cases); wrote {}",
                suite.name(),
                if result.summary.passed { "passed" } else { "failed" },
                result.summary.cases,
                out.display()
            );
            Ok(result.summary.passed)
        }
        Command::Report { csv, out } => {
            let mut rows = Vec::new();
            for path in &csv {
                rows.push(summarize(&path.display().to_string(), &read_rows(path)?));
            }
            let table = format_summary(&rows);
            print!("{table}");
            if let Some(dir) = out {
                write_file(&dir, "summary.csv", &mlsa_cli::output::csv_bytes(&rows)?)?;
                write_file(&dir, "summary.txt", table.as_bytes())?;
            }
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(k) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(k).build_global() {
            eprintln!("error: thread pool: {e}");
            return ExitCode::from(2);
        }
    }
    match dispatch(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
