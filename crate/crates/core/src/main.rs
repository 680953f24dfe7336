use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::atomic::{AtomicUsize, Ordering};

use clap::{Args, Parser, Subcommand};

use mrs_repro::harness::{self, Acquisition, ExperimentConfig, HarnessError, PartialConfig};
use mrs_repro::quant::MethodId;

/// Reproducibility laboratory for MRS metabolite quantification.
#[derive(Parser, Debug)]
#[command(name = "mrs-repro", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write the synthetic cohort and its truth file.
    Generate(Flags),
    /// Fit every (signal, method, execution) and persist results.csv.
    Run(Flags),
    /// Compute reports from an existing results.csv.
    Analyze(Flags),
    /// generate, run and analyze in sequence.
    All(Flags),
}

#[derive(Args, Debug, Clone)]
struct Flags {
    /// TOML file with ExperimentConfig keys; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    master_seed: Option<u64>,
    #[arg(long)]
    n_exec: Option<u32>,
    /// Comma-separated method ids, e.g. tdfit-A,freqfit-B.
    #[arg(long, value_delimiter = ',')]
    methods: Option<Vec<MethodId>>,
    /// Worker threads (0 = all cores).
    #[arg(long)]
    jobs: Option<usize>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    n_boot: Option<usize>,
    /// Randomly mark this fraction of executions non-converged.
    #[arg(long)]
    fail_rate: Option<f64>,
    /// Output directory.
    #[arg(long)]
    output: Option<PathBuf>,
    #[arg(long)]
    hlsvd_order: Option<usize>,
    #[arg(long)]
    hlsvd_damping_threshold: Option<f64>,
}

impl Flags {
    fn resolve(&self) -> Result<ExperimentConfig, HarnessError> {
        let file = match &self.config {
            Some(p) => PartialConfig::from_toml_file(p)?,
            None => PartialConfig::default(),
        };
        file.overlay(PartialConfig {
            cohort: None,
            methods: self.methods.clone(),
            n_exec: self.n_exec,
            master_seed: self.master_seed,
            output_dir: self.output.clone(),
            alpha: self.alpha,
            n_boot: self.n_boot,
            jobs: self.jobs,
            fail_rate: self.fail_rate,
            hlsvd_order: self.hlsvd_order,
            hlsvd_damping_threshold: self.hlsvd_damping_threshold,
        })
        .resolve()
    }
}

fn progress() -> impl Fn(usize, usize) + Sync {
    let last = AtomicUsize::new(0);
    move |done, total| {
        let pct = done * 100 / total.max(1);
        if pct > last.load(Ordering::Relaxed) || done == total {
            last.store(pct, Ordering::Relaxed);
            eprint!("\rfits {done}/{total} ({pct}%)");
            if done == total {
                eprintln!();
            }
        }
    }
}

fn execute(cmd: &Command) -> Result<(), HarnessError> {
    let acq = || Acquisition::standard();
    match cmd {
        Command::Generate(f) => {
            let cfg = f.resolve()?;
            let s = harness::cmd_generate(&cfg, &acq())?;
            println!("wrote {} signals to {}", s.len(), cfg.output_dir.join(harness::COHORT_DIR).display());
        }
        Command::Run(f) => {
            let cfg = f.resolve()?;
            let t = harness::cmd_run(&cfg, &acq(), &progress())?;
            println!("wrote {} rows to {}", t.rows.len(), cfg.results_path().display());
        }
        Command::Analyze(f) => {
            let cfg = f.resolve()?;
            harness::cmd_analyze(&cfg)?;
            println!("wrote reports to {}", cfg.output_dir.join(harness::REPORT_DIR).display());
        }
        Command::All(f) => {
            let cfg = f.resolve()?;
            harness::cmd_all(&cfg, &acq(), &progress())?;
            println!("wrote {}", cfg.output_dir.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match execute(&cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
