//! `depthlab` command-line runner.
//!
//! ```text
//! depthlab list
//! depthlab run gbm-hist --width 1 --depth 100 --samples 5000 --seed 7 --out results
//! ```
//!
//! Exit status is 0 when every acceptance rule passes, 2 when a rule fails
//! and 1 on usage or numerical errors.

mod config;

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use depthlab::experiments::{self, ExperimentSpec, Overrides, Variant};
use depthlab::Activation;

#[derive(Parser)]
#[command(name = "depthlab", version, about = "Monte Carlo checks of infinite-depth limits of finite-width ResNets")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// List the experiment catalog.
    List,
    /// Run one experiment and write `<out>/<name>.csv` and `<out>/<name>.report.json`.
    Run(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Experiment name, see `list`.
    experiment: String,
    /// Network width(s), comma separated.
    #[arg(short = 'n', long = "width", visible_alias = "dims", value_delimiter = ',')]
    widths: Option<Vec<usize>>,
    /// Network depth(s), comma separated.
    #[arg(short = 'L', long = "depth", value_delimiter = ',')]
    depths: Option<Vec<usize>>,
    /// Input dimension.
    #[arg(short = 'd', long)]
    input_dim: Option<usize>,
    /// Monte Carlo sample count(s), comma separated.
    #[arg(short = 'N', long, value_delimiter = ',')]
    samples: Option<Vec<usize>>,
    /// Euler step count(s), comma separated.
    #[arg(long, value_delimiter = ',')]
    steps: Option<Vec<usize>>,
    /// Root seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Activation, e.g. relu, identity, piecewise:1:-1, smooth-relu:10, exotic:1:0.
    #[arg(long)]
    activation: Option<Activation>,
    /// main | appendix | as-stated | reconciled
    #[arg(long)]
    variant: Option<Variant>,
    /// Number of individual paths written to the CSV where applicable.
    #[arg(long)]
    exported_paths: Option<usize>,
    /// Output directory.
    #[arg(long, default_value = ".")]
    out: PathBuf,
    /// Worker threads; results do not depend on this.
    #[arg(long)]
    threads: Option<usize>,
    /// key = value config file; flags take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
}

impl RunArgs {
    fn overrides(&self) -> Result<Overrides> {
        let flags = Overrides {
            widths: self.widths.clone(),
            depths: self.depths.clone(),
            input_dim: self.input_dim,
            samples: self.samples.clone(),
            steps: self.steps.clone(),
            seed: self.seed,
            activation: self.activation,
            variant: self.variant,
            exported_paths: self.exported_paths,
        };
        let file = match &self.config {
            Some(path) => {
                let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
                config::parse(&text).with_context(|| format!("parsing {}", path.display()))?
            }
            None => Overrides::default(),
        };
        Ok(flags.or(file))
    }
}

fn list() {
    for e in experiments::catalog() {
        println!("{:<18} {}", e.name, e.claim);
    }
}

fn run(args: &RunArgs) -> Result<bool> {
    if let Some(k) = args.threads {
        rayon::ThreadPoolBuilder::new().num_threads(k.max(1)).build_global()?;
    }
    let spec = ExperimentSpec::new(&args.experiment).with(args.overrides()?);
    let mut output = experiments::run(&spec)?;
    output.report.generated_at = SystemTime::now().duration_since(UNIX_EPOCH).ok().map(|d| d.as_secs());

    fs::create_dir_all(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    let name = &output.report.experiment;
    let csv_path = args.out.join(format!("{name}.csv"));
    let json_path = args.out.join(format!("{name}.report.json"));
    output.csv.write_to(BufWriter::new(File::create(&csv_path)?))?;
    fs::write(&json_path, output.report.to_json()? + "\n")?;

    for r in &output.report.rules {
        println!("{} {}: {}", if r.passed { "PASS" } else { "FAIL" }, r.rule, r.detail);
    }
    println!("wrote {} and {}", csv_path.display(), json_path.display());
    Ok(output.report.passed)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match cli.command {
        Command::List => {
            list();
            ExitCode::SUCCESS
        }
        Command::Run(args) => match run(&args) {
            Ok(true) => ExitCode::SUCCESS,
            Ok(false) => ExitCode::from(2),
            Err(e) => {
                eprintln!("error: {e:#}");
                ExitCode::from(1)
            }
        },
    }
}
