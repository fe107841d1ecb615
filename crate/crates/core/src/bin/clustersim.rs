use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use clustersim::harness::{run_to_files, summarize, summarize_rows, Config, Method, Precoder, Sweep};
use clustersim::{Error, Result};

#[derive(Parser)]
#[command(name = "clustersim", version, about = "Base station clustering simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a Monte Carlo experiment and write a result CSV.
    Simulate {
        /// TOML file with [scenario] and [experiment] tables.
        #[arg(long)]
        config: PathBuf,
        /// Override the master seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value = "results.csv")]
        out: PathBuf,
        #[arg(long)]
        drops: Option<usize>,
        #[arg(long)]
        fading: Option<usize>,
        /// Comma-separated, e.g. formation-aos,oracle
        #[arg(long, value_delimiter = ',')]
        methods: Option<Vec<String>>,
        /// Comma-separated, e.g. iia,robust-wmmse
        #[arg(long, value_delimiter = ',')]
        precoders: Option<Vec<String>>,
        /// key=v1,v2,... with key one of snr_db, ms_speed_kmh, beta, I
        #[arg(long)]
        sweep: Option<String>,
    },
    /// Print per-method means of a result CSV.
    Summarize {
        #[arg(long = "in")]
        input: PathBuf,
    },
}

fn parse_list<T: std::str::FromStr<Err = String>>(key: &str, items: &[String]) -> Result<Vec<T>> {
    items
        .iter()
        .map(|s| s.parse().map_err(|e: String| Error::config(key, e)))
        .collect()
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate {
            config,
            seed,
            out,
            drops,
            fading,
            methods,
            precoders,
            sweep,
        } => {
            let mut cfg = Config::load(&config)?;
            let plan = &mut cfg.experiment;
            if let Some(s) = seed {
                plan.master_seed = s;
            }
            if let Some(d) = drops {
                plan.num_drops = d;
            }
            if let Some(f) = fading {
                plan.num_fading = f;
            }
            if let Some(m) = methods {
                plan.methods = parse_list::<Method>("experiment.methods", &m)?;
            }
            if let Some(p) = precoders {
                plan.precoders = parse_list::<Precoder>("experiment.precoders", &p)?;
            }
            if let Some(s) = sweep {
                plan.sweep = Some(Sweep::parse(&s)?);
            }
            let output = run_to_files(&cfg, &out)?;
            eprintln!("wrote {} rows to {}", output.rows.len(), out.display());
            for l in summarize_rows(&output.rows) {
                let sweep = l.sweep_value.map_or("-".to_string(), |v| v.to_string());
                let ratio = l.oracle_ratio.map_or(String::new(), |r| format!("  ratio to oracle {r:.4}"));
                println!(
                    "{sweep:>8}  {:<24} {:<13} mean {:.4} ± {:.4}{ratio}",
                    l.method, l.precoder, l.mean, l.std_error
                );
            }
        }
        Command::Summarize { input } => print!("{}", summarize(&input)?),
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
