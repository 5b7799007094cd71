//! `value-lens`: score a language model's anchor distributions against
//! survey reference data.
//!
//! Exit codes are a stable CI contract: 0 success, 1 validation
//! violations, 2 usage/parse errors, 3 backend failures, 4 partial run
//! failure.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use value_lens::error::Error;

use config::{CliOverrides, ConfigFile};

#[derive(Parser)]
#[command(
    name = "value-lens",
    version,
    about = "Distributional value benchmark: anchor likelihood scoring, prior debiasing, and divergence against national reference data"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Default)]
struct CommonArgs {
    /// JSON config file; flags override its fields.
    #[arg(long, global = false)]
    config: Option<PathBuf>,
    /// Catalog document (see README for the schema).
    #[arg(long)]
    catalog: Option<PathBuf>,
    /// Scoring backend, by registered name.
    #[arg(long)]
    backend: Option<String>,
    /// Model identifier recorded in keys and the manifest.
    #[arg(long)]
    model: Option<String>,
    /// Pipeline mode: naive | sets | sets-bayes.
    #[arg(long)]
    mode: Option<String>,
    /// Prompt template with {question} and {anchor} placeholders
    /// (optional {options} expands to the anchor texts).
    #[arg(long)]
    template: Option<String>,
    /// Prior file produced by estimate-priors.
    #[arg(long)]
    prior: Option<PathBuf>,
    /// Estimate priors inline before a sets-bayes run.
    #[arg(long)]
    estimate_priors: bool,
    /// Comma-separated item filter.
    #[arg(long, value_delimiter = ',')]
    items: Option<Vec<String>>,
    /// Comma-separated country filter.
    #[arg(long, value_delimiter = ',')]
    countries: Option<Vec<String>>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Max concurrent in-flight backend requests.
    #[arg(long)]
    concurrency: Option<usize>,
    /// Divide continuation log-probabilities by token count.
    #[arg(long)]
    length_normalize: bool,
    /// Score cache path (append-only JSONL).
    #[arg(long)]
    cache: Option<PathBuf>,
    /// Seed file for the mock backend.
    #[arg(long)]
    mock_seeds: Option<PathBuf>,
    /// Remote endpoint URL (overrides the endpoint env var).
    #[arg(long)]
    endpoint: Option<String>,
    /// Env var name holding the endpoint URL.
    #[arg(long)]
    endpoint_env: Option<String>,
    /// Env var name holding the credential.
    #[arg(long)]
    credential_env: Option<String>,
    /// Neutral context for prior estimation (repeatable).
    #[arg(long = "neutral-context")]
    neutral_contexts: Option<Vec<String>>,
}

impl CommonArgs {
    fn resolve(self) -> Result<config::RunConfig, Error> {
        let file = match &self.config {
            Some(path) => ConfigFile::load(path)?,
            None => ConfigFile::default(),
        };
        let overrides = CliOverrides {
            catalog: self.catalog,
            backend: self.backend,
            model: self.model,
            mode: self.mode,
            template: self.template,
            prior_file: self.prior,
            estimate_priors: self.estimate_priors,
            items: self.items,
            countries: self.countries,
            out_dir: self.out,
            concurrency: self.concurrency,
            length_normalize: self.length_normalize,
            cache: self.cache,
            mock_seeds: self.mock_seeds,
            endpoint: self.endpoint,
            endpoint_env: self.endpoint_env,
            credential_env: self.credential_env,
            neutral_contexts: self.neutral_contexts,
        };
        config::resolve(overrides, file)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Parse a catalog and report every invariant violation.
    Validate {
        #[arg(long)]
        catalog: PathBuf,
    },
    /// Estimate anchor priors per distinct anchor set and write a prior file.
    EstimatePriors {
        #[command(flatten)]
        common: CommonArgs,
        /// Where to write the prior file.
        #[arg(long, default_value = "priors.json")]
        prior_out: PathBuf,
    },
    /// Run the pipeline over the catalog and emit the result bundle.
    Run {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Score an item with and without one anchor and report the shift.
    DiagIia {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long)]
        item: String,
        /// Anchor id to remove for the reduced-set run.
        #[arg(long)]
        anchor: String,
    },
    /// Re-project an existing results.json onto the cultural map, or check
    /// the bundled coordinate fixture.
    Map {
        #[arg(long)]
        results: Option<PathBuf>,
        /// Catalog override; defaults to the path recorded in the manifest.
        #[arg(long)]
        catalog: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Extra coordinate rows (same CSV columns as the fixture) plotted
        /// alongside the run, e.g. human country points.
        #[arg(long)]
        overlay: Option<PathBuf>,
        /// Verify coordinate fixture rows parse, lie in range, and render.
        #[arg(long)]
        check_fixture: bool,
        /// Fixture CSV to check instead of the bundled one.
        #[arg(long)]
        fixture: Option<PathBuf>,
    },
    /// Re-emit CSVs and plots from an existing results.json.
    Report {
        #[arg(long)]
        results: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn exit_code_for(error: &Error) -> u8 {
    match error {
        Error::BackendUnavailable { .. }
        | Error::ProtocolError { .. }
        | Error::ContinuationMisaligned { .. }
        | Error::BatchFailed { .. } => 3,
        Error::RequestFailed { source, .. } | Error::ItemFailed { source, .. } => {
            exit_code_for(source)
        }
        _ => 2,
    }
}

fn dispatch(cli: Cli) -> Result<i32, Error> {
    match cli.command {
        Command::Validate { catalog } => commands::cmd_validate(&catalog),
        Command::EstimatePriors { common, prior_out } => {
            let config = common.resolve()?;
            commands::cmd_estimate_priors(&config, &prior_out)
        }
        Command::Run { common } => {
            let config = common.resolve()?;
            commands::cmd_run(&config)
        }
        Command::DiagIia {
            common,
            item,
            anchor,
        } => {
            let config = common.resolve()?;
            commands::cmd_diag_iia(&config, &item, &anchor)
        }
        Command::Map {
            results,
            catalog,
            out,
            overlay,
            check_fixture,
            fixture,
        } => commands::cmd_map(
            results.as_deref(),
            catalog.as_deref(),
            out.as_deref(),
            overlay.as_deref(),
            check_fixture,
            fixture.as_deref(),
        ),
        Command::Report { results, out } => commands::cmd_report(&results, &out),
    }
}

fn main() -> ExitCode {
    // die quietly when stdout is a closed pipe, like other unix tools
    #[cfg(unix)]
    unsafe {
        libc::signal(libc::SIGPIPE, libc::SIG_DFL);
    }
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(error) => {
            eprintln!("error: {error}");
            ExitCode::from(exit_code_for(&error))
        }
    }
}
