use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand, ValueEnum};
use fmgc_core::{enumerate_configurations, is_consistent, load_interactions, parse_model, FeatureModel, ItemKind};
use fmgc_service::{eval_loo, Store};

#[derive(Parser)]
#[command(name = "fmgc", version, about = "Group configuration of feature models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the HTTP/JSON service.
    Serve {
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "data")]
        data_dir: PathBuf,
    },
    /// Parse a model file and check that it has a valid configuration.
    Check { model: PathBuf },
    /// List valid configurations, smallest first.
    Configs {
        model: PathBuf,
        #[arg(long, default_value_t = 100)]
        limit: usize,
    },
    /// Leave-one-out evaluation of rating prediction; prints JSON.
    Eval {
        #[arg(long)]
        interactions: PathBuf,
        #[arg(long, value_enum)]
        kind: Kind,
        #[arg(long, default_value_t = 3)]
        k: usize,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Kind {
    Order,
    Choice,
}

impl From<Kind> for ItemKind {
    fn from(kind: Kind) -> Self {
        match kind {
            Kind::Order => ItemKind::ConstraintOrder,
            Kind::Choice => ItemKind::FeatureChoice,
        }
    }
}

fn read_model(path: &PathBuf) -> anyhow::Result<FeatureModel> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    parse_model(&text).with_context(|| format!("parsing {}", path.display()))
}

fn run(cli: Cli) -> anyhow::Result<ExitCode> {
    match cli.command {
        Command::Serve { port, data_dir } => {
            let store = Store::open(&data_dir).with_context(|| format!("opening {}", data_dir.display()))?;
            let runtime = tokio::runtime::Runtime::new()?;
            runtime.block_on(async {
                let listener = tokio::net::TcpListener::bind(("0.0.0.0", port)).await?;
                eprintln!("listening on {}", listener.local_addr()?);
                fmgc_service::serve(listener, store).await
            })?;
        }
        Command::Check { model } => {
            let fm = read_model(&model)?;
            let satisfiable = is_consistent(&fm, [])?;
            println!(
                "{}: {} features, {} constraints, {}",
                fm.name(),
                fm.feature_count(),
                fm.constraints().len(),
                if satisfiable { "satisfiable" } else { "void (no valid configuration)" }
            );
            if !satisfiable {
                return Ok(ExitCode::FAILURE);
            }
        }
        Command::Configs { model, limit } => {
            let fm = read_model(&model)?;
            for config in enumerate_configurations(&fm, limit)? {
                let names: Vec<&str> = config.iter().map(|f| f.as_str()).collect();
                println!("{}", names.join(" "));
            }
        }
        Command::Eval { interactions, kind, k } => {
            let csv = std::fs::read_to_string(&interactions)
                .with_context(|| format!("reading {}", interactions.display()))?;
            let matrix = load_interactions(&csv, kind.into())?;
            let result = eval_loo(&matrix, k)?;
            println!("{}", serde_json::to_string(&result)?);
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
