use std::collections::BTreeSet;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{anyhow, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use netfreedom::ml::ModelKind;
use netfreedom::pipeline::{self, PathGraph, PipelineConfig};
use netfreedom::CountryCode;

#[derive(Parser)]
#[command(name = "netfreedom", version, about = "Predict press freedom from AS-level topology")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse inputs and write the global AS graph and per-country summaries.
    Build(Overrides),
    /// Merge traceroute edges into the graph and report what they added.
    Traces(Overrides),
    /// Compute and scale the per-country feature matrix.
    Features(Overrides),
    /// Run leave-one-out evaluation of the selected models.
    Predict(Overrides),
    /// Run every stage and write a summary report.
    Report(Overrides),
}

#[derive(Clone, Copy, ValueEnum)]
enum ModelChoice {
    Lr,
    Lasso,
    Dtla,
    Dtlr,
    All,
}

#[derive(Clone, Copy, ValueEnum)]
enum GraphChoice {
    Caida,
    Augmented,
}

#[derive(Args)]
struct Overrides {
    /// TOML configuration file.
    #[arg(long)]
    config: PathBuf,
    /// Countries kept out of training, comma separated (e.g. US,RU).
    #[arg(long, value_delimiter = ',')]
    exclude: Option<Vec<String>>,
    #[arg(long, value_enum)]
    model: Option<ModelChoice>,
    #[arg(long)]
    seed: Option<u64>,
    /// Graph used for country-to-country path lengths.
    #[arg(long, value_enum)]
    path_graph: Option<GraphChoice>,
    #[arg(long)]
    out: Option<PathBuf>,
}

impl Overrides {
    fn resolve(&self) -> Result<PipelineConfig> {
        let mut cfg =
            PipelineConfig::load(&self.config).with_context(|| format!("loading {}", self.config.display()))?;
        if let Some(list) = &self.exclude {
            cfg.exclude = list
                .iter()
                .map(|s| s.trim())
                .filter(|s| !s.is_empty())
                .map(|s| CountryCode::new(s).ok_or_else(|| anyhow!("{s:?} is not a two-letter country code")))
                .collect::<Result<BTreeSet<_>>>()?;
        }
        if let Some(m) = self.model {
            cfg.models = match m {
                ModelChoice::Lr => vec![ModelKind::Lr],
                ModelChoice::Lasso => vec![ModelKind::Lasso],
                ModelChoice::Dtla => vec![ModelKind::Dtla],
                ModelChoice::Dtlr => vec![ModelKind::Dtlr],
                ModelChoice::All => ModelKind::ALL.to_vec(),
            };
        }
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(g) = self.path_graph {
            cfg.path_graph = match g {
                GraphChoice::Caida => PathGraph::Caida,
                GraphChoice::Augmented => PathGraph::Augmented,
            };
        }
        if let Some(o) = &self.out {
            cfg.out = o.clone();
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Build(o) => {
            let cfg = o.resolve()?;
            let built = pipeline::cmd_build(&cfg)?;
            println!(
                "{} ASes, {} edges -> {}",
                built.graph.num_nodes(),
                built.graph.num_edges(),
                cfg.out.join("build").display()
            );
        }
        Command::Traces(o) => {
            let cfg = o.resolve()?;
            let t = pipeline::cmd_traces(&cfg)?;
            print!("{}", t.summary_csv());
        }
        Command::Features(o) => {
            let cfg = o.resolve()?;
            let run = pipeline::cmd_features(&cfg)?;
            println!(
                "{} countries, {} features, {} missing -> {}",
                run.matrix.rows.len(),
                run.matrix.columns.len(),
                run.missing.len(),
                cfg.out.join("features").display()
            );
        }
        Command::Predict(o) => {
            let cfg = o.resolve()?;
            for m in pipeline::cmd_predict(&cfg)? {
                println!("{}: mean abs error {:.4}", m.report.model, m.report.mean_abs_error());
            }
        }
        Command::Report(o) => {
            let cfg = o.resolve()?;
            print!("{}", pipeline::cmd_report(&cfg)?);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
