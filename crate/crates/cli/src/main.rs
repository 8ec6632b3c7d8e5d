use std::collections::{BTreeMap, BTreeSet};
use std::net::SocketAddr;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use xwacoda::{CubeOps, OutputFormat, Outcome, ServerConfig};

#[derive(Parser)]
#[command(name = "xwacoda", version, about = "XML data warehouse: validate, ingest, query, cube, serve")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check a warehouse's documents and hierarchies.
    Validate {
        /// Warehouse directory or its dw-model.xml.
        dir: PathBuf,
    },
    /// Generate warehouse documents from CSV or XML records.
    Ingest {
        /// Source files; `.xml` files are read as records, others as CSV.
        #[arg(long, required = true, num_args = 1..)]
        sources: Vec<PathBuf>,
        /// TOML mapping from source fields to the model.
        #[arg(long)]
        mapping: PathBuf,
        /// Metadata document of the target warehouse.
        #[arg(long)]
        model: PathBuf,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate an analytic query.
    Query {
        dir: PathBuf,
        /// Query text, or @file.
        #[arg(long)]
        query: String,
        #[arg(long, value_enum, default_value_t = OutputFormat::TextTable)]
        format: OutputFormat,
    },
    /// Build a cube and apply operators: roll-ups, drill-downs, dice, then slices.
    Cube {
        dir: PathBuf,
        /// Cube specification as JSON, or @file.
        #[arg(long)]
        spec: String,
        #[arg(long = "roll-up", value_name = "DIM")]
        roll_up: Vec<String>,
        #[arg(long = "drill-down", value_name = "DIM")]
        drill_down: Vec<String>,
        /// Keep only the listed members of a dimension.
        #[arg(long, value_name = "DIM=M1,M2")]
        dice: Vec<String>,
        #[arg(long, value_name = "DIM=M")]
        slice: Vec<String>,
        /// Print the serialized cube instead of a pivot table.
        #[arg(long)]
        json: bool,
    },
    /// Serve the HTTP API and, optionally, static explorer assets.
    Serve {
        dir: PathBuf,
        #[arg(long, default_value = "127.0.0.1:8080")]
        bind: SocketAddr,
        #[arg(long)]
        static_dir: Option<PathBuf>,
        #[arg(long)]
        request_log: Option<PathBuf>,
    },
}

fn split_assignment(arg: &str) -> Result<(String, String), Outcome> {
    arg.split_once('=')
        .map(|(d, m)| (d.trim().to_string(), m.trim().to_string()))
        .ok_or_else(|| Outcome {
            status: 1,
            stdout: String::new(),
            stderr: format!("error: expected DIM=MEMBER, got {arg:?}\n"),
        })
}

fn cube_ops(roll_up: Vec<String>, drill_down: Vec<String>, dice: Vec<String>, slice: Vec<String>, json: bool) -> Result<CubeOps, Outcome> {
    let mut kept: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
    for d in &dice {
        let (dim, members) = split_assignment(d)?;
        kept.entry(dim)
            .or_default()
            .extend(members.split(',').map(str::trim).filter(|m| !m.is_empty()).map(String::from));
    }
    Ok(CubeOps {
        roll_up,
        drill_down,
        dice: kept,
        slice: slice.iter().map(|s| split_assignment(s)).collect::<Result<_, _>>()?,
        json,
    })
}

fn main() -> ExitCode {
    let outcome = match Cli::parse().command {
        Command::Validate { dir } => xwacoda::validate(&dir),
        Command::Ingest {
            sources,
            mapping,
            model,
            out,
        } => xwacoda::ingest(&sources, &mapping, &model, &out),
        Command::Query { dir, query, format } => xwacoda::query(&dir, &query, format),
        Command::Cube {
            dir,
            spec,
            roll_up,
            drill_down,
            dice,
            slice,
            json,
        } => match cube_ops(roll_up, drill_down, dice, slice, json) {
            Ok(ops) => xwacoda::cube(&dir, &spec, &ops),
            Err(o) => o,
        },
        Command::Serve {
            dir,
            bind,
            static_dir,
            request_log,
        } => {
            let config = ServerConfig {
                static_dir,
                request_log,
                ..ServerConfig::new(dir, bind)
            };
            let runtime = tokio::runtime::Runtime::new().expect("tokio runtime");
            return match runtime.block_on(xwacoda::serve(config)) {
                Ok(()) => ExitCode::SUCCESS,
                Err(e) => {
                    eprintln!("error: {e:#}");
                    ExitCode::from(2)
                }
            };
        }
    };
    print!("{}", outcome.stdout);
    eprint!("{}", outcome.stderr);
    ExitCode::from(outcome.status as u8)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dice_arguments_accumulate_per_dimension() {
        let ops = cube_ops(vec![], vec![], vec!["P=p1, p2".into(), "P=p3".into()], vec!["D=d1".into()], false).unwrap();
        assert_eq!(ops.dice["P"].iter().collect::<Vec<_>>(), ["p1", "p2", "p3"]);
        assert_eq!(ops.slice, vec![("D".to_string(), "d1".to_string())]);
        assert!(cube_ops(vec![], vec![], vec![], vec!["no-equals".into()], false).is_err());
    }
}
