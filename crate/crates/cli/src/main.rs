use std::process::ExitCode;

use clap::Parser;
use sqseg_cli::args::{Cli, Command};
use sqseg_cli::{commands, exit, service, Failure};
use tracing_subscriber::EnvFilter;

fn run(cli: Cli) -> Result<Option<serde_json::Value>, Failure> {
    match cli.command {
        Command::Gensig(a) => commands::gensig(&a).map(Some),
        Command::Segment(a) => commands::segment(&a).map(Some),
        Command::Eval(a) => commands::eval(&a).map(Some),
        Command::Inspect(a) => commands::inspect(&a).map(Some),
        Command::InitWeights(a) => commands::init_weights_cmd(&a).map(Some),
        Command::Serve(a) => {
            let rt = tokio::runtime::Runtime::new().map_err(|e| Failure {
                context: "starting runtime".into(),
                source: e.into(),
            })?;
            rt.block_on(service::serve(&a)).map(|()| None)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(exit::USAGE)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    tracing_subscriber::fmt()
        .json()
        .with_env_filter(EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()))
        .with_writer(std::io::stderr)
        .init();

    match run(cli) {
        Ok(Some(report)) => {
            println!(
                "{}",
                serde_json::to_string_pretty(&report).unwrap_or_default()
            );
            ExitCode::SUCCESS
        }
        Ok(None) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("sqseg: {e}");
            ExitCode::from(e.code())
        }
    }
}
