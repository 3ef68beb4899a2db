//! Command-line pipeline stages and the review service.

use std::ffi::OsString;
use std::fmt;
use std::io::Write;

use clap::Parser;
use serde_json::json;

pub mod args;
pub mod commands;
pub mod service;

use args::{Cli, Command};

/// A well-formed command whose arguments cannot be acted on. Exits with 2.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

pub const EXIT_STAGE_ERROR: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

fn variant<T: fmt::Debug>(e: &T) -> String {
    let debug = format!("{e:?}");
    debug
        .split(|c: char| !c.is_alphanumeric())
        .next()
        .unwrap_or_default()
        .to_string()
}

/// Name of the most specific known error in the chain.
pub fn error_kind(err: &anyhow::Error) -> String {
    use stancebench::*;
    for cause in err.chain() {
        macro_rules! try_kind {
            ($($t:ty),*) => {$(
                if let Some(e) = cause.downcast_ref::<$t>() {
                    return variant(e);
                }
            )*};
        }
        try_kind!(
            corpus::CorpusError,
            promptlab::PromptError,
            budget::BudgetError,
            backends::BackendError,
            runner::RunError,
            postprocess::ReviewError,
            eval::EvalError,
            gateway::ConfigError
        );
        if cause.downcast_ref::<UsageError>().is_some() {
            return "UsageError".into();
        }
    }
    "Error".into()
}

/// The structured line printed on stderr for a failed command.
pub fn error_line(err: &anyhow::Error) -> serde_json::Value {
    let mut line = json!({ "error": error_kind(err), "message": format!("{err:#}") });
    if let Some(stancebench::eval::EvalError::UnresolvedReview(ids)) = err.downcast_ref() {
        line["prompt_ids"] = json!(ids);
    }
    line
}

pub fn execute(cli: &Cli, out: &mut dyn Write) -> anyhow::Result<()> {
    match &cli.command {
        Command::Split(a) => commands::split(a, out),
        Command::GenPrompts(a) => commands::gen_prompts(a, out),
        Command::Budget(a) => commands::budget(a, out),
        Command::Run(a) => commands::run(a, out),
        Command::Status(a) => commands::status(a, out),
        Command::Repair(a) => commands::repair(a, out),
        Command::Parse(a) => commands::parse(a, out),
        Command::Eval(a) => commands::eval(a, out),
        Command::Report(a) => commands::report(a, out),
        Command::ImportPredictions(a) => commands::import_predictions(a, out),
        Command::Serve(a) => commands::serve(a),
    }
}

/// Parses arguments, runs one command and returns the process exit status.
pub fn main_with<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) if e.use_stderr() => {
            let line = json!({ "error": "UsageError", "message": e.to_string().trim_end() });
            let _ = writeln!(err, "{line}");
            return EXIT_USAGE;
        }
        Err(e) => {
            let _ = write!(out, "{e}");
            return 0;
        }
    };
    match execute(&cli, out) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(err, "{}", error_line(&e));
            if e.downcast_ref::<UsageError>().is_some() {
                EXIT_USAGE
            } else {
                EXIT_STAGE_ERROR
            }
        }
    }
}
