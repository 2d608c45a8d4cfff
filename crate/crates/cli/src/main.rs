mod args;
mod commands;

use std::ffi::OsString;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::Parser;
use gliomics::{Error, Result};
use serde_json::{json, Map, Value};

use args::{Cli, Command, SUBCOMMANDS};
use commands::Output;

fn main() -> ExitCode {
    let argv: Vec<OsString> = std::env::args_os().collect();
    let json_requested = argv.iter().any(|a| a == "--json");
    let code = match run(argv) {
        Ok(()) => 0,
        Err(Failure::Clap(e)) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            if code != 0 && json_requested {
                println!("{}", json!({ "error": e.to_string().trim(), "exit_code": code }));
            }
            let _ = e.print();
            code
        }
        Err(Failure::Run(prefix, e)) => {
            let code = if e.is_io() { 2 } else { 1 };
            let msg = format!("{prefix}: {e}");
            if json_requested {
                println!("{}", json!({ "error": msg, "exit_code": code }));
            }
            eprintln!("error: {msg}");
            code
        }
    };
    ExitCode::from(code)
}

enum Failure {
    Clap(clap::Error),
    Run(&'static str, Error),
}

fn run(mut argv: Vec<OsString>) -> std::result::Result<(), Failure> {
    inject_config(&mut argv).map_err(|e| Failure::Run("config", e))?;
    let cli = Cli::try_parse_from(argv).map_err(Failure::Clap)?;
    let name = cli.command.name();
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(Failure::Run(name, Error::Config("--threads must be at least 1".into())));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure::Run(name, Error::Config(format!("thread pool: {e}"))))?;
    }
    let out = dispatch(&cli).map_err(|e| Failure::Run(name, e))?;
    for w in &out.warnings {
        eprintln!("warning: {w}");
    }
    if cli.json {
        println!("{}", serde_json::to_string_pretty(&out.json).expect("serialisable"));
    } else {
        print!("{}", out.text);
    }
    Ok(())
}

fn dispatch(cli: &Cli) -> Result<Output> {
    match &cli.command {
        Command::Extract(a) => commands::extract(a),
        Command::Ric(a) => commands::ric_cmd(a),
        Command::Select(a) => commands::select(a),
        Command::Train(a) => commands::train(a),
        Command::Predict(a) => commands::predict(a),
        Command::Evaluate(a) => commands::evaluate_cmd(a),
        Command::Cv(a) => commands::cv(a),
        Command::Study(a) => commands::study(a, cli.config.as_deref()),
        Command::Fuse(a) => commands::fuse(a),
        Command::Postproc(a) => commands::postproc(a),
        Command::Segmetrics(a) => commands::segmetrics(a),
        Command::Synth(a) => commands::synth(a),
    }
}

/// Finds `--config FILE` (or `--config=FILE`) anywhere in argv.
fn config_path(argv: &[OsString]) -> Option<PathBuf> {
    let mut it = argv.iter();
    while let Some(a) = it.next() {
        if a == "--config" {
            return it.next().map(PathBuf::from);
        }
        if let Some(v) = a.to_str().and_then(|s| s.strip_prefix("--config=")) {
            return Some(PathBuf::from(v));
        }
    }
    None
}

/// Turns the config object into flag tokens placed right after the
/// subcommand, so anything typed on the command line overrides them.
fn inject_config(argv: &mut Vec<OsString>) -> Result<()> {
    let Some(path) = config_path(argv) else {
        return Ok(());
    };
    let Some(pos) = argv.iter().position(|a| a.to_str().is_some_and(|s| SUBCOMMANDS.contains(&s))) else {
        return Ok(());
    };
    if argv[pos] == "study" {
        return Ok(());
    }
    let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let obj: Map<String, Value> =
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: expected a JSON object: {e}", path.display())))?;
    let tokens = config_tokens(&obj)?;
    argv.splice(pos + 1..pos + 1, tokens);
    Ok(())
}

fn config_tokens(obj: &Map<String, Value>) -> Result<Vec<OsString>> {
    let scalar = |k: &str, v: &Value| -> Result<String> {
        match v {
            Value::String(s) => Ok(s.clone()),
            Value::Number(n) => Ok(n.to_string()),
            _ => Err(Error::Config(format!("config key {k}: unsupported value {v}"))),
        }
    };
    let mut out = Vec::new();
    for (k, v) in obj {
        let flag = format!("--{}", k.replace('_', "-"));
        match v {
            Value::Bool(true) => out.push(flag.into()),
            Value::Bool(false) | Value::Null => {}
            Value::Array(items) => {
                for item in items {
                    out.push(flag.clone().into());
                    out.push(scalar(k, item)?.into());
                }
            }
            _ => {
                out.push(flag.into());
                out.push(scalar(k, v)?.into());
            }
        }
    }
    Ok(out)
}
