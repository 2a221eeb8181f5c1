mod cli;
mod commands;
mod exit;
mod manifest;

use std::io::Write;
use std::process::ExitCode;

use clap::Parser;

use crate::cli::Cli;

fn init_logging(cli: &Cli) {
    let level = if cli.quiet {
        log::LevelFilter::Error
    } else {
        match cli.verbose {
            0 => log::LevelFilter::Warn,
            1 => log::LevelFilter::Info,
            _ => log::LevelFilter::Debug,
        }
    };
    env_logger::Builder::new()
        .filter_level(level)
        .parse_default_env()
        .format_timestamp_millis()
        .init();
}

/// The error chain joined by `: `, skipping causes already quoted by the message above them.
fn describe(err: &anyhow::Error) -> String {
    let mut out = String::new();
    for cause in err.chain() {
        let msg = cause.to_string();
        if out.contains(&msg) {
            continue;
        }
        if !out.is_empty() {
            out.push_str(": ");
        }
        out.push_str(&msg);
    }
    out
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { exit::USAGE } else { exit::OK };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    init_logging(&cli);
    let result = commands::run(&cli);
    let mut stdout = std::io::stdout().lock();
    match result {
        Ok(out) => {
            if cli.json {
                let mut obj = serde_json::json!({ "ok": true, "command": cli.command.name() });
                if let (Some(map), serde_json::Value::Object(fields)) = (obj.as_object_mut(), out.json) {
                    map.extend(fields);
                }
                let _ = writeln!(stdout, "{obj}");
            } else if !out.text.is_empty() {
                let _ = write!(stdout, "{}", out.text);
                if !out.text.ends_with('\n') {
                    let _ = writeln!(stdout);
                }
            }
            ExitCode::from(exit::OK)
        }
        Err(err) => {
            let code = exit::code_for(&err);
            if cli.json {
                let obj = serde_json::json!({
                    "ok": false,
                    "command": cli.command.name(),
                    "exit_code": code,
                    "error": describe(&err),
                });
                let _ = writeln!(stdout, "{obj}");
            }
            eprintln!("error: {}", describe(&err));
            ExitCode::from(code)
        }
    }
}
