mod args;
mod error;
mod run;

use std::io::Write as _;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::Parser;
use serde_json::{json, Value};

use args::{Cli, Command};
use error::{CliError, CliResult};
use run::{Context, Writer};

fn out_dir(command: &Command) -> PathBuf {
    match command {
        Command::Fit(a) | Command::Cut(a) | Command::Simulate(a) => a.output.out.clone(),
        Command::Family(a) => a.run.output.out.clone(),
        Command::Rate(a) => a.output.out.clone(),
        Command::IngestInfo(a) => a.out.clone(),
    }
}

fn threads(command: &Command) -> Option<usize> {
    match command {
        Command::Fit(a) | Command::Cut(a) | Command::Simulate(a) => a.output.threads,
        Command::Family(a) => a.run.output.threads,
        Command::Rate(a) => a.output.threads,
        Command::IngestInfo(_) => None,
    }
}

fn execute(cli: &Cli, argv: &[String], ctx: &mut Context) -> CliResult<()> {
    let start = Instant::now();
    if let Some(n) = threads(&cli.command) {
        if n == 0 {
            return Err(CliError::Usage("--threads must be at least 1".into()));
        }
        // a second initialization only happens in tests; ignore it
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global();
    }
    let mut writer = Writer::new(&out_dir(&cli.command))?;
    let mut extra = Value::Null;
    match &cli.command {
        Command::Fit(a) => run::run_sweep("fit", a, &mut writer, ctx)?,
        Command::Cut(a) => run::run_sweep("cut", a, &mut writer, ctx)?,
        Command::Family(a) => run::run_family(a, &mut writer, ctx)?,
        Command::Simulate(a) => run::run_simulate(a, &mut writer, ctx)?,
        Command::Rate(a) => {
            let medians = run::run_rate(a, &mut writer)?;
            for (n, m) in &medians {
                let _ = writeln!(std::io::stdout(), "n = {n}: median error {m:.6}");
            }
            extra = json!(medians);
        }
        Command::IngestInfo(a) => {
            let summary = run::run_ingest_info(a, &mut writer)?;
            let _ = writeln!(std::io::stdout(), "{summary}");
        }
    }
    let manifest = json!({
        "command": cli.command.name(),
        "argv": argv,
        "config": cli,
        "version": depthreg::VERSION,
        "wall_time_s": start.elapsed().as_secs_f64(),
        "outputs": writer.written,
        "warnings": writer.warnings,
        "result": extra,
    });
    let outputs = writer.written.len();
    writer.write(
        "manifest.json",
        &serde_json::to_string_pretty(&manifest).expect("json"),
    )?;
    for w in &writer.warnings {
        eprintln!("warning: {w}");
    }
    let _ = writeln!(
        std::io::stdout(),
        "{} files written to {}",
        outputs + 1,
        out_dir(&cli.command).display()
    );
    Ok(())
}

fn main() -> ExitCode {
    let argv: Vec<String> = std::env::args().skip(1).collect();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            // --help and --version
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let err = CliError::Usage(e.kind().to_string());
            let mut ctx = Context::new();
            ctx.insert("detail".into(), json!(e.to_string().trim()));
            eprintln!("{}", err.to_json(&ctx));
            return ExitCode::from(err.exit_code() as u8);
        }
    };
    let mut ctx = Context::new();
    ctx.insert("command".into(), json!(cli.command.name()));
    match execute(&cli, &argv, &mut ctx) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.to_json(&ctx));
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
