use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::Parser;
use gapcert_cli::{parse_config, render, run, CliError, Format, EXIT_UNCERTIFIED};

/// Certified spectral-gap lower bounds from a JSON run configuration.
#[derive(Parser, Debug)]
#[command(name = "gapcert", version)]
struct Args {
    /// Run configuration (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Output file; overrides `output.path`. Standard output when neither is set.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Output format; overrides `output.format`.
    #[arg(long, value_enum)]
    format: Option<FormatArg>,
    /// No diagnostics on standard error.
    #[arg(long)]
    quiet: bool,
    /// Embed `wall_time_ms` in the record (makes reruns differ).
    #[arg(long)]
    timing: bool,
}

#[derive(clap::ValueEnum, Clone, Copy, Debug)]
enum FormatArg {
    Json,
    Csv,
}

fn configure_threads(quiet: bool) {
    let Ok(raw) = std::env::var("GAPCERT_THREADS") else { return };
    match raw.trim().parse::<usize>() {
        Ok(n) if n > 0 => {
            let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
        }
        _ if !quiet => eprintln!("gapcert: ignoring GAPCERT_THREADS={raw:?}"),
        _ => {}
    }
}

fn execute(args: &Args) -> Result<i32, CliError> {
    let source = args.config.display().to_string();
    let text = std::fs::read_to_string(&args.config)
        .map_err(|e| CliError::Schema(format!("{source}:1:1: cannot read config: {e}")))?;
    let cfg = parse_config(&text, &source)?;
    let start = Instant::now();
    let mut record = run(&cfg)?;
    let elapsed = start.elapsed().as_secs_f64() * 1e3;
    if args.timing {
        record.wall_time_ms = Some(elapsed);
    } else if !args.quiet {
        eprintln!("gapcert: wall_time_ms = {elapsed:.1}");
    }
    let format = match args.format {
        Some(FormatArg::Json) => Format::Json,
        Some(FormatArg::Csv) => Format::Csv,
        None => cfg.output.format,
    };
    let text = render(&record, format)?;
    match args.out.clone().or_else(|| cfg.output.path.as_ref().map(PathBuf::from)) {
        Some(path) => std::fs::write(path, text)?,
        None => print!("{text}"),
    }
    if record.uncertified_under_policy() {
        if !args.quiet {
            eprintln!("gapcert: result is not certified under the certified_only policy");
        }
        return Ok(EXIT_UNCERTIFIED);
    }
    Ok(0)
}

fn main() -> ExitCode {
    let args = Args::parse();
    configure_threads(args.quiet);
    match execute(&args) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            if !args.quiet {
                eprintln!("{e}");
            }
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
