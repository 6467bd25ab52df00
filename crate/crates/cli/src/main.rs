use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::Parser;

/// Run one degenerate-control experiment described by a config file.
#[derive(Parser, Debug)]
#[command(name = "degen-control", version)]
struct Args {
    /// `key = value` configuration file
    config: PathBuf,
    /// Output directory (overrides the `output` key)
    #[arg(long)]
    out: Option<PathBuf>,
    /// Sampling seed (overrides the `seed` key)
    #[arg(long)]
    seed: Option<u64>,
}

fn main() -> ExitCode {
    let args = match Args::try_parse() {
        Ok(a) => a,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            e.exit()
        }
        Err(e) => {
            let _ = e.print();
            eprintln!("ERROR UsageError: {}", e.kind());
            return ExitCode::from(1);
        }
    };
    match degen_cli::run(&args.config, args.out.as_deref(), args.seed) {
        Ok(outcome) => {
            for f in &outcome.files {
                println!("{}", outcome.out_dir.join(f).display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{}", e.error_line());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
