use clap::{Parser, Subcommand};
use conpaste_cli::{inspect, load_scenario, run_scenario, CliError, Overrides};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "conpaste", version, about = "Run conservative pasting scenarios")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run a scenario file and write its artifacts.
    Run {
        scenario: PathBuf,
        /// Output directory (default: out/<scenario name>).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Override the grid size.
        #[arg(long)]
        grid: Option<usize>,
        /// Override the seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Print the header and norms of a CVF1 field file.
    Inspect { file: PathBuf },
}

fn run(cli: Cli) -> Result<i32, CliError> {
    match cli.cmd {
        Cmd::Run { scenario, out, grid, seed } => {
            let sc = load_scenario(&scenario, Overrides { grid, seed })?;
            let art = run_scenario(&sc)?;
            let dir = out.unwrap_or_else(|| PathBuf::from("out").join(&sc.name));
            art.write_to(&dir).map_err(|e| CliError::Run(e.into()))?;
            match &art.error {
                Some(e) => eprintln!("{}: {e}", sc.name),
                None => println!("{}: ok -> {}", sc.name, dir.display()),
            }
            Ok(art.exit_code())
        }
        Cmd::Inspect { file } => {
            print!("{}", inspect(&file)?);
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    let code = run(Cli::parse()).unwrap_or_else(|e| {
        eprintln!("error: {e}");
        e.exit_code()
    });
    ExitCode::from(code as u8)
}
