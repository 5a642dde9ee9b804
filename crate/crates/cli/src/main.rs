use std::process::ExitCode;

use clap::Parser;

use fastsvt_cli::args::Cli;
use fastsvt_cli::error::{EXIT_NOT_CONVERGED, EXIT_OK};
use fastsvt_cli::{run, Outcome};

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("SVT_LOG", "warn")).init();
    let cli = Cli::parse();
    let code = match run(cli) {
        Ok(Outcome::Generated(paths)) => {
            for p in paths {
                println!("wrote {}", p.display());
            }
            EXIT_OK
        }
        Ok(Outcome::Run(report)) => {
            println!("{}", serde_json::to_string_pretty(&report.summary).unwrap_or_default());
            println!("artifacts in {}", report.out_dir.display());
            if report.converged {
                EXIT_OK
            } else {
                eprintln!("fastsvt: stopped at the iteration cap without meeting the stop rule");
                EXIT_NOT_CONVERGED
            }
        }
        Err(e) => {
            eprintln!("fastsvt: {e}");
            e.exit_code()
        }
    };
    ExitCode::from(code as u8)
}
