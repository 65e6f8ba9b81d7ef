//! `graspstack` — command-line harness for the prosthetic-hand control
//! stack: scenario execution, model training/evaluation and fixture
//! generation.
//!
//! Exit codes: 0 success, 1 runtime error or aborted episode, 2 episode
//! ended with a broken object, 3 episode timed out, 64 usage or schema
//! errors.

mod commands;

use clap::error::ErrorKind;
use clap::Parser;
use commands::Cli;

pub const EXIT_OK: i32 = 0;
pub const EXIT_ERROR: i32 = 1;
pub const EXIT_BROKEN: i32 = 2;
pub const EXIT_TIMEOUT: i32 = 3;
pub const EXIT_USAGE: i32 = 64;

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // Help/version are not usage errors.
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => EXIT_OK,
                _ => EXIT_USAGE,
            };
            let _ = e.print();
            std::process::exit(code);
        }
    };
    match commands::run(cli) {
        Ok(code) => std::process::exit(code),
        Err(e) => {
            eprintln!("error: {e}");
            std::process::exit(e.exit_code());
        }
    }
}
