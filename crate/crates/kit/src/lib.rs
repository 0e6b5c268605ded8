//! Model files, CSV/JSON output and the `resonance-kit` command line for
//! [`resonance_core`].

#![warn(missing_docs)]

pub mod commands;
pub mod error;
pub mod grid;
pub mod manifest;
pub mod model_io;
pub mod output;

pub use commands::{run, Cli, RunOutput};
pub use error::{KitError, KitResult};

use std::io::Write;

use error::{EXIT_NUMERICAL, EXIT_OK};

/// Runs a command line, writes data and manifest, reports errors on stderr,
/// and returns the process exit code.
pub fn execute(cli: &Cli) -> i32 {
    let out = match run(cli) {
        Ok(o) => o,
        Err(e) => {
            eprintln!("error: {e}");
            return e.exit_code();
        }
    };
    for m in &out.messages {
        eprintln!("{m}");
    }
    let written = match &cli.out {
        Some(path) => std::fs::write(path, &out.data).and_then(|_| {
            let manifest = serde_json::to_vec_pretty(&out.manifest).expect("manifest serializes");
            std::fs::write(manifest::manifest_path(path), manifest)
        }),
        None => std::io::stdout().lock().write_all(&out.data),
    };
    if let Err(e) = written {
        let e = KitError::from(e);
        eprintln!("error: {e}");
        return e.exit_code();
    }
    match out.failure {
        Some(f) => {
            eprintln!("error: {f}");
            EXIT_NUMERICAL
        }
        None => EXIT_OK,
    }
}
