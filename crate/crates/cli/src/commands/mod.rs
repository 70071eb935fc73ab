//! One module per subcommand. Each validates everything it can before
//! writing, so a validation failure (exit 2) leaves no partial output.

mod eval;
mod fuse;
mod reproduce;
mod stack;
mod synth;
mod tonemap;
mod train;

use crate::cli::{Cli, Command};
use crate::error::{CliError, CliResult};

pub use eval::eval;
pub use fuse::fuse;
pub use reproduce::reproduce;
pub use stack::stack;
pub use synth::synth;
pub use tonemap::tonemap;
pub use train::train;

pub fn run(cli: &Cli) -> CliResult<()> {
    match &cli.command {
        Command::Train(a) => train(a),
        Command::Stack(a) => stack(a),
        Command::Fuse(a) => fuse(a),
        Command::Tonemap(a) => tonemap(a),
        Command::Eval(a) => eval(a),
        Command::Reproduce(a) => reproduce(a),
        Command::Synth(a) => synth(a),
    }
}

/// Runs `f` on a pool of `workers` threads (0: the global pool).
pub(crate) fn with_workers<T: Send>(workers: usize, f: impl FnOnce() -> CliResult<T> + Send) -> CliResult<T> {
    if workers == 0 {
        return f();
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| CliError::Failed(format!("cannot start {workers} workers: {e}")))?
        .install(f)
}
