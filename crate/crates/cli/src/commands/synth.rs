use evhdr_net::stack::preset_evs;

use crate::cli::SynthArgs;
use crate::error::CliResult;
use crate::scenes::{self, check_output_dir, create_dir};

pub fn synth(args: &SynthArgs) -> CliResult<()> {
    check_output_dir(&args.out)?;
    let evs = preset_evs(args.mode.into());
    let list = scenes::synthetic("scene", args.seed, 0, args.scenes, args.size, args.gamma, &evs)?;
    create_dir(&args.out)?;
    for s in &list {
        scenes::write_scene(&args.out, s)?;
    }
    log::info!("wrote {} scenes to {}", list.len(), args.out.display());
    Ok(())
}
