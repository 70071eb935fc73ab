use std::fs;

use evhdr_core::image::{load_ldr, save_ldr};
use evhdr_net::stack::{generate_stack, preset_evs};
use evhdr_net::weights::load_weights;
use evhdr_net::{Direction, ModelWeights};

use crate::cli::StackArgs;
use crate::error::{CliError, CliResult, Phase};
use crate::scenes::{check_output_dir, create_dir};

fn load_model(path: &std::path::Path, expected: Direction) -> CliResult<ModelWeights> {
    let w = load_weights(path).invalid()?;
    if w.direction() != expected {
        return Err(CliError::Invalid(format!(
            "{} holds a {} model, expected {expected}",
            path.display(),
            w.direction()
        )));
    }
    Ok(w)
}

pub fn stack(args: &StackArgs) -> CliResult<()> {
    let inc = load_model(&args.inc, Direction::Increase)?;
    let dec = load_model(&args.dec, Direction::Decrease)?;
    let (hi, hd) = (inc.config().hash(), dec.config().hash());
    if hi != hd {
        return Err(CliError::Invalid(format!(
            "the two models were built from different configs ({} vs {})",
            &hi[..12],
            &hd[..12]
        )));
    }
    let input = load_ldr(&args.input).invalid()?;
    check_output_dir(&args.out)?;

    let stack = generate_stack(Some(&inc), Some(&dec), &input, &preset_evs(args.mode.into())).failed()?;
    create_dir(&args.out)?;
    let is_png = args
        .input
        .extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| e.eq_ignore_ascii_case("png"));
    for (ev, img) in stack.entries() {
        let path = args.out.join(format!("{}.png", ev.label()));
        if ev.is_zero() && is_png {
            fs::copy(&args.input, &path)
                .map_err(|e| CliError::Failed(format!("cannot copy to {}: {e}", path.display())))?;
        } else {
            save_ldr(img, &path).failed()?;
        }
    }
    log::info!("wrote {} images to {}", stack.len(), args.out.display());
    Ok(())
}
