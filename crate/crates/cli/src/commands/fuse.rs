use evhdr_core::dataset::load_stack_dir;
use evhdr_core::fusion::{fuse_stack, min_samples};
use evhdr_core::rgbe::write_radiance_rgbe;

use crate::cli::FuseArgs;
use crate::error::{CliError, CliResult, Phase};
use crate::report::write_text;
use crate::scenes::check_output_file;

pub fn fuse(args: &FuseArgs) -> CliResult<()> {
    let stack = load_stack_dir(&args.stack).invalid()?;
    if stack.len() < 2 {
        return Err(CliError::Invalid(format!(
            "{} holds {} image(s); fusion needs at least two",
            args.stack.display(),
            stack.len()
        )));
    }
    if !(args.lambda >= 0.0 && args.lambda.is_finite()) {
        return Err(CliError::Invalid(format!("--lambda must be >= 0, got {}", args.lambda)));
    }
    let need = min_samples(stack.len());
    let (h, w) = stack.dims();
    if args.samples < need || args.samples > h * w {
        return Err(CliError::Invalid(format!(
            "--samples must lie in [{need}, {}] for this stack, got {}",
            h * w,
            args.samples
        )));
    }
    check_output_file(&args.out)?;
    if let Some(p) = &args.export_crf {
        check_output_file(p)?;
    }

    let (crf, rad) = fuse_stack(&stack, args.samples, args.lambda, args.seed).failed()?;
    write_radiance_rgbe(&rad, &args.out).failed()?;
    if let Some(p) = &args.export_crf {
        write_text(p, &crf.to_csv())?;
    }
    Ok(())
}
