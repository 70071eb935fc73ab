use evhdr_core::image::save_ldr;
use evhdr_core::rgbe::read_radiance_rgbe;
use evhdr_core::tonemap::{KimKautzParams, ReinhardParams, ToneMapper};

use crate::cli::{Operator, TonemapArgs};
use crate::error::{CliError, CliResult, Phase};
use crate::scenes::check_output_file;

pub fn tonemap(args: &TonemapArgs) -> CliResult<()> {
    let op = match args.operator {
        Operator::Rh => {
            if !(args.key > 0.0) || args.white.is_some_and(|w| !(w > 0.0)) {
                return Err(CliError::Invalid("--key and --white must be positive".into()));
            }
            ToneMapper::Reinhard(ReinhardParams { key: args.key, white: args.white })
        }
        Operator::Kk => {
            if !(args.d_min > 0.0 && args.d_max > args.d_min) {
                return Err(CliError::Invalid("need 0 < --d-min < --d-max".into()));
            }
            ToneMapper::KimKautz(KimKautzParams { d_max: args.d_max, d_min: args.d_min, ..Default::default() })
        }
    };
    let rad = read_radiance_rgbe(&args.hdr).invalid()?;
    check_output_file(&args.out)?;
    let ldr = op.apply(&rad).failed()?;
    save_ldr(&ldr, &args.out).failed()
}
