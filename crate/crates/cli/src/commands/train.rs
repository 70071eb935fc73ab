use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;

use evhdr_core::EvStep;
use evhdr_net::training::{check_dataset, train_with, EpochLog, TrainSet};
use evhdr_net::weights::{load_weights, save_weights};
use evhdr_net::{Direction, ModelWeights};

use crate::cli::TrainArgs;
use crate::config::RunConfig;
use crate::error::{CliError, CliResult, Phase};
use crate::scenes::{self, check_output_file};

pub fn train(args: &TrainArgs) -> CliResult<()> {
    let mut cfg = RunConfig::load_or_default(args.config.as_deref())?;
    let direction: Direction = args.direction.into();
    cfg.train.direction = direction;
    if let Some(seed) = args.seed {
        cfg.train.seed = seed;
    }
    if let Some(epochs) = args.epochs {
        cfg.train.epochs = epochs;
    }
    cfg.validate()?;
    let log_path = args.log.clone().unwrap_or_else(|| args.out.with_extension("csv"));
    check_output_file(&args.out)?;
    check_output_file(&log_path)?;
    if log_path == args.out {
        return Err(CliError::Invalid("the log and the weights would share one path".into()));
    }

    let stacks: Vec<_> = scenes::load(&args.data, false)?.iter().map(|s| s.named_stack()).collect();
    let excluded: Vec<EvStep> = cfg.train.excluded_evs.iter().map(|&v| EvStep::new(v)).collect::<Result<_, _>>().invalid()?;
    let data = TrainSet::from_stacks(&stacks, direction, &excluded).invalid()?;
    check_dataset(&data, &cfg.model, &cfg.train).invalid()?;

    let mut init = ModelWeights::init(cfg.model.clone(), direction, cfg.train.seed).invalid()?;
    match (&args.pretrained_encoder, cfg.model.use_pretrained_encoder) {
        (Some(p), true) => init.copy_encoder_from(&load_weights(p).invalid()?).invalid()?,
        (None, true) => {
            return Err(CliError::Invalid("model.use_pretrained_encoder is set but --pretrained-encoder is missing".into()))
        }
        (Some(_), false) => {
            return Err(CliError::Invalid("--pretrained-encoder needs model.use_pretrained_encoder = true".into()))
        }
        (None, false) => {}
    }
    log::info!(
        "training {direction} model: {} scenes, {} pairs, {} epochs",
        data.scenes.len(),
        data.pairs().len(),
        cfg.train.epochs
    );

    let mut log_file = LogFile { path: log_path, out: None, error: None };
    let report = train_with(&data, init, &cfg.train, |e| log_file.append(e)).failed()?;
    log_file.finish()?;
    save_weights(&report.weights, &args.out).failed()
}

/// Epoch log opened on the first row, so nothing is written if training
/// fails before its first epoch.
struct LogFile {
    path: PathBuf,
    out: Option<BufWriter<File>>,
    error: Option<std::io::Error>,
}

impl LogFile {
    fn append(&mut self, e: &EpochLog) {
        if self.error.is_some() {
            return;
        }
        let res = (|| {
            if self.out.is_none() {
                let mut f = BufWriter::new(File::create(&self.path)?);
                writeln!(f, "{}", EpochLog::CSV_HEADER)?;
                self.out = Some(f);
            }
            let f = self.out.as_mut().expect("opened");
            writeln!(f, "{}", e.csv_row())?;
            f.flush()
        })();
        if let Err(err) = res {
            self.error = Some(err);
        }
        log::info!("epoch {} rec {:.5} cyc {:.5} total {:.5} lr {:.2e}", e.epoch, e.rec, e.cyc, e.total, e.lr);
    }

    fn finish(self) -> CliResult<()> {
        match self.error {
            Some(e) => Err(CliError::Failed(format!("cannot write {}: {e}", self.path.display()))),
            None => Ok(()),
        }
    }
}
