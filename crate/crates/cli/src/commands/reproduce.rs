use std::path::Path;

use evhdr_core::EvStep;
use evhdr_net::training::EpochLog;
use evhdr_net::weights::load_weights;
use evhdr_net::Direction;

use crate::cli::{Experiment, ReproduceArgs};
use crate::commands::with_workers;
use crate::config::RunConfig;
use crate::error::{CliError, CliResult, Phase};
use crate::experiments::{self, HdrScore, SceneSets, Setup, Trained};
use crate::report::{flag, num, write_csv, write_text, Stats};
use crate::scenes::{self, check_output_dir, create_dir};

fn setup(args: &ReproduceArgs) -> CliResult<Setup> {
    let mut cfg = RunConfig::load_or_default(args.config.as_deref())?;
    if let Some(e) = args.epochs {
        cfg.train.epochs = e;
    }
    cfg.validate()?;
    if !(args.lambda >= 0.0 && args.lambda.is_finite()) {
        return Err(CliError::Invalid(format!("--lambda must be >= 0, got {}", args.lambda)));
    }
    Ok(Setup {
        seed: args.seed,
        train_scenes: args.train_scenes,
        val_scenes: args.val_scenes,
        size: args.size,
        model: cfg.model,
        train: cfg.train,
        fusion_lambda: args.lambda,
        fusion_samples: args.samples,
        ..Setup::default()
    })
}

fn write_logs(dir: &Path, prefix: &str, models: &[Trained]) -> CliResult<()> {
    let logs = dir.join("logs");
    create_dir(&logs)?;
    for m in models {
        let mut text = format!("{}\n", EpochLog::CSV_HEADER);
        for e in &m.report.log {
            text.push_str(&e.csv_row());
            text.push('\n');
        }
        write_text(&logs.join(format!("{prefix}_{}.csv", m.job.label())), &text)?;
    }
    Ok(())
}

fn stat_rows<'a>(key: Vec<String>, scores: &[HdrScore], metrics: impl IntoIterator<Item = &'a str>) -> Vec<Vec<String>> {
    metrics
        .into_iter()
        .map(|name| {
            let vals: Vec<f64> = scores.iter().map(|s| s.metric(name)).collect();
            let mut row = key.clone();
            row.push(name.to_string());
            row.extend(Stats::of(&vals).cells());
            row
        })
        .collect()
}

pub fn reproduce(args: &ReproduceArgs) -> CliResult<()> {
    let setup = setup(args)?;
    check_output_dir(&args.work_dir)?;
    let models = match (&args.inc, &args.dec) {
        (Some(i), Some(d)) => {
            if args.experiment != Experiment::CrfCurve {
                return Err(CliError::Invalid("--inc/--dec only apply to crf-curve".into()));
            }
            let (inc, dec) = (load_weights(i).invalid()?, load_weights(d).invalid()?);
            if inc.direction() != Direction::Increase || dec.direction() != Direction::Decrease {
                return Err(CliError::Invalid("--inc must be an increase model and --dec a decrease model".into()));
            }
            Some((inc, dec))
        }
        _ => None,
    };

    with_workers(args.workers, || {
        let sets = match &args.data {
            Some(root) => Setup::split(scenes::load(root, args.experiment != Experiment::HoldOut)?)?,
            None => setup.synthetic_scenes()?,
        };
        let dir = &args.work_dir;
        match args.experiment {
            Experiment::DenseStack => dense_stack(&setup, &sets, dir),
            Experiment::Ablation => ablation(&setup, &sets, dir),
            Experiment::HoldOut => hold_out(&setup, &sets, dir),
            Experiment::CrfCurve => crf_curve(&setup, &sets, dir, models.as_ref().map(|(i, d)| (i, d))),
        }
    })
}

fn dense_stack(setup: &Setup, sets: &SceneSets, dir: &Path) -> CliResult<()> {
    let rows = experiments::dense_stack(setup, sets)?;
    create_dir(dir)?;
    let mut summary = Vec::new();
    for (label, evs) in experiments::dense_stack_settings() {
        let scores: Vec<HdrScore> = rows.iter().filter(|r| r.setting == label).map(|r| r.score.clone()).collect();
        summary.extend(stat_rows(vec![label.into(), evs.len().to_string()], &scores, HdrScore::METRICS));
    }
    write_csv(&dir.join("dense_stack.csv"), &["stack", "num_evs", "metric", "n", "m", "sigma"], &summary)?;
    let per_scene: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            let s = &r.score;
            vec![
                r.scene.clone(),
                r.setting.into(),
                num(s.log_psnr),
                num(s.rh_psnr),
                num(s.kk_psnr),
                format!("{:.6e}", s.smoothness),
                flag(s.monotone),
            ]
        })
        .collect();
    write_csv(
        &dir.join("dense_stack_scenes.csv"),
        &["scene", "stack", "hdr_log_psnr", "rh_psnr", "kk_psnr", "crf_smoothness", "crf_monotone"],
        &per_scene,
    )
}

fn ablation(setup: &Setup, sets: &SceneSets, dir: &Path) -> CliResult<()> {
    let res = experiments::ablation(setup, sets, &[Direction::Decrease, Direction::Increase])?;
    create_dir(dir)?;
    let ldr: Vec<Vec<String>> = res
        .ldr
        .iter()
        .map(|r| {
            let mut row = vec![flag(r.variant.intensity_transform), flag(r.variant.cycle), r.ev.label(), "psnr".into()];
            row.extend(Stats::of(&r.psnr).cells());
            row
        })
        .collect();
    write_csv(
        &dir.join("ablation_ldr.csv"),
        &["intensity_transform", "cycle_training", "ev", "metric", "n", "m", "sigma"],
        &ldr,
    )?;
    let mut hdr = Vec::new();
    for r in &res.hdr {
        let key = vec![flag(r.variant.intensity_transform), flag(r.continuous), flag(r.variant.cycle)];
        hdr.extend(stat_rows(key, &r.scores, ["rh_psnr", "kk_psnr", "hdr_log_psnr"]));
    }
    write_csv(
        &dir.join("ablation_hdr.csv"),
        &["intensity_transform", "continuous_stack", "cycle_training", "metric", "n", "m", "sigma"],
        &hdr,
    )?;
    write_logs(dir, "ablation", &res.models)
}

fn hold_out(setup: &Setup, sets: &SceneSets, dir: &Path) -> CliResult<()> {
    let res = experiments::hold_out(setup, sets)?;
    create_dir(dir)?;
    let rows: Vec<Vec<String>> = res
        .rows
        .iter()
        .map(|(cycle, ev, vals): &(bool, EvStep, Vec<f64>)| {
            let mut row = vec![flag(*cycle), ev.label(), "psnr".into()];
            row.extend(Stats::of(vals).cells());
            row
        })
        .collect();
    write_csv(&dir.join("hold_out.csv"), &["cycle_training", "ev", "metric", "n", "m", "sigma"], &rows)?;
    write_logs(dir, "hold_out", &res.models)
}

fn crf_curve(
    setup: &Setup,
    sets: &SceneSets,
    dir: &Path,
    models: Option<(&evhdr_net::ModelWeights, &evhdr_net::ModelWeights)>,
) -> CliResult<()> {
    let curves = experiments::crf_curves(setup, sets, models)?;
    create_dir(dir)?;
    write_text(&dir.join("crf_predefined.csv"), &curves.predefined.to_csv())?;
    write_text(&dir.join("crf_continuous.csv"), &curves.continuous.to_csv())?;
    let mut rows = Vec::new();
    for (label, crf) in [("predefined", &curves.predefined), ("continuous", &curves.continuous)] {
        for c in 0..3 {
            rows.push(vec![
                curves.scene.clone(),
                label.into(),
                ["r", "g", "b"][c].into(),
                format!("{:.6e}", crf.smoothness_energy(c)),
                flag(crf.is_monotone(c)),
            ]);
        }
    }
    write_csv(&dir.join("crf_summary.csv"), &["scene", "stack", "channel", "smoothness", "monotone"], &rows)
}
