use std::collections::BTreeMap;
use std::path::PathBuf;

use evhdr_core::dataset::{scene_dirs, stack_files};
use evhdr_core::image::load_ldr;
use evhdr_core::metrics::{ms_ssim, psnr, ssim};
use evhdr_core::rgbe::read_radiance_rgbe;
use evhdr_core::tonemap::{KimKautzParams, ReinhardParams, ToneMapper};
use evhdr_core::{EvStep, LdrImage};
use rayon::prelude::*;

use crate::cli::EvalArgs;
use crate::commands::with_workers;
use crate::error::{CliError, CliResult, Phase};
use crate::report::{num, write_csv, Stats};
use crate::scenes::{check_output_file, RADIANCE_FILE};

pub const METRICS: [&str; 3] = ["psnr", "ssim", "ms_ssim"];

/// Row key: an EV, or an HDR result under one tone mapper.
#[derive(Clone, Copy, Debug, PartialEq, PartialOrd)]
enum Kind {
    Ev(f64),
    Rh,
    Kk,
}

impl Kind {
    fn label(self) -> String {
        match self {
            Kind::Ev(v) => EvStep::new(v).expect("finite").label(),
            Kind::Rh => "HDR-RH".into(),
            Kind::Kk => "HDR-KK".into(),
        }
    }

    fn order(self) -> (u8, f64) {
        match self {
            Kind::Ev(v) => (0, v),
            Kind::Rh => (1, 0.0),
            Kind::Kk => (2, 0.0),
        }
    }
}

enum Item {
    Ldr { scene: String, ev: EvStep, pred: PathBuf, gt: PathBuf },
    Hdr { scene: String, pred: PathBuf, gt: PathBuf },
}

fn scores(a: &LdrImage, b: &LdrImage) -> CliResult<[f64; 3]> {
    Ok([psnr(a, b).failed()?, ssim(a, b).failed()?, ms_ssim(a, b).failed()?])
}

fn evaluate(item: &Item) -> CliResult<Vec<(String, Kind, [f64; 3])>> {
    match item {
        Item::Ldr { scene, ev, pred, gt } => {
            let (p, g) = (load_ldr(pred).failed()?, load_ldr(gt).failed()?);
            if p.dims() != g.dims() {
                return Err(CliError::Failed(format!("{} and {} differ in size", pred.display(), gt.display())));
            }
            Ok(vec![(scene.clone(), Kind::Ev(ev.value()), scores(&p, &g)?)])
        }
        Item::Hdr { scene, pred, gt } => {
            let (p, g) = (read_radiance_rgbe(pred).failed()?, read_radiance_rgbe(gt).failed()?);
            if p.dims() != g.dims() {
                return Err(CliError::Failed(format!("{} and {} differ in size", pred.display(), gt.display())));
            }
            let ops = [
                (Kind::Rh, ToneMapper::Reinhard(ReinhardParams::default())),
                (Kind::Kk, ToneMapper::KimKautz(KimKautzParams::default())),
            ];
            ops.iter()
                .map(|(k, op)| Ok((scene.clone(), *k, scores(&op.apply(&p).failed()?, &op.apply(&g).failed()?)?)))
                .collect()
        }
    }
}

fn collect_items(args: &EvalArgs) -> CliResult<Vec<Item>> {
    let gt_scenes: BTreeMap<String, PathBuf> = scene_dirs(&args.gt).invalid()?.into_iter().collect();
    let mut items = Vec::new();
    for (scene, dir) in scene_dirs(&args.pred).invalid()? {
        let gt_dir = gt_scenes
            .get(&scene)
            .ok_or_else(|| CliError::Invalid(format!("missing ground truth for scene {scene} in {}", args.gt.display())))?;
        let gt_files = stack_files(gt_dir).invalid()?;
        for (ev, pred) in stack_files(&dir).invalid()? {
            let gt = gt_files
                .iter()
                .find(|(e, _)| *e == ev)
                .map(|(_, p)| p.clone())
                .ok_or_else(|| CliError::Invalid(format!("missing ground truth for {}", pred.display())))?;
            items.push(Item::Ldr { scene: scene.clone(), ev, pred, gt });
        }
        let pred_hdr = dir.join(RADIANCE_FILE);
        if pred_hdr.is_file() {
            let gt = gt_dir.join(RADIANCE_FILE);
            if !gt.is_file() {
                return Err(CliError::Invalid(format!("missing ground truth {}", gt.display())));
            }
            items.push(Item::Hdr { scene: scene.clone(), pred: pred_hdr, gt });
        }
    }
    if items.is_empty() {
        return Err(CliError::Invalid(format!(
            "nothing to evaluate: no predictions in {} match {}",
            args.pred.display(),
            args.gt.display()
        )));
    }
    Ok(items)
}

pub fn eval(args: &EvalArgs) -> CliResult<()> {
    let items = collect_items(args)?;
    check_output_file(&args.report)?;
    if let Some(p) = &args.rows {
        check_output_file(p)?;
    }

    let mut results: Vec<(String, Kind, [f64; 3])> = with_workers(args.workers, || {
        items.par_iter().map(evaluate).collect::<CliResult<Vec<_>>>()
    })?
    .into_iter()
    .flatten()
    .collect();
    results.sort_by(|a, b| (&a.0, a.1.order()).partial_cmp(&(&b.0, b.1.order())).expect("finite keys"));

    let mut kinds: Vec<Kind> = Vec::new();
    for (_, k, _) in &results {
        if !kinds.contains(k) {
            kinds.push(*k);
        }
    }
    kinds.sort_by(|a, b| a.order().partial_cmp(&b.order()).expect("finite keys"));
    let mut summary = Vec::new();
    for k in kinds {
        for (m, name) in METRICS.iter().enumerate() {
            let vals: Vec<f64> = results.iter().filter(|r| r.1 == k).map(|r| r.2[m]).collect();
            let [n, mean, sd] = Stats::of(&vals).cells();
            summary.push(vec![k.label(), name.to_string(), n, mean, sd]);
        }
    }
    write_csv(&args.report, &["ev", "metric", "n", "m", "sigma"], &summary)?;
    if let Some(p) = &args.rows {
        let rows: Vec<Vec<String>> = results
            .iter()
            .flat_map(|(scene, k, v)| {
                METRICS.iter().zip(v).map(move |(name, x)| vec![scene.clone(), k.label(), name.to_string(), num(*x)])
            })
            .collect();
        write_csv(p, &["scene", "ev", "metric", "value"], &rows)?;
    }
    Ok(())
}
