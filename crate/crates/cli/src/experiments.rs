//! Comparisons behind `evhdr reproduce`: dense-stack fusion, the intensity
//! transform / cycle / continuous-stack ablation, the EV±1 hold-out and the
//! predefined-vs-continuous response curves.
//!
//! Synthetic runs train on scenes rendered at integer EVs −3..=3 and
//! validate on separately seeded scenes rendered at half-EV steps.

use evhdr_core::fusion::{fuse_stack, min_samples, InverseCrf, DEFAULT_LAMBDA, DEFAULT_SAMPLES};
use evhdr_core::metrics::{log_radiance_psnr, psnr};
use evhdr_core::synth::evs;
use evhdr_core::tonemap::{KimKautzParams, ReinhardParams, ToneMapper};
use evhdr_core::{EvStep, LdrStack, RadianceMap};
use evhdr_net::model::forward;
use evhdr_net::stack::{generate_stack, preset_evs, StackMode};
use evhdr_net::training::{check_dataset, train_with, EpochLog, TrainConfig, TrainReport, TrainSet};
use evhdr_net::{Direction, ModelConfig, ModelWeights};
use rayon::prelude::*;

use crate::error::{CliError, CliResult, Phase};
use crate::scenes::{self, Scene, DEFAULT_GAMMA};

#[derive(Clone, Debug)]
pub struct Setup {
    pub seed: u64,
    pub train_scenes: usize,
    pub val_scenes: usize,
    /// Side of the square synthetic scenes.
    pub size: usize,
    pub gamma: f64,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub fusion_lambda: f64,
    pub fusion_samples: usize,
}

impl Default for Setup {
    fn default() -> Self {
        Self {
            seed: 0,
            train_scenes: 8,
            val_scenes: 8,
            size: 96,
            gamma: DEFAULT_GAMMA,
            model: ModelConfig::default(),
            train: TrainConfig::default(),
            fusion_lambda: DEFAULT_LAMBDA,
            fusion_samples: DEFAULT_SAMPLES,
        }
    }
}

#[derive(Clone, Debug)]
pub struct SceneSets {
    pub train: Vec<Scene>,
    pub val: Vec<Scene>,
}

impl SceneSets {
    pub fn train_stacks(&self) -> Vec<(String, LdrStack)> {
        self.train.iter().map(Scene::named_stack).collect()
    }
}

/// `[-3, 0, 3]`, integer steps, half steps.
pub fn dense_stack_settings() -> Vec<(&'static str, Vec<EvStep>)> {
    vec![
        ("3-EV", evs(&[-3.0, 0.0, 3.0])),
        ("7-EV", preset_evs(StackMode::Predefined)),
        ("13-EV", preset_evs(StackMode::Continuous)),
    ]
}

impl Setup {
    pub fn synthetic_scenes(&self) -> CliResult<SceneSets> {
        let train_evs = preset_evs(StackMode::Predefined);
        let val_evs = preset_evs(StackMode::Continuous);
        Ok(SceneSets {
            train: scenes::synthetic("train", self.seed, 0, self.train_scenes, self.size, self.gamma, &train_evs)?,
            val: scenes::synthetic("val", self.seed, 100_000, self.val_scenes, self.size, self.gamma, &val_evs)?,
        })
    }

    /// Splits loaded scenes: the last quarter (at least one) validates.
    pub fn split(mut all: Vec<Scene>) -> CliResult<SceneSets> {
        if all.len() < 2 {
            return Err(CliError::Invalid("need at least two scenes to split into train and validation".into()));
        }
        let n_val = all.len().div_ceil(4);
        let val = all.split_off(all.len() - n_val);
        Ok(SceneSets { train: all, val })
    }

    fn tone_mappers() -> [(&'static str, ToneMapper); 2] {
        [
            ("rh_psnr", ToneMapper::Reinhard(ReinhardParams::default())),
            ("kk_psnr", ToneMapper::KimKautz(KimKautzParams::default())),
        ]
    }

    /// Fuses `stack` and scores it against `reference`.
    pub fn score_hdr(&self, stack: &LdrStack, reference: &RadianceMap) -> CliResult<HdrScore> {
        let samples = self.fusion_samples.max(min_samples(stack.len()));
        let (crf, rad) = fuse_stack(stack, samples, self.fusion_lambda, self.seed).failed()?;
        let mut tmo = [0.0; 2];
        for (slot, (_, op)) in tmo.iter_mut().zip(Self::tone_mappers()) {
            *slot = psnr(&op.apply(&rad).failed()?, &op.apply(reference).failed()?).failed()?;
        }
        Ok(HdrScore {
            log_psnr: log_radiance_psnr(&rad, reference).failed()?,
            rh_psnr: tmo[0],
            kk_psnr: tmo[1],
            smoothness: (0..3).map(|c| crf.smoothness_energy(c)).sum::<f64>() / 3.0,
            monotone: (0..3).all(|c| crf.is_monotone(c)),
            crf,
        })
    }
}

#[derive(Clone, Debug)]
pub struct HdrScore {
    pub log_psnr: f64,
    pub rh_psnr: f64,
    pub kk_psnr: f64,
    /// Channel mean of `Σ g″²`.
    pub smoothness: f64,
    pub monotone: bool,
    pub crf: InverseCrf,
}

impl HdrScore {
    pub const METRICS: [&'static str; 4] = ["hdr_log_psnr", "rh_psnr", "kk_psnr", "crf_smoothness"];

    pub fn metric(&self, name: &str) -> f64 {
        match name {
            "hdr_log_psnr" => self.log_psnr,
            "rh_psnr" => self.rh_psnr,
            "kk_psnr" => self.kk_psnr,
            "crf_smoothness" => self.smoothness,
            _ => panic!("unknown metric {name}"),
        }
    }
}

fn reference(scene: &Scene) -> CliResult<&RadianceMap> {
    scene
        .radiance
        .as_ref()
        .ok_or_else(|| CliError::Invalid(format!("scene {} has no reference radiance", scene.name)))
}

#[derive(Clone, Debug)]
pub struct DenseStackRow {
    pub scene: String,
    pub setting: &'static str,
    pub num_evs: usize,
    pub score: HdrScore,
}

/// Fuses each validation scene's own exposures at 3, 7 and 13 EVs over the
/// same [−3, 3] range.
pub fn dense_stack(setup: &Setup, sets: &SceneSets) -> CliResult<Vec<DenseStackRow>> {
    let settings = dense_stack_settings();
    for s in &sets.val {
        reference(s)?;
        for (_, e) in &settings {
            s.stack.select(e).map_err(|err| CliError::Invalid(format!("scene {}: {err}", s.name)))?;
        }
    }
    let jobs: Vec<(&Scene, &(&'static str, Vec<EvStep>))> =
        sets.val.iter().flat_map(|s| settings.iter().map(move |st| (s, st))).collect();
    jobs.into_par_iter()
        .map(|(scene, (label, e))| {
            let stack = scene.stack.select(e).failed()?;
            Ok(DenseStackRow {
                scene: scene.name.clone(),
                setting: label,
                num_evs: e.len(),
                score: setup.score_hdr(&stack, reference(scene)?)?,
            })
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Variant {
    pub intensity_transform: bool,
    pub cycle: bool,
}

impl Variant {
    pub const ABLATION: [Variant; 3] = [
        Variant { intensity_transform: false, cycle: false },
        Variant { intensity_transform: true, cycle: false },
        Variant { intensity_transform: true, cycle: true },
    ];

    pub fn label(&self) -> String {
        format!("it{}-ct{}", u8::from(self.intensity_transform), u8::from(self.cycle))
    }

    pub fn configs(&self, setup: &Setup, direction: Direction, excluded: &[f64]) -> (ModelConfig, TrainConfig) {
        let model = ModelConfig { use_intensity_transform: self.intensity_transform, ..setup.model.clone() };
        let train = TrainConfig {
            lambda_cycle: if self.cycle { setup.train.lambda_cycle } else { 0.0 },
            direction,
            excluded_evs: excluded.to_vec(),
            seed: setup.seed,
            ..setup.train.clone()
        };
        (model, train)
    }
}

#[derive(Clone, Debug)]
pub struct TrainJob {
    pub variant: Variant,
    pub direction: Direction,
    pub excluded: Vec<f64>,
}

impl TrainJob {
    pub fn label(&self) -> String {
        format!("{}-{}", self.variant.label(), self.direction)
    }

    fn data(&self, setup: &Setup, sets: &SceneSets) -> CliResult<(TrainSet, ModelConfig, TrainConfig)> {
        let (mc, tc) = self.variant.configs(setup, self.direction, &self.excluded);
        let excluded: Vec<EvStep> = self.excluded.iter().map(|&v| EvStep::new(v)).collect::<Result<_, _>>().invalid()?;
        let data = TrainSet::from_stacks(&sets.train_stacks(), self.direction, &excluded).invalid()?;
        check_dataset(&data, &mc, &tc).invalid()?;
        Ok((data, mc, tc))
    }
}

/// Validates every job, then trains them in parallel on the current pool.
pub fn train_jobs(setup: &Setup, sets: &SceneSets, jobs: &[TrainJob]) -> CliResult<Vec<TrainReport>> {
    if jobs.iter().any(|j| j.variant.cycle) && !(setup.train.lambda_cycle > 0.0) {
        return Err(CliError::Invalid("cycle variants need lambda_cycle > 0".into()));
    }
    let prepared = jobs.iter().map(|j| j.data(setup, sets)).collect::<CliResult<Vec<_>>>()?;
    jobs.par_iter()
        .zip(prepared)
        .map(|(job, (data, mc, tc))| {
            let label = job.label();
            let init = ModelWeights::init(mc, job.direction, tc.seed).failed()?;
            let every = (tc.epochs / 10).max(1);
            train_with(&data, init, &tc, |e: &EpochLog| {
                if e.epoch % every == 0 || e.epoch == tc.epochs {
                    log::info!("{label}: epoch {}/{} loss {:.5}", e.epoch, tc.epochs, e.total);
                }
            })
            .failed()
        })
        .collect()
}

/// PSNR of `forward(EV 0, ev)` against the scene's image at `ev`, per scene.
pub fn ldr_psnr(weights: &ModelWeights, scenes: &[Scene], ev: EvStep) -> CliResult<Vec<f64>> {
    scenes
        .par_iter()
        .map(|s| {
            let input = s.stack.get(EvStep::ZERO).ok_or_else(|| CliError::Invalid(format!("scene {} has no EV 0", s.name)))?;
            let gt = s.stack.get(ev).ok_or_else(|| CliError::Invalid(format!("scene {} has no EV {ev}", s.name)))?;
            psnr(&forward(weights, input, ev).failed()?, gt).failed()
        })
        .collect()
}

/// PSNR of the unchanged input against the image at `ev`, per scene.
pub fn identity_psnr(scenes: &[Scene], ev: EvStep) -> CliResult<Vec<f64>> {
    scenes
        .iter()
        .map(|s| {
            let input = s.stack.get(EvStep::ZERO).ok_or_else(|| CliError::Invalid(format!("scene {} has no EV 0", s.name)))?;
            let gt = s.stack.get(ev).ok_or_else(|| CliError::Invalid(format!("scene {} has no EV {ev}", s.name)))?;
            psnr(input, gt).failed()
        })
        .collect()
}

/// Builds a stack from each scene's EV-0 image with the given models and
/// scores its fusion.
pub fn generated_hdr(
    setup: &Setup,
    inc: &ModelWeights,
    dec: &ModelWeights,
    mode: StackMode,
    scenes: &[Scene],
) -> CliResult<Vec<HdrScore>> {
    let e = preset_evs(mode);
    scenes
        .par_iter()
        .map(|s| {
            let input = s.stack.get(EvStep::ZERO).ok_or_else(|| CliError::Invalid(format!("scene {} has no EV 0", s.name)))?;
            let stack = generate_stack(Some(inc), Some(dec), input, &e).failed()?;
            setup.score_hdr(&stack, reference(s)?)
        })
        .collect()
}

#[derive(Clone, Debug)]
pub struct LdrRow {
    pub variant: Variant,
    pub ev: EvStep,
    pub psnr: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct HdrRow {
    pub variant: Variant,
    pub continuous: bool,
    pub scores: Vec<HdrScore>,
}

#[derive(Clone, Debug)]
pub struct Trained {
    pub job: TrainJob,
    pub report: TrainReport,
}

#[derive(Clone, Debug)]
pub struct Ablation {
    pub ldr: Vec<LdrRow>,
    pub hdr: Vec<HdrRow>,
    pub models: Vec<Trained>,
}

/// Trains the three variants for each direction and scores them.
/// HDR rows need both directions.
pub fn ablation(setup: &Setup, sets: &SceneSets, directions: &[Direction]) -> CliResult<Ablation> {
    let jobs: Vec<TrainJob> = directions
        .iter()
        .flat_map(|&d| Variant::ABLATION.into_iter().map(move |v| TrainJob { variant: v, direction: d, excluded: vec![] }))
        .collect();
    let both = directions.contains(&Direction::Increase) && directions.contains(&Direction::Decrease);
    if both {
        for s in &sets.val {
            reference(s)?;
        }
    }
    let reports = train_jobs(setup, sets, &jobs)?;
    let models: Vec<Trained> = jobs.into_iter().zip(reports).map(|(job, report)| Trained { job, report }).collect();
    let find = |v: Variant, d: Direction| {
        &models.iter().find(|m| m.job.variant == v && m.job.direction == d).expect("trained").report.weights
    };
    let mut ldr = Vec::new();
    for &d in directions {
        for v in Variant::ABLATION {
            for ev in preset_evs(StackMode::Predefined).into_iter().filter(|e| d.accepts(e.value())) {
                ldr.push(LdrRow { variant: v, ev, psnr: ldr_psnr(find(v, d), &sets.val, ev)? });
            }
        }
    }
    let mut hdr = Vec::new();
    if both {
        let rows = [
            (Variant::ABLATION[0], false),
            (Variant::ABLATION[1], false),
            (Variant::ABLATION[1], true),
            (Variant::ABLATION[2], true),
        ];
        for (v, continuous) in rows {
            let mode = if continuous { StackMode::Continuous } else { StackMode::Predefined };
            let scores = generated_hdr(setup, find(v, Direction::Increase), find(v, Direction::Decrease), mode, &sets.val)?;
            hdr.push(HdrRow { variant: v, continuous, scores });
        }
    }
    Ok(Ablation { ldr, hdr, models })
}

#[derive(Clone, Debug)]
pub struct HoldOut {
    /// `(cycle, ev, per-scene PSNR)` for EV −1 and +1.
    pub rows: Vec<(bool, EvStep, Vec<f64>)>,
    pub models: Vec<Trained>,
}

pub const HOLD_OUT_EVS: [f64; 2] = [-1.0, 1.0];

/// Trains with and without the cycle term while EV ±1 are never targets,
/// then scores EV ±1.
pub fn hold_out(setup: &Setup, sets: &SceneSets) -> CliResult<HoldOut> {
    let mut jobs = Vec::new();
    for cycle in [false, true] {
        for d in [Direction::Decrease, Direction::Increase] {
            jobs.push(TrainJob {
                variant: Variant { intensity_transform: setup.model.use_intensity_transform, cycle },
                direction: d,
                excluded: HOLD_OUT_EVS.to_vec(),
            });
        }
    }
    let reports = train_jobs(setup, sets, &jobs)?;
    let models: Vec<Trained> = jobs.into_iter().zip(reports).map(|(job, report)| Trained { job, report }).collect();
    let mut rows = Vec::new();
    for m in &models {
        let ev = EvStep::new(if m.job.direction == Direction::Increase { 1.0 } else { -1.0 }).expect("finite");
        rows.push((m.job.variant.cycle, ev, ldr_psnr(&m.report.weights, &sets.val, ev)?));
    }
    rows.sort_by(|a, b| (a.0, a.1.value()).partial_cmp(&(b.0, b.1.value())).expect("finite"));
    Ok(HoldOut { rows, models })
}

#[derive(Clone, Debug)]
pub struct CrfCurves {
    pub scene: String,
    pub predefined: InverseCrf,
    pub continuous: InverseCrf,
}

/// Response curves recovered from the predefined and continuous stacks of
/// the first validation scene: the scene's own exposures, or stacks
/// generated from its EV-0 image when models are given.
pub fn crf_curves(setup: &Setup, sets: &SceneSets, models: Option<(&ModelWeights, &ModelWeights)>) -> CliResult<CrfCurves> {
    let scene = sets.val.first().ok_or_else(|| CliError::Invalid("no validation scene".into()))?;
    let input = scene.stack.get(EvStep::ZERO).ok_or_else(|| CliError::Invalid(format!("scene {} has no EV 0", scene.name)))?;
    let mut curves = Vec::with_capacity(2);
    for mode in [StackMode::Predefined, StackMode::Continuous] {
        let e = preset_evs(mode);
        let stack = match models {
            Some((inc, dec)) => generate_stack(Some(inc), Some(dec), input, &e).failed()?,
            None => scene.stack.select(&e).invalid()?,
        };
        let samples = setup.fusion_samples.max(min_samples(stack.len()));
        curves.push(fuse_stack(&stack, samples, setup.fusion_lambda, setup.seed).failed()?.0);
    }
    let continuous = curves.pop().expect("two curves");
    let predefined = curves.pop().expect("two curves");
    Ok(CrfCurves { scene: scene.name.clone(), predefined, continuous })
}
