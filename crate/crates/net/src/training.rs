//! Losses, cycle sampling, augmentation and the optimisation loop.
//!
//! For a pair `(I, s_m, GT)` the reconstruction term is `|F(I, s_m) − GT|₁`
//! and the cycle term is `|F(F(I, u), v) − GT|₁` with `u = a·s_m`,
//! `v = s_m − u` and `a` drawn afresh every iteration. Both are means over
//! the batch; the total is `rec + λ·cyc`. Gradients flow through both hops.

use std::f64::consts::PI;

use evhdr_core::metrics::psnr;
use evhdr_core::{EvStep, ImageBuf, LdrImage, LdrStack};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{NetError, Result};
use crate::graph::{Graph, Var};
use crate::model::{forward, Direction, ModelConfig, ModelWeights};
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    /// Linear warmup length in epochs.
    pub warmup_epochs: usize,
    /// Cosine cycle length in epochs after warmup; 0 means one cycle over
    /// the remaining epochs.
    pub restart_epochs: usize,
    /// Floor of the cosine schedule as a fraction of `learning_rate`.
    pub min_lr_ratio: f64,
    pub lambda_cycle: f64,
    pub batch_size: usize,
    /// Square crop size; 0 trains on whole images.
    pub patch_size: usize,
    pub augment: bool,
    /// EVs never used as targets (hold-out protocol).
    pub excluded_evs: Vec<f64>,
    pub direction: Direction,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 200,
            learning_rate: 2e-4,
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-8,
            warmup_epochs: 5,
            restart_epochs: 0,
            min_lr_ratio: 0.01,
            lambda_cycle: 0.1,
            batch_size: 8,
            patch_size: 64,
            augment: true,
            excluded_evs: Vec::new(),
            direction: Direction::Increase,
            seed: 0,
        }
    }
}

impl TrainConfig {
    /// Full-length preset: 1,250 epochs, otherwise the defaults.
    pub fn full_scale() -> Self {
        Self { epochs: 1250, warmup_epochs: 10, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(NetError::InvalidTrainConfig(m.to_string()));
        if self.epochs == 0 {
            return bad("epochs must be >= 1");
        }
        if !(self.lambda_cycle >= 0.0 && self.lambda_cycle.is_finite()) {
            return bad("lambda_cycle must be >= 0");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be positive");
        }
        if !((0.0..1.0).contains(&self.beta1) && (0.0..1.0).contains(&self.beta2)) {
            return bad("Adam betas must lie in [0, 1)");
        }
        if !(self.adam_eps > 0.0) || !(0.0..=1.0).contains(&self.min_lr_ratio) {
            return bad("adam_eps must be positive and min_lr_ratio in [0, 1]");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be >= 1");
        }
        if self.excluded_evs.iter().any(|v| !v.is_finite()) {
            return bad("excluded EVs must be finite");
        }
        Ok(())
    }
}

/// One decomposition `u + v = s_m`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CycleSample {
    pub a: f64,
    pub u: EvStep,
    pub v: EvStep,
}

impl CycleSample {
    /// `u = a·s_m`, `v = s_m − u`. `u` is rounded to a multiple of the unit
    /// in the last place of `s_m`, which makes `v` exact and `u + v == s_m`
    /// hold bit for bit.
    pub fn from_fraction(s_m: EvStep, a: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&a) {
            return Err(NetError::InvalidTrainConfig(format!("cycle fraction {a} outside [0, 1]")));
        }
        let s = s_m.value();
        let ulp = ulp(s);
        let u = if ulp > 0.0 { (a * s / ulp).round() * ulp } else { a * s };
        let v = s - u;
        Ok(Self { a, u: EvStep::new(u)?, v: EvStep::new(v)? })
    }
}

fn ulp(x: f64) -> f64 {
    let exp = ((x.abs().to_bits() >> 52) & 0x7ff) as i32;
    if exp == 0 {
        f64::from_bits(1)
    } else {
        2f64.powi(exp - 1075)
    }
}

/// Draws `a ~ U[0, 1]`. `None` for `s_m = 0`, where the cycle is skipped.
pub fn sample_cycle_decomposition(s_m: EvStep, rng: &mut impl Rng) -> Option<CycleSample> {
    if s_m.is_zero() {
        return None;
    }
    let a: f64 = rng.random();
    Some(CycleSample::from_fraction(s_m, a).expect("a in [0, 1)"))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossBreakdown {
    pub rec: f64,
    pub cyc: f64,
    pub total: f64,
}

pub fn total_loss(rec: f64, cyc: f64, lambda: f64) -> Result<LossBreakdown> {
    if !(lambda >= 0.0) {
        return Err(NetError::InvalidTrainConfig(format!("lambda {lambda} must be >= 0")));
    }
    Ok(LossBreakdown { rec, cyc, total: rec + lambda * cyc })
}

/// Mean absolute difference over all pixels and channels.
pub fn reconstruction_loss(pred: &LdrImage, gt: &LdrImage) -> Result<f64> {
    pred.ensure_same_dims(gt)?;
    Ok(pred.data().iter().zip(gt.data()).map(|(a, b)| (a - b).abs()).sum::<f64>() / pred.data().len() as f64)
}

/// `|F(F(I, u), v) − GT|₁` with `weights` used for both hops.
pub fn cycle_loss(weights: &ModelWeights, input: &LdrImage, gt: &LdrImage, sample: &CycleSample) -> Result<f64> {
    let mid = forward(weights, input, sample.u)?;
    let out = forward(weights, &mid, sample.v)?;
    reconstruction_loss(&out, gt)
}

/// Shared rotation/flip draw for an aligned image group.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Augment {
    /// Quarter turns counter-clockwise.
    pub quarter_turns: u8,
    pub flip_h: bool,
    pub flip_v: bool,
}

impl Augment {
    pub fn random(rng: &mut impl Rng) -> Self {
        Self { quarter_turns: rng.random_range(0..4), flip_h: rng.random(), flip_v: rng.random() }
    }

    pub fn is_identity(&self) -> bool {
        *self == Self::default()
    }

    pub fn apply(&self, img: &LdrImage) -> LdrImage {
        let (h, w) = img.dims();
        let turns = self.quarter_turns % 4;
        let (oh, ow) = if turns % 2 == 1 { (w, h) } else { (h, w) };
        let buf = ImageBuf::from_fn(oh, ow, |y, x| {
            let y = if self.flip_v { oh - 1 - y } else { y };
            let x = if self.flip_h { ow - 1 - x } else { x };
            // Source of output (y, x) after `turns` counter-clockwise turns.
            let (sy, sx) = match turns {
                0 => (y, x),
                1 => (x, w - 1 - y),
                2 => (h - 1 - y, w - 1 - x),
                _ => (h - 1 - x, y),
            };
            img.buf().pixel(sy, sx)
        })
        .expect("positive dims");
        LdrImage::new(buf).expect("values copied from a valid image")
    }

    /// Applies the same draw to every image.
    pub fn apply_group(&self, group: &[LdrImage]) -> Vec<LdrImage> {
        group.iter().map(|i| self.apply(i)).collect()
    }
}

/// Draws one transform and applies it to the whole group.
pub fn augment(group: &[LdrImage], rng: &mut impl Rng) -> Vec<LdrImage> {
    Augment::random(rng).apply_group(group)
}

/// Splits `evs` into training and evaluation EVs; the evaluation set is
/// exactly `excluded`.
pub fn hold_out_split(evs: &[EvStep], excluded: &[EvStep]) -> Result<(Vec<EvStep>, Vec<EvStep>)> {
    for e in excluded {
        if !evs.contains(e) {
            return Err(NetError::InvalidTrainConfig(format!("held-out EV {e} is not in the EV list")));
        }
    }
    let train: Vec<EvStep> = evs.iter().copied().filter(|e| !excluded.contains(e)).collect();
    if train.is_empty() {
        return Err(NetError::InvalidTrainConfig("every EV is held out".into()));
    }
    let mut eval: Vec<EvStep> = evs.iter().copied().filter(|e| excluded.contains(e)).collect();
    eval.dedup();
    Ok((train, eval))
}

/// One scene: the EV-0 input and its targets.
#[derive(Clone, Debug)]
pub struct TrainScene {
    pub name: String,
    pub input: LdrImage,
    pub targets: Vec<(EvStep, LdrImage)>,
}

#[derive(Clone, Debug, Default)]
pub struct TrainSet {
    pub scenes: Vec<TrainScene>,
}

impl TrainSet {
    /// Builds targets from stacks: the EV-0 image is the input and every EV
    /// of the direction's sign that is not excluded becomes a target.
    pub fn from_stacks(stacks: &[(String, LdrStack)], direction: Direction, excluded: &[EvStep]) -> Result<Self> {
        let mut scenes = Vec::with_capacity(stacks.len());
        for (name, stack) in stacks {
            let input = stack
                .get(EvStep::ZERO)
                .ok_or_else(|| NetError::Dataset(format!("scene {name} has no EV 0 image")))?
                .clone();
            let (train_evs, _) = hold_out_split(&stack.evs(), &excluded.iter().copied().filter(|e| stack.get(*e).is_some()).collect::<Vec<_>>())?;
            let targets = train_evs
                .into_iter()
                .filter(|e| direction.accepts(e.value()))
                .map(|e| (e, stack.get(e).expect("present").clone()))
                .collect();
            scenes.push(TrainScene { name: name.clone(), input, targets });
        }
        Ok(Self { scenes })
    }

    /// `(scene, target)` index pairs.
    pub fn pairs(&self) -> Vec<(usize, usize)> {
        self.scenes
            .iter()
            .enumerate()
            .flat_map(|(i, s)| (0..s.targets.len()).map(move |j| (i, j)))
            .collect()
    }
}

/// A training batch in tensor form. `a` enables the cycle branch.
#[derive(Clone, Debug)]
pub struct Batch {
    pub inputs: Tensor,
    pub targets: Tensor,
    pub s: Vec<f64>,
    pub a: Option<Vec<f64>>,
}

/// Which scalar to differentiate.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LossTerm {
    Rec,
    Cyc,
    Total,
}

struct LossVars {
    rec: Var,
    cyc: Option<Var>,
    total: Var,
}

fn build_loss(g: &mut Graph, weights: &ModelWeights, batch: &Batch, lambda: f64, trainable: bool) -> (Vec<Var>, LossVars) {
    let p = weights.bind(g, trainable);
    let n = batch.s.len();
    let x = g.constant(batch.inputs.clone());
    let gt = g.constant(batch.targets.clone());
    let s = g.constant(Tensor::from_vec([n, 1, 1, 1], batch.s.clone()));
    let pred = p.forward(g, x, s);
    let rec = g.l1_mean(pred, gt);
    let cyc = batch.a.as_ref().map(|a| {
        let (u, v): (Vec<f64>, Vec<f64>) = a
            .iter()
            .zip(&batch.s)
            .map(|(&a, &s)| {
                let c = EvStep::new(s).map_err(NetError::from).and_then(|s| CycleSample::from_fraction(s, a.clamp(0.0, 1.0)));
                c.map_or((a * s, s - a * s), |c| (c.u.value(), c.v.value()))
            })
            .unzip();
        let uv = g.constant(Tensor::from_vec([n, 1, 1, 1], u));
        let vv = g.constant(Tensor::from_vec([n, 1, 1, 1], v));
        let mid = p.forward(g, x, uv);
        let out = p.forward(g, mid, vv);
        g.l1_mean(out, gt)
    });
    let total = match cyc {
        Some(c) => g.add_scaled(rec, c, lambda),
        None => rec,
    };
    (p.vars().to_vec(), LossVars { rec, cyc, total })
}

fn breakdown(g: &Graph, l: &LossVars, lambda: f64) -> LossBreakdown {
    let rec = g.value(l.rec).data[0];
    let cyc = l.cyc.map_or(0.0, |c| g.value(c).data[0]);
    LossBreakdown { rec, cyc, total: rec + lambda * cyc }
}

/// Loss values only.
pub fn batch_loss(weights: &ModelWeights, batch: &Batch, lambda: f64) -> LossBreakdown {
    let mut g = Graph::new();
    let (_, l) = build_loss(&mut g, weights, batch, lambda, false);
    breakdown(&g, &l, lambda)
}

/// Loss values and the gradient of `term` for every parameter tensor.
pub fn loss_and_grads(weights: &ModelWeights, batch: &Batch, lambda: f64, term: LossTerm) -> Result<(LossBreakdown, Vec<Tensor>)> {
    let mut g = Graph::new();
    let (vars, l) = build_loss(&mut g, weights, batch, lambda, true);
    let out = match term {
        LossTerm::Rec => l.rec,
        LossTerm::Total => l.total,
        LossTerm::Cyc => l.cyc.ok_or_else(|| NetError::InvalidTrainConfig("batch has no cycle fractions".into()))?,
    };
    let mut grads = g.backward(out);
    let gs = vars
        .iter()
        .zip(weights.tensors())
        .map(|(&v, t)| grads.take(v).unwrap_or_else(|| Tensor::zeros(t.shape)))
        .collect();
    Ok((breakdown(&g, &l, lambda), gs))
}

pub struct Adam {
    beta1: f64,
    beta2: f64,
    eps: f64,
    t: i32,
    m: Vec<Tensor>,
    v: Vec<Tensor>,
}

impl Adam {
    pub fn new(params: &[Tensor], beta1: f64, beta2: f64, eps: f64) -> Self {
        let zeros = || params.iter().map(|p| Tensor::zeros(p.shape)).collect();
        Self { beta1, beta2, eps, t: 0, m: zeros(), v: zeros() }
    }

    pub fn step(&mut self, params: &mut [Tensor], grads: &[Tensor], lr: f64) {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        for (((p, g), m), v) in params.iter_mut().zip(grads).zip(&mut self.m).zip(&mut self.v) {
            for i in 0..p.data.len() {
                let gi = g.data[i];
                m.data[i] = self.beta1 * m.data[i] + (1.0 - self.beta1) * gi;
                v.data[i] = self.beta2 * v.data[i] + (1.0 - self.beta2) * gi * gi;
                let mh = m.data[i] / c1;
                let vh = v.data[i] / c2;
                p.data[i] -= lr * mh / (vh.sqrt() + self.eps);
            }
        }
    }
}

/// Linear warmup followed by cosine annealing with warm restarts, per epoch.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CosineWarmRestarts {
    pub base_lr: f64,
    pub min_lr: f64,
    pub warmup: usize,
    pub period: usize,
}

impl CosineWarmRestarts {
    pub fn from_config(c: &TrainConfig) -> Self {
        let rest = c.epochs.saturating_sub(c.warmup_epochs).max(1);
        let period = if c.restart_epochs == 0 { rest } else { c.restart_epochs };
        Self { base_lr: c.learning_rate, min_lr: c.learning_rate * c.min_lr_ratio, warmup: c.warmup_epochs, period }
    }

    /// Learning rate for zero-based `epoch`.
    pub fn lr(&self, epoch: usize) -> f64 {
        if epoch < self.warmup {
            return self.base_lr * (epoch + 1) as f64 / (self.warmup + 1) as f64;
        }
        let t = ((epoch - self.warmup) % self.period) as f64 / self.period as f64;
        self.min_lr + 0.5 * (self.base_lr - self.min_lr) * (1.0 + (PI * t).cos())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpochLog {
    pub epoch: usize,
    pub rec: f64,
    pub cyc: f64,
    pub total: f64,
    pub lr: f64,
}

impl EpochLog {
    pub const CSV_HEADER: &'static str = "epoch,rec,cyc,total,lr";

    pub fn csv_row(&self) -> String {
        format!("{},{:.9},{:.9},{:.9},{:.6e}", self.epoch, self.rec, self.cyc, self.total, self.lr)
    }
}

#[derive(Clone, Debug)]
pub struct TrainReport {
    pub weights: ModelWeights,
    pub log: Vec<EpochLog>,
}

fn crop(img: &LdrImage, y0: usize, x0: usize, size: usize) -> LdrImage {
    if (y0, x0) == (0, 0) && img.dims() == (size, size) {
        return img.clone();
    }
    let buf = ImageBuf::from_fn(size, size, |y, x| img.buf().pixel(y0 + y, x0 + x)).expect("positive dims");
    LdrImage::new(buf).expect("values copied from a valid image")
}

/// Checks that `data` can be trained with these configs without touching
/// any weights.
pub fn check_dataset(data: &TrainSet, mc: &ModelConfig, tc: &TrainConfig) -> Result<()> {
    mc.validate()?;
    tc.validate()?;
    let pairs = data.pairs();
    if pairs.is_empty() {
        return Err(NetError::Dataset("no training pairs".into()));
    }
    let m = mc.multiple();
    for s in &data.scenes {
        let (h, w) = s.input.dims();
        for (ev, img) in &s.targets {
            if !tc.direction.accepts(ev.value()) {
                return Err(NetError::Dataset(format!(
                    "scene {}: EV {ev} does not match the {} direction",
                    s.name, tc.direction
                )));
            }
            if img.dims() != (h, w) {
                return Err(NetError::Dataset(format!("scene {}: EV {ev} image differs in size", s.name)));
            }
        }
        if tc.patch_size > 0 {
            if tc.patch_size > h.min(w) {
                return Err(NetError::Dataset(format!("scene {} is smaller than the {} px patch", s.name, tc.patch_size)));
            }
        } else if h % m != 0 || w % m != 0 || (h, w) != data.scenes[0].input.dims() {
            return Err(NetError::Dataset("whole-image training needs equal sizes divisible by the model multiple".into()));
        }
    }
    if tc.patch_size > 0 && tc.patch_size % m != 0 {
        return Err(NetError::InvalidTrainConfig(format!("patch size {} is not a multiple of {m}", tc.patch_size)));
    }
    Ok(())
}

/// Trains one direction model.
pub fn train(data: &TrainSet, model_config: &ModelConfig, config: &TrainConfig) -> Result<TrainReport> {
    train_with(data, ModelWeights::init(model_config.clone(), config.direction, config.seed)?, config, |_| {})
}

/// Trains from `init`, calling `on_epoch` after every epoch.
pub fn train_with(
    data: &TrainSet,
    init: ModelWeights,
    config: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochLog),
) -> Result<TrainReport> {
    config.validate()?;
    if init.direction() != config.direction {
        return Err(NetError::DirectionMismatch { expected: config.direction, found: init.direction() });
    }
    check_dataset(data, init.config(), config)?;
    let mut weights = init;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x5eed_0f_da7a);
    let mut adam = Adam::new(weights.tensors(), config.beta1, config.beta2, config.adam_eps);
    let sched = CosineWarmRestarts::from_config(config);
    let use_cycle = config.lambda_cycle > 0.0;
    let mut pairs = data.pairs();
    let mut log = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        let lr = sched.lr(epoch);
        pairs.shuffle(&mut rng);
        let (mut rec, mut cyc, mut total) = (0.0, 0.0, 0.0);
        for chunk in pairs.chunks(config.batch_size) {
            let mut inputs = Vec::with_capacity(chunk.len());
            let mut targets = Vec::with_capacity(chunk.len());
            let mut s = Vec::with_capacity(chunk.len());
            let mut a = Vec::with_capacity(chunk.len());
            for &(si, ti) in chunk {
                let scene = &data.scenes[si];
                let (ev, gt) = &scene.targets[ti];
                let (mut x, mut y) = (scene.input.clone(), gt.clone());
                if config.patch_size > 0 {
                    let (h, w) = x.dims();
                    let p = config.patch_size;
                    let y0 = rng.random_range(0..=h - p);
                    let x0 = rng.random_range(0..=w - p);
                    x = crop(&x, y0, x0, p);
                    y = crop(&y, y0, x0, p);
                }
                if config.augment {
                    let d = Augment::random(&mut rng);
                    x = d.apply(&x);
                    y = d.apply(&y);
                }
                inputs.push(x);
                targets.push(y);
                s.push(ev.value());
                if use_cycle {
                    a.push(sample_cycle_decomposition(*ev, &mut rng).map_or(0.0, |c| c.a));
                }
            }
            let batch = Batch {
                inputs: Tensor::from_images(&inputs),
                targets: Tensor::from_images(&targets),
                s,
                a: use_cycle.then_some(a),
            };
            let (l, grads) = loss_and_grads(&weights, &batch, config.lambda_cycle, LossTerm::Total)?;
            if !l.total.is_finite() {
                return Err(NetError::Dataset(format!("loss diverged at epoch {}", epoch + 1)));
            }
            adam.step(weights.tensors_mut(), &grads, lr);
            let k = chunk.len() as f64;
            rec += l.rec * k;
            cyc += l.cyc * k;
            total += l.total * k;
        }
        let n = pairs.len() as f64;
        let entry = EpochLog { epoch: epoch + 1, rec: rec / n, cyc: cyc / n, total: total / n, lr };
        log::debug!("epoch {} total {:.5}", entry.epoch, entry.total);
        on_epoch(&entry);
        log.push(entry);
    }
    Ok(TrainReport { weights, log })
}

/// Mean PSNR of `forward(input, ev)` against each scene's image at `ev`.
pub fn mean_psnr_at(weights: &ModelWeights, stacks: &[(String, LdrStack)], ev: EvStep) -> Result<f64> {
    let mut sum = 0.0;
    for (name, stack) in stacks {
        let input = stack.get(EvStep::ZERO).ok_or_else(|| NetError::Dataset(format!("scene {name} has no EV 0")))?;
        let gt = stack.get(ev).ok_or_else(|| NetError::Dataset(format!("scene {name} has no EV {ev}")))?;
        sum += psnr(&forward(weights, input, ev)?, gt)?;
    }
    Ok(sum / stacks.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use evhdr_core::synth::{evs, simulate_stack, ForwardCrf, SyntheticScene};

    #[test]
    fn cycle_boundaries() {
        let s = EvStep::new(2.5).unwrap();
        let c0 = CycleSample::from_fraction(s, 0.0).unwrap();
        assert_eq!((c0.u.value(), c0.v.value()), (0.0, 2.5));
        let c1 = CycleSample::from_fraction(s, 1.0).unwrap();
        assert_eq!((c1.u.value(), c1.v.value()), (2.5, 0.0));
        assert!(CycleSample::from_fraction(s, 1.5).is_err());
        assert!(sample_cycle_decomposition(EvStep::ZERO, &mut ChaCha8Rng::seed_from_u64(0)).is_none());
    }

    #[test]
    fn total_loss_arithmetic() {
        assert!((total_loss(1.0, 0.5, 0.1).unwrap().total - 1.05).abs() < 1e-15);
        assert_eq!(total_loss(0.7, 0.5, 0.0).unwrap().total, 0.7);
        assert_eq!(total_loss(0.0, 0.0, 0.1).unwrap().total, 0.0);
        assert!(total_loss(1.0, 1.0, -0.1).is_err());
    }

    #[test]
    fn reconstruction_loss_values() {
        let a = LdrImage::filled(3, 3, [0.2; 3]).unwrap();
        let b = LdrImage::filled(3, 3, [0.3; 3]).unwrap();
        assert_eq!(reconstruction_loss(&a, &a).unwrap(), 0.0);
        assert!((reconstruction_loss(&a, &b).unwrap() - 0.1).abs() < 1e-12);
        assert!(reconstruction_loss(&a, &LdrImage::filled(2, 3, [0.2; 3]).unwrap()).is_err());
    }

    #[test]
    fn hold_out_protocol() {
        let all = evs(&[-3.0, -2.0, -1.0, 0.0, 1.0, 2.0, 3.0]);
        let (train, eval) = hold_out_split(&all, &evs(&[-1.0, 1.0])).unwrap();
        assert_eq!(train, evs(&[-3.0, -2.0, 0.0, 2.0, 3.0]));
        assert_eq!(eval, evs(&[-1.0, 1.0]));
        assert!(hold_out_split(&all, &[]).unwrap().1.is_empty());
        assert!(hold_out_split(&all, &all).is_err());
        assert!(hold_out_split(&all, &evs(&[0.5])).is_err());
    }

    #[test]
    fn augment_draws() {
        let img = LdrImage::from_data(2, 3, (0..18).map(|v| v as f64 / 17.0).collect()).unwrap();
        assert_eq!(Augment::default().apply(&img), img);
        let flip = Augment { flip_h: true, ..Default::default() };
        assert_eq!(flip.apply(&flip.apply(&img)), img);
        let turn = Augment { quarter_turns: 1, ..Default::default() };
        let r = turn.apply(&img);
        assert_eq!(r.dims(), (3, 2));
        // Counter-clockwise: the top-right pixel moves to the top-left.
        assert_eq!(r.buf().pixel(0, 0), img.buf().pixel(0, 2));
        let mut four = img.clone();
        for _ in 0..4 {
            four = turn.apply(&four);
        }
        assert_eq!(four, img);
    }

    #[test]
    fn schedule_shape() {
        let c = TrainConfig { epochs: 20, warmup_epochs: 4, learning_rate: 1.0, min_lr_ratio: 0.0, ..Default::default() };
        let s = CosineWarmRestarts::from_config(&c);
        assert!((s.lr(0) - 0.2).abs() < 1e-12);
        assert!(s.lr(3) < s.lr(4));
        assert_eq!(s.lr(4), 1.0);
        assert!((0..19).skip(4).all(|e| s.lr(e + 1) <= s.lr(e)));
        let r = CosineWarmRestarts { base_lr: 1.0, min_lr: 0.0, warmup: 0, period: 5 };
        assert_eq!(r.lr(5), 1.0);
    }

    #[test]
    fn dataset_sign_is_checked() {
        let scene = SyntheticScene::random(0, 16, 16, ForwardCrf::Gamma(2.2)).unwrap();
        let stack = simulate_stack(&scene, &evs(&[-1.0, 0.0, 1.0]), true).unwrap();
        let stacks = vec![("a".to_string(), stack)];
        let inc = TrainSet::from_stacks(&stacks, Direction::Increase, &[]).unwrap();
        assert_eq!(inc.pairs().len(), 1);
        let mc = ModelConfig { encoder_channels: vec![2, 2], num_scales: 2, ..Default::default() };
        let tc = TrainConfig { direction: Direction::Decrease, patch_size: 8, epochs: 1, ..Default::default() };
        assert!(matches!(train(&inc, &mc, &tc), Err(NetError::Dataset(_))));
        let empty = TrainSet::default();
        assert!(matches!(train(&empty, &mc, &TrainConfig::default()), Err(NetError::Dataset(_))));
    }
}
