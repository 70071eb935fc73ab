//! Exposure-conditioned re-exposure network.
//!
//! A VGG-style encoder produces a feature pyramid (scale `k` has `H/2^k ×
//! W/2^k` pixels). The decoder starts from the coarsest features and climbs
//! back through blocks of bicubic upsampling, a 3×3 convolution, skip
//! concatenation and a fusing 3×3 convolution. Every decoder level ends in
//! an implicit module: an MLP applied per pixel to the feature vector with
//! the EV step appended. A zero-initialised head on each level predicts
//! per-pixel gain `α = exp(·)` and offset `β`, resized to full resolution;
//! the output is the input image passed through these affine maps from the
//! coarsest level to the finest, then clamped to `[0, 1]`.
//!
//! `s = 0` never reaches a network: the input is returned unchanged.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use evhdr_core::resample::ResizeMethod;
use evhdr_core::{EvStep, ImageBuf, LdrImage};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{NetError, Result};
use crate::graph::{Graph, Var};
use crate::tensor::Tensor;

/// Which of the two trained models handles an EV step.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Increase,
    Decrease,
}

impl Direction {
    /// `None` for `s = 0`.
    pub fn of(s: f64) -> Option<Direction> {
        if s > 0.0 {
            Some(Direction::Increase)
        } else if s < 0.0 {
            Some(Direction::Decrease)
        } else {
            None
        }
    }

    pub fn accepts(self, s: f64) -> bool {
        Direction::of(s) == Some(self)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Direction::Increase => "increase",
            Direction::Decrease => "decrease",
        }
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Direction {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "increase" | "inc" => Ok(Direction::Increase),
            "decrease" | "dec" => Ok(Direction::Decrease),
            _ => Err(format!("unknown direction '{s}' (expected increase or decrease)")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub num_scales: usize,
    /// Channel count per scale, finest first.
    pub encoder_channels: Vec<usize>,
    /// Layers in each implicit MLP.
    pub implicit_depth: usize,
    /// Hidden width; `None` uses the level's channel count.
    pub implicit_hidden: Option<usize>,
    pub use_intensity_transform: bool,
    /// Encoder weights are copied from a supplied weight file at init.
    pub use_pretrained_encoder: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            num_scales: 4,
            encoder_channels: vec![8, 16, 24, 32],
            implicit_depth: 3,
            implicit_hidden: None,
            use_intensity_transform: true,
            use_pretrained_encoder: false,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(NetError::InvalidConfig(m));
        if self.num_scales < 2 {
            return bad(format!("num_scales must be >= 2, got {}", self.num_scales));
        }
        if self.encoder_channels.len() != self.num_scales {
            return bad(format!(
                "{} encoder channel counts for {} scales",
                self.encoder_channels.len(),
                self.num_scales
            ));
        }
        if self.encoder_channels.contains(&0) || self.implicit_hidden == Some(0) {
            return bad("channel counts must be positive".into());
        }
        if self.implicit_depth == 0 {
            return bad("implicit_depth must be >= 1".into());
        }
        if self.num_scales > 12 {
            return bad(format!("num_scales {} is unreasonably large", self.num_scales));
        }
        Ok(())
    }

    /// Spatial multiple required of encoder inputs.
    pub fn multiple(&self) -> usize {
        1 << (self.num_scales - 1)
    }

    fn hidden(&self, k: usize) -> usize {
        self.implicit_hidden.unwrap_or(self.encoder_channels[k])
    }

    /// Canonical JSON used for hashing and in weight manifests.
    pub fn canonical_json(&self) -> String {
        serde_json::to_string(self).expect("config serialises")
    }

    /// Hex SHA-256 of [`canonical_json`](Self::canonical_json).
    pub fn hash(&self) -> String {
        Sha256::digest(self.canonical_json().as_bytes())
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }

    /// Parameter names and shapes in storage order.
    pub fn layout(&self) -> Vec<(String, [usize; 4])> {
        let c = &self.encoder_channels;
        let s = self.num_scales;
        let mut out = Vec::new();
        let mut conv = |name: String, cout: usize, cin: usize, k: usize| {
            out.push((format!("{name}.w"), [cout, cin, k, k]));
            out.push((format!("{name}.b"), [cout, 1, 1, 1]));
        };
        for k in 0..s {
            let cin = if k == 0 { 3 } else { c[k - 1] };
            conv(format!("enc.{k}.conv0"), c[k], cin, 3);
            conv(format!("enc.{k}.conv1"), c[k], c[k], 3);
        }
        for k in 0..s - 1 {
            conv(format!("dec.{k}.up"), c[k], c[k + 1], 3);
            conv(format!("dec.{k}.fuse"), c[k], 2 * c[k], 3);
        }
        for k in 0..s {
            let d = self.implicit_depth;
            for j in 0..d {
                let cin = if j == 0 { c[k] + 1 } else { self.hidden(k) };
                let cout = if j + 1 == d { c[k] } else { self.hidden(k) };
                conv(format!("imp.{k}.l{j}"), cout, cin, 1);
            }
        }
        if self.use_intensity_transform {
            for k in 0..s {
                conv(format!("head.{k}"), 6, c[k], 1);
            }
        } else {
            conv("out".into(), 3, c[0], 1);
        }
        out
    }
}

/// All learned parameters of one direction model.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelWeights {
    config: ModelConfig,
    direction: Direction,
    names: Vec<String>,
    tensors: Vec<Tensor>,
    index: HashMap<String, usize>,
}

impl ModelWeights {
    /// Random initialisation: He-uniform convolutions, zero biases, and zero
    /// intensity heads so that `α ≡ 1, β ≡ 0` at the start.
    pub fn init(config: ModelConfig, direction: Direction, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let tensors = config
            .layout()
            .into_iter()
            .map(|(name, shape)| {
                let mut t = Tensor::zeros(shape);
                if name.ends_with(".w") && !name.starts_with("head.") {
                    let fan_in = (shape[1] * shape[2] * shape[3]) as f64;
                    let bound = (6.0 / fan_in).sqrt();
                    t.data.iter_mut().for_each(|v| *v = rng.random_range(-bound..bound));
                }
                (name, t)
            })
            .collect();
        Self::from_parts(config, direction, tensors)
    }

    /// Checks names and shapes against the config's layout.
    pub fn from_parts(config: ModelConfig, direction: Direction, tensors: Vec<(String, Tensor)>) -> Result<Self> {
        config.validate()?;
        let layout = config.layout();
        if layout.len() != tensors.len() {
            return Err(NetError::Shape(format!(
                "config expects {} tensors, got {}",
                layout.len(),
                tensors.len()
            )));
        }
        let mut by_name: HashMap<String, Tensor> = HashMap::new();
        for (name, t) in tensors {
            if by_name.insert(name.clone(), t).is_some() {
                return Err(NetError::Shape(format!("duplicate tensor {name}")));
            }
        }
        let mut names = Vec::with_capacity(layout.len());
        let mut out = Vec::with_capacity(layout.len());
        for (name, shape) in layout {
            let t = by_name
                .remove(&name)
                .ok_or_else(|| NetError::Shape(format!("missing tensor {name}")))?;
            if t.shape != shape {
                return Err(NetError::Shape(format!("{name}: shape {:?}, expected {shape:?}", t.shape)));
            }
            if !t.is_finite() {
                return Err(NetError::Shape(format!("{name}: non-finite values")));
            }
            names.push(name);
            out.push(t);
        }
        let index = names.iter().enumerate().map(|(i, n)| (n.clone(), i)).collect();
        Ok(Self { config, direction, names, tensors: out, index })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn direction(&self) -> Direction {
        self.direction
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn tensors(&self) -> &[Tensor] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Tensor] {
        &mut self.tensors
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.index.get(name).map(|&i| &self.tensors[i])
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.index.get(name).map(|&i| &mut self.tensors[i])
    }

    pub fn num_params(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }

    /// Copies every `enc.*` tensor from `other`, which must share the encoder
    /// shapes.
    pub fn copy_encoder_from(&mut self, other: &ModelWeights) -> Result<()> {
        for (i, name) in self.names.iter().enumerate() {
            if !name.starts_with("enc.") {
                continue;
            }
            let src = other
                .get(name)
                .ok_or_else(|| NetError::Shape(format!("pretrained weights lack {name}")))?;
            if src.shape != self.tensors[i].shape {
                return Err(NetError::Shape(format!("pretrained {name} has shape {:?}", src.shape)));
            }
            self.tensors[i] = src.clone();
        }
        Ok(())
    }

    /// Inserts every tensor into `g` as a trainable or constant leaf.
    pub fn bind(&self, g: &mut Graph, trainable: bool) -> Bound<'_> {
        let vars = self
            .tensors
            .iter()
            .map(|t| if trainable { g.param(t.clone()) } else { g.constant(t.clone()) })
            .collect();
        Bound { weights: self, vars }
    }
}

/// Weights inserted into a graph.
pub struct Bound<'w> {
    weights: &'w ModelWeights,
    vars: Vec<Var>,
}

impl Bound<'_> {
    pub fn vars(&self) -> &[Var] {
        &self.vars
    }

    pub fn var(&self, name: &str) -> Var {
        self.vars[*self.weights.index.get(name).unwrap_or_else(|| panic!("no parameter {name}"))]
    }

    fn conv(&self, g: &mut Graph, x: Var, name: &str) -> Var {
        g.conv2d(x, self.var(&format!("{name}.w")), self.var(&format!("{name}.b")))
    }

    /// Feature pyramid indexed by scale (finest first).
    pub fn encode(&self, g: &mut Graph, x: Var) -> Vec<Var> {
        let mut feats = Vec::with_capacity(self.weights.config.num_scales);
        let mut h = x;
        for k in 0..self.weights.config.num_scales {
            if k > 0 {
                h = g.max_pool2(h);
            }
            h = self.conv(g, h, &format!("enc.{k}.conv0"));
            h = g.relu(h);
            h = self.conv(g, h, &format!("enc.{k}.conv1"));
            h = g.relu(h);
            feats.push(h);
        }
        feats
    }

    /// Per-pixel MLP on `[x, s]`; `s` is `[N, 1, 1, 1]`.
    pub fn implicit(&self, g: &mut Graph, k: usize, x: Var, s: Var) -> Var {
        let depth = self.weights.config.implicit_depth;
        let mut h = g.append_scalar(x, s);
        for j in 0..depth {
            h = self.conv(g, h, &format!("imp.{k}.l{j}"));
            if j + 1 < depth {
                h = g.silu(h);
            }
        }
        h
    }

    /// Decoder level `k`: lifts `x` from level `k + 1` to `skip`'s size.
    pub fn decoder_block(&self, g: &mut Graph, k: usize, x: Var, skip: Var, s: Var) -> Var {
        let [_, _, h, w] = g.shape(skip);
        let up = g.resize(x, h, w, ResizeMethod::Bicubic);
        let up = self.conv(g, up, &format!("dec.{k}.up"));
        let cat = g.concat(&[up, skip]);
        let fused = self.conv(g, cat, &format!("dec.{k}.fuse"));
        let fused = g.silu(fused);
        self.implicit(g, k, fused, s)
    }

    /// `(α, β)` at `h × w` from level-`k` decoder features.
    pub fn intensity(&self, g: &mut Graph, k: usize, feat: Var, h: usize, w: usize) -> (Var, Var) {
        let raw = self.conv(g, feat, &format!("head.{k}"));
        let raw = g.resize(raw, h, w, ResizeMethod::Bicubic);
        let log_alpha = g.slice_channels(raw, 0, 3);
        let alpha = g.exp(log_alpha);
        let beta = g.slice_channels(raw, 3, 3);
        (alpha, beta)
    }

    /// Full network on a batch whose dims are multiples of
    /// [`ModelConfig::multiple`]. Samples with `s = 0` pass through.
    pub fn forward(&self, g: &mut Graph, x: Var, s: Var) -> Var {
        let cfg = &self.weights.config;
        let [_, _, h, w] = g.shape(x);
        let feats = self.encode(g, x);
        let top = cfg.num_scales - 1;
        let mut dec = vec![self.implicit(g, top, feats[top], s)];
        for k in (0..top).rev() {
            let prev = *dec.last().expect("non-empty");
            dec.push(self.decoder_block(g, k, prev, feats[k], s));
        }
        dec.reverse();
        let out = if cfg.use_intensity_transform {
            let mut est = x;
            for k in (0..cfg.num_scales).rev() {
                let (alpha, beta) = self.intensity(g, k, dec[k], h, w);
                let scaled = g.mul(alpha, est);
                est = g.add(scaled, beta);
            }
            g.clamp01(est)
        } else {
            let raw = self.conv(g, dec[0], "out");
            g.sigmoid(raw)
        };
        let keep: Vec<bool> = g.value(s).data.iter().map(|&v| v == 0.0).collect();
        if keep.iter().any(|&k| k) {
            g.passthrough(out, x, keep)
        } else {
            out
        }
    }
}

pub type FeatureMap = Tensor;

/// Per-pixel gain and offset for one scale, `[1, 3, H, W]` each.
#[derive(Clone, Debug, PartialEq)]
pub struct AlphaBetaMaps {
    pub alpha: Tensor,
    pub beta: Tensor,
}

fn check_s(s: f64) -> Result<()> {
    if s.is_finite() {
        Ok(())
    } else {
        Err(NetError::NonFiniteEv(s))
    }
}

fn check_scale(weights: &ModelWeights, k: usize) -> Result<()> {
    if k >= weights.config.num_scales {
        return Err(NetError::Shape(format!("scale {k} out of range")));
    }
    Ok(())
}

fn check_feature(weights: &ModelWeights, k: usize, x: &FeatureMap) -> Result<()> {
    check_scale(weights, k)?;
    let c = weights.config.encoder_channels[k];
    if x.n() != 1 || x.c() != c {
        return Err(NetError::Shape(format!("scale {k} features must be [1, {c}, h, w], got {:?}", x.shape)));
    }
    Ok(())
}

fn scalar_batch(g: &mut Graph, s: &[f64]) -> Var {
    g.constant(Tensor::from_vec([s.len(), 1, 1, 1], s.to_vec()))
}

/// Feature pyramid of one image, finest scale first.
pub fn encode(weights: &ModelWeights, image: &LdrImage) -> Result<Vec<FeatureMap>> {
    let m = weights.config.multiple();
    let (h, w) = image.dims();
    if h % m != 0 || w % m != 0 {
        return Err(NetError::PaddingRequired { height: h, width: w, multiple: m });
    }
    let mut g = Graph::new();
    let p = weights.bind(&mut g, false);
    let x = g.constant(Tensor::from_images([image]));
    let feats = p.encode(&mut g, x);
    Ok(feats.into_iter().map(|f| g.value(f).clone()).collect())
}

pub fn implicit_module(weights: &ModelWeights, scale: usize, x: &FeatureMap, s: f64) -> Result<FeatureMap> {
    check_s(s)?;
    check_feature(weights, scale, x)?;
    let mut g = Graph::new();
    let p = weights.bind(&mut g, false);
    let xv = g.constant(x.clone());
    let sv = scalar_batch(&mut g, &[s]);
    let out = p.implicit(&mut g, scale, xv, sv);
    Ok(g.value(out).clone())
}

/// Decoder level `scale` (`< num_scales − 1`); `x` comes from `scale + 1`.
pub fn decoder_block(
    weights: &ModelWeights,
    scale: usize,
    x: &FeatureMap,
    skip: &FeatureMap,
    s: f64,
) -> Result<FeatureMap> {
    check_s(s)?;
    if scale + 1 >= weights.config.num_scales {
        return Err(NetError::Shape(format!("no decoder block at scale {scale}")));
    }
    check_feature(weights, scale + 1, x)?;
    check_feature(weights, scale, skip)?;
    if skip.h() != 2 * x.h() || skip.w() != 2 * x.w() {
        return Err(NetError::Shape(format!(
            "skip {}x{} is not twice the input {}x{}",
            skip.h(),
            skip.w(),
            x.h(),
            x.w()
        )));
    }
    let mut g = Graph::new();
    let p = weights.bind(&mut g, false);
    let (xv, sk) = (g.constant(x.clone()), g.constant(skip.clone()));
    let sv = scalar_batch(&mut g, &[s]);
    let out = p.decoder_block(&mut g, scale, xv, sk, sv);
    Ok(g.value(out).clone())
}

pub fn intensity_transform(
    weights: &ModelWeights,
    scale: usize,
    feat: &FeatureMap,
    target_h: usize,
    target_w: usize,
) -> Result<AlphaBetaMaps> {
    if !weights.config.use_intensity_transform {
        return Err(NetError::InvalidConfig("model has no intensity-transform heads".into()));
    }
    check_feature(weights, scale, feat)?;
    if target_h == 0 || target_w == 0 {
        return Err(NetError::Shape("target dims must be positive".into()));
    }
    let mut g = Graph::new();
    let p = weights.bind(&mut g, false);
    let f = g.constant(feat.clone());
    let (a, b) = p.intensity(&mut g, scale, f, target_h, target_w);
    Ok(AlphaBetaMaps { alpha: g.value(a).clone(), beta: g.value(b).clone() })
}

/// `α ⊙ image + β` per channel, without clamping.
pub fn apply_affine(image: &ImageBuf, maps: &AlphaBetaMaps) -> Result<ImageBuf> {
    let (h, w) = image.dims();
    for t in [&maps.alpha, &maps.beta] {
        if t.shape != [1, 3, h, w] {
            return Err(NetError::Shape(format!("maps {:?} vs image {h}x{w}", t.shape)));
        }
    }
    let mut out = image.clone();
    for y in 0..h {
        for x in 0..w {
            for c in 0..3 {
                let i = maps.alpha.idx(0, c, y, x);
                out.set(y, x, c, maps.alpha.data[i] * image.get(y, x, c) + maps.beta.data[i]);
            }
        }
    }
    Ok(out)
}

fn reflect(i: usize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let period = 2 * (n - 1);
    let m = i % period;
    if m < n {
        m
    } else {
        period - m
    }
}

/// Reflect-pads the bottom and right edges up to multiples of `m`.
pub fn reflect_pad(image: &LdrImage, m: usize) -> LdrImage {
    let (h, w) = image.dims();
    let (ph, pw) = (h.div_ceil(m) * m, w.div_ceil(m) * m);
    if (ph, pw) == (h, w) {
        return image.clone();
    }
    let buf = ImageBuf::from_fn(ph, pw, |y, x| image.buf().pixel(reflect(y, h), reflect(x, w))).expect("positive dims");
    LdrImage::new(buf).expect("values copied from a valid image")
}

fn crop(buf: &ImageBuf, h: usize, w: usize) -> ImageBuf {
    if buf.dims() == (h, w) {
        return buf.clone();
    }
    ImageBuf::from_fn(h, w, |y, x| buf.pixel(y, x)).expect("positive dims")
}

/// Re-exposes `image` by `s` EV. Any size is accepted (reflect-padded
/// internally). `s = 0` returns the input unchanged without running the model.
pub fn forward(weights: &ModelWeights, image: &LdrImage, s: EvStep) -> Result<LdrImage> {
    Ok(forward_batch(weights, std::slice::from_ref(image), &[s])?.remove(0))
}

/// [`forward`] over equally sized images, one EV per image.
pub fn forward_batch(weights: &ModelWeights, images: &[LdrImage], evs: &[EvStep]) -> Result<Vec<LdrImage>> {
    if images.len() != evs.len() || images.is_empty() {
        return Err(NetError::Shape(format!("{} images for {} EVs", images.len(), evs.len())));
    }
    let dims = images[0].dims();
    if images.iter().any(|i| i.dims() != dims) {
        return Err(NetError::Shape("batch images differ in size".into()));
    }
    for &s in evs {
        let v = s.value();
        if v != 0.0 && !weights.direction.accepts(v) {
            return Err(NetError::DirectionMismatch {
                expected: Direction::of(v).expect("non-zero"),
                found: weights.direction,
            });
        }
        if !s.in_supported_range() {
            log::warn!("EV step {s} is outside the trained range [-3, 3]; extrapolating");
        }
    }
    if evs.iter().all(|s| s.is_zero()) {
        return Ok(images.to_vec());
    }
    let m = weights.config.multiple();
    let padded: Vec<LdrImage> = images.iter().map(|i| reflect_pad(i, m)).collect();
    let mut g = Graph::new();
    let p = weights.bind(&mut g, false);
    let x = g.constant(Tensor::from_images(&padded));
    let s: Vec<f64> = evs.iter().map(|e| e.value()).collect();
    let sv = scalar_batch(&mut g, &s);
    let out = p.forward(&mut g, x, sv);
    let t = g.value(out);
    Ok((0..images.len())
        .map(|n| {
            if evs[n].is_zero() {
                images[n].clone()
            } else {
                LdrImage::from_clamped(crop(&t.to_buf(n), dims.0, dims.1))
            }
        })
        .collect())
}

/// Picks the model for the sign of `s`; `None` at `s = 0`.
pub fn select_model<'a>(
    increase: Option<&'a ModelWeights>,
    decrease: Option<&'a ModelWeights>,
    s: EvStep,
) -> Result<Option<&'a ModelWeights>> {
    let Some(dir) = Direction::of(s.value()) else {
        return Ok(None);
    };
    let w = match dir {
        Direction::Increase => increase,
        Direction::Decrease => decrease,
    }
    .ok_or(NetError::MissingModel(dir))?;
    if w.direction != dir {
        return Err(NetError::DirectionMismatch { expected: dir, found: w.direction });
    }
    Ok(Some(w))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> ModelConfig {
        ModelConfig { encoder_channels: vec![4, 6, 8, 8], ..Default::default() }
    }

    fn test_image(h: usize, w: usize) -> LdrImage {
        LdrImage::from_data(h, w, (0..h * w * 3).map(|i| ((i * 37 % 101) as f64) / 100.0).collect()).unwrap()
    }

    #[test]
    fn config_validation() {
        assert!(ModelConfig::default().validate().is_ok());
        assert!(ModelConfig { num_scales: 1, encoder_channels: vec![4], ..Default::default() }.validate().is_err());
        assert!(ModelConfig { encoder_channels: vec![4, 4], ..Default::default() }.validate().is_err());
        assert_eq!(ModelConfig::default().multiple(), 8);
        assert_eq!(ModelConfig::default().hash().len(), 64);
        assert_ne!(ModelConfig::default().hash(), small().hash());
    }

    #[test]
    fn pyramid_shapes() {
        let w = ModelWeights::init(small(), Direction::Increase, 0).unwrap();
        let feats = encode(&w, &test_image(64, 64)).unwrap();
        let dims: Vec<_> = feats.iter().map(|f| (f.h(), f.w())).collect();
        assert_eq!(dims, [(64, 64), (32, 32), (16, 16), (8, 8)]);
        assert!(matches!(encode(&w, &test_image(60, 64)), Err(NetError::PaddingRequired { .. })));
    }

    #[test]
    fn identity_at_init_and_at_zero() {
        let w = ModelWeights::init(small(), Direction::Increase, 1).unwrap();
        let img = test_image(16, 24);
        assert_eq!(forward(&w, &img, EvStep::new(1.5).unwrap()).unwrap(), img);
        assert_eq!(forward(&w, &img, EvStep::ZERO).unwrap(), img);
        let odd = test_image(13, 10);
        assert_eq!(forward(&w, &odd, EvStep::new(2.0).unwrap()).unwrap().dims(), (13, 10));
    }

    #[test]
    fn direction_is_enforced() {
        let inc = ModelWeights::init(small(), Direction::Increase, 2).unwrap();
        let dec = ModelWeights::init(small(), Direction::Decrease, 2).unwrap();
        let img = test_image(8, 8);
        assert!(matches!(forward(&inc, &img, EvStep::new(-1.0).unwrap()), Err(NetError::DirectionMismatch { .. })));
        let pick = |s: f64| select_model(Some(&inc), Some(&dec), EvStep::new(s).unwrap()).unwrap().map(|w| w.direction());
        assert_eq!(pick(2.5), Some(Direction::Increase));
        assert_eq!(pick(-0.3), Some(Direction::Decrease));
        assert_eq!(pick(0.0), None);
        assert!(matches!(
            select_model(Some(&inc), None, EvStep::new(-1.0).unwrap()),
            Err(NetError::MissingModel(Direction::Decrease))
        ));
    }

    #[test]
    fn reflect_indices() {
        let idx: Vec<usize> = (0..9).map(|i| reflect(i, 4)).collect();
        assert_eq!(idx, [0, 1, 2, 3, 2, 1, 0, 1, 2]);
        assert_eq!(reflect(5, 1), 0);
    }

    #[test]
    fn affine_arithmetic() {
        let img = LdrImage::filled(2, 2, [0.25; 3]).unwrap();
        let maps = AlphaBetaMaps { alpha: Tensor::filled([1, 3, 2, 2], 2.0), beta: Tensor::zeros([1, 3, 2, 2]) };
        assert!(apply_affine(img.buf(), &maps).unwrap().data().iter().all(|&v| v == 0.5));
        let id = AlphaBetaMaps { alpha: Tensor::filled([1, 3, 2, 2], 1.0), beta: Tensor::zeros([1, 3, 2, 2]) };
        assert_eq!(apply_affine(img.buf(), &id).unwrap(), *img.buf());
        let bad = AlphaBetaMaps { alpha: Tensor::filled([1, 3, 1, 2], 1.0), beta: Tensor::zeros([1, 3, 1, 2]) };
        assert!(apply_affine(img.buf(), &bad).is_err());
    }
}
