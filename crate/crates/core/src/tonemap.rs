//! Global tone-mapping operators.
//!
//! Both operators compress luminance only and rescale each pixel's colour by
//! `L_d / L`, then apply a 1/2.2 display gamma and clamp to `[0, 1]`. Both
//! normalise by an image statistic, so their output does not change when the
//! radiance is multiplied by a constant.

use crate::error::{Error, Result};
use crate::image::{rec709_luma, ImageBuf, LdrImage, RadianceMap};

/// Luminance floor used inside logarithms.
pub const LOG_FLOOR: f64 = 1e-6;
pub const DISPLAY_GAMMA: f64 = 2.2;

/// Rec. 709 luminance of each pixel.
pub fn luminance(rad: &RadianceMap) -> Vec<f64> {
    rad.buf().pixels().map(rec709_luma).collect()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ReinhardParams {
    /// Key value `a`.
    pub key: f64,
    /// White point in scaled-luminance units; `None` uses the image maximum.
    pub white: Option<f64>,
}

impl Default for ReinhardParams {
    fn default() -> Self {
        Self { key: 0.18, white: None }
    }
}

/// `L_m (1 + L_m / L_white²) / (1 + L_m)`.
#[inline]
pub fn reinhard_curve(lm: f64, white: f64) -> f64 {
    lm * (1.0 + lm / (white * white)) / (1.0 + lm)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KimKautzParams {
    /// Display luminance range in cd/m².
    pub d_max: f64,
    pub d_min: f64,
    /// Divides the scene log-range to give the width of the central weighting.
    pub spread: f64,
    /// Overall contrast scale.
    pub strength: f64,
    /// Percentiles at which display log-luminance is clipped before normalising.
    pub clip_low: f64,
    pub clip_high: f64,
}

impl Default for KimKautzParams {
    fn default() -> Self {
        Self { d_max: 300.0, d_min: 0.3, spread: 3.0, strength: 0.5, clip_low: 0.01, clip_high: 0.99 }
    }
}

/// Lower bound on the far-field contrast ratio that keeps the KK curve
/// monotone for any spread (the weighted contrast is positive iff
/// `k > (1 − k)·2e^{-3/2}`).
pub const KK_MIN_CONTRAST: f64 = 1.0 / 3.0;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ToneMapper {
    Reinhard(ReinhardParams),
    KimKautz(KimKautzParams),
}

impl ToneMapper {
    pub fn apply(&self, rad: &RadianceMap) -> Result<LdrImage> {
        match self {
            ToneMapper::Reinhard(p) => reinhard_global(rad, *p),
            ToneMapper::KimKautz(p) => kim_kautz(rad, *p),
        }
    }

    /// Linear display values before gamma and clamping.
    pub fn apply_linear(&self, rad: &RadianceMap) -> Result<ImageBuf> {
        match self {
            ToneMapper::Reinhard(p) => reinhard_linear(rad, *p),
            ToneMapper::KimKautz(p) => kim_kautz_linear(rad, *p),
        }
    }
}

fn with_display_luminance(rad: &RadianceMap, lum: &[f64], display: &[f64]) -> Result<ImageBuf> {
    let mut data = Vec::with_capacity(lum.len() * 3);
    for ((p, &l), &ld) in rad.buf().pixels().zip(lum).zip(display) {
        let k = ld / l;
        data.extend_from_slice(&[p[0] * k, p[1] * k, p[2] * k]);
    }
    ImageBuf::new(rad.height(), rad.width(), data)
}

/// Display encoding: `clamp(v^(1/2.2), 0, 1)`.
pub fn display_encode(linear: &ImageBuf) -> LdrImage {
    LdrImage::from_clamped(linear.map(|v| v.max(0.0).powf(1.0 / DISPLAY_GAMMA)))
}

fn check_positive(lum: &[f64]) -> Result<()> {
    if let Some(l) = lum.iter().find(|l| !(**l > 0.0)) {
        return Err(Error::InvalidArgument(format!("non-positive luminance {l}")));
    }
    Ok(())
}

pub fn reinhard_linear(rad: &RadianceMap, params: ReinhardParams) -> Result<ImageBuf> {
    if !(params.key > 0.0) {
        return Err(Error::InvalidArgument(format!("key must be positive, got {}", params.key)));
    }
    let lum = luminance(rad);
    check_positive(&lum)?;
    let log_avg = (lum.iter().map(|l| l.max(LOG_FLOOR).ln()).sum::<f64>() / lum.len() as f64).exp();
    let scaled: Vec<f64> = lum.iter().map(|l| params.key * l / log_avg).collect();
    let white = match params.white {
        Some(w) if w > 0.0 => w,
        Some(w) => return Err(Error::InvalidArgument(format!("white point must be positive, got {w}"))),
        None => scaled.iter().copied().fold(0.0, f64::max),
    };
    let display: Vec<f64> = scaled.iter().map(|&lm| reinhard_curve(lm, white)).collect();
    with_display_luminance(rad, &lum, &display)
}

/// Global photographic operator with white-point burn-out.
pub fn reinhard_global(rad: &RadianceMap, params: ReinhardParams) -> Result<LdrImage> {
    Ok(display_encode(&reinhard_linear(rad, params)?))
}

fn percentile(sorted: &[f64], p: f64) -> f64 {
    let idx = (p.clamp(0.0, 1.0) * (sorted.len() - 1) as f64).round() as usize;
    sorted[idx]
}

pub fn kim_kautz_linear(rad: &RadianceMap, params: KimKautzParams) -> Result<ImageBuf> {
    if !(params.d_max > params.d_min && params.d_min > 0.0) {
        return Err(Error::InvalidArgument("display range must satisfy 0 < d_min < d_max".into()));
    }
    if !(params.spread > 0.0 && params.strength > 0.0) {
        return Err(Error::InvalidArgument("spread and strength must be positive".into()));
    }
    let lum = luminance(rad);
    check_positive(&lum)?;
    let log_l: Vec<f64> = lum.iter().map(|l| l.max(LOG_FLOOR).ln()).collect();
    let n = log_l.len() as f64;
    let mu = log_l.iter().sum::<f64>() / n;
    let (lo, hi) = log_l
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    let range = hi - lo;
    let display: Vec<f64> = if range < 1e-12 {
        vec![0.5; log_l.len()]
    } else {
        let contrast = ((params.d_max.ln() - params.d_min.ln()) / range).max(KK_MIN_CONTRAST);
        let sigma = range / params.spread;
        let two_sigma_sq = 2.0 * sigma * sigma;
        let ld: Vec<f64> = log_l
            .iter()
            .map(|&l| {
                let d = l - mu;
                let w = (-d * d / two_sigma_sq).exp();
                let k = (1.0 - contrast) * w + contrast;
                (params.strength * k * d).exp()
            })
            .collect();
        let mut sorted = ld.clone();
        sorted.sort_by(f64::total_cmp);
        let lo = percentile(&sorted, params.clip_low);
        let hi = percentile(&sorted, params.clip_high);
        if hi - lo < 1e-12 * hi.abs().max(1.0) {
            vec![0.5; ld.len()]
        } else {
            ld.iter().map(|&v| (v.clamp(lo, hi) - lo) / (hi - lo)).collect()
        }
    };
    with_display_luminance(rad, &lum, &display)
}

/// Consistent log-domain operator: log luminance is scaled about its mean
/// with a contrast that falls from 1 at the mean to the display/scene
/// log-range ratio in the tails, then percentile-clipped and normalised.
pub fn kim_kautz(rad: &RadianceMap, params: KimKautzParams) -> Result<LdrImage> {
    Ok(display_encode(&kim_kautz_linear(rad, params)?))
}
