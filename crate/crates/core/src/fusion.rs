//! Inverse camera-response recovery and radiance merging.
//!
//! The response is recovered per channel as a 256-entry table `g` of log
//! exposures by weighted linear least squares over sampled pixel levels, with
//! a second-difference smoothness penalty and the gauge fixed by `g(128) = 0`.
//! Merging averages `g(Z) − s·ln 2` over the stack with a hat weighting that
//! ignores clipped observations.

use std::f64::consts::LN_2;
use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::image::{quantize_level, EvStep, ImageBuf, LdrStack, RadianceMap};
use crate::synth::ForwardCrf;

pub const LEVELS: usize = 256;
pub const ANCHOR_LEVEL: usize = 128;
pub const DEFAULT_LAMBDA: f64 = 100.0;
pub const DEFAULT_SAMPLES: usize = 200;

/// Hat weight over 8-bit levels: `z + 1` below the midpoint, `256 − z` above.
pub fn weight_hat(z: usize) -> Result<f64> {
    if z > 255 {
        return Err(Error::InvalidArgument(format!("level {z} outside 0..=255")));
    }
    Ok(hat(z as f64))
}

#[inline]
fn hat(z: f64) -> f64 {
    if z <= 127.5 {
        z + 1.0
    } else {
        256.0 - z
    }
}

/// Recovered inverse response, one table per channel.
#[derive(Clone, Debug, PartialEq)]
pub struct InverseCrf {
    pub g: [Vec<f64>; 3],
    pub lambda: f64,
    pub n_samples: usize,
}

impl InverseCrf {
    /// Tabulates a known response (level 0 is evaluated at half a level).
    pub fn from_forward(crf: ForwardCrf) -> Self {
        let table: Vec<f64> = (0..LEVELS)
            .map(|z| crf.ln_exposure((z as f64).max(0.5) / 255.0))
            .collect();
        let anchor = table[ANCHOR_LEVEL];
        let table: Vec<f64> = table.iter().map(|v| v - anchor).collect();
        Self { g: [table.clone(), table.clone(), table], lambda: 0.0, n_samples: 0 }
    }

    /// `Σ_z g″(z)²` over interior levels.
    pub fn smoothness_energy(&self, channel: usize) -> f64 {
        self.g[channel]
            .windows(3)
            .map(|w| (w[0] - 2.0 * w[1] + w[2]).powi(2))
            .sum()
    }

    pub fn is_monotone(&self, channel: usize) -> bool {
        self.g[channel].windows(2).all(|w| w[1] >= w[0])
    }

    /// `level,g_r,g_g,g_b` rows.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("level,g_r,g_g,g_b\n");
        for z in 0..LEVELS {
            writeln!(s, "{z},{:.9},{:.9},{:.9}", self.g[0][z], self.g[1][z], self.g[2][z]).unwrap();
        }
        s
    }
}

/// Maps a display value to log exposure for one channel.
pub trait ResponseInverse {
    fn ln_exposure(&self, channel: usize, value: f64) -> f64;
}

impl ResponseInverse for InverseCrf {
    /// Linear interpolation between table entries at `v·255`.
    fn ln_exposure(&self, channel: usize, value: f64) -> f64 {
        let z = (value * 255.0).clamp(0.0, 255.0);
        let i = (z.floor() as usize).min(LEVELS - 2);
        let f = z - i as f64;
        let g = &self.g[channel];
        g[i] + f * (g[i + 1] - g[i])
    }
}

impl ResponseInverse for ForwardCrf {
    fn ln_exposure(&self, _channel: usize, value: f64) -> f64 {
        ForwardCrf::ln_exposure(self, value.max(0.5 / 255.0))
    }
}

/// Sampled levels `levels[sample][exposure][channel]` at shared coordinates.
#[derive(Clone, Debug, PartialEq)]
pub struct PixelSamples {
    pub levels: Vec<Vec<[u8; 3]>>,
    pub evs: Vec<EvStep>,
    pub coords: Vec<(usize, usize)>,
}

impl PixelSamples {
    pub fn len(&self) -> usize {
        self.coords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }
}

/// Smallest sample count that overdetermines the 255 free table entries.
pub fn min_samples(exposures: usize) -> usize {
    if exposures < 2 {
        usize::MAX
    } else {
        (LEVELS - 1).div_ceil(exposures - 1)
    }
}

/// Draws `n_samples` stratified locations shared by every exposure.
///
/// The image is cut into a near-square grid of at least `n_samples` cells;
/// cells are visited in a shuffled order and inside each cell eight random
/// candidates compete, the one whose reference-exposure luma is closest to
/// mid-grey winning.
pub fn sample_pixels(stack: &LdrStack, n_samples: usize, rng: &mut impl Rng) -> Result<PixelSamples> {
    if stack.len() < 2 {
        return Err(Error::InvalidArgument("response recovery needs at least two exposures".into()));
    }
    let need = min_samples(stack.len());
    if n_samples < need {
        return Err(Error::InsufficientSamples { got: n_samples, need });
    }
    let (h, w) = stack.dims();
    if n_samples > h * w {
        return Err(Error::InvalidArgument(format!(
            "{n_samples} samples requested from a {h}x{w} image"
        )));
    }
    let aspect = w as f64 / h as f64;
    let gy = (((n_samples as f64) / aspect).sqrt().ceil() as usize).clamp(1, h);
    let gx = n_samples.div_ceil(gy).clamp(1, w);
    let gy = n_samples.div_ceil(gx).clamp(1, h);
    let mut cells: Vec<(usize, usize)> = (0..gy).flat_map(|cy| (0..gx).map(move |cx| (cy, cx))).collect();
    // Fisher-Yates with the caller's generator.
    for i in (1..cells.len()).rev() {
        let j = rng.random_range(0..=i);
        cells.swap(i, j);
    }
    let reference = &stack.reference().1;
    let mut taken = std::collections::HashSet::new();
    let mut coords = Vec::with_capacity(n_samples);
    for &(cy, cx) in cells.iter().cycle().take(cells.len() * 4) {
        if coords.len() == n_samples {
            break;
        }
        let (y0, y1) = (cy * h / gy, ((cy + 1) * h / gy).max(cy * h / gy + 1));
        let (x0, x1) = (cx * w / gx, ((cx + 1) * w / gx).max(cx * w / gx + 1));
        let mut best: Option<((usize, usize), f64)> = None;
        for _ in 0..8 {
            let p = (rng.random_range(y0..y1), rng.random_range(x0..x1));
            if taken.contains(&p) {
                continue;
            }
            let px = reference.buf().pixel(p.0, p.1);
            let d = (crate::image::rec709_luma(px) - 0.5).abs();
            if best.is_none_or(|(_, bd)| d < bd) {
                best = Some((p, d));
            }
        }
        if let Some((p, _)) = best {
            taken.insert(p);
            coords.push(p);
        }
    }
    if coords.len() < n_samples {
        return Err(Error::InsufficientSamples { got: coords.len(), need: n_samples });
    }
    let levels = coords
        .iter()
        .map(|&(y, x)| {
            stack
                .entries()
                .iter()
                .map(|(_, img)| {
                    let p = img.buf().pixel(y, x);
                    [quantize_level(p[0]), quantize_level(p[1]), quantize_level(p[2])]
                })
                .collect()
        })
        .collect();
    Ok(PixelSamples { levels, evs: stack.evs(), coords })
}

/// Seeded convenience wrapper around [`sample_pixels`].
pub fn sample_pixels_seeded(stack: &LdrStack, n_samples: usize, seed: u64) -> Result<PixelSamples> {
    sample_pixels(stack, n_samples, &mut ChaCha8Rng::seed_from_u64(seed))
}

/// Solves for the inverse response of each channel.
///
/// Unknowns are the 256 table entries followed by one log radiance per
/// sample. Rows are `w(Z)(g(Z) − ln E_i) = w(Z)·s_j·ln 2`, the anchor
/// `g(128) = 0`, and `√λ·w(z)·(g(z−1) − 2g(z) + g(z+1)) = 0`. The normal
/// equations are assembled directly from the sparse rows.
pub fn solve_inverse_crf(samples: &PixelSamples, lambda_smooth: f64) -> Result<InverseCrf> {
    if !(lambda_smooth >= 0.0 && lambda_smooth.is_finite()) {
        return Err(Error::InvalidArgument(format!("smoothness weight {lambda_smooth} must be >= 0")));
    }
    let p = samples.evs.len();
    let n = samples.len();
    if p < 2 {
        return Err(Error::InvalidArgument("need at least two exposures".into()));
    }
    let need = min_samples(p);
    if n < need {
        return Err(Error::InsufficientSamples { got: n, need });
    }
    let g: Vec<Vec<f64>> = (0..3)
        .map(|c| solve_channel(samples, c, lambda_smooth))
        .collect::<Result<_>>()?;
    let mut it = g.into_iter();
    Ok(InverseCrf {
        g: [it.next().unwrap(), it.next().unwrap(), it.next().unwrap()],
        lambda: lambda_smooth,
        n_samples: n,
    })
}

fn normal_equations(samples: &PixelSamples, channel: usize, lambda: f64) -> (DMatrix<f64>, DVector<f64>) {
    let n = samples.len();
    let dim = LEVELS + n;
    let mut ata = DMatrix::<f64>::zeros(dim, dim);
    let mut atb = DVector::<f64>::zeros(dim);
    let mut add_row = |entries: &[(usize, f64)], rhs: f64| {
        for &(i, a) in entries {
            atb[i] += a * rhs;
            for &(j, b) in entries {
                ata[(i, j)] += a * b;
            }
        }
    };
    for (i, row) in samples.levels.iter().enumerate() {
        for (j, lv) in row.iter().enumerate() {
            let z = lv[channel] as usize;
            let wz = hat(z as f64);
            add_row(&[(z, wz), (LEVELS + i, -wz)], wz * samples.evs[j].value() * LN_2);
        }
    }
    add_row(&[(ANCHOR_LEVEL, 1.0)], 0.0);
    let sl = lambda.sqrt();
    if sl > 0.0 {
        for z in 1..LEVELS - 1 {
            let k = sl * hat(z as f64);
            add_row(&[(z - 1, k), (z, -2.0 * k), (z + 1, k)], 0.0);
        }
    }
    (ata, atb)
}

fn solve_channel(samples: &PixelSamples, channel: usize, lambda: f64) -> Result<Vec<f64>> {
    // Which combinations are determined does not depend on the size of a
    // positive λ, so rank is judged at λ = 1 where the system is well scaled.
    let probe = if lambda > 0.0 { 1.0 } else { 0.0 };
    let (check, _) = normal_equations(samples, channel, probe);
    let sv = check.singular_values();
    let smax = sv.max();
    let smin = sv.min();
    if !(smax > 0.0) || smin <= smax * 1e-14 {
        return Err(Error::RankDeficient(format!(
            "channel {channel}: singular value ratio {:.3e}",
            if smax > 0.0 { smin / smax } else { 0.0 }
        )));
    }
    let (ata, atb) = normal_equations(samples, channel, lambda);
    let x = ata
        .clone()
        .cholesky()
        .map(|ch| ch.solve(&atb))
        .or_else(|| ata.lu().solve(&atb))
        .ok_or_else(|| Error::RankDeficient(format!("channel {channel}: factorisation failed")))?;
    let anchor = x[ANCHOR_LEVEL];
    Ok((0..LEVELS).map(|z| x[z] - anchor).collect())
}

/// Merge weight of a display value: the hat at `v·255`, zero when the value
/// rounds to level 0 or 255.
#[inline]
pub fn merge_weight(v: f64) -> f64 {
    let z = v * 255.0;
    if z < 0.5 || z >= 254.5 {
        0.0
    } else {
        hat(z)
    }
}

/// Fuses an aligned stack into relative radiance.
///
/// Where every exposure is clipped the value comes from the exposure whose
/// level lies farthest from either clip boundary.
pub fn merge_radiance(stack: &LdrStack, crf: &impl ResponseInverse) -> Result<RadianceMap> {
    if stack.is_empty() {
        return Err(Error::InvalidArgument("cannot merge an empty stack".into()));
    }
    let (h, w) = stack.dims();
    let entries = stack.entries();
    let shifts: Vec<f64> = entries.iter().map(|(ev, _)| ev.value() * LN_2).collect();
    let mut out = vec![0.0; h * w * 3];
    let mut weights = vec![0.0; entries.len()];
    for (k, o) in out.iter_mut().enumerate() {
        let c = k % 3;
        let mut total = 0.0;
        for (j, (_, img)) in entries.iter().enumerate() {
            weights[j] = merge_weight(img.data()[k]);
            total += weights[j];
        }
        let ln_e = if total > 0.0 {
            entries
                .iter()
                .zip(&weights)
                .zip(&shifts)
                .filter(|((_, wj), _)| **wj > 0.0)
                .map(|(((_, img), wj), sh)| (wj / total) * (crf.ln_exposure(c, img.data()[k]) - sh))
                .sum()
        } else {
            // Ties go to the darkest exposure for bright pixels and the
            // brightest one for dark pixels.
            let (j, _) = entries
                .iter()
                .enumerate()
                .map(|(j, (_, img))| {
                    let z = img.data()[k] * 255.0;
                    let order = if z > 127.5 { -(j as f64) } else { j as f64 };
                    (j, (z.min(255.0 - z), order))
                })
                .max_by(|a, b| a.1 .0.total_cmp(&b.1 .0).then(a.1 .1.total_cmp(&b.1 .1)))
                .expect("non-empty stack");
            crf.ln_exposure(c, entries[j].1.data()[k]) - shifts[j]
        };
        *o = ln_e.exp().max(f64::MIN_POSITIVE);
    }
    RadianceMap::new(ImageBuf::new(h, w, out)?)
}

/// Recovers the response from the stack and merges it in one call.
pub fn fuse_stack(
    stack: &LdrStack,
    n_samples: usize,
    lambda_smooth: f64,
    seed: u64,
) -> Result<(InverseCrf, RadianceMap)> {
    let samples = sample_pixels_seeded(stack, n_samples, seed)?;
    let crf = solve_inverse_crf(&samples, lambda_smooth)?;
    let rad = merge_radiance(stack, &crf)?;
    Ok((crf, rad))
}
