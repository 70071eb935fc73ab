//! PSNR, SSIM and MS-SSIM.
//!
//! PSNR is computed over all RGB values with unit dynamic range. The SSIM
//! family works on Rec. 709 luma with an 11×11 Gaussian window (σ = 1.5) and
//! averages over windows that lie fully inside the image.

use crate::error::{Error, Result};
use crate::image::{LdrImage, RadianceMap};

pub const PSNR_CAP: f64 = 100.0;
pub const WINDOW: usize = 11;
pub const WINDOW_SIGMA: f64 = 1.5;
pub const K1: f64 = 0.01;
pub const K2: f64 = 0.03;
pub const MS_SSIM_WEIGHTS: [f64; 5] = [0.0448, 0.2856, 0.3001, 0.2363, 0.1333];

pub fn mse(a: &LdrImage, b: &LdrImage) -> Result<f64> {
    a.ensure_same_dims(b)?;
    Ok(mse_slices(a.data(), b.data()))
}

fn mse_slices(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / a.len() as f64
}

/// `10·log10(peak² / MSE)`, capped at [`PSNR_CAP`].
pub fn psnr_with_peak(a: &[f64], b: &[f64], peak: f64) -> Result<f64> {
    if a.len() != b.len() || a.is_empty() {
        return Err(Error::DimensionMismatch(format!("{} vs {} values", a.len(), b.len())));
    }
    let m = mse_slices(a, b);
    if m == 0.0 {
        return Ok(PSNR_CAP);
    }
    Ok((10.0 * (peak * peak / m).log10()).min(PSNR_CAP))
}

pub fn psnr(a: &LdrImage, b: &LdrImage) -> Result<f64> {
    a.ensure_same_dims(b)?;
    psnr_with_peak(a.data(), b.data(), 1.0)
}

/// Normalised 1-D Gaussian taps.
pub fn gaussian_window() -> [f64; WINDOW] {
    let c = (WINDOW / 2) as f64;
    let mut w = [0.0; WINDOW];
    for (i, v) in w.iter_mut().enumerate() {
        let d = i as f64 - c;
        *v = (-d * d / (2.0 * WINDOW_SIGMA * WINDOW_SIGMA)).exp();
    }
    let s: f64 = w.iter().sum();
    w.iter_mut().for_each(|v| *v /= s);
    w
}

/// Single-channel plane.
#[derive(Clone, Debug)]
struct Plane {
    h: usize,
    w: usize,
    v: Vec<f64>,
}

impl Plane {
    /// Valid-mode separable Gaussian filter.
    fn blur(&self, win: &[f64; WINDOW]) -> Plane {
        let ow = self.w + 1 - WINDOW;
        let oh = self.h + 1 - WINDOW;
        let mut tmp = vec![0.0; self.h * ow];
        for y in 0..self.h {
            let row = &self.v[y * self.w..(y + 1) * self.w];
            for x in 0..ow {
                tmp[y * ow + x] = win.iter().zip(&row[x..x + WINDOW]).map(|(k, v)| k * v).sum();
            }
        }
        let mut out = vec![0.0; oh * ow];
        for y in 0..oh {
            for (k, &wt) in win.iter().enumerate() {
                let src = &tmp[(y + k) * ow..(y + k + 1) * ow];
                for (o, s) in out[y * ow..(y + 1) * ow].iter_mut().zip(src) {
                    *o += wt * s;
                }
            }
        }
        Plane { h: oh, w: ow, v: out }
    }

    fn zip_map(&self, other: &Plane, f: impl Fn(f64, f64) -> f64) -> Plane {
        Plane { h: self.h, w: self.w, v: self.v.iter().zip(&other.v).map(|(a, b)| f(*a, *b)).collect() }
    }

    /// 2×2 box average; odd sizes replicate the last row/column.
    fn downsample(&self) -> Plane {
        let (oh, ow) = (self.h.div_ceil(2), self.w.div_ceil(2));
        let at = |y: usize, x: usize| self.v[y.min(self.h - 1) * self.w + x.min(self.w - 1)];
        let mut v = Vec::with_capacity(oh * ow);
        for y in 0..oh {
            for x in 0..ow {
                let (y0, x0) = (2 * y, 2 * x);
                v.push(0.25 * (at(y0, x0) + at(y0, x0 + 1) + at(y0 + 1, x0) + at(y0 + 1, x0 + 1)));
            }
        }
        Plane { h: oh, w: ow, v }
    }
}

/// Mean SSIM and mean contrast-structure term over valid windows.
fn ssim_terms(a: &Plane, b: &Plane) -> (f64, f64) {
    let win = gaussian_window();
    let c1 = K1 * K1;
    let c2 = K2 * K2;
    let mu_a = a.blur(&win);
    let mu_b = b.blur(&win);
    let aa = a.zip_map(a, |x, y| x * y).blur(&win);
    let bb = b.zip_map(b, |x, y| x * y).blur(&win);
    let ab = a.zip_map(b, |x, y| x * y).blur(&win);
    let n = mu_a.v.len() as f64;
    let (mut s_sum, mut cs_sum) = (0.0, 0.0);
    for i in 0..mu_a.v.len() {
        let (ma, mb) = (mu_a.v[i], mu_b.v[i]);
        let va = aa.v[i] - ma * ma;
        let vb = bb.v[i] - mb * mb;
        let cov = ab.v[i] - ma * mb;
        let cs = (2.0 * cov + c2) / (va + vb + c2);
        let l = (2.0 * ma * mb + c1) / (ma * ma + mb * mb + c1);
        s_sum += l * cs;
        cs_sum += cs;
    }
    (s_sum / n, cs_sum / n)
}

fn luma_planes(a: &LdrImage, b: &LdrImage) -> Result<(Plane, Plane)> {
    a.ensure_same_dims(b)?;
    let (h, w) = a.dims();
    Ok((Plane { h, w, v: a.luma() }, Plane { h, w, v: b.luma() }))
}

pub fn ssim(a: &LdrImage, b: &LdrImage) -> Result<f64> {
    let (pa, pb) = luma_planes(a, b)?;
    if pa.h < WINDOW || pa.w < WINDOW {
        return Err(Error::InvalidArgument(format!(
            "SSIM needs at least {WINDOW}x{WINDOW} pixels, got {}x{}",
            pa.h, pa.w
        )));
    }
    Ok(ssim_terms(&pa, &pb).0)
}

/// Number of MS-SSIM scales usable for an `h×w` image: the largest `m ≤ 5`
/// for which `m − 1` halvings (rounding up) leave both sides ≥ 11.
pub fn ms_ssim_scales(h: usize, w: usize) -> usize {
    let mut side = h.min(w);
    let mut m = 0;
    while m < MS_SSIM_WEIGHTS.len() && side >= WINDOW {
        m += 1;
        side = side.div_ceil(2);
    }
    m
}

/// Multi-scale SSIM. Images smaller than 161 px per side use fewer scales
/// (see [`ms_ssim_scales`]). The exponents used are always the leading
/// weights renormalised to sum to 1.
pub fn ms_ssim(a: &LdrImage, b: &LdrImage) -> Result<f64> {
    let (mut pa, mut pb) = luma_planes(a, b)?;
    let m = ms_ssim_scales(pa.h, pa.w);
    if m == 0 {
        return Err(Error::InvalidArgument(format!(
            "MS-SSIM needs at least {WINDOW}x{WINDOW} pixels, got {}x{}",
            pa.h, pa.w
        )));
    }
    let wsum: f64 = MS_SSIM_WEIGHTS[..m].iter().sum();
    let mut score = 1.0;
    for (j, w) in MS_SSIM_WEIGHTS[..m].iter().enumerate() {
        let (s, cs) = ssim_terms(&pa, &pb);
        let term = if j + 1 == m { s } else { cs };
        score *= term.max(0.0).powf(w / wsum);
        if j + 1 < m {
            pa = pa.downsample();
            pb = pb.downsample();
        }
    }
    Ok(score)
}

/// PSNR between log radiances after removing the mean log offset, so the
/// arbitrary scale of a recovered map does not count as error. The peak is
/// the log range of `reference`.
pub fn log_radiance_psnr(estimate: &RadianceMap, reference: &RadianceMap) -> Result<f64> {
    if estimate.dims() != reference.dims() {
        return Err(Error::DimensionMismatch(format!("{:?} vs {:?}", estimate.dims(), reference.dims())));
    }
    let le: Vec<f64> = estimate.data().iter().map(|v| v.ln()).collect();
    let lr: Vec<f64> = reference.data().iter().map(|v| v.ln()).collect();
    let offset = le.iter().zip(&lr).map(|(a, b)| a - b).sum::<f64>() / le.len() as f64;
    let aligned: Vec<f64> = le.iter().map(|v| v - offset).collect();
    let (lo, hi) = lr.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    let peak = if hi > lo { hi - lo } else { 1.0 };
    psnr_with_peak(&aligned, &lr, peak)
}
