//! Image and exposure-stack types plus 8-bit file IO.
//!
//! All images are stored as interleaved `H×W×3` `f64` buffers. An
//! [`LdrImage`] is display-referred and lives in `[0, 1]`; a
//! [`RadianceMap`] holds strictly positive, scale-free linear radiance.

use std::fmt;
use std::path::Path;

use ::image::{ColorType, ImageReader, RgbImage};

use crate::error::{Error, Result};
use crate::resample::{self, ResizeMethod};

/// Interleaved RGB buffer shared by the LDR and radiance types.
#[derive(Clone, Debug, PartialEq)]
pub struct ImageBuf {
    height: usize,
    width: usize,
    data: Vec<f64>,
}

impl ImageBuf {
    pub fn new(height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::InvalidArgument(format!(
                "image dimensions must be positive, got {height}x{width}"
            )));
        }
        if data.len() != height * width * 3 {
            return Err(Error::DimensionMismatch(format!(
                "buffer of {} values does not match {height}x{width}x3",
                data.len()
            )));
        }
        Ok(Self { height, width, data })
    }

    pub fn filled(height: usize, width: usize, value: [f64; 3]) -> Result<Self> {
        let mut data = Vec::with_capacity(height * width * 3);
        for _ in 0..height * width {
            data.extend_from_slice(&value);
        }
        Self::new(height, width, data)
    }

    pub fn from_fn(
        height: usize,
        width: usize,
        mut f: impl FnMut(usize, usize) -> [f64; 3],
    ) -> Result<Self> {
        let mut data = Vec::with_capacity(height * width * 3);
        for y in 0..height {
            for x in 0..width {
                data.extend_from_slice(&f(y, x));
            }
        }
        Self::new(height, width, data)
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    #[inline]
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize, c: usize) -> f64 {
        self.data[(y * self.width + x) * 3 + c]
    }

    #[inline]
    pub fn set(&mut self, y: usize, x: usize, c: usize, v: f64) {
        self.data[(y * self.width + x) * 3 + c] = v;
    }

    #[inline]
    pub fn pixel(&self, y: usize, x: usize) -> [f64; 3] {
        let i = (y * self.width + x) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    pub fn pixels(&self) -> impl Iterator<Item = [f64; 3]> + '_ {
        self.data.chunks_exact(3).map(|p| [p[0], p[1], p[2]])
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            height: self.height,
            width: self.width,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Separable resampling to `target_h × target_w`.
    pub fn resized(&self, target_h: usize, target_w: usize, method: ResizeMethod) -> Result<Self> {
        if target_h == 0 || target_w == 0 {
            return Err(Error::InvalidArgument(format!(
                "resize target must be positive, got {target_h}x{target_w}"
            )));
        }
        let data = resample::resize_interleaved(
            &self.data,
            self.height,
            self.width,
            3,
            target_h,
            target_w,
            method,
        );
        Self::new(target_h, target_w, data)
    }

    fn ensure_same_dims(&self, other: &Self) -> Result<()> {
        if self.dims() != other.dims() {
            return Err(Error::DimensionMismatch(format!(
                "{}x{} vs {}x{}",
                self.height, self.width, other.height, other.width
            )));
        }
        Ok(())
    }
}

/// Display-referred image with values in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct LdrImage(ImageBuf);

impl LdrImage {
    pub fn new(buf: ImageBuf) -> Result<Self> {
        if let Some(v) = buf.data.iter().find(|v| !v.is_finite() || **v < 0.0 || **v > 1.0) {
            return Err(Error::InvalidArgument(format!(
                "LDR pixel value {v} outside [0, 1]"
            )));
        }
        Ok(Self(buf))
    }

    /// Builds an image by clamping every value into `[0, 1]` (NaN maps to 0).
    pub fn from_clamped(mut buf: ImageBuf) -> Self {
        for v in buf.data.iter_mut() {
            *v = if v.is_nan() { 0.0 } else { v.clamp(0.0, 1.0) };
        }
        Self(buf)
    }

    pub fn from_data(height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        Self::new(ImageBuf::new(height, width, data)?)
    }

    pub fn filled(height: usize, width: usize, value: [f64; 3]) -> Result<Self> {
        Self::new(ImageBuf::filled(height, width, value)?)
    }

    pub fn buf(&self) -> &ImageBuf {
        &self.0
    }

    pub fn into_buf(self) -> ImageBuf {
        self.0
    }

    pub fn height(&self) -> usize {
        self.0.height
    }

    pub fn width(&self) -> usize {
        self.0.width
    }

    pub fn dims(&self) -> (usize, usize) {
        self.0.dims()
    }

    pub fn data(&self) -> &[f64] {
        &self.0.data
    }

    pub fn get(&self, y: usize, x: usize, c: usize) -> f64 {
        self.0.get(y, x, c)
    }

    pub fn ensure_same_dims(&self, other: &Self) -> Result<()> {
        self.0.ensure_same_dims(&other.0)
    }

    /// Resampled copy, clamped back into `[0, 1]`.
    pub fn resize(&self, target_h: usize, target_w: usize, method: ResizeMethod) -> Result<Self> {
        Ok(Self::from_clamped(self.0.resized(target_h, target_w, method)?))
    }

    /// Rec. 709 luma of the display-referred values.
    pub fn luma(&self) -> Vec<f64> {
        self.0.pixels().map(rec709_luma).collect()
    }

    pub fn mean_luma(&self) -> f64 {
        let l = self.luma();
        l.iter().sum::<f64>() / l.len() as f64
    }

    /// 8-bit levels, `round(v·255)` with halves rounded up.
    pub fn to_levels(&self) -> Vec<u8> {
        self.0.data.iter().map(|&v| quantize_level(v)).collect()
    }

    pub fn from_levels(height: usize, width: usize, levels: &[u8]) -> Result<Self> {
        let data = levels.iter().map(|&l| l as f64 / 255.0).collect();
        Self::from_data(height, width, data)
    }

    /// Snaps every value to the nearest 8-bit level.
    pub fn quantized(&self) -> Self {
        Self(self.0.map(|v| quantize_level(v) as f64 / 255.0))
    }
}

/// Strictly positive linear radiance (relative, scale-free).
#[derive(Clone, Debug, PartialEq)]
pub struct RadianceMap(ImageBuf);

impl RadianceMap {
    pub fn new(buf: ImageBuf) -> Result<Self> {
        if let Some(v) = buf.data.iter().find(|v| !v.is_finite() || **v <= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "radiance value {v} is not finite and positive"
            )));
        }
        Ok(Self(buf))
    }

    pub fn from_data(height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        Self::new(ImageBuf::new(height, width, data)?)
    }

    pub fn buf(&self) -> &ImageBuf {
        &self.0
    }

    pub fn height(&self) -> usize {
        self.0.height
    }

    pub fn width(&self) -> usize {
        self.0.width
    }

    pub fn dims(&self) -> (usize, usize) {
        self.0.dims()
    }

    pub fn data(&self) -> &[f64] {
        &self.0.data
    }

    pub fn get(&self, y: usize, x: usize, c: usize) -> f64 {
        self.0.get(y, x, c)
    }

    /// Multiplies every value by `factor` (must be positive).
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        Self::new(self.0.map(|v| v * factor))
    }
}

#[inline]
pub fn rec709_luma(p: [f64; 3]) -> f64 {
    0.2126 * p[0] + 0.7152 * p[1] + 0.0722 * p[2]
}

#[inline]
pub fn quantize_level(v: f64) -> u8 {
    (v * 255.0 + 0.5).floor().clamp(0.0, 255.0) as u8
}

/// Relative exposure value in log2 units.
#[derive(Clone, Copy, Debug, PartialEq, PartialOrd)]
pub struct EvStep(f64);

impl EvStep {
    /// Range covered by training data; values outside are extrapolation.
    pub const SUPPORTED: (f64, f64) = (-3.0, 3.0);

    pub const ZERO: EvStep = EvStep(0.0);

    pub fn new(value: f64) -> Result<Self> {
        if !value.is_finite() {
            return Err(Error::InvalidEv(format!("{value} is not finite")));
        }
        // -0.0 and 0.0 must compare and print identically.
        Ok(Self(if value == 0.0 { 0.0 } else { value }))
    }

    #[inline]
    pub fn value(self) -> f64 {
        self.0
    }

    pub fn is_zero(self) -> bool {
        self.0 == 0.0
    }

    pub fn in_supported_range(self) -> bool {
        self.0 >= Self::SUPPORTED.0 && self.0 <= Self::SUPPORTED.1
    }

    /// Exposure-time multiplier `2^s`.
    pub fn exposure_ratio(self) -> f64 {
        self.0.exp2()
    }

    /// Parses a signed decimal such as `-2.5`, `0` or `+3`.
    pub fn parse(text: &str) -> Result<Self> {
        let t = text.trim();
        let v: f64 = t
            .parse()
            .map_err(|_| Error::InvalidEv(format!("cannot parse '{text}' as an EV")))?;
        Self::new(v)
    }

    /// Parses the EV encoded in a file stem, e.g. `scene/+1.5.png`.
    pub fn from_path(path: &Path) -> Result<Self> {
        let stem = path
            .file_stem()
            .and_then(|s| s.to_str())
            .ok_or_else(|| Error::InvalidEv(format!("no file stem in {}", path.display())))?;
        Self::parse(stem).map_err(|_| {
            Error::InvalidEv(format!("file name {} does not encode an EV", path.display()))
        })
    }

    /// Label used for file names: `0`, `+1`, `-2.5`.
    pub fn label(self) -> String {
        if self.0 == 0.0 {
            "0".to_string()
        } else {
            format!("{:+}", self.0)
        }
    }
}

impl fmt::Display for EvStep {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

/// Aligned exposures of one scene, ordered by strictly increasing EV.
#[derive(Clone, Debug)]
pub struct LdrStack {
    entries: Vec<(EvStep, LdrImage)>,
}

impl LdrStack {
    /// Sorts the entries by EV and validates uniqueness and alignment.
    pub fn new(mut entries: Vec<(EvStep, LdrImage)>) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::InvalidArgument("an LDR stack needs at least one image".into()));
        }
        entries.sort_by(|a, b| a.0.value().total_cmp(&b.0.value()));
        for w in entries.windows(2) {
            if w[0].0 == w[1].0 {
                return Err(Error::InvalidArgument(format!("duplicate EV {} in stack", w[0].0)));
            }
        }
        let dims = entries[0].1.dims();
        for (ev, img) in &entries {
            if img.dims() != dims {
                return Err(Error::DimensionMismatch(format!(
                    "stack image at EV {ev} is {}x{}, expected {}x{}",
                    img.height(),
                    img.width(),
                    dims.0,
                    dims.1
                )));
            }
        }
        Ok(Self { entries })
    }

    pub fn entries(&self) -> &[(EvStep, LdrImage)] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn evs(&self) -> Vec<EvStep> {
        self.entries.iter().map(|e| e.0).collect()
    }

    pub fn dims(&self) -> (usize, usize) {
        self.entries[0].1.dims()
    }

    pub fn get(&self, ev: EvStep) -> Option<&LdrImage> {
        self.entries.iter().find(|e| e.0 == ev).map(|e| &e.1)
    }

    /// Entry whose EV is closest to zero.
    pub fn reference(&self) -> &(EvStep, LdrImage) {
        self.entries
            .iter()
            .min_by(|a, b| a.0.value().abs().total_cmp(&b.0.value().abs()))
            .expect("stack is never empty")
    }

    /// Sub-stack restricted to the given EVs (each must be present).
    pub fn select(&self, evs: &[EvStep]) -> Result<Self> {
        let mut out = Vec::with_capacity(evs.len());
        for &ev in evs {
            let img = self
                .get(ev)
                .ok_or_else(|| Error::InvalidEv(format!("EV {ev} not present in stack")))?;
            out.push((ev, img.clone()));
        }
        Self::new(out)
    }
}

/// Reads an 8-bit, 3-channel PNG or JPEG into `[0, 1]`.
pub fn load_ldr(path: impl AsRef<Path>) -> Result<LdrImage> {
    let path = path.as_ref();
    if !path.exists() {
        return Err(Error::NotFound(path.to_path_buf()));
    }
    let reader = ImageReader::open(path)
        .map_err(|e| Error::io(path, e))?
        .with_guessed_format()
        .map_err(|e| Error::io(path, e))?;
    let img = reader.decode().map_err(|source| match source {
        ::image::ImageError::Unsupported(u) => Error::UnsupportedFormat {
            path: path.to_path_buf(),
            reason: u.to_string(),
        },
        source => Error::Codec { path: path.to_path_buf(), source },
    })?;
    match img.color() {
        ColorType::Rgb8 => {}
        other => {
            return Err(Error::UnsupportedFormat {
                path: path.to_path_buf(),
                reason: format!("expected 8-bit RGB, found {other:?}"),
            })
        }
    }
    let rgb = img.into_rgb8();
    let (w, h) = rgb.dimensions();
    LdrImage::from_levels(h as usize, w as usize, rgb.as_raw())
}

/// Writes an 8-bit image; the format follows the file extension.
pub fn save_ldr(image: &LdrImage, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let levels = image.to_levels();
    let rgb = RgbImage::from_raw(image.width() as u32, image.height() as u32, levels)
        .expect("level buffer matches dimensions");
    rgb.save(path).map_err(|source| match source {
        ::image::ImageError::IoError(e) => Error::io(path, e),
        source => Error::Codec { path: path.to_path_buf(), source },
    })
}
