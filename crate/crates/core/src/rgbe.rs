//! Radiance RGBE (`.hdr`) files with flat, uncompressed scanlines.
//!
//! Layout written:
//!
//! ```text
//! #?RADIANCE
//! FORMAT=32-bit_rle_rgbe
//!
//! -Y <height> +X <width>
//! <height·width four-byte pixels: R G B E>
//! ```
//!
//! Run-length encoded scanlines are rejected on read.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::image::{ImageBuf, RadianceMap};

/// Encodes one linear RGB triple as shared-exponent bytes.
pub fn encode_pixel(rgb: [f64; 3]) -> [u8; 4] {
    let v = rgb[0].max(rgb[1]).max(rgb[2]);
    if !(v > 1e-32) {
        return [0, 0, 0, 0];
    }
    let (mantissa, exp) = frexp(v);
    let scale = mantissa * 256.0 / v;
    let byte = |c: f64| (c.max(0.0) * scale).floor().min(255.0) as u8;
    [byte(rgb[0]), byte(rgb[1]), byte(rgb[2]), (exp + 128) as u8]
}

/// Decodes shared-exponent bytes, reconstructing at the centre of each bin.
pub fn decode_pixel(p: [u8; 4]) -> [f64; 3] {
    if p[3] == 0 {
        return [0.0; 3];
    }
    let f = ldexp(1.0, p[3] as i32 - (128 + 8));
    [(p[0] as f64 + 0.5) * f, (p[1] as f64 + 0.5) * f, (p[2] as f64 + 0.5) * f]
}

/// `v = m · 2^e` with `m ∈ [0.5, 1)` for finite positive `v`.
fn frexp(v: f64) -> (f64, i32) {
    let mut e = v.log2().floor() as i32 + 1;
    let mut m = v / ldexp(1.0, e);
    // Guard the floor against rounding at exact powers of two.
    if m >= 1.0 {
        m /= 2.0;
        e += 1;
    } else if m < 0.5 {
        m *= 2.0;
        e -= 1;
    }
    (m, e)
}

fn ldexp(x: f64, e: i32) -> f64 {
    x * (e as f64).exp2()
}

pub fn encode_rgbe(rad: &ImageBuf) -> Vec<u8> {
    let mut out = Vec::with_capacity(64 + rad.height() * rad.width() * 4);
    out.extend_from_slice(b"#?RADIANCE\nFORMAT=32-bit_rle_rgbe\n\n");
    out.extend_from_slice(format!("-Y {} +X {}\n", rad.height(), rad.width()).as_bytes());
    for p in rad.pixels() {
        out.extend_from_slice(&encode_pixel(p));
    }
    out
}

pub fn write_radiance_rgbe(rad: &RadianceMap, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode_rgbe(rad.buf());
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&bytes).map_err(|e| Error::io(path, e))
}

/// Parses an RGBE file into a raw buffer; zero pixels stay zero.
pub fn decode_rgbe(bytes: &[u8], path: &Path) -> Result<ImageBuf> {
    let bad = |reason: &str| Error::MalformedRgbe { path: path.to_path_buf(), reason: reason.into() };
    if !bytes.starts_with(b"#?") {
        return Err(bad("missing #? signature"));
    }
    let mut pos = 0;
    let next_line = |pos: &mut usize| -> Option<&[u8]> {
        let start = *pos;
        let end = bytes[start..].iter().position(|&b| b == b'\n')? + start;
        *pos = end + 1;
        Some(&bytes[start..end])
    };
    let mut format_ok = true;
    loop {
        let line = next_line(&mut pos).ok_or_else(|| bad("truncated header"))?;
        if line.is_empty() {
            break;
        }
        if let Some(fmt) = line.strip_prefix(b"FORMAT=") {
            format_ok = fmt == b"32-bit_rle_rgbe";
        }
    }
    if !format_ok {
        return Err(bad("unsupported FORMAT (only 32-bit_rle_rgbe)"));
    }
    let res = next_line(&mut pos).ok_or_else(|| bad("missing resolution line"))?;
    let res = std::str::from_utf8(res).map_err(|_| bad("resolution line is not text"))?;
    let parts: Vec<&str> = res.split_whitespace().collect();
    if parts.len() != 4 || parts[0] != "-Y" || parts[2] != "+X" {
        return Err(bad("only '-Y h +X w' orientation is supported"));
    }
    let h: usize = parts[1].parse().map_err(|_| bad("bad height"))?;
    let w: usize = parts[3].parse().map_err(|_| bad("bad width"))?;
    let body = &bytes[pos..];
    if w >= 8 && w < 0x8000 && body.len() >= 2 && body[0] == 2 && body[1] == 2 {
        return Err(bad("run-length encoded scanlines are not supported"));
    }
    if body.len() != h * w * 4 {
        return Err(bad(&format!("expected {} pixel bytes, found {}", h * w * 4, body.len())));
    }
    let mut data = Vec::with_capacity(h * w * 3);
    for px in body.chunks_exact(4) {
        data.extend_from_slice(&decode_pixel([px[0], px[1], px[2], px[3]]));
    }
    ImageBuf::new(h, w, data)
}

/// Reads an RGBE file as a radiance map. Zero pixels are lifted to the
/// smallest positive value present so the map stays strictly positive.
pub fn read_radiance_rgbe(path: impl AsRef<Path>) -> Result<RadianceMap> {
    let path = path.as_ref();
    if !path.exists() {
        return Err(Error::NotFound(path.to_path_buf()));
    }
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let mut buf = decode_rgbe(&bytes, path)?;
    let floor = buf
        .data()
        .iter()
        .copied()
        .filter(|v| *v > 0.0)
        .fold(f64::INFINITY, f64::min);
    let floor = if floor.is_finite() { floor } else { 1e-6 };
    for v in buf.data_mut() {
        if *v <= 0.0 {
            *v = floor;
        }
    }
    RadianceMap::new(buf)
}
