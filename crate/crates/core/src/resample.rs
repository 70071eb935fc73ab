//! Separable bicubic / bilinear resampling.
//!
//! Sample positions use pixel centres (`src = (dst + 0.5)·in/out − 0.5`) and
//! out-of-range taps are clamped to the border. The same tap tables drive the
//! image-level [`resize_interleaved`] and the planar forward/adjoint pair used
//! by the network's differentiable upsampling.

/// Interpolation kernel.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ResizeMethod {
    Bicubic,
    Bilinear,
}

/// Keys cubic convolution parameter.
pub const CUBIC_A: f64 = -0.5;

/// Keys cubic convolution kernel with `a = -0.5`.
pub fn cubic_kernel(t: f64) -> f64 {
    let t = t.abs();
    let a = CUBIC_A;
    if t <= 1.0 {
        ((a + 2.0) * t - (a + 3.0)) * t * t + 1.0
    } else if t < 2.0 {
        ((a * t - 5.0 * a) * t + 8.0 * a) * t - 4.0 * a
    } else {
        0.0
    }
}

/// Interpolation taps along one axis: `per_output` (index, weight) pairs for
/// each output position, stored flat.
#[derive(Clone, Debug, PartialEq)]
pub struct AxisTaps {
    pub in_len: usize,
    pub out_len: usize,
    pub per_output: usize,
    pub index: Vec<usize>,
    pub weight: Vec<f64>,
}

impl AxisTaps {
    pub fn new(in_len: usize, out_len: usize, method: ResizeMethod) -> Self {
        assert!(in_len > 0 && out_len > 0, "axis lengths must be positive");
        let per_output = match method {
            ResizeMethod::Bicubic => 4,
            ResizeMethod::Bilinear => 2,
        };
        let scale = in_len as f64 / out_len as f64;
        let last = in_len as isize - 1;
        let mut index = Vec::with_capacity(out_len * per_output);
        let mut weight = Vec::with_capacity(out_len * per_output);
        for dst in 0..out_len {
            let src = (dst as f64 + 0.5) * scale - 0.5;
            let base = src.floor();
            let frac = src - base;
            let base = base as isize;
            match method {
                ResizeMethod::Bicubic => {
                    for k in -1..=2isize {
                        index.push((base + k).clamp(0, last) as usize);
                        weight.push(cubic_kernel(frac - k as f64));
                    }
                }
                ResizeMethod::Bilinear => {
                    index.push(base.clamp(0, last) as usize);
                    weight.push(1.0 - frac);
                    index.push((base + 1).clamp(0, last) as usize);
                    weight.push(frac);
                }
            }
        }
        Self { in_len, out_len, per_output, index, weight }
    }

    #[inline]
    fn taps(&self, dst: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = dst * self.per_output..(dst + 1) * self.per_output;
        self.index[r.clone()].iter().copied().zip(self.weight[r].iter().copied())
    }
}

/// Resizes one `h×w` plane (row-major) with precomputed row/column taps.
pub fn resize_plane(src: &[f64], rows: &AxisTaps, cols: &AxisTaps, dst: &mut [f64]) {
    let (h, w) = (rows.in_len, cols.in_len);
    let (oh, ow) = (rows.out_len, cols.out_len);
    debug_assert_eq!(src.len(), h * w);
    debug_assert_eq!(dst.len(), oh * ow);
    // Horizontal pass into an h×ow scratch buffer, then vertical.
    let mut tmp = vec![0.0; h * ow];
    for y in 0..h {
        let row = &src[y * w..(y + 1) * w];
        let out = &mut tmp[y * ow..(y + 1) * ow];
        for (x, o) in out.iter_mut().enumerate() {
            *o = cols.taps(x).map(|(i, wt)| wt * row[i]).sum();
        }
    }
    for y in 0..oh {
        let out = &mut dst[y * ow..(y + 1) * ow];
        out.iter_mut().for_each(|o| *o = 0.0);
        for (i, wt) in rows.taps(y) {
            let row = &tmp[i * ow..(i + 1) * ow];
            for (o, &v) in out.iter_mut().zip(row) {
                *o += wt * v;
            }
        }
    }
}

/// Adjoint of [`resize_plane`]: accumulates `grad_out` back into `grad_src`.
pub fn resize_plane_adjoint(grad_out: &[f64], rows: &AxisTaps, cols: &AxisTaps, grad_src: &mut [f64]) {
    let (h, w) = (rows.in_len, cols.in_len);
    let (oh, ow) = (rows.out_len, cols.out_len);
    debug_assert_eq!(grad_out.len(), oh * ow);
    debug_assert_eq!(grad_src.len(), h * w);
    let mut tmp = vec![0.0; h * ow];
    for y in 0..oh {
        let g = &grad_out[y * ow..(y + 1) * ow];
        for (i, wt) in rows.taps(y) {
            let row = &mut tmp[i * ow..(i + 1) * ow];
            for (t, &v) in row.iter_mut().zip(g) {
                *t += wt * v;
            }
        }
    }
    for y in 0..h {
        let t = &tmp[y * ow..(y + 1) * ow];
        let out = &mut grad_src[y * w..(y + 1) * w];
        for (x, &v) in t.iter().enumerate() {
            for (i, wt) in cols.taps(x) {
                out[i] += wt * v;
            }
        }
    }
}

/// Resizes an interleaved `h×w×channels` buffer.
pub fn resize_interleaved(
    src: &[f64],
    h: usize,
    w: usize,
    channels: usize,
    target_h: usize,
    target_w: usize,
    method: ResizeMethod,
) -> Vec<f64> {
    assert_eq!(src.len(), h * w * channels);
    if (h, w) == (target_h, target_w) {
        return src.to_vec();
    }
    let rows = AxisTaps::new(h, target_h, method);
    let cols = AxisTaps::new(w, target_w, method);
    let mut out = vec![0.0; target_h * target_w * channels];
    let mut plane = vec![0.0; h * w];
    let mut resized = vec![0.0; target_h * target_w];
    for c in 0..channels {
        for (p, v) in plane.iter_mut().zip(src.iter().skip(c).step_by(channels)) {
            *p = *v;
        }
        resize_plane(&plane, &rows, &cols, &mut resized);
        for (o, v) in out.iter_mut().skip(c).step_by(channels).zip(&resized) {
            *o = *v;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Brute-force oracle: sums the 2-D kernel over every source pixel.
    fn direct_bicubic(src: &[f64], h: usize, w: usize, oh: usize, ow: usize) -> Vec<f64> {
        let mut out = vec![0.0; oh * ow];
        for oy in 0..oh {
            let sy = (oy as f64 + 0.5) * h as f64 / oh as f64 - 0.5;
            for ox in 0..ow {
                let sx = (ox as f64 + 0.5) * w as f64 / ow as f64 - 0.5;
                let mut acc = 0.0;
                // Enumerate virtual (unclamped) positions and fold onto the border.
                for iy in -4..(h as isize + 4) {
                    let ky = cubic_kernel(sy - iy as f64);
                    if ky == 0.0 {
                        continue;
                    }
                    for ix in -4..(w as isize + 4) {
                        let kx = cubic_kernel(sx - ix as f64);
                        if kx == 0.0 {
                            continue;
                        }
                        let cy = iy.clamp(0, h as isize - 1) as usize;
                        let cx = ix.clamp(0, w as isize - 1) as usize;
                        acc += ky * kx * src[cy * w + cx];
                    }
                }
                out[oy * ow + ox] = acc;
            }
        }
        out
    }

    #[test]
    fn kernel_interpolates() {
        assert_eq!(cubic_kernel(0.0), 1.0);
        assert_eq!(cubic_kernel(1.0), 0.0);
        assert_eq!(cubic_kernel(2.0), 0.0);
        for f in [0.1, 0.25, 0.5, 0.9] {
            let s: f64 = (-1..=2).map(|k| cubic_kernel(f - k as f64)).sum();
            assert!((s - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn impulse_upsample_matches_direct_kernel() {
        let (h, w) = (7, 6);
        let mut src = vec![0.0; h * w];
        src[3 * w + 2] = 1.0;
        let rows = AxisTaps::new(h, 2 * h, ResizeMethod::Bicubic);
        let cols = AxisTaps::new(w, 2 * w, ResizeMethod::Bicubic);
        let mut out = vec![0.0; 4 * h * w];
        resize_plane(&src, &rows, &cols, &mut out);
        let oracle = direct_bicubic(&src, h, w, 2 * h, 2 * w);
        for (a, b) in out.iter().zip(&oracle) {
            assert!((a - b).abs() < 1e-6, "{a} vs {b}");
        }
    }

    #[test]
    fn identity_when_dims_match() {
        let src: Vec<f64> = (0..20).map(|i| (i as f64 * 0.37).sin()).collect();
        let rows = AxisTaps::new(4, 4, ResizeMethod::Bicubic);
        let cols = AxisTaps::new(5, 5, ResizeMethod::Bicubic);
        let mut out = vec![0.0; 20];
        resize_plane(&src, &rows, &cols, &mut out);
        assert_eq!(out, src);
    }

    #[test]
    fn adjoint_identity() {
        // <R x, y> == <x, R^T y>
        let (h, w, oh, ow) = (5, 7, 9, 4);
        let x: Vec<f64> = (0..h * w).map(|i| ((i * 7919) % 13) as f64 / 13.0).collect();
        let y: Vec<f64> = (0..oh * ow).map(|i| ((i * 104729) % 17) as f64 / 17.0).collect();
        for m in [ResizeMethod::Bicubic, ResizeMethod::Bilinear] {
            let rows = AxisTaps::new(h, oh, m);
            let cols = AxisTaps::new(w, ow, m);
            let mut rx = vec![0.0; oh * ow];
            resize_plane(&x, &rows, &cols, &mut rx);
            let mut rty = vec![0.0; h * w];
            resize_plane_adjoint(&y, &rows, &cols, &mut rty);
            let lhs: f64 = rx.iter().zip(&y).map(|(a, b)| a * b).sum();
            let rhs: f64 = x.iter().zip(&rty).map(|(a, b)| a * b).sum();
            assert!((lhs - rhs).abs() < 1e-12);
        }
    }

    proptest! {
        #[test]
        fn constants_preserved(c in 0.0f64..1.0, h in 1usize..9, w in 1usize..9,
                               oh in 1usize..20, ow in 1usize..20, bilinear in any::<bool>()) {
            let m = if bilinear { ResizeMethod::Bilinear } else { ResizeMethod::Bicubic };
            let src = vec![c; h * w * 3];
            let out = resize_interleaved(&src, h, w, 3, oh, ow, m);
            for v in out {
                prop_assert!((v - c).abs() < 1e-12);
            }
        }

        #[test]
        fn commutes_with_channel_permutation(seed in 0u64..1000) {
            let (h, w) = (5, 4);
            let src: Vec<f64> = (0..h * w * 3)
                .map(|i| (((i as u64 + seed) * 2654435761) % 1000) as f64 / 1000.0)
                .collect();
            let mut perm = vec![0.0; src.len()];
            for p in 0..h * w {
                perm[p * 3] = src[p * 3 + 2];
                perm[p * 3 + 1] = src[p * 3];
                perm[p * 3 + 2] = src[p * 3 + 1];
            }
            let a = resize_interleaved(&src, h, w, 3, 9, 7, ResizeMethod::Bicubic);
            let b = resize_interleaved(&perm, h, w, 3, 9, 7, ResizeMethod::Bicubic);
            for p in 0..9 * 7 {
                prop_assert_eq!(a[p * 3 + 2], b[p * 3]);
                prop_assert_eq!(a[p * 3], b[p * 3 + 1]);
            }
        }
    }
}
