//! Tape-based reverse-mode differentiation over [`Tensor`]s.
//!
//! Every operation appends a node holding its value; [`Graph::backward`]
//! walks the tape in reverse. Nodes that depend on no parameter are skipped
//! during the backward pass.

use evhdr_core::resample::{resize_plane, resize_plane_adjoint, AxisTaps, ResizeMethod};

use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

enum Op {
    Leaf,
    Conv { x: Var, w: Var, b: Var, k: usize },
    Relu(Var),
    Silu(Var),
    Sigmoid(Var),
    Exp(Var),
    Clamp01(Var),
    MaxPool2 { x: Var, argmax: Vec<u32> },
    Resize { x: Var, rows: AxisTaps, cols: AxisTaps },
    Concat(Vec<Var>),
    AppendScalar { x: Var, s: Var },
    Slice { x: Var, start: usize },
    Mul(Var, Var),
    Add(Var, Var),
    AddScaled { a: Var, b: Var, k: f64 },
    Passthrough { net: Var, input: Var, keep: Vec<bool> },
    L1Mean(Var, Var),
}

struct Node {
    value: Tensor,
    op: Op,
    needs_grad: bool,
}

#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

/// Gradients indexed by [`Var`]; `None` where nothing flowed.
pub struct Grads(Vec<Option<Tensor>>);

impl Grads {
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.0[v.0].as_ref()
    }

    pub fn take(&mut self, v: Var) -> Option<Tensor> {
        self.0[v.0].take()
    }
}

/// `C = A·B (+ beta·C)` for row/column-strided matrices.
#[allow(clippy::too_many_arguments)]
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    (rsa, csa): (usize, usize),
    b: &[f64],
    (rsb, csb): (usize, usize),
    beta: f64,
    c: &mut [f64],
    rsc: usize,
) {
    assert!(a.len() >= (m - 1) * rsa + (k - 1) * csa + 1);
    assert!(b.len() >= (k - 1) * rsb + (n - 1) * csb + 1);
    assert!(c.len() >= (m - 1) * rsc + n);
    // SAFETY: the asserts above keep every strided access inside the slices.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa as isize,
            csa as isize,
            b.as_ptr(),
            rsb as isize,
            csb as isize,
            beta,
            c.as_mut_ptr(),
            rsc as isize,
            1,
        );
    }
}

/// Unfolds 3×3 zero-padded neighbourhoods: row `(ci·9 + ky·3 + kx)`, column
/// `y·W + x`.
fn im2col3(x: &[f64], cin: usize, h: usize, w: usize, col: &mut [f64]) {
    let hw = h * w;
    for ci in 0..cin {
        let plane = &x[ci * hw..(ci + 1) * hw];
        for ky in 0..3 {
            for kx in 0..3 {
                let row = &mut col[(ci * 9 + ky * 3 + kx) * hw..][..hw];
                for y in 0..h {
                    let dst = &mut row[y * w..(y + 1) * w];
                    let sy = y as isize + ky as isize - 1;
                    if sy < 0 || sy >= h as isize {
                        dst.fill(0.0);
                        continue;
                    }
                    let src = &plane[sy as usize * w..(sy as usize + 1) * w];
                    match kx {
                        0 => {
                            dst[0] = 0.0;
                            dst[1..].copy_from_slice(&src[..w - 1]);
                        }
                        1 => dst.copy_from_slice(src),
                        _ => {
                            dst[..w - 1].copy_from_slice(&src[1..]);
                            dst[w - 1] = 0.0;
                        }
                    }
                }
            }
        }
    }
}

/// Adjoint of [`im2col3`], accumulating into `x`.
fn col2im3(col: &[f64], cin: usize, h: usize, w: usize, x: &mut [f64]) {
    let hw = h * w;
    for ci in 0..cin {
        let plane = &mut x[ci * hw..(ci + 1) * hw];
        for ky in 0..3 {
            for kx in 0..3 {
                let row = &col[(ci * 9 + ky * 3 + kx) * hw..][..hw];
                for y in 0..h {
                    let sy = y as isize + ky as isize - 1;
                    if sy < 0 || sy >= h as isize {
                        continue;
                    }
                    let src = &row[y * w..(y + 1) * w];
                    let dst = &mut plane[sy as usize * w..(sy as usize + 1) * w];
                    match kx {
                        0 => dst[..w - 1].iter_mut().zip(&src[1..]).for_each(|(d, s)| *d += s),
                        1 => dst.iter_mut().zip(src).for_each(|(d, s)| *d += s),
                        _ => dst[1..].iter_mut().zip(&src[..w - 1]).for_each(|(d, s)| *d += s),
                    }
                }
            }
        }
    }
}

#[inline]
fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op, inputs: &[Var]) -> Var {
        let needs_grad = inputs.iter().any(|v| self.nodes[v.0].needs_grad);
        self.nodes.push(Node { value, op, needs_grad });
        Var(self.nodes.len() - 1)
    }

    /// A leaf that receives no gradient.
    pub fn constant(&mut self, t: Tensor) -> Var {
        self.nodes.push(Node { value: t, op: Op::Leaf, needs_grad: false });
        Var(self.nodes.len() - 1)
    }

    /// A leaf whose gradient is tracked.
    pub fn param(&mut self, t: Tensor) -> Var {
        self.nodes.push(Node { value: t, op: Op::Leaf, needs_grad: true });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> [usize; 4] {
        self.nodes[v.0].value.shape
    }

    /// Stride-1 "same" convolution. `w` is `[Cout, Cin, k, k]` with `k ∈ {1, 3}`,
    /// `b` is `[Cout, 1, 1, 1]`.
    pub fn conv2d(&mut self, x: Var, w: Var, b: Var) -> Var {
        let [n, cin, h, wd] = self.shape(x);
        let [cout, wcin, k, k2] = self.shape(w);
        assert_eq!(wcin, cin, "conv input channels");
        assert!(k == k2 && (k == 1 || k == 3), "only 1x1 and 3x3 kernels");
        assert_eq!(self.shape(b), [cout, 1, 1, 1], "conv bias shape");
        let hw = h * wd;
        let kk = cin * k * k;
        let mut out = Tensor::zeros([n, cout, h, wd]);
        let mut col = if k == 3 { vec![0.0; kk * hw] } else { Vec::new() };
        {
            let xv = &self.nodes[x.0].value;
            let wv = &self.nodes[w.0].value.data;
            let bv = &self.nodes[b.0].value.data;
            for s in 0..n {
                let xs = xv.sample(s);
                let src: &[f64] = if k == 3 {
                    im2col3(xs, cin, h, wd, &mut col);
                    &col
                } else {
                    xs
                };
                let os = out.sample_mut(s);
                for (co, &bias) in bv.iter().enumerate() {
                    os[co * hw..(co + 1) * hw].fill(bias);
                }
                gemm(cout, kk, hw, wv, (kk, 1), src, (hw, 1), 1.0, os, hw);
            }
        }
        self.push(out, Op::Conv { x, w, b, k }, &[x, w, b])
    }

    fn unary(&mut self, x: Var, f: impl Fn(f64) -> f64, op: Op) -> Var {
        let v = &self.nodes[x.0].value;
        let out = Tensor::from_vec(v.shape, v.data.iter().map(|&a| f(a)).collect());
        self.push(out, op, &[x])
    }

    pub fn relu(&mut self, x: Var) -> Var {
        self.unary(x, |a| a.max(0.0), Op::Relu(x))
    }

    pub fn silu(&mut self, x: Var) -> Var {
        self.unary(x, |a| a * sigmoid(a), Op::Silu(x))
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        self.unary(x, sigmoid, Op::Sigmoid(x))
    }

    pub fn exp(&mut self, x: Var) -> Var {
        self.unary(x, f64::exp, Op::Exp(x))
    }

    /// Clamp into `[0, 1]`; the gradient passes on the closed interval.
    pub fn clamp01(&mut self, x: Var) -> Var {
        self.unary(x, |a| a.clamp(0.0, 1.0), Op::Clamp01(x))
    }

    /// 2×2 max pooling with stride 2 (even spatial dims).
    pub fn max_pool2(&mut self, x: Var) -> Var {
        let v = &self.nodes[x.0].value;
        let [n, c, h, w] = v.shape;
        assert!(h % 2 == 0 && w % 2 == 0, "max_pool2 needs even dims, got {h}x{w}");
        let (oh, ow) = (h / 2, w / 2);
        let mut out = Tensor::zeros([n, c, oh, ow]);
        let mut argmax = vec![0u32; out.len()];
        for p in 0..n * c {
            let src = &v.data[p * h * w..(p + 1) * h * w];
            for y in 0..oh {
                for xo in 0..ow {
                    let cand = [
                        (2 * y) * w + 2 * xo,
                        (2 * y) * w + 2 * xo + 1,
                        (2 * y + 1) * w + 2 * xo,
                        (2 * y + 1) * w + 2 * xo + 1,
                    ];
                    let mut best = cand[0];
                    for &i in &cand[1..] {
                        if src[i] > src[best] {
                            best = i;
                        }
                    }
                    let o = p * oh * ow + y * ow + xo;
                    out.data[o] = src[best];
                    argmax[o] = best as u32;
                }
            }
        }
        self.push(out, Op::MaxPool2 { x, argmax }, &[x])
    }

    /// Separable per-plane resampling to `oh × ow`.
    pub fn resize(&mut self, x: Var, oh: usize, ow: usize, method: ResizeMethod) -> Var {
        let [n, c, h, w] = self.shape(x);
        if (h, w) == (oh, ow) {
            return x;
        }
        let rows = AxisTaps::new(h, oh, method);
        let cols = AxisTaps::new(w, ow, method);
        let v = &self.nodes[x.0].value;
        let mut out = Tensor::zeros([n, c, oh, ow]);
        for p in 0..n * c {
            resize_plane(&v.data[p * h * w..(p + 1) * h * w], &rows, &cols, &mut out.data[p * oh * ow..(p + 1) * oh * ow]);
        }
        self.push(out, Op::Resize { x, rows, cols }, &[x])
    }

    /// Channel concatenation.
    pub fn concat(&mut self, xs: &[Var]) -> Var {
        let [n, _, h, w] = self.shape(xs[0]);
        let cs: Vec<usize> = xs
            .iter()
            .map(|&v| {
                let s = self.shape(v);
                assert_eq!((s[0], s[2], s[3]), (n, h, w), "concat shape mismatch");
                s[1]
            })
            .collect();
        let ctot: usize = cs.iter().sum();
        let hw = h * w;
        let mut out = Tensor::zeros([n, ctot, h, w]);
        for s in 0..n {
            let mut off = 0;
            for (&v, &c) in xs.iter().zip(&cs) {
                let src = self.nodes[v.0].value.sample(s);
                out.sample_mut(s)[off * hw..(off + c) * hw].copy_from_slice(src);
                off += c;
            }
        }
        self.push(out, Op::Concat(xs.to_vec()), xs)
    }

    /// Appends a constant channel holding `s[n]` to every sample;
    /// `s` is `[N, 1, 1, 1]`.
    pub fn append_scalar(&mut self, x: Var, s: Var) -> Var {
        let [n, c, h, w] = self.shape(x);
        assert_eq!(self.shape(s), [n, 1, 1, 1], "per-sample scalar shape");
        let hw = h * w;
        let mut out = Tensor::zeros([n, c + 1, h, w]);
        for i in 0..n {
            let sv = self.nodes[s.0].value.data[i];
            let dst = out.sample_mut(i);
            dst[..c * hw].copy_from_slice(self.nodes[x.0].value.sample(i));
            dst[c * hw..].fill(sv);
        }
        self.push(out, Op::AppendScalar { x, s }, &[x, s])
    }

    /// Channels `start..start + len`.
    pub fn slice_channels(&mut self, x: Var, start: usize, len: usize) -> Var {
        let [n, c, h, w] = self.shape(x);
        assert!(start + len <= c, "channel slice out of range");
        let hw = h * w;
        let mut out = Tensor::zeros([n, len, h, w]);
        for i in 0..n {
            out.sample_mut(i).copy_from_slice(&self.nodes[x.0].value.sample(i)[start * hw..(start + len) * hw]);
        }
        self.push(out, Op::Slice { x, start }, &[x])
    }

    fn binary(&mut self, a: Var, b: Var, f: impl Fn(f64, f64) -> f64, op: Op) -> Var {
        let (va, vb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        assert_eq!(va.shape, vb.shape, "elementwise shape mismatch");
        let out = Tensor::from_vec(va.shape, va.data.iter().zip(&vb.data).map(|(x, y)| f(*x, *y)).collect());
        self.push(out, op, &[a, b])
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        self.binary(a, b, |x, y| x * y, Op::Mul(a, b))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        self.binary(a, b, |x, y| x + y, Op::Add(a, b))
    }

    /// `a + k·b`.
    pub fn add_scaled(&mut self, a: Var, b: Var, k: f64) -> Var {
        self.binary(a, b, |x, y| x + k * y, Op::AddScaled { a, b, k })
    }

    /// Per sample: `input` where `keep[n]`, else `net`.
    pub fn passthrough(&mut self, net: Var, input: Var, keep: Vec<bool>) -> Var {
        let mut out = self.nodes[net.0].value.clone();
        assert_eq!(out.shape, self.shape(input), "passthrough shape mismatch");
        assert_eq!(keep.len(), out.n());
        for (i, &k) in keep.iter().enumerate() {
            if k {
                out.sample_mut(i).copy_from_slice(self.nodes[input.0].value.sample(i));
            }
        }
        self.push(out, Op::Passthrough { net, input, keep }, &[net, input])
    }

    /// Mean absolute difference, as a `[1, 1, 1, 1]` scalar.
    pub fn l1_mean(&mut self, a: Var, b: Var) -> Var {
        let (va, vb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        assert_eq!(va.shape, vb.shape, "l1 shape mismatch");
        let m = va.data.iter().zip(&vb.data).map(|(x, y)| (x - y).abs()).sum::<f64>() / va.len() as f64;
        self.push(Tensor::scalar(m), Op::L1Mean(a, b), &[a, b])
    }

    /// Reverse pass from a scalar output.
    pub fn backward(&self, out: Var) -> Grads {
        assert_eq!(self.value(out).len(), 1, "backward needs a scalar; use backward_from");
        self.backward_from(out, Tensor::filled(self.shape(out), 1.0))
    }

    /// Reverse pass seeded with `seed = ∂L/∂out`.
    pub fn backward_from(&self, out: Var, seed: Tensor) -> Grads {
        assert_eq!(seed.shape, self.shape(out));
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[out.0] = Some(seed);
        for i in (0..=out.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            if !node.needs_grad {
                continue;
            }
            self.propagate(node, &g, &mut grads);
            grads[i] = Some(g);
        }
        Grads(grads)
    }

    fn acc<'a>(&self, grads: &'a mut [Option<Tensor>], v: Var) -> Option<&'a mut Tensor> {
        if !self.nodes[v.0].needs_grad {
            return None;
        }
        let shape = self.nodes[v.0].value.shape;
        Some(grads[v.0].get_or_insert_with(|| Tensor::zeros(shape)))
    }

    fn propagate(&self, node: &Node, g: &Tensor, grads: &mut [Option<Tensor>]) {
        let val = |v: Var| &self.nodes[v.0].value;
        match &node.op {
            Op::Leaf => {}
            Op::Conv { x, w, b, k } => self.conv_backward(*x, *w, *b, *k, g, grads),
            Op::Relu(x) => {
                let xv = val(*x);
                if let Some(gx) = self.acc(grads, *x) {
                    for ((d, gi), xi) in gx.data.iter_mut().zip(&g.data).zip(&xv.data) {
                        if *xi > 0.0 {
                            *d += gi;
                        }
                    }
                }
            }
            Op::Silu(x) => {
                let xv = val(*x);
                if let Some(gx) = self.acc(grads, *x) {
                    for ((d, gi), xi) in gx.data.iter_mut().zip(&g.data).zip(&xv.data) {
                        let s = sigmoid(*xi);
                        *d += gi * s * (1.0 + xi * (1.0 - s));
                    }
                }
            }
            Op::Sigmoid(x) => {
                let y = &node.value;
                if let Some(gx) = self.acc(grads, *x) {
                    for ((d, gi), yi) in gx.data.iter_mut().zip(&g.data).zip(&y.data) {
                        *d += gi * yi * (1.0 - yi);
                    }
                }
            }
            Op::Exp(x) => {
                let y = &node.value;
                if let Some(gx) = self.acc(grads, *x) {
                    for ((d, gi), yi) in gx.data.iter_mut().zip(&g.data).zip(&y.data) {
                        *d += gi * yi;
                    }
                }
            }
            Op::Clamp01(x) => {
                let xv = val(*x);
                if let Some(gx) = self.acc(grads, *x) {
                    for ((d, gi), xi) in gx.data.iter_mut().zip(&g.data).zip(&xv.data) {
                        if (0.0..=1.0).contains(xi) {
                            *d += gi;
                        }
                    }
                }
            }
            Op::MaxPool2 { x, argmax } => {
                let [_, _, h, w] = val(*x).shape;
                let (oh, ow) = (h / 2, w / 2);
                if let Some(gx) = self.acc(grads, *x) {
                    for (o, (&gi, &a)) in g.data.iter().zip(argmax).enumerate() {
                        let p = o / (oh * ow);
                        gx.data[p * h * w + a as usize] += gi;
                    }
                }
            }
            Op::Resize { x, rows, cols } => {
                let [_, _, h, w] = val(*x).shape;
                let (oh, ow) = (g.h(), g.w());
                if let Some(gx) = self.acc(grads, *x) {
                    for p in 0..g.n() * g.c() {
                        resize_plane_adjoint(
                            &g.data[p * oh * ow..(p + 1) * oh * ow],
                            rows,
                            cols,
                            &mut gx.data[p * h * w..(p + 1) * h * w],
                        );
                    }
                }
            }
            Op::Concat(xs) => {
                let hw = g.plane_len();
                let mut off = 0;
                for &x in xs {
                    let c = val(x).c();
                    if let Some(gx) = self.acc(grads, x) {
                        for s in 0..g.n() {
                            let src = &g.sample(s)[off * hw..(off + c) * hw];
                            gx.sample_mut(s).iter_mut().zip(src).for_each(|(d, v)| *d += v);
                        }
                    }
                    off += c;
                }
            }
            Op::AppendScalar { x, s } => {
                let c = val(*x).c();
                let hw = g.plane_len();
                if let Some(gx) = self.acc(grads, *x) {
                    for i in 0..g.n() {
                        let src = &g.sample(i)[..c * hw];
                        gx.sample_mut(i).iter_mut().zip(src).for_each(|(d, v)| *d += v);
                    }
                }
                if let Some(gs) = self.acc(grads, *s) {
                    for i in 0..g.n() {
                        gs.data[i] += g.sample(i)[c * hw..].iter().sum::<f64>();
                    }
                }
            }
            Op::Slice { x, start } => {
                let hw = g.plane_len();
                let len = g.c();
                if let Some(gx) = self.acc(grads, *x) {
                    for i in 0..g.n() {
                        let dst = &mut gx.sample_mut(i)[start * hw..(start + len) * hw];
                        dst.iter_mut().zip(g.sample(i)).for_each(|(d, v)| *d += v);
                    }
                }
            }
            Op::Mul(a, b) => {
                let (va, vb) = (val(*a), val(*b));
                if let Some(ga) = self.acc(grads, *a) {
                    for ((d, gi), y) in ga.data.iter_mut().zip(&g.data).zip(&vb.data) {
                        *d += gi * y;
                    }
                }
                if let Some(gb) = self.acc(grads, *b) {
                    for ((d, gi), x) in gb.data.iter_mut().zip(&g.data).zip(&va.data) {
                        *d += gi * x;
                    }
                }
            }
            Op::Add(a, b) => {
                if let Some(ga) = self.acc(grads, *a) {
                    ga.add_assign(g);
                }
                if let Some(gb) = self.acc(grads, *b) {
                    gb.add_assign(g);
                }
            }
            Op::AddScaled { a, b, k } => {
                if let Some(ga) = self.acc(grads, *a) {
                    ga.add_assign(g);
                }
                if let Some(gb) = self.acc(grads, *b) {
                    gb.data.iter_mut().zip(&g.data).for_each(|(d, v)| *d += k * v);
                }
            }
            Op::Passthrough { net, input, keep } => {
                for (i, &kept) in keep.iter().enumerate() {
                    let target = if kept { *input } else { *net };
                    if let Some(gt) = self.acc(grads, target) {
                        gt.sample_mut(i).iter_mut().zip(g.sample(i)).for_each(|(d, v)| *d += v);
                    }
                }
            }
            Op::L1Mean(a, b) => {
                let (va, vb) = (val(*a), val(*b));
                let scale = g.data[0] / va.len() as f64;
                let sign = |d: f64| if d > 0.0 { scale } else if d < 0.0 { -scale } else { 0.0 };
                if let Some(ga) = self.acc(grads, *a) {
                    for ((d, x), y) in ga.data.iter_mut().zip(&va.data).zip(&vb.data) {
                        *d += sign(x - y);
                    }
                }
                if let Some(gb) = self.acc(grads, *b) {
                    for ((d, x), y) in gb.data.iter_mut().zip(&va.data).zip(&vb.data) {
                        *d -= sign(x - y);
                    }
                }
            }
        }
    }

    fn conv_backward(&self, x: Var, w: Var, b: Var, k: usize, g: &Tensor, grads: &mut [Option<Tensor>]) {
        let xv = &self.nodes[x.0].value;
        let wv = &self.nodes[w.0].value;
        let [n, cin, h, wd] = xv.shape;
        let cout = wv.shape[0];
        let hw = h * wd;
        let kk = cin * k * k;
        if let Some(gb) = self.acc(grads, b) {
            for s in 0..n {
                let gs = g.sample(s);
                for co in 0..cout {
                    gb.data[co] += gs[co * hw..(co + 1) * hw].iter().sum::<f64>();
                }
            }
        }
        let need_w = self.nodes[w.0].needs_grad;
        let need_x = self.nodes[x.0].needs_grad;
        let mut col = if k == 3 { vec![0.0; kk * hw] } else { Vec::new() };
        if need_w {
            let gw = self.acc(grads, w).expect("tracked");
            for s in 0..n {
                let xs = xv.sample(s);
                let src: &[f64] = if k == 3 {
                    im2col3(xs, cin, h, wd, &mut col);
                    &col
                } else {
                    xs
                };
                // dW (cout × kk) += dOut (cout × hw) · colᵀ (hw × kk)
                gemm(cout, hw, kk, g.sample(s), (hw, 1), src, (1, hw), 1.0, &mut gw.data, kk);
            }
        }
        if need_x {
            let gx = self.acc(grads, x).expect("tracked");
            for s in 0..n {
                let gs = g.sample(s);
                if k == 3 {
                    // dcol (kk × hw) = Wᵀ (kk × cout) · dOut (cout × hw)
                    gemm(kk, cout, hw, &wv.data, (1, kk), gs, (hw, 1), 0.0, &mut col, hw);
                    col2im3(&col, cin, h, wd, gx.sample_mut(s));
                } else {
                    gemm(kk, cout, hw, &wv.data, (1, kk), gs, (hw, 1), 1.0, gx.sample_mut(s), hw);
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rand_tensor(rng: &mut ChaCha8Rng, shape: [usize; 4]) -> Tensor {
        let n = shape.iter().product();
        Tensor::from_vec(shape, (0..n).map(|_| rng.random_range(-1.0..1.0)).collect())
    }

    /// Direct nested-loop convolution.
    fn conv_oracle(x: &Tensor, w: &Tensor, b: &Tensor) -> Tensor {
        let [n, cin, h, wd] = x.shape;
        let [cout, _, k, _] = w.shape;
        let r = (k / 2) as isize;
        let mut out = Tensor::zeros([n, cout, h, wd]);
        for s in 0..n {
            for co in 0..cout {
                for y in 0..h {
                    for xx in 0..wd {
                        let mut acc = b.data[co];
                        for ci in 0..cin {
                            for ky in 0..k {
                                for kx in 0..k {
                                    let sy = y as isize + ky as isize - r;
                                    let sx = xx as isize + kx as isize - r;
                                    if sy >= 0 && sx >= 0 && sy < h as isize && sx < wd as isize {
                                        acc += w.at(co, ci, ky, kx) * x.at(s, ci, sy as usize, sx as usize);
                                    }
                                }
                            }
                        }
                        let i = out.idx(s, co, y, xx);
                        out.data[i] = acc;
                    }
                }
            }
        }
        out
    }

    #[test]
    fn conv_matches_direct_loops() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for k in [1, 3] {
            let x = rand_tensor(&mut rng, [2, 3, 5, 7]);
            let w = rand_tensor(&mut rng, [4, 3, k, k]);
            let b = rand_tensor(&mut rng, [4, 1, 1, 1]);
            let mut g = Graph::new();
            let (xv, wv, bv) = (g.constant(x.clone()), g.constant(w.clone()), g.constant(b.clone()));
            let y = g.conv2d(xv, wv, bv);
            let oracle = conv_oracle(&x, &w, &b);
            for (a, o) in g.value(y).data.iter().zip(&oracle.data) {
                assert!((a - o).abs() < 1e-12);
            }
        }
    }

    /// Builds a scalar from every op so one finite-difference sweep covers
    /// all backward rules.
    fn all_ops(g: &mut Graph, x: Var, w3: Var, b3: Var, w1: Var, b1: Var, s: Var, target: Var) -> Var {
        let c = g.conv2d(x, w3, b3);
        let r = g.relu(c);
        let si = g.silu(r);
        let p = g.max_pool2(si);
        let up = g.resize(p, 4, 6, ResizeMethod::Bicubic);
        let cat = g.concat(&[up, c]);
        let app = g.append_scalar(cat, s);
        let c1 = g.conv2d(app, w1, b1);
        let e = g.slice_channels(c1, 0, 2);
        let e = g.exp(e);
        let sg = g.sigmoid(c1);
        let sg = g.slice_channels(sg, 1, 2);
        let m = g.mul(e, sg);
        let a = g.add(m, sg);
        let a = g.add_scaled(a, e, 0.3);
        let cl = g.clamp01(a);
        let keep = vec![false, true];
        let pt = g.passthrough(cl, target, keep);
        let pt2 = g.passthrough(cl, target, vec![false, false]);
        let l1 = g.l1_mean(pt, target);
        let l2 = g.l1_mean(pt2, target);
        g.add_scaled(l1, l2, 0.5)
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = rand_tensor(&mut rng, [2, 2, 4, 6]);
        let w3 = rand_tensor(&mut rng, [3, 2, 3, 3]);
        let b3 = rand_tensor(&mut rng, [3, 1, 1, 1]);
        let w1 = rand_tensor(&mut rng, [3, 7, 1, 1]);
        let b1 = rand_tensor(&mut rng, [3, 1, 1, 1]);
        let s = rand_tensor(&mut rng, [2, 1, 1, 1]);
        let target = Tensor::from_vec([2, 2, 4, 6], (0..96).map(|_| rng.random_range(0.0..1.0)).collect());
        let leaves = [x, w3, b3, w1, b1, s];
        let eval = |vals: &[Tensor]| -> (f64, Vec<Tensor>) {
            let mut g = Graph::new();
            let v: Vec<Var> = vals.iter().map(|t| g.param(t.clone())).collect();
            let t = g.constant(target.clone());
            let out = all_ops(&mut g, v[0], v[1], v[2], v[3], v[4], v[5], t);
            let grads = g.backward(out);
            (g.value(out).data[0], v.iter().map(|&vi| grads.get(vi).unwrap().clone()).collect())
        };
        let (_, analytic) = eval(&leaves);
        let h = 1e-6;
        let mut checked = 0;
        for (li, leaf) in leaves.iter().enumerate() {
            for j in 0..leaf.len() {
                let mut plus = leaves.to_vec();
                plus[li].data[j] += h;
                let mut minus = leaves.to_vec();
                minus[li].data[j] -= h;
                let fd = (eval(&plus).0 - eval(&minus).0) / (2.0 * h);
                let an = analytic[li].data[j];
                assert!((fd - an).abs() <= 1e-5 * (1.0 + an.abs()), "leaf {li}[{j}]: fd {fd} vs {an}");
                checked += 1;
            }
        }
        assert!(checked > 100);
    }

    #[test]
    fn constants_get_no_gradient() {
        let mut g = Graph::new();
        let a = g.constant(Tensor::scalar(2.0));
        let b = g.param(Tensor::scalar(3.0));
        let m = g.mul(a, b);
        let grads = g.backward(m);
        assert!(grads.get(a).is_none());
        assert_eq!(grads.get(b).unwrap().data[0], 2.0);
    }
}
