//! Dense NCHW tensors of `f64`.

use evhdr_core::{ImageBuf, LdrImage};

#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    pub shape: [usize; 4],
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(shape: [usize; 4]) -> Self {
        Self { shape, data: vec![0.0; shape.iter().product()] }
    }

    pub fn filled(shape: [usize; 4], v: f64) -> Self {
        Self { shape, data: vec![v; shape.iter().product()] }
    }

    pub fn from_vec(shape: [usize; 4], data: Vec<f64>) -> Self {
        assert_eq!(shape.iter().product::<usize>(), data.len(), "shape {shape:?} vs {} values", data.len());
        Self { shape, data }
    }

    pub fn scalar(v: f64) -> Self {
        Self::from_vec([1, 1, 1, 1], vec![v])
    }

    pub fn n(&self) -> usize {
        self.shape[0]
    }

    pub fn c(&self) -> usize {
        self.shape[1]
    }

    pub fn h(&self) -> usize {
        self.shape[2]
    }

    pub fn w(&self) -> usize {
        self.shape[3]
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn plane_len(&self) -> usize {
        self.shape[2] * self.shape[3]
    }

    #[inline]
    pub fn idx(&self, n: usize, c: usize, y: usize, x: usize) -> usize {
        ((n * self.shape[1] + c) * self.shape[2] + y) * self.shape[3] + x
    }

    pub fn at(&self, n: usize, c: usize, y: usize, x: usize) -> f64 {
        self.data[self.idx(n, c, y, x)]
    }

    /// All channels of sample `n`.
    pub fn sample(&self, n: usize) -> &[f64] {
        let len = self.shape[1] * self.plane_len();
        &self.data[n * len..(n + 1) * len]
    }

    pub fn sample_mut(&mut self, n: usize) -> &mut [f64] {
        let len = self.shape[1] * self.plane_len();
        &mut self.data[n * len..(n + 1) * len]
    }

    pub fn add_assign(&mut self, other: &Tensor) {
        debug_assert_eq!(self.shape, other.shape);
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Stacks HWC images into one `[N, 3, H, W]` batch.
    pub fn from_images<'a>(images: impl IntoIterator<Item = &'a LdrImage>) -> Self {
        let images: Vec<&LdrImage> = images.into_iter().collect();
        assert!(!images.is_empty(), "empty batch");
        let (h, w) = images[0].dims();
        let mut t = Tensor::zeros([images.len(), 3, h, w]);
        for (n, img) in images.iter().enumerate() {
            assert_eq!(img.dims(), (h, w), "batch images differ in size");
            let src = img.data();
            let dst = t.sample_mut(n);
            for i in 0..h * w {
                for c in 0..3 {
                    dst[c * h * w + i] = src[i * 3 + c];
                }
            }
        }
        t
    }

    /// Sample `n` as an HWC buffer (first three channels).
    pub fn to_buf(&self, n: usize) -> ImageBuf {
        let (h, w) = (self.h(), self.w());
        let src = self.sample(n);
        let mut data = vec![0.0; h * w * 3];
        for i in 0..h * w {
            for c in 0..3 {
                data[i * 3 + c] = src[c * h * w + i];
            }
        }
        ImageBuf::new(h, w, data).expect("consistent dims")
    }

    /// Sample `n` as an LDR image, clamping into `[0, 1]`.
    pub fn to_ldr(&self, n: usize) -> LdrImage {
        LdrImage::from_clamped(self.to_buf(n))
    }
}
