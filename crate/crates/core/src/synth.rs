//! Synthetic scenes and exposure-stack simulation.
//!
//! A [`SyntheticScene`] carries ground-truth radiance and the response curve
//! used to render it, so every stage of the pipeline can be checked against a
//! known answer. Exposure at EV `s` is `radiance · 2^s · base_exposure`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::image::{rec709_luma, EvStep, ImageBuf, LdrImage, LdrStack, RadianceMap};

/// Forward camera response: exposure → display value.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ForwardCrf {
    /// `v = X^(1/γ)`
    Gamma(f64),
}

impl ForwardCrf {
    pub fn apply(&self, exposure: f64) -> f64 {
        match *self {
            ForwardCrf::Gamma(g) => exposure.max(0.0).powf(1.0 / g),
        }
    }

    /// Natural log of the exposure producing display value `v` (`v > 0`).
    pub fn ln_exposure(&self, v: f64) -> f64 {
        match *self {
            ForwardCrf::Gamma(g) => g * v.ln(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct SyntheticScene {
    pub radiance: RadianceMap,
    pub crf: ForwardCrf,
    pub base_exposure: f64,
}

impl SyntheticScene {
    pub fn new(radiance: RadianceMap, crf: ForwardCrf, base_exposure: f64) -> Result<Self> {
        if !(base_exposure > 0.0 && base_exposure.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "base exposure must be positive, got {base_exposure}"
            )));
        }
        Ok(Self { radiance, crf, base_exposure })
    }

    /// Random piecewise-smooth scene with roughly ten stops of range.
    ///
    /// The log2 radiance is a sum of a tilted plane, coloured Gaussian blobs,
    /// sharp-edged rectangles, a small bright source and fine sinusoidal
    /// texture. The base exposure puts the median luminance at display value
    /// 0.4 for EV 0.
    pub fn random(seed: u64, height: usize, width: usize, crf: ForwardCrf) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (hf, wf) = (height as f64, width as f64);
        let size = hf.min(wf);

        let tilt = [rng.random_range(-1.5..1.5), rng.random_range(-1.5..1.5)];
        let base_tint: [f64; 3] = std::array::from_fn(|_| rng.random_range(-0.3..0.3));

        struct Blob {
            cy: f64,
            cx: f64,
            sigma: f64,
            amp: f64,
            tint: [f64; 3],
        }
        let mut blobs: Vec<Blob> = (0..6)
            .map(|_| Blob {
                cy: rng.random_range(0.0..hf),
                cx: rng.random_range(0.0..wf),
                sigma: rng.random_range(0.06..0.25) * size,
                amp: rng.random_range(-3.0..3.0),
                tint: std::array::from_fn(|_| rng.random_range(-0.5..0.5)),
            })
            .collect();
        blobs.push(Blob {
            cy: rng.random_range(0.0..hf),
            cx: rng.random_range(0.0..wf),
            sigma: rng.random_range(0.03..0.08) * size,
            amp: rng.random_range(3.0..4.5),
            tint: [0.0; 3],
        });

        struct Rect {
            y0: f64,
            y1: f64,
            x0: f64,
            x1: f64,
            amp: f64,
            tint: [f64; 3],
        }
        let rects: Vec<Rect> = (0..3)
            .map(|_| {
                let (a, b) = (rng.random_range(0.0..hf), rng.random_range(0.0..hf));
                let (c, d) = (rng.random_range(0.0..wf), rng.random_range(0.0..wf));
                Rect {
                    y0: a.min(b),
                    y1: a.max(b),
                    x0: c.min(d),
                    x1: c.max(d),
                    amp: rng.random_range(-2.0..2.0),
                    tint: std::array::from_fn(|_| rng.random_range(-0.4..0.4)),
                }
            })
            .collect();

        let waves: Vec<[f64; 4]> = (0..3)
            .map(|_| {
                let f = rng.random_range(2.0..8.0) * std::f64::consts::TAU / size;
                let th = rng.random_range(0.0..std::f64::consts::TAU);
                [f * th.cos(), f * th.sin(), rng.random_range(0.0..std::f64::consts::TAU), 0.3]
            })
            .collect();

        let buf = ImageBuf::from_fn(height, width, |y, x| {
            let (yf, xf) = (y as f64 + 0.5, x as f64 + 0.5);
            let mut l = tilt[0] * (yf / hf - 0.5) + tilt[1] * (xf / wf - 0.5);
            let mut tint = base_tint;
            for b in &blobs {
                let d2 = (yf - b.cy).powi(2) + (xf - b.cx).powi(2);
                let g = (-d2 / (2.0 * b.sigma * b.sigma)).exp();
                l += b.amp * g;
                for c in 0..3 {
                    tint[c] += b.tint[c] * g;
                }
            }
            for r in &rects {
                if yf >= r.y0 && yf < r.y1 && xf >= r.x0 && xf < r.x1 {
                    l += r.amp;
                    for c in 0..3 {
                        tint[c] += r.tint[c];
                    }
                }
            }
            for w in &waves {
                l += w[3] * (w[0] * yf + w[1] * xf + w[2]).sin();
            }
            std::array::from_fn(|c| (l + tint[c]).exp2())
        })?;

        let mut lum: Vec<f64> = buf.pixels().map(rec709_luma).collect();
        lum.sort_by(f64::total_cmp);
        let median = lum[lum.len() / 2];
        let target = match crf {
            ForwardCrf::Gamma(g) => 0.4f64.powf(g),
        };
        Self::new(RadianceMap::new(buf)?, crf, target / median)
    }

    /// Pre-response exposure of every value at EV `s`.
    pub fn exposure(&self, ev: EvStep) -> Vec<f64> {
        let k = ev.exposure_ratio() * self.base_exposure;
        self.radiance.data().iter().map(|r| r * k).collect()
    }

    /// Renders one exposure; optionally snapped to 8-bit levels.
    pub fn render(&self, ev: EvStep, quantize: bool) -> Result<LdrImage> {
        let data = self
            .exposure(ev)
            .into_iter()
            .map(|x| self.crf.apply(x).clamp(0.0, 1.0))
            .collect();
        let img = LdrImage::from_data(self.radiance.height(), self.radiance.width(), data)?;
        Ok(if quantize { img.quantized() } else { img })
    }
}

/// Renders the scene at each EV. EVs must be non-empty and strictly increasing.
pub fn simulate_stack(scene: &SyntheticScene, evs: &[EvStep], quantize: bool) -> Result<LdrStack> {
    if evs.is_empty() {
        return Err(Error::InvalidArgument("no EVs requested".into()));
    }
    if evs.windows(2).any(|w| w[1].value() <= w[0].value()) {
        return Err(Error::InvalidArgument("EVs must be strictly increasing".into()));
    }
    if scene.radiance.data().iter().any(|&r| !(r > 0.0)) {
        return Err(Error::InvalidArgument("scene radiance must be positive".into()));
    }
    let entries = evs
        .iter()
        .map(|&ev| Ok((ev, scene.render(ev, quantize)?)))
        .collect::<Result<Vec<_>>>()?;
    LdrStack::new(entries)
}

pub fn evs(values: &[f64]) -> Vec<EvStep> {
    values.iter().map(|&v| EvStep::new(v).expect("finite EV")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn flat_scene(r: f64, crf: ForwardCrf) -> SyntheticScene {
        let rad = RadianceMap::new(ImageBuf::filled(2, 2, [r; 3]).unwrap()).unwrap();
        SyntheticScene::new(rad, crf, 1.0).unwrap()
    }

    #[test]
    fn gamma_closed_form() {
        let s = flat_scene(0.25, ForwardCrf::Gamma(2.2));
        let st = simulate_stack(&s, &evs(&[0.0]), false).unwrap();
        let v = st.entries()[0].1.get(0, 0, 0);
        assert!((v - 0.25f64.powf(1.0 / 2.2)).abs() < 1e-12);
        assert!((v - 0.533).abs() < 1e-3);
    }

    #[test]
    fn one_ev_doubles_exposure() {
        let s = SyntheticScene::random(3, 8, 8, ForwardCrf::Gamma(2.2)).unwrap();
        let a = s.exposure(EvStep::new(0.5).unwrap());
        let b = s.exposure(EvStep::new(1.5).unwrap());
        for (x, y) in a.iter().zip(&b) {
            assert!((y / x - 2.0).abs() < 1e-12);
        }
    }

    #[test]
    fn saturates_at_unit_exposure() {
        let s = flat_scene(1.0, ForwardCrf::Gamma(2.2));
        let st = simulate_stack(&s, &evs(&[0.0, 1.0, 2.0]), true).unwrap();
        for (_, img) in st.entries() {
            assert!(img.data().iter().all(|&v| v == 1.0));
        }
    }

    #[test]
    fn rejects_bad_ev_lists() {
        let s = flat_scene(0.3, ForwardCrf::Gamma(1.0));
        assert!(simulate_stack(&s, &[], false).is_err());
        assert!(simulate_stack(&s, &evs(&[1.0, 0.0]), false).is_err());
        assert!(simulate_stack(&s, &evs(&[1.0, 1.0]), false).is_err());
    }

    #[test]
    fn random_scene_is_deterministic_and_exposed() {
        let a = SyntheticScene::random(11, 32, 32, ForwardCrf::Gamma(2.2)).unwrap();
        let b = SyntheticScene::random(11, 32, 32, ForwardCrf::Gamma(2.2)).unwrap();
        assert_eq!(a.radiance, b.radiance);
        let img = a.render(EvStep::ZERO, true).unwrap();
        let mut l = img.luma();
        l.sort_by(f64::total_cmp);
        assert!((l[l.len() / 2] - 0.4).abs() < 0.05);
    }

    proptest! {
        #[test]
        fn brighter_ev_never_darker(seed in 0u64..50, q in any::<bool>()) {
            let s = SyntheticScene::random(seed, 12, 12, ForwardCrf::Gamma(2.2)).unwrap();
            let st = simulate_stack(&s, &evs(&[-3.0, -1.5, 0.0, 0.5, 2.0, 3.0]), q).unwrap();
            for w in st.entries().windows(2) {
                for (a, b) in w[0].1.data().iter().zip(w[1].1.data()) {
                    prop_assert!(b >= a);
                }
            }
        }

        #[test]
        fn true_inverse_recovers_unclipped_radiance(seed in 0u64..50, ev in -3.0f64..3.0) {
            let s = SyntheticScene::random(seed, 10, 10, ForwardCrf::Gamma(2.2)).unwrap();
            let ev = EvStep::new(ev).unwrap();
            let img = s.render(ev, false).unwrap();
            for (v, r) in img.data().iter().zip(s.radiance.data()) {
                if *v > 0.0 && *v < 1.0 {
                    let ln_r = s.crf.ln_exposure(*v) - ev.value() * std::f64::consts::LN_2
                        - s.base_exposure.ln();
                    prop_assert!((ln_r - r.ln()).abs() < 1e-9);
                }
            }
        }
    }
}
