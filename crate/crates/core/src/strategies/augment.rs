use candle_core::Tensor;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{original_provider, NegativeBatchProvider, OriginalProvider};
use crate::error::{OsdaError, Result};
use crate::miner::NegativeSet;
use crate::ops::device;

/// Random affine transform followed by a Gaussian blur.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AugmentConfig {
    /// Rotation drawn from `±rotation_range` degrees.
    pub rotation_range: f64,
    /// Translation per axis drawn from `±translate_fraction` of the extent.
    pub translate_fraction: f64,
    pub scale_range: (f64, f64),
    /// Horizontal shear drawn from `±shear_range` degrees.
    pub shear_range: f64,
    pub blur_sigma: f64,
    /// Vector data is rejected unless this is set. The affine map then acts
    /// on consecutive coordinate pairs around the negatives' mean, with
    /// translations and the blur sigma measured in per-coordinate standard
    /// deviations (the blur becomes Gaussian jitter).
    pub vector_affine: bool,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self {
            rotation_range: 15.0,
            translate_fraction: 0.1,
            scale_range: (0.9, 1.1),
            shear_range: 5.0,
            blur_sigma: 0.1,
            vector_affine: false,
        }
    }
}

impl AugmentConfig {
    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.scale_range;
        if !(lo > 0.0 && lo <= hi && hi.is_finite()) {
            return Err(OsdaError::invalid(format!("scale_range needs 0 < lo <= hi, got ({lo}, {hi})")));
        }
        for (name, v) in [
            ("rotation_range", self.rotation_range),
            ("translate_fraction", self.translate_fraction),
            ("shear_range", self.shear_range),
            ("blur_sigma", self.blur_sigma),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(OsdaError::invalid(format!("{name} must be finite and >= 0, got {v}")));
            }
        }
        Ok(())
    }
}

fn sym(rng: &mut ChaCha8Rng, range: f64) -> f64 {
    if range == 0.0 {
        0.0
    } else {
        rng.random_range(-range..=range)
    }
}

/// One draw of the affine parameters: the 2×2 map, its inverse and the
/// translation as fractions of the extent.
struct Affine {
    fwd: [[f64; 2]; 2],
    inv: [[f64; 2]; 2],
    shift: (f64, f64),
}

impl Affine {
    fn sample(cfg: &AugmentConfig, rng: &mut ChaCha8Rng) -> Self {
        let angle = sym(rng, cfg.rotation_range).to_radians();
        let tx = sym(rng, cfg.translate_fraction);
        let ty = sym(rng, cfg.translate_fraction);
        let (lo, hi) = cfg.scale_range;
        let scale = if lo == hi { lo } else { rng.random_range(lo..=hi) };
        let shear = sym(rng, cfg.shear_range).to_radians().tan();
        // forward = scale · R(angle) · [[1, shear], [0, 1]]
        let (s, c) = angle.sin_cos();
        let f = [[scale * c, scale * (c * shear - s)], [scale * s, scale * (s * shear + c)]];
        let det = f[0][0] * f[1][1] - f[0][1] * f[1][0];
        let inv = [[f[1][1] / det, -f[0][1] / det], [-f[1][0] / det, f[0][0] / det]];
        Self {
            fwd: f,
            inv,
            shift: (tx, ty),
        }
    }

    fn source_of(&self, x: f64, y: f64) -> (f64, f64) {
        (
            self.inv[0][0] * x + self.inv[0][1] * y,
            self.inv[1][0] * x + self.inv[1][1] * y,
        )
    }
}

fn warp(img: &[f64], c: usize, h: usize, w: usize, a: &Affine) -> Vec<f64> {
    let (cx, cy) = ((w as f64 - 1.0) / 2.0, (h as f64 - 1.0) / 2.0);
    let (tx, ty) = (a.shift.0 * w as f64, a.shift.1 * h as f64);
    let mut out = vec![0.0; img.len()];
    let at = |ch: usize, yy: isize, xx: isize| -> f64 {
        if yy < 0 || xx < 0 || yy >= h as isize || xx >= w as isize {
            0.0
        } else {
            img[ch * h * w + yy as usize * w + xx as usize]
        }
    };
    for y in 0..h {
        for x in 0..w {
            let (sx, sy) = a.source_of(x as f64 - cx - tx, y as f64 - cy - ty);
            let (sx, sy) = (sx + cx, sy + cy);
            let (x0, y0) = (sx.floor(), sy.floor());
            let (fx, fy) = (sx - x0, sy - y0);
            let (x0, y0) = (x0 as isize, y0 as isize);
            for ch in 0..c {
                let top = at(ch, y0, x0) * (1.0 - fx) + at(ch, y0, x0 + 1) * fx;
                let bottom = at(ch, y0 + 1, x0) * (1.0 - fx) + at(ch, y0 + 1, x0 + 1) * fx;
                out[ch * h * w + y * w + x] = top * (1.0 - fy) + bottom * fy;
            }
        }
    }
    out
}

fn reflect(i: isize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let period = 2 * (n as isize - 1);
    let m = i.rem_euclid(period);
    (if m < n as isize { m } else { period - m }) as usize
}

/// Separable Gaussian blur of a C×H×W image: radius `ceil(3σ)`, normalised
/// kernel, reflect padding. `sigma = 0` returns the input unchanged.
pub fn gaussian_blur(img: &[f64], c: usize, h: usize, w: usize, sigma: f64) -> Vec<f64> {
    if sigma == 0.0 {
        return img.to_vec();
    }
    let r = (3.0 * sigma).ceil() as isize;
    let mut k: Vec<f64> = (-r..=r).map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp()).collect();
    let total: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= total);

    let mut tmp = vec![0.0; img.len()];
    let mut out = vec![0.0; img.len()];
    for ch in 0..c {
        let base = ch * h * w;
        for y in 0..h {
            for x in 0..w {
                tmp[base + y * w + x] = (-r..=r)
                    .zip(&k)
                    .map(|(d, kv)| kv * img[base + y * w + reflect(x as isize + d, w)])
                    .sum();
            }
        }
        for y in 0..h {
            for x in 0..w {
                out[base + y * w + x] = (-r..=r)
                    .zip(&k)
                    .map(|(d, kv)| kv * tmp[base + reflect(y as isize + d, h) * w + x])
                    .sum();
            }
        }
    }
    out
}

/// Random affine plus blur on one C×H×W image, clamped to `[0, 1]`.
pub fn augment_image(img: &[f64], shape: (usize, usize, usize), cfg: &AugmentConfig, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let (c, h, w) = shape;
    let a = Affine::sample(cfg, rng);
    let warped = warp(img, c, h, w, &a);
    let mut out = gaussian_blur(&warped, c, h, w, cfg.blur_sigma);
    out.iter_mut().for_each(|v| *v = v.clamp(0.0, 1.0));
    out
}

fn augment_vector(x: &[f64], center: &[f64], spread: &[f64], cfg: &AugmentConfig, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let a = Affine::sample(cfg, rng);
    let mut out = x.to_vec();
    let d = x.len();
    let mut i = 0;
    while i + 1 < d {
        let (u, v) = (x[i] - center[i], x[i + 1] - center[i + 1]);
        let fu = a.fwd[0][0] * u + a.fwd[0][1] * v;
        let fv = a.fwd[1][0] * u + a.fwd[1][1] * v;
        // written as an offset so the identity map returns x bit for bit
        out[i] = x[i] + (fu - u) + a.shift.0 * spread[i];
        out[i + 1] = x[i + 1] + (fv - v) + a.shift.1 * spread[i + 1];
        i += 2;
    }
    if d % 2 == 1 {
        out[d - 1] += sym(rng, cfg.translate_fraction) * spread[d - 1];
    }
    if cfg.blur_sigma > 0.0 {
        for (o, s) in out.iter_mut().zip(spread) {
            let z: f64 = StandardNormal.sample(rng);
            *o += cfg.blur_sigma * s * z;
        }
    }
    out
}

enum Mode {
    Image(usize, usize, usize),
    Vector { center: Vec<f64>, spread: Vec<f64> },
}

/// Draws pristine negatives and gives each an independent random transform.
pub struct AugmentProvider {
    picks: OriginalProvider,
    cfg: AugmentConfig,
    rng: ChaCha8Rng,
    mode: Mode,
}

/// `pick_rng` chooses negatives, `aug_rng` drives the transforms.
pub fn augment_provider(
    negs: NegativeSet,
    cfg: &AugmentConfig,
    pick_rng: ChaCha8Rng,
    aug_rng: ChaCha8Rng,
) -> Result<AugmentProvider> {
    cfg.validate()?;
    let mode = match *negs.sample_shape() {
        [c, h, w] => Mode::Image(c, h, w),
        _ if cfg.vector_affine => {
            let d: usize = negs.sample_shape().iter().product();
            let n = negs.len().max(1) as f64;
            let center: Vec<f64> = (0..d).map(|j| negs.samples().iter().map(|s| s[j]).sum::<f64>() / n).collect();
            let spread = (0..d)
                .map(|j| {
                    let var = negs.samples().iter().map(|s| (s[j] - center[j]).powi(2)).sum::<f64>() / n;
                    if var > 0.0 {
                        var.sqrt()
                    } else {
                        1.0
                    }
                })
                .collect();
            Mode::Vector { center, spread }
        }
        _ => {
            return Err(OsdaError::invalid(format!(
                "augmentation needs C×H×W image negatives, got sample shape {:?}; use the original or generation \
                 strategy for vector data, or set augment.vector_affine",
                negs.sample_shape()
            )))
        }
    };
    Ok(AugmentProvider {
        picks: original_provider(negs, pick_rng)?,
        cfg: cfg.clone(),
        rng: aug_rng,
        mode,
    })
}

impl NegativeBatchProvider for AugmentProvider {
    fn next_batch(&mut self, batch_size: usize) -> Result<Tensor> {
        let picks = self.picks.draw(batch_size);
        let negs = self.picks.negatives();
        let mut flat = Vec::with_capacity(batch_size * negs.sample_shape().iter().product::<usize>());
        for &i in &picks {
            let x = negs.sample(i);
            flat.extend(match &self.mode {
                Mode::Image(c, h, w) => augment_image(x, (*c, *h, *w), &self.cfg, &mut self.rng),
                Mode::Vector { center, spread } => augment_vector(x, center, spread, &self.cfg, &mut self.rng),
            });
        }
        let mut shape = vec![batch_size];
        shape.extend_from_slice(negs.sample_shape());
        Ok(Tensor::from_vec(flat, shape, &device())?)
    }

    fn sample_shape(&self) -> &[usize] {
        self.picks.sample_shape()
    }
}
