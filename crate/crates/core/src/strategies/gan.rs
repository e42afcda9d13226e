//! Generator/discriminator pair trained on the extracted negatives, with the
//! generator additionally pushed to look known to a frozen classifier.

use std::path::Path;

use candle_core::{backprop::GradStore, Tensor, Var};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{original_provider, NegativeBatchProvider};
use crate::error::{OsdaError, Result};
use crate::losses::{gen_agreement, gen_entropy, value};
use crate::miner::NegativeSet;
use crate::model::{
    read_container, to_param_map, write_container, Activation, Container, Conv2d, ConvTranspose2d, Header, Linear,
    ModelState, ParamBuilder, ParamMap,
};
use crate::ops::{self, device, softplus};
use crate::seeds::{phase, RngBundle, Stream};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GanConfig {
    pub iterations: usize,
    pub batch_size: usize,
    pub lr_g: f64,
    pub lr_d: f64,
    /// Adam moment decay rates.
    pub beta1: f64,
    pub beta2: f64,
    pub latent_dim: usize,
    /// Hidden widths of both MLPs (vector data).
    pub hidden: Vec<usize>,
    /// Channel width of the convolutional variant (image data).
    pub base_channels: usize,
    /// Generator penalty weights. In a full run they come from the loss
    /// weights, so they are not part of the `[gan]` config section.
    #[serde(skip)]
    pub w_gen_ent: f64,
    #[serde(skip)]
    pub w_gen_agree: f64,
    /// Master seed; initialisation, latent draws and real-batch picks use
    /// separate streams of it.
    pub seed: u64,
}

impl Default for GanConfig {
    fn default() -> Self {
        Self {
            iterations: 1000,
            batch_size: 36,
            lr_g: 2e-4,
            lr_d: 2e-4,
            beta1: 0.5,
            beta2: 0.999,
            latent_dim: 64,
            hidden: vec![128, 128],
            base_channels: 32,
            w_gen_ent: 1.0,
            w_gen_agree: 1.0,
            seed: 0,
        }
    }
}

impl GanConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || self.latent_dim == 0 || self.hidden.is_empty() || self.base_channels == 0 {
            return Err(OsdaError::invalid(
                "gan batch_size, latent_dim, base_channels and hidden must be non-empty",
            ));
        }
        for (name, v) in [("lr_g", self.lr_g), ("lr_d", self.lr_d)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(OsdaError::invalid(format!("{name} must be positive, got {v}")));
            }
        }
        for (name, v) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&v) {
                return Err(OsdaError::invalid(format!("{name} must lie in [0, 1), got {v}")));
            }
        }
        for (name, v) in [("w_gen_ent", self.w_gen_ent), ("w_gen_agree", self.w_gen_agree)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(OsdaError::invalid(format!("{name} must be finite and >= 0, got {v}")));
            }
        }
        Ok(())
    }
}

struct Params {
    named: Vec<(String, Tensor)>,
    vars: Vec<(String, Var)>,
}

impl Params {
    fn map(&self) -> Result<ParamMap> {
        to_param_map(self.named.iter().map(|(n, t)| (n.as_str(), t)))
    }
}

fn builder<'a>(init: Option<&'a mut ChaCha8Rng>, load: Option<&'a ParamMap>, trainable: bool) -> ParamBuilder<'a> {
    match (init, load) {
        (Some(rng), _) => ParamBuilder::init(rng),
        (None, Some(map)) => ParamBuilder::load(map, trainable),
        (None, None) => unreachable!("either an rng or a parameter map is given"),
    }
}

enum GenNet {
    /// Hidden layers use ReLU, the output is linear (vector data is not
    /// bounded).
    Mlp(Vec<Linear>),
    /// Linear projection to `2b × H/4 × W/4`, two stride-2 transposed
    /// convolutions, sigmoid output in `[0, 1]`.
    Conv {
        fc: Linear,
        start: (usize, usize, usize),
        up: [ConvTranspose2d; 2],
    },
}

pub struct Generator {
    net: GenNet,
    params: Params,
    latent_dim: usize,
    sample_shape: Vec<usize>,
    scale: Option<DataScale>,
}

/// Per-dimension mean and std of the real negatives. The vector GAN works
/// in standardized units so that neither network depends on where the
/// negatives sit in input space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataScale {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl DataScale {
    /// Zero-variance dimensions keep unit scale.
    pub fn fit(rows: &[Vec<f64>]) -> Self {
        let (n, d) = (rows.len().max(1) as f64, rows.first().map_or(0, Vec::len));
        let mean: Vec<f64> = (0..d).map(|j| rows.iter().map(|r| r[j]).sum::<f64>() / n).collect();
        let std = (0..d)
            .map(|j| {
                let v = rows.iter().map(|r| (r[j] - mean[j]).powi(2)).sum::<f64>() / n;
                if v > 1e-12 {
                    v.sqrt()
                } else {
                    1.0
                }
            })
            .collect();
        Self { mean, std }
    }

    fn tensors(&self) -> Result<(Tensor, Tensor)> {
        let d = self.mean.len();
        Ok((
            Tensor::from_vec(self.mean.clone(), (1, d), &device())?,
            Tensor::from_vec(self.std.clone(), (1, d), &device())?,
        ))
    }
}

impl Generator {
    fn build(cfg: &GanConfig, shape: &[usize], mut pb: ParamBuilder) -> Result<Self> {
        pb.push("generator");
        let net = match *shape {
            [c, h, w] => {
                if h % 4 != 0 || w % 4 != 0 {
                    return Err(OsdaError::invalid(format!("generator needs H, W divisible by 4, got {shape:?}")));
                }
                let b = cfg.base_channels;
                let start = (2 * b, h / 4, w / 4);
                let fc = Linear::new(&mut pb, "fc", cfg.latent_dim, start.0 * start.1 * start.2)?;
                let up = [
                    ConvTranspose2d::new(&mut pb, "up0", 2 * b, b, 4, 2, 1)?,
                    ConvTranspose2d::new(&mut pb, "up1", b, c, 4, 2, 1)?,
                ];
                GenNet::Conv { fc, start, up }
            }
            _ => {
                let d: usize = shape.iter().product();
                let mut widths = vec![cfg.latent_dim];
                widths.extend(&cfg.hidden);
                widths.push(d);
                GenNet::Mlp(
                    widths
                        .windows(2)
                        .enumerate()
                        .map(|(i, w)| Linear::new(&mut pb, &format!("fc{i}"), w[0], w[1]))
                        .collect::<Result<_>>()?,
                )
            }
        };
        pb.pop();
        let (named, vars) = pb.finish();
        Ok(Self {
            net,
            params: Params { named, vars },
            latent_dim: cfg.latent_dim,
            sample_shape: shape.to_vec(),
            scale: None,
        })
    }

    /// `(B, *sample_shape)` samples for a `(B, latent_dim)` code.
    pub fn forward(&self, z: &Tensor) -> Result<Tensor> {
        let b = z.dims()[0];
        let mut shape = vec![b];
        shape.extend_from_slice(&self.sample_shape);
        match &self.net {
            GenNet::Mlp(layers) => {
                let mut h = z.clone();
                for (i, l) in layers.iter().enumerate() {
                    h = l.forward(&h)?;
                    if i + 1 < layers.len() {
                        h = h.relu()?;
                    }
                }
                if let Some(s) = &self.scale {
                    let (mean, std) = s.tensors()?;
                    h = h.broadcast_mul(&std)?.broadcast_add(&mean)?;
                }
                Ok(h.reshape(shape)?)
            }
            GenNet::Conv { fc, start, up } => {
                let h = fc.forward(z)?.reshape((b, start.0, start.1, start.2))?.relu()?;
                let h = up[0].forward(&h)?.relu()?;
                ops::sigmoid(&up[1].forward(&h)?)
            }
        }
    }

    pub fn latent_dim(&self) -> usize {
        self.latent_dim
    }
}

enum DiscNet {
    Mlp(Vec<Linear>),
    Conv { convs: [Conv2d; 2], fc: Linear },
}

pub struct Discriminator {
    net: DiscNet,
    params: Params,
    scale: Option<DataScale>,
}

impl Discriminator {
    fn build(cfg: &GanConfig, shape: &[usize], mut pb: ParamBuilder) -> Result<Self> {
        pb.push("discriminator");
        let net = match *shape {
            [c, h, w] => {
                let b = cfg.base_channels;
                let convs = [
                    Conv2d::new(&mut pb, "conv0", c, b, 4, 2, 1)?,
                    Conv2d::new(&mut pb, "conv1", b, 2 * b, 4, 2, 1)?,
                ];
                let fc = Linear::new(&mut pb, "fc", 2 * b * (h / 4) * (w / 4), 1)?;
                DiscNet::Conv { convs, fc }
            }
            _ => {
                let mut widths = vec![shape.iter().product()];
                widths.extend(&cfg.hidden);
                widths.push(1);
                DiscNet::Mlp(
                    widths
                        .windows(2)
                        .enumerate()
                        .map(|(i, w)| Linear::new(&mut pb, &format!("fc{i}"), w[0], w[1]))
                        .collect::<Result<_>>()?,
                )
            }
        };
        pb.pop();
        let (named, vars) = pb.finish();
        Ok(Self {
            net,
            params: Params { named, vars },
            scale: None,
        })
    }

    /// One real/fake logit per sample, shape `(B,)`.
    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let leaky = Activation::LeakyRelu;
        let out = match &self.net {
            DiscNet::Mlp(layers) => {
                let mut h = x.flatten_from(1)?;
                if let Some(s) = &self.scale {
                    let (mean, std) = s.tensors()?;
                    h = h.broadcast_sub(&mean)?.broadcast_div(&std)?;
                }
                for (i, l) in layers.iter().enumerate() {
                    h = l.forward(&h)?;
                    if i + 1 < layers.len() {
                        h = leaky.apply(&h)?;
                    }
                }
                h
            }
            DiscNet::Conv { convs, fc } => {
                let h = leaky.apply(&convs[0].forward(x)?)?;
                let h = leaky.apply(&convs[1].forward(&h)?)?;
                fc.forward(&h.flatten_from(1)?)?
            }
        };
        Ok(out.squeeze(1)?)
    }
}

pub struct GanState {
    pub generator: Generator,
    pub discriminator: Discriminator,
    pub config: GanConfig,
}

impl GanState {
    pub fn new(cfg: &GanConfig, sample_shape: &[usize], rng: &mut ChaCha8Rng) -> Result<Self> {
        let generator = Generator::build(cfg, sample_shape, builder(Some(rng), None, true))?;
        let discriminator = Discriminator::build(cfg, sample_shape, builder(Some(rng), None, true))?;
        Ok(Self {
            generator,
            discriminator,
            config: cfg.clone(),
        })
    }

    fn from_maps(cfg: &GanConfig, sample_shape: &[usize], g: &ParamMap, d: &ParamMap, trainable: bool) -> Result<Self> {
        Ok(Self {
            generator: Generator::build(cfg, sample_shape, builder(None, Some(g), trainable))?,
            discriminator: Discriminator::build(cfg, sample_shape, builder(None, Some(d), trainable))?,
            config: cfg.clone(),
        })
    }

    /// Attach the scale of the real data (vector variant only; images are
    /// already in [0, 1]).
    pub fn with_scale(mut self, scale: Option<DataScale>) -> Result<Self> {
        if let Some(s) = &scale {
            let d: usize = self.sample_shape().iter().product();
            if self.sample_shape().len() == 3 || s.mean.len() != d || s.std.len() != d {
                return Err(OsdaError::invalid("data scale applies to vector samples of matching width"));
            }
        }
        self.generator.scale = scale.clone();
        self.discriminator.scale = scale;
        Ok(self)
    }

    pub fn scale(&self) -> Option<&DataScale> {
        self.generator.scale.as_ref()
    }

    /// Frozen deep copy.
    pub fn snapshot(&self) -> Result<Self> {
        Self::from_maps(
            &self.config,
            self.sample_shape(),
            &self.generator.params.map()?,
            &self.discriminator.params.map()?,
            false,
        )?
        .with_scale(self.scale().cloned())
    }

    pub fn sample_shape(&self) -> &[usize] {
        &self.generator.sample_shape
    }

    pub fn latent(&self, n: usize, rng: &mut ChaCha8Rng) -> Result<Tensor> {
        let z: Vec<f64> = (0..n * self.generator.latent_dim).map(|_| StandardNormal.sample(rng)).collect();
        Ok(Tensor::from_vec(z, (n, self.generator.latent_dim), &device())?)
    }

    /// `n` generated samples, detached from the generator.
    pub fn sample(&self, n: usize, rng: &mut ChaCha8Rng) -> Result<Tensor> {
        Ok(self.generator.forward(&self.latent(n, rng)?)?.detach())
    }

    /// Mean `D(G(z))` over `n` fresh codes.
    pub fn mean_fake_score(&self, n: usize, rng: &mut ChaCha8Rng) -> Result<f64> {
        let x = self.sample(n, rng)?;
        value(&ops::sigmoid(&self.discriminator.forward(&x)?)?.mean_all()?)
    }

    /// Parameter checksums of the generator and the discriminator.
    pub fn checksums(&self) -> Result<(String, String)> {
        let c = |p: &Params| ops::checksum(p.named.iter().map(|(n, t)| (n.as_str(), t)));
        Ok((c(&self.generator.params)?, c(&self.discriminator.params)?))
    }
}

/// Adam over one set of variables.
struct Adam {
    lr: f64,
    b1: f64,
    b2: f64,
    t: i32,
    m: Vec<Tensor>,
    v: Vec<Tensor>,
}

impl Adam {
    const EPS: f64 = 1e-8;

    fn new(vars: &[(String, Var)], lr: f64, b1: f64, b2: f64) -> Result<Self> {
        let zeros = || -> Result<Vec<Tensor>> { vars.iter().map(|(_, v)| Ok(v.as_tensor().zeros_like()?)).collect() };
        Ok(Self {
            lr,
            b1,
            b2,
            t: 0,
            m: zeros()?,
            v: zeros()?,
        })
    }

    fn step(&mut self, vars: &[(String, Var)], grads: &GradStore) -> Result<()> {
        self.t += 1;
        let c1 = 1.0 - self.b1.powi(self.t);
        let c2 = 1.0 - self.b2.powi(self.t);
        for (i, (_, var)) in vars.iter().enumerate() {
            let Some(g) = grads.get(var.as_tensor()) else { continue };
            let g = g.detach();
            self.m[i] = ((&self.m[i] * self.b1)? + (&g * (1.0 - self.b1))?)?;
            self.v[i] = ((&self.v[i] * self.b2)? + (g.sqr()? * (1.0 - self.b2))?)?;
            let mhat = (&self.m[i] / c1)?;
            let vhat = (&self.v[i] / c2)?;
            let update = (mhat / (vhat.sqrt()? + Self::EPS)?)?;
            var.set(&(var.as_tensor().detach() - (update * self.lr)?)?)?;
        }
        Ok(())
    }
}

/// Loss values of one GAN iteration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GanStep {
    pub iter: usize,
    pub d_loss: f64,
    pub g_adv: f64,
    pub gen_ent: f64,
    pub gen_agree: f64,
    pub g_total: f64,
    /// Mean `D(x)` on the real and fake batches of the discriminator step.
    pub d_real: f64,
    pub d_fake: f64,
}

pub struct GanOutcome {
    /// Last state whose losses were all finite.
    pub state: GanState,
    pub history: Vec<GanStep>,
    /// Set when training stopped on a non-finite loss.
    pub diverged: Option<String>,
}

/// Alternate discriminator and generator steps for `cfg.iterations`. The
/// frozen classifier only supplies gradients to the generator; its
/// parameters never change.
pub fn gan_train(negs: &NegativeSet, frozen: &ModelState, cfg: &GanConfig) -> Result<GanOutcome> {
    cfg.validate()?;
    if !frozen.is_frozen() {
        return Err(OsdaError::invalid("gan_train needs a frozen classifier snapshot"));
    }
    if negs.sample_shape() != frozen.input_shape() {
        return Err(OsdaError::Shape {
            context: "negatives vs classifier input",
            expected: format!("{:?}", frozen.input_shape()),
            got: format!("{:?}", negs.sample_shape()),
        });
    }
    let bundle = RngBundle::new(cfg.seed);
    let mut init_rng = bundle.stream(Stream::Init, phase::GAN, 0);
    let mut latent_rng = bundle.stream(Stream::GanLatent, phase::GAN, 0);
    let mut real = original_provider(negs.clone(), bundle.stream(Stream::NegativeSampling, phase::GAN, 0))?;
    let scale = (negs.sample_shape().len() != 3).then(|| DataScale::fit(negs.samples()));
    let state = GanState::new(cfg, negs.sample_shape(), &mut init_rng)?.with_scale(scale)?;
    let mut opt_d = Adam::new(&state.discriminator.params.vars, cfg.lr_d, cfg.beta1, cfg.beta2)?;
    let mut opt_g = Adam::new(&state.generator.params.vars, cfg.lr_g, cfg.beta1, cfg.beta2)?;
    let mut history = Vec::with_capacity(cfg.iterations);
    let b = cfg.batch_size;

    for iter in 0..cfg.iterations {
        // discriminator: real negatives vs detached fakes
        let x_real = real.next_batch(b)?;
        let x_fake = state.sample(b, &mut latent_rng)?;
        let l_real = state.discriminator.forward(&x_real)?;
        let l_fake = state.discriminator.forward(&x_fake)?;
        let d_loss = (softplus(&l_real.neg()?)?.mean_all()? + softplus(&l_fake)?.mean_all()?)?;
        let d_val = value(&d_loss)?;

        // generator: fool the discriminator and look known to the classifier
        let z = state.latent(b, &mut latent_rng)?;
        let fake = state.generator.forward(&z)?;
        let adv = softplus(&state.discriminator.forward(&fake)?.neg()?)?.mean_all()?;
        let heads = frozen.heads(&fake)?;
        let ent = gen_entropy(&heads.closed_probs)?;
        let agree = gen_agreement(&heads.open_known)?;
        let g_loss = ((&adv + (&ent * cfg.w_gen_ent)?)? + (&agree * cfg.w_gen_agree)?)?;

        let step = GanStep {
            iter,
            d_loss: d_val,
            g_adv: value(&adv)?,
            gen_ent: value(&ent)?,
            gen_agree: value(&agree)?,
            g_total: value(&g_loss)?,
            d_real: value(&ops::sigmoid(&l_real)?.mean_all()?)?,
            d_fake: value(&ops::sigmoid(&l_fake)?.mean_all()?)?,
        };
        if ![step.d_loss, step.g_adv, step.gen_ent, step.gen_agree, step.g_total]
            .iter()
            .all(|v| v.is_finite())
        {
            let detail = format!("non-finite GAN loss at iteration {iter}: {step:?}");
            log::error!("{detail}");
            return Ok(GanOutcome {
                state,
                history,
                diverged: Some(detail),
            });
        }
        opt_d.step(&state.discriminator.params.vars, &d_loss.backward()?)?;
        opt_g.step(&state.generator.params.vars, &g_loss.backward()?)?;
        if iter % 100 == 0 {
            log::info!(
                "gan iter {iter}: d_loss={:.4} g_adv={:.4} gen_ent={:.4} gen_agree={:.4} d_fake={:.3}",
                step.d_loss,
                step.g_adv,
                step.gen_ent,
                step.gen_agree,
                step.d_fake
            );
        }
        history.push(step);
    }
    Ok(GanOutcome {
        state,
        history,
        diverged: None,
    })
}

#[derive(Serialize, Deserialize)]
struct GanSection {
    gan: GanConfig,
    sample_shape: Vec<usize>,
    #[serde(default)]
    scale: Option<DataScale>,
}

/// Write `generator.ckpt` and `discriminator.ckpt` into `dir`.
pub fn save_gan(dir: impl AsRef<Path>, state: &GanState, iteration: usize) -> Result<()> {
    let dir = dir.as_ref();
    let section = serde_json::to_value(GanSection {
        gan: state.config.clone(),
        sample_shape: state.sample_shape().to_vec(),
        scale: state.scale().cloned(),
    })?;
    for (component, params) in [
        ("generator", &state.generator.params),
        ("discriminator", &state.discriminator.params),
    ] {
        let mut header = Header::new(component, state.config.seed, iteration);
        header.config = section.clone();
        header.extra = serde_json::json!({
            "w_gen_ent": state.config.w_gen_ent,
            "w_gen_agree": state.config.w_gen_agree,
        });
        write_container(
            dir.join(format!("{component}.ckpt")),
            &Container {
                header,
                arrays: params.map()?,
            },
        )?;
    }
    Ok(())
}

/// Load a frozen GAN from the two checkpoints in `dir`.
pub fn load_gan(dir: impl AsRef<Path>) -> Result<GanState> {
    let dir = dir.as_ref();
    let g = read_container(dir.join("generator.ckpt"))?;
    let d = read_container(dir.join("discriminator.ckpt"))?;
    for (c, want) in [(&g, "generator"), (&d, "discriminator")] {
        if c.header.component != want {
            return Err(OsdaError::Checkpoint(format!(
                "expected component `{want}`, found `{}`",
                c.header.component
            )));
        }
    }
    let section: GanSection = serde_json::from_value(g.header.config.clone())?;
    let mut cfg = section.gan;
    let w = |k: &str| g.header.extra.get(k).and_then(|v| v.as_f64()).unwrap_or(1.0);
    cfg.w_gen_ent = w("w_gen_ent");
    cfg.w_gen_agree = w("w_gen_agree");
    GanState::from_maps(&cfg, &section.sample_shape, &g.arrays, &d.arrays, false)?.with_scale(section.scale)
}

/// Fresh generator samples for the fine-tune phase; the generator is frozen.
pub struct GenerationProvider {
    gan: GanState,
    rng: ChaCha8Rng,
}

pub fn generation_provider(gan: &GanState, rng: ChaCha8Rng) -> Result<GenerationProvider> {
    Ok(GenerationProvider {
        gan: gan.snapshot()?,
        rng,
    })
}

impl NegativeBatchProvider for GenerationProvider {
    fn next_batch(&mut self, batch_size: usize) -> Result<Tensor> {
        let x = self.gan.sample(batch_size, &mut self.rng)?;
        ops::ensure_finite(&x, "generated negatives")?;
        Ok(x)
    }

    fn sample_shape(&self) -> &[usize] {
        self.gan.sample_shape()
    }
}

#[cfg(test)]
mod tests {
    use super::super::test_util::negatives;
    use super::*;
    use crate::model::ModelConfig;
    use rand::SeedableRng;

    fn frozen(shape: &[usize]) -> ModelState {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let cfg = if shape.len() == 3 {
            ModelConfig {
                extractor: crate::model::ExtractorKind::Cnn,
                cnn_channels: vec![4, 4, 4],
                feature_dim: 8,
                ..Default::default()
            }
        } else {
            ModelConfig::default()
        };
        ModelState::new(&cfg, shape, 2, &mut rng).unwrap().snapshot().unwrap()
    }

    fn small() -> GanConfig {
        GanConfig {
            iterations: 30,
            batch_size: 8,
            latent_dim: 8,
            hidden: vec![16, 16],
            base_channels: 4,
            ..Default::default()
        }
    }

    #[test]
    fn vector_gan_trains_without_touching_classifier() {
        let data: Vec<Vec<f64>> = (0..20).map(|i| vec![10.0 + 0.1 * i as f64, -3.0]).collect();
        let negs = negatives(vec![2], data);
        let m = frozen(&[2]);
        let before = m.checksum().unwrap();
        let out = gan_train(&negs, &m, &small()).unwrap();
        assert!(out.diverged.is_none());
        assert_eq!(out.history.len(), 30);
        assert_eq!(m.checksum().unwrap(), before);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(out.state.sample(5, &mut rng).unwrap().dims(), &[5, 2]);
    }

    #[test]
    fn image_gan_shapes_and_range() {
        let data: Vec<Vec<f64>> = (0..6).map(|i| vec![0.1 * i as f64; 3 * 8 * 8]).collect();
        let negs = negatives(vec![3, 8, 8], data);
        let m = frozen(&[3, 8, 8]);
        let cfg = GanConfig { iterations: 3, ..small() };
        let out = gan_train(&negs, &m, &cfg).unwrap();
        let mut p = generation_provider(&out.state, ChaCha8Rng::seed_from_u64(2)).unwrap();
        let x = p.next_batch(4).unwrap();
        assert_eq!(x.dims(), &[4, 3, 8, 8]);
        assert!(ops::flat(&x).unwrap().iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn training_is_seeded_and_checkpoints_round_trip() {
        let data: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64, 1.0]).collect();
        let negs = negatives(vec![2], data);
        let m = frozen(&[2]);
        let a = gan_train(&negs, &m, &small()).unwrap();
        let b = gan_train(&negs, &m, &small()).unwrap();
        assert_eq!(a.history, b.history);
        assert_eq!(a.state.checksums().unwrap(), b.state.checksums().unwrap());

        let dir = tempfile::tempdir().unwrap();
        save_gan(dir.path(), &a.state, 30).unwrap();
        let back = load_gan(dir.path()).unwrap();
        assert_eq!(back.checksums().unwrap(), a.state.checksums().unwrap());
        let r = || ChaCha8Rng::seed_from_u64(4);
        let x = ops::flat(&generation_provider(&back, r()).unwrap().next_batch(3).unwrap()).unwrap();
        let y = ops::flat(&generation_provider(&a.state, r()).unwrap().next_batch(3).unwrap()).unwrap();
        assert_eq!(x, y);
        assert_eq!(back.scale(), a.state.scale());
    }

    #[test]
    fn data_scale_fit() {
        let s = DataScale::fit(&[vec![1.0, 5.0], vec![3.0, 5.0]]);
        assert_eq!(s.mean, vec![2.0, 5.0]);
        assert_eq!(s.std, vec![1.0, 1.0]);
        let s = DataScale::fit(&[vec![0.0], vec![4.0]]);
        assert_eq!(s.std, vec![2.0]);
    }

    #[test]
    fn zero_weights_leave_a_plain_gan() {
        let data: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64, 1.0]).collect();
        let negs = negatives(vec![2], data);
        let cfg = GanConfig {
            w_gen_ent: 0.0,
            w_gen_agree: 0.0,
            ..small()
        };
        let out = gan_train(&negs, &frozen(&[2]), &cfg).unwrap();
        for s in &out.history {
            assert!((s.g_total - s.g_adv).abs() < 1e-12);
        }
    }
}
