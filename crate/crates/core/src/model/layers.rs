use std::collections::BTreeMap;

use candle_core::{Tensor, Var};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{OsdaError, Result};
use crate::ops::device;

/// Flat parameter arrays keyed by dotted name, e.g. `closed_head.weight`.
pub type ParamMap = BTreeMap<String, (Vec<usize>, Vec<f64>)>;

#[derive(Debug, Clone, Copy)]
pub enum Init {
    /// PyTorch-style `U(-1/sqrt(fan_in), 1/sqrt(fan_in))`.
    FanIn(usize),
    Normal(f64),
    Constant(f64),
    Zeros,
}

enum Source<'a> {
    Init(&'a mut ChaCha8Rng),
    Load(&'a ParamMap),
}

/// Creates every parameter of a network, either freshly initialised from a
/// seeded RNG or copied from a [`ParamMap`]. In trainable mode each tensor is
/// backed by a [`Var`] that the optimizer can update in place.
pub struct ParamBuilder<'a> {
    source: Source<'a>,
    trainable: bool,
    prefix: Vec<String>,
    named: Vec<(String, Tensor)>,
    vars: Vec<(String, Var)>,
}

impl<'a> ParamBuilder<'a> {
    pub fn init(rng: &'a mut ChaCha8Rng) -> Self {
        Self {
            source: Source::Init(rng),
            trainable: true,
            prefix: Vec::new(),
            named: Vec::new(),
            vars: Vec::new(),
        }
    }

    pub fn load(map: &'a ParamMap, trainable: bool) -> Self {
        Self {
            source: Source::Load(map),
            trainable,
            prefix: Vec::new(),
            named: Vec::new(),
            vars: Vec::new(),
        }
    }

    pub fn push(&mut self, scope: &str) {
        self.prefix.push(scope.to_string());
    }

    pub fn pop(&mut self) {
        self.prefix.pop();
    }

    fn full_name(&self, name: &str) -> String {
        let mut parts = self.prefix.clone();
        parts.push(name.to_string());
        parts.join(".")
    }

    pub fn tensor(&mut self, name: &str, shape: &[usize], init: Init) -> Result<Tensor> {
        let full = self.full_name(name);
        let n: usize = shape.iter().product();
        let data = match &mut self.source {
            Source::Init(rng) => match init {
                Init::FanIn(fan_in) => {
                    let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
                    (0..n).map(|_| rng.random_range(-bound..bound)).collect()
                }
                Init::Normal(std) => (0..n)
                    .map(|_| std * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, *rng))
                    .collect(),
                Init::Constant(v) => vec![v; n],
                Init::Zeros => vec![0.0; n],
            },
            Source::Load(map) => {
                let (s, d) = map
                    .get(&full)
                    .ok_or_else(|| OsdaError::Checkpoint(format!("missing parameter `{full}`")))?;
                if s.as_slice() != shape {
                    return Err(OsdaError::Shape {
                        context: "checkpoint parameter",
                        expected: format!("{full} {shape:?}"),
                        got: format!("{s:?}"),
                    });
                }
                d.clone()
            }
        };
        let t = Tensor::from_vec(data, shape, &device())?;
        let t = if self.trainable {
            let var = Var::from_tensor(&t)?;
            let t = var.as_tensor().clone();
            self.vars.push((full.clone(), var));
            t
        } else {
            t
        };
        self.named.push((full, t.clone()));
        Ok(t)
    }

    /// All created tensors in creation order, plus their backing variables
    /// (empty unless trainable).
    pub fn finish(self) -> (Vec<(String, Tensor)>, Vec<(String, Var)>) {
        (self.named, self.vars)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    #[default]
    Relu,
    LeakyRelu,
    Tanh,
    /// `exp(-x²)`: bounded support, so inputs far from every unit's band
    /// map to a common null code.
    Gaussian,
}

impl Activation {
    pub fn apply(self, x: &Tensor) -> Result<Tensor> {
        Ok(match self {
            Activation::Relu => x.relu()?,
            // max(x, 0.2x)
            Activation::LeakyRelu => x.maximum(&(x * 0.2)?)?,
            Activation::Tanh => x.tanh()?,
            Activation::Gaussian => x.sqr()?.neg()?.exp()?,
        })
    }
}

/// `exp(-|x - c_j|² / (2 s_j²))` for learnable centres `c_j` and widths
/// `s_j = exp(log_width_j)`.
#[derive(Debug, Clone)]
pub struct RadialLayer {
    centers: Tensor,
    log_width: Tensor,
}

impl RadialLayer {
    pub fn new(pb: &mut ParamBuilder, input: usize, units: usize, width: f64, center_std: f64) -> Result<Self> {
        pb.push("rbf");
        let centers = pb.tensor("centers", &[units, input], Init::Normal(center_std))?;
        let log_width = pb.tensor("log_width", &[units], Init::Constant(width.ln()))?;
        pb.pop();
        Ok(Self { centers, log_width })
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let x2 = x.sqr()?.sum_keepdim(1)?;
        let c2 = self.centers.sqr()?.sum(1)?;
        let cross = x.matmul(&self.centers.t()?)?;
        let d2 = x2.broadcast_add(&c2)?.sub(&cross.affine(2.0, 0.0)?)?.relu()?;
        let inv = self.log_width.affine(-2.0, 0.0)?.exp()?.affine(0.5, 0.0)?;
        Ok(d2.broadcast_mul(&inv)?.neg()?.exp()?)
    }
}

#[derive(Debug, Clone)]
pub struct Linear {
    weight: Tensor,
    bias: Tensor,
}

impl Linear {
    pub fn new(pb: &mut ParamBuilder, name: &str, input: usize, output: usize) -> Result<Self> {
        pb.push(name);
        let weight = pb.tensor("weight", &[output, input], Init::FanIn(input))?;
        let bias = pb.tensor("bias", &[output], Init::FanIn(input))?;
        pb.pop();
        Ok(Self { weight, bias })
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        Ok(x.matmul(&self.weight.t()?)?.broadcast_add(&self.bias)?)
    }

    pub fn out_features(&self) -> usize {
        self.weight.dims()[0]
    }
}

#[derive(Debug, Clone)]
pub struct Conv2d {
    weight: Tensor,
    bias: Tensor,
    stride: usize,
    padding: usize,
}

impl Conv2d {
    pub fn new(
        pb: &mut ParamBuilder,
        name: &str,
        input: usize,
        output: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
    ) -> Result<Self> {
        let fan_in = input * kernel * kernel;
        pb.push(name);
        let weight = pb.tensor("weight", &[output, input, kernel, kernel], Init::FanIn(fan_in))?;
        let bias = pb.tensor("bias", &[output], Init::FanIn(fan_in))?;
        pb.pop();
        Ok(Self {
            weight,
            bias,
            stride,
            padding,
        })
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let y = x.conv2d(&self.weight, self.padding, self.stride, 1, 1)?;
        let c = self.bias.dims()[0];
        Ok(y.broadcast_add(&self.bias.reshape((1, c, 1, 1))?)?)
    }
}

#[derive(Debug, Clone)]
pub struct ConvTranspose2d {
    weight: Tensor,
    bias: Tensor,
    stride: usize,
    padding: usize,
}

impl ConvTranspose2d {
    pub fn new(
        pb: &mut ParamBuilder,
        name: &str,
        input: usize,
        output: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
    ) -> Result<Self> {
        // DCGAN initialisation: N(0, 0.02)
        pb.push(name);
        let weight = pb.tensor("weight", &[input, output, kernel, kernel], Init::Normal(0.02))?;
        let bias = pb.tensor("bias", &[output], Init::Zeros)?;
        pb.pop();
        Ok(Self {
            weight,
            bias,
            stride,
            padding,
        })
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let y = x.conv_transpose2d(&self.weight, self.padding, 0, self.stride, 1)?;
        let c = self.bias.dims()[0];
        Ok(y.broadcast_add(&self.bias.reshape((1, c, 1, 1))?)?)
    }
}

/// Copy the current values of a set of named tensors into a [`ParamMap`].
pub fn to_param_map<'a>(named: impl IntoIterator<Item = (&'a str, &'a Tensor)>) -> Result<ParamMap> {
    named
        .into_iter()
        .map(|(n, t)| Ok((n.to_string(), (t.dims().to_vec(), crate::ops::flat(t)?))))
        .collect()
}
