//! The one-vs-all open-set network: a shared feature extractor, a linear
//! closed-set head over the known classes and an open-set head holding one
//! (unknown, known) logit pair per known class.

mod checkpoint;
mod layers;

use candle_core::{Tensor, Var};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use checkpoint::{load_model, read_container, save_model, write_container, Container, Header, SCHEMA_VERSION};
pub use layers::{to_param_map, Activation, Conv2d, ConvTranspose2d, Init, Linear, ParamBuilder, ParamMap, RadialLayer};

use crate::error::{OsdaError, Result};
use crate::ops::{self, device};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExtractorKind {
    /// Fully connected stack for vector data.
    Mlp,
    /// A layer of Gaussian radial units with learnable centres and widths,
    /// then the MLP stack. Responses vanish away from every centre.
    Rbf,
    /// Three stride-2 3×3 convolutions plus a linear projection, for C×H×W
    /// inputs with H and W divisible by 8.
    Cnn,
    /// Features are the flattened input. For hand-built models and tests.
    Identity,
}

impl ExtractorKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ExtractorKind::Mlp => "mlp",
            ExtractorKind::Rbf => "rbf",
            ExtractorKind::Cnn => "cnn",
            ExtractorKind::Identity => "identity",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub extractor: ExtractorKind,
    pub feature_dim: usize,
    /// Hidden widths of the MLP extractor. For `rbf` the first entry is the
    /// number of radial units.
    pub hidden: Vec<usize>,
    /// Initial radial unit width and the std of the initial centres, both in
    /// (normalised) input units.
    pub rbf_width: f64,
    pub rbf_center_std: f64,
    /// Output channels of the three CNN blocks.
    pub cnn_channels: Vec<usize>,
    pub activation: Activation,
    /// Marks the extractor weights as coming from an external pretrained
    /// backbone; the optimizer then uses the pretrained learning rate for it.
    pub pretrained_extractor: bool,
    /// Optional per-channel (images) or per-feature (vectors) normalisation
    /// applied inside the network. Data itself stays in its natural range.
    pub input_mean: Option<Vec<f64>>,
    pub input_std: Option<Vec<f64>>,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            extractor: ExtractorKind::Mlp,
            feature_dim: 32,
            hidden: vec![64],
            rbf_width: 1.0,
            rbf_center_std: 1.0,
            cnn_channels: vec![16, 32, 64],
            activation: Activation::Relu,
            pretrained_extractor: false,
            input_mean: None,
            input_std: None,
        }
    }
}

#[derive(Debug, Clone)]
enum Extractor {
    Mlp(Vec<Linear>),
    Rbf { layer: RadialLayer, mlp: Vec<Linear> },
    Cnn { convs: Vec<Conv2d>, fc: Linear },
    Identity,
}

#[derive(Debug, Clone)]
struct Network {
    extractor: Extractor,
    activation: Activation,
    closed: Linear,
    open: Linear,
    norm: Option<(Tensor, Tensor)>,
}

fn build_network(
    config: &ModelConfig,
    input_shape: &[usize],
    num_known: usize,
    pb: &mut ParamBuilder,
) -> Result<Network> {
    let input_len: usize = input_shape.iter().product();
    pb.push("extractor");
    let extractor = match config.extractor {
        ExtractorKind::Mlp => {
            let mut widths = vec![input_len];
            widths.extend(&config.hidden);
            widths.push(config.feature_dim);
            let layers = widths
                .windows(2)
                .enumerate()
                .map(|(i, w)| Linear::new(pb, &format!("fc{i}"), w[0], w[1]))
                .collect::<Result<Vec<_>>>()?;
            Extractor::Mlp(layers)
        }
        ExtractorKind::Rbf => {
            let units = *config.hidden.first().ok_or_else(|| OsdaError::invalid("rbf extractor needs hidden[0] radial units"))?;
            if !(config.rbf_width > 0.0 && config.rbf_center_std > 0.0) {
                return Err(OsdaError::invalid("rbf_width and rbf_center_std must be positive"));
            }
            let layer = RadialLayer::new(pb, input_len, units, config.rbf_width, config.rbf_center_std)?;
            let mut widths = config.hidden.clone();
            widths.push(config.feature_dim);
            let mlp = widths
                .windows(2)
                .enumerate()
                .map(|(i, w)| Linear::new(pb, &format!("fc{i}"), w[0], w[1]))
                .collect::<Result<Vec<_>>>()?;
            Extractor::Rbf { layer, mlp }
        }
        ExtractorKind::Cnn => {
            let (c, h, w) = match input_shape {
                [c, h, w] if h % 8 == 0 && w % 8 == 0 => (*c, *h, *w),
                other => {
                    return Err(OsdaError::invalid(format!(
                        "cnn extractor needs C×H×W input with H, W divisible by 8, got {other:?}"
                    )))
                }
            };
            if config.cnn_channels.len() != 3 {
                return Err(OsdaError::invalid("cnn_channels must list exactly 3 widths"));
            }
            let mut convs = Vec::new();
            let mut prev = c;
            for (i, &ch) in config.cnn_channels.iter().enumerate() {
                convs.push(Conv2d::new(pb, &format!("conv{i}"), prev, ch, 3, 2, 1)?);
                prev = ch;
            }
            let flat = prev * (h / 8) * (w / 8);
            let fc = Linear::new(pb, "fc", flat, config.feature_dim)?;
            Extractor::Cnn { convs, fc }
        }
        ExtractorKind::Identity => {
            if config.feature_dim != input_len {
                return Err(OsdaError::invalid(format!(
                    "identity extractor needs feature_dim == input size ({input_len}), got {}",
                    config.feature_dim
                )));
            }
            Extractor::Identity
        }
    };
    pb.pop();
    let closed = Linear::new(pb, "closed_head", config.feature_dim, num_known)?;
    let open = Linear::new(pb, "open_head", config.feature_dim, 2 * num_known)?;

    let norm = match (&config.input_mean, &config.input_std) {
        (None, None) => None,
        (Some(m), Some(s)) => {
            let channels = if input_shape.len() == 3 { input_shape[0] } else { input_len };
            if m.len() != channels || s.len() != channels || s.iter().any(|v| *v <= 0.0) {
                return Err(OsdaError::invalid(format!(
                    "input_mean/input_std need {channels} entries with positive std"
                )));
            }
            let shape: Vec<usize> = if input_shape.len() == 3 {
                vec![1, channels, 1, 1]
            } else {
                vec![1, channels]
            };
            Some((
                Tensor::from_vec(m.clone(), shape.as_slice(), &device())?,
                Tensor::from_vec(s.clone(), shape.as_slice(), &device())?,
            ))
        }
        _ => return Err(OsdaError::invalid("input_mean and input_std must be given together")),
    };

    Ok(Network {
        extractor,
        activation: config.activation,
        closed,
        open,
        norm,
    })
}

impl Network {
    fn features(&self, x: &Tensor) -> Result<Tensor> {
        let x = match &self.norm {
            Some((m, s)) => x.broadcast_sub(m)?.broadcast_div(s)?,
            None => x.clone(),
        };
        match &self.extractor {
            Extractor::Mlp(layers) => {
                let mut h = x.flatten_from(1)?;
                for l in layers {
                    h = self.activation.apply(&l.forward(&h)?)?;
                }
                Ok(h)
            }
            Extractor::Rbf { layer, mlp } => {
                let mut h = layer.forward(&x.flatten_from(1)?)?;
                for l in mlp {
                    h = self.activation.apply(&l.forward(&h)?)?;
                }
                Ok(h)
            }
            Extractor::Cnn { convs, fc } => {
                let mut h = x;
                for c in convs {
                    h = self.activation.apply(&c.forward(&h)?)?;
                }
                self.activation.apply(&fc.forward(&h.flatten_from(1)?)?)
            }
            Extractor::Identity => Ok(x.flatten_from(1)?),
        }
    }
}

/// Class index predicted for a target sample, or a rejection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PredictedLabel {
    Known(usize),
    Unknown,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub label: PredictedLabel,
    pub closed_probs: Vec<f64>,
    pub open_known_probs: Vec<f64>,
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate().skip(1) {
        if x > v[best] {
            best = i;
        }
    }
    best
}

impl Prediction {
    /// The inference rule: take the closed-set argmax, keep it when the
    /// matching one-vs-all classifier says known with probability ≥ 0.5,
    /// otherwise reject.
    pub fn from_probs(closed_probs: Vec<f64>, open_known_probs: Vec<f64>) -> Self {
        let k = argmax(&closed_probs);
        let label = if open_known_probs[k] >= 0.5 {
            PredictedLabel::Known(k)
        } else {
            PredictedLabel::Unknown
        };
        Self {
            label,
            closed_probs,
            open_known_probs,
        }
    }

    /// `1 - p_o(ŷ|x)` at the closed-set pseudo-label.
    pub fn rejection_score(&self) -> f64 {
        1.0 - self.open_known_probs[self.pseudo_label()]
    }

    pub fn pseudo_label(&self) -> usize {
        argmax(&self.closed_probs)
    }
}

/// Output of both heads for one batch.
pub struct HeadOutputs {
    pub closed_probs: Tensor,
    pub open_known: Tensor,
}

/// Parameters of the network plus what is needed to rebuild it.
///
/// A trainable state owns one [`Var`] per parameter; a frozen snapshot holds
/// deep copies and cannot be optimized.
pub struct ModelState {
    config: ModelConfig,
    input_shape: Vec<usize>,
    num_known: usize,
    net: Network,
    named: Vec<(String, Tensor)>,
    vars: Vec<(String, Var)>,
}

impl std::fmt::Debug for ModelState {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ModelState")
            .field("extractor", &self.config.extractor)
            .field("input_shape", &self.input_shape)
            .field("feature_dim", &self.config.feature_dim)
            .field("num_known", &self.num_known)
            .field("frozen", &self.is_frozen())
            .finish()
    }
}

impl ModelState {
    pub fn new(
        config: &ModelConfig,
        input_shape: &[usize],
        num_known: usize,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self> {
        Self::check_known(num_known)?;
        let mut pb = ParamBuilder::init(rng);
        let net = build_network(config, input_shape, num_known, &mut pb)?;
        let (named, vars) = pb.finish();
        Ok(Self {
            config: config.clone(),
            input_shape: input_shape.to_vec(),
            num_known,
            net,
            named,
            vars,
        })
    }

    /// Rebuild from explicit parameter values (checkpoints, hand-built
    /// models). Every parameter must be present with the right shape.
    pub fn from_params(
        config: &ModelConfig,
        input_shape: &[usize],
        num_known: usize,
        params: &ParamMap,
        trainable: bool,
    ) -> Result<Self> {
        Self::check_known(num_known)?;
        let mut pb = ParamBuilder::load(params, trainable);
        let net = build_network(config, input_shape, num_known, &mut pb)?;
        let (named, vars) = pb.finish();
        for (name, (_, data)) in params {
            if !named.iter().any(|(n, _)| n == name) {
                return Err(OsdaError::Checkpoint(format!("unexpected parameter `{name}`")));
            }
            if data.iter().any(|v| !v.is_finite()) {
                return Err(OsdaError::NonFinite(format!("parameter `{name}`")));
            }
        }
        Ok(Self {
            config: config.clone(),
            input_shape: input_shape.to_vec(),
            num_known,
            net,
            named,
            vars,
        })
    }

    fn check_known(num_known: usize) -> Result<()> {
        if num_known < 2 {
            return Err(OsdaError::invalid(format!(
                "the model needs at least 2 known classes, got {num_known}"
            )));
        }
        Ok(())
    }

    /// Frozen deep copy; later updates to `self` do not affect it.
    pub fn snapshot(&self) -> Result<Self> {
        Self::from_params(&self.config, &self.input_shape, self.num_known, &self.params()?, false)
    }

    /// Independent trainable deep copy.
    pub fn deep_clone(&self) -> Result<Self> {
        Self::from_params(&self.config, &self.input_shape, self.num_known, &self.params()?, true)
    }

    pub fn is_frozen(&self) -> bool {
        self.vars.is_empty()
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn input_shape(&self) -> &[usize] {
        &self.input_shape
    }

    pub fn num_known(&self) -> usize {
        self.num_known
    }

    pub fn feature_dim(&self) -> usize {
        self.config.feature_dim
    }

    pub fn vars(&self) -> &[(String, Var)] {
        &self.vars
    }

    pub fn named_tensors(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.named.iter().map(|(n, t)| (n.as_str(), t))
    }

    pub fn params(&self) -> Result<ParamMap> {
        to_param_map(self.named_tensors())
    }

    pub fn checksum(&self) -> Result<String> {
        ops::checksum(self.named_tensors())
    }

    pub fn parameter_count(&self) -> usize {
        self.named.iter().map(|(_, t)| t.elem_count()).sum()
    }

    fn check_batch(&self, batch: &Tensor) -> Result<()> {
        let dims = batch.dims();
        if dims.is_empty() || dims[1..] != self.input_shape[..] {
            let mut expected = vec!["B".to_string()];
            expected.extend(self.input_shape.iter().map(|d| d.to_string()));
            return Err(OsdaError::Shape {
                context: "model input",
                expected: format!("({})", expected.join(", ")),
                got: format!("{dims:?}"),
            });
        }
        Ok(())
    }

    fn check_feats(&self, feats: &Tensor) -> Result<()> {
        match feats.dims() {
            [_, d] if *d == self.config.feature_dim => ops::ensure_finite(feats, "features"),
            other => Err(OsdaError::Shape {
                context: "features",
                expected: format!("(B, {})", self.config.feature_dim),
                got: format!("{other:?}"),
            }),
        }
    }

    /// `(B, feature_dim)` features of a `(B, *input_shape)` batch.
    pub fn features(&self, batch: &Tensor) -> Result<Tensor> {
        self.check_batch(batch)?;
        if batch.dims()[0] == 0 {
            return Ok(Tensor::zeros((0, self.config.feature_dim), candle_core::DType::F64, &device())?);
        }
        self.net.features(batch)
    }

    pub fn closed_logits(&self, feats: &Tensor) -> Result<Tensor> {
        self.net.closed.forward(feats)
    }

    /// Open-head logits as `(B, 2, |L_s|)`; row 0 holds the "unknown" logit
    /// of each pair and row 1 the "known" logit.
    pub fn open_logits(&self, feats: &Tensor) -> Result<Tensor> {
        let b = feats.dims()[0];
        Ok(self.net.open.forward(feats)?.reshape((b, 2, self.num_known))?)
    }

    /// Softmax over the closed head, `(B, |L_s|)`.
    pub fn closed_probs(&self, feats: &Tensor) -> Result<Tensor> {
        self.check_feats(feats)?;
        ops::softmax_last(&self.closed_logits(feats)?)
    }

    /// `p_o(ŷ^k|x)` for every class k, `(B, |L_s|)`: a two-way softmax over
    /// each (unknown, known) pair.
    pub fn open_known_probs(&self, feats: &Tensor) -> Result<Tensor> {
        self.check_feats(feats)?;
        self.open_known_unchecked(feats)
    }

    fn open_known_unchecked(&self, feats: &Tensor) -> Result<Tensor> {
        let logits = self.open_logits(feats)?;
        let unknown = logits.narrow(1, 0, 1)?.squeeze(1)?;
        let known = logits.narrow(1, 1, 1)?.squeeze(1)?;
        // softmax of the pair, known component = sigmoid(known - unknown)
        ops::sigmoid(&(known - unknown)?)
    }

    /// Both heads on a raw batch, without the finiteness checks of the
    /// public per-head functions. Used inside training loops.
    pub fn heads(&self, batch: &Tensor) -> Result<HeadOutputs> {
        let feats = self.features(batch)?;
        Ok(HeadOutputs {
            closed_probs: ops::softmax_last(&self.closed_logits(&feats)?)?,
            open_known: self.open_known_unchecked(&feats)?,
        })
    }

    pub fn predict(&self, batch: &Tensor) -> Result<Vec<Prediction>> {
        if batch.dims().first() == Some(&0) {
            self.check_batch(batch)?;
            return Ok(Vec::new());
        }
        let feats = self.features(batch)?;
        let closed = ops::rows(&self.closed_probs(&feats)?)?;
        let open = ops::rows(&self.open_known_probs(&feats)?)?;
        Ok(closed
            .into_iter()
            .zip(open)
            .map(|(c, o)| Prediction::from_probs(c, o))
            .collect())
    }

    /// Predictions over a whole dataset in fixed-size chunks.
    pub fn predict_dataset(&self, ds: &crate::data::DomainDataset) -> Result<Vec<Prediction>> {
        let mut out = Vec::with_capacity(ds.len());
        let idx: Vec<usize> = (0..ds.len()).collect();
        for chunk in idx.chunks(256) {
            out.extend(self.predict(&ds.batch(chunk, &device())?)?);
        }
        Ok(out)
    }
}
