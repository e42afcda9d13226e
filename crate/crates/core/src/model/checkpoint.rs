//! Versioned checkpoint container.
//!
//! Layout: the 8-byte magic `OSDACKPT`, a little-endian `u32` schema version,
//! a little-endian `u64` byte length, a JSON document with the [`Header`] and
//! the array index (`name`, `shape` in file order), then every array's
//! values as little-endian `f64`.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ModelConfig, ModelState, ParamMap};
use crate::error::{OsdaError, Result};

pub const SCHEMA_VERSION: u32 = 1;
const MAGIC: &[u8; 8] = b"OSDACKPT";
/// Arrays with this prefix are not model parameters (optimizer buffers).
const AUX_PREFIX: &str = "aux.";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Header {
    pub schema_version: u32,
    /// `model`, `generator` or `discriminator`.
    pub component: String,
    pub feature_dim: Option<usize>,
    pub num_known: Option<usize>,
    pub extractor_kind: Option<String>,
    pub seed: u64,
    pub iteration: usize,
    #[serde(default)]
    pub config: serde_json::Value,
    #[serde(default)]
    pub extra: serde_json::Value,
}

impl Header {
    pub fn new(component: &str, seed: u64, iteration: usize) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            component: component.to_string(),
            feature_dim: None,
            num_known: None,
            extractor_kind: None,
            seed,
            iteration,
            config: serde_json::Value::Null,
            extra: serde_json::Value::Null,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Container {
    pub header: Header,
    pub arrays: ParamMap,
}

#[derive(Serialize, Deserialize)]
struct Index {
    header: Header,
    arrays: Vec<(String, Vec<usize>)>,
}

pub fn write_container(path: impl AsRef<Path>, c: &Container) -> Result<()> {
    let path = path.as_ref();
    let index = Index {
        header: c.header.clone(),
        arrays: c.arrays.iter().map(|(n, (s, _))| (n.clone(), s.clone())).collect(),
    };
    let json = serde_json::to_vec(&index)?;
    let mut buf = Vec::with_capacity(json.len() + 20);
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&SCHEMA_VERSION.to_le_bytes());
    buf.extend_from_slice(&(json.len() as u64).to_le_bytes());
    buf.extend_from_slice(&json);
    for (name, (shape, data)) in &c.arrays {
        if shape.iter().product::<usize>() != data.len() {
            return Err(OsdaError::Checkpoint(format!("array `{name}` size does not match its shape")));
        }
        for v in data {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    let mut f = std::fs::File::create(path).map_err(|e| OsdaError::io(path, e))?;
    f.write_all(&buf).map_err(|e| OsdaError::io(path, e))
}

pub fn read_container(path: impl AsRef<Path>) -> Result<Container> {
    let path = path.as_ref();
    let mut bytes = Vec::new();
    std::fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| OsdaError::io(path, e))?;
    let bad = |m: &str| OsdaError::Checkpoint(format!("{}: {m}", path.display()));
    if bytes.len() < 20 || &bytes[..8] != MAGIC {
        return Err(bad("not a checkpoint file"));
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
    if version != SCHEMA_VERSION {
        return Err(bad(&format!("unsupported schema version {version}")));
    }
    let len = u64::from_le_bytes(bytes[12..20].try_into().unwrap()) as usize;
    let json = bytes.get(20..20 + len).ok_or_else(|| bad("truncated header"))?;
    let index: Index = serde_json::from_slice(json)?;
    let mut pos = 20 + len;
    let mut arrays = ParamMap::new();
    for (name, shape) in index.arrays {
        let n: usize = shape.iter().product();
        let raw = bytes.get(pos..pos + 8 * n).ok_or_else(|| bad("truncated data"))?;
        let data = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        pos += 8 * n;
        arrays.insert(name, (shape, data));
    }
    if pos != bytes.len() {
        return Err(bad("trailing bytes"));
    }
    Ok(Container {
        header: index.header,
        arrays,
    })
}

#[derive(Serialize, Deserialize)]
struct ModelSection {
    model: ModelConfig,
    input_shape: Vec<usize>,
}

/// Save a model plus auxiliary arrays (stored under an `aux.` prefix).
pub fn save_model(
    path: impl AsRef<Path>,
    state: &ModelState,
    seed: u64,
    iteration: usize,
    aux: &ParamMap,
    extra: serde_json::Value,
) -> Result<()> {
    let mut header = Header::new("model", seed, iteration);
    header.feature_dim = Some(state.feature_dim());
    header.num_known = Some(state.num_known());
    header.extractor_kind = Some(state.config().extractor.as_str().to_string());
    header.config = serde_json::to_value(ModelSection {
        model: state.config().clone(),
        input_shape: state.input_shape().to_vec(),
    })?;
    header.extra = extra;
    let mut arrays = state.params()?;
    for (k, v) in aux {
        arrays.insert(format!("{AUX_PREFIX}{k}"), v.clone());
    }
    write_container(path, &Container { header, arrays })
}

/// Load a model checkpoint. A `num_known` that differs from
/// `expected_num_known` is a hard error. Returns the state, the header and
/// the auxiliary arrays with their prefix removed.
pub fn load_model(
    path: impl AsRef<Path>,
    expected_num_known: Option<usize>,
    trainable: bool,
) -> Result<(ModelState, Header, ParamMap)> {
    let c = read_container(path)?;
    if c.header.component != "model" {
        return Err(OsdaError::Checkpoint(format!(
            "expected a model checkpoint, found component `{}`",
            c.header.component
        )));
    }
    let num_known = c
        .header
        .num_known
        .ok_or_else(|| OsdaError::Checkpoint("header lacks num_known".into()))?;
    if let Some(expected) = expected_num_known {
        if expected != num_known {
            return Err(OsdaError::Checkpoint(format!(
                "checkpoint has num_known = {num_known}, expected {expected}"
            )));
        }
    }
    let section: ModelSection = serde_json::from_value(c.header.config.clone())?;
    let (mut params, mut aux) = (ParamMap::new(), ParamMap::new());
    for (k, v) in c.arrays {
        match k.strip_prefix(AUX_PREFIX) {
            Some(rest) => aux.insert(rest.to_string(), v),
            None => params.insert(k, v),
        };
    }
    let state = ModelState::from_params(&section.model, &section.input_shape, num_known, &params, trainable)?;
    Ok((state, c.header, aux))
}
