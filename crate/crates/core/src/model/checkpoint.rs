//! Binary checkpoint format: an 8-byte little-endian header length, a JSON
//! header, then the raw little-endian tensor data.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::optim::Adam;
use crate::model::params::ParamStore;
use crate::model::transformer::{HeadKind, ModelConfig, Transformer};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Dtype {
    F32,
    F64,
}

impl Dtype {
    fn width(self) -> usize {
        match self {
            Dtype::F32 => 4,
            Dtype::F64 => 8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: [usize; 2],
    dtype: Dtype,
    offset: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct AdamHeader {
    beta1: f64,
    beta2: f64,
    eps: f64,
    step: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Header {
    version: u32,
    config: ModelConfig,
    step: u64,
    #[serde(default)]
    head: Option<HeadKind>,
    #[serde(default)]
    meta: BTreeMap<String, String>,
    #[serde(default)]
    optimizer: Option<AdamHeader>,
    tensors: Vec<TensorEntry>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config: ModelConfig,
    pub params: ParamStore,
    pub optimizer: Option<Adam>,
    pub step: u64,
    pub head: Option<HeadKind>,
    pub meta: BTreeMap<String, String>,
}

impl Checkpoint {
    pub fn from_model(model: &Transformer, optimizer: Option<&Adam>, step: u64, head: Option<HeadKind>) -> Self {
        Checkpoint {
            config: model.config.clone(),
            params: model.params.clone(),
            optimizer: optimizer.cloned(),
            step,
            head,
            meta: BTreeMap::new(),
        }
    }

    pub fn model(&self) -> Result<Transformer> {
        Transformer::from_params(self.config.clone(), self.params.clone())
    }

    pub fn to_bytes(&self, dtype: Dtype) -> Result<Vec<u8>> {
        let mut tensors = Vec::new();
        let mut body: Vec<u8> = Vec::new();
        let mut push = |name: String, shape: [usize; 2], data: &[f64], body: &mut Vec<u8>| {
            tensors.push(TensorEntry { name, shape, dtype, offset: body.len() });
            for &x in data {
                match dtype {
                    Dtype::F32 => body.extend_from_slice(&(x as f32).to_le_bytes()),
                    Dtype::F64 => body.extend_from_slice(&x.to_le_bytes()),
                }
            }
        };
        for id in self.params.ids() {
            push(self.params.name(id).to_string(), self.params.shape(id), self.params.get(id), &mut body);
        }
        if let Some(adam) = &self.optimizer {
            if adam.m.len() != self.params.len() {
                return Err(Error::Checkpoint("optimizer state does not match parameters".into()));
            }
            for id in self.params.ids() {
                let name = self.params.name(id);
                push(format!("adam.m.{name}"), self.params.shape(id), &adam.m[id], &mut body);
                push(format!("adam.v.{name}"), self.params.shape(id), &adam.v[id], &mut body);
            }
        }
        let header = Header {
            version: FORMAT_VERSION,
            config: self.config.clone(),
            step: self.step,
            head: self.head,
            meta: self.meta.clone(),
            optimizer: self
                .optimizer
                .as_ref()
                .map(|a| AdamHeader { beta1: a.beta1, beta2: a.beta2, eps: a.eps, step: a.step }),
            tensors,
        };
        let json = serde_json::to_vec(&header)?;
        let mut out = Vec::with_capacity(8 + json.len() + body.len());
        out.extend_from_slice(&(json.len() as u64).to_le_bytes());
        out.extend_from_slice(&json);
        out.extend_from_slice(&body);
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |m: &str| Error::Checkpoint(m.to_string());
        if bytes.len() < 8 {
            return Err(bad("file too short for a header"));
        }
        let hlen = u64::from_le_bytes(bytes[..8].try_into().expect("8 bytes")) as usize;
        let body_start = 8usize.checked_add(hlen).filter(|&e| e <= bytes.len()).ok_or_else(|| bad("truncated header"))?;
        let header: Header =
            serde_json::from_slice(&bytes[8..body_start]).map_err(|e| Error::Checkpoint(format!("bad header: {e}")))?;
        if header.version != FORMAT_VERSION {
            return Err(Error::Checkpoint(format!("unsupported checkpoint version {}", header.version)));
        }
        header.config.validate()?;
        let body = &bytes[body_start..];
        let mut tensors: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
        let mut params = ParamStore::new();
        for t in &header.tensors {
            let n = t.shape[0] * t.shape[1];
            let end = t.offset + n * t.dtype.width();
            if end > body.len() {
                return Err(Error::Checkpoint(format!("tensor '{}' runs past end of file", t.name)));
            }
            let raw = &body[t.offset..end];
            let data: Vec<f64> = match t.dtype {
                Dtype::F32 => raw.chunks_exact(4).map(|c| f64::from(f32::from_le_bytes(c.try_into().unwrap()))).collect(),
                Dtype::F64 => raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect(),
            };
            if t.name.starts_with("adam.") {
                tensors.insert(&t.name, data);
            } else {
                params.add(&t.name, t.shape, data)?;
            }
        }
        let optimizer = match header.optimizer {
            None => None,
            Some(h) => {
                let mut adam = Adam::new(&params);
                adam.beta1 = h.beta1;
                adam.beta2 = h.beta2;
                adam.eps = h.eps;
                adam.step = h.step;
                for id in params.ids() {
                    let name = params.name(id);
                    let m = tensors.remove(format!("adam.m.{name}").as_str());
                    let v = tensors.remove(format!("adam.v.{name}").as_str());
                    match (m, v) {
                        (Some(m), Some(v)) => {
                            adam.m[id] = m;
                            adam.v[id] = v;
                        }
                        _ => return Err(Error::Checkpoint(format!("missing optimizer moments for '{name}'"))),
                    }
                }
                Some(adam)
            }
        };
        Ok(Checkpoint { config: header.config, params, optimizer, step: header.step, head: header.head, meta: header.meta })
    }

    pub fn save(&self, path: &Path, dtype: Dtype) -> Result<()> {
        std::fs::write(path, self.to_bytes(dtype)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}
