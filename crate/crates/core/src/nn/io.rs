//! Weight container.
//!
//! Layout: magic `AWNN`, format version (u32 LE), header length (u64 LE),
//! JSON header, then raw f32 LE tensor payloads in header order. The header
//! carries a tag (`model`, `pgm`, `uap`, `disc`), the layer specs, tensor
//! names/shapes/offsets and free-form metadata.

use super::layer::LayerSpec;
use super::model::{Model, Param};
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::fs;
use std::path::Path;

pub const MAGIC: &[u8; 4] = b"AWNN";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
    /// Offset into the payload, in f32 elements.
    pub offset: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Header {
    pub tag: String,
    #[serde(default)]
    pub input_dim: usize,
    #[serde(default)]
    pub layers: Vec<LayerSpec>,
    pub tensors: Vec<TensorEntry>,
    #[serde(default)]
    pub meta: serde_json::Value,
}

/// A decoded container: header plus one flat buffer per tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct Container {
    pub header: Header,
    pub tensors: Vec<Vec<f32>>,
}

impl Container {
    pub fn new(tag: &str, input_dim: usize, layers: Vec<LayerSpec>, named: Vec<(String, Vec<usize>, Vec<f32>)>, meta: serde_json::Value) -> Self {
        let mut offset = 0;
        let mut entries = Vec::with_capacity(named.len());
        let mut tensors = Vec::with_capacity(named.len());
        for (name, shape, data) in named {
            entries.push(TensorEntry {
                name,
                shape,
                offset,
            });
            offset += data.len();
            tensors.push(data);
        }
        Self {
            header: Header {
                tag: tag.to_string(),
                input_dim,
                layers,
                tensors: entries,
                meta,
            },
            tensors,
        }
    }

    pub fn from_model(model: &Model<f32>, tag: &str, meta: serde_json::Value) -> Self {
        Self::new(
            tag,
            model.input_dim(),
            model.layers().to_vec(),
            model
                .params()
                .iter()
                .map(|p| (p.name.clone(), p.shape.clone(), p.data.clone()))
                .collect(),
            meta,
        )
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let header = serde_json::to_vec(&self.header)?;
        let payload: usize = self.tensors.iter().map(Vec::len).sum();
        let mut out = Vec::with_capacity(16 + header.len() + 4 * payload);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(header.len() as u64).to_le_bytes());
        out.extend_from_slice(&header);
        for t in &self.tensors {
            for v in t {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 4 || &bytes[..4] != MAGIC {
            return Err(Error::BadMagic);
        }
        if bytes.len() < 16 {
            return Err(Error::Truncated("preamble".into()));
        }
        let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
        if version != FORMAT_VERSION {
            return Err(Error::VersionMismatch {
                found: version,
                expected: FORMAT_VERSION,
            });
        }
        let hlen = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
        let body = &bytes[16..];
        if body.len() < hlen {
            return Err(Error::Truncated(format!(
                "header declares {hlen} bytes, {} present",
                body.len()
            )));
        }
        let header: Header = serde_json::from_slice(&body[..hlen])?;
        let payload = &body[hlen..];
        let mut tensors = Vec::with_capacity(header.tensors.len());
        for entry in &header.tensors {
            let n: usize = entry.shape.iter().product();
            let (start, end) = (4 * entry.offset, 4 * (entry.offset + n));
            if payload.len() < end {
                return Err(Error::Truncated(format!(
                    "tensor {} needs bytes {start}..{end}, payload has {}",
                    entry.name,
                    payload.len()
                )));
            }
            tensors.push(
                payload[start..end]
                    .chunks_exact(4)
                    .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
                    .collect(),
            );
        }
        Ok(Self { header, tensors })
    }

    pub fn expect_tag(&self, tag: &str) -> Result<()> {
        if self.header.tag != tag {
            return Err(Error::WrongTag {
                expected: tag.into(),
                found: self.header.tag.clone(),
            });
        }
        Ok(())
    }

    /// Rebuilds the model the container describes.
    pub fn to_model(&self) -> Result<Model<f32>> {
        let mut model = Model::zeros(self.header.input_dim, self.header.layers.clone())?;
        self.load_into(&mut model)?;
        Ok(model)
    }

    /// Copies the stored tensors into an existing graph, which must match
    /// the stored layers exactly.
    pub fn load_into(&self, model: &mut Model<f32>) -> Result<()> {
        if model.input_dim() != self.header.input_dim || model.layers() != self.header.layers.as_slice() {
            return Err(Error::ShapeMismatch(format!(
                "stored graph ({} inputs, {} layers) differs from target graph ({} inputs, {} layers)",
                self.header.input_dim,
                self.header.layers.len(),
                model.input_dim(),
                model.layers().len()
            )));
        }
        let params = self
            .header
            .tensors
            .iter()
            .zip(&self.tensors)
            .map(|(e, d)| Param {
                name: e.name.clone(),
                shape: e.shape.clone(),
                data: d.clone(),
            })
            .collect();
        model.set_params(params)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        write_atomic(path.as_ref(), &self.to_bytes()?)
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => Error::MissingArtifact(path.to_path_buf()),
            _ => Error::Io(e),
        })?;
        Self::from_bytes(&bytes)
    }
}

pub fn save_model(model: &Model<f32>, path: impl AsRef<Path>) -> Result<()> {
    Container::from_model(model, "model", serde_json::Value::Null).write(path)
}

pub fn load_model(path: impl AsRef<Path>) -> Result<Model<f32>> {
    let c = Container::read(path)?;
    c.expect_tag("model")?;
    c.to_model()
}

/// Loads stored weights into `model`, rejecting files built for another graph.
pub fn load_weights_into(model: &mut Model<f32>, path: impl AsRef<Path>) -> Result<()> {
    Container::read(path)?.load_into(model)
}


/// Writes `bytes` to a temporary file beside `path`, then renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    use std::io::Write;
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}
