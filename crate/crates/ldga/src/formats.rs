//! Binary feature tensors and model checkpoints.
//!
//! Both formats are little-endian. Values are stored as `f32` and widened to
//! `f64` on load.
//!
//! Feature file: `LDGAFEAT`, then `L`, `N`, `d` as `u32`, then `L * N * d`
//! floats, layer-major and row-major within a layer.
//!
//! Checkpoint file: `LDGACKPT`, `u32` version, then `L`, `d`, `d_ffn`, `kappa`
//! and the tensor count as `u32`. Each tensor follows as a `u32` name length,
//! the UTF-8 name, `u32` rows and cols, and its row-major floats.

use std::fs;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use ldga_core::embed::WalkConfig;
use ldga_core::linalg::Matrix;
use ldga_core::model::{FeatureTensor, ModelConfig, ModelParameters};
use ldga_core::TrainConfig;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const FEATURE_MAGIC: &[u8; 8] = b"LDGAFEAT";
pub const CHECKPOINT_MAGIC: &[u8; 8] = b"LDGACKPT";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum FormatError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{path}: {message}")]
    Invalid { path: PathBuf, message: String },
    #[error("{path}: {source}")]
    Json { path: PathBuf, source: serde_json::Error },
    #[error(transparent)]
    Core(#[from] ldga_core::Error),
}

pub type Result<T, E = FormatError> = std::result::Result<T, E>;

fn invalid(path: &Path, message: impl Into<String>) -> FormatError {
    FormatError::Invalid {
        path: path.to_path_buf(),
        message: message.into(),
    }
}

struct Writer<'a> {
    out: BufWriter<fs::File>,
    path: &'a Path,
}

impl<'a> Writer<'a> {
    fn create(path: &'a Path) -> Result<Self> {
        let file = fs::File::create(path).map_err(|source| FormatError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Ok(Writer {
            out: BufWriter::new(file),
            path,
        })
    }

    fn bytes(&mut self, bytes: &[u8]) -> Result<()> {
        self.out.write_all(bytes).map_err(|source| FormatError::Io {
            path: self.path.to_path_buf(),
            source,
        })
    }

    fn u32(&mut self, v: usize) -> Result<()> {
        let v = u32::try_from(v).map_err(|_| invalid(self.path, format!("{v} exceeds u32")))?;
        self.bytes(&v.to_le_bytes())
    }

    fn floats(&mut self, values: &[f64]) -> Result<()> {
        let mut buf = Vec::with_capacity(values.len() * 4);
        for &v in values {
            buf.extend_from_slice(&(v as f32).to_le_bytes());
        }
        self.bytes(&buf)
    }

    fn finish(mut self) -> Result<()> {
        self.out.flush().map_err(|source| FormatError::Io {
            path: self.path.to_path_buf(),
            source,
        })
    }
}

struct Reader<'a> {
    input: BufReader<fs::File>,
    path: &'a Path,
}

impl<'a> Reader<'a> {
    fn open(path: &'a Path) -> Result<Self> {
        let file = fs::File::open(path).map_err(|source| FormatError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Ok(Reader {
            input: BufReader::new(file),
            path,
        })
    }

    fn bytes(&mut self, n: usize) -> Result<Vec<u8>> {
        let mut buf = vec![0u8; n];
        self.input.read_exact(&mut buf).map_err(|source| match source.kind() {
            io::ErrorKind::UnexpectedEof => invalid(self.path, "truncated file"),
            _ => FormatError::Io {
                path: self.path.to_path_buf(),
                source,
            },
        })?;
        Ok(buf)
    }

    fn magic(&mut self, expected: &[u8; 8]) -> Result<()> {
        if self.bytes(8)? != expected {
            return Err(invalid(self.path, "bad magic bytes"));
        }
        Ok(())
    }

    fn u32(&mut self) -> Result<usize> {
        let b = self.bytes(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]) as usize)
    }

    fn floats(&mut self, n: usize) -> Result<Vec<f64>> {
        let raw = self.bytes(n * 4)?;
        Ok(raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
            .collect())
    }

    fn expect_end(&mut self) -> Result<()> {
        let mut probe = [0u8; 1];
        match self.input.read(&mut probe) {
            Ok(0) => Ok(()),
            Ok(_) => Err(invalid(self.path, "trailing bytes")),
            Err(source) => Err(FormatError::Io {
                path: self.path.to_path_buf(),
                source,
            }),
        }
    }
}

fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|source| FormatError::Json {
        path: path.to_path_buf(),
        source,
    })?;
    fs::write(path, text + "\n").map_err(|source| FormatError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|source| FormatError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    serde_json::from_str(&text).map_err(|source| FormatError::Json {
        path: path.to_path_buf(),
        source,
    })
}

/// `features.bin` -> `features.json`.
pub fn sidecar_path(path: &Path) -> PathBuf {
    path.with_extension("json")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSidecar {
    pub format_version: u32,
    pub num_layers: usize,
    pub num_nodes: usize,
    pub dim: usize,
    /// Walk settings that produced the tensor; absent for external features.
    pub walk: Option<WalkConfig>,
    /// Content hash of the graph the features were computed on.
    pub graph_hash: Option<String>,
}

pub fn write_features(features: &FeatureTensor, path: &Path) -> Result<()> {
    let mut w = Writer::create(path)?;
    w.bytes(FEATURE_MAGIC)?;
    w.u32(features.num_layers())?;
    w.u32(features.num_nodes())?;
    w.u32(features.dim())?;
    for slice in features.slices() {
        w.floats(slice.as_slice())?;
    }
    w.finish()
}

pub fn write_features_with_sidecar(features: &FeatureTensor, sidecar: &FeatureSidecar, path: &Path) -> Result<()> {
    write_features(features, path)?;
    write_json(sidecar, &sidecar_path(path))
}

pub fn read_features(path: &Path) -> Result<FeatureTensor> {
    let mut r = Reader::open(path)?;
    r.magic(FEATURE_MAGIC)?;
    let (layers, nodes, dim) = (r.u32()?, r.u32()?, r.u32()?);
    let mut slices = Vec::with_capacity(layers);
    for _ in 0..layers {
        slices.push(Matrix::from_vec(nodes, dim, r.floats(nodes * dim)?)?);
    }
    r.expect_end()?;
    Ok(FeatureTensor::new(slices)?)
}

pub fn read_feature_sidecar(path: &Path) -> Result<FeatureSidecar> {
    read_json(&sidecar_path(path))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub shape: [usize; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointManifest {
    pub format_version: u32,
    pub model: ModelConfig,
    pub tensors: Vec<TensorEntry>,
    pub train: Option<TrainConfig>,
}

pub fn write_checkpoint(params: &ModelParameters, path: &Path) -> Result<()> {
    let mut w = Writer::create(path)?;
    let config = params.config;
    w.bytes(CHECKPOINT_MAGIC)?;
    w.u32(CHECKPOINT_VERSION as usize)?;
    for v in [config.num_layers, config.dim, config.ffn_dim, config.kappa] {
        w.u32(v)?;
    }
    let tensors = params.tensors();
    w.u32(tensors.len())?;
    for t in &tensors {
        w.u32(t.name.len())?;
        w.bytes(t.name.as_bytes())?;
        w.u32(t.shape.0)?;
        w.u32(t.shape.1)?;
        w.floats(t.data)?;
    }
    w.finish()
}

pub fn checkpoint_manifest(params: &ModelParameters, train: Option<&TrainConfig>) -> CheckpointManifest {
    CheckpointManifest {
        format_version: CHECKPOINT_VERSION,
        model: params.config,
        tensors: params
            .tensors()
            .iter()
            .map(|t| TensorEntry {
                name: t.name.clone(),
                shape: [t.shape.0, t.shape.1],
            })
            .collect(),
        train: train.cloned(),
    }
}

pub fn write_checkpoint_with_manifest(params: &ModelParameters, train: Option<&TrainConfig>, path: &Path) -> Result<()> {
    write_checkpoint(params, path)?;
    write_json(&checkpoint_manifest(params, train), &sidecar_path(path))
}

pub fn read_checkpoint(path: &Path) -> Result<ModelParameters> {
    let mut r = Reader::open(path)?;
    r.magic(CHECKPOINT_MAGIC)?;
    let version = r.u32()?;
    if version != CHECKPOINT_VERSION as usize {
        return Err(invalid(path, format!("unsupported checkpoint version {version}")));
    }
    let config = ModelConfig {
        num_layers: r.u32()?,
        dim: r.u32()?,
        ffn_dim: r.u32()?,
        kappa: r.u32()?,
    };
    config.validate()?;
    let mut params = ModelParameters::zeros(config);
    let count = r.u32()?;
    let mut slots = params.tensors_mut();
    if count != slots.len() {
        return Err(invalid(path, format!("expected {} tensors, found {count}", slots.len())));
    }
    for slot in &mut slots {
        let name_len = r.u32()?;
        let name = String::from_utf8(r.bytes(name_len)?).map_err(|_| invalid(path, "tensor name is not UTF-8"))?;
        let shape = (r.u32()?, r.u32()?);
        if name != slot.name || shape != slot.shape {
            return Err(invalid(
                path,
                format!("tensor {name} {shape:?} does not match expected {} {:?}", slot.name, slot.shape),
            ));
        }
        slot.data.copy_from_slice(&r.floats(shape.0 * shape.1)?);
    }
    drop(slots);
    r.expect_end()?;
    Ok(params)
}

pub fn read_checkpoint_manifest(path: &Path) -> Result<CheckpointManifest> {
    read_json(&sidecar_path(path))
}

pub(crate) fn save_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    write_json(value, path)
}
