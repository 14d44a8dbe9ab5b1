//! Binary checkpoint: `SSLHAR01`, a u64-LE manifest length, the JSON manifest,
//! then every array as little-endian f32 in manifest order.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::NormStats;
use crate::error::{Error, Result};
use crate::network::{parse_spec, FeatureShape, Model, ModelKind, RunningStats};
use crate::numcore::{Rng, Tensor};

pub const MAGIC: &[u8; 8] = b"SSLHAR01";
pub const FORMAT_VERSION: u32 = 1;

/// A trained model plus what is needed to apply it to raw windows.
#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub model: Model,
    pub classes: Vec<String>,
    pub norm: Option<NormStats>,
    pub rng: Option<Rng>,
}

#[derive(Debug, Serialize, Deserialize)]
struct ArrayEntry {
    name: String,
    dtype: String,
    shape: Vec<usize>,
    /// Byte offset into the payload.
    offset: usize,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Manifest {
    format_version: u32,
    spec: String,
    kind: ModelKind,
    input: [usize; 2],
    n_classes: usize,
    classes: Vec<String>,
    norm: Option<NormStats>,
    rng: Option<Rng>,
    arrays: Vec<ArrayEntry>,
}

fn ck(msg: impl Into<String>) -> Error {
    Error::Checkpoint(msg.into())
}

fn running_names(l: usize) -> (String, String) {
    (format!("running.{l}.mean"), format!("running.{l}.var"))
}

fn named_arrays(model: &Model) -> Vec<(String, &Tensor)> {
    let mut out: Vec<(String, &Tensor)> = model.params().entries().iter().map(|(n, t)| (n.clone(), t)).collect();
    for l in model.bn_levels() {
        let r = model.running(l).expect("bn level");
        let (m, v) = running_names(l);
        out.push((m, &r.mean));
        out.push((v, &r.var));
    }
    out
}

impl Checkpoint {
    pub fn new(model: Model, classes: Vec<String>) -> Self {
        Self { model, classes, norm: None, rng: None }
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let spec = self.model.spec();
        let arrays = named_arrays(&self.model);
        let mut entries = Vec::with_capacity(arrays.len());
        let mut payload = Vec::new();
        for (name, t) in &arrays {
            entries.push(ArrayEntry { name: name.clone(), dtype: "f32".into(), shape: t.shape().to_vec(), offset: payload.len() });
            for v in t.data() {
                payload.extend_from_slice(&(*v as f32).to_le_bytes());
            }
        }
        let manifest = Manifest {
            format_version: FORMAT_VERSION,
            spec: spec.source().to_string(),
            kind: self.model.kind(),
            input: [spec.input().channels, spec.input().len],
            n_classes: spec.n_classes(),
            classes: self.classes.clone(),
            norm: self.norm.clone(),
            rng: self.rng.clone(),
            arrays: entries,
        };
        let json = serde_json::to_vec(&manifest)?;
        let mut out = Vec::with_capacity(16 + json.len() + payload.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(json.len() as u64).to_le_bytes());
        out.extend_from_slice(&json);
        out.extend_from_slice(&payload);
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Checkpoint> {
        if bytes.len() < MAGIC.len() {
            return Err(if MAGIC.starts_with(bytes) { ck("unexpected end of file") } else { ck("not a checkpoint") });
        }
        if &bytes[..8] != MAGIC {
            return Err(ck("not a checkpoint"));
        }
        let len_bytes: [u8; 8] = bytes.get(8..16).ok_or_else(|| ck("unexpected end of file"))?.try_into().expect("8 bytes");
        let json_len = usize::try_from(u64::from_le_bytes(len_bytes)).map_err(|_| ck("manifest too large"))?;
        let json_end = 16usize.checked_add(json_len).ok_or_else(|| ck("manifest too large"))?;
        let json = bytes.get(16..json_end).ok_or_else(|| ck("unexpected end of file"))?;
        let m: Manifest = serde_json::from_slice(json).map_err(|e| ck(format!("bad manifest: {e}")))?;
        if m.format_version != FORMAT_VERSION {
            return Err(ck(format!("format version {} is not supported (expected {FORMAT_VERSION})", m.format_version)));
        }
        let payload = &bytes[json_end..];
        let spec = parse_spec(&m.spec, FeatureShape { channels: m.input[0], len: m.input[1] }, m.n_classes)?;
        let mut model = Model::new(spec, m.kind, 0)?;
        let read = |e: &ArrayEntry| -> Result<Tensor> {
            if e.dtype != "f32" {
                return Err(ck(format!("array `{}` has unsupported dtype {}", e.name, e.dtype)));
            }
            let n: usize = e.shape.iter().product();
            let raw = payload.get(e.offset..e.offset + 4 * n).ok_or_else(|| ck("unexpected end of file"))?;
            let data = raw.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")) as f64).collect();
            Tensor::new(e.shape.clone(), data).map_err(|err| ck(format!("array `{}`: {err}", e.name)))
        };
        let find = |name: &str| m.arrays.iter().find(|e| e.name == name).ok_or_else(|| ck(format!("missing array `{name}`")));
        let names: Vec<(String, Vec<usize>)> =
            model.params().entries().iter().map(|(n, t)| (n.clone(), t.shape().to_vec())).collect();
        for (name, shape) in names {
            let e = find(&name)?;
            if e.shape != shape {
                return Err(ck(format!("array `{name}` has shape {:?}, the network needs {shape:?}", e.shape)));
            }
            let t = read(e)?;
            model.params_mut().insert(name, t);
        }
        for l in model.bn_levels() {
            let (mn, vn) = running_names(l);
            let stats = RunningStats { mean: read(find(&mn)?)?, var: read(find(&vn)?)? };
            model.set_running(l, stats).map_err(|e| ck(e.to_string()))?;
        }
        let expected = m.arrays.iter().map(|e| e.offset + 4 * e.shape.iter().product::<usize>()).max().unwrap_or(0);
        if payload.len() < expected {
            return Err(ck("unexpected end of file"));
        }
        Ok(Checkpoint { model, classes: m.classes, norm: m.norm, rng: m.rng })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_bytes()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Checkpoint> {
        Checkpoint::from_bytes(&std::fs::read(path)?)
    }
}

/// Largest absolute difference relative to the largest magnitude of `a`.
pub fn max_relative_diff(a: &Tensor, b: &Tensor) -> f64 {
    let scale = a.max_abs().max(f64::MIN_POSITIVE);
    a.data().iter().zip(b.data()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max) / scale
}
