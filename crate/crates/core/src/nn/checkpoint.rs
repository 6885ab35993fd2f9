//! Checkpoint container:
//!
//! ```text
//! "CCQT0001" | manifest length (u32 LE) | UTF-8 manifest | payload
//! ```
//!
//! The manifest is `key = value` text: the model and CQT configuration, a
//! running-statistics flag, and one `tensor.<name> = shape=AxB offset=O bytes=N`
//! line per tensor. Each tensor occupies `N` payload bytes starting at `O`: the
//! real plane then the imaginary plane as little-endian binary32.

use std::path::Path;

use super::{Model, ModelConfig, NnError, Param, RunningStats};
use crate::ctensor::ComplexTensor;
use crate::dsp::CqtConfig;
use crate::kv::{self, Section};

pub const MAGIC: &[u8; 8] = b"CCQT0001";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub offset: usize,
    pub bytes: usize,
}

/// Parsed container; [`ModelCheckpoint::to_model`] validates it against the configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelCheckpoint {
    pub manifest: String,
    pub entries: Vec<TensorEntry>,
    pub payload: Vec<u8>,
}

fn shape_str(shape: &[usize]) -> String {
    shape.iter().map(|d| d.to_string()).collect::<Vec<_>>().join("x")
}

fn running_tensors(r: &RunningStats) -> (ComplexTensor, ComplexTensor) {
    let c = r.var.len();
    let mean = ComplexTensor::new(&[c], r.mean_re.clone(), r.mean_im.clone()).expect("finite stats");
    let var = ComplexTensor::from_real(&[c], r.var.clone()).expect("finite stats");
    (mean, var)
}

impl ModelCheckpoint {
    pub fn from_model(model: &Model) -> Self {
        let mut tensors: Vec<(String, ComplexTensor)> = model
            .params()
            .iter()
            .map(|p| (p.name.clone(), p.value.clone()))
            .collect();
        if let Some(run) = model.running_stats() {
            for (i, r) in run.iter().enumerate() {
                let (mean, var) = running_tensors(r);
                tensors.push((format!("bn{i}.running_mean"), mean));
                tensors.push((format!("bn{i}.running_var"), var));
            }
        }
        let mut manifest = String::from("# ccqt checkpoint\n");
        manifest += &model.config().render();
        manifest += &model.cqt().render();
        manifest += &format!("state.running_stats = {}\n", model.running_stats().is_some());
        let mut payload = Vec::new();
        let mut entries = Vec::new();
        for (name, t) in tensors {
            let offset = payload.len();
            for v in t.re().iter().chain(t.im()) {
                payload.extend((*v as f32).to_le_bytes());
            }
            let e = TensorEntry {
                name,
                shape: t.shape().to_vec(),
                offset,
                bytes: payload.len() - offset,
            };
            manifest += &format!(
                "tensor.{} = shape={} offset={} bytes={}\n",
                e.name,
                shape_str(&e.shape),
                e.offset,
                e.bytes
            );
            entries.push(e);
        }
        Self {
            manifest,
            entries,
            payload,
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(12 + self.manifest.len() + self.payload.len());
        out.extend(MAGIC);
        out.extend((self.manifest.len() as u32).to_le_bytes());
        out.extend(self.manifest.as_bytes());
        out.extend(&self.payload);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, NnError> {
        if bytes.len() < 8 || &bytes[..4] != b"CCQT" {
            return Err(NnError::BadMagic);
        }
        if &bytes[..8] != MAGIC {
            return Err(NnError::Version(String::from_utf8_lossy(&bytes[4..8]).into_owned()));
        }
        let len_bytes: [u8; 4] = bytes
            .get(8..12)
            .and_then(|b| b.try_into().ok())
            .ok_or_else(|| NnError::Inconsistent("missing manifest length".into()))?;
        let len = u32::from_le_bytes(len_bytes) as usize;
        let manifest = bytes
            .get(12..12 + len)
            .ok_or_else(|| NnError::Inconsistent("manifest runs past end of file".into()))?;
        let manifest = std::str::from_utf8(manifest)
            .map_err(|_| NnError::Inconsistent("manifest is not UTF-8".into()))?
            .to_string();
        let payload = bytes[12 + len..].to_vec();
        let mut entries = Vec::new();
        for e in kv::parse(&manifest).map_err(|e| NnError::Inconsistent(e.to_string()))? {
            if let Some(name) = e.key.strip_prefix("tensor.") {
                entries.push(parse_entry(name, &e.value).map_err(|m| NnError::Inconsistent(format!("line {}: {m}", e.line)))?);
            }
        }
        let mut expected = 0;
        for e in &entries {
            let numel: usize = e.shape.iter().product();
            if e.bytes != numel * 8 {
                return Err(NnError::Inconsistent(format!(
                    "tensor `{}` of shape {} needs {} bytes, manifest declares {}",
                    e.name,
                    shape_str(&e.shape),
                    numel * 8,
                    e.bytes
                )));
            }
            if e.offset != expected {
                return Err(NnError::Inconsistent(format!(
                    "tensor `{}` starts at {}, expected {expected}",
                    e.name, e.offset
                )));
            }
            expected += e.bytes;
        }
        if expected != payload.len() {
            return Err(NnError::Inconsistent(format!(
                "manifest describes {expected} payload bytes, file holds {}",
                payload.len()
            )));
        }
        Ok(Self {
            manifest,
            entries,
            payload,
        })
    }

    fn tensor(&self, e: &TensorEntry) -> Result<ComplexTensor, NnError> {
        let vals: Vec<f64> = self.payload[e.offset..e.offset + e.bytes]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
            .collect();
        let half = vals.len() / 2;
        let (re, im) = vals.split_at(half);
        ComplexTensor::new(&e.shape, re.to_vec(), im.to_vec())
            .map_err(|err| NnError::Inconsistent(format!("tensor `{}`: {err}", e.name)))
    }

    pub fn to_model(&self) -> Result<Model, NnError> {
        let mut config = ModelConfig::default();
        let mut cqt = CqtConfig::default();
        let mut has_running = false;
        for e in kv::parse(&self.manifest).map_err(|e| NnError::Inconsistent(e.to_string()))? {
            let at = |m: String| NnError::Inconsistent(format!("line {}: {m}", e.line));
            if let Some(k) = e.key.strip_prefix("model.") {
                config.set(k, &e.value).map_err(at)?;
            } else if let Some(k) = e.key.strip_prefix("cqt.") {
                cqt.set(k, &e.value).map_err(at)?;
            } else if e.key == "state.running_stats" {
                has_running = kv::value(&e.key, &e.value).map_err(at)?;
            } else if !e.key.starts_with("tensor.") {
                return Err(at(format!("unknown key `{}`", e.key)));
            }
        }
        let mut params = Vec::new();
        let mut running_parts = Vec::new();
        for e in &self.entries {
            let t = self.tensor(e)?;
            if e.name.contains(".running_") {
                running_parts.push(t);
            } else {
                params.push(Param {
                    name: e.name.clone(),
                    value: t,
                });
            }
        }
        let running = if has_running {
            if running_parts.len() != 8 {
                return Err(NnError::Inconsistent("expected 4 pairs of running statistics".into()));
            }
            Some(
                running_parts
                    .chunks(2)
                    .map(|p| RunningStats {
                        mean_re: p[0].re().to_vec(),
                        mean_im: p[0].im().to_vec(),
                        var: p[1].re().to_vec(),
                    })
                    .collect(),
            )
        } else {
            None
        };
        Model::from_parts(config, cqt, params, running)
    }
}

fn parse_entry(name: &str, v: &str) -> Result<TensorEntry, String> {
    let mut shape = None;
    let mut offset = None;
    let mut bytes = None;
    for part in v.split_whitespace() {
        let (k, val) = part.split_once('=').ok_or_else(|| format!("bad tensor field `{part}`"))?;
        match k {
            "shape" => shape = Some(kv::list::<usize>("shape", &val.replace('x', ","))?),
            "offset" => offset = Some(kv::value::<usize>("offset", val)?),
            "bytes" => bytes = Some(kv::value::<usize>("bytes", val)?),
            _ => return Err(format!("unknown tensor field `{k}`")),
        }
    }
    match (shape, offset, bytes) {
        (Some(shape), Some(offset), Some(bytes)) => Ok(TensorEntry {
            name: name.to_string(),
            shape,
            offset,
            bytes,
        }),
        _ => Err(format!("tensor `{name}` needs shape, offset and bytes")),
    }
}

pub fn save_checkpoint(model: &Model, path: impl AsRef<Path>) -> Result<(), NnError> {
    std::fs::write(path, ModelCheckpoint::from_model(model).to_bytes())?;
    Ok(())
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Model, NnError> {
    ModelCheckpoint::from_bytes(&std::fs::read(path)?)?.to_model()
}
