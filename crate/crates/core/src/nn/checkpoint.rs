//! `CCKP` checkpoint files.
//!
//! Layout, all integers u32 little-endian:
//! magic `CCKP`, version, entry count, then per entry the name length, the
//! UTF-8 name, ndim, each dim, and the f32 little-endian values. Optimizer
//! state is stored under `opt/` (`opt/step`, `opt/m/<param>`, `opt/v/<param>`).

use std::collections::BTreeMap;
use std::path::Path;

use super::adam::AdamState;
use super::model::{Model, ModelConfig};
use super::tensor::Tensor;
use crate::error::{Error, Result};
use crate::io::{ByteReader, ByteWriter};

pub const MAGIC: &[u8; 4] = b"CCKP";
pub const VERSION: u32 = 1;

fn write_entry(w: &mut ByteWriter, name: &str, t: &Tensor<f32>) {
    w.put_str(name);
    w.put_u32(t.shape().len() as u32);
    for &d in t.shape() {
        w.put_u32(d as u32);
    }
    w.put_f32s(t.data());
}

pub fn encode(model: &mut Model<f32>, optimizer: Option<&AdamState<f32>>) -> Result<Vec<u8>> {
    let state = model.state();
    let mut entries: Vec<(String, Tensor<f32>)> = state;
    if let Some(opt) = optimizer {
        let names = model.param_names();
        if opt.m.len() != names.len() && opt.step > 0 {
            return Err(Error::Checkpoint("optimizer state does not match model".into()));
        }
        entries.push(("opt/step".into(), Tensor::from_vec(&[1], vec![opt.step as f32])?));
        let shapes: Vec<Vec<usize>> = model.params_mut().iter().map(|p| p.shape().to_vec()).collect();
        for (i, (name, shape)) in names.iter().zip(&shapes).enumerate() {
            // before the first step the moments are not allocated yet
            let zeros = || vec![0.0; shape.iter().product()];
            let m = opt.m.get(i).cloned().unwrap_or_else(zeros);
            let v = opt.v.get(i).cloned().unwrap_or_else(zeros);
            entries.push((format!("opt/m/{name}"), Tensor::from_vec(shape, m)?));
            entries.push((format!("opt/v/{name}"), Tensor::from_vec(shape, v)?));
        }
    }
    let mut w = ByteWriter::default();
    w.put_bytes(MAGIC);
    w.put_u32(VERSION);
    w.put_u32(entries.len() as u32);
    for (name, t) in &entries {
        write_entry(&mut w, name, t);
    }
    Ok(w.into_inner())
}

/// Rebuilds a model for `config` from checkpoint bytes, validating every
/// stored shape. Returns the optimizer state when one was saved.
pub fn decode(bytes: &[u8], config: &ModelConfig) -> Result<(Model<f32>, Option<AdamState<f32>>)> {
    let mut r = ByteReader::new(bytes);
    let bad = |e: Error| Error::Checkpoint(e.to_string());
    if r.take(4).map_err(bad)? != MAGIC {
        return Err(Error::Checkpoint("missing CCKP magic".into()));
    }
    let version = r.u32().map_err(bad)?;
    if version != VERSION {
        return Err(Error::Checkpoint(format!("unsupported version {version}")));
    }
    let count = r.u32().map_err(bad)? as usize;
    let mut model_entries = Vec::new();
    let mut opt_entries = BTreeMap::new();
    for _ in 0..count {
        let name = r.string().map_err(bad)?;
        let ndim = r.u32().map_err(bad)? as usize;
        let shape = (0..ndim)
            .map(|_| r.u32().map(|d| d as usize))
            .collect::<Result<Vec<_>>>()
            .map_err(bad)?;
        let n: usize = shape.iter().product();
        let data = r.f32s(n).map_err(bad)?;
        let t = Tensor::from_vec(&shape, data)?;
        if let Some(rest) = name.strip_prefix("opt/") {
            opt_entries.insert(rest.to_string(), t);
        } else {
            model_entries.push((name, t));
        }
    }
    if !r.is_at_end() {
        return Err(Error::Checkpoint("trailing bytes".into()));
    }
    let mut model = Model::new(config.clone(), 0)?;
    model.load_state(model_entries.iter().map(|(n, t)| (n.as_str(), t.clone())))?;
    for (_, p) in model.named_params_mut() {
        p.zero_grad();
    }
    let optimizer = match opt_entries.remove("step") {
        None if opt_entries.is_empty() => None,
        None => return Err(Error::Checkpoint("optimizer moments without opt/step".into())),
        Some(step) => {
            let mut state = AdamState::new(super::adam::DEFAULT_LR);
            state.step = step.data().first().copied().unwrap_or(0.0) as u64;
            for (name, p) in model.named_params_mut() {
                for (key, dst) in [("m", &mut state.m), ("v", &mut state.v)] {
                    let t = opt_entries
                        .remove(&format!("{key}/{name}"))
                        .ok_or_else(|| Error::Checkpoint(format!("missing opt/{key}/{name}")))?;
                    if t.shape() != p.shape() {
                        return Err(Error::Shape(format!(
                            "opt/{key}/{name}: stored {:?}, model expects {:?}",
                            t.shape(),
                            p.shape()
                        )));
                    }
                    dst.push(t.into_data());
                }
            }
            if let Some(extra) = opt_entries.keys().next() {
                return Err(Error::Checkpoint(format!("unexpected tensor opt/{extra}")));
            }
            Some(state)
        }
    };
    Ok((model, optimizer))
}

pub fn save(path: &Path, model: &mut Model<f32>, optimizer: Option<&AdamState<f32>>) -> Result<()> {
    let bytes = encode(model, optimizer)?;
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn load(path: &Path, config: &ModelConfig) -> Result<(Model<f32>, Option<AdamState<f32>>)> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes, config)
}
