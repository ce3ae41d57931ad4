//! Model checkpoints: a key-value manifest plus one binary file per component.
//!
//! ```text
//! <dir>/model.txt           format, dtype, mode, K, spec.*, loss.*,
//!                           component.<i>.file, component.<i>.tensor.<n> = name:shape
//! <dir>/component_<i>.bin   the component's tensors, concatenated in manifest order
//! ```

use std::path::Path;

use crate::binio;
use crate::error::{CassError, Result};
use crate::kv::KvDoc;
use crate::losses::LossWeights;
use crate::nn::Params;
use crate::real::Real;

use super::{CassModel, Mode, NetworkSpec};

pub const MODEL_MANIFEST: &str = "model.txt";
const FORMAT: &str = "cass-model-v1";

fn shape_string(shape: &[usize]) -> String {
    shape.iter().map(|d| d.to_string()).collect::<Vec<_>>().join("x")
}

pub fn save_model<T: Real>(model: &CassModel<T>, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| CassError::io(dir, e))?;
    let mut doc = KvDoc::new();
    doc.set("format", FORMAT);
    doc.set("dtype", T::DTYPE.name());
    doc.set("mode", model.mode);
    doc.set("k", model.k());
    model.spec().write_kv(&mut doc, "spec");
    model.weights.write_kv(&mut doc, "loss");
    for (i, c) in model.components.iter().enumerate() {
        let file = format!("component_{i}.bin");
        let tensors = c.named_tensors();
        for (n, (name, t)) in tensors.iter().enumerate() {
            doc.set(format!("component.{i}.tensor.{n:03}"), format!("{name}:{}", shape_string(t.shape())));
        }
        let views: Vec<_> = tensors.into_iter().map(|(_, t)| t).collect();
        binio::save_arrays(&dir.join(&file), &views)?;
        doc.set(format!("component.{i}.file"), file);
    }
    doc.write(&dir.join(MODEL_MANIFEST))
}

pub fn load_model<T: Real>(dir: &Path) -> Result<CassModel<T>> {
    let manifest = dir.join(MODEL_MANIFEST);
    let doc = KvDoc::read(&manifest)?;
    let bad = |reason: String| CassError::format(&manifest, reason);
    if doc.get("format") != Some(FORMAT) {
        return Err(bad(format!("expected format = {FORMAT}")));
    }
    if doc.require("dtype")? != T::DTYPE.name() {
        return Err(bad(format!("checkpoint dtype {} does not match {}", doc.require("dtype")?, T::DTYPE.name())));
    }
    let mode: Mode = doc.parse_required("mode")?;
    let k: usize = doc.parse_required("k")?;
    let spec = NetworkSpec::read_kv(&doc, "spec")?;
    let weights = LossWeights::read_kv(&doc, "loss", k)?;
    let mut model = CassModel::<T>::build(&spec, k, mode, weights, 0)?;
    if model.spec().discriminator != spec.discriminator {
        return Err(bad("discriminator flag inconsistent with mode".into()));
    }
    for (i, c) in model.components.iter_mut().enumerate() {
        let expected: Vec<String> = c
            .named_tensors()
            .iter()
            .map(|(name, t)| format!("{name}:{}", shape_string(t.shape())))
            .collect();
        for (n, e) in expected.iter().enumerate() {
            let listed = doc.require(&format!("component.{i}.tensor.{n:03}"))?;
            if listed != e {
                return Err(bad(format!("component {i} tensor {n}: manifest lists `{listed}`, spec implies `{e}`")));
            }
        }
        let path = dir.join(doc.require(&format!("component.{i}.file"))?);
        let arrays = binio::load_arrays::<T>(&path)?;
        if arrays.len() != expected.len() {
            return Err(CassError::format(
                &path,
                format!("expected {} tensors, found {}", expected.len(), arrays.len()),
            ));
        }
        for (mut dst, src) in c.tensors_mut().into_iter().zip(arrays) {
            if dst.shape() != src.shape() {
                return Err(CassError::format(
                    &path,
                    format!("tensor shape {:?} does not match {:?}", src.shape(), dst.shape()),
                ));
            }
            dst.assign(&src);
        }
    }
    if !model.all_finite() {
        return Err(bad("checkpoint contains non-finite parameters".into()));
    }
    Ok(model)
}
