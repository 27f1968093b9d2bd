//! Model bundles: a `model.toml` manifest next to one `.aadt` file per tensor.
//! Quantized weight tensors are stored as `i16` with their scale in the
//! manifest; everything else is stored as `f32`.

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::arch::{ArchConfig, ModelKind};
use super::models::{CnnClassifier, HybridModel, Model, NamedTensor};
use super::quant::QuantizedTensor;
use super::session::QuantizedModel;
use crate::adm::AdmConfig;
use crate::dataset::{read_tensor, write_tensor, Tensor};
use crate::error::{Error, Result};
use crate::snn::LifParams;

pub const MANIFEST_NAME: &str = "model.toml";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LifManifest {
    pub tau_rc: f64,
    pub v_threshold: f64,
    pub v_reset: f64,
    pub t_ref: f64,
    pub dt: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TensorEntry {
    pub name: String,
    pub file: String,
    pub dims: Vec<usize>,
    /// Present for integer-quantized tensors.
    pub scale: Option<f32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckpointManifest {
    pub kind: ModelKind,
    /// Stored weight precision (32 for float).
    pub bits: u32,
    pub arch: ArchConfig,
    pub adm_threshold: Option<f64>,
    pub lif: Option<LifManifest>,
    #[serde(rename = "tensor")]
    pub tensors: Vec<TensorEntry>,
}

/// Writes `model` (float) or `quantized` (integer weights) into `dir`.
pub fn save_checkpoint(
    dir: impl AsRef<Path>,
    arch: &ArchConfig,
    model: &Model,
    quantized: Option<&QuantizedModel>,
) -> Result<()> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let (adm_threshold, lif) = match model {
        Model::Hybrid(h) => {
            let l = h.snn.hidden.lif;
            (
                Some(h.adm.threshold),
                Some(LifManifest { tau_rc: l.tau_rc, v_threshold: l.v_threshold, v_reset: l.v_reset, t_ref: l.t_ref, dt: l.dt }),
            )
        }
        Model::Reference(_) => (None, None),
    };
    let mut tensors = Vec::new();
    for t in model.state() {
        let file = format!("{}.aadt", t.name);
        let q = quantized.and_then(|q| q.tensors.get(&t.name));
        let tensor = match q {
            Some(q) => Tensor::from_i16(q.dims.clone(), q.values.clone())?,
            None => Tensor::from_f32(t.dims.clone(), t.values)?,
        };
        write_tensor(dir.join(&file), &tensor)?;
        tensors.push(TensorEntry { name: t.name, file, dims: t.dims, scale: q.map(|q| q.scale) });
    }
    let manifest = CheckpointManifest {
        kind: model.kind(),
        bits: quantized.map_or(32, |q| q.bits),
        arch: arch.clone(),
        adm_threshold,
        lif,
        tensors,
    };
    let text = toml::to_string(&manifest).map_err(|e| Error::Data(e.to_string()))?;
    let path = dir.join(MANIFEST_NAME);
    std::fs::write(&path, text).map_err(|e| Error::io(path, e))
}

/// Reads a bundle back into a float model, dequantizing integer tensors.
pub fn load_checkpoint(dir: impl AsRef<Path>) -> Result<(Model, CheckpointManifest)> {
    let dir = dir.as_ref();
    let path = dir.join(MANIFEST_NAME);
    let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let manifest: CheckpointManifest =
        toml::from_str(&text).map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
    manifest.arch.validate()?;

    let mut state = Vec::with_capacity(manifest.tensors.len());
    for entry in &manifest.tensors {
        let tensor = read_tensor(dir.join(&entry.file))?;
        if tensor.dims() != entry.dims.as_slice() {
            return Err(Error::shape(format!("tensor {} has dims {:?}, manifest says {:?}", entry.name, tensor.dims(), entry.dims)));
        }
        let values = match (entry.scale, tensor.as_f32(), tensor.as_i16()) {
            (None, Some(v), _) => v.to_vec(),
            (Some(scale), _, Some(v)) => {
                QuantizedTensor { scale, bits: manifest.bits, values: v.to_vec(), dims: entry.dims.clone() }.dequantize()
            }
            _ => return Err(Error::Data(format!("tensor {} has the wrong dtype for its manifest entry", entry.name))),
        };
        state.push(NamedTensor { name: entry.name.clone(), dims: entry.dims.clone(), values, is_weight: entry.scale.is_some() });
    }

    let arch = &manifest.arch;
    let mut model = match manifest.kind {
        ModelKind::Hybrid => {
            let threshold = manifest.adm_threshold.ok_or_else(|| Error::Data("hybrid checkpoint lacks adm_threshold".into()))?;
            let l = manifest.lif.as_ref().ok_or_else(|| Error::Data("hybrid checkpoint lacks lif parameters".into()))?;
            let lif = LifParams { tau_rc: l.tau_rc, v_threshold: l.v_threshold, v_reset: l.v_reset, t_ref: l.t_ref, dt: l.dt };
            lif.validate()?;
            let mut h = HybridModel::zeros(arch, AdmConfig::new(threshold)?);
            h.snn.hidden.lif = lif;
            h.snn.output.lif = lif;
            h.snn.hidden.reset_state();
            h.snn.output.reset_state();
            Model::Hybrid(h)
        }
        ModelKind::Reference => {
            let with_bn = state.iter().any(|t| t.name == "bn.gamma");
            Model::Reference(CnnClassifier::init(arch, with_bn, &mut ChaCha8Rng::seed_from_u64(0)))
        }
    };
    model.load_state(&state)?;
    Ok((model, manifest))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pipeline::quantize_weights;
    use ndarray::Array2;

    fn hybrid() -> Model {
        let arch = ArchConfig { conv_out: 6, ..ArchConfig::default() };
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let a = CnnClassifier::<f32>::init(&arch, true, &mut rng);
        let mut h = HybridModel::from_front_end(a.conv, a.bn.unwrap(), AdmConfig::new(0.35).unwrap(), LifParams::for_stride(64));
        h.snn = crate::snn::SpikingNetwork::init(12, 12, LifParams::for_stride(64), &mut rng);
        Model::Hybrid(h)
    }

    #[test]
    fn float_round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let arch = ArchConfig { conv_out: 6, ..ArchConfig::default() };
        let m = hybrid();
        save_checkpoint(dir.path(), &arch, &m, None).unwrap();
        let (back, manifest) = load_checkpoint(dir.path()).unwrap();
        assert_eq!(back, m);
        assert_eq!(manifest.bits, 32);
        assert_eq!(manifest.adm_threshold, Some(0.35));
    }

    #[test]
    fn quantized_round_trip_matches_dequantized_model() {
        let dir = tempfile::tempdir().unwrap();
        let arch = ArchConfig { conv_out: 6, ..ArchConfig::default() };
        let m = hybrid();
        let q = quantize_weights(&m, 16).unwrap();
        save_checkpoint(dir.path(), &arch, &m, Some(&q)).unwrap();
        let (back, manifest) = load_checkpoint(dir.path()).unwrap();
        assert_eq!(back, q.model);
        assert_eq!(manifest.bits, 16);
        let x = Array2::from_shape_fn((10, 256), |(c, t)| ((c * 31 + t) % 17) as f32 / 17.0);
        assert_eq!(back.predict(x.view()).unwrap(), q.model.predict(x.view()).unwrap());
        let bytes = std::fs::read(dir.path().join("conv.weight.aadt")).unwrap();
        assert_eq!(bytes[5], 1, "weights stored as i16");
    }

    #[test]
    fn corrupt_tensor_names_field() {
        let dir = tempfile::tempdir().unwrap();
        let arch = ArchConfig { conv_out: 6, ..ArchConfig::default() };
        save_checkpoint(dir.path(), &arch, &hybrid(), None).unwrap();
        let p = dir.path().join("bn.gamma.aadt");
        let mut bytes = std::fs::read(&p).unwrap();
        bytes[0] = b'X';
        std::fs::write(&p, bytes).unwrap();
        let err = load_checkpoint(dir.path()).unwrap_err();
        assert!(err.to_string().contains("magic"), "{err}");
    }
}
