use std::fs;
use std::path::Path;

use ndarray::{ArrayD, ArrayViewD, IxDyn};
use serde::{Deserialize, Serialize};

use super::adam::AdamState;
use super::model::{ModelDims, ModelParams, Param, Tensors};
use super::{lit, HyperParams, Real};
use crate::error::{Error, Result};

pub const CHECKPOINT_SCHEMA: u32 = 1;
const MANIFEST: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub file: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointManifest {
    pub schema_version: u32,
    /// `"f32"` or `"f64"`, little-endian, row-major.
    pub dtype: String,
    pub dims: ModelDims,
    pub hyper: HyperParams,
    pub seed: u64,
    pub epoch: usize,
    pub adam_step: u64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub tensors: Vec<TensorEntry>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint<F> {
    pub params: ModelParams<F>,
    pub adam: AdamState<F>,
    pub hyper: HyperParams,
    pub epoch: usize,
}

fn dtype_of<F: Real>() -> &'static str {
    if std::mem::size_of::<F>() == 4 {
        "f32"
    } else {
        "f64"
    }
}

fn encode<F: Real>(v: ArrayViewD<F>, dtype: &str) -> Vec<u8> {
    let mut out = Vec::with_capacity(v.len() * if dtype == "f32" { 4 } else { 8 });
    // iteration follows logical (row-major) order regardless of memory layout
    for x in v.iter() {
        let x = x.to_f64().unwrap_or(f64::NAN);
        if dtype == "f32" {
            out.extend_from_slice(&(x as f32).to_le_bytes());
        } else {
            out.extend_from_slice(&x.to_le_bytes());
        }
    }
    out
}

fn decode<F: Real>(bytes: &[u8], dtype: &str, shape: &[usize], path: &Path) -> Result<ArrayD<F>> {
    let width = if dtype == "f32" { 4 } else { 8 };
    let len: usize = shape.iter().product();
    if bytes.len() != len * width {
        return Err(Error::Shape(format!(
            "{}: {} bytes for shape {shape:?} of {dtype}",
            path.display(),
            bytes.len()
        )));
    }
    let values: Vec<F> = bytes
        .chunks_exact(width)
        .map(|c| {
            let v = if width == 4 {
                f32::from_le_bytes(c.try_into().expect("4 bytes")) as f64
            } else {
                f64::from_le_bytes(c.try_into().expect("8 bytes"))
            };
            lit::<F>(v)
        })
        .collect();
    ArrayD::from_shape_vec(IxDyn(shape), values).map_err(|e| Error::Shape(e.to_string()))
}

fn entries<F: Real>(ckpt: &Checkpoint<F>) -> Vec<(String, ArrayViewD<'_, F>)> {
    let mut out = Vec::new();
    for p in Param::ALL {
        out.push((p.name().to_string(), ckpt.params.tensors.view(p)));
    }
    out.push(("bn_running_mean".into(), ckpt.params.running_mean.view().into_dyn()));
    out.push(("bn_running_var".into(), ckpt.params.running_var.view().into_dyn()));
    for p in Param::ALL {
        out.push((format!("adam_m.{}", p.name()), ckpt.adam.m.view(p)));
    }
    for p in Param::ALL {
        out.push((format!("adam_v.{}", p.name()), ckpt.adam.v.view(p)));
    }
    out
}

/// Writes the manifest and one blob per tensor into `dir`, creating it if needed.
pub fn save_checkpoint<F: Real>(dir: &Path, ckpt: &Checkpoint<F>) -> Result<CheckpointManifest> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let dtype = dtype_of::<F>();
    let mut tensors = Vec::new();
    for (name, view) in entries(ckpt) {
        let file = format!("{name}.bin");
        let path = dir.join(&file);
        fs::write(&path, encode(view.view(), dtype)).map_err(|e| Error::io(&path, e))?;
        tensors.push(TensorEntry {
            name,
            shape: view.shape().to_vec(),
            file,
        });
    }
    let manifest = CheckpointManifest {
        schema_version: CHECKPOINT_SCHEMA,
        dtype: dtype.into(),
        dims: ckpt.params.dims(),
        hyper: ckpt.hyper.clone(),
        seed: ckpt.hyper.seed,
        epoch: ckpt.epoch,
        adam_step: ckpt.adam.step,
        adam_beta1: super::adam::BETA1,
        adam_beta2: super::adam::BETA2,
        adam_eps: super::adam::EPS,
        tensors,
    };
    let path = dir.join(MANIFEST);
    let text = serde_json::to_string_pretty(&manifest).map_err(|e| Error::json(&path, e))?;
    fs::write(&path, text + "\n").map_err(|e| Error::io(&path, e))?;
    Ok(manifest)
}

pub fn load_checkpoint<F: Real>(dir: &Path) -> Result<Checkpoint<F>> {
    let path = dir.join(MANIFEST);
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let manifest: CheckpointManifest = serde_json::from_str(&text).map_err(|e| Error::json(&path, e))?;
    if manifest.schema_version != CHECKPOINT_SCHEMA {
        return Err(Error::Config(format!(
            "checkpoint schema {} is not supported",
            manifest.schema_version
        )));
    }
    if manifest.dtype != "f32" && manifest.dtype != "f64" {
        return Err(Error::Config(format!("unknown dtype {}", manifest.dtype)));
    }
    let mut params = ModelParams::from_parts(
        Tensors::zeros(manifest.dims),
        ndarray::Array1::zeros(manifest.dims.hidden),
        ndarray::Array1::zeros(manifest.dims.hidden),
    );
    let mut adam = AdamState::new(&params);
    adam.step = manifest.adam_step;
    let expected: Vec<(String, Vec<usize>)> = {
        let probe = Checkpoint {
            params: params.clone(),
            adam: adam.clone(),
            hyper: manifest.hyper.clone(),
            epoch: manifest.epoch,
        };
        entries(&probe)
            .into_iter()
            .map(|(n, v)| (n, v.shape().to_vec()))
            .collect()
    };
    for (name, shape) in expected {
        let entry = manifest
            .tensors
            .iter()
            .find(|t| t.name == name)
            .ok_or_else(|| Error::Config(format!("checkpoint lacks tensor {name}")))?;
        if entry.shape != shape {
            return Err(Error::Shape(format!(
                "tensor {name} has shape {:?}, expected {shape:?}",
                entry.shape
            )));
        }
        let blob = dir.join(&entry.file);
        let bytes = fs::read(&blob).map_err(|e| Error::io(&blob, e))?;
        let value = decode::<F>(&bytes, &manifest.dtype, &shape, &blob)?;
        let mut target = match name.as_str() {
            "bn_running_mean" => params.running_mean.view_mut().into_dyn(),
            "bn_running_var" => params.running_var.view_mut().into_dyn(),
            n => {
                let (store, base) = if let Some(b) = n.strip_prefix("adam_m.") {
                    (&mut adam.m, b)
                } else if let Some(b) = n.strip_prefix("adam_v.") {
                    (&mut adam.v, b)
                } else {
                    (&mut params.tensors, n)
                };
                let p = Param::ALL
                    .into_iter()
                    .find(|p| p.name() == base)
                    .expect("names come from Param::ALL");
                store.view_mut(p)
            }
        };
        target.assign(&value);
    }
    Ok(Checkpoint {
        params,
        adam,
        hyper: manifest.hyper,
        epoch: manifest.epoch,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn sample() -> Checkpoint<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let params = ModelParams::init(ModelDims::new(4, 3, 2), &mut rng);
        let mut adam = AdamState::new(&params);
        adam.m.conv_in1.mapv_inplace(|_| rng.random());
        adam.v.mlp_b2.mapv_inplace(|_| rng.random());
        adam.step = 17;
        Checkpoint {
            params,
            adam,
            hyper: HyperParams {
                hidden: 3,
                ..Default::default()
            },
            epoch: 9,
        }
    }

    #[test]
    fn save_load_restores_everything() {
        let dir = tempfile::tempdir().unwrap();
        let ckpt = sample();
        save_checkpoint(dir.path(), &ckpt).unwrap();
        let back: Checkpoint<f64> = load_checkpoint(dir.path()).unwrap();
        assert_eq!(back.params.tensors, ckpt.params.tensors);
        assert_eq!(back.params.running_var, ckpt.params.running_var);
        assert_eq!(back.adam, ckpt.adam);
        assert_eq!(back.epoch, 9);
        assert_eq!(back.hyper, ckpt.hyper);
    }

    #[test]
    fn blobs_are_little_endian_row_major() {
        let dir = tempfile::tempdir().unwrap();
        let ckpt = sample();
        save_checkpoint(dir.path(), &ckpt).unwrap();
        let bytes = fs::read(dir.path().join("conv0_out.bin")).unwrap();
        let w = &ckpt.params.tensors.conv_out0;
        assert_eq!(bytes.len(), w.len() * 8);
        let second = f64::from_le_bytes(bytes[8..16].try_into().unwrap());
        assert_eq!(second, w[[0, 1]]);
    }

    #[test]
    fn rejects_truncated_blob() {
        let dir = tempfile::tempdir().unwrap();
        save_checkpoint(dir.path(), &sample()).unwrap();
        fs::write(dir.path().join("mlp_b2.bin"), [0u8; 3]).unwrap();
        assert!(load_checkpoint::<f64>(dir.path()).is_err());
    }
}
