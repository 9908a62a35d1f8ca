//! Checkpoint container: a structured-text header followed by raw
//! little-endian f32 tensors.
//!
//! Layout (integers little-endian):
//!
//! ```text
//! magic    4 bytes  "SPCK"
//! version  u32
//! hlen     u32      JSON header length
//! header   hlen     {"spec": ModelSpec, "flags": [...], "tensors": [{"name", "shape"}...]}
//! data     ...      tensors as f32 little-endian, in header order
//! ```
//!
//! Tensor order per layer: weight, bias, then for batch-normalized conv
//! blocks gamma, beta, running_mean, running_var.

use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::{ArrayD, IxDyn};
use serde::{Deserialize, Serialize};

use super::layers::Layer;
use super::network::{LayerFlags, Network};
use super::scalar::Scalar;
use super::spec::{ModelSpec, ALL_LAYERS};
use super::ModelError;

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"SPCK";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
}

#[derive(Debug, Serialize, Deserialize)]
struct CheckpointHeader {
    spec: ModelSpec,
    flags: Vec<LayerFlags>,
    tensors: Vec<TensorEntry>,
}

fn layer_tensors<F: Scalar>(name: &str, layer: &Layer<F>) -> Vec<(String, Vec<usize>, Vec<f32>)> {
    let flat = |slice: &[F]| slice.iter().map(|v| v.as_f32()).collect::<Vec<f32>>();
    match layer {
        Layer::Conv(conv) => {
            let mut out = vec![
                (
                    format!("{name}.weight"),
                    conv.weight.shape().to_vec(),
                    flat(conv.weight.as_slice().expect("contiguous")),
                ),
                (
                    format!("{name}.bias"),
                    conv.bias.shape().to_vec(),
                    flat(conv.bias.as_slice().expect("contiguous")),
                ),
            ];
            if let Some(bn) = conv.bn.as_ref() {
                for (suffix, arr) in [
                    ("bn.gamma", &bn.gamma),
                    ("bn.beta", &bn.beta),
                    ("bn.running_mean", &bn.running_mean),
                    ("bn.running_var", &bn.running_var),
                ] {
                    out.push((
                        format!("{name}.{suffix}"),
                        arr.shape().to_vec(),
                        flat(arr.as_slice().expect("contiguous")),
                    ));
                }
            }
            out
        }
        Layer::Fc(fc) => vec![
            (
                format!("{name}.weight"),
                fc.weight.shape().to_vec(),
                flat(fc.weight.as_slice().expect("contiguous")),
            ),
            (
                format!("{name}.bias"),
                fc.bias.shape().to_vec(),
                flat(fc.bias.as_slice().expect("contiguous")),
            ),
        ],
    }
}

/// Write a checkpoint. Weights are stored as f32 regardless of the
/// model's element type.
pub fn save_checkpoint<F: Scalar>(net: &Network<F>, path: &Path) -> Result<(), ModelError> {
    let io = |e| ModelError::Io {
        path: path.to_path_buf(),
        source: e,
    };
    let mut tensors = Vec::new();
    let mut entries = Vec::new();
    for name in ALL_LAYERS {
        for (tname, shape, data) in layer_tensors(name.as_str(), &net.layers()[name.index()]) {
            entries.push(TensorEntry {
                name: tname,
                shape,
            });
            tensors.push(data);
        }
    }
    let header = CheckpointHeader {
        spec: net.spec.clone(),
        flags: net.flags().to_vec(),
        tensors: entries,
    };
    let header_bytes = serde_json::to_vec(&header).expect("header serializes");
    // write-temp-then-rename so a crash never leaves a torn checkpoint
    let tmp = path.with_extension("tmp");
    {
        let mut w = BufWriter::new(std::fs::File::create(&tmp).map_err(io)?);
        w.write_all(CHECKPOINT_MAGIC).map_err(io)?;
        w.write_all(&CHECKPOINT_VERSION.to_le_bytes()).map_err(io)?;
        w.write_all(&(header_bytes.len() as u32).to_le_bytes())
            .map_err(io)?;
        w.write_all(&header_bytes).map_err(io)?;
        for tensor in &tensors {
            for v in tensor {
                w.write_all(&v.to_le_bytes()).map_err(io)?;
            }
        }
        w.flush().map_err(io)?;
    }
    std::fs::rename(&tmp, path).map_err(io)
}

fn read_raw(path: &Path) -> Result<(CheckpointHeader, Vec<ArrayD<f32>>), ModelError> {
    let io = |e| ModelError::Io {
        path: path.to_path_buf(),
        source: e,
    };
    let corrupt = |reason: String| ModelError::CorruptCheckpoint {
        path: path.to_path_buf(),
        reason,
    };
    let mut r = BufReader::new(std::fs::File::open(path).map_err(io)?);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(io)?;
    if &magic != CHECKPOINT_MAGIC {
        return Err(corrupt("bad magic".into()));
    }
    let mut word = [0u8; 4];
    r.read_exact(&mut word).map_err(io)?;
    let version = u32::from_le_bytes(word);
    if version != CHECKPOINT_VERSION {
        return Err(ModelError::CheckpointVersion {
            got: version,
            want: CHECKPOINT_VERSION,
        });
    }
    r.read_exact(&mut word).map_err(io)?;
    let hlen = u32::from_le_bytes(word) as usize;
    let mut header_bytes = vec![0u8; hlen];
    r.read_exact(&mut header_bytes).map_err(io)?;
    let header: CheckpointHeader =
        serde_json::from_slice(&header_bytes).map_err(|e| corrupt(format!("bad header: {e}")))?;
    let mut tensors = Vec::with_capacity(header.tensors.len());
    for entry in &header.tensors {
        let len: usize = entry.shape.iter().product();
        let mut bytes = vec![0u8; len * 4];
        r.read_exact(&mut bytes)
            .map_err(|_| corrupt(format!("truncated tensor {}", entry.name)))?;
        let data: Vec<f32> = bytes
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes(b.try_into().expect("4 bytes")))
            .collect();
        let arr = ArrayD::from_shape_vec(IxDyn(&entry.shape), data)
            .map_err(|e| corrupt(format!("tensor {}: {e}", entry.name)))?;
        tensors.push(arr);
    }
    Ok((header, tensors))
}

fn assign_into<F: Scalar>(
    net: &mut Network<F>,
    header: &CheckpointHeader,
    tensors: &[ArrayD<f32>],
    skip_fc3: bool,
    path: &Path,
) -> Result<(), ModelError> {
    let corrupt = |reason: String| ModelError::CorruptCheckpoint {
        path: path.to_path_buf(),
        reason,
    };
    let mut cursor = 0usize;
    for name in ALL_LAYERS {
        let layer = &mut net.layers_mut()[name.index()];
        let expected = match layer {
            Layer::Conv(c) => {
                if c.bn.is_some() {
                    6
                } else {
                    2
                }
            }
            Layer::Fc(_) => 2,
        };
        let slice = &tensors[cursor..cursor + expected];
        let entries = &header.tensors[cursor..cursor + expected];
        cursor += expected;
        if skip_fc3 && name == super::spec::LayerName::Fc3 {
            continue;
        }
        let take = |idx: usize, want_shape: &[usize]| -> Result<Vec<F>, ModelError> {
            if entries[idx].shape != want_shape {
                return Err(corrupt(format!(
                    "{}: shape {:?} does not match model {:?}",
                    entries[idx].name, entries[idx].shape, want_shape
                )));
            }
            Ok(slice[idx].iter().map(|&v| F::of_f32(v)).collect())
        };
        match layer {
            Layer::Conv(conv) => {
                let w = take(0, conv.weight.shape())?;
                conv.weight = ndarray::Array4::from_shape_vec(conv.weight.raw_dim(), w)
                    .expect("shape checked");
                let b = take(1, conv.bias.shape())?;
                conv.bias = ndarray::Array1::from_vec(b);
                if let Some(bn) = conv.bn.as_mut() {
                    bn.gamma = ndarray::Array1::from_vec(take(2, bn.gamma.shape())?);
                    bn.beta = ndarray::Array1::from_vec(take(3, bn.beta.shape())?);
                    bn.running_mean = ndarray::Array1::from_vec(take(4, bn.running_mean.shape())?);
                    bn.running_var = ndarray::Array1::from_vec(take(5, bn.running_var.shape())?);
                }
            }
            Layer::Fc(fc) => {
                let w = take(0, fc.weight.shape())?;
                fc.weight =
                    ndarray::Array2::from_shape_vec(fc.weight.raw_dim(), w).expect("shape checked");
                fc.bias = ndarray::Array1::from_vec(take(1, fc.bias.shape())?);
            }
        }
    }
    Ok(())
}

/// Load a checkpoint into a freshly built network of the stored spec.
pub fn load_checkpoint<F: Scalar>(path: &Path) -> Result<Network<F>, ModelError> {
    let (header, tensors) = read_raw(path)?;
    let mut net = Network::<F>::init(&header.spec, 0)?;
    assign_into(&mut net, &header, &tensors, false, path)?;
    net.set_flags(header.flags.clone());
    Ok(net)
}

/// Load a checkpoint for a task with `num_classes` classes: every layer
/// is restored except fc3, which is re-initialized from `seed` whenever
/// the class counts differ.
pub fn load_for_transfer<F: Scalar>(
    path: &Path,
    num_classes: usize,
    seed: u64,
) -> Result<Network<F>, ModelError> {
    let (header, tensors) = read_raw(path)?;
    let retarget = header.spec.num_classes != num_classes;
    let mut spec = header.spec.clone();
    spec.num_classes = num_classes;
    let mut net = Network::<F>::init(&spec, seed)?;
    assign_into(&mut net, &header, &tensors, retarget, path)?;
    if retarget {
        net.reinit_fc3(num_classes, seed.wrapping_add(1));
    }
    Ok(net)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::spec::{LayerName, ModelSpec};

    #[test]
    fn round_trip_is_bit_identical_including_flags() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        let mut net = Network::<f32>::init(&ModelSpec::smoke(3, 32), 5).unwrap();
        net.set_layer_mode(LayerName::Conv2, crate::model::LayerMode::Frozen)
            .unwrap();
        save_checkpoint(&net, &path).unwrap();
        let back: Network<f32> = load_checkpoint(&path).unwrap();
        assert_eq!(back.checksum_all(), net.checksum_all());
        assert_eq!(back.flags(), net.flags());
        assert_eq!(back.spec, net.spec);
    }

    #[test]
    fn truncated_file_is_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        let net = Network::<f32>::init(&ModelSpec::smoke(3, 32), 5).unwrap();
        save_checkpoint(&net, &path).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() - 64]).unwrap();
        assert!(matches!(
            load_checkpoint::<f32>(&path),
            Err(ModelError::CorruptCheckpoint { .. })
        ));
    }

    #[test]
    fn version_mismatch_names_both_versions() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        let net = Network::<f32>::init(&ModelSpec::smoke(3, 32), 5).unwrap();
        save_checkpoint(&net, &path).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        bytes[4..8].copy_from_slice(&9u32.to_le_bytes());
        std::fs::write(&path, &bytes).unwrap();
        match load_checkpoint::<f32>(&path) {
            Err(ModelError::CheckpointVersion { got: 9, want: 1 }) => {}
            other => panic!("unexpected: {other:?}"),
        }
    }

    #[test]
    fn transfer_load_restores_all_but_fc3() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("image.ckpt");
        let net = Network::<f32>::init(&ModelSpec::smoke(3, 32), 5).unwrap();
        save_checkpoint(&net, &path).unwrap();
        let video: Network<f32> = load_for_transfer(&path, 4, 77).unwrap();
        assert_eq!(video.num_classes(), 4);
        // everything up to fc2 matches the source bit for bit
        let prefix = &ALL_LAYERS[..7];
        assert_eq!(
            video.checksum_layers(prefix),
            net.checksum_layers(prefix)
        );
        assert_ne!(
            video.checksum_layers(&[LayerName::Fc3]),
            net.checksum_layers(&[LayerName::Fc3])
        );
    }

    #[test]
    fn transfer_load_same_classes_keeps_fc3() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("image.ckpt");
        let net = Network::<f32>::init(&ModelSpec::smoke(3, 32), 5).unwrap();
        save_checkpoint(&net, &path).unwrap();
        let same: Network<f32> = load_for_transfer(&path, 3, 77).unwrap();
        assert_eq!(same.checksum_all(), net.checksum_all());
    }
}
