//! Binary checkpoints, little-endian throughout.
//!
//! Layout: magic `WCKP`, u32 version, u32 config-JSON length + bytes,
//! u64 iteration, then two tensor tables (parameters, optimizer state).
//! A table is a u32 entry count followed by entries of
//! `{u32 name_len, name, u8 dtype, u32 rank, u64 dims.., raw f64 data}`.

use std::path::Path;

use crate::error::{Error, Result};
use crate::numeric::{AdamState, Tensor};

use super::{ModelConfig, PredictorModel};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"WCKP";
pub const CHECKPOINT_VERSION: u32 = 1;

const DTYPE_F64: u8 = 1;

fn write_table(out: &mut Vec<u8>, entries: &[(String, &[f64], &[usize])]) {
    out.extend_from_slice(&(entries.len() as u32).to_le_bytes());
    for (name, data, dims) in entries {
        out.extend_from_slice(&(name.len() as u32).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.push(DTYPE_F64);
        out.extend_from_slice(&(dims.len() as u32).to_le_bytes());
        for d in *dims {
            out.extend_from_slice(&(*d as u64).to_le_bytes());
        }
        for v in *data {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
}

struct Reader<'b> {
    bytes: &'b [u8],
    pos: usize,
}

impl<'b> Reader<'b> {
    fn take(&mut self, n: usize) -> Result<&'b [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::BadCheckpoint(format!(
                "truncated at byte {} of {}",
                self.pos,
                self.bytes.len()
            )));
        }
        let slice = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(slice)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn table(&mut self) -> Result<Vec<(String, Tensor)>> {
        let count = self.u32()? as usize;
        let mut entries = Vec::with_capacity(count);
        for _ in 0..count {
            let name_len = self.u32()? as usize;
            let name = String::from_utf8(self.take(name_len)?.to_vec())
                .map_err(|_| Error::BadCheckpoint("non-utf8 tensor name".into()))?;
            let dtype = self.take(1)?[0];
            if dtype != DTYPE_F64 {
                return Err(Error::BadCheckpoint(format!("unknown dtype code {dtype}")));
            }
            let rank = self.u32()? as usize;
            if rank > 8 {
                return Err(Error::BadCheckpoint(format!("implausible rank {rank}")));
            }
            let mut dims = Vec::with_capacity(rank);
            for _ in 0..rank {
                dims.push(self.u64()? as usize);
            }
            let numel: usize = dims.iter().product();
            let raw = self.take(numel * 8)?;
            let data: Vec<f64> = raw
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
                .collect();
            let tensor = Tensor::new(dims, data)
                .map_err(|e| Error::BadCheckpoint(format!("tensor {name}: {e}")))?;
            entries.push((name, tensor));
        }
        Ok(entries)
    }
}

/// Serializes model parameters, the iteration counter, and optimizer state.
pub fn save_checkpoint(
    path: &Path,
    model: &PredictorModel,
    iteration: u64,
    adam: &AdamState,
) -> Result<()> {
    let config_json = serde_json::to_string(&model.config)?;
    let mut out = Vec::new();
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.extend_from_slice(&(config_json.len() as u32).to_le_bytes());
    out.extend_from_slice(config_json.as_bytes());
    out.extend_from_slice(&iteration.to_le_bytes());

    let params = model.params();
    let param_entries: Vec<(String, &[f64], &[usize])> =
        params.iter().map(|(n, t)| (n.clone(), t.data(), t.shape())).collect();
    write_table(&mut out, &param_entries);

    let scalar_shape: &[usize] = &[1];
    let step = [adam.step as f64];
    let hyper = [
        ("adam.step".to_string(), &step[..]),
        ("adam.beta1".to_string(), std::slice::from_ref(&adam.beta1)),
        ("adam.beta2".to_string(), std::slice::from_ref(&adam.beta2)),
        ("adam.epsilon".to_string(), std::slice::from_ref(&adam.epsilon)),
        ("adam.learning_rate".to_string(), std::slice::from_ref(&adam.learning_rate)),
    ];
    let mut opt_entries: Vec<(String, &[f64], &[usize])> =
        hyper.iter().map(|(n, d)| (n.clone(), *d, scalar_shape)).collect();
    for (i, (name, t)) in params.iter().enumerate() {
        opt_entries.push((format!("adam.m.{name}"), &adam.first_moment[i], t.shape()));
        opt_entries.push((format!("adam.v.{name}"), &adam.second_moment[i], t.shape()));
    }
    write_table(&mut out, &opt_entries);

    std::fs::write(path, out)?;
    Ok(())
}

/// Reads a checkpoint back; the inverse of [`save_checkpoint`] bit for bit.
pub fn load_checkpoint(path: &Path) -> Result<(PredictorModel, u64, AdamState)> {
    let bytes = std::fs::read(path)?;
    let mut r = Reader { bytes: &bytes, pos: 0 };
    if r.take(4)? != CHECKPOINT_MAGIC {
        return Err(Error::BadCheckpoint("bad magic".into()));
    }
    let version = r.u32()?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::BadCheckpoint(format!("unsupported version {version}")));
    }
    let config_len = r.u32()? as usize;
    let config: ModelConfig = serde_json::from_slice(r.take(config_len)?)
        .map_err(|e| Error::BadCheckpoint(format!("config: {e}")))?;
    config.validate().map_err(|e| Error::BadCheckpoint(format!("config: {e}")))?;
    let iteration = r.u64()?;

    let param_table = r.table()?;
    let mut model = PredictorModel::zeroed(config)?;
    {
        let expected = model.params();
        if param_table.len() != expected.len() {
            return Err(Error::BadCheckpoint(format!(
                "expected {} parameters, found {}",
                expected.len(),
                param_table.len()
            )));
        }
        for ((name, tensor), (exp_name, exp)) in param_table.iter().zip(&expected) {
            if name != exp_name || tensor.shape() != exp.shape() {
                return Err(Error::BadCheckpoint(format!(
                    "parameter {name} {:?} does not match expected {exp_name} {:?}",
                    tensor.shape(),
                    exp.shape()
                )));
            }
        }
    }
    for (slot, (_, tensor)) in model.params_mut().into_iter().zip(param_table) {
        *slot = tensor;
    }

    let opt_table = r.table()?;
    let lookup = |name: &str| -> Result<&Tensor> {
        opt_table
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, t)| t)
            .ok_or_else(|| Error::BadCheckpoint(format!("missing optimizer entry {name}")))
    };
    let shapes: Vec<Vec<usize>> =
        model.params().iter().map(|(_, t)| t.shape().to_vec()).collect();
    let mut adam = AdamState::new(lookup("adam.learning_rate")?.item()?, &shapes);
    adam.step = lookup("adam.step")?.item()? as u64;
    adam.beta1 = lookup("adam.beta1")?.item()?;
    adam.beta2 = lookup("adam.beta2")?.item()?;
    adam.epsilon = lookup("adam.epsilon")?.item()?;
    for (i, (name, t)) in model.params().iter().enumerate() {
        let m = lookup(&format!("adam.m.{name}"))?;
        let v = lookup(&format!("adam.v.{name}"))?;
        if m.shape() != t.shape() || v.shape() != t.shape() {
            return Err(Error::BadCheckpoint(format!("moment shape mismatch for {name}")));
        }
        adam.first_moment[i] = m.data().to_vec();
        adam.second_moment[i] = v.data().to_vec();
    }
    if r.pos != bytes.len() {
        return Err(Error::BadCheckpoint(format!("{} trailing bytes", bytes.len() - r.pos)));
    }
    Ok((model, iteration, adam))
}

#[cfg(test)]
mod tests {
    use super::*;
    use tempfile::TempDir;

    fn small_model() -> PredictorModel {
        let cfg = ModelConfig {
            num_layers: 2,
            hidden_channels: 3,
            kernel_size: 3,
            patch_size: 2,
            input_frames: 2,
            total_frames: 4,
            in_channels: 3,
        };
        PredictorModel::new(cfg, 42).unwrap()
    }

    #[test]
    fn roundtrip_is_bit_exact() {
        let dir = TempDir::new().unwrap();
        let path = dir.path().join("model.wckp");
        let model = small_model();
        let shapes: Vec<Vec<usize>> =
            model.params().iter().map(|(_, t)| t.shape().to_vec()).collect();
        let mut adam = AdamState::new(3e-4, &shapes);
        adam.step = 17;
        adam.first_moment[0][0] = 0.25;
        adam.second_moment[1][0] = 1e-9;

        save_checkpoint(&path, &model, 123, &adam).unwrap();
        let (loaded, iteration, adam2) = load_checkpoint(&path).unwrap();

        assert_eq!(iteration, 123);
        assert_eq!(loaded.config, model.config);
        for ((na, ta), (nb, tb)) in loaded.params().iter().zip(model.params()) {
            assert_eq!(na, &nb);
            assert_eq!(ta.data(), tb.data());
        }
        assert_eq!(adam2.step, 17);
        assert_eq!(adam2.learning_rate, adam.learning_rate);
        assert_eq!(adam2.first_moment, adam.first_moment);
        assert_eq!(adam2.second_moment, adam.second_moment);

        // and the file itself is reproducible byte for byte
        let bytes_a = std::fs::read(&path).unwrap();
        save_checkpoint(&path, &model, 123, &adam).unwrap();
        assert_eq!(bytes_a, std::fs::read(&path).unwrap());
    }

    #[test]
    fn truncated_file_is_bad_checkpoint() {
        let dir = TempDir::new().unwrap();
        let path = dir.path().join("model.wckp");
        let model = small_model();
        let shapes: Vec<Vec<usize>> =
            model.params().iter().map(|(_, t)| t.shape().to_vec()).collect();
        let adam = AdamState::new(3e-4, &shapes);
        save_checkpoint(&path, &model, 5, &adam).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() / 2]).unwrap();
        assert!(matches!(load_checkpoint(&path), Err(Error::BadCheckpoint(_))));
    }

    #[test]
    fn wrong_magic_is_bad_checkpoint() {
        let dir = TempDir::new().unwrap();
        let path = dir.path().join("model.wckp");
        std::fs::write(&path, b"NOPExxxxxxxxxxxxxxxx").unwrap();
        assert!(matches!(load_checkpoint(&path), Err(Error::BadCheckpoint(_))));
    }
}
