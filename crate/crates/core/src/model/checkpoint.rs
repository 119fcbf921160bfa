//! Checkpoint file: one JSON header line, then every tensor as raw
//! little-endian `f64` values in declaration order.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::scalar::Scalar;

use super::{Hyper, ModelError, ModelParams, QstrModel};

pub const CHECKPOINT_FORMAT: &str = "syntempo-ckpt";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct TensorSpec {
    name: String,
    rows: usize,
    cols: usize,
}

#[derive(Serialize, Deserialize)]
struct CheckpointHeader {
    format: String,
    version: u32,
    hyper: Hyper,
    params_hash: String,
    tensors: Vec<TensorSpec>,
}

impl<T: Scalar> QstrModel<T> {
    pub fn write_checkpoint<W: Write>(&self, mut w: W) -> Result<(), ModelError> {
        let header = CheckpointHeader {
            format: CHECKPOINT_FORMAT.to_string(),
            version: CHECKPOINT_VERSION,
            hyper: self.hyper.clone(),
            params_hash: self.content_hash().to_string(),
            tensors: self
                .params
                .named_tensors()
                .into_iter()
                .map(|(name, t)| TensorSpec { name, rows: t.nrows(), cols: t.ncols() })
                .collect(),
        };
        serde_json::to_writer(&mut w, &header).map_err(std::io::Error::from)?;
        w.write_all(b"\n")?;
        for t in self.params.tensors() {
            for v in t.iter() {
                w.write_all(&v.le_bytes())?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_checkpoint<R: BufRead>(mut r: R) -> Result<Self, ModelError> {
        let mut line = String::new();
        r.read_line(&mut line)?;
        let header: CheckpointHeader = serde_json::from_str(line.trim_end())
            .map_err(|e| ModelError::VersionMismatch(format!("checkpoint header: {e}")))?;
        if header.format != CHECKPOINT_FORMAT || header.version != CHECKPOINT_VERSION {
            return Err(ModelError::VersionMismatch(format!("{} v{}", header.format, header.version)));
        }
        header.hyper.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut params = ModelParams::<T>::init(&header.hyper, &mut rng);
        let declared: Vec<_> = header.tensors.iter().map(|s| (s.name.clone(), (s.rows, s.cols))).collect();
        let expected: Vec<_> = params.named_tensors().into_iter().map(|(n, t)| (n, t.dim())).collect();
        if declared != expected {
            return Err(ModelError::VersionMismatch("tensor layout disagrees with hyperparameters".into()));
        }
        let mut buf = [0u8; 8];
        for t in params.tensors_mut() {
            fill(t, &mut r, &mut buf)?;
        }
        let model = Self::assemble(header.hyper, params);
        if model.content_hash() != header.params_hash {
            return Err(ModelError::VersionMismatch("parameter hash mismatch".into()));
        }
        Ok(model)
    }

    pub fn save_checkpoint(&self, path: impl AsRef<Path>) -> Result<(), ModelError> {
        self.write_checkpoint(BufWriter::new(File::create(path)?))
    }

    pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Self, ModelError> {
        Self::read_checkpoint(BufReader::new(File::open(path)?))
    }
}

fn fill<T: Scalar, R: Read>(t: &mut Array2<T>, r: &mut R, buf: &mut [u8; 8]) -> Result<(), ModelError> {
    for v in t.iter_mut() {
        r.read_exact(buf)?;
        *v = T::of(f64::from_le_bytes(*buf));
    }
    Ok(())
}
