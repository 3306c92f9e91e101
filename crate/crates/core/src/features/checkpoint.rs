//! Binary checkpoint: `EYOC`, format version, `k`, descriptor width, then the
//! student and labeler weights and biases as little-endian `f64`.

use std::fs;
use std::path::Path;

use super::descriptor::DESCRIPTOR_DIM;
use super::embedding::EmbeddingParams;
use super::FeatureError;

const MAGIC: &[u8; 4] = b"EYOC";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub student: EmbeddingParams<f64>,
    pub labeler: EmbeddingParams<f64>,
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Vec<u8> {
        let k = self.student.k;
        let mut out = Vec::with_capacity(16 + 2 * 8 * self.student.num_params());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(k as u32).to_le_bytes());
        out.extend_from_slice(&(DESCRIPTOR_DIM as u32).to_le_bytes());
        for p in [&self.student, &self.labeler] {
            for v in p.weight.iter().chain(&p.bias) {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, String> {
        if bytes.len() < 16 || &bytes[..4] != MAGIC {
            return Err("missing EYOC header".into());
        }
        let word = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().expect("4 bytes"));
        let version = word(4);
        if version != FORMAT_VERSION {
            return Err(format!("unsupported format version {version}"));
        }
        let k = word(8) as usize;
        let dim = word(12) as usize;
        if dim != DESCRIPTOR_DIM {
            return Err(format!("descriptor width {dim}, expected {DESCRIPTOR_DIM}"));
        }
        if k == 0 {
            return Err("zero embedding width".into());
        }
        let per = k * dim + k;
        let expected = 16 + 2 * per * 8;
        if bytes.len() != expected {
            return Err(format!("{} bytes, expected {expected}", bytes.len()));
        }
        let vals: Vec<f64> =
            bytes[16..].chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect();
        let student = EmbeddingParams::from_flat(k, &vals[..per]);
        let labeler = EmbeddingParams::from_flat(k, &vals[per..]);
        if !student.is_finite() || !labeler.is_finite() {
            return Err("non-finite parameters".into());
        }
        Ok(Self { student, labeler })
    }
}

pub fn write_checkpoint(path: &Path, ckpt: &Checkpoint) -> Result<(), FeatureError> {
    if !ckpt.student.same_shape(&ckpt.labeler) {
        return Err(FeatureError::ShapeMismatch("student and labeler differ".into()));
    }
    fs::write(path, ckpt.to_bytes())
        .map_err(|e| FeatureError::Checkpoint { path: path.display().to_string(), reason: e.to_string() })
}

pub fn read_checkpoint(path: &Path) -> Result<Checkpoint, FeatureError> {
    let bytes =
        fs::read(path).map_err(|e| FeatureError::Checkpoint { path: path.display().to_string(), reason: e.to_string() })?;
    Checkpoint::from_bytes(&bytes).map_err(|reason| FeatureError::Checkpoint { path: path.display().to_string(), reason })
}
