//! Binary model checkpoints.
//!
//! Layout, all integers and floats little-endian:
//!
//! ```text
//! "DMSE"  u16 version
//! u32 n, m, d1, d2, layer count L, then L × u32 layer dims
//! n species names, m feature names: u32 byte length + UTF-8
//! m × (f64 mean, f64 std)
//! f64 tensors, row-major: S, Λ, W, then per layer weight and bias
//! u32 CRC-32 of everything above
//! ```

use std::path::Path;

use ndarray::{Array1, Array2};
use thiserror::Error;

use crate::mlp::{Layer, MlpParams};
use crate::model::{FeatureScale, ModelParams};

pub const MAGIC: &[u8; 4] = b"DMSE";
pub const VERSION: u16 = 1;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CheckpointError {
    #[error("i/o error: {0}")]
    Io(String),
    #[error("not a checkpoint (bad magic)")]
    BadMagic,
    #[error("unsupported checkpoint version {0}")]
    UnsupportedVersion(u16),
    #[error("checkpoint is truncated")]
    Truncated,
    #[error("checkpoint checksum mismatch (stored {stored:08x}, computed {computed:08x})")]
    CrcMismatch { stored: u32, computed: u32 },
    #[error("checkpoint is inconsistent: {0}")]
    Invalid(String),
}

impl From<std::io::Error> for CheckpointError {
    fn from(e: std::io::Error) -> Self {
        CheckpointError::Io(e.to_string())
    }
}

fn put_u32(buf: &mut Vec<u8>, v: usize) {
    buf.extend_from_slice(
        &u32::try_from(v)
            .expect("dimension fits in u32")
            .to_le_bytes(),
    );
}

fn put_str(buf: &mut Vec<u8>, s: &str) {
    put_u32(buf, s.len());
    buf.extend_from_slice(s.as_bytes());
}

fn put_f64s(buf: &mut Vec<u8>, values: &[f64]) {
    for v in values {
        buf.extend_from_slice(&v.to_le_bytes());
    }
}

/// Serializes `params`.
pub fn to_bytes(params: &ModelParams) -> Vec<u8> {
    let mut buf = Vec::new();
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    let dims = params.mlp.layer_dims();
    for v in [
        params.n_species(),
        params.n_features(),
        params.d1(),
        params.d2(),
        dims.len(),
    ] {
        put_u32(&mut buf, v);
    }
    for &d in dims {
        put_u32(&mut buf, d);
    }
    for name in params.species_names.iter().chain(&params.feature_names) {
        put_str(&mut buf, name);
    }
    for (mean, std) in params.scale.mean.iter().zip(&params.scale.std) {
        put_f64s(&mut buf, &[*mean, *std]);
    }
    for t in params.tensors() {
        put_f64s(&mut buf, t);
    }
    let crc = crc32fast::hash(&buf);
    buf.extend_from_slice(&crc.to_le_bytes());
    buf
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], CheckpointError> {
        let end = self.pos.checked_add(n).ok_or(CheckpointError::Truncated)?;
        let out = self
            .bytes
            .get(self.pos..end)
            .ok_or(CheckpointError::Truncated)?;
        self.pos = end;
        Ok(out)
    }

    fn u16(&mut self) -> Result<u16, CheckpointError> {
        Ok(u16::from_le_bytes(
            self.take(2)?.try_into().expect("2 bytes"),
        ))
    }

    fn u32(&mut self) -> Result<usize, CheckpointError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")) as usize)
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>, CheckpointError> {
        let len = n.checked_mul(8).ok_or(CheckpointError::Truncated)?;
        Ok(self
            .take(len)?
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect())
    }

    fn string(&mut self) -> Result<String, CheckpointError> {
        let len = self.u32()?;
        let raw = self.take(len)?;
        String::from_utf8(raw.to_vec())
            .map_err(|_| CheckpointError::Invalid("name is not UTF-8".into()))
    }

    fn matrix(&mut self, rows: usize, cols: usize) -> Result<Array2<f64>, CheckpointError> {
        let len = rows.checked_mul(cols).ok_or(CheckpointError::Truncated)?;
        Array2::from_shape_vec((rows, cols), self.f64s(len)?)
            .map_err(|e| CheckpointError::Invalid(e.to_string()))
    }
}

/// Parses and validates a checkpoint.
pub fn from_bytes(bytes: &[u8]) -> Result<ModelParams, CheckpointError> {
    if bytes.len() < MAGIC.len() || &bytes[..4] != MAGIC {
        return Err(CheckpointError::BadMagic);
    }
    if bytes.len() < 10 {
        return Err(CheckpointError::Truncated);
    }
    let (body, tail) = bytes.split_at(bytes.len() - 4);
    let stored = u32::from_le_bytes(tail.try_into().expect("4 bytes"));
    let computed = crc32fast::hash(body);
    let mut r = Reader {
        bytes: body,
        pos: 4,
    };
    let version = r.u16()?;
    if version != VERSION {
        return Err(CheckpointError::UnsupportedVersion(version));
    }
    if stored != computed {
        return Err(CheckpointError::CrcMismatch { stored, computed });
    }
    let (n, m, d1, d2, n_dims) = (r.u32()?, r.u32()?, r.u32()?, r.u32()?, r.u32()?);
    let dims = (0..n_dims)
        .map(|_| r.u32())
        .collect::<Result<Vec<_>, _>>()?;
    if dims.first() != Some(&m) {
        return Err(CheckpointError::Invalid(
            "network input size differs from feature count".into(),
        ));
    }
    let species_names = (0..n).map(|_| r.string()).collect::<Result<Vec<_>, _>>()?;
    let feature_names = (0..m).map(|_| r.string()).collect::<Result<Vec<_>, _>>()?;
    let pairs = r.f64s(2 * m)?;
    let scale = FeatureScale {
        mean: pairs.iter().step_by(2).copied().collect(),
        std: pairs.iter().skip(1).step_by(2).copied().collect(),
    };
    let s = r.matrix(d1, n)?;
    let lambda_raw = r.matrix(d2, n)?;
    let n_out = *dims.last().expect("nonempty");
    let w = r.matrix(d1, n_out)?;
    let mut layers = Vec::new();
    for pair in dims.windows(2) {
        let weight = r.matrix(pair[1], pair[0])?;
        let bias = Array1::from(r.f64s(pair[1])?);
        layers.push(Layer { weight, bias });
    }
    if r.pos != body.len() {
        return Err(CheckpointError::Invalid(
            "trailing bytes after tensors".into(),
        ));
    }
    let mlp = MlpParams::from_layers(dims, layers)
        .map_err(|e| CheckpointError::Invalid(e.to_string()))?;
    let params = ModelParams {
        species_names,
        feature_names,
        s,
        lambda_raw,
        w,
        mlp,
        scale,
    };
    params
        .validate()
        .map_err(|e| CheckpointError::Invalid(e.to_string()))?;
    Ok(params)
}

pub fn save(params: &ModelParams, path: impl AsRef<Path>) -> Result<(), CheckpointError> {
    std::fs::write(path, to_bytes(params))?;
    Ok(())
}

pub fn load(path: impl AsRef<Path>) -> Result<ModelParams, CheckpointError> {
    from_bytes(&std::fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelConfig;

    fn model(hidden: &[usize]) -> ModelParams {
        let cfg = ModelConfig {
            d1: 3,
            d2: 2,
            hidden: hidden.to_vec(),
        };
        let mut p = ModelParams::init(
            vec!["Blue Jay".into(), "Amérique".into()],
            vec!["forest".into(), "water".into(), "urban".into()],
            &cfg,
            5,
        )
        .unwrap();
        p.scale.mean[1] = 0.25;
        p.scale.std[2] = 3.5;
        p
    }

    #[test]
    fn round_trip_is_byte_identical() {
        for hidden in [vec![], vec![4, 2]] {
            let p = model(&hidden);
            let bytes = to_bytes(&p);
            let back = from_bytes(&bytes).unwrap();
            assert_eq!(back, p);
            assert_eq!(to_bytes(&back), bytes);
        }
    }

    #[test]
    fn detects_corruption() {
        let bytes = to_bytes(&model(&[4]));
        let mut flipped = bytes.clone();
        let mid = flipped.len() / 2;
        flipped[mid] ^= 1;
        assert!(matches!(
            from_bytes(&flipped),
            Err(CheckpointError::CrcMismatch { .. })
        ));
        assert_eq!(from_bytes(b"NOPE...."), Err(CheckpointError::BadMagic));
        assert!(from_bytes(&bytes[..bytes.len() - 9]).is_err());
        let mut versioned = bytes.clone();
        versioned[4] = 9;
        assert_eq!(
            from_bytes(&versioned),
            Err(CheckpointError::UnsupportedVersion(9))
        );
    }

    #[test]
    fn header_layout() {
        let bytes = to_bytes(&model(&[4]));
        assert_eq!(&bytes[..4], b"DMSE");
        assert_eq!(u16::from_le_bytes([bytes[4], bytes[5]]), VERSION);
        let n = u32::from_le_bytes(bytes[6..10].try_into().unwrap());
        assert_eq!(n, 2);
    }
}
