//! Model file: `SCMN` magic, u32 LE version, u32 LE header length, JSON
//! header, then every parameter as little-endian f32 in header order.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Architecture, ModelSnapshot};
use crate::error::{Error, Result};
use crate::image::{f32_le_bytes, read_f32_le, read_file, write_atomic};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

pub const MODEL_MAGIC: &[u8; 4] = b"SCMN";
pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    arch: Architecture,
    class_names: [String; 2],
    seed: u64,
    dtype: String,
    params: Vec<ParamEntry>,
}

#[derive(Debug, Serialize, Deserialize)]
struct ParamEntry {
    name: String,
    shape: Vec<usize>,
}

pub fn encode_model<S: Scalar>(model: &ModelSnapshot<S>) -> Result<Vec<u8>> {
    let header = Header {
        arch: model.arch,
        class_names: model.class_names.clone(),
        seed: model.seed,
        dtype: "f32".into(),
        params: model.params().map(|(n, t)| ParamEntry { name: n.into(), shape: t.shape().to_vec() }).collect(),
    };
    let json = serde_json::to_vec(&header)?;
    let mut out = Vec::with_capacity(12 + json.len() + 4 * model.params.iter().map(Tensor::len).sum::<usize>());
    out.extend_from_slice(MODEL_MAGIC);
    out.extend_from_slice(&MODEL_FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(json.len() as u32).to_le_bytes());
    out.extend_from_slice(&json);
    for t in &model.params {
        out.extend(f32_le_bytes(t.data().iter().map(|v| v.as_f32())));
    }
    Ok(out)
}

pub fn decode_model<S: Scalar>(bytes: &[u8], path: &Path) -> Result<ModelSnapshot<S>> {
    if bytes.len() < 12 {
        return Err(Error::corrupt(path, "file shorter than the fixed preamble"));
    }
    if &bytes[..4] != MODEL_MAGIC {
        return Err(Error::Version(format!("{}: bad magic {:?}", path.display(), &bytes[..4])));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != MODEL_FORMAT_VERSION {
        return Err(Error::Version(format!("{}: model format {version}, expected {MODEL_FORMAT_VERSION}", path.display())));
    }
    let header_len = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let header_bytes = bytes.get(12..12 + header_len).ok_or_else(|| Error::corrupt(path, "truncated header"))?;
    let header: Header = serde_json::from_slice(header_bytes).map_err(|e| Error::corrupt(path, format!("header: {e}")))?;
    if header.dtype != "f32" {
        return Err(Error::Version(format!("{}: dtype {}", path.display(), header.dtype)));
    }
    let arch = Architecture::new(header.arch.input_height, header.arch.input_width)?;
    if arch != header.arch {
        return Err(Error::Version(format!("{}: unsupported architecture {:?}", path.display(), header.arch)));
    }
    let mut blob = &bytes[12 + header_len..];
    let mut named = Vec::with_capacity(header.params.len());
    for entry in header.params {
        let n: usize = entry.shape.iter().product();
        if blob.len() < 4 * n {
            return Err(Error::corrupt(path, format!("truncated parameter blob at `{}`", entry.name)));
        }
        let data = read_f32_le(&blob[..4 * n]).map(|v| S::of(v as f64)).collect();
        blob = &blob[4 * n..];
        named.push((entry.name, Tensor::new(entry.shape, data)?));
    }
    if !blob.is_empty() {
        return Err(Error::corrupt(path, format!("{} trailing bytes", blob.len())));
    }
    ModelSnapshot::from_params(arch, named, header.class_names, header.seed)
        .map_err(|e| Error::corrupt(path, e.to_string()))
}

pub fn save_model<S: Scalar>(model: &ModelSnapshot<S>, path: &Path) -> Result<()> {
    write_atomic(path, &encode_model(model)?)
}

pub fn load_model<S: Scalar>(path: &Path) -> Result<ModelSnapshot<S>> {
    decode_model(&read_file(path)?, path)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model() -> ModelSnapshot<f32> {
        ModelSnapshot::init(Architecture::new(16, 16).unwrap(), 42)
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.scmn");
        let m = model();
        save_model(&m, &path).unwrap();
        let back: ModelSnapshot<f32> = load_model(&path).unwrap();
        for ((_, a), (_, b)) in m.params().zip(back.params()) {
            let bits_a: Vec<u32> = a.data().iter().map(|v| v.to_bits()).collect();
            let bits_b: Vec<u32> = b.data().iter().map(|v| v.to_bits()).collect();
            assert_eq!(bits_a, bits_b);
        }
        assert_eq!(m, back);
    }

    #[test]
    fn truncated_file_is_corrupt() {
        let bytes = encode_model(&model()).unwrap();
        for cut in [3, 11, 40, bytes.len() - 1] {
            let err = decode_model::<f32>(&bytes[..cut], Path::new("t")).unwrap_err();
            assert!(matches!(err, Error::Corrupt { .. }), "cut {cut}: {err}");
        }
    }

    #[test]
    fn wrong_magic_is_version_error() {
        let mut bytes = encode_model(&model()).unwrap();
        bytes[0] = b'X';
        assert!(matches!(decode_model::<f32>(&bytes, Path::new("t")), Err(Error::Version(_))));
        let mut bytes = encode_model(&model()).unwrap();
        bytes[4] = 9;
        assert!(matches!(decode_model::<f32>(&bytes, Path::new("t")), Err(Error::Version(_))));
    }
}
