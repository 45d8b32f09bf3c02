//! Saliency archives: `<stem>.json` metadata plus `<stem>.f32`, the maps'
//! values concatenated as little-endian f32, row-major.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::SaliencyMap;
use crate::error::{Error, Result};
use crate::image::{f32_le_bytes, read_f32_le, read_file, write_atomic};
use crate::scalar::Scalar;

pub const SALIENCY_FORMAT_VERSION: u32 = 1;

/// A sequence of same-sized maps from one explainer, with its settings.
#[derive(Debug, Clone, PartialEq)]
pub struct MapArchive<S> {
    pub explainer_id: String,
    pub config: serde_json::Value,
    pub seed: Option<u64>,
    pub maps: Vec<SaliencyMap<S>>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    format_version: u32,
    explainer_id: String,
    config: serde_json::Value,
    seed: Option<u64>,
    width: usize,
    height: usize,
    count: usize,
    empty: Vec<bool>,
}

pub fn save_maps<S: Scalar>(dir: &Path, stem: &str, archive: &MapArchive<S>) -> Result<()> {
    let first = archive.maps.first().ok_or_else(|| Error::InvalidArgument("no maps to save".into()))?;
    let (width, height) = (first.width(), first.height());
    if let Some(m) = archive.maps.iter().find(|m| (m.width(), m.height()) != (width, height)) {
        return Err(Error::dims(format!("{width}x{height}"), format!("{}x{}", m.width(), m.height())));
    }
    let header = Header {
        format_version: SALIENCY_FORMAT_VERSION,
        explainer_id: archive.explainer_id.clone(),
        config: archive.config.clone(),
        seed: archive.seed,
        width,
        height,
        count: archive.maps.len(),
        empty: archive.maps.iter().map(|m| m.empty).collect(),
    };
    let blob = f32_le_bytes(archive.maps.iter().flat_map(|m| m.values().iter().map(|v| v.as_f32())));
    write_atomic(&dir.join(format!("{stem}.f32")), &blob)?;
    write_atomic(&dir.join(format!("{stem}.json")), &serde_json::to_vec_pretty(&header)?)
}

pub fn load_maps<S: Scalar>(dir: &Path, stem: &str) -> Result<MapArchive<S>> {
    let meta_path = dir.join(format!("{stem}.json"));
    let header: Header = serde_json::from_slice(&read_file(&meta_path)?).map_err(|e| Error::corrupt(&meta_path, e.to_string()))?;
    if header.format_version != SALIENCY_FORMAT_VERSION {
        return Err(Error::Version(format!("saliency archive version {}", header.format_version)));
    }
    if header.empty.len() != header.count {
        return Err(Error::corrupt(&meta_path, "empty flags do not match count"));
    }
    let blob_path = dir.join(format!("{stem}.f32"));
    let blob = read_file(&blob_path)?;
    let plane = header.width * header.height;
    if blob.len() != plane * header.count * 4 {
        return Err(Error::corrupt(&blob_path, format!("expected {} bytes, found {}", plane * header.count * 4, blob.len())));
    }
    let values: Vec<f32> = read_f32_le(&blob).collect();
    let maps = values
        .chunks_exact(plane.max(1))
        .zip(&header.empty)
        .map(|(chunk, &empty)| {
            let mut m = SaliencyMap::new(header.width, header.height, chunk.iter().map(|&v| S::of(v as f64)).collect(), header.explainer_id.clone(), header.seed)
                .map_err(|e| Error::corrupt(&blob_path, e.to_string()))?;
            m.empty = empty;
            Ok(m)
        })
        .collect::<Result<_>>()?;
    Ok(MapArchive { explainer_id: header.explainer_id, config: header.config, seed: header.seed, maps })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_and_truncation() {
        let dir = tempfile::tempdir().unwrap();
        let a = SaliencyMap::new(3, 2, vec![0.0f32, 1.5, -2.0, 3.25, 0.1, 7.0], "rise", Some(4)).unwrap();
        let mut b = SaliencyMap::zeros(3, 2, "rise");
        b.empty = true;
        let archive = MapArchive { explainer_id: "rise".into(), config: serde_json::json!({"n_masks": 3}), seed: Some(4), maps: vec![a, b] };
        save_maps(dir.path(), "x", &archive).unwrap();
        let back: MapArchive<f32> = load_maps(dir.path(), "x").unwrap();
        assert_eq!(back.maps[0].values(), archive.maps[0].values());
        assert!(back.maps[1].empty && back.maps[1].is_all_zero());
        assert_eq!(back.config, archive.config);

        let blob = dir.path().join("x.f32");
        let bytes = std::fs::read(&blob).unwrap();
        std::fs::write(&blob, &bytes[..bytes.len() - 2]).unwrap();
        assert!(matches!(load_maps::<f32>(dir.path(), "x"), Err(Error::Corrupt { .. })));
    }
}
