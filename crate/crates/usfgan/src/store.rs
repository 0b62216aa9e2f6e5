//! Named-array store used for checkpoints: a JSON manifest describing shapes
//! and byte offsets plus one raw little-endian f64 blob. Round trips are
//! bit-exact, which training resume relies on.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mat::Mat;

#[derive(Serialize, Deserialize)]
struct ArrayEntry {
    name: String,
    rows: usize,
    cols: usize,
    offset: usize,
}

#[derive(Serialize, Deserialize)]
struct StoreManifest {
    version: u32,
    dtype: String,
    meta: serde_json::Value,
    arrays: Vec<ArrayEntry>,
}

const STORE_VERSION: u32 = 1;

/// Writes named matrices plus caller metadata into `dir`.
pub fn save_arrays(dir: &Path, meta: serde_json::Value, arrays: &[(String, &Mat)]) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut entries = Vec::with_capacity(arrays.len());
    let mut blob: Vec<u8> = Vec::new();
    for (name, m) in arrays {
        entries.push(ArrayEntry {
            name: name.clone(),
            rows: m.rows(),
            cols: m.cols(),
            offset: blob.len(),
        });
        for v in m.data() {
            blob.extend_from_slice(&v.to_le_bytes());
        }
    }
    let manifest =
        StoreManifest { version: STORE_VERSION, dtype: "f64le".into(), meta, arrays: entries };
    fs::write(dir.join("manifest.json"), serde_json::to_string_pretty(&manifest)?)?;
    fs::write(dir.join("arrays.f64"), blob)?;
    Ok(())
}

/// Loads metadata and all named matrices from `dir`.
pub fn load_arrays(dir: &Path) -> Result<(serde_json::Value, BTreeMap<String, Mat>)> {
    let mpath = dir.join("manifest.json");
    if !mpath.exists() {
        return Err(Error::NotFound(mpath));
    }
    let manifest: StoreManifest = serde_json::from_str(&fs::read_to_string(&mpath)?)?;
    if manifest.version != STORE_VERSION {
        return Err(Error::Schema(format!("unsupported store version {}", manifest.version)));
    }
    if manifest.dtype != "f64le" {
        return Err(Error::Schema(format!("unsupported dtype {}", manifest.dtype)));
    }
    let blob = fs::read(dir.join("arrays.f64"))?;
    let mut out = BTreeMap::new();
    for e in &manifest.arrays {
        let n = e.rows * e.cols;
        let end = e.offset + n * 8;
        if end > blob.len() {
            return Err(Error::Schema(format!(
                "array {} spans past the end of the blob",
                e.name
            )));
        }
        let data: Vec<f64> = blob[e.offset..end]
            .chunks_exact(8)
            .map(|b| f64::from_le_bytes([b[0], b[1], b[2], b[3], b[4], b[5], b[6], b[7]]))
            .collect();
        if out.insert(e.name.clone(), Mat::from_vec(e.rows, e.cols, data)).is_some() {
            return Err(Error::Schema(format!("duplicate array name {}", e.name)));
        }
    }
    Ok((manifest.meta, out))
}
