//! Result persistence: CSV tables, the binary container, the fiber cache
//! and run manifests.

pub mod cache;
pub mod container;
pub mod csv;
pub mod manifest;

use std::fs;
use std::io::Write;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::params::ModelParams;

/// Content hash of the canonical configuration text plus the grid size.
pub fn config_fingerprint(params: &ModelParams, grid_n: usize) -> String {
    let mut h = Sha256::new();
    h.update(params.to_config_string().as_bytes());
    h.update(format!("grid_N = {grid_n}\n").as_bytes());
    hex::encode(h.finalize())
}

/// Fixed 17-significant-digit float rendering.
pub fn fmt_f64(x: f64) -> String {
    if x.is_nan() {
        "nan".to_string()
    } else if x.is_infinite() {
        if x > 0.0 { "inf" } else { "-inf" }.to_string()
    } else {
        format!("{x:.16e}")
    }
}

/// Writes `bytes` to a sibling temp file, syncs it and renames it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    fs::create_dir_all(dir)?;
    let name = path.file_name().and_then(|s| s.to_str()).unwrap_or("out");
    let tmp = dir.join(format!(".{name}.tmp.{}", std::process::id()));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path).inspect_err(|_| {
        let _ = fs::remove_file(&tmp);
    })
}
