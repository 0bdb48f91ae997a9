//! Content-addressed store of fiber results.
//!
//! Objects live in `<root>/objects/<key>.pfbc` as real-vector containers.
//! `<root>/index.txt` lists them, one `key kind label` line per object after
//! a `pfcache 1` header line. Every file is replaced atomically.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use super::container::{decode, encode, Payload};
use super::write_atomic;
use rayon::prelude::*;

use super::config_fingerprint;
use crate::dispersion::{fiber_record, DispersionRecord, DispersionTable, FiberFailure, SweepOptions, SymmetryWeights};
use crate::error::{Error, Result};
use crate::grid::TorusGrid;
use crate::params::{ModelParams, Repulsion};
use crate::TorusPoint;

pub const INDEX_HEADER: &str = "pfcache 1";
pub const RECORD_KIND: &str = "fiber-record";
const RECORD_LEN: usize = 17;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct IndexEntry {
    pub key: String,
    pub kind: String,
    pub label: String,
}

fn is_key(s: &str) -> bool {
    s.len() == 64 && s.bytes().all(|b| b.is_ascii_digit() || (b'a'..=b'f').contains(&b))
}

pub fn parse_index(text: &str) -> Result<Vec<IndexEntry>> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, l)) if l.trim_end() == INDEX_HEADER => {}
        _ => return Err(Error::Parse { line: 1, msg: format!("expected header {INDEX_HEADER:?}") }),
    }
    let mut out = Vec::new();
    let mut seen = std::collections::BTreeSet::new();
    for (i, line) in lines {
        let line_no = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let mut parts = line.splitn(3, ' ');
        let key = parts.next().unwrap_or("");
        let kind = parts.next().ok_or_else(|| Error::Parse { line: line_no, msg: "missing kind".into() })?;
        let label = parts.next().unwrap_or("").to_string();
        if !is_key(key) {
            return Err(Error::Parse { line: line_no, msg: format!("malformed key {key:?}") });
        }
        if kind.is_empty() || !kind.bytes().all(|b| b.is_ascii_graphic()) {
            return Err(Error::Parse { line: line_no, msg: format!("malformed kind {kind:?}") });
        }
        if !seen.insert(key.to_string()) {
            return Err(Error::Parse { line: line_no, msg: format!("duplicate key {key}") });
        }
        out.push(IndexEntry { key: key.to_string(), kind: kind.to_string(), label });
    }
    Ok(out)
}

pub fn render_index(entries: &BTreeMap<String, IndexEntry>) -> String {
    let mut s = format!("{INDEX_HEADER}\n");
    for e in entries.values() {
        s.push_str(&format!("{} {} {}\n", e.key, e.kind, e.label.replace(['\n', '\r'], " ")));
    }
    s
}

/// Key of one fiber computation.
pub fn fiber_key(fingerprint: &str, k: TorusPoint, u: Repulsion, opts: &SweepOptions) -> String {
    let mut h = Sha256::new();
    h.update(fingerprint.as_bytes());
    h.update(k[0].to_bits().to_le_bytes());
    h.update(k[1].to_bits().to_le_bytes());
    h.update(u.to_string().as_bytes());
    h.update([opts.velocity as u8, opts.mass as u8]);
    h.update(opts.hessian_step.to_bits().to_le_bytes());
    hex::encode(h.finalize())
}

pub fn encode_record(r: &DispersionRecord) -> Vec<f64> {
    let nan = f64::NAN;
    let flags = r.v.is_some() as u8
        | (r.mass.is_some() as u8) << 1
        | (r.sym.is_some() as u8) << 2
        | (r.note.is_some() as u8) << 3;
    let v = r.v.unwrap_or([nan; 2]);
    let m = r.mass.unwrap_or([[nan; 2]; 2]);
    let s = r.sym.unwrap_or(SymmetryWeights { w_s: nan, w_d: nan, w_p: nan, completeness_residual: nan });
    vec![
        r.k[0],
        r.k[1],
        r.e,
        r.gap,
        r.rho,
        flags as f64,
        v[0],
        v[1],
        m[0][0],
        m[0][1],
        m[1][0],
        m[1][1],
        s.w_s,
        s.w_d,
        s.w_p,
        s.completeness_residual,
        0.0,
    ]
}

pub fn decode_record(v: &[f64]) -> Result<DispersionRecord> {
    if v.len() != RECORD_LEN {
        return Err(Error::DimensionMismatch { expected: RECORD_LEN, got: v.len() });
    }
    let flags = v[5];
    if !(0.0..16.0).contains(&flags) || flags.fract() != 0.0 {
        return Err(Error::Format(format!("bad record flags {flags}")));
    }
    let flags = flags as u8;
    Ok(DispersionRecord {
        k: [v[0], v[1]],
        e: v[2],
        gap: v[3],
        rho: v[4],
        v: (flags & 1 != 0).then_some([v[6], v[7]]),
        mass: (flags & 2 != 0).then_some([[v[8], v[9]], [v[10], v[11]]]),
        sym: (flags & 4 != 0).then_some(SymmetryWeights {
            w_s: v[12],
            w_d: v[13],
            w_p: v[14],
            completeness_residual: v[15],
        }),
        note: (flags & 8 != 0).then(|| "secondary quantity unavailable (cached)".to_string()),
    })
}

#[derive(Debug)]
pub struct FiberCache {
    root: PathBuf,
    entries: BTreeMap<String, IndexEntry>,
    pub hits: usize,
    pub misses: usize,
}

impl FiberCache {
    /// Opens or creates a store. A missing index starts empty.
    pub fn open(root: &Path) -> Result<Self> {
        fs::create_dir_all(root.join("objects"))?;
        let index = root.join("index.txt");
        let entries = if index.exists() {
            parse_index(&fs::read_to_string(&index)?)?.into_iter().map(|e| (e.key.clone(), e)).collect()
        } else {
            BTreeMap::new()
        };
        Ok(FiberCache { root: root.to_path_buf(), entries, hits: 0, misses: 0 })
    }

    fn object(&self, key: &str) -> PathBuf {
        self.root.join("objects").join(format!("{key}.pfbc"))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Looks a record up; unreadable objects count as misses.
    pub fn get(&mut self, key: &str) -> Option<DispersionRecord> {
        let found = self
            .entries
            .get(key)
            .filter(|e| e.kind == RECORD_KIND)
            .and_then(|_| fs::read(self.object(key)).ok())
            .and_then(|b| match decode(&b) {
                Ok(Payload::RealVector(v)) => decode_record(&v).ok(),
                _ => None,
            });
        match found {
            Some(_) => self.hits += 1,
            None => self.misses += 1,
        }
        found
    }

    pub fn put(&mut self, key: &str, label: &str, record: &DispersionRecord) -> Result<()> {
        let bytes = encode(&Payload::RealVector(encode_record(record)))?;
        write_atomic(&self.object(key), &bytes)?;
        self.entries.insert(
            key.to_string(),
            IndexEntry { key: key.to_string(), kind: RECORD_KIND.to_string(), label: label.to_string() },
        );
        Ok(())
    }

    /// Writes the index atomically.
    pub fn flush(&self) -> Result<()> {
        write_atomic(&self.root.join("index.txt"), render_index(&self.entries).as_bytes())?;
        Ok(())
    }
}

/// [`sweep`](crate::dispersion::sweep) that reuses cached fibers and
/// stores newly solved ones. Failed fibers are not cached.
pub fn sweep_cached(
    params: &ModelParams,
    grid: &TorusGrid,
    kgrid: &[TorusPoint],
    opts: &SweepOptions,
    cache: &mut FiberCache,
) -> Result<DispersionTable> {
    params.validate_bound_pair()?;
    let fingerprint = config_fingerprint(params, grid.n());
    let skip_origin = params.upsilon.eval([0.0, 0.0]) == 0.0;
    let wanted: Vec<TorusPoint> =
        kgrid.iter().copied().filter(|k| !(skip_origin && k[0] == 0.0 && k[1] == 0.0)).collect();
    let keys: Vec<String> = wanted.iter().map(|&k| fiber_key(&fingerprint, k, params.u_onsite, opts)).collect();
    let mut slots: Vec<Option<DispersionRecord>> = keys.iter().map(|key| cache.get(key)).collect();
    let missing: Vec<usize> = (0..wanted.len()).filter(|&i| slots[i].is_none()).collect();
    let solved: Vec<(usize, Result<DispersionRecord>)> =
        missing.par_iter().map(|&i| (i, fiber_record(params, grid, wanted[i], opts))).collect();
    let mut failures = Vec::new();
    for (i, r) in solved {
        match r {
            Ok(rec) => {
                cache.put(&keys[i], &format!("k={:?} U={}", wanted[i], params.u_onsite), &rec)?;
                slots[i] = Some(rec);
            }
            Err(e) => failures.push(FiberFailure { k: wanted[i], error: e.to_string() }),
        }
    }
    cache.flush()?;
    Ok(DispersionTable {
        u_onsite: params.u_onsite.to_string(),
        grid_n: grid.n(),
        fingerprint,
        records: slots.into_iter().flatten().collect(),
        failures,
    })
}
