//! Versioned little-endian binary container.
//!
//! Layout: magic `PFBC`, version u16, kind u16, rows u32, cols u32, then the
//! payload. Complex entries are (re, im) f64 pairs, real entries plain f64.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::grid::{GridFunction, TorusGrid};

pub const MAGIC: [u8; 4] = *b"PFBC";
pub const VERSION: u16 = 1;
pub const HEADER_LEN: usize = 16;
/// Largest payload accepted by the decoder, in f64 words.
pub const MAX_WORDS: usize = 1 << 28;

pub const KIND_GRID_FUNCTION: u16 = 1;
pub const KIND_COMPLEX_MATRIX: u16 = 2;
pub const KIND_REAL_VECTOR: u16 = 3;

#[derive(Clone, Debug, PartialEq)]
pub enum Payload {
    GridFunction(GridFunction),
    /// Row-major.
    ComplexMatrix {
        rows: usize,
        cols: usize,
        data: Vec<Complex64>,
    },
    RealVector(Vec<f64>),
}

fn header(kind: u16, rows: usize, cols: usize) -> Result<Vec<u8>> {
    let r = u32::try_from(rows).map_err(|_| Error::Format("row count exceeds u32".into()))?;
    let c = u32::try_from(cols).map_err(|_| Error::Format("column count exceeds u32".into()))?;
    let mut out = Vec::with_capacity(HEADER_LEN);
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&kind.to_le_bytes());
    out.extend_from_slice(&r.to_le_bytes());
    out.extend_from_slice(&c.to_le_bytes());
    Ok(out)
}

fn push_complex(out: &mut Vec<u8>, data: &[Complex64]) {
    for v in data {
        out.extend_from_slice(&v.re.to_le_bytes());
        out.extend_from_slice(&v.im.to_le_bytes());
    }
}

pub fn encode(payload: &Payload) -> Result<Vec<u8>> {
    match payload {
        Payload::GridFunction(phi) => {
            let mut out = header(KIND_GRID_FUNCTION, phi.n(), phi.n())?;
            push_complex(&mut out, phi.values());
            Ok(out)
        }
        Payload::ComplexMatrix { rows, cols, data } => {
            if rows * cols != data.len() {
                return Err(Error::DimensionMismatch { expected: rows * cols, got: data.len() });
            }
            let mut out = header(KIND_COMPLEX_MATRIX, *rows, *cols)?;
            push_complex(&mut out, data);
            Ok(out)
        }
        Payload::RealVector(v) => {
            let mut out = header(KIND_REAL_VECTOR, v.len(), 1)?;
            for x in v {
                out.extend_from_slice(&x.to_le_bytes());
            }
            Ok(out)
        }
    }
}

fn u16_at(b: &[u8], i: usize) -> u16 {
    u16::from_le_bytes([b[i], b[i + 1]])
}

fn u32_at(b: &[u8], i: usize) -> u32 {
    u32::from_le_bytes([b[i], b[i + 1], b[i + 2], b[i + 3]])
}

fn f64s(b: &[u8]) -> impl Iterator<Item = f64> + '_ {
    b.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
}

pub fn decode(bytes: &[u8]) -> Result<Payload> {
    if bytes.len() < HEADER_LEN {
        return Err(Error::Format(format!("container shorter than its {HEADER_LEN}-byte header")));
    }
    if bytes[..4] != MAGIC {
        return Err(Error::Format("bad container magic".into()));
    }
    let version = u16_at(bytes, 4);
    if version != VERSION {
        return Err(Error::Format(format!("unsupported container version {version}")));
    }
    let kind = u16_at(bytes, 6);
    let rows = u32_at(bytes, 8) as usize;
    let cols = u32_at(bytes, 12) as usize;
    let body = &bytes[HEADER_LEN..];
    let per = match kind {
        KIND_GRID_FUNCTION | KIND_COMPLEX_MATRIX => 2usize,
        KIND_REAL_VECTOR => 1,
        other => return Err(Error::Format(format!("unknown container kind {other}"))),
    };
    let words = rows
        .checked_mul(cols)
        .and_then(|c| c.checked_mul(per))
        .filter(|&w| w <= MAX_WORDS)
        .ok_or_else(|| Error::Format(format!("payload {rows} x {cols} too large")))?;
    if body.len() != words * 8 {
        return Err(Error::Format(format!("payload has {} bytes, header implies {}", body.len(), words * 8)));
    }
    match kind {
        KIND_REAL_VECTOR => {
            if cols != 1 {
                return Err(Error::Format(format!("real vector must have one column, got {cols}")));
            }
            Ok(Payload::RealVector(f64s(body).collect()))
        }
        _ => {
            let v: Vec<f64> = f64s(body).collect();
            let data: Vec<Complex64> = v.chunks_exact(2).map(|c| Complex64::new(c[0], c[1])).collect();
            if kind == KIND_COMPLEX_MATRIX {
                return Ok(Payload::ComplexMatrix { rows, cols, data });
            }
            if rows != cols {
                return Err(Error::Format(format!("grid function must be square, got {rows} x {cols}")));
            }
            let grid = TorusGrid::new(rows)?;
            Ok(Payload::GridFunction(GridFunction::new(&grid, data)?))
        }
    }
}
