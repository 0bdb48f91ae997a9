//! CSV exports and the grid-function CSV reader.

use num_complex::Complex64;

use super::fmt_f64;
use crate::dispersion::DispersionTable;
use crate::error::{Error, Result};
use crate::grid::{GridFunction, LatticeMap, TorusGrid};

pub const DISPERSION_HEADER: [&str; 13] =
    ["k1", "k2", "E_eV", "gap_eV", "rho", "v1", "v2", "m11", "m12", "m22", "w_s", "w_d", "w_p"];
pub const GRID_FUNCTION_HEADER: [&str; 4] = ["p1", "p2", "re", "im"];
pub const DENSITY_HEADER: [&str; 3] = ["x", "y", "density"];

/// Largest grid accepted when reading.
const MAX_READ_N: usize = 4096;

fn finish(w: csv::Writer<Vec<u8>>) -> Result<String> {
    let bytes = w.into_inner().map_err(|e| Error::Format(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| Error::Format(e.to_string()))
}

fn csv_err(e: csv::Error) -> Error {
    match e.position() {
        Some(p) => Error::Parse { line: p.line() as usize, msg: e.to_string() },
        None => Error::Format(e.to_string()),
    }
}

/// One row per record, missing quantities as `nan`.
pub fn dispersion_csv(table: &DispersionTable) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(DISPERSION_HEADER).map_err(csv_err)?;
    let nan = f64::NAN;
    for r in &table.records {
        let v = r.v.unwrap_or([nan; 2]);
        let m = r.mass.unwrap_or([[nan; 2]; 2]);
        let s = r.sym.map(|s| [s.w_s, s.w_d, s.w_p]).unwrap_or([nan; 3]);
        let row = [r.k[0], r.k[1], r.e, r.gap, r.rho, v[0], v[1], m[0][0], m[0][1], m[1][1], s[0], s[1], s[2]];
        w.write_record(row.iter().map(|&x| fmt_f64(x))).map_err(csv_err)?;
    }
    finish(w)
}

/// Space separated `x y density`, rows in window order.
pub fn density_csv(density: &LatticeMap<f64>) -> Result<String> {
    let mut w = csv::WriterBuilder::new().delimiter(b' ').from_writer(Vec::new());
    w.write_record(DENSITY_HEADER).map_err(csv_err)?;
    for (x, d) in density.iter() {
        w.write_record([x[0].to_string(), x[1].to_string(), fmt_f64(d)]).map_err(csv_err)?;
    }
    finish(w)
}

pub fn grid_function_csv(grid: &TorusGrid, phi: &GridFunction) -> Result<String> {
    if phi.n() != grid.n() {
        return Err(Error::DimensionMismatch { expected: grid.n(), got: phi.n() });
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(GRID_FUNCTION_HEADER).map_err(csv_err)?;
    for (i, v) in phi.values().iter().enumerate() {
        let p = grid.point(i);
        w.write_record([fmt_f64(p[0]), fmt_f64(p[1]), fmt_f64(v.re), fmt_f64(v.im)]).map_err(csv_err)?;
    }
    finish(w)
}

/// Reads a `p1,p2,re,im` table. The grid size is inferred from the row
/// count; rows may come in any order but every grid point must appear once.
pub fn parse_grid_function_csv(text: &str) -> Result<(TorusGrid, GridFunction)> {
    let mut r = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    let header = r.headers().map_err(csv_err)?.clone();
    if header.iter().collect::<Vec<_>>() != GRID_FUNCTION_HEADER {
        return Err(Error::Parse {
            line: 1,
            msg: format!("expected header p1,p2,re,im, got {}", header.iter().collect::<Vec<_>>().join(",")),
        });
    }
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(csv_err)?;
        let line = rec.position().map(|p| p.line() as usize).unwrap_or(0);
        if rec.len() != 4 {
            return Err(Error::Parse { line, msg: format!("expected 4 fields, got {}", rec.len()) });
        }
        let mut f = [0.0; 4];
        for (slot, s) in f.iter_mut().zip(rec.iter()) {
            *slot = s.parse::<f64>().map_err(|e| Error::Parse { line, msg: format!("bad number {s:?}: {e}") })?;
            if !slot.is_finite() {
                return Err(Error::Parse { line, msg: format!("non-finite value {s:?}") });
            }
        }
        rows.push((line, f));
        if rows.len() > MAX_READ_N * MAX_READ_N {
            return Err(Error::Format("grid function table too large".into()));
        }
    }
    let n = (rows.len() as f64).sqrt().round() as usize;
    if n * n != rows.len() || n == 0 {
        return Err(Error::Format(format!("{} rows is not a square grid", rows.len())));
    }
    let grid = TorusGrid::new(n)?;
    let mut values = vec![None; grid.len()];
    let tol = 1e-9;
    for (line, f) in rows {
        let (idx, dist) = grid.nearest([f[0], f[1]]);
        if dist > tol {
            return Err(Error::Parse { line, msg: format!("({}, {}) is not a point of the N = {n} grid", f[0], f[1]) });
        }
        if values[idx].replace(Complex64::new(f[2], f[3])).is_some() {
            return Err(Error::Parse { line, msg: format!("duplicate grid point ({}, {})", f[0], f[1]) });
        }
    }
    let values: Vec<Complex64> = values.into_iter().map(|v| v.expect("every slot filled once")).collect();
    let phi = GridFunction::new(&grid, values)?;
    Ok((grid, phi))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn grid_function_round_trip_is_exact() {
        let g = TorusGrid::new(8).unwrap();
        let phi = GridFunction::from_fn(&g, |p| Complex64::new(p[0].sin() / 3.0, (p[1] * 7.0).cos()));
        let text = grid_function_csv(&g, &phi).unwrap();
        assert!(text.starts_with("p1,p2,re,im\n"));
        let (g2, back) = parse_grid_function_csv(&text).unwrap();
        assert_eq!(g2, g);
        assert_eq!(back, phi);
    }

    #[test]
    fn grid_function_errors() {
        assert!(parse_grid_function_csv("a,b,c,d\n").is_err());
        assert!(parse_grid_function_csv("p1,p2,re,im\n").is_err());
        let g = TorusGrid::new(4).unwrap();
        let text = grid_function_csv(&g, &GridFunction::zeros(&g)).unwrap();
        let dup = text.replacen("-1.5707963267948966e0", "-3.1415926535897931e0", 1);
        assert!(parse_grid_function_csv(&dup).is_err());
        let off = text.replacen("-1.5707963267948966e0", "-1.5e0", 1);
        assert!(matches!(parse_grid_function_csv(&off), Err(Error::Parse { .. })));
        let bad = text.replacen("0e0", "x", 1);
        assert!(parse_grid_function_csv(&bad).is_err());
    }

    #[test]
    fn density_layout() {
        let m = LatticeMap { w: 1, values: (0..9).map(|i| i as f64).collect() };
        let text = density_csv(&m).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "x y density");
        assert_eq!(lines[1], "-1 -1 0.0000000000000000e0");
        assert_eq!(lines.len(), 10);
    }

    proptest! {
        #[test]
        fn parser_never_panics(s in ".{0,400}") {
            let _ = parse_grid_function_csv(&s);
        }

        #[test]
        fn parser_survives_mutations(pos in 0usize..2000, byte in any::<u8>()) {
            let g = TorusGrid::new(4).unwrap();
            let mut text = grid_function_csv(&g, &GridFunction::zeros(&g)).unwrap().into_bytes();
            let i = pos % text.len();
            text[i] = byte;
            let _ = parse_grid_function_csv(&String::from_utf8_lossy(&text));
        }
    }
}
