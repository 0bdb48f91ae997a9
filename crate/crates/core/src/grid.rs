//! Uniform N x N discretisation of the torus [-pi, pi)^2.
//!
//! Point (j, l) sits at (-pi + 2 pi j / N, -pi + 2 pi l / N) and has flat
//! index `j * N + l`. Every point carries weight 1/N^2.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::TorusPoint;

#[derive(Clone, Debug, PartialEq)]
pub struct TorusGrid {
    n: usize,
    coords: Vec<f64>,
}

impl TorusGrid {
    /// `n` must be even and at least 4.
    pub fn new(n: usize) -> Result<Self> {
        if n < 4 || !n.is_multiple_of(2) {
            return Err(Error::Validation(format!("grid size N must be even and >= 4, got {n}")));
        }
        if n > 4096 {
            return Err(Error::Validation(format!("grid size N = {n} is unreasonably large")));
        }
        let coords = (0..n).map(|j| -PI + 2.0 * PI * j as f64 / n as f64).collect();
        Ok(TorusGrid { n, coords })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Number of points, N^2.
    pub fn len(&self) -> usize {
        self.n * self.n
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn weight(&self) -> f64 {
        1.0 / self.len() as f64
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn coord(&self, j: usize) -> f64 {
        self.coords[j]
    }

    pub fn point(&self, idx: usize) -> TorusPoint {
        [self.coords[idx / self.n], self.coords[idx % self.n]]
    }

    pub fn index(&self, j: usize, l: usize) -> usize {
        j * self.n + l
    }

    /// Axis index of -p_j on the torus.
    pub fn neg_index(&self, j: usize) -> usize {
        (self.n - j) % self.n
    }

    /// Index of the point nearest to `q` after wrapping, with the distance.
    pub fn nearest(&self, q: TorusPoint) -> (usize, f64) {
        let h = 2.0 * PI / self.n as f64;
        let axis = |x: f64| {
            let t = ((x + PI) / h).round();
            let j = (t as i64).rem_euclid(self.n as i64) as usize;
            let d = crate::params::wrap_angle(x - self.coords[j]).abs();
            (j, d)
        };
        let (j, dj) = axis(q[0]);
        let (l, dl) = axis(q[1]);
        (self.index(j, l), dj.max(dl))
    }

    /// True when `q` coincides with a grid point up to 1e-12.
    pub fn contains(&self, q: TorusPoint) -> bool {
        self.nearest(q).1 < 1e-12
    }

    /// All grid points in index order.
    pub fn points(&self) -> Vec<TorusPoint> {
        (0..self.len()).map(|i| self.point(i)).collect()
    }

    /// Flat index of R(p) where R(q1, q2) = (q2, -q1).
    pub fn rotate_index(&self, idx: usize) -> usize {
        let (j, l) = (idx / self.n, idx % self.n);
        self.index(l, self.neg_index(j))
    }
}

/// Complex values on the points of a grid.
#[derive(Clone, Debug, PartialEq)]
pub struct GridFunction {
    n: usize,
    values: Vec<Complex64>,
}

impl GridFunction {
    pub fn new(grid: &TorusGrid, values: Vec<Complex64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::DimensionMismatch { expected: grid.len(), got: values.len() });
        }
        Ok(GridFunction { n: grid.n(), values })
    }

    pub fn zeros(grid: &TorusGrid) -> Self {
        GridFunction { n: grid.n(), values: vec![Complex64::new(0.0, 0.0); grid.len()] }
    }

    pub fn from_fn(grid: &TorusGrid, f: impl Fn(TorusPoint) -> Complex64) -> Self {
        GridFunction { n: grid.n(), values: (0..grid.len()).map(|i| f(grid.point(i))).collect() }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [Complex64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<Complex64> {
        self.values
    }

    pub fn scale(&mut self, s: Complex64) {
        for v in &mut self.values {
            *v *= s;
        }
    }

    /// Squared L^2 norm under the normalised Haar measure.
    pub fn norm_sqr(&self) -> f64 {
        self.values.iter().map(|v| v.norm_sqr()).sum::<f64>() / self.values.len() as f64
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|v| *v == Complex64::new(0.0, 0.0))
    }
}

fn check(grid: &TorusGrid, f: &GridFunction) -> Result<()> {
    if f.n != grid.n() {
        return Err(Error::DimensionMismatch { expected: grid.len(), got: f.values.len() });
    }
    Ok(())
}

/// (1/N^2) sum over p of conj(phi(p)) psi(p), summed in index order.
pub fn inner_product(grid: &TorusGrid, phi: &GridFunction, psi: &GridFunction) -> Result<Complex64> {
    check(grid, phi)?;
    check(grid, psi)?;
    Ok(dot(&phi.values, &psi.values) * grid.weight())
}

/// Unweighted sum of conj(a_i) b_i.
pub(crate) fn dot(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    a.iter().zip(b).fold(Complex64::new(0.0, 0.0), |acc, (x, y)| acc + x.conj() * y)
}

/// The plane wave p -> e^{i p.x}.
pub fn plane_wave(grid: &TorusGrid, x: [i64; 2]) -> GridFunction {
    let e1 = axis_phases(grid, x[0]);
    let e2 = axis_phases(grid, x[1]);
    let mut values = Vec::with_capacity(grid.len());
    for a in &e1 {
        for b in &e2 {
            values.push(a * b);
        }
    }
    GridFunction { n: grid.n(), values }
}

/// e^{i p_j x} for every axis coordinate p_j, computed as
/// (-1)^x e^{2 pi i (j x mod N) / N} so that large |x| stays exact.
fn axis_phases(grid: &TorusGrid, x: i64) -> Vec<Complex64> {
    let n = grid.n() as i64;
    let sign = if x.rem_euclid(2) == 0 { 1.0 } else { -1.0 };
    (0..n)
        .map(|j| {
            let r = (j * x.rem_euclid(n)).rem_euclid(n);
            Complex64::from_polar(sign, 2.0 * PI * r as f64 / n as f64)
        })
        .collect()
}

/// Square window of lattice sites |x1|, |x2| <= w, stored row-major from
/// (-w, -w) with x2 fastest.
#[derive(Clone, Debug, PartialEq)]
pub struct LatticeMap<T> {
    pub w: usize,
    pub values: Vec<T>,
}

impl<T: Copy> LatticeMap<T> {
    pub fn side(&self) -> usize {
        2 * self.w + 1
    }

    pub fn index(&self, x: [i64; 2]) -> Option<usize> {
        let w = self.w as i64;
        if x[0].abs() > w || x[1].abs() > w {
            return None;
        }
        Some(((x[0] + w) as usize) * self.side() + (x[1] + w) as usize)
    }

    pub fn get(&self, x: [i64; 2]) -> Option<T> {
        self.index(x).map(|i| self.values[i])
    }

    pub fn site(&self, i: usize) -> [i64; 2] {
        let w = self.w as i64;
        [(i / self.side()) as i64 - w, (i % self.side()) as i64 - w]
    }

    pub fn iter(&self) -> impl Iterator<Item = ([i64; 2], T)> + '_ {
        self.values.iter().enumerate().map(|(i, &v)| (self.site(i), v))
    }
}

/// psi(x) = (1/N^2) sum_p e^{-i p.x} phi(p) on the window |x_i| <= w.
///
/// The sum factorises over the two axes, which keeps it exact while costing
/// O(N^2 w) instead of O(N^2 w^2).
pub fn to_lattice(grid: &TorusGrid, phi: &GridFunction, w: usize) -> Result<LatticeMap<Complex64>> {
    check(grid, phi)?;
    let n = grid.n();
    if w > n / 2 {
        return Err(Error::WindowTooLarge { w, max: n / 2 });
    }
    let side = 2 * w + 1;
    let xs: Vec<i64> = (0..side as i64).map(|i| i - w as i64).collect();
    let phases: Vec<Vec<Complex64>> = xs.iter().map(|&x| axis_phases(grid, -x)).collect();
    // partial[l][a] = sum_j e^{-i p_j x_a} phi(j, l)
    let mut partial = vec![Complex64::new(0.0, 0.0); n * side];
    for (a, ph) in phases.iter().enumerate() {
        for (j, pj) in ph.iter().enumerate() {
            let row = &phi.values[j * n..(j + 1) * n];
            for (l, v) in row.iter().enumerate() {
                partial[l * side + a] += pj * v;
            }
        }
    }
    let wt = grid.weight();
    let mut values = vec![Complex64::new(0.0, 0.0); side * side];
    for a in 0..side {
        for (b, ph) in phases.iter().enumerate() {
            let mut acc = Complex64::new(0.0, 0.0);
            for (l, pl) in ph.iter().enumerate() {
                acc += pl * partial[l * side + a];
            }
            values[a * side + b] = acc * wt;
        }
    }
    Ok(LatticeMap { w, values })
}

/// phi(p) = sum_x e^{i p.x} psi(x); inverse of [`to_lattice`] for functions
/// band-limited to the window.
pub fn from_lattice(grid: &TorusGrid, map: &LatticeMap<Complex64>) -> GridFunction {
    let mut out = GridFunction::zeros(grid);
    for (x, v) in map.iter() {
        if v == Complex64::new(0.0, 0.0) {
            continue;
        }
        let e = plane_wave(grid, x);
        for (o, ev) in out.values.iter_mut().zip(&e.values) {
            *o += ev * v;
        }
    }
    out
}

/// [R phi](k1, k2) = phi(k2, -k1), realised as an exact permutation.
pub fn rotate_grid_function(grid: &TorusGrid, phi: &GridFunction) -> Result<GridFunction> {
    check(grid, phi)?;
    let values = (0..grid.len()).map(|i| phi.values[grid.rotate_index(i)]).collect();
    Ok(GridFunction { n: grid.n(), values })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn rejects_odd_or_small() {
        assert!(TorusGrid::new(3).is_err());
        assert!(TorusGrid::new(7).is_err());
        assert!(TorusGrid::new(2).is_err());
        assert!(TorusGrid::new(4).is_ok());
    }

    #[test]
    fn weights_sum_to_one() {
        let g = TorusGrid::new(10).unwrap();
        assert!((g.weight() * g.len() as f64 - 1.0).abs() < 1e-15);
        assert_eq!(g.point(0), [-PI, -PI]);
    }

    #[test]
    fn plane_wave_values() {
        let g = TorusGrid::new(8).unwrap();
        let e0 = plane_wave(&g, [0, 0]);
        assert!(e0.values().iter().all(|v| *v == c(1.0, 0.0)));
        let e = plane_wave(&g, [1, 0]);
        let (i0, _) = g.nearest([0.0, 0.0]);
        assert!((e.values()[i0] - c(1.0, 0.0)).norm() < 1e-15);
        let (i1, _) = g.nearest([PI / 2.0, 0.0]);
        assert!((e.values()[i1] - c(0.0, 1.0)).norm() < 1e-15);
    }

    #[test]
    fn plane_wave_orthonormality_and_aliasing() {
        let g = TorusGrid::new(8).unwrap();
        let a = plane_wave(&g, [2, -1]);
        assert!((inner_product(&g, &a, &a).unwrap() - c(1.0, 0.0)).norm() < 1e-14);
        let b = plane_wave(&g, [-5, 3]);
        assert!(inner_product(&g, &a, &b).unwrap().norm() < 1e-14);
        let alias = plane_wave(&g, [2 + 8, -1]);
        assert!((inner_product(&g, &a, &alias).unwrap() - c(1.0, 0.0)).norm() < 1e-13);
        // Geometric-sum oracle for a generic pair.
        let x = [3i64, 1];
        let y = [1i64, 1];
        let direct: Complex64 =
            (0..8).map(|j| Complex64::from_polar(1.0, g.coord(j) * (y[0] - x[0]) as f64)).sum::<Complex64>() / 8.0;
        let ip = inner_product(&g, &plane_wave(&g, x), &plane_wave(&g, y)).unwrap();
        assert!((ip - direct).norm() < 1e-14);
    }

    #[test]
    fn large_shift_plane_wave_is_accurate() {
        let g = TorusGrid::new(16).unwrap();
        let a = plane_wave(&g, [3, 0]);
        let b = plane_wave(&g, [3 + 16 * 1001, 0]);
        for (x, y) in a.values().iter().zip(b.values()) {
            assert!((x - y).norm() < 1e-13);
        }
    }

    #[test]
    fn mismatch_is_rejected() {
        let g = TorusGrid::new(8).unwrap();
        let h = TorusGrid::new(4).unwrap();
        assert!(inner_product(&g, &GridFunction::zeros(&g), &GridFunction::zeros(&h)).is_err());
        assert!(GridFunction::new(&g, vec![c(0.0, 0.0); 3]).is_err());
    }

    #[test]
    fn to_lattice_of_plane_wave_is_indicator() {
        let g = TorusGrid::new(12).unwrap();
        let y = [2i64, -3];
        let m = to_lattice(&g, &plane_wave(&g, y), 4).unwrap();
        for (x, v) in m.iter() {
            let want = if x == y { 1.0 } else { 0.0 };
            assert!((v - c(want, 0.0)).norm() < 1e-13, "{x:?} {v}");
        }
        let one = to_lattice(&g, &plane_wave(&g, [0, 0]), 3).unwrap();
        assert!((one.get([0, 0]).unwrap() - c(1.0, 0.0)).norm() < 1e-14);
        assert!(to_lattice(&g, &plane_wave(&g, [0, 0]), 7).is_err());
    }

    #[test]
    fn to_lattice_matches_direct_sum() {
        let g = TorusGrid::new(8).unwrap();
        let phi = GridFunction::from_fn(&g, |p| c((p[0] * 1.3).sin() + p[1], (p[0] - 2.0 * p[1]).cos()));
        let m = to_lattice(&g, &phi, 3).unwrap();
        for (x, v) in m.iter() {
            let mut direct = c(0.0, 0.0);
            for i in 0..g.len() {
                let p = g.point(i);
                direct += Complex64::from_polar(1.0, -(p[0] * x[0] as f64 + p[1] * x[1] as f64)) * phi.values()[i];
            }
            direct /= g.len() as f64;
            assert!((v - direct).norm() < 1e-12);
        }
    }

    #[test]
    fn rotation_is_a_permutation_of_order_four() {
        let g = TorusGrid::new(6).unwrap();
        let mut seen = vec![false; g.len()];
        for i in 0..g.len() {
            let r = g.rotate_index(i);
            assert!(!seen[r]);
            seen[r] = true;
            let p = g.point(i);
            let q = g.point(r);
            assert!(crate::params::wrap_angle(q[0] - p[1]).abs() < 1e-12);
            assert!(crate::params::wrap_angle(q[1] + p[0]).abs() < 1e-12);
            assert_eq!(g.rotate_index(g.rotate_index(g.rotate_index(r))), i);
        }
    }

    fn grid_function(n: usize) -> impl Strategy<Value = GridFunction> {
        proptest::collection::vec((-1.0f64..1.0, -1.0f64..1.0), n * n).prop_map(move |v| {
            let g = TorusGrid::new(n).unwrap();
            GridFunction::new(&g, v.into_iter().map(|(a, b)| c(a, b)).collect()).unwrap()
        })
    }

    proptest! {
        #[test]
        fn parseval(phi in grid_function(8)) {
            let g = TorusGrid::new(8).unwrap();
            let lhs = inner_product(&g, &phi, &phi).unwrap().re;
            // The window [-N/2, N/2]^2 double counts the aliased edge; use the
            // fundamental domain [-N/2, N/2)^2.
            let m = to_lattice(&g, &phi, 4).unwrap();
            let rhs: f64 = m.iter().filter(|(x, _)| x[0] < 4 && x[1] < 4).map(|(_, v)| v.norm_sqr()).sum();
            prop_assert!((lhs - rhs).abs() < 1e-10);
        }

        #[test]
        fn rotation_is_isometry(a in grid_function(6), b in grid_function(6)) {
            let g = TorusGrid::new(6).unwrap();
            let ra = rotate_grid_function(&g, &a).unwrap();
            let rb = rotate_grid_function(&g, &b).unwrap();
            let x = inner_product(&g, &a, &b).unwrap();
            let y = inner_product(&g, &ra, &rb).unwrap();
            prop_assert!((x - y).norm() < 1e-14);
        }

        #[test]
        fn band_limited_round_trip(vals in proptest::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 25)) {
            let g = TorusGrid::new(10).unwrap();
            let mut m = LatticeMap { w: 2, values: vals.into_iter().map(|(a, b)| c(a, b)).collect() };
            let phi = from_lattice(&g, &m);
            let back = to_lattice(&g, &phi, 2).unwrap();
            for (u, v) in back.values.iter().zip(m.values.iter_mut()) {
                prop_assert!((u - *v).norm() < 1e-12);
            }
            let again = from_lattice(&g, &back);
            for (u, v) in again.values().iter().zip(phi.values()) {
                prop_assert!((u - v).norm() < 1e-12);
            }
        }
    }
}
