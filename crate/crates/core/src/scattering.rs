//! Finite-time interaction-picture propagators of a single fiber.
//!
//! With X = A11 (+) b and Y = A - X (the off-diagonal exchange coupling),
//! V_{t,s} = e^{itX} e^{i(s-t)A} e^{-isX} solves d/dt V = -i Y_t V with
//! Y_t = e^{itX} Y e^{-itX}. Y_t has rank two:
//! Y_t = [[0, u(t)], [u(t)^dagger, 0]], u(t) = e^{-itb} e^{itA11} a.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::expm::{chebyshev_propagate, expm, unitarity_error};
use crate::fiber::FiberOperator;
use crate::grid::{dot, TorusGrid};
use crate::params::ModelParams;
use crate::spectral::solve_e;
use crate::TorusPoint;

const I: Complex64 = Complex64::new(0.0, 1.0);

fn re(x: f64) -> Complex64 {
    Complex64::new(x, 0.0)
}

/// Dense data of one finite-U fiber, in orthonormal coordinates.
pub struct FiberDynamics {
    pub k: TorusPoint,
    /// Number of fermionic coordinates (N^2).
    pub m: usize,
    pub a11: DMatrix<Complex64>,
    /// A12 column.
    pub a: DVector<Complex64>,
    pub b: f64,
    eigvecs: DMatrix<Complex64>,
    eigvals: Vec<f64>,
    /// eigvecs^dagger a.
    coeffs: Vec<Complex64>,
}

impl FiberDynamics {
    pub fn new(params: &ModelParams, grid: &TorusGrid, k: TorusPoint) -> Result<Self> {
        params.validate()?;
        if params.u_onsite.is_hard_core() {
            return Err(Error::HardCoreUnsupported("propagators need a finite U; use a large finite proxy"));
        }
        let op = FiberOperator::new(params, grid, k)?;
        let a11 = op.dense_a11()?;
        let a = DVector::from_vec(op.coupling_column());
        let eig = SymmetricEigen::new(a11.clone());
        let eigvecs = eig.eigenvectors;
        let eigvals: Vec<f64> = eig.eigenvalues.iter().copied().collect();
        let coeffs: Vec<Complex64> = (eigvecs.adjoint() * &a).iter().copied().collect();
        Ok(FiberDynamics { k, m: grid.len(), a11, a, b: op.functions().b, eigvecs, eigvals, coeffs })
    }

    pub fn dim(&self) -> usize {
        self.m + 1
    }

    pub fn coupling_is_zero(&self) -> bool {
        self.a.iter().all(|v| *v == Complex64::new(0.0, 0.0))
    }

    /// Dense full fiber matrix A.
    pub fn full(&self) -> DMatrix<Complex64> {
        let m = self.m;
        let mut a = DMatrix::<Complex64>::zeros(m + 1, m + 1);
        a.view_mut((0, 0), (m, m)).copy_from(&self.a11);
        for p in 0..m {
            a[(p, m)] = self.a[p];
            a[(m, p)] = self.a[p].conj();
        }
        a[(m, m)] = re(self.b);
        a
    }

    /// Block-diagonal reference X = A11 (+) b.
    pub fn reference(&self) -> DMatrix<Complex64> {
        let mut x = self.full();
        for p in 0..self.m {
            x[(p, self.m)] = Complex64::new(0.0, 0.0);
            x[(self.m, p)] = Complex64::new(0.0, 0.0);
        }
        x
    }

    /// u(t) = e^{-itb} e^{itA11} a from the eigendecomposition of A11.
    pub fn u_t(&self, t: f64) -> DVector<Complex64> {
        let g = Complex64::from_polar(1.0, -t * self.b);
        let rotated: DVector<Complex64> = DVector::from_iterator(
            self.m,
            self.coeffs.iter().zip(&self.eigvals).map(|(c, l)| c * Complex64::from_polar(1.0, t * l) * g),
        );
        &self.eigvecs * rotated
    }

    /// Y_t M in O(dim^2) using the rank-two structure.
    fn apply_y(&self, u: &DVector<Complex64>, mat: &DMatrix<Complex64>) -> DMatrix<Complex64> {
        let m = self.m;
        let mut out = DMatrix::<Complex64>::zeros(mat.nrows(), mat.ncols());
        let last = mat.row(m).clone_owned();
        for (col, lv) in last.iter().enumerate() {
            for p in 0..m {
                out[(p, col)] = u[p] * lv;
            }
        }
        let top = mat.rows(0, m);
        let row = u.adjoint() * top;
        out.row_mut(m).copy_from(&row);
        out
    }

    /// Spread of the frequencies present in u(t).
    fn max_frequency(&self) -> f64 {
        self.eigvals.iter().map(|l| (l - self.b).abs()).fold(0.0, f64::max)
    }
}

fn exp_i(h: &DMatrix<Complex64>, t: f64) -> Result<DMatrix<Complex64>> {
    expm(&(h * (I * t)))
}

/// V_{t,s} from three dense Pade exponentials.
pub fn interaction_picture_exact(
    params: &ModelParams,
    grid: &TorusGrid,
    k: TorusPoint,
    s: f64,
    t: f64,
) -> Result<DMatrix<Complex64>> {
    let dynamics = FiberDynamics::new(params, grid, k)?;
    exact_propagator(&dynamics, s, t)
}

pub fn exact_propagator(d: &FiberDynamics, s: f64, t: f64) -> Result<DMatrix<Complex64>> {
    let x = d.reference();
    let a = d.full();
    Ok(exp_i(&x, t)? * exp_i(&a, s - t)? * exp_i(&x, -s)?)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Method {
    Ode { steps: usize },
    Series { order: usize, panels: usize },
    Exact,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PropagatorRecord {
    pub k: TorusPoint,
    pub u_onsite: String,
    pub s: f64,
    pub t: f64,
    pub v_ts: DMatrix<Complex64>,
    pub method: Method,
    /// Frobenius distance to the exact propagator.
    pub oracle_error: f64,
    pub unitarity_error: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PropagatorSummary {
    pub k: TorusPoint,
    pub u_onsite: String,
    pub s: f64,
    pub t: f64,
    pub dim: usize,
    pub method: Method,
    pub oracle_error: f64,
    pub unitarity_error: f64,
    /// Frobenius distance to the identity.
    pub distance_from_identity: f64,
    /// |<boson| V |boson>|.
    pub boson_return_amplitude: f64,
}

impl PropagatorRecord {
    pub fn summary(&self) -> PropagatorSummary {
        let n = self.v_ts.nrows();
        PropagatorSummary {
            k: self.k,
            u_onsite: self.u_onsite.clone(),
            s: self.s,
            t: self.t,
            dim: n,
            method: self.method,
            oracle_error: self.oracle_error,
            unitarity_error: self.unitarity_error,
            distance_from_identity: (&self.v_ts - DMatrix::<Complex64>::identity(n, n)).norm(),
            boson_return_amplitude: self.v_ts[(n - 1, n - 1)].norm(),
        }
    }
}

/// Classical RK4 for d/dt V = -i Y_t V from V_{s,s} = 1.
pub fn ode_propagator(d: &FiberDynamics, s: f64, t: f64, steps: usize) -> Result<DMatrix<Complex64>> {
    if steps < 4 {
        return Err(Error::StepCountTooSmall(steps));
    }
    let n = d.dim();
    let mut v = DMatrix::<Complex64>::identity(n, n);
    if d.coupling_is_zero() || s == t {
        return Ok(v);
    }
    let h = (t - s) / steps as f64;
    let mi = -I;
    let mut u_next = d.u_t(s);
    for j in 0..steps {
        let tau = s + h * j as f64;
        let u0 = u_next;
        let u_half = d.u_t(tau + 0.5 * h);
        u_next = d.u_t(if j + 1 == steps { t } else { tau + h });
        let k1 = d.apply_y(&u0, &v) * mi;
        let k2 = d.apply_y(&u_half, &(&v + &k1 * re(0.5 * h))) * mi;
        let k3 = d.apply_y(&u_half, &(&v + &k2 * re(0.5 * h))) * mi;
        let k4 = d.apply_y(&u_next, &(&v + &k3 * re(h))) * mi;
        v += (k1 + k2 * re(2.0) + k3 * re(2.0) + k4) * re(h / 6.0);
    }
    Ok(v)
}

pub fn propagate_ode(
    params: &ModelParams,
    grid: &TorusGrid,
    k: TorusPoint,
    s: f64,
    t: f64,
    steps: usize,
) -> Result<PropagatorRecord> {
    let d = FiberDynamics::new(params, grid, k)?;
    let v = ode_propagator(&d, s, t, steps)?;
    let exact = exact_propagator(&d, s, t)?;
    Ok(PropagatorRecord {
        k,
        u_onsite: params.u_onsite.to_string(),
        s,
        t,
        oracle_error: (&v - exact).norm(),
        unitarity_error: unitarity_error(&v),
        v_ts: v,
        method: Method::Ode { steps },
    })
}

/// Gauss-Legendre nodes and weights on [-1, 1].
pub fn gauss_legendre(m: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; m];
    let mut w = vec![0.0; m];
    for i in 0..m {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (m as f64 + 0.5)).cos();
        for _ in 0..100 {
            let (p, dp) = legendre(m, z);
            let dz = p / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        let (_, dp) = legendre(m, z);
        x[m - 1 - i] = z;
        w[m - 1 - i] = 2.0 / ((1.0 - z * z) * dp * dp);
    }
    (x, w)
}

fn legendre(m: usize, z: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, z);
    for j in 2..=m {
        let p2 = ((2 * j - 1) as f64 * z * p1 - (j - 1) as f64 * p0) / j as f64;
        p0 = p1;
        p1 = p2;
    }
    let dp = m as f64 * (z * p1 - p0) / (z * z - 1.0);
    (p1, dp)
}

/// S[j][i] = integral from -1 to x_j of the i-th Lagrange basis polynomial.
fn integration_matrix(x: &[f64], w: &[f64]) -> Vec<Vec<f64>> {
    let m = x.len();
    let lagrange =
        |i: usize, y: f64| -> f64 { (0..m).filter(|&l| l != i).map(|l| (y - x[l]) / (x[i] - x[l])).product() };
    (0..m)
        .map(|j| {
            let half = 0.5 * (x[j] + 1.0);
            (0..m).map(|i| (0..m).map(|q| w[q] * lagrange(i, -1.0 + half * (x[q] + 1.0))).sum::<f64>() * half).collect()
        })
        .collect()
}

/// Nodes per panel of the series quadrature.
pub const SERIES_NODES: usize = 8;
pub const MAX_SERIES_ORDER: usize = 6;

/// Truncated Dyson series sum_{n <= order} (-i)^n G_n(t) with
/// G_n(tau) = int_s^tau Y_sigma G_{n-1}(sigma) d sigma, on composite
/// Gauss-Legendre panels. `panels = None` picks a count from the fastest
/// oscillation in u(t).
pub fn series_propagator(
    d: &FiberDynamics,
    s: f64,
    t: f64,
    order: usize,
    panels: Option<usize>,
) -> Result<(DMatrix<Complex64>, usize)> {
    if order == 0 || order > MAX_SERIES_ORDER {
        return Err(Error::OrderRejected(order));
    }
    let n = d.dim();
    let id = DMatrix::<Complex64>::identity(n, n);
    if d.coupling_is_zero() || s == t {
        return Ok((id, panels.unwrap_or(1)));
    }
    let panels = panels.unwrap_or_else(|| ((d.max_frequency() * (t - s).abs() / 2.0).ceil() as usize).max(4));
    if panels == 0 {
        return Err(crate::error::validation("panel count must be >= 1"));
    }
    let (x, w) = gauss_legendre(SERIES_NODES);
    let smat = integration_matrix(&x, &w);
    let hp = (t - s) / panels as f64;
    let nodes: Vec<f64> =
        (0..panels).flat_map(|p| x.iter().map(move |xi| s + hp * (p as f64 + 0.5 * (xi + 1.0)))).collect();
    let us: Vec<DVector<Complex64>> = nodes.iter().map(|&tau| d.u_t(tau)).collect();
    let mut prev: Vec<DMatrix<Complex64>> = vec![id.clone(); nodes.len()];
    let mut total = id;
    let mut factor = Complex64::new(1.0, 0.0);
    for _ in 1..=order {
        factor *= -I;
        let mut cur = Vec::with_capacity(nodes.len());
        let mut start = DMatrix::<Complex64>::zeros(n, n);
        for p in 0..panels {
            let f: Vec<DMatrix<Complex64>> =
                (0..SERIES_NODES).map(|i| d.apply_y(&us[p * SERIES_NODES + i], &prev[p * SERIES_NODES + i])).collect();
            for row in &smat {
                let mut g = start.clone();
                for (sji, fi) in row.iter().zip(&f) {
                    g += fi * re(0.5 * hp * sji);
                }
                cur.push(g);
            }
            for (wi, fi) in w.iter().zip(&f) {
                start += fi * re(0.5 * hp * wi);
            }
        }
        total += &start * factor;
        prev = cur;
    }
    Ok((total, panels))
}

/// Dyson-series propagator with its oracle error.
pub fn dyson_blocks(
    params: &ModelParams,
    grid: &TorusGrid,
    k: TorusPoint,
    s: f64,
    t: f64,
    order: usize,
) -> Result<PropagatorRecord> {
    if order == 0 || order > MAX_SERIES_ORDER {
        return Err(Error::OrderRejected(order));
    }
    let d = FiberDynamics::new(params, grid, k)?;
    let (v, panels) = series_propagator(&d, s, t, order, None)?;
    let exact = exact_propagator(&d, s, t)?;
    Ok(PropagatorRecord {
        k,
        u_onsite: params.u_onsite.to_string(),
        s,
        t,
        oracle_error: (&v - exact).norm(),
        unitarity_error: unitarity_error(&v),
        v_ts: v,
        method: Method::Series { order, panels },
    })
}

/// Fermion-fermion block of a propagator.
pub fn fermionic_block(v: &DMatrix<Complex64>) -> DMatrix<Complex64> {
    let m = v.nrows() - 1;
    v.view((0, 0), (m, m)).clone_owned()
}

/// Two evaluations of the scalar kernel u(t)^dagger u(s): from the A11
/// eigenbasis, and as upsilon^2 e^{i(t-s)b} <d, e^{i(s-t)A11} d> with a
/// Pade exponential. Returns both values.
pub fn kernel_check(
    params: &ModelParams,
    grid: &TorusGrid,
    k: TorusPoint,
    s: f64,
    t: f64,
) -> Result<(Complex64, Complex64)> {
    let dyn_ = FiberDynamics::new(params, grid, k)?;
    let lhs = dyn_.u_t(t).dotc(&dyn_.u_t(s));
    let op = FiberOperator::new(params, grid, k)?;
    let dvec = DVector::from_column_slice(op.functions().d.values());
    let prop = exp_i(&dyn_.a11, s - t)? * &dvec;
    let inner = dvec.dotc(&prop) / grid.len() as f64;
    let ups = op.functions().upsilon_hat;
    let rhs = Complex64::from_polar(ups * ups, (t - s) * dyn_.b) * inner;
    Ok((lhs, rhs))
}

/// ||e^{itA}Psi - e^{itE}Psi|| / ||Psi|| for the bound state at `k`.
pub fn bound_channel_check(params: &ModelParams, grid: &TorusGrid, k: TorusPoint, t: f64) -> Result<f64> {
    let state = solve_e(params, grid, k)?;
    let d = FiberDynamics::new(params, grid, k)?;
    let psi = DVector::from_vec(state.dense_vector());
    let evolved = exp_i(&d.full(), t)? * &psi;
    let phase = Complex64::from_polar(1.0, t * state.e);
    Ok((evolved - &psi * phase).norm() / psi.norm())
}

/// Wave-operator approach W(T) = e^{iTA} e^{-iTX} on fermionic probes.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct UnboundReport {
    pub k: TorusPoint,
    pub grid_n: usize,
    pub probes: usize,
    pub times: Vec<f64>,
    /// Mean over probes of |(W(T) phi)_boson|.
    pub boson_leakage: Vec<f64>,
    /// Max over probes of ||(W(2T) - W(T)) phi||, one fewer than `times`.
    pub cauchy_increments: Vec<f64>,
    /// Max over probes of | ||W(T) phi|| - 1 |.
    pub norm_drift: f64,
    /// Boson leakage at the last time is below the first.
    pub leakage_decreased: bool,
}

struct MatrixFree<'a> {
    op: &'a FiberOperator,
    col: Vec<Complex64>,
    b: f64,
}

impl MatrixFree<'_> {
    fn apply_full(&self, v: &[Complex64]) -> Vec<Complex64> {
        let m = self.col.len();
        let mut out = self.op.apply_a11(&v[..m]).expect("finite U checked");
        for (o, c) in out.iter_mut().zip(&self.col) {
            *o += c * v[m];
        }
        let boson = dot(&self.col, &v[..m]) + v[m] * self.b;
        out.push(boson);
        out
    }
}

/// Generic fermionic probes: seeded complex Gaussians, normalised.
pub fn generic_probes(m: usize, count: usize, seed: u64) -> Vec<Vec<Complex64>> {
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let v: Vec<Complex64> =
                (0..m).map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect();
            let nrm = v.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
            v.into_iter().map(|c| c / nrm).collect()
        })
        .collect()
}

/// Applies W(T) on a geometric ladder T_j = T_max / 2^(L-1-j) using
/// Chebyshev propagation with the matrix-free fiber action.
pub fn unbound_channel_diagnostic(
    params: &ModelParams,
    grid: &TorusGrid,
    k: TorusPoint,
    t_max: f64,
    levels: usize,
    probes: usize,
) -> Result<UnboundReport> {
    params.validate()?;
    if params.u_onsite.is_hard_core() {
        return Err(Error::HardCoreUnsupported("the unbound diagnostic needs a finite U"));
    }
    if levels < 2 || probes == 0 || !(t_max > 0.0) {
        return Err(crate::error::validation("need levels >= 2, probes >= 1 and t_max > 0"));
    }
    let op = FiberOperator::new(params, grid, k)?;
    let f = &op.functions().f;
    let strength: f64 = op.terms().iter().map(|t| t.strength.abs()).sum();
    let fmin = f.iter().copied().fold(f64::INFINITY, f64::min);
    let fmax = f.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let col = op.coupling_column();
    let anorm = col.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
    let b = op.functions().b;
    let lo11 = fmin - 1e-9;
    let hi11 = fmax + strength + 1e-9;
    let lo = lo11.min(b) - anorm - 1e-9;
    let hi = hi11.max(b) + anorm + 1e-9;
    let mf = MatrixFree { op: &op, col, b };
    let apply11 = |v: &[Complex64]| op.apply_a11(v).expect("finite U checked");
    let apply = |v: &[Complex64]| mf.apply_full(v);
    let times: Vec<f64> = (0..levels).map(|j| t_max / 2f64.powi((levels - 1 - j) as i32)).collect();
    let vecs = generic_probes(grid.len(), probes, 0x5eed);
    let tol = 1e-15;
    let mut leakage = vec![0.0; levels];
    let mut increments = vec![0.0f64; levels - 1];
    let mut drift = 0.0f64;
    for phi in &vecs {
        let mut prev: Option<Vec<Complex64>> = None;
        for (j, &tt) in times.iter().enumerate() {
            let mut free = chebyshev_propagate(&apply11, phi, tt, lo11, hi11, tol);
            free.push(Complex64::new(0.0, 0.0));
            let wphi = chebyshev_propagate(&apply, &free, -tt, lo, hi, tol);
            leakage[j] += wphi[grid.len()].norm() / probes as f64;
            let nrm = wphi.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
            drift = drift.max((nrm - 1.0).abs());
            if let Some(p) = &prev {
                let inc = p.iter().zip(&wphi).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>().sqrt();
                increments[j - 1] = increments[j - 1].max(inc);
            }
            prev = Some(wphi);
        }
    }
    Ok(UnboundReport {
        k,
        grid_n: grid.n(),
        probes,
        leakage_decreased: leakage[levels - 1] < leakage[0],
        times,
        boson_leakage: leakage,
        cauchy_increments: increments,
        norm_drift: drift,
    })
}

/// W(T) phi for one fermionic vector, by Chebyshev propagation.
pub fn wave_operator_apply(
    params: &ModelParams,
    grid: &TorusGrid,
    k: TorusPoint,
    t: f64,
    phi: &[Complex64],
) -> Result<Vec<Complex64>> {
    let d = FiberDynamics::new(params, grid, k)?;
    let a = d.full();
    let x = d.reference();
    let mut v = DVector::from_column_slice(phi);
    v = v.push(Complex64::new(0.0, 0.0));
    let eig_x = SymmetricEigen::new(x);
    let eig_a = SymmetricEigen::new(a);
    let step = |e: &SymmetricEigen<Complex64, nalgebra::Dyn>, tt: f64, v: &DVector<Complex64>| {
        let c = e.eigenvectors.adjoint() * v;
        let c = DVector::from_iterator(
            c.len(),
            c.iter().zip(e.eigenvalues.iter()).map(|(ci, l)| ci * Complex64::from_polar(1.0, tt * l)),
        );
        &e.eigenvectors * c
    };
    let v = step(&eig_x, -t, &v);
    Ok(step(&eig_a, t, &v).iter().copied().collect())
}
