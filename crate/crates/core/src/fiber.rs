//! The fiber Hamiltonian A(U, k) as a diagonal plus a handful of rank-one
//! projections, with fast resolvent solves and the Birman-Schwinger kernel.

use log::debug;
use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::{dot, plane_wave, GridFunction, TorusGrid};
use crate::params::{eval_d_real, wrap_angle, ModelParams, Repulsion};
use crate::TorusPoint;

const C0: Complex64 = Complex64 { re: 0.0, im: 0.0 };

/// b(k) = h_b eps (2 - cos k1 - cos k2).
pub fn boson_dispersion(params: &ModelParams, k: TorusPoint) -> f64 {
    params.h_b * params.epsilon * (2.0 - k[0].cos() - k[1].cos())
}

/// Gradient of [`boson_dispersion`].
pub fn boson_dispersion_grad(params: &ModelParams, k: TorusPoint) -> [f64; 2] {
    let s = params.h_b * params.epsilon;
    [s * k[0].sin(), s * k[1].sin()]
}

/// z(k) = 4 eps - 2 eps (cos(k1/2) + cos(k2/2)), with k taken in [-pi, pi).
pub fn essential_bottom(params: &ModelParams, k: TorusPoint) -> f64 {
    let c = (0.5 * wrap_angle(k[0])).cos() + (0.5 * wrap_angle(k[1])).cos();
    4.0 * params.epsilon - 2.0 * params.epsilon * c
}

/// f_k(p) = eps (4 - cos(p + k) - cos p).
pub fn fermion_pair_energy(params: &ModelParams, k: TorusPoint, p: TorusPoint) -> f64 {
    params.epsilon * (4.0 - (p[0] + k[0]).cos() - (p[1] + k[1]).cos() - p[0].cos() - p[1].cos())
}

/// Scalar and grid ingredients of one fiber.
#[derive(Clone, Debug, PartialEq)]
pub struct FiberFunctions {
    pub k: TorusPoint,
    /// f_k on the grid (eV).
    pub f: Vec<f64>,
    pub b: f64,
    pub z: f64,
    /// d(k) on the grid.
    pub d: GridFunction,
    pub upsilon_hat: f64,
    /// Smallest grid value of f_k.
    pub f_min: f64,
}

impl FiberFunctions {
    pub fn new(params: &ModelParams, grid: &TorusGrid, k: TorusPoint) -> Self {
        let n = grid.len();
        let mut f = Vec::with_capacity(n);
        let mut d = Vec::with_capacity(n);
        for i in 0..n {
            let p = grid.point(i);
            f.push(fermion_pair_energy(params, k, p));
            d.push(Complex64::new(eval_d_real(params, k, p), 0.0));
        }
        let f_min = f.iter().copied().fold(f64::INFINITY, f64::min);
        FiberFunctions {
            k,
            f,
            b: boson_dispersion(params, k),
            z: essential_bottom(params, k),
            d: GridFunction::new(grid, d).expect("length matches grid"),
            upsilon_hat: params.upsilon.eval(k),
            f_min,
        }
    }
}

/// Strength times the projection onto the plane wave e^{i p.x}.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct RankOneTerm {
    pub x: [i64; 2],
    /// eV; infinite for the hard-core constraint.
    pub strength: f64,
}

/// A(U, k) on a grid.
#[derive(Clone, Debug)]
pub struct FiberOperator {
    grid: TorusGrid,
    functions: FiberFunctions,
    terms: Vec<RankOneTerm>,
    waves: Vec<Vec<Complex64>>,
    hardcore: bool,
    epsilon: f64,
}

impl FiberOperator {
    pub fn new(params: &ModelParams, grid: &TorusGrid, k: TorusPoint) -> Result<Self> {
        params.validate()?;
        let functions = FiberFunctions::new(params, grid, k);
        Ok(Self::from_functions(params, grid, functions, params.u_onsite))
    }

    fn from_functions(params: &ModelParams, grid: &TorusGrid, functions: FiberFunctions, onsite: Repulsion) -> Self {
        let mut terms = Vec::new();
        let origin = match onsite {
            Repulsion::Finite(u) => params.u.get((0, 0)) + u,
            Repulsion::HardCore => f64::INFINITY,
        };
        if origin > 0.0 {
            terms.push(RankOneTerm { x: [0, 0], strength: origin });
        }
        for ((x, y), v) in params.u.iter() {
            if (x, y) != (0, 0) && v > 0.0 {
                terms.push(RankOneTerm { x: [x, y], strength: v });
            }
        }
        let waves = terms.iter().map(|t| plane_wave(grid, t.x).into_values()).collect();
        FiberOperator {
            grid: grid.clone(),
            functions,
            terms,
            waves,
            hardcore: onsite.is_hard_core(),
            epsilon: params.epsilon,
        }
    }

    /// The same fiber with the on-site repulsion replaced.
    pub fn with_onsite(&self, params: &ModelParams, onsite: Repulsion) -> Self {
        Self::from_functions(params, &self.grid, self.functions.clone(), onsite)
    }

    /// B11(k): the fermionic block without the U P0 term.
    pub fn without_onsite(&self, params: &ModelParams) -> Self {
        self.with_onsite(params, Repulsion::Finite(0.0))
    }

    pub fn grid(&self) -> &TorusGrid {
        &self.grid
    }

    pub fn functions(&self) -> &FiberFunctions {
        &self.functions
    }

    pub fn terms(&self) -> &[RankOneTerm] {
        &self.terms
    }

    pub fn is_hard_core(&self) -> bool {
        self.hardcore
    }

    pub fn k(&self) -> TorusPoint {
        self.functions.k
    }

    /// (A11 phi)(p) for finite U.
    pub fn apply_a11(&self, phi: &[Complex64]) -> Result<Vec<Complex64>> {
        if self.hardcore {
            return Err(Error::HardCoreUnsupported("A11 has no finite action in the hard-core limit"));
        }
        self.check_len(phi.len())?;
        let n = phi.len() as f64;
        let mut out: Vec<Complex64> = self.functions.f.iter().zip(phi).map(|(f, v)| v * f).collect();
        for (t, w) in self.terms.iter().zip(&self.waves) {
            let c = dot(w, phi) * (t.strength / n);
            for (o, wv) in out.iter_mut().zip(w) {
                *o += wv * c;
            }
        }
        Ok(out)
    }

    fn check_len(&self, len: usize) -> Result<()> {
        if len != self.grid.len() {
            return Err(Error::DimensionMismatch { expected: self.grid.len(), got: len });
        }
        Ok(())
    }

    /// Prepares (A11 - x)^{-1} for repeated application.
    pub fn resolvent(&self, x: f64) -> Result<Resolvent<'_>> {
        let margin = 1e-12 * self.epsilon.max(1e-300);
        if !(self.functions.f_min - x >= margin) {
            return Err(Error::SpectrumProximity { x, fmin: self.functions.f_min, margin });
        }
        let n = self.grid.len() as f64;
        let dinv: Vec<f64> = self.functions.f.iter().map(|f| 1.0 / (f - x)).collect();
        let m = self.terms.len();
        let cap = if m == 0 {
            None
        } else {
            let mut c = DMatrix::<Complex64>::zeros(m, m);
            for i in 0..m {
                for j in i..m {
                    let mut acc = C0;
                    for ((wi, wj), di) in self.waves[i].iter().zip(&self.waves[j]).zip(&dinv) {
                        acc += wi.conj() * wj * *di;
                    }
                    acc /= n;
                    c[(i, j)] = acc;
                    c[(j, i)] = acc.conj();
                }
                c[(i, i)] += Complex64::new(1.0 / self.terms[i].strength, 0.0);
            }
            let inv = c
                .clone()
                .try_inverse()
                .ok_or_else(|| Error::NonConvergence("capacitance matrix is singular".into()))?;
            Some(inv)
        };
        Ok(Resolvent { op: self, x, dinv, cap_inv: cap })
    }

    /// (A11 - x)^{-1} applied to `rhs`.
    pub fn apply_resolvent(&self, x: f64, rhs: &GridFunction) -> Result<GridFunction> {
        self.check_len(rhs.values().len())?;
        let r = self.resolvent(x)?;
        GridFunction::new(&self.grid, r.apply(rhs.values()))
    }

    /// <d, (A11 - x)^{-1} d>. In the hard-core limit this uses the closed
    /// R-constant formula.
    pub fn t_value(&self, params: &ModelParams, x: f64) -> Result<f64> {
        if self.hardcore {
            return Ok(self.r_constants(params, x)?.t_hard_core());
        }
        let r = self.resolvent(x)?;
        let d = self.functions.d.values();
        let rd = r.apply(d);
        Ok(dot(d, &rd).re / d.len() as f64)
    }

    /// Resolvent matrix elements of B11 between the constant function and d.
    pub fn r_constants(&self, params: &ModelParams, x: f64) -> Result<RConstants> {
        let b11 = self.without_onsite(params);
        let r = b11.resolvent(x)?;
        let n = self.grid.len();
        let s = vec![Complex64::new(1.0, 0.0); n];
        let d = self.functions.d.values();
        let rs = r.apply(&s);
        let rd = r.apply(d);
        let nf = n as f64;
        let c = RConstants {
            r_ss: dot(&s, &rs).re / nf,
            r_sd: dot(&s, &rd) / nf,
            r_ds: dot(d, &rs) / nf,
            r_dd: dot(d, &rd).re / nf,
        };
        debug!(target: "fiber", "k={:?} x={x} R_ss={} R_dd={} |R_sd|={}", self.k(), c.r_ss, c.r_dd, c.r_sd.norm());
        Ok(c)
    }

    /// Dense A11 in orthonormal coordinates c_p = phi(p)/N.
    pub fn dense_a11(&self) -> Result<DMatrix<Complex64>> {
        if self.hardcore {
            return Err(Error::HardCoreUnsupported("no dense matrix exists for the hard-core limit"));
        }
        let n = self.grid.len();
        let nf = n as f64;
        let mut a = DMatrix::<Complex64>::zeros(n, n);
        for (t, w) in self.terms.iter().zip(&self.waves) {
            let s = t.strength / nf;
            for q in 0..n {
                let wq = w[q].conj() * s;
                for p in 0..n {
                    a[(p, q)] += w[p] * wq;
                }
            }
        }
        for p in 0..n {
            a[(p, p)] += Complex64::new(self.functions.f[p], 0.0);
        }
        Ok(a)
    }

    /// Dense (N^2 + 1)-square fiber matrix; the last index is the boson.
    pub fn dense_full(&self) -> Result<DMatrix<Complex64>> {
        let a11 = self.dense_a11()?;
        let n = self.grid.len();
        let mut a = DMatrix::<Complex64>::zeros(n + 1, n + 1);
        a.view_mut((0, 0), (n, n)).copy_from(&a11);
        let col = self.coupling_column();
        for p in 0..n {
            a[(p, n)] = col[p];
            a[(n, p)] = col[p].conj();
        }
        a[(n, n)] = Complex64::new(self.functions.b, 0.0);
        Ok(a)
    }

    /// upsilon_hat(k) d(k) / N: the A12 column in orthonormal coordinates.
    pub fn coupling_column(&self) -> Vec<Complex64> {
        let s = self.functions.upsilon_hat / self.grid.n() as f64;
        self.functions.d.values().iter().map(|v| v * s).collect()
    }
}

/// Prepared resolvent (A11 - x)^{-1}.
pub struct Resolvent<'a> {
    op: &'a FiberOperator,
    x: f64,
    dinv: Vec<f64>,
    cap_inv: Option<DMatrix<Complex64>>,
}

impl Resolvent<'_> {
    pub fn x(&self) -> f64 {
        self.x
    }

    /// Woodbury: D^{-1} r - D^{-1} W (C^{-1} + W* D^{-1} W / n)^{-1} W* D^{-1} r / n.
    pub fn apply(&self, rhs: &[Complex64]) -> Vec<Complex64> {
        let mut y: Vec<Complex64> = rhs.iter().zip(&self.dinv).map(|(r, d)| r * *d).collect();
        let Some(cap) = &self.cap_inv else {
            return y;
        };
        let n = rhs.len() as f64;
        let m = self.op.waves.len();
        let g: Vec<Complex64> = self.op.waves.iter().map(|w| dot(w, &y) / n).collect();
        let mut sol = vec![C0; m];
        for i in 0..m {
            for j in 0..m {
                sol[i] += cap[(i, j)] * g[j];
            }
        }
        for (p, yp) in y.iter_mut().enumerate() {
            let mut acc = C0;
            for (w, s) in self.op.waves.iter().zip(&sol) {
                acc += w[p] * s;
            }
            *yp -= acc * self.dinv[p];
        }
        y
    }
}

/// R_ss, R_sd, R_ds, R_dd of B11(k) at a spectral parameter x.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct RConstants {
    pub r_ss: f64,
    pub r_sd: Complex64,
    pub r_ds: Complex64,
    pub r_dd: f64,
}

impl RConstants {
    /// R_dd R_ss - |R_sd|^2, nonnegative by Cauchy-Schwarz.
    pub fn gram(&self) -> f64 {
        self.r_dd * self.r_ss - self.r_sd.norm_sqr()
    }

    /// T(U) = R_dd / (U R_ss + 1) + U (R_dd R_ss - |R_sd|^2) / (U R_ss + 1).
    pub fn t_finite(&self, u: f64) -> f64 {
        let den = u * self.r_ss + 1.0;
        self.r_dd / den + u * self.gram() / den
    }

    /// T(infinity) = (R_dd R_ss - |R_sd|^2) / R_ss.
    pub fn t_hard_core(&self) -> f64 {
        self.gram() / self.r_ss
    }
}

fn finite_u(params: &ModelParams) -> Result<f64> {
    params.u_onsite.finite().ok_or(Error::HardCoreUnsupported("operation needs a finite U"))
}

/// Dense A11 in orthonormal coordinates.
pub fn assemble_dense_a11(params: &ModelParams, grid: &TorusGrid, k: TorusPoint) -> Result<DMatrix<Complex64>> {
    finite_u(params)?;
    FiberOperator::new(params, grid, k)?.dense_a11()
}

/// Dense full fiber matrix in orthonormal coordinates.
pub fn assemble_dense_full(params: &ModelParams, grid: &TorusGrid, k: TorusPoint) -> Result<DMatrix<Complex64>> {
    finite_u(params)?;
    FiberOperator::new(params, grid, k)?.dense_full()
}

/// T(U, k, x) for the repulsion stored in `params`.
pub fn compute_t(params: &ModelParams, grid: &TorusGrid, k: TorusPoint, x: f64) -> Result<f64> {
    FiberOperator::new(params, grid, k)?.t_value(params, x)
}

pub fn compute_r_constants(params: &ModelParams, grid: &TorusGrid, k: TorusPoint, x: f64) -> Result<RConstants> {
    FiberOperator::new(params, grid, k)?.r_constants(params, x)
}

/// |T(U) from a Woodbury solve - T(U) from the R-constant formula|.
pub fn hardcore_interpolation_check(
    params: &ModelParams,
    grid: &TorusGrid,
    k: TorusPoint,
    x: f64,
    u: f64,
) -> Result<f64> {
    let p = params.with_repulsion(Repulsion::Finite(u));
    let op = FiberOperator::new(&p, grid, k)?;
    let direct = op.t_value(&p, x)?;
    let formula = op.r_constants(&p, x)?.t_finite(u);
    let residual = (direct - formula).abs();
    debug!(target: "fiber", "interpolation k={k:?} x={x} U={u} residual={residual:e}");
    Ok(residual)
}
