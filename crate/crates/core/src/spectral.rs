//! Fiber ground states from the characteristic equation
//! Phi(x) = upsilon_hat(k)^2 T(U, k, x) + x - b(k) = 0.

use log::{debug, warn};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{validation, Error, Result};
use crate::fiber::{essential_bottom, FiberOperator};
use crate::grid::{dot, GridFunction, TorusGrid};
use crate::params::{ModelParams, Repulsion};
use crate::TorusPoint;

/// Eigenpair (E, (psi_hat, -1)) of one fiber.
#[derive(Clone, Debug, PartialEq)]
pub struct PairState {
    pub k: TorusPoint,
    pub u_onsite: Repulsion,
    /// Eigenvalue (eV).
    pub e: f64,
    /// Fermionic component, unnormalised.
    pub psi_hat: GridFunction,
    /// Always -1.
    pub bosonic_amp: f64,
    /// z(k) - E (eV).
    pub gap: f64,
    /// 1 / (|psi_hat|^2 + 1).
    pub pair_fraction_rho: f64,
    pub b: f64,
    pub z: f64,
    pub upsilon_hat: f64,
    /// |Phi(E)| at the returned root.
    pub phi_residual: f64,
    pub iterations: usize,
    pub warnings: Vec<String>,
}

/// Serialisable scalar part of a [`PairState`].
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PairStateSummary {
    pub k: TorusPoint,
    pub u_onsite: String,
    pub e_ev: f64,
    pub gap_ev: f64,
    pub rho: f64,
    pub b_ev: f64,
    pub z_ev: f64,
    pub upsilon_hat_ev: f64,
    pub psi_hat_norm_sqr: f64,
    pub bosonic_amp: f64,
    pub phi_residual: f64,
    pub iterations: usize,
    pub warnings: Vec<String>,
}

impl PairState {
    pub fn psi_norm_sqr(&self) -> f64 {
        self.psi_hat.norm_sqr()
    }

    /// (psi_hat / N, -1) normalised to unit length: the eigenvector in the
    /// orthonormal coordinates used by the dense matrices.
    pub fn dense_vector(&self) -> Vec<Complex64> {
        let n = self.psi_hat.n() as f64;
        let mut v: Vec<Complex64> = self.psi_hat.values().iter().map(|c| c / n).collect();
        v.push(Complex64::new(self.bosonic_amp, 0.0));
        let norm = (self.psi_norm_sqr() + 1.0).sqrt();
        for c in &mut v {
            *c /= norm;
        }
        v
    }

    pub fn summary(&self) -> PairStateSummary {
        PairStateSummary {
            k: self.k,
            u_onsite: self.u_onsite.to_string(),
            e_ev: self.e,
            gap_ev: self.gap,
            rho: self.pair_fraction_rho,
            b_ev: self.b,
            z_ev: self.z,
            upsilon_hat_ev: self.upsilon_hat,
            psi_hat_norm_sqr: self.psi_norm_sqr(),
            bosonic_amp: self.bosonic_amp,
            phi_residual: self.phi_residual,
            iterations: self.iterations,
            warnings: self.warnings.clone(),
        }
    }
}

/// Phi(U, k, x) for the repulsion stored in `params`.
pub fn eval_phi(params: &ModelParams, grid: &TorusGrid, k: TorusPoint, x: f64) -> Result<f64> {
    let op = FiberOperator::new(params, grid, k)?;
    phi_at(params, &op, x)
}

fn phi_at(params: &ModelParams, op: &FiberOperator, x: f64) -> Result<f64> {
    let ff = op.functions();
    let ups2 = ff.upsilon_hat * ff.upsilon_hat;
    Ok(ups2 * op.t_value(params, x)? + x - ff.b)
}

/// Ground state of the fiber at `k` for the repulsion stored in `params`.
pub fn solve_e(params: &ModelParams, grid: &TorusGrid, k: TorusPoint) -> Result<PairState> {
    params.validate_bound_pair()?;
    let op = FiberOperator::new(params, grid, k)?;
    solve_fiber(params, &op)
}

/// Ground state in the hard-core limit.
pub fn solve_e_hardcore(params: &ModelParams, grid: &TorusGrid, k: TorusPoint) -> Result<PairState> {
    solve_e(&params.with_repulsion(Repulsion::HardCore), grid, k)
}

/// True unless both pair-shape couplings are multiples of the delta at 0.
pub fn pair_shape_nondegenerate(params: &ModelParams) -> bool {
    !(params.p1.is_delta_like() && params.p2.is_delta_like())
}

/// Root of the characteristic equation on a prepared fiber.
pub fn solve_fiber(params: &ModelParams, op: &FiberOperator) -> Result<PairState> {
    let ff = op.functions();
    let (b, z, ups) = (ff.b, ff.z, ff.upsilon_hat);
    let mut warnings = Vec::new();
    if op.is_hard_core() && !pair_shape_nondegenerate(params) {
        let msg = "DEGENERATE_PAIR_SHAPE: p1 and p2 are multiples of the delta at 0; the uniform gap is not guaranteed"
            .to_string();
        warn!(target: "spectral", "{msg}");
        warnings.push(msg);
    }
    let state = |e: f64, psi_hat: GridFunction, residual: f64, iterations: usize, warnings: Vec<String>| {
        let rho = 1.0 / (psi_hat.norm_sqr() + 1.0);
        PairState {
            k: ff.k,
            u_onsite: params.u_onsite,
            e,
            psi_hat,
            bosonic_amp: -1.0,
            gap: z - e,
            pair_fraction_rho: rho,
            b,
            z,
            upsilon_hat: ups,
            phi_residual: residual,
            iterations,
            warnings,
        }
    };
    // With a constant d(k) the hard core removes the whole coupling.
    if ups == 0.0 || (op.is_hard_core() && !pair_shape_nondegenerate(params)) {
        return Ok(state(b, GridFunction::zeros(op.grid()), 0.0, 0, warnings));
    }

    let eps = if params.epsilon > 0.0 { params.epsilon } else { ups.abs().max(b.abs()).max(1e-12) };
    let top = b.min(z).min(ff.f_min);
    let phi = |x: f64| phi_at(params, op, x);
    let mut evals = 0usize;

    // Upper bracket: Phi(top - delta) > 0 for small enough delta.
    let mut delta = 1e-6 * eps;
    let (mut hi, mut phi_hi) = loop {
        let x = top - delta;
        let v = phi(x)?;
        evals += 1;
        if v > 0.0 {
            break (x, v);
        }
        delta *= 0.1;
        if delta < 1e-13 * eps || top - delta == top {
            return Err(Error::NoRoot(format!(
                "Phi stays <= 0 up to the spectral edge at k = ({}, {})",
                ff.k[0], ff.k[1]
            )));
        }
    };
    // Lower bracket: Phi -> -infinity as x -> -infinity.
    let mut step = eps.max(ups * ups * 10.0);
    let mut lo = loop {
        let x = hi - step;
        let v = phi(x)?;
        evals += 1;
        if v < 0.0 {
            break x;
        }
        step *= 2.0;
        if step > 1e12 * eps {
            return Err(Error::NoRoot("no sign change found below the spectral edge".into()));
        }
    };

    while hi - lo > 1e-8 * eps {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let v = phi(mid)?;
        evals += 1;
        if v > 0.0 {
            hi = mid;
            phi_hi = v;
        } else {
            lo = mid;
        }
    }

    // Newton polish from the right; Phi is increasing with slope > 1.
    let tol = 1e-12 * eps;
    let mut x = hi;
    let mut fx = phi_hi;
    let mut rd = Vec::new();
    for _ in 0..60 {
        let r = op.resolvent(x)?;
        rd = r.apply(op.functions().d.values());
        let nrm = dot(&rd, &rd).re / rd.len() as f64;
        let slope = ups * ups * nrm + 1.0;
        if fx.abs() < tol {
            break;
        }
        let mut next = x - fx / slope;
        if !(next > lo && next < hi) {
            next = 0.5 * (lo + hi);
        }
        if next == x {
            break;
        }
        x = next;
        fx = phi(x)?;
        evals += 1;
        if fx > 0.0 {
            hi = x;
        } else {
            lo = x;
        }
    }
    if rd.is_empty() || fx.abs() >= tol {
        // Recompute the vector at the final iterate.
        rd = op.resolvent(x)?.apply(op.functions().d.values());
    }
    if fx.abs() > 1e-9 * eps {
        return Err(Error::NonConvergence(format!("|Phi(E)| = {:e} after {evals} evaluations", fx.abs())));
    }
    let psi: Vec<Complex64> = rd.into_iter().map(|v| v * ups).collect();
    let psi_hat = GridFunction::new(op.grid(), psi)?;
    debug!(target: "spectral", "k={:?} U={} E={x} |Phi|={:e} evals={evals}", ff.k, params.u_onsite, fx.abs());
    Ok(state(x, psi_hat, fx.abs(), evals, warnings))
}

/// Scalar Birman-Schwinger eigenvalue at a trial energy.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BirmanSchwingerReport {
    pub lambda: f64,
    /// upsilon_hat^2 T(lambda) / (b - lambda).
    pub value: f64,
    pub deviation: f64,
    pub certified: bool,
}

/// Evaluates the one-dimensional Birman-Schwinger operator at `lambda`.
pub fn birman_schwinger_check(
    params: &ModelParams,
    grid: &TorusGrid,
    k: TorusPoint,
    lambda: f64,
) -> Result<BirmanSchwingerReport> {
    let op = FiberOperator::new(params, grid, k)?;
    let ff = op.functions();
    if ff.upsilon_hat == 0.0 {
        return Err(validation("the Birman-Schwinger check needs upsilon_hat(k) != 0"));
    }
    if lambda == ff.b {
        return Err(Error::DivisionAtB(ff.b));
    }
    let t = op.t_value(params, lambda)?;
    let value = ff.upsilon_hat * ff.upsilon_hat * t / (ff.b - lambda);
    let deviation = (value - 1.0).abs();
    Ok(BirmanSchwingerReport { lambda, value, deviation, certified: deviation < 1e-9 })
}

/// [4 eps - 2 eps cos(k/2), 4 eps + 2 eps cos(k/2)].
pub fn essential_spectrum(params: &ModelParams, k: TorusPoint) -> (f64, f64) {
    let lo = essential_bottom(params, k);
    (lo, 8.0 * params.epsilon - lo)
}

/// Minimum of E over a list of fibers, with the first minimiser.
pub fn ground_energy(params: &ModelParams, grid: &TorusGrid, kgrid: &[TorusPoint]) -> Result<(f64, TorusPoint)> {
    params.validate_bound_pair()?;
    if kgrid.is_empty() {
        return Err(validation("empty k-grid"));
    }
    let energies: Vec<Result<f64>> = kgrid.par_iter().map(|&k| solve_e(params, grid, k).map(|s| s.e)).collect();
    let mut best = (f64::INFINITY, kgrid[0]);
    for (e, &k) in energies.into_iter().zip(kgrid) {
        let e = e?;
        if e < best.0 {
            best = (e, k);
        }
    }
    let has_origin = kgrid.iter().any(|k| k[0] == 0.0 && k[1] == 0.0);
    if has_origin && params.upsilon.eval([0.0, 0.0]) != 0.0 && pair_shape_nondegenerate(params) && best.0 > 0.0 {
        return Err(Error::NonConvergence(format!("ground energy {} is positive", best.0)));
    }
    Ok(best)
}
