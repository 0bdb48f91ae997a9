//! Brillouin-zone sweeps, group velocities, mass tensors, pairing-symmetry
//! weights and real-space pair shapes.

use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{validation, Error, Result};
use crate::fiber::{boson_dispersion_grad, FiberOperator};
use crate::grid::{dot, rotate_grid_function, to_lattice, GridFunction, LatticeMap, TorusGrid};
use crate::params::{eval_d_grad_k, ModelParams, Repulsion};
use crate::spectral::{solve_e, solve_fiber, PairState};
use crate::TorusPoint;

/// Default step of the velocity finite-difference oracle.
pub const FD_GRADIENT_STEP: f64 = 2.0 * PI / 1024.0;
/// Default step of the Hessian stencil.
pub const FD_HESSIAN_STEP: f64 = 2.0 * PI / 512.0;

fn is_origin(k: TorusPoint) -> bool {
    k[0] == 0.0 && k[1] == 0.0
}

/// Analytic group velocity v = -grad_k Phi / d_x Phi at x = E.
pub fn group_velocity(params: &ModelParams, grid: &TorusGrid, k: TorusPoint) -> Result<[f64; 2]> {
    if is_origin(k) {
        return Err(Error::UndefinedAtSingular);
    }
    params.validate_bound_pair()?;
    let op = FiberOperator::new(params, grid, k)?;
    let state = solve_fiber(params, &op)?;
    velocity_of(params, &op, &state)
}

/// Velocity from an already solved fiber.
pub fn velocity_of(params: &ModelParams, op: &FiberOperator, state: &PairState) -> Result<[f64; 2]> {
    let k = op.k();
    if is_origin(k) {
        return Err(Error::UndefinedAtSingular);
    }
    let db = boson_dispersion_grad(params, k);
    let ups = state.upsilon_hat;
    if ups == 0.0 || state.psi_hat.is_zero() {
        return Ok(db);
    }
    let grid = op.grid();
    let n = grid.len() as f64;
    let d = op.functions().d.values();
    let rd = op.resolvent(state.e)?.apply(d);
    let t = dot(d, &rd).re / n;
    let dx_phi = ups * ups * dot(&rd, &rd).re / n + 1.0;
    let dups = params.upsilon.grad(k);
    let mut v = [0.0; 2];
    for j in 0..2 {
        let mut cross = 0.0;
        let mut curv = 0.0;
        for (i, r) in rd.iter().enumerate() {
            let p = grid.point(i);
            let dd = eval_d_grad_k(params, k, p)[j];
            cross += dd * r.re;
            let df = params.epsilon * (p[j] + k[j]).sin();
            curv += df * r.norm_sqr();
        }
        // d is real, so Re<dd, Rd> only needs the real part of Rd.
        let dt = (2.0 * cross - curv) / n;
        let dk_phi = 2.0 * ups * dups[j] * t + ups * ups * dt - db[j];
        v[j] = -dk_phi / dx_phi;
    }
    Ok(v)
}

/// Central finite-difference gradient of E with step `h`.
pub fn fd_velocity(params: &ModelParams, grid: &TorusGrid, k: TorusPoint, h: f64) -> Result<[f64; 2]> {
    let mut v = [0.0; 2];
    for j in 0..2 {
        let mut kp = k;
        kp[j] += h;
        let mut km = k;
        km[j] -= h;
        v[j] = (solve_e(params, grid, kp)?.e - solve_e(params, grid, km)?.e) / (2.0 * h);
    }
    Ok(v)
}

/// Hessian of E and its inverse.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct MassTensor {
    pub hessian: [[f64; 2]; 2],
    /// Inverse Hessian (1/eV per unit quasi-momentum squared).
    pub mass: [[f64; 2]; 2],
    pub condition: f64,
}

/// mass = Hess(E)^{-1} from a central-difference stencil with step `h`.
pub fn mass_tensor(params: &ModelParams, grid: &TorusGrid, k: TorusPoint, h: f64) -> Result<MassTensor> {
    if is_origin(k) {
        return Err(Error::UndefinedAtSingular);
    }
    params.validate_bound_pair()?;
    let e = |dk: [f64; 2]| solve_e(params, grid, [k[0] + dk[0], k[1] + dk[1]]).map(|s| s.e);
    let e0 = e([0.0, 0.0])?;
    let h11 = (e([h, 0.0])? - 2.0 * e0 + e([-h, 0.0])?) / (h * h);
    let h22 = (e([0.0, h])? - 2.0 * e0 + e([0.0, -h])?) / (h * h);
    let h12 = (e([h, h])? - e([h, -h])? - e([-h, h])? + e([-h, -h])?) / (4.0 * h * h);
    invert_hessian([[h11, h12], [h12, h22]])
}

/// Inverts a symmetric 2x2 Hessian, refusing near-singular input.
pub fn invert_hessian(hs: [[f64; 2]; 2]) -> Result<MassTensor> {
    let det = hs[0][0] * hs[1][1] - hs[0][1] * hs[1][0];
    let scale = hs.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()));
    let threshold = 1e-12 * scale * scale;
    if det.abs() <= threshold {
        return Err(Error::SingularHessian { det: det.abs(), threshold });
    }
    let mass = [[hs[1][1] / det, -hs[0][1] / det], [-hs[1][0] / det, hs[0][0] / det]];
    let tr = hs[0][0] + hs[1][1];
    let disc = ((hs[0][0] - hs[1][1]).powi(2) + 4.0 * hs[0][1] * hs[1][0]).max(0.0).sqrt();
    let (l1, l2) = (0.5 * (tr + disc), 0.5 * (tr - disc));
    let condition = l1.abs().max(l2.abs()) / l1.abs().min(l2.abs());
    Ok(MassTensor { hessian: hs, mass, condition })
}

/// s, d and p weights of a fiber state.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SymmetryWeights {
    pub w_s: f64,
    pub w_d: f64,
    pub w_p: f64,
    /// max |(P_s + P_d + P_p) psi - psi|.
    pub completeness_residual: f64,
}

/// Projects onto the parity sectors of the 90 degree rotation:
/// P_s = (1 + R + R^2 + R^3)/4, P_d = (1 - R + R^2 - R^3)/4, P_p = (1 - R^2)/2.
pub fn symmetry_decompose(grid: &TorusGrid, psi: &GridFunction) -> Result<SymmetryWeights> {
    if psi.is_zero() {
        return Err(Error::ZeroVector("symmetry decomposition of the zero vector"));
    }
    let r1 = rotate_grid_function(grid, psi)?;
    let r2 = rotate_grid_function(grid, &r1)?;
    let r3 = rotate_grid_function(grid, &r2)?;
    let (a, b, c, e) = (psi.values(), r1.values(), r2.values(), r3.values());
    let mut ns = 0.0;
    let mut nd = 0.0;
    let mut np = 0.0;
    let mut residual = 0.0f64;
    for i in 0..a.len() {
        let s = (a[i] + b[i] + c[i] + e[i]) * 0.25;
        let d = (a[i] - b[i] + c[i] - e[i]) * 0.25;
        let p = (a[i] - c[i]) * 0.5;
        ns += s.norm_sqr();
        nd += d.norm_sqr();
        np += p.norm_sqr();
        residual = residual.max((s + d + p - a[i]).norm());
    }
    let total: f64 = a.iter().map(|v| v.norm_sqr()).sum();
    Ok(SymmetryWeights { w_s: ns / total, w_d: nd / total, w_p: np / total, completeness_residual: residual })
}

/// One row of a [`DispersionTable`].
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DispersionRecord {
    pub k: TorusPoint,
    pub e: f64,
    pub gap: f64,
    pub rho: f64,
    pub v: Option<[f64; 2]>,
    pub mass: Option<[[f64; 2]; 2]>,
    pub sym: Option<SymmetryWeights>,
    /// Error of a secondary quantity (velocity or mass), if any.
    pub note: Option<String>,
}

/// Fiber that could not be solved.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FiberFailure {
    pub k: TorusPoint,
    pub error: String,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DispersionTable {
    pub u_onsite: String,
    pub grid_n: usize,
    pub fingerprint: String,
    pub records: Vec<DispersionRecord>,
    pub failures: Vec<FiberFailure>,
}

impl DispersionTable {
    pub fn min_energy(&self) -> Option<&DispersionRecord> {
        self.records.iter().fold(None, |best: Option<&DispersionRecord>, r| match best {
            Some(b) if b.e <= r.e => Some(b),
            _ => Some(r),
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SweepOptions {
    pub velocity: bool,
    pub mass: bool,
    pub hessian_step: f64,
}

impl Default for SweepOptions {
    fn default() -> Self {
        SweepOptions { velocity: true, mass: true, hessian_step: FD_HESSIAN_STEP }
    }
}

/// Computes one record; `Err` only when the fiber itself fails.
pub fn fiber_record(
    params: &ModelParams,
    grid: &TorusGrid,
    k: TorusPoint,
    opts: &SweepOptions,
) -> Result<DispersionRecord> {
    let op = FiberOperator::new(params, grid, k)?;
    let state = solve_fiber(params, &op)?;
    let mut notes = Vec::new();
    let v = if opts.velocity && !is_origin(k) {
        match velocity_of(params, &op, &state) {
            Ok(v) => Some(v),
            Err(e) => {
                notes.push(e.to_string());
                None
            }
        }
    } else {
        None
    };
    let mass = if opts.mass && !is_origin(k) {
        match mass_tensor(params, grid, k, opts.hessian_step) {
            Ok(m) => Some(m.mass),
            Err(e) => {
                notes.push(e.to_string());
                None
            }
        }
    } else {
        None
    };
    let sym = if state.psi_hat.is_zero() { None } else { Some(symmetry_decompose(grid, &state.psi_hat)?) };
    Ok(DispersionRecord {
        k,
        e: state.e,
        gap: state.gap,
        rho: state.pair_fraction_rho,
        v,
        mass,
        sym,
        note: if notes.is_empty() { None } else { Some(notes.join("; ")) },
    })
}

/// Solves every fiber of `kgrid` in parallel; the output keeps input order.
pub fn sweep(
    params: &ModelParams,
    grid: &TorusGrid,
    kgrid: &[TorusPoint],
    opts: &SweepOptions,
) -> Result<DispersionTable> {
    params.validate_bound_pair()?;
    let skip_origin = params.upsilon.eval([0.0, 0.0]) == 0.0;
    let results: Vec<(TorusPoint, Option<Result<DispersionRecord>>)> = kgrid
        .par_iter()
        .map(|&k| if skip_origin && is_origin(k) { (k, None) } else { (k, Some(fiber_record(params, grid, k, opts))) })
        .collect();
    let mut records = Vec::with_capacity(results.len());
    let mut failures = Vec::new();
    for (k, r) in results {
        match r {
            None => {}
            Some(Ok(rec)) => records.push(rec),
            Some(Err(e)) => failures.push(FiberFailure { k, error: e.to_string() }),
        }
    }
    Ok(DispersionTable {
        u_onsite: params.u_onsite.to_string(),
        grid_n: grid.n(),
        fingerprint: crate::io::config_fingerprint(params, grid.n()),
        records,
        failures,
    })
}

/// Uniform m x m k-grid on [-pi, pi)^2 in grid index order.
pub fn uniform_kgrid(m: usize) -> Vec<TorusPoint> {
    let c = |j: usize| -PI + 2.0 * PI * j as f64 / m as f64;
    (0..m * m).map(|i| [c(i / m), c(i % m)]).collect()
}

/// Log-linear decay fit along one lattice axis.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AxisDecay {
    /// Number of abscissas used in the fit.
    pub points: usize,
    /// Largest |t| with density above the fit threshold.
    pub extent_sites: i64,
    pub slope_per_site: Option<f64>,
    /// 1/e length of |psi|^2 (nm).
    pub xi_density_nm: Option<f64>,
    /// 1/e length of |psi| (nm), twice the density length.
    pub xi_amplitude_nm: Option<f64>,
}

/// Pointwise exponential bound |psi(x)| <= C e^{-alpha |x|}.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CombesCertificate {
    pub alpha: f64,
    pub g_min: f64,
    pub c: f64,
    /// max over the window of |psi(x)| e^{alpha |x|} / C; at most 1 when the bound holds.
    pub max_ratio: f64,
    pub holds: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RealSpacePair {
    pub k: TorusPoint,
    pub u_onsite: Repulsion,
    /// |psi(x)|^2 normalised to unit sum over the window.
    pub density: LatticeMap<f64>,
    /// psi(x) itself, unnormalised.
    pub amplitude: LatticeMap<Complex64>,
    /// Fit along the first lattice axis.
    pub xi_a: AxisDecay,
    /// Fit along the second lattice axis.
    pub xi_b: AxisDecay,
    /// Root-mean-square extent along each axis (nm).
    pub rms_nm: [f64; 2],
    pub peak_site: [i64; 2],
    pub combes_certificate: Option<CombesCertificate>,
}

/// Minimum density considered in the decay fits.
pub const DECAY_FIT_THRESHOLD: f64 = 1e-12;

/// Real-space pair wavefunction at `k` on the window |x_i| <= w.
///
/// Decay lengths come from a least-squares fit of ln(density) against |t|
/// along each lattice axis through the origin, starting at the maximum of
/// that axis profile and keeping the sites whose density exceeds
/// [`DECAY_FIT_THRESHOLD`]. An axis with fewer than four such sites (for
/// example a pair that is strictly frozen along it) reports no length.
pub fn real_space_pair(params: &ModelParams, grid: &TorusGrid, k: TorusPoint, w: usize) -> Result<RealSpacePair> {
    if w < 3 {
        return Err(Error::WindowTooSmall(format!("half-width {w} leaves fewer than 4 fit points per axis")));
    }
    let state = solve_e(params, grid, k)?;
    real_space_from_state(params, grid, &state, w)
}

pub fn real_space_from_state(
    params: &ModelParams,
    grid: &TorusGrid,
    state: &PairState,
    w: usize,
) -> Result<RealSpacePair> {
    if w < 3 {
        return Err(Error::WindowTooSmall(format!("half-width {w} leaves fewer than 4 fit points per axis")));
    }
    if state.psi_hat.is_zero() {
        return Err(Error::ZeroVector("the fiber state has no fermionic component"));
    }
    let amplitude = to_lattice(grid, &state.psi_hat, w)?;
    let total: f64 = amplitude.values.iter().map(|v| v.norm_sqr()).sum();
    let density = LatticeMap { w, values: amplitude.values.iter().map(|v| v.norm_sqr() / total).collect::<Vec<f64>>() };
    let a = params.lattice_spacing_nm;
    let mut rms = [0.0; 2];
    let mut peak = (0usize, f64::NEG_INFINITY);
    for (i, (x, d)) in density.iter().enumerate() {
        rms[0] += (x[0] * x[0]) as f64 * d;
        rms[1] += (x[1] * x[1]) as f64 * d;
        if d > peak.1 {
            peak = (i, d);
        }
    }
    let xi_a = axis_decay(&density, 0, a);
    let xi_b = axis_decay(&density, 1, a);
    Ok(RealSpacePair {
        k: state.k,
        u_onsite: state.u_onsite,
        density: density.clone(),
        amplitude,
        xi_a,
        xi_b,
        rms_nm: [rms[0].sqrt() * a, rms[1].sqrt() * a],
        peak_site: density.site(peak.0),
        combes_certificate: None,
    })
}

fn axis_decay(density: &LatticeMap<f64>, axis: usize, a: f64) -> AxisDecay {
    let w = density.w as i64;
    let profile: Vec<f64> = (0..=w)
        .map(|t| {
            let (p, m) = if axis == 0 { ([t, 0], [-t, 0]) } else { ([0, t], [0, -t]) };
            0.5 * (density.get(p).unwrap_or(0.0) + density.get(m).unwrap_or(0.0))
        })
        .collect();
    let start = profile.iter().enumerate().fold(0, |best, (i, &v)| if v > profile[best] { i } else { best });
    let extent = profile.iter().rposition(|&v| v > DECAY_FIT_THRESHOLD).map(|i| i as i64).unwrap_or(0);
    let pts: Vec<(f64, f64)> = profile
        .iter()
        .enumerate()
        .skip(start)
        .filter(|(_, &v)| v > DECAY_FIT_THRESHOLD)
        .map(|(t, &v)| (t as f64, v.ln()))
        .collect();
    let mut out = AxisDecay {
        points: pts.len(),
        extent_sites: extent,
        slope_per_site: None,
        xi_density_nm: None,
        xi_amplitude_nm: None,
    };
    if pts.len() < 4 {
        return out;
    }
    let m = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / m;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / m;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    let slope = sxy / sxx;
    out.slope_per_site = Some(slope);
    if slope < 0.0 {
        out.xi_density_nm = Some(-a / slope);
        out.xi_amplitude_nm = Some(-2.0 * a / slope);
    }
    out
}

/// Minimum of z(k) - E(U, k) over a k-grid and a repulsion ladder. The
/// origin is left out when the exchange vanishes there.
pub fn gap_minimum(params: &ModelParams, grid: &TorusGrid, kgrid: &[TorusPoint], ladder: &[Repulsion]) -> Result<f64> {
    let skip_origin = params.upsilon.eval([0.0, 0.0]) == 0.0;
    let jobs: Vec<(TorusPoint, Repulsion)> = ladder
        .iter()
        .flat_map(|&u| kgrid.iter().filter(|&&k| !(skip_origin && is_origin(k))).map(move |&k| (k, u)))
        .collect();
    let gaps: Vec<Result<f64>> =
        jobs.par_iter().map(|&(k, u)| solve_e(&params.with_repulsion(u), grid, k).map(|s| s.gap)).collect();
    let mut g = f64::INFINITY;
    for (r, (k, u)) in gaps.into_iter().zip(&jobs) {
        match r {
            Ok(v) => g = g.min(v),
            Err(e) => {
                log::warn!("gap scan failed at k = {k:?}, U = {u}");
                return Err(e);
            }
        }
    }
    Ok(g)
}

/// Largest alpha allowed by 4 eps (e^alpha - 1) < g_min.
pub fn alpha_gap_limit(epsilon: f64, g_min: f64) -> f64 {
    if epsilon == 0.0 {
        return f64::INFINITY;
    }
    (1.0 + g_min / (4.0 * epsilon)).ln()
}

/// Builds the Combes-Thomas constant for `alpha` and checks the bound on
/// the window of `pair`.
pub fn combes_thomas_certificate(
    params: &ModelParams,
    pair: &RealSpacePair,
    upsilon_hat: f64,
    alpha: f64,
    g_min: f64,
) -> Result<CombesCertificate> {
    if !(alpha > 0.0) {
        return Err(validation(format!("alpha must be > 0, got {alpha}")));
    }
    let lhs = 4.0 * params.epsilon * (alpha.exp() - 1.0);
    if lhs >= g_min {
        return Err(Error::GapConditionFailed { lhs, g_min });
    }
    let c = upsilon_hat.abs() * (params.p1.weighted_l1(alpha) + params.p2.weighted_l1(alpha)) / (g_min - lhs);
    let mut max_ratio = 0.0f64;
    for (x, v) in pair.amplitude.iter() {
        let r = ((x[0] * x[0] + x[1] * x[1]) as f64).sqrt();
        let bound = c * (-alpha * r).exp();
        let ratio = if bound > 0.0 {
            v.norm() / bound
        } else if v.norm() == 0.0 {
            0.0
        } else {
            f64::INFINITY
        };
        max_ratio = max_ratio.max(ratio);
    }
    Ok(CombesCertificate { alpha, g_min, c, max_ratio, holds: max_ratio <= 1.0 })
}

/// The repulsion ladder {0, 1, 10, 1e2, 1e3, 1e4, 1e6} in units of eps.
pub fn u_ladder(epsilon: f64) -> Vec<Repulsion> {
    [0.0, 1.0, 10.0, 1e2, 1e3, 1e4, 1e6].iter().map(|&m| Repulsion::Finite(m * epsilon)).collect()
}
