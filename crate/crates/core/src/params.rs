//! Physical parameters and coupling functions.
//!
//! Couplings live on finite subsets of the square lattice, so every Fourier
//! transform below is an exact finite sum.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt::Write as _;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{validation, Result};
use crate::TorusPoint;

/// Boltzmann constant in eV/K.
pub const KB_EV_PER_K: f64 = 8.617333e-5;

const ROTATION_TOL: f64 = 1e-12;

/// 90 degree rotation of a torus point, (q1, q2) -> (q2, -q1).
pub fn rotate_point(q: TorusPoint) -> TorusPoint {
    [q[1], -q[0]]
}

/// Wrap an angle into [-pi, pi).
pub fn wrap_angle(x: f64) -> f64 {
    let two_pi = 2.0 * PI;
    let mut y = (x + PI).rem_euclid(two_pi) - PI;
    if y >= PI {
        y -= two_pi;
    }
    y
}

/// Real function on Z^2 with finite support.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct LatticeCoupling {
    entries: BTreeMap<(i64, i64), f64>,
}

impl LatticeCoupling {
    /// Builds a coupling and checks finiteness and 90 degree rotation
    /// invariance over the whole support. Zero values are dropped.
    pub fn new(entries: impl IntoIterator<Item = ((i64, i64), f64)>) -> Result<Self> {
        let mut map = BTreeMap::new();
        for (x, v) in entries {
            if !v.is_finite() {
                return Err(validation(format!("coupling value at {:?} is not finite", x)));
            }
            if v != 0.0 {
                *map.entry(x).or_insert(0.0) += v;
            }
        }
        map.retain(|_, v| *v != 0.0);
        let c = LatticeCoupling { entries: map };
        c.check_rotation_invariance()?;
        Ok(c)
    }

    pub fn zero() -> Self {
        LatticeCoupling::default()
    }

    pub fn delta(value: f64) -> Self {
        Self::from_points(&[(0, 0)], value)
    }

    /// Value on the five points with |z| <= 1.
    pub fn one_range(value: f64) -> Self {
        Self::from_points(&[(0, 0), (1, 0), (-1, 0), (0, 1), (0, -1)], value)
    }

    /// Value on (0,0), (+-2,0), (0,+-2).
    pub fn one_range_even(value: f64) -> Self {
        Self::from_points(&[(0, 0), (2, 0), (-2, 0), (0, 2), (0, -2)], value)
    }

    /// Value on the four nearest neighbours of the origin.
    pub fn nearest_neighbor(value: f64) -> Self {
        Self::from_points(&[(1, 0), (-1, 0), (0, 1), (0, -1)], value)
    }

    fn from_points(points: &[(i64, i64)], value: f64) -> Self {
        let entries = if value == 0.0 { BTreeMap::new() } else { points.iter().map(|&x| (x, value)).collect() };
        LatticeCoupling { entries }
    }

    fn check_rotation_invariance(&self) -> Result<()> {
        for (&(x, y), &v) in &self.entries {
            let w = self.get((-y, x));
            if (v - w).abs() > ROTATION_TOL * v.abs().max(1.0) {
                return Err(validation(format!(
                    "coupling is not invariant under 90 degree rotation: value {v} at ({x},{y}) but {w} at ({},{x})",
                    -y
                )));
            }
        }
        Ok(())
    }

    pub fn get(&self, x: (i64, i64)) -> f64 {
        self.entries.get(&x).copied().unwrap_or(0.0)
    }

    pub fn is_zero(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Support points with their values, in lexicographic order.
    pub fn iter(&self) -> impl Iterator<Item = ((i64, i64), f64)> + '_ {
        self.entries.iter().map(|(&x, &v)| (x, v))
    }

    pub fn scaled(&self, s: f64) -> Self {
        if s == 0.0 {
            return Self::zero();
        }
        LatticeCoupling { entries: self.entries.iter().map(|(&x, &v)| (x, v * s)).collect() }
    }

    /// True when every support point lies in (2Z)^2.
    pub fn is_even_supported(&self) -> bool {
        self.entries.keys().all(|&(x, y)| x % 2 == 0 && y % 2 == 0)
    }

    /// True when the only support point (if any) is the origin.
    pub fn is_delta_like(&self) -> bool {
        self.entries.keys().all(|&x| x == (0, 0))
    }

    /// Sum over x of c(x) cos(q.x).
    pub fn fourier(&self, q: TorusPoint) -> f64 {
        self.entries.iter().map(|(&(x, y), &v)| v * (q[0] * x as f64 + q[1] * y as f64).cos()).sum()
    }

    /// The full complex sum, Sum c(x) e^{i q.x}.
    pub fn fourier_complex(&self, q: TorusPoint) -> Complex64 {
        self.entries.iter().map(|(&(x, y), &v)| Complex64::from_polar(v, q[0] * x as f64 + q[1] * y as f64)).sum()
    }

    /// Gradient of [`fourier`](Self::fourier) with respect to q.
    pub fn fourier_grad(&self, q: TorusPoint) -> [f64; 2] {
        let mut g = [0.0; 2];
        for (&(x, y), &v) in &self.entries {
            let s = (q[0] * x as f64 + q[1] * y as f64).sin();
            g[0] -= v * x as f64 * s;
            g[1] -= v * y as f64 * s;
        }
        g
    }

    /// Sum over y of |c(y)| e^{alpha |y|} with the Euclidean norm.
    pub fn weighted_l1(&self, alpha: f64) -> f64 {
        self.entries.iter().map(|(&(x, y), &v)| v.abs() * (alpha * ((x * x + y * y) as f64).sqrt()).exp()).sum()
    }

    /// `x y value` triples separated by `;`.
    pub fn to_triples(&self) -> String {
        let mut s = String::new();
        for (i, ((x, y), v)) in self.iter().enumerate() {
            if i > 0 {
                s.push_str("; ");
            }
            let _ = write!(s, "{x} {y} {v:?}");
        }
        s
    }
}

/// Total Fourier transform of a finite coupling, real by reflection symmetry.
pub fn fourier_coupling(c: &LatticeCoupling, q: TorusPoint) -> f64 {
    c.fourier(q)
}

/// One Lorentzian-in-cosine term,
/// `amplitude / (alpha * (2(1 - cos(k1 - c1)) + 2(1 - cos(k2 - c2))) + 1)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProfileTerm {
    pub center: TorusPoint,
    pub amplitude: f64,
    pub alpha: f64,
}

impl ProfileTerm {
    fn denom(&self, k: TorusPoint) -> f64 {
        let s = 2.0 * (1.0 - (k[0] - self.center[0]).cos()) + 2.0 * (1.0 - (k[1] - self.center[1]).cos());
        self.alpha * s + 1.0
    }

    pub fn eval(&self, k: TorusPoint) -> f64 {
        self.amplitude / self.denom(k)
    }

    pub fn grad(&self, k: TorusPoint) -> [f64; 2] {
        let d = self.denom(k);
        let f = -self.amplitude * self.alpha * 2.0 / (d * d);
        [f * (k[0] - self.center[0]).sin(), f * (k[1] - self.center[1]).sin()]
    }
}

/// Closed-form momentum profile for the exchange coupling. Near each center
/// a term behaves like `A / (alpha |k - c|^2 + 1)`; the cosine form makes it
/// periodic on the torus.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MomentumProfile {
    pub form: String,
    pub terms: Vec<ProfileTerm>,
}

/// Name of the two-center profile peaked at (pi,0) and (0,pi).
pub const ANTINODAL_LORENTZIAN: &str = "antinodal_lorentzian";

impl MomentumProfile {
    /// Two terms centred at (pi,0) and (0,pi), normalised so that the value
    /// at (-pi,0) (equivalently (pi,0)) equals `peak`.
    pub fn antinodal(peak: f64, alpha: f64) -> Result<Self> {
        if !(alpha.is_finite() && alpha >= 0.0) {
            return Err(validation(format!("profile alpha must be finite and >= 0, got {alpha}")));
        }
        if !peak.is_finite() {
            return Err(validation("profile peak must be finite"));
        }
        let amplitude = peak / (1.0 + 1.0 / (1.0 + 8.0 * alpha));
        let terms = vec![
            ProfileTerm { center: [PI, 0.0], amplitude, alpha },
            ProfileTerm { center: [0.0, PI], amplitude, alpha },
        ];
        let p = MomentumProfile { form: ANTINODAL_LORENTZIAN.to_string(), terms };
        p.validate()?;
        Ok(p)
    }

    pub fn from_terms(form: impl Into<String>, terms: Vec<ProfileTerm>) -> Result<Self> {
        let p = MomentumProfile { form: form.into(), terms };
        p.validate()?;
        Ok(p)
    }

    pub fn eval(&self, k: TorusPoint) -> f64 {
        self.terms.iter().map(|t| t.eval(k)).sum()
    }

    pub fn grad(&self, k: TorusPoint) -> [f64; 2] {
        self.terms.iter().fold([0.0; 2], |acc, t| {
            let g = t.grad(k);
            [acc[0] + g[0], acc[1] + g[1]]
        })
    }

    /// Sampled rotation-invariance check on a 64 x 64 grid.
    pub fn validate(&self) -> Result<()> {
        for t in &self.terms {
            if !(t.amplitude.is_finite() && t.alpha.is_finite() && t.alpha >= 0.0) {
                return Err(validation("profile term has non-finite amplitude or negative alpha"));
            }
        }
        let n = 64;
        for j in 0..n {
            for l in 0..n {
                let k = [-PI + 2.0 * PI * j as f64 / n as f64, -PI + 2.0 * PI * l as f64 / n as f64];
                let a = self.eval(k);
                let b = self.eval([k[1], -k[0]]);
                if (a - b).abs() > ROTATION_TOL * a.abs().max(1.0) {
                    return Err(validation(format!(
                        "momentum profile is not rotation invariant at k = ({}, {}): {a} vs {b}",
                        k[0], k[1]
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn scaled(&self, s: f64) -> Self {
        let mut p = self.clone();
        for t in &mut p.terms {
            t.amplitude *= s;
        }
        p
    }
}

/// Exchange coupling: either a lattice function or a momentum profile.
#[derive(Clone, Debug, PartialEq)]
pub enum Upsilon {
    Lattice(LatticeCoupling),
    Profile(MomentumProfile),
}

impl Upsilon {
    pub fn eval(&self, k: TorusPoint) -> f64 {
        match self {
            Upsilon::Lattice(c) => c.fourier(k),
            Upsilon::Profile(p) => p.eval(k),
        }
    }

    pub fn grad(&self, k: TorusPoint) -> [f64; 2] {
        match self {
            Upsilon::Lattice(c) => c.fourier_grad(k),
            Upsilon::Profile(p) => p.grad(k),
        }
    }

    pub fn scaled(&self, s: f64) -> Self {
        match self {
            Upsilon::Lattice(c) => Upsilon::Lattice(c.scaled(s)),
            Upsilon::Profile(p) => Upsilon::Profile(p.scaled(s)),
        }
    }

    pub fn is_zero(&self) -> bool {
        match self {
            Upsilon::Lattice(c) => c.is_zero(),
            Upsilon::Profile(p) => p.terms.iter().all(|t| t.amplitude == 0.0),
        }
    }
}

/// On-site repulsion: a finite value in eV or the hard-core limit.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum Repulsion {
    Finite(f64),
    HardCore,
}

impl Repulsion {
    pub fn is_hard_core(&self) -> bool {
        matches!(self, Repulsion::HardCore)
    }

    pub fn finite(&self) -> Option<f64> {
        match *self {
            Repulsion::Finite(u) => Some(u),
            Repulsion::HardCore => None,
        }
    }
}

impl std::fmt::Display for Repulsion {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Repulsion::Finite(u) => write!(f, "{u:?}"),
            Repulsion::HardCore => f.write_str("hardcore"),
        }
    }
}

/// All physical inputs of the Hamiltonian.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams {
    /// Fermion hopping (eV).
    pub epsilon: f64,
    /// Boson to fermion hopping ratio.
    pub h_b: f64,
    /// On-site repulsion.
    pub u_onsite: Repulsion,
    /// Extended repulsion (eV).
    pub u: LatticeCoupling,
    pub p1: LatticeCoupling,
    pub p2: LatticeCoupling,
    /// Exchange coupling (eV).
    pub upsilon: Upsilon,
    pub lattice_spacing_nm: f64,
    /// Human readable description of the extended repulsion in use.
    pub u_label: String,
}

/// Nearest-neighbour extended repulsion used by default (eV).
pub const DEFAULT_U_NN_EV: f64 = 0.3;
/// Default curvature of the exchange profile.
pub const DEFAULT_PROFILE_ALPHA: f64 = 1.0;

impl ModelParams {
    /// Cuprate-like parameter set with the default nearest-neighbour `u`.
    pub fn prototypical() -> Self {
        Self::prototypical_with_u(LatticeCoupling::nearest_neighbor(DEFAULT_U_NN_EV), nn_label(DEFAULT_U_NN_EV))
    }

    /// Same as [`prototypical`](Self::prototypical) with `u = 0` everywhere.
    pub fn prototypical_onsite_only() -> Self {
        Self::prototypical_with_u(LatticeCoupling::zero(), "onsite-only: u = 0".to_string())
    }

    fn prototypical_with_u(u: LatticeCoupling, u_label: String) -> Self {
        ModelParams {
            epsilon: 0.266,
            h_b: 0.00575,
            u_onsite: Repulsion::Finite(1.461),
            u,
            p1: LatticeCoupling::one_range(1.0),
            p2: LatticeCoupling::one_range_even(1.0),
            upsilon: Upsilon::Profile(
                MomentumProfile::antinodal(0.11, DEFAULT_PROFILE_ALPHA).expect("valid default profile"),
            ),
            lattice_spacing_nm: 0.2672,
            u_label,
        }
    }

    pub fn kb_ev_per_k(&self) -> f64 {
        KB_EV_PER_K
    }

    /// Structural checks shared by every operation.
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon.is_finite() && self.epsilon >= 0.0) {
            return Err(validation(format!("epsilon must be finite and >= 0, got {}", self.epsilon)));
        }
        if !(self.h_b.is_finite() && self.h_b >= 0.0) {
            return Err(validation(format!("h_b must be finite and >= 0, got {}", self.h_b)));
        }
        if let Repulsion::Finite(u) = self.u_onsite {
            if !(u.is_finite() && u >= 0.0) {
                return Err(validation(format!("U must be finite and >= 0 (or hardcore), got {u}")));
            }
        }
        if let Some(((x, y), v)) = self.u.iter().find(|&(_, v)| v < 0.0) {
            return Err(validation(format!("u must be >= 0, got {v} at ({x},{y})")));
        }
        if !self.p2.is_even_supported() {
            return Err(validation("p2 must be supported on even lattice vectors (2Z)^2"));
        }
        if self.p1.is_zero() && self.p2.is_zero() {
            return Err(validation("p1 + p2 must not vanish identically"));
        }
        if !(self.lattice_spacing_nm.is_finite() && self.lattice_spacing_nm > 0.0) {
            return Err(validation("lattice_spacing_nm must be finite and > 0"));
        }
        if let Upsilon::Profile(p) = &self.upsilon {
            p.validate()?;
        }
        Ok(())
    }

    /// Checks required by every bound-pair computation, including h_b <= 1/2.
    pub fn validate_bound_pair(&self) -> Result<()> {
        self.validate()?;
        if self.h_b > 0.5 {
            return Err(validation(format!(
                "bound-pair operations require h_b in [0, 1/2] so that b(k) <= z(k); got h_b = {}",
                self.h_b
            )));
        }
        Ok(())
    }

    pub fn with_repulsion(&self, u_onsite: Repulsion) -> Self {
        ModelParams { u_onsite, ..self.clone() }
    }

    /// Rescales the exchange coupling so that its transform at `k` equals
    /// `peak`. Fails when the current transform vanishes at `k`.
    pub fn with_upsilon_peak(&self, k: TorusPoint, peak: f64) -> Result<Self> {
        let current = self.upsilon.eval(k);
        if current == 0.0 {
            return Err(validation("cannot rescale an exchange coupling that vanishes at the calibration point"));
        }
        Ok(ModelParams { upsilon: self.upsilon.scaled(peak / current), ..self.clone() })
    }

    /// Canonical key-value serialisation; parsing it back gives equal params.
    pub fn to_config_string(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "epsilon_eV = {:?}", self.epsilon);
        let _ = writeln!(s, "h_b = {:?}", self.h_b);
        match self.u_onsite {
            Repulsion::Finite(u) => {
                let _ = writeln!(s, "U_eV = {u:?}");
            }
            Repulsion::HardCore => {
                let _ = writeln!(s, "U = hardcore");
            }
        }
        let _ = writeln!(s, "lattice_spacing_nm = {:?}", self.lattice_spacing_nm);
        let _ = writeln!(s, "u = {}", triples_or_zero(&self.u));
        let _ = writeln!(s, "u_label = {}", self.u_label);
        let _ = writeln!(s, "p1 = {}", triples_or_zero(&self.p1));
        let _ = writeln!(s, "p2 = {}", triples_or_zero(&self.p2));
        match &self.upsilon {
            Upsilon::Lattice(c) => {
                let _ = writeln!(s, "upsilon = {}", triples_or_zero(c));
            }
            Upsilon::Profile(p) => {
                let _ = writeln!(s, "upsilon_profile = {}", p.form);
                for t in &p.terms {
                    let _ = writeln!(
                        s,
                        "upsilon_term = {:?} {:?} {:?} {:?}",
                        t.center[0], t.center[1], t.amplitude, t.alpha
                    );
                }
            }
        }
        s
    }
}

fn triples_or_zero(c: &LatticeCoupling) -> String {
    if c.is_zero() {
        "zero".to_string()
    } else {
        c.to_triples()
    }
}

pub(crate) fn nn_label(v: f64) -> String {
    format!("nearest-neighbour: u(+-e1) = u(+-e2) = {v} eV, zero elsewhere")
}

/// Value of the exchange transform at `k`.
pub fn eval_upsilon_hat(params: &ModelParams, k: TorusPoint) -> f64 {
    params.upsilon.eval(k)
}

/// d(k)(p) = p1^(k + p) + p2^(k/2 + p).
pub fn eval_d(params: &ModelParams, k: TorusPoint, p: TorusPoint) -> Complex64 {
    Complex64::new(eval_d_real(params, k, p), 0.0)
}

pub(crate) fn eval_d_real(params: &ModelParams, k: TorusPoint, p: TorusPoint) -> f64 {
    params.p1.fourier([k[0] + p[0], k[1] + p[1]]) + params.p2.fourier([0.5 * k[0] + p[0], 0.5 * k[1] + p[1]])
}

/// Gradient of d(k)(p) with respect to k.
pub(crate) fn eval_d_grad_k(params: &ModelParams, k: TorusPoint, p: TorusPoint) -> [f64; 2] {
    let g1 = params.p1.fourier_grad([k[0] + p[0], k[1] + p[1]]);
    let g2 = params.p2.fourier_grad([0.5 * k[0] + p[0], 0.5 * k[1] + p[1]]);
    [g1[0] + 0.5 * g2[0], g1[1] + 0.5 * g2[1]]
}

/// Outcome of [`validate_nondegeneracy`].
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct NondegeneracyReport {
    /// True when p1 has a support point outside (2Z)^2.
    pub sufficient_condition: bool,
    /// Sampled minimum of |d(k)(p)| when the sufficient condition fails.
    pub sampled_min: Option<f64>,
    pub argmin_k: Option<TorusPoint>,
}

/// Ensures that d(k) does not vanish identically for any k.
pub fn validate_nondegeneracy(params: &ModelParams) -> Result<NondegeneracyReport> {
    if params.p1.iter().any(|((x, y), _)| x % 2 != 0 || y % 2 != 0) {
        return Ok(NondegeneracyReport { sufficient_condition: true, sampled_min: None, argmin_k: None });
    }
    let n = 32;
    let pt = |j: usize| -PI + 2.0 * PI * j as f64 / n as f64;
    let mut worst = f64::INFINITY;
    let mut worst_k = [0.0; 2];
    for a in 0..n {
        for b in 0..n {
            let k = [pt(a), pt(b)];
            // d(k) vanishing as a function means every sample is zero; take
            // the largest |d| over p as the per-k measure.
            let mut best = 0.0f64;
            for c in 0..n {
                for e in 0..n {
                    best = best.max(eval_d_real(params, k, [pt(c), pt(e)]).abs());
                }
            }
            if best < worst {
                worst = best;
                worst_k = k;
            }
        }
    }
    if worst < 1e-10 {
        return Err(validation(format!(
            "d(k) vanishes identically at k = ({}, {}) (max |d| = {worst:e}); p1 + p2 must not cancel",
            worst_k[0], worst_k[1]
        )));
    }
    Ok(NondegeneracyReport { sufficient_condition: false, sampled_min: Some(worst), argmin_k: Some(worst_k) })
}
