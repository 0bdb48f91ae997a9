//! Fitting the exchange amplitude to a pair fraction, and unit conversion.

use serde::Serialize;

use crate::error::{validation, Error, Result};
use crate::grid::TorusGrid;
use crate::params::{ModelParams, KB_EV_PER_K};
use crate::spectral::{solve_e, PairState};
use crate::TorusPoint;

pub fn ev_to_kelvin(x: f64) -> f64 {
    x / KB_EV_PER_K
}

pub fn kelvin_to_ev(x: f64) -> f64 {
    x * KB_EV_PER_K
}

/// Amplitude range searched, in units of epsilon.
pub const PEAK_RANGE: (f64, f64) = (1e-4, 10.0);
const SCAN_POINTS: usize = 41;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CalibrationResult {
    pub k: TorusPoint,
    pub target_rho: f64,
    /// upsilon_hat(K) after calibration (eV).
    pub fitted_upsilon_peak: f64,
    pub achieved_rho: f64,
    pub iterations: usize,
    pub residual: f64,
    pub tol: f64,
    /// (peak, rho) samples of the monotonicity scan.
    pub scan: Vec<(f64, f64)>,
    pub u_label: String,
}

fn rho_at(params: &ModelParams, grid: &TorusGrid, k: TorusPoint, peak: f64) -> Result<f64> {
    Ok(solve_e(&params.with_upsilon_peak(k, peak)?, grid, k)?.pair_fraction_rho)
}

/// Rescales the exchange profile so that the bound pair at `k` has pair
/// fraction `target_rho`; only the amplitude changes, the shape is kept.
pub fn calibrate_upsilon(
    params: &ModelParams,
    grid: &TorusGrid,
    k: TorusPoint,
    target_rho: f64,
    tol: f64,
) -> Result<CalibrationResult> {
    if !(target_rho > 0.0 && target_rho < 1.0) {
        return Err(validation(format!("target rho must lie in (0, 1), got {target_rho}")));
    }
    if !(tol > 0.0) {
        return Err(validation("tolerance must be > 0"));
    }
    if !grid.contains(k) {
        return Err(validation(format!("calibration point {k:?} is not a grid point")));
    }
    params.validate_bound_pair()?;
    let eps = params.epsilon;
    let (lo, hi) = (PEAK_RANGE.0 * eps, PEAK_RANGE.1 * eps);
    let ratio = (hi / lo).ln();
    let peaks: Vec<f64> = (0..SCAN_POINTS).map(|i| lo * (ratio * i as f64 / (SCAN_POINTS - 1) as f64).exp()).collect();
    let mut scan = Vec::with_capacity(SCAN_POINTS);
    for &p in &peaks {
        scan.push((p, rho_at(params, grid, k, p)?));
    }
    if let Some(w) = scan.windows(2).find(|w| !(w[1].1 < w[0].1)) {
        return Err(Error::NonConvergence(format!(
            "pair fraction is not strictly decreasing on the scan: rho({}) = {} then rho({}) = {}",
            w[0].0, w[0].1, w[1].0, w[1].1
        )));
    }
    let (rho_max, rho_min) = (scan[0].1, scan[SCAN_POINTS - 1].1);
    if !(target_rho <= rho_max && target_rho >= rho_min) {
        return Err(Error::TargetUnreachable(format!(
            "rho = {target_rho} outside [{rho_min}, {rho_max}] reachable with peak in [{lo}, {hi}] eV"
        )));
    }
    let j = scan.iter().position(|&(_, r)| r <= target_rho).unwrap_or(SCAN_POINTS - 1).max(1);
    let (mut a, mut b) = (scan[j - 1].0.ln(), scan[j].0.ln());
    let mut iterations = 0;
    let mut best = (scan[j].0, scan[j].1);
    while iterations < 200 {
        iterations += 1;
        let mid = 0.5 * (a + b);
        let p = mid.exp();
        let r = rho_at(params, grid, k, p)?;
        best = (p, r);
        if (r - target_rho).abs() < tol {
            break;
        }
        if r > target_rho {
            a = mid;
        } else {
            b = mid;
        }
        if b - a < 1e-15 {
            break;
        }
    }
    let residual = (best.1 - target_rho).abs();
    if residual >= tol {
        return Err(Error::NonConvergence(format!("calibration stalled at residual {residual:e}")));
    }
    Ok(CalibrationResult {
        k,
        target_rho,
        fitted_upsilon_peak: best.0,
        achieved_rho: best.1,
        iterations,
        residual,
        tol,
        scan,
        u_label: params.u_label.clone(),
    })
}

/// The three candidate readings of a binding energy, in kelvin.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BindingEnergies {
    pub abs_e_k: f64,
    pub z_minus_e_k: f64,
    pub b_minus_e_k: f64,
}

impl BindingEnergies {
    pub fn of(state: &PairState) -> Self {
        BindingEnergies {
            abs_e_k: ev_to_kelvin(state.e.abs()),
            z_minus_e_k: ev_to_kelvin(state.z - state.e),
            b_minus_e_k: ev_to_kelvin(state.b - state.e),
        }
    }

    /// (name, value) pairs within `rel` of `target_k`.
    pub fn matches(&self, target_k: f64, rel: f64) -> Vec<(&'static str, f64)> {
        [("|E|", self.abs_e_k), ("z(K) - E", self.z_minus_e_k), ("b(K) - E", self.b_minus_e_k)]
            .into_iter()
            .filter(|(_, v)| (v - target_k).abs() <= rel * target_k)
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    #[test]
    fn unit_conversion() {
        assert!((ev_to_kelvin(1.0) - 11604.5).abs() < 0.1);
        assert_eq!(ev_to_kelvin(0.0), 0.0);
        assert_eq!(kelvin_to_ev(0.0), 0.0);
    }

    proptest! {
        #[test]
        fn conversions_are_inverse(x in -1e6f64..1e6) {
            let back = kelvin_to_ev(ev_to_kelvin(x));
            prop_assert!((back - x).abs() <= 1e-14 * x.abs());
        }
    }

    #[test]
    fn round_trip_on_a_small_grid() {
        let p = ModelParams::prototypical();
        let g = TorusGrid::new(16).unwrap();
        let k = [-PI, 0.0];
        let r = calibrate_upsilon(&p, &g, k, 0.9, 1e-10).unwrap();
        assert!(r.residual < 1e-10);
        let back = solve_e(&p.with_upsilon_peak(k, r.fitted_upsilon_peak).unwrap(), &g, k).unwrap();
        assert!((back.pair_fraction_rho - 0.9).abs() < 1e-10);
        assert!(r.scan.windows(2).all(|w| w[1].1 < w[0].1));
    }

    #[test]
    fn weaker_targets_need_smaller_peaks() {
        let p = ModelParams::prototypical();
        let g = TorusGrid::new(8).unwrap();
        let k = [-PI, 0.0];
        let peaks: Vec<f64> = [0.9, 0.99, 0.9999]
            .iter()
            .map(|&t| calibrate_upsilon(&p, &g, k, t, 1e-12).unwrap().fitted_upsilon_peak)
            .collect();
        assert!(peaks[0] > peaks[1] && peaks[1] > peaks[2]);
        assert!(peaks[2] < 0.1 * peaks[0]);
    }

    #[test]
    fn rejections() {
        let p = ModelParams::prototypical();
        let g = TorusGrid::new(8).unwrap();
        let k = [-PI, 0.0];
        assert!(matches!(calibrate_upsilon(&p, &g, k, 1.0, 1e-8), Err(Error::Validation(_))));
        assert!(matches!(calibrate_upsilon(&p, &g, [0.1, 0.0], 0.9, 1e-8), Err(Error::Validation(_))));
        assert!(matches!(calibrate_upsilon(&p, &g, k, 1e-9, 1e-12), Err(Error::TargetUnreachable(_))));
        assert!(matches!(calibrate_upsilon(&p, &g, k, 1.0 - 1e-15, 1e-18), Err(Error::TargetUnreachable(_))));
    }
}
