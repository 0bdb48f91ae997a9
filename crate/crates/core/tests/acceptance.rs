//! End-to-end acceptance run. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any hard-gate criterion fails.

use std::f64::consts::PI;
use std::time::Instant;

use nalgebra::DVector;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use pairfiber::calibration::{calibrate_upsilon, BindingEnergies};
use pairfiber::dispersion::{
    alpha_gap_limit, combes_thomas_certificate, fd_velocity, gap_minimum, group_velocity, real_space_from_state,
    symmetry_decompose, u_ladder, uniform_kgrid, RealSpacePair, FD_GRADIENT_STEP,
};
use pairfiber::fiber::{compute_t, hardcore_interpolation_check, FiberOperator};
use pairfiber::grid::{GridFunction, TorusGrid};
use pairfiber::params::{rotate_point, LatticeCoupling, ModelParams, MomentumProfile, Repulsion, Upsilon};
use pairfiber::scattering::{
    bound_channel_check, kernel_check, ode_propagator, propagate_ode, series_propagator, FiberDynamics,
};
use pairfiber::spectral::solve_e;

const TARGET_PEAK_EV: f64 = 0.11;

struct Outcome {
    id: usize,
    name: &'static str,
    pass: bool,
    hard: bool,
    detail: String,
}

fn random_params(rng: &mut ChaCha8Rng) -> ModelParams {
    let mut p = ModelParams::prototypical();
    p.epsilon = rng.gen_range(0.1..0.4);
    p.h_b = rng.gen_range(0.0..0.5);
    let u_onsite = rng.gen_range(0.0..5.0);
    p.u_onsite = Repulsion::Finite(u_onsite);
    p.u = if rng.gen_bool(0.5) {
        LatticeCoupling::zero()
    } else {
        LatticeCoupling::nearest_neighbor(rng.gen_range(0.0..0.5) * u_onsite)
    };
    p.u_label = "random".into();
    p.p1 = LatticeCoupling::one_range(rng.gen_range(0.3..1.5));
    p.p2 = if rng.gen_bool(0.7) {
        LatticeCoupling::one_range_even(rng.gen_range(0.0..1.5))
    } else {
        LatticeCoupling::zero()
    };
    p.upsilon = if rng.gen_bool(0.7) {
        Upsilon::Profile(MomentumProfile::antinodal(rng.gen_range(0.02..0.3), rng.gen_range(0.5..2.0)).unwrap())
    } else {
        Upsilon::Lattice(LatticeCoupling::delta(rng.gen_range(0.02..0.3)))
    };
    p
}

fn random_k(rng: &mut ChaCha8Rng) -> [f64; 2] {
    [rng.gen_range(-PI..PI), rng.gen_range(-PI..PI)]
}

fn random_rhs(rng: &mut ChaCha8Rng, grid: &TorusGrid) -> GridFunction {
    let v = (0..grid.len()).map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect();
    GridFunction::new(grid, v).unwrap()
}

fn norm(v: &[Complex64]) -> f64 {
    v.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt()
}

fn dense_vs_characteristic() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let grid = TorusGrid::new(16).unwrap();
    let start = Instant::now();
    let mut worst = 0.0f64;
    for _ in 0..25 {
        let p = random_params(&mut rng);
        let k = random_k(&mut rng);
        let e = solve_e(&p, &grid, k).unwrap().e;
        let lam = FiberOperator::new(&p, &grid, k).unwrap().dense_full().unwrap().symmetric_eigenvalues().min();
        worst = worst.max((e - lam).abs() / p.epsilon);
    }
    let secs = start.elapsed().as_secs_f64();
    Outcome {
        id: 1,
        name: "characteristic root vs dense lowest eigenvalue",
        pass: worst < 1e-9 && secs < 30.0,
        hard: true,
        detail: format!(
            "max |E - lambda_min|/eps = {worst:.2e} (tol 1e-9), 25 cases at N = 16 in {secs:.1} s (limit 30 s)"
        ),
    }
}

fn woodbury_vs_dense() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let grid = TorusGrid::new(16).unwrap();
    let n = grid.n() as f64;
    let mut worst = 0.0f64;
    let mut max_terms = 0;
    let mut solves = 0;
    for case in 0..10 {
        let mut p = random_params(&mut rng);
        if case % 2 == 1 {
            p.u = LatticeCoupling::nearest_neighbor(0.3);
        }
        let k = random_k(&mut rng);
        let op = FiberOperator::new(&p, &grid, k).unwrap();
        max_terms = max_terms.max(op.terms().len());
        let x = op.functions().f_min - rng.gen_range(1e-3..1.0) * p.epsilon;
        let mut a = op.dense_a11().unwrap();
        for i in 0..grid.len() {
            a[(i, i)] -= Complex64::new(x, 0.0);
        }
        let lu = a.lu();
        for _ in 0..5 {
            let rhs = random_rhs(&mut rng, &grid);
            let got = op.apply_resolvent(x, &rhs).unwrap();
            let b = DVector::from_iterator(grid.len(), rhs.values().iter().map(|v| v / n));
            let want: Vec<Complex64> = lu.solve(&b).unwrap().iter().map(|v| v * n).collect();
            let diff: Vec<Complex64> = got.values().iter().zip(&want).map(|(g, w)| g - w).collect();
            worst = worst.max(norm(&diff) / norm(&want));
            solves += 1;
        }
    }
    Outcome {
        id: 2,
        name: "Woodbury resolvent vs dense solve",
        pass: worst < 1e-10 && max_terms <= 6 && solves == 50,
        hard: true,
        detail: format!("max relative error {worst:.2e} (tol 1e-10), {solves} right-hand sides, up to {max_terms} rank-one terms, N = 16"),
    }
}

fn interpolation_identity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let grid = TorusGrid::new(16).unwrap();
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let p = random_params(&mut rng);
        let k = random_k(&mut rng);
        let op = FiberOperator::new(&p, &grid, k).unwrap();
        let x = op.functions().f_min - rng.gen_range(1e-3..2.0) * p.epsilon;
        let u = p.epsilon * 10f64.powf(rng.gen_range(-3.0..4.0));
        worst = worst.max(hardcore_interpolation_check(&p, &grid, k, x, u).unwrap());
    }
    Outcome {
        id: 3,
        name: "hard-core interpolation identity, two paths for T",
        pass: worst < 1e-9,
        hard: true,
        detail: format!("max |T_woodbury - T_formula| = {worst:.2e} (tol 1e-9) over 100 samples"),
    }
}

fn weak(p: &ModelParams, k: [f64; 2], target: f64) -> ModelParams {
    p.with_upsilon_peak(k, target).unwrap()
}

fn scattering_cross_validation() -> Outcome {
    let p = ModelParams::prototypical();
    let eps = p.epsilon;
    let grid = TorusGrid::new(8).unwrap();
    let fibers = [[-PI, 0.0], [0.3, -1.0], [1.7, 2.2]];
    let mut ode_worst = 0.0f64;
    for &k in &fibers {
        ode_worst = ode_worst.max(propagate_ode(&p, &grid, k, 0.0, 5.0 / eps, 2000).unwrap().oracle_error);
    }
    let span = 2.0 / eps;
    let mut series_worst = 0.0f64;
    let mut series_proto = 0.0f64;
    for &k in &fibers {
        let w = weak(&p, k, 0.01 * eps);
        let d = FiberDynamics::new(&w, &grid, k).unwrap();
        let ode = ode_propagator(&d, 0.0, span, 2000).unwrap();
        let (s, _) = series_propagator(&d, 0.0, span, 4, None).unwrap();
        series_worst = series_worst.max((s - ode).norm());
        let d = FiberDynamics::new(&p, &grid, k).unwrap();
        let ode = ode_propagator(&d, 0.0, span, 2000).unwrap();
        let (s, _) = series_propagator(&d, 0.0, span, 4, None).unwrap();
        series_proto = series_proto.max((s - ode).norm());
    }
    let mut kernel_worst = 0.0f64;
    for &k in &fibers {
        for (s, t) in [(0.0, 1.0 / eps), (0.5 / eps, 5.0 / eps), (3.0 / eps, -1.0 / eps)] {
            let (a, b) = kernel_check(&p, &grid, k, s, t).unwrap();
            kernel_worst = kernel_worst.max((a - b).norm());
        }
    }
    Outcome {
        id: 4,
        name: "scattering cross-validation",
        pass: ode_worst < 1e-6 && series_worst < 1e-5 && kernel_worst < 1e-10,
        hard: true,
        detail: format!(
            "ODE vs exact {ode_worst:.2e} (tol 1e-6, |t-s| = 5/eps, 2000 steps); order-4 series vs ODE {series_worst:.2e} \
             (tol 1e-5, |t-s| = 2/eps, upsilon_hat = 0.01 eps; at the prototypical coupling {series_proto:.2e}); \
             kernel two-path {kernel_worst:.2e} (tol 1e-10); N = 8"
        ),
    }
}

fn bound_channel() -> Outcome {
    let p = ModelParams::prototypical();
    let grid = TorusGrid::new(8).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst = 0.0f64;
    for i in 0..10 {
        let k = if i == 0 { [-PI, 0.0] } else { random_k(&mut rng) };
        let t = rng.gen_range(0.5..5.0) / p.epsilon;
        worst = worst.max(bound_channel_check(&p, &grid, k, t).unwrap());
    }
    Outcome {
        id: 5,
        name: "bound-channel intertwining",
        pass: worst < 1e-9,
        hard: true,
        detail: format!("max ||e^(itA)Psi - e^(itE)Psi||/||Psi|| = {worst:.2e} (tol 1e-9), 10 fibers, N = 8"),
    }
}

fn monotonicity() -> Outcome {
    let p = ModelParams::prototypical();
    let grid = TorusGrid::new(16).unwrap();
    let tol = 1e-10 * p.epsilon;
    let mut ladder = u_ladder(p.epsilon);
    ladder.push(Repulsion::HardCore);
    let mut worst = f64::NEG_INFINITY;
    let mut failures = Vec::new();
    for k in grid.points() {
        let mut energies = Vec::new();
        for &u in &ladder {
            match solve_e(&p.with_repulsion(u), &grid, k) {
                Ok(s) => energies.push((s.e, s.b)),
                Err(e) => failures.push(format!("{k:?} U = {u}: {e}")),
            }
        }
        if energies.len() != ladder.len() {
            continue;
        }
        for w in energies.windows(2) {
            worst = worst.max(w[0].0 - w[1].0);
        }
        let (e_last, b) = energies[energies.len() - 1];
        worst = worst.max(e_last - b);
    }
    Outcome {
        id: 6,
        name: "monotonicity in U",
        pass: worst <= tol && failures.is_empty(),
        hard: true,
        detail: format!(
            "max violation {worst:.2e} eV (tol {tol:.1e}), ladder {{0,1,10,1e2,1e3,1e4,1e6}} eps plus hard core, all {} grid k at N = 16{}",
            grid.len(),
            if failures.is_empty() { String::new() } else { format!("; unsolved: {}", failures.join("; ")) }
        ),
    }
}

fn rotation_invariance() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let grid = TorusGrid::new(16).unwrap();
    let (mut de, mut dt, mut dw, mut sum_dev, mut wp) = (0.0f64, 0.0f64, 0.0f64, 0.0f64, 0.0f64);
    let fixed = [[0.0, 0.0], [-PI, 0.0], [0.0, -PI], [-PI, -PI]];
    for case in 0..6 {
        let p = if case == 0 { ModelParams::prototypical() } else { random_params(&mut rng) };
        for _ in 0..5 {
            let k = grid.point(rng.gen_range(0..grid.len()));
            let rk = rotate_point(k);
            let a = solve_e(&p, &grid, k).unwrap();
            let b = solve_e(&p, &grid, rk).unwrap();
            de = de.max((a.e - b.e).abs());
            let x = a.z - 0.1 * p.epsilon;
            dt = dt.max((compute_t(&p, &grid, k, x).unwrap() - compute_t(&p, &grid, rk, x).unwrap()).abs());
            let wa = symmetry_decompose(&grid, &a.psi_hat).unwrap();
            let wb = symmetry_decompose(&grid, &b.psi_hat).unwrap();
            dw = dw.max((wa.w_s - wb.w_s).abs()).max((wa.w_d - wb.w_d).abs()).max((wa.w_p - wb.w_p).abs());
            sum_dev = sum_dev.max((wa.w_s + wa.w_d + wa.w_p - 1.0).abs());
        }
        for k in fixed {
            let s = solve_e(&p, &grid, k).unwrap();
            wp = wp.max(symmetry_decompose(&grid, &s.psi_hat).unwrap().w_p);
        }
    }
    Outcome {
        id: 7,
        name: "rotation invariance and p-wave weight",
        pass: de < 1e-10 && dt < 1e-10 && dw < 1e-12 && sum_dev < 1e-12 && wp < 1e-12,
        hard: true,
        detail: format!(
            "|E(k)-E(Rk)| {de:.1e}, |T(k)-T(Rk)| {dt:.1e} (tol 1e-10); weight change under R {dw:.1e}, \
             |w_s+w_d+w_p-1| {sum_dev:.1e} (tol 1e-12); max w_p at the inversion-fixed fibers {wp:.1e} (tol 1e-12); 6 parameter sets, N = 16"
        ),
    }
}

fn velocity_vs_fd() -> Outcome {
    let p = ModelParams::prototypical();
    let grid = TorusGrid::new(64).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut worst = 0.0f64;
    for _ in 0..50 {
        let k = random_k(&mut rng);
        let v = group_velocity(&p, &grid, k).unwrap();
        let f = fd_velocity(&p, &grid, k, FD_GRADIENT_STEP).unwrap();
        let nv = v[0].hypot(v[1]);
        worst = worst.max((v[0] - f[0]).hypot(v[1] - f[1]) / nv);
    }
    Outcome {
        id: 8,
        name: "analytic group velocity vs central differences",
        pass: worst < 1e-4,
        hard: true,
        detail: format!("max relative error {worst:.2e} (tol 1e-4), step 2pi/1024, 50 uniform random fibers, N = 64"),
    }
}

fn grid_convergence() -> Outcome {
    let p = ModelParams::prototypical();
    let (g32, g64) = (TorusGrid::new(32).unwrap(), TorusGrid::new(64).unwrap());
    let ks = [
        [-PI, 0.0],
        [0.0, -PI],
        [-PI, -PI],
        [-PI / 2.0, 0.0],
        [-PI / 2.0, -PI / 2.0],
        [-3.0 * PI / 4.0, -PI / 4.0],
        [PI / 4.0, PI / 2.0],
        [PI / 8.0, 0.0],
        [-7.0 * PI / 8.0, 3.0 * PI / 8.0],
        [PI / 2.0, -3.0 * PI / 4.0],
    ];
    let mut worst = 0.0f64;
    for k in ks {
        let a = solve_e(&p, &g32, k).unwrap().e;
        let b = solve_e(&p, &g64, k).unwrap().e;
        worst = worst.max((a - b).abs() / p.epsilon);
    }
    Outcome {
        id: 9,
        name: "grid convergence N = 32 vs 64",
        pass: worst < 1e-3,
        hard: true,
        detail: format!("max |E_32 - E_64|/eps = {worst:.2e} (tol 1e-3) at {} fibers", ks.len()),
    }
}

fn localized(p: &ModelParams, grid: &TorusGrid, k: [f64; 2]) -> RealSpacePair {
    let state = solve_e(p, grid, k).unwrap();
    real_space_from_state(p, grid, &state, 24.min(grid.n() / 2)).unwrap()
}

fn combes_thomas() -> Outcome {
    let p = ModelParams::prototypical();
    let grid = TorusGrid::new(32).unwrap();
    let mut ladder = u_ladder(p.epsilon);
    ladder.push(p.u_onsite);
    let g_min = gap_minimum(&p, &grid, &uniform_kgrid(16), &ladder).unwrap();
    let alpha = 0.5 * alpha_gap_limit(p.epsilon, g_min);
    let mut worst = 0.0f64;
    let mut holds = true;
    for k in [[0.0, -PI], [-PI, 0.0]] {
        let state = solve_e(&p, &grid, k).unwrap();
        let pair = localized(&p, &grid, k);
        let c = combes_thomas_certificate(&p, &pair, state.upsilon_hat, alpha, g_min).unwrap();
        worst = worst.max(c.max_ratio);
        holds &= c.holds;
    }
    Outcome {
        id: 10,
        name: "Combes-Thomas certificate",
        pass: holds,
        hard: true,
        detail: format!("alpha = {alpha:.4} (half the limit), g_min = {g_min:.4} eV, max |psi| e^(alpha|x|) / C = {worst:.3e} (must be <= 1), N = 32, window 16"),
    }
}

fn calibration() -> Outcome {
    let p = ModelParams::prototypical();
    let grid = TorusGrid::new(64).unwrap();
    let start = Instant::now();
    let r = calibrate_upsilon(&p, &grid, [-PI, 0.0], 0.90, 1e-10).unwrap();
    let secs = start.elapsed().as_secs_f64();
    let rel = (r.fitted_upsilon_peak - TARGET_PEAK_EV).abs() / TARGET_PEAK_EV;
    Outcome {
        id: 11,
        name: "pair-fraction calibration",
        pass: rel <= 0.10 && secs < 300.0,
        hard: true,
        detail: format!(
            "fitted peak {:.5} eV vs 0.11 eV ({:.1}% off, tol 10%), N = 64 in {secs:.1} s (limit 300 s), u: {}",
            r.fitted_upsilon_peak,
            100.0 * rel,
            p.u_label
        ),
    }
}

fn pairing_symmetry() -> Outcome {
    let p = ModelParams::prototypical();
    let grid = TorusGrid::new(64).unwrap();
    let s = solve_e(&p, &grid, [-PI, 0.0]).unwrap();
    let w = symmetry_decompose(&grid, &s.psi_hat).unwrap();
    Outcome {
        id: 12,
        name: "pairing symmetry at (-pi, 0)",
        pass: (w.w_s - 0.165).abs() <= 0.05 && (w.w_d - 0.835).abs() <= 0.05 && w.w_p < 1e-12,
        hard: true,
        detail: format!(
            "w_s = {:.4} (0.165 +- 0.05), w_d = {:.4} (0.835 +- 0.05), w_p = {:.1e} (< 1e-12), N = 64",
            w.w_s, w.w_d, w.w_p
        ),
    }
}

fn binding_energy() -> Outcome {
    let p = ModelParams::prototypical();
    let grid = TorusGrid::new(64).unwrap();
    let s = solve_e(&p, &grid, [-PI, 0.0]).unwrap();
    let be = BindingEnergies::of(&s);
    let hits = be.matches(1250.0, 0.20);
    let names: Vec<String> = hits.iter().map(|(n, v)| format!("{n} = {v:.0} K")).collect();
    Outcome {
        id: 13,
        name: "binding energy at (-pi, 0)",
        pass: !hits.is_empty(),
        hard: true,
        detail: format!(
            "|E| = {:.0} K, z-E = {:.0} K, b-E = {:.0} K; within 20% of 1250 K: {}; N = 64",
            be.abs_e_k,
            be.z_minus_e_k,
            be.b_minus_e_k,
            if names.is_empty() { "none".to_string() } else { names.join(", ") }
        ),
    }
}

fn fmt_len(x: Option<f64>) -> String {
    x.map(|v| format!("{v:.3} nm")).unwrap_or_else(|| "none".into())
}

fn localization_lengths() -> Outcome {
    let grid = TorusGrid::new(64).unwrap();
    let within = |x: Option<f64>, target: f64| x.is_some_and(|v| (v - target).abs() <= 0.2 * target);
    let mut parts = Vec::new();
    let mut pass = false;
    for p in [ModelParams::prototypical(), ModelParams::prototypical_onsite_only()] {
        let pair = localized(&p, &grid, [0.0, -PI]);
        let ok_density = within(pair.xi_a.xi_density_nm, 1.6) && within(pair.xi_b.xi_density_nm, 2.1);
        let ok_amplitude = within(pair.xi_a.xi_amplitude_nm, 1.6) && within(pair.xi_b.xi_amplitude_nm, 2.1);
        let single_peak = pair.peak_site == [0, 0];
        pass |= (ok_density || ok_amplitude) && single_peak;
        parts.push(format!(
            "[{}] xi_a density {} / amplitude {}, xi_b density {} / amplitude {}, peak at {:?}, rms {:.3} x {:.3} nm",
            p.u_label,
            fmt_len(pair.xi_a.xi_density_nm),
            fmt_len(pair.xi_a.xi_amplitude_nm),
            fmt_len(pair.xi_b.xi_density_nm),
            fmt_len(pair.xi_b.xi_amplitude_nm),
            pair.peak_site,
            pair.rms_nm[0],
            pair.rms_nm[1]
        ));
    }
    Outcome {
        id: 14,
        name: "localization lengths at (0, -pi)",
        pass,
        hard: false,
        detail: format!(
            "targets 1.6 nm and 2.1 nm +- 20% with a single peak at the origin; N = 64, window 24; {}",
            parts.join("; ")
        ),
    }
}

fn main() {
    let checks: [fn() -> Outcome; 14] = [
        dense_vs_characteristic,
        woodbury_vs_dense,
        interpolation_identity,
        scattering_cross_validation,
        bound_channel,
        monotonicity,
        rotation_invariance,
        velocity_vs_fd,
        grid_convergence,
        combes_thomas,
        calibration,
        pairing_symmetry,
        binding_energy,
        localization_lengths,
    ];
    let mut hard_failures = 0;
    for check in checks {
        let start = Instant::now();
        let o = check();
        let verdict = match (o.pass, o.hard) {
            (true, _) => "PASS",
            (false, true) => "FAIL",
            (false, false) => "FAIL (documented discrepancy)",
        };
        println!("[{:02}] {verdict} {}: {} ({:.1} s)", o.id, o.name, o.detail, start.elapsed().as_secs_f64());
        if !o.pass && o.hard {
            hard_failures += 1;
        }
    }
    if hard_failures > 0 {
        println!("acceptance: {hard_failures} hard-gate criteria failed");
        std::process::exit(1);
    }
    println!("acceptance: hard gate passed");
}
