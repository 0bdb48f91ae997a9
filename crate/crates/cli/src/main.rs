//! `pairfiber` command-line front end.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::info;
use serde_json::{json, Value};

use pairfiber::calibration::{calibrate_upsilon, BindingEnergies};
use pairfiber::config::{parse_config, parse_point, parse_repulsion, Config};
use pairfiber::dispersion::{
    alpha_gap_limit, combes_thomas_certificate, gap_minimum, real_space_from_state, u_ladder, uniform_kgrid,
    RealSpacePair, SweepOptions, FD_HESSIAN_STEP,
};
use pairfiber::grid::TorusGrid;
use pairfiber::io::cache::{sweep_cached, FiberCache};
use pairfiber::io::container::{encode, Payload};
use pairfiber::io::csv::{density_csv, dispersion_csv, grid_function_csv};
use pairfiber::io::manifest::{CacheStats, RunManifest};
use pairfiber::io::{config_fingerprint, write_atomic};
use pairfiber::params::ModelParams;
use pairfiber::scattering::{
    bound_channel_check, exact_propagator, kernel_check, ode_propagator, series_propagator, unbound_channel_diagnostic,
    FiberDynamics, Method, PropagatorRecord,
};
use pairfiber::spectral::solve_e;
use pairfiber::{Error, Result, TorusPoint};

const DEFAULT_GRID_N: usize = 32;
const DEFAULT_SCATTER_GRID_N: usize = 8;
const DEFAULT_WINDOW: usize = 24;

#[derive(Parser, Debug)]
#[command(name = "pairfiber", version, about = "Bound fermion pairs on the square lattice, fiber by fiber")]
struct Cli {
    /// Key-value configuration file; prototypical parameters when absent.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Relative-momentum grid size N (even, >= 4).
    #[arg(long = "grid-N", global = true)]
    grid_n: Option<usize>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out_dir: PathBuf,
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Args, Debug, Clone)]
struct RepulsionArg {
    /// On-site repulsion in eV or `hardcore`; overrides the config.
    #[arg(long = "U", allow_hyphen_values = true)]
    u: Option<String>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Solve one fiber: energy, pair fraction, wavefunction.
    Fiber {
        #[arg(long, allow_hyphen_values = true)]
        k: String,
        #[command(flatten)]
        rep: RepulsionArg,
    },
    /// Dispersion table on a uniform k-grid, with an on-disk fiber cache.
    Sweep {
        /// k-grid points per axis.
        #[arg(long, default_value_t = 16)]
        kdensity: usize,
        #[command(flatten)]
        rep: RepulsionArg,
        /// Skip the finite-difference mass tensor.
        #[arg(long)]
        no_mass: bool,
        /// Cache directory (default: <out-dir>/cache).
        #[arg(long)]
        cache_dir: Option<PathBuf>,
    },
    /// Interaction-picture propagators V_{t,s}; N defaults to 8.
    Scatter {
        #[arg(long, allow_hyphen_values = true)]
        k: String,
        /// Start time in 1/eV; a `/eps` suffix means units of 1/epsilon.
        #[arg(long, default_value = "0", allow_hyphen_values = true)]
        s: String,
        /// End time, same syntax as --s.
        #[arg(long, default_value = "5/eps", allow_hyphen_values = true)]
        t: String,
        #[arg(long, default_value_t = 2000)]
        steps: usize,
        /// Dyson series order (1..=6).
        #[arg(long, default_value_t = 4)]
        order: usize,
        /// Also run the unbound-channel diagnostic up to this time.
        #[arg(long, allow_hyphen_values = true)]
        unbound_tmax: Option<String>,
        /// Write the ODE propagator to a binary container.
        #[arg(long)]
        dump: bool,
        #[command(flatten)]
        rep: RepulsionArg,
    },
    /// Real-space pair density, decay lengths and decay certificate.
    Localize {
        #[arg(long, allow_hyphen_values = true)]
        k: String,
        #[command(flatten)]
        rep: RepulsionArg,
        /// Window half-width in lattice sites (default min(24, N/2)).
        #[arg(long)]
        window: Option<usize>,
        /// Certificate exponent (default half the gap-condition limit).
        #[arg(long)]
        alpha: Option<f64>,
        /// k-grid density used for the gap minimum.
        #[arg(long, default_value_t = 16)]
        gap_kdensity: usize,
    },
    /// Fit the exchange amplitude to a pair fraction.
    Calibrate {
        #[arg(long, default_value_t = 0.90)]
        rho: f64,
        #[arg(long, default_value = "-pi,0", allow_hyphen_values = true)]
        k: String,
        #[arg(long, default_value_t = 1e-10)]
        tol: f64,
        #[command(flatten)]
        rep: RepulsionArg,
    },
}

struct Ctx {
    params: ModelParams,
    grid_n: usize,
    explicit_n: bool,
    out: PathBuf,
}

fn load(cli: &Cli) -> Result<Ctx> {
    let cfg = match &cli.config {
        Some(p) => parse_config(&fs::read_to_string(p)?)?,
        None => Config { params: ModelParams::prototypical(), grid_n: None },
    };
    let explicit_n = cli.grid_n.is_some();
    let grid_n = cli.grid_n.or(cfg.grid_n).unwrap_or(DEFAULT_GRID_N);
    fs::create_dir_all(&cli.out_dir)?;
    Ok(Ctx { params: cfg.params, grid_n, explicit_n, out: cli.out_dir.clone() })
}

fn with_u(params: &ModelParams, rep: &RepulsionArg) -> Result<ModelParams> {
    match &rep.u {
        None => Ok(params.clone()),
        Some(s) => parse_repulsion(s)
            .map(|u| params.with_repulsion(u))
            .ok_or_else(|| Error::Validation(format!("cannot parse U = {s:?}"))),
    }
}

fn parse_time(s: &str, eps: f64) -> Result<f64> {
    let bad = || Error::Validation(format!("cannot parse time {s:?}"));
    let t = s.trim();
    let (num, scale) = match t.strip_suffix("/eps") {
        Some(n) => (n, 1.0 / eps),
        None => (t, 1.0),
    };
    let v: f64 = num.trim().parse().map_err(|_| bad())?;
    let v = v * scale;
    v.is_finite().then_some(v).ok_or_else(bad)
}

fn write_json(dir: &Path, name: &str, value: &Value, manifest: &mut RunManifest) -> Result<()> {
    let text = serde_json::to_string_pretty(value).expect("json value serialises");
    write_atomic(&dir.join(name), format!("{text}\n").as_bytes())?;
    manifest.add_output(name);
    Ok(())
}

fn write_text(dir: &Path, name: &str, text: &str, manifest: &mut RunManifest) -> Result<()> {
    write_atomic(&dir.join(name), text.as_bytes())?;
    manifest.add_output(name);
    Ok(())
}

fn header(cmd: &str, params: &ModelParams, n: usize) -> Value {
    json!({
        "command": cmd,
        "manifest": RunManifest::file_name(cmd),
        "config_fingerprint": config_fingerprint(params, n),
        "grid_n": n,
        "U": params.u_onsite.to_string(),
        "u_label": params.u_label,
    })
}

fn merge(mut base: Value, extra: Value) -> Value {
    if let (Some(b), Value::Object(e)) = (base.as_object_mut(), extra) {
        b.extend(e);
    }
    base
}

fn pair_json(pair: &RealSpacePair) -> Value {
    json!({
        "k": pair.k,
        "window": pair.density.w,
        "peak_site": pair.peak_site,
        "rms_nm": pair.rms_nm,
        "xi_a": pair.xi_a,
        "xi_b": pair.xi_b,
        "combes_certificate": pair.combes_certificate,
    })
}

fn cmd_fiber(ctx: &Ctx, k: TorusPoint, rep: &RepulsionArg) -> Result<()> {
    let params = with_u(&ctx.params, rep)?;
    let grid = TorusGrid::new(ctx.grid_n)?;
    let mut manifest = RunManifest::start("fiber", &params, grid.n());
    let state = solve_e(&params, &grid, k)?;
    let binding = BindingEnergies::of(&state);
    let mut extra = json!({ "state": state.summary(), "binding_energy_K": binding });
    if !state.psi_hat.is_zero() {
        write_text(&ctx.out, "fiber_psi.csv", &grid_function_csv(&grid, &state.psi_hat)?, &mut manifest)?;
        let w = DEFAULT_WINDOW.min(grid.n() / 2);
        match real_space_from_state(&params, &grid, &state, w) {
            Ok(pair) => {
                write_text(&ctx.out, "fiber_density.csv", &density_csv(&pair.density)?, &mut manifest)?;
                extra = merge(extra, json!({ "real_space": pair_json(&pair) }));
            }
            Err(e @ Error::WindowTooSmall(_)) => {
                extra = merge(
                    extra,
                    json!({ "real_space": Value::Null, "note": format!("grid too small for a real-space fit: {e}") }),
                );
            }
            Err(e) => return Err(e),
        }
    } else {
        extra = merge(
            extra,
            json!({ "real_space": Value::Null, "note": "psi_hat = 0: no fermionic component, no density written" }),
        );
    }
    write_json(&ctx.out, "fiber.json", &merge(header("fiber", &params, grid.n()), extra), &mut manifest)?;
    manifest.finish(&ctx.out)?;
    println!("E = {:.12} eV  rho = {:.6}  gap = {:.6} eV", state.e, state.pair_fraction_rho, state.gap);
    Ok(())
}

fn cmd_sweep(ctx: &Ctx, kdensity: usize, rep: &RepulsionArg, no_mass: bool, cache_dir: Option<&Path>) -> Result<()> {
    if kdensity == 0 {
        return Err(Error::Validation("kdensity must be >= 1".into()));
    }
    let params = with_u(&ctx.params, rep)?;
    let grid = TorusGrid::new(ctx.grid_n)?;
    let mut manifest = RunManifest::start("sweep", &params, grid.n());
    let kgrid = uniform_kgrid(kdensity);
    let opts = SweepOptions { velocity: true, mass: !no_mass, hessian_step: FD_HESSIAN_STEP };
    let dir = cache_dir.map(Path::to_path_buf).unwrap_or_else(|| ctx.out.join("cache"));
    let mut cache = FiberCache::open(&dir)?;
    let table = sweep_cached(&params, &grid, &kgrid, &opts, &mut cache)?;
    let total = cache.hits + cache.misses;
    let pct = if total == 0 { 100.0 } else { 100.0 * cache.hits as f64 / total as f64 };
    manifest.cache = Some(CacheStats { hits: cache.hits, misses: cache.misses });
    write_text(&ctx.out, "dispersion.csv", &dispersion_csv(&table)?, &mut manifest)?;
    let min = table.min_energy().map(|r| json!({ "k": r.k, "E_eV": r.e }));
    let extra = json!({
        "kdensity": kdensity,
        "cache": { "hits": cache.hits, "misses": cache.misses, "hit_percent": pct },
        "minimum": min,
        "table": table,
    });
    write_json(&ctx.out, "dispersion.json", &merge(header("sweep", &params, grid.n()), extra), &mut manifest)?;
    manifest.finish(&ctx.out)?;
    println!(
        "{} fibers, {} failures, cache hits {}/{} ({pct:.1}%)",
        table.records.len(),
        table.failures.len(),
        cache.hits,
        total
    );
    Ok(())
}

fn record(
    params: &ModelParams,
    k: TorusPoint,
    s: f64,
    t: f64,
    v: nalgebra::DMatrix<num_complex::Complex64>,
    exact: &nalgebra::DMatrix<num_complex::Complex64>,
    method: Method,
) -> PropagatorRecord {
    PropagatorRecord {
        k,
        u_onsite: params.u_onsite.to_string(),
        s,
        t,
        oracle_error: (&v - exact).norm(),
        unitarity_error: pairfiber::expm::unitarity_error(&v),
        v_ts: v,
        method,
    }
}

#[allow(clippy::too_many_arguments)]
fn cmd_scatter(
    ctx: &Ctx,
    k: TorusPoint,
    s: &str,
    t: &str,
    steps: usize,
    order: usize,
    unbound: Option<&str>,
    dump: bool,
    rep: &RepulsionArg,
) -> Result<()> {
    let params = with_u(&ctx.params, rep)?;
    let n = if ctx.explicit_n { ctx.grid_n } else { DEFAULT_SCATTER_GRID_N };
    let grid = TorusGrid::new(n)?;
    let eps = params.epsilon;
    let (s, t) = (parse_time(s, eps)?, parse_time(t, eps)?);
    let mut manifest = RunManifest::start("scatter", &params, n);
    let d = FiberDynamics::new(&params, &grid, k)?;
    let exact = exact_propagator(&d, s, t)?;
    let ode = record(&params, k, s, t, ode_propagator(&d, s, t, steps)?, &exact, Method::Ode { steps });
    let (series, panels) = series_propagator(&d, s, t, order, None)?;
    let series = record(&params, k, s, t, series, &exact, Method::Series { order, panels });
    let exact_rec = record(&params, k, s, t, exact.clone(), &exact, Method::Exact);
    let (k1, k2) = kernel_check(&params, &grid, k, s, t)?;
    let bound = bound_channel_check(&params, &grid, k, t - s)?;
    let mut extra = json!({
        "s": s,
        "t": t,
        "exact": exact_rec.summary(),
        "ode": ode.summary(),
        "series": series.summary(),
        "series_vs_ode": (&series.v_ts - &ode.v_ts).norm(),
        "kernel_check": { "eigenbasis": [k1.re, k1.im], "two_path": [k2.re, k2.im], "difference": (k1 - k2).norm() },
        "bound_channel_residual": bound,
    });
    if let Some(tm) = unbound {
        let tmax = parse_time(tm, eps)?;
        let report = unbound_channel_diagnostic(&params, &grid, k, tmax, 5, 3)?;
        extra = merge(extra, json!({ "unbound_channel": report }));
    }
    if dump {
        let m = ode.v_ts.nrows();
        let data = (0..m).flat_map(|i| (0..m).map(move |j| (i, j))).map(|(i, j)| ode.v_ts[(i, j)]).collect();
        let bytes = encode(&Payload::ComplexMatrix { rows: m, cols: m, data })?;
        write_atomic(&ctx.out.join("propagator_ode.pfbc"), &bytes)?;
        manifest.add_output("propagator_ode.pfbc");
    }
    write_json(&ctx.out, "scatter.json", &merge(header("scatter", &params, n), extra), &mut manifest)?;
    manifest.finish(&ctx.out)?;
    println!("ode oracle error {:.3e}, series oracle error {:.3e}", ode.oracle_error, series.oracle_error);
    Ok(())
}

fn cmd_localize(
    ctx: &Ctx,
    k: TorusPoint,
    rep: &RepulsionArg,
    window: Option<usize>,
    alpha: Option<f64>,
    gap_kdensity: usize,
) -> Result<()> {
    let params = with_u(&ctx.params, rep)?;
    let grid = TorusGrid::new(ctx.grid_n)?;
    let w = window.unwrap_or(DEFAULT_WINDOW.min(grid.n() / 2));
    let mut manifest = RunManifest::start("localize", &params, grid.n());
    let state = solve_e(&params, &grid, k)?;
    let mut pair = real_space_from_state(&params, &grid, &state, w)?;
    let mut ladder = u_ladder(params.epsilon);
    if !ladder.contains(&params.u_onsite) {
        ladder.push(params.u_onsite);
    }
    let g_min = gap_minimum(&params, &grid, &uniform_kgrid(gap_kdensity.max(1)), &ladder)?;
    let alpha = alpha.unwrap_or(0.5 * alpha_gap_limit(params.epsilon, g_min));
    pair.combes_certificate = Some(combes_thomas_certificate(&params, &pair, state.upsilon_hat, alpha, g_min)?);
    write_text(&ctx.out, "density.csv", &density_csv(&pair.density)?, &mut manifest)?;
    let extra = json!({
        "state": state.summary(),
        "lattice_spacing_nm": params.lattice_spacing_nm,
        "decay_fit": "least squares of ln(density) against |t| along each lattice axis, from the axis maximum, density > 1e-12",
        "real_space": pair_json(&pair),
    });
    write_json(&ctx.out, "localize.json", &merge(header("localize", &params, grid.n()), extra), &mut manifest)?;
    manifest.finish(&ctx.out)?;
    let xi = |v: Option<f64>| v.map(|x| format!("{x:.4} nm")).unwrap_or_else(|| "n/a".into());
    println!(
        "xi_a = {} xi_b = {} (density); certificate holds: {}",
        xi(pair.xi_a.xi_density_nm),
        xi(pair.xi_b.xi_density_nm),
        pair.combes_certificate.as_ref().map(|c| c.holds).unwrap_or(false)
    );
    Ok(())
}

fn cmd_calibrate(ctx: &Ctx, rho: f64, k: TorusPoint, tol: f64, rep: &RepulsionArg) -> Result<()> {
    let params = with_u(&ctx.params, rep)?;
    let grid = TorusGrid::new(ctx.grid_n)?;
    let mut manifest = RunManifest::start("calibrate", &params, grid.n());
    let res = calibrate_upsilon(&params, &grid, k, rho, tol)?;
    let extra = json!({ "calibration": res });
    write_json(&ctx.out, "calibration.json", &merge(header("calibrate", &params, grid.n()), extra), &mut manifest)?;
    manifest.finish(&ctx.out)?;
    println!("upsilon_hat(K) = {:.6} eV for rho = {}", res.fitted_upsilon_peak, res.target_rho);
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    if let Some(t) = cli.threads {
        if t == 0 {
            return Err(Error::Validation("--threads must be >= 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .map_err(|e| Error::Validation(format!("thread pool: {e}")))?;
    }
    let ctx = load(&cli)?;
    info!("grid N = {}, U = {}, u: {}", ctx.grid_n, ctx.params.u_onsite, ctx.params.u_label);
    match &cli.cmd {
        Command::Fiber { k, rep } => cmd_fiber(&ctx, parse_point(k)?, rep),
        Command::Sweep { kdensity, rep, no_mass, cache_dir } => {
            cmd_sweep(&ctx, *kdensity, rep, *no_mass, cache_dir.as_deref())
        }
        Command::Scatter { k, s, t, steps, order, unbound_tmax, dump, rep } => {
            cmd_scatter(&ctx, parse_point(k)?, s, t, *steps, *order, unbound_tmax.as_deref(), *dump, rep)
        }
        Command::Localize { k, rep, window, alpha, gap_kdensity } => {
            cmd_localize(&ctx, parse_point(k)?, rep, *window, *alpha, *gap_kdensity)
        }
        Command::Calibrate { rho, k, tol, rep } => cmd_calibrate(&ctx, *rho, parse_point(k)?, *tol, rep),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
