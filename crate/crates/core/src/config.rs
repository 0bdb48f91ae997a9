//! Flat key-value configuration files.
//!
//! ```text
//! # comment
//! epsilon_eV = 0.266
//! h_b = 0.00575
//! U_eV = 1.461            # or: U = hardcore
//! lattice_spacing_nm = 0.2672
//! u = nearest_neighbor 0.3
//! u_label = nearest-neighbour repulsion
//! p1 = one_range 1
//! p2 = 0 0 1; 2 0 1; -2 0 1; 0 2 1; 0 -2 1
//! upsilon_profile = antinodal_lorentzian
//! upsilon_peak_eV = 0.11
//! upsilon_alpha = 1.0
//! grid_N = 64
//! ```
//!
//! A coupling value is either `zero`, a named shape (`delta v`, `one_range v`,
//! `one_range_even v`, `nearest_neighbor v`) or a `;` separated list of
//! `x y value` triples. The exchange coupling is given either as a lattice
//! table (`upsilon = ...`) or as a profile (`upsilon_profile` plus either
//! `upsilon_peak_eV`/`upsilon_alpha` or explicit `upsilon_term = c1 c2 A alpha`
//! lines).

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::params::{
    nn_label, LatticeCoupling, ModelParams, MomentumProfile, ProfileTerm, Repulsion, Upsilon, ANTINODAL_LORENTZIAN,
    DEFAULT_PROFILE_ALPHA,
};
use crate::TorusPoint;

/// Parsed configuration: model parameters plus optional run settings.
#[derive(Clone, Debug, PartialEq)]
pub struct Config {
    pub params: ModelParams,
    pub grid_n: Option<usize>,
}

const KNOWN_KEYS: &[&str] = &[
    "epsilon_eV",
    "h_b",
    "U_eV",
    "U",
    "lattice_spacing_nm",
    "u",
    "u_label",
    "p1",
    "p2",
    "upsilon",
    "upsilon_profile",
    "upsilon_peak_eV",
    "upsilon_alpha",
    "grid_N",
];

fn perr(line: usize, msg: impl Into<String>) -> Error {
    Error::Parse { line, msg: msg.into() }
}

/// Parses a configuration. Keys missing from the text take the values of
/// [`ModelParams::prototypical`].
pub fn parse_config(text: &str) -> Result<Config> {
    let mut scalars: BTreeMap<String, (usize, String)> = BTreeMap::new();
    let mut terms: Vec<(usize, String)> = Vec::new();

    for (i, raw) in text.lines().enumerate() {
        let lineno = i + 1;
        let line = match raw.find('#') {
            Some(pos) => &raw[..pos],
            None => raw,
        }
        .trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| perr(lineno, "expected `key = value`"))?;
        let key = key.trim();
        let value = value.trim().to_string();
        if key == "upsilon_term" {
            terms.push((lineno, value));
            continue;
        }
        if !KNOWN_KEYS.contains(&key) {
            return Err(perr(lineno, format!("unknown key `{key}`")));
        }
        if scalars.insert(key.to_string(), (lineno, value)).is_some() {
            return Err(perr(lineno, format!("duplicate key `{key}`")));
        }
    }

    let mut params = ModelParams::prototypical();
    let num = |key: &str| -> Result<Option<f64>> {
        match scalars.get(key) {
            None => Ok(None),
            Some((line, v)) => {
                parse_f64(v).map(Some).ok_or_else(|| perr(*line, format!("`{key}`: not a number: `{v}`")))
            }
        }
    };

    if let Some(v) = num("epsilon_eV")? {
        params.epsilon = v;
    }
    if let Some(v) = num("h_b")? {
        params.h_b = v;
    }
    if let Some(v) = num("lattice_spacing_nm")? {
        params.lattice_spacing_nm = v;
    }
    match (scalars.get("U_eV"), scalars.get("U")) {
        (Some((line, _)), Some(_)) => return Err(perr(*line, "give either `U_eV` or `U`, not both")),
        (Some((line, v)), None) => {
            let u = parse_f64(v).ok_or_else(|| perr(*line, format!("`U_eV`: not a number: `{v}`")))?;
            params.u_onsite = Repulsion::Finite(u);
        }
        (None, Some((line, v))) => {
            params.u_onsite = parse_repulsion(v)
                .ok_or_else(|| perr(*line, format!("`U`: expected `hardcore` or a number, got `{v}`")))?;
        }
        (None, None) => {}
    }

    if let Some((line, v)) = scalars.get("u") {
        params.u = parse_coupling(v).map_err(|m| perr(*line, format!("`u`: {m}")))?;
        params.u_label = describe_u(&params.u, v);
    }
    if let Some((_, v)) = scalars.get("u_label") {
        params.u_label = v.clone();
    }
    if let Some((line, v)) = scalars.get("p1") {
        params.p1 = parse_coupling(v).map_err(|m| perr(*line, format!("`p1`: {m}")))?;
    }
    if let Some((line, v)) = scalars.get("p2") {
        params.p2 = parse_coupling(v).map_err(|m| perr(*line, format!("`p2`: {m}")))?;
    }

    let lattice_ups = scalars.get("upsilon");
    let profile = scalars.get("upsilon_profile");
    if let (Some((line, _)), Some(_)) = (lattice_ups, profile) {
        return Err(perr(*line, "give either `upsilon` or `upsilon_profile`, not both"));
    }
    if let Some((line, v)) = lattice_ups {
        if !terms.is_empty() || scalars.contains_key("upsilon_peak_eV") || scalars.contains_key("upsilon_alpha") {
            return Err(perr(*line, "profile keys given together with a lattice `upsilon`"));
        }
        params.upsilon = Upsilon::Lattice(parse_coupling(v).map_err(|m| perr(*line, format!("`upsilon`: {m}")))?);
    } else {
        let form = profile.map(|(_, v)| v.clone()).unwrap_or_else(|| ANTINODAL_LORENTZIAN.to_string());
        let profile_line = profile.map(|(l, _)| *l).unwrap_or(0);
        if !terms.is_empty() {
            if scalars.contains_key("upsilon_peak_eV") || scalars.contains_key("upsilon_alpha") {
                return Err(perr(terms[0].0, "`upsilon_term` lines exclude `upsilon_peak_eV`/`upsilon_alpha`"));
            }
            let mut parsed = Vec::with_capacity(terms.len());
            for (line, t) in &terms {
                let f: Vec<f64> = t
                    .split_whitespace()
                    .map(parse_f64)
                    .collect::<Option<_>>()
                    .ok_or_else(|| perr(*line, "`upsilon_term`: expected four numbers"))?;
                if f.len() != 4 {
                    return Err(perr(*line, "`upsilon_term`: expected `c1 c2 amplitude alpha`"));
                }
                parsed.push(ProfileTerm { center: [f[0], f[1]], amplitude: f[2], alpha: f[3] });
            }
            params.upsilon = Upsilon::Profile(MomentumProfile::from_terms(form, parsed)?);
        } else {
            if form != ANTINODAL_LORENTZIAN {
                return Err(perr(
                    profile_line,
                    format!("unknown profile form `{form}`; named parameters exist only for `{ANTINODAL_LORENTZIAN}`"),
                ));
            }
            let peak = num("upsilon_peak_eV")?.unwrap_or(0.11);
            let alpha = num("upsilon_alpha")?.unwrap_or(DEFAULT_PROFILE_ALPHA);
            params.upsilon = Upsilon::Profile(MomentumProfile::antinodal(peak, alpha)?);
        }
    }

    let grid_n = match scalars.get("grid_N") {
        None => None,
        Some((line, v)) => {
            Some(v.parse::<usize>().map_err(|_| perr(*line, format!("`grid_N`: not a positive integer: `{v}`")))?)
        }
    };

    params.validate()?;
    Ok(Config { params, grid_n })
}

fn describe_u(u: &LatticeCoupling, raw: &str) -> String {
    if u.is_zero() {
        return "onsite-only: u = 0".to_string();
    }
    let nn = LatticeCoupling::nearest_neighbor(u.get((1, 0)));
    if *u == nn {
        return nn_label(u.get((1, 0)));
    }
    format!("custom: {raw}")
}

fn parse_f64(s: &str) -> Option<f64> {
    let v: f64 = s.trim().parse().ok()?;
    v.is_finite().then_some(v)
}

/// Parses `hardcore` or a number of eV.
pub fn parse_repulsion(s: &str) -> Option<Repulsion> {
    let s = s.trim();
    if s.eq_ignore_ascii_case("hardcore") || s.eq_ignore_ascii_case("hard-core") || s.eq_ignore_ascii_case("inf") {
        return Some(Repulsion::HardCore);
    }
    parse_f64(s).map(Repulsion::Finite)
}

/// Parses a coupling value (see module docs).
pub fn parse_coupling(s: &str) -> std::result::Result<LatticeCoupling, String> {
    let s = s.trim();
    if s == "zero" || s.is_empty() {
        return Ok(LatticeCoupling::zero());
    }
    let mut words = s.split_whitespace();
    let head = words.next().unwrap_or_default();
    let named: Option<fn(f64) -> LatticeCoupling> = match head {
        "delta" => Some(LatticeCoupling::delta),
        "one_range" => Some(LatticeCoupling::one_range),
        "one_range_even" => Some(LatticeCoupling::one_range_even),
        "nearest_neighbor" => Some(LatticeCoupling::nearest_neighbor),
        _ => None,
    };
    if let Some(make) = named {
        let rest: Vec<&str> = words.collect();
        if rest.len() != 1 {
            return Err(format!("`{head}` takes exactly one value"));
        }
        let v = parse_f64(rest[0]).ok_or_else(|| format!("not a number: `{}`", rest[0]))?;
        return Ok(make(v));
    }
    let mut entries = BTreeMap::new();
    for triple in s.split(';') {
        let triple = triple.trim();
        if triple.is_empty() {
            continue;
        }
        let parts: Vec<&str> = triple.split_whitespace().collect();
        if parts.len() != 3 {
            return Err(format!("expected `x y value`, got `{triple}`"));
        }
        let x: i64 = parts[0].parse().map_err(|_| format!("bad lattice coordinate `{}`", parts[0]))?;
        let y: i64 = parts[1].parse().map_err(|_| format!("bad lattice coordinate `{}`", parts[1]))?;
        if x.unsigned_abs() > 1 << 20 || y.unsigned_abs() > 1 << 20 {
            return Err(format!("lattice coordinate out of range in `{triple}`"));
        }
        let v = parse_f64(parts[2]).ok_or_else(|| format!("not a number: `{}`", parts[2]))?;
        if entries.insert((x, y), v).is_some() {
            return Err(format!("duplicate lattice point ({x},{y})"));
        }
    }
    LatticeCoupling::new(entries).map_err(|e| e.to_string())
}

/// Parses an angle such as `-pi`, `pi/2`, `0.5pi`, `3*pi/4` or `1.25`.
pub fn parse_angle(s: &str) -> Option<f64> {
    let t: String = s.chars().filter(|c| !c.is_whitespace()).collect::<String>().to_ascii_lowercase();
    if t.is_empty() || t.len() > 64 {
        return None;
    }
    let (neg, body) = match t.strip_prefix('-') {
        Some(r) => (true, r),
        None => (false, t.strip_prefix('+').unwrap_or(&t)),
    };
    if body.starts_with(['+', '-']) {
        return None;
    }
    let (num, den) = match body.split_once('/') {
        Some((a, b)) => (a, Some(parse_f64(b)?)),
        None => (body, None),
    };
    let value = if let Some(coef) = num.strip_suffix("pi") {
        let coef = coef.strip_suffix('*').unwrap_or(coef);
        let c = if coef.is_empty() { 1.0 } else { parse_f64(coef)? };
        c * std::f64::consts::PI
    } else {
        parse_f64(num)?
    };
    let value = match den {
        Some(d) if d != 0.0 => value / d,
        Some(_) => return None,
        None => value,
    };
    let value = if neg { -value } else { value };
    value.is_finite().then_some(value)
}

/// Parses a torus point `a,b` with [`parse_angle`] components.
pub fn parse_point(s: &str) -> Result<TorusPoint> {
    let err = || Error::Validation(format!("cannot parse {s:?} as a point \"k1,k2\""));
    let (a, b) = s.split_once(',').ok_or_else(err)?;
    Ok([parse_angle(a).ok_or_else(err)?, parse_angle(b).ok_or_else(err)?])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_config_is_prototypical() {
        let c = parse_config("# nothing\n\n").unwrap();
        assert_eq!(c.params, ModelParams::prototypical());
        assert_eq!(c.grid_n, None);
    }

    #[test]
    fn canonical_round_trip() {
        for p in [ModelParams::prototypical(), ModelParams::prototypical_onsite_only()] {
            let text = p.to_config_string();
            assert_eq!(parse_config(&text).unwrap().params, p);
        }
        let mut p = ModelParams::prototypical().with_repulsion(Repulsion::HardCore);
        p.upsilon = Upsilon::Lattice(LatticeCoupling::delta(0.11));
        assert_eq!(parse_config(&p.to_config_string()).unwrap().params, p);
    }

    #[test]
    fn full_example() {
        let text = "epsilon_eV = 0.3\nh_b = 0.1\nU = hardcore\nu = zero\np1 = 0 0 1\np2 = one_range_even 0.5\nupsilon = delta 0.2\ngrid_N = 16\n";
        let c = parse_config(text).unwrap();
        assert_eq!(c.params.epsilon, 0.3);
        assert_eq!(c.params.u_onsite, Repulsion::HardCore);
        assert!(c.params.u.is_zero());
        assert_eq!(c.params.u_label, "onsite-only: u = 0");
        assert_eq!(c.params.upsilon, Upsilon::Lattice(LatticeCoupling::delta(0.2)));
        assert_eq!(c.grid_n, Some(16));
    }

    #[test]
    fn errors_carry_line_numbers() {
        let e = parse_config("h_b = 0.1\nbogus = 3\n").unwrap_err();
        assert!(matches!(e, Error::Parse { line: 2, .. }), "{e}");
        assert!(parse_config("h_b = x").is_err());
        assert!(parse_config("h_b = 0.1\nh_b = 0.2").is_err());
        assert!(parse_config("no equals sign").is_err());
        assert!(parse_config("u = 1 0 0.3").is_err());
        assert!(parse_config("U_eV = 1\nU = hardcore").is_err());
        assert!(matches!(parse_config("p2 = one_range 1").unwrap_err(), Error::Validation(_)));
    }

    #[test]
    fn explicit_profile_terms() {
        let text = "upsilon_profile = custom\nupsilon_term = 3.141592653589793 0 0.05 2\nupsilon_term = 0 3.141592653589793 0.05 2\n";
        let c = parse_config(text).unwrap();
        match c.params.upsilon {
            Upsilon::Profile(p) => assert_eq!(p.terms.len(), 2),
            _ => panic!("expected profile"),
        }
        assert!(parse_config("upsilon_profile = custom\nupsilon_term = 3.14159 0 0.05 2\n").is_err());
    }

    #[test]
    fn angles() {
        let pi = std::f64::consts::PI;
        assert_eq!(parse_angle("-pi"), Some(-pi));
        assert_eq!(parse_angle("pi/2"), Some(pi / 2.0));
        assert_eq!(parse_angle(" 3*pi/4 "), Some(3.0 * pi / 4.0));
        assert_eq!(parse_angle("0.5pi"), Some(0.5 * pi));
        assert_eq!(parse_angle("1.25"), Some(1.25));
        assert_eq!(parse_angle("PI"), Some(pi));
        for bad in ["", "pi/0", "x", "--1", "nan", "1/2/3", "inf"] {
            assert_eq!(parse_angle(bad), None, "{bad}");
        }
        assert_eq!(parse_point("-pi,0").unwrap(), [-pi, 0.0]);
        assert!(parse_point("1").is_err());
    }

    proptest::proptest! {
        #[test]
        fn angle_parser_never_panics(s in ".{0,40}") {
            let _ = parse_angle(&s);
            let _ = parse_point(&s);
        }

        #[test]
        fn config_parser_never_panics(s in "[ -~\n]{0,300}") {
            let _ = parse_config(&s);
        }
    }
}
