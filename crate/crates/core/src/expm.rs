//! Dense matrix exponentials and Chebyshev propagation.

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;

use crate::error::{Error, Result};

fn one_norm(a: &DMatrix<Complex64>) -> f64 {
    a.column_iter().map(|c| c.iter().map(|v| v.norm()).sum::<f64>()).fold(0.0, f64::max)
}

/// exp(A) by Pade-13 scaling and squaring.
pub fn expm(a: &DMatrix<Complex64>) -> Result<DMatrix<Complex64>> {
    if !a.is_square() {
        return Err(Error::DimensionMismatch { expected: a.nrows(), got: a.ncols() });
    }
    const B: [f64; 14] = [
        64764752532480000.0,
        32382376266240000.0,
        7771770303897600.0,
        1187353796428800.0,
        129060195264000.0,
        10559470521600.0,
        670442572800.0,
        33522128640.0,
        1323241920.0,
        40840800.0,
        960960.0,
        16380.0,
        182.0,
        1.0,
    ];
    const THETA13: f64 = 5.371920351148152;
    let n = a.nrows();
    let norm = one_norm(a);
    if !norm.is_finite() {
        return Err(Error::NonConvergence("matrix exponential of a non-finite matrix".into()));
    }
    let s = if norm > THETA13 { (norm / THETA13).log2().ceil() as i32 } else { 0 };
    let a = a * Complex64::new(0.5f64.powi(s), 0.0);
    let id = DMatrix::<Complex64>::identity(n, n);
    let c = |x: f64| Complex64::new(x, 0.0);
    let a2 = &a * &a;
    let a4 = &a2 * &a2;
    let a6 = &a4 * &a2;
    let u_inner = &a6 * (&a6 * c(B[13]) + &a4 * c(B[11]) + &a2 * c(B[9]));
    let u = &a * (u_inner + &a6 * c(B[7]) + &a4 * c(B[5]) + &a2 * c(B[3]) + &id * c(B[1]));
    let v_inner = &a6 * (&a6 * c(B[12]) + &a4 * c(B[10]) + &a2 * c(B[8]));
    let v = v_inner + &a6 * c(B[6]) + &a4 * c(B[4]) + &a2 * c(B[2]) + &id * c(B[0]);
    let p = &v + &u;
    let q = &v - &u;
    let mut r = q.lu().solve(&p).ok_or_else(|| Error::NonConvergence("singular Pade denominator".into()))?;
    for _ in 0..s {
        r = &r * &r;
    }
    Ok(r)
}

/// exp(i t H) for Hermitian H from an eigendecomposition.
pub fn expm_hermitian(h: &DMatrix<Complex64>, t: f64) -> DMatrix<Complex64> {
    let eig = SymmetricEigen::new(h.clone());
    let mut q = eig.eigenvectors.clone();
    for (j, lam) in eig.eigenvalues.iter().enumerate() {
        let ph = Complex64::from_polar(1.0, t * lam);
        for v in q.column_mut(j).iter_mut() {
            *v *= ph;
        }
    }
    q * eig.eigenvectors.adjoint()
}

/// Frobenius distance to the identity of U^dagger U.
pub fn unitarity_error(u: &DMatrix<Complex64>) -> f64 {
    let n = u.nrows();
    (u.adjoint() * u - DMatrix::<Complex64>::identity(n, n)).norm()
}

/// J_0(x), ..., J_kmax(x) by Miller's backward recurrence.
pub fn bessel_j_sequence(x: f64, kmax: usize) -> Vec<f64> {
    let mut out = vec![0.0; kmax + 1];
    if x == 0.0 {
        out[0] = 1.0;
        return out;
    }
    let ax = x.abs();
    let start = kmax.max(ax as usize) + 30 + (40.0 * ax).sqrt() as usize;
    let start = start + start % 2;
    let mut jp1 = 0.0f64;
    let mut j = 1e-300f64;
    let mut vals = vec![0.0; start + 1];
    vals[start] = j;
    let mut norm = 0.0;
    for k in (1..=start).rev() {
        let jm1 = 2.0 * k as f64 / ax * j - jp1;
        jp1 = j;
        j = jm1;
        vals[k - 1] = j;
        if j.abs() > 1e250 {
            for v in vals[k - 1..].iter_mut() {
                *v *= 1e-250;
            }
            jp1 *= 1e-250;
            j *= 1e-250;
        }
    }
    for (k, v) in vals.iter().enumerate() {
        if k == 0 {
            norm += v;
        } else if k % 2 == 0 {
            norm += 2.0 * v;
        }
    }
    for k in 0..=kmax {
        let mut v = vals[k] / norm;
        if x < 0.0 && k % 2 == 1 {
            v = -v;
        }
        out[k] = v;
    }
    out
}

/// exp(-i t H) v for Hermitian H with spectrum in [lo, hi], given only the
/// action of H. The expansion stops once the Bessel coefficients fall below
/// `tol` past the bulk.
pub fn chebyshev_propagate(
    apply: &dyn Fn(&[Complex64]) -> Vec<Complex64>,
    v: &[Complex64],
    t: f64,
    lo: f64,
    hi: f64,
    tol: f64,
) -> Vec<Complex64> {
    let c = 0.5 * (hi + lo);
    let r = (0.5 * (hi - lo)).max(1e-300);
    let x = r * t;
    let kmax = (1.3 * x.abs()) as usize + 60;
    let jk = bessel_j_sequence(x, kmax);
    let scaled =
        |w: &[Complex64]| -> Vec<Complex64> { apply(w).iter().zip(w).map(|(hw, wi)| (hw - wi * c) / r).collect() };
    let mut acc: Vec<Complex64> = v.iter().map(|w| w * jk[0]).collect();
    let mut t_prev: Vec<Complex64> = v.to_vec();
    let mut t_cur = scaled(v);
    let mut phase = Complex64::new(0.0, -1.0);
    for (k, &j) in jk.iter().enumerate().skip(1) {
        let coef = phase * (2.0 * j);
        for (a, tv) in acc.iter_mut().zip(&t_cur) {
            *a += tv * coef;
        }
        if k as f64 > x.abs() && j.abs() < tol {
            break;
        }
        let ht = scaled(&t_cur);
        let next: Vec<Complex64> = ht.iter().zip(&t_prev).map(|(h, p)| h * 2.0 - p).collect();
        t_prev = std::mem::replace(&mut t_cur, next);
        phase *= Complex64::new(0.0, -1.0);
    }
    let g = Complex64::from_polar(1.0, -t * c);
    acc.iter().map(|a| a * g).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    fn random_hermitian(n: usize, seed: u64, scale: f64) -> DMatrix<Complex64> {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let m = DMatrix::<Complex64>::from_fn(n, n, |_, _| {
            Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
        });
        (&m + m.adjoint()) * Complex64::new(0.5 * scale, 0.0)
    }

    #[test]
    fn pade_matches_eigen_exponential() {
        for (seed, scale) in [(1, 0.1), (2, 1.0), (3, 30.0)] {
            let h = random_hermitian(12, seed, scale);
            let a = expm(&(&h * Complex64::new(0.0, 0.7))).unwrap();
            let b = expm_hermitian(&h, 0.7);
            assert!((&a - &b).norm() < 1e-11 * b.norm(), "{seed}");
            assert!(unitarity_error(&a) < 1e-11);
        }
    }

    #[test]
    fn scalar_and_diagonal_cases() {
        let z = DMatrix::<Complex64>::zeros(3, 3);
        assert_eq!(expm(&z).unwrap(), DMatrix::identity(3, 3));
        let d = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![
            Complex64::new(1.0, 0.0),
            Complex64::new(-2.0, 0.5),
        ]));
        let e = expm(&d).unwrap();
        assert!((e[(0, 0)] - Complex64::new(1.0f64.exp(), 0.0)).norm() < 1e-14);
        assert!((e[(1, 1)] - Complex64::new(-2.0, 0.5).exp()).norm() < 1e-15);
        // Nilpotent: exp([[0,1],[0,0]]) = [[1,1],[0,1]].
        let mut nmat = DMatrix::<Complex64>::zeros(2, 2);
        nmat[(0, 1)] = Complex64::new(1.0, 0.0);
        let e = expm(&nmat).unwrap();
        assert!((e[(0, 1)] - Complex64::new(1.0, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn bessel_values() {
        let j = bessel_j_sequence(1.0, 3);
        assert!((j[0] - 0.7651976865579666).abs() < 1e-15);
        assert!((j[1] - 0.4400505857449335).abs() < 1e-15);
        assert!((j[3] - 0.019563353982668406).abs() < 1e-15);
        let j = bessel_j_sequence(50.0, 80);
        assert!((j[0] - 0.05581232766925182).abs() < 1e-13);
        assert!(j[80].abs() < 1e-8);
        let jn = bessel_j_sequence(-1.0, 1);
        assert!((jn[1] + 0.4400505857449335).abs() < 1e-15);
    }

    #[test]
    fn chebyshev_matches_dense() {
        let h = random_hermitian(20, 7, 2.0);
        let eig = SymmetricEigen::new(h.clone());
        let lo = eig.eigenvalues.min() - 0.1;
        let hi = eig.eigenvalues.max() + 0.1;
        let v: Vec<Complex64> = (0..20).map(|i| Complex64::new((i as f64).sin(), 0.3)).collect();
        let apply = |w: &[Complex64]| -> Vec<Complex64> {
            (&h * nalgebra::DVector::from_column_slice(w)).iter().copied().collect()
        };
        for t in [0.0, 0.5, 10.0, -40.0] {
            let got = chebyshev_propagate(&apply, &v, t, lo, hi, 1e-16);
            let want = expm_hermitian(&h, -t) * nalgebra::DVector::from_column_slice(&v);
            let err: f64 = got.iter().zip(want.iter()).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>().sqrt();
            assert!(err < 1e-11, "t={t} err={err}");
        }
    }

    proptest! {
        #[test]
        fn exponential_group_law(seed in 0u64..1000, s in -3.0f64..3.0, t in -3.0f64..3.0) {
            let h = random_hermitian(6, seed, 1.0);
            let i = Complex64::new(0.0, 1.0);
            let a = expm(&(&h * (i * s))).unwrap();
            let b = expm(&(&h * (i * t))).unwrap();
            let ab = expm(&(&h * (i * (s + t)))).unwrap();
            prop_assert!((a * b - ab).norm() < 1e-12);
        }
    }
}
