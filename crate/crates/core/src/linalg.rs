//! Dense complex linear algebra helpers: Kronecker products, a partially
//! pivoted LU solve, the scaling-and-squaring Padé matrix exponential and
//! Hermitian spectra.

use nalgebra::DMatrix;
use ndarray::{Array2, Axis};
use num_complex::Complex64 as C64;

use crate::error::{Error, Result};

pub(crate) const ZERO: C64 = C64 { re: 0.0, im: 0.0 };
pub(crate) const ONE: C64 = C64 { re: 1.0, im: 0.0 };

/// Kronecker product `a ⊗ b`; the index of `a` is the major one.
pub fn kron(a: &Array2<C64>, b: &Array2<C64>) -> Array2<C64> {
    let (ar, ac) = a.dim();
    let (br, bc) = b.dim();
    let mut out = Array2::zeros((ar * br, ac * bc));
    for ((i, j), &x) in a.indexed_iter() {
        if x == ZERO {
            continue;
        }
        for ((k, l), &y) in b.indexed_iter() {
            out[[i * br + k, j * bc + l]] = x * y;
        }
    }
    out
}

pub fn identity(n: usize) -> Array2<C64> {
    Array2::from_diag_elem(n, ONE)
}

/// Conjugate transpose.
pub fn dagger(a: &Array2<C64>) -> Array2<C64> {
    a.t().mapv(|x| x.conj())
}

/// Largest entrywise modulus.
pub fn max_abs(a: &Array2<C64>) -> f64 {
    a.iter().fold(0.0, |m, x| m.max(x.norm()))
}

/// Induced 1-norm (maximum absolute column sum).
pub fn one_norm(a: &Array2<C64>) -> f64 {
    a.axis_iter(Axis(1))
        .map(|col| col.iter().map(|x| x.norm()).sum::<f64>())
        .fold(0.0, f64::max)
}

pub fn trace(a: &Array2<C64>) -> C64 {
    a.diag().iter().sum()
}

/// `max |a - a†|` over all entries.
pub fn hermiticity_error(a: &Array2<C64>) -> f64 {
    let n = a.nrows();
    let mut worst: f64 = 0.0;
    for i in 0..n {
        for j in i..n {
            worst = worst.max((a[[i, j]] - a[[j, i]].conj()).norm());
        }
    }
    worst
}

/// Replace `a` by `(a + a†) / 2` in place.
pub fn hermitize(a: &mut Array2<C64>) {
    let n = a.nrows();
    for i in 0..n {
        a[[i, i]].im = 0.0;
        for j in (i + 1)..n {
            let m = 0.5 * (a[[i, j]] + a[[j, i]].conj());
            a[[i, j]] = m;
            a[[j, i]] = m.conj();
        }
    }
}

fn is_diagonal(a: &Array2<C64>) -> bool {
    a.indexed_iter().all(|((i, j), x)| i == j || *x == ZERO)
}

/// Eigenvalues (ascending) of the Hermitian part of `a`.
pub fn hermitian_eigenvalues(a: &Array2<C64>) -> Vec<f64> {
    let mut vals: Vec<f64> = if is_diagonal(a) {
        a.diag().iter().map(|x| x.re).collect()
    } else {
        let n = a.nrows();
        let m = DMatrix::from_fn(n, n, |i, j| 0.5 * (a[[i, j]] + a[[j, i]].conj()));
        m.symmetric_eigenvalues().iter().copied().collect()
    };
    vals.sort_by(f64::total_cmp);
    vals
}

/// Trace norm of a Hermitian matrix, `Σ |λ_i|`.
pub fn trace_norm(a: &Array2<C64>) -> f64 {
    hermitian_eigenvalues(a).iter().map(|x| x.abs()).sum()
}

/// Solve `a x = b` by LU decomposition with partial pivoting.
pub fn solve(a: &Array2<C64>, b: &Array2<C64>) -> Result<Array2<C64>> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(Error::DimensionMismatch { expected: n, found: a.ncols() });
    }
    if b.nrows() != n {
        return Err(Error::DimensionMismatch { expected: n, found: b.nrows() });
    }
    let mut lu = a.to_owned();
    let mut x = b.to_owned();
    let scale = one_norm(a).max(f64::MIN_POSITIVE);
    for k in 0..n {
        let (p, pivot) = (k..n)
            .map(|i| (i, lu[[i, k]].norm()))
            .fold((k, -1.0), |best, c| if c.1 > best.1 { c } else { best });
        if pivot <= scale * 1e-300 || !pivot.is_finite() {
            return Err(Error::Singular);
        }
        if p != k {
            for j in 0..n {
                lu.swap([k, j], [p, j]);
            }
            for j in 0..x.ncols() {
                x.swap([k, j], [p, j]);
            }
        }
        let inv = ONE / lu[[k, k]];
        for i in (k + 1)..n {
            let f = lu[[i, k]] * inv;
            if f == ZERO {
                continue;
            }
            lu[[i, k]] = f;
            for j in (k + 1)..n {
                let u = lu[[k, j]];
                lu[[i, j]] -= f * u;
            }
            for j in 0..x.ncols() {
                let u = x[[k, j]];
                x[[i, j]] -= f * u;
            }
        }
    }
    for k in (0..n).rev() {
        let inv = ONE / lu[[k, k]];
        for j in 0..x.ncols() {
            let mut s = x[[k, j]];
            for i in (k + 1)..n {
                s -= lu[[k, i]] * x[[i, j]];
            }
            x[[k, j]] = s * inv;
        }
    }
    Ok(x)
}

const THETA: [(usize, f64); 4] = [
    (3, 1.495585217958292e-2),
    (5, 2.539398330063230e-1),
    (7, 9.504178996162932e-1),
    (9, 2.097847961257068e0),
];
const THETA_13: f64 = 5.371920351148152;

fn pade_coefficients(m: usize) -> &'static [f64] {
    match m {
        3 => &[120.0, 60.0, 12.0, 1.0],
        5 => &[30240.0, 15120.0, 3360.0, 420.0, 30.0, 1.0],
        7 => &[17297280.0, 8648640.0, 1995840.0, 277200.0, 25200.0, 1512.0, 56.0, 1.0],
        9 => &[
            17643225600.0,
            8821612800.0,
            2075673600.0,
            302702400.0,
            30270240.0,
            2162160.0,
            110880.0,
            3960.0,
            90.0,
            1.0,
        ],
        13 => &[
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
        ],
        _ => unreachable!("no Padé table for degree {m}"),
    }
}

/// Matrix exponential by scaling and squaring with a diagonal Padé
/// approximant (degree 3 to 13 picked from the 1-norm).
pub fn expm(a: &Array2<C64>) -> Result<Array2<C64>> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(Error::DimensionMismatch { expected: n, found: a.ncols() });
    }
    if a.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite);
    }
    let norm = one_norm(a);
    let eye = identity(n);
    let a2 = a.dot(a);

    for &(m, theta) in &THETA {
        if norm <= theta {
            let b = pade_coefficients(m);
            let mut powers = vec![eye.clone(), a2.clone()];
            while powers.len() <= m / 2 {
                let next = powers.last().unwrap().dot(&a2);
                powers.push(next);
            }
            let mut u = Array2::<C64>::zeros((n, n));
            let mut v = Array2::<C64>::zeros((n, n));
            for (k, p) in powers.iter().enumerate() {
                u.scaled_add(C64::from(b[2 * k + 1]), p);
                v.scaled_add(C64::from(b[2 * k]), p);
            }
            let u = a.dot(&u);
            return solve(&(&v - &u), &(&v + &u));
        }
    }

    let s = if norm > THETA_13 { (norm / THETA_13).log2().ceil() as i32 } else { 0 };
    let scale = C64::from(2f64.powi(-s));
    let a1 = a.mapv(|x| x * scale);
    let a2 = a2.mapv(|x| x * scale * scale);
    let a4 = a2.dot(&a2);
    let a6 = a4.dot(&a2);
    let b = pade_coefficients(13);
    let c = |k: usize| C64::from(b[k]);

    let mut inner = a6.mapv(|x| x * c(13));
    inner.scaled_add(c(11), &a4);
    inner.scaled_add(c(9), &a2);
    let mut u = a6.dot(&inner);
    u.scaled_add(c(7), &a6);
    u.scaled_add(c(5), &a4);
    u.scaled_add(c(3), &a2);
    u.scaled_add(c(1), &eye);
    let u = a1.dot(&u);

    let mut inner = a6.mapv(|x| x * c(12));
    inner.scaled_add(c(10), &a4);
    inner.scaled_add(c(8), &a2);
    let mut v = a6.dot(&inner);
    v.scaled_add(c(6), &a6);
    v.scaled_add(c(4), &a4);
    v.scaled_add(c(2), &a2);
    v.scaled_add(c(0), &eye);

    let mut r = solve(&(&v - &u), &(&v + &u))?;
    for _ in 0..s {
        r = r.dot(&r);
    }
    Ok(r)
}
