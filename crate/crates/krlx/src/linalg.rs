//! Small dense and Krylov linear-algebra helpers.

use crate::error::{Error, Result};
use nalgebra::{DMatrix, DVector, SymmetricEigen};

extern crate openblas_src;

/// Eigenpairs of a symmetric matrix, ascending. Column `k` of `vectors`
/// belongs to `values[k]`.
pub struct SymEig {
    pub values: Vec<f64>,
    pub vectors: DMatrix<f64>,
}

pub fn sym_eigen(a: DMatrix<f64>) -> Result<SymEig> {
    if a.iter().any(|x| !x.is_finite()) {
        return Err(Error::Eigen("non-finite matrix entry".into()));
    }
    let n = a.nrows();
    let eig = SymmetricEigen::new(a);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = DMatrix::from_fn(n, n, |r, c| eig.eigenvectors[(r, order[c])]);
    Ok(SymEig { values, vectors })
}

/// Dense symmetric tridiagonal matrix with diagonal `a` and off-diagonal `b`.
pub fn tridiag(a: &[f64], b: &[f64]) -> DMatrix<f64> {
    let n = a.len();
    let mut m = DMatrix::zeros(n, n);
    for i in 0..n {
        m[(i, i)] = a[i];
        if i + 1 < n {
            m[(i, i + 1)] = b[i];
            m[(i + 1, i)] = b[i];
        }
    }
    m
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Lanczos recurrence coefficients `(alpha, beta)` for `apply` started at `b`
/// (no reorthogonalisation; adequate for smooth matrix functions).
pub fn lanczos_coeffs<F>(apply: &F, b: &[f64], m: usize) -> (Vec<f64>, Vec<f64>)
where
    F: Fn(&[f64], &mut [f64]),
{
    let n = b.len();
    let nb = norm(b);
    let mut alpha = Vec::with_capacity(m);
    let mut beta = Vec::with_capacity(m);
    if nb == 0.0 {
        return (alpha, beta);
    }
    let mut q_prev = vec![0.0; n];
    let mut q: Vec<f64> = b.iter().map(|x| x / nb).collect();
    let mut w = vec![0.0; n];
    let mut b_prev = 0.0;
    for j in 0..m.min(n) {
        apply(&q, &mut w);
        let a = dot(&w, &q);
        for i in 0..n {
            w[i] -= a * q[i] + b_prev * q_prev[i];
        }
        alpha.push(a);
        let bn = norm(&w);
        if j + 1 == m.min(n) || bn <= 1e-13 * a.abs().max(1.0) {
            break;
        }
        beta.push(bn);
        std::mem::swap(&mut q_prev, &mut q);
        for i in 0..n {
            q[i] = w[i] / bn;
        }
        b_prev = bn;
    }
    beta.truncate(alpha.len().saturating_sub(1));
    (alpha, beta)
}

/// `||phi(A) b||` from `m` Lanczos steps.
pub fn lanczos_fn_norm<F, P>(apply: &F, b: &[f64], m: usize, phi: P) -> Result<f64>
where
    F: Fn(&[f64], &mut [f64]),
    P: Fn(f64) -> f64,
{
    let nb = norm(b);
    if nb == 0.0 {
        return Ok(0.0);
    }
    let (a, bb) = lanczos_coeffs(apply, b, m);
    let e = sym_eigen(tridiag(&a, &bb))?;
    let k = a.len();
    let mut y = vec![0.0; k];
    for (c, &lam) in e.values.iter().enumerate() {
        let w = phi(lam) * e.vectors[(0, c)];
        for r in 0..k {
            y[r] += e.vectors[(r, c)] * w;
        }
    }
    Ok(nb * norm(&y))
}

/// `phi(A) b` by the two-pass Lanczos method (basis regenerated, not stored).
pub fn lanczos_fn_apply<F, P>(apply: &F, b: &[f64], m: usize, phi: P) -> Result<Vec<f64>>
where
    F: Fn(&[f64], &mut [f64]),
    P: Fn(f64) -> f64,
{
    let n = b.len();
    let nb = norm(b);
    if nb == 0.0 {
        return Ok(vec![0.0; n]);
    }
    let (a, bb) = lanczos_coeffs(apply, b, m);
    let e = sym_eigen(tridiag(&a, &bb))?;
    let k = a.len();
    let mut y = vec![0.0; k];
    for (c, &lam) in e.values.iter().enumerate() {
        let w = phi(lam) * e.vectors[(0, c)];
        for r in 0..k {
            y[r] += e.vectors[(r, c)] * w * nb;
        }
    }
    // second pass
    let mut out = vec![0.0; n];
    let mut q_prev = vec![0.0; n];
    let mut q: Vec<f64> = b.iter().map(|x| x / nb).collect();
    let mut w = vec![0.0; n];
    for j in 0..k {
        for i in 0..n {
            out[i] += y[j] * q[i];
        }
        if j + 1 == k {
            break;
        }
        apply(&q, &mut w);
        let bp = if j > 0 { bb[j - 1] } else { 0.0 };
        for i in 0..n {
            w[i] -= a[j] * q[i] + bp * q_prev[i];
        }
        std::mem::swap(&mut q_prev, &mut q);
        for i in 0..n {
            q[i] = w[i] / bb[j];
        }
    }
    Ok(out)
}

/// Conjugate gradients for a symmetric positive definite operator.
pub fn cg<F>(apply: &F, b: &[f64], x: &mut [f64], tol: f64, max_iter: usize) -> Result<usize>
where
    F: Fn(&[f64], &mut [f64]),
{
    let n = b.len();
    let mut r = vec![0.0; n];
    apply(x, &mut r);
    for i in 0..n {
        r[i] = b[i] - r[i];
    }
    let bn = norm(b).max(1e-300);
    let mut p = r.clone();
    let mut ap = vec![0.0; n];
    let mut rr = dot(&r, &r);
    for it in 0..max_iter {
        if rr.sqrt() <= tol * bn {
            return Ok(it);
        }
        apply(&p, &mut ap);
        let alpha = rr / dot(&p, &ap);
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        let rr_new = dot(&r, &r);
        let beta = rr_new / rr;
        rr = rr_new;
        for i in 0..n {
            p[i] = r[i] + beta * p[i];
        }
    }
    if rr.sqrt() <= tol * bn {
        Ok(max_iter)
    } else {
        Err(Error::Eigen(format!(
            "CG stalled at relative residual {:.2e}",
            rr.sqrt() / bn
        )))
    }
}

/// Lowest `k` eigenvalues of a symmetric positive semidefinite operator by
/// shift-invert Lanczos on `(A + shift)^{-1}` with full reorthogonalisation.
/// Returns eigenvalues ascending and the matching Ritz vectors.
pub fn lowest_eigs_shift_invert<F>(
    apply: &F,
    n: usize,
    k: usize,
    shift: f64,
    tol: f64,
) -> Result<(Vec<f64>, Vec<Vec<f64>>)>
where
    F: Fn(&[f64], &mut [f64]) + Sync,
{
    let shifted = |x: &[f64], y: &mut [f64]| {
        apply(x, y);
        for i in 0..x.len() {
            y[i] += shift * x[i];
        }
    };
    let m = (8 * k + 80).min(n);
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(m);
    // deterministic, generic start vector
    let mut q: Vec<f64> = (0..n).map(|i| 1.0 + 0.37 * ((i as f64) * 0.7548).sin()).collect();
    let nq = norm(&q);
    q.iter_mut().for_each(|x| *x /= nq);
    let mut alpha = Vec::new();
    let mut beta = Vec::new();
    for j in 0..m {
        basis.push(q.clone());
        let mut w = vec![0.0; n];
        cg(&shifted, &q, &mut w, tol * 1e-2, 20 * n)?;
        let a = dot(&w, &q);
        alpha.push(a);
        for _ in 0..2 {
            for v in &basis {
                let c = dot(&w, v);
                for i in 0..n {
                    w[i] -= c * v[i];
                }
            }
        }
        let bn = norm(&w);
        let done = bn < 1e-12 || j + 1 == m;
        if j + 1 >= k {
            let e = sym_eigen(tridiag(&alpha, &beta))?;
            let nb = alpha.len();
            // Ritz residual of the k largest θ: β_j |y_last|
            let converged = (nb - k..nb).all(|c| bn * e.vectors[(nb - 1, c)].abs() <= tol * e.values[c].abs());
            if converged || done {
                let mut vals = Vec::with_capacity(k);
                let mut vecs = Vec::with_capacity(k);
                for c in (nb - k..nb).rev() {
                    vals.push(1.0 / e.values[c] - shift);
                    let mut v = vec![0.0; n];
                    for (r, b) in basis.iter().enumerate() {
                        let s = e.vectors[(r, c)];
                        for i in 0..n {
                            v[i] += s * b[i];
                        }
                    }
                    vecs.push(v);
                }
                return Ok((vals, vecs));
            }
        }
        if done {
            break;
        }
        beta.push(bn);
        q = w.iter().map(|x| x / bn).collect();
    }
    Err(Error::Eigen("shift-invert Lanczos did not converge".into()))
}

/// All eigenvalues `(re, im)` of a general real matrix given row-major.
pub fn general_eigenvalues(n: usize, a_row_major: &[f64]) -> Result<Vec<(f64, f64)>> {
    assert_eq!(a_row_major.len(), n * n);
    // LAPACK is column-major: pass the transpose, which has the same spectrum.
    let mut a = a_row_major.to_vec();
    let mut wr = vec![0.0; n];
    let mut wi = vec![0.0; n];
    let mut vl = vec![0.0; 1];
    let mut vr = vec![0.0; 1];
    let mut info = 0;
    let mut query = [0.0];
    unsafe {
        lapack::dgeev(
            b'N', b'N', n as i32, &mut a, n as i32, &mut wr, &mut wi, &mut vl, 1, &mut vr, 1,
            &mut query, -1, &mut info,
        );
    }
    let lwork = (query[0] as usize).max(4 * n);
    let mut work = vec![0.0; lwork];
    unsafe {
        lapack::dgeev(
            b'N', b'N', n as i32, &mut a, n as i32, &mut wr, &mut wi, &mut vl, 1, &mut vr, 1,
            &mut work, lwork as i32, &mut info,
        );
    }
    if info != 0 {
        return Err(Error::Eigen(format!("dgeev info = {info}")));
    }
    Ok(wr.into_iter().zip(wi).collect())
}

/// Singular values of a dense matrix, descending.
pub fn singular_values(a: DMatrix<f64>) -> Vec<f64> {
    let mut s: Vec<f64> = a.singular_values().iter().cloned().collect();
    s.sort_by(|a, b| b.total_cmp(a));
    s
}

pub fn dvec(v: &[f64]) -> DVector<f64> {
    DVector::from_column_slice(v)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lap(n: usize) -> impl Fn(&[f64], &mut [f64]) {
        move |x: &[f64], y: &mut [f64]| {
            for i in 0..n {
                let l = if i > 0 { x[i - 1] } else { 0.0 };
                let r = if i + 1 < n { x[i + 1] } else { 0.0 };
                y[i] = 2.0 * x[i] - l - r + x[i];
            }
        }
    }

    #[test]
    fn lanczos_sqrt_matches_dense() {
        let n = 60;
        let op = lap(n);
        let b: Vec<f64> = (0..n).map(|i| ((i * 7 % 11) as f64) - 5.0).collect();
        let a = tridiag(&vec![3.0; n], &vec![-1.0; n - 1]);
        let e = sym_eigen(a).unwrap();
        let mut exact = vec![0.0; n];
        for c in 0..n {
            let coef: f64 = (0..n).map(|r| e.vectors[(r, c)] * b[r]).sum::<f64>() * e.values[c].sqrt();
            for r in 0..n {
                exact[r] += coef * e.vectors[(r, c)];
            }
        }
        let got = lanczos_fn_apply(&op, &b, 60, f64::sqrt).unwrap();
        let err: f64 = got.iter().zip(&exact).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(err < 1e-8, "err {err}");
        let nn = lanczos_fn_norm(&op, &b, 60, f64::sqrt).unwrap();
        assert!((nn - norm(&exact)).abs() < 1e-8 * nn);
    }

    #[test]
    fn shift_invert_finds_bottom() {
        let n = 200;
        let op = lap(n);
        let (vals, vecs) = lowest_eigs_shift_invert(&op, n, 3, -0.999, 1e-11).unwrap();
        for (k, v) in vals.iter().enumerate() {
            let th = std::f64::consts::PI * (k + 1) as f64 / (n + 1) as f64;
            let exact = 3.0 - 2.0 * th.cos();
            assert!((v - exact).abs() < 1e-9, "{k}: {v} vs {exact}");
        }
        assert_eq!(vecs.len(), 3);
    }

    #[test]
    fn dgeev_rotation() {
        let ev = general_eigenvalues(2, &[0.0, -1.0, 1.0, 0.0]).unwrap();
        assert!(ev.iter().all(|(re, im)| re.abs() < 1e-14 && (im.abs() - 1.0).abs() < 1e-14));
    }
}
