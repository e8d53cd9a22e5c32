//! Velocity Ornstein–Uhlenbeck part `∂_v·(∂_v f + v f)` discretised by
//! Chang–Cooper, advanced per axis by its exact exponential (default) or by
//! backward Euler.

use crate::error::Result;
use crate::exec;
use crate::linalg;
use crate::phasecore::PhaseGrid;
use nalgebra::DMatrix;
use std::sync::{Arc, Mutex};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VelocityScheme {
    /// Exact exponential of the Chang–Cooper generator.
    Exponential,
    /// One backward-Euler Chang–Cooper solve (first order in time).
    BackwardEuler,
}

/// Chang–Cooper weight `δ(w) = 1/w - 1/(e^w - 1)`.
pub fn cc_delta(w: f64) -> f64 {
    if w.abs() < 1e-3 {
        0.5 - w / 12.0 + w.powi(3) / 720.0
    } else {
        1.0 / w - 1.0 / w.exp_m1()
    }
}

/// Generator `L` with `(Lf)_j = (J_{j+½} - J_{j-½})/h` and zero boundary flux.
pub fn cc_generator(g: &PhaseGrid) -> DMatrix<f64> {
    let (n, h) = (g.nv, g.hv());
    let mut l = DMatrix::zeros(n, n);
    for j in 0..n - 1 {
        let vf = g.v_center(j) + 0.5 * h;
        let del = cc_delta(h * vf);
        // J = a f_{j+1} + b f_j
        let a = 1.0 / h + vf * (1.0 - del);
        let b = -1.0 / h + vf * del;
        l[(j, j + 1)] += a / h;
        l[(j, j)] += b / h;
        l[(j + 1, j + 1)] -= a / h;
        l[(j + 1, j)] -= b / h;
    }
    l
}

#[derive(Debug)]
pub(crate) struct OuStep {
    grid: PhaseGrid,
    scheme: VelocityScheme,
    generator: DMatrix<f64>,
    mu: Vec<f64>,
    q: DMatrix<f64>,
    sqrt_m: Vec<f64>,
    cache: Mutex<Vec<(u64, Arc<Vec<f64>>)>>,
}

impl OuStep {
    pub fn new(g: &PhaseGrid, scheme: VelocityScheme) -> Result<Self> {
        let generator = cc_generator(g);
        let n = g.nv;
        let m: Vec<f64> = (0..n).map(|j| (-0.5 * g.v_center(j).powi(2)).exp()).collect();
        let sqrt_m: Vec<f64> = m.iter().map(|x| x.sqrt()).collect();
        // detailed balance: D^{-1/2} L D^{1/2} is symmetric
        let s = DMatrix::from_fn(n, n, |i, j| generator[(i, j)] * sqrt_m[j] / sqrt_m[i]);
        let s = (&s + s.transpose()) * 0.5;
        let eig = linalg::sym_eigen(s)?;
        Ok(Self {
            grid: *g,
            scheme,
            generator,
            mu: eig.values,
            q: eig.vectors,
            sqrt_m,
            cache: Mutex::new(Vec::new()),
        })
    }

    /// Row-major one-axis propagator for step `dt`.
    pub fn matrix(&self, dt: f64) -> Arc<Vec<f64>> {
        let key = dt.to_bits();
        if let Some((_, p)) = self.cache.lock().unwrap().iter().find(|(k, _)| *k == key) {
            return p.clone();
        }
        let n = self.grid.nv;
        let mut p = match self.scheme {
            VelocityScheme::Exponential => {
                let e = DMatrix::from_fn(n, n, |i, j| self.q[(i, j)] * (dt * self.mu[j]).exp());
                let core = e * self.q.transpose();
                DMatrix::from_fn(n, n, |i, j| self.sqrt_m[i] * core[(i, j)] / self.sqrt_m[j])
            }
            VelocityScheme::BackwardEuler => {
                let a = DMatrix::identity(n, n) - &self.generator * dt;
                a.try_inverse().expect("Chang-Cooper backward Euler matrix is an M-matrix")
            }
        };
        for j in 0..n {
            let mut s = 0.0;
            for i in 0..n {
                if p[(i, j)] < 0.0 {
                    p[(i, j)] = 0.0;
                }
                s += p[(i, j)];
            }
            for i in 0..n {
                p[(i, j)] /= s;
            }
        }
        let rm: Vec<f64> = (0..n * n).map(|k| p[(k / n, k % n)]).collect();
        let arc = Arc::new(rm);
        let mut c = self.cache.lock().unwrap();
        if c.len() > 16 {
            c.remove(0);
        }
        c.push((key, arc.clone()));
        arc
    }

    /// Apply the one-axis propagator along every velocity axis.
    pub fn apply(&self, f: &mut [f64], dt: f64) {
        let p = self.matrix(dt);
        let g = &self.grid;
        let dims = g.dims();
        for axis in g.d..2 * g.d {
            apply_axis_matrix(f, &dims, axis, &p);
        }
    }

    /// `Σ_k L_k f` (generator applied along each velocity axis).
    pub fn apply_generator(&self, f: &[f64], out: &mut [f64]) {
        let g = &self.grid;
        let n = g.nv;
        let rm: Vec<f64> = (0..n * n).map(|k| self.generator[(k / n, k % n)]).collect();
        let dims = g.dims();
        out.iter_mut().for_each(|x| *x = 0.0);
        for axis in g.d..2 * g.d {
            let mut tmp = f.to_vec();
            apply_axis_matrix(&mut tmp, &dims, axis, &rm);
            out.iter_mut().zip(&tmp).for_each(|(o, t)| *o += t);
        }
    }
}

/// `f ← P f` along `axis`, with `p` row-major `n×n`.
pub(crate) fn apply_axis_matrix(f: &mut [f64], dims: &[usize], axis: usize, p: &[f64]) {
    let n = dims[axis];
    let inner: usize = dims[axis + 1..].iter().product();
    if inner == 1 {
        // rows of length n: Y = X Pᵀ
        let rows_per = (8192 / n).max(1);
        exec::chunks_mut(f, rows_per * n, |_, chunk| {
            let rows = chunk.len() / n;
            let mut y = vec![0.0; chunk.len()];
            // SAFETY: all slices have the stated extents and do not alias.
            unsafe {
                matrixmultiply::dgemm(
                    rows,
                    n,
                    n,
                    1.0,
                    chunk.as_ptr(),
                    n as isize,
                    1,
                    p.as_ptr(),
                    1,
                    n as isize,
                    0.0,
                    y.as_mut_ptr(),
                    n as isize,
                    1,
                );
            }
            chunk.copy_from_slice(&y);
        });
    } else {
        exec::chunks_mut(f, n * inner, |_, block| {
            let mut y = vec![0.0; block.len()];
            // SAFETY: as above; block is n×inner row-major.
            unsafe {
                matrixmultiply::dgemm(
                    n,
                    n,
                    inner,
                    1.0,
                    p.as_ptr(),
                    n as isize,
                    1,
                    block.as_ptr(),
                    inner as isize,
                    1,
                    0.0,
                    y.as_mut_ptr(),
                    inner as isize,
                    1,
                );
            }
            block.copy_from_slice(&y);
        });
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gaussian_is_in_the_kernel() {
        let g = PhaseGrid::new(1, 4.0, 7.0, 8, 40).unwrap();
        let l = cc_generator(&g);
        let m: Vec<f64> = (0..40).map(|j| (-0.5 * g.v_center(j).powi(2)).exp()).collect();
        for i in 0..40 {
            let s: f64 = (0..40).map(|j| l[(i, j)] * m[j]).sum();
            assert!(s.abs() < 1e-12, "{i} {s}");
            let col: f64 = (0..40).map(|r| l[(r, i)]).sum();
            assert!(col.abs() < 1e-12);
        }
    }

    #[test]
    fn exponential_is_stochastic_and_stationary() {
        let g = PhaseGrid::new(1, 4.0, 6.0, 8, 32).unwrap();
        let ou = OuStep::new(&g, VelocityScheme::Exponential).unwrap();
        let p = ou.matrix(0.05);
        let m: Vec<f64> = (0..32).map(|j| (-0.5 * g.v_center(j).powi(2)).exp()).collect();
        for i in 0..32 {
            let pm: f64 = (0..32).map(|j| p[i * 32 + j] * m[j]).sum();
            assert!((pm - m[i]).abs() < 1e-13);
        }
        assert!(p.iter().all(|&x| x >= 0.0));
    }

    #[test]
    fn axis_matrix_matches_naive() {
        let dims = [3, 4, 5];
        let p: Vec<f64> = (0..16).map(|k| k as f64 * 0.1 - 0.3).collect();
        let f: Vec<f64> = (0..60).map(|k| (k as f64).sin()).collect();
        let mut got = f.clone();
        apply_axis_matrix(&mut got, &dims, 1, &p);
        for a in 0..3 {
            for c in 0..5 {
                for i in 0..4 {
                    let want: f64 = (0..4).map(|j| p[i * 4 + j] * f[a * 20 + j * 5 + c]).sum();
                    assert!((got[a * 20 + i * 5 + c] - want).abs() < 1e-12);
                }
            }
        }
    }
}
