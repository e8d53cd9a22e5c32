//! Free-space Green convolution for `-Δ` on a cell-centred box.
//!
//! The convolution is evaluated by FFT on the doubled, zero-padded box, so
//! it reproduces the lattice sum over all of `Z^d` restricted to the box
//! support of the density. The kernel at the origin cell, and at its nearest
//! neighbours, is replaced by lattice constants: the origin value removes the
//! `h²` aliasing constant of the lattice sum (Madelung-type constant), and a
//! discrete-Laplacian correction of strength `κ_d Z_d(4) (h/2π)^4` removes the
//! `h^4 k²` term, where `Z_d(4) = Σ'_{m∈Z^d} |m|^{-4}` and `κ_d = (4-d)/d`.
//! The resulting potential is sixth-order accurate for smooth densities.

use crate::exec;
use crate::phasecore::SpatialGrid;
use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use std::f64::consts::PI;
use std::sync::Arc;

/// Σ' |m|^{-4} over Z³.
const Z3_4: f64 = 16.532_315_959_8;
/// Madelung constant of the simple cubic lattice with neutralising background.
const MADELUNG_SC: f64 = 2.837_297_479_5;
/// Σ' |m|^{-4} over Z² = 4 ζ(2) G (Catalan's constant G).
const Z2_4: f64 = 6.026_812_039_6;
/// ln 2 + ½ ln π - 2 ln Γ(1/4), the square-lattice logarithmic constant.
const SQUARE_LOG: f64 = -1.310_532_925_911_509_4;

/// Surface area of the unit sphere `S^{d-1}`.
pub fn sphere_area(d: usize) -> f64 {
    match d {
        1 => 2.0,
        2 => 2.0 * PI,
        _ => 4.0 * PI,
    }
}

/// Continuum Green function of `-Δ` at distance `r > 0`.
pub fn green(d: usize, r: f64) -> f64 {
    match d {
        1 => -0.5 * r,
        2 => -r.ln() / (2.0 * PI),
        _ => 1.0 / (4.0 * PI * r),
    }
}

/// Lattice kernel (without the cell-volume factor) at integer offset `m`.
pub fn lattice_kernel(d: usize, h: f64, m: &[i64; 3]) -> f64 {
    let r2 = (0..d).map(|k| (m[k] * m[k]) as f64).sum::<f64>();
    let (kappa, z4) = match d {
        1 => (3.0, PI.powi(4) / 45.0),
        2 => (1.0, Z2_4),
        _ => (1.0 / 3.0, Z3_4),
    };
    let corr = kappa * z4 * (h / (2.0 * PI)).powi(4) / (h * h * h.powi(d as i32));
    if r2 == 0.0 {
        let centre = match d {
            1 => -h / 12.0,
            2 => -(h.ln() + SQUARE_LOG) / (2.0 * PI),
            _ => MADELUNG_SC / (4.0 * PI * h),
        };
        centre - 2.0 * d as f64 * corr
    } else {
        let base = green(d, h * r2.sqrt());
        if r2 == 1.0 {
            base + corr
        } else {
            base
        }
    }
}

/// In-place n-dimensional FFT over a row-major cube of side `n`.
fn fft_nd(data: &mut [Complex64], d: usize, n: usize, plan: &Arc<dyn Fft<f64>>) {
    let dims = vec![n; d];
    for axis in 0..d {
        exec::for_each_line(data, &dims, axis, |_, buf| plan.process(buf));
    }
}

/// Reusable free-space convolver for one spatial grid.
pub struct FreeSpaceConvolver {
    grid: SpatialGrid,
    pad: usize,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
    pot_hat: Vec<Complex64>,
    grad_hat: Vec<Vec<Complex64>>,
}

impl std::fmt::Debug for FreeSpaceConvolver {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FreeSpaceConvolver").field("grid", &self.grid).finish()
    }
}

impl FreeSpaceConvolver {
    pub fn new(grid: SpatialGrid) -> Self {
        let (d, n, h) = (grid.d, grid.n, grid.h());
        let pad = 2 * n;
        let mut planner = FftPlanner::new();
        let fwd = planner.plan_fft_forward(pad);
        let inv = planner.plan_fft_inverse(pad);
        let vol = grid.cell_volume();
        let total = pad.pow(d as u32);
        // offsets of padded index (wrap-around): i < n -> i, else i - pad
        let offset = move |idx: usize| {
            let mut m = [0i64; 3];
            let mut rem = idx;
            for k in (0..d).rev() {
                let i = (rem % pad) as i64;
                rem /= pad;
                m[k] = if i < n as i64 { i } else { i - pad as i64 };
            }
            m
        };
        let g = move |m: &[i64; 3]| lattice_kernel(d, h, m) * vol;
        let build = |f: &(dyn Fn(&[i64; 3]) -> f64 + Sync)| {
            let mut k: Vec<Complex64> = exec::map(total, |idx| Complex64::new(f(&offset(idx)), 0.0));
            fft_nd(&mut k, d, pad, &fwd);
            k
        };
        let pot_hat = build(&g);
        let grad_hat = (0..d)
            .map(|ax| {
                build(&move |m: &[i64; 3]| {
                    let at = |s: i64| {
                        let mut mm = *m;
                        mm[ax] += s;
                        g(&mm)
                    };
                    (-at(2) + 8.0 * at(1) - 8.0 * at(-1) + at(-2)) / (12.0 * h)
                })
            })
            .collect();
        Self { grid, pad, fwd, inv, pot_hat, grad_hat }
    }

    pub fn grid(&self) -> &SpatialGrid {
        &self.grid
    }

    fn convolve(&self, rho_hat: &[Complex64], k_hat: &[Complex64]) -> Vec<f64> {
        let (d, n, pad) = (self.grid.d, self.grid.n, self.pad);
        let mut prod: Vec<Complex64> = exec::map(rho_hat.len(), |i| rho_hat[i] * k_hat[i]);
        fft_nd(&mut prod, d, pad, &self.inv);
        let scale = 1.0 / prod.len() as f64;
        let len = self.grid.len();
        exec::map(len, |idx| {
            let m = self.grid.unflatten(idx);
            let mut p = 0;
            for k in 0..d {
                p = p * pad + m[k];
            }
            let _ = n;
            prod[p].re * scale
        })
    }

    fn rho_hat(&self, rho: &[f64]) -> Vec<Complex64> {
        let (d, n, pad) = (self.grid.d, self.grid.n, self.pad);
        assert_eq!(rho.len(), self.grid.len());
        let total = pad.pow(d as u32);
        let mut buf: Vec<Complex64> = exec::map(total, |idx| {
            let mut rem = idx;
            let mut src = 0usize;
            let mut mult = 1usize;
            for _ in 0..d {
                let i = rem % pad;
                rem /= pad;
                if i >= n {
                    return Complex64::new(0.0, 0.0);
                }
                src += i * mult;
                mult *= n;
            }
            Complex64::new(rho[src], 0.0)
        });
        fft_nd(&mut buf, d, pad, &self.fwd);
        buf
    }

    /// `U = G ⋆ ρ`.
    pub fn potential(&self, rho: &[f64]) -> Vec<f64> {
        let rh = self.rho_hat(rho);
        self.convolve(&rh, &self.pot_hat)
    }

    /// `∇U` (fourth-order centred differences of the lattice potential).
    pub fn gradient(&self, rho: &[f64]) -> Vec<Vec<f64>> {
        let rh = self.rho_hat(rho);
        self.grad_hat.iter().map(|k| self.convolve(&rh, k)).collect()
    }

    /// Potential and gradient sharing one forward transform.
    pub fn potential_and_gradient(&self, rho: &[f64]) -> (Vec<f64>, Vec<Vec<f64>>) {
        let rh = self.rho_hat(rho);
        let u = self.convolve(&rh, &self.pot_hat);
        let g = self.grad_hat.iter().map(|k| self.convolve(&rh, k)).collect();
        (u, g)
    }
}

/// Sixth-order discrete `-Δu`, evaluated on cells at least 3 from the
/// boundary; other cells are `NaN`.
pub fn neg_laplacian6(grid: &SpatialGrid, u: &[f64]) -> Vec<f64> {
    const C: [f64; 4] = [-49.0 / 18.0, 1.5, -0.15, 1.0 / 90.0];
    let (d, n, h2) = (grid.d, grid.n, grid.h().powi(2));
    let mut out = vec![0.0; u.len()];
    exec::fill(&mut out, |idx| {
        let m = grid.unflatten(idx);
        if (0..d).any(|k| m[k] < 3 || m[k] + 3 >= n) {
            return f64::NAN;
        }
        let mut acc = 0.0;
        for k in 0..d {
            let s = grid.stride(k);
            acc += C[0] * u[idx];
            for (j, c) in C.iter().enumerate().skip(1) {
                acc += c * (u[idx + j * s] + u[idx - j * s]);
            }
        }
        -acc / h2
    });
    out
}
