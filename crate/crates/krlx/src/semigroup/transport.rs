//! Conservative phase-space transport `∂_t f + v·∇_x f - ∇V·∇_v f = 0`.
//!
//! Fluxes are reconstructed in `u = f/M` with geometric-mean face weights, and
//! the discrete velocity and force are built from the same faces. A constant
//! `u` then has zero divergence cell by cell, so the discrete Maxwellian is a
//! fixed point. The x-boundaries reflect specularly (ghost value `u(x, -v)`),
//! which keeps mass and the `B`-energy balance; velocity boundaries carry no
//! flux. All axes are advanced together (no dimension splitting) by SSP-RK2.

use crate::error::{Error, Result};
use crate::exec;
use crate::phasecore::{PhaseGrid, SpatialField};

/// Slope reconstruction for the face values.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Limiter {
    /// MUSCL with minmod slopes; positivity preserving under the CFL bound.
    Minmod,
    /// Unlimited centred (Fromm) slopes; linear, used for convergence and
    /// spectral studies.
    Off,
}

/// Velocity-only weights shared by every potential on one grid.
#[derive(Debug, Clone)]
pub(crate) struct VelocityWeights {
    pub m1: Vec<f64>,
    pub mf1: Vec<f64>,
    /// Discrete velocity `ṽ_j = -(m_{j+½} - m_{j-½}) / (h m_j)`.
    pub vt1: Vec<f64>,
    pub mall: Vec<f64>,
    pub inv_mall: Vec<f64>,
    /// Per v-axis `k`: ratio of the face weight above cell `j` to the cell weight.
    pub up_ratio: Vec<f64>,
}

impl VelocityWeights {
    pub fn new(g: &PhaseGrid) -> Self {
        let (nv, hv) = (g.nv, g.hv());
        let mfun = |v: f64| (-0.5 * v * v).exp();
        let vc: Vec<f64> = (0..nv).map(|j| g.v_center(j)).collect();
        let m1: Vec<f64> = vc.iter().map(|&v| mfun(v)).collect();
        let mf1: Vec<f64> = (0..nv - 1).map(|j| (-(vc[j] * vc[j] + vc[j + 1] * vc[j + 1]) / 4.0).exp()).collect();
        let face = |j: i64| -> f64 {
            // face j+½, with analytic ghosts at both ends
            let a = g.v_center(0) + j as f64 * hv;
            let b = a + hv;
            (-(a * a + b * b) / 4.0).exp()
        };
        let vt1: Vec<f64> = (0..nv).map(|j| -(face(j as i64) - face(j as i64 - 1)) / (hv * m1[j])).collect();
        let nvd = g.nvd();
        let d = g.d;
        let mall: Vec<f64> = (0..nvd)
            .map(|jv| {
                let mut p = 1.0;
                let mut r = jv;
                for _ in 0..d {
                    p *= m1[r % nv];
                    r /= nv;
                }
                p
            })
            .collect();
        let inv_mall = mall.iter().map(|m| 1.0 / m).collect();
        let up_ratio = (0..nv).map(|j| if j + 1 < nv { mf1[j] / m1[j] } else { 0.0 }).collect();
        Self { m1, mf1, vt1, mall, inv_mall, up_ratio }
    }
}

#[derive(Debug, Clone)]
pub(crate) struct Transport {
    pub grid: PhaseGrid,
    pub w: Vec<f64>,
    inv_w: Vec<f64>,
    /// Per x-axis: face weight between `ix` and `ix + e_k`; at the far edge
    /// the ghost face.
    wf: Vec<Vec<f64>>,
    /// Per x-axis: ghost face weight below cells with `i_k = 0`.
    wlo: Vec<Vec<f64>>,
    /// Per x-axis: acceleration along `v_k`, `a = -g` with
    /// `g_i = -(w_{i+½} - w_{i-½}) / (h w_i)`.
    acc: Vec<Vec<f64>>,
    vel: std::sync::Arc<VelocityWeights>,
    rate: f64,
}

fn axis_split(dims: &[usize], p: usize) -> (usize, usize, usize) {
    let outer = dims[..p].iter().product();
    let inner = dims[p + 1..].iter().product();
    (outer, dims[p], inner)
}

#[inline]
fn slope(lim: Limiter, a: f64, b: f64) -> f64 {
    match lim {
        Limiter::Off => 0.5 * (a + b),
        Limiter::Minmod => {
            if a * b <= 0.0 {
                0.0
            } else if a > 0.0 {
                a.min(b)
            } else {
                a.max(b)
            }
        }
    }
}

/// Face value at the face between cells `i` and `i+1` on a line with
/// `u(i)` accessor; `c > 0` means flow towards `i+1`.
#[inline]
fn face_value(lim: Limiter, c: f64, i: usize, n: usize, u: impl Fn(usize) -> f64) -> f64 {
    if c > 0.0 {
        let ui = u(i);
        if i == 0 {
            ui
        } else {
            ui + 0.5 * slope(lim, ui - u(i - 1), u(i + 1) - ui)
        }
    } else {
        let ui = u(i + 1);
        if i + 2 >= n {
            ui
        } else {
            ui - 0.5 * slope(lim, ui - u(i), u(i + 2) - ui)
        }
    }
}

impl Transport {
    pub fn new(g: &PhaseGrid, potential: &SpatialField, vel: std::sync::Arc<VelocityWeights>) -> Result<Self> {
        let sg = g.spatial();
        if potential.grid() != &sg || !potential.is_scalar() {
            return Err(Error::Shape("potential must be a scalar field on the spatial grid".into()));
        }
        let v = potential.values();
        let vmin = v.iter().cloned().fold(f64::INFINITY, f64::min);
        let w: Vec<f64> = v.iter().map(|x| (-(x - vmin)).exp()).collect();
        if w.iter().any(|x| !(x.is_finite() && *x > 0.0)) {
            return Err(Error::Domain("potential gives a non-positive weight".into()));
        }
        let inv_w = w.iter().map(|x| 1.0 / x).collect();
        let (d, n, hx) = (g.d, g.nx, g.hx());
        let nxd = sg.len();
        let mut wf = Vec::with_capacity(d);
        let mut wlo = Vec::with_capacity(d);
        let mut acc = Vec::with_capacity(d);
        for k in 0..d {
            let s = sg.stride(k);
            // ghost values of V by cubic extrapolation
            let faces: Vec<f64> = (0..nxd)
                .map(|ix| {
                    let i = (ix / s) % n;
                    let vn = if i + 1 < n { v[ix + s] } else { 3.0 * v[ix] - 3.0 * v[ix - s] + v[ix - 2 * s] };
                    (-0.5 * (v[ix] + vn) + vmin).exp()
                })
                .collect();
            let low: Vec<f64> = (0..nxd)
                .map(|ix| {
                    if (ix / s) % n == 0 {
                        let vg = 3.0 * v[ix] - 3.0 * v[ix + s] + v[ix + 2 * s];
                        (-0.5 * (v[ix] + vg) + vmin).exp()
                    } else {
                        0.0
                    }
                })
                .collect();
            let a: Vec<f64> = (0..nxd)
                .map(|ix| {
                    let lo = if (ix / s) % n > 0 { faces[ix - s] } else { low[ix] };
                    (faces[ix] - lo) / (hx * w[ix])
                })
                .collect();
            wf.push(faces);
            wlo.push(low);
            acc.push(a);
        }
        let mut t = Self { grid: *g, w, inv_w, wf, wlo, acc, vel, rate: 0.0 };
        t.rate = t.compute_rate();
        Ok(t)
    }

    /// `Σ_axes max |c| (W_out/W_cell) / h`; forward Euler is positive for
    /// `1.5·dt·rate ≤ 1` with minmod slopes.
    fn compute_rate(&self) -> f64 {
        let g = &self.grid;
        let sg = g.spatial();
        let (d, n) = (g.d, g.nx);
        let vmax = self.vel.vt1.iter().fold(0.0f64, |a, b| a.max(b.abs()));
        let rv = (0..g.nv)
            .map(|j| {
                let up = self.vel.up_ratio[j];
                let dn = if j > 0 { self.vel.mf1[j - 1] / self.vel.m1[j] } else { 0.0 };
                up.max(dn)
            })
            .fold(0.0, f64::max);
        let mut rate = 0.0;
        for k in 0..d {
            let s = sg.stride(k);
            let rx = (0..sg.len())
                .map(|ix| {
                    let i = (ix / s) % n;
                    let lo = if i > 0 { self.wf[k][ix - s] } else { self.wlo[k][ix] };
                    self.wf[k][ix].max(lo) / self.w[ix]
                })
                .fold(0.0, f64::max);
            let amax = self.acc[k].iter().fold(0.0f64, |a, b| a.max(b.abs()));
            rate += vmax * rx / g.hx() + amax * rv / g.hv();
        }
        rate
    }

    /// Largest stable (and, with minmod, positivity-preserving) substep.
    pub fn max_substep(&self) -> f64 {
        if self.rate == 0.0 {
            f64::INFINITY
        } else {
            1.0 / (1.5 * self.rate)
        }
    }

    /// Transport right-hand side `r = -div(flux)` of `f`.
    pub fn rhs(&self, lim: Limiter, f: &[f64], r: &mut [f64], u: &mut Vec<f64>, flux: &mut Vec<f64>) {
        let g = &self.grid;
        let (d, nvd) = (g.d, g.nvd());
        let len = f.len();
        u.resize(len, 0.0);
        flux.resize(len, 0.0);
        let (inv_w, inv_m) = (&self.inv_w, &self.vel.inv_mall);
        exec::rows_mut(u, nvd, |ix, row| {
            let iw = inv_w[ix];
            let base = ix * nvd;
            for jv in 0..nvd {
                row[jv] = f[base + jv] * iw * inv_m[jv];
            }
        });
        r.iter_mut().for_each(|x| *x = 0.0);
        let dims = g.dims();
        for p in 0..2 * d {
            let (_, n, inner) = axis_split(&dims, p);
            let h = if p < d { g.hx() } else { g.hv() };
            let uu: &[f64] = u;
            if p < d {
                self.x_flux(lim, p, n, inner, uu, flux);
            } else {
                self.v_flux(lim, p - d, n, inner, uu, flux);
            }
            let fl: &[f64] = flux;
            let ih = 1.0 / h;
            if p < d {
                self.x_left_boundary(p, n, inner, uu, r);
            }
            exec::rows_mut(r, inner, |row, out| {
                let i = row % n;
                let base = row * inner;
                if i == 0 {
                    for q in 0..inner {
                        out[q] -= fl[base + q] * ih;
                    }
                } else {
                    for q in 0..inner {
                        out[q] -= (fl[base + q] - fl[base + q - inner]) * ih;
                    }
                }
            });
        }
    }

    fn x_flux(&self, lim: Limiter, k: usize, n: usize, inner: usize, u: &[f64], flux: &mut [f64]) {
        let nvd = self.grid.nvd();
        let nv = self.grid.nv;
        let d = self.grid.d;
        let sx = inner / nvd;
        let wf = &self.wf[k];
        let vt = &self.vel.vt1;
        let mall = &self.vel.mall;
        // v_k index of flat velocity index jv: (jv / nv^(d-1-k)) % nv
        let vstride = nv.pow((d - 1 - k) as u32);
        exec::rows_mut(flux, inner, |row, out| {
            let i = row % n;
            let base = row * inner;
            for rx in 0..sx {
                let wface = wf[row * sx + rx];
                for jv in 0..nvd {
                    let q = rx * nvd + jv;
                    let jk = (jv / vstride) % nv;
                    let c = vt[jk];
                    let uf = if i + 1 == n {
                        // specular reflection: the ghost holds u at -v
                        if c > 0.0 {
                            u[base + q]
                        } else {
                            u[base + q + (nv - 1 - jk) * vstride - jk * vstride]
                        }
                    } else {
                        let at = |ii: usize| u[base + q + ii * inner - i * inner];
                        face_value(lim, c, i, n, at)
                    };
                    out[q] = c * mall[jv] * wface * uf;
                }
            }
        });
    }

    /// Reflected flux through the lower x-boundary face, added to `r`.
    fn x_left_boundary(&self, k: usize, n: usize, inner: usize, u: &[f64], r: &mut [f64]) {
        let (nvd, nv, d) = (self.grid.nvd(), self.grid.nv, self.grid.d);
        let sx = inner / nvd;
        let vstride = nv.pow((d - 1 - k) as u32);
        let (wlo, vt, mall) = (&self.wlo[k], &self.vel.vt1, &self.vel.mall);
        let ih = 1.0 / self.grid.hx();
        exec::rows_mut(r, inner, |row, out| {
            if row % n != 0 {
                return;
            }
            let base = row * inner;
            for rx in 0..sx {
                let wg = wlo[row * sx + rx];
                for jv in 0..nvd {
                    let q = rx * nvd + jv;
                    let jk = (jv / vstride) % nv;
                    let c = vt[jk];
                    let uf = if c < 0.0 { u[base + q] } else { u[base + q + (nv - 1 - jk) * vstride - jk * vstride] };
                    out[q] += c * mall[jv] * wg * uf * ih;
                }
            }
        });
    }

    fn v_flux(&self, lim: Limiter, k: usize, n: usize, inner: usize, u: &[f64], flux: &mut [f64]) {
        let nvd = self.grid.nvd();
        let per_x = nvd / inner;
        let acc = &self.acc[k];
        let (w, mall, ratio) = (&self.w, &self.vel.mall, &self.vel.up_ratio);
        exec::rows_mut(flux, inner, |row, out| {
            let i = row % n;
            if i + 1 == n {
                out.iter_mut().for_each(|x| *x = 0.0);
                return;
            }
            let ix = row / per_x;
            let c = acc[ix];
            let cw = c * w[ix] * ratio[i];
            let base = row * inner;
            let jv0 = (row % per_x) * inner;
            for q in 0..inner {
                let at = |ii: usize| u[base + q + ii * inner - i * inner];
                let uf = face_value(lim, c, i, n, at);
                out[q] = cw * mall[jv0 + q] * uf;
            }
        });
    }

    /// One SSP-RK2 (Heun) step of size `dt`.
    pub fn ssp_step(&self, lim: Limiter, f: &mut [f64], dt: f64, scratch: &mut Scratch) {
        let Scratch { r, f1, u, flux } = scratch;
        r.resize(f.len(), 0.0);
        f1.resize(f.len(), 0.0);
        self.rhs(lim, f, r, u, flux);
        {
            let (rr, ff): (&[f64], &[f64]) = (r, f);
            exec::fill(f1, |i| ff[i] + dt * rr[i]);
        }
        self.rhs(lim, f1, r, u, flux);
        let (rr, ff1): (&[f64], &[f64]) = (r, f1);
        exec::chunks_mut(f, 4096, |c, chunk| {
            let o = c * 4096;
            for (q, x) in chunk.iter_mut().enumerate() {
                *x = 0.5 * *x + 0.5 * (ff1[o + q] + dt * rr[o + q]);
            }
        });
    }
}

#[derive(Default)]
pub(crate) struct Scratch {
    r: Vec<f64>,
    f1: Vec<f64>,
    u: Vec<f64>,
    flux: Vec<f64>,
}
