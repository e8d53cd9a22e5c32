//! The Witten operator `W = -Δ + |∇V|²/4 - ΔV/2`, its spectral gap, and the
//! hypocoercive rate estimate.
//!
//! `W` is discretised with the fourth-order five-point Laplacian (zero
//! extension outside the box), which is symmetric in the flat `L²` product.

use crate::equilibrium::PotentialSpec;
use crate::error::{Error, Result};
use crate::exec;
use crate::linalg;
use crate::phasecore::{SpatialField, SpatialGrid};
use nalgebra::DMatrix;

/// Dense eigensolves are used below this many unknowns.
pub const DENSE_LIMIT: usize = 4000;

/// Potential with derivatives: an analytic part plus an optional sampled
/// part `c·U` differentiated by fourth-order differences.
#[derive(Debug, Clone)]
pub struct WittenPotential {
    pub grid: SpatialGrid,
    pub value: Vec<f64>,
    pub grad: Vec<[f64; 3]>,
    pub laplacian: Vec<f64>,
    pub hessian: Vec<[[f64; 3]; 3]>,
}

fn fd4_derivs(sg: &SpatialGrid, u: &[f64]) -> (Vec<[f64; 3]>, Vec<[[f64; 3]; 3]>) {
    let (d, n, h) = (sg.d, sg.n, sg.h());
    let at = |m: &[usize; 3], off: &[i64; 3]| -> f64 {
        let mut idx = 0usize;
        for k in 0..d {
            let c = m[k] as i64 + off[k];
            let c = c.clamp(0, n as i64 - 1) as usize;
            idx = idx * n + c;
        }
        u[idx]
    };
    let d1 = |m: &[usize; 3], k: usize| {
        let e = |s: i64| {
            let mut o = [0i64; 3];
            o[k] = s;
            o
        };
        if m[k] >= 2 && m[k] + 2 < n {
            (-at(m, &e(2)) + 8.0 * at(m, &e(1)) - 8.0 * at(m, &e(-1)) + at(m, &e(-2))) / (12.0 * h)
        } else if m[k] >= 1 && m[k] + 1 < n {
            (at(m, &e(1)) - at(m, &e(-1))) / (2.0 * h)
        } else {
            0.0
        }
    };
    let grads: Vec<[f64; 3]> = exec::map(u.len(), |i| {
        let m = sg.unflatten(i);
        let mut g = [0.0; 3];
        for k in 0..d {
            g[k] = d1(&m, k);
        }
        g
    });
    let hess = exec::map(u.len(), |i| {
        let m = sg.unflatten(i);
        let mut hm = [[0.0; 3]; 3];
        for a in 0..d {
            for b in 0..d {
                let e = |s: i64| {
                    let mut o = [0i64; 3];
                    o[a] = s;
                    o
                };
                if a == b {
                    hm[a][a] = if m[a] >= 2 && m[a] + 2 < n {
                        (-at(&m, &e(2)) + 16.0 * at(&m, &e(1)) - 30.0 * at(&m, &e(0)) + 16.0 * at(&m, &e(-1))
                            - at(&m, &e(-2)))
                            / (12.0 * h * h)
                    } else if m[a] >= 1 && m[a] + 1 < n {
                        (at(&m, &e(1)) - 2.0 * at(&m, &e(0)) + at(&m, &e(-1))) / (h * h)
                    } else {
                        0.0
                    };
                } else if m[a] >= 1 && m[a] + 1 < n && m[b] >= 1 && m[b] + 1 < n {
                    let mut pp = [0i64; 3];
                    pp[a] = 1;
                    pp[b] = 1;
                    let mut pm = pp;
                    pm[b] = -1;
                    let mut mp = pp;
                    mp[a] = -1;
                    let mut mm = [0i64; 3];
                    mm[a] = -1;
                    mm[b] = -1;
                    hm[a][b] = (at(&m, &pp) - at(&m, &pm) - at(&m, &mp) + at(&m, &mm)) / (4.0 * h * h);
                }
            }
        }
        hm
    });
    (grads, hess)
}

impl WittenPotential {
    /// From an analytic potential, optionally perturbed by `c·U`.
    pub fn new(grid: SpatialGrid, ve: &PotentialSpec, extra: Option<(f64, &SpatialField)>) -> Result<Self> {
        if ve.d != grid.d {
            return Err(Error::Shape("potential dimension differs from grid".into()));
        }
        let n = grid.len();
        let mut value: Vec<f64> = (0..n).map(|i| ve.value(&grid.coords(i))).collect();
        let mut grad: Vec<[f64; 3]> = (0..n).map(|i| ve.grad(&grid.coords(i))).collect();
        let mut hessian: Vec<[[f64; 3]; 3]> = match ve.hessian(&[0.0; 3]) {
            Some(_) => (0..n).map(|i| ve.hessian(&grid.coords(i)).unwrap()).collect(),
            None => fd4_derivs(&grid, &value).1,
        };
        if let Some((c, u)) = extra {
            if u.grid() != &grid || !u.is_scalar() {
                return Err(Error::Shape("perturbation on the wrong grid".into()));
            }
            let (gu, hu) = fd4_derivs(&grid, u.values());
            for i in 0..n {
                value[i] += c * u.values()[i];
                for a in 0..3 {
                    grad[i][a] += c * gu[i][a];
                    for b in 0..3 {
                        hessian[i][a][b] += c * hu[i][a][b];
                    }
                }
            }
        }
        Ok(Self::assemble(grid, value, grad, hessian))
    }

    /// From samples only (all derivatives by finite differences).
    pub fn from_samples(v: &SpatialField) -> Result<Self> {
        if !v.is_scalar() {
            return Err(Error::Shape("potential must be scalar".into()));
        }
        let (grad, hessian) = fd4_derivs(v.grid(), v.values());
        Ok(Self::assemble(*v.grid(), v.values().to_vec(), grad, hessian))
    }

    fn assemble(grid: SpatialGrid, value: Vec<f64>, grad: Vec<[f64; 3]>, hessian: Vec<[[f64; 3]; 3]>) -> Self {
        let laplacian = hessian.iter().map(|h| (0..grid.d).map(|k| h[k][k]).sum()).collect();
        Self { grid, value, grad, laplacian, hessian }
    }

    /// The zeroth-order coefficient `|∇V|²/4 - ΔV/2`.
    pub fn q(&self) -> Vec<f64> {
        let d = self.grid.d;
        (0..self.value.len())
            .map(|i| {
                let g2: f64 = (0..d).map(|k| self.grad[i][k].powi(2)).sum();
                0.25 * g2 - 0.5 * self.laplacian[i]
            })
            .collect()
    }

    /// `C_e = max(sup λ_max(Hess² - (|∇V|²/4 - ΔV/2) Id), 0)`.
    pub fn curvature_constant(&self) -> f64 {
        let d = self.grid.d;
        let q = self.q();
        let mut ce = 0.0f64;
        for i in 0..q.len() {
            let h = DMatrix::from_fn(d, d, |a, b| self.hessian[i][a][b]);
            let m = &h * &h - DMatrix::identity(d, d) * q[i];
            let top = nalgebra::SymmetricEigen::new(m).eigenvalues.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            ce = ce.max(top);
        }
        ce.max(0.0)
    }
}

/// Matrix-free `W` on one grid.
#[derive(Debug, Clone)]
pub struct WittenOperator {
    grid: SpatialGrid,
    q: Vec<f64>,
}

impl WittenOperator {
    pub fn new(p: &WittenPotential) -> Self {
        Self { grid: p.grid, q: p.q() }
    }

    pub fn apply(&self, u: &[f64], out: &mut [f64]) {
        let sg = &self.grid;
        let (d, n, h2) = (sg.d, sg.n, sg.h().powi(2));
        let q = &self.q;
        exec::fill(out, |i| {
            let m = sg.unflatten(i);
            let mut acc = q[i] * u[i];
            for k in 0..d {
                let s = sg.stride(k);
                let get = |o: i64| {
                    let c = m[k] as i64 + o;
                    if c < 0 || c >= n as i64 {
                        0.0
                    } else {
                        u[(i as i64 + o * s as i64) as usize]
                    }
                };
                acc -= (-get(2) + 16.0 * get(1) - 30.0 * u[i] + 16.0 * get(-1) - get(-2)) / (12.0 * h2);
            }
            acc
        });
    }

    pub fn dense(&self) -> DMatrix<f64> {
        let n = self.grid.len();
        let mut a = DMatrix::zeros(n, n);
        let mut e = vec![0.0; n];
        let mut col = vec![0.0; n];
        for c in 0..n {
            e[c] = 1.0;
            self.apply(&e, &mut col);
            e[c] = 0.0;
            for r in 0..n {
                a[(r, c)] = col[r];
            }
        }
        a
    }
}

/// `W u` for a sampled function `u`.
pub fn witten_apply(u: &SpatialField, p: &WittenPotential) -> Result<SpatialField> {
    if u.grid() != &p.grid || !u.is_scalar() {
        return Err(Error::Shape("field and potential grids differ".into()));
    }
    let mut out = vec![0.0; u.values().len()];
    WittenOperator::new(p).apply(u.values(), &mut out);
    SpatialField::scalar(p.grid, out)
}

#[derive(Debug, Clone)]
pub struct SpectralGapReport {
    pub d: usize,
    pub eigenvalues: Vec<f64>,
    pub gap: f64,
    pub kappa0: f64,
    pub ce: f64,
    pub c0: f64,
    pub kappa: f64,
    pub ground_state_error: f64,
    pub dense: bool,
    /// Set when the gap is below ten eigensolver tolerances.
    pub ambiguous: bool,
}

impl SpectralGapReport {
    pub fn csv(&self) -> String {
        let mut s = String::from("index,eigenvalue\n");
        for (i, e) in self.eigenvalues.iter().enumerate() {
            s.push_str(&format!("{i},{e:.12e}\n"));
        }
        s
    }

    pub fn summary(&self) -> String {
        format!(
            "gap={:.10}\nkappa0={}\nCe={:.6}\nC0={:.6}\nkappa={:.6e}\nground_state_error={:.3e}\n",
            self.gap, self.kappa0, self.ce, self.c0, self.kappa, self.ground_state_error
        )
    }
}

const EIG_TOL: f64 = 1e-10;

/// Lowest `k` eigenvalues of `W` plus the derived constants.
pub fn spectral_gap(p: &WittenPotential, k: usize) -> Result<SpectralGapReport> {
    if k < 2 {
        return Err(Error::InvalidParam("need k >= 2 eigenvalues".into()));
    }
    let sg = p.grid;
    let n = sg.len();
    let vmin = p.value.iter().cloned().fold(f64::INFINITY, f64::min);
    let boundary = (0..n)
        .filter(|&i| {
            let m = sg.unflatten(i);
            (0..sg.d).any(|a| m[a] == 0 || m[a] + 1 == sg.n)
        })
        .map(|i| (-(p.value[i] - vmin) / 2.0).exp())
        .fold(0.0, f64::max);
    if boundary > 1e-10 {
        return Err(Error::InvalidParam(format!(
            "box too small: e^(-V/2) = {boundary:.2e} at the boundary (need < 1e-10)"
        )));
    }
    let op = WittenOperator::new(p);
    let dense = n <= DENSE_LIMIT;
    let eigenvalues: Vec<f64> = if dense {
        linalg::sym_eigen(op.dense())?.values.into_iter().take(k).collect()
    } else {
        let apply = |x: &[f64], y: &mut [f64]| op.apply(x, y);
        linalg::lowest_eigs_shift_invert(&apply, n, k, 0.5, EIG_TOL)?.0
    };
    if eigenvalues[0].abs() > 1e-4 {
        return Err(Error::Eigen(format!(
            "ground eigenvalue {:.3e} > 1e-4: grid under-resolved",
            eigenvalues[0]
        )));
    }
    let psi: Vec<f64> = p.value.iter().map(|v| (-(v - vmin) / 2.0).exp()).collect();
    let mut wpsi = vec![0.0; n];
    op.apply(&psi, &mut wpsi);
    let nrm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let ground_state_error = nrm(&wpsi) / nrm(&psi);
    let gap = eigenvalues[1] - eigenvalues[0];
    let kappa0 = gap.min(sg.d as f64 / 2.0);
    let ce = p.curvature_constant();
    let c0 = 64.0 * (8.0 + 3.0 * ce) / kappa0.min(1.0);
    Ok(SpectralGapReport {
        d: sg.d,
        eigenvalues,
        gap,
        kappa0,
        ce,
        c0,
        kappa: kappa0 / c0,
        ground_state_error,
        dense,
        ambiguous: gap < 10.0 * EIG_TOL.max(1e-8),
    })
}

/// Gap of `W∞` (potential `V_e + ε₀U∞`) against the `κ₀/4` bound.
#[derive(Debug, Clone)]
pub struct PerturbedGap {
    pub gap: f64,
    pub passes: bool,
    /// `κ₀/8 - sup(ε₀²|∇U∞|²/4 + |ε₀||ΔU∞|/2)`.
    pub margin: f64,
    pub report: SpectralGapReport,
}

pub fn perturbed_gap_check(
    ve: &PotentialSpec,
    eps0: f64,
    u_inf: &SpatialField,
    base: &SpectralGapReport,
) -> Result<PerturbedGap> {
    let sg = *u_inf.grid();
    let p = WittenPotential::new(sg, ve, Some((eps0, u_inf)))?;
    let k = base.eigenvalues.len();
    let report = spectral_gap(&p, k)?;
    let (gu, hu) = fd4_derivs(&sg, u_inf.values());
    let smallness = (0..sg.len())
        .map(|i| {
            let g2: f64 = (0..sg.d).map(|a| gu[i][a].powi(2)).sum();
            let lap: f64 = (0..sg.d).map(|a| hu[i][a][a]).sum();
            eps0 * eps0 * g2 / 4.0 + eps0.abs() * lap.abs() / 2.0
        })
        .fold(0.0, f64::max);
    Ok(PerturbedGap {
        gap: report.gap,
        passes: report.gap >= base.kappa0 / 4.0,
        margin: base.kappa0 / 8.0 - smallness,
        report,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn symmetric_discretisation() {
        let sg = SpatialGrid::new(2, 6.0, 12).unwrap();
        let p = WittenPotential::new(sg, &PotentialSpec::quartic(2, 0.3, 1.0), None).unwrap();
        let a = WittenOperator::new(&p).dense();
        let asym = (&a - a.transpose()).abs().max();
        assert!(asym < 1e-12);
    }

    #[test]
    fn harmonic_curvature_constant() {
        let sg = SpatialGrid::new(1, 10.0, 64).unwrap();
        let p = WittenPotential::new(sg, &PotentialSpec::quadratic(1, 1.0), None).unwrap();
        // 1 - (x²/4 - 1/2) is largest at the cell nearest the origin
        let x0 = sg.center(32);
        assert!((p.curvature_constant() - (1.5 - x0 * x0 / 4.0)).abs() < 1e-12);
    }
}
