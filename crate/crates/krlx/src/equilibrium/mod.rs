//! Poisson–Emden equilibrium, the Maxwellian `M∞`, and the initial-data
//! potential `U₀`.
//!
//! Conventions: `U = G_d ⋆ ρ` solves `-ΔU = ρ`, the field is `E = ∇U`, and
//! the effective potential is `V∞ = V_e + ε₀ U∞`.

mod potential;

pub use potential::{MatrixFn, PotentialKind, PotentialSpec, ScalarFn, VectorFn};

use crate::error::{Error, Result};
use crate::exec;
use crate::fieldsolve::density;
use crate::green::{neg_laplacian6, FreeSpaceConvolver};
use crate::phasecore::{DistributionField, PhaseGrid, SpatialField, SpatialGrid};

/// Damping factor θ of the fixed-point iteration.
pub const DEFAULT_THETA: f64 = 0.8;

#[derive(Debug, Clone)]
pub struct PoissonEmdenOptions {
    pub tol: f64,
    pub max_iters: usize,
    pub theta: f64,
    /// Starting iterate (zero when absent).
    pub initial: Option<SpatialField>,
}

impl PoissonEmdenOptions {
    pub fn new(tol: f64, max_iters: usize) -> Self {
        Self { tol, max_iters, theta: DEFAULT_THETA, initial: None }
    }
}

/// One row of the iteration history.
#[derive(Debug, Clone, Copy)]
pub struct IterRecord {
    pub iter: usize,
    pub update: f64,
    pub residual: f64,
    /// `sup|Φ(U_k) - Φ(U_{k-1})| / sup|U_k - U_{k-1}|` of the undamped map.
    pub lipschitz: f64,
}

#[derive(Debug, Clone)]
pub struct EquilibriumState {
    pub eps0: f64,
    pub u_inf: SpatialField,
    pub v_inf: SpatialField,
    pub m_inf: DistributionField,
    pub e_inf: SpatialField,
    pub z: f64,
    pub residual: f64,
    pub iters: usize,
    pub history: Vec<IterRecord>,
    pub ve: PotentialSpec,
}

impl EquilibriumState {
    pub fn grid(&self) -> &PhaseGrid {
        self.m_inf.grid()
    }

    /// Largest Lipschitz ratio observed after the first two iterations.
    pub fn lipschitz_estimate(&self) -> f64 {
        self.history
            .iter()
            .skip(1)
            .map(|r| r.lipschitz)
            .filter(|x| x.is_finite())
            .fold(0.0, f64::max)
    }

    /// CSV: `iter,sup_update,residual`.
    pub fn history_csv(&self) -> String {
        let mut s = String::from("iter,sup_update,residual\n");
        for r in &self.history {
            s.push_str(&format!("{},{:.6e},{:.6e}\n", r.iter, r.update, r.residual));
        }
        s
    }
}

/// Normalised density `e^{-V} / ∫e^{-V}`.
pub fn boltzmann_density(v: &[f64], grid: &SpatialGrid) -> Result<Vec<f64>> {
    let vmin = v.iter().cloned().fold(f64::INFINITY, f64::min);
    let mut rho = vec![0.0; v.len()];
    exec::fill(&mut rho, |i| (-(v[i] - vmin)).exp());
    let z = exec::sum(rho.len(), |i| rho[i]) * grid.cell_volume();
    if !(z > 0.0 && z.is_finite()) {
        return Err(Error::Domain("Boltzmann factor not normalisable".into()));
    }
    rho.iter_mut().for_each(|r| *r /= z);
    Ok(rho)
}

fn sup_diff(a: &[f64], b: &[f64]) -> f64 {
    exec::max(a.len(), |i| (a[i] - b[i]).abs())
}

fn interior_residual(grid: &SpatialGrid, u: &[f64], rho: &[f64]) -> f64 {
    let lap = neg_laplacian6(grid, u);
    exec::max(lap.len(), |i| {
        if lap[i].is_finite() {
            (lap[i] - rho[i]).abs()
        } else {
            0.0
        }
    })
}

pub fn solve_poisson_emden(
    ve: &PotentialSpec,
    eps0: f64,
    grid: &PhaseGrid,
    tol: f64,
    max_iters: usize,
) -> Result<EquilibriumState> {
    solve_poisson_emden_with(ve, eps0, grid, &PoissonEmdenOptions::new(tol, max_iters))
}

pub fn solve_poisson_emden_with(
    ve: &PotentialSpec,
    eps0: f64,
    grid: &PhaseGrid,
    opts: &PoissonEmdenOptions,
) -> Result<EquilibriumState> {
    if eps0.abs() > 1.0 || !eps0.is_finite() {
        return Err(Error::InvalidParam(format!("|eps0| = {} exceeds 1", eps0.abs())));
    }
    if grid.d == 2 && eps0 < 0.0 {
        return Err(Error::Unsupported(
            "attractive coupling (eps0 < 0) in d = 2 is outside the theory".into(),
        ));
    }
    if !(opts.tol > 0.0) || !(opts.theta > 0.0 && opts.theta <= 1.0) || opts.max_iters == 0 {
        return Err(Error::InvalidParam("need tol > 0, theta in (0,1], max_iters > 0".into()));
    }
    let sg = grid.spatial();
    let vev = ve.sample(&sg)?;
    let vev = vev.values();
    let conv = FreeSpaceConvolver::new(sg);
    let n = sg.len();
    let total_v = |u: &[f64]| -> Vec<f64> { (0..n).map(|i| vev[i] + eps0 * u[i]).collect() };

    let mut u = match &opts.initial {
        Some(f) if f.grid() == &sg && f.is_scalar() => f.values().to_vec(),
        Some(_) => return Err(Error::Shape("initial iterate on the wrong grid".into())),
        None => vec![0.0; n],
    };
    let mut history = Vec::new();
    let mut prev: Option<(Vec<f64>, Vec<f64>)> = None; // (U_k, Φ(U_k))
    let mut converged = false;
    let mut iters = 0;
    for k in 1..=opts.max_iters {
        iters = k;
        let rho = boltzmann_density(&total_v(&u), &sg)?;
        let phi = conv.potential(&rho);
        let residual = interior_residual(&sg, &u, &rho);
        let lipschitz = match &prev {
            Some((up, pp)) => {
                let du = sup_diff(&u, up);
                if du > 0.0 {
                    sup_diff(&phi, pp) / du
                } else {
                    0.0
                }
            }
            None => f64::NAN,
        };
        let theta = if eps0 == 0.0 { 1.0 } else { opts.theta };
        let next: Vec<f64> = (0..n).map(|i| (1.0 - theta) * u[i] + theta * phi[i]).collect();
        let update = sup_diff(&next, &u);
        history.push(IterRecord { iter: k, update, residual, lipschitz });
        if !update.is_finite() || update > 1e8 {
            break;
        }
        prev = Some((u, phi));
        u = next;
        if update < opts.tol || eps0 == 0.0 {
            converged = true;
            break;
        }
    }
    if !converged {
        let last = history.last().map(|r| r.update).unwrap_or(f64::NAN);
        return Err(Error::Convergence {
            iters,
            last_update: last,
            history: history.iter().map(|r| r.update).collect(),
            last: SpatialField::scalar(sg, u).ok().map(Box::new),
        });
    }
    // Final sweep: U∞ and E∞ from the same density.
    let rho = boltzmann_density(&total_v(&u), &sg)?;
    let (u_inf, grad) = if eps0 == 0.0 {
        conv.potential_and_gradient(&rho)
    } else {
        let (_, grad) = conv.potential_and_gradient(&rho);
        (u, grad)
    };
    let vinf = total_v(&u_inf);
    let rho_inf = boltzmann_density(&vinf, &sg)?;
    let residual = interior_residual(&sg, &u_inf, &rho_inf);
    let v_inf = SpatialField::scalar(sg, vinf)?;
    let (m_inf, z) = maxwellian(&v_inf, grid)?;
    Ok(EquilibriumState {
        eps0,
        u_inf: SpatialField::scalar(sg, u_inf)?,
        v_inf,
        m_inf,
        e_inf: SpatialField::vector(sg, grad)?,
        z,
        residual,
        iters,
        history,
        ve: ve.clone(),
    })
}

/// `M∞ = e^{-(|v|²/2 + V∞)} / Z` with `Z` the phase-space quadrature.
pub fn maxwellian(v_inf: &SpatialField, grid: &PhaseGrid) -> Result<(DistributionField, f64)> {
    if v_inf.grid() != &grid.spatial() || !v_inf.is_scalar() {
        return Err(Error::Shape("potential does not match the phase grid".into()));
    }
    let vv = v_inf.values();
    let sv = grid.velocity();
    let nvd = grid.nvd();
    let half_v2: Vec<f64> = (0..nvd)
        .map(|j| {
            let c = sv.coords(j);
            0.5 * (c[0] * c[0] + c[1] * c[1] + c[2] * c[2])
        })
        .collect();
    let vmin = vv.iter().cloned().fold(f64::INFINITY, f64::min);
    let kmin = half_v2.iter().cloned().fold(f64::INFINITY, f64::min);
    let shift = vmin + kmin;
    let mut vals = vec![0.0; grid.len()];
    exec::fill(&mut vals, |i| (-(vv[i / nvd] + half_v2[i % nvd] - shift)).exp());
    let s = exec::sum(vals.len(), |i| vals[i]) * grid.cell_volume();
    let z = s * (-shift).exp();
    if !(s > 0.0 && s.is_finite() && z > 0.0 && z.is_finite()) {
        return Err(Error::Domain(format!("normalisation Z = {z} not usable")));
    }
    vals.iter_mut().for_each(|x| *x /= s);
    if vals.iter().any(|&x| x <= 0.0) {
        return Err(Error::Domain("Maxwellian underflows on the grid; shrink the box".into()));
    }
    Ok((DistributionField::new(*grid, vals)?, z))
}

/// Sup norms of `U₀`, `∇U₀`, `∇²U₀` (the latter on interior cells).
#[derive(Debug, Clone, Copy)]
pub struct W2InfReport {
    pub sup_u: f64,
    pub sup_grad: f64,
    pub sup_hess: f64,
}

/// `U₀ = G₃ ⋆ ∫f₀dv` (so `-ΔU₀ = ρ₀`) and `E₀ = ∇U₀`.
pub fn initial_potential(f0: &DistributionField) -> Result<(SpatialField, SpatialField, W2InfReport)> {
    let g = f0.grid();
    if g.d != 3 {
        return Err(Error::Unsupported(format!("initial potential is defined for d = 3 (got {})", g.d)));
    }
    if f0.min() < -1e-12 {
        return Err(Error::Domain(format!("f0 has negative cell {:.3e}", f0.min())));
    }
    let sg = g.spatial();
    let rho = density(f0);
    let conv = FreeSpaceConvolver::new(sg);
    let (u, grad) = conv.potential_and_gradient(rho.values());
    let sup_hess = hessian_sup(&sg, &u);
    let u0 = SpatialField::scalar(sg, u)?;
    let e0 = SpatialField::vector(sg, grad)?;
    let report = W2InfReport { sup_u: u0.sup_norm(), sup_grad: e0.sup_norm(), sup_hess };
    Ok((u0, e0, report))
}

/// Largest entry of the centred-difference Hessian over interior cells.
pub fn hessian_sup(sg: &SpatialGrid, u: &[f64]) -> f64 {
    let (d, n, h) = (sg.d, sg.n, sg.h());
    exec::max(u.len(), |idx| {
        let m = sg.unflatten(idx);
        if (0..d).any(|k| m[k] < 1 || m[k] + 1 >= n) {
            return 0.0;
        }
        let mut best = 0.0f64;
        for a in 0..d {
            let sa = sg.stride(a);
            for b in a..d {
                let sb = sg.stride(b);
                let v = if a == b {
                    (u[idx + sa] - 2.0 * u[idx] + u[idx - sa]) / (h * h)
                } else {
                    (u[idx + sa + sb] - u[idx + sa - sb] - u[idx - sa + sb] + u[idx - sa - sb]) / (4.0 * h * h)
                };
                best = best.max(v.abs());
            }
        }
        best
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn maxwellian_is_normalised_and_shift_invariant() {
        let g = PhaseGrid::new(1, 8.0, 8.0, 32, 32).unwrap();
        let v = SpatialField::from_fn(g.spatial(), |x| 0.5 * x[0] * x[0]);
        let (m, z) = maxwellian(&v, &g).unwrap();
        assert!((m.mass() - 1.0).abs() < 1e-13);
        let v2 = SpatialField::from_fn(g.spatial(), |x| 0.5 * x[0] * x[0] + 7.0);
        let (m2, z2) = maxwellian(&v2, &g).unwrap();
        let err = m.sub(&m2).unwrap().sup_norm();
        assert!(err < 1e-15, "{err}");
        assert!((z2 / z - (-7.0f64).exp()).abs() < 1e-12);
    }

    #[test]
    fn zero_coupling_converges_in_one_iteration() {
        let g = PhaseGrid::new(1, 8.0, 8.0, 64, 16).unwrap();
        let eq = solve_poisson_emden(&PotentialSpec::quadratic(1, 1.0), 0.0, &g, 1e-10, 10).unwrap();
        assert_eq!(eq.iters, 1);
    }

    #[test]
    fn attractive_two_dimensional_rejected() {
        let g = PhaseGrid::new(2, 8.0, 8.0, 16, 16).unwrap();
        let r = solve_poisson_emden(&PotentialSpec::quadratic(2, 1.0), -0.1, &g, 1e-8, 10);
        assert!(matches!(r, Err(Error::Unsupported(_))));
    }

    #[test]
    fn non_convergence_carries_history() {
        let g = PhaseGrid::new(1, 8.0, 8.0, 64, 16).unwrap();
        let r = solve_poisson_emden(&PotentialSpec::quadratic(1, 1.0), 0.5, &g, 1e-14, 3);
        match r {
            Err(Error::Convergence { history, last, .. }) => {
                assert_eq!(history.len(), 3);
                assert!(last.is_some());
            }
            other => panic!("expected convergence failure, got {other:?}"),
        }
    }
}
