//! Density marginals, the self-consistent field, and numerical checks of
//! the field bounds used by the fixed-point argument.

use std::f64::consts::PI;

use crate::equilibrium::{initial_potential, PotentialSpec};
use crate::error::{Error, Result};
use crate::exec;
use crate::fit::{loglog_slope, LineFit};
use crate::green::FreeSpaceConvolver;
use crate::phasecore::{DistributionField, PhaseGrid, SpatialField, WeightedOperatorSet};
use crate::semigroup::{apply_axis_matrix, Propagator, PropagatorConfig};

/// `ρ(x) = Σ_v f(x, v) h_v^d`.
pub fn density(f: &DistributionField) -> SpatialField {
    density_of(f.grid(), f.values())
}

pub(crate) fn density_of(g: &PhaseGrid, vals: &[f64]) -> SpatialField {
    let nvd = g.nvd();
    let dv = g.dv_vol();
    let rho = exec::map(g.nxd(), |i| vals[i * nvd..(i + 1) * nvd].iter().sum::<f64>() * dv);
    SpatialField::scalar(g.spatial(), rho).expect("finite density")
}

/// `E = -(1/|S^{d-1}|) x/|x|^d ⋆ ρ = ∇(G_d ⋆ ρ)`.
pub fn field_from_density(rho: &SpatialField) -> SpatialField {
    let conv = FreeSpaceConvolver::new(*rho.grid());
    field_with(&conv, rho)
}

/// As [`field_from_density`] with a prepared convolver.
pub fn field_with(conv: &FreeSpaceConvolver, rho: &SpatialField) -> SpatialField {
    SpatialField::vector(*rho.grid(), conv.gradient(rho.values())).expect("finite field")
}

/// Orthonormal sine basis of the Dirichlet Laplacian on `n` cells (row-major).
fn sine_basis(n: usize) -> Vec<f64> {
    let s = (2.0 / (n + 1) as f64).sqrt();
    let mut p = vec![0.0; n * n];
    for k in 0..n {
        for i in 0..n {
            p[k * n + i] = s * (PI * ((k + 1) * (i + 1)) as f64 / (n + 1) as f64).sin();
        }
    }
    p
}

/// `‖(1-Δ)^{α/2} u‖_{L²}` with the discrete Dirichlet Laplacian (zero
/// extension outside the box), evaluated in its sine eigenbasis.
pub fn h_norm(u: &SpatialField, alpha: f64) -> Result<f64> {
    if !u.is_scalar() {
        return Err(Error::Shape("H^alpha norm of a vector field".into()));
    }
    let g = *u.grid();
    let (n, h) = (g.n, g.h());
    let dims = g.dims();
    let basis = sine_basis(n);
    let mut c = u.values().to_vec();
    for axis in 0..g.d {
        apply_axis_matrix(&mut c, &dims, axis, &basis);
    }
    let mu: Vec<f64> = (0..n).map(|k| (2.0 - 2.0 * (PI * (k + 1) as f64 / (n + 1) as f64).cos()) / (h * h)).collect();
    let s = exec::sum(c.len(), |i| {
        let m = g.unflatten(i);
        let lam = 1.0 + (0..g.d).map(|a| mu[m[a]]).sum::<f64>();
        lam.powf(alpha) * c[i] * c[i]
    });
    Ok((s * g.cell_volume()).sqrt())
}

/// `B`-regularity index that controls `‖E‖_∞`: `1/2 + ε` in d=3, `ε` below.
pub fn field_bound_exponent(d: usize, eps: f64) -> f64 {
    if d == 3 {
        0.5 + eps
    } else {
        eps
    }
}

#[derive(Debug, Clone)]
pub struct FieldBoundReport {
    pub exponent: f64,
    /// Per sample `(‖E₀‖_∞, ‖h₀‖_{B^{s,s}})`, `None` for skipped samples.
    pub samples: Vec<Option<(f64, f64)>>,
    pub max: f64,
    pub min: f64,
    /// Maximum ratio of the same family on a refined grid, when supplied.
    pub refined_max: Option<f64>,
    pub warnings: Vec<String>,
}

impl FieldBoundReport {
    pub fn with_refinement(mut self, refined: &FieldBoundReport) -> Self {
        self.refined_max = Some(refined.max);
        self
    }

    /// `refined_max / max`.
    pub fn refinement_growth(&self) -> Option<f64> {
        self.refined_max.map(|r| r / self.max)
    }

    pub fn csv(&self) -> String {
        let mut s = String::from("sample_id,value,bound,ratio\n");
        for (k, e) in self.samples.iter().enumerate() {
            match e {
                Some((v, b)) => s.push_str(&format!("{k},{v:.10e},{b:.10e},{:.10e}\n", v / b)),
                None => s.push_str(&format!("{k},na,0,na\n")),
            }
        }
        s.push_str(&format!("# exponent={:.4},max={:.6e},min={:.6e}", self.exponent, self.max, self.min));
        if let Some(g) = self.refinement_growth() {
            s.push_str(&format!(",refined_max={:.6e},growth={g:.4}", self.refined_max.unwrap_or(f64::NAN)));
        }
        s.push('\n');
        for w in &self.warnings {
            s.push_str(&format!("# warning: {w}\n"));
        }
        s
    }
}

/// Ratios `‖E₀‖_∞ / ‖h₀‖_{B^{s,s}}` with `E₀` the field of `∫h₀dv` and
/// `s` from [`field_bound_exponent`]. Zero samples are skipped.
pub fn check_field_bounds(
    samples: &[DistributionField],
    eps: f64,
    ops: &WeightedOperatorSet,
) -> Result<FieldBoundReport> {
    if !(eps > 0.0 && eps <= 0.5) {
        return Err(Error::InvalidParam(format!("eps = {eps} outside (0, 1/2]")));
    }
    if samples.is_empty() {
        return Err(Error::InvalidParam("no samples".into()));
    }
    let g = ops.grid();
    let s = field_bound_exponent(g.d, eps);
    let conv = FreeSpaceConvolver::new(g.spatial());
    let mut out = Vec::with_capacity(samples.len());
    let mut warnings = Vec::new();
    let (mut max, mut min) = (0.0f64, f64::INFINITY);
    for (k, h) in samples.iter().enumerate() {
        let norm = ops.frac_norm(h, s, s)?;
        if norm == 0.0 {
            warnings.push(format!("sample {k} has zero norm; skipped"));
            out.push(None);
            continue;
        }
        let e = field_with(&conv, &density(h)).sup_norm();
        max = max.max(e / norm);
        min = min.min(e / norm);
        out.push(Some((e, norm)));
    }
    if min == f64::INFINITY {
        min = 0.0;
    }
    Ok(FieldBoundReport { exponent: s, samples: out, max, min, refined_max: None, warnings })
}

/// `‖∫h dv‖_{H^α} / ‖h‖_{B^{α,α}}` for each sample (`None` when `h = 0`).
pub fn density_sobolev_ratios(
    samples: &[DistributionField],
    alpha: f64,
    ops: &WeightedOperatorSet,
) -> Result<Vec<Option<f64>>> {
    samples
        .iter()
        .map(|h| {
            let b = ops.frac_norm(h, alpha, alpha)?;
            if b == 0.0 {
                return Ok(None);
            }
            Ok(Some(h_norm(&density(h), alpha)? / b))
        })
        .collect()
}

/// Propagator setup for the low-regularity operator `K₀` with potential
/// `V_e + ε₀U₀`, `U₀` the Coulomb potential of `∫f₀dv`.
pub fn low_regularity_config(
    f0: &DistributionField,
    ve: &PotentialSpec,
    eps0: f64,
    dt: f64,
) -> Result<PropagatorConfig> {
    let (u0, _, _) = initial_potential(f0)?;
    let v = ve.sample(&f0.grid().spatial())?.lincomb(1.0, &u0, eps0)?;
    PropagatorConfig::new(*f0.grid(), v, dt)
}

#[derive(Debug, Clone)]
pub struct FieldExponentReport {
    pub times: Vec<f64>,
    /// `‖S₀(t)‖_∞`.
    pub sup: Vec<f64>,
    pub fit: LineFit,
    /// `a/3 - ε`.
    pub target: f64,
    /// `fit.slope ≥ target - 0.15`.
    pub passes: bool,
}

impl FieldExponentReport {
    pub fn csv(&self) -> String {
        let mut s = String::from("t,value,bound,ratio\n");
        for (t, v) in self.times.iter().zip(&self.sup) {
            let b = t.powf(self.target);
            s.push_str(&format!("{t:.6e},{v:.10e},{b:.10e},{:.10e}\n", v / b));
        }
        s.push_str(&format!(
            "# slope={:.4},target={:.4},residual={:.3e},passes={}\n",
            self.fit.slope, self.target, self.fit.residual, self.passes
        ));
        s
    }
}

/// Small-time growth of `S₀(t) = field of ∫(e^{-tK₀} - 1)f₀ dv`. Times
/// default to 10 log-spaced points in `[1e-3, 1]`.
pub fn short_time_field_check(
    f0: &DistributionField,
    a: f64,
    eps: f64,
    k0: &Propagator,
    times: &[f64],
) -> Result<FieldExponentReport> {
    let g = f0.grid();
    if g.d != 3 {
        return Err(Error::Unsupported(format!("short-time field check needs d = 3 (got {})", g.d)));
    }
    if !(a > 0.5 && a < 0.75) {
        return Err(Error::InvalidParam(format!("a = {a} outside (1/2, 3/4)")));
    }
    if k0.grid() != g {
        return Err(Error::Shape("propagator grid differs from f0".into()));
    }
    let times: Vec<f64> = if times.is_empty() {
        (0..10).map(|k| 1e-3 * 1e3f64.powf(k as f64 / 9.0)).collect()
    } else {
        times.to_vec()
    };
    let conv = FreeSpaceConvolver::new(g.spatial());
    let rho0 = density(f0);
    // stream through the times: d=3 snapshots are too large to keep
    let mut sup = Vec::with_capacity(times.len());
    let mut f = f0.values().to_vec();
    let mut t0 = 0.0;
    for &t in &times {
        k0.advance_values(&mut f, t0, t)?;
        t0 = t;
        let drho = density_of(g, &f).sub(&rho0)?;
        sup.push(field_with(&conv, &drho).sup_norm());
    }
    let scale = sup.iter().cloned().fold(0.0, f64::max);
    let usable: Vec<(f64, f64)> =
        times.iter().zip(&sup).filter(|(_, s)| **s > 1e-13 * scale.max(1e-300)).map(|(t, s)| (*t, *s)).collect();
    if usable.len() < 4 {
        return Err(Error::DegenerateFit(format!("{} usable points", usable.len())));
    }
    let (ts, ss): (Vec<f64>, Vec<f64>) = usable.into_iter().unzip();
    let fit = loglog_slope(&ts, &ss)?;
    let target = a / 3.0 - eps;
    Ok(FieldExponentReport { passes: fit.slope >= target - 0.15, times, sup, fit, target })
}
