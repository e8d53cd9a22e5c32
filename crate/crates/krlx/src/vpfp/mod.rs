//! The nonlinear Vlasov–Poisson–Fokker–Planck system: self-consistent time
//! stepping, decay diagnostics toward `M∞`, and the Picard construction.
//!
//! Each step freezes the total potential `V_e + ε₀U` at the half step: a
//! predictor half-transport with the lagged field gives `ρ(t + dt/2)` to
//! third order (the velocity step leaves `ρ` unchanged), and the full
//! Strang step is then taken with the resulting midpoint potential.

mod config;
mod picard;
mod quadrature;

pub use config::FixedPointConfig;
pub use picard::{picard_iterate, PicardMode, PicardOptions, PicardReport};
pub use quadrature::{gauss_legendre, time_weight_integral, time_weight_ratio, time_weight_sweep, QuadratureSweep};

use crate::equilibrium::{EquilibriumState, PotentialSpec};
use crate::error::{Error, Result};
use crate::exec;
use crate::fieldsolve::{density, density_of};
use crate::fit::{exp_rate, LineFit};
use crate::green::FreeSpaceConvolver;
use crate::phasecore::{bnorm, DistributionField, SpatialField, WeightedOperatorSet};
use crate::semigroup::{Limiter, Propagator, PropagatorConfig, Scratch};

#[derive(Debug, Clone)]
pub struct RunOptions {
    pub t_end: f64,
    pub dt: f64,
    /// Spacing of stored snapshots (rounded to a whole number of steps).
    pub snapshot_every: f64,
    pub limiter: Limiter,
}

impl RunOptions {
    pub fn new(t_end: f64, dt: f64) -> Self {
        Self { t_end, dt, snapshot_every: 0.25, limiter: Limiter::Minmod }
    }

    pub fn with_snapshot_every(mut self, every: f64) -> Self {
        self.snapshot_every = every;
        self
    }

    pub fn with_limiter(mut self, limiter: Limiter) -> Self {
        self.limiter = limiter;
        self
    }
}

#[derive(Debug, Clone)]
pub struct Snapshot {
    pub t: f64,
    pub f: DistributionField,
    /// `E(t) = ∇U(t)` with `-ΔU = ρ(t)`.
    pub field: SpatialField,
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub eps0: f64,
    pub snapshots: Vec<Snapshot>,
    pub steps: usize,
    pub warnings: Vec<String>,
}

impl Trajectory {
    pub fn last(&self) -> &Snapshot {
        self.snapshots.last().expect("trajectory has the initial snapshot")
    }

    /// Snapshot closest to `t`.
    pub fn at(&self, t: f64) -> &Snapshot {
        self.snapshots
            .iter()
            .min_by(|a, b| (a.t - t).abs().total_cmp(&(b.t - t).abs()))
            .expect("nonempty trajectory")
    }
}

fn check_coupling(d: usize, eps0: f64) -> Result<()> {
    if !eps0.is_finite() || eps0.abs() > 1.0 {
        return Err(Error::InvalidParam(format!("eps0 = {eps0} must satisfy |eps0| <= 1")));
    }
    if d == 2 && eps0 < 0.0 {
        return Err(Error::Unsupported(format!(
            "eps0 = {eps0} < 0 in d = 2: the attractive two-dimensional case is excluded"
        )));
    }
    Ok(())
}

/// Potential and field of the density of `f`.
fn potential_of(conv: &FreeSpaceConvolver, f: &DistributionField) -> (Vec<f64>, SpatialField) {
    let (u, grad) = conv.potential_and_gradient(density(f).values());
    let e = SpatialField::vector(*conv.grid(), grad).expect("finite field");
    (u, e)
}

fn total_potential(ve: &SpatialField, eps0: f64, u: &[f64]) -> Result<SpatialField> {
    let v: Vec<f64> = ve.values().iter().zip(u).map(|(a, b)| a + eps0 * b).collect();
    SpatialField::scalar(*ve.grid(), v)
}

/// Run the nonlinear system from `f0` to `opts.t_end`.
pub fn vpfp_run(f0: &DistributionField, ve: &PotentialSpec, eps0: f64, opts: &RunOptions) -> Result<Trajectory> {
    let g = *f0.grid();
    check_coupling(g.d, eps0)?;
    if !(opts.t_end > 0.0 && opts.dt > 0.0) {
        return Err(Error::InvalidParam("t_end and dt must be positive".into()));
    }
    if f0.min() < -1e-12 {
        return Err(Error::Domain(format!("f0 has negative cell {:.3e}", f0.min())));
    }
    let mut warnings = Vec::new();
    let f0 = if (f0.mass() - 1.0).abs() > 1e-12 {
        warnings.push(format!("initial mass {:.12} renormalised to 1", f0.mass()));
        f0.scaled(1.0 / f0.mass())
    } else {
        f0.clone()
    };
    let sg = g.spatial();
    let ve_s = ve.sample(&sg)?;
    let base = Propagator::new(&PropagatorConfig::new(g, ve_s.clone(), opts.dt)?.with_limiter(opts.limiter))?;
    let conv = FreeSpaceConvolver::new(sg);
    // snapshot times k·every (and t_end), each segment in whole steps
    let every = opts.snapshot_every.clamp(opts.dt, opts.t_end);
    let segments = (opts.t_end / every - 1e-9).ceil().max(1.0) as usize;

    let (mut u, e0) = potential_of(&conv, &f0);
    let mut snapshots = vec![Snapshot { t: 0.0, f: f0.clone(), field: e0 }];
    let mut f = f0.into_values();
    let mut scratch = Scratch::default();
    let mut steps = 0;
    for seg in 0..segments {
        let (ta, tb) = (seg as f64 * every, ((seg + 1) as f64 * every).min(opts.t_end));
        let n = ((tb - ta) / opts.dt - 1e-9).ceil().max(1.0) as usize;
        let h = (tb - ta) / n as f64;
        for _ in 0..n {
            if eps0 == 0.0 {
                base.step_values(&mut f, h);
                continue;
            }
            let lagged = base.with_potential(&total_potential(&ve_s, eps0, &u)?)?;
            let mut pred = f.clone();
            lagged.transport(&mut pred, 0.5 * h, &mut scratch);
            let (u_half, _) = potential_of(&conv, &DistributionField::from_raw(g, pred));
            let mid = base.with_potential(&total_potential(&ve_s, eps0, &u_half)?)?;
            mid.step_values(&mut f, h);
            u = conv.potential(density_of(&g, &f).values());
        }
        steps += n;
        if exec::max(f.len(), |i| if f[i].is_finite() { 0.0 } else { 1.0 }) > 0.0 {
            return Err(Error::NonFinite { t: tb });
        }
        let field = DistributionField::from_raw(g, f);
        let (un, e) = potential_of(&conv, &field);
        u = un;
        snapshots.push(Snapshot { t: tb, f: field.clone(), field: e });
        f = field.into_values();
    }
    Ok(Trajectory { eps0, snapshots, steps, warnings })
}

/// `H(f, M) = ∫ f ln(f/M)` with `0 ln 0 = 0` (round-off negatives count as 0).
pub fn relative_entropy(f: &DistributionField, m: &DistributionField) -> Result<f64> {
    f.check_same_grid(m)?;
    let (a, b) = (f.values(), m.values());
    let s = exec::sum(a.len(), |i| if a[i] > 0.0 { a[i] * (a[i] / b[i]).ln() } else { 0.0 });
    Ok(s * f.grid().cell_volume())
}

/// Admissible `B`-norm drift of the nonlinear run from `M∞` per unit time.
pub const STATIONARY_DRIFT: f64 = 1e-5;

#[derive(Debug, Clone)]
pub struct RateFit {
    /// Decay rate `λ` of `e^{-λt}`.
    pub rate: f64,
    /// RMS residual of the log-linear fit.
    pub residual: f64,
    pub fit: LineFit,
}

#[derive(Debug, Clone)]
pub struct DecayReport {
    pub times: Vec<f64>,
    pub b_dist: Vec<f64>,
    /// `‖f - M∞‖_{B^{α,β}}`, when the fractional calculus is available.
    pub bab_dist: Option<Vec<f64>>,
    pub field_dist: Vec<f64>,
    pub entropy: Vec<f64>,
    pub mass_error: Vec<f64>,
    pub min_value: Vec<f64>,
    pub linf_ratio: Vec<f64>,
    pub rate_b: Option<RateFit>,
    pub rate_bab: Option<RateFit>,
    pub rate_field: Option<RateFit>,
    pub rate_entropy: Option<RateFit>,
    pub flags: Vec<String>,
}

fn fit_rate(t: &[f64], y: &[f64], t_end: f64) -> Option<RateFit> {
    exp_rate(t, y, 1.0, t_end).ok().map(|fit| RateFit { rate: -fit.slope, residual: fit.residual, fit })
}

/// Distances to `M∞`, relative entropy and conservation diagnostics along a
/// trajectory, with exponential rates fitted on `[1, T]`.
pub fn decay_report(
    traj: &Trajectory,
    eq: &EquilibriumState,
    cfg: &FixedPointConfig,
    ops: Option<&WeightedOperatorSet>,
) -> Result<DecayReport> {
    if (traj.eps0 - eq.eps0).abs() > 1e-15 {
        return Err(Error::InvalidParam(format!("trajectory eps0 {} differs from equilibrium {}", traj.eps0, eq.eps0)));
    }
    let m = &eq.m_inf;
    let first = &traj.snapshots[0].f;
    let (mass0, max0) = (first.mass(), first.max());
    let d = first.grid().d as f64;
    let n = traj.snapshots.len();
    let mut r = DecayReport {
        times: Vec::with_capacity(n),
        b_dist: Vec::with_capacity(n),
        bab_dist: ops.map(|_| Vec::with_capacity(n)),
        field_dist: Vec::with_capacity(n),
        entropy: Vec::with_capacity(n),
        mass_error: Vec::with_capacity(n),
        min_value: Vec::with_capacity(n),
        linf_ratio: Vec::with_capacity(n),
        rate_b: None,
        rate_bab: None,
        rate_field: None,
        rate_entropy: None,
        flags: Vec::new(),
    };
    for s in &traj.snapshots {
        let diff = s.f.sub(m)?;
        r.times.push(s.t);
        r.b_dist.push(bnorm(&diff, m)?);
        if let (Some(ops), Some(v)) = (ops, r.bab_dist.as_mut()) {
            v.push(ops.frac_norm(&diff, cfg.alpha, cfg.beta)?);
        }
        r.field_dist.push(s.field.sub(&eq.e_inf)?.sup_norm());
        r.entropy.push(relative_entropy(&s.f, m)?);
        r.mass_error.push((s.f.mass() - mass0).abs());
        r.min_value.push(s.f.min());
        r.linf_ratio.push(s.f.max() / ((d * s.t).exp() * max0));
    }
    let t_end = *r.times.last().unwrap_or(&0.0);
    if t_end < 1.0 {
        r.flags.push(format!("T = {t_end} < 1: rates omitted"));
        return Ok(r);
    }
    if t_end < 5.0 {
        r.flags.push(format!("T = {t_end} < 5: short fit window"));
    }
    // at the stationarity tolerance a trajectory is indistinguishable from M∞
    if r.b_dist.iter().cloned().fold(0.0, f64::max) <= STATIONARY_DRIFT * t_end {
        r.flags.push("degenerate: trajectory stays at the equilibrium".into());
        return Ok(r);
    }
    r.rate_b = fit_rate(&r.times, &r.b_dist, t_end);
    r.rate_bab = r.bab_dist.as_ref().and_then(|v| fit_rate(&r.times, v, t_end));
    r.rate_field = fit_rate(&r.times, &r.field_dist, t_end);
    r.rate_entropy = fit_rate(&r.times, &r.entropy, t_end);
    Ok(r)
}

impl DecayReport {
    pub fn csv(&self) -> String {
        let mut s = String::from("t,b_dist,bab_dist,field_dist,entropy,mass_error,min_value,linf_ratio\n");
        for k in 0..self.times.len() {
            let bab = self.bab_dist.as_ref().map(|v| format!("{:.10e}", v[k])).unwrap_or_else(|| "na".into());
            s.push_str(&format!(
                "{:.6},{:.10e},{bab},{:.10e},{:.10e},{:.3e},{:.3e},{:.12}\n",
                self.times[k],
                self.b_dist[k],
                self.field_dist[k],
                self.entropy[k],
                self.mass_error[k],
                self.min_value[k],
                self.linf_ratio[k]
            ));
        }
        s
    }

    /// Flat `key=value` block with the fitted rates and extremal diagnostics.
    pub fn summary(&self) -> String {
        let mut s = String::new();
        for (name, r) in [
            ("b_dist", &self.rate_b),
            ("bab_dist", &self.rate_bab),
            ("field_dist", &self.rate_field),
            ("entropy", &self.rate_entropy),
        ] {
            match r {
                Some(r) => s.push_str(&format!("rate_{name}={:.6}\nresidual_{name}={:.3e}\n", r.rate, r.residual)),
                None => s.push_str(&format!("rate_{name}=na\n")),
            }
        }
        let max = |v: &[f64]| v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let min = |v: &[f64]| v.iter().cloned().fold(f64::INFINITY, f64::min);
        s.push_str(&format!("mass_error={:.3e}\n", max(&self.mass_error)));
        s.push_str(&format!("min_value={:.3e}\n", min(&self.min_value)));
        s.push_str(&format!("linf_ratio={:.12}\n", max(&self.linf_ratio)));
        s.push_str(&format!("entropy_min={:.3e}\n", min(&self.entropy)));
        for f in &self.flags {
            s.push_str(&format!("flag={f}\n"));
        }
        s
    }

    /// Whether `H` is nonincreasing (up to `tol`) between snapshots after `t0`.
    pub fn entropy_nonincreasing_after(&self, t0: f64, tol: f64) -> bool {
        let pts: Vec<f64> = self.times.iter().zip(&self.entropy).filter(|(t, _)| **t >= t0).map(|(_, h)| *h).collect();
        pts.windows(2).all(|w| w[1] <= w[0] + tol)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct ConservationReport {
    /// `max_t |mass(t) - mass(0)|`.
    pub mass_drift: f64,
    /// Smallest cell value over all snapshots.
    pub min_value: f64,
    /// `max_t max f(t) / (e^{dt} max f0)`.
    pub linf_ratio: f64,
}

impl ConservationReport {
    /// Mass drift ≤ 1e-10, `min f ≥ -1e-14`, sup bound within `1 + 1e-8`.
    pub fn passes(&self) -> bool {
        self.mass_drift <= 1e-10 && self.min_value >= -1e-14 && self.linf_ratio <= 1.0 + 1e-8
    }
}

pub fn conservation_check(traj: &Trajectory) -> Result<ConservationReport> {
    let first = traj.snapshots.first().ok_or_else(|| Error::InvalidParam("empty trajectory".into()))?;
    let (mass0, max0, d) = (first.f.mass(), first.f.max(), first.f.grid().d as f64);
    let mut r = ConservationReport { mass_drift: 0.0, min_value: f64::INFINITY, linf_ratio: 0.0 };
    for s in &traj.snapshots {
        r.mass_drift = r.mass_drift.max((s.f.mass() - mass0).abs());
        r.min_value = r.min_value.min(s.f.min());
        r.linf_ratio = r.linf_ratio.max(s.f.max() / ((d * s.t).exp() * max0));
    }
    Ok(r)
}
