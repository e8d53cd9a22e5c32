//! The linear kinetic Fokker–Planck semigroup `e^{-tK}`,
//! `K = v·∇_x - ∇V·∇_v - ∇_v·(∇_v + v)`, and checks of its quantitative
//! estimates.
//!
//! One step is `T(dt/2) C(dt) T(dt/2)`: conservative phase-space transport
//! (see [`transport`]) around the Chang–Cooper velocity step.

mod ou;
mod transport;
mod verify;

pub use ou::{cc_delta, cc_generator, VelocityScheme};
pub(crate) use ou::apply_axis_matrix;
pub use transport::Limiter;
pub use verify::{
    dense_spectrum_rate, lacunary_probe, mode_probes, rough_probe, verify_conjugation_and_continuity, verify_perp_decay,
    verify_short_time_exponents, ConjugationReport, PerpDecayReport, ProbeKind, ShortTimeReport,
};

use crate::equilibrium::PotentialSpec;
use crate::error::{Error, Result};
use crate::exec;
use crate::phasecore::{DistributionField, PhaseGrid, SpatialField};
use ou::OuStep;
use std::sync::Arc;
pub(crate) use transport::Scratch;
use transport::{Transport, VelocityWeights};

/// Largest admissible `max|v|·dt/hx`.
pub const MAX_CFL: f64 = 0.9;

#[derive(Debug, Clone)]
pub struct PropagatorConfig {
    pub grid: PhaseGrid,
    /// Potential `V` sampled on the spatial grid; the force is the discrete
    /// gradient induced by the face weights of `e^{-V}`.
    pub potential: SpatialField,
    pub dt: f64,
    pub limiter: Limiter,
    pub velocity: VelocityScheme,
    /// Output times for [`kfp_propagate`].
    pub t_grid: Vec<f64>,
}

impl PropagatorConfig {
    pub fn new(grid: PhaseGrid, potential: SpatialField, dt: f64) -> Result<Self> {
        let cfg = Self {
            grid,
            potential,
            dt,
            limiter: Limiter::Minmod,
            velocity: VelocityScheme::Exponential,
            t_grid: Vec::new(),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_spec(grid: PhaseGrid, v: &PotentialSpec, dt: f64) -> Result<Self> {
        Self::new(grid, v.sample(&grid.spatial())?, dt)
    }

    pub fn with_limiter(mut self, limiter: Limiter) -> Self {
        self.limiter = limiter;
        self
    }

    pub fn with_velocity(mut self, scheme: VelocityScheme) -> Self {
        self.velocity = scheme;
        self
    }

    pub fn with_times(mut self, t: Vec<f64>) -> Self {
        self.t_grid = t;
        self
    }

    /// `max|v|·dt/hx`.
    pub fn cfl(&self) -> f64 {
        let vmax = self.grid.lv - 0.5 * self.grid.hv();
        vmax * self.dt / self.grid.hx()
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::InvalidParam(format!("dt = {} must be positive", self.dt)));
        }
        if self.potential.grid() != &self.grid.spatial() || !self.potential.is_scalar() {
            return Err(Error::Shape("potential is not a scalar field on the spatial grid".into()));
        }
        let c = self.cfl();
        if c > MAX_CFL {
            return Err(Error::Cfl(format!("max|v|·dt/hx = {c:.3} exceeds {MAX_CFL}")));
        }
        if self.t_grid.iter().any(|t| !(t.is_finite() && *t >= 0.0)) || self.t_grid.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::InvalidParam("t_grid must be nonnegative and nondecreasing".into()));
        }
        Ok(())
    }
}

/// Stepper for one potential. Cheap to re-target at a new potential on the
/// same grid (the velocity operators are shared).
#[derive(Debug, Clone)]
pub struct Propagator {
    grid: PhaseGrid,
    dt: f64,
    limiter: Limiter,
    transport: Transport,
    ou: Arc<OuStep>,
    vel: Arc<VelocityWeights>,
}

impl Propagator {
    pub fn new(cfg: &PropagatorConfig) -> Result<Self> {
        cfg.validate()?;
        let vel = Arc::new(VelocityWeights::new(&cfg.grid));
        let transport = Transport::new(&cfg.grid, &cfg.potential, vel.clone())?;
        let ou = Arc::new(OuStep::new(&cfg.grid, cfg.velocity)?);
        Ok(Self { grid: cfg.grid, dt: cfg.dt, limiter: cfg.limiter, transport, ou, vel })
    }

    /// Same grid, step and velocity operator; new potential.
    pub fn with_potential(&self, v: &SpatialField) -> Result<Self> {
        let transport = Transport::new(&self.grid, v, self.vel.clone())?;
        Ok(Self { transport, ..self.clone() })
    }

    pub fn grid(&self) -> &PhaseGrid {
        &self.grid
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn limiter(&self) -> Limiter {
        self.limiter
    }

    /// Largest transport substep (positivity bound with minmod).
    pub fn transport_substep(&self) -> f64 {
        self.transport.max_substep()
    }

    /// The discrete Maxwellian `e^{-V-|v|²/2}` of this propagator, unit mass.
    pub fn maxwellian(&self) -> DistributionField {
        let nvd = self.grid.nvd();
        let (w, m) = (&self.transport.w, &self.vel.mall);
        let mut vals = vec![0.0; self.grid.len()];
        exec::fill(&mut vals, |i| w[i / nvd] * m[i % nvd]);
        let s = exec::sum(vals.len(), |i| vals[i]) * self.grid.cell_volume();
        vals.iter_mut().for_each(|x| *x /= s);
        DistributionField::from_raw(self.grid, vals)
    }

    pub(crate) fn transport(&self, f: &mut [f64], tau: f64, scratch: &mut Scratch) {
        let nsub = (tau / self.transport.max_substep() - 1e-12).ceil().max(1.0) as usize;
        let h = tau / nsub as f64;
        for _ in 0..nsub {
            self.transport.ssp_step(self.limiter, f, h, scratch);
        }
    }

    /// One Strang step of size `dt` in place.
    pub fn step_values(&self, f: &mut [f64], dt: f64) {
        let mut scratch = Scratch::default();
        self.transport(f, 0.5 * dt, &mut scratch);
        self.ou.apply(f, dt);
        self.transport(f, 0.5 * dt, &mut scratch);
    }

    /// Advance from `t0` to `t1` with steps no longer than the configured `dt`.
    pub fn advance_values(&self, f: &mut [f64], t0: f64, t1: f64) -> Result<()> {
        if t1 < t0 {
            return Err(Error::InvalidParam("cannot step backwards".into()));
        }
        if t1 == t0 {
            return Ok(());
        }
        let n = ((t1 - t0) / self.dt - 1e-9).ceil().max(1.0) as usize;
        let h = (t1 - t0) / n as f64;
        for s in 0..n {
            self.step_values(f, h);
            let bad = exec::max(f.len(), |i| if f[i].is_finite() { 0.0 } else { 1.0 });
            if bad > 0.0 {
                return Err(Error::NonFinite { t: t0 + (s + 1) as f64 * h });
            }
        }
        Ok(())
    }

    pub fn advance(&self, f: DistributionField, t0: f64, t1: f64) -> Result<DistributionField> {
        if f.grid() != &self.grid {
            return Err(Error::Shape("field is not on the propagator grid".into()));
        }
        let mut v = f.into_values();
        self.advance_values(&mut v, t0, t1)?;
        Ok(DistributionField::from_raw(self.grid, v))
    }

    /// Semi-discrete generator `G` (`∂_t f = G f`) applied to `f`: transport
    /// with the configured limiter plus the Chang–Cooper operator.
    pub fn apply_generator(&self, f: &[f64], out: &mut [f64]) {
        let mut scratch_u = Vec::new();
        let mut scratch_f = Vec::new();
        let mut r = vec![0.0; f.len()];
        self.transport.rhs(self.limiter, f, &mut r, &mut scratch_u, &mut scratch_f);
        self.ou.apply_generator(f, out);
        out.iter_mut().zip(&r).for_each(|(o, x)| *o += x);
    }

    /// Dense row-major generator (linear only with [`Limiter::Off`]).
    pub fn dense_generator(&self) -> Result<Vec<f64>> {
        let n = self.grid.len();
        if n > 4000 {
            return Err(Error::Capability(format!("dense generator limited to 4000 unknowns (got {n})")));
        }
        if self.limiter != Limiter::Off {
            return Err(Error::InvalidParam("dense generator needs the linear (limiter off) scheme".into()));
        }
        let cols: Vec<Vec<f64>> = exec::map(n, |c| {
            let mut e = vec![0.0; n];
            e[c] = 1.0;
            let mut out = vec![0.0; n];
            self.apply_generator(&e, &mut out);
            out
        });
        let mut a = vec![0.0; n * n];
        for (c, col) in cols.iter().enumerate() {
            for r in 0..n {
                a[r * n + c] = col[r];
            }
        }
        Ok(a)
    }
}

/// Propagate `f0` and return snapshots at `cfg.t_grid`.
pub fn kfp_propagate(f0: &DistributionField, cfg: &PropagatorConfig) -> Result<Vec<(f64, DistributionField)>> {
    let p = Propagator::new(cfg)?;
    trajectory(&p, f0, &cfg.t_grid)
}

/// Snapshots of `e^{-tK} f0` at nondecreasing times `ts`.
pub fn trajectory(p: &Propagator, f0: &DistributionField, ts: &[f64]) -> Result<Vec<(f64, DistributionField)>> {
    if f0.grid() != p.grid() {
        return Err(Error::Shape("initial field is not on the propagator grid".into()));
    }
    let mut out = Vec::with_capacity(ts.len());
    let mut f = f0.values().to_vec();
    let mut t = 0.0;
    for &tn in ts {
        p.advance_values(&mut f, t, tn)?;
        t = tn;
        out.push((t, DistributionField::from_raw(*p.grid(), f.clone())));
    }
    Ok(out)
}
