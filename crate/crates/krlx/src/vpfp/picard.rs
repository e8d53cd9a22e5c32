//! Picard iteration for the perturbation `h = f - B` of a base flow
//! `B(t) = e^{-tK_b} f₀`, where `K_b` is the kinetic Fokker–Planck operator
//! of the potential `V_e + ε₀U_b`:
//!
//! `h(t) = ε₀ ∫₀ᵗ e^{-(t-s)K_b} (F_b + G)·∂_v(B + h) ds`, `G = ∇G_d ⋆ ∫h dv`,
//!
//! with `F_b = E(∫B dv) - ∇U_b`. The long-time mode takes `U_b = U∞` (so
//! `B = M∞ + e^{-tK}(f₀ - M∞)`), the short-time mode takes `U_b = U₀`.
//! Time integrals use the trapezoid rule on nodes `t_k = kΔ`, stepped as
//! `H_{k+1} = e^{-ΔK_b}(H_k + Δ/2 q_k) + Δ/2 q_{k+1}`.

use crate::equilibrium::EquilibriumState;
use crate::error::{Error, Result};
use crate::exec;
use crate::fieldsolve::{density, field_with, low_regularity_config};
use crate::green::FreeSpaceConvolver;
use crate::phasecore::{bnorm, dv, DistributionField, SpatialField, WeightedOperatorSet};
use crate::semigroup::{Limiter, Propagator, PropagatorConfig};

use super::FixedPointConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PicardMode {
    /// Base `K∞` around the equilibrium.
    LongTime,
    /// Base `K₀` with the potential of the initial density (d=3).
    ShortTime,
}

#[derive(Debug, Clone)]
pub struct PicardOptions {
    pub t_end: f64,
    /// Node spacing `Δ` of the Duhamel quadrature.
    pub node_dt: f64,
    /// Step of the base propagator; `node_dt` is split into whole steps.
    pub dt: f64,
    /// Decay rate `κ` of the linear flow, used in the exponential weights.
    pub kappa: f64,
    /// Stop when `‖Δ_n‖_Z ≤ tol · max(‖Δ_1‖_Z, 1e-300)`.
    pub tol: f64,
    pub mode: PicardMode,
    /// The Duhamel formula needs a linear `e^{-tK_b}`, hence `Off` by default.
    pub limiter: Limiter,
}

impl PicardOptions {
    pub fn new(t_end: f64, node_dt: f64, kappa: f64) -> Self {
        Self { t_end, node_dt, dt: node_dt, kappa, tol: 1e-10, mode: PicardMode::LongTime, limiter: Limiter::Off }
    }

    pub fn with_dt(mut self, dt: f64) -> Self {
        self.dt = dt;
        self
    }

    pub fn with_mode(mut self, mode: PicardMode) -> Self {
        self.mode = mode;
        self
    }

    pub fn with_limiter(mut self, limiter: Limiter) -> Self {
        self.limiter = limiter;
        self
    }

    pub fn with_tol(mut self, tol: f64) -> Self {
        self.tol = tol;
        self
    }
}

#[derive(Debug, Clone)]
pub struct PicardReport {
    pub times: Vec<f64>,
    /// `‖Δ_n‖_Z` for `n = 1, 2, ...`, with `Δ_n` the change of `(h, G)`.
    pub z_norms: Vec<f64>,
    pub x_norms: Vec<f64>,
    pub y_norms: Vec<f64>,
    /// `q_n = ‖Δ_{n+1}‖_Z / ‖Δ_n‖_Z`.
    pub factors: Vec<f64>,
    pub converged: bool,
    /// Norm used for the `h` component: `"B"` or `"B^{alpha,beta}"`.
    pub x_norm: &'static str,
    pub warnings: Vec<String>,
    base: Vec<DistributionField>,
    h: Vec<DistributionField>,
}

impl PicardReport {
    pub fn iterations(&self) -> usize {
        self.z_norms.len()
    }

    /// Largest contraction factor, 0 when a single iterate sufficed.
    pub fn max_factor(&self) -> f64 {
        self.factors.iter().cloned().fold(0.0, f64::max)
    }

    /// Geometric mean of the factors after the first.
    pub fn mean_factor(&self) -> f64 {
        let tail: Vec<f64> = self.factors.iter().skip(1).filter(|q| **q > 0.0).cloned().collect();
        let used = if tail.is_empty() { self.factors.clone() } else { tail };
        if used.is_empty() || used.iter().any(|q| *q <= 0.0) {
            return 0.0;
        }
        (used.iter().map(|q| q.ln()).sum::<f64>() / used.len() as f64).exp()
    }

    /// The reassembled solution `B(t_k) + h(t_k)`.
    pub fn solution(&self, k: usize) -> DistributionField {
        self.base[k].add(&self.h[k]).expect("same grid")
    }

    /// Node closest to `t`.
    pub fn node(&self, t: f64) -> usize {
        (0..self.times.len())
            .min_by(|a, b| (self.times[*a] - t).abs().total_cmp(&(self.times[*b] - t).abs()))
            .unwrap_or(0)
    }

    pub fn perturbation(&self, k: usize) -> &DistributionField {
        &self.h[k]
    }

    pub fn csv(&self) -> String {
        let mut s = String::from("iteration,z_norm,x_norm,y_norm,factor\n");
        for n in 0..self.z_norms.len() {
            let q = if n == 0 { "na".to_string() } else { format!("{:.6e}", self.factors[n - 1]) };
            s.push_str(&format!(
                "{},{:.10e},{:.10e},{:.10e},{q}\n",
                n + 1,
                self.z_norms[n],
                self.x_norms[n],
                self.y_norms[n]
            ));
        }
        s.push_str(&format!("# converged={},x_norm={}\n", self.converged, self.x_norm));
        s
    }
}

fn field_of(conv: &FreeSpaceConvolver, f: &DistributionField) -> SpatialField {
    field_with(conv, &density(f))
}

/// `ε₀ (F + G)·∂_v w` pointwise.
fn source(eps0: f64, force: &SpatialField, w: &DistributionField) -> DistributionField {
    let g = *w.grid();
    let nvd = g.nvd();
    let dws: Vec<DistributionField> = (0..g.d).map(|k| dv(w, k)).collect();
    let mut out = vec![0.0; g.len()];
    exec::fill(&mut out, |i| (0..g.d).map(|k| force.component(k)[i / nvd] * dws[k].values()[i]).sum::<f64>() * eps0);
    DistributionField::from_raw(g, out)
}

fn check_contraction(factors: &[f64], eps0: f64) -> Result<()> {
    let n = factors.len();
    if n >= 3 && factors[n - 3..].iter().all(|q| *q > 1.0) {
        return Err(Error::NonContraction { eps0, factors: factors.to_vec() });
    }
    Ok(())
}

/// Iterate the Duhamel map to a fixed point on `[0, opts.t_end]`.
/// `ops`, when given for the reference weight, measures `h` in
/// `B^{α,β}`; otherwise (or for `α = β = 0`) in `B`.
pub fn picard_iterate(
    f0: &DistributionField,
    eq: &EquilibriumState,
    cfg: &FixedPointConfig,
    opts: &PicardOptions,
    ops: Option<&WeightedOperatorSet>,
) -> Result<PicardReport> {
    let mut warnings = cfg.validate()?;
    let g = *f0.grid();
    if &g != eq.grid() || g.d != cfg.d {
        return Err(Error::Shape("f0, equilibrium and config disagree on the grid".into()));
    }
    if (cfg.eps0 - eq.eps0).abs() > 1e-15 {
        return Err(Error::InvalidParam(format!("config eps0 {} differs from equilibrium {}", cfg.eps0, eq.eps0)));
    }
    if !(opts.t_end > 0.0 && opts.node_dt > 0.0 && opts.dt > 0.0 && opts.kappa >= 0.0) {
        return Err(Error::InvalidParam("t_end, node_dt and dt must be positive, kappa nonnegative".into()));
    }
    let conv = FreeSpaceConvolver::new(g.spatial());
    let (prop, weight) = match opts.mode {
        PicardMode::LongTime => {
            let pc = PropagatorConfig::new(g, eq.v_inf.clone(), opts.dt)?.with_limiter(opts.limiter);
            (Propagator::new(&pc)?, eq.m_inf.clone())
        }
        PicardMode::ShortTime => {
            let pc = low_regularity_config(f0, &eq.ve, cfg.eps0, opts.dt)?.with_limiter(opts.limiter);
            let p = Propagator::new(&pc)?;
            let m = p.maxwellian();
            (p, m)
        }
    };
    let e_b = match opts.mode {
        PicardMode::LongTime => field_of(&conv, &eq.m_inf),
        PicardMode::ShortTime => field_of(&conv, f0),
    };
    let use_frac = ops.is_some() && (cfg.alpha > 0.0 || cfg.beta > 0.0);
    if ops.is_none() && (cfg.alpha > 0.0 || cfg.beta > 0.0) {
        warnings.push("no operator set for B^{alpha,beta}: h measured in B".into());
    }
    let xnorm = |h: &DistributionField| -> Result<f64> {
        match ops {
            Some(o) if use_frac => o.frac_norm(h, cfg.alpha, cfg.beta),
            _ => bnorm(h, &weight),
        }
    };

    let nodes = (opts.t_end / opts.node_dt - 1e-9).ceil().max(1.0) as usize;
    let step = opts.t_end / nodes as f64;
    let times: Vec<f64> = (0..=nodes).map(|k| k as f64 * step).collect();
    let mut base = Vec::with_capacity(nodes + 1);
    base.push(f0.clone());
    for k in 0..nodes {
        let next = prop.advance(base[k].clone(), times[k], times[k + 1])?;
        base.push(next);
    }
    let f_base: Vec<SpatialField> = base.iter().map(|b| field_of(&conv, b).sub(&e_b)).collect::<Result<_>>()?;

    let (sk, ks) = (opts.kappa * cfg.sigma, opts.mode == PicardMode::ShortTime);
    let wx = |t: f64| {
        let short = if cfg.delta > 0.0 { t.powf(cfg.delta) / (1.0 + t.powf(cfg.delta)) } else { 1.0 };
        short * (sk * t).exp()
    };
    let wy = |t: f64| if ks { t.min(1.0).powf(-cfg.gamma_y) * (sk * t).exp() } else { (sk * t).exp() };

    let zero_field = SpatialField::zeros(g.spatial(), g.d);
    let mut h: Vec<DistributionField> = vec![DistributionField::zeros(g); nodes + 1];
    let mut gf: Vec<SpatialField> = vec![zero_field; nodes + 1];
    let mut rep = PicardReport {
        times: times.clone(),
        z_norms: Vec::new(),
        x_norms: Vec::new(),
        y_norms: Vec::new(),
        factors: Vec::new(),
        converged: false,
        x_norm: if use_frac { "B^{alpha,beta}" } else { "B" },
        warnings,
        base: Vec::new(),
        h: Vec::new(),
    };

    for _ in 0..cfg.max_picard {
        let q: Vec<DistributionField> = (0..=nodes)
            .map(|k| {
                let force = f_base[k].lincomb(1.0, &gf[k], 1.0)?;
                Ok(source(cfg.eps0, &force, &base[k].add(&h[k])?))
            })
            .collect::<Result<_>>()?;
        let mut new_h = Vec::with_capacity(nodes + 1);
        new_h.push(DistributionField::zeros(g));
        for k in 0..nodes {
            let carried = new_h[k].lincomb(1.0, &q[k], 0.5 * step)?;
            let moved = prop.advance(carried, times[k], times[k + 1])?;
            new_h.push(moved.lincomb(1.0, &q[k + 1], 0.5 * step)?);
        }
        let new_g: Vec<SpatialField> = new_h.iter().map(|x| field_of(&conv, x)).collect();

        let (mut x, mut y) = (0.0f64, 0.0f64);
        for k in 1..=nodes {
            let t = times[k];
            x = x.max(wx(t) * xnorm(&new_h[k].sub(&h[k])?)?);
            y = y.max(wy(t) * new_g[k].sub(&gf[k])?.sup_norm());
        }
        let z = x.max(y);
        if let Some(prev) = rep.z_norms.last() {
            rep.factors.push(if *prev > 0.0 { z / prev } else { 0.0 });
        }
        rep.z_norms.push(z);
        rep.x_norms.push(x);
        rep.y_norms.push(y);
        h = new_h;
        gf = new_g;
        if z <= opts.tol * rep.z_norms[0].max(1e-300) || z == 0.0 {
            rep.converged = true;
            break;
        }
        check_contraction(&rep.factors, cfg.eps0)?;
    }
    rep.base = base;
    rep.h = h;
    Ok(rep)
}
