//! Measurements of the semigroup estimates on concrete probes.

use super::{trajectory, Limiter, Propagator, PropagatorConfig};
use crate::error::{Error, Result};
use crate::exec;
use crate::fit::{exp_rate, loglog_slope, LineFit};
use crate::linalg;
use crate::phasecore::{Axis, DistributionField, PhaseGrid, WeightedOperatorSet};

/// Standard non-smooth probes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProbeKind {
    /// `1_{|v|<1/2} e^{-|x|²/2}`: rough in `v`, smooth in `x`.
    RoughV,
    /// `1_{|x|<1/2} e^{-|v|²/2}`.
    RoughX,
}

/// A standard rough probe of unit mass.
pub fn rough_probe(grid: &PhaseGrid, kind: ProbeKind) -> Result<DistributionField> {
    let f = DistributionField::from_fn(*grid, |x, v| {
        let r2 = |y: &[f64; 3]| y.iter().map(|a| a * a).sum::<f64>();
        match kind {
            ProbeKind::RoughV => {
                if r2(v).sqrt() < 0.5 {
                    (-0.5 * r2(x)).exp()
                } else {
                    0.0
                }
            }
            ProbeKind::RoughX => {
                if r2(x).sqrt() < 0.5 {
                    (-0.5 * r2(v)).exp()
                } else {
                    0.0
                }
            }
        }
    })?;
    if f.mass() <= 0.0 {
        return Err(Error::InvalidParam("rough probe has no support on this grid".into()));
    }
    Ok(f.scaled(1.0 / f.mass()))
}

/// `M·cos(jπ(y+L)/(2L))` along the first axis of the group, for `count`
/// log-spaced wave numbers `j ∈ [1, n-1]`.
pub fn mode_probes(m: &DistributionField, axis: Axis, count: usize) -> Vec<DistributionField> {
    let g = *m.grid();
    let (n, l) = match axis {
        Axis::X => (g.nx, g.lx),
        Axis::V => (g.nv, g.lv),
    };
    let mut js: Vec<usize> = (0..count.max(1))
        .map(|k| {
            let s = if count > 1 { k as f64 / (count - 1) as f64 } else { 0.0 };
            ((n - 1) as f64).powf(s).round() as usize
        })
        .collect();
    js.dedup();
    let nvd = g.nvd();
    let stride = match axis {
        Axis::X => g.nx.pow(g.d as u32 - 1) * nvd,
        Axis::V => g.nv.pow(g.d as u32 - 1),
    };
    js.into_iter()
        .map(|j| {
            let mv = m.values();
            let mut vals = vec![0.0; mv.len()];
            exec::fill(&mut vals, |idx| {
                let i = (idx / stride) % n;
                let y = -l + (i as f64 + 0.5) * (2.0 * l / n as f64);
                mv[idx] * (j as f64 * std::f64::consts::PI * (y + l) / (2.0 * l)).cos()
            });
            DistributionField::from_raw(g, vals)
        })
        .collect()
}

/// Weierstrass-type rough probe: the sum of [`mode_probes`] over `count`
/// log-spaced wave numbers. The modes stay nearly orthogonal under the flow,
/// so the probe samples every scale with equal weight and its norm ratios
/// carry the same power law as the supremum over single modes.
pub fn lacunary_probe(m: &DistributionField, axis: Axis, count: usize) -> DistributionField {
    let modes = mode_probes(m, axis, count);
    let mut vals = vec![0.0; m.values().len()];
    for f in &modes {
        for (a, b) in vals.iter_mut().zip(f.values()) {
            *a += b;
        }
    }
    DistributionField::from_raw(*m.grid(), vals)
}

fn default_times(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n).map(|k| lo * (hi / lo).powf(k as f64 / (n - 1) as f64)).collect()
}

#[derive(Debug, Clone)]
pub struct ShortTimeReport {
    pub alpha: f64,
    pub beta: f64,
    pub times: Vec<f64>,
    /// `sup_probes ‖Λ_v^β e^{-tK} f‖_B / ‖f‖_B`.
    pub n_v: Vec<f64>,
    /// `sup_probes ‖Λ_x^α e^{-tK} f‖_B / ‖f‖_B`.
    pub n_x: Vec<f64>,
    pub fit_v: LineFit,
    pub fit_x: LineFit,
    pub target_v: f64,
    pub target_x: f64,
    /// `sup_t n(t)·min(1, t^{-target})`.
    pub prefactor_v: f64,
    pub prefactor_x: f64,
}

impl ShortTimeReport {
    pub fn csv(&self) -> String {
        let mut s = String::from("t,n_v,n_x\n");
        for k in 0..self.times.len() {
            s.push_str(&format!("{:.6e},{:.10e},{:.10e}\n", self.times[k], self.n_v[k], self.n_x[k]));
        }
        s.push_str(&format!(
            "# slope_v={:.4},target_v={:.4},slope_x={:.4},target_x={:.4}\n",
            self.fit_v.slope, self.target_v, self.fit_x.slope, self.target_x
        ));
        s
    }
}

/// Small-time growth of `Λ_v^β e^{-tK}` and `Λ_x^α e^{-tK}` over the probe
/// family. Times are `cfg.t_grid`, or 12 log-spaced points in `[1e-3, 1e-1]`.
pub fn verify_short_time_exponents(
    cfg: &PropagatorConfig,
    alpha: f64,
    beta: f64,
    probes: &[DistributionField],
) -> Result<ShortTimeReport> {
    for (name, e) in [("alpha", alpha), ("beta", beta)] {
        if !(0.0..=1.0).contains(&e) {
            return Err(Error::InvalidParam(format!("{name} = {e} outside [0, 1]")));
        }
    }
    if probes.is_empty() {
        return Err(Error::InvalidParam("no probes".into()));
    }
    let times = if cfg.t_grid.is_empty() { default_times(1e-3, 1e-1, 12) } else { cfg.t_grid.clone() };
    if times.len() < 8 {
        return Err(Error::InvalidParam("need at least 8 times".into()));
    }
    let p = Propagator::new(cfg)?;
    let ops = WeightedOperatorSet::new(p.maxwellian())?;
    let mut n_v = vec![0.0f64; times.len()];
    let mut n_x = vec![0.0f64; times.len()];
    for f in probes {
        let b = ops.bnorm(f)?;
        if b == 0.0 {
            return Err(Error::InvalidParam("probe with zero norm".into()));
        }
        for (k, (_, ft)) in trajectory(&p, f, &times)?.iter().enumerate() {
            n_v[k] = n_v[k].max(ops.lambda_norm(ft, Axis::V, beta)? / b);
            n_x[k] = n_x[k].max(ops.lambda_norm(ft, Axis::X, alpha)? / b);
        }
    }
    let fit_v = loglog_slope(&times, &n_v)?;
    let fit_x = loglog_slope(&times, &n_x)?;
    let (target_v, target_x) = (-beta / 2.0, -1.5 * alpha);
    let pref = |n: &[f64], e: f64| {
        times.iter().zip(n).map(|(t, y)| y * t.powf(-e).min(1.0)).fold(0.0, f64::max)
    };
    Ok(ShortTimeReport {
        alpha,
        beta,
        prefactor_v: pref(&n_v, target_v),
        prefactor_x: pref(&n_x, target_x),
        times,
        n_v,
        n_x,
        fit_v,
        fit_x,
        target_v,
        target_x,
    })
}

/// Smallest nonzero decay rate of the semi-discrete generator (dense
/// eigensolve, at most 4000 unknowns). The eigenvalue nearest zero is the
/// Maxwellian and is discarded.
pub fn dense_spectrum_rate(p: &Propagator) -> Result<f64> {
    let lin = if p.limiter() == Limiter::Off {
        p.clone()
    } else {
        let mut q = p.clone();
        q.limiter = Limiter::Off;
        q
    };
    let n = lin.grid().len();
    let a = lin.dense_generator()?;
    let eig = linalg::general_eigenvalues(n, &a)?;
    let zero = eig
        .iter()
        .enumerate()
        .min_by(|a, b| (a.1 .0.hypot(a.1 .1)).total_cmp(&b.1 .0.hypot(b.1 .1)))
        .map(|(i, _)| i)
        .ok_or_else(|| Error::Eigen("empty spectrum".into()))?;
    let rate = eig
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != zero)
        .map(|(_, e)| -e.0)
        .fold(f64::INFINITY, f64::min);
    Ok(rate)
}

#[derive(Debug, Clone)]
pub struct PerpDecayReport {
    pub times: Vec<f64>,
    pub norms: Vec<f64>,
    /// `max_t |∫ e^{-tK} f|`.
    pub max_mass: f64,
    /// Measured rate λ (None for a zero probe).
    pub lambda: Option<f64>,
    pub fit: Option<LineFit>,
    /// Dense-spectrum reference λ*.
    pub lambda_star: Option<f64>,
    pub lambda_over_kappa0: Option<f64>,
    pub degenerate: bool,
}

impl PerpDecayReport {
    pub fn csv(&self) -> String {
        let mut s = String::from("t,norm\n");
        for (t, n) in self.times.iter().zip(&self.norms) {
            s.push_str(&format!("{t:.6},{n:.10e}\n"));
        }
        let opt = |x: Option<f64>| x.map(|v| format!("{v:.6}")).unwrap_or_else(|| "na".into());
        s.push_str(&format!(
            "# lambda={},lambda_star={},lambda_over_kappa0={},max_mass={:.3e}\n",
            opt(self.lambda),
            opt(self.lambda_star),
            opt(self.lambda_over_kappa0),
            self.max_mass
        ));
        s
    }
}

/// Exponential decay of a zero-mass probe in `B`, fitted on `[1, t_end]`.
pub fn verify_perp_decay(
    cfg: &PropagatorConfig,
    f0_perp: &DistributionField,
    m: &DistributionField,
    t_end: f64,
    kappa0: Option<f64>,
) -> Result<PerpDecayReport> {
    if t_end < 5.0 {
        return Err(Error::InvalidParam(format!("T = {t_end} < 5")));
    }
    let abs_mass = exec::sum(f0_perp.values().len(), |i| f0_perp.values()[i].abs()) * f0_perp.grid().cell_volume();
    if f0_perp.mass().abs() > 1e-12 * abs_mass.max(1e-300) {
        return Err(Error::InvalidParam(format!(
            "probe has mass {:.3e}; apply project_perp first",
            f0_perp.mass()
        )));
    }
    let p = Propagator::new(cfg)?;
    let lambda_star = if cfg.grid.len() <= 4000 { Some(dense_spectrum_rate(&p)?) } else { None };
    let steps = (t_end / 0.25).round() as usize;
    let times: Vec<f64> = (0..=steps).map(|k| k as f64 * t_end / steps as f64).collect();
    if abs_mass == 0.0 {
        return Ok(PerpDecayReport {
            norms: vec![0.0; times.len()],
            times,
            max_mass: 0.0,
            lambda: None,
            fit: None,
            lambda_star,
            lambda_over_kappa0: None,
            degenerate: true,
        });
    }
    let traj = trajectory(&p, f0_perp, &times)?;
    let mut norms = Vec::with_capacity(times.len());
    let mut max_mass = 0.0f64;
    for (t, f) in &traj {
        let b = crate::phasecore::bnorm(f, m)?;
        if *t <= 1.0 && b < 1e-280 {
            return Err(Error::Domain("norm underflow before t = 1; widen the window".into()));
        }
        norms.push(b);
        max_mass = max_mass.max(f.mass().abs());
    }
    let fit = exp_rate(&times, &norms, 1.0, t_end)?;
    let lambda = -fit.slope;
    Ok(PerpDecayReport {
        times,
        norms,
        max_mass,
        lambda: Some(lambda),
        fit: Some(fit),
        lambda_star,
        lambda_over_kappa0: kappa0.map(|k| lambda / k),
        degenerate: false,
    })
}

#[derive(Debug, Clone)]
pub struct ConjugationReport {
    pub gamma: f64,
    pub a: f64,
    /// `sup_{t, probes} ‖e^{-tK} f‖_{B^{γ,γ}} / ‖f‖_{B^{γ,γ}}`.
    pub conj_ratio: f64,
    /// Per probe: fitted slope of `ln‖(e^{-tK}-1)f‖_B` vs `ln t`, or `None`
    /// when the probe is stationary.
    pub continuity: Vec<Option<LineFit>>,
    pub target: f64,
}

/// Conjugation bound and small-time continuity. Times are `cfg.t_grid` or 8
/// log-spaced points in `[1e-3, 1e-1]`.
pub fn verify_conjugation_and_continuity(
    cfg: &PropagatorConfig,
    gamma: f64,
    a: f64,
    probes: &[DistributionField],
) -> Result<ConjugationReport> {
    if !(0.0..=2.0).contains(&gamma) || !(0.0..=2.0).contains(&a) {
        return Err(Error::InvalidParam("gamma and a must lie in [0, 2]".into()));
    }
    let times = if cfg.t_grid.is_empty() { default_times(1e-3, 1e-1, 8) } else { cfg.t_grid.clone() };
    let p = Propagator::new(cfg)?;
    let ops = WeightedOperatorSet::new(p.maxwellian())?;
    if gamma > 0.0 && cfg.grid.len() > crate::phasecore::MAX_SPECTRAL_UNKNOWNS {
        return Err(Error::Capability("fractional norms unavailable at this grid size".into()));
    }
    let mut conj_ratio = 0.0f64;
    let mut continuity = Vec::with_capacity(probes.len());
    for f in probes {
        let base = ops.frac_norm(f, gamma, gamma)?;
        let b = ops.bnorm(f)?;
        if base == 0.0 {
            return Err(Error::InvalidParam("probe with zero norm".into()));
        }
        let traj = trajectory(&p, f, &times)?;
        let mut diffs = Vec::with_capacity(times.len());
        for (_, ft) in &traj {
            conj_ratio = conj_ratio.max(ops.frac_norm(ft, gamma, gamma)? / base);
            diffs.push(ops.bnorm(&ft.sub(f)?)?);
        }
        // stationary up to the truncation drift allowed for the Maxwellian
        let stationary = diffs.iter().zip(&times).all(|(d, t)| *d <= 1e-6 * t.max(1e-3) * b);
        continuity.push(if stationary { None } else { Some(loglog_slope(&times, &diffs)?) });
    }
    Ok(ConjugationReport { gamma, a, conj_ratio, continuity, target: a / 2.0 })
}
