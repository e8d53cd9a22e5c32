//! One function per subcommand. Each writes its artifacts into a directory
//! and returns the summary lines, or the name of the check that failed.

use crate::config::SimConfig;
use krlx::equilibrium::{solve_poisson_emden_with, EquilibriumState, PoissonEmdenOptions};
use krlx::phasecore::{
    io, project_perp, Axis, DistributionField, PhaseGrid, SpatialField, WeightedOperatorSet,
};
use krlx::semigroup::{
    mode_probes, rough_probe, verify_conjugation_and_continuity, verify_perp_decay, verify_short_time_exponents,
    ProbeKind, PropagatorConfig,
};
use krlx::vpfp::{
    conservation_check, decay_report, time_weight_sweep, picard_iterate, vpfp_run, PicardOptions, RunOptions,
};
use krlx::witten::{perturbed_gap_check, spectral_gap, WittenPotential};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::path::{Path, PathBuf};

/// A workflow that could not complete (exit code 3).
#[derive(Debug)]
pub struct Failure {
    pub check: String,
    pub detail: String,
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "numerical failure in check '{}': {}", self.check, self.detail)
    }
}

type Outcome<T> = Result<T, Failure>;

fn fail(check: &str, detail: impl ToString) -> Failure {
    Failure { check: check.into(), detail: detail.to_string() }
}

trait Context<T> {
    fn check(self, name: &str) -> Outcome<T>;
}

impl<T, E: std::fmt::Display> Context<T> for Result<T, E> {
    fn check(self, name: &str) -> Outcome<T> {
        self.map_err(|e| fail(name, e))
    }
}

/// Writes reports, each prefixed with the resolved configuration.
pub struct Sink<'a> {
    pub dir: PathBuf,
    pub cfg: &'a SimConfig,
    pub eps0: f64,
}

impl Sink<'_> {
    fn header(&self) -> String {
        format!("{}# run eps0 = {}\n", self.cfg.provenance(), self.eps0)
    }

    fn report(&self, name: &str, body: &str) -> Outcome<()> {
        std::fs::create_dir_all(&self.dir).check("write output")?;
        std::fs::write(self.dir.join(name), format!("{}{body}", self.header())).check("write output")
    }

    fn field(&self, name: &str, f: &DistributionField) -> Outcome<()> {
        io::save_distribution(&self.dir.join(name), f).check("write output")
    }

    fn spatial(&self, name: &str, f: &SpatialField) -> Outcome<()> {
        io::save_spatial(&self.dir.join(name), f).check("write output")
    }
}

fn equilibrium_state(cfg: &SimConfig, eps0: f64) -> Outcome<EquilibriumState> {
    let opts = PoissonEmdenOptions { theta: cfg.solver.theta, ..PoissonEmdenOptions::new(cfg.solver.tol, cfg.solver.max_iters) };
    let ve = cfg.potential().check("potential")?;
    solve_poisson_emden_with(&ve, eps0, &cfg.grid(), &opts).check("Poisson-Emden convergence")
}

/// Seeded combination of low cosine modes in `x` and `v`, times `M`.
fn random_modes(m: &DistributionField, rng: &mut ChaCha8Rng) -> Outcome<DistributionField> {
    let mut f = DistributionField::zeros(*m.grid());
    for axis in [Axis::X, Axis::V] {
        for p in mode_probes(m, axis, 3) {
            f = f.lincomb(1.0, &p, rng.gen_range(-1.0..1.0)).check("probe construction")?;
        }
    }
    Ok(f)
}

/// `M∞(1 + A·tanh(x₁ - v₁/2)) + noise·(random modes)`, unit mass.
pub fn initial_datum(cfg: &SimConfig, eq: &EquilibriumState) -> Outcome<DistributionField> {
    let amp = cfg.initial.amplitude;
    let bump = DistributionField::from_fn(*eq.grid(), |x, v| 1.0 + amp * (x[0] - 0.5 * v[0]).tanh()).check("initial datum")?;
    let mut f = eq.m_inf.mul(&bump).check("initial datum")?;
    if cfg.initial.noise > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.initial.seed);
        let noise = random_modes(&eq.m_inf, &mut rng)?;
        let scale = cfg.initial.noise * f.sup_norm() / noise.sup_norm().max(1e-300);
        f = f.lincomb(1.0, &noise, scale).check("initial datum")?;
    }
    if f.min() < 0.0 {
        return Err(fail("initial positivity", format!("f0 min = {:.3e}; lower the noise", f.min())));
    }
    Ok(f.scaled(1.0 / f.mass()))
}

pub fn equilibrium(sink: &Sink) -> Outcome<Vec<String>> {
    let eq = equilibrium_state(sink.cfg, sink.eps0)?;
    sink.report("equilibrium.csv", &eq.history_csv())?;
    sink.report("u_inf.csv", &io::spatial_slice_csv(&eq.u_inf))?;
    sink.spatial("u_inf.krlx", &eq.u_inf)?;
    sink.field("m_inf.krlx", &eq.m_inf)?;
    let lines = vec![
        format!("iterations={}", eq.iters),
        format!("residual={:.3e}", eq.residual),
        format!("z={:.12e}", eq.z),
        format!("lipschitz={:.6e}", eq.lipschitz_estimate()),
        format!("u_inf_min={:.6e}", eq.u_inf.min()),
        format!("mass={:.15}", eq.m_inf.mass()),
    ];
    sink.report("equilibrium_summary.txt", &(lines.join("\n") + "\n"))?;
    if (eq.m_inf.mass() - 1.0).abs() > 1e-12 {
        return Err(fail("mass of M_inf", format!("{:.3e} off unity", eq.m_inf.mass() - 1.0)));
    }
    // only the Newtonian kernel is positive; in d ≤ 2 U∞ changes sign
    if sink.cfg.grid.d == 3 && sink.eps0 > 0.0 && eq.u_inf.min() < -1e-10 {
        return Err(fail("U_inf >= 0 (repulsive, d = 3)", format!("min U_inf = {:.3e}", eq.u_inf.min())));
    }
    Ok(lines)
}

pub fn gap(sink: &Sink) -> Outcome<Vec<String>> {
    let cfg = sink.cfg;
    let ve = cfg.potential().check("potential")?;
    let sg = cfg.grid().spatial();
    let w = WittenPotential::new(sg, &ve, None).check("Witten potential")?;
    let report = spectral_gap(&w, cfg.solver.eigenvalues).check("spectral gap")?;
    sink.report("gap.csv", &report.csv())?;
    let mut summary = report.summary();
    if report.ambiguous {
        eprintln!("warning: gap {:.3e} is below ten eigensolver tolerances", report.gap);
        summary.push_str("ambiguous=true\n");
    }
    let mut failure = None;
    if sink.eps0 != 0.0 {
        let eq = equilibrium_state(cfg, sink.eps0)?;
        let pg = perturbed_gap_check(&ve, sink.eps0, &eq.u_inf, &report).check("perturbed gap")?;
        summary.push_str(&format!("perturbed_gap={:.10}\nperturbed_margin={:.6e}\n", pg.gap, pg.margin));
        if !pg.passes {
            failure = Some(fail("perturbed gap >= kappa0/4", format!("gap {:.6} vs kappa0/4 {:.6}", pg.gap, report.kappa0 / 4.0)));
        }
    }
    sink.report("gap_summary.txt", &summary)?;
    match failure {
        Some(f) => Err(f),
        None => Ok(summary.lines().map(String::from).collect()),
    }
}

pub fn semigroup_verify(sink: &Sink) -> Outcome<Vec<String>> {
    let cfg = sink.cfg;
    let grid: PhaseGrid = cfg.grid();
    let ve = cfg.potential().check("potential")?;
    let (potential, m, witten) = if sink.eps0 == 0.0 {
        let v = SpatialField::from_fn(grid.spatial(), |x| ve.value(x));
        let m = krlx::equilibrium::maxwellian(&v, &grid).check("Maxwellian")?.0;
        (v, m, WittenPotential::new(grid.spatial(), &ve, None))
    } else {
        let eq = equilibrium_state(cfg, sink.eps0)?;
        let w = WittenPotential::new(grid.spatial(), &ve, Some((sink.eps0, &eq.u_inf)));
        (eq.v_inf, eq.m_inf, w)
    };
    let kappa0 = spectral_gap(&witten.check("Witten potential")?, 2).check("spectral gap")?.kappa0;
    let pcfg = PropagatorConfig::new(grid, potential, cfg.time.dt)
        .check("propagator")?
        .with_limiter(cfg.limiter().check("limiter")?);

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.initial.seed);
    let mut smooth = Vec::new();
    for _ in 0..cfg.initial.random_probes {
        let f = m.add(&random_modes(&m, &mut rng)?.scaled(0.5)).check("probe construction")?;
        smooth.push(f);
    }
    let mut probes = vec![
        rough_probe(&grid, ProbeKind::RoughV).check("probe construction")?,
        rough_probe(&grid, ProbeKind::RoughX).check("probe construction")?,
    ];
    probes.extend(smooth.iter().cloned());

    let (alpha, beta, a) = (cfg.indices.alpha.unwrap(), cfg.indices.beta.unwrap(), cfg.indices.a.unwrap());
    let short = verify_short_time_exponents(&pcfg, alpha, beta, &probes).check("short-time exponents")?;
    sink.report("semigroup_short_time.csv", &short.csv())?;

    let perp_probe = project_perp(&random_modes(&m, &mut rng)?, &m).check("probe construction")?;
    let perp = verify_perp_decay(&pcfg, &perp_probe, &m, cfg.time.t_end.max(5.0), Some(kappa0)).check("perp decay")?;
    sink.report("semigroup_perp_decay.csv", &perp.csv())?;

    let conj_probes = if smooth.is_empty() { vec![m.clone()] } else { smooth };
    let conj = verify_conjugation_and_continuity(&pcfg, beta, a, &conj_probes).check("conjugation")?;
    let mut csv = String::from("probe,continuity_slope\n");
    for (k, fit) in conj.continuity.iter().enumerate() {
        let s = fit.as_ref().map(|f| format!("{:.6}", f.slope)).unwrap_or_else(|| "na".into());
        csv.push_str(&format!("{k},{s}\n"));
    }
    csv.push_str(&format!("# conj_ratio={:.6e},target={:.4}\n", conj.conj_ratio, conj.target));
    sink.report("semigroup_conjugation.csv", &csv)?;

    let opt = |x: Option<f64>| x.map(|v| format!("{v:.6}")).unwrap_or_else(|| "na".into());
    let lines = vec![
        format!("kappa0={kappa0}"),
        format!("slope_v={:.4}", short.fit_v.slope),
        format!("target_v={:.4}", short.target_v),
        format!("slope_x={:.4}", short.fit_x.slope),
        format!("target_x={:.4}", short.target_x),
        format!("lambda={}", opt(perp.lambda)),
        format!("lambda_star={}", opt(perp.lambda_star)),
        format!("perp_max_mass={:.3e}", perp.max_mass),
        format!("conj_ratio={:.6e}", conj.conj_ratio),
    ];
    sink.report("semigroup_summary.txt", &(lines.join("\n") + "\n"))?;
    if perp.max_mass > 1e-10 {
        return Err(fail("perpendicular mass stays zero", format!("max |mass| = {:.3e}", perp.max_mass)));
    }
    if let Some(l) = perp.lambda.filter(|l| !(*l > 0.0)) {
        return Err(fail("perpendicular decay rate > 0", format!("lambda = {l:.3e}")));
    }
    Ok(lines)
}

pub fn run(sink: &Sink) -> Outcome<Vec<String>> {
    let cfg = sink.cfg;
    let eq = equilibrium_state(cfg, sink.eps0)?;
    let f0 = initial_datum(cfg, &eq)?;
    let ve = cfg.potential().check("potential")?;
    let opts = RunOptions::new(cfg.time.t_end, cfg.time.dt)
        .with_snapshot_every(cfg.time.snapshot_every)
        .with_limiter(cfg.limiter().check("limiter")?);
    let traj = vpfp_run(&f0, &ve, sink.eps0, &opts).check("nonlinear run")?;
    for w in &traj.warnings {
        eprintln!("warning: {w}");
    }
    let report = decay_report(&traj, &eq, &cfg.fixed_point(sink.eps0), None).check("decay report")?;
    let cons = conservation_check(&traj).check("conservation")?;
    sink.report("decay.csv", &report.csv())?;
    sink.report("f_final.csv", &io::phase_slice_csv(&traj.last().f))?;
    sink.field("f0.krlx", &f0)?;
    sink.field("f_final.krlx", &traj.last().f)?;
    let mut summary = report.summary();
    summary.push_str(&format!(
        "steps={}\nmass_drift={:.3e}\nconservation={}\n",
        traj.steps,
        cons.mass_drift,
        if cons.passes() { "pass" } else { "fail" }
    ));
    sink.report("run_summary.txt", &summary)?;
    if !cons.passes() {
        return Err(fail(
            "conservation (mass drift <= 1e-10, min >= -1e-14, sup ratio <= 1)",
            format!("drift {:.3e}, min {:.3e}, sup ratio {:.6}", cons.mass_drift, cons.min_value, cons.linf_ratio),
        ));
    }
    Ok(summary.lines().map(String::from).collect())
}

pub fn picard(sink: &Sink) -> Outcome<Vec<String>> {
    let cfg = sink.cfg;
    let eq = equilibrium_state(cfg, sink.eps0)?;
    let f0 = initial_datum(cfg, &eq)?;
    let fp = cfg.fixed_point(sink.eps0);
    let opts = PicardOptions::new(cfg.time.t_end, cfg.time.node_dt, cfg.indices.kappa.unwrap())
        .with_dt(cfg.time.dt)
        .with_tol(cfg.solver.picard_tol)
        .with_mode(cfg.picard_mode().check("picard mode")?)
        .with_limiter(cfg.limiter().check("limiter")?);
    // fractional norms need the spectral operators, which are capped in size
    let ops = if fp.alpha > 0.0 || fp.beta > 0.0 { WeightedOperatorSet::new(eq.m_inf.clone()).ok() } else { None };
    let report = picard_iterate(&f0, &eq, &fp, &opts, ops.as_ref()).check("Picard contraction")?;
    for w in &report.warnings {
        eprintln!("warning: {w}");
    }
    sink.report("picard.csv", &report.csv())?;
    let last = report.times.len() - 1;
    sink.field("picard_final.krlx", &report.solution(last))?;
    let lines = vec![
        format!("iterations={}", report.iterations()),
        format!("converged={}", report.converged),
        format!("max_factor={:.6e}", report.max_factor()),
        format!("mean_factor={:.6e}", report.mean_factor()),
        format!("x_norm={}", report.x_norm),
    ];
    sink.report("picard_summary.txt", &(lines.join("\n") + "\n"))?;
    if !report.converged {
        return Err(fail("Picard convergence", format!("not converged after {} iterations", report.iterations())));
    }
    Ok(lines)
}

fn stored_fields(dir: &Path, out: &mut Vec<PathBuf>) -> std::io::Result<()> {
    let mut entries: Vec<PathBuf> = std::fs::read_dir(dir)?.map(|e| e.map(|e| e.path())).collect::<Result<_, _>>()?;
    entries.sort();
    for p in entries {
        if p.is_dir() {
            stored_fields(&p, out)?;
        } else if p.extension().is_some_and(|e| e == "krlx") {
            out.push(p);
        }
    }
    Ok(())
}

/// Quadrature sweep of the time-weight integral, plus a plot-ready slice of
/// every stored field below the output directory.
pub fn report(sink: &Sink) -> Outcome<Vec<String>> {
    let sweep = time_weight_sweep(40).check("time-weight quadrature")?;
    sink.report("quadrature.csv", &sweep.csv())?;
    let mut files = Vec::new();
    stored_fields(&sink.dir, &mut files).check("scan output")?;
    for path in &files {
        let csv = match io::load(path).check("read field")? {
            io::StoredField::Phase(f) => io::phase_slice_csv(&f),
            io::StoredField::Spatial(f) => io::spatial_slice_csv(&f),
        };
        let out = path.with_extension("slice.csv");
        let rel = Sink { dir: out.parent().unwrap().to_path_buf(), cfg: sink.cfg, eps0: sink.eps0 };
        rel.report(out.file_name().unwrap().to_str().unwrap(), &csv)?;
    }
    let lines = vec![format!("quadrature_max_ratio={:.6e}", sweep.max), format!("field_slices={}", files.len())];
    sink.report("report_summary.txt", &(lines.join("\n") + "\n"))?;
    if !sweep.max.is_finite() {
        return Err(fail("time-weight ratio bounded", "non-finite ratio"));
    }
    Ok(lines)
}
