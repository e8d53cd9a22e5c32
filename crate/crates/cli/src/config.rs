//! Run configuration: a sectioned `key = value` file (TOML) with defaults
//! for every entry, validated in full before any workflow starts.

use krlx::equilibrium::PotentialSpec;
use krlx::phasecore::PhaseGrid;
use krlx::semigroup::{Limiter, PropagatorConfig};
use krlx::vpfp::{FixedPointConfig, PicardMode};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSection {
    pub d: usize,
    pub lx: f64,
    pub lv: f64,
    pub nx: usize,
    pub nv: usize,
}

impl Default for GridSection {
    fn default() -> Self {
        Self { d: 1, lx: 10.0, lv: 8.0, nx: 64, nv: 64 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PotentialSection {
    /// `quadratic`, `quartic` or `double-well`.
    pub family: String,
    pub omega: f64,
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

impl Default for PotentialSection {
    fn default() -> Self {
        Self { family: "quadratic".into(), omega: 1.0, a: 1.0, b: 0.0, c: 1.0 }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CouplingSection {
    pub eps0: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverSection {
    /// Poisson–Emden fixed-point tolerance.
    pub tol: f64,
    pub max_iters: usize,
    pub theta: f64,
    /// Number of Witten eigenvalues computed by `gap`.
    pub eigenvalues: usize,
    /// Picard stopping tolerance (relative to the first increment).
    pub picard_tol: f64,
    /// `long-time` or `short-time`.
    pub picard_mode: String,
}

impl Default for SolverSection {
    fn default() -> Self {
        Self { tol: 1e-10, max_iters: 300, theta: krlx::equilibrium::DEFAULT_THETA, eigenvalues: 5, picard_tol: 1e-10, picard_mode: "long-time".into() }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TimeSection {
    pub t_end: f64,
    /// Zero selects `0.9·h_x/L_v`.
    pub dt: f64,
    pub snapshot_every: f64,
    /// `minmod` or `off`.
    pub limiter: String,
    /// Node spacing of the Picard time grid.
    pub node_dt: f64,
}

impl Default for TimeSection {
    fn default() -> Self {
        Self { t_end: 10.0, dt: 0.0, snapshot_every: 0.25, limiter: "minmod".into(), node_dt: 0.1 }
    }
}

/// Diagnostic indices. Unset entries take the defaults of the dimension.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IndexSection {
    pub alpha: Option<f64>,
    pub beta: Option<f64>,
    pub a: Option<f64>,
    pub delta: Option<f64>,
    pub sigma: Option<f64>,
    /// `γ_y = a/3 - eps`.
    pub eps: Option<f64>,
    /// Rate in the exponential weights of the Picard norms.
    pub kappa: Option<f64>,
    pub max_picard: Option<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InitialSection {
    /// `f₀ ∝ M∞(1 + amplitude·tanh(x₁ - v₁/2) + noise·Σ c_k φ_k)`.
    pub amplitude: f64,
    /// Size of the seeded random low-mode perturbation.
    pub noise: f64,
    /// Seeded random probes added to the fixed family in `semigroup-verify`.
    pub random_probes: usize,
    pub seed: u64,
}

impl Default for InitialSection {
    fn default() -> Self {
        Self { amplitude: 0.5, noise: 0.0, random_probes: 2, seed: 0 }
    }
}

/// Parameter sweep: `run` and `picard` execute once per listed coupling.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSection {
    pub eps0: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    pub dir: PathBuf,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self { dir: PathBuf::from("krlx-out") }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub grid: GridSection,
    pub potential: PotentialSection,
    pub coupling: CouplingSection,
    pub solver: SolverSection,
    pub time: TimeSection,
    pub indices: IndexSection,
    pub initial: InitialSection,
    pub sweep: SweepSection,
    pub output: OutputSection,
}

/// Rejected configuration (exit code 2).
#[derive(Debug)]
pub struct ConfigError(pub String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "config error: {}", self.0)
    }
}

fn reject<T>(msg: impl Into<String>) -> Result<T, ConfigError> {
    Err(ConfigError(msg.into()))
}

impl SimConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| ConfigError(e.message().to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// Fill unset indices, choose `dt`, and check every constraint.
    /// Returns the warnings of the accepted configuration.
    pub fn resolve(&mut self) -> Result<Vec<String>, ConfigError> {
        let g = &self.grid;
        let grid = PhaseGrid::new(g.d, g.lx, g.lv, g.nx, g.nv).map_err(|e| ConfigError(e.to_string()))?;
        let base = FixedPointConfig::for_dimension(g.d, self.coupling.eps0);
        let ix = &mut self.indices;
        ix.alpha.get_or_insert(base.alpha);
        ix.beta.get_or_insert(base.beta);
        ix.a.get_or_insert(base.a);
        ix.delta.get_or_insert(base.delta);
        ix.sigma.get_or_insert(base.sigma);
        ix.eps.get_or_insert(base.a / 3.0 - base.gamma_y);
        ix.kappa.get_or_insert(0.2);
        ix.max_picard.get_or_insert(base.max_picard);
        if self.time.dt == 0.0 {
            self.time.dt = 0.9 * grid.hx() / grid.lv;
        }

        let mut warnings = Vec::new();
        for eps0 in self.couplings() {
            warnings = self.fixed_point(eps0).validate().map_err(|e| ConfigError(e.to_string()))?;
        }
        self.potential()?;
        self.limiter()?;
        self.picard_mode()?;
        let s = &self.solver;
        if !(s.tol > 0.0 && s.picard_tol > 0.0) || s.max_iters == 0 {
            return reject("solver tolerances and max_iters must be positive");
        }
        if !(s.theta > 0.0 && s.theta <= 1.0) {
            return reject(format!("theta = {} must lie in (0, 1]", s.theta));
        }
        if s.eigenvalues < 2 {
            return reject("eigenvalues must be at least 2");
        }
        let t = &self.time;
        if !(t.t_end > 0.0 && t.dt > 0.0 && t.snapshot_every > 0.0 && t.node_dt > 0.0) {
            return reject("t_end, dt, snapshot_every and node_dt must be positive");
        }
        if !(self.indices.kappa.unwrap() > 0.0) {
            return reject("kappa must be positive");
        }
        if !(self.initial.amplitude.abs() < 1.0 && self.initial.noise >= 0.0) {
            return reject("initial amplitude must satisfy |amplitude| < 1 and noise >= 0");
        }
        PropagatorConfig::from_spec(grid, &self.potential()?, self.time.dt)
            .and_then(|c| c.validate())
            .map_err(|e| ConfigError(e.to_string()))?;
        self.check_output()?;
        Ok(warnings)
    }

    fn check_output(&self) -> Result<(), ConfigError> {
        let dir = &self.output.dir;
        let probe = dir.join(".krlx-write-test");
        std::fs::create_dir_all(dir)
            .and_then(|_| std::fs::write(&probe, b""))
            .and_then(|_| std::fs::remove_file(&probe))
            .map_err(|e| ConfigError(format!("output directory {} is not writable: {e}", dir.display())))
    }

    /// Coupling constants to run: the sweep list, or the single `eps0`.
    pub fn couplings(&self) -> Vec<f64> {
        if self.sweep.eps0.is_empty() {
            vec![self.coupling.eps0]
        } else {
            self.sweep.eps0.clone()
        }
    }

    pub fn grid(&self) -> PhaseGrid {
        let g = &self.grid;
        PhaseGrid::new(g.d, g.lx, g.lv, g.nx, g.nv).expect("validated grid")
    }

    pub fn potential(&self) -> Result<PotentialSpec, ConfigError> {
        let p = &self.potential;
        let d = self.grid.d;
        let spec = match p.family.as_str() {
            "quadratic" => PotentialSpec::quadratic(d, p.omega),
            "quartic" => PotentialSpec::quartic(d, p.a, p.b),
            "double-well" => PotentialSpec::double_well(d, p.a, p.c),
            other => return reject(format!("unknown potential family '{other}' (quadratic, quartic, double-well)")),
        };
        spec.validate().map_err(|e| ConfigError(e.to_string()))?;
        Ok(spec)
    }

    pub fn limiter(&self) -> Result<Limiter, ConfigError> {
        match self.time.limiter.as_str() {
            "minmod" => Ok(Limiter::Minmod),
            "off" => Ok(Limiter::Off),
            other => reject(format!("unknown limiter '{other}' (minmod, off)")),
        }
    }

    pub fn picard_mode(&self) -> Result<PicardMode, ConfigError> {
        match self.solver.picard_mode.as_str() {
            "long-time" => Ok(PicardMode::LongTime),
            "short-time" => Ok(PicardMode::ShortTime),
            other => reject(format!("unknown picard_mode '{other}' (long-time, short-time)")),
        }
    }

    pub fn fixed_point(&self, eps0: f64) -> FixedPointConfig {
        let ix = &self.indices;
        let a = ix.a.unwrap();
        FixedPointConfig {
            d: self.grid.d,
            eps0,
            a,
            alpha: ix.alpha.unwrap(),
            beta: ix.beta.unwrap(),
            delta: ix.delta.unwrap(),
            sigma: ix.sigma.unwrap(),
            gamma_y: a / 3.0 - ix.eps.unwrap(),
            max_picard: ix.max_picard.unwrap(),
        }
    }

    /// The resolved configuration as `# `-prefixed lines.
    pub fn provenance(&self) -> String {
        let body = toml::to_string(self).expect("config serializes");
        let mut s = String::from("# krlx resolved configuration\n");
        for line in body.lines().filter(|l| !l.is_empty()) {
            s.push_str("# ");
            s.push_str(line);
            s.push('\n');
        }
        s
    }
}
