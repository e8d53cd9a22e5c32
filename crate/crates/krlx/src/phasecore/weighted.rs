//! The weighted space `B = L^2(M^{-1})` and the operators `Λ_x`, `Λ_v`.
//!
//! `Λ_a² = A_a^* A_a + 1` per axis group, where `A` is the forward difference
//! of `u = f/M` scaled by the geometric-mean face weight
//! `M_{i+1/2} = sqrt(M_i M_{i+1})` and boundary faces carry no flux. In the
//! symmetric coordinates `φ = f / sqrt(M)` each axis contributes the
//! tridiagonal matrix with off-diagonal `-1/h²` and diagonal
//! `(ρ_{i+1/2} + 1/ρ_{i-1/2}) / h²`, `ρ = sqrt(M_{i+1}/M_i)`.

use super::field::DistributionField;
use super::grid::PhaseGrid;
use crate::error::{Error, Result};
use crate::exec;
use crate::linalg;
use nalgebra::DMatrix;
use std::sync::OnceLock;

/// Fractional calculus is offered only up to this many unknowns.
pub const MAX_SPECTRAL_UNKNOWNS: usize = 100_000;
/// Krylov dimension for non-separable `Λ_x` matrix functions.
pub const LANCZOS_VECTORS: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    X,
    V,
}

/// `⟨f, g⟩_B = Σ f g / M · vol`.
pub fn b_inner(f: &DistributionField, g: &DistributionField, m: &DistributionField) -> Result<f64> {
    f.check_same_grid(g)?;
    f.check_same_grid(m)?;
    let (fv, gv, mv) = (f.values(), g.values(), m.values());
    if let Some(i) = mv.iter().position(|&x| x <= 0.0) {
        return Err(Error::Domain(format!("reference weight nonpositive at cell {i}")));
    }
    Ok(exec::sum(fv.len(), |i| fv[i] * gv[i] / mv[i]) * f.grid().cell_volume())
}

pub fn bnorm(f: &DistributionField, m: &DistributionField) -> Result<f64> {
    Ok(b_inner(f, f, m)?.max(0.0).sqrt())
}

/// `f - (∫f / ∫M) M`, the B-orthogonal projection onto zero-mass fields.
pub fn project_perp(f: &DistributionField, m: &DistributionField) -> Result<DistributionField> {
    f.check_same_grid(m)?;
    if m.mass() == 0.0 {
        return Err(Error::Domain("reference weight has zero mass".into()));
    }
    let c = f.mass() / m.mass();
    let (fv, mv) = (f.values(), m.values());
    let mut out = vec![0.0; fv.len()];
    exec::fill(&mut out, |i| fv[i] - c * mv[i]);
    Ok(DistributionField::from_raw(*f.grid(), out))
}

/// One-dimensional eigendecomposition `T = Q diag(μ) Qᵀ`, `Q` row-major.
#[derive(Debug, Clone)]
struct AxisEig {
    mu: Vec<f64>,
    q: Vec<f64>,
}

impl AxisEig {
    fn from_log_weights(lnw: &[f64], h: f64) -> Result<Self> {
        let n = lnw.len();
        let h2 = h * h;
        let mut diag = vec![0.0; n];
        for i in 0..n - 1 {
            let lr = 0.5 * (lnw[i + 1] - lnw[i]);
            diag[i] += lr.exp() / h2;
            diag[i + 1] += (-lr).exp() / h2;
        }
        let e = linalg::sym_eigen(linalg::tridiag(&diag, &vec![-1.0 / h2; n - 1]))?;
        let mut q = vec![0.0; n * n];
        for r in 0..n {
            for c in 0..n {
                q[r * n + c] = e.vectors[(r, c)];
            }
        }
        Ok(Self { mu: e.values, q })
    }

    fn n(&self) -> usize {
        self.mu.len()
    }

    /// `y = Qᵀ x` (forward) or `y = Q x` (inverse), in place on `x`.
    fn transform(&self, x: &mut [f64], inverse: bool) {
        let n = self.n();
        let mut y = vec![0.0; n];
        if inverse {
            for r in 0..n {
                let row = &self.q[r * n..(r + 1) * n];
                y[r] = row.iter().zip(x.iter()).map(|(a, b)| a * b).sum();
            }
        } else {
            for (r, &xr) in x.iter().enumerate() {
                let row = &self.q[r * n..(r + 1) * n];
                for c in 0..n {
                    y[c] += row[c] * xr;
                }
            }
        }
        x.copy_from_slice(&y);
    }
}

#[derive(Debug, Clone)]
enum XSpectral {
    Separable(Vec<AxisEig>),
    /// Log spatial weight for matrix-free Lanczos on each velocity slice.
    Krylov(Vec<f64>),
}

#[derive(Debug, Clone)]
struct Spectral {
    x: XSpectral,
    v: Vec<AxisEig>,
}

/// Discrete `Λ_x²`, `Λ_v²` and their spectral calculus for a reference weight.
#[derive(Debug)]
pub struct WeightedOperatorSet {
    grid: PhaseGrid,
    m: DistributionField,
    ln_m: Vec<f64>,
    spectral: OnceLock<Spectral>,
}

impl WeightedOperatorSet {
    pub fn new(m: DistributionField) -> Result<Self> {
        if let Some(i) = m.values().iter().position(|&x| x <= 0.0) {
            return Err(Error::Domain(format!("reference weight nonpositive at cell {i}")));
        }
        let ln_m = m.values().iter().map(|x| x.ln()).collect();
        Ok(Self { grid: *m.grid(), m, ln_m, spectral: OnceLock::new() })
    }

    pub fn grid(&self) -> &PhaseGrid {
        &self.grid
    }

    pub fn weight(&self) -> &DistributionField {
        &self.m
    }

    pub fn b_inner(&self, f: &DistributionField, g: &DistributionField) -> Result<f64> {
        b_inner(f, g, &self.m)
    }

    pub fn bnorm(&self, f: &DistributionField) -> Result<f64> {
        bnorm(f, &self.m)
    }

    pub fn project_perp(&self, f: &DistributionField) -> Result<DistributionField> {
        project_perp(f, &self.m)
    }

    fn check(&self, f: &DistributionField) -> Result<()> {
        f.check_same_grid(&self.m)
    }

    fn phase_axes(&self, axis: Axis) -> std::ops::Range<usize> {
        let d = self.grid.d;
        match axis {
            Axis::X => 0..d,
            Axis::V => d..2 * d,
        }
    }

    fn axis_h(&self, a: usize) -> f64 {
        if a < self.grid.d {
            self.grid.hx()
        } else {
            self.grid.hv()
        }
    }

    /// `D_a f = A_a^* A_a f` along phase axis `a`.
    fn drift_laplacian(&self, f: &[f64], a: usize) -> Vec<f64> {
        let dims = self.grid.dims();
        let stride: usize = dims[a + 1..].iter().product();
        let h2 = self.axis_h(a).powi(2);
        let ln_m = &self.ln_m;
        let mut out = f.to_vec();
        exec::for_each_line(&mut out, &dims, a, |s, buf| {
            let n = buf.len();
            let mut flux_prev = 0.0;
            let mut res = vec![0.0; n];
            for i in 0..n {
                let flux = if i + 1 < n {
                    let lr = 0.5 * (ln_m[s + (i + 1) * stride] - ln_m[s + i * stride]);
                    buf[i + 1] * (-lr).exp() - buf[i] * lr.exp()
                } else {
                    0.0
                };
                res[i] = -(flux - flux_prev) / h2;
                flux_prev = flux;
            }
            buf.copy_from_slice(&res);
        });
        out
    }

    /// `Λ_axis² f`.
    pub fn apply_lambda_sq(&self, f: &DistributionField, axis: Axis) -> Result<DistributionField> {
        self.check(f)?;
        let mut out = f.values().to_vec();
        for a in self.phase_axes(axis) {
            let dl = self.drift_laplacian(f.values(), a);
            for (o, x) in out.iter_mut().zip(dl) {
                *o += x;
            }
        }
        Ok(DistributionField::from_raw(self.grid, out))
    }

    /// `Λ² f = (Λ_x² + Λ_v² - 1) f`.
    pub fn apply_lambda_sq_full(&self, f: &DistributionField) -> Result<DistributionField> {
        let x = self.apply_lambda_sq(f, Axis::X)?;
        let v = self.apply_lambda_sq(f, Axis::V)?;
        x.add(&v)?.lincomb(1.0, f, -1.0)
    }

    /// `‖A_axis f‖_B²`, the drift-form energy evaluated face by face.
    pub fn drift_energy(&self, f: &DistributionField, axis: Axis) -> Result<f64> {
        self.check(f)?;
        let dims = self.grid.dims();
        let fv = f.values();
        let ln_m = &self.ln_m;
        let mut total = 0.0;
        for a in self.phase_axes(axis) {
            let stride: usize = dims[a + 1..].iter().product();
            let n = dims[a];
            let h2 = self.axis_h(a).powi(2);
            total += exec::sum(fv.len(), |idx| {
                if (idx / stride) % n == n - 1 {
                    return 0.0;
                }
                let j = idx + stride;
                let u0 = fv[idx] * (-ln_m[idx]).exp();
                let u1 = fv[j] * (-ln_m[j]).exp();
                (0.5 * (ln_m[idx] + ln_m[j])).exp() * (u1 - u0).powi(2) / h2
            });
        }
        Ok(total * self.grid.cell_volume())
    }

    fn spectral(&self) -> Result<&Spectral> {
        if let Some(s) = self.spectral.get() {
            return Ok(s);
        }
        if self.grid.len() > MAX_SPECTRAL_UNKNOWNS {
            return Err(Error::Capability(format!(
                "fractional calculus limited to {} unknowns (grid has {})",
                MAX_SPECTRAL_UNKNOWNS,
                self.grid.len()
            )));
        }
        let s = self.build_spectral()?;
        let _ = self.spectral.set(s);
        Ok(self.spectral.get().expect("spectral cache set"))
    }

    fn build_spectral(&self) -> Result<Spectral> {
        let g = &self.grid;
        let (nxd, nvd) = (g.nxd(), g.nvd());
        let ln_m = &self.ln_m;
        // product structure M(x, v) = w(x) m(v)
        let lnw: Vec<f64> = (0..nxd).map(|i| ln_m[i * nvd]).collect();
        let lnv: Vec<f64> = (0..nvd).map(|j| ln_m[j] - ln_m[0]).collect();
        let scale = ln_m.iter().fold(1.0f64, |a, &b| a.max(b.abs()));
        let tol = 1e-9 * scale;
        for i in 0..nxd {
            for j in 0..nvd {
                if (ln_m[i * nvd + j] - lnw[i] - lnv[j]).abs() > tol {
                    return Err(Error::Capability(
                        "reference weight is not of product form w(x) m(v)".into(),
                    ));
                }
            }
        }
        let sv = g.velocity();
        let v = match axis_lines(&lnv, &sv.dims(), tol) {
            Some(lines) => lines
                .iter()
                .map(|l| AxisEig::from_log_weights(l, g.hv()))
                .collect::<Result<Vec<_>>>()?,
            None => {
                return Err(Error::Capability(
                    "velocity weight is not separable across axes".into(),
                ))
            }
        };
        let x = match axis_lines(&lnw, &g.spatial().dims(), tol) {
            Some(lines) => XSpectral::Separable(
                lines
                    .iter()
                    .map(|l| AxisEig::from_log_weights(l, g.hx()))
                    .collect::<Result<Vec<_>>>()?,
            ),
            None => XSpectral::Krylov(lnw),
        };
        Ok(Spectral { x, v })
    }

    /// Whether `Λ_x` uses the dense separable path.
    pub fn x_is_separable(&self) -> Result<bool> {
        Ok(matches!(self.spectral()?.x, XSpectral::Separable(_)))
    }

    /// Smallest eigenvalue of `Λ_axis²` from the cached spectral data.
    pub fn min_eigenvalue(&self, axis: Axis) -> Result<f64> {
        let s = self.spectral()?;
        let sum_min = |eigs: &[AxisEig]| 1.0 + eigs.iter().map(|e| e.mu[0]).sum::<f64>();
        match (axis, &s.x) {
            (Axis::V, _) => Ok(sum_min(&s.v)),
            (Axis::X, XSpectral::Separable(e)) => Ok(sum_min(e)),
            (Axis::X, XSpectral::Krylov(_)) => Err(Error::Capability(
                "minimum eigenvalue needs the separable path".into(),
            )),
        }
    }

    /// `Λ_axis^s f` by spectral calculus (any real `s`).
    pub fn lambda_power(&self, f: &DistributionField, axis: Axis, s: f64) -> Result<DistributionField> {
        self.check(f)?;
        if s == 0.0 {
            return Ok(f.clone());
        }
        let spec = self.spectral()?;
        let mut phi = self.to_phi(f);
        match (axis, &spec.x) {
            (Axis::V, _) => self.spectral_scale(&mut phi, &spec.v, self.grid.d, s, true),
            (Axis::X, XSpectral::Separable(e)) => self.spectral_scale(&mut phi, e, 0, s, true),
            (Axis::X, XSpectral::Krylov(lnw)) => self.krylov_x(&mut phi, lnw, s, true)?,
        };
        Ok(self.from_phi(phi))
    }

    /// `‖Λ_axis^s f‖_B`.
    pub fn lambda_norm(&self, f: &DistributionField, axis: Axis, s: f64) -> Result<f64> {
        self.check(f)?;
        if s == 0.0 {
            return self.bnorm(f);
        }
        let spec = self.spectral()?;
        let mut phi = self.to_phi(f);
        let sq = match (axis, &spec.x) {
            (Axis::V, _) => self.spectral_scale(&mut phi, &spec.v, self.grid.d, s, false),
            (Axis::X, XSpectral::Separable(e)) => self.spectral_scale(&mut phi, e, 0, s, false),
            (Axis::X, XSpectral::Krylov(lnw)) => self.krylov_x(&mut phi, lnw, s, false)?,
        };
        Ok((sq * self.grid.cell_volume()).sqrt())
    }

    /// `‖Λ_x^α f‖_B + ‖Λ_v^β f‖_B`.
    pub fn frac_norm(&self, f: &DistributionField, alpha: f64, beta: f64) -> Result<f64> {
        for (name, e) in [("alpha", alpha), ("beta", beta)] {
            if !(0.0..=2.0).contains(&e) {
                return Err(Error::InvalidParam(format!("{name} = {e} outside [0, 2]")));
            }
        }
        Ok(self.lambda_norm(f, Axis::X, alpha)? + self.lambda_norm(f, Axis::V, beta)?)
    }

    fn to_phi(&self, f: &DistributionField) -> Vec<f64> {
        let fv = f.values();
        let mut phi = vec![0.0; fv.len()];
        exec::fill(&mut phi, |i| fv[i] * (-0.5 * self.ln_m[i]).exp());
        phi
    }

    fn from_phi(&self, phi: Vec<f64>) -> DistributionField {
        let mut out = vec![0.0; phi.len()];
        exec::fill(&mut out, |i| phi[i] * (0.5 * self.ln_m[i]).exp());
        DistributionField::from_raw(self.grid, out)
    }

    /// Transform along `eigs.len()` consecutive phase axes starting at
    /// `first`, scale by `(1+Σμ)^{s/2}`, and either transform back (returning
    /// 0) or return the scaled squared norm without transforming back.
    fn spectral_scale(&self, phi: &mut [f64], eigs: &[AxisEig], first: usize, s: f64, back: bool) -> f64 {
        let dims = self.grid.dims();
        for (k, e) in eigs.iter().enumerate() {
            exec::for_each_line(phi, &dims, first + k, |_, buf| e.transform(buf, false));
        }
        let nd = eigs.len();
        let strides: Vec<usize> = (0..nd).map(|k| dims[first + k + 1..].iter().product()).collect();
        let n = eigs[0].n();
        let factor = |idx: usize| {
            let lam = 1.0
                + (0..nd)
                    .map(|k| eigs[k].mu[(idx / strides[k]) % n].max(0.0))
                    .sum::<f64>();
            lam.powf(0.5 * s)
        };
        if !back {
            return exec::sum(phi.len(), |i| (factor(i) * phi[i]).powi(2));
        }
        let src = phi.to_vec();
        exec::fill(phi, |i| factor(i) * src[i]);
        for (k, e) in eigs.iter().enumerate() {
            exec::for_each_line(phi, &dims, first + k, |_, buf| e.transform(buf, true));
        }
        0.0
    }

    /// Lanczos evaluation of `Λ_x^s` on every velocity slice.
    fn krylov_x(&self, phi: &mut [f64], lnw: &[f64], s: f64, back: bool) -> Result<f64> {
        let g = &self.grid;
        let sx = g.spatial();
        let (nxd, nvd) = (g.nxd(), g.nvd());
        let h2 = g.hx().powi(2);
        let d = g.d;
        let n = g.nx;
        let op = |x: &[f64], y: &mut [f64]| {
            for i in 0..nxd {
                let m = sx.unflatten(i);
                let mut acc = x[i];
                for k in 0..d {
                    let st = sx.stride(k);
                    if m[k] + 1 < n {
                        let lr = 0.5 * (lnw[i + st] - lnw[i]);
                        acc += (lr.exp() * x[i] - x[i + st]) / h2;
                    }
                    if m[k] > 0 {
                        let lr = 0.5 * (lnw[i] - lnw[i - st]);
                        acc += ((-lr).exp() * x[i] - x[i - st]) / h2;
                    }
                }
                y[i] = acc;
            }
        };
        let m = LANCZOS_VECTORS.min(nxd);
        let phi_ro: &[f64] = phi;
        let slices: Vec<Result<(f64, Vec<f64>)>> = exec::map(nvd, |j| {
            let b: Vec<f64> = (0..nxd).map(|i| phi_ro[i * nvd + j]).collect();
            if back {
                Ok((0.0, linalg::lanczos_fn_apply(&op, &b, m, |l| l.max(1.0).powf(0.5 * s))?))
            } else {
                let nrm = linalg::lanczos_fn_norm(&op, &b, m, |l| l.max(1.0).powf(0.5 * s))?;
                Ok((nrm * nrm, Vec::new()))
            }
        });
        let mut sq = 0.0;
        for (j, r) in slices.into_iter().enumerate() {
            let (val, vec) = r?;
            sq += val;
            if back {
                for i in 0..nxd {
                    phi[i * nvd + j] = vec[i];
                }
            }
        }
        Ok(sq)
    }

    /// Dense matrix of `Λ_axis²` in `f` coordinates (tests and oracles).
    pub fn dense_lambda_sq(&self, axis: Axis) -> Result<DMatrix<f64>> {
        let n = self.grid.len();
        if n > 4096 {
            return Err(Error::Capability("dense assembly limited to 4096 unknowns".into()));
        }
        let mut a = DMatrix::zeros(n, n);
        for c in 0..n {
            let mut e = vec![0.0; n];
            e[c] = 1.0;
            let col = self.apply_lambda_sq(&DistributionField::from_raw(self.grid, e), axis)?;
            for r in 0..n {
                a[(r, c)] = col.values()[r];
            }
        }
        Ok(a)
    }
}

/// If `lnw` on a tensor grid is a sum of per-axis functions, return the
/// per-axis lines through the origin index.
fn axis_lines(lnw: &[f64], dims: &[usize], tol: f64) -> Option<Vec<Vec<f64>>> {
    let d = dims.len();
    let n = dims[0];
    let stride = |k: usize| dims[k + 1..].iter().product::<usize>();
    let lines: Vec<Vec<f64>> = (0..d)
        .map(|k| (0..n).map(|i| lnw[i * stride(k)]).collect())
        .collect();
    for (idx, &val) in lnw.iter().enumerate() {
        let mut pred = -((d - 1) as f64) * lnw[0];
        for (k, line) in lines.iter().enumerate() {
            pred += line[(idx / stride(k)) % n];
        }
        if (val - pred).abs() > tol {
            return None;
        }
    }
    Some(lines)
}
