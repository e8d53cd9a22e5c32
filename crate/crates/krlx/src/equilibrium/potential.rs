use crate::error::{Error, Result};
use crate::phasecore::{SpatialField, SpatialGrid};
use std::fmt;
use std::sync::Arc;

pub type ScalarFn = Arc<dyn Fn(&[f64; 3]) -> f64 + Send + Sync>;
pub type VectorFn = Arc<dyn Fn(&[f64; 3]) -> [f64; 3] + Send + Sync>;
pub type MatrixFn = Arc<dyn Fn(&[f64; 3]) -> [[f64; 3]; 3] + Send + Sync>;

/// Exterior potential families. Radial families are written as
/// `V(x) = φ(|x|²)`.
#[derive(Clone)]
pub enum PotentialKind {
    /// `ω²|x|²/2`.
    Quadratic { omega: f64 },
    /// `a|x|⁴/4 + b|x|²/2` with `a > 0`, `b ≥ 0`.
    Quartic { a: f64, b: f64 },
    /// `a(|x|² - c²)²/4` with `a > 0`.
    DoubleWell { a: f64, c: f64 },
    Custom { value: ScalarFn, grad: VectorFn, hess: Option<MatrixFn> },
}

/// Exterior potential `V_e` with analytic derivatives.
#[derive(Clone)]
pub struct PotentialSpec {
    pub d: usize,
    pub kind: PotentialKind,
    pub label: String,
}

impl fmt::Debug for PotentialSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "PotentialSpec({}, d={})", self.label, self.d)
    }
}

impl PotentialSpec {
    pub fn quadratic(d: usize, omega: f64) -> Self {
        Self { d, kind: PotentialKind::Quadratic { omega }, label: format!("quadratic(omega={omega})") }
    }

    pub fn quartic(d: usize, a: f64, b: f64) -> Self {
        Self { d, kind: PotentialKind::Quartic { a, b }, label: format!("quartic(a={a},b={b})") }
    }

    pub fn double_well(d: usize, a: f64, c: f64) -> Self {
        Self { d, kind: PotentialKind::DoubleWell { a, c }, label: format!("double-well(a={a},c={c})") }
    }

    pub fn custom(d: usize, label: &str, value: ScalarFn, grad: VectorFn, hess: Option<MatrixFn>) -> Self {
        Self { d, kind: PotentialKind::Custom { value, grad, hess }, label: label.to_string() }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = match self.kind {
            PotentialKind::Quadratic { omega } => !(omega > 0.0),
            PotentialKind::Quartic { a, b } => !(a > 0.0 && b >= 0.0),
            PotentialKind::DoubleWell { a, .. } => !(a > 0.0),
            PotentialKind::Custom { .. } => false,
        };
        if bad {
            return Err(Error::InvalidParam(format!("invalid potential parameters: {}", self.label)));
        }
        Ok(())
    }

    fn r2(&self, x: &[f64; 3]) -> f64 {
        (0..self.d).map(|k| x[k] * x[k]).sum()
    }

    /// `(φ, φ', φ'')` for the radial families.
    fn radial(&self, s: f64) -> Option<(f64, f64, f64)> {
        match self.kind {
            PotentialKind::Quadratic { omega } => {
                let w2 = omega * omega;
                Some((0.5 * w2 * s, 0.5 * w2, 0.0))
            }
            PotentialKind::Quartic { a, b } => Some((0.25 * a * s * s + 0.5 * b * s, 0.5 * a * s + 0.5 * b, 0.5 * a)),
            PotentialKind::DoubleWell { a, c } => {
                let t = s - c * c;
                Some((0.25 * a * t * t, 0.5 * a * t, 0.5 * a))
            }
            PotentialKind::Custom { .. } => None,
        }
    }

    pub fn value(&self, x: &[f64; 3]) -> f64 {
        match &self.kind {
            PotentialKind::Custom { value, .. } => value(x),
            _ => self.radial(self.r2(x)).unwrap().0,
        }
    }

    pub fn grad(&self, x: &[f64; 3]) -> [f64; 3] {
        match &self.kind {
            PotentialKind::Custom { grad, .. } => grad(x),
            _ => {
                let (_, p1, _) = self.radial(self.r2(x)).unwrap();
                let mut g = [0.0; 3];
                for k in 0..self.d {
                    g[k] = 2.0 * p1 * x[k];
                }
                g
            }
        }
    }

    pub fn hessian(&self, x: &[f64; 3]) -> Option<[[f64; 3]; 3]> {
        match &self.kind {
            PotentialKind::Custom { hess, .. } => hess.as_ref().map(|h| h(x)),
            _ => {
                let (_, p1, p2) = self.radial(self.r2(x)).unwrap();
                let mut h = [[0.0; 3]; 3];
                for i in 0..self.d {
                    for j in 0..self.d {
                        h[i][j] = 4.0 * p2 * x[i] * x[j] + if i == j { 2.0 * p1 } else { 0.0 };
                    }
                }
                Some(h)
            }
        }
    }

    pub fn laplacian(&self, x: &[f64; 3]) -> Option<f64> {
        self.hessian(x).map(|h| (0..self.d).map(|k| h[k][k]).sum())
    }

    /// Values on a grid; rejects negative values (`V_e ≥ 0`).
    pub fn sample(&self, grid: &SpatialGrid) -> Result<SpatialField> {
        if grid.d != self.d {
            return Err(Error::Shape(format!("potential d = {} on grid d = {}", self.d, grid.d)));
        }
        self.validate()?;
        let f = SpatialField::from_fn(*grid, |x| self.value(x));
        if f.min() < -1e-12 {
            return Err(Error::Domain(format!("{} takes negative values", self.label)));
        }
        if f.values().iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain(format!("{} not finite on the grid", self.label)));
        }
        Ok(f)
    }

    /// Gradient samples, one component per axis.
    pub fn sample_grad(&self, grid: &SpatialGrid) -> SpatialField {
        let comps = (0..self.d)
            .map(|k| (0..grid.len()).map(|i| self.grad(&grid.coords(i))[k]).collect())
            .collect();
        SpatialField::vector(*grid, comps).expect("finite gradient")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn radial_derivatives_match_finite_differences() {
        for v in [
            PotentialSpec::quadratic(3, 1.3),
            PotentialSpec::quartic(3, 0.5, 1.0),
            PotentialSpec::double_well(3, 1.0, 1.5),
        ] {
            let x = [0.3, -0.7, 1.1];
            let h = 1e-5;
            let g = v.grad(&x);
            let hs = v.hessian(&x).unwrap();
            for k in 0..3 {
                let mut xp = x;
                let mut xm = x;
                xp[k] += h;
                xm[k] -= h;
                let fd = (v.value(&xp) - v.value(&xm)) / (2.0 * h);
                assert!((fd - g[k]).abs() < 1e-7, "{}", v.label);
                let gp = v.grad(&xp);
                let gm = v.grad(&xm);
                for j in 0..3 {
                    assert!(((gp[j] - gm[j]) / (2.0 * h) - hs[j][k]).abs() < 1e-6);
                }
            }
        }
    }

    #[test]
    fn negative_potential_rejected() {
        let v = PotentialSpec::custom(1, "neg", Arc::new(|x| x[0] - 10.0), Arc::new(|_| [1.0, 0.0, 0.0]), None);
        let g = SpatialGrid::new(1, 2.0, 8).unwrap();
        assert!(v.sample(&g).is_err());
    }
}
