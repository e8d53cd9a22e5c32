//! The time-weight convolution integral,
//! `I(t) = ∫₀ᵗ (s^{γ₁-1} + 1)((t-s)^{γ₂-1} + 1) e^{-c(t-s)} ds`,
//! by Gauss–Legendre after substitutions that remove both endpoint
//! singularities.

use crate::error::Result;
use crate::linalg::{sym_eigen, tridiag};

const ORDER: usize = 16;
/// Geometric panels `[2^{-k-1}, 2^{-k}]` toward `y = 0`, where the
/// substituted integrands keep fractional powers of `y`.
const GRADED: i32 = 48;
const UNIFORM: usize = 16;

/// Gauss–Legendre nodes and weights on `[-1, 1]` (Golub–Welsch).
pub fn gauss_legendre(n: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    let diag = vec![0.0; n];
    let off: Vec<f64> = (1..n).map(|k| k as f64 / ((4 * k * k - 1) as f64).sqrt()).collect();
    let eig = sym_eigen(tridiag(&diag, &off))?;
    let w = (0..n).map(|k| 2.0 * eig.vectors[(0, k)].powi(2)).collect();
    Ok((eig.values, w))
}

/// Composite rule for `∫₀¹ f(y) dy`: graded on `[0, 1/2]`, uniform above.
fn composite<F: Fn(f64) -> f64>(rule: &(Vec<f64>, Vec<f64>), f: F) -> f64 {
    let panel = |a: f64, b: f64| {
        let (c, r) = (0.5 * (a + b), 0.5 * (b - a));
        r * rule.0.iter().zip(&rule.1).map(|(x, w)| w * f(c + r * x)).sum::<f64>()
    };
    let mut s = 0.0;
    for k in (1..=GRADED).rev() {
        s += panel(0.5f64.powi(k + 1), 0.5f64.powi(k));
    }
    let h = 0.5 / UNIFORM as f64;
    for p in 0..UNIFORM {
        s += panel(0.5 + p as f64 * h, 0.5 + (p + 1) as f64 * h);
    }
    s
}

pub fn time_weight_integral(g1: f64, g2: f64, c: f64, t: f64) -> Result<f64> {
    let rule = gauss_legendre(ORDER)?;
    let m = 0.5 * t;
    // s = m y^{1/γ₁} on [0, t/2]: s^{γ₁-1} ds = m^{γ₁}/γ₁ dy
    let left = composite(&rule, |y| {
        let s = m * y.powf(1.0 / g1);
        let ds = m.powf(g1) / g1 + m / g1 * y.powf(1.0 / g1 - 1.0);
        ds * ((t - s).powf(g2 - 1.0) + 1.0) * (-c * (t - s)).exp()
    });
    // t - s = m y^{1/γ₂} on [t/2, t]
    let right = composite(&rule, |y| {
        let r = m * y.powf(1.0 / g2);
        let dr = m.powf(g2) / g2 + m / g2 * y.powf(1.0 / g2 - 1.0);
        dr * ((t - r).powf(g1 - 1.0) + 1.0) * (-c * r).exp()
    });
    Ok(left + right)
}

/// `I(t)` divided by `t^{γ₁+γ₂-1} + 1` for `t ≤ 1` and by 1 otherwise.
pub fn time_weight_ratio(g1: f64, g2: f64, c: f64, t: f64) -> Result<f64> {
    let i = time_weight_integral(g1, g2, c, t)?;
    Ok(if t <= 1.0 { i / (t.powf(g1 + g2 - 1.0) + 1.0) } else { i })
}

#[derive(Debug, Clone)]
pub struct QuadratureSweep {
    /// `(γ₁, γ₂, t, ratio)`.
    pub rows: Vec<(f64, f64, f64, f64)>,
    pub max: f64,
}

impl QuadratureSweep {
    pub fn csv(&self) -> String {
        let mut s = String::from("gamma1,gamma2,t,ratio\n");
        for (a, b, t, r) in &self.rows {
            s.push_str(&format!("{a},{b},{t:.6e},{r:.10e}\n"));
        }
        s.push_str(&format!("# max={:.6e}\n", self.max));
        s
    }
}

/// Ratios on `γ₁ ∈ {0.3, 1}`, `γ₂ ∈ {0.5, 1}`, `c = 1`, over `points`
/// log-spaced times in `[1e-3, 50]`.
pub fn time_weight_sweep(points: usize) -> Result<QuadratureSweep> {
    let mut rows = Vec::new();
    let mut max = 0.0f64;
    for g1 in [0.3, 1.0] {
        for g2 in [0.5, 1.0] {
            for k in 0..points {
                let t = 1e-3 * (5e4f64).powf(k as f64 / (points - 1) as f64);
                let r = time_weight_ratio(g1, g2, 1.0, t)?;
                max = max.max(r);
                rows.push((g1, g2, t, r));
            }
        }
    }
    Ok(QuadratureSweep { rows, max })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn legendre_rule_integrates_polynomials() {
        let (x, w) = gauss_legendre(6).unwrap();
        let q: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(10)).sum();
        assert!((q - 2.0 / 11.0).abs() < 1e-13);
    }

    #[test]
    fn smooth_case_closed_form() {
        // γ₁ = γ₂ = 1: 4(1 - e^{-ct})/c
        for t in [1e-3, 0.5, 7.0, 50.0] {
            let i = time_weight_integral(1.0, 1.0, 1.0, t).unwrap();
            assert!((i - 4.0 * (1.0 - (-t).exp())).abs() < 1e-12 * i.max(1.0));
        }
    }
}
