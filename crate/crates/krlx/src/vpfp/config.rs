use crate::error::{Error, Result};

/// Parameters of the Picard construction and of the decay diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct FixedPointConfig {
    pub d: usize,
    pub eps0: f64,
    /// Regularity index of the initial data (d=3).
    pub a: f64,
    pub alpha: f64,
    pub beta: f64,
    /// Short-time weight exponent of the `X` norm.
    pub delta: f64,
    /// Fraction of the rate used in the exponential weights.
    pub sigma: f64,
    /// Small-time weight of the field norm, `a/3 - ε`.
    pub gamma_y: f64,
    pub max_picard: usize,
}

impl FixedPointConfig {
    /// Defaults for dimension `d`: the d=2 setting (`α = β = δ = 0`,
    /// `σ = 1/2`) for d ≤ 2, and `a = α = 0.55`, `β = 0.9`, `δ = 0.1`,
    /// `σ = 1/12` for d=3.
    pub fn for_dimension(d: usize, eps0: f64) -> Self {
        if d == 3 {
            let a = 0.55;
            Self { d, eps0, a, alpha: a, beta: 0.9, delta: 0.1, sigma: 1.0 / 12.0, gamma_y: a / 3.0 - 0.01, max_picard: 30 }
        } else {
            Self { d, eps0, a: 0.55, alpha: 0.0, beta: 0.0, delta: 0.0, sigma: 0.5, gamma_y: 0.0, max_picard: 30 }
        }
    }

    /// Check every constraint. Returns warnings for the exploratory range
    /// `2/3 ≤ a < 3/4`.
    pub fn validate(&self) -> Result<Vec<String>> {
        let bad = |m: String| Err(Error::InvalidParam(m));
        if !(1..=3).contains(&self.d) {
            return bad(format!("dimension {} not in {{1, 2, 3}}", self.d));
        }
        if !self.eps0.is_finite() || self.eps0.abs() > 1.0 {
            return bad(format!("eps0 = {} must satisfy |eps0| <= 1", self.eps0));
        }
        if self.d == 2 && self.eps0 < 0.0 {
            return Err(Error::Unsupported(format!(
                "eps0 = {} < 0 in d = 2: the attractive two-dimensional case is excluded",
                self.eps0
            )));
        }
        let mut warnings = Vec::new();
        if self.d == 3 {
            if !(self.a > 0.5 && self.a < 0.75) {
                return bad(format!("a = {} must satisfy 1/2 < a < 3/4", self.a));
            }
            if self.a >= 2.0 / 3.0 {
                warnings.push(format!("a = {} is outside (1/2, 2/3); exploratory range", self.a));
            }
        }
        if !(self.beta < 1.0) {
            return bad(format!("beta = {} violates the constraint beta < 1", self.beta));
        }
        for (name, x) in [("alpha", self.alpha), ("beta", self.beta), ("delta", self.delta)] {
            if !(0.0..=1.0).contains(&x) {
                return bad(format!("{name} = {x} must lie in [0, 1]"));
            }
        }
        if !(3.0 * self.alpha - 1.0 < self.beta) {
            return bad(format!("3*alpha - 1 = {} violates 3*alpha - 1 < beta = {}", 3.0 * self.alpha - 1.0, self.beta));
        }
        if self.d == 3 {
            let cap = self.beta / 2.0 - 0.25;
            if !(self.delta > 0.0 && self.delta < cap) {
                return bad(format!("delta = {} must satisfy 0 < delta < beta/2 - 1/4 = {cap}", self.delta));
            }
            if !(self.gamma_y > 0.0 && self.gamma_y < self.a / 3.0) {
                return bad(format!("gamma_y = {} must satisfy 0 < gamma_y < a/3", self.gamma_y));
            }
        }
        if !(self.sigma > 0.0 && self.sigma <= 1.0) {
            return bad(format!("sigma = {} must lie in (0, 1]", self.sigma));
        }
        if self.max_picard == 0 {
            return bad("max_picard must be positive".into());
        }
        Ok(warnings)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        for d in 1..=3 {
            assert!(FixedPointConfig::for_dimension(d, 0.05).validate().is_ok());
        }
    }

    #[test]
    fn constraints_are_enforced() {
        let base = FixedPointConfig::for_dimension(3, 0.05);
        assert!(FixedPointConfig { beta: 1.2, ..base.clone() }.validate().is_err());
        assert!(FixedPointConfig { alpha: 0.7, beta: 0.9, ..base.clone() }.validate().is_err());
        assert!(FixedPointConfig { delta: 0.3, ..base.clone() }.validate().is_err());
        assert!(FixedPointConfig { a: 0.8, ..base.clone() }.validate().is_err());
        let w = FixedPointConfig { a: 0.7, gamma_y: 0.2, ..base }.validate().unwrap();
        assert_eq!(w.len(), 1);
        let d2 = FixedPointConfig::for_dimension(2, -0.05);
        assert!(matches!(d2.validate(), Err(Error::Unsupported(_))));
    }
}
