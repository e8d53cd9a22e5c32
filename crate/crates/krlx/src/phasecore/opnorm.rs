//! Operator-norm estimation on `B` by power iteration on `A^* A`.

use super::field::DistributionField;
use super::weighted::{b_inner, Axis, WeightedOperatorSet};
use crate::error::{Error, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// A linear map on fields together with its `B`-adjoint.
pub trait BLinearMap {
    fn apply(&self, f: &DistributionField) -> Result<DistributionField>;
    fn apply_adjoint(&self, f: &DistributionField) -> Result<DistributionField>;
}

/// Map built from two closures.
pub struct FnMap<F, G> {
    pub forward: F,
    pub adjoint: G,
}

impl<F, G> BLinearMap for FnMap<F, G>
where
    F: Fn(&DistributionField) -> Result<DistributionField>,
    G: Fn(&DistributionField) -> Result<DistributionField>,
{
    fn apply(&self, f: &DistributionField) -> Result<DistributionField> {
        (self.forward)(f)
    }
    fn apply_adjoint(&self, f: &DistributionField) -> Result<DistributionField> {
        (self.adjoint)(f)
    }
}

const OVERFLOW_GUARD: f64 = 1e100;

/// Power-iteration estimate of `‖A‖_{B→B}`. Starts from a fixed
/// pseudo-random field, so the running maximum is nondecreasing in `iters`.
pub fn opnorm_estimate<A: BLinearMap + ?Sized>(
    map: &A,
    m: &DistributionField,
    iters: usize,
) -> Result<f64> {
    if iters < 10 {
        return Err(Error::InvalidParam(format!("iters = {iters} < 10")));
    }
    let grid = *m.grid();
    let mut rng = ChaCha8Rng::seed_from_u64(0x4b524c58);
    let vals: Vec<f64> = m.values().iter().map(|&w| w * rng.gen_range(-1.0..1.0)).collect();
    let mut x = DistributionField::new(grid, vals)?;
    let n0 = b_inner(&x, &x, m)?.sqrt();
    x = x.scaled(1.0 / n0);
    let mut best = 0.0f64;
    for _ in 0..iters {
        let ax = map.apply(&x)?;
        let est = b_inner(&ax, &ax, m)?.max(0.0).sqrt();
        if !est.is_finite() || est > OVERFLOW_GUARD {
            return Err(Error::Unbounded);
        }
        best = best.max(est);
        let y = map.apply_adjoint(&ax)?;
        let ny = b_inner(&y, &y, m)?.max(0.0).sqrt();
        if ny == 0.0 {
            break;
        }
        x = y.scaled(1.0 / ny);
    }
    Ok(best)
}

/// Central difference `∂_{v_k}` with zero extension outside the box.
pub fn dv(f: &DistributionField, k: usize) -> DistributionField {
    let g = *f.grid();
    let dims = g.dims();
    let mut out = f.values().to_vec();
    let h = g.hv();
    crate::exec::for_each_line(&mut out, &dims, g.d + k, |_, buf| {
        let n = buf.len();
        let src = buf.to_vec();
        for i in 0..n {
            let l = if i > 0 { src[i - 1] } else { 0.0 };
            let r = if i + 1 < n { src[i + 1] } else { 0.0 };
            buf[i] = (r - l) / (2.0 * h);
        }
    });
    DistributionField::from_raw(g, out)
}

/// `B`-adjoint of [`dv`]: `g ↦ -M ∂_{v_k}(g / M)`.
pub fn dv_adjoint(g: &DistributionField, m: &DistributionField, k: usize) -> Result<DistributionField> {
    let u = DistributionField::from_raw(
        *g.grid(),
        g.values().iter().zip(m.values()).map(|(a, b)| a / b).collect(),
    );
    let du = dv(&u, k);
    du.mul(m).map(|x| x.scaled(-1.0))
}

/// `Λ_v^{-δ} Λ_v^{-1} ∂_{v_k} Λ_v^{δ}` with its `B`-adjoint, the map used to
/// regularise in velocity.
pub struct LambdaInvDv<'a> {
    pub ops: &'a WeightedOperatorSet,
    pub k: usize,
    pub delta: f64,
}

impl BLinearMap for LambdaInvDv<'_> {
    fn apply(&self, f: &DistributionField) -> Result<DistributionField> {
        let a = self.ops.lambda_power(f, Axis::V, self.delta)?;
        let b = dv(&a, self.k);
        self.ops.lambda_power(&b, Axis::V, -1.0 - self.delta)
    }

    fn apply_adjoint(&self, f: &DistributionField) -> Result<DistributionField> {
        let a = self.ops.lambda_power(f, Axis::V, -1.0 - self.delta)?;
        let b = dv_adjoint(&a, self.ops.weight(), self.k)?;
        self.ops.lambda_power(&b, Axis::V, self.delta)
    }
}
