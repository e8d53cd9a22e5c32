use super::grid::{PhaseGrid, SpatialGrid};
use crate::error::{Error, Result};
use crate::exec;

/// Phase-space density on a [`PhaseGrid`] with its cached mass.
#[derive(Debug, Clone, PartialEq)]
pub struct DistributionField {
    grid: PhaseGrid,
    values: Vec<f64>,
    mass: f64,
}

impl DistributionField {
    pub fn new(grid: PhaseGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::Shape(format!(
                "expected {} values, got {}",
                grid.len(),
                values.len()
            )));
        }
        if let Some(i) = values.iter().position(|x| !x.is_finite()) {
            return Err(Error::Domain(format!("non-finite value at cell {i}")));
        }
        let mass = exec::sum(values.len(), |i| values[i]) * grid.cell_volume();
        Ok(Self { grid, values, mass })
    }

    /// Construct without the finiteness scan (values produced internally).
    pub(crate) fn from_raw(grid: PhaseGrid, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), grid.len());
        let mass = exec::sum(values.len(), |i| values[i]) * grid.cell_volume();
        Self { grid, values, mass }
    }

    pub fn zeros(grid: PhaseGrid) -> Self {
        Self { grid, values: vec![0.0; grid.len()], mass: 0.0 }
    }

    /// Sample `f(x, v)` at cell centres; unused coordinates are zero.
    pub fn from_fn<F>(grid: PhaseGrid, f: F) -> Result<Self>
    where
        F: Fn(&[f64; 3], &[f64; 3]) -> f64 + Sync + Send,
    {
        let sx = grid.spatial();
        let sv = grid.velocity();
        let nvd = grid.nvd();
        let mut values = vec![0.0; grid.len()];
        exec::fill(&mut values, |i| f(&sx.coords(i / nvd), &sv.coords(i % nvd)));
        Self::new(grid, values)
    }

    pub fn grid(&self) -> &PhaseGrid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn mass(&self) -> f64 {
        self.mass
    }

    pub fn max(&self) -> f64 {
        exec::max(self.values.len(), |i| self.values[i])
    }

    pub fn min(&self) -> f64 {
        -exec::max(self.values.len(), |i| -self.values[i])
    }

    pub fn sup_norm(&self) -> f64 {
        exec::max(self.values.len(), |i| self.values[i].abs())
    }

    pub fn check_same_grid(&self, other: &Self) -> Result<()> {
        if self.grid != other.grid {
            return Err(Error::Shape(format!(
                "grid mismatch: {:?} vs {:?}",
                self.grid, other.grid
            )));
        }
        Ok(())
    }

    /// `a * self + b * other`.
    pub fn lincomb(&self, a: f64, other: &Self, b: f64) -> Result<Self> {
        self.check_same_grid(other)?;
        let mut out = vec![0.0; self.values.len()];
        exec::fill(&mut out, |i| a * self.values[i] + b * other.values[i]);
        Ok(Self::from_raw(self.grid, out))
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.lincomb(1.0, other, -1.0)
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.lincomb(1.0, other, 1.0)
    }

    pub fn scaled(&self, a: f64) -> Self {
        let mut out = vec![0.0; self.values.len()];
        exec::fill(&mut out, |i| a * self.values[i]);
        Self::from_raw(self.grid, out)
    }

    pub fn map<F>(&self, f: F) -> Self
    where
        F: Fn(f64) -> f64 + Sync + Send,
    {
        let mut out = vec![0.0; self.values.len()];
        exec::fill(&mut out, |i| f(self.values[i]));
        Self::from_raw(self.grid, out)
    }

    /// Pointwise product with another field.
    pub fn mul(&self, other: &Self) -> Result<Self> {
        self.check_same_grid(other)?;
        let mut out = vec![0.0; self.values.len()];
        exec::fill(&mut out, |i| self.values[i] * other.values[i]);
        Ok(Self::from_raw(self.grid, out))
    }
}

/// Scalar or `d`-vector field on a [`SpatialGrid`], stored component-major.
#[derive(Debug, Clone, PartialEq)]
pub struct SpatialField {
    grid: SpatialGrid,
    ncomp: usize,
    data: Vec<f64>,
}

impl SpatialField {
    pub fn scalar(grid: SpatialGrid, values: Vec<f64>) -> Result<Self> {
        Self::with_components(grid, 1, values)
    }

    pub fn vector(grid: SpatialGrid, comps: Vec<Vec<f64>>) -> Result<Self> {
        let ncomp = comps.len();
        let data: Vec<f64> = comps.into_iter().flatten().collect();
        Self::with_components(grid, ncomp, data)
    }

    pub fn with_components(grid: SpatialGrid, ncomp: usize, data: Vec<f64>) -> Result<Self> {
        if ncomp == 0 || data.len() != ncomp * grid.len() {
            return Err(Error::Shape(format!(
                "expected {} x {} values, got {}",
                ncomp,
                grid.len(),
                data.len()
            )));
        }
        if data.iter().any(|x| !x.is_finite()) {
            return Err(Error::Domain("non-finite spatial field value".into()));
        }
        Ok(Self { grid, ncomp, data })
    }

    pub fn zeros(grid: SpatialGrid, ncomp: usize) -> Self {
        Self { grid, ncomp, data: vec![0.0; ncomp * grid.len()] }
    }

    pub fn from_fn<F>(grid: SpatialGrid, f: F) -> Self
    where
        F: Fn(&[f64; 3]) -> f64 + Sync + Send,
    {
        let mut data = vec![0.0; grid.len()];
        exec::fill(&mut data, |i| f(&grid.coords(i)));
        Self { grid, ncomp: 1, data }
    }

    pub fn grid(&self) -> &SpatialGrid {
        &self.grid
    }

    pub fn ncomp(&self) -> usize {
        self.ncomp
    }

    pub fn is_scalar(&self) -> bool {
        self.ncomp == 1
    }

    pub fn values(&self) -> &[f64] {
        &self.data
    }

    pub fn component(&self, c: usize) -> &[f64] {
        let n = self.grid.len();
        &self.data[c * n..(c + 1) * n]
    }

    /// Largest pointwise Euclidean norm over the grid.
    pub fn sup_norm(&self) -> f64 {
        let n = self.grid.len();
        exec::max(n, |i| {
            (0..self.ncomp)
                .map(|c| self.data[c * n + i].powi(2))
                .sum::<f64>()
                .sqrt()
        })
    }

    pub fn min(&self) -> f64 {
        self.data.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    pub fn integral(&self) -> f64 {
        debug_assert!(self.is_scalar());
        exec::sum(self.data.len(), |i| self.data[i]) * self.grid.cell_volume()
    }

    pub fn lincomb(&self, a: f64, other: &Self, b: f64) -> Result<Self> {
        if self.grid != other.grid || self.ncomp != other.ncomp {
            return Err(Error::Shape("spatial field mismatch".into()));
        }
        let mut data = vec![0.0; self.data.len()];
        exec::fill(&mut data, |i| a * self.data[i] + b * other.data[i]);
        Ok(Self { grid: self.grid, ncomp: self.ncomp, data })
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.lincomb(1.0, other, -1.0)
    }

    pub fn scaled(&self, a: f64) -> Self {
        Self {
            grid: self.grid,
            ncomp: self.ncomp,
            data: self.data.iter().map(|x| a * x).collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mass_is_quadrature() {
        let g = PhaseGrid::new(1, 1.0, 1.0, 8, 8).unwrap();
        let f = DistributionField::from_fn(g, |_, _| 1.0).unwrap();
        assert!((f.mass() - 4.0).abs() < 1e-14);
    }

    #[test]
    fn rejects_nan() {
        let g = PhaseGrid::new(1, 1.0, 1.0, 8, 8).unwrap();
        let mut v = vec![0.0; 64];
        v[3] = f64::NAN;
        assert!(DistributionField::new(g, v).is_err());
    }

    #[test]
    fn vector_sup_norm() {
        let s = SpatialGrid::new(1, 1.0, 8).unwrap();
        let f = SpatialField::vector(s, vec![vec![3.0; 8]]).unwrap();
        assert_eq!(f.sup_norm(), 3.0);
    }
}
