use crate::error::{Error, Result};

/// Uniform cell-centred tensor grid on `[-lx,lx]^d x [-lv,lv]^d`.
///
/// Phase-space values are stored row-major with the `d` spatial axes first
/// (slowest) and the `d` velocity axes last, so the flat index of
/// `(ix, iv)` is `ix * nv^d + iv`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhaseGrid {
    pub d: usize,
    pub lx: f64,
    pub lv: f64,
    pub nx: usize,
    pub nv: usize,
}

impl PhaseGrid {
    pub fn new(d: usize, lx: f64, lv: f64, nx: usize, nv: usize) -> Result<Self> {
        if !(1..=3).contains(&d) {
            return Err(Error::InvalidParam(format!("dimension d = {d} must be 1, 2 or 3")));
        }
        if nx < 8 || nv < 8 {
            return Err(Error::InvalidParam(format!(
                "need nx, nv >= 8 (got nx = {nx}, nv = {nv})"
            )));
        }
        if !(lx > 0.0 && lv > 0.0 && lx.is_finite() && lv.is_finite()) {
            return Err(Error::InvalidParam("box half-widths must be positive".into()));
        }
        Ok(Self { d, lx, lv, nx, nv })
    }

    pub fn hx(&self) -> f64 {
        2.0 * self.lx / self.nx as f64
    }

    pub fn hv(&self) -> f64 {
        2.0 * self.lv / self.nv as f64
    }

    /// Number of spatial cells, `nx^d`.
    pub fn nxd(&self) -> usize {
        self.nx.pow(self.d as u32)
    }

    /// Number of velocity cells, `nv^d`.
    pub fn nvd(&self) -> usize {
        self.nv.pow(self.d as u32)
    }

    pub fn len(&self) -> usize {
        self.nxd() * self.nvd()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dx_vol(&self) -> f64 {
        self.hx().powi(self.d as i32)
    }

    pub fn dv_vol(&self) -> f64 {
        self.hv().powi(self.d as i32)
    }

    pub fn cell_volume(&self) -> f64 {
        self.dx_vol() * self.dv_vol()
    }

    pub fn x_center(&self, i: usize) -> f64 {
        -self.lx + (i as f64 + 0.5) * self.hx()
    }

    pub fn v_center(&self, j: usize) -> f64 {
        -self.lv + (j as f64 + 0.5) * self.hv()
    }

    /// Shape of the flat array: `[nx; d] ++ [nv; d]`.
    pub fn dims(&self) -> Vec<usize> {
        let mut dims = vec![self.nx; self.d];
        dims.extend(std::iter::repeat(self.nv).take(self.d));
        dims
    }

    pub fn spatial(&self) -> SpatialGrid {
        SpatialGrid { d: self.d, l: self.lx, n: self.nx }
    }

    pub fn velocity(&self) -> SpatialGrid {
        SpatialGrid { d: self.d, l: self.lv, n: self.nv }
    }

    /// The same box with `nx` and `nv` multiplied by `factor`.
    pub fn refined(&self, factor: usize) -> Self {
        Self { nx: self.nx * factor, nv: self.nv * factor, ..*self }
    }
}

/// Uniform cell-centred grid on `[-l,l]^d`, row-major.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpatialGrid {
    pub d: usize,
    pub l: f64,
    pub n: usize,
}

impl SpatialGrid {
    pub fn new(d: usize, l: f64, n: usize) -> Result<Self> {
        if !(1..=3).contains(&d) {
            return Err(Error::InvalidParam(format!("dimension d = {d} must be 1, 2 or 3")));
        }
        if n < 8 || !(l > 0.0 && l.is_finite()) {
            return Err(Error::InvalidParam(format!("bad spatial grid l = {l}, n = {n}")));
        }
        Ok(Self { d, l, n })
    }

    pub fn h(&self) -> f64 {
        2.0 * self.l / self.n as f64
    }

    pub fn len(&self) -> usize {
        self.n.pow(self.d as u32)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn cell_volume(&self) -> f64 {
        self.h().powi(self.d as i32)
    }

    pub fn center(&self, i: usize) -> f64 {
        -self.l + (i as f64 + 0.5) * self.h()
    }

    pub fn dims(&self) -> Vec<usize> {
        vec![self.n; self.d]
    }

    /// Stride of axis `k` in the flat array.
    pub fn stride(&self, k: usize) -> usize {
        self.n.pow((self.d - 1 - k) as u32)
    }

    /// Multi-index of a flat index (entries beyond `d` are zero).
    pub fn unflatten(&self, mut idx: usize) -> [usize; 3] {
        let mut out = [0usize; 3];
        for k in (0..self.d).rev() {
            out[k] = idx % self.n;
            idx /= self.n;
        }
        out
    }

    /// Cell-centre coordinates of a flat index (entries beyond `d` are zero).
    pub fn coords(&self, idx: usize) -> [f64; 3] {
        let m = self.unflatten(idx);
        let mut x = [0.0; 3];
        for k in 0..self.d {
            x[k] = self.center(m[k]);
        }
        x
    }
}
