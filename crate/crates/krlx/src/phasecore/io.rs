//! Flat binary and CSV persistence.
//!
//! Binary layout (little-endian): `b"KRLX"`, version `u32`, `d u32`, `nx u32`,
//! `nv u32`, `lx f64`, `lv f64`, then the values as `f64`. Spatial fields are
//! written with `nv = 0`, followed by the component count `u32` before the
//! values.

use super::field::{DistributionField, SpatialField};
use super::grid::{PhaseGrid, SpatialGrid};
use crate::error::{Error, Result};
use std::io::{Read, Write};

const MAGIC: &[u8; 4] = b"KRLX";
const VERSION: u32 = 1;

fn put_u32(w: &mut impl Write, x: u32) -> Result<()> {
    w.write_all(&x.to_le_bytes())?;
    Ok(())
}

fn put_f64(w: &mut impl Write, x: f64) -> Result<()> {
    w.write_all(&x.to_le_bytes())?;
    Ok(())
}

fn get_u32(r: &mut impl Read) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn get_f64(r: &mut impl Read) -> Result<f64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(f64::from_le_bytes(b))
}

fn header(w: &mut impl Write, d: usize, nx: usize, nv: usize, lx: f64, lv: f64) -> Result<()> {
    w.write_all(MAGIC)?;
    put_u32(w, VERSION)?;
    put_u32(w, d as u32)?;
    put_u32(w, nx as u32)?;
    put_u32(w, nv as u32)?;
    put_f64(w, lx)?;
    put_f64(w, lv)
}

fn values(w: &mut impl Write, v: &[f64]) -> Result<()> {
    let mut buf = Vec::with_capacity(v.len() * 8);
    for x in v {
        buf.extend_from_slice(&x.to_le_bytes());
    }
    w.write_all(&buf)?;
    Ok(())
}

fn read_values(r: &mut impl Read, n: usize) -> Result<Vec<f64>> {
    let mut buf = vec![0u8; n * 8];
    r.read_exact(&mut buf)?;
    Ok(buf
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect())
}

pub fn write_distribution(w: &mut impl Write, f: &DistributionField) -> Result<()> {
    let g = f.grid();
    header(w, g.d, g.nx, g.nv, g.lx, g.lv)?;
    values(w, f.values())
}

pub fn write_spatial(w: &mut impl Write, f: &SpatialField) -> Result<()> {
    let g = f.grid();
    header(w, g.d, g.n, 0, g.l, 0.0)?;
    put_u32(w, f.ncomp() as u32)?;
    values(w, f.values())
}

/// A field read back from the binary format.
#[derive(Debug, Clone)]
pub enum StoredField {
    Phase(DistributionField),
    Spatial(SpatialField),
}

pub fn read_field(r: &mut impl Read) -> Result<StoredField> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Format("bad magic".into()));
    }
    let version = get_u32(r)?;
    if version != VERSION {
        return Err(Error::Format(format!("unsupported version {version}")));
    }
    let d = get_u32(r)? as usize;
    let nx = get_u32(r)? as usize;
    let nv = get_u32(r)? as usize;
    let lx = get_f64(r)?;
    let lv = get_f64(r)?;
    if nv == 0 {
        let grid = SpatialGrid::new(d, lx, nx)?;
        let ncomp = get_u32(r)? as usize;
        let data = read_values(r, ncomp * grid.len())?;
        Ok(StoredField::Spatial(SpatialField::with_components(grid, ncomp, data)?))
    } else {
        let grid = PhaseGrid::new(d, lx, lv, nx, nv)?;
        let data = read_values(r, grid.len())?;
        Ok(StoredField::Phase(DistributionField::new(grid, data)?))
    }
}

pub fn save_distribution(path: &std::path::Path, f: &DistributionField) -> Result<()> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    write_distribution(&mut w, f)?;
    w.flush()?;
    Ok(())
}

pub fn save_spatial(path: &std::path::Path, f: &SpatialField) -> Result<()> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    write_spatial(&mut w, f)?;
    w.flush()?;
    Ok(())
}

pub fn load(path: &std::path::Path) -> Result<StoredField> {
    let mut r = std::io::BufReader::new(std::fs::File::open(path)?);
    read_field(&mut r)
}

/// CSV of the `(x_1, v_1)` plane through the centre cell of the other axes.
pub fn phase_slice_csv(f: &DistributionField) -> String {
    let g = f.grid();
    let nvd = g.nvd();
    let mid_x = |i: usize| {
        let mut idx = i;
        for _ in 1..g.d {
            idx = idx * g.nx + g.nx / 2;
        }
        idx
    };
    let mid_v = |j: usize| {
        let mut idx = j;
        for _ in 1..g.d {
            idx = idx * g.nv + g.nv / 2;
        }
        idx
    };
    let mut s = String::from("x,v,f\n");
    for i in 0..g.nx {
        for j in 0..g.nv {
            let val = f.values()[mid_x(i) * nvd + mid_v(j)];
            s.push_str(&format!("{:.10e},{:.10e},{:.10e}\n", g.x_center(i), g.v_center(j), val));
        }
    }
    s
}

/// CSV of a spatial field along the first axis (d = 1) or the central plane.
pub fn spatial_slice_csv(f: &SpatialField) -> String {
    let g = f.grid();
    let n = g.n;
    let mut s = String::new();
    let comps: Vec<String> = (0..f.ncomp()).map(|c| format!("c{c}")).collect();
    match g.d {
        1 => {
            s.push_str(&format!("x,{}\n", comps.join(",")));
            for i in 0..n {
                let vals: Vec<String> =
                    (0..f.ncomp()).map(|c| format!("{:.10e}", f.component(c)[i])).collect();
                s.push_str(&format!("{:.10e},{}\n", g.center(i), vals.join(",")));
            }
        }
        _ => {
            s.push_str(&format!("x,y,{}\n", comps.join(",")));
            let tail = if g.d == 3 { n / 2 } else { 0 };
            for i in 0..n {
                for j in 0..n {
                    let idx = if g.d == 3 { (i * n + j) * n + tail } else { i * n + j };
                    let vals: Vec<String> = (0..f.ncomp())
                        .map(|c| format!("{:.10e}", f.component(c)[idx]))
                        .collect();
                    s.push_str(&format!(
                        "{:.10e},{:.10e},{}\n",
                        g.center(i),
                        g.center(j),
                        vals.join(",")
                    ));
                }
            }
        }
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn phase_roundtrip() {
        let g = PhaseGrid::new(2, 2.0, 3.0, 8, 8).unwrap();
        let f = DistributionField::from_fn(g, |x, v| x[0] - v[1] * x[1]).unwrap();
        let mut buf = Vec::new();
        write_distribution(&mut buf, &f).unwrap();
        assert_eq!(&buf[..4], b"KRLX");
        match read_field(&mut buf.as_slice()).unwrap() {
            StoredField::Phase(h) => assert_eq!(h, f),
            _ => panic!("wrong kind"),
        }
    }

    #[test]
    fn spatial_roundtrip() {
        let s = SpatialGrid::new(3, 2.0, 8).unwrap();
        let f = SpatialField::vector(s, vec![vec![1.0; 512], vec![2.0; 512], vec![3.0; 512]]).unwrap();
        let mut buf = Vec::new();
        write_spatial(&mut buf, &f).unwrap();
        match read_field(&mut buf.as_slice()).unwrap() {
            StoredField::Spatial(h) => assert_eq!(h, f),
            _ => panic!("wrong kind"),
        }
    }

    #[test]
    fn bad_magic() {
        let buf = b"NOPE\x01\x00\x00\x00".to_vec();
        assert!(read_field(&mut buf.as_slice()).is_err());
    }
}
