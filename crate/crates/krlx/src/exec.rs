//! Data-parallel execution helpers.
//!
//! With the `parallel` feature the loops below fan out over rayon; without it
//! (or after [`set_parallel(false)`](set_parallel)) they run sequentially.
//! Reductions are performed over fixed-size blocks and then summed in order,
//! so results are bitwise identical regardless of thread count.

use std::sync::atomic::{AtomicBool, Ordering};

static PARALLEL: AtomicBool = AtomicBool::new(true);

/// Block length for deterministic reductions.
const BLOCK: usize = 4096;

/// Toggle parallel execution at runtime (no-op without the `parallel` feature).
pub fn set_parallel(on: bool) {
    PARALLEL.store(on, Ordering::SeqCst);
}

pub fn is_parallel() -> bool {
    cfg!(feature = "parallel") && PARALLEL.load(Ordering::SeqCst)
}

/// Configure the global pool from `KRLX_THREADS` (or an explicit count).
/// Returns the number of threads in use.
pub fn init_threads(explicit: Option<usize>) -> usize {
    let env = std::env::var("KRLX_THREADS")
        .ok()
        .and_then(|s| s.trim().parse::<usize>().ok())
        .filter(|&n| n > 0);
    let want = explicit.or(env);
    #[cfg(feature = "parallel")]
    {
        if let Some(n) = want {
            let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
        }
        rayon::current_num_threads()
    }
    #[cfg(not(feature = "parallel"))]
    {
        let _ = want;
        1
    }
}

/// Evaluate `f(i)` for `i in 0..n`, collecting results in order.
pub fn map<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if is_parallel() {
        use rayon::prelude::*;
        return (0..n).into_par_iter().map(f).collect();
    }
    (0..n).map(f).collect()
}

/// Fill `out[i] = f(i)`.
pub fn fill<F>(out: &mut [f64], f: F)
where
    F: Fn(usize) -> f64 + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if is_parallel() {
        use rayon::prelude::*;
        out.par_iter_mut().enumerate().for_each(|(i, o)| *o = f(i));
        return;
    }
    for (i, o) in out.iter_mut().enumerate() {
        *o = f(i);
    }
}

/// Apply `f(chunk_index, chunk)` to consecutive chunks of length `len`.
pub fn chunks_mut<T, F>(data: &mut [T], len: usize, f: F)
where
    T: Send,
    F: Fn(usize, &mut [T]) + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if is_parallel() {
        use rayon::prelude::*;
        data.par_chunks_mut(len).enumerate().for_each(|(i, c)| f(i, c));
        return;
    }
    for (i, c) in data.chunks_mut(len).enumerate() {
        f(i, c);
    }
}

/// Apply `f(row, row_slice)` to consecutive rows of length `row_len`, batching
/// short rows so each task sees at least a few thousand elements.
pub fn rows_mut<T, F>(data: &mut [T], row_len: usize, f: F)
where
    T: Send,
    F: Fn(usize, &mut [T]) + Sync + Send,
{
    let per = (4096 / row_len.max(1)).max(1);
    chunks_mut(data, per * row_len, |c, chunk| {
        for (r, row) in chunk.chunks_mut(row_len).enumerate() {
            f(c * per + r, row);
        }
    });
}

/// Deterministic sum of `f(i)` over `0..n`.
pub fn sum<F>(n: usize, f: F) -> f64
where
    F: Fn(usize) -> f64 + Sync + Send,
{
    let nb = n.div_ceil(BLOCK);
    let partial = map(nb, |b| {
        let lo = b * BLOCK;
        let hi = (lo + BLOCK).min(n);
        (lo..hi).map(&f).sum::<f64>()
    });
    partial.iter().sum()
}

/// Deterministic maximum of `f(i)` over `0..n` (`-inf` when empty).
pub fn max<F>(n: usize, f: F) -> f64
where
    F: Fn(usize) -> f64 + Sync + Send,
{
    let nb = n.div_ceil(BLOCK);
    map(nb, |b| {
        let lo = b * BLOCK;
        let hi = (lo + BLOCK).min(n);
        (lo..hi).map(&f).fold(f64::NEG_INFINITY, f64::max)
    })
    .into_iter()
    .fold(f64::NEG_INFINITY, f64::max)
}

/// Raw pointer that may be shared across threads when every task writes a
/// disjoint set of indices.
struct SharedMut<T>(*mut T);
impl<T> Clone for SharedMut<T> {
    fn clone(&self) -> Self {
        *self
    }
}
impl<T> Copy for SharedMut<T> {}
unsafe impl<T: Send> Send for SharedMut<T> {}
unsafe impl<T: Send> Sync for SharedMut<T> {}

/// Visit every line of a row-major array along `axis`.
///
/// `f(start, buf)` receives the flat offset of the line's first element and a
/// gathered copy of the line; whatever it leaves in `buf` is scattered back.
pub fn for_each_line<T, F>(data: &mut [T], dims: &[usize], axis: usize, f: F)
where
    T: Copy + Send + Sync,
    F: Fn(usize, &mut [T]) + Sync + Send,
{
    let n = dims[axis];
    let stride: usize = dims[axis + 1..].iter().product();
    let total: usize = dims.iter().product();
    assert_eq!(total, data.len());
    let nlines = total / n;
    let start_of = move |line: usize| {
        let outer = line / stride;
        let inner = line % stride;
        outer * n * stride + inner
    };
    if stride == 1 {
        chunks_mut(data, n, |line, chunk| f(line * n, chunk));
        return;
    }
    let ptr = SharedMut(data.as_mut_ptr());
    let body = move |line: usize, buf: &mut Vec<T>| {
        let p = ptr;
        let s = start_of(line);
        buf.clear();
        // SAFETY: lines partition the index set; each task touches only the
        // n entries s, s+stride, ..., all inside `data`.
        unsafe {
            for k in 0..n {
                buf.push(*p.0.add(s + k * stride));
            }
        }
        f(s, buf);
        unsafe {
            for k in 0..n {
                *p.0.add(s + k * stride) = buf[k];
            }
        }
    };
    #[cfg(feature = "parallel")]
    if is_parallel() {
        use rayon::prelude::*;
        (0..nlines)
            .into_par_iter()
            .for_each_init(|| Vec::with_capacity(n), |buf, line| body(line, buf));
        return;
    }
    let mut buf = Vec::with_capacity(n);
    for line in 0..nlines {
        body(line, &mut buf);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lines_visit_every_cell_once() {
        let dims = [3, 4, 5];
        for axis in 0..3 {
            let mut data = vec![0.0; 60];
            for_each_line(&mut data, &dims, axis, |_, buf| {
                for b in buf.iter_mut() {
                    *b += 1.0;
                }
            });
            assert!(data.iter().all(|&x| x == 1.0));
        }
    }

    #[test]
    fn line_start_matches_coordinates() {
        let dims = [3, 4, 5];
        let mut data: Vec<f64> = (0..60).map(|i| i as f64).collect();
        for_each_line(&mut data, &dims, 1, |s, buf| {
            assert_eq!(buf[0], s as f64);
            assert_eq!(buf[1], (s + 5) as f64);
        });
    }

    #[test]
    fn sum_is_thread_independent() {
        let a = sum(100_000, |i| (i as f64).sin());
        set_parallel(false);
        let b = sum(100_000, |i| (i as f64).sin());
        set_parallel(true);
        assert_eq!(a.to_bits(), b.to_bits());
    }
}
