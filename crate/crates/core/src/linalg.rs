//! Dense helpers for row-major matrices.

use crate::prelude::*;
use crate::{Error, Result};

/// Largest singular value of the row-major `rows × cols` matrix `a`, by power
/// iteration on `AᵀA`. Converges from below.
pub fn spectral_norm(
    a: &[f64],
    rows: usize,
    cols: usize,
    max_iters: usize,
    tol: f64,
) -> Result<f64> {
    if a.len() != rows * cols {
        return Err(Error::DimensionMismatch {
            context: "spectral_norm matrix",
            expected: rows * cols,
            found: a.len(),
        });
    }
    if rows == 0 || cols == 0 {
        return Ok(0.0);
    }
    // deterministic start with no special alignment to any axis
    let mut v: Vec<f64> = (0..cols)
        .map(|i| 1.0 + 0.5 * ((i as f64 + 1.0) * 0.618_033_988_75).fract())
        .collect();
    normalize(&mut v);
    let mut av = vec![0.0; rows];
    let mut sigma = 0.0;
    for _ in 0..max_iters {
        mat_vec(a, rows, cols, &v, &mut av);
        let mut w = vec![0.0; cols];
        mat_t_vec(a, rows, cols, &av, &mut w);
        let norm = norm2(&w);
        if !norm.is_finite() {
            return Err(Error::NonFinite("power iteration"));
        }
        if norm == 0.0 {
            return Ok(0.0);
        }
        let next = norm.sqrt();
        for x in w.iter_mut() {
            *x /= norm;
        }
        v = w;
        let converged = (next - sigma).abs() <= tol * next;
        sigma = next;
        if converged {
            break;
        }
    }
    Ok(sigma)
}

pub fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub fn distance2(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

fn normalize(v: &mut [f64]) {
    let n = norm2(v);
    if n > 0.0 {
        for x in v.iter_mut() {
            *x /= n;
        }
    }
}

pub fn mat_vec(a: &[f64], rows: usize, cols: usize, x: &[f64], out: &mut [f64]) {
    for r in 0..rows {
        out[r] = a[r * cols..(r + 1) * cols]
            .iter()
            .zip(x)
            .map(|(p, q)| p * q)
            .sum();
    }
}

pub fn mat_t_vec(a: &[f64], rows: usize, cols: usize, x: &[f64], out: &mut [f64]) {
    out.iter_mut().for_each(|o| *o = 0.0);
    for r in 0..rows {
        let xr = x[r];
        for (o, p) in out.iter_mut().zip(&a[r * cols..(r + 1) * cols]) {
            *o += p * xr;
        }
    }
}
