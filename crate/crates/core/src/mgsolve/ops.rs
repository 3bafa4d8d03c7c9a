//! Discrete Laplacian and the inter-grid transfers.

use super::Grid;
use crate::{Error, Result};

/// `A·u` for the 3-point (1D) or 5-point (2D) negative Laplacian, scaled by `1/h²`.
pub fn apply_operator(grid: &Grid, u: &[f64]) -> Result<Vec<f64>> {
    grid.check(u, "u")?;
    let mut out = vec![0.0; u.len()];
    apply_into(grid, u, &mut out);
    Ok(out)
}

pub(crate) fn apply_into(grid: &Grid, u: &[f64], out: &mut [f64]) {
    let n = grid.n();
    let inv_h2 = 1.0 / (grid.h() * grid.h());
    match grid.dim() {
        1 => {
            for i in 0..n {
                let left = if i > 0 { u[i - 1] } else { 0.0 };
                let right = if i + 1 < n { u[i + 1] } else { 0.0 };
                out[i] = (2.0 * u[i] - left - right) * inv_h2;
            }
        }
        _ => {
            for i in 0..n {
                for j in 0..n {
                    let k = i * n + j;
                    let mut s = 4.0 * u[k];
                    if i > 0 {
                        s -= u[k - n];
                    }
                    if i + 1 < n {
                        s -= u[k + n];
                    }
                    if j > 0 {
                        s -= u[k - 1];
                    }
                    if j + 1 < n {
                        s -= u[k + 1];
                    }
                    out[k] = s * inv_h2;
                }
            }
        }
    }
}

/// `f - A·u`.
pub fn residual(grid: &Grid, u: &[f64], rhs: &[f64]) -> Result<Vec<f64>> {
    grid.check(u, "u")?;
    grid.check(rhs, "right-hand side")?;
    let mut r = vec![0.0; u.len()];
    residual_into(grid, u, rhs, &mut r);
    Ok(r)
}

pub(crate) fn residual_into(grid: &Grid, u: &[f64], rhs: &[f64], out: &mut [f64]) {
    apply_into(grid, u, out);
    for (r, f) in out.iter_mut().zip(rhs) {
        *r = f - *r;
    }
}

/// Full weighting, `[1 2 1]/4` per axis, onto the next coarser grid.
pub fn restrict(fine_grid: &Grid, fine: &[f64]) -> Result<Vec<f64>> {
    fine_grid.check(fine, "fine vector")?;
    let coarse_grid = fine_grid.coarsen().ok_or_else(|| {
        Error::invalid(format!("a grid with n={} cannot be coarsened", fine_grid.n()))
    })?;
    let nf = fine_grid.n();
    let nc = coarse_grid.n();
    const W: [f64; 3] = [0.25, 0.5, 0.25];
    Ok(match fine_grid.dim() {
        1 => (0..nc)
            .map(|i| (0..3).map(|a| W[a] * fine[2 * i + a]).sum())
            .collect(),
        _ => {
            let mut out = vec![0.0; nc * nc];
            for i in 0..nc {
                for j in 0..nc {
                    let mut s = 0.0;
                    for (a, wa) in W.iter().enumerate() {
                        for (b, wb) in W.iter().enumerate() {
                            s += wa * wb * fine[(2 * i + a) * nf + 2 * j + b];
                        }
                    }
                    out[i * nc + j] = s;
                }
            }
            out
        }
    })
}

/// Linear (bilinear in 2D) interpolation onto the next finer grid.
pub fn prolong(coarse_grid: &Grid, coarse: &[f64]) -> Result<Vec<f64>> {
    coarse_grid.check(coarse, "coarse vector")?;
    let nc = coarse_grid.n();
    let nf = coarse_grid.refine().n();
    // Fine index i sits on coarse index (i-1)/2 when odd, between two when even.
    let taps = |i: usize| -> [(Option<usize>, f64); 2] {
        if i % 2 == 1 {
            [(Some(i / 2), 1.0), (None, 0.0)]
        } else {
            let left = (i > 0).then(|| i / 2 - 1);
            let right = (i / 2 < nc).then_some(i / 2);
            [(left, 0.5), (right, 0.5)]
        }
    };
    Ok(match coarse_grid.dim() {
        1 => (0..nf)
            .map(|i| {
                taps(i)
                    .iter()
                    .filter_map(|&(c, w)| c.map(|c| w * coarse[c]))
                    .sum()
            })
            .collect(),
        _ => {
            let mut out = vec![0.0; nf * nf];
            for i in 0..nf {
                let ti = taps(i);
                for j in 0..nf {
                    let tj = taps(j);
                    let mut s = 0.0;
                    for &(ci, wi) in &ti {
                        for &(cj, wj) in &tj {
                            if let (Some(ci), Some(cj)) = (ci, cj) {
                                s += wi * wj * coarse[ci * nc + cj];
                            }
                        }
                    }
                    out[i * nf + j] = s;
                }
            }
            out
        }
    })
}

pub fn inner(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2(a: &[f64]) -> f64 {
    inner(a, a).sqrt()
}
