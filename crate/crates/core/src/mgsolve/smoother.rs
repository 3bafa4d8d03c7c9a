use serde::{Deserialize, Serialize};

use super::Grid;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SmootherKind {
    WeightedJacobi,
    /// Lexicographic ordering.
    GaussSeidel,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SmootherConfig {
    pub kind: SmootherKind,
    /// Relaxation weight; only read by weighted Jacobi.
    pub omega: f64,
    pub pre_sweeps: usize,
    pub post_sweeps: usize,
}

impl Default for SmootherConfig {
    fn default() -> Self {
        SmootherConfig {
            kind: SmootherKind::GaussSeidel,
            omega: 2.0 / 3.0,
            pre_sweeps: 2,
            post_sweeps: 2,
        }
    }
}

impl SmootherConfig {
    pub fn jacobi(omega: f64, pre_sweeps: usize, post_sweeps: usize) -> Self {
        SmootherConfig {
            kind: SmootherKind::WeightedJacobi,
            omega,
            pre_sweeps,
            post_sweeps,
        }
    }

    pub fn gauss_seidel(pre_sweeps: usize, post_sweeps: usize) -> Self {
        SmootherConfig {
            kind: SmootherKind::GaussSeidel,
            pre_sweeps,
            post_sweeps,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.kind == SmootherKind::WeightedJacobi && !(self.omega > 0.0 && self.omega <= 1.0) {
            return Err(Error::invalid(format!(
                "Jacobi weight must lie in (0, 1], got {}",
                self.omega
            )));
        }
        if self.pre_sweeps + self.post_sweeps == 0 {
            return Err(Error::invalid("at least one pre- or post-smoothing sweep is required"));
        }
        Ok(())
    }
}

/// Applies `sweeps` relaxation sweeps to `u` for `A·u = rhs`.
pub fn smooth(
    grid: &Grid,
    u: &[f64],
    rhs: &[f64],
    config: &SmootherConfig,
    sweeps: usize,
) -> Result<Vec<f64>> {
    grid.check(u, "u")?;
    grid.check(rhs, "right-hand side")?;
    let mut out = u.to_vec();
    smooth_in_place(grid, &mut out, rhs, config, sweeps);
    Ok(out)
}

pub(crate) fn smooth_in_place(
    grid: &Grid,
    u: &mut [f64],
    rhs: &[f64],
    config: &SmootherConfig,
    sweeps: usize,
) {
    match config.kind {
        SmootherKind::GaussSeidel => {
            for _ in 0..sweeps {
                gauss_seidel_sweep(grid, u, rhs);
            }
        }
        SmootherKind::WeightedJacobi => {
            let mut scratch = vec![0.0; u.len()];
            for _ in 0..sweeps {
                jacobi_sweep(grid, u, rhs, config.omega, &mut scratch);
            }
        }
    }
}

fn gauss_seidel_sweep(grid: &Grid, u: &mut [f64], rhs: &[f64]) {
    let n = grid.n();
    let h2 = grid.h() * grid.h();
    match grid.dim() {
        1 => {
            for i in 0..n {
                let left = if i > 0 { u[i - 1] } else { 0.0 };
                let right = if i + 1 < n { u[i + 1] } else { 0.0 };
                u[i] = 0.5 * (h2 * rhs[i] + left + right);
            }
        }
        _ => {
            for i in 0..n {
                for j in 0..n {
                    let k = i * n + j;
                    let mut s = h2 * rhs[k];
                    if i > 0 {
                        s += u[k - n];
                    }
                    if i + 1 < n {
                        s += u[k + n];
                    }
                    if j > 0 {
                        s += u[k - 1];
                    }
                    if j + 1 < n {
                        s += u[k + 1];
                    }
                    u[k] = 0.25 * s;
                }
            }
        }
    }
}

fn jacobi_sweep(grid: &Grid, u: &mut [f64], rhs: &[f64], omega: f64, r: &mut [f64]) {
    super::ops::residual_into(grid, u, rhs, r);
    // Diagonal of A is 2·dim/h².
    let scale = omega * grid.h() * grid.h() / (2.0 * grid.dim() as f64);
    for (ui, ri) in u.iter_mut().zip(r.iter()) {
        *ui += scale * ri;
    }
}
