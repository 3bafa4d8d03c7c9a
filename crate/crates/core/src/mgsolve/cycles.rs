use super::direct::DenseCholesky;
use super::ops::{prolong, residual_into, restrict};
use super::smoother::smooth_in_place;
use super::{GridHierarchy, SmootherConfig};
use crate::Result;

/// Collects the level-visit trace and the work spent by one or more cycles.
///
/// A level is "visited" whenever it smooths or, at the coarsest level, solves;
/// consecutive visits to the same level collapse into one entry. Work is in
/// fine-grid sweep equivalents: a sweep on level `l` costs `2^(-dim·l)`, the
/// coarsest direct solve counts as one sweep there, and transfers are free.
#[derive(Debug, Clone, Default)]
pub struct CycleRecorder {
    trace: Vec<usize>,
    work: f64,
}

impl CycleRecorder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn trace(&self) -> &[usize] {
        &self.trace
    }

    pub fn work(&self) -> f64 {
        self.work
    }

    fn visit(&mut self, level: usize) {
        if self.trace.last() != Some(&level) {
            self.trace.push(level);
        }
    }
}

/// Multigrid solver over a fixed hierarchy.
#[derive(Debug, Clone)]
pub struct Multigrid {
    hierarchy: GridHierarchy,
    config: SmootherConfig,
    coarse: DenseCholesky,
}

impl Multigrid {
    pub fn new(hierarchy: GridHierarchy, config: SmootherConfig) -> Result<Self> {
        config.validate()?;
        let coarse = DenseCholesky::for_grid(&hierarchy.level(hierarchy.coarsest()));
        Ok(Multigrid {
            hierarchy,
            config,
            coarse,
        })
    }

    pub fn hierarchy(&self) -> &GridHierarchy {
        &self.hierarchy
    }

    pub fn config(&self) -> &SmootherConfig {
        &self.config
    }

    fn sweep_cost(&self, level: usize) -> f64 {
        let dim = self.hierarchy.level(0).dim() as i32;
        2f64.powi(-dim * level as i32)
    }

    /// One V-cycle on `level`, updating `u` in place.
    pub fn v_cycle(&self, u: &mut [f64], rhs: &[f64], level: usize, rec: &mut CycleRecorder) {
        self.cycle(1, u, rhs, level, rec)
    }

    /// One W-cycle: as the V-cycle but with two coarse-grid corrections per level.
    pub fn w_cycle(&self, u: &mut [f64], rhs: &[f64], level: usize, rec: &mut CycleRecorder) {
        self.cycle(2, u, rhs, level, rec)
    }

    fn cycle(&self, gamma: usize, u: &mut [f64], rhs: &[f64], level: usize, rec: &mut CycleRecorder) {
        let grid = self.hierarchy.level(level);
        if level == self.hierarchy.coarsest() {
            u.copy_from_slice(&self.coarse.solve(rhs));
            rec.visit(level);
            rec.work += self.sweep_cost(level);
            return;
        }
        let cost = self.sweep_cost(level);

        rec.visit(level);
        smooth_in_place(&grid, u, rhs, &self.config, self.config.pre_sweeps);
        rec.work += cost * self.config.pre_sweeps as f64;

        let mut r = vec![0.0; u.len()];
        residual_into(&grid, u, rhs, &mut r);
        let rc = restrict(&grid, &r).expect("hierarchy grids coarsen");
        let mut ec = vec![0.0; rc.len()];
        for _ in 0..gamma {
            self.cycle(gamma, &mut ec, &rc, level + 1, rec);
        }
        let coarse_grid = self.hierarchy.level(level + 1);
        let e = prolong(&coarse_grid, &ec).expect("hierarchy grids refine");
        for (ui, ei) in u.iter_mut().zip(&e) {
            *ui += ei;
        }

        rec.visit(level);
        smooth_in_place(&grid, u, rhs, &self.config, self.config.post_sweeps);
        rec.work += cost * self.config.post_sweeps as f64;
    }

    /// Full multigrid from a zero guess: restrict `rhs` to every level, solve
    /// exactly on the coarsest, then on each finer level interpolate the coarse
    /// solution and improve it with one V-cycle.
    pub fn fmg_cycle(&self, rhs: &[f64], rec: &mut CycleRecorder) -> Vec<f64> {
        let depth = self.hierarchy.depth();
        let mut rhs_levels = vec![rhs.to_vec()];
        for l in 0..depth - 1 {
            let next = restrict(&self.hierarchy.level(l), &rhs_levels[l]).expect("coarsenable");
            rhs_levels.push(next);
        }
        let coarsest = depth - 1;
        let mut u = self.coarse.solve(&rhs_levels[coarsest]);
        rec.visit(coarsest);
        rec.work += self.sweep_cost(coarsest);
        for l in (0..coarsest).rev() {
            u = prolong(&self.hierarchy.level(l + 1), &u).expect("refinable");
            self.v_cycle(&mut u, &rhs_levels[l], l, rec);
        }
        u
    }
}
