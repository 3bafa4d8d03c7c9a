use crate::{Error, Result};

/// A uniform vertex-centred grid on the unit interval or square with zero
/// Dirichlet boundaries. Only interior points are stored, row-major.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Grid {
    dim: usize,
    n: usize,
}

impl Grid {
    /// `n` must be `2^k - 1` so the grid coarsens exactly down to a single point.
    pub fn new(dim: usize, n: usize) -> Result<Self> {
        if dim != 1 && dim != 2 {
            return Err(Error::invalid(format!("dimension must be 1 or 2, got {dim}")));
        }
        if n == 0 || !(n + 1).is_power_of_two() {
            return Err(Error::invalid(format!(
                "interior points per axis must be 2^k - 1, got {n}"
            )));
        }
        Ok(Grid { dim, n })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Interior points per axis.
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn h(&self) -> f64 {
        1.0 / (self.n + 1) as f64
    }

    /// Total unknowns, `n^dim`.
    pub fn len(&self) -> usize {
        self.n.pow(self.dim as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// `k` such that `n = 2^k - 1`; also the deepest hierarchy this grid supports.
    pub fn max_depth(&self) -> usize {
        (self.n + 1).trailing_zeros() as usize
    }

    pub fn coarsen(&self) -> Option<Grid> {
        (self.n >= 3).then(|| Grid {
            dim: self.dim,
            n: (self.n - 1) / 2,
        })
    }

    pub fn refine(&self) -> Grid {
        Grid {
            dim: self.dim,
            n: 2 * self.n + 1,
        }
    }

    pub(crate) fn check(&self, v: &[f64], what: &str) -> Result<()> {
        if v.len() != self.len() {
            return Err(Error::invalid(format!(
                "{what} has {} entries, grid with n={} in {}D needs {}",
                v.len(),
                self.n,
                self.dim,
                self.len()
            )));
        }
        Ok(())
    }

    /// Interior coordinates of every unknown, in storage order.
    pub fn points(&self) -> Vec<Vec<f64>> {
        let h = self.h();
        let n = self.n;
        match self.dim {
            1 => (0..n).map(|i| vec![(i + 1) as f64 * h]).collect(),
            _ => (0..n * n)
                .map(|k| vec![(k / n + 1) as f64 * h, (k % n + 1) as f64 * h])
                .collect(),
        }
    }

    /// Samples `f` at every interior point.
    pub fn sample(&self, f: impl Fn(&[f64]) -> f64) -> Vec<f64> {
        self.points().iter().map(|p| f(p)).collect()
    }
}

/// The Poisson model problem `-Δu = f`, zero Dirichlet data, discretised on
/// `grid` with the right-hand side sampled at interior points.
#[derive(Debug, Clone)]
pub struct PoissonProblem {
    grid: Grid,
    rhs: Vec<f64>,
}

impl PoissonProblem {
    pub fn new(grid: Grid, rhs: Vec<f64>) -> Result<Self> {
        grid.check(&rhs, "right-hand side")?;
        Ok(PoissonProblem { grid, rhs })
    }

    pub fn from_fn(grid: Grid, f: impl Fn(&[f64]) -> f64) -> Self {
        let rhs = grid.sample(f);
        PoissonProblem { grid, rhs }
    }

    /// The standard test problem: `f = π² sin(πx)` in 1D and `2π² sin(πx) sin(πy)`
    /// in 2D, whose continuous solution is the product of sines.
    pub fn sine(grid: Grid) -> Self {
        use std::f64::consts::PI;
        let dim = grid.dim() as f64;
        Self::from_fn(grid, |x| {
            dim * PI * PI * x.iter().map(|&xi| (PI * xi).sin()).product::<f64>()
        })
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    pub fn rhs(&self) -> &[f64] {
        &self.rhs
    }
}

/// Nested grids from finest (level 0) to coarsest.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GridHierarchy {
    levels: Vec<Grid>,
}

impl GridHierarchy {
    /// Full coarsening down to `n = 1`.
    pub fn full(fine: Grid) -> Result<Self> {
        Self::with_depth(fine, fine.max_depth())
    }

    pub fn with_depth(fine: Grid, depth: usize) -> Result<Self> {
        if depth < 2 || depth > fine.max_depth() {
            return Err(Error::invalid(format!(
                "hierarchy depth must lie in 2..={} for n={}, got {depth}",
                fine.max_depth(),
                fine.n()
            )));
        }
        let mut levels = vec![fine];
        while levels.len() < depth {
            let next = levels.last().and_then(Grid::coarsen).expect("depth checked");
            levels.push(next);
        }
        Ok(GridHierarchy { levels })
    }

    pub fn depth(&self) -> usize {
        self.levels.len()
    }

    pub fn level(&self, l: usize) -> Grid {
        self.levels[l]
    }

    pub fn levels(&self) -> &[Grid] {
        &self.levels
    }

    pub fn coarsest(&self) -> usize {
        self.levels.len() - 1
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_non_coarsenable_sizes() {
        assert!(Grid::new(1, 6).is_err());
        assert!(Grid::new(3, 7).is_err());
        assert!(Grid::new(2, 0).is_err());
        let g = Grid::new(2, 63).unwrap();
        assert_eq!(g.max_depth(), 6);
        assert!((g.h() * (g.n() + 1) as f64 - 1.0).abs() < f64::EPSILON);
    }

    #[test]
    fn hierarchy_sizes() {
        let h = GridHierarchy::full(Grid::new(1, 15).unwrap()).unwrap();
        let ns: Vec<_> = h.levels().iter().map(Grid::n).collect();
        assert_eq!(ns, vec![15, 7, 3, 1]);
        assert!(GridHierarchy::with_depth(Grid::new(1, 15).unwrap(), 1).is_err());
        assert!(GridHierarchy::with_depth(Grid::new(1, 15).unwrap(), 5).is_err());
        assert_eq!(
            GridHierarchy::with_depth(Grid::new(1, 15).unwrap(), 2)
                .unwrap()
                .level(1)
                .n(),
            7
        );
    }
}
