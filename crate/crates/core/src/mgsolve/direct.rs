use super::{ops, Grid};

/// Cholesky factor of the assembled operator, used for the coarsest-grid solve.
#[derive(Debug, Clone)]
pub(crate) struct DenseCholesky {
    n: usize,
    // Lower triangle, row-major, full storage.
    l: Vec<f64>,
}

impl DenseCholesky {
    pub fn for_grid(grid: &Grid) -> Self {
        let n = grid.len();
        // Assemble column by column from unit vectors; these systems are tiny.
        let mut a = vec![0.0; n * n];
        let mut e = vec![0.0; n];
        let mut col = vec![0.0; n];
        for j in 0..n {
            e[j] = 1.0;
            ops::apply_into(grid, &e, &mut col);
            for i in 0..n {
                a[i * n + j] = col[i];
            }
            e[j] = 0.0;
        }
        Self::factor(n, a)
    }

    fn factor(n: usize, mut a: Vec<f64>) -> Self {
        for j in 0..n {
            let mut d = a[j * n + j];
            for k in 0..j {
                d -= a[j * n + k] * a[j * n + k];
            }
            assert!(d > 0.0, "operator is not positive definite");
            let d = d.sqrt();
            a[j * n + j] = d;
            for i in j + 1..n {
                let mut s = a[i * n + j];
                for k in 0..j {
                    s -= a[i * n + k] * a[j * n + k];
                }
                a[i * n + j] = s / d;
            }
        }
        DenseCholesky { n, l: a }
    }

    pub fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut y = rhs.to_vec();
        for i in 0..n {
            for k in 0..i {
                y[i] -= self.l[i * n + k] * y[k];
            }
            y[i] /= self.l[i * n + i];
        }
        for i in (0..n).rev() {
            for k in i + 1..n {
                y[i] -= self.l[k * n + i] * y[k];
            }
            y[i] /= self.l[i * n + i];
        }
        y
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solves_small_systems() {
        for (dim, n) in [(1, 7), (2, 3), (2, 7)] {
            let grid = Grid::new(dim, n).unwrap();
            let f: Vec<f64> = (0..grid.len()).map(|i| (i as f64 * 0.37).sin()).collect();
            let u = DenseCholesky::for_grid(&grid).solve(&f);
            let r = ops::residual(&grid, &u, &f).unwrap();
            assert!(ops::norm2(&r) < 1e-10 * ops::norm2(&f));
        }
    }
}
