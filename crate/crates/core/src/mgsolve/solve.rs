use std::fmt;
use std::io::Write;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::cycles::{CycleRecorder, Multigrid};
use super::ops::{norm2, residual_into};
use super::{Grid, GridHierarchy, PoissonProblem, SmootherConfig};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CycleKind {
    V,
    W,
    Fmg,
}

impl CycleKind {
    pub const ALL: [CycleKind; 3] = [CycleKind::V, CycleKind::W, CycleKind::Fmg];

    pub fn name(&self) -> &'static str {
        match self {
            CycleKind::V => "v",
            CycleKind::W => "w",
            CycleKind::Fmg => "fmg",
        }
    }
}

impl fmt::Display for CycleKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for CycleKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "v" => Ok(CycleKind::V),
            "w" => Ok(CycleKind::W),
            "fmg" => Ok(CycleKind::Fmg),
            other => Err(Error::invalid(format!("unknown cycle `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HistoryEntry {
    pub cycle: usize,
    pub work_units: f64,
    pub residual_l2: f64,
}

/// Residual norm after every cycle, starting with the initial guess at cycle 0.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ResidualHistory {
    entries: Vec<HistoryEntry>,
}

impl ResidualHistory {
    pub fn entries(&self) -> &[HistoryEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn last(&self) -> Option<&HistoryEntry> {
        self.entries.last()
    }

    /// Residual after `cycle` cycles, if that many were run.
    pub fn residual_at(&self, cycle: usize) -> Option<f64> {
        self.entries
            .iter()
            .find(|e| e.cycle == cycle)
            .map(|e| e.residual_l2)
    }

    fn push(&mut self, entry: HistoryEntry) {
        debug_assert!(self.entries.last().is_none_or(|e| e.cycle < entry.cycle));
        debug_assert!(entry.residual_l2 >= 0.0);
        self.entries.push(entry);
    }

    /// `cycle,work_units,residual_l2` with a header line.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "cycle,work_units,residual_l2")?;
        for e in &self.entries {
            writeln!(out, "{},{},{:e}", e.cycle, e.work_units, e.residual_l2)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SolveOutcome {
    pub solution: Vec<f64>,
    pub history: ResidualHistory,
    /// Whether the relative residual reached the tolerance. A non-converged
    /// solve still returns its best iterate.
    pub converged: bool,
}

/// Iterates `cycle` from a zero guess until `‖f − A·u‖ / ‖f‖ ≤ tol` or
/// `max_cycles` is reached.
///
/// FMG iterates on the residual equation: each cycle runs a full-multigrid
/// pass for `A·e = r` and adds the correction.
pub fn solve(
    problem: &PoissonProblem,
    cycle: CycleKind,
    config: &SmootherConfig,
    tol: f64,
    max_cycles: usize,
) -> Result<SolveOutcome> {
    let hierarchy = GridHierarchy::full(problem.grid())?;
    solve_with(problem, &hierarchy, cycle, config, tol, max_cycles)
}

pub fn solve_with(
    problem: &PoissonProblem,
    hierarchy: &GridHierarchy,
    cycle: CycleKind,
    config: &SmootherConfig,
    tol: f64,
    max_cycles: usize,
) -> Result<SolveOutcome> {
    if !(tol > 0.0) {
        return Err(Error::invalid(format!("tolerance must be positive, got {tol}")));
    }
    if hierarchy.level(0) != problem.grid() {
        return Err(Error::invalid("hierarchy does not start at the problem grid"));
    }
    let mg = Multigrid::new(hierarchy.clone(), *config)?;
    let grid = problem.grid();
    let f = problem.rhs();
    let f_norm = norm2(f);

    let mut u = vec![0.0; grid.len()];
    let mut r = vec![0.0; grid.len()];
    let mut rec = CycleRecorder::new();
    let mut history = ResidualHistory::default();

    residual_into(&grid, &u, f, &mut r);
    let mut res = norm2(&r);
    history.push(HistoryEntry {
        cycle: 0,
        work_units: 0.0,
        residual_l2: res,
    });
    let reached = |res: f64| f_norm == 0.0 || res <= tol * f_norm;
    let mut converged = reached(res);

    let mut k = 0;
    while !converged && k < max_cycles {
        k += 1;
        match cycle {
            CycleKind::V => mg.v_cycle(&mut u, f, 0, &mut rec),
            CycleKind::W => mg.w_cycle(&mut u, f, 0, &mut rec),
            CycleKind::Fmg => {
                let e = mg.fmg_cycle(&r, &mut rec);
                for (ui, ei) in u.iter_mut().zip(&e) {
                    *ui += ei;
                }
            }
        }
        residual_into(&grid, &u, f, &mut r);
        res = norm2(&r);
        history.push(HistoryEntry {
            cycle: k,
            work_units: rec.work(),
            residual_l2: res,
        });
        converged = reached(res);
    }
    Ok(SolveOutcome {
        solution: u,
        history,
        converged,
    })
}

/// Level-visit trace of one cycle of `kind` on a hierarchy with `depth` grids.
pub fn level_trace(kind: CycleKind, depth: usize) -> Result<Vec<usize>> {
    if depth < 2 {
        return Err(Error::invalid(format!("depth must be at least 2, got {depth}")));
    }
    let grid = Grid::new(1, (1 << depth) - 1)?;
    let mg = Multigrid::new(GridHierarchy::full(grid)?, SmootherConfig::default())?;
    let f = vec![1.0; grid.len()];
    let mut u = vec![0.0; grid.len()];
    let mut rec = CycleRecorder::new();
    match kind {
        CycleKind::V => mg.v_cycle(&mut u, &f, 0, &mut rec),
        CycleKind::W => mg.w_cycle(&mut u, &f, 0, &mut rec),
        CycleKind::Fmg => {
            mg.fmg_cycle(&f, &mut rec);
        }
    }
    Ok(rec.trace().to_vec())
}
