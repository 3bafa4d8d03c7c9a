use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Unet,
    Fmgnet,
    Wnet,
}

impl Family {
    pub const ALL: [Family; 3] = [Family::Unet, Family::Fmgnet, Family::Wnet];

    pub fn name(&self) -> &'static str {
        match self {
            Family::Unet => "unet",
            Family::Fmgnet => "fmgnet",
            Family::Wnet => "wnet",
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace(['-', '_'], "").as_str() {
            "unet" => Ok(Family::Unet),
            "fmgnet" | "fmg" => Ok(Family::Fmgnet),
            "wnet" | "w" => Ok(Family::Wnet),
            _ => Err(Error::invalid(format!("unknown family `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Move {
    Down,
    Up,
}

/// The ordered list of grid levels a network (or solver) passes through.
///
/// Consecutive levels differ by exactly one. Every schedule starts and ends at
/// the finest level 0.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CycleSchedule {
    family: Family,
    depth: usize,
    levels: Vec<usize>,
}

impl CycleSchedule {
    pub fn family(&self) -> Family {
        self.family
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn levels(&self) -> &[usize] {
        &self.levels
    }

    pub fn moves(&self) -> Vec<Move> {
        self.levels
            .windows(2)
            .map(|w| if w[1] > w[0] { Move::Down } else { Move::Up })
            .collect()
    }

    /// Levels after the input stem: for FMG-Net this drops the initial descent
    /// to the coarsest grid (keeping the coarsest visit itself); other families
    /// have no stem.
    pub fn without_stem(&self) -> &[usize] {
        match self.family {
            Family::Fmgnet => &self.levels[self.depth - 1..],
            _ => &self.levels,
        }
    }

    fn check(&self) -> Result<()> {
        let ok = self.levels.first() == Some(&0)
            && self.levels.last() == Some(&0)
            && self.levels.iter().all(|&l| l < self.depth)
            && self.levels.windows(2).all(|w| w[0].abs_diff(w[1]) == 1);
        if ok {
            Ok(())
        } else {
            Err(Error::Structural(format!("malformed schedule {:?}", self.levels)))
        }
    }
}

/// Level schedule for a network of the given family with `depth` grids.
///
/// * `unet`: one V: straight down to the coarsest grid and back.
/// * `wnet`: the γ=2 recursion, so every intermediate level is revisited.
/// * `fmgnet`: a stem descending to the coarsest grid, then coarse-to-fine
///   excursions that reach one level finer each time, each returning to the
///   coarsest grid, and finally an ascent to level 0.
///
/// ```
/// use mgnets::cyclegraph::{schedule, Family};
/// assert_eq!(schedule(Family::Unet, 2).unwrap().levels(), &[0, 1, 0]);
/// assert_eq!(schedule(Family::Wnet, 3).unwrap().levels(), &[0, 1, 2, 1, 2, 1, 0]);
/// assert_eq!(
///     schedule(Family::Fmgnet, 4).unwrap().levels(),
///     &[0, 1, 2, 3, 2, 3, 2, 1, 2, 3, 2, 1, 0]
/// );
/// ```
pub fn schedule(family: Family, depth: usize) -> Result<CycleSchedule> {
    if depth < 2 {
        return Err(Error::invalid(format!("depth must be at least 2, got {depth}")));
    }
    let bottom = depth - 1;
    let levels = match family {
        Family::Unet => (0..=bottom).chain((0..bottom).rev()).collect(),
        Family::Wnet => {
            let mut out = Vec::new();
            w_levels(0, bottom, &mut out);
            out
        }
        Family::Fmgnet => {
            let mut out: Vec<usize> = (0..=bottom).collect();
            for top in (0..bottom).rev() {
                out.extend((top..bottom).rev());
                if top > 0 {
                    out.extend(top + 1..=bottom);
                }
            }
            out
        }
    };
    let s = CycleSchedule {
        family,
        depth,
        levels,
    };
    s.check()?;
    Ok(s)
}

fn w_levels(level: usize, bottom: usize, out: &mut Vec<usize>) {
    out.push(level);
    if level == bottom {
        return;
    }
    let reps = if level == 0 { 1 } else { 2 };
    for _ in 0..reps {
        w_levels(level + 1, bottom, out);
        out.push(level);
    }
}
