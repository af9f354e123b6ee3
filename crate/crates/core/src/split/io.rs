//! Split file: `{problem_hash, proportions, assignment: {group id: set id},
//! objective, feasible, realized_proportions}`.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{realized_proportions, Proportions, Result, SplitAssignment, SplitError, SplitProblem, SplitSet};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RealizedProportions {
    pub train: f64,
    pub pool: f64,
    pub validation: f64,
    pub test: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitFile {
    pub problem_hash: String,
    pub proportions: Proportions,
    /// Keys are decimal group ids; JSON object keys must be strings.
    pub assignment: BTreeMap<String, SplitSet>,
    pub objective: u64,
    pub feasible: bool,
    pub realized_proportions: RealizedProportions,
}

impl SplitFile {
    pub fn new(problem: &SplitProblem, assignment: &SplitAssignment) -> Result<Self> {
        let r = realized_proportions(problem, assignment.sets())?;
        Ok(Self {
            problem_hash: problem.hash(),
            proportions: problem.proportions(),
            assignment: assignment.sets().iter().enumerate().map(|(i, s)| (i.to_string(), *s)).collect(),
            objective: assignment.objective(),
            feasible: assignment.is_feasible(),
            realized_proportions: RealizedProportions { train: r[0], pool: r[1], validation: r[2], test: r[3] },
        })
    }

    /// Group -> set vector covering groups `0..n_groups`.
    pub fn sets(&self, n_groups: usize) -> Result<Vec<SplitSet>> {
        let mut out = vec![None; n_groups];
        for (k, s) in &self.assignment {
            let g: usize = k.parse().map_err(|_| SplitError::MalformedAssignment(format!("group key {k:?} is not an integer")))?;
            if g >= n_groups {
                return Err(SplitError::MalformedAssignment(format!("group {g} outside 0..{n_groups}")));
            }
            out[g] = Some(*s);
        }
        out.into_iter()
            .enumerate()
            .map(|(g, s)| s.ok_or_else(|| SplitError::MalformedAssignment(format!("group {g} has no set"))))
            .collect()
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string_pretty(self)
            .map_err(|e| SplitError::Format { path: path.display().to_string(), reason: e.to_string() })?;
        fs::write(path, json).map_err(|source| SplitError::Io { path: path.display().to_string(), source })
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|source| SplitError::Io { path: path.display().to_string(), source })?;
        serde_json::from_str(&text).map_err(|e| SplitError::Format { path: path.display().to_string(), reason: e.to_string() })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::GroupClassMatrix;
    use crate::split::solve_exact;

    #[test]
    fn file_round_trip_and_missing_group() {
        let rows = vec![vec![4, 1], vec![1, 4], vec![3, 3], vec![2, 2]];
        let pr = SplitProblem::new(GroupClassMatrix::from_rows(&rows).unwrap(), Proportions::uniform(0.2)).unwrap();
        let a = solve_exact(&pr).unwrap();
        let f = SplitFile::new(&pr, &a).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("split.json");
        f.write(&p).unwrap();
        let back = SplitFile::read(&p).unwrap();
        assert_eq!(back, f);
        assert_eq!(back.sets(4).unwrap(), a.sets());
        let mut broken = back.clone();
        broken.assignment.remove("2");
        assert!(matches!(broken.sets(4), Err(SplitError::MalformedAssignment(_))));
        let text = std::fs::read_to_string(&p).unwrap();
        assert!(text.contains("\"problem_hash\""));
        assert!(text.contains("\"0\": "));
    }
}
