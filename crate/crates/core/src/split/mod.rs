//! Spatially-disjoint ground-truth splitting.
//!
//! Every polygon group is assigned to exactly one of four sets: labeled
//! training (1), labeled pool (2), validation (3) and test (4). For each
//! constrained set `s ∈ {1, 3, 4}` and each class `k`, the set must receive at
//! least a fraction `p_s` of that class's labeled pixels. Among feasible
//! assignments we minimise the pixels placed in sets 1, 3 and 4, which keeps
//! the labeled pool as large as possible.

mod diverse;
mod exact;
mod heuristic;
pub mod io;

pub use diverse::{enumerate_diverse_splits, hamming, DiversityOptions, SplitPortfolio};
pub use exact::{solve_exact, solve_exact_with, ExactOptions, DEFAULT_EXACT_CAP};
pub use heuristic::{solve_heuristic, HeuristicOptions};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::scene::GroupClassMatrix;

#[derive(Debug, Error)]
pub enum SplitError {
    #[error("invalid split problem: {0}")]
    InvalidProblem(String),
    #[error("malformed assignment: {0}")]
    MalformedAssignment(String),
    #[error("problem has {n_groups} groups, above the exact-solver cap of {cap}; use the heuristic solver")]
    TooLarge { n_groups: usize, cap: usize },
    #[error("split problem is infeasible")]
    Infeasible,
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed split file {path}: {reason}")]
    Format { path: String, reason: String },
}

pub type Result<T> = std::result::Result<T, SplitError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(into = "u8", try_from = "u8")]
#[repr(u8)]
pub enum SplitSet {
    Train = 1,
    Pool = 2,
    Validation = 3,
    Test = 4,
}

impl SplitSet {
    pub const ALL: [SplitSet; 4] = [SplitSet::Train, SplitSet::Pool, SplitSet::Validation, SplitSet::Test];
    /// Sets carrying a minimum-proportion constraint, in the order used by [`Proportions`].
    pub const CONSTRAINED: [SplitSet; 3] = [SplitSet::Train, SplitSet::Validation, SplitSet::Test];

    pub fn id(self) -> u8 {
        self as u8
    }

    pub fn name(self) -> &'static str {
        match self {
            SplitSet::Train => "train",
            SplitSet::Pool => "pool",
            SplitSet::Validation => "validation",
            SplitSet::Test => "test",
        }
    }

    /// Position in [`SplitSet::CONSTRAINED`], `None` for the pool.
    pub fn constrained_index(self) -> Option<usize> {
        match self {
            SplitSet::Train => Some(0),
            SplitSet::Pool => None,
            SplitSet::Validation => Some(1),
            SplitSet::Test => Some(2),
        }
    }
}

impl From<SplitSet> for u8 {
    fn from(s: SplitSet) -> u8 {
        s as u8
    }
}

impl TryFrom<u8> for SplitSet {
    type Error = String;

    fn try_from(v: u8) -> std::result::Result<Self, String> {
        match v {
            1 => Ok(SplitSet::Train),
            2 => Ok(SplitSet::Pool),
            3 => Ok(SplitSet::Validation),
            4 => Ok(SplitSet::Test),
            _ => Err(format!("set id {v} not in 1..=4")),
        }
    }
}

/// Minimum per-class fractions for the train, validation and test sets.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Proportions {
    pub train: f64,
    pub validation: f64,
    pub test: f64,
}

impl Default for Proportions {
    fn default() -> Self {
        Self { train: 0.10, validation: 0.10, test: 0.40 }
    }
}

impl Proportions {
    pub fn as_array(&self) -> [f64; 3] {
        [self.train, self.validation, self.test]
    }

    pub fn zero() -> Self {
        Self { train: 0.0, validation: 0.0, test: 0.0 }
    }

    pub fn uniform(p: f64) -> Self {
        Self { train: p, validation: p, test: p }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SplitProblem {
    counts: GroupClassMatrix,
    proportions: Proportions,
    totals: Vec<u64>,
    /// `required[k][j]`: minimum pixel count of class `k` in constrained set `j`.
    required: Vec<[u64; 3]>,
}

/// Smallest integer count `n` with `n >= p * total`, tolerant of rounding in `p`.
fn required_count(p: f64, total: u64) -> u64 {
    let exact = p * total as f64;
    (exact - 1e-9 * exact.max(1.0)).ceil().max(0.0) as u64
}

impl SplitProblem {
    pub fn new(counts: GroupClassMatrix, proportions: Proportions) -> Result<Self> {
        let bad = |m: String| Err(SplitError::InvalidProblem(m));
        let ps = proportions.as_array();
        if let Some(p) = ps.iter().find(|p| !(0.0..1.0).contains(*p)) {
            return bad(format!("proportion {p} outside [0, 1)"));
        }
        if ps.iter().sum::<f64>() >= 1.0 {
            return bad(format!("train + validation + test proportions sum to {} (must be < 1)", ps.iter().sum::<f64>()));
        }
        if counts.n_groups() == 0 || counts.n_classes() == 0 {
            return bad("empty group/class matrix".into());
        }
        let totals = counts.class_totals();
        if let Some(k) = totals.iter().position(|t| *t == 0) {
            return bad(format!("class {} has no labeled pixels", k + 1));
        }
        if let Some(i) = (0..counts.n_groups()).find(|&i| counts.row_sum(i) == 0) {
            return bad(format!("group {i} has no labeled pixels"));
        }
        let required = totals.iter().map(|&t| ps.map(|p| required_count(p, t))).collect();
        Ok(Self { counts, proportions, totals, required })
    }

    pub fn counts(&self) -> &GroupClassMatrix {
        &self.counts
    }

    pub fn proportions(&self) -> Proportions {
        self.proportions
    }

    pub fn n_groups(&self) -> usize {
        self.counts.n_groups()
    }

    pub fn n_classes(&self) -> usize {
        self.counts.n_classes()
    }

    pub fn class_totals(&self) -> &[u64] {
        &self.totals
    }

    pub fn required(&self, class: usize, constrained_set: usize) -> u64 {
        self.required[class][constrained_set]
    }

    pub fn objective_of(&self, sets: &[SplitSet]) -> u64 {
        sets.iter().enumerate().filter(|(_, s)| **s != SplitSet::Pool).map(|(i, _)| self.counts.row_sum(i)).sum()
    }

    /// SHA-256 over the matrix and proportions, hex encoded.
    pub fn hash(&self) -> String {
        let mut h = Sha256::new();
        h.update((self.n_groups() as u64).to_le_bytes());
        h.update((self.n_classes() as u64).to_le_bytes());
        for i in 0..self.n_groups() {
            for &c in self.counts.row(i) {
                h.update(c.to_le_bytes());
            }
        }
        for p in self.proportions.as_array() {
            h.update(p.to_le_bytes());
        }
        hex::encode(h.finalize())
    }

    /// Per-class pixel counts of each constrained set under `sets`.
    fn constrained_counts(&self, sets: &[SplitSet]) -> Vec<[u64; 3]> {
        let mut have = vec![[0u64; 3]; self.n_classes()];
        for (i, s) in sets.iter().enumerate() {
            if let Some(j) = s.constrained_index() {
                for (k, h) in have.iter_mut().enumerate() {
                    h[j] += self.counts.get(i, k);
                }
            }
        }
        have
    }

    fn is_feasible(&self, sets: &[SplitSet]) -> bool {
        self.constrained_counts(sets).iter().zip(&self.required).all(|(h, r)| (0..3).all(|j| h[j] >= r[j]))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitAssignment {
    sets: Vec<SplitSet>,
    objective: u64,
    feasible: bool,
}

impl SplitAssignment {
    pub fn new(problem: &SplitProblem, sets: Vec<SplitSet>) -> Result<Self> {
        if sets.len() != problem.n_groups() {
            return Err(SplitError::MalformedAssignment(format!(
                "{} group assignments for {} groups",
                sets.len(),
                problem.n_groups()
            )));
        }
        let objective = problem.objective_of(&sets);
        let feasible = problem.is_feasible(&sets);
        Ok(Self { sets, objective, feasible })
    }

    pub fn sets(&self) -> &[SplitSet] {
        &self.sets
    }

    pub fn set_of(&self, group: usize) -> SplitSet {
        self.sets[group]
    }

    /// Pixels placed in train, validation and test.
    pub fn objective(&self) -> u64 {
        self.objective
    }

    pub fn is_feasible(&self) -> bool {
        self.feasible
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub set: SplitSet,
    /// 1-based class id.
    pub class_id: usize,
    pub realized: f64,
    pub required: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeasibilityReport {
    /// `realized[k][j]`: fraction of class `k + 1` in constrained set `j` (train, validation, test).
    pub realized: Vec<[f64; 3]>,
    pub violations: Vec<Violation>,
    pub feasible: bool,
    pub objective: u64,
}

pub fn verify_assignment(problem: &SplitProblem, sets: &[SplitSet]) -> Result<FeasibilityReport> {
    if sets.len() != problem.n_groups() {
        return Err(SplitError::MalformedAssignment(format!(
            "assignment covers {} of {} groups",
            sets.len(),
            problem.n_groups()
        )));
    }
    let have = problem.constrained_counts(sets);
    let ps = problem.proportions.as_array();
    let mut realized = Vec::with_capacity(problem.n_classes());
    let mut violations = Vec::new();
    for (k, h) in have.iter().enumerate() {
        let total = problem.totals[k] as f64;
        let row = [0, 1, 2].map(|j| h[j] as f64 / total);
        for j in 0..3 {
            if h[j] < problem.required[k][j] {
                violations.push(Violation { set: SplitSet::CONSTRAINED[j], class_id: k + 1, realized: row[j], required: ps[j] });
            }
        }
        realized.push(row);
    }
    Ok(FeasibilityReport { realized, feasible: violations.is_empty(), violations, objective: problem.objective_of(sets) })
}

/// Class-averaged fraction of labeled pixels in each set, ordered train, pool, validation, test.
pub fn realized_proportions(problem: &SplitProblem, sets: &[SplitSet]) -> Result<[f64; 4]> {
    if sets.len() != problem.n_groups() {
        return Err(SplitError::MalformedAssignment(format!(
            "assignment covers {} of {} groups",
            sets.len(),
            problem.n_groups()
        )));
    }
    let c = problem.n_classes();
    let mut out = [0.0; 4];
    for k in 0..c {
        let total = problem.totals[k] as f64;
        for (i, s) in sets.iter().enumerate() {
            out[s.id() as usize - 1] += problem.counts.get(i, k) as f64 / total;
        }
    }
    Ok(out.map(|v| v / c as f64))
}
