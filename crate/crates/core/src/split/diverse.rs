use serde::{Deserialize, Serialize};

use super::exact::{solve_exact_with, ExactOptions, DEFAULT_EXACT_CAP};
use super::heuristic::{solve_heuristic_with, HeuristicOptions};
use super::{Result, SplitAssignment, SplitError, SplitProblem, SplitSet};

/// Number of groups assigned to different sets.
pub fn hamming(a: &[SplitSet], b: &[SplitSet]) -> usize {
    a.iter().zip(b).filter(|(x, y)| x != y).count()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitPortfolio {
    pub assignments: Vec<SplitAssignment>,
    pub min_hamming: usize,
    /// Smallest pairwise Hamming distance among the returned splits (`None` below two splits).
    pub pairwise_min_distance: Option<usize>,
    /// Fewer than the requested number of splits could be found.
    pub exhausted: bool,
}

#[derive(Debug, Clone, Copy)]
pub struct DiversityOptions {
    pub exact_cap: usize,
    pub heuristic_budget: usize,
}

impl Default for DiversityOptions {
    fn default() -> Self {
        Self { exact_cap: DEFAULT_EXACT_CAP, heuristic_budget: 200_000 }
    }
}

/// Solves repeatedly, each time requiring the new split to differ from every
/// earlier one in at least `min_hamming` groups. Exact below the cap,
/// heuristic above it.
pub fn enumerate_diverse_splits(
    problem: &SplitProblem,
    k: usize,
    min_hamming: usize,
    seed: u64,
    opts: DiversityOptions,
) -> Result<SplitPortfolio> {
    let mut found: Vec<Vec<SplitSet>> = Vec::new();
    let mut assignments = Vec::new();
    let mut exhausted = false;
    while assignments.len() < k.max(1) {
        let next = if problem.n_groups() <= opts.exact_cap {
            match solve_exact_with(problem, &ExactOptions { cap: opts.exact_cap, avoid: &found, min_hamming }) {
                Ok(a) => Some(a),
                Err(SplitError::Infeasible) => None,
                Err(e) => return Err(e),
            }
        } else {
            let h = HeuristicOptions { avoid: &found, min_hamming, ..Default::default() };
            let a = solve_heuristic_with(problem, seed.wrapping_add(assignments.len() as u64), opts.heuristic_budget, &h);
            let diverse = found.iter().all(|f| hamming(f, a.sets()) >= min_hamming);
            (a.is_feasible() && diverse).then_some(a)
        };
        match next {
            Some(a) => {
                found.push(a.sets().to_vec());
                assignments.push(a);
            }
            None => {
                exhausted = true;
                break;
            }
        }
    }
    let mut pairwise_min_distance = None;
    for i in 0..found.len() {
        for j in (i + 1)..found.len() {
            let d = hamming(&found[i], &found[j]);
            pairwise_min_distance = Some(pairwise_min_distance.map_or(d, |m: usize| m.min(d)));
        }
    }
    Ok(SplitPortfolio { assignments, min_hamming, pairwise_min_distance, exhausted })
}
