//! Depth-first branch and bound over group -> set choices.
//!
//! Optimality is proven with groups branched largest first, which prunes far
//! earlier than index order. The lexicographically smallest optimal
//! assignment is then built group by group: each group takes the smallest set
//! id for which an assignment of the optimal cost still exists.

use super::diverse::hamming;
use super::heuristic::{solve_heuristic_with, HeuristicOptions};
use super::{Result, SplitAssignment, SplitError, SplitProblem, SplitSet};

pub const DEFAULT_EXACT_CAP: usize = 24;

const WARM_START_BUDGET: usize = 20_000;

#[derive(Debug, Clone)]
pub struct ExactOptions<'a> {
    pub cap: usize,
    /// Solutions the result must differ from in at least `min_hamming` groups.
    pub avoid: &'a [Vec<SplitSet>],
    pub min_hamming: usize,
}

impl Default for ExactOptions<'_> {
    fn default() -> Self {
        Self { cap: DEFAULT_EXACT_CAP, avoid: &[], min_hamming: 0 }
    }
}

pub fn solve_exact(problem: &SplitProblem) -> Result<SplitAssignment> {
    solve_exact_with(problem, &ExactOptions::default())
}

pub fn solve_exact_with(problem: &SplitProblem, opts: &ExactOptions<'_>) -> Result<SplitAssignment> {
    let n = problem.n_groups();
    if n > opts.cap {
        return Err(SplitError::TooLarge { n_groups: n, cap: opts.cap });
    }
    let counts = problem.counts();
    let mut largest_first: Vec<usize> = (0..n).collect();
    largest_first.sort_by(|&a, &b| counts.row_sum(b).cmp(&counts.row_sum(a)).then(a.cmp(&b)));

    let mut prove = Search::new(problem, opts, &largest_first, &vec![None; n], false);
    // Anything worse than a known feasible split is pruned; one above its
    // cost so an equal-cost optimum is still found.
    let h = HeuristicOptions { avoid: opts.avoid, min_hamming: opts.min_hamming, ..Default::default() };
    let warm = solve_heuristic_with(problem, 0, WARM_START_BUDGET, &h);
    if warm.is_feasible() && opts.avoid.iter().all(|a| hamming(a, warm.sets()) >= opts.min_hamming) {
        prove.best_cost = warm.objective() + 1;
    }
    prove.descend(0, 0);
    let Some(mut sets) = prove.best else {
        return Err(SplitError::Infeasible);
    };
    let optimum = prove.best_cost;

    // Fix groups in index order to the smallest set id that still admits an
    // optimum. The phase-one solution is a witness for the current prefix.
    let mut fixed: Vec<Option<SplitSet>> = vec![None; n];
    for g in 0..n {
        for set in SplitSet::ALL {
            if set == sets[g] {
                break;
            }
            fixed[g] = Some(set);
            let order: Vec<usize> = (0..=g).chain(largest_first.iter().copied().filter(|&i| i > g)).collect();
            let mut check = Search::new(problem, opts, &order, &fixed, true);
            check.best_cost = optimum + 1;
            check.descend(0, 0);
            if let Some(found) = check.best {
                sets = found;
                break;
            }
        }
        fixed[g] = Some(sets[g]);
    }
    SplitAssignment::new(problem, sets)
}

struct Search<'a> {
    problem: &'a SplitProblem,
    n: usize,
    c: usize,
    /// `order[depth]`: group branched at that depth.
    order: Vec<usize>,
    /// Inverse of `order`.
    position: Vec<usize>,
    fixed: Vec<Option<SplitSet>>,
    row_sums: Vec<u64>,
    /// `by_ratio[k]`: groups with class-k pixels, cheapest pixels-per-class-k-pixel first.
    by_ratio: Vec<Vec<usize>>,
    /// `suffix[d][k]`: class-k pixels in groups branched at depth `d` or later.
    suffix: Vec<Vec<u64>>,
    have: Vec<[u64; 3]>,
    /// Indexed by group.
    current: Vec<SplitSet>,
    best: Option<Vec<SplitSet>>,
    best_cost: u64,
    stop_at_first: bool,
    done: bool,
    avoid: &'a [Vec<SplitSet>],
    min_hamming: usize,
    distance: Vec<usize>,
}

impl<'a> Search<'a> {
    fn new(problem: &'a SplitProblem, opts: &ExactOptions<'a>, order: &[usize], fixed: &[Option<SplitSet>], stop_at_first: bool) -> Self {
        let (n, c) = (problem.n_groups(), problem.n_classes());
        let counts = problem.counts();
        let row_sums: Vec<u64> = (0..n).map(|i| counts.row_sum(i)).collect();
        let by_ratio = (0..c)
            .map(|k| {
                let mut g: Vec<usize> = (0..n).filter(|&i| counts.get(i, k) > 0).collect();
                // a/b < c/d  <=>  a*d < c*b
                g.sort_by(|&a, &b| {
                    (row_sums[a] as u128 * counts.get(b, k) as u128)
                        .cmp(&(row_sums[b] as u128 * counts.get(a, k) as u128))
                        .then(a.cmp(&b))
                });
                g
            })
            .collect();
        let mut position = vec![0; n];
        for (d, &g) in order.iter().enumerate() {
            position[g] = d;
        }
        let mut suffix = vec![vec![0u64; c]; n + 1];
        for d in (0..n).rev() {
            for k in 0..c {
                suffix[d][k] = suffix[d + 1][k] + counts.get(order[d], k);
            }
        }
        Self {
            problem,
            n,
            c,
            order: order.to_vec(),
            position,
            fixed: fixed.to_vec(),
            row_sums,
            by_ratio,
            suffix,
            have: vec![[0; 3]; c],
            current: vec![SplitSet::Pool; n],
            best: None,
            best_cost: u64::MAX,
            stop_at_first,
            done: false,
            avoid: opts.avoid,
            min_hamming: opts.min_hamming,
            distance: vec![0; opts.avoid.len()],
        }
    }

    /// Cost lower bound for completing depths `depth..n`, or `None` when no
    /// completion can satisfy the coverage constraints.
    ///
    /// Each constrained set must separately cover its largest per-class
    /// deficit; covering one class deficit is relaxed to a fractional
    /// knapsack over the remaining groups. Sets are bounded independently,
    /// which relaxes their disjointness.
    fn lower_bound(&self, depth: usize) -> Option<f64> {
        let counts = self.problem.counts();
        let mut total = 0.0;
        let mut deficits: Vec<[u64; 3]> = Vec::with_capacity(self.c);
        for k in 0..self.c {
            let mut d = [0u64; 3];
            for j in 0..3 {
                d[j] = self.problem.required(k, j).saturating_sub(self.have[k][j]);
            }
            if d.iter().sum::<u64>() > self.suffix[depth][k] {
                return None;
            }
            deficits.push(d);
        }
        for j in 0..3 {
            let mut worst = 0.0f64;
            for k in 0..self.c {
                let mut need = deficits[k][j];
                if need == 0 {
                    continue;
                }
                let mut cost = 0.0;
                for &g in &self.by_ratio[k] {
                    if self.position[g] < depth {
                        continue;
                    }
                    let take = counts.get(g, k);
                    if take >= need {
                        cost += self.row_sums[g] as f64 * need as f64 / take as f64;
                        need = 0;
                        break;
                    }
                    cost += self.row_sums[g] as f64;
                    need -= take;
                }
                debug_assert_eq!(need, 0);
                worst = worst.max(cost);
            }
            total += worst;
        }
        Some(total)
    }

    fn descend(&mut self, depth: usize, cost: u64) {
        if self.done {
            return;
        }
        if depth == self.n {
            if cost < self.best_cost
                && self.distance.iter().all(|&d| d >= self.min_hamming)
                && (0..self.c).all(|k| (0..3).all(|j| self.have[k][j] >= self.problem.required(k, j))) {
                self.best_cost = cost;
                self.best = Some(self.current.clone());
                self.done = self.stop_at_first;
            }
            return;
        }
        let Some(bound) = self.lower_bound(depth) else { return };
        // Integer costs: prune when no strictly better completion exists.
        if (cost as f64 + bound - 1e-9).ceil() >= self.best_cost as f64 {
            return;
        }
        let remaining = self.n - depth;
        if self.distance.iter().any(|&d| d + remaining < self.min_hamming) {
            return;
        }
        let g = self.order[depth];
        for set in SplitSet::ALL {
            if self.fixed[g].is_some_and(|f| f != set) {
                continue;
            }
            let j = set.constrained_index();
            if let Some(j) = j {
                for k in 0..self.c {
                    self.have[k][j] += self.problem.counts().get(g, k);
                }
            }
            for (a, d) in self.avoid.iter().zip(self.distance.iter_mut()) {
                if a[g] != set {
                    *d += 1;
                }
            }
            self.current[g] = set;
            let step = if j.is_some() { self.row_sums[g] } else { 0 };
            self.descend(depth + 1, cost + step);
            self.current[g] = SplitSet::Pool;
            for (a, d) in self.avoid.iter().zip(self.distance.iter_mut()) {
                if a[g] != set {
                    *d -= 1;
                }
            }
            if let Some(j) = j {
                for k in 0..self.c {
                    self.have[k][j] -= self.problem.counts().get(g, k);
                }
            }
            if self.done {
                return;
            }
        }
    }
}
