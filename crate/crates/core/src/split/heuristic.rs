//! Greedy construction followed by simulated-annealing repair and a final
//! pool-maximising local search. Scales the split problem past the exact
//! solver's reach.

use rand::Rng;

use super::{SplitAssignment, SplitProblem, SplitSet};
use crate::rng;

#[derive(Debug, Clone)]
pub struct HeuristicOptions<'a> {
    pub restarts: usize,
    /// Solutions the result should differ from in at least `min_hamming` groups.
    pub avoid: &'a [Vec<SplitSet>],
    pub min_hamming: usize,
}

impl Default for HeuristicOptions<'_> {
    fn default() -> Self {
        Self { restarts: 4, avoid: &[], min_hamming: 0 }
    }
}

/// Best feasible assignment found, or the least-violating one (flagged
/// infeasible) when none was found within `budget` annealing iterations.
pub fn solve_heuristic(problem: &SplitProblem, seed: u64, budget: usize) -> SplitAssignment {
    solve_heuristic_with(problem, seed, budget, &HeuristicOptions::default())
}

pub fn solve_heuristic_with(problem: &SplitProblem, seed: u64, budget: usize, opts: &HeuristicOptions<'_>) -> SplitAssignment {
    let restarts = opts.restarts.max(1);
    let per_restart = (budget / restarts).max(1);
    let mut best: Option<State> = None;
    for r in 0..restarts {
        let mut rng = rng::stream(seed, &[0x5350_4c49, r as u64]);
        let mut state = State::greedy(problem, opts);
        anneal(&mut state, &mut rng, per_restart, &mut best);
    }
    let mut best = best.expect("at least one restart ran");
    if best.is_feasible() {
        best.improve_pool();
    }
    SplitAssignment::new(problem, best.sets).expect("assignment covers every group")
}

#[derive(Clone)]
struct State<'a> {
    problem: &'a SplitProblem,
    avoid: &'a [Vec<SplitSet>],
    min_hamming: usize,
    sets: Vec<SplitSet>,
    row_sums: Vec<u64>,
    have: Vec<[u64; 3]>,
    distance: Vec<usize>,
    objective: u64,
}

impl<'a> State<'a> {
    fn empty(problem: &'a SplitProblem, opts: &HeuristicOptions<'a>) -> Self {
        let n = problem.n_groups();
        let distance = opts.avoid.iter().map(|a| a.iter().filter(|s| **s != SplitSet::Pool).count()).collect();
        Self {
            problem,
            avoid: opts.avoid,
            min_hamming: opts.min_hamming,
            sets: vec![SplitSet::Pool; n],
            row_sums: (0..n).map(|i| problem.counts().row_sum(i)).collect(),
            have: vec![[0; 3]; problem.n_classes()],
            distance,
            objective: 0,
        }
    }

    /// Largest groups first, each to the constrained set whose remaining
    /// per-class deficits it covers best; groups covering nothing stay pooled.
    fn greedy(problem: &'a SplitProblem, opts: &HeuristicOptions<'a>) -> Self {
        let mut s = Self::empty(problem, opts);
        let mut order: Vec<usize> = (0..problem.n_groups()).collect();
        order.sort_by(|&a, &b| s.row_sums[b].cmp(&s.row_sums[a]).then(a.cmp(&b)));
        let totals = problem.class_totals();
        for i in order {
            let mut best_j = None;
            let mut best_score = 0.0;
            for j in 0..3 {
                let score: f64 = (0..problem.n_classes())
                    .map(|k| {
                        let deficit = problem.required(k, j).saturating_sub(s.have[k][j]);
                        problem.counts().get(i, k).min(deficit) as f64 / totals[k] as f64
                    })
                    .sum();
                if score > best_score {
                    best_score = score;
                    best_j = Some(j);
                }
            }
            if let Some(j) = best_j {
                s.assign(i, SplitSet::CONSTRAINED[j]);
            }
        }
        s
    }

    fn assign(&mut self, group: usize, to: SplitSet) {
        let from = self.sets[group];
        if from == to {
            return;
        }
        let counts = self.problem.counts();
        if let Some(j) = from.constrained_index() {
            for k in 0..self.have.len() {
                self.have[k][j] -= counts.get(group, k);
            }
            self.objective -= self.row_sums[group];
        }
        if let Some(j) = to.constrained_index() {
            for k in 0..self.have.len() {
                self.have[k][j] += counts.get(group, k);
            }
            self.objective += self.row_sums[group];
        }
        for (a, d) in self.avoid.iter().zip(self.distance.iter_mut()) {
            let target = a[group];
            match (from == target, to == target) {
                (true, false) => *d += 1,
                (false, true) => *d -= 1,
                _ => {}
            }
        }
        self.sets[group] = to;
    }

    /// Coverage shortfall normalised per class plus diversity shortfall.
    fn violation(&self) -> f64 {
        let totals = self.problem.class_totals();
        let mut v = 0.0;
        for (k, h) in self.have.iter().enumerate() {
            for j in 0..3 {
                v += self.problem.required(k, j).saturating_sub(h[j]) as f64 / totals[k] as f64;
            }
        }
        v + self.distance.iter().map(|&d| self.min_hamming.saturating_sub(d) as f64).sum::<f64>()
    }

    fn is_feasible(&self) -> bool {
        self.have.iter().enumerate().all(|(k, h)| (0..3).all(|j| h[j] >= self.problem.required(k, j)))
            && self.distance.iter().all(|&d| d >= self.min_hamming)
    }

    /// Lexicographic (feasible first, then violation, then objective).
    fn better_than(&self, other: &State) -> bool {
        let (fa, fb) = (self.is_feasible(), other.is_feasible());
        if fa != fb {
            return fa;
        }
        if !fa {
            let (va, vb) = (self.violation(), other.violation());
            if (va - vb).abs() > 1e-12 {
                return va < vb;
            }
        }
        self.objective < other.objective
    }

    /// Moves groups out of the constrained sets into the pool (or trades a
    /// constrained group for a smaller pooled one) while feasibility holds.
    fn improve_pool(&mut self) {
        let n = self.sets.len();
        let mut improved = true;
        while improved {
            improved = false;
            let mut order: Vec<usize> = (0..n).collect();
            order.sort_by(|&a, &b| self.row_sums[b].cmp(&self.row_sums[a]).then(a.cmp(&b)));
            for &i in &order {
                let from = self.sets[i];
                if from == SplitSet::Pool {
                    continue;
                }
                self.assign(i, SplitSet::Pool);
                if self.is_feasible() {
                    improved = true;
                    continue;
                }
                self.assign(i, from);
                for &p in order.iter().rev() {
                    if self.sets[p] != SplitSet::Pool || self.row_sums[p] >= self.row_sums[i] {
                        continue;
                    }
                    self.assign(i, SplitSet::Pool);
                    self.assign(p, from);
                    if self.is_feasible() {
                        improved = true;
                        break;
                    }
                    self.assign(p, SplitSet::Pool);
                    self.assign(i, from);
                }
            }
        }
    }
}

fn anneal<'a, R: Rng>(state: &mut State<'a>, rng: &mut R, iters: usize, best: &mut Option<State<'a>>) {
    let n = state.sets.len();
    let total: u64 = state.row_sums.iter().sum();
    let weight = total as f64;
    let energy = |s: &State| s.objective as f64 + weight * s.violation();
    let t0 = (total as f64 / n as f64).max(1.0);
    let t_end = (*state.row_sums.iter().min().unwrap_or(&1) as f64 * 0.01).max(1e-3).min(t0);
    let mut e = energy(state);
    if best.as_ref().is_none_or(|b| state.better_than(b)) {
        *best = Some(state.clone());
    }
    for it in 0..iters {
        let t = t0 * (t_end / t0).powf(it as f64 / iters as f64);
        let undo: Vec<(usize, SplitSet)> = if n >= 2 && rng.random_bool(0.2) {
            let a = rng.random_range(0..n);
            let b = rng.random_range(0..n);
            if state.sets[a] == state.sets[b] {
                continue;
            }
            let (sa, sb) = (state.sets[a], state.sets[b]);
            state.assign(a, sb);
            state.assign(b, sa);
            vec![(a, sa), (b, sb)]
        } else {
            let g = rng.random_range(0..n);
            let old = state.sets[g];
            let mut to = SplitSet::ALL[rng.random_range(0..3)];
            if to >= old {
                to = SplitSet::ALL[to as usize];
            }
            state.assign(g, to);
            vec![(g, old)]
        };
        let e_new = energy(state);
        let delta = e_new - e;
        if delta <= 0.0 || rng.random::<f64>() < (-delta / t).exp() {
            e = e_new;
            if best.as_ref().is_none_or(|b| state.better_than(b)) {
                *best = Some(state.clone());
            }
        } else {
            for (g, s) in undo.into_iter().rev() {
                state.assign(g, s);
            }
        }
    }
}
