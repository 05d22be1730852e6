//! Seeded local search over test-set assignments.
//!
//! Each restart draws a random assignment and then applies pair swaps that
//! strictly lower the balance score until a full pass finds none. The best
//! restart wins; ties keep the earlier one.

use rand::seq::{index, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{Cohort, SplitRequest};

/// Independent random starts per plan.
pub const RESTARTS: usize = 8;

const MAX_PASSES: usize = 200;

/// Swaps smaller than this are treated as float noise.
const MIN_GAIN: f64 = 1e-12;

/// Running per-fold covariate sums for cheap swap evaluation.
struct FoldSums<'a> {
    cohort: &'a Cohort,
    test_size: f64,
    sums: Vec<Vec<f64>>,
}

impl<'a> FoldSums<'a> {
    fn new(cohort: &'a Cohort, sets: &[Vec<usize>], test_size: usize) -> Self {
        let mut s = Self { cohort, test_size: test_size as f64, sums: Vec::new() };
        s.reset(sets);
        s
    }

    fn reset(&mut self, sets: &[Vec<usize>]) {
        self.sums = sets
            .iter()
            .map(|set| {
                (0..self.cohort.spans.len())
                    .map(|j| set.iter().map(|&i| self.cohort.values[i][j]).sum())
                    .collect()
            })
            .collect();
    }

    /// Moves case `out` out of fold `f` and case `inn` into it.
    fn exchange(&mut self, f: usize, out: usize, inn: usize) {
        for j in 0..self.cohort.spans.len() {
            self.sums[f][j] += self.cohort.values[inn][j] - self.cohort.values[out][j];
        }
    }

    fn score(&self) -> f64 {
        if self.sums.len() < 2 {
            return 0.0;
        }
        let mut worst: f64 = 0.0;
        for (j, &span) in self.cohort.spans.iter().enumerate() {
            if span <= 0.0 {
                continue;
            }
            let (lo, hi) = self
                .sums
                .iter()
                .map(|s| s[j] / self.test_size)
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), m| (lo.min(m), hi.max(m)));
            worst = worst.max((hi - lo) / span);
        }
        worst
    }
}

fn canonical(sets: &[Vec<usize>]) -> Vec<Vec<usize>> {
    sets.iter()
        .map(|s| {
            let mut s = s.clone();
            s.sort_unstable();
            s
        })
        .collect()
}

fn best_of(runs: Vec<(Vec<Vec<usize>>, Vec<f64>)>) -> (Vec<Vec<usize>>, Vec<f64>) {
    let mut best: Option<(Vec<Vec<usize>>, Vec<f64>)> = None;
    for run in runs {
        let better = match &best {
            None => true,
            Some((_, trace)) => run.1.last() < trace.last(),
        };
        if better {
            best = Some(run);
        }
    }
    best.expect("at least one restart")
}

/// Pairwise-disjoint test sets. Cases outside every test set only train.
pub struct DisjointPlanner<'a> {
    cohort: &'a Cohort,
    folds: usize,
    test_size: usize,
    seed: u64,
}

impl<'a> DisjointPlanner<'a> {
    pub(crate) fn new(cohort: &'a Cohort, request: &SplitRequest) -> Self {
        Self { cohort, folds: request.fold_count, test_size: request.test_size, seed: request.seed }
    }

    pub fn run(&self) -> (Vec<Vec<usize>>, Vec<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let runs = (0..RESTARTS).map(|_| self.restart(&mut rng)).collect();
        best_of(runs)
    }

    fn restart(&self, rng: &mut ChaCha8Rng) -> (Vec<Vec<usize>>, Vec<f64>) {
        let n = self.cohort.len();
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(rng);
        // slot[i] = fold whose test set holds case i
        let mut slot: Vec<Option<usize>> = vec![None; n];
        let mut sets: Vec<Vec<usize>> = order
            .chunks(self.test_size)
            .take(self.folds)
            .enumerate()
            .map(|(f, chunk)| {
                for &i in chunk {
                    slot[i] = Some(f);
                }
                chunk.to_vec()
            })
            .collect();
        let mut sums = FoldSums::new(self.cohort, &sets, self.test_size);
        let mut current = self.cohort.balance(&canonical(&sets));
        let mut trace = vec![current];

        for _ in 0..MAX_PASSES {
            let mut improved = false;
            for a in 0..n {
                for b in a + 1..n {
                    let (sa, sb) = (slot[a], slot[b]);
                    if sa == sb {
                        continue;
                    }
                    if let Some(f) = sa {
                        sums.exchange(f, a, b);
                    }
                    if let Some(g) = sb {
                        sums.exchange(g, b, a);
                    }
                    if sums.score() < current - MIN_GAIN {
                        for (s, from, to) in [(sa, a, b), (sb, b, a)] {
                            if let Some(f) = s {
                                let pos = sets[f].iter().position(|&i| i == from).expect("member");
                                sets[f][pos] = to;
                            }
                        }
                        slot[a] = sb;
                        slot[b] = sa;
                        sums.reset(&sets);
                        current = self.cohort.balance(&canonical(&sets));
                        trace.push(current);
                        improved = true;
                    } else {
                        if let Some(f) = sa {
                            sums.exchange(f, b, a);
                        }
                        if let Some(g) = sb {
                            sums.exchange(g, a, b);
                        }
                    }
                }
            }
            if !improved {
                break;
            }
        }
        (canonical(&sets), trace)
    }
}

/// Test sets drawn independently per fold; a case may be tested in several
/// folds.
pub struct OverlappingPlanner<'a> {
    cohort: &'a Cohort,
    folds: usize,
    test_size: usize,
    seed: u64,
}

impl<'a> OverlappingPlanner<'a> {
    pub(crate) fn new(cohort: &'a Cohort, request: &SplitRequest) -> Self {
        Self { cohort, folds: request.fold_count, test_size: request.test_size, seed: request.seed }
    }

    pub fn run(&self) -> (Vec<Vec<usize>>, Vec<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let runs = (0..RESTARTS).map(|_| self.restart(&mut rng)).collect();
        best_of(runs)
    }

    fn restart(&self, rng: &mut ChaCha8Rng) -> (Vec<Vec<usize>>, Vec<f64>) {
        let n = self.cohort.len();
        let mut sets: Vec<Vec<usize>> =
            (0..self.folds).map(|_| index::sample(rng, n, self.test_size).into_vec()).collect();
        let mut member: Vec<Vec<bool>> = sets
            .iter()
            .map(|s| {
                let mut m = vec![false; n];
                for &i in s {
                    m[i] = true;
                }
                m
            })
            .collect();
        let mut sums = FoldSums::new(self.cohort, &sets, self.test_size);
        let mut current = self.cohort.balance(&canonical(&sets));
        let mut trace = vec![current];

        for _ in 0..MAX_PASSES {
            let mut improved = false;
            for f in 0..self.folds {
                for pos in 0..self.test_size {
                    for cand in 0..n {
                        if member[f][cand] {
                            continue;
                        }
                        let out = sets[f][pos];
                        sums.exchange(f, out, cand);
                        if sums.score() < current - MIN_GAIN {
                            sets[f][pos] = cand;
                            member[f][out] = false;
                            member[f][cand] = true;
                            sums.reset(&sets);
                            current = self.cohort.balance(&canonical(&sets));
                            trace.push(current);
                            improved = true;
                        } else {
                            sums.exchange(f, cand, out);
                        }
                    }
                }
            }
            if !improved {
                break;
            }
        }
        (canonical(&sets), trace)
    }
}
