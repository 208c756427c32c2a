//! Solvers for the capped tile assignment.
//!
//! * [`cep_solve`]: fitness-proportional block choice with cluster-biased
//!   mutation.
//! * [`rii_solve`]: randomized iterative improvement, uniform block and
//!   uniform tile.
//! * [`greedy_solve`]: row-major best available tile.
//! * [`exhaustive_oracle`]: branch-and-bound optimum for tiny instances.
//!
//! One evaluation is one block/tile MAE computation. The `D` computations
//! that seed an initial assignment count toward the budget. Proposals
//! rejected by the reuse cap cost an iteration but no evaluation.

use std::fmt;
use std::str::FromStr;
use std::time::{Duration, Instant};

use log::warn;
use rand::seq::{index, SliceRandom};
use rand::Rng;
use rayon::prelude::*;

use crate::clustering::ClusterModel;
use crate::problem::{Assignment, MosaicProblem};
use crate::{MosaicError, Result};

pub const DEFAULT_ALPHA: f64 = 0.75;
pub const DEFAULT_MAX_EVALUATIONS: u64 = 1_600_000;
pub const DEFAULT_LOG_STRIDE: u64 = 1000;

/// Iterations allowed per unit of evaluation budget before a run is cut off.
const ITERATION_VALVE: u64 = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Algorithm {
    Cep,
    Rii,
    Greedy,
}

impl Algorithm {
    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Cep => "cep",
            Algorithm::Rii => "rii",
            Algorithm::Greedy => "greedy",
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algorithm {
    type Err = MosaicError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "cep" => Ok(Algorithm::Cep),
            "rii" => Ok(Algorithm::Rii),
            "greedy" => Ok(Algorithm::Greedy),
            _ => Err(MosaicError::InvalidArgument(format!(
                "unknown algorithm {s:?} (expected cep, rii or greedy)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Budget {
    pub max_evaluations: u64,
    /// A log sample is taken whenever the evaluation count hits a multiple
    /// of this, besides every accepted mutation.
    pub log_stride: u64,
}

impl Default for Budget {
    fn default() -> Self {
        Budget {
            max_evaluations: DEFAULT_MAX_EVALUATIONS,
            log_stride: DEFAULT_LOG_STRIDE,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CepParams {
    /// Probability of a within-cluster draw for blocks fitting better than
    /// average; worse blocks use `1 - alpha`.
    pub alpha: f64,
    pub budget: Budget,
}

impl Default for CepParams {
    fn default() -> Self {
        CepParams {
            alpha: DEFAULT_ALPHA,
            budget: Budget::default(),
        }
    }
}

impl CepParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(MosaicError::InvalidArgument(format!(
                "alpha must lie in (0, 1), got {}",
                self.alpha
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sample {
    pub evaluations: u64,
    pub fitness: f64,
    pub wall_ms: u64,
}

/// Overall fitness against evaluation count over one run.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ConvergenceLog {
    pub stride: u64,
    pub samples: Vec<Sample>,
}

impl ConvergenceLog {
    pub fn new(stride: u64) -> Self {
        ConvergenceLog {
            stride,
            samples: Vec::new(),
        }
    }

    /// Appends a sample, folding it into the previous one when the
    /// evaluation count has not moved.
    pub fn record(&mut self, evaluations: u64, fitness: f64, wall_ms: u64) {
        let s = Sample {
            evaluations,
            fitness,
            wall_ms,
        };
        match self.samples.last_mut() {
            Some(last) if last.evaluations == evaluations => *last = s,
            _ => self.samples.push(s),
        }
    }

    pub fn last(&self) -> Option<&Sample> {
        self.samples.last()
    }

    /// Evaluations strictly increasing and fitness non-increasing.
    pub fn is_monotone(&self) -> bool {
        self.samples
            .windows(2)
            .all(|w| w[1].evaluations > w[0].evaluations && w[1].fitness <= w[0].fitness)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("evaluations,fitness,wall_ms\n");
        for s in &self.samples {
            out.push_str(&format!("{},{:.10},{}\n", s.evaluations, s.fitness, s.wall_ms));
        }
        out
    }
}

#[derive(Debug, Clone)]
pub struct SolveResult {
    pub assignment: Assignment,
    pub log: ConvergenceLog,
    pub evaluations_used: u64,
    pub wall_time: Duration,
}

impl SolveResult {
    pub fn overall_fitness(&self) -> f64 {
        self.assignment.overall_fitness()
    }
}

/// Random starting assignment plus the `D` evaluations it cost.
///
/// With at least as many tiles as blocks the ids are distinct; otherwise
/// tiles are dealt round-robin from a shuffled deck, so no tile is used more
/// than `ceil(D / n) <= n_redu` times.
pub fn initialize_assignment<R: Rng + ?Sized>(
    problem: &MosaicProblem,
    rng: &mut R,
) -> Result<(Assignment, u64)> {
    let (d, n) = (problem.num_blocks(), problem.num_tiles());
    if n.saturating_mul(problem.n_redu()) < d {
        return Err(MosaicError::Infeasible {
            tiles: n,
            n_redu: problem.n_redu(),
            blocks: d,
        });
    }
    let x = if n >= d {
        index::sample(rng, n, d).into_vec()
    } else {
        let mut deck: Vec<usize> = (0..n).collect();
        deck.shuffle(rng);
        let mut x: Vec<usize> = (0..d).map(|l| deck[l % n]).collect();
        x.shuffle(rng);
        x
    };
    Ok((Assignment::new(problem, x)?, d as u64))
}

struct Run {
    start: Instant,
    log: ConvergenceLog,
    evaluations: u64,
}

impl Run {
    fn start(initial: &Assignment, evaluations: u64, stride: u64) -> Self {
        let mut run = Run {
            start: Instant::now(),
            log: ConvergenceLog::new(stride),
            evaluations,
        };
        run.sample(initial);
        run
    }

    fn sample(&mut self, a: &Assignment) {
        let ms = self.start.elapsed().as_millis() as u64;
        self.log.record(self.evaluations, a.overall_fitness(), ms);
    }

    /// Evaluates tile `k` at block `g` and applies it on strict improvement.
    fn try_move<F: FnMut(&Assignment)>(
        &mut self,
        problem: &MosaicProblem,
        a: &mut Assignment,
        g: usize,
        k: usize,
        on_accept: &mut F,
    ) {
        let s = problem.block_tile_sad(g, k);
        self.evaluations += 1;
        if s < a.block_sad(g) {
            a.apply_mutation(g, k, s);
            on_accept(a);
            self.sample(a);
        } else if self.log.stride > 0 && self.evaluations.is_multiple_of(self.log.stride) {
            self.sample(a);
        }
    }

    fn finish(mut self, assignment: Assignment) -> SolveResult {
        self.sample(&assignment);
        SolveResult {
            assignment,
            log: self.log,
            evaluations_used: self.evaluations,
            wall_time: self.start.elapsed(),
        }
    }
}

fn iteration_cap(budget: &Budget) -> u64 {
    budget.max_evaluations.saturating_mul(ITERATION_VALVE)
}

/// Cluster-biased evolutionary programming.
pub fn cep_solve<R: Rng + ?Sized>(
    problem: &MosaicProblem,
    model: &ClusterModel,
    params: &CepParams,
    rng: &mut R,
) -> Result<SolveResult> {
    cep_solve_observed(problem, model, params, rng, |_| {})
}

/// [`cep_solve`], calling `on_accept` after every accepted mutation.
pub fn cep_solve_observed<R: Rng + ?Sized, F: FnMut(&Assignment)>(
    problem: &MosaicProblem,
    model: &ClusterModel,
    params: &CepParams,
    rng: &mut R,
    mut on_accept: F,
) -> Result<SolveResult> {
    params.validate()?;
    if model.num_tiles() != problem.num_tiles() {
        return Err(MosaicError::InvalidArgument(format!(
            "cluster model covers {} tiles, database has {}",
            model.num_tiles(),
            problem.num_tiles()
        )));
    }
    let (mut a, evals) = initialize_assignment(problem, rng)?;
    let mut run = Run::start(&a, evals, params.budget.log_stride);
    let cap = iteration_cap(&params.budget);
    let mut iterations = 0u64;
    while run.evaluations < params.budget.max_evaluations {
        if iterations == cap {
            warn!("cep: {iterations} iterations without exhausting the evaluation budget, stopping");
            break;
        }
        iterations += 1;
        let Some(g) = a.weighted_block_sample(rng) else {
            break;
        };
        let th = if a.beats_average(g) {
            params.alpha
        } else {
            1.0 - params.alpha
        };
        let current = a.tile_at(g);
        let k = if rng.gen::<f64>() < th {
            model
                .draw_within(current, rng)
                .or_else(|| model.draw_outside(current, rng))
        } else {
            model
                .draw_outside(current, rng)
                .or_else(|| model.draw_within(current, rng))
        };
        let Some(k) = k else {
            break;
        };
        if a.is_available(k) {
            run.try_move(problem, &mut a, g, k, &mut on_accept);
        }
    }
    Ok(run.finish(a))
}

/// Randomized iterative improvement under the same reuse cap and budget.
pub fn rii_solve<R: Rng + ?Sized>(
    problem: &MosaicProblem,
    budget: &Budget,
    rng: &mut R,
) -> Result<SolveResult> {
    rii_solve_observed(problem, budget, rng, |_| {})
}

/// [`rii_solve`], calling `on_accept` after every accepted mutation.
pub fn rii_solve_observed<R: Rng + ?Sized, F: FnMut(&Assignment)>(
    problem: &MosaicProblem,
    budget: &Budget,
    rng: &mut R,
    mut on_accept: F,
) -> Result<SolveResult> {
    let (mut a, evals) = initialize_assignment(problem, rng)?;
    let mut run = Run::start(&a, evals, budget.log_stride);
    let (d, n) = (problem.num_blocks(), problem.num_tiles());
    let cap = iteration_cap(budget);
    let mut iterations = 0u64;
    while run.evaluations < budget.max_evaluations && a.total_sad() > 0 {
        if iterations == cap {
            warn!("rii: {iterations} iterations without exhausting the evaluation budget, stopping");
            break;
        }
        iterations += 1;
        let l = rng.gen_range(0..d);
        let k = rng.gen_range(0..n);
        if a.is_available(k) {
            run.try_move(problem, &mut a, l, k, &mut on_accept);
        }
    }
    Ok(run.finish(a))
}

/// Row-major greedy: each block takes its lowest-MAE tile among those still
/// under the reuse cap, lowest id on ties. Evaluates only available tiles.
pub fn greedy_solve(problem: &MosaicProblem) -> Result<SolveResult> {
    let start = Instant::now();
    let (d, n) = (problem.num_blocks(), problem.num_tiles());
    let cap = problem.n_redu() as u32;
    let mut usage = vec![0u32; n];
    let mut x = Vec::with_capacity(d);
    let mut evaluations = 0u64;
    for l in 0..d {
        let (best, _) = (0..n)
            .into_par_iter()
            .filter(|&k| usage[k] < cap)
            .map(|k| (k, problem.block_tile_sad(l, k)))
            .min_by_key(|&(k, s)| (s, k))
            .ok_or(MosaicError::Infeasible {
                tiles: n,
                n_redu: problem.n_redu(),
                blocks: d,
            })?;
        evaluations += usage.iter().filter(|&&u| u < cap).count() as u64;
        usage[best] += 1;
        x.push(best);
    }
    let assignment = Assignment::new(problem, x)?;
    let mut log = ConvergenceLog::new(0);
    let wall_time = start.elapsed();
    log.record(evaluations, assignment.overall_fitness(), wall_time.as_millis() as u64);
    Ok(SolveResult {
        assignment,
        log,
        evaluations_used: evaluations,
        wall_time,
    })
}

pub const ORACLE_MAX_BLOCKS: usize = 9;
pub const ORACLE_MAX_TILES: usize = 12;

/// Exact optimum by depth-first branch and bound over all assignments that
/// respect the reuse cap. Among optimal assignments the lexicographically
/// smallest is returned.
pub fn exhaustive_oracle(problem: &MosaicProblem) -> Result<Assignment> {
    let (d, n) = (problem.num_blocks(), problem.num_tiles());
    if d > ORACLE_MAX_BLOCKS || n > ORACLE_MAX_TILES {
        return Err(MosaicError::InvalidArgument(format!(
            "oracle is limited to {ORACLE_MAX_BLOCKS} blocks and {ORACLE_MAX_TILES} tiles, got {d} and {n}"
        )));
    }
    if n.saturating_mul(problem.n_redu()) < d {
        return Err(MosaicError::Infeasible {
            tiles: n,
            n_redu: problem.n_redu(),
            blocks: d,
        });
    }
    let cost: Vec<Vec<u64>> = (0..d)
        .map(|l| (0..n).map(|k| problem.block_tile_sad(l, k)).collect())
        .collect();
    // bound[l] = sum of unconstrained minima of blocks l..d
    let mut bound = vec![0u64; d + 1];
    for l in (0..d).rev() {
        bound[l] = bound[l + 1] + cost[l].iter().min().copied().unwrap_or(0);
    }

    struct Search<'a> {
        cost: &'a [Vec<u64>],
        bound: &'a [u64],
        cap: usize,
        usage: Vec<usize>,
        x: Vec<usize>,
        best: Option<(u64, Vec<usize>)>,
    }

    impl Search<'_> {
        fn go(&mut self, l: usize, partial: u64) {
            if let Some((b, _)) = &self.best {
                if partial + self.bound[l] >= *b {
                    return;
                }
            }
            if l == self.cost.len() {
                self.best = Some((partial, self.x.clone()));
                return;
            }
            for k in 0..self.cost[l].len() {
                if self.usage[k] < self.cap {
                    self.usage[k] += 1;
                    self.x.push(k);
                    self.go(l + 1, partial + self.cost[l][k]);
                    self.x.pop();
                    self.usage[k] -= 1;
                }
            }
        }
    }

    let mut search = Search {
        cost: &cost,
        bound: &bound,
        cap: problem.n_redu(),
        usage: vec![0; n],
        x: Vec::with_capacity(d),
        best: None,
    };
    search.go(0, 0);
    let (_, x) = search.best.expect("feasible instance has a solution");
    Assignment::new(problem, x)
}
