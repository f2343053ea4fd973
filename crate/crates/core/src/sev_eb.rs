//! Stabilized Energy Valley optimizer with Enhanced Bounds (SEV-EB): a
//! seed-deterministic population optimizer for box-bounded continuous
//! spaces. Each particle is classified as stable or unstable by comparing
//! its stability level against the population's stability bound; unstable
//! particles decay toward the best solution or a random neighbour, stable
//! ones drift toward the best/centroid blend. A linearly shrinking trust
//! region around the best-so-far solution supplies the enhanced bounds.
//!
//! Per-particle moves draw from substreams keyed by (seed, iteration,
//! particle index), so fitness evaluation may run in parallel without
//! changing a single output bit.
//!
//! The module also provides the binary encoding and wrapper fitness used
//! for feature selection, the benchmark functions, and a random-search
//! baseline with a matched evaluation budget.

use std::f64::consts::PI;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataio::RecordTable;
use crate::features::{apply_mask, FeatureError, FeatureMask};
use crate::metrics::{self, MetricsError};
use crate::network;
use crate::rng::{self, tag};

#[derive(Debug, Error)]
pub enum SevError {
    #[error("population too small: got {got}, need at least 4")]
    PopulationTooSmall { got: usize },
    #[error("bad search space: {0}")]
    BadSpace(String),
    #[error("bad config: {0}")]
    BadConfig(String),
    #[error("non-finite fitness input")]
    NonFiniteInput,
    #[error("fitness function returned {value} for particle {index}")]
    NonFiniteFitness { index: usize, value: f64 },
    #[error("unknown benchmark function: {0}")]
    UnknownFunction(String),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Feature(#[from] FeatureError),
}

/// Axis-aligned box of candidate solutions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchSpace {
    pub lb: Vec<f64>,
    pub ub: Vec<f64>,
}

impl SearchSpace {
    pub fn new(lb: Vec<f64>, ub: Vec<f64>) -> Result<SearchSpace, SevError> {
        let space = SearchSpace { lb, ub };
        space.check()?;
        Ok(space)
    }

    /// The cube [lo, hi]^d.
    pub fn cube(lo: f64, hi: f64, d: usize) -> Result<SearchSpace, SevError> {
        SearchSpace::new(vec![lo; d], vec![hi; d])
    }

    pub fn dim(&self) -> usize {
        self.lb.len()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim()
            && x.iter()
                .zip(self.lb.iter().zip(&self.ub))
                .all(|(v, (lo, hi))| *v >= *lo && *v <= *hi)
    }

    fn check(&self) -> Result<(), SevError> {
        if self.lb.is_empty() {
            return Err(SevError::BadSpace("zero-dimensional space".into()));
        }
        if self.lb.len() != self.ub.len() {
            return Err(SevError::BadSpace(format!(
                "lb has {} dims, ub has {}",
                self.lb.len(),
                self.ub.len()
            )));
        }
        for (d, (lo, hi)) in self.lb.iter().zip(&self.ub).enumerate() {
            if !lo.is_finite() || !hi.is_finite() || lo >= hi {
                return Err(SevError::BadSpace(format!(
                    "dimension {d}: invalid interval [{lo}, {hi}]"
                )));
            }
        }
        Ok(())
    }

    fn clamp_into(&self, x: &mut [f64]) {
        for (v, (lo, hi)) in x.iter_mut().zip(self.lb.iter().zip(&self.ub)) {
            *v = v.min(*hi).max(*lo);
        }
    }
}

/// Candidate positions plus their fitness. `fitness` stays empty until the
/// first evaluation sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct Population {
    pub positions: Vec<Vec<f64>>,
    pub fitness: Vec<f64>,
}

/// Everything the move rules need to know about the current iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct IterationState {
    pub t: usize,
    /// Remaining-budget counter; the loop runs while it is >= 0.
    pub i_remaining: i64,
    pub bst_fit: f64,
    pub wst_fit: f64,
    pub bounds: SearchSpace,
    pub x_best: Vec<f64>,
    pub f_best: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SevEbConfig {
    pub pop_size: usize,
    pub max_iters: usize,
    pub seed: u64,
    pub eps: f64,
    /// Initial trust-region radius as a fraction of each dimension's width.
    pub rho0: f64,
    /// Probability an unstable particle takes the alpha branch.
    pub alpha_prob: f64,
    /// Per-coordinate copy probability inside alpha decay.
    pub alpha_frac: f64,
    /// Floor below which the trust region stops shrinking.
    pub min_width: f64,
    /// Feature-count penalty weight in the selection fitness.
    pub lambda: f64,
    pub surrogate_epochs: usize,
}

impl Default for SevEbConfig {
    fn default() -> SevEbConfig {
        SevEbConfig {
            pop_size: 30,
            max_iters: 60,
            seed: 0,
            eps: 1e-12,
            rho0: 1.0,
            alpha_prob: 0.5,
            alpha_frac: 0.3,
            min_width: 1e-9,
            lambda: 0.05,
            surrogate_epochs: 30,
        }
    }
}

impl SevEbConfig {
    pub fn validate(&self) -> Result<(), SevError> {
        if self.pop_size < 4 {
            return Err(SevError::PopulationTooSmall { got: self.pop_size });
        }
        if !(self.eps > 0.0) {
            return Err(SevError::BadConfig(format!("eps must be > 0, got {}", self.eps)));
        }
        if !(self.rho0 > 0.0 && self.rho0 <= 1.0) {
            return Err(SevError::BadConfig(format!(
                "rho0 must lie in (0, 1], got {}",
                self.rho0
            )));
        }
        for (name, v) in [("alpha_prob", self.alpha_prob), ("alpha_frac", self.alpha_frac)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(SevError::BadConfig(format!(
                    "{name} must lie in [0, 1], got {v}"
                )));
            }
        }
        if !(self.min_width > 0.0) {
            return Err(SevError::BadConfig(format!(
                "min_width must be > 0, got {}",
                self.min_width
            )));
        }
        if !(self.lambda >= 0.0) {
            return Err(SevError::BadConfig(format!(
                "lambda must be >= 0, got {}",
                self.lambda
            )));
        }
        Ok(())
    }
}

/// Outcome of one optimizer run.
///
/// `final_positions` is the population after the last sweep (the initial
/// population when max_iters = 0); feature selection derives per-feature
/// frequencies from it. Random search leaves it empty.
#[derive(Debug, Clone, PartialEq)]
pub struct OptResult {
    pub x_best: Vec<f64>,
    pub f_best: f64,
    /// Best-so-far fitness per iteration, length max_iters + 1. Nonincreasing.
    pub history: Vec<f64>,
    pub final_positions: Vec<Vec<f64>>,
    pub evaluations: usize,
}

pub fn init_population(space: &SearchSpace, p: usize, seed: u64) -> Result<Population, SevError> {
    space.check()?;
    if p < 4 {
        return Err(SevError::PopulationTooSmall { got: p });
    }
    let mut r = rng::stream(seed, &[tag::OPT_INIT]);
    let positions = (0..p)
        .map(|_| {
            self::draw_uniform(space, &mut r)
        })
        .collect();
    Ok(Population {
        positions,
        fitness: Vec::new(),
    })
}

fn draw_uniform(space: &SearchSpace, r: &mut impl Rng) -> Vec<f64> {
    space
        .lb
        .iter()
        .zip(&space.ub)
        .map(|(lo, hi)| lo + r.gen::<f64>() * (hi - lo))
        .collect()
}

/// Stability bound per Eq. (1), SB = (bst·cu)/(wst·cu), evaluated on
/// shift-normalized fitness f̃ = f − bst + 1 so that the bound is
/// well-defined for zero or negative raw fitness. cu cancels algebraically,
/// leaving SB = 1/(wst − bst + 1): a converged population pushes SB toward
/// 1 (most particles classified stable), a spread-out one toward 0.
pub fn stability_bound(bst_fit: f64, cu_fit: f64, wst_fit: f64, eps: f64) -> Result<f64, SevError> {
    if !bst_fit.is_finite() || !cu_fit.is_finite() || !wst_fit.is_finite() {
        return Err(SevError::NonFiniteInput);
    }
    if wst_fit == bst_fit {
        return Ok(1.0);
    }
    let cu = cu_fit - bst_fit + 1.0;
    let wst = wst_fit - bst_fit + 1.0;
    // Literal product form; the shifted best is exactly 1.
    Ok((1.0 * cu) / (wst * cu + eps))
}

/// Where particle fitness sits between the iteration's best and worst.
pub fn stability_level(f_i: f64, bst_fit: f64, wst_fit: f64, eps: f64) -> f64 {
    (f_i - bst_fit) / (wst_fit - bst_fit + eps)
}

/// One move sweep. Every particle reads the same pre-move snapshot and its
/// own substream keyed by (seed, t, i), so the result does not depend on
/// the order particles are processed in.
///
/// All three decay/drift moves are convex recombinations, so on their own
/// they can only shrink the population's hull; the sweep therefore redraws
/// the worst particle uniformly within the current bounds (energy
/// injection), keeping diversity proportional to the trust-region width.
/// A fully converged population (wst == bst) skips the injection and is a
/// fixed point.
pub fn update_positions(
    pop: &Population,
    state: &IterationState,
    cfg: &SevEbConfig,
) -> Result<Population, SevError> {
    let p = pop.positions.len();
    if pop.fitness.len() != p {
        return Err(SevError::ShapeMismatch(format!(
            "{p} positions but {} fitness values",
            pop.fitness.len()
        )));
    }
    if p < 2 {
        return Err(SevError::PopulationTooSmall { got: p });
    }
    let dim = pop.positions[0].len();
    let sb = stability_bound(state.bst_fit, state.bst_fit, state.wst_fit, cfg.eps)?;
    let inject = if state.wst_fit > state.bst_fit {
        pop.fitness.iter().position(|&f| f == state.wst_fit)
    } else {
        None
    };
    let mut centroid = vec![0.0; dim];
    for x in &pop.positions {
        for (c, v) in centroid.iter_mut().zip(x) {
            *c += v;
        }
    }
    for c in &mut centroid {
        *c /= p as f64;
    }
    // The injected particle perturbs the centroid by about width/P, which
    // acts as an annealed mutation on every stable particle. Its amplitude
    // carries an extra (1 - t/T) factor so the final iterations settle
    // instead of being kicked at full trust-region width.
    let horizon = state.t + state.i_remaining.max(0) as usize;
    let inject_scale = if horizon == 0 {
        1.0
    } else {
        1.0 - state.t as f64 / horizon as f64
    };

    let positions = (0..p)
        .map(|i| {
            let mut r = rng::stream(cfg.seed, &[tag::OPT_MOVE, state.t as u64, i as u64]);
            let sl = stability_level(pop.fitness[i], state.bst_fit, state.wst_fit, cfg.eps);
            let mut x = pop.positions[i].clone();
            if inject == Some(i) {
                for (d, v) in x.iter_mut().enumerate() {
                    let width = state.bounds.ub[d] - state.bounds.lb[d];
                    let half = (inject_scale * width / 2.0).max(cfg.min_width / 2.0);
                    let lo = (state.x_best[d] - half).max(state.bounds.lb[d]);
                    let hi = (state.x_best[d] + half).min(state.bounds.ub[d]);
                    *v = lo + r.gen::<f64>() * (hi - lo);
                }
            } else if sl > sb {
                if r.gen::<f64>() < cfg.alpha_prob {
                    // Alpha decay: inherit a random subset of best coordinates.
                    for (v, b) in x.iter_mut().zip(&state.x_best) {
                        if r.gen::<f64>() < cfg.alpha_frac {
                            *v = *b;
                        }
                    }
                } else {
                    // Gamma decay: partial move toward a random other particle.
                    let k = r.gen_range(0..p - 1);
                    let j = if k >= i { k + 1 } else { k };
                    let step = r.gen::<f64>();
                    for (v, o) in x.iter_mut().zip(&pop.positions[j]) {
                        *v += step * (*o - *v);
                    }
                }
            } else {
                // Stable drift toward the best/centroid blend. r1 + r2 may
                // exceed 1, allowing extrapolation past the best point.
                let r1 = r.gen::<f64>();
                let r2 = r.gen::<f64>();
                for ((v, b), c) in x.iter_mut().zip(&state.x_best).zip(&centroid) {
                    *v += r1 * (*b - *v) + r2 * (*c - *v);
                }
            }
            state.bounds.clamp_into(&mut x);
            x
        })
        .collect();

    Ok(Population {
        positions,
        fitness: Vec::new(),
    })
}

/// Trust region around x_best with linearly decaying radius
/// rho_t = rho0·(1 − t/T), never wider than the original space and never
/// narrower than min_width (except where the original space clips it).
pub fn shrink_bounds(
    space: &SearchSpace,
    x_best: &[f64],
    t: usize,
    t_max: usize,
    rho0: f64,
    min_width: f64,
) -> SearchSpace {
    let rho = rho0 * (1.0 - t as f64 / t_max.max(1) as f64);
    let mut lb = Vec::with_capacity(space.dim());
    let mut ub = Vec::with_capacity(space.dim());
    for (d, (lo, hi)) in space.lb.iter().zip(&space.ub).enumerate() {
        let radius = rho * (hi - lo);
        let mut l = (x_best[d] - radius).max(*lo);
        let mut u = (x_best[d] + radius).min(*hi);
        if u - l < min_width {
            l = (x_best[d] - min_width / 2.0).max(*lo);
            u = (x_best[d] + min_width / 2.0).min(*hi);
        }
        lb.push(l);
        ub.push(u);
    }
    SearchSpace { lb, ub }
}

fn evaluate<F>(fitness_fn: &F, positions: &[Vec<f64>]) -> Result<Vec<f64>, SevError>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    let fits: Vec<f64> = positions.par_iter().map(|x| fitness_fn(x)).collect();
    for (index, &value) in fits.iter().enumerate() {
        if !value.is_finite() {
            return Err(SevError::NonFiniteFitness { index, value });
        }
    }
    Ok(fits)
}

/// Best and worst fitness in particle-index order, ties to the lowest index.
fn best_worst(fits: &[f64]) -> (usize, f64, f64) {
    let mut best_idx = 0;
    let mut best = fits[0];
    let mut worst = fits[0];
    for (i, &v) in fits.iter().enumerate().skip(1) {
        if v < best {
            best = v;
            best_idx = i;
        }
        if v > worst {
            worst = v;
        }
    }
    (best_idx, best, worst)
}

pub fn optimize<F>(
    fitness_fn: F,
    space: &SearchSpace,
    cfg: &SevEbConfig,
) -> Result<OptResult, SevError>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    cfg.validate()?;
    let t_max = cfg.max_iters;
    let mut pop = init_population(space, cfg.pop_size, cfg.seed)?;
    pop.fitness = evaluate(&fitness_fn, &pop.positions)?;
    let mut evaluations = pop.positions.len();

    let (best_idx, mut bst_fit, mut wst_fit) = best_worst(&pop.fitness);
    let mut x_best = pop.positions[best_idx].clone();
    let mut f_best = bst_fit;
    let mut history = Vec::with_capacity(t_max + 1);
    history.push(f_best);
    let mut bounds = space.clone();

    for t in 1..=t_max {
        let state = IterationState {
            t,
            i_remaining: (t_max - t) as i64,
            bst_fit,
            wst_fit,
            bounds: bounds.clone(),
            x_best: x_best.clone(),
            f_best,
        };
        pop = update_positions(&pop, &state, cfg)?;
        bounds = shrink_bounds(space, &x_best, t, t_max, cfg.rho0, cfg.min_width);
        for x in &mut pop.positions {
            bounds.clamp_into(x);
        }
        pop.fitness = evaluate(&fitness_fn, &pop.positions)?;
        evaluations += pop.positions.len();
        let (best_idx, b, w) = best_worst(&pop.fitness);
        if b < f_best {
            f_best = b;
            x_best = pop.positions[best_idx].clone();
        }
        bst_fit = b;
        wst_fit = w;
        history.push(f_best);
    }

    Ok(OptResult {
        x_best,
        f_best,
        history,
        final_positions: pop.positions,
        evaluations,
    })
}

/// Uniform sampling baseline. History holds the best-so-far after each of
/// the `evals` draws.
pub fn random_search<F>(
    fitness_fn: F,
    space: &SearchSpace,
    evals: usize,
    seed: u64,
) -> Result<OptResult, SevError>
where
    F: Fn(&[f64]) -> f64,
{
    space.check()?;
    if evals == 0 {
        return Err(SevError::BadConfig("evals must be positive".into()));
    }
    let mut r = rng::stream(seed, &[tag::RAND]);
    let mut x_best = Vec::new();
    let mut f_best = f64::INFINITY;
    let mut history = Vec::with_capacity(evals);
    for index in 0..evals {
        let x = draw_uniform(space, &mut r);
        let value = fitness_fn(&x);
        if !value.is_finite() {
            return Err(SevError::NonFiniteFitness { index, value });
        }
        if value < f_best {
            f_best = value;
            x_best = x;
        }
        history.push(f_best);
    }
    Ok(OptResult {
        x_best,
        f_best,
        history,
        final_positions: Vec::new(),
        evaluations: evals,
    })
}

/// Continuous-to-binary encoding for selection over [−1, 1]^D: a feature is
/// selected iff its coordinate is strictly positive.
pub fn binarize(x: &[f64]) -> FeatureMask {
    FeatureMask {
        selected: x.iter().map(|&v| v > 0.0).collect(),
    }
}

const SURROGATE_LR: f64 = 0.5;
const SURROGATE_CLIP: f64 = 1e-7;

/// Wrapper fitness for feature selection: one minus the validation F1 of a
/// linear surrogate (dense layer + sigmoid per label, full-batch gradient
/// descent) on the masked columns, plus lambda·|mask|/D. Lower is better.
/// The empty mask scores a sentinel 2.0, worse than any trainable mask.
pub fn fs_fitness(
    mask: &FeatureMask,
    train: &RecordTable,
    val: &RecordTable,
    lambda: f64,
    surrogate_epochs: usize,
    seed: u64,
) -> Result<f64, SevError> {
    if mask.len() != train.n_features() || mask.len() != val.n_features() {
        return Err(SevError::ShapeMismatch(format!(
            "mask width {} vs train {} / val {} features",
            mask.len(),
            train.n_features(),
            val.n_features()
        )));
    }
    let card = mask.cardinality();
    if card == 0 {
        return Ok(2.0);
    }
    let mt = apply_mask(train, mask)?;
    let mv = apply_mask(val, mask)?;
    let n = mt.n_rows();
    let k = mt.n_labels();
    if n == 0 || k == 0 {
        return Err(SevError::ShapeMismatch(
            "surrogate needs at least one row and one label".into(),
        ));
    }

    let d = mt.n_features();
    let mut r = rng::stream(seed, &[tag::SURROGATE]);
    let mut w = vec![vec![0.0; d]; k];
    let mut b = vec![0.0; k];
    for row in &mut w {
        for v in row.iter_mut() {
            *v = r.gen::<f64>() * 0.2 - 0.1;
        }
    }
    for v in &mut b {
        *v = r.gen::<f64>() * 0.2 - 0.1;
    }

    let scale = SURROGATE_LR / (n * k) as f64;
    for _ in 0..surrogate_epochs {
        let mut gw = vec![vec![0.0; d]; k];
        let mut gb = vec![0.0; k];
        for (x, y) in mt.features.iter().zip(&mt.labels) {
            for h in 0..k {
                let z: f64 = w[h].iter().zip(x).map(|(wi, xi)| wi * xi).sum::<f64>() + b[h];
                let p = network::sigmoid(z);
                let g = network::bce_dprob(p, y[h], SURROGATE_CLIP) * p * (1.0 - p);
                for (gj, xj) in gw[h].iter_mut().zip(x) {
                    *gj += g * xj;
                }
                gb[h] += g;
            }
        }
        for h in 0..k {
            for (wj, gj) in w[h].iter_mut().zip(&gw[h]) {
                *wj -= scale * gj;
            }
            b[h] -= scale * gb[h];
        }
    }

    let mut f1_sum = 0.0;
    for h in 0..k {
        let scores: Vec<f64> = mv
            .features
            .iter()
            .map(|x| {
                let z: f64 = w[h].iter().zip(x).map(|(wi, xi)| wi * xi).sum::<f64>() + b[h];
                network::sigmoid(z)
            })
            .collect();
        let labels: Vec<u8> = mv.labels.iter().map(|row| row[h]).collect();
        let counts = metrics::confusion(&scores, &labels, 0.5)?;
        f1_sum += metrics::classification_scores(&counts).f1;
    }
    let f1 = f1_sum / k as f64;
    Ok((1.0 - f1) + lambda * card as f64 / mask.len() as f64)
}

pub fn bench_fn(name: &str, x: &[f64]) -> Result<f64, SevError> {
    match name {
        "sphere" => Ok(x.iter().map(|v| v * v).sum()),
        "rastrigin" => Ok(10.0 * x.len() as f64
            + x.iter()
                .map(|v| v * v - 10.0 * (2.0 * PI * v).cos())
                .sum::<f64>()),
        "rosenbrock" => Ok(x
            .windows(2)
            .map(|w| 100.0 * (w[1] - w[0] * w[0]).powi(2) + (1.0 - w[0]).powi(2))
            .sum()),
        other => Err(SevError::UnknownFunction(other.into())),
    }
}

/// Canonical domain for each benchmark function.
pub fn bench_space(name: &str, d: usize) -> Result<SearchSpace, SevError> {
    match name {
        "sphere" | "rastrigin" => SearchSpace::cube(-5.12, 5.12, d),
        "rosenbrock" => SearchSpace::cube(-5.0, 10.0, d),
        other => Err(SevError::UnknownFunction(other.into())),
    }
}
