//! Genetic search over learner hyperparameters and window-feature slots.
//!
//! A [`Genome`] is a flat vector of reals. The first ten genes are the
//! learner hyperparameters; each of the six feature slots that follow holds
//! `(series index, w0, wl, function code index)`. Categorical and integer
//! genes always carry integral values.

use crate::booster::{self, ranges, BoostedModel, BoosterError, BoostingType, HyperParams};
use crate::featwin::{
    build_matrix, FeatureError, FeatureFn, FeatureMatrix, FeatureSpec, MAX_ENABLED_FEATURES, MAX_OFFSET,
    MAX_WINDOW,
};
use crate::ingest::{AlignedDataset, SplitIndices};
use crate::metrics::{compute_metrics, MetricSet, MetricsError};
use crate::rng::{derive_seed, rng_from};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::ops::Range;
use thiserror::Error;

pub const HP_GENES: usize = 10;
pub const SLOT_GENES: usize = 4;
pub const N_SLOTS: usize = MAX_ENABLED_FEATURES;
/// Mutation jitter as a fraction of a numeric gene's range.
pub const MUTATION_SIGMA: f64 = 0.1;

#[derive(Debug, Error, PartialEq)]
pub enum GaError {
    #[error("invalid GA configuration: {0}")]
    InvalidConfig(String),
    #[error("gene {index} = {value} is outside its range")]
    OutOfRangeGene { index: usize, value: f64 },
    #[error("genome has {got} genes, expected {expected}")]
    WrongLength { expected: usize, got: usize },
    #[error("feature pool is empty")]
    EmptyPool,
    #[error("series `{0}` is not in the feature pool")]
    NotInPool(String),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GeneKind {
    Categorical(usize),
    Integer(i64, i64),
    Real(f64, f64),
}

impl GeneKind {
    fn contains(self, v: f64) -> bool {
        match self {
            GeneKind::Categorical(k) => v.fract() == 0.0 && v >= 0.0 && v < k as f64,
            GeneKind::Integer(lo, hi) => v.fract() == 0.0 && v >= lo as f64 && v <= hi as f64,
            GeneKind::Real(lo, hi) => v >= lo && v <= hi,
        }
    }

    fn clamp(self, v: f64) -> f64 {
        let v = if v.is_nan() { 0.0 } else { v };
        match self {
            GeneKind::Categorical(k) => v.round().clamp(0.0, (k - 1) as f64),
            GeneKind::Integer(lo, hi) => v.round().clamp(lo as f64, hi as f64),
            GeneKind::Real(lo, hi) => v.clamp(lo, hi),
        }
    }

    fn sample(self, rng: &mut impl Rng) -> f64 {
        match self {
            GeneKind::Categorical(k) => rng.random_range(0..k) as f64,
            GeneKind::Integer(lo, hi) => rng.random_range(lo..=hi) as f64,
            GeneKind::Real(lo, hi) => rng.random_range(lo..=hi),
        }
    }

    fn mutate(self, v: f64, rng: &mut impl Rng) -> f64 {
        let jitter = |lo: f64, hi: f64, rng: &mut dyn rand::RngCore| {
            let sd = MUTATION_SIGMA * (hi - lo);
            v + Normal::new(0.0, sd).expect("positive sigma").sample(rng)
        };
        match self {
            GeneKind::Categorical(_) => self.sample(rng),
            GeneKind::Integer(lo, hi) => self.clamp(jitter(lo as f64, hi as f64, rng)),
            GeneKind::Real(lo, hi) => self.clamp(jitter(lo, hi, rng)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Genome {
    pub genes: Vec<f64>,
}

/// A genome's meaning: learner settings plus all six slots, disabled ones
/// included (with `fc` = [`FeatureFn::Empty`]).
#[derive(Debug, Clone, PartialEq)]
pub struct Decoded {
    pub params: HyperParams,
    pub slots: Vec<FeatureSpec>,
}

impl Decoded {
    pub fn enabled(&self) -> Vec<FeatureSpec> {
        self.slots.iter().filter(|s| s.fc.is_enabled()).cloned().collect()
    }
}

/// Gene layout for a given feature pool.
#[derive(Debug, Clone, PartialEq)]
pub struct SearchSpace {
    kinds: Vec<GeneKind>,
    pool: Vec<String>,
}

impl SearchSpace {
    pub fn new(pool: Vec<String>) -> Result<Self, GaError> {
        if pool.is_empty() {
            return Err(GaError::EmptyPool);
        }
        let f = |(lo, hi): (f64, f64)| GeneKind::Real(lo, hi);
        let i = |(lo, hi): (usize, usize)| GeneKind::Integer(lo as i64, hi as i64);
        let mut kinds = vec![
            GeneKind::Categorical(BoostingType::ALL.len()),
            i(ranges::NUM_LEAVES),
            GeneKind::Categorical(ranges::MAX_DEPTH.len()),
            f(ranges::LEARNING_RATE),
            i(ranges::N_ESTIMATORS),
            f(ranges::SUBSAMPLE),
            f(ranges::COLSAMPLE_BYTREE),
            i(ranges::MIN_CHILD_SAMPLES),
            f(ranges::REG_ALPHA),
            f(ranges::REG_LAMBDA),
        ];
        for _ in 0..N_SLOTS {
            kinds.push(GeneKind::Categorical(pool.len()));
            kinds.push(GeneKind::Integer(0, MAX_OFFSET as i64));
            kinds.push(GeneKind::Integer(1, MAX_WINDOW as i64));
            kinds.push(GeneKind::Categorical(FeatureFn::ALL.len()));
        }
        Ok(Self { kinds, pool })
    }

    /// Like [`SearchSpace::new`], with the `min_child_samples` upper bound
    /// lowered to `fit_rows / 2` (but not below its lower bound) so every
    /// genome can be trained on `fit_rows` rows.
    pub fn for_rows(pool: Vec<String>, fit_rows: usize) -> Result<Self, GaError> {
        let mut space = Self::new(pool)?;
        let (lo, hi) = ranges::MIN_CHILD_SAMPLES;
        let cap = (fit_rows / 2).clamp(lo, hi);
        space.kinds[7] = GeneKind::Integer(lo as i64, cap as i64);
        Ok(space)
    }

    pub fn len(&self) -> usize {
        self.kinds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.kinds.is_empty()
    }

    pub fn kinds(&self) -> &[GeneKind] {
        &self.kinds
    }

    pub fn pool(&self) -> &[String] {
        &self.pool
    }

    pub fn random_genome(&self, rng: &mut impl Rng) -> Genome {
        Genome {
            genes: self.kinds.iter().map(|k| k.sample(rng)).collect(),
        }
    }

    pub fn in_range(&self, g: &Genome) -> bool {
        g.genes.len() == self.kinds.len() && self.kinds.iter().zip(&g.genes).all(|(k, &v)| k.contains(v))
    }

    fn check(&self, g: &Genome) -> Result<(), GaError> {
        if g.genes.len() != self.kinds.len() {
            return Err(GaError::WrongLength {
                expected: self.kinds.len(),
                got: g.genes.len(),
            });
        }
        match self.kinds.iter().zip(&g.genes).position(|(k, &v)| !k.contains(v)) {
            Some(index) => Err(GaError::OutOfRangeGene {
                index,
                value: g.genes[index],
            }),
            None => Ok(()),
        }
    }

    fn slot_fc(g: &Genome, slot: usize) -> FeatureFn {
        FeatureFn::ALL[g.genes[HP_GENES + slot * SLOT_GENES + 3] as usize]
    }

    /// Clamps every gene into range, disables slots that repeat an earlier
    /// enabled slot's `(series, function)`, and enables slot 0 as
    /// `(pool[0], 0, 7, mean)` when nothing is enabled. Returns whether the
    /// genome changed.
    pub fn repair(&self, g: &mut Genome) -> bool {
        let before = g.clone();
        g.genes.resize(self.kinds.len(), 0.0);
        for (k, v) in self.kinds.iter().zip(g.genes.iter_mut()) {
            *v = k.clamp(*v);
        }
        let mut seen: Vec<(usize, FeatureFn)> = Vec::new();
        for slot in 0..N_SLOTS {
            let base = HP_GENES + slot * SLOT_GENES;
            let fc = Self::slot_fc(g, slot);
            if !fc.is_enabled() {
                continue;
            }
            let key = (g.genes[base] as usize, fc);
            if seen.contains(&key) {
                g.genes[base + 3] = 0.0;
            } else {
                seen.push(key);
            }
        }
        if seen.is_empty() {
            let mean = FeatureFn::ALL.iter().position(|&f| f == FeatureFn::Mean).unwrap();
            g.genes[HP_GENES..HP_GENES + SLOT_GENES].copy_from_slice(&[0.0, 0.0, 7.0, mean as f64]);
        }
        *g != before
    }

    pub fn decode(&self, g: &Genome) -> Result<Decoded, GaError> {
        self.check(g)?;
        let v = &g.genes;
        let params = HyperParams {
            boosting_type: BoostingType::ALL[v[0] as usize],
            num_leaves: v[1] as usize,
            max_depth: ranges::MAX_DEPTH[v[2] as usize],
            learning_rate: v[3],
            n_estimators: v[4] as usize,
            subsample: v[5],
            colsample_bytree: v[6],
            min_child_samples: v[7] as usize,
            reg_alpha: v[8],
            reg_lambda: v[9],
        };
        let slots = (0..N_SLOTS)
            .map(|s| {
                let b = HP_GENES + s * SLOT_GENES;
                FeatureSpec {
                    series: self.pool[v[b] as usize].clone(),
                    w0: v[b + 1] as usize,
                    wl: v[b + 2] as usize,
                    fc: FeatureFn::ALL[v[b + 3] as usize],
                }
            })
            .collect();
        Ok(Decoded { params, slots })
    }

    /// Inverse of [`SearchSpace::decode`].
    pub fn encode(&self, d: &Decoded) -> Result<Genome, GaError> {
        let p = &d.params;
        let bt = BoostingType::ALL
            .iter()
            .position(|&b| b == p.boosting_type)
            .unwrap();
        let depth =
            ranges::MAX_DEPTH
                .iter()
                .position(|&m| m == p.max_depth)
                .ok_or(GaError::OutOfRangeGene {
                    index: 2,
                    value: p.max_depth as f64,
                })?;
        let mut genes = vec![
            bt as f64,
            p.num_leaves as f64,
            depth as f64,
            p.learning_rate,
            p.n_estimators as f64,
            p.subsample,
            p.colsample_bytree,
            p.min_child_samples as f64,
            p.reg_alpha,
            p.reg_lambda,
        ];
        if d.slots.len() != N_SLOTS {
            return Err(GaError::WrongLength {
                expected: N_SLOTS,
                got: d.slots.len(),
            });
        }
        for s in &d.slots {
            let series = self
                .pool
                .iter()
                .position(|n| *n == s.series)
                .ok_or_else(|| GaError::NotInPool(s.series.clone()))?;
            let fc = FeatureFn::ALL.iter().position(|&f| f == s.fc).unwrap();
            genes.extend([series as f64, s.w0 as f64, s.wl as f64, fc as f64]);
        }
        let g = Genome { genes };
        self.check(&g)?;
        Ok(g)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Crossover {
    #[default]
    Uniform,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GaConfig {
    /// Generations including the initial population.
    pub generations: usize,
    pub population: usize,
    pub parents_kept: usize,
    pub crossover: Crossover,
    pub mutation_rate: f64,
    pub seed: u64,
    pub fitness_floor: f64,
}

impl Default for GaConfig {
    fn default() -> Self {
        Self {
            generations: 150,
            population: 24,
            parents_kept: 8,
            crossover: Crossover::Uniform,
            mutation_rate: 0.08,
            seed: 0,
            fitness_floor: -1.0,
        }
    }
}

impl GaConfig {
    pub fn validate(&self) -> Result<(), GaError> {
        let bad = |m: String| Err(GaError::InvalidConfig(m));
        if self.generations == 0 {
            return bad("generations must be at least 1".into());
        }
        if self.population < 4 {
            return bad(format!("population {} < 4", self.population));
        }
        if self.parents_kept == 0 || self.parents_kept >= self.population {
            return bad(format!(
                "parents_kept {} must be in 1..{}",
                self.parents_kept, self.population
            ));
        }
        if !(self.mutation_rate > 0.0 && self.mutation_rate < 1.0) {
            return bad(format!("mutation_rate {} outside (0, 1)", self.mutation_rate));
        }
        if !self.fitness_floor.is_finite() {
            return bad("fitness_floor must be finite".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Individual {
    pub genome: Genome,
    pub fitness: f64,
    /// Seed the fitness was evaluated with.
    pub eval_seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evolution {
    pub best: Individual,
    pub fitness_history: Vec<f64>,
    pub evaluations: usize,
}

/// Seed for the evaluation of population member `index` in `generation`.
pub fn evaluation_seed(run_seed: u64, generation: usize, index: usize) -> u64 {
    derive_seed(run_seed, &[0xE7A1, generation as u64, index as u64])
}

fn uniform_crossover(a: &Genome, b: &Genome, rng: &mut ChaCha8Rng) -> Genome {
    Genome {
        genes: a
            .genes
            .iter()
            .zip(&b.genes)
            .map(|(&x, &y)| if rng.random::<bool>() { x } else { y })
            .collect(),
    }
}

/// Generational GA with elitism. Each generation keeps the `parents_kept`
/// fittest individuals (ties resolved by population order) and refills the
/// population with mutated uniform-crossover children of random parent
/// pairs. Kept parents are not re-evaluated.
pub fn evolve<F>(space: &SearchSpace, cfg: &GaConfig, fitness: F) -> Result<Evolution, GaError>
where
    F: Fn(&Genome, u64) -> f64 + Sync,
{
    cfg.validate()?;
    let score = |g: &Genome, seed: u64| {
        let f = fitness(g, seed);
        if f.is_finite() {
            f
        } else {
            cfg.fitness_floor
        }
    };
    let evaluate = |genomes: Vec<Genome>, generation: usize, offset: usize| -> Vec<Individual> {
        genomes
            .into_par_iter()
            .enumerate()
            .map(|(i, genome)| {
                let eval_seed = evaluation_seed(cfg.seed, generation, offset + i);
                let fitness = score(&genome, eval_seed);
                Individual {
                    genome,
                    fitness,
                    eval_seed,
                }
            })
            .collect()
    };

    let mut rng = rng_from(cfg.seed, &[0x1417]);
    let initial: Vec<Genome> = (0..cfg.population)
        .map(|_| {
            let mut g = space.random_genome(&mut rng);
            space.repair(&mut g);
            g
        })
        .collect();
    let mut population = evaluate(initial, 0, 0);
    let mut evaluations = population.len();
    let mut history = Vec::with_capacity(cfg.generations);

    let rank = |pop: &mut Vec<Individual>| {
        // Stable: equal fitness keeps the earlier member first.
        pop.sort_by(|a, b| b.fitness.total_cmp(&a.fitness));
    };
    rank(&mut population);
    history.push(population[0].fitness);

    for generation in 1..cfg.generations {
        population.truncate(cfg.parents_kept);
        let mut rng = rng_from(cfg.seed, &[0xB4EED, generation as u64]);
        let children: Vec<Genome> = (0..cfg.population - cfg.parents_kept)
            .map(|_| {
                let i = rng.random_range(0..population.len());
                let mut j = rng.random_range(0..population.len() - 1);
                if j >= i {
                    j += 1;
                }
                let mut child = match cfg.crossover {
                    Crossover::Uniform => {
                        uniform_crossover(&population[i].genome, &population[j].genome, &mut rng)
                    }
                };
                for (k, v) in space.kinds().iter().zip(child.genes.iter_mut()) {
                    if rng.random::<f64>() < cfg.mutation_rate {
                        *v = k.mutate(*v, &mut rng);
                    }
                }
                space.repair(&mut child);
                child
            })
            .collect();
        evaluations += children.len();
        population.extend(evaluate(children, generation, cfg.parents_kept));
        rank(&mut population);
        history.push(population[0].fitness);
    }

    Ok(Evolution {
        best: population.swap_remove(0),
        fitness_history: history,
        evaluations,
    })
}

#[derive(Debug, Error)]
pub enum EvalError {
    #[error(transparent)]
    Genome(#[from] GaError),
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error(transparent)]
    Booster(#[from] BoosterError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error("holdout of {holdout} rows leaves no training rows")]
    Holdout { holdout: usize },
}

/// What a fitness evaluation trains and scores on.
#[derive(Debug, Clone, Copy)]
pub struct EvalContext<'a> {
    pub dataset: &'a AlignedDataset,
    pub split: SplitIndices,
    pub lookback: usize,
    pub fitness_floor: f64,
    /// When set, fitness is R² on the last `holdout` training rows, with the
    /// model fit on the training rows before them.
    pub holdout: Option<usize>,
}

impl EvalContext<'_> {
    fn fitness_ranges(&self) -> Result<(Range<usize>, Range<usize>), EvalError> {
        match self.holdout {
            Some(h) if h > 0 => {
                let cut = self
                    .split
                    .train_end
                    .checked_sub(h)
                    .filter(|&c| c > self.lookback)
                    .ok_or(EvalError::Holdout { holdout: h })?;
                Ok((0..cut, cut..self.split.train_end))
            }
            _ => Ok((self.split.train(), self.split.test())),
        }
    }
}

/// A trained and scored genome.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub decoded: Decoded,
    pub matrix: FeatureMatrix,
    pub model: BoostedModel,
    /// Matrix rows the model was fit on.
    pub fit_rows: Range<usize>,
    /// Matrix rows the metrics were computed on.
    pub score_rows: Range<usize>,
    pub predictions: Vec<f64>,
    pub actual: Vec<f64>,
    pub metrics: MetricSet,
}

impl Evaluation {
    pub fn score_matrix(&self) -> crate::matrix::DenseMatrix {
        self.matrix.matrix.select_rows(self.score_rows.clone())
    }
}

fn train_and_score(
    space: &SearchSpace,
    g: &Genome,
    ctx: &EvalContext<'_>,
    fit_on: Range<usize>,
    score_on: Range<usize>,
    seed: u64,
) -> Result<Evaluation, EvalError> {
    let decoded = space.decode(g)?;
    let matrix = build_matrix(ctx.dataset, &decoded.slots, ctx.lookback)?;
    let fit_rows = matrix.rows_for(fit_on);
    let score_rows = matrix.rows_for(score_on);
    let target = &ctx.dataset.target()[matrix.first_row..];
    let x_fit = matrix.matrix.select_rows(fit_rows.clone());
    let model = booster::fit(&x_fit, &target[fit_rows.clone()], &decoded.params, seed)?;
    let x_score = matrix.matrix.select_rows(score_rows.clone());
    let predictions = model.predict(&x_score)?;
    let actual = target[score_rows.clone()].to_vec();
    let metrics = compute_metrics(&actual, &predictions)?;
    Ok(Evaluation {
        decoded,
        matrix,
        model,
        fit_rows,
        score_rows,
        predictions,
        actual,
        metrics,
    })
}

/// Trains on the fitness training rows and scores on the fitness rows
/// (the test rows unless a holdout is configured).
pub fn evaluate_detailed(
    space: &SearchSpace,
    g: &Genome,
    ctx: &EvalContext<'_>,
    seed: u64,
) -> Result<Evaluation, EvalError> {
    let (fit_on, score_on) = ctx.fitness_ranges()?;
    train_and_score(space, g, ctx, fit_on, score_on, seed)
}

/// Trains on all training rows and scores on the test rows.
pub fn evaluate_on_test(
    space: &SearchSpace,
    g: &Genome,
    ctx: &EvalContext<'_>,
    seed: u64,
) -> Result<Evaluation, EvalError> {
    train_and_score(space, g, ctx, ctx.split.train(), ctx.split.test(), seed)
}

/// Fitness of a genome: R² on the fitness rows, or the floor when the
/// evaluation cannot be carried out.
pub fn evaluate(space: &SearchSpace, g: &Genome, ctx: &EvalContext<'_>, seed: u64) -> f64 {
    match evaluate_detailed(space, g, ctx, seed) {
        Ok(e) if e.metrics.r2.is_finite() => e.metrics.r2,
        Ok(_) => ctx.fitness_floor,
        Err(e) => {
            log::debug!("degenerate evaluation: {e}");
            ctx.fitness_floor
        }
    }
}

/// Human-readable form of an enabled feature.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecodedFeature {
    pub spec: String,
    pub name: String,
    pub columns: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecodedGenome {
    pub params: HyperParams,
    pub features: Vec<DecodedFeature>,
}

impl From<&Decoded> for DecodedGenome {
    fn from(d: &Decoded) -> Self {
        Self {
            params: d.params,
            features: d
                .enabled()
                .iter()
                .map(|s| DecodedFeature {
                    spec: s.compact(),
                    name: s.feature_name(),
                    columns: s.column_names(),
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimResult {
    pub best_genome: Genome,
    pub decoded: DecodedGenome,
    pub best_fitness: f64,
    /// Test-set metrics of the champion, absent when it cannot be trained.
    pub best_metrics: Option<MetricSet>,
    pub best_eval_seed: u64,
    pub fitness_history: Vec<f64>,
    pub evaluations: usize,
}

pub struct GaRun {
    pub result: OptimResult,
    /// The champion retrained with its evaluation seed and scored on the test rows.
    pub champion: Option<Evaluation>,
}

/// Runs the genetic search for one feature pool.
pub fn run_ga(ctx: &EvalContext<'_>, cfg: &GaConfig, pool: &[String]) -> Result<GaRun, GaError> {
    let fit_rows = ctx
        .fitness_ranges()
        .map(|(fit, _)| fit.end.saturating_sub(ctx.lookback))
        .unwrap_or(0);
    let space = SearchSpace::for_rows(pool.to_vec(), fit_rows)?;
    let evo = evolve(&space, cfg, |g, seed| {
        assert!(space.in_range(g), "evaluated genome out of range");
        let decoded = space.decode(g).expect("in-range genome decodes");
        assert!(decoded.enabled().len() <= MAX_ENABLED_FEATURES);
        evaluate(&space, g, ctx, seed)
    })?;
    let decoded = space.decode(&evo.best.genome)?;
    let champion = match evaluate_on_test(&space, &evo.best.genome, ctx, evo.best.eval_seed) {
        Ok(e) => Some(e),
        Err(e) => {
            log::warn!("champion could not be evaluated on the test rows: {e}");
            None
        }
    };
    Ok(GaRun {
        result: OptimResult {
            decoded: DecodedGenome::from(&decoded),
            best_genome: evo.best.genome,
            best_fitness: evo.best.fitness,
            best_metrics: champion.as_ref().map(|c| c.metrics),
            best_eval_seed: evo.best.eval_seed,
            fitness_history: evo.fitness_history,
            evaluations: evo.evaluations,
        },
        champion,
    })
}
