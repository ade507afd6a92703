//! Genetic-algorithm feature-subset selection.
//!
//! Fitness is the pooled cross-validated accuracy of a random committee on
//! the selected columns. Each generation keeps the fitter half, lets each of
//! the remaining individuals survive with a fixed probability, and refills
//! the population with mutated crossover children of the two fittest.

use std::collections::HashMap;

use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::committee::{cv_confusion, CommitteeConfig, Dataset};
use crate::error::{Error, Result};
use crate::rng::{self, Rng};

pub const MAX_GENERATIONS: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
#[serde(deny_unknown_fields)]
pub struct GaConfig {
    pub population_size: usize,
    pub max_generations: usize,
    /// Probability that a child gets one bit flipped.
    pub mutation_rate: f64,
    pub elite_fraction: f64,
    /// Survival probability of each individual outside the elite.
    pub underdog_survival: f64,
    /// Stop once the best fitness improves by less than this fraction.
    pub plateau_threshold: f64,
    pub cv_folds: usize,
    pub rng_seed: u64,
    #[serde(default)]
    pub committee: CommitteeConfig,
}

impl Default for GaConfig {
    fn default() -> Self {
        Self {
            population_size: 50,
            max_generations: MAX_GENERATIONS,
            mutation_rate: 0.2,
            elite_fraction: 0.5,
            underdog_survival: 0.2,
            plateau_threshold: 0.10,
            cv_folds: 10,
            rng_seed: 0,
            committee: CommitteeConfig::default(),
        }
    }
}

impl GaConfig {
    pub fn with_seed(seed: u64) -> Self {
        Self {
            rng_seed: seed,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let rates = [
            ("mutation_rate", self.mutation_rate),
            ("elite_fraction", self.elite_fraction),
            ("underdog_survival", self.underdog_survival),
            ("plateau_threshold", self.plateau_threshold),
        ];
        for (name, v) in rates {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::Config(format!("{name} = {v} is outside [0, 1]")));
            }
        }
        if self.population_size < 4 || self.population_size % 2 != 0 {
            return Err(Error::Config(format!(
                "population_size must be an even number >= 4, got {}",
                self.population_size
            )));
        }
        if !(1..=MAX_GENERATIONS).contains(&self.max_generations) {
            return Err(Error::Config(format!(
                "max_generations must be in 1..={MAX_GENERATIONS}, got {}",
                self.max_generations
            )));
        }
        if self.cv_folds < 2 {
            return Err(Error::Config("cv_folds must be at least 2".into()));
        }
        Ok(())
    }
}

/// Non-empty feature mask.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Chromosome {
    mask: Vec<bool>,
}

impl Chromosome {
    pub fn new(mask: Vec<bool>) -> Result<Self> {
        if !mask.iter().any(|&b| b) {
            return Err(Error::arg("mask", "a feature mask must select at least one feature"));
        }
        Ok(Self { mask })
    }

    pub fn from_features(n_features: usize, features: &[usize]) -> Result<Self> {
        let mut mask = vec![false; n_features];
        for &f in features {
            *mask
                .get_mut(f)
                .ok_or_else(|| Error::arg("features", format!("feature {f} out of range for {n_features}")))? = true;
        }
        Self::new(mask)
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn len(&self) -> usize {
        self.mask.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mask.is_empty()
    }

    pub fn count(&self) -> usize {
        self.mask.iter().filter(|&&b| b).count()
    }

    pub fn features(&self) -> Vec<usize> {
        self.mask.iter().enumerate().filter(|(_, &b)| b).map(|(i, _)| i).collect()
    }
}

/// Every bit set with probability 1/2; empty masks are redrawn.
pub fn init_population(config: &GaConfig, n_features: usize, rng: &mut Rng) -> Result<Vec<Chromosome>> {
    if n_features == 0 {
        return Err(Error::arg("n_features", "need at least one feature"));
    }
    Ok((0..config.population_size)
        .map(|_| loop {
            let mask: Vec<bool> = (0..n_features).map(|_| rng.gen_bool(0.5)).collect();
            if let Ok(c) = Chromosome::new(mask) {
                break c;
            }
        })
        .collect())
}

/// Single-point crossover `a[..k] ++ b[k..]`, `k` uniform in `1..L`.
/// Split points that would give an empty child are redrawn; if every split
/// point does, the child is a copy of `a`.
pub fn crossover(a: &Chromosome, b: &Chromosome, rng: &mut Rng) -> Result<Chromosome> {
    let len = a.len();
    if b.len() != len {
        return Err(Error::arg("parent_b", format!("length {} differs from {len}", b.len())));
    }
    if len < 2 {
        return Ok(a.clone());
    }
    // ones in a[..k] plus ones in b[k..], for every k
    let valid: Vec<usize> = {
        let mut ones_a = 0;
        let mut ones_b: usize = b.mask.iter().filter(|&&x| x).count();
        let mut out = Vec::new();
        for k in 1..len {
            ones_a += a.mask[k - 1] as usize;
            ones_b -= b.mask[k - 1] as usize;
            if ones_a + ones_b > 0 {
                out.push(k);
            }
        }
        out
    };
    if valid.is_empty() {
        return Ok(a.clone());
    }
    let k = loop {
        let k = rng.gen_range(1..len);
        if valid.binary_search(&k).is_ok() {
            break k;
        }
    };
    let mut mask = a.mask[..k].to_vec();
    mask.extend_from_slice(&b.mask[k..]);
    Chromosome::new(mask)
}

/// With probability `rate`, flips exactly one uniformly chosen bit. A flip
/// that would empty the mask is redrawn.
pub fn mutate(child: &Chromosome, rate: f64, rng: &mut Rng) -> Chromosome {
    let mut out = child.clone();
    if !rng.gen_bool(rate.clamp(0.0, 1.0)) {
        return out;
    }
    let only = if child.count() == 1 { child.features().first().copied() } else { None };
    if only.is_some() && child.len() == 1 {
        return out;
    }
    loop {
        let bit = rng.gen_range(0..child.len());
        if Some(bit) != only {
            out.mask[bit] = !out.mask[bit];
            return out;
        }
    }
}

/// Seed of the cross-validation used for every fitness evaluation, so a
/// mask's fitness does not depend on when it is evaluated.
fn cv_seed(config: &GaConfig) -> u64 {
    rng::derive_seed(config.rng_seed, "ga-fitness", &[])
}

/// Cross-validated committee accuracy on the masked columns.
pub fn fitness(mask: &Chromosome, data: &Dataset, config: &GaConfig) -> Result<f64> {
    if mask.len() != data.n_cols() {
        return Err(Error::arg(
            "mask",
            format!("mask covers {} features, table has {}", mask.len(), data.n_cols()),
        ));
    }
    let sub = data.select_columns(&mask.features())?;
    let m = cv_confusion(&sub, &config.committee, config.cv_folds, cv_seed(config))?;
    let total: u64 = m.iter().flatten().sum();
    let correct: u64 = (0..m.len()).map(|i| m[i][i]).sum();
    Ok(correct as f64 / total as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GenerationStats {
    pub generation: usize,
    pub best: f64,
    pub mean: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Plateau,
    MaxGenerations,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionResult {
    /// Selected feature ids, ascending.
    pub best_mask: Vec<usize>,
    pub best_fitness: f64,
    pub history: Vec<GenerationStats>,
    /// Generations evaluated, the initial population included.
    pub generations_run: usize,
    pub stop_reason: StopReason,
    pub n_features: usize,
    pub fitness_evaluations: usize,
    pub config: GaConfig,
}

struct Scored {
    chrom: Chromosome,
    fitness: f64,
}

fn score(
    pop: Vec<Chromosome>,
    data: &Dataset,
    config: &GaConfig,
    cache: &mut HashMap<Chromosome, f64>,
) -> Result<Vec<Scored>> {
    let mut todo: Vec<&Chromosome> = Vec::new();
    for c in &pop {
        if !cache.contains_key(c) && !todo.contains(&c) {
            todo.push(c);
        }
    }
    let fresh = todo
        .par_iter()
        .map(|c| fitness(c, data, config))
        .collect::<Result<Vec<_>>>()?;
    for (c, f) in todo.into_iter().zip(fresh) {
        cache.insert(c.clone(), f);
    }
    Ok(pop
        .into_iter()
        .map(|chrom| {
            let fitness = cache[&chrom];
            Scored { chrom, fitness }
        })
        .collect())
}

fn stats(generation: usize, pop: &[Scored]) -> GenerationStats {
    GenerationStats {
        generation,
        best: pop.iter().map(|s| s.fitness).fold(f64::NEG_INFINITY, f64::max),
        mean: pop.iter().map(|s| s.fitness).sum::<f64>() / pop.len() as f64,
    }
}

pub fn evolve(data: &Dataset, config: &GaConfig) -> Result<SelectionResult> {
    config.validate()?;
    let counts = data.class_counts();
    if let Some(c) = counts.iter().position(|&n| n < config.cv_folds) {
        return Err(Error::Stratification(format!(
            "class {} has {} rows, fewer than {} folds",
            crate::signal::PhaseLabel::ALL[c],
            counts[c],
            config.cv_folds
        )));
    }
    let seed = config.rng_seed;
    let mut cache = HashMap::new();
    let init = init_population(config, data.n_cols(), &mut rng::stream(seed, "ga-init", &[]))?;
    let mut pop = score(init, data, config, &mut cache)?;
    let mut history = vec![stats(0, &pop)];
    let mut stop_reason = StopReason::MaxGenerations;
    let n_elite = (config.elite_fraction * config.population_size as f64).ceil() as usize;

    for generation in 1..config.max_generations {
        // stable: equal fitness keeps the earlier individual first
        pop.sort_by(|a, b| b.fitness.total_cmp(&a.fitness));
        let mut survive = rng::stream(seed, "ga-survive", &[generation as u64]);
        let mut next: Vec<Chromosome> = Vec::with_capacity(config.population_size);
        for (k, s) in pop.iter().enumerate() {
            if k < n_elite || survive.gen_bool(config.underdog_survival) {
                next.push(s.chrom.clone());
            }
        }
        next.truncate(config.population_size);
        let (pa, pb) = (&pop[0].chrom, &pop[1].chrom);
        let mut index = 0u64;
        while next.len() < config.population_size {
            let mut r = rng::stream(seed, "ga-child", &[generation as u64, index]);
            let child = crossover(pa, pb, &mut r)?;
            next.push(mutate(&child, config.mutation_rate, &mut r));
            index += 1;
        }
        pop = score(next, data, config, &mut cache)?;
        let g = stats(generation, &pop);
        let prev = history.last().expect("history starts non-empty").best;
        history.push(g);
        let improvement = if prev > 0.0 { (g.best - prev) / prev } else { f64::INFINITY };
        if improvement < config.plateau_threshold {
            stop_reason = StopReason::Plateau;
            break;
        }
    }

    // first individual of the final population with the top fitness
    let best = pop
        .iter()
        .fold(None::<&Scored>, |acc, s| match acc {
            Some(a) if a.fitness >= s.fitness => Some(a),
            _ => Some(s),
        })
        .expect("population is non-empty");
    Ok(SelectionResult {
        best_mask: best.chrom.features(),
        best_fitness: best.fitness,
        generations_run: history.len(),
        history,
        stop_reason,
        n_features: data.n_cols(),
        fitness_evaluations: cache.len(),
        config: *config,
    })
}
