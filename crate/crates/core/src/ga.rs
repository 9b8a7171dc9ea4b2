//! Genetic search over [`HyperParams`]: 66-bit chromosomes of six 11-bit
//! genes, linear rank selection, uniform crossover, per-bit flip mutation,
//! elitism, and inverse epochs-to-threshold fitness.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::agent::{HyperParams, TrainConfig, Trainer};
use crate::envs::EnvConfig;
use crate::error::{Error, Result};
use crate::seeding;

pub const GENE_BITS: usize = 11;
pub const GENE_COUNT: usize = 6;
pub const CHROMOSOME_BITS: usize = GENE_BITS * GENE_COUNT;
/// Largest gene integer, `2^11 − 1`.
pub const GENE_MAX: u16 = (1 << GENE_BITS) - 1;

const BIT_MASK: u128 = (1u128 << CHROMOSOME_BITS) - 1;

/// A 66-bit string. Bit `j` of the backing integer is position `j` of the
/// string; each gene is read most-significant bit first.
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct Chromosome(u128);

impl Chromosome {
    pub const ZERO: Chromosome = Chromosome(0);
    pub const ONES: Chromosome = Chromosome(BIT_MASK);

    pub fn from_bits(bits: &[bool]) -> Result<Self> {
        if bits.len() != CHROMOSOME_BITS {
            return Err(Error::contract(format!("chromosome needs {CHROMOSOME_BITS} bits, got {}", bits.len())));
        }
        Ok(Chromosome(bits.iter().enumerate().fold(0, |acc, (j, &b)| acc | (u128::from(b) << j))))
    }

    pub fn from_genes(genes: [u16; GENE_COUNT]) -> Result<Self> {
        let mut c = Chromosome::ZERO;
        for (i, &v) in genes.iter().enumerate() {
            if v > GENE_MAX {
                return Err(Error::contract(format!("gene value {v} exceeds {GENE_MAX}")));
            }
            for k in 0..GENE_BITS {
                let bit = (v >> (GENE_BITS - 1 - k)) & 1;
                c.0 |= u128::from(bit) << (i * GENE_BITS + k);
            }
        }
        Ok(c)
    }

    pub fn random<R: Rng + ?Sized>(rng: &mut R) -> Self {
        Chromosome(rng.random::<u128>() & BIT_MASK)
    }

    pub fn bit(&self, j: usize) -> bool {
        (self.0 >> j) & 1 == 1
    }

    pub fn bits(&self) -> impl Iterator<Item = bool> + '_ {
        (0..CHROMOSOME_BITS).map(|j| self.bit(j))
    }

    pub fn genes(&self) -> [u16; GENE_COUNT] {
        std::array::from_fn(|i| (0..GENE_BITS).fold(0u16, |v, k| (v << 1) | u16::from(self.bit(i * GENE_BITS + k))))
    }

    pub fn hamming(&self, other: &Chromosome) -> u32 {
        (self.0 ^ other.0).count_ones()
    }
}

impl fmt::Display for Chromosome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.bits().try_for_each(|b| f.write_str(if b { "1" } else { "0" }))
    }
}

impl fmt::Debug for Chromosome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Chromosome({self})")
    }
}

impl FromStr for Chromosome {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bits = s
            .chars()
            .map(|c| match c {
                '0' => Ok(false),
                '1' => Ok(true),
                other => Err(Error::contract(format!("invalid chromosome character {other:?}"))),
            })
            .collect::<Result<Vec<_>>>()?;
        Chromosome::from_bits(&bits)
    }
}

impl Serialize for Chromosome {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Chromosome {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        String::deserialize(d)?.parse().map_err(serde::de::Error::custom)
    }
}

/// Gene integer to parameter: `v / 2047` rounded to three decimals.
pub fn decode_gene(v: u16) -> f64 {
    (f64::from(v) / f64::from(GENE_MAX) * 1000.0).round() / 1000.0
}

pub fn encode_gene(p: f64) -> Result<u16> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::contract(format!("parameter {p} outside [0, 1]")));
    }
    Ok((p * f64::from(GENE_MAX)).round() as u16)
}

pub fn decode(chromosome: &Chromosome) -> HyperParams {
    HyperParams::from_genes(chromosome.genes().map(decode_gene))
}

pub fn encode(params: &HyperParams) -> Result<Chromosome> {
    let mut genes = [0u16; GENE_COUNT];
    for (g, p) in genes.iter_mut().zip(params.to_genes()) {
        *g = encode_gene(p)?;
    }
    Chromosome::from_genes(genes)
}

/// 1-based linear ranks: ascending fitness, ties ranked by index.
pub fn ranks(fitnesses: &[f64]) -> Result<Vec<usize>> {
    if let Some(bad) = fitnesses.iter().find(|f| !f.is_finite()) {
        return Err(Error::contract(format!("non-finite fitness {bad}")));
    }
    let mut order: Vec<usize> = (0..fitnesses.len()).collect();
    // stable sort keeps lower indices first among ties
    order.sort_by(|&a, &b| fitnesses[a].total_cmp(&fitnesses[b]));
    let mut ranks = vec![0; fitnesses.len()];
    for (pos, idx) in order.into_iter().enumerate() {
        ranks[idx] = pos + 1;
    }
    Ok(ranks)
}

/// Selection probability of each member, `rank_i / Σ ranks`.
pub fn rank_probabilities(fitnesses: &[f64]) -> Result<Vec<f64>> {
    let ranks = ranks(fitnesses)?;
    let total = (ranks.len() * (ranks.len() + 1) / 2) as f64;
    Ok(ranks.into_iter().map(|r| r as f64 / total).collect())
}

/// Precomputed rank table for repeated parent draws.
#[derive(Clone, Debug)]
pub struct RankSelector {
    ranks: Vec<usize>,
    total: usize,
}

impl RankSelector {
    pub fn new(fitnesses: &[f64]) -> Result<Self> {
        if fitnesses.is_empty() {
            return Err(Error::contract("rank selection needs a non-empty population"));
        }
        let ranks = ranks(fitnesses)?;
        let total = ranks.iter().sum();
        Ok(RankSelector { ranks, total })
    }

    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let mut ticket = rng.random_range(0..self.total);
        for (i, &r) in self.ranks.iter().enumerate() {
            if ticket < r {
                return i;
            }
            ticket -= r;
        }
        unreachable!("ticket below rank total")
    }

    /// Two independent draws; the parents may coincide.
    pub fn parents<R: Rng + ?Sized>(&self, rng: &mut R) -> (usize, usize) {
        (self.draw(rng), self.draw(rng))
    }
}

pub fn rank_select<R: Rng + ?Sized>(fitnesses: &[f64], rng: &mut R) -> Result<(usize, usize)> {
    Ok(RankSelector::new(fitnesses)?.parents(rng))
}

/// Children under an explicit mask: a set bit copies `(a, b)`, a clear bit `(b, a)`.
pub fn crossover_with_mask(a: &Chromosome, b: &Chromosome, mask: u128) -> (Chromosome, Chromosome) {
    let keep = mask & BIT_MASK;
    (Chromosome((a.0 & keep) | (b.0 & !keep & BIT_MASK)), Chromosome((b.0 & keep) | (a.0 & !keep & BIT_MASK)))
}

pub fn uniform_crossover<R: Rng + ?Sized>(a: &Chromosome, b: &Chromosome, rng: &mut R) -> (Chromosome, Chromosome) {
    crossover_with_mask(a, b, rng.random::<u128>())
}

pub fn flip_mutate<R: Rng + ?Sized>(chromosome: &Chromosome, rate: f64, rng: &mut R) -> Result<Chromosome> {
    if !(0.0..=1.0).contains(&rate) {
        return Err(Error::contract(format!("mutation rate {rate} outside [0, 1]")));
    }
    let flips = (0..CHROMOSOME_BITS).filter(|_| rng.random_bool(rate)).fold(0u128, |acc, j| acc | (1 << j));
    Ok(Chromosome(chromosome.0 ^ flips))
}

/// Outcome of training one candidate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub fitness: f64,
    /// First 1-based epoch whose evaluation reached the threshold.
    pub epochs_to_threshold: Option<usize>,
    pub best_success: f64,
    /// Training aborted on a non-finite loss or gradient.
    pub failed: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitnessRecord {
    pub chromosome: Chromosome,
    pub params: HyperParams,
    pub fitness: f64,
    pub epochs_to_threshold: Option<usize>,
    pub best_success: f64,
    pub failed: bool,
    pub seed: u64,
}

/// Fitness for a run that never reached the threshold within `max_epochs`:
/// below every reacher's `1/e`, and ordered by best observed success.
pub fn fallback_fitness(max_epochs: usize, best_success: f64) -> f64 {
    1.0 / (max_epochs as f64 + 1.0 + (1.0 - best_success))
}

pub fn fitness_from_curve(curve: &[f64], max_epochs: usize, threshold: f64, failed: bool) -> Evaluation {
    let best_success = curve.iter().copied().fold(0.0, f64::max);
    match curve.iter().position(|&s| s >= threshold) {
        Some(i) => Evaluation { fitness: 1.0 / (i + 1) as f64, epochs_to_threshold: Some(i + 1), best_success, failed },
        None => Evaluation {
            fitness: fallback_fitness(max_epochs, best_success),
            epochs_to_threshold: None,
            best_success,
            failed,
        },
    }
}

/// Trains with `params` until the success threshold is first reached or
/// `max_epochs` elapse. A non-finite training failure ends the run and counts
/// as never reaching the threshold.
pub fn fitness(params: HyperParams, env: &EnvConfig, config: &TrainConfig, seed: u64) -> Result<Evaluation> {
    let mut trainer = Trainer::new(env, params, config, seed)?;
    let mut curve = Vec::with_capacity(config.max_epochs);
    let mut failed = false;
    while curve.len() < config.max_epochs {
        match trainer.train_epoch() {
            Ok(stats) => {
                curve.push(stats.success_rate);
                if stats.success_rate >= config.success_threshold {
                    break;
                }
            }
            Err(Error::NonFiniteLoss { .. } | Error::NonFiniteGradient { .. }) => {
                failed = true;
                break;
            }
            Err(e) => return Err(e),
        }
    }
    Ok(fitness_from_curve(&curve, config.max_epochs, config.success_threshold, failed))
}

/// Anything that can score a decoded candidate. Implementations must be
/// deterministic in `(params, seed)` for campaigns to be reproducible.
pub trait FitnessFn: Sync {
    fn evaluate(&self, params: &HyperParams, seed: u64) -> Result<Evaluation>;
}

/// Fitness by actual DDPG training.
#[derive(Clone, Debug)]
pub struct TrainingFitness {
    pub env: EnvConfig,
    pub train: TrainConfig,
}

impl FitnessFn for TrainingFitness {
    fn evaluate(&self, params: &HyperParams, seed: u64) -> Result<Evaluation> {
        fitness(*params, &self.env, &self.train, seed)
    }
}

/// `1 / (1 + Σ|param − target|)`, for testing the search itself.
#[derive(Clone, Debug)]
pub struct DistanceFitness {
    pub target: HyperParams,
}

impl FitnessFn for DistanceFitness {
    fn evaluate(&self, params: &HyperParams, _seed: u64) -> Result<Evaluation> {
        let dist: f64 = params.to_genes().iter().zip(self.target.to_genes()).map(|(p, t)| (p - t).abs()).sum();
        Ok(Evaluation { fitness: 1.0 / (1.0 + dist), epochs_to_threshold: None, best_success: 0.0, failed: false })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GaConfig {
    pub population_size: usize,
    /// Breeding rounds after the initial population.
    pub generations: usize,
    /// Per-bit flip probability.
    pub mutation_rate: f64,
    pub elitism_count: usize,
    /// Training seeds per candidate; the lower-median fitness is kept.
    pub fitness_seeds: usize,
    /// Place the encoded original parameters in the initial population.
    pub seed_original: bool,
}

impl Default for GaConfig {
    fn default() -> Self {
        GaConfig {
            population_size: 30,
            generations: 30,
            mutation_rate: 0.1,
            elitism_count: 1,
            fitness_seeds: 1,
            seed_original: false,
        }
    }
}

impl GaConfig {
    pub fn validate(&self) -> Result<()> {
        if self.population_size < 2 {
            return Err(Error::Config("population_size must be at least 2".into()));
        }
        if !(0.0..=1.0).contains(&self.mutation_rate) {
            return Err(Error::Config("mutation_rate must lie in [0, 1]".into()));
        }
        if self.elitism_count > self.population_size {
            return Err(Error::Config("elitism_count cannot exceed population_size".into()));
        }
        if self.fitness_seeds == 0 {
            return Err(Error::Config("fitness_seeds must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenerationStats {
    pub generation: usize,
    pub best: f64,
    pub mean: f64,
    pub worst: f64,
    pub best_params: HyperParams,
}

impl GenerationStats {
    fn of(generation: usize, population: &[FitnessRecord]) -> Self {
        let best = best_of(population);
        let fits = population.iter().map(|r| r.fitness);
        GenerationStats {
            generation,
            best: best.fitness,
            mean: fits.clone().sum::<f64>() / population.len() as f64,
            worst: fits.fold(f64::INFINITY, f64::min),
            best_params: best.params,
        }
    }
}

/// Highest-ranked member: top fitness, latest index among ties.
fn best_of(population: &[FitnessRecord]) -> &FitnessRecord {
    population
        .iter()
        .reduce(|best, r| if r.fitness >= best.fitness { r } else { best })
        .expect("population is non-empty")
}

/// Everything needed to continue a campaign after an interruption.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CampaignState {
    pub seed: u64,
    pub config: GaConfig,
    /// Index of the evaluated population held in `population` (0 = initial).
    pub generation: usize,
    pub population: Vec<FitnessRecord>,
    pub best: FitnessRecord,
    pub history: Vec<GenerationStats>,
}

impl CampaignState {
    /// Samples and evaluates the initial population.
    pub fn start<F: FitnessFn>(config: &GaConfig, seed: u64, fitness: &F) -> Result<Self> {
        config.validate()?;
        let mut rng = seeding::stream(seed, "init-pop", 0);
        let mut chromosomes: Vec<Chromosome> =
            (0..config.population_size).map(|_| Chromosome::random(&mut rng)).collect();
        if config.seed_original {
            chromosomes[0] = encode(&HyperParams::ORIGINAL)?;
        }
        let population = evaluate_population(&chromosomes, 0, seed, config, fitness)?;
        let best = best_of(&population).clone();
        let history = vec![GenerationStats::of(0, &population)];
        Ok(CampaignState { seed, config: config.clone(), generation: 0, population, best, history })
    }

    pub fn is_finished(&self) -> bool {
        self.generation >= self.config.generations
    }

    /// Breeds and evaluates the next generation. Elites keep their records.
    pub fn advance<F: FitnessFn>(&mut self, fitness: &F) -> Result<()> {
        let next = self.generation + 1;
        let config = &self.config;
        let mut rng = seeding::stream(self.seed, "breed", next as u64);
        let fits: Vec<f64> = self.population.iter().map(|r| r.fitness).collect();
        let ranks = ranks(&fits)?;
        let mut by_rank: Vec<usize> = (0..fits.len()).collect();
        by_rank.sort_by_key(|&i| std::cmp::Reverse(ranks[i]));
        let elites: Vec<FitnessRecord> =
            by_rank.iter().take(config.elitism_count).map(|&i| self.population[i].clone()).collect();

        let selector = RankSelector::new(&fits)?;
        let mut children = Vec::with_capacity(config.population_size - elites.len());
        while children.len() < config.population_size - elites.len() {
            let (a, b) = selector.parents(&mut rng);
            let (ca, cb) = uniform_crossover(&self.population[a].chromosome, &self.population[b].chromosome, &mut rng);
            children.push(flip_mutate(&ca, config.mutation_rate, &mut rng)?);
            children.push(flip_mutate(&cb, config.mutation_rate, &mut rng)?);
        }
        children.truncate(config.population_size - elites.len());

        let mut population = elites;
        population.extend(evaluate_population(&children, next, self.seed, config, fitness)?);
        let generation_best = best_of(&population);
        if generation_best.fitness > self.best.fitness {
            self.best = generation_best.clone();
        }
        self.history.push(GenerationStats::of(next, &population));
        self.population = population;
        self.generation = next;
        Ok(())
    }

    pub fn run_to_end<F: FitnessFn>(&mut self, fitness: &F) -> Result<()> {
        while !self.is_finished() {
            self.advance(fitness)?;
        }
        Ok(())
    }
}

/// Seed for member `index` of generation `generation`, independent of
/// evaluation order and worker count.
pub fn candidate_seed(campaign_seed: u64, generation: usize, index: usize) -> u64 {
    seeding::derive(campaign_seed, "fitness", ((generation as u64) << 32) | index as u64)
}

fn evaluate_population<F: FitnessFn>(
    chromosomes: &[Chromosome],
    generation: usize,
    campaign_seed: u64,
    config: &GaConfig,
    fitness: &F,
) -> Result<Vec<FitnessRecord>> {
    chromosomes
        .par_iter()
        .enumerate()
        .map(|(i, c)| {
            let params = decode(c);
            let seed = candidate_seed(campaign_seed, generation, i);
            let mut runs = (0..config.fitness_seeds)
                .map(|slot| fitness.evaluate(&params, seeding::derive(seed, "fitness", slot as u64)))
                .collect::<Result<Vec<_>>>()?;
            runs.sort_by(|a, b| a.fitness.total_cmp(&b.fitness));
            let e = runs.swap_remove((runs.len() - 1) / 2);
            Ok(FitnessRecord {
                chromosome: *c,
                params,
                fitness: e.fitness,
                epochs_to_threshold: e.epochs_to_threshold,
                best_success: e.best_success,
                failed: e.failed,
                seed,
            })
        })
        .collect()
}

/// Runs a full campaign and returns the best-ever record with the
/// per-generation history.
pub fn evolve<F: FitnessFn>(
    config: &GaConfig,
    seed: u64,
    fitness: &F,
) -> Result<(FitnessRecord, Vec<GenerationStats>)> {
    let mut state = CampaignState::start(config, seed, fitness)?;
    state.run_to_end(fitness)?;
    Ok((state.best, state.history))
}
