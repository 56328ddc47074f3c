//! Real-coded genetic algorithm over the six learning hyperparameters:
//! tournament selection, blend crossover, Gaussian mutation, elitism, and
//! exact-match fitness memoization so the evaluation count stays honest.
//!
//! Fitness is lexicographic: minimize epochs-to-goal, tie-break by higher
//! final success rate, then higher final median reward.

use std::cmp::Ordering;
use std::collections::HashMap;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::agent::{Hyperparams, EPS_RANGE, GAMMA_RANGE, LR_RANGE, POLYAK_RANGE};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GeneScale {
    Linear,
    Log,
}

/// One searched gene: its bounds and whether the search runs in log10
/// coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneSpec {
    pub name: String,
    pub low: f64,
    pub high: f64,
    pub scale: GeneScale,
}

impl GeneSpec {
    /// Bounds in search coordinates (log10 for log-scale genes).
    pub fn search_bounds(&self) -> (f64, f64) {
        match self.scale {
            GeneScale::Linear => (self.low, self.high),
            GeneScale::Log => (self.low.log10(), self.high.log10()),
        }
    }

    /// Map a search-coordinate value back to the gene's natural units.
    pub fn decode(&self, search_value: f64) -> f64 {
        match self.scale {
            GeneScale::Linear => search_value,
            GeneScale::Log => 10f64.powf(search_value),
        }
    }
}

/// The six searched genes with the documented search box. Learning rates
/// are searched on a log scale.
pub fn default_gene_specs() -> Vec<GeneSpec> {
    vec![
        GeneSpec { name: "gamma".into(), low: GAMMA_RANGE.0, high: GAMMA_RANGE.1, scale: GeneScale::Linear },
        GeneSpec { name: "polyak".into(), low: POLYAK_RANGE.0, high: POLYAK_RANGE.1, scale: GeneScale::Linear },
        GeneSpec { name: "actor_lr".into(), low: LR_RANGE.0, high: LR_RANGE.1, scale: GeneScale::Log },
        GeneSpec { name: "critic_lr".into(), low: LR_RANGE.0, high: LR_RANGE.1, scale: GeneScale::Log },
        GeneSpec { name: "random_eps".into(), low: EPS_RANGE.0, high: EPS_RANGE.1, scale: GeneScale::Linear },
        GeneSpec { name: "noise_eps".into(), low: EPS_RANGE.0, high: EPS_RANGE.1, scale: GeneScale::Linear },
    ]
}

/// Gene vector in search coordinates, kept in-bounds by every operator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Chromosome {
    pub genes: Vec<f64>,
}

impl Chromosome {
    pub fn in_bounds(&self, specs: &[GeneSpec]) -> bool {
        self.genes.len() == specs.len()
            && self.genes.iter().zip(specs).all(|(&g, s)| {
                let (lo, hi) = s.search_bounds();
                (lo..=hi).contains(&g)
            })
    }

    /// Decode into `Hyperparams` when the gene specs are the default six.
    pub fn to_hyperparams(&self, specs: &[GeneSpec]) -> Result<Hyperparams> {
        if specs.len() != 6 || self.genes.len() != 6 {
            return Err(Error::InvalidArgument("expected the six default genes".into()));
        }
        let value = |name: &str| -> Result<f64> {
            specs
                .iter()
                .position(|s| s.name == name)
                .map(|i| specs[i].decode(self.genes[i]))
                .ok_or_else(|| Error::InvalidArgument(format!("missing gene {name}")))
        };
        Ok(Hyperparams {
            gamma: value("gamma")?,
            polyak: value("polyak")?,
            actor_lr: value("actor_lr")?,
            critic_lr: value("critic_lr")?,
            random_eps: value("random_eps")?,
            noise_eps: value("noise_eps")?,
        })
    }
}

/// Outcome of one fitness evaluation (one training run).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalOutcome {
    pub epochs_to_goal: usize,
    pub final_success_rate: f64,
    pub final_median_reward: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitnessRecord {
    pub chromosome: Chromosome,
    pub epochs_to_goal: usize,
    pub final_success_rate: f64,
    pub final_median_reward: f64,
    pub eval_index: usize,
    pub run_seed: u64,
}

/// Lexicographic fitness order; `Less` means strictly better.
pub fn cmp_fitness(a: &EvalOutcome, b: &EvalOutcome) -> Ordering {
    a.epochs_to_goal
        .cmp(&b.epochs_to_goal)
        .then(b.final_success_rate.partial_cmp(&a.final_success_rate).unwrap_or(Ordering::Equal))
        .then(b.final_median_reward.partial_cmp(&a.final_median_reward).unwrap_or(Ordering::Equal))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GaConfig {
    pub population_size: usize,
    pub generations: usize,
    pub tournament_size: usize,
    pub crossover_rate: f64,
    pub mutation_rate: f64,
    /// Mutation std as a fraction of each gene's search-coordinate range.
    pub mutation_sigma: f64,
    pub elitism_count: usize,
    pub seed: u64,
}

impl Default for GaConfig {
    fn default() -> Self {
        GaConfig {
            population_size: 8,
            generations: 10,
            tournament_size: 3,
            crossover_rate: 0.9,
            mutation_rate: 0.2,
            mutation_sigma: 0.1,
            elitism_count: 1,
            seed: 0,
        }
    }
}

impl GaConfig {
    pub fn validate(&self) -> Result<()> {
        if self.population_size == 0 || !self.population_size.is_multiple_of(2) {
            return Err(Error::Config("population_size must be positive and even".into()));
        }
        if self.generations == 0 {
            return Err(Error::Config("generations must be positive".into()));
        }
        if self.tournament_size < 2 {
            return Err(Error::Config("tournament_size must be >= 2".into()));
        }
        if self.tournament_size > self.population_size {
            return Err(Error::Config("tournament_size must be <= population_size".into()));
        }
        for (name, v) in [("crossover_rate", self.crossover_rate), ("mutation_rate", self.mutation_rate)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::Config(format!("{name} must be in [0, 1]")));
            }
        }
        if self.mutation_sigma <= 0.0 {
            return Err(Error::Config("mutation_sigma must be positive".into()));
        }
        if self.elitism_count >= self.population_size {
            return Err(Error::Config("elitism_count must be < population_size".into()));
        }
        Ok(())
    }
}

fn clamp_to_bounds(c: &mut Chromosome, specs: &[GeneSpec]) {
    for (g, s) in c.genes.iter_mut().zip(specs) {
        let (lo, hi) = s.search_bounds();
        *g = g.clamp(lo, hi);
    }
}

/// Best-of-k under the lexicographic fitness order, drawing k distinct
/// members uniformly (without replacement), so k = population size always
/// returns the global best.
pub fn tournament_select<R: Rng>(
    population: &[(Chromosome, EvalOutcome)],
    k: usize,
    rng: &mut R,
) -> Chromosome {
    assert!(!population.is_empty() && k >= 1);
    // k beyond the population size cannot add new entrants.
    let k = k.min(population.len());
    // Partial Fisher-Yates over the index set.
    let mut indices: Vec<usize> = (0..population.len()).collect();
    let mut best: Option<&(Chromosome, EvalOutcome)> = None;
    for i in 0..k {
        let j = rng.gen_range(i..indices.len());
        indices.swap(i, j);
        let cand = &population[indices[i]];
        best = match best {
            None => Some(cand),
            Some(b) if cmp_fitness(&cand.1, &b.1) == Ordering::Less => Some(cand),
            Some(b) => Some(b),
        };
    }
    best.unwrap().0.clone()
}

/// Per-gene blend crossover: with probability `rate` the children are
/// alpha*a + (1-alpha)*b and its mirror, alpha drawn per gene; otherwise
/// exact copies. Results are clamped in-bounds.
pub fn crossover<R: Rng>(
    a: &Chromosome,
    b: &Chromosome,
    rate: f64,
    specs: &[GeneSpec],
    rng: &mut R,
) -> (Chromosome, Chromosome) {
    let mut c1 = a.clone();
    let mut c2 = b.clone();
    if rng.gen::<f64>() < rate {
        for i in 0..c1.genes.len() {
            let alpha: f64 = rng.gen();
            let (x, y) = (a.genes[i], b.genes[i]);
            // Written so identical parents are exact fixed points.
            let span = alpha * (x - y);
            c1.genes[i] = y + span;
            c2.genes[i] = x - span;
        }
    }
    clamp_to_bounds(&mut c1, specs);
    clamp_to_bounds(&mut c2, specs);
    (c1, c2)
}

/// Each gene independently perturbed with probability `rate` by Gaussian
/// noise with std = sigma * (gene's search range), then clamped.
pub fn mutate<R: Rng>(
    c: &Chromosome,
    rate: f64,
    sigma: f64,
    specs: &[GeneSpec],
    rng: &mut R,
) -> Chromosome {
    let mut out = c.clone();
    for (i, s) in specs.iter().enumerate() {
        if rng.gen::<f64>() < rate {
            let (lo, hi) = s.search_bounds();
            let noise = Normal::new(0.0, sigma * (hi - lo)).expect("valid sigma");
            out.genes[i] += noise.sample(rng);
        }
    }
    clamp_to_bounds(&mut out, specs);
    out
}

fn random_chromosome<R: Rng>(specs: &[GeneSpec], rng: &mut R) -> Chromosome {
    Chromosome {
        genes: specs
            .iter()
            .map(|s| {
                let (lo, hi) = s.search_bounds();
                rng.gen_range(lo..hi)
            })
            .collect(),
    }
}

fn cache_key(c: &Chromosome) -> Vec<u64> {
    c.genes.iter().map(|g| g.to_bits()).collect()
}

pub struct GaRunResult {
    pub best: FitnessRecord,
    pub history: Vec<FitnessRecord>,
}

/// Run the GA. `fitness` scores one chromosome by a full training run (or a
/// stub in tests); it is called once per distinct chromosome — repeats are
/// served from the memoization cache without incrementing the evaluation
/// index. `run_seed` is recorded into every fitness record.
///
/// Evaluations within a generation are independent; they run on the rayon
/// pool installed by the caller (capped via EVODDPG_THREADS in the CLI) and
/// results are committed in dispatch order, so histories are deterministic.
pub fn ga_run<F>(
    fitness: &F,
    specs: &[GeneSpec],
    cfg: &GaConfig,
    run_seed: u64,
    mut on_eval: Option<&mut dyn FnMut(&FitnessRecord)>,
) -> Result<GaRunResult>
where
    F: Fn(&Chromosome) -> EvalOutcome + Sync,
{
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut cache: HashMap<Vec<u64>, EvalOutcome> = HashMap::new();
    let mut history: Vec<FitnessRecord> = Vec::new();
    let mut eval_index = 0usize;

    let mut population: Vec<Chromosome> =
        (0..cfg.population_size).map(|_| random_chromosome(specs, &mut rng)).collect();
    let mut best: Option<FitnessRecord> = None;

    for generation in 0..cfg.generations {
        // Evaluate cache misses in parallel; commit in dispatch order so
        // eval_index assignment is deterministic.
        let misses: Vec<(Vec<u64>, Chromosome)> = {
            let mut seen: Vec<Vec<u64>> = Vec::new();
            population
                .iter()
                .filter_map(|c| {
                    let key = cache_key(c);
                    if cache.contains_key(&key) || seen.contains(&key) {
                        None
                    } else {
                        seen.push(key.clone());
                        Some((key, c.clone()))
                    }
                })
                .collect()
        };
        let outcomes: Vec<EvalOutcome> = {
            use rayon::prelude::*;
            misses.par_iter().map(|(_, c)| fitness(c)).collect()
        };
        for ((key, chromosome), outcome) in misses.into_iter().zip(outcomes) {
            cache.insert(key, outcome);
            eval_index += 1;
            let record = FitnessRecord {
                chromosome,
                epochs_to_goal: outcome.epochs_to_goal,
                final_success_rate: outcome.final_success_rate,
                final_median_reward: outcome.final_median_reward,
                eval_index,
                run_seed,
            };
            if let Some(cb) = on_eval.as_deref_mut() {
                cb(&record);
            }
            let better = match &best {
                None => true,
                Some(b) => {
                    cmp_fitness(
                        &outcome,
                        &EvalOutcome {
                            epochs_to_goal: b.epochs_to_goal,
                            final_success_rate: b.final_success_rate,
                            final_median_reward: b.final_median_reward,
                        },
                    ) == Ordering::Less
                }
            };
            if better {
                best = Some(record.clone());
            }
            history.push(record);
        }

        if generation + 1 == cfg.generations {
            break;
        }

        let scored: Vec<(Chromosome, EvalOutcome)> = population
            .iter()
            .map(|c| (c.clone(), *cache.get(&cache_key(c)).expect("evaluated above")))
            .collect();

        // Elites carry over unchanged.
        let mut ranked = scored.clone();
        ranked.sort_by(|a, b| cmp_fitness(&a.1, &b.1));
        let mut next: Vec<Chromosome> =
            ranked.iter().take(cfg.elitism_count).map(|(c, _)| c.clone()).collect();

        while next.len() < cfg.population_size {
            let p1 = tournament_select(&scored, cfg.tournament_size, &mut rng);
            let p2 = tournament_select(&scored, cfg.tournament_size, &mut rng);
            let (c1, c2) = crossover(&p1, &p2, cfg.crossover_rate, specs, &mut rng);
            next.push(mutate(&c1, cfg.mutation_rate, cfg.mutation_sigma, specs, &mut rng));
            if next.len() < cfg.population_size {
                next.push(mutate(&c2, cfg.mutation_rate, cfg.mutation_sigma, specs, &mut rng));
            }
        }
        population = next;
    }

    Ok(GaRunResult { best: best.expect("at least one evaluation"), history })
}
