//! Genetic search over transmit powers and discrete RIS phases.
//!
//! A chromosome holds `K` continuous powers followed by `N` phase indices on
//! the `2^B` grid. Fitness is the reciprocal of the closed-form sum rate, so
//! lower is better. Each generation keeps the best chromosome (the elite),
//! draws parents from the rest by roulette wheel with weight equal to the
//! sum rate, breeds them by single-point crossover, refills the population
//! with fresh random chromosomes and finally mutates a few non-elite
//! members.

use rand::seq::index;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::StatisticalCsi;
use crate::closedform::{ergodic_rate, optimal_phase_single_pair, phase_grid, BudgetSplit, PowerAllocation, RisState};
use crate::error::{Error, Result};
use crate::numerics::RngStream;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Chromosome {
    /// Transmit powers, watts.
    pub p: Vec<f64>,
    /// Phase indices into the `2^B` grid.
    pub theta: Vec<u32>,
}

impl Chromosome {
    pub fn len(&self) -> usize {
        self.p.len() + self.theta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Phase shifts in radians.
    pub fn phases(&self, bits: u32) -> Vec<f64> {
        let grid = phase_grid(bits);
        self.theta.iter().map(|&t| grid[t as usize]).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GaParams {
    pub population: usize,
    pub parents: usize,
    pub mutants: usize,
    pub max_iters: usize,
    pub target_fitness: f64,
    pub seed: u64,
    /// When false the powers stay at the equal split and only phases evolve.
    pub power_control: bool,
    /// Restricts power genes to `p_max * l / L`, `l = 1..=L`.
    pub power_levels: Option<u32>,
    pub power_sampling: PowerSampling,
    /// Adds [`OptProblem::cophased`] and [`OptProblem::favoured`] for every
    /// pair to the initial population.
    pub cophase_seeds: bool,
    pub mutant_source: MutantSource,
}

/// Which chromosomes the `mutants` operator acts on.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MutantSource {
    /// Random members of the new generation other than the elite.
    Population,
    /// Fresh copies of the elite, taking the place of random refills.
    Elite,
}

/// Distribution of freshly drawn (continuous) power genes on `(0, p_max]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PowerSampling {
    Uniform,
    /// Log-uniform on `(p_max 10^-decades, p_max]`.
    LogUniform { decades: f64 },
}

impl Default for GaParams {
    fn default() -> Self {
        Self {
            population: 40,
            parents: 20,
            mutants: 8,
            max_iters: 200,
            target_fitness: 0.0,
            seed: 0,
            power_control: true,
            power_levels: None,
            power_sampling: PowerSampling::LogUniform { decades: 6.0 },
            cophase_seeds: true,
            mutant_source: MutantSource::Elite,
        }
    }
}

impl GaParams {
    pub fn validate(&self) -> Result<()> {
        if self.population < 2 {
            return Err(Error::InvalidArgument("population must be >= 2".into()));
        }
        if self.parents > self.population || self.mutants > self.population {
            return Err(Error::InvalidArgument(format!(
                "parents ({}) and mutants ({}) must not exceed the population ({})",
                self.parents, self.mutants, self.population
            )));
        }
        if let PowerSampling::LogUniform { decades } = self.power_sampling {
            if !(decades > 0.0 && decades.is_finite()) {
                return Err(Error::InvalidArgument("log-uniform power sampling needs decades > 0".into()));
            }
        }
        if self.power_levels == Some(0) {
            return Err(Error::InvalidArgument("power_levels must be >= 1".into()));
        }
        Ok(())
    }

    /// Closed-form evaluations spent by a run that uses every generation.
    pub fn evaluation_budget(&self) -> usize {
        self.population * self.max_iters.max(1)
    }
}

/// Fixed data of one optimization instance.
#[derive(Debug, Clone)]
pub struct OptProblem<'a> {
    pub csi: &'a StatisticalCsi,
    /// Mode, resolution, phase noise and hardware; its phases are ignored.
    pub ris: &'a RisState,
    pub split: BudgetSplit,
    pub total_budget: f64,
    pub p_max: f64,
}

impl<'a> OptProblem<'a> {
    /// Per-user cap defaults to the whole transmit budget.
    pub fn new(csi: &'a StatisticalCsi, ris: &'a RisState, split: BudgetSplit, total_budget: f64) -> Self {
        Self {
            csi,
            ris,
            split,
            total_budget,
            p_max: split.transmit,
        }
    }

    pub fn with_p_max(mut self, p_max: f64) -> Self {
        self.p_max = p_max;
        self
    }

    pub fn n_pairs(&self) -> usize {
        self.csi.n_pairs()
    }

    pub fn n_elements(&self) -> usize {
        self.csi.n_elements()
    }

    fn levels(&self) -> u32 {
        1 << self.ris.bits
    }

    pub fn allocation(&self, ch: &Chromosome) -> PowerAllocation {
        PowerAllocation {
            p: ch.p.clone(),
            amp_power: self.split.amp_power,
            total_budget: self.total_budget,
            p_max: self.p_max,
        }
    }

    pub fn ris_state(&self, ch: &Chromosome) -> RisState {
        self.ris.clone().with_theta(ch.phases(self.ris.bits))
    }

    /// Closed-form sum rate of the chromosome.
    pub fn sum_rate(&self, ch: &Chromosome) -> Result<f64> {
        Ok(ergodic_rate(&self.allocation(ch), self.csi, &self.ris_state(ch))?.sum)
    }

    /// `1 / sum rate`.
    pub fn fitness(&self, ch: &Chromosome) -> Result<f64> {
        self.check_feasible(ch)?;
        Ok(fitness_from_rate(self.sum_rate(ch)?))
    }

    /// Equal powers and zero phases.
    pub fn baseline(&self) -> Chromosome {
        let k = self.n_pairs();
        Chromosome {
            p: vec![(self.split.transmit / k as f64).min(self.p_max); k],
            theta: vec![0; self.n_elements()],
        }
    }

    /// Equal powers and the grid phases closest to co-phasing the LoS
    /// cascade of pair `pair`.
    pub fn cophased(&self, pair: usize) -> Chromosome {
        let levels = self.levels();
        let step = 2.0 * std::f64::consts::PI / levels as f64;
        let theta = optimal_phase_single_pair(self.csi, pair)
            .iter()
            .map(|t| ((t.rem_euclid(2.0 * std::f64::consts::PI) / step).round() as u32) % levels)
            .collect();
        Chromosome {
            theta,
            ..self.baseline()
        }
    }

    /// [`OptProblem::cophased`] with pair `pair` holding nearly the whole
    /// transmit budget and the others at a millionth of it each.
    pub fn favoured(&self, pair: usize) -> Chromosome {
        let k = self.n_pairs();
        let floor = (1e-6 * self.split.transmit).min(self.p_max);
        let mut ch = self.cophased(pair);
        ch.p = vec![floor; k];
        ch.p[pair] = (self.split.transmit - floor * (k - 1) as f64).min(self.p_max);
        ch
    }

    /// Moves every power gene to the nearest level `p_max l / levels`,
    /// `l >= 1`, then repairs the budget.
    pub fn snap_to_grid(&self, ch: &mut Chromosome, levels: u32) {
        let l = levels as f64;
        for p in &mut ch.p {
            *p = self.p_max * (*p / self.p_max * l).round().clamp(1.0, l) / l;
        }
        self.repair(ch);
    }

    pub fn check_feasible(&self, ch: &Chromosome) -> Result<()> {
        if ch.p.len() != self.n_pairs() || ch.theta.len() != self.n_elements() {
            return Err(Error::InvalidArgument("chromosome dimensions do not match the problem".into()));
        }
        let tol = 1e-12 * self.split.transmit.max(self.p_max);
        if ch.p.iter().any(|&p| !(p > 0.0 && p <= self.p_max + tol)) {
            return Err(Error::InvalidArgument("power gene outside (0, p_max]".into()));
        }
        if ch.p.iter().sum::<f64>() > self.split.transmit + tol {
            return Err(Error::InvalidArgument("powers exceed the transmit budget".into()));
        }
        if ch.theta.iter().any(|&t| t >= self.levels()) {
            return Err(Error::InvalidArgument("phase index outside the grid".into()));
        }
        Ok(())
    }

    fn sample_power(&self, params: &GaParams, rng: &mut RngStream) -> f64 {
        match params.power_levels {
            Some(levels) => self.p_max * (1 + rng.below(levels as usize)) as f64 / levels as f64,
            None => match params.power_sampling {
                PowerSampling::Uniform => self.p_max * rng.uniform_open0(),
                PowerSampling::LogUniform { decades } => self.p_max * 10f64.powf(-decades * rng.uniform()),
            },
        }
    }

    /// Uniformly random feasible chromosome.
    pub fn random_chromosome(&self, params: &GaParams, rng: &mut RngStream) -> Chromosome {
        let p = if params.power_control {
            (0..self.n_pairs()).map(|_| self.sample_power(params, rng)).collect()
        } else {
            self.baseline().p
        };
        let theta = (0..self.n_elements()).map(|_| rng.below(self.levels() as usize) as u32).collect();
        let mut ch = Chromosome { p, theta };
        self.repair(&mut ch);
        ch
    }

    /// Scales all powers down proportionally when their sum exceeds the
    /// transmit budget.
    pub fn repair(&self, ch: &mut Chromosome) {
        let total: f64 = ch.p.iter().sum();
        if total > self.split.transmit {
            let s = self.split.transmit / total;
            ch.p.iter_mut().for_each(|p| *p *= s);
        }
    }
}

pub fn fitness_from_rate(rate: f64) -> f64 {
    1.0 / rate
}

/// Draws `count` indices with probability proportional to `weights`
/// (with replacement). Falls back to uniform when no weight is positive.
pub fn roulette_select(weights: &[f64], count: usize, rng: &mut RngStream) -> Vec<usize> {
    assert!(!weights.is_empty(), "roulette wheel needs at least one slot");
    let clean: Vec<f64> = weights.iter().map(|&w| if w.is_finite() && w > 0.0 { w } else { 0.0 }).collect();
    let total: f64 = clean.iter().sum();
    if !(total > 0.0) {
        return (0..count).map(|_| rng.below(weights.len())).collect();
    }
    let mut cumulative = Vec::with_capacity(clean.len());
    let mut acc = 0.0;
    for w in &clean {
        acc += w;
        cumulative.push(acc);
    }
    (0..count)
        .map(|_| {
            let u = rng.uniform() * total;
            let idx = cumulative.partition_point(|&c| c <= u).min(clean.len() - 1);
            // never land on a zero-weight slot through rounding at the top
            if clean[idx] > 0.0 {
                idx
            } else {
                clean.iter().rposition(|&w| w > 0.0).unwrap_or(idx)
            }
        })
        .collect()
}

/// Single-point crossover on the flattened gene string
/// `[p_1 .. p_K, theta_1 .. theta_N]`: the first `cut` genes come from one
/// parent and the rest from the other.
pub fn crossover(a: &Chromosome, b: &Chromosome, cut: usize) -> (Chromosome, Chromosome) {
    assert_eq!(a.p.len(), b.p.len());
    assert_eq!(a.theta.len(), b.theta.len());
    let k = a.p.len();
    let cut = cut.min(a.len());
    let cut_p = cut.min(k);
    let cut_t = cut.saturating_sub(k);
    let splice_p = |x: &[f64], y: &[f64]| [&x[..cut_p], &y[cut_p..]].concat();
    let splice_t = |x: &[u32], y: &[u32]| [&x[..cut_t], &y[cut_t..]].concat();
    (
        Chromosome {
            p: splice_p(&a.p, &b.p),
            theta: splice_t(&a.theta, &b.theta),
        },
        Chromosome {
            p: splice_p(&b.p, &a.p),
            theta: splice_t(&b.theta, &a.theta),
        },
    )
}

/// Resamples one power gene (when power control is on) and one phase gene,
/// then repairs the budget.
pub fn mutate(ch: &Chromosome, problem: &OptProblem<'_>, params: &GaParams, rng: &mut RngStream) -> Chromosome {
    let mut out = ch.clone();
    if params.power_control && !out.p.is_empty() {
        let i = rng.below(out.p.len());
        out.p[i] = problem.sample_power(params, rng);
    }
    if !out.theta.is_empty() {
        let n = rng.below(out.theta.len());
        out.theta[n] = rng.below(problem.levels() as usize) as u32;
    }
    problem.repair(&mut out);
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaOutcome {
    pub best: Chromosome,
    pub best_rate: f64,
    /// Best fitness of every generation, starting with the initial one.
    pub history: Vec<f64>,
    pub evaluations: usize,
}

fn evaluate_all(problem: &OptProblem<'_>, pop: &[Chromosome]) -> Result<Vec<f64>> {
    pop.par_iter().map(|c| problem.fitness(c)).collect()
}

/// Index of the smallest fitness; ties go to the lowest index.
fn argmin(fits: &[f64]) -> usize {
    let mut best = 0;
    for (i, &f) in fits.iter().enumerate() {
        if f < fits[best] {
            best = i;
        }
    }
    best
}

/// Runs the genetic search. The first generation holds
/// [`OptProblem::baseline`], the co-phased seeds when enabled, and random
/// chromosomes.
pub fn evolve(problem: &OptProblem<'_>, params: &GaParams) -> Result<GaOutcome> {
    params.validate()?;
    let mut rng = RngStream::new(params.seed, 0);
    let mut pop = vec![problem.baseline()];
    if params.cophase_seeds {
        for j in 0..problem.n_pairs() {
            pop.push(problem.cophased(j));
            if params.power_control {
                pop.push(problem.favoured(j));
            }
        }
        if let Some(levels) = params.power_levels {
            for ch in &mut pop {
                problem.snap_to_grid(ch, levels);
            }
        }
        pop.truncate(params.population);
    }
    while pop.len() < params.population {
        pop.push(problem.random_chromosome(params, &mut rng));
    }
    evolve_population(problem, params, pop, rng)
}

/// Runs the genetic search from a caller-supplied initial population.
pub fn evolve_from(problem: &OptProblem<'_>, params: &GaParams, initial: Vec<Chromosome>) -> Result<GaOutcome> {
    params.validate()?;
    if initial.len() != params.population {
        return Err(Error::InvalidArgument(format!(
            "initial population has {} members, expected {}",
            initial.len(),
            params.population
        )));
    }
    evolve_population(problem, params, initial, RngStream::new(params.seed, 0))
}

fn evolve_population(
    problem: &OptProblem<'_>,
    params: &GaParams,
    mut pop: Vec<Chromosome>,
    mut rng: RngStream,
) -> Result<GaOutcome> {
    let genes = problem.n_pairs() + problem.n_elements();
    let mut fits = evaluate_all(problem, &pop)?;
    let mut evaluations = pop.len();
    let mut history = Vec::with_capacity(params.max_iters + 1);
    let mut reached = false;
    for _ in 0..params.max_iters {
        let e = argmin(&fits);
        history.push(fits[e]);
        if fits[e] <= params.target_fitness {
            reached = true;
            break;
        }
        let others: Vec<usize> = (0..pop.len()).filter(|&i| i != e).collect();
        let weights: Vec<f64> = others.iter().map(|&i| 1.0 / fits[i]).collect();
        let parents: Vec<usize> = roulette_select(&weights, params.parents, &mut rng)
            .into_iter()
            .map(|s| others[s])
            .collect();

        let mut next = Vec::with_capacity(params.population);
        next.push(pop[e].clone());
        for pair in parents.chunks(2) {
            if let [a, b] = pair {
                let cut = 1 + rng.below(genes);
                let (mut c1, mut c2) = crossover(&pop[*a], &pop[*b], cut);
                problem.repair(&mut c1);
                problem.repair(&mut c2);
                next.push(c1);
                next.push(c2);
            } else {
                next.push(pop[pair[0]].clone());
            }
        }
        next.truncate(params.population);
        match params.mutant_source {
            MutantSource::Population => {
                while next.len() < params.population {
                    next.push(problem.random_chromosome(params, &mut rng));
                }
                let mutants = params.mutants.min(next.len() - 1);
                for m in index::sample(&mut rng, next.len() - 1, mutants).into_vec() {
                    next[m + 1] = mutate(&next[m + 1], problem, params, &mut rng);
                }
            }
            MutantSource::Elite => {
                let room = params.population - next.len();
                for _ in 0..params.mutants.min(room) {
                    next.push(mutate(&pop[e], problem, params, &mut rng));
                }
                while next.len() < params.population {
                    next.push(problem.random_chromosome(params, &mut rng));
                }
            }
        }

        let mut next_fits = vec![fits[e]];
        next_fits.extend(evaluate_all(problem, &next[1..])?);
        evaluations += next.len() - 1;
        pop = next;
        fits = next_fits;
    }
    let e = argmin(&fits);
    if !reached {
        history.push(fits[e]);
    }
    let best = pop.swap_remove(e);
    let best_rate = problem.sum_rate(&best)?;
    Ok(GaOutcome {
        best,
        best_rate,
        history,
        evaluations,
    })
}

/// Best of `evaluations` independent random feasible chromosomes.
pub fn random_search(
    problem: &OptProblem<'_>,
    params: &GaParams,
    evaluations: usize,
    seed: u64,
) -> Result<(Chromosome, f64)> {
    let rng = RngStream::new(seed, 1);
    let scored: Vec<(Chromosome, f64)> = (0..evaluations as u64)
        .into_par_iter()
        .map(|t| {
            let mut r = rng.substream(t);
            let ch = problem.random_chromosome(params, &mut r);
            let rate = problem.sum_rate(&ch)?;
            Ok((ch, rate))
        })
        .collect::<Result<_>>()?;
    let mut best = 0;
    for (i, (_, r)) in scored.iter().enumerate() {
        if *r > scored[best].1 {
            best = i;
        }
    }
    Ok(scored.into_iter().nth(best).expect("at least one evaluation"))
}

/// One uniform draw from the phase grid with equal powers.
pub fn random_phase(problem: &OptProblem<'_>, seed: u64) -> Chromosome {
    let mut rng = RngStream::new(seed, 2);
    let params = GaParams {
        power_control: false,
        ..GaParams::default()
    };
    problem.random_chromosome(&params, &mut rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{PairStats, SystemGeometry};
    use crate::closedform::{budget_split, RisMode};
    use proptest::prelude::*;

    fn csi(k: usize, n_h: usize) -> StatisticalCsi {
        let geom = SystemGeometry::quarter_wave(
            n_h,
            1,
            0.125,
            [0.0; 3],
            (0..k).map(|i| [1.0 + i as f64, 0.0, 0.0]).collect(),
            (0..k).map(|i| [0.0, 1.0 + i as f64, 0.0]).collect(),
        );
        let pairs = (0..k)
            .map(|i| PairStats {
                alpha: 1e-4,
                beta: 1e-4 * (1 + i) as f64,
                gamma_a: 10.0,
                gamma_b: 10.0,
                aoa_az: i as f64,
                aoa_el: 0.3,
                aod_az: 1.0 + i as f64,
                aod_el: 2.0,
            })
            .collect();
        StatisticalCsi::from_parts(geom, pairs, None, vec![1e-11; k]).unwrap()
    }

    fn problem<'a>(csi: &'a StatisticalCsi, ris: &'a RisState) -> OptProblem<'a> {
        let split = budget_split(ris.mode, 1.0, csi.n_elements(), ris, 0.5).unwrap();
        OptProblem::new(csi, ris, split, 1.0)
    }

    fn ch(p: &[f64], theta: &[u32]) -> Chromosome {
        Chromosome {
            p: p.to_vec(),
            theta: theta.to_vec(),
        }
    }

    #[test]
    fn fitness_is_reciprocal_rate() {
        assert_eq!(fitness_from_rate(1.0), 1.0);
        assert_eq!(fitness_from_rate(2.0), 0.5);
        let c = csi(2, 4);
        let ris = RisState::new(RisMode::Active, 4);
        let prob = problem(&c, &ris);
        let x = ch(&[0.1, 0.2], &[0, 3, 5, 7]);
        let direct = ergodic_rate(&prob.allocation(&x), &c, &ris.clone().with_theta(x.phases(3))).unwrap();
        assert_eq!(prob.fitness(&x).unwrap(), 1.0 / direct.sum);
        assert!(prob.fitness(&ch(&[0.0, 0.2], &[0; 4])).is_err());
        assert!(prob.fitness(&ch(&[0.1, 0.2], &[8, 0, 0, 0])).is_err());
    }

    #[test]
    fn roulette_frequencies() {
        let mut rng = RngStream::new(1, 0);
        assert!(roulette_select(&[0.0, 1.0, 0.0], 1000, &mut rng).iter().all(|&i| i == 1));

        let draws = roulette_select(&[2.0, 1.0], 100_000, &mut rng);
        let first = draws.iter().filter(|&&i| i == 0).count() as f64 / 1e5;
        assert!((first - 2.0 / 3.0).abs() < 0.01, "{first}");

        let draws = roulette_select(&[1.0; 5], 100_000, &mut rng);
        for s in 0..5 {
            let f = draws.iter().filter(|&&i| i == s).count() as f64 / 1e5;
            assert!((f - 0.2).abs() < 0.2 * 0.03, "{f}");
        }
        let draws = roulette_select(&[0.0; 4], 1000, &mut rng);
        assert!(draws.iter().all(|&i| i < 4));
    }

    #[test]
    fn crossover_bookkeeping() {
        let a = ch(&[1.0], &[1, 2]);
        let b = ch(&[5.0], &[6, 7]);
        let (c1, c2) = crossover(&a, &b, 1);
        assert_eq!(c1, ch(&[1.0], &[6, 7]));
        assert_eq!(c2, ch(&[5.0], &[1, 2]));
        assert_eq!(crossover(&a, &b, 3), (a.clone(), b.clone()));
        assert_eq!(crossover(&a, &a, 2), (a.clone(), a.clone()));
        let (c1, _) = crossover(&a, &b, 2);
        assert_eq!(c1, ch(&[1.0], &[1, 7]));
    }

    #[test]
    fn mutation_stays_feasible() {
        let c = csi(1, 2);
        let mut ris = RisState::new(RisMode::Active, 2);
        ris.bits = 0;
        let prob = problem(&c, &ris);
        let params = GaParams::default();
        let mut rng = RngStream::new(4, 0);
        let x = prob.baseline();
        for _ in 0..200 {
            let y = mutate(&x, &prob, &params, &mut rng);
            assert_eq!(y.theta, x.theta);
            assert!(y.p[0] > 0.0 && y.p[0] <= prob.p_max);
            prob.check_feasible(&y).unwrap();
        }
        let a = mutate(&x, &prob, &params, &mut RngStream::new(9, 9));
        let b = mutate(&x, &prob, &params, &mut RngStream::new(9, 9));
        assert_eq!(a, b);
    }

    #[test]
    fn identical_population_is_static() {
        let c = csi(2, 4);
        let ris = RisState::new(RisMode::Active, 4);
        let prob = problem(&c, &ris);
        let params = GaParams {
            population: 10,
            parents: 9,
            mutants: 0,
            max_iters: 15,
            ..GaParams::default()
        };
        let x = ch(&[0.05, 0.1], &[1, 2, 3, 4]);
        let out = evolve_from(&prob, &params, vec![x.clone(); 10]).unwrap();
        assert!(out.history.windows(2).all(|w| w[0] == w[1]));
        assert_eq!(out.best, x);
    }

    #[test]
    fn deterministic_and_elitist() {
        let c = csi(3, 4);
        let ris = RisState::new(RisMode::Active, 4);
        let prob = problem(&c, &ris);
        let params = GaParams {
            max_iters: 30,
            seed: 17,
            ..GaParams::default()
        };
        let a = evolve(&prob, &params).unwrap();
        let b = evolve(&prob, &params).unwrap();
        assert_eq!(a, b);
        assert!(a.history.windows(2).all(|w| w[1] <= w[0]));
        assert!(a.best_rate >= prob.sum_rate(&prob.baseline()).unwrap());
        assert_eq!(a.history.len(), 31);
    }

    #[test]
    fn phase_only_keeps_equal_powers() {
        let c = csi(2, 4);
        let ris = RisState::new(RisMode::Passive, 4);
        let prob = problem(&c, &ris);
        let params = GaParams {
            max_iters: 10,
            power_control: false,
            ..GaParams::default()
        };
        let out = evolve(&prob, &params).unwrap();
        assert_eq!(out.best.p, prob.baseline().p);
    }

    #[test]
    fn target_fitness_stops_early() {
        let c = csi(2, 4);
        let ris = RisState::new(RisMode::Active, 4);
        let prob = problem(&c, &ris);
        let params = GaParams {
            target_fitness: f64::INFINITY,
            ..GaParams::default()
        };
        let out = evolve(&prob, &params).unwrap();
        assert_eq!(out.history.len(), 1);
        assert_eq!(out.evaluations, params.population);
    }

    #[test]
    fn heuristic_seeds() {
        let c = csi(3, 8);
        let ris = RisState::new(RisMode::Active, 8).with_kappa_pn(f64::INFINITY);
        let prob = problem(&c, &ris);
        for j in 0..3 {
            let x = prob.cophased(j);
            prob.check_feasible(&x).unwrap();
            assert_eq!(x.p, prob.baseline().p);
            // 3-bit rounding costs at most pi/8 per element
            let gamma = crate::closedform::gamma_term(&prob.ris_state(&x), &c, j, j);
            let n = 8.0;
            let floor = (n * (std::f64::consts::PI / 8.0).cos()).powi(2) - n;
            assert!(gamma >= floor, "{gamma} < {floor}");

            let f = prob.favoured(j);
            prob.check_feasible(&f).unwrap();
            assert_eq!(f.theta, x.theta);
            assert!((f.p.iter().sum::<f64>() - prob.split.transmit).abs() < 1e-12);
            assert!(f.p.iter().enumerate().all(|(i, &p)| i == j || p < f.p[j]));
        }
    }

    #[test]
    fn snapping_lands_on_the_grid() {
        let c = csi(2, 4);
        let ris = RisState::new(RisMode::Passive, 4);
        let prob = problem(&c, &ris).with_p_max(0.4);
        let mut x = ch(&[1e-6, 0.23], &[0; 4]);
        prob.snap_to_grid(&mut x, 8);
        assert_eq!(x.p, vec![0.05, 0.25]);
    }

    #[test]
    fn mutant_sources_both_evolve() {
        let c = csi(3, 4);
        let ris = RisState::new(RisMode::Active, 4);
        let prob = problem(&c, &ris);
        for source in [MutantSource::Elite, MutantSource::Population] {
            let params = GaParams {
                max_iters: 20,
                mutant_source: source,
                ..GaParams::default()
            };
            let out = evolve(&prob, &params).unwrap();
            assert_eq!(out.evaluations, params.population + 20 * (params.population - 1));
            assert!(out.history.windows(2).all(|w| w[1] <= w[0]));
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn random_and_mutated_are_feasible(seed in any::<u64>(), levels in proptest::option::of(1u32..10)) {
            let c = csi(3, 4);
            let ris = RisState::new(RisMode::Active, 4);
            let prob = problem(&c, &ris).with_p_max(0.2);
            let params = GaParams { power_levels: levels, ..GaParams::default() };
            let mut rng = RngStream::new(seed, 0);
            for _ in 0..20 {
                let x = prob.random_chromosome(&params, &mut rng);
                prob.check_feasible(&x).unwrap();
                let y = mutate(&x, &prob, &params, &mut rng);
                prob.check_feasible(&y).unwrap();
                let z = prob.random_chromosome(&params, &mut rng);
                let cut = 1 + rng.below(7);
                let (mut c1, mut c2) = crossover(&y, &z, cut);
                prob.repair(&mut c1);
                prob.repair(&mut c2);
                prob.check_feasible(&c1).unwrap();
                prob.check_feasible(&c2).unwrap();
            }
        }
    }
}
