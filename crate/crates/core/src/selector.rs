//! Step one: choose at most `M` helpers maximizing `k1·f1 + k2·f2`.
//!
//! Communication terms play no part here; they are handled by the
//! [`allocator`](crate::allocator) once the helpers are fixed. Three
//! solvers share one objective: a binary genetic algorithm
//! ([`select_ga`]), exhaustive enumeration ([`select_oracle`]) and the
//! simple baseline policies ([`select_baseline`]).

use std::fmt;
use std::str::FromStr;

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::objectives::{
    blur_px, f1_visual_range, f2_motion_blur, pulse_for, ObjectiveError, SelectionVector,
};
use crate::rng::{stream_rng, streams, SimRng};
use crate::scenario::{validate_scenario, Scenario, Violation};

/// Largest candidate list the oracle will enumerate.
pub const ORACLE_MAX_CANDIDATES: usize = 25;

#[derive(Debug, Error)]
pub enum SelectError {
    #[error("invalid scenario: {}", .0.iter().map(|v| v.code.as_str()).collect::<Vec<_>>().join(", "))]
    InvalidScenario(Vec<Violation>),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("oracle refuses {n} candidates (limit {ORACLE_MAX_CANDIDATES})")]
    TooManyCandidates { n: usize },
    #[error(transparent)]
    Objective(#[from] ObjectiveError),
}

/// Weights of the four objective terms. Costs (blur, energy) carry negative
/// weights so that every step maximizes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ObjectiveWeights {
    pub k1: f64,
    pub k2: f64,
    pub k3: f64,
    pub k4: f64,
    /// Divide `f1` and `f2` by their largest single-helper value before
    /// weighting, so the weights are scale free.
    pub standardize: bool,
}

impl Default for ObjectiveWeights {
    fn default() -> Self {
        Self {
            k1: 1.0,
            k2: -0.25,
            k3: 1.0,
            k4: -1.0,
            standardize: true,
        }
    }
}

impl ObjectiveWeights {
    pub fn check(&self) -> Result<(), SelectError> {
        if ![self.k1, self.k2, self.k3, self.k4].iter().all(|k| k.is_finite()) {
            return Err(SelectError::Config("objective weights must be finite".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GaConfig {
    pub population_size: usize,
    pub generations: usize,
    pub crossover_prob: f64,
    /// Per-bit flip probability; `None` means `1 / N`.
    pub mutation_prob: Option<f64>,
    pub tournament_size: usize,
    pub elitism_count: usize,
    pub seed: u64,
}

impl Default for GaConfig {
    fn default() -> Self {
        Self {
            population_size: 50,
            generations: 100,
            crossover_prob: 0.9,
            mutation_prob: None,
            tournament_size: 3,
            elitism_count: 2,
            seed: 0,
        }
    }
}

impl GaConfig {
    pub fn check(&self) -> Result<(), SelectError> {
        let bad = |m: &str| Err(SelectError::Config(m.to_string()));
        if self.population_size < 2 {
            return bad("population_size must be at least 2");
        }
        if !(0.0..=1.0).contains(&self.crossover_prob) {
            return bad("crossover_prob must lie in [0, 1]");
        }
        if let Some(p) = self.mutation_prob {
            if !(0.0..=1.0).contains(&p) {
                return bad("mutation_prob must lie in [0, 1]");
            }
        }
        if self.tournament_size == 0 {
            return bad("tournament_size must be at least 1");
        }
        if self.elitism_count >= self.population_size {
            return bad("elitism_count must be below population_size");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SelectionMethod {
    Ga,
    Oracle,
    Random,
    Closest,
    Farthest,
    Slowest,
}

impl SelectionMethod {
    pub const ALL: [SelectionMethod; 6] = [
        SelectionMethod::Ga,
        SelectionMethod::Oracle,
        SelectionMethod::Random,
        SelectionMethod::Closest,
        SelectionMethod::Farthest,
        SelectionMethod::Slowest,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            SelectionMethod::Ga => "ga",
            SelectionMethod::Oracle => "oracle",
            SelectionMethod::Random => "random",
            SelectionMethod::Closest => "closest",
            SelectionMethod::Farthest => "farthest",
            SelectionMethod::Slowest => "slowest",
        }
    }

    pub fn baseline(self) -> Option<BaselinePolicy> {
        match self {
            SelectionMethod::Random => Some(BaselinePolicy::Random),
            SelectionMethod::Closest => Some(BaselinePolicy::Closest),
            SelectionMethod::Farthest => Some(BaselinePolicy::Farthest),
            SelectionMethod::Slowest => Some(BaselinePolicy::Slowest),
            _ => None,
        }
    }
}

impl fmt::Display for SelectionMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SelectionMethod {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        SelectionMethod::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| format!("unknown selection policy `{s}`"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BaselinePolicy {
    Random,
    Closest,
    Farthest,
    Slowest,
}

impl BaselinePolicy {
    pub fn method(self) -> SelectionMethod {
        match self {
            BaselinePolicy::Random => SelectionMethod::Random,
            BaselinePolicy::Closest => SelectionMethod::Closest,
            BaselinePolicy::Farthest => SelectionMethod::Farthest,
            BaselinePolicy::Slowest => SelectionMethod::Slowest,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SelectionResult {
    pub alpha: SelectionVector,
    pub objective_value: f64,
    /// Raw (unstandardized) visual range score.
    pub f1: f64,
    /// Raw motion blur score, pixels.
    pub f2: f64,
    pub evaluations: u64,
    pub method: SelectionMethod,
}

/// Scenario plus weights, with the standardization scales resolved.
#[derive(Debug, Clone)]
pub struct SelectionProblem<'a> {
    scenario: &'a Scenario,
    weights: ObjectiveWeights,
    f1_scale: f64,
    f2_scale: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Evaluation {
    pub objective: f64,
    pub f1: f64,
    pub f2: f64,
}

impl<'a> SelectionProblem<'a> {
    pub fn new(scenario: &'a Scenario, weights: ObjectiveWeights) -> Result<Self, SelectError> {
        validate_scenario(scenario).map_err(SelectError::InvalidScenario)?;
        weights.check()?;
        let (mut f1_scale, mut f2_scale) = (1.0, 1.0);
        if weights.standardize {
            let n = scenario.n_candidates();
            let (mut m1, mut m2) = (0.0f64, 0.0f64);
            for i in 0..n {
                let single = SelectionVector::from_indices(n, &[i]);
                m1 = m1.max(f1_visual_range(&single, scenario)?);
                m2 = m2.max(f2_motion_blur(&single, scenario)?.abs());
            }
            if m1 > 0.0 {
                f1_scale = m1;
            }
            if m2 > 0.0 {
                f2_scale = m2;
            }
        }
        Ok(Self {
            scenario,
            weights,
            f1_scale,
            f2_scale,
        })
    }

    pub fn scenario(&self) -> &Scenario {
        self.scenario
    }

    pub fn weights(&self) -> ObjectiveWeights {
        self.weights
    }

    /// Divisors applied to `f1` and `f2` before weighting.
    pub fn scales(&self) -> (f64, f64) {
        (self.f1_scale, self.f2_scale)
    }

    /// Objective, summed helper by helper in index order. A helper whose
    /// weighted terms cancel contributes exactly zero, whatever the weight
    /// scale.
    pub fn evaluate(&self, alpha: &SelectionVector) -> Result<Evaluation, SelectError> {
        let s = self.scenario;
        alpha.check_len(s.n_candidates())?;
        if !(s.environment.decay_rate > 0.0) {
            return Err(ObjectiveError::NonpositiveDecay(s.environment.decay_rate).into());
        }
        let (mut objective, mut f1, mut f2) = (0.0, 0.0, 0.0);
        for i in alpha.indices() {
            let range = pulse_for(i, s)?.weighted_length(s.environment.decay_rate);
            let blur = blur_px(s.candidates[i].speed, &s.camera)
                .ok_or(ObjectiveError::ZeroBlurDenominator { index: i })?;
            objective += self.contribution(range, blur);
            f1 += range;
            f2 += blur;
        }
        Ok(Evaluation { objective, f1, f2 })
    }

    fn contribution(&self, range: f64, blur: f64) -> f64 {
        self.weights.k1 * (range / self.f1_scale) + self.weights.k2 * (blur / self.f2_scale)
    }

    fn result(
        &self,
        alpha: SelectionVector,
        evaluations: u64,
        method: SelectionMethod,
    ) -> Result<SelectionResult, SelectError> {
        let e = self.evaluate(&alpha)?;
        Ok(SelectionResult {
            alpha,
            objective_value: e.objective,
            f1: e.f1,
            f2: e.f2,
            evaluations,
            method,
        })
    }
}

/// `true` when `(value, mask)` should replace `(best_value, best_mask)`:
/// higher objective wins, ties go to the smaller mask.
fn improves(value: f64, mask: &SelectionVector, best_value: f64, best_mask: &SelectionVector) -> bool {
    value > best_value || (value == best_value && mask < best_mask)
}

pub fn select_ga(
    s: &Scenario,
    weights: ObjectiveWeights,
    cfg: &GaConfig,
) -> Result<SelectionResult, SelectError> {
    cfg.check()?;
    let problem = SelectionProblem::new(s, weights)?;
    BinaryGa::new(&problem, cfg).run()
}

struct BinaryGa<'p, 'a> {
    problem: &'p SelectionProblem<'a>,
    cfg: &'p GaConfig,
    n: usize,
    max_ones: usize,
    mutation_prob: f64,
    rng: SimRng,
    evaluations: u64,
}

impl<'p, 'a> BinaryGa<'p, 'a> {
    fn new(problem: &'p SelectionProblem<'a>, cfg: &'p GaConfig) -> Self {
        let n = problem.scenario.n_candidates();
        Self {
            problem,
            cfg,
            n,
            max_ones: problem.scenario.max_helpers,
            mutation_prob: cfg.mutation_prob.unwrap_or(1.0 / n as f64),
            rng: stream_rng(cfg.seed, streams::GA),
            evaluations: 0,
        }
    }

    fn fitness(&mut self, alpha: &SelectionVector) -> Result<f64, SelectError> {
        self.evaluations += 1;
        Ok(self.problem.evaluate(alpha)?.objective)
    }

    fn random_individual(&mut self) -> SelectionVector {
        let k = self.rng.random_range(0..=self.max_ones);
        let picks = index::sample(&mut self.rng, self.n, k).into_vec();
        SelectionVector::from_indices(self.n, &picks)
    }

    /// Clears random selected bits until the cardinality bound holds.
    fn repair(&mut self, alpha: &mut SelectionVector) {
        let mut ones: Vec<usize> = alpha.indices().collect();
        while ones.len() > self.max_ones {
            let k = self.rng.random_range(0..ones.len());
            alpha.set(ones.swap_remove(k), false);
        }
    }

    fn tournament(&mut self, fitness: &[f64]) -> usize {
        let mut best = self.rng.random_range(0..fitness.len());
        for _ in 1..self.cfg.tournament_size {
            let c = self.rng.random_range(0..fitness.len());
            if fitness[c] > fitness[best] {
                best = c;
            }
        }
        best
    }

    fn crossover(&mut self, a: &SelectionVector, b: &SelectionVector) -> (SelectionVector, SelectionVector) {
        let mut c1 = a.clone();
        let mut c2 = b.clone();
        if self.rng.random_bool(self.cfg.crossover_prob) {
            for i in 0..self.n {
                if self.rng.random_bool(0.5) {
                    c1.set(i, b.is_selected(i));
                    c2.set(i, a.is_selected(i));
                }
            }
        }
        (c1, c2)
    }

    fn mutate(&mut self, alpha: &mut SelectionVector) {
        for i in 0..self.n {
            if self.rng.random_bool(self.mutation_prob) {
                alpha.set(i, !alpha.is_selected(i));
            }
        }
    }

    fn run(mut self) -> Result<SelectionResult, SelectError> {
        let size = self.cfg.population_size;
        let mut population: Vec<SelectionVector> = (0..size).map(|_| self.random_individual()).collect();
        let mut fitness = population
            .iter()
            .map(|a| self.fitness(a))
            .collect::<Result<Vec<_>, _>>()?;

        let (mut best, mut best_value) = (population[0].clone(), fitness[0]);
        let track = |pop: &[SelectionVector], fit: &[f64], best: &mut SelectionVector, best_value: &mut f64| {
            for (a, &f) in pop.iter().zip(fit) {
                if improves(f, a, *best_value, best) {
                    *best = a.clone();
                    *best_value = f;
                }
            }
        };
        track(&population, &fitness, &mut best, &mut best_value);

        for _ in 0..self.cfg.generations {
            let mut order: Vec<usize> = (0..size).collect();
            order.sort_by(|&i, &j| {
                fitness[j]
                    .total_cmp(&fitness[i])
                    .then_with(|| population[i].cmp(&population[j]))
            });
            let mut next: Vec<SelectionVector> = order[..self.cfg.elitism_count]
                .iter()
                .map(|&i| population[i].clone())
                .collect();
            let mut next_fitness: Vec<f64> = order[..self.cfg.elitism_count]
                .iter()
                .map(|&i| fitness[i])
                .collect();

            while next.len() < size {
                let p1 = self.tournament(&fitness);
                let p2 = self.tournament(&fitness);
                let (c1, c2) = self.crossover(&population[p1], &population[p2]);
                for mut child in [c1, c2] {
                    if next.len() == size {
                        break;
                    }
                    self.mutate(&mut child);
                    self.repair(&mut child);
                    debug_assert!(child.count() <= self.max_ones);
                    next_fitness.push(self.fitness(&child)?);
                    next.push(child);
                }
            }
            population = next;
            fitness = next_fitness;
            track(&population, &fitness, &mut best, &mut best_value);
        }

        let evaluations = self.evaluations;
        self.problem.result(best, evaluations, SelectionMethod::Ga)
    }
}

/// Exact argmax over every mask with at most `M` ones.
pub fn select_oracle(s: &Scenario, weights: ObjectiveWeights) -> Result<SelectionResult, SelectError> {
    if s.n_candidates() > ORACLE_MAX_CANDIDATES {
        return Err(SelectError::TooManyCandidates { n: s.n_candidates() });
    }
    let problem = SelectionProblem::new(s, weights)?;
    oracle_for(&problem)
}

pub(crate) fn oracle_for(problem: &SelectionProblem<'_>) -> Result<SelectionResult, SelectError> {
    let s = problem.scenario;
    let n = s.n_candidates();
    if n > ORACLE_MAX_CANDIDATES {
        return Err(SelectError::TooManyCandidates { n });
    }
    let mut best = SelectionVector::empty(n);
    let mut best_value = problem.evaluate(&best)?.objective;
    let mut evaluations = 1u64;
    for k in 1..=s.max_helpers.min(n) {
        for bits in combinations(n, k) {
            let alpha = SelectionVector::from_bits(n, bits);
            let value = problem.evaluate(&alpha)?.objective;
            evaluations += 1;
            if improves(value, &alpha, best_value, &best) {
                best = alpha;
                best_value = value;
            }
        }
    }
    problem.result(best, evaluations, SelectionMethod::Oracle)
}

/// All `n`-bit words with exactly `k` ones, in increasing numeric order.
pub fn combinations(n: usize, k: usize) -> impl Iterator<Item = u64> {
    let limit = 1u64 << n;
    let first = if k == 0 { 0 } else { (1u64 << k) - 1 };
    let mut next = (k <= n).then_some(first);
    std::iter::from_fn(move || {
        let cur = next?;
        next = if cur == 0 {
            None
        } else {
            // Gosper's hack.
            let c = cur & cur.wrapping_neg();
            let r = cur + c;
            let succ = (((r ^ cur) >> 2) / c) | r;
            (succ < limit).then_some(succ)
        };
        Some(cur)
    })
}

/// Selects exactly `M` helpers by a fixed rule.
pub fn select_baseline(
    s: &Scenario,
    weights: ObjectiveWeights,
    policy: BaselinePolicy,
    seed: u64,
) -> Result<SelectionResult, SelectError> {
    let problem = SelectionProblem::new(s, weights)?;
    baseline_for(&problem, policy, seed)
}

pub(crate) fn baseline_for(
    problem: &SelectionProblem<'_>,
    policy: BaselinePolicy,
    seed: u64,
) -> Result<SelectionResult, SelectError> {
    let s = problem.scenario;
    let n = s.n_candidates();
    let m = s.max_helpers.min(n);
    let ego_x = s.ego.position_x;
    let mut order: Vec<usize> = (0..n).collect();
    let picks: Vec<usize> = match policy {
        BaselinePolicy::Random => {
            let mut rng = stream_rng(seed, streams::BASELINE);
            index::sample(&mut rng, n, m).into_vec()
        }
        BaselinePolicy::Closest => {
            order.sort_by(|&i, &j| {
                let di = (s.candidates[i].position_x - ego_x).abs();
                let dj = (s.candidates[j].position_x - ego_x).abs();
                di.total_cmp(&dj).then(i.cmp(&j))
            });
            order[..m].to_vec()
        }
        BaselinePolicy::Farthest => {
            order.sort_by(|&i, &j| {
                let di = (s.candidates[i].position_x - ego_x).abs();
                let dj = (s.candidates[j].position_x - ego_x).abs();
                dj.total_cmp(&di).then(i.cmp(&j))
            });
            order[..m].to_vec()
        }
        BaselinePolicy::Slowest => {
            order.sort_by(|&i, &j| {
                s.candidates[i]
                    .speed
                    .total_cmp(&s.candidates[j].speed)
                    .then(i.cmp(&j))
            });
            order[..m].to_vec()
        }
    };
    problem.result(SelectionVector::from_indices(n, &picks), 1, policy.method())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::{generate_scenario, ScenarioConfig};
    use proptest::prelude::*;

    fn scenario(seed: u64) -> Scenario {
        generate_scenario(seed, 10, &ScenarioConfig::default()).unwrap()
    }

    #[test]
    fn combination_counts() {
        assert_eq!(combinations(10, 0).count(), 1);
        assert_eq!(combinations(10, 3).count(), 120);
        assert_eq!(combinations(10, 10).count(), 1);
        assert_eq!(combinations(3, 4).count(), 0);
        assert!(combinations(10, 3).all(|b| b.count_ones() == 3));
        let total: usize = (0..=3).map(|k| combinations(10, k).count()).sum();
        assert_eq!(total, 176);
    }

    #[test]
    fn single_candidate_is_selected() {
        let cfg = ScenarioConfig {
            max_helpers: 1,
            ..Default::default()
        };
        let s = generate_scenario(3, 1, &cfg).unwrap();
        let w = ObjectiveWeights {
            k2: 0.0,
            ..Default::default()
        };
        let r = select_ga(&s, w, &GaConfig::default()).unwrap();
        assert_eq!(r.alpha.indices().collect::<Vec<_>>(), vec![0]);
    }

    #[test]
    fn ga_is_deterministic() {
        let s = scenario(17);
        let cfg = GaConfig {
            seed: 99,
            ..Default::default()
        };
        let a = select_ga(&s, ObjectiveWeights::default(), &cfg).unwrap();
        let b = select_ga(&s, ObjectiveWeights::default(), &cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn oracle_selects_all_when_only_range_counts() {
        let cfg = ScenarioConfig {
            max_helpers: 3,
            ..Default::default()
        };
        let s = generate_scenario(8, 3, &cfg).unwrap();
        let w = ObjectiveWeights {
            k2: 0.0,
            ..Default::default()
        };
        let r = select_oracle(&s, w).unwrap();
        assert_eq!(r.alpha.count(), 3);
        assert_eq!(r.evaluations, 8);
    }

    #[test]
    fn oracle_tie_goes_to_first_vehicle() {
        // Equal speeds and a blur-only objective make both singletons tie.
        let cfg = ScenarioConfig {
            max_helpers: 1,
            ..Default::default()
        };
        let mut s = generate_scenario(8, 2, &cfg).unwrap();
        for v in &mut s.candidates {
            v.speed = 10.0;
        }
        let w = ObjectiveWeights {
            k1: 0.0,
            k2: 1.0,
            ..Default::default()
        };
        let p = SelectionProblem::new(&s, w).unwrap();
        assert_eq!(
            p.evaluate(&SelectionVector::from_indices(2, &[0])).unwrap().objective,
            p.evaluate(&SelectionVector::from_indices(2, &[1])).unwrap().objective
        );
        let r = select_oracle(&s, w).unwrap();
        assert_eq!(r.alpha, SelectionVector::from_indices(2, &[0]));
    }

    #[test]
    fn oracle_refuses_large_instances() {
        let cfg = ScenarioConfig::default();
        let s = generate_scenario(1, 26, &cfg).unwrap();
        assert!(matches!(
            select_oracle(&s, ObjectiveWeights::default()),
            Err(SelectError::TooManyCandidates { n: 26 })
        ));
    }

    #[test]
    fn baselines() {
        let s = scenario(4);
        let w = ObjectiveWeights::default();
        let closest = select_baseline(&s, w, BaselinePolicy::Closest, 0).unwrap();
        assert_eq!(closest.alpha.indices().collect::<Vec<_>>(), vec![0, 1, 2]);
        let farthest = select_baseline(&s, w, BaselinePolicy::Farthest, 0).unwrap();
        assert_eq!(farthest.alpha.indices().collect::<Vec<_>>(), vec![7, 8, 9]);

        let slowest = select_baseline(&s, w, BaselinePolicy::Slowest, 0).unwrap();
        let max_picked = slowest.alpha.indices().map(|i| s.candidates[i].speed).fold(0.0, f64::max);
        let min_unpicked = (0..10)
            .filter(|&i| !slowest.alpha.is_selected(i))
            .map(|i| s.candidates[i].speed)
            .fold(f64::INFINITY, f64::min);
        assert!(max_picked <= min_unpicked);

        let r1 = select_baseline(&s, w, BaselinePolicy::Random, 5).unwrap();
        let r2 = select_baseline(&s, w, BaselinePolicy::Random, 5).unwrap();
        assert_eq!(r1, r2);
        assert_eq!(r1.alpha.count(), 3);
    }

    #[test]
    fn random_baseline_never_beats_oracle_on_range() {
        let w = ObjectiveWeights {
            k2: 0.0,
            ..Default::default()
        };
        let s = scenario(12);
        let oracle = select_oracle(&s, w).unwrap();
        let mean = (0..100)
            .map(|seed| select_baseline(&s, w, BaselinePolicy::Random, seed).unwrap().f1)
            .sum::<f64>()
            / 100.0;
        assert!(mean <= oracle.f1);
    }

    #[test]
    fn bad_ga_config_rejected() {
        let s = scenario(1);
        for cfg in [
            GaConfig {
                population_size: 1,
                ..Default::default()
            },
            GaConfig {
                crossover_prob: 1.5,
                ..Default::default()
            },
            GaConfig {
                elitism_count: 50,
                ..Default::default()
            },
            GaConfig {
                mutation_prob: Some(-0.1),
                ..Default::default()
            },
        ] {
            assert!(matches!(
                select_ga(&s, ObjectiveWeights::default(), &cfg),
                Err(SelectError::Config(_))
            ));
        }
    }

    #[test]
    fn method_names_round_trip() {
        for m in SelectionMethod::ALL {
            assert_eq!(m.as_str().parse::<SelectionMethod>().unwrap(), m);
        }
        assert!("best".parse::<SelectionMethod>().is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn oracle_dominates_everything(seed in 0u64..10_000, draw in 0u64..1000) {
            let s = scenario(seed);
            let w = ObjectiveWeights::default();
            let oracle = select_oracle(&s, w).unwrap();
            let ga = select_ga(&s, w, &GaConfig { seed: draw, generations: 20, ..Default::default() }).unwrap();
            prop_assert!(oracle.objective_value >= ga.objective_value);
            prop_assert!(ga.alpha.count() <= s.max_helpers);
            for policy in [BaselinePolicy::Random, BaselinePolicy::Closest, BaselinePolicy::Farthest, BaselinePolicy::Slowest] {
                let b = select_baseline(&s, w, policy, draw).unwrap();
                prop_assert!(oracle.objective_value >= b.objective_value);
            }
        }

        #[test]
        fn oracle_argmax_is_scale_invariant(seed in 0u64..10_000, c in 0.01f64..100.0) {
            let s = scenario(seed);
            let w = ObjectiveWeights::default();
            let scaled = ObjectiveWeights { k1: w.k1 * c, k2: w.k2 * c, ..w };
            prop_assert_eq!(select_oracle(&s, w).unwrap().alpha, select_oracle(&s, scaled).unwrap().alpha);
        }

        #[test]
        fn reported_objective_recomputes_exactly(seed in 0u64..10_000) {
            let s = scenario(seed);
            let w = ObjectiveWeights::default();
            let r = select_ga(&s, w, &GaConfig { generations: 10, ..Default::default() }).unwrap();
            let p = SelectionProblem::new(&s, w).unwrap();
            prop_assert_eq!(p.evaluate(&r.alpha).unwrap().objective.to_bits(), r.objective_value.to_bits());
        }

        #[test]
        fn extra_trailing_candidate_never_hurts(seed in 0u64..10_000) {
            // Append a candidate behind nobody: strictly past the last one,
            // with the last one's speed. The old optimum stays feasible.
            let s = scenario(seed);
            let w = ObjectiveWeights { standardize: false, ..Default::default() };
            let before = select_oracle(&s, w).unwrap().objective_value;
            let mut bigger = s.clone();
            let mut extra = s.candidates[9].clone();
            extra.id = 11;
            extra.position_x += s.environment.visibility_threshold + 1.0;
            bigger.candidates.push(extra);
            bigger.environment.range_horizon += s.environment.visibility_threshold + 1.0;
            let after = select_oracle(&bigger, w).unwrap().objective_value;
            prop_assert!(after >= before);
        }
    }
}
