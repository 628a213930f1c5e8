//! Step two: share the resource-block pool and the power budget among the
//! helpers chosen in step one, maximizing `k3·f3 + k4·f4`.
//!
//! Only selected helpers whose expected delay meets the bound are eligible;
//! everyone else gets no blocks and no power. A feasible plan hands out the
//! whole pool and the whole power budget.
//!
//! Throughput is linear in the block counts, with gain `R_ch (1 - β_i)` per
//! block, and energy does not depend on blocks at all once the power split
//! is fixed. The exact optimum therefore gives every block to the eligible
//! helper with the best gain. [`allocate_proportional`] is the
//! multi-helper alternative the harness uses by default.

use std::fmt;
use std::str::FromStr;

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::comms::{f3_throughput, f4_energy, meets_delay_constraint, CommsError};
use crate::objectives::SelectionVector;
use crate::rng::{stream_rng, streams};
use crate::scenario::Scenario;
use crate::selector::{GaConfig, ObjectiveWeights};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AllocError {
    #[error("selection has {got} entries but the scenario has {expected} candidates")]
    LengthMismatch { expected: usize, got: usize },
    #[error("selection picks {count} helpers, more than the limit of {max}")]
    TooManySelected { count: usize, max: usize },
    #[error("sweep value {shift} moves the packet error probability of candidate {index} outside [0, 1)")]
    BetaShiftOutOfRange { shift: f64, index: usize },
    #[error(transparent)]
    Comms(#[from] CommsError),
    #[error("invalid configuration: {0}")]
    Config(String),
}

/// How the power budget is divided among eligible helpers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PowerSplit {
    /// `P_T / k` to each of the `k` eligible helpers.
    #[default]
    Equal,
    /// Whole budget to the eligible helper that maximizes `k4·f4` on its
    /// own. This is the degenerate optimum of the energy term as written.
    EnergyOptimal,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AllocationPlan {
    /// Blocks per candidate; zero for unselected or delay-infeasible ones.
    pub rb_counts: Vec<u32>,
    /// Transmit power per candidate, watts.
    pub powers: Vec<f64>,
    pub achieved_throughput: f64,
    pub achieved_energy: f64,
    pub feasible: bool,
}

impl AllocationPlan {
    fn infeasible(n: usize) -> Self {
        Self {
            rb_counts: vec![0; n],
            powers: vec![0.0; n],
            achieved_throughput: 0.0,
            achieved_energy: 0.0,
            feasible: false,
        }
    }

    /// `k3·f3 + k4·f4` of this plan.
    pub fn objective(&self, weights: &ObjectiveWeights) -> f64 {
        weights.k3 * self.achieved_throughput + weights.k4 * self.achieved_energy
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AllocationPolicy {
    Optimal,
    Proportional,
    Uniform,
    Random,
}

impl AllocationPolicy {
    pub const ALL: [AllocationPolicy; 4] = [
        AllocationPolicy::Optimal,
        AllocationPolicy::Proportional,
        AllocationPolicy::Uniform,
        AllocationPolicy::Random,
    ];

    /// Policies compared in error sweeps.
    pub const SWEPT: [AllocationPolicy; 3] = [
        AllocationPolicy::Optimal,
        AllocationPolicy::Uniform,
        AllocationPolicy::Random,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            AllocationPolicy::Optimal => "optimal",
            AllocationPolicy::Proportional => "proportional",
            AllocationPolicy::Uniform => "uniform",
            AllocationPolicy::Random => "random",
        }
    }
}

impl fmt::Display for AllocationPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for AllocationPolicy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        AllocationPolicy::ALL
            .into_iter()
            .find(|p| p.as_str() == s)
            .ok_or_else(|| format!("unknown allocation policy `{s}`"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BaselineAllocation {
    Uniform,
    Random,
}

fn check_selection(s: &Scenario, alpha: &SelectionVector) -> Result<(), AllocError> {
    if alpha.len() != s.n_candidates() {
        return Err(AllocError::LengthMismatch {
            expected: s.n_candidates(),
            got: alpha.len(),
        });
    }
    if alpha.count() > s.max_helpers {
        return Err(AllocError::TooManySelected {
            count: alpha.count(),
            max: s.max_helpers,
        });
    }
    Ok(())
}

/// Selected candidates that meet the delay bound, in index order.
pub fn eligible_helpers(s: &Scenario, alpha: &SelectionVector) -> Vec<usize> {
    alpha
        .indices()
        .filter(|&i| meets_delay_constraint(&s.candidates[i], &s.comms))
        .collect()
}

fn powers_for(
    s: &Scenario,
    eligible: &[usize],
    split: PowerSplit,
    weights: &ObjectiveWeights,
) -> Vec<f64> {
    let mut powers = vec![0.0; s.n_candidates()];
    let budget = s.comms.total_power;
    match split {
        PowerSplit::Equal => {
            let share = budget / eligible.len() as f64;
            for &i in eligible {
                powers[i] = share;
            }
        }
        PowerSplit::EnergyOptimal => {
            let gain = |i: usize| {
                weights.k4 / (s.comms.channel_rate * (1.0 - s.candidates[i].packet_error_prob))
            };
            let best = argmax_first(eligible, gain);
            powers[best] = budget;
        }
    }
    powers
}

/// First element of `items` with the largest `key`.
fn argmax_first(items: &[usize], key: impl Fn(usize) -> f64) -> usize {
    let mut best = items[0];
    let mut best_key = key(best);
    for &i in &items[1..] {
        let k = key(i);
        if k > best_key {
            best = i;
            best_key = k;
        }
    }
    best
}

fn finish(
    s: &Scenario,
    alpha: &SelectionVector,
    rb_counts: Vec<u32>,
    powers: Vec<f64>,
) -> Result<AllocationPlan, AllocError> {
    let achieved_throughput = f3_throughput(alpha, &rb_counts, &s.comms, &s.candidates)?;
    let achieved_energy = f4_energy(alpha, &powers, &s.comms, &s.candidates)?;
    Ok(AllocationPlan {
        rb_counts,
        powers,
        achieved_throughput,
        achieved_energy,
        feasible: true,
    })
}

/// Exact optimum with the power budget split equally.
pub fn allocate(
    s: &Scenario,
    alpha: &SelectionVector,
    weights: &ObjectiveWeights,
) -> Result<AllocationPlan, AllocError> {
    allocate_with_power(s, alpha, weights, PowerSplit::Equal)
}

pub fn allocate_with_power(
    s: &Scenario,
    alpha: &SelectionVector,
    weights: &ObjectiveWeights,
    split: PowerSplit,
) -> Result<AllocationPlan, AllocError> {
    check_selection(s, alpha)?;
    let eligible = eligible_helpers(s, alpha);
    if eligible.is_empty() {
        return Ok(AllocationPlan::infeasible(s.n_candidates()));
    }
    let per_block = |i: usize| {
        weights.k3 * s.comms.channel_rate * (1.0 - s.candidates[i].packet_error_prob)
    };
    let winner = argmax_first(&eligible, per_block);
    let mut rb_counts = vec![0; s.n_candidates()];
    rb_counts[winner] = s.comms.total_rb_count;
    let powers = powers_for(s, &eligible, split, weights);
    finish(s, alpha, rb_counts, powers)
}

/// Blocks shared in proportion to `1 - β_i`, rounded by largest remainder
/// (ties to the lower index).
pub fn allocate_proportional(s: &Scenario, alpha: &SelectionVector) -> Result<AllocationPlan, AllocError> {
    check_selection(s, alpha)?;
    let eligible = eligible_helpers(s, alpha);
    if eligible.is_empty() {
        return Ok(AllocationPlan::infeasible(s.n_candidates()));
    }
    let total = s.comms.total_rb_count;
    let weights: Vec<f64> = eligible
        .iter()
        .map(|&i| 1.0 - s.candidates[i].packet_error_prob)
        .collect();
    let sum: f64 = weights.iter().sum();
    let shares: Vec<f64> = weights.iter().map(|w| w / sum * total as f64).collect();
    let mut counts: Vec<u32> = shares.iter().map(|x| x.floor() as u32).collect();
    let assigned: u32 = counts.iter().sum();
    let mut order: Vec<usize> = (0..eligible.len()).collect();
    order.sort_by(|&a, &b| {
        let fa = shares[a] - shares[a].floor();
        let fb = shares[b] - shares[b].floor();
        fb.total_cmp(&fa).then(a.cmp(&b))
    });
    for &k in order.iter().cycle().take(total.saturating_sub(assigned) as usize) {
        counts[k] += 1;
    }
    let mut rb_counts = vec![0; s.n_candidates()];
    for (k, &i) in eligible.iter().enumerate() {
        rb_counts[i] = counts[k];
    }
    let powers = powers_for(s, &eligible, PowerSplit::Equal, &ObjectiveWeights::default());
    finish(s, alpha, rb_counts, powers)
}

/// Uniform split (remainder to the lowest indices) or a uniformly random
/// composition of the pool.
pub fn allocate_baseline(
    s: &Scenario,
    alpha: &SelectionVector,
    policy: BaselineAllocation,
    seed: u64,
) -> Result<AllocationPlan, AllocError> {
    check_selection(s, alpha)?;
    let eligible = eligible_helpers(s, alpha);
    if eligible.is_empty() {
        return Ok(AllocationPlan::infeasible(s.n_candidates()));
    }
    let total = s.comms.total_rb_count;
    let k = eligible.len() as u32;
    let counts: Vec<u32> = match policy {
        BaselineAllocation::Uniform => (0..k)
            .map(|j| total / k + u32::from(j < total % k))
            .collect(),
        BaselineAllocation::Random => {
            let mut rng = stream_rng(seed, streams::ALLOCATION);
            random_composition(total, eligible.len(), &mut rng)
        }
    };
    let mut rb_counts = vec![0; s.n_candidates()];
    for (&i, c) in eligible.iter().zip(counts) {
        rb_counts[i] = c;
    }
    let powers = powers_for(s, &eligible, PowerSplit::Equal, &ObjectiveWeights::default());
    finish(s, alpha, rb_counts, powers)
}

/// Uniformly random way of writing `total` as an ordered sum of `parts`
/// nonnegative integers (stars and bars).
pub fn random_composition<R: Rng + ?Sized>(total: u32, parts: usize, rng: &mut R) -> Vec<u32> {
    if parts == 1 {
        return vec![total];
    }
    let slots = total as usize + parts - 1;
    let mut bars = index::sample(rng, slots, parts - 1).into_vec();
    bars.sort_unstable();
    let mut out = Vec::with_capacity(parts);
    let mut prev = 0usize;
    for &b in &bars {
        out.push((b - prev) as u32);
        prev = b + 1;
    }
    out.push((slots - prev) as u32);
    out
}

pub fn allocate_policy(
    s: &Scenario,
    alpha: &SelectionVector,
    weights: &ObjectiveWeights,
    policy: AllocationPolicy,
    seed: u64,
) -> Result<AllocationPlan, AllocError> {
    match policy {
        AllocationPolicy::Optimal => allocate(s, alpha, weights),
        AllocationPolicy::Proportional => allocate_proportional(s, alpha),
        AllocationPolicy::Uniform => allocate_baseline(s, alpha, BaselineAllocation::Uniform, seed),
        AllocationPolicy::Random => allocate_baseline(s, alpha, BaselineAllocation::Random, seed),
    }
}

/// Genetic search over block assignments, kept to cross-check the closed
/// form. Each gene assigns one block to one eligible helper, so every
/// genome spends the whole pool.
pub fn allocate_ga(
    s: &Scenario,
    alpha: &SelectionVector,
    weights: &ObjectiveWeights,
    cfg: &GaConfig,
) -> Result<AllocationPlan, AllocError> {
    cfg.check().map_err(|e| AllocError::Config(e.to_string()))?;
    check_selection(s, alpha)?;
    let eligible = eligible_helpers(s, alpha);
    if eligible.is_empty() {
        return Ok(AllocationPlan::infeasible(s.n_candidates()));
    }
    let genes = s.comms.total_rb_count as usize;
    let k = eligible.len();
    let powers = powers_for(s, &eligible, PowerSplit::Equal, weights);
    let mut rng = stream_rng(cfg.seed, streams::ALLOCATION);
    let mutation = cfg.mutation_prob.unwrap_or(1.0 / genes as f64);

    let decode = |genome: &[usize]| {
        let mut counts = vec![0u32; s.n_candidates()];
        for &g in genome {
            counts[eligible[g]] += 1;
        }
        counts
    };
    let score = |genome: &[usize]| -> Result<f64, AllocError> {
        let plan = finish(s, alpha, decode(genome), powers.clone())?;
        Ok(plan.objective(weights))
    };

    let mut population: Vec<Vec<usize>> = (0..cfg.population_size)
        .map(|_| (0..genes).map(|_| rng.random_range(0..k)).collect())
        .collect();
    let mut fitness = population
        .iter()
        .map(|g| score(g))
        .collect::<Result<Vec<_>, _>>()?;

    for _ in 0..cfg.generations {
        let mut order: Vec<usize> = (0..population.len()).collect();
        order.sort_by(|&a, &b| fitness[b].total_cmp(&fitness[a]).then(a.cmp(&b)));
        let mut next: Vec<Vec<usize>> = order[..cfg.elitism_count]
            .iter()
            .map(|&i| population[i].clone())
            .collect();
        let mut next_fitness: Vec<f64> = order[..cfg.elitism_count].iter().map(|&i| fitness[i]).collect();
        while next.len() < cfg.population_size {
            let mut pick = || {
                let mut best = rng.random_range(0..population.len());
                for _ in 1..cfg.tournament_size {
                    let c = rng.random_range(0..population.len());
                    if fitness[c] > fitness[best] {
                        best = c;
                    }
                }
                best
            };
            let (p1, p2) = (pick(), pick());
            let mut child = population[p1].clone();
            if rng.random_bool(cfg.crossover_prob) {
                for (g, other) in child.iter_mut().zip(&population[p2]) {
                    if rng.random_bool(0.5) {
                        *g = *other;
                    }
                }
            }
            for g in child.iter_mut() {
                if rng.random_bool(mutation) {
                    *g = rng.random_range(0..k);
                }
            }
            next_fitness.push(score(&child)?);
            next.push(child);
        }
        population = next;
        fitness = next_fitness;
    }

    let best = (0..population.len())
        .max_by(|&a, &b| fitness[a].total_cmp(&fitness[b]).then(b.cmp(&a)))
        .expect("nonempty population");
    finish(s, alpha, decode(&population[best]), powers)
}

/// How a sweep value `g` worsens every link.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BetaSweep {
    /// An extra independent erasure with probability `g` in front of each
    /// link: `1 - β' = (1 - g)(1 - β)`. Valid for every `g` in `[0, 1)`.
    #[default]
    Erasure,
    /// `β' = β + g`; fails once any link reaches 1.
    Additive,
}

impl BetaSweep {
    pub fn apply(self, beta: f64, g: f64) -> f64 {
        match self {
            BetaSweep::Erasure => 1.0 - (1.0 - g) * (1.0 - beta),
            BetaSweep::Additive => beta + g,
        }
    }
}

/// One point of an error sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub policy: AllocationPolicy,
    /// Sweep value applied to every helper's packet error probability.
    pub beta_param: f64,
    pub throughput_bps: f64,
    pub energy_w: f64,
}

/// Re-evaluates the optimal, uniform and random plans as every packet error
/// probability is worsened by each grid value. Rows are grouped by policy,
/// in grid order within a policy. The random plan reuses `seed` at every
/// grid point, so the same composition is priced along the whole curve.
pub fn sweep_error(
    s: &Scenario,
    alpha: &SelectionVector,
    weights: &ObjectiveWeights,
    beta_grid: &[f64],
    mode: BetaSweep,
    seed: u64,
) -> Result<Vec<SweepRow>, AllocError> {
    check_selection(s, alpha)?;
    let shifted: Vec<Scenario> = beta_grid
        .iter()
        .map(|&shift| {
            for (index, v) in s.candidates.iter().enumerate() {
                let b = mode.apply(v.packet_error_prob, shift);
                if !(0.0..=1.0).contains(&shift) || !(0.0..1.0).contains(&b) {
                    return Err(AllocError::BetaShiftOutOfRange { shift, index });
                }
            }
            Ok(s.map_betas(|b| mode.apply(b, shift)))
        })
        .collect::<Result<_, _>>()?;

    let mut rows = Vec::with_capacity(AllocationPolicy::SWEPT.len() * beta_grid.len());
    for policy in AllocationPolicy::SWEPT {
        for (shift, scenario) in beta_grid.iter().zip(&shifted) {
            let plan = allocate_policy(scenario, alpha, weights, policy, seed)?;
            rows.push(SweepRow {
                policy,
                beta_param: *shift,
                throughput_bps: plan.achieved_throughput,
                energy_w: plan.achieved_energy,
            });
        }
    }
    Ok(rows)
}
