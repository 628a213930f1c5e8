//! Acceptance gate. Runs every criterion, prints one PASS/FAIL line each,
//! and exits nonzero if any failed. Tolerances and sample sizes are fixed
//! here and nowhere else.

use std::time::{Duration, Instant};

use rand::Rng;
use statrs::distribution::{Binomial, DiscreteCDF};

use coopsel::allocator::{
    allocate, allocate_baseline, eligible_helpers, AllocationPlan, AllocationPolicy,
    BaselineAllocation,
};
use coopsel::comms::{sample_delay, sample_transmissions};
use coopsel::fusion::{
    degrade, fuse_all, fuse_iou_max, metrics, score, synthesize_frame, BoundingBox, DetectionSet,
    FixtureConfig, Matching,
};
use coopsel::harness::{
    allocation_records, bench, fusion_records, run_allocation_experiment, ExperimentConfig,
    EGO_ONLY,
};
use coopsel::objectives::{f1_visual_range, SelectionVector};
use coopsel::rng::{derive_seed, stream_rng};
use coopsel::scenario::{generate_scenario, Scenario, ScenarioConfig, Vehicle};
use coopsel::selector::{
    select_baseline, select_ga, select_oracle, BaselinePolicy, GaConfig, ObjectiveWeights,
};

const N: usize = 10;
const M: usize = 3;
const SCENARIOS: usize = 100;

/// One-sided sign test at this significance.
const SIGN_TEST_ALPHA: f64 = 0.05;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn scenario(base: u64, k: usize) -> Scenario {
    generate_scenario(derive_seed(base, k as u64), N, &ScenarioConfig::default()).unwrap()
}

/// P(X >= wins) for X ~ Bin(wins + losses, 1/2); ties are discarded.
fn sign_test_p(wins: usize, losses: usize) -> f64 {
    let n = (wins + losses) as u64;
    if n == 0 || wins == 0 {
        return 1.0;
    }
    let b = Binomial::new(0.5, n).unwrap();
    1.0 - b.cdf(wins as u64 - 1)
}

fn paired_signs(a: &[f64], b: &[f64]) -> (usize, usize) {
    let wins = a.iter().zip(b).filter(|(x, y)| x > y).count();
    let losses = a.iter().zip(b).filter(|(x, y)| x < y).count();
    (wins, losses)
}

// ---------------------------------------------------------------------------
// Independent re-derivations used as oracles.

/// Pulse boundaries straight from the geometry: each candidate sees up to
/// the next candidate or the visibility threshold, whichever comes first.
fn oracle_pulses(s: &Scenario) -> Vec<(f64, f64)> {
    let c = s.environment.road_angle.cos();
    let t = s.environment.visibility_threshold;
    let starts: Vec<f64> = s.candidates.iter().map(|v| (v.position_x - s.ego.position_x) * c).collect();
    (0..starts.len())
        .map(|i| {
            let end = match starts.get(i + 1) {
                Some(next) => (starts[i] + t).min(*next),
                None => starts[i] + t,
            };
            (starts[i], end.max(starts[i]))
        })
        .collect()
}

fn oracle_blur(v: &Vehicle, s: &Scenario) -> f64 {
    let c = &s.camera;
    let vt = v.speed * c.exposure_time;
    let (sn, cs) = c.motion_angle.sin_cos();
    vt * (c.focal_length * cs - c.ccd_pixel_size * c.object_start_px * sn)
        / (vt * c.ccd_pixel_size * sn + c.depth * c.pixel_pitch)
}

fn oracle_single_f1(s: &Scenario, i: usize) -> f64 {
    let a = s.environment.decay_rate;
    let (lo, hi) = oracle_pulses(s)[i];
    ((-a * lo).exp() - (-a * hi).exp()) / a
}

/// Brute-force step-one optimum: every mask with at most M ones.
fn oracle_selection(s: &Scenario, w: &ObjectiveWeights) -> (u64, f64, usize) {
    let n = s.n_candidates();
    let f1: Vec<f64> = (0..n).map(|i| oracle_single_f1(s, i)).collect();
    let f2: Vec<f64> = s.candidates.iter().map(|v| oracle_blur(v, s)).collect();
    let s1 = f1.iter().cloned().fold(0.0, f64::max);
    let s2 = f2.iter().cloned().fold(0.0, f64::max);
    let mut best = (0u64, 0.0f64);
    let mut masks = 0;
    for bits in 0u64..(1 << n) {
        if bits.count_ones() as usize > s.max_helpers {
            continue;
        }
        masks += 1;
        let v: f64 = (0..n)
            .filter(|i| bits >> i & 1 == 1)
            .map(|i| w.k1 * f1[i] / s1 + w.k2 * f2[i] / s2)
            .sum();
        if v > best.1 + 1e-12 || bits == 0 {
            best = (bits, v);
        }
    }
    (best.0, best.1, masks)
}

fn mask_bits(alpha: &SelectionVector) -> u64 {
    alpha.indices().map(|i| 1u64 << i).sum()
}

// ---------------------------------------------------------------------------

/// GA matches the exhaustive optimum on at least 99 of 100 scenarios, with
/// the whole batch under 10 s.
fn criterion_1() -> Outcome {
    const REQUIRED: usize = 99;
    const BUDGET: Duration = Duration::from_secs(10);
    let w = ObjectiveWeights::default();
    let mut matches = 0;
    let mut oracle_agrees = 0;
    let mut enumerated = 0;
    let mut elapsed = Duration::ZERO;
    for k in 0..SCENARIOS {
        let s = scenario(1, k);
        let seed = derive_seed(1, k as u64);
        let t = Instant::now();
        let ga = select_ga(&s, w, &GaConfig { seed, ..Default::default() }).unwrap();
        let exact = select_oracle(&s, w).unwrap();
        elapsed += t.elapsed();
        if ga.objective_value == exact.objective_value {
            matches += 1;
        }
        let (bits, value, masks) = oracle_selection(&s, &w);
        enumerated = enumerated.max(masks);
        if bits == mask_bits(&exact.alpha) && (value - exact.objective_value).abs() <= 1e-12 * value.abs().max(1.0) {
            oracle_agrees += 1;
        }
    }
    outcome(
        matches >= REQUIRED && oracle_agrees == SCENARIOS && enumerated == 176 && elapsed < BUDGET,
        format!(
            "GA = optimum on {matches}/{SCENARIOS} (need {REQUIRED}); library oracle agrees with test oracle on {oracle_agrees}/{SCENARIOS}; {enumerated} masks; {:.2} s (budget {} s)",
            elapsed.as_secs_f64(),
            BUDGET.as_secs()
        ),
    )
}

/// Optimal selection beats every baseline's f1 on at least 95 of 100
/// scenarios (each baseline counted separately); the slowest-car baseline
/// has the least blur of all baselines on every scenario.
fn criterion_2() -> Outcome {
    const REQUIRED: usize = 95;
    const RANDOM_DRAWS: u64 = 100;
    let w = ObjectiveWeights::default();
    let names = ["random", "closest", "farthest", "slowest"];
    let mut wins = [0usize; 4];
    let mut all_four = 0;
    let mut slowest_min_blur = 0;
    for k in 0..SCENARIOS {
        let s = scenario(2, k);
        let seed = derive_seed(2, k as u64);
        let best = select_oracle(&s, w).unwrap();
        let (mut rf1, mut rf2) = (0.0, 0.0);
        for d in 0..RANDOM_DRAWS {
            let r = select_baseline(&s, w, BaselinePolicy::Random, derive_seed(seed, d)).unwrap();
            rf1 += r.f1;
            rf2 += r.f2;
        }
        let fixed: Vec<_> = [BaselinePolicy::Closest, BaselinePolicy::Farthest, BaselinePolicy::Slowest]
            .into_iter()
            .map(|p| select_baseline(&s, w, p, seed).unwrap())
            .collect();
        let f1 = [rf1 / RANDOM_DRAWS as f64, fixed[0].f1, fixed[1].f1, fixed[2].f1];
        let f2 = [rf2 / RANDOM_DRAWS as f64, fixed[0].f2, fixed[1].f2, fixed[2].f2];
        let beats: Vec<bool> = f1.iter().map(|&b| best.f1 > b).collect();
        for (c, &b) in wins.iter_mut().zip(&beats) {
            *c += b as usize;
        }
        all_four += beats.iter().all(|&b| b) as usize;
        // Independent check: the M slowest blur values are the M smallest.
        let mut blurs: Vec<f64> = s.candidates.iter().map(|v| oracle_blur(v, &s)).collect();
        blurs.sort_by(f64::total_cmp);
        let least: f64 = blurs[..M].iter().sum();
        let slowest_ok = f2.iter().all(|&x| f2[3] <= x) && (f2[3] - least).abs() <= 1e-12 * least;
        slowest_min_blur += slowest_ok as usize;
    }
    let per: Vec<String> = names.iter().zip(&wins).map(|(n, w)| format!("{n} {w}")).collect();
    outcome(
        wins.iter().all(|&w| w >= REQUIRED) && slowest_min_blur == SCENARIOS,
        format!(
            "optimal f1 > baseline on [{}]/{SCENARIOS} (need {REQUIRED} each; all four at once {all_four}); slowest least blur {slowest_min_blur}/{SCENARIOS}",
            per.join(", ")
        ),
    )
}

/// All integer compositions of `total` into `parts` nonnegative counts.
fn compositions(total: u32, parts: usize, out: &mut Vec<Vec<u32>>, cur: &mut Vec<u32>) {
    if parts == 1 {
        cur.push(total);
        out.push(cur.clone());
        cur.pop();
        return;
    }
    for x in 0..=total {
        cur.push(x);
        compositions(total - x, parts - 1, out, cur);
        cur.pop();
    }
}

fn oracle_plan_value(s: &Scenario, w: &ObjectiveWeights, funded: &[usize], blocks: &[u32], powers: &[f64]) -> (f64, f64) {
    let r = s.comms.channel_rate;
    let thr: f64 = funded.iter().zip(blocks).map(|(&i, &b)| r * (1.0 - s.candidates[i].packet_error_prob) * b as f64).sum();
    let energy: f64 = funded.iter().zip(powers).map(|(&i, &p)| p / (r * (1.0 - s.candidates[i].packet_error_prob))).sum();
    (w.k3 * thr + w.k4 * energy, thr)
}

/// Exact allocation dominates uniform and random pointwise on a 10-point
/// grid, every curve is monotone, and the closed form equals exhaustive
/// enumeration for pools up to 20 blocks and up to 4 helpers.
fn criterion_3() -> Outcome {
    const REL: f64 = 1e-9;
    let cfg = ExperimentConfig {
        repetitions: SCENARIOS,
        seed: 3,
        ..Default::default()
    };
    let grid_points = cfg.beta_grid.len();
    let mut violations = Vec::new();

    // Per-scenario curves, then the batch means.
    let per = allocation_records(&cfg).unwrap();
    let mean = run_allocation_experiment(&cfg).unwrap();
    for (label, rows) in per.iter().map(|r| ("scenario", r.as_slice())).chain(std::iter::once(("mean", mean.as_slice()))) {
        let curve = |p: AllocationPolicy| rows.iter().filter(|r| r.policy == p).collect::<Vec<_>>();
        let opt = curve(AllocationPolicy::Optimal);
        for other in [AllocationPolicy::Uniform, AllocationPolicy::Random] {
            for (o, x) in opt.iter().zip(curve(other)) {
                if o.throughput_bps < x.throughput_bps * (1.0 - REL) {
                    violations.push(format!("{label}: optimal < {other} at {}", o.beta_param));
                }
            }
        }
        for p in AllocationPolicy::SWEPT {
            let c = curve(p);
            if c.len() != grid_points {
                violations.push(format!("{label}: {p} has {} points", c.len()));
            }
            for pair in c.windows(2) {
                if pair[1].throughput_bps > pair[0].throughput_bps * (1.0 + REL) {
                    violations.push(format!("{label}: {p} throughput rises at {}", pair[1].beta_param));
                }
                if pair[1].energy_w < pair[0].energy_w * (1.0 - REL) {
                    violations.push(format!("{label}: {p} energy falls at {}", pair[1].beta_param));
                }
            }
        }
    }

    // Enumeration oracle on small pools.
    let w = ObjectiveWeights::default();
    let mut checked = 0;
    let mut rng = stream_rng(33, 0);
    for case in 0..200u64 {
        let helpers = 1 + (case as usize % 4);
        let total = 1 + (case % 20) as u32;
        let mut s = generate_scenario(
            derive_seed(33, case),
            6,
            &ScenarioConfig {
                max_helpers: 4,
                ..Default::default()
            },
        )
        .unwrap();
        s.comms.total_rb_count = total;
        let picks = rand::seq::index::sample(&mut rng, 6, helpers).into_vec();
        let alpha = SelectionVector::from_indices(6, &picks);
        let plan = allocate(&s, &alpha, &w).unwrap();
        let funded = eligible_helpers(&s, &alpha);
        if funded.is_empty() {
            if plan.feasible {
                violations.push(format!("case {case}: feasible plan without eligible helpers"));
            }
            continue;
        }
        let powers: Vec<f64> = funded.iter().map(|&i| plan.powers[i]).collect();
        let mut all = Vec::new();
        compositions(total, funded.len(), &mut all, &mut Vec::new());
        let (best_value, best_thr) = all
            .iter()
            .map(|c| oracle_plan_value(&s, &w, &funded, c, &powers))
            .fold((f64::NEG_INFINITY, f64::NEG_INFINITY), |a, b| (a.0.max(b.0), a.1.max(b.1)));
        let value = plan.objective(&w);
        if (value - best_value).abs() > REL * best_value.abs().max(1.0) || (plan.achieved_throughput - best_thr).abs() > REL * best_thr {
            violations.push(format!("case {case}: {value} vs enumerated {best_value}"));
        }
        let others: Vec<AllocationPlan> = [BaselineAllocation::Uniform, BaselineAllocation::Random]
            .into_iter()
            .map(|b| allocate_baseline(&s, &alpha, b, case).unwrap())
            .collect();
        if others.iter().any(|o| o.achieved_throughput > plan.achieved_throughput * (1.0 + REL)) {
            violations.push(format!("case {case}: a baseline beats the optimum"));
        }
        checked += 1;
    }

    outcome(
        violations.is_empty(),
        format!(
            "{SCENARIOS} scenarios x {grid_points} grid points, {checked} enumeration cases (B <= 20, <= 4 helpers), {} violations{}",
            violations.len(),
            violations.first().map(|v| format!(", first: {v}")).unwrap_or_default()
        ),
    )
}

/// Trapezoid rule with step at most `h` over each interval of the union of
/// the selected pulses.
fn trapezoid_f1(s: &Scenario, alpha: &SelectionVector, h: f64) -> f64 {
    let a = s.environment.decay_rate;
    let pulses = oracle_pulses(s);
    let mut spans: Vec<(f64, f64)> = alpha.indices().map(|i| pulses[i]).filter(|(lo, hi)| hi > lo).collect();
    spans.sort_by(|x, y| x.0.total_cmp(&y.0));
    let mut merged: Vec<(f64, f64)> = Vec::new();
    for (lo, hi) in spans {
        match merged.last_mut() {
            Some(last) if lo <= last.1 => last.1 = last.1.max(hi),
            _ => merged.push((lo, hi)),
        }
    }
    merged
        .iter()
        .map(|&(lo, hi)| {
            let n = ((hi - lo) / h).ceil().max(1.0) as usize;
            let step = (hi - lo) / n as f64;
            let f = |x: f64| (-a * x).exp();
            let inner: f64 = (1..n).map(|j| f(lo + j as f64 * step)).sum();
            step * (0.5 * f(lo) + inner + 0.5 * f(hi))
        })
        .sum()
}

/// Closed forms against simulation and numerical integration.
fn criterion_4() -> Outcome {
    const DRAWS: usize = 1_000_000;
    const MC_REL: f64 = 0.01;
    const TRAPEZOID_STEP_M: f64 = 0.01;
    const TRAPEZOID_REL: f64 = 1e-4;
    let mut parts = Vec::new();
    let mut pass = true;

    let mut rng = stream_rng(4, 0);
    for beta in [0.1, 0.3, 0.5] {
        let mean = (0..DRAWS).map(|_| sample_transmissions(beta, &mut rng).unwrap() as f64).sum::<f64>() / DRAWS as f64;
        let expected = 1.0 / (1.0 - beta);
        let rel = (mean - expected).abs() / expected;
        pass &= rel < MC_REL;
        parts.push(format!("E[R] at {beta}: {rel:.1e}"));
    }

    let v = Vehicle {
        id: 1,
        position_x: 10.0,
        position_y: 0.0,
        speed: 10.0,
        packet_error_prob: 0.1,
        mean_delay: 0.05,
        tx_power: 0.2,
    };
    let mean = (0..DRAWS).map(|_| sample_delay(&v, &mut rng).unwrap()).sum::<f64>() / DRAWS as f64;
    let rel = (mean - v.mean_delay).abs() / v.mean_delay;
    pass &= rel < MC_REL;
    parts.push(format!("delay mean: {rel:.1e}"));

    let mut worst: f64 = 0.0;
    for k in 0..20 {
        let cfg = ScenarioConfig {
            road_angle: rng.random_range(0.0..0.5),
            ..Default::default()
        };
        let s = generate_scenario(derive_seed(4, k), N, &cfg).unwrap();
        let count = rng.random_range(1..=M);
        let picks = rand::seq::index::sample(&mut rng, N, count).into_vec();
        let alpha = SelectionVector::from_indices(N, &picks);
        let closed = f1_visual_range(&alpha, &s).unwrap();
        let numeric = trapezoid_f1(&s, &alpha, TRAPEZOID_STEP_M);
        worst = worst.max((closed - numeric).abs() / numeric);
    }
    pass &= worst < TRAPEZOID_REL;
    parts.push(format!("f1 vs trapezoid on 20 scenarios: worst {worst:.1e}"));

    outcome(pass, format!("{} (tolerances {MC_REL} and {TRAPEZOID_REL})", parts.join("; ")))
}

fn oracle_iou(a: &BoundingBox, b: &BoundingBox) -> f64 {
    let ix = (a.x_max.min(b.x_max) - a.x_min.max(b.x_min)).max(0.0);
    let iy = (a.y_max.min(b.y_max) - a.y_min.max(b.y_min)).max(0.0);
    let inter = ix * iy;
    let union = (a.x_max - a.x_min) * (a.y_max - a.y_min) + (b.x_max - b.x_min) * (b.y_max - b.y_min) - inter;
    inter / union
}

fn random_box<R: Rng>(rng: &mut R, id: Option<u32>) -> BoundingBox {
    let x = rng.random_range(0.0..100.0);
    let y = rng.random_range(0.0..100.0);
    let w = rng.random_range(1.0..30.0);
    let h = rng.random_range(1.0..30.0);
    BoundingBox::new(x, y, x + w, y + h, rng.random_range(0.0..=1.0), id).unwrap()
}

fn random_pair<R: Rng>(rng: &mut R) -> (DetectionSet, DetectionSet) {
    let objects = rng.random_range(1..=5u32);
    let gt: Vec<BoundingBox> = (0..objects).map(|i| random_box(rng, Some(i))).collect();
    let mut side = |vehicle_id| {
        let count = rng.random_range(0..8);
        let predictions = (0..count)
            .map(|_| {
                let id = rng.random_bool(0.8).then(|| rng.random_range(0..objects));
                // Mostly near their object, so IoUs are spread over (0, 1].
                match id {
                    Some(i) if rng.random_bool(0.7) => {
                        let g = gt[i as usize];
                        let dx = rng.random_range(-5.0..5.0);
                        let dy = rng.random_range(-5.0..5.0);
                        BoundingBox::new(g.x_min + dx, g.y_min + dy, g.x_max + dx, g.y_max + dy, rng.random_range(0.0..=1.0), id).unwrap()
                    }
                    _ => random_box(rng, id),
                }
            })
            .collect();
        DetectionSet {
            vehicle_id,
            ground_truth: gt.clone(),
            predictions,
        }
    };
    let ego = side(0);
    let helper = side(1);
    (ego, helper)
}

/// Per-object best IoU recomputed from scratch.
fn oracle_best(set: &DetectionSet) -> Vec<f64> {
    set.ground_truth
        .iter()
        .map(|g| {
            set.predictions
                .iter()
                .filter(|p| p.object_id == g.object_id)
                .map(|p| oracle_iou(p, g))
                .fold(0.0, f64::max)
        })
        .collect()
}

/// Fusion laws on random box pairs, recall monotone in loss rate, helpers
/// never lower the ego's IoU, and the policy ordering under channel errors.
fn criterion_5() -> Outcome {
    const PAIRS: usize = 10_000;
    const ORACLE_REL: f64 = 1e-12;
    const RECALL_FRAMES: usize = 200;
    const ORDERING_SCENARIOS: usize = 1000;
    let mut notes = Vec::new();
    let mut pass = true;

    // Laws on random pairs.
    let mut rng = stream_rng(5, 0);
    let (mut max_ok, mut comm_ok, mut idem_ok, mut oracle_ok) = (0, 0, 0, 0);
    for _ in 0..PAIRS {
        let (e, h) = random_pair(&mut rng);
        let fused = fuse_iou_max(&e, &h).unwrap();
        let se = score(&e, Matching::ObjectId).unwrap();
        let sh = score(&h, Matching::ObjectId).unwrap();
        max_ok += fused.scores.iter().zip(&se.scores).zip(&sh.scores).all(|((f, a), b)| f.iou == a.iou.max(b.iou)) as usize;
        comm_ok += (fused == fuse_iou_max(&h, &e).unwrap()) as usize;
        idem_ok += (fuse_iou_max(&e, &e).unwrap() == se) as usize;
        let close = |lib: &[f64], ours: &[f64]| lib.iter().zip(ours).all(|(x, y)| (x - y).abs() <= ORACLE_REL * y.max(1e-300));
        oracle_ok += (close(&se.ious(), &oracle_best(&e)) && close(&sh.ious(), &oracle_best(&h))) as usize;
    }
    pass &= max_ok == PAIRS && comm_ok == PAIRS && idem_ok == PAIRS && oracle_ok == PAIRS;
    notes.push(format!("max {max_ok}, commutative {comm_ok}, idempotent {idem_ok}, oracle IoU {oracle_ok} of {PAIRS}"));

    // Recall falls as loss grows: independent drops per loss rate, paired by
    // frame, one-sided sign test between neighbouring rates.
    let betas = [0.0, 0.2, 0.4, 0.6, 0.8];
    let fixture = FixtureConfig::default();
    let mut recalls = vec![Vec::with_capacity(RECALL_FRAMES); betas.len()];
    for f in 0..RECALL_FRAMES {
        let s = scenario(50, f);
        let frame = synthesize_frame(&s, &fixture, derive_seed(50, f as u64)).unwrap();
        for (j, &beta) in betas.iter().enumerate() {
            let mut drop_rng = stream_rng(derive_seed(51 + j as u64, f as u64), 0);
            let got: Vec<DetectionSet> = frame.helpers.iter().map(|h| degrade(h, beta, &mut drop_rng).unwrap()).collect();
            let fused = fuse_all(std::iter::once(&frame.ego).chain(&got)).unwrap().unwrap();
            recalls[j].push(metrics(&fused, 0.5).unwrap().recall);
        }
    }
    let mut worst_p: f64 = 0.0;
    for j in 0..betas.len() - 1 {
        let (down, up) = paired_signs(&recalls[j], &recalls[j + 1]);
        let p = sign_test_p(down, up);
        worst_p = worst_p.max(p);
        notes.push(format!("recall {}->{}: {down} down/{up} up", betas[j], betas[j + 1]));
    }
    pass &= worst_p < SIGN_TEST_ALPHA;

    // Policy ordering with channel errors, over many paired scenarios.
    let cfg = ExperimentConfig {
        repetitions: ORDERING_SCENARIOS,
        seed: 55,
        policies: vec![
            coopsel::selector::SelectionMethod::Ga,
            coopsel::selector::SelectionMethod::Random,
            coopsel::selector::SelectionMethod::Closest,
        ],
        channel_errors: true,
        ..Default::default()
    };
    let records = fusion_records(&cfg).unwrap();
    let col = |p: &str| records.iter().filter(|r| r.policy == p).map(|r| r.mean_iou).collect::<Vec<_>>();
    let (ego, ga, random, closest) = (col(EGO_ONLY), col("ga"), col("random"), col("closest"));
    let never_below_ego = [&ga, &random, &closest].iter().all(|c| c.iter().zip(&ego).all(|(x, e)| x >= e));
    pass &= never_below_ego;
    for (name, a, b) in [("ga>random", &ga, &random), ("random>closest", &random, &closest), ("ga>closest", &ga, &closest)] {
        let (w, l) = paired_signs(a, b);
        let p = sign_test_p(w, l);
        pass &= p < SIGN_TEST_ALPHA;
        notes.push(format!("{name} {w}/{l} p={p:.1e}"));
    }
    notes.push(format!("helper never below ego: {never_below_ego}"));
    outcome(pass, notes.join("; "))
}

/// `bench` output is byte-identical across runs and worker counts.
fn criterion_6() -> Outcome {
    let dirs: Vec<_> = (0..3).map(|_| tempfile::tempdir().unwrap()).collect();
    let cfg = |workers| ExperimentConfig {
        seed: 6,
        workers: Some(workers),
        ..Default::default()
    };
    let runs = [
        bench(&cfg(1), dirs[0].path()).unwrap(),
        bench(&cfg(1), dirs[1].path()).unwrap(),
        bench(&cfg(4), dirs[2].path()).unwrap(),
    ];
    let mut identical = 0;
    let mut files = 0;
    for (i, path) in runs[0].paths().iter().enumerate() {
        let first = std::fs::read(path).unwrap();
        files += 1;
        let same = runs[1..].iter().all(|r| std::fs::read(r.paths()[i]).unwrap() == first);
        identical += same as usize;
    }
    outcome(
        identical == files,
        format!("{identical}/{files} files identical over 2 runs with 1 worker and 1 run with 4"),
    )
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 6] = [
        ("1 oracle equivalence", criterion_1),
        ("2 selection dominance", criterion_2),
        ("3 allocation dominance and monotonicity", criterion_3),
        ("4 closed-form checks", criterion_4),
        ("5 fusion properties", criterion_5),
        ("6 determinism", criterion_6),
    ];
    let mut failed = 0;
    for (name, run) in criteria {
        let t = Instant::now();
        let o = run();
        let verdict = if o.pass { "PASS" } else { "FAIL" };
        println!("[{verdict}] criterion {name}: {} ({:.1} s)", o.detail, t.elapsed().as_secs_f64());
        failed += (!o.pass) as usize;
    }
    if failed > 0 {
        println!("{failed} criterion/criteria failed");
        std::process::exit(1);
    }
}
