//! Seeded batch experiments.
//!
//! Scenario `k` of a batch is drawn from `derive_seed(seed, k)`. Scenarios
//! are independent, so they run on a worker pool; results are collected in
//! scenario order and reduced sequentially, which keeps every number (and
//! every byte of CSV) independent of the worker count.

use std::fs::File;
use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::allocator::{sweep_error, AllocError, BetaSweep, SweepRow};
use crate::fusion::{
    degrade, fuse_all, metrics, read_detections, synthesize_frame, write_detections, DetectionSet,
    FixtureConfig, Frame, FusionError,
};
use crate::objectives::SelectionVector;
use crate::rng::{derive_seed, stream_rng, streams};
use crate::scenario::{generate_scenario, Scenario, ScenarioConfig, ScenarioError};
use crate::selector::{
    select_baseline, select_ga, select_oracle, BaselinePolicy, GaConfig, ObjectiveWeights,
    SelectError, SelectionMethod, SelectionResult,
};

/// Environment variable naming the directory searched for config files.
pub const CONFIG_DIR_ENV: &str = "COOPSEL_CONFIG_DIR";

/// File looked up in the config directory when no config is given.
pub const DEFAULT_CONFIG_FILE: &str = "coopsel.toml";

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Select(#[from] SelectError),
    #[error(transparent)]
    Alloc(#[from] AllocError),
    #[error(transparent)]
    Fusion(#[from] FusionError),
    #[error("infeasible experiment: {0}")]
    Infeasible(String),
    #[error("missing detection fixture {}", .path.display())]
    MissingFixture { path: PathBuf },
    #[error("{}: {source}", .path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{}: {message}", .path.display())]
    Csv { path: PathBuf, message: String },
}

impl HarnessError {
    /// Process exit code: 1 configuration, 2 infeasible, 3 I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Infeasible(_) => 2,
            HarnessError::Alloc(AllocError::BetaShiftOutOfRange { .. }) => 2,
            HarnessError::Scenario(ScenarioError::Io { .. })
            | HarnessError::Fusion(FusionError::Io(_))
            | HarnessError::MissingFixture { .. }
            | HarnessError::Io { .. }
            | HarnessError::Csv { .. } => 3,
            _ => 1,
        }
    }

    fn io(path: &Path, source: std::io::Error) -> Self {
        HarnessError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

fn default_grid() -> Vec<f64> {
    (0..10).map(|i| i as f64 / 20.0).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub scenario: ScenarioConfig,
    pub n_candidates: usize,
    pub weights: ObjectiveWeights,
    pub ga: GaConfig,
    /// Selection policies compared by the selection and fusion experiments.
    pub policies: Vec<SelectionMethod>,
    /// Scenarios per batch.
    pub repetitions: usize,
    pub seed: u64,
    /// Draws averaged per scenario for the random policy.
    pub random_draws: usize,
    /// Selection whose helpers are handed to the allocator.
    pub allocation_selection: SelectionMethod,
    /// Values swept over every packet error probability in allocation
    /// sweeps, applied as `beta_sweep` says.
    pub beta_grid: Vec<f64>,
    pub beta_sweep: BetaSweep,
    pub fixture: FixtureConfig,
    /// Read detection frames from here instead of synthesizing them.
    pub fixtures_dir: Option<PathBuf>,
    pub iou_threshold: f64,
    /// Drop helper detections with each helper's packet error probability.
    pub channel_errors: bool,
    /// Worker threads; unset means one per core.
    pub workers: Option<usize>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            scenario: ScenarioConfig::default(),
            n_candidates: 10,
            weights: ObjectiveWeights::default(),
            ga: GaConfig::default(),
            policies: SelectionMethod::ALL.to_vec(),
            repetitions: 100,
            seed: 0,
            random_draws: 100,
            allocation_selection: SelectionMethod::Ga,
            beta_grid: default_grid(),
            beta_sweep: BetaSweep::Erasure,
            fixture: FixtureConfig::default(),
            fixtures_dir: None,
            iou_threshold: 0.5,
            channel_errors: true,
            workers: None,
        }
    }
}

impl ExperimentConfig {
    pub fn check(&self) -> Result<(), HarnessError> {
        let bad = |m: &str| Err(HarnessError::Config(m.to_string()));
        self.scenario.check()?;
        self.weights.check()?;
        self.ga.check()?;
        self.fixture.check().map_err(HarnessError::Config)?;
        if self.n_candidates == 0 {
            return bad("n_candidates must be at least 1");
        }
        if self.scenario.max_helpers > self.n_candidates {
            return bad("max_helpers exceeds n_candidates");
        }
        if self.repetitions == 0 {
            return bad("repetitions must be at least 1");
        }
        if self.policies.is_empty() {
            return bad("at least one policy must be enabled");
        }
        if self.random_draws == 0 {
            return bad("random_draws must be at least 1");
        }
        if !(self.iou_threshold > 0.0 && self.iou_threshold < 1.0) {
            return bad("iou_threshold must lie in (0, 1)");
        }
        if self.beta_grid.iter().any(|b| !b.is_finite()) {
            return bad("beta_grid values must be finite");
        }
        if self.workers == Some(0) {
            return bad("workers must be at least 1");
        }
        Ok(())
    }

    pub fn from_toml_str(text: &str) -> Result<Self, HarnessError> {
        let cfg: Self = toml::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))?;
        cfg.check()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        Self::from_toml_str(&text).map_err(|e| match e {
            HarnessError::Config(m) => HarnessError::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config always serializes")
    }

    /// Seed of scenario `k`.
    pub fn scenario_seed(&self, k: usize) -> u64 {
        derive_seed(self.seed, k as u64)
    }

    pub fn scenario(&self, k: usize) -> Result<Scenario, HarnessError> {
        Ok(generate_scenario(self.scenario_seed(k), self.n_candidates, &self.scenario)?)
    }

    fn pool(&self) -> Result<rayon::ThreadPool, HarnessError> {
        let mut b = rayon::ThreadPoolBuilder::new();
        if let Some(w) = self.workers {
            b = b.num_threads(w);
        }
        b.build().map_err(|e| HarnessError::Config(e.to_string()))
    }

    /// Runs `f` on every scenario index, in parallel, returning results in
    /// index order.
    fn per_scenario<T, F>(&self, f: F) -> Result<Vec<T>, HarnessError>
    where
        T: Send,
        F: Fn(usize) -> Result<T, HarnessError> + Sync + Send,
    {
        self.pool()?
            .install(|| (0..self.repetitions).into_par_iter().map(f).collect())
    }
}

/// Config file to use: an explicit path wins (looked up in `config_dir`
/// when it does not exist as given); otherwise the default file in
/// `config_dir`, if present.
pub fn resolve_config_path(explicit: Option<&Path>, config_dir: Option<&Path>) -> Option<PathBuf> {
    match (explicit, config_dir) {
        (Some(p), Some(dir)) if !p.exists() && p.is_relative() && dir.join(p).exists() => Some(dir.join(p)),
        (Some(p), _) => Some(p.to_path_buf()),
        (None, Some(dir)) => {
            let p = dir.join(DEFAULT_CONFIG_FILE);
            p.exists().then_some(p)
        }
        (None, None) => None,
    }
}

/// Runs one selection policy. The random policy uses `draw` to pick its
/// member of the per-scenario family.
pub fn run_policy(
    cfg: &ExperimentConfig,
    s: &Scenario,
    scenario_seed: u64,
    method: SelectionMethod,
    draw: usize,
) -> Result<SelectionResult, HarnessError> {
    let w = cfg.weights;
    Ok(match method {
        SelectionMethod::Ga => select_ga(
            s,
            w,
            &GaConfig {
                seed: scenario_seed,
                ..cfg.ga
            },
        )?,
        SelectionMethod::Oracle => select_oracle(s, w)?,
        SelectionMethod::Random => select_baseline(s, w, BaselinePolicy::Random, derive_seed(scenario_seed, draw as u64))?,
        other => select_baseline(s, w, other.baseline().expect("baseline policy"), scenario_seed)?,
    })
}

/// One policy on one scenario. Random-policy rows average `random_draws`
/// draws and carry no mask.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionRecord {
    pub scenario: usize,
    pub seed: u64,
    pub policy: SelectionMethod,
    pub selection: Option<String>,
    pub objective: f64,
    pub f1: f64,
    pub f2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionSummary {
    pub policy: SelectionMethod,
    pub scenarios: usize,
    pub objective_mean: f64,
    pub f1_mean: f64,
    pub f1_std: f64,
    pub f2_mean: f64,
    pub f2_std: f64,
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

pub fn selection_records(cfg: &ExperimentConfig) -> Result<Vec<SelectionRecord>, HarnessError> {
    cfg.check()?;
    let nested = cfg.per_scenario(|k| {
        let s = cfg.scenario(k)?;
        let seed = cfg.scenario_seed(k);
        cfg.policies
            .iter()
            .map(|&policy| {
                if policy == SelectionMethod::Random {
                    let (mut obj, mut f1, mut f2) = (0.0, 0.0, 0.0);
                    for d in 0..cfg.random_draws {
                        let r = run_policy(cfg, &s, seed, policy, d)?;
                        obj += r.objective_value;
                        f1 += r.f1;
                        f2 += r.f2;
                    }
                    let n = cfg.random_draws as f64;
                    Ok(SelectionRecord {
                        scenario: k,
                        seed,
                        policy,
                        selection: None,
                        objective: obj / n,
                        f1: f1 / n,
                        f2: f2 / n,
                    })
                } else {
                    let r = run_policy(cfg, &s, seed, policy, 0)?;
                    Ok(SelectionRecord {
                        scenario: k,
                        seed,
                        policy,
                        selection: Some(r.alpha.to_string()),
                        objective: r.objective_value,
                        f1: r.f1,
                        f2: r.f2,
                    })
                }
            })
            .collect::<Result<Vec<_>, HarnessError>>()
    })?;
    Ok(nested.into_iter().flatten().collect())
}

pub fn summarize_selection(cfg: &ExperimentConfig, records: &[SelectionRecord]) -> Vec<SelectionSummary> {
    cfg.policies
        .iter()
        .map(|&policy| {
            let rows: Vec<&SelectionRecord> = records.iter().filter(|r| r.policy == policy).collect();
            let f1: Vec<f64> = rows.iter().map(|r| r.f1).collect();
            let f2: Vec<f64> = rows.iter().map(|r| r.f2).collect();
            let obj: Vec<f64> = rows.iter().map(|r| r.objective).collect();
            let (f1_mean, f1_std) = mean_std(&f1);
            let (f2_mean, f2_std) = mean_std(&f2);
            SelectionSummary {
                policy,
                scenarios: rows.len(),
                objective_mean: mean_std(&obj).0,
                f1_mean,
                f1_std,
                f2_mean,
                f2_std,
            }
        })
        .collect()
}

/// Mean and spread of `f1` and `f2` per policy over the batch.
pub fn run_selection_experiment(cfg: &ExperimentConfig) -> Result<Vec<SelectionSummary>, HarnessError> {
    let records = selection_records(cfg)?;
    Ok(summarize_selection(cfg, &records))
}

/// Sweep rows of every scenario, scenario-major.
pub fn allocation_records(cfg: &ExperimentConfig) -> Result<Vec<Vec<SweepRow>>, HarnessError> {
    cfg.check()?;
    cfg.per_scenario(|k| {
        let s = cfg.scenario(k)?;
        let seed = cfg.scenario_seed(k);
        let alpha = run_policy(cfg, &s, seed, cfg.allocation_selection, 0)?.alpha;
        Ok(sweep_error(&s, &alpha, &cfg.weights, &cfg.beta_grid, cfg.beta_sweep, seed)?)
    })
}

/// Mean throughput and energy curves per allocation policy. An empty grid
/// yields no rows.
pub fn run_allocation_experiment(cfg: &ExperimentConfig) -> Result<Vec<SweepRow>, HarnessError> {
    let per = allocation_records(cfg)?;
    if cfg.beta_grid.is_empty() {
        return Ok(Vec::new());
    }
    if per.iter().all(|rows| rows.iter().all(|r| r.throughput_bps == 0.0)) {
        return Err(HarnessError::Infeasible(
            "no scenario has a selected helper that meets the delay bound".into(),
        ));
    }
    let n = per.len() as f64;
    let width = per[0].len();
    Ok((0..width)
        .map(|j| {
            let first = &per[0][j];
            let (mut t, mut e) = (0.0, 0.0);
            for rows in &per {
                t += rows[j].throughput_bps;
                e += rows[j].energy_w;
            }
            SweepRow {
                policy: first.policy,
                beta_param: first.beta_param,
                throughput_bps: t / n,
                energy_w: e / n,
            }
        })
        .collect())
}

/// Label of the ego-only row in fusion tables.
pub const EGO_ONLY: &str = "ego";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FusionRecord {
    pub scenario: usize,
    /// `ego` or a selection policy name.
    pub policy: String,
    pub mean_iou: f64,
    pub recall: f64,
    pub precision: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FusionSummary {
    pub policy: String,
    pub scenarios: usize,
    pub mean_iou: f64,
    pub mean_iou_std: f64,
    pub recall: f64,
    pub precision: f64,
    pub f1: f64,
}

/// Path of scenario `k`'s frame inside a fixtures directory.
pub fn fixture_path(dir: &Path, k: usize) -> PathBuf {
    dir.join(format!("frame_{k:04}.jsonl"))
}

/// Frame of scenario `k`: read from the fixtures directory when one is
/// configured, synthesized otherwise.
pub fn frame_for(cfg: &ExperimentConfig, s: &Scenario, k: usize) -> Result<Frame, HarnessError> {
    let Some(dir) = &cfg.fixtures_dir else {
        return synthesize_frame(s, &cfg.fixture, cfg.scenario_seed(k)).map_err(HarnessError::Config);
    };
    let path = fixture_path(dir, k);
    let file = match File::open(&path) {
        Ok(f) => f,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Err(HarnessError::MissingFixture { path }),
        Err(e) => return Err(HarnessError::io(&path, e)),
    };
    let mut sets = read_detections(BufReader::new(file)).map_err(|e| match e {
        FusionError::Io(source) => HarnessError::io(&path, source),
        other => HarnessError::Config(format!("{}: {other}", path.display())),
    })?;
    if sets.len() != s.n_candidates() + 1 {
        return Err(HarnessError::Config(format!(
            "{}: expected {} detection sets (ego first), found {}",
            path.display(),
            s.n_candidates() + 1,
            sets.len()
        )));
    }
    let helpers = sets.split_off(1);
    let ego = sets.pop().expect("one set left");
    Ok(Frame { ego, helpers })
}

/// Writes the synthetic frame of every scenario in the batch.
pub fn write_fixtures(cfg: &ExperimentConfig, dir: &Path) -> Result<Vec<PathBuf>, HarnessError> {
    cfg.check()?;
    std::fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
    let synth = ExperimentConfig {
        fixtures_dir: None,
        ..cfg.clone()
    };
    (0..cfg.repetitions)
        .map(|k| {
            let s = synth.scenario(k)?;
            let frame = frame_for(&synth, &s, k)?;
            let path = fixture_path(dir, k);
            let mut sets = vec![frame.ego];
            sets.extend(frame.helpers);
            let mut buf = Vec::new();
            write_detections(&sets, &mut buf)?;
            std::fs::write(&path, buf).map_err(|e| HarnessError::io(&path, e))?;
            Ok(path)
        })
        .collect()
}

/// Helper sets as the ego receives them. Drops are drawn per helper from a
/// stream that does not depend on the policy, so policies that pick the
/// same helper see the same losses.
fn received(cfg: &ExperimentConfig, s: &Scenario, frame: &Frame, k: usize) -> Result<Vec<DetectionSet>, HarnessError> {
    let seed = cfg.scenario_seed(k);
    frame
        .helpers
        .iter()
        .enumerate()
        .map(|(i, set)| {
            if !cfg.channel_errors {
                return Ok(set.clone());
            }
            let mut rng = stream_rng(derive_seed(seed, i as u64), streams::DEGRADE);
            Ok(degrade(set, s.candidates[i].packet_error_prob, &mut rng)?)
        })
        .collect()
}

fn fused_metrics(
    cfg: &ExperimentConfig,
    frame: &Frame,
    received: &[DetectionSet],
    alpha: &SelectionVector,
) -> Result<crate::fusion::Metrics, HarnessError> {
    let sets = std::iter::once(&frame.ego).chain(alpha.indices().map(|i| &received[i]));
    let fused = fuse_all(sets)?.expect("ego is always present");
    Ok(metrics(&fused, cfg.iou_threshold)?)
}

pub fn fusion_records(cfg: &ExperimentConfig) -> Result<Vec<FusionRecord>, HarnessError> {
    cfg.check()?;
    let nested = cfg.per_scenario(|k| {
        let s = cfg.scenario(k)?;
        let seed = cfg.scenario_seed(k);
        let frame = frame_for(cfg, &s, k)?;
        let got = received(cfg, &s, &frame, k)?;
        let record = |policy: &str, m: crate::fusion::Metrics| FusionRecord {
            scenario: k,
            policy: policy.to_string(),
            mean_iou: m.mean_iou,
            recall: m.recall,
            precision: m.precision,
            f1: m.f1,
        };
        let mut out = vec![record(EGO_ONLY, fused_metrics(cfg, &frame, &got, &SelectionVector::empty(s.n_candidates()))?)];
        for &policy in &cfg.policies {
            let draws = if policy == SelectionMethod::Random { cfg.random_draws } else { 1 };
            let mut acc = [0.0; 4];
            for d in 0..draws {
                let alpha = run_policy(cfg, &s, seed, policy, d)?.alpha;
                let m = fused_metrics(cfg, &frame, &got, &alpha)?;
                for (a, v) in acc.iter_mut().zip([m.mean_iou, m.recall, m.precision, m.f1]) {
                    *a += v;
                }
            }
            let n = draws as f64;
            out.push(record(
                policy.as_str(),
                crate::fusion::Metrics {
                    mean_iou: acc[0] / n,
                    recall: acc[1] / n,
                    precision: acc[2] / n,
                    f1: acc[3] / n,
                },
            ));
        }
        Ok(out)
    })?;
    Ok(nested.into_iter().flatten().collect())
}

pub fn summarize_fusion(records: &[FusionRecord]) -> Vec<FusionSummary> {
    let mut labels: Vec<&str> = Vec::new();
    for r in records {
        if !labels.contains(&r.policy.as_str()) {
            labels.push(&r.policy);
        }
    }
    labels
        .into_iter()
        .map(|policy| {
            let rows: Vec<&FusionRecord> = records.iter().filter(|r| r.policy == policy).collect();
            let mean = |f: fn(&FusionRecord) -> f64| rows.iter().map(|r| f(r)).sum::<f64>() / rows.len() as f64;
            let ious: Vec<f64> = rows.iter().map(|r| r.mean_iou).collect();
            let (mean_iou, mean_iou_std) = mean_std(&ious);
            FusionSummary {
                policy: policy.to_string(),
                scenarios: rows.len(),
                mean_iou,
                mean_iou_std,
                recall: mean(|r| r.recall),
                precision: mean(|r| r.precision),
                f1: mean(|r| r.f1),
            }
        })
        .collect()
}

/// Detection metrics per selection policy, plus the ego on its own.
pub fn run_fusion_experiment(cfg: &ExperimentConfig) -> Result<Vec<FusionSummary>, HarnessError> {
    Ok(summarize_fusion(&fusion_records(cfg)?))
}

pub fn write_csv<T: Serialize, W: Write>(rows: &[T], out: W) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// CSV writer that, unlike `csv`'s serde path, emits the header even when
/// there are no rows.
pub fn write_sweep_csv<W: Write>(rows: &[SweepRow], out: W) -> Result<(), csv::Error> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    w.write_record(["policy", "beta_param", "throughput_bps", "energy_w"])?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// One JSON object per line.
pub fn write_jsonl<T: Serialize, W: Write>(rows: &[T], mut out: W) -> std::io::Result<()> {
    for r in rows {
        serde_json::to_writer(&mut out, r)?;
        out.write_all(b"\n")?;
    }
    out.flush()
}

pub fn read_csv<T: DeserializeOwned, R: std::io::Read>(input: R) -> Result<Vec<T>, csv::Error> {
    csv::Reader::from_reader(input).deserialize().collect()
}

fn save(path: &Path, write: impl FnOnce(&mut Vec<u8>) -> Result<(), csv::Error>) -> Result<(), HarnessError> {
    let mut buf = Vec::new();
    write(&mut buf).map_err(|e| HarnessError::Csv {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    std::fs::write(path, buf).map_err(|e| HarnessError::io(path, e))
}

/// Files written by [`bench`].
#[derive(Debug, Clone, PartialEq)]
pub struct BenchOutput {
    pub selection: PathBuf,
    pub selection_runs: PathBuf,
    pub allocation: PathBuf,
    pub fusion: PathBuf,
}

impl BenchOutput {
    pub fn paths(&self) -> [&Path; 4] {
        [&self.selection, &self.selection_runs, &self.allocation, &self.fusion]
    }
}

/// Runs all three experiments and writes their tables into `out_dir`:
/// `selection.csv`, `allocation.csv`, `fusion.csv`, and the per-scenario
/// selection records as `selection_runs.jsonl`.
pub fn bench(cfg: &ExperimentConfig, out_dir: &Path) -> Result<BenchOutput, HarnessError> {
    let records = selection_records(cfg)?;
    let selection = summarize_selection(cfg, &records);
    let allocation = run_allocation_experiment(cfg)?;
    let fusion = run_fusion_experiment(cfg)?;

    std::fs::create_dir_all(out_dir).map_err(|e| HarnessError::io(out_dir, e))?;
    let out = BenchOutput {
        selection: out_dir.join("selection.csv"),
        selection_runs: out_dir.join("selection_runs.jsonl"),
        allocation: out_dir.join("allocation.csv"),
        fusion: out_dir.join("fusion.csv"),
    };
    save(&out.selection, |b| write_csv(&selection, b))?;
    save(&out.allocation, |b| write_sweep_csv(&allocation, b))?;
    save(&out.fusion, |b| write_csv(&fusion, b))?;
    let mut lines = Vec::new();
    write_jsonl(&records, &mut lines).expect("writing to memory");
    std::fs::write(&out.selection_runs, lines).map_err(|e| HarnessError::io(&out.selection_runs, e))?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> ExperimentConfig {
        ExperimentConfig {
            repetitions: 6,
            random_draws: 5,
            ga: GaConfig {
                generations: 30,
                ..Default::default()
            },
            workers: Some(2),
            ..Default::default()
        }
    }

    #[test]
    fn config_round_trips_through_toml() {
        let cfg = small();
        assert_eq!(ExperimentConfig::from_toml_str(&cfg.to_toml_string()).unwrap(), cfg);
        let partial = ExperimentConfig::from_toml_str("repetitions = 3\npolicies = [\"oracle\", \"slowest\"]\n").unwrap();
        assert_eq!(partial.repetitions, 3);
        assert_eq!(partial.n_candidates, 10);
    }

    #[test]
    fn bad_configs_are_rejected() {
        for text in ["repetitions = 0", "policies = []", "iou_threshold = 1.0", "bogus = 1", "workers = 0", "n_candidates = 2"] {
            let err = ExperimentConfig::from_toml_str(text).unwrap_err();
            assert_eq!(err.exit_code(), 1, "{text}: {err}");
        }
    }

    #[test]
    fn single_oracle_policy_gives_one_row() {
        let cfg = ExperimentConfig {
            repetitions: 1,
            policies: vec![SelectionMethod::Oracle],
            ..small()
        };
        let rows = run_selection_experiment(&cfg).unwrap();
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0].scenarios, 1);
        assert_eq!(rows[0].f1_std, 0.0);
    }

    #[test]
    fn slowest_has_least_blur() {
        let rows = run_selection_experiment(&small()).unwrap();
        let by = |m: SelectionMethod| rows.iter().find(|r| r.policy == m).unwrap();
        assert!(by(SelectionMethod::Slowest).f2_mean <= by(SelectionMethod::Random).f2_mean);
        assert!(by(SelectionMethod::Oracle).objective_mean >= by(SelectionMethod::Random).objective_mean);
    }

    #[test]
    fn empty_grid_gives_no_rows() {
        let cfg = ExperimentConfig {
            beta_grid: vec![],
            ..small()
        };
        assert!(run_allocation_experiment(&cfg).unwrap().is_empty());
        let mut buf = Vec::new();
        write_sweep_csv(&[], &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "policy,beta_param,throughput_bps,energy_w\n");
    }

    #[test]
    fn grid_past_one_is_infeasible() {
        let cfg = ExperimentConfig {
            beta_grid: vec![0.0, 1.0],
            ..small()
        };
        assert_eq!(run_allocation_experiment(&cfg).unwrap_err().exit_code(), 2);
    }

    #[test]
    fn unreachable_delay_bound_is_infeasible() {
        let mut cfg = small();
        cfg.scenario.comms.delay_threshold = 1e-9;
        let err = run_allocation_experiment(&cfg).unwrap_err();
        assert!(matches!(err, HarnessError::Infeasible(_)));
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn sweep_csv_round_trips() {
        let rows = run_allocation_experiment(&small()).unwrap();
        assert_eq!(rows.len(), 30);
        let mut buf = Vec::new();
        write_sweep_csv(&rows, &mut buf).unwrap();
        assert!(buf.starts_with(b"policy,beta_param,throughput_bps,energy_w\n"));
        assert_eq!(read_csv::<SweepRow, _>(buf.as_slice()).unwrap(), rows);
    }

    #[test]
    fn records_round_trip_through_csv() {
        let cfg = small();
        let sel = selection_records(&cfg).unwrap();
        let mut buf = Vec::new();
        write_csv(&sel, &mut buf).unwrap();
        assert_eq!(read_csv::<SelectionRecord, _>(buf.as_slice()).unwrap(), sel);

        let fus = fusion_records(&cfg).unwrap();
        let mut buf = Vec::new();
        write_csv(&fus, &mut buf).unwrap();
        assert_eq!(read_csv::<FusionRecord, _>(buf.as_slice()).unwrap(), fus);
    }

    #[test]
    fn no_channel_errors_matches_perfect_pipeline() {
        let mut cfg = small();
        cfg.scenario.beta_shape_a = 1e-3;
        cfg.scenario.beta_shape_b = 1e3;
        let clean = ExperimentConfig {
            channel_errors: false,
            ..cfg.clone()
        };
        // Near-zero error probabilities drop (almost surely) nothing.
        assert_eq!(fusion_records(&cfg).unwrap(), fusion_records(&clean).unwrap());
    }

    #[test]
    fn helpers_never_hurt_the_ego() {
        let rows = fusion_records(&small()).unwrap();
        for chunk in rows.chunks(1 + small().policies.len()) {
            let ego = &chunk[0];
            assert_eq!(ego.policy, EGO_ONLY);
            for r in &chunk[1..] {
                assert!(r.mean_iou >= ego.mean_iou, "{r:?} vs {ego:?}");
            }
        }
    }

    #[test]
    fn fixtures_round_trip_and_missing_ones_fail() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = small();
        let paths = write_fixtures(&cfg, dir.path()).unwrap();
        assert_eq!(paths.len(), cfg.repetitions);
        let from_files = ExperimentConfig {
            fixtures_dir: Some(dir.path().to_path_buf()),
            ..cfg.clone()
        };
        assert_eq!(fusion_records(&from_files).unwrap(), fusion_records(&cfg).unwrap());

        std::fs::remove_file(&paths[3]).unwrap();
        let err = fusion_records(&from_files).unwrap_err();
        assert!(matches!(err, HarnessError::MissingFixture { .. }));
        assert_eq!(err.exit_code(), 3);
    }

    #[test]
    fn config_resolution() {
        let dir = tempfile::tempdir().unwrap();
        assert_eq!(resolve_config_path(None, None), None);
        assert_eq!(resolve_config_path(None, Some(dir.path())), None);
        std::fs::write(dir.path().join(DEFAULT_CONFIG_FILE), "").unwrap();
        std::fs::write(dir.path().join("other.toml"), "").unwrap();
        assert_eq!(resolve_config_path(None, Some(dir.path())), Some(dir.path().join(DEFAULT_CONFIG_FILE)));
        assert_eq!(
            resolve_config_path(Some(Path::new("other.toml")), Some(dir.path())),
            Some(dir.path().join("other.toml"))
        );
        assert_eq!(
            resolve_config_path(Some(Path::new("nowhere.toml")), Some(dir.path())),
            Some(PathBuf::from("nowhere.toml"))
        );
    }

    #[test]
    fn bench_is_deterministic_across_workers() {
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        let one = bench(&ExperimentConfig { workers: Some(1), ..small() }, a.path()).unwrap();
        let four = bench(&ExperimentConfig { workers: Some(4), ..small() }, b.path()).unwrap();
        for (x, y) in one.paths().iter().zip(four.paths()) {
            assert_eq!(std::fs::read(x).unwrap(), std::fs::read(y).unwrap(), "{}", x.display());
        }
    }
}
