use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;

use coopsel::allocator::{allocate_policy, sweep_error, AllocationPolicy};
use coopsel::fusion::{synthesize_frame, write_detections};
use coopsel::harness::{
    bench, fusion_records, resolve_config_path, run_allocation_experiment, run_policy,
    summarize_fusion, write_csv, write_fixtures, write_jsonl, write_sweep_csv, ExperimentConfig,
    HarnessError, CONFIG_DIR_ENV,
};
use coopsel::scenario::{generate_scenario, Scenario};
use coopsel::selector::SelectionMethod;

#[derive(Parser)]
#[command(name = "coopsel", version, about = "Cooperative-perception helper selection and V2V resource allocation")]
struct Cli {
    /// Experiment config (TOML). Relative names are also looked up in the
    /// config directory.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Directory holding config files; `coopsel.toml` there is the default.
    #[arg(long, global = true, env = CONFIG_DIR_ENV)]
    config_dir: Option<PathBuf>,
    /// Overrides the config's base seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output file (a directory for `bench`); stdout when absent.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    format: Format,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Jsonl,
}

#[derive(Subcommand)]
enum Command {
    /// Draw a scenario and write it as TOML.
    Gen {
        /// Number of candidate helpers; defaults to the config's.
        #[arg(long)]
        candidates: Option<usize>,
        /// Also write this scenario's synthetic detections here.
        #[arg(long)]
        detections: Option<PathBuf>,
        /// Write the synthetic detection frames of the whole batch here.
        #[arg(long)]
        fixtures: Option<PathBuf>,
    },
    /// Select helpers for a scenario file.
    Select {
        scenario: PathBuf,
        #[arg(long, default_value = "ga")]
        policy: SelectionMethod,
    },
    /// Select helpers, then share resource blocks and power among them.
    Allocate {
        scenario: PathBuf,
        #[arg(long, default_value = "optimal")]
        policy: AllocationPolicy,
        /// Selection policy that picks the helpers.
        #[arg(long, default_value = "ga")]
        select: SelectionMethod,
    },
    /// Throughput and energy as links worsen, per allocation policy.
    Sweep {
        /// Sweep one scenario instead of the configured batch.
        scenario: Option<PathBuf>,
        /// Keep only this allocation policy's rows.
        #[arg(long)]
        policy: Option<AllocationPolicy>,
    },
    /// Detection quality after fusing the selected helpers' detections.
    Fuse {
        /// Read detection frames from this directory.
        #[arg(long)]
        fixtures: Option<PathBuf>,
        /// Evaluate only this selection policy (plus the ego alone).
        #[arg(long)]
        policy: Option<SelectionMethod>,
        /// Emit per-scenario records instead of the summary.
        #[arg(long)]
        runs: bool,
    },
    /// Run every experiment and write its tables into `--out`.
    Bench {
        #[arg(long)]
        workers: Option<usize>,
    },
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig, HarnessError> {
    let mut cfg = match resolve_config_path(cli.config.as_deref(), cli.config_dir.as_deref()) {
        Some(path) => ExperimentConfig::load(&path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn emit(out: Option<&Path>, bytes: &[u8]) -> Result<(), HarnessError> {
    let io = |path: &Path, source| HarnessError::Io {
        path: path.to_path_buf(),
        source,
    };
    match out {
        Some(path) => std::fs::write(path, bytes).map_err(|e| io(path, e)),
        None => std::io::stdout().write_all(bytes).map_err(|e| io(Path::new("<stdout>"), e)),
    }
}

fn render<T: Serialize>(rows: &[T], format: Format) -> Vec<u8> {
    let mut buf = Vec::new();
    match format {
        Format::Csv => write_csv(rows, &mut buf).expect("writing to memory"),
        Format::Jsonl => write_jsonl(rows, &mut buf).expect("writing to memory"),
    }
    buf
}

fn load_scenario(path: &Path) -> Result<Scenario, HarnessError> {
    Ok(Scenario::load(path)?)
}

#[derive(Serialize)]
struct SelectOutput {
    policy: SelectionMethod,
    selection: String,
    objective: f64,
    f1: f64,
    f2: f64,
    evaluations: u64,
}

#[derive(Serialize)]
struct PlanRow {
    candidate: usize,
    id: u32,
    selected: bool,
    rb_count: u32,
    power_w: f64,
}

#[derive(Serialize)]
struct PlanOutput {
    policy: AllocationPolicy,
    selection: String,
    rb_counts: Vec<u32>,
    powers: Vec<f64>,
    throughput_bps: f64,
    energy_w: f64,
    feasible: bool,
}

fn run(cli: &Cli) -> Result<(), HarnessError> {
    let mut cfg = load_config(cli)?;
    let out = cli.out.as_deref();
    match &cli.command {
        Command::Gen {
            candidates,
            detections,
            fixtures,
        } => {
            if let Some(n) = candidates {
                cfg.n_candidates = *n;
            }
            let s = generate_scenario(cfg.seed, cfg.n_candidates, &cfg.scenario)?;
            emit(out, s.to_toml_string()?.as_bytes())?;
            if let Some(path) = detections {
                let frame = synthesize_frame(&s, &cfg.fixture, cfg.seed).map_err(HarnessError::Config)?;
                let mut sets = vec![frame.ego];
                sets.extend(frame.helpers);
                let mut buf = Vec::new();
                write_detections(&sets, &mut buf)?;
                emit(Some(path), &buf)?;
            }
            if let Some(dir) = fixtures {
                write_fixtures(&cfg, dir)?;
            }
        }
        Command::Select { scenario, policy } => {
            let s = load_scenario(scenario)?;
            let r = run_policy(&cfg, &s, cfg.seed, *policy, 0)?;
            let row = SelectOutput {
                policy: *policy,
                selection: r.alpha.to_string(),
                objective: r.objective_value,
                f1: r.f1,
                f2: r.f2,
                evaluations: r.evaluations,
            };
            emit(out, &render(&[row], cli.format))?;
        }
        Command::Allocate {
            scenario,
            policy,
            select,
        } => {
            let s = load_scenario(scenario)?;
            let alpha = run_policy(&cfg, &s, cfg.seed, *select, 0)?.alpha;
            let plan = allocate_policy(&s, &alpha, &cfg.weights, *policy, cfg.seed)?;
            if !plan.feasible {
                return Err(HarnessError::Infeasible(format!(
                    "no helper in selection {alpha} meets the delay bound"
                )));
            }
            let bytes = match cli.format {
                Format::Csv => {
                    let rows: Vec<PlanRow> = s
                        .candidates
                        .iter()
                        .enumerate()
                        .map(|(i, v)| PlanRow {
                            candidate: i,
                            id: v.id,
                            selected: alpha.is_selected(i),
                            rb_count: plan.rb_counts[i],
                            power_w: plan.powers[i],
                        })
                        .collect();
                    render(&rows, Format::Csv)
                }
                Format::Jsonl => render(
                    &[PlanOutput {
                        policy: *policy,
                        selection: alpha.to_string(),
                        rb_counts: plan.rb_counts,
                        powers: plan.powers,
                        throughput_bps: plan.achieved_throughput,
                        energy_w: plan.achieved_energy,
                        feasible: plan.feasible,
                    }],
                    Format::Jsonl,
                ),
            };
            emit(out, &bytes)?;
        }
        Command::Sweep { scenario, policy } => {
            let mut rows = match scenario {
                Some(path) => {
                    let s = load_scenario(path)?;
                    let alpha = run_policy(&cfg, &s, cfg.seed, cfg.allocation_selection, 0)?.alpha;
                    sweep_error(&s, &alpha, &cfg.weights, &cfg.beta_grid, cfg.beta_sweep, cfg.seed)?
                }
                None => run_allocation_experiment(&cfg)?,
            };
            if let Some(p) = policy {
                rows.retain(|r| r.policy == *p);
            }
            let bytes = match cli.format {
                Format::Csv => {
                    let mut buf = Vec::new();
                    write_sweep_csv(&rows, &mut buf).expect("writing to memory");
                    buf
                }
                Format::Jsonl => render(&rows, Format::Jsonl),
            };
            emit(out, &bytes)?;
        }
        Command::Fuse { fixtures, policy, runs } => {
            if let Some(dir) = fixtures {
                cfg.fixtures_dir = Some(dir.clone());
            }
            if let Some(p) = policy {
                cfg.policies = vec![*p];
            }
            let records = fusion_records(&cfg)?;
            let bytes = if *runs {
                render(&records, cli.format)
            } else {
                render(&summarize_fusion(&records), cli.format)
            };
            emit(out, &bytes)?;
        }
        Command::Bench { workers } => {
            if workers.is_some() {
                cfg.workers = *workers;
            }
            let dir = out.unwrap_or(Path::new("bench-out"));
            let written = bench(&cfg, dir)?;
            for p in written.paths() {
                println!("{}", p.display());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn cli_definition_is_consistent() {
        Cli::command().debug_assert();
    }
}
