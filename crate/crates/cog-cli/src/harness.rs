//! Experiment orchestration.
//!
//! One cell = (method, seed). A cell trains, keeps its last three
//! evaluation snapshots, runs the full success-rate protocol on each, and
//! reports the best of the three — a reproducible stand-in for "train
//! until the success rate converges". Every cell leaves behind a metrics
//! CSV, its retained checkpoints, and a `cell.json` summary with SHA-256
//! hashes so that every reported number is traceable to an artifact.
//!
//! Value-learned policies are evaluated deterministically (tanh of the
//! policy mean); behavior-cloned policies are evaluated stochastically,
//! since a cloned policy of multimodal demonstrations carries its
//! information in the full distribution. The report notes this split.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use cog_core::algo::{
    self, gradient_step, AgentState, MetricRow, TrainConfig,
};
use cog_core::data::Dataset;
use cog_core::env::{make_env, InitialCondition};
use cog_core::rng;
use cog_core::rollout::{evaluate, EvalMode};
use cog_core::CoreError;

use crate::config::{config_error, ExperimentConfig, Method};
use crate::metrics::{self, EvalPoint};
use crate::{ckpt, dataio};

/// How many trailing snapshots compete for "final checkpoint".
pub const RETAINED_SNAPSHOTS: usize = 3;

// Derivation streams: all evaluation randomness comes from the cell seed.
const STREAM_CURVE_EVAL: u64 = 0x6375_7276;
const STREAM_FINAL_EVAL: u64 = 0x6669_6e61;
const STREAM_BC_PRETRAIN: u64 = 0x6263_7072;
const STREAM_TASK_PHASE: u64 = 0x7461_736b;
const STREAM_FINETUNE_EVAL: u64 = 0x6674_6576;

pub fn sha256_hex(path: &Path) -> Result<String> {
    let bytes = fs::read(path).with_context(|| format!("hashing {}", path.display()))?;
    let mut h = Sha256::new();
    h.update(&bytes);
    Ok(format!("{:x}", h.finalize()))
}

/// A divergence-guard abort, preserved as data.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct Divergence {
    pub step: u64,
    pub mean_abs_q: f64,
}

/// One retained checkpoint.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct SnapshotInfo {
    pub step: u64,
    pub file: String,
    pub sha256: String,
}

/// Everything `report` needs to know about a finished cell; written as
/// `cell.json` next to the cell's artifacts.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CellSummary {
    pub env: String,
    pub method: String,
    pub seed: u64,
    pub seeds_planned: Vec<u64>,
    pub eval_mode: String,
    pub trials_per_condition: u32,
    /// Gradient step of the snapshot whose numbers are reported.
    pub best_step: u64,
    /// Success rate per condition id at the best snapshot.
    pub success: BTreeMap<String, f64>,
    pub diverged: Option<Divergence>,
    pub checkpoint: String,
    pub checkpoint_sha256: String,
    pub metrics: String,
    pub metrics_sha256: String,
    pub retained: Vec<SnapshotInfo>,
}

impl CellSummary {
    pub fn mean_success(&self) -> f64 {
        if self.success.is_empty() {
            return 0.0;
        }
        self.success.values().sum::<f64>() / self.success.len() as f64
    }
}

/// Loads and cross-checks the datasets a method needs.
fn load_data(cfg: &ExperimentConfig) -> Result<(Option<Dataset>, Dataset)> {
    let check = |ds: &Dataset, what: &str| -> Result<()> {
        let env = make_env(&cfg.env).map_err(anyhow::Error::new)?;
        if ds.env_id != cfg.env {
            return Err(config_error(format!(
                "{what} dataset was collected on '{}', config says '{}'",
                ds.env_id, cfg.env
            )));
        }
        if ds.obs_dim != env.obs_dim() {
            return Err(config_error(format!(
                "{what} dataset observes {}d, environment '{}' observes {}d",
                ds.obs_dim,
                cfg.env,
                env.obs_dim()
            )));
        }
        Ok(())
    };
    let task = dataio::load(&cfg.task_data)?;
    check(&task, "task")?;
    if !task.reward_labeled {
        return Err(config_error("task dataset must be reward-labeled".into()));
    }
    let prior = if cfg.method.uses_prior() {
        let p = dataio::load(cfg.prior_data.as_ref().expect("validated by config"))?;
        check(&p, "prior")?;
        if p.reward_labeled {
            return Err(config_error(
                "prior dataset must be reward-free (collect with role=prior)".into(),
            ));
        }
        Some(p)
    } else {
        None
    };
    Ok((prior, task))
}

/// Snapshot bookkeeping shared by every training phase: saves a
/// checkpoint, keeps the trailing window, and takes the cheap
/// learning-curve evals.
struct SnapshotSink<'a> {
    dir: &'a Path,
    env_id: &'a str,
    conditions: &'a [InitialCondition],
    curve_trials: u32,
    eval_mode: EvalMode,
    seed: u64,
    retained: Vec<(u64, PathBuf)>,
    curve: Vec<EvalPoint>,
}

impl<'a> SnapshotSink<'a> {
    fn new(
        dir: &'a Path,
        env_id: &'a str,
        conditions: &'a [InitialCondition],
        curve_trials: u32,
        eval_mode: EvalMode,
        seed: u64,
    ) -> Self {
        SnapshotSink {
            dir,
            env_id,
            conditions,
            curve_trials,
            eval_mode,
            seed,
            retained: Vec::new(),
            curve: Vec::new(),
        }
    }

    fn save(&mut self, agent: &AgentState, step: u64) -> cog_core::Result<()> {
        let to_core = |e: anyhow::Error| CoreError::Data(format!("snapshot: {e:#}"));
        let path = self.dir.join(format!("ckpt_step{step:09}.ckpt"));
        ckpt::save(agent, &path).map_err(to_core)?;
        self.retained.push((step, path));
        while self.retained.len() > RETAINED_SNAPSHOTS {
            let (_, old) = self.retained.remove(0);
            let _ = fs::remove_file(old);
        }
        if self.curve_trials > 0 {
            let base = rng::derive(rng::derive(self.seed, STREAM_CURVE_EVAL), step);
            for (i, cond) in self.conditions.iter().enumerate() {
                let rate = evaluate(
                    self.env_id,
                    &agent.policy,
                    *cond,
                    self.curve_trials,
                    rng::derive(base, i as u64),
                    self.eval_mode,
                )?;
                self.curve.push(EvalPoint {
                    step,
                    condition: cond.id().to_string(),
                    success_rate: rate,
                });
            }
        }
        Ok(())
    }
}

/// Runs the 250-trial (configurable) protocol on one checkpoint file.
fn protocol_eval(
    path: &Path,
    cfg: &ExperimentConfig,
    mode: EvalMode,
    seed: u64,
    step: u64,
) -> Result<BTreeMap<String, f64>> {
    let agent = ckpt::load(path, &cfg.train)?;
    let base = rng::derive(rng::derive(seed, STREAM_FINAL_EVAL), step);
    let mut out = BTreeMap::new();
    for (i, cond) in cfg.conditions.iter().enumerate() {
        let rate = evaluate(
            &cfg.env,
            &agent.policy,
            *cond,
            cfg.trials_per_condition,
            rng::derive(base, i as u64),
            mode,
        )
        .map_err(anyhow::Error::new)?;
        out.insert(cond.id().to_string(), rate);
    }
    Ok(out)
}

/// Offline gradient steps continuing from an existing agent (used for the
/// task phase of clone-then-RL). Metric rows are keyed by the agent's
/// global step counter so curves stay monotone across phases.
fn offline_steps_from(
    agent: &mut AgentState,
    data: &Dataset,
    cfg: &TrainConfig,
    stream_seed: u64,
    rows: &mut Vec<MetricRow>,
    sink: &mut SnapshotSink,
) -> Result<Option<Divergence>> {
    let mut r = rng::seeded(stream_seed);
    for k in 1..=cfg.total_steps {
        let batch = data.sample_batch(cfg.batch, &mut r).map_err(anyhow::Error::new)?;
        let m = match gradient_step(agent, &batch, cfg, &mut r) {
            Ok(m) => m,
            Err(CoreError::Diverged { step, mean_abs_q }) => {
                return Ok(Some(Divergence { step, mean_abs_q }));
            }
            Err(e) => return Err(e.into()),
        };
        if k % cfg.metric_interval.max(1) == 0 || k == cfg.total_steps {
            rows.push(MetricRow::from_step(agent.step, &m));
        }
        if cfg.eval_interval > 0 && (k % cfg.eval_interval == 0 || k == cfg.total_steps) {
            sink.save(agent, agent.step).map_err(anyhow::Error::new)?;
        }
    }
    Ok(None)
}

/// Trains one cell's agent, leaving snapshots in the sink. Returns loss
/// rows and the divergence record if the guard tripped.
fn train_dispatch(
    cfg: &ExperimentConfig,
    seed: u64,
    prior: Option<&Dataset>,
    task: &Dataset,
    sink: &mut SnapshotSink,
) -> Result<(Vec<MetricRow>, Option<Divergence>)> {
    let merged = |prior: Option<&Dataset>| -> Result<Dataset> {
        match prior {
            Some(p) => Dataset::merge(&[p, task]).map_err(anyhow::Error::new),
            None => Ok(task.clone()),
        }
    };
    fn catch_divergence(
        r: cog_core::Result<(AgentState, Vec<MetricRow>)>,
    ) -> Result<(Vec<MetricRow>, Option<Divergence>)> {
        match r {
            Ok((_, rows)) => Ok((rows, None)),
            Err(CoreError::Diverged { step, mean_abs_q }) => {
                Ok((Vec::new(), Some(Divergence { step, mean_abs_q })))
            }
            Err(e) => Err(e.into()),
        }
    }
    match cfg.method {
        Method::Cog => {
            let data = merged(prior)?;
            catch_divergence(algo::train_offline(&data, &cfg.train, seed, |a, s| {
                sink.save(a, s)
            }))
        }
        Method::NoPrior => catch_divergence(algo::train_offline(task, &cfg.train, seed, |a, s| {
            sink.save(a, s)
        })),
        Method::BcAll => {
            let data = merged(prior)?;
            let (_, rows) = algo::train_bc(&data, &cfg.train, seed, |a, s| sink.save(a, s))?;
            Ok((rows, None))
        }
        Method::BcOracle => {
            let successes = task.successful_trajectories();
            if successes.is_empty() {
                return Err(config_error(
                    "bc_oracle: task dataset has no successful trajectories to clone".into(),
                ));
            }
            let (_, rows) = algo::train_bc(&successes, &cfg.train, seed, |a, s| sink.save(a, s))?;
            Ok((rows, None))
        }
        Method::Sac => {
            let data = merged(prior)?;
            let sac_cfg = cfg.train.clone().sac_variant();
            catch_divergence(algo::train_offline(&data, &sac_cfg, seed, |a, s| sink.save(a, s)))
        }
        Method::BcInit => {
            // Clone the prior, then run conservative RL on the task data
            // from that start. The pretraining budget reuses the
            // warmstart length; the task phase then needs no warmstart.
            let prior = prior.expect("validated by config");
            let mut pre_cfg = cfg.train.clone();
            pre_cfg.total_steps = cfg.train.bc_warmstart_steps.max(1);
            pre_cfg.eval_interval = 0;
            let (mut agent, mut rows) =
                algo::train_bc(prior, &pre_cfg, rng::derive(seed, STREAM_BC_PRETRAIN), |_, _| {
                    Ok(())
                })?;
            let mut task_cfg = cfg.train.clone();
            task_cfg.bc_warmstart_steps = 0;
            let diverged = offline_steps_from(
                &mut agent,
                task,
                &task_cfg,
                rng::derive(seed, STREAM_TASK_PHASE),
                &mut rows,
                sink,
            )?;
            Ok((rows, diverged))
        }
        Method::BcSacFinetune => {
            // Qualitative probe: clone everything, then fine-tune online
            // without the conservative penalty; the curve around the
            // phase boundary is the point of interest.
            let data = merged(prior)?;
            let (mut agent, mut rows) =
                algo::train_bc(&data, &cfg.train, seed, |a, s| sink.save(a, s))?;
            let cond = cfg.conditions[0];
            let ft_cfg = cfg.train.clone().sac_variant();
            let eval_every = (cfg.finetune_episodes / 10).max(1);
            let out = finetune(
                &mut agent,
                &cfg.env,
                cond,
                &ft_cfg,
                seed,
                cfg.finetune_episodes,
                eval_every,
                cfg.curve_trials.max(1),
                None,
                EvalMode::Stochastic,
            )?;
            rows.extend(out.rows);
            sink.curve.extend(out.evals);
            sink.save(&agent, agent.step).map_err(anyhow::Error::new)?;
            Ok((rows, None))
        }
    }
}

/// Trains and evaluates one (method, seed) cell, writing all artifacts
/// under `out_dir/<method>/seed<k>/`.
pub fn run_cell(cfg: &ExperimentConfig, seed: u64) -> Result<CellSummary> {
    let (prior, task) = load_data(cfg)?;
    let cell_dir = cfg.out_dir.join(cfg.method.id()).join(format!("seed{seed}"));
    fs::create_dir_all(&cell_dir)
        .with_context(|| format!("creating {}", cell_dir.display()))?;
    let eval_mode = if cfg.method.stochastic_eval() {
        EvalMode::Stochastic
    } else {
        EvalMode::Deterministic
    };
    let mut sink = SnapshotSink::new(
        &cell_dir,
        &cfg.env,
        &cfg.conditions,
        cfg.curve_trials,
        eval_mode,
        seed,
    );
    let (rows, diverged) = train_dispatch(cfg, seed, prior.as_ref(), &task, &mut sink)?;

    // Full protocol on each retained snapshot; report the best mean.
    let mut best: Option<(f64, u64, PathBuf, BTreeMap<String, f64>)> = None;
    for (step, path) in &sink.retained {
        let rates = protocol_eval(path, cfg, eval_mode, seed, *step)?;
        let mean = if rates.is_empty() {
            0.0
        } else {
            rates.values().sum::<f64>() / rates.len() as f64
        };
        let better = match &best {
            None => true,
            Some((m, s, _, _)) => mean > *m || (mean == *m && step > s),
        };
        if better {
            best = Some((mean, *step, path.clone(), rates));
        }
    }
    let (best_step, best_path, success) = match best {
        Some((_, step, path, rates)) => (step, path, rates),
        None => (0, PathBuf::new(), BTreeMap::new()),
    };

    let metrics_path = cell_dir.join("metrics.csv");
    metrics::write(&metrics_path, &rows, &sink.curve)?;

    let mut retained = Vec::new();
    for (step, path) in &sink.retained {
        retained.push(SnapshotInfo {
            step: *step,
            file: path.file_name().unwrap().to_string_lossy().into_owned(),
            sha256: sha256_hex(path)?,
        });
    }
    let summary = CellSummary {
        env: cfg.env.clone(),
        method: cfg.method.id().to_string(),
        seed,
        seeds_planned: cfg.seeds.clone(),
        eval_mode: match eval_mode {
            EvalMode::Deterministic => "deterministic".into(),
            EvalMode::Stochastic => "stochastic".into(),
        },
        trials_per_condition: cfg.trials_per_condition,
        best_step,
        success,
        diverged,
        checkpoint: if best_path.as_os_str().is_empty() {
            String::new()
        } else {
            best_path.file_name().unwrap().to_string_lossy().into_owned()
        },
        checkpoint_sha256: if best_path.as_os_str().is_empty() {
            String::new()
        } else {
            sha256_hex(&best_path)?
        },
        metrics: "metrics.csv".into(),
        metrics_sha256: sha256_hex(&metrics_path)?,
        retained,
    };
    let json = serde_json::to_string_pretty(&summary)?;
    fs::write(cell_dir.join("cell.json"), json.as_bytes())?;
    Ok(summary)
}

/// Runs every seed of the configured method.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Vec<CellSummary>> {
    let mut out = Vec::new();
    for &seed in &cfg.seeds {
        out.push(run_cell(cfg, seed)?);
    }
    Ok(out)
}

/// Outcome of an online fine-tuning run.
#[derive(Debug)]
pub struct FinetuneOutcome {
    pub episodes_run: u32,
    /// First episode count at which the periodic eval met the stop
    /// threshold, if it ever did.
    pub reached_at: Option<u32>,
    pub final_success: f64,
    pub evals: Vec<EvalPoint>,
    pub rows: Vec<MetricRow>,
}

/// Online fine-tuning with periodic evaluation and optional early stop
/// once the measured success rate reaches `stop_at`.
#[allow(clippy::too_many_arguments)]
pub fn finetune(
    agent: &mut AgentState,
    env_id: &str,
    cond: InitialCondition,
    cfg: &TrainConfig,
    seed: u64,
    max_episodes: u32,
    eval_every: u32,
    eval_trials: u32,
    stop_at: Option<f64>,
    eval_mode: EvalMode,
) -> Result<FinetuneOutcome> {
    if eval_every == 0 {
        return Err(config_error("finetune: eval_every must be ≥ 1".into()));
    }
    let mut evals = Vec::new();
    let mut reached_at = None;
    let mut episodes_run = 0;
    let mut final_success = 0.0;
    let rows = algo::finetune_online(
        agent,
        env_id,
        cond,
        max_episodes,
        cfg,
        seed,
        |agent, ep| {
            episodes_run = ep + 1;
            let due = (ep + 1) % eval_every == 0 || ep + 1 == max_episodes;
            if !due {
                return Ok(true);
            }
            let rate = evaluate(
                env_id,
                &agent.policy,
                cond,
                eval_trials,
                rng::derive(rng::derive(seed, STREAM_FINETUNE_EVAL), ep as u64),
                eval_mode,
            )?;
            evals.push(EvalPoint {
                step: agent.step,
                condition: cond.id().to_string(),
                success_rate: rate,
            });
            final_success = rate;
            if let Some(thresh) = stop_at {
                if rate >= thresh {
                    reached_at = Some(ep + 1);
                    return Ok(false);
                }
            }
            Ok(true)
        },
    )
    .map_err(anyhow::Error::new)?;
    Ok(FinetuneOutcome {
        episodes_run,
        reached_at,
        final_success,
        evals,
        rows,
    })
}

// ---------------------------------------------------------------------
// Reporting
// ---------------------------------------------------------------------

/// Population mean and standard deviation.
fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Recursively finds `cell.json` files under the given roots.
fn find_cells(roots: &[PathBuf]) -> Result<Vec<(PathBuf, CellSummary)>> {
    fn walk(dir: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
        for entry in fs::read_dir(dir).with_context(|| format!("reading {}", dir.display()))? {
            let entry = entry?;
            let path = entry.path();
            if path.is_dir() {
                walk(&path, out)?;
            } else if path.file_name().is_some_and(|n| n == "cell.json") {
                out.push(path);
            }
        }
        Ok(())
    }
    let mut files = Vec::new();
    for root in roots {
        if !root.exists() {
            return Err(config_error(format!("run directory {} does not exist", root.display())));
        }
        walk(root, &mut files)?;
    }
    files.sort();
    let mut cells = Vec::new();
    for f in files {
        let text = fs::read_to_string(&f)?;
        let summary: CellSummary = serde_json::from_str(&text)
            .with_context(|| format!("parsing {}", f.display()))?;
        cells.push((f.parent().unwrap().to_path_buf(), summary));
    }
    Ok(cells)
}

/// Aggregated report, written as markdown + CSV + curves + manifest.
pub struct ReportOutcome {
    pub warnings: Vec<String>,
    pub rows: Vec<ReportRow>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ReportRow {
    pub method: String,
    pub condition: String,
    pub mean_success: f64,
    pub stddev: f64,
    pub n_seeds: usize,
}

pub fn write_report(roots: &[PathBuf], out_dir: &Path) -> Result<ReportOutcome> {
    let cells = find_cells(roots)?;
    if cells.is_empty() {
        return Err(config_error("no finished cells (cell.json) found under the given runs".into()));
    }
    fs::create_dir_all(out_dir)?;

    // Missing-seed warnings: planned vs present, per method.
    let mut warnings = Vec::new();
    let mut planned: BTreeMap<String, BTreeSet<u64>> = BTreeMap::new();
    let mut present: BTreeMap<String, BTreeSet<u64>> = BTreeMap::new();
    for (_, c) in &cells {
        planned.entry(c.method.clone()).or_default().extend(c.seeds_planned.iter().copied());
        present.entry(c.method.clone()).or_default().insert(c.seed);
    }
    for (method, want) in &planned {
        let have = &present[method];
        let missing: Vec<String> = want.difference(have).map(|s| s.to_string()).collect();
        if !missing.is_empty() {
            warnings.push(format!(
                "partial report: method '{method}' is missing seed(s) {}",
                missing.join(", ")
            ));
        }
    }
    for (_, c) in &cells {
        if let Some(d) = &c.diverged {
            warnings.push(format!(
                "method '{}' seed {} tripped the divergence guard at step {} (mean |Q| = {:.3e})",
                c.method, c.seed, d.step, d.mean_abs_q
            ));
        }
    }

    // Table rows.
    let mut by_key: BTreeMap<(String, String), Vec<f64>> = BTreeMap::new();
    for (_, c) in &cells {
        for (cond, rate) in &c.success {
            by_key.entry((c.method.clone(), cond.clone())).or_default().push(*rate);
        }
    }
    let mut rows = Vec::new();
    for ((method, condition), rates) in &by_key {
        let (mean, std) = mean_std(rates);
        rows.push(ReportRow {
            method: method.clone(),
            condition: condition.clone(),
            mean_success: mean,
            stddev: std,
            n_seeds: rates.len(),
        });
    }

    // report.csv
    let mut w = csv::Writer::from_path(out_dir.join("report.csv"))?;
    for r in &rows {
        w.serialize(r)?;
    }
    w.flush()?;

    // Learning curves: mean success by gradient step per (method, condition).
    let curves_dir = out_dir.join("curves");
    fs::create_dir_all(&curves_dir)?;
    let mut curve_data: BTreeMap<(String, String), BTreeMap<u64, Vec<f64>>> = BTreeMap::new();
    for (dir, c) in &cells {
        let path = dir.join(&c.metrics);
        if !path.exists() {
            warnings.push(format!(
                "method '{}' seed {}: metrics file {} is missing; curves skipped",
                c.method,
                c.seed,
                path.display()
            ));
            continue;
        }
        for p in metrics::eval_points(&metrics::read(&path)?) {
            curve_data
                .entry((c.method.clone(), p.condition.clone()))
                .or_default()
                .entry(p.step)
                .or_default()
                .push(p.success_rate);
        }
    }
    for ((method, condition), by_step) in &curve_data {
        let mut w =
            csv::Writer::from_path(curves_dir.join(format!("{method}-{condition}.csv")))?;
        w.write_record(["step", "mean_success", "n_seeds"])?;
        for (step, rates) in by_step {
            let (mean, _) = mean_std(rates);
            w.write_record([step.to_string(), format!("{mean}"), rates.len().to_string()])?;
        }
        w.flush()?;
    }

    // manifest.json: every artifact hash behind the table.
    #[derive(Serialize)]
    struct ManifestCell<'a> {
        dir: String,
        #[serde(flatten)]
        summary: &'a CellSummary,
    }
    let mut manifest: Vec<ManifestCell> = cells
        .iter()
        .map(|(dir, c)| ManifestCell { dir: dir.display().to_string(), summary: c })
        .collect();
    manifest.sort_by(|a, b| {
        (&a.summary.method, a.summary.seed, &a.dir).cmp(&(&b.summary.method, b.summary.seed, &b.dir))
    });
    fs::write(
        out_dir.join("manifest.json"),
        serde_json::to_string_pretty(&manifest)?.as_bytes(),
    )?;

    // report.md
    let mut md = String::new();
    md.push_str("# Success rates\n\n");
    md.push_str("Mean (population stddev) success over the seeds present, at the\n");
    md.push_str("best of each cell's last retained snapshots.\n\n");
    md.push_str(
        "Evaluation note: value-learned policies are read out deterministically\n\
         (tanh of the policy mean); behavior-cloned policies are sampled\n\
         stochastically, as recorded per cell in the manifest.\n\n",
    );
    md.push_str("| method | condition | success |\n|---|---|---|\n");
    for r in &rows {
        md.push_str(&format!(
            "| {} | {} | {:.3} ({:.3}) |\n",
            r.method, r.condition, r.mean_success, r.stddev
        ));
    }
    if !warnings.is_empty() {
        md.push_str("\n## Warnings\n\n");
        for wline in &warnings {
            md.push_str(&format!("- {wline}\n"));
        }
    }
    let mut f = fs::File::create(out_dir.join("report.md"))?;
    f.write_all(md.as_bytes())?;
    Ok(ReportOutcome { warnings, rows })
}
