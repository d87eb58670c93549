//! `cog` — dataset collection, offline training, evaluation, online
//! fine-tuning, reporting, and exact gridworld oracles, over the formats
//! defined in the `cog_cli` library crate.
//!
//! Exit codes: 0 success, 2 configuration error, 3 divergence-guard abort.

use std::path::PathBuf;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};

use cog_core::algo::TrainConfig;
use cog_core::data::{CollectKind, DataSource, Dataset};
use cog_core::env::{grid, make_env, tabletop, InitialCondition};
use cog_core::oracle::GridMdp;
use cog_core::rollout::{evaluate, EvalMode};
use cog_core::scripted::{collect, collect_tabletop_mode, ScriptedConfig, TabletopMode};
use cog_core::CoreError;

use cog_cli::config::{self, config_error};
use cog_cli::{ckpt, dataio, exit_code_for, harness, metrics};

#[derive(Parser)]
#[command(
    name = "cog",
    about = "Offline RL from prior + task data: collect, train, evaluate, fine-tune, report.",
    version
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Roll scripted policies and write a dataset.
    Collect(CollectArgs),
    /// Train one method over its seeds from a JSON experiment config.
    Train(TrainArgs),
    /// Success rate of a checkpoint under one initial condition.
    Eval(EvalArgs),
    /// Online fine-tuning from a checkpoint.
    Finetune(FinetuneArgs),
    /// Aggregate finished runs into a table, curves, and a manifest.
    Report(ReportArgs),
    /// Exact gridworld ground truth.
    Oracle(OracleArgs),
}

#[derive(Args)]
struct CollectArgs {
    /// Environment id: place_in_box, drawer_grasp, or drawer_grid.
    #[arg(long)]
    env: String,
    /// Dataset role: `prior` (reward-free, broad behaviors) or `task`.
    #[arg(long)]
    role: String,
    #[arg(long)]
    episodes: u32,
    /// Output path; `.bin` writes the binary container, else JSON-lines.
    #[arg(long)]
    out: PathBuf,
    /// Also write the binary mirror here.
    #[arg(long)]
    bin: Option<PathBuf>,
    /// Base seed (falls back to COG_SEED, then 0).
    #[arg(long)]
    seed: Option<u64>,
    /// Drawer prior mixture, e.g. open=0.35,close=0.35,pick_place=0.3.
    #[arg(long)]
    mix: Option<String>,
    /// `on` keeps task rewards, `off` zeroes them; prior data is always off.
    #[arg(long)]
    rewards: Option<String>,
    /// Collect with noise-free scripted controllers.
    #[arg(long)]
    noiseless: bool,
}

#[derive(Args)]
struct TrainArgs {
    /// JSON experiment config.
    #[arg(long)]
    config: PathBuf,
    /// Dotted overrides, e.g. --set train.alpha_cql=0.0 --set seeds=[7].
    #[arg(long = "set")]
    sets: Vec<String>,
    /// Override the config's method.
    #[arg(long)]
    method: Option<String>,
    /// Train a single seed (overrides the config's seed list).
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    env: String,
    #[arg(long)]
    ckpt: PathBuf,
    #[arg(long)]
    condition: String,
    #[arg(long, default_value_t = 250)]
    trials: u32,
    #[arg(long)]
    seed: Option<u64>,
    /// Sample the policy instead of taking the tanh mean.
    #[arg(long)]
    stochastic: bool,
}

#[derive(Args)]
struct FinetuneArgs {
    #[arg(long)]
    env: String,
    #[arg(long)]
    ckpt: PathBuf,
    #[arg(long)]
    condition: String,
    #[arg(long, default_value_t = 1000)]
    episodes: u32,
    /// Evaluate every this many episodes.
    #[arg(long, default_value_t = 50)]
    eval_every: u32,
    /// Trials per periodic evaluation.
    #[arg(long, default_value_t = 100)]
    trials: u32,
    /// Stop once the periodic eval reaches this success rate.
    #[arg(long)]
    stop_at: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory for metrics and the fine-tuned checkpoint.
    #[arg(long)]
    out: PathBuf,
    /// Fine-tune without the conservative penalty (plain SAC objective).
    #[arg(long)]
    sac: bool,
    /// Training preset: desk or paper.
    #[arg(long, default_value = "desk")]
    preset: String,
    /// Dotted train overrides, e.g. --set train.batch=128.
    #[arg(long = "set")]
    sets: Vec<String>,
}

#[derive(Args)]
struct ReportArgs {
    /// Run directories to aggregate (searched recursively for cells).
    #[arg(long, required = true, num_args = 1..)]
    runs: Vec<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct OracleArgs {
    #[command(subcommand)]
    cmd: OracleCmd,
}

#[derive(Subcommand)]
enum OracleCmd {
    /// Write the optimal Q-table of the gridworld as CSV.
    Dump {
        /// Grid length, accepted as `3` or `G=3`.
        #[arg(long, default_value = "6")]
        grid: String,
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() {
    let cli = Cli::parse();
    if let Err(e) = run(cli) {
        eprintln!("error: {e:#}");
        std::process::exit(exit_code_for(&e));
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.cmd {
        Cmd::Collect(a) => cmd_collect(a),
        Cmd::Train(a) => cmd_train(a),
        Cmd::Eval(a) => cmd_eval(a),
        Cmd::Finetune(a) => cmd_finetune(a),
        Cmd::Report(a) => cmd_report(a),
        Cmd::Oracle(a) => match a.cmd {
            OracleCmd::Dump { grid, out } => cmd_oracle_dump(&grid, &out),
        },
    }
}

/// Parses `open=0.35,close=0.35,pick_place=0.3`.
fn parse_mix(s: &str) -> Result<(f64, f64, f64)> {
    let (mut open, mut close, mut pick_place) = (None, None, None);
    for part in s.split(',') {
        let (k, v) = part
            .split_once('=')
            .ok_or_else(|| config_error(format!("--mix expects name=weight, got '{part}'")))?;
        let w: f64 = v
            .trim()
            .parse()
            .map_err(|_| config_error(format!("--mix weight '{v}' is not a number")))?;
        if !(w >= 0.0 && w.is_finite()) {
            return Err(config_error(format!("--mix weight {w} out of range")));
        }
        let slot = match k.trim() {
            "open" => &mut open,
            "close" => &mut close,
            "pick_place" => &mut pick_place,
            other => return Err(config_error(format!("--mix: unknown behavior '{other}'"))),
        };
        if slot.replace(w).is_some() {
            return Err(config_error(format!("--mix: behavior '{k}' given twice")));
        }
    }
    let (o, c, p) = (open.unwrap_or(0.0), close.unwrap_or(0.0), pick_place.unwrap_or(0.0));
    if (o + c + p - 1.0).abs() > 1e-6 {
        return Err(config_error(format!("--mix weights must sum to 1, got {}", o + c + p)));
    }
    Ok((o, c, p))
}

/// Drawer prior data with explicit mixture proportions: fixed episode
/// counts per behavior rather than per-episode draws.
fn collect_drawer_mixture(
    mix: (f64, f64, f64),
    episodes: u32,
    cfg: &ScriptedConfig,
    seed: u64,
) -> Result<Dataset> {
    use cog_core::rng;
    let n_open = (episodes as f64 * mix.0).round() as u32;
    let n_close = (episodes as f64 * mix.1).round() as u32;
    let n_pp = episodes.saturating_sub(n_open + n_close);
    let n_pp_a = n_pp / 2;
    let n_pp_b = n_pp - n_pp_a;
    let modes = [
        (TabletopMode::DrawerOpen, n_open, 0u64),
        (TabletopMode::DrawerClose, n_close, 1),
        (TabletopMode::PickPlace(tabletop::OBSTRUCTION), n_pp_a, 2),
        (TabletopMode::PickPlace(tabletop::DISTRACTOR), n_pp_b, 3),
    ];
    let mut parts = Vec::new();
    for (mode, n, stream) in modes {
        if n == 0 {
            continue;
        }
        let (ds, _) = collect_tabletop_mode(
            tabletop::SceneKind::Drawer,
            mode,
            DataSource::Randomized,
            n,
            cfg,
            rng::derive(seed, stream),
        )?;
        parts.push(ds);
    }
    let refs: Vec<&Dataset> = parts.iter().collect();
    let merged = Dataset::merge(&refs)?;
    Ok(merged.relabel_zero())
}

fn cmd_collect(a: CollectArgs) -> Result<()> {
    let kind = CollectKind::parse(&a.role).map_err(|e| config_error(e.to_string()))?;
    let seed = config::resolve_seed(a.seed)?;
    let cfg = if a.noiseless { ScriptedConfig::noiseless() } else { ScriptedConfig::default() };
    match (a.rewards.as_deref(), kind) {
        (Some("on"), CollectKind::Prior) => {
            return Err(config_error("prior data is reward-free by contract (--rewards on)".into()))
        }
        (None | Some("on") | Some("off"), _) => {}
        (Some(other), _) => {
            return Err(config_error(format!("--rewards expects on|off, got '{other}'")))
        }
    }
    let mut ds = match &a.mix {
        Some(mix) => {
            if a.env != tabletop::DRAWER_GRASP_ID || kind != CollectKind::Prior {
                return Err(config_error(
                    "--mix applies only to drawer_grasp prior collection".into(),
                ));
            }
            collect_drawer_mixture(parse_mix(mix)?, a.episodes, &cfg, seed)?
        }
        None => collect(&a.env, kind, a.episodes, &cfg, seed).map_err(anyhow::Error::new)?,
    };
    if a.rewards.as_deref() == Some("off") && ds.reward_labeled {
        ds = ds.relabel_zero();
    }
    dataio::save(&ds, &a.out)?;
    if let Some(bin) = &a.bin {
        dataio::save_binary(&ds, bin)?;
    }
    println!(
        "collected env={} role={} episodes={} transitions={} rewarded_steps={} -> {}",
        ds.env_id,
        kind.id(),
        a.episodes,
        ds.len(),
        ds.n_nonzero_rewards(),
        a.out.display()
    );
    Ok(())
}

fn cmd_train(a: TrainArgs) -> Result<()> {
    let mut sets = a.sets.clone();
    if let Some(m) = &a.method {
        sets.push(format!("method={m}"));
    }
    if let Some(s) = a.seed {
        sets.push(format!("seeds=[{s}]"));
    }
    let cfg = config::load(&a.config, &sets)?;
    let cells = harness::run_experiment(&cfg)?;
    let mut divergence = None;
    for c in &cells {
        match &c.diverged {
            Some(d) => {
                println!(
                    "cell method={} seed={} DIVERGED at step {} (mean |Q| {:.3e})",
                    c.method, c.seed, d.step, d.mean_abs_q
                );
                divergence = Some(d.clone());
            }
            None => {
                let rates: Vec<String> =
                    c.success.iter().map(|(k, v)| format!("{k}={v:.3}")).collect();
                println!(
                    "cell method={} seed={} best_step={} {}",
                    c.method,
                    c.seed,
                    c.best_step,
                    rates.join(" ")
                );
            }
        }
    }
    if let Some(d) = divergence {
        return Err(anyhow::Error::new(CoreError::Diverged {
            step: d.step,
            mean_abs_q: d.mean_abs_q,
        }));
    }
    Ok(())
}

fn cmd_eval(a: EvalArgs) -> Result<()> {
    let cond = InitialCondition::parse(&a.condition).map_err(|e| config_error(e.to_string()))?;
    let env = make_env(&a.env).map_err(|e| config_error(e.to_string()))?;
    if !env.valid_conditions().contains(&cond) {
        return Err(config_error(format!(
            "condition '{}' is not valid for environment '{}'",
            cond.id(),
            a.env
        )));
    }
    if a.trials == 0 {
        return Err(config_error("--trials must be ≥ 1".into()));
    }
    let seed = config::resolve_seed(a.seed)?;
    let agent = ckpt::load(&a.ckpt, &TrainConfig::desk())?;
    let mode = if a.stochastic { EvalMode::Stochastic } else { EvalMode::Deterministic };
    let rate = evaluate(&a.env, &agent.policy, cond, a.trials, seed, mode)
        .map_err(anyhow::Error::new)?;
    println!(
        "env={} condition={} trials={} seed={} success_rate={rate:.4}",
        a.env,
        cond.id(),
        a.trials,
        seed
    );
    Ok(())
}

fn cmd_finetune(a: FinetuneArgs) -> Result<()> {
    let cond = InitialCondition::parse(&a.condition).map_err(|e| config_error(e.to_string()))?;
    let seed = config::resolve_seed(a.seed)?;
    let mut cfg = match a.preset.as_str() {
        "desk" => TrainConfig::desk(),
        "paper" => TrainConfig::paper(),
        other => return Err(config_error(format!("unknown preset '{other}'"))),
    };
    for s in &a.sets {
        let (key, raw) = config::parse_set_arg(s)?;
        let key = key
            .strip_prefix("train.")
            .ok_or_else(|| config_error(format!("finetune --set expects train.* keys, got '{key}'")))?;
        let value: serde_json::Value =
            serde_json::from_str(raw).unwrap_or(serde_json::Value::String(raw.to_string()));
        config::apply_train_key(&mut cfg, key, &value)?;
    }
    if a.sac {
        cfg = cfg.sac_variant();
    }
    cfg.bc_warmstart_steps = 0; // the loaded policy is already trained
    let mut agent = ckpt::load(&a.ckpt, &cfg)?;
    std::fs::create_dir_all(&a.out)?;
    let out = harness::finetune(
        &mut agent,
        &a.env,
        cond,
        &cfg,
        seed,
        a.episodes,
        a.eval_every,
        a.trials,
        a.stop_at,
        EvalMode::Deterministic,
    )?;
    let ckpt_path = a.out.join("ckpt_finetuned.ckpt");
    ckpt::save(&agent, &ckpt_path)?;
    metrics::write(&a.out.join("metrics.csv"), &out.rows, &out.evals)?;
    let summary = serde_json::json!({
        "env": a.env,
        "condition": cond.id(),
        "seed": seed,
        "episodes_run": out.episodes_run,
        "reached_at": out.reached_at,
        "final_success": out.final_success,
        "checkpoint": "ckpt_finetuned.ckpt",
        "checkpoint_sha256": harness::sha256_hex(&ckpt_path)?,
        "metrics_sha256": harness::sha256_hex(&a.out.join("metrics.csv"))?,
    });
    std::fs::write(a.out.join("finetune.json"), serde_json::to_string_pretty(&summary)?)?;
    println!(
        "finetune env={} condition={} episodes_run={} reached_at={} final_success={:.4}",
        a.env,
        cond.id(),
        out.episodes_run,
        out.reached_at.map_or("never".to_string(), |e| e.to_string()),
        out.final_success
    );
    Ok(())
}

fn cmd_report(a: ReportArgs) -> Result<()> {
    let outcome = harness::write_report(&a.runs, &a.out)?;
    for w in &outcome.warnings {
        eprintln!("warning: {w}");
    }
    for r in &outcome.rows {
        println!(
            "{:<16} {:<18} {:.3} ({:.3}) [{} seed(s)]",
            r.method, r.condition, r.mean_success, r.stddev, r.n_seeds
        );
    }
    println!("report written to {}", a.out.display());
    Ok(())
}

fn cmd_oracle_dump(grid_arg: &str, out: &PathBuf) -> Result<()> {
    let cells_str = grid_arg.trim().trim_start_matches("G=").trim_start_matches("g=");
    let cells: usize = cells_str
        .parse()
        .map_err(|_| config_error(format!("--grid expects an integer (e.g. 3 or G=3), got '{grid_arg}'")))?;
    if !(3..=16).contains(&cells) {
        return Err(config_error(format!("--grid must be in 3..=16, got {cells}")));
    }
    let mdp = GridMdp::from_grid(cells);
    let q = mdp.value_iteration(0.99, 1e-9);
    let n_states = grid::n_states(cells);
    let mut w = csv::Writer::from_path(out)?;
    let mut header = vec![
        "state".to_string(),
        "gripper".to_string(),
        "drawer_open".to_string(),
        "blocker".to_string(),
        "object".to_string(),
    ];
    header.extend(grid::ACTION_NAMES.iter().map(|n| format!("q_{n}")));
    header.push("v_star".to_string());
    header.push("best_action".to_string());
    w.write_record(&header)?;
    for s in 0..n_states {
        let st = grid::GridState::from_index(s, cells);
        let row = &q[s * grid::N_ACTIONS..(s + 1) * grid::N_ACTIONS];
        let best = row
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .map(|(i, _)| i)
            .unwrap();
        let v: f64 = row[best];
        let mut rec = vec![
            s.to_string(),
            st.gripper.to_string(),
            st.drawer_open.to_string(),
            st.blocker.to_string(),
            match st.object {
                grid::ObjectLoc::InDrawer => "in_drawer".to_string(),
                grid::ObjectLoc::Held => "held".to_string(),
                grid::ObjectLoc::Out => "out".to_string(),
            },
        ];
        rec.extend(row.iter().map(|x| format!("{x}")));
        rec.push(format!("{v}"));
        rec.push(grid::ACTION_NAMES[best].to_string());
        w.write_record(&rec)?;
    }
    w.flush()?;
    println!("wrote Q* for {n_states} states to {}", out.display());
    Ok(())
}
