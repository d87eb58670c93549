//! Experiment configuration: a JSON file, dotted `--set` overrides, and
//! the `COG_SEED` environment fallback.
//!
//! The file names an environment, a method, dataset paths, and optional
//! training overrides applied on top of a named preset (`desk` by
//! default, `paper` for full-scale settings). Anything wrong with a
//! configuration is a config-class error, which the CLI maps to exit
//! code 2 before any training starts.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde_json::Value;

use cog_core::algo::TrainConfig;
use cog_core::env::{make_env, InitialCondition};
use cog_core::CoreError;

/// Experiment cell dispatch.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    /// Offline conservative Q-learning on prior ∪ task data.
    Cog,
    /// Same objective on task data alone.
    NoPrior,
    /// Behavior cloning of prior ∪ task.
    BcAll,
    /// Clone the prior data, then run offline RL on the task data.
    BcInit,
    /// Behavior cloning of only the successful task trajectories.
    BcOracle,
    /// Plain soft actor-critic run offline (no conservative penalty).
    Sac,
    /// Clone prior ∪ task, then fine-tune online without the penalty.
    BcSacFinetune,
}

pub const ALL_METHODS: [Method; 6] =
    [Method::Cog, Method::NoPrior, Method::BcAll, Method::BcInit, Method::BcOracle, Method::Sac];

impl Method {
    pub fn id(&self) -> &'static str {
        match self {
            Method::Cog => "cog",
            Method::NoPrior => "no_prior",
            Method::BcAll => "bc_all",
            Method::BcInit => "bc_init",
            Method::BcOracle => "bc_oracle",
            Method::Sac => "sac",
            Method::BcSacFinetune => "bc_sac_finetune",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Ok(match s {
            "cog" => Method::Cog,
            "no_prior" => Method::NoPrior,
            "bc_all" => Method::BcAll,
            "bc_init" => Method::BcInit,
            "bc_oracle" => Method::BcOracle,
            "sac" => Method::Sac,
            "bc_sac_finetune" => Method::BcSacFinetune,
            other => return Err(config_error(format!("unknown method '{other}'"))),
        })
    }

    /// Does this method read the prior dataset?
    pub fn uses_prior(&self) -> bool {
        !matches!(self, Method::NoPrior | Method::BcOracle)
    }

    /// Is the policy read out stochastically at evaluation time?
    /// Cloned policies are; value-based policies use the tanh mean.
    pub fn stochastic_eval(&self) -> bool {
        matches!(self, Method::BcAll | Method::BcOracle | Method::BcSacFinetune)
    }
}

/// Everything one `train` invocation needs.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub env: String,
    pub method: Method,
    pub prior_data: Option<PathBuf>,
    pub task_data: PathBuf,
    pub out_dir: PathBuf,
    pub seeds: Vec<u64>,
    pub trials_per_condition: u32,
    /// Trials per condition for the cheap learning-curve evals taken at
    /// snapshot time (the full protocol runs only on the final pick).
    pub curve_trials: u32,
    pub conditions: Vec<InitialCondition>,
    /// Online episodes for the optional clone-then-fine-tune method.
    pub finetune_episodes: u32,
    pub train: TrainConfig,
}

/// Wraps a message as the config-class core error so the exit-code
/// contract can see it through `anyhow`.
pub fn config_error(msg: String) -> anyhow::Error {
    anyhow::Error::new(CoreError::Config(msg))
}

fn as_u64(v: &Value, key: &str) -> Result<u64> {
    v.as_u64().ok_or_else(|| config_error(format!("'{key}' must be a non-negative integer, got {v}")))
}

fn as_f64(v: &Value, key: &str) -> Result<f64> {
    v.as_f64().ok_or_else(|| config_error(format!("'{key}' must be a number, got {v}")))
}

fn as_bool(v: &Value, key: &str) -> Result<bool> {
    v.as_bool().ok_or_else(|| config_error(format!("'{key}' must be a boolean, got {v}")))
}

fn as_str<'v>(v: &'v Value, key: &str) -> Result<&'v str> {
    v.as_str().ok_or_else(|| config_error(format!("'{key}' must be a string, got {v}")))
}

/// Applies one `train.*` override onto a `TrainConfig` by field name.
pub fn apply_train_key(cfg: &mut TrainConfig, key: &str, v: &Value) -> Result<()> {
    match key {
        "gamma" => cfg.gamma = as_f64(v, key)?,
        "alpha_cql" => cfg.alpha_cql = as_f64(v, key)?,
        "lr_q" => cfg.lr_q = as_f64(v, key)?,
        "lr_policy" => cfg.lr_policy = as_f64(v, key)?,
        "lr_temp" => cfg.lr_temp = as_f64(v, key)?,
        "batch" => cfg.batch = as_u64(v, key)? as usize,
        "tau" => cfg.tau = as_f64(v, key)?,
        "n_negative" => cfg.n_negative = as_u64(v, key)? as usize,
        "bc_warmstart_steps" => cfg.bc_warmstart_steps = as_u64(v, key)?,
        "auto_entropy" => cfg.auto_entropy = as_bool(v, key)?,
        "target_entropy" => cfg.target_entropy = as_f64(v, key)?,
        "total_steps" => cfg.total_steps = as_u64(v, key)?,
        "eval_interval" => cfg.eval_interval = as_u64(v, key)?,
        "metric_interval" => cfg.metric_interval = as_u64(v, key)?,
        "entropy_backup" => cfg.entropy_backup = as_bool(v, key)?,
        "init_temperature" => cfg.init_temperature = as_f64(v, key)?,
        "hidden" => {
            let arr = v
                .as_array()
                .ok_or_else(|| config_error(format!("'train.hidden' must be an array, got {v}")))?;
            cfg.hidden = arr
                .iter()
                .map(|x| as_u64(x, "train.hidden[..]").map(|n| n as usize))
                .collect::<Result<_>>()?;
        }
        other => return Err(config_error(format!("unknown train key '{other}'"))),
    }
    Ok(())
}

/// Sets `root[path] = value` for a dotted path, creating objects on the way.
pub fn set_dotted(root: &mut Value, path: &str, raw: &str) -> Result<()> {
    let parsed: Value = serde_json::from_str(raw).unwrap_or(Value::String(raw.to_string()));
    let mut cur = root;
    let parts: Vec<&str> = path.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        if part.is_empty() {
            return Err(config_error(format!("empty key segment in '{path}'")));
        }
        if !cur.is_object() {
            return Err(config_error(format!("'{path}': segment before '{part}' is not an object")));
        }
        let map = cur.as_object_mut().unwrap();
        if i + 1 == parts.len() {
            map.insert(part.to_string(), parsed);
            return Ok(());
        }
        cur = map.entry(part.to_string()).or_insert_with(|| Value::Object(Default::default()));
    }
    unreachable!("split always yields at least one segment")
}

/// Parses one `--set key=value` argument.
pub fn parse_set_arg(arg: &str) -> Result<(&str, &str)> {
    arg.split_once('=')
        .ok_or_else(|| config_error(format!("--set expects key=value, got '{arg}'")))
}

/// Reads the `COG_SEED` environment variable, if present and valid.
pub fn env_seed() -> Result<Option<u64>> {
    match std::env::var("COG_SEED") {
        Ok(s) => {
            let v = s
                .trim()
                .parse::<u64>()
                .map_err(|_| config_error(format!("COG_SEED must be an integer, got '{s}'")))?;
            Ok(Some(v))
        }
        Err(_) => Ok(None),
    }
}

/// Single-seed fallback chain: explicit CLI flag, then `COG_SEED`, then 0.
pub fn resolve_seed(cli: Option<u64>) -> Result<u64> {
    if let Some(s) = cli {
        return Ok(s);
    }
    Ok(env_seed()?.unwrap_or(0))
}

/// Builds the runtime config from a parsed JSON value (file contents with
/// any `--set` overrides already applied).
pub fn from_value(mut v: Value, config_dir: &Path) -> Result<ExperimentConfig> {
    let obj = v
        .as_object_mut()
        .ok_or_else(|| config_error("config root must be a JSON object".into()))?;
    let known = [
        "env", "method", "prior_data", "task_data", "out_dir", "seeds",
        "trials_per_condition", "curve_trials", "conditions", "preset", "train",
        "finetune_episodes",
    ];
    for k in obj.keys() {
        if !known.contains(&k.as_str()) {
            return Err(config_error(format!("unknown config key '{k}'")));
        }
    }
    let env = as_str(obj.get("env").ok_or_else(|| config_error("missing 'env'".into()))?, "env")?
        .to_string();
    let env_obj = make_env(&env).map_err(anyhow::Error::new)?;
    let method = Method::parse(as_str(
        obj.get("method").ok_or_else(|| config_error("missing 'method'".into()))?,
        "method",
    )?)?;
    let rel = |p: &str| -> PathBuf {
        let pb = PathBuf::from(p);
        if pb.is_absolute() {
            pb
        } else {
            config_dir.join(pb)
        }
    };
    let task_data = rel(as_str(
        obj.get("task_data").ok_or_else(|| config_error("missing 'task_data'".into()))?,
        "task_data",
    )?);
    let prior_data = match obj.get("prior_data") {
        Some(Value::Null) | None => None,
        Some(p) => Some(rel(as_str(p, "prior_data")?)),
    };
    if method.uses_prior() && prior_data.is_none() {
        return Err(config_error(format!("method '{}' needs 'prior_data'", method.id())));
    }
    let out_dir = rel(as_str(
        obj.get("out_dir").ok_or_else(|| config_error("missing 'out_dir'".into()))?,
        "out_dir",
    )?);
    let seeds: Vec<u64> = match obj.get("seeds") {
        Some(v) => v
            .as_array()
            .ok_or_else(|| config_error("'seeds' must be an array".into()))?
            .iter()
            .map(|x| as_u64(x, "seeds[..]"))
            .collect::<Result<_>>()?,
        None => match env_seed()? {
            Some(s) => vec![s],
            None => vec![0, 1, 2],
        },
    };
    if seeds.is_empty() {
        return Err(config_error("'seeds' must not be empty".into()));
    }
    let trials_per_condition = match obj.get("trials_per_condition") {
        Some(v) => as_u64(v, "trials_per_condition")? as u32,
        None => 250,
    };
    if trials_per_condition == 0 {
        return Err(config_error("'trials_per_condition' must be ≥ 1".into()));
    }
    let curve_trials = match obj.get("curve_trials") {
        Some(v) => as_u64(v, "curve_trials")? as u32,
        None => 25,
    };
    let finetune_episodes = match obj.get("finetune_episodes") {
        Some(v) => as_u64(v, "finetune_episodes")? as u32,
        None => 100,
    };
    let conditions: Vec<InitialCondition> = match obj.get("conditions") {
        Some(v) => v
            .as_array()
            .ok_or_else(|| config_error("'conditions' must be an array".into()))?
            .iter()
            .map(|x| {
                InitialCondition::parse(as_str(x, "conditions[..]")?).map_err(anyhow::Error::new)
            })
            .collect::<Result<_>>()?,
        None => env_obj.valid_conditions().to_vec(),
    };
    if conditions.is_empty() {
        return Err(config_error("'conditions' must not be empty".into()));
    }
    for c in &conditions {
        if !env_obj.valid_conditions().contains(c) {
            return Err(config_error(format!(
                "condition '{}' is not valid for environment '{env}'",
                c.id()
            )));
        }
    }
    let mut train = match obj.get("preset") {
        Some(p) => match as_str(p, "preset")? {
            "desk" => TrainConfig::desk(),
            "paper" => TrainConfig::paper(),
            other => return Err(config_error(format!("unknown preset '{other}'"))),
        },
        None => TrainConfig::desk(),
    };
    if let Some(t) = obj.get("train") {
        let tobj = t
            .as_object()
            .ok_or_else(|| config_error("'train' must be an object".into()))?;
        for (k, v) in tobj {
            apply_train_key(&mut train, k, v)?;
        }
    }
    train.validate().map_err(anyhow::Error::new)?;
    Ok(ExperimentConfig {
        env,
        method,
        prior_data,
        task_data,
        out_dir,
        seeds,
        trials_per_condition,
        curve_trials,
        conditions,
        finetune_episodes,
        train,
    })
}

/// Loads a config file and applies `--set` overrides.
pub fn load(path: &Path, sets: &[String]) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading config {}", path.display()))?;
    let mut v: Value = serde_json::from_str(&text)
        .map_err(|e| config_error(format!("{}: invalid JSON: {e}", path.display())))?;
    for s in sets {
        let (key, raw) = parse_set_arg(s)?;
        set_dotted(&mut v, key, raw)?;
    }
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    from_value(v, dir)
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn base_value() -> Value {
        json!({
            "env": "drawer_grasp",
            "method": "cog",
            "prior_data": "/tmp/p.jsonl",
            "task_data": "/tmp/t.jsonl",
            "out_dir": "/tmp/out",
            "seeds": [0, 1],
            "train": {"total_steps": 123}
        })
    }

    #[test]
    fn parses_presets_and_overrides() {
        let cfg = from_value(base_value(), Path::new("/")).unwrap();
        assert_eq!(cfg.train.total_steps, 123);
        assert_eq!(cfg.train.hidden, vec![32, 32], "desk preset is the default");
        assert_eq!(cfg.seeds, vec![0, 1]);
        assert_eq!(cfg.conditions.len(), 4, "drawer scene conditions");
    }

    #[test]
    fn set_dotted_overrides_nested_and_scalar_keys() {
        let mut v = base_value();
        set_dotted(&mut v, "train.alpha_cql", "0.0").unwrap();
        set_dotted(&mut v, "method", "sac").unwrap();
        set_dotted(&mut v, "seeds", "[7]").unwrap();
        let cfg = from_value(v, Path::new("/")).unwrap();
        assert_eq!(cfg.train.alpha_cql, 0.0);
        assert_eq!(cfg.method, Method::Sac);
        assert_eq!(cfg.seeds, vec![7]);
    }

    #[test]
    fn unknown_keys_are_config_errors() {
        let mut v = base_value();
        set_dotted(&mut v, "train.learning_rate", "1.0").unwrap();
        let err = from_value(v, Path::new("/")).unwrap_err();
        assert_eq!(crate::exit_code_for(&err), 2);
        let mut v2 = base_value();
        set_dotted(&mut v2, "typo_key", "1").unwrap();
        assert_eq!(crate::exit_code_for(&from_value(v2, Path::new("/")).unwrap_err()), 2);
    }

    #[test]
    fn missing_prior_for_prior_method_is_a_config_error() {
        let mut v = base_value();
        v.as_object_mut().unwrap().remove("prior_data");
        let err = from_value(v, Path::new("/")).unwrap_err();
        assert_eq!(crate::exit_code_for(&err), 2);
        // …but fine for task-only methods.
        let mut v2 = base_value();
        v2.as_object_mut().unwrap().remove("prior_data");
        set_dotted(&mut v2, "method", "no_prior").unwrap();
        assert!(from_value(v2, Path::new("/")).is_ok());
    }

    #[test]
    fn invalid_condition_for_env_is_rejected() {
        let mut v = base_value();
        set_dotted(&mut v, "conditions", "[\"object_in_tray\"]").unwrap();
        let err = from_value(v, Path::new("/")).unwrap_err();
        assert_eq!(crate::exit_code_for(&err), 2);
    }

    #[test]
    fn relative_paths_resolve_against_the_config_directory() {
        let mut v = base_value();
        set_dotted(&mut v, "task_data", "data/t.jsonl").unwrap();
        let cfg = from_value(v, Path::new("/base")).unwrap();
        assert_eq!(cfg.task_data, PathBuf::from("/base/data/t.jsonl"));
    }
}
