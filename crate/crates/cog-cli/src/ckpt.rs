//! Agent checkpoints.
//!
//! Flat versioned container: magic bytes `COGCKPT1`, then for each named
//! tensor a u32 little-endian name length, the UTF-8 name, a u32 rank,
//! the u32 dims, and the f64 little-endian values. Scalars such as the
//! temperature and step counter travel as rank-1 tensors under `meta/`.
//! Optimizer moments are not stored: loading a checkpoint resumes with
//! fresh Adam accumulators.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};

use cog_core::algo::{AgentState, TrainConfig};
use cog_core::rng;

const MAGIC: &[u8; 8] = b"COGCKPT1";

fn push_tensor(out: &mut Vec<u8>, name: &str, shape: &[usize], values: &[f64]) {
    out.extend_from_slice(&(name.len() as u32).to_le_bytes());
    out.extend_from_slice(name.as_bytes());
    out.extend_from_slice(&(shape.len() as u32).to_le_bytes());
    for &d in shape {
        out.extend_from_slice(&(d as u32).to_le_bytes());
    }
    for &v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

/// Serializes the agent (networks, temperature, step counter) to bytes.
pub fn to_bytes(agent: &AgentState) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    let hidden: Vec<f64> = agent.q1.spec.hidden.iter().map(|&h| h as f64).collect();
    push_tensor(&mut out, "meta/obs_dim", &[1], &[agent.obs_dim as f64]);
    push_tensor(&mut out, "meta/act_dim", &[1], &[agent.act_dim as f64]);
    push_tensor(&mut out, "meta/hidden", &[hidden.len()], &hidden);
    push_tensor(&mut out, "meta/log_temp", &[1], &[agent.log_temp]);
    push_tensor(&mut out, "meta/step", &[1], &[agent.step as f64]);
    agent.visit_params(&mut |name, shape, values| {
        push_tensor(&mut out, &name, shape, values);
    });
    out
}

pub fn save(agent: &AgentState, path: &Path) -> Result<()> {
    fs::write(path, to_bytes(agent)).with_context(|| format!("writing {}", path.display()))
}

struct Tensor {
    shape: Vec<usize>,
    values: Vec<f64>,
}

fn parse_tensors(bytes: &[u8], what: &str) -> Result<BTreeMap<String, Tensor>> {
    if !bytes.starts_with(MAGIC) {
        bail!("{what}: not a checkpoint (bad magic bytes)");
    }
    let mut pos = MAGIC.len();
    let take = |pos: &mut usize, n: usize| -> Result<&[u8]> {
        if *pos + n > bytes.len() {
            bail!("{what}: truncated at byte offset {pos}", pos = *pos);
        }
        let out = &bytes[*pos..*pos + n];
        *pos += n;
        Ok(out)
    };
    let mut tensors = BTreeMap::new();
    while pos < bytes.len() {
        let name_len = u32::from_le_bytes(take(&mut pos, 4)?.try_into().unwrap()) as usize;
        let name = String::from_utf8(take(&mut pos, name_len)?.to_vec())
            .with_context(|| format!("{what}: tensor name is not UTF-8"))?;
        let rank = u32::from_le_bytes(take(&mut pos, 4)?.try_into().unwrap()) as usize;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(u32::from_le_bytes(take(&mut pos, 4)?.try_into().unwrap()) as usize);
        }
        let count: usize = shape.iter().product();
        let mut values = Vec::with_capacity(count);
        for _ in 0..count {
            values.push(f64::from_le_bytes(take(&mut pos, 8)?.try_into().unwrap()));
        }
        if tensors.insert(name.clone(), Tensor { shape, values }).is_some() {
            bail!("{what}: duplicate tensor '{name}'");
        }
    }
    Ok(tensors)
}

fn meta_scalar(tensors: &BTreeMap<String, Tensor>, name: &str, what: &str) -> Result<f64> {
    let t = tensors
        .get(name)
        .with_context(|| format!("{what}: missing tensor '{name}'"))?;
    if t.values.len() != 1 {
        bail!("{what}: '{name}' should be a scalar, has {} values", t.values.len());
    }
    Ok(t.values[0])
}

/// Rebuilds an agent from checkpoint bytes. Learning rates and other
/// training knobs come from `cfg`; the architecture is read from the file
/// (`cfg.hidden` is ignored).
pub fn from_bytes(bytes: &[u8], cfg: &TrainConfig, what: &str) -> Result<AgentState> {
    let tensors = parse_tensors(bytes, what)?;
    let obs_dim = meta_scalar(&tensors, "meta/obs_dim", what)? as usize;
    let act_dim = meta_scalar(&tensors, "meta/act_dim", what)? as usize;
    if act_dim != cog_core::env::ACT_DIM {
        bail!("{what}: checkpoint act_dim {act_dim} != {}", cog_core::env::ACT_DIM);
    }
    let hidden_t = tensors
        .get("meta/hidden")
        .with_context(|| format!("{what}: missing tensor 'meta/hidden'"))?;
    let mut cfg = cfg.clone();
    cfg.hidden = hidden_t.values.iter().map(|&v| v as usize).collect();
    let mut agent = AgentState::new(obs_dim, &cfg, &mut rng::seeded(0))?;
    agent.log_temp = meta_scalar(&tensors, "meta/log_temp", what)?;
    agent.step = meta_scalar(&tensors, "meta/step", what)? as u64;
    let mut missing = Vec::new();
    agent.visit_params_mut(&mut |name, shape, values| {
        match tensors.get(&name) {
            None => {
                missing.push(name);
                Ok(())
            }
            Some(t) if t.shape != shape => Err(cog_core::CoreError::Shape(format!(
                "checkpoint tensor '{name}' has shape {:?}, agent expects {:?}",
                t.shape, shape
            ))),
            Some(t) => {
                values.copy_from_slice(&t.values);
                Ok(())
            }
        }
    })?;
    if !missing.is_empty() {
        bail!("{what}: missing tensors: {}", missing.join(", "));
    }
    Ok(agent)
}

pub fn load(path: &Path, cfg: &TrainConfig) -> Result<AgentState> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    from_bytes(&bytes, cfg, &path.display().to_string())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_agent(seed: u64) -> (AgentState, TrainConfig) {
        let mut cfg = TrainConfig::desk();
        cfg.hidden = vec![8, 8];
        let mut agent = AgentState::new(5, &cfg, &mut rng::seeded(seed)).unwrap();
        agent.log_temp = -0.37;
        agent.step = 1234;
        (agent, cfg)
    }

    fn params_of(agent: &AgentState) -> Vec<(String, Vec<usize>, Vec<f64>)> {
        let mut out = Vec::new();
        agent.visit_params(&mut |name, shape, values| {
            out.push((name, shape.to_vec(), values.to_vec()));
        });
        out
    }

    #[test]
    fn round_trip_preserves_every_tensor_and_scalar() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.ckpt");
        let (agent, cfg) = small_agent(7);
        save(&agent, &path).unwrap();
        let back = load(&path, &cfg).unwrap();
        assert_eq!(params_of(&agent), params_of(&back));
        assert_eq!(agent.log_temp, back.log_temp);
        assert_eq!(agent.step, back.step);
        assert_eq!(agent.obs_dim, back.obs_dim);
    }

    #[test]
    fn architecture_comes_from_the_file_not_the_config() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.ckpt");
        let (agent, _) = small_agent(7);
        save(&agent, &path).unwrap();
        let mut other = TrainConfig::desk();
        other.hidden = vec![32, 32];
        let back = load(&path, &other).unwrap();
        assert_eq!(back.q1.spec.hidden, vec![8, 8]);
        assert_eq!(params_of(&agent), params_of(&back));
    }

    #[test]
    fn serialization_is_deterministic() {
        let (agent, _) = small_agent(11);
        assert_eq!(to_bytes(&agent), to_bytes(&agent));
    }

    #[test]
    fn truncated_file_is_rejected() {
        let (agent, cfg) = small_agent(3);
        let bytes = to_bytes(&agent);
        let cut = &bytes[..bytes.len() - 9];
        let err = match from_bytes(cut, &cfg, "test") {
            Ok(_) => panic!("truncated checkpoint loaded"),
            Err(e) => e.to_string(),
        };
        assert!(err.contains("truncated"), "got: {err}");
    }

    #[test]
    fn bad_magic_is_rejected() {
        let (agent, cfg) = small_agent(3);
        let mut bytes = to_bytes(&agent);
        bytes[0] ^= 1;
        assert!(from_bytes(&bytes, &cfg, "test").is_err());
    }
}
