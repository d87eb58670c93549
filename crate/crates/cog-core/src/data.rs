//! Transition datasets for offline training.
//!
//! A [`Dataset`] is a flat list of environment transitions tagged with
//! trajectory and step indices, plus enough metadata (environment id,
//! observation layout version, collection seed, reset source) to replay
//! every trajectory through the deterministic simulator and to validate
//! integrity after deserialization.
//!
//! Prior data is made reward-free by [`Dataset::relabel_zero`]: the new
//! skill's reward is withheld from old experience, and value must instead
//! flow into it through Bellman backups when the sets are merged.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::Rng;

use crate::env::{self, Action8, InitialCondition, ACT_DIM};
use crate::error::CoreError;
use crate::rng::{self, Rng8};
use crate::Result;

/// Bumped whenever any environment's observation layout changes.
pub const OBS_LAYOUT_VERSION: u32 = 1;

/// Role of a dataset in the offline pipeline.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CollectKind {
    /// Broad multi-behavior data with rewards withheld.
    Prior,
    /// New-skill attempts with the task reward kept.
    Task,
}

impl CollectKind {
    pub fn id(&self) -> &'static str {
        match self {
            CollectKind::Prior => "prior",
            CollectKind::Task => "task",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "prior" => Ok(CollectKind::Prior),
            "task" => Ok(CollectKind::Task),
            other => Err(CoreError::Unknown(format!("dataset kind '{other}'"))),
        }
    }
}

/// Which reset distribution produced a dataset's trajectories.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DataSource {
    /// Broad randomized resets (reward-free prior collection).
    Randomized,
    /// Fixed named condition (task collection / evaluation).
    Condition(InitialCondition),
}

impl DataSource {
    pub fn id(&self) -> &'static str {
        match self {
            DataSource::Randomized => "randomized",
            DataSource::Condition(c) => c.id(),
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        if s == "randomized" {
            Ok(DataSource::Randomized)
        } else {
            Ok(DataSource::Condition(InitialCondition::parse(s)?))
        }
    }
}

/// One environment step.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub obs: Vec<f64>,
    pub action: [f64; ACT_DIM],
    pub reward: f64,
    pub next_obs: Vec<f64>,
    /// Trajectory index within the dataset.
    pub traj: u32,
    /// Step index within the trajectory.
    pub t: u32,
}

/// Flat transition store with provenance metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub env_id: String,
    pub obs_dim: usize,
    pub layout_version: u32,
    /// True when rewards are real task labels (not zero-relabeled).
    pub reward_labeled: bool,
    /// Base seed of the collection run; trajectory j was produced with the
    /// stream `rng::derive(seed, j)`.
    pub seed: u64,
    pub source: DataSource,
    pub transitions: Vec<Transition>,
}

/// Column-flattened minibatch, row-major [n, dim].
#[derive(Debug, Clone)]
pub struct Batch {
    pub n: usize,
    pub obs_dim: usize,
    pub act_dim: usize,
    pub obs: Vec<f64>,
    pub act: Vec<f64>,
    pub reward: Vec<f64>,
    pub next_obs: Vec<f64>,
}

impl Dataset {
    pub fn new(env_id: &str, obs_dim: usize, seed: u64, source: DataSource) -> Self {
        Dataset {
            env_id: String::from(env_id),
            obs_dim,
            layout_version: OBS_LAYOUT_VERSION,
            reward_labeled: true,
            seed,
            source,
            transitions: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.transitions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transitions.is_empty()
    }

    pub fn n_trajectories(&self) -> usize {
        self.transitions
            .iter()
            .map(|t| t.traj as usize + 1)
            .max()
            .unwrap_or(0)
    }

    pub fn n_nonzero_rewards(&self) -> usize {
        self.transitions.iter().filter(|t| t.reward != 0.0).count()
    }

    /// Structural integrity: consistent dims, finite values, in-range
    /// actions, known layout.
    pub fn validate(&self) -> Result<()> {
        if self.layout_version != OBS_LAYOUT_VERSION {
            return Err(CoreError::Data(format!(
                "observation layout v{} unsupported (expected v{OBS_LAYOUT_VERSION})",
                self.layout_version
            )));
        }
        for (i, tr) in self.transitions.iter().enumerate() {
            if tr.obs.len() != self.obs_dim || tr.next_obs.len() != self.obs_dim {
                return Err(CoreError::Data(format!(
                    "transition {i}: obs dims {}/{} != {}",
                    tr.obs.len(),
                    tr.next_obs.len(),
                    self.obs_dim
                )));
            }
            let finite = tr.obs.iter().chain(tr.next_obs.iter()).chain(tr.action.iter());
            for v in finite {
                if !v.is_finite() {
                    return Err(CoreError::Data(format!("transition {i}: non-finite value")));
                }
            }
            if !tr.reward.is_finite() {
                return Err(CoreError::Data(format!("transition {i}: non-finite reward")));
            }
            if tr.action.iter().any(|a| a.abs() > 1.0) {
                return Err(CoreError::Data(format!(
                    "transition {i}: action outside [-1, 1]"
                )));
            }
        }
        Ok(())
    }

    /// Wipes rewards: prior data carries no information about the new task.
    pub fn relabel_zero(mut self) -> Self {
        for t in self.transitions.iter_mut() {
            t.reward = 0.0;
        }
        self.reward_labeled = false;
        self
    }

    /// Concatenates datasets over the same environment. Trajectory indices
    /// are shifted so they stay unique; the result keeps each transition's
    /// reward as stored.
    pub fn merge(parts: &[&Dataset]) -> Result<Dataset> {
        let first = parts
            .first()
            .ok_or_else(|| CoreError::Data(String::from("merge: no datasets")))?;
        let mut out = Dataset::new(&first.env_id, first.obs_dim, first.seed, first.source);
        out.reward_labeled = parts.iter().any(|d| d.reward_labeled);
        let mut traj_base = 0u32;
        for d in parts {
            if d.env_id != first.env_id || d.obs_dim != first.obs_dim {
                return Err(CoreError::Data(format!(
                    "merge: dataset over '{}' ({}d) mixed with '{}' ({}d)",
                    d.env_id, d.obs_dim, first.env_id, first.obs_dim
                )));
            }
            let mut max_traj = 0;
            for tr in &d.transitions {
                let mut tr = tr.clone();
                max_traj = max_traj.max(tr.traj + 1);
                tr.traj += traj_base;
                out.transitions.push(tr);
            }
            traj_base += max_traj;
        }
        Ok(out)
    }

    /// Keeps only trajectories that collected at least one reward.
    pub fn successful_trajectories(&self) -> Dataset {
        let n = self.n_trajectories();
        let mut ok = alloc::vec![false; n];
        for tr in &self.transitions {
            if tr.reward > 0.0 {
                ok[tr.traj as usize] = true;
            }
        }
        let mut out = self.clone();
        out.transitions.retain(|tr| ok[tr.traj as usize]);
        out
    }

    /// Uniform i.i.d. minibatch with replacement.
    pub fn sample_batch(&self, n: usize, rng: &mut Rng8) -> Result<Batch> {
        if self.is_empty() {
            return Err(CoreError::Data(String::from("sample_batch: empty dataset")));
        }
        let mut b = Batch {
            n,
            obs_dim: self.obs_dim,
            act_dim: ACT_DIM,
            obs: Vec::with_capacity(n * self.obs_dim),
            act: Vec::with_capacity(n * ACT_DIM),
            reward: Vec::with_capacity(n),
            next_obs: Vec::with_capacity(n * self.obs_dim),
        };
        for _ in 0..n {
            let tr = &self.transitions[rng.gen_range(0..self.transitions.len())];
            b.obs.extend_from_slice(&tr.obs);
            b.act.extend_from_slice(&tr.action);
            b.reward.push(tr.reward);
            b.next_obs.extend_from_slice(&tr.next_obs);
        }
        Ok(b)
    }

    /// Replays every stored trajectory through the simulator and verifies
    /// the stored observation stream bit-for-bit. Rewards are checked only
    /// when this dataset still carries task labels.
    pub fn replay_check(&self) -> Result<()> {
        let mut env = env::make_env(&self.env_id)?;
        let n = self.n_trajectories() as u32;
        let mut idx = 0usize;
        for traj in 0..n {
            let mut r = rng::seeded(rng::derive(self.seed, traj as u64));
            let mut obs = match self.source {
                DataSource::Randomized => env.reset_randomized(&mut r),
                DataSource::Condition(c) => env.reset(c, &mut r)?,
            };
            while idx < self.transitions.len() && self.transitions[idx].traj == traj {
                let tr = &self.transitions[idx];
                if tr.obs != obs {
                    return Err(CoreError::Data(format!(
                        "replay: trajectory {traj} step {} diverges at the pre-step observation",
                        tr.t
                    )));
                }
                let (next, reward) = env.step(&Action8(tr.action));
                if tr.next_obs != next {
                    return Err(CoreError::Data(format!(
                        "replay: trajectory {traj} step {} diverges at the post-step observation",
                        tr.t
                    )));
                }
                if self.reward_labeled && tr.reward != reward {
                    return Err(CoreError::Data(format!(
                        "replay: trajectory {traj} step {} reward {} != {}",
                        tr.t, tr.reward, reward
                    )));
                }
                obs = next;
                idx += 1;
            }
        }
        if idx != self.transitions.len() {
            return Err(CoreError::Data(String::from(
                "replay: transitions not grouped by trajectory",
            )));
        }
        Ok(())
    }
}

/// Discrete-action transition for the tabular pipeline.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TabularTransition {
    pub s: usize,
    pub a: usize,
    pub r: f64,
    pub s2: usize,
}

/// Gridworld dataset over state/action indices.
#[derive(Debug, Clone, Default)]
pub struct TabularDataset {
    pub transitions: Vec<TabularTransition>,
}

impl TabularDataset {
    pub fn len(&self) -> usize {
        self.transitions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transitions.is_empty()
    }

    pub fn relabel_zero(mut self) -> Self {
        for t in self.transitions.iter_mut() {
            t.r = 0.0;
        }
        self
    }

    pub fn merge(parts: &[&TabularDataset]) -> TabularDataset {
        let mut out = TabularDataset::default();
        for p in parts {
            out.transitions.extend_from_slice(&p.transitions);
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    fn toy_dataset() -> Dataset {
        let mut d = Dataset::new("drawer_grid", 4, 7, DataSource::Randomized);
        for traj in 0..3u32 {
            for t in 0..4u32 {
                d.transitions.push(Transition {
                    obs: alloc::vec![traj as f64 * 0.1, 0.0, 0.0, t as f64 * 0.1],
                    action: [0.0; ACT_DIM],
                    reward: if traj == 1 && t == 3 { 1.0 } else { 0.0 },
                    next_obs: alloc::vec![0.0; 4],
                    traj,
                    t,
                });
            }
        }
        d
    }

    #[test]
    fn relabel_zeroes_every_reward() {
        let d = toy_dataset();
        assert_eq!(d.n_nonzero_rewards(), 1);
        let z = d.relabel_zero();
        assert_eq!(z.n_nonzero_rewards(), 0);
        assert!(!z.reward_labeled);
    }

    #[test]
    fn merge_concats_and_shifts_trajectories() {
        let a = toy_dataset();
        let b = toy_dataset().relabel_zero();
        let m = Dataset::merge(&[&a, &b]).unwrap();
        assert_eq!(m.len(), a.len() + b.len());
        assert_eq!(m.n_trajectories(), 6);
        assert!(m.reward_labeled);

        let mut c = toy_dataset();
        c.obs_dim = 5;
        assert!(Dataset::merge(&[&a, &c]).is_err());
    }

    #[test]
    fn successful_filter_keeps_rewarded_trajectories() {
        let d = toy_dataset();
        let s = d.successful_trajectories();
        assert_eq!(s.len(), 4);
        assert!(s.transitions.iter().all(|t| t.traj == 1));
    }

    #[test]
    fn sample_batch_is_seeded_and_well_shaped() {
        let d = toy_dataset();
        let b1 = d.sample_batch(32, &mut seeded(3)).unwrap();
        let b2 = d.sample_batch(32, &mut seeded(3)).unwrap();
        assert_eq!(b1.obs, b2.obs);
        assert_eq!(b1.n, 32);
        assert_eq!(b1.obs.len(), 32 * 4);
        assert_eq!(b1.act.len(), 32 * ACT_DIM);
        assert_eq!(b1.reward.len(), 32);
        let b3 = d.sample_batch(32, &mut seeded(4)).unwrap();
        assert_ne!(b1.obs, b3.obs);
    }

    #[test]
    fn validate_flags_bad_data() {
        let mut d = toy_dataset();
        assert!(d.validate().is_ok());
        d.transitions[0].action[2] = 1.5;
        assert!(matches!(d.validate(), Err(CoreError::Data(_))));
        let mut d = toy_dataset();
        d.transitions[1].obs[0] = f64::NAN;
        assert!(d.validate().is_err());
        let mut d = toy_dataset();
        d.layout_version = 99;
        assert!(d.validate().is_err());
    }
}
