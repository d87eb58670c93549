//! Policy rollouts and the success-rate evaluation protocol.
//!
//! Evaluation is exactly reproducible: trial `i` of a run with seed `s`
//! draws everything (reset and, for stochastic policies, action noise)
//! from the stream `rng::seeded(rng::derive(s, i))`.

use alloc::vec::Vec;

use rand::Rng;

use crate::data::Transition;
use crate::env::{make_env, Action8, AnyEnv, InitialCondition, ACT_DIM};
use crate::nn::PolicyNet;
use crate::rng::{self, Rng8};
use crate::Result;

/// How actions are drawn from the policy at rollout time.
///
/// Value-based methods are read out deterministically (tanh of the mean);
/// behavior-cloned policies are rolled out stochastically, since with
/// multimodal demonstrations their information lives in the full
/// distribution rather than its blended mean.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EvalMode {
    Deterministic,
    Stochastic,
}

/// One finished episode.
pub struct Episode {
    pub transitions: Vec<Transition>,
    pub success: bool,
}

/// Rolls one episode from the given condition for the environment's full
/// horizon. Transitions are recorded only when `record` is set (evaluation
/// does not need them).
pub fn run_episode(
    env: &mut AnyEnv,
    policy: &PolicyNet,
    cond: InitialCondition,
    mode: EvalMode,
    rng: &mut Rng8,
    traj: u32,
    record: bool,
) -> Result<Episode> {
    let mut obs = env.reset(cond, rng)?;
    let horizon = env.horizon();
    let mut transitions = Vec::new();
    let mut success = false;
    for t in 0..horizon {
        let act = match mode {
            EvalMode::Deterministic => policy.act_deterministic(&obs, 1)?,
            EvalMode::Stochastic => policy.sample(&obs, 1, rng)?.0,
        };
        let mut a = [0.0; ACT_DIM];
        a.copy_from_slice(&act);
        let (next, reward) = env.step(&Action8(a));
        success |= reward > 0.0;
        if record {
            transitions.push(Transition {
                obs: core::mem::take(&mut obs),
                action: a,
                reward,
                next_obs: next.clone(),
                traj,
                t: t as u32,
            });
        }
        obs = next;
    }
    Ok(Episode {
        transitions,
        success,
    })
}

/// Success rate over `trials` episodes (success = any step with reward).
pub fn evaluate(
    env_id: &str,
    policy: &PolicyNet,
    cond: InitialCondition,
    trials: u32,
    seed: u64,
    mode: EvalMode,
) -> Result<f64> {
    let mut env = make_env(env_id)?;
    let mut ok = 0u32;
    for trial in 0..trials {
        let mut r = rng::seeded(rng::derive(seed, trial as u64));
        if run_episode(&mut env, policy, cond, mode, &mut r, 0, false)?.success {
            ok += 1;
        }
    }
    Ok(ok as f64 / trials as f64)
}

/// Success rate of uniformly random actions; a floor for sanity checks.
pub fn evaluate_random(
    env_id: &str,
    cond: InitialCondition,
    trials: u32,
    seed: u64,
) -> Result<f64> {
    let mut env = make_env(env_id)?;
    let mut ok = 0u32;
    for trial in 0..trials {
        let mut r = rng::seeded(rng::derive(seed, trial as u64));
        let mut hit = false;
        env.reset(cond, &mut r)?;
        for _ in 0..env.horizon() {
            let mut a = [0.0; ACT_DIM];
            for v in a.iter_mut() {
                *v = r.gen_range(-1.0..=1.0);
            }
            let (_, reward) = env.step(&Action8(a));
            hit |= reward > 0.0;
        }
        if hit {
            ok += 1;
        }
    }
    Ok(ok as f64 / trials as f64)
}
