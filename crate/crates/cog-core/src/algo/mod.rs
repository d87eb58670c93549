//! Offline actor-critic training: conservative Q-learning, a plain
//! soft-actor-critic variant, behavior cloning, and online fine-tuning.
//!
//! The critic penalty works on importance-sampled estimates of
//! log-sum-exp of Q over the action box: per state, one uniform action,
//! one policy action at s, and one policy action at s' (Q still evaluated
//! at s), each weighted by its negative log-density. The penalty pushes
//! those values down while pushing Q at dataset actions up, so values stay
//! grounded in transitions the data actually supports — which is what lets
//! a sparse task reward propagate backwards through reward-free prior data
//! without the critic inflating unsupported actions.

pub mod tabular;

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use crate::data::{Batch, Dataset};
use crate::env::{make_env, InitialCondition, ACT_DIM};
use crate::error::CoreError;
use crate::nn::{self, soft_update, AdamState, Mlp, MlpSpec, PolicyNet};
use crate::rng::{self, Rng8};
use crate::rollout::{run_episode, EvalMode};
use crate::tensor::{Graph, TensorId};
use crate::Result;

const LN_2: f64 = core::f64::consts::LN_2;
/// Negative log-density of a uniform draw on the action box [-1,1]^8.
const UNIFORM_NEG_LOG_DENSITY: f64 = ACT_DIM as f64 * LN_2;

/// Distinct sub-streams per training seed.
const STREAM_TRAIN: u64 = 0x7261;
const STREAM_ONLINE: u64 = 0x6F6E;

/// Hyperparameters of the actor-critic trainers.
#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub gamma: f64,
    /// Weight of the conservative penalty; 0 disables it.
    pub alpha_cql: f64,
    pub lr_q: f64,
    pub lr_policy: f64,
    pub lr_temp: f64,
    pub batch: usize,
    /// Target-network update rate.
    pub tau: f64,
    /// Uniform negatives per state for the log-sum-exp estimate (the two
    /// policy samples are always added on top).
    pub n_negative: usize,
    /// Steps during which the actor trains by cloning instead of Q-ascent.
    pub bc_warmstart_steps: u64,
    pub auto_entropy: bool,
    pub target_entropy: f64,
    pub total_steps: u64,
    /// Snapshot hook cadence (0 = never).
    pub eval_interval: u64,
    /// Metric row cadence.
    pub metric_interval: u64,
    pub hidden: Vec<usize>,
    /// Include the entropy term inside the Bellman backup (plain SAC
    /// does; the conservative variant does not).
    pub entropy_backup: bool,
    pub init_temperature: f64,
}

impl TrainConfig {
    /// Full-scale settings.
    pub fn paper() -> Self {
        TrainConfig {
            gamma: 0.99,
            alpha_cql: 1.0,
            lr_q: 3e-4,
            lr_policy: 3e-5,
            lr_temp: 3e-4,
            batch: 256,
            tau: 0.005,
            n_negative: 1,
            bc_warmstart_steps: 10_000,
            auto_entropy: true,
            target_entropy: -(ACT_DIM as f64),
            total_steps: 1_000_000,
            eval_interval: 25_000,
            metric_interval: 1_000,
            hidden: vec![256, 256],
            entropy_backup: false,
            init_temperature: 1.0,
        }
    }

    /// Settings sized for a single laptop core: smaller networks and step
    /// budgets, same objective. The actor learning rate scales up to match
    /// the shorter run (the full-scale rate moves a small net too little
    /// in 40k steps to track the critic).
    pub fn desk() -> Self {
        TrainConfig {
            lr_policy: 1e-3,
            bc_warmstart_steps: 2_000,
            total_steps: 50_000,
            eval_interval: 5_000,
            metric_interval: 200,
            hidden: vec![32, 32],
            ..TrainConfig::paper()
        }
    }

    /// Converts any base config into the plain SAC baseline: no
    /// conservative penalty, entropy inside the backup, no cloning phase.
    pub fn sac_variant(mut self) -> Self {
        self.alpha_cql = 0.0;
        self.entropy_backup = true;
        self.bc_warmstart_steps = 0;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(CoreError::Config(format!("gamma {} outside (0,1)", self.gamma)));
        }
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return Err(CoreError::Config(format!("tau {} outside (0,1]", self.tau)));
        }
        for (name, v) in [
            ("lr_q", self.lr_q),
            ("lr_policy", self.lr_policy),
            ("lr_temp", self.lr_temp),
            ("init_temperature", self.init_temperature),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(CoreError::Config(format!("{name} must be positive, got {v}")));
            }
        }
        if self.alpha_cql < 0.0 || !self.alpha_cql.is_finite() {
            return Err(CoreError::Config(format!("alpha_cql {} negative", self.alpha_cql)));
        }
        if self.batch == 0 || self.n_negative == 0 {
            return Err(CoreError::Config(String::from(
                "batch and n_negative must be positive",
            )));
        }
        if self.hidden.is_empty() || self.hidden.iter().any(|&h| h == 0) {
            return Err(CoreError::Config(String::from("hidden layers must be nonempty")));
        }
        if !self.target_entropy.is_finite() {
            return Err(CoreError::Config(String::from("target_entropy must be finite")));
        }
        Ok(())
    }

    /// Critic magnitudes past this bound cannot come from {0,1} rewards;
    /// training aborts there.
    pub fn divergence_limit(&self) -> f64 {
        10.0 / (1.0 - self.gamma)
    }
}

/// Everything the trainers mutate.
pub struct AgentState {
    pub obs_dim: usize,
    pub act_dim: usize,
    pub q1: Mlp,
    pub q2: Mlp,
    pub target_q1: Mlp,
    pub target_q2: Mlp,
    pub policy: PolicyNet,
    pub log_temp: f64,
    pub adam_q1: AdamState,
    pub adam_q2: AdamState,
    pub adam_policy: AdamState,
    pub adam_temp: AdamState,
    pub step: u64,
}

impl AgentState {
    pub fn new(obs_dim: usize, cfg: &TrainConfig, rng: &mut Rng8) -> Result<Self> {
        cfg.validate()?;
        let q_spec = MlpSpec::new(obs_dim + ACT_DIM, &cfg.hidden, 1);
        let q1 = Mlp::new(q_spec.clone(), rng)?;
        let q2 = Mlp::new(q_spec, rng)?;
        let target_q1 = q1.clone();
        let target_q2 = q2.clone();
        let policy = PolicyNet::new(obs_dim, &cfg.hidden, ACT_DIM, rng)?;
        let adam_q1 = AdamState::for_mlp(cfg.lr_q, &q1);
        let adam_q2 = AdamState::for_mlp(cfg.lr_q, &q2);
        let adam_policy = policy.adam(cfg.lr_policy);
        let adam_temp = AdamState::new(cfg.lr_temp, &[1]);
        Ok(AgentState {
            obs_dim,
            act_dim: ACT_DIM,
            q1,
            q2,
            target_q1,
            target_q2,
            policy,
            log_temp: libm::log(cfg.init_temperature),
            adam_q1,
            adam_q2,
            adam_policy,
            adam_temp,
            step: 0,
        })
    }

    pub fn temperature(&self) -> f64 {
        libm::exp(self.log_temp)
    }

    /// Streams every learnable tensor as (name, shape, values).
    pub fn visit_params(&self, f: &mut dyn FnMut(String, &[usize], &[f64])) {
        self.q1.visit_params("q1", f);
        self.q2.visit_params("q2", f);
        self.target_q1.visit_params("target_q1", f);
        self.target_q2.visit_params("target_q2", f);
        self.policy.visit_params("policy", f);
    }

    pub fn visit_params_mut(
        &mut self,
        f: &mut dyn FnMut(String, &[usize], &mut [f64]) -> Result<()>,
    ) -> Result<()> {
        self.q1.visit_params_mut("q1", f)?;
        self.q2.visit_params_mut("q2", f)?;
        self.target_q1.visit_params_mut("target_q1", f)?;
        self.target_q2.visit_params_mut("target_q2", f)?;
        self.policy.visit_params_mut("policy", f)?;
        Ok(())
    }
}

/// Loss diagnostics for one gradient step.
#[derive(Debug, Clone, Copy)]
pub struct StepMetrics {
    pub q1_loss: f64,
    pub q2_loss: f64,
    pub policy_loss: f64,
    pub cql_penalty: f64,
    pub mean_q_data: f64,
    pub temperature: f64,
    /// True while the actor update is the cloning warmstart.
    pub bc_phase: bool,
}

/// One row of the training metrics stream.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricRow {
    pub step: u64,
    pub q1_loss: f64,
    pub q2_loss: f64,
    pub policy_loss: f64,
    pub cql_penalty: f64,
    pub mean_q_data: f64,
    pub temperature: f64,
    pub bc_phase: bool,
}

impl MetricRow {
    pub fn from_step(step: u64, m: &StepMetrics) -> Self {
        MetricRow {
            step,
            q1_loss: m.q1_loss,
            q2_loss: m.q2_loss,
            policy_loss: m.policy_loss,
            cql_penalty: m.cql_penalty,
            mean_q_data: m.mean_q_data,
            temperature: m.temperature,
            bc_phase: m.bc_phase,
        }
    }
}

/// Rows of `obs || act`, the critic's input layout.
fn join_obs_act(obs: &[f64], act: &[f64], n: usize, obs_dim: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(n * (obs_dim + ACT_DIM));
    for i in 0..n {
        out.extend_from_slice(&obs[i * obs_dim..(i + 1) * obs_dim]);
        out.extend_from_slice(&act[i * ACT_DIM..(i + 1) * ACT_DIM]);
    }
    out
}

/// Bellman backup values: y = r + gamma * min of the target critics at
/// (s', a' ~ pi(s')), minus the scaled entropy term only for the plain SAC
/// variant. No gradients flow through these.
pub fn bellman_targets(
    agent: &AgentState,
    batch: &Batch,
    cfg: &TrainConfig,
    rng: &mut Rng8,
) -> Result<Vec<f64>> {
    let n = batch.n;
    let (a2, logp2) = agent.policy.sample(&batch.next_obs, n, rng)?;
    let xa2 = join_obs_act(&batch.next_obs, &a2, n, agent.obs_dim);
    let t1 = agent.target_q1.forward(&xa2, n)?;
    let t2 = agent.target_q2.forward(&xa2, n)?;
    let temp = agent.temperature();
    let mut y = Vec::with_capacity(n);
    for i in 0..n {
        let mut v = t1[i].min(t2[i]);
        if cfg.entropy_backup {
            v -= temp * logp2[i];
        }
        y.push(batch.reward[i] + cfg.gamma * v);
    }
    Ok(y)
}

/// Sums gradients of one network's parameter leaves across several tape
/// emissions of the same network.
fn summed_grads(g: &Graph, handles: &[TensorId], n_params: usize) -> Vec<Vec<f64>> {
    let n_emit = handles.len() / n_params;
    (0..n_params)
        .map(|p| {
            let mut acc = g.grad(handles[p]).to_vec();
            for e in 1..n_emit {
                for (dst, src) in acc.iter_mut().zip(g.grad(handles[e * n_params + p])) {
                    *dst += src;
                }
            }
            acc
        })
        .collect()
}

fn apply_grads(adam: &mut AdamState, params: &mut [&mut [f64]], grads: &[Vec<f64>]) -> Result<()> {
    let slices: Vec<&[f64]> = grads.iter().map(|v| v.as_slice()).collect();
    adam.update(params, &slices)
}

/// Host-sampled action sets entering the conservative penalty as
/// constants: `n_negative` uniform draws plus one policy draw at s and
/// one at s' (with their log-probabilities).
pub struct CriticNegatives {
    pub uniform: Vec<f64>,
    pub a_pi: Vec<f64>,
    pub logp_pi: Vec<f64>,
    pub a_pi2: Vec<f64>,
    pub logp_pi2: Vec<f64>,
}

/// Draws the penalty's action samples for one batch.
pub fn sample_negatives(
    agent: &AgentState,
    batch: &Batch,
    cfg: &TrainConfig,
    rng: &mut Rng8,
) -> Result<CriticNegatives> {
    let n = batch.n;
    let mut uniform = vec![0.0; cfg.n_negative * n * ACT_DIM];
    for v in uniform.iter_mut() {
        *v = rng.gen_range(-1.0..=1.0);
    }
    let (a_pi, logp_pi) = agent.policy.sample(&batch.obs, n, rng)?;
    let (a_pi2, logp_pi2) = agent.policy.sample(&batch.next_obs, n, rng)?;
    Ok(CriticNegatives {
        uniform,
        a_pi,
        logp_pi,
        a_pi2,
        logp_pi2,
    })
}

/// Critic objective value and analytic gradients at fixed inputs; no
/// parameter or optimizer state changes. Errors with `Diverged` when the
/// data-action Q magnitude exceeds the guard limit.
pub struct CriticEval {
    pub q1_loss: f64,
    pub q2_loss: f64,
    pub cql_penalty: f64,
    pub mean_q_data: f64,
    pub grads_q1: Vec<Vec<f64>>,
    pub grads_q2: Vec<Vec<f64>>,
}

pub fn critic_eval(
    agent: &AgentState,
    batch: &Batch,
    y: &[f64],
    negs: &CriticNegatives,
    cfg: &TrainConfig,
) -> Result<CriticEval> {
    let n = batch.n;
    let obs_dim = agent.obs_dim;

    let xa_data = join_obs_act(&batch.obs, &batch.act, n, obs_dim);
    let xa_uniform: Vec<Vec<f64>> = (0..cfg.n_negative)
        .map(|k| {
            join_obs_act(
                &batch.obs,
                &negs.uniform[k * n * ACT_DIM..(k + 1) * n * ACT_DIM],
                n,
                obs_dim,
            )
        })
        .collect();
    let xa_pi = join_obs_act(&batch.obs, &negs.a_pi, n, obs_dim);
    let xa_pi2 = join_obs_act(&batch.obs, &negs.a_pi2, n, obs_dim);
    let n_terms = cfg.n_negative + 2;

    let mut g = Graph::new();
    let in_dim = obs_dim + ACT_DIM;
    let xd = g.leaf(&[n, in_dim], &xa_data)?;
    let xus: Vec<TensorId> = xa_uniform
        .iter()
        .map(|x| g.leaf(&[n, in_dim], x))
        .collect::<Result<_>>()?;
    let xp = g.leaf(&[n, in_dim], &xa_pi)?;
    let xp2 = g.leaf(&[n, in_dim], &xa_pi2)?;
    let yv = g.leaf(&[n], y)?;
    let lp_pi = g.leaf(&[n], &negs.logp_pi)?;
    let lp_pi2 = g.leaf(&[n], &negs.logp_pi2)?;

    let mut losses = [0.0; 2];
    let mut penalty_v = 0.0;
    let mut mean_q_v = 0.0;
    let mut mean_abs_q = 0.0;
    let mut grads: [Vec<Vec<f64>>; 2] = [Vec::new(), Vec::new()];
    let mut total: Option<TensorId> = None;
    let mut all_handles: [Vec<TensorId>; 2] = [Vec::new(), Vec::new()];

    for (hi, head) in [&agent.q1, &agent.q2].into_iter().enumerate() {
        let handles = &mut all_handles[hi];
        let qd_m = head.emit(&mut g, xd, handles)?;
        let qd = g.reshape(qd_m, &[n])?;
        let mut terms = Vec::with_capacity(n_terms);
        for xu in &xus {
            let qu_m = head.emit(&mut g, *xu, handles)?;
            let qu = g.reshape(qu_m, &[n])?;
            terms.push(g.affine(qu, 1.0, UNIFORM_NEG_LOG_DENSITY)?);
        }
        let qp_m = head.emit(&mut g, xp, handles)?;
        let qp = g.reshape(qp_m, &[n])?;
        terms.push(g.sub(qp, lp_pi)?);
        let qp2_m = head.emit(&mut g, xp2, handles)?;
        let qp2 = g.reshape(qp2_m, &[n])?;
        terms.push(g.sub(qp2, lp_pi2)?);

        let cat = g.stack_cols(&terms)?;
        let lse = g.logsumexp_rows(cat)?;
        let lse_mean = g.mean_all(lse)?;
        let qd_mean = g.mean_all(qd)?;
        let gap = g.sub(lse_mean, qd_mean)?;
        let penalty = g.affine(gap, 1.0, -libm::log(n_terms as f64))?;

        let diff = g.sub(qd, yv)?;
        let mse = g.square(diff).and_then(|d| g.mean_all(d))?;
        let bellman = g.affine(mse, 0.5, 0.0)?;
        let scaled_pen = g.affine(penalty, cfg.alpha_cql, 0.0)?;
        let head_loss = g.add(scaled_pen, bellman)?;

        losses[hi] = g.scalar(head_loss);
        if hi == 0 {
            penalty_v = g.scalar(penalty);
            mean_q_v = g.scalar(qd_mean);
        }
        mean_abs_q += g.value(qd).iter().map(|v| v.abs()).sum::<f64>() / (2.0 * n as f64);
        total = Some(match total {
            None => head_loss,
            Some(t) => g.add(t, head_loss)?,
        });
    }

    let limit = cfg.divergence_limit();
    if !mean_abs_q.is_finite() || mean_abs_q > limit {
        return Err(CoreError::Diverged {
            step: agent.step,
            mean_abs_q,
        });
    }

    g.backward(total.expect("two heads emitted"))?;
    for (hi, head) in [&agent.q1, &agent.q2].into_iter().enumerate() {
        grads[hi] = summed_grads(&g, &all_handles[hi], head.param_slices().len());
    }
    let [grads_q1, grads_q2] = grads;
    Ok(CriticEval {
        q1_loss: losses[0],
        q2_loss: losses[1],
        cql_penalty: penalty_v,
        mean_q_data: mean_q_v,
        grads_q1,
        grads_q2,
    })
}

/// One critic update on both heads: conservative penalty plus Bellman
/// regression toward `y`.
fn critic_step(
    agent: &mut AgentState,
    batch: &Batch,
    y: &[f64],
    cfg: &TrainConfig,
    rng: &mut Rng8,
) -> Result<CriticEval> {
    let negs = sample_negatives(agent, batch, cfg, rng)?;
    let eval = critic_eval(agent, batch, y, &negs, cfg)?;
    apply_grads(&mut agent.adam_q1, &mut agent.q1.param_slices_mut(), &eval.grads_q1)?;
    apply_grads(&mut agent.adam_q2, &mut agent.q2.param_slices_mut(), &eval.grads_q2)?;
    Ok(eval)
}

/// Behavior-cloning actor update: maximize log-likelihood of data actions.
/// Objective value plus analytic gradients for one actor-side loss; no
/// state changes.
pub struct ActorEval {
    pub loss: f64,
    /// Mean sample log-probability (drives the temperature update for the
    /// Q-guided loss; negative mean data log-likelihood for cloning).
    pub mean_logp: f64,
    pub grads: Vec<Vec<f64>>,
}

/// Negative mean log-likelihood of dataset actions under the policy.
pub fn bc_eval(policy: &PolicyNet, obs_dim: usize, obs: &[f64], act: &[f64], n: usize) -> Result<ActorEval> {
    let u: Vec<f64> = act.iter().map(|&a| nn::atanh_clamped(a)).collect();
    let mut g = Graph::new();
    let obs_l = g.leaf(&[n, obs_dim], obs)?;
    let u_l = g.leaf(&[n, ACT_DIM], &u)?;
    let mut handles = Vec::new();
    let (mean, log_std) = policy.emit(&mut g, obs_l, &mut handles)?;
    let lp = nn::squashed_logprob_graph(&mut g, mean, log_std, u_l)?;
    let lp_mean = g.mean_all(lp)?;
    let loss = g.affine(lp_mean, -1.0, 0.0)?;
    let loss_v = g.scalar(loss);
    let mean_logp = g.scalar(lp_mean);
    g.backward(loss)?;
    let grads = summed_grads(&g, &handles, policy.param_slices().len());
    Ok(ActorEval {
        loss: loss_v,
        mean_logp,
        grads,
    })
}

pub fn bc_step(agent: &mut AgentState, obs: &[f64], act: &[f64], n: usize) -> Result<f64> {
    let eval = bc_eval(&agent.policy, agent.obs_dim, obs, act, n)?;
    apply_grads(
        &mut agent.adam_policy,
        &mut agent.policy.param_slices_mut(),
        &eval.grads,
    )?;
    Ok(eval.loss)
}

/// Q-guided actor update with reparameterized samples; also tunes the
/// temperature toward the target entropy when enabled. Returns the loss.
/// Q-guided actor objective at fixed reparameterization noise `eps`
/// ([n * act_dim] standard normals): mean of temp * logp - min(Q1, Q2) at
/// reparameterized samples. No state changes.
pub fn policy_eval(agent: &AgentState, obs: &[f64], n: usize, eps: &[f64]) -> Result<ActorEval> {
    let mut g = Graph::new();
    let obs_l = g.leaf(&[n, agent.obs_dim], obs)?;
    let mut handles = Vec::new();
    let (mean, log_std) = agent.policy.emit(&mut g, obs_l, &mut handles)?;
    let eps_l = g.leaf(&[n, ACT_DIM], eps)?;
    let std = g.exp(log_std)?;
    let noise = g.mul(std, eps_l)?;
    let u = g.add(mean, noise)?;
    let act = g.tanh(u)?;
    let lp = nn::squashed_logprob_graph(&mut g, mean, log_std, u)?;

    let xa = g.concat_cols(&[obs_l, act])?;
    let mut q_handles = Vec::new();
    let q1_m = agent.q1.emit(&mut g, xa, &mut q_handles)?;
    let q2_m = agent.q2.emit(&mut g, xa, &mut q_handles)?;
    let q1v = g.reshape(q1_m, &[n])?;
    let q2v = g.reshape(q2_m, &[n])?;
    let qmin = g.min_elem(q1v, q2v)?;

    let temp = agent.temperature();
    let ent = g.affine(lp, temp, 0.0)?;
    let obj = g.sub(ent, qmin)?;
    let loss = g.mean_all(obj)?;
    let loss_v = g.scalar(loss);
    let lp_mean: f64 = g.value(lp).iter().sum::<f64>() / n as f64;
    g.backward(loss)?;
    let grads = summed_grads(&g, &handles, agent.policy.param_slices().len());
    Ok(ActorEval {
        loss: loss_v,
        mean_logp: lp_mean,
        grads,
    })
}

pub fn policy_step(
    agent: &mut AgentState,
    obs: &[f64],
    n: usize,
    cfg: &TrainConfig,
    rng: &mut Rng8,
) -> Result<f64> {
    let mut eps = vec![0.0; n * ACT_DIM];
    rng::fill_standard_normal(rng, &mut eps);
    let eval = policy_eval(agent, obs, n, &eps)?;
    let lp_mean = eval.mean_logp;
    apply_grads(
        &mut agent.adam_policy,
        &mut agent.policy.param_slices_mut(),
        &eval.grads,
    )?;

    if cfg.auto_entropy {
        // d/d(log temp) of  -temp_detached-free objective: the standard
        // closed form, pushing entropy toward the target.
        let grad = -(lp_mean + cfg.target_entropy);
        let mut slot = [agent.log_temp];
        agent
            .adam_temp
            .update(&mut [&mut slot], &[&[grad]])?;
        agent.log_temp = slot[0];
    }
    Ok(eval.loss)
}

/// One full gradient step: critic on both heads, actor (cloning during the
/// warmstart window), temperature, then target tracking.
pub fn gradient_step(
    agent: &mut AgentState,
    batch: &Batch,
    cfg: &TrainConfig,
    rng: &mut Rng8,
) -> Result<StepMetrics> {
    if batch.obs_dim != agent.obs_dim {
        return Err(CoreError::Shape(format!(
            "batch obs_dim {} != agent {}",
            batch.obs_dim, agent.obs_dim
        )));
    }
    let y = bellman_targets(agent, batch, cfg, rng)?;
    let critic = critic_step(agent, batch, &y, cfg, rng)?;
    let bc_phase = agent.step < cfg.bc_warmstart_steps;
    let policy_loss = if bc_phase {
        bc_step(agent, &batch.obs, &batch.act, batch.n)?
    } else {
        policy_step(agent, &batch.obs, batch.n, cfg, rng)?
    };
    soft_update(&mut agent.target_q1, &agent.q1, cfg.tau);
    soft_update(&mut agent.target_q2, &agent.q2, cfg.tau);
    agent.step += 1;
    Ok(StepMetrics {
        q1_loss: critic.q1_loss,
        q2_loss: critic.q2_loss,
        policy_loss,
        cql_penalty: critic.cql_penalty,
        mean_q_data: critic.mean_q_data,
        temperature: agent.temperature(),
        bc_phase,
    })
}

/// Trains an agent offline on one dataset (callers merge prior and task
/// sets beforehand). `snapshot` fires every `eval_interval` steps and at
/// the end; the returned rows sample the loss stream.
pub fn train_offline(
    data: &Dataset,
    cfg: &TrainConfig,
    seed: u64,
    mut snapshot: impl FnMut(&AgentState, u64) -> Result<()>,
) -> Result<(AgentState, Vec<MetricRow>)> {
    cfg.validate()?;
    data.validate()?;
    let mut rng = rng::seeded(rng::derive(seed, STREAM_TRAIN));
    let mut agent = AgentState::new(data.obs_dim, cfg, &mut rng)?;
    let mut rows = Vec::new();
    for step in 1..=cfg.total_steps {
        let batch = data.sample_batch(cfg.batch, &mut rng)?;
        let m = gradient_step(&mut agent, &batch, cfg, &mut rng)?;
        if step % cfg.metric_interval.max(1) == 0 || step == cfg.total_steps {
            rows.push(MetricRow::from_step(step, &m));
        }
        if cfg.eval_interval > 0 && (step % cfg.eval_interval == 0 || step == cfg.total_steps) {
            snapshot(&agent, step)?;
        }
    }
    Ok((agent, rows))
}

/// Pure behavior cloning of a dataset (critics never train).
pub fn train_bc(
    data: &Dataset,
    cfg: &TrainConfig,
    seed: u64,
    mut snapshot: impl FnMut(&AgentState, u64) -> Result<()>,
) -> Result<(AgentState, Vec<MetricRow>)> {
    cfg.validate()?;
    data.validate()?;
    let mut rng = rng::seeded(rng::derive(seed, STREAM_TRAIN));
    let mut agent = AgentState::new(data.obs_dim, cfg, &mut rng)?;
    let mut rows = Vec::new();
    for step in 1..=cfg.total_steps {
        let batch = data.sample_batch(cfg.batch, &mut rng)?;
        let loss = bc_step(&mut agent, &batch.obs, &batch.act, batch.n)?;
        agent.step += 1;
        if step % cfg.metric_interval.max(1) == 0 || step == cfg.total_steps {
            rows.push(MetricRow {
                step,
                q1_loss: 0.0,
                q2_loss: 0.0,
                policy_loss: loss,
                cql_penalty: 0.0,
                mean_q_data: 0.0,
                temperature: agent.temperature(),
                bc_phase: true,
            });
        }
        if cfg.eval_interval > 0 && (step % cfg.eval_interval == 0 || step == cfg.total_steps) {
            snapshot(&agent, step)?;
        }
    }
    Ok((agent, rows))
}

/// Online fine-tuning: alternate one stochastic episode into a fresh
/// online buffer with one gradient step per environment step, keeping the
/// offline objective. `on_episode` fires after each episode's updates and
/// may stop the run early by returning `Ok(false)`.
pub fn finetune_online(
    agent: &mut AgentState,
    env_id: &str,
    cond: InitialCondition,
    episodes: u32,
    cfg: &TrainConfig,
    seed: u64,
    mut on_episode: impl FnMut(&AgentState, u32) -> Result<bool>,
) -> Result<Vec<MetricRow>> {
    cfg.validate()?;
    let mut env = make_env(env_id)?;
    if env.obs_dim() != agent.obs_dim {
        return Err(CoreError::Config(format!(
            "environment '{env_id}' observes {}d, agent expects {}d",
            env.obs_dim(),
            agent.obs_dim
        )));
    }
    let mut rng = rng::seeded(rng::derive(seed, STREAM_ONLINE));
    let mut buffer = Dataset::new(env_id, agent.obs_dim, seed, crate::data::DataSource::Condition(cond));
    let mut rows = Vec::new();
    for ep in 0..episodes {
        let episode = run_episode(
            &mut env,
            &agent.policy,
            cond,
            EvalMode::Stochastic,
            &mut rng,
            ep,
            true,
        )?;
        let n_env_steps = episode.transitions.len();
        buffer.transitions.extend(episode.transitions);
        for _ in 0..n_env_steps {
            let batch = buffer.sample_batch(cfg.batch, &mut rng)?;
            let m = gradient_step(agent, &batch, cfg, &mut rng)?;
            if agent.step % cfg.metric_interval.max(1) == 0 {
                rows.push(MetricRow::from_step(agent.step, &m));
            }
        }
        if !on_episode(agent, ep)? {
            break;
        }
    }
    Ok(rows)
}
