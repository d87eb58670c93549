//! Small fully-connected networks and their optimizer.
//!
//! Parameters live outside the autodiff tape in plain `Vec<f64>` storage.
//! Each training step re-registers them as graph leaves ([`Mlp::emit`]),
//! reads gradients back after `backward`, and applies an Adam update. All
//! networks also have tape-free forward paths for target computation and
//! rollouts, which produce bit-identical values to the graph path.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::CoreError;
use crate::rng::{self, Rng8};
use crate::tensor::{matmul_accum, softplus, Graph, TensorId};
use crate::Result;

pub const LOG_STD_MIN: f64 = -20.0;
pub const LOG_STD_MAX: f64 = 2.0;
const LN_2PI: f64 = 1.8378770664093453;
const LN_2: f64 = core::f64::consts::LN_2;

/// Hidden-layer activation. Only the rectifier is supported.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Activation {
    #[default]
    Relu,
}

/// Architecture of a fully-connected network.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpSpec {
    pub input_dim: usize,
    pub hidden: Vec<usize>,
    pub output_dim: usize,
    pub activation: Activation,
}

impl MlpSpec {
    pub fn new(input_dim: usize, hidden: &[usize], output_dim: usize) -> Self {
        MlpSpec {
            input_dim,
            hidden: hidden.to_vec(),
            output_dim,
            activation: Activation::Relu,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.output_dim == 0 {
            return Err(CoreError::Config(String::from(
                "MlpSpec: zero input or output width",
            )));
        }
        if self.hidden.iter().any(|&h| h == 0) {
            return Err(CoreError::Config(String::from("MlpSpec: zero hidden width")));
        }
        Ok(())
    }
}

/// One dense layer, weights stored row-major as [fan_in, fan_out].
#[derive(Debug, Clone)]
pub struct LinearParams {
    pub fan_in: usize,
    pub fan_out: usize,
    pub w: Vec<f64>,
    pub b: Vec<f64>,
}

impl LinearParams {
    /// Fan-in scaled uniform init, U(-scale/sqrt(fan_in), +scale/sqrt(fan_in)).
    pub fn init(rng: &mut Rng8, fan_in: usize, fan_out: usize, scale: f64) -> Self {
        let limit = scale / libm::sqrt(fan_in as f64);
        let w = (0..fan_in * fan_out)
            .map(|_| rng::uniform(rng, -limit, limit))
            .collect();
        let b = (0..fan_out).map(|_| rng::uniform(rng, -limit, limit)).collect();
        LinearParams {
            fan_in,
            fan_out,
            w,
            b,
        }
    }

    /// Tape-free y = x W + b for a [batch, fan_in] input.
    pub fn forward(&self, x: &[f64], batch: usize, out: &mut Vec<f64>) {
        out.clear();
        out.resize(batch * self.fan_out, 0.0);
        matmul_accum(x, &self.w, batch, self.fan_in, self.fan_out, out);
        for i in 0..batch {
            for j in 0..self.fan_out {
                out[i * self.fan_out + j] += self.b[j];
            }
        }
    }

    /// Registers w and b as leaves and emits x W + b onto the tape.
    pub fn emit(&self, g: &mut Graph, x: TensorId, handles: &mut Vec<TensorId>) -> Result<TensorId> {
        let w = g.leaf(&[self.fan_in, self.fan_out], &self.w)?;
        let b = g.leaf(&[self.fan_out], &self.b)?;
        handles.push(w);
        handles.push(b);
        let y = g.matmul(x, w)?;
        g.add_row(y, b)
    }
}

/// Multi-layer perceptron: rectified hidden layers, linear output.
#[derive(Debug, Clone)]
pub struct Mlp {
    pub spec: MlpSpec,
    pub layers: Vec<LinearParams>,
}

impl Mlp {
    pub fn new(spec: MlpSpec, rng: &mut Rng8) -> Result<Self> {
        spec.validate()?;
        let mut widths = vec![spec.input_dim];
        widths.extend_from_slice(&spec.hidden);
        widths.push(spec.output_dim);
        let layers = widths
            .windows(2)
            .map(|w| LinearParams::init(rng, w[0], w[1], 1.0))
            .collect();
        Ok(Mlp { spec, layers })
    }

    /// Tape-free forward for a [batch, input_dim] row-major input.
    pub fn forward(&self, x: &[f64], batch: usize) -> Result<Vec<f64>> {
        if x.len() != batch * self.spec.input_dim {
            return Err(CoreError::Shape(format!(
                "mlp forward: input len {} != batch {} x dim {}",
                x.len(),
                batch,
                self.spec.input_dim
            )));
        }
        let mut cur = x.to_vec();
        let mut buf = Vec::new();
        let last = self.layers.len() - 1;
        for (li, layer) in self.layers.iter().enumerate() {
            layer.forward(&cur, batch, &mut buf);
            if li != last {
                for v in buf.iter_mut() {
                    *v = v.max(0.0);
                }
            }
            core::mem::swap(&mut cur, &mut buf);
        }
        Ok(cur)
    }

    /// Emits the network onto the tape. Appends parameter leaf ids to
    /// `handles` in [`Mlp::param_slices`] order.
    pub fn emit(&self, g: &mut Graph, x: TensorId, handles: &mut Vec<TensorId>) -> Result<TensorId> {
        let last = self.layers.len() - 1;
        let mut cur = x;
        for (li, layer) in self.layers.iter().enumerate() {
            cur = layer.emit(g, cur, handles)?;
            if li != last {
                cur = g.relu(cur)?;
            }
        }
        Ok(cur)
    }

    /// Parameter tensors in emission order (w0, b0, w1, b1, ...).
    pub fn param_slices(&self) -> Vec<&[f64]> {
        let mut out = Vec::with_capacity(self.layers.len() * 2);
        for l in &self.layers {
            out.push(l.w.as_slice());
            out.push(l.b.as_slice());
        }
        out
    }

    pub fn param_slices_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = Vec::with_capacity(self.layers.len() * 2);
        for l in &mut self.layers {
            out.push(l.w.as_mut_slice());
            out.push(l.b.as_mut_slice());
        }
        out
    }

    /// Named tensors for checkpointing, in emission order.
    pub fn visit_params(&self, prefix: &str, f: &mut dyn FnMut(String, &[usize], &[f64])) {
        for (li, l) in self.layers.iter().enumerate() {
            f(format!("{prefix}.l{li}.w"), &[l.fan_in, l.fan_out], &l.w);
            f(format!("{prefix}.l{li}.b"), &[l.fan_out], &l.b);
        }
    }

    pub fn visit_params_mut(
        &mut self,
        prefix: &str,
        f: &mut dyn FnMut(String, &[usize], &mut [f64]) -> Result<()>,
    ) -> Result<()> {
        for (li, l) in self.layers.iter_mut().enumerate() {
            f(format!("{prefix}.l{li}.w"), &[l.fan_in, l.fan_out], &mut l.w)?;
            f(format!("{prefix}.l{li}.b"), &[l.fan_out], &mut l.b)?;
        }
        Ok(())
    }
}

/// Moves `target` towards `online` by fraction `tau` (Polyak averaging).
pub fn soft_update(target: &mut Mlp, online: &Mlp, tau: f64) {
    for (t, o) in target
        .param_slices_mut()
        .into_iter()
        .zip(online.param_slices())
    {
        for (tv, ov) in t.iter_mut().zip(o) {
            *tv += tau * (ov - *tv);
        }
    }
}

/// Adam with bias correction. Moment buffers are kept per parameter tensor,
/// aligned with the order the tensors are passed to [`AdamState::update`].
#[derive(Debug, Clone)]
pub struct AdamState {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub step: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl AdamState {
    pub fn new(lr: f64, param_sizes: &[usize]) -> Self {
        AdamState {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: param_sizes.iter().map(|&n| vec![0.0; n]).collect(),
            v: param_sizes.iter().map(|&n| vec![0.0; n]).collect(),
        }
    }

    pub fn for_mlp(lr: f64, mlp: &Mlp) -> Self {
        let sizes: Vec<usize> = mlp.param_slices().iter().map(|s| s.len()).collect();
        AdamState::new(lr, &sizes)
    }

    /// One update over aligned (parameter, gradient) tensor lists.
    pub fn update(&mut self, params: &mut [&mut [f64]], grads: &[&[f64]]) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(CoreError::Shape(format!(
                "adam: got {} params / {} grads, state has {}",
                params.len(),
                grads.len(),
                self.m.len()
            )));
        }
        self.step += 1;
        let bc1 = 1.0 - libm::pow(self.beta1, self.step as f64);
        let bc2 = 1.0 - libm::pow(self.beta2, self.step as f64);
        for ((p, g), (m, v)) in params
            .iter_mut()
            .zip(grads)
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            if p.len() != m.len() || g.len() != m.len() {
                return Err(CoreError::Shape(String::from("adam: tensor size mismatch")));
            }
            for i in 0..m.len() {
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g[i];
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g[i] * g[i];
                let mhat = m[i] / bc1;
                let vhat = v[i] / bc2;
                p[i] -= self.lr * mhat / (libm::sqrt(vhat) + self.eps);
            }
        }
        Ok(())
    }
}

/// Tanh-squashed diagonal Gaussian policy.
///
/// A rectified trunk feeds two linear heads (mean and log-stddev). Log-stddev
/// is clamped to [-20, 2]. Actions are tanh of the Gaussian sample, so every
/// component lies in (-1, 1), and log-probabilities carry the change-of-
/// variables correction log(1 - tanh(u)^2) computed in the stable softplus
/// form.
#[derive(Debug, Clone)]
pub struct PolicyNet {
    pub obs_dim: usize,
    pub act_dim: usize,
    pub trunk: Mlp,
    pub mean: LinearParams,
    pub log_std: LinearParams,
}

impl PolicyNet {
    /// The output heads use a 100x smaller init so initial actions stay near
    /// zero while log-stddev starts near zero (unit stddev).
    pub fn new(obs_dim: usize, hidden: &[usize], act_dim: usize, rng: &mut Rng8) -> Result<Self> {
        if hidden.is_empty() {
            return Err(CoreError::Config(String::from("policy: need a hidden layer")));
        }
        let feat = *hidden.last().unwrap();
        let trunk_spec = MlpSpec::new(obs_dim, &hidden[..hidden.len() - 1], feat);
        let trunk = Mlp::new(trunk_spec, rng)?;
        let mean = LinearParams::init(rng, feat, act_dim, 1e-2);
        let log_std = LinearParams::init(rng, feat, act_dim, 1e-2);
        Ok(PolicyNet {
            obs_dim,
            act_dim,
            trunk,
            mean,
            log_std,
        })
    }

    fn trunk_features(&self, obs: &[f64], batch: usize) -> Result<Vec<f64>> {
        let mut h = self.trunk.forward(obs, batch)?;
        // The trunk's final layer is part of the hidden stack, so rectify it.
        for v in h.iter_mut() {
            *v = v.max(0.0);
        }
        Ok(h)
    }

    /// Tape-free (mean, clamped log-stddev), each [batch * act_dim].
    pub fn forward(&self, obs: &[f64], batch: usize) -> Result<(Vec<f64>, Vec<f64>)> {
        let h = self.trunk_features(obs, batch)?;
        let mut mean = Vec::new();
        let mut log_std = Vec::new();
        self.mean.forward(&h, batch, &mut mean);
        self.log_std.forward(&h, batch, &mut log_std);
        for v in log_std.iter_mut() {
            *v = v.max(LOG_STD_MIN).min(LOG_STD_MAX);
        }
        Ok((mean, log_std))
    }

    /// Deterministic action: tanh of the mean.
    pub fn act_deterministic(&self, obs: &[f64], batch: usize) -> Result<Vec<f64>> {
        let (mut mean, _) = self.forward(obs, batch)?;
        for v in mean.iter_mut() {
            *v = libm::tanh(*v);
        }
        Ok(mean)
    }

    /// Stochastic sample with its log-probability, tape-free.
    ///
    /// Fixed seed, fixed parameters, fixed observation give a bit-identical
    /// action on every call.
    pub fn sample(
        &self,
        obs: &[f64],
        batch: usize,
        rng: &mut Rng8,
    ) -> Result<(Vec<f64>, Vec<f64>)> {
        let (mean, log_std) = self.forward(obs, batch)?;
        let mut act = vec![0.0; batch * self.act_dim];
        let mut logp = vec![0.0; batch];
        for i in 0..batch {
            for d in 0..self.act_dim {
                let idx = i * self.act_dim + d;
                let eps = rng::standard_normal(rng);
                let u = mean[idx] + libm::exp(log_std[idx]) * eps;
                act[idx] = libm::tanh(u);
                logp[i] += squashed_logprob_term(mean[idx], log_std[idx], u);
            }
        }
        Ok((act, logp))
    }

    /// Log-probability of given squashed actions, tape-free.
    pub fn log_prob(&self, obs: &[f64], act: &[f64], batch: usize) -> Result<Vec<f64>> {
        let (mean, log_std) = self.forward(obs, batch)?;
        let mut logp = vec![0.0; batch];
        for i in 0..batch {
            for d in 0..self.act_dim {
                let idx = i * self.act_dim + d;
                let u = atanh_clamped(act[idx]);
                logp[i] += squashed_logprob_term(mean[idx], log_std[idx], u);
            }
        }
        Ok(logp)
    }

    /// Emits (mean, clamped log-stddev) onto the tape.
    pub fn emit(
        &self,
        g: &mut Graph,
        x: TensorId,
        handles: &mut Vec<TensorId>,
    ) -> Result<(TensorId, TensorId)> {
        let pre = self.trunk.emit(g, x, handles)?;
        let h = g.relu(pre)?;
        let mean = self.mean.emit(g, h, handles)?;
        let raw = self.log_std.emit(g, h, handles)?;
        let log_std = g.clamp(raw, LOG_STD_MIN, LOG_STD_MAX)?;
        Ok((mean, log_std))
    }

    pub fn param_slices(&self) -> Vec<&[f64]> {
        let mut out = self.trunk.param_slices();
        out.push(&self.mean.w);
        out.push(&self.mean.b);
        out.push(&self.log_std.w);
        out.push(&self.log_std.b);
        out
    }

    pub fn param_slices_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = self.trunk.param_slices_mut();
        out.push(self.mean.w.as_mut_slice());
        out.push(self.mean.b.as_mut_slice());
        out.push(self.log_std.w.as_mut_slice());
        out.push(self.log_std.b.as_mut_slice());
        out
    }

    pub fn adam(&self, lr: f64) -> AdamState {
        let sizes: Vec<usize> = self.param_slices().iter().map(|s| s.len()).collect();
        AdamState::new(lr, &sizes)
    }

    pub fn visit_params(&self, prefix: &str, f: &mut dyn FnMut(String, &[usize], &[f64])) {
        self.trunk.visit_params(&format!("{prefix}.trunk"), f);
        let feat = self.mean.fan_in;
        f(format!("{prefix}.mean.w"), &[feat, self.act_dim], &self.mean.w);
        f(format!("{prefix}.mean.b"), &[self.act_dim], &self.mean.b);
        f(
            format!("{prefix}.log_std.w"),
            &[feat, self.act_dim],
            &self.log_std.w,
        );
        f(format!("{prefix}.log_std.b"), &[self.act_dim], &self.log_std.b);
    }

    pub fn visit_params_mut(
        &mut self,
        prefix: &str,
        f: &mut dyn FnMut(String, &[usize], &mut [f64]) -> Result<()>,
    ) -> Result<()> {
        self.trunk.visit_params_mut(&format!("{prefix}.trunk"), f)?;
        let feat = self.mean.fan_in;
        let act = self.act_dim;
        f(format!("{prefix}.mean.w"), &[feat, act], &mut self.mean.w)?;
        f(format!("{prefix}.mean.b"), &[act], &mut self.mean.b)?;
        f(format!("{prefix}.log_std.w"), &[feat, act], &mut self.log_std.w)?;
        f(format!("{prefix}.log_std.b"), &[act], &mut self.log_std.b)?;
        Ok(())
    }
}

/// One dimension's squashed-Gaussian log-density at pre-squash value u.
pub fn squashed_logprob_term(mean: f64, log_std: f64, u: f64) -> f64 {
    let z = (u - mean) * libm::exp(-log_std);
    let log_normal = -log_std - 0.5 * z * z - 0.5 * LN_2PI;
    let correction = 2.0 * (LN_2 - u - softplus(-2.0 * u));
    log_normal - correction
}

/// atanh with the argument pulled just inside (-1, 1) so data actions at the
/// boundary stay finite.
pub fn atanh_clamped(a: f64) -> f64 {
    let eps = 1e-6;
    let a = a.max(-1.0 + eps).min(1.0 - eps);
    0.5 * libm::log((1.0 + a) / (1.0 - a))
}

/// Tape version of the squashed log-probability: [batch, act_dim] mean,
/// log-stddev, and pre-squash values u produce a [batch] log-probability.
///
/// Works both for sampled u built on the tape (reparameterized gradients)
/// and for constant u leaves derived from data actions.
pub fn squashed_logprob_graph(
    g: &mut Graph,
    mean: TensorId,
    log_std: TensorId,
    u: TensorId,
) -> Result<TensorId> {
    let neg_log_std = g.neg(log_std)?;
    let inv_std = g.exp(neg_log_std)?;
    let diff = g.sub(u, mean)?;
    let z = g.mul(diff, inv_std)?;
    let z2 = g.square(z)?;
    // -(log_std + 0.5 z^2 + 0.5 ln 2pi)
    let t = g.affine(z2, 0.5, 0.5 * LN_2PI)?;
    let s = g.add(log_std, t)?;
    let log_normal = g.neg(s)?;
    // 2 (ln 2 - u - softplus(-2u))
    let m2u = g.affine(u, -2.0, 0.0)?;
    let sp = g.softplus(m2u)?;
    let usp = g.add(u, sp)?;
    let correction = g.affine(usp, -2.0, 2.0 * LN_2)?;
    let per_dim = g.sub(log_normal, correction)?;
    g.sum_rows(per_dim)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use alloc::vec;

    #[test]
    fn init_is_fan_in_bounded_and_deterministic() {
        let mut r1 = rng::seeded(5);
        let mut r2 = rng::seeded(5);
        let a = LinearParams::init(&mut r1, 16, 8, 1.0);
        let b = LinearParams::init(&mut r2, 16, 8, 1.0);
        assert_eq!(a.w, b.w);
        assert_eq!(a.b, b.b);
        let limit = 1.0 / 4.0;
        assert!(a.w.iter().all(|v| v.abs() <= limit));
        assert!(a.w.iter().any(|v| v.abs() > limit * 0.1));
    }

    #[test]
    fn plain_forward_matches_graph_forward() {
        let mut r = rng::seeded(6);
        let mlp = Mlp::new(MlpSpec::new(3, &[5, 4], 2), &mut r).unwrap();
        let x: Vec<f64> = (0..6).map(|i| 0.3 * i as f64 - 0.8).collect();
        let plain = mlp.forward(&x, 2).unwrap();

        let mut g = Graph::new();
        let xid = g.leaf(&[2, 3], &x).unwrap();
        let mut handles = Vec::new();
        let y = mlp.emit(&mut g, xid, &mut handles).unwrap();
        assert_eq!(g.value(y), plain.as_slice());
        assert_eq!(handles.len(), 6);
    }

    #[test]
    fn adam_first_step_is_lr_sized() {
        // With g constant, mhat/sqrt(vhat) = 1 on step one, so the update
        // is exactly lr / (1 + eps') regardless of gradient magnitude.
        let mut adam = AdamState::new(0.1, &[2]);
        let mut p = vec![1.0, -1.0];
        let g = vec![3.0, -0.004];
        adam.update(&mut [p.as_mut_slice()], &[g.as_slice()]).unwrap();
        assert!((p[0] - (1.0 - 0.1)).abs() < 1e-6, "{}", p[0]);
        assert!((p[1] - (-1.0 + 0.1)).abs() < 1e-6, "{}", p[1]);
    }

    #[test]
    fn adam_converges_on_a_quadratic() {
        let mut adam = AdamState::new(0.05, &[1]);
        let mut p = vec![5.0];
        for _ in 0..2000 {
            let g = vec![2.0 * (p[0] - 1.5)];
            adam.update(&mut [p.as_mut_slice()], &[g.as_slice()]).unwrap();
        }
        assert!((p[0] - 1.5).abs() < 1e-3, "{}", p[0]);
    }

    #[test]
    fn soft_update_moves_by_tau() {
        let mut r = rng::seeded(7);
        let online = Mlp::new(MlpSpec::new(2, &[3], 1), &mut r).unwrap();
        let mut target = Mlp::new(MlpSpec::new(2, &[3], 1), &mut r).unwrap();
        let before = target.layers[0].w[0];
        let want = before + 0.25 * (online.layers[0].w[0] - before);
        soft_update(&mut target, &online, 0.25);
        assert!((target.layers[0].w[0] - want).abs() < 1e-12);
        // tau = 1 copies exactly.
        soft_update(&mut target, &online, 1.0);
        assert_eq!(target.layers[0].w, online.layers[0].w);
    }

    #[test]
    fn log_std_clamp_is_applied() {
        let mut r = rng::seeded(8);
        let mut pol = PolicyNet::new(2, &[4], 3, &mut r).unwrap();
        // Force a huge bias so the raw head falls outside the clamp range.
        for v in pol.log_std.b.iter_mut() {
            *v = 50.0;
        }
        let (_, log_std) = pol.forward(&[0.1, -0.2], 1).unwrap();
        assert!(log_std.iter().all(|&v| v == LOG_STD_MAX));
    }

    #[test]
    fn sampling_is_deterministic_under_fixed_seed() {
        let mut r = rng::seeded(9);
        let pol = PolicyNet::new(3, &[8, 8], 2, &mut r).unwrap();
        let obs = [0.4, -0.7, 0.2];
        let (a1, l1) = pol.sample(&obs, 1, &mut rng::seeded(42)).unwrap();
        let (a2, l2) = pol.sample(&obs, 1, &mut rng::seeded(42)).unwrap();
        assert_eq!(a1, a2);
        assert_eq!(l1, l2);
        assert!(a1.iter().all(|v| v.abs() < 1.0));
    }

    #[test]
    fn host_and_graph_logprob_agree() {
        let mut r = rng::seeded(10);
        let pol = PolicyNet::new(3, &[6], 2, &mut r).unwrap();
        let obs = [0.3, 0.1, -0.5, 0.9, -0.2, 0.0];
        let act = [0.3, -0.8, 0.99, -0.1];
        let host = pol.log_prob(&obs, &act, 2).unwrap();

        let mut g = Graph::new();
        let xid = g.leaf(&[2, 3], &obs).unwrap();
        let mut handles = Vec::new();
        let (mean, log_std) = pol.emit(&mut g, xid, &mut handles).unwrap();
        let u: Vec<f64> = act.iter().map(|&a| atanh_clamped(a)).collect();
        let uid = g.leaf(&[2, 2], &u).unwrap();
        let lp = squashed_logprob_graph(&mut g, mean, log_std, uid).unwrap();
        for (h, t) in host.iter().zip(g.value(lp)) {
            assert!((h - t).abs() < 1e-12, "{h} vs {t}");
        }
    }

    #[test]
    fn squashed_density_integrates_to_one() {
        // Monte Carlo over the 1-D action interval (-1, 1): the mean of
        // exp(log pi(a)) * 2 over uniform a estimates the total mass.
        let mut r = rng::seeded(11);
        let pol = PolicyNet::new(2, &[8], 1, &mut r).unwrap();
        let obs = [0.25, -0.4];
        let (mean, log_std) = pol.forward(&obs, 1).unwrap();
        let mut acc = 0.0;
        let n = 1_000_000;
        let mut sampler = rng::seeded(12);
        for _ in 0..n {
            let a = rng::uniform(&mut sampler, -1.0, 1.0);
            let u = atanh_clamped(a);
            acc += libm::exp(squashed_logprob_term(mean[0], log_std[0], u));
        }
        let mass = 2.0 * acc / n as f64;
        assert!((mass - 1.0).abs() < 0.01, "mass {mass}");
    }

    #[test]
    fn policy_gradients_match_finite_differences() {
        // Perturb a single weight of each head and compare the loss slope
        // against the tape gradient for a BC-style loss.
        let mut r = rng::seeded(13);
        let pol = PolicyNet::new(2, &[4], 2, &mut r).unwrap();
        let obs = [0.2, -0.6, 0.5, 0.1];
        let act = [0.4, -0.3, -0.7, 0.6];

        let loss_of = |p: &PolicyNet| -> f64 {
            let lp = p.log_prob(&obs, &act, 2).unwrap();
            -(lp[0] + lp[1]) / 2.0
        };

        let mut g = Graph::new();
        let xid = g.leaf(&[2, 2], &obs).unwrap();
        let mut handles = Vec::new();
        let (mean, log_std) = pol.emit(&mut g, xid, &mut handles).unwrap();
        let u: Vec<f64> = act.iter().map(|&a| atanh_clamped(a)).collect();
        let uid = g.leaf(&[2, 2], &u).unwrap();
        let lp = squashed_logprob_graph(&mut g, mean, log_std, uid).unwrap();
        let mlp = g.mean_all(lp).unwrap();
        let loss = g.neg(mlp).unwrap();
        g.backward(loss).unwrap();

        // handles order: trunk w, trunk b, mean.w, mean.b, log_std.w, log_std.b
        let checks = [(0usize, 3usize), (2, 1), (4, 2)];
        let h = 1e-6;
        for &(hi, elem) in &checks {
            let analytic = g.grad(handles[hi])[elem];
            let mut plus = pol.clone();
            plus.param_slices_mut()[hi][elem] += h;
            let mut minus = pol.clone();
            minus.param_slices_mut()[hi][elem] -= h;
            let numeric = (loss_of(&plus) - loss_of(&minus)) / (2.0 * h);
            assert!(
                (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1.0) < 1e-5,
                "handle {hi} elem {elem}: {analytic} vs {numeric}"
            );
        }
    }

    #[test]
    fn checkpoint_roundtrip_preserves_params() {
        let mut r = rng::seeded(14);
        let pol = PolicyNet::new(3, &[4, 4], 2, &mut r).unwrap();
        let mut named = alloc::collections::BTreeMap::new();
        pol.visit_params("pi", &mut |name, shape, data| {
            named.insert(name, (shape.to_vec(), data.to_vec()));
        });
        assert!(named.contains_key("pi.trunk.l0.w"));
        assert!(named.contains_key("pi.mean.b"));

        let mut other = PolicyNet::new(3, &[4, 4], 2, &mut rng::seeded(99)).unwrap();
        other
            .visit_params_mut("pi", &mut |name, shape, data| {
                let (s, d) = named.get(&name).expect("missing tensor");
                assert_eq!(s.as_slice(), shape);
                data.copy_from_slice(d);
                Ok(())
            })
            .unwrap();
        assert_eq!(other.param_slices(), pol.param_slices());
    }
}
