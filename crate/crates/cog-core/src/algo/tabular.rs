//! Exact-table form of the conservative critic update for the discrete
//! gridworld, small enough to check against brute-force value iteration.
//!
//! Fixed-point form at covered pairs: Q(s,a) = target(s,a) −
//! α·(soft(a|s) − π̂(a|s)) / π̂(a|s), where soft is the softmax of the
//! current row (the gradient of log-sum-exp), π̂ the empirical action
//! frequency, and target the mean observed reward plus γ·max over the
//! recorded next state. Actions never seen at a visited state only feel
//! the push-down term, which is self-limiting as their softmax mass
//! vanishes. With α = 0 and full coverage the iteration is exactly
//! asynchronous value iteration.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::data::TabularDataset;
use crate::error::CoreError;
use crate::tensor::logsumexp;
use crate::Result;

#[derive(Debug, Clone)]
pub struct TabularCqlConfig {
    pub alpha: f64,
    pub gamma: f64,
    pub max_sweeps: u32,
    /// Stop once no table entry moves more than this in a sweep.
    pub tol: f64,
}

impl TabularCqlConfig {
    pub fn new(alpha: f64) -> Self {
        TabularCqlConfig {
            alpha,
            gamma: 0.99,
            max_sweeps: 60_000,
            tol: 5e-9,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(CoreError::Config(format!("gamma {} outside (0,1)", self.gamma)));
        }
        if self.alpha < 0.0 || !self.alpha.is_finite() {
            return Err(CoreError::Config(format!("alpha {} negative", self.alpha)));
        }
        if !(self.tol > 0.0) {
            return Err(CoreError::Config(format!("tol {} must be positive", self.tol)));
        }
        Ok(())
    }
}

/// Converged table plus how it got there.
#[derive(Debug, Clone)]
pub struct TabularSolution {
    /// Row-major [n_states, n_actions].
    pub q: Vec<f64>,
    pub sweeps: u32,
    pub converged: bool,
}

/// Per-state penalty: logsumexp of the row minus its mean under the
/// empirical action distribution.
pub fn penalty_value(q_row: &[f64], pi_hat: &[f64]) -> f64 {
    let mean: f64 = q_row.iter().zip(pi_hat).map(|(q, p)| q * p).sum();
    logsumexp(q_row) - mean
}

/// Gradient of [`penalty_value`] with respect to the row: softmax − π̂.
pub fn penalty_gradient(q_row: &[f64], pi_hat: &[f64]) -> Vec<f64> {
    let lse = logsumexp(q_row);
    q_row
        .iter()
        .zip(pi_hat)
        .map(|(q, p)| libm::exp(q - lse) - p)
        .collect()
}

struct PairStats {
    count: Vec<u32>,
    sum_r: Vec<f64>,
    next: Vec<usize>,
    state_count: Vec<u32>,
}

fn accumulate(n_states: usize, n_actions: usize, data: &TabularDataset) -> Result<PairStats> {
    let mut st = PairStats {
        count: vec![0; n_states * n_actions],
        sum_r: vec![0.0; n_states * n_actions],
        next: vec![usize::MAX; n_states * n_actions],
        state_count: vec![0; n_states],
    };
    for tr in &data.transitions {
        if tr.s >= n_states || tr.s2 >= n_states || tr.a >= n_actions {
            return Err(CoreError::Data(format!(
                "transition ({}, {}, {}) outside table {}x{}",
                tr.s, tr.a, tr.s2, n_states, n_actions
            )));
        }
        let idx = tr.s * n_actions + tr.a;
        if st.next[idx] != usize::MAX && st.next[idx] != tr.s2 {
            return Err(CoreError::Data(format!(
                "state {} action {} recorded two successors ({} and {})",
                tr.s, tr.a, st.next[idx], tr.s2
            )));
        }
        st.next[idx] = tr.s2;
        st.count[idx] += 1;
        st.sum_r[idx] += tr.r;
        st.state_count[tr.s] += 1;
    }
    Ok(st)
}

/// Push-down of never-seen actions stops this far below the best covered
/// value in the row; their softmax mass there (e^-25) is below the solver
/// tolerance, matching the limit of the gradient flow that sends them to
/// negative infinity.
const UNSUPPORTED_GAP: f64 = 25.0;

/// Solves x = target − (α/π̂)·(σ(x − rest) − π̂) for one table entry, where
/// σ(x − rest) is the entry's softmax mass against the fixed rest of its
/// row (rest = log Σ exp of the other entries). The left side grows
/// strictly faster than the right, so the root is unique; safeguarded
/// Newton from the current value.
fn solve_entry(x0: f64, target: f64, alpha: f64, pi_hat: f64, rest: f64) -> f64 {
    if alpha == 0.0 {
        return target;
    }
    let k = alpha / pi_hat;
    let f = |x: f64| {
        let s = 1.0 / (1.0 + libm::exp(-(x - rest)));
        (x - target + k * (s - pi_hat), 1.0 + k * s * (1.0 - s))
    };
    // The softmax mass is in (0,1), so the root lies in this bracket.
    let mut lo = target - k * (1.0 - pi_hat);
    let mut hi = target + k * pi_hat;
    let mut x = x0.clamp(lo, hi);
    for _ in 0..80 {
        let (fx, dfx) = f(x);
        if fx == 0.0 {
            return x;
        }
        if fx > 0.0 {
            hi = x;
        } else {
            lo = x;
        }
        let step = fx / dfx;
        let mut next = x - step;
        if !(next > lo && next < hi) {
            next = 0.5 * (lo + hi);
        }
        if (next - x).abs() < 1e-13 * (1.0 + x.abs()) {
            return next;
        }
        x = next;
    }
    x
}

/// Sweeps the stationarity condition of the penalized objective to
/// convergence (Gauss–Seidel over visited states) and returns the Q table
/// (zeros at never-visited states).
pub fn tabular_cql(
    n_states: usize,
    n_actions: usize,
    data: &TabularDataset,
    cfg: &TabularCqlConfig,
) -> Result<TabularSolution> {
    cfg.validate()?;
    if data.transitions.is_empty() {
        return Err(CoreError::Data("empty tabular dataset".into()));
    }
    let st = accumulate(n_states, n_actions, data)?;
    let visited: Vec<usize> = (0..n_states).filter(|&s| st.state_count[s] > 0).collect();

    let mut q = vec![0.0; n_states * n_actions];
    let mut others = vec![0.0; n_actions.saturating_sub(1)];
    let mut sweeps = 0;
    let mut converged = false;
    while sweeps < cfg.max_sweeps {
        sweeps += 1;
        let mut sup = 0.0f64;
        for &s in &visited {
            let row = s * n_actions;
            let n_s = st.state_count[s] as f64;
            let mut best_covered = f64::NEG_INFINITY;
            for a in 0..n_actions {
                let idx = row + a;
                if st.count[idx] == 0 {
                    continue;
                }
                let pi_hat = st.count[idx] as f64 / n_s;
                let r_mean = st.sum_r[idx] / st.count[idx] as f64;
                let s2 = st.next[idx] * n_actions;
                let vmax = q[s2..s2 + n_actions]
                    .iter()
                    .fold(f64::NEG_INFINITY, |m, &v| m.max(v));
                let target = r_mean + cfg.gamma * vmax;
                others.clear();
                for b in 0..n_actions {
                    if b != a {
                        others.push(q[row + b]);
                    }
                }
                let rest = logsumexp(&others);
                let old = q[idx];
                let new = solve_entry(old, target, cfg.alpha, pi_hat, rest);
                sup = sup.max((new - old).abs());
                q[idx] = new;
                best_covered = best_covered.max(new);
            }
            if cfg.alpha > 0.0 {
                for a in 0..n_actions {
                    let idx = row + a;
                    if st.count[idx] == 0 {
                        let new = best_covered - UNSUPPORTED_GAP;
                        sup = sup.max((new - q[idx]).abs());
                        q[idx] = new;
                    }
                }
            }
        }
        if sup < cfg.tol {
            converged = true;
            break;
        }
    }
    Ok(TabularSolution { q, sweeps, converged })
}

/// Mean Q over the dataset's (s,a) pairs, weighted by visitation.
pub fn dataset_mean_q(q: &[f64], n_actions: usize, data: &TabularDataset) -> f64 {
    if data.transitions.is_empty() {
        return 0.0;
    }
    let sum: f64 = data
        .transitions
        .iter()
        .map(|tr| q[tr.s * n_actions + tr.a])
        .sum();
    sum / data.transitions.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{CollectKind, TabularTransition};
    use crate::env::grid::{self, GridState, ObjectLoc};
    use crate::env::InitialCondition;
    use crate::oracle::{greedy_policy, GridMdp};
    use crate::scripted::{collect_grid_tabular, ScriptedConfig};

    const CELLS: usize = 6;

    fn full_coverage_dataset(cells: usize) -> TabularDataset {
        let mdp = GridMdp::from_grid(cells);
        let mut ds = TabularDataset::default();
        for s in 0..mdp.n_states {
            for a in 0..mdp.n_actions {
                ds.transitions.push(TabularTransition {
                    s,
                    a,
                    r: mdp.reward[s * mdp.n_actions + a],
                    s2: mdp.next[s * mdp.n_actions + a],
                });
            }
        }
        ds
    }

    /// Noiseless demonstrations: deterministic behavior at every state, the
    /// regime where the penalty's empirical frequencies are exact.
    fn scripted_grid_data(episodes_each: u32) -> TabularDataset {
        let cfg = ScriptedConfig {
            episode_len: 14,
            grid_eps: 0.0,
            ..ScriptedConfig::default()
        };
        let prior = collect_grid_tabular(CELLS, CollectKind::Prior, episodes_each, &cfg, 11);
        let task = collect_grid_tabular(CELLS, CollectKind::Task, episodes_each, &cfg, 12);
        TabularDataset::merge(&[&prior, &task])
    }

    fn start_state(cond: InitialCondition) -> usize {
        let (open, blocker) = match cond {
            InitialCondition::OpenDrawer => (true, false),
            InitialCondition::ClosedDrawer => (false, false),
            InitialCondition::BlockedDrawer1 => (false, true),
            _ => panic!("not a grid condition"),
        };
        GridState {
            gripper: 1,
            drawer_open: open,
            blocker,
            object: ObjectLoc::InDrawer,
        }
        .index(CELLS)
    }

    #[test]
    fn penalty_gradient_matches_finite_differences() {
        let rows = [
            ([0.3, -1.2, 2.0], [0.5, 0.25, 0.25]),
            ([0.0, 0.0, 0.0], [0.0, 1.0, 0.0]),
            ([5.0, -3.0, 0.7], [0.2, 0.0, 0.8]),
        ];
        let h = 1e-6;
        for (q_row, pi_hat) in rows {
            let grad = penalty_gradient(&q_row, &pi_hat);
            for a in 0..3 {
                let mut plus = q_row;
                plus[a] += h;
                let mut minus = q_row;
                minus[a] -= h;
                let fd = (penalty_value(&plus, &pi_hat) - penalty_value(&minus, &pi_hat)) / (2.0 * h);
                assert!(
                    (fd - grad[a]).abs() < 1e-7,
                    "row {q_row:?} action {a}: fd {fd} vs analytic {}",
                    grad[a]
                );
            }
        }
    }

    #[test]
    fn zero_alpha_full_coverage_recovers_optimal_q() {
        let mdp = GridMdp::from_grid(CELLS);
        let q_star = mdp.value_iteration(0.99, 5e-9);
        let data = full_coverage_dataset(CELLS);
        let sol = tabular_cql(mdp.n_states, mdp.n_actions, &data, &TabularCqlConfig::new(0.0))
            .unwrap();
        assert!(sol.converged, "did not converge in {} sweeps", sol.sweeps);
        let sup = sol
            .q
            .iter()
            .zip(&q_star)
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        assert!(sup < 1e-6, "sup |Q - Q*| = {sup:e}");
    }

    #[test]
    fn conservatism_grows_with_alpha() {
        // Full-coverage data: the empirical action distribution is uniform,
        // where pushing the log-sum-exp down while holding data actions up
        // can only lower values, and more strongly with larger alpha.
        let data = full_coverage_dataset(CELLS);
        let mdp = GridMdp::from_grid(CELLS);
        let mut means = Vec::new();
        let mut tables = Vec::new();
        for alpha in [0.0, 1.0, 10.0] {
            let sol = tabular_cql(mdp.n_states, mdp.n_actions, &data, &TabularCqlConfig::new(alpha))
                .unwrap();
            assert!(sol.converged, "alpha {alpha}: no convergence");
            means.push(dataset_mean_q(&sol.q, mdp.n_actions, &data));
            tables.push(sol.q);
        }
        assert!(
            means[0] > means[1] && means[1] > means[2],
            "mean Q not decreasing: {means:?}"
        );
        // Stronger, per-state form: mean Q of every visited state's row
        // (its expected Q under the uniform data distribution) never rises.
        for s in 0..mdp.n_states {
            let row_mean = |q: &Vec<f64>| -> f64 {
                q[s * mdp.n_actions..(s + 1) * mdp.n_actions].iter().sum::<f64>()
                    / mdp.n_actions as f64
            };
            let (m0, m1, m2) = (row_mean(&tables[0]), row_mean(&tables[1]), row_mean(&tables[2]));
            assert!(
                m0 >= m1 - 1e-9 && m1 >= m2 - 1e-9,
                "state {s}: per-state mean Q rose: {m0} {m1} {m2}"
            );
        }
    }

    #[test]
    fn values_on_demonstration_data_stay_near_truth() {
        // Guards against self-reinforcing value inflation in reward-free
        // regions: on noiseless demonstrations the learned values must stay
        // within the environment's true value range plus a small margin.
        let data = scripted_grid_data(120);
        let n_states = CELLS * 12;
        let sol = tabular_cql(n_states, grid::N_ACTIONS, &data, &TabularCqlConfig::new(1.0))
            .unwrap();
        assert!(sol.converged);
        let vmax_true = 1.0 / (1.0 - 0.99);
        let max_q = sol.q.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        // Demonstration data never visits post-success states, so value
        // chains end at the sparse reward and stay at most ~1.
        assert!(
            max_q < 0.05 * vmax_true,
            "values inflated on demonstration data: max Q = {max_q}"
        );
    }

    #[test]
    fn combined_data_stitches_but_task_only_does_not() {
        let mdp = GridMdp::from_grid(CELLS);
        let cfg = ScriptedConfig {
            episode_len: 14,
            grid_eps: 0.0,
            ..ScriptedConfig::default()
        };
        let task_only = collect_grid_tabular(CELLS, CollectKind::Task, 120, &cfg, 12);
        let combined = scripted_grid_data(120);
        let tcfg = TabularCqlConfig::new(1.0);
        let horizon = 40;

        let sol_task = tabular_cql(mdp.n_states, mdp.n_actions, &task_only, &tcfg).unwrap();
        let pi_task = greedy_policy(&sol_task.q, mdp.n_actions);
        assert!(mdp.rollout_success(&pi_task, start_state(InitialCondition::OpenDrawer), horizon));
        assert!(
            !mdp.rollout_success(&pi_task, start_state(InitialCondition::ClosedDrawer), horizon),
            "task-only data cannot know how to open the drawer"
        );

        let sol = tabular_cql(mdp.n_states, mdp.n_actions, &combined, &tcfg).unwrap();
        assert!(sol.converged);
        let pi = greedy_policy(&sol.q, mdp.n_actions);
        for cond in [
            InitialCondition::OpenDrawer,
            InitialCondition::ClosedDrawer,
            InitialCondition::BlockedDrawer1,
        ] {
            assert!(
                mdp.rollout_success(&pi, start_state(cond), horizon),
                "greedy policy failed from {}",
                cond.id()
            );
        }
    }

    #[test]
    fn inconsistent_successors_are_rejected() {
        let mut ds = TabularDataset::default();
        ds.transitions.push(TabularTransition { s: 0, a: 1, r: 0.0, s2: 2 });
        ds.transitions.push(TabularTransition { s: 0, a: 1, r: 0.0, s2: 3 });
        let err = tabular_cql(4, 2, &ds, &TabularCqlConfig::new(0.0)).unwrap_err();
        assert!(matches!(err, CoreError::Data(_)));
    }
}
