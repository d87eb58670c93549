//! Ground-truth machinery for the gridworld.
//!
//! The gridworld is small enough to solve exactly, so learned tabular
//! values and policies can be judged against an independent reference:
//! dynamics tables enumerated straight from the step function, Q* from
//! value iteration, reachability from breadth-first search, and exact
//! success probabilities from propagating the state distribution.

use alloc::collections::VecDeque;
use alloc::vec;
use alloc::vec::Vec;

use crate::env::grid::{self, GridState, ObjectLoc};

/// Deterministic MDP tables `next[s * A + a]`, `reward[s * A + a]`.
pub struct GridMdp {
    pub cells: usize,
    pub n_states: usize,
    pub n_actions: usize,
    pub next: Vec<usize>,
    pub reward: Vec<f64>,
}

impl GridMdp {
    /// Enumerates the dynamics of every (state, action) pair.
    pub fn from_grid(cells: usize) -> Self {
        let n_states = grid::n_states(cells);
        let n_actions = grid::N_ACTIONS;
        let mut next = vec![0usize; n_states * n_actions];
        let mut reward = vec![0.0; n_states * n_actions];
        for s in 0..n_states {
            let st = GridState::from_index(s, cells);
            for a in 0..n_actions {
                let (s2, r) = grid::grid_step(cells, &st, a);
                next[s * n_actions + a] = s2.index(cells);
                reward[s * n_actions + a] = r;
            }
        }
        GridMdp {
            cells,
            n_states,
            n_actions,
            next,
            reward,
        }
    }

    /// Q* by value iteration to sup-norm tolerance `tol`.
    pub fn value_iteration(&self, gamma: f64, tol: f64) -> Vec<f64> {
        let mut q = vec![0.0; self.n_states * self.n_actions];
        loop {
            let mut delta: f64 = 0.0;
            for s in 0..self.n_states {
                for a in 0..self.n_actions {
                    let i = s * self.n_actions + a;
                    let s2 = self.next[i];
                    let max_next = (0..self.n_actions)
                        .map(|b| q[s2 * self.n_actions + b])
                        .fold(f64::NEG_INFINITY, f64::max);
                    let target = self.reward[i] + gamma * max_next;
                    delta = delta.max((target - q[i]).abs());
                    q[i] = target;
                }
            }
            if delta < tol {
                return q;
            }
        }
    }

    /// States reachable from the given starts under any action sequence.
    pub fn reachable(&self, starts: &[usize]) -> Vec<bool> {
        let mut seen = vec![false; self.n_states];
        let mut queue: VecDeque<usize> = VecDeque::new();
        for &s in starts {
            if !seen[s] {
                seen[s] = true;
                queue.push_back(s);
            }
        }
        while let Some(s) = queue.pop_front() {
            for a in 0..self.n_actions {
                let s2 = self.next[s * self.n_actions + a];
                if !seen[s2] {
                    seen[s2] = true;
                    queue.push_back(s2);
                }
            }
        }
        seen
    }

    /// Rolls a deterministic policy; returns the first step (1-based) at
    /// which reward arrives, or `None` within the horizon.
    pub fn first_reward_step(&self, policy: &[usize], s0: usize, horizon: usize) -> Option<usize> {
        let mut s = s0;
        for t in 0..horizon {
            let i = s * self.n_actions + policy[s];
            if self.reward[i] > 0.0 {
                return Some(t + 1);
            }
            s = self.next[i];
        }
        None
    }

    pub fn rollout_success(&self, policy: &[usize], s0: usize, horizon: usize) -> bool {
        self.first_reward_step(policy, s0, horizon).is_some()
    }

    /// Exact success probability of a stochastic policy (rows of
    /// `policy_probs` are per-state action distributions): the object is
    /// out for good once retrieved, so success by time T equals the
    /// probability mass on retrieved states after T steps.
    pub fn success_probability(&self, policy_probs: &[f64], s0: usize, horizon: usize) -> f64 {
        assert_eq!(policy_probs.len(), self.n_states * self.n_actions);
        let mut dist = vec![0.0; self.n_states];
        dist[s0] = 1.0;
        for _ in 0..horizon {
            let mut next_dist = vec![0.0; self.n_states];
            for (s, &p) in dist.iter().enumerate() {
                if p == 0.0 {
                    continue;
                }
                for a in 0..self.n_actions {
                    let pa = policy_probs[s * self.n_actions + a];
                    if pa > 0.0 {
                        next_dist[self.next[s * self.n_actions + a]] += p * pa;
                    }
                }
            }
            dist = next_dist;
        }
        dist.iter()
            .enumerate()
            .filter(|(s, _)| GridState::from_index(*s, self.cells).object == ObjectLoc::Out)
            .map(|(_, p)| p)
            .sum()
    }
}

/// Greedy action per state, ties to the lowest index.
pub fn greedy_policy(q: &[f64], n_actions: usize) -> Vec<usize> {
    q.chunks(n_actions)
        .map(|row| {
            let mut best = 0;
            for (a, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = a;
                }
            }
            best
        })
        .collect()
}

/// Max Bellman optimality residual of a Q table, for judging how close a
/// learned table is to a fixed point.
pub fn bellman_residual(mdp: &GridMdp, q: &[f64], gamma: f64) -> f64 {
    let mut worst: f64 = 0.0;
    for s in 0..mdp.n_states {
        for a in 0..mdp.n_actions {
            let i = s * mdp.n_actions + a;
            let s2 = mdp.next[i];
            let max_next = (0..mdp.n_actions)
                .map(|b| q[s2 * mdp.n_actions + b])
                .fold(f64::NEG_INFINITY, f64::max);
            worst = worst.max((mdp.reward[i] + gamma * max_next - q[i]).abs());
        }
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::grid::{GRASP, LEFT, NOOP, REMOVE, RIGHT, TOGGLE};

    const GAMMA: f64 = 0.99;

    fn start(gripper: usize, open: bool, blocker: bool) -> usize {
        GridState {
            gripper,
            drawer_open: open,
            blocker,
            object: ObjectLoc::InDrawer,
        }
        .index(6)
    }

    #[test]
    fn optimal_plan_from_blocked_closed_start_takes_eight_steps() {
        let mdp = GridMdp::from_grid(6);
        let q = mdp.value_iteration(GAMMA, 1e-10);
        let pi = greedy_policy(&q, mdp.n_actions);
        // gripper at cell 1: four rights, remove, toggle, grasp, left.
        let s0 = start(1, false, true);
        assert_eq!(mdp.first_reward_step(&pi, s0, 40), Some(8));
        // Without the blocker one action is saved.
        assert_eq!(mdp.first_reward_step(&pi, start(1, false, false), 40), Some(7));
        // Already open: five steps.
        assert_eq!(mdp.first_reward_step(&pi, start(1, true, false), 40), Some(6));
    }

    #[test]
    fn optimal_value_matches_closed_form() {
        // From (gripper 1, open, no blocker) the plan pays nothing for 5
        // steps (4 rights + grasp), then 1 every step once the object is
        // out: V* = gamma^5 / (1 - gamma).
        let mdp = GridMdp::from_grid(6);
        let q = mdp.value_iteration(GAMMA, 1e-12);
        let s0 = start(1, true, false);
        let v = q[s0 * mdp.n_actions + RIGHT];
        let expected = libm::pow(GAMMA, 5.0) / (1.0 - GAMMA);
        assert!(
            (v - expected).abs() < 1e-6,
            "V* = {v}, closed form = {expected}"
        );
        assert!(bellman_residual(&mdp, &q, GAMMA) < 1e-8);
    }

    #[test]
    fn greedy_actions_follow_the_plan() {
        let mdp = GridMdp::from_grid(6);
        let q = mdp.value_iteration(GAMMA, 1e-10);
        let pi = greedy_policy(&q, mdp.n_actions);
        assert_eq!(pi[start(2, false, true)], RIGHT);
        assert_eq!(pi[start(5, false, true)], REMOVE);
        assert_eq!(pi[start(5, false, false)], TOGGLE);
        assert_eq!(pi[start(5, true, false)], GRASP);
        let held = GridState {
            gripper: 5,
            drawer_open: true,
            blocker: false,
            object: ObjectLoc::Held,
        }
        .index(6);
        assert_eq!(pi[held], LEFT);
    }

    #[test]
    fn reachability_excludes_carrying_away_from_the_drawer() {
        let mdp = GridMdp::from_grid(6);
        let starts: Vec<usize> = (0..6)
            .flat_map(|g| {
                [false, true]
                    .into_iter()
                    .flat_map(move |open| [false, true].into_iter().map(move |b| start_full(g, open, b)))
            })
            .collect();
        let seen = mdp.reachable(&starts);
        // Holding only happens at the drawer cell; one cell away the object
        // is already out.
        let bad = GridState {
            gripper: 2,
            drawer_open: true,
            blocker: false,
            object: ObjectLoc::Held,
        }
        .index(6);
        assert!(!seen[bad]);
        let good = GridState {
            gripper: 5,
            drawer_open: true,
            blocker: false,
            object: ObjectLoc::Held,
        }
        .index(6);
        assert!(seen[good]);
        // Toggling with the object held closes the drawer around the arm,
        // so the held-while-closed state is reachable.
        let held_closed = GridState {
            gripper: 5,
            drawer_open: false,
            blocker: false,
            object: ObjectLoc::Held,
        }
        .index(6);
        assert!(seen[held_closed]);
        fn start_full(g: usize, open: bool, b: bool) -> usize {
            GridState {
                gripper: g,
                drawer_open: open,
                blocker: b,
                object: ObjectLoc::InDrawer,
            }
            .index(6)
        }
    }

    #[test]
    fn success_probability_matches_deterministic_rollout() {
        let mdp = GridMdp::from_grid(6);
        let q = mdp.value_iteration(GAMMA, 1e-10);
        let pi = greedy_policy(&q, mdp.n_actions);
        let mut probs = vec![0.0; mdp.n_states * mdp.n_actions];
        for (s, &a) in pi.iter().enumerate() {
            probs[s * mdp.n_actions + a] = 1.0;
        }
        let s0 = start(1, false, true);
        assert!((mdp.success_probability(&probs, s0, 40) - 1.0).abs() < 1e-12);
        assert_eq!(mdp.success_probability(&probs, s0, 7), 0.0);
        assert!((mdp.success_probability(&probs, s0, 8) - 1.0).abs() < 1e-12);

        // A uniform random policy succeeds with middling probability.
        let uniform = vec![1.0 / mdp.n_actions as f64; mdp.n_states * mdp.n_actions];
        let p = mdp.success_probability(&uniform, s0, 40);
        assert!(p > 0.0 && p < 0.8, "uniform policy success {p}");
    }

    #[test]
    fn noop_only_policy_never_succeeds() {
        let mdp = GridMdp::from_grid(6);
        let pi = vec![NOOP; mdp.n_states];
        assert!(!mdp.rollout_success(&pi, start(1, true, false), 40));
    }
}
