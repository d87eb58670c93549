//! Drawer gridworld: a 1-D strip of cells with a drawer in the last cell.
//!
//! The gripper walks left/right; at the drawer cell it can toggle the
//! drawer, remove a blocker, and grasp the object inside. Carrying the
//! object away from the drawer cell puts it "out", which is the rewarded
//! (and henceforth permanent) outcome. The state space is tiny and fully
//! enumerable, which makes exact dynamic programming possible; the
//! [`GridEnv`] wrapper exposes the same dynamics through the continuous
//! 8-dim action interface so the function-approximation pipeline can run on
//! a problem with a known ground truth.

use alloc::vec::Vec;

use rand::Rng;

use super::{norm_bool, Action8, InitialCondition};
use crate::error::CoreError;
use crate::rng::Rng8;
use crate::Result;

pub const ENV_ID: &str = "drawer_grid";
pub const DEFAULT_CELLS: usize = 6;

/// Discrete actions.
pub const LEFT: usize = 0;
pub const RIGHT: usize = 1;
pub const TOGGLE: usize = 2;
pub const GRASP: usize = 3;
pub const REMOVE: usize = 4;
pub const NOOP: usize = 5;
pub const N_ACTIONS: usize = 6;

pub const ACTION_NAMES: [&str; N_ACTIONS] = ["left", "right", "toggle", "grasp", "remove", "noop"];

/// Where the object is.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ObjectLoc {
    InDrawer,
    Held,
    Out,
}

/// Complete gridworld state.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GridState {
    pub gripper: usize,
    pub drawer_open: bool,
    pub blocker: bool,
    pub object: ObjectLoc,
}

impl GridState {
    /// Dense index in [0, cells * 12).
    pub fn index(&self, cells: usize) -> usize {
        debug_assert!(self.gripper < cells);
        let obj = match self.object {
            ObjectLoc::InDrawer => 0,
            ObjectLoc::Held => 1,
            ObjectLoc::Out => 2,
        };
        ((self.gripper * 2 + self.drawer_open as usize) * 2 + self.blocker as usize) * 3 + obj
    }

    pub fn from_index(mut i: usize, cells: usize) -> GridState {
        let object = match i % 3 {
            0 => ObjectLoc::InDrawer,
            1 => ObjectLoc::Held,
            _ => ObjectLoc::Out,
        };
        i /= 3;
        let blocker = i % 2 == 1;
        i /= 2;
        let drawer_open = i % 2 == 1;
        i /= 2;
        debug_assert!(i < cells);
        GridState {
            gripper: i,
            drawer_open,
            blocker,
            object,
        }
    }
}

pub fn n_states(cells: usize) -> usize {
    cells * 12
}

/// Deterministic transition. Returns (next state, reward).
///
/// Reward is the pure predicate "the object is out of the drawer" on the
/// successor, so it repeats forever once achieved.
pub fn grid_step(cells: usize, s: &GridState, action: usize) -> (GridState, f64) {
    let drawer_cell = cells - 1;
    let mut n = *s;
    match action {
        LEFT => n.gripper = n.gripper.saturating_sub(1),
        RIGHT => n.gripper = (n.gripper + 1).min(cells - 1),
        TOGGLE => {
            if n.gripper == drawer_cell {
                if n.drawer_open {
                    n.drawer_open = false;
                } else if !n.blocker {
                    n.drawer_open = true;
                }
            }
        }
        GRASP => {
            if n.gripper == drawer_cell && n.drawer_open && n.object == ObjectLoc::InDrawer {
                n.object = ObjectLoc::Held;
            }
        }
        REMOVE => {
            if n.gripper == drawer_cell {
                n.blocker = false;
            }
        }
        _ => {}
    }
    // Carrying the object off the drawer cell deposits it outside for good.
    if n.object == ObjectLoc::Held && n.gripper != drawer_cell {
        n.object = ObjectLoc::Out;
    }
    let reward = if n.object == ObjectLoc::Out { 1.0 } else { 0.0 };
    (n, reward)
}

/// Encodes a discrete action into the continuous wire format, one signal
/// component driven to its rail.
pub fn encode_action(action: usize) -> Action8 {
    let mut a = [0.0; 8];
    match action {
        LEFT => a[0] = -1.0,
        RIGHT => a[0] = 1.0,
        TOGGLE => a[3] = 1.0,
        REMOVE => a[2] = 1.0,
        GRASP => a[6] = -1.0,
        _ => {}
    }
    Action8(a)
}

/// Decodes a continuous action by thresholding, with a fixed priority:
/// grasp, toggle, remove, then movement.
pub fn decode_action(a: &Action8) -> usize {
    if a.0[6] < -0.5 {
        GRASP
    } else if a.0[3] > 0.5 {
        TOGGLE
    } else if a.0[2] > 0.5 {
        REMOVE
    } else if a.0[0] < -0.5 {
        LEFT
    } else if a.0[0] > 0.5 {
        RIGHT
    } else {
        NOOP
    }
}

/// Continuous-interface wrapper around the gridworld.
#[derive(Debug, Clone)]
pub struct GridEnv {
    pub cells: usize,
    pub state: GridState,
}

impl GridEnv {
    pub fn new(cells: usize) -> Self {
        assert!(cells >= 2, "need at least a start and a drawer cell");
        GridEnv {
            cells,
            state: GridState {
                gripper: 1,
                drawer_open: false,
                blocker: false,
                object: ObjectLoc::InDrawer,
            },
        }
    }

    pub fn obs_dim(&self) -> usize {
        4
    }

    pub fn horizon(&self) -> usize {
        40
    }

    pub fn valid_conditions(&self) -> &'static [InitialCondition] {
        &[
            InitialCondition::OpenDrawer,
            InitialCondition::ClosedDrawer,
            InitialCondition::BlockedDrawer1,
        ]
    }

    pub fn observe(&self) -> Vec<f64> {
        let s = &self.state;
        let pos = 2.0 * s.gripper as f64 / (self.cells - 1) as f64 - 1.0;
        let obj = match s.object {
            ObjectLoc::InDrawer => -1.0,
            ObjectLoc::Held => 0.0,
            ObjectLoc::Out => 1.0,
        };
        alloc::vec![pos, norm_bool(s.drawer_open), norm_bool(s.blocker), obj]
    }

    /// Grid resets are exact: the named condition pins the state.
    pub fn reset(&mut self, cond: InitialCondition, _rng: &mut Rng8) -> Result<Vec<f64>> {
        if !self.valid_conditions().contains(&cond) {
            return Err(CoreError::Config(alloc::format!(
                "condition {} is not valid for {}",
                cond.id(),
                ENV_ID
            )));
        }
        let (open, blocker) = match cond {
            InitialCondition::OpenDrawer => (true, false),
            InitialCondition::ClosedDrawer => (false, false),
            InitialCondition::BlockedDrawer1 => (false, true),
            _ => unreachable!(),
        };
        self.state = GridState {
            gripper: 1,
            drawer_open: open,
            blocker,
            object: ObjectLoc::InDrawer,
        };
        Ok(self.observe())
    }

    /// Randomized reset used for prior-data collection: any gripper cell,
    /// either drawer state, blocker present 30% of the time.
    pub fn reset_randomized(&mut self, rng: &mut Rng8) -> Vec<f64> {
        self.state = GridState {
            gripper: rng.gen_range(0..self.cells),
            drawer_open: rng.gen_bool(0.5),
            blocker: rng.gen_bool(0.3),
            object: ObjectLoc::InDrawer,
        };
        self.observe()
    }

    pub fn step(&mut self, action: &Action8) -> (Vec<f64>, f64) {
        let (next, r) = grid_step(self.cells, &self.state, decode_action(action));
        self.state = next;
        (self.observe(), r)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    #[test]
    fn indexing_roundtrips() {
        let cells = 5;
        for i in 0..n_states(cells) {
            let s = GridState::from_index(i, cells);
            assert_eq!(s.index(cells), i);
        }
    }

    #[test]
    fn optimal_unblock_sequence_takes_five_steps() {
        // 3 cells, start at cell 1, drawer at cell 2, blocked and closed.
        let cells = 3;
        let mut s = GridState {
            gripper: 1,
            drawer_open: false,
            blocker: true,
            object: ObjectLoc::InDrawer,
        };
        let plan = [RIGHT, REMOVE, TOGGLE, GRASP, LEFT];
        let mut rewards = Vec::new();
        for a in plan {
            let (n, r) = grid_step(cells, &s, a);
            s = n;
            rewards.push(r);
        }
        assert_eq!(rewards, alloc::vec![0.0, 0.0, 0.0, 0.0, 1.0]);
        assert_eq!(s.object, ObjectLoc::Out);
        // The outcome is permanent.
        let (n, r) = grid_step(cells, &s, NOOP);
        assert_eq!(r, 1.0);
        assert_eq!(n.object, ObjectLoc::Out);
    }

    #[test]
    fn toggle_respects_blocker_and_grasp_needs_open() {
        let cells = 3;
        let s = GridState {
            gripper: 2,
            drawer_open: false,
            blocker: true,
            object: ObjectLoc::InDrawer,
        };
        let (n, _) = grid_step(cells, &s, TOGGLE);
        assert!(!n.drawer_open, "blocked drawer must not open");
        let (n, _) = grid_step(cells, &s, GRASP);
        assert_eq!(n.object, ObjectLoc::InDrawer, "cannot grasp through a closed drawer");
        let (n, _) = grid_step(cells, &s, REMOVE);
        assert!(!n.blocker);
        let (n2, _) = grid_step(cells, &n, TOGGLE);
        assert!(n2.drawer_open);
    }

    #[test]
    fn drawer_actions_require_the_drawer_cell() {
        let cells = 4;
        let s = GridState {
            gripper: 0,
            drawer_open: false,
            blocker: true,
            object: ObjectLoc::InDrawer,
        };
        for a in [TOGGLE, GRASP, REMOVE] {
            let (n, _) = grid_step(cells, &s, a);
            assert_eq!(n, s, "action {a} must be a no-op away from the drawer");
        }
        let (n, _) = grid_step(cells, &s, LEFT);
        assert_eq!(n.gripper, 0, "left edge saturates");
    }

    #[test]
    fn encode_decode_roundtrip() {
        for a in 0..N_ACTIONS {
            assert_eq!(decode_action(&encode_action(a)), a, "{}", ACTION_NAMES[a]);
        }
    }

    #[test]
    fn wrapper_matches_discrete_dynamics() {
        let mut env = GridEnv::new(3);
        env.reset(InitialCondition::BlockedDrawer1, &mut seeded(0)).unwrap();
        let mut total = 0.0;
        for a in [RIGHT, REMOVE, TOGGLE, GRASP, LEFT] {
            let (_, r) = env.step(&encode_action(a));
            total += r;
        }
        assert_eq!(total, 1.0);
        assert_eq!(env.state.object, ObjectLoc::Out);
        let obs = env.observe();
        assert_eq!(obs.len(), 4);
        assert!(obs.iter().all(|v| (-1.0..=1.0).contains(v)));
    }

    #[test]
    fn named_resets_are_exact() {
        let mut env = GridEnv::new(6);
        env.reset(InitialCondition::ClosedDrawer, &mut seeded(1)).unwrap();
        assert_eq!(
            env.state,
            GridState {
                gripper: 1,
                drawer_open: false,
                blocker: false,
                object: ObjectLoc::InDrawer
            }
        );
        assert!(env
            .reset(InitialCondition::BlockedDrawer2, &mut seeded(1))
            .is_err());
    }
}
