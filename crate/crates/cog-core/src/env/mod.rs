//! Desk-scale manipulation environments.
//!
//! Two families share one action wire format:
//!
//! * [`tabletop`]: 2D kinematic pick-and-place and drawer scenes. Dynamics
//!   are deterministic; all stochasticity lives in the reset.
//! * [`grid`]: a tiny drawer gridworld, exactly solvable, plus a continuous
//!   wrapper that exposes it through the same 8-dim action interface.
//!
//! Observations are dense f64 vectors with every component normalized to
//! [-1, 1]; booleans map to -1/+1. Environments never terminate: the reward
//! is a pure state predicate that keeps paying while it holds, so values
//! approach 1/(1-gamma) at reward states.

pub mod grid;
pub mod tabletop;

use alloc::format;
use alloc::vec::Vec;

use crate::error::CoreError;
use crate::rng::Rng8;
use crate::Result;

pub use grid::{GridEnv, GridState};
pub use tabletop::{SceneKind, TabletopEnv, TabletopState};

/// Number of action components on the wire.
pub const ACT_DIM: usize = 8;

/// 8-dimensional continuous action, every component in [-1, 1] after
/// clamping: [dx, dy, dz, d-alpha, d-beta, d-gamma, gripper, neutral].
///
/// The tabletop scenes are planar: component 0 drives workspace x,
/// component 1 drives height, the rotation components 2..6 are ignored.
/// Component 6 closes the gripper below -0.5 and opens it above +0.5.
/// Component 7 above +0.5 teleports the arm to its neutral pose, overriding
/// the displacement.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Action8(pub [f64; 8]);

impl Action8 {
    pub const ZERO: Action8 = Action8([0.0; 8]);

    pub fn from_slice(a: &[f64]) -> Result<Self> {
        if a.len() != ACT_DIM {
            return Err(CoreError::Shape(format!(
                "action must have {ACT_DIM} components, got {}",
                a.len()
            )));
        }
        let mut out = [0.0; 8];
        out.copy_from_slice(a);
        Ok(Action8(out))
    }

    pub fn clamped(&self, i: usize) -> f64 {
        self.0[i].max(-1.0).min(1.0)
    }

    pub fn wants_close(&self) -> bool {
        self.0[6] < -0.5
    }

    pub fn wants_open(&self) -> bool {
        self.0[6] > 0.5
    }

    pub fn wants_neutral(&self) -> bool {
        self.0[7] > 0.5
    }
}

/// Evaluation / task-data initial conditions.
///
/// `ObjectInTray` places the object at its tabletop rest spot (the source
/// tray), not inside the destination box; it is the "must grasp first"
/// start. The drawer variants control the drawer extents and the
/// obstruction: `BlockedDrawer1` opens the upper drawer on top of the
/// closed lower one, `BlockedDrawer2` parks the obstruction object in the
/// lower drawer's sweep path.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum InitialCondition {
    ObjectInGripper,
    ObjectInTray,
    OpenDrawer,
    ClosedDrawer,
    BlockedDrawer1,
    BlockedDrawer2,
}

impl InitialCondition {
    pub fn id(&self) -> &'static str {
        match self {
            InitialCondition::ObjectInGripper => "object_in_gripper",
            InitialCondition::ObjectInTray => "object_in_tray",
            InitialCondition::OpenDrawer => "open_drawer",
            InitialCondition::ClosedDrawer => "closed_drawer",
            InitialCondition::BlockedDrawer1 => "blocked_drawer_1",
            InitialCondition::BlockedDrawer2 => "blocked_drawer_2",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Ok(match s {
            "object_in_gripper" => InitialCondition::ObjectInGripper,
            "object_in_tray" => InitialCondition::ObjectInTray,
            "open_drawer" => InitialCondition::OpenDrawer,
            "closed_drawer" => InitialCondition::ClosedDrawer,
            "blocked_drawer_1" => InitialCondition::BlockedDrawer1,
            "blocked_drawer_2" => InitialCondition::BlockedDrawer2,
            other => return Err(CoreError::Unknown(format!("condition '{other}'"))),
        })
    }
}

/// Environment behind a uniform stepping interface.
#[derive(Debug, Clone)]
pub enum AnyEnv {
    Tabletop(TabletopEnv),
    Grid(GridEnv),
}

impl AnyEnv {
    pub fn id(&self) -> &'static str {
        match self {
            AnyEnv::Tabletop(e) => e.id(),
            AnyEnv::Grid(_) => grid::ENV_ID,
        }
    }

    pub fn obs_dim(&self) -> usize {
        match self {
            AnyEnv::Tabletop(e) => e.obs_dim(),
            AnyEnv::Grid(e) => e.obs_dim(),
        }
    }

    /// Episode length used at evaluation time.
    pub fn horizon(&self) -> usize {
        match self {
            AnyEnv::Tabletop(e) => e.horizon(),
            AnyEnv::Grid(e) => e.horizon(),
        }
    }

    pub fn valid_conditions(&self) -> &'static [InitialCondition] {
        match self {
            AnyEnv::Tabletop(e) => e.valid_conditions(),
            AnyEnv::Grid(e) => e.valid_conditions(),
        }
    }

    pub fn reset(&mut self, cond: InitialCondition, rng: &mut Rng8) -> Result<Vec<f64>> {
        match self {
            AnyEnv::Tabletop(e) => e.reset(cond, rng),
            AnyEnv::Grid(e) => e.reset(cond, rng),
        }
    }

    /// Reset from the broad randomization used for prior-data collection.
    pub fn reset_randomized(&mut self, rng: &mut Rng8) -> Vec<f64> {
        match self {
            AnyEnv::Tabletop(e) => e.reset_randomized(rng),
            AnyEnv::Grid(e) => e.reset_randomized(rng),
        }
    }

    /// Deterministic transition; returns (observation, reward).
    pub fn step(&mut self, action: &Action8) -> (Vec<f64>, f64) {
        match self {
            AnyEnv::Tabletop(e) => e.step(action),
            AnyEnv::Grid(e) => e.step(action),
        }
    }
}

/// Registered environment identifiers.
pub const ENV_IDS: [&str; 3] = [tabletop::PLACE_IN_BOX_ID, tabletop::DRAWER_GRASP_ID, grid::ENV_ID];

/// Environment registry: id to instance.
pub fn make_env(id: &str) -> Result<AnyEnv> {
    match id {
        tabletop::PLACE_IN_BOX_ID => Ok(AnyEnv::Tabletop(TabletopEnv::new(SceneKind::PlaceInBox))),
        tabletop::DRAWER_GRASP_ID => Ok(AnyEnv::Tabletop(TabletopEnv::new(SceneKind::Drawer))),
        grid::ENV_ID => Ok(AnyEnv::Grid(GridEnv::new(grid::DEFAULT_CELLS))),
        other => Err(CoreError::Unknown(format!("environment '{other}'"))),
    }
}

/// Maps a coordinate in [0, 1] to the [-1, 1] observation range.
pub(crate) fn norm01(x: f64) -> f64 {
    2.0 * x - 1.0
}

pub(crate) fn norm_bool(b: bool) -> f64 {
    if b {
        1.0
    } else {
        -1.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn registry_knows_all_ids() {
        for id in ENV_IDS {
            let env = make_env(id).unwrap();
            assert_eq!(env.id(), id);
            assert!(env.obs_dim() > 0);
            assert!(env.horizon() > 0);
        }
        assert!(matches!(make_env("nope"), Err(CoreError::Unknown(_))));
    }

    #[test]
    fn condition_ids_roundtrip() {
        for c in [
            InitialCondition::ObjectInGripper,
            InitialCondition::ObjectInTray,
            InitialCondition::OpenDrawer,
            InitialCondition::ClosedDrawer,
            InitialCondition::BlockedDrawer1,
            InitialCondition::BlockedDrawer2,
        ] {
            assert_eq!(InitialCondition::parse(c.id()).unwrap(), c);
        }
    }

    #[test]
    fn action_accessors_follow_thresholds() {
        let mut a = Action8::ZERO;
        a.0[6] = -0.6;
        assert!(a.wants_close() && !a.wants_open());
        a.0[6] = 0.6;
        assert!(a.wants_open());
        a.0[6] = 0.4;
        assert!(!a.wants_open() && !a.wants_close());
        a.0[7] = 0.51;
        assert!(a.wants_neutral());
        a.0[0] = 3.0;
        assert_eq!(a.clamped(0), 1.0);
    }
}
