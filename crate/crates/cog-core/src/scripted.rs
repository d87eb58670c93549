//! Weak scripted policies and dataset collection.
//!
//! Collection rolls hand-coded controllers with Gaussian action noise and a
//! randomized aim threshold, so success rates land mid-range rather than
//! near 1: the resulting data shows many behaviors without mastering any.
//! Every trajectory ends by returning the arm to its neutral pose, which
//! makes trajectory endpoints and startpoints overlap across behaviors;
//! that shared state is where Bellman backups can stitch one behavior onto
//! another.
//!
//! Reproducibility contract: trajectory `j` of a collection run with base
//! seed `s` uses the stream `rng::seeded(rng::derive(s, j))`, and the reset
//! consumes that stream first. Stored actions are the post-noise, clamped
//! values the simulator executed, so `Dataset::replay_check` can replay
//! byte-for-byte.

use alloc::vec::Vec;

use rand::Rng;

use crate::data::{CollectKind, DataSource, Dataset, TabularDataset, TabularTransition, Transition};
use crate::env::grid::{self, GridEnv, GridState, ObjectLoc};
use crate::env::tabletop::{
    dist, SceneKind, TabletopEnv, DISTRACTOR, OBSTRUCTION, STEP_CAP, TARGET,
};
use crate::env::{self, Action8, InitialCondition, ACT_DIM};
use crate::error::CoreError;
use crate::rng::{self, Rng8};
use crate::Result;

/// Height an object is carried at while being moved to a drop point.
const CARRY_HEIGHT: f64 = 0.25;
/// The arm counts as "home" within this distance of the neutral pose.
const NEUTRAL_TOL: f64 = 0.02;
/// Step budget for prior-data grasp probes in the placing scene,
/// calibrated so roughly half the randomized starts finish in time.
const PLACE_PRIOR_EPISODE_LEN: usize = 24;

/// Knobs of the scripted controllers.
#[derive(Debug, Clone)]
pub struct ScriptedConfig {
    /// Maximum steps per trajectory (drawer trajectories may end earlier).
    pub episode_len: usize,
    /// Stddev of the Gaussian noise added to every action component.
    pub noise_std: f64,
    /// The per-episode aim threshold is drawn from N(aim_mean, aim_std).
    pub aim_mean: f64,
    pub aim_std: f64,
    /// Probability that a scripted place targets the tray region rather
    /// than a uniformly random drop point.
    pub tray_bias: f64,
    /// Probability of substituting a uniformly random discrete action in
    /// gridworld collection.
    pub grid_eps: f64,
}

impl Default for ScriptedConfig {
    fn default() -> Self {
        ScriptedConfig {
            episode_len: 30,
            noise_std: 0.2,
            aim_mean: 0.04,
            aim_std: 0.01,
            tray_bias: 0.5,
            grid_eps: 0.2,
        }
    }
}

impl ScriptedConfig {
    pub fn noiseless() -> Self {
        ScriptedConfig {
            noise_std: 0.0,
            aim_std: 0.0,
            grid_eps: 0.0,
            ..ScriptedConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.episode_len == 0 {
            return Err(CoreError::Config(alloc::string::String::from(
                "scripted: episode_len must be positive",
            )));
        }
        for (name, v) in [
            ("noise_std", self.noise_std),
            ("aim_mean", self.aim_mean),
            ("aim_std", self.aim_std),
        ] {
            if v < 0.0 || !v.is_finite() {
                return Err(CoreError::Config(alloc::format!("scripted: bad {name} = {v}")));
            }
        }
        for (name, v) in [("tray_bias", self.tray_bias), ("grid_eps", self.grid_eps)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(CoreError::Config(alloc::format!("scripted: bad {name} = {v}")));
            }
        }
        Ok(())
    }
}

/// Tabletop behaviors.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TabletopMode {
    /// Approach an object, close on it, lift it, return to neutral.
    Grasp(usize),
    /// Grasp, carry to a drop point, release, return to neutral.
    PickPlace(usize),
    /// Pull the lower drawer open, lift clear, return to neutral, end.
    DrawerOpen,
    /// Push the open drawer shut (upper first if open), return, end.
    DrawerClose,
}

#[derive(Default)]
struct ScriptFlags {
    dropped: bool,
}

/// Per-episode sampled parameters.
struct ScriptParams {
    threshold: f64,
    drop_x: f64,
}

fn approach(target: [f64; 2], gripper: [f64; 2]) -> [f64; ACT_DIM] {
    let mut a = [0.0; ACT_DIM];
    a[0] = ((target[0] - gripper[0]) / STEP_CAP).max(-1.0).min(1.0);
    a[1] = ((target[1] - gripper[1]) / STEP_CAP).max(-1.0).min(1.0);
    a
}

fn single(idx: usize, v: f64) -> [f64; ACT_DIM] {
    let mut a = [0.0; ACT_DIM];
    a[idx] = v;
    a
}

/// One decision of the tabletop controller. `None` ends the trajectory
/// (drawer behaviors stop once the arm is back home).
fn tabletop_action(
    env: &TabletopEnv,
    mode: TabletopMode,
    params: &ScriptParams,
    flags: &mut ScriptFlags,
) -> Option<[f64; ACT_DIM]> {
    let s = &env.state;
    let p = &env.params;
    let g = s.gripper;
    match mode {
        TabletopMode::Grasp(tgt) => Some(if s.held == Some(tgt) {
            if s.objects[tgt][1] < p.lift_height + 0.02 {
                single(1, 1.0)
            } else if dist(g, p.neutral) > NEUTRAL_TOL {
                single(7, 1.0)
            } else {
                [0.0; ACT_DIM]
            }
        } else if s.held.is_some() || !s.aperture_open {
            single(6, 1.0)
        } else if dist(g, s.objects[tgt]) > params.threshold {
            approach(s.objects[tgt], g)
        } else {
            single(6, -1.0)
        }),
        TabletopMode::PickPlace(tgt) => Some(if s.held == Some(tgt) {
            if s.objects[tgt][1] < CARRY_HEIGHT {
                single(1, 1.0)
            } else {
                let drop = [params.drop_x, CARRY_HEIGHT];
                if dist(g, drop) > params.threshold {
                    approach(drop, g)
                } else {
                    flags.dropped = true;
                    single(6, 1.0)
                }
            }
        } else if flags.dropped {
            if dist(g, p.neutral) > NEUTRAL_TOL {
                single(7, 1.0)
            } else {
                [0.0; ACT_DIM]
            }
        } else if s.held.is_some() || !s.aperture_open {
            single(6, 1.0)
        } else if dist(g, s.objects[tgt]) > params.threshold {
            approach(s.objects[tgt], g)
        } else {
            single(6, -1.0)
        }),
        TabletopMode::DrawerOpen => {
            if s.e < 0.9 {
                let h = env.handle_pos();
                Some(if dist(g, h) > params.threshold {
                    approach(h, g)
                } else {
                    let mut a = single(0, -1.0);
                    a[1] = ((h[1] - g[1]) / STEP_CAP).max(-1.0).min(1.0);
                    a
                })
            } else if g[1] < 0.5 {
                Some(single(1, 1.0))
            } else if dist(g, p.neutral) > NEUTRAL_TOL {
                Some(single(7, 1.0))
            } else {
                None
            }
        }
        TabletopMode::DrawerClose => {
            let (h, extent) = if s.e2 > 0.5 {
                (env.handle2_pos(), s.e2)
            } else {
                (env.handle_pos(), s.e)
            };
            if extent > 0.1 {
                Some(if dist(g, h) > params.threshold {
                    approach(h, g)
                } else {
                    let mut a = single(0, 1.0);
                    a[1] = ((h[1] - g[1]) / STEP_CAP).max(-1.0).min(1.0);
                    a
                })
            } else if g[1] < 0.5 {
                Some(single(1, 1.0))
            } else if dist(g, p.neutral) > NEUTRAL_TOL {
                Some(single(7, 1.0))
            } else {
                None
            }
        }
    }
}

/// Mode-specific episode success, tallied while rolling.
fn mode_success(env: &TabletopEnv, mode: TabletopMode, flags: &ScriptFlags) -> bool {
    let s = &env.state;
    match mode {
        TabletopMode::Grasp(tgt) => {
            s.held == Some(tgt) && s.objects[tgt][1] >= env.params.lift_height
        }
        TabletopMode::PickPlace(_) => match env.scene {
            SceneKind::PlaceInBox => env.success(),
            SceneKind::Drawer => flags.dropped,
        },
        TabletopMode::DrawerOpen => s.e > 0.7,
        TabletopMode::DrawerClose => s.e <= 0.1 && s.e2 <= 0.5,
    }
}

fn sample_params(
    env: &TabletopEnv,
    mode: TabletopMode,
    cfg: &ScriptedConfig,
    r: &mut Rng8,
) -> ScriptParams {
    let threshold = rng::normal(r, cfg.aim_mean, cfg.aim_std).max(0.01);
    let drop_x = if let TabletopMode::PickPlace(_) = mode {
        let zone = match env.scene {
            SceneKind::PlaceInBox => env.params.box_x,
            SceneKind::Drawer => env.params.tray_x,
        };
        if r.gen_bool(cfg.tray_bias) {
            rng::uniform(r, zone[0] + 0.02, zone[1] - 0.02)
        } else {
            rng::uniform(r, 0.02, 0.98)
        }
    } else {
        0.0
    };
    ScriptParams { threshold, drop_x }
}

/// Rolls one scripted episode, appending transitions. Returns success.
fn run_tabletop_episode(
    env: &mut TabletopEnv,
    mode: TabletopMode,
    cfg: &ScriptedConfig,
    r: &mut Rng8,
    traj: u32,
    mut obs: Vec<f64>,
    out: &mut Vec<Transition>,
) -> bool {
    let params = sample_params(env, mode, cfg, r);
    let mut flags = ScriptFlags::default();
    let mut success = false;
    for t in 0..cfg.episode_len {
        let Some(base) = tabletop_action(env, mode, &params, &mut flags) else {
            break;
        };
        let mut a = base;
        for v in a.iter_mut() {
            *v = (*v + rng::normal(r, 0.0, cfg.noise_std)).max(-1.0).min(1.0);
        }
        let (next, reward) = env.step(&Action8(a));
        out.push(Transition {
            obs: core::mem::take(&mut obs),
            action: a,
            reward,
            next_obs: next.clone(),
            traj,
            t: t as u32,
        });
        obs = next;
        success |= mode_success(env, mode, &flags);
    }
    success
}

/// Collects episodes of one fixed behavior. Returns the dataset (rewards as
/// emitted by the environment) and the number of successful episodes.
pub fn collect_tabletop_mode(
    scene: SceneKind,
    mode: TabletopMode,
    source: DataSource,
    episodes: u32,
    cfg: &ScriptedConfig,
    seed: u64,
) -> Result<(Dataset, u32)> {
    cfg.validate()?;
    let mut env = TabletopEnv::new(scene);
    let mut ds = Dataset::new(env.id(), env.obs_dim(), seed, source);
    let mut successes = 0;
    for traj in 0..episodes {
        let mut r = rng::seeded(rng::derive(seed, traj as u64));
        let obs = match source {
            DataSource::Randomized => env.reset_randomized(&mut r),
            DataSource::Condition(c) => env.reset(c, &mut r)?,
        };
        if run_tabletop_episode(&mut env, mode, cfg, &mut r, traj, obs, &mut ds.transitions) {
            successes += 1;
        }
    }
    Ok((ds, successes))
}

fn drawer_prior_mode(r: &mut Rng8) -> TabletopMode {
    let x: f64 = r.gen();
    if x < 0.35 {
        TabletopMode::DrawerOpen
    } else if x < 0.70 {
        TabletopMode::DrawerClose
    } else if r.gen_bool(0.5) {
        TabletopMode::PickPlace(OBSTRUCTION)
    } else {
        TabletopMode::PickPlace(DISTRACTOR)
    }
}

/// Collects a dataset for an environment and role.
///
/// Prior data comes from broadly randomized resets and (for the drawer
/// scene) a mixture of behaviors, and is zero-reward relabeled. Task data
/// comes from the task's start condition with the task reward kept:
///
/// * `place_in_box`: prior = grasp attempts; task = place from the gripper
///   (tray bias forced to 1).
/// * `drawer_grasp`: prior = open / close / pick-place mixture; task =
///   grasp the target from an open drawer.
/// * `drawer_grid`: prior = open / close / remove mixture; task = grasp.
pub fn collect(
    env_id: &str,
    kind: CollectKind,
    episodes: u32,
    cfg: &ScriptedConfig,
    seed: u64,
) -> Result<Dataset> {
    cfg.validate()?;
    match (env_id, kind) {
        (env::tabletop::PLACE_IN_BOX_ID, CollectKind::Prior) => {
            // Prior grasps are opportunistic probes on a tight budget:
            // distant starts run out of steps, keeping the demonstrations
            // mid-quality instead of near-perfect.
            let prior_cfg = ScriptedConfig {
                episode_len: cfg.episode_len.min(PLACE_PRIOR_EPISODE_LEN),
                ..cfg.clone()
            };
            let (ds, _) = collect_tabletop_mode(
                SceneKind::PlaceInBox,
                TabletopMode::Grasp(TARGET),
                DataSource::Randomized,
                episodes,
                &prior_cfg,
                seed,
            )?;
            Ok(ds.relabel_zero())
        }
        (env::tabletop::PLACE_IN_BOX_ID, CollectKind::Task) => {
            let mut task_cfg = cfg.clone();
            task_cfg.tray_bias = 1.0;
            let (ds, _) = collect_tabletop_mode(
                SceneKind::PlaceInBox,
                TabletopMode::PickPlace(TARGET),
                DataSource::Condition(InitialCondition::ObjectInGripper),
                episodes,
                &task_cfg,
                seed,
            )?;
            Ok(ds)
        }
        (env::tabletop::DRAWER_GRASP_ID, CollectKind::Prior) => {
            let mut env = TabletopEnv::new(SceneKind::Drawer);
            let mut ds = Dataset::new(env.id(), env.obs_dim(), seed, DataSource::Randomized);
            for traj in 0..episodes {
                let mut r = rng::seeded(rng::derive(seed, traj as u64));
                let obs = env.reset_randomized(&mut r);
                let mode = drawer_prior_mode(&mut r);
                run_tabletop_episode(&mut env, mode, cfg, &mut r, traj, obs, &mut ds.transitions);
            }
            Ok(ds.relabel_zero())
        }
        (env::tabletop::DRAWER_GRASP_ID, CollectKind::Task) => {
            let (ds, _) = collect_tabletop_mode(
                SceneKind::Drawer,
                TabletopMode::Grasp(TARGET),
                DataSource::Condition(InitialCondition::OpenDrawer),
                episodes,
                cfg,
                seed,
            )?;
            Ok(ds)
        }
        (grid::ENV_ID, kind) => collect_grid_embedding(kind, episodes, cfg, seed),
        (other, _) => Err(CoreError::Unknown(alloc::format!("environment '{other}'"))),
    }
}

/// Gridworld behaviors.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GridMode {
    Open,
    Close,
    Remove,
    Grasp,
}

/// Hand policy for the gridworld, in discrete action space.
fn grid_policy(s: &GridState, cells: usize, mode: GridMode) -> usize {
    let drawer = cells - 1;
    match mode {
        GridMode::Open => {
            if s.gripper < drawer {
                grid::RIGHT
            } else if !s.drawer_open && !s.blocker {
                grid::TOGGLE
            } else {
                // Done, or a blocker holds the drawer shut: opening it is a
                // different script's job, so this one gives up.
                grid::NOOP
            }
        }
        GridMode::Close => {
            if s.gripper < drawer {
                grid::RIGHT
            } else if s.drawer_open {
                grid::TOGGLE
            } else {
                grid::NOOP
            }
        }
        GridMode::Remove => {
            if s.gripper < drawer {
                grid::RIGHT
            } else if s.blocker {
                grid::REMOVE
            } else {
                grid::NOOP
            }
        }
        GridMode::Grasp => match s.object {
            ObjectLoc::Out => grid::NOOP,
            ObjectLoc::Held => {
                if s.gripper > 0 {
                    grid::LEFT
                } else {
                    grid::NOOP
                }
            }
            ObjectLoc::InDrawer => {
                if s.gripper < drawer {
                    grid::RIGHT
                } else if !s.drawer_open {
                    grid::TOGGLE
                } else {
                    grid::GRASP
                }
            }
        },
    }
}

fn grid_prior_mode(r: &mut Rng8) -> GridMode {
    let x: f64 = r.gen();
    if x < 0.35 {
        GridMode::Open
    } else if x < 0.65 {
        GridMode::Close
    } else {
        GridMode::Remove
    }
}

fn noisy_grid_action(base: usize, cfg: &ScriptedConfig, r: &mut Rng8) -> usize {
    if cfg.grid_eps > 0.0 && r.gen_bool(cfg.grid_eps) {
        r.gen_range(0..grid::N_ACTIONS)
    } else {
        base
    }
}

/// Discrete-action gridworld collection for the tabular pipeline.
pub fn collect_grid_tabular(
    cells: usize,
    kind: CollectKind,
    episodes: u32,
    cfg: &ScriptedConfig,
    seed: u64,
) -> TabularDataset {
    let mut env = GridEnv::new(cells);
    let mut ds = TabularDataset::default();
    for traj in 0..episodes {
        let mut r = rng::seeded(rng::derive(seed, traj as u64));
        match kind {
            CollectKind::Prior => {
                env.reset_randomized(&mut r);
            }
            CollectKind::Task => {
                env.reset(InitialCondition::OpenDrawer, &mut r).expect("valid");
            }
        }
        let mode = match kind {
            CollectKind::Prior => grid_prior_mode(&mut r),
            CollectKind::Task => GridMode::Grasp,
        };
        for _ in 0..cfg.episode_len {
            let base = grid_policy(&env.state, cells, mode);
            // A NOOP from the script means its job is finished; the episode
            // ends rather than padding the data with idle self-loops.
            if base == grid::NOOP {
                break;
            }
            let a = noisy_grid_action(base, cfg, &mut r);
            let s = env.state.index(cells);
            let (next, reward) = grid::grid_step(cells, &env.state, a);
            env.state = next;
            ds.transitions.push(TabularTransition {
                s,
                a,
                r: if kind == CollectKind::Prior { 0.0 } else { reward },
                s2: next.index(cells),
            });
            // Episodes end once the object leaves the drawer: at success
            // for task data, and for prior data because the scripts have
            // nothing left to demonstrate. Post-success filler would
            // otherwise dominate visitation at a handful of states.
            if next.object == ObjectLoc::Out {
                break;
            }
        }
    }
    ds
}

/// Continuous-interface gridworld collection (8-dim actions).
fn collect_grid_embedding(
    kind: CollectKind,
    episodes: u32,
    cfg: &ScriptedConfig,
    seed: u64,
) -> Result<Dataset> {
    let mut env = GridEnv::new(grid::DEFAULT_CELLS);
    let source = match kind {
        CollectKind::Prior => DataSource::Randomized,
        CollectKind::Task => DataSource::Condition(InitialCondition::OpenDrawer),
    };
    let mut ds = Dataset::new(grid::ENV_ID, env.obs_dim(), seed, source);
    for traj in 0..episodes {
        let mut r = rng::seeded(rng::derive(seed, traj as u64));
        let mut obs = match kind {
            CollectKind::Prior => env.reset_randomized(&mut r),
            CollectKind::Task => env.reset(InitialCondition::OpenDrawer, &mut r)?,
        };
        let mode = match kind {
            CollectKind::Prior => grid_prior_mode(&mut r),
            CollectKind::Task => GridMode::Grasp,
        };
        for t in 0..cfg.episode_len {
            let base = grid_policy(&env.state, env.cells, mode);
            // Same completion stop as collect_grid_tabular.
            if base == grid::NOOP {
                break;
            }
            let discrete = noisy_grid_action(base, cfg, &mut r);
            let mut a = grid::encode_action(discrete).0;
            for v in a.iter_mut() {
                *v = (*v + rng::normal(&mut r, 0.0, cfg.noise_std)).max(-1.0).min(1.0);
            }
            let (next, reward) = env.step(&Action8(a));
            ds.transitions.push(Transition {
                obs: core::mem::take(&mut obs),
                action: a,
                reward,
                next_obs: next.clone(),
                traj,
                t: t as u32,
            });
            obs = next;
            // Same early stop as collect_grid_tabular once the object is out.
            if env.state.object == ObjectLoc::Out {
                break;
            }
        }
    }
    Ok(match kind {
        CollectKind::Prior => ds.relabel_zero(),
        CollectKind::Task => ds,
    })
}
