use cog_cli::ckpt;
use cog_core::algo::TrainConfig;
use cog_core::env::tabletop::{SceneKind, TabletopEnv, STEP_CAP};
use cog_core::env::{Action8, InitialCondition, ACT_DIM};
use cog_core::nn::Mlp;
use cog_core::rng;

fn q_of(q1: &Mlp, q2: &Mlp, obs: &[f64], a: &[f64; ACT_DIM]) -> f64 {
    let mut x = obs.to_vec();
    x.extend_from_slice(a);
    let v1 = q1.forward(&x, 1).unwrap()[0];
    let v2 = q2.forward(&x, 1).unwrap()[0];
    v1.min(v2)
}

fn approach(target: [f64; 2], gripper: [f64; 2]) -> [f64; ACT_DIM] {
    let mut a = [0.0; ACT_DIM];
    a[0] = ((target[0] - gripper[0]) / STEP_CAP).max(-1.0).min(1.0);
    a[1] = ((target[1] - gripper[1]) / STEP_CAP).max(-1.0).min(1.0);
    a
}

#[test]
fn probe() {
    let cfg = TrainConfig::desk();
    let agent = ckpt::load(
        std::path::Path::new("/tmp/probe3/cog/seed0/ckpt_step000045000.ckpt"),
        &cfg,
    )
    .unwrap();
    let mut env = TabletopEnv::new(SceneKind::Drawer);
    let mut r = rng::seeded(rng::derive(123, 0));
    let mut obs = env.reset(InitialCondition::ClosedDrawer, &mut r).unwrap();

    // Walk the scripted opening route; at each state compare Q of the
    // opener action, the policy's own action, and a straight cavity dive.
    for t in 0..30 {
        let g = env.state.gripper;
        let h = env.handle_pos();
        let a_open = if (g[0] - h[0]).hypot(g[1] - h[1]) > 0.04 {
            approach(h, g)
        } else {
            let mut a = [0.0; ACT_DIM];
            a[0] = -1.0;
            a[1] = ((h[1] - g[1]) / STEP_CAP).max(-1.0).min(1.0);
            a
        };
        let pol = agent.policy.act_deterministic(&obs, 1).unwrap();
        let mut a_pol = [0.0; ACT_DIM];
        a_pol.copy_from_slice(&pol);
        let a_dive = approach([0.62, 0.0], g);

        let q_open = q_of(&agent.q1, &agent.q2, &obs, &a_open);
        let q_pol = q_of(&agent.q1, &agent.q2, &obs, &a_pol);
        let q_dive = q_of(&agent.q1, &agent.q2, &obs, &a_dive);
        println!(
            "t={t:02} g=({:.2},{:.2}) e={:.2} | Q(open)={q_open:8.3} Q(policy)={q_pol:8.3} Q(dive)={q_dive:8.3}",
            g[0], g[1], env.state.e
        );
        // Follow the opener so the trace walks the stitched route.
        let (next, _) = env.step(&Action8(a_open));
        obs = next;
    }

    // Also: values at an open-drawer start for reference.
    let mut r2 = rng::seeded(rng::derive(123, 1));
    let obs_open = env.reset(InitialCondition::OpenDrawer, &mut r2).unwrap();
    let pol = agent.policy.act_deterministic(&obs_open, 1).unwrap();
    let mut a_pol = [0.0; ACT_DIM];
    a_pol.copy_from_slice(&pol);
    println!(
        "open start: Q(policy)={:.3}",
        q_of(&agent.q1, &agent.q2, &obs_open, &a_pol)
    );
    panic!("probe only");
}
