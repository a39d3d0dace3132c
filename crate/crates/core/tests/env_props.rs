use std::path::Path;

use agent_harness::envs::grid::{GridConfig, ObjectPlacement};
use agent_harness::envs::{load_embodied_suite, EmbodiedTask, EnvSession, GridNav, World};
use proptest::prelude::*;

fn task(file: &str) -> EmbodiedTask {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(file);
    load_embodied_suite(&path).unwrap().tasks.remove(0)
}

fn tasks() -> Vec<EmbodiedTask> {
    ["replay_house.json", "replay_grid.json", "early_exit_house.json"].map(task).to_vec()
}

/// An action choice: an index into the valid list, or junk.
#[derive(Debug, Clone)]
enum Pick {
    Valid(prop::sample::Index),
    Junk(String),
}

fn picks() -> impl Strategy<Value = Vec<Pick>> {
    prop::collection::vec(
        prop_oneof![
            4 => any::<prop::sample::Index>().prop_map(Pick::Valid),
            1 => "xyzzy [a-z]{0,6}".prop_map(Pick::Junk),
        ],
        0..40,
    )
}

fn choose(session: &EnvSession, pick: &Pick) -> String {
    let valid = session.valid_actions();
    match pick {
        Pick::Valid(i) if !valid.is_empty() => valid[i.index(valid.len())].clone(),
        Pick::Valid(_) => "look".into(),
        Pick::Junk(s) => s.clone(),
    }
}

fn in_bounds(world: &World) -> bool {
    match world {
        World::Grid(g) => (0..g.width).contains(&g.agent.0) && (0..g.height).contains(&g.agent.1),
        World::House(_) => true,
    }
}

proptest! {
    #[test]
    fn observations_are_a_function_of_actions(which in 0usize..3, seed in any::<u64>(), picks in picks()) {
        let t = &tasks()[which];
        let (mut a, first_a) = EnvSession::reset(t, seed).unwrap();
        let (mut b, first_b) = EnvSession::reset(t, seed).unwrap();
        prop_assert_eq!(first_a, first_b);
        for p in &picks {
            let action = choose(&a, p);
            prop_assert_eq!(a.step(&action), b.step(&action));
        }
    }

    #[test]
    fn progress_never_drops(which in 0usize..3, picks in picks()) {
        let t = &tasks()[which];
        let (mut env, _) = EnvSession::reset(t, 1).unwrap();
        let mut last = env.progress();
        for p in &picks {
            let action = choose(&env, p);
            let obs = env.step(&action);
            let now = env.progress();
            prop_assert!(now >= last);
            prop_assert!((0.0..=1.0).contains(&now));
            prop_assert_eq!(obs.done, now == 1.0);
            prop_assert!(in_bounds(&env.world));
            last = now;
        }
    }

    #[test]
    fn invalid_actions_leave_state_alone(which in 0usize..3, picks in picks(), junk in "xyzzy [a-z]{0,6}") {
        let t = &tasks()[which];
        let (mut env, _) = EnvSession::reset(t, 3).unwrap();
        for p in &picks {
            let action = choose(&env, p);
            env.step(&action);
        }
        let before = env.world.clone();
        let progress = env.progress();
        env.step(&junk);
        prop_assert_eq!(&env.world, &before);
        prop_assert_eq!(env.progress(), progress);
    }

    #[test]
    fn seeded_layouts_are_reproducible(seed in any::<u64>(), n in 1usize..6, side in 4i32..10) {
        let cfg = GridConfig {
            width: side,
            height: side,
            walls: vec![],
            agent: None,
            objects: (0..n)
                .map(|i| ObjectPlacement { kind: ["ball", "key", "box"][i % 3].into(), color: "red".into(), at: None })
                .collect(),
        };
        let interior = ((side - 2) * (side - 2)) as usize;
        let built = GridNav::new(&cfg, seed);
        // objects plus the agent must fit in the interior
        prop_assert_eq!(built.is_ok(), n < interior);
        let Ok(a) = built else { return Ok(()) };
        prop_assert_eq!(&a, &GridNav::new(&cfg, seed).unwrap());
        prop_assert!((1..side - 1).contains(&a.agent.0) && (1..side - 1).contains(&a.agent.1));
        for o in &a.objects {
            prop_assert_ne!(o.pos, a.agent);
        }
    }
}
