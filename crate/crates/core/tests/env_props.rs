use std::sync::Arc;

use proptest::prelude::*;
use uavsim::env::{reward, ActionCommand, EnvConfig, EnvError, TerminalKind, UavEnv};
use uavsim::geometry::distance_3d;
use uavsim::radio::rsrp_by_id;
use uavsim::{Building, GbsClass, GbsConfig, RadioConfig, Scenario, Vec3};

fn block_scenario() -> Arc<Scenario> {
    let g = |id, x, y| GbsConfig {
        id,
        position: Vec3::new(x, y, 25.0),
        class: GbsClass::Macro,
        sector_azimuths: [0.0, 120.0, 240.0],
    };
    Arc::new(Scenario {
        area: [300.0, 300.0],
        z_min: 10.0,
        z_max: 120.0,
        time_limit_steps: 40,
        source: Vec3::new(30.0, 30.0, 30.0),
        destination: Vec3::new(270.0, 270.0, 30.0),
        buildings: vec![Building::new(100.0, 100.0, 180.0, 160.0, 70.0), Building::new(200.0, 40.0, 240.0, 90.0, 40.0)],
        gbs_list: vec![g(10, 20.0, 280.0), g(11, 280.0, 20.0), g(12, 150.0, 250.0)],
        seed: 0,
        radio: RadioConfig::default(),
    })
}

fn moves() -> impl Strategy<Value = Vec<([f64; 3], usize)>> {
    prop::collection::vec(([-1.5f64..1.5, -1.5f64..1.5, -1.5f64..1.5], 0usize..3), 1..60)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn random_flights_respect_invariants(actions in moves()) {
        let sc = block_scenario();
        let cfg = EnvConfig::default();
        let mut env = UavEnv::new(sc.clone(), cfg.clone()).unwrap();
        env.reset(0).unwrap();
        let ids = [10u32, 11, 12];
        for (delta, g) in actions {
            if env.is_done() {
                let r = env.step(ActionCommand { delta: Vec3::ZERO, next_gbs: 10 });
                prop_assert!(matches!(r, Err(EnvError::Terminated)));
                break;
            }
            let before = env.state().clone();
            let out = env.step(ActionCommand { delta: Vec3::from(delta), next_gbs: ids[g] }).unwrap();
            let s = &out.next_state;
            prop_assert!(sc.in_area(s.position) && s.position.z >= sc.z_min && s.position.z <= sc.z_max);
            prop_assert!(!sc.inside_any_building(s.position));
            prop_assert!(distance_3d(before.position, s.position) <= cfg.step_scale * 3f64.sqrt() + 1e-9);
            prop_assert_eq!(s.step_index, before.step_index + 1);
            prop_assert_eq!(s.serving_gbs, ids[g]);
            prop_assert_eq!(out.handover_occurred, ids[g] != before.serving_gbs);
            prop_assert!((s.serving_rsrp - rsrp_by_id(&sc, ids[g], s.position).unwrap()).abs() < 1e-9);
            prop_assert!((s.dist_to_dest - distance_3d(s.position, env.destination())).abs() < 1e-9);

            let base = reward(before.dist_to_dest, s.dist_to_dest, s.serving_rsrp, &cfg.reward);
            let shaped = match out.terminal_kind {
                TerminalKind::Reached => base + cfg.reward.terminal_bonus,
                TerminalKind::Collided => base + cfg.reward.collision_penalty,
                _ => base,
            };
            prop_assert!((out.reward - shaped).abs() < 1e-9);
            prop_assert_eq!(out.done, out.terminal_kind != TerminalKind::None);
            if out.terminal_kind == TerminalKind::Collided {
                prop_assert_eq!(s.position, before.position);
            }
            prop_assert!(env.observe().iter().all(|v| (-1.0..=1.0).contains(v)));
        }
    }
}

#[test]
fn timeout_ends_the_episode() {
    let sc = block_scenario();
    let mut env = UavEnv::new(sc.clone(), EnvConfig::default()).unwrap();
    env.reset(0).unwrap();
    let mut last = None;
    while !env.is_done() {
        last = Some(env.step(ActionCommand { delta: Vec3::ZERO, next_gbs: 10 }).unwrap());
    }
    let out = last.unwrap();
    assert_eq!(out.terminal_kind, TerminalKind::Timeout);
    assert_eq!(out.next_state.step_index, sc.time_limit_steps);
}

#[test]
fn flying_into_a_wall_collides() {
    let sc = block_scenario();
    let mut env = UavEnv::new(sc, EnvConfig::default()).unwrap();
    env.reset_with_endpoints(Vec3::new(90.0, 130.0, 30.0), Vec3::new(270.0, 270.0, 30.0)).unwrap();
    let out = env.step(ActionCommand { delta: Vec3::new(1.0, 0.0, 0.0), next_gbs: 10 }).unwrap();
    assert_eq!(out.terminal_kind, TerminalKind::Collided);
    assert_eq!(out.next_state.position, Vec3::new(90.0, 130.0, 30.0));
}

#[test]
fn arrival_snaps_to_destination() {
    let sc = block_scenario();
    let mut env = UavEnv::new(sc, EnvConfig::default()).unwrap();
    let dest = Vec3::new(270.0, 270.0, 30.0);
    env.reset_with_endpoints(Vec3::new(250.0, 270.0, 30.0), dest).unwrap();
    let out = env.step(ActionCommand { delta: Vec3::new(0.6, 0.0, 0.0), next_gbs: 12 }).unwrap();
    assert_eq!(out.terminal_kind, TerminalKind::Reached);
    assert_eq!(out.next_state.position, dest);
}

#[test]
fn resets_are_deterministic_per_seed() {
    let sc = block_scenario();
    let cfg = EnvConfig { endpoints: uavsim::env::EndpointMode::Jitter { radius: 20.0 }, ..Default::default() };
    let mut a = UavEnv::new(sc.clone(), cfg.clone()).unwrap();
    let mut b = UavEnv::new(sc, cfg).unwrap();
    assert_eq!(a.reset(42).unwrap(), b.reset(42).unwrap());
    assert_eq!(a.destination(), b.destination());
    let first = a.source();
    a.reset(43).unwrap();
    assert_ne!(a.source(), first);
}

#[test]
fn endpoints_inside_buildings_are_rejected() {
    let mut env = UavEnv::new(block_scenario(), EnvConfig::default()).unwrap();
    assert!(env.reset_with_endpoints(Vec3::new(140.0, 130.0, 30.0), Vec3::new(270.0, 270.0, 30.0)).is_err());
}
