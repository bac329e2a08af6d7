use proptest::prelude::*;
use uavsim::geometry::{generate_synthetic_scenario, SyntheticParams};
use uavsim::radio::{
    all_rsrp, antenna_gain, array_factor, best_gbs, element_gain, path_loss_los, path_loss_nlos, AnglePair,
};
use uavsim::{Building, GbsClass, GbsConfig, RadioConfig, Scenario, Vec3};

fn class() -> impl Strategy<Value = GbsClass> {
    prop_oneof![Just(GbsClass::Micro), Just(GbsClass::Macro)]
}

fn small_city() -> Scenario {
    let params = SyntheticParams {
        area_size: [400.0, 400.0],
        n_buildings: 8,
        n_gbs: 5,
        min_separation: 100.0,
        ..Default::default()
    };
    generate_synthetic_scenario(&params, 17).unwrap()
}

proptest! {
    #[test]
    fn guarded_nlos_never_below_los(c in class(), d in 1.0f64..5000.0, z in 1.5f64..300.0) {
        let l = path_loss_los(c, d, z, 2.0).unwrap();
        let n = path_loss_nlos(c, d, z, 2.0).unwrap().db;
        if c == GbsClass::Micro || z <= 22.5 {
            prop_assert!(n >= l);
        }
    }

    #[test]
    fn path_loss_grows_with_distance(c in class(), d in 1.0f64..3000.0, k in 1.0f64..4.0, z in 1.5f64..300.0) {
        prop_assert!(path_loss_los(c, d * k, z, 2.0).unwrap() >= path_loss_los(c, d, z, 2.0).unwrap());
        prop_assert!(path_loss_nlos(c, d * k, z, 2.0).unwrap().db >= path_loss_nlos(c, d, z, 2.0).unwrap().db);
    }

    #[test]
    fn out_of_band_altitudes_are_rejected(c in class(), z in prop_oneof![0.0f64..1.49, 300.01f64..1000.0]) {
        prop_assert!(path_loss_los(c, 100.0, z, 2.0).is_err());
        prop_assert!(path_loss_nlos(c, 100.0, z, 2.0).is_err());
    }

    #[test]
    fn element_and_array_bounds(theta in 0.0f64..=180.0, phi in -180.0f64..=180.0, n in 1usize..16) {
        let cfg = RadioConfig { n_elements: n, ..RadioConfig::default() };
        let e = element_gain(AnglePair::new(theta, phi), &cfg);
        prop_assert!((-22.0..=8.0).contains(&e));
        prop_assert!(array_factor(AnglePair::new(theta, phi), &cfg) <= 10.0 * (n as f64).log10() + 1e-9);
    }

    #[test]
    fn antenna_gain_is_capped(x in -300.0f64..300.0, y in -300.0f64..300.0, z in 1.5f64..300.0, az in -180.0f64..180.0) {
        let gbs = GbsConfig {
            id: 3,
            position: Vec3::new(0.0, 0.0, 25.0),
            class: GbsClass::Macro,
            sector_azimuths: [az, az + 120.0, az + 240.0],
        };
        let cfg = RadioConfig::default();
        let p = Vec3::new(x, y, z);
        prop_assume!(p != gbs.position);
        prop_assert!(antenna_gain(&gbs, p, &cfg).unwrap() <= cfg.max_gain_db() + 1e-9);
    }

    #[test]
    fn rsrp_shifts_with_reference_power(x in 0.0f64..400.0, y in 0.0f64..400.0, z in 10.0f64..120.0, shift in -20.0f64..20.0) {
        let sc = small_city();
        let p = Vec3::new(x, y, z);
        prop_assume!(!sc.inside_any_building(p));
        let mut shifted = sc.clone();
        shifted.radio.p_ref_dbm += shift;
        let a = all_rsrp(&sc, p).unwrap();
        let b = all_rsrp(&shifted, p).unwrap();
        for ((ia, va), (ib, vb)) in a.iter().zip(&b) {
            prop_assert_eq!(ia, ib);
            prop_assert!((vb - va - shift).abs() < 1e-9);
        }
        prop_assert_eq!(best_gbs(&sc, p).unwrap().0, best_gbs(&shifted, p).unwrap().0);
    }

    #[test]
    fn los_is_symmetric(ax in 0.0f64..400.0, ay in 0.0f64..400.0, az in 0.0f64..100.0,
                        bx in 0.0f64..400.0, by in 0.0f64..400.0, bz in 0.0f64..100.0) {
        let sc = small_city();
        let (a, b) = (Vec3::new(ax, ay, az), Vec3::new(bx, by, bz));
        prop_assert_eq!(sc.is_los(a, b), sc.is_los(b, a));
    }

    #[test]
    fn sensing_stays_in_range(x in 1.0f64..399.0, y in 1.0f64..399.0, z in 1.0f64..120.0) {
        let sc = small_city();
        let p = Vec3::new(x, y, z);
        prop_assume!(!sc.inside_any_building(p));
        let r = sc.nearest_obstacle(p, 50.0, 16).unwrap();
        prop_assert!(r.distance >= 0.0 && r.distance <= 50.0);
        prop_assert!((r.direction.norm() - 1.0).abs() < 1e-9);
    }
}

#[test]
fn sensing_axis_examples() {
    let sc = Scenario {
        area: [200.0, 200.0],
        z_min: 1.5,
        z_max: 120.0,
        time_limit_steps: 10,
        source: Vec3::new(10.0, 10.0, 30.0),
        destination: Vec3::new(190.0, 190.0, 30.0),
        buildings: vec![Building::new(120.0, 80.0, 140.0, 120.0, 60.0)],
        gbs_list: Vec::new(),
        seed: 0,
        radio: RadioConfig::default(),
    };
    let r = sc.nearest_obstacle(Vec3::new(100.0, 100.0, 30.0), 50.0, 16).unwrap();
    assert!((r.distance - 20.0).abs() < 1e-9);
    assert_eq!(r.direction, Vec3::new(1.0, 0.0, 0.0));
    let ground = sc.nearest_obstacle(Vec3::new(50.0, 50.0, 5.0), 50.0, 16).unwrap();
    assert!((ground.distance - 5.0).abs() < 1e-9);
    assert_eq!(ground.direction, Vec3::new(0.0, 0.0, -1.0));
}

#[test]
fn synthetic_scenarios_are_reproducible_and_round_trip() {
    let params = SyntheticParams::default();
    let a = generate_synthetic_scenario(&params, 5).unwrap();
    let b = generate_synthetic_scenario(&params, 5).unwrap();
    assert_eq!(a, b);
    assert_ne!(a, generate_synthetic_scenario(&params, 6).unwrap());
    a.validate().unwrap();
    assert_eq!(Scenario::from_json(&a.to_json()).unwrap(), a);

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("city.json");
    uavsim::geometry::save_scenario(&a, &path).unwrap();
    assert_eq!(uavsim::geometry::load_scenario(&path).unwrap(), a);
}

#[test]
fn coincident_positions_are_an_error() {
    let gbs = GbsConfig {
        id: 1,
        position: Vec3::new(5.0, 5.0, 20.0),
        class: GbsClass::Micro,
        sector_azimuths: [0.0, 120.0, 240.0],
    };
    assert!(antenna_gain(&gbs, gbs.position, &RadioConfig::default()).is_err());
}
