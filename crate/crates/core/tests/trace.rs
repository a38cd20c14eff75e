use proptest::prelude::*;

use rnode_core::trace::suite::base_spec;
use rnode_core::trace::{generate_scenario, read_trace, write_trace, NoiseSpec, ObjectClass, VehicleSpec};
use rnode_core::violations::ViolationClass;

fn random_spec(fps: f64, lanes: Vec<(usize, f64, f64)>, noise: NoiseSpec) -> rnode_core::trace::ScenarioSpec {
    let mut spec = base_spec(2.0);
    spec.frame_rate = fps;
    spec.noise = noise;
    for (i, (lane, kmh, depart)) in lanes.into_iter().enumerate() {
        let x = 34.0 + 4.0 * lane as f64;
        spec.vehicles.push(VehicleSpec {
            label: format!("v{i}"),
            class: if i % 3 == 2 { ObjectClass::TwoWheeler } else { ObjectClass::Vehicle },
            size_m: [2.0, 4.5],
            path: vec![[x, 60.0 + 10.0 * i as f64], [x, 239.0]],
            speed_kmh: kmh,
            depart_s: depart,
            holds: Vec::new(),
            violations: Vec::new(),
            plate: None,
            occlusions: Vec::new(),
            confidence: 0.9,
        });
    }
    spec
}

fn noise() -> impl Strategy<Value = NoiseSpec> {
    (0.0f64..3.0, 0.0f64..2.0, 0.0f64..0.2, 0.0f64..0.3, 0.0f64..0.2).prop_map(|(b, s, e, p, d)| NoiseSpec {
        bbox_px_std: b,
        static_jitter_px: s,
        embedding_std: e,
        plate_corruption_p: p,
        drop_p: d,
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn written_traces_read_back_equal(
        seed in any::<u64>(),
        fps in prop::sample::select(vec![10.0, 20.0, 30.0, 40.0]),
        lanes in prop::collection::vec((0usize..4, 20.0f64..120.0, 0.0f64..1.5), 0..5),
        noise in noise(),
    ) {
        let scenario = generate_scenario(&random_spec(fps, lanes, noise), seed).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.jsonl");
        write_trace(&scenario, &path).unwrap();
        prop_assert_eq!(read_trace(&path).unwrap(), scenario);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn generation_is_a_function_of_spec_and_seed(seed in any::<u64>(), noise in noise()) {
        let spec = random_spec(30.0, vec![(0, 50.0, 0.0), (2, 80.0, 0.3)], noise);
        prop_assert_eq!(generate_scenario(&spec, seed).unwrap(), generate_scenario(&spec, seed).unwrap());
    }

    // with zero noise the span counts the frames between the two crossings
    #[test]
    fn noiseless_speed_span_brackets_the_traversal(kmh in 30.0f64..130.0, fps in prop::sample::select(vec![10.0, 20.0, 30.0, 40.0])) {
        let mut spec = base_spec(20.0);
        spec.frame_rate = fps;
        spec.noise = NoiseSpec::default();
        spec.vehicles.push(VehicleSpec {
            label: "fast".into(),
            class: ObjectClass::Vehicle,
            size_m: [2.0, 4.5],
            path: vec![[42.0, 5.0], [42.0, 239.0]],
            speed_kmh: kmh,
            depart_s: 0.0,
            holds: Vec::new(),
            violations: vec![ViolationClass::Speeding],
            plate: None,
            occlusions: Vec::new(),
            confidence: 0.9,
        });
        let s = generate_scenario(&spec, 0).unwrap();
        let gt = &s.ground_truth[0];
        prop_assert_eq!(gt.speed_kmh, Some(kmh));
        let n = (gt.span[1] - gt.span[0]) as f64;
        let exact = 100.0 / (kmh / 3.6) * fps;
        prop_assert!((n - exact).abs() < 1.0, "N = {} for {} frames of travel", n, exact);
        let measured = 3.6 * 100.0 / (n / fps);
        prop_assert!((measured - kmh).abs() <= kmh / (n - 1.0));
    }
}
