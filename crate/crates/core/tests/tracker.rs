mod support;

use std::collections::BTreeSet;

use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use rnode_core::geom::BBox;
use rnode_core::trace::suite::{base_spec, mixed_suite, SuiteVariant, SUITE_SEED};
use rnode_core::trace::{generate_scenario, Detection, ObjectClass, Scenario, VehicleSpec};
use rnode_core::tracker::{
    assignment, associate, bbox_to_measurement, KalmanParams, Track, TrackState, TrackStatus, Tracker, TrackerConfig,
};

use support::brute_assignment;

/// Textbook filter on dynamic matrices: explicit inverse gain and the
/// short-form covariance update.
struct DenseFilter {
    x: DVector<f64>,
    p: DMatrix<f64>,
}

impl DenseFilter {
    fn noise(stds: &[f64]) -> DMatrix<f64> {
        DMatrix::from_diagonal(&DVector::from_iterator(stds.len(), stds.iter().map(|s| s * s)))
    }

    fn predict(&mut self, k: &KalmanParams) {
        let h = self.x[3];
        let (p, v, s) = (k.std_weight_position * h, k.std_weight_velocity * h, k.process_noise_scale);
        let q = Self::noise(&[p * s, p * s, 1e-2 * s, p * s, v * s, v * s, 1e-5 * s, v * s]);
        let mut f = DMatrix::<f64>::identity(8, 8);
        for i in 0..4 {
            f[(i, i + 4)] = 1.0;
        }
        self.x = &f * &self.x;
        self.p = &f * &self.p * f.transpose() + q;
    }

    fn update(&mut self, z: &[f64; 4], k: &KalmanParams) {
        let h = self.x[3];
        let m = k.measurement_noise_scale;
        let pos = k.std_weight_position * h * m;
        let r = Self::noise(&[pos, pos, 1e-1 * m, pos]);
        let obs = DMatrix::from_fn(4, 8, |i, j| if i == j { 1.0 } else { 0.0 });
        let s = &obs * &self.p * obs.transpose() + r;
        let gain = &self.p * obs.transpose() * s.try_inverse().unwrap();
        let innovation = DVector::from_column_slice(z) - &obs * &self.x;
        self.x += &gain * innovation;
        self.p = (DMatrix::identity(8, 8) - &gain * &obs) * &self.p;
    }
}

#[test]
fn filter_matches_textbook_form() {
    let params = KalmanParams::default();
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    for _ in 0..20 {
        let start = BBox::new(rng.random_range(0.0..500.0), rng.random_range(0.0..500.0), 30.0, rng.random_range(30.0..90.0));
        let mut s = TrackState::initiate(&start, &params);
        let mut d = DenseFilter {
            x: DVector::from_iterator(8, s.mean.iter().copied()),
            p: DMatrix::from_iterator(8, 8, s.covariance.iter().copied()),
        };
        let (vx, vy) = (rng.random_range(-4.0..4.0), rng.random_range(-4.0..4.0));
        for k in 1..60 {
            s.predict(&params);
            d.predict(&params);
            if rng.random_bool(0.7) {
                let b = BBox::new(
                    start.x + vx * k as f64 + rng.random_range(-2.0..2.0),
                    start.y + vy * k as f64 + rng.random_range(-2.0..2.0),
                    30.0 + rng.random_range(-2.0..2.0),
                    start.h + rng.random_range(-2.0..2.0),
                );
                let z = bbox_to_measurement(&b);
                s.update(&z, &params);
                d.update(&[z[0], z[1], z[2], z[3]], &params);
            }
            for i in 0..8 {
                assert!((s.mean[i] - d.x[i]).abs() <= 1e-6 * (1.0 + d.x[i].abs()), "mean[{i}] diverged at step {k}");
                for j in 0..8 {
                    let (a, b) = (s.covariance[(i, j)], d.p[(i, j)]);
                    assert!((a - b).abs() <= 1e-6 * (1.0 + b.abs()), "P[{i},{j}] {a} vs {b} at step {k}");
                }
            }
        }
    }
}

fn vehicle(label: &str, path: Vec<[f64; 2]>, speed_kmh: f64, depart_s: f64) -> VehicleSpec {
    VehicleSpec {
        label: label.into(),
        class: ObjectClass::Vehicle,
        size_m: [2.0, 4.5],
        path,
        speed_kmh,
        depart_s,
        holds: Vec::new(),
        violations: Vec::new(),
        plate: None,
        occlusions: Vec::new(),
        confidence: 0.9,
    }
}

fn all_tracks(scenario: &Scenario) -> Vec<rnode_core::tracker::Track> {
    let mut tracker = Tracker::new(TrackerConfig::default()).unwrap();
    let mut done = Vec::new();
    for f in &scenario.frames {
        done.extend(tracker.step(f).unwrap().deleted);
    }
    done.extend(tracker.finish());
    done
}

#[test]
fn single_noiseless_vehicle_keeps_one_identity() {
    let mut spec = base_spec(15.0);
    spec.vehicles.push(vehicle("solo", vec![[40.0, 5.0], [40.0, 239.0]], 70.0, 0.5));
    let tracks = all_tracks(&generate_scenario(&spec, 1).unwrap());
    assert_eq!(tracks.len(), 1);
    assert!(tracks[0].hits >= TrackerConfig::default().n_init);
}

#[test]
fn crossing_vehicles_do_not_swap_identities() {
    let mut spec = base_spec(12.0);
    spec.noise.embedding_std = 0.02;
    spec.vehicles.push(vehicle("left", vec![[33.0, 30.0], [47.0, 170.0]], 40.0, 0.5));
    spec.vehicles.push(vehicle("right", vec![[47.0, 30.0], [33.0, 170.0]], 40.0, 0.5));
    let tracks = all_tracks(&generate_scenario(&spec, 2).unwrap());
    assert_eq!(tracks.len(), 2, "a crossing split or merged identities");
    for t in &tracks {
        let xs: Vec<f64> = t.observed().map(|h| h.point.x).collect();
        let dir = (xs[xs.len() - 1] - xs[0]).signum();
        // a swap at the crossing would reverse lateral motion
        assert!(xs.windows(2).all(|w| (w[1] - w[0]) * dir >= -0.5), "track {} reversed", t.track_id);
    }
}

#[test]
fn track_ids_are_never_reused() {
    let scenario = generate_scenario(&mixed_suite(SuiteVariant::Occluded), SUITE_SEED).unwrap();
    let mut tracker = Tracker::new(TrackerConfig::default()).unwrap();
    let mut issued = BTreeSet::new();
    for f in &scenario.frames {
        let report = tracker.step(f).unwrap();
        for id in report.spawned {
            assert!(issued.insert(id), "id {id} issued twice");
        }
        let ids: Vec<u64> = report.matches.iter().map(|m| m.0).collect();
        let dets: BTreeSet<usize> = report.matches.iter().map(|m| m.1).collect();
        assert_eq!(ids.iter().collect::<BTreeSet<_>>().len(), ids.len());
        assert_eq!(dets.len(), ids.len());
        assert!(report.deleted.iter().all(|t| t.status == TrackStatus::Deleted));
    }
}

fn cost_matrix_strategy() -> impl Strategy<Value = Vec<Vec<Option<f64>>>> {
    (0usize..=6, 0usize..=6).prop_flat_map(|(r, c)| {
        prop::collection::vec(prop::collection::vec(prop::option::weighted(0.7, 0.0f64..1.0), c), r)
    })
}

proptest! {
    #[test]
    fn solver_is_one_to_one_admissible_and_optimal(cost in cost_matrix_strategy()) {
        let pairs = assignment::solve(&cost);
        let rows: BTreeSet<usize> = pairs.iter().map(|p| p.0).collect();
        let cols: BTreeSet<usize> = pairs.iter().map(|p| p.1).collect();
        prop_assert_eq!(rows.len(), pairs.len());
        prop_assert_eq!(cols.len(), pairs.len());
        prop_assert!(pairs.iter().all(|&(i, j)| cost[i][j].is_some()));
        let mut ordered = pairs.clone();
        ordered.sort_unstable();
        let total: f64 = ordered.iter().map(|&(i, j)| cost[i][j].unwrap()).sum();
        let (card, best) = brute_assignment(&cost);
        prop_assert_eq!(pairs.len(), card);
        prop_assert!((total - best).abs() < 1e-9, "{} vs {}", total, best);
    }

    #[test]
    fn associate_partitions_tracks_and_detections(
        boxes in prop::collection::vec((0.0f64..200.0, 0.0f64..200.0), 0..6),
        dets in prop::collection::vec((0.0f64..200.0, 0.0f64..200.0), 0..6),
    ) {
        let cfg = TrackerConfig::default();
        let mk = |&(x, y): &(f64, f64)| Detection::new(ObjectClass::Vehicle, BBox::new(x, y, 40.0, 60.0), 0.9);
        let tracks: Vec<Track> = boxes.iter().enumerate().map(|(i, b)| Track::new(i as u64 + 1, &mk(b), 0, &cfg)).collect();
        let dets: Vec<Detection> = dets.iter().map(mk).collect();
        let a = associate(&tracks, &dets, &cfg);
        let mut matched_tracks: Vec<u64> = a.matches.iter().map(|m| m.0).collect();
        matched_tracks.extend(&a.unmatched_tracks);
        matched_tracks.sort_unstable();
        prop_assert_eq!(matched_tracks, (1..=tracks.len() as u64).collect::<Vec<_>>());
        let mut matched_dets: Vec<usize> = a.matches.iter().map(|m| m.1).collect();
        matched_dets.extend(&a.unmatched_detections);
        matched_dets.sort_unstable();
        prop_assert_eq!(matched_dets, (0..dets.len()).collect::<Vec<_>>());
    }
}
