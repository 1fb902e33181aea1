use std::f64::consts::PI;
use std::io::Cursor;

use isingmap::{
    hit_lambda, Beam, BehindSensorSign, Field, FieldConfig, MaxRangePolicy, Point, Pose, Scan, ScanBeam, Theta,
};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_beams(seed: u64, n: usize, extent: f64) -> Vec<Beam> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let pose = Pose::from_xyh(rng.gen_range(0.0..extent), rng.gen_range(0.0..extent), rng.gen_range(-PI..PI))
                .unwrap();
            Beam::from_bearing(pose, rng.gen_range(-PI..PI), rng.gen_range(0.1..3.0), rng.gen_bool(0.05)).unwrap()
        })
        .collect()
}

fn random_queries(seed: u64, n: usize, extent: f64) -> Vec<Point> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| Point::new(rng.gen_range(-1.0..extent + 1.0), rng.gen_range(-1.0..extent + 1.0)))
        .collect()
}

fn field_from(beams: &[Beam]) -> Field {
    let mut f = Field::with_theta(Theta::fixture()).unwrap();
    beams.iter().for_each(|b| f.add_measurement(*b));
    f
}

#[test]
fn index_stays_within_truncation_bound() {
    let beams = random_beams(1, 10_000, 15.0);
    let field = field_from(&beams);
    for q in random_queries(2, 10_000, 15.0) {
        let (fast, used) = field.lambda_at_counted(q).unwrap();
        let exact = field.lambda_at_exact(q).unwrap();
        let eps = field.truncation_bound(field.contributing_len() - used);
        assert!((fast - exact).abs() <= eps, "query {q:?}: {fast} vs {exact}, bound {eps}");
    }
}

#[test]
fn insertion_order_does_not_matter() {
    let mut beams = random_beams(3, 2000, 6.0);
    let a = field_from(&beams);
    beams.shuffle(&mut ChaCha8Rng::seed_from_u64(4));
    let b = field_from(&beams);
    for q in random_queries(5, 2000, 6.0) {
        let (la, lb) = (a.lambda_at(q).unwrap(), b.lambda_at(q).unwrap());
        assert!((la - lb).abs() <= 1e-9 * (1.0 + la.abs()), "{la} vs {lb}");
    }
}

#[test]
fn merge_is_additive() {
    let beams = random_beams(6, 1500, 6.0);
    let (left, right) = beams.split_at(700);
    let (fl, fr, all) = (field_from(left), field_from(right), field_from(&beams));
    let mut merged = fl.clone();
    merged.merge(&fr).unwrap();
    assert_eq!(merged.len(), all.len());
    for q in random_queries(7, 1000, 6.0) {
        let sum = fl.lambda_at_exact(q).unwrap() + fr.lambda_at_exact(q).unwrap();
        assert!((merged.lambda_at_exact(q).unwrap() - sum).abs() <= 1e-9);
        assert!((merged.lambda_at(q).unwrap() - all.lambda_at(q).unwrap()).abs() <= 1e-9);
    }
}

#[test]
fn merge_rejects_different_configuration() {
    let mut a = Field::with_theta(Theta::fixture()).unwrap();
    let b = Field::with_theta(Theta { l_p: 0.2, ..Theta::fixture() }).unwrap();
    assert!(a.merge(&b).is_err());
}

#[test]
fn snapshot_round_trip_is_exact() {
    let mut config = FieldConfig::new(Theta::new(0.7, 1.3, 0.11, 0.17, 0.06).unwrap());
    config.prior_lambda = -0.25;
    config.max_range_policy = MaxRangePolicy::FreeOnly;
    config.behind_sensor_sign = BehindSensorSign::Verbatim;
    let mut field = Field::new(config).unwrap();
    random_beams(8, 500, 5.0).into_iter().for_each(|b| field.add_measurement(b));

    let mut bytes = Vec::new();
    field.write_snapshot(&mut bytes).unwrap();
    let back = Field::read_snapshot(Cursor::new(&bytes)).unwrap();
    assert_eq!(back.config(), field.config());
    assert_eq!(back.measurements(), field.measurements());
    for q in random_queries(9, 500, 5.0) {
        assert_eq!(back.lambda_at(q).unwrap(), field.lambda_at(q).unwrap());
    }
    let mut again = Vec::new();
    back.write_snapshot(&mut again).unwrap();
    assert_eq!(bytes, again);
}

#[test]
fn snapshot_rejects_bad_magic() {
    let err = Field::read_snapshot(Cursor::new("NOTAFIELD\n")).unwrap_err();
    assert!(err.to_string().contains("line 1"), "{err}");
}

#[test]
fn raster_peaks_at_the_hit() {
    let mut field = Field::with_theta(Theta::fixture()).unwrap();
    field.add_measurement(Beam::from_bearing(Pose::identity(), 0.0, 0.8, false).unwrap());
    let raster = field.query_grid(Point::new(-0.5, -0.5), Point::new(1.5, 0.5), 0.05).unwrap();
    let (mut best, mut at) = (f64::MIN, Point::origin());
    for row in 0..raster.height {
        for col in 0..raster.width {
            if raster.get(col, row) > best {
                best = raster.get(col, row);
                at = raster.cell_center(col, row);
            }
        }
    }
    assert!((at - Point::new(0.8, 0.0)).norm() <= 0.05, "argmax at {at:?}");
}

#[test]
fn single_beam_field_matches_kernel() {
    let theta = Theta::fixture();
    let m = Beam::from_bearing(Pose::from_xyh(1.0, -1.0, 0.3).unwrap(), -0.2, 1.4, false).unwrap();
    let field = field_from(&[m]);
    for q in random_queries(10, 500, 3.0) {
        let want = hit_lambda(&m, q, &theta).unwrap().0;
        assert!((field.lambda_at_exact(q).unwrap() - want).abs() <= 1e-15);
    }
}

#[test]
fn max_range_policies() {
    let pose = Pose::identity();
    let scan = Scan::new(
        pose,
        vec![
            ScanBeam { bearing: 0.0, range: 3.0, is_max_range: true },
            ScanBeam { bearing: 0.5, range: 1.0, is_max_range: false },
        ],
        3.0,
    )
    .unwrap();
    let q_far = Point::new(3.0, 0.0);
    let q_mid = Point::new(1.5, 0.0);

    let mut discard = Field::with_theta(Theta::fixture()).unwrap();
    let report = discard.add_scan(&scan);
    assert_eq!((report.added, report.rejected), (2, 0));
    assert_eq!(discard.contributing_len(), 1);
    assert!(discard.lambda_at(q_mid).unwrap().abs() < 1e-12);

    let mut config = FieldConfig::new(Theta::fixture());
    config.max_range_policy = MaxRangePolicy::FreeOnly;
    let mut free_only = Field::new(config).unwrap();
    free_only.add_scan(&scan);
    assert_eq!(free_only.contributing_len(), 2);
    assert!(free_only.lambda_at(q_mid).unwrap() < -0.5);
    // no occupied bump at the end of a no-return beam
    assert!(free_only.lambda_at(q_far).unwrap() <= 0.0);
}

#[test]
fn f32_field_tracks_f64() {
    let beams = random_beams(11, 300, 4.0);
    let f64_field = field_from(&beams);
    let mut f32_field = isingmap::Field32::with_theta(isingmap::Theta32::fixture()).unwrap();
    for b in &beams {
        let pose = isingmap::Pose2::from_xyh(
            b.pose().position().x as f32,
            b.pose().position().y as f32,
            b.pose().heading() as f32,
        )
        .unwrap();
        f32_field.add_measurement(
            isingmap::Measurement::from_bearing(pose, b.bearing() as f32, b.range() as f32, b.is_max_range())
                .unwrap(),
        );
    }
    for q in random_queries(12, 300, 4.0) {
        let a = f64_field.prob_at(q).unwrap();
        let b = f32_field.prob_at(q.cast()).unwrap() as f64;
        assert!((a - b).abs() < 1e-3, "{a} vs {b}");
    }
}
