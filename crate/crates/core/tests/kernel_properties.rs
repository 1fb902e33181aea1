use std::f64::consts::PI;

use isingmap::{hit_lambda, lambda_to_prob, transform_measurement, Beam, Point, Pose, Theta};
use proptest::prelude::*;

fn theta_strategy() -> impl Strategy<Value = Theta> {
    (0.01..3.0f64, 0.01..3.0f64, 0.01..1.0f64, 0.01..1.0f64, 0.01..1.0f64)
        .prop_map(|(sf, sh, lp, lf, lb)| Theta::new(sf, sh, lp, lf, lb).unwrap())
}

fn beam_strategy() -> impl Strategy<Value = Beam> {
    (-5.0..5.0f64, -5.0..5.0f64, -PI..PI, -PI..PI, 0.05..4.0f64).prop_map(|(x, y, h, b, r)| {
        Beam::from_bearing(Pose::from_xyh(x, y, h).unwrap(), b, r, false).unwrap()
    })
}

fn point_strategy() -> impl Strategy<Value = Point> {
    (-10.0..10.0f64, -10.0..10.0f64).prop_map(|(x, y)| Point::new(x, y))
}

fn lam(m: &Beam, q: Point, theta: &Theta) -> f64 {
    hit_lambda(m, q, theta).unwrap().0
}

proptest! {
    #[test]
    fn bounded_by_sigmas(m in beam_strategy(), q in point_strategy(), theta in theta_strategy()) {
        let v = lam(&m, q, &theta);
        prop_assert!(v >= -theta.sigma_f && v <= theta.sigma_h, "{v}");
    }

    #[test]
    fn bounded_under_verbatim_sign(m in beam_strategy(), q in point_strategy(), theta in theta_strategy()) {
        let v = isingmap::hit_lambda_with(&m, q, &theta, isingmap::BehindSensorSign::Verbatim).unwrap().0;
        prop_assert!(v.abs() <= theta.sigma_f.max(theta.sigma_h));
    }

    #[test]
    fn reflection_across_axis(
        range in 0.05..4.0f64,
        x in -2.0..6.0f64,
        y in 0.0..2.0f64,
        theta in theta_strategy(),
    ) {
        // beam along +x from (1, 2): mirror images are exact in floating point
        let m = Beam::from_bearing(Pose::from_xyh(1.0, 2.0, 0.0).unwrap(), 0.0, range, false).unwrap();
        let a = lam(&m, Point::new(x, 2.0 + y), &theta);
        let b = lam(&m, Point::new(x, 2.0 - y), &theta);
        prop_assert!((a - b).abs() <= 1e-12);
    }

    #[test]
    fn monotone_decay_off_axis(
        range in 0.1..4.0f64,
        frac in 0.0..0.999f64,
        d1 in 0.0..1.0f64,
        extra in 0.0..1.0f64,
        theta in theta_strategy(),
    ) {
        let m = Beam::from_bearing(Pose::identity(), 0.0, range, false).unwrap();
        let x = frac * range;
        let near = lam(&m, Point::new(x, d1), &theta).abs();
        let far = lam(&m, Point::new(x, d1 + extra), &theta).abs();
        prop_assert!(far <= near + 1e-15);
    }

    #[test]
    fn bounded_jump_at_sensor(
        range in 0.1..4.0f64,
        y in -0.5..0.5f64,
        theta in theta_strategy(),
    ) {
        let m = Beam::from_bearing(Pose::identity(), 0.0, range, false).unwrap();
        let eps = 1e-9;
        let jump = (lam(&m, Point::new(-eps, y), &theta) - lam(&m, Point::new(eps, y), &theta)).abs();
        let bound = (theta.sigma_h + theta.sigma_f) * (-0.5 * range * range / (theta.l_f * theta.l_f)).exp();
        prop_assert!(jump <= bound + 1e-9, "jump {jump} bound {bound}");
    }

    #[test]
    fn prob_strictly_monotone(a in -18.0..18.0f64, delta in 1e-6..5.0f64) {
        let b = (a + delta).min(18.0);
        prop_assume!(b > a);
        let (pa, pb) = (lambda_to_prob(a).unwrap(), lambda_to_prob(b).unwrap());
        prop_assert!(pa <= pb);
        // Near saturation a small step in λ is below f64 resolution in p.
        if a.abs() <= 5.0 && b.abs() <= 5.0 {
            prop_assert!(pa < pb);
        }
        prop_assert!(pa > 0.0 && pb < 1.0);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn rigid_equivariance(
        m in beam_strategy(),
        q in point_strategy(),
        tx in -20.0..20.0f64,
        ty in -20.0..20.0f64,
        rot in -PI..PI,
    ) {
        let theta = Theta::fixture();
        let t = Point::new(tx, ty);
        let moved = transform_measurement(&m, t, rot).unwrap();
        let a = lam(&m, q, &theta);
        let b = lam(&moved, q.rotated(rot) + t, &theta);
        prop_assert!((a - b).abs() <= 1e-9, "{a} vs {b}");
    }
}

#[test]
fn continuous_across_hit_sphere() {
    let theta = Theta::fixture();
    let d = 0.8;
    let m = Beam::from_bearing(Pose::identity(), 0.0, d, false).unwrap();
    // Lipschitz constant of exp(-s²/2l²) is 1/(l·√e); along the axis s = ε·d
    let c = d / (theta.l_f.min(theta.l_b) * 0.5f64.exp().sqrt());
    for k in 1..12 {
        let eps = 10f64.powi(-k);
        let below = lam(&m, Point::new(d * (1.0 - eps), 0.0), &theta);
        let above = lam(&m, Point::new(d * (1.0 + eps), 0.0), &theta);
        assert!((below - above).abs() <= (theta.sigma_h + theta.sigma_f) * eps * c, "eps {eps}");
    }
}

#[test]
fn prob_of_zero_is_half() {
    assert_eq!(lambda_to_prob(0.0).unwrap(), 0.5);
    assert_eq!(lambda_to_prob(0.0f32).unwrap(), 0.5);
}
