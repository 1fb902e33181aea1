//! Seeded indoor benchmark: a two-room-plus-hall layout with thin walls,
//! small objects and occluded pockets, observed from a 24-pose trajectory.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::field::Scan;
use crate::model::{Point2, Pose2};
use crate::sim::env::{Environment, Occupancy, Polygon, ScanConfig};

pub const BENCHMARK_POSES: usize = 24;

/// Wall thickness.
pub const THIN_WALL: f64 = 0.05;

/// Minimum distance kept between a trajectory pose and any obstacle.
const MIN_CLEARANCE: f64 = 0.2;

const WAYPOINTS: [(f64, f64); BENCHMARK_POSES] = [
    (0.5, 0.5),
    (1.0, 0.5),
    (2.2, 0.5),
    (3.0, 0.6),
    (3.5, 1.2),
    (3.4, 2.0),
    (2.2, 2.0),
    (0.6, 1.8),
    (3.3, 2.9),
    (2.5, 3.3),
    (1.8, 4.3),
    (0.6, 4.4),
    (0.5, 3.1),
    (3.5, 3.6),
    (3.6, 2.45),
    (4.5, 2.45),
    (5.2, 2.0),
    (5.5, 1.0),
    (6.8, 0.6),
    (7.3, 1.5),
    (6.6, 2.6),
    (7.3, 3.3),
    (5.8, 4.3),
    (5.0, 3.2),
];

fn jitter(rng: &mut ChaCha8Rng, amount: f64) -> f64 {
    rng.gen_range(-amount..=amount)
}

/// Builds the benchmark world and its trajectory. Identical seeds give
/// identical worlds.
pub fn build_benchmark_env(seed: u64) -> Result<(Environment, Vec<Pose2<f64>>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (w, h, t) = (8.0, 5.0, THIN_WALL);
    let mut obstacles = vec![
        Polygon::rect(0.0, 0.0, w, t)?,
        Polygon::rect(0.0, h - t, w, h)?,
        Polygon::rect(0.0, t, t, h - t)?,
        Polygon::rect(w - t, t, w, h - t)?,
    ];

    // dividing wall with a door
    let door = 2.0 + jitter(&mut rng, 0.1);
    obstacles.push(Polygon::rect(4.0, t, 4.0 + THIN_WALL, door)?);
    obstacles.push(Polygon::rect(4.0, door + 0.9, 4.0 + THIN_WALL, h - t)?);

    // thin partition between the two left rooms
    let gap = 2.8 + jitter(&mut rng, 0.1);
    obstacles.push(Polygon::rect(t, 2.5, gap, 2.5 + THIN_WALL)?);

    // desk
    let (dx, dy) = (jitter(&mut rng, 0.1), jitter(&mut rng, 0.05));
    obstacles.push(Polygon::rect(1.3 + dx, 0.9 + dy, 1.8 + dx, 1.3 + dy)?);

    // pole thinner than a grid cell
    let (px, py) = (2.6 + jitter(&mut rng, 0.1), 1.4 + jitter(&mut rng, 0.1));
    obstacles.push(Polygon::rect(px, py, px + 0.04, py + 0.04)?);

    // triangular cabinet in the upper-left room
    let tx = jitter(&mut rng, 0.15);
    obstacles.push(Polygon::new(vec![
        Point2::new(1.0 + tx, 3.4),
        Point2::new(1.6 + tx, 3.3),
        Point2::new(1.3 + tx, 3.95),
    ])?);

    // free-standing panel in the right room, casting a shadow
    let py = 1.0 + jitter(&mut rng, 0.1);
    obstacles.push(Polygon::rect(6.0, py, 6.0 + THIN_WALL, py + 0.8)?);

    // cupboard in the far corner and a small crate
    let cx = jitter(&mut rng, 0.1);
    obstacles.push(Polygon::rect(6.8 + cx, 3.7, 7.4 + cx, 4.4)?);
    let sx = jitter(&mut rng, 0.1);
    obstacles.push(Polygon::rect(5.2 + sx, 3.7, 5.28 + sx, 3.78)?);

    let env = Environment::new(obstacles, Point2::new(0.0, 0.0), Point2::new(w, h))?;

    let mut poses = Vec::with_capacity(BENCHMARK_POSES);
    let mut prev: Option<Point2<f64>> = None;
    for &(x, y) in &WAYPOINTS {
        let base = Point2::new(x, y);
        let mut chosen = base;
        for _ in 0..32 {
            let cand = Point2::new(x + jitter(&mut rng, 0.1), y + jitter(&mut rng, 0.1));
            if env.label(cand) == Occupancy::Free && env.clearance(cand) >= MIN_CLEARANCE {
                chosen = cand;
                break;
            }
        }
        let heading = match prev {
            Some(p) => (chosen.y - p.y).atan2(chosen.x - p.x),
            None => 0.0,
        };
        poses.push(Pose2::new(chosen, heading)?);
        prev = Some(chosen);
    }
    Ok((env, poses))
}

/// Simulates one scan per pose.
pub fn simulate_trajectory(
    env: &Environment,
    poses: &[Pose2<f64>],
    cfg: &ScanConfig,
) -> Result<Vec<Scan<f64>>> {
    poses.iter().map(|&p| env.simulate_scan(p, cfg)).collect()
}

/// Cell centers of a `spacing` grid over the environment bounds, kept only
/// when within `max_range` of at least one pose.
pub fn evaluation_points(
    env: &Environment,
    poses: &[Pose2<f64>],
    spacing: f64,
    max_range: f64,
) -> Vec<Point2<f64>> {
    let (min, max) = env.bounds();
    let nx = ((max.x - min.x) / spacing - 1e-9).ceil() as usize;
    let ny = ((max.y - min.y) / spacing - 1e-9).ceil() as usize;
    let r2 = max_range * max_range;
    let mut points = Vec::new();
    for j in 0..ny {
        for i in 0..nx {
            let p = Point2::new(
                min.x + (i as f64 + 0.5) * spacing,
                min.y + (j as f64 + 0.5) * spacing,
            );
            if poses.iter().any(|q| (p - q.position()).norm_squared() <= r2) {
                points.push(p);
            }
        }
    }
    points
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_per_seed() {
        let (a, pa) = build_benchmark_env(7).unwrap();
        let (b, pb) = build_benchmark_env(7).unwrap();
        let (mut ba, mut bb) = (Vec::new(), Vec::new());
        a.write(&mut ba).unwrap();
        b.write(&mut bb).unwrap();
        assert_eq!(ba, bb);
        assert_eq!(pa, pb);
        let (c, _) = build_benchmark_env(8).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn has_sub_cell_obstacle() {
        let (env, _) = build_benchmark_env(1).unwrap();
        assert!(env.obstacles().iter().any(|p| p.min_extent() < 0.1));
    }

    #[test]
    fn poses_in_free_space() {
        for seed in 0..20 {
            let (env, poses) = build_benchmark_env(seed).unwrap();
            assert_eq!(poses.len(), BENCHMARK_POSES);
            for p in &poses {
                assert_eq!(env.label(p.position()), Occupancy::Free, "seed {seed}");
            }
        }
    }

    #[test]
    fn evaluation_points_respect_range() {
        let (env, poses) = build_benchmark_env(3).unwrap();
        let pts = evaluation_points(&env, &poses[..1], 0.05, 1.0);
        assert!(!pts.is_empty());
        assert!(pts.iter().all(|p| (*p - poses[0].position()).norm() <= 1.0));
    }
}
