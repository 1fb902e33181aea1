//! Polygonal worlds, ray casting and ground-truth labels.

use std::io::{BufRead, Write};

use crate::error::{Error, Result};
use crate::field::{Scan, ScanBeam};
use crate::model::{Point2, Pose2};

/// Geometric slack for boundary and intersection tests, in meters.
pub const GEOM_EPS: f64 = 1e-9;

pub const ENV_HEADER: &str = "# isingmap environment v1";
pub const TRAJECTORY_HEADER: &str = "# isingmap trajectory v1";

type P = Point2<f64>;

fn cross(a: P, b: P) -> f64 {
    a.x * b.y - a.y * b.x
}

/// Distance from `p` to the segment `a-b`.
fn segment_distance(p: P, a: P, b: P) -> f64 {
    let e = b - a;
    let len2 = e.norm_squared();
    let t = if len2 > 0.0 {
        ((p - a).dot(e) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    (p - (a + e * t)).norm()
}

fn segments_intersect(a: P, b: P, c: P, d: P) -> bool {
    let o1 = cross(b - a, c - a);
    let o2 = cross(b - a, d - a);
    let o3 = cross(d - c, a - c);
    let o4 = cross(d - c, b - c);
    if o1 * o2 < 0.0 && o3 * o4 < 0.0 {
        return true;
    }
    segment_distance(c, a, b) <= GEOM_EPS
        || segment_distance(d, a, b) <= GEOM_EPS
        || segment_distance(a, c, d) <= GEOM_EPS
        || segment_distance(b, c, d) <= GEOM_EPS
}

/// Simple polygon given by its vertices in order (either orientation).
#[derive(Clone, Debug, PartialEq)]
pub struct Polygon {
    vertices: Vec<P>,
}

impl Polygon {
    pub fn new(vertices: Vec<P>) -> Result<Self> {
        if vertices.len() < 3 {
            return Err(Error::invalid("polygon needs at least 3 vertices"));
        }
        if vertices.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("polygon vertices must be finite"));
        }
        let poly = Polygon { vertices };
        if !poly.is_simple() {
            return Err(Error::invalid("polygon is self-intersecting"));
        }
        Ok(poly)
    }

    /// Axis-aligned rectangle `[x0, x1] x [y0, y1]`.
    pub fn rect(x0: f64, y0: f64, x1: f64, y1: f64) -> Result<Self> {
        let (x0, x1) = (x0.min(x1), x0.max(x1));
        let (y0, y1) = (y0.min(y1), y0.max(y1));
        if x1 - x0 <= 0.0 || y1 - y0 <= 0.0 {
            return Err(Error::invalid("rectangle must have positive extent"));
        }
        Polygon::new(vec![
            Point2::new(x0, y0),
            Point2::new(x1, y0),
            Point2::new(x1, y1),
            Point2::new(x0, y1),
        ])
    }

    pub fn vertices(&self) -> &[P] {
        &self.vertices
    }

    pub fn edges(&self) -> impl Iterator<Item = (P, P)> + '_ {
        let n = self.vertices.len();
        (0..n).map(move |i| (self.vertices[i], self.vertices[(i + 1) % n]))
    }

    fn is_simple(&self) -> bool {
        let edges: Vec<_> = self.edges().collect();
        let n = edges.len();
        for i in 0..n {
            if (edges[i].1 - edges[i].0).norm() <= GEOM_EPS {
                return false;
            }
            for j in i + 1..n {
                let adjacent = j == i + 1 || (i == 0 && j == n - 1);
                if adjacent {
                    continue;
                }
                if segments_intersect(edges[i].0, edges[i].1, edges[j].0, edges[j].1) {
                    return false;
                }
            }
        }
        true
    }

    pub fn on_boundary(&self, p: P) -> bool {
        self.edges().any(|(a, b)| segment_distance(p, a, b) <= GEOM_EPS)
    }

    /// Even-odd containment, boundary counted as inside.
    pub fn contains(&self, p: P) -> bool {
        if self.on_boundary(p) {
            return true;
        }
        let mut inside = false;
        for (a, b) in self.edges() {
            if (a.y > p.y) != (b.y > p.y) {
                let x = a.x + (p.y - a.y) / (b.y - a.y) * (b.x - a.x);
                if p.x < x {
                    inside = !inside;
                }
            }
        }
        inside
    }

    /// Smallest side of the polygon's bounding box.
    pub fn min_extent(&self) -> f64 {
        let (min, max) = bbox(&self.vertices);
        (max.x - min.x).min(max.y - min.y)
    }
}

fn bbox(points: &[P]) -> (P, P) {
    let mut min = Point2::new(f64::INFINITY, f64::INFINITY);
    let mut max = Point2::new(f64::NEG_INFINITY, f64::NEG_INFINITY);
    for p in points {
        min = Point2::new(min.x.min(p.x), min.y.min(p.y));
        max = Point2::new(max.x.max(p.x), max.y.max(p.y));
    }
    (min, max)
}

/// Ground-truth occupancy at a point.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Occupancy {
    Occupied,
    Free,
}

impl Occupancy {
    /// `+1` for occupied, `-1` for free.
    pub fn sign(self) -> i8 {
        match self {
            Occupancy::Occupied => 1,
            Occupancy::Free => -1,
        }
    }
}

/// Outcome of a ray cast.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum RayHit {
    Hit(f64),
    MaxRange,
}

/// Lidar geometry of a simulated or logged scan.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScanConfig {
    pub beam_count: usize,
    /// Angular span in radians. A full circle spaces beams by `fov / n`
    /// so the first and last beam do not coincide; otherwise the beams
    /// span the closed interval and are spaced by `fov / (n - 1)`.
    pub field_of_view: f64,
    pub max_range: f64,
    /// Body-frame bearing of the first beam.
    pub start_offset: f64,
}

impl ScanConfig {
    /// 180 beams at 2° over a full circle with a 3 m range.
    pub fn benchmark() -> Self {
        ScanConfig {
            beam_count: 180,
            field_of_view: 2.0 * std::f64::consts::PI,
            max_range: 3.0,
            start_offset: -std::f64::consts::PI,
        }
    }

    /// Beams spanning `fov` centered on the sensor heading.
    pub fn centered(beam_count: usize, field_of_view: f64, max_range: f64) -> Self {
        ScanConfig {
            beam_count,
            field_of_view,
            max_range,
            start_offset: -0.5 * field_of_view,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.beam_count == 0 {
            return Err(Error::invalid("scan needs at least one beam"));
        }
        if !(self.max_range > 0.0) || !self.max_range.is_finite() {
            return Err(Error::invalid("max range must be positive"));
        }
        if !(self.field_of_view > 0.0) || self.field_of_view > 2.0 * std::f64::consts::PI + 1e-12 {
            return Err(Error::invalid("field of view must lie in (0, 2π]"));
        }
        Ok(())
    }

    pub fn is_full_circle(&self) -> bool {
        self.field_of_view >= 2.0 * std::f64::consts::PI - 1e-12
    }

    /// Angle between consecutive beams.
    pub fn angular_step(&self) -> f64 {
        if self.beam_count <= 1 {
            0.0
        } else if self.is_full_circle() {
            self.field_of_view / self.beam_count as f64
        } else {
            self.field_of_view / (self.beam_count - 1) as f64
        }
    }

    pub fn bearing(&self, k: usize) -> f64 {
        self.start_offset + k as f64 * self.angular_step()
    }
}

/// Polygonal world.
#[derive(Clone, Debug, PartialEq)]
pub struct Environment {
    obstacles: Vec<Polygon>,
    bounds: (P, P),
}

impl Environment {
    pub fn new(obstacles: Vec<Polygon>, min: P, max: P) -> Result<Self> {
        if !(max.x > min.x) || !(max.y > min.y) {
            return Err(Error::invalid("environment bounds are degenerate"));
        }
        for poly in &obstacles {
            let (lo, hi) = bbox(poly.vertices());
            if lo.x < min.x - GEOM_EPS
                || lo.y < min.y - GEOM_EPS
                || hi.x > max.x + GEOM_EPS
                || hi.y > max.y + GEOM_EPS
            {
                return Err(Error::invalid("obstacle outside environment bounds"));
            }
        }
        Ok(Environment {
            obstacles,
            bounds: (min, max),
        })
    }

    pub fn obstacles(&self) -> &[Polygon] {
        &self.obstacles
    }

    pub fn bounds(&self) -> (P, P) {
        self.bounds
    }

    pub fn is_occupied(&self, p: P) -> bool {
        self.obstacles.iter().any(|poly| poly.contains(p))
    }

    pub fn label(&self, p: P) -> Occupancy {
        if self.is_occupied(p) {
            Occupancy::Occupied
        } else {
            Occupancy::Free
        }
    }

    /// Distance from `p` to the nearest obstacle edge.
    pub fn clearance(&self, p: P) -> f64 {
        self.obstacles
            .iter()
            .flat_map(|poly| poly.edges())
            .map(|(a, b)| segment_distance(p, a, b))
            .fold(f64::INFINITY, f64::min)
    }

    /// Nearest intersection of the ray with any obstacle edge.
    pub fn raycast(&self, origin: P, direction: P, max_range: f64) -> Result<RayHit> {
        if !origin.is_finite() || !direction.is_finite() {
            return Err(Error::invalid("ray must be finite"));
        }
        if (direction.norm() - 1.0).abs() > 1e-9 {
            return Err(Error::invalid("ray direction must be a unit vector"));
        }
        if self.is_occupied(origin) {
            return Err(Error::invalid(format!(
                "sensor at ({}, {}) lies inside an obstacle",
                origin.x, origin.y
            )));
        }
        let mut best = f64::INFINITY;
        for (a, b) in self.obstacles.iter().flat_map(|poly| poly.edges()) {
            let e = b - a;
            let denom = cross(direction, e);
            if denom.abs() < 1e-15 {
                // parallel edges are caught through their neighbours' shared vertices
                continue;
            }
            let ao = a - origin;
            let t = cross(ao, e) / denom;
            let u = cross(ao, direction) / denom;
            if t >= 0.0 && (-1e-12..=1.0 + 1e-12).contains(&u) && t < best {
                best = t;
            }
        }
        Ok(if best <= max_range {
            RayHit::Hit(best)
        } else {
            RayHit::MaxRange
        })
    }

    /// One ray cast per configured bearing. Misses report `max_range`.
    pub fn simulate_scan(&self, pose: Pose2<f64>, cfg: &ScanConfig) -> Result<Scan<f64>> {
        cfg.validate()?;
        let mut beams = Vec::with_capacity(cfg.beam_count);
        for k in 0..cfg.beam_count {
            let bearing = cfg.bearing(k);
            let dir = pose.rotate(Point2::new(bearing.cos(), bearing.sin()));
            let beam = match self.raycast(pose.position(), dir, cfg.max_range)? {
                RayHit::Hit(d) => ScanBeam {
                    bearing,
                    range: d,
                    is_max_range: false,
                },
                RayHit::MaxRange => ScanBeam {
                    bearing,
                    range: cfg.max_range,
                    is_max_range: true,
                },
            };
            beams.push(beam);
        }
        Scan::new(pose, beams, cfg.max_range)
    }

    /// Writes `bounds` plus one `poly x1 y1 x2 y2 ...` line per obstacle.
    pub fn write<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "{ENV_HEADER}")?;
        let (min, max) = self.bounds;
        writeln!(out, "bounds {} {} {} {}", min.x, min.y, max.x, max.y)?;
        for poly in &self.obstacles {
            write!(out, "poly")?;
            for v in poly.vertices() {
                write!(out, " {} {}", v.x, v.y)?;
            }
            writeln!(out)?;
        }
        Ok(())
    }

    /// Reads the format written by [`Environment::write`]. Without a
    /// `bounds` line the obstacles' bounding box is used.
    pub fn read<R: BufRead>(input: R) -> Result<Self> {
        let mut bounds = None;
        let mut obstacles = Vec::new();
        for (i, line) in input.lines().enumerate() {
            let line = line?;
            let ln = i + 1;
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut toks = line.split_whitespace();
            let kind = toks.next().unwrap_or_default();
            let nums = toks
                .map(|t| {
                    t.parse::<f64>().map_err(|_| Error::Parse {
                        line: ln,
                        msg: format!("not a number: {t}"),
                    })
                })
                .collect::<Result<Vec<f64>>>()?;
            match kind {
                "bounds" if nums.len() == 4 => {
                    bounds = Some((Point2::new(nums[0], nums[1]), Point2::new(nums[2], nums[3])));
                }
                "poly" if nums.len() >= 6 && nums.len() % 2 == 0 => {
                    let verts = nums.chunks(2).map(|c| Point2::new(c[0], c[1])).collect();
                    obstacles.push(
                        Polygon::new(verts).map_err(|e| Error::Parse { line: ln, msg: e.to_string() })?,
                    );
                }
                _ => {
                    return Err(Error::Parse {
                        line: ln,
                        msg: format!("malformed `{kind}` record"),
                    })
                }
            }
        }
        let (min, max) = match bounds {
            Some(b) => b,
            None => {
                let all: Vec<P> = obstacles.iter().flat_map(|p| p.vertices().to_vec()).collect();
                if all.is_empty() {
                    return Err(Error::EmptySet("environment has no obstacles or bounds".into()));
                }
                bbox(&all)
            }
        };
        Environment::new(obstacles, min, max)
    }
}

/// Labels each point `Occupied` iff it lies inside or on some obstacle.
pub fn label_points(env: &Environment, points: &[P]) -> Vec<Occupancy> {
    points.iter().map(|&p| env.label(p)).collect()
}

pub fn write_trajectory<W: Write>(poses: &[Pose2<f64>], mut out: W) -> Result<()> {
    writeln!(out, "{TRAJECTORY_HEADER}")?;
    for p in poses {
        writeln!(out, "pose {} {} {}", p.position().x, p.position().y, p.heading())?;
    }
    Ok(())
}

pub fn read_trajectory<R: BufRead>(input: R) -> Result<Vec<Pose2<f64>>> {
    let mut poses = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let toks: Vec<&str> = line.split_whitespace().collect();
        let parsed: Option<Vec<f64>> = toks.get(1..).map(|t| t.iter().filter_map(|s| s.parse().ok()).collect());
        match (toks.first(), parsed) {
            (Some(&"pose"), Some(v)) if v.len() == 3 && toks.len() == 4 => {
                poses.push(Pose2::from_xyh(v[0], v[1], v[2])?);
            }
            _ => {
                return Err(Error::Parse {
                    line: i + 1,
                    msg: "expected `pose x y theta`".into(),
                })
            }
        }
    }
    Ok(poses)
}
