//! Continuous occupancy field built from accumulated beam contributions.
//!
//! The statistic at a point is `prior + Σ λ(beam, point)`; insertion order
//! does not matter and every measurement is kept. Queries go through a
//! uniform hash grid so that only beams whose truncated support contains
//! the query are visited.

use std::collections::HashMap;
use std::io::{BufRead, Write};

use crate::error::{Error, Result};
use crate::model::{
    kernel_eval, lambda_to_prob, BehindSensorSign, Hyperparameters, Measurement, Point2, Pose2,
};
use crate::scalar::Scalar;

/// First line of a field snapshot.
pub const SNAPSHOT_MAGIC: &str = "ISINGFIELD1";

/// Rasters larger than this are refused.
pub const MAX_RASTER_CELLS: u64 = 100_000_000;

/// What to do with beams that returned no hit.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum MaxRangePolicy {
    /// Stored, but contribute nothing.
    #[default]
    Discard,
    /// Treated as a hit at max range with `σ_h = 0`: free-space evidence only.
    FreeOnly,
}

impl MaxRangePolicy {
    pub fn as_str(self) -> &'static str {
        match self {
            MaxRangePolicy::Discard => "discard",
            MaxRangePolicy::FreeOnly => "free-only",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "discard" => Some(MaxRangePolicy::Discard),
            "free-only" => Some(MaxRangePolicy::FreeOnly),
            _ => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FieldConfig<T> {
    pub theta: Hyperparameters<T>,
    /// Spatially constant prior statistic.
    pub prior_lambda: T,
    /// Support cut-off, in multiples of the kernel length scales.
    pub truncation_factor: T,
    pub max_range_policy: MaxRangePolicy,
    pub behind_sensor_sign: BehindSensorSign,
    /// Index cell size; `None` selects `2 · truncation_factor · l_p`.
    pub cell_size: Option<T>,
}

impl<T: Scalar> FieldConfig<T> {
    pub fn new(theta: Hyperparameters<T>) -> Self {
        FieldConfig {
            theta,
            prior_lambda: T::zero(),
            truncation_factor: T::lit(4.0),
            max_range_policy: MaxRangePolicy::Discard,
            behind_sensor_sign: BehindSensorSign::Corrected,
            cell_size: None,
        }
    }

    fn validate(&self) -> Result<()> {
        self.theta.validate()?;
        if !self.prior_lambda.is_finite() {
            return Err(Error::invalid("prior lambda must be finite"));
        }
        if !(self.truncation_factor >= T::lit(3.0)) || !self.truncation_factor.is_finite() {
            return Err(Error::invalid(format!(
                "truncation factor must be >= 3, got {}",
                self.truncation_factor
            )));
        }
        if let Some(c) = self.cell_size {
            if !(c > T::zero()) || !c.is_finite() {
                return Err(Error::invalid("index cell size must be positive"));
            }
        }
        Ok(())
    }

    fn resolved_cell_size(&self) -> T {
        self.cell_size
            .unwrap_or_else(|| T::lit(2.0) * self.truncation_factor * self.theta.l_p)
    }
}

/// One beam of a scan, in the sensor frame.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScanBeam<T> {
    pub bearing: T,
    pub range: T,
    pub is_max_range: bool,
}

/// A full sweep taken from one pose.
#[derive(Clone, Debug, PartialEq)]
pub struct Scan<T> {
    pub pose: Pose2<T>,
    pub beams: Vec<ScanBeam<T>>,
    pub max_range: T,
}

impl<T: Scalar> Scan<T> {
    /// Checks bearing order and the range ceiling. Individual degenerate
    /// ranges are left for [`OccupancyField::add_scan`] to reject.
    pub fn new(pose: Pose2<T>, beams: Vec<ScanBeam<T>>, max_range: T) -> Result<Self> {
        if !(max_range > T::zero()) || !max_range.is_finite() {
            return Err(Error::invalid("scan max range must be positive"));
        }
        for pair in beams.windows(2) {
            if !(pair[1].bearing > pair[0].bearing) {
                return Err(Error::invalid("scan bearings must be strictly increasing"));
            }
        }
        if let Some(b) = beams.iter().find(|b| b.range > max_range) {
            return Err(Error::invalid(format!(
                "range {} exceeds scan max range {max_range}",
                b.range
            )));
        }
        Ok(Scan {
            pose,
            beams,
            max_range,
        })
    }

    /// Converts every beam to a measurement; invalid beams come back as errors.
    pub fn measurements(&self) -> impl Iterator<Item = Result<Measurement<T>>> + '_ {
        self.beams
            .iter()
            .map(move |b| Measurement::from_bearing(self.pose, b.bearing, b.range, b.is_max_range))
    }
}

/// Outcome of [`OccupancyField::add_scan`].
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct AddReport {
    /// Measurements appended to the store (including max-range beams).
    pub added: usize,
    /// Beams that failed measurement validation.
    pub rejected: usize,
}

/// Row-major raster, row 0 at the top (max-y).
#[derive(Clone, Debug, PartialEq)]
pub struct RasterMap<T> {
    pub origin: Point2<T>,
    pub resolution: T,
    pub width: usize,
    pub height: usize,
    pub values: Vec<T>,
}

impl<T: Scalar> RasterMap<T> {
    /// Lays out a raster covering `[min, max]` and fills every cell from
    /// `value_at(cell_center)`.
    pub fn from_fn<F>(min: Point2<T>, max: Point2<T>, resolution: T, mut value_at: F) -> Result<Self>
    where
        F: FnMut(Point2<T>) -> Result<T>,
    {
        let (width, height) = raster_dims(min, max, resolution)?;
        let half = T::lit(0.5);
        let mut values = Vec::with_capacity(width * height);
        for row in 0..height {
            let cy = min.y + (T::lit((height - 1 - row) as f64) + half) * resolution;
            for col in 0..width {
                let cx = min.x + (T::lit(col as f64) + half) * resolution;
                values.push(value_at(Point2::new(cx, cy))?);
            }
        }
        Ok(RasterMap {
            origin: min,
            resolution,
            width,
            height,
            values,
        })
    }

    pub fn get(&self, col: usize, row: usize) -> T {
        self.values[row * self.width + col]
    }

    /// Center of the cell at (`col`, `row`).
    pub fn cell_center(&self, col: usize, row: usize) -> Point2<T> {
        let half = T::lit(0.5);
        Point2::new(
            self.origin.x + (T::lit(col as f64) + half) * self.resolution,
            self.origin.y + (T::lit((self.height - 1 - row) as f64) + half) * self.resolution,
        )
    }
}

fn raster_dims<T: Scalar>(min: Point2<T>, max: Point2<T>, resolution: T) -> Result<(usize, usize)> {
    if !min.is_finite() || !max.is_finite() || !(max.x > min.x) || !(max.y > min.y) {
        return Err(Error::invalid("raster bounding box is degenerate"));
    }
    if !(resolution > T::zero()) || !resolution.is_finite() {
        return Err(Error::invalid("raster resolution must be positive"));
    }
    let count = |extent: T| -> f64 {
        let n = (extent / resolution).to_f64_lossy();
        (n - 1e-9).ceil().max(1.0)
    };
    let (w, h) = (count(max.x - min.x), count(max.y - min.y));
    if w * h > MAX_RASTER_CELLS as f64 {
        return Err(Error::Capacity(format!(
            "{w} x {h} raster exceeds {MAX_RASTER_CELLS} cells"
        )));
    }
    Ok((w as usize, h as usize))
}

type CellKey = (i64, i64);

/// Uniform hash grid mapping cells to the beams whose support touches them.
#[derive(Clone, Debug)]
struct BeamIndex<T> {
    cell_size: T,
    cells: HashMap<CellKey, Vec<u32>>,
}

impl<T: Scalar> BeamIndex<T> {
    fn new(cell_size: T) -> Self {
        BeamIndex {
            cell_size,
            cells: HashMap::new(),
        }
    }

    fn cell_of(&self, x: T) -> i64 {
        (x / self.cell_size).floor().to_i64().unwrap_or(i64::MAX)
    }

    /// Registers the segment `a -> b` inflated by `radius` in every cell the
    /// resulting capsule overlaps, walking one cell row at a time.
    fn insert(&mut self, id: u32, a: Point2<T>, b: Point2<T>, radius: T) {
        let c = self.cell_size;
        let d = b - a;
        let row_lo = self.cell_of(a.y.min(b.y) - radius);
        let row_hi = self.cell_of(a.y.max(b.y) + radius);
        for row in row_lo..=row_hi {
            let strip_lo = T::lit(row as f64) * c - radius;
            let strip_hi = T::lit((row + 1) as f64) * c + radius;
            let (t0, t1) = if d.y == T::zero() {
                if a.y < strip_lo || a.y > strip_hi {
                    continue;
                }
                (T::zero(), T::one())
            } else {
                let ta = (strip_lo - a.y) / d.y;
                let tb = (strip_hi - a.y) / d.y;
                (ta.min(tb).max(T::zero()), ta.max(tb).min(T::one()))
            };
            if t0 > t1 {
                continue;
            }
            let xa = a.x + d.x * t0;
            let xb = a.x + d.x * t1;
            let col_lo = self.cell_of(xa.min(xb) - radius);
            let col_hi = self.cell_of(xa.max(xb) + radius);
            for col in col_lo..=col_hi {
                self.cells.entry((col, row)).or_default().push(id);
            }
        }
    }

    fn candidates(&self, q: Point2<T>) -> &[u32] {
        self.cells
            .get(&(self.cell_of(q.x), self.cell_of(q.y)))
            .map(Vec::as_slice)
            .unwrap_or(&[])
    }
}

/// Contributing beams in struct-of-arrays form.
#[derive(Clone, Debug, Default)]
struct BeamStore<T> {
    origin: Vec<Point2<T>>,
    hit: Vec<Point2<T>>,
    inv_hh: Vec<T>,
    length: Vec<T>,
    free_only: Vec<bool>,
}

/// Occupancy field over the plane, learnt from stored measurements.
#[derive(Clone, Debug)]
pub struct OccupancyField<T> {
    config: FieldConfig<T>,
    free_theta: Hyperparameters<T>,
    measurements: Vec<Measurement<T>>,
    beams: BeamStore<T>,
    index: BeamIndex<T>,
}

impl<T: Scalar> OccupancyField<T> {
    pub fn new(config: FieldConfig<T>) -> Result<Self> {
        config.validate()?;
        Ok(OccupancyField {
            free_theta: Hyperparameters {
                sigma_h: T::zero(),
                ..config.theta
            },
            index: BeamIndex::new(config.resolved_cell_size()),
            config,
            measurements: Vec::new(),
            beams: BeamStore::default(),
        })
    }

    /// Field with default settings for `theta`.
    pub fn with_theta(theta: Hyperparameters<T>) -> Result<Self> {
        Self::new(FieldConfig::new(theta))
    }

    pub fn config(&self) -> &FieldConfig<T> {
        &self.config
    }

    pub fn theta(&self) -> &Hyperparameters<T> {
        &self.config.theta
    }

    pub fn measurements(&self) -> &[Measurement<T>] {
        &self.measurements
    }

    /// Number of beams that contribute to the statistic.
    pub fn contributing_len(&self) -> usize {
        self.beams.origin.len()
    }

    pub fn len(&self) -> usize {
        self.measurements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.measurements.is_empty()
    }

    /// Half-width of a beam's truncated support across the beam.
    fn perpendicular_cutoff(&self) -> T {
        self.config.truncation_factor * self.config.theta.l_p
    }

    /// Extension of a beam's truncated support beyond either end.
    fn axial_cutoff(&self) -> T {
        self.config.truncation_factor * self.config.theta.axial_scale()
    }

    /// Appends one measurement.
    pub fn add_measurement(&mut self, m: Measurement<T>) {
        self.measurements.push(m);
        let free_only = if m.is_max_range() {
            match self.config.max_range_policy {
                MaxRangePolicy::Discard => return,
                MaxRangePolicy::FreeOnly => true,
            }
        } else {
            false
        };
        let id = self.beams.origin.len() as u32;
        let origin = m.pose().position();
        let hit = m.hit_vector();
        let hh = hit.norm_squared();
        self.beams.origin.push(origin);
        self.beams.hit.push(hit);
        self.beams.inv_hh.push(T::one() / hh);
        self.beams.length.push(hh.sqrt());
        self.beams.free_only.push(free_only);
        let radius = self.perpendicular_cutoff().hypot(self.axial_cutoff());
        self.index.insert(id, origin, origin + hit, radius);
    }

    /// Converts and appends every beam of `scan`. Beams failing validation
    /// are counted in the report rather than failing the whole scan.
    pub fn add_scan(&mut self, scan: &Scan<T>) -> AddReport {
        let mut report = AddReport::default();
        for m in scan.measurements() {
            match m {
                Ok(m) if m.range() <= scan.max_range => {
                    self.add_measurement(m);
                    report.added += 1;
                }
                _ => report.rejected += 1,
            }
        }
        report
    }

    /// Appends all measurements of `other`. Both fields must share a configuration.
    pub fn merge(&mut self, other: &OccupancyField<T>) -> Result<()> {
        if other.config != self.config {
            return Err(Error::invalid("cannot merge fields with different configurations"));
        }
        for m in &other.measurements {
            self.add_measurement(*m);
        }
        Ok(())
    }

    #[inline]
    fn beam_lambda(&self, id: usize, q: Point2<T>) -> T {
        let theta = if self.beams.free_only[id] {
            &self.free_theta
        } else {
            &self.config.theta
        };
        kernel_eval(
            q - self.beams.origin[id],
            self.beams.hit[id],
            self.beams.inv_hh[id],
            theta,
            self.config.behind_sensor_sign,
        )
    }

    #[inline]
    fn in_support(&self, id: usize, q: Point2<T>) -> bool {
        let rel = q - self.beams.origin[id];
        let hit = self.beams.hit[id];
        let m = hit.dot(rel) * self.beams.inv_hh[id];
        let perp = rel - hit * m;
        let cut_p = self.perpendicular_cutoff();
        if perp.norm_squared() > cut_p * cut_p {
            return false;
        }
        let len = self.beams.length[id];
        let along = m * len;
        let cut_a = self.axial_cutoff();
        along >= -cut_a && along - len <= cut_a
    }

    /// Truncated sum plus the number of beams that contributed to it.
    pub fn lambda_at_counted(&self, query: Point2<T>) -> Result<(T, usize)> {
        if !query.is_finite() {
            return Err(Error::invalid("query point must be finite"));
        }
        let mut sum = self.config.prior_lambda;
        let mut used = 0;
        for &id in self.index.candidates(query) {
            let id = id as usize;
            if self.in_support(id, query) {
                sum = sum + self.beam_lambda(id, query);
                used += 1;
            }
        }
        Ok((sum, used))
    }

    /// Accumulated statistic at `query`, summing only beams whose truncated
    /// support contains it.
    pub fn lambda_at(&self, query: Point2<T>) -> Result<T> {
        self.lambda_at_counted(query).map(|(lam, _)| lam)
    }

    /// Full sum over every contributing beam, without index or truncation.
    pub fn lambda_at_exact(&self, query: Point2<T>) -> Result<T> {
        if !query.is_finite() {
            return Err(Error::invalid("query point must be finite"));
        }
        let mut sum = self.config.prior_lambda;
        for id in 0..self.beams.origin.len() {
            sum = sum + self.beam_lambda(id, query);
        }
        Ok(sum)
    }

    /// Upper bound on `|lambda_at - lambda_at_exact|` given how many beams
    /// were cut from the sum.
    pub fn truncation_bound(&self, excluded: usize) -> T {
        let tf = self.config.truncation_factor;
        let theta = &self.config.theta;
        T::lit(excluded as f64) * (theta.sigma_f + theta.sigma_h) * (-T::lit(0.5) * tf * tf).exp()
    }

    pub fn prob_at(&self, query: Point2<T>) -> Result<T> {
        lambda_to_prob(self.lambda_at(query)?)
    }

    /// Renders occupancy probabilities at cell centers over `[min, max]`.
    pub fn query_grid(&self, min: Point2<T>, max: Point2<T>, resolution: T) -> Result<RasterMap<T>> {
        RasterMap::from_fn(min, max, resolution, |p| self.prob_at(p))
    }

    /// Writes the line-oriented snapshot:
    ///
    /// ```text
    /// ISINGFIELD1
    /// theta <sigma_f> <sigma_h> <l_p> <l_f> <l_b>
    /// prior <prior_lambda>
    /// truncation <truncation_factor>
    /// max_range_policy discard|free-only
    /// behind_sensor_sign corrected|verbatim
    /// cell_size <meters>|auto
    /// measurements <n>
    /// <x> <y> <heading> <bearing> <range> <flags>     (n lines)
    /// ```
    ///
    /// Reals use the shortest representation that parses back to the same
    /// value. Bit 0 of `flags` marks a max-range beam.
    pub fn write_snapshot<W: Write>(&self, mut out: W) -> Result<()> {
        let c = &self.config;
        let t = &c.theta;
        writeln!(out, "{SNAPSHOT_MAGIC}")?;
        writeln!(out, "theta {} {} {} {} {}", t.sigma_f, t.sigma_h, t.l_p, t.l_f, t.l_b)?;
        writeln!(out, "prior {}", c.prior_lambda)?;
        writeln!(out, "truncation {}", c.truncation_factor)?;
        writeln!(out, "max_range_policy {}", c.max_range_policy.as_str())?;
        let sign = match c.behind_sensor_sign {
            BehindSensorSign::Corrected => "corrected",
            BehindSensorSign::Verbatim => "verbatim",
        };
        writeln!(out, "behind_sensor_sign {sign}")?;
        match c.cell_size {
            Some(s) => writeln!(out, "cell_size {s}")?,
            None => writeln!(out, "cell_size auto")?,
        }
        writeln!(out, "measurements {}", self.measurements.len())?;
        for m in &self.measurements {
            let p = m.pose();
            writeln!(
                out,
                "{} {} {} {} {} {}",
                p.position().x,
                p.position().y,
                p.heading(),
                m.bearing(),
                m.range(),
                u8::from(m.is_max_range())
            )?;
        }
        Ok(())
    }

    pub fn read_snapshot<R: BufRead>(input: R) -> Result<Self> {
        let mut lines = input.lines().enumerate();
        let mut next = |want: &str| -> Result<(usize, Vec<String>)> {
            let (i, line) = lines.next().ok_or_else(|| Error::Parse {
                line: 0,
                msg: format!("snapshot truncated before `{want}`"),
            })?;
            let line = line?;
            let toks: Vec<String> = line.split_whitespace().map(str::to_owned).collect();
            if want.is_empty() || toks.first().map(String::as_str) == Some(want) {
                Ok((i + 1, toks))
            } else {
                Err(Error::Parse {
                    line: i + 1,
                    msg: format!("expected `{want}`"),
                })
            }
        };
        let (_, magic) = next("")?;
        if magic != [SNAPSHOT_MAGIC] {
            return Err(Error::Parse {
                line: 1,
                msg: format!("missing {SNAPSHOT_MAGIC} header"),
            });
        }
        let (ln, theta) = next("theta")?;
        let theta = parse_reals::<T>(&theta[1..], 5, ln)?;
        let theta = Hyperparameters::from_array([theta[0], theta[1], theta[2], theta[3], theta[4]])?;
        let mut config = FieldConfig::new(theta);
        let (ln, prior) = next("prior")?;
        config.prior_lambda = parse_reals::<T>(&prior[1..], 1, ln)?[0];
        let (ln, trunc) = next("truncation")?;
        config.truncation_factor = parse_reals::<T>(&trunc[1..], 1, ln)?[0];
        let (ln, policy) = next("max_range_policy")?;
        config.max_range_policy = policy
            .get(1)
            .and_then(|s| MaxRangePolicy::parse(s))
            .ok_or_else(|| Error::Parse {
                line: ln,
                msg: "unknown max-range policy".into(),
            })?;
        let (ln, sign) = next("behind_sensor_sign")?;
        config.behind_sensor_sign = match sign.get(1).map(String::as_str) {
            Some("corrected") => BehindSensorSign::Corrected,
            Some("verbatim") => BehindSensorSign::Verbatim,
            _ => {
                return Err(Error::Parse {
                    line: ln,
                    msg: "unknown kernel sign".into(),
                })
            }
        };
        let (ln, cell) = next("cell_size")?;
        config.cell_size = match cell.get(1).map(String::as_str) {
            Some("auto") => None,
            _ => Some(parse_reals::<T>(&cell[1..], 1, ln)?[0]),
        };
        let (ln, count) = next("measurements")?;
        let count: usize = count
            .get(1)
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::Parse {
                line: ln,
                msg: "bad measurement count".into(),
            })?;
        let mut field = OccupancyField::new(config)?;
        for _ in 0..count {
            let (ln, toks) = next("")?;
            if toks.len() != 6 {
                return Err(Error::Parse {
                    line: ln,
                    msg: format!("expected 6 fields, found {}", toks.len()),
                });
            }
            let v = parse_reals::<T>(&toks[..5], 5, ln)?;
            let flags: u8 = toks[5].parse().map_err(|_| Error::Parse {
                line: ln,
                msg: "bad flags".into(),
            })?;
            let pose = Pose2::from_xyh(v[0], v[1], v[2])?;
            let m = Measurement::from_bearing(pose, v[3], v[4], flags & 1 == 1)
                .map_err(|e| Error::Parse { line: ln, msg: e.to_string() })?;
            field.add_measurement(m);
        }
        Ok(field)
    }
}

fn parse_reals<T: Scalar>(toks: &[String], n: usize, line: usize) -> Result<Vec<T>> {
    if toks.len() < n {
        return Err(Error::Parse {
            line,
            msg: format!("expected {n} numbers"),
        });
    }
    toks[..n]
        .iter()
        .map(|s| {
            s.parse::<T>().map_err(|_| Error::Parse {
                line,
                msg: format!("not a number: {s}"),
            })
        })
        .collect()
}
