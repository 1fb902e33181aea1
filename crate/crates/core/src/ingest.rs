//! CARMEN log ingestion.
//!
//! Only `FLASER` (and, for completeness, `ODOM`) records are interpreted;
//! everything else is skipped. A `FLASER` line reads
//!
//! ```text
//! FLASER n r1 ... rn laser_x laser_y laser_theta robot_x robot_y robot_theta timestamp host logger_timestamp
//! ```

use std::io::BufRead;

use crate::error::{Error, Result};
use crate::field::{Scan, ScanBeam};
use crate::model::Pose2;
use crate::sim::ScanConfig;

#[derive(Clone, Debug, PartialEq)]
pub struct FlaserRecord {
    pub ranges: Vec<f64>,
    /// `[x, y, theta]` of the laser.
    pub laser_pose: [f64; 3],
    /// `[x, y, theta]` of the robot.
    pub robot_pose: [f64; 3],
    pub timestamp: f64,
    pub host: String,
    pub logger_timestamp: f64,
    pub raw: String,
}

impl FlaserRecord {
    pub fn reading_count(&self) -> usize {
        self.ranges.len()
    }

    /// Re-serializes the record with shortest round-trip reals.
    pub fn to_line(&self) -> String {
        let mut s = format!("FLASER {}", self.ranges.len());
        for r in &self.ranges {
            s.push_str(&format!(" {r}"));
        }
        for v in self.laser_pose.iter().chain(&self.robot_pose) {
            s.push_str(&format!(" {v}"));
        }
        s.push_str(&format!(" {} {} {}", self.timestamp, self.host, self.logger_timestamp));
        s
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct OdomRecord {
    pub pose: [f64; 3],
    pub raw: String,
}

#[derive(Clone, Debug, PartialEq)]
pub enum CarmenRecord {
    Flaser(FlaserRecord),
    Odom(OdomRecord),
}

fn parse_real(tok: &str, what: &str, line: usize) -> Result<f64> {
    match tok.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(Error::Parse {
            line,
            msg: format!("{what} is not a finite number: `{tok}`"),
        }),
    }
}

/// Parses one log line. Unknown record kinds, comments and blank lines
/// yield `Ok(None)`.
pub fn parse_carmen_line(text: &str, line: usize) -> Result<Option<CarmenRecord>> {
    let toks: Vec<&str> = text.split_whitespace().collect();
    match toks.first() {
        Some(&"FLASER") => {}
        Some(&"ODOM") => {
            if toks.len() < 4 {
                return Err(Error::Parse {
                    line,
                    msg: "ODOM needs x y theta".into(),
                });
            }
            let mut pose = [0.0; 3];
            for (k, v) in pose.iter_mut().enumerate() {
                *v = parse_real(toks[1 + k], "odometry pose", line)?;
            }
            return Ok(Some(CarmenRecord::Odom(OdomRecord {
                pose,
                raw: text.to_owned(),
            })));
        }
        _ => return Ok(None),
    }
    let n: usize = toks
        .get(1)
        .and_then(|t| t.parse().ok())
        .ok_or_else(|| Error::Parse {
            line,
            msg: "FLASER reading count missing or invalid".into(),
        })?;
    let expected = n + 11;
    if toks.len() != expected {
        return Err(Error::Parse {
            line,
            msg: format!("FLASER with {n} readings needs {expected} fields, found {}", toks.len()),
        });
    }
    let ranges = toks[2..2 + n]
        .iter()
        .map(|t| parse_real(t, "range", line))
        .collect::<Result<Vec<_>>>()?;
    let mut poses = [0.0; 6];
    for (k, v) in poses.iter_mut().enumerate() {
        *v = parse_real(toks[2 + n + k], "pose", line)?;
    }
    let timestamp = parse_real(toks[n + 8], "timestamp", line)?;
    let logger_timestamp = parse_real(toks[n + 10], "logger timestamp", line)?;
    Ok(Some(CarmenRecord::Flaser(FlaserRecord {
        ranges,
        laser_pose: [poses[0], poses[1], poses[2]],
        robot_pose: [poses[3], poses[4], poses[5]],
        timestamp,
        host: toks[n + 9].to_owned(),
        logger_timestamp,
        raw: text.to_owned(),
    })))
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum PoseSource {
    /// The FLASER laser pose fields.
    #[default]
    Laser,
    /// The FLASER robot pose fields.
    Robot,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum ErrorPolicy {
    #[default]
    FailFast,
    SkipAndCount,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LogConfig {
    /// Angular span of each FLASER record, centered on the laser heading.
    pub field_of_view: f64,
    pub max_range: f64,
    /// Readings within this distance of `max_range` (or beyond) are no-returns.
    pub max_range_tolerance: f64,
    pub pose_source: PoseSource,
    pub error_policy: ErrorPolicy,
}

impl LogConfig {
    pub fn new(field_of_view: f64, max_range: f64) -> Self {
        LogConfig {
            field_of_view,
            max_range,
            max_range_tolerance: 0.01,
            pose_source: PoseSource::Laser,
            error_policy: ErrorPolicy::FailFast,
        }
    }

    /// Intel Research Lab: 180° front-facing laser, 10 m no-return threshold.
    pub fn intel() -> Self {
        LogConfig::new(std::f64::consts::PI, 10.0)
    }

    /// Freiburg campus: 180° front-facing laser, 80 m no-return threshold.
    pub fn freiburg() -> Self {
        LogConfig::new(std::f64::consts::PI, 80.0)
    }

    fn scan_config(&self, beams: usize) -> ScanConfig {
        if self.field_of_view >= 2.0 * std::f64::consts::PI - 1e-12 {
            ScanConfig {
                beam_count: beams,
                field_of_view: self.field_of_view,
                max_range: self.max_range,
                start_offset: -std::f64::consts::PI,
            }
        } else {
            ScanConfig::centered(beams, self.field_of_view, self.max_range)
        }
    }

    /// Converts a FLASER record into a scan.
    pub fn to_scan(&self, rec: &FlaserRecord) -> Result<Scan<f64>> {
        let p = match self.pose_source {
            PoseSource::Laser => rec.laser_pose,
            PoseSource::Robot => rec.robot_pose,
        };
        let pose = Pose2::from_xyh(p[0], p[1], p[2])?;
        let cfg = self.scan_config(rec.ranges.len());
        let threshold = self.max_range - self.max_range_tolerance;
        let beams = rec
            .ranges
            .iter()
            .enumerate()
            .map(|(k, &r)| ScanBeam {
                bearing: cfg.bearing(k),
                range: r.min(self.max_range),
                is_max_range: r >= threshold,
            })
            .collect();
        Scan::new(pose, beams, self.max_range)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct LogStats {
    pub lines: usize,
    pub scans: usize,
    pub beams: usize,
    pub max_range_beams: usize,
    pub min_beams_per_scan: usize,
    pub max_beams_per_scan: usize,
    pub odometry_records: usize,
    pub skipped_records: usize,
    pub robotlaser_skipped: usize,
    pub parse_errors: usize,
}

/// Streams scans from a CARMEN log one line at a time.
pub struct LogReader<R> {
    input: R,
    config: LogConfig,
    buf: String,
    stats: LogStats,
    failed: bool,
}

impl<R: BufRead> LogReader<R> {
    pub fn new(input: R, config: LogConfig) -> Self {
        LogReader {
            input,
            config,
            buf: String::new(),
            stats: LogStats::default(),
            failed: false,
        }
    }

    pub fn stats(&self) -> &LogStats {
        &self.stats
    }

    /// Capacity of the reusable line buffer.
    pub fn buffer_capacity(&self) -> usize {
        self.buf.capacity()
    }

    fn record(&mut self, scan: &Scan<f64>) {
        let n = scan.beams.len();
        let s = &mut self.stats;
        if s.scans == 0 {
            s.min_beams_per_scan = n;
        }
        s.scans += 1;
        s.beams += n;
        s.max_range_beams += scan.beams.iter().filter(|b| b.is_max_range).count();
        s.min_beams_per_scan = s.min_beams_per_scan.min(n);
        s.max_beams_per_scan = s.max_beams_per_scan.max(n);
    }
}

impl<R: BufRead> Iterator for LogReader<R> {
    type Item = Result<Scan<f64>>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.failed {
            return None;
        }
        loop {
            self.buf.clear();
            match self.input.read_line(&mut self.buf) {
                Ok(0) => return None,
                Ok(_) => {}
                Err(e) => {
                    self.failed = true;
                    return Some(Err(e.into()));
                }
            }
            self.stats.lines += 1;
            let line_no = self.stats.lines;
            let parsed = parse_carmen_line(&self.buf, line_no).and_then(|rec| match rec {
                Some(CarmenRecord::Flaser(f)) => self.config.to_scan(&f).map(Some),
                Some(CarmenRecord::Odom(_)) => {
                    self.stats.odometry_records += 1;
                    Ok(None)
                }
                None => {
                    let kind = self.buf.split_whitespace().next();
                    if kind == Some("ROBOTLASER1") || kind == Some("ROBOTLASER") {
                        self.stats.robotlaser_skipped += 1;
                    } else if kind.is_some_and(|k| !k.starts_with('#')) {
                        self.stats.skipped_records += 1;
                    }
                    Ok(None)
                }
            });
            match parsed {
                Ok(Some(scan)) => {
                    self.record(&scan);
                    return Some(Ok(scan));
                }
                Ok(None) => {}
                Err(e) => {
                    self.stats.parse_errors += 1;
                    match self.config.error_policy {
                        ErrorPolicy::SkipAndCount => log::warn!("{e}"),
                        ErrorPolicy::FailFast => {
                            self.failed = true;
                            let e = match e {
                                Error::Parse { .. } => e,
                                other => Error::Parse {
                                    line: line_no,
                                    msg: other.to_string(),
                                },
                            };
                            return Some(Err(e));
                        }
                    }
                }
            }
        }
    }
}

/// Reads every scan of a log into memory.
pub fn scans_from_log<R: BufRead>(input: R, config: LogConfig) -> Result<(Vec<Scan<f64>>, LogStats)> {
    let mut reader = LogReader::new(input, config);
    let mut scans = Vec::new();
    for scan in reader.by_ref() {
        scans.push(scan?);
    }
    if reader.stats.robotlaser_skipped > 0 {
        log::warn!("skipped {} ROBOTLASER records", reader.stats.robotlaser_skipped);
    }
    Ok((scans, reader.stats))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_flaser() {
        let rec = parse_carmen_line("FLASER 2 1.5 2.5 0 0 0 0 0 0 0.0 host 0.0", 1)
            .unwrap()
            .unwrap();
        let CarmenRecord::Flaser(f) = rec else { panic!("not FLASER") };
        assert_eq!(f.ranges, vec![1.5, 2.5]);
        assert_eq!(f.laser_pose, [0.0; 3]);
        assert_eq!(f.robot_pose, [0.0; 3]);
        assert_eq!(f.host, "host");
        assert_eq!(f.to_line(), "FLASER 2 1.5 2.5 0 0 0 0 0 0 0 host 0");
    }

    #[test]
    fn skips_unknown_kinds() {
        assert_eq!(parse_carmen_line("PARAM robot_name x", 1).unwrap(), None);
        assert_eq!(parse_carmen_line("", 1).unwrap(), None);
        assert_eq!(parse_carmen_line("# comment", 1).unwrap(), None);
    }

    #[test]
    fn malformed_flaser_is_an_error() {
        let err = parse_carmen_line("FLASER 3 1.0 2.0", 42).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 42, .. }));
        assert!(parse_carmen_line("FLASER 2 1.5 abc 0 0 0 0 0 0 0.0 host 0.0", 1).is_err());
        assert!(parse_carmen_line("FLASER 2 1.5 nan 0 0 0 0 0 0 0.0 host 0.0", 1).is_err());
        assert!(parse_carmen_line("FLASER x", 1).is_err());
    }

    #[test]
    fn odometry() {
        let rec = parse_carmen_line("ODOM 1 2 0.5 0 0 0 12.0 host 12.1", 1).unwrap();
        assert!(matches!(rec, Some(CarmenRecord::Odom(OdomRecord { pose: [1.0, 2.0, 0.5], .. }))));
    }

    #[test]
    fn bearings_span_fov() {
        let line = "FLASER 3 1 2 10 1 2 0.5 0 0 0 0 h 0";
        let (scans, stats) = scans_from_log(line.as_bytes(), LogConfig::intel()).unwrap();
        assert_eq!(stats.scans, 1);
        let s = &scans[0];
        let half = std::f64::consts::FRAC_PI_2;
        assert_eq!(s.beams[0].bearing, -half);
        assert!((s.beams[2].bearing - half).abs() < 1e-15);
        assert_eq!(s.pose.position().x, 1.0);
        assert!(s.beams[2].is_max_range);
        assert!(!s.beams[1].is_max_range);
    }

    #[test]
    fn robot_pose_source() {
        let line = "FLASER 1 1 5 6 0 7 8 0.25 0 h 0";
        let mut cfg = LogConfig::intel();
        cfg.pose_source = PoseSource::Robot;
        let (scans, _) = scans_from_log(line.as_bytes(), cfg).unwrap();
        assert_eq!(scans[0].pose.position().x, 7.0);
        assert_eq!(scans[0].pose.heading(), 0.25);
    }

    #[test]
    fn error_policies() {
        let log = "FLASER 1 1 0 0 0 0 0 0 0 h 0\nFLASER 3 1\nROBOTLASER1 junk\nFLASER 1 2 0 0 0 0 0 0 0 h 0\n";
        let err = scans_from_log(log.as_bytes(), LogConfig::intel()).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }));

        let mut cfg = LogConfig::intel();
        cfg.error_policy = ErrorPolicy::SkipAndCount;
        let (scans, stats) = scans_from_log(log.as_bytes(), cfg).unwrap();
        assert_eq!(scans.len(), 2);
        assert_eq!(stats.parse_errors, 1);
        assert_eq!(stats.robotlaser_skipped, 1);
        assert_eq!(stats.lines, 4);
    }

    #[test]
    fn empty_stream() {
        let (scans, stats) = scans_from_log("".as_bytes(), LogConfig::intel()).unwrap();
        assert!(scans.is_empty());
        assert_eq!(stats, LogStats::default());
    }
}
