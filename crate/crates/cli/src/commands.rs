use std::fmt::Write as _;
use std::fs::{self, File};
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use isingmap::ingest::{ErrorPolicy, FlaserRecord, LogConfig, LogReader, LogStats, PoseSource};
use isingmap::sim::{
    build_benchmark_env, evaluation_points, label_points, read_trajectory, roc as roc_curve, simulate_trajectory,
    write_trajectory, Environment, Occupancy, RocResult, ScanConfig, TARGET_TPR,
};
use isingmap::training::{optimize, theta_from_text, theta_to_text, TrainingOptions, TrainingSet};
use isingmap::{Field, FieldConfig, Grid, MaxRangePolicy, Point, Scan, Theta};

use crate::config::ConfigFile;
use crate::pgm::write_pgm;
use crate::{Failure, InfoArgs, InputArgs, MapArgs, Method, RocArgs, Sensor, SimulateArgs, ThetaArgs, TrainArgs};

type CmdResult = Result<(), Failure>;

const ENV_FILE: &str = "env.txt";
const TRAJECTORY_FILE: &str = "trajectory.txt";
const SCANS_FILE: &str = "scans.log";
const SENSOR_FILE: &str = "sensor.txt";

fn flag(set: bool) -> Option<bool> {
    set.then_some(true)
}

fn open_text(path: &Path) -> anyhow::Result<Box<dyn BufRead>> {
    if path == Path::new("-") {
        return Ok(Box::new(BufReader::new(io::stdin())));
    }
    let file = File::open(path).with_context(|| format!("cannot open {}", path.display()))?;
    Ok(Box::new(BufReader::new(file)))
}

fn create(path: &Path) -> anyhow::Result<BufWriter<File>> {
    let file = File::create(path).with_context(|| format!("cannot create {}", path.display()))?;
    Ok(BufWriter::new(file))
}

fn write_file(path: &Path, bytes: &[u8]) -> anyhow::Result<()> {
    fs::write(path, bytes).with_context(|| format!("cannot write {}", path.display()))
}

/// Sensor description stored next to simulated scans.
fn read_sensor_file(dir: &Path) -> anyhow::Result<LogConfig> {
    let path = dir.join(SENSOR_FILE);
    let text = fs::read_to_string(&path).with_context(|| format!("cannot read {}", path.display()))?;
    let cfg = ConfigFile::parse(&text, Some(path.clone())).map_err(|e| match e {
        Failure::Usage(m) => anyhow::anyhow!(m),
        Failure::Data(e) => e,
    })?;
    let get = |key: &str| -> anyhow::Result<f64> {
        cfg.pick::<f64>(None, key)
            .ok()
            .flatten()
            .with_context(|| format!("{}: missing or bad `{key}`", path.display()))
    };
    Ok(LogConfig::new(get("fov_deg")?.to_radians(), get("max_range")?))
}

/// Resolves the scan source and sensor geometry.
fn resolve_input(input: &InputArgs, cfg: &ConfigFile) -> Result<(PathBuf, LogConfig), Failure> {
    let env: Option<PathBuf> = cfg.pick(input.env.clone(), "env")?;
    let log: Option<PathBuf> = cfg.pick(input.log.clone(), "log")?;
    let (source, mut config) = match (env, log) {
        (Some(dir), None) => (dir.join(SCANS_FILE), read_sensor_file(&dir)?),
        (None, Some(log)) => {
            let base = match cfg.pick_or(input.sensor, "sensor", Sensor::Intel)? {
                Sensor::Intel => LogConfig::intel(),
                Sensor::Freiburg => LogConfig::freiburg(),
                Sensor::Sim => LogConfig::new(2.0 * std::f64::consts::PI, 3.0),
            };
            (log, base)
        }
        (Some(_), Some(_)) => return Err(Failure::usage("--log and --env are mutually exclusive")),
        (None, None) => return Err(Failure::usage("one of --log or --env is required")),
    };
    if let Some(fov) = cfg.pick::<f64>(input.fov_deg, "fov-deg")? {
        config.field_of_view = fov.to_radians();
    }
    if let Some(r) = cfg.pick::<f64>(input.max_range, "max-range")? {
        config.max_range = r;
    }
    if cfg.pick_or(flag(input.robot_pose), "robot-pose", false)? {
        config.pose_source = PoseSource::Robot;
    }
    if cfg.pick_or(flag(input.skip_bad), "skip-bad", false)? {
        config.error_policy = ErrorPolicy::SkipAndCount;
    }
    if !(config.field_of_view > 0.0 && config.field_of_view <= 2.0 * std::f64::consts::PI + 1e-12) {
        return Err(Failure::usage("--fov-deg must lie in (0, 360]"));
    }
    if !(config.max_range > 0.0) {
        return Err(Failure::usage("--max-range must be positive"));
    }
    Ok((source, config))
}

fn read_scans(source: &Path, config: LogConfig) -> anyhow::Result<(Vec<Scan<f64>>, LogStats)> {
    let mut reader = LogReader::new(open_text(source)?, config);
    let mut scans = Vec::new();
    for scan in reader.by_ref() {
        scans.push(scan.with_context(|| format!("reading {}", source.display()))?);
    }
    let stats = *reader.stats();
    if stats.parse_errors > 0 {
        log::warn!("{}: skipped {} malformed records", source.display(), stats.parse_errors);
    }
    if stats.robotlaser_skipped > 0 {
        log::warn!("{}: ignored {} ROBOTLASER records", source.display(), stats.robotlaser_skipped);
    }
    Ok((scans, stats))
}

fn resolve_theta(args: &ThetaArgs, cfg: &ConfigFile) -> Result<Theta, Failure> {
    let file: Option<PathBuf> = cfg.pick(args.theta.clone(), "theta")?;
    let inline: Option<String> = cfg.pick(args.theta_values.clone(), "theta-values")?;
    match (file, inline) {
        (Some(_), Some(_)) => Err(Failure::usage("--theta and --theta-values are mutually exclusive")),
        (Some(path), None) => {
            let text = fs::read_to_string(&path).with_context(|| format!("cannot read {}", path.display()))?;
            Ok(theta_from_text(&text).with_context(|| format!("in {}", path.display()))?)
        }
        (None, Some(list)) => {
            let vals: Vec<f64> = list
                .split(',')
                .map(|v| v.trim().parse::<f64>())
                .collect::<Result<_, _>>()
                .map_err(|e| Failure::usage(format!("--theta-values: {e}")))?;
            let arr: [f64; 5] = vals
                .try_into()
                .map_err(|_| Failure::usage("--theta-values needs five comma-separated numbers"))?;
            Theta::from_array(arr).map_err(|e| Failure::usage(format!("--theta-values: {e}")))
        }
        (None, None) => {
            log::info!("no hyperparameters given, using the default starting point");
            Ok(Theta::fixture())
        }
    }
}

fn positive(v: f64, name: &str) -> Result<f64, Failure> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(Failure::usage(format!("--{name} must be positive")))
    }
}

pub fn simulate(args: &SimulateArgs, cfg: &ConfigFile) -> CmdResult {
    let seed = cfg.pick_or(args.seed, "seed", 0u64)?;
    let out: PathBuf = cfg.require(args.out.clone(), "out")?;
    let beams = cfg.pick_or(args.beams, "beams", 180usize)?;
    let fov_deg = cfg.pick_or(args.fov_deg, "fov-deg", 360.0)?;
    let max_range = positive(cfg.pick_or(args.max_range, "max-range", 3.0)?, "max-range")?;
    if !(fov_deg > 0.0 && fov_deg <= 360.0) {
        return Err(Failure::usage("--fov-deg must lie in (0, 360]"));
    }
    let fov = fov_deg.to_radians();
    let scan_cfg = if fov_deg >= 360.0 {
        ScanConfig {
            beam_count: beams,
            field_of_view: fov,
            max_range,
            start_offset: -std::f64::consts::PI,
        }
    } else {
        ScanConfig::centered(beams, fov, max_range)
    };
    scan_cfg.validate().map_err(|e| Failure::usage(e.to_string()))?;

    let (env, poses) = build_benchmark_env(seed)?;
    let scans = simulate_trajectory(&env, &poses, &scan_cfg)?;

    fs::create_dir_all(&out).with_context(|| format!("cannot create {}", out.display()))?;
    let mut buf = Vec::new();
    env.write(&mut buf)?;
    write_file(&out.join(ENV_FILE), &buf)?;
    buf.clear();
    write_trajectory(&poses, &mut buf)?;
    write_file(&out.join(TRAJECTORY_FILE), &buf)?;

    let mut log = String::new();
    for (k, scan) in scans.iter().enumerate() {
        let p = scan.pose;
        let pose = [p.position().x, p.position().y, p.heading()];
        let t = k as f64;
        let rec = FlaserRecord {
            ranges: scan.beams.iter().map(|b| b.range).collect(),
            laser_pose: pose,
            robot_pose: pose,
            timestamp: t,
            host: "sim".into(),
            logger_timestamp: t,
            raw: String::new(),
        };
        log.push_str(&rec.to_line());
        log.push('\n');
    }
    write_file(&out.join(SCANS_FILE), log.as_bytes())?;
    let sensor = format!("fov_deg={fov_deg}\nmax_range={max_range}\nbeams={beams}\n");
    write_file(&out.join(SENSOR_FILE), sensor.as_bytes())?;
    println!("wrote {} scans of {beams} beams to {}", scans.len(), out.display());
    Ok(())
}

pub fn train(args: &TrainArgs, cfg: &ConfigFile) -> CmdResult {
    let (source, log_cfg) = resolve_input(&args.input, cfg)?;
    let theta0 = resolve_theta(&args.theta, cfg)?;
    let out: PathBuf = cfg.require(args.out.clone(), "out")?;
    let trace: Option<PathBuf> = cfg.pick(args.trace.clone(), "trace")?;
    let defaults = TrainingOptions::default();
    let opts = TrainingOptions {
        max_evaluations: cfg.pick_or(args.max_evals, "max-evals", defaults.max_evaluations)?,
        relative_tolerance: positive(cfg.pick_or(args.tol, "tol", defaults.relative_tolerance)?, "tol")?,
        beam_subsample: cfg.pick_or(args.subsample, "subsample", defaults.beam_subsample)?,
        rng_seed: cfg.pick_or(args.seed, "seed", defaults.rng_seed)?,
        fraction_range: (
            cfg.pick_or(args.fraction_low, "fraction-low", defaults.fraction_range.0)?,
            cfg.pick_or(args.fraction_high, "fraction-high", defaults.fraction_range.1)?,
        ),
        ..defaults
    };
    if !(opts.beam_subsample > 0.0 && opts.beam_subsample <= 1.0) {
        return Err(Failure::usage("--subsample must lie in (0, 1]"));
    }
    let (lo, hi) = opts.fraction_range;
    if !(lo > 0.0 && lo <= hi && hi < 1.0) {
        return Err(Failure::usage("fraction range must satisfy 0 < low <= high < 1"));
    }

    let (scans, _) = read_scans(&source, log_cfg)?;
    let data = TrainingSet::from_scans(&scans, opts.beam_subsample, opts.rng_seed)?;
    log::info!("training on {} hit beams from {} scans", data.len(), scans.len());
    let outcome = optimize(&data, &theta0, &opts)?;

    write_file(&out, theta_to_text(&outcome.theta).as_bytes())?;
    if let Some(path) = trace {
        let mut text = String::from("evaluation,objective,best_so_far\n");
        for (i, t) in outcome.trace.iter().enumerate() {
            let _ = writeln!(text, "{},{},{}", i + 1, t.objective, t.best_so_far);
        }
        write_file(&path, text.as_bytes())?;
    }
    println!(
        "beams {}  objective {} -> {}  evaluations {}  converged {}",
        data.len(),
        outcome.initial_objective,
        outcome.objective,
        outcome.evaluations,
        outcome.converged
    );
    print!("{}", theta_to_text(&outcome.theta));
    Ok(())
}

fn parse_bbox(text: &str) -> Result<(Point, Point), Failure> {
    let v: Vec<f64> = text
        .split(',')
        .map(|s| s.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|e| Failure::usage(format!("--bbox: {e}")))?;
    match v[..] {
        [x0, y0, x1, y1] if x1 > x0 && y1 > y0 => Ok((Point::new(x0, y0), Point::new(x1, y1))),
        _ => Err(Failure::usage("--bbox needs min_x,min_y,max_x,max_y with max > min")),
    }
}

/// Bounding box of every pose and beam end point.
fn data_bbox(scans: &[Scan<f64>]) -> anyhow::Result<(Point, Point)> {
    let mut lo = Point::new(f64::INFINITY, f64::INFINITY);
    let mut hi = Point::new(f64::NEG_INFINITY, f64::NEG_INFINITY);
    let mut grow = |p: Point| {
        lo = Point::new(lo.x.min(p.x), lo.y.min(p.y));
        hi = Point::new(hi.x.max(p.x), hi.y.max(p.y));
    };
    for scan in scans {
        grow(scan.pose.position());
        for m in scan.measurements().flatten() {
            grow(m.hit_point());
        }
    }
    if !(hi.x > lo.x && hi.y > lo.y) {
        bail!("the data do not span an area to map");
    }
    Ok((lo, hi))
}

pub fn map(args: &MapArgs, cfg: &ConfigFile) -> CmdResult {
    let (source, log_cfg) = resolve_input(&args.input, cfg)?;
    let method = cfg.pick_or(args.method, "method", Method::Field)?;
    let res = positive(cfg.pick_or(args.res, "res", 0.1)?, "res")?;
    let out: PathBuf = cfg.require(args.out.clone(), "out")?;
    let bbox = cfg.pick::<String>(args.bbox.clone(), "bbox")?.map(|b| parse_bbox(&b)).transpose()?;
    let policy_name = cfg.pick_or(args.max_range_policy.clone(), "max-range-policy", "discard".to_string())?;
    let policy = MaxRangePolicy::parse(&policy_name)
        .ok_or_else(|| Failure::usage(format!("unknown max-range policy `{policy_name}`")))?;
    let theta = match method {
        Method::Field => Some(resolve_theta(&args.theta, cfg)?),
        Method::Grid => None,
        Method::Both => return Err(Failure::usage("map renders one method: field or grid")),
    };
    let snapshot: PathBuf = cfg.pick_or(args.snapshot.clone(), "snapshot", out.with_extension("field"))?;

    let (scans, stats) = read_scans(&source, log_cfg)?;
    let (min, max) = match bbox {
        Some(b) => b,
        None => data_bbox(&scans)?,
    };
    let raster = match theta {
        Some(theta) => {
            let mut config = FieldConfig::new(theta);
            config.max_range_policy = policy;
            let mut field = Field::new(config)?;
            let mut rejected = 0;
            for scan in &scans {
                rejected += field.add_scan(scan).rejected;
            }
            if rejected > 0 {
                log::warn!("rejected {rejected} degenerate beams");
            }
            let mut w = create(&snapshot)?;
            field.write_snapshot(&mut w)?;
            w.flush().with_context(|| format!("cannot write {}", snapshot.display()))?;
            field.query_grid(min, max, res)?
        }
        None => {
            let mut grid = Grid::covering(min, max, res)?;
            scans.iter().for_each(|s| grid.update_scan(s));
            grid.to_raster()
        }
    };
    write_pgm(&raster, &out)?;
    println!(
        "{} scans, {} beams -> {} ({} x {} at {res} m)",
        stats.scans,
        stats.beams,
        out.display(),
        raster.width,
        raster.height
    );
    Ok(())
}

struct Scored {
    name: &'static str,
    result: RocResult,
    reference: (f64, f64),
}

fn report(env_dir: &Path, points: usize, occupied: usize, spacing: f64, max_range: f64, rows: &[Scored]) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "environment: {}", env_dir.display());
    let _ = writeln!(
        s,
        "evaluation points: {points} ({occupied} occupied), {spacing} m spacing within {max_range} m of a pose"
    );
    let _ = writeln!(s);
    let _ = writeln!(
        s,
        "{:<14} {:>8} {:>16}   {:>13} {:>13}",
        "method", "auc", "fpr_at_tpr_095", "reference_auc", "reference_fpr"
    );
    let _ = writeln!(
        s,
        "{:<14} {:>8.4} {:>16.4}   {:>13.3} {:>13.3}",
        "random guess", 0.5, TARGET_TPR, 0.5, 0.95
    );
    for row in rows {
        let _ = writeln!(
            s,
            "{:<14} {:>8.4} {:>16.4}   {:>13.3} {:>13.3}",
            row.name, row.result.auc, row.result.fpr_at_tpr_095, row.reference.0, row.reference.1
        );
    }
    s
}

pub fn roc(args: &RocArgs, cfg: &ConfigFile) -> CmdResult {
    let dir: PathBuf = cfg.require(args.env.clone(), "env")?;
    let method = cfg.pick_or(args.method, "method", Method::Both)?;
    let spacing = positive(cfg.pick_or(args.spacing, "spacing", 0.05)?, "spacing")?;
    let grid_res = positive(cfg.pick_or(args.grid_res, "grid-res", 0.1)?, "grid-res")?;
    let out: Option<PathBuf> = cfg.pick(args.out.clone(), "out")?;
    let csv: Option<PathBuf> = cfg.pick(args.csv.clone(), "csv")?;
    let theta = match method {
        Method::Grid => None,
        _ => Some(resolve_theta(&args.theta, cfg)?),
    };

    let env = Environment::read(open_text(&dir.join(ENV_FILE))?)
        .with_context(|| format!("in {}", dir.join(ENV_FILE).display()))?;
    let poses = read_trajectory(open_text(&dir.join(TRAJECTORY_FILE))?)
        .with_context(|| format!("in {}", dir.join(TRAJECTORY_FILE).display()))?;
    let log_cfg = read_sensor_file(&dir)?;
    let (scans, _) = read_scans(&dir.join(SCANS_FILE), log_cfg)?;

    let points = evaluation_points(&env, &poses, spacing, log_cfg.max_range);
    let labels = label_points(&env, &points);
    let occupied = labels.iter().filter(|&&l| l == Occupancy::Occupied).count();

    let mut rows = Vec::new();
    if matches!(method, Method::Grid | Method::Both) {
        let (min, max) = env.bounds();
        let mut grid = Grid::covering(min, max, grid_res)?;
        scans.iter().for_each(|s| grid.update_scan(s));
        let scores: Vec<f64> = points.iter().map(|&p| grid.prob_at(p)).collect();
        rows.push(Scored {
            name: "grid map",
            result: roc_curve(&scores, &labels)?,
            reference: (0.955, 0.065),
        });
    }
    if let Some(theta) = theta {
        let mut field = Field::with_theta(theta)?;
        scans.iter().for_each(|s| {
            field.add_scan(s);
        });
        let scores = points.iter().map(|&p| field.lambda_at(p)).collect::<Result<Vec<f64>, _>>()?;
        rows.push(Scored {
            name: "proposed",
            result: roc_curve(&scores, &labels)?,
            reference: (0.992, 0.038),
        });
    }

    let text = report(&dir, points.len(), occupied, spacing, log_cfg.max_range, &rows);
    print!("{text}");
    if let Some(path) = out {
        write_file(&path, text.as_bytes())?;
    }
    if let Some(prefix) = csv {
        for row in &rows {
            let tag = if row.name == "grid map" { "grid" } else { "field" };
            let mut name = prefix.as_os_str().to_owned();
            name.push(format!("-{tag}.csv"));
            write_file(Path::new(&name), row.result.to_csv().as_bytes())?;
        }
    }
    Ok(())
}

pub fn info(args: &InfoArgs, cfg: &ConfigFile) -> CmdResult {
    let (source, log_cfg) = resolve_input(&args.input, cfg)?;
    let (scans, stats) = read_scans(&source, log_cfg)?;
    println!("source: {}", source.display());
    println!("lines: {}", stats.lines);
    println!("scans: {}", stats.scans);
    println!("beams: {}", stats.beams);
    if stats.scans > 0 {
        println!("beams per scan: {}..{}", stats.min_beams_per_scan, stats.max_beams_per_scan);
    }
    println!("no-return beams: {}", stats.max_range_beams);
    println!("odometry records: {}", stats.odometry_records);
    println!("skipped records: {}", stats.skipped_records + stats.robotlaser_skipped);
    println!("malformed records: {}", stats.parse_errors);
    if let Ok((lo, hi)) = data_bbox(&scans) {
        println!("bounds: {} {} {} {}", lo.x, lo.y, hi.x, hi.y);
    }
    Ok(())
}
