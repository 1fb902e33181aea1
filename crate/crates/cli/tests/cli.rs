use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn isingmap(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_isingmap"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&isingmap(&["--help"], dir.path())), 0);
    assert_eq!(code(&isingmap(&["--version"], dir.path())), 0);
    assert_eq!(code(&isingmap(&["map", "--no-such-flag"], dir.path())), 1);
    assert_eq!(code(&isingmap(&["simulate"], dir.path())), 1, "missing --out");
    assert_eq!(code(&isingmap(&["map", "--method", "grid", "--out", "x.pgm"], dir.path())), 1);
    let missing = isingmap(&["info", "--log", "absent.log"], dir.path());
    assert_eq!(code(&missing), 2);
    assert!(String::from_utf8_lossy(&missing.stderr).contains("absent.log"));
}

#[test]
fn malformed_log_is_a_data_error_with_line_number() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("bad.log"), "# header\nFLASER 3 1.0 2.0\n").unwrap();
    let out = isingmap(&["info", "--log", "bad.log"], dir.path());
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 2"));
    let skipped = isingmap(&["info", "--log", "bad.log", "--skip-bad"], dir.path());
    assert_eq!(code(&skipped), 0);
    assert!(stdout(&skipped).contains("malformed records: 1"));
}

#[test]
fn simulate_is_byte_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    for name in ["a", "b"] {
        assert_eq!(code(&isingmap(&["simulate", "--seed", "3", "--out", name], dir.path())), 0);
    }
    for file in ["env.txt", "trajectory.txt", "scans.log", "sensor.txt"] {
        let a = fs::read(dir.path().join("a").join(file)).unwrap();
        let b = fs::read(dir.path().join("b").join(file)).unwrap();
        assert!(!a.is_empty());
        assert_eq!(a, b, "{file}");
    }
    assert_eq!(code(&isingmap(&["simulate", "--seed", "4", "--out", "c"], dir.path())), 0);
    assert_ne!(
        fs::read(dir.path().join("a/env.txt")).unwrap(),
        fs::read(dir.path().join("c/env.txt")).unwrap()
    );
}

fn flaser(ranges: &[f64], pose: [f64; 3]) -> String {
    let r: Vec<String> = ranges.iter().map(|v| v.to_string()).collect();
    let p = format!("{} {} {}", pose[0], pose[1], pose[2]);
    format!("FLASER {} {} {p} {p} 0.0 host 0.0\n", ranges.len(), r.join(" "))
}

#[test]
fn tiny_map_has_fifteen_byte_pgm_and_unknown_gray() {
    let dir = tempfile::tempdir().unwrap();
    // No beam comes near the box, so every pixel stays unknown.
    fs::write(dir.path().join("one.log"), flaser(&[1.0, 1.0, 1.0], [0.0, 0.0, 0.0])).unwrap();
    for method in ["field", "grid"] {
        let out = isingmap(
            &["map", "--log", "one.log", "--method", method, "--bbox", "50,50,50.2,50.2", "--res", "0.1", "--out", "t.pgm"],
            dir.path(),
        );
        assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
        let bytes = fs::read(dir.path().join("t.pgm")).unwrap();
        assert_eq!(bytes.len(), 15);
        assert_eq!(&bytes[..11], b"P5\n2 2\n255\n");
        assert!(bytes[11..].iter().all(|&g| g == 128), "{method}: {:?}", &bytes[11..]);
        let meta = fs::read_to_string(dir.path().join("t.pgm.meta")).unwrap();
        assert!(meta.contains("width=2") && meta.contains("height=2"));
    }
    assert!(dir.path().join("t.field").exists());
}

fn pgm_dims(bytes: &[u8]) -> (usize, usize) {
    let text = String::from_utf8_lossy(&bytes[..20.min(bytes.len())]).into_owned();
    let mut it = text.split_whitespace().skip(1);
    let w = it.next().unwrap().parse().unwrap();
    let h = it.next().unwrap().parse().unwrap();
    (w, h)
}

#[test]
fn map_dimensions_follow_the_bbox() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&isingmap(&["simulate", "--out", "sim"], dir.path())), 0);
    let out = isingmap(
        &["map", "--env", "sim", "--method", "grid", "--bbox", "0,0,8,5", "--res", "0.25", "--out", "g.pgm"],
        dir.path(),
    );
    assert_eq!(code(&out), 0);
    let bytes = fs::read(dir.path().join("g.pgm")).unwrap();
    assert_eq!(pgm_dims(&bytes), (32, 20));
    let header = "P5\n32 20\n255\n".len();
    assert_eq!(bytes.len(), header + 32 * 20);
    // Some cells were seen as free and some as occupied.
    assert!(bytes[header..].iter().any(|&g| g < 100));
    assert!(bytes[header..].iter().any(|&g| g > 160));
}

#[test]
fn roc_report_and_curves() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&isingmap(&["simulate", "--seed", "1", "--out", "sim"], dir.path())), 0);
    let out = isingmap(
        &["roc", "--env", "sim", "--theta-values", "1,1,0.1,0.15,0.05", "--spacing", "0.1", "--csv", "c", "--out", "r.txt"],
        dir.path(),
    );
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let text = stdout(&out);
    assert_eq!(text, fs::read_to_string(dir.path().join("r.txt")).unwrap());
    let rows: Vec<&str> = text.lines().skip_while(|l| !l.starts_with("method")).collect();
    assert_eq!(rows.len(), 4);
    assert!(rows[1].starts_with("random guess"));
    assert!(rows[2].starts_with("grid map"));
    assert!(rows[3].starts_with("proposed"));
    for row in &rows[2..] {
        let nums: Vec<f64> = row.split_whitespace().filter_map(|t| t.parse().ok()).collect();
        assert_eq!(nums.len(), 4, "{row}");
        assert!(nums[0] > 0.5 && nums[0] <= 1.0, "{row}");
        assert!((0.0..=1.0).contains(&nums[1]), "{row}");
    }
    for tag in ["field", "grid"] {
        let csv = fs::read_to_string(dir.path().join(format!("c-{tag}.csv"))).unwrap();
        assert!(csv.lines().count() > 2);
    }
}

#[test]
fn config_file_fills_in_and_flags_win() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&isingmap(&["simulate", "--out", "sim"], dir.path())), 0);
    fs::write(dir.path().join("run.cfg"), "# defaults\nenv = sim\nmethod = grid\nres = 0.5\nout = cfg.pgm\n").unwrap();
    assert_eq!(code(&isingmap(&["--config", "run.cfg", "map", "--bbox", "0,0,8,5"], dir.path())), 0);
    assert_eq!(pgm_dims(&fs::read(dir.path().join("cfg.pgm")).unwrap()), (16, 10));
    assert_eq!(
        code(&isingmap(&["map", "--config", "run.cfg", "--bbox", "0,0,8,5", "--res", "1", "--out", "flag.pgm"], dir.path())),
        0
    );
    assert_eq!(pgm_dims(&fs::read(dir.path().join("flag.pgm")).unwrap()), (8, 5));
    fs::write(dir.path().join("bad.cfg"), "res = quick\n").unwrap();
    assert_eq!(code(&isingmap(&["--config", "bad.cfg", "map", "--env", "sim", "--out", "x.pgm"], dir.path())), 1);
}

#[test]
fn train_writes_theta_and_trace() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&isingmap(&["simulate", "--out", "sim"], dir.path())), 0);
    let out = isingmap(
        &["train", "--env", "sim", "--out", "theta.txt", "--trace", "trace.csv", "--max-evals", "15", "--subsample", "0.2"],
        dir.path(),
    );
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let theta = fs::read_to_string(dir.path().join("theta.txt")).unwrap();
    for key in ["sigma_f=", "sigma_h=", "l_p=", "l_f=", "l_b="] {
        assert!(theta.contains(key), "{theta}");
    }
    let trace = fs::read_to_string(dir.path().join("trace.csv")).unwrap();
    let mut lines = trace.lines();
    assert_eq!(lines.next(), Some("evaluation,objective,best_so_far"));
    let best: Vec<f64> = lines.map(|l| l.rsplit(',').next().unwrap().parse().unwrap()).collect();
    assert!(!best.is_empty());
    assert!(best.windows(2).all(|w| w[1] >= w[0]));
    // The trained file feeds straight back into map.
    let map = isingmap(&["map", "--env", "sim", "--theta", "theta.txt", "--out", "m.pgm"], dir.path());
    assert_eq!(code(&map), 0);
}

#[test]
fn log_from_stdin() {
    use std::io::Write;
    use std::process::Stdio;
    let dir = tempfile::tempdir().unwrap();
    let mut child = Command::new(env!("CARGO_BIN_EXE_isingmap"))
        .args(["info", "--log", "-", "--sensor", "sim"])
        .current_dir(dir.path())
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .spawn()
        .unwrap();
    let log = flaser(&[1.0, 2.0, 3.0, 1.5], [0.0, 0.0, 0.0]) + &flaser(&[1.0, 2.0, 3.0, 1.5], [1.0, 0.0, 0.5]);
    child.stdin.take().unwrap().write_all(log.as_bytes()).unwrap();
    let out = child.wait_with_output().unwrap();
    assert_eq!(code(&out), 0);
    let text = stdout(&out);
    assert!(text.contains("scans: 2"), "{text}");
    assert!(text.contains("beams: 8"), "{text}");
    assert!(text.contains("no-return beams: 2"), "{text}");
}

#[test]
fn help_lists_each_subcommand_flags() {
    let dir = tempfile::tempdir().unwrap();
    let cases: [(&str, &[&str]); 5] = [
        ("simulate", &["--seed", "--out", "--beams", "--fov-deg", "--max-range"]),
        ("train", &["--log", "--env", "--theta", "--out", "--trace", "--max-evals", "--subsample"]),
        ("map", &["--log", "--env", "--theta", "--method", "--res", "--bbox", "--out", "--max-range-policy"]),
        ("roc", &["--env", "--theta", "--method", "--spacing", "--grid-res", "--csv"]),
        ("info", &["--log", "--sensor", "--skip-bad"]),
    ];
    for (cmd, flags) in cases {
        let out = isingmap(&[cmd, "--help"], dir.path());
        assert_eq!(code(&out), 0);
        let text = stdout(&out);
        for f in flags {
            assert!(text.contains(f), "{cmd} --help lacks {f}");
        }
        assert!(text.contains("--config"));
    }
}
