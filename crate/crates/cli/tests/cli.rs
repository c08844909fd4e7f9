use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use anomaly_cli::run::{RunRecord, StateDump};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_anomaly"))
}

fn config(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("configs").join(name)
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn record(dir: &Path) -> RunRecord {
    serde_json::from_slice(&std::fs::read(dir.join("run.json")).unwrap()).unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

fn summary_rows(path: &Path) -> Vec<csv::StringRecord> {
    let mut r = csv::Reader::from_path(path).unwrap();
    r.records().map(|r| r.unwrap()).collect()
}

fn column(path: &Path, name: &str) -> usize {
    let mut r = csv::Reader::from_path(path).unwrap();
    r.headers()
        .unwrap()
        .iter()
        .position(|h| h == name)
        .unwrap_or_else(|| panic!("no column {name}"))
}

#[test]
fn sl2c_fixed_point_is_stationary() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("run");
    let o = run(&[
        "run",
        config("sl2c_fixed_point.toml").to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let rec = record(&out);
    assert_eq!(rec.regime, "stationary");
    assert_eq!(rec.summary["rhs_norm"], 0.0);
    for f in ["timeseries.csv", "final_state.npy", "run.json", "config.toml"] {
        assert!(out.join(f).exists(), "{f}");
    }
}

#[test]
fn sub_threshold_surface_collapses_with_report() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("run");
    let o = run(&[
        "run",
        config("surface_collapse.toml").to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 2);
    let rec = record(&out);
    assert_eq!(rec.regime, "collapsed");
    assert_eq!(rec.exit_code, 2);
    assert!(rec.report.as_deref().unwrap().contains("closed-form collapse time"));
    // kappa = -1, alpha' = 1, e^f0 = 1/2: T = ln 2.
    let t = rec.summary["collapse_time"];
    assert!((t - 2f64.ln()).abs() < 0.01 * 2f64.ln(), "{t}");
}

#[test]
fn config_errors_exit_1() {
    let o = run(&["run", config("malformed_missing_alpha.toml").to_str().unwrap()]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("alpha_prime"));
    let tmp = tempfile::tempdir().unwrap();
    let p = write(tmp.path(), "typo.toml", "flow = \"lie\"\n[integrator]\nt_end = 1.0\n[lie]\ngroup = \"sl2c\"\nkappa = 1.0\nalpha_prime = 1.0\nstart = \"stationary\"\nalpha_primee = 2.0\n");
    let o = run(&["run", p.to_str().unwrap()]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("alpha_primee"));
    assert_eq!(code(&run(&["run", "/nonexistent.toml"])), 1);
    assert_eq!(code(&run(&["check", "no-such-suite"])), 1);
    assert_eq!(code(&run(&["frobnicate"])), 1);
    assert_eq!(code(&run(&["--help"])), 0);
    assert_eq!(code(&run(&["--version"])), 0);
}

#[test]
fn reruns_are_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = config("sl2c_saddle.toml");
    let mut files = Vec::new();
    for k in 0..2 {
        let out = tmp.path().join(format!("r{k}"));
        run(&["run", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
        files.push((
            std::fs::read(out.join("timeseries.csv")).unwrap(),
            std::fs::read(out.join("final_state.npy")).unwrap(),
        ));
    }
    assert!(!files[0].0.is_empty());
    assert_eq!(files[0], files[1]);
}

#[test]
fn seed_flag_overrides_config() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = config("sl2c_saddle.toml");
    let csv = |seed: &str, name: &str| {
        let out = tmp.path().join(name);
        run(&[
            "run",
            cfg.to_str().unwrap(),
            "--seed",
            seed,
            "--out",
            out.to_str().unwrap(),
        ]);
        assert_eq!(record(&out).seed, seed.parse::<u64>().unwrap());
        std::fs::read(out.join("timeseries.csv")).unwrap()
    };
    assert_ne!(csv("1", "a"), csv("2", "b"));
}

const SMALL: [(&str, &str); 4] = [
    ("surface", "flow = \"surface\"\nseed = 1\n[integrator]\nt_end = 0.4\n[surface]\ngrid = 16\nkappa = { bump = 1.0, amplitude = 0.5 }\nalpha_prime = 1.0\nf0 = { amplitude = 0.3 }\n"),
    ("fuyau", "flow = \"fuyau\"\nseed = 3\n[integrator]\nt_end = 1.0\n[fuyau]\nN = 8\nalpha_prime = 0.5\nM = 20.0\nrho = 0.5\nmu = 1.0\nmonitor_every = 1\n"),
    ("ma", "flow = \"ma\"\nseed = 4\n[integrator]\nt_end = 1.0\n[ma]\nn = 2\ngrid = 8\npsi = { amplitude = 0.2, kmax = 1 }\n"),
    ("source", "flow = \"source\"\nseed = 2\n[integrator]\nt_end = 0.2\n[ma]\nn = 3\ngrid = [8, 8, 8, 8, 1, 1]\npsi = { amplitude = 0.3, kmax = 2 }\n"),
];

#[test]
fn resume_after_step_budget_reproduces_full_run() {
    let tmp = tempfile::tempdir().unwrap();
    for (name, text) in SMALL {
        let full_cfg = write(tmp.path(), &format!("{name}.toml"), text);
        let cut = text.replacen("[integrator]\n", "[integrator]\nmax_steps = 7\n", 1);
        let cut_cfg = write(tmp.path(), &format!("{name}_cut.toml"), &cut);
        let full = tmp.path().join(format!("{name}_full"));
        let part = tmp.path().join(format!("{name}_part"));
        assert_eq!(
            code(&run(&[
                "run",
                full_cfg.to_str().unwrap(),
                "--out",
                full.to_str().unwrap()
            ])),
            0
        );
        assert_eq!(
            code(&run(&[
                "run",
                cut_cfg.to_str().unwrap(),
                "--out",
                part.to_str().unwrap()
            ])),
            0
        );
        assert!(
            record(&part).t_final < record(&full).t_final,
            "{name}: budget did not cut the run"
        );
        let o = run(&[
            "run",
            full_cfg.to_str().unwrap(),
            "--out",
            part.to_str().unwrap(),
            "--resume",
        ]);
        assert_eq!(code(&o), 0, "{name}: {}", String::from_utf8_lossy(&o.stderr));
        for f in ["timeseries.csv", "final_state.npy"] {
            assert_eq!(
                std::fs::read(full.join(f)).unwrap(),
                std::fs::read(part.join(f)).unwrap(),
                "{name}: {f}"
            );
        }
        assert_eq!(record(&full).records, record(&part).records);
    }
}

#[test]
fn resume_rejects_changed_physics() {
    let tmp = tempfile::tempdir().unwrap();
    let (_, text) = SMALL[0];
    let a = write(tmp.path(), "a.toml", text);
    let b = write(
        tmp.path(),
        "b.toml",
        &text.replace("alpha_prime = 1.0", "alpha_prime = 2.0"),
    );
    let out = tmp.path().join("run");
    assert_eq!(
        code(&run(&["run", a.to_str().unwrap(), "--out", out.to_str().unwrap()])),
        0
    );
    let o = run(&["run", b.to_str().unwrap(), "--out", out.to_str().unwrap(), "--resume"]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("resume"));
}

#[test]
fn state_dump_has_grid_shape() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "s.toml", SMALL[0].1);
    let out = tmp.path().join("run");
    run(&["run", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    let dump = StateDump::from_npy(&std::fs::read(out.join("final_state.npy")).unwrap()).unwrap();
    assert_eq!(dump.shape, vec![16, 16]);
    assert!(dump.data.iter().all(|v| *v > 0.0));
}

#[test]
fn lie_kappa_sweep_gates_non_admissible_points() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("sweep");
    let o = run(&[
        "sweep",
        config("lie_kappa_sweep.toml").to_str().unwrap(),
        "--grid",
        "lie.kappa=0,0.5,1",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0);
    let path = out.join("sweep.csv");
    let (tau, regime) = (column(&path, "tau"), column(&path, "regime"));
    let rows = summary_rows(&path);
    let got: Vec<(f64, &str)> = rows.iter().map(|r| (r[tau].parse().unwrap(), &r[regime])).collect();
    assert_eq!(got, vec![(0.0, "gated"), (0.0, "gated"), (2.0, "stationary")]);
}

#[test]
fn surface_threshold_sweep_matches_closed_form() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("sweep");
    let f0s = [-0.7, -0.5, -0.4, -0.3, -0.2];
    let grid = format!("surface.f0={}", f0s.map(|f| f.to_string()).join(","));
    let o = run(&[
        "sweep",
        config("surface_threshold_sweep.toml").to_str().unwrap(),
        "--grid",
        &grid,
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 2, "worst row is a collapse");
    let path = out.join("sweep.csv");
    let (regime, t) = (column(&path, "regime"), column(&path, "collapse_time"));
    for (row, f0) in summary_rows(&path).iter().zip(f0s) {
        // kappa = -1, alpha' = 1: collapse iff e^{2 f0} < 1/2.
        let expect = anomaly_core::surfflow::collapse_time(1.0, 1.0, f64::exp(f0));
        match expect {
            Some(te) => {
                assert_eq!(&row[regime], "collapsed", "f0 {f0}");
                let tm: f64 = row[t].parse().unwrap();
                assert!((tm - te).abs() < 0.01 * te, "f0 {f0}: {tm} vs {te}");
            }
            None => assert_ne!(&row[regime], "collapsed", "f0 {f0}"),
        }
    }
}

#[test]
fn fuyau_m_sweep_reaches_convergence_at_large_m() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("sweep");
    run(&[
        "sweep",
        config("fuyau_m_sweep.toml").to_str().unwrap(),
        "--grid",
        "fuyau.M=1,10,100,1000",
        "--out",
        out.to_str().unwrap(),
    ]);
    let path = out.join("sweep.csv");
    let regime = column(&path, "regime");
    let regimes: Vec<String> = summary_rows(&path).iter().map(|r| r[regime].to_string()).collect();
    assert_ne!(regimes[0], "converged");
    assert_eq!(regimes[3], "converged");
    let first = regimes.iter().position(|r| r == "converged").unwrap();
    assert!(regimes[first..].iter().all(|r| r == "converged"), "{regimes:?}");
}

#[test]
fn sweep_records_bad_points_per_row() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("sweep");
    let o = run(&[
        "sweep",
        config("lie_kappa_sweep.toml").to_str().unwrap(),
        "--grid",
        "lie.alpha_prime=1,oops",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 1);
    let path = out.join("sweep.csv");
    let rows = summary_rows(&path);
    let (regime, err) = (column(&path, "regime"), column(&path, "error"));
    assert_eq!(&rows[0][regime], "stationary");
    assert_eq!(&rows[1][regime], "config-error");
    assert!(!rows[1][err].is_empty());
    assert_eq!(
        code(&run(&[
            "sweep",
            config("lie_kappa_sweep.toml").to_str().unwrap(),
            "--grid",
            "nokey"
        ])),
        1
    );
}

#[test]
fn linearize_reports_saddle() {
    let o = run(&["linearize", config("sl2c_fixed_point.toml").to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    let text = String::from_utf8_lossy(&o.stdout);
    let re: Vec<f64> = text
        .lines()
        .filter(|l| l.starts_with("lambda_"))
        .map(|l| l.split_whitespace().nth(1).unwrap().parse().unwrap())
        .collect();
    assert_eq!(re.len(), 9);
    assert!(re.iter().any(|v| *v > 1e-8) && re.iter().any(|v| *v < -1e-8));
    assert_eq!(
        code(&run(&["linearize", config("surface_collapse.toml").to_str().unwrap()])),
        1
    );
    assert_eq!(
        code(&run(&["linearize", config("heisenberg.toml").to_str().unwrap()])),
        1
    );
}
