use anomaly_cli::config::{set_key, Flow, KappaSpec, ScenarioConfig};
use anomaly_cli::sweep::{expand, Axis};
use anomaly_cli::CliError;

const SURFACE: &str = r#"
flow = "surface"
[integrator]
t_end = 1.0
[surface]
grid = 16
kappa = -1.0
alpha_prime = 1.0
f0 = 0.0
"#;

#[test]
fn parses_and_round_trips() {
    let cfg = ScenarioConfig::from_toml(SURFACE).unwrap();
    assert_eq!(cfg.flow, Flow::Surface);
    assert_eq!(cfg.output.cadence, 1);
    assert_eq!(cfg.surface.as_ref().unwrap().kappa, KappaSpec::Constant(-1.0));
    let again = ScenarioConfig::from_toml(&cfg.to_toml()).unwrap();
    assert_eq!(cfg, again);
}

#[test]
fn physics_hash_ignores_horizon_and_output() {
    let a = ScenarioConfig::from_toml(SURFACE).unwrap();
    let b =
        ScenarioConfig::from_toml(&SURFACE.replace("t_end = 1.0", "t_end = 5.0\nmax_steps = 3\n[output]\ncadence = 4"))
            .unwrap();
    let c = ScenarioConfig::from_toml(&SURFACE.replace("grid = 16", "grid = 32")).unwrap();
    assert_eq!(a.physics_hash(), b.physics_hash());
    assert_ne!(a.physics_hash(), c.physics_hash());
}

#[test]
fn rejects_inconsistent_blocks() {
    let bad = [
        SURFACE.replace("flow = \"surface\"", "flow = \"lie\""),
        SURFACE.replace("t_end = 1.0", "t_end = -1.0"),
        SURFACE.replace("[integrator]", "[output]\ncadence = 0\n[integrator]"),
        SURFACE.replace("grid = 16", "grid = 16\nextra = 1"),
        format!("{SURFACE}\n[ma]\nn = 2\ngrid = 8\npsi = 0.0\n"),
    ];
    for text in bad {
        assert!(
            matches!(ScenarioConfig::from_toml(&text), Err(CliError::Config(_))),
            "{text}"
        );
    }
    let ma = "flow = \"ma\"\n[integrator]\nt_end = 1.0\n[ma]\nn = 2\ngrid = [8, 8, 8]\npsi = 0.0\n";
    assert!(ScenarioConfig::from_toml(ma).is_err());
    let src = "flow = \"source\"\n[integrator]\nt_end = 1.0\n[ma]\nn = 2\ngrid = 8\npsi = 0.0\n";
    assert!(ScenarioConfig::from_toml(src).is_err());
}

#[test]
fn axes_expand_to_cartesian_product() {
    let doc: toml::Value = toml::from_str(SURFACE).unwrap();
    let axes = [
        Axis::parse("surface.f0=-0.5,0.5").unwrap(),
        Axis::parse("surface.alpha_prime=1,2,3").unwrap(),
    ];
    let points = expand(&doc, &axes).unwrap();
    assert_eq!(points.len(), 6);
    let cfg = points[5].config.as_ref().unwrap();
    let s = cfg.surface.as_ref().unwrap();
    assert_eq!(s.alpha_prime, 3.0);
    assert_eq!(points[5].values[0], toml::Value::Float(0.5));
    assert!(expand(&doc, &[]).is_err());
    assert!(expand(&doc, &[axes[0].clone(), axes[1].clone(), axes[0].clone()]).is_err());
    assert!(Axis::parse("surface.f0").is_err());
    assert!(Axis::parse("=1,2").is_err());
    assert!(Axis::parse("a..b=1").is_err());
}

#[test]
fn set_key_creates_tables() {
    let mut doc: toml::Value = toml::from_str("a = 1").unwrap();
    set_key(&mut doc, "b.c", toml::Value::Integer(2)).unwrap();
    assert_eq!(doc["b"]["c"].as_integer(), Some(2));
    assert!(set_key(&mut doc, "a.x", toml::Value::Integer(3)).is_err());
}
