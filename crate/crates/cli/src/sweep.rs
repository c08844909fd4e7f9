//! Parameter sweeps: the cartesian product of one or two grid axes over a
//! template scenario, run in parallel.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use crate::config::{set_key, ScenarioConfig};
use crate::error::{CliError, Result};
use crate::run::{self, Outcome, EXIT_CONFIG};

pub const SUMMARY_FILE: &str = "sweep.csv";

/// One sweep axis, `key=v1,v2,...`.
#[derive(Debug, Clone, PartialEq)]
pub struct Axis {
    pub key: String,
    pub values: Vec<toml::Value>,
}

fn parse_value(s: &str) -> toml::Value {
    let s = s.trim();
    if let Ok(i) = s.parse::<i64>() {
        return toml::Value::Integer(i);
    }
    if let Ok(f) = s.parse::<f64>() {
        return toml::Value::Float(f);
    }
    if let Ok(b) = s.parse::<bool>() {
        return toml::Value::Boolean(b);
    }
    toml::Value::String(s.to_string())
}

fn render(v: &toml::Value) -> String {
    match v {
        toml::Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

impl Axis {
    pub fn parse(spec: &str) -> Result<Self> {
        let (key, values) = spec
            .split_once('=')
            .ok_or_else(|| CliError::Config(format!("grid '{spec}': expected key=v1,v2,...")))?;
        let key = key.trim();
        if key.is_empty() || key.split('.').any(str::is_empty) {
            return Err(CliError::Config(format!("grid '{spec}': bad key")));
        }
        let values: Vec<toml::Value> = values
            .split(',')
            .filter(|v| !v.trim().is_empty())
            .map(parse_value)
            .collect();
        if values.is_empty() {
            return Err(CliError::Config(format!("grid '{spec}': no values")));
        }
        Ok(Self {
            key: key.to_string(),
            values,
        })
    }
}

/// One point of the product: the axis values and the resulting config, or
/// the reason it is invalid.
#[derive(Debug, Clone)]
pub struct Point {
    pub values: Vec<toml::Value>,
    pub config: std::result::Result<ScenarioConfig, String>,
}

pub fn expand(template: &toml::Value, axes: &[Axis]) -> Result<Vec<Point>> {
    if axes.is_empty() || axes.len() > 2 {
        return Err(CliError::Config(format!(
            "a sweep takes one or two grid axes, got {}",
            axes.len()
        )));
    }
    let mut combos: Vec<Vec<toml::Value>> = vec![vec![]];
    for ax in axes {
        combos = combos
            .into_iter()
            .flat_map(|c| {
                ax.values.iter().map(move |v| {
                    let mut c = c.clone();
                    c.push(v.clone());
                    c
                })
            })
            .collect();
    }
    combos
        .into_iter()
        .map(|values| {
            let mut doc = template.clone();
            for (ax, v) in axes.iter().zip(&values) {
                set_key(&mut doc, &ax.key, v.clone())?;
            }
            let config = ScenarioConfig::from_value(doc).map_err(|e| e.to_string());
            Ok(Point { values, config })
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct Row {
    pub values: Vec<toml::Value>,
    pub dir: PathBuf,
    pub result: std::result::Result<Outcome, String>,
}

impl Row {
    pub fn exit_code(&self) -> i32 {
        match &self.result {
            Ok(o) => o.exit_code,
            Err(_) => EXIT_CONFIG,
        }
    }
}

fn point_dir(out: &Path, axes: &[Axis], values: &[toml::Value]) -> PathBuf {
    let name: Vec<String> = axes
        .iter()
        .zip(values)
        .map(|(a, v)| {
            let v: String = render(v)
                .chars()
                .map(|c| {
                    if c.is_ascii_alphanumeric() || "-.+".contains(c) {
                        c
                    } else {
                        '_'
                    }
                })
                .collect();
            format!("{}={v}", a.key)
        })
        .collect();
    out.join(name.join("__"))
}

/// Runs every point with up to `threads` workers and writes each run into
/// its own subdirectory of `out`. Rows come back in product order.
pub fn run_sweep(template: &toml::Value, axes: &[Axis], out: &Path, threads: usize) -> Result<Vec<Row>> {
    let points = expand(template, axes)?;
    let next = AtomicUsize::new(0);
    let slots: Vec<Mutex<Option<Row>>> = points.iter().map(|_| Mutex::new(None)).collect();
    let workers = threads.clamp(1, points.len().max(1));
    std::thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(p) = points.get(i) else { break };
                let dir = point_dir(out, axes, &p.values);
                let result = match &p.config {
                    Ok(cfg) => run::run_to_dir(cfg, &dir, false)
                        .map(|(o, _)| o)
                        .map_err(|e| e.to_string()),
                    Err(e) => Err(e.clone()),
                };
                *slots[i].lock().unwrap() = Some(Row {
                    values: p.values.clone(),
                    dir,
                    result,
                });
            });
        }
    });
    let rows: Vec<Row> = slots
        .into_iter()
        .map(|m| m.into_inner().unwrap().expect("every point ran"))
        .collect();
    write_summary(&out.join(SUMMARY_FILE), axes, &rows)?;
    Ok(rows)
}

/// Summary table: axis values, regime, exit code, final time, then the
/// union of every run's summary keys (blank where a run lacks one).
pub fn summary_csv(axes: &[Axis], rows: &[Row]) -> Result<Vec<u8>> {
    let keys: BTreeSet<&String> = rows
        .iter()
        .filter_map(|r| r.result.as_ref().ok())
        .flat_map(|o| o.summary.keys())
        .collect();
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header: Vec<String> = axes.iter().map(|a| a.key.clone()).collect();
    header.extend(["regime", "exit_code", "t_final", "dir", "error"].map(String::from));
    header.extend(keys.iter().map(|k| (*k).clone()));
    w.write_record(&header)?;
    for r in rows {
        let mut rec: Vec<String> = r.values.iter().map(render).collect();
        match &r.result {
            Ok(o) => {
                rec.push(o.regime.clone());
                rec.push(o.exit_code.to_string());
                rec.push(o.t_final.to_string());
                rec.push(r.dir.display().to_string());
                rec.push(String::new());
                rec.extend(
                    keys.iter()
                        .map(|k| o.summary.get(*k).map(f64::to_string).unwrap_or_default()),
                );
            }
            Err(e) => {
                rec.extend(["config-error".to_string(), EXIT_CONFIG.to_string(), String::new()]);
                rec.push(r.dir.display().to_string());
                rec.push(e.clone());
                rec.extend(keys.iter().map(|_| String::new()));
            }
        }
        w.write_record(&rec)?;
    }
    w.into_inner().map_err(|e| CliError::Config(e.to_string()))
}

fn write_summary(path: &Path, axes: &[Axis], rows: &[Row]) -> Result<()> {
    if let Some(d) = path.parent() {
        std::fs::create_dir_all(d).map_err(|e| CliError::io(d, e))?;
    }
    std::fs::write(path, summary_csv(axes, rows)?).map_err(|e| CliError::io(path, e))
}

/// Worst exit code over the rows: config errors (1) outrank blow-ups (2).
pub fn worst_exit(rows: &[Row]) -> i32 {
    let codes: Vec<i32> = rows.iter().map(Row::exit_code).collect();
    if codes.contains(&EXIT_CONFIG) {
        EXIT_CONFIG
    } else {
        codes.into_iter().max().unwrap_or(0)
    }
}
