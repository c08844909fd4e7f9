//! Scenario files: one TOML document per run.
//!
//! ```toml
//! flow = "surface"
//! seed = 7
//!
//! [integrator]
//! t_end = 2.0
//! tol = 1e-9
//!
//! [output]
//! directory = "runs/surface"
//! cadence = 10
//!
//! [surface]
//! grid = 64
//! kappa = -1.0
//! alpha_prime = 1.0
//! f0 = -0.7
//! ```
//!
//! Exactly the block named by `flow` must be present (`source` uses `[ma]`).
//! Unknown keys are rejected everywhere.

use std::path::{Path, PathBuf};

use anomaly_core::lieflow::Group;
use anomaly_core::numerics::StepControl;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Flow {
    Lie,
    Surface,
    Fuyau,
    Ma,
    Source,
}

impl Flow {
    pub fn name(self) -> &'static str {
        match self {
            Flow::Lie => "lie",
            Flow::Surface => "surface",
            Flow::Fuyau => "fuyau",
            Flow::Ma => "ma",
            Flow::Source => "source",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub flow: Flow,
    #[serde(default)]
    pub seed: u64,
    pub integrator: IntegratorConfig,
    #[serde(default)]
    pub output: OutputConfig,
    pub lie: Option<LieConfig>,
    pub surface: Option<SurfaceConfig>,
    pub fuyau: Option<FuYauConfig>,
    pub ma: Option<MAConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntegratorConfig {
    pub t_end: f64,
    /// Initial step; the module default when absent.
    pub dt0: Option<f64>,
    /// Relative tolerance; the absolute tolerance is `tol / 100`.
    pub tol: Option<f64>,
    pub max_steps: Option<usize>,
}

impl IntegratorConfig {
    pub fn control(&self, base: StepControl) -> StepControl {
        let mut c = base;
        if let Some(dt0) = self.dt0 {
            c.dt0 = dt0;
        }
        if let Some(tol) = self.tol {
            c.rtol = tol;
            c.atol = tol * 1e-2;
        }
        c
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub directory: PathBuf,
    /// Every `cadence`-th record is written, plus the last one.
    pub cadence: usize,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            directory: PathBuf::from("runs"),
            cadence: 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LieStart {
    /// The stationary point (or a fixed member of the stationary family).
    Stationary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LieConfig {
    pub group: Group,
    pub kappa: f64,
    /// Give exactly one of `alpha_prime` and `alpha_tau`.
    pub alpha_prime: Option<f64>,
    pub alpha_tau: Option<f64>,
    /// Diagonal initial metric; alternative to `start`.
    pub g0: Option<[f64; 3]>,
    pub start: Option<LieStart>,
    /// Size of a seeded Hermitian perturbation of the initial metric.
    #[serde(default)]
    pub perturbation: f64,
    #[serde(default = "default_sample_dt")]
    pub sample_dt: f64,
}

fn default_sample_dt() -> f64 {
    0.05
}

/// Constant `kappa <= 0`, a bump `-k0 (1 + amplitude prod cos x_a)`, or the
/// compatible trigonometric datum `-m^2`-type curvature of frequency `m`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum KappaSpec {
    Constant(f64),
    Bump(BumpSpec),
    Trigonometric(TrigSpec),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BumpSpec {
    pub bump: f64,
    pub amplitude: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrigSpec {
    pub trigonometric: f64,
}

/// A constant value, or `mean + ` a seeded band-limited field.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum FieldSpec {
    Constant(f64),
    Random(RandomField),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RandomField {
    #[serde(default)]
    pub mean: f64,
    pub amplitude: f64,
    #[serde(default = "default_kmax")]
    pub kmax: usize,
}

fn default_kmax() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SurfaceConfig {
    /// Points per axis of the square 2-torus.
    pub grid: usize,
    pub kappa: KappaSpec,
    pub alpha_prime: f64,
    /// Initial `f` (so `e^f = exp(f0)`).
    pub f0: FieldSpec,
    /// Track the conserved vector of the trigonometric datum.
    #[serde(default)]
    pub vector_field: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FuYauConfig {
    #[serde(rename = "N")]
    pub n: usize,
    pub alpha_prime: f64,
    #[serde(rename = "M")]
    pub m: f64,
    /// Amplitude of the (1,1)-form `rho`.
    pub rho: f64,
    /// Amplitude of the zero-mean source density `mu`.
    pub mu: f64,
    /// Constant added to `mu`; nonzero values break integrability.
    #[serde(default)]
    pub mu_offset: f64,
    /// Monitors are evaluated every this many steps (defaults to the output cadence).
    pub monitor_every: Option<usize>,
}

/// Points per axis, or an explicit shape of length `2n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum GridSpec {
    Points(usize),
    Shape(Vec<usize>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum UpsilonKind {
    Zero,
    /// `beta = omega_0`, the designed fixed point.
    Initial,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum UpsilonSpec {
    Kind(UpsilonKind),
    /// `beta = h I` with a seeded band-limited `h`.
    Conformal(RandomField),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MAConfig {
    pub n: usize,
    pub grid: GridSpec,
    /// Potential of the reference metric `chi_hat = I + i ddbar psi`.
    pub psi: FieldSpec,
    pub upsilon_potential: Option<UpsilonSpec>,
}

impl ScenarioConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_value(v: toml::Value) -> Result<Self> {
        let cfg: Self = v
            .try_into()
            .map_err(|e: toml::de::Error| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::from_toml(&text).map_err(|e| match e {
            CliError::Config(m) => CliError::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let present = [
            ("lie", self.lie.is_some()),
            ("surface", self.surface.is_some()),
            ("fuyau", self.fuyau.is_some()),
            ("ma", self.ma.is_some()),
        ];
        let wanted = match self.flow {
            Flow::Source => "ma",
            f => f.name(),
        };
        for (name, there) in present {
            if there != (name == wanted) {
                return Err(CliError::Config(if there {
                    format!("block [{name}] does not belong to flow '{}'", self.flow.name())
                } else {
                    format!("flow '{}' needs a [{name}] block", self.flow.name())
                }));
            }
        }
        let i = &self.integrator;
        if !(i.t_end > 0.0) {
            return Err(CliError::Config("integrator.t_end must be positive".into()));
        }
        if i.dt0.is_some_and(|d| !(d > 0.0)) || i.tol.is_some_and(|d| !(d > 0.0)) {
            return Err(CliError::Config(
                "integrator.dt0 and integrator.tol must be positive".into(),
            ));
        }
        if self.output.cadence == 0 {
            return Err(CliError::Config("output.cadence must be at least 1".into()));
        }
        if let Some(l) = &self.lie {
            if l.alpha_prime.is_some() == l.alpha_tau.is_some() {
                return Err(CliError::Config(
                    "lie: give exactly one of alpha_prime and alpha_tau".into(),
                ));
            }
            if l.g0.is_some() == l.start.is_some() {
                return Err(CliError::Config("lie: give exactly one of g0 and start".into()));
            }
            if !(l.sample_dt > 0.0) {
                return Err(CliError::Config("lie: sample_dt must be positive".into()));
            }
        }
        if let Some(m) = &self.ma {
            if !(m.n == 2 || m.n == 3) {
                return Err(CliError::Config(format!("ma: n must be 2 or 3, got {}", m.n)));
            }
            if let GridSpec::Shape(s) = &m.grid {
                if s.len() != 2 * m.n {
                    return Err(CliError::Config(format!("ma: grid shape needs {} entries", 2 * m.n)));
                }
            }
            if self.flow == Flow::Source && m.n != 3 {
                return Err(CliError::Config("source flow needs n = 3".into()));
            }
            if self.flow == Flow::Ma && m.upsilon_potential.is_some() {
                return Err(CliError::Config("upsilon_potential belongs to flow 'source'".into()));
            }
        }
        Ok(())
    }

    /// Hash of everything that determines the trajectory, excluding `t_end`,
    /// the step budget and the output block, so a resumed run can extend a previous one.
    pub fn physics_hash(&self) -> String {
        let mut c = self.clone();
        c.integrator.t_end = 0.0;
        c.integrator.max_steps = None;
        c.output = OutputConfig::default();
        let digest = Sha256::digest(c.to_toml().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Sets a dotted key (`fuyau.M`) in a parsed TOML document.
pub fn set_key(doc: &mut toml::Value, key: &str, value: toml::Value) -> Result<()> {
    let mut cur = doc;
    let parts: Vec<&str> = key.split('.').collect();
    for (i, p) in parts.iter().enumerate() {
        let table = cur
            .as_table_mut()
            .ok_or_else(|| CliError::Config(format!("'{key}': '{p}' is not inside a table")))?;
        if i + 1 == parts.len() {
            table.insert((*p).to_string(), value);
            return Ok(());
        }
        cur = table
            .entry((*p).to_string())
            .or_insert_with(|| toml::Value::Table(Default::default()));
    }
    Err(CliError::Config(format!("empty key '{key}'")))
}
