//! JSON schemas for run configurations and their conversion into library types.
//!
//! Complex numbers are `[re, im]` pairs; a bare number is accepted as a real value.
//! Operators are either a name (`pauli_x`, `sigma_minus`, `projector_1`, `identity`, …)
//! or a square matrix of entries. Relative paths resolve against the config file.

use std::fmt;
use std::path::{Path, PathBuf};

use num_complex::Complex64 as C64;
use serde::de::{self, DeserializeOwned, Deserializer};
use serde::{Deserialize, Serialize, Serializer};
use serde_json::Value;

use crate::algebra::{self, OperatorMatrix};
use crate::bath::{SpectralDensity, SpectralKind};
use crate::error::{Error, Result};
use crate::gkls::{self, BathState, GklsModel, HamiltonianSegment, PseudoMode, PseudomodeParams, SystemModel};
use crate::multitime::MultiTimeRequest;
use crate::oracle::{self, DilationParams};

/// Deserializes `value` into `T`, reporting the path of the offending key on failure.
pub fn from_value<T: DeserializeOwned>(value: Value) -> Result<T> {
    serde_path_to_error::deserialize(value).map_err(|e| {
        let path = e.path().to_string();
        let inner = e.into_inner();
        if path == "." {
            Error::Config(inner.to_string())
        } else {
            Error::Config(format!("{path}: {inner}"))
        }
    })
}

// ---------------------------------------------------------------------------
// Scalars and operators

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Complex(pub C64);

impl Serialize for Complex {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        [self.0.re, self.0.im].serialize(s)
    }
}

impl<'de> Deserialize<'de> for Complex {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        match Value::deserialize(d)? {
            Value::Number(n) => Ok(Complex(C64::new(n.as_f64().unwrap_or(f64::NAN), 0.0))),
            Value::Array(a) if a.len() == 2 && a.iter().all(Value::is_number) => Ok(Complex(C64::new(
                a[0].as_f64().unwrap_or(f64::NAN),
                a[1].as_f64().unwrap_or(f64::NAN),
            ))),
            other => Err(de::Error::custom(format!("expected a number or [re, im], got {other}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum OperatorSpec {
    Named(String),
    Matrix(Vec<Vec<Complex>>),
}

impl Serialize for OperatorSpec {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            OperatorSpec::Named(n) => n.serialize(s),
            OperatorSpec::Matrix(m) => m.serialize(s),
        }
    }
}

impl<'de> Deserialize<'de> for OperatorSpec {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        match Value::deserialize(d)? {
            Value::String(s) => Ok(OperatorSpec::Named(s)),
            v @ Value::Array(_) => Vec::<Vec<Complex>>::deserialize(v)
                .map(OperatorSpec::Matrix)
                .map_err(|e| de::Error::custom(format!("operator matrix: {e}"))),
            other => Err(de::Error::custom(format!("expected an operator name or matrix, got {other}"))),
        }
    }
}

impl fmt::Display for OperatorSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            OperatorSpec::Named(n) => write!(f, "{n}"),
            OperatorSpec::Matrix(m) => write!(f, "{}×{} matrix", m.len(), m.first().map_or(0, Vec::len)),
        }
    }
}

impl OperatorSpec {
    pub fn matrix(m: &OperatorMatrix) -> Self {
        let d = m.dim();
        OperatorSpec::Matrix((0..d).map(|i| (0..d).map(|j| Complex(m[(i, j)])).collect()).collect())
    }

    /// Dimension implied by the spec, if any.
    pub fn implied_dim(&self) -> Option<usize> {
        match self {
            OperatorSpec::Matrix(m) => Some(m.len()),
            OperatorSpec::Named(n) => match n.as_str() {
                "pauli_x" | "pauli_y" | "pauli_z" | "sigma_plus" | "sigma_minus" => Some(2),
                _ => None,
            },
        }
    }

    pub fn resolve(&self, dim: usize) -> Result<OperatorMatrix> {
        let qubit = |op: OperatorMatrix, name: &str| {
            if dim == 2 {
                Ok(op)
            } else {
                Err(Error::Config(format!("operator `{name}` needs dimension 2, not {dim}")))
            }
        };
        match self {
            OperatorSpec::Matrix(rows) => {
                if rows.len() != dim || rows.iter().any(|r| r.len() != dim) {
                    return Err(Error::Config(format!("operator matrix must be {dim}×{dim}")));
                }
                OperatorMatrix::from_rows(&rows.iter().map(|r| r.iter().map(|c| c.0).collect()).collect::<Vec<_>>())
            }
            OperatorSpec::Named(name) => match name.as_str() {
                "pauli_x" => qubit(algebra::pauli_x(), name),
                "pauli_y" => qubit(algebra::pauli_y(), name),
                "pauli_z" => qubit(algebra::pauli_z(), name),
                "sigma_plus" => qubit(algebra::sigma_plus(), name),
                "sigma_minus" => qubit(algebra::sigma_minus(), name),
                "identity" => Ok(OperatorMatrix::identity(dim)),
                "annihilation" => algebra::annihilation(dim),
                "creation" => algebra::creation(dim),
                "number" => algebra::number(dim),
                "plus_state" => Ok(OperatorMatrix::from_fn(dim, |_, _| C64::new(1.0 / dim as f64, 0.0))),
                other => match other.strip_prefix("projector_").and_then(|k| k.parse::<usize>().ok()) {
                    Some(k) if k < dim => Ok(algebra::projector(dim, k)),
                    Some(k) => Err(Error::Config(format!("projector_{k} out of range for dimension {dim}"))),
                    None => Err(Error::Config(format!("unknown operator name `{other}`"))),
                },
            },
        }
    }
}

// ---------------------------------------------------------------------------
// Physical inputs

fn zero() -> f64 {
    0.0
}

/// A spectral density given inline or as a two-column CSV of `(omega, J)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DensitySpec {
    Lorentzian {
        amplitude: f64,
        center: f64,
        width: f64,
        #[serde(default = "zero")]
        temperature: f64,
    },
    OhmicExpCutoff {
        coupling: f64,
        cutoff: f64,
        exponent: f64,
        #[serde(default = "zero")]
        temperature: f64,
    },
    Debye {
        reorganization: f64,
        cutoff: f64,
        #[serde(default = "zero")]
        temperature: f64,
    },
    Tabulated {
        omega: Vec<f64>,
        values: Vec<f64>,
        #[serde(default = "zero")]
        temperature: f64,
    },
    TabulatedCsv {
        path: PathBuf,
        #[serde(default = "zero")]
        temperature: f64,
    },
}

impl DensitySpec {
    pub fn resolve(&self, base: &Path) -> Result<SpectralDensity> {
        match self.clone() {
            DensitySpec::Lorentzian { amplitude, center, width, temperature } => {
                SpectralDensity::new(SpectralKind::Lorentzian { amplitude, center, width }, temperature)
            }
            DensitySpec::OhmicExpCutoff { coupling, cutoff, exponent, temperature } => {
                SpectralDensity::new(SpectralKind::OhmicExpCutoff { coupling, cutoff, exponent }, temperature)
            }
            DensitySpec::Debye { reorganization, cutoff, temperature } => {
                SpectralDensity::new(SpectralKind::Debye { reorganization, cutoff }, temperature)
            }
            DensitySpec::Tabulated { omega, values, temperature } => {
                SpectralDensity::new(SpectralKind::Tabulated { omega, values }, temperature)
            }
            DensitySpec::TabulatedCsv { path, temperature } => {
                SpectralDensity::tabulated_from_csv(&base.join(path), temperature)
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SegmentSpec {
    pub t_start: f64,
    pub hamiltonian: OperatorSpec,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemSpec {
    /// Needed only when every operator is given by a dimension-free name.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dim: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hamiltonian: Option<OperatorSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub schedule: Option<Vec<SegmentSpec>>,
    pub couplings: Vec<OperatorSpec>,
    pub initial_state: OperatorSpec,
}

impl SystemSpec {
    pub fn dim(&self) -> Result<usize> {
        if let Some(d) = self.dim {
            return Ok(d);
        }
        let mut ops: Vec<&OperatorSpec> = self.couplings.iter().chain([&self.initial_state]).collect();
        ops.extend(self.hamiltonian.iter());
        ops.extend(self.schedule.iter().flatten().map(|s| &s.hamiltonian));
        ops.iter()
            .find_map(|o| o.implied_dim())
            .ok_or_else(|| Error::Config("system: cannot infer `dim`; give it explicitly".into()))
    }

    pub fn resolve(&self) -> Result<(SystemModel, OperatorMatrix)> {
        let d = self.dim()?;
        let schedule = match (&self.hamiltonian, &self.schedule) {
            (Some(h), None) => vec![HamiltonianSegment { t_start: 0.0, hamiltonian: h.resolve(d)? }],
            (None, Some(segs)) => segs
                .iter()
                .map(|s| Ok(HamiltonianSegment { t_start: s.t_start, hamiltonian: s.hamiltonian.resolve(d)? }))
                .collect::<Result<_>>()?,
            _ => return Err(Error::Config("system: give exactly one of `hamiltonian` or `schedule`".into())),
        };
        let couplings = self.couplings.iter().map(|c| c.resolve(d)).collect::<Result<_>>()?;
        Ok((SystemModel::new(d, schedule, couplings)?, self.initial_state.resolve(d)?))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PseudomodeSpec {
    pub modes: Vec<PseudoMode>,
    /// `couplings[j][k]`: channel `j`, mode `k`.
    pub couplings: Vec<Vec<Complex>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mode_mode: Option<OperatorSpec>,
}

impl PseudomodeSpec {
    pub fn from_params(p: &PseudomodeParams) -> Self {
        Self {
            modes: p.modes.clone(),
            couplings: p.couplings.iter().map(|r| r.iter().map(|&c| Complex(c)).collect()).collect(),
            mode_mode: p.mode_mode.as_ref().map(OperatorSpec::matrix),
        }
    }

    pub fn resolve(&self) -> Result<PseudomodeParams> {
        let mode_mode = self.mode_mode.as_ref().map(|m| m.resolve(self.modes.len())).transpose()?;
        PseudomodeParams::new(
            self.modes.clone(),
            self.couplings.iter().map(|r| r.iter().map(|c| c.0).collect()).collect(),
            mode_mode,
        )
    }
}

fn default_truncation_tol() -> f64 {
    gkls::TRUNCATION_TOL
}

fn vacuum() -> BathState {
    BathState::Vacuum
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub system: SystemSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pseudomodes: Option<PseudomodeSpec>,
    /// Path to a JSON file holding a `pseudomodes` object, e.g. written by `fit-bath`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pseudomodes_file: Option<PathBuf>,
    #[serde(default = "vacuum")]
    pub initial_bath: BathState,
    #[serde(default = "default_truncation_tol")]
    pub truncation_tol: f64,
}

impl ModelSpec {
    pub fn resolve(&self, base: &Path) -> Result<GklsModel> {
        let (system, rho_s) = self.system.resolve()?;
        let bath = match (&self.pseudomodes, &self.pseudomodes_file) {
            (Some(p), None) => p.clone(),
            (None, Some(path)) => {
                let path = base.join(path);
                let text = std::fs::read_to_string(&path)
                    .map_err(|e| Error::Config(format!("pseudomodes_file {}: {e}", path.display())))?;
                let mut v: Value = serde_json::from_str(&text)?;
                if let Some(inner) = v.get_mut("pseudomodes") {
                    v = inner.take();
                }
                from_value(v)?
            }
            _ => return Err(Error::Config("model: give exactly one of `pseudomodes` or `pseudomodes_file`".into())),
        };
        Ok(GklsModel::new(system, bath.resolve()?, self.initial_bath, rho_s)?.with_truncation_tol(self.truncation_tol))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RequestSpec {
    pub times: Vec<f64>,
    pub left: Vec<OperatorSpec>,
    /// Defaults to identities.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub right: Option<Vec<OperatorSpec>>,
}

impl RequestSpec {
    pub fn resolve(&self, dim: usize) -> Result<MultiTimeRequest> {
        let left = self.left.iter().map(|o| o.resolve(dim)).collect::<Result<Vec<_>>>()?;
        let right = match &self.right {
            Some(r) => r.iter().map(|o| o.resolve(dim)).collect::<Result<Vec<_>>>()?,
            None => vec![OperatorMatrix::identity(dim); self.times.len()],
        };
        MultiTimeRequest::new(self.times.clone(), left, right)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub t_max: f64,
    pub points: usize,
}

impl GridSpec {
    pub fn grid(&self) -> Result<Vec<f64>> {
        crate::bath::uniform_grid(self.t_max, self.points)
    }
}

// ---------------------------------------------------------------------------
// Commands

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitBathJob {
    pub spectral_density: DensitySpec,
    pub grid: GridSpec,
    pub order: usize,
    #[serde(default = "default_n_max")]
    pub n_max: usize,
    #[serde(default)]
    pub channel: usize,
    #[serde(default = "one")]
    pub num_channels: usize,
}

fn default_n_max() -> usize {
    6
}
fn one() -> usize {
    1
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateJob {
    pub model: ModelSpec,
    pub grid: GridSpec,
    #[serde(default)]
    pub observables: Vec<OperatorSpec>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MultitimeMethod {
    #[default]
    Nested,
    Chain,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MultitimeJob {
    pub model: ModelSpec,
    pub requests: Vec<RequestSpec>,
    #[serde(default)]
    pub method: MultitimeMethod,
}

fn default_cap() -> usize {
    oracle::DEFAULT_EXCITATION_CAP
}
fn default_dimension_cap() -> usize {
    oracle::DEFAULT_DIMENSION_CAP
}
fn default_lemma_tol() -> f64 {
    2e-2
}

/// A refinement ladder over `modes_per_channel`; `halfwidth` may be one value or one per level.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LadderSpec {
    pub halfwidth: Vec<f64>,
    pub modes_per_channel: Vec<usize>,
    #[serde(default = "default_cap")]
    pub excitation_cap: usize,
    #[serde(default = "default_dimension_cap")]
    pub dimension_cap: usize,
}

impl LadderSpec {
    pub fn levels(&self) -> Result<Vec<DilationParams>> {
        let n = self.modes_per_channel.len();
        if n == 0 {
            return Err(Error::Config("ladder.modes_per_channel: at least one level is needed".into()));
        }
        let widths = match self.halfwidth.len() {
            1 => vec![self.halfwidth[0]; n],
            k if k == n => self.halfwidth.clone(),
            k => {
                return Err(Error::Config(format!(
                    "ladder.halfwidth: give one value or {n}, not {k}"
                )))
            }
        };
        Ok(widths
            .into_iter()
            .zip(&self.modes_per_channel)
            .map(|(w, &m)| DilationParams {
                halfwidth: w,
                modes_per_channel: m,
                excitation_cap: self.excitation_cap,
                dimension_cap: self.dimension_cap,
            })
            .collect())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Lemma1Job {
    pub model: ModelSpec,
    pub ladder: LadderSpec,
    pub grid: GridSpec,
    #[serde(default = "default_lemma_tol")]
    pub tolerance: f64,
    #[serde(default)]
    pub require_monotone: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Lemma2Job {
    pub model: ModelSpec,
    pub ladder: LadderSpec,
    pub grid: GridSpec,
    #[serde(default)]
    pub channels: (usize, usize),
    #[serde(default)]
    pub s: f64,
    #[serde(default = "default_lemma_tol")]
    pub tolerance: f64,
    #[serde(default)]
    pub require_monotone: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitSpec {
    pub order: usize,
    pub grid: GridSpec,
}

fn default_mass_tol() -> f64 {
    oracle::DEFAULT_MASS_TOL
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiscretizationSpec {
    pub window: (f64, f64),
    pub modes: usize,
    #[serde(default = "default_cap")]
    pub excitation_cap: usize,
    #[serde(default = "default_mass_tol")]
    pub mass_tol: f64,
    #[serde(default = "default_dimension_cap")]
    pub dimension_cap: usize,
}

fn default_residual_threshold() -> f64 {
    1e-6
}
fn unit() -> f64 {
    1.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TheoremJob {
    pub spectral_density: DensitySpec,
    pub fit: FitSpec,
    pub system: SystemSpec,
    pub request: RequestSpec,
    #[serde(default = "default_n_max")]
    pub pseudomode_n_max: usize,
    pub discretization: DiscretizationSpec,
    #[serde(default = "unit")]
    pub gamma_scale: f64,
    /// Largest acceptable sup-norm of `C^L − C^U`.
    #[serde(default = "default_residual_threshold")]
    pub residual_threshold: f64,
}

impl TheoremJob {
    pub fn resolve(&self, base: &Path) -> Result<oracle::TheoremSetup> {
        let (system, initial_system) = self.system.resolve()?;
        let request = self.request.resolve(system.dim())?;
        Ok(oracle::TheoremSetup {
            density: self.spectral_density.resolve(base)?,
            fit_order: self.fit.order,
            fit_t_max: self.fit.grid.t_max,
            fit_points: self.fit.grid.points,
            system,
            initial_system,
            request,
            pseudomode_n_max: self.pseudomode_n_max,
            window: self.discretization.window,
            modes: self.discretization.modes,
            excitation_cap: self.discretization.excitation_cap,
            mass_tol: self.discretization.mass_tol,
            dimension_cap: self.discretization.dimension_cap,
            gamma_scale: self.gamma_scale,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrequencyGrid {
    pub min: f64,
    pub max: f64,
    pub points: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpectrumJob {
    pub model: ModelSpec,
    /// Lowering part of the dipole, e.g. `sigma_minus`.
    pub dipole: OperatorSpec,
    #[serde(default)]
    pub t_ss: f64,
    pub tau: GridSpec,
    pub frequencies: FrequencyGrid,
}

fn default_wick_tol() -> f64 {
    1e-8
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WickJob {
    pub model: ModelSpec,
    #[serde(default)]
    pub channel: usize,
    pub times: Vec<[f64; 4]>,
    #[serde(default = "default_wick_tol")]
    pub tolerance: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    FitBath,
    Simulate,
    Multitime,
    VerifyLemma1,
    VerifyLemma2,
    VerifyTheorem,
    Spectrum,
    WickCheck,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::FitBath => "fit-bath",
            Command::Simulate => "simulate",
            Command::Multitime => "multitime",
            Command::VerifyLemma1 => "verify-lemma1",
            Command::VerifyLemma2 => "verify-lemma2",
            Command::VerifyTheorem => "verify-theorem",
            Command::Spectrum => "spectrum",
            Command::WickCheck => "wick-check",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(untagged)]
pub enum Job {
    FitBath(FitBathJob),
    Simulate(SimulateJob),
    Multitime(MultitimeJob),
    VerifyLemma1(Lemma1Job),
    VerifyLemma2(Lemma2Job),
    VerifyTheorem(TheoremJob),
    Spectrum(SpectrumJob),
    WickCheck(WickJob),
}

/// A parsed configuration: `{"command": …, "output": …, <command fields>}`.
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub command: Command,
    pub output: Option<PathBuf>,
    pub job: Job,
    /// Directory relative paths are resolved against.
    pub base_dir: PathBuf,
}

impl RunConfig {
    pub fn from_json_str(text: &str, base_dir: &Path) -> Result<Self> {
        let value: Value = serde_json::from_str(text).map_err(|e| Error::Config(format!("malformed JSON: {e}")))?;
        Self::from_value(value, base_dir)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json_str(&text, path.parent().unwrap_or(Path::new(".")))
    }

    pub fn from_value(mut value: Value, base_dir: &Path) -> Result<Self> {
        let obj = value
            .as_object_mut()
            .ok_or_else(|| Error::Config("configuration must be a JSON object".into()))?;
        let command: Command = from_value(
            obj.remove("command").ok_or_else(|| Error::Config("missing key `command`".into()))?,
        )
        .map_err(|e| Error::Config(format!("command: {e}")))?;
        let output = obj.remove("output").map(from_value::<PathBuf>).transpose()?;
        let job = match command {
            Command::FitBath => Job::FitBath(from_value(value)?),
            Command::Simulate => Job::Simulate(from_value(value)?),
            Command::Multitime => Job::Multitime(from_value(value)?),
            Command::VerifyLemma1 => Job::VerifyLemma1(from_value(value)?),
            Command::VerifyLemma2 => Job::VerifyLemma2(from_value(value)?),
            Command::VerifyTheorem => Job::VerifyTheorem(from_value(value)?),
            Command::Spectrum => Job::Spectrum(from_value(value)?),
            Command::WickCheck => Job::WickCheck(from_value(value)?),
        };
        Ok(Self { command, output, job, base_dir: base_dir.to_path_buf() })
    }

    /// The job with every default filled in, for echoing into reports.
    pub fn settings(&self) -> Value {
        let mut v = serde_json::to_value(&self.job).unwrap_or(Value::Null);
        if let Some(obj) = v.as_object_mut() {
            obj.insert("command".into(), Value::String(self.command.name().into()));
        }
        v
    }
}
