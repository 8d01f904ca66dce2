//! Scenario files.
//!
//! A scenario is a TOML document. Parameters are given explicitly under
//! `[params]` or drawn by the generator described under `[generator]`.
//! Matrices are row-major arrays of rows, or a string naming a headerless CSV
//! file resolved relative to the scenario file. Community numbers in the file
//! are 1-based.
//!
//! ```toml
//! seed = 7
//!
//! [params]
//! infection = [[0.0, 0.0, 1.0], [2.0, 0.0, 1.0], [0.0, 3.0, 0.0]]
//! healing = [1.5, 1.2, 1.0]
//! delta_min = 0.8
//! beta_min = 0.5
//! opinion = "opinion.csv"
//!
//! [initial_state]
//! x = [0.3, 0.2, 0.1]
//! o = [-0.2, 0.1, 0.3]
//!
//! [integrator]
//! h = 0.01
//! horizon = 500.0
//! record_every = 10
//!
//! [[stubborn]]
//! community = 1
//! value = 0.5
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use coepi_core::control::StubbornSpec;
use coepi_core::dynamics::{OPINION_MAX, OPINION_MIN};
use coepi_core::{stream, DMatrix, DVector, Integrator, State, SystemParams};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::CliError;
use crate::generator::{generate_params, GeneratorSpec};

/// Sub-stream used to sample an initial state.
pub const INITIAL_STATE_TASK: u64 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MatrixSource {
    Inline(Vec<Vec<f64>>),
    Csv(PathBuf),
}

impl MatrixSource {
    pub fn from_matrix(m: &DMatrix<f64>) -> Self {
        MatrixSource::Inline(m.row_iter().map(|r| r.iter().copied().collect()).collect())
    }

    fn load(&self, base: &Path, name: &str) -> Result<DMatrix<f64>, CliError> {
        let rows = match self {
            MatrixSource::Inline(rows) => rows.clone(),
            MatrixSource::Csv(rel) => read_matrix_csv(&base.join(rel))?,
        };
        let n = rows.len();
        if n == 0 || rows.iter().any(|r| r.len() != n) {
            return Err(CliError::Config(format!("{name} must be a non-empty square matrix")));
        }
        Ok(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
    }
}

pub fn read_matrix_csv(path: &Path) -> Result<Vec<Vec<f64>>, CliError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_path(path)?;
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record?;
        let row = record
            .iter()
            .map(|f| {
                f.parse::<f64>().map_err(|e| CliError::Parse {
                    path: path.to_path_buf(),
                    message: format!("{f:?}: {e}"),
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        rows.push(row);
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExplicitParams {
    /// `B`; entry `(i, j)` is the rate at which `j` infects `i`.
    pub infection: MatrixSource,
    /// `δ_i`.
    pub healing: Vec<f64>,
    pub delta_min: f64,
    pub beta_min: f64,
    /// Unsigned opinion weights; entry `(i, j)` is the weight of `j` on `i`.
    pub opinion: MatrixSource,
}

impl ExplicitParams {
    pub fn from_params(p: &SystemParams) -> Self {
        Self {
            infection: MatrixSource::from_matrix(p.infection()),
            healing: p.healing().iter().copied().collect(),
            delta_min: p.delta_min(),
            beta_min: p.beta_min(),
            opinion: MatrixSource::from_matrix(p.opinion_graph().magnitudes()),
        }
    }

    pub fn build(&self, base: &Path) -> Result<SystemParams, CliError> {
        let b = self.infection.load(base, "infection")?;
        let a = self.opinion.load(base, "opinion")?;
        Ok(SystemParams::new(
            b,
            DVector::from_column_slice(&self.healing),
            self.delta_min,
            self.beta_min,
            a,
        )?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialState {
    pub x: Vec<f64>,
    pub o: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IntegratorConfig {
    pub h: f64,
    pub horizon: f64,
    pub record_every: usize,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        let d = Integrator::default();
        Self {
            h: d.h,
            horizon: d.horizon,
            record_every: d.record_every,
        }
    }
}

impl From<IntegratorConfig> for Integrator {
    fn from(c: IntegratorConfig) -> Self {
        Integrator::new(c.h, c.horizon, c.record_every)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Pin {
    /// 1-based.
    pub community: usize,
    pub value: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Outputs {
    pub trajectory: bool,
    pub summary: bool,
    pub plot: bool,
    /// Enumerate equilibria in `run`.
    pub equilibria: bool,
}

impl Default for Outputs {
    fn default() -> Self {
        Self {
            trajectory: true,
            summary: true,
            plot: true,
            equilibria: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub params: Option<ExplicitParams>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generator: Option<GeneratorSpec>,
    /// Sampled uniformly from the box when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial_state: Option<InitialState>,
    #[serde(default)]
    pub integrator: IntegratorConfig,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub stubborn: Vec<Pin>,
    #[serde(default)]
    pub outputs: Outputs,
}

/// A scenario with every source resolved to concrete values.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub seed: u64,
    pub params: SystemParams,
    pub initial: State,
    pub integrator: Integrator,
    pub stubborn: StubbornSpec,
    pub outputs: Outputs,
}

impl ScenarioConfig {
    pub fn from_toml_str(text: &str, origin: &Path) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Parse {
            path: origin.to_path_buf(),
            message: e.to_string(),
        })
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("scenario serializes")
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::from_toml_str(&text, path)
    }

    /// Resolves sidecar files relative to `base` and samples whatever the
    /// file leaves open.
    pub fn resolve(&self, base: &Path) -> Result<Scenario, CliError> {
        let params = match (&self.params, &self.generator) {
            (Some(p), None) => p.build(base)?,
            (None, Some(g)) => generate_params(g, self.seed)?.params,
            (Some(_), Some(_)) => {
                return Err(CliError::Config(
                    "give either [params] or [generator], not both".into(),
                ))
            }
            (None, None) => return Err(CliError::Config("missing [params] or [generator]".into())),
        };
        let n = params.n();
        let initial = match &self.initial_state {
            Some(s) => {
                if s.x.len() != n || s.o.len() != n {
                    return Err(CliError::Config(format!(
                        "initial_state needs {n} entries in x and o"
                    )));
                }
                State::from_slices(&s.x, &s.o)?
            }
            None => sample_state(n, self.seed),
        };
        let mut stubborn = StubbornSpec::new();
        for pin in &self.stubborn {
            if pin.community == 0 || pin.community > n {
                return Err(CliError::Config(format!(
                    "stubborn community {} is outside 1..={n}",
                    pin.community
                )));
            }
            stubborn.insert(pin.community - 1, pin.value)?;
        }
        Ok(Scenario {
            seed: self.seed,
            params,
            initial,
            integrator: self.integrator.into(),
            stubborn,
            outputs: self.outputs,
        })
    }
}

/// Uniform draw from `[0, 1]^n × [-0.5, 0.5]^n`.
pub fn sample_state(n: usize, seed: u64) -> State {
    let mut rng = stream(seed, INITIAL_STATE_TASK);
    let x: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..=1.0)).collect();
    let o: Vec<f64> = (0..n)
        .map(|_| rng.random_range(OPINION_MIN..=OPINION_MAX))
        .collect();
    State::from_slices(&x, &o).expect("sampled inside the box")
}
