//! Seeded random scenarios that land in a requested regime.
//!
//! Every attempt draws from its own SplitMix64 stream,
//! `stream(seed, ATTEMPT_TASK_BASE + attempt)`, so a given `(spec, seed)`
//! pair always produces the same parameters.

use coepi_core::analysis::{classify_regime, Regime};
use coepi_core::{stream, DMatrix, DVector, SystemParams};
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::{sample_state, ExplicitParams, InitialState, ScenarioConfig};

pub const MAX_ATTEMPTS: u64 = 1000;
pub const ATTEMPT_TASK_BASE: u64 = 0x1000;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GenerateError {
    #[error("invalid generator spec: {0}")]
    InvalidSpec(String),
    #[error("no {regime} scenario after {attempts} attempts; widen the rate ranges")]
    RegimeUnreachable { regime: &'static str, attempts: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TargetRegime {
    Mild,
    Severe,
    Moderate,
}

impl TargetRegime {
    pub fn as_str(self) -> &'static str {
        match self {
            TargetRegime::Mild => "mild",
            TargetRegime::Severe => "severe",
            TargetRegime::Moderate => "moderate",
        }
    }

    pub fn matches(self, r: Regime) -> bool {
        matches!(
            (self, r),
            (TargetRegime::Mild, Regime::Mild)
                | (TargetRegime::Severe, Regime::Severe)
                | (TargetRegime::Moderate, Regime::Moderate)
        )
    }
}

/// Closed sampling intervals `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RateRanges {
    pub delta_min: [f64; 2],
    /// `δ_i`, raised to `δ_min` if drawn below it.
    pub delta: [f64; 2],
    pub beta_min: [f64; 2],
    /// `β_ij` on edges, raised to `β_min` if drawn below it.
    pub beta: [f64; 2],
    pub opinion_weight: [f64; 2],
}

impl RateRanges {
    pub fn for_regime(regime: TargetRegime) -> Self {
        match regime {
            TargetRegime::Mild => Self {
                delta_min: [0.5, 0.8],
                delta: [0.8, 1.2],
                beta_min: [0.005, 0.01],
                beta: [0.02, 0.08],
                opinion_weight: [0.1, 1.0],
            },
            TargetRegime::Severe => Self {
                delta_min: [0.15, 0.25],
                delta: [0.3, 0.45],
                beta_min: [0.15, 0.2],
                beta: [0.2, 0.3],
                opinion_weight: [0.1, 1.0],
            },
            TargetRegime::Moderate => Self {
                delta_min: [0.4, 0.6],
                delta: [0.8, 1.2],
                beta_min: [0.05, 0.1],
                beta: [0.4, 0.7],
                opinion_weight: [0.1, 1.0],
            },
        }
    }

    fn validate(&self) -> Result<(), GenerateError> {
        let all = [
            ("delta_min", self.delta_min),
            ("delta", self.delta),
            ("beta_min", self.beta_min),
            ("beta", self.beta),
            ("opinion_weight", self.opinion_weight),
        ];
        for (name, [lo, hi]) in all {
            if !(lo.is_finite() && hi.is_finite() && lo > 0.0 && lo <= hi) {
                return Err(GenerateError::InvalidSpec(format!(
                    "{name} range [{lo}, {hi}] must satisfy 0 < lo <= hi"
                )));
            }
        }
        Ok(())
    }
}

/// Expected out-degree (density 0.3, n = 10) the default ranges are tuned for.
pub const REFERENCE_DEGREE: f64 = 2.7;

fn default_density() -> f64 {
    0.3
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorSpec {
    pub n: usize,
    pub regime: TargetRegime,
    /// Expected fraction of the `n(n-1)` possible edges, Hamiltonian cycle
    /// included.
    #[serde(default = "default_density")]
    pub edge_density: f64,
    #[serde(default = "default_true")]
    pub same_topology_for_opinions: bool,
    /// Regime defaults when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ranges: Option<RateRanges>,
}

impl GeneratorSpec {
    pub fn new(n: usize, regime: TargetRegime) -> Self {
        Self {
            n,
            regime,
            edge_density: default_density(),
            same_topology_for_opinions: true,
            ranges: None,
        }
    }

    /// Explicit ranges, or the regime defaults with infection rates scaled by
    /// `REFERENCE_DEGREE / d`, `d` the expected out-degree, so the spectral
    /// radius of the infection matrix stays comparable across `n`.
    pub fn effective_ranges(&self) -> RateRanges {
        self.ranges.unwrap_or_else(|| {
            let mut r = RateRanges::for_regime(self.regime);
            let degree = (self.edge_density * self.n.saturating_sub(1) as f64).max(1.0);
            let k = REFERENCE_DEGREE / degree;
            for range in [&mut r.beta_min, &mut r.beta] {
                range[0] *= k;
                range[1] *= k;
            }
            r
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Generated {
    pub params: SystemParams,
    /// Zero-based attempt that succeeded.
    pub attempt: u64,
    pub r_min: f64,
    pub r_max: f64,
}

fn draw(rng: &mut impl Rng, [lo, hi]: [f64; 2]) -> f64 {
    if lo == hi {
        lo
    } else {
        rng.random_range(lo..=hi)
    }
}

/// 0/1 support: a random Hamiltonian cycle plus extra edges to reach
/// `density` in expectation.
fn topology(rng: &mut impl Rng, n: usize, density: f64) -> Vec<Vec<bool>> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let mut edge = vec![vec![false; n]; n];
    for k in 0..n {
        let (from, to) = (order[k], order[(k + 1) % n]);
        edge[to][from] = true;
    }
    let possible = (n * (n - 1)) as f64;
    let extra = ((density * possible - n as f64) / (possible - n as f64).max(1.0)).clamp(0.0, 1.0);
    for (i, row) in edge.iter_mut().enumerate() {
        for (j, e) in row.iter_mut().enumerate() {
            if i != j && !*e && rng.random::<f64>() < extra {
                *e = true;
            }
        }
    }
    edge
}

fn attempt(spec: &GeneratorSpec, ranges: &RateRanges, seed: u64, k: u64) -> Result<SystemParams, GenerateError> {
    let n = spec.n;
    let mut rng = stream(seed, ATTEMPT_TASK_BASE + k);
    let support = topology(&mut rng, n, spec.edge_density);
    let delta_min = draw(&mut rng, ranges.delta_min);
    let beta_min = draw(&mut rng, ranges.beta_min);
    let healing = DVector::from_iterator(
        n,
        (0..n).map(|_| draw(&mut rng, ranges.delta).max(delta_min)),
    );
    let mut infection = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            if support[i][j] {
                infection[(i, j)] = draw(&mut rng, ranges.beta).max(beta_min);
            }
        }
    }
    let opinion_support = if spec.same_topology_for_opinions {
        support
    } else {
        topology(&mut rng, n, spec.edge_density)
    };
    let mut opinion = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            if opinion_support[i][j] {
                opinion[(i, j)] = draw(&mut rng, ranges.opinion_weight);
            }
        }
    }
    SystemParams::new(infection, healing, delta_min, beta_min, opinion)
        .map_err(|e| GenerateError::InvalidSpec(e.to_string()))
}

/// Draws parameters until their regime matches the target, up to
/// [`MAX_ATTEMPTS`] times.
pub fn generate_params(spec: &GeneratorSpec, seed: u64) -> Result<Generated, GenerateError> {
    if spec.n < 2 {
        return Err(GenerateError::InvalidSpec("n must be at least 2".into()));
    }
    if !(0.0..=1.0).contains(&spec.edge_density) {
        return Err(GenerateError::InvalidSpec(
            "edge_density must lie in [0, 1]".into(),
        ));
    }
    let ranges = spec.effective_ranges();
    ranges.validate()?;
    for k in 0..MAX_ATTEMPTS {
        let params = attempt(spec, &ranges, seed, k)?;
        let Ok(report) = classify_regime(&params) else {
            continue;
        };
        if spec.regime.matches(report.regime) {
            return Ok(Generated {
                params,
                attempt: k,
                r_min: report.r_min,
                r_max: report.r_max,
            });
        }
    }
    Err(GenerateError::RegimeUnreachable {
        regime: spec.regime.as_str(),
        attempts: MAX_ATTEMPTS,
    })
}

/// Self-contained scenario: explicit parameters and a sampled initial state.
pub fn generate_scenario(spec: &GeneratorSpec, seed: u64) -> Result<ScenarioConfig, GenerateError> {
    let generated = generate_params(spec, seed)?;
    let s0 = sample_state(spec.n, seed);
    Ok(ScenarioConfig {
        seed,
        params: Some(ExplicitParams::from_params(&generated.params)),
        generator: None,
        initial_state: Some(InitialState {
            x: s0.x.iter().copied().collect(),
            o: s0.o.iter().copied().collect(),
        }),
        integrator: Default::default(),
        stubborn: Vec::new(),
        outputs: Default::default(),
    })
}
