//! Threshold opinions and stubborn-community interventions.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use nalgebra::DVector;
use thiserror::Error;

use crate::analysis::{classify_regime, reproduction_number, Regime, R_BAND};
use crate::dynamics::{simulate, DynamicsError, Integrator, State, SystemParams, OPINION_MAX, OPINION_MIN};
use crate::spectral::SpectralError;

/// Sup-norm of `x(T)` below which a run counts as eradicated.
pub const ERADICATION_TOL: f64 = 1e-6;

/// Largest `n` accepted by the exhaustive subset scan.
pub const EXHAUSTIVE_LIMIT: usize = 16;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ControlError {
    #[error(transparent)]
    Spectral(#[from] SpectralError),
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
    #[error("operation requires regime {expected}, system is {found:?}")]
    RegimeMismatch {
        expected: &'static str,
        found: Regime,
    },
    #[error("pinned value {value} for community {community} is outside [-0.5, 0.5]")]
    InvalidPin { community: usize, value: f64 },
    #[error("community {community} is out of range for n = {n}")]
    PinOutOfRange { community: usize, n: usize },
    #[error("exhaustive search needs n <= {limit}, got {n}")]
    TooLarge { n: usize, limit: usize },
    #[error("no feasible stubborn set: {0}")]
    Infeasible(&'static str),
    #[error("bisection stalled with |R - 1| = {residual:e}")]
    ThresholdNotResolved { residual: f64 },
}

/// Communities whose opinions are pinned, keyed by index.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct StubbornSpec {
    pinned: BTreeMap<usize, f64>,
}

impl StubbornSpec {
    pub fn new() -> Self {
        Self::default()
    }

    /// Later duplicates overwrite earlier ones.
    pub fn from_pairs(pairs: impl IntoIterator<Item = (usize, f64)>) -> Result<Self, ControlError> {
        let mut out = Self::new();
        for (community, value) in pairs {
            out.insert(community, value)?;
        }
        Ok(out)
    }

    /// Pins every listed community at `+0.5`.
    pub fn extreme(indices: impl IntoIterator<Item = usize>) -> Self {
        Self {
            pinned: indices.into_iter().map(|i| (i, OPINION_MAX)).collect(),
        }
    }

    pub fn insert(&mut self, community: usize, value: f64) -> Result<(), ControlError> {
        if !(OPINION_MIN..=OPINION_MAX).contains(&value) {
            return Err(ControlError::InvalidPin { community, value });
        }
        self.pinned.insert(community, value);
        Ok(())
    }

    /// `(community, value)` in increasing community order.
    pub fn iter(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.pinned.iter().map(|(&i, &v)| (i, v))
    }

    pub fn indices(&self) -> impl Iterator<Item = usize> + '_ {
        self.pinned.keys().copied()
    }

    pub fn get(&self, community: usize) -> Option<f64> {
        self.pinned.get(&community).copied()
    }

    pub fn contains(&self, community: usize) -> bool {
        self.pinned.contains_key(&community)
    }

    pub fn len(&self) -> usize {
        self.pinned.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pinned.is_empty()
    }

    pub fn check_range(&self, n: usize) -> Result<(), ControlError> {
        match self.pinned.keys().find(|&&i| i >= n) {
            Some(&community) => Err(ControlError::PinOutOfRange { community, n }),
            None => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThresholdReport {
    pub alpha: f64,
    pub r_at_alpha: f64,
    /// `|R(α e) - 1|`.
    pub residual: f64,
    /// Set when `α` sits on an endpoint of `[-0.5, 0.5]` because the system
    /// is on a regime boundary.
    pub boundary: bool,
}

fn r_uniform(p: &SystemParams, alpha: f64) -> Result<f64, SpectralError> {
    reproduction_number(p, &DVector::from_element(p.n(), alpha))
}

/// Uniform threshold opinion `α` with `R(α e) = 1`, by bisection on
/// `[-0.5, 0.5]` (`α ↦ R(α e)` is non-increasing).
pub fn uniform_threshold(p: &SystemParams, tol: f64) -> Result<ThresholdReport, ControlError> {
    let regime = classify_regime(p)?;
    let endpoint = match regime.regime {
        Regime::Moderate => None,
        Regime::BoundaryMildExact => Some((OPINION_MIN, regime.r_max)),
        Regime::BoundarySevereExact => Some((OPINION_MAX, regime.r_min)),
        found => {
            return Err(ControlError::RegimeMismatch {
                expected: "moderate",
                found,
            })
        }
    };
    if let Some((alpha, r)) = endpoint {
        return Ok(ThresholdReport {
            alpha,
            r_at_alpha: r,
            residual: (r - 1.0).abs(),
            boundary: true,
        });
    }

    let (mut lo, mut hi) = (OPINION_MIN, OPINION_MAX);
    let mut best = (f64::INFINITY, 0.0, 0.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let r = r_uniform(p, mid)?;
        let residual = (r - 1.0).abs();
        if residual < best.0 {
            best = (residual, mid, r);
        }
        if r > 1.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 4.0 * f64::EPSILON {
            break;
        }
    }
    let (residual, alpha, r_at_alpha) = best;
    if residual > tol {
        return Err(ControlError::ThresholdNotResolved { residual });
    }
    Ok(ThresholdReport {
        alpha,
        r_at_alpha,
        residual,
        boundary: false,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SearchMode {
    /// Add the community that lowers `R` most until feasible.
    Greedy,
    /// Scan subsets by increasing size in lexicographic order.
    Exhaustive,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VerificationReport {
    pub horizon: f64,
    pub final_sup_x: f64,
    /// Smallest free-community opinion after the first tenth of the horizon;
    /// `None` if every community is pinned.
    pub min_free_opinion: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InterventionPlan {
    pub stubborn: StubbornSpec,
    /// `R` with pinned communities at their values and every free community
    /// at the worst case `-0.5`.
    pub predicted_r: f64,
    pub verified: bool,
    pub cardinality: usize,
    pub verification: Option<VerificationReport>,
}

impl InterventionPlan {
    pub fn new(p: &SystemParams, stubborn: StubbornSpec) -> Result<Self, ControlError> {
        stubborn.check_range(p.n())?;
        let o = DVector::from_fn(p.n(), |i, _| stubborn.get(i).unwrap_or(OPINION_MIN));
        Ok(Self {
            predicted_r: reproduction_number(p, &o)?,
            cardinality: stubborn.len(),
            stubborn,
            verified: false,
            verification: None,
        })
    }
}

fn extreme_vector(n: usize, set: &[usize]) -> DVector<f64> {
    let mut o = DVector::from_element(n, OPINION_MIN);
    for &i in set {
        o[i] = OPINION_MAX;
    }
    o
}

const FEASIBLE: f64 = 1.0 - R_BAND;

/// Smallest set `S` whose extreme vector (`+0.5` on `S`, `-0.5` elsewhere)
/// has `R < 1 - 1e-9`.
pub fn select_stubborn_extreme(p: &SystemParams, mode: SearchMode) -> Result<InterventionPlan, ControlError> {
    let regime = classify_regime(p)?.regime;
    if regime != Regime::Moderate {
        return Err(ControlError::RegimeMismatch {
            expected: "moderate",
            found: regime,
        });
    }
    let n = p.n();
    let (set, r) = match mode {
        SearchMode::Greedy => greedy(p)?,
        SearchMode::Exhaustive => {
            if n > EXHAUSTIVE_LIMIT {
                return Err(ControlError::TooLarge {
                    n,
                    limit: EXHAUSTIVE_LIMIT,
                });
            }
            exhaustive(p)?
        }
    };
    Ok(InterventionPlan {
        cardinality: set.len(),
        stubborn: StubbornSpec::extreme(set),
        predicted_r: r,
        verified: false,
        verification: None,
    })
}

fn greedy(p: &SystemParams) -> Result<(Vec<usize>, f64), ControlError> {
    let n = p.n();
    let mut set = Vec::new();
    let mut r = reproduction_number(p, &extreme_vector(n, &set))?;
    while r >= FEASIBLE {
        let mut best: Option<(usize, f64)> = None;
        for c in 0..n {
            if set.contains(&c) {
                continue;
            }
            set.push(c);
            let rc = reproduction_number(p, &extreme_vector(n, &set))?;
            set.pop();
            if best.map_or(true, |(_, rb)| rc < rb) {
                best = Some((c, rc));
            }
        }
        let (c, rc) = best.ok_or(ControlError::Infeasible("R_min >= 1 with every community pinned"))?;
        set.push(c);
        r = rc;
    }
    set.sort_unstable();
    Ok((set, r))
}

fn exhaustive(p: &SystemParams) -> Result<(Vec<usize>, f64), ControlError> {
    let n = p.n();
    for k in 0..=n {
        // lexicographic k-combinations of 0..n
        let mut comb: Vec<usize> = (0..k).collect();
        loop {
            let r = reproduction_number(p, &extreme_vector(n, &comb))?;
            if r < FEASIBLE {
                return Ok((comb, r));
            }
            let Some(i) = (0..k).rev().find(|&i| comb[i] < n - k + i) else {
                break;
            };
            comb[i] += 1;
            for j in i + 1..k {
                comb[j] = comb[j - 1] + 1;
            }
        }
    }
    Err(ControlError::Infeasible("R_min >= 1 with every community pinned"))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VerifyOptions {
    pub horizon: f64,
    pub h: f64,
    pub record_every: usize,
    pub eradication_tol: f64,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self {
            horizon: 500.0,
            h: 0.01,
            record_every: 100,
            eradication_tol: ERADICATION_TOL,
        }
    }
}

/// Simulates the plan from `s0` and marks it verified when
/// `‖x(T)‖∞ < eradication_tol`.
pub fn verify_plan(
    p: &SystemParams,
    plan: &InterventionPlan,
    s0: &State,
    opts: &VerifyOptions,
) -> Result<(InterventionPlan, crate::dynamics::Trajectory), ControlError> {
    plan.stubborn.check_range(p.n())?;
    let integ = Integrator::new(opts.h, opts.horizon, opts.record_every);
    let traj = simulate(p, s0, &integ, Some(&plan.stubborn))?;
    let final_sup_x = traj.final_state().map_or(f64::INFINITY, State::sup_x);
    let transient = 0.1 * opts.horizon;
    let min_free_opinion = traj
        .times
        .iter()
        .zip(&traj.states)
        .filter(|(&t, _)| t >= transient)
        .flat_map(|(_, s)| {
            s.o.iter()
                .enumerate()
                .filter(|(i, _)| !plan.stubborn.contains(*i))
                .map(|(_, &v)| v)
        })
        .reduce(f64::min);
    let mut out = plan.clone();
    out.verified = final_sup_x < opts.eradication_tol;
    out.verification = Some(VerificationReport {
        horizon: opts.horizon,
        final_sup_x,
        min_free_opinion,
    });
    Ok((out, traj))
}
