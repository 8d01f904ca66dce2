//! Reproduction numbers, regimes, equilibria and their stability.

use alloc::collections::BTreeSet;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use thiserror::Error;

use crate::dynamics::{
    rate_matrices, rhs, simulate, DynamicsError, Integrator, State, SystemParams, OPINION_MAX,
    OPINION_MIN,
};
use crate::graph::GaugeVector;
use crate::rng::stream;
use crate::spectral::{
    is_hurwitz, metzler_eigenpair, spectral_radius, HurwitzVerdict, SpectralError,
};

/// Band around `R = 1` (and around `R_max = 1`, `R_min = 1`) treated as the
/// boundary case.
pub const R_BAND: f64 = 1e-9;

/// Residual `‖f(z)‖∞` an equilibrium must reach.
pub const EQUILIBRIUM_TOL: f64 = 1e-10;

/// Opinions closer to zero than this are on the switching surface.
pub const SWITCHING_SURFACE: f64 = 1e-12;

/// Exhaustive enumeration covers all patterns while `2^n` stays within this cap.
pub const DEFAULT_PATTERN_CAP: usize = 1 << 16;

/// Patterns drawn in sampled mode.
pub const DEFAULT_PATTERN_SAMPLES: usize = 1 << 16;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AnalysisError {
    #[error(transparent)]
    Spectral(#[from] SpectralError),
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
    #[error("operation requires regime {expected}, system is {found:?}")]
    RegimeMismatch {
        expected: &'static str,
        found: Regime,
    },
    #[error("community {community} sits on the switching surface (o = {value:e})")]
    OnSwitchingSurface { community: usize, value: f64 },
    #[error("singular linear system in {0}")]
    SingularSolve(&'static str),
    #[error("no equilibrium within horizon {horizon} (last residual {residual:e})")]
    HorizonExceeded { horizon: f64, residual: f64 },
    #[error("seed state has no infection")]
    NoInfection,
    #[error("R-based verdict {r_verdict:?} (R = {r}) contradicts Jacobian margin {margin:e}")]
    VerdictConflict {
        r_verdict: Verdict,
        r: f64,
        margin: f64,
    },
    #[error("internal inconsistency: {0}")]
    InternalInconsistency(&'static str),
}

/// `R_t^o = ρ(D(o)⁻¹ B(o))`.
pub fn reproduction_number(p: &SystemParams, o: &DVector<f64>) -> Result<f64, SpectralError> {
    let (d, b) = rate_matrices(p, o);
    let mut next_gen = b;
    for (i, mut row) in next_gen.row_iter_mut().enumerate() {
        row /= d[i];
    }
    Ok(spectral_radius(&next_gen)?.value)
}

/// `R_min`, reached at `o = 0.5 e`.
pub fn r_min(p: &SystemParams) -> Result<f64, SpectralError> {
    reproduction_number(p, &DVector::from_element(p.n(), OPINION_MAX))
}

/// `R_max`, reached at `o = -0.5 e`.
pub fn r_max(p: &SystemParams) -> Result<f64, SpectralError> {
    reproduction_number(p, &DVector::from_element(p.n(), OPINION_MIN))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReproductionNumbers {
    pub r_of_o: f64,
    pub r_min: f64,
    pub r_max: f64,
}

pub fn reproduction_numbers(
    p: &SystemParams,
    o: &DVector<f64>,
) -> Result<ReproductionNumbers, SpectralError> {
    Ok(ReproductionNumbers {
        r_of_o: reproduction_number(p, o)?,
        r_min: r_min(p)?,
        r_max: r_max(p)?,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Regime {
    /// `R_max < 1`.
    Mild,
    /// `R_min > 1`.
    Severe,
    /// `R_min < 1 < R_max`.
    Moderate,
    /// `|R_max - 1| <= R_BAND`.
    BoundaryMildExact,
    /// `|R_min - 1| <= R_BAND`.
    BoundarySevereExact,
}

impl Regime {
    pub fn as_str(&self) -> &'static str {
        match self {
            Regime::Mild => "mild",
            Regime::Severe => "severe",
            Regime::Moderate => "moderate",
            Regime::BoundaryMildExact => "boundary-mild-exact",
            Regime::BoundarySevereExact => "boundary-severe-exact",
        }
    }

    pub fn from_bounds(r_min: f64, r_max: f64) -> Self {
        if (r_max - 1.0).abs() <= R_BAND {
            Regime::BoundaryMildExact
        } else if (r_min - 1.0).abs() <= R_BAND {
            Regime::BoundarySevereExact
        } else if r_max < 1.0 {
            Regime::Mild
        } else if r_min > 1.0 {
            Regime::Severe
        } else {
            Regime::Moderate
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegimeReport {
    pub regime: Regime,
    pub r_min: f64,
    pub r_max: f64,
}

pub fn classify_regime(p: &SystemParams) -> Result<RegimeReport, SpectralError> {
    let (r_min, r_max) = (r_min(p)?, r_max(p)?);
    Ok(RegimeReport {
        regime: Regime::from_bounds(r_min, r_max),
        r_min,
        r_max,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EquilibriumClass {
    ConsensusHealthy,
    DissensusHealthy,
    /// Occurs on symmetric systems: `x = (α + 0.5) e`, `o = α e` makes the
    /// opinion equation vanish.
    ConsensusEndemic,
    DissensusEndemic,
}

impl EquilibriumClass {
    pub fn is_healthy(&self) -> bool {
        matches!(
            self,
            EquilibriumClass::ConsensusHealthy | EquilibriumClass::DissensusHealthy
        )
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            EquilibriumClass::ConsensusHealthy => "consensus-healthy",
            EquilibriumClass::DissensusHealthy => "dissensus-healthy",
            EquilibriumClass::ConsensusEndemic => "consensus-endemic",
            EquilibriumClass::DissensusEndemic => "dissensus-endemic",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Verdict {
    Stable,
    Unstable,
    Marginal,
}

impl Verdict {
    pub fn as_str(&self) -> &'static str {
        match self {
            Verdict::Stable => "stable",
            Verdict::Unstable => "unstable",
            Verdict::Marginal => "marginal",
        }
    }
}

/// Where a verdict comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum VerdictBasis {
    /// `R` at the equilibrium, cross-checked against the Jacobian.
    ReproductionNumber,
    /// Jacobian spectrum only (endemic points have no R-based criterion).
    JacobianEmpirical,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EquilibriumReport {
    pub point: State,
    pub class: EquilibriumClass,
    /// Largest real part of the Jacobian spectrum at the point.
    pub jacobian_max_real: f64,
    pub verdict: Verdict,
    pub basis: VerdictBasis,
    pub r_at_equilibrium: f64,
    /// `‖f(point)‖∞`.
    pub residual: f64,
}

/// `‖f(z)‖∞` over both blocks.
pub fn equilibrium_residual(p: &SystemParams, s: &State) -> f64 {
    let (dx, d_o) = rhs(p, s);
    dx.iter()
        .chain(d_o.iter())
        .fold(0.0, |a: f64, b| a.max(b.abs()))
}

/// Jacobian of the vector field at a point off the switching surface,
/// ordered `[x; o]`:
///
/// ```text
/// [ W(o) - diag(B(o) x)    -(D - D_min) X - (I - X) diag((B - B_min) x) ]
/// [ I                      -(Φ L̄_u Φ + I)                               ]
/// ```
pub fn jacobian_at(p: &SystemParams, s: &State) -> Result<DMatrix<f64>, AnalysisError> {
    let n = p.n();
    if let Some((community, &value)) = s
        .o
        .iter()
        .enumerate()
        .find(|(_, v)| v.abs() < SWITCHING_SURFACE)
    {
        return Err(AnalysisError::OnSwitchingSurface { community, value });
    }
    let (d, b) = rate_matrices(p, &s.o);
    let bx = &b * &s.x;
    let gap_x = (p.infection() - p.infection_min()) * &s.x;
    let signed = crate::graph::signed_laplacian(&s.gauge(), p.opinion_laplacian());

    let mut j = DMatrix::zeros(2 * n, 2 * n);
    for r in 0..n {
        let keep = 1.0 - s.x[r];
        for c in 0..n {
            j[(r, c)] = keep * b[(r, c)];
            j[(n + r, n + c)] = -signed[(r, c)];
        }
        j[(r, r)] -= d[r] + bx[r];
        j[(r, n + r)] = -(p.healing()[r] - p.delta_min()) * s.x[r] - keep * gap_x[r];
        j[(n + r, r)] = 1.0;
        j[(n + r, n + r)] -= 1.0;
    }
    Ok(j)
}

/// Central-difference Jacobian of the vector field.
pub fn finite_difference_jacobian(p: &SystemParams, s: &State, step: f64) -> DMatrix<f64> {
    let n = p.n();
    let mut j = DMatrix::zeros(2 * n, 2 * n);
    for c in 0..2 * n {
        let mut plus = s.clone();
        let mut minus = s.clone();
        if c < n {
            plus.x[c] += step;
            minus.x[c] -= step;
        } else {
            plus.o[c - n] += step;
            minus.o[c - n] -= step;
        }
        let (fx_p, fo_p) = rhs(p, &plus);
        let (fx_m, fo_m) = rhs(p, &minus);
        for r in 0..n {
            j[(r, c)] = (fx_p[r] - fx_m[r]) / (2.0 * step);
            j[(n + r, c)] = (fo_p[r] - fo_m[r]) / (2.0 * step);
        }
    }
    j
}

fn r_verdict(r: f64) -> Verdict {
    if r < 1.0 - R_BAND {
        Verdict::Stable
    } else if r > 1.0 + R_BAND {
        Verdict::Unstable
    } else {
        Verdict::Marginal
    }
}

fn hurwitz_verdict(v: HurwitzVerdict) -> Verdict {
    match v {
        HurwitzVerdict::Hurwitz => Verdict::Stable,
        HurwitzVerdict::NotHurwitz => Verdict::Unstable,
        HurwitzVerdict::Marginal => Verdict::Marginal,
    }
}

fn classify_point(s: &State) -> EquilibriumClass {
    let healthy = s.x.iter().all(|&v| v == 0.0);
    let first = s.o[0];
    let consensus = s.o.iter().all(|&v| (v - first).abs() <= 1e-12);
    match (healthy, consensus) {
        (true, true) => EquilibriumClass::ConsensusHealthy,
        (true, false) => EquilibriumClass::DissensusHealthy,
        (false, true) => EquilibriumClass::ConsensusEndemic,
        (false, false) => EquilibriumClass::DissensusEndemic,
    }
}

struct Assessment {
    verdict: Verdict,
    basis: VerdictBasis,
    margin: f64,
    r: f64,
}

fn assess(p: &SystemParams, point: &State, class: EquilibriumClass) -> Result<Assessment, AnalysisError> {
    let jac = jacobian_at(p, point)?;
    let hurwitz = is_hurwitz(&jac)?;
    let r = reproduction_number(p, &point.o)?;
    if !class.is_healthy() {
        return Ok(Assessment {
            verdict: hurwitz_verdict(hurwitz.verdict),
            basis: VerdictBasis::JacobianEmpirical,
            margin: hurwitz.margin,
            r,
        });
    }
    let by_r = r_verdict(r);
    let by_jac = hurwitz_verdict(hurwitz.verdict);
    if by_r != Verdict::Marginal && by_jac != Verdict::Marginal && by_r != by_jac {
        return Err(AnalysisError::VerdictConflict {
            r_verdict: by_r,
            r,
            margin: hurwitz.margin,
        });
    }
    Ok(Assessment {
        verdict: by_r,
        basis: VerdictBasis::ReproductionNumber,
        margin: hurwitz.margin,
        r,
    })
}

fn report(
    p: &SystemParams,
    point: State,
    class: EquilibriumClass,
) -> Result<EquilibriumReport, AnalysisError> {
    let a = assess(p, &point, class)?;
    let residual = equilibrium_residual(p, &point);
    Ok(EquilibriumReport {
        point,
        class,
        jacobian_max_real: a.margin,
        verdict: a.verdict,
        basis: a.basis,
        r_at_equilibrium: a.r,
        residual,
    })
}

/// Stability verdict of a verified equilibrium.
///
/// Healthy points are judged by `R` at the point (stable below `1 - R_BAND`,
/// unstable above `1 + R_BAND`) and must agree with the Jacobian spectrum
/// outside the marginal bands. Endemic points are judged by the Jacobian
/// alone.
pub fn classify_stability(p: &SystemParams, eq: &EquilibriumReport) -> Result<Verdict, AnalysisError> {
    Ok(assess(p, &eq.point, eq.class)?.verdict)
}

/// The unique consensus-healthy point `(0, -0.5 e)`.
pub fn consensus_healthy_equilibrium(p: &SystemParams) -> Result<EquilibriumReport, AnalysisError> {
    report(
        p,
        State::consensus_healthy(p.n()),
        EquilibriumClass::ConsensusHealthy,
    )
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnumerationOptions {
    pub pattern_cap: usize,
    /// Patterns drawn when `2^n` exceeds the cap.
    pub samples: usize,
    pub seed: u64,
}

impl Default for EnumerationOptions {
    fn default() -> Self {
        Self {
            pattern_cap: DEFAULT_PATTERN_CAP,
            samples: DEFAULT_PATTERN_SAMPLES,
            seed: 0,
        }
    }
}

impl EnumerationOptions {
    pub fn is_exhaustive(&self, n: usize) -> bool {
        n < usize::BITS as usize && (1usize << n) <= self.pattern_cap
    }
}

fn pattern_from_mask(n: usize, mask: u64) -> GaugeVector {
    GaugeVector::new((0..n).map(|i| if mask >> i & 1 == 1 { -1 } else { 1 }).collect())
}

fn mixed_patterns(n: usize, opts: &EnumerationOptions) -> Vec<GaugeVector> {
    if opts.is_exhaustive(n) {
        let full = (1u64 << n) - 1;
        return (1..full).map(|mask| pattern_from_mask(n, mask)).collect();
    }
    let mut rng = stream(opts.seed, 0x7061_7474);
    let mut seen = BTreeSet::new();
    for _ in 0..opts.samples {
        let g = GaugeVector::new(
            (0..n)
                .map(|_| if rng.random::<bool>() { -1 } else { 1 })
                .collect(),
        );
        if g.is_mixed() {
            seen.insert(g);
        }
    }
    seen.into_iter().collect()
}

/// Dissensus-healthy equilibria, one candidate per mixed sign pattern `σ`.
///
/// Each candidate solves `(Φ_σ L̄_u Φ_σ + I) o = -0.5 e` and is kept iff
/// `sgnm(o) = σ`. Exhaustive while `2^n <= pattern_cap`, sampled otherwise.
pub fn dissensus_healthy_equilibria(
    p: &SystemParams,
    opts: &EnumerationOptions,
) -> Result<Vec<EquilibriumReport>, AnalysisError> {
    let n = p.n();
    let shifted = p.opinion_laplacian() + DMatrix::identity(n, n);
    // (Φ L Φ + I)⁻¹ = Φ (L + I)⁻¹ Φ since Φ² = I
    let lu = shifted.lu();
    if !lu.is_invertible() {
        return Err(AnalysisError::SingularSolve("L + I"));
    }
    let mut out = Vec::new();
    for sigma in mixed_patterns(n, opts) {
        let rhs_vec = DVector::from_fn(n, |i, _| -0.5 * sigma.sign(i));
        let w = lu
            .solve(&rhs_vec)
            .ok_or(AnalysisError::SingularSolve("L + I"))?;
        let o = DVector::from_fn(n, |i, _| sigma.sign(i) * w[i]);
        if GaugeVector::from_opinions(o.iter()) != sigma {
            continue;
        }
        if o.iter().any(|v| v.abs() > OPINION_MAX + 1e-12) {
            return Err(AnalysisError::InternalInconsistency(
                "dissensus opinion outside [-0.5, 0.5]",
            ));
        }
        let o = o.map(|v| v.clamp(OPINION_MIN, OPINION_MAX));
        let point = State::new(DVector::zeros(n), o)?;
        out.push(report(p, point, EquilibriumClass::DissensusHealthy)?);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EndemicOptions {
    pub tol: f64,
    /// Residual at which simulation hands over to Newton.
    pub newton_start: f64,
    pub h: f64,
    pub initial_horizon: f64,
    /// Total simulated time before giving up.
    pub max_horizon: f64,
    /// `‖x‖∞` below which the trajectory counts as converged healthy.
    pub healthy_floor: f64,
}

impl Default for EndemicOptions {
    fn default() -> Self {
        Self {
            tol: EQUILIBRIUM_TOL,
            newton_start: 1e-6,
            h: 0.01,
            initial_horizon: 100.0,
            max_horizon: 51_100.0,
            healthy_floor: 1e-9,
        }
    }
}

fn newton(p: &SystemParams, start: &State, tol: f64) -> Option<State> {
    let n = p.n();
    let mut s = start.clone();
    for _ in 0..50 {
        let (dx, d_o) = rhs(p, &s);
        let res = dx
            .iter()
            .chain(d_o.iter())
            .fold(0.0, |a: f64, b| a.max(b.abs()));
        if res < tol {
            return Some(s);
        }
        let jac = jacobian_at(p, &s).ok()?;
        let f = DVector::from_iterator(2 * n, dx.iter().chain(d_o.iter()).copied());
        let delta = jac.lu().solve(&f)?;
        for i in 0..n {
            s.x[i] -= delta[i];
            s.o[i] -= delta[n + i];
        }
        if !s.is_within_box() {
            return None;
        }
    }
    None
}

/// Locates an endemic equilibrium by simulating from `seed` with a doubling
/// horizon, then refining with Newton's method.
///
/// Returns `Ok(None)` when the trajectory instead decays to the healthy set.
pub fn endemic_equilibrium(
    p: &SystemParams,
    seed: &State,
    opts: &EndemicOptions,
) -> Result<Option<EquilibriumReport>, AnalysisError> {
    let regime = classify_regime(p)?.regime;
    if !matches!(regime, Regime::Severe | Regime::Moderate) {
        return Err(AnalysisError::RegimeMismatch {
            expected: "severe or moderate",
            found: regime,
        });
    }
    if seed.x.iter().all(|&v| v == 0.0) {
        return Err(AnalysisError::NoInfection);
    }
    let mut s = seed.clone();
    let mut chunk = opts.initial_horizon;
    let mut elapsed = 0.0;
    loop {
        let chunk_steps = libm::ceil(chunk / opts.h) as usize;
        let integ = Integrator::new(opts.h, chunk, chunk_steps.max(1));
        let traj = simulate(p, &s, &integ, None)?;
        s = traj
            .final_state()
            .cloned()
            .ok_or(AnalysisError::InternalInconsistency("empty trajectory"))?;
        elapsed += chunk;
        if s.sup_x() < opts.healthy_floor {
            return Ok(None);
        }
        let residual = equilibrium_residual(p, &s);
        if residual < opts.newton_start {
            if let Some(point) = newton(p, &s, opts.tol) {
                return endemic_report(p, point).map(Some);
            }
        }
        if elapsed >= opts.max_horizon {
            return Err(AnalysisError::HorizonExceeded {
                horizon: elapsed,
                residual,
            });
        }
        chunk = (2.0 * chunk).min(opts.max_horizon - elapsed);
    }
}

fn endemic_report(p: &SystemParams, point: State) -> Result<EquilibriumReport, AnalysisError> {
    let margin = 1e-9;
    let interior = point.x.iter().all(|&v| v > margin && v < 1.0 - margin)
        && point.o.iter().all(|&v| v.abs() < OPINION_MAX - margin);
    if !interior {
        return Err(AnalysisError::InternalInconsistency(
            "endemic point is not interior",
        ));
    }
    let class = classify_point(&point);
    report(p, point, class)
}

#[derive(Debug, Clone, PartialEq)]
pub struct XiReport {
    /// `s(-D + B_min)`.
    pub phi: f64,
    /// Its positive eigenvector, scaled to `max y_i = 1`.
    pub y: DVector<f64>,
    pub requested_epsilon: f64,
    /// Largest tested `ε` (requested, then halved) at which every sampled
    /// boundary state pushed inward. `None` if none passed.
    pub epsilon_passed: Option<f64>,
    pub trials: usize,
    /// Boundary states where `ẋ_i <= 0`, with the offending community.
    pub counterexamples: Vec<(usize, State)>,
}

const MAX_COUNTEREXAMPLES: usize = 16;
const MAX_HALVINGS: u32 = 30;

/// Samples boundary faces `x_i = ε y_i` of `Ξ_ε` and checks `ẋ_i > 0` there.
pub fn xi_epsilon_invariance_check(
    p: &SystemParams,
    epsilon: f64,
    trials: usize,
    seed: u64,
) -> Result<XiReport, AnalysisError> {
    let regime = classify_regime(p)?.regime;
    if regime != Regime::Severe {
        return Err(AnalysisError::RegimeMismatch {
            expected: "severe",
            found: regime,
        });
    }
    let n = p.n();
    let m = DMatrix::from_diagonal(&-p.healing()) + p.infection_min();
    let pair = metzler_eigenpair(&m)?;
    let y = pair.vector;
    let mut out = XiReport {
        phi: pair.value,
        y: y.clone(),
        requested_epsilon: epsilon,
        epsilon_passed: None,
        trials,
        counterexamples: Vec::new(),
    };
    if epsilon == 0.0 {
        out.epsilon_passed = Some(0.0);
        return Ok(out);
    }
    for level in 0..=MAX_HALVINGS {
        let eps = epsilon / f64::from(1u32 << level.min(30));
        let mut rng = stream(seed, u64::from(level));
        let mut clean = true;
        for _ in 0..trials {
            let i = rng.random_range(0..n);
            let x = DVector::from_fn(n, |j, _| {
                let lo = eps * y[j];
                if j == i {
                    lo
                } else {
                    rng.random_range(lo..=1.0)
                }
            });
            let o = DVector::from_fn(n, |_, _| rng.random_range(OPINION_MIN..=OPINION_MAX));
            let s = State::new(x, o)?;
            let (dx, _) = rhs(p, &s);
            if !(dx[i] > 0.0) {
                clean = false;
                if out.counterexamples.len() < MAX_COUNTEREXAMPLES {
                    out.counterexamples.push((i, s));
                }
            }
        }
        if clean {
            out.epsilon_passed = Some(eps);
            break;
        }
    }
    Ok(out)
}

/// Coarse label for a final opinion profile.
pub fn opinion_outcome(o: &DVector<f64>, tol: f64) -> OpinionOutcome {
    if o.iter().all(|&v| (v - OPINION_MIN).abs() <= tol) {
        OpinionOutcome::Consensus
    } else if GaugeVector::from_opinions(o.iter()).is_mixed() {
        OpinionOutcome::Dissensus
    } else {
        OpinionOutcome::SameSignNonConsensus
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OpinionOutcome {
    /// All opinions at `-0.5`.
    Consensus,
    /// Both signs present.
    Dissensus,
    /// One sign, not at `-0.5 e`; never a healthy equilibrium.
    SameSignNonConsensus,
}

impl OpinionOutcome {
    pub fn as_str(&self) -> &'static str {
        match self {
            OpinionOutcome::Consensus => "consensus",
            OpinionOutcome::Dissensus => "dissensus",
            OpinionOutcome::SameSignNonConsensus => "same-sign-non-consensus",
        }
    }
}

/// Residual of the healthy opinion fixed-point equation
/// `‖(Φ(o) L̄_u Φ(o) + I) o + 0.5 e‖∞`.
pub fn healthy_opinion_residual(p: &SystemParams, o: &DVector<f64>) -> f64 {
    let n = p.n();
    let gauge = GaugeVector::from_opinions(o.iter());
    let m = crate::graph::signed_laplacian(&gauge, p.opinion_laplacian()) + DMatrix::identity(n, n);
    (m * o + DVector::from_element(n, 0.5))
        .iter()
        .fold(0.0, |a: f64, b| a.max(b.abs()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use approx::assert_abs_diff_eq;

    fn two_node() -> SystemParams {
        SystemParams::new(
            DMatrix::from_row_slice(2, 2, &[0., 2., 2., 0.]),
            DVector::from_vec(vec![2.0, 2.0]),
            1.0,
            0.5,
            DMatrix::from_row_slice(2, 2, &[0., 1., 1., 0.]),
        )
        .unwrap()
    }

    fn severe_two_node() -> SystemParams {
        SystemParams::new(
            DMatrix::from_row_slice(2, 2, &[0., 3., 3., 0.]),
            DVector::from_vec(vec![1.2, 1.2]),
            1.0,
            2.0,
            DMatrix::from_row_slice(2, 2, &[0., 1., 1., 0.]),
        )
        .unwrap()
    }

    fn mild_two_node() -> SystemParams {
        SystemParams::new(
            DMatrix::from_row_slice(2, 2, &[0., 0.4, 0.4, 0.]),
            DVector::from_vec(vec![1.5, 1.5]),
            1.0,
            0.2,
            DMatrix::from_row_slice(2, 2, &[0., 1., 1., 0.]),
        )
        .unwrap()
    }

    fn appendix(scale: f64) -> SystemParams {
        let a = DMatrix::from_row_slice(3, 3, &[0., 0., 1., 2., 0., 1., 0., 3., 0.]);
        SystemParams::new(
            &a * scale,
            DVector::from_vec(vec![1.5, 1.2, 1.0]),
            0.8,
            0.1,
            a,
        )
        .unwrap()
    }

    #[test]
    fn two_node_reproduction_numbers() {
        let p = two_node();
        let r = |o: [f64; 2]| reproduction_number(&p, &DVector::from_row_slice(&o)).unwrap();
        assert_abs_diff_eq!(r([0.5, 0.5]), 0.25, epsilon = 1e-12);
        assert_abs_diff_eq!(r([-0.5, -0.5]), 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(r([0.0, 0.0]), 1.25 / 1.5, epsilon = 1e-12);
        assert!(r([-0.2, 0.3]) >= r([-0.1, 0.3]));
        assert_abs_diff_eq!(r([-0.2, 0.3]), 0.7279522854655585, epsilon = 1e-12);
    }

    #[test]
    fn r_min_is_healing_over_minimal_infection() {
        let p = appendix(1.0);
        let mut m = p.infection_min().clone();
        for (i, mut row) in m.row_iter_mut().enumerate() {
            row /= p.healing()[i];
        }
        let expected = spectral_radius(&m).unwrap().value;
        assert_abs_diff_eq!(r_min(&p).unwrap(), expected, epsilon = 1e-14);
    }

    #[test]
    fn regimes() {
        let rep = classify_regime(&two_node()).unwrap();
        assert_eq!(rep.regime, Regime::Moderate);
        assert_abs_diff_eq!(rep.r_min, 0.25, epsilon = 1e-12);
        assert_abs_diff_eq!(rep.r_max, 2.0, epsilon = 1e-12);
        assert_eq!(classify_regime(&severe_two_node()).unwrap().regime, Regime::Severe);
        assert_eq!(classify_regime(&mild_two_node()).unwrap().regime, Regime::Mild);
        // B = B_min and D = δ_min I: opinions have no effect on rates
        let flat = SystemParams::new(
            DMatrix::from_row_slice(2, 2, &[0., 0.5, 0.5, 0.]),
            DVector::from_vec(vec![1.0, 1.0]),
            1.0,
            0.5,
            DMatrix::from_row_slice(2, 2, &[0., 1., 1., 0.]),
        )
        .unwrap();
        let rep = classify_regime(&flat).unwrap();
        assert_eq!(rep.r_min, rep.r_max);
        assert_eq!(Regime::from_bounds(0.5, 1.0), Regime::BoundaryMildExact);
        assert_eq!(Regime::from_bounds(1.0, 3.0), Regime::BoundarySevereExact);
    }

    #[test]
    fn consensus_healthy_verdicts() {
        let mild = consensus_healthy_equilibrium(&mild_two_node()).unwrap();
        assert_eq!(mild.residual, 0.0);
        assert_eq!(mild.class, EquilibriumClass::ConsensusHealthy);
        assert_eq!(mild.verdict, Verdict::Stable);
        assert!(mild.jacobian_max_real < 0.0);
        let severe = consensus_healthy_equilibrium(&severe_two_node()).unwrap();
        assert_eq!(severe.verdict, Verdict::Unstable);
        let moderate = consensus_healthy_equilibrium(&two_node()).unwrap();
        assert_eq!(moderate.verdict, Verdict::Unstable);
    }

    #[test]
    fn appendix_dissensus_patterns() {
        // brute force over the 6 mixed patterns: (-,+,-) and (-,-,+) are
        // self-consistent, at (-0.35, 0.1, -0.2) and (-0.3, -0.3, 0.1)
        let p = appendix(1.0);
        let eqs = dissensus_healthy_equilibria(&p, &EnumerationOptions::default()).unwrap();
        assert_eq!(eqs.len(), 2);
        let mut points: Vec<Vec<f64>> = eqs.iter().map(|e| e.point.o.iter().copied().collect()).collect();
        points.sort_by(|a, b| a[0].total_cmp(&b[0]));
        let expected = [[-0.35, 0.1, -0.2], [-0.3, -0.3, 0.1]];
        for (got, want) in points.iter().zip(expected) {
            for (g, w) in got.iter().zip(want) {
                assert_abs_diff_eq!(*g, w, epsilon = 1e-14);
            }
        }
        for e in &eqs {
            assert!(e.residual < 1e-14);
            assert!(e.point.o.iter().all(|v| v.abs() > 1e-9 && v.abs() <= 0.5));
            assert!(e.point.gauge().is_mixed());
        }
    }

    #[test]
    fn sampled_enumeration_finds_the_same_points() {
        let p = appendix(1.0);
        let opts = EnumerationOptions {
            pattern_cap: 4,
            samples: 200,
            seed: 3,
        };
        assert!(!opts.is_exhaustive(3));
        assert_eq!(dissensus_healthy_equilibria(&p, &opts).unwrap().len(), 2);
    }

    #[test]
    fn jacobian_blocks_at_healthy_point() {
        let p = appendix(1.0);
        let s = State::from_slices(&[0.0; 3], &[-0.35, 0.1, -0.2]).unwrap();
        let j = jacobian_at(&p, &s).unwrap();
        let (d, b) = rate_matrices(&p, &s.o);
        for r in 0..3 {
            for c in 0..3 {
                let w = b[(r, c)] - if r == c { d[r] } else { 0.0 };
                assert_abs_diff_eq!(j[(r, c)], w, epsilon = 1e-15);
                assert_eq!(j[(r, 3 + c)], 0.0);
                assert_eq!(j[(3 + r, c)], if r == c { 1.0 } else { 0.0 });
            }
        }
    }

    #[test]
    fn jacobian_rejects_switching_surface() {
        let p = appendix(1.0);
        let s = State::from_slices(&[0.1; 3], &[0.2, 0.0, -0.1]).unwrap();
        assert!(matches!(
            jacobian_at(&p, &s),
            Err(AnalysisError::OnSwitchingSurface { community: 1, .. })
        ));
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        let p = appendix(2.0);
        let s = State::from_slices(&[0.3, 0.6, 0.2], &[0.25, -0.1, 0.4]).unwrap();
        let j = jacobian_at(&p, &s).unwrap();
        let fd = finite_difference_jacobian(&p, &s, 1e-6);
        assert!((j - fd).amax() < 1e-6);
    }

    #[test]
    fn symmetric_severe_system_has_consensus_endemic_point() {
        // x = s e, o = (s - 0.5) e with s(3 - s) = 2 - 1.2 s,
        // i.e. s^2 - 4.2 s + 2 = 0
        let p = severe_two_node();
        let seed = State::from_slices(&[0.1, 0.4], &[0.2, -0.3]).unwrap();
        let eq = endemic_equilibrium(&p, &seed, &EndemicOptions::default())
            .unwrap()
            .expect("endemic point");
        let s = (4.2 - libm::sqrt(4.2 * 4.2 - 8.0)) / 2.0;
        for i in 0..2 {
            assert_abs_diff_eq!(eq.point.x[i], s, epsilon = 1e-9);
            assert_abs_diff_eq!(eq.point.o[i], s - 0.5, epsilon = 1e-9);
        }
        assert!(eq.residual < EQUILIBRIUM_TOL);
        assert_eq!(eq.class, EquilibriumClass::ConsensusEndemic);
        assert_eq!(eq.verdict, Verdict::Stable);
        assert_eq!(eq.basis, VerdictBasis::JacobianEmpirical);
        assert!(eq.point.x.iter().all(|&v| v > 1e-9 && v < 1.0 - 1e-9));
    }

    #[test]
    fn endemic_search_requires_outbreak_regime() {
        let seed = State::from_slices(&[0.1, 0.4], &[0.2, -0.3]).unwrap();
        assert!(matches!(
            endemic_equilibrium(&mild_two_node(), &seed, &EndemicOptions::default()),
            Err(AnalysisError::RegimeMismatch { .. })
        ));
        let healthy = State::from_slices(&[0.0, 0.0], &[0.2, -0.3]).unwrap();
        assert_eq!(
            endemic_equilibrium(&severe_two_node(), &healthy, &EndemicOptions::default()),
            Err(AnalysisError::NoInfection)
        );
    }

    #[test]
    fn xi_boundary_pushes_inward() {
        let p = severe_two_node();
        let rep = xi_epsilon_invariance_check(&p, 1e-4, 2000, 11).unwrap();
        assert!(rep.phi > 0.0);
        assert_abs_diff_eq!(rep.y.max(), 1.0, epsilon = 1e-15);
        assert_eq!(rep.epsilon_passed, Some(1e-4));
        assert!(rep.counterexamples.is_empty());
        let zero = xi_epsilon_invariance_check(&p, 0.0, 10, 11).unwrap();
        assert_eq!(zero.epsilon_passed, Some(0.0));
        assert!(matches!(
            xi_epsilon_invariance_check(&mild_two_node(), 1e-4, 10, 0),
            Err(AnalysisError::RegimeMismatch { .. })
        ));
    }

    #[test]
    fn opinion_outcomes() {
        let o = |v: &[f64]| DVector::from_column_slice(v);
        assert_eq!(opinion_outcome(&o(&[-0.5, -0.5]), 1e-9), OpinionOutcome::Consensus);
        assert_eq!(opinion_outcome(&o(&[-0.5, 0.1]), 1e-9), OpinionOutcome::Dissensus);
        assert_eq!(
            opinion_outcome(&o(&[-0.4, -0.1]), 1e-9),
            OpinionOutcome::SameSignNonConsensus
        );
    }
}
