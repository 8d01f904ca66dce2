//! The coupled epidemic–opinion vector field and its integrator.
//!
//! With `o' = o + 0.5` the model reads
//!
//! ```text
//! ẋ = -D(o) x + (I - X) B(o) x
//! ȯ = x - (Φ(o) L̄_u Φ(o) + I) o - 0.5 e
//! D(o) = D_min + (D - D_min)(O + 0.5 I)
//! B(o) = B - (O + 0.5 I)(B - B_min)
//! ```
//!
//! The gauge `Φ(o)` switches whenever an opinion changes sign. The integrator
//! is fixed-step RK4 with the gauge frozen inside each (sub)step; a sign
//! change at the end of a step is located by bisection and the step is split
//! there.

use alloc::collections::VecDeque;
use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::analysis::reproduction_number;
use crate::control::StubbornSpec;
use crate::graph::{self, DirectedWeightedGraph, GaugeVector, GraphError, OpinionMagnitudeGraph};
use crate::spectral::SpectralError;

/// Lower and upper opinion bounds.
pub const OPINION_MIN: f64 = -0.5;
pub const OPINION_MAX: f64 = 0.5;

/// Pre-projection box violation above which a step is rejected.
pub const STEP_VIOLATION_LIMIT: f64 = 1e-6;

/// Bisection resolution for switch localization, relative to the step size.
const SWITCH_RESOLUTION: f64 = 1e-6;

/// Splits allowed in a single step before the remainder is integrated with a
/// frozen gauge.
const MAX_SPLITS_PER_STEP: usize = 64;

/// Crossings of one community within one time unit that mark a run as
/// sliding along the switching surface.
pub const SLIDING_CROSSINGS: usize = 100;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParamsError {
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(&'static str),
    #[error("the {0} graph is not strongly connected")]
    NotStronglyConnected(&'static str),
    #[error("delta_min and beta_min must be positive and finite")]
    NonPositiveMinimum,
    #[error("healing rate delta_{i} = {value} is below delta_min")]
    HealingBelowMinimum { i: usize, value: f64 },
    #[error("infection rate beta_({i},{j}) = {value} is below beta_min")]
    InfectionBelowMinimum { i: usize, j: usize, value: f64 },
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DynamicsError {
    #[error("step too large: state left the box by {violation:e} at t = {time}")]
    StepTooLarge { violation: f64, time: f64 },
    #[error("invalid state: {0}")]
    InvalidState(&'static str),
    #[error("step size and horizon must be positive and finite")]
    InvalidIntegrator,
    #[error("stubborn community {0} is out of range")]
    StubbornOutOfRange(usize),
    #[error(transparent)]
    Spectral(#[from] SpectralError),
}

/// All rate and structure constants of one model instance.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemParams {
    epidemic_graph: DirectedWeightedGraph,
    healing: DVector<f64>,
    delta_min: f64,
    beta_min: f64,
    infection_min: DMatrix<f64>,
    opinion_graph: OpinionMagnitudeGraph,
    opinion_laplacian: DMatrix<f64>,
}

impl SystemParams {
    /// `infection` is `B = [β_ij]` (entry `(i, j)` is the rate at which
    /// community `j` infects community `i`); its support defines the
    /// epidemic graph. `opinion_magnitudes` is `Ā_u`.
    pub fn new(
        infection: DMatrix<f64>,
        healing: DVector<f64>,
        delta_min: f64,
        beta_min: f64,
        opinion_magnitudes: DMatrix<f64>,
    ) -> Result<Self, ParamsError> {
        let epidemic_graph = DirectedWeightedGraph::new(infection)?;
        let opinion_graph = OpinionMagnitudeGraph::new(opinion_magnitudes)?;
        let n = epidemic_graph.n();
        if opinion_graph.n() != n {
            return Err(ParamsError::DimensionMismatch("opinion graph size"));
        }
        if healing.len() != n {
            return Err(ParamsError::DimensionMismatch("healing rate count"));
        }
        if !(delta_min > 0.0 && delta_min.is_finite() && beta_min > 0.0 && beta_min.is_finite()) {
            return Err(ParamsError::NonPositiveMinimum);
        }
        for (i, &value) in healing.iter().enumerate() {
            if !(value >= delta_min) || !value.is_finite() {
                return Err(ParamsError::HealingBelowMinimum { i, value });
            }
        }
        let support = epidemic_graph.support();
        let b = epidemic_graph.adjacency();
        for i in 0..n {
            for j in 0..n {
                if support[(i, j)] > 0.0 && b[(i, j)] < beta_min {
                    return Err(ParamsError::InfectionBelowMinimum {
                        i,
                        j,
                        value: b[(i, j)],
                    });
                }
            }
        }
        if !epidemic_graph.is_strongly_connected() {
            return Err(ParamsError::NotStronglyConnected("epidemic"));
        }
        if !opinion_graph.is_strongly_connected() {
            return Err(ParamsError::NotStronglyConnected("opinion"));
        }
        let infection_min = support * beta_min;
        let opinion_laplacian = opinion_graph.laplacian();
        Ok(Self {
            epidemic_graph,
            healing,
            delta_min,
            beta_min,
            infection_min,
            opinion_graph,
            opinion_laplacian,
        })
    }

    /// Builds `B_ij = β_i a_ij` from a weighted graph and per-community
    /// susceptibility scales.
    pub fn from_node_rates(
        graph: &DirectedWeightedGraph,
        beta: &[f64],
        healing: DVector<f64>,
        delta_min: f64,
        beta_min: f64,
        opinion_magnitudes: DMatrix<f64>,
    ) -> Result<Self, ParamsError> {
        if beta.len() != graph.n() {
            return Err(ParamsError::DimensionMismatch("beta count"));
        }
        let a = graph.adjacency();
        let infection = DMatrix::from_fn(a.nrows(), a.ncols(), |i, j| beta[i] * a[(i, j)]);
        Self::new(infection, healing, delta_min, beta_min, opinion_magnitudes)
    }

    pub fn n(&self) -> usize {
        self.healing.len()
    }

    pub fn epidemic_graph(&self) -> &DirectedWeightedGraph {
        &self.epidemic_graph
    }

    /// `B`.
    pub fn infection(&self) -> &DMatrix<f64> {
        self.epidemic_graph.adjacency()
    }

    /// `B_min = β_min Ã`.
    pub fn infection_min(&self) -> &DMatrix<f64> {
        &self.infection_min
    }

    /// Diagonal of `D`.
    pub fn healing(&self) -> &DVector<f64> {
        &self.healing
    }

    pub fn delta_min(&self) -> f64 {
        self.delta_min
    }

    pub fn beta_min(&self) -> f64 {
        self.beta_min
    }

    pub fn opinion_graph(&self) -> &OpinionMagnitudeGraph {
        &self.opinion_graph
    }

    /// `L̄_u`.
    pub fn opinion_laplacian(&self) -> &DMatrix<f64> {
        &self.opinion_laplacian
    }
}

/// Joint state: infected fractions `x` and opinions `o`.
#[derive(Debug, Clone, PartialEq)]
pub struct State {
    pub x: DVector<f64>,
    pub o: DVector<f64>,
}

impl State {
    pub fn new(x: DVector<f64>, o: DVector<f64>) -> Result<Self, DynamicsError> {
        if x.len() != o.len() {
            return Err(DynamicsError::InvalidState("x and o lengths differ"));
        }
        if x.iter().chain(o.iter()).any(|v| !v.is_finite()) {
            return Err(DynamicsError::InvalidState("non-finite entry"));
        }
        Ok(Self { x, o })
    }

    pub fn from_slices(x: &[f64], o: &[f64]) -> Result<Self, DynamicsError> {
        Self::new(DVector::from_column_slice(x), DVector::from_column_slice(o))
    }

    /// The consensus-healthy point `(0, -0.5 e)`.
    pub fn consensus_healthy(n: usize) -> Self {
        Self {
            x: DVector::zeros(n),
            o: DVector::from_element(n, OPINION_MIN),
        }
    }

    pub fn n(&self) -> usize {
        self.x.len()
    }

    /// Largest distance by which any component leaves the box.
    pub fn box_violation(&self) -> f64 {
        let vx = self
            .x
            .iter()
            .map(|&v| (-v).max(v - 1.0))
            .fold(0.0, f64::max);
        let vo = self
            .o
            .iter()
            .map(|&v| (OPINION_MIN - v).max(v - OPINION_MAX))
            .fold(0.0, f64::max);
        vx.max(vo)
    }

    pub fn is_within_box(&self) -> bool {
        self.box_violation() == 0.0
    }

    pub fn gauge(&self) -> GaugeVector {
        GaugeVector::from_opinions(self.o.iter())
    }

    pub fn sup_x(&self) -> f64 {
        self.x.iter().fold(0.0, |a: f64, &b| a.max(b.abs()))
    }

    fn project(&mut self) {
        self.x.apply(|v| *v = v.clamp(0.0, 1.0));
        self.o.apply(|v| *v = v.clamp(OPINION_MIN, OPINION_MAX));
    }

    fn to_vec(&self) -> Vec<f64> {
        self.x.iter().chain(self.o.iter()).copied().collect()
    }

    fn from_joint(z: &[f64]) -> Self {
        let n = z.len() / 2;
        Self {
            x: DVector::from_column_slice(&z[..n]),
            o: DVector::from_column_slice(&z[n..]),
        }
    }
}

/// Opinion-dependent healing diagonal `D(o)` and infection matrix `B(o)`.
pub fn rate_matrices(p: &SystemParams, o: &DVector<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let dmin = p.delta_min;
    let healing = DVector::from_fn(p.n(), |i, _| dmin + (p.healing[i] - dmin) * (o[i] + 0.5));
    let b = p.infection();
    let bmin = &p.infection_min;
    let infection = DMatrix::from_fn(p.n(), p.n(), |i, j| {
        b[(i, j)] - (o[i] + 0.5) * (b[(i, j)] - bmin[(i, j)])
    });
    (healing, infection)
}

/// Vector field in compact matrix form. The gauge is `sgnm(o)`.
pub fn rhs(p: &SystemParams, s: &State) -> (DVector<f64>, DVector<f64>) {
    rhs_with_gauge(p, s, &s.gauge())
}

/// Vector field with an explicitly supplied gauge.
pub fn rhs_with_gauge(
    p: &SystemParams,
    s: &State,
    gauge: &GaugeVector,
) -> (DVector<f64>, DVector<f64>) {
    let (d, b) = rate_matrices(p, &s.o);
    let dx = -d.component_mul(&s.x) + (b * &s.x).component_mul(&s.x.map(|v| 1.0 - v));
    let mut lsigned = graph::signed_laplacian(gauge, &p.opinion_laplacian);
    for i in 0..p.n() {
        lsigned[(i, i)] += 1.0;
    }
    let d_o = &s.x - lsigned * &s.o - DVector::from_element(p.n(), 0.5);
    (dx, d_o)
}

/// Componentwise evaluation of the vector field on the joint vector
/// `z = [x; o]`, with pinned opinions held still.
struct VectorField<'a> {
    p: &'a SystemParams,
    pinned: Vec<bool>,
}

impl<'a> VectorField<'a> {
    fn new(p: &'a SystemParams, stubborn: Option<&StubbornSpec>) -> Self {
        let mut pinned = vec![false; p.n()];
        if let Some(spec) = stubborn {
            for (i, _) in spec.iter() {
                pinned[i] = true;
            }
        }
        Self { p, pinned }
    }

    fn eval(&self, z: &[f64], gauge: &GaugeVector, out: &mut [f64]) {
        let p = self.p;
        let n = p.n();
        let (x, o) = z.split_at(n);
        let b = p.infection();
        let bmin = &p.infection_min;
        let a = p.opinion_graph.magnitudes();
        let signs = gauge.signs();
        for i in 0..n {
            let shifted = o[i] + 0.5;
            let heal = p.delta_min + (p.healing[i] - p.delta_min) * shifted;
            let mut pressure = 0.0;
            let mut exchange = 0.0;
            for j in 0..n {
                let bij = b[(i, j)];
                if bij != 0.0 {
                    pressure += (bij - (bij - bmin[(i, j)]) * shifted) * x[j];
                }
                let aij = a[(i, j)];
                if aij != 0.0 {
                    let oj = if signs[i] == signs[j] { o[j] } else { -o[j] };
                    exchange += aij * (oj - o[i]);
                }
            }
            out[i] = -heal * x[i] + (1.0 - x[i]) * pressure;
            out[n + i] = if self.pinned[i] {
                0.0
            } else {
                x[i] - shifted + exchange
            };
        }
    }

    fn rk4(&self, z: &[f64], h: f64, gauge: &GaugeVector) -> Vec<f64> {
        let m = z.len();
        let mut k1 = vec![0.0; m];
        let mut k2 = vec![0.0; m];
        let mut k3 = vec![0.0; m];
        let mut k4 = vec![0.0; m];
        let mut tmp = vec![0.0; m];
        self.eval(z, gauge, &mut k1);
        for k in 0..m {
            tmp[k] = z[k] + 0.5 * h * k1[k];
        }
        self.eval(&tmp, gauge, &mut k2);
        for k in 0..m {
            tmp[k] = z[k] + 0.5 * h * k2[k];
        }
        self.eval(&tmp, gauge, &mut k3);
        for k in 0..m {
            tmp[k] = z[k] + h * k3[k];
        }
        self.eval(&tmp, gauge, &mut k4);
        for k in 0..m {
            tmp[k] = z[k] + h / 6.0 * (k1[k] + 2.0 * k2[k] + 2.0 * k3[k] + k4[k]);
        }
        tmp
    }
}

fn opinion_gauge(z: &[f64]) -> GaugeVector {
    GaugeVector::from_opinions(&z[z.len() / 2..])
}

/// A community's opinion changed sign.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SwitchEvent {
    /// Absolute time in a [`Trajectory`]; offset from the step start in a
    /// [`StepOutcome`].
    pub time: f64,
    pub community: usize,
    pub old_sign: i8,
    pub new_sign: i8,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    /// Projected state at the end of the step.
    pub state: State,
    pub events: Vec<SwitchEvent>,
    /// Box violation of the un-projected RK4 result.
    pub box_violation: f64,
    /// True if the split budget ran out and the rest of the step used a
    /// frozen gauge.
    pub split_budget_exhausted: bool,
}

fn apply_pins(s: &State, stubborn: Option<&StubbornSpec>) -> Result<State, DynamicsError> {
    let mut s = s.clone();
    if let Some(spec) = stubborn {
        for (i, v) in spec.iter() {
            if i >= s.n() {
                return Err(DynamicsError::StubbornOutOfRange(i));
            }
            s.o[i] = v;
        }
    }
    Ok(s)
}

/// One RK4 step of length `h`, split at opinion sign changes.
pub fn step(
    p: &SystemParams,
    s: &State,
    h: f64,
    stubborn: Option<&StubbornSpec>,
) -> Result<StepOutcome, DynamicsError> {
    if !(h > 0.0 && h.is_finite()) {
        return Err(DynamicsError::InvalidIntegrator);
    }
    if s.n() != p.n() {
        return Err(DynamicsError::InvalidState("state size differs from params"));
    }
    let s = apply_pins(s, stubborn)?;
    let field = VectorField::new(p, stubborn);
    advance(&field, &s, h)
}

fn advance(field: &VectorField<'_>, s: &State, h: f64) -> Result<StepOutcome, DynamicsError> {
    let mut z = s.to_vec();
    let mut gauge = s.gauge();
    let mut events = Vec::new();
    let mut offset = 0.0;
    let mut remaining = h;
    let mut splits = 0;
    let mut exhausted = false;
    loop {
        let trial = field.rk4(&z, remaining, &gauge);
        let trial_gauge = opinion_gauge(&trial);
        if trial_gauge == gauge {
            z = trial;
            break;
        }
        if splits >= MAX_SPLITS_PER_STEP {
            exhausted = true;
            z = trial;
            break;
        }
        let (mut lo, mut hi) = (0.0, remaining);
        let mut at_hi = trial;
        while hi - lo > h * SWITCH_RESOLUTION {
            let mid = 0.5 * (lo + hi);
            let probe = field.rk4(&z, mid, &gauge);
            if opinion_gauge(&probe) != gauge {
                hi = mid;
                at_hi = probe;
            } else {
                lo = mid;
            }
        }
        let new_gauge = opinion_gauge(&at_hi);
        for i in gauge.differences(&new_gauge) {
            events.push(SwitchEvent {
                time: offset + hi,
                community: i,
                old_sign: gauge.signs()[i],
                new_sign: new_gauge.signs()[i],
            });
        }
        z = at_hi;
        gauge = new_gauge;
        offset += hi;
        remaining -= hi;
        splits += 1;
        if remaining <= h * 1e-12 {
            break;
        }
    }
    let mut state = State::from_joint(&z);
    let box_violation = state.box_violation();
    if box_violation > STEP_VIOLATION_LIMIT {
        return Err(DynamicsError::StepTooLarge {
            violation: box_violation,
            time: offset,
        });
    }
    state.project();
    Ok(StepOutcome {
        state,
        events,
        box_violation,
        split_budget_exhausted: exhausted,
    })
}

/// Fixed-step integration settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Integrator {
    pub h: f64,
    pub horizon: f64,
    /// Record every k-th step (the final step is always recorded).
    pub record_every: usize,
}

impl Default for Integrator {
    fn default() -> Self {
        Self {
            h: 0.01,
            horizon: 500.0,
            record_every: 10,
        }
    }
}

impl Integrator {
    pub fn new(h: f64, horizon: f64, record_every: usize) -> Self {
        Self {
            h,
            horizon,
            record_every,
        }
    }

    fn validate(&self) -> Result<(), DynamicsError> {
        if !(self.h > 0.0 && self.h.is_finite() && self.horizon >= 0.0 && self.horizon.is_finite())
            || self.record_every == 0
        {
            return Err(DynamicsError::InvalidIntegrator);
        }
        Ok(())
    }

    pub fn step_count(&self) -> usize {
        if self.horizon == 0.0 {
            0
        } else {
            libm::ceil(self.horizon / self.h - 1e-9) as usize
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<State>,
    /// Reproduction number at each recorded instant.
    pub r_values: Vec<f64>,
    /// Cumulative number of switch events up to each recorded instant.
    pub switch_counts: Vec<usize>,
    pub switch_events: Vec<SwitchEvent>,
    /// Communities whose opinion crossed zero more than
    /// [`SLIDING_CROSSINGS`] times within one time unit.
    pub sliding: Vec<usize>,
    /// Largest un-projected box violation over all steps.
    pub max_box_violation: f64,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn final_state(&self) -> Option<&State> {
        self.states.last()
    }

    fn record(&mut self, p: &SystemParams, t: f64, s: &State) -> Result<(), DynamicsError> {
        self.times.push(t);
        self.r_values.push(reproduction_number(p, &s.o)?);
        self.switch_counts.push(self.switch_events.len());
        self.states.push(s.clone());
        Ok(())
    }
}

/// Integrates from `s0` over `[0, horizon]`.
pub fn simulate(
    p: &SystemParams,
    s0: &State,
    integrator: &Integrator,
    stubborn: Option<&StubbornSpec>,
) -> Result<Trajectory, DynamicsError> {
    integrator.validate()?;
    if s0.n() != p.n() {
        return Err(DynamicsError::InvalidState("state size differs from params"));
    }
    let field = VectorField::new(p, stubborn);
    let mut s = apply_pins(s0, stubborn)?;
    let mut traj = Trajectory::default();
    traj.record(p, 0.0, &s)?;

    let steps = integrator.step_count();
    let mut crossings: Vec<VecDeque<f64>> = vec![VecDeque::new(); p.n()];
    let mut sliding = vec![false; p.n()];
    let mut t = 0.0;
    for k in 1..=steps {
        let t_next = if k == steps {
            integrator.horizon
        } else {
            k as f64 * integrator.h
        };
        let out = advance(&field, &s, t_next - t).map_err(|e| match e {
            DynamicsError::StepTooLarge { violation, time } => DynamicsError::StepTooLarge {
                violation,
                time: t + time,
            },
            other => other,
        })?;
        traj.max_box_violation = traj.max_box_violation.max(out.box_violation);
        for mut ev in out.events {
            ev.time += t;
            let window = &mut crossings[ev.community];
            window.push_back(ev.time);
            while window.front().is_some_and(|&t0| ev.time - t0 > 1.0) {
                window.pop_front();
            }
            if window.len() > SLIDING_CROSSINGS {
                sliding[ev.community] = true;
            }
            traj.switch_events.push(ev);
        }
        s = out.state;
        t = t_next;
        if k % integrator.record_every == 0 || k == steps {
            traj.record(p, t, &s)?;
        }
    }
    traj.sliding = sliding
        .iter()
        .enumerate()
        .filter(|(_, &f)| f)
        .map(|(i, _)| i)
        .collect();
    Ok(traj)
}
