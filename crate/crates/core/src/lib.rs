//! Coupled networked SIS epidemic and signed opinion dynamics.
//!
//! Communities carry an infected fraction `x_i ∈ [0, 1]` and an opinion
//! `o_i ∈ [-0.5, 0.5]` about the severity of the epidemic. Opinions scale
//! each community's healing and infection rates, infections push opinions
//! upward, and opinions are exchanged over a signed graph whose edge signs
//! follow the current opinion signs (a gauge transformation of a fixed
//! magnitude graph).
//!
//! The crate is `no_std` (it needs `alloc`). Everything here is pure
//! computation on immutable parameter sets:
//!
//! * [`graph`]: weighted digraphs, Laplacians, gauge vectors.
//! * [`spectral`]: Perron roots, spectral abscissae, dense spectra.
//! * [`dynamics`]: the vector field, the switch-aware RK4 integrator.
//! * [`analysis`]: reproduction numbers, regimes, equilibria, Jacobians.
//! * [`control`]: threshold opinions and stubborn-community plans.
//!
//! Matrix entry `(i, j)` is always the weight of the edge `j → i`
//! ("community `j` can infect / influence community `i`").

#![no_std]

extern crate alloc;

pub mod analysis;
pub mod control;
pub mod dynamics;
pub mod graph;
pub mod spectral;

mod rng;

pub use nalgebra::{DMatrix, DVector};

pub use analysis::{
    classify_regime, reproduction_number, AnalysisError, EquilibriumClass, EquilibriumReport,
    Regime, RegimeReport, Verdict,
};
pub use control::{ControlError, InterventionPlan, SearchMode, StubbornSpec};
pub use dynamics::{simulate, step, DynamicsError, Integrator, State, SystemParams, Trajectory};
pub use graph::{DirectedWeightedGraph, GaugeVector, GraphError, OpinionMagnitudeGraph};
pub use spectral::{Eigenpair, SpectralError};
pub use rng::stream;
