//! Scenario execution behind each subcommand.

use std::fs;
use std::path::Path;

use coepi_core::analysis::{
    classify_regime, consensus_healthy_equilibrium, dissensus_healthy_equilibria,
    endemic_equilibrium, finite_difference_jacobian, jacobian_at, AnalysisError, EndemicOptions,
    EnumerationOptions, Regime,
};
use coepi_core::control::{
    select_stubborn_extreme, uniform_threshold, verify_plan, InterventionPlan, SearchMode,
    VerifyOptions,
};
use coepi_core::{simulate, stream, EquilibriumReport, State, Trajectory};
use rand::Rng;
use serde::Serialize;

use crate::config::Scenario;
use crate::error::CliError;
use crate::output::{
    write_plot_file, write_trajectory_file, EquilibriumSummary, PlanSummary, Summary,
    ThresholdSummary, HEALTHY_TOL,
};

pub const TRAJECTORY_FILE: &str = "trajectory.csv";
pub const SUMMARY_FILE: &str = "summary.toml";
pub const PLOT_FILE: &str = "plot.dat";

/// Sub-stream for the random states of `jacobian-check`.
pub const JACOBIAN_TASK: u64 = 2;

pub fn ensure_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

fn write_run_artifacts(sc: &Scenario, out: &Path, traj: &Trajectory, summary: &Summary) -> Result<(), CliError> {
    ensure_dir(out)?;
    if sc.outputs.trajectory {
        write_trajectory_file(&out.join(TRAJECTORY_FILE), traj)?;
    }
    if sc.outputs.plot {
        write_plot_file(&out.join(PLOT_FILE), traj)?;
    }
    if sc.outputs.summary {
        summary.write(&out.join(SUMMARY_FILE))?;
    }
    Ok(())
}

/// Simulates the scenario (with its stubborn pins, if any) and writes the
/// requested artifacts to `out`.
pub fn run(sc: &Scenario, out: &Path) -> Result<Summary, CliError> {
    let regime = classify_regime(&sc.params)?;
    let mut summary = Summary::from_regime(&regime);
    let pins = (!sc.stubborn.is_empty()).then_some(&sc.stubborn);
    let traj = simulate(&sc.params, &sc.initial, &sc.integrator, pins)?;
    summary.record_trajectory(&traj);
    if let Some(spec) = pins {
        let mut plan = InterventionPlan::new(&sc.params, spec.clone())?;
        plan.verified = summary.final_sup_x.is_some_and(|v| v < HEALTHY_TOL);
        summary.plan = Some(PlanSummary::from(&plan));
    }
    if sc.outputs.equilibria {
        summary.equilibria = equilibria(sc, &EnumerationOptions::default())?
            .iter()
            .map(EquilibriumSummary::from)
            .collect();
    }
    write_run_artifacts(sc, out, &traj, &summary)?;
    Ok(summary)
}

pub fn classify(sc: &Scenario) -> Result<Summary, CliError> {
    Ok(Summary::from_regime(&classify_regime(&sc.params)?))
}

/// Consensus-healthy, every self-consistent dissensus-healthy point, and in
/// outbreak regimes the endemic point reached from the initial state.
pub fn equilibria(sc: &Scenario, opts: &EnumerationOptions) -> Result<Vec<EquilibriumReport>, CliError> {
    let mut all = vec![consensus_healthy_equilibrium(&sc.params)?];
    all.extend(dissensus_healthy_equilibria(&sc.params, opts)?);
    let regime = classify_regime(&sc.params)?.regime;
    if matches!(regime, Regime::Severe | Regime::Moderate) {
        match endemic_equilibrium(&sc.params, &sc.initial, &EndemicOptions::default()) {
            Ok(Some(eq)) => all.push(eq),
            Ok(None) | Err(AnalysisError::NoInfection) => {}
            Err(e) => return Err(e.into()),
        }
    }
    Ok(all)
}

pub fn equilibria_summary(sc: &Scenario, opts: &EnumerationOptions) -> Result<Summary, CliError> {
    let mut s = classify(sc)?;
    s.equilibria = equilibria(sc, opts)?
        .iter()
        .map(EquilibriumSummary::from)
        .collect();
    Ok(s)
}

pub fn threshold(sc: &Scenario, tol: f64) -> Result<Summary, CliError> {
    let mut s = classify(sc)?;
    let t = uniform_threshold(&sc.params, tol)?;
    s.threshold = Some(ThresholdSummary {
        alpha: t.alpha,
        r_at_alpha: t.r_at_alpha,
        residual: t.residual,
        boundary: t.boundary,
    });
    Ok(s)
}

pub fn select_stubborn(sc: &Scenario, mode: SearchMode) -> Result<Summary, CliError> {
    let mut s = classify(sc)?;
    let plan = select_stubborn_extreme(&sc.params, mode)?;
    s.plan = Some(PlanSummary::from(&plan));
    Ok(s)
}

/// Verifies the scenario's own stubborn set, or a freshly selected one when
/// the scenario pins nobody.
pub fn verify(sc: &Scenario, mode: SearchMode, out: &Path) -> Result<Summary, CliError> {
    let mut s = classify(sc)?;
    let plan = if sc.stubborn.is_empty() {
        select_stubborn_extreme(&sc.params, mode)?
    } else {
        InterventionPlan::new(&sc.params, sc.stubborn.clone())?
    };
    let opts = VerifyOptions {
        horizon: sc.integrator.horizon,
        h: sc.integrator.h,
        record_every: sc.integrator.record_every,
        ..VerifyOptions::default()
    };
    let (checked, traj) = verify_plan(&sc.params, &plan, &sc.initial, &opts)?;
    s.record_trajectory(&traj);
    s.plan = Some(PlanSummary::from(&checked));
    write_run_artifacts(sc, out, &traj, &s)?;
    Ok(s)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct JacobianCheck {
    pub samples: usize,
    pub step: f64,
    pub tolerance: f64,
    pub max_abs_error: f64,
    pub passed: bool,
}

/// Compares the analytic Jacobian with central differences at random
/// states kept at least `10 * step` away from the switching surface.
pub fn jacobian_check(sc: &Scenario, samples: usize, step: f64, tolerance: f64) -> Result<JacobianCheck, CliError> {
    let n = sc.params.n();
    let mut rng = stream(sc.seed, JACOBIAN_TASK);
    let margin = 10.0 * step;
    let mut worst: f64 = 0.0;
    for _ in 0..samples {
        let x: Vec<f64> = (0..n).map(|_| rng.random_range(margin..=1.0 - margin)).collect();
        let o: Vec<f64> = (0..n)
            .map(|_| {
                let mag = rng.random_range(margin..=0.5 - margin);
                if rng.random::<bool>() {
                    mag
                } else {
                    -mag
                }
            })
            .collect();
        let s = State::from_slices(&x, &o)?;
        let analytic = jacobian_at(&sc.params, &s)?;
        let fd = finite_difference_jacobian(&sc.params, &s, step);
        worst = worst.max((analytic - fd).amax());
    }
    Ok(JacobianCheck {
        samples,
        step,
        tolerance,
        max_abs_error: worst,
        passed: worst <= tolerance,
    })
}
