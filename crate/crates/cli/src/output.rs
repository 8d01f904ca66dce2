//! Trajectory CSV, summary report and plot data.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use coepi_core::analysis::{opinion_outcome, EquilibriumReport};
use coepi_core::control::InterventionPlan;
use coepi_core::{RegimeReport, Trajectory};
use serde::{Deserialize, Serialize};

use crate::config::Pin;
use crate::error::CliError;

/// `x(T)` sup-norm under which a run reports `healthy`.
pub const HEALTHY_TOL: f64 = 1e-6;
/// `min_i x_i(T)` above which a run reports `endemic`.
pub const ENDEMIC_FLOOR: f64 = 1e-3;
/// Tolerance for calling the final opinions `-0.5 e`.
pub const CONSENSUS_TOL: f64 = 1e-6;

pub fn trajectory_header(n: usize) -> Vec<String> {
    let mut h = vec!["t".to_string()];
    h.extend((1..=n).map(|i| format!("x_{i}")));
    h.extend((1..=n).map(|i| format!("o_{i}")));
    h.push("R_t_o".into());
    h.push("n_switches_cum".into());
    h
}

/// 17 significant digits, so values parse back bit for bit.
pub fn fmt_float(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn write_trajectory<W: Write>(w: W, traj: &Trajectory) -> Result<(), CliError> {
    let n = traj.states.first().map_or(0, |s| s.n());
    let mut out = csv::Writer::from_writer(w);
    out.write_record(trajectory_header(n))?;
    for k in 0..traj.len() {
        let s = &traj.states[k];
        let mut row = Vec::with_capacity(2 * n + 3);
        row.push(fmt_float(traj.times[k]));
        row.extend(s.x.iter().map(|&v| fmt_float(v)));
        row.extend(s.o.iter().map(|&v| fmt_float(v)));
        row.push(fmt_float(traj.r_values[k]));
        row.push(traj.switch_counts[k].to_string());
        out.write_record(&row)?;
    }
    out.flush().map_err(|e| CliError::Config(format!("writing trajectory: {e}")))?;
    Ok(())
}

pub fn write_trajectory_file(path: &Path, traj: &Trajectory) -> Result<(), CliError> {
    let f = File::create(path).map_err(|e| CliError::io(path, e))?;
    write_trajectory(BufWriter::new(f), traj)
}

/// Header and numeric rows of a trajectory CSV.
pub fn read_trajectory(path: &Path) -> Result<(Vec<String>, Vec<Vec<f64>>), CliError> {
    let mut r = csv::Reader::from_path(path)?;
    let header = r.headers()?.iter().map(str::to_string).collect();
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let row = rec
            .iter()
            .map(|f| {
                f.parse::<f64>().map_err(|e| CliError::Parse {
                    path: path.to_path_buf(),
                    message: format!("{f:?}: {e}"),
                })
            })
            .collect::<Result<_, _>>()?;
        rows.push(row);
    }
    Ok((header, rows))
}

/// Whitespace-separated columns for gnuplot and friends.
pub fn write_plot_file(path: &Path, traj: &Trajectory) -> Result<(), CliError> {
    let f = File::create(path).map_err(|e| CliError::io(path, e))?;
    let mut w = BufWriter::new(f);
    let io = |e| CliError::io(path, e);
    writeln!(w, "# t sup_x mean_x min_o max_o mean_o R_t_o n_switches_cum").map_err(io)?;
    for k in 0..traj.len() {
        let s = &traj.states[k];
        let n = s.n() as f64;
        writeln!(
            w,
            "{} {} {} {} {} {} {} {}",
            fmt_float(traj.times[k]),
            fmt_float(s.sup_x()),
            fmt_float(s.x.sum() / n),
            fmt_float(s.o.min()),
            fmt_float(s.o.max()),
            fmt_float(s.o.sum() / n),
            fmt_float(traj.r_values[k]),
            traj.switch_counts[k],
        )
        .map_err(io)?;
    }
    w.flush().map_err(io)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquilibriumSummary {
    pub class: String,
    pub verdict: String,
    pub basis: String,
    pub jacobian_max_real: f64,
    #[serde(rename = "R")]
    pub r: f64,
    pub residual: f64,
    pub x: Vec<f64>,
    pub o: Vec<f64>,
}

impl From<&EquilibriumReport> for EquilibriumSummary {
    fn from(e: &EquilibriumReport) -> Self {
        Self {
            class: e.class.as_str().into(),
            verdict: e.verdict.as_str().into(),
            basis: match e.basis {
                coepi_core::analysis::VerdictBasis::ReproductionNumber => "reproduction-number",
                coepi_core::analysis::VerdictBasis::JacobianEmpirical => "jacobian-empirical",
            }
            .into(),
            jacobian_max_real: e.jacobian_max_real,
            r: e.r_at_equilibrium,
            residual: e.residual,
            x: e.point.x.iter().copied().collect(),
            o: e.point.o.iter().copied().collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanSummary {
    pub cardinality: usize,
    pub predicted_r: f64,
    pub verified: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub final_sup_x: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min_free_opinion: Option<f64>,
    /// 1-based.
    pub stubborn: Vec<Pin>,
}

impl From<&InterventionPlan> for PlanSummary {
    fn from(p: &InterventionPlan) -> Self {
        Self {
            cardinality: p.cardinality,
            predicted_r: p.predicted_r,
            verified: p.verified,
            final_sup_x: p.verification.as_ref().map(|v| v.final_sup_x),
            min_free_opinion: p.verification.as_ref().and_then(|v| v.min_free_opinion),
            stubborn: p
                .stubborn
                .iter()
                .map(|(i, value)| Pin {
                    community: i + 1,
                    value,
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdSummary {
    pub alpha: f64,
    #[serde(rename = "R_at_alpha")]
    pub r_at_alpha: f64,
    pub residual: f64,
    pub boundary: bool,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Summary {
    pub regime: String,
    #[serde(rename = "R_min")]
    pub r_min: f64,
    #[serde(rename = "R_max")]
    pub r_max: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub final_sup_x: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub final_min_x: Option<f64>,
    /// `healthy`, `endemic` or `unresolved`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epidemic_outcome: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub opinion_outcome: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub switch_events: Option<usize>,
    /// 1-based communities flagged as sliding on the switching surface.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub sliding: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threshold: Option<ThresholdSummary>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub plan: Option<PlanSummary>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub equilibria: Vec<EquilibriumSummary>,
}

impl Summary {
    pub fn from_regime(r: &RegimeReport) -> Self {
        Self {
            regime: r.regime.as_str().into(),
            r_min: r.r_min,
            r_max: r.r_max,
            ..Self::default()
        }
    }

    pub fn record_trajectory(&mut self, traj: &Trajectory) {
        let Some(last) = traj.final_state() else {
            return;
        };
        let sup = last.sup_x();
        let min = last.x.min();
        self.final_sup_x = Some(sup);
        self.final_min_x = Some(min);
        self.epidemic_outcome = Some(
            if sup < HEALTHY_TOL {
                "healthy"
            } else if min > ENDEMIC_FLOOR {
                "endemic"
            } else {
                "unresolved"
            }
            .into(),
        );
        self.opinion_outcome = Some(opinion_outcome(&last.o, CONSENSUS_TOL).as_str().into());
        self.switch_events = Some(traj.switch_events.len());
        self.sliding = traj.sliding.iter().map(|i| i + 1).collect();
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("summary serializes")
    }

    pub fn write(&self, path: &Path) -> Result<(), CliError> {
        fs::write(path, self.to_toml_string()).map_err(|e| CliError::io(path, e))
    }
}
