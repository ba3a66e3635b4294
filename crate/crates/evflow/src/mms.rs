//! Manufactured solutions, discrete error norms and convergence studies.
//!
//! A case prescribes a pressure field in closed form; forcing, boundary and
//! initial data are derived from it so the discretization error can be
//! measured exactly. The pressure error is the max-in-time discrete L2 norm
//! sampled at cell centers and time nodes; the velocity error is the
//! time-integrated discrete L2 norm of edge-midpoint normal components at
//! theta points, normalized by the same norm of the exact velocity. The two
//! norms deliberately sample different time sets: nodes for pressure, theta
//! points for velocity, which is what the scheme actually constrains.

use rayon::prelude::*;
use thiserror::Error;

use crate::assembly::PermeabilityField;
use crate::fespace::{enumerate_dofs, DofMap};
use crate::mesh::{quadrant_mesh, Axis};
use crate::solver::{
    run_transient, OperatorSet, ProblemData, Retention, ThetaConfig, Trajectory,
};

#[derive(Debug, Error)]
pub enum MmsError {
    #[error("unknown manufactured case '{0}'")]
    UnknownCase(String),
    #[error("case '{0}' has no exact solution to measure errors against")]
    NoExactSolution(String),
    #[error("time step {dt} does not divide final time {final_time}")]
    TimeStepMismatch { dt: f64, final_time: f64 },
    #[error("level spacing {spacing} does not tile the quadrant layout")]
    BadLevelSpacing { spacing: f64 },
}

type ScalarField = Box<dyn Fn(f64, f64, f64) -> f64 + Send + Sync>;
type VectorField = Box<dyn Fn(f64, f64, f64) -> (f64, f64) + Send + Sync>;
type InitialField = Box<dyn Fn(f64, f64) -> f64 + Send + Sync>;

/// Closed-form reference solution.
pub struct ExactSolution {
    pub pressure: ScalarField,
    pub velocity: VectorField,
}

/// A problem definition: data for the solver plus, when available, the exact
/// solution they were derived from.
pub struct ManufacturedCase {
    pub name: String,
    pub source: ScalarField,
    pub boundary: ScalarField,
    pub initial: InitialField,
    /// Constant diagonal permeability (kxx, kyy).
    pub permeability: (f64, f64),
    pub final_time: f64,
    pub exact: Option<ExactSolution>,
}

impl ManufacturedCase {
    pub fn problem_data(&self) -> ProblemData<'_> {
        ProblemData {
            source: &*self.source,
            boundary: &*self.boundary,
            initial: &*self.initial,
        }
    }

    pub fn permeability_field(&self, n_cells: usize) -> PermeabilityField {
        PermeabilityField::diagonal(n_cells, self.permeability.0, self.permeability.1)
            .expect("constant case permeability is positive")
    }
}

/// Construct a named case. `example1` is the polynomial solution
/// t x(1-x) y(1-y) on (0, 0.1]; `example2` is e^t sin(2 pi x) sin(2 pi y) on
/// (0, 2]; `cosine` is cos(t) sin(pi x) sin(pi y), used for time-order
/// studies. All use K = I and vanish on the boundary of the unit square.
pub fn manufactured_case(name: &str) -> Result<ManufacturedCase, MmsError> {
    use std::f64::consts::PI;
    match name {
        "example1" => {
            let p = |x: f64, y: f64, t: f64| t * x * (1.0 - x) * y * (1.0 - y);
            Ok(ManufacturedCase {
                name: name.into(),
                source: Box::new(|x, y, t| {
                    x * (1.0 - x) * y * (1.0 - y)
                        + 2.0 * t * (x * (1.0 - x) + y * (1.0 - y))
                }),
                boundary: Box::new(p),
                initial: Box::new(move |x, y| p(x, y, 0.0)),
                permeability: (1.0, 1.0),
                final_time: 0.1,
                exact: Some(ExactSolution {
                    pressure: Box::new(p),
                    velocity: Box::new(|x, y, t| {
                        (
                            -t * (1.0 - 2.0 * x) * y * (1.0 - y),
                            -t * x * (1.0 - x) * (1.0 - 2.0 * y),
                        )
                    }),
                }),
            })
        }
        "example2" => {
            let tau = 2.0 * PI;
            let p = move |x: f64, y: f64, t: f64| t.exp() * (tau * x).sin() * (tau * y).sin();
            Ok(ManufacturedCase {
                name: name.into(),
                source: Box::new(move |x, y, t| (1.0 + 8.0 * PI * PI) * p(x, y, t)),
                boundary: Box::new(p),
                initial: Box::new(move |x, y| p(x, y, 0.0)),
                permeability: (1.0, 1.0),
                final_time: 2.0,
                exact: Some(ExactSolution {
                    pressure: Box::new(p),
                    velocity: Box::new(move |x, y, t| {
                        let scale = -t.exp() * tau;
                        (
                            scale * (tau * x).cos() * (tau * y).sin(),
                            scale * (tau * x).sin() * (tau * y).cos(),
                        )
                    }),
                }),
            })
        }
        "cosine" => {
            let p = |x: f64, y: f64, t: f64| t.cos() * (PI * x).sin() * (PI * y).sin();
            Ok(ManufacturedCase {
                name: name.into(),
                source: Box::new(|x, y, t| {
                    (-t.sin() + 2.0 * PI * PI * t.cos()) * (PI * x).sin() * (PI * y).sin()
                }),
                boundary: Box::new(p),
                initial: Box::new(move |x, y| p(x, y, 0.0)),
                permeability: (1.0, 1.0),
                final_time: 1.0,
                exact: Some(ExactSolution {
                    pressure: Box::new(p),
                    velocity: Box::new(|x, y, t| {
                        let scale = -t.cos() * PI;
                        (
                            scale * (PI * x).cos() * (PI * y).sin(),
                            scale * (PI * x).sin() * (PI * y).cos(),
                        )
                    }),
                }),
            })
        }
        other => Err(MmsError::UnknownCase(other.into())),
    }
}

/// A case with constant data and no exact solution, for plain runs.
pub fn constant_case(f: f64, g: f64, p0: f64, final_time: f64) -> ManufacturedCase {
    ManufacturedCase {
        name: "custom".into(),
        source: Box::new(move |_, _, _| f),
        boundary: Box::new(move |_, _, _| g),
        initial: Box::new(move |_, _| p0),
        permeability: (1.0, 1.0),
        final_time,
        exact: None,
    }
}

/// Scale a case's solution amplitude; all data scale with it.
pub fn scale_case(case: ManufacturedCase, factor: f64) -> ManufacturedCase {
    let ManufacturedCase {
        name,
        source,
        boundary,
        initial,
        permeability,
        final_time,
        exact,
    } = case;
    ManufacturedCase {
        name,
        source: Box::new(move |x, y, t| factor * source(x, y, t)),
        boundary: Box::new(move |x, y, t| factor * boundary(x, y, t)),
        initial: Box::new(move |x, y| factor * initial(x, y)),
        permeability,
        final_time,
        exact: exact.map(|e| {
            let ExactSolution { pressure, velocity } = e;
            ExactSolution {
                pressure: Box::new(move |x, y, t| factor * pressure(x, y, t)),
                velocity: Box::new(move |x, y, t| {
                    let (ux, uy) = velocity(x, y, t);
                    (factor * ux, factor * uy)
                }),
            }
        }),
    }
}

/// Max over time nodes of the cell-center discrete L2 pressure error.
pub fn pressure_error_linf_l2(
    traj: &Trajectory,
    exact_pressure: &(dyn Fn(f64, f64, f64) -> f64 + Sync),
    dofmap: &DofMap,
) -> f64 {
    traj.states
        .iter()
        .map(|state| {
            dofmap
                .cells
                .iter()
                .zip(&state.pressure.values)
                .map(|(c, ph)| {
                    let diff = exact_pressure(c.center.0, c.center.1, state.time) - ph;
                    c.area * diff * diff
                })
                .sum::<f64>()
                .sqrt()
        })
        .fold(0.0, f64::max)
}

/// How the velocity error is normalized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum VelocityNormalization {
    /// Ratio of global-in-time norms: l2-in-time of the error over
    /// l2-in-time of the exact velocity.
    #[default]
    GlobalRatio,
    /// Per-step relative errors combined by a time-averaged root mean
    /// square.
    PerStepRatio,
}

/// A velocity error value; `normalized` is false when the exact velocity
/// vanishes and the value falls back to the absolute norm.
#[derive(Debug, Clone, Copy)]
pub struct VelocityError {
    pub value: f64,
    pub normalized: bool,
}

/// Time-integrated discrete L2 velocity error over theta points. The
/// spatial norm weights squared edge-midpoint normal components by the
/// geometric mass weight (the trapezoidal mass entry at K = I), which makes
/// it a consistent approximation of the L2 norm.
pub fn velocity_error_l2_l2(
    traj: &Trajectory,
    exact_velocity: &(dyn Fn(f64, f64, f64) -> (f64, f64) + Sync),
    dofmap: &DofMap,
    dt: f64,
    normalization: VelocityNormalization,
) -> VelocityError {
    let unit_k = PermeabilityField::uniform(dofmap.pressure_len(), 1.0).unwrap();
    let weights = crate::assembly::assemble_velocity_mass(dofmap, &unit_k)
        .unwrap()
        .diag;
    let mut num_sq = 0.0;
    let mut den_sq = 0.0;
    let mut step_ratios_ok = true;
    let mut per_step_sq = 0.0;
    for tf in &traj.theta_fluxes {
        let mut step_num = 0.0;
        let mut step_den = 0.0;
        for (e, dof) in dofmap.velocity.iter().enumerate() {
            let (ux, uy) = exact_velocity(dof.midpoint.0, dof.midpoint.1, tf.time);
            let exact_n = match dof.axis {
                Axis::X => ux,
                Axis::Y => uy,
            };
            let diff = exact_n - tf.flux.values[e];
            step_num += weights[e] * diff * diff;
            step_den += weights[e] * exact_n * exact_n;
        }
        num_sq += dt * step_num;
        den_sq += dt * step_den;
        if step_den > 0.0 {
            per_step_sq += dt * step_num / step_den;
        } else {
            step_ratios_ok = false;
        }
    }
    match normalization {
        VelocityNormalization::GlobalRatio => {
            if den_sq > 0.0 {
                VelocityError {
                    value: (num_sq / den_sq).sqrt(),
                    normalized: true,
                }
            } else {
                VelocityError {
                    value: num_sq.sqrt(),
                    normalized: false,
                }
            }
        }
        VelocityNormalization::PerStepRatio => {
            let total_time = dt * traj.theta_fluxes.len() as f64;
            if step_ratios_ok && total_time > 0.0 {
                VelocityError {
                    value: (per_step_sq / total_time).sqrt(),
                    normalized: true,
                }
            } else {
                VelocityError {
                    value: num_sq.sqrt(),
                    normalized: false,
                }
            }
        }
    }
}

/// One refinement level of a study: fine spacing, coarse spacing, time step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StudyLevel {
    pub h: f64,
    pub big_h: f64,
    pub dt: f64,
}

#[derive(Debug, Clone, Copy)]
pub struct LevelErrors {
    pub error_p: f64,
    pub error_u: f64,
    pub velocity_normalized: bool,
    pub max_mass_residual: f64,
    pub max_rhs_norm: f64,
}

#[derive(Debug, Clone)]
pub struct LevelOutcome {
    pub level: StudyLevel,
    pub result: Result<LevelErrors, String>,
}

/// Per-level errors and observed pairwise log-log rates.
#[derive(Debug, Clone)]
pub struct ErrorReport {
    pub case_name: String,
    pub theta: f64,
    pub levels: Vec<LevelOutcome>,
}

impl ErrorReport {
    /// Rates between consecutive successful levels, computed against the
    /// fine spacing: log(e_prev / e_this) / log(h_prev / h_this). The first
    /// level has none.
    pub fn rate_pairs(&self) -> Vec<Option<(f64, f64)>> {
        let mut out = vec![None; self.levels.len()];
        for i in 1..self.levels.len() {
            let (prev, this) = (&self.levels[i - 1], &self.levels[i]);
            if let (Ok(ep), Ok(et)) = (&prev.result, &this.result) {
                let dh = (prev.level.h / this.level.h).ln();
                if dh.abs() > 0.0 && ep.error_p > 0.0 && et.error_p > 0.0 {
                    let rp = (ep.error_p / et.error_p).ln() / dh;
                    let ru = (ep.error_u / et.error_u).ln() / dh;
                    out[i] = Some((rp, ru));
                }
            }
        }
        out
    }

    /// Least-squares slope of log error_p against log h across all
    /// successful levels.
    pub fn pressure_slope(&self) -> Option<f64> {
        let pts: Vec<(f64, f64)> = self
            .levels
            .iter()
            .filter_map(|l| {
                l.result
                    .as_ref()
                    .ok()
                    .filter(|e| e.error_p > 0.0)
                    .map(|e| (l.level.h.ln(), e.error_p.ln()))
            })
            .collect();
        if pts.len() < 2 {
            return None;
        }
        let n = pts.len() as f64;
        let sx: f64 = pts.iter().map(|p| p.0).sum();
        let sy: f64 = pts.iter().map(|p| p.1).sum();
        let sxx: f64 = pts.iter().map(|p| p.0 * p.0).sum();
        let sxy: f64 = pts.iter().map(|p| p.0 * p.1).sum();
        Some((n * sxy - sx * sy) / (n * sxx - sx * sx))
    }
}

#[derive(Debug, Clone, Copy)]
pub struct StudyOptions {
    pub theta: f64,
    pub solve_tol: f64,
    pub normalization: VelocityNormalization,
}

impl Default for StudyOptions {
    fn default() -> Self {
        Self {
            theta: 1.0,
            solve_tol: crate::solver::DEFAULT_SOLVE_TOL,
            normalization: VelocityNormalization::GlobalRatio,
        }
    }
}

/// Number of steps implied by a final time and step, rejecting inexact fits.
pub fn steps_for(final_time: f64, dt: f64) -> Result<usize, MmsError> {
    let n = (final_time / dt).round();
    if n < 1.0 || (n * dt - final_time).abs() > 1e-9 * final_time {
        return Err(MmsError::TimeStepMismatch { dt, final_time });
    }
    Ok(n as usize)
}

/// Run one level on the quadrant mesh and measure both errors.
pub fn run_level(
    case: &ManufacturedCase,
    level: StudyLevel,
    options: &StudyOptions,
) -> Result<LevelErrors, String> {
    let exact = case
        .exact
        .as_ref()
        .ok_or_else(|| MmsError::NoExactSolution(case.name.clone()).to_string())?;
    let mesh = quadrant_mesh(level.h, level.big_h).map_err(|e| e.to_string())?;
    let dofmap = enumerate_dofs(&mesh);
    let k = case.permeability_field(dofmap.pressure_len());
    let ops = OperatorSet::build(&dofmap, &k).map_err(|e| e.to_string())?;
    let n_steps = steps_for(case.final_time, level.dt).map_err(|e| e.to_string())?;
    let cfg = ThetaConfig::new(options.theta, level.dt, n_steps).map_err(|e| e.to_string())?;
    let traj = run_transient(
        &dofmap,
        &ops,
        &case.problem_data(),
        cfg,
        options.solve_tol,
        Retention::All,
    )
    .map_err(|e| e.to_string())?;

    let error_p = pressure_error_linf_l2(&traj, &*exact.pressure, &dofmap);
    let eu = velocity_error_l2_l2(
        &traj,
        &*exact.velocity,
        &dofmap,
        level.dt,
        options.normalization,
    );
    let max_mass_residual = traj
        .step_meta
        .iter()
        .map(|m| m.mass_residual_inf)
        .fold(0.0, f64::max);
    let max_rhs_norm = traj
        .step_meta
        .iter()
        .map(|m| m.rhs_norm)
        .fold(0.0, f64::max);
    Ok(LevelErrors {
        error_p,
        error_u: eu.value,
        velocity_normalized: eu.normalized,
        max_mass_residual,
        max_rhs_norm,
    })
}

/// Run every level of a study; levels are independent and run in parallel,
/// failures are recorded per level and do not stop the others.
pub fn run_convergence_study(
    case: &ManufacturedCase,
    levels: &[StudyLevel],
    options: StudyOptions,
) -> ErrorReport {
    let outcomes: Vec<LevelOutcome> = levels
        .par_iter()
        .map(|&level| LevelOutcome {
            level,
            result: run_level(case, level, &options),
        })
        .collect();
    ErrorReport {
        case_name: case.name.clone(),
        theta: options.theta,
        levels: outcomes,
    }
}
