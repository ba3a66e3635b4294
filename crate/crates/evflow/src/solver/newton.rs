//! Newton stepper for slightly compressible flow, backward Euler in time.
//!
//! Density is linearized about the reference state, rho = rho_ref (1 + c_f
//! (p - p_ref)), and the relative density rho / rho_ref weights both the
//! accumulation and the edge fluxes of the cell-centered mass balance:
//!
//! ```text
//!   |c| phi rho~(P_c) (P_c - P_c^n) / dt
//!       + sum_e sign l_e rho~_e U_e(P) = |c| f(center, t^{n+1}),
//! ```
//!
//! with U = M^-1 (B^T P + G) and rho~_e the arithmetic average of the two
//! adjacent cell densities (one-sided on the boundary). At c_f = 0 and
//! phi = 1 this is exactly the linear backward Euler step; the residual is
//! quadratic in P otherwise. The Newton matrix keeps the analytic
//! accumulation derivative and freezes the edge densities of the flux term,
//! which preserves symmetry so every correction solves an SPD Schur system;
//! the dropped terms are O(c_f) and do not impede convergence for slight
//! compressibility.

use thiserror::Error;

use super::spd::{SolveError, SpdSolver};
use super::{
    flux_from_pressure, schur_matrix, DiscreteState, OperatorSet, ProblemData, Retention,
    SolverError, StepMeta, ThetaConfig, ThetaFlux, Trajectory,
};
use crate::assembly::{assemble_boundary_term, assemble_initial_pressure, assemble_source};
use crate::fespace::{DofMap, PressureVector};

#[derive(Debug, Error)]
pub enum NewtonError {
    #[error("invalid compressibility parameters: {0}")]
    BadParams(String),
    #[error("nonlinear mode requires theta = 1, got {0}")]
    RequiresBackwardEuler(f64),
    #[error(
        "Newton did not converge in {max_iter} iterations at step {step}; residuals {history:?}"
    )]
    NonConvergence {
        step: usize,
        max_iter: usize,
        history: Vec<f64>,
    },
    #[error(transparent)]
    Solve(#[from] SolveError),
    #[error(transparent)]
    Solver(#[from] SolverError),
}

/// Fluid and rock parameters of the slightly compressible model.
#[derive(Debug, Clone, Copy)]
pub struct CompressibilityParams {
    pub phi: f64,
    pub c_f: f64,
    pub rho_ref: f64,
    pub p_ref: f64,
    pub newton_tol: f64,
    pub newton_max_iter: usize,
}

impl CompressibilityParams {
    pub fn new(
        phi: f64,
        c_f: f64,
        rho_ref: f64,
        p_ref: f64,
        newton_tol: f64,
        newton_max_iter: usize,
    ) -> Result<Self, NewtonError> {
        if !(phi > 0.0 && phi <= 1.0) {
            return Err(NewtonError::BadParams(format!(
                "porosity must lie in (0, 1], got {phi}"
            )));
        }
        if !(c_f >= 0.0 && c_f.is_finite()) {
            return Err(NewtonError::BadParams(format!(
                "compressibility must be nonnegative, got {c_f}"
            )));
        }
        if !(rho_ref > 0.0) {
            return Err(NewtonError::BadParams(format!(
                "reference density must be positive, got {rho_ref}"
            )));
        }
        if !(newton_tol > 0.0) || newton_max_iter == 0 {
            return Err(NewtonError::BadParams(
                "newton_tol must be positive and newton_max_iter nonzero".into(),
            ));
        }
        Ok(Self {
            phi,
            c_f,
            rho_ref,
            p_ref,
            newton_tol,
            newton_max_iter,
        })
    }

    /// Relative density rho / rho_ref at pressure p.
    fn relative_density(&self, p: f64) -> f64 {
        1.0 + self.c_f * (p - self.p_ref)
    }
}

/// Convergence record of one nonlinear step.
#[derive(Debug, Clone)]
pub struct NewtonReport {
    pub iterations: usize,
    /// Residual infinity norms, starting from the initial guess.
    pub residual_history: Vec<f64>,
}

fn edge_densities(dofmap: &DofMap, rho_cell: &[f64]) -> Vec<f64> {
    dofmap
        .velocity
        .iter()
        .map(|dof| match (dof.minus_cell, dof.plus_cell) {
            (Some(a), Some(b)) => 0.5 * (rho_cell[a] + rho_cell[b]),
            (Some(c), None) | (None, Some(c)) => rho_cell[c],
            (None, None) => unreachable!(),
        })
        .collect()
}

/// One backward Euler step of the slightly compressible system.
pub fn newton_slightly_compressible_step(
    state: &DiscreteState,
    dofmap: &DofMap,
    ops: &OperatorSet,
    params: &CompressibilityParams,
    dt: f64,
    data: &ProblemData<'_>,
    linear_tol: f64,
) -> Result<(DiscreteState, NewtonReport), NewtonError> {
    let n = dofmap.pressure_len();
    let t_next = state.time + dt;
    let f_vec = assemble_source(data.source, t_next, dofmap);
    let g_vec = assemble_boundary_term(data.boundary, t_next, dofmap);

    let mut p: Vec<f64> = state.pressure.values.clone();
    let mut history = Vec::new();

    let residual = |p: &[f64], rho_cell: &[f64], rho_edge: &[f64]| -> Vec<f64> {
        let flux = flux_from_pressure(p, &g_vec, ops);
        let weighted: Vec<f64> = flux
            .values
            .iter()
            .zip(rho_edge)
            .map(|(u, r)| u * r)
            .collect();
        let b_ru = ops.div.apply(&weighted);
        (0..n)
            .map(|c| {
                ops.cell_measures[c] * params.phi * rho_cell[c]
                    * (p[c] - state.pressure.values[c])
                    / dt
                    + b_ru[c]
                    - f_vec[c]
            })
            .collect()
    };

    for iter in 0..=params.newton_max_iter {
        let rho_cell: Vec<f64> = p.iter().map(|&pc| params.relative_density(pc)).collect();
        let rho_edge = edge_densities(dofmap, &rho_cell);
        let r = residual(&p, &rho_cell, &rho_edge);
        let r_inf = r.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        history.push(r_inf);
        if r_inf <= params.newton_tol {
            let flux = flux_from_pressure(&p, &g_vec, ops);
            return Ok((
                DiscreteState {
                    pressure: PressureVector { values: p },
                    flux,
                    time: t_next,
                },
                NewtonReport {
                    iterations: iter,
                    residual_history: history,
                },
            ));
        }
        if iter == params.newton_max_iter {
            break;
        }

        let accumulation: Vec<f64> = (0..n)
            .map(|c| {
                ops.cell_measures[c] * params.phi / dt
                    * (rho_cell[c] + params.c_f * (p[c] - state.pressure.values[c]))
            })
            .collect();
        let jacobian = schur_matrix(dofmap, &ops.mass, &accumulation, Some(&rho_edge));
        let solver = SpdSolver::new(jacobian)?;
        let neg_r: Vec<f64> = r.iter().map(|v| -v).collect();
        let delta = solver.solve(&neg_r, linear_tol)?;
        for (pc, dc) in p.iter_mut().zip(&delta) {
            *pc += dc;
        }
    }

    Err(NewtonError::NonConvergence {
        step: 0,
        max_iter: params.newton_max_iter,
        history,
    })
}

/// March the slightly compressible problem with backward Euler steps.
/// Returns the trajectory and the per-step Newton reports.
pub fn run_transient_compressible(
    dofmap: &DofMap,
    ops: &OperatorSet,
    data: &ProblemData<'_>,
    cfg: ThetaConfig,
    params: &CompressibilityParams,
    linear_tol: f64,
    retention: Retention,
) -> Result<(Trajectory, Vec<NewtonReport>), NewtonError> {
    if cfg.theta != 1.0 {
        return Err(NewtonError::RequiresBackwardEuler(cfg.theta));
    }
    let p0 = assemble_initial_pressure(data.initial, dofmap);
    let g0 = assemble_boundary_term(data.boundary, 0.0, dofmap);
    let u0 = flux_from_pressure(&p0.values, &g0, ops);
    let mut state = DiscreteState {
        pressure: p0,
        flux: u0,
        time: 0.0,
    };

    let mut states = vec![state.clone()];
    let mut theta_fluxes = Vec::new();
    let mut step_meta = Vec::new();
    let mut reports = Vec::with_capacity(cfg.n_steps);

    for step in 0..cfg.n_steps {
        let (next, report) = newton_slightly_compressible_step(
            &state, dofmap, ops, params, cfg.dt, data, linear_tol,
        )
        .map_err(|e| match e {
            NewtonError::NonConvergence {
                max_iter, history, ..
            } => NewtonError::NonConvergence {
                step,
                max_iter,
                history,
            },
            other => other,
        })?;
        step_meta.push(StepMeta {
            mass_residual_inf: *report.residual_history.last().unwrap_or(&0.0),
            rhs_norm: 1.0,
        });
        state = next;
        if retention == Retention::All {
            theta_fluxes.push(ThetaFlux {
                time: state.time,
                flux: state.flux.clone(),
            });
            states.push(state.clone());
        }
        reports.push(report);
    }
    if retention == Retention::FinalOnly {
        states.push(state);
    }

    Ok((
        Trajectory {
            states,
            theta_fluxes,
            step_meta,
        },
        reports,
    ))
}
