//! The `run` and `convergence` commands.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use super::config::{CaseSpec, MeshSpec, RunConfig};
use super::{vtk, CliError};
use crate::fespace::enumerate_dofs;
use crate::mesh::{quadrant_mesh, two_block, MultiblockMesh, SubdomainGrid};
use crate::mms::{
    constant_case, manufactured_case, pressure_error_linf_l2, run_convergence_study, steps_for,
    velocity_error_l2_l2, ErrorReport, ManufacturedCase, StudyOptions, VelocityNormalization,
};
use crate::solver::{
    run_transient, run_transient_compressible, CompressibilityParams, OperatorSet, Retention,
    ThetaConfig,
};

fn build_case(config: &RunConfig) -> Result<ManufacturedCase, CliError> {
    let mut case = match &config.case {
        CaseSpec::Named(name) => {
            manufactured_case(name).map_err(|e| CliError::Invalid(e.to_string()))?
        }
        CaseSpec::Custom { f, g, p0 } => {
            let final_time = config.final_time.ok_or_else(|| {
                CliError::Invalid("custom case needs an explicit T in [time]".into())
            })?;
            constant_case(*f, *g, *p0, final_time)
        }
    };
    if let Some(t) = config.final_time {
        case.final_time = t;
    }
    Ok(case)
}

fn build_mesh(spec: &MeshSpec) -> Result<MultiblockMesh, CliError> {
    let mesh = match spec {
        MeshSpec::Quadrant { h, big_h } => quadrant_mesh(*h, *big_h),
        MeshSpec::TwoBlock {
            nx_left,
            ny_left,
            nx_right,
            ny_right,
        } => two_block(*nx_left, *ny_left, *nx_right, *ny_right),
        MeshSpec::Blocks(blocks) => {
            let grids = blocks
                .iter()
                .enumerate()
                .map(|(id, b)| SubdomainGrid::new(id, b.x0, b.x1, b.y0, b.y1, b.nx, b.ny))
                .collect::<Result<Vec<_>, _>>();
            grids.and_then(MultiblockMesh::build)
        }
    };
    mesh.map_err(|e| CliError::Invalid(e.to_string()))
}

fn format_sci(x: f64) -> String {
    format!("{x:.5e}")
}

#[derive(Debug)]
pub struct ConvergenceOutcome {
    pub csv_path: PathBuf,
    pub failed_levels: usize,
    pub report: ErrorReport,
}

/// Run a convergence study and write `convergence.csv` into the output
/// directory. The CSV is byte-identical for identical configurations: fixed
/// column order, fixed scientific notation with six significant digits and
/// rates between consecutive levels (blank on the first row).
pub fn cmd_convergence(config: &RunConfig, out_dir: &Path) -> Result<ConvergenceOutcome, CliError> {
    if config.levels.is_empty() {
        return Err(CliError::Invalid(
            "convergence study needs at least one [level]".into(),
        ));
    }
    let case = build_case(config)?;
    if case.exact.is_none() {
        return Err(CliError::Invalid(format!(
            "case '{}' has no exact solution; convergence needs one",
            case.name
        )));
    }
    let options = StudyOptions {
        theta: config.theta,
        solve_tol: config.solve_tol,
        normalization: VelocityNormalization::GlobalRatio,
    };
    let report = run_convergence_study(&case, &config.levels, options);

    std::fs::create_dir_all(out_dir).map_err(|e| CliError::Io {
        path: out_dir.to_path_buf(),
        source: e,
    })?;
    let csv_path = out_dir.join("convergence.csv");
    let mut text = String::from("level,h,H,dt,theta,error_p,error_u,rate_p,rate_u,status\n");
    let rates = report.rate_pairs();
    let mut failed = 0usize;
    for (i, outcome) in report.levels.iter().enumerate() {
        let l = outcome.level;
        write!(
            text,
            "{},{},{},{},{}",
            i + 1,
            format_sci(l.h),
            format_sci(l.big_h),
            format_sci(l.dt),
            format_sci(report.theta),
        )
        .unwrap();
        match &outcome.result {
            Ok(errors) => {
                write!(
                    text,
                    ",{},{}",
                    format_sci(errors.error_p),
                    format_sci(errors.error_u)
                )
                .unwrap();
                match rates[i] {
                    Some((rp, ru)) => {
                        write!(text, ",{},{}", format_sci(rp), format_sci(ru)).unwrap()
                    }
                    None => write!(text, ",,").unwrap(),
                }
                let status = if errors.velocity_normalized {
                    "ok"
                } else {
                    "ok(absolute-velocity-norm)"
                };
                writeln!(text, ",{status}").unwrap();
            }
            Err(message) => {
                failed += 1;
                let clean = message.replace(',', ";").replace('\n', " ");
                writeln!(text, ",,,,,{clean}").unwrap();
            }
        }
    }
    let mut file = std::fs::File::create(&csv_path).map_err(|e| CliError::Io {
        path: csv_path.clone(),
        source: e,
    })?;
    file.write_all(text.as_bytes()).map_err(|e| CliError::Io {
        path: csv_path.clone(),
        source: e,
    })?;

    Ok(ConvergenceOutcome {
        csv_path,
        failed_levels: failed,
        report,
    })
}

#[derive(Debug)]
pub struct RunSummary {
    pub case_name: String,
    pub cells: usize,
    pub steps: usize,
    pub final_time: f64,
    pub error_p: Option<f64>,
    pub error_u: Option<(f64, bool)>,
    pub files: Vec<PathBuf>,
}

impl RunSummary {
    /// The one-line human summary printed after a run.
    pub fn line(&self) -> String {
        let mut s = format!(
            "run complete: case={} cells={} steps={} T={}",
            self.case_name,
            self.cells,
            self.steps,
            format_sci(self.final_time)
        );
        if let Some(ep) = self.error_p {
            write!(s, " error_p={}", format_sci(ep)).unwrap();
        }
        if let Some((eu, normalized)) = self.error_u {
            write!(s, " error_u={}", format_sci(eu)).unwrap();
            if !normalized {
                s.push_str(" (absolute)");
            }
        }
        s
    }
}

/// Run one transient solve, optionally dumping per-subdomain pressure
/// fields at selected times and reporting errors when the case has an exact
/// solution.
pub fn cmd_run(config: &RunConfig, out_dir: &Path) -> Result<RunSummary, CliError> {
    let case = build_case(config)?;
    let mesh_spec = config
        .mesh
        .as_ref()
        .ok_or_else(|| CliError::Invalid("run needs a [mesh] section".into()))?;
    let dt = config
        .dt
        .ok_or_else(|| CliError::Invalid("run needs dt in [time]".into()))?;
    let n_steps =
        steps_for(case.final_time, dt).map_err(|e| CliError::Invalid(e.to_string()))?;

    let mesh = build_mesh(mesh_spec)?;
    let dofmap = enumerate_dofs(&mesh);
    let k = case.permeability_field(dofmap.pressure_len());
    let ops = OperatorSet::build(&dofmap, &k).map_err(|e| CliError::Solver(e.to_string()))?;
    let cfg = ThetaConfig::new(config.theta, dt, n_steps)
        .map_err(|e| CliError::Invalid(e.to_string()))?;

    let data = case.problem_data();
    let traj = match &config.compressible {
        None => run_transient(
            &dofmap,
            &ops,
            &data,
            cfg,
            config.solve_tol,
            Retention::All,
        )
        .map_err(|e| CliError::Solver(e.to_string()))?,
        Some(spec) => {
            let params = CompressibilityParams::new(
                spec.phi,
                spec.c_f,
                spec.rho_ref,
                spec.p_ref,
                spec.newton_tol,
                spec.newton_max_iter,
            )
            .map_err(|e| CliError::Invalid(e.to_string()))?;
            let (traj, _) = run_transient_compressible(
                &dofmap,
                &ops,
                &data,
                cfg,
                &params,
                config.solve_tol,
                Retention::All,
            )
            .map_err(|e| CliError::Solver(e.to_string()))?;
            traj
        }
    };

    let mut files = Vec::new();
    if config.dump {
        std::fs::create_dir_all(out_dir).map_err(|e| CliError::Io {
            path: out_dir.to_path_buf(),
            source: e,
        })?;
        let dump_times = if config.dump_times.is_empty() {
            vec![case.final_time]
        } else {
            config.dump_times.clone()
        };
        for &t in &dump_times {
            let step = ((t / dt).round() as usize).min(n_steps);
            let state = &traj.states[step];
            for grid in &mesh.grids {
                let offset = dofmap.cell_index(grid.id, 0, 0);
                let values = &state.pressure.values[offset..offset + grid.cell_count()];
                let name = format!("pressure_g{:02}_n{:05}.vtk", grid.id, step);
                let path = out_dir.join(name);
                let title = format!("pressure t={:.6e}", state.time);
                vtk::write_structured_points(&path, &title, grid, values).map_err(|e| {
                    CliError::Io {
                        path: path.clone(),
                        source: e,
                    }
                })?;
                files.push(path);
            }
        }
    }

    let (error_p, error_u) = match &case.exact {
        Some(exact) => {
            let ep = pressure_error_linf_l2(&traj, &*exact.pressure, &dofmap);
            let eu = velocity_error_l2_l2(
                &traj,
                &*exact.velocity,
                &dofmap,
                dt,
                VelocityNormalization::GlobalRatio,
            );
            (Some(ep), Some((eu.value, eu.normalized)))
        }
        None => (None, None),
    };

    Ok(RunSummary {
        case_name: case.name.clone(),
        cells: dofmap.pressure_len(),
        steps: n_steps,
        final_time: case.final_time,
        error_p,
        error_u,
        files,
    })
}
