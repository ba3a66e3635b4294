//! Line-oriented configuration format.
//!
//! `key = value` pairs under `[section]` headers; `#` starts a comment.
//! Sections are `[case]`, `[time]`, `[mesh]`, `[solver]`, `[output]` and one
//! `[level]` per study level. Unknown sections or keys are rejected with
//! their line number. Numeric values accept plain floats and `a/b`
//! fractions, so grid spacings like `1/52` stay exact to parsing.
//!
//! ```text
//! [case]
//! name = example1
//!
//! [time]
//! theta = 1
//! T = 0.1
//!
//! [level]
//! h = 1/52
//! H = 1/26
//! dt = 1/50
//! ```

use std::fmt;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::mms::StudyLevel;

#[derive(Debug, Error)]
#[error("{path}:{line}: {message}")]
pub struct ConfigError {
    pub path: String,
    pub line: usize,
    pub message: String,
}

impl ConfigError {
    fn new(path: &str, line: usize, message: impl fmt::Display) -> Self {
        Self {
            path: path.to_string(),
            line,
            message: message.to_string(),
        }
    }
}

/// Which problem to solve.
#[derive(Debug, Clone, PartialEq)]
pub enum CaseSpec {
    Named(String),
    /// Constant data, no exact solution.
    Custom { f: f64, g: f64, p0: f64 },
}

/// Mesh layout for single runs.
#[derive(Debug, Clone, PartialEq)]
pub enum MeshSpec {
    Quadrant { h: f64, big_h: f64 },
    TwoBlock { nx_left: usize, ny_left: usize, nx_right: usize, ny_right: usize },
    Blocks(Vec<BlockSpec>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct BlockSpec {
    pub x0: f64,
    pub x1: f64,
    pub y0: f64,
    pub y1: f64,
    pub nx: usize,
    pub ny: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CompressibleSpec {
    pub c_f: f64,
    pub phi: f64,
    pub rho_ref: f64,
    pub p_ref: f64,
    pub newton_tol: f64,
    pub newton_max_iter: usize,
}

/// Fully parsed and validated run configuration.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub case: CaseSpec,
    pub theta: f64,
    /// Overrides the case's default final time when present.
    pub final_time: Option<f64>,
    /// Time step for single runs.
    pub dt: Option<f64>,
    pub mesh: Option<MeshSpec>,
    pub levels: Vec<StudyLevel>,
    pub solve_tol: f64,
    pub compressible: Option<CompressibleSpec>,
    pub output_dir: PathBuf,
    pub dump: bool,
    pub dump_times: Vec<f64>,
}

/// Parse a float, accepting `a/b` fractions.
pub fn parse_number(s: &str) -> Result<f64, String> {
    let s = s.trim();
    if let Some((num, den)) = s.split_once('/') {
        let n: f64 = num
            .trim()
            .parse()
            .map_err(|_| format!("invalid number '{s}'"))?;
        let d: f64 = den
            .trim()
            .parse()
            .map_err(|_| format!("invalid number '{s}'"))?;
        if d == 0.0 {
            return Err(format!("zero denominator in '{s}'"));
        }
        Ok(n / d)
    } else {
        s.parse().map_err(|_| format!("invalid number '{s}'"))
    }
}

fn parse_usize(s: &str) -> Result<usize, String> {
    s.trim()
        .parse()
        .map_err(|_| format!("invalid integer '{s}'"))
}

fn parse_bool(s: &str) -> Result<bool, String> {
    match s.trim() {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        other => Err(format!("invalid boolean '{other}'")),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Section {
    None,
    Case,
    Time,
    Mesh,
    Solver,
    Output,
    Level(usize),
}

#[derive(Default)]
struct RawLevel {
    h: Option<f64>,
    big_h: Option<f64>,
    dt: Option<f64>,
    line: usize,
}

pub fn parse_config(path: &Path) -> Result<RunConfig, ConfigError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| ConfigError::new(&path.display().to_string(), 0, e))?;
    parse_config_str(&text, &path.display().to_string())
}

pub fn parse_config_str(text: &str, path: &str) -> Result<RunConfig, ConfigError> {
    let mut section = Section::None;

    let mut case_name: Option<String> = None;
    let mut custom_f = None;
    let mut custom_g = None;
    let mut custom_p0 = None;

    let mut theta = 1.0;
    let mut final_time = None;
    let mut dt = None;

    let mut layout: Option<String> = None;
    let mut mesh_h = None;
    let mut mesh_big_h = None;
    let mut nx_left = None;
    let mut ny_left = None;
    let mut nx_right = None;
    let mut ny_right = None;
    let mut blocks: Vec<BlockSpec> = Vec::new();

    let mut solve_tol = crate::solver::DEFAULT_SOLVE_TOL;
    let mut compressible = false;
    let mut c_f = 0.0;
    let mut phi = 1.0;
    let mut rho_ref = 1.0;
    let mut p_ref = 0.0;
    let mut newton_tol = 1e-10;
    let mut newton_max_iter = 20usize;

    let mut output_dir = PathBuf::from(".");
    let mut dump = false;
    let mut dump_times = Vec::new();

    let mut levels: Vec<RawLevel> = Vec::new();

    let err = |line: usize, msg: &dyn fmt::Display| ConfigError::new(path, line, msg);

    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = match raw.find('#') {
            Some(pos) => &raw[..pos],
            None => raw,
        }
        .trim();
        if line.is_empty() {
            continue;
        }
        if let Some(name) = line.strip_prefix('[').and_then(|s| s.strip_suffix(']')) {
            section = match name.trim() {
                "case" => Section::Case,
                "time" => Section::Time,
                "mesh" => Section::Mesh,
                "solver" => Section::Solver,
                "output" => Section::Output,
                "level" => {
                    levels.push(RawLevel {
                        line: line_no,
                        ..RawLevel::default()
                    });
                    Section::Level(levels.len() - 1)
                }
                other => return Err(err(line_no, &format!("unknown section '[{other}]'"))),
            };
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| err(line_no, &"expected 'key = value'"))?;
        let key = key.trim();
        let value = value.trim();
        let num = |v: &str| parse_number(v).map_err(|m| err(line_no, &m));
        let int = |v: &str| parse_usize(v).map_err(|m| err(line_no, &m));
        let boolean = |v: &str| parse_bool(v).map_err(|m| err(line_no, &m));

        match section {
            Section::None => {
                return Err(err(line_no, &format!("key '{key}' outside any section")))
            }
            Section::Case => match key {
                "name" => case_name = Some(value.to_string()),
                "f" => custom_f = Some(num(value)?),
                "g" => custom_g = Some(num(value)?),
                "p0" => custom_p0 = Some(num(value)?),
                _ => return Err(err(line_no, &format!("unknown key '{key}' in [case]"))),
            },
            Section::Time => match key {
                "theta" => theta = num(value)?,
                "T" => final_time = Some(num(value)?),
                "dt" => dt = Some(num(value)?),
                _ => return Err(err(line_no, &format!("unknown key '{key}' in [time]"))),
            },
            Section::Mesh => match key {
                "layout" => layout = Some(value.to_string()),
                "h" => mesh_h = Some(num(value)?),
                "H" => mesh_big_h = Some(num(value)?),
                "nx_left" => nx_left = Some(int(value)?),
                "ny_left" => ny_left = Some(int(value)?),
                "nx_right" => nx_right = Some(int(value)?),
                "ny_right" => ny_right = Some(int(value)?),
                "block" => {
                    let parts: Vec<&str> = value.split_whitespace().collect();
                    if parts.len() != 6 {
                        return Err(err(
                            line_no,
                            &"block needs 'x0 x1 y0 y1 nx ny'".to_string(),
                        ));
                    }
                    blocks.push(BlockSpec {
                        x0: num(parts[0])?,
                        x1: num(parts[1])?,
                        y0: num(parts[2])?,
                        y1: num(parts[3])?,
                        nx: int(parts[4])?,
                        ny: int(parts[5])?,
                    });
                }
                _ => return Err(err(line_no, &format!("unknown key '{key}' in [mesh]"))),
            },
            Section::Solver => match key {
                "tol" => solve_tol = num(value)?,
                "compressible" => compressible = boolean(value)?,
                "c_f" => c_f = num(value)?,
                "phi" => phi = num(value)?,
                "rho_ref" => rho_ref = num(value)?,
                "p_ref" => p_ref = num(value)?,
                "newton_tol" => newton_tol = num(value)?,
                "newton_max_iter" => newton_max_iter = int(value)?,
                _ => return Err(err(line_no, &format!("unknown key '{key}' in [solver]"))),
            },
            Section::Output => match key {
                "dir" => output_dir = PathBuf::from(value),
                "dump" => dump = boolean(value)?,
                "dump_times" => {
                    dump_times = value
                        .split(|c| c == ',' || c == ' ')
                        .filter(|s| !s.is_empty())
                        .map(parse_number)
                        .collect::<Result<Vec<_>, _>>()
                        .map_err(|m| err(line_no, &m))?;
                }
                _ => return Err(err(line_no, &format!("unknown key '{key}' in [output]"))),
            },
            Section::Level(i) => match key {
                "h" => levels[i].h = Some(num(value)?),
                "H" => levels[i].big_h = Some(num(value)?),
                "dt" => levels[i].dt = Some(num(value)?),
                _ => return Err(err(line_no, &format!("unknown key '{key}' in [level]"))),
            },
        }
    }

    // Assemble and validate.
    let case = match case_name.as_deref() {
        None => return Err(err(0, &"missing [case] name")),
        Some("custom") => {
            let (f, g, p0) = match (custom_f, custom_g, custom_p0) {
                (Some(f), Some(g), Some(p0)) => (f, g, p0),
                _ => return Err(err(0, &"custom case requires f, g and p0")),
            };
            CaseSpec::Custom { f, g, p0 }
        }
        Some(name) => CaseSpec::Named(name.to_string()),
    };

    if !(0.0..=1.0).contains(&theta) {
        return Err(err(0, &format!("theta must lie in [0, 1], got {theta}")));
    }
    if let Some(t) = final_time {
        if !(t > 0.0) {
            return Err(err(0, &format!("T must be positive, got {t}")));
        }
        if let Some(step) = dt {
            let n = (t / step).round();
            if n < 1.0 || (n * step - t).abs() > 1e-9 * t {
                return Err(err(0, &format!("dt = {step} does not divide T = {t}")));
            }
        }
    }

    let mesh = match layout.as_deref() {
        None => None,
        Some("quadrant") => {
            let (h, big_h) = match (mesh_h, mesh_big_h) {
                (Some(h), Some(big)) => (h, big),
                _ => return Err(err(0, &"quadrant layout requires h and H")),
            };
            Some(MeshSpec::Quadrant { h, big_h })
        }
        Some("two_block") => {
            let spec = match (nx_left, ny_left, nx_right, ny_right) {
                (Some(a), Some(b), Some(c), Some(d)) => MeshSpec::TwoBlock {
                    nx_left: a,
                    ny_left: b,
                    nx_right: c,
                    ny_right: d,
                },
                _ => {
                    return Err(err(
                        0,
                        &"two_block layout requires nx_left, ny_left, nx_right, ny_right",
                    ))
                }
            };
            Some(spec)
        }
        Some("blocks") => {
            if blocks.is_empty() {
                return Err(err(0, &"blocks layout requires at least one block"));
            }
            Some(MeshSpec::Blocks(blocks))
        }
        Some(other) => return Err(err(0, &format!("unknown mesh layout '{other}'"))),
    };

    let mut study_levels = Vec::with_capacity(levels.len());
    for raw in &levels {
        let level = match (raw.h, raw.big_h, raw.dt) {
            (Some(h), Some(big_h), Some(dt)) => StudyLevel { h, big_h, dt },
            _ => {
                return Err(ConfigError::new(
                    path,
                    raw.line,
                    "level requires h, H and dt",
                ))
            }
        };
        if !(level.h > 0.0 && level.big_h > 0.0 && level.dt > 0.0) {
            return Err(ConfigError::new(
                path,
                raw.line,
                "level values must be positive",
            ));
        }
        if let Some(t) = final_time {
            let n = (t / level.dt).round();
            if n < 1.0 || (n * level.dt - t).abs() > 1e-9 * t {
                return Err(ConfigError::new(
                    path,
                    raw.line,
                    format!("dt = {} does not divide T = {t}", level.dt),
                ));
            }
        }
        study_levels.push(level);
    }

    if !(solve_tol > 0.0) {
        return Err(err(0, &format!("solver tol must be positive, got {solve_tol}")));
    }

    Ok(RunConfig {
        case,
        theta,
        final_time,
        dt,
        mesh,
        levels: study_levels,
        solve_tol,
        compressible: compressible.then_some(CompressibleSpec {
            c_f,
            phi,
            rho_ref,
            p_ref,
            newton_tol,
            newton_max_iter,
        }),
        output_dir,
        dump,
        dump_times,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_convergence_config_parses() {
        let text = "\
[case]
name = example1

[time]
theta = 1
T = 0.1

[level]
h = 1/52
H = 1/26
dt = 1/50
";
        let cfg = parse_config_str(text, "test.conf").unwrap();
        assert_eq!(cfg.case, CaseSpec::Named("example1".into()));
        assert_eq!(cfg.theta, 1.0);
        assert_eq!(cfg.levels.len(), 1);
        assert!((cfg.levels[0].h - 1.0 / 52.0).abs() < 1e-18);
    }

    #[test]
    fn theta_out_of_range_rejected() {
        let text = "[case]\nname = example1\n[time]\ntheta = 2\n";
        let e = parse_config_str(text, "t.conf").unwrap_err();
        assert!(e.message.contains("theta"));
    }

    #[test]
    fn nondividing_dt_rejected() {
        let text = "[case]\nname = example1\n[time]\nT = 0.1\ndt = 0.03\n";
        let e = parse_config_str(text, "t.conf").unwrap_err();
        assert!(e.message.contains("does not divide"));
    }

    #[test]
    fn unknown_key_reports_line_number() {
        let text = "[case]\nname = example1\n[mesh]\nlayout = quadrant\nwidgets = 3\n";
        let e = parse_config_str(text, "t.conf").unwrap_err();
        assert_eq!(e.line, 5);
        assert!(e.message.contains("widgets"));
    }

    #[test]
    fn unknown_section_reports_line_number() {
        let text = "[case]\nname = example1\n[wat]\n";
        let e = parse_config_str(text, "t.conf").unwrap_err();
        assert_eq!(e.line, 3);
    }

    #[test]
    fn fractions_and_comments_parse() {
        let text = "\
# study setup
[case]
name = example2

[time]
T = 2  # final time
dt = 1/8

[mesh]
layout = quadrant
h = 1/128
H = 1/64
";
        let cfg = parse_config_str(text, "t.conf").unwrap();
        assert_eq!(cfg.dt, Some(0.125));
        match cfg.mesh.unwrap() {
            MeshSpec::Quadrant { h, big_h } => {
                assert!((h - 1.0 / 128.0).abs() < 1e-18);
                assert!((big_h - 1.0 / 64.0).abs() < 1e-18);
            }
            other => panic!("unexpected mesh {other:?}"),
        }
    }

    #[test]
    fn custom_case_requires_all_constants() {
        let text = "[case]\nname = custom\nf = 1\n";
        assert!(parse_config_str(text, "t.conf").is_err());
        let full = "[case]\nname = custom\nf = 1\ng = 0\np0 = 0.5\n[time]\nT = 1\ndt = 0.5\n";
        let cfg = parse_config_str(full, "t.conf").unwrap();
        assert!(matches!(cfg.case, CaseSpec::Custom { .. }));
    }

    #[test]
    fn compressible_block_parses() {
        let text = "\
[case]
name = example1
[solver]
compressible = true
c_f = 1e-6
phi = 0.8
newton_max_iter = 12
";
        let cfg = parse_config_str(text, "t.conf").unwrap();
        let spec = cfg.compressible.unwrap();
        assert_eq!(spec.c_f, 1e-6);
        assert_eq!(spec.phi, 0.8);
        assert_eq!(spec.newton_max_iter, 12);
    }

    #[test]
    fn level_missing_field_names_its_line() {
        let text = "[case]\nname = example1\n[level]\nh = 1/8\nH = 1/4\n";
        let e = parse_config_str(text, "t.conf").unwrap_err();
        assert_eq!(e.line, 3);
        assert!(e.message.contains("level requires"));
    }
}
