//! Run configuration: a single TOML file describing the problem, the
//! parameter distribution, relaxation degree, solver settings, extraction
//! and validation parameters. The schema is strict — unknown keys are
//! rejected — and every validation error names the offending key or term.

use std::path::{Path, PathBuf};

use serde::Deserialize;
use thiserror::Error;

use crate::distribution::{Atom, DistError, ThetaDistribution};
use crate::poly::{MultiPoly, PolyError, VarSpace};
use crate::relax::{ProblemSpec, RelaxError};
use crate::sdp::SolveOptions;
use crate::sets::{Box, SetError};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("config parse error: {0}")]
    Syntax(#[from] toml::de::Error),
    #[error("problem.dynamics[{index}]: {source}")]
    Dynamics { index: usize, source: PolyError },
    #[error("{key}: {source}")]
    BadBox { key: &'static str, source: SetError },
    #[error("problem: {0}")]
    Problem(RelaxError),
    #[error("relaxation.degree must be a positive even integer, got {0}")]
    BadDegree(u32),
    #[error("distribution.{key}: {message}")]
    Distribution { key: &'static str, message: String },
    #[error("extraction.alphas must be nonempty with every value in (0, 1]")]
    BadAlphas,
    #[error("extraction.grid_points must be at least 2")]
    BadGridPoints,
    #[error("validation.samples must be at least 1")]
    NoSamples,
    #[error("validation.stat_margin must be finite and nonnegative")]
    BadStatMargin,
    #[error("solver.tol must be positive and finite")]
    BadTol,
    #[error("solver.max_iter must be at least 1")]
    BadMaxIter,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub problem: ProblemSection,
    pub distribution: DistributionSection,
    pub relaxation: RelaxationSection,
    #[serde(default)]
    pub solver: SolverSection,
    pub extraction: ExtractionSection,
    pub validation: ValidationSection,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemSection {
    /// One right-hand side per state variable, in the term-list grammar
    /// over t, x1..xn, theta1..thetam.
    pub dynamics: Vec<String>,
    pub horizon: f64,
    pub state_box: BoxSection,
    pub theta_box: BoxSection,
    pub target_box: BoxSection,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoxSection {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DistributionSection {
    pub kind: DistKind,
    #[serde(default)]
    pub atoms: Option<Vec<AtomSection>>,
    #[serde(default)]
    pub moments: Option<Vec<MomentSection>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DistKind {
    UniformBox,
    DiscreteAtoms,
    MomentTable,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AtomSection {
    pub point: Vec<f64>,
    pub weight: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MomentSection {
    pub exponent: Vec<u32>,
    pub value: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RelaxationSection {
    pub degree: u32,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSection {
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
}

impl Default for SolverSection {
    fn default() -> Self {
        SolverSection { tol: default_tol(), max_iter: default_max_iter() }
    }
}

fn default_tol() -> f64 {
    1e-7
}

fn default_max_iter() -> usize {
    200
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExtractionSection {
    pub alphas: Vec<f64>,
    #[serde(default = "default_grid_points")]
    pub grid_points: usize,
}

fn default_grid_points() -> usize {
    401
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ValidationSection {
    pub samples: usize,
    #[serde(default)]
    pub seed: u64,
    pub stat_margin: f64,
}

/// A fully validated run: domain objects ready for the pipeline.
#[derive(Debug, Clone)]
pub struct RunPlan {
    pub spec: ProblemSpec,
    pub dist: ThetaDistribution,
    pub degree: u32,
    pub solve_options: SolveOptions,
    pub alphas: Vec<f64>,
    pub grid_points: usize,
    pub samples: usize,
    pub seed: u64,
    pub stat_margin: f64,
    pub output_dir: PathBuf,
}

pub fn load_config(path: &Path) -> Result<RunPlan, ConfigError> {
    let text = std::fs::read_to_string(path)
        .map_err(|source| ConfigError::Read { path: path.to_path_buf(), source })?;
    parse_config(&text)
}

pub fn parse_config(text: &str) -> Result<RunPlan, ConfigError> {
    let raw: RunConfig = toml::from_str(text)?;
    build_plan(raw)
}

fn build_box(section: &BoxSection, key: &'static str) -> Result<Box, ConfigError> {
    Box::new(section.lower.clone(), section.upper.clone())
        .map_err(|source| ConfigError::BadBox { key, source })
}

fn build_distribution(
    section: &DistributionSection,
    theta_box: &Box,
) -> Result<ThetaDistribution, ConfigError> {
    let dim = theta_box.dim();
    let reject_extras = |kind: &'static str| -> Result<(), ConfigError> {
        if section.atoms.is_some() && kind != "discrete_atoms" {
            return Err(ConfigError::Distribution {
                key: "atoms",
                message: format!("only applies to kind = \"discrete_atoms\", not {kind:?}"),
            });
        }
        if section.moments.is_some() && kind != "moment_table" {
            return Err(ConfigError::Distribution {
                key: "moments",
                message: format!("only applies to kind = \"moment_table\", not {kind:?}"),
            });
        }
        Ok(())
    };
    let dist_err = |key: &'static str, e: DistError| ConfigError::Distribution {
        key,
        message: e.to_string(),
    };
    match section.kind {
        DistKind::UniformBox => {
            reject_extras("uniform_box")?;
            Ok(ThetaDistribution::uniform_box(theta_box.clone()))
        }
        DistKind::DiscreteAtoms => {
            reject_extras("discrete_atoms")?;
            let atoms = section.atoms.as_ref().ok_or(ConfigError::Distribution {
                key: "atoms",
                message: "required for kind = \"discrete_atoms\"".into(),
            })?;
            for (i, a) in atoms.iter().enumerate() {
                if a.point.len() == dim && !theta_box.contains(&a.point, 1e-12) {
                    return Err(ConfigError::Distribution {
                        key: "atoms",
                        message: format!("atoms[{i}] lies outside problem.theta_box"),
                    });
                }
            }
            let atoms = atoms
                .iter()
                .map(|a| Atom { point: a.point.clone(), weight: a.weight })
                .collect();
            ThetaDistribution::discrete_atoms(dim, atoms).map_err(|e| dist_err("atoms", e))
        }
        DistKind::MomentTable => {
            reject_extras("moment_table")?;
            let moments = section.moments.as_ref().ok_or(ConfigError::Distribution {
                key: "moments",
                message: "required for kind = \"moment_table\"".into(),
            })?;
            let entries = moments.iter().map(|m| (m.exponent.clone(), m.value));
            ThetaDistribution::moment_table(dim, entries).map_err(|e| dist_err("moments", e))
        }
    }
}

fn build_plan(raw: RunConfig) -> Result<RunPlan, ConfigError> {
    let state_box = build_box(&raw.problem.state_box, "problem.state_box")?;
    let theta_box = build_box(&raw.problem.theta_box, "problem.theta_box")?;
    let target_box = build_box(&raw.problem.target_box, "problem.target_box")?;

    let vars = VarSpace { nt: 1, nx: state_box.dim(), ntheta: theta_box.dim() };
    let mut dynamics = Vec::with_capacity(raw.problem.dynamics.len());
    for (index, text) in raw.problem.dynamics.iter().enumerate() {
        dynamics.push(
            MultiPoly::parse(text, vars)
                .map_err(|source| ConfigError::Dynamics { index, source })?,
        );
    }

    let spec = ProblemSpec {
        dynamics,
        horizon: raw.problem.horizon,
        state_box,
        theta_box,
        target_box,
    };
    spec.validate().map_err(ConfigError::Problem)?;

    let dist = build_distribution(&raw.distribution, &spec.theta_box)?;

    let mut plan = RunPlan {
        dist,
        degree: raw.relaxation.degree,
        solve_options: SolveOptions { tol: raw.solver.tol, max_iter: raw.solver.max_iter },
        alphas: raw.extraction.alphas,
        grid_points: raw.extraction.grid_points,
        samples: raw.validation.samples,
        seed: raw.validation.seed,
        stat_margin: raw.validation.stat_margin,
        output_dir: raw.output_dir,
        spec,
    };
    check_plan(&plan)?;
    plan.alphas
        .sort_by(|a, b| a.partial_cmp(b).expect("alphas checked finite"));
    Ok(plan)
}

fn check_plan(plan: &RunPlan) -> Result<(), ConfigError> {
    if plan.degree == 0 || !plan.degree.is_multiple_of(2) {
        return Err(ConfigError::BadDegree(plan.degree));
    }
    if plan.alphas.is_empty()
        || plan.alphas.iter().any(|&a| !a.is_finite() || a <= 0.0 || a > 1.0)
    {
        return Err(ConfigError::BadAlphas);
    }
    if plan.grid_points < 2 {
        return Err(ConfigError::BadGridPoints);
    }
    if plan.samples == 0 {
        return Err(ConfigError::NoSamples);
    }
    if !plan.stat_margin.is_finite() || plan.stat_margin < 0.0 {
        return Err(ConfigError::BadStatMargin);
    }
    if !plan.solve_options.tol.is_finite() || plan.solve_options.tol <= 0.0 {
        return Err(ConfigError::BadTol);
    }
    if plan.solve_options.max_iter == 0 {
        return Err(ConfigError::BadMaxIter);
    }
    Ok(())
}

impl RunPlan {
    /// Applies command-line overrides, re-running the affected checks.
    pub fn apply_overrides(
        &mut self,
        degree: Option<u32>,
        alpha: Option<f64>,
        output_dir: Option<PathBuf>,
    ) -> Result<(), ConfigError> {
        if let Some(d) = degree {
            self.degree = d;
        }
        if let Some(a) = alpha {
            self.alphas = vec![a];
        }
        if let Some(dir) = output_dir {
            self.output_dir = dir;
        }
        check_plan(self)
    }
}
