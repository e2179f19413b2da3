//! End-to-end stages behind the command-line verbs: `solve` assembles the
//! relaxation, solves it, and writes certificate + field artifacts;
//! `validate` replays the artifacts against the Monte Carlo oracle;
//! `export` writes the solver-exchange file without solving.
//!
//! Every stage is deterministic given the same configuration (including the
//! validation seed), so repeated runs produce byte-identical artifacts.

use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::confidence::{
    build_confidence_field, containment_report, extract_alpha_set, AlphaSet, ConfidenceError,
    ContainmentReport,
};
use crate::config::{ConfigError, RunPlan};
use crate::distribution::ThetaDistribution;
use crate::oracle::{
    check_liouville_identity, empirical_confidence, integrate_rk4, Lattice, OracleError,
    DEFAULT_RK4_STEPS,
};
use crate::poly::{MultiPoly, VarSpace};
use crate::relax::{assemble_dual_relaxation, RelaxError};
use crate::sdp::{self, export::export_standard_form, SdpError, SolveStatus};

pub const PROBLEM_FILE: &str = "problem.dat-s";
pub const SUMMARY_FILE: &str = "solution_summary";
pub const W_POLY_FILE: &str = "w_poly";
pub const V_POLY_FILE: &str = "v_poly";
pub const FIELD_FILE: &str = "confidence_field.csv";
pub const EMPIRICAL_FILE: &str = "empirical_field.csv";
pub const REPORT_FILE: &str = "containment_report";

/// Number of trajectory spot-checks of the certificate's transport identity
/// performed by `validate`.
const LIOUVILLE_SPOT_CHECKS: usize = 10;

pub fn alpha_set_file(alpha: f64) -> String {
    format!("alpha_set_{alpha}.csv")
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("relaxation assembly: {0}")]
    Assembly(#[from] RelaxError),
    #[error("solver: {0}")]
    Solver(#[from] SdpError),
    #[error("solver finished with status `{status}`; artifacts other than the summary were not written")]
    NotOptimal { status: SolveStatus },
    #[error("oracle: {0}")]
    Oracle(#[from] OracleError),
    #[error("confidence post-processing: {0}")]
    Confidence(#[from] ConfidenceError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("missing artifact {0}; run `solve` with the same config first")]
    MissingArtifact(PathBuf),
    #[error("artifact {path} does not match the current config: {reason}")]
    ArtifactMismatch { path: PathBuf, reason: String },
    #[error("containment failed: {violations} violation(s) across the alpha levels")]
    ValidationFailed { violations: usize },
    #[error("dense grids support at most 2 state dimensions, problem has {0}")]
    GridDimTooLarge(usize),
}

impl PipelineError {
    /// 1 = configuration/user error, 2 = solver non-optimal, 3 = validation
    /// failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::NotOptimal { .. } | PipelineError::Solver(_) => 2,
            PipelineError::ValidationFailed { .. } => 3,
            _ => 1,
        }
    }
}

#[derive(Debug)]
pub struct SolveSummary {
    pub status: SolveStatus,
    pub objective_scaled: f64,
    pub objective_original: f64,
    pub gap: f64,
    pub iterations: usize,
    pub files: Vec<PathBuf>,
}

#[derive(Debug)]
pub struct ValidateSummary {
    pub reports: Vec<ContainmentReport>,
    pub total_violations: usize,
    pub max_liouville_residual: f64,
    pub max_exited_fraction: f64,
    pub files: Vec<PathBuf>,
}

fn write_file(path: &Path, contents: &str) -> Result<(), PipelineError> {
    fs::write(path, contents).map_err(|source| PipelineError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn read_file(path: &Path) -> Result<String, PipelineError> {
    if !path.exists() {
        return Err(PipelineError::MissingArtifact(path.to_path_buf()));
    }
    fs::read_to_string(path).map_err(|source| PipelineError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn state_grid(plan: &RunPlan) -> Result<Lattice, PipelineError> {
    let nx = plan.spec.nx();
    if nx > 2 {
        return Err(PipelineError::GridDimTooLarge(nx));
    }
    Ok(Lattice::regular(&plan.spec.state_box, plan.grid_points)?)
}

/// Assembles and writes the solver-exchange file only. Byte-deterministic.
pub fn run_export(plan: &RunPlan) -> Result<PathBuf, PipelineError> {
    fs::create_dir_all(&plan.output_dir).map_err(|source| PipelineError::Io {
        path: plan.output_dir.clone(),
        source,
    })?;
    let asm = assemble_dual_relaxation(&plan.spec, plan.degree)?;
    let path = plan.output_dir.join(PROBLEM_FILE);
    write_file(&path, &export_standard_form(&asm.sdp))?;
    Ok(path)
}

/// Full solve stage: exchange file, solver run, certificate polynomials,
/// confidence field, and one α-set file per requested level.
pub fn run_solve(plan: &RunPlan) -> Result<SolveSummary, PipelineError> {
    let mut files = vec![run_export(plan)?];
    let asm = assemble_dual_relaxation(&plan.spec, plan.degree)?;
    let sol = sdp::solve(&asm.sdp, &plan.solve_options)?;

    let objective_original = asm.objective_original(sol.primal_objective);
    let summary_path = plan.output_dir.join(SUMMARY_FILE);
    let summary_text = format!(
        "status = {}\ndegree = {}\nobjective_scaled = {}\nobjective_original = {}\n\
         dual_objective_scaled = {}\ngap = {}\niterations = {}\n",
        sol.status,
        plan.degree,
        sol.primal_objective,
        objective_original,
        sol.dual_objective,
        sol.gap,
        sol.iterations,
    );
    write_file(&summary_path, &summary_text)?;
    files.push(summary_path);

    if sol.status != SolveStatus::Optimal {
        return Err(PipelineError::NotOptimal { status: sol.status });
    }

    let v = asm.v_original(&sol.free_values);
    let w = asm.w_original(&sol.free_values);
    let v_path = plan.output_dir.join(V_POLY_FILE);
    write_file(&v_path, &format!("{v}\n"))?;
    files.push(v_path);
    let w_path = plan.output_dir.join(W_POLY_FILE);
    write_file(&w_path, &format!("{w}\n"))?;
    files.push(w_path);

    let grid = state_grid(plan)?;
    let field =
        build_confidence_field(&w, &plan.dist, &grid, plan.degree, objective_original)?;
    let mut buf = Vec::new();
    field
        .write_csv(&mut buf)
        .expect("writing to an in-memory buffer cannot fail");
    let field_path = plan.output_dir.join(FIELD_FILE);
    write_file(&field_path, std::str::from_utf8(&buf).expect("ASCII CSV"))?;
    files.push(field_path);

    for &alpha in &plan.alphas {
        let set = extract_alpha_set(&field, alpha)?;
        let mut buf = Vec::new();
        set.write_csv(&field, &mut buf)
            .expect("writing to an in-memory buffer cannot fail");
        let path = plan.output_dir.join(alpha_set_file(alpha));
        write_file(&path, std::str::from_utf8(&buf).expect("ASCII CSV"))?;
        files.push(path);
    }

    Ok(SolveSummary {
        status: sol.status,
        objective_scaled: sol.primal_objective,
        objective_original,
        gap: sol.gap,
        iterations: sol.iterations,
        files,
    })
}

/// Reads one α-set artifact back, checking its grid against `grid`.
fn read_alpha_membership(path: &Path, grid: &Lattice) -> Result<Vec<bool>, PipelineError> {
    let text = read_file(path)?;
    let mismatch = |reason: String| PipelineError::ArtifactMismatch {
        path: path.to_path_buf(),
        reason,
    };
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| mismatch("empty file".into()))?;
    let expected_cols = grid.dim() + 2;
    if header.split(',').count() != expected_cols {
        return Err(mismatch(format!("expected {expected_cols} columns")));
    }
    let mut membership = Vec::with_capacity(grid.len());
    for (i, line) in lines.enumerate() {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != expected_cols {
            return Err(mismatch(format!("row {i}: expected {expected_cols} columns")));
        }
        let point = grid
            .points()
            .get(i)
            .ok_or_else(|| mismatch(format!("more rows than the {}-point grid", grid.len())))?;
        for (k, want) in point.iter().enumerate() {
            let got: f64 = fields[k]
                .parse()
                .map_err(|_| mismatch(format!("row {i}: bad coordinate `{}`", fields[k])))?;
            if (got - want).abs() > 1e-9 {
                return Err(mismatch(format!(
                    "row {i}: grid point {got} differs from configured {want}"
                )));
            }
        }
        match *fields.last().expect("column count checked") {
            "0" => membership.push(false),
            "1" => membership.push(true),
            other => return Err(mismatch(format!("row {i}: bad membership flag `{other}`"))),
        }
    }
    if membership.len() != grid.len() {
        return Err(mismatch(format!(
            "{} rows for a {}-point grid",
            membership.len(),
            grid.len()
        )));
    }
    Ok(membership)
}

fn uniform_point<R: Rng>(rng: &mut R, b: &crate::sets::Box) -> Vec<f64> {
    b.lower()
        .iter()
        .zip(b.upper())
        .map(|(&lo, &hi)| rng.gen_range(lo..=hi))
        .collect()
}

/// Validation stage: Monte Carlo reach-probability field, containment check
/// of every solved α-set artifact, and transport-identity spot checks of the
/// certificate along random trajectories.
pub fn run_validate(plan: &RunPlan) -> Result<ValidateSummary, PipelineError> {
    let grid = state_grid(plan)?;
    let dir = &plan.output_dir;

    let mut memberships = Vec::with_capacity(plan.alphas.len());
    for &alpha in &plan.alphas {
        memberships.push(read_alpha_membership(&dir.join(alpha_set_file(alpha)), &grid)?);
    }
    let v_text = read_file(&dir.join(V_POLY_FILE))?;
    let vars = VarSpace { nt: 1, nx: plan.spec.nx(), ntheta: plan.spec.ntheta() };
    let v = MultiPoly::parse(v_text.trim(), vars).map_err(|e| PipelineError::ArtifactMismatch {
        path: dir.join(V_POLY_FILE),
        reason: e.to_string(),
    })?;

    let emp = empirical_confidence(&plan.spec, &plan.dist, &grid, plan.samples, plan.seed)?;
    let mut buf = Vec::new();
    emp.write_csv(&mut buf).expect("writing to an in-memory buffer cannot fail");
    let emp_path = dir.join(EMPIRICAL_FILE);
    write_file(&emp_path, std::str::from_utf8(&buf).expect("ASCII CSV"))?;
    let mut files = vec![emp_path];

    let mut report_text = String::new();
    let mut reports = Vec::new();
    let mut total_violations = 0usize;
    for (&alpha, membership) in plan.alphas.iter().zip(memberships) {
        let est = AlphaSet { alpha, membership, interval_list: Vec::new() };
        let rep = containment_report(&est, &emp, alpha, plan.stat_margin)?;
        total_violations += rep.violations.len();
        report_text.push_str(&format!(
            "alpha = {}\nviolations = {}\nestimated_area = {}\nempirical_area = {}\n\
             excess_area = {}\npass = {}\n\n",
            alpha,
            rep.violations.len(),
            rep.estimated_area,
            rep.empirical_area,
            rep.excess_area,
            rep.pass,
        ));
        reports.push(rep);
    }

    // Transport-identity spot checks of the solved certificate along random
    // trajectories; θ is drawn from the parameter box (the identity holds
    // pathwise for any parameter value, also under atomic distributions).
    let mut rng = ChaCha8Rng::seed_from_u64(plan.seed ^ 0x4C49_4F55);
    let mut max_residual = 0.0f64;
    for _ in 0..LIOUVILLE_SPOT_CHECKS {
        let x0 = uniform_point(&mut rng, &plan.spec.state_box);
        let theta = uniform_point(&mut rng, &plan.spec.theta_box);
        let traj = integrate_rk4(&plan.spec, &x0, &theta, DEFAULT_RK4_STEPS);
        max_residual = max_residual.max(check_liouville_identity(&traj, &v, &plan.spec));
    }
    let max_exited = emp
        .exited_fractions
        .iter()
        .fold(0.0f64, |a, &b| a.max(b));
    report_text.push_str(&format!(
        "liouville_spot_checks = {LIOUVILLE_SPOT_CHECKS}\nliouville_max_residual = {max_residual}\n\
         exited_fraction_max = {max_exited}\noverall_pass = {}\n",
        total_violations == 0,
    ));
    let report_path = dir.join(REPORT_FILE);
    write_file(&report_path, &report_text)?;
    files.push(report_path);

    if total_violations > 0 {
        return Err(PipelineError::ValidationFailed { violations: total_violations });
    }
    Ok(ValidateSummary {
        reports,
        total_violations,
        max_liouville_residual: max_residual,
        max_exited_fraction: max_exited,
        files,
    })
}

/// Convenience for callers that only have a distribution and need to know
/// whether `validate` can run against it.
pub fn distribution_supports_validation(dist: &ThetaDistribution) -> bool {
    dist.is_sampleable()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::parse_config;
    use tempfile::TempDir;

    /// Drift benchmark at low degree with a coarse grid: fast enough for a
    /// unit test, rich enough to exercise every artifact.
    fn small_plan(dir: &Path) -> RunPlan {
        let text = format!(
            r#"
            output_dir = "{}"

            [problem]
            dynamics = ["theta1"]
            horizon = 1.0
            state_box = {{ lower = [-2.0], upper = [2.0] }}
            theta_box = {{ lower = [-1.0], upper = [1.0] }}
            target_box = {{ lower = [-0.25], upper = [0.25] }}

            [distribution]
            kind = "uniform_box"

            [relaxation]
            degree = 4

            [solver]
            tol = 1e-8

            [extraction]
            alphas = [0.2]
            grid_points = 41

            [validation]
            samples = 400
            seed = 11
            stat_margin = 0.065
            "#,
            dir.display()
        );
        parse_config(&text).unwrap()
    }

    #[test]
    fn export_is_byte_deterministic() {
        let tmp = TempDir::new().unwrap();
        let plan = small_plan(tmp.path());
        let p1 = run_export(&plan).unwrap();
        let first = fs::read(&p1).unwrap();
        let p2 = run_export(&plan).unwrap();
        assert_eq!(p1, p2);
        assert_eq!(first, fs::read(&p2).unwrap());
        let text = String::from_utf8(first).unwrap();
        let m: usize = text.lines().next().unwrap().trim().parse().unwrap();
        assert!(m > 0, "exchange file must start with the constraint count");
    }

    #[test]
    fn solve_then_validate_then_tamper() {
        let tmp = TempDir::new().unwrap();
        let plan = small_plan(tmp.path());

        // Solve: artifacts present, objective matches the reference value.
        let summary = run_solve(&plan).unwrap();
        assert_eq!(summary.status, SolveStatus::Optimal);
        assert!((summary.objective_original - 4.4843808).abs() <= 1e-3);
        for name in [PROBLEM_FILE, SUMMARY_FILE, W_POLY_FILE, V_POLY_FILE, FIELD_FILE] {
            assert!(tmp.path().join(name).exists(), "missing {name}");
        }
        let alpha_path = tmp.path().join(alpha_set_file(0.2));
        assert!(alpha_path.exists());

        // Repeat solve: byte-identical CSV artifacts.
        let field_bytes = fs::read(tmp.path().join(FIELD_FILE)).unwrap();
        let alpha_bytes = fs::read(&alpha_path).unwrap();
        run_solve(&plan).unwrap();
        assert_eq!(field_bytes, fs::read(tmp.path().join(FIELD_FILE)).unwrap());
        assert_eq!(alpha_bytes, fs::read(&alpha_path).unwrap());

        // Validate: zero violations, small certificate residuals.
        let val = run_validate(&plan).unwrap();
        assert_eq!(val.total_violations, 0);
        assert!(val.max_liouville_residual <= 1e-5, "{}", val.max_liouville_residual);
        assert!(tmp.path().join(EMPIRICAL_FILE).exists());
        assert!(tmp.path().join(REPORT_FILE).exists());
        let report = fs::read_to_string(tmp.path().join(REPORT_FILE)).unwrap();
        assert!(report.contains("violations = 0"), "{report}");
        assert!(report.contains("overall_pass = true"), "{report}");

        // Validation is reproducible byte-for-byte.
        let emp_bytes = fs::read(tmp.path().join(EMPIRICAL_FILE)).unwrap();
        run_validate(&plan).unwrap();
        assert_eq!(emp_bytes, fs::read(tmp.path().join(EMPIRICAL_FILE)).unwrap());

        // Tamper: mark the whole set non-member; containment must fail.
        let tampered: String = fs::read_to_string(&alpha_path)
            .unwrap()
            .lines()
            .enumerate()
            .map(|(i, l)| {
                if i == 0 {
                    l.to_string()
                } else {
                    let mut f: Vec<&str> = l.split(',').collect();
                    let n = f.len();
                    f[n - 1] = "0";
                    f.join(",")
                }
            })
            .collect::<Vec<_>>()
            .join("\n")
            + "\n";
        fs::write(&alpha_path, tampered).unwrap();
        let err = run_validate(&plan).unwrap_err();
        assert!(matches!(err, PipelineError::ValidationFailed { violations } if violations > 0));
        assert_eq!(err.exit_code(), 3);

        // Missing artifact: user error, not a validation failure.
        fs::remove_file(&alpha_path).unwrap();
        let err = run_validate(&plan).unwrap_err();
        assert!(matches!(err, PipelineError::MissingArtifact(_)));
        assert_eq!(err.exit_code(), 1);
    }

    #[test]
    fn validate_rejects_grid_drift() {
        let tmp = TempDir::new().unwrap();
        let mut plan = small_plan(tmp.path());
        run_solve(&plan).unwrap();
        // Same files, different configured grid: coordinates no longer line up.
        plan.grid_points = 21;
        let err = run_validate(&plan).unwrap_err();
        assert!(matches!(err, PipelineError::ArtifactMismatch { .. }), "{err}");
        assert_eq!(err.exit_code(), 1);
    }

    #[test]
    fn exit_codes_partition_outcomes() {
        let tmp = TempDir::new().unwrap();
        let plan = small_plan(tmp.path());
        assert_eq!(PipelineError::ValidationFailed { violations: 1 }.exit_code(), 3);
        assert_eq!(
            PipelineError::NotOptimal { status: SolveStatus::MaxIterations }.exit_code(),
            2
        );
        assert_eq!(PipelineError::GridDimTooLarge(3).exit_code(), 1);
        assert_eq!(PipelineError::MissingArtifact(plan.output_dir.clone()).exit_code(), 1);
    }
}
