//! End-to-end acceptance gate for the solver pipeline.
//!
//! Nine checks cover the bundled benchmarks (the drift system with a uniform
//! parameter and the decay system with an atomic parameter): set quality of
//! the degree-8 solve, statistical containment across the degree hierarchy,
//! objective monotonicity, the indicator lower bound on reached pairs,
//! pointwise feasibility of the rounded certificates, the transport identity
//! along simulated trajectories, the standalone numeric oracles, agreement
//! with the closed-form flow map, and byte-level determinism of repeated runs.
//!
//! Every test prints one `[gate N/9] name: PASS|FAIL (details)` line; all
//! tolerances are pinned in the constants below. Expensive shared state (six
//! solves and two Monte Carlo fields) is built once in a `OnceLock`.

use std::path::{Path, PathBuf};
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use brs_core::config::{load_config, parse_config, RunPlan};
use brs_core::confidence::{
    build_confidence_field, containment_report, extract_alpha_set, ConfidenceField,
};
use brs_core::distribution::ThetaDistribution;
use brs_core::oracle::{
    check_liouville_identity, empirical_confidence, integrate_rk4, EmpiricalField, Lattice,
};
use brs_core::pipeline::{run_solve, run_validate};
use brs_core::poly::{basis_enumerate, MultiPoly, VarSpace};
use brs_core::relax::{assemble_dual_relaxation, feasibility_report};
use brs_core::sdp::{self, check_kkt, EqRow, SdpProblem, SolveStatus};
use brs_core::sets::lebesgue_moment;
use brs_core::sets::Box as Domain;

// -- pinned gate parameters --------------------------------------------------

/// Relaxation degrees exercised by the hierarchy checks.
const DEGREES: [u32; 3] = [4, 6, 8];
/// Grid resolution shared by solve extraction and Monte Carlo validation.
const GRID_POINTS: usize = 401;
/// Monte Carlo parameter draws per grid point.
const VALIDATION_SAMPLES: usize = 2000;
/// Three worst-case binomial standard deviations at 2000 samples:
/// 3 * sqrt(0.25 / 2000).
const STAT_MARGIN_3SIGMA: f64 = 0.03354;

// Gate 1: quality of the degree-8 drift-benchmark set at alpha = 0.2.
/// The drift benchmark reaches [-0.25, 0.25] within time 1 with probability
/// 0.25 on |x| <= 0.75, decaying linearly to zero at |x| = 1.25; the 0.2
/// superlevel set of the true probability is exactly [-0.85, 0.85].
const TRUE_HALF_WIDTH: f64 = 0.85;
const TRUE_LENGTH: f64 = 1.7;
/// The extracted outer set may exceed the true length by at most 50 %.
const LENGTH_FACTOR: f64 = 1.5;
const RUNTIME_BUDGET: Duration = Duration::from_secs(120);

// Gate 3: hierarchy monotonicity slack.
const MONOTONE_TOL: f64 = 1e-6;

// Gate 4: certificate lower bound on verified-reaching pairs.
const REACHED_PAIRS: usize = 500;
const PAIR_DRAW_CAP: usize = 60_000;
const W_LOWER_BOUND: f64 = 1.0 - 1e-4;
const PAIR_SEED: u64 = 0xACC4;

// Gate 5: pointwise feasibility of the rounded (v, w) certificates.
const FEASIBILITY_SAMPLES: usize = 10_000;
const FEASIBILITY_TOL: f64 = 1e-6;

// Gate 6: transport identity along simulated trajectories.
const LIOUVILLE_POLYS: usize = 10;
const LIOUVILLE_TRAJECTORIES: usize = 10;
const LIOUVILLE_STEPS: usize = 1000;
const LIOUVILLE_TOL: f64 = 1e-6;
const LIOUVILLE_SEED: u64 = 0xACC6;
const LIOUVILLE_TEST_DEGREE: u32 = 4;

// Gate 7: standalone numeric oracles.
const MOMENT_REL_TOL: f64 = 1e-9;
const THETA_MOMENT_TOL: f64 = 1e-12;
const MICRO_SDP_TOL: f64 = 1e-7;

// Gate 8: distance to the closed-form reach set of the decay benchmark.
const HAUSDORFF_TOL: f64 = 0.1;
/// |x0| <= 0.1 * e reaches [-0.1, 0.1] under the flow x(T) = x0 * exp(-1).
const DECAY_TRUE_HALF_WIDTH: f64 = 0.1 * std::f64::consts::E;

/// Integration steps used when simulating a single trajectory.
const RK4_STEPS: usize = 1000;

// -- shared solve bundle ------------------------------------------------------

struct DegreeRun {
    degree: u32,
    objective_scaled: f64,
    v: MultiPoly,
    w: MultiPoly,
    field: ConfidenceField,
}

struct Benchmark {
    name: &'static str,
    plan: RunPlan,
    runs: Vec<DegreeRun>,
    empirical: EmpiricalField,
}

struct Bundle {
    drift: Benchmark,
    decay: Benchmark,
}

static BUNDLE: OnceLock<Bundle> = OnceLock::new();

fn config_path(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name)
}

fn solve_at(plan: &RunPlan, grid: &Lattice, degree: u32) -> DegreeRun {
    let asm = assemble_dual_relaxation(&plan.spec, degree).expect("assembly succeeds");
    let sol = sdp::solve(&asm.sdp, &plan.solve_options).expect("well-posed block problem");
    assert_eq!(
        sol.status,
        SolveStatus::Optimal,
        "degree-{degree} solve must converge (gap {})",
        sol.gap
    );
    let v = asm.v_original(&sol.free_values);
    let w = asm.w_original(&sol.free_values);
    let field = build_confidence_field(
        &w,
        &plan.dist,
        grid,
        degree,
        asm.objective_original(sol.primal_objective),
    )
    .expect("confidence field on the state grid");
    DegreeRun { degree, objective_scaled: sol.primal_objective, v, w, field }
}

fn load_benchmark(name: &'static str, file: &str) -> Benchmark {
    let plan = load_config(&config_path(file)).expect("bundled config parses");
    assert_eq!(plan.grid_points, GRID_POINTS, "{name}: bundled grid resolution is pinned");
    let grid = Lattice::regular(&plan.spec.state_box, GRID_POINTS).expect("regular grid");
    let runs = DEGREES.iter().map(|&d| solve_at(&plan, &grid, d)).collect();
    let empirical =
        empirical_confidence(&plan.spec, &plan.dist, &grid, VALIDATION_SAMPLES, plan.seed)
            .expect("Monte Carlo field");
    Benchmark { name, plan, runs, empirical }
}

fn bundle() -> &'static Bundle {
    BUNDLE.get_or_init(|| Bundle {
        drift: load_benchmark("drift", "linear_theta.toml"),
        decay: load_benchmark("decay", "decay_atom.toml"),
    })
}

fn uniform_point<R: Rng>(rng: &mut R, b: &Domain) -> Vec<f64> {
    b.lower().iter().zip(b.upper()).map(|(&l, &u)| rng.gen_range(l..=u)).collect()
}

// -- gate 1: degree-8 drift set is correct, tight, and fast -------------------

#[test]
fn gate_1_degree8_drift_set_quality() {
    let start = Instant::now();
    let plan = load_config(&config_path("linear_theta.toml")).expect("bundled config parses");
    let grid = Lattice::regular(&plan.spec.state_box, GRID_POINTS).expect("regular grid");
    let run = solve_at(&plan, &grid, 8);
    let set = extract_alpha_set(&run.field, 0.2).expect("alpha in (0, 1]");
    let elapsed = start.elapsed();

    let violations: Vec<f64> = grid
        .points()
        .iter()
        .zip(&set.membership)
        .filter(|(pt, &m)| pt[0].abs() <= TRUE_HALF_WIDTH && !m)
        .map(|(pt, _)| pt[0])
        .collect();
    let length = set.area(&grid);
    let bound = TRUE_LENGTH * LENGTH_FACTOR;

    let pass = violations.is_empty() && length <= bound && elapsed <= RUNTIME_BUDGET;
    println!(
        "[gate 1/9] degree-8 drift set quality: {} (missed true points {}, length {:.4} vs bound {:.2}, runtime {:.2}s)",
        if pass { "PASS" } else { "FAIL" },
        violations.len(),
        length,
        bound,
        elapsed.as_secs_f64(),
    );

    assert!(
        violations.is_empty(),
        "extracted set must cover the closed-form 0.2-superlevel set; missed {violations:?}"
    );
    assert!(
        elapsed <= RUNTIME_BUDGET,
        "solve + extraction took {:.1}s, budget {:.0}s",
        elapsed.as_secs_f64(),
        RUNTIME_BUDGET.as_secs_f64()
    );
    assert!(
        length <= bound,
        "extracted length {length:.4} exceeds {bound:.2} (true length {TRUE_LENGTH} + 50 %): \
         the degree-8 certificate is not tight enough on this benchmark"
    );
}

// -- gate 2: statistical containment across benchmarks and degrees ------------

#[test]
fn gate_2_monte_carlo_containment_every_benchmark_and_degree() {
    let bundle = bundle();
    let mut checks = 0usize;
    let mut failures: Vec<String> = Vec::new();
    for bench in [&bundle.drift, &bundle.decay] {
        for run in &bench.runs {
            for &alpha in &bench.plan.alphas {
                let set = extract_alpha_set(&run.field, alpha).expect("alpha in (0, 1]");
                let rep = containment_report(&set, &bench.empirical, alpha, STAT_MARGIN_3SIGMA)
                    .expect("grids agree");
                checks += 1;
                if !rep.pass {
                    failures.push(format!(
                        "{} d={} alpha={} -> {} violations",
                        bench.name,
                        run.degree,
                        alpha,
                        rep.violations.len()
                    ));
                }
            }
        }
    }
    println!(
        "[gate 2/9] Monte Carlo containment ({} samples/point, margin {}): {} ({} benchmark/degree checks)",
        VALIDATION_SAMPLES,
        STAT_MARGIN_3SIGMA,
        if failures.is_empty() { "PASS" } else { "FAIL" },
        checks,
    );
    assert!(failures.is_empty(), "containment violations: {failures:?}");
}

// -- gate 3: optimal objective is non-increasing in the degree ----------------

#[test]
fn gate_3_objective_non_increasing_in_degree() {
    let bundle = bundle();
    let mut lines = Vec::new();
    let mut ok = true;
    for bench in [&bundle.drift, &bundle.decay] {
        let objs: Vec<f64> = bench.runs.iter().map(|r| r.objective_scaled).collect();
        for pair in objs.windows(2) {
            if pair[1] > pair[0] + MONOTONE_TOL {
                ok = false;
            }
        }
        lines.push(format!("{}: {objs:?}", bench.name));
    }
    println!(
        "[gate 3/9] objective non-increasing over degrees {DEGREES:?} (tol {MONOTONE_TOL}): {} ({})",
        if ok { "PASS" } else { "FAIL" },
        lines.join("; "),
    );
    assert!(ok, "tightening the relaxation must not increase the optimum: {lines:?}");
}

// -- gate 4: w >= 1 on oracle-verified reaching pairs --------------------------

#[test]
fn gate_4_reaching_pairs_score_near_one() {
    let bundle = bundle();
    let bench = &bundle.drift;
    let run = bench.runs.iter().find(|r| r.degree == 8).expect("degree-8 run");
    let mut rng = ChaCha8Rng::seed_from_u64(PAIR_SEED);
    let mut found = 0usize;
    let mut min_w = f64::INFINITY;
    let mut draws = 0usize;
    while found < REACHED_PAIRS && draws < PAIR_DRAW_CAP {
        draws += 1;
        let x0 = uniform_point(&mut rng, &bench.plan.spec.state_box);
        let theta = uniform_point(&mut rng, &bench.plan.spec.theta_box);
        let traj = integrate_rk4(&bench.plan.spec, &x0, &theta, RK4_STEPS);
        if !traj.terminal_in_target || traj.exited_domain || traj.non_finite {
            continue;
        }
        found += 1;
        let mut point = x0;
        point.extend_from_slice(&theta);
        min_w = min_w.min(run.w.eval(&point));
    }
    let pass = found == REACHED_PAIRS && min_w >= W_LOWER_BOUND;
    println!(
        "[gate 4/9] w on {found} verified reaching pairs: {} (min w {min_w:.8}, bound {W_LOWER_BOUND})",
        if pass { "PASS" } else { "FAIL" },
    );
    assert_eq!(found, REACHED_PAIRS, "needed {REACHED_PAIRS} reaching pairs, found {found}");
    assert!(
        min_w >= W_LOWER_BOUND,
        "w must dominate the reach indicator: min over verified pairs {min_w}"
    );
}

// -- gate 5: rounded certificates stay feasible pointwise ----------------------

#[test]
fn gate_5_certificates_feasible_after_rounding() {
    let bundle = bundle();
    let mut worst = f64::NEG_INFINITY;
    let mut failures = Vec::new();
    for bench in [&bundle.drift, &bundle.decay] {
        for run in &bench.runs {
            let rep = feasibility_report(
                &bench.plan.spec,
                &run.v,
                &run.w,
                FEASIBILITY_SAMPLES,
                FEASIBILITY_TOL,
            );
            worst = worst.max(rep.max_violation);
            if !rep.pass {
                failures.push(format!(
                    "{} d={} margins {:?}",
                    bench.name, run.degree, rep.margins
                ));
            }
        }
    }
    println!(
        "[gate 5/9] certificate feasibility over {FEASIBILITY_SAMPLES} samples x 4 constraint groups: {} (max violation {:.3e}, tol {FEASIBILITY_TOL})",
        if failures.is_empty() { "PASS" } else { "FAIL" },
        worst.max(0.0),
    );
    assert!(failures.is_empty(), "constraint-group violations above tolerance: {failures:?}");
}

// -- gate 6: transport identity along simulated trajectories -------------------

#[test]
fn gate_6_transport_identity_random_certificates() {
    let bundle = bundle();
    let spec = &bundle.drift.plan.spec;
    let vars = spec.var_space();
    let basis = basis_enumerate(vars.total(), LIOUVILLE_TEST_DEGREE);
    let mut rng = ChaCha8Rng::seed_from_u64(LIOUVILLE_SEED);
    let mut max_residual = 0.0f64;
    for _ in 0..LIOUVILLE_POLYS {
        let raw: Vec<f64> = (0..basis.exponents.len()).map(|_| rng.gen_range(-1.0..=1.0)).collect();
        let scale: f64 = raw.iter().map(|c| c.abs()).sum();
        let v = MultiPoly::from_terms(
            vars,
            basis.exponents.iter().zip(&raw).map(|(m, &c)| (m.0.clone(), c / scale)),
        )
        .expect("basis exponents match the variable space");
        for _ in 0..LIOUVILLE_TRAJECTORIES {
            let x0 = uniform_point(&mut rng, &spec.state_box);
            let theta = uniform_point(&mut rng, &spec.theta_box);
            let traj = integrate_rk4(spec, &x0, &theta, LIOUVILLE_STEPS);
            max_residual = max_residual.max(check_liouville_identity(&traj, &v, spec).abs());
        }
    }
    let pass = max_residual <= LIOUVILLE_TOL;
    println!(
        "[gate 6/9] transport identity on {LIOUVILLE_POLYS} unit-normalized degree-{LIOUVILLE_TEST_DEGREE} polynomials x {LIOUVILLE_TRAJECTORIES} trajectories: {} (max residual {max_residual:.3e}, tol {LIOUVILLE_TOL})",
        if pass { "PASS" } else { "FAIL" },
    );
    assert!(pass, "occupation-measure identity drifted: {max_residual:.3e}");
}

// -- gate 7: standalone numeric oracles ----------------------------------------

/// Composite Simpson quadrature of x^k over [lo, hi] with `panels` panels.
fn simpson_power(lo: f64, hi: f64, k: u32, panels: usize) -> f64 {
    let h = (hi - lo) / panels as f64;
    let f = |x: f64| x.powi(k as i32);
    let mut acc = f(lo) + f(hi);
    for i in 1..panels {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        acc += w * f(lo + h * i as f64);
    }
    acc * h / 3.0
}

fn micro_free_problem() -> SdpProblem {
    // minimize u subject to X11 = u, X22 = u, 2 X12 = 2, X PSD (2x2);
    // optimum u* = 1 at X = all-ones.
    SdpProblem {
        psd_blocks: vec![("g".into(), 2)],
        free_vars: 1,
        equalities: vec![
            EqRow { block_entries: vec![(0, 0, 0, 1.0)], free_entries: vec![(0, -1.0)], rhs: 0.0 },
            EqRow { block_entries: vec![(0, 1, 1, 1.0)], free_entries: vec![(0, -1.0)], rhs: 0.0 },
            EqRow { block_entries: vec![(0, 0, 1, 1.0)], free_entries: vec![], rhs: 2.0 },
        ],
        objective_free: vec![1.0],
        block_costs: vec![vec![]],
    }
}

fn micro_trace_problem() -> SdpProblem {
    // minimize tr(X) subject to X11 = 1, X PSD (2x2); optimum 1 at e1 e1^T.
    SdpProblem {
        psd_blocks: vec![("x".into(), 2)],
        free_vars: 0,
        equalities: vec![EqRow {
            block_entries: vec![(0, 0, 0, 1.0)],
            free_entries: vec![],
            rhs: 1.0,
        }],
        objective_free: vec![],
        block_costs: vec![vec![(0, 0, 1.0), (1, 1, 1.0)]],
    }
}

#[test]
fn gate_7_unit_oracles() {
    let mut parts = Vec::new();
    let mut ok = true;

    // Box moments against composite Simpson quadrature.
    let b = Domain::new(vec![-0.7, 0.2], vec![1.3, 2.0]).expect("valid box");
    let exponent = [5u32, 4u32];
    let exact = lebesgue_moment(&b, &exponent);
    let quad = simpson_power(-0.7, 1.3, 5, 1024) * simpson_power(0.2, 2.0, 4, 1024);
    let moment_rel = ((exact - quad) / quad).abs();
    if moment_rel > MOMENT_REL_TOL {
        ok = false;
    }
    parts.push(format!("box moment rel err {moment_rel:.2e}"));

    // Moments of the uniform parameter marginal on [-1, 1].
    let dist = ThetaDistribution::uniform_box(
        Domain::new(vec![-1.0], vec![1.0]).expect("valid box"),
    );
    let expected = [1.0, 0.0, 1.0 / 3.0, 0.0, 0.2];
    let mut theta_err = 0.0f64;
    for (k, want) in expected.iter().enumerate() {
        let got = dist.moment(&[k as u32]).expect("uniform moments exist");
        theta_err = theta_err.max((got - want).abs());
    }
    if theta_err > THETA_MOMENT_TOL {
        ok = false;
    }
    parts.push(format!("parameter moment err {theta_err:.2e}"));

    // Fourth-order convergence of the integrator on dx/dt = -x.
    let vars = VarSpace::new(1, 1, 1);
    let spec = brs_core::relax::ProblemSpec {
        dynamics: vec![MultiPoly::parse("-1 * x1", vars).expect("linear decay field")],
        horizon: 1.0,
        state_box: Domain::new(vec![-3.0], vec![3.0]).expect("valid box"),
        theta_box: Domain::new(vec![-1.0], vec![1.0]).expect("valid box"),
        target_box: Domain::new(vec![-0.1], vec![0.1]).expect("valid box"),
    };
    let err_at = |steps: usize| -> f64 {
        let traj = integrate_rk4(&spec, &[1.0], &[0.0], steps);
        (traj.states.last().expect("nonempty path")[0] - (-1.0f64).exp()).abs()
    };
    let errs: Vec<f64> = [25, 50, 100, 200].iter().map(|&n| err_at(n)).collect();
    let mut order_ok = true;
    for pair in errs.windows(2) {
        let ratio = pair[0] / pair[1];
        if !(12.0..=20.0).contains(&ratio) {
            order_ok = false;
        }
    }
    if !order_ok {
        ok = false;
    }
    parts.push(format!("integrator halving ratios {:?}", errs.windows(2).map(|p| p[0] / p[1]).collect::<Vec<_>>()));

    // Micro block problems with known optima, plus first-order conditions.
    let mut sdp_err = 0.0f64;
    let mut kkt_ok = true;
    for (prob, optimum) in [(micro_free_problem(), 1.0), (micro_trace_problem(), 1.0)] {
        let opts = brs_core::sdp::SolveOptions { tol: 1e-9, max_iter: 200 };
        let sol = sdp::solve(&prob, &opts).expect("micro problem is well posed");
        if sol.status != SolveStatus::Optimal {
            ok = false;
        }
        sdp_err = sdp_err.max((sol.primal_objective - optimum).abs());
        if !check_kkt(&prob, &sol, MICRO_SDP_TOL).pass {
            kkt_ok = false;
        }
    }
    if sdp_err > MICRO_SDP_TOL || !kkt_ok {
        ok = false;
    }
    parts.push(format!("micro optimum err {sdp_err:.2e}, first-order conditions {}", if kkt_ok { "ok" } else { "violated" }));

    println!(
        "[gate 7/9] unit oracles: {} ({})",
        if ok { "PASS" } else { "FAIL" },
        parts.join("; "),
    );
    assert!(moment_rel <= MOMENT_REL_TOL, "box moment vs quadrature: {moment_rel:.3e}");
    assert!(theta_err <= THETA_MOMENT_TOL, "uniform parameter moments: {theta_err:.3e}");
    assert!(order_ok, "integrator must converge at fourth order: errors {errs:?}");
    assert!(sdp_err <= MICRO_SDP_TOL && kkt_ok, "micro block problems: err {sdp_err:.3e}");
}

// -- gate 8: decay benchmark matches the closed-form flow map ------------------

fn dist_to_intervals(x: f64, ivs: &[(f64, f64)]) -> f64 {
    ivs.iter()
        .map(|&(l, u)| if x < l { l - x } else if x > u { x - u } else { 0.0 })
        .fold(f64::INFINITY, f64::min)
}

/// Symmetric Hausdorff distance between two unions of closed intervals,
/// estimated on a fine sampling lattice over [lo, hi].
fn hausdorff_intervals(a: &[(f64, f64)], b: &[(f64, f64)], lo: f64, hi: f64) -> f64 {
    let n = 8001;
    let mut h = 0.0f64;
    for i in 0..n {
        let x = lo + (hi - lo) * i as f64 / (n - 1) as f64;
        if dist_to_intervals(x, a) == 0.0 {
            h = h.max(dist_to_intervals(x, b));
        }
        if dist_to_intervals(x, b) == 0.0 {
            h = h.max(dist_to_intervals(x, a));
        }
    }
    h
}

#[test]
fn gate_8_decay_set_close_to_flow_map_preimage() {
    let bundle = bundle();
    let bench = &bundle.decay;
    let run = bench.runs.iter().find(|r| r.degree == 8).expect("degree-8 run");
    let set = extract_alpha_set(&run.field, 0.5).expect("alpha in (0, 1]");
    let truth = [(-DECAY_TRUE_HALF_WIDTH, DECAY_TRUE_HALF_WIDTH)];
    let lo = bench.plan.spec.state_box.lower()[0];
    let hi = bench.plan.spec.state_box.upper()[0];
    let h = hausdorff_intervals(&set.interval_list, &truth, lo, hi);
    let pass = h <= HAUSDORFF_TOL;
    println!(
        "[gate 8/9] decay set vs closed-form preimage +/-{DECAY_TRUE_HALF_WIDTH:.4}: {} (Hausdorff {h:.4}, tol {HAUSDORFF_TOL}, extracted {:?})",
        if pass { "PASS" } else { "FAIL" },
        set.interval_list,
    );
    assert!(pass, "Hausdorff distance {h:.4} exceeds {HAUSDORFF_TOL}");
}

// -- gate 9: repeated runs are byte-identical -----------------------------------

const RERUN_CONFIG: &str = r#"
output_dir = "replaced-below"

[problem]
dynamics = ["theta1"]
horizon = 1.0
state_box = { lower = [-2.0], upper = [2.0] }
theta_box = { lower = [-1.0], upper = [1.0] }
target_box = { lower = [-0.25], upper = [0.25] }

[distribution]
kind = "uniform_box"

[relaxation]
degree = 4

[solver]
tol = 1e-7

[extraction]
alphas = [0.2]
grid_points = 81

[validation]
samples = 200
seed = 3
stat_margin = 0.08
"#;

#[test]
fn gate_9_repeat_runs_byte_identical() {
    let tmp = tempfile::tempdir().expect("temp dir");
    let mut outputs: Vec<std::collections::BTreeMap<String, Vec<u8>>> = Vec::new();
    for run_idx in 0..2 {
        let mut plan = parse_config(RERUN_CONFIG).expect("inline config parses");
        plan.output_dir = tmp.path().join(format!("run{run_idx}"));
        run_solve(&plan).expect("solve succeeds");
        run_validate(&plan).expect("validation succeeds");
        let mut files = std::collections::BTreeMap::new();
        for entry in std::fs::read_dir(&plan.output_dir).expect("output dir exists") {
            let entry = entry.expect("readable entry");
            files.insert(
                entry.file_name().to_string_lossy().into_owned(),
                std::fs::read(entry.path()).expect("readable artifact"),
            );
        }
        outputs.push(files);
    }
    let names: Vec<&String> = outputs[0].keys().collect();
    let same_names = outputs[0].keys().eq(outputs[1].keys());
    let diffs: Vec<&String> = outputs[0]
        .iter()
        .filter(|(name, bytes)| outputs[1].get(*name) != Some(bytes))
        .map(|(name, _)| name)
        .collect();
    let pass = same_names && diffs.is_empty();
    println!(
        "[gate 9/9] repeated solve+validate byte-identical: {} ({} artifacts compared)",
        if pass { "PASS" } else { "FAIL" },
        names.len(),
    );
    assert!(same_names, "artifact sets differ: {:?} vs {:?}", outputs[0].keys(), outputs[1].keys());
    assert!(diffs.is_empty(), "artifacts differ between reruns: {diffs:?}");
}
