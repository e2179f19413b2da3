//! Ground-truth engine: numeric trajectory integration, occupation integrals
//! along trajectories, transport-identity residual checks, and Monte Carlo
//! estimation of the reach-probability field.
//!
//! Everything here is deliberately independent of the relaxation/SDP path so
//! it can serve as an oracle for it: trajectories come from a fixed-step
//! classical Runge–Kutta scheme, integrals from composite trapezoid
//! quadrature, and probabilities from seeded Monte Carlo with per-grid-point
//! sample streams (schedule-independent and bit-reproducible).

use std::io::{self, Write};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::distribution::{DistError, ThetaDistribution};
use crate::poly::MultiPoly;
use crate::relax::ProblemSpec;
use crate::sets::Box;

/// Default number of RK4 steps per trajectory. Fixed-step (not adaptive) so
/// runs are deterministic and the error order is easy to reason about.
pub const DEFAULT_RK4_STEPS: usize = 1000;

/// Two-sided 95% normal quantile used for binomial confidence half-widths.
const Z_95: f64 = 1.96;

/// Slack for box-membership checks along trajectories, so states sitting on a
/// face (e.g. a target boundary hit exactly) are not flagged by rounding.
const MEMBERSHIP_TOL: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("at least one Monte Carlo sample per grid point is required")]
    NoSamples,
    #[error("a lattice needs at least one point per dimension")]
    EmptyLattice,
    #[error("grid has dimension {got}, state space has dimension {expected}")]
    GridDimMismatch { got: usize, expected: usize },
    #[error(transparent)]
    Distribution(#[from] DistError),
}

/// Regular rectangular lattice of evaluation points inside a box.
///
/// Points are stored in row-major order: the first coordinate varies slowest.
/// With one point per dimension the lattice degenerates to the box center.
#[derive(Debug, Clone, PartialEq)]
pub struct Lattice {
    axes: Vec<Vec<f64>>,
    points: Vec<Vec<f64>>,
}

impl Lattice {
    pub fn regular(domain: &Box, points_per_dim: usize) -> Result<Lattice, OracleError> {
        if points_per_dim == 0 {
            return Err(OracleError::EmptyLattice);
        }
        let mut axes = Vec::with_capacity(domain.dim());
        for (&lo, &hi) in domain.lower().iter().zip(domain.upper()) {
            let axis = if points_per_dim == 1 {
                vec![0.5 * (lo + hi)]
            } else {
                (0..points_per_dim)
                    .map(|i| lo + (hi - lo) * (i as f64) / ((points_per_dim - 1) as f64))
                    .collect()
            };
            axes.push(axis);
        }
        Ok(Lattice::from_axes(axes))
    }

    pub fn from_axes(axes: Vec<Vec<f64>>) -> Lattice {
        let total: usize = axes.iter().map(|a| a.len()).product();
        let mut points = Vec::with_capacity(total);
        let mut idx = vec![0usize; axes.len()];
        for _ in 0..total {
            points.push(idx.iter().zip(&axes).map(|(&i, axis)| axis[i]).collect());
            // Odometer increment, last coordinate fastest.
            for k in (0..axes.len()).rev() {
                idx[k] += 1;
                if idx[k] < axes[k].len() {
                    break;
                }
                idx[k] = 0;
            }
        }
        Lattice { axes, points }
    }

    pub fn dim(&self) -> usize {
        self.axes.len()
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn axes(&self) -> &[Vec<f64>] {
        &self.axes
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }
}

/// One integrated trajectory of the parameterized system.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub theta: Vec<f64>,
    /// Increasing time grid from 0 to the horizon. If `non_finite` is set the
    /// grid (and `states`) stop at the step where the blow-up appeared.
    pub times: Vec<f64>,
    /// One state per time; `states.len() == times.len()`.
    pub states: Vec<Vec<f64>>,
    /// Final state lies in the target box (always false for flagged blow-ups).
    pub terminal_in_target: bool,
    /// Some step endpoint left the state box. The trajectory is still
    /// integrated to the horizon; callers decide how to count it.
    pub exited_domain: bool,
    /// Integration produced a non-finite value and stopped early.
    pub non_finite: bool,
}

/// One additive term: a coefficient times a product of (variable, power)
/// factors, with variable indices in the (t, x1..xn, θ1..θm) layout.
type CompiledTerm = (f64, Vec<(usize, u32)>);

/// Dynamics compiled to flat term lists for the Monte Carlo hot loop.
struct CompiledSystem {
    nx: usize,
    horizon: f64,
    rhs: Vec<Vec<CompiledTerm>>,
    state_lower: Vec<f64>,
    state_upper: Vec<f64>,
    target_lower: Vec<f64>,
    target_upper: Vec<f64>,
}

impl CompiledSystem {
    fn new(spec: &ProblemSpec) -> CompiledSystem {
        let nx = spec.nx();
        let rhs = spec
            .dynamics
            .iter()
            .map(|p| {
                p.terms()
                    .map(|(m, c)| {
                        let pows = m
                            .0
                            .iter()
                            .enumerate()
                            .filter(|(_, &e)| e > 0)
                            .map(|(i, &e)| (i, e))
                            .collect();
                        (c, pows)
                    })
                    .collect()
            })
            .collect();
        CompiledSystem {
            nx,
            horizon: spec.horizon,
            rhs,
            state_lower: spec.state_box.lower().to_vec(),
            state_upper: spec.state_box.upper().to_vec(),
            target_lower: spec.target_box.lower().to_vec(),
            target_upper: spec.target_box.upper().to_vec(),
        }
    }

    #[inline]
    fn eval_into(&self, t: f64, x: &[f64], theta: &[f64], out: &mut [f64]) {
        for (slot, terms) in out.iter_mut().zip(&self.rhs) {
            let mut acc = 0.0;
            for (coeff, pows) in terms {
                let mut term = *coeff;
                for &(idx, e) in pows {
                    let z = if idx == 0 {
                        t
                    } else if idx <= self.nx {
                        x[idx - 1]
                    } else {
                        theta[idx - 1 - self.nx]
                    };
                    term *= z.powi(e as i32);
                }
                acc += term;
            }
            *slot = acc;
        }
    }

    #[inline]
    fn in_state_box(&self, x: &[f64]) -> bool {
        x.iter()
            .zip(self.state_lower.iter().zip(&self.state_upper))
            .all(|(&z, (&lo, &hi))| z >= lo - MEMBERSHIP_TOL && z <= hi + MEMBERSHIP_TOL)
    }

    #[inline]
    fn in_target_box(&self, x: &[f64]) -> bool {
        x.iter()
            .zip(self.target_lower.iter().zip(&self.target_upper))
            .all(|(&z, (&lo, &hi))| z >= lo - MEMBERSHIP_TOL && z <= hi + MEMBERSHIP_TOL)
    }
}

/// Reusable RK4 workspace; `state` holds the current state after `run`.
struct Integrator {
    sys: CompiledSystem,
    state: Vec<f64>,
    k1: Vec<f64>,
    k2: Vec<f64>,
    k3: Vec<f64>,
    k4: Vec<f64>,
    stage: Vec<f64>,
}

struct RunFlags {
    exited_domain: bool,
    non_finite: bool,
    /// Index of the last valid state (equals `steps` unless a blow-up stopped
    /// the run earlier).
    last_step: usize,
}

impl Integrator {
    fn new(spec: &ProblemSpec) -> Integrator {
        let nx = spec.nx();
        Integrator {
            sys: CompiledSystem::new(spec),
            state: vec![0.0; nx],
            k1: vec![0.0; nx],
            k2: vec![0.0; nx],
            k3: vec![0.0; nx],
            k4: vec![0.0; nx],
            stage: vec![0.0; nx],
        }
    }

    /// Time of grid node `i`; exact 0 at i = 0 and exact horizon at i = steps.
    #[inline]
    fn node_time(&self, i: usize, steps: usize) -> f64 {
        self.sys.horizon * (i as f64) / (steps as f64)
    }

    /// Integrates from `x0`, leaving the final state in `self.state`. When
    /// `record` is given, every grid state is appended to it.
    fn run(
        &mut self,
        x0: &[f64],
        theta: &[f64],
        steps: usize,
        mut record: Option<&mut Vec<Vec<f64>>>,
    ) -> RunFlags {
        assert!(steps >= 1, "at least one integration step is required");
        assert_eq!(x0.len(), self.sys.nx, "initial state dimension mismatch");
        let nx = self.sys.nx;
        self.state.copy_from_slice(x0);
        if let Some(rec) = record.as_deref_mut() {
            rec.push(self.state.clone());
        }
        let mut exited = !self.sys.in_state_box(&self.state);
        for i in 0..steps {
            let t0 = self.node_time(i, steps);
            let t1 = self.node_time(i + 1, steps);
            let h = t1 - t0;
            self.sys.eval_into(t0, &self.state, theta, &mut self.k1);
            for j in 0..nx {
                self.stage[j] = self.state[j] + 0.5 * h * self.k1[j];
            }
            self.sys.eval_into(t0 + 0.5 * h, &self.stage, theta, &mut self.k2);
            for j in 0..nx {
                self.stage[j] = self.state[j] + 0.5 * h * self.k2[j];
            }
            self.sys.eval_into(t0 + 0.5 * h, &self.stage, theta, &mut self.k3);
            for j in 0..nx {
                self.stage[j] = self.state[j] + h * self.k3[j];
            }
            self.sys.eval_into(t1, &self.stage, theta, &mut self.k4);
            for j in 0..nx {
                self.state[j] +=
                    h / 6.0 * (self.k1[j] + 2.0 * self.k2[j] + 2.0 * self.k3[j] + self.k4[j]);
            }
            if self.state.iter().any(|z| !z.is_finite()) {
                return RunFlags { exited_domain: true, non_finite: true, last_step: i };
            }
            if let Some(rec) = record.as_deref_mut() {
                rec.push(self.state.clone());
            }
            if !exited && !self.sys.in_state_box(&self.state) {
                exited = true;
            }
        }
        RunFlags { exited_domain: exited, non_finite: false, last_step: steps }
    }
}

/// Integrates one trajectory with classical fixed-step fourth-order
/// Runge–Kutta (step = horizon / steps). A non-finite state stops the run and
/// flags the trajectory; leaving the state box only flags it.
pub fn integrate_rk4(
    spec: &ProblemSpec,
    x0: &[f64],
    theta: &[f64],
    steps: usize,
) -> Trajectory {
    assert_eq!(theta.len(), spec.ntheta(), "parameter dimension mismatch");
    let mut integ = Integrator::new(spec);
    let mut states = Vec::with_capacity(steps + 1);
    let flags = integ.run(x0, theta, steps, Some(&mut states));
    let times = (0..=flags.last_step).map(|i| integ.node_time(i, steps)).collect();
    let terminal_in_target =
        !flags.non_finite && integ.sys.in_target_box(states.last().expect("nonempty path"));
    Trajectory {
        theta: theta.to_vec(),
        times,
        states,
        terminal_in_target,
        exited_domain: flags.exited_domain,
        non_finite: flags.non_finite,
    }
}

/// Composite trapezoid quadrature of v(t, x(t), θ) over the trajectory grid.
/// Approximates the pairing of the trajectory's occupation measure with v.
pub fn occupation_integral(traj: &Trajectory, v: &MultiPoly) -> f64 {
    let nx = traj.states.first().map_or(0, |s| s.len());
    let vars = v.vars();
    assert_eq!(vars.nt, 1, "test function must carry a time variable");
    assert_eq!(vars.nx, nx, "state dimension mismatch");
    assert_eq!(vars.ntheta, traj.theta.len(), "parameter dimension mismatch");

    let mut point = vec![0.0; 1 + nx + traj.theta.len()];
    point[1 + nx..].copy_from_slice(&traj.theta);
    let mut value_at = |i: usize| {
        point[0] = traj.times[i];
        point[1..1 + nx].copy_from_slice(&traj.states[i]);
        v.eval(&point)
    };
    let mut acc = 0.0;
    let mut prev = value_at(0);
    for i in 1..traj.times.len() {
        let cur = value_at(i);
        acc += 0.5 * (traj.times[i] - traj.times[i - 1]) * (prev + cur);
        prev = cur;
    }
    acc
}

/// Residual |v(T, x(T), θ) − v(0, x₀, θ) − ∫₀ᵀ (∂v/∂t + ∇ₓv·f) dt| along one
/// trajectory; the integral uses [`occupation_integral`]. Zero in exact
/// arithmetic for exact flows, so the value measures quadrature plus
/// integration error.
pub fn check_liouville_identity(traj: &Trajectory, v: &MultiPoly, spec: &ProblemSpec) -> f64 {
    let lv = v
        .lie_derivative(&spec.dynamics)
        .expect("test function and dynamics share a variable layout");
    let nx = spec.nx();
    let mut point = vec![0.0; 1 + nx + traj.theta.len()];
    point[1 + nx..].copy_from_slice(&traj.theta);

    point[0] = traj.times[0];
    point[1..1 + nx].copy_from_slice(&traj.states[0]);
    let v_start = v.eval(&point);

    let last = traj.times.len() - 1;
    point[0] = traj.times[last];
    point[1..1 + nx].copy_from_slice(&traj.states[last]);
    let v_end = v.eval(&point);

    (v_end - v_start - occupation_integral(traj, &lv)).abs()
}

/// Monte Carlo estimate of the reach probability over a state-space lattice.
#[derive(Debug, Clone)]
pub struct EmpiricalField {
    pub grid: Lattice,
    /// Estimated probability p̂(x) that a trajectory from x reaches the target
    /// at the horizon (flagged trajectories count as non-reaching).
    pub values: Vec<f64>,
    /// 95% binomial confidence half-width per grid point.
    pub half_widths: Vec<f64>,
    /// Fraction of samples flagged for leaving the state box (or blowing up).
    pub exited_fractions: Vec<f64>,
    pub samples_per_point: usize,
}

impl EmpiricalField {
    /// Membership flags of the empirical α-superlevel set {p̂ ≥ α}.
    pub fn alpha_members(&self, alpha: f64) -> Vec<bool> {
        self.values.iter().map(|&p| p >= alpha).collect()
    }

    /// CSV rows `x1,...,xn,p_hat,half_width,n_samples,exited_domain_fraction`.
    pub fn write_csv<W: Write>(&self, out: &mut W) -> io::Result<()> {
        let n = self.grid.dim();
        let mut header = String::new();
        for k in 1..=n {
            header.push_str(&format!("x{k},"));
        }
        header.push_str("p_hat,half_width,n_samples,exited_domain_fraction");
        writeln!(out, "{header}")?;
        for (i, pt) in self.grid.points().iter().enumerate() {
            for z in pt {
                write!(out, "{z},")?;
            }
            writeln!(
                out,
                "{},{},{},{}",
                self.values[i], self.half_widths[i], self.samples_per_point,
                self.exited_fractions[i]
            )?;
        }
        Ok(())
    }
}

/// Seed for the sample stream of one grid point, derived from the run seed
/// and the point index so the streams are disjoint and schedule-independent.
fn point_stream_seed(seed: u64, point_index: usize) -> [u8; 32] {
    let mut bytes = [0u8; 32];
    bytes[..8].copy_from_slice(&seed.to_le_bytes());
    bytes[8..16].copy_from_slice(&(point_index as u64).to_le_bytes());
    bytes
}

/// Estimates the reach probability at every lattice point by integrating
/// `samples` trajectories with θ drawn from `dist` ([`DEFAULT_RK4_STEPS`]
/// fixed RK4 steps each). Trajectories that leave the state box or blow up
/// count as non-reaching and are tallied in `exited_fractions`. Results are
/// bit-reproducible for a given seed.
pub fn empirical_confidence(
    spec: &ProblemSpec,
    dist: &ThetaDistribution,
    grid: &Lattice,
    samples: usize,
    seed: u64,
) -> Result<EmpiricalField, OracleError> {
    empirical_confidence_with_steps(spec, dist, grid, samples, seed, DEFAULT_RK4_STEPS)
}

/// [`empirical_confidence`] with an explicit RK4 step count.
pub fn empirical_confidence_with_steps(
    spec: &ProblemSpec,
    dist: &ThetaDistribution,
    grid: &Lattice,
    samples: usize,
    seed: u64,
    steps: usize,
) -> Result<EmpiricalField, OracleError> {
    if samples == 0 {
        return Err(OracleError::NoSamples);
    }
    if grid.dim() != spec.nx() {
        return Err(OracleError::GridDimMismatch { got: grid.dim(), expected: spec.nx() });
    }
    if !dist.is_sampleable() {
        return Err(OracleError::Distribution(DistError::Unsampleable));
    }

    let mut integ = Integrator::new(spec);
    let n_points = grid.len();
    let mut values = Vec::with_capacity(n_points);
    let mut half_widths = Vec::with_capacity(n_points);
    let mut exited_fractions = Vec::with_capacity(n_points);
    for (idx, x0) in grid.points().iter().enumerate() {
        let mut rng = ChaCha8Rng::from_seed(point_stream_seed(seed, idx));
        let mut reached = 0usize;
        let mut flagged = 0usize;
        for _ in 0..samples {
            let theta = dist.sample(&mut rng)?;
            let flags = integ.run(x0, &theta, steps, None);
            let bad = flags.exited_domain || flags.non_finite;
            if bad {
                flagged += 1;
            } else if integ.sys.in_target_box(&integ.state) {
                reached += 1;
            }
        }
        let n = samples as f64;
        let p = reached as f64 / n;
        values.push(p);
        half_widths.push(Z_95 * (p * (1.0 - p) / n).sqrt());
        exited_fractions.push(flagged as f64 / n);
    }
    Ok(EmpiricalField {
        grid: grid.clone(),
        values,
        half_widths,
        exited_fractions,
        samples_per_point: samples,
    })
}
