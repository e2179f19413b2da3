//! Assembly of the degree-d sum-of-squares relaxation.
//!
//! The continuous problem asks for a pair (v(t,x,θ), w(x,θ)) minimizing
//! ∫ w d(λ_x⊗λ_θ) subject to four pointwise inequalities:
//!
//!   (c1)  L_f v ≤ 0          on [0,T] × X × Θ      (v non-increasing along flows)
//!   (c2)  w ≥ 0              on X × Θ
//!   (c3)  w − v(0,·) − 1 ≥ 0 on X × Θ
//!   (c4)  v(T,·) ≥ 0         on X_T × Θ
//!
//! Each inequality "p ≥ 0 on {g_i ≥ 0}" is certified in Putinar form
//! p = σ₀ + Σ σ_i g_i with SOS multipliers σ of degree 2⌊(D − deg g_i)/2⌋,
//! and expanded monomial-by-monomial into linear equalities between Gram
//! matrix entries (the SDP blocks) and the v/w coefficients (free variables).
//!
//! All domains are affinely rescaled to the unit cube [−1,1]^k and the
//! horizon to [0,1] before assembly; the inverse maps are recorded so
//! solutions can be expressed in original coordinates.

use std::collections::BTreeMap;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::poly::{basis_enumerate, Monomial, MonomialBasis, MultiPoly, VarSpace};
use crate::sdp::{EqRow, SdpProblem};
use crate::sets::{box_to_inequalities, moments_vector, Box, ScaleMap, SetError};

#[derive(Debug, Error)]
pub enum RelaxError {
    #[error("relaxation degree must be even, got {0}")]
    OddDegree(u32),
    #[error("relaxation degree {degree} is too small: dynamics have degree {needed} (need degree ≥ max(2, dynamics degree))")]
    DegreeTooSmall { degree: u32, needed: u32 },
    #[error("dynamics arity {got} does not match state dimension {expected}")]
    DynamicsArity { got: usize, expected: usize },
    #[error("dynamics component {index} lives on {got} variables, expected (t, x1..x{nx}, theta1..theta{ntheta})")]
    DynamicsVars { index: usize, got: usize, nx: usize, ntheta: usize },
    #[error("horizon must be positive and finite, got {0}")]
    BadHorizon(f64),
    #[error("target box is not contained in the state box (coordinate {0})")]
    TargetNotContained(usize),
    #[error(transparent)]
    EmptyDomain(#[from] SetError),
}

/// The dynamics, horizon, and domain boxes, all in original coordinates.
#[derive(Debug, Clone)]
pub struct ProblemSpec {
    /// One polynomial per state, over (t, x1..xn, theta1..thetam); the
    /// parameter components of the augmented field are identically zero.
    pub dynamics: Vec<MultiPoly>,
    pub horizon: f64,
    pub state_box: Box,
    pub theta_box: Box,
    pub target_box: Box,
}

impl ProblemSpec {
    pub fn nx(&self) -> usize {
        self.state_box.dim()
    }

    pub fn ntheta(&self) -> usize {
        self.theta_box.dim()
    }

    pub fn var_space(&self) -> VarSpace {
        VarSpace::new(1, self.nx(), self.ntheta())
    }

    pub fn validate(&self) -> Result<(), RelaxError> {
        if !(self.horizon.is_finite() && self.horizon > 0.0) {
            return Err(RelaxError::BadHorizon(self.horizon));
        }
        if self.dynamics.len() != self.nx() {
            return Err(RelaxError::DynamicsArity { got: self.dynamics.len(), expected: self.nx() });
        }
        for (index, f) in self.dynamics.iter().enumerate() {
            if f.vars() != self.var_space() {
                return Err(RelaxError::DynamicsVars {
                    index,
                    got: f.vars().total(),
                    nx: self.nx(),
                    ntheta: self.ntheta(),
                });
            }
        }
        if self.target_box.dim() != self.nx() {
            return Err(RelaxError::TargetNotContained(self.target_box.dim().min(self.nx())));
        }
        for i in 0..self.nx() {
            if self.target_box.lower()[i] < self.state_box.lower()[i] - 1e-12
                || self.target_box.upper()[i] > self.state_box.upper()[i] + 1e-12
            {
                return Err(RelaxError::TargetNotContained(i));
            }
        }
        Ok(())
    }
}

/// Degree bookkeeping for one relaxation level.
#[derive(Debug, Clone)]
pub struct RelaxationSpec {
    pub degree: u32,
    pub v_basis: MonomialBasis,
    pub w_basis: MonomialBasis,
    /// Certificate degree of the Lie group (≥ degree when the dynamics push
    /// deg(L_f v) above it; always even).
    pub lie_degree: u32,
}

/// One Putinar constraint group after expansion.
#[derive(Debug, Clone)]
pub struct GroupMeta {
    pub label: &'static str,
    /// Row range [start, start+len) in SdpProblem::equalities.
    pub row_start: usize,
    pub row_len: usize,
    /// Exponent basis the rows are matched against (same order as rows).
    pub target_basis: MonomialBasis,
    /// (global block index, Gram basis, inequality polynomial g); g = 1 for σ₀.
    pub blocks: Vec<(usize, MonomialBasis, MultiPoly)>,
}

#[derive(Debug, Clone)]
pub struct AssembledRelaxation {
    pub sdp: SdpProblem,
    pub relaxation: RelaxationSpec,
    pub groups: Vec<GroupMeta>,
    pub x_map: ScaleMap,
    pub theta_map: ScaleMap,
    pub horizon: f64,
    /// ∏ half-widths of X×Θ: converts the scaled objective (an integral over
    /// the unit cube) to the original-coordinate integral.
    pub jacobian: f64,
    /// Lebesgue moments of the scaled w basis (= objective on the w slice).
    pub moments: Vec<f64>,
    pub nx: usize,
    pub ntheta: usize,
}

impl AssembledRelaxation {
    pub fn v_coeff_count(&self) -> usize {
        self.relaxation.v_basis.exponents.len()
    }

    pub fn w_coeff_count(&self) -> usize {
        self.relaxation.w_basis.exponents.len()
    }

    pub fn w_offset(&self) -> usize {
        self.v_coeff_count()
    }

    /// v in scaled coordinates (t ∈ [0,1], x,θ ∈ [−1,1]^k).
    pub fn v_scaled(&self, free_values: &[f64]) -> MultiPoly {
        let vars = VarSpace::new(1, self.nx, self.ntheta);
        MultiPoly::from_terms(
            vars,
            self.relaxation
                .v_basis
                .exponents
                .iter()
                .zip(free_values)
                .map(|(m, &c)| (m.0.clone(), c)),
        )
        .expect("basis exponents match variable space")
    }

    /// w in scaled coordinates.
    pub fn w_scaled(&self, free_values: &[f64]) -> MultiPoly {
        let vars = VarSpace::new(0, self.nx, self.ntheta);
        MultiPoly::from_terms(
            vars,
            self.relaxation
                .w_basis
                .exponents
                .iter()
                .zip(&free_values[self.w_offset()..])
                .map(|(m, &c)| (m.0.clone(), c)),
        )
        .expect("basis exponents match variable space")
    }

    /// v in original coordinates: substitutes t → t/T, x → (x−c)/h, θ likewise.
    pub fn v_original(&self, free_values: &[f64]) -> MultiPoly {
        let v = self.v_scaled(free_values);
        let n = v.vars().total();
        let mut a = vec![0.0; n];
        let mut b = vec![0.0; n];
        a[0] = 1.0 / self.horizon;
        let hx = self.x_map.half_widths();
        let hx_centers = self.x_centers();
        for i in 0..self.nx {
            a[1 + i] = 1.0 / hx[i];
            b[1 + i] = -hx_centers[i] / hx[i];
        }
        let ht = self.theta_map.half_widths();
        let ht_centers = self.theta_centers();
        for j in 0..self.ntheta {
            a[1 + self.nx + j] = 1.0 / ht[j];
            b[1 + self.nx + j] = -ht_centers[j] / ht[j];
        }
        v.substitute_affine(&a, &b)
    }

    /// w in original coordinates.
    pub fn w_original(&self, free_values: &[f64]) -> MultiPoly {
        let w = self.w_scaled(free_values);
        let joint = ScaleMap::concat(&[&self.x_map, &self.theta_map]);
        joint.poly_from_unit(&w, 0)
    }

    /// Original-coordinate objective ∫_{X×Θ} w dx dθ from the scaled optimum.
    pub fn objective_original(&self, scaled_objective: f64) -> f64 {
        self.jacobian * scaled_objective
    }

    fn x_centers(&self) -> Vec<f64> {
        let probe = vec![0.0; self.nx];
        self.x_map.from_unit(&probe)
    }

    fn theta_centers(&self) -> Vec<f64> {
        let probe = vec![0.0; self.ntheta];
        self.theta_map.from_unit(&probe)
    }
}

fn unit_box(dim: usize) -> Box {
    Box::new(vec![-1.0; dim], vec![1.0; dim]).expect("unit box is nonempty")
}

/// σ₀ + Σ σ_i g_i coefficient-matched against basis(nv, cert_degree): returns
/// (blocks, rows, row lookup). Rows carry only Gram entries; the caller adds
/// free-variable entries and right-hand sides.
struct Group {
    blocks: Vec<(String, usize, MonomialBasis, MultiPoly)>,
    rows: Vec<EqRow>,
    row_of: BTreeMap<Monomial, usize>,
    target: MonomialBasis,
}

fn putinar_group(
    label: &str,
    nv: usize,
    cert_degree: u32,
    gs: &[(String, MultiPoly)],
    block_offset: usize,
) -> Group {
    assert!(cert_degree.is_multiple_of(2));
    let target = basis_enumerate(nv, cert_degree);
    let row_of: BTreeMap<Monomial, usize> = target
        .exponents
        .iter()
        .enumerate()
        .map(|(i, m)| (m.clone(), i))
        .collect();
    let mut rows: Vec<EqRow> = (0..target.exponents.len()).map(|_| EqRow::default()).collect();

    let one = MultiPoly::constant(VarSpace::new(0, nv, 0), 1.0);
    let mut blocks: Vec<(String, usize, MonomialBasis, MultiPoly)> = Vec::new();
    let sos0_basis = basis_enumerate(nv, cert_degree / 2);
    blocks.push((format!("{label}_sos"), sos0_basis.exponents.len(), sos0_basis, one));
    for (suffix, g) in gs {
        let dg = g.degree().expect("inequality polynomials are nonzero");
        let half = (cert_degree - dg) / 2; // ⌊·⌋ via integer division
        let basis = basis_enumerate(nv, half);
        blocks.push((format!("{label}_{suffix}"), basis.exponents.len(), basis, g.clone()));
    }

    for (bi, (_, _, basis, g)) in blocks.iter().enumerate() {
        let nb = basis.exponents.len();
        for r in 0..nb {
            for c in r..nb {
                for (gm, gc) in g.terms() {
                    let e: Vec<u32> = basis.exponents[r]
                        .0
                        .iter()
                        .zip(&basis.exponents[c].0)
                        .zip(&gm.0)
                        .map(|((a, b), gme)| a + b + gme)
                        .collect();
                    let idx = *row_of
                        .get(&Monomial(e))
                        .expect("certificate terms stay within the target degree");
                    rows[idx].block_entries.push((block_offset + bi, r, c, gc));
                }
            }
        }
    }

    Group { blocks, rows, row_of, target }
}

pub fn assemble_dual_relaxation(
    spec: &ProblemSpec,
    degree: u32,
) -> Result<AssembledRelaxation, RelaxError> {
    spec.validate()?;
    if !degree.is_multiple_of(2) {
        return Err(RelaxError::OddDegree(degree));
    }
    let f_degree = spec
        .dynamics
        .iter()
        .filter_map(|f| f.degree())
        .max()
        .unwrap_or(0);
    if degree < 2 || degree < f_degree {
        return Err(RelaxError::DegreeTooSmall { degree, needed: f_degree.max(2) });
    }

    let nx = spec.nx();
    let ntheta = spec.ntheta();
    let vars_txt = VarSpace::new(1, nx, ntheta);
    let vars_xt = VarSpace::new(0, nx, ntheta);

    let x_map = ScaleMap::for_box(&spec.state_box);
    let theta_map = ScaleMap::for_box(&spec.theta_box);
    let t = spec.horizon;

    // Scaled dynamics: dx̂_i/dt̂ = (T/h_i)·f_i(T·t̂, c + h·x̂, c_θ + h_θ·θ̂).
    let mut subst_a = vec![0.0; 1 + nx + ntheta];
    let mut subst_b = vec![0.0; 1 + nx + ntheta];
    subst_a[0] = t;
    let hx = x_map.half_widths();
    subst_a[1..1 + nx].copy_from_slice(hx);
    subst_b[1..1 + nx].copy_from_slice(&spec.state_box.centers());
    subst_a[1 + nx..].copy_from_slice(theta_map.half_widths());
    subst_b[1 + nx..].copy_from_slice(&spec.theta_box.centers());
    let f_scaled: Vec<MultiPoly> = spec
        .dynamics
        .iter()
        .enumerate()
        .map(|(i, f)| f.substitute_affine(&subst_a, &subst_b).scale(t / hx[i]))
        .collect();

    let v_basis = basis_enumerate(1 + nx + ntheta, degree);
    let w_basis = basis_enumerate(nx + ntheta, degree);
    let nv_coeffs = v_basis.exponents.len();
    let nw_coeffs = w_basis.exponents.len();
    let free_vars = nv_coeffs + nw_coeffs;

    // Lie derivative of each v-basis monomial under the scaled field.
    let lie: Vec<MultiPoly> = v_basis
        .exponents
        .iter()
        .map(|m| {
            let mono = MultiPoly::from_terms(vars_txt, [(m.0.clone(), 1.0)]).unwrap();
            mono.lie_derivative(&f_scaled).expect("arity checked")
        })
        .collect();
    let lie_deg_raw = lie.iter().filter_map(|p| p.degree()).max().unwrap_or(0).max(degree);
    let lie_degree = lie_deg_raw + lie_deg_raw % 2; // round up to even

    // Inequality lists (scaled coordinates).
    let time_g = MultiPoly::from_terms(
        vars_txt,
        [
            {
                let mut e = vec![0; 1 + nx + ntheta];
                e[0] = 1;
                (e, 1.0)
            },
            {
                let mut e = vec![0; 1 + nx + ntheta];
                e[0] = 2;
                (e, -1.0)
            },
        ],
    )
    .unwrap();
    let mut gs_c1: Vec<(String, MultiPoly)> = vec![("time".into(), time_g)];
    for (i, g) in box_to_inequalities(&unit_box(nx), vars_txt, 1).into_iter().enumerate() {
        gs_c1.push((format!("x{}", i + 1), g));
    }
    for (j, g) in box_to_inequalities(&unit_box(ntheta), vars_txt, 1 + nx).into_iter().enumerate()
    {
        gs_c1.push((format!("theta{}", j + 1), g));
    }

    let mut gs_xt: Vec<(String, MultiPoly)> = Vec::new();
    for (i, g) in box_to_inequalities(&unit_box(nx), vars_xt, 0).into_iter().enumerate() {
        gs_xt.push((format!("x{}", i + 1), g));
    }
    for (j, g) in box_to_inequalities(&unit_box(ntheta), vars_xt, nx).into_iter().enumerate() {
        gs_xt.push((format!("theta{}", j + 1), g));
    }

    // Scaled target box (X_T in unit coordinates of X).
    let target_lo = x_map.to_unit(spec.target_box.lower());
    let target_hi = x_map.to_unit(spec.target_box.upper());
    let target_scaled = Box::new(target_lo, target_hi)?;
    let mut gs_c4: Vec<(String, MultiPoly)> = Vec::new();
    for (i, g) in box_to_inequalities(&target_scaled, vars_xt, 0).into_iter().enumerate() {
        gs_c4.push((format!("x{}", i + 1), g));
    }
    for (j, g) in box_to_inequalities(&unit_box(ntheta), vars_xt, nx).into_iter().enumerate() {
        gs_c4.push((format!("theta{}", j + 1), g));
    }

    // Build the four groups with global block/row numbering.
    struct AsmState {
        psd_blocks: Vec<(String, usize)>,
        equalities: Vec<EqRow>,
        groups: Vec<GroupMeta>,
    }
    impl AsmState {
        fn push_group(
            &mut self,
            label: &'static str,
            mut group: Group,
        ) -> (usize, BTreeMap<Monomial, usize>) {
            let row_start = self.equalities.len();
            let blocks_meta: Vec<(usize, MonomialBasis, MultiPoly)> = group
                .blocks
                .iter()
                .enumerate()
                .map(|(k, (_, _, basis, g))| {
                    (self.psd_blocks.len() + k, basis.clone(), g.clone())
                })
                .collect();
            for (name, size, _, _) in &group.blocks {
                self.psd_blocks.push((name.clone(), *size));
            }
            self.equalities.append(&mut group.rows);
            self.groups.push(GroupMeta {
                label,
                row_start,
                row_len: group.target.exponents.len(),
                target_basis: group.target.clone(),
                blocks: blocks_meta,
            });
            (row_start, group.row_of)
        }
    }
    let mut st = AsmState { psd_blocks: Vec::new(), equalities: Vec::new(), groups: Vec::new() };

    // (c1)  σ-sum = −L v  ⇔  Gram rows + (L v coefficients) = 0.
    let g1 = putinar_group("c1", 1 + nx + ntheta, lie_degree, &gs_c1, st.psd_blocks.len());
    let (start1, rows1) = st.push_group("c1", g1);
    for (k, lv) in lie.iter().enumerate() {
        for (mono, coef) in lv.terms() {
            let idx = start1
                + rows1
                    .get(mono)
                    .copied()
                    .expect("Lie terms stay within the certificate degree");
            st.equalities[idx].free_entries.push((k, coef));
        }
    }

    // (c2)  σ-sum = w  ⇔  Gram rows − w = 0.
    let g2 = putinar_group("c2", nx + ntheta, degree, &gs_xt, st.psd_blocks.len());
    let (start2, rows2) = st.push_group("c2", g2);
    for (j, mono) in w_basis.exponents.iter().enumerate() {
        let idx = start2 + rows2[mono];
        st.equalities[idx].free_entries.push((nv_coeffs + j, -1.0));
    }

    // (c3)  σ-sum = w − v(0,·) − 1  ⇔  Gram rows − w + v(0,·) = −1·[e = 0].
    let g3 = putinar_group("c3", nx + ntheta, degree, &gs_xt, st.psd_blocks.len());
    let (start3, rows3) = st.push_group("c3", g3);
    for (j, mono) in w_basis.exponents.iter().enumerate() {
        let idx = start3 + rows3[mono];
        st.equalities[idx].free_entries.push((nv_coeffs + j, -1.0));
    }
    for (k, mono) in v_basis.exponents.iter().enumerate() {
        if mono.0[0] == 0 {
            let xt = Monomial(mono.0[1..].to_vec());
            let idx = start3 + rows3[&xt];
            st.equalities[idx].free_entries.push((k, 1.0));
        }
    }
    let zero_row = start3 + rows3[&Monomial(vec![0; nx + ntheta])];
    st.equalities[zero_row].rhs = -1.0;

    // (c4)  σ-sum = v(1,·)  ⇔  Gram rows − v(1,·) = 0  (scaled horizon t̂ = 1).
    let g4 = putinar_group("c4", nx + ntheta, degree, &gs_c4, st.psd_blocks.len());
    let (start4, rows4) = st.push_group("c4", g4);
    for (k, mono) in v_basis.exponents.iter().enumerate() {
        let xt = Monomial(mono.0[1..].to_vec());
        let idx = start4 + rows4[&xt];
        st.equalities[idx].free_entries.push((k, -1.0));
    }

    // Objective: Lebesgue moments over the scaled X×Θ on the w slice.
    let moments = moments_vector(&unit_box(nx + ntheta), &w_basis);
    let mut objective_free = vec![0.0; free_vars];
    objective_free[nv_coeffs..].copy_from_slice(&moments);

    let AsmState { psd_blocks, equalities, groups } = st;
    let block_costs = vec![Vec::new(); psd_blocks.len()];
    let sdp = SdpProblem { psd_blocks, free_vars, equalities, objective_free, block_costs };
    debug_assert!(sdp.validate().is_ok());

    let jacobian = x_map.jacobian() * theta_map.jacobian();
    Ok(AssembledRelaxation {
        sdp,
        relaxation: RelaxationSpec { degree, v_basis, w_basis, lie_degree },
        groups,
        x_map,
        theta_map,
        horizon: t,
        jacobian,
        moments,
        nx,
        ntheta,
    })
}

/// Sampled margins of the four inequalities for a candidate (v, w) in
/// original coordinates. Margins are the minimum of the inequality's
/// left-hand side over uniform samples of its domain (nonnegative margins ⇔
/// no violation found); sampling is deterministic.
#[derive(Debug, Clone, Copy)]
pub struct FeasibilityReport {
    /// min of (−L_f v, w, w − v(0,·) − 1, v(T,·)) over the sampled domains.
    pub margins: [f64; 4],
    pub max_violation: f64,
    pub samples: usize,
    pub pass: bool,
}

pub fn feasibility_report(
    spec: &ProblemSpec,
    v: &MultiPoly,
    w: &MultiPoly,
    sample_count: usize,
    tol: f64,
) -> FeasibilityReport {
    let nx = spec.nx();
    let ntheta = spec.ntheta();
    let lv = v
        .lie_derivative(&spec.dynamics)
        .expect("v and dynamics share a variable space");
    let v0 = v.eval_at_t(0.0);
    let vt = v.eval_at_t(spec.horizon);

    let mut rng = ChaCha8Rng::seed_from_u64(0x5EED_FEA5);
    let mut margins = [f64::INFINITY; 4];
    let sample_box = |rng: &mut ChaCha8Rng, b: &Box| -> Vec<f64> {
        b.lower()
            .iter()
            .zip(b.upper())
            .map(|(&l, &u)| rng.gen_range(l..u))
            .collect()
    };

    for _ in 0..sample_count {
        let tval = rng.gen_range(0.0..spec.horizon);
        let xs = sample_box(&mut rng, &spec.state_box);
        let ths = sample_box(&mut rng, &spec.theta_box);
        let xts = sample_box(&mut rng, &spec.target_box);

        let mut point_t = Vec::with_capacity(1 + nx + ntheta);
        point_t.push(tval);
        point_t.extend_from_slice(&xs);
        point_t.extend_from_slice(&ths);
        margins[0] = margins[0].min(-lv.eval(&point_t));

        let mut point_xt = Vec::with_capacity(nx + ntheta);
        point_xt.extend_from_slice(&xs);
        point_xt.extend_from_slice(&ths);
        let wv = w.eval(&point_xt);
        margins[1] = margins[1].min(wv);
        margins[2] = margins[2].min(wv - v0.eval(&point_xt) - 1.0);

        let mut point_target = Vec::with_capacity(nx + ntheta);
        point_target.extend_from_slice(&xts);
        point_target.extend_from_slice(&ths);
        margins[3] = margins[3].min(vt.eval(&point_target));
    }

    let max_violation = margins.iter().fold(0.0f64, |a, &m| a.max(-m));
    FeasibilityReport { margins, max_violation, samples: sample_count, pass: max_violation <= tol }
}
