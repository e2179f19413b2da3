//! Dense block-structured SDP solver.
//!
//! Problem form (minimization convention, used everywhere below):
//!
//!   minimize    Σ_b ⟨C_b, X_b⟩ + c_f·u
//!   subject to  Σ_b ⟨A_{i,b}, X_b⟩ + B_i·u = b_i     (i = 1..m)
//!               X_b ⪰ 0,   u free
//!
//! with the Lagrangian dual
//!
//!   maximize    b·y
//!   subject to  C_b − Σ_i y_i A_{i,b} = S_b ⪰ 0,   Bᵀy = c_f.
//!
//! ⟨·,·⟩ is the symmetric (Frobenius) inner product; constraint entries are
//! stored once per (r ≤ c) pair and off-diagonal entries count twice.
//!
//! The solver is a primal-dual interior-point method with Nesterov-Todd
//! scaling and a Mehrotra predictor-corrector, taking 0.98 of the step to
//! the cone boundary. The Newton system is reduced to the saddle system
//!
//!   [ M  B ] [Δy]   [ h  ]        M_ik = Σ_b ⟨A_{i,b}, W_b A_{k,b} W_b⟩
//!   [ Bᵀ 0 ] [Δu] = [ rf ],
//!
//! factored once per iteration by dense LU and polished with a few rounds
//! of iterative refinement (the Schur system alone becomes too
//! ill-conditioned near the optimum to drive primal residuals below ~1e−6).

pub mod export;

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SdpError {
    #[error("problem has no equality rows")]
    NoEqualities,
    #[error("problem has no PSD blocks")]
    NoBlocks,
    #[error("equality row {row} references block {block} out of range")]
    BadBlockIndex { row: usize, block: usize },
    #[error("equality row {row} has entry ({r},{c}) outside block {block} of size {size} (need r ≤ c < size)")]
    BadEntry { row: usize, block: usize, r: usize, c: usize, size: usize },
    #[error("equality row {row} references free variable {var}, but there are {nfree}")]
    BadFreeIndex { row: usize, var: usize, nfree: usize },
    #[error("objective length {got} does not match free variable count {expected}")]
    ObjectiveLength { got: usize, expected: usize },
    #[error("non-finite value in problem data ({0})")]
    NonFinite(&'static str),
}

/// One equality row: Σ_b ⟨A_b, X_b⟩ + Σ_k B_k u_k = rhs.
/// `block_entries` holds (block, r, c, value) with r ≤ c, each stored once.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EqRow {
    pub block_entries: Vec<(usize, usize, usize, f64)>,
    pub free_entries: Vec<(usize, f64)>,
    pub rhs: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SdpProblem {
    /// (label, side length) per PSD block.
    pub psd_blocks: Vec<(String, usize)>,
    pub free_vars: usize,
    pub equalities: Vec<EqRow>,
    /// Linear objective on the free variables (length = free_vars).
    pub objective_free: Vec<f64>,
    /// Sparse symmetric cost per block, (r, c, value) with r ≤ c; empty
    /// vectors mean a zero cost matrix.
    pub block_costs: Vec<Vec<(usize, usize, f64)>>,
}

impl SdpProblem {
    pub fn validate(&self) -> Result<(), SdpError> {
        if self.equalities.is_empty() {
            return Err(SdpError::NoEqualities);
        }
        if self.psd_blocks.is_empty() {
            return Err(SdpError::NoBlocks);
        }
        if self.objective_free.len() != self.free_vars {
            return Err(SdpError::ObjectiveLength {
                got: self.objective_free.len(),
                expected: self.free_vars,
            });
        }
        if !self.objective_free.iter().all(|v| v.is_finite()) {
            return Err(SdpError::NonFinite("objective"));
        }
        if self.block_costs.len() != self.psd_blocks.len() {
            return Err(SdpError::ObjectiveLength {
                got: self.block_costs.len(),
                expected: self.psd_blocks.len(),
            });
        }
        for (b, cost) in self.block_costs.iter().enumerate() {
            let n = self.psd_blocks[b].1;
            for &(r, c, v) in cost {
                if r > c || c >= n {
                    return Err(SdpError::BadEntry { row: usize::MAX, block: b, r, c, size: n });
                }
                if !v.is_finite() {
                    return Err(SdpError::NonFinite("block cost"));
                }
            }
        }
        for (row, eq) in self.equalities.iter().enumerate() {
            if !eq.rhs.is_finite() {
                return Err(SdpError::NonFinite("rhs"));
            }
            for &(b, r, c, v) in &eq.block_entries {
                if b >= self.psd_blocks.len() {
                    return Err(SdpError::BadBlockIndex { row, block: b });
                }
                let n = self.psd_blocks[b].1;
                if r > c || c >= n {
                    return Err(SdpError::BadEntry { row, block: b, r, c, size: n });
                }
                if !v.is_finite() {
                    return Err(SdpError::NonFinite("constraint entry"));
                }
            }
            for &(k, v) in &eq.free_entries {
                if k >= self.free_vars {
                    return Err(SdpError::BadFreeIndex { row, var: k, nfree: self.free_vars });
                }
                if !v.is_finite() {
                    return Err(SdpError::NonFinite("free entry"));
                }
            }
        }
        Ok(())
    }

    pub fn num_equalities(&self) -> usize {
        self.equalities.len()
    }

    pub fn rhs_vector(&self) -> Vec<f64> {
        self.equalities.iter().map(|e| e.rhs).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    Optimal,
    MaxIterations,
    InfeasibleSuspected,
    NumericalFailure,
}

impl std::fmt::Display for SolveStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            SolveStatus::Optimal => "optimal",
            SolveStatus::MaxIterations => "max_iterations",
            SolveStatus::InfeasibleSuspected => "infeasible_suspected",
            SolveStatus::NumericalFailure => "numerical_failure",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct SolveOptions {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions { tol: 1e-7, max_iter: 200 }
    }
}

/// One row of the iterate log (used by determinism and weak-duality checks).
#[derive(Debug, Clone, Copy)]
pub struct IterRecord {
    pub mu: f64,
    pub primal_objective: f64,
    pub dual_objective: f64,
    pub primal_error: f64,
    pub dual_error: f64,
    pub gap: f64,
}

#[derive(Debug, Clone)]
pub struct SdpSolution {
    pub block_matrices: Vec<DMatrix<f64>>,
    pub free_values: Vec<f64>,
    pub dual_values: Vec<f64>,
    pub primal_objective: f64,
    pub dual_objective: f64,
    /// Relative duality gap |p − d| / (1 + |p| + |d|).
    pub gap: f64,
    pub status: SolveStatus,
    pub iterations: usize,
    pub trace: Vec<IterRecord>,
}

#[derive(Debug, Clone, Copy)]
pub struct KktReport {
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub complementarity: f64,
    pub min_eigenvalue: f64,
    pub pass: bool,
}

// ---------------------------------------------------------------------------
// dense working form

struct Dense {
    nblocks: usize,
    sizes: Vec<usize>,
    m: usize,
    nf: usize,
    b: DVector<f64>,
    cf: DVector<f64>,
    cost: Vec<DMatrix<f64>>,
    /// rows[i] = per-block sparse entries of A_i, plus free entries.
    rows: Vec<EqRow>,
    /// Row indices that touch each block (for Schur assembly).
    rows_on_block: Vec<Vec<usize>>,
    bmat: DMatrix<f64>, // m × nf
}

impl Dense {
    fn build(p: &SdpProblem) -> Dense {
        let nblocks = p.psd_blocks.len();
        let sizes: Vec<usize> = p.psd_blocks.iter().map(|(_, n)| *n).collect();
        let m = p.equalities.len();
        let nf = p.free_vars;
        let b = DVector::from_iterator(m, p.equalities.iter().map(|e| e.rhs));
        let cf = DVector::from_vec(p.objective_free.clone());
        let mut cost: Vec<DMatrix<f64>> =
            sizes.iter().map(|&n| DMatrix::zeros(n, n)).collect();
        for (bi, entries) in p.block_costs.iter().enumerate() {
            for &(r, c, v) in entries {
                cost[bi][(r, c)] = v;
                cost[bi][(c, r)] = v;
            }
        }
        let mut rows_on_block = vec![Vec::new(); nblocks];
        for (i, eq) in p.equalities.iter().enumerate() {
            let mut seen = vec![false; nblocks];
            for &(bi, ..) in &eq.block_entries {
                if !seen[bi] {
                    seen[bi] = true;
                    rows_on_block[bi].push(i);
                }
            }
        }
        let mut bmat = DMatrix::zeros(m, nf);
        for (i, eq) in p.equalities.iter().enumerate() {
            for &(k, v) in &eq.free_entries {
                bmat[(i, k)] += v;
            }
        }
        Dense {
            nblocks,
            sizes,
            m,
            nf,
            b,
            cf,
            cost,
            rows: p.equalities.clone(),
            rows_on_block,
            bmat,
        }
    }

    /// ⟨A_i restricted to block bi, M⟩ with off-diagonals counted twice.
    fn inner_row_block(&self, i: usize, bi: usize, mat: &DMatrix<f64>) -> f64 {
        let mut acc = 0.0;
        for &(bb, r, c, v) in &self.rows[i].block_entries {
            if bb == bi {
                acc += if r == c { v * mat[(r, r)] } else { 2.0 * v * mat[(r, c)] };
            }
        }
        acc
    }

    /// Σ_b ⟨A_{i,b}, mats_b⟩.
    fn inner_row(&self, i: usize, mats: &[DMatrix<f64>]) -> f64 {
        let mut acc = 0.0;
        for &(bb, r, c, v) in &self.rows[i].block_entries {
            acc += if r == c { v * mats[bb][(r, r)] } else { 2.0 * v * mats[bb][(r, c)] };
        }
        acc
    }

    /// Adds t·A_i into dense block accumulators (both triangles).
    fn axpy_row(&self, i: usize, t: f64, out: &mut [DMatrix<f64>]) {
        for &(bb, r, c, v) in &self.rows[i].block_entries {
            out[bb][(r, c)] += t * v;
            if r != c {
                out[bb][(c, r)] += t * v;
            }
        }
    }

    fn blocks_of_row(&self, i: usize) -> Vec<usize> {
        let mut bs: Vec<usize> = self.rows[i].block_entries.iter().map(|e| e.0).collect();
        bs.sort_unstable();
        bs.dedup();
        bs
    }
}

fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0f64, |a, &v| a.max(v.abs()))
}

fn inf_norm(v: &DVector<f64>) -> f64 {
    v.iter().fold(0.0f64, |a, &x| a.max(x.abs()))
}

fn sym(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Largest α ∈ (0, cap] with X + α·ΔX ⪰ 0, given the Cholesky factor of X.
fn boundary_step(lx: &DMatrix<f64>, dx: &DMatrix<f64>, cap: f64) -> Option<f64> {
    // X + αΔX ⪰ 0  ⇔  I + α L⁻¹ ΔX L⁻ᵀ ⪰ 0.
    let z = lx.clone().solve_lower_triangular(dx)?;
    let y = lx.clone().solve_lower_triangular(&z.transpose())?;
    let eig = nalgebra::SymmetricEigen::new(sym(&y));
    let lam_min = eig.eigenvalues.iter().fold(f64::INFINITY, |a, &v| a.min(v));
    if lam_min >= -1e-14 {
        Some(cap)
    } else {
        Some(cap.min(-1.0 / lam_min))
    }
}

struct NtScaling {
    r: DMatrix<f64>,
    r_inv: DMatrix<f64>,
    w: DMatrix<f64>,
    lambda: DVector<f64>,
    lx: DMatrix<f64>,
    ls: DMatrix<f64>,
}

fn nt_scaling(x: &DMatrix<f64>, s: &DMatrix<f64>) -> Option<NtScaling> {
    let lx = nalgebra::Cholesky::new(x.clone())?.l();
    let ls = nalgebra::Cholesky::new(s.clone())?.l();
    let p = ls.transpose() * &lx;
    let svd = nalgebra::SVD::new(p, true, true);
    let u = svd.u.as_ref()?;
    let vt = svd.v_t.as_ref()?;
    let _ = u;
    let lambda = svd.singular_values.clone();
    if lambda.iter().any(|&s| s <= 0.0 || !s.is_finite()) {
        return None;
    }
    let n = lambda.len();
    // R = Lx V Σ^{-1/2},  R⁻¹ = Σ^{1/2} Vᵀ Lx⁻¹.
    let v = vt.transpose();
    let mut vs = v.clone();
    for j in 0..n {
        let f = 1.0 / lambda[j].sqrt();
        for i in 0..n {
            vs[(i, j)] *= f;
        }
    }
    let r = &lx * vs;
    let lx_inv = lx.clone().solve_lower_triangular(&DMatrix::identity(n, n))?;
    let mut sv = v.transpose();
    for i in 0..n {
        let f = lambda[i].sqrt();
        for j in 0..n {
            sv[(i, j)] *= f;
        }
    }
    let r_inv = sv * lx_inv;
    let w = &r * r.transpose();
    Some(NtScaling { r, r_inv, w, lambda, lx, ls })
}

/// Solves the problem by the NT-scaled Mehrotra predictor-corrector method.
/// One interior iterate or Newton step: (X blocks, S blocks, y, u).
type IteratePoint = (Vec<DMatrix<f64>>, Vec<DMatrix<f64>>, DVector<f64>, DVector<f64>);

pub fn solve(prob: &SdpProblem, opts: &SolveOptions) -> Result<SdpSolution, SdpError> {
    prob.validate()?;
    let d = Dense::build(prob);
    let (m, nf) = (d.m, d.nf);
    let ntot: usize = d.sizes.iter().sum();

    let max_c = d.cost.iter().map(max_abs).fold(0.0f64, f64::max);
    let rho = 1.0 + inf_norm(&d.b).max(inf_norm(&d.cf)).max(max_c).max(1.0);

    let mut xb: Vec<DMatrix<f64>> =
        d.sizes.iter().map(|&n| DMatrix::identity(n, n) * rho).collect();
    let mut sb = xb.clone();
    let mut y: DVector<f64> = DVector::zeros(m);
    let mut u: DVector<f64> = DVector::zeros(nf);

    let mut trace: Vec<IterRecord> = Vec::new();
    let mut status = SolveStatus::MaxIterations;
    let mut iterations = 0;

    let mut best: Option<(f64, IteratePoint)> = None;

    let norm_b = inf_norm(&d.b);
    let norm_obj = max_c.max(inf_norm(&d.cf));

    for iter in 0..opts.max_iter {
        iterations = iter;

        // residuals
        let mut rp = d.b.clone();
        for i in 0..m {
            rp[i] -= d.inner_row(i, &xb);
        }
        if nf > 0 {
            rp -= &d.bmat * &u;
        }
        let mut rd: Vec<DMatrix<f64>> = (0..d.nblocks)
            .map(|bi| &d.cost[bi] - &sb[bi])
            .collect();
        for i in 0..m {
            if y[i] != 0.0 {
                d.axpy_row(i, -y[i], &mut rd);
            }
        }
        let rf = &d.cf - d.bmat.transpose() * &y;

        let pobj: f64 = (0..d.nblocks)
            .map(|bi| (&d.cost[bi] * &xb[bi]).trace())
            .sum::<f64>()
            + d.cf.dot(&u);
        let dobj = d.b.dot(&y);
        let mu: f64 =
            (0..d.nblocks).map(|bi| (&xb[bi] * &sb[bi]).trace()).sum::<f64>() / ntot as f64;

        let err_p = inf_norm(&rp) / (1.0 + norm_b);
        let err_d = rd.iter().map(max_abs).fold(inf_norm(&rf), f64::max) / (1.0 + norm_obj);
        let gap = (pobj - dobj).abs() / (1.0 + pobj.abs() + dobj.abs());

        trace.push(IterRecord {
            mu,
            primal_objective: pobj,
            dual_objective: dobj,
            primal_error: err_p,
            dual_error: err_d,
            gap,
        });

        let merit = err_p.max(err_d).max(gap);
        if best.as_ref().is_none_or(|(bm, ..)| merit < *bm) {
            best = Some((merit, (xb.clone(), sb.clone(), y.clone(), u.clone())));
        }

        if err_p <= opts.tol && err_d <= opts.tol && gap <= opts.tol {
            status = SolveStatus::Optimal;
            break;
        }
        if inf_norm(&y) > 1e10 || xb.iter().map(|x| x.trace()).sum::<f64>() > 1e12 {
            status = SolveStatus::InfeasibleSuspected;
            break;
        }

        // Nesterov-Todd scaling point per block.
        let mut nts: Vec<NtScaling> = Vec::with_capacity(d.nblocks);
        let mut nt_ok = true;
        for bi in 0..d.nblocks {
            match nt_scaling(&xb[bi], &sb[bi]) {
                Some(s) => nts.push(s),
                None => {
                    nt_ok = false;
                    break;
                }
            }
        }
        if !nt_ok {
            status = SolveStatus::NumericalFailure;
            break;
        }

        // Schur complement M and the saddle matrix [M B; Bᵀ 0].
        let dim = m + nf;
        let mut saddle = DMatrix::zeros(dim, dim);
        for k in 0..m {
            // dense W A_k W on the blocks row k touches
            for bi in d.blocks_of_row(k) {
                let n = d.sizes[bi];
                let mut ak = DMatrix::zeros(n, n);
                for &(bb, r, c, v) in &d.rows[k].block_entries {
                    if bb == bi {
                        ak[(r, c)] += v;
                        if r != c {
                            ak[(c, r)] += v;
                        }
                    }
                }
                let waw = &nts[bi].w * ak * &nts[bi].w;
                for &i in &d.rows_on_block[bi] {
                    saddle[(i, k)] += d.inner_row_block(i, bi, &waw);
                }
            }
        }
        for i in 0..m {
            for k in 0..nf {
                saddle[(i, m + k)] = d.bmat[(i, k)];
                saddle[(m + k, i)] = d.bmat[(i, k)];
            }
        }
        let saddle_lu = saddle.clone().lu();

        // W·Rd·W per block, for the right-hand side.
        let wrdw: Vec<DMatrix<f64>> =
            (0..d.nblocks).map(|bi| &nts[bi].w * &rd[bi] * &nts[bi].w).collect();

        // One Newton solve for a given complementarity target (σμ, E).
        let newton = |sigma_mu: f64,
                      e_scaled: Option<&[DMatrix<f64>]>,
                      saddle_lu: &nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>|
         -> Option<IteratePoint> {
            // G_b = R K Rᵀ with K_ij = 2(σμ δ_ij − λ_iλ_j δ_ij − E_ij)/(λ_i + λ_j)
            let mut g: Vec<DMatrix<f64>> = Vec::with_capacity(d.nblocks);
            for bi in 0..d.nblocks {
                let lam = &nts[bi].lambda;
                let n = lam.len();
                let mut k = DMatrix::zeros(n, n);
                for i in 0..n {
                    for j in 0..n {
                        let mut num = -(if i == j { lam[i] * lam[j] - sigma_mu } else { 0.0 });
                        if let Some(es) = e_scaled {
                            num -= es[bi][(i, j)];
                        }
                        k[(i, j)] = 2.0 * num / (lam[i] + lam[j]);
                    }
                }
                g.push(&nts[bi].r * k * nts[bi].r.transpose());
            }

            // rhs: h_i = rp_i − ⟨A_i, G⟩ + ⟨A_i, W Rd W⟩ ; bottom = rf.
            let mut rhs = DVector::zeros(dim);
            for i in 0..m {
                rhs[i] = rp[i] - d.inner_row(i, &g) + d.inner_row(i, &wrdw);
            }
            for k in 0..nf {
                rhs[m + k] = rf[k];
            }

            let mut sol = saddle_lu.solve(&rhs)?;
            // Iterative refinement on the saddle system.
            for _ in 0..3 {
                let resid = &rhs - &saddle * &sol;
                if inf_norm(&resid) <= 1e-14 * (1.0 + inf_norm(&rhs)) {
                    break;
                }
                let corr = saddle_lu.solve(&resid)?;
                sol += corr;
            }
            let dy = sol.rows(0, m).into_owned();
            let du = sol.rows(m, nf).into_owned();

            // ΔS = Rd − Σ_i Δy_i A_i ;  ΔX = G − W ΔS W.
            let mut ds: Vec<DMatrix<f64>> = rd.clone();
            for i in 0..m {
                if dy[i] != 0.0 {
                    d.axpy_row(i, -dy[i], &mut ds);
                }
            }
            let dx: Vec<DMatrix<f64>> = (0..d.nblocks)
                .map(|bi| sym(&(&g[bi] - &nts[bi].w * &ds[bi] * &nts[bi].w)))
                .collect();
            Some((dx, ds, dy, du))
        };

        // Predictor (affine direction): σ = 0, E = 0.
        let Some((dx_aff, ds_aff, _dy_aff, _du_aff)) = newton(0.0, None, &saddle_lu) else {
            status = SolveStatus::NumericalFailure;
            break;
        };

        let mut ap_aff = 1.0f64;
        let mut ad_aff = 1.0f64;
        let mut bound_ok = true;
        for bi in 0..d.nblocks {
            match (
                boundary_step(&nts[bi].lx, &dx_aff[bi], 1.0),
                boundary_step(&nts[bi].ls, &ds_aff[bi], 1.0),
            ) {
                (Some(ap), Some(ad)) => {
                    ap_aff = ap_aff.min(ap);
                    ad_aff = ad_aff.min(ad);
                }
                _ => {
                    bound_ok = false;
                    break;
                }
            }
        }
        if !bound_ok {
            status = SolveStatus::NumericalFailure;
            break;
        }

        let mu_aff: f64 = (0..d.nblocks)
            .map(|bi| {
                ((&xb[bi] + &dx_aff[bi] * ap_aff) * (&sb[bi] + &ds_aff[bi] * ad_aff)).trace()
            })
            .sum::<f64>()
            / ntot as f64;
        let sigma = (mu_aff / mu).powi(3).clamp(0.0, 1.0);

        // Corrector: E = (ΔX̃ΔS̃ + ΔS̃ΔX̃)/2 in the scaled space.
        let e_scaled: Vec<DMatrix<f64>> = (0..d.nblocks)
            .map(|bi| {
                let dxt = &nts[bi].r_inv * &dx_aff[bi] * nts[bi].r_inv.transpose();
                let dst = nts[bi].r.transpose() * &ds_aff[bi] * &nts[bi].r;
                sym(&(&dxt * &dst))
            })
            .collect();

        let Some((dx, ds, dy, du)) = newton(sigma * mu, Some(&e_scaled), &saddle_lu) else {
            status = SolveStatus::NumericalFailure;
            break;
        };

        let mut ap = 1.0f64;
        let mut ad = 1.0f64;
        for bi in 0..d.nblocks {
            match (
                boundary_step(&nts[bi].lx, &dx[bi], 1.0 / 0.98),
                boundary_step(&nts[bi].ls, &ds[bi], 1.0 / 0.98),
            ) {
                (Some(a), Some(b2)) => {
                    ap = ap.min(0.98 * a);
                    ad = ad.min(0.98 * b2);
                }
                _ => {
                    bound_ok = false;
                    break;
                }
            }
        }
        if !bound_ok {
            status = SolveStatus::NumericalFailure;
            break;
        }

        // Take the step; retreat on factorization breakdown.
        let mut stepped = false;
        for _try in 0..=4 {
            let xn: Vec<DMatrix<f64>> =
                (0..d.nblocks).map(|bi| &xb[bi] + &dx[bi] * ap).collect();
            let sn: Vec<DMatrix<f64>> =
                (0..d.nblocks).map(|bi| &sb[bi] + &ds[bi] * ad).collect();
            let ok = xn
                .iter()
                .chain(sn.iter())
                .all(|mat| nalgebra::Cholesky::new(mat.clone()).is_some());
            if ok {
                xb = xn;
                sb = sn;
                y += &dy * ad;
                u += &du * ap;
                stepped = true;
                break;
            }
            ap *= 0.5;
            ad *= 0.5;
        }
        if !stepped {
            status = SolveStatus::NumericalFailure;
            break;
        }
    }

    // On plain iteration exhaustion, fall back to the best iterate seen.
    if status == SolveStatus::MaxIterations {
        if let Some((_, (bx, bs, by, bu))) = best {
            xb = bx;
            sb = bs;
            y = by;
            u = bu;
        }
        iterations = opts.max_iter;
    }
    let _ = &sb;

    let pobj: f64 = (0..d.nblocks)
        .map(|bi| (&d.cost[bi] * &xb[bi]).trace())
        .sum::<f64>()
        + d.cf.dot(&u);
    let dobj = d.b.dot(&y);
    let gap = (pobj - dobj).abs() / (1.0 + pobj.abs() + dobj.abs());

    Ok(SdpSolution {
        block_matrices: xb,
        free_values: u.iter().copied().collect(),
        dual_values: y.iter().copied().collect(),
        primal_objective: pobj,
        dual_objective: dobj,
        gap,
        status,
        iterations,
        trace,
    })
}

/// Residual report for a (problem, solution) pair: primal equality residual,
/// dual residual (free-variable equality part and negative-definiteness of
/// the implied slack C − Σ yᵢAᵢ), raw complementarity ⟨X, S⟩, and the
/// smallest eigenvalue over the primal blocks.
pub fn check_kkt(prob: &SdpProblem, sol: &SdpSolution, tol: f64) -> KktReport {
    let d = Dense::build(prob);
    let u = DVector::from_vec(sol.free_values.clone());
    let y = DVector::from_vec(sol.dual_values.clone());

    let mut rp = d.b.clone();
    for i in 0..d.m {
        rp[i] -= d.inner_row(i, &sol.block_matrices);
    }
    if d.nf > 0 {
        rp -= &d.bmat * &u;
    }
    let primal_residual = inf_norm(&rp);

    // implied dual slack S = C − Σ yᵢ Aᵢ
    let mut slack: Vec<DMatrix<f64>> = d.cost.clone();
    for i in 0..d.m {
        if y[i] != 0.0 {
            d.axpy_row(i, -y[i], &mut slack);
        }
    }
    let rf = &d.cf - d.bmat.transpose() * &y;
    let slack_neg = slack
        .iter()
        .map(|s| {
            let eig = nalgebra::SymmetricEigen::new(sym(s));
            eig.eigenvalues.iter().fold(0.0f64, |a, &v| a.max(-v))
        })
        .fold(0.0f64, f64::max);
    let dual_residual = inf_norm(&rf).max(slack_neg);

    let complementarity: f64 = (0..d.nblocks)
        .map(|bi| (&sol.block_matrices[bi] * &slack[bi]).trace())
        .sum::<f64>()
        .abs();

    let min_eigenvalue = sol
        .block_matrices
        .iter()
        .map(|x| {
            let eig = nalgebra::SymmetricEigen::new(sym(x));
            eig.eigenvalues.iter().fold(f64::INFINITY, |a, &v| a.min(v))
        })
        .fold(f64::INFINITY, f64::min);

    let pass = primal_residual <= tol
        && dual_residual <= tol
        && complementarity <= tol
        && min_eigenvalue >= -tol;

    KktReport { primal_residual, dual_residual, complementarity, min_eigenvalue, pass }
}
