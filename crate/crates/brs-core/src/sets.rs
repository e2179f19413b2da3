//! Axis-aligned boxes, their quadratic inequality descriptions, Lebesgue
//! moments, and the affine rescaling onto [-1,1]^k used before assembly.

use crate::poly::{MonomialBasis, MultiPoly, VarSpace};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SetError {
    #[error("box bounds have mismatched lengths: {0} vs {1}")]
    DimMismatch(usize, usize),
    #[error("box interval {index} is empty: [{lo}, {hi}]")]
    EmptyInterval { index: usize, lo: f64, hi: f64 },
    #[error("box bound is not finite at index {0}")]
    NonFinite(usize),
}

/// Axis-aligned box ∏ [lower_i, upper_i] with nonempty interior.
#[derive(Debug, Clone, PartialEq)]
pub struct Box {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl Box {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self, SetError> {
        if lower.len() != upper.len() {
            return Err(SetError::DimMismatch(lower.len(), upper.len()));
        }
        for (i, (&l, &u)) in lower.iter().zip(&upper).enumerate() {
            if !l.is_finite() || !u.is_finite() {
                return Err(SetError::NonFinite(i));
            }
            if l >= u {
                return Err(SetError::EmptyInterval { index: i, lo: l, hi: u });
            }
        }
        Ok(Box { lower, upper })
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn contains(&self, point: &[f64], tol: f64) -> bool {
        point.len() == self.dim()
            && point
                .iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(&z, (&l, &u))| z >= l - tol && z <= u + tol)
    }

    pub fn volume(&self) -> f64 {
        self.lower.iter().zip(&self.upper).map(|(&l, &u)| u - l).product()
    }

    pub fn centers(&self) -> Vec<f64> {
        self.lower.iter().zip(&self.upper).map(|(&l, &u)| 0.5 * (l + u)).collect()
    }

    pub fn half_widths(&self) -> Vec<f64> {
        self.lower.iter().zip(&self.upper).map(|(&l, &u)| 0.5 * (u - l)).collect()
    }

    /// True when `self` ⊆ `other` (up to tol on each face).
    pub fn subset_of(&self, other: &Box, tol: f64) -> bool {
        self.dim() == other.dim()
            && self
                .lower
                .iter()
                .zip(&other.lower)
                .all(|(&a, &b)| a >= b - tol)
            && self.upper.iter().zip(&other.upper).all(|(&a, &b)| a <= b + tol)
    }
}

/// {z : g_j(z) ≥ 0 for all j}, all g_j over a common variable space.
#[derive(Debug, Clone)]
pub struct SemialgebraicSet {
    pub vars: VarSpace,
    pub inequalities: Vec<MultiPoly>,
}

impl SemialgebraicSet {
    pub fn contains(&self, point: &[f64], tol: f64) -> bool {
        self.inequalities.iter().all(|g| g.eval(point) >= -tol)
    }
}

/// One quadratic (u_j − z_j)(z_j − l_j) ≥ 0 per coordinate, written over
/// `vars` with the box occupying variable indices first_var..first_var+dim.
pub fn box_to_inequalities(b: &Box, vars: VarSpace, first_var: usize) -> Vec<MultiPoly> {
    assert!(first_var + b.dim() <= vars.total());
    (0..b.dim())
        .map(|j| {
            let i = first_var + j;
            let (l, u) = (b.lower[j], b.upper[j]);
            // (u - z)(z - l) = -z^2 + (l+u) z - l u
            let z = MultiPoly::var(vars, i);
            let z2 = z.mul(&z).unwrap();
            z2.scale(-1.0)
                .add(&z.scale(l + u))
                .unwrap()
                .add(&MultiPoly::constant(vars, -l * u))
                .unwrap()
        })
        .collect()
}

/// ∫_box z^a dz = ∏_i (u_i^{a_i+1} − l_i^{a_i+1}) / (a_i + 1), unnormalized.
pub fn lebesgue_moment(b: &Box, exponent: &[u32]) -> f64 {
    assert_eq!(exponent.len(), b.dim());
    exponent
        .iter()
        .zip(b.lower.iter().zip(&b.upper))
        .map(|(&a, (&l, &u))| {
            let k = a as i32 + 1;
            (u.powi(k) - l.powi(k)) / k as f64
        })
        .product()
}

/// Moments of every basis monomial, in basis order.
pub fn moments_vector(b: &Box, basis: &MonomialBasis) -> Vec<f64> {
    basis.exponents.iter().map(|m| lebesgue_moment(b, &m.0)).collect()
}

/// Affine bijection between a box and the unit cube [-1,1]^dim:
/// original = center + half_width ⊙ unit.
#[derive(Debug, Clone)]
pub struct ScaleMap {
    centers: Vec<f64>,
    half_widths: Vec<f64>,
}

impl ScaleMap {
    pub fn for_box(b: &Box) -> Self {
        ScaleMap { centers: b.centers(), half_widths: b.half_widths() }
    }

    /// Concatenates maps (e.g. the x-block followed by the θ-block).
    pub fn concat(parts: &[&ScaleMap]) -> Self {
        let mut centers = Vec::new();
        let mut half_widths = Vec::new();
        for p in parts {
            centers.extend_from_slice(&p.centers);
            half_widths.extend_from_slice(&p.half_widths);
        }
        ScaleMap { centers, half_widths }
    }

    pub fn dim(&self) -> usize {
        self.centers.len()
    }

    pub fn half_widths(&self) -> &[f64] {
        &self.half_widths
    }

    pub fn to_unit(&self, orig: &[f64]) -> Vec<f64> {
        orig.iter()
            .zip(self.centers.iter().zip(&self.half_widths))
            .map(|(&x, (&c, &h))| (x - c) / h)
            .collect()
    }

    pub fn from_unit(&self, unit: &[f64]) -> Vec<f64> {
        unit.iter()
            .zip(self.centers.iter().zip(&self.half_widths))
            .map(|(&z, (&c, &h))| c + h * z)
            .collect()
    }

    /// |det| of from_unit, i.e. ∏ half_widths.
    pub fn jacobian(&self) -> f64 {
        self.half_widths.iter().product()
    }

    /// Rewrites p(original coords) as a polynomial in unit coords:
    /// substitute orig_i = c_i + h_i·z_i. Variables `first_var..` of `p`'s
    /// space correspond to this map's coordinates.
    pub fn poly_to_unit(&self, p: &MultiPoly, first_var: usize) -> MultiPoly {
        let (a, b) = self.subst_vectors(p.vars().total(), first_var, false);
        p.substitute_affine(&a, &b)
    }

    /// Rewrites p(unit coords) as a polynomial in original coords:
    /// substitute z_i = (x_i − c_i)/h_i.
    pub fn poly_from_unit(&self, p: &MultiPoly, first_var: usize) -> MultiPoly {
        let (a, b) = self.subst_vectors(p.vars().total(), first_var, true);
        p.substitute_affine(&a, &b)
    }

    fn subst_vectors(&self, nvars: usize, first_var: usize, invert: bool) -> (Vec<f64>, Vec<f64>) {
        assert!(first_var + self.dim() <= nvars);
        let mut a = vec![1.0; nvars];
        let mut b = vec![0.0; nvars];
        for j in 0..self.dim() {
            let (c, h) = (self.centers[j], self.half_widths[j]);
            if invert {
                a[first_var + j] = 1.0 / h;
                b[first_var + j] = -c / h;
            } else {
                a[first_var + j] = h;
                b[first_var + j] = c;
            }
        }
        (a, b)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::poly::basis_enumerate;
    use proptest::prelude::*;

    #[test]
    fn box_rejects_empty_and_mismatched() {
        assert!(Box::new(vec![0.0], vec![0.0]).is_err());
        assert!(Box::new(vec![1.0], vec![-1.0]).is_err());
        assert!(Box::new(vec![0.0, 0.0], vec![1.0]).is_err());
        assert!(Box::new(vec![f64::NAN], vec![1.0]).is_err());
        assert!(Box::new(vec![-2.0, 0.0], vec![2.0, 1.0]).is_ok());
    }

    #[test]
    fn moment_of_x2_on_symmetric_interval() {
        let b = Box::new(vec![-1.0], vec![1.0]).unwrap();
        assert!((lebesgue_moment(&b, &[2]) - 2.0 / 3.0).abs() < 1e-15);
        assert!((lebesgue_moment(&b, &[0]) - 2.0).abs() < 1e-15);
        assert_eq!(lebesgue_moment(&b, &[1]), 0.0);
    }

    #[test]
    fn moment_matches_simpson_quadrature() {
        // Independent oracle: composite Simpson on a 2-d box for several
        // monomials. Simpson is exact for cubics, so refine for quartics.
        let b = Box::new(vec![-0.5, 1.0], vec![2.0, 3.0]).unwrap();
        let simpson = |f: &dyn Fn(f64) -> f64, lo: f64, hi: f64, n: usize| {
            let h = (hi - lo) / n as f64;
            let mut s = f(lo) + f(hi);
            for k in 1..n {
                let w = if k % 2 == 1 { 4.0 } else { 2.0 };
                s += w * f(lo + k as f64 * h);
            }
            s * h / 3.0
        };
        for &(a1, a2) in &[(0u32, 0u32), (1, 0), (2, 3), (4, 1)] {
            let inner = |x: f64| {
                simpson(&|y: f64| x.powi(a1 as i32) * y.powi(a2 as i32), 1.0, 3.0, 256)
            };
            let q = simpson(&inner, -0.5, 2.0, 256);
            let m = lebesgue_moment(&b, &[a1, a2]);
            assert!((q - m).abs() < 1e-9 * m.abs().max(1.0), "({a1},{a2}): {q} vs {m}");
        }
    }

    #[test]
    fn inequalities_carve_out_the_box() {
        let vars = VarSpace::new(0, 2, 0);
        let b = Box::new(vec![-1.0, 0.0], vec![1.0, 2.0]).unwrap();
        let gs = box_to_inequalities(&b, vars, 0);
        assert_eq!(gs.len(), 2);
        let set = SemialgebraicSet { vars, inequalities: gs };
        assert!(set.contains(&[0.0, 1.0], 0.0));
        assert!(set.contains(&[1.0, 2.0], 1e-12)); // boundary
        assert!(!set.contains(&[1.1, 1.0], 1e-9));
        assert!(!set.contains(&[0.0, -0.1], 1e-9));
    }

    #[test]
    fn moments_vector_in_basis_order() {
        let b = Box::new(vec![-1.0, -1.0], vec![1.0, 1.0]).unwrap();
        let basis = basis_enumerate(2, 2);
        let m = moments_vector(&b, &basis);
        // order: 1, z2, z1, z2^2, z1 z2, z1^2
        let expect = [4.0, 0.0, 0.0, 4.0 / 3.0, 0.0, 4.0 / 3.0];
        for (got, want) in m.iter().zip(expect) {
            assert!((got - want).abs() < 1e-15);
        }
    }

    #[test]
    fn scale_map_round_trips_points_and_polys() {
        let b = Box::new(vec![-2.0, 1.0], vec![2.0, 5.0]).unwrap();
        let sm = ScaleMap::for_box(&b);
        let orig = [1.5, 2.0];
        let unit = sm.to_unit(&orig);
        assert!((unit[0] - 0.75).abs() < 1e-15);
        assert!((unit[1] + 0.5).abs() < 1e-15);
        let back = sm.from_unit(&unit);
        assert!((back[0] - orig[0]).abs() < 1e-15 && (back[1] - orig[1]).abs() < 1e-15);
        assert!((sm.jacobian() - 4.0).abs() < 1e-15);

        let vars = VarSpace::new(0, 2, 0);
        let p = MultiPoly::from_terms(vars, [(vec![2, 1], 1.0), (vec![0, 1], -2.0)]).unwrap();
        let p_unit = sm.poly_to_unit(&p, 0);
        for &(x, y) in &[(0.0, 3.0), (-2.0, 1.0), (1.0, 4.5)] {
            let z = sm.to_unit(&[x, y]);
            assert!((p_unit.eval(&z) - p.eval(&[x, y])).abs() < 1e-12);
        }
        let p_back = sm.poly_from_unit(&p_unit, 0);
        let diff = p_back.sub(&p).unwrap();
        assert!(diff.max_abs_coeff() < 1e-12);
    }

    fn arb_box(dim: usize) -> impl Strategy<Value = Box> {
        proptest::collection::vec((-3.0f64..3.0, 0.1f64..4.0), dim).prop_map(|v| {
            let lower: Vec<f64> = v.iter().map(|&(l, _)| l).collect();
            let upper: Vec<f64> = v.iter().map(|&(l, w)| l + w).collect();
            Box::new(lower, upper).unwrap()
        })
    }

    proptest! {
        #[test]
        fn prop_zero_moment_is_volume(b in arb_box(2)) {
            let m = lebesgue_moment(&b, &[0, 0]);
            prop_assert!((m - b.volume()).abs() < 1e-12 * b.volume().max(1.0));
        }

        #[test]
        fn prop_membership_matches_inequalities(b in arb_box(2),
                                                p in proptest::collection::vec(-4.0f64..4.0, 2)) {
            let vars = VarSpace::new(0, 2, 0);
            let set = SemialgebraicSet { vars, inequalities: box_to_inequalities(&b, vars, 0) };
            // Stay away from the boundary where tolerance semantics differ.
            let near = (0..2).any(|i| {
                (p[i] - b.lower()[i]).abs() < 1e-6 || (p[i] - b.upper()[i]).abs() < 1e-6
            });
            prop_assume!(!near);
            prop_assert_eq!(b.contains(&p, 0.0), set.contains(&p, 0.0));
        }

        #[test]
        fn prop_unit_cube_round_trip(b in arb_box(3),
                                     z in proptest::collection::vec(-1.0f64..1.0, 3)) {
            let sm = ScaleMap::for_box(&b);
            let x = sm.from_unit(&z);
            prop_assert!(b.contains(&x, 1e-9));
            let z2 = sm.to_unit(&x);
            for (a, c) in z.iter().zip(&z2) {
                prop_assert!((a - c).abs() < 1e-9);
            }
        }
    }
}
