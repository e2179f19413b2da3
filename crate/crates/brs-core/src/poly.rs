//! Sparse multivariate polynomials over the joint variable space
//! (t, x1..xn, theta1..thetam), with the Lie derivative along an augmented
//! vector field and the graded-lex monomial basis used by the relaxation.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum PolyError {
    #[error("variable spaces differ: {0} vs {1}")]
    VarMismatch(VarSpace, VarSpace),
    #[error("exponent tuple has length {got}, expected {expected}")]
    BadExponentLen { got: usize, expected: usize },
    #[error("cannot parse term `{term}`: {reason}")]
    Parse { term: String, reason: String },
    #[error("dynamics arity {got} does not match state dimension {expected}")]
    DynamicsArity { got: usize, expected: usize },
}

/// Which variables a polynomial lives on. `nt` is 0 or 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct VarSpace {
    pub nt: usize,
    pub nx: usize,
    pub ntheta: usize,
}

impl VarSpace {
    pub fn new(nt: usize, nx: usize, ntheta: usize) -> Self {
        assert!(nt <= 1, "at most one time variable");
        VarSpace { nt, nx, ntheta }
    }

    pub fn total(&self) -> usize {
        self.nt + self.nx + self.ntheta
    }

    pub fn var_name(&self, i: usize) -> String {
        if i < self.nt {
            "t".to_string()
        } else if i < self.nt + self.nx {
            format!("x{}", i - self.nt + 1)
        } else {
            format!("theta{}", i - self.nt - self.nx + 1)
        }
    }

    fn var_index(&self, name: &str) -> Option<usize> {
        if name == "t" {
            return if self.nt == 1 { Some(0) } else { None };
        }
        if let Some(k) = name.strip_prefix("theta") {
            let k: usize = k.parse().ok()?;
            return (1..=self.ntheta).contains(&k).then(|| self.nt + self.nx + k - 1);
        }
        if let Some(k) = name.strip_prefix('x') {
            let k: usize = k.parse().ok()?;
            return (1..=self.nx).contains(&k).then(|| self.nt + k - 1);
        }
        None
    }

    /// Drops the time variable: (t,x,θ) -> (x,θ).
    pub fn without_t(&self) -> VarSpace {
        VarSpace { nt: 0, ..*self }
    }
}

impl fmt::Display for VarSpace {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(nt={}, nx={}, ntheta={})", self.nt, self.nx, self.ntheta)
    }
}

/// Exponent tuple ordered by (total degree, then lexicographic).
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Monomial(pub Vec<u32>);

impl Monomial {
    pub fn total_degree(&self) -> u32 {
        self.0.iter().sum()
    }
}

impl Ord for Monomial {
    fn cmp(&self, other: &Self) -> Ordering {
        self.total_degree()
            .cmp(&other.total_degree())
            .then_with(|| self.0.cmp(&other.0))
    }
}

impl PartialOrd for Monomial {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// All monomials of total degree ≤ max_degree in graded-lex order.
#[derive(Debug, Clone)]
pub struct MonomialBasis {
    pub nvars: usize,
    pub max_degree: u32,
    pub exponents: Vec<Monomial>,
}

/// Graded-lex basis of all monomials with total degree ≤ d.
/// Length is C(nvars + d, d).
pub fn basis_enumerate(nvars: usize, d: u32) -> MonomialBasis {
    fn rec(nvars: usize, tot: u32, prefix: &mut Vec<u32>, out: &mut Vec<Monomial>) {
        if prefix.len() == nvars - 1 {
            prefix.push(tot);
            out.push(Monomial(prefix.clone()));
            prefix.pop();
            return;
        }
        for e in 0..=tot {
            prefix.push(e);
            rec(nvars, tot - e, prefix, out);
            prefix.pop();
        }
    }
    let mut exponents = Vec::new();
    if nvars == 0 {
        exponents.push(Monomial(vec![]));
    } else {
        for tot in 0..=d {
            let mut prefix = Vec::with_capacity(nvars);
            rec(nvars, tot, &mut prefix, &mut exponents);
        }
    }
    MonomialBasis { nvars, max_degree: d, exponents }
}

/// Sparse polynomial; zero coefficients are never stored.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiPoly {
    vars: VarSpace,
    terms: BTreeMap<Monomial, f64>,
}

impl MultiPoly {
    pub fn zero(vars: VarSpace) -> Self {
        MultiPoly { vars, terms: BTreeMap::new() }
    }

    pub fn constant(vars: VarSpace, c: f64) -> Self {
        let mut p = Self::zero(vars);
        if c != 0.0 {
            p.terms.insert(Monomial(vec![0; vars.total()]), c);
        }
        p
    }

    /// Single variable as a polynomial.
    pub fn var(vars: VarSpace, i: usize) -> Self {
        assert!(i < vars.total());
        let mut e = vec![0u32; vars.total()];
        e[i] = 1;
        let mut p = Self::zero(vars);
        p.terms.insert(Monomial(e), 1.0);
        p
    }

    pub fn from_terms<I>(vars: VarSpace, it: I) -> Result<Self, PolyError>
    where
        I: IntoIterator<Item = (Vec<u32>, f64)>,
    {
        let mut p = Self::zero(vars);
        for (e, c) in it {
            if e.len() != vars.total() {
                return Err(PolyError::BadExponentLen { got: e.len(), expected: vars.total() });
            }
            p.add_term(Monomial(e), c);
        }
        Ok(p)
    }

    pub fn vars(&self) -> VarSpace {
        self.vars
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Monomial, f64)> {
        self.terms.iter().map(|(m, &c)| (m, c))
    }

    pub fn num_terms(&self) -> usize {
        self.terms.len()
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn coeff(&self, e: &[u32]) -> f64 {
        self.terms.get(&Monomial(e.to_vec())).copied().unwrap_or(0.0)
    }

    /// None is the degree of the zero polynomial (the −∞ sentinel).
    pub fn degree(&self) -> Option<u32> {
        self.terms.keys().map(|m| m.total_degree()).max()
    }

    fn add_term(&mut self, m: Monomial, c: f64) {
        if c == 0.0 {
            return;
        }
        let entry = self.terms.entry(m);
        match entry {
            std::collections::btree_map::Entry::Vacant(v) => {
                v.insert(c);
            }
            std::collections::btree_map::Entry::Occupied(mut o) => {
                let s = o.get() + c;
                if s == 0.0 {
                    o.remove();
                } else {
                    *o.get_mut() = s;
                }
            }
        }
    }

    pub fn add(&self, other: &MultiPoly) -> Result<MultiPoly, PolyError> {
        if self.vars != other.vars {
            return Err(PolyError::VarMismatch(self.vars, other.vars));
        }
        let mut out = self.clone();
        for (m, &c) in &other.terms {
            out.add_term(m.clone(), c);
        }
        Ok(out)
    }

    pub fn sub(&self, other: &MultiPoly) -> Result<MultiPoly, PolyError> {
        self.add(&other.scale(-1.0))
    }

    pub fn scale(&self, s: f64) -> MultiPoly {
        if s == 0.0 {
            return MultiPoly::zero(self.vars);
        }
        let mut out = MultiPoly::zero(self.vars);
        for (m, &c) in &self.terms {
            let v = c * s;
            if v != 0.0 {
                out.terms.insert(m.clone(), v);
            }
        }
        out
    }

    pub fn mul(&self, other: &MultiPoly) -> Result<MultiPoly, PolyError> {
        if self.vars != other.vars {
            return Err(PolyError::VarMismatch(self.vars, other.vars));
        }
        let mut out = MultiPoly::zero(self.vars);
        for (ma, &ca) in &self.terms {
            for (mb, &cb) in &other.terms {
                let e: Vec<u32> = ma.0.iter().zip(&mb.0).map(|(a, b)| a + b).collect();
                out.add_term(Monomial(e), ca * cb);
            }
        }
        Ok(out)
    }

    pub fn partial_diff(&self, i: usize) -> MultiPoly {
        assert!(i < self.vars.total());
        let mut out = MultiPoly::zero(self.vars);
        for (m, &c) in &self.terms {
            if m.0[i] > 0 {
                let mut e = m.0.clone();
                let k = e[i] as f64;
                e[i] -= 1;
                out.add_term(Monomial(e), c * k);
            }
        }
        out
    }

    /// L_f v = ∂v/∂t + Σᵢ (∂v/∂xᵢ)·fᵢ, with θ̇ = 0 so θ-components vanish.
    pub fn lie_derivative(&self, f: &[MultiPoly]) -> Result<MultiPoly, PolyError> {
        if f.len() != self.vars.nx {
            return Err(PolyError::DynamicsArity { got: f.len(), expected: self.vars.nx });
        }
        let mut out = if self.vars.nt == 1 {
            self.partial_diff(0)
        } else {
            MultiPoly::zero(self.vars)
        };
        for (i, fi) in f.iter().enumerate() {
            let dv = self.partial_diff(self.vars.nt + i);
            out = out.add(&dv.mul(fi)?)?;
        }
        Ok(out)
    }

    pub fn eval(&self, point: &[f64]) -> f64 {
        assert_eq!(point.len(), self.vars.total());
        let mut acc = 0.0;
        for (m, &c) in &self.terms {
            let mut t = c;
            for (z, &e) in point.iter().zip(&m.0) {
                t *= z.powi(e as i32);
            }
            acc += t;
        }
        acc
    }

    /// Substitutes var_i -> a_i·z_i + b_i for every variable.
    pub fn substitute_affine(&self, a: &[f64], b: &[f64]) -> MultiPoly {
        assert_eq!(a.len(), self.vars.total());
        assert_eq!(b.len(), self.vars.total());
        let n = self.vars.total();
        let mut out = MultiPoly::zero(self.vars);
        for (m, &c) in &self.terms {
            let mut term = MultiPoly::constant(self.vars, c);
            for i in 0..n {
                if m.0[i] == 0 {
                    continue;
                }
                let lin = MultiPoly::var(self.vars, i)
                    .scale(a[i])
                    .add(&MultiPoly::constant(self.vars, b[i]))
                    .unwrap();
                for _ in 0..m.0[i] {
                    term = term.mul(&lin).unwrap();
                }
            }
            out = out.add(&term).unwrap();
        }
        out
    }

    /// Substitutes a fixed value for the time variable, dropping it from the
    /// variable space: v(t,x,θ) -> v(t0,x,θ) over (x,θ).
    pub fn eval_at_t(&self, t0: f64) -> MultiPoly {
        assert_eq!(self.vars.nt, 1, "polynomial has no time variable");
        let mut out = MultiPoly::zero(self.vars.without_t());
        for (m, &c) in &self.terms {
            let coef = c * t0.powi(m.0[0] as i32);
            out.add_term(Monomial(m.0[1..].to_vec()), coef);
        }
        out
    }

    /// Drops coefficients with |c| ≤ tol. Never applied implicitly.
    pub fn cleanup(&self, tol: f64) -> MultiPoly {
        let mut out = MultiPoly::zero(self.vars);
        for (m, &c) in &self.terms {
            if c.abs() > tol {
                out.terms.insert(m.clone(), c);
            }
        }
        out
    }

    pub fn max_abs_coeff(&self) -> f64 {
        self.terms.values().fold(0.0, |a, c| a.max(c.abs()))
    }

    /// Parses the term-list grammar: `coeff * t^a x1^b1 ... thetam^cm`,
    /// terms joined by `+`/`-`, `^1` and absent factors optional,
    /// scientific-notation coefficients accepted. The coefficient (and the
    /// `*` after it) may be omitted, so `theta1`, `0.5 x1^2`, and `-2` are
    /// all valid terms.
    pub fn parse(text: &str, vars: VarSpace) -> Result<MultiPoly, PolyError> {
        let mut out = MultiPoly::zero(vars);
        for (sign, term) in split_terms(text) {
            if term.trim().is_empty() {
                return Err(PolyError::Parse {
                    term: term.to_string(),
                    reason: "empty term".into(),
                });
            }
            let (coef, rest) = parse_coefficient(&term)?;
            let mut e = vec![0u32; vars.total()];
            for factor in rest.split_whitespace() {
                let (name, pow) = match factor.split_once('^') {
                    Some((n, p)) => {
                        let p: u32 = p.parse().map_err(|_| PolyError::Parse {
                            term: term.clone(),
                            reason: format!("bad exponent `{p}`"),
                        })?;
                        (n, p)
                    }
                    None => (factor, 1),
                };
                let idx = vars.var_index(name).ok_or_else(|| PolyError::Parse {
                    term: term.clone(),
                    reason: format!("unknown variable `{name}` in space {vars}"),
                })?;
                e[idx] += pow;
            }
            out.add_term(Monomial(e), sign * coef);
        }
        Ok(out)
    }
}

fn split_terms(text: &str) -> Vec<(f64, String)> {
    // Splits on top-level + / - while keeping `e-3` style exponents intact.
    let mut terms = Vec::new();
    let mut cur = String::new();
    let mut sign = 1.0;
    let chars: Vec<char> = text.chars().collect();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if (c == '+' || c == '-') && !cur.trim().is_empty() {
            let prev_is_exp = {
                let t = cur.trim_end();
                t.ends_with('e') || t.ends_with('E')
            };
            let prev = cur.trim_end().chars().last();
            let exponent_sign = prev_is_exp
                && prev.is_some()
                && cur.trim_end().len() >= 2
                && cur
                    .trim_end()
                    .chars()
                    .rev()
                    .nth(1)
                    .map(|d| d.is_ascii_digit() || d == '.')
                    .unwrap_or(false);
            if exponent_sign {
                cur.push(c);
            } else {
                terms.push((sign, std::mem::take(&mut cur)));
                sign = if c == '-' { -1.0 } else { 1.0 };
            }
        } else if (c == '+' || c == '-') && cur.trim().is_empty() {
            if c == '-' {
                sign = -sign;
            }
        } else {
            cur.push(c);
        }
        i += 1;
    }
    if !cur.trim().is_empty() {
        terms.push((sign, cur));
    }
    terms
}

fn parse_coefficient(term: &str) -> Result<(f64, String), PolyError> {
    let t = term.trim();
    if let Some((lhs, rhs)) = t.split_once('*') {
        let coef: f64 = lhs.trim().parse().map_err(|_| PolyError::Parse {
            term: term.to_string(),
            reason: format!("bad coefficient `{}`", lhs.trim()),
        })?;
        return Ok((coef, rhs.trim().to_string()));
    }
    // No `*`: a bare constant, `coeff factors`, or bare factors with an
    // implicit coefficient of one.
    if let Ok(c) = t.parse::<f64>() {
        return Ok((c, String::new()));
    }
    match t.split_once(char::is_whitespace) {
        Some((first, rest)) if first.parse::<f64>().is_ok() => {
            Ok((first.parse::<f64>().expect("checked"), rest.trim().to_string()))
        }
        _ => Ok((1.0, t.to_string())),
    }
}

impl fmt::Display for MultiPoly {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        let mut first = true;
        for (m, &c) in &self.terms {
            let mag = c.abs();
            if first {
                if c < 0.0 {
                    write!(f, "-")?;
                }
                first = false;
            } else if c < 0.0 {
                write!(f, " - ")?;
            } else {
                write!(f, " + ")?;
            }
            write!(f, "{}", format_coeff(mag))?;
            let mut sep = " * ";
            for (i, &e) in m.0.iter().enumerate() {
                if e == 0 {
                    continue;
                }
                write!(f, "{sep}{}", self.vars.var_name(i))?;
                sep = " ";
                if e > 1 {
                    write!(f, "^{e}")?;
                }
            }
        }
        Ok(())
    }
}

fn format_coeff(mag: f64) -> String {
    if mag != 0.0 && !(1e-4..1e16).contains(&mag) {
        format!("{mag:e}")
    } else {
        format!("{mag}")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn space3() -> VarSpace {
        VarSpace::new(1, 1, 1)
    }

    #[test]
    fn zero_poly_degree_is_sentinel() {
        let p = MultiPoly::zero(space3());
        assert_eq!(p.degree(), None);
        assert!(p.is_zero());
    }

    #[test]
    fn add_cancels_to_zero_exactly() {
        let vars = space3();
        let p = MultiPoly::from_terms(vars, [(vec![1, 2, 0], 3.5)]).unwrap();
        let q = p.scale(-1.0);
        let s = p.add(&q).unwrap();
        assert!(s.is_zero(), "cancellation must prune the stored term");
    }

    #[test]
    fn mul_degree_adds() {
        let vars = space3();
        let p = MultiPoly::from_terms(vars, [(vec![1, 0, 0], 1.0), (vec![0, 0, 0], 2.0)]).unwrap();
        let q = MultiPoly::from_terms(vars, [(vec![0, 2, 1], -1.0)]).unwrap();
        let r = p.mul(&q).unwrap();
        assert_eq!(r.degree(), Some(4));
        assert_eq!(r.coeff(&[1, 2, 1]), -1.0);
        assert_eq!(r.coeff(&[0, 2, 1]), -2.0);
    }

    #[test]
    fn partial_diff_drops_and_scales() {
        let vars = space3();
        // t^2 x
        let p = MultiPoly::from_terms(vars, [(vec![2, 1, 0], 1.0)]).unwrap();
        let dt = p.partial_diff(0);
        assert_eq!(dt.coeff(&[1, 1, 0]), 2.0);
        let dtheta = p.partial_diff(2);
        assert!(dtheta.is_zero());
    }

    #[test]
    fn lie_derivative_matches_hand_computation() {
        // v = t + x^2, f = theta  =>  Lv = 1 + 2x·theta
        let vars = space3();
        let v = MultiPoly::from_terms(vars, [(vec![1, 0, 0], 1.0), (vec![0, 2, 0], 1.0)]).unwrap();
        let f = MultiPoly::from_terms(vars, [(vec![0, 0, 1], 1.0)]).unwrap();
        let lv = v.lie_derivative(&[f]).unwrap();
        assert_eq!(lv.coeff(&[0, 0, 0]), 1.0);
        assert_eq!(lv.coeff(&[0, 1, 1]), 2.0);
        assert_eq!(lv.num_terms(), 2);
    }

    #[test]
    fn lie_derivative_by_finite_differences() {
        // Random-ish fixed v and f; compare Lv at points with (d/dt) v(t, x(t))
        // via central differences along the flow direction.
        let vars = space3();
        let v = MultiPoly::from_terms(
            vars,
            [
                (vec![1, 2, 0], 0.7),
                (vec![0, 1, 1], -1.3),
                (vec![2, 0, 1], 0.25),
                (vec![0, 3, 0], 0.11),
            ],
        )
        .unwrap();
        let f = MultiPoly::from_terms(vars, [(vec![0, 1, 0], -0.5), (vec![0, 0, 1], 1.0)]).unwrap();
        let lv = v.lie_derivative(std::slice::from_ref(&f)).unwrap();
        for &(t, x, th) in &[(0.3, 0.4, -0.2), (0.9, -1.1, 0.6), (0.0, 0.0, 1.0)] {
            let fd = {
                let h = 1e-6;
                let fx = f.eval(&[t, x, th]);
                let vp = v.eval(&[t + h, x + h * fx, th]);
                let vm = v.eval(&[t - h, x - h * fx, th]);
                (vp - vm) / (2.0 * h)
            };
            let exact = lv.eval(&[t, x, th]);
            assert!((fd - exact).abs() < 1e-6, "fd {fd} vs exact {exact}");
        }
    }

    #[test]
    fn basis_counts_and_order() {
        let b = basis_enumerate(3, 2);
        // C(5,2) = 10
        assert_eq!(b.exponents.len(), 10);
        for w in b.exponents.windows(2) {
            assert!(w[0] < w[1], "graded-lex strictly increasing");
        }
        let b2 = basis_enumerate(2, 2);
        let expected: Vec<Vec<u32>> =
            vec![vec![0, 0], vec![0, 1], vec![1, 0], vec![0, 2], vec![1, 1], vec![2, 0]];
        let got: Vec<Vec<u32>> = b2.exponents.iter().map(|m| m.0.clone()).collect();
        assert_eq!(got, expected);
    }

    #[test]
    fn parse_round_trip_and_grammar() {
        let vars = space3();
        let p = MultiPoly::parse("0.5 * t^2 x1 - 1.25e-3 * theta1^3 + 2", vars).unwrap();
        assert_eq!(p.coeff(&[2, 1, 0]), 0.5);
        assert_eq!(p.coeff(&[0, 0, 3]), -1.25e-3);
        assert_eq!(p.coeff(&[0, 0, 0]), 2.0);
        let shown = p.to_string();
        let q = MultiPoly::parse(&shown, vars).unwrap();
        assert_eq!(p, q, "display output must re-parse to the same polynomial");

        // Coefficient and `*` are optional per term.
        let bare = MultiPoly::parse("theta1 - x1^2 + 0.5 t x1", vars).unwrap();
        assert_eq!(bare.coeff(&[0, 0, 1]), 1.0);
        assert_eq!(bare.coeff(&[0, 2, 0]), -1.0);
        assert_eq!(bare.coeff(&[1, 1, 0]), 0.5);
    }

    #[test]
    fn parse_rejects_unknown_variable() {
        let vars = VarSpace::new(0, 1, 0);
        let err = MultiPoly::parse("1.0 * x2", vars).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("x2"), "error must name the term: {msg}");
    }

    #[test]
    fn parse_negative_exponent_coefficient() {
        let vars = VarSpace::new(0, 1, 0);
        let p = MultiPoly::parse("-3e-2 * x1 + 1e+1", vars).unwrap();
        assert_eq!(p.coeff(&[1]), -3e-2);
        assert_eq!(p.coeff(&[0]), 10.0);
    }

    #[test]
    fn eval_at_t_collapses_time() {
        let vars = space3();
        // v = t^2 x + theta
        let v = MultiPoly::from_terms(vars, [(vec![2, 1, 0], 1.0), (vec![0, 0, 1], 1.0)]).unwrap();
        let v1 = v.eval_at_t(0.5);
        assert_eq!(v1.vars().total(), 2);
        assert_eq!(v1.coeff(&[1, 0]), 0.25);
        assert_eq!(v1.coeff(&[0, 1]), 1.0);
    }

    #[test]
    fn substitute_affine_matches_pointwise() {
        let vars = VarSpace::new(0, 2, 0);
        let p = MultiPoly::from_terms(vars, [(vec![2, 1], 1.5), (vec![0, 2], -0.5)]).unwrap();
        let a = [2.0, 0.5];
        let b = [1.0, -0.25];
        let q = p.substitute_affine(&a, &b);
        for &(z1, z2) in &[(0.3, -0.7), (1.0, 1.0), (-0.2, 0.1)] {
            let lhs = q.eval(&[z1, z2]);
            let rhs = p.eval(&[2.0 * z1 + 1.0, 0.5 * z2 - 0.25]);
            assert!((lhs - rhs).abs() < 1e-12);
        }
    }

    #[test]
    fn cleanup_is_explicit_and_thresholded() {
        let vars = VarSpace::new(0, 1, 0);
        let p = MultiPoly::from_terms(vars, [(vec![1], 1e-15), (vec![0], 1.0)]).unwrap();
        assert_eq!(p.num_terms(), 2, "tiny coefficients are kept by algebra");
        let q = p.cleanup(1e-12);
        assert_eq!(q.num_terms(), 1);
    }

    // Exact ring axioms on integer-coefficient polynomials (f64-exact).
    fn small_poly(vars: VarSpace) -> impl Strategy<Value = MultiPoly> {
        let n = vars.total();
        proptest::collection::vec((proptest::collection::vec(0u32..3, n), -4i32..=4), 0..5)
            .prop_map(move |terms| {
                MultiPoly::from_terms(vars, terms.into_iter().map(|(e, c)| (e, c as f64)))
                    .unwrap()
            })
    }

    proptest! {
        #[test]
        fn prop_add_commutes(a in small_poly(space3()), b in small_poly(space3())) {
            prop_assert_eq!(a.add(&b).unwrap(), b.add(&a).unwrap());
        }

        #[test]
        fn prop_mul_distributes(a in small_poly(space3()), b in small_poly(space3()),
                                c in small_poly(space3())) {
            let lhs = a.mul(&b.add(&c).unwrap()).unwrap();
            let rhs = a.mul(&b).unwrap().add(&a.mul(&c).unwrap()).unwrap();
            prop_assert_eq!(lhs, rhs);
        }

        #[test]
        fn prop_mul_associates(a in small_poly(space3()), b in small_poly(space3()),
                               c in small_poly(space3())) {
            let lhs = a.mul(&b).unwrap().mul(&c).unwrap();
            let rhs = a.mul(&b.mul(&c).unwrap()).unwrap();
            prop_assert_eq!(lhs, rhs);
        }

        #[test]
        fn prop_no_zero_coefficients_stored(a in small_poly(space3()), b in small_poly(space3())) {
            let s = a.add(&b).unwrap();
            prop_assert!(s.terms().all(|(_, c)| c != 0.0));
        }

        #[test]
        fn prop_degree_of_product(a in small_poly(space3()), b in small_poly(space3())) {
            // Integer coefficients can't cancel the leading graded term pair sum
            // in general, so only check the upper bound plus zero-case exactness.
            let p = a.mul(&b).unwrap();
            match (a.degree(), b.degree()) {
                (Some(da), Some(db)) => prop_assert!(p.degree().is_none_or(|d| d <= da + db)),
                _ => prop_assert!(p.is_zero()),
            }
        }

        #[test]
        fn prop_basis_count(n in 1usize..4, d in 0u32..6) {
            let b = basis_enumerate(n, d);
            let expect: usize = {
                // C(n+d, d)
                let mut num = 1usize;
                let mut den = 1usize;
                for i in 1..=d as usize {
                    num *= n + i;
                    den *= i;
                }
                num / den
            };
            prop_assert_eq!(b.exponents.len(), expect);
        }

        #[test]
        fn prop_lie_derivative_is_linear(a in small_poly(space3()), b in small_poly(space3())) {
            let f = MultiPoly::from_terms(space3(), [(vec![0,1,0], 1.0), (vec![0,0,1], -2.0)]).unwrap();
            let lhs = a.add(&b).unwrap().lie_derivative(std::slice::from_ref(&f)).unwrap();
            let rhs = a.lie_derivative(std::slice::from_ref(&f)).unwrap()
                .add(&b.lie_derivative(&[f]).unwrap()).unwrap();
            prop_assert_eq!(lhs, rhs);
        }
    }
}
