//! Distributions over the uncertain parameter θ: uniform on a box, a finite
//! set of weighted atoms, or a bare moment table. Provides exact monomial
//! moments, exact marginalization of polynomials in (x,θ), and sampling
//! (where possible).

use std::collections::BTreeMap;

use rand::Rng;

use crate::poly::{Monomial, MultiPoly, VarSpace};
use crate::sets::{lebesgue_moment, Box};
use thiserror::Error;

const WEIGHT_TOL: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum DistError {
    #[error("atom weights must be nonnegative, got {0}")]
    NegativeWeight(f64),
    #[error("atom weights sum to {0}, expected 1 within {WEIGHT_TOL:e}")]
    Unnormalized(f64),
    #[error("atom {index} has dimension {got}, expected {expected}")]
    AtomDim { index: usize, got: usize, expected: usize },
    #[error("no atoms given")]
    NoAtoms,
    #[error("moment table is missing exponent {0:?}")]
    MissingMoment(Vec<u32>),
    #[error("moment table entry {0:?} is not finite")]
    NonFiniteMoment(Vec<u32>),
    #[error("a moment table has no sampling rule")]
    Unsampleable,
    #[error("polynomial lives on {got} θ-variables, distribution has {expected}")]
    ThetaDimMismatch { got: usize, expected: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Atom {
    pub point: Vec<f64>,
    pub weight: f64,
}

#[derive(Debug, Clone)]
pub enum ThetaDistribution {
    UniformBox(Box),
    DiscreteAtoms { dim: usize, atoms: Vec<Atom> },
    MomentTable { dim: usize, table: BTreeMap<Monomial, f64> },
}

impl ThetaDistribution {
    pub fn uniform_box(b: Box) -> Self {
        ThetaDistribution::UniformBox(b)
    }

    pub fn discrete_atoms(dim: usize, atoms: Vec<Atom>) -> Result<Self, DistError> {
        if atoms.is_empty() {
            return Err(DistError::NoAtoms);
        }
        let mut total = 0.0;
        for (index, a) in atoms.iter().enumerate() {
            if a.point.len() != dim {
                return Err(DistError::AtomDim { index, got: a.point.len(), expected: dim });
            }
            if a.weight < 0.0 {
                return Err(DistError::NegativeWeight(a.weight));
            }
            total += a.weight;
        }
        if (total - 1.0).abs() > WEIGHT_TOL {
            return Err(DistError::Unnormalized(total));
        }
        Ok(ThetaDistribution::DiscreteAtoms { dim, atoms })
    }

    pub fn moment_table(
        dim: usize,
        entries: impl IntoIterator<Item = (Vec<u32>, f64)>,
    ) -> Result<Self, DistError> {
        let mut table = BTreeMap::new();
        for (e, v) in entries {
            if !v.is_finite() {
                return Err(DistError::NonFiniteMoment(e));
            }
            table.insert(Monomial(e), v);
        }
        let zero = Monomial(vec![0; dim]);
        match table.get(&zero) {
            Some(&v) if (v - 1.0).abs() <= WEIGHT_TOL => {}
            Some(&v) => return Err(DistError::Unnormalized(v)),
            None => return Err(DistError::MissingMoment(zero.0)),
        }
        Ok(ThetaDistribution::MomentTable { dim, table })
    }

    pub fn dim(&self) -> usize {
        match self {
            ThetaDistribution::UniformBox(b) => b.dim(),
            ThetaDistribution::DiscreteAtoms { dim, .. } => *dim,
            ThetaDistribution::MomentTable { dim, .. } => *dim,
        }
    }

    /// E[θ^a] under μ_θ.
    pub fn moment(&self, exponent: &[u32]) -> Result<f64, DistError> {
        match self {
            ThetaDistribution::UniformBox(b) => {
                Ok(lebesgue_moment(b, exponent) / b.volume())
            }
            ThetaDistribution::DiscreteAtoms { atoms, .. } => Ok(atoms
                .iter()
                .map(|a| {
                    a.weight
                        * a.point
                            .iter()
                            .zip(exponent)
                            .map(|(&t, &e)| t.powi(e as i32))
                            .product::<f64>()
                })
                .sum()),
            ThetaDistribution::MomentTable { table, .. } => table
                .get(&Monomial(exponent.to_vec()))
                .copied()
                .ok_or_else(|| DistError::MissingMoment(exponent.to_vec())),
        }
    }

    /// Exact marginal F(x) = ∫ w(x,θ) dμ_θ of a polynomial in (x,θ).
    /// The result lives on the x-variables only.
    pub fn marginalize_w(&self, w: &MultiPoly) -> Result<MultiPoly, DistError> {
        let vars = w.vars();
        assert_eq!(vars.nt, 0, "marginalization applies to time-free polynomials");
        if vars.ntheta != self.dim() {
            return Err(DistError::ThetaDimMismatch { got: vars.ntheta, expected: self.dim() });
        }
        let out_vars = VarSpace::new(0, vars.nx, 0);
        let mut acc: Vec<(Vec<u32>, f64)> = Vec::new();
        for (m, c) in w.terms() {
            let (xs, thetas) = m.0.split_at(vars.nx);
            let em = self.moment(thetas)?;
            acc.push((xs.to_vec(), c * em));
        }
        Ok(MultiPoly::from_terms(out_vars, acc).expect("exponent lengths match"))
    }

    /// Draws θ ~ μ_θ. Moment tables carry no sampling rule.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<Vec<f64>, DistError> {
        match self {
            ThetaDistribution::UniformBox(b) => Ok(b
                .lower()
                .iter()
                .zip(b.upper())
                .map(|(&l, &u)| rng.gen_range(l..u))
                .collect()),
            ThetaDistribution::DiscreteAtoms { atoms, .. } => {
                let r: f64 = rng.gen();
                let mut cum = 0.0;
                for a in atoms {
                    cum += a.weight;
                    if r < cum {
                        return Ok(a.point.clone());
                    }
                }
                Ok(atoms.last().expect("nonempty").point.clone())
            }
            ThetaDistribution::MomentTable { .. } => Err(DistError::Unsampleable),
        }
    }

    pub fn is_sampleable(&self) -> bool {
        !matches!(self, ThetaDistribution::MomentTable { .. })
    }
}
