//! Post-processing of a solved certificate: the confidence field
//! F(x) = ∫ w(x,θ) dμ_θ, its α-superlevel sets, and the containment report
//! comparing an extracted set against a Monte Carlo reach-probability field.
//!
//! F overestimates the true reach probability (finite-degree certificates
//! overshoot the indicator they approximate), so extracted sets are outer
//! approximations: the report counts points that are empirically reaching
//! with margin yet excluded — expected zero — and measures the excess area
//! as a tightness metric.

use std::io::{self, Write};

use thiserror::Error;

use crate::distribution::{DistError, ThetaDistribution};
use crate::oracle::{EmpiricalField, Lattice};
use crate::poly::MultiPoly;

#[derive(Debug, Error)]
pub enum ConfidenceError {
    #[error("alpha must lie in (0, 1], got {0}")]
    AlphaOutOfRange(f64),
    #[error("field grid has {got} points, expected {expected}")]
    GridSizeMismatch { got: usize, expected: usize },
    #[error("grid dimension {got} does not match the marginal's {expected} variables")]
    GridDimMismatch { got: usize, expected: usize },
    #[error(transparent)]
    Distribution(#[from] DistError),
}

/// The confidence field F(x) = ∫ w(x,θ) dμ_θ evaluated over a lattice.
/// Both the marginal polynomial and the grid live in original (unscaled)
/// state coordinates.
#[derive(Debug, Clone)]
pub struct ConfidenceField {
    pub marginal: MultiPoly,
    pub grid: Lattice,
    pub values: Vec<f64>,
    pub relaxation_degree: u32,
    /// Optimal relaxation objective in original coordinates (volume-scaled).
    pub objective_value: f64,
}

/// An α-superlevel set {x : F(x) ≥ α} represented on the field's grid.
#[derive(Debug, Clone)]
pub struct AlphaSet {
    pub alpha: f64,
    pub membership: Vec<bool>,
    /// Maximal member intervals for one-dimensional state spaces (grid-point
    /// coordinates of each run's endpoints); empty in higher dimension.
    pub interval_list: Vec<(f64, f64)>,
}

/// Outcome of checking an extracted set against an empirical field.
#[derive(Debug, Clone)]
pub struct ContainmentReport {
    pub alpha: f64,
    pub stat_margin: f64,
    /// Grid points empirically reaching with margin (p̂ ≥ α + margin) that
    /// the extracted set excludes. Outer containment demands zero.
    pub violations: Vec<Vec<f64>>,
    /// Cell-counting area of the extracted set.
    pub estimated_area: f64,
    /// Cell-counting area of the empirical superlevel set {p̂ ≥ α}.
    pub empirical_area: f64,
    /// estimated − empirical: how much the outer approximation overshoots.
    pub excess_area: f64,
    pub pass: bool,
}

/// Marginalizes w over θ and evaluates the resulting F on the grid.
/// `w` must be a time-free polynomial over (x, θ) in original coordinates;
/// `objective_value` and `relaxation_degree` are recorded for reporting.
pub fn build_confidence_field(
    w: &MultiPoly,
    dist: &ThetaDistribution,
    grid: &Lattice,
    relaxation_degree: u32,
    objective_value: f64,
) -> Result<ConfidenceField, ConfidenceError> {
    let marginal = dist.marginalize_w(w)?;
    if grid.dim() != marginal.vars().nx {
        return Err(ConfidenceError::GridDimMismatch {
            got: grid.dim(),
            expected: marginal.vars().nx,
        });
    }
    let values = grid.points().iter().map(|p| marginal.eval(p)).collect();
    Ok(ConfidenceField {
        marginal,
        grid: grid.clone(),
        values,
        relaxation_degree,
        objective_value,
    })
}

/// Thresholds the field at α; for one-dimensional grids, merges adjacent
/// member points into maximal intervals.
pub fn extract_alpha_set(field: &ConfidenceField, alpha: f64) -> Result<AlphaSet, ConfidenceError> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(ConfidenceError::AlphaOutOfRange(alpha));
    }
    let membership: Vec<bool> = field.values.iter().map(|&v| v >= alpha).collect();
    let interval_list = if field.grid.dim() == 1 {
        intervals_from_membership(&field.grid.axes()[0], &membership)
    } else {
        Vec::new()
    };
    Ok(AlphaSet { alpha, membership, interval_list })
}

fn intervals_from_membership(axis: &[f64], membership: &[bool]) -> Vec<(f64, f64)> {
    let mut out = Vec::new();
    let mut start: Option<usize> = None;
    for (i, &m) in membership.iter().enumerate() {
        match (m, start) {
            (true, None) => start = Some(i),
            (false, Some(s)) => {
                out.push((axis[s], axis[i - 1]));
                start = None;
            }
            _ => {}
        }
    }
    if let Some(s) = start {
        out.push((axis[s], axis[membership.len() - 1]));
    }
    out
}

/// Volume of one grid cell, used for cell-counting set areas. Degenerate
/// single-point axes contribute a factor of one.
fn cell_volume(grid: &Lattice) -> f64 {
    grid.axes()
        .iter()
        .map(|axis| if axis.len() >= 2 { axis[1] - axis[0] } else { 1.0 })
        .product()
}

/// Counts outer-containment violations of `est` against the empirical field:
/// points with p̂(x) ≥ alpha + stat_margin excluded from the set. Also
/// reports cell-counting areas of both sets and their difference.
pub fn containment_report(
    est: &AlphaSet,
    emp: &EmpiricalField,
    alpha: f64,
    stat_margin: f64,
) -> Result<ContainmentReport, ConfidenceError> {
    if est.membership.len() != emp.grid.len() {
        return Err(ConfidenceError::GridSizeMismatch {
            got: est.membership.len(),
            expected: emp.grid.len(),
        });
    }
    let mut violations = Vec::new();
    for (i, pt) in emp.grid.points().iter().enumerate() {
        if emp.values[i] >= alpha + stat_margin && !est.membership[i] {
            violations.push(pt.clone());
        }
    }
    let cell = cell_volume(&emp.grid);
    let estimated_area = est.membership.iter().filter(|&&m| m).count() as f64 * cell;
    let empirical_area = emp.values.iter().filter(|&&p| p >= alpha).count() as f64 * cell;
    Ok(ContainmentReport {
        alpha,
        stat_margin,
        pass: violations.is_empty(),
        violations,
        estimated_area,
        empirical_area,
        excess_area: estimated_area - empirical_area,
    })
}

impl ConfidenceField {
    /// CSV rows `x1,...,xn,F`.
    pub fn write_csv<W: Write>(&self, out: &mut W) -> io::Result<()> {
        let n = self.grid.dim();
        for k in 1..=n {
            write!(out, "x{k},")?;
        }
        writeln!(out, "F")?;
        for (pt, v) in self.grid.points().iter().zip(&self.values) {
            for z in pt {
                write!(out, "{z},")?;
            }
            writeln!(out, "{v}")?;
        }
        Ok(())
    }
}

impl AlphaSet {
    /// CSV rows `x1,...,xn,F,member` over the field's grid.
    pub fn write_csv<W: Write>(&self, field: &ConfidenceField, out: &mut W) -> io::Result<()> {
        let n = field.grid.dim();
        for k in 1..=n {
            write!(out, "x{k},")?;
        }
        writeln!(out, "F,member")?;
        for (i, pt) in field.grid.points().iter().enumerate() {
            for z in pt {
                write!(out, "{z},")?;
            }
            writeln!(out, "{},{}", field.values[i], u8::from(self.membership[i]))?;
        }
        Ok(())
    }

    /// Cell-counting area of the set on its grid.
    pub fn area(&self, grid: &Lattice) -> f64 {
        self.membership.iter().filter(|&&m| m).count() as f64 * cell_volume(grid)
    }
}
