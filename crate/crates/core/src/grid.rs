//! Spatial discretization of Ω = [a, b], grid functions, and the competitive order.
//!
//! The grid uses cell midpoints with equal weights `h = (b - a) / n`. The
//! midpoint rule integrates constants and linear functions exactly, and equal
//! weights make the no-flux operator conserve mass column by column.

use std::ops::{Add, Mul, Sub};
use std::sync::Arc;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    a: f64,
    b: f64,
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl Grid {
    /// Uniform midpoint grid with `n` cells on `[a, b]`.
    pub fn new(a: f64, b: f64, n: usize) -> Result<Arc<Grid>> {
        if !(a.is_finite() && b.is_finite()) || a >= b {
            return Err(Error::InvalidGrid(format!("need a < b, got a = {a}, b = {b}")));
        }
        if n < 3 {
            return Err(Error::InvalidGrid(format!("need n >= 3, got {n}")));
        }
        let h = (b - a) / n as f64;
        let nodes = (0..n).map(|i| a + (i as f64 + 0.5) * h).collect();
        Ok(Arc::new(Grid {
            a,
            b,
            nodes,
            weights: vec![h; n],
        }))
    }

    pub fn a(&self) -> f64 {
        self.a
    }

    pub fn b(&self) -> f64 {
        self.b
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Uniform spacing.
    pub fn h(&self) -> f64 {
        (self.b - self.a) / self.len() as f64
    }
}

/// Two grids are interchangeable when they are the same allocation or equal node by node.
pub(crate) fn same_grid(g1: &Arc<Grid>, g2: &Arc<Grid>) -> bool {
    Arc::ptr_eq(g1, g2) || g1 == g2
}

/// A real-valued function sampled at the grid nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    grid: Arc<Grid>,
    values: Vec<f64>,
}

impl Field {
    pub fn new(grid: Arc<Grid>, values: Vec<f64>) -> Result<Field> {
        if values.len() != grid.len() {
            return Err(Error::GridMismatch(format!(
                "field has {} values but grid has {} nodes",
                values.len(),
                grid.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("field value at node {i} is {}", values[i])));
        }
        Ok(Field { grid, values })
    }

    pub fn constant(grid: Arc<Grid>, c: f64) -> Field {
        let n = grid.len();
        Field {
            grid,
            values: vec![c; n],
        }
    }

    pub fn zeros(grid: Arc<Grid>) -> Field {
        Field::constant(grid, 0.0)
    }

    pub fn from_fn(grid: Arc<Grid>, f: impl Fn(f64) -> f64) -> Result<Field> {
        let values = grid.nodes().iter().map(|&x| f(x)).collect();
        Field::new(grid, values)
    }

    /// Builds a field from values assumed finite, skipping validation.
    pub(crate) fn from_raw(grid: Arc<Grid>, values: Vec<f64>) -> Field {
        debug_assert_eq!(values.len(), grid.len());
        Field { grid, values }
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Field {
        Field::from_raw(self.grid.clone(), self.values.iter().map(|&v| f(v)).collect())
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn norm_inf(&self) -> f64 {
        self.values.iter().fold(0.0, |acc: f64, v| acc.max(v.abs()))
    }

    /// Quadrature ∫_Ω f dx as Σ values · weights.
    pub fn integrate(&self) -> f64 {
        self.values
            .iter()
            .zip(self.grid.weights())
            .map(|(v, w)| v * w)
            .sum()
    }

    pub fn check_same_grid(&self, other: &Field) -> Result<()> {
        if same_grid(&self.grid, &other.grid) {
            Ok(())
        } else {
            Err(Error::GridMismatch("fields live on different grids".into()))
        }
    }

    /// Max-norm distance; grids must match.
    pub fn dist_inf(&self, other: &Field) -> Result<f64> {
        self.check_same_grid(other)?;
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .fold(0.0, |acc: f64, (a, b)| acc.max((a - b).abs())))
    }

    /// Componentwise `self <= other + tol`.
    pub fn leq(&self, other: &Field, tol: f64) -> Result<bool> {
        self.check_same_grid(other)?;
        Ok(self.values.iter().zip(&other.values).all(|(a, b)| *a <= *b + tol))
    }

    pub fn axpy(&self, alpha: f64, other: &Field) -> Result<Field> {
        self.check_same_grid(other)?;
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a + alpha * b)
            .collect();
        Ok(Field::from_raw(self.grid.clone(), values))
    }
}

/// ∫_Ω f dx.
pub fn integrate(f: &Field) -> f64 {
    f.integrate()
}

impl Add for &Field {
    type Output = Field;

    /// Panics on grid mismatch; use [`Field::axpy`] for a fallible version.
    fn add(self, rhs: &Field) -> Field {
        self.axpy(1.0, rhs).expect("grid mismatch in field addition")
    }
}

impl Sub for &Field {
    type Output = Field;

    fn sub(self, rhs: &Field) -> Field {
        self.axpy(-1.0, rhs).expect("grid mismatch in field subtraction")
    }
}

impl Mul<&Field> for f64 {
    type Output = Field;

    fn mul(self, rhs: &Field) -> Field {
        rhs.map(|v| self * v)
    }
}

/// A pair of population densities (u, v).
#[derive(Debug, Clone, PartialEq)]
pub struct StatePair {
    pub u: Field,
    pub v: Field,
}

impl StatePair {
    pub fn new(u: Field, v: Field) -> Result<StatePair> {
        u.check_same_grid(&v)?;
        Ok(StatePair { u, v })
    }

    pub fn grid(&self) -> &Arc<Grid> {
        self.u.grid()
    }

    /// Both components componentwise nonnegative.
    pub fn is_admissible(&self) -> bool {
        self.u.min() >= 0.0 && self.v.min() >= 0.0
    }

    pub fn dist_inf(&self, other: &StatePair) -> Result<f64> {
        Ok(self.u.dist_inf(&other.u)?.max(self.v.dist_inf(&other.v)?))
    }
}

/// Competitive order: `s1 <= s2` iff `u1 <= u2` and `v1 >= v2` componentwise.
pub fn competitive_leq(s1: &StatePair, s2: &StatePair) -> Result<bool> {
    competitive_leq_tol(s1, s2, 0.0)
}

pub fn competitive_leq_tol(s1: &StatePair, s2: &StatePair, tol: f64) -> Result<bool> {
    s1.u.check_same_grid(&s2.u)?;
    Ok(s1.u.leq(&s2.u, tol)? && s2.v.leq(&s1.v, tol)?)
}
