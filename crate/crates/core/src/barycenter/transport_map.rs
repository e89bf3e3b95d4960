//! Barycenter reconstruction from a dual density on a regular grid.
//!
//! With `ξ = −½ ∇ log σ`, the map `t(x) = x − (arctan‖ξ‖/‖ξ‖) ξ` carries the
//! plan marginal `γ = σ μ_i`, and the barycenter part is `t_# γ / (1 − f)`.

use crate::duality::PotentialFunction;
use crate::error::{invalid, HkError, Result};
use crate::measure::DiscreteMeasure;
use crate::space::{GroundSpace, Point};

const SMALL_XI: f64 = 1e-12;

/// Samples on the grid `origin + h · multi-index`, row-major (last axis
/// fastest).
#[derive(Debug, Clone, PartialEq)]
pub struct GridDensity {
    pub origin: Vec<f64>,
    pub spacing: f64,
    pub shape: Vec<usize>,
    pub values: Vec<f64>,
}

impl GridDensity {
    pub fn new(origin: Vec<f64>, spacing: f64, shape: Vec<usize>, values: Vec<f64>) -> Result<Self> {
        if origin.len() != shape.len() || origin.is_empty() {
            return Err(HkError::DimensionMismatch { expected: shape.len(), found: origin.len() });
        }
        if !(spacing > 0.0) || !spacing.is_finite() {
            return invalid(format!("grid spacing must be positive, got {spacing}"));
        }
        let n: usize = shape.iter().product();
        if values.len() != n {
            return Err(HkError::DimensionMismatch { expected: n, found: values.len() });
        }
        Ok(GridDensity { origin, spacing, shape, values })
    }

    /// Samples `f` at every node.
    pub fn sample(origin: Vec<f64>, spacing: f64, shape: Vec<usize>, f: impl Fn(&[f64]) -> f64) -> Result<Self> {
        let n: usize = shape.iter().product();
        let mut g = GridDensity::new(origin, spacing, shape, vec![0.0; n])?;
        for i in 0..n {
            g.values[i] = f(&g.node(i));
        }
        Ok(g)
    }

    pub fn dim(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    fn multi_index(&self, mut i: usize) -> Vec<usize> {
        let mut idx = vec![0; self.dim()];
        for a in (0..self.dim()).rev() {
            idx[a] = i % self.shape[a];
            i /= self.shape[a];
        }
        idx
    }

    fn flat(&self, idx: &[usize]) -> usize {
        idx.iter().zip(&self.shape).fold(0, |acc, (i, n)| acc * n + i)
    }

    /// Coordinates of node `i`.
    pub fn node(&self, i: usize) -> Vec<f64> {
        self.multi_index(i).iter().zip(&self.origin).map(|(&k, o)| o + k as f64 * self.spacing).collect()
    }
}

/// `ξ = −½ ∇ log σ` at every node by central differences (second-order
/// one-sided on the boundary). `None` where the stencil meets `σ ≤ 0`.
pub fn xi_field(sigma: &GridDensity) -> Vec<Option<Vec<f64>>> {
    let h = sigma.spacing;
    let log = |i: usize| -> Option<f64> {
        let v = sigma.values[i];
        (v > 0.0 && v.is_finite()).then(|| v.ln())
    };
    (0..sigma.len())
        .map(|i| {
            let idx = sigma.multi_index(i);
            let mut xi = Vec::with_capacity(sigma.dim());
            for a in 0..sigma.dim() {
                let n = sigma.shape[a];
                let at = |k: usize| {
                    let mut j = idx.clone();
                    j[a] = k;
                    log(sigma.flat(&j))
                };
                let k = idx[a];
                let d = if n == 1 {
                    log(i).map(|_| 0.0)
                } else if n == 2 {
                    Some((at(1)? - at(0)?) / h)
                } else if k == 0 {
                    Some((-3.0 * at(0)? + 4.0 * at(1)? - at(2)?) / (2.0 * h))
                } else if k == n - 1 {
                    Some((3.0 * at(k)? - 4.0 * at(k - 1)? + at(k - 2)?) / (2.0 * h))
                } else {
                    log(i)?;
                    Some((at(k + 1)? - at(k - 1)?) / (2.0 * h))
                }?;
                xi.push(-0.5 * d);
            }
            Some(xi)
        })
        .collect()
}

/// `t(x) = x − (arctan‖ξ‖/‖ξ‖) ξ`, with the factor taken as 1 for tiny `ξ`.
pub fn transport_map(x: &[f64], xi: &[f64]) -> Vec<f64> {
    let norm = xi.iter().map(|v| v * v).sum::<f64>().sqrt();
    let factor = if norm < SMALL_XI { 1.0 } else { norm.atan() / norm };
    x.iter().zip(xi).map(|(a, b)| a - factor * b).collect()
}

/// `t_# γ / (1 − f)`: maps each loaded node by `t` and divides its `γ`
/// mass by `1 − f` at the image.
///
/// `gamma` holds the node masses of the plan marginal `σ μ_i`.
pub fn transport_map_reconstruct(sigma: &GridDensity, gamma: &[f64], f: &PotentialFunction) -> Result<DiscreteMeasure> {
    if gamma.len() != sigma.len() {
        return Err(HkError::DimensionMismatch { expected: sigma.len(), found: gamma.len() });
    }
    let space = GroundSpace::euclidean(sigma.dim())?;
    let xi = xi_field(sigma);
    let mut atoms = Vec::new();
    for (i, &g) in gamma.iter().enumerate() {
        if g < 0.0 || !g.is_finite() {
            return Err(HkError::NegativeMass(g));
        }
        if g == 0.0 {
            continue;
        }
        let x = sigma.node(i);
        let Some(xi) = &xi[i] else {
            return Err(HkError::Infeasible { point: format!("{x:?}"), residual: sigma.values[i] });
        };
        let t = Point::Coords(transport_map(&x, xi));
        let ft = f.eval(&space, &t)?;
        if !(ft < 1.0) {
            return Err(HkError::Infeasible { point: format!("{t:?}"), residual: ft - 1.0 });
        }
        atoms.push((t, g / (1.0 - ft)));
    }
    DiscreteMeasure::new(space, atoms)
}
