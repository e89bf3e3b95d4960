//! Barycenters in the cone and of measures.
//!
//! The pointwise problem `min_η Σ λ_i d_C²(η, η_i)` reduces radially to
//! maximizing `A(x) = Σ λ_i r_i cos(d_π(x, x_i))`: the optimal radius is
//! `max(A, 0)` and the value `Σ λ_i r_i² − max(A, 0)²`.

mod fixed_point;
mod multimarginal;
mod transport_map;

use serde::Serialize;

use crate::error::{invalid, HkError, Result};
use crate::optim::nelder_mead_max;
use crate::space::{cos_pi, ConePoint, GroundSpace, Point};

pub use fixed_point::{barycenter_fixed_point, FixedPointOptions, FixedPointResult};
pub use multimarginal::{
    extract_barycenter, solve_multimarginal, MultimarginalOptions, MultimarginalSolution, TupleAtom,
};
pub use transport_map::{transport_map, transport_map_reconstruct, xi_field, GridDensity};

const TIE_VALUE_TOL: f64 = 1e-9;
const TIE_SEPARATION: f64 = 1e-6;

/// Local search settings for maximizing `A` on Euclidean spaces.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PointSearch {
    pub starts: usize,
    pub max_evals: usize,
}

impl Default for PointSearch {
    fn default() -> Self {
        PointSearch { starts: 16, max_evals: 4000 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConeBarycenterResult {
    pub point: ConePoint,
    pub value: f64,
    pub a_star: f64,
    /// Number of distinct maximizers of `A` found within `1e−9` of the max.
    pub ties: usize,
}

pub(crate) fn check_weights(lambdas: &[f64], p: usize, tol: f64) -> Result<()> {
    if lambdas.len() != p {
        return Err(HkError::DimensionMismatch { expected: p, found: lambdas.len() });
    }
    if lambdas.iter().any(|l| !(*l > 0.0) || !l.is_finite()) {
        return invalid("weights must be positive");
    }
    let s: f64 = lambdas.iter().sum();
    if (s - 1.0).abs() > tol {
        return invalid(format!("weights sum to {s}, not 1"));
    }
    Ok(())
}

/// Maximizer of `Σ w_i c(d(x, x_i))` with `c = cos(· ∧ π)`, or its positive
/// part when `clip` is set, together with the distinct near-maximizers.
pub(crate) fn maximize_cos_sum(
    space: &GroundSpace,
    bases: &[&Point],
    weights: &[f64],
    clip: bool,
    search: &PointSearch,
    extra: &[Point],
) -> (Point, f64, usize) {
    let term = |d: f64| {
        let c = cos_pi(d);
        if clip {
            c.max(0.0)
        } else {
            c
        }
    };
    let value = |x: &Point| -> f64 {
        bases.iter().zip(weights).filter(|(_, w)| **w != 0.0).map(|(b, w)| w * term(space.dist(x, b))).sum()
    };
    let active: Vec<(&Point, f64)> =
        bases.iter().zip(weights).filter(|(_, w)| **w > 0.0).map(|(b, w)| (*b, *w)).collect();
    let fallback = || extra.first().cloned().unwrap_or_else(|| bases[0].clone());
    if active.is_empty() {
        let x = fallback();
        let v = value(&x);
        return (x, v, 1);
    }
    match space {
        GroundSpace::Finite(fm) => {
            let vals: Vec<f64> = (0..fm.len()).map(|i| value(&Point::Index(i))).collect();
            let best = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let arg = vals.iter().position(|v| *v == best).unwrap();
            let ties = vals.iter().filter(|v| **v >= best - TIE_VALUE_TOL).count();
            (Point::Index(arg), best, ties)
        }
        GroundSpace::Sphere { dim } => {
            let mut v = vec![0.0; dim + 1];
            for (b, w) in bases.iter().zip(weights) {
                for (vi, bi) in v.iter_mut().zip(b.coords().unwrap()) {
                    *vi += w * bi;
                }
            }
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm < 1e-15 {
                let x = active[0].0.clone();
                let val = value(&x);
                return (x, val, 2);
            }
            let x = Point::Coords(v.iter().map(|c| c / norm).collect());
            let val = value(&x);
            (x, val, 1)
        }
        GroundSpace::Euclidean { dim } => {
            let dim = *dim;
            let mut lo = vec![f64::INFINITY; dim];
            let mut hi = vec![f64::NEG_INFINITY; dim];
            for (b, _) in &active {
                for (i, c) in b.coords().unwrap().iter().enumerate() {
                    lo[i] = lo[i].min(*c);
                    hi[i] = hi[i].max(*c);
                }
            }
            if active.len() == 1 {
                let x = active[0].0.clone();
                let v = value(&x);
                return (x, v, 1);
            }
            let mut starts: Vec<Vec<f64>> = extra.iter().map(|p| p.coords().unwrap().to_vec()).collect();
            for (b, _) in &active {
                starts.push(b.coords().unwrap().to_vec());
            }
            for a in 0..active.len() {
                for b in a + 1..active.len() {
                    let (x, y) = (active[a].0.coords().unwrap(), active[b].0.coords().unwrap());
                    starts.push(x.iter().zip(y).map(|(p, q)| 0.5 * (p + q)).collect());
                }
            }
            starts.truncate(search.starts.max(1));
            let width = lo.iter().zip(&hi).map(|(l, h)| h - l).fold(0.0, f64::max);
            let step = (0.1 * width).max(1e-3);
            let f = |x: &[f64]| value(&Point::Coords(x.to_vec()));
            let mut found: Vec<(Vec<f64>, f64)> = Vec::new();
            for s in &starts {
                found.push(nelder_mead_max(&f, s, &lo, &hi, step, search.max_evals));
            }
            let best = found.iter().map(|r| r.1).fold(f64::NEG_INFINITY, f64::max);
            let mut distinct: Vec<&Vec<f64>> = Vec::new();
            for (x, v) in &found {
                if *v >= best - TIE_VALUE_TOL
                    && distinct.iter().all(|y| x.iter().zip(y.iter()).any(|(a, b)| (a - b).abs() > TIE_SEPARATION))
                {
                    distinct.push(x);
                }
            }
            let ties = distinct.len();
            let (x, v) = found.into_iter().find(|r| r.1 == best).unwrap();
            (Point::Coords(x), v, ties)
        }
    }
}

/// Minimizer of `Σ λ_i d_C²(η, η_i)` over the cone.
pub fn cone_point_barycenter(
    etas: &[ConePoint],
    lambdas: &[f64],
    space: &GroundSpace,
    search: &PointSearch,
) -> Result<ConeBarycenterResult> {
    if etas.is_empty() {
        return invalid("need at least one cone point");
    }
    check_weights(lambdas, etas.len(), 1e-12)?;
    for e in etas {
        space.validate(&e.base)?;
    }
    let second: f64 = etas.iter().zip(lambdas).map(|(e, l)| l * e.radius * e.radius).sum();
    let bases: Vec<&Point> = etas.iter().map(|e| &e.base).collect();
    let weights: Vec<f64> = etas.iter().zip(lambdas).map(|(e, l)| l * e.radius).collect();
    let (x, a_star, ties) = maximize_cos_sum(space, &bases, &weights, false, search, &[]);
    let r = a_star.max(0.0);
    Ok(ConeBarycenterResult {
        point: ConePoint::new(x, r)?,
        value: (second - r * r).max(0.0),
        a_star,
        ties,
    })
}

/// `c(η) = min_η' Σ λ_i d_C²(η', η_i)`.
pub fn multimarginal_cost(etas: &[ConePoint], lambdas: &[f64], space: &GroundSpace) -> Result<f64> {
    Ok(cone_point_barycenter(etas, lambdas, space, &PointSearch::default())?.value)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI};

    fn cp(x: f64, r: f64) -> ConePoint {
        ConePoint::new(Point::scalar(x), r).unwrap()
    }

    #[test]
    fn single_point_is_its_own_barycenter() {
        let s = GroundSpace::euclidean(1).unwrap();
        let r = cone_point_barycenter(&[cp(0.7, 2.0)], &[1.0], &s, &PointSearch::default()).unwrap();
        assert_eq!(r.point, cp(0.7, 2.0));
        assert!(r.value.abs() < 1e-15);
    }

    #[test]
    fn quarter_turn_pair() {
        let s = GroundSpace::euclidean(1).unwrap();
        let r = cone_point_barycenter(&[cp(0.0, 1.0), cp(FRAC_PI_2, 1.0)], &[0.5, 0.5], &s, &PointSearch::default())
            .unwrap();
        // Dense grid oracle over [−π, π/2 + π].
        let mut best = (0.0, f64::NEG_INFINITY);
        let mut x = -PI;
        while x <= FRAC_PI_2 + PI {
            let a = 0.5 * cos_pi(x.abs()) + 0.5 * cos_pi((FRAC_PI_2 - x).abs());
            if a > best.1 {
                best = (x, a);
            }
            x += 1e-5;
        }
        let xs = r.point.base.coords().unwrap()[0];
        assert!((xs - FRAC_PI_4).abs() < 1e-7 && (best.0 - FRAC_PI_4).abs() < 1e-5);
        assert!((r.point.radius - 0.5f64.sqrt()).abs() < 1e-12);
        assert!((r.value - 0.5).abs() < 1e-12);
        assert!((r.a_star - best.1).abs() < 1e-9);
        assert_eq!(multimarginal_cost(&[cp(0.0, 1.0), cp(FRAC_PI_2, 1.0)], &[0.5, 0.5], &s).unwrap(), r.value);
    }

    #[test]
    fn sphere_uses_weighted_vector_mean() {
        let s = GroundSpace::sphere(2).unwrap();
        let e = |v: [f64; 3], r: f64| ConePoint::new(Point::Coords(v.to_vec()), r).unwrap();
        let etas = [e([1.0, 0.0, 0.0], 2.0), e([0.0, 1.0, 0.0], 1.0), e([0.0, 0.0, 1.0], 0.5)];
        let l = [0.5, 0.3, 0.2];
        let r = cone_point_barycenter(&etas, &l, &s, &PointSearch::default()).unwrap();
        let v: [f64; 3] = [1.0, 0.3, 0.1];
        let norm = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
        assert!((r.point.radius - norm).abs() < 1e-14);
        for (c, vi) in r.point.base.coords().unwrap().iter().zip(v) {
            assert!((c - vi / norm).abs() < 1e-14);
        }
    }

    #[test]
    fn identical_points_cost_nothing_and_scale_quadratically() {
        let s = GroundSpace::euclidean(2).unwrap();
        let p = |x: f64, y: f64, r: f64| ConePoint::new(Point::Coords(vec![x, y]), r).unwrap();
        let same = [p(0.3, 0.1, 1.5), p(0.3, 0.1, 1.5), p(0.3, 0.1, 1.5)];
        assert!(multimarginal_cost(&same, &[0.2, 0.3, 0.5], &s).unwrap().abs() < 1e-12);
        let etas = [p(0.0, 0.0, 1.0), p(0.8, 0.2, 2.0), p(-0.3, 0.9, 0.5)];
        let l = [0.2, 0.3, 0.5];
        let base = cone_point_barycenter(&etas, &l, &s, &PointSearch::default()).unwrap();
        let t = 3.0;
        let scaled: Vec<ConePoint> = etas.iter().map(|e| ConePoint::new(e.base.clone(), t * e.radius).unwrap()).collect();
        let sc = cone_point_barycenter(&scaled, &l, &s, &PointSearch::default()).unwrap();
        assert!((sc.value - t * t * base.value).abs() < 1e-12 * (1.0 + sc.value));
        let (a, b) = (base.point.base.coords().unwrap(), sc.point.base.coords().unwrap());
        assert!((a[0] - b[0]).abs() < 1e-7 && (a[1] - b[1]).abs() < 1e-7);
    }

    #[test]
    fn far_points_destroy_mass() {
        let s = GroundSpace::euclidean(1).unwrap();
        let r = cone_point_barycenter(&[cp(0.0, 1.0), cp(4.0, 1.0)], &[0.5, 0.5], &s, &PointSearch::default()).unwrap();
        // A ≤ 0 everywhere, with A = 0 at either base point.
        assert!(r.a_star.abs() < 1e-12);
        assert!((r.value - 1.0).abs() < 1e-12);
        assert_eq!(r.ties, 2);
        let apex = ConePoint::new(Point::scalar(0.0), 0.0).unwrap();
        let r = cone_point_barycenter(&[apex.clone(), apex], &[0.5, 0.5], &s, &PointSearch::default()).unwrap();
        assert!(r.point.is_apex() && r.value == 0.0);
    }

    #[test]
    fn finite_space_is_exhaustive() {
        let m = vec![vec![0.0, 1.0, 2.0], vec![1.0, 0.0, 1.0], vec![2.0, 1.0, 0.0]];
        let s = GroundSpace::finite(m).unwrap();
        let e = |i, r| ConePoint::new(Point::Index(i), r).unwrap();
        let r = cone_point_barycenter(&[e(0, 1.0), e(2, 1.0)], &[0.5, 0.5], &s, &PointSearch::default()).unwrap();
        assert_eq!(r.point.base, Point::Index(1));
        assert!((r.a_star - 1f64.cos()).abs() < 1e-15);
    }
}
