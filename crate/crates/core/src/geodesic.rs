//! Explicit geodesics between two Dirac measures.
//!
//! Between `a₁δ_{x₁}` and `a₂δ_{x₂}` the Hellinger curve
//! `(1−s)²a₁δ_{x₁} + s²a₂δ_{x₂}` is a geodesic once `d(x₁, x₂) ≥ π/2`; at
//! exactly `π/2` a second one moves a single atom of mass
//! `(1−s)²a₁ + s²a₂` along the segment.

use std::f64::consts::{FRAC_PI_2, PI};

use serde::Serialize;

use crate::error::{invalid, Result};
use crate::let_solver::{hk2, SolverOptions};
use crate::measure::DiscreteMeasure;
use crate::space::{GroundSpace, Point};

/// Endpoint distance tolerance of the transport curve.
pub const QUARTER_TURN_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum GeodesicKind {
    Hellinger,
    Transport,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiracGeodesic {
    pub kind: GeodesicKind,
    pub space: GroundSpace,
    pub a1: f64,
    pub x1: Point,
    pub a2: f64,
    pub x2: Point,
}

fn check_s(s: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&s) {
        return invalid(format!("curve parameter {s} is outside [0, 1]"));
    }
    Ok(())
}

fn check_masses(a1: f64, a2: f64) -> Result<()> {
    if !(a1 > 0.0 && a2 > 0.0 && a1.is_finite() && a2.is_finite()) {
        return invalid("endpoint masses must be positive");
    }
    Ok(())
}

/// `(1−s)²a₁δ_{x₁} + s²a₂δ_{x₂}`. When `x₁ = x₂` the atoms coincide and the
/// curve is the pointwise Hellinger interpolation `((1−s)√a₁ + s√a₂)²`.
pub fn hellinger_curve(space: &GroundSpace, a1: f64, x1: &Point, a2: f64, x2: &Point, s: f64) -> Result<DiscreteMeasure> {
    check_s(s)?;
    check_masses(a1, a2)?;
    if space.distance(x1, x2)? == 0.0 {
        let r = (1.0 - s) * a1.sqrt() + s * a2.sqrt();
        return DiscreteMeasure::dirac(space.clone(), x1.clone(), r * r);
    }
    let atoms = vec![(x1.clone(), (1.0 - s).powi(2) * a1), (x2.clone(), s * s * a2)];
    DiscreteMeasure::new(space.clone(), atoms)
}

/// `p(s) = (2/π) arctan(s√a₂ / ((1−s)√a₁))`, with `p(1) = 1`.
pub fn transport_fraction(a1: f64, a2: f64, s: f64) -> f64 {
    if s == 1.0 {
        1.0
    } else {
        2.0 / PI * (s * a2.sqrt() / ((1.0 - s) * a1.sqrt())).atan()
    }
}

/// `a(s) δ_{x(s)}` with `a(s) = (1−s)²a₁ + s²a₂` and
/// `x(s) = (1 − p(s)) x₁ + p(s) x₂`; needs `|x₁ − x₂| = π/2` on a
/// Euclidean space.
pub fn transport_curve(space: &GroundSpace, a1: f64, x1: &Point, a2: f64, x2: &Point, s: f64) -> Result<DiscreteMeasure> {
    check_s(s)?;
    check_masses(a1, a2)?;
    if !matches!(space, GroundSpace::Euclidean { .. }) {
        return invalid("the transport curve is defined on euclidean spaces");
    }
    let d = space.distance(x1, x2)?;
    if (d - FRAC_PI_2).abs() > QUARTER_TURN_TOL {
        return invalid(format!("transport curve needs endpoints at distance pi/2, found {d}"));
    }
    let a = (1.0 - s).powi(2) * a1 + s * s * a2;
    let x = if s == 0.0 {
        x1.clone()
    } else if s == 1.0 {
        x2.clone()
    } else {
        let p = transport_fraction(a1, a2, s);
        let (c1, c2) = (x1.coords().unwrap(), x2.coords().unwrap());
        Point::Coords(c1.iter().zip(c2).map(|(u, v)| (1.0 - p) * u + p * v).collect())
    };
    DiscreteMeasure::dirac(space.clone(), x, a)
}

impl DiracGeodesic {
    pub fn new(kind: GeodesicKind, space: GroundSpace, a1: f64, x1: Point, a2: f64, x2: Point) -> Result<Self> {
        let g = DiracGeodesic { kind, space, a1, x1, a2, x2 };
        g.at(0.0)?;
        Ok(g)
    }

    pub fn at(&self, s: f64) -> Result<DiscreteMeasure> {
        let f = match self.kind {
            GeodesicKind::Hellinger => hellinger_curve,
            GeodesicKind::Transport => transport_curve,
        };
        f(&self.space, self.a1, &self.x1, self.a2, &self.x2, s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GeodesicReport {
    /// `HK` between the endpoints.
    pub length: f64,
    /// Largest `|HK(c(s), c(t)) − |t−s| · length|`, relative to `length`
    /// when it is positive.
    pub max_deviation: f64,
    pub pairs: usize,
}

/// Checks the constant-speed property over all pairs of `samples`.
pub fn verify_geodesic(curve: &DiracGeodesic, samples: &[f64], opts: &SolverOptions) -> Result<GeodesicReport> {
    let measures = samples.iter().map(|&s| curve.at(s)).collect::<Result<Vec<_>>>()?;
    let length = hk2(&curve.at(0.0)?, &curve.at(1.0)?, opts)?.max(0.0).sqrt();
    let mut worst: f64 = 0.0;
    let mut pairs = 0;
    for a in 0..samples.len() {
        for b in a + 1..samples.len() {
            let d = hk2(&measures[a], &measures[b], opts)?.max(0.0).sqrt();
            let want = (samples[b] - samples[a]).abs() * length;
            worst = worst.max((d - want).abs());
            pairs += 1;
        }
    }
    let max_deviation = if length > 0.0 { worst / length } else { worst };
    Ok(GeodesicReport { length, max_deviation, pairs })
}
