//! Ground metric spaces, truncated distances, the entropy-transport cost
//! `ℓ` and the Euclidean cone over a ground space.

use std::f64::consts::{FRAC_PI_2, PI};
use std::hash::{Hash, Hasher};
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{invalid, HkError, Result};

/// Finite spaces up to this size have their triangle inequality checked
/// exhaustively; larger ones are checked on a deterministic sample.
pub const EAGER_TRIANGLE_LIMIT: usize = 512;
const SAMPLED_TRIPLES: usize = 200_000;
const METRIC_TOL: f64 = 1e-12;
/// Sphere points must have unit norm within this tolerance.
pub const UNIT_NORM_TOL: f64 = 1e-9;

/// A point of a ground space: coordinates for Euclidean and sphere spaces,
/// an index for finite spaces.
#[derive(Debug, Clone)]
pub enum Point {
    Coords(Vec<f64>),
    Index(usize),
}

impl Point {
    pub fn coords(&self) -> Option<&[f64]> {
        match self {
            Point::Coords(c) => Some(c),
            Point::Index(_) => None,
        }
    }

    pub fn index(&self) -> Option<usize> {
        match self {
            Point::Index(i) => Some(*i),
            Point::Coords(_) => None,
        }
    }

    pub fn scalar(x: f64) -> Self {
        Point::Coords(vec![x])
    }
}

impl PartialEq for Point {
    fn eq(&self, other: &Self) -> bool {
        match (self, other) {
            (Point::Index(a), Point::Index(b)) => a == b,
            (Point::Coords(a), Point::Coords(b)) => {
                a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x == y)
            }
            _ => false,
        }
    }
}

impl Eq for Point {}

impl Hash for Point {
    fn hash<H: Hasher>(&self, state: &mut H) {
        match self {
            Point::Index(i) => {
                0u8.hash(state);
                i.hash(state);
            }
            Point::Coords(c) => {
                1u8.hash(state);
                for x in c {
                    // -0.0 and 0.0 compare equal and must hash equal.
                    let x = if *x == 0.0 { 0.0 } else { *x };
                    x.to_bits().hash(state);
                }
            }
        }
    }
}

impl std::fmt::Display for Point {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Point::Index(i) => write!(f, "#{i}"),
            Point::Coords(c) => {
                write!(f, "(")?;
                for (k, x) in c.iter().enumerate() {
                    if k > 0 {
                        write!(f, ", ")?;
                    }
                    write!(f, "{x}")?;
                }
                write!(f, ")")
            }
        }
    }
}

#[derive(Debug)]
struct FiniteData {
    n: usize,
    d: Vec<f64>,
}

/// Validated symmetric distance matrix with zero diagonal.
#[derive(Debug, Clone)]
pub struct FiniteMetric(Arc<FiniteData>);

impl FiniteMetric {
    pub fn new(matrix: Vec<Vec<f64>>) -> Result<Self> {
        let n = matrix.len();
        if n == 0 {
            return invalid("finite space needs at least one point");
        }
        let mut d = Vec::with_capacity(n * n);
        for (i, row) in matrix.iter().enumerate() {
            if row.len() != n {
                return invalid(format!("distance matrix row {i} has {} entries, expected {n}", row.len()));
            }
            for (j, &v) in row.iter().enumerate() {
                if !v.is_finite() || v < 0.0 {
                    return invalid(format!("distance d[{i}][{j}] = {v} is not a finite nonnegative number"));
                }
            }
            d.extend_from_slice(row);
        }
        for i in 0..n {
            if d[i * n + i] != 0.0 {
                return invalid(format!("distance matrix diagonal entry {i} is nonzero"));
            }
            for j in (i + 1)..n {
                if (d[i * n + j] - d[j * n + i]).abs() > METRIC_TOL * (1.0 + d[i * n + j]) {
                    return invalid(format!("distance matrix is not symmetric at ({i}, {j})"));
                }
            }
        }
        let check = |i: usize, j: usize, k: usize| -> Result<()> {
            let (ij, jk, ik) = (d[i * n + j], d[j * n + k], d[i * n + k]);
            if ik > ij + jk + METRIC_TOL * (1.0 + ik) {
                return invalid(format!(
                    "triangle inequality fails: d({i},{k}) = {ik} > d({i},{j}) + d({j},{k}) = {}",
                    ij + jk
                ));
            }
            Ok(())
        };
        if n <= EAGER_TRIANGLE_LIMIT {
            for i in 0..n {
                for j in 0..n {
                    for k in 0..n {
                        check(i, j, k)?;
                    }
                }
            }
        } else {
            let mut rng = ChaCha8Rng::seed_from_u64(0x7269_616e_676c_65);
            for _ in 0..SAMPLED_TRIPLES {
                check(rng.gen_range(0..n), rng.gen_range(0..n), rng.gen_range(0..n))?;
            }
        }
        Ok(FiniteMetric(Arc::new(FiniteData { n, d })))
    }

    pub fn len(&self) -> usize {
        self.0.n
    }

    pub fn is_empty(&self) -> bool {
        self.0.n == 0
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.0.d[i * self.0.n + j]
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.0.d.chunks(self.0.n).map(|r| r.to_vec()).collect()
    }
}

impl PartialEq for FiniteMetric {
    fn eq(&self, other: &Self) -> bool {
        Arc::ptr_eq(&self.0, &other.0) || (self.0.n == other.0.n && self.0.d == other.0.d)
    }
}

/// The ground metric space `(X, d)`.
#[derive(Debug, Clone, PartialEq)]
pub enum GroundSpace {
    /// `R^dim` with the Euclidean distance.
    Euclidean { dim: usize },
    /// The unit sphere `S^dim ⊂ R^(dim+1)` with the angular (geodesic) metric.
    Sphere { dim: usize },
    /// A finite metric space given by its distance matrix.
    Finite(FiniteMetric),
}

impl GroundSpace {
    pub fn euclidean(dim: usize) -> Result<Self> {
        if dim == 0 {
            return invalid("euclidean dimension must be positive");
        }
        Ok(GroundSpace::Euclidean { dim })
    }

    pub fn sphere(dim: usize) -> Result<Self> {
        if dim == 0 {
            return invalid("sphere dimension must be positive");
        }
        Ok(GroundSpace::Sphere { dim })
    }

    pub fn finite(matrix: Vec<Vec<f64>>) -> Result<Self> {
        Ok(GroundSpace::Finite(FiniteMetric::new(matrix)?))
    }

    /// Number of coordinates of a point (`None` for finite spaces).
    pub fn ambient_dim(&self) -> Option<usize> {
        match self {
            GroundSpace::Euclidean { dim } => Some(*dim),
            GroundSpace::Sphere { dim } => Some(dim + 1),
            GroundSpace::Finite(_) => None,
        }
    }

    pub fn validate(&self, p: &Point) -> Result<()> {
        match (self, p) {
            (GroundSpace::Finite(m), Point::Index(i)) => {
                if *i >= m.len() {
                    return Err(HkError::IndexOutOfRange { index: *i, size: m.len() });
                }
                Ok(())
            }
            (GroundSpace::Finite(_), Point::Coords(_)) => {
                invalid("finite spaces take point indices, not coordinates")
            }
            (_, Point::Index(_)) => invalid("continuous spaces take coordinates, not indices"),
            (space, Point::Coords(c)) => {
                let n = space.ambient_dim().unwrap();
                if c.len() != n {
                    return Err(HkError::DimensionMismatch { expected: n, found: c.len() });
                }
                if c.iter().any(|x| !x.is_finite()) {
                    return invalid(format!("point {p} has non-finite coordinates"));
                }
                if let GroundSpace::Sphere { .. } = space {
                    let norm = c.iter().map(|x| x * x).sum::<f64>().sqrt();
                    if (norm - 1.0).abs() > UNIT_NORM_TOL {
                        return invalid(format!("sphere point {p} has norm {norm}, expected 1"));
                    }
                }
                Ok(())
            }
        }
    }

    /// Distance between validated points.
    #[inline]
    pub fn dist(&self, x: &Point, y: &Point) -> f64 {
        match (self, x, y) {
            (GroundSpace::Finite(m), Point::Index(i), Point::Index(j)) => m.get(*i, *j),
            (GroundSpace::Euclidean { .. }, Point::Coords(a), Point::Coords(b)) => euclid(a, b),
            (GroundSpace::Sphere { .. }, Point::Coords(a), Point::Coords(b)) => angle(a, b),
            _ => panic!("point kind does not match the ground space"),
        }
    }

    /// Distance with input validation.
    pub fn distance(&self, x: &Point, y: &Point) -> Result<f64> {
        self.validate(x)?;
        self.validate(y)?;
        Ok(self.dist(x, y))
    }
}

#[inline]
pub(crate) fn euclid(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Angle between unit vectors, accurate near 0 and π.
#[inline]
pub(crate) fn angle(a: &[f64], b: &[f64]) -> f64 {
    let (mut minus, mut plus) = (0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        minus += (x - y) * (x - y);
        plus += (x + y) * (x + y);
    }
    2.0 * minus.sqrt().atan2(plus.sqrt())
}

/// `d ∧ a` between two points of `space`.
pub fn truncated_distance(space: &GroundSpace, x: &Point, y: &Point, a: f64) -> Result<f64> {
    if a.is_nan() || a < 0.0 {
        return invalid(format!("truncation level must be nonnegative, got {a}"));
    }
    Ok(space.distance(x, y)?.min(a))
}

/// `ℓ(t) = log(1 + tan²(t ∧ π/2))`, `+∞` from `π/2` on.
pub fn ell_cost(t: f64) -> f64 {
    if t >= FRAC_PI_2 {
        return f64::INFINITY;
    }
    let c = t.max(0.0).cos();
    -2.0 * c.ln()
}

/// `cos²(d ∧ π/2)`, the multiplicative form of `e^{-ℓ(d)}`.
#[inline]
pub fn cos2_half_pi(d: f64) -> f64 {
    if d >= FRAC_PI_2 {
        0.0
    } else {
        let c = d.cos();
        c * c
    }
}

/// `cos(d ∧ π)`, the angular factor of the cone metric.
#[inline]
pub fn cos_pi(d: f64) -> f64 {
    if d >= PI {
        -1.0
    } else {
        d.cos()
    }
}

/// A point `[x, r]` of the cone; every zero-radius point is the apex.
#[derive(Debug, Clone)]
pub struct ConePoint {
    pub base: Point,
    pub radius: f64,
}

impl ConePoint {
    pub fn new(base: Point, radius: f64) -> Result<Self> {
        if !(radius >= 0.0) || !radius.is_finite() {
            return invalid(format!("cone radius must be finite and nonnegative, got {radius}"));
        }
        Ok(ConePoint { base, radius })
    }

    pub fn is_apex(&self) -> bool {
        self.radius == 0.0
    }
}

impl PartialEq for ConePoint {
    fn eq(&self, other: &Self) -> bool {
        match (self.is_apex(), other.is_apex()) {
            (true, true) => true,
            (false, false) => self.radius == other.radius && self.base == other.base,
            _ => false,
        }
    }
}

impl Eq for ConePoint {}

impl Hash for ConePoint {
    fn hash<H: Hasher>(&self, state: &mut H) {
        if self.is_apex() {
            0u8.hash(state);
        } else {
            1u8.hash(state);
            self.base.hash(state);
            self.radius.to_bits().hash(state);
        }
    }
}

/// `d_C([x1, r1], [x2, r2])` with `d_C² = r1² + r2² − 2 r1 r2 cos(d ∧ π)`.
pub fn cone_distance(space: &GroundSpace, p: &ConePoint, q: &ConePoint) -> Result<f64> {
    if p.is_apex() || q.is_apex() {
        return Ok(p.radius.max(q.radius));
    }
    let d = space.distance(&p.base, &q.base)?;
    Ok(cone_distance_sq_raw(p.radius, q.radius, d).sqrt())
}

#[inline]
pub(crate) fn cone_distance_sq_raw(r1: f64, r2: f64, d: f64) -> f64 {
    (r1 * r1 + r2 * r2 - 2.0 * r1 * r2 * cos_pi(d)).max(0.0)
}

/// Closed ball `B'_x(s) = { y : d(x, y) ≤ s }`.
#[derive(Debug, Clone)]
pub struct ClosedBall {
    pub center: Point,
    pub radius: f64,
}

impl ClosedBall {
    pub fn new(center: Point, radius: f64) -> Result<Self> {
        if !(radius >= 0.0) {
            return invalid(format!("ball radius must be nonnegative, got {radius}"));
        }
        Ok(ClosedBall { center, radius })
    }

    pub fn contains(&self, space: &GroundSpace, y: &Point) -> bool {
        space.dist(&self.center, y) <= self.radius
    }
}
