//! S-transforms, c-transforms and the dual barycenter objective.
//!
//! On continuous spaces the infima are taken over an explicit finite
//! candidate set, see [`candidate_grid`].

use std::collections::HashMap;
use std::f64::consts::{FRAC_PI_2, FRAC_PI_8, PI};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr_free::standard_normal;
use serde::Serialize;

use crate::error::{invalid, HkError, Result};
use crate::let_solver::{SolverOptions, TransportPlan};
use crate::measure::DiscreteMeasure;
use crate::space::{cos2_half_pi, ell_cost, GroundSpace, Point};

/// Tolerance on `Σ λ_i = 1`.
pub const WEIGHT_SUM_TOL: f64 = 1e-12;
/// Tolerance on the pointwise constraint `Σ λ_i f_i = 0`.
pub const CONSTRAINT_TOL: f64 = 1e-9;
/// Default number of grid candidates on continuous spaces.
pub const DEFAULT_GRID_POINTS: usize = 512;

/// A real function on the ground space, stored either as a table over a
/// finite support (queries off the support use the nearest support point)
/// or as a continuous piecewise-linear function of one variable.
///
/// The same type holds log-domain potentials `φ = −log(1 − f)`, where the
/// value `+∞` stands for `f = 1`.
#[derive(Debug, Clone, PartialEq)]
pub enum PotentialFunction {
    Table {
        space: GroundSpace,
        points: Vec<Point>,
        values: Vec<f64>,
        index: HashMap<Point, usize>,
    },
    Piecewise1d {
        breakpoints: Vec<f64>,
        values: Vec<f64>,
        /// Slopes to the left of the first and right of the last breakpoint.
        outer_slopes: (f64, f64),
    },
}

impl PotentialFunction {
    pub fn table(space: GroundSpace, points: Vec<Point>, values: Vec<f64>) -> Result<Self> {
        if points.len() != values.len() {
            return Err(HkError::DimensionMismatch { expected: points.len(), found: values.len() });
        }
        if points.is_empty() {
            return invalid("potential table needs at least one point");
        }
        if values.iter().any(|v| v.is_nan() || *v == f64::NEG_INFINITY) {
            return invalid("potential values must be numbers below +inf");
        }
        let mut index = HashMap::with_capacity(points.len());
        for (i, p) in points.iter().enumerate() {
            space.validate(p)?;
            if index.insert(p.clone(), i).is_some() {
                return invalid(format!("duplicate potential support point {p}"));
            }
        }
        Ok(PotentialFunction::Table { space, points, values, index })
    }

    pub fn constant(space: &GroundSpace, points: Vec<Point>, c: f64) -> Result<Self> {
        let n = points.len();
        Self::table(space.clone(), points, vec![c; n])
    }

    pub fn piecewise1d(breakpoints: Vec<f64>, values: Vec<f64>, outer_slopes: (f64, f64)) -> Result<Self> {
        if breakpoints.len() != values.len() {
            return Err(HkError::DimensionMismatch { expected: breakpoints.len(), found: values.len() });
        }
        if breakpoints.is_empty() {
            return invalid("piecewise potential needs at least one breakpoint");
        }
        if breakpoints.windows(2).any(|w| !(w[0] < w[1])) {
            return invalid("breakpoints must be strictly increasing");
        }
        if breakpoints.iter().chain(&values).any(|v| !v.is_finite())
            || !outer_slopes.0.is_finite()
            || !outer_slopes.1.is_finite()
        {
            return invalid("piecewise potential parameters must be finite");
        }
        Ok(PotentialFunction::Piecewise1d { breakpoints, values, outer_slopes })
    }

    /// The potential `−1` left of `−π/2`, `+1` right of `π/2`, linear between.
    pub fn ramp() -> Self {
        Self::piecewise1d(vec![-FRAC_PI_2, FRAC_PI_2], vec![-1.0, 1.0], (0.0, 0.0)).unwrap()
    }

    pub fn eval(&self, space: &GroundSpace, y: &Point) -> Result<f64> {
        match self {
            PotentialFunction::Table { space: own, points, values, index } => {
                if own != space {
                    return Err(HkError::SpaceMismatch);
                }
                space.validate(y)?;
                if let Some(&i) = index.get(y) {
                    return Ok(values[i]);
                }
                let mut best = (f64::INFINITY, 0);
                for (i, p) in points.iter().enumerate() {
                    let d = space.dist(p, y);
                    if d < best.0 {
                        best = (d, i);
                    }
                }
                Ok(values[best.1])
            }
            PotentialFunction::Piecewise1d { .. } => {
                if !matches!(space, GroundSpace::Euclidean { dim: 1 }) {
                    return invalid("piecewise potentials live on euclidean(1)");
                }
                space.validate(y)?;
                Ok(self.eval_scalar(y.coords().unwrap()[0]))
            }
        }
    }

    fn eval_scalar(&self, t: f64) -> f64 {
        let PotentialFunction::Piecewise1d { breakpoints: b, values: v, outer_slopes } = self else {
            unreachable!()
        };
        let last = b.len() - 1;
        if t <= b[0] {
            return v[0] + outer_slopes.0 * (t - b[0]);
        }
        if t >= b[last] {
            return v[last] + outer_slopes.1 * (t - b[last]);
        }
        let k = b.partition_point(|&x| x <= t) - 1;
        let w = (t - b[k]) / (b[k + 1] - b[k]);
        v[k] + w * (v[k + 1] - v[k])
    }

    /// Supremum over the whole ground space.
    pub fn sup(&self) -> f64 {
        match self {
            PotentialFunction::Table { values, .. } => values.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
            PotentialFunction::Piecewise1d { values, outer_slopes, .. } => {
                if outer_slopes.0 < 0.0 || outer_slopes.1 > 0.0 {
                    f64::INFINITY
                } else {
                    values.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
                }
            }
        }
    }

    /// `c · f`.
    pub fn scaled(&self, c: f64) -> Self {
        self.map(|v| c * v)
    }

    /// Pointwise image under `h`; piecewise potentials require `h` affine.
    fn map(&self, h: impl Fn(f64) -> f64) -> Self {
        match self {
            PotentialFunction::Table { space, points, values, index } => PotentialFunction::Table {
                space: space.clone(),
                points: points.clone(),
                values: values.iter().map(|v| h(*v)).collect(),
                index: index.clone(),
            },
            PotentialFunction::Piecewise1d { breakpoints, values, outer_slopes } => {
                let h0 = h(0.0);
                let slope = |s: f64| h(s) - h0;
                PotentialFunction::Piecewise1d {
                    breakpoints: breakpoints.clone(),
                    values: values.iter().map(|v| h(*v)).collect(),
                    outer_slopes: (slope(outer_slopes.0), slope(outer_slopes.1)),
                }
            }
        }
    }

    /// Log-domain companion `φ = −log(1 − f)` tabulated on `points`.
    pub fn to_log(&self, space: &GroundSpace, points: &[Point]) -> Result<Self> {
        let values = points
            .iter()
            .map(|p| {
                let f = self.eval(space, p)?;
                if f > 1.0 {
                    return invalid(format!("potential exceeds 1 at {p}"));
                }
                Ok(-(-f).ln_1p())
            })
            .collect::<Result<Vec<_>>>()?;
        Self::table(space.clone(), points.to_vec(), values)
    }

    /// Inverse of [`PotentialFunction::to_log`] for tables.
    pub fn from_log(&self) -> Result<Self> {
        match self {
            PotentialFunction::Table { .. } => Ok(self.map(|phi| -(-phi).exp_m1())),
            PotentialFunction::Piecewise1d { .. } => invalid("log-domain potentials are tables"),
        }
    }

    pub fn points(&self) -> Option<&[Point]> {
        match self {
            PotentialFunction::Table { points, .. } => Some(points),
            PotentialFunction::Piecewise1d { .. } => None,
        }
    }

    pub fn values(&self) -> &[f64] {
        match self {
            PotentialFunction::Table { values, .. } | PotentialFunction::Piecewise1d { values, .. } => values,
        }
    }

    /// Distance from `y` to the closed set `{f ≥ 1}`, `+∞` when it is empty.
    fn distance_to_top(&self, space: &GroundSpace, y: &Point) -> f64 {
        match self {
            PotentialFunction::Table { points, values, .. } => points
                .iter()
                .zip(values)
                .filter(|(_, v)| **v >= 1.0)
                .map(|(p, _)| space.dist(p, y))
                .fold(f64::INFINITY, f64::min),
            PotentialFunction::Piecewise1d { .. } => {
                let t = y.coords().unwrap()[0];
                self.top_intervals().iter().map(|&(lo, hi)| (lo - t).max(t - hi).max(0.0)).fold(f64::INFINITY, f64::min)
            }
        }
    }

    /// `{f ≥ 1}` of a piecewise potential as closed intervals.
    fn top_intervals(&self) -> Vec<(f64, f64)> {
        let PotentialFunction::Piecewise1d { breakpoints: b, values: v, outer_slopes } = self else {
            return Vec::new();
        };
        let mut out = Vec::new();
        // Linear piece through (x0, y0) with slope s on [lo, hi].
        let mut piece = |lo: f64, hi: f64, x0: f64, y0: f64, s: f64| {
            if s == 0.0 {
                if y0 >= 1.0 {
                    out.push((lo, hi));
                }
                return;
            }
            let cross = x0 + (1.0 - y0) / s;
            let (a, c) = if s > 0.0 { (cross.max(lo), hi) } else { (lo, cross.min(hi)) };
            if a <= c {
                out.push((a, c));
            }
        };
        let last = b.len() - 1;
        piece(f64::NEG_INFINITY, b[0], b[0], v[0], outer_slopes.0);
        for k in 0..last {
            piece(b[k], b[k + 1], b[k], v[k], (v[k + 1] - v[k]) / (b[k + 1] - b[k]));
        }
        piece(b[last], f64::INFINITY, b[last], v[last], outer_slopes.1);
        out
    }
}

fn check_candidates(candidates: &[Point]) -> Result<()> {
    if candidates.is_empty() {
        return invalid("candidate set is empty");
    }
    Ok(())
}

/// `Sf(y) = inf_x {1 − cos²(d(x, y) ∧ π/2) / (1 − f(x))}` over the candidates
/// with `f(x) < 1`, or `−∞` when a candidate with `f(x) = 1` lies within
/// distance `π/2` of `y`. Always at most 1.
pub fn s_transform(f: &PotentialFunction, space: &GroundSpace, y: &Point, candidates: &[Point]) -> Result<f64> {
    check_candidates(candidates)?;
    space.validate(y)?;
    let mut inf: f64 = 1.0;
    for x in candidates {
        let fx = f.eval(space, x)?;
        let d = space.dist(x, y);
        if fx > 1.0 {
            return invalid(format!("potential exceeds 1 at {x}"));
        }
        if fx == 1.0 {
            if d < FRAC_PI_2 {
                return Ok(f64::NEG_INFINITY);
            }
            continue;
        }
        inf = inf.min(1.0 - cos2_half_pi(d) / (1.0 - fx));
    }
    Ok(inf)
}

/// `S_λ f(y) = inf_x {λ − λ² cos²(d(x, y) ∧ π/2) / (λ − f(x))}`.
pub fn s_lambda_transform(
    f: &PotentialFunction,
    lambda: f64,
    space: &GroundSpace,
    y: &Point,
    candidates: &[Point],
) -> Result<f64> {
    if !(lambda > 0.0 && lambda <= 1.0) {
        return invalid(format!("weight {lambda} outside (0, 1]"));
    }
    check_candidates(candidates)?;
    space.validate(y)?;
    let mut inf: f64 = lambda;
    for x in candidates {
        let fx = f.eval(space, x)?;
        if fx >= lambda {
            return Err(HkError::Infeasible { point: x.to_string(), residual: fx - lambda });
        }
        let c2 = cos2_half_pi(space.dist(x, y));
        inf = inf.min(lambda - lambda * lambda * c2 / (lambda - fx));
    }
    Ok(inf)
}

/// `φ^c(y) = inf_x {ℓ(d(x, y)) − φ(x)}` with `ℓ = −log cos²(d ∧ π/2)`.
///
/// Candidates at distance `≥ π/2` never contribute, and `φ(x) = +∞` at a
/// closer candidate gives `−∞`.
pub fn c_transform(phi: &PotentialFunction, space: &GroundSpace, y: &Point, candidates: &[Point]) -> Result<f64> {
    check_candidates(candidates)?;
    space.validate(y)?;
    let mut inf = f64::INFINITY;
    for x in candidates {
        let c = ell_cost(space.dist(x, y));
        if c.is_infinite() {
            continue;
        }
        let p = phi.eval(space, x)?;
        if p == f64::INFINITY {
            return Ok(f64::NEG_INFINITY);
        }
        inf = inf.min(c - p);
    }
    Ok(inf)
}

/// [`c_transform`] tabulated on `queries`. Infinite values are kept.
pub fn c_transform_table(
    phi: &PotentialFunction,
    space: &GroundSpace,
    queries: &[Point],
    candidates: &[Point],
) -> Result<Vec<f64>> {
    queries.iter().map(|y| c_transform(phi, space, y, candidates)).collect()
}

/// [`s_transform`] tabulated on `queries`.
pub fn s_transform_table(
    f: &PotentialFunction,
    space: &GroundSpace,
    queries: &[Point],
    candidates: &[Point],
) -> Result<Vec<f64>> {
    queries.iter().map(|y| s_transform(f, space, y, candidates)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FiCheck {
    pub ok: bool,
    pub sup: f64,
    /// Atoms of the measure that sit within `π/8` of `{f = 1}`.
    pub violations: Vec<String>,
}

/// Membership in `F_i`: `sup f ≤ 1`, and `μ_i` puts no mass in the closed
/// `π/8`-ball around any point where `f = 1`.
pub fn check_fi(f: &PotentialFunction, mu: &DiscreteMeasure) -> Result<FiCheck> {
    let space = mu.space();
    let sup = f.sup();
    let mut violations = Vec::new();
    if sup > 1.0 {
        violations.push(format!("sup f = {sup} exceeds 1"));
    }
    for atom in mu.atoms() {
        if f.distance_to_top(space, &atom.point) <= FRAC_PI_8 {
            violations.push(format!("atom {} lies within pi/8 of {{f = 1}}", atom.point));
        }
    }
    Ok(FiCheck { ok: violations.is_empty(), sup, violations })
}

fn check_weights(lambdas: &[f64], p: usize) -> Result<()> {
    if lambdas.len() != p {
        return Err(HkError::DimensionMismatch { expected: p, found: lambdas.len() });
    }
    if lambdas.iter().any(|l| !(*l > 0.0) || !l.is_finite()) {
        return invalid("weights must be positive");
    }
    let s: f64 = lambdas.iter().sum();
    if (s - 1.0).abs() > WEIGHT_SUM_TOL {
        return invalid(format!("weights sum to {s}, not 1"));
    }
    Ok(())
}

fn union_points(measures: &[&DiscreteMeasure], extra: &[Point]) -> Vec<Point> {
    let mut seen = std::collections::HashSet::new();
    let mut out = Vec::new();
    for p in measures.iter().flat_map(|m| m.points()).chain(extra.iter().cloned()) {
        if seen.insert(p.clone()) {
            out.push(p);
        }
    }
    out
}

/// `Σ_i λ_i ∫ S f_i dμ_i` after checking `Σ λ_i = 1`, `f_i ∈ F_i` and
/// `Σ λ_i f_i = 0` on the union of the supports and candidates.
///
/// The supports of the `μ_i` are added to the candidate set. Any atom with
/// `S f_i = −∞` makes the value `−∞`.
pub fn dual_objective(
    fs: &[PotentialFunction],
    mus: &[DiscreteMeasure],
    lambdas: &[f64],
    candidates: &[Point],
) -> Result<f64> {
    let p = mus.len();
    if fs.len() != p {
        return Err(HkError::DimensionMismatch { expected: p, found: fs.len() });
    }
    if p == 0 {
        return invalid("need at least one measure");
    }
    check_weights(lambdas, p)?;
    let space = mus[0].space();
    if mus.iter().any(|m| m.space() != space) {
        return Err(HkError::SpaceMismatch);
    }
    let refs: Vec<&DiscreteMeasure> = mus.iter().collect();
    let cands = union_points(&refs, candidates);
    for x in &cands {
        let mut r = 0.0;
        for (f, l) in fs.iter().zip(lambdas) {
            r += l * f.eval(space, x)?;
        }
        if r.abs() > CONSTRAINT_TOL || r.is_nan() {
            return Err(HkError::Infeasible { point: x.to_string(), residual: r });
        }
    }
    for (i, (f, mu)) in fs.iter().zip(mus).enumerate() {
        let c = check_fi(f, mu)?;
        if !c.ok {
            return Err(HkError::Infeasible { point: format!("f_{}: {}", i + 1, c.violations.join("; ")), residual: c.sup });
        }
    }
    let mut value = 0.0;
    for ((f, mu), l) in fs.iter().zip(mus).zip(lambdas) {
        let mut part = 0.0;
        for atom in mu.atoms() {
            let s = s_transform(f, space, &atom.point, &cands)?;
            if s == f64::NEG_INFINITY {
                return Ok(f64::NEG_INFINITY);
            }
            part += atom.mass * s;
        }
        value += l * part;
    }
    Ok(value)
}

/// `J(μ) = Σ λ_i HK²(μ, μ_i)`; non-converged solves contribute their best
/// primal value, which is still an upper bound.
pub fn barycenter_objective(
    mu: &DiscreteMeasure,
    mus: &[DiscreteMeasure],
    lambdas: &[f64],
    opts: &SolverOptions,
) -> Result<f64> {
    if lambdas.len() != mus.len() {
        return Err(HkError::DimensionMismatch { expected: mus.len(), found: lambdas.len() });
    }
    let mut total = 0.0;
    for (m, l) in mus.iter().zip(lambdas) {
        total += l * crate::let_solver::hk2(mu, m, opts)?;
    }
    Ok(total)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DualityGap {
    pub primal: f64,
    pub dual: f64,
    pub gap: f64,
}

impl DualityGap {
    /// Weak duality holds within `tol`.
    pub fn consistent(&self, tol: f64) -> bool {
        self.gap >= -tol
    }

    /// The pair is jointly optimal within `tol`.
    pub fn certifies(&self, tol: f64) -> bool {
        self.gap.abs() <= tol
    }
}

/// `J(μ) − Σ λ_i ∫ S f_i dμ_i` for a candidate barycenter `μ`. The support
/// of `μ` joins the candidate set, which keeps the discrete transform an
/// upper bound-preserving surrogate of the continuous one.
pub fn weak_duality_certificate(
    fs: &[PotentialFunction],
    mus: &[DiscreteMeasure],
    lambdas: &[f64],
    mu: &DiscreteMeasure,
    candidates: &[Point],
    opts: &SolverOptions,
) -> Result<DualityGap> {
    let cands = union_points(&[mu], candidates);
    let dual = dual_objective(fs, mus, lambdas, &cands)?;
    let primal = barycenter_objective(mu, mus, lambdas, opts)?;
    Ok(DualityGap { primal, dual, gap: primal - dual })
}

/// Potentials `f = 1 − σ₁` on the first support and `1 − σ₂` on the second,
/// read off a LET plan.
pub fn potentials_from_plan(
    plan: &TransportPlan,
    mu1: &DiscreteMeasure,
    mu2: &DiscreteMeasure,
) -> Result<(PotentialFunction, PotentialFunction)> {
    let f1 = PotentialFunction::table(mu1.space().clone(), mu1.points(), plan.sigma1.iter().map(|s| 1.0 - s).collect())?;
    let f2 = PotentialFunction::table(mu2.space().clone(), mu2.points(), plan.sigma2.iter().map(|s| 1.0 - s).collect())?;
    Ok((f1, f2))
}

/// Candidate options for continuous spaces.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridOptions {
    /// Points per axis; by default about [`DEFAULT_GRID_POINTS`] in total.
    pub per_axis: Option<usize>,
    /// Padding of the supports' bounding box.
    pub pad: f64,
    pub seed: u64,
}

impl Default for GridOptions {
    fn default() -> Self {
        GridOptions { per_axis: None, pad: FRAC_PI_2, seed: 42 }
    }
}

/// Candidate set: the union of the supports plus a grid.
///
/// Euclidean spaces get a uniform grid over the padded bounding box, the
/// 2-sphere a Fibonacci lattice, the circle equispaced angles and other
/// spheres a seeded uniform sample. Finite spaces use every point.
pub fn candidate_grid(space: &GroundSpace, measures: &[&DiscreteMeasure], opts: &GridOptions) -> Result<Vec<Point>> {
    if measures.iter().any(|m| m.space() != space) {
        return Err(HkError::SpaceMismatch);
    }
    if !(opts.pad >= 0.0) {
        return invalid("grid padding must be nonnegative");
    }
    let grid: Vec<Point> = match space {
        GroundSpace::Finite(fm) => (0..fm.len()).map(Point::Index).collect(),
        GroundSpace::Euclidean { dim } => {
            let dim = *dim;
            let n = opts.per_axis.unwrap_or_else(|| per_axis_default(dim)).max(1);
            let mut lo = vec![f64::INFINITY; dim];
            let mut hi = vec![f64::NEG_INFINITY; dim];
            for m in measures {
                for a in m.atoms() {
                    for (i, c) in a.point.coords().unwrap().iter().enumerate() {
                        lo[i] = lo[i].min(*c);
                        hi[i] = hi[i].max(*c);
                    }
                }
            }
            if lo[0].is_infinite() {
                lo = vec![0.0; dim];
                hi = vec![0.0; dim];
            }
            let axes: Vec<Vec<f64>> = (0..dim).map(|i| linspace(lo[i] - opts.pad, hi[i] + opts.pad, n)).collect();
            let total = n.checked_pow(dim as u32).ok_or_else(|| HkError::InvalidInput("grid too large".into()))?;
            (0..total)
                .map(|mut idx| {
                    let mut c = vec![0.0; dim];
                    for (i, axis) in axes.iter().enumerate() {
                        c[i] = axis[idx % n];
                        idx /= n;
                    }
                    Point::Coords(c)
                })
                .collect()
        }
        GroundSpace::Sphere { dim } => {
            let n = opts.per_axis.map(|k| k.pow(*dim as u32)).unwrap_or(DEFAULT_GRID_POINTS).max(1);
            sphere_points(*dim, n, opts.seed)
        }
    };
    Ok(union_points(measures, &grid))
}

fn per_axis_default(dim: usize) -> usize {
    ((DEFAULT_GRID_POINTS as f64).powf(1.0 / dim as f64).round() as usize).max(2)
}

fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 || hi == lo {
        return vec![0.5 * (lo + hi); if hi == lo { 1 } else { n }];
    }
    (0..n).map(|k| lo + (hi - lo) * k as f64 / (n - 1) as f64).collect()
}

fn sphere_points(dim: usize, n: usize, seed: u64) -> Vec<Point> {
    match dim {
        1 => (0..n)
            .map(|k| {
                let t = 2.0 * PI * k as f64 / n as f64;
                Point::Coords(vec![t.cos(), t.sin()])
            })
            .collect(),
        2 => {
            let golden = PI * (3.0 - 5f64.sqrt());
            (0..n)
                .map(|k| {
                    let z = 1.0 - (2.0 * k as f64 + 1.0) / n as f64;
                    let r = (1.0 - z * z).sqrt();
                    let t = golden * k as f64;
                    Point::Coords(vec![r * t.cos(), r * t.sin(), z])
                })
                .collect()
        }
        _ => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..n)
                .map(|_| {
                    let v: Vec<f64> = (0..=dim).map(|_| standard_normal(&mut rng)).collect();
                    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
                    Point::Coords(v.into_iter().map(|x| x / norm).collect())
                })
                .collect()
        }
    }
}

mod rand_distr_free {
    use rand::Rng;

    /// Box-Muller draw.
    pub fn standard_normal(rng: &mut impl Rng) -> f64 {
        let u: f64 = 1.0 - rng.gen::<f64>();
        let v: f64 = rng.gen();
        (-2.0 * u.ln()).sqrt() * (2.0 * std::f64::consts::PI * v).cos()
    }
}
