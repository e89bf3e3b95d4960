//! The homogeneous multimarginal problem on discrete supports.
//!
//! A cone measure is parametrized by atoms indexed by an index tuple
//! `(k₁, …, k_p)` and a location `x`; slot `i` of an atom carries the
//! homogeneous mass `q_i` at `x_{i,k_i}`. After the radial reduction the
//! atom's cost is `Σ λ_i q_i − B(x; q)⁺²` with
//! `B(x; q) = Σ λ_i √q_i cos(d_π(x, x_{i,k_i}))`. Clipping the cosines at
//! zero does not change the optimal value and makes `q ↦ B²` concave, so
//! for fixed locations the problem is a concave maximization over a product
//! of simplices (one per atom of each `μ_i`).
//!
//! It is solved by exact block-coordinate ascent over those simplices,
//! alternated with location updates and with column generation driven by
//! the block multipliers: an absent atom at `x` can improve the objective
//! iff `Σ_i max_k λ_i² cos⁺²(d(x, x_{i,k})) / ν_{i,k} > 1`.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use super::{check_weights, maximize_cos_sum, PointSearch};
use crate::error::{invalid, HkError, Result};
use crate::measure::DiscreteMeasure;
use crate::optim::nelder_mead_max;
use crate::space::{cos_pi, GroundSpace, Point};

const PRICING_TOL: f64 = 1e-9;
const TIGHT_TOL: f64 = 1e-6;
const MAX_NEW_COLUMNS: usize = 64;
const SEED_FRACTION: f64 = 0.1;
const SNAP_DISTANCE: f64 = 1e-7;
const ROUND_TOL: f64 = 1e-13;
/// Loads below this fraction of their block mass are folded away at the end.
const DUST: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MultimarginalOptions {
    /// Upper bound on the product of the support sizes.
    pub tuple_budget: usize,
    pub random_starts: usize,
    pub seed: u64,
    /// Block-coordinate sweeps per location/pricing round.
    pub max_sweeps: usize,
    /// Location/pricing rounds per start.
    pub max_rounds: usize,
    /// Relative objective change that ends a sweep phase.
    pub tolerance: f64,
    pub search: PointSearch,
}

impl Default for MultimarginalOptions {
    fn default() -> Self {
        MultimarginalOptions {
            tuple_budget: 100_000,
            random_starts: 8,
            seed: 42,
            max_sweeps: 500,
            max_rounds: 60,
            tolerance: 1e-14,
            search: PointSearch::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TupleAtom {
    /// Atom index per marginal, `None` where the slot is the apex.
    pub indices: Vec<Option<usize>>,
    pub q: Vec<f64>,
    pub point: Point,
    /// `max(B(x*; q), 0)`, the barycenter radius at unit atom mass.
    pub radius: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MultimarginalSolution {
    pub space: GroundSpace,
    pub lambdas: Vec<f64>,
    pub tuples: Vec<TupleAtom>,
    /// `Σ λ_i μ_i(X) − Σ max(B, 0)²`.
    pub objective: f64,
    /// Per slot, the largest `|Σ q − mass|` over the atoms of `μ_i`.
    pub residuals: Vec<f64>,
    /// `Σ λ_i μ_i(X) − Σ ν_{i,k} μ_i(x_{i,k})`, a lower bound on the optimum
    /// whenever `pricing_max ≤ 1`.
    pub dual_bound: f64,
    /// Block multipliers `ν_{i,k}` of the marginal constraints.
    pub multipliers: Vec<Vec<f64>>,
    /// Largest pricing value seen at the tested locations.
    pub pricing_max: f64,
    /// Several distinct maximizing locations share slots of one tuple.
    pub ties: bool,
    /// The round budget ran out while the solution was still moving.
    pub stalled: bool,
    pub sweeps: usize,
}

#[derive(Clone)]
struct Col {
    tuple: Vec<usize>,
    x: Point,
    w: Vec<f64>,
    s: Vec<f64>,
    b: f64,
}

#[derive(Clone)]
struct Model<'a> {
    space: &'a GroundSpace,
    lambdas: &'a [f64],
    bases: &'a [Vec<Point>],
    masses: &'a [Vec<f64>],
    cols: Vec<Col>,
    blocks: Vec<Vec<Vec<usize>>>,
}

fn clipped_weights(space: &GroundSpace, lambdas: &[f64], bases: &[Vec<Point>], tuple: &[usize], x: &Point) -> Vec<f64> {
    tuple
        .iter()
        .enumerate()
        .map(|(i, &k)| lambdas[i] * cos_pi(space.dist(x, &bases[i][k])).max(0.0))
        .collect()
}

/// Maximizes `Σ 2 c_a s_a + w_a² s_a²` over `s ≥ 0` with `Σ s_a² = m`;
/// also returns the multiplier of the constraint.
fn water_fill(c: &[f64], w2: &[f64], m: f64, current: &[f64]) -> (Vec<f64>, f64) {
    let n = c.len();
    let top = w2.iter().cloned().fold(0.0, f64::max);
    let positive: Vec<usize> = (0..n).filter(|&a| c[a] > 0.0).collect();
    let mut s = vec![0.0; n];
    let first_top = || (0..n).find(|&a| w2[a] == top).unwrap();
    if positive.is_empty() {
        if top == 0.0 {
            return (current.to_vec(), 0.0);
        }
        s[first_top()] = m.sqrt();
        return (s, top);
    }
    let h = |nu: f64| -> f64 { positive.iter().map(|&a| (c[a] / (nu - w2[a])).powi(2)).sum() };
    let blocking = positive.iter().any(|&a| w2[a] == top);
    if !blocking && h(top) <= m {
        for &a in &positive {
            s[a] = c[a] / (top - w2[a]);
        }
        let used: f64 = s.iter().map(|v| v * v).sum();
        let a = first_top();
        s[a] = (m - used).max(0.0).sqrt();
        return (s, top);
    }
    let c2: f64 = positive.iter().map(|&a| c[a] * c[a]).sum();
    let mut lo = top;
    let mut hi = top + (c2 / m).sqrt();
    let mut nu = hi;
    for _ in 0..200 {
        let f = h(nu) - m;
        if f.abs() <= 1e-15 * m {
            break;
        }
        if f > 0.0 {
            lo = nu;
        } else {
            hi = nu;
        }
        let d: f64 = positive.iter().map(|&a| -2.0 * c[a] * c[a] / (nu - w2[a]).powi(3)).sum();
        let newton = nu - f / d;
        nu = if newton > lo && newton < hi { newton } else { 0.5 * (lo + hi) };
        if hi - lo <= 1e-16 * hi {
            break;
        }
    }
    for &a in &positive {
        s[a] = c[a] / (nu - w2[a]);
    }
    let used: f64 = s.iter().map(|v| v * v).sum();
    let scale = (m / used).sqrt();
    s.iter_mut().for_each(|v| *v *= scale);
    (s, nu)
}

impl<'a> Model<'a> {
    fn p(&self) -> usize {
        self.lambdas.len()
    }

    fn make_col(&self, tuple: Vec<usize>, x: Point) -> Col {
        let w = clipped_weights(self.space, self.lambdas, self.bases, &tuple, &x);
        let p = tuple.len();
        Col { tuple, x, w, s: vec![0.0; p], b: 0.0 }
    }

    fn rebuild(&mut self) {
        let p = self.p();
        // Merge columns sharing tuple and location.
        let mut seen: HashMap<(Vec<usize>, Point), usize> = HashMap::new();
        let mut merged: Vec<Col> = Vec::with_capacity(self.cols.len());
        for c in self.cols.drain(..) {
            match seen.get(&(c.tuple.clone(), c.x.clone())) {
                Some(&j) => {
                    let t: &mut Col = &mut merged[j];
                    for i in 0..p {
                        t.s[i] = (t.s[i] * t.s[i] + c.s[i] * c.s[i]).sqrt();
                    }
                }
                None => {
                    seen.insert((c.tuple.clone(), c.x.clone()), merged.len());
                    merged.push(c);
                }
            }
        }
        for c in &mut merged {
            c.b = c.w.iter().zip(&c.s).map(|(w, s)| w * s).sum();
        }
        self.cols = merged;
        self.blocks = self.masses.iter().map(|m| vec![Vec::new(); m.len()]).collect();
        for (a, c) in self.cols.iter().enumerate() {
            for (i, &k) in c.tuple.iter().enumerate() {
                self.blocks[i][k].push(a);
            }
        }
    }

    fn value(&self) -> f64 {
        self.cols.iter().map(|c| c.b * c.b).sum()
    }

    /// The block subproblem of slot `i`, atom `k` given all other loads.
    fn block(&self, i: usize, k: usize) -> (Vec<f64>, f64) {
        let members = &self.blocks[i][k];
        let mut c = Vec::with_capacity(members.len());
        let mut w2 = Vec::with_capacity(members.len());
        let mut cur = Vec::with_capacity(members.len());
        for &a in members {
            let col = &self.cols[a];
            let beta = (col.b - col.w[i] * col.s[i]).max(0.0);
            c.push(beta * col.w[i]);
            w2.push(col.w[i] * col.w[i]);
            cur.push(col.s[i]);
        }
        water_fill(&c, &w2, self.masses[i][k], &cur)
    }

    fn sweep(&mut self) {
        for i in 0..self.p() {
            for k in 0..self.masses[i].len() {
                let members = &self.blocks[i][k];
                if members.is_empty() {
                    continue;
                }
                let (s, _) = self.block(i, k);
                for (&a, sa) in members.clone().iter().zip(s) {
                    let col = &mut self.cols[a];
                    col.s[i] = sa;
                    col.b = col.w.iter().zip(&col.s).map(|(w, s)| w * s).sum();
                }
            }
        }
    }

    fn ascend(&mut self, max_sweeps: usize, tol: f64) -> usize {
        let mut prev = self.value();
        for n in 1..=max_sweeps {
            self.sweep();
            let v = self.value();
            if v - prev <= tol * (1.0 + v) {
                return n;
            }
            prev = v;
        }
        max_sweeps
    }

    /// Drops empty columns and moves every loaded column uphill in its `B`
    /// (a local search from the current location; new basins come in by
    /// pricing). Returns whether any location moved.
    fn relocate(&mut self, search: &PointSearch) -> bool {
        let search = &PointSearch { starts: 1, ..search.clone() };
        self.cols.retain(|c| c.s.iter().any(|s| *s > 0.0));
        let space = self.space;
        let (lambdas, bases) = (self.lambdas, self.bases);
        let moves: Vec<Option<(Point, Vec<f64>)>> = self
            .cols
            .par_iter()
            .map(|c| {
                let pts: Vec<&Point> = c.tuple.iter().enumerate().map(|(i, &k)| &bases[i][k]).collect();
                let wts: Vec<f64> = c.s.iter().zip(lambdas).map(|(s, l)| s * l).collect();
                let (x, v, _) = maximize_cos_sum(space, &pts, &wts, true, search, std::slice::from_ref(&c.x));
                (v > c.b * (1.0 + 1e-14) && x != c.x)
                    .then(|| (x.clone(), clipped_weights(space, lambdas, bases, &c.tuple, &x)))
            })
            .collect();
        let mut moved = false;
        for (c, m) in self.cols.iter_mut().zip(moves) {
            if let Some((x, w)) = m {
                c.x = x;
                c.w = w;
                moved = true;
            }
        }
        // Snap locations of one tuple that agree to search accuracy onto
        // the most loaded one; the exact merge happens in `rebuild`.
        let load = |c: &Col| c.s.iter().map(|s| s * s).sum::<f64>();
        let mut order: Vec<usize> = (0..self.cols.len()).collect();
        order.sort_by(|&a, &b| load(&self.cols[b]).total_cmp(&load(&self.cols[a])));
        let mut leaders: HashMap<Vec<usize>, Vec<usize>> = HashMap::new();
        for a in order {
            let group = leaders.entry(self.cols[a].tuple.clone()).or_default();
            let near = group.iter().copied().find(|&l| {
                let (x, y) = (&self.cols[l].x, &self.cols[a].x);
                x != y && space.dist(x, y) <= SNAP_DISTANCE
            });
            match near {
                Some(l) => {
                    let (x, w) = (self.cols[l].x.clone(), self.cols[l].w.clone());
                    self.cols[a].x = x;
                    self.cols[a].w = w;
                    moved = true;
                }
                None => group.push(a),
            }
        }
        self.rebuild();
        moved
    }

    /// Moves slot mass sitting at a clipped (zero) weight onto the column of
    /// the same tuple at that slot's own base point.
    fn cleanup(&mut self) {
        let mut extra = Vec::new();
        for c in &mut self.cols {
            for i in 0..c.s.len() {
                if c.s[i] > 0.0 && c.w[i] == 0.0 {
                    extra.push((c.tuple.clone(), i, c.s[i]));
                    c.s[i] = 0.0;
                }
            }
        }
        for (tuple, i, s) in extra {
            let x = self.bases[i][tuple[i]].clone();
            let mut col = self.make_col(tuple, x);
            col.s[i] = s;
            self.cols.push(col);
        }
        self.rebuild();
    }

    /// Folds columns whose every load is dust into the heaviest column of
    /// the same block, which keeps the marginals exact.
    fn purge(&mut self) {
        let p = self.p();
        let dust = |c: &Col, i: usize| c.s[i] * c.s[i] <= DUST * self.masses[i][c.tuple[i]];
        let is_dust: Vec<bool> = self.cols.iter().map(|c| (0..p).all(|i| dust(c, i))).collect();
        let mut moves = Vec::new();
        for (a, c) in self.cols.iter().enumerate() {
            if !is_dust[a] {
                continue;
            }
            for i in 0..p {
                let k = c.tuple[i];
                let target = self.blocks[i][k]
                    .iter()
                    .copied()
                    .filter(|&j| !is_dust[j])
                    .max_by(|&x, &y| self.cols[x].s[i].total_cmp(&self.cols[y].s[i]));
                match target {
                    Some(j) => moves.push((j, i, c.s[i] * c.s[i])),
                    None => return,
                }
            }
        }
        for (j, i, q) in moves {
            let t = &mut self.cols[j].s[i];
            *t = (*t * *t + q).sqrt();
        }
        let mut keep = is_dust.iter().map(|d| !d);
        self.cols.retain(|_| keep.next().unwrap());
        self.rebuild();
    }

    fn multipliers(&self) -> Vec<Vec<f64>> {
        (0..self.p())
            .map(|i| (0..self.masses[i].len()).map(|k| if self.blocks[i][k].is_empty() { 0.0 } else { self.block(i, k).1 }).collect())
            .collect()
    }

    /// Best tuple at `x` and its pricing value.
    fn price(&self, nu: &[Vec<f64>], x: &Point) -> (f64, Vec<usize>) {
        let mut total = 0.0;
        let mut tuple = Vec::with_capacity(self.p());
        for i in 0..self.p() {
            let mut best = (0.0, usize::MAX, f64::INFINITY);
            for (k, b) in self.bases[i].iter().enumerate() {
                let d = self.space.dist(x, b);
                let w = self.lambdas[i] * cos_pi(d).max(0.0);
                let r = if w == 0.0 {
                    0.0
                } else if nu[i][k] == 0.0 {
                    f64::INFINITY
                } else {
                    w * w / nu[i][k]
                };
                if r > best.0 || (best.1 == usize::MAX && d < best.2) || (r == best.0 && r == 0.0 && d < best.2) {
                    best = (r, k, d);
                }
            }
            total += best.0;
            tuple.push(best.1);
        }
        (total, tuple)
    }

    fn pricing_points(&self, nu: &[Vec<f64>], search: &PointSearch) -> Vec<(f64, Point, Vec<usize>)> {
        let mut pts: Vec<Point> = self.bases.iter().flatten().cloned().collect();
        pts.extend(self.cols.iter().map(|c| c.x.clone()));
        let mut scored: Vec<(f64, Point, Vec<usize>)> = pts
            .par_iter()
            .map(|x| {
                let (v, t) = self.price(nu, x);
                (v, x.clone(), t)
            })
            .collect();
        if let GroundSpace::Euclidean { dim } = self.space {
            let dim = *dim;
            let mut lo = vec![f64::INFINITY; dim];
            let mut hi = vec![f64::NEG_INFINITY; dim];
            for b in self.bases.iter().flatten() {
                for (i, c) in b.coords().unwrap().iter().enumerate() {
                    lo[i] = lo[i].min(*c);
                    hi[i] = hi[i].max(*c);
                }
            }
            let mut order: Vec<usize> = (0..scored.len()).collect();
            order.sort_by(|&a, &b| scored[b].0.total_cmp(&scored[a].0));
            let width = lo.iter().zip(&hi).map(|(l, h)| h - l).fold(0.0, f64::max);
            let f = |x: &[f64]| self.price(nu, &Point::Coords(x.to_vec())).0;
            let refined: Vec<(f64, Point, Vec<usize>)> = order
                .iter()
                .take(8)
                .filter(|&&a| scored[a].0.is_finite())
                .collect::<Vec<_>>()
                .par_iter()
                .map(|&&a| {
                    let start = scored[a].1.coords().unwrap().to_vec();
                    let (x, _) = nelder_mead_max(&f, &start, &lo, &hi, (0.05 * width).max(1e-4), search.max_evals);
                    let x = Point::Coords(x);
                    let (v, t) = self.price(nu, &x);
                    (v, x, t)
                })
                .collect();
            scored.extend(refined);
        }
        scored
    }

    /// Adds improving columns; returns how many were added.
    fn generate(&mut self, search: &PointSearch) -> (usize, f64) {
        let nu = self.multipliers();
        let mut scored = self.pricing_points(&nu, search);
        let pmax = scored.iter().map(|s| s.0).fold(0.0, f64::max);
        scored.retain(|s| s.0 > 1.0 + PRICING_TOL);
        scored.sort_by(|a, b| b.0.total_cmp(&a.0));
        let existing: std::collections::HashSet<(Vec<usize>, Point)> =
            self.cols.iter().map(|c| (c.tuple.clone(), c.x.clone())).collect();
        let mut added = 0;
        let mut taken = std::collections::HashSet::new();
        for (_, x, tuple) in scored {
            if added >= MAX_NEW_COLUMNS {
                break;
            }
            let key = (tuple.clone(), x.clone());
            if existing.contains(&key) || !taken.insert(key) {
                continue;
            }
            let mut col = self.make_col(tuple, x);
            // Seed along the best ascent direction √q_i ∝ w_i / ν_i.
            let dir: Vec<f64> = (0..self.p())
                .map(|i| {
                    let n = nu[i][col.tuple[i]];
                    if col.w[i] == 0.0 {
                        0.0
                    } else if n == 0.0 {
                        1.0
                    } else {
                        col.w[i] / n
                    }
                })
                .collect();
            let mut tau = f64::INFINITY;
            for i in 0..self.p() {
                if dir[i] > 0.0 {
                    tau = tau.min(SEED_FRACTION * self.masses[i][col.tuple[i]] / (dir[i] * dir[i]));
                }
            }
            if !tau.is_finite() {
                continue;
            }
            for i in 0..self.p() {
                let q = tau * dir[i] * dir[i];
                if q == 0.0 {
                    continue;
                }
                let k = col.tuple[i];
                let m = self.masses[i][k];
                let keep = ((m - q) / m).max(0.0).sqrt();
                for &a in &self.blocks[i][k] {
                    self.cols[a].s[i] *= keep;
                }
                col.s[i] = q.sqrt();
            }
            self.cols.push(col);
            added += 1;
            self.rebuild();
        }
        (added, pmax)
    }

    fn run(&mut self, opts: &MultimarginalOptions) -> (usize, bool, f64) {
        self.rebuild();
        let mut sweeps = self.ascend(opts.max_sweeps, opts.tolerance);
        let mut pmax = f64::INFINITY;
        for _ in 0..opts.max_rounds {
            let before = self.value();
            let moved = self.relocate(&opts.search);
            self.cleanup();
            sweeps += self.ascend(opts.max_sweeps, opts.tolerance);
            let (added, pm) = self.generate(&opts.search);
            pmax = pm;
            if added > 0 {
                sweeps += self.ascend(opts.max_sweeps, opts.tolerance);
            }
            // A round that neither moved nor priced anything in, or whose
            // changes did not pay off, ends the start.
            let settled = (!moved && added == 0) || self.value() - before <= ROUND_TOL * (1.0 + before);
            if settled {
                return (sweeps, false, pmax);
            }
        }
        (sweeps, true, pmax)
    }

    /// Distinct tight locations of one tuple whose loaded-slot sets overlap.
    fn has_ties(&self, nu: &[Vec<f64>]) -> bool {
        let mut by_tuple: HashMap<&Vec<usize>, Vec<&Point>> = HashMap::new();
        for c in &self.cols {
            by_tuple.entry(&c.tuple).or_default().push(&c.x);
        }
        for (tuple, xs) in by_tuple {
            let mut probes: Vec<Point> = xs.into_iter().cloned().collect();
            let anchors: Vec<&Point> = tuple.iter().enumerate().map(|(i, &k)| &self.bases[i][k]).collect();
            probes.extend(anchors.iter().map(|p| (*p).clone()));
            for a in 0..anchors.len() {
                for b in a + 1..anchors.len() {
                    if let Some(m) = midpoint(self.space, anchors[a], anchors[b]) {
                        probes.push(m);
                    }
                }
            }
            let tight: Vec<(&Point, Vec<bool>)> = probes
                .iter()
                .filter_map(|x| {
                    let w = clipped_weights(self.space, self.lambdas, self.bases, tuple, x);
                    let p: f64 = (0..w.len())
                        .map(|i| {
                            let n = nu[i][tuple[i]];
                            if w[i] == 0.0 {
                                0.0
                            } else if n == 0.0 {
                                f64::INFINITY
                            } else {
                                w[i] * w[i] / n
                            }
                        })
                        .sum();
                    ((p - 1.0).abs() <= TIGHT_TOL).then(|| (x, w.iter().map(|v| *v > 0.0).collect()))
                })
                .collect();
            for a in 0..tight.len() {
                for b in a + 1..tight.len() {
                    let overlap = tight[a].1.iter().zip(&tight[b].1).any(|(x, y)| *x && *y);
                    if overlap && self.space.dist(tight[a].0, tight[b].0) > 1e-6 {
                        return true;
                    }
                }
            }
        }
        false
    }
}

fn midpoint(space: &GroundSpace, a: &Point, b: &Point) -> Option<Point> {
    match space {
        GroundSpace::Euclidean { .. } => {
            Some(Point::Coords(a.coords()?.iter().zip(b.coords()?).map(|(x, y)| 0.5 * (x + y)).collect()))
        }
        GroundSpace::Sphere { .. } => {
            let v: Vec<f64> = a.coords()?.iter().zip(b.coords()?).map(|(x, y)| x + y).collect();
            let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            (n > 1e-12).then(|| Point::Coords(v.into_iter().map(|x| x / n).collect()))
        }
        GroundSpace::Finite(_) => None,
    }
}

fn product_tuples(sizes: &[usize]) -> Vec<Vec<usize>> {
    let total: usize = sizes.iter().product();
    (0..total)
        .map(|mut idx| {
            let mut t = vec![0; sizes.len()];
            for i in (0..sizes.len()).rev() {
                t[i] = idx % sizes[i];
                idx /= sizes[i];
            }
            t
        })
        .collect()
}

/// Solves the homogeneous multimarginal problem `min ∫ c dα` subject to
/// `h²_i α = μ_i`, by the scheme described in the module docs, from the
/// product start and `opts.random_starts` random splits.
pub fn solve_multimarginal(
    mus: &[DiscreteMeasure],
    lambdas: &[f64],
    opts: &MultimarginalOptions,
) -> Result<MultimarginalSolution> {
    let p = mus.len();
    if p < 2 {
        return invalid("the multimarginal problem needs at least two measures");
    }
    check_weights(lambdas, p, 1e-9)?;
    let space = mus[0].space().clone();
    if mus.iter().any(|m| m.space() != &space) {
        return Err(HkError::SpaceMismatch);
    }
    // A null measure only ever contributes apex slots, which carry no
    // homogeneous mass; drop it and keep the other weights as they are.
    let kept: Vec<usize> = (0..p).filter(|&i| !mus[i].is_null()).collect();
    let full_lambdas = lambdas;
    let lambdas: Vec<f64> = kept.iter().map(|&i| full_lambdas[i]).collect();
    let lambdas = &lambdas[..];
    let mus: Vec<&DiscreteMeasure> = kept.iter().map(|&i| &mus[i]).collect();
    let p = mus.len();
    let sizes: Vec<usize> = mus.iter().map(|m| m.len()).collect();
    let tuples_needed = sizes.iter().try_fold(1usize, |acc, &n| acc.checked_mul(n)).unwrap_or(usize::MAX);
    if tuples_needed > opts.tuple_budget {
        return Err(HkError::TupleBudgetExceeded { tuples: tuples_needed, budget: opts.tuple_budget });
    }
    let base_total: f64 = mus.iter().zip(lambdas).map(|(m, l)| l * m.total_mass()).sum();
    let bases: Vec<Vec<Point>> = mus.iter().map(|m| m.points()).collect();
    let masses: Vec<Vec<f64>> = mus.iter().map(|m| m.masses()).collect();
    let totals: Vec<f64> = mus.iter().map(|m| m.total_mass()).collect();
    if p == 0 {
        return Ok(MultimarginalSolution {
            space,
            lambdas: full_lambdas.to_vec(),
            tuples: Vec::new(),
            objective: 0.0,
            residuals: vec![0.0; full_lambdas.len()],
            dual_bound: 0.0,
            multipliers: vec![Vec::new(); full_lambdas.len()],
            pricing_max: 0.0,
            ties: false,
            stalled: false,
            sweeps: 0,
        });
    }

    let model = Model {
        space: &space,
        lambdas,
        bases: &bases,
        masses: &masses,
        cols: Vec::new(),
        blocks: Vec::new(),
    };
    // Candidate columns per tuple with the product-start loads.
    let tuples = product_tuples(&sizes);
    let columns: Vec<Vec<Col>> = tuples
        .par_iter()
        .map(|t| {
            let q: Vec<f64> = (0..p)
                .map(|i| masses[i][t[i]] * (0..p).filter(|&j| j != i).map(|j| masses[j][t[j]] / totals[j]).product::<f64>())
                .collect();
            let anchors: Vec<&Point> = t.iter().enumerate().map(|(i, &k)| &bases[i][k]).collect();
            let mut xs: Vec<Point> = anchors.iter().map(|x| (*x).clone()).collect();
            for a in 0..p {
                for b in a + 1..p {
                    if let Some(m) = midpoint(&space, anchors[a], anchors[b]) {
                        xs.push(m);
                    }
                }
            }
            let wts: Vec<f64> = q.iter().zip(lambdas).map(|(q, l)| l * q.sqrt()).collect();
            xs.push(maximize_cos_sum(&space, &anchors, &wts, true, &opts.search, &[]).0);
            let mut seen = std::collections::HashSet::new();
            let cols: Vec<Col> = xs
                .into_iter()
                .filter(|x| seen.insert(x.clone()))
                .map(|x| model.make_col(t.clone(), x))
                .filter(|c| c.w.iter().any(|w| *w > 0.0))
                .collect();
            let n = cols.len() as f64;
            cols.into_iter()
                .map(|mut c| {
                    c.s = q.iter().map(|q| (q / n).sqrt()).collect();
                    c
                })
                .collect()
        })
        .collect();
    let base_cols: Vec<Col> = columns.into_iter().flatten().collect();

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut starts: Vec<Vec<Col>> = vec![base_cols.clone()];
    for _ in 0..opts.random_starts {
        let mut cols = base_cols.clone();
        for c in &mut cols {
            for s in &mut c.s {
                *s = rng.gen::<f64>();
            }
        }
        // Normalize each block to its mass.
        let mut sums: Vec<Vec<f64>> = masses.iter().map(|m| vec![0.0; m.len()]).collect();
        for c in &cols {
            for (i, &k) in c.tuple.iter().enumerate() {
                sums[i][k] += c.s[i] * c.s[i];
            }
        }
        for c in &mut cols {
            for (i, &k) in c.tuple.iter().enumerate() {
                c.s[i] *= (masses[i][k] / sums[i][k]).sqrt();
            }
        }
        starts.push(cols);
    }
    let runs: Vec<(f64, Model, usize, bool, f64)> = starts
        .into_par_iter()
        .map(|cols| {
            let mut m = model.clone();
            m.cols = cols;
            let (sweeps, stalled, pmax) = m.run(opts);
            (m.value(), m, sweeps, stalled, pmax)
        })
        .collect();
    let mut best = 0;
    for (r, run) in runs.iter().enumerate() {
        if run.0 > runs[best].0 + 1e-15 * (1.0 + run.0.abs()) {
            best = r;
        }
    }
    let sweeps_total: usize = runs.iter().map(|r| r.2).sum();
    let (_, mut m, _, stalled, pmax) = runs.into_iter().nth(best).unwrap();
    m.purge();
    Ok(m.solution(base_total, stalled, pmax, sweeps_total).expand(&kept, full_lambdas))
}

impl Model<'_> {
    fn solution(&self, base_total: f64, stalled: bool, pricing_max: f64, sweeps: usize) -> MultimarginalSolution {
        let p = self.p();
        let mut sums: Vec<Vec<f64>> = self.masses.iter().map(|m| vec![0.0; m.len()]).collect();
        let mut tuples = Vec::new();
        let mut gain = 0.0;
        for c in &self.cols {
            if c.s.iter().all(|s| *s == 0.0) {
                continue;
            }
            let mut b = 0.0;
            for i in 0..p {
                let k = c.tuple[i];
                sums[i][k] += c.s[i] * c.s[i];
                b += self.lambdas[i] * c.s[i] * cos_pi(self.space.dist(&c.x, &self.bases[i][k]));
            }
            let r = b.max(0.0);
            gain += r * r;
            tuples.push(TupleAtom {
                indices: c.tuple.iter().zip(&c.s).map(|(&k, &s)| (s > 0.0).then_some(k)).collect(),
                q: c.s.iter().map(|s| s * s).collect(),
                point: c.x.clone(),
                radius: r,
            });
        }
        let residuals = sums
            .iter()
            .zip(self.masses)
            .map(|(s, m)| s.iter().zip(m).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
            .collect();
        let nu = self.multipliers();
        let bound: f64 = nu.iter().zip(self.masses).map(|(n, m)| n.iter().zip(m).map(|(a, b)| a * b).sum::<f64>()).sum();
        MultimarginalSolution {
            space: self.space.clone(),
            lambdas: self.lambdas.to_vec(),
            tuples,
            objective: base_total - gain,
            residuals,
            dual_bound: base_total - bound,
            pricing_max,
            ties: self.has_ties(&nu),
            multipliers: nu,
            stalled,
            sweeps,
        }
    }
}

impl MultimarginalSolution {
    /// Reinserts dropped null slots as apexes.
    fn expand(mut self, kept: &[usize], lambdas: &[f64]) -> Self {
        let p = lambdas.len();
        if kept.len() == p {
            return self;
        }
        let mut residuals = vec![0.0; p];
        for (j, &i) in kept.iter().enumerate() {
            residuals[i] = self.residuals[j];
        }
        for t in &mut self.tuples {
            let mut indices = vec![None; p];
            let mut q = vec![0.0; p];
            for (j, &i) in kept.iter().enumerate() {
                indices[i] = t.indices[j];
                q[i] = t.q[j];
            }
            t.indices = indices;
            t.q = q;
        }
        let mut nu = vec![Vec::new(); p];
        for (j, &i) in kept.iter().enumerate() {
            nu[i] = std::mem::take(&mut self.multipliers[j]);
        }
        self.multipliers = nu;
        self.residuals = residuals;
        self.lambdas = lambdas.to_vec();
        self
    }
}

/// `h²T_# α`: an atom of mass `max(B, 0)²` at each tuple's location.
pub fn extract_barycenter(sol: &MultimarginalSolution) -> Result<DiscreteMeasure> {
    let atoms = sol
        .tuples
        .iter()
        .filter(|t| t.radius > 0.0)
        .map(|t| (t.point.clone(), t.radius * t.radius))
        .collect();
    DiscreteMeasure::new(sol.space.clone(), atoms)
}
