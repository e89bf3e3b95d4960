//! Reference LET minimizer for tiny supports.
//!
//! Spectral projected gradient with a nonmonotone Armijo search directly on
//! the plan entries, restarted from many points. It shares no code with the
//! scaling solver and is meant for cross-checking it.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{entropy, CostMatrix, TransportPlan};
use crate::error::{HkError, Result};
use crate::measure::DiscreteMeasure;

pub const ORACLE_MAX_ATOMS: usize = 8;

const MEMORY: usize = 10;
const ALPHA_MIN: f64 = 1e-12;
const ALPHA_MAX: f64 = 1e6;
const ARMIJO: f64 = 1e-4;
const LOG_FLOOR: f64 = 1e-300;

#[derive(Debug, Clone)]
pub struct OracleOptions {
    pub random_starts: usize,
    pub seed: u64,
    pub max_iterations: usize,
    /// Stop when the projected-gradient step is below this in sup norm.
    pub tolerance: f64,
}

impl Default for OracleOptions {
    fn default() -> Self {
        OracleOptions { random_starts: 64, seed: 42, max_iterations: 20_000, tolerance: 1e-14 }
    }
}

struct Problem<'a> {
    a: &'a [f64],
    b: &'a [f64],
    /// Row-major `(j, k, ℓ)` of finite-cost pairs.
    pairs: Vec<(usize, usize, f64)>,
}

impl Problem<'_> {
    fn marginals(&self, x: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let mut r = vec![0.0; self.a.len()];
        let mut c = vec![0.0; self.b.len()];
        for (&(j, k, _), v) in self.pairs.iter().zip(x) {
            r[j] += v;
            c[k] += v;
        }
        (r, c)
    }

    fn value(&self, x: &[f64]) -> f64 {
        let (r, c) = self.marginals(x);
        let ent: f64 = r.iter().zip(self.a).map(|(r, a)| a * entropy(r / a)).sum::<f64>()
            + c.iter().zip(self.b).map(|(c, b)| b * entropy(c / b)).sum::<f64>();
        ent + self.pairs.iter().zip(x).map(|(p, v)| p.2 * v).sum::<f64>()
    }

    fn gradient(&self, x: &[f64]) -> Vec<f64> {
        let (r, c) = self.marginals(x);
        let lr: Vec<f64> = r.iter().zip(self.a).map(|(r, a)| (r.max(LOG_FLOOR) / a).ln()).collect();
        let lc: Vec<f64> = c.iter().zip(self.b).map(|(c, b)| (c.max(LOG_FLOOR) / b).ln()).collect();
        self.pairs.iter().map(|&(j, k, l)| lr[j] + lc[k] + l).collect()
    }
}

fn dot(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}

fn spg(p: &Problem, mut x: Vec<f64>, opts: &OracleOptions) -> (Vec<f64>, f64) {
    let mut fx = p.value(&x);
    let mut gx = p.gradient(&x);
    let mut history = vec![fx];
    let mut alpha = 1.0;
    for _ in 0..opts.max_iterations {
        let d: Vec<f64> = x.iter().zip(&gx).map(|(x, g)| (x - alpha * g).max(0.0) - x).collect();
        if d.iter().fold(0.0f64, |m, v| m.max(v.abs())) < opts.tolerance {
            break;
        }
        let slope = dot(&gx, &d);
        let reference = history.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut lambda = 1.0;
        let (xn, fxn) = loop {
            let cand: Vec<f64> = x.iter().zip(&d).map(|(x, d)| (x + lambda * d).max(0.0)).collect();
            let fc = p.value(&cand);
            if fc <= reference + ARMIJO * lambda * slope || lambda < 1e-20 {
                break (cand, fc);
            }
            lambda *= 0.5;
        };
        let gn = p.gradient(&xn);
        let s: Vec<f64> = xn.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = gn.iter().zip(&gx).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        alpha = if sy > 0.0 { (dot(&s, &s) / sy).clamp(ALPHA_MIN, ALPHA_MAX) } else { ALPHA_MAX };
        if fxn >= fx && dot(&s, &s) == 0.0 {
            break;
        }
        x = xn;
        fx = fxn;
        gx = gn;
        history.push(fx);
        if history.len() > MEMORY {
            history.remove(0);
        }
    }
    (x, fx)
}

/// Minimizes the LET functional over plans by projected gradient from
/// several starts. Supports are limited to [`ORACLE_MAX_ATOMS`] atoms.
pub fn let_oracle(
    mu1: &DiscreteMeasure,
    mu2: &DiscreteMeasure,
    opts: &OracleOptions,
) -> Result<(TransportPlan, f64)> {
    for mu in [mu1, mu2] {
        if mu.len() > ORACLE_MAX_ATOMS {
            return Err(HkError::SupportTooLarge { size: mu.len(), limit: ORACLE_MAX_ATOMS });
        }
    }
    let cost = CostMatrix::between(mu1, mu2)?;
    let (a, b) = (mu1.masses(), mu2.masses());
    let m = b.len();
    let pairs: Vec<(usize, usize, f64)> = (0..a.len())
        .flat_map(|j| (0..m).map(move |k| (j, k)))
        .filter_map(|(j, k)| {
            let l = cost.ell(j, k);
            l.is_finite().then_some((j, k, l))
        })
        .collect();
    let problem = Problem { a: &a, b: &b, pairs };
    let np = problem.pairs.len();

    let mut starts: Vec<Vec<f64>> = vec![vec![0.0; np]];
    starts.push(problem.pairs.iter().map(|&(j, k, _)| if j == k { a[j].min(b[k]) } else { 0.0 }).collect());
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let scale = a.iter().chain(&b).cloned().fold(0.0, f64::max);
    for _ in 0..opts.random_starts {
        starts.push((0..np).map(|_| rng.gen::<f64>() * scale).collect());
    }

    let mut best: Option<(Vec<f64>, f64)> = None;
    for s in starts {
        let (x, v) = spg(&problem, s, opts);
        if best.as_ref().is_none_or(|b| v < b.1) {
            best = Some((x, v));
        }
    }
    let (x, value) = best.expect("at least one start");
    let mut entries = vec![0.0; a.len() * m];
    for (&(j, k, _), v) in problem.pairs.iter().zip(&x) {
        entries[j * m + k] = *v;
    }
    Ok((TransportPlan::new(entries, &a, &b)?, value))
}
