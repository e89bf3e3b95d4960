//! Alternating barycenter scheme: glue the optimal entropy-transport plans
//! from the current iterate, replace each glued tuple of cone points by its
//! pointwise barycenter and project back by `h²`.

use serde::Serialize;

use super::{check_weights, cone_point_barycenter, PointSearch};
use crate::error::{invalid, HkError, Result};
use crate::let_solver::{hk_solve, SolverOptions, TransportPlan};
use crate::measure::DiscreteMeasure;
use crate::space::{ConePoint, Point};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FixedPointOptions {
    pub max_outer: usize,
    /// Stop once `J` decreases by less than this.
    pub tolerance: f64,
    /// Conditional plan weights below this are dropped before gluing.
    pub prune: f64,
    pub solver: SolverOptions,
    pub search: PointSearch,
}

impl Default for FixedPointOptions {
    fn default() -> Self {
        FixedPointOptions {
            max_outer: 100,
            tolerance: 1e-10,
            prune: 1e-9,
            solver: SolverOptions::default(),
            search: PointSearch::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FixedPointResult {
    #[serde(skip)]
    pub measure: DiscreteMeasure,
    pub objective: f64,
    pub iterations: usize,
    /// `J` of every accepted iterate, starting with the initial measure.
    pub history: Vec<f64>,
    pub converged: bool,
}

fn solve_plan(mu: &DiscreteMeasure, nu: &DiscreteMeasure, opts: &SolverOptions) -> Result<(TransportPlan, f64)> {
    match hk_solve(mu, nu, opts) {
        Ok((plan, r)) => Ok((plan, r.primal)),
        Err(HkError::NonConvergence(nc)) => Ok((nc.plan, nc.report.primal)),
        Err(e) => Err(e),
    }
}

fn evaluate(
    mu: &DiscreteMeasure,
    mus: &[DiscreteMeasure],
    lambdas: &[f64],
    opts: &SolverOptions,
) -> Result<(Vec<TransportPlan>, f64)> {
    let mut plans = Vec::with_capacity(mus.len());
    let mut j = 0.0;
    for (m, l) in mus.iter().zip(lambdas) {
        let (plan, v) = solve_plan(mu, m, opts)?;
        plans.push(plan);
        j += l * v;
    }
    Ok((plans, j))
}

/// One gluing step from `mu` with its plans to each `μ_i`.
fn step(
    mu: &DiscreteMeasure,
    plans: &[TransportPlan],
    mus: &[DiscreteMeasure],
    lambdas: &[f64],
    opts: &FixedPointOptions,
) -> Result<DiscreteMeasure> {
    let space = mu.space();
    let p = mus.len();
    let masses = mu.masses();
    let mut atoms: Vec<(Point, f64)> = Vec::new();
    let mut push = |etas: Vec<ConePoint>, mass: f64| -> Result<()> {
        let b = cone_point_barycenter(&etas, lambdas, space, &opts.search)?;
        let m = mass * b.point.radius * b.point.radius;
        if m > 0.0 {
            atoms.push((b.point.base, m));
        }
        Ok(())
    };
    // Per slot and source atom: the pruned conditional over targets.
    let conditionals: Vec<Vec<Vec<(usize, f64)>>> = plans
        .iter()
        .map(|plan| {
            (0..plan.rows)
                .map(|y| {
                    let row = plan.marginal1[y];
                    if row <= 0.0 {
                        return Vec::new();
                    }
                    let mut c: Vec<(usize, f64)> =
                        (0..plan.cols).map(|k| (k, plan.get(y, k) / row)).filter(|e| e.1 > opts.prune).collect();
                    let s: f64 = c.iter().map(|e| e.1).sum();
                    c.iter_mut().for_each(|e| e.1 /= s);
                    c
                })
                .collect()
        })
        .collect();
    for (y, &my) in masses.iter().enumerate() {
        // Odometer over the slots that hold mass at y; the others are apexes.
        let slots: Vec<usize> = (0..p).filter(|&i| !conditionals[i][y].is_empty()).collect();
        let mut pos = vec![0usize; slots.len()];
        loop {
            let mut mass = my;
            let mut etas: Vec<ConePoint> =
                (0..p).map(|i| ConePoint { base: mus[i].atoms()[0].point.clone(), radius: 0.0 }).collect();
            for (s, &i) in slots.iter().enumerate() {
                let (k, w) = conditionals[i][y][pos[s]];
                mass *= w;
                let plan = &plans[i];
                let r = (plan.sigma1[y] / plan.sigma2[k]).sqrt();
                etas[i] = ConePoint { base: mus[i].atoms()[k].point.clone(), radius: r };
            }
            if slots.is_empty() {
                // Nothing of y is transported: it is destroyed.
                break;
            }
            push(etas, mass)?;
            let mut s = 0;
            loop {
                if s == slots.len() {
                    break;
                }
                pos[s] += 1;
                if pos[s] < conditionals[slots[s]][y].len() {
                    break;
                }
                pos[s] = 0;
                s += 1;
            }
            if s == slots.len() {
                break;
            }
        }
    }
    // Atoms of μ_i that receive no transport keep slot i alone.
    for i in 0..p {
        for (k, a) in mus[i].atoms().iter().enumerate() {
            if plans[i].sigma2[k] > 0.0 {
                continue;
            }
            let etas: Vec<ConePoint> = (0..p)
                .map(|j| ConePoint { base: a.point.clone(), radius: if j == i { 1.0 } else { 0.0 } })
                .collect();
            push(etas, a.mass)?;
        }
    }
    let total: f64 = atoms.iter().map(|a| a.1).sum();
    let merged = DiscreteMeasure::new(space.clone(), atoms)?;
    let kept = merged.atoms().iter().filter(|a| a.mass > 1e-14 * total).map(|a| (a.point.clone(), a.mass)).collect();
    DiscreteMeasure::new(space.clone(), kept)
}

/// Fixed-point iteration from `mu0` (default: the weighted mixture of the
/// inputs). Every accepted iterate lowers `J`; the best one is returned.
pub fn barycenter_fixed_point(
    mu0: Option<&DiscreteMeasure>,
    mus: &[DiscreteMeasure],
    lambdas: &[f64],
    opts: &FixedPointOptions,
) -> Result<FixedPointResult> {
    if mus.is_empty() {
        return invalid("need at least one measure");
    }
    check_weights(lambdas, mus.len(), 1e-9)?;
    let space = mus[0].space();
    if mus.iter().any(|m| m.space() != space) {
        return Err(HkError::SpaceMismatch);
    }
    let mut mu = match mu0 {
        Some(m) => {
            if m.space() != space {
                return Err(HkError::SpaceMismatch);
            }
            m.clone()
        }
        None => {
            let mut acc = DiscreteMeasure::null(space.clone());
            for (m, l) in mus.iter().zip(lambdas) {
                acc = acc.add(&m.scaled(*l)?)?;
            }
            acc
        }
    };
    if mu.is_null() {
        return invalid("the initial measure must be nonnull");
    }
    let (mut plans, mut j) = evaluate(&mu, mus, lambdas, &opts.solver)?;
    let mut history = vec![j];
    for it in 1..=opts.max_outer {
        let next = step(&mu, &plans, mus, lambdas, opts)?;
        if next.is_null() {
            let jn: f64 = mus.iter().zip(lambdas).map(|(m, l)| l * m.total_mass()).sum();
            let done = jn >= j - opts.tolerance;
            if jn < j {
                mu = next;
                j = jn;
                history.push(j);
            }
            return Ok(FixedPointResult { measure: mu, objective: j, iterations: it, history, converged: done });
        }
        let (next_plans, jn) = evaluate(&next, mus, lambdas, &opts.solver)?;
        if jn >= j - opts.tolerance {
            if jn < j {
                mu = next;
                j = jn;
                history.push(j);
            }
            return Ok(FixedPointResult { measure: mu, objective: j, iterations: it, history, converged: true });
        }
        mu = next;
        plans = next_plans;
        j = jn;
        history.push(j);
    }
    Ok(FixedPointResult { measure: mu, objective: j, iterations: opts.max_outer, history, converged: false })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::space::GroundSpace;
    use std::f64::consts::{FRAC_PI_2, PI};

    fn line() -> GroundSpace {
        GroundSpace::euclidean(1).unwrap()
    }

    fn uniform(a: f64, b: f64, n: usize) -> DiscreteMeasure {
        let h = (b - a) / n as f64;
        let atoms = (0..n).map(|k| (Point::scalar(a + (k as f64 + 0.5) * h), h)).collect();
        DiscreteMeasure::new(line(), atoms).unwrap()
    }

    #[test]
    fn identical_inputs_are_fixed() {
        let mu = DiscreteMeasure::new(line(), vec![(Point::scalar(0.0), 1.0), (Point::scalar(0.7), 2.0)]).unwrap();
        let r = barycenter_fixed_point(None, &[mu.clone(), mu.clone()], &[0.5, 0.5], &FixedPointOptions::default())
            .unwrap();
        assert!(r.objective < 1e-9, "{}", r.objective);
        assert!((r.measure.total_mass() - 3.0).abs() < 1e-6);
    }

    #[test]
    fn separated_intervals_quarter_each() {
        let mu1 = uniform(-1.0 - PI, -PI, 20);
        let mu2 = uniform(PI, PI + 1.0, 20);
        let r = barycenter_fixed_point(None, &[mu1, mu2], &[0.5, 0.5], &FixedPointOptions::default()).unwrap();
        assert!((r.objective - 0.5).abs() < 1e-6, "{}", r.objective);
        let left: f64 = r.measure.restrict(|p| p.coords().unwrap()[0] < 0.0).total_mass();
        let right: f64 = r.measure.restrict(|p| p.coords().unwrap()[0] > 0.0).total_mass();
        assert!((left - 0.25).abs() < 1e-6 && (right - 0.25).abs() < 1e-6, "{left} {right}");
        for w in r.history.windows(2) {
            assert!(w[1] <= w[0]);
        }
    }

    #[test]
    fn quarter_turn_diracs() {
        for t in [0.25, 0.5, 0.75] {
            let mu1 = DiscreteMeasure::dirac(line(), Point::scalar(0.0), 1.0).unwrap();
            let mu2 = DiscreteMeasure::dirac(line(), Point::scalar(FRAC_PI_2), 1.0).unwrap();
            let r = barycenter_fixed_point(None, &[mu1, mu2], &[1.0 - t, t], &FixedPointOptions::default()).unwrap();
            assert!((r.objective - 2.0 * t * (1.0 - t)).abs() < 1e-5, "t={t}: {}", r.objective);
        }
    }
}
