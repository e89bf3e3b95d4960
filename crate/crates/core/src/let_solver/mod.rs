//! `HK²(μ₁, μ₂) = LET(μ₁, μ₂)` on discrete measures.
//!
//! [`hk_solve`] runs annealed KL-proximal scaling iterations on the kernel
//! `exp(−ℓ(d)/ε)`, evaluates the unregularized objective on the rounded plan,
//! and tries to snap the plan onto an exact spanning-forest solution of the
//! optimality system `σ₁σ₂ = cos²(d ∧ π/2)` once ε is small. Every answer is
//! accompanied by a feasible dual value, so the reported gap bounds the error.

mod oracle;
mod polish;
mod sinkhorn;

use serde::Serialize;

use crate::error::{HkError, NonConvergence, Result};
use crate::measure::DiscreteMeasure;
use crate::space::{cos2_half_pi, ell_cost, GroundSpace, Point};

pub use oracle::{let_oracle, OracleOptions, ORACLE_MAX_ATOMS};

/// Plan entries below this fraction of the plan's total mass are zeroed.
pub const ROUNDING_REL: f64 = 1e-14;

/// `F(s) = s log s − s + 1` with `F(0) = 1`.
pub fn let_entropy(s: f64) -> Result<f64> {
    if s.is_nan() || s < 0.0 {
        return Err(HkError::InvalidInput(format!("entropy argument must be nonnegative, got {s}")));
    }
    Ok(entropy(s))
}

#[inline]
pub(crate) fn entropy(s: f64) -> f64 {
    if s == 0.0 {
        1.0
    } else {
        s * s.ln() - s + 1.0
    }
}

/// Pairwise `ℓ(d)` and `cos²(d ∧ π/2)` between two supports.
#[derive(Debug, Clone)]
pub struct CostMatrix {
    pub rows: usize,
    pub cols: usize,
    pub ell: Vec<f64>,
    pub cos2: Vec<f64>,
}

impl CostMatrix {
    pub fn between(mu1: &DiscreteMeasure, mu2: &DiscreteMeasure) -> Result<Self> {
        if mu1.space() != mu2.space() {
            return Err(HkError::SpaceMismatch);
        }
        Ok(Self::from_points(mu1.space(), &mu1.points(), &mu2.points()))
    }

    pub fn from_points(space: &GroundSpace, xs: &[Point], ys: &[Point]) -> Self {
        let (rows, cols) = (xs.len(), ys.len());
        let mut ell = Vec::with_capacity(rows * cols);
        let mut cos2 = Vec::with_capacity(rows * cols);
        for x in xs {
            for y in ys {
                let d = space.dist(x, y);
                ell.push(ell_cost(d));
                cos2.push(cos2_half_pi(d));
            }
        }
        CostMatrix { rows, cols, ell, cos2 }
    }

    #[inline]
    pub fn ell(&self, j: usize, k: usize) -> f64 {
        self.ell[j * self.cols + k]
    }

    #[inline]
    pub fn cos2(&self, j: usize, k: usize) -> f64 {
        self.cos2[j * self.cols + k]
    }
}

/// A nonnegative coupling between the atoms of two discrete measures, with
/// its marginals and their densities `σ₁ = γ₁/μ₁`, `σ₂ = γ₂/μ₂`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TransportPlan {
    pub rows: usize,
    pub cols: usize,
    pub entries: Vec<f64>,
    pub marginal1: Vec<f64>,
    pub marginal2: Vec<f64>,
    pub sigma1: Vec<f64>,
    pub sigma2: Vec<f64>,
}

impl TransportPlan {
    /// Builds a plan from row-major entries and the reference masses.
    pub fn new(entries: Vec<f64>, mass1: &[f64], mass2: &[f64]) -> Result<Self> {
        let (rows, cols) = (mass1.len(), mass2.len());
        if entries.len() != rows * cols {
            return Err(HkError::DimensionMismatch { expected: rows * cols, found: entries.len() });
        }
        if let Some(e) = entries.iter().find(|e| !(**e >= 0.0) || !e.is_finite()) {
            return Err(HkError::InvalidInput(format!("plan entry {e} is not a finite nonnegative number")));
        }
        let mut marginal1 = vec![0.0; rows];
        let mut marginal2 = vec![0.0; cols];
        for j in 0..rows {
            for k in 0..cols {
                let e = entries[j * cols + k];
                marginal1[j] += e;
                marginal2[k] += e;
            }
        }
        let sigma1 = marginal1.iter().zip(mass1).map(|(m, a)| m / a).collect();
        let sigma2 = marginal2.iter().zip(mass2).map(|(m, b)| m / b).collect();
        Ok(TransportPlan { rows, cols, entries, marginal1, marginal2, sigma1, sigma2 })
    }

    pub fn zero(mass1: &[f64], mass2: &[f64]) -> Self {
        Self::new(vec![0.0; mass1.len() * mass2.len()], mass1, mass2).unwrap()
    }

    /// `(Id, Id)_# (c · μ)` for two measures with the same support order.
    pub fn diagonal(mass1: &[f64], mass2: &[f64], diag: &[f64]) -> Result<Self> {
        let n = mass1.len();
        if mass2.len() != n || diag.len() != n {
            return Err(HkError::DimensionMismatch { expected: n, found: mass2.len().min(diag.len()) });
        }
        let mut entries = vec![0.0; n * n];
        for (j, d) in diag.iter().enumerate() {
            entries[j * n + j] = *d;
        }
        Self::new(entries, mass1, mass2)
    }

    #[inline]
    pub fn get(&self, j: usize, k: usize) -> f64 {
        self.entries[j * self.cols + k]
    }

    pub fn total_mass(&self) -> f64 {
        self.marginal1.iter().sum()
    }

    pub fn nonzeros(&self) -> usize {
        self.entries.iter().filter(|e| **e > 0.0).count()
    }
}

/// Worst violations of the optimality system over `A₁ × A₂`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OptimalityCertificate {
    /// `max (cos² − σ₁σ₂)⁺` over pairs the plan does not charge.
    pub off_support: f64,
    /// `max |σ₁σ₂ − cos²|` over pairs the plan charges.
    pub on_support: f64,
}

impl OptimalityCertificate {
    pub fn passes(&self, tol: f64) -> bool {
        self.off_support <= tol && self.on_support <= tol
    }

    pub fn max_violation(&self) -> f64 {
        self.off_support.max(self.on_support)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    ClosedForm,
    Scaling,
    Oracle,
}

/// Audit trail of a solver call.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolveReport {
    /// Unregularized LET objective of the returned plan, i.e. `HK²`.
    pub primal: f64,
    /// Best dual lower bound found.
    pub dual: f64,
    pub gap: f64,
    pub method: Method,
    pub iterations: usize,
    /// Regularization levels visited, in order.
    pub epsilons: Vec<f64>,
    /// De-biased primal value after each regularization level.
    pub path: Vec<f64>,
    /// Whether the returned plan came from the exact spanning-forest polish.
    pub polished: bool,
    pub certificate: OptimalityCertificate,
}

impl SolveReport {
    /// `HK = sqrt(HK²)`.
    pub fn hk(&self) -> f64 {
        self.primal.max(0.0).sqrt()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolverOptions {
    /// Target duality gap, relative to `max(1, μ₁(X) + μ₂(X))`.
    pub tolerance: f64,
    /// Budget of scaling iterations across all regularization levels.
    pub max_iterations: usize,
    pub epsilon_start: f64,
    pub epsilon_end: f64,
    pub epsilon_factor: f64,
    /// Maximum scaling iterations per regularization level.
    pub inner_iterations: usize,
    /// A level ends once the plan marginals move less than this.
    pub drift_tolerance: f64,
    /// Levels below `epsilon_end` are appended down to this floor while the
    /// gap is above tolerance.
    pub epsilon_floor: f64,
    pub polish: bool,
    pub seed: u64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            tolerance: 1e-9,
            max_iterations: 400_000,
            epsilon_start: 1.0,
            epsilon_end: 1e-3,
            epsilon_factor: 0.5,
            inner_iterations: 2000,
            drift_tolerance: 1e-10,
            epsilon_floor: 1e-8,
            polish: true,
            seed: 42,
        }
    }
}

impl SolverOptions {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(HkError::InvalidInput(format!("solver options: {m}")));
        if !(self.tolerance > 0.0) {
            return bad("tolerance must be positive");
        }
        if !(self.epsilon_start > 0.0 && self.epsilon_end > 0.0 && self.epsilon_end <= self.epsilon_start) {
            return bad("epsilon schedule must satisfy 0 < end <= start");
        }
        if !(self.epsilon_factor > 0.0 && self.epsilon_factor < 1.0) {
            return bad("epsilon factor must lie in (0, 1)");
        }
        if !(self.epsilon_floor > 0.0) || !(self.drift_tolerance > 0.0) {
            return bad("epsilon floor and drift tolerance must be positive");
        }
        if self.max_iterations == 0 || self.inner_iterations == 0 {
            return bad("iteration budgets must be positive");
        }
        Ok(())
    }
}

pub(crate) fn objective_with(cost: &CostMatrix, a: &[f64], b: &[f64], entries: &[f64]) -> f64 {
    let (n, m) = (cost.rows, cost.cols);
    let mut rows = vec![0.0; n];
    let mut cols = vec![0.0; m];
    let mut transport = 0.0;
    for j in 0..n {
        for k in 0..m {
            let e = entries[j * m + k];
            if e > 0.0 {
                let l = cost.ell(j, k);
                if l.is_infinite() {
                    return f64::INFINITY;
                }
                transport += l * e;
                rows[j] += e;
                cols[k] += e;
            }
        }
    }
    let ent1: f64 = rows.iter().zip(a).map(|(r, a)| a * entropy(r / a)).sum();
    let ent2: f64 = cols.iter().zip(b).map(|(c, b)| b * entropy(c / b)).sum();
    ent1 + ent2 + transport
}

/// The LET functional `Σ_i ∫ F(σ_i) dμ_i + ∫ ℓ(d) dγ` of a plan.
pub fn let_objective(mu1: &DiscreteMeasure, mu2: &DiscreteMeasure, plan: &TransportPlan) -> Result<f64> {
    if plan.rows != mu1.len() || plan.cols != mu2.len() {
        return Err(HkError::DimensionMismatch { expected: mu1.len() * mu2.len(), found: plan.rows * plan.cols });
    }
    let cost = CostMatrix::between(mu1, mu2)?;
    Ok(objective_with(&cost, &mu1.masses(), &mu2.masses(), &plan.entries))
}

pub(crate) fn certify_with(cost: &CostMatrix, plan: &TransportPlan, support_threshold: f64) -> OptimalityCertificate {
    let mut off: f64 = 0.0;
    let mut on: f64 = 0.0;
    let cut = support_threshold * plan.total_mass();
    for j in 0..plan.rows {
        let s1 = plan.sigma1[j];
        if s1 <= 0.0 {
            continue;
        }
        for k in 0..plan.cols {
            let s2 = plan.sigma2[k];
            if s2 <= 0.0 {
                continue;
            }
            let c2 = cost.cos2(j, k);
            let prod = s1 * s2;
            if plan.get(j, k) > cut {
                on = on.max((prod - c2).abs());
            } else {
                off = off.max(c2 - prod);
            }
        }
    }
    OptimalityCertificate { off_support: off, on_support: on }
}

/// Checks `σ₁σ₂ ≥ cos²` on `A₁ × A₂` and `σ₁σ₂ = cos²` where the plan
/// carries more than `support_threshold` of its mass.
pub fn certify(
    plan: &TransportPlan,
    mu1: &DiscreteMeasure,
    mu2: &DiscreteMeasure,
    support_threshold: f64,
) -> Result<OptimalityCertificate> {
    if plan.rows != mu1.len() || plan.cols != mu2.len() {
        return Err(HkError::DimensionMismatch { expected: mu1.len() * mu2.len(), found: plan.rows * plan.cols });
    }
    let cost = CostMatrix::between(mu1, mu2)?;
    Ok(certify_with(&cost, plan, support_threshold))
}

/// Closed form of `HK²(a δ_{x₀}, a₁ δ_{x₀} + b₁ δ_{x₁})`.
pub fn hk_dirac_formula(space: &GroundSpace, a: f64, x0: &Point, a1: f64, b1: f64, x1: &Point) -> Result<f64> {
    for m in [a, a1, b1] {
        if m.is_nan() || m < 0.0 {
            return Err(HkError::NegativeMass(m));
        }
    }
    let c2 = cos2_half_pi(space.distance(x0, x1)?);
    Ok((a + a1 + b1 - 2.0 * (a * (a1 + b1 * c2)).sqrt()).max(0.0))
}

/// Dual value `Σ a(1 − e^{−φ}) + Σ b(1 − e^{−ψ})` after tightening `φ`
/// by two c-transforms so the pair is feasible for `φ ⊕ ψ ≤ ℓ`.
pub(crate) fn feasible_dual(cost: &CostMatrix, a: &[f64], b: &[f64], phi: &[f64]) -> f64 {
    let (n, m) = (cost.rows, cost.cols);
    let mut psi = vec![f64::INFINITY; m];
    for j in 0..n {
        if !phi[j].is_finite() {
            continue;
        }
        for (k, p) in psi.iter_mut().enumerate() {
            let l = cost.ell(j, k);
            if l.is_finite() {
                *p = p.min(l - phi[j]);
            }
        }
    }
    let mut phi2 = vec![f64::INFINITY; n];
    for (j, f) in phi2.iter_mut().enumerate() {
        for k in 0..m {
            let l = cost.ell(j, k);
            if l.is_finite() && psi[k].is_finite() {
                *f = f.min(l - psi[k]);
            }
        }
    }
    let part = |w: &[f64], pot: &[f64]| -> f64 {
        w.iter()
            .zip(pot)
            .map(|(w, p)| if p.is_infinite() { *w } else { w * (-(-p).exp_m1()) })
            .sum()
    };
    part(a, &phi2) + part(b, &psi)
}

/// Solves `HK²(μ₁, μ₂)` and returns an optimal plan with its report.
///
/// On budget exhaustion the error carries the best plan found.
pub fn hk_solve(
    mu1: &DiscreteMeasure,
    mu2: &DiscreteMeasure,
    opts: &SolverOptions,
) -> Result<(TransportPlan, SolveReport)> {
    opts.validate()?;
    let cost = CostMatrix::between(mu1, mu2)?;
    let (a, b) = (mu1.masses(), mu2.masses());
    let total = mu1.total_mass() + mu2.total_mass();
    if a.is_empty() || b.is_empty() || cost.ell.iter().all(|l| l.is_infinite()) {
        let plan = TransportPlan::zero(&a, &b);
        let report = SolveReport {
            primal: total,
            dual: total,
            gap: 0.0,
            method: Method::ClosedForm,
            iterations: 0,
            epsilons: Vec::new(),
            path: Vec::new(),
            polished: false,
            certificate: certify_with(&cost, &plan, ROUNDING_REL),
        };
        return Ok((plan, report));
    }
    let outcome = sinkhorn::anneal(&cost, &a, &b, opts);
    let plan = TransportPlan::new(outcome.entries, &a, &b)?;
    let certificate = certify_with(&cost, &plan, ROUNDING_REL);
    let report = SolveReport {
        primal: outcome.primal,
        dual: outcome.dual,
        gap: (outcome.primal - outcome.dual).max(0.0),
        method: Method::Scaling,
        iterations: outcome.iterations,
        epsilons: outcome.epsilons,
        path: outcome.path,
        polished: outcome.polished,
        certificate,
    };
    if outcome.converged {
        Ok((plan, report))
    } else {
        Err(HkError::NonConvergence(Box::new(NonConvergence { plan, report })))
    }
}

/// `HK²` value only; non-convergence falls back to the best iterate.
pub fn hk2(mu1: &DiscreteMeasure, mu2: &DiscreteMeasure, opts: &SolverOptions) -> Result<f64> {
    match hk_solve(mu1, mu2, opts) {
        Ok((_, r)) => Ok(r.primal),
        Err(HkError::NonConvergence(nc)) => Ok(nc.report.primal),
        Err(e) => Err(e),
    }
}
