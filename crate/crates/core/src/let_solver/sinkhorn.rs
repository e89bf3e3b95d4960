use super::polish::tree_polish;
use super::{feasible_dual, objective_with, CostMatrix, SolverOptions, ROUNDING_REL};

/// Pairs whose reduced cost exceeds this many ε are dropped for a level.
const PRUNE: f64 = 50.0;
const CHECK_EVERY: usize = 10;
/// Polish is tried once ε is at or below this level.
const POLISH_FROM: f64 = 0.1;

pub(super) struct Outcome {
    pub entries: Vec<f64>,
    pub primal: f64,
    pub dual: f64,
    pub iterations: usize,
    pub epsilons: Vec<f64>,
    pub path: Vec<f64>,
    pub polished: bool,
    pub converged: bool,
}

/// Sparse active pairs in both row-major and column-major order.
struct Active {
    row_ptr: Vec<usize>,
    row_col: Vec<usize>,
    row_ell: Vec<f64>,
    col_ptr: Vec<usize>,
    col_row: Vec<usize>,
    col_ell: Vec<f64>,
}

impl Active {
    fn build(cost: &CostMatrix, f: &[f64], g: &[f64], eps: f64) -> Self {
        let (n, m) = (cost.rows, cost.cols);
        let mut keep = vec![false; n * m];
        let mut col_best = vec![(f64::INFINITY, usize::MAX); m];
        for j in 0..n {
            let mut best = (f64::INFINITY, usize::MAX);
            for k in 0..m {
                let l = cost.ell(j, k);
                if l.is_infinite() {
                    continue;
                }
                let r = l - f[j] - g[k];
                if r <= PRUNE * eps {
                    keep[j * m + k] = true;
                }
                if r < best.0 {
                    best = (r, k);
                }
                if r < col_best[k].0 {
                    col_best[k] = (r, j);
                }
            }
            if best.1 != usize::MAX {
                keep[j * m + best.1] = true;
            }
        }
        for (k, &(_, j)) in col_best.iter().enumerate() {
            if j != usize::MAX {
                keep[j * m + k] = true;
            }
        }
        let mut row_ptr = vec![0];
        let (mut row_col, mut row_ell) = (Vec::new(), Vec::new());
        let mut col_count = vec![0usize; m];
        for j in 0..n {
            for k in 0..m {
                if keep[j * m + k] {
                    row_col.push(k);
                    row_ell.push(cost.ell(j, k));
                    col_count[k] += 1;
                }
            }
            row_ptr.push(row_col.len());
        }
        let mut col_ptr = vec![0usize; m + 1];
        for k in 0..m {
            col_ptr[k + 1] = col_ptr[k] + col_count[k];
        }
        let mut fill = col_ptr.clone();
        let mut col_row = vec![0; row_col.len()];
        let mut col_ell = vec![0.0; row_col.len()];
        for j in 0..n {
            for idx in row_ptr[j]..row_ptr[j + 1] {
                let k = row_col[idx];
                col_row[fill[k]] = j;
                col_ell[fill[k]] = row_ell[idx];
                fill[k] += 1;
            }
        }
        Active { row_ptr, row_col, row_ell, col_ptr, col_row, col_ell }
    }
}

/// `log Σ exp(t_i)` over an iterator, `−∞` when empty.
fn log_sum_exp(terms: impl Iterator<Item = f64> + Clone) -> f64 {
    let max = terms.clone().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + terms.map(|t| (t - max).exp()).sum::<f64>().ln()
}

struct State<'a> {
    a: &'a [f64],
    b: &'a [f64],
    log_a: Vec<f64>,
    log_b: Vec<f64>,
    f: Vec<f64>,
    g: Vec<f64>,
    live_rows: Vec<bool>,
    live_cols: Vec<bool>,
}

impl State<'_> {
    fn sweep(&mut self, act: &Active, eps: f64) {
        let scale = eps / (1.0 + eps);
        for j in 0..self.f.len() {
            if !self.live_rows[j] {
                continue;
            }
            let range = act.row_ptr[j]..act.row_ptr[j + 1];
            let g = &self.g;
            let lb = &self.log_b;
            let lse = log_sum_exp(range.map(|i| {
                let k = act.row_col[i];
                lb[k] + (g[k] - act.row_ell[i]) / eps
            }));
            self.f[j] = -scale * lse;
        }
        for k in 0..self.g.len() {
            if !self.live_cols[k] {
                continue;
            }
            let range = act.col_ptr[k]..act.col_ptr[k + 1];
            let f = &self.f;
            let la = &self.log_a;
            let lse = log_sum_exp(range.map(|i| {
                let j = act.col_row[i];
                la[j] + (f[j] - act.col_ell[i]) / eps
            }));
            self.g[k] = -scale * lse;
        }
        self.translate();
    }

    /// Exact maximization of the dual along `(f + τ, g − τ)`.
    fn translate(&mut self) {
        let la = log_sum_exp(
            self.f.iter().zip(&self.log_a).filter(|(f, _)| f.is_finite()).map(|(f, a)| a - f),
        );
        let lb = log_sum_exp(
            self.g.iter().zip(&self.log_b).filter(|(g, _)| g.is_finite()).map(|(g, b)| b - g),
        );
        if !la.is_finite() || !lb.is_finite() {
            return;
        }
        let tau = 0.5 * (la - lb);
        self.f.iter_mut().filter(|f| f.is_finite()).for_each(|f| *f += tau);
        self.g.iter_mut().filter(|g| g.is_finite()).for_each(|g| *g -= tau);
    }

    /// `Σ |γ₁ − a e^{−f}| + Σ |γ₂ − b e^{−g}|` on the active pairs.
    fn drift(&self, act: &Active, eps: f64) -> f64 {
        let mut cols = vec![0.0; self.g.len()];
        let mut total = 0.0;
        for j in 0..self.f.len() {
            if !self.live_rows[j] {
                continue;
            }
            let mut row = 0.0;
            for i in act.row_ptr[j]..act.row_ptr[j + 1] {
                let k = act.row_col[i];
                let e = self.a[j] * self.b[k] * ((self.f[j] + self.g[k] - act.row_ell[i]) / eps).exp();
                row += e;
                cols[k] += e;
            }
            total += (row - self.a[j] * (-self.f[j]).exp()).abs();
        }
        for k in 0..self.g.len() {
            if self.live_cols[k] {
                total += (cols[k] - self.b[k] * (-self.g[k]).exp()).abs();
            }
        }
        total
    }

    fn plan(&self, cost: &CostMatrix, eps: f64) -> Vec<f64> {
        let (n, m) = (cost.rows, cost.cols);
        let mut entries = vec![0.0; n * m];
        for j in 0..n {
            if !self.live_rows[j] {
                continue;
            }
            for k in 0..m {
                let l = cost.ell(j, k);
                if l.is_finite() && self.live_cols[k] {
                    entries[j * m + k] = self.a[j] * self.b[k] * ((self.f[j] + self.g[k] - l) / eps).exp();
                }
            }
        }
        let cut = ROUNDING_REL * entries.iter().sum::<f64>();
        entries.iter_mut().filter(|e| **e < cut || !e.is_finite()).for_each(|e| *e = 0.0);
        entries
    }
}

fn schedule(opts: &SolverOptions) -> (Vec<f64>, Vec<f64>) {
    let mut main = Vec::new();
    let mut eps = opts.epsilon_start;
    while eps >= opts.epsilon_end * (1.0 - 1e-12) {
        main.push(eps);
        eps *= opts.epsilon_factor;
    }
    if main.last().is_none_or(|&e| e > opts.epsilon_end * (1.0 + 1e-12)) {
        main.push(opts.epsilon_end);
    }
    let mut extra = Vec::new();
    let mut eps = opts.epsilon_end * opts.epsilon_factor;
    while eps >= opts.epsilon_floor {
        extra.push(eps);
        eps *= opts.epsilon_factor;
    }
    (main, extra)
}

pub(super) fn anneal(cost: &CostMatrix, a: &[f64], b: &[f64], opts: &SolverOptions) -> Outcome {
    let (n, m) = (cost.rows, cost.cols);
    let live_rows: Vec<bool> = (0..n).map(|j| (0..m).any(|k| cost.ell(j, k).is_finite())).collect();
    let live_cols: Vec<bool> = (0..m).map(|k| (0..n).any(|j| cost.ell(j, k).is_finite())).collect();
    let mut st = State {
        a,
        b,
        log_a: a.iter().map(|x| x.ln()).collect(),
        log_b: b.iter().map(|x| x.ln()).collect(),
        f: live_rows.iter().map(|&l| if l { 0.0 } else { f64::INFINITY }).collect(),
        g: live_cols.iter().map(|&l| if l { 0.0 } else { f64::INFINITY }).collect(),
        live_rows,
        live_cols,
    };
    let total: f64 = a.iter().sum::<f64>() + b.iter().sum::<f64>();
    let target = opts.tolerance * total.max(1.0);
    let drift_target = opts.drift_tolerance * (1.0 + total);

    let zero = vec![0.0; n * m];
    let mut best = Outcome {
        primal: objective_with(cost, a, b, &zero),
        entries: zero,
        dual: f64::NEG_INFINITY,
        iterations: 0,
        epsilons: Vec::new(),
        path: Vec::new(),
        polished: false,
        converged: false,
    };
    let (main, extra) = schedule(opts);
    let main_len = main.len();
    for (stage, eps) in main.into_iter().chain(extra).enumerate() {
        if stage >= main_len && best.primal - best.dual <= target {
            break;
        }
        if best.iterations >= opts.max_iterations {
            break;
        }
        let act = Active::build(cost, &st.f, &st.g, eps);
        let mut inner = 0;
        while inner < opts.inner_iterations && best.iterations < opts.max_iterations {
            st.sweep(&act, eps);
            inner += 1;
            best.iterations += 1;
            if inner % CHECK_EVERY == 0 && st.drift(&act, eps) < drift_target {
                break;
            }
        }
        let entries = st.plan(cost, eps);
        let primal = objective_with(cost, a, b, &entries);
        let dual = feasible_dual(cost, a, b, &st.f);
        best.epsilons.push(eps);
        best.path.push(primal);
        best.dual = best.dual.max(dual);
        if primal < best.primal {
            best.primal = primal;
            best.entries = entries.clone();
            best.polished = false;
        }
        if opts.polish && eps <= POLISH_FROM {
            if let Some(p) = tree_polish(cost, a, b, &entries, &st.live_rows, &st.live_cols) {
                let pp = objective_with(cost, a, b, &p.entries);
                best.dual = best.dual.max(feasible_dual(cost, a, b, &p.phi));
                if pp < best.primal {
                    best.primal = pp;
                    best.entries = p.entries;
                    best.polished = true;
                }
            }
        }
        if best.primal - best.dual <= target {
            best.converged = true;
            break;
        }
    }
    best.converged = best.primal - best.dual <= target;
    best
}
