//! Exact solution of the optimality system on a guessed support forest.
//!
//! On a tree `T`, `log σ₁(j) + log σ₂(k) = −ℓ(j, k)` for `(j, k) ∈ T` fixes
//! the log-densities up to one shift per component, and mass balance fixes
//! the shift. Flows then follow by leaf elimination. The candidate is kept
//! only if every flow is nonnegative and `σ₁σ₂ ≥ cos²` holds on all pairs,
//! which together make it optimal.
//!
//! A guess that fails either test is repaired by pivoting: a negative edge
//! leaves the forest, a violated pair enters it (dropping the lightest edge
//! that loses flow around the cycle it closes, if any).

use super::CostMatrix;

const THRESHOLDS: [f64; 3] = [1e-6, 1e-10, 0.0];
const FLOW_TOL: f64 = 1e-12;
const DUAL_TOL: f64 = 1e-10;
/// Pivot budget: a base plus one per this many nodes.
const PIVOTS_BASE: usize = 16;
const NODES_PER_PIVOT: usize = 8;

pub(super) struct Polished {
    pub entries: Vec<f64>,
    /// `−log σ₁`, `+∞` on rows without finite-cost partners.
    pub phi: Vec<f64>,
}

struct Dsu(Vec<usize>);

impl Dsu {
    fn find(&mut self, mut x: usize) -> usize {
        while self.0[x] != x {
            self.0[x] = self.0[self.0[x]];
            x = self.0[x];
        }
        x
    }

    fn union(&mut self, x: usize, y: usize) -> bool {
        let (rx, ry) = (self.find(x), self.find(y));
        if rx == ry {
            return false;
        }
        self.0[rx] = ry;
        true
    }
}

pub(super) fn tree_polish(
    cost: &CostMatrix,
    a: &[f64],
    b: &[f64],
    entries: &[f64],
    live_rows: &[bool],
    live_cols: &[bool],
) -> Option<Polished> {
    let max = entries.iter().cloned().fold(0.0, f64::max);
    if max <= 0.0 {
        return None;
    }
    let budget = PIVOTS_BASE + (cost.rows + cost.cols) / NODES_PER_PIVOT;
    THRESHOLDS.iter().find_map(|&t| {
        let forest = initial_forest(cost, entries, live_rows, live_cols, t * max)?;
        pivot(cost, a, b, forest, budget)
    })
}

/// Heaviest-first spanning forest of the entries above `cut`, with every
/// live atom attached to something.
fn initial_forest(
    cost: &CostMatrix,
    entries: &[f64],
    live_rows: &[bool],
    live_cols: &[bool],
    cut: f64,
) -> Option<Vec<(usize, usize)>> {
    let (n, m) = (cost.rows, cost.cols);
    let mut edges: Vec<(usize, usize)> =
        (0..n * m).filter(|&i| entries[i] > cut && entries[i] > 0.0).map(|i| (i / m, i % m)).collect();
    edges.sort_by(|x, y| entries[y.0 * m + y.1].total_cmp(&entries[x.0 * m + x.1]));

    let mut dsu = Dsu((0..n + m).collect());
    let mut forest = Vec::new();
    let add = |j: usize, k: usize, dsu: &mut Dsu, forest: &mut Vec<(usize, usize)>| {
        if dsu.union(j, n + k) {
            forest.push((j, k));
        }
    };
    for &(j, k) in &edges {
        add(j, k, &mut dsu, &mut forest);
    }
    // Live atoms left isolated get their heaviest (or cheapest) partner.
    let isolated_rows: Vec<usize> = (0..n).filter(|&j| live_rows[j] && !forest.iter().any(|e| e.0 == j)).collect();
    for j in isolated_rows {
        let k = (0..m).filter(|&k| cost.ell(j, k).is_finite()).max_by(|&x, &y| {
            entries[j * m + x].total_cmp(&entries[j * m + y]).then(cost.ell(j, y).total_cmp(&cost.ell(j, x)))
        })?;
        add(j, k, &mut dsu, &mut forest);
    }
    let isolated_cols: Vec<usize> = (0..m).filter(|&k| live_cols[k] && !forest.iter().any(|e| e.1 == k)).collect();
    for k in isolated_cols {
        let j = (0..n).filter(|&j| cost.ell(j, k).is_finite()).max_by(|&x, &y| {
            entries[x * m + k].total_cmp(&entries[y * m + k]).then(cost.ell(y, k).total_cmp(&cost.ell(x, k)))
        })?;
        add(j, k, &mut dsu, &mut forest);
    }
    Some(forest)
}

enum Verdict {
    Optimal(Polished),
    /// Index into the forest of the most negative flow.
    Negative(usize),
    /// Most violated pair.
    Violated(usize, usize),
}

fn pivot(cost: &CostMatrix, a: &[f64], b: &[f64], mut forest: Vec<(usize, usize)>, budget: usize) -> Option<Polished> {
    let n = cost.rows;
    for _ in 0..=budget {
        let (verdict, flows) = solve(cost, a, b, &forest);
        match verdict {
            Verdict::Optimal(p) => return Some(p),
            Verdict::Negative(e) => {
                forest.swap_remove(e);
            }
            Verdict::Violated(j, k) => {
                if let Some(path) = tree_path(&forest, n, n + cost.cols, j, n + k) {
                    // Flow pushed along (j, k) comes back through every other edge,
                    // starting at the one next to column k.
                    let drop = path.into_iter().step_by(2).min_by(|&x, &y| flows[x].total_cmp(&flows[y]))?;
                    forest.swap_remove(drop);
                }
                forest.push((j, k));
            }
        }
    }
    None
}

/// Forest edges on the path from node `u` to node `v`, `None` if they are
/// in different components.
fn tree_path(forest: &[(usize, usize)], n: usize, nodes: usize, u: usize, v: usize) -> Option<Vec<usize>> {
    let mut adj: Vec<Vec<(usize, usize)>> = vec![Vec::new(); nodes];
    for (i, &(j, k)) in forest.iter().enumerate() {
        adj[j].push((n + k, i));
        adj[n + k].push((j, i));
    }
    let mut via = vec![usize::MAX; nodes];
    let mut seen = vec![false; nodes];
    seen[u] = true;
    let mut queue = std::collections::VecDeque::from([u]);
    while let Some(x) = queue.pop_front() {
        if x == v {
            let mut path = Vec::new();
            let mut y = v;
            while y != u {
                let e = via[y];
                path.push(e);
                let (j, k) = forest[e];
                y = if y == j { n + k } else { j };
            }
            return Some(path);
        }
        for &(y, e) in &adj[x] {
            if !seen[y] {
                seen[y] = true;
                via[y] = e;
                queue.push_back(y);
            }
        }
    }
    None
}

/// Solves the optimality system on `forest`; also returns the signed flow
/// of each forest edge.
fn solve(cost: &CostMatrix, a: &[f64], b: &[f64], forest: &[(usize, usize)]) -> (Verdict, Vec<f64>) {
    let (n, m) = (cost.rows, cost.cols);
    let nodes = n + m;
    let mut adj: Vec<Vec<(usize, usize)>> = vec![Vec::new(); nodes];
    for (i, &(j, k)) in forest.iter().enumerate() {
        adj[j].push((n + k, i));
        adj[n + k].push((j, i));
    }
    let ell = |u: usize, v: usize| -> f64 {
        let (j, k) = if u < n { (u, v - n) } else { (v, u - n) };
        cost.ell(j, k)
    };
    let weight = |u: usize| if u < n { a[u] } else { b[u - n] };

    // Log-densities and a parent/order structure per component.
    let mut logd = vec![f64::NEG_INFINITY; nodes];
    let mut parent = vec![(usize::MAX, usize::MAX); nodes];
    let mut seen = vec![false; nodes];
    let mut flows = vec![0.0; forest.len()];
    let mut sub = vec![0.0; nodes];
    let mut worst: Option<(f64, usize)> = None;
    for root in 0..nodes {
        if seen[root] || adj[root].is_empty() {
            continue;
        }
        let mut order = vec![root];
        seen[root] = true;
        logd[root] = 0.0;
        let mut head = 0;
        while head < order.len() {
            let u = order[head];
            head += 1;
            for &(v, e) in &adj[u] {
                if !seen[v] {
                    seen[v] = true;
                    parent[v] = (u, e);
                    logd[v] = -ell(u, v) - logd[u];
                    order.push(v);
                }
            }
        }
        let lse = |side_row: bool| -> f64 {
            let terms: Vec<f64> = order
                .iter()
                .filter(|&&u| (u < n) == side_row)
                .map(|&u| weight(u).ln() + logd[u])
                .collect();
            let mx = terms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            mx + terms.iter().map(|t| (t - mx).exp()).sum::<f64>().ln()
        };
        let shift = 0.5 * (lse(false) - lse(true));
        for &u in &order {
            logd[u] += if u < n { shift } else { -shift };
        }
        let mut scale: f64 = 0.0;
        for &u in &order {
            let mass = weight(u) * logd[u].exp();
            scale = scale.max(mass);
            sub[u] = if u < n { mass } else { -mass };
        }
        for &u in order.iter().skip(1).rev() {
            let (p, e) = parent[u];
            let flow = if u < n { sub[u] } else { -sub[u] };
            flows[e] = flow;
            let rel = flow / scale.max(1.0);
            if rel < -FLOW_TOL && worst.is_none_or(|(w, _)| rel < w) {
                worst = Some((rel, e));
            }
            sub[p] += sub[u];
        }
    }
    if let Some((_, e)) = worst {
        return (Verdict::Negative(e), flows);
    }

    let mut violated: Option<(f64, usize, usize)> = None;
    for j in 0..n {
        for k in 0..m {
            let l = cost.ell(j, k);
            if !l.is_finite() {
                continue;
            }
            let r = logd[j] + logd[n + k] + l;
            if r < -DUAL_TOL && violated.is_none_or(|(w, _, _)| r < w) {
                violated = Some((r, j, k));
            }
        }
    }
    if let Some((_, j, k)) = violated {
        return (Verdict::Violated(j, k), flows);
    }
    let mut entries = vec![0.0; n * m];
    for (&(j, k), &f) in forest.iter().zip(&flows) {
        entries[j * m + k] = f.max(0.0);
    }
    let phi = (0..n).map(|j| if logd[j].is_finite() { -logd[j] } else { f64::INFINITY }).collect();
    (Verdict::Optimal(Polished { entries, phi }), flows)
}
