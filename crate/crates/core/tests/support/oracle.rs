//! Independent checks for small multimarginal instances on the line.

use hk_core::MultimarginalSolution;

fn cos_plus(d: f64) -> f64 {
    if d >= std::f64::consts::FRAC_PI_2 {
        0.0
    } else {
        d.cos()
    }
}

/// Exact `max_x a cos⁺|x − x1| + b cos⁺|x − x2|` on the line.
fn best_pair(a: f64, b: f64, x1: f64, x2: f64) -> f64 {
    let d = (x2 - x1).abs();
    let f = |u: f64| a * cos_plus(u.abs()) + b * cos_plus((d - u).abs());
    let mut best = f(0.0).max(f(d));
    if d < std::f64::consts::PI {
        let phi = (b * d.sin()).atan2(a + b * d.cos());
        let lo = (d - std::f64::consts::FRAC_PI_2).max(0.0);
        let hi = d.min(std::f64::consts::FRAC_PI_2);
        if lo <= hi {
            best = best.max(f(phi.clamp(lo, hi)));
        }
    }
    best
}

/// Exhaustive search over a 20-step grid of tuple splits for two measures
/// with at most two atoms each.
pub fn grid_two(x: [&[f64]; 2], m: [&[f64]; 2], l: [f64; 2]) -> f64 {
    const N: usize = 20;
    let (n1, n2) = (x[0].len(), x[1].len());
    let tuples: Vec<(usize, usize)> = (0..n1).flat_map(|j| (0..n2).map(move |k| (j, k))).collect();
    let base = l[0] * m[0].iter().sum::<f64>() + l[1] * m[1].iter().sum::<f64>();
    // Block (1, j) splits over k, block (2, k) over j; grid index per block.
    let blocks = n1 + n2;
    let mut best = f64::INFINITY;
    let total = (N + 1).pow(blocks as u32);
    for code in 0..total {
        let mut c = code;
        let mut frac = vec![0.0; blocks];
        for f in frac.iter_mut() {
            *f = (c % (N + 1)) as f64 / N as f64;
            c /= N + 1;
        }
        let share = |block: usize, pos: usize, len: usize| -> f64 {
            if len == 1 {
                1.0
            } else if pos == 0 {
                frac[block]
            } else {
                1.0 - frac[block]
            }
        };
        let mut gain = 0.0;
        for &(j, k) in &tuples {
            let q1 = m[0][j] * share(j, k, n2);
            let q2 = m[1][k] * share(n1 + k, j, n1);
            let b = best_pair(l[0] * q1.sqrt(), l[1] * q2.sqrt(), x[0][j], x[1][k]);
            gain += b * b;
        }
        best = best.min(base - gain);
    }
    best
}

/// Lower bound from the solver's multipliers after checking the pricing
/// inequality on a dense grid, widened by its Lipschitz slack.
pub fn verified_lower_bound(sol: &MultimarginalSolution, x: &[Vec<f64>], m: &[Vec<f64>]) -> f64 {
    let lo = x.iter().flatten().cloned().fold(f64::INFINITY, f64::min) - 2.0;
    let hi = x.iter().flatten().cloned().fold(f64::NEG_INFINITY, f64::max) + 2.0;
    let nu = &sol.multipliers;
    let l = &sol.lambdas;
    let mut lip = 0.0;
    for i in 0..x.len() {
        lip += nu[i].iter().map(|n| l[i] * l[i] / n).fold(0.0, f64::max);
    }
    let h = 1e-5;
    let steps = ((hi - lo) / h) as usize + 1;
    let mut pmax: f64 = 0.0;
    for s in 0..=steps {
        let y = lo + s as f64 * h;
        let mut p = 0.0;
        for i in 0..x.len() {
            p += x[i]
                .iter()
                .zip(&nu[i])
                .map(|(xk, n)| (l[i] * cos_plus((y - xk).abs())).powi(2) / n)
                .fold(0.0, f64::max);
        }
        pmax = pmax.max(p);
    }
    let c = (pmax + lip * h / 2.0).max(1.0);
    let base: f64 = (0..x.len()).map(|i| l[i] * m[i].iter().sum::<f64>()).sum();
    let spent: f64 = (0..x.len()).map(|i| nu[i].iter().zip(&m[i]).map(|(a, b)| a * b).sum::<f64>()).sum();
    base - c * spent
}
