//! Derivative-free local search used by the barycenter point searches.

/// Box-projected Nelder-Mead maximization of `f` started at `x0`.
///
/// Points are clamped into `[lo, hi]` before evaluation, so the returned
/// point always lies in the box. Returns the best point and its value.
pub fn nelder_mead_max(
    f: &impl Fn(&[f64]) -> f64,
    x0: &[f64],
    lo: &[f64],
    hi: &[f64],
    step: f64,
    max_evals: usize,
) -> (Vec<f64>, f64) {
    let n = x0.len();
    let clamp = |x: &mut Vec<f64>| {
        for i in 0..n {
            x[i] = x[i].clamp(lo[i], hi[i]);
        }
    };
    let eval = |x: &[f64]| -> f64 {
        let v = f(x);
        if v.is_nan() {
            f64::NEG_INFINITY
        } else {
            v
        }
    };
    let mut start = x0.to_vec();
    clamp(&mut start);
    if n == 0 {
        let v = eval(&start);
        return (start, v);
    }
    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(n + 1);
    simplex.push((start.clone(), eval(&start)));
    for i in 0..n {
        let mut x = start.clone();
        let width = hi[i] - lo[i];
        let mut s = step.min(width.max(0.0));
        if x[i] + s > hi[i] {
            s = -s;
        }
        x[i] += s;
        clamp(&mut x);
        let v = eval(&x);
        simplex.push((x, v));
    }
    let mut evals = n + 1;
    while evals < max_evals {
        simplex.sort_by(|a, b| b.1.total_cmp(&a.1));
        let best = simplex[0].1;
        let worst = simplex[n].1;
        let size = simplex[1..]
            .iter()
            .map(|(x, _)| x.iter().zip(&simplex[0].0).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
            .fold(0.0, f64::max);
        if size < 1e-13 || (best - worst).abs() <= 1e-16 * (1.0 + best.abs()) && size < 1e-9 {
            break;
        }
        let mut centroid = vec![0.0; n];
        for (x, _) in &simplex[..n] {
            for i in 0..n {
                centroid[i] += x[i] / n as f64;
            }
        }
        let towards = |t: f64| -> Vec<f64> {
            let mut x: Vec<f64> = (0..n).map(|i| centroid[i] + t * (simplex[n].0[i] - centroid[i])).collect();
            clamp(&mut x);
            x
        };
        let xr = towards(-1.0);
        let fr = eval(&xr);
        evals += 1;
        if fr > best {
            let xe = towards(-2.0);
            let fe = eval(&xe);
            evals += 1;
            simplex[n] = if fe > fr { (xe, fe) } else { (xr, fr) };
        } else if fr > simplex[n - 1].1 {
            simplex[n] = (xr, fr);
        } else {
            let (xc, fc) = if fr > worst {
                let x = towards(-0.5);
                let v = eval(&x);
                (x, v)
            } else {
                let x = towards(0.5);
                let v = eval(&x);
                (x, v)
            };
            evals += 1;
            if fc > worst.max(fr) {
                simplex[n] = (xc, fc);
            } else {
                let x0 = simplex[0].0.clone();
                for (x, v) in simplex.iter_mut().skip(1) {
                    for i in 0..n {
                        x[i] = x0[i] + 0.5 * (x[i] - x0[i]);
                    }
                    *v = eval(x);
                }
                evals += n;
            }
        }
    }
    simplex.sort_by(|a, b| b.1.total_cmp(&a.1));
    simplex.swap_remove(0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn finds_interior_maximum() {
        let f = |x: &[f64]| -(x[0] - 0.3).powi(2) - 2.0 * (x[1] + 0.1).powi(2);
        let (x, v) = nelder_mead_max(&f, &[1.0, 1.0], &[-2.0, -2.0], &[2.0, 2.0], 0.5, 5000);
        assert!((x[0] - 0.3).abs() < 1e-7 && (x[1] + 0.1).abs() < 1e-7, "{x:?}");
        assert!(v > -1e-13);
    }

    #[test]
    fn respects_box() {
        let f = |x: &[f64]| x[0];
        let (x, v) = nelder_mead_max(&f, &[0.0], &[-1.0], &[0.5], 0.1, 1000);
        assert_eq!(x[0], 0.5);
        assert_eq!(v, 0.5);
    }

    #[test]
    fn cosine_sum_argmax() {
        let f = |x: &[f64]| 0.5 * x[0].cos() + 0.5 * (std::f64::consts::FRAC_PI_2 - x[0]).cos();
        let (x, _) = nelder_mead_max(&f, &[0.0], &[0.0], &[std::f64::consts::FRAC_PI_2], 0.2, 1000);
        assert!((x[0] - std::f64::consts::FRAC_PI_4).abs() < 1e-7);
    }
}
