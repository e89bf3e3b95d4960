use std::f64::consts::PI;

use hk_core::{
    barycenter_fixed_point, barycenter_objective, extract_barycenter, solve_multimarginal, DiscreteMeasure,
    FixedPointOptions, GroundSpace, MultimarginalOptions, Point, SolverOptions,
};

fn uniform(a: f64, b: f64, n: usize) -> DiscreteMeasure {
    let h = (b - a) / n as f64;
    let atoms = (0..n).map(|k| (Point::scalar(a + (k as f64 + 0.5) * h), h)).collect();
    DiscreteMeasure::new(GroundSpace::euclidean(1).unwrap(), atoms).unwrap()
}

#[test]
fn separated_intervals_multimarginal() {
    let mu1 = uniform(-1.0 - PI, -PI, 200);
    let mu2 = uniform(PI, PI + 1.0, 200);
    let sol = solve_multimarginal(&[mu1.clone(), mu2.clone()], &[0.5, 0.5], &MultimarginalOptions::default()).unwrap();
    let bary = extract_barycenter(&sol).unwrap();
    assert_eq!(bary.len(), 400);
    for b in mu1.atoms().iter().chain(mu2.atoms()) {
        let a = bary.atoms().iter().find(|a| a.point == b.point).unwrap();
        assert!((a.mass / (0.25 * b.mass) - 1.0).abs() < 1e-3);
    }
    assert!((sol.objective - 0.5).abs() < 1e-9);
    assert!(!sol.ties);
    let j = barycenter_objective(&bary, &[mu1.clone(), mu2.clone()], &[0.5, 0.5], &SolverOptions::default()).unwrap();
    assert!((j - 0.5).abs() < 1e-5);
    let fp = barycenter_fixed_point(None, &[mu1, mu2], &[0.5, 0.5], &FixedPointOptions::default()).unwrap();
    assert!((fp.objective - 0.5).abs() < 1e-5);
}

#[path = "support/oracle.rs"]
mod oracle;

#[test]
fn random_small_instances_are_optimal() {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(19);
    let line = GroundSpace::euclidean(1).unwrap();
    for case in 0..20 {
        let p = 2 + case % 2;
        let mut xs = Vec::new();
        let mut ms = Vec::new();
        let mut mus = Vec::new();
        for _ in 0..p {
            let n = rng.gen_range(1..=3);
            let x: Vec<f64> = (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let m: Vec<f64> = (0..n).map(|_| rng.gen_range(0.2..2.0)).collect();
            mus.push(
                DiscreteMeasure::new(line.clone(), x.iter().zip(&m).map(|(x, m)| (Point::scalar(*x), *m)).collect())
                    .unwrap(),
            );
            xs.push(x);
            ms.push(m);
        }
        let mut l: Vec<f64> = (0..p).map(|_| rng.gen_range(0.2..1.0)).collect();
        let s: f64 = l.iter().sum();
        l.iter_mut().for_each(|v| *v /= s);
            let sol = solve_multimarginal(&mus, &l, &MultimarginalOptions::default()).unwrap();
        let bary = extract_barycenter(&sol).unwrap();
        let j = barycenter_objective(&bary, &mus, &l, &SolverOptions::default()).unwrap();
        let lb = oracle::verified_lower_bound(&sol, &xs, &ms);
        assert!((sol.objective - j).abs() <= 1e-5, "case {case}");
        assert!(sol.objective - lb <= 1e-4, "case {case}");
        if p == 2 && xs.iter().all(|x| x.len() <= 2) {
            let g = oracle::grid_two([&xs[0], &xs[1]], [&ms[0], &ms[1]], [l[0], l[1]]);
            assert!(sol.objective <= g + 1e-4);
        }
    }
}
