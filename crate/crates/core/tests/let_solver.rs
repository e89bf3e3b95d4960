use hk_core::{
    certify, hk_dirac_formula, hk_solve, let_objective, let_oracle, DiscreteMeasure, GroundSpace, OracleOptions, Point,
    SolverOptions,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_measure(rng: &mut ChaCha8Rng, space: &GroundSpace, n: usize, spread: f64) -> DiscreteMeasure {
    let dim = space.ambient_dim().unwrap();
    let atoms = (0..n)
        .map(|_| {
            let p: Vec<f64> = (0..dim).map(|_| rng.gen_range(-spread..spread)).collect();
            (Point::Coords(p), rng.gen_range(0.1..3.0))
        })
        .collect();
    DiscreteMeasure::new(space.clone(), atoms).unwrap()
}

#[test]
fn agrees_with_oracle_on_small_instances() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let oracle = OracleOptions { random_starts: 8, ..OracleOptions::default() };
    for case in 0..20 {
        let space = GroundSpace::euclidean(1 + case % 2).unwrap();
        let (n, m) = (rng.gen_range(1..=5), rng.gen_range(1..=5));
        let mu1 = random_measure(&mut rng, &space, n, 1.2);
        let mu2 = random_measure(&mut rng, &space, m, 1.2);
        let (plan, report) = hk_solve(&mu1, &mu2, &SolverOptions::default()).unwrap();
        let (_, reference) = let_oracle(&mu1, &mu2, &oracle).unwrap();
        assert!((report.primal - reference).abs() <= 1e-6, "case {case}: {} vs {reference}", report.primal);
        let c = certify(&plan, &mu1, &mu2, 1e-14).unwrap();
        assert!(c.passes(1e-6), "case {case}: {c:?}");
        assert!((let_objective(&mu1, &mu2, &plan).unwrap() - report.primal).abs() < 1e-12);
    }
}

#[test]
fn dirac_against_two_atoms() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let space = GroundSpace::euclidean(2).unwrap();
    for _ in 0..20 {
        let x0 = Point::Coords(vec![rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)]);
        let x1 = Point::Coords(vec![rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)]);
        let (a, a1, b1) = (rng.gen_range(0.1..10.0), rng.gen_range(0.1..10.0), rng.gen_range(0.1..10.0));
        let mu = DiscreteMeasure::dirac(space.clone(), x0.clone(), a).unwrap();
        let nu = DiscreteMeasure::new(space.clone(), vec![(x0.clone(), a1), (x1.clone(), b1)]).unwrap();
        let (_, r) = hk_solve(&mu, &nu, &SolverOptions::default()).unwrap();
        let expect = hk_dirac_formula(&space, a, &x0, a1, b1, &x1).unwrap();
        assert!((r.primal - expect).abs() <= 1e-6, "{} vs {expect}", r.primal);
    }
}

#[test]
fn symmetry_and_homogeneity() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let space = GroundSpace::euclidean(2).unwrap();
    for _ in 0..5 {
        let mu1 = random_measure(&mut rng, &space, 6, 1.0);
        let mu2 = random_measure(&mut rng, &space, 5, 1.0);
        let opts = SolverOptions::default();
        let v12 = hk_solve(&mu1, &mu2, &opts).unwrap().1.primal;
        let v21 = hk_solve(&mu2, &mu1, &opts).unwrap().1.primal;
        assert!((v12.sqrt() - v21.sqrt()).abs() <= 1e-9);
        let s = 3.7;
        let vs = hk_solve(&mu1.scaled(s).unwrap(), &mu2.scaled(s).unwrap(), &opts).unwrap().1.primal;
        assert!((vs - s * v12).abs() <= 1e-8 * s * v12, "{vs} vs {}", s * v12);
    }
}

#[test]
fn regularization_path_descends() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let space = GroundSpace::euclidean(1).unwrap();
    let mu1 = random_measure(&mut rng, &space, 6, 1.0);
    let mu2 = random_measure(&mut rng, &space, 6, 1.0);
    let opts = SolverOptions { polish: false, ..SolverOptions::default() };
    let r = match hk_solve(&mu1, &mu2, &opts) {
        Ok((_, r)) => r,
        Err(hk_core::HkError::NonConvergence(nc)) => nc.report,
        Err(e) => panic!("{e}"),
    };
    for w in r.path.windows(2) {
        assert!(w[1] <= w[0] + 1e-12, "{:?}", r.path);
    }
    let (_, reference) = let_oracle(&mu1, &mu2, &OracleOptions::default()).unwrap();
    assert!((r.path.last().unwrap() - reference).abs() < 1e-5);
}

#[test]
fn larger_instances_reach_exact_support() {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    for (dim, n, spread) in [(1, 150, 2.0), (2, 120, 1.0)] {
        let space = GroundSpace::euclidean(dim).unwrap();
        let mu1 = random_measure(&mut rng, &space, n, spread);
        let mu2 = random_measure(&mut rng, &space, n + 7, spread);
        let (plan, report) = hk_solve(&mu1, &mu2, &SolverOptions::default()).unwrap();
        assert!(report.polished, "dim {dim}: {:?}", report.gap);
        assert!(report.gap <= 1e-9 * (mu1.total_mass() + mu2.total_mass()));
        assert!(certify(&plan, &mu1, &mu2, 1e-14).unwrap().passes(1e-9));
    }
}
