use std::io::Write as _;
use std::path::{Path, PathBuf};

use hk_core::io::point_to_json;
use hk_core::{
    barycenter_fixed_point, barycenter_objective, candidate_grid, check_fi, dual_objective, extract_barycenter,
    hk_solve, measure_to_json, parse_measure, parse_potential, solve_multimarginal, verify_geodesic,
    weak_duality_certificate, CostMatrix, DiracGeodesic, DiscreteMeasure, FixedPointOptions, GeodesicKind, HkError,
    Json, MultimarginalOptions, Point, PotentialFunction, SolveReport, TransportPlan,
};

use crate::config::{digest, RunConfig};
use crate::{BaryMethod, CurveKind, Failure, EXIT_INPUT, EXIT_NONCONVERGENCE};

const WEIGHT_SUM_TOL: f64 = 1e-9;

struct Input {
    path: PathBuf,
    raw: Vec<u8>,
}

impl Input {
    fn read(path: &Path) -> Result<Self, Failure> {
        let raw = std::fs::read(path).map_err(|e| Failure::input(format!("{}: {e}", path.display())))?;
        Ok(Input { path: path.to_path_buf(), raw })
    }

    fn text(&self) -> Result<&str, Failure> {
        std::str::from_utf8(&self.raw).map_err(|_| Failure::input(format!("{}: not valid UTF-8", self.path.display())))
    }

    fn measure(&self) -> Result<DiscreteMeasure, Failure> {
        parse_measure(self.text()?).map_err(|e| Failure::input(format!("{}: {e}", self.path.display())))
    }

    fn potential(&self, space: &hk_core::GroundSpace) -> Result<PotentialFunction, Failure> {
        parse_potential(self.text()?, space).map_err(|e| Failure::input(format!("{}: {e}", self.path.display())))
    }

    fn to_json(&self) -> Json {
        Json::obj([("path", Json::str(self.path.display().to_string())), ("sha256", Json::str(digest(&self.raw)))])
    }
}

fn measures(paths: &[PathBuf]) -> Result<(Vec<Input>, Vec<DiscreteMeasure>), Failure> {
    let inputs = paths.iter().map(|p| Input::read(p)).collect::<Result<Vec<_>, _>>()?;
    let mus = inputs.iter().map(Input::measure).collect::<Result<Vec<_>, _>>()?;
    if let Some(first) = mus.first() {
        if mus.iter().any(|m| m.space() != first.space()) {
            return Err(HkError::SpaceMismatch.into());
        }
    }
    Ok((inputs, mus))
}

fn header(cfg: &RunConfig, command: &str, extra: Json, inputs: &[&Input]) -> Vec<(String, Json)> {
    let raw: Vec<Vec<u8>> = inputs.iter().map(|i| i.raw.clone()).collect();
    let hash = cfg.hash(command, &extra, &raw);
    let mut config = match cfg.to_json() {
        Json::Obj(f) => f,
        _ => Vec::new(),
    };
    if let Json::Obj(f) = extra {
        config.extend(f);
    }
    vec![
        ("command".into(), Json::str(command)),
        ("version".into(), Json::str(env!("CARGO_PKG_VERSION"))),
        ("config_hash".into(), Json::str(hash)),
        ("config".into(), Json::Obj(config)),
        ("inputs".into(), Json::Arr(inputs.iter().map(|i| i.to_json()).collect())),
    ]
}

fn emit(out: Option<&Path>, text: &str) -> Result<(), Failure> {
    match out {
        Some(p) => std::fs::write(p, text).map_err(|e| Failure::input(format!("{}: {e}", p.display()))),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(text.as_bytes())?;
            stdout.flush()?;
            Ok(())
        }
    }
}

fn num(x: f64) -> Json {
    Json::Num(x)
}

fn int(n: usize) -> Json {
    Json::Int(n as i64)
}

fn csv_num(x: f64) -> String {
    if x == f64::INFINITY {
        "inf".into()
    } else {
        format!("{:?}", x + 0.0)
    }
}

fn solve(mu1: &DiscreteMeasure, mu2: &DiscreteMeasure, cfg: &RunConfig) -> Result<(TransportPlan, SolveReport, bool), Failure> {
    match hk_solve(mu1, mu2, &cfg.solver) {
        Ok((plan, report)) => Ok((plan, report, true)),
        Err(HkError::NonConvergence(nc)) => {
            eprintln!("hk: warning: {nc}");
            Ok((nc.plan, nc.report, false))
        }
        Err(e) => Err(e.into()),
    }
}

fn trace(r: &SolveReport) -> Json {
    Json::obj([
        ("method", Json::str(serde_json::to_value(r.method).unwrap().as_str().unwrap_or("").to_string())),
        ("iterations", int(r.iterations)),
        ("levels", int(r.epsilons.len())),
        ("final_epsilon", r.epsilons.last().map_or(Json::Null, |e| num(*e))),
        ("path", Json::nums(&r.path)),
        ("polished", Json::Bool(r.polished)),
    ])
}

fn certificate(r: &SolveReport) -> Json {
    Json::obj([("off_support", num(r.certificate.off_support)), ("on_support", num(r.certificate.on_support))])
}

pub fn dist(cfg: &RunConfig, a: &Path, b: &Path) -> Result<u8, Failure> {
    let (inputs, mus) = measures(&[a.to_path_buf(), b.to_path_buf()])?;
    let (plan, report, converged) = solve(&mus[0], &mus[1], cfg)?;
    let mut f = header(cfg, "dist", Json::obj::<&str>([]), &[&inputs[0], &inputs[1]]);
    f.extend([
        ("hk2".into(), num(report.primal)),
        ("hk".into(), num(report.hk())),
        ("dual".into(), num(report.dual)),
        ("gap".into(), num(report.gap)),
        ("converged".into(), Json::Bool(converged)),
        ("iterations".into(), int(report.iterations)),
        (
            "plan".into(),
            Json::obj([
                ("rows", int(plan.rows)),
                ("cols", int(plan.cols)),
                ("nonzeros", int(plan.nonzeros())),
                ("mass", num(plan.total_mass())),
            ]),
        ),
        ("certificate".into(), certificate(&report)),
        ("trace".into(), trace(&report)),
    ]);
    emit(cfg.out.as_deref(), &Json::Obj(f).render())?;
    Ok(if converged { 0 } else { EXIT_NONCONVERGENCE })
}

pub fn plan(cfg: &RunConfig, a: &Path, b: &Path) -> Result<u8, Failure> {
    let (inputs, mus) = measures(&[a.to_path_buf(), b.to_path_buf()])?;
    let (plan, report, converged) = solve(&mus[0], &mus[1], cfg)?;
    let mut entries = Vec::new();
    for j in 0..plan.rows {
        for k in 0..plan.cols {
            let e = plan.get(j, k);
            if e > 0.0 {
                entries.push(Json::Arr(vec![int(j), int(k), num(e)]));
            }
        }
    }
    let points = |m: &DiscreteMeasure| Json::Arr(m.points().iter().map(point_to_json).collect());
    let mut f = header(cfg, "plan", Json::obj::<&str>([]), &[&inputs[0], &inputs[1]]);
    f.extend([
        ("hk2".into(), num(report.primal)),
        ("converged".into(), Json::Bool(converged)),
        ("rows".into(), int(plan.rows)),
        ("cols".into(), int(plan.cols)),
        ("points1".into(), points(&mus[0])),
        ("points2".into(), points(&mus[1])),
        ("sigma1".into(), Json::nums(&plan.sigma1)),
        ("sigma2".into(), Json::nums(&plan.sigma2)),
        ("entries".into(), Json::Arr(entries)),
        ("certificate".into(), certificate(&report)),
        ("trace".into(), trace(&report)),
    ]);
    emit(cfg.out.as_deref(), &Json::Obj(f).render())?;
    Ok(if converged { 0 } else { EXIT_NONCONVERGENCE })
}

fn weights(given: Option<&[f64]>, p: usize) -> Result<Vec<f64>, Failure> {
    let w = match given {
        None => vec![1.0 / p as f64; p],
        Some(w) => w.to_vec(),
    };
    if w.len() != p {
        return Err(Failure::input(format!("{} weights given for {p} measures", w.len())));
    }
    if w.iter().any(|x| !(*x > 0.0) || !x.is_finite()) {
        return Err(Failure::input("weights must be positive and finite"));
    }
    let s: f64 = w.iter().sum();
    if (s - 1.0).abs() > WEIGHT_SUM_TOL {
        eprintln!("hk: warning: weights sum to {s}; renormalizing");
    }
    Ok(w.iter().map(|x| x / s).collect())
}

struct Barycenter {
    measure: DiscreteMeasure,
    objective: f64,
    converged: bool,
    details: Vec<(String, Json)>,
}

fn multimarginal(cfg: &RunConfig, mus: &[DiscreteMeasure], lambdas: &[f64]) -> Result<Barycenter, HkError> {
    let opts = MultimarginalOptions { tuple_budget: cfg.tuple_budget, seed: cfg.seed, ..MultimarginalOptions::default() };
    let sol = solve_multimarginal(mus, lambdas, &opts)?;
    let measure = extract_barycenter(&sol)?;
    let j = barycenter_objective(&measure, mus, lambdas, &cfg.solver)?;
    let tuples = sol
        .tuples
        .iter()
        .map(|t| {
            Json::obj([
                ("indices", Json::Arr(t.indices.iter().map(|i| i.map_or(Json::Null, int)).collect())),
                ("q", Json::nums(&t.q)),
                ("point", point_to_json(&t.point)),
                ("radius", num(t.radius)),
            ])
        })
        .collect();
    let details = vec![
        ("method".into(), Json::str("multimarginal")),
        ("objective_check".into(), num(j)),
        ("dual_bound".into(), num(sol.dual_bound)),
        ("pricing_max".into(), num(sol.pricing_max)),
        ("residuals".into(), Json::nums(&sol.residuals)),
        ("ties".into(), Json::Bool(sol.ties)),
        ("stalled".into(), Json::Bool(sol.stalled)),
        ("sweeps".into(), int(sol.sweeps)),
        ("tuples".into(), Json::Arr(tuples)),
    ];
    Ok(Barycenter { measure, objective: sol.objective, converged: !sol.stalled, details })
}

fn fixed_point(cfg: &RunConfig, mus: &[DiscreteMeasure], lambdas: &[f64]) -> Result<Barycenter, HkError> {
    let opts = FixedPointOptions { solver: cfg.solver.clone(), ..FixedPointOptions::default() };
    let r = barycenter_fixed_point(None, mus, lambdas, &opts)?;
    let details = vec![
        ("method".into(), Json::str("fixed-point")),
        ("iterations".into(), int(r.iterations)),
        ("history".into(), Json::nums(&r.history)),
        ("ties".into(), Json::Null),
    ];
    Ok(Barycenter { measure: r.measure, objective: r.objective, converged: r.converged, details })
}

fn barycenter(cfg: &RunConfig, mus: &[DiscreteMeasure], lambdas: &[f64], method: BaryMethod) -> Result<Barycenter, HkError> {
    match method {
        BaryMethod::Multimarginal => multimarginal(cfg, mus, lambdas),
        BaryMethod::FixedPoint => fixed_point(cfg, mus, lambdas),
    }
}

fn sidecar(out: &Path) -> PathBuf {
    let stem = out.file_stem().map_or_else(|| "barycenter".into(), |s| s.to_string_lossy().into_owned());
    out.with_file_name(format!("{stem}.report.json"))
}

fn method_name(m: BaryMethod) -> &'static str {
    match m {
        BaryMethod::Multimarginal => "multimarginal",
        BaryMethod::FixedPoint => "fixed-point",
    }
}

pub fn bary(cfg: &RunConfig, paths: &[PathBuf], given: Option<&[f64]>, method: BaryMethod) -> Result<u8, Failure> {
    let (inputs, mus) = measures(paths)?;
    let lambdas = weights(given, mus.len())?;
    let extra = Json::obj([("method", Json::str(method_name(method))), ("weights", Json::nums(&lambdas))]);
    let b = barycenter(cfg, &mus, &lambdas, method)?;
    let refs: Vec<&Input> = inputs.iter().collect();
    let mut f = header(cfg, "bary", extra, &refs);
    f.extend([
        ("objective".into(), num(b.objective)),
        ("converged".into(), Json::Bool(b.converged)),
        ("atoms".into(), int(b.measure.len())),
        ("mass".into(), num(b.measure.total_mass())),
    ]);
    f.extend(b.details);
    match &cfg.out {
        Some(out) => {
            emit(Some(out), &measure_to_json(&b.measure).render())?;
            let report = Json::Obj(f).render();
            emit(Some(&sidecar(out)), &report)?;
            emit(None, &report)?;
        }
        None => {
            f.push(("barycenter".into(), measure_to_json(&b.measure)));
            emit(None, &Json::Obj(f).render())?;
        }
    }
    if !b.converged {
        eprintln!("hk: warning: the barycenter solver stopped before converging");
        return Ok(EXIT_NONCONVERGENCE);
    }
    Ok(0)
}

pub fn dual_check(
    cfg: &RunConfig,
    paths: &[PathBuf],
    potential_paths: &[PathBuf],
    given: Option<&[f64]>,
    barycenter_path: Option<&Path>,
    method: BaryMethod,
) -> Result<u8, Failure> {
    let (inputs, mus) = measures(paths)?;
    if potential_paths.len() != mus.len() {
        return Err(Failure::input(format!("{} potentials given for {} measures", potential_paths.len(), mus.len())));
    }
    let space = mus[0].space().clone();
    let pinputs = potential_paths.iter().map(|p| Input::read(p)).collect::<Result<Vec<_>, _>>()?;
    let fs = pinputs.iter().map(|i| i.potential(&space)).collect::<Result<Vec<_>, _>>()?;
    let bin = barycenter_path.map(Input::read).transpose()?;
    let lambdas = weights(given, mus.len())?;
    let extra = Json::obj([("method", Json::str(method_name(method))), ("weights", Json::nums(&lambdas))]);
    let refs: Vec<&Input> = inputs.iter().chain(&pinputs).chain(bin.as_ref()).collect();
    let mut f = header(cfg, "dual-check", extra, &refs);

    let mrefs: Vec<&DiscreteMeasure> = mus.iter().collect();
    let candidates = candidate_grid(&space, &mrefs, &cfg.grid)?;
    f.push(("candidates".into(), int(candidates.len())));
    let mut checks = Vec::new();
    for (fi, mu) in fs.iter().zip(&mus) {
        let c = check_fi(fi, mu)?;
        checks.push(Json::obj([
            ("ok", Json::Bool(c.ok)),
            ("sup", num(c.sup)),
            ("violations", Json::Arr(c.violations.iter().map(|v| Json::str(v.clone())).collect())),
        ]));
    }
    f.push(("membership".into(), Json::Arr(checks)));
    let dual = match dual_objective(&fs, &mus, &lambdas, &candidates) {
        Ok(v) => v,
        Err(HkError::Infeasible { point, residual }) => {
            f.push(("feasible".into(), Json::Bool(false)));
            f.push(("violation".into(), Json::obj([("at", Json::str(point.clone())), ("residual", num(residual))])));
            emit(cfg.out.as_deref(), &Json::Obj(f).render())?;
            eprintln!("hk: infeasible potentials at {point}: residual {residual:e}");
            return Ok(EXIT_INPUT);
        }
        Err(e) => return Err(e.into()),
    };
    f.push(("feasible".into(), Json::Bool(true)));
    f.push(("dual".into(), num(dual)));

    let (mu, source) = match &bin {
        Some(i) => (i.measure()?, Json::str("file")),
        None => {
            let b = match barycenter(cfg, &mus, &lambdas, method) {
                Err(HkError::TupleBudgetExceeded { tuples, budget }) => {
                    eprintln!("hk: warning: {tuples} tuples exceed the budget {budget}; using the fixed-point method");
                    barycenter(cfg, &mus, &lambdas, BaryMethod::FixedPoint)?
                }
                r => r?,
            };
            (b.measure, b.details[0].1.clone())
        }
    };
    if mu.space() != &space {
        return Err(HkError::SpaceMismatch.into());
    }
    let gap = weak_duality_certificate(&fs, &mus, &lambdas, &mu, &candidates, &cfg.solver)?;
    let scale: f64 = mus.iter().zip(&lambdas).map(|(m, l)| l * m.total_mass()).sum::<f64>().max(1.0);
    let tol = cfg.solver.tolerance * scale;
    let consistent = gap.consistent(tol);
    f.extend([
        ("barycenter_source".into(), source),
        (
            "certificate".into(),
            Json::obj([
                ("primal", num(gap.primal)),
                ("dual", num(gap.dual)),
                ("gap", num(gap.gap)),
                ("tolerance", num(tol)),
                ("consistent", Json::Bool(consistent)),
            ]),
        ),
    ]);
    emit(cfg.out.as_deref(), &Json::Obj(f).render())?;
    if !consistent {
        eprintln!("hk: weak duality fails: gap {:e} below -{tol:e}", gap.gap);
        return Ok(EXIT_INPUT);
    }
    Ok(0)
}

fn single_atom(i: &Input) -> Result<(DiscreteMeasure, f64, Point), Failure> {
    let m = i.measure()?;
    if m.len() != 1 {
        return Err(Failure::input(format!("{}: geodesic endpoints must be single atoms", i.path.display())));
    }
    let a = m.atoms()[0].clone();
    Ok((m, a.mass, a.point))
}

fn point_cells(p: &Point) -> Vec<String> {
    match p {
        Point::Coords(c) => c.iter().map(|x| csv_num(*x)).collect(),
        Point::Index(i) => vec![i.to_string()],
    }
}

pub fn geodesic(
    cfg: &RunConfig,
    a: &Path,
    b: &Path,
    kind: CurveKind,
    steps: usize,
    s: Option<&[f64]>,
    verify: bool,
) -> Result<u8, Failure> {
    let (ia, ib) = (Input::read(a)?, Input::read(b)?);
    let (m1, a1, x1) = single_atom(&ia)?;
    let (m2, a2, x2) = single_atom(&ib)?;
    if m1.space() != m2.space() {
        return Err(HkError::SpaceMismatch.into());
    }
    let kind = match kind {
        CurveKind::Hellinger => GeodesicKind::Hellinger,
        CurveKind::Transport => GeodesicKind::Transport,
    };
    let samples: Vec<f64> = match s {
        Some(s) => s.to_vec(),
        None => {
            if steps == 0 {
                return Err(Failure::input("--steps must be positive"));
            }
            (0..=steps).map(|k| k as f64 / steps as f64).collect()
        }
    };
    let curve = DiracGeodesic::new(kind, m1.space().clone(), a1, x1.clone(), a2, x2)?;
    let name = serde_json::to_value(kind).unwrap().as_str().unwrap_or("").to_string();
    let extra = Json::obj([("kind", Json::str(name.clone())), ("samples", Json::nums(&samples))]);
    let hash = cfg.hash("geodesic", &extra, &[ia.raw.clone(), ib.raw.clone()]);
    let mut out = format!("# hk geodesic kind={name} config_hash={hash}\n");
    if verify {
        let r = verify_geodesic(&curve, &samples, &cfg.solver)?;
        out.push_str(&format!("# length={:?} max_deviation={:?} pairs={}\n", r.length, r.max_deviation, r.pairs));
    }
    let coords = match &x1 {
        Point::Coords(c) => (0..c.len()).map(|i| format!("x{i}")).collect::<Vec<_>>(),
        Point::Index(_) => vec!["index".into()],
    };
    out.push_str(&format!("s,atom,{},mass\n", coords.join(",")));
    for &t in &samples {
        let m = curve.at(t)?;
        for (k, atom) in m.atoms().iter().enumerate() {
            out.push_str(&format!("{},{k},{},{}\n", csv_num(t), point_cells(&atom.point).join(","), csv_num(atom.mass)));
        }
    }
    emit(cfg.out.as_deref(), &out)?;
    Ok(0)
}

pub fn cost_matrix(cfg: &RunConfig, a: &Path, b: &Path) -> Result<u8, Failure> {
    let (inputs, mus) = measures(&[a.to_path_buf(), b.to_path_buf()])?;
    let cost = CostMatrix::between(&mus[0], &mus[1])?;
    let hash = cfg.hash("cost-matrix", &Json::obj::<&str>([]), &[inputs[0].raw.clone(), inputs[1].raw.clone()]);
    let mut out = format!("# hk cost-matrix rows={} cols={} config_hash={hash}\n", cost.rows, cost.cols);
    for j in 0..cost.rows {
        let row: Vec<String> = (0..cost.cols).map(|k| csv_num(cost.ell(j, k))).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    emit(cfg.out.as_deref(), &out)?;
    Ok(0)
}
