//! Subcommand bodies. Each reads its parameters from the resolved config,
//! runs the checks and returns a [`Report`]; nothing here touches the
//! filesystem except graph files named in the config.

use std::collections::BTreeMap;
use std::fmt::Display;

use num_bigint::BigUint;
use num_rational::BigRational;
use rand::seq::IndexedRandom;
use rand::Rng;
use serde_json::{json, Value};

use unipotent_core::bttree::{self, sphere, sphere_sizes, TreeVertex};
use unipotent_core::group::{conj_dw, ldu_decompose, ldu_multiply_back, random_sl2_zp, GElem, GroupError, Mat2};
use unipotent_core::lattices::{
    coverage_sweep, generators_text, lps_generators, random_conjugator, CoverageMode, CoverageReport,
};
use unipotent_core::linearize::{
    act, conj_direct, conj_poly, limit_time_scale, phi_curve, psi_prime_from_psi, qp2_flow, st_q_direction, EVec,
    EmElem, LimitOptions, LinError, PolyMap,
};
use unipotent_core::nondiv::{
    avoidance_report, frame_polys, growth_bound_check, nondivergence_check, NondivError, PadicPoly, DEFAULT_MAX_DEPTH,
};
use unipotent_core::padic::{Agreement, Padic, PadicBall, PadicError, Qp};
use unipotent_core::rng::stream;
use unipotent_core::treequot::{
    build_cover, check_covering, csv_rows, expected_sphere_size, load_or_generate, sphere_distributions,
    summarize, surjectivity_from, CoupledCover, GraphSpec, Matching,
};

use crate::config::{ConfigError, ExperimentConfig};

#[derive(Debug, thiserror::Error)]
pub enum CmdError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{module}: {message}")]
    Module { module: &'static str, message: String },
}

fn module<E: Display>(name: &'static str) -> impl Fn(E) -> CmdError {
    move |e| CmdError::Module { module: name, message: e.to_string() }
}

pub struct Table {
    pub name: String,
    pub header: String,
    pub rows: Vec<String>,
}

pub struct Report {
    pub passed: bool,
    /// One-line human summary, printed to stdout.
    pub line: String,
    pub result: Value,
    pub tables: Vec<Table>,
    pub texts: Vec<(String, String)>,
}

impl Report {
    fn new(passed: bool, line: String, result: Value) -> Self {
        Report { passed, line, result, tables: Vec::new(), texts: Vec::new() }
    }

    fn table(mut self, name: &str, header: &str, rows: Vec<String>) -> Self {
        self.tables.push(Table { name: name.into(), header: header.into(), rows });
        self
    }
}

/// Keys and defaults for each subcommand.
pub fn defaults(command: &str) -> &'static [(&'static str, &'static str)] {
    match command {
        "verify-identities" => &[("prime", "5"), ("precision", "24"), ("seed", "1"), ("cases", "200"), ("arity", "3")],
        "nondiv" => &[
            ("prime", "5"),
            ("precision", "24"),
            ("seed", "1"),
            ("degree", "2"),
            ("epsilon", "1/5"),
            ("cases", "1000"),
            ("coeff_bound", "40"),
            ("avoid_cases", "100"),
        ],
        "limit-poly" => &[
            ("prime", "5"),
            ("precision", "24"),
            ("sequence", "lower"),
            ("first", "1"),
            ("last", "10"),
            ("tail", "3"),
            ("threshold", "6"),
        ],
        "tree" => &[("prime", "5"), ("precision", "24"), ("seed", "1"), ("radius", "6"), ("samples", "100")],
        "sphere-dist" => &[
            ("seed", "1"),
            ("graph1", "complete:5"),
            ("graph2", "complete:5"),
            ("root1", "0"),
            ("root2", "0"),
            ("coupling", "seeded"),
            ("n_max", "30"),
        ],
        "density" => &[
            ("prime", "5"),
            ("precision", "24"),
            ("seed", "1"),
            ("level", "1"),
            ("l_max", "6"),
            ("dedup_digits", "12"),
            ("mode", "both"),
        ],
        _ => &[],
    }
}

pub fn run(cfg: &ExperimentConfig) -> Result<Report, CmdError> {
    match cfg.command() {
        "verify-identities" => verify_identities(cfg),
        "nondiv" => nondiv(cfg),
        "limit-poly" => limit_poly(cfg),
        "tree" => tree(cfg),
        "sphere-dist" => sphere_dist(cfg),
        "density" => density(cfg),
        other => unreachable!("unknown command {other}"),
    }
}

fn field(cfg: &ExperimentConfig) -> Result<Qp, CmdError> {
    let p: u64 = cfg.get("prime")?;
    let n: u32 = cfg.get("precision")?;
    Qp::new(p, n).map_err(|e| CmdError::Config(cfg.bad("prime", e.to_string())))
}

fn ratio(cfg: &ExperimentConfig, key: &str) -> Result<BigRational, CmdError> {
    Ok(cfg.get::<BigRational>(key)?)
}

#[derive(Default)]
struct Tally {
    cases: usize,
    equal: usize,
    indistinguishable: usize,
    distinct: usize,
    skipped: usize,
}

impl Tally {
    fn record(&mut self, a: Agreement) {
        self.cases += 1;
        match a {
            Agreement::Equal => self.equal += 1,
            Agreement::Indistinguishable => self.indistinguishable += 1,
            Agreement::Distinct => self.distinct += 1,
        }
    }

    fn skip(&mut self) {
        self.cases += 1;
        self.skipped += 1;
    }

    fn ok(&self) -> bool {
        self.distinct == 0 && self.indistinguishable == 0
    }

    fn row(&self, name: &str) -> String {
        format!("{name},{},{},{},{},{}", self.cases, self.equal, self.indistinguishable, self.distinct, self.skipped)
    }

    fn json(&self) -> Value {
        json!({
            "cases": self.cases,
            "equal": self.equal,
            "indistinguishable": self.indistinguishable,
            "distinct": self.distinct,
            "skipped": self.skipped,
        })
    }
}

fn random_int_matrix<R: Rng>(qp: &Qp, rng: &mut R, bound: i64) -> Mat2 {
    let mut e = || rng.random_range(-bound..=bound);
    Mat2::from_ints(qp, [[e(), e()], [e(), e()]])
}

fn verify_identities(cfg: &ExperimentConfig) -> Result<Report, CmdError> {
    let qp = field(cfg)?;
    let seed: u64 = cfg.get("seed")?;
    let cases: usize = cfg.get("cases")?;
    let n: usize = cfg.get("arity")?;
    if n < 2 {
        return Err(cfg.bad("arity", "need at least 2 factors").into());
    }
    let group_err = module::<GroupError>("group");
    let lin_err = module::<LinError>("linearize");
    let mut suites: Vec<(&str, Tally)> = Vec::new();

    // d(alpha) w(t) d(alpha)^-1 = w(alpha^2 t)
    let mut rng = stream(seed, "verify-conjugation", 0);
    let mut t = Tally::default();
    for _ in 0..cases {
        let alpha = &qp.random_unit(&mut rng) * &qp.pow_p(rng.random_range(-2..=2));
        let ts: Vec<_> = (0..n).map(|_| qp.random_value(&mut rng, -2..=3)).collect();
        t.record(conj_dw(&alpha, &ts).map_err(&group_err)?.agreement);
    }
    suites.push(("conjugation-law", t));

    let mut rng = stream(seed, "verify-ldu", 0);
    let mut t = Tally::default();
    for _ in 0..cases {
        let g = GElem::new((0..n).map(|_| random_sl2_zp(&qp, &mut rng)).collect());
        match ldu_decompose(&g) {
            Ok(f) => t.record(ldu_multiply_back(&f).agreement(&g).map_err(&group_err)?),
            Err(GroupError::NoLDU { .. }) => t.skip(),
            Err(e) => return Err(group_err(e)),
        }
    }
    suites.push(("ldu-round-trip", t));

    let mut rng = stream(seed, "verify-action", 0);
    let mut t = Tally::default();
    let base = EVec::base_point(&qp, n);
    for _ in 0..cases {
        let g = GElem::new((0..n).map(|_| random_sl2_zp(&qp, &mut rng)).collect());
        let h = GElem::new((0..n).map(|_| random_sl2_zp(&qp, &mut rng)).collect());
        let gh = g.mul(&h).map_err(&group_err)?;
        let left = act(&gh, &base).map_err(&lin_err)?;
        let right = act(&g, &act(&h, &base).map_err(&lin_err)?).map_err(&lin_err)?;
        t.record(left.agreement(&right));
    }
    suites.push(("action-law", t));

    let mut rng = stream(seed, "verify-conj-poly", 0);
    let mut t = Tally::default();
    for _ in 0..cases {
        let x = random_int_matrix(&qp, &mut rng, 50);
        let s = qp.random_value(&mut rng, -2..=3);
        t.record(conj_poly(&x).eval(&s).agreement(&conj_direct(&x, &s)));
    }
    suites.push(("conjugation-expansion", t));

    let mut rng = stream(seed, "verify-qp2-flow", 0);
    let mut t = Tally::default();
    for _ in 0..cases {
        let b = &qp.random_unit(&mut rng) * &qp.pow_p(rng.random_range(-2..=2));
        let s = qp.random_value(&mut rng, 0..=3);
        t.record(qp2_flow(&b, &s).map_err(&lin_err)?.1);
    }
    suites.push(("qp2-flow", t));

    // Phi(s) = w(psi'(s)) d(phi(s)) moves the base point to (w_1(psi_i(s)); phi(s) e_1)
    let mut rng = stream(seed, "verify-phi-curve", 0);
    let mut t = Tally::default();
    let mut recon = Tally::default();
    for _ in 0..cases {
        let deg = rng.random_range(1..=3);
        let mut coeffs = vec![vec![qp.zero(); n - 1]];
        for _ in 0..deg {
            coeffs.push((0..n - 1).map(|_| qp.int(rng.random_range(-20..=20))).collect());
        }
        let psi_prime = psi_prime_from_psi(&PolyMap::new(coeffs));
        let phi = PolyMap::new(vec![vec![qp.one()], vec![qp.int(rng.random_range(-20..=20))]]);
        let s = qp.int(rng.random_range(-100..=100));
        match phi_curve(&psi_prime, &phi, &s) {
            Ok(pt) => {
                t.record(pt.agreement);
                recon.record(pt.reconstruction);
            }
            Err(LinError::PhiVanishes) => {
                t.skip();
                recon.skip();
            }
            Err(e) => return Err(lin_err(e)),
        }
    }
    suites.push(("phi-curve", t));
    suites.push(("psi-reconstruction", recon));

    let passed = suites.iter().all(|(_, t)| t.ok());
    let checked: usize = suites.iter().map(|(_, t)| t.cases - t.skipped).sum();
    let equal: usize = suites.iter().map(|(_, t)| t.equal).sum();
    let line = format!("verify-identities: {equal}/{checked} identity checks exact over {} suites", suites.len());
    let result: BTreeMap<&str, Value> = suites.iter().map(|(name, t)| (*name, t.json())).collect();
    let rows = suites.iter().map(|(name, t)| t.row(name)).collect();
    Ok(Report::new(passed, line, json!({ "suites": result }))
        .table("identities.csv", "suite,cases,equal,indistinguishable,distinct,skipped", rows))
}

fn random_poly<R: Rng>(qp: &Qp, rng: &mut R, deg: usize, bound: i64) -> Result<PadicPoly, CmdError> {
    let mut c: Vec<_> = (0..=deg).map(|_| qp.int(rng.random_range(-bound..=bound))).collect();
    if c[deg].is_exact_zero() {
        c[deg] = qp.one();
    }
    PadicPoly::new(c).map_err(module("nondiv"))
}

fn nondiv(cfg: &ExperimentConfig) -> Result<Report, CmdError> {
    let qp = field(cfg)?;
    let p = qp.prime() as i64;
    let seed: u64 = cfg.get("seed")?;
    let degree: usize = cfg.get("degree")?;
    let eps = ratio(cfg, "epsilon")?;
    let cases: usize = cfg.get("cases")?;
    let bound: i64 = cfg.get("coeff_bound")?;
    let avoid_cases: usize = cfg.get("avoid_cases")?;
    if bound < 1 {
        return Err(cfg.bad("coeff_bound", "must be positive").into());
    }
    let err = module::<NondivError>("nondiv");
    let ball_err = module::<PadicError>("padic");

    let mut rng = stream(seed, "nondiv-cases", 0);
    let mut rows = Vec::with_capacity(cases);
    let (mut sublevel_pass, mut undecided, mut plain_holds, mut corrected_holds) = (0, 0, 0, 0);
    for i in 0..cases {
        let f = random_poly(&qp, &mut rng, degree, bound)?;
        let center = qp.int(rng.random_range(0..p * p));
        let r_inner = rng.random_range(0..=2);
        let r_outer = r_inner - rng.random_range(1..=2);
        let ball = PadicBall::new(&center, r_inner).map_err(&ball_err)?;
        let outer = PadicBall::new(&center, r_outer).map_err(&ball_err)?;
        let rep = nondivergence_check(&f, &ball, &eps, DEFAULT_MAX_DEPTH).map_err(&err)?;
        let growth = growth_bound_check(&f, &ball, &outer).map_err(&err)?;
        sublevel_pass += rep.passed as usize;
        undecided += (rep.measure.undecided_balls > 0) as usize;
        plain_holds += growth.holds as usize;
        corrected_holds += growth.corrected_holds as usize;
        rows.push(format!(
            "{i},{},{},{},{},{},{},{},{},{},{},{}",
            rep.degree,
            r_inner,
            rep.sup,
            rep.threshold,
            rep.measure.lower,
            rep.measure.upper,
            rep.bound,
            rep.passed,
            r_outer,
            growth.holds,
            growth.corrected_holds
        ));
    }

    // maximal-ball decomposition for the coordinate polynomials of
    // t -> w_1(t) v w_1(-t) - I with v = I + p^j X
    let mut rng = stream(seed, "nondiv-avoid", 0);
    let tau = BigRational::from_integer((p * p).into());
    let c = &eps * &eps / &tau;
    let m = vec![BigRational::from_integer(1.into()); 4];
    let alpha: Vec<BigRational> = m.iter().map(|x| &c * x).collect();
    let outer_ball = PadicBall::new(&qp.zero(), -1).map_err(&ball_err)?;
    let mut avoid_rows = Vec::with_capacity(avoid_cases);
    let (mut hypothesis, mut avoid_ok, mut avoid_bad) = (0, 0, 0);
    for i in 0..avoid_cases {
        let j = rng.random_range(0..=2);
        let x = random_int_matrix(&qp, &mut rng, bound);
        let v = Mat2::identity(&qp).add(&x.scale(&qp.pow_p(j)));
        let polys = frame_polys(&v).map_err(&err)?;
        let rep = avoidance_report(&polys, &m, &alpha, &outer_ball, &eps, 20).map_err(&err)?;
        let hyp = rep.max_ball_bounds.iter().all(|&b| b);
        hypothesis += hyp as usize;
        avoid_ok += rep.avoid_holds as usize;
        avoid_bad += (hyp && !rep.avoid_holds) as usize;
        avoid_rows.push(format!(
            "{i},{j},{:?},{},{},{},{},{},{}",
            rep.branch,
            rep.maximal_ball_count,
            hyp,
            rep.theta_f.lower,
            rep.theta_f1.upper,
            rep.avoid_holds,
            rep.theta_f.undecided_balls + rep.theta_f1.undecided_balls
        ));
    }

    let passed = sublevel_pass == cases && corrected_holds == cases && avoid_bad == 0;
    let line = format!(
        "nondiv: {sublevel_pass}/{cases} pass (p={p}, d={degree}, eps={eps}); growth {plain_holds}/{cases} plain, {corrected_holds}/{cases} with d^d factor; avoidance {avoid_ok}/{avoid_cases}"
    );
    let result = json!({
        "sublevel": { "cases": cases, "passed": sublevel_pass, "with_undecided_balls": undecided },
        "growth": { "cases": cases, "plain_holds": plain_holds, "corrected_holds": corrected_holds },
        "avoidance": {
            "cases": avoid_cases,
            "hypothesis_holds": hypothesis,
            "avoid_holds": avoid_ok,
            "violations_under_hypothesis": avoid_bad,
            "c": c.to_string(),
            "tau": tau.to_string(),
        },
    });
    Ok(Report::new(passed, line, result)
        .table(
            "nondiv.csv",
            "case,degree,radius_exp,sup,threshold,measure_lower,measure_upper,bound,passed,outer_radius_exp,growth_holds,growth_corrected_holds",
            rows,
        )
        .table(
            "avoidance.csv",
            "case,shift,branch,maximal_balls,max_ball_bounds,theta_f_lower,theta_f1_upper,avoid_holds,undecided_balls",
            avoid_rows,
        ))
}

/// `lower[:c]`: `[[1, 0], [c p^2i, 1]]`; `diag[:c]`: `diag(1 + c p^i, 1 - c p^i)`;
/// `pair[:c]`: both as the two factors.
fn sequence(spec: &str, qp: &Qp) -> Option<Box<dyn Fn(u64) -> EmElem>> {
    let (kind, c) = match spec.split_once(':') {
        Some((k, c)) => (k, c.parse::<i64>().ok().filter(|&c| c != 0)?),
        None => (spec, 1),
    };
    let qp = qp.clone();
    let lower = move |qp: &Qp, i: u64| Mat2::new(qp.one(), qp.zero(), &qp.int(c) * &qp.pow_p(2 * i as i64), qp.one());
    let diag = move |qp: &Qp, i: u64| {
        let e = &qp.int(c) * &qp.pow_p(i as i64);
        Mat2::new(qp.one() + e.clone(), qp.zero(), qp.zero(), qp.one() - e)
    };
    match kind {
        "lower" => Some(Box::new(move |i| vec![lower(&qp, i)])),
        "diag" => Some(Box::new(move |i| vec![diag(&qp, i)])),
        "pair" => Some(Box::new(move |i| vec![lower(&qp, i), diag(&qp, i)])),
        _ => None,
    }
}

fn limit_poly(cfg: &ExperimentConfig) -> Result<Report, CmdError> {
    let qp = field(cfg)?;
    let seq = sequence(cfg.raw("sequence"), &qp)
        .ok_or_else(|| cfg.bad("sequence", "expected lower[:c], diag[:c] or pair[:c] with c a nonzero integer"))?;
    let first: u64 = cfg.get("first")?;
    let last: u64 = cfg.get("last")?;
    if first > last {
        return Err(cfg.bad("last", "window is empty").into());
    }
    let opts = LimitOptions { tail: cfg.get("tail")?, threshold: cfg.get("threshold")? };
    let res = limit_time_scale(&*seq, first..=last, opts).map_err(module("linearize"))?;
    let dir = st_q_direction(&res.psi);
    let rat = |v: &[Padic]| v.iter().map(|x| x.to_balanced_rational().to_string()).collect::<Vec<_>>();
    let rows = res
        .steps
        .iter()
        .map(|s| format!("{},{},{},{}", s.index, s.exponent, s.component, s.normalization_gap))
        .collect();
    let direction = match &dir {
        Ok(d) => json!({
            "degree": d.degree,
            "v": rat(&d.v),
            "residual_valuation": d.residual_valuation,
            "validated": d.validated,
        }),
        Err(e) => json!({ "error": e.to_string() }),
    };
    let line = format!(
        "limit-poly: {} over {first}..={last}, tail valuation {:?} (need {}), psi(s) = alpha s + beta s^2 with alpha = {:?}, beta = {:?}",
        cfg.raw("sequence"),
        res.report.achieved,
        opts.threshold,
        rat(&res.alpha),
        rat(&res.beta)
    );
    let result = json!({
        "alpha": rat(&res.alpha),
        "beta": rat(&res.beta),
        "stability": res.report,
        "direction": direction,
    });
    Ok(Report::new(res.report.stable, line, result).table(
        "time_scale.csv",
        "index,exponent,component,normalization_gap",
        rows,
    ))
}

fn tree(cfg: &ExperimentConfig) -> Result<Report, CmdError> {
    let qp = field(cfg)?;
    let p = qp.prime();
    let seed: u64 = cfg.get("seed")?;
    let radius: usize = cfg.get("radius")?;
    let samples: usize = cfg.get("samples")?;
    let err = module("bttree");
    let base = TreeVertex::base(p);
    let mut checks: Vec<(&str, usize, usize)> = Vec::new();

    let (sizes, cycles) = sphere_sizes(&base, radius);
    let mut size_rows = Vec::new();
    let mut size_bad = 0;
    for (n, &s) in sizes.iter().enumerate() {
        let expected = expected_sphere_size(p, n);
        size_bad += (BigUint::from(s) != expected) as usize;
        size_rows.push(format!("{n},{s},{expected}"));
    }
    checks.push(("sphere-sizes", sizes.len(), size_bad));
    checks.push(("no-cycles", 1, (cycles != 0) as usize));

    let pool: Vec<TreeVertex> = (0..=radius.min(3)).flat_map(|n| sphere(&base, n)).collect();
    let mut rng = stream(seed, "tree-neighbors", 0);
    let mut bad = 0;
    for _ in 0..samples {
        let v = pool.choose(&mut rng).expect("pool contains the base vertex");
        let nb = v.neighbors();
        let distinct: std::collections::HashSet<_> = nb.iter().collect();
        bad += !(nb.len() == p as usize + 1
            && distinct.len() == nb.len()
            && nb.iter().all(|w| v.distance(w) == 1 && w.neighbors().contains(v))) as usize;
    }
    checks.push(("neighbors", samples, bad));

    let mut rng = stream(seed, "tree-stabilizer", 0);
    let mut bad = 0;
    for _ in 0..samples {
        let g = random_sl2_zp(&qp, &mut rng);
        bad += (bttree::act(&g, &base).map_err(&err)? != base) as usize;
    }
    checks.push(("sl2-zp-fixes-base", samples, bad));

    let mut rng = stream(seed, "tree-isometry", 0);
    let mut bad = 0;
    let b = (p * p) as i64;
    for _ in 0..samples {
        let g = loop {
            let m = random_int_matrix(&qp, &mut rng, b);
            if m.det().is_zero() == Agreement::Distinct {
                break m;
            }
        };
        let v = pool.choose(&mut rng).expect("nonempty");
        let w = pool.choose(&mut rng).expect("nonempty");
        let gv = bttree::act(&g, v).map_err(&err)?;
        let gw = bttree::act(&g, w).map_err(&err)?;
        bad += (gv.distance(&gw) != v.distance(w)) as usize;
    }
    checks.push(("isometry", samples, bad));

    let passed = checks.iter().all(|c| c.2 == 0);
    let failures: usize = checks.iter().map(|c| c.2).sum();
    let line = format!("tree: p={p}, spheres to radius {radius}, {} checks, {failures} failures", checks.len());
    let result = json!({
        "prime": p,
        "sphere_sizes": sizes,
        "checks": checks.iter().map(|(n, c, f)| json!({"check": n, "cases": c, "failures": f})).collect::<Vec<_>>(),
    });
    let check_rows = checks.iter().map(|(n, c, f)| format!("{n},{c},{f}")).collect();
    Ok(Report::new(passed, line, result)
        .table("sphere_sizes.csv", "n,size,expected", size_rows)
        .table("checks.csv", "check,cases,failures", check_rows))
}

fn sphere_dist(cfg: &ExperimentConfig) -> Result<Report, CmdError> {
    let seed: u64 = cfg.get("seed")?;
    let spec1: GraphSpec = cfg.get("graph1")?;
    let spec2: GraphSpec = cfg.get("graph2")?;
    let root1: usize = cfg.get("root1")?;
    let root2: usize = cfg.get("root2")?;
    let n_max: usize = cfg.get("n_max")?;
    let err = module("treequot");
    let g1 = load_or_generate(&spec1).map_err(&err)?;
    let cover: CoupledCover = match cfg.raw("coupling") {
        "seeded" | "identity" => {
            let matching = if cfg.raw("coupling") == "seeded" { Matching::Seeded } else { Matching::Identity };
            let g2 = load_or_generate(&spec2).map_err(&err)?;
            build_cover(g1, g2, (root1, root2), seed, matching).map_err(&err)?
        }
        "diagonal" => {
            if spec1 != spec2 || root1 != root2 {
                return Err(cfg.bad("coupling", "diagonal needs graph2 = graph1 and root2 = root1").into());
            }
            CoupledCover::diagonal(g1, root1).map_err(&err)?
        }
        _ => return Err(cfg.bad("coupling", "expected seeded, identity or diagonal").into()),
    };
    let covering = check_covering(&cover);
    let dists = sphere_distributions(&cover, n_max);
    let surj = surjectivity_from(&dists, &cover);
    let mut cell_rows = Vec::new();
    let mut tv_rows = Vec::new();
    let mut summaries = Vec::new();
    for d in &dists {
        cell_rows.extend(csv_rows(d));
        let s = summarize(d, &cover).map_err(&err)?;
        tv_rows.push(format!(
            "{},{},{},{},{},{}",
            s.n, d.total, s.tv_uniform, s.tv_uniform_decimal, s.tv_edge_uniform, s.surjective
        ));
        summaries.push(s);
    }
    let last = summaries.last().expect("radius 0 is always present");
    let line = format!(
        "sphere-dist: {}x{} cells, surjective from n = {:?}, tv at n = {}: {:.6}, covering {}",
        cover.first().vertex_count(),
        cover.second().vertex_count(),
        surj.radius,
        last.n,
        last.tv_uniform_decimal,
        if covering.holds { "verified" } else { "BROKEN" }
    );
    let result = json!({
        "prime": cover.first().prime(),
        "covering": covering,
        "surjectivity": surj,
        "spheres": summaries,
    });
    Ok(Report::new(covering.holds, line, result)
        .table("sphere_dist.csv", "n,a,b,count,frequency", cell_rows)
        .table("tv.csv", "n,total,tv_uniform,tv_uniform_decimal,tv_edge_uniform,surjective", tv_rows))
}

fn density(cfg: &ExperimentConfig) -> Result<Report, CmdError> {
    let qp = field(cfg)?;
    let seed: u64 = cfg.get("seed")?;
    let level: u32 = cfg.get("level")?;
    let l_max: usize = cfg.get("l_max")?;
    let dedup: u32 = cfg.get("dedup_digits")?;
    let modes: Vec<CoverageMode> = match cfg.raw("mode") {
        "generic" => vec![CoverageMode::Generic { conjugator: random_conjugator(&qp, seed) }],
        "control" => vec![CoverageMode::Control],
        "both" => vec![CoverageMode::Generic { conjugator: random_conjugator(&qp, seed) }, CoverageMode::Control],
        _ => return Err(cfg.bad("mode", "expected generic, control or both").into()),
    };
    let err = module("lattices");
    let gens = lps_generators(qp.prime(), qp.precision()).map_err(&err)?;
    let mut rows = Vec::new();
    let mut sweeps = Vec::new();
    for mode in &modes {
        let sweep: Vec<CoverageReport> = coverage_sweep(&gens, mode, l_max, level, dedup).map_err(&err)?;
        let name = if mode.is_control() { "control" } else { "generic" };
        for r in &sweep {
            rows.push(format!(
                "{name},{},{},{},{},{},{},{},{},{},{},{}",
                r.word_radius,
                r.level,
                r.covered,
                r.target_order,
                r.target_fraction,
                r.target_fraction_decimal,
                r.group_order,
                r.fraction,
                r.fraction_decimal,
                r.qualifying_products,
                r.nonsquare_det
            ));
        }
        let full_at = sweep.iter().find(|r| r.is_full()).map(|r| r.word_radius);
        sweeps.push((name, full_at, sweep));
    }
    let clean = sweeps.iter().flat_map(|s| &s.2).all(|r| r.nonsquare_det == 0);
    let line = sweeps
        .iter()
        .map(|(name, full, sweep)| {
            format!("{name}: full coverage at L = {full:?}, {} at L = {l_max}", sweep.last().unwrap().target_fraction)
        })
        .collect::<Vec<_>>()
        .join("; ");
    let result = json!({
        "generators": gens.iter().map(|g| g.quad).collect::<Vec<_>>(),
        "sweeps": sweeps.iter().map(|(name, full, sweep)| json!({
            "mode": name,
            "full_coverage_radius": full,
            "reports": sweep,
        })).collect::<Vec<_>>(),
    });
    let mut report = Report::new(clean, format!("density: p={} k={level}; {line}", qp.prime()), result).table(
        "density.csv",
        "mode,word_radius,level,covered,target_order,target_fraction,target_fraction_decimal,group_order,fraction,fraction_decimal,qualifying_products,nonsquare_det",
        rows,
    );
    report.texts.push(("generators.txt".into(), generators_text(&gens)));
    Ok(report)
}
