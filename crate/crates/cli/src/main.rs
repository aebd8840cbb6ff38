//! `qoracle`: reproducible experiments on quantum query oracles.
//!
//! Every command prints (or writes with `--out`) a JSON document holding the
//! tool version, the resolved configuration, the seed, the wall-clock
//! duration and the result. Exit status is 0 on success, 1 when a numerical
//! contract fails and 2 for bad input.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use qoracle::bounds::{adversary_pair, bernstein_ratio, glp_lower_bound, glp_min_error, lemma1_bound, mainthm_bound, FunctionPair};
use qoracle::circuit::{approx_error, minimal_simulates_standard, simulate_min_via_std, CircuitSpec, EXACT_TOL};
use qoracle::classify::{classify, enumerate_functions, enumerate_permutations, function_family, ClassifyOptions, Domain};
use qoracle::json::{read_json, to_string_fixed, write_atomic};
use qoracle::optimize::{all_patterns, canonical_patterns, error_floor, optimize_circuit, OptimizerConfig};
use qoracle::oracle::{FunctionTable, GPreset, GlpSpec, Oracle};
use qoracle::suite::{criterion_12, run_acceptance};
use qoracle::trig::{degree_trace, TrigPoly};
use qoracle::{Error, Result};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

#[derive(Parser, Debug)]
#[command(name = "qoracle", version, about = "Experiments on quantum query oracles")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Build a query matrix or its eigensystem.
    Oracle {
        #[command(subcommand)]
        action: OracleAction,
    },
    /// Decide the nonentangled / basic / simple properties of an oracle instance.
    Classify(ClassifyArgs),
    /// Check the constructive simulations between the minimal and standard oracles.
    Simulate {
        #[command(subcommand)]
        action: SimulateAction,
    },
    /// Symbolic propagation of a circuit.
    Degree {
        #[command(subcommand)]
        action: DegreeAction,
    },
    /// Lower-bound evaluators.
    Bound {
        #[command(subcommand)]
        action: BoundAction,
    },
    /// Search for the best constants of an N-query circuit.
    Optimize(OptimizeArgs),
    /// Experiment suites.
    Suite {
        #[command(subcommand)]
        action: SuiteAction,
    },
}

#[derive(Args, Debug, Clone)]
struct Common {
    /// Write the JSON result here instead of stdout.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Also write a CSV table here.
    #[arg(long, global = true)]
    csv: Option<PathBuf>,
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Tolerance below which an error counts as exact.
    #[arg(long, global = true)]
    tol: Option<f64>,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum Kind {
    Std,
    Cp,
    Min,
    Glp,
}

#[derive(Args, Debug, Clone)]
struct OracleSel {
    #[arg(long, value_enum)]
    kind: Kind,
    /// Multiplier of the complex phase oracle.
    #[arg(long, default_value_t = 1)]
    d: i64,
    /// Generic local phase parameters as JSON.
    #[arg(long)]
    glp: Option<PathBuf>,
    /// Shape function of a generated generic local phase oracle.
    #[arg(long, default_value = "linear")]
    g: String,
    /// Coefficient of a generated generic local phase oracle.
    #[arg(long = "C", default_value_t = 1.0)]
    c: f64,
    /// Band half-width of a generated generic local phase oracle.
    #[arg(long, default_value_t = 0)]
    band: usize,
}

impl OracleSel {
    fn build(&self, n: usize) -> Result<Oracle> {
        oracle_of(self.kind, self.d, self.glp.as_deref(), &self.g, self.c, self.band, n)
    }

    fn config(&self) -> Value {
        json!({"kind": format!("{:?}", self.kind).to_lowercase(), "d": self.d, "glp": self.glp, "g": self.g, "C": self.c, "band": self.band})
    }
}

fn oracle_of(kind: Kind, d: i64, glp: Option<&Path>, g: &str, c: f64, band: usize, n: usize) -> Result<Oracle> {
    Ok(match kind {
        Kind::Std => Oracle::Standard,
        Kind::Cp => Oracle::ComplexPhase { d },
        Kind::Min => Oracle::Minimal,
        Kind::Glp => {
            let spec = match glp {
                Some(path) => read_json::<GlpSpec>(path)?,
                None => GlpSpec::banded(n, GPreset::parse(g)?, band, c)?,
            };
            spec.validate(n)?;
            Oracle::GenericLocalPhase { spec }
        }
    })
}

#[derive(Subcommand, Debug)]
enum OracleAction {
    Build(OracleArgs),
    Eig(OracleArgs),
}

#[derive(Args, Debug)]
struct OracleArgs {
    #[command(flatten)]
    oracle: OracleSel,
    /// Function table as JSON `{"n", "m", "table"}`.
    #[arg(long = "fn")]
    function: PathBuf,
    #[command(flatten)]
    common: Common,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum DomainArg {
    All,
    Perm,
    Bounded,
}

#[derive(Args, Debug)]
struct ClassifyArgs {
    #[command(flatten)]
    oracle: OracleSel,
    #[arg(long)]
    n: usize,
    #[arg(long)]
    m: usize,
    #[arg(long, value_enum, default_value = "all")]
    domain: DomainArg,
    /// Orbit bound for `--domain bounded`.
    #[arg(long, default_value_t = 2)]
    p_bound: usize,
    /// Include witness bases in the report.
    #[arg(long)]
    witness: bool,
    #[command(flatten)]
    common: Common,
}

#[derive(Subcommand, Debug)]
enum SimulateAction {
    /// Standard queries simulating the minimal oracle at one permutation.
    MinViaStd {
        #[arg(long = "fn")]
        function: PathBuf,
        #[arg(long)]
        p_bound: usize,
        /// Also write the circuit here.
        #[arg(long)]
        circuit_out: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Two minimal queries simulating the standard oracle on all permutations of n bits.
    StdViaMin {
        #[arg(long)]
        n: usize,
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Subcommand, Debug)]
enum DegreeAction {
    Trace {
        #[arg(long)]
        circuit: PathBuf,
        #[command(flatten)]
        oracle: OracleSel,
        /// Function fixing the eigenbasis.
        #[arg(long = "fn")]
        function: PathBuf,
        /// Basis input state.
        #[arg(long, default_value_t = 0)]
        input: usize,
        /// Random functions at which to cross-check evaluation.
        #[arg(long, default_value_t = 20)]
        checks: usize,
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Args, Debug)]
struct PairArgs {
    /// Circuit JSON.
    #[arg(long)]
    circuit: PathBuf,
    /// Oracle the circuit queries.
    #[arg(long, value_enum)]
    q1: Kind,
    /// Oracle being approximated.
    #[arg(long, value_enum, default_value = "std")]
    q2: Kind,
    #[arg(long, default_value_t = 1)]
    d: i64,
    #[arg(long)]
    glp: Option<PathBuf>,
    #[arg(long, default_value = "linear")]
    g: String,
    #[arg(long = "C", default_value_t = 1.0)]
    c: f64,
    #[arg(long, default_value_t = 0)]
    band: usize,
}

impl PairArgs {
    fn oracles(&self, n: usize) -> Result<(Oracle, Oracle)> {
        let build = |k| oracle_of(k, self.d, self.glp.as_deref(), &self.g, self.c, self.band, n);
        Ok((build(self.q1)?, build(self.q2)?))
    }
}

#[derive(Subcommand, Debug)]
enum BoundAction {
    /// Single-function bound.
    Lemma1 {
        #[command(flatten)]
        pair: PairArgs,
        #[arg(long = "fn")]
        function: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Two-function bound; defaults to the adversary pair for `--n`, `--m`.
    Mainthm {
        #[command(flatten)]
        pair: PairArgs,
        #[arg(long = "fn")]
        function: Option<PathBuf>,
        #[arg(long = "fn2")]
        function2: Option<PathBuf>,
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        m: Option<usize>,
        #[command(flatten)]
        common: Common,
    },
    /// Closed-form query bound for generic local phase oracles.
    Glp {
        #[arg(long)]
        m: usize,
        #[arg(long)]
        delta: f64,
        #[arg(long, default_value = "linear")]
        g: String,
        /// Derivative bound; defaults to that of `--g`.
        #[arg(long = "B")]
        b: Option<f64>,
        #[arg(long = "C")]
        c: f64,
        /// Also report the smallest error reachable with this many queries.
        #[arg(long)]
        queries: Option<usize>,
        #[command(flatten)]
        common: Common,
    },
    /// Difference quotient of a single-variable trigonometric polynomial.
    Bernstein {
        /// Polynomial JSON `{"D": 1, "terms": [...]}`.
        #[arg(long)]
        poly: PathBuf,
        #[arg(long)]
        theta1: f64,
        #[arg(long)]
        theta2: f64,
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum Family {
    All,
    Perm,
    Adversary,
}

#[derive(Args, Debug)]
struct OptimizeArgs {
    #[arg(long, value_enum)]
    q1: Kind,
    #[arg(long, value_enum, default_value = "std")]
    q2: Kind,
    #[arg(long)]
    n: usize,
    #[arg(long)]
    m: usize,
    /// Number of queries.
    #[arg(long = "queries", short = 'N')]
    queries: usize,
    /// Explicit powers such as `1,-1`; overrides the pattern search.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    powers: Option<Vec<i32>>,
    #[arg(long, value_enum, default_value = "adversary")]
    family: Family,
    #[arg(long, default_value_t = 20)]
    restarts: usize,
    #[arg(long, default_value_t = 2000)]
    iterations: usize,
    /// Search every ±1 pattern (N ≤ 4) instead of the two canonical ones.
    #[arg(long)]
    all_patterns: bool,
    /// Report the error floor for every query count up to N.
    #[arg(long)]
    floor: bool,
    #[arg(long, default_value_t = 1)]
    d: i64,
    #[arg(long)]
    glp: Option<PathBuf>,
    #[arg(long, default_value = "linear")]
    g: String,
    #[arg(long = "C", default_value_t = 1.0)]
    c: f64,
    #[arg(long, default_value_t = 0)]
    band: usize,
    /// Also write the best circuit here.
    #[arg(long)]
    circuit_out: Option<PathBuf>,
    #[command(flatten)]
    common: Common,
}

#[derive(Subcommand, Debug)]
enum SuiteAction {
    /// Run every acceptance criterion.
    Acceptance {
        /// Run twice and compare payloads for the determinism criterion.
        #[arg(long)]
        twice: bool,
        #[command(flatten)]
        common: Common,
    },
}

/// What a command produced.
struct Outcome {
    config: Value,
    result: Value,
    csv: Option<Vec<Vec<String>>>,
    /// False when the experiment ran but its own check failed.
    passed: bool,
}

impl Outcome {
    fn ok(config: Value, result: Value) -> Self {
        Self { config, result, csv: None, passed: true }
    }

    fn table(mut self, rows: Vec<Vec<String>>) -> Self {
        self.csv = Some(rows);
        self
    }
}

fn value<T: serde::Serialize>(v: &T) -> Result<Value> {
    Ok(serde_json::to_value(v)?)
}

fn load_fn(path: &Path) -> Result<FunctionTable> {
    read_json(path)
}

fn cell(v: f64) -> String {
    format!("{v:.16e}")
}

fn oracle_cmd(action: &OracleAction) -> Result<(Outcome, &Common)> {
    let (args, eig) = match action {
        OracleAction::Build(a) => (a, false),
        OracleAction::Eig(a) => (a, true),
    };
    let f = load_fn(&args.function)?;
    let oracle = args.oracle.build(f.n())?;
    let config = json!({"oracle": args.oracle.config(), "fn": args.function, "function": f});
    let out = if eig {
        let sys = oracle.eigensystem(&f)?;
        let rows = std::iter::once(vec!["x".into(), "i".into(), "phase".into()])
            .chain(sys.labels.iter().flatten().zip(&sys.phases).map(|(l, p)| vec![l.x.to_string(), l.i.to_string(), cell(*p)]))
            .collect();
        Outcome::ok(config, json!({"id": oracle.id(), "eigensystem": value(&sys)?})).table(rows)
    } else {
        let q = oracle.query(&f)?;
        Outcome::ok(config, json!({"id": oracle.id(), "dim": q.dim(), "matrix": value(&q)?}))
    };
    Ok((out, &args.common))
}

fn classify_cmd(a: &ClassifyArgs) -> Result<Outcome> {
    let domain = match a.domain {
        DomainArg::All => Domain::All,
        DomainArg::Perm => Domain::Permutations,
        DomainArg::Bounded => Domain::BoundedOrbits { p_bound: a.p_bound },
    };
    let oracle = a.oracle.build(a.n)?;
    let r = classify(&oracle, a.n, a.m, &domain, ClassifyOptions { witness: a.witness })?;
    r.check_hierarchy()?;
    let config = json!({"oracle": a.oracle.config(), "n": a.n, "m": a.m, "domain": value(&domain)?, "witness": a.witness});
    let rows = vec![
        vec!["oracle".into(), "n".into(), "m".into(), "nonentangled".into(), "basic".into(), "simple".into()],
        vec![r.oracle.clone(), a.n.to_string(), a.m.to_string(), r.nonentangled.holds.to_string(), r.basic.holds.to_string(), r.simple.holds.to_string()],
    ];
    let mut result = json!({
        "nonentangled": r.nonentangled.holds,
        "basic": r.basic.holds,
        "simple": r.simple.holds,
    });
    result["report"] = value(&r)?;
    Ok(Outcome::ok(config, result).table(rows))
}

fn report_rows(r: &qoracle::circuit::SimulationReport) -> Vec<Vec<String>> {
    std::iter::once(vec!["function".into(), "error".into()])
        .chain(r.functions.iter().zip(&r.errors).map(|(f, e)| vec![format!("{:?}", f.values()).replace(',', " "), cell(*e)]))
        .collect()
}

fn simulate_cmd(action: &SimulateAction) -> Result<(Outcome, &Common)> {
    match action {
        SimulateAction::MinViaStd { function, p_bound, circuit_out, common } => {
            let f = load_fn(function)?;
            let (mut report, c) = simulate_min_via_std(&f, *p_bound)?;
            let tol = common.tol.unwrap_or(EXACT_TOL);
            report.exact = report.max_error <= tol;
            if let Some(path) = circuit_out {
                write_atomic(path, to_string_fixed(&c)?.as_bytes())?;
            }
            let config = json!({"fn": function, "function": f, "p_bound": p_bound, "tol": tol});
            let rows = report_rows(&report);
            let passed = report.exact;
            let mut out = Outcome::ok(config, json!({"report": value(&report)?, "M": c.system_bits, "workspace_bits": c.workspace_bits})).table(rows);
            out.passed = passed;
            Ok((out, common))
        }
        SimulateAction::StdViaMin { n, common } => {
            let c = minimal_simulates_standard(*n)?;
            let fs = enumerate_permutations(*n)?;
            let mut report = approx_error(&c, &Oracle::Minimal, &Oracle::Standard, &fs)?;
            let tol = common.tol.unwrap_or(EXACT_TOL);
            report.exact = report.max_error <= tol;
            let config = json!({"n": n, "tol": tol});
            let rows = report_rows(&report);
            let passed = report.exact;
            let mut out = Outcome::ok(config, json!({"report": value(&report)?, "circuit": value(&c)?})).table(rows);
            out.passed = passed;
            Ok((out, common))
        }
    }
}

fn degree_cmd(action: &DegreeAction) -> Result<(Outcome, &Common)> {
    let DegreeAction::Trace { circuit, oracle, function, input, checks, common } = action;
    let c = CircuitSpec::load(circuit)?;
    let f = load_fn(function)?;
    let q = oracle.build(f.n())?;
    let mut rng = ChaCha8Rng::seed_from_u64(common.seed);
    let check: Vec<FunctionTable> = (0..*checks).map(|_| FunctionTable::random(f.n(), f.m(), &mut rng)).collect::<Result<_>>()?;
    let t = degree_trace(&c, &q, &f, *input, &check)?;
    let tol = common.tol.unwrap_or(1e-9);
    let passed = t.final_degree as usize <= t.n_queries && t.max_eval_error <= tol;
    let rows = std::iter::once(vec!["gate".into(), "query".into(), "degree".into(), "terms".into()])
        .chain(t.steps.iter().map(|s| vec![s.gate.to_string(), s.query.to_string(), s.degree.to_string(), s.terms.to_string()]))
        .collect();
    let config = json!({"circuit": circuit, "oracle": oracle.config(), "fn": function, "input": input, "checks": checks, "tol": tol});
    let mut out = Outcome::ok(config, value(&t)?).table(rows);
    out.passed = passed;
    Ok((out, common))
}

fn bound_cmd(action: &BoundAction) -> Result<(Outcome, &Common)> {
    match action {
        BoundAction::Lemma1 { pair, function, common } => {
            let c = CircuitSpec::load(&pair.circuit)?;
            let f = load_fn(function)?;
            let (q1, q2) = pair.oracles(f.n())?;
            let r = lemma1_bound(&c, &q1, &q2, &f)?;
            let config = json!({"circuit": pair.circuit, "q1": q1.id(), "q2": q2.id(), "fn": function});
            let passed = r.is_sound(1e-7);
            let mut out = Outcome::ok(config, value(&r)?);
            out.passed = passed;
            Ok((out, common))
        }
        BoundAction::Mainthm { pair, function, function2, n, m, common } => {
            let c = CircuitSpec::load(&pair.circuit)?;
            let fp = match (function, function2, n, m) {
                (Some(a), Some(b), _, _) => FunctionPair::new(load_fn(a)?, load_fn(b)?)?,
                (None, None, Some(n), Some(m)) => adversary_pair(*n, *m)?,
                _ => return Err(Error::InvalidInput("give --fn and --fn2, or --n and --m for the adversary pair".into())),
            };
            let (q1, q2) = pair.oracles(fp.f1.n())?;
            let r = mainthm_bound(&c, &q1, &q2, &fp)?;
            let config = json!({"circuit": pair.circuit, "q1": q1.id(), "q2": q2.id(), "pair": value(&fp)?});
            let passed = r.is_sound(1e-7);
            let mut out = Outcome::ok(config, value(&r)?);
            out.passed = passed;
            Ok((out, common))
        }
        BoundAction::Glp { m, delta, g, b, c, queries, common } => {
            let b = match b {
                Some(b) => *b,
                None => GPreset::parse(g)?.derivative_bound(),
            };
            let n_min = glp_lower_bound(*m, *delta, b, *c)?;
            let mut result = json!({"N_min": n_min});
            if let Some(nq) = queries {
                result["min_error"] = json!(glp_min_error(*m, *nq, b, *c)?);
            }
            let config = json!({"m": m, "delta": delta, "g": g, "B": b, "C": c, "queries": queries});
            Ok((Outcome::ok(config, result), common))
        }
        BoundAction::Bernstein { poly, theta1, theta2, common } => {
            let t: TrigPoly = read_json(poly)?;
            let ratio = bernstein_ratio(&t, *theta1, *theta2)?;
            let degree = t.degree();
            let passed = ratio <= degree as f64 + 1e-9;
            let config = json!({"poly": poly, "theta1": theta1, "theta2": theta2});
            let mut out = Outcome::ok(config, json!({"ratio": ratio, "degree": degree, "within_degree": passed}));
            out.passed = passed;
            Ok((out, common))
        }
    }
}

fn optimize_cmd(a: &OptimizeArgs) -> Result<Outcome> {
    let build = |k| oracle_of(k, a.d, a.glp.as_deref(), &a.g, a.c, a.band, a.n);
    let (q1, q2) = (build(a.q1)?, build(a.q2)?);
    let fs = match a.family {
        Family::All => enumerate_functions(a.n, a.m)?,
        Family::Perm => function_family(a.n, a.m, &Domain::Permutations)?,
        Family::Adversary => {
            let p = adversary_pair(a.n, a.m)?;
            vec![p.f1, p.f2]
        }
    };
    if a.all_patterns && a.queries > 4 {
        return Err(Error::OutOfRange("--all-patterns supports at most 4 queries".into()));
    }
    let cfg = OptimizerConfig { restarts: a.restarts, max_iterations: a.iterations, master_seed: a.common.seed, ..OptimizerConfig::default() };
    let config = json!({
        "q1": q1.id(), "q2": q2.id(), "n": a.n, "m": a.m, "queries": a.queries, "powers": a.powers,
        "family": format!("{:?}", a.family).to_lowercase(), "optimizer": value(&cfg)?, "all_patterns": a.all_patterns, "floor": a.floor,
    });
    if a.floor {
        let rows = if a.all_patterns {
            error_floor(&q1, &q2, a.queries, &fs, &cfg, all_patterns)?
        } else {
            error_floor(&q1, &q2, a.queries, &fs, &cfg, canonical_patterns)?
        };
        let table = std::iter::once(vec!["N".into(), "found".into(), "floor".into()])
            .chain(rows.iter().map(|r| vec![r.n_queries.to_string(), cell(r.found), cell(r.floor)]))
            .collect();
        return Ok(Outcome::ok(config, json!({"floor": value(&rows)?})).table(table));
    }
    let patterns = match &a.powers {
        Some(p) if p.len() != a.queries => return Err(Error::InvalidInput(format!("{} powers for {} queries", p.len(), a.queries))),
        Some(p) => vec![p.clone()],
        None if a.all_patterns => all_patterns(a.queries),
        None => canonical_patterns(a.queries),
    };
    let mut best = None;
    for powers in &patterns {
        let r = optimize_circuit(&q1, &q2, &fs, powers, &cfg)?;
        if best.as_ref().is_none_or(|b: &qoracle::optimize::OptimizationResult| r.best_error < b.best_error) {
            best = Some(r);
        }
    }
    let mut best = best.ok_or_else(|| Error::InvalidInput("no power patterns".into()))?;
    if let Some(path) = &a.circuit_out {
        write_atomic(path, to_string_fixed(&best.circuit)?.as_bytes())?;
        best.circuit_ref = Some(path.display().to_string());
    }
    let table = std::iter::once(vec!["restart".into(), "seed".into(), "iterations".into(), "final_error".into()])
        .chain(best.restarts.iter().map(|t| vec![t.restart.to_string(), t.seed.to_string(), t.iterations.to_string(), cell(t.final_error)]))
        .collect();
    Ok(Outcome::ok(config, value(&best)?).table(table))
}

fn suite_cmd(action: &SuiteAction) -> Result<(Outcome, &Common)> {
    let SuiteAction::Acceptance { twice, common } = action;
    let report = run_acceptance(common.seed)?;
    let mut criteria = value(&report.criteria)?;
    let mut passed = report.all_passed();
    if *twice {
        let again = run_acceptance(common.seed)?;
        let c12 = criterion_12(&report.payload()?, &again.payload()?);
        passed &= c12.passed;
        if let Value::Array(items) = &mut criteria {
            items.push(value(&c12)?);
        }
    }
    for line in report.lines() {
        eprintln!("{line}");
    }
    let table = std::iter::once(vec!["criterion".into(), "passed".into(), "value".into()])
        .chain(report.criteria.iter().map(|c| vec![c.id.to_string(), c.passed.to_string(), cell(c.value)]))
        .collect();
    let config = json!({"seed": common.seed, "twice": twice});
    let result = json!({"criteria": criteria, "ordering": value(&report.ordering)?, "all_passed": passed});
    let mut out = Outcome::ok(config, result).table(table);
    out.passed = passed;
    Ok((out, common))
}

fn write_csv(path: &Path, rows: &[Vec<String>]) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for row in rows {
        w.write_record(row).map_err(|e| Error::InvalidInput(e.to_string()))?;
    }
    let bytes = w.into_inner().map_err(|e| Error::InvalidInput(e.to_string()))?;
    write_atomic(path, &bytes)
}

fn run(cli: &Cli) -> Result<bool> {
    let start = Instant::now();
    let (name, (outcome, common)) = match &cli.command {
        Command::Oracle { action } => ("oracle", oracle_cmd(action)?),
        Command::Classify(a) => ("classify", (classify_cmd(a)?, &a.common)),
        Command::Simulate { action } => ("simulate", simulate_cmd(action)?),
        Command::Degree { action } => ("degree", degree_cmd(action)?),
        Command::Bound { action } => ("bound", bound_cmd(action)?),
        Command::Optimize(a) => ("optimize", (optimize_cmd(a)?, &a.common)),
        Command::Suite { action } => ("suite", suite_cmd(action)?),
    };
    let doc = json!({
        "tool": "qoracle",
        "version": env!("CARGO_PKG_VERSION"),
        "command": name,
        "config": outcome.config,
        "seed": common.seed,
        "duration_seconds": start.elapsed().as_secs_f64(),
        "result": outcome.result,
        "passed": outcome.passed,
    });
    let text = to_string_fixed(&doc)?;
    match &common.out {
        Some(path) => write_atomic(path, text.as_bytes())?,
        None => print!("{text}"),
    }
    if let (Some(path), Some(rows)) = (&common.csv, &outcome.csv) {
        write_csv(path, rows)?;
    }
    Ok(outcome.passed)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    if let Some(threads) = std::env::var("QORACLE_THREADS").ok().and_then(|v| v.parse::<usize>().ok()) {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(threads.max(1)).build_global();
    }
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_contract_violation() { 1 } else { 2 })
        }
    }
}
