use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::Write as _;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use extinction_core::canonical::canonical_process_from_graph;
use extinction_core::family::{detect_ascending_chains, ext_cardinality, CardinalityClass, FamilyGraph};
use extinction_core::format::{builtin_process, parse_subset, parse_type_list, read_family, read_process, FamilyInput};
use extinction_core::models::{
    build_example3_graph, example2_descriptors, example2_window_graph, example3_descriptors, figure1_graph,
    figure2_window, figure3_window,
};
use extinction_core::montecarlo::{estimate_event, write_estimates_csv, Event, MCConfig};
use extinction_core::relation::{check_family_conditions, FamilyCheck, RegularityReport, RelationKind, RELATION_TOL};
use extinction_core::solver::{solve_q0, solve_q_on, solve_qxa, Method};
use extinction_core::sweep::{run_sweep, SweepSpec};
use extinction_core::{Error, ProcessSpec, SolveConfig, SubsetSpec, TypeId, Window};

#[derive(Parser)]
#[command(name = "extinction", version, about = "Extinction probabilities of multitype branching processes")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve q(A) on a window of types.
    Solve(SolveArgs),
    /// Relations, primitive subsets, classes and the size of Ext for a family.
    Classify(ClassifyArgs),
    /// Monte Carlo estimate of an extinction event.
    Simulate(SimulateArgs),
    /// Level sweep of the grid example over r, written as CSV.
    Figure3(Figure3Args),
}

#[derive(Args)]
struct ProcessArgs {
    /// Process file in JSON.
    #[arg(long, conflicts_with = "builtin")]
    spec: Option<PathBuf>,
    /// Built-in process: example1, example2, cubic or binary.
    #[arg(long)]
    builtin: Option<String>,
    #[arg(long, default_value_t = 0.1)]
    p: f64,
    #[arg(long, default_value_t = 0.5)]
    q: f64,
    #[arg(long, default_value_t = 1.0)]
    r: f64,
    /// Parameter of the binary built-in.
    #[arg(long, default_value_t = 0.75)]
    a: f64,
}

impl ProcessArgs {
    fn load(&self) -> Result<ProcessSpec, Error> {
        if let Some(path) = &self.spec {
            return read_process(path);
        }
        let name = self.builtin.as_deref().unwrap_or("example1");
        let params: BTreeMap<String, f64> = match name {
            "example1" => [("p", self.p), ("q", self.q), ("r", self.r)].map(|(k, v)| (k.to_string(), v)).into(),
            "binary" => [("a".to_string(), self.a)].into(),
            _ => BTreeMap::new(),
        };
        builtin_process(name, &params)
    }
}

#[derive(Args)]
struct SolverArgs {
    /// Tolerance on successive truncations.
    #[arg(long, default_value_t = 1e-8)]
    tol: f64,
    /// Residual tolerance of the inner iteration.
    #[arg(long, default_value_t = 1e-12)]
    inner_tol: f64,
    /// Largest truncation size; the schedule doubles from 16 up to it.
    #[arg(long, default_value_t = 1024)]
    max_window: usize,
    #[arg(long, value_enum, default_value_t = MethodArg::Auto)]
    method: MethodArg,
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    Auto,
    Truncation,
    Recursion,
}

impl SolverArgs {
    fn config(&self) -> Result<SolveConfig, Error> {
        let schedule: Vec<usize> =
            std::iter::successors(Some(16usize), |w| Some(w * 2)).take_while(|w| *w <= self.max_window).collect();
        let cfg = SolveConfig {
            trunc_tol: self.tol,
            inner_tol: self.inner_tol,
            window_schedule: if schedule.is_empty() { vec![self.max_window.max(1)] } else { schedule },
            method: match self.method {
                MethodArg::Auto => Method::Auto,
                MethodArg::Truncation => Method::Truncation,
                MethodArg::Recursion => Method::Recursion,
            },
            ..SolveConfig::default()
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Args)]
struct SolveArgs {
    #[command(flatten)]
    process: ProcessArgs,
    #[command(flatten)]
    solver: SolverArgs,
    /// Subset: empty, all, level:i, phase:j, phase-prime:i or types:a;b.
    #[arg(long)]
    subset: String,
    /// Types to report, comma separated, e.g. "(0,0),(1,0)".
    #[arg(long, conflicts_with = "window")]
    types: Option<String>,
    /// Report on the first N types.
    #[arg(long)]
    window: Option<usize>,
    /// Also solve the never-visit and avoidance vectors.
    #[arg(long)]
    all: bool,
    #[arg(long)]
    json: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum ExampleArg {
    Figure1,
    Figure2,
    Figure3,
    Example2,
    Example3,
}

#[derive(Args)]
struct ClassifyArgs {
    /// Family file: an implication graph or subsets of a process.
    #[arg(long, conflicts_with = "example")]
    family: Option<PathBuf>,
    /// Built-in family graph.
    #[arg(long, value_enum)]
    example: Option<ExampleArg>,
    /// Window size for infinite built-in families.
    #[arg(long, default_value_t = 6)]
    window: usize,
    /// Check the family conditions on the canonical process with this b.
    #[arg(long)]
    canonical: Option<f64>,
    /// Tolerance for relation verdicts.
    #[arg(long, default_value_t = RELATION_TOL)]
    rel_tol: f64,
    #[command(flatten)]
    solver: SolverArgs,
    #[arg(long)]
    json: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum EventArg {
    ExtinctA,
    SurviveANeverVisitB,
    SurviveAExtinctB,
    NeverVisitB,
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    process: ProcessArgs,
    /// The set A.
    #[arg(long)]
    subset: String,
    /// The set B, for events that involve it.
    #[arg(long)]
    other: Option<String>,
    /// Type of the initial individual; defaults to the first type.
    #[arg(long)]
    from: Option<String>,
    #[arg(long, value_enum, default_value_t = EventArg::ExtinctA)]
    event: EventArg,
    #[arg(long, default_value_t = 10_000)]
    trials: u64,
    #[arg(long, default_value_t = 200)]
    horizon: u32,
    #[arg(long, default_value_t = 100_000)]
    cap: u64,
    #[arg(long, default_value_t = 0x5eed_2024)]
    seed: u64,
    /// Print a CSV row instead of JSON.
    #[arg(long)]
    csv: bool,
}

#[derive(Args)]
struct Figure3Args {
    #[arg(long, default_value_t = 0.1)]
    p: f64,
    #[arg(long, default_value_t = 0.5)]
    q: f64,
    /// A single r value.
    #[arg(long, conflicts_with = "r_list")]
    r: Option<f64>,
    /// Comma-separated r values.
    #[arg(long, value_delimiter = ',')]
    r_list: Option<Vec<f64>>,
    #[arg(long, default_value_t = 6)]
    levels: u64,
    /// Largest truncation size.
    #[arg(long, default_value_t = 1024)]
    window: usize,
    #[arg(long, default_value_t = 1e-8)]
    tol: f64,
    /// Accepted for symmetry with simulate; the sweep is deterministic.
    #[arg(long)]
    seed: Option<u64>,
    /// Accepted for symmetry with simulate; the sweep is deterministic.
    #[arg(long)]
    trials: Option<u64>,
    /// CSV output path; standard output when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

const DEFAULT_R_LIST: [f64; 15] = [0.05, 0.08, 0.1, 0.15, 0.2, 0.3, 0.32, 0.4, 0.47, 0.5, 0.57, 0.6, 0.64, 0.8, 1.0];

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Solve(a) => cmd_solve(a),
        Command::Classify(a) => cmd_classify(a),
        Command::Simulate(a) => cmd_simulate(a),
        Command::Figure3(a) => cmd_figure3(a),
    };
    match outcome {
        Ok(text) => {
            let mut out = std::io::stdout().lock();
            if out.write_all(text.as_bytes()).is_err() {
                return ExitCode::from(1);
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{}", json!({"error": e.kind(), "message": e.to_string()}));
            ExitCode::from(1)
        }
    }
}

fn report_window(spec: &ProcessSpec, types: Option<&str>, window: Option<usize>) -> Result<Window, Error> {
    match types {
        Some(list) => {
            let types = parse_type_list(list)?;
            for t in &types {
                spec.check_type(t)?;
            }
            Window::from_types(types)
        }
        None => {
            let n = window.unwrap_or(16);
            Ok(Window::initial(spec.typeset(), spec.typeset().len().map_or(n, |len| len.min(n))))
        }
    }
}

fn vector_json(v: &extinction_core::ProbVector) -> Value {
    Value::Array(v.iter().map(|(t, x)| json!({"type": t.to_string(), "q": x})).collect())
}

fn cmd_solve(args: SolveArgs) -> Result<String, Error> {
    let spec = args.process.load()?;
    let cfg = args.solver.config()?;
    let a = parse_subset(&args.subset)?;
    let window = report_window(&spec, args.types.as_deref(), args.window)?;
    let res = solve_q_on(&spec, &a, &window, &cfg)?;
    let extra =
        if args.all { Some((solve_q0(&spec, &a, &window, &cfg)?, solve_qxa(&spec, &a, &window, &cfg)?)) } else { None };
    if args.json {
        let mut out = json!({
            "process": spec.name(),
            "subset": res.subset,
            "q": vector_json(&res.vector),
            "method": res.method,
            "residual": res.residual,
            "iterations": res.iterations_used,
            "windows": res.windows_used,
            "converged": res.converged,
            "advisories": res.advisories,
        });
        if let Some((q0, qxa)) = &extra {
            out["q0"] = vector_json(q0);
            out["q_avoid"] = vector_json(qxa);
        }
        return Ok(format!("{}\n", serde_json::to_string_pretty(&out)?));
    }
    let mut s = String::new();
    let _ = writeln!(s, "process {}  subset {}", spec.name(), res.subset);
    match &extra {
        None => {
            let _ = writeln!(s, "{:>12}  {:>16}", "type", "q");
            for (t, x) in res.vector.iter() {
                let _ = writeln!(s, "{:>12}  {:>16.12}", t.to_string(), x);
            }
        }
        Some((q0, qxa)) => {
            let _ = writeln!(s, "{:>12}  {:>16}  {:>16}  {:>16}", "type", "q", "q_never_visit", "q_avoid");
            for (((t, x), y), z) in res.vector.iter().zip(q0.values()).zip(qxa.values()) {
                let _ = writeln!(s, "{:>12}  {:>16.12}  {:>16.12}  {:>16.12}", t.to_string(), x, y, z);
            }
        }
    }
    let _ = writeln!(s, "method      {}", res.method);
    let _ = writeln!(s, "converged   {}", res.converged);
    let _ = writeln!(s, "residual    {:.3e}", res.residual);
    let _ = writeln!(s, "iterations  {}", res.iterations_used);
    if let Some((k, l)) = res.windows_used.last() {
        let _ = writeln!(s, "last window k = {k}, l' = {l}");
    }
    for a in &res.advisories {
        let _ = writeln!(s, "advisory    {a}");
    }
    Ok(s)
}

struct Classified {
    name: String,
    graph: FamilyGraph,
    regularity: Option<RegularityReport>,
    descriptors: Option<(CardinalityClass, CardinalityClass)>,
    larger: Option<FamilyGraph>,
}

fn solve_family(
    spec: &ProcessSpec,
    members: &[SubsetSpec],
    cfg: &SolveConfig,
    tol: f64,
) -> Result<RegularityReport, Error> {
    let window = Window::initial(
        spec.typeset(),
        spec.typeset().len().map_or(cfg.reporting_window, |n| n.min(cfg.reporting_window)),
    );
    let solved = members.iter().map(|m| solve_q_on(spec, m, &window, cfg)).collect::<Result<Vec<_>, _>>()?;
    let solver = |s: &SubsetSpec| solve_q_on(spec, s, &window, cfg);
    let opts = FamilyCheck { tol, trunc_tol: cfg.trunc_tol, union_solver: Some(&solver), ..FamilyCheck::default() };
    check_family_conditions(members, &solved, &window, &opts)
}

fn cmd_classify(args: ClassifyArgs) -> Result<String, Error> {
    let cfg = args.solver.config()?;
    let n = args.window.max(2);
    let mut c = match (&args.family, args.example) {
        (Some(path), _) => match read_family(path)? {
            FamilyInput::Graph(graph) => Classified {
                name: path.display().to_string(),
                graph,
                regularity: None,
                descriptors: None,
                larger: None,
            },
            FamilyInput::Subsets { process, members } => {
                let report = solve_family(&process, &members, &cfg, args.rel_tol)?;
                Classified {
                    name: format!("{} on {}", path.display(), process.name()),
                    graph: report.implication_graph()?,
                    regularity: Some(report),
                    descriptors: None,
                    larger: None,
                }
            }
        },
        (None, Some(ex)) => {
            let (name, graph, larger, descriptors) = match ex {
                ExampleArg::Figure1 => ("figure1".to_string(), figure1_graph(), None, None),
                ExampleArg::Figure2 => ("figure2".into(), figure2_window(n)?, Some(figure2_window(2 * n)?), None),
                ExampleArg::Figure3 => ("figure3".into(), figure3_window(n)?, Some(figure3_window(2 * n)?), None),
                ExampleArg::Example2 => (
                    "example2".into(),
                    example2_window_graph(n as u64)?,
                    Some(example2_window_graph(2 * n as u64)?),
                    Some(example2_descriptors()),
                ),
                ExampleArg::Example3 => {
                    let depth = n.min(4);
                    (
                        "example3".into(),
                        build_example3_graph(depth)?,
                        Some(build_example3_graph(depth + 1)?),
                        Some(example3_descriptors()),
                    )
                }
            };
            Classified { name, graph, regularity: None, descriptors, larger }
        }
        (None, None) => return Err(Error::Validation("either --family or --example is required".into())),
    };
    if let (Some(b), None) = (args.canonical, &c.regularity) {
        if c.graph.is_window() {
            return Err(Error::Validation("the canonical process is built for finite families only".into()));
        }
        let canon = canonical_process_from_graph(&c.graph, b)?;
        c.regularity = Some(solve_family(&canon.spec, &canon.family, &cfg, args.rel_tol)?);
    }
    render_classification(&c, args.json)
}

fn relation_between(g: &FamilyGraph, i: usize, j: usize) -> RelationKind {
    match (g.implies(i, j), g.implies(j, i)) {
        (true, true) => RelationKind::Equivalent,
        (true, false) => RelationKind::Implies,
        (false, true) => RelationKind::ImpliedBy,
        (false, false) => RelationKind::Incomparable,
    }
}

fn render_classification(c: &Classified, as_json: bool) -> Result<String, Error> {
    let g = &c.graph;
    let n = g.len();
    let primitive = g.primitive_subsets(None)?;
    let rows = g.class_table()?;
    let chain_report = c.larger.as_ref().map(|l| detect_ascending_chains(g, l));
    let ext = match (c.descriptors, g.is_window()) {
        (Some((p, ch)), _) => ext_cardinality(p, ch),
        (None, false) => {
            ext_cardinality(CardinalityClass::Finite(Some(primitive.len() as u64)), CardinalityClass::Finite(Some(1)))
        }
        (None, true) => {
            let chains = if chain_report.as_ref().is_some_and(|r| r.probable_ascending_chain) {
                CardinalityClass::CountablyInfinite
            } else {
                CardinalityClass::Finite(None)
            };
            ext_cardinality(CardinalityClass::CountablyInfinite, chains)
        }
    };
    let solver_mismatch: Vec<String> = match &c.regularity {
        Some(rep) if rep.names.len() == n => (0..n)
            .flat_map(|i| (0..n).map(move |j| (i, j)))
            .filter(|&(i, j)| i != j && rep.matrix[i][j] != relation_between(g, i, j))
            .map(|(i, j)| format!("{} {} {}", g.label(i), rep.matrix[i][j].symbol(), g.label(j)))
            .collect(),
        _ => Vec::new(),
    };
    if as_json {
        let out = json!({
            "family": c.name,
            "vertices": g.labels(),
            "window": g.is_window(),
            "matrix": (0..n).map(|i| (0..n).map(|j| relation_between(g, i, j).symbol().to_string()).collect::<Vec<_>>()).collect::<Vec<_>>(),
            "primitive_subsets": primitive.iter().map(|p| g.render(p)).collect::<Vec<_>>(),
            "classes": rows.iter().map(|r| json!({
                "primitive": g.render(&r.primitive),
                "chains": g.render(&r.chains),
                "members": r.members.as_ref().map(|m| m.iter().map(|s| g.render(s)).collect::<Vec<_>>()),
            })).collect::<Vec<_>>(),
            "regularity": c.regularity,
            "solver_mismatches": solver_mismatch,
            "chains": chain_report,
            "ext": ext,
        });
        return Ok(format!("{}\n", serde_json::to_string_pretty(&out)?));
    }
    let mut s = String::new();
    let _ = writeln!(s, "family {} ({} members{})", c.name, n, if g.is_window() { ", window" } else { "" });
    let width = g.labels().iter().map(|l| l.chars().count()).max().unwrap_or(1).max(1);
    let _ = writeln!(s, "\nrelation matrix (row vs column)");
    let _ = write!(s, "{:width$}", "");
    for l in g.labels() {
        let _ = write!(s, " {l:>width$}");
    }
    let _ = writeln!(s);
    for i in 0..n {
        let _ = write!(s, "{:>width$}", g.label(i));
        for j in 0..n {
            let _ = write!(s, " {:>width$}", relation_between(g, i, j).symbol());
        }
        let _ = writeln!(s);
    }
    if let Some(rep) = &c.regularity {
        let _ = writeln!(s, "\nregularity");
        for cond in &rep.conditions {
            let _ = writeln!(s, "  {} {:?}: {}", cond.condition, cond.verdict, cond.detail);
        }
        let _ = writeln!(s, "  note: {}", rep.caveat);
        if !solver_mismatch.is_empty() {
            let _ = writeln!(s, "  solver relations differing from the graph: {}", solver_mismatch.join(", "));
        }
    }
    let _ = writeln!(s, "\nprimitive subsets ({})", primitive.len());
    let _ = writeln!(s, "  {}", primitive.iter().map(|p| g.render(p)).collect::<Vec<_>>().join(" "));
    let _ = writeln!(s, "\nclasses ({})", rows.len());
    for r in &rows {
        match &r.members {
            Some(m) => {
                let _ = writeln!(
                    s,
                    "  {:<12} {}",
                    g.render(&r.primitive),
                    m.iter().map(|x| g.render(x)).collect::<Vec<_>>().join(" ~ ")
                );
            }
            None => {
                let _ = writeln!(s, "  {}", g.render(&r.primitive));
            }
        }
    }
    if let Some(cr) = &chain_report {
        let _ = writeln!(
            s,
            "\nlongest chain {} -> {} on the larger window{}",
            cr.small_window_longest,
            cr.large_window_longest,
            if cr.probable_ascending_chain { " (probable ascending chain)" } else { "" }
        );
    }
    let _ = writeln!(
        s,
        "\nExt: {ext}{}",
        if c.descriptors.is_some() { " (from the family's exact descriptors)" } else { "" }
    );
    Ok(s)
}

fn cmd_simulate(args: SimulateArgs) -> Result<String, Error> {
    let spec = args.process.load()?;
    let a = parse_subset(&args.subset)?;
    let b = args.other.as_deref().map(parse_subset).transpose()?;
    let x: TypeId = match &args.from {
        Some(from) => from.parse()?,
        None => spec.typeset().type_at(0).ok_or_else(|| Error::Validation("the typeset is empty".into()))?,
    };
    spec.check_type(&x)?;
    let event = match args.event {
        EventArg::ExtinctA => Event::ExtinctA,
        EventArg::SurviveANeverVisitB => Event::SurviveANeverVisitB,
        EventArg::SurviveAExtinctB => Event::SurviveAExtinctB,
        EventArg::NeverVisitB => Event::NeverVisitB,
    };
    if event != Event::ExtinctA && b.is_none() {
        return Err(Error::Validation("this event needs --other".into()));
    }
    let mc = MCConfig {
        trials: args.trials,
        horizon: args.horizon,
        population_cap: args.cap,
        seed: args.seed,
        ..MCConfig::default()
    };
    let est = estimate_event(&spec, &x, event, &a, b.as_ref(), &mc)?;
    if args.csv {
        let mut bytes = Vec::new();
        write_estimates_csv(&mut bytes, std::slice::from_ref(&est))?;
        return String::from_utf8(bytes).map_err(|e| Error::Parse(e.to_string()));
    }
    let out = json!({"process": spec.name(), "from": x.to_string(), "subset": a.name(), "other": b.as_ref().map(|b| b.name()), "estimate": est});
    Ok(format!("{}\n", serde_json::to_string_pretty(&out)?))
}

fn cmd_figure3(args: Figure3Args) -> Result<String, Error> {
    let r_values = match (args.r, args.r_list) {
        (Some(r), _) => vec![r],
        (None, Some(list)) => list,
        (None, None) => DEFAULT_R_LIST.to_vec(),
    };
    let solver = SolverArgs { tol: args.tol, inner_tol: 1e-12, max_window: args.window, method: MethodArg::Auto };
    let cfg = solver.config()?;
    let sweep = SweepSpec::new(args.p, args.q, r_values, args.levels);
    let result = run_sweep(&sweep, &cfg)?;
    let csv = result.to_csv_string()?;
    match &args.out {
        None => Ok(csv),
        Some(path) => {
            std::fs::write(path, csv)?;
            let mut s = String::new();
            let _ = writeln!(s, "{:>8} {:>9} {:>9} {:>14}", "r", "distinct", "predicted", "all converged");
            for pt in &result.points {
                let _ = writeln!(s, "{:>8} {:>9} {:>9} {:>14}", pt.r, pt.distinct, pt.predicted, pt.all_converged());
            }
            let _ = writeln!(s, "wrote {}", path.display());
            Ok(s)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;
    use extinction_core::models::single_type_cubic;

    #[test]
    fn command_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn report_window_is_capped_by_finite_typesets() {
        let spec = single_type_cubic();
        assert_eq!(report_window(&spec, None, Some(10)).unwrap().len(), 1);
        assert!(report_window(&spec, Some("(0,0)"), None).is_err());
    }

    #[test]
    fn relation_from_graph_edges() {
        let g = figure1_graph();
        assert_eq!(relation_between(&g, 1, 0), RelationKind::Implies);
        assert_eq!(relation_between(&g, 0, 1), RelationKind::ImpliedBy);
        assert_eq!(relation_between(&g, 0, 3), RelationKind::Incomparable);
    }
}
