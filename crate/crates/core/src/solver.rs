//! Extinction probability vectors by truncated functional iteration.
//!
//! All iterations run on `u = 1 - s`. The iteration for a minimal fixed point
//! starts from `u = 1` and decreases; the one for a maximal fixed point starts
//! from `u = 0` and increases. Convergence is declared when every coordinate
//! changes by at most `inner_tol` relative to its own size, so coordinates
//! whose extinction probability is extremely close to one still converge to
//! full relative precision.
//!
//! `q(A)` is obtained in one of two ways.
//!
//! * Truncation: the first `k` types of `A` and the first `l` types of the
//!   complement keep their laws, later `A`-types are immortal and later
//!   complement types are sterile; `(k, l)` grows along the window schedule.
//!   This converges to `q(A)` for irreducible processes.
//! * Recursion: `q0(A)` (never visiting `A`) is computed as the maximal fixed
//!   point of the map that is zero on `A`, and `G` is then iterated from it.
//!   This is exact in the limit for every process and is used for reducible
//!   processes.

use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::law::{one_minus_pow, union_prob, CountLaw, OffspringLaw};
use crate::process::ProcessSpec;
use crate::subset::SubsetSpec;
use crate::types::{ProbVector, TypeId, Window};

/// How `q(A)` is computed.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// Truncation for irreducible processes, recursion otherwise.
    Auto,
    Truncation,
    Recursion,
}

/// Tolerances and schedules for the solver.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolveConfig {
    /// Relative change per coordinate at which functional iteration stops.
    pub inner_tol: f64,
    /// Sup-norm change across truncation steps at which growth stops.
    pub trunc_tol: f64,
    /// Increasing window sizes for truncation and windowed recursion.
    pub window_schedule: Vec<usize>,
    pub max_inner_iters: usize,
    /// Grow `k` and `l` together; otherwise take nested limits.
    pub joint_schedule: bool,
    /// Retry with nested limits when the coupled schedule does not stabilise.
    pub fallback_nested: bool,
    /// Number of leading types on which results are reported and compared.
    pub reporting_window: usize,
    /// Coordinates smaller than this are compared in absolute terms.
    pub relative_floor: f64,
    pub method: Method,
}

impl Default for SolveConfig {
    fn default() -> Self {
        SolveConfig {
            inner_tol: 1e-12,
            trunc_tol: 1e-8,
            window_schedule: (0..=6).map(|m| 16usize << m).collect(),
            max_inner_iters: 200_000,
            joint_schedule: true,
            fallback_nested: true,
            reporting_window: 16,
            relative_floor: 1e-200,
            method: Method::Auto,
        }
    }
}

impl SolveConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.inner_tol > 0.0 && self.trunc_tol > 0.0 && self.relative_floor > 0.0) {
            return Err(Error::Validation("tolerances must be positive".into()));
        }
        if self.window_schedule.is_empty() || self.window_schedule.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Validation("window schedule must be non-empty and strictly increasing".into()));
        }
        if self.window_schedule[0] == 0 || self.max_inner_iters == 0 {
            return Err(Error::Validation("window sizes and iteration limits must be positive".into()));
        }
        Ok(())
    }

    /// Parses `key = value` lines; `#` starts a comment. Unknown keys are
    /// rejected.
    pub fn from_key_values(text: &str) -> Result<Self> {
        let mut cfg = SolveConfig::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Parse(format!("line {}: expected key = value", lineno + 1)))?;
            let (key, value) = (key.trim(), value.trim());
            let bad = || Error::Parse(format!("line {}: bad value {value:?} for {key}", lineno + 1));
            match key {
                "inner_tol" => cfg.inner_tol = value.parse().map_err(|_| bad())?,
                "trunc_tol" => cfg.trunc_tol = value.parse().map_err(|_| bad())?,
                "max_inner_iters" => cfg.max_inner_iters = value.parse().map_err(|_| bad())?,
                "joint_schedule" => cfg.joint_schedule = value.parse().map_err(|_| bad())?,
                "fallback_nested" => cfg.fallback_nested = value.parse().map_err(|_| bad())?,
                "reporting_window" => cfg.reporting_window = value.parse().map_err(|_| bad())?,
                "relative_floor" => cfg.relative_floor = value.parse().map_err(|_| bad())?,
                "window_schedule" => {
                    cfg.window_schedule =
                        value.split(',').map(|v| v.trim().parse().map_err(|_| bad())).collect::<Result<Vec<usize>>>()?
                }
                "method" => {
                    cfg.method = match value {
                        "auto" => Method::Auto,
                        "truncation" => Method::Truncation,
                        "recursion" => Method::Recursion,
                        _ => return Err(bad()),
                    }
                }
                _ => return Err(Error::Parse(format!("line {}: unknown key {key}", lineno + 1))),
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_key_values(&std::fs::read_to_string(path)?)
    }

    fn largest_window(&self) -> usize {
        self.window_schedule.last().copied().unwrap_or(16)
    }
}

/// One solve of a truncated system.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TruncationStep {
    pub k: usize,
    pub lprime: usize,
    pub stage: String,
    /// Sup-norm change on the reporting window since the previous step of
    /// the same stage.
    pub delta: Option<f64>,
    pub iterations: usize,
    pub residual: f64,
}

/// A solved extinction vector with diagnostics.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ExtinctionResult {
    pub subset: String,
    pub method: String,
    pub vector: ProbVector,
    pub residual: f64,
    pub iterations_used: usize,
    pub windows_used: Vec<(usize, usize)>,
    pub converged: bool,
    pub monotonicity_log: Vec<TruncationStep>,
    pub advisories: Vec<String>,
}

impl ExtinctionResult {
    pub fn value(&self, x: &TypeId) -> Option<f64> {
        self.vector.get(x)
    }
}

#[derive(Clone, Copy, Debug)]
enum Slot {
    Var(usize),
    Const(f64),
}

#[derive(Clone, Debug)]
enum Row {
    Fixed(f64),
    Product(Vec<(Slot, CountLaw)>),
    Joint(Vec<(f64, Vec<(Slot, u32)>)>),
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum Role {
    Normal,
    Fixed(f64),
}

/// A finite system `u = F(u)` over an ordered set of active types.
struct System {
    types: Vec<TypeId>,
    index: HashMap<TypeId, usize>,
    rows: Vec<Row>,
}

impl System {
    fn build(spec: &ProcessSpec, active: Vec<(TypeId, Role)>, outside: impl Fn(&TypeId) -> f64) -> Result<System> {
        let mut index = HashMap::with_capacity(active.len());
        let mut types = Vec::with_capacity(active.len());
        let mut roles = Vec::with_capacity(active.len());
        for (t, role) in active {
            if index.contains_key(&t) {
                continue;
            }
            index.insert(t.clone(), types.len());
            types.push(t);
            roles.push(role);
        }
        let slot = |t: &TypeId| index.get(t).map_or_else(|| Slot::Const(outside(t)), |k| Slot::Var(*k));
        let rows = types
            .iter()
            .zip(&roles)
            .map(|(t, role)| {
                Ok(match role {
                    Role::Fixed(u) => Row::Fixed(*u),
                    Role::Normal => match spec.law(t)? {
                        OffspringLaw::Product(cs) => {
                            Row::Product(cs.into_iter().map(|c| (slot(&c.child), c.law)).collect())
                        }
                        OffspringLaw::Joint(os) => Row::Joint(
                            os.into_iter()
                                .map(|o| (o.prob, o.children.iter().map(|(c, n)| (slot(c), *n)).collect()))
                                .collect(),
                        ),
                    },
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(System { types, index, rows })
    }

    fn eval_row(&self, row: &Row, u: &[f64]) -> f64 {
        let get = |s: &Slot| match s {
            Slot::Var(k) => u[*k],
            Slot::Const(c) => *c,
        };
        match row {
            Row::Fixed(c) => *c,
            Row::Product(cs) => cs.iter().fold(0.0, |w, (s, law)| union_prob(w, law.pgf_complement(get(s)))),
            Row::Joint(os) => os
                .iter()
                .map(|(p, ch)| p * ch.iter().fold(0.0, |w, (s, n)| union_prob(w, one_minus_pow(get(s), *n))))
                .sum::<f64>()
                .min(1.0),
        }
    }

    fn sweep(&self, u: &[f64], out: &mut [f64]) {
        for (o, row) in out.iter_mut().zip(&self.rows) {
            *o = self.eval_row(row, u);
        }
    }

    /// Plain functional iteration from `start` until relative convergence.
    fn iterate(&self, start: Vec<f64>, cfg: &SolveConfig) -> Iteration {
        let mut u = start;
        let mut next = vec![0.0; u.len()];
        let mut iterations = 0;
        let mut converged = false;
        let mut last_change = f64::INFINITY;
        let mut max_increase: f64 = 0.0;
        while iterations < cfg.max_inner_iters {
            self.sweep(&u, &mut next);
            iterations += 1;
            let mut done = true;
            last_change = 0.0;
            for (a, b) in u.iter().zip(&next) {
                let d = b - a;
                max_increase = max_increase.max(d);
                last_change = last_change.max(d.abs());
                if !(d.abs() <= cfg.inner_tol * a.abs().max(b.abs()).max(cfg.relative_floor)) {
                    done = false;
                }
            }
            std::mem::swap(&mut u, &mut next);
            if done {
                converged = true;
                break;
            }
        }
        self.sweep(&u, &mut next);
        let residual = u.iter().zip(&next).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        if residual.is_nan() {
            converged = false;
        }
        Iteration { u, iterations, converged, residual, last_change, max_increase }
    }

    fn values_on(&self, u: &[f64], window: &Window) -> Result<ProbVector> {
        let values = window
            .types()
            .iter()
            .map(|t| {
                self.index
                    .get(t)
                    .map(|k| (1.0 - u[*k]).clamp(0.0, 1.0))
                    .ok_or_else(|| Error::Validation(format!("type {t} outside the solved system")))
            })
            .collect::<Result<Vec<_>>>()?;
        ProbVector::new(window.clone(), values)
    }
}

struct Iteration {
    u: Vec<f64>,
    iterations: usize,
    converged: bool,
    residual: f64,
    last_change: f64,
    /// Largest single-step increase of any `u` coordinate.
    max_increase: f64,
}

fn outside_truncation(a: &SubsetSpec) -> impl Fn(&TypeId) -> f64 + '_ {
    move |t| if a.contains(t) { 1.0 } else { 0.0 }
}

fn non_convergence(subset: &SubsetSpec, method: &str, vector: ProbVector, it: &Iteration) -> Error {
    Error::NonConvergence {
        iterations: it.iterations,
        last_change: it.last_change,
        partial: Box::new(ExtinctionResult {
            subset: subset.name().to_string(),
            method: method.to_string(),
            vector,
            residual: it.residual,
            iterations_used: it.iterations,
            windows_used: Vec::new(),
            converged: false,
            monotonicity_log: Vec::new(),
            advisories: Vec::new(),
        }),
    }
}

const CAP_STAGE: &str = "complement window cap";

/// Largest complement window the truncation schedule will use.
pub const COMPLEMENT_WINDOW_CAP: usize = 1 << 15;

/// Number of complement types enumerated before the `k`-th `A`-type, so
/// that a complement window of this size connects the first `k` `A`-types.
/// `None` when that number exceeds [`COMPLEMENT_WINDOW_CAP`].
fn complement_floor(spec: &ProcessSpec, a: &SubsetSpec, k: usize) -> Option<usize> {
    let typeset = spec.typeset();
    if a.is_all() || k == 0 {
        return Some(0);
    }
    let last_member = match (a.listed_members(), typeset.is_finite()) {
        (Some(members), false) => {
            let mut idx: Vec<usize> = members.iter().filter_map(|t| typeset.index_of(t)).collect();
            idx.sort_unstable();
            idx.truncate(k);
            match idx.last() {
                Some(&m) => Some(m),
                None => return Some(0),
            }
        }
        _ => None,
    };
    let (mut seen_a, mut seen_c, mut idx) = (0, 0, 0);
    while seen_c <= COMPLEMENT_WINDOW_CAP {
        if last_member.is_some_and(|m| idx >= m) {
            break;
        }
        let Some(t) = typeset.type_at(idx) else { break };
        idx += 1;
        if a.contains(&t) {
            seen_a += 1;
            if last_member.is_none() && seen_a >= k {
                break;
            }
        } else {
            seen_c += 1;
        }
    }
    (seen_c <= COMPLEMENT_WINDOW_CAP).then_some(seen_c)
}

/// Active types for the truncation with `k` normal `A`-types and `l` normal
/// complement types, in canonical order, plus the types of `extra`.
fn truncation_active(spec: &ProcessSpec, a: &SubsetSpec, k: usize, l: usize, extra: &Window) -> Vec<(TypeId, Role)> {
    let typeset = spec.typeset();
    let mut active = Vec::with_capacity(k + l + extra.len());
    let mut need_a = k;
    let mut need_c = if a.is_all() { 0 } else { l };
    if let (Some(members), false) = (a.listed_members(), typeset.is_finite()) {
        let mut members: Vec<(usize, TypeId)> =
            members.into_iter().filter_map(|t| typeset.index_of(&t).map(|i| (i, t))).collect();
        members.sort();
        active.extend(members.into_iter().take(k).map(|(_, t)| (t, Role::Normal)));
        need_a = 0;
    }
    let cap = match typeset.len() {
        Some(n) => n,
        None => 2 * (k + l) * (k + l) + 4096,
    };
    let mut idx = 0;
    while (need_a > 0 || need_c > 0) && idx < cap {
        let Some(t) = typeset.type_at(idx) else { break };
        idx += 1;
        if a.contains(&t) {
            if need_a > 0 {
                need_a -= 1;
                active.push((t, Role::Normal));
            }
        } else if need_c > 0 {
            need_c -= 1;
            active.push((t, Role::Normal));
        }
    }
    let normal: std::collections::HashSet<TypeId> = active.iter().map(|(t, _)| t.clone()).collect();
    for t in extra.types() {
        if !normal.contains(t) {
            let u = if a.contains(t) { 1.0 } else { 0.0 };
            active.push((t.clone(), Role::Fixed(u)));
        }
    }
    active
}

/// Minimal fixed point of the truncated system in which the first `k`
/// `A`-types and the first `lprime` complement types keep their laws, later
/// `A`-types are immortal and later complement types are sterile.
pub fn solve_finite_modified(
    spec: &ProcessSpec,
    a: &SubsetSpec,
    k: usize,
    lprime: usize,
    window: &Window,
    cfg: &SolveConfig,
) -> Result<ProbVector> {
    let (vector, _) = truncated_solve(spec, a, k, lprime, window, cfg)?;
    Ok(vector)
}

fn truncated_solve(
    spec: &ProcessSpec,
    a: &SubsetSpec,
    k: usize,
    l: usize,
    report: &Window,
    cfg: &SolveConfig,
) -> Result<(ProbVector, Iteration)> {
    for t in report.types() {
        spec.check_type(t)?;
    }
    let active = truncation_active(spec, a, k, l, report);
    let sys = System::build(spec, active, outside_truncation(a))?;
    let start = vec![1.0; sys.types.len()];
    let it = sys.iterate(start, cfg);
    let vector = sys.values_on(&it.u, report)?;
    if !it.converged {
        return Err(non_convergence(a, "truncation", vector, &it));
    }
    Ok((vector, it))
}

/// Active set used for windowed computations: the whole typeset when it is
/// finite, otherwise `window` together with the first `n` types.
fn aux_types(spec: &ProcessSpec, window: &Window, n: usize) -> Vec<TypeId> {
    let mut types = match spec.typeset().len() {
        Some(len) => spec.typeset().first(len),
        None => spec.typeset().first(n),
    };
    types.extend(window.types().iter().cloned());
    types
}

fn hat_system(spec: &ProcessSpec, a: &SubsetSpec, types: Vec<TypeId>, outside_non_a: f64) -> Result<System> {
    let active = types
        .into_iter()
        .map(|t| {
            let role = if a.contains(&t) { Role::Fixed(1.0) } else { Role::Normal };
            (t, role)
        })
        .collect();
    System::build(spec, active, move |t| if a.contains(t) { 1.0 } else { outside_non_a })
}

fn check_window(spec: &ProcessSpec, window: &Window) -> Result<()> {
    window.types().iter().try_for_each(|t| spec.check_type(t))
}

/// Probability of never visiting `A`: the maximal fixed point of the map
/// that is zero on `A` and `G` elsewhere, iterated from `1`.
///
/// For infinite typesets the system covers `window` and the first
/// `max(window_schedule)` types; types beyond it count as visiting `A` if
/// they belong to `A` and as never visiting otherwise.
pub fn solve_q0(spec: &ProcessSpec, a: &SubsetSpec, window: &Window, cfg: &SolveConfig) -> Result<ProbVector> {
    check_window(spec, window)?;
    let sys = hat_system(spec, a, aux_types(spec, window, cfg.largest_window()), 0.0)?;
    let start: Vec<f64> = sys.rows.iter().map(|r| if let Row::Fixed(u) = r { *u } else { 0.0 }).collect();
    let it = sys.iterate(start, cfg);
    let vector = sys.values_on(&it.u, window)?;
    if !it.converged {
        return Err(non_convergence(a, "q0", vector, &it));
    }
    Ok(vector)
}

/// Probability of global extinction without visiting `A`: the minimal fixed
/// point of the same map, iterated from `0`. Types beyond the system are
/// treated as immortal.
pub fn solve_qxa(spec: &ProcessSpec, a: &SubsetSpec, window: &Window, cfg: &SolveConfig) -> Result<ProbVector> {
    check_window(spec, window)?;
    let sys = hat_system(spec, a, aux_types(spec, window, cfg.largest_window()), 1.0)?;
    let start = vec![1.0; sys.types.len()];
    let it = sys.iterate(start, cfg);
    let vector = sys.values_on(&it.u, window)?;
    if !it.converged {
        return Err(non_convergence(a, "qXA", vector, &it));
    }
    Ok(vector)
}

/// Whether every type of `report` lies in a single irreducible class of the
/// type graph on `types`.
fn window_irreducible(spec: &ProcessSpec, report: &Window, types: Vec<TypeId>) -> Result<bool> {
    let mut seen = std::collections::HashSet::new();
    let types: Vec<TypeId> = types.into_iter().filter(|t| seen.insert(t.clone())).collect();
    let window = Window::from_types(types)?;
    let classes = spec.irreducible_classes(&window)?;
    let Some(first) = report.types().first() else { return Ok(true) };
    Ok(classes.iter().find(|c| c.contains(first)).is_some_and(|c| report.types().iter().all(|t| c.contains(t))))
}

/// Extinction probabilities in `A`, reported on the first
/// `cfg.reporting_window` types.
pub fn solve_q(spec: &ProcessSpec, a: &SubsetSpec, cfg: &SolveConfig) -> Result<ExtinctionResult> {
    let report = Window::initial(spec.typeset(), cfg.reporting_window);
    solve_q_on(spec, a, &report, cfg)
}

/// As [`solve_q`], reported on an arbitrary window.
pub fn solve_q_on(spec: &ProcessSpec, a: &SubsetSpec, report: &Window, cfg: &SolveConfig) -> Result<ExtinctionResult> {
    cfg.validate()?;
    check_window(spec, report)?;
    if a.is_empty_set() {
        let vector = ProbVector::constant(report.clone(), 1.0);
        return Ok(ExtinctionResult {
            subset: a.name().to_string(),
            method: "empty subset".into(),
            vector,
            residual: 0.0,
            iterations_used: 0,
            windows_used: Vec::new(),
            converged: true,
            monotonicity_log: Vec::new(),
            advisories: Vec::new(),
        });
    }
    let finite = spec.typeset().is_finite();
    let irreducible = match spec.irreducible_hint() {
        Some(h) => h,
        None => window_irreducible(spec, report, aux_types(spec, report, cfg.largest_window()))?,
    };
    let method = match cfg.method {
        Method::Auto if irreducible => Method::Truncation,
        Method::Auto => Method::Recursion,
        m => m,
    };
    let mut advisories = Vec::new();
    if method == Method::Truncation && !irreducible {
        advisories
            .push("process is not irreducible on the solved window; truncation limits may differ from q(A)".into());
    }
    if method == Method::Recursion && !finite {
        advisories.push("windowed recursion: types beyond each window are sterile unless they belong to A".into());
    }
    let mut result = match (method, finite) {
        (Method::Truncation, true) => finite_truncation(spec, a, report, cfg),
        (Method::Truncation, false) => {
            if cfg.joint_schedule {
                match truncation_schedule(spec, a, report, cfg, true) {
                    Err(Error::NotStabilized { partial, .. }) if cfg.fallback_nested && !hit_window_cap(&partial) => {
                        let mut nested = truncation_schedule(spec, a, report, cfg, false);
                        if let Ok(r) = &mut nested {
                            let mut log = partial.monotonicity_log;
                            log.append(&mut r.monotonicity_log);
                            r.monotonicity_log = log;
                            r.advisories.push("coupled schedule did not stabilise; nested limits used".into());
                        }
                        nested
                    }
                    other => other,
                }
            } else {
                truncation_schedule(spec, a, report, cfg, false)
            }
        }
        (_, _) => recursion(spec, a, report, cfg),
    }?;
    result.advisories.extend(advisories);
    Ok(result)
}

fn hit_window_cap(partial: &ExtinctionResult) -> bool {
    partial.monotonicity_log.last().is_some_and(|s| s.stage == CAP_STAGE)
}

fn finite_truncation(
    spec: &ProcessSpec,
    a: &SubsetSpec,
    report: &Window,
    cfg: &SolveConfig,
) -> Result<ExtinctionResult> {
    let n = spec.typeset().len().unwrap_or(0);
    let (vector, it) = truncated_solve(spec, a, n, n, report, cfg)?;
    Ok(ExtinctionResult {
        subset: a.name().to_string(),
        method: "truncation (complete finite system)".into(),
        vector,
        residual: it.residual,
        iterations_used: it.iterations,
        windows_used: vec![(n, n)],
        converged: true,
        monotonicity_log: vec![TruncationStep {
            k: n,
            lprime: n,
            stage: "complete".into(),
            delta: None,
            iterations: it.iterations,
            residual: it.residual,
        }],
        advisories: Vec::new(),
    })
}

fn truncation_schedule(
    spec: &ProcessSpec,
    a: &SubsetSpec,
    report: &Window,
    cfg: &SolveConfig,
    coupled: bool,
) -> Result<ExtinctionResult> {
    let mut log = Vec::new();
    let mut windows = Vec::new();
    let mut total_iters = 0;
    let mut outer_prev: Option<(ProbVector, f64)> = None;
    let mut last_delta = f64::INFINITY;
    let stage = if coupled { "coupled" } else { "outer" };
    for &k in &cfg.window_schedule {
        let Some(floor) = complement_floor(spec, a, k) else {
            log.push(TruncationStep {
                k,
                lprime: COMPLEMENT_WINDOW_CAP,
                stage: CAP_STAGE.into(),
                delta: None,
                iterations: 0,
                residual: f64::NAN,
            });
            break;
        };
        let floor = floor.max(k);
        let (vector, residual) = if coupled {
            let (v, it) = truncated_solve(spec, a, k, floor, report, cfg)?;
            total_iters += it.iterations;
            windows.push((k, floor));
            (v, it.residual)
        } else {
            let mut inner_prev: Option<ProbVector> = None;
            let mut out = None;
            for l in (0..cfg.window_schedule.len()).map(|m| floor << m).take_while(|&l| l <= 2 * COMPLEMENT_WINDOW_CAP)
            {
                let (v, it) = truncated_solve(spec, a, k, l, report, cfg)?;
                total_iters += it.iterations;
                windows.push((k, l));
                let delta = inner_prev.as_ref().map(|p| p.sup_distance(&v)).transpose()?;
                log.push(TruncationStep {
                    k,
                    lprime: l,
                    stage: "inner".into(),
                    delta,
                    iterations: it.iterations,
                    residual: it.residual,
                });
                let stable = delta.is_some_and(|d| d <= cfg.trunc_tol);
                out = Some((v.clone(), it.residual));
                inner_prev = Some(v);
                if stable {
                    break;
                }
            }
            out.expect("schedule is non-empty")
        };
        let delta = outer_prev.as_ref().map(|(p, _)| p.sup_distance(&vector)).transpose()?;
        log.push(TruncationStep {
            k,
            lprime: windows.last().map_or(k, |w| w.1),
            stage: stage.into(),
            delta,
            iterations: total_iters,
            residual,
        });
        if let Some(d) = delta {
            last_delta = d;
            if d <= cfg.trunc_tol && coupled {
                let widest = cfg.largest_window().max(2 * floor);
                {
                    let (wide, it) = truncated_solve(spec, a, k, widest, report, cfg)?;
                    total_iters += it.iterations;
                    windows.push((k, widest));
                    let spread = vector.sup_distance(&wide)?;
                    log.push(TruncationStep {
                        k,
                        lprime: widest,
                        stage: "complement check".into(),
                        delta: Some(spread),
                        iterations: it.iterations,
                        residual: it.residual,
                    });
                    if spread > cfg.trunc_tol {
                        last_delta = spread;
                        outer_prev = Some((vector, residual));
                        break;
                    }
                }
            }
            if d <= cfg.trunc_tol {
                return Ok(ExtinctionResult {
                    subset: a.name().to_string(),
                    method: format!("truncation ({stage})").replace("outer", "nested"),
                    vector,
                    residual,
                    iterations_used: total_iters,
                    windows_used: windows,
                    converged: true,
                    monotonicity_log: log,
                    advisories: Vec::new(),
                });
            }
        }
        outer_prev = Some((vector, residual));
    }
    let Some((vector, residual)) = outer_prev else {
        return Err(Error::SizeGuard(format!(
            "connecting {} A-types needs more than {COMPLEMENT_WINDOW_CAP} complement types",
            cfg.window_schedule[0]
        )));
    };
    Err(Error::NotStabilized {
        last_delta,
        partial: Box::new(ExtinctionResult {
            subset: a.name().to_string(),
            method: format!("truncation ({stage})"),
            vector,
            residual,
            iterations_used: total_iters,
            windows_used: windows,
            converged: false,
            monotonicity_log: log,
            advisories: Vec::new(),
        }),
    })
}

/// One pass of the recursion on a fixed set of types.
fn recursion_pass(
    spec: &ProcessSpec,
    a: &SubsetSpec,
    types: Vec<TypeId>,
    report: &Window,
    cfg: &SolveConfig,
) -> Result<(ProbVector, Iteration, usize)> {
    let hat = hat_system(spec, a, types.clone(), 0.0)?;
    let start: Vec<f64> = hat.rows.iter().map(|r| if let Row::Fixed(u) = r { *u } else { 0.0 }).collect();
    let q0 = hat.iterate(start, cfg);
    if !q0.converged {
        return Err(non_convergence(a, "recursion (q0 stage)", hat.values_on(&q0.u, report)?, &q0));
    }
    let active = types.into_iter().map(|t| (t, Role::Normal)).collect();
    let full = System::build(spec, active, outside_truncation(a))?;
    // Same type order in both systems, so q0 can seed the second stage.
    let it = full.iterate(q0.u.clone(), cfg);
    let vector = full.values_on(&it.u, report)?;
    if !it.converged {
        return Err(non_convergence(a, "recursion", vector, &it));
    }
    Ok((vector, it, q0.iterations))
}

fn recursion(spec: &ProcessSpec, a: &SubsetSpec, report: &Window, cfg: &SolveConfig) -> Result<ExtinctionResult> {
    let finite = spec.typeset().len();
    let sizes: Vec<usize> = match finite {
        Some(n) => vec![n],
        None => cfg.window_schedule.clone(),
    };
    let mut log = Vec::new();
    let mut windows = Vec::new();
    let mut total = 0;
    let mut prev: Option<(ProbVector, f64)> = None;
    let mut last_delta = f64::INFINITY;
    let mut monotonicity_breaks: f64 = 0.0;
    for n in sizes {
        let (vector, it, q0_iters) = recursion_pass(spec, a, aux_types(spec, report, n), report, cfg)?;
        total += it.iterations + q0_iters;
        windows.push((n, n));
        let delta = prev.as_ref().map(|(p, _)| p.sup_distance(&vector)).transpose()?;
        log.push(TruncationStep {
            k: n,
            lprime: n,
            stage: "recursion".into(),
            delta,
            iterations: it.iterations + q0_iters,
            residual: it.residual,
        });
        if it.max_increase > 1e-14 {
            monotonicity_breaks = monotonicity_breaks.max(it.max_increase);
        }
        let done = finite.is_some() || delta.is_some_and(|d| d <= cfg.trunc_tol);
        if let Some(d) = delta {
            last_delta = d;
        }
        if done {
            let mut advisories = Vec::new();
            if monotonicity_breaks > 0.0 {
                advisories
                    .push(format!("generation recursion decreased by up to {monotonicity_breaks:.3e} in one step"));
            }
            return Ok(ExtinctionResult {
                subset: a.name().to_string(),
                method: "recursion".into(),
                vector,
                residual: it.residual,
                iterations_used: total,
                windows_used: windows,
                converged: true,
                monotonicity_log: log,
                advisories,
            });
        }
        prev = Some((vector, it.residual));
    }
    let (vector, residual) = prev.expect("schedule is non-empty");
    Err(Error::NotStabilized {
        last_delta,
        partial: Box::new(ExtinctionResult {
            subset: a.name().to_string(),
            method: "recursion".into(),
            vector,
            residual,
            iterations_used: total,
            windows_used: windows,
            converged: false,
            monotonicity_log: log,
            advisories: Vec::new(),
        }),
    })
}

/// Partial extinction probabilities `q_x({x})` on the reporting window.
pub fn solve_partial(spec: &ProcessSpec, cfg: &SolveConfig) -> Result<ExtinctionResult> {
    let report = Window::initial(spec.typeset(), cfg.reporting_window);
    let guard_window = match spec.typeset().len() {
        Some(n) => Window::initial(spec.typeset(), n),
        None => report.clone(),
    };
    let ns = spec.is_non_singular(&guard_window)?;
    if !ns.non_singular {
        let classes: Vec<String> = ns
            .violating_classes
            .iter()
            .map(|c| c.iter().map(ToString::to_string).collect::<Vec<_>>().join(","))
            .collect();
        return Err(Error::Validation(format!("process is singular on classes [{}]", classes.join("] ["))));
    }
    let mut values = Vec::with_capacity(report.len());
    let mut residual: f64 = 0.0;
    let mut iterations = 0;
    let mut windows = Vec::new();
    let mut log = Vec::new();
    let mut advisories = Vec::new();
    for x in report.types() {
        let single = Window::from_types(vec![x.clone()])?;
        let r = solve_q_on(spec, &SubsetSpec::singleton(x.clone()), &single, cfg)?;
        values.push(r.vector.values()[0]);
        residual = residual.max(r.residual);
        iterations += r.iterations_used;
        windows = r.windows_used;
        log.extend(r.monotonicity_log);
        for adv in r.advisories {
            if !advisories.contains(&adv) {
                advisories.push(adv);
            }
        }
    }
    Ok(ExtinctionResult {
        subset: "partial".into(),
        method: "q({x}) per reporting type".into(),
        vector: ProbVector::new(report, values)?,
        residual,
        iterations_used: iterations,
        windows_used: windows,
        converged: true,
        monotonicity_log: log,
        advisories,
    })
}

/// Sup-norm of `s - G(s)` over `window`; children outside `s`'s window
/// take `outside_value`.
pub fn residual(spec: &ProcessSpec, s: &ProbVector, window: &Window, outside_value: f64) -> Result<f64> {
    let g = spec.eval_generating_function(s, window.types(), outside_value)?;
    window
        .types()
        .iter()
        .zip(g.values())
        .map(|(t, gv)| {
            s.get(t).map(|sv| (sv - gv).abs()).ok_or_else(|| Error::Validation(format!("type {t} missing from vector")))
        })
        .try_fold(0.0, |acc: f64, d| d.map(|d| acc.max(d)))
}

/// A coordinate at which `s` exceeds the local-extinction bound.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BoundViolation {
    pub x: TypeId,
    pub s: f64,
    pub q_local: f64,
}

/// Lists every `x` with `s_x < 1 - tol` and `s_x > q_x({x}) + tol`.
///
/// `s` must satisfy `s <= G(s)` within `tol`; children outside the window of
/// `s` count as `1` for that check.
pub fn verify_upper_bound(
    spec: &ProcessSpec,
    s: &ProbVector,
    qtilde: &ProbVector,
    tol: f64,
) -> Result<Vec<BoundViolation>> {
    let g = spec.eval_generating_function(s, s.window().types(), 1.0)?;
    for ((x, sv), gv) in s.iter().zip(g.values()) {
        if sv > gv + tol {
            return Err(Error::Validation(format!("s_{x} = {sv} exceeds G_{x}(s) = {gv}")));
        }
    }
    let mut out = Vec::new();
    for (x, sv) in s.iter() {
        let q_local =
            qtilde.get(x).ok_or_else(|| Error::Validation(format!("no local extinction value for type {x}")))?;
        if sv < 1.0 - tol && sv > q_local + tol {
            out.push(BoundViolation { x: x.clone(), s: sv, q_local });
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::law::{CountComponent, JointOutcome};
    use approx::assert_abs_diff_eq;

    fn x(n: u64) -> TypeId {
        TypeId::Int(n)
    }

    fn cubic_law(t: TypeId) -> OffspringLaw {
        OffspringLaw::joint(vec![JointOutcome::from_multiset(0.5, []), JointOutcome::from_multiset(0.5, vec![t; 3])])
            .unwrap()
    }

    fn cubic() -> ProcessSpec {
        ProcessSpec::finite("cubic", vec![(x(0), cubic_law(x(0)))]).unwrap()
    }

    fn binary(a: f64) -> ProcessSpec {
        let law = OffspringLaw::joint(vec![
            JointOutcome::from_multiset(1.0 - a, []),
            JointOutcome::from_multiset(a, vec![x(0); 2]),
        ])
        .unwrap();
        ProcessSpec::finite("binary", vec![(x(0), law)]).unwrap()
    }

    /// Self-supporting type 0 and a type 1 it never reaches.
    fn unreachable_pair() -> ProcessSpec {
        ProcessSpec::finite("pair", vec![(x(0), cubic_law(x(0))), (x(1), cubic_law(x(1)))]).unwrap()
    }

    fn bisect(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if f(lo).signum() == f(mid).signum() {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    #[test]
    fn scalar_oracles() {
        let cfg = SolveConfig::default();
        let root = bisect(|s| 0.5 + 0.5 * s * s * s - s, 0.0, 0.9);
        assert_abs_diff_eq!(root, (5f64.sqrt() - 1.0) / 2.0, epsilon = 1e-14);
        let w = Window::initial(cubic().typeset(), 1);
        let v = solve_finite_modified(&cubic(), &SubsetSpec::all(), 1, 1, &w, &cfg).unwrap();
        assert_abs_diff_eq!(v.values()[0], root, epsilon = 1e-10);
        let q = solve_q(&binary(0.75), &SubsetSpec::all(), &cfg).unwrap();
        assert_abs_diff_eq!(q.vector.values()[0], 1.0 / 3.0, epsilon = 1e-10);
    }

    #[test]
    fn immortal_a_types_give_zero() {
        let w = Window::initial(cubic().typeset(), 1);
        let v = solve_finite_modified(&cubic(), &SubsetSpec::all(), 0, 0, &w, &SolveConfig::default()).unwrap();
        assert_eq!(v.values(), &[0.0]);
    }

    #[test]
    fn empty_subset_gives_ones() {
        let r = solve_q(&cubic(), &SubsetSpec::empty(), &SolveConfig::default()).unwrap();
        assert_eq!(r.vector.values(), &[1.0]);
    }

    #[test]
    fn q0_examples() {
        let cfg = SolveConfig::default();
        let a = 0.3;
        let spec = ProcessSpec::finite(
            "two",
            vec![
                (x(1), OffspringLaw::product(vec![CountComponent::new(x(2), CountLaw::Bernoulli { p: a })]).unwrap()),
                (x(2), cubic_law(x(2))),
            ],
        )
        .unwrap();
        let w = Window::initial(spec.typeset(), 2);
        let q0 = solve_q0(&spec, &SubsetSpec::singleton(x(2)), &w, &cfg).unwrap();
        assert_abs_diff_eq!(q0.values()[0], 1.0 - a, epsilon = 1e-14);
        assert_eq!(q0.values()[1], 0.0);

        let spec = unreachable_pair();
        let w = Window::initial(spec.typeset(), 2);
        let b = SubsetSpec::singleton(x(1));
        let q0 = solve_q0(&spec, &b, &w, &cfg).unwrap();
        let qxa = solve_qxa(&spec, &b, &w, &cfg).unwrap();
        assert_eq!(q0.values()[0], 1.0);
        assert_abs_diff_eq!(qxa.values()[0], (5f64.sqrt() - 1.0) / 2.0, epsilon = 1e-10);
        assert_eq!(qxa.values()[1], 0.0);
    }

    #[test]
    fn subcritical_qxa_with_empty_a_is_one() {
        let law = OffspringLaw::product(vec![CountComponent::new(x(0), CountLaw::Bernoulli { p: 0.25 })]).unwrap();
        let spec = ProcessSpec::finite("sub", vec![(x(0), law)]).unwrap();
        let w = Window::initial(spec.typeset(), 1);
        let v = solve_qxa(&spec, &SubsetSpec::empty(), &w, &SolveConfig::default()).unwrap();
        assert_abs_diff_eq!(v.values()[0], 1.0, epsilon = 1e-12);
    }

    #[test]
    fn reducible_finite_uses_recursion() {
        // Type 0 may send a single child to type 1, which never returns.
        let law0 = OffspringLaw::joint(vec![
            JointOutcome::from_multiset(0.3, []),
            JointOutcome::from_multiset(0.5, vec![x(0); 3]),
            JointOutcome::from_multiset(0.2, vec![x(1)]),
        ])
        .unwrap();
        let spec = ProcessSpec::finite("reducible", vec![(x(0), law0), (x(1), cubic_law(x(1)))]).unwrap();
        let cfg = SolveConfig::default();
        let r = solve_q(&spec, &SubsetSpec::singleton(x(0)), &cfg).unwrap();
        assert_eq!(r.method, "recursion");
        // Extinction in {0}: smallest root of s = 0.3 + 0.5 s^3 + 0.2.
        let root = bisect(|s| 0.5 + 0.5 * s * s * s - s, 0.0, 0.9);
        assert_abs_diff_eq!(r.vector.values()[0], root, epsilon = 1e-10);
        assert_eq!(r.vector.values()[1], 1.0);
        let global = solve_q(&spec, &SubsetSpec::all(), &cfg).unwrap();
        assert!(global.vector.values()[0] < r.vector.values()[0]);
    }

    #[test]
    fn partial_guard_rejects_singular() {
        let law = OffspringLaw::product(vec![CountComponent::new(x(0), CountLaw::Deterministic { n: 1 })]).unwrap();
        let spec = ProcessSpec::finite("single", vec![(x(0), law)]).unwrap();
        assert!(matches!(solve_partial(&spec, &SolveConfig::default()), Err(Error::Validation(_))));
        let p = solve_partial(&cubic(), &SolveConfig::default()).unwrap();
        assert_abs_diff_eq!(p.vector.values()[0], (5f64.sqrt() - 1.0) / 2.0, epsilon = 1e-10);
    }

    #[test]
    fn residual_examples() {
        let spec = cubic();
        let w = Window::initial(spec.typeset(), 1);
        assert_eq!(residual(&spec, &ProbVector::constant(w.clone(), 1.0), &w, 1.0).unwrap(), 0.0);
        assert_eq!(residual(&spec, &ProbVector::constant(w.clone(), 0.0), &w, 1.0).unwrap(), 0.5);
        let q = solve_q(&spec, &SubsetSpec::all(), &SolveConfig::default()).unwrap();
        assert!(residual(&spec, &q.vector, &w, 1.0).unwrap() <= 1e-12);
    }

    #[test]
    fn upper_bound_precondition() {
        let spec = cubic();
        let w = Window::initial(spec.typeset(), 1);
        let qt = ProbVector::constant(w.clone(), 0.618);
        let bad = ProbVector::constant(w.clone(), 0.9);
        assert!(verify_upper_bound(&spec, &bad, &qt, 1e-9).is_err());
        assert!(verify_upper_bound(&spec, &ProbVector::constant(w, 1.0), &qt, 1e-9).unwrap().is_empty());
    }

    #[test]
    fn config_key_values() {
        let cfg = SolveConfig::from_key_values(
            "inner_tol = 1e-11 # tighter\nwindow_schedule = 8, 16, 32\njoint_schedule = false\nmethod = recursion\n",
        )
        .unwrap();
        assert_eq!(cfg.inner_tol, 1e-11);
        assert_eq!(cfg.window_schedule, vec![8, 16, 32]);
        assert!(!cfg.joint_schedule);
        assert_eq!(cfg.method, Method::Recursion);
        assert!(SolveConfig::from_key_values("window_schedule = 8, 4").is_err());
        assert!(SolveConfig::from_key_values("bogus = 1").is_err());
    }
}
