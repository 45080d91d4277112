//! Relations between subsets decided from their extinction vectors.
//!
//! Survival in `A` implies survival in `B` exactly when `q(A) >= q(B)`
//! entrywise. All verdicts here are taken on a finite window, so they
//! describe the window and not the whole typeset.

use std::fmt;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::family::FamilyGraph;
use crate::montecarlo::{estimate_event, Event, MCConfig, MCEstimate};
use crate::process::ProcessSpec;
use crate::solver::{solve_q0, solve_qxa, ExtinctionResult, SolveConfig};
use crate::subset::SubsetSpec;
use crate::types::{ProbVector, TypeId, Window};

/// Default tolerance for relation verdicts.
pub const RELATION_TOL: f64 = 1e-4;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RelationKind {
    /// `A => B`: `q(A) >= q(B)` with a strict gap somewhere.
    Implies,
    /// `B => A`.
    ImpliedBy,
    Equivalent,
    Incomparable,
    Indeterminate,
}

impl RelationKind {
    pub fn reversed(self) -> Self {
        match self {
            RelationKind::Implies => RelationKind::ImpliedBy,
            RelationKind::ImpliedBy => RelationKind::Implies,
            other => other,
        }
    }

    /// Single-character symbol used in relation matrices.
    pub fn symbol(self) -> char {
        match self {
            RelationKind::Implies => '⇒',
            RelationKind::ImpliedBy => '⇐',
            RelationKind::Equivalent => '⇔',
            RelationKind::Incomparable => '⇎',
            RelationKind::Indeterminate => '?',
        }
    }

    /// `A => B` holds (including equivalence).
    pub fn forward(self) -> bool {
        matches!(self, RelationKind::Implies | RelationKind::Equivalent)
    }
}

impl fmt::Display for RelationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.symbol())
    }
}

/// Margins behind a relation verdict.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Evidence {
    pub criterion: String,
    /// `max_x (q_x(A) - q_x(B))` and where it is attained.
    pub max_a_over_b: f64,
    pub argmax_a_over_b: Option<TypeId>,
    /// `max_x (q_x(B) - q_x(A))` and where it is attained.
    pub max_b_over_a: f64,
    pub argmax_b_over_a: Option<TypeId>,
    pub tol: f64,
    pub window_size: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Relation {
    pub kind: RelationKind,
    pub evidence: Evidence,
}

/// Decides the relation between `A` and `B` from `q(A)` and `q(B)` on a
/// common window.
pub fn compare_extinction_vectors(qa: &ProbVector, qb: &ProbVector, tol: f64) -> Result<Relation> {
    if qa.window().types() != qb.window().types() {
        return Err(Error::Validation("extinction vectors are given on different windows".into()));
    }
    let mut up = (f64::NEG_INFINITY, None);
    let mut down = (f64::NEG_INFINITY, None);
    let mut nan = false;
    for ((t, a), b) in qa.iter().zip(qb.values()) {
        if a.is_nan() || b.is_nan() {
            nan = true;
        }
        if a - b > up.0 {
            up = (a - b, Some(t.clone()));
        }
        if b - a > down.0 {
            down = (b - a, Some(t.clone()));
        }
    }
    let empty = qa.values().is_empty();
    let kind = if nan || empty {
        RelationKind::Indeterminate
    } else {
        match (up.0 > tol, down.0 > tol) {
            (false, false) => RelationKind::Equivalent,
            (true, false) => RelationKind::Implies,
            (false, true) => RelationKind::ImpliedBy,
            (true, true) => RelationKind::Incomparable,
        }
    };
    let evidence = Evidence {
        criterion: "entrywise comparison of extinction vectors".into(),
        max_a_over_b: if empty { 0.0 } else { up.0 },
        argmax_a_over_b: up.1,
        max_b_over_a: if empty { 0.0 } else { down.0 },
        argmax_b_over_a: down.1,
        tol,
        window_size: qa.values().len(),
    };
    Ok(Relation { kind, evidence })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RatioInfimum {
    pub value: f64,
    pub argmin: TypeId,
    pub eligible: usize,
}

/// `min (1 - q_x(B)) / (1 - q_x(A))` over the types of `window` with
/// `q_x(A) < 1 - 1e-12`. Returns `None` when no type is eligible.
pub fn ratio_infimum(qa: &ProbVector, qb: &ProbVector, window: &Window) -> Result<Option<RatioInfimum>> {
    let mut best: Option<RatioInfimum> = None;
    let mut eligible = 0;
    for t in window.types() {
        let (a, b) = match (qa.get(t), qb.get(t)) {
            (Some(a), Some(b)) => (a, b),
            _ => return Err(Error::Validation(format!("type {t} is missing from one of the vectors"))),
        };
        if a >= 1.0 - 1e-12 {
            continue;
        }
        eligible += 1;
        let ratio = (1.0 - b) / (1.0 - a);
        if best.as_ref().is_none_or(|r| ratio < r.value) {
            best = Some(RatioInfimum { value: ratio, argmin: t.clone(), eligible: 0 });
        }
    }
    Ok(best.map(|r| RatioInfimum { eligible, ..r }))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SingletonTest {
    pub singleton: bool,
    /// `sup |q0(B) - q(X, B)|` on the window.
    pub gap: f64,
    pub argmax: Option<TypeId>,
    pub threshold: f64,
}

/// Whether the fixed points of the map that is zero on `B` form a
/// singleton on `window`, from the gap between its maximal and minimal
/// fixed points. A non-singleton means that survival without visiting `B`
/// has positive probability from some type.
pub fn singleton_test(spec: &ProcessSpec, b: &SubsetSpec, window: &Window, cfg: &SolveConfig) -> Result<SingletonTest> {
    let upper = solve_q0(spec, b, window, cfg)?;
    let lower = solve_qxa(spec, b, window, cfg)?;
    let mut gap = 0.0;
    let mut argmax = None;
    for ((t, u), l) in upper.iter().zip(lower.values()) {
        if (u - l).abs() > gap {
            gap = (u - l).abs();
            argmax = Some(t.clone());
        }
    }
    let threshold = 2.0 * cfg.inner_tol;
    Ok(SingletonTest { singleton: gap <= threshold, gap, argmax, threshold })
}

/// Estimate of `P_x(survival in A and extinction in B)`. A confidence
/// interval bounded away from zero is evidence that `q(A) != q(B)`.
pub fn mc_relation_check(
    spec: &ProcessSpec,
    x: &TypeId,
    a: &SubsetSpec,
    b: &SubsetSpec,
    mc: &MCConfig,
) -> Result<MCEstimate> {
    estimate_event(spec, x, Event::SurviveAExtinctB, a, Some(b), mc)
}

/// Verdict on one regularity condition.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Pass,
    Fail,
    /// Holds on every union that was checked; not a proof.
    AdvisoryPass,
    /// Fails on a checked union, up to window and tolerance effects.
    AdvisoryFail,
    Skipped,
}

#[derive(Clone, Debug, Serialize)]
pub struct ConditionReport {
    pub condition: &'static str,
    pub verdict: Verdict,
    pub detail: String,
}

#[derive(Clone, Debug, Serialize)]
pub struct RegularityReport {
    pub conditions: Vec<ConditionReport>,
    /// Pairwise relations `matrix[i][j]` between members `i` and `j`.
    pub matrix: Vec<Vec<RelationKind>>,
    pub names: Vec<String>,
    pub caveat: String,
}

impl RegularityReport {
    pub fn verdict(&self, condition: &str) -> Option<Verdict> {
        self.conditions.iter().find(|c| c.condition == condition).map(|c| c.verdict)
    }
}

/// Solver for unions of family members used by the advisory conditions.
pub type UnionSolver<'a> = dyn Fn(&SubsetSpec) -> Result<ExtinctionResult> + Sync + 'a;

/// Options of [`check_family_conditions`].
pub struct FamilyCheck<'a> {
    pub tol: f64,
    pub trunc_tol: f64,
    /// Solves `q` for unions of members; without it the union conditions
    /// are skipped.
    pub union_solver: Option<&'a UnionSolver<'a>>,
    /// Union of the family members beyond the listed ones, for infinite
    /// families. It is assumed not to be implied by any listed member.
    pub tail: Option<SubsetSpec>,
    /// Largest number of members combined in the union condition on sets
    /// implied by members.
    pub max_union_size: usize,
}

impl Default for FamilyCheck<'_> {
    fn default() -> Self {
        FamilyCheck { tol: RELATION_TOL, trunc_tol: 1e-8, union_solver: None, tail: None, max_union_size: 3 }
    }
}

/// Checks disjointness, nontriviality and pairwise non-equivalence exactly
/// on `window`, and the two union conditions as advisories.
pub fn check_family_conditions(
    members: &[SubsetSpec],
    solved: &[ExtinctionResult],
    window: &Window,
    opts: &FamilyCheck<'_>,
) -> Result<RegularityReport> {
    if members.len() != solved.len() {
        return Err(Error::Validation("one solved vector per family member is required".into()));
    }
    let vectors = solved.iter().map(|r| r.vector.restrict(window)).collect::<Result<Vec<_>>>()?;
    let n = members.len();
    let names: Vec<String> = members.iter().map(|m| m.name().to_string()).collect();
    let mut conditions = Vec::new();

    let overlap = window.types().iter().find_map(|t| {
        let hits: Vec<usize> = (0..n).filter(|&i| members[i].contains(t)).collect();
        (hits.len() > 1).then(|| format!("type {t} lies in {} and {}", names[hits[0]], names[hits[1]]))
    });
    conditions.push(ConditionReport {
        condition: "C1",
        verdict: if overlap.is_some() { Verdict::Fail } else { Verdict::Pass },
        detail: overlap.unwrap_or_else(|| format!("members are disjoint on {} types", window.len())),
    });

    let limit = 1.0 - 10.0 * opts.trunc_tol;
    let trivial: Vec<&str> = (0..n)
        .filter(|&i| vectors[i].values().iter().copied().fold(f64::INFINITY, f64::min) > limit)
        .map(|i| names[i].as_str())
        .collect();
    conditions.push(ConditionReport {
        condition: "C2",
        verdict: if trivial.is_empty() { Verdict::Pass } else { Verdict::Fail },
        detail: if trivial.is_empty() {
            "every member has q < 1 somewhere on the window".into()
        } else {
            format!("q = 1 on the window for {}", trivial.join(", "))
        },
    });

    let mut matrix = vec![vec![RelationKind::Equivalent; n]; n];
    let mut equivalent_pairs = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            let rel = compare_extinction_vectors(&vectors[i], &vectors[j], opts.tol)?.kind;
            matrix[i][j] = rel;
            matrix[j][i] = rel.reversed();
            if rel == RelationKind::Equivalent {
                equivalent_pairs.push(format!("{} ~ {}", names[i], names[j]));
            }
        }
    }
    conditions.push(ConditionReport {
        condition: "C3",
        verdict: if equivalent_pairs.is_empty() { Verdict::Pass } else { Verdict::Fail },
        detail: if equivalent_pairs.is_empty() {
            "no two members are equivalent".into()
        } else {
            equivalent_pairs.join("; ")
        },
    });

    match opts.union_solver {
        None => {
            for condition in ["C4", "C5"] {
                conditions.push(ConditionReport {
                    condition,
                    verdict: Verdict::Skipped,
                    detail: "no union solver".into(),
                });
            }
        }
        Some(solve) => {
            conditions.push(check_c4(members, &vectors, window, opts, solve)?);
            conditions.push(check_c5(members, &vectors, &matrix, window, opts, solve)?);
        }
    }

    Ok(RegularityReport {
        conditions,
        matrix,
        names,
        caveat: "C4 and C5 quantify over infinitely many unions; they are checked on finitely many unions on a finite window only".into(),
    })
}

impl RegularityReport {
    /// Implication graph read off the relation matrix: an edge `i -> j` for
    /// every `A_i => A_j`. Equivalent members produce a two-cycle, which
    /// is reported as an error.
    pub fn implication_graph(&self) -> Result<FamilyGraph> {
        let n = self.names.len();
        let edges: Vec<(usize, usize)> = (0..n)
            .flat_map(|i| (0..n).map(move |j| (i, j)))
            .filter(|&(i, j)| i != j && self.matrix[i][j].forward())
            .collect();
        FamilyGraph::new(self.names.clone(), &edges)
    }
}

fn union_of(members: &[SubsetSpec], idx: &[usize], tail: Option<&SubsetSpec>) -> SubsetSpec {
    let mut parts: Vec<SubsetSpec> = idx.iter().map(|&i| members[i].clone()).collect();
    let mut names: Vec<&str> = idx.iter().map(|&i| members[i].name()).collect();
    if let Some(t) = tail {
        parts.push(t.clone());
        names.push(t.name());
    }
    SubsetSpec::union(names.join(" ∪ "), &parts)
}

/// For each union `A` of at most `max_union_size` members: the union of all
/// members implying `A` must imply `A`.
fn check_c4(
    members: &[SubsetSpec],
    vectors: &[ProbVector],
    window: &Window,
    opts: &FamilyCheck<'_>,
    solve: &UnionSolver<'_>,
) -> Result<ConditionReport> {
    let n = members.len();
    let mut checked = 0;
    for size in 1..=opts.max_union_size.min(n) {
        for combo in combinations(n, size) {
            let target = union_of(members, &combo, None);
            let q_target = solve(&target)?.vector.restrict(window)?;
            let implying: Vec<usize> = (0..n)
                .filter(|&i| {
                    compare_extinction_vectors(&vectors[i], &q_target, opts.tol)
                        .map(|r| r.kind.forward())
                        .unwrap_or(false)
                })
                .collect();
            if implying.is_empty() || implying == combo {
                checked += 1;
                continue;
            }
            let q_union = solve(&union_of(members, &implying, None))?.vector.restrict(window)?;
            checked += 1;
            if !compare_extinction_vectors(&q_union, &q_target, opts.tol)?.kind.forward() {
                return Ok(ConditionReport {
                    condition: "C4",
                    verdict: Verdict::AdvisoryFail,
                    detail: format!("the members implying {} do not jointly imply it", target.name()),
                });
            }
        }
    }
    Ok(ConditionReport {
        condition: "C4",
        verdict: Verdict::AdvisoryPass,
        detail: format!("holds on {checked} unions of up to {} members", opts.max_union_size.min(n)),
    })
}

/// For each member `A_i`: `A_i` must not imply the union of the members it
/// does not imply (together with the tail of the family, when given).
fn check_c5(
    members: &[SubsetSpec],
    vectors: &[ProbVector],
    matrix: &[Vec<RelationKind>],
    window: &Window,
    opts: &FamilyCheck<'_>,
    solve: &UnionSolver<'_>,
) -> Result<ConditionReport> {
    let n = members.len();
    for i in 0..n {
        let others: Vec<usize> = (0..n).filter(|&j| j != i && !matrix[i][j].forward()).collect();
        if others.is_empty() && opts.tail.is_none() {
            continue;
        }
        let target = union_of(members, &others, opts.tail.as_ref());
        let q_target = solve(&target)?.vector.restrict(window)?;
        let rel = compare_extinction_vectors(&vectors[i], &q_target, opts.tol)?;
        if rel.kind.forward() {
            return Ok(ConditionReport {
                condition: "C5",
                verdict: Verdict::AdvisoryFail,
                detail: format!("{} implies {}", members[i].name(), target.name()),
            });
        }
    }
    Ok(ConditionReport {
        condition: "C5",
        verdict: Verdict::AdvisoryPass,
        detail: format!("no member implies the union of the members it does not imply ({n} checked)"),
    })
}

fn combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut current = Vec::with_capacity(k);
    fn walk(start: usize, n: usize, k: usize, current: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if current.len() == k {
            out.push(current.clone());
            return;
        }
        for i in start..n {
            current.push(i);
            walk(i + 1, n, k, current, out);
            current.pop();
        }
    }
    walk(0, n, k, &mut current, &mut out);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::law::{JointOutcome, OffspringLaw};

    fn vector(values: &[f64]) -> ProbVector {
        let w = Window::from_types((0..values.len() as u64).map(TypeId::Int).collect()).unwrap();
        ProbVector::new(w, values.to_vec()).unwrap()
    }

    #[test]
    fn verdicts() {
        let a = vector(&[0.5, 0.7]);
        let b = vector(&[0.4, 0.7]);
        assert_eq!(compare_extinction_vectors(&a, &a, 1e-4).unwrap().kind, RelationKind::Equivalent);
        assert_eq!(compare_extinction_vectors(&a, &b, 1e-4).unwrap().kind, RelationKind::Implies);
        assert_eq!(compare_extinction_vectors(&b, &a, 1e-4).unwrap().kind, RelationKind::ImpliedBy);
        let c = vector(&[0.6, 0.6]);
        assert_eq!(compare_extinction_vectors(&a, &c, 1e-4).unwrap().kind, RelationKind::Incomparable);
        assert!(compare_extinction_vectors(&a, &vector(&[0.5]), 1e-4).is_err());
    }

    #[test]
    fn ratios() {
        let a = vector(&[0.5, 0.7]);
        let w = a.window().clone();
        assert_eq!(ratio_infimum(&a, &a, &w).unwrap().unwrap().value, 1.0);
        let ones = vector(&[1.0, 1.0]);
        assert_eq!(ratio_infimum(&a, &ones, &w).unwrap().unwrap().value, 0.0);
        assert!(ratio_infimum(&ones, &a, &w).unwrap().is_none());
    }

    fn self_supporting() -> ProcessSpec {
        // Type 0 is the cubic law; type 1 is unreachable from it.
        let (x, y) = (TypeId::Int(0), TypeId::Int(1));
        let cubic = OffspringLaw::joint(vec![
            JointOutcome::from_multiset(0.5, []),
            JointOutcome::from_multiset(0.5, vec![x.clone(); 3]),
        ])
        .unwrap();
        ProcessSpec::finite("pair", vec![(x, cubic), (y, OffspringLaw::sterile())]).unwrap()
    }

    #[test]
    fn singleton_gaps() {
        let spec = self_supporting();
        let w = Window::initial(spec.typeset(), 2);
        let cfg = SolveConfig::default();
        let t = singleton_test(&spec, &SubsetSpec::singleton(TypeId::Int(1)), &w, &cfg).unwrap();
        assert!(!t.singleton);
        assert!((t.gap - (1.0 - (5f64.sqrt() - 1.0) / 2.0)).abs() < 1e-9);
        let t = singleton_test(&spec, &SubsetSpec::all(), &w, &cfg).unwrap();
        assert!(t.singleton);
        assert_eq!(t.gap, 0.0);
    }

    #[test]
    fn family_conditions_on_duplicates() {
        let spec = self_supporting();
        let cfg = SolveConfig::default();
        let w = Window::initial(spec.typeset(), 2);
        let a = SubsetSpec::singleton(TypeId::Int(0));
        let solved = crate::solver::solve_q_on(&spec, &a, &w, &cfg).unwrap();
        let report =
            check_family_conditions(&[a.clone(), a], &[solved.clone(), solved], &w, &FamilyCheck::default()).unwrap();
        assert_eq!(report.verdict("C1"), Some(Verdict::Fail));
        assert_eq!(report.verdict("C3"), Some(Verdict::Fail));
        assert_eq!(report.verdict("C5"), Some(Verdict::Skipped));
    }

    #[test]
    fn combination_counts() {
        assert_eq!(combinations(5, 2).len(), 10);
        assert_eq!(combinations(4, 4), vec![vec![0, 1, 2, 3]]);
    }
}
