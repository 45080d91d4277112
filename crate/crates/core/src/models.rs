//! Built-in processes and families: the level/phase process on the grid, the
//! cubic grid process, the modified binary tree, and the small implication
//! graphs used throughout the documentation.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::family::{CardinalityClass, FamilyGraph};
use crate::law::{CountComponent, CountLaw, JointOutcome, OffspringLaw};
use crate::process::ProcessSpec;
use crate::subset::SubsetSpec;
use crate::types::{TypeId, Typeset};

/// Parameters of the level/phase process.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Example1Params {
    pub p: f64,
    pub q: f64,
    pub r: f64,
}

impl Example1Params {
    pub fn new(p: f64, q: f64, r: f64) -> Self {
        Example1Params { p, q, r }
    }

    pub fn validate(&self) -> Result<()> {
        let unit = |v: f64| v > 0.0 && v < 1.0;
        if !unit(self.p) || !unit(self.q) {
            return Err(Error::Validation(format!("p = {} and q = {} must lie in (0,1)", self.p, self.q)));
        }
        if !(self.r.is_finite() && self.r > 0.0) {
            return Err(Error::Validation(format!("r = {} must be positive", self.r)));
        }
        Ok(())
    }

    /// Mean `r^(1-j)` of the geometric number of children sent one level
    /// down from phase `j`, capped at the largest finite double.
    pub fn geometric_mean(&self, j: u64) -> f64 {
        let m = (-(j as f64 - 1.0) * self.r.ln()).exp();
        if m.is_finite() {
            m
        } else {
            f64::MAX
        }
    }

    /// Offspring law of type `(i, j)`.
    pub fn law(&self, i: u64, j: u64) -> OffspringLaw {
        let components = match (i, j) {
            (0, 0) => vec![CountComponent::new(TypeId::pair(1, 0), CountLaw::Bernoulli { p: self.q })],
            (0, j) => vec![CountComponent::new(TypeId::pair(0, j - 1), CountLaw::Bernoulli { p: self.p })],
            (i, 0) => vec![
                CountComponent::new(TypeId::pair(i, 1), CountLaw::Deterministic { n: 1 }),
                CountComponent::new(TypeId::pair(i + 1, 0), CountLaw::Bernoulli { p: self.q }),
            ],
            (i, j) => vec![
                CountComponent::new(TypeId::pair(i - 1, j), CountLaw::Geometric { mean: self.geometric_mean(j) }),
                CountComponent::new(TypeId::pair(i, j + 1), CountLaw::Deterministic { n: 1 }),
            ],
        };
        OffspringLaw::Product(components)
    }
}

/// The level/phase process on `N0 x N0` with its level and phase families.
#[derive(Clone, Debug)]
pub struct Example1 {
    pub params: Example1Params,
    pub spec: ProcessSpec,
}

pub fn build_example1(params: Example1Params) -> Result<Example1> {
    params.validate()?;
    let spec =
        ProcessSpec::new(format!("example1(p={},q={},r={})", params.p, params.q, params.r), Typeset::Grid, move |t| {
            let (i, j) = t.as_pair().ok_or_else(|| Error::UnknownType(t.to_string()))?;
            Ok(params.law(i, j))
        })
        .with_irreducible(true);
    Ok(Example1 { params, spec })
}

impl Example1 {
    /// Level `L_i = {(i, j) : j >= 0}`.
    pub fn level(&self, i: u64) -> SubsetSpec {
        SubsetSpec::predicate(format!("L{i}"), Some(false), move |t| t.as_pair().is_some_and(|(a, _)| a == i))
    }

    /// Phase `P_j = {(i, j) : i >= 0}`.
    pub fn phase(&self, j: u64) -> SubsetSpec {
        SubsetSpec::predicate(format!("P{j}"), Some(false), move |t| t.as_pair().is_some_and(|(_, b)| b == j))
    }

    /// `L'_i = {(i, 2k) : k >= 0} U {(k, 2i + 1) : k >= 0}`.
    pub fn phase_prime(&self, i: u64) -> SubsetSpec {
        SubsetSpec::predicate(format!("L'{i}"), Some(false), move |t| {
            t.as_pair().is_some_and(|(a, b)| phase_prime_index(a, b) == i)
        })
    }

    /// Union of the levels `L_i` for `i` in `from..`.
    pub fn levels_from(&self, from: u64) -> SubsetSpec {
        SubsetSpec::predicate(format!("L{from}+"), Some(false), move |t| t.as_pair().is_some_and(|(a, _)| a >= from))
    }

    /// Union of all levels other than `L_i`.
    pub fn levels_except(&self, i: u64) -> SubsetSpec {
        SubsetSpec::predicate(format!("X\\L{i}"), Some(false), move |t| t.as_pair().is_some_and(|(a, _)| a != i))
    }

    pub fn levels(&self, range: std::ops::RangeInclusive<u64>) -> Vec<SubsetSpec> {
        range.map(|i| self.level(i)).collect()
    }
}

/// Index `i` of the unique `L'_i` containing `(a, b)`.
pub fn phase_prime_index(a: u64, b: u64) -> u64 {
    if b.is_multiple_of(2) {
        a
    } else {
        (b - 1) / 2
    }
}

/// `i* = min{i >= 1 : r^i <= p}`, or `None` when `r >= 1`.
pub fn critical_level(p: f64, r: f64) -> Option<u64> {
    if r >= 1.0 {
        return None;
    }
    (1..).find(|&i| r.powi(i as i32) <= p)
}

/// Number of distinct values among `q(L_1), ..., q(L_levels)` predicted by
/// the level rule: one more than the number of `i` with `r > p^(1/i)`,
/// capped at `levels`.
pub fn predicted_distinct_levels(p: f64, r: f64, levels: usize) -> usize {
    let passed = (1..levels).filter(|&i| r > p.powf(1.0 / i as f64)).count();
    (passed + 1).min(levels)
}

/// Single type with no children w.p. `1/2` and three children w.p. `1/2`.
pub fn single_type_cubic() -> ProcessSpec {
    single_type_power(0.5, 3).expect("fixed parameters are valid")
}

/// Single type with no children w.p. `1 - a` and two children w.p. `a`.
pub fn single_type_binary(a: f64) -> Result<ProcessSpec> {
    single_type_power(a, 2)
}

fn single_type_power(a: f64, n: usize) -> Result<ProcessSpec> {
    if !(0.0..=1.0).contains(&a) {
        return Err(Error::Validation(format!("probability {a} outside [0,1]")));
    }
    let x = TypeId::Int(0);
    let law = OffspringLaw::joint(vec![
        JointOutcome::from_multiset(1.0 - a, []),
        JointOutcome::from_multiset(a, vec![x.clone(); n]),
    ])?;
    ProcessSpec::finite(if n == 3 { "cubic" } else { "binary" }, vec![(x, law)])
}

/// The grid process whose types `(i, j)` have no children w.p. `1/3`,
/// three `(i, j)` children w.p. `1/2`, and three `(i, j+1)` or three
/// `(i+1, j)` children w.p. `1/12` each.
pub fn build_example2() -> ProcessSpec {
    ProcessSpec::new("example2", Typeset::Grid, |t| {
        let (i, j) = t.as_pair().ok_or_else(|| Error::UnknownType(t.to_string()))?;
        Ok(OffspringLaw::Joint(vec![
            JointOutcome::from_multiset(1.0 / 3.0, []),
            JointOutcome::from_multiset(0.5, vec![TypeId::pair(i, j); 3]),
            JointOutcome::from_multiset(1.0 / 12.0, vec![TypeId::pair(i, j + 1); 3]),
            JointOutcome::from_multiset(1.0 / 12.0, vec![TypeId::pair(i + 1, j); 3]),
        ]))
    })
    .with_irreducible(false)
}

/// Implication order of the singleton family of the cubic grid process.
pub fn example2_implies(a: (u64, u64), b: (u64, u64)) -> bool {
    a.0 <= b.0 && a.1 <= b.1
}

/// The singleton family `{(i, j)}` as subsets.
pub fn example2_singleton(i: u64, j: u64) -> SubsetSpec {
    SubsetSpec::singleton(TypeId::pair(i, j))
}

/// Implication graph of the singleton family on the `n x n` corner of the
/// grid. Every vertex implies vertices outside the corner.
pub fn example2_window_graph(n: u64) -> Result<FamilyGraph> {
    let cells: Vec<(u64, u64)> = (0..n).flat_map(|i| (0..n).map(move |j| (i, j))).collect();
    let labels = cells.iter().map(|(i, j)| format!("({i},{j})")).collect();
    let mut edges = Vec::new();
    for (a, ca) in cells.iter().enumerate() {
        for (b, cb) in cells.iter().enumerate() {
            if a != b && example2_implies(*ca, *cb) {
                edges.push((a, b));
            }
        }
    }
    let frontier = (0..cells.len()).collect();
    FamilyGraph::window(labels, &edges, frontier, format!("example2 grid corner {n}x{n}"))
}

/// Exact cardinality descriptors `(primitive subsets, pure chain representatives)`.
pub fn example2_descriptors() -> (CardinalityClass, CardinalityClass) {
    (CardinalityClass::CountablyInfinite, CardinalityClass::CountablyInfinite)
}

/// Whether the modified binary tree has an edge from `beta` to `alpha`.
pub fn example3_edge(beta: &[i8], alpha: &[i8]) -> bool {
    let (m, n) = (beta.len(), alpha.len());
    if m + 1 == n {
        return alpha[..m] == *beta;
    }
    m >= n
        && n >= 1
        && beta[..n - 1] == alpha[..n - 1]
        && beta[n - 1] == 1
        && alpha[n - 1] == -1
        && beta[n..].iter().all(|b| *b == -1)
}

/// A directed edge between vertex indices.
pub type Edge = (usize, usize);

/// Labels and raw edges of the modified binary tree restricted to words of
/// length at most `depth`.
pub fn example3_edges(depth: usize) -> Result<(Vec<String>, Vec<Edge>)> {
    if depth == 0 || depth > 12 {
        return Err(Error::Validation(format!("depth {depth} must lie in 1..=12")));
    }
    let count = (1usize << (depth + 1)) - 1;
    let words: Vec<Vec<i8>> = (0..count)
        .map(|k| match Typeset::BinaryTree.type_at(k) {
            Some(TypeId::Signs(v)) => v,
            _ => unreachable!("binary tree enumerates sign words"),
        })
        .collect();
    let labels = words.iter().map(|w| TypeId::Signs(w.clone()).to_string()).collect();
    let mut edges = Vec::new();
    for (b, beta) in words.iter().enumerate() {
        for (a, alpha) in words.iter().enumerate() {
            if a != b && example3_edge(beta, alpha) {
                edges.push((b, a));
            }
        }
    }
    Ok((labels, edges))
}

/// Window of the modified binary tree containing every word of length at
/// most `depth`. Every vertex implies vertices outside the window.
pub fn build_example3_graph(depth: usize) -> Result<FamilyGraph> {
    let (labels, edges) = example3_edges(depth)?;
    let frontier = (0..labels.len()).collect();
    FamilyGraph::window(labels, &edges, frontier, format!("example3 tree depth {depth}"))
}

pub fn example3_descriptors() -> (CardinalityClass, CardinalityClass) {
    (CardinalityClass::CountablyInfinite, CardinalityClass::Uncountable)
}

/// The four-set family with `A1 => A3`, `A2 => A1`, `A2 => A4`.
pub fn figure1_graph() -> FamilyGraph {
    let labels = (1..=4).map(|i| i.to_string()).collect();
    FamilyGraph::new(labels, &[(0, 2), (1, 0), (1, 3)]).expect("acyclic by construction")
}

/// Window `{1, ..., n}` (with `n >= 4`) of the family with `2 => 1`, `3 => 2`,
/// `3 => 4` and the ascending chain `4 => 5 => 6 => ...`.
pub fn figure2_window(n: usize) -> Result<FamilyGraph> {
    if n < 4 {
        return Err(Error::Validation("the window must contain vertices 1 to 4".into()));
    }
    let labels = (1..=n).map(|i| i.to_string()).collect();
    let mut edges = vec![(1, 0), (2, 1), (2, 3)];
    edges.extend((3..n - 1).map(|k| (k, k + 1)));
    let frontier = (2..n).collect();
    FamilyGraph::window(labels, &edges, frontier, format!("figure2 window {n}"))
}

/// Window of the family of the previous graph with an extra sink `k'`
/// attached to every chain vertex `k >= 4`.
pub fn figure3_window(n: usize) -> Result<FamilyGraph> {
    if n < 4 {
        return Err(Error::Validation("the window must contain vertices 1 to 4".into()));
    }
    let mut labels: Vec<String> = (1..=n).map(|i| i.to_string()).collect();
    labels.extend((4..=n).map(|i| format!("{i}'")));
    let prime = |k: usize| n + k - 4;
    let mut edges = vec![(1, 0), (2, 1), (2, 3)];
    edges.extend((3..n - 1).map(|k| (k, k + 1)));
    edges.extend((4..=n).map(|k| (k - 1, prime(k))));
    let frontier = (2..n).collect();
    FamilyGraph::window(labels, &edges, frontier, format!("figure3 window {n}"))
}

/// `G_j^(i)(s)`: the `i`-fold composition of the geometric generating
/// function with mean `r^(1-j)`, from the closed form of its reciprocal
/// complement.
pub fn geometric_composition(i: u32, j: u32, r: f64, s: f64) -> Result<f64> {
    if i == 0 || !(0.0..=1.0).contains(&s) || !(r > 0.0) {
        return Err(Error::Validation("need i >= 1, s in [0,1] and r > 0".into()));
    }
    if s == 1.0 {
        return Ok(1.0);
    }
    let a = r.powi(j as i32 - 1);
    let series: f64 = (0..i).map(|k| a.powi(k as i32)).sum();
    let inv = a.powi(i as i32) / (1.0 - s) + series;
    Ok(1.0 - 1.0 / inv)
}

/// `i`-fold composition computed directly.
pub fn geometric_composition_direct(i: u32, j: u32, r: f64, s: f64) -> f64 {
    let m = r.powi(1 - j as i32);
    (0..i).fold(s, |acc, _| 1.0 / (1.0 + m * (1.0 - acc)))
}

/// Partial sum of `sum_j C(i+j-1, j-1) r^(-(j-1) i) p^j` and whether the
/// series converges (`p / r^i < 1`).
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SeriesSum {
    pub partial_sum: f64,
    pub convergent: bool,
}

pub fn frozen_descendant_mean(i: u32, p: f64, r: f64, terms: u32) -> Result<SeriesSum> {
    if terms == 0 || i == 0 || !(p > 0.0 && r > 0.0) {
        return Err(Error::Validation("need terms >= 1, i >= 1, p > 0 and r > 0".into()));
    }
    let fi = f64::from(i);
    let mut log_binom = 0.0;
    let mut sum = 0.0;
    for j in 1..=terms {
        let fj = f64::from(j);
        if j > 1 {
            // C(i+j-1, j-1) = C(i+j-2, j-2) * (i+j-1) / (j-1).
            log_binom += (fi + fj - 1.0).ln() - (fj - 1.0).ln();
        }
        let log_term = log_binom - (fj - 1.0) * fi * r.ln() + fj * p.ln();
        sum += log_term.exp();
    }
    Ok(SeriesSum { partial_sum: sum, convergent: p / r.powi(i as i32) < 1.0 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn example1_laws() {
        let ex = build_example1(Example1Params::new(0.1, 0.5, 0.5)).unwrap();
        let law = ex.spec.law(&TypeId::pair(2, 3)).unwrap();
        let expected = OffspringLaw::Product(vec![
            CountComponent::new(TypeId::pair(1, 3), CountLaw::Geometric { mean: 4.0 }),
            CountComponent::new(TypeId::pair(2, 4), CountLaw::Deterministic { n: 1 }),
        ]);
        assert_eq!(law, expected);
        let m = ex.spec.mean_matrix_entry(&TypeId::pair(0, 0), &TypeId::pair(1, 0)).unwrap();
        assert_eq!(m, 0.5);
        for (i, j) in [(1, 1), (3, 2), (5, 7)] {
            let m = ex.spec.mean_matrix_entry(&TypeId::pair(i, j), &TypeId::pair(i - 1, j)).unwrap();
            assert_abs_diff_eq!(m, 0.5f64.powi(1 - j as i32), epsilon = 1e-12);
        }
        assert!(build_example1(Example1Params::new(1.0, 0.5, 1.0)).is_err());
        assert!(build_example1(Example1Params::new(0.1, 0.5, -1.0)).is_err());
    }

    #[test]
    fn phase_prime_membership() {
        let ex = build_example1(Example1Params::new(0.1, 0.5, 1.0)).unwrap();
        let l1 = ex.phase_prime(1);
        assert!(l1.contains(&TypeId::pair(1, 4)));
        assert!(l1.contains(&TypeId::pair(7, 3)));
        assert!(!l1.contains(&TypeId::pair(2, 5)));
    }

    #[test]
    fn critical_levels() {
        assert_eq!(critical_level(0.1, 0.05), Some(1));
        assert_eq!(critical_level(0.1, 0.5), Some(4));
        assert_eq!(critical_level(0.1, 1.0), None);
        assert_eq!(predicted_distinct_levels(0.1, 0.05, 6), 1);
        assert_eq!(predicted_distinct_levels(0.1, 0.2, 6), 2);
        assert_eq!(predicted_distinct_levels(0.1, 0.5, 6), 4);
        assert_eq!(predicted_distinct_levels(0.1, 1.0, 6), 6);
    }

    #[test]
    fn example3_small_edges() {
        assert!(example3_edge(&[1], &[-1]));
        assert!(example3_edge(&[], &[1]));
        assert!(example3_edge(&[1, -1], &[-1]));
        assert!(!example3_edge(&[1, 1], &[-1]));
        assert!(!example3_edge(&[-1], &[1]));
    }

    #[test]
    fn composition_small_cases() {
        let m = 0.5f64.powi(-1);
        assert_abs_diff_eq!(geometric_composition(1, 2, 0.5, 0.3).unwrap(), 1.0 / (1.0 + m * 0.7), epsilon = 1e-15);
        let closed = geometric_composition(2, 2, 0.5, 0.5).unwrap();
        assert_abs_diff_eq!(closed, geometric_composition_direct(2, 2, 0.5, 0.5), epsilon = 1e-12);
        assert_eq!(geometric_composition(3, 1, 2.0, 1.0).unwrap(), 1.0);
        assert!(geometric_composition(3, 1, 2.0, 1.0 - 1e-12).unwrap() > 1.0 - 1e-9);
    }

    #[test]
    fn frozen_series_flags() {
        let s = frozen_descendant_mean(1, 0.1, 1.0, 200).unwrap();
        // With r = 1 and i = 1 the terms are j p^j, summing to p / (1 - p)^2.
        assert!(s.convergent);
        assert_abs_diff_eq!(s.partial_sum, 0.1 / 0.81, epsilon = 1e-12);
        assert!(!frozen_descendant_mean(2, 0.25, 0.5, 10).unwrap().convergent);
        assert!(!frozen_descendant_mean(3, 0.2, 0.5, 10).unwrap().convergent);
    }
}
