//! Combinatorics of implication graphs between the members of a family of
//! subsets.
//!
//! A [`FamilyGraph`] stores the relation `A_i => A_j` transitively closed and
//! irreflexive; `i => i` always holds and is applied as a rule. A graph can
//! also be a finite window of an infinite family, in which case its
//! *frontier* lists the vertices that imply vertices beyond the window.

use std::collections::{BTreeMap, HashMap, VecDeque};
use std::fmt;

use fixedbitset::FixedBitSet;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Maximum number of antichains [`FamilyGraph::primitive_subsets`] will list.
pub const ANTICHAIN_GUARD: usize = 1 << 24;

/// Largest vertex count accepted by the brute-force class enumeration.
pub const BRUTE_FORCE_LIMIT: usize = 16;

/// Transitively closed implication graph on a finite vertex set.
#[derive(Clone, Debug)]
pub struct FamilyGraph {
    labels: Vec<String>,
    succ: Vec<FixedBitSet>,
    pred: Vec<FixedBitSet>,
    frontier: FixedBitSet,
    generator: Option<String>,
}

/// A finite set of vertex indices.
///
/// A *projected* subset stands for the trace on a window of a subset of an
/// infinite family that contains, for each of its frontier vertices, the
/// vertices beyond the window implied by it. Frontier members of a projected
/// subset are therefore never maximal.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct IndexSubset {
    members: Vec<usize>,
    #[serde(default)]
    projected: bool,
}

impl IndexSubset {
    pub fn new(members: impl IntoIterator<Item = usize>) -> Self {
        let mut members: Vec<usize> = members.into_iter().collect();
        members.sort_unstable();
        members.dedup();
        IndexSubset { members, projected: false }
    }

    pub fn empty() -> Self {
        IndexSubset::new([])
    }

    /// Window trace of a subset of an infinite family.
    pub fn projected(members: impl IntoIterator<Item = usize>) -> Self {
        IndexSubset { projected: true, ..IndexSubset::new(members) }
    }

    pub fn members(&self) -> &[usize] {
        &self.members
    }

    pub fn is_projected(&self) -> bool {
        self.projected
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn contains(&self, i: usize) -> bool {
        self.members.binary_search(&i).is_ok()
    }

    fn with_members(&self, members: impl IntoIterator<Item = usize>) -> Self {
        IndexSubset { projected: self.projected, ..IndexSubset::new(members) }
    }

    /// Same members, ignoring the projection flag.
    pub fn same_members(&self, other: &IndexSubset) -> bool {
        self.members == other.members
    }
}

/// The split of `I` into maximal elements `I_M`, elements dominated by a
/// maximal element `I_d`, and the rest `I_c`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Decomposition {
    pub i_m: IndexSubset,
    pub i_d: IndexSubset,
    pub i_c: IndexSubset,
}

/// A row of [`FamilyGraph::class_table`].
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ClassRow {
    pub primitive: IndexSubset,
    pub chains: IndexSubset,
    pub members: Option<Vec<IndexSubset>>,
}

/// Outcome of the membership test for the set of pairs `(I, J)` that
/// parametrise the equivalence classes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum IaVerdict {
    Member,
    NotMember,
    /// `I` is not an antichain.
    NotPrimitive,
    /// `J` is not a pure ascending chain (`J != J_c`).
    JNotPure,
    /// `J` is not upward closed (`J != J^+`).
    JNotClosed,
}

impl IaVerdict {
    pub fn is_member(self) -> bool {
        self == IaVerdict::Member
    }
}

/// Size of a possibly infinite set of extinction vectors.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "class", content = "count", rename_all = "snake_case")]
pub enum CardinalityClass {
    /// Finite, with the exact count when known.
    Finite(Option<u64>),
    CountablyInfinite,
    Uncountable,
}

impl fmt::Display for CardinalityClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CardinalityClass::Finite(Some(n)) => write!(f, "finite ({n})"),
            CardinalityClass::Finite(None) => write!(f, "finite"),
            CardinalityClass::CountablyInfinite => write!(f, "countably infinite"),
            CardinalityClass::Uncountable => write!(f, "uncountable"),
        }
    }
}

/// Size of the set of distinct extinction vectors from the size of the set
/// of primitive subsets and the size of the set of pure-chain
/// representatives.
pub fn ext_cardinality(primitive: CardinalityClass, chains: CardinalityClass) -> CardinalityClass {
    use CardinalityClass::*;
    match (primitive, chains) {
        (Uncountable, _) | (_, Uncountable) => Uncountable,
        (Finite(p), Finite(c)) => match (p, c) {
            (Some(p), Some(1)) => Finite(Some(p)),
            _ => Finite(None),
        },
        _ => CountablyInfinite,
    }
}

/// Longest-chain growth between two windows of the same family.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ChainReport {
    pub small_window_longest: usize,
    pub large_window_longest: usize,
    /// True when the longest chain grows with the window.
    pub probable_ascending_chain: bool,
    /// True when the larger graph is a complete finite family, in which
    /// case there are no ascending chains.
    pub exact: bool,
}

impl FamilyGraph {
    /// Closes `edges` transitively. Self-loops are ignored; longer cycles
    /// are rejected.
    pub fn new(labels: Vec<String>, edges: &[(usize, usize)]) -> Result<Self> {
        let n = labels.len();
        if let Some((a, b)) = edges.iter().find(|(a, b)| *a >= n || *b >= n) {
            return Err(Error::Validation(format!("edge ({a},{b}) refers to a vertex outside 0..{n}")));
        }
        let mut seen = HashMap::new();
        for (k, label) in labels.iter().enumerate() {
            if let Some(prev) = seen.insert(label.as_str(), k) {
                return Err(Error::Validation(format!("vertex label {label} used at positions {prev} and {k}")));
            }
        }
        let mut succ = vec![FixedBitSet::with_capacity(n); n];
        for &(a, b) in edges {
            if a != b {
                succ[a].insert(b);
            }
        }
        for k in 0..n {
            let row_k = succ[k].clone();
            for row in succ.iter_mut() {
                if row.contains(k) {
                    row.union_with(&row_k);
                }
            }
        }
        if let Some(v) = (0..n).find(|&v| succ[v].contains(v)) {
            return Err(Error::Cycle(cycle_through(v, n, edges).into_iter().map(|k| labels[k].clone()).collect()));
        }
        let mut pred = vec![FixedBitSet::with_capacity(n); n];
        for (a, row) in succ.iter().enumerate() {
            for b in row.ones() {
                pred[b].insert(a);
            }
        }
        Ok(FamilyGraph { labels, succ, pred, frontier: FixedBitSet::with_capacity(n), generator: None })
    }

    /// Window of an infinite family. `frontier` lists the vertices that
    /// imply vertices outside the window.
    pub fn window(
        labels: Vec<String>,
        edges: &[(usize, usize)],
        frontier: Vec<usize>,
        generator: String,
    ) -> Result<Self> {
        let mut g = FamilyGraph::new(labels, edges)?;
        for v in frontier {
            if v >= g.len() {
                return Err(Error::Validation(format!("frontier vertex {v} outside the window")));
            }
            g.frontier.insert(v);
        }
        g.generator = Some(generator);
        Ok(g)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn label(&self, i: usize) -> &str {
        &self.labels[i]
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }

    /// Description of the infinite family this graph is a window of.
    pub fn generator(&self) -> Option<&str> {
        self.generator.as_deref()
    }

    pub fn is_window(&self) -> bool {
        self.generator.is_some()
    }

    pub fn frontier(&self) -> Vec<usize> {
        self.frontier.ones().collect()
    }

    pub fn is_frontier(&self, i: usize) -> bool {
        self.frontier.contains(i)
    }

    /// `A_i => A_j`, reflexively.
    pub fn implies(&self, i: usize, j: usize) -> bool {
        i == j || self.succ[i].contains(j)
    }

    /// Pairs `(i, j)`, `i != j`, of the closed relation.
    pub fn closed_edges(&self) -> Vec<(usize, usize)> {
        self.succ.iter().enumerate().flat_map(|(a, row)| row.ones().map(move |b| (a, b))).collect()
    }

    pub fn edge_count(&self) -> usize {
        self.succ.iter().map(|r| r.count_ones(..)).sum()
    }

    fn check(&self, set: &IndexSubset) -> Result<()> {
        match set.members.iter().find(|&&i| i >= self.len()) {
            Some(i) => Err(Error::Validation(format!("index {i} is not a vertex of the graph"))),
            None => Ok(()),
        }
    }

    /// Renders a subset with vertex labels, e.g. `{1,4}`.
    pub fn render(&self, set: &IndexSubset) -> String {
        let names: Vec<&str> = set.members.iter().map(|&i| self.labels[i].as_str()).collect();
        format!("{{{}}}", names.join(","))
    }

    /// Parses a list of labels into a subset.
    pub fn subset_of_labels<S: AsRef<str>>(&self, labels: &[S]) -> Result<IndexSubset> {
        labels
            .iter()
            .map(|l| {
                self.index_of(l.as_ref()).ok_or_else(|| Error::Validation(format!("unknown vertex {}", l.as_ref())))
            })
            .collect::<Result<Vec<_>>>()
            .map(IndexSubset::new)
    }

    /// All antichains, ordered by size and then lexicographically, up to
    /// `max_size` members.
    pub fn primitive_subsets(&self, max_size: Option<usize>) -> Result<Vec<IndexSubset>> {
        let n = self.len();
        let cap = max_size.unwrap_or(n);
        let comparable: Vec<FixedBitSet> = (0..n)
            .map(|i| {
                let mut c = self.succ[i].clone();
                c.union_with(&self.pred[i]);
                c
            })
            .collect();
        let mut out = vec![IndexSubset::empty()];
        let mut stack: Vec<(Vec<usize>, FixedBitSet)> = Vec::new();
        let mut all = FixedBitSet::with_capacity(n);
        all.insert_range(..);
        stack.push((Vec::new(), all));
        while let Some((chosen, candidates)) = stack.pop() {
            if chosen.len() >= cap {
                continue;
            }
            for i in candidates.ones() {
                let mut next = candidates.clone();
                next.set_range(..i + 1, false);
                next.difference_with(&comparable[i]);
                let mut grown = chosen.clone();
                grown.push(i);
                out.push(IndexSubset::new(grown.iter().copied()));
                if out.len() > ANTICHAIN_GUARD {
                    return Err(Error::SizeGuard(format!("more than {ANTICHAIN_GUARD} antichains")));
                }
                if !next.is_clear() {
                    stack.push((grown, next));
                }
            }
        }
        out.sort_by(|a, b| a.members.len().cmp(&b.members.len()).then_with(|| a.members.cmp(&b.members)));
        Ok(out)
    }

    fn is_maximal_in(&self, i: usize, set: &IndexSubset) -> bool {
        if set.projected && self.frontier.contains(i) {
            return false;
        }
        set.members.iter().all(|&j| j == i || !self.succ[i].contains(j))
    }

    /// `(I_M, I_d, I_c)`.
    pub fn decompose(&self, set: &IndexSubset) -> Result<Decomposition> {
        self.check(set)?;
        let i_m: Vec<usize> = set.members.iter().copied().filter(|&i| self.is_maximal_in(i, set)).collect();
        let (i_d, i_c): (Vec<usize>, Vec<usize>) =
            set.members.iter().copied().partition(|&i| i_m.iter().any(|&j| self.implies(i, j)));
        Ok(Decomposition { i_m: set.with_members(i_m), i_d: set.with_members(i_d), i_c: set.with_members(i_c) })
    }

    /// `I^+`: every vertex implying some member of `I`.
    pub fn upward_closure(&self, set: &IndexSubset) -> Result<IndexSubset> {
        self.check(set)?;
        let mut up = FixedBitSet::with_capacity(self.len());
        for &j in &set.members {
            up.insert(j);
            up.union_with(&self.pred[j]);
        }
        Ok(set.with_members(up.ones()))
    }

    /// `I ~ J`: every member of either set implies a member of the other.
    pub fn equivalent(&self, a: &IndexSubset, b: &IndexSubset) -> Result<bool> {
        self.check(a)?;
        self.check(b)?;
        let covers =
            |x: &IndexSubset, y: &IndexSubset| x.members.iter().all(|&i| y.members.iter().any(|&j| self.implies(i, j)));
        Ok(covers(a, b) && covers(b, a))
    }

    /// `(I_M, (I_c)^+)`.
    pub fn class_signature(&self, set: &IndexSubset) -> Result<(IndexSubset, IndexSubset)> {
        let d = self.decompose(set)?;
        let chains = self.upward_closure(&d.i_c)?;
        Ok((d.i_m, chains))
    }

    /// Whether `(I, J)` is one of the pairs that parametrise the
    /// equivalence classes: `I` primitive, `J` a closed pure chain, `I` and
    /// `J` disjoint and `(J \ I^+)^+ = J`.
    pub fn is_ia_element(&self, i: &IndexSubset, j: &IndexSubset) -> Result<IaVerdict> {
        let di = self.decompose(i)?;
        if !di.i_m.same_members(i) {
            return Ok(IaVerdict::NotPrimitive);
        }
        let dj = self.decompose(j)?;
        if !dj.i_c.same_members(j) {
            return Ok(IaVerdict::JNotPure);
        }
        if !self.upward_closure(j)?.same_members(j) {
            return Ok(IaVerdict::JNotClosed);
        }
        if i.members.iter().any(|&v| j.contains(v)) {
            return Ok(IaVerdict::NotMember);
        }
        let i_plus = self.upward_closure(i)?;
        let rest = j.with_members(j.members.iter().copied().filter(|&v| !i_plus.contains(v)));
        let verdict =
            if self.upward_closure(&rest)?.same_members(j) { IaVerdict::Member } else { IaVerdict::NotMember };
        Ok(verdict)
    }

    /// Equivalence classes of all subsets of the vertex set, each listed
    /// with its subsets in increasing mask order. The first subset of each
    /// class is its smallest member; classes are ordered by size of their
    /// smallest member and then lexicographically.
    pub fn enumerate_classes_bruteforce(&self) -> Result<Vec<Vec<IndexSubset>>> {
        let n = self.len();
        if n > BRUTE_FORCE_LIMIT {
            return Err(Error::SizeGuard(format!("{n} vertices exceed the brute-force limit of {BRUTE_FORCE_LIMIT}")));
        }
        let masks = self.masks()?;
        let mut reps: Vec<u64> = Vec::new();
        let mut classes: Vec<Vec<u64>> = Vec::new();
        let mut by_closure: HashMap<u64, usize> = HashMap::new();
        for set in 0..(1u64 << n) {
            let key = masks.upward_closure(set);
            match by_closure.get(&key) {
                Some(&k) => {
                    if !masks.equivalent(reps[k], set) {
                        return Err(Error::Validation("upward closure does not determine the class".into()));
                    }
                    classes[k].push(set);
                }
                None => {
                    if n <= 12 && reps.iter().any(|&r| masks.equivalent(r, set)) {
                        return Err(Error::Validation("equivalent subsets with different closures".into()));
                    }
                    by_closure.insert(key, reps.len());
                    reps.push(set);
                    classes.push(vec![set]);
                }
            }
        }
        let mut out: Vec<Vec<IndexSubset>> =
            classes.into_iter().map(|c| c.into_iter().map(|m| IndexSubset::new(mask_members(m))).collect()).collect();
        for class in &mut out {
            class.sort_by(|a, b| a.members.len().cmp(&b.members.len()).then_with(|| a.members.cmp(&b.members)));
        }
        out.sort_by(|a, b| a[0].members.len().cmp(&b[0].members.len()).then_with(|| a[0].members.cmp(&b[0].members)));
        Ok(out)
    }

    /// Parametrising pairs of a finite family: with no ascending chains
    /// these are the primitive subsets paired with the empty set.
    pub fn enumerate_ia_finite(&self) -> Result<Vec<(IndexSubset, IndexSubset)>> {
        if self.is_window() {
            return Err(Error::Validation(format!(
                "graph is a window of {}; its pure chains are not finite objects, use the windowed decomposition",
                self.generator.as_deref().unwrap_or("an infinite family")
            )));
        }
        Ok(self.primitive_subsets(None)?.into_iter().map(|p| (p, IndexSubset::empty())).collect())
    }

    /// One row per equivalence class of a finite family: its primitive
    /// subset and, when the graph is small enough for brute force, every
    /// subset in the class. Windows list their primitive subsets only.
    pub fn class_table(&self) -> Result<Vec<ClassRow>> {
        if self.is_window() || self.len() > BRUTE_FORCE_LIMIT {
            return Ok(self
                .primitive_subsets(None)?
                .into_iter()
                .map(|primitive| ClassRow { primitive, chains: IndexSubset::empty(), members: None })
                .collect());
        }
        let mut rows = self
            .enumerate_classes_bruteforce()?
            .into_iter()
            .map(|class| {
                let (primitive, chains) = self.class_signature(&class[0])?;
                Ok(ClassRow { primitive, chains, members: Some(class) })
            })
            .collect::<Result<Vec<_>>>()?;
        rows.sort_by(|a, b| {
            a.primitive
                .members
                .len()
                .cmp(&b.primitive.members.len())
                .then_with(|| a.primitive.members.cmp(&b.primitive.members))
        });
        Ok(rows)
    }

    /// Number of vertices on a longest directed path.
    pub fn longest_path(&self) -> usize {
        let n = self.len();
        let mut memo = vec![0usize; n];
        let mut order: Vec<usize> = (0..n).collect();
        // Every successor has strictly fewer successors in a closed DAG.
        order.sort_by_key(|&i| self.succ[i].count_ones(..));
        for &i in &order {
            memo[i] = 1 + self.succ[i].ones().map(|j| memo[j]).max().unwrap_or(0);
        }
        memo.into_iter().max().unwrap_or(0)
    }

    /// Mask view of the graph, for graphs with at most 64 vertices.
    pub fn masks(&self) -> Result<MaskGraph> {
        let n = self.len();
        if n > 64 {
            return Err(Error::SizeGuard(format!("{n} vertices exceed the 64-vertex mask limit")));
        }
        let to_mask = |row: &FixedBitSet| row.ones().fold(0u64, |m, b| m | 1 << b);
        Ok(MaskGraph {
            n,
            down: (0..n).map(|i| to_mask(&self.succ[i]) | 1 << i).collect(),
            up: (0..n).map(|i| to_mask(&self.pred[i]) | 1 << i).collect(),
        })
    }
}

/// Compares the longest chains of two windows of the same family.
pub fn detect_ascending_chains(small: &FamilyGraph, large: &FamilyGraph) -> ChainReport {
    let (a, b) = (small.longest_path(), large.longest_path());
    let exact = !large.is_window();
    ChainReport { small_window_longest: a, large_window_longest: b, probable_ascending_chain: !exact && b > a, exact }
}

/// Reflexive-transitive relation of a graph with at most 64 vertices as
/// bit masks.
#[derive(Clone, Debug)]
pub struct MaskGraph {
    n: usize,
    down: Vec<u64>,
    up: Vec<u64>,
}

impl MaskGraph {
    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn upward_closure(&self, set: u64) -> u64 {
        bits(set).fold(0, |acc, i| acc | self.up[i])
    }

    pub fn equivalent(&self, a: u64, b: u64) -> bool {
        let (up_a, up_b) = (self.upward_closure(a), self.upward_closure(b));
        a & !up_b == 0 && b & !up_a == 0
    }

    /// `(I_M, I_d, I_c)` as masks.
    pub fn decompose(&self, set: u64) -> (u64, u64, u64) {
        let maximal = bits(set).filter(|&i| self.down[i] & set == 1 << i).fold(0, |m, i| m | 1 << i);
        let dominated = set & self.upward_closure(maximal);
        (maximal, dominated, set & !dominated)
    }

    pub fn signature(&self, set: u64) -> (u64, u64) {
        let (m, _, c) = self.decompose(set);
        (m, self.upward_closure(c))
    }

    pub fn is_primitive(&self, set: u64) -> bool {
        bits(set).all(|i| self.down[i] & set == 1 << i)
    }
}

fn bits(mut m: u64) -> impl Iterator<Item = usize> {
    std::iter::from_fn(move || {
        if m == 0 {
            return None;
        }
        let i = m.trailing_zeros() as usize;
        m &= m - 1;
        Some(i)
    })
}

fn mask_members(m: u64) -> Vec<usize> {
    bits(m).collect()
}

/// A cycle `v -> ... -> v` in the raw edge list.
fn cycle_through(v: usize, n: usize, edges: &[(usize, usize)]) -> Vec<usize> {
    let mut adj: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for &(a, b) in edges {
        if a != b {
            adj.entry(a).or_default().push(b);
        }
    }
    let mut parent = vec![usize::MAX; n];
    let mut queue = VecDeque::from([v]);
    while let Some(x) = queue.pop_front() {
        for &y in adj.get(&x).into_iter().flatten() {
            if y == v {
                let mut path = vec![x];
                let mut cur = x;
                while cur != v {
                    cur = parent[cur];
                    path.push(cur);
                }
                path.reverse();
                path.push(v);
                return path;
            }
            if parent[y] == usize::MAX {
                parent[y] = x;
                queue.push_back(y);
            }
        }
    }
    vec![v, v]
}

/// Outcome of the brute-force check of the decomposition identities on one graph.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct IdentityCheck {
    pub name: &'static str,
    pub holds: bool,
    pub counterexample: Option<(Vec<usize>, Vec<usize>)>,
}

/// Checks, over all subsets `I` and all pairs `(I, J)`:
///
/// 1. `I ~ I_M` iff `I_c` is empty,
/// 2. `I_M ~ J_M` iff `I_d ~ J_d`,
/// 3. `I_M = J_M` iff `I_d ~ J_d`,
/// 4. `I ~ J` iff `I_M = J_M` and `I_c ~ J_c`,
/// 5. `I` is equivalent to a primitive subset iff `I_c` is empty,
/// 6. `I_c` is empty (a finite graph has no ascending chains),
///
/// plus agreement of signature equality with `~`.
pub fn check_decomposition_identities(g: &FamilyGraph) -> Result<Vec<IdentityCheck>> {
    let n = g.len();
    if n > 12 {
        return Err(Error::SizeGuard(format!("{n} vertices exceed the pairwise check limit of 12")));
    }
    let m = g.masks()?;
    let count = 1usize << n;
    let dec: Vec<(u64, u64, u64)> = (0..count as u64).map(|s| m.decompose(s)).collect();
    let plus: Vec<u64> = (0..count as u64).map(|s| m.upward_closure(s)).collect();
    let eq = |a: u64, b: u64| a & !plus[b as usize] == 0 && b & !plus[a as usize] == 0;
    let sig: Vec<(u64, u64)> = dec.iter().map(|&(im, _, ic)| (im, plus[ic as usize])).collect();
    let primitive_closures: std::collections::HashSet<u64> =
        (0..count as u64).filter(|&s| m.is_primitive(s)).map(|s| plus[s as usize]).collect();

    let mut checks: Vec<IdentityCheck> = [
        "I ~ I_M iff I_c empty",
        "I_M ~ J_M iff I_d ~ J_d",
        "I_M = J_M iff I_d ~ J_d",
        "I ~ J iff I_M = J_M and I_c ~ J_c",
        "I equivalent to a primitive subset iff I_c empty",
        "I_c empty on finite graphs",
        "signature equality iff I ~ J",
    ]
    .into_iter()
    .map(|name| IdentityCheck { name, holds: true, counterexample: None })
    .collect();
    let mut fail = |k: usize, a: u64, b: u64| {
        if checks[k].holds {
            checks[k].holds = false;
            checks[k].counterexample = Some((mask_members(a), mask_members(b)));
        }
    };

    for a in 0..count as u64 {
        let (am, _, ac) = dec[a as usize];
        if eq(a, am) != (ac == 0) {
            fail(0, a, a);
        }
        if primitive_closures.contains(&plus[a as usize]) != (ac == 0) {
            fail(4, a, a);
        }
        if ac != 0 {
            fail(5, a, a);
        }
        for b in 0..count as u64 {
            let (bm, bd, bc) = dec[b as usize];
            let (_, ad, _) = dec[a as usize];
            let d_eq = eq(ad, bd);
            if eq(am, bm) != d_eq {
                fail(1, a, b);
            }
            if (am == bm) != d_eq {
                fail(2, a, b);
            }
            let ab = eq(a, b);
            if ab != (am == bm && eq(ac, bc)) {
                fail(3, a, b);
            }
            if ab != (sig[a as usize] == sig[b as usize]) {
                fail(6, a, b);
            }
        }
    }
    Ok(checks)
}
