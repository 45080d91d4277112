//! A branching process realising a given acyclic implication graph with its
//! singleton family.
//!
//! Every vertex `i` becomes a type whose offspring number follows
//! `phi(s) = (1 - b) + b s^3`. Each child is placed at `i` with weight `1/2`
//! and at an out-neighbour of `i` with the remaining weight split evenly; a
//! sink keeps all of its children.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::family::FamilyGraph;
use crate::law::{JointOutcome, OffspringLaw};
use crate::process::ProcessSpec;
use crate::subset::SubsetSpec;
use crate::types::TypeId;

/// Largest out-degree accepted; the law of a vertex with `d` out-neighbours
/// has `C(d + 3, 3)` outcomes.
pub const MAX_OUT_DEGREE: usize = 64;

/// The constructed process, its singleton family and the placement weights
/// `r_ij`.
#[derive(Clone, Debug)]
pub struct CanonicalProcess {
    pub spec: ProcessSpec,
    pub family: Vec<SubsetSpec>,
    pub labels: Vec<String>,
    pub weights: Vec<Vec<(usize, f64)>>,
    pub b: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct PlacementRow {
    pub vertex: String,
    pub weights: Vec<(String, f64)>,
}

impl CanonicalProcess {
    /// Weight `r_ij`.
    pub fn weight(&self, i: usize, j: usize) -> f64 {
        self.weights[i].iter().find(|(k, _)| *k == j).map_or(0.0, |(_, w)| *w)
    }

    pub fn placement_table(&self) -> Vec<PlacementRow> {
        self.weights
            .iter()
            .enumerate()
            .map(|(i, row)| PlacementRow {
                vertex: self.labels[i].clone(),
                weights: row.iter().map(|(j, w)| (self.labels[*j].clone(), *w)).collect(),
            })
            .collect()
    }

    /// `phi(s) = (1 - b) + b s^3`.
    pub fn phi(&self, s: f64) -> f64 {
        (1.0 - self.b) + self.b * s.powi(3)
    }

    /// Smallest fixed point of `s -> phi(s/2 + 1/2)`, the extinction
    /// probability of the children a non-sink vertex keeps.
    pub fn local_extinction(&self) -> f64 {
        let mut s = 0.0;
        for _ in 0..10_000 {
            let next = self.phi(0.5 * s + 0.5);
            if (next - s).abs() <= 1e-16 {
                return next;
            }
            s = next;
        }
        s
    }
}

/// Builds the process for the graph `edges` on `labels`, with
/// `b` in `(2/3, 1]`.
pub fn canonical_process_from_dag(labels: Vec<String>, edges: &[(usize, usize)], b: f64) -> Result<CanonicalProcess> {
    if !(b > 2.0 / 3.0 && b <= 1.0) {
        return Err(Error::Validation(format!("b = {b} must lie in (2/3, 1]")));
    }
    FamilyGraph::new(labels.clone(), edges)?;
    let n = labels.len();
    let mut out: Vec<Vec<usize>> = vec![Vec::new(); n];
    for &(a, c) in edges {
        if a != c && !out[a].contains(&c) {
            out[a].push(c);
        }
    }
    let mut weights = Vec::with_capacity(n);
    for (i, targets) in out.iter_mut().enumerate() {
        targets.sort_unstable();
        if targets.len() > MAX_OUT_DEGREE {
            return Err(Error::SizeGuard(format!("vertex {} has {} out-neighbours", labels[i], targets.len())));
        }
        let row: Vec<(usize, f64)> = if targets.is_empty() {
            vec![(i, 1.0)]
        } else {
            let share = 0.5 / targets.len() as f64;
            std::iter::once((i, 0.5)).chain(targets.iter().map(|&j| (j, share))).collect()
        };
        weights.push(row);
    }
    let laws = weights
        .iter()
        .enumerate()
        .map(|(i, row)| Ok((TypeId::Int(i as u64), cubic_placement_law(row, b)?)))
        .collect::<Result<Vec<_>>>()?;
    let spec = ProcessSpec::finite(format!("canonical(b={b})"), laws)?;
    let family =
        (0..n).map(|i| SubsetSpec::singleton(TypeId::Int(i as u64)).renamed(format!("{{{}}}", labels[i]))).collect();
    Ok(CanonicalProcess { spec, family, labels, weights, b })
}

/// Same construction on the closed relation of a family graph.
pub fn canonical_process_from_graph(g: &FamilyGraph, b: f64) -> Result<CanonicalProcess> {
    canonical_process_from_dag(g.labels().to_vec(), &g.closed_edges(), b)
}

/// Law of `phi(sum_j r_j s_j)`: nothing w.p. `1 - b`, otherwise three
/// children placed independently by the weights.
fn cubic_placement_law(row: &[(usize, f64)], b: f64) -> Result<OffspringLaw> {
    let mut outcomes = Vec::new();
    if b < 1.0 {
        outcomes.push(JointOutcome::from_multiset(1.0 - b, []));
    }
    let d = row.len();
    for x in 0..d {
        for y in x..d {
            for z in y..d {
                let arrangements = match (x == y, y == z) {
                    (true, true) => 1.0,
                    (false, false) => 6.0,
                    _ => 3.0,
                };
                let prob = b * arrangements * row[x].1 * row[y].1 * row[z].1;
                let children = [x, y, z].map(|k| TypeId::Int(row[k].0 as u64));
                outcomes.push(JointOutcome::from_multiset(prob, children));
            }
        }
    }
    OffspringLaw::joint(outcomes)
}
