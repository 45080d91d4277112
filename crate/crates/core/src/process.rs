//! Branching processes over countable typesets.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::sync::Arc;

use petgraph::algo::tarjan_scc;
use petgraph::graph::DiGraph;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::law::OffspringLaw;
use crate::types::{ProbVector, TypeId, Typeset, Window};

/// Signature of the function assigning an offspring law to each type.
pub type LawFn = dyn Fn(&TypeId) -> Result<OffspringLaw> + Send + Sync;

/// A multitype Galton-Watson process: a typeset and one offspring law per
/// type.
///
/// The law function must be deterministic. Specs are cheap to clone and can
/// be shared across threads.
#[derive(Clone)]
pub struct ProcessSpec {
    name: String,
    typeset: Typeset,
    law_fn: Arc<LawFn>,
    irreducible: Option<bool>,
}

impl fmt::Debug for ProcessSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ProcessSpec")
            .field("name", &self.name)
            .field("typeset", &self.typeset.describe())
            .field("irreducible", &self.irreducible)
            .finish()
    }
}

impl ProcessSpec {
    pub fn new(
        name: impl Into<String>,
        typeset: Typeset,
        law_fn: impl Fn(&TypeId) -> Result<OffspringLaw> + Send + Sync + 'static,
    ) -> Self {
        ProcessSpec { name: name.into(), typeset, law_fn: Arc::new(law_fn), irreducible: None }
    }

    /// Finite process from an explicit table of laws, one per type, in
    /// enumeration order.
    pub fn finite(name: impl Into<String>, laws: Vec<(TypeId, OffspringLaw)>) -> Result<Self> {
        let typeset = Typeset::finite(laws.iter().map(|(t, _)| t.clone()).collect())?;
        for (t, law) in &laws {
            law.validate().map_err(|e| Error::Validation(format!("law of type {t}: {e}")))?;
            if let Some(c) = law.support().into_iter().find(|c| !typeset.contains(c)) {
                return Err(Error::Validation(format!("law of type {t} produces unknown type {c}")));
            }
        }
        let table: Arc<BTreeMap<TypeId, OffspringLaw>> = Arc::new(laws.into_iter().collect());
        Ok(ProcessSpec::new(name, typeset, move |t: &TypeId| {
            table.get(t).cloned().ok_or_else(|| Error::UnknownType(t.to_string()))
        }))
    }

    /// Declares whether the process is irreducible. The solver uses this
    /// in preference to its own windowed check.
    pub fn with_irreducible(mut self, irreducible: bool) -> Self {
        self.irreducible = Some(irreducible);
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn typeset(&self) -> &Typeset {
        &self.typeset
    }

    pub fn irreducible_hint(&self) -> Option<bool> {
        self.irreducible
    }

    pub fn check_type(&self, x: &TypeId) -> Result<()> {
        if self.typeset.contains(x) {
            Ok(())
        } else {
            Err(Error::UnknownType(x.to_string()))
        }
    }

    pub fn law(&self, x: &TypeId) -> Result<OffspringLaw> {
        self.check_type(x)?;
        (self.law_fn)(x)
    }

    /// `G_x(s)` for every `x` in `at`; coordinates outside `s`'s window take
    /// the value `outside_value`.
    pub fn eval_generating_function(&self, s: &ProbVector, at: &[TypeId], outside_value: f64) -> Result<ProbVector> {
        if !(0.0..=1.0).contains(&outside_value) {
            return Err(Error::Validation(format!("outside value {outside_value} lies outside [0,1]")));
        }
        let values = at
            .iter()
            .map(|x| {
                let law = self.law(x)?;
                Ok(1.0 - law.pgf_complement(|y| 1.0 - s.get(y).unwrap_or(outside_value)))
            })
            .collect::<Result<Vec<_>>>()?;
        ProbVector::new(Window::from_types(at.to_vec())?, values)
    }

    /// Expected number of type-`y` children of a type-`x` parent.
    pub fn mean_matrix_entry(&self, x: &TypeId, y: &TypeId) -> Result<f64> {
        self.check_type(y)?;
        Ok(self.law(x)?.mean_of(y))
    }

    /// Edges `(x, y)` with `m_xy > 0`, restricted to `window`.
    pub fn type_graph(&self, window: &Window) -> Result<TypeGraph> {
        let adjacency = window
            .types()
            .iter()
            .map(|x| {
                let mut out: Vec<usize> = self.law(x)?.support().iter().filter_map(|y| window.position(y)).collect();
                out.sort_unstable();
                Ok(out)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(TypeGraph { window: window.clone(), adjacency })
    }

    /// Strongly connected components of the type graph on `window`.
    pub fn irreducible_classes(&self, window: &Window) -> Result<Vec<Vec<TypeId>>> {
        Ok(self.type_graph(window)?.classes())
    }

    /// Checks that each irreducible class of the window contains a type whose
    /// number of children inside the class is not one almost surely.
    pub fn is_non_singular(&self, window: &Window) -> Result<NonSingularity> {
        let mut violating = Vec::new();
        for class in self.irreducible_classes(window)? {
            let members: HashSet<&TypeId> = class.iter().collect();
            let mut escapes = false;
            for y in &class {
                if self.law(y)?.prob_exactly_one(|t| members.contains(t)) < 1.0 - 1e-12 {
                    escapes = true;
                    break;
                }
            }
            if !escapes {
                violating.push(class);
            }
        }
        Ok(NonSingularity { non_singular: violating.is_empty(), violating_classes: violating })
    }
}

/// Result of [`ProcessSpec::is_non_singular`].
#[derive(Clone, Debug, Serialize)]
pub struct NonSingularity {
    pub non_singular: bool,
    pub violating_classes: Vec<Vec<TypeId>>,
}

/// Directed graph of positive mean-matrix entries on a window.
#[derive(Clone, Debug)]
pub struct TypeGraph {
    window: Window,
    adjacency: Vec<Vec<usize>>,
}

impl TypeGraph {
    pub fn window(&self) -> &Window {
        &self.window
    }

    pub fn has_edge(&self, x: &TypeId, y: &TypeId) -> bool {
        match (self.window.position(x), self.window.position(y)) {
            (Some(a), Some(b)) => self.adjacency[a].binary_search(&b).is_ok(),
            _ => false,
        }
    }

    pub fn edges(&self) -> impl Iterator<Item = (&TypeId, &TypeId)> {
        let types = self.window.types();
        self.adjacency.iter().enumerate().flat_map(move |(a, out)| out.iter().map(move |b| (&types[a], &types[*b])))
    }

    pub fn edge_count(&self) -> usize {
        self.adjacency.iter().map(Vec::len).sum()
    }

    /// Strongly connected components, each listed in window order and
    /// sorted by their first member.
    pub fn classes(&self) -> Vec<Vec<TypeId>> {
        let mut graph = DiGraph::<(), ()>::with_capacity(self.adjacency.len(), self.edge_count());
        let nodes: Vec<_> = (0..self.adjacency.len()).map(|_| graph.add_node(())).collect();
        for (a, out) in self.adjacency.iter().enumerate() {
            for b in out {
                graph.add_edge(nodes[a], nodes[*b], ());
            }
        }
        let mut comps: Vec<Vec<usize>> = tarjan_scc(&graph)
            .into_iter()
            .map(|c| {
                let mut idx: Vec<usize> = c.into_iter().map(|n| n.index()).collect();
                idx.sort_unstable();
                idx
            })
            .collect();
        comps.sort_by_key(|c| c[0]);
        let types = self.window.types();
        comps.into_iter().map(|c| c.into_iter().map(|k| types[k].clone()).collect()).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::law::{CountComponent, CountLaw, JointOutcome};

    pub(crate) fn cubic_spec() -> ProcessSpec {
        let x = TypeId::Int(0);
        let law = OffspringLaw::joint(vec![
            JointOutcome::from_multiset(0.5, []),
            JointOutcome::from_multiset(0.5, vec![x.clone(); 3]),
        ])
        .unwrap();
        ProcessSpec::finite("cubic", vec![(x, law)]).unwrap()
    }

    #[test]
    fn gf_at_one_and_zero() {
        let spec = cubic_spec();
        let w = Window::initial(spec.typeset(), 1);
        let at = w.types().to_vec();
        let one = spec.eval_generating_function(&ProbVector::constant(w.clone(), 1.0), &at, 1.0).unwrap();
        assert_eq!(one.values(), &[1.0]);
        let zero = spec.eval_generating_function(&ProbVector::constant(w, 0.0), &at, 1.0).unwrap();
        assert_eq!(zero.values(), &[0.5]);
    }

    #[test]
    fn unknown_types_are_domain_errors() {
        let spec = cubic_spec();
        assert!(matches!(spec.law(&TypeId::Int(5)), Err(Error::UnknownType(_))));
        assert!(matches!(spec.mean_matrix_entry(&TypeId::Int(0), &TypeId::Int(9)), Err(Error::UnknownType(_))));
        let w = Window::initial(spec.typeset(), 1);
        assert!(spec.eval_generating_function(&ProbVector::constant(w, 1.0), &[TypeId::Int(0)], 1.5).is_err());
    }

    #[test]
    fn finite_spec_rejects_foreign_children() {
        let law =
            OffspringLaw::product(vec![CountComponent::new(TypeId::Int(7), CountLaw::Deterministic { n: 1 })]).unwrap();
        assert!(ProcessSpec::finite("bad", vec![(TypeId::Int(0), law)]).is_err());
    }

    #[test]
    fn childless_law_has_zero_means_and_no_edges() {
        let spec = ProcessSpec::finite(
            "dead",
            vec![(TypeId::Int(0), OffspringLaw::sterile()), (TypeId::Int(1), OffspringLaw::sterile())],
        )
        .unwrap();
        assert_eq!(spec.mean_matrix_entry(&TypeId::Int(0), &TypeId::Int(1)).unwrap(), 0.0);
        let w = Window::initial(spec.typeset(), 2);
        assert_eq!(spec.type_graph(&w).unwrap().edge_count(), 0);
    }

    #[test]
    fn singular_and_non_singular() {
        let x = TypeId::Int(0);
        let single =
            OffspringLaw::product(vec![CountComponent::new(x.clone(), CountLaw::Deterministic { n: 1 })]).unwrap();
        let spec = ProcessSpec::finite("single", vec![(x, single)]).unwrap();
        let w = Window::initial(spec.typeset(), 1);
        let report = spec.is_non_singular(&w).unwrap();
        assert!(!report.non_singular);
        assert_eq!(report.violating_classes.len(), 1);

        let spec = cubic_spec();
        let w = Window::initial(spec.typeset(), 1);
        assert!(spec.is_non_singular(&w).unwrap().non_singular);
    }
}
