//! Subsets of a typeset given by membership predicates.

use std::collections::BTreeSet;
use std::fmt;
use std::sync::Arc;

use crate::types::TypeId;

type Member = Arc<dyn Fn(&TypeId) -> bool + Send + Sync>;

#[derive(Clone)]
enum Kind {
    Empty,
    All,
    Finite(BTreeSet<TypeId>),
    Predicate { member: Member, known_finite: Option<bool> },
}

/// A subset `A` of the typeset, decided by a deterministic predicate.
#[derive(Clone)]
pub struct SubsetSpec {
    name: String,
    kind: Kind,
}

impl fmt::Debug for SubsetSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "SubsetSpec({})", self.name)
    }
}

impl SubsetSpec {
    pub fn empty() -> Self {
        SubsetSpec { name: "empty".into(), kind: Kind::Empty }
    }

    /// The whole typeset.
    pub fn all() -> Self {
        SubsetSpec { name: "all".into(), kind: Kind::All }
    }

    pub fn finite(name: impl Into<String>, members: impl IntoIterator<Item = TypeId>) -> Self {
        let set: BTreeSet<TypeId> = members.into_iter().collect();
        if set.is_empty() {
            return SubsetSpec { name: name.into(), kind: Kind::Empty };
        }
        SubsetSpec { name: name.into(), kind: Kind::Finite(set) }
    }

    pub fn singleton(x: TypeId) -> Self {
        let name = format!("{{{x}}}");
        Self::finite(name, [x])
    }

    pub fn predicate(
        name: impl Into<String>,
        known_finite: Option<bool>,
        member: impl Fn(&TypeId) -> bool + Send + Sync + 'static,
    ) -> Self {
        SubsetSpec { name: name.into(), kind: Kind::Predicate { member: Arc::new(member), known_finite } }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn renamed(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    pub fn contains(&self, t: &TypeId) -> bool {
        match &self.kind {
            Kind::Empty => false,
            Kind::All => true,
            Kind::Finite(set) => set.contains(t),
            Kind::Predicate { member, .. } => member(t),
        }
    }

    pub fn is_empty_set(&self) -> bool {
        matches!(self.kind, Kind::Empty)
    }

    pub fn is_all(&self) -> bool {
        matches!(self.kind, Kind::All)
    }

    pub fn known_finite(&self) -> Option<bool> {
        match &self.kind {
            Kind::Empty | Kind::Finite(_) => Some(true),
            Kind::All => None,
            Kind::Predicate { known_finite, .. } => *known_finite,
        }
    }

    /// Members, when the subset is given as an explicit finite list.
    pub fn listed_members(&self) -> Option<Vec<TypeId>> {
        match &self.kind {
            Kind::Empty => Some(Vec::new()),
            Kind::Finite(set) => Some(set.iter().cloned().collect()),
            _ => None,
        }
    }

    pub fn complement(&self) -> SubsetSpec {
        let name = format!("complement of {}", self.name);
        match &self.kind {
            Kind::Empty => SubsetSpec::all().renamed(name),
            Kind::All => SubsetSpec::empty().renamed(name),
            _ => {
                let inner = self.clone();
                SubsetSpec::predicate(name, None, move |t| !inner.contains(t))
            }
        }
    }

    /// Union of several subsets.
    pub fn union(name: impl Into<String>, parts: &[SubsetSpec]) -> SubsetSpec {
        if parts.iter().any(SubsetSpec::is_all) {
            return SubsetSpec::all().renamed(name);
        }
        let parts: Vec<SubsetSpec> = parts.iter().filter(|p| !p.is_empty_set()).cloned().collect();
        if parts.is_empty() {
            return SubsetSpec::empty().renamed(name);
        }
        if let Some(lists) = parts.iter().map(SubsetSpec::listed_members).collect::<Option<Vec<_>>>() {
            return SubsetSpec::finite(name, lists.into_iter().flatten());
        }
        let known_finite = if parts.iter().all(|p| p.known_finite() == Some(true)) {
            Some(true)
        } else if parts.iter().any(|p| p.known_finite() == Some(false)) {
            Some(false)
        } else {
            None
        };
        SubsetSpec::predicate(name, known_finite, move |t| parts.iter().any(|p| p.contains(t)))
    }
}
