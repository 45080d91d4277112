//! Type identifiers, countable typesets and finite windows over them.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// Identifier of a single type.
///
/// Integer keys index finite or one-dimensional typesets, pairs index the
/// grid `N0 x N0`, and sign sequences index the binary tree of finite
/// `+1/-1` words.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum TypeId {
    Int(u64),
    Pair(u64, u64),
    Signs(Vec<i8>),
}

impl TypeId {
    pub fn pair(i: u64, j: u64) -> Self {
        TypeId::Pair(i, j)
    }

    pub fn as_pair(&self) -> Option<(u64, u64)> {
        match self {
            TypeId::Pair(i, j) => Some((*i, *j)),
            _ => None,
        }
    }

    pub fn as_int(&self) -> Option<u64> {
        match self {
            TypeId::Int(n) => Some(*n),
            _ => None,
        }
    }
}

impl fmt::Display for TypeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TypeId::Int(n) => write!(f, "{n}"),
            TypeId::Pair(i, j) => write!(f, "({i},{j})"),
            TypeId::Signs(v) => {
                f.write_str("<")?;
                for s in v {
                    f.write_str(if *s > 0 { "+" } else { "-" })?;
                }
                f.write_str(">")
            }
        }
    }
}

impl FromStr for TypeId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let t = s.trim();
        let bad = || Error::Parse(format!("cannot parse type identifier {s:?}"));
        if let Some(inner) = t.strip_prefix('(').and_then(|r| r.strip_suffix(')')) {
            let (a, b) = inner.split_once(',').ok_or_else(bad)?;
            let i = a.trim().parse().map_err(|_| bad())?;
            let j = b.trim().parse().map_err(|_| bad())?;
            return Ok(TypeId::Pair(i, j));
        }
        if let Some(inner) = t.strip_prefix('<').and_then(|r| r.strip_suffix('>')) {
            let signs = inner
                .chars()
                .map(|c| match c {
                    '+' => Ok(1),
                    '-' => Ok(-1),
                    _ => Err(bad()),
                })
                .collect::<Result<Vec<i8>>>()?;
            return Ok(TypeId::Signs(signs));
        }
        t.parse().map(TypeId::Int).map_err(|_| bad())
    }
}

impl Serialize for TypeId {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for TypeId {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Int(u64),
            Text(String),
        }
        match Raw::deserialize(deserializer)? {
            Raw::Int(n) => Ok(TypeId::Int(n)),
            Raw::Text(s) => s.parse().map_err(serde::de::Error::custom),
        }
    }
}

/// Storage behind [`Typeset::Finite`].
#[derive(Debug)]
pub struct FiniteTypes {
    list: Vec<TypeId>,
    index: HashMap<TypeId, usize>,
}

/// A countable typeset together with its canonical enumeration.
#[derive(Clone, Debug)]
pub enum Typeset {
    /// Explicit finite list; the enumeration is the list order.
    Finite(Arc<FiniteTypes>),
    /// `{0, 1, 2, ...}` as `TypeId::Int`.
    Naturals,
    /// `N0 x N0` as `TypeId::Pair`, enumerated by diagonals: `i + j`
    /// ascending, then `i` ascending.
    Grid,
    /// Finite `+1/-1` words, by length and then lexicographically with `+`
    /// before `-`.
    BinaryTree,
}

impl Typeset {
    /// Finite typeset from distinct identifiers.
    pub fn finite(list: Vec<TypeId>) -> Result<Self> {
        let mut index = HashMap::with_capacity(list.len());
        for (k, t) in list.iter().enumerate() {
            if index.insert(t.clone(), k).is_some() {
                return Err(Error::Validation(format!("duplicate type {t} in typeset")));
            }
        }
        Ok(Typeset::Finite(Arc::new(FiniteTypes { list, index })))
    }

    /// Number of types, or `None` for infinite typesets.
    pub fn len(&self) -> Option<usize> {
        match self {
            Typeset::Finite(f) => Some(f.list.len()),
            _ => None,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == Some(0)
    }

    pub fn is_finite(&self) -> bool {
        self.len().is_some()
    }

    /// Type with canonical index `idx`.
    pub fn type_at(&self, idx: usize) -> Option<TypeId> {
        match self {
            Typeset::Finite(f) => f.list.get(idx).cloned(),
            Typeset::Naturals => Some(TypeId::Int(idx as u64)),
            Typeset::Grid => {
                let (i, j) = grid_unrank(idx as u64);
                Some(TypeId::Pair(i, j))
            }
            Typeset::BinaryTree => {
                let mut len = 0u32;
                let mut rest = idx as u64;
                while rest >= 1u64 << len {
                    rest -= 1u64 << len;
                    len += 1;
                }
                let signs = (0..len).map(|b| if rest >> (len - 1 - b) & 1 == 0 { 1 } else { -1 }).collect();
                Some(TypeId::Signs(signs))
            }
        }
    }

    /// Canonical index of `t`, or `None` when `t` is not a member.
    pub fn index_of(&self, t: &TypeId) -> Option<usize> {
        match (self, t) {
            (Typeset::Finite(f), _) => f.index.get(t).copied(),
            (Typeset::Naturals, TypeId::Int(n)) => usize::try_from(*n).ok(),
            (Typeset::Grid, TypeId::Pair(i, j)) => {
                let d = i.checked_add(*j)?;
                let base = d.checked_mul(d + 1)? / 2;
                usize::try_from(base.checked_add(*i)?).ok()
            }
            (Typeset::BinaryTree, TypeId::Signs(v)) => {
                if v.len() >= 63 {
                    return None;
                }
                let rank = v.iter().fold(0u64, |acc, s| (acc << 1) | u64::from(*s < 0));
                usize::try_from((1u64 << v.len()) - 1 + rank).ok()
            }
            _ => None,
        }
    }

    pub fn contains(&self, t: &TypeId) -> bool {
        self.index_of(t).is_some()
    }

    /// The first `n` types (fewer if the typeset is smaller).
    pub fn first(&self, n: usize) -> Vec<TypeId> {
        let n = self.len().map_or(n, |len| len.min(n));
        (0..n).filter_map(|k| self.type_at(k)).collect()
    }

    pub fn describe(&self) -> String {
        match self {
            Typeset::Finite(f) => format!("finite({})", f.list.len()),
            Typeset::Naturals => "naturals".into(),
            Typeset::Grid => "grid".into(),
            Typeset::BinaryTree => "binary-tree".into(),
        }
    }
}

fn grid_unrank(idx: u64) -> (u64, u64) {
    let mut d = ((((8 * idx + 1) as f64).sqrt() - 1.0) / 2.0) as u64;
    while d * (d + 1) / 2 > idx {
        d -= 1;
    }
    while (d + 1) * (d + 2) / 2 <= idx {
        d += 1;
    }
    let i = idx - d * (d + 1) / 2;
    (i, d - i)
}

/// A finite ordered list of distinct types.
///
/// Windows built with [`Window::initial`] are initial segments of the
/// canonical enumeration; [`Window::from_types`] accepts any list and is used
/// for ad-hoc query sets.
#[derive(Clone, Debug, Default)]
pub struct Window {
    types: Vec<TypeId>,
    index: HashMap<TypeId, usize>,
}

impl Window {
    pub fn initial(typeset: &Typeset, n: usize) -> Self {
        Self::build(typeset.first(n))
    }

    pub fn from_types(types: Vec<TypeId>) -> Result<Self> {
        let mut seen = std::collections::HashSet::new();
        for t in &types {
            if !seen.insert(t) {
                return Err(Error::Validation(format!("duplicate type {t} in window")));
            }
        }
        Ok(Self::build(types))
    }

    fn build(types: Vec<TypeId>) -> Self {
        let index = types.iter().cloned().enumerate().map(|(k, t)| (t, k)).collect();
        Window { types, index }
    }

    pub fn types(&self) -> &[TypeId] {
        &self.types
    }

    pub fn len(&self) -> usize {
        self.types.len()
    }

    pub fn is_empty(&self) -> bool {
        self.types.is_empty()
    }

    pub fn position(&self, t: &TypeId) -> Option<usize> {
        self.index.get(t).copied()
    }

    pub fn contains(&self, t: &TypeId) -> bool {
        self.index.contains_key(t)
    }

    /// Whether the window lists exactly the first `len()` enumerated types.
    pub fn is_initial_segment(&self, typeset: &Typeset) -> bool {
        self.types.iter().enumerate().all(|(k, t)| typeset.index_of(t) == Some(k))
    }
}

impl PartialEq for Window {
    fn eq(&self, other: &Self) -> bool {
        self.types == other.types
    }
}

/// Values in `[0, 1]` indexed by the types of a window.
#[derive(Clone, Debug, PartialEq)]
pub struct ProbVector {
    window: Window,
    values: Vec<f64>,
}

impl ProbVector {
    pub fn new(window: Window, values: Vec<f64>) -> Result<Self> {
        if window.len() != values.len() {
            return Err(Error::Validation(format!(
                "window has {} types but {} values were given",
                window.len(),
                values.len()
            )));
        }
        if let Some((t, v)) = window.types().iter().zip(&values).find(|(_, v)| !(0.0..=1.0).contains(*v)) {
            return Err(Error::Validation(format!("value {v} at type {t} lies outside [0,1]")));
        }
        Ok(ProbVector { window, values })
    }

    pub fn constant(window: Window, value: f64) -> Self {
        let values = vec![value; window.len()];
        ProbVector { window, values }
    }

    pub fn window(&self) -> &Window {
        &self.window
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, t: &TypeId) -> Option<f64> {
        self.window.position(t).map(|k| self.values[k])
    }

    pub fn iter(&self) -> impl Iterator<Item = (&TypeId, f64)> {
        self.window.types().iter().zip(self.values.iter().copied())
    }

    /// Restriction to the types of `window`, all of which must be present.
    pub fn restrict(&self, window: &Window) -> Result<ProbVector> {
        let values = window
            .types()
            .iter()
            .map(|t| self.get(t).ok_or_else(|| Error::Validation(format!("type {t} missing from vector"))))
            .collect::<Result<Vec<_>>>()?;
        Ok(ProbVector { window: window.clone(), values })
    }

    /// Sup-norm distance; both vectors must share the same window.
    pub fn sup_distance(&self, other: &ProbVector) -> Result<f64> {
        if self.window != other.window {
            return Err(Error::Validation("vectors live on different windows".into()));
        }
        Ok(self.values.iter().zip(&other.values).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
    }
}

#[derive(Serialize, Deserialize)]
struct ProbVectorRepr {
    types: Vec<TypeId>,
    values: Vec<f64>,
}

impl Serialize for ProbVector {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        ProbVectorRepr { types: self.window.types.clone(), values: self.values.clone() }.serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for ProbVector {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let repr = ProbVectorRepr::deserialize(deserializer)?;
        let window = Window::from_types(repr.types).map_err(serde::de::Error::custom)?;
        ProbVector::new(window, repr.values).map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn grid_enumeration_is_diagonal() {
        let first: Vec<_> = Typeset::Grid.first(6);
        let expected = [(0, 0), (0, 1), (1, 0), (0, 2), (1, 1), (2, 0)];
        for (t, (i, j)) in first.iter().zip(expected) {
            assert_eq!(*t, TypeId::Pair(i, j));
        }
    }

    #[test]
    fn binary_tree_enumeration() {
        let first = Typeset::BinaryTree.first(7);
        let shown: Vec<String> = first.iter().map(ToString::to_string).collect();
        assert_eq!(shown, ["<>", "<+>", "<->", "<++>", "<+->", "<-+>", "<-->"]);
    }

    #[test]
    fn display_round_trips() {
        for t in [TypeId::Int(7), TypeId::Pair(3, 11), TypeId::Signs(vec![1, -1, -1]), TypeId::Signs(vec![])] {
            assert_eq!(t.to_string().parse::<TypeId>().unwrap(), t);
        }
        assert!("(1;2)".parse::<TypeId>().is_err());
    }

    #[test]
    fn finite_typeset_rejects_duplicates() {
        assert!(Typeset::finite(vec![TypeId::Int(1), TypeId::Int(1)]).is_err());
    }

    #[test]
    fn prob_vector_rejects_out_of_range() {
        let w = Window::initial(&Typeset::Naturals, 2);
        assert!(ProbVector::new(w.clone(), vec![0.5, 1.5]).is_err());
        assert!(ProbVector::new(w, vec![0.5]).is_err());
    }

    #[test]
    fn prob_vector_json() {
        let w = Window::initial(&Typeset::Grid, 2);
        let v = ProbVector::new(w, vec![0.25, 1.0]).unwrap();
        let text = serde_json::to_string(&v).unwrap();
        assert_eq!(text, r#"{"types":["(0,0)","(0,1)"],"values":[0.25,1.0]}"#);
        let back: ProbVector = serde_json::from_str(&text).unwrap();
        assert_eq!(back, v);
    }

    proptest! {
        #[test]
        fn grid_rank_unrank(idx in 0usize..2_000_000) {
            let t = Typeset::Grid.type_at(idx).unwrap();
            prop_assert_eq!(Typeset::Grid.index_of(&t), Some(idx));
        }

        #[test]
        fn tree_rank_unrank(idx in 0usize..100_000) {
            let t = Typeset::BinaryTree.type_at(idx).unwrap();
            prop_assert_eq!(Typeset::BinaryTree.index_of(&t), Some(idx));
        }

        #[test]
        fn initial_windows_are_initial(n in 0usize..200) {
            let w = Window::initial(&Typeset::Grid, n);
            prop_assert!(w.is_initial_segment(&Typeset::Grid));
            prop_assert_eq!(w.len(), n);
        }
    }
}
