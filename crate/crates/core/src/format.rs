//! JSON formats for processes and families, and the textual subset syntax
//! used on the command line.
//!
//! A finite process is written as
//!
//! ```json
//! {
//!   "name": "two types",
//!   "types": [0, 1],
//!   "laws": {
//!     "0": {"form": "explicit", "outcomes": [{"prob": 0.5, "children": []},
//!                                            {"prob": 0.5, "children": [0, 1, 1]}]},
//!     "1": {"form": "product", "components": [{"child": 1, "law": "geometric", "mean": 0.8}]}
//!   }
//! }
//! ```
//!
//! Type labels are integers, pairs such as `"(2,3)"` or sign words such as
//! `"<+-+>"`. Built-in processes are referenced as
//! `{"builtin": "example1", "params": {"p": 0.1, "q": 0.5, "r": 1.0}}`; see
//! [`BUILTINS`].
//!
//! An implication graph is written as
//! `{"vertices": ["1", "2"], "implies": [["2", "1"]]}`, and a family of
//! subsets of a process as
//! `{"process": {...}, "members": [{"name": "L1", "subset": "level:1"}]}`.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::family::FamilyGraph;
use crate::law::{CountComponent, CountLaw, JointOutcome, OffspringLaw};
use crate::models::{
    build_example1, build_example2, phase_prime_index, single_type_binary, single_type_cubic, Example1Params,
};
use crate::process::ProcessSpec;
use crate::subset::SubsetSpec;
use crate::types::TypeId;

/// Names accepted by the `builtin` key, with their parameters.
pub const BUILTINS: [(&str, &str); 4] = [("example1", "p, q, r"), ("example2", ""), ("cubic", ""), ("binary", "a")];

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(untagged)]
enum Label {
    Int(u64),
    Text(String),
}

impl Label {
    fn to_type(&self) -> Result<TypeId> {
        match self {
            Label::Int(n) => Ok(TypeId::Int(*n)),
            Label::Text(s) => s.parse(),
        }
    }

    fn from_type(t: &TypeId) -> Self {
        match t {
            TypeId::Int(n) => Label::Int(*n),
            other => Label::Text(other.to_string()),
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ProcessFile {
    #[serde(default)]
    name: Option<String>,
    types: Vec<Label>,
    laws: BTreeMap<String, LawFile>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "form", rename_all = "lowercase", deny_unknown_fields)]
enum LawFile {
    Explicit { outcomes: Vec<OutcomeFile> },
    Product { components: Vec<ComponentFile> },
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct OutcomeFile {
    prob: f64,
    children: Vec<Label>,
}

#[derive(Debug, Serialize, Deserialize)]
struct ComponentFile {
    child: Label,
    #[serde(flatten)]
    law: CountLaw,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct BuiltinFile {
    builtin: String,
    #[serde(default)]
    params: BTreeMap<String, f64>,
}

fn parse_err(e: impl std::fmt::Display) -> Error {
    Error::Parse(e.to_string())
}

/// Builds a built-in process by name.
pub fn builtin_process(name: &str, params: &BTreeMap<String, f64>) -> Result<ProcessSpec> {
    let get = |key: &str| {
        params.get(key).copied().ok_or_else(|| Error::Validation(format!("builtin {name} needs parameter {key}")))
    };
    let allowed = BUILTINS
        .iter()
        .find(|(n, _)| *n == name)
        .ok_or_else(|| Error::Validation(format!("unknown builtin {name:?}")))?
        .1;
    if let Some(k) = params.keys().find(|k| !allowed.split(", ").any(|a| a == k.as_str())) {
        return Err(Error::Validation(format!("builtin {name} has no parameter {k}")));
    }
    match name {
        "example1" => Ok(build_example1(Example1Params::new(get("p")?, get("q")?, get("r")?))?.spec),
        "example2" => Ok(build_example2()),
        "cubic" => Ok(single_type_cubic()),
        _ => single_type_binary(get("a")?),
    }
}

/// Reads a process from a JSON value.
pub fn process_from_value(value: &Value) -> Result<ProcessSpec> {
    if value.get("builtin").is_some() {
        let b: BuiltinFile = serde_json::from_value(value.clone()).map_err(parse_err)?;
        return builtin_process(&b.builtin, &b.params);
    }
    let file: ProcessFile = serde_json::from_value(value.clone()).map_err(parse_err)?;
    let types = file.types.iter().map(Label::to_type).collect::<Result<Vec<_>>>()?;
    let mut laws_by_type = BTreeMap::new();
    for (key, law) in file.laws {
        let t: TypeId = key.parse()?;
        let law = match law {
            LawFile::Explicit { outcomes } => OffspringLaw::Joint(
                outcomes
                    .into_iter()
                    .map(|o| {
                        Ok(JointOutcome::from_multiset(
                            o.prob,
                            o.children.iter().map(Label::to_type).collect::<Result<Vec<_>>>()?,
                        ))
                    })
                    .collect::<Result<Vec<_>>>()?,
            ),
            LawFile::Product { components } => OffspringLaw::Product(
                components
                    .into_iter()
                    .map(|c| Ok(CountComponent::new(c.child.to_type()?, c.law)))
                    .collect::<Result<Vec<_>>>()?,
            ),
        };
        if laws_by_type.insert(t.clone(), law).is_some() {
            return Err(Error::Parse(format!("type {t} has two laws")));
        }
    }
    let mut laws = Vec::with_capacity(types.len());
    for t in types {
        let law = laws_by_type.remove(&t).ok_or_else(|| Error::Validation(format!("type {t} has no law")))?;
        laws.push((t, law));
    }
    if let Some(t) = laws_by_type.keys().next() {
        return Err(Error::Validation(format!("law given for undeclared type {t}")));
    }
    ProcessSpec::finite(file.name.unwrap_or_else(|| "process".into()), laws)
}

pub fn process_from_str(text: &str) -> Result<ProcessSpec> {
    process_from_value(&serde_json::from_str(text)?)
}

pub fn read_process(path: &Path) -> Result<ProcessSpec> {
    process_from_str(&std::fs::read_to_string(path)?)
}

/// Writes a finite process in the explicit format.
pub fn process_to_value(spec: &ProcessSpec) -> Result<Value> {
    let n = spec.typeset().len().ok_or_else(|| Error::Validation("only finite processes can be written out".into()))?;
    let types = spec.typeset().first(n);
    let mut laws = BTreeMap::new();
    for t in &types {
        let file = match spec.law(t)? {
            OffspringLaw::Joint(outcomes) => LawFile::Explicit {
                outcomes: outcomes
                    .iter()
                    .map(|o| OutcomeFile {
                        prob: o.prob,
                        children: o
                            .children
                            .iter()
                            .flat_map(|(c, k)| std::iter::repeat_n(Label::from_type(c), *k as usize))
                            .collect(),
                    })
                    .collect(),
            },
            OffspringLaw::Product(components) => LawFile::Product {
                components: components
                    .iter()
                    .map(|c| ComponentFile { child: Label::from_type(&c.child), law: c.law.clone() })
                    .collect(),
            },
        };
        laws.insert(t.to_string(), file);
    }
    let file =
        ProcessFile { name: Some(spec.name().to_string()), types: types.iter().map(Label::from_type).collect(), laws };
    Ok(serde_json::to_value(file)?)
}

/// Parses the subset syntax: `empty`, `all`, `level:i`, `phase:j`,
/// `phase-prime:i` or `types:a;b;...`.
pub fn parse_subset(text: &str) -> Result<SubsetSpec> {
    let t = text.trim();
    let bad = || Error::Parse(format!("cannot parse subset {text:?}"));
    let index = |s: &str| s.trim().parse::<u64>().map_err(|_| bad());
    match t {
        "empty" => return Ok(SubsetSpec::empty()),
        "all" => return Ok(SubsetSpec::all()),
        _ => {}
    }
    let (kind, arg) = t.split_once(':').ok_or_else(bad)?;
    match kind.trim() {
        "level" => {
            let i = index(arg)?;
            Ok(SubsetSpec::predicate(format!("L{i}"), Some(false), move |t| t.as_pair().is_some_and(|(a, _)| a == i)))
        }
        "phase" => {
            let j = index(arg)?;
            Ok(SubsetSpec::predicate(format!("P{j}"), Some(false), move |t| t.as_pair().is_some_and(|(_, b)| b == j)))
        }
        "phase-prime" => {
            let i = index(arg)?;
            Ok(SubsetSpec::predicate(format!("L'{i}"), Some(false), move |t| {
                t.as_pair().is_some_and(|(a, b)| phase_prime_index(a, b) == i)
            }))
        }
        "types" => {
            let members =
                arg.split(';').filter(|s| !s.trim().is_empty()).map(str::parse).collect::<Result<Vec<TypeId>>>()?;
            let name = format!("{{{}}}", members.iter().map(ToString::to_string).collect::<Vec<_>>().join(","));
            Ok(SubsetSpec::finite(name, members))
        }
        _ => Err(bad()),
    }
}

/// Parses a comma-separated list of type labels, allowing commas inside
/// pairs.
pub fn parse_type_list(text: &str) -> Result<Vec<TypeId>> {
    let mut out = Vec::new();
    let mut depth = 0usize;
    let mut start = 0;
    for (k, c) in text.char_indices() {
        match c {
            '(' => depth += 1,
            ')' => depth = depth.saturating_sub(1),
            ',' if depth == 0 => {
                out.push(text[start..k].parse()?);
                start = k + 1;
            }
            _ => {}
        }
    }
    if !text[start..].trim().is_empty() {
        out.push(text[start..].parse()?);
    }
    Ok(out)
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GraphFile {
    vertices: Vec<Label>,
    #[serde(default)]
    implies: Vec<(Label, Label)>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SubsetFamilyFile {
    process: Value,
    members: Vec<MemberFile>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct MemberFile {
    #[serde(default)]
    name: Option<String>,
    subset: String,
}

/// A family read from disk: either an implication graph given directly or
/// subsets of a process whose relations are still to be solved for.
pub enum FamilyInput {
    Graph(FamilyGraph),
    Subsets { process: ProcessSpec, members: Vec<SubsetSpec> },
}

fn label_text(l: &Label) -> String {
    match l {
        Label::Int(n) => n.to_string(),
        Label::Text(s) => s.clone(),
    }
}

pub fn family_from_value(value: &Value) -> Result<FamilyInput> {
    if value.get("process").is_some() {
        let f: SubsetFamilyFile = serde_json::from_value(value.clone()).map_err(parse_err)?;
        let process = process_from_value(&f.process)?;
        let members = f
            .members
            .into_iter()
            .map(|m| {
                let s = parse_subset(&m.subset)?;
                Ok(match m.name {
                    Some(n) => s.renamed(n),
                    None => s,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        return Ok(FamilyInput::Subsets { process, members });
    }
    let g: GraphFile = serde_json::from_value(value.clone()).map_err(parse_err)?;
    let labels: Vec<String> = g.vertices.iter().map(label_text).collect();
    let lookup = |l: &Label| {
        let s = label_text(l);
        labels.iter().position(|v| *v == s).ok_or_else(|| Error::Validation(format!("unknown vertex {s:?}")))
    };
    let edges = g.implies.iter().map(|(a, b)| Ok((lookup(a)?, lookup(b)?))).collect::<Result<Vec<_>>>()?;
    Ok(FamilyInput::Graph(FamilyGraph::new(labels, &edges)?))
}

pub fn family_from_str(text: &str) -> Result<FamilyInput> {
    family_from_value(&serde_json::from_str(text)?)
}

pub fn read_family(path: &Path) -> Result<FamilyInput> {
    family_from_str(&std::fs::read_to_string(path)?)
}

/// Writes an implication graph with its closed relation.
pub fn graph_to_value(g: &FamilyGraph) -> Result<Value> {
    let file = GraphFile {
        vertices: g.labels().iter().map(|l| Label::Text(l.clone())).collect(),
        implies: g
            .closed_edges()
            .into_iter()
            .map(|(a, b)| (Label::Text(g.label(a).to_string()), Label::Text(g.label(b).to_string())))
            .collect(),
    };
    Ok(serde_json::to_value(file)?)
}
