//! JSON form of a formula:
//! `{"kind": "...", "a": int, "b": int, "children": [...], "pred": "name",
//!   "params": {"eps": float, "p": int, "w": [int]}}`.
//!
//! Until nodes may also carry `inner_params` and `prefix_params`.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::params::check_node_params;
use super::{Formula, GmsrParams, Interval, Node, NodeParams};
use crate::error::{Error, Result};
use crate::predicate::PredicateTable;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamsJson {
    pub eps: f64,
    pub p: u32,
    pub w: Vec<u32>,
}

impl From<&GmsrParams> for ParamsJson {
    fn from(p: &GmsrParams) -> Self {
        Self {
            eps: p.eps,
            p: p.p,
            w: p.w.clone(),
        }
    }
}

impl ParamsJson {
    fn to_params(&self) -> Result<GmsrParams> {
        GmsrParams::new(self.eps, self.p, self.w.clone())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FormulaJson {
    pub kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b: Option<usize>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub children: Vec<FormulaJson>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pred: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub params: Option<ParamsJson>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub inner_params: Option<ParamsJson>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prefix_params: Option<ParamsJson>,
}

fn interval(j: &FormulaJson) -> Result<Interval> {
    match (j.a, j.b) {
        (Some(a), Some(b)) => Interval::new(a, b),
        _ => Err(Error::Json(format!("`{}` needs integer fields `a` and `b`", j.kind))),
    }
}

fn take<const N: usize>(j: &FormulaJson, table: &PredicateTable) -> Result<[Formula; N]> {
    let kids = j
        .children
        .iter()
        .map(|c| build(c, table))
        .collect::<Result<Vec<_>>>()?;
    let got = kids.len();
    kids.try_into().map_err(|_| Error::Arity {
        kind: "json node",
        expected: N.to_string(),
        got,
    })
}

fn build(j: &FormulaJson, table: &PredicateTable) -> Result<Formula> {
    let kids = |j: &FormulaJson| -> Result<Vec<Formula>> {
        j.children.iter().map(|c| build(c, table)).collect()
    };
    let f = match j.kind.as_str() {
        "pred" | "predicate" => {
            let name = j
                .pred
                .as_deref()
                .ok_or_else(|| Error::Json("`pred` node needs a `pred` name".into()))?;
            Formula::predicate(table.id(name).ok_or_else(|| Error::UnknownPredicate(name.into()))?)
        }
        "not" => {
            let [c] = take::<1>(j, table)?;
            Formula::not(c)
        }
        "and" => Formula::and(kids(j)?)?,
        "or" => Formula::or(kids(j)?)?,
        "implies" => {
            let [l, r] = take::<2>(j, table)?;
            Formula::implies(l, r)
        }
        "eventually" => {
            let [c] = take::<1>(j, table)?;
            Formula::eventually(interval(j)?, c)
        }
        "always" => {
            let [c] = take::<1>(j, table)?;
            Formula::always(interval(j)?, c)
        }
        "until" => {
            let [l, r] = take::<2>(j, table)?;
            Formula::until(interval(j)?, l, r)
        }
        other => return Err(Error::Json(format!("unknown kind `{other}`"))),
    };
    Ok(f)
}

/// Collects explicit parameters in pre-order, matching the node ids of the
/// built formula.
fn collect_params(j: &FormulaJson, next: &mut usize, out: &mut BTreeMap<usize, FormulaJson>) {
    let id = *next;
    *next += 1;
    if j.params.is_some() || j.inner_params.is_some() || j.prefix_params.is_some() {
        out.insert(id, j.clone());
    }
    for c in &j.children {
        collect_params(c, next, out);
    }
}

/// Parses the JSON form. Nodes with explicit parameters keep them; the rest
/// stay unparameterized until [`super::assign_params`] runs. For until nodes,
/// missing `inner_params`/`prefix_params` default to unit weights with the
/// outer `eps` and `p`.
pub fn formula_from_json(text: &str, table: &PredicateTable) -> Result<Formula> {
    let j: FormulaJson = serde_json::from_str(text)?;
    let mut f = build(&j, table)?;
    let mut explicit = BTreeMap::new();
    collect_params(&j, &mut 0, &mut explicit);
    let mut err = None;
    f.nodes_mut(&mut |node| {
        let Some(src) = explicit.get(&node.id()) else { return };
        let res = (|| {
            let outer = src
                .params
                .as_ref()
                .ok_or_else(|| Error::Json("`inner_params`/`prefix_params` need `params`".into()))?
                .to_params()?;
            let params = match node.node() {
                Node::Until(i, ..) => {
                    let fill = |p: &Option<ParamsJson>, len: usize| match p {
                        Some(p) => p.to_params(),
                        None => GmsrParams::uniform(outer.eps, outer.p, len),
                    };
                    NodeParams::Until {
                        inner: fill(&src.inner_params, 2)?,
                        prefix: fill(&src.prefix_params, i.len())?,
                        outer,
                    }
                }
                _ => NodeParams::Single(outer),
            };
            check_node_params(node, &params)?;
            Ok(params)
        })();
        match res {
            Ok(p) => node.set_params(Some(p)),
            Err(e) => err = Some(e),
        }
    });
    match err {
        Some(e) => Err(e),
        None => Ok(f),
    }
}

fn to_json_value(f: &Formula, table: &PredicateTable) -> FormulaJson {
    let mut j = FormulaJson {
        kind: String::new(),
        a: None,
        b: None,
        children: f.children().iter().map(|c| to_json_value(c, table)).collect(),
        pred: None,
        params: None,
        inner_params: None,
        prefix_params: None,
    };
    j.kind = match f.node() {
        Node::Predicate(p) => {
            j.pred = Some(table.name_of(*p).map_or_else(|| format!("p{p}"), str::to_string));
            "pred"
        }
        Node::Not(_) => "not",
        Node::And(_) => "and",
        Node::Or(_) => "or",
        Node::Implies(..) => "implies",
        Node::Eventually(i, _) | Node::Always(i, _) | Node::Until(i, ..) => {
            j.a = Some(i.a);
            j.b = Some(i.b);
            match f.node() {
                Node::Eventually(..) => "eventually",
                Node::Always(..) => "always",
                _ => "until",
            }
        }
    }
    .to_string();
    match f.params() {
        Some(NodeParams::Single(p)) => j.params = Some(p.into()),
        Some(NodeParams::Until { outer, inner, prefix }) => {
            j.params = Some(outer.into());
            j.inner_params = Some(inner.into());
            j.prefix_params = Some(prefix.into());
        }
        None => {}
    }
    j
}

pub fn formula_to_json(f: &Formula, table: &PredicateTable) -> String {
    serde_json::to_string(&to_json_value(f, table)).expect("formula json serialization")
}
