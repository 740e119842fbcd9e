use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{Formula, Node};
use crate::error::{Error, Result};

/// Smoothing parameters `(eps, p, w)` of one generalized-mean key function.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GmsrParams {
    pub eps: f64,
    pub p: u32,
    pub w: Vec<u32>,
}

impl GmsrParams {
    pub fn new(eps: f64, p: u32, w: Vec<u32>) -> Result<Self> {
        let params = Self { eps, p, w };
        params.validate()?;
        Ok(params)
    }

    pub fn uniform(eps: f64, p: u32, len: usize) -> Result<Self> {
        Self::new(eps, p, vec![1; len])
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eps > 0.0 && self.eps.is_finite()) {
            return Err(Error::InvalidParams(format!("eps must be positive, got {}", self.eps)));
        }
        if self.p < 1 {
            return Err(Error::InvalidParams("p must be at least 1".into()));
        }
        if self.w.is_empty() || self.w.contains(&0) {
            return Err(Error::InvalidParams("weights must be non-empty and positive".into()));
        }
        Ok(())
    }

    pub fn view(&self) -> KeyParams<'_> {
        KeyParams {
            eps: self.eps,
            p: self.p,
            w: &self.w,
        }
    }

    /// View on the first `len` weights.
    pub fn prefix(&self, len: usize) -> KeyParams<'_> {
        KeyParams {
            eps: self.eps,
            p: self.p,
            w: &self.w[..len],
        }
    }
}

/// Borrowed parameters handed to a key function.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KeyParams<'a> {
    pub eps: f64,
    pub p: u32,
    pub w: &'a [u32],
}

impl KeyParams<'_> {
    /// `1^T w`
    pub fn total_weight(&self) -> f64 {
        self.w.iter().map(|&w| w as f64).sum()
    }
}

/// Parameters attached to one operator node.
///
/// Until owns three key functions: the outer disjunction over the interval,
/// the inner two-way conjunctions, and the always-prefixes `G[a, tau]` of its
/// left operand. The prefix ending at `tau` uses the first `tau - a + 1`
/// entries of `prefix.w`.
#[derive(Debug, Clone, PartialEq)]
pub enum NodeParams {
    Single(GmsrParams),
    Until {
        outer: GmsrParams,
        inner: GmsrParams,
        prefix: GmsrParams,
    },
}

/// Default `(eps, p, w_i)` applied to every operator without an override.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParamTemplate {
    pub eps: f64,
    pub p: u32,
    pub w: u32,
}

impl Default for ParamTemplate {
    fn default() -> Self {
        Self {
            eps: 1e-8,
            p: 1,
            w: 1,
        }
    }
}

impl ParamTemplate {
    /// Parameters for a key function with `len` inputs.
    pub fn make(&self, len: usize) -> Result<GmsrParams> {
        GmsrParams::new(self.eps, self.p, vec![self.w; len])
    }
}

/// Key-function input lengths of a node, `None` for nodes without a key
/// function. Until reports `(outer, inner, prefix)`.
pub(crate) fn key_arity(f: &Formula) -> Option<(usize, Option<(usize, usize)>)> {
    match f.node() {
        Node::Predicate(_) | Node::Not(_) => None,
        Node::And(cs) | Node::Or(cs) => Some((cs.len(), None)),
        Node::Implies(..) => Some((2, None)),
        Node::Eventually(i, _) | Node::Always(i, _) => Some((i.len(), None)),
        Node::Until(i, ..) => Some((i.len(), Some((2, i.len())))),
    }
}

fn check_len(node: usize, p: &GmsrParams, expected: usize) -> Result<()> {
    p.validate()?;
    if p.w.len() != expected {
        return Err(Error::WeightLength {
            node,
            expected,
            got: p.w.len(),
        });
    }
    Ok(())
}

/// Checks that `params` fit the operator at `f`.
pub(crate) fn check_node_params(f: &Formula, params: &NodeParams) -> Result<()> {
    let node = f.id();
    match (key_arity(f), params) {
        (None, _) => Err(Error::InvalidParams(format!(
            "node {node} has no key function and takes no parameters"
        ))),
        (Some((n, None)), NodeParams::Single(p)) => check_len(node, p, n),
        (Some((n, Some((ni, np)))), NodeParams::Until { outer, inner, prefix }) => {
            check_len(node, outer, n)?;
            check_len(node, inner, ni)?;
            check_len(node, prefix, np)
        }
        (Some((_, Some(_))), NodeParams::Single(_)) => Err(Error::InvalidParams(format!(
            "node {node} is an until and needs outer/inner/prefix parameters"
        ))),
        (Some((_, None)), NodeParams::Until { .. }) => Err(Error::InvalidParams(format!(
            "node {node} is not an until"
        ))),
    }
}

/// Returns a copy of `formula` with parameters on every operator node.
///
/// Nodes listed in `overrides` (by node id) take the given parameters; all
/// other operator nodes get `defaults` sized to their input length.
/// Negation and predicates carry no parameters.
pub fn assign_params(
    formula: &Formula,
    defaults: &ParamTemplate,
    overrides: &BTreeMap<usize, NodeParams>,
) -> Result<Formula> {
    let mut out = formula.clone();
    let mut err = None;
    out.nodes_mut(&mut |f| {
        if err.is_some() {
            return;
        }
        let params = match (overrides.get(&f.id()), key_arity(f)) {
            (Some(p), _) => check_node_params(f, p).map(|_| Some(p.clone())),
            (None, None) => Ok(None),
            (None, Some((n, None))) => defaults.make(n).map(|p| Some(NodeParams::Single(p))),
            (None, Some((n, Some((ni, np))))) => (|| {
                Ok(Some(NodeParams::Until {
                    outer: defaults.make(n)?,
                    inner: defaults.make(ni)?,
                    prefix: defaults.make(np)?,
                }))
            })(),
        };
        match params {
            Ok(p) => f.set_params(p),
            Err(e) => err = Some(e),
        }
    });
    if let Some(id) = overrides.keys().find(|&&id| formula.find(id).is_none()) {
        return Err(Error::InvalidParams(format!("override for unknown node {id}")));
    }
    match err {
        Some(e) => Err(e),
        None => Ok(out),
    }
}
