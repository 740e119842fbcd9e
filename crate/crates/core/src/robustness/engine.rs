//! Recursive evaluation over `(node, step)` pairs, optionally recording the
//! local partial derivatives needed for reverse accumulation.

use std::collections::HashMap;

use super::KeyFunctions;
use crate::error::{Error, Result};
use crate::predicate::PredicateTable;
use crate::signal::Signal;
use crate::stl::{Formula, KeyParams, Node, NodeParams};

/// Which key function of a node a call belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KeyRole {
    Single,
    UntilOuter,
    UntilInner,
    UntilPrefix,
}

/// One key-function invocation, recorded for arity checks.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct KeyCall {
    pub node: usize,
    pub step: usize,
    pub role: KeyRole,
    pub input_len: usize,
    /// Length of the weight vector used, `None` for semantics without weights.
    pub weight_len: Option<usize>,
}

#[derive(Debug, Clone)]
pub(crate) struct Entry {
    pub value: f64,
    /// `(input entry, d value / d input)`; empty unless recording.
    pub inputs: Vec<(usize, f64)>,
    /// `(predicate id, step)` for leaves.
    pub leaf: Option<(usize, usize)>,
}

/// Forward record of one evaluation.
///
/// Entries are stored children-first, so walking them backwards visits every
/// entry after all of its consumers.
#[derive(Debug, Clone, Default)]
pub struct GradTape {
    pub(crate) entries: Vec<Entry>,
    pub(crate) memo: HashMap<(usize, usize), usize>,
    pub(crate) calls: Vec<KeyCall>,
    pub(crate) root: usize,
}

impl GradTape {
    pub fn value(&self) -> f64 {
        self.entries[self.root].value
    }

    /// Value of formula node `node` at `step`, if it was visited.
    pub fn node_value(&self, node: usize, step: usize) -> Option<f64> {
        self.memo.get(&(node, step)).map(|&i| self.entries[i].value)
    }

    /// Every `(node, step)` pair visited, with its value.
    pub fn node_values(&self) -> impl Iterator<Item = ((usize, usize), f64)> + '_ {
        self.memo.iter().map(|(&k, &i)| (k, self.entries[i].value))
    }

    pub fn key_calls(&self) -> &[KeyCall] {
        &self.calls
    }

    /// Number of recorded entries (formula nodes, until sub-terms and leaves).
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Local weights `d value / d input` of the node at `(node, step)`.
    pub fn local_weights(&self, node: usize, step: usize) -> Option<Vec<f64>> {
        self.memo
            .get(&(node, step))
            .map(|&i| self.entries[i].inputs.iter().map(|&(_, w)| w).collect())
    }

    /// Reverse accumulation: gradient of the root value with respect to every
    /// signal entry, row-major `steps x dim`.
    pub fn backward(&self, predicates: &PredicateTable, signal: &Signal) -> Result<Vec<f64>> {
        let dim = signal.dim();
        let mut grad = vec![0.0; signal.steps() * dim];
        let mut adj = vec![0.0; self.entries.len()];
        adj[self.root] = 1.0;
        let mut gf = vec![0.0; dim];
        for i in (0..=self.root).rev() {
            let a = adj[i];
            if a == 0.0 {
                continue;
            }
            let e = &self.entries[i];
            for &(j, w) in &e.inputs {
                adj[j] += a * w;
            }
            if let Some((pred, step)) = e.leaf {
                predicates.get(pred)?.gradient(signal.at(step), &mut gf);
                let row = &mut grad[(step - 1) * dim..step * dim];
                for (r, g) in row.iter_mut().zip(&gf) {
                    *r += a * g;
                }
            }
        }
        Ok(grad)
    }
}

pub(crate) struct Evaluator<'a> {
    pub keys: &'a dyn KeyFunctions,
    pub predicates: &'a PredicateTable,
    pub signal: &'a Signal,
    pub record: bool,
    pub tape: GradTape,
}

fn single(p: Option<&NodeParams>) -> Option<KeyParams<'_>> {
    match p {
        Some(NodeParams::Single(g)) => Some(g.view()),
        _ => None,
    }
}

enum Agg {
    Conj,
    Disj,
}

impl<'a> Evaluator<'a> {
    pub fn new(
        keys: &'a dyn KeyFunctions,
        predicates: &'a PredicateTable,
        signal: &'a Signal,
        record: bool,
    ) -> Self {
        Self {
            keys,
            predicates,
            signal,
            record,
            tape: GradTape::default(),
        }
    }

    pub fn run(mut self, f: &Formula, k: usize) -> Result<GradTape> {
        self.tape.root = self.visit(f, k)?;
        Ok(self.tape)
    }

    fn push(&mut self, value: f64, inputs: Vec<(usize, f64)>, leaf: Option<(usize, usize)>) -> usize {
        self.tape.entries.push(Entry {
            value,
            inputs: if self.record { inputs } else { Vec::new() },
            leaf,
        });
        self.tape.entries.len() - 1
    }

    fn params<'p>(&self, f: &'p Formula) -> Result<Option<&'p NodeParams>> {
        match f.params() {
            Some(p) => Ok(Some(p)),
            None if self.keys.needs_params() => Err(Error::MissingParams { node: f.id() }),
            None => Ok(None),
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn key(
        &mut self,
        agg: Agg,
        node: usize,
        step: usize,
        role: KeyRole,
        inputs: &[usize],
        signs: Option<&[f64]>,
        params: Option<KeyParams<'_>>,
    ) -> Result<usize> {
        let y: Vec<f64> = inputs
            .iter()
            .enumerate()
            .map(|(i, &e)| self.tape.entries[e].value * signs.map_or(1.0, |s| s[i]))
            .collect();
        if let Some(p) = params {
            if p.w.len() != y.len() {
                return Err(Error::WeightLength {
                    node,
                    expected: y.len(),
                    got: p.w.len(),
                });
            }
        }
        self.tape.calls.push(KeyCall {
            node,
            step,
            role,
            input_len: y.len(),
            weight_len: params.map(|p| p.w.len()),
        });
        let mut g = vec![0.0; y.len()];
        let grad = self.record.then_some(g.as_mut_slice());
        let value = match agg {
            Agg::Conj => self.keys.conj(&y, params, grad),
            Agg::Disj => self.keys.disj(&y, params, grad),
        };
        let links = inputs
            .iter()
            .enumerate()
            .map(|(i, &e)| (e, g[i] * signs.map_or(1.0, |s| s[i])))
            .collect();
        Ok(self.push(value, links, None))
    }

    fn visit(&mut self, f: &Formula, k: usize) -> Result<usize> {
        if let Some(&i) = self.tape.memo.get(&(f.id(), k)) {
            return Ok(i);
        }
        let idx = match f.node() {
            Node::Predicate(pred) => {
                let horizon = self.signal.steps();
                if k < 1 || k > horizon {
                    return Err(Error::Horizon {
                        node: f.id(),
                        step: k,
                        horizon,
                    });
                }
                let value = self.predicates.get(*pred)?.value(self.signal.at(k));
                self.push(value, Vec::new(), Some((*pred, k)))
            }
            Node::Not(c) => {
                let ci = self.visit(c, k)?;
                let v = -self.tape.entries[ci].value;
                self.push(v, vec![(ci, -1.0)], None)
            }
            Node::And(cs) | Node::Or(cs) => {
                let params = self.params(f)?;
                let ins = cs.iter().map(|c| self.visit(c, k)).collect::<Result<Vec<_>>>()?;
                let agg = if matches!(f.node(), Node::And(_)) { Agg::Conj } else { Agg::Disj };
                self.key(agg, f.id(), k, KeyRole::Single, &ins, None, single(params))?
            }
            Node::Implies(l, r) => {
                let params = self.params(f)?;
                let ins = vec![self.visit(l, k)?, self.visit(r, k)?];
                self.key(Agg::Disj, f.id(), k, KeyRole::Single, &ins, Some(&[-1.0, 1.0]), single(params))?
            }
            Node::Eventually(iv, c) | Node::Always(iv, c) => {
                let params = self.params(f)?;
                let ins = (iv.a..=iv.b)
                    .map(|t| self.visit(c, k + t))
                    .collect::<Result<Vec<_>>>()?;
                let agg = if matches!(f.node(), Node::Always(..)) { Agg::Conj } else { Agg::Disj };
                self.key(agg, f.id(), k, KeyRole::Single, &ins, None, single(params))?
            }
            Node::Until(iv, l, r) => {
                let params = self.params(f)?;
                let (outer, inner, prefix) = match params {
                    Some(NodeParams::Until { outer, inner, prefix }) => {
                        (Some(outer), Some(inner), Some(prefix))
                    }
                    _ => (None, None, None),
                };
                let lhs = (iv.a..=iv.b)
                    .map(|t| self.visit(l, k + t))
                    .collect::<Result<Vec<_>>>()?;
                let mut terms = Vec::with_capacity(iv.len());
                for (j, tau) in (iv.a..=iv.b).enumerate() {
                    let prefix_idx = self.key(
                        Agg::Conj,
                        f.id(),
                        k,
                        KeyRole::UntilPrefix,
                        &lhs[..=j],
                        None,
                        prefix.map(|p| p.prefix(j + 1)),
                    )?;
                    let rhs = self.visit(r, k + tau)?;
                    terms.push(self.key(
                        Agg::Conj,
                        f.id(),
                        k,
                        KeyRole::UntilInner,
                        &[prefix_idx, rhs],
                        None,
                        inner.map(|p| p.view()),
                    )?);
                }
                self.key(Agg::Disj, f.id(), k, KeyRole::UntilOuter, &terms, None, outer.map(|p| p.view()))?
            }
        };
        self.tape.memo.insert((f.id(), k), idx);
        Ok(idx)
    }
}
