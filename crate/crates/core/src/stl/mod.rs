//! STL formulas over discrete-time signals.
//!
//! A [`Formula`] is an immutable tree. Node ids are the pre-order index of
//! each node and are recomputed whenever a tree is assembled, so ids are
//! always unique and stable for structurally identical trees.

mod json;
mod params;
mod parse;

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use json::{formula_from_json, formula_to_json, FormulaJson, ParamsJson};
pub use params::{assign_params, GmsrParams, KeyParams, NodeParams, ParamTemplate};
pub use parse::parse_formula;

/// Closed interval of integer step offsets `[a, b]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Interval {
    pub a: usize,
    pub b: usize,
}

impl Interval {
    pub fn new(a: usize, b: usize) -> Result<Self> {
        if a > b {
            return Err(Error::InvalidInterval { a, b });
        }
        Ok(Self { a, b })
    }

    /// Number of steps covered.
    pub fn len(&self) -> usize {
        self.b - self.a + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

impl fmt::Display for Interval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{},{}]", self.a, self.b)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Node {
    Predicate(usize),
    Not(Box<Formula>),
    And(Vec<Formula>),
    Or(Vec<Formula>),
    Implies(Box<Formula>, Box<Formula>),
    Eventually(Interval, Box<Formula>),
    Always(Interval, Box<Formula>),
    Until(Interval, Box<Formula>, Box<Formula>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Formula {
    id: usize,
    node: Node,
    params: Option<NodeParams>,
}

/// Operators definable from the core syntax (negation, conjunction, until).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DerivedKind {
    Or,
    Implies,
    Eventually,
    Always,
}

impl Formula {
    fn leaf(node: Node) -> Self {
        let mut f = Self {
            id: 0,
            node,
            params: None,
        };
        f.renumber();
        f
    }

    pub fn predicate(pred: usize) -> Self {
        Self::leaf(Node::Predicate(pred))
    }

    #[allow(clippy::should_implement_trait)]
    pub fn not(child: Formula) -> Self {
        Self::leaf(Node::Not(Box::new(child)))
    }

    pub fn and(children: Vec<Formula>) -> Result<Self> {
        if children.len() < 2 {
            return Err(Error::Arity {
                kind: "and",
                expected: "at least 2".into(),
                got: children.len(),
            });
        }
        Ok(Self::leaf(Node::And(children)))
    }

    pub fn or(children: Vec<Formula>) -> Result<Self> {
        if children.len() < 2 {
            return Err(Error::Arity {
                kind: "or",
                expected: "at least 2".into(),
                got: children.len(),
            });
        }
        Ok(Self::leaf(Node::Or(children)))
    }

    pub fn implies(lhs: Formula, rhs: Formula) -> Self {
        Self::leaf(Node::Implies(Box::new(lhs), Box::new(rhs)))
    }

    pub fn eventually(interval: Interval, child: Formula) -> Self {
        Self::leaf(Node::Eventually(interval, Box::new(child)))
    }

    pub fn always(interval: Interval, child: Formula) -> Self {
        Self::leaf(Node::Always(interval, Box::new(child)))
    }

    pub fn until(interval: Interval, lhs: Formula, rhs: Formula) -> Self {
        Self::leaf(Node::Until(interval, Box::new(lhs), Box::new(rhs)))
    }

    pub fn id(&self) -> usize {
        self.id
    }

    pub fn node(&self) -> &Node {
        &self.node
    }

    pub fn params(&self) -> Option<&NodeParams> {
        self.params.as_ref()
    }

    pub(crate) fn set_params(&mut self, params: Option<NodeParams>) {
        self.params = params;
    }

    pub fn children(&self) -> Vec<&Formula> {
        match &self.node {
            Node::Predicate(_) => vec![],
            Node::Not(c) | Node::Eventually(_, c) | Node::Always(_, c) => vec![c],
            Node::And(cs) | Node::Or(cs) => cs.iter().collect(),
            Node::Implies(l, r) | Node::Until(_, l, r) => vec![l, r],
        }
    }

    fn children_mut(&mut self) -> Vec<&mut Formula> {
        match &mut self.node {
            Node::Predicate(_) => vec![],
            Node::Not(c) | Node::Eventually(_, c) | Node::Always(_, c) => vec![c],
            Node::And(cs) | Node::Or(cs) => cs.iter_mut().collect(),
            Node::Implies(l, r) | Node::Until(_, l, r) => vec![l, r],
        }
    }

    fn renumber(&mut self) {
        fn go(f: &mut Formula, next: &mut usize) {
            f.id = *next;
            *next += 1;
            for c in f.children_mut() {
                go(c, next);
            }
        }
        let mut next = 0;
        go(self, &mut next);
    }

    /// Pre-order traversal.
    pub fn nodes(&self) -> Vec<&Formula> {
        let mut out = Vec::new();
        let mut stack = vec![self];
        while let Some(f) = stack.pop() {
            out.push(f);
            for c in f.children().into_iter().rev() {
                stack.push(c);
            }
        }
        out
    }

    pub(crate) fn nodes_mut(&mut self, visit: &mut impl FnMut(&mut Formula)) {
        visit(self);
        for c in self.children_mut() {
            c.nodes_mut(visit);
        }
    }

    pub fn node_count(&self) -> usize {
        self.nodes().len()
    }

    pub fn depth(&self) -> usize {
        1 + self.children().iter().map(|c| c.depth()).max().unwrap_or(0)
    }

    /// Largest step offset, relative to the evaluation step, that evaluation
    /// reads.
    pub fn horizon(&self) -> usize {
        match &self.node {
            Node::Predicate(_) => 0,
            Node::Not(c) => c.horizon(),
            Node::And(cs) | Node::Or(cs) => cs.iter().map(|c| c.horizon()).max().unwrap_or(0),
            Node::Implies(l, r) => l.horizon().max(r.horizon()),
            Node::Eventually(i, c) | Node::Always(i, c) => i.b + c.horizon(),
            Node::Until(i, l, r) => i.b + l.horizon().max(r.horizon()),
        }
    }

    /// Smallest step offset that evaluation reads.
    pub fn min_offset(&self) -> usize {
        match &self.node {
            Node::Predicate(_) => 0,
            Node::Not(c) => c.min_offset(),
            Node::And(cs) | Node::Or(cs) => cs.iter().map(|c| c.min_offset()).min().unwrap_or(0),
            Node::Implies(l, r) => l.min_offset().min(r.min_offset()),
            Node::Eventually(i, c) | Node::Always(i, c) => i.a + c.min_offset(),
            Node::Until(i, l, r) => i.a + l.min_offset().min(r.min_offset()),
        }
    }

    /// Ids of all predicates referenced by the formula.
    pub fn predicates(&self) -> Vec<usize> {
        let mut ids: Vec<usize> = self
            .nodes()
            .into_iter()
            .filter_map(|f| match f.node {
                Node::Predicate(p) => Some(p),
                _ => None,
            })
            .collect();
        ids.sort_unstable();
        ids.dedup();
        ids
    }

    pub fn find(&self, id: usize) -> Option<&Formula> {
        self.nodes().into_iter().find(|f| f.id == id)
    }

    /// Text form parsable by [`parse_formula`], with predicate names given by
    /// `name`.
    pub fn to_text_with(&self, name: &dyn Fn(usize) -> String) -> String {
        let wrap = |f: &Formula| match f.node {
            Node::Predicate(p) => name(p),
            _ => format!("({})", f.to_text_with(name)),
        };
        match &self.node {
            Node::Predicate(p) => name(*p),
            Node::Not(c) => format!("!{}", wrap(c)),
            Node::And(cs) => cs.iter().map(wrap).collect::<Vec<_>>().join(" & "),
            Node::Or(cs) => cs.iter().map(wrap).collect::<Vec<_>>().join(" | "),
            Node::Implies(l, r) => format!("{} -> {}", wrap(l), wrap(r)),
            Node::Eventually(i, c) => format!("F{i} {}", wrap(c)),
            Node::Always(i, c) => format!("G{i} {}", wrap(c)),
            Node::Until(i, l, r) => format!("{} U{i} {}", wrap(l), wrap(r)),
        }
    }
}

/// Renders predicates as `p<id>`.
impl fmt::Display for Formula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_text_with(&|p| format!("p{p}")))
    }
}

/// Builds the native node for a derived operator.
///
/// The equivalences with the core syntax are
/// `or(a, b) = !(!a & !b)`, `implies(a, b) = !a | b`,
/// `eventually_I(a) = true U_I a` and `always_I(a) = !eventually_I(!a)`.
pub fn make_derived(
    kind: DerivedKind,
    operands: Vec<Formula>,
    interval: Option<Interval>,
) -> Result<Formula> {
    let arity_err = |expected: &str, got| Error::Arity {
        kind: match kind {
            DerivedKind::Or => "or",
            DerivedKind::Implies => "implies",
            DerivedKind::Eventually => "eventually",
            DerivedKind::Always => "always",
        },
        expected: expected.into(),
        got,
    };
    let n = operands.len();
    match kind {
        DerivedKind::Or => Formula::or(operands),
        DerivedKind::Implies => {
            let [l, r]: [Formula; 2] = operands.try_into().map_err(|_| arity_err("2", n))?;
            Ok(Formula::implies(l, r))
        }
        DerivedKind::Eventually | DerivedKind::Always => {
            let [c]: [Formula; 1] = operands.try_into().map_err(|_| arity_err("1", n))?;
            let i = interval.ok_or_else(|| arity_err("an interval and 1", n))?;
            Ok(if kind == DerivedKind::Eventually {
                Formula::eventually(i, c)
            } else {
                Formula::always(i, c)
            })
        }
    }
}
