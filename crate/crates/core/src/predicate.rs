//! Predicate functions `f: R^n -> R` with user-supplied gradients.

use std::collections::HashMap;
use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};

type ValueFn = dyn Fn(&[f64]) -> f64 + Send + Sync;
type GradFn = dyn Fn(&[f64], &mut [f64]) + Send + Sync;

/// A predicate `f(x) >= 0` together with `grad f`.
#[derive(Clone)]
pub struct PredicateDef {
    name: String,
    value: Arc<ValueFn>,
    grad: Arc<GradFn>,
}

impl fmt::Debug for PredicateDef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PredicateDef").field("name", &self.name).finish()
    }
}

impl PredicateDef {
    pub fn new<F, G>(name: impl Into<String>, value: F, grad: G) -> Self
    where
        F: Fn(&[f64]) -> f64 + Send + Sync + 'static,
        G: Fn(&[f64], &mut [f64]) + Send + Sync + 'static,
    {
        Self {
            name: name.into(),
            value: Arc::new(value),
            grad: Arc::new(grad),
        }
    }

    /// `f(x) = c . x + d`
    pub fn affine(name: impl Into<String>, coeffs: Vec<f64>, offset: f64) -> Self {
        let c = coeffs.clone();
        Self::new(
            name,
            move |x| c.iter().zip(x).map(|(c, x)| c * x).sum::<f64>() + offset,
            move |_, g| g.copy_from_slice(&coeffs),
        )
    }

    /// `f(x) = x[index]`
    pub fn component(name: impl Into<String>, index: usize) -> Self {
        Self::new(
            name,
            move |x| x[index],
            move |_, g| {
                g.fill(0.0);
                g[index] = 1.0;
            },
        )
    }

    /// `f(x) = radius - ||x[range] - center||`. The gradient is taken as zero
    /// at the center, where the norm is not differentiable.
    pub fn ball(name: impl Into<String>, offset: usize, center: Vec<f64>, radius: f64) -> Self {
        let c = center.clone();
        Self::new(
            name,
            move |x| {
                let d2: f64 = c
                    .iter()
                    .enumerate()
                    .map(|(i, c)| (x[offset + i] - c).powi(2))
                    .sum();
                radius - d2.sqrt()
            },
            move |x, g| {
                g.fill(0.0);
                let d2: f64 = center
                    .iter()
                    .enumerate()
                    .map(|(i, c)| (x[offset + i] - c).powi(2))
                    .sum();
                let d = d2.sqrt();
                if d > 0.0 {
                    for (i, c) in center.iter().enumerate() {
                        g[offset + i] = -(x[offset + i] - c) / d;
                    }
                }
            },
        )
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        (self.value)(x)
    }

    pub fn gradient(&self, x: &[f64], out: &mut [f64]) {
        (self.grad)(x, out)
    }
}

/// Registry of predicates; a predicate's id is its registration index.
#[derive(Debug, Clone, Default)]
pub struct PredicateTable {
    defs: Vec<PredicateDef>,
    by_name: HashMap<String, usize>,
}

impl PredicateTable {
    pub fn new() -> Self {
        Self::default()
    }

    /// Registers `def` and returns its id. Re-registering a name replaces the
    /// lookup entry but keeps the old id valid.
    pub fn insert(&mut self, def: PredicateDef) -> usize {
        let id = self.defs.len();
        self.by_name.insert(def.name.clone(), id);
        self.defs.push(def);
        id
    }

    /// One component predicate `p{i}(x) = x[i]` per state dimension.
    pub fn components(dim: usize) -> Self {
        let mut t = Self::new();
        for i in 0..dim {
            t.insert(PredicateDef::component(format!("p{i}"), i));
        }
        t
    }

    pub fn get(&self, id: usize) -> Result<&PredicateDef> {
        self.defs.get(id).ok_or(Error::MissingPredicate(id))
    }

    pub fn id(&self, name: &str) -> Option<usize> {
        self.by_name.get(name).copied()
    }

    pub fn name_of(&self, id: usize) -> Option<&str> {
        self.defs.get(id).map(|d| d.name.as_str())
    }

    pub fn names(&self) -> HashMap<String, usize> {
        self.by_name.clone()
    }

    pub fn len(&self) -> usize {
        self.defs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.defs.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn central_fd(def: &PredicateDef, x: &[f64], h: f64) -> Vec<f64> {
        (0..x.len())
            .map(|i| {
                let mut xp = x.to_vec();
                let mut xm = x.to_vec();
                xp[i] += h;
                xm[i] -= h;
                (def.value(&xp) - def.value(&xm)) / (2.0 * h)
            })
            .collect()
    }

    #[test]
    fn builtin_gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let defs = [
            PredicateDef::affine("a", vec![0.3, -1.2, 2.0], 0.5),
            PredicateDef::component("c", 1),
            PredicateDef::ball("b", 0, vec![1.0, 2.0, -0.5], 0.7),
        ];
        for def in &defs {
            for _ in 0..100 {
                let x: Vec<f64> = (0..3).map(|_| rng.gen_range(-3.0..3.0)).collect();
                let mut g = vec![0.0; 3];
                def.gradient(&x, &mut g);
                let fd = central_fd(def, &x, 1e-6);
                for (a, b) in g.iter().zip(&fd) {
                    assert!((a - b).abs() <= 1e-5 * a.abs().max(1.0), "{}: {a} vs {b}", def.name());
                }
            }
        }
    }

    #[test]
    fn table_lookup() {
        let t = PredicateTable::components(3);
        assert_eq!(t.id("p2"), Some(2));
        assert_eq!(t.id("q"), None);
        assert_eq!(t.get(1).unwrap().value(&[4.0, 5.0, 6.0]), 5.0);
        assert!(matches!(t.get(9), Err(Error::MissingPredicate(9))));
    }
}
