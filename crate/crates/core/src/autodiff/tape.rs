//! Reverse-mode automatic differentiation over scalar computation graphs.
//!
//! Every operation on a [`Var`] appends a node holding the indices of its
//! inputs and the local partial derivatives with respect to them. A reverse
//! sweep from the root accumulates adjoints into every recorded node.

use std::cell::RefCell;
use std::ops::{Add, Div, Mul, Neg, Sub};

use super::scalar::Real;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug)]
struct Node {
    parents: [(usize, f64); 2],
    arity: u8,
}

#[derive(Debug, Default)]
pub struct Tape {
    nodes: RefCell<Vec<Node>>,
}

/// A scalar recorded on a [`Tape`].
#[derive(Clone, Copy)]
pub struct Var<'t> {
    tape: &'t Tape,
    index: usize,
    value: f64,
}

impl std::fmt::Debug for Var<'_> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Var#{}({})", self.index, self.value)
    }
}

/// Adjoints for every node of a tape, indexed by variable.
#[derive(Debug, Clone)]
pub struct Gradients {
    adjoints: Vec<f64>,
}

impl Gradients {
    pub fn wrt(&self, var: &Var<'_>) -> f64 {
        self.adjoints[var.index]
    }

    pub fn wrt_all(&self, vars: &[Var<'_>]) -> Vec<f64> {
        vars.iter().map(|v| self.wrt(v)).collect()
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Drops all recorded nodes. Requires that no `Var` is still borrowed.
    pub fn clear(&mut self) {
        self.nodes.get_mut().clear();
    }

    fn push(&self, value: f64, parents: [(usize, f64); 2], arity: u8) -> Var<'_> {
        let mut nodes = self.nodes.borrow_mut();
        let index = nodes.len();
        nodes.push(Node { parents, arity });
        Var { tape: self, index, value }
    }

    /// Records an independent variable.
    pub fn var(&self, value: f64) -> Var<'_> {
        self.push(value, [(0, 0.0); 2], 0)
    }

    pub fn vars(&self, values: &[f64]) -> Vec<Var<'_>> {
        values.iter().map(|&v| self.var(v)).collect()
    }

    /// Reverse sweep from a single scalar root.
    ///
    /// `roots` is the output of a computation; anything other than exactly
    /// one scalar is rejected.
    pub fn backward(&self, roots: &[Var<'_>]) -> Result<Gradients> {
        match roots {
            [root] => Ok(self.backward_seeded(&[(*root, 1.0)])),
            _ => Err(Error::Usage(format!(
                "backward needs a scalar root, got {} outputs",
                roots.len()
            ))),
        }
    }

    /// Reverse sweep with arbitrary output adjoints (a vector-Jacobian
    /// product).
    pub fn backward_seeded(&self, seeds: &[(Var<'_>, f64)]) -> Gradients {
        let nodes = self.nodes.borrow();
        let mut adjoints = vec![0.0; nodes.len()];
        let mut top = 0;
        for (var, seed) in seeds {
            debug_assert!(std::ptr::eq(var.tape, self), "variable from another tape");
            adjoints[var.index] += seed;
            top = top.max(var.index + 1);
        }
        for i in (0..top).rev() {
            let adj = adjoints[i];
            if adj == 0.0 {
                continue;
            }
            let node = nodes[i];
            for &(p, partial) in &node.parents[..node.arity as usize] {
                adjoints[p] += adj * partial;
            }
        }
        Gradients { adjoints }
    }
}

impl<'t> Var<'t> {
    pub fn value(&self) -> f64 {
        self.value
    }

    pub fn index(&self) -> usize {
        self.index
    }

    fn unary(self, value: f64, partial: f64) -> Var<'t> {
        self.tape.push(value, [(self.index, partial), (0, 0.0)], 1)
    }

    fn binary(self, other: Var<'t>, value: f64, da: f64, db: f64) -> Var<'t> {
        debug_assert!(std::ptr::eq(self.tape, other.tape), "mixing tapes");
        self.tape
            .push(value, [(self.index, da), (other.index, db)], 2)
    }

    pub fn constant(&self, value: f64) -> Var<'t> {
        self.tape.var(value)
    }
}

impl<'t> Add for Var<'t> {
    type Output = Var<'t>;
    fn add(self, rhs: Var<'t>) -> Var<'t> {
        self.binary(rhs, self.value + rhs.value, 1.0, 1.0)
    }
}

impl<'t> Sub for Var<'t> {
    type Output = Var<'t>;
    fn sub(self, rhs: Var<'t>) -> Var<'t> {
        self.binary(rhs, self.value - rhs.value, 1.0, -1.0)
    }
}

impl<'t> Mul for Var<'t> {
    type Output = Var<'t>;
    fn mul(self, rhs: Var<'t>) -> Var<'t> {
        self.binary(rhs, self.value * rhs.value, rhs.value, self.value)
    }
}

impl<'t> Div for Var<'t> {
    type Output = Var<'t>;
    fn div(self, rhs: Var<'t>) -> Var<'t> {
        let q = self.value / rhs.value;
        self.binary(rhs, q, 1.0 / rhs.value, -q / rhs.value)
    }
}

impl<'t> Neg for Var<'t> {
    type Output = Var<'t>;
    fn neg(self) -> Var<'t> {
        self.unary(-self.value, -1.0)
    }
}

impl<'t> Add<f64> for Var<'t> {
    type Output = Var<'t>;
    fn add(self, rhs: f64) -> Var<'t> {
        self.unary(self.value + rhs, 1.0)
    }
}

impl<'t> Mul<f64> for Var<'t> {
    type Output = Var<'t>;
    fn mul(self, rhs: f64) -> Var<'t> {
        self.unary(self.value * rhs, rhs)
    }
}

impl<'t> Real for Var<'t> {
    fn lift(self, value: f64) -> Self {
        self.constant(value)
    }
    fn value(self) -> f64 {
        self.value
    }
    fn tanh(self) -> Self {
        let t = self.value.tanh();
        self.unary(t, 1.0 - t * t)
    }
    fn exp(self) -> Self {
        let e = self.value.exp();
        self.unary(e, e)
    }
    fn ln(self) -> Self {
        self.unary(self.value.ln(), 1.0 / self.value)
    }
    fn sin(self) -> Self {
        self.unary(self.value.sin(), self.value.cos())
    }
    fn cos(self) -> Self {
        self.unary(self.value.cos(), -self.value.sin())
    }
    fn sqrt(self) -> Self {
        let s = self.value.sqrt();
        self.unary(s, 0.5 / s)
    }
    fn powi(self, n: i32) -> Self {
        let partial = if n == 0 {
            0.0
        } else {
            n as f64 * self.value.powi(n - 1)
        };
        self.unary(self.value.powi(n), partial)
    }
    fn powf(self, p: f64) -> Self {
        self.unary(self.value.powf(p), p * self.value.powf(p - 1.0))
    }
}
