//! Scalar reverse-mode automatic differentiation on an append-only tape.
//!
//! Every operation appends one node to a [`Tape`] and returns a lightweight
//! [`Var`] handle. [`Tape::grad`] walks the tape backwards, but instead of
//! accumulating plain numbers it *records* the adjoint computation as new
//! nodes. The gradients it returns are therefore ordinary `Var`s that can be
//! differentiated again, which is how second, third and fourth derivatives of
//! a network with respect to its inputs are obtained, and how parameter
//! gradients of a loss built from such derivatives are taken.
//!
//! ```
//! use pinnkit::autodiff::Tape;
//!
//! let mut tape = Tape::new();
//! let x = tape.input(3.0)?;
//! let y = tape.powi(x, 3)?;                  // x³
//! let dy = tape.grad(y, &[x])?[0];           // 3x²  = 27
//! let d2y = tape.grad(dy, &[x])?[0];         // 6x   = 18
//! assert_eq!(dy.value(), 27.0);
//! assert_eq!(d2y.value(), 18.0);
//! # Ok::<(), pinnkit::Error>(())
//! ```
//!
//! Long training loops bound the tape with [`Tape::checkpoint`] and
//! [`Tape::rollback`]. Handles created after a mark are invalidated by the
//! rollback; using one afterwards is an error rather than a silent read of
//! whatever node now occupies that slot.

use std::sync::atomic::{AtomicU64, Ordering};

use crate::error::{Error, Result};

static NEXT_TAPE_ID: AtomicU64 = AtomicU64::new(1);

#[derive(Clone, Copy, Debug, PartialEq)]
enum Op {
    Input,
    Add(u32, u32),
    Sub(u32, u32),
    Mul(u32, u32),
    Div(u32, u32),
    Neg(u32),
    Sin(u32),
    Cos(u32),
    Exp(u32),
    Tanh(u32),
    Powi(u32, i32),
    /// `scale * a + offset`
    Affine(u32, f64, f64),
}

impl Op {
    fn parents(self) -> [Option<u32>; 2] {
        match self {
            Op::Input => [None, None],
            Op::Add(a, b) | Op::Sub(a, b) | Op::Mul(a, b) | Op::Div(a, b) => [Some(a), Some(b)],
            Op::Neg(a)
            | Op::Sin(a)
            | Op::Cos(a)
            | Op::Exp(a)
            | Op::Tanh(a)
            | Op::Powi(a, _)
            | Op::Affine(a, _, _) => [Some(a), None],
        }
    }
}

#[derive(Clone, Copy, Debug)]
struct Node {
    op: Op,
    value: f64,
    generation: u32,
}

/// Handle to a node on a [`Tape`], carrying a copy of the node's value.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Var {
    tape: u64,
    index: u32,
    generation: u32,
    value: f64,
}

impl Var {
    pub fn value(&self) -> f64 {
        self.value
    }

    pub fn index(&self) -> usize {
        self.index as usize
    }
}

/// A position on a tape to roll back to.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Mark {
    tape: u64,
    len: usize,
    last_generation: Option<u32>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BinaryOp {
    Add,
    Sub,
    Mul,
    Div,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum UnaryOp {
    Neg,
    Sin,
    Cos,
    Exp,
    Tanh,
    Powi(i32),
}

/// Adjoint under construction: either the literal seed 1 or a recorded node.
#[derive(Clone, Copy)]
enum Adj {
    Unit,
    Node(u32),
}

/// Append-only arena of scalar nodes.
///
/// Parents always precede their children, so the node vector is a
/// topological order of the computation graph.
#[derive(Debug)]
pub struct Tape {
    id: u64,
    generation: u32,
    nodes: Vec<Node>,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

/// `x^k` by repeated multiplication.
fn powi_exact(x: f64, k: i32) -> f64 {
    let mut acc = 1.0;
    for _ in 0..k.unsigned_abs() {
        acc *= x;
    }
    if k < 0 {
        1.0 / acc
    } else {
        acc
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::with_capacity(0)
    }

    pub fn with_capacity(capacity: usize) -> Self {
        Tape {
            id: NEXT_TAPE_ID.fetch_add(1, Ordering::Relaxed),
            generation: 0,
            nodes: Vec::with_capacity(capacity),
        }
    }

    pub fn id(&self) -> u64 {
        self.id
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn validate(&self, v: Var) -> Result<()> {
        if v.tape != self.id {
            return Err(Error::ForeignVar {
                expected: self.id,
                found: v.tape,
            });
        }
        match self.nodes.get(v.index as usize) {
            Some(node) if node.generation == v.generation => Ok(()),
            _ => Err(Error::StaleVar {
                index: v.index as usize,
            }),
        }
    }

    fn handle(&self, index: u32) -> Var {
        let node = &self.nodes[index as usize];
        Var {
            tape: self.id,
            index,
            generation: node.generation,
            value: node.value,
        }
    }

    fn val(&self, index: u32) -> f64 {
        self.nodes[index as usize].value
    }

    fn evaluate(&self, op: Op) -> f64 {
        match op {
            Op::Input => unreachable!("inputs carry their own value"),
            Op::Add(a, b) => self.val(a) + self.val(b),
            Op::Sub(a, b) => self.val(a) - self.val(b),
            Op::Mul(a, b) => self.val(a) * self.val(b),
            Op::Div(a, b) => self.val(a) / self.val(b),
            Op::Neg(a) => -self.val(a),
            Op::Sin(a) => self.val(a).sin(),
            Op::Cos(a) => self.val(a).cos(),
            Op::Exp(a) => self.val(a).exp(),
            Op::Tanh(a) => self.val(a).tanh(),
            Op::Powi(a, k) => powi_exact(self.val(a), k),
            Op::Affine(a, s, c) => s * self.val(a) + c,
        }
    }

    fn push_value(&mut self, op: Op, value: f64) -> u32 {
        let index = u32::try_from(self.nodes.len()).expect("tape exceeds u32::MAX nodes");
        self.nodes.push(Node {
            op,
            value,
            generation: self.generation,
        });
        index
    }

    fn push(&mut self, op: Op) -> u32 {
        let value = self.evaluate(op);
        self.push_value(op, value)
    }

    fn constant_node(&mut self, value: f64) -> u32 {
        self.push_value(Op::Input, value)
    }

    /// New leaf node. Rejects NaN and infinities.
    pub fn input(&mut self, value: f64) -> Result<Var> {
        if !value.is_finite() {
            return Err(Error::NonFiniteInput { value });
        }
        let i = self.constant_node(value);
        Ok(self.handle(i))
    }

    /// Alias of [`Tape::input`] for values that are not meant to be
    /// differentiated against; the tape does not distinguish the two.
    pub fn constant(&mut self, value: f64) -> Result<Var> {
        self.input(value)
    }

    pub fn binary(&mut self, a: Var, b: Var, kind: BinaryOp) -> Result<Var> {
        self.validate(a)?;
        self.validate(b)?;
        let op = match kind {
            BinaryOp::Add => Op::Add(a.index, b.index),
            BinaryOp::Sub => Op::Sub(a.index, b.index),
            BinaryOp::Mul => Op::Mul(a.index, b.index),
            BinaryOp::Div => {
                if b.value == 0.0 {
                    return Err(Error::DivisionByZero {
                        node: b.index as usize,
                    });
                }
                Op::Div(a.index, b.index)
            }
        };
        let i = self.push(op);
        Ok(self.handle(i))
    }

    pub fn unary(&mut self, a: Var, kind: UnaryOp) -> Result<Var> {
        self.validate(a)?;
        let op = match kind {
            UnaryOp::Neg => Op::Neg(a.index),
            UnaryOp::Sin => Op::Sin(a.index),
            UnaryOp::Cos => Op::Cos(a.index),
            UnaryOp::Exp => Op::Exp(a.index),
            UnaryOp::Tanh => Op::Tanh(a.index),
            UnaryOp::Powi(k) => {
                if k < 0 && a.value == 0.0 {
                    return Err(Error::NegativePowerOfZero {
                        node: a.index as usize,
                        exponent: k,
                    });
                }
                Op::Powi(a.index, k)
            }
        };
        let i = self.push(op);
        Ok(self.handle(i))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, BinaryOp::Add)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, BinaryOp::Sub)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, BinaryOp::Mul)
    }

    pub fn div(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, BinaryOp::Div)
    }

    pub fn neg(&mut self, a: Var) -> Result<Var> {
        self.unary(a, UnaryOp::Neg)
    }

    pub fn sin(&mut self, a: Var) -> Result<Var> {
        self.unary(a, UnaryOp::Sin)
    }

    pub fn cos(&mut self, a: Var) -> Result<Var> {
        self.unary(a, UnaryOp::Cos)
    }

    pub fn exp(&mut self, a: Var) -> Result<Var> {
        self.unary(a, UnaryOp::Exp)
    }

    pub fn tanh(&mut self, a: Var) -> Result<Var> {
        self.unary(a, UnaryOp::Tanh)
    }

    pub fn powi(&mut self, a: Var, k: i32) -> Result<Var> {
        self.unary(a, UnaryOp::Powi(k))
    }

    pub fn square(&mut self, a: Var) -> Result<Var> {
        self.mul(a, a)
    }

    /// `c * a` as a single node.
    pub fn scale(&mut self, a: Var, c: f64) -> Result<Var> {
        self.affine(a, c, 0.0)
    }

    /// `a + c` as a single node.
    pub fn offset(&mut self, a: Var, c: f64) -> Result<Var> {
        self.affine(a, 1.0, c)
    }

    fn affine(&mut self, a: Var, scale: f64, offset: f64) -> Result<Var> {
        self.validate(a)?;
        if !scale.is_finite() || !offset.is_finite() {
            return Err(Error::NonFiniteInput {
                value: if scale.is_finite() { offset } else { scale },
            });
        }
        let i = self.push(Op::Affine(a.index, scale, offset));
        Ok(self.handle(i))
    }

    /// Sum of all terms; the empty sum is the constant 0.
    pub fn sum(&mut self, terms: &[Var]) -> Result<Var> {
        let Some((&first, rest)) = terms.split_first() else {
            return self.constant(0.0);
        };
        self.validate(first)?;
        let mut acc = first;
        for &t in rest {
            acc = self.add(acc, t)?;
        }
        Ok(acc)
    }

    /// Arithmetic mean; errors on an empty slice.
    pub fn mean(&mut self, terms: &[Var]) -> Result<Var> {
        if terms.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let s = self.sum(terms)?;
        self.scale(s, 1.0 / terms.len() as f64)
    }

    /// Current value of a handle, after checking it is still valid.
    pub fn value(&self, v: Var) -> Result<f64> {
        self.validate(v)?;
        Ok(self.nodes[v.index as usize].value)
    }

    /// Reports the first non-finite node among `v` and its ancestors.
    pub fn check(&self, v: Var) -> Result<()> {
        self.validate(v)?;
        let end = v.index as usize;
        let mut live = vec![false; end + 1];
        live[end] = true;
        for i in (0..=end).rev() {
            if !live[i] {
                continue;
            }
            for p in self.nodes[i].op.parents().into_iter().flatten() {
                live[p as usize] = true;
            }
        }
        match (0..=end).find(|&i| live[i] && !self.nodes[i].value.is_finite()) {
            Some(node) => Err(Error::NonFinite {
                node,
                value: self.nodes[node].value,
            }),
            None => Ok(()),
        }
    }

    /// Re-evaluates every node from its parents and returns the first whose
    /// cached value differs (bitwise, NaN-aware).
    pub fn verify(&self) -> Option<usize> {
        self.nodes.iter().enumerate().find_map(|(i, node)| {
            if node.op == Op::Input {
                return None;
            }
            let parents_ok = node
                .op
                .parents()
                .into_iter()
                .flatten()
                .all(|p| (p as usize) < i);
            let fresh = self.evaluate(node.op);
            let same = fresh.to_bits() == node.value.to_bits() || (fresh.is_nan() && node.value.is_nan());
            (!parents_ok || !same).then_some(i)
        })
    }

    pub fn checkpoint(&self) -> Mark {
        Mark {
            tape: self.id,
            len: self.nodes.len(),
            last_generation: self.nodes.last().map(|n| n.generation),
        }
    }

    /// Discards every node created after `mark`.
    pub fn rollback(&mut self, mark: Mark) -> Result<()> {
        if mark.tape != self.id || mark.len > self.nodes.len() {
            return Err(Error::StaleMark);
        }
        let prefix_generation = mark.len.checked_sub(1).map(|i| self.nodes[i].generation);
        if prefix_generation != mark.last_generation {
            return Err(Error::StaleMark);
        }
        if self.nodes.len() > mark.len {
            self.nodes.truncate(mark.len);
            self.generation = self.generation.wrapping_add(1);
        }
        Ok(())
    }

    // ---- adjoint emission helpers (no validation; indices are internal) ----

    fn materialize(&mut self, g: Adj) -> u32 {
        match g {
            Adj::Unit => self.constant_node(1.0),
            Adj::Node(n) => n,
        }
    }

    fn times(&mut self, g: Adj, x: u32) -> u32 {
        match g {
            Adj::Unit => x,
            Adj::Node(n) => self.push(Op::Mul(n, x)),
        }
    }

    fn scaled(&mut self, g: Adj, c: f64) -> u32 {
        match g {
            Adj::Unit => self.constant_node(c),
            Adj::Node(n) => self.push(Op::Affine(n, c, 0.0)),
        }
    }

    fn accumulate(&mut self, adj: &mut [Option<Adj>], target: u32, contribution: Adj) {
        let slot = &mut adj[target as usize];
        *slot = Some(match slot.take() {
            None => contribution,
            Some(prev) => {
                let p = self.materialize(prev);
                let c = self.materialize(contribution);
                Adj::Node(self.push(Op::Add(p, c)))
            }
        });
    }

    /// Derivatives of `output` with respect to each of `wrt`, recorded on the
    /// tape so they can be differentiated again.
    ///
    /// A `wrt` node that `output` does not depend on gets the constant 0.
    pub fn grad(&mut self, output: Var, wrt: &[Var]) -> Result<Vec<Var>> {
        self.validate(output)?;
        for &w in wrt {
            self.validate(w)?;
        }
        let out = output.index as usize;
        let start = wrt
            .iter()
            .map(|w| w.index as usize)
            .filter(|&i| i <= out)
            .min();

        let mut adj: Vec<Option<Adj>> = vec![None; out + 1];
        if let Some(start) = start {
            // Only nodes lying on a path from some wrt node carry adjoints.
            let mut depends = vec![false; out + 1];
            for w in wrt {
                if (w.index as usize) <= out {
                    depends[w.index as usize] = true;
                }
            }
            for i in start..=out {
                if !depends[i] {
                    depends[i] = self.nodes[i]
                        .op
                        .parents()
                        .into_iter()
                        .flatten()
                        .any(|p| depends[p as usize]);
                }
            }

            if depends[out] {
                adj[out] = Some(Adj::Unit);
                for i in (start..=out).rev() {
                    let Some(g) = adj[i] else { continue };
                    let me = i as u32;
                    let dep = |p: u32| depends[p as usize];
                    match self.nodes[i].op {
                        Op::Input => {}
                        Op::Add(a, b) => {
                            if dep(a) {
                                self.accumulate(&mut adj, a, g);
                            }
                            if dep(b) {
                                self.accumulate(&mut adj, b, g);
                            }
                        }
                        Op::Sub(a, b) => {
                            if dep(a) {
                                self.accumulate(&mut adj, a, g);
                            }
                            if dep(b) {
                                let n = self.scaled(g, -1.0);
                                self.accumulate(&mut adj, b, Adj::Node(n));
                            }
                        }
                        Op::Mul(a, b) => {
                            if dep(a) {
                                let n = self.times(g, b);
                                self.accumulate(&mut adj, a, Adj::Node(n));
                            }
                            if dep(b) {
                                let n = self.times(g, a);
                                self.accumulate(&mut adj, b, Adj::Node(n));
                            }
                        }
                        Op::Div(a, b) => {
                            // d(a/b) = g/b da - (g/b)(a/b) db
                            let t = match g {
                                Adj::Unit => self.push(Op::Powi(b, -1)),
                                Adj::Node(n) => self.push(Op::Div(n, b)),
                            };
                            if dep(a) {
                                self.accumulate(&mut adj, a, Adj::Node(t));
                            }
                            if dep(b) {
                                let ty = self.push(Op::Mul(t, me));
                                let n = self.push(Op::Neg(ty));
                                self.accumulate(&mut adj, b, Adj::Node(n));
                            }
                        }
                        Op::Neg(a) => {
                            let n = self.scaled(g, -1.0);
                            self.accumulate(&mut adj, a, Adj::Node(n));
                        }
                        Op::Sin(a) => {
                            let c = self.push(Op::Cos(a));
                            let n = self.times(g, c);
                            self.accumulate(&mut adj, a, Adj::Node(n));
                        }
                        Op::Cos(a) => {
                            let s = self.push(Op::Sin(a));
                            let ns = self.push(Op::Neg(s));
                            let n = self.times(g, ns);
                            self.accumulate(&mut adj, a, Adj::Node(n));
                        }
                        Op::Exp(a) => {
                            let n = self.times(g, me);
                            self.accumulate(&mut adj, a, Adj::Node(n));
                        }
                        Op::Tanh(a) => {
                            let sq = self.push(Op::Mul(me, me));
                            let d = self.push(Op::Affine(sq, -1.0, 1.0));
                            let n = self.times(g, d);
                            self.accumulate(&mut adj, a, Adj::Node(n));
                        }
                        Op::Powi(a, k) => match k {
                            0 => {}
                            1 => self.accumulate(&mut adj, a, g),
                            _ => {
                                let p = if k == 2 { a } else { self.push(Op::Powi(a, k - 1)) };
                                let d = self.push(Op::Affine(p, f64::from(k), 0.0));
                                let n = self.times(g, d);
                                self.accumulate(&mut adj, a, Adj::Node(n));
                            }
                        },
                        Op::Affine(a, s, _) => {
                            let n = self.scaled(g, s);
                            self.accumulate(&mut adj, a, Adj::Node(n));
                        }
                    }
                }
            }
        }

        let mut grads = Vec::with_capacity(wrt.len());
        for w in wrt {
            let i = w.index as usize;
            let node = match adj.get(i).copied().flatten() {
                Some(g) => self.materialize(g),
                None => self.constant_node(0.0),
            };
            grads.push(self.handle(node));
        }
        Ok(grads)
    }

    /// Differentiates `y` with respect to `x` `order` times.
    pub fn derivative(&mut self, y: Var, x: Var, order: usize) -> Result<Var> {
        if order == 0 {
            return Err(Error::ZeroOrder(order));
        }
        let mut d = y;
        for _ in 0..order {
            d = self.grad(d, &[x])?[0];
        }
        Ok(d)
    }

    /// `order`-th derivative of `f` at `x`, still differentiable.
    pub fn nth_derivative<F>(&mut self, x: Var, order: usize, f: F) -> Result<Var>
    where
        F: FnOnce(&mut Tape, Var) -> Result<Var>,
    {
        if order == 0 {
            return Err(Error::ZeroOrder(order));
        }
        let y = f(self, x)?;
        self.derivative(y, x, order)
    }
}
