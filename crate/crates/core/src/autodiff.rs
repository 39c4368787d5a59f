//! Reverse-mode automatic differentiation over a tape of dual numbers.
//!
//! Every node on the [`Tape`] carries a [`Dual`] payload: its value and its
//! derivative with respect to a single designated input (the time input of
//! the survival model). The forward pass therefore computes `∂F/∂t` exactly
//! alongside `F`, and the backward pass propagates a *pair* of adjoints per
//! node (one for the value channel, one for the tangent channel). A loss that
//! reads the tangent channel of some node (for example `log ∂F/∂t`) can then
//! be differentiated with respect to every parameter in one reverse sweep.
//!
//! The local partial derivative stored on each edge is itself a dual number
//! `(d, ḋ)`, where `ḋ` is the time-derivative of the partial. With `y` having
//! adjoints `(ȳ, ẏ̄)` the reverse update for a parent `x` is
//!
//! ```text
//! x̄_value   += ȳ_value · d + ȳ_tangent · ḋ
//! x̄_tangent += ȳ_tangent · d
//! ```

use std::cell::{Ref, RefCell};
use std::fmt;
use std::ops::{Add, Div, Mul, Neg, Sub};

use crate::error::{NfgError, Result};

/// A value together with its derivative along the time direction.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Dual {
    pub value: f64,
    pub tangent: f64,
}

impl Dual {
    pub const ZERO: Dual = Dual::constant(0.0);
    pub const ONE: Dual = Dual::constant(1.0);

    pub const fn new(value: f64, tangent: f64) -> Self {
        Self { value, tangent }
    }

    /// A value that does not move with time.
    pub const fn constant(value: f64) -> Self {
        Self { value, tangent: 0.0 }
    }

    /// The time input itself: `dt/dt = 1`.
    pub const fn variable(value: f64) -> Self {
        Self { value, tangent: 1.0 }
    }

    pub fn exp(self) -> Self {
        let e = self.value.exp();
        Self::new(e, e * self.tangent)
    }

    /// Natural logarithm. No domain check; see [`Tape::ln`] for the checked op.
    pub fn ln(self) -> Self {
        Self::new(self.value.ln(), self.tangent / self.value)
    }

    pub fn tanh(self) -> Self {
        let y = self.value.tanh();
        Self::new(y, (1.0 - y * y) * self.tangent)
    }

    pub fn softplus(self) -> Self {
        Self::new(softplus(self.value), sigmoid(self.value) * self.tangent)
    }

    pub fn square(self) -> Self {
        Self::new(self.value * self.value, 2.0 * self.value * self.tangent)
    }

    pub fn scale(self, c: f64) -> Self {
        Self::new(self.value * c, self.tangent * c)
    }

    pub fn recip(self) -> Self {
        let r = 1.0 / self.value;
        Self::new(r, -self.tangent * r * r)
    }
}

impl Add for Dual {
    type Output = Dual;
    fn add(self, rhs: Dual) -> Dual {
        Dual::new(self.value + rhs.value, self.tangent + rhs.tangent)
    }
}

impl Sub for Dual {
    type Output = Dual;
    fn sub(self, rhs: Dual) -> Dual {
        Dual::new(self.value - rhs.value, self.tangent - rhs.tangent)
    }
}

impl Mul for Dual {
    type Output = Dual;
    fn mul(self, rhs: Dual) -> Dual {
        Dual::new(
            self.value * rhs.value,
            self.value * rhs.tangent + self.tangent * rhs.value,
        )
    }
}

impl Div for Dual {
    type Output = Dual;
    fn div(self, rhs: Dual) -> Dual {
        let v = self.value / rhs.value;
        Dual::new(v, (self.tangent - v * rhs.tangent) / rhs.value)
    }
}

impl Neg for Dual {
    type Output = Dual;
    fn neg(self) -> Dual {
        Dual::new(-self.value, -self.tangent)
    }
}

/// `log(1 + e^x)` without overflow for large `|x|`.
pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum OpCode {
    Leaf,
    Add,
    Sub,
    Mul,
    Div,
    Neg,
    Exp,
    Ln,
    Tanh,
    Softplus,
    Square,
    Scale,
    Linear,
    Sum,
    /// Promotes the tangent channel of its argument to a value.
    Tangent,
}

impl fmt::Display for OpCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            OpCode::Leaf => "leaf",
            OpCode::Add => "add",
            OpCode::Sub => "sub",
            OpCode::Mul => "mul",
            OpCode::Div => "div",
            OpCode::Neg => "neg",
            OpCode::Exp => "exp",
            OpCode::Ln => "log",
            OpCode::Tanh => "tanh",
            OpCode::Softplus => "softplus",
            OpCode::Square => "square",
            OpCode::Scale => "scale",
            OpCode::Linear => "linear",
            OpCode::Sum => "sum",
            OpCode::Tangent => "tangent",
        };
        f.write_str(name)
    }
}

#[derive(Clone, Copy, Debug)]
struct Node {
    op: OpCode,
    payload: Dual,
    first_edge: u32,
    n_edges: u32,
    /// False for constants and anything computed only from constants.
    active: bool,
}

#[derive(Clone, Copy, Debug)]
struct Edge {
    parent: u32,
    partial: Dual,
}

#[derive(Default)]
struct TapeInner {
    nodes: Vec<Node>,
    edges: Vec<Edge>,
}

/// Append-only record of a computation.
///
/// Parents always precede children, so reverse insertion order is a valid
/// topological order for the backward sweep.
#[derive(Default)]
pub struct Tape {
    inner: RefCell<TapeInner>,
}

/// Handle to a node on a specific [`Tape`].
#[derive(Clone, Copy)]
pub struct Var<'t> {
    tape: &'t Tape,
    index: u32,
}

impl fmt::Debug for Var<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let d = self.dual();
        write!(f, "Var#{}({}, {})", self.index, d.value, d.tangent)
    }
}

/// Which channel of the loss node seeds the backward pass.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Channel {
    Value,
    Tangent,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_capacity(nodes: usize, edges: usize) -> Self {
        Self {
            inner: RefCell::new(TapeInner {
                nodes: Vec::with_capacity(nodes),
                edges: Vec::with_capacity(edges),
            }),
        }
    }

    /// Clears every node while keeping the allocations.
    pub fn reset(&mut self) {
        let inner = self.inner.get_mut();
        inner.nodes.clear();
        inner.edges.clear();
    }

    pub fn len(&self) -> usize {
        self.inner.borrow().nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn push_leaf(&self, payload: Dual, active: bool) -> Var<'_> {
        let mut inner = self.inner.borrow_mut();
        let index = inner.nodes.len() as u32;
        let first_edge = inner.edges.len() as u32;
        inner.nodes.push(Node {
            op: OpCode::Leaf,
            payload,
            first_edge,
            n_edges: 0,
            active,
        });
        Var { tape: self, index }
    }

    /// A differentiable leaf (parameter or input) with the given payload.
    pub fn scalar(&self, value: f64, tangent: f64) -> Var<'_> {
        self.push_leaf(Dual::new(value, tangent), true)
    }

    /// A non-differentiable leaf. Gradients are never propagated into it.
    pub fn constant(&self, value: f64) -> Var<'_> {
        self.push_leaf(Dual::constant(value), false)
    }

    /// A non-differentiable leaf that still carries a time tangent.
    pub fn constant_dual(&self, payload: Dual) -> Var<'_> {
        self.push_leaf(payload, false)
    }

    fn push_op(&self, op: OpCode, payload: Dual, parents: &[(Var<'_>, Dual)]) -> Var<'_> {
        let mut inner = self.inner.borrow_mut();
        let first_edge = inner.edges.len() as u32;
        let mut n_edges = 0u32;
        for (p, partial) in parents {
            debug_assert!(std::ptr::eq(p.tape, self), "var from another tape");
            if inner.nodes[p.index as usize].active {
                inner.edges.push(Edge {
                    parent: p.index,
                    partial: *partial,
                });
                n_edges += 1;
            }
        }
        let index = inner.nodes.len() as u32;
        inner.nodes.push(Node {
            op,
            payload,
            first_edge,
            n_edges,
            active: n_edges > 0,
        });
        Var { tape: self, index }
    }

    fn payload(&self, v: Var<'_>) -> Dual {
        self.inner.borrow().nodes[v.index as usize].payload
    }

    pub fn add<'t>(&'t self, a: Var<'t>, b: Var<'t>) -> Var<'t> {
        let (x, y) = (self.payload(a), self.payload(b));
        self.push_op(OpCode::Add, x + y, &[(a, Dual::ONE), (b, Dual::ONE)])
    }

    pub fn sub<'t>(&'t self, a: Var<'t>, b: Var<'t>) -> Var<'t> {
        let (x, y) = (self.payload(a), self.payload(b));
        self.push_op(
            OpCode::Sub,
            x - y,
            &[(a, Dual::ONE), (b, Dual::constant(-1.0))],
        )
    }

    pub fn mul<'t>(&'t self, a: Var<'t>, b: Var<'t>) -> Var<'t> {
        let (x, y) = (self.payload(a), self.payload(b));
        self.push_op(OpCode::Mul, x * y, &[(a, y), (b, x)])
    }

    /// Checked division: the denominator must be nonzero.
    pub fn div<'t>(&'t self, a: Var<'t>, b: Var<'t>) -> Result<Var<'t>> {
        let (x, y) = (self.payload(a), self.payload(b));
        if y.value == 0.0 || !y.value.is_finite() {
            return Err(NfgError::NumericDomain {
                op: OpCode::Div,
                value: y.value,
            });
        }
        let inv = y.recip();
        let q = x * inv;
        Ok(self.push_op(OpCode::Div, q, &[(a, inv), (b, -(q * inv))]))
    }

    pub fn neg<'t>(&'t self, a: Var<'t>) -> Var<'t> {
        let x = self.payload(a);
        self.push_op(OpCode::Neg, -x, &[(a, Dual::constant(-1.0))])
    }

    pub fn exp<'t>(&'t self, a: Var<'t>) -> Var<'t> {
        let y = self.payload(a).exp();
        self.push_op(OpCode::Exp, y, &[(a, y)])
    }

    /// Checked natural logarithm: the argument must be strictly positive.
    pub fn ln<'t>(&'t self, a: Var<'t>) -> Result<Var<'t>> {
        let x = self.payload(a);
        if x.value <= 0.0 || x.value.is_nan() {
            return Err(NfgError::NumericDomain {
                op: OpCode::Ln,
                value: x.value,
            });
        }
        self.ok_ln(a, x)
    }

    fn ok_ln<'t>(&'t self, a: Var<'t>, x: Dual) -> Result<Var<'t>> {
        Ok(self.push_op(OpCode::Ln, x.ln(), &[(a, x.recip())]))
    }

    pub fn tanh<'t>(&'t self, a: Var<'t>) -> Var<'t> {
        let x = self.payload(a);
        let y = x.tanh();
        // d/dx tanh = 1 - y², carried as a dual.
        let d = Dual::ONE - y * y;
        self.push_op(OpCode::Tanh, y, &[(a, d)])
    }

    pub fn softplus<'t>(&'t self, a: Var<'t>) -> Var<'t> {
        let x = self.payload(a);
        let s = sigmoid(x.value);
        let d = Dual::new(s, s * (1.0 - s) * x.tangent);
        self.push_op(OpCode::Softplus, x.softplus(), &[(a, d)])
    }

    pub fn square<'t>(&'t self, a: Var<'t>) -> Var<'t> {
        let x = self.payload(a);
        self.push_op(OpCode::Square, x.square(), &[(a, x.scale(2.0))])
    }

    /// Multiplication by a constant.
    pub fn scale<'t>(&'t self, a: Var<'t>, c: f64) -> Var<'t> {
        let x = self.payload(a);
        self.push_op(OpCode::Scale, x.scale(c), &[(a, Dual::constant(c))])
    }

    /// Fused `Σ_k w_k · x_k + bias` recorded as a single node.
    pub fn linear<'t>(&'t self, weights: &[Var<'t>], inputs: &[Var<'t>], bias: Var<'t>) -> Var<'t> {
        assert_eq!(weights.len(), inputs.len(), "linear: length mismatch");
        let mut inner = self.inner.borrow_mut();
        let first_edge = inner.edges.len() as u32;
        let mut acc = inner.nodes[bias.index as usize].payload;
        let mut n_edges = 0u32;
        if inner.nodes[bias.index as usize].active {
            inner.edges.push(Edge {
                parent: bias.index,
                partial: Dual::ONE,
            });
            n_edges += 1;
        }
        for (w, x) in weights.iter().zip(inputs) {
            let wn = inner.nodes[w.index as usize];
            let xn = inner.nodes[x.index as usize];
            acc = acc + wn.payload * xn.payload;
            if wn.active {
                inner.edges.push(Edge {
                    parent: w.index,
                    partial: xn.payload,
                });
                n_edges += 1;
            }
            if xn.active {
                inner.edges.push(Edge {
                    parent: x.index,
                    partial: wn.payload,
                });
                n_edges += 1;
            }
        }
        let index = inner.nodes.len() as u32;
        inner.nodes.push(Node {
            op: OpCode::Linear,
            payload: acc,
            first_edge,
            n_edges,
            active: n_edges > 0,
        });
        Var { tape: self, index }
    }

    pub fn sum<'t>(&'t self, terms: &[Var<'t>]) -> Var<'t> {
        let mut inner = self.inner.borrow_mut();
        let first_edge = inner.edges.len() as u32;
        let mut acc = Dual::ZERO;
        let mut n_edges = 0u32;
        for t in terms {
            let n = inner.nodes[t.index as usize];
            acc = acc + n.payload;
            if n.active {
                inner.edges.push(Edge {
                    parent: t.index,
                    partial: Dual::ONE,
                });
                n_edges += 1;
            }
        }
        let index = inner.nodes.len() as u32;
        inner.nodes.push(Node {
            op: OpCode::Sum,
            payload: acc,
            first_edge,
            n_edges,
            active: n_edges > 0,
        });
        Var { tape: self, index }
    }

    /// A node whose value is the tangent of `a`.
    ///
    /// Its own tangent is not tracked (it is reported as 0), so it may only
    /// feed value-channel computations such as the loss.
    pub fn tangent_of<'t>(&'t self, a: Var<'t>) -> Var<'t> {
        let x = self.payload(a);
        self.push_op(OpCode::Tangent, Dual::constant(x.tangent), &[(a, Dual::ONE)])
    }

    /// Backward pass seeded on the value channel of `loss`.
    pub fn backward(&self, loss: Var<'_>) -> Result<Gradient> {
        self.backward_channel(loss, Channel::Value)
    }

    pub fn backward_channel(&self, loss: Var<'_>, channel: Channel) -> Result<Gradient> {
        let mut grad = Gradient::default();
        self.backward_into(loss, channel, &mut grad)?;
        Ok(grad)
    }

    /// Backward pass writing into an existing [`Gradient`], reusing its buffers.
    pub fn backward_into(&self, loss: Var<'_>, channel: Channel, grad: &mut Gradient) -> Result<()> {
        if !std::ptr::eq(loss.tape, self) {
            return Err(NfgError::Usage(
                "backward: loss variable belongs to a different tape".into(),
            ));
        }
        let inner = self.inner.borrow();
        let n = inner.nodes.len();
        let li = loss.index as usize;
        if li >= n {
            return Err(NfgError::Usage(
                "backward: loss variable was recorded before the last reset".into(),
            ));
        }
        grad.value.clear();
        grad.value.resize(n, 0.0);
        grad.tangent.clear();
        grad.tangent.resize(n, 0.0);
        match channel {
            Channel::Value => grad.value[li] = 1.0,
            Channel::Tangent => grad.tangent[li] = 1.0,
        }
        for i in (0..=li).rev() {
            let node = inner.nodes[i];
            let (av, at) = (grad.value[i], grad.tangent[i]);
            if av == 0.0 && at == 0.0 {
                continue;
            }
            let edges = &inner.edges[node.first_edge as usize..(node.first_edge + node.n_edges) as usize];
            if node.op == OpCode::Tangent {
                for e in edges {
                    grad.tangent[e.parent as usize] += av;
                }
                continue;
            }
            for e in edges {
                let p = e.parent as usize;
                grad.value[p] += av * e.partial.value + at * e.partial.tangent;
                grad.tangent[p] += at * e.partial.value;
            }
        }
        Ok(())
    }

    /// Read-only view of the recorded opcodes; mostly useful in tests.
    pub fn opcodes(&self) -> Vec<OpCode> {
        self.inner.borrow().nodes.iter().map(|n| n.op).collect()
    }

    /// Parent indices of a node in insertion order.
    pub fn parents(&self, v: Var<'_>) -> Vec<usize> {
        let inner: Ref<'_, TapeInner> = self.inner.borrow();
        let node = inner.nodes[v.index as usize];
        inner.edges[node.first_edge as usize..(node.first_edge + node.n_edges) as usize]
            .iter()
            .map(|e| e.parent as usize)
            .collect()
    }
}

impl<'t> Var<'t> {
    pub fn index(&self) -> usize {
        self.index as usize
    }

    pub fn dual(&self) -> Dual {
        self.tape.payload(*self)
    }

    pub fn value(&self) -> f64 {
        self.dual().value
    }

    pub fn tangent(&self) -> f64 {
        self.dual().tangent
    }

    pub fn tape(&self) -> &'t Tape {
        self.tape
    }

    pub fn exp(self) -> Var<'t> {
        self.tape.exp(self)
    }

    pub fn ln(self) -> Result<Var<'t>> {
        self.tape.ln(self)
    }

    pub fn tanh(self) -> Var<'t> {
        self.tape.tanh(self)
    }

    pub fn softplus(self) -> Var<'t> {
        self.tape.softplus(self)
    }

    pub fn square(self) -> Var<'t> {
        self.tape.square(self)
    }

    pub fn scale(self, c: f64) -> Var<'t> {
        self.tape.scale(self, c)
    }

    pub fn checked_div(self, rhs: Var<'t>) -> Result<Var<'t>> {
        self.tape.div(self, rhs)
    }
}

impl<'t> Add for Var<'t> {
    type Output = Var<'t>;
    fn add(self, rhs: Var<'t>) -> Var<'t> {
        self.tape.add(self, rhs)
    }
}

impl<'t> Sub for Var<'t> {
    type Output = Var<'t>;
    fn sub(self, rhs: Var<'t>) -> Var<'t> {
        self.tape.sub(self, rhs)
    }
}

impl<'t> Mul for Var<'t> {
    type Output = Var<'t>;
    fn mul(self, rhs: Var<'t>) -> Var<'t> {
        self.tape.mul(self, rhs)
    }
}

impl<'t> Neg for Var<'t> {
    type Output = Var<'t>;
    fn neg(self) -> Var<'t> {
        self.tape.neg(self)
    }
}

/// Adjoint pairs for every node of a tape after a backward pass.
#[derive(Clone, Debug, Default)]
pub struct Gradient {
    value: Vec<f64>,
    tangent: Vec<f64>,
}

impl Gradient {
    /// `dL/dv` through the value channel of `v`. For parameter leaves (whose
    /// tangent is identically zero) this is the full parameter gradient.
    pub fn wrt(&self, v: Var<'_>) -> f64 {
        self.value.get(v.index()).copied().unwrap_or(0.0)
    }

    /// Adjoint of the tangent channel of `v`.
    pub fn wrt_tangent(&self, v: Var<'_>) -> f64 {
        self.tangent.get(v.index()).copied().unwrap_or(0.0)
    }

    pub fn gather(&self, vars: &[Var<'_>]) -> Vec<f64> {
        vars.iter().map(|v| self.wrt(*v)).collect()
    }
}

/// Arithmetic needed by the networks and losses, abstracted over whether the
/// computation is recorded on a tape or just evaluated on plain dual numbers.
pub trait Backend {
    type S: Copy;

    fn constant(&self, value: f64) -> Self::S;
    /// The time input: payload `(value, 1)`.
    fn time(&self, value: f64) -> Self::S;
    fn dual(&self, s: Self::S) -> Dual;
    fn add(&self, a: Self::S, b: Self::S) -> Self::S;
    fn sub(&self, a: Self::S, b: Self::S) -> Self::S;
    fn mul(&self, a: Self::S, b: Self::S) -> Self::S;
    fn div(&self, a: Self::S, b: Self::S) -> Result<Self::S>;
    fn neg(&self, a: Self::S) -> Self::S;
    fn exp(&self, a: Self::S) -> Self::S;
    fn ln(&self, a: Self::S) -> Result<Self::S>;
    fn tanh(&self, a: Self::S) -> Self::S;
    fn softplus(&self, a: Self::S) -> Self::S;
    fn square(&self, a: Self::S) -> Self::S;
    fn scale(&self, a: Self::S, c: f64) -> Self::S;
    fn linear(&self, weights: &[Self::S], inputs: &[Self::S], bias: Self::S) -> Self::S;
    fn sum(&self, terms: &[Self::S]) -> Self::S;
    fn tangent_of(&self, a: Self::S) -> Self::S;

    fn value(&self, s: Self::S) -> f64 {
        self.dual(s).value
    }
}

/// Tape-free evaluation on dual numbers.
#[derive(Clone, Copy, Debug, Default)]
pub struct DualBackend;

impl Backend for DualBackend {
    type S = Dual;

    fn constant(&self, value: f64) -> Dual {
        Dual::constant(value)
    }
    fn time(&self, value: f64) -> Dual {
        Dual::variable(value)
    }
    fn dual(&self, s: Dual) -> Dual {
        s
    }
    fn add(&self, a: Dual, b: Dual) -> Dual {
        a + b
    }
    fn sub(&self, a: Dual, b: Dual) -> Dual {
        a - b
    }
    fn mul(&self, a: Dual, b: Dual) -> Dual {
        a * b
    }
    fn div(&self, a: Dual, b: Dual) -> Result<Dual> {
        if b.value == 0.0 || !b.value.is_finite() {
            return Err(NfgError::NumericDomain {
                op: OpCode::Div,
                value: b.value,
            });
        }
        Ok(a / b)
    }
    fn neg(&self, a: Dual) -> Dual {
        -a
    }
    fn exp(&self, a: Dual) -> Dual {
        a.exp()
    }
    fn ln(&self, a: Dual) -> Result<Dual> {
        if a.value <= 0.0 || a.value.is_nan() {
            return Err(NfgError::NumericDomain {
                op: OpCode::Ln,
                value: a.value,
            });
        }
        Ok(a.ln())
    }
    fn tanh(&self, a: Dual) -> Dual {
        a.tanh()
    }
    fn softplus(&self, a: Dual) -> Dual {
        a.softplus()
    }
    fn square(&self, a: Dual) -> Dual {
        a.square()
    }
    fn scale(&self, a: Dual, c: f64) -> Dual {
        a.scale(c)
    }
    fn linear(&self, weights: &[Dual], inputs: &[Dual], bias: Dual) -> Dual {
        weights
            .iter()
            .zip(inputs)
            .fold(bias, |acc, (w, x)| acc + *w * *x)
    }
    fn sum(&self, terms: &[Dual]) -> Dual {
        terms.iter().fold(Dual::ZERO, |acc, t| acc + *t)
    }
    fn tangent_of(&self, a: Dual) -> Dual {
        Dual::constant(a.tangent)
    }
}

impl<'t> Backend for &'t Tape {
    type S = Var<'t>;

    fn constant(&self, value: f64) -> Var<'t> {
        Tape::constant(self, value)
    }
    fn time(&self, value: f64) -> Var<'t> {
        Tape::constant_dual(self, Dual::variable(value))
    }
    fn dual(&self, s: Var<'t>) -> Dual {
        s.dual()
    }
    fn add(&self, a: Var<'t>, b: Var<'t>) -> Var<'t> {
        Tape::add(self, a, b)
    }
    fn sub(&self, a: Var<'t>, b: Var<'t>) -> Var<'t> {
        Tape::sub(self, a, b)
    }
    fn mul(&self, a: Var<'t>, b: Var<'t>) -> Var<'t> {
        Tape::mul(self, a, b)
    }
    fn div(&self, a: Var<'t>, b: Var<'t>) -> Result<Var<'t>> {
        Tape::div(self, a, b)
    }
    fn neg(&self, a: Var<'t>) -> Var<'t> {
        Tape::neg(self, a)
    }
    fn exp(&self, a: Var<'t>) -> Var<'t> {
        Tape::exp(self, a)
    }
    fn ln(&self, a: Var<'t>) -> Result<Var<'t>> {
        Tape::ln(self, a)
    }
    fn tanh(&self, a: Var<'t>) -> Var<'t> {
        Tape::tanh(self, a)
    }
    fn softplus(&self, a: Var<'t>) -> Var<'t> {
        Tape::softplus(self, a)
    }
    fn square(&self, a: Var<'t>) -> Var<'t> {
        Tape::square(self, a)
    }
    fn scale(&self, a: Var<'t>, c: f64) -> Var<'t> {
        Tape::scale(self, a, c)
    }
    fn linear(&self, weights: &[Var<'t>], inputs: &[Var<'t>], bias: Var<'t>) -> Var<'t> {
        Tape::linear(self, weights, inputs, bias)
    }
    fn sum(&self, terms: &[Var<'t>]) -> Var<'t> {
        Tape::sum(self, terms)
    }
    fn tangent_of(&self, a: Var<'t>) -> Var<'t> {
        Tape::tangent_of(self, a)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn leaf_payloads() {
        let tape = Tape::new();
        assert_eq!(tape.scalar(3.0, 0.0).dual(), Dual::new(3.0, 0.0));
        assert_eq!(tape.scalar(2.5, 1.0).dual(), Dual::new(2.5, 1.0));
        assert_eq!(tape.constant(0.0).dual(), Dual::new(0.0, 0.0));
    }

    #[test]
    fn elementwise_examples() {
        let tape = Tape::new();
        let t = tape.scalar(0.0, 1.0);
        assert_eq!(t.exp().dual(), Dual::new(1.0, 1.0));
        let x = tape.scalar(-2.0, 3.0);
        assert_eq!(x.square().dual(), Dual::new(4.0, -12.0));
        let sp = t.softplus().dual();
        assert_relative_eq!(sp.value, 2f64.ln(), epsilon = 1e-15);
        assert_relative_eq!(sp.tangent, 0.5, epsilon = 1e-15);
    }

    #[test]
    fn domain_errors_carry_opcode() {
        let tape = Tape::new();
        let a = tape.scalar(1.0, 0.0);
        let z = tape.scalar(0.0, 0.0);
        match tape.div(a, z) {
            Err(NfgError::NumericDomain { op, value }) => {
                assert_eq!(op, OpCode::Div);
                assert_eq!(value, 0.0);
            }
            other => panic!("unexpected {other:?}"),
        }
        let neg = tape.scalar(-0.5, 0.0);
        match neg.ln() {
            Err(NfgError::NumericDomain { op, value }) => {
                assert_eq!(op, OpCode::Ln);
                assert_eq!(value, -0.5);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn softplus_is_stable_for_large_arguments() {
        assert_eq!(softplus(1000.0), 1000.0);
        assert!(softplus(-1000.0) >= 0.0 && softplus(-1000.0) < 1e-300);
        assert_relative_eq!(softplus(35.0), 35.0 + (-35f64).exp(), max_relative = 1e-15);
    }

    #[test]
    fn backward_square() {
        let tape = Tape::new();
        let x = tape.scalar(3.0, 0.0);
        let l = x * x;
        let g = tape.backward(l).unwrap();
        assert_eq!(g.wrt(x), 6.0);
    }

    #[test]
    fn backward_through_tangent_channel() {
        let tape = Tape::new();
        let t = tape.scalar(2.0, 1.0);
        let w = tape.scalar(5.0, 0.0);
        let y = t * w;
        assert_eq!(y.tangent(), 5.0);
        let g = tape.backward_channel(y, Channel::Tangent).unwrap();
        assert_eq!(g.wrt(w), 1.0);
    }

    #[test]
    fn backward_value_of_exp() {
        let tape = Tape::new();
        let t = tape.scalar(2.0, 1.0);
        let w = tape.scalar(0.5, 0.0);
        let y = (t * w).exp();
        let g = tape.backward(y).unwrap();
        assert_relative_eq!(g.wrt(w), 2.0 * 1f64.exp(), max_relative = 1e-15);
    }

    #[test]
    fn log_of_time_derivative_gradient() {
        // L = log(d/dt exp(w t)) = log(w) + w t, dL/dw = 1/w + t
        let tape = Tape::new();
        let t = tape.constant_dual(Dual::variable(0.7));
        let w = tape.scalar(1.3, 0.0);
        let y = (w * t).exp();
        let l = tape.tangent_of(y).ln().unwrap();
        assert_relative_eq!(l.value(), 1.3f64.ln() + 1.3 * 0.7, max_relative = 1e-14);
        let g = tape.backward(l).unwrap();
        assert_relative_eq!(g.wrt(w), 1.0 / 1.3 + 0.7, max_relative = 1e-14);
    }

    #[test]
    fn backward_rejects_foreign_loss() {
        let a = Tape::new();
        let b = Tape::new();
        let x = a.scalar(1.0, 0.0);
        assert!(matches!(b.backward(x), Err(NfgError::Usage(_))));
    }

    #[test]
    fn parents_precede_children() {
        let tape = Tape::new();
        let x = tape.scalar(1.0, 0.0);
        let y = tape.scalar(2.0, 0.0);
        let z = tape.linear(&[x], &[y], x);
        for p in tape.parents(z) {
            assert!(p < z.index());
        }
    }

    #[test]
    fn constants_record_no_edges() {
        let tape = Tape::new();
        let c = tape.constant(2.0);
        let d = tape.constant(3.0);
        let e = c * d;
        assert!(tape.parents(e).is_empty());
        let w = tape.scalar(1.0, 0.0);
        let f = e * w;
        assert_eq!(tape.parents(f), vec![w.index()]);
    }

    #[test]
    fn reset_keeps_working() {
        let mut tape = Tape::new();
        {
            let x = tape.scalar(1.0, 0.0);
            let _ = x.exp();
        }
        tape.reset();
        assert!(tape.is_empty());
        let x = tape.scalar(2.0, 0.0);
        let g = tape.backward(x.square()).unwrap();
        assert_eq!(g.wrt(x), 4.0);
    }
}
