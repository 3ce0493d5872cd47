//! Minimal reverse-mode automatic differentiation.
//!
//! A [`Tape`] records one scalar operation per node together with the local
//! partial derivatives with respect to its (at most two) parents, so the
//! backward sweep is a single reverse pass of fused multiply-adds. Variables
//! are `Copy` handles into the tape, which keeps the generic kernels in
//! [`crate::geometry`] and [`crate::loss`] free of ownership noise.
//!
//! The engine is deliberately small: exactly the primitives the training
//! objective needs, each verified against central finite differences in the
//! tests below.

use std::cell::RefCell;
use std::ops::{Add, Div, Mul, Neg, Sub};

use crate::scalar::{sinhc_deriv_f64, sinhc_f64, Scalar, DERIV_FLOOR};

#[derive(Clone, Copy)]
struct Node {
    value: f64,
    parents: [u32; 2],
    partials: [f64; 2],
}

/// Wengert list of recorded operations.
#[derive(Default)]
pub struct Tape {
    nodes: RefCell<Vec<Node>>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_capacity(cap: usize) -> Self {
        Tape {
            nodes: RefCell::new(Vec::with_capacity(cap)),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Record a leaf variable.
    pub fn var(&self, value: f64) -> Var<'_> {
        let idx = self.push(Node {
            value,
            parents: [0, 0],
            partials: [0.0, 0.0],
        });
        Var { tape: self, idx }
    }

    fn push(&self, node: Node) -> u32 {
        let mut nodes = self.nodes.borrow_mut();
        let idx = nodes.len();
        assert!(idx <= u32::MAX as usize, "tape overflow");
        nodes.push(node);
        idx as u32
    }

    fn value_of(&self, idx: u32) -> f64 {
        self.nodes.borrow()[idx as usize].value
    }
}

/// Handle to one tape node.
#[derive(Clone, Copy)]
pub struct Var<'t> {
    tape: &'t Tape,
    idx: u32,
}

impl<'t> Var<'t> {
    fn unary(self, value: f64, partial: f64) -> Var<'t> {
        let idx = self.tape.push(Node {
            value,
            parents: [self.idx, 0],
            partials: [partial, 0.0],
        });
        Var {
            tape: self.tape,
            idx,
        }
    }

    fn binary(self, rhs: Var<'t>, value: f64, da: f64, db: f64) -> Var<'t> {
        let idx = self.tape.push(Node {
            value,
            parents: [self.idx, rhs.idx],
            partials: [da, db],
        });
        Var {
            tape: self.tape,
            idx,
        }
    }

    /// Adjoints of every node with respect to `self`.
    pub fn backward(self) -> Gradients {
        let nodes = self.tape.nodes.borrow();
        let mut adjoints = vec![0.0; nodes.len()];
        adjoints[self.idx as usize] = 1.0;
        for i in (0..=self.idx as usize).rev() {
            let g = adjoints[i];
            if g == 0.0 {
                continue;
            }
            let node = nodes[i];
            adjoints[node.parents[0] as usize] += g * node.partials[0];
            adjoints[node.parents[1] as usize] += g * node.partials[1];
        }
        Gradients { adjoints }
    }
}

/// Result of a backward pass.
pub struct Gradients {
    adjoints: Vec<f64>,
}

impl Gradients {
    pub fn wrt(&self, var: Var<'_>) -> f64 {
        self.adjoints[var.idx as usize]
    }

    /// Adjoint by raw node index; leaf variables created first occupy the
    /// lowest indices.
    pub fn by_index(&self, idx: usize) -> f64 {
        self.adjoints[idx]
    }
}

impl<'t> Add for Var<'t> {
    type Output = Var<'t>;
    fn add(self, rhs: Var<'t>) -> Var<'t> {
        let v = self.value() + rhs.value();
        self.binary(rhs, v, 1.0, 1.0)
    }
}

impl<'t> Sub for Var<'t> {
    type Output = Var<'t>;
    fn sub(self, rhs: Var<'t>) -> Var<'t> {
        let v = self.value() - rhs.value();
        self.binary(rhs, v, 1.0, -1.0)
    }
}

impl<'t> Mul for Var<'t> {
    type Output = Var<'t>;
    fn mul(self, rhs: Var<'t>) -> Var<'t> {
        let (a, b) = (self.value(), rhs.value());
        self.binary(rhs, a * b, b, a)
    }
}

impl<'t> Div for Var<'t> {
    type Output = Var<'t>;
    fn div(self, rhs: Var<'t>) -> Var<'t> {
        let (a, b) = (self.value(), rhs.value());
        self.binary(rhs, a / b, 1.0 / b, -a / (b * b))
    }
}

impl<'t> Neg for Var<'t> {
    type Output = Var<'t>;
    fn neg(self) -> Var<'t> {
        let v = self.value();
        self.unary(-v, -1.0)
    }
}

impl Scalar for Var<'_> {
    fn value(self) -> f64 {
        self.tape.value_of(self.idx)
    }

    fn scale(self, k: f64) -> Self {
        self.unary(self.value() * k, k)
    }

    fn shift(self, k: f64) -> Self {
        self.unary(self.value() + k, 1.0)
    }

    fn clamp_min(self, floor: f64) -> Self {
        let v = self.value();
        if v >= floor {
            self.unary(v, 1.0)
        } else {
            self.unary(floor, 0.0)
        }
    }

    fn recip(self) -> Self {
        let v = self.value();
        self.unary(1.0 / v, -1.0 / (v * v))
    }

    fn sqrt(self) -> Self {
        let r = self.value().sqrt();
        self.unary(r, 0.5 / r)
    }

    fn exp(self) -> Self {
        let e = self.value().exp();
        self.unary(e, e)
    }

    fn ln(self) -> Self {
        let v = self.value();
        self.unary(v.ln(), 1.0 / v)
    }

    fn sinh(self) -> Self {
        let v = self.value();
        self.unary(v.sinh(), v.cosh())
    }

    fn cosh(self) -> Self {
        let v = self.value();
        self.unary(v.cosh(), v.sinh())
    }

    fn tanh(self) -> Self {
        let t = self.value().tanh();
        self.unary(t, 1.0 - t * t)
    }

    fn sinhc(self) -> Self {
        let v = self.value();
        self.unary(sinhc_f64(v), sinhc_deriv_f64(v))
    }

    fn acosh_clamped(self) -> Self {
        let v = self.value();
        if v <= 1.0 {
            self.unary(0.0, 0.0)
        } else {
            let d = 1.0 / (v * v - 1.0).max(DERIV_FLOOR).sqrt();
            self.unary(v.acosh(), d)
        }
    }

    fn asin_clamped(self) -> Self {
        let v = self.value();
        if v.abs() >= 1.0 {
            self.unary(v.clamp(-1.0, 1.0).asin(), 0.0)
        } else {
            let d = 1.0 / (1.0 - v * v).max(DERIV_FLOOR).sqrt();
            self.unary(v.asin(), d)
        }
    }

    fn acos_clamped(self) -> Self {
        let v = self.value();
        if v.abs() >= 1.0 {
            self.unary(v.clamp(-1.0, 1.0).acos(), 0.0)
        } else {
            let d = -1.0 / (1.0 - v * v).max(DERIV_FLOOR).sqrt();
            self.unary(v.acos(), d)
        }
    }

    fn relu(self) -> Self {
        let v = self.value();
        if v > 0.0 {
            self.unary(v, 1.0)
        } else {
            self.unary(0.0, 0.0)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const FD_STEP: f64 = 1e-6;

    /// Central finite difference of a scalar function built on the tape.
    fn check_grad(f: impl Fn(Var<'_>) -> Var<'_>, at: f64, tol: f64) {
        let tape = Tape::new();
        let x = tape.var(at);
        let y = f(x);
        let grad = y.backward().wrt(x);

        let eval = |x0: f64| {
            let t = Tape::new();
            f(t.var(x0)).value()
        };
        let numeric = (eval(at + FD_STEP) - eval(at - FD_STEP)) / (2.0 * FD_STEP);
        assert!(
            (grad - numeric).abs() <= tol * numeric.abs().max(1.0),
            "analytic {grad} vs numeric {numeric} at {at}"
        );
    }

    #[test]
    fn unary_primitives_match_finite_differences() {
        for &x in &[0.3, 1.7, 2.5] {
            check_grad(|v| v.sqrt(), x, 1e-7);
            check_grad(|v| v.exp(), x, 1e-7);
            check_grad(|v| v.ln(), x, 1e-7);
            check_grad(|v| v.sinh(), x, 1e-7);
            check_grad(|v| v.cosh(), x, 1e-7);
            check_grad(|v| v.tanh(), x, 1e-7);
            check_grad(|v| v.sinhc(), x, 1e-7);
            check_grad(|v| v.recip(), x, 1e-7);
            check_grad(|v| v.scale(-2.5), x, 1e-9);
            check_grad(|v| v.shift(4.0), x, 1e-9);
            check_grad(|v| -v, x, 1e-9);
        }
        check_grad(|v| v.acosh_clamped(), 1.8, 1e-6);
        check_grad(|v| v.asin_clamped(), 0.4, 1e-6);
        check_grad(|v| v.acos_clamped(), -0.6, 1e-6);
        check_grad(|v| v.relu(), 0.9, 1e-9);
        check_grad(|v| v.relu(), -0.9, 1e-9);
        check_grad(|v| v.clamp_min(1.0), 2.0, 1e-9);
        check_grad(|v| v.clamp_min(1.0), 0.5, 1e-9);
    }

    #[test]
    fn clamped_regions_have_zero_derivative() {
        let tape = Tape::new();
        let x = tape.var(0.5);
        let y = x.acosh_clamped();
        assert_eq!(y.value(), 0.0);
        assert_eq!(y.backward().wrt(x), 0.0);

        let z = tape.var(1.5).asin_clamped();
        assert_eq!(z.value(), std::f64::consts::FRAC_PI_2);
    }

    #[test]
    fn composite_expression_gradients() {
        // f(a, b) = exp(a * b) + a / b - sinh(b)
        let tape = Tape::new();
        let a = tape.var(0.7);
        let b = tape.var(1.3);
        let f = (a * b).exp() + a / b - b.sinh();
        let grads = f.backward();

        let eval = |av: f64, bv: f64| (av * bv).exp() + av / bv - bv.sinh();
        let da = (eval(0.7 + FD_STEP, 1.3) - eval(0.7 - FD_STEP, 1.3)) / (2.0 * FD_STEP);
        let db = (eval(0.7, 1.3 + FD_STEP) - eval(0.7, 1.3 - FD_STEP)) / (2.0 * FD_STEP);
        assert!((grads.wrt(a) - da).abs() < 1e-6);
        assert!((grads.wrt(b) - db).abs() < 1e-6);
    }

    #[test]
    fn fan_out_accumulates() {
        // f = x*x + x => df/dx = 2x + 1
        let tape = Tape::new();
        let x = tape.var(3.0);
        let f = x * x + x;
        assert_eq!(f.backward().wrt(x), 7.0);
    }

    #[test]
    fn leaf_indices_are_sequential() {
        let tape = Tape::new();
        let a = tape.var(1.0);
        let b = tape.var(2.0);
        let f = a * b;
        let g = f.backward();
        assert_eq!(g.by_index(0), 2.0);
        assert_eq!(g.by_index(1), 1.0);
    }
}
