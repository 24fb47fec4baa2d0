//! Forward-mode jet arithmetic.
//!
//! A [`Jet`] carries a value together with one derivative seed; nesting jets
//! (`Jet<Jet<f64>>`, ...) yields exact higher directional derivatives. Every
//! derivative taken anywhere in the crate — bracket transport terms, exterior
//! derivatives, Jacobians of bonding maps — flows through this module, so the
//! results are exact up to floating-point rounding rather than
//! finite-difference truncation. Central finite differences are kept around
//! only as an independent cross-check oracle in the test suites.
//!
//! The scalar kinds form a finite lifting chain `f64 → J1 → J2 → J3`; three
//! nested derivatives are the deepest any formula in the crate requires
//! (an exterior derivative of an exterior derivative of `d_ρ f` differentiates
//! `f` three times). Attempting to lift past [`J3`] panics, which keeps the
//! monomorphization chain finite and loudly flags any future formula that
//! would need a fourth derivative.

use std::ops::{Add, Div, Mul, Neg, Sub};

/// Value plus one derivative seed. `Jet<f64>` is a first-order dual number;
/// nesting produces mixed higher derivatives.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Jet<S> {
    pub val: S,
    pub dot: S,
}

/// First-order jet over plain scalars.
pub type J1 = Jet<f64>;
/// Second-order (nested) jet.
pub type J2 = Jet<J1>;
/// Third-order (doubly nested) jet; the lifting chain caps here.
pub type J3 = Jet<J2>;

impl<S: Scalar> Jet<S> {
    pub fn new(val: S, dot: S) -> Self {
        Jet { val, dot }
    }

    /// A jet with zero seed: constants differentiate to zero.
    pub fn constant(val: S) -> Self {
        Jet {
            val,
            dot: S::zero(),
        }
    }

    pub fn sin(self) -> Self {
        Jet {
            val: self.val.sin(),
            dot: self.dot * self.val.cos(),
        }
    }

    pub fn cos(self) -> Self {
        Jet {
            val: self.val.cos(),
            dot: -(self.dot * self.val.sin()),
        }
    }

    pub fn exp(self) -> Self {
        let e = self.val.exp();
        Jet {
            val: e,
            dot: self.dot * e,
        }
    }
}

impl<S: Scalar> Add for Jet<S> {
    type Output = Self;
    fn add(self, rhs: Self) -> Self {
        Jet {
            val: self.val + rhs.val,
            dot: self.dot + rhs.dot,
        }
    }
}

impl<S: Scalar> Sub for Jet<S> {
    type Output = Self;
    fn sub(self, rhs: Self) -> Self {
        Jet {
            val: self.val - rhs.val,
            dot: self.dot - rhs.dot,
        }
    }
}

impl<S: Scalar> Mul for Jet<S> {
    type Output = Self;
    fn mul(self, rhs: Self) -> Self {
        Jet {
            val: self.val * rhs.val,
            dot: self.dot * rhs.val + self.val * rhs.dot,
        }
    }
}

impl<S: Scalar> Div for Jet<S> {
    type Output = Self;
    fn div(self, rhs: Self) -> Self {
        let val = self.val / rhs.val;
        Jet {
            val,
            dot: (self.dot - val * rhs.dot) / rhs.val,
        }
    }
}

impl<S: Scalar> Neg for Jet<S> {
    type Output = Self;
    fn neg(self) -> Self {
        Jet {
            val: -self.val,
            dot: -self.dot,
        }
    }
}

/// Type-erased evaluation surface of a smooth field: one monomorphic entry
/// per scalar kind in the lifting chain. Implemented for free via [`Smooth`].
pub trait ErasedField: Send + Sync {
    fn dim_in(&self) -> usize;
    fn dim_out(&self) -> usize;
    fn eval_f64(&self, x: &[f64], out: &mut [f64]);
    fn eval_j1(&self, x: &[J1], out: &mut [J1]);
    fn eval_j2(&self, x: &[J2], out: &mut [J2]);
    fn eval_j3(&self, x: &[J3], out: &mut [J3]);
}

/// Type-erased evaluation surface of a k-form routine (point plus k fiber
/// arguments, scalar result).
pub trait ErasedForm: Send + Sync {
    fn degree(&self) -> usize;
    fn dim_base(&self) -> usize;
    fn dim_fiber(&self) -> usize;
    fn eval_f64(&self, x: &[f64], args: &[&[f64]]) -> f64;
    fn eval_j1(&self, x: &[J1], args: &[&[J1]]) -> J1;
    fn eval_j2(&self, x: &[J2], args: &[&[J2]]) -> J2;
    fn eval_j3(&self, x: &[J3], args: &[&[J3]]) -> J3;
}

/// The single generic evaluation contract every field in the crate is written
/// against: one `eval` body, instantiated at each scalar kind.
pub trait Smooth: Send + Sync + 'static {
    fn dim_in(&self) -> usize;
    fn dim_out(&self) -> usize;
    fn eval<S: Scalar>(&self, x: &[S], out: &mut [S]);
}

impl<T: Smooth> ErasedField for T {
    fn dim_in(&self) -> usize {
        Smooth::dim_in(self)
    }
    fn dim_out(&self) -> usize {
        Smooth::dim_out(self)
    }
    fn eval_f64(&self, x: &[f64], out: &mut [f64]) {
        self.eval(x, out)
    }
    fn eval_j1(&self, x: &[J1], out: &mut [J1]) {
        self.eval(x, out)
    }
    fn eval_j2(&self, x: &[J2], out: &mut [J2]) {
        self.eval(x, out)
    }
    fn eval_j3(&self, x: &[J3], out: &mut [J3]) {
        self.eval(x, out)
    }
}

/// Generic contract for k-form evaluation routines; see [`ErasedForm`].
pub trait FormFn: Send + Sync + 'static {
    fn degree(&self) -> usize;
    fn dim_base(&self) -> usize;
    fn dim_fiber(&self) -> usize;
    fn eval<S: Scalar>(&self, x: &[S], args: &[&[S]]) -> S;
}

impl<T: FormFn> ErasedForm for T {
    fn degree(&self) -> usize {
        FormFn::degree(self)
    }
    fn dim_base(&self) -> usize {
        FormFn::dim_base(self)
    }
    fn dim_fiber(&self) -> usize {
        FormFn::dim_fiber(self)
    }
    fn eval_f64(&self, x: &[f64], args: &[&[f64]]) -> f64 {
        self.eval(x, args)
    }
    fn eval_j1(&self, x: &[J1], args: &[&[J1]]) -> J1 {
        self.eval(x, args)
    }
    fn eval_j2(&self, x: &[J2], args: &[&[J2]]) -> J2 {
        self.eval(x, args)
    }
    fn eval_j3(&self, x: &[J3], args: &[&[J3]]) -> J3 {
        self.eval(x, args)
    }
}

/// Scalar kinds on which smooth fields evaluate: plain `f64` or a jet of some
/// depth. `Lift` is the next-deeper kind, used to take one more derivative.
pub trait Scalar:
    Copy
    + std::fmt::Debug
    + PartialEq
    + Send
    + Sync
    + 'static
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
{
    type Lift: Scalar;

    fn zero() -> Self;
    fn one() -> Self;
    fn from_f64(c: f64) -> Self;
    /// The underlying value, all derivative seeds stripped.
    fn real(self) -> f64;

    fn sin(self) -> Self;
    fn cos(self) -> Self;
    fn exp(self) -> Self;

    /// Pair a value with a derivative seed one level up.
    fn lift(val: Self, dot: Self) -> Self::Lift;
    fn val_part(lifted: Self::Lift) -> Self;
    fn dot_part(lifted: Self::Lift) -> Self;

    /// Route a type-erased field evaluation to the entry for this kind.
    fn dispatch_field(field: &dyn ErasedField, x: &[Self], out: &mut [Self]);
    /// Route a type-erased form evaluation to the entry for this kind.
    fn dispatch_form(form: &dyn ErasedForm, x: &[Self], args: &[&[Self]]) -> Self;
}

impl Scalar for f64 {
    type Lift = J1;

    fn zero() -> Self {
        0.0
    }
    fn one() -> Self {
        1.0
    }
    fn from_f64(c: f64) -> Self {
        c
    }
    fn real(self) -> f64 {
        self
    }
    fn sin(self) -> Self {
        f64::sin(self)
    }
    fn cos(self) -> Self {
        f64::cos(self)
    }
    fn exp(self) -> Self {
        f64::exp(self)
    }
    fn lift(val: Self, dot: Self) -> J1 {
        Jet::new(val, dot)
    }
    fn val_part(lifted: J1) -> Self {
        lifted.val
    }
    fn dot_part(lifted: J1) -> Self {
        lifted.dot
    }
    fn dispatch_field(field: &dyn ErasedField, x: &[Self], out: &mut [Self]) {
        field.eval_f64(x, out)
    }
    fn dispatch_form(form: &dyn ErasedForm, x: &[Self], args: &[&[Self]]) -> Self {
        form.eval_f64(x, args)
    }
}

macro_rules! impl_jet_scalar {
    ($ty:ty, $inner:ty, $lift:ty, $field_entry:ident, $form_entry:ident) => {
        impl Scalar for $ty {
            type Lift = $lift;

            fn zero() -> Self {
                Jet::constant(<$inner>::zero())
            }
            fn one() -> Self {
                Jet::constant(<$inner>::one())
            }
            fn from_f64(c: f64) -> Self {
                Jet::constant(<$inner>::from_f64(c))
            }
            fn real(self) -> f64 {
                self.val.real()
            }
            fn sin(self) -> Self {
                Jet::sin(self)
            }
            fn cos(self) -> Self {
                Jet::cos(self)
            }
            fn exp(self) -> Self {
                Jet::exp(self)
            }
            fn lift(val: Self, dot: Self) -> $lift {
                Jet::new(val, dot)
            }
            fn val_part(lifted: $lift) -> Self {
                lifted.val
            }
            fn dot_part(lifted: $lift) -> Self {
                lifted.dot
            }
            fn dispatch_field(field: &dyn ErasedField, x: &[Self], out: &mut [Self]) {
                field.$field_entry(x, out)
            }
            fn dispatch_form(form: &dyn ErasedForm, x: &[Self], args: &[&[Self]]) -> Self {
                form.$form_entry(x, args)
            }
        }
    };
}

impl_jet_scalar!(J1, f64, J2, eval_j1, eval_j1);
impl_jet_scalar!(J2, J1, J3, eval_j2, eval_j2);

// The chain caps at J3: nothing in the crate takes a fourth derivative, and
// capping is what terminates the Lift-chain monomorphization. Lifting past J3
// is a programming error, not a runtime condition.
impl Scalar for J3 {
    type Lift = J3;

    fn zero() -> Self {
        Jet::constant(J2::zero())
    }
    fn one() -> Self {
        Jet::constant(J2::one())
    }
    fn from_f64(c: f64) -> Self {
        Jet::constant(J2::from_f64(c))
    }
    fn real(self) -> f64 {
        self.val.real()
    }
    fn sin(self) -> Self {
        Jet::sin(self)
    }
    fn cos(self) -> Self {
        Jet::cos(self)
    }
    fn exp(self) -> Self {
        Jet::exp(self)
    }
    fn lift(_val: Self, _dot: Self) -> J3 {
        panic!("jet depth exceeded: no formula should differentiate four times")
    }
    fn val_part(_lifted: J3) -> Self {
        panic!("jet depth exceeded: no formula should differentiate four times")
    }
    fn dot_part(_lifted: J3) -> Self {
        panic!("jet depth exceeded: no formula should differentiate four times")
    }
    fn dispatch_field(field: &dyn ErasedField, x: &[Self], out: &mut [Self]) {
        field.eval_j3(x, out)
    }
    fn dispatch_form(form: &dyn ErasedForm, x: &[Self], args: &[&[Self]]) -> Self {
        form.eval_j3(x, args)
    }
}

/// Integer power by repeated multiplication, exact under jet propagation.
pub fn spow<S: Scalar>(x: S, p: u32) -> S {
    let mut acc = S::one();
    for _ in 0..p {
        acc = acc * x;
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn product_rule_on_monomial() {
        // f(t) = t^3 at t=2 seeded with dt=1: value 8, derivative 12.
        let t = J1::new(2.0, 1.0);
        let f = t * t * t;
        assert_eq!(f.val, 8.0);
        assert_eq!(f.dot, 12.0);
    }

    #[test]
    fn quotient_and_chain_rule() {
        // f(t) = sin(t)/t at t=0.7.
        let t0 = 0.7_f64;
        let t = J1::new(t0, 1.0);
        let f = t.sin() / t;
        let expect_val = t0.sin() / t0;
        let expect_dot = (t0.cos() * t0 - t0.sin()) / (t0 * t0);
        assert!((f.val - expect_val).abs() < 1e-15);
        assert!((f.dot - expect_dot).abs() < 1e-15);
    }

    #[test]
    fn nested_jet_gives_second_derivative() {
        // f(t) = t^4: f''(t) = 12 t^2, at t=1.5 → 27.
        let t = J2::new(J1::new(1.5, 1.0), J1::new(1.0, 0.0));
        let f = spow(t, 4);
        assert!((f.dot.dot - 27.0).abs() < 1e-12);
    }

    #[test]
    fn exp_propagates_through_three_levels(
    ) {
        // Third derivative of exp at 0.3 equals exp(0.3).
        let seed1 = J1::new(1.0, 0.0);
        let x = J3::new(
            J2::new(J1::new(0.3, 1.0), seed1),
            J2::new(seed1, J1::new(0.0, 0.0)),
        );
        let f = x.exp();
        assert!((f.dot.dot.dot - 0.3_f64.exp()).abs() < 1e-12);
    }

    #[test]
    #[should_panic(expected = "jet depth exceeded")]
    fn lifting_past_the_cap_panics() {
        let _ = <J3 as Scalar>::lift(J3::zero(), J3::zero());
    }
}
