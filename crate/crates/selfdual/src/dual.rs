//! Forward-mode automatic differentiation by nested dual numbers.
//!
//! `Dual<T>` carries a value and one directional derivative. Nesting
//! `Dual<Dual<f64>>` seeds two directions and exposes the mixed second
//! derivative in `eps.eps`; deeper nesting gives higher orders. All field
//! code is written against [`Scalar`] so the same function body serves
//! plain evaluation and every derivative order.

use std::fmt::Debug;
use std::ops::{Add, AddAssign, Div, Mul, MulAssign, Neg, Sub, SubAssign};

/// Real scalar usable inside differentiable coefficient code.
pub trait Scalar:
    Copy
    + Debug
    + PartialEq
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + AddAssign
    + SubAssign
    + MulAssign
    + Send
    + Sync
    + 'static
{
    fn from_f64(v: f64) -> Self;
    /// The primal (underlying real) value.
    fn value(&self) -> f64;
    fn exp(self) -> Self;
    fn ln(self) -> Self;
    fn sqrt(self) -> Self;

    fn zero() -> Self {
        Self::from_f64(0.0)
    }
    fn one() -> Self {
        Self::from_f64(1.0)
    }
    fn scale(self, c: f64) -> Self {
        self * Self::from_f64(c)
    }
    fn powi(self, k: u32) -> Self {
        let mut acc = Self::one();
        let mut base = self;
        let mut e = k;
        while e > 0 {
            if e & 1 == 1 {
                acc *= base;
            }
            e >>= 1;
            if e > 0 {
                base = base * base;
            }
        }
        acc
    }
}

impl Scalar for f64 {
    fn from_f64(v: f64) -> Self {
        v
    }
    fn value(&self) -> f64 {
        *self
    }
    fn exp(self) -> Self {
        f64::exp(self)
    }
    fn ln(self) -> Self {
        f64::ln(self)
    }
    fn sqrt(self) -> Self {
        f64::sqrt(self)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Dual<T> {
    pub re: T,
    pub eps: T,
}

impl<T: Scalar> Dual<T> {
    pub fn new(re: T, eps: T) -> Self {
        Dual { re, eps }
    }
    pub fn constant(re: T) -> Self {
        Dual { re, eps: T::zero() }
    }
    /// Independent variable with unit seed.
    pub fn variable(re: T) -> Self {
        Dual { re, eps: T::one() }
    }
}

impl<T: Scalar> Add for Dual<T> {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        Dual::new(self.re + o.re, self.eps + o.eps)
    }
}
impl<T: Scalar> Sub for Dual<T> {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        Dual::new(self.re - o.re, self.eps - o.eps)
    }
}
impl<T: Scalar> Mul for Dual<T> {
    type Output = Self;
    fn mul(self, o: Self) -> Self {
        Dual::new(self.re * o.re, self.re * o.eps + self.eps * o.re)
    }
}
impl<T: Scalar> Div for Dual<T> {
    type Output = Self;
    fn div(self, o: Self) -> Self {
        let inv = T::one() / o.re;
        let q = self.re * inv;
        Dual::new(q, (self.eps - q * o.eps) * inv)
    }
}
impl<T: Scalar> Neg for Dual<T> {
    type Output = Self;
    fn neg(self) -> Self {
        Dual::new(-self.re, -self.eps)
    }
}
impl<T: Scalar> AddAssign for Dual<T> {
    fn add_assign(&mut self, o: Self) {
        *self = *self + o;
    }
}
impl<T: Scalar> SubAssign for Dual<T> {
    fn sub_assign(&mut self, o: Self) {
        *self = *self - o;
    }
}
impl<T: Scalar> MulAssign for Dual<T> {
    fn mul_assign(&mut self, o: Self) {
        *self = *self * o;
    }
}

impl<T: Scalar> Scalar for Dual<T> {
    fn from_f64(v: f64) -> Self {
        Dual::constant(T::from_f64(v))
    }
    fn value(&self) -> f64 {
        self.re.value()
    }
    fn exp(self) -> Self {
        let e = self.re.exp();
        Dual::new(e, e * self.eps)
    }
    fn ln(self) -> Self {
        Dual::new(self.re.ln(), self.eps / self.re)
    }
    fn sqrt(self) -> Self {
        let s = self.re.sqrt();
        Dual::new(s, self.eps / (s + s))
    }
    fn scale(self, c: f64) -> Self {
        Dual::new(self.re.scale(c), self.eps.scale(c))
    }
}

/// Lift a slice of plain values into constants of any scalar type.
pub fn lift<T: Scalar>(p: &[f64]) -> Vec<T> {
    p.iter().map(|&v| T::from_f64(v)).collect()
}

/// Seed direction `axis` on top of a point whose entries are already of type `T`.
pub fn seed<T: Scalar>(p: &[T], axis: usize) -> Vec<Dual<T>> {
    p.iter()
        .enumerate()
        .map(|(k, &v)| {
            if k == axis {
                Dual::variable(v)
            } else {
                Dual::constant(v)
            }
        })
        .collect()
}

/// Gradient of `f` at `p` by one forward sweep per axis.
pub fn gradient<F>(p: &[f64], f: F) -> Vec<f64>
where
    F: Fn(&[Dual<f64>]) -> Dual<f64>,
{
    (0..p.len()).map(|a| f(&seed(p, a)).eps).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cubic<T: Scalar>(x: T) -> T {
        x * x * x + x.scale(2.0)
    }

    #[test]
    fn first_and_second_derivatives() {
        let x = Dual::variable(1.5);
        let y = cubic(x);
        assert!((y.re - (3.375 + 3.0)).abs() < 1e-15);
        assert!((y.eps - (3.0 * 2.25 + 2.0)).abs() < 1e-14);

        let xx: Dual<Dual<f64>> = Dual::new(Dual::variable(1.5), Dual::constant(1.0));
        let yy = cubic(xx);
        assert!((yy.eps.eps - 9.0).abs() < 1e-14);
    }

    #[test]
    fn transcendental_rules() {
        let x = Dual::variable(0.7_f64);
        assert!((x.exp().eps - 0.7_f64.exp()).abs() < 1e-15);
        assert!((x.ln().eps - 1.0 / 0.7).abs() < 1e-14);
        assert!((x.sqrt().eps - 0.5 / 0.7_f64.sqrt()).abs() < 1e-15);
        assert!(((x / (x + Dual::from_f64(1.0))).eps - 1.0 / 1.7_f64.powi(2)).abs() < 1e-15);
    }

    #[test]
    fn powi_matches_repeated_product() {
        let x = Dual::variable(1.1_f64);
        let p = x.powi(5);
        assert!((p.re - 1.1_f64.powi(5)).abs() < 1e-14);
        assert!((p.eps - 5.0 * 1.1_f64.powi(4)).abs() < 1e-13);
        assert_eq!(x.powi(0).re, 1.0);
    }
}
