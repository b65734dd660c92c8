//! Truncated Taylor arithmetic used to differentiate the field exactly.

use std::ops::{Add, Mul, Neg, Sub};

/// Minimal ring interface shared by `f64` and [`Jet2`].
pub trait Scalar:
    Copy + Add<Output = Self> + Sub<Output = Self> + Mul<Output = Self> + Neg<Output = Self>
{
    fn constant(c: f64) -> Self;

    fn scale(self, c: f64) -> Self {
        self * Self::constant(c)
    }
}

impl Scalar for f64 {
    fn constant(c: f64) -> Self {
        c
    }

    fn scale(self, c: f64) -> Self {
        self * c
    }
}

/// `a0 + a1 s + a2 s^2 (mod s^3)`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Jet2 {
    pub a0: f64,
    pub a1: f64,
    pub a2: f64,
}

impl Jet2 {
    pub fn new(a0: f64, a1: f64, a2: f64) -> Self {
        Self { a0, a1, a2 }
    }

    /// The line `base + s * dir` evaluated componentwise.
    pub fn line<const N: usize>(base: &[f64; N], dir: &[f64; N]) -> [Jet2; N] {
        std::array::from_fn(|i| Jet2::new(base[i], dir[i], 0.0))
    }
}

impl Add for Jet2 {
    type Output = Jet2;
    fn add(self, o: Jet2) -> Jet2 {
        Jet2::new(self.a0 + o.a0, self.a1 + o.a1, self.a2 + o.a2)
    }
}

impl Sub for Jet2 {
    type Output = Jet2;
    fn sub(self, o: Jet2) -> Jet2 {
        Jet2::new(self.a0 - o.a0, self.a1 - o.a1, self.a2 - o.a2)
    }
}

impl Mul for Jet2 {
    type Output = Jet2;
    fn mul(self, o: Jet2) -> Jet2 {
        Jet2::new(
            self.a0 * o.a0,
            self.a0 * o.a1 + self.a1 * o.a0,
            self.a0 * o.a2 + self.a1 * o.a1 + self.a2 * o.a0,
        )
    }
}

impl Neg for Jet2 {
    type Output = Jet2;
    fn neg(self) -> Jet2 {
        Jet2::new(-self.a0, -self.a1, -self.a2)
    }
}

impl Scalar for Jet2 {
    fn constant(c: f64) -> Self {
        Jet2::new(c, 0.0, 0.0)
    }

    fn scale(self, c: f64) -> Self {
        Jet2::new(self.a0 * c, self.a1 * c, self.a2 * c)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cube_of_line() {
        // (2 + s)^3 = 8 + 12 s + 6 s^2 + ...
        let x = Jet2::new(2.0, 1.0, 0.0);
        let y = x * x * x;
        assert_eq!(y, Jet2::new(8.0, 12.0, 6.0));
    }

    #[test]
    fn ring_ops() {
        let a = Jet2::new(1.0, 2.0, 3.0);
        let b = Jet2::new(-1.0, 0.5, 4.0);
        assert_eq!(a + b - b, a);
        assert_eq!(-a + a, Jet2::default());
        assert_eq!(a.scale(2.0), a + a);
    }
}
