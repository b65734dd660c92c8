//! Phase coordinates, coprime pairs and constraint residuals.

use std::fmt;

use crate::dynamics;
use crate::error::{Error, Result};
use crate::jet::Scalar;

/// Default on-surface tolerance in max norm.
pub const ON_SURFACE_TOL: f64 = 1e-9;

/// A generic pair `(k, l)` labelling the principal orbit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct CoprimePair {
    k: u32,
    l: u32,
}

fn gcd(mut a: u32, mut b: u32) -> u32 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

/// Checks coprimality and genericity of `(k, l)`.
pub fn validate_pair(k: i64, l: i64) -> Result<CoprimePair> {
    if k < 0 || l < 0 || k > u32::MAX as i64 || l > u32::MAX as i64 {
        return Err(Error::NegativePair { k, l });
    }
    CoprimePair::new(k as u32, l as u32)
}

impl CoprimePair {
    pub fn new(k: u32, l: u32) -> Result<Self> {
        let g = gcd(k, l);
        if g != 1 {
            return Err(Error::NotCoprime { k, l, gcd: g });
        }
        if k == 0 || l == 0 || k == l {
            return Err(Error::Exceptional { k, l });
        }
        Ok(Self { k, l })
    }

    pub fn k(&self) -> u32 {
        self.k
    }

    pub fn l(&self) -> u32 {
        self.l
    }

    /// `k^2 + kl + l^2`.
    pub fn delta(&self) -> u64 {
        let (k, l) = (self.k as u64, self.l as u64);
        k * k + k * l + l * l
    }

    /// `((k+l), l, k) / (2 delta)`, the coefficients of the Spin(7) torsion terms.
    pub fn half_weights(&self) -> [f64; 3] {
        let d2 = 2.0 * self.delta() as f64;
        let (k, l) = (self.k as f64, self.l as f64);
        [(k + l) / d2, l / d2, k / d2]
    }

    /// `((k+l)^2, l^2, k^2) / delta^2`, the coefficients of the quartic terms in `R`.
    pub fn square_weights(&self) -> [f64; 3] {
        let d = self.delta() as f64;
        let (k, l) = (self.k as f64, self.l as f64);
        [(k + l) * (k + l) / (d * d), l * l / (d * d), k * k / (d * d)]
    }
}

impl fmt::Display for CoprimePair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.k, self.l)
    }
}

/// Chirality of the Spin(7) condition.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Branch {
    Plus,
    Minus,
}

impl Branch {
    pub fn sign(self) -> f64 {
        match self {
            Branch::Plus => 1.0,
            Branch::Minus => -1.0,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Branch::Plus => "plus",
            Branch::Minus => "minus",
        }
    }
}

/// Which lens-space fibre collapses on the singular orbit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Orbit {
    KplusL,
    L,
    K,
}

impl Orbit {
    pub const ALL: [Orbit; 3] = [Orbit::KplusL, Orbit::L, Orbit::K];

    /// The integer label `k+l`, `l` or `k`.
    pub fn value(self, pair: &CoprimePair) -> u32 {
        match self {
            Orbit::KplusL => pair.k() + pair.l(),
            Orbit::L => pair.l(),
            Orbit::K => pair.k(),
        }
    }

    /// Zero-based index of the `Z` coordinate that vanishes at the singular orbit.
    pub fn index(self) -> usize {
        match self {
            Orbit::KplusL => 0,
            Orbit::L => 1,
            Orbit::K => 2,
        }
    }

    /// Branch carrying the smooth extension over this orbit.
    pub fn branch(self) -> Branch {
        match self {
            Orbit::KplusL => Branch::Plus,
            Orbit::L | Orbit::K => Branch::Minus,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Orbit::KplusL => "kplusl",
            Orbit::L => "l",
            Orbit::K => "k",
        }
    }

    pub fn parse(s: &str) -> Option<Orbit> {
        match s.to_ascii_lowercase().as_str() {
            "kplusl" | "k+l" => Some(Orbit::KplusL),
            "l" => Some(Orbit::L),
            "k" => Some(Orbit::K),
            _ => None,
        }
    }
}

/// A point `(X1..X4, Z1..Z4)` of the eight-dimensional phase space.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PhasePoint {
    pub x: [f64; 4],
    pub z: [f64; 4],
}

impl PhasePoint {
    pub fn new(x: [f64; 4], z: [f64; 4]) -> Self {
        Self { x, z }
    }

    pub fn from_array(a: [f64; 8]) -> Self {
        Self {
            x: [a[0], a[1], a[2], a[3]],
            z: [a[4], a[5], a[6], a[7]],
        }
    }

    pub fn to_array(&self) -> [f64; 8] {
        [
            self.x[0], self.x[1], self.x[2], self.x[3], self.z[0], self.z[1], self.z[2], self.z[3],
        ]
    }

    pub fn inf_norm(&self) -> f64 {
        self.to_array().iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn distance(&self, other: &PhasePoint) -> f64 {
        let a = self.to_array();
        let b = other.to_array();
        a.iter().zip(b.iter()).map(|(u, v)| (u - v) * (u - v)).sum::<f64>().sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|v| v.is_finite())
    }

    /// `Z1 + Z2 + Z3`.
    pub fn z_sum(&self) -> f64 {
        self.z[0] + self.z[1] + self.z[2]
    }
}

impl fmt::Display for PhasePoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let a = self.to_array();
        write!(f, "(")?;
        for (i, v) in a.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{v:.12}")?;
        }
        write!(f, ")")
    }
}

/// Constraint defects at a point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResidualReport {
    pub conservation: f64,
    pub trace: f64,
    pub spin7: [f64; 4],
    pub zsum: f64,
    /// Magnitude of the largest monomials involved; divides the residuals in [`relative_norm`](Self::relative_norm).
    pub scale: f64,
}

impl ResidualReport {
    pub fn max_norm(&self) -> f64 {
        let mut m = self.conservation.abs().max(self.trace.abs()).max(self.zsum.abs());
        for s in self.spin7 {
            m = m.max(s.abs());
        }
        m
    }

    /// Max norm measured against the size of the terms that cancel.
    pub fn relative_norm(&self) -> f64 {
        self.max_norm() / self.scale
    }

    pub fn on_surface(&self, tol: f64) -> bool {
        self.max_norm() <= tol
    }
}

/// `2X1 + 2X2 + 2X3 + X4 - 1`.
pub fn trace_expr<T: Scalar>(x: &[T; 4]) -> T {
    (x[0] + x[1] + x[2]).scale(2.0) + x[3] - T::constant(1.0)
}

/// `G - 1 + 2R1 + 2R2 + 2R3 + R4`.
pub fn conservation_expr<T: Scalar>(p: &[T; 8], pair: &CoprimePair) -> T {
    let x = [p[0], p[1], p[2], p[3]];
    let z = [p[4], p[5], p[6], p[7]];
    let g = dynamics::g_of(&x);
    let r = dynamics::r_of(&z, pair);
    g - T::constant(1.0) + (r[0] + r[1] + r[2]).scale(2.0) + r[3]
}

/// `2(Z1 + Z2 + Z3) - X4 - 1`.
pub fn zsum_expr<T: Scalar>(p: &[T; 8]) -> T {
    (p[4] + p[5] + p[6]).scale(2.0) - p[3] - T::constant(1.0)
}

/// `((k+l) Z2 Z3 - l Z1 Z3 - k Z1 Z2) / (2 delta)`.
pub fn torsion<T: Scalar>(z: &[T; 4], pair: &CoprimePair) -> T {
    let w = pair.half_weights();
    (z[1] * z[2]).scale(w[0]) - (z[0] * z[2]).scale(w[1]) - (z[0] * z[1]).scale(w[2])
}

/// The `X` coordinates forced by the Spin(7) condition of the given chirality.
pub fn spin7_x<T: Scalar>(z: &[T; 4], pair: &CoprimePair, branch: Branch) -> [T; 4] {
    let s = branch.sign();
    let w = pair.half_weights();
    [
        z[1] + z[2] - z[0] - (z[1] * z[2] * z[3]).scale(s * w[0]),
        z[2] + z[0] - z[1] + (z[0] * z[2] * z[3]).scale(s * w[1]),
        z[0] + z[1] - z[2] + (z[0] * z[1] * z[3]).scale(s * w[2]),
        (torsion(z, pair) * z[3]).scale(s),
    ]
}

/// Evaluates every constraint at `p`; never fails.
pub fn residuals(p: &PhasePoint, pair: &CoprimePair, branch: Branch) -> ResidualReport {
    let a = p.to_array();
    let conservation = conservation_expr(&a, pair);
    let trace = trace_expr(&p.x);
    let sx = spin7_x(&p.z, pair, branch);
    let spin7 = [p.x[0] - sx[0], p.x[1] - sx[1], p.x[2] - sx[2], p.x[3] - sx[3]];
    let zsum = zsum_expr(&a);
    let m = p.inf_norm();
    let g = dynamics::eval_g(p);
    let r4 = dynamics::eval_r(p, pair)[3];
    let scale = 1.0 + g + m * m + r4.abs();
    ResidualReport {
        conservation,
        trace,
        spin7,
        zsum,
        scale,
    }
}

/// Restores the trace identity by an affine shift of `X` along `(2, 2, 2, 1)`.
pub fn project_trace(p: &PhasePoint) -> PhasePoint {
    let c = -trace_expr(&p.x) / 13.0;
    PhasePoint::new(
        [p.x[0] + 2.0 * c, p.x[1] + 2.0 * c, p.x[2] + 2.0 * c, p.x[3] + c],
        p.z,
    )
}

/// Moves `p` onto the Spin(7) surface of `branch`.
///
/// `Z` is corrected multiplicatively so that `2(Z1+Z2+Z3) - X4(Z) = 1`, which keeps
/// vanishing coordinates at zero and positive ones positive; `X` is then recomputed
/// from `Z`. On the resulting point the trace and conservation constraints hold
/// identically.
pub fn project_full(p: &PhasePoint, pair: &CoprimePair, branch: Branch) -> PhasePoint {
    let s = branch.sign();
    let w = pair.half_weights();
    let mut z = p.z;
    for _ in 0..4 {
        let x4 = spin7_x(&z, pair, branch)[3];
        let h = 2.0 * (z[0] + z[1] + z[2]) - x4 - 1.0;
        if h == 0.0 {
            break;
        }
        let dx4 = [
            s * (-w[1] * z[2] - w[2] * z[1]) * z[3],
            s * (w[0] * z[2] - w[2] * z[0]) * z[3],
            s * (w[0] * z[1] - w[1] * z[0]) * z[3],
            s * torsion(&z, pair),
        ];
        let grad = [2.0 - dx4[0], 2.0 - dx4[1], 2.0 - dx4[2], -dx4[3]];
        let wg: [f64; 4] = std::array::from_fn(|j| z[j] * grad[j]);
        let n2: f64 = wg.iter().map(|v| v * v).sum();
        if n2 == 0.0 || !n2.is_finite() {
            break;
        }
        for j in 0..4 {
            z[j] *= (-h * wg[j] / n2).exp();
        }
    }
    PhasePoint::new(spin7_x(&z, pair, branch), z)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p21() -> CoprimePair {
        validate_pair(2, 1).unwrap()
    }

    #[test]
    fn pair_validation() {
        assert_eq!(p21().delta(), 7);
        assert!(matches!(validate_pair(1, 1), Err(Error::Exceptional { .. })));
        assert!(matches!(validate_pair(1, 0), Err(Error::Exceptional { .. })));
        assert!(matches!(validate_pair(0, 1), Err(Error::Exceptional { .. })));
        assert!(matches!(validate_pair(4, 2), Err(Error::NotCoprime { gcd: 2, .. })));
        assert!(matches!(validate_pair(-1, 2), Err(Error::NegativePair { .. })));
        assert_eq!(validate_pair(1, 2).unwrap().delta(), 7);
        assert_eq!(validate_pair(5, 2).unwrap().delta(), 39);
    }

    #[test]
    fn exceptional_message_names_pairs() {
        let msg = validate_pair(1, 1).unwrap_err().to_string();
        assert!(msg.contains("(1,0)") && msg.contains("(0,1)") && msg.contains("(1,1)"));
    }

    #[test]
    fn residuals_at_type1_point() {
        let p = PhasePoint::new([1. / 3., 0., 0., 1. / 3.], [0., 1. / 3., 1. / 3., 14.0]);
        let r = residuals(&p, &p21(), Branch::Plus);
        assert!(r.max_norm() < 1e-14, "{r:?}");
    }

    #[test]
    fn residuals_at_alc_point_both_branches() {
        let s = 1.0 / 6.0;
        let p = PhasePoint::new([s, s, s, 0.], [s, s, s, 0.]);
        for b in [Branch::Plus, Branch::Minus] {
            assert!(residuals(&p, &p21(), b).max_norm() < 1e-15);
        }
    }

    #[test]
    fn residuals_at_origin() {
        let r = residuals(&PhasePoint::default(), &p21(), Branch::Plus);
        assert_eq!(r.conservation, -1.0);
        assert_eq!(r.trace, -1.0);
    }

    #[test]
    fn residuals_are_deterministic() {
        let p = PhasePoint::from_array([0.1, -0.3, 0.7, 0.2, 0.4, 0.05, 0.9, 3.0]);
        let a = residuals(&p, &p21(), Branch::Minus);
        let b = residuals(&p, &p21(), Branch::Minus);
        assert_eq!(a.conservation.to_bits(), b.conservation.to_bits());
        assert_eq!(a.spin7.map(f64::to_bits), b.spin7.map(f64::to_bits));
    }

    #[test]
    fn trace_projection_restores_identity() {
        let p = PhasePoint::from_array([0.3, 0.1, -0.2, 0.9, 0.1, 0.1, 0.1, 1.0]);
        let q = project_trace(&p);
        assert!(trace_expr(&q.x).abs() < 1e-15);
        assert_eq!(q.z, p.z);
    }

    #[test]
    fn full_projection_lands_on_surface() {
        let pair = p21();
        let p = PhasePoint::new([0.3, 0.01, 0.02, 0.3], [0.01, 0.33, 0.34, 13.9]);
        let q = project_full(&p, &pair, Branch::Plus);
        let r = residuals(&q, &pair, Branch::Plus);
        assert!(r.max_norm() < 1e-12, "{r:?}");
    }

    #[test]
    fn full_projection_keeps_zero_planes() {
        let pair = p21();
        let p = PhasePoint::new([0.3, 0.0, 0.0, 0.3], [0.0, 0.34, 0.33, 14.1]);
        let q = project_full(&p, &pair, Branch::Plus);
        assert_eq!(q.z[0], 0.0);
        assert!(residuals(&q, &pair, Branch::Plus).max_norm() < 1e-12);
    }
}
