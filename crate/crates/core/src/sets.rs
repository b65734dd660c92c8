//! Named regions of phase space, their membership margins, and the polynomials
//! that control the flow across their boundaries.

use crate::dynamics;
use crate::error::{Error, Result};
use crate::phase::{residuals, Branch, CoprimePair, Orbit, PhasePoint};

/// Slack allowed below zero before a margin counts as outside.
pub const MEMBER_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SetId {
    CRF,
    CSpinPlus,
    CSpinMinus,
    CG2,
    DPlus,
    DMinus,
    BPlus,
    BMinus,
    APlus,
    AMinus,
    W(Orbit),
}

impl SetId {
    /// The Spin(7) branch the set lives on, if it lives on exactly one.
    pub fn branch(self) -> Option<Branch> {
        match self {
            SetId::CSpinPlus | SetId::DPlus | SetId::BPlus | SetId::APlus => Some(Branch::Plus),
            SetId::CSpinMinus | SetId::DMinus | SetId::BMinus | SetId::AMinus => Some(Branch::Minus),
            SetId::W(o) => Some(o.branch()),
            SetId::CRF | SetId::CG2 => None,
        }
    }

    pub fn d_set(branch: Branch) -> SetId {
        match branch {
            Branch::Plus => SetId::DPlus,
            Branch::Minus => SetId::DMinus,
        }
    }

    pub fn b_set(branch: Branch) -> SetId {
        match branch {
            Branch::Plus => SetId::BPlus,
            Branch::Minus => SetId::BMinus,
        }
    }

    pub fn name(self) -> String {
        match self {
            SetId::CRF => "CRF".into(),
            SetId::CSpinPlus => "CSpinPlus".into(),
            SetId::CSpinMinus => "CSpinMinus".into(),
            SetId::CG2 => "CG2".into(),
            SetId::DPlus => "DPlus".into(),
            SetId::DMinus => "DMinus".into(),
            SetId::BPlus => "BPlus".into(),
            SetId::BMinus => "BMinus".into(),
            SetId::APlus => "APlus".into(),
            SetId::AMinus => "AMinus".into(),
            SetId::W(o) => format!("W[{}]", o.name()),
        }
    }

    pub fn parse(s: &str) -> Option<SetId> {
        Some(match s {
            "CRF" => SetId::CRF,
            "CSpinPlus" => SetId::CSpinPlus,
            "CSpinMinus" => SetId::CSpinMinus,
            "CG2" => SetId::CG2,
            "DPlus" => SetId::DPlus,
            "DMinus" => SetId::DMinus,
            "BPlus" => SetId::BPlus,
            "BMinus" => SetId::BMinus,
            "APlus" => SetId::APlus,
            "AMinus" => SetId::AMinus,
            _ => {
                let inner = s.strip_prefix("W[")?.strip_suffix(']')?;
                SetId::W(Orbit::parse(inner)?)
            }
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Membership {
    pub inside: bool,
    pub margin: f64,
}

impl Membership {
    fn from_margin(margin: f64, tol: f64) -> Self {
        Self {
            inside: margin >= -tol,
            margin,
        }
    }
}

/// `(k sqrt(Z1 Z2) + l sqrt(Z1 Z3) + (k+l) sqrt(Z2 Z3)) Z4`.
pub fn fiber_weight(p: &PhasePoint, pair: &CoprimePair) -> Result<f64> {
    for (j, &z) in p.z.iter().enumerate() {
        if z < -MEMBER_TOL {
            return Err(Error::DomainError {
                what: ["Z1", "Z2", "Z3", "Z4"][j],
                value: z,
            });
        }
    }
    Ok(fiber_weight_unchecked(p, pair))
}

fn fiber_weight_unchecked(p: &PhasePoint, pair: &CoprimePair) -> f64 {
    let z: [f64; 4] = p.z.map(|v| v.max(0.0));
    let (k, l) = (pair.k() as f64, pair.l() as f64);
    (k * (z[0] * z[1]).sqrt() + l * (z[0] * z[2]).sqrt() + (k + l) * (z[1] * z[2]).sqrt()) * z[3]
}

/// Rate of change of [`fiber_weight`] along the flow.
pub fn fiber_weight_rate(p: &PhasePoint, pair: &CoprimePair) -> f64 {
    let z: [f64; 4] = p.z.map(|v| v.max(0.0));
    let x = p.x;
    let (k, l) = (pair.k() as f64, pair.l() as f64);
    z[3] * (k * (z[0] * z[1]).sqrt() * (x[3] - x[2])
        + l * (z[0] * z[2]).sqrt() * (x[3] - x[1])
        + (k + l) * (z[1] * z[2]).sqrt() * (x[3] - x[0]))
}

/// The same rate on `{fiber_weight = 2 delta}` of the given branch, assembled from
/// the `Xi` (plus) or `Theta` (minus) polynomials in the square-root ratios
/// `sqrt(Z2/Z1)`, `sqrt(Z3/Z1)`.
pub fn fiber_weight_rate_on_boundary(p: &PhasePoint, pair: &CoprimePair, branch: Branch) -> f64 {
    let (k, l) = (pair.k() as f64, pair.l() as f64);
    let z1 = p.z[0];
    let a = (p.z[1] / z1).sqrt();
    let b = (p.z[2] / z1).sqrt();
    let zeta = z1 * p.z[3];
    let polys = match branch {
        Branch::Plus => xi_polys(a, b),
        Branch::Minus => theta_polys(a, b),
    };
    let den = k * a + l * b + (k + l) * a * b;
    z1 * zeta / den * (-b * b * polys[0] * l * l - a * b * polys[1] * k * l - a * a * polys[2] * k * k)
}

/// `X4 - X1 - X2 - X3`.
pub fn b_gap(p: &PhasePoint) -> f64 {
    p.x[3] - p.x[0] - p.x[1] - p.x[2]
}

/// Rate of change of [`b_gap`] along the flow.
pub fn b_gap_rate(p: &PhasePoint, pair: &CoprimePair) -> f64 {
    let f = dynamics::vector_field(p, pair).derivative;
    f[3] - f[0] - f[1] - f[2]
}

/// `2 Phi / ((k+l) Z2 Z3 - l Z1 Z3 - k Z1 Z2)^2`, the rate of [`b_gap`] on `{b_gap = 0}`.
pub fn b_gap_rate_on_boundary(p: &PhasePoint, pair: &CoprimePair) -> f64 {
    let (k, l) = (pair.k() as f64, pair.l() as f64);
    let [z1, z2, z3, _] = p.z;
    let w = (k + l) * z2 * z3 - l * z1 * z3 - k * z1 * z2;
    2.0 * phi_polys(z1, z2, z3, pair).phi / (w * w)
}

/// `(Xi0, Xi1, Xi2)` in square-root ratios.
pub fn xi_polys(a: f64, b: f64) -> [f64; 3] {
    let xi0 = |a: f64, b: f64| {
        (a + 1.0).powi(2) * b * b + (1.0 - a) * (2.0 * a * a + 3.0 * a + 2.0) * b + (a * a - 1.0).powi(2)
    };
    let xi1 = 2.0 * a * b * (a - b).powi(2)
        + (a + b) * (2.0 * a * a - 3.0 * a * b + 2.0 * b * b)
        + (a - b).powi(2)
        + a
        + b
        + 2.0;
    [xi0(a, b), xi1, xi0(b, a)]
}

/// `(Theta0, Theta1, Theta2)` in square-root ratios.
pub fn theta_polys(a: f64, b: f64) -> [f64; 3] {
    let t0 = |a: f64, b: f64| {
        (a + 1.0).powi(2) * b * b + (a - 1.0) * (2.0 * a * a + 3.0 * a + 2.0) * b + (a * a - 1.0).powi(2)
    };
    let s = a + b;
    let t1 = 2.0 * a * b * s * s + s * (2.0 * a * a - a * b + 2.0 * b * b) - s * s - s + 2.0;
    [t0(a, b), t1, t0(b, a)]
}

/// Discriminant of `Xi0` as a quadratic in its second argument.
pub fn xi0_discriminant(a: f64) -> f64 {
    let c2 = (a + 1.0).powi(2);
    let c1 = (1.0 - a) * (2.0 * a * a + 3.0 * a + 2.0);
    let c0 = (a * a - 1.0).powi(2);
    c1 * c1 - 4.0 * c2 * c0
}

/// Closed form `-a (a-1)^2 (4a^2 + 7a + 4)` of [`xi0_discriminant`].
pub fn xi0_discriminant_closed(a: f64) -> f64 {
    -a * (a - 1.0).powi(2) * (4.0 * a * a + 7.0 * a + 4.0)
}

/// The quartic with `Phi2 = Z3^6 phi2(Z1/Z3, Z2/Z3)`.
pub fn phi2(a: f64, b: f64) -> f64 {
    a.powi(4) - 3.0 * a.powi(3) * b - 2.0 * a.powi(3) + 8.0 * a * a * b * b + 4.0 * a * a * b + a * a
        - 3.0 * a * b.powi(3)
        + 4.0 * a * b * b
        - a * b
        + b.powi(4)
        - 2.0 * b.powi(3)
        + b * b
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhiValues {
    pub phi0: f64,
    pub phi1: f64,
    pub phi2: f64,
    pub phi: f64,
    /// `phi1^2 - 4 phi0 phi2`.
    pub delta: f64,
    /// The factored form the discriminant is expected to equal.
    pub delta_closed: f64,
}

pub fn phi_polys(z1: f64, z2: f64, z3: f64, pair: &CoprimePair) -> PhiValues {
    let (k, l) = (pair.k() as f64, pair.l() as f64);
    let p = |a: f64, e: i32| a.powi(e);
    let phi2 = p(z1, 4) * p(z3, 2) - 3.0 * p(z1, 3) * z2 * p(z3, 2) - 2.0 * p(z1, 3) * p(z3, 3)
        + 8.0 * p(z1, 2) * p(z2, 2) * p(z3, 2)
        + 4.0 * p(z1, 2) * z2 * p(z3, 3)
        + p(z1, 2) * p(z3, 4)
        - 3.0 * z1 * p(z2, 3) * p(z3, 2)
        + 4.0 * z1 * p(z2, 2) * p(z3, 3)
        - z1 * z2 * p(z3, 4)
        + p(z2, 4) * p(z3, 2)
        - 2.0 * p(z2, 3) * p(z3, 3)
        + p(z2, 2) * p(z3, 4);
    let phi1 = p(z1, 4) * z2 * z3 - 7.0 * p(z1, 3) * p(z2, 2) * z3 - 7.0 * p(z1, 3) * z2 * p(z3, 2)
        + 7.0 * p(z1, 2) * p(z2, 3) * z3
        + 8.0 * p(z1, 2) * p(z2, 2) * p(z3, 2)
        + 7.0 * p(z1, 2) * z2 * p(z3, 3)
        - z1 * p(z2, 4) * z3
        + z1 * p(z2, 3) * p(z3, 2)
        + z1 * p(z2, 2) * p(z3, 3)
        - z1 * z2 * p(z3, 4)
        + 2.0 * p(z2, 4) * p(z3, 2)
        - 4.0 * p(z2, 3) * p(z3, 3)
        + 2.0 * p(z2, 2) * p(z3, 4);
    let phi0 = p(z1, 4) * p(z2, 2) - 2.0 * p(z1, 3) * p(z2, 3) - 3.0 * p(z1, 3) * p(z2, 2) * z3
        + p(z1, 2) * p(z2, 4)
        + 4.0 * p(z1, 2) * p(z2, 3) * z3
        + 8.0 * p(z1, 2) * p(z2, 2) * p(z3, 2)
        - z1 * p(z2, 4) * z3
        + 4.0 * z1 * p(z2, 3) * p(z3, 2)
        - 3.0 * z1 * p(z2, 2) * p(z3, 3)
        + p(z2, 4) * p(z3, 2)
        - 2.0 * p(z2, 3) * p(z3, 3)
        + p(z2, 2) * p(z3, 4);
    let s = z1 + z2 + z3;
    let q = z1 * z1 + z2 * z2 + z3 * z3 - 2.0 * z2 * z3 - 2.0 * z1 * z3 - 2.0 * z1 * z2;
    PhiValues {
        phi0,
        phi1,
        phi2,
        phi: phi2 * l * l + phi1 * k * l + phi0 * k * k,
        delta: phi1 * phi1 - 4.0 * phi0 * phi2,
        delta_closed: -3.0 * p(z1 * z2 * z3, 2) * s * s * q * q,
    }
}

/// `cos(xi) Z3 (Z2 - Z1) - sin(xi) Z2 (Z3 - Z1)`, constant zero along each
/// trajectory of the G2 family labelled by `xi`.
pub fn g2_curve_residual(p: &PhasePoint, xi: f64) -> f64 {
    let [z1, z2, z3, _] = p.z;
    xi.cos() * z3 * (z2 - z1) - xi.sin() * z2 * (z3 - z1)
}

/// The seven relations cutting out the degenerate curve over `orbit`, as defects.
///
/// With `i` the collapsing index and `j < m` the other two: `X_j = X_m = 0`,
/// `X_i = 1 - 2 Z_j`, `X4 = 4 Z_j - 1`, `Z_j = Z_m`, `Z_i = 0` and
/// `Z4 = 2 delta / label * (4 Z_j - 1) / Z_j^2`.
pub fn w_curve_residuals(p: &PhasePoint, pair: &CoprimePair, orbit: Orbit) -> [f64; 7] {
    let i = orbit.index();
    let others: Vec<usize> = (0..3).filter(|&t| t != i).collect();
    let (j, m) = (others[0], others[1]);
    let zj = p.z[j];
    let label = orbit.value(pair) as f64;
    let d = pair.delta() as f64;
    let z4 = 2.0 * d / label * (4.0 * zj - 1.0) / (zj * zj);
    [
        p.x[j],
        p.x[m],
        p.x[i] - (1.0 - 2.0 * zj),
        p.x[3] - (4.0 * zj - 1.0),
        p.z[j] - p.z[m],
        p.z[i],
        (p.z[3] - z4) / (1.0 + z4.abs()),
    ]
}

fn crf_parts(p: &PhasePoint, pair: &CoprimePair, eqs: &mut Vec<f64>, ineqs: &mut Vec<f64>) {
    let r = residuals(p, pair, Branch::Plus);
    eqs.push(r.conservation);
    eqs.push(r.trace);
    ineqs.extend_from_slice(&p.z);
    ineqs.push(p.x[3]);
}

fn spin_parts(p: &PhasePoint, pair: &CoprimePair, b: Branch, eqs: &mut Vec<f64>) {
    let r = residuals(p, pair, b);
    eqs.extend_from_slice(&r.spin7);
    eqs.push(r.zsum);
}

/// Equality defects and inequality slacks (`>= 0` inside) of a set.
fn parts(p: &PhasePoint, id: SetId, pair: &CoprimePair) -> (Vec<f64>, Vec<f64>) {
    let mut eqs = Vec::with_capacity(12);
    let mut ineqs = Vec::with_capacity(8);
    crf_parts(p, pair, &mut eqs, &mut ineqs);
    let two_delta = 2.0 * pair.delta() as f64;
    let fw = || fiber_weight_unchecked(p, pair);
    match id {
        SetId::CRF => {}
        SetId::CSpinPlus => spin_parts(p, pair, Branch::Plus, &mut eqs),
        SetId::CSpinMinus => spin_parts(p, pair, Branch::Minus, &mut eqs),
        SetId::CG2 => {
            spin_parts(p, pair, Branch::Plus, &mut eqs);
            spin_parts(p, pair, Branch::Minus, &mut eqs);
            eqs.push(p.x[3]);
            eqs.push(p.z[3]);
        }
        SetId::DPlus => {
            spin_parts(p, pair, Branch::Plus, &mut eqs);
            ineqs.push(p.z[1] - p.z[0]);
            ineqs.push(p.z[2] - p.z[0]);
            ineqs.push((two_delta - fw()) / two_delta);
        }
        SetId::DMinus => {
            spin_parts(p, pair, Branch::Minus, &mut eqs);
            ineqs.push(p.z[0] - p.z[1]);
            ineqs.push(p.z[0] - p.z[2]);
            ineqs.push((two_delta - fw()) / two_delta);
        }
        SetId::BPlus | SetId::BMinus => {
            spin_parts(p, pair, id.branch().unwrap(), &mut eqs);
            ineqs.push(b_gap(p));
        }
        SetId::APlus | SetId::AMinus => {
            spin_parts(p, pair, id.branch().unwrap(), &mut eqs);
            ineqs.push((fw() - two_delta) / two_delta);
            ineqs.push(2.0 / 3.0 - p.z_sum());
        }
        SetId::W(o) => {
            spin_parts(p, pair, o.branch(), &mut eqs);
            eqs.extend_from_slice(&w_curve_residuals(p, pair, o));
        }
    }
    (eqs, ineqs)
}

fn combine(eqs: &[f64], ineqs: &[f64]) -> f64 {
    let e = eqs.iter().map(|v| -v.abs()).fold(f64::INFINITY, f64::min);
    let i = ineqs.iter().copied().fold(f64::INFINITY, f64::min);
    let m = e.min(i);
    if m.is_nan() {
        f64::NEG_INFINITY
    } else {
        m
    }
}

/// Smallest inequality slack of `id` at `p`, ignoring the equality constraints.
pub fn inequality_slack(p: &PhasePoint, id: SetId, pair: &CoprimePair) -> f64 {
    combine(&[], &parts(p, id, pair).1)
}

pub fn member(p: &PhasePoint, id: SetId, pair: &CoprimePair) -> Membership {
    member_with_tol(p, id, pair, MEMBER_TOL)
}

pub fn member_with_tol(p: &PhasePoint, id: SetId, pair: &CoprimePair, tol: f64) -> Membership {
    let (eqs, ineqs) = parts(p, id, pair);
    Membership::from_margin(combine(&eqs, &ineqs), tol)
}

/// Margin used for event detection along a trajectory on `branch`.
///
/// When the set lives on the trajectory's own branch the equalities hold by
/// construction up to drift, so only the inequality slacks are compared;
/// otherwise the full margin is used.
pub fn event_margin(p: &PhasePoint, id: SetId, pair: &CoprimePair, branch: Branch) -> f64 {
    let (eqs, ineqs) = parts(p, id, pair);
    match id.branch() {
        Some(b) if b == branch && !matches!(id, SetId::W(_)) => combine(&[], &ineqs),
        _ => combine(&eqs, &ineqs),
    }
}
