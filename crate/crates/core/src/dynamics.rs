//! The Ricci-flat phase flow, its ingredients and its Jacobian.

use nalgebra::SMatrix;

use crate::jet::Scalar;
use crate::phase::{CoprimePair, PhasePoint};

pub type Matrix8 = SMatrix<f64, 8, 8>;

/// Value of the field together with the pieces it is assembled from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FieldValue {
    pub derivative: [f64; 8],
    pub g: f64,
    pub r: [f64; 4],
}

impl FieldValue {
    pub fn inf_norm(&self) -> f64 {
        self.derivative.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// `G = 2X1^2 + 2X2^2 + 2X3^2 + X4^2`.
pub fn g_of<T: Scalar>(x: &[T; 4]) -> T {
    (x[0] * x[0] + x[1] * x[1] + x[2] * x[2]).scale(2.0) + x[3] * x[3]
}

/// `(R1, R2, R3, R4)` as polynomials in `Z`.
pub fn r_of<T: Scalar>(z: &[T; 4], pair: &CoprimePair) -> [T; 4] {
    let [ca, cb, cc] = pair.square_weights();
    let (z1, z2, z3, z4) = (z[0], z[1], z[2], z[3]);
    let s1 = z1 * z1;
    let s2 = z2 * z2;
    let s3 = z3 * z3;
    let s4 = z4 * z4;
    let qa = s2 * s3 * s4;
    let qb = s1 * s3 * s4;
    let qc = s1 * s2 * s4;
    [
        (z2 * z3).scale(6.0) + s1 - s2 - s3 - qa.scale(0.5 * ca),
        (z1 * z3).scale(6.0) + s2 - s3 - s1 - qb.scale(0.5 * cb),
        (z1 * z2).scale(6.0) + s3 - s1 - s2 - qc.scale(0.5 * cc),
        qa.scale(0.5 * ca) + qb.scale(0.5 * cb) + qc.scale(0.5 * cc),
    ]
}

/// The eight right-hand sides over any scalar ring.
pub fn field_of<T: Scalar>(p: &[T; 8], pair: &CoprimePair) -> [T; 8] {
    let x = [p[0], p[1], p[2], p[3]];
    let z = [p[4], p[5], p[6], p[7]];
    let g = g_of(&x);
    let r = r_of(&z, pair);
    let one = T::constant(1.0);
    [
        x[0] * (g - one) + r[0],
        x[1] * (g - one) + r[1],
        x[2] * (g - one) + r[2],
        x[3] * (g - one) + r[3],
        z[0] * (g + x[0] - x[1] - x[2]),
        z[1] * (g + x[1] - x[2] - x[0]),
        z[2] * (g + x[2] - x[0] - x[1]),
        z[3] * (x[3] - g),
    ]
}

pub fn eval_g(p: &PhasePoint) -> f64 {
    g_of(&p.x)
}

pub fn eval_r(p: &PhasePoint, pair: &CoprimePair) -> [f64; 4] {
    r_of(&p.z, pair)
}

pub fn vector_field(p: &PhasePoint, pair: &CoprimePair) -> FieldValue {
    FieldValue {
        derivative: field_of(&p.to_array(), pair),
        g: eval_g(p),
        r: eval_r(p, pair),
    }
}

/// Analytic Jacobian of [`vector_field`]; row `i` holds the gradient of component `i`.
pub fn jacobian(p: &PhasePoint, pair: &CoprimePair) -> Matrix8 {
    let [ca, cb, cc] = pair.square_weights();
    let [x1, x2, x3, x4] = p.x;
    let [z1, z2, z3, z4] = p.z;
    let g = eval_g(p);
    let dg = [4.0 * x1, 4.0 * x2, 4.0 * x3, 2.0 * x4];
    let mut j = Matrix8::zeros();

    for i in 0..4 {
        for c in 0..4 {
            j[(i, c)] = p.x[i] * dg[c];
        }
        j[(i, i)] += g - 1.0;
    }

    let z4s = z4 * z4;
    let dr = [
        [
            2.0 * z1,
            6.0 * z3 - 2.0 * z2 - ca * z2 * z3 * z3 * z4s,
            6.0 * z2 - 2.0 * z3 - ca * z2 * z2 * z3 * z4s,
            -ca * z2 * z2 * z3 * z3 * z4,
        ],
        [
            6.0 * z3 - 2.0 * z1 - cb * z1 * z3 * z3 * z4s,
            2.0 * z2,
            6.0 * z1 - 2.0 * z3 - cb * z1 * z1 * z3 * z4s,
            -cb * z1 * z1 * z3 * z3 * z4,
        ],
        [
            6.0 * z2 - 2.0 * z1 - cc * z1 * z2 * z2 * z4s,
            6.0 * z1 - 2.0 * z2 - cc * z1 * z1 * z2 * z4s,
            2.0 * z3,
            -cc * z1 * z1 * z2 * z2 * z4,
        ],
        [
            (cb * z1 * z3 * z3 + cc * z1 * z2 * z2) * z4s,
            (ca * z2 * z3 * z3 + cc * z1 * z1 * z2) * z4s,
            (ca * z2 * z2 * z3 + cb * z1 * z1 * z3) * z4s,
            (ca * z2 * z2 * z3 * z3 + cb * z1 * z1 * z3 * z3 + cc * z1 * z1 * z2 * z2) * z4,
        ],
    ];
    for i in 0..4 {
        for c in 0..4 {
            j[(i, 4 + c)] = dr[i][c];
        }
    }

    let signs = [[1.0, -1.0, -1.0], [-1.0, 1.0, -1.0], [-1.0, -1.0, 1.0]];
    for i in 0..3 {
        let zi = p.z[i];
        for c in 0..4 {
            let s = if c < 3 { signs[i][c] } else { 0.0 };
            j[(4 + i, c)] = zi * (dg[c] + s);
        }
        let gi = g + signs[i][0] * x1 + signs[i][1] * x2 + signs[i][2] * x3;
        j[(4 + i, 4 + i)] = gi;
    }
    for c in 0..4 {
        let d = if c == 3 { 1.0 } else { 0.0 };
        j[(7, c)] = z4 * (d - dg[c]);
    }
    j[(7, 7)] = x4 - g;
    j
}
