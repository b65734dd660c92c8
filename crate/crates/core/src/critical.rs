//! Critical points of the Spin(7) flow and the unstable directions at the singular orbits.

use std::fmt;

use crate::dynamics::{self, jacobian};
use crate::error::{Error, Result};
use crate::phase::{residuals, torsion, Branch, CoprimePair, Orbit, PhasePoint};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Kind {
    /// Smooth extension over a singular orbit.
    TypeI,
    /// The locally conical sink.
    TypeIIAlc,
    TypeIII,
    TypeIVQ0,
    /// A Ricci-flat cone.
    TypeVAc,
}

/// Which constraint branches a critical point lies on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BranchTag {
    Only(Branch),
    Both,
}

impl BranchTag {
    pub fn contains(self, b: Branch) -> bool {
        match self {
            BranchTag::Only(x) => x == b,
            BranchTag::Both => true,
        }
    }

    pub fn branches(self) -> Vec<Branch> {
        match self {
            BranchTag::Only(b) => vec![b],
            BranchTag::Both => vec![Branch::Plus, Branch::Minus],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CriticalPoint {
    pub point: PhasePoint,
    pub kind: Kind,
    pub branch: BranchTag,
    pub orbit: Option<Orbit>,
}

impl CriticalPoint {
    /// Short identifier used in event logs and reports.
    pub fn name(&self) -> String {
        let o = self.orbit.map(|o| o.name()).unwrap_or("");
        match self.kind {
            Kind::TypeI => format!("P0[{o}]"),
            Kind::TypeIIAlc => "P_ALC".to_string(),
            Kind::TypeIII => format!("III[{o}]"),
            Kind::TypeIVQ0 => format!("Q0[{o}]"),
            Kind::TypeVAc => match self.branch {
                BranchTag::Only(Branch::Plus) => "P_AC+".to_string(),
                _ => "P_AC-".to_string(),
            },
        }
    }

    /// Largest constraint residual over the branches the point claims.
    pub fn residual_norm(&self, pair: &CoprimePair) -> f64 {
        self.branch
            .branches()
            .into_iter()
            .map(|b| residuals(&self.point, pair, b).max_norm())
            .fold(0.0, f64::max)
    }

    pub fn field_norm(&self, pair: &CoprimePair) -> f64 {
        dynamics::vector_field(&self.point, pair).inf_norm()
    }
}

impl fmt::Display for CriticalPoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {}", self.name(), self.point)
    }
}

/// The point where the fibre labelled by `orbit` collapses.
pub fn type1_point(pair: &CoprimePair, orbit: Orbit) -> CriticalPoint {
    let t = 1.0 / 3.0;
    let d = pair.delta() as f64;
    let z4 = 6.0 * d / orbit.value(pair) as f64;
    let point = match orbit {
        Orbit::KplusL => PhasePoint::new([t, 0., 0., t], [0., t, t, z4]),
        Orbit::L => PhasePoint::new([0., t, 0., t], [t, 0., t, z4]),
        Orbit::K => PhasePoint::new([0., 0., t, t], [t, t, 0., z4]),
    };
    CriticalPoint {
        point,
        kind: Kind::TypeI,
        branch: BranchTag::Only(orbit.branch()),
        orbit: Some(orbit),
    }
}

pub fn alc_point() -> CriticalPoint {
    let s = 1.0 / 6.0;
    CriticalPoint {
        point: PhasePoint::new([s, s, s, 0.], [s, s, s, 0.]),
        kind: Kind::TypeIIAlc,
        branch: BranchTag::Both,
        orbit: None,
    }
}

/// Type II, III and IV points; none of them depends on the pair.
pub fn fixed_points_table(_pair: &CoprimePair) -> Vec<CriticalPoint> {
    let mut out = vec![alc_point()];
    for orbit in Orbit::ALL {
        let i = orbit.index();
        let mut x = [0.5, 0.5, 0.5, 0.0];
        x[i] = -0.5;
        let mut z = [0.0; 4];
        z[i] = 0.5;
        out.push(CriticalPoint {
            point: PhasePoint::new(x, z),
            kind: Kind::TypeIII,
            branch: BranchTag::Both,
            orbit: Some(orbit),
        });
    }
    for orbit in Orbit::ALL {
        let i = orbit.index();
        let mut x = [0.0; 4];
        x[i] = 0.5;
        let mut z = [0.25, 0.25, 0.25, 0.0];
        z[i] = 0.0;
        out.push(CriticalPoint {
            point: PhasePoint::new(x, z),
            kind: Kind::TypeIVQ0,
            branch: BranchTag::Both,
            orbit: Some(orbit),
        });
    }
    out
}

/// The two unstable directions at a Type I point, both with eigenvalue `2/3`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UnstableFrame {
    pub eigenvalue: f64,
    pub v1: [f64; 8],
    pub v2: [f64; 8],
}

pub fn unstable_frame(pair: &CoprimePair, orbit: Orbit) -> UnstableFrame {
    let k = pair.k() as f64;
    let l = pair.l() as f64;
    let d = pair.delta() as f64;
    let (v1, v2) = match orbit {
        Orbit::KplusL => (
            [2., 0., 0., -4., 0., -1., -1., -36. * d / (k + l)],
            [
                -3. * (k + l),
                4. * k + 5. * l,
                5. * k + 4. * l,
                -12. * (k + l),
                3. * (k + l),
                -5. * k - 4. * l,
                -4. * k - 5. * l,
                0.,
            ],
        ),
        Orbit::L => (
            [0., 2., 0., -4., -1., 0., -1., -36. * d / l],
            [
                5. * l + k,
                -3. * l,
                4. * l - k,
                -12. * l,
                -4. * l + k,
                3. * l,
                -5. * l - k,
                0.,
            ],
        ),
        Orbit::K => (
            [0., 0., 2., -4., -1., -1., 0., -36. * d / k],
            [
                5. * k + l,
                4. * k - l,
                -3. * k,
                -12. * k,
                -4. * k + l,
                -5. * k - l,
                3. * k,
                0.,
            ],
        ),
    };
    UnstableFrame {
        eigenvalue: 2.0 / 3.0,
        v1,
        v2,
    }
}

/// Relative defect `|J v - lambda v| / |v|` at the Type I point.
pub fn eigen_defect(pair: &CoprimePair, orbit: Orbit, v: &[f64; 8], lambda: f64) -> f64 {
    let j = jacobian(&type1_point(pair, orbit).point, pair);
    let v = nalgebra::SVector::<f64, 8>::from(*v);
    (j * v - v * lambda).norm() / v.norm()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Arc {
    Inner,
    Outer,
}

/// Ratios `Z2/Z1` and `Z3/Z1` of a Type V point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AcSeed {
    pub alpha: f64,
    pub beta: f64,
    pub arc: Arc,
}

impl AcSeed {
    fn on_arc(&self) -> bool {
        match self.arc {
            Arc::Inner => self.alpha + self.beta < 1.4,
            Arc::Outer => self.alpha + self.beta > 4.6,
        }
    }
}

/// The ellipse `L1` and the cubic `L2` whose intersection fixes the Type V ratios.
pub fn ac_equations(pair: &CoprimePair, alpha: f64, beta: f64) -> [f64; 2] {
    let k = pair.k() as f64;
    let l = pair.l() as f64;
    let s = alpha + beta - 3.0;
    let d = alpha - beta;
    [
        s * s + 4.0 * d * d - 4.0,
        k * alpha * (3.0 + 3.0 * beta - 5.0 * alpha) - l * beta * (3.0 + 3.0 * alpha - 5.0 * beta),
    ]
}

fn ac_jacobian(pair: &CoprimePair, a: f64, b: f64) -> [[f64; 2]; 2] {
    let k = pair.k() as f64;
    let l = pair.l() as f64;
    let s = a + b - 3.0;
    let d = a - b;
    [
        [2.0 * s + 8.0 * d, 2.0 * s - 8.0 * d],
        [
            k * (3.0 + 3.0 * b - 10.0 * a) - 3.0 * l * b,
            3.0 * k * a - l * (3.0 + 3.0 * a - 10.0 * b),
        ],
    ]
}

const NEWTON_TOL: f64 = 1e-14;
const NEWTON_ACCEPT: f64 = 1e-12;
const NEWTON_MAX_ITER: usize = 100;

fn newton(pair: &CoprimePair, start: (f64, f64)) -> std::result::Result<(f64, f64), Error> {
    let norm = |v: [f64; 2]| v[0].hypot(v[1]);
    let (mut a, mut b) = start;
    let mut f = ac_equations(pair, a, b);
    let mut r = norm(f);
    for it in 0..NEWTON_MAX_ITER {
        if r < NEWTON_TOL {
            return Ok((a, b));
        }
        let j = ac_jacobian(pair, a, b);
        let det = j[0][0] * j[1][1] - j[0][1] * j[1][0];
        if det == 0.0 || !det.is_finite() {
            break;
        }
        let da = -(j[1][1] * f[0] - j[0][1] * f[1]) / det;
        let db = -(-j[1][0] * f[0] + j[0][0] * f[1]) / det;
        let mut t = 1.0;
        let mut improved = false;
        for _ in 0..60 {
            let (na, nb) = (a + t * da, b + t * db);
            let nf = ac_equations(pair, na, nb);
            let nr = norm(nf);
            if nr < r {
                a = na;
                b = nb;
                f = nf;
                r = nr;
                improved = true;
                break;
            }
            t *= 0.5;
        }
        if !improved {
            if r < NEWTON_ACCEPT {
                return Ok((a, b));
            }
            return Err(Error::NoConvergence {
                iterations: it + 1,
                alpha: a,
                beta: b,
                residual: r,
            });
        }
    }
    if r < NEWTON_ACCEPT {
        return Ok((a, b));
    }
    Err(Error::NoConvergence {
        iterations: NEWTON_MAX_ITER,
        alpha: a,
        beta: b,
        residual: r,
    })
}

/// Solves for the Type V ratios on the arc belonging to `branch`.
pub fn ac_ratios(pair: &CoprimePair, branch: Branch) -> Result<AcSeed> {
    let (arc, seeds) = match branch {
        Branch::Minus => (Arc::Inner, [(0.7, 0.7), (0.6, 0.6)]),
        Branch::Plus => (Arc::Outer, [(2.6, 2.6), (3.0, 3.0)]),
    };
    let mut last = None;
    for s in seeds {
        match newton(pair, s) {
            Ok((alpha, beta)) => {
                let cand = AcSeed { alpha, beta, arc };
                if cand.on_arc() && alpha > 0.0 && beta > 0.0 {
                    return Ok(cand);
                }
                let r = ac_equations(pair, alpha, beta);
                last = Some(Error::NoConvergence {
                    iterations: NEWTON_MAX_ITER,
                    alpha,
                    beta,
                    residual: r[0].hypot(r[1]),
                });
            }
            Err(e) => last = Some(e),
        }
    }
    Err(last.expect("at least one seed"))
}

/// The unique Type V point on the `branch` constraint surface.
pub fn solve_ac(pair: &CoprimePair, branch: Branch) -> Result<CriticalPoint> {
    let AcSeed { alpha, beta, .. } = ac_ratios(pair, branch)?;
    let z1 = (4.0 / 7.0) / (1.0 + alpha + beta);
    let mut z = [z1, alpha * z1, beta * z1, 0.0];
    let w = torsion(&z, pair);
    let z4 = branch.sign() / (7.0 * w);
    if !(z4 > 0.0) {
        return Err(Error::WrongBranch { z4 });
    }
    z[3] = z4;
    let s = 1.0 / 7.0;
    let point = PhasePoint::new([s; 4], z);
    let r = dynamics::eval_r(&point, pair);
    let worst = r.iter().map(|v| (v - 6.0 / 49.0).abs()).fold(0.0, f64::max);
    if worst > 1e-10 {
        return Err(Error::NoConvergence {
            iterations: NEWTON_MAX_ITER,
            alpha,
            beta,
            residual: worst,
        });
    }
    Ok(CriticalPoint {
        point,
        kind: Kind::TypeVAc,
        branch: BranchTag::Only(branch),
        orbit: None,
    })
}

/// Every critical point: three Type I, the fixed table and both Type V points.
pub fn all_critical_points(pair: &CoprimePair) -> Result<Vec<CriticalPoint>> {
    let mut out: Vec<CriticalPoint> = Orbit::ALL.iter().map(|&o| type1_point(pair, o)).collect();
    out.extend(fixed_points_table(pair));
    out.push(solve_ac(pair, Branch::Plus)?);
    out.push(solve_ac(pair, Branch::Minus)?);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::phase::validate_pair;

    fn pairs() -> Vec<CoprimePair> {
        [(2, 1), (3, 1), (3, 2), (5, 2), (1, 2)]
            .iter()
            .map(|&(k, l)| validate_pair(k, l).unwrap())
            .collect()
    }

    #[test]
    fn type1_coordinates() {
        let p = validate_pair(2, 1).unwrap();
        assert_eq!(type1_point(&p, Orbit::KplusL).point.z[3], 14.0);
        assert_eq!(type1_point(&p, Orbit::L).point.z[3], 42.0);
        assert_eq!(type1_point(&p, Orbit::K).point.z[3], 21.0);
        assert_eq!(type1_point(&p, Orbit::L).branch, BranchTag::Only(Branch::Minus));
    }

    #[test]
    fn table_entries() {
        let p = validate_pair(2, 1).unwrap();
        let t = fixed_points_table(&p);
        assert_eq!(t.len(), 7);
        let q0 = t.iter().find(|c| c.kind == Kind::TypeIVQ0 && c.orbit == Some(Orbit::KplusL));
        assert_eq!(
            q0.unwrap().point,
            PhasePoint::new([0.5, 0., 0., 0.], [0., 0.25, 0.25, 0.])
        );
    }

    #[test]
    fn all_points_are_stationary_and_on_branch() {
        for pair in pairs() {
            for c in all_critical_points(&pair).unwrap() {
                assert!(c.field_norm(&pair) < 1e-12, "{} {}", pair, c.name());
                assert!(c.residual_norm(&pair) < 1e-12, "{} {}", pair, c.name());
            }
        }
    }

    #[test]
    fn frame_for_21() {
        let p = validate_pair(2, 1).unwrap();
        let f = unstable_frame(&p, Orbit::KplusL);
        assert_eq!(f.v1, [2., 0., 0., -4., 0., -1., -1., -84.]);
        assert_eq!(f.v2, [-9., 13., 14., -36., 9., -14., -13., 0.]);
        assert_eq!(unstable_frame(&p, Orbit::L).v1[7], -252.0);
    }

    #[test]
    fn frames_are_eigenvectors() {
        for pair in pairs() {
            for o in Orbit::ALL {
                let f = unstable_frame(&pair, o);
                assert!(eigen_defect(&pair, o, &f.v1, 2.0 / 3.0) < 1e-10);
                assert!(eigen_defect(&pair, o, &f.v2, 2.0 / 3.0) < 1e-10);
            }
        }
    }

    #[test]
    fn ellipse_passes_through_known_point() {
        let p = validate_pair(2, 1).unwrap();
        assert!(ac_equations(&p, 1.0, 0.4)[0].abs() < 1e-14);
    }

    #[test]
    fn ac_chirality_pattern() {
        for pair in pairs() {
            let m = solve_ac(&pair, Branch::Minus).unwrap().point;
            assert!(m.z[1] < m.z[0] && m.z[2] < m.z[0]);
            let p = solve_ac(&pair, Branch::Plus).unwrap().point;
            assert!(p.z[1] > 2.0 * p.z[0] && p.z[2] > 2.0 * p.z[0]);
            for c in [m, p] {
                for (a, b) in [(0, 1), (0, 2), (1, 2)] {
                    // On the circle S = 4/7, Q = 5/49 one has Z_a Z_b = (Z_a + Z_b - 2/7)^2 + 1/49.
                    let u = c.z[a] + c.z[b] - 2.0 / 7.0;
                    assert!((c.z[a] * c.z[b] - u * u - 1.0 / 49.0).abs() < 1e-12);
                    assert!((c.z[a] * c.z[b]).sqrt() >= 1.0 / 7.0);
                }
                let fw = crate::sets::fiber_weight(&c, &pair).unwrap();
                assert!(fw > 2.0 * pair.delta() as f64);
            }
        }
    }
}
