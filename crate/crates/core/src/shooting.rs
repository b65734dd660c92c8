//! Shooting from the singular orbits: seeds along the unstable manifold, fate
//! classification and bisection for the transition angle.

use std::f64::consts::PI;

use nalgebra::{SMatrix, SVector};
use rayon::prelude::*;

use crate::critical::{all_critical_points, solve_ac, type1_point, unstable_frame, CriticalPoint, Kind};
use crate::dynamics::{field_of, jacobian};
use crate::error::{Error, Result};
use crate::integrator::{integrate_from, IntegratorSettings, Projection, Terminal, Trajectory};
use crate::jet::Jet2;
use crate::phase::{project_full, Branch, CoprimePair, Orbit, PhasePoint};
use crate::sets::SetId;

/// Lower end of the default bisection bracket; the upper end is `PI - BRACKET_END`.
pub const BRACKET_END: f64 = 0.05;
/// Closest approach to the cone point required of a boundary run.
pub const SEPARATRIX_REQUIRED: f64 = 1e-2;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShootConfig {
    pub theta: f64,
    pub epsilon: f64,
    pub eta0: f64,
    pub integrator: IntegratorSettings,
}

impl Default for ShootConfig {
    fn default() -> Self {
        Self {
            theta: 0.0,
            epsilon: 1e-6,
            eta0: 0.0,
            integrator: IntegratorSettings {
                eta_max_span: 300.0,
                ..IntegratorSettings::default()
            },
        }
    }
}

impl ShootConfig {
    pub fn with_theta(self, theta: f64) -> Self {
        Self { theta, ..self }
    }

    fn validate(&self) -> Result<()> {
        if !(0.0..=PI).contains(&self.theta) {
            return Err(Error::DomainError {
                what: "theta",
                value: self.theta,
            });
        }
        if !(self.epsilon >= 0.0) || !self.epsilon.is_finite() {
            return Err(Error::DomainError {
                what: "epsilon",
                value: self.epsilon,
            });
        }
        self.integrator.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Fate {
    Alc,
    Ac(Branch),
    FiberBlowup,
    Undetermined,
}

impl Fate {
    pub fn name(self) -> &'static str {
        match self {
            Fate::Alc => "ALC",
            Fate::Ac(Branch::Plus) => "AC(plus)",
            Fate::Ac(Branch::Minus) => "AC(minus)",
            Fate::FiberBlowup => "FiberBlowup",
            Fate::Undetermined => "Undetermined",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ShootResult {
    pub fate: Fate,
    pub trajectory: Trajectory,
    /// First of the watched invariant sets that was entered.
    pub entered: Option<SetId>,
}

/// Quadratic correction `w` solving `(J - 4/3) w = -D^2F[v, v] / 2` at the Type I point.
fn second_order_term(pair: &CoprimePair, p0: &PhasePoint, v: &[f64; 8]) -> [f64; 8] {
    let f = field_of(&Jet2::line(&p0.to_array(), v), pair);
    let rhs = SVector::<f64, 8>::from(std::array::from_fn(|i| -f[i].a2));
    let m: SMatrix<f64, 8, 8> = jacobian(p0, pair) - SMatrix::<f64, 8, 8>::identity() * (4.0 / 3.0);
    let w = m.lu().solve(&rhs).unwrap_or_else(SVector::zeros);
    std::array::from_fn(|i| w[i])
}

/// Start point on the curve leaving the Type I point of `orbit` at angle `cfg.theta`.
///
/// The offset is `eps v + eps^2 w` with `v = cos(theta) v1 + sin(theta) v2` and `w`
/// the quadratic term of the unstable manifold, projected onto the branch surface.
pub fn seed(pair: &CoprimePair, orbit: Orbit, cfg: &ShootConfig) -> Result<PhasePoint> {
    cfg.validate()?;
    let p0 = type1_point(pair, orbit).point;
    if cfg.epsilon == 0.0 {
        return Ok(p0);
    }
    let frame = unstable_frame(pair, orbit);
    let (s, c) = cfg.theta.sin_cos();
    let v: [f64; 8] = std::array::from_fn(|i| c * frame.v1[i] + s * frame.v2[i]);
    let w = second_order_term(pair, &p0, &v);
    let e = cfg.epsilon;
    let base = p0.to_array();
    let raw = PhasePoint::from_array(std::array::from_fn(|i| base[i] + e * v[i] + e * e * w[i]));
    for (j, &z) in raw.z.iter().enumerate() {
        if z < 0.0 {
            return Err(Error::NegativeZ { index: j + 1, value: z });
        }
    }
    let p = project_full(&raw, pair, orbit.branch());
    for (j, &z) in p.z.iter().enumerate() {
        if z < 0.0 || !z.is_finite() {
            return Err(Error::NegativeZ { index: j + 1, value: z });
        }
    }
    Ok(p)
}

fn fate_of(traj: &Trajectory, branch: Branch) -> (Fate, Option<SetId>) {
    let d = SetId::d_set(branch);
    let b = SetId::b_set(branch);
    let entered = traj.events.iter().find_map(|e| match e.kind {
        crate::integrator::EventKind::EnterSet(s) if s == d || s == b => Some(s),
        _ => None,
    });
    let entered_b = traj
        .events
        .iter()
        .any(|e| e.kind == crate::integrator::EventKind::EnterSet(b));
    let fate = match traj.terminal {
        Terminal::ConvergedTo(c) if c.kind == Kind::TypeIIAlc => Fate::Alc,
        Terminal::ConvergedTo(CriticalPoint {
            kind: Kind::TypeVAc,
            branch: crate::critical::BranchTag::Only(br),
            ..
        }) => Fate::Ac(br),
        Terminal::Blowup if entered_b => Fate::FiberBlowup,
        _ => Fate::Undetermined,
    };
    (fate, entered)
}

/// Integrates the seed and classifies where the curve ends up.
pub fn classify(pair: &CoprimePair, orbit: Orbit, cfg: &ShootConfig) -> Result<ShootResult> {
    let start = seed(pair, orbit, cfg)?;
    let branch = orbit.branch();
    let landmarks = all_critical_points(pair)?;
    let watch = [SetId::d_set(branch), SetId::b_set(branch)];
    let trajectory = integrate_from(cfg.eta0, &start, pair, branch, &cfg.integrator, &watch, &landmarks)?;
    let (fate, entered) = fate_of(&trajectory, branch);
    Ok(ShootResult {
        fate,
        trajectory,
        entered,
    })
}

/// Classifies a grid of angles in parallel.
pub fn sweep(pair: &CoprimePair, orbit: Orbit, thetas: &[f64], cfg: &ShootConfig) -> Vec<Result<ShootResult>> {
    thetas
        .par_iter()
        .map(|&t| classify(pair, orbit, &cfg.with_theta(t)))
        .collect()
}

/// `n` equally spaced angles spanning `[BRACKET_END, PI - BRACKET_END]`.
pub fn theta_grid(n: usize) -> Vec<f64> {
    let lo = BRACKET_END;
    let hi = PI - BRACKET_END;
    match n {
        0 => vec![],
        1 => vec![0.5 * (lo + hi)],
        _ => (0..n).map(|j| lo + j as f64 * (hi - lo) / (n - 1) as f64).collect(),
    }
}

/// Which invariant set a probe reaches first.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    /// Entered the set trapping locally conical ends.
    Conical,
    /// Entered the set on which the circle fibre blows up.
    Blowup,
    Neither,
}

impl Side {
    fn name(self) -> &'static str {
        match self {
            Side::Conical => "ALC side",
            Side::Blowup => "blow-up side",
            Side::Neither => "undecided",
        }
    }
}

/// Runs until the first watched set is entered.
pub fn probe(pair: &CoprimePair, orbit: Orbit, cfg: &ShootConfig, theta: f64) -> Result<Side> {
    let mut c = cfg.with_theta(theta);
    c.integrator.stop_on_enter = true;
    let start = seed(pair, orbit, &c)?;
    let branch = orbit.branch();
    let watch = [SetId::d_set(branch), SetId::b_set(branch)];
    let t = integrate_from(c.eta0, &start, pair, branch, &c.integrator, &watch, &[])?;
    Ok(match t.terminal {
        Terminal::StoppedOnEnter(s) if s == watch[0] => Side::Conical,
        Terminal::StoppedOnEnter(_) => Side::Blowup,
        Terminal::Blowup => Side::Blowup,
        _ => Side::Neither,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct BisectResult {
    /// Midpoint of the final bracket.
    pub theta: f64,
    /// Largest angle seen entering the conical trap.
    pub lower: f64,
    /// Smallest angle seen entering the blow-up set.
    pub upper: f64,
    pub boundary: ShootResult,
    /// The cone point the boundary run should approach.
    pub target: CriticalPoint,
    pub min_distance: f64,
    pub probes: usize,
}

impl BisectResult {
    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }
}

/// Bisects for the largest angle whose curve still enters the conical trap.
pub fn bisect_theta(pair: &CoprimePair, orbit: Orbit, tol_theta: f64, cfg: &ShootConfig) -> Result<BisectResult> {
    if !(tol_theta >= 1e-12) {
        return Err(Error::DomainError {
            what: "tol_theta",
            value: tol_theta,
        });
    }
    let mut probes = 0usize;
    let mut lo = BRACKET_END;
    let mut hi = PI - BRACKET_END;

    let mut lo_side = probe(pair, orbit, cfg, lo)?;
    probes += 1;
    let mut tries = 0;
    while lo_side != Side::Conical && tries < 4 {
        lo *= 0.5;
        lo_side = probe(pair, orbit, cfg, lo)?;
        probes += 1;
        tries += 1;
    }
    let mut hi_side = probe(pair, orbit, cfg, hi)?;
    probes += 1;
    tries = 0;
    while hi_side != Side::Blowup && tries < 4 {
        hi = PI - 0.5 * (PI - hi);
        hi_side = probe(pair, orbit, cfg, hi)?;
        probes += 1;
        tries += 1;
    }
    if lo_side != Side::Conical || hi_side != Side::Blowup {
        let side = if lo_side != Side::Conical {
            lo_side.name()
        } else {
            hi_side.name()
        };
        return Err(Error::BracketInvalid { lo, hi, side });
    }

    while hi - lo >= tol_theta {
        let q: Vec<f64> = (1..4).map(|j| lo + j as f64 * (hi - lo) / 4.0).collect();
        let sides: Vec<Side> = q
            .par_iter()
            .map(|&t| probe(pair, orbit, cfg, t))
            .collect::<Result<_>>()?;
        probes += 3;
        let mut new_lo = lo;
        let mut new_hi = hi;
        let mut undecided = None;
        for (t, s) in q.iter().zip(&sides) {
            match s {
                Side::Conical => new_lo = new_lo.max(*t),
                Side::Blowup => new_hi = new_hi.min(*t),
                Side::Neither => undecided = Some(*t),
            }
        }
        if new_lo >= new_hi {
            break;
        }
        if let Some(t) = undecided {
            if t > new_lo && t < new_hi {
                lo = t;
                hi = t;
                break;
            }
        }
        lo = new_lo;
        hi = new_hi;
    }

    let theta = 0.5 * (lo + hi);
    let branch = orbit.branch();
    let target = solve_ac(pair, branch)?;
    let mut bcfg = cfg.with_theta(theta);
    bcfg.integrator.projection = Projection::Full;
    let boundary = classify(pair, orbit, &bcfg)?;
    let min_distance = boundary.trajectory.min_distance_to(&target.point);
    if !(min_distance < SEPARATRIX_REQUIRED) {
        return Err(Error::NoSeparatrix { min_distance });
    }
    Ok(BisectResult {
        theta,
        lower: lo,
        upper: hi,
        boundary,
        target,
        min_distance,
        probes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::phase::{residuals, validate_pair};
    use crate::sets::w_curve_residuals;

    fn p21() -> CoprimePair {
        validate_pair(2, 1).unwrap()
    }

    #[test]
    fn zero_offset_returns_type1_point() {
        let pair = p21();
        let cfg = ShootConfig {
            epsilon: 0.0,
            ..Default::default()
        };
        let p = seed(&pair, Orbit::KplusL, &cfg).unwrap();
        assert_eq!(p, type1_point(&pair, Orbit::KplusL).point);
    }

    #[test]
    fn seed_on_surface_and_on_w_curve_at_zero_angle() {
        let pair = p21();
        for o in Orbit::ALL {
            let p = seed(&pair, o, &ShootConfig::default()).unwrap();
            assert!(residuals(&p, &pair, o.branch()).max_norm() < 1e-12);
            let w = w_curve_residuals(&p, &pair, o);
            assert!(w.iter().all(|v| v.abs() < 1e-10), "{o:?} {w:?}");
        }
    }

    #[test]
    fn seed_at_right_angle_keeps_z4_to_second_order() {
        let pair = p21();
        let p0 = type1_point(&pair, Orbit::KplusL).point;
        let dz4 = |eps: f64| {
            let cfg = ShootConfig { epsilon: eps, ..ShootConfig::default().with_theta(PI / 2.0) };
            seed(&pair, Orbit::KplusL, &cfg).unwrap().z[3] - p0.z[3]
        };
        let ratio = dz4(2e-6) / dz4(1e-6);
        assert!((ratio - 4.0).abs() < 1e-3, "{ratio}");
        let p = seed(&pair, Orbit::KplusL, &ShootConfig::default().with_theta(PI / 2.0)).unwrap();
        assert!((p.z[0] - 9e-6).abs() < 1e-9);
    }

    #[test]
    fn second_order_term_cancels_quadratic_residual() {
        let pair = p21();
        let p0 = type1_point(&pair, Orbit::L).point;
        let f = unstable_frame(&pair, Orbit::L);
        let v: [f64; 8] = std::array::from_fn(|i| 0.6 * f.v1[i] + 0.8 * f.v2[i]);
        let w = second_order_term(&pair, &p0, &v);
        // Along y(s) = p0 + s v + s^2 w the field satisfies F(y) = (2/3) s v + (4/3) s^2 w + O(s^3).
        let y: [Jet2; 8] = std::array::from_fn(|i| Jet2::new(p0.to_array()[i], v[i], w[i]));
        let fy = field_of(&y, &pair);
        for i in 0..8 {
            assert!((fy[i].a1 - 2.0 / 3.0 * v[i]).abs() < 1e-9 * (1.0 + v[i].abs()));
            assert!((fy[i].a2 - 4.0 / 3.0 * w[i]).abs() < 1e-9 * (1.0 + w[i].abs()));
        }
    }

    #[test]
    fn theta_out_of_range_is_rejected() {
        let pair = p21();
        let cfg = ShootConfig::default().with_theta(4.0);
        assert!(matches!(seed(&pair, Orbit::K, &cfg), Err(Error::DomainError { .. })));
    }

    #[test]
    fn grid_endpoints() {
        let g = theta_grid(200);
        assert_eq!(g.len(), 200);
        assert!((g[0] - 0.05).abs() < 1e-15);
        assert!((g[199] - (PI - 0.05)).abs() < 1e-12);
    }

    #[test]
    fn small_angle_is_conical() {
        let pair = p21();
        let r = classify(&pair, Orbit::KplusL, &ShootConfig::default().with_theta(0.05)).unwrap();
        assert_eq!(r.fate, Fate::Alc);
        assert_eq!(r.entered, Some(SetId::DPlus));
    }

    #[test]
    fn large_angle_blows_up() {
        let pair = p21();
        let r = classify(&pair, Orbit::KplusL, &ShootConfig::default().with_theta(3.1)).unwrap();
        assert_eq!(r.fate, Fate::FiberBlowup);
        assert_eq!(r.entered, Some(SetId::BPlus));
    }
}
