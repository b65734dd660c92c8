//! Sampling harness for the checkable numerical content of the invariance and
//! positivity arguments.
//!
//! Every property draws its samples from a ChaCha stream split into fixed-size
//! chunks, one stream id per chunk, so results do not depend on the number of
//! worker threads.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::dynamics::{field_of, jacobian, vector_field};
use crate::integrator::{integrate, IntegratorSettings};
use crate::jet::Jet2;
use crate::phase::{conservation_expr, spin7_x, torsion, trace_expr, Branch, CoprimePair, PhasePoint};
use crate::sets::{
    b_gap_rate, b_gap_rate_on_boundary, fiber_weight_rate, fiber_weight_rate_on_boundary,
    event_margin, inequality_slack, member, MEMBER_TOL, phi2, phi_polys, theta_polys, xi0_discriminant, xi0_discriminant_closed, xi_polys,
    SetId,
};

const CHUNK: usize = 1024;
const MAX_REJECTS: usize = 10_000;

/// Outcome of one sampled property.
#[derive(Debug, Clone, PartialEq)]
pub struct PropertyReport {
    pub name: String,
    pub samples: usize,
    pub violations: usize,
    /// Smallest slack seen; negative means the property failed there.
    pub worst_slack: f64,
    pub witness: Vec<f64>,
    /// Draws discarded by the sampler before an admissible sample was found.
    pub rejected: usize,
}

impl PropertyReport {
    pub fn passed(&self) -> bool {
        self.violations == 0 && self.samples > 0
    }
}

impl fmt::Display for PropertyReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let w: Vec<String> = self.witness.iter().map(|v| format!("{v:.6e}")).collect();
        write!(
            f,
            "{} {}: samples={} violations={} worst_slack={:.3e} witness=[{}]",
            if self.passed() { "PASS" } else { "FAIL" },
            self.name,
            self.samples,
            self.violations,
            self.worst_slack,
            w.join(", ")
        )
    }
}

struct ChunkResult {
    violations: usize,
    worst: f64,
    witness: Vec<f64>,
    rejected: usize,
    samples: usize,
}

/// Draws `n` samples and records the slack `eval` assigns to each (`>= 0` passes).
///
/// `sampler` may decline a draw by returning `None`; it is then retried.
pub fn sample_property<S, E>(name: &str, n: usize, seed: u64, sampler: S, eval: E) -> PropertyReport
where
    S: Fn(&mut ChaCha8Rng) -> Option<Vec<f64>> + Sync,
    E: Fn(&[f64]) -> f64 + Sync,
{
    sample_property_chunked(name, n, seed, CHUNK, sampler, eval)
}

/// As [`sample_property`] with an explicit chunk size; results depend on `chunk`.
pub fn sample_property_chunked<S, E>(name: &str, n: usize, seed: u64, chunk: usize, sampler: S, eval: E) -> PropertyReport
where
    S: Fn(&mut ChaCha8Rng) -> Option<Vec<f64>> + Sync,
    E: Fn(&[f64]) -> f64 + Sync,
{
    let chunk = chunk.max(1);
    let chunks = n.div_ceil(chunk);
    let results: Vec<ChunkResult> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(c as u64);
            let count = chunk.min(n - c * chunk);
            let mut r = ChunkResult {
                violations: 0,
                worst: f64::INFINITY,
                witness: Vec::new(),
                rejected: 0,
                samples: 0,
            };
            for _ in 0..count {
                let mut tries = 0;
                let s = loop {
                    if let Some(s) = sampler(&mut rng) {
                        break Some(s);
                    }
                    tries += 1;
                    r.rejected += 1;
                    if tries > MAX_REJECTS {
                        break None;
                    }
                };
                let Some(s) = s else { break };
                let slack = eval(&s);
                r.samples += 1;
                let slack = if slack.is_nan() { f64::NEG_INFINITY } else { slack };
                if slack < 0.0 {
                    r.violations += 1;
                }
                if slack < r.worst {
                    r.worst = slack;
                    r.witness = s;
                }
            }
            r
        })
        .collect();
    let mut rep = PropertyReport {
        name: name.to_string(),
        samples: 0,
        violations: 0,
        worst_slack: f64::INFINITY,
        witness: Vec::new(),
        rejected: 0,
    };
    for r in results {
        rep.samples += r.samples;
        rep.violations += r.violations;
        rep.rejected += r.rejected;
        if r.worst < rep.worst_slack {
            rep.worst_slack = r.worst;
            rep.witness = r.witness;
        }
    }
    rep
}

fn uniform2(lo: f64, hi: f64) -> impl Fn(&mut ChaCha8Rng) -> Option<Vec<f64>> + Sync {
    move |r| Some(vec![r.random_range(lo..=hi), r.random_range(lo..=hi)])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Suite {
    Polynomials,
    Fields,
    Flow,
    Invariance,
}

impl Suite {
    pub const ALL: [Suite; 4] = [Suite::Polynomials, Suite::Fields, Suite::Flow, Suite::Invariance];

    pub fn name(self) -> &'static str {
        match self {
            Suite::Polynomials => "polynomials",
            Suite::Fields => "fields",
            Suite::Flow => "flow",
            Suite::Invariance => "invariance",
        }
    }

    pub fn parse(s: &str) -> Option<Suite> {
        Suite::ALL.into_iter().find(|x| x.name() == s)
    }
}

/// Sample counts and seed shared by the suites.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VerifyConfig {
    pub polynomial_samples: usize,
    pub jacobian_samples: usize,
    pub surface_samples: usize,
    pub boundary_samples: usize,
    pub invariance_starts: usize,
    pub invariance_span: f64,
    pub seed: u64,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        Self {
            polynomial_samples: 100_000,
            jacobian_samples: 100,
            surface_samples: 10_000,
            boundary_samples: 1_000,
            invariance_starts: 1_000,
            invariance_span: 30.0,
            seed: 20_240_601,
        }
    }
}

/// Sign conditions and the discriminant identity; independent of the pair.
pub fn polynomial_suite(cfg: &VerifyConfig) -> Vec<PropertyReport> {
    let n = cfg.polynomial_samples;
    let s = cfg.seed;
    let slack = 1e-12;
    vec![
        sample_property("Xi0 >= 0 on [1,20]^2", n, s, uniform2(1.0, 20.0), |v| {
            xi_polys(v[0], v[1])[0] + slack
        }),
        sample_property("Xi1 > 0 on [1,20]^2", n, s + 1, uniform2(1.0, 20.0), |v| {
            let x = xi_polys(v[0], v[1])[1];
            if x > 0.0 { x } else { -1.0 }
        }),
        sample_property("Xi2 >= 0 on [1,20]^2", n, s + 2, uniform2(1.0, 20.0), |v| {
            xi_polys(v[0], v[1])[2] + slack
        }),
        sample_property("Theta0 >= 0 on [0,20]^2", n, s + 3, uniform2(0.0, 20.0), |v| {
            theta_polys(v[0], v[1])[0] + slack
        }),
        sample_property("Theta1 > 0 on [0,20]^2", n, s + 4, uniform2(0.0, 20.0), |v| {
            let x = theta_polys(v[0], v[1])[1];
            if x > 0.0 { x } else { -1.0 }
        }),
        sample_property("Theta2 >= 0 on [0,20]^2", n, s + 5, uniform2(0.0, 20.0), |v| {
            theta_polys(v[0], v[1])[2] + slack
        }),
        sample_property("phi2 >= 0 on [0,20]^2", n, s + 6, uniform2(0.0, 20.0), |v| {
            phi2(v[0], v[1]) + slack
        }),
        sample_property(
            "discriminant identity on [0,1]^3",
            n,
            s + 7,
            |r| Some(vec![r.random::<f64>(), r.random::<f64>(), r.random::<f64>()]),
            |v| {
                let pair = CoprimePair::new(2, 1).expect("valid pair");
                let p = phi_polys(v[0], v[1], v[2], &pair);
                1e-10 * (1.0 + p.delta.abs()) - (p.delta - p.delta_closed).abs()
            },
        ),
        grid_property("discriminant of Xi0 <= 0 (closed form)", 10_001, 0.0, 20.0, |a| {
            let d = xi0_discriminant(a);
            let c = xi0_discriminant_closed(a);
            let agree = 1e-9 * (1.0 + a.powi(6)) - (d - c).abs();
            agree.min(-c + slack)
        }),
    ]
}

fn grid_property(name: &str, n: usize, lo: f64, hi: f64, eval: impl Fn(f64) -> f64) -> PropertyReport {
    let mut rep = PropertyReport {
        name: name.to_string(),
        samples: n,
        violations: 0,
        worst_slack: f64::INFINITY,
        witness: vec![],
        rejected: 0,
    };
    for i in 0..n {
        let a = lo + (hi - lo) * i as f64 / (n - 1).max(1) as f64;
        let s = eval(a);
        if !(s >= 0.0) {
            rep.violations += 1;
        }
        if s < rep.worst_slack {
            rep.worst_slack = s;
            rep.witness = vec![a];
        }
    }
    rep
}

/// The surface point over `(Z1, Z2, Z3)` on `branch`, or `None` when `Z4` or `X4`
/// would be negative or `Z4` exceeds `z4_max`.
pub fn surface_point(z: [f64; 3], pair: &CoprimePair, branch: Branch, z4_max: f64) -> Option<PhasePoint> {
    let s = z[0] + z[1] + z[2];
    let x4 = 2.0 * s - 1.0;
    let t = branch.sign() * torsion(&[z[0], z[1], z[2], 0.0], pair);
    if x4 < 0.0 || t == 0.0 {
        return None;
    }
    let z4 = x4 / t;
    if !(z4 >= 0.0) || z4 > z4_max || !z4.is_finite() {
        return None;
    }
    let zz = [z[0], z[1], z[2], z4];
    Some(PhasePoint::new(spin7_x(&zz, pair, branch), zz))
}

fn random_surface_point(r: &mut ChaCha8Rng, pair: &CoprimePair) -> Option<(PhasePoint, Branch)> {
    let branch = if r.random::<bool>() { Branch::Plus } else { Branch::Minus };
    let z = [r.random_range(0.0..0.8), r.random_range(0.0..0.8), r.random_range(0.0..0.8)];
    surface_point(z, pair, branch, 1e3).map(|p| (p, branch))
}

fn directional<F: Fn(&[Jet2; 8]) -> Jet2>(p: &PhasePoint, dir: &[f64; 8], f: F) -> f64 {
    f(&Jet2::line(&p.to_array(), dir)).a1
}

/// Analytic Jacobian against finite differences, and constancy of the trace and
/// conservation expressions along the flow on the constraint surface.
pub fn field_suite(pair: &CoprimePair, cfg: &VerifyConfig) -> Vec<PropertyReport> {
    let s = cfg.seed + 100;
    let tag = format!("{pair}");
    let pr = *pair;
    let jac = sample_property(
        &format!("jacobian vs central differences {tag}"),
        cfg.jacobian_samples,
        s,
        |r| {
            let mut v: Vec<f64> = (0..4).map(|_| r.random_range(-1.0..1.0)).collect();
            v.extend((0..3).map(|_| r.random_range(0.0..1.0)));
            v.push(r.random_range(0.0..10.0));
            Some(v)
        },
        move |v| {
            let p = PhasePoint::from_array(std::array::from_fn(|i| v[i]));
            let j = jacobian(&p, &pr);
            let h = 1e-6 * p.inf_norm().max(1.0);
            let mut worst: f64 = 0.0;
            for c in 0..8 {
                let mut a = p.to_array();
                let mut b = p.to_array();
                a[c] += h;
                b[c] -= h;
                let fa = field_of(&a, &pr);
                let fb = field_of(&b, &pr);
                for row in 0..8 {
                    let fd = (fa[row] - fb[row]) / (2.0 * h);
                    let e = (j[(row, c)] - fd).abs() / j[(row, c)].abs().max(1.0);
                    worst = worst.max(e);
                }
            }
            1e-6 - worst
        },
    );
    let surface = move |r: &mut ChaCha8Rng| random_surface_point(r, &pr).map(|(p, _)| p.to_array().to_vec());
    let trace = sample_property(
        &format!("trace identity constant along flow {tag}"),
        cfg.surface_samples,
        s + 1,
        surface,
        move |v| {
            let p = PhasePoint::from_array(std::array::from_fn(|i| v[i]));
            let f = vector_field(&p, &pr).derivative;
            let d = directional(&p, &f, |q| trace_expr(&[q[0], q[1], q[2], q[3]]));
            let scale = 1.0 + p.inf_norm().powi(2) + f.iter().fold(0.0f64, |m, x| m.max(x.abs()));
            1e-12 * scale - d.abs()
        },
    );
    let cons = sample_property(
        &format!("conservation constant along flow {tag}"),
        cfg.surface_samples,
        s + 2,
        surface,
        move |v| {
            let p = PhasePoint::from_array(std::array::from_fn(|i| v[i]));
            let f = vector_field(&p, &pr);
            let d = directional(&p, &f.derivative, |q| conservation_expr(q, &pr));
            let scale = 1.0 + f.g + f.r[3].abs() + p.inf_norm().powi(2) + f.inf_norm();
            1e-12 * scale * scale - d.abs()
        },
    );
    vec![jac, trace, cons]
}

/// Point on the `fiber_weight = 2 delta` face of the branch's trapping set with
/// square-root ratios `(a, b)`.
pub fn d_face_point(a: f64, b: f64, pair: &CoprimePair, branch: Branch) -> Option<PhasePoint> {
    let (k, l) = (pair.k() as f64, pair.l() as f64);
    let w = pair.half_weights();
    let d2 = 2.0 * pair.delta() as f64;
    let den = k * a + l * b + (k + l) * a * b;
    if !(den > 0.0) {
        return None;
    }
    let zeta = d2 / den;
    let tau = w[0] * a * a * b * b - w[1] * b * b - w[2] * a * a;
    let z1 = 1.0 / (2.0 * (1.0 + a * a + b * b) - branch.sign() * zeta * tau);
    if !(z1 > 0.0) || !z1.is_finite() {
        return None;
    }
    let z = [z1, a * a * z1, b * b * z1, zeta / z1];
    if z[3] > 1e4 {
        return None;
    }
    let p = PhasePoint::new(spin7_x(&z, pair, branch), z);
    (p.x[3] >= 0.0).then_some(p)
}

/// Outward rates across every face of the trapping sets, the blow-up sets and
/// `{X4 = 0}`, plus agreement of the direct rates with the factored formulas.
pub fn flow_suite(pair: &CoprimePair, cfg: &VerifyConfig) -> Vec<PropertyReport> {
    let n = cfg.boundary_samples;
    let s = cfg.seed + 200;
    let tag = format!("{pair}");
    let pr = *pair;
    let two_delta = 2.0 * pair.delta() as f64;
    let to_p = |v: &[f64]| PhasePoint::from_array(std::array::from_fn(|i| v[i]));
    let mut out = Vec::new();

    for (bi, branch) in [Branch::Plus, Branch::Minus].into_iter().enumerate() {
        let bname = branch.name();
        let (lo, hi) = match branch {
            Branch::Plus => (1.0, 6.0),
            Branch::Minus => (0.0, 1.0),
        };
        let seed = s + 10 * bi as u64;
        let face = move |r: &mut ChaCha8Rng| {
            let a = r.random_range(lo..=hi);
            let b = r.random_range(lo..=hi);
            d_face_point(a, b, &pr, branch).map(|p| p.to_array().to_vec())
        };
        out.push(sample_property(
            &format!("fiber weight does not increase on trap face ({bname}) {tag}"),
            n,
            seed,
            face,
            move |v| 1e-10 - fiber_weight_rate(&to_p(v), &pr),
        ));
        out.push(sample_property(
            &format!("fiber weight rate matches factored form ({bname}) {tag}"),
            n,
            seed + 1,
            face,
            move |v| {
                let p = to_p(v);
                let d = fiber_weight_rate(&p, &pr);
                let f = fiber_weight_rate_on_boundary(&p, &pr, branch);
                1e-9 * (1.0 + d.abs()) - (d - f).abs()
            },
        ));

        // Faces where Z1 meets Z2 or Z3; `m` is the index that equals Z1.
        for m in [1usize, 2] {
            let other = 3 - m;
            let ratio = match branch {
                Branch::Plus => (1.0, 6.0),
                Branch::Minus => (0.0, 1.0),
            };
            let set = SetId::d_set(branch);
            out.push(sample_property(
                &format!("Z1 = Z{} face is not crossed ({bname}) {tag}", m + 1),
                n,
                seed + 2 + m as u64,
                move |r| {
                    let z = r.random_range(0.0..0.5);
                    let q = r.random_range(ratio.0..=ratio.1);
                    let mut zz = [z, 0.0, 0.0];
                    zz[m] = z;
                    zz[other] = q * z;
                    let p = surface_point(zz, &pr, branch, 1e4)?;
                    (crate::sets::fiber_weight(&p, &pr).ok()? <= two_delta && member(&p, set, &pr).inside)
                        .then(|| p.to_array().to_vec())
                },
                move |v| {
                    let p = to_p(v);
                    let f = vector_field(&p, &pr).derivative;
                    let rate = match branch {
                        Branch::Plus => f[4 + m] - f[4],
                        Branch::Minus => f[4] - f[4 + m],
                    };
                    rate + 1e-10
                },
            ));
        }

        let bseed = seed + 5;
        let bface = move |r: &mut ChaCha8Rng| {
            let u = [r.random::<f64>(), r.random::<f64>(), r.random::<f64>()];
            let t = u[0] + u[1] + u[2];
            if t == 0.0 {
                return None;
            }
            let z = u.map(|x| x * (2.0 / 3.0) / t);
            surface_point(z, &pr, branch, 1e4).map(|p| p.to_array().to_vec())
        };
        out.push(sample_property(
            &format!("blow-up face is not crossed ({bname}) {tag}"),
            n,
            bseed,
            bface,
            move |v| b_gap_rate(&to_p(v), &pr) + 1e-10,
        ));
        out.push(sample_property(
            &format!("blow-up face rate matches 2 Phi / W^2 ({bname}) {tag}"),
            n,
            bseed + 1,
            bface,
            move |v| {
                let p = to_p(v);
                let d = b_gap_rate(&p, &pr);
                let f = b_gap_rate_on_boundary(&p, &pr);
                1e-9 * (1.0 + d.abs()) - (d - f).abs()
            },
        ));
    }

    out.push(sample_property(
        &format!("X4 = 0 face is not crossed {tag}"),
        n,
        s + 50,
        move |r| {
            let z1 = r.random_range(0.01..1.0);
            let z2 = r.random_range(0.01..1.0);
            let w = pr.half_weights();
            let den = w[0] * z2 - w[1] * z1;
            let z3 = if r.random::<bool>() && den > 0.0 {
                w[2] * z1 * z2 / den
            } else {
                r.random_range(0.01..1.0)
            };
            let torsion_zero = den > 0.0 && (z3 - w[2] * z1 * z2 / den).abs() < 1e-15;
            let lam = 0.5 / (z1 + z2 + z3);
            let z = [z1 * lam, z2 * lam, z3 * lam, if torsion_zero { r.random_range(0.0..100.0) } else { 0.0 }];
            let branch = if r.random::<bool>() { Branch::Plus } else { Branch::Minus };
            let p = PhasePoint::new(spin7_x(&z, &pr, branch), z);
            Some(p.to_array().to_vec())
        },
        move |v| {
            let p = to_p(v);
            vector_field(&p, &pr).derivative[3] + 1e-10
        },
    ));
    out
}

/// Starts strictly inside `id`, integrates, and fails on any exit event.
pub fn invariance_property(pair: &CoprimePair, id: SetId, cfg: &VerifyConfig) -> PropertyReport {
    let pr = *pair;
    let branch = id.branch().expect("branch-specific set");
    let settings = IntegratorSettings {
        eta_max_span: cfg.invariance_span,
        ..IntegratorSettings::default()
    };
    let zmax = match id {
        SetId::BPlus | SetId::BMinus => 1.0,
        _ => 0.8,
    };
    let seed = cfg.seed + 300 + id_index(id);
    sample_property_chunked(
        &format!("{} is invariant over span {} {}", id.name(), cfg.invariance_span, pair),
        cfg.invariance_starts,
        seed,
        16,
        move |r| {
            let z = [r.random_range(0.0..zmax), r.random_range(0.0..zmax), r.random_range(0.0..zmax)];
            let p = surface_point(z, &pr, branch, 1e3)?;
            (member(&p, id, &pr).inside && inequality_slack(&p, id, &pr) > 1e-6).then(|| p.to_array().to_vec())
        },
        move |v| {
            let p = PhasePoint::from_array(std::array::from_fn(|i| v[i]));
            match integrate(&p, &pr, branch, &settings, &[id], &[]) {
                Ok(t) if !t.has_exit(id) => t
                    .samples
                    .iter()
                    .map(|s| event_margin(&s.point, id, &pr, branch) + MEMBER_TOL)
                    .fold(f64::INFINITY, f64::min),
                _ => -1.0,
            }
        },
    )
}

fn id_index(id: SetId) -> u64 {
    match id {
        SetId::DPlus => 0,
        SetId::DMinus => 1,
        SetId::BPlus => 2,
        SetId::BMinus => 3,
        _ => 4,
    }
}

pub fn invariance_suite(pair: &CoprimePair, cfg: &VerifyConfig) -> Vec<PropertyReport> {
    [SetId::DPlus, SetId::DMinus, SetId::BPlus, SetId::BMinus]
        .into_iter()
        .map(|id| invariance_property(pair, id, cfg))
        .collect()
}

/// Runs `suite`; pair-dependent suites are run for every pair in `pairs`.
pub fn run_suite(suite: Suite, pairs: &[CoprimePair], cfg: &VerifyConfig) -> Vec<PropertyReport> {
    match suite {
        Suite::Polynomials => polynomial_suite(cfg),
        Suite::Fields => pairs.iter().flat_map(|p| field_suite(p, cfg)).collect(),
        Suite::Flow => pairs.iter().flat_map(|p| flow_suite(p, cfg)).collect(),
        Suite::Invariance => pairs.iter().flat_map(|p| invariance_suite(p, cfg)).collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::phase::{residuals, validate_pair};

    #[test]
    fn harness_is_thread_count_independent() {
        let run = || {
            sample_property("x", 5000, 7, uniform2(0.0, 1.0), |v| v[0] - 0.001)
        };
        let a = run();
        let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let b = pool.install(run);
        assert_eq!(a, b);
        assert!(a.violations > 0 && a.witness[0] < 0.001);
    }

    #[test]
    fn surface_points_satisfy_constraints() {
        let pair = validate_pair(3, 2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut got = 0;
        while got < 200 {
            if let Some((p, b)) = random_surface_point(&mut rng, &pair) {
                assert!(residuals(&p, &pair, b).relative_norm() < 1e-13);
                got += 1;
            }
        }
    }

    #[test]
    fn face_points_sit_on_face() {
        let pair = validate_pair(2, 1).unwrap();
        let p = d_face_point(1.5, 2.0, &pair, Branch::Plus).unwrap();
        let fw = crate::sets::fiber_weight(&p, &pair).unwrap();
        assert!((fw - 14.0).abs() < 1e-12);
        assert!(residuals(&p, &pair, Branch::Plus).relative_norm() < 1e-13);
    }

    #[test]
    fn small_polynomial_suite_passes() {
        let cfg = VerifyConfig {
            polynomial_samples: 2000,
            ..Default::default()
        };
        for r in polynomial_suite(&cfg) {
            assert!(r.passed(), "{r}");
        }
    }
}
