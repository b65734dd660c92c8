//! Adaptive Dormand-Prince integration of the phase flow with residual monitoring
//! and event detection.

use std::fmt::{self, Write as _};

use crate::critical::CriticalPoint;
use crate::dynamics::{field_of, vector_field};
use crate::error::{Error, Result};
use crate::phase::{
    project_full, project_trace, residuals, zsum_expr, Branch, CoprimePair, PhasePoint, ResidualReport,
};
use crate::sets::{event_margin, SetId, MEMBER_TOL};

/// Distance below which a landmark is reported as near.
pub const NEAR_DISTANCE: f64 = 1e-4;
/// Distance below which a stationary landmark counts as reached.
pub const CONVERGED_DISTANCE: f64 = 1e-6;
/// Field norm below which a near landmark counts as reached.
pub const CONVERGED_FIELD: f64 = 1e-8;
pub const BLOWUP: f64 = 1e6;
/// Resolution in eta of refined set crossings.
pub const EVENT_RESOLUTION: f64 = 1e-8;
/// Relative slack before an increase of the volume ratio is reported.
pub const MONOTONE_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Projection {
    Off,
    TraceOnly,
    Full,
}

impl Projection {
    pub fn name(self) -> &'static str {
        match self {
            Projection::Off => "off",
            Projection::TraceOnly => "trace_only",
            Projection::Full => "full",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "off" => Some(Projection::Off),
            "trace_only" | "trace-only" => Some(Projection::TraceOnly),
            "full" => Some(Projection::Full),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntegratorSettings {
    pub rtol: f64,
    pub atol: f64,
    pub eta_max_span: f64,
    pub max_steps: usize,
    pub projection: Projection,
    pub sample_stride: f64,
    /// End the run as soon as any watched set is entered.
    pub stop_on_enter: bool,
}

impl Default for IntegratorSettings {
    fn default() -> Self {
        Self {
            rtol: 1e-10,
            atol: 1e-12,
            eta_max_span: 60.0,
            max_steps: 1_000_000,
            projection: Projection::TraceOnly,
            sample_stride: 0.05,
            stop_on_enter: false,
        }
    }
}

impl IntegratorSettings {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidSettings(m.to_string()));
        if !(self.rtol > 0.0) || !(self.atol > 0.0) {
            return bad("rtol and atol must be positive");
        }
        if !(self.eta_max_span > 0.0) || !self.eta_max_span.is_finite() {
            return bad("eta span must be positive and finite");
        }
        if !(self.sample_stride > 0.0) {
            return bad("sample stride must be positive");
        }
        if self.max_steps == 0 {
            return bad("max_steps must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EventKind {
    EnterSet(SetId),
    ExitSet(SetId),
    Near { landmark: CriticalPoint, distance: f64 },
    MonotoneViolation { quantity: &'static str },
}

impl fmt::Display for EventKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EventKind::EnterSet(s) => write!(f, "EnterSet({})", s.name()),
            EventKind::ExitSet(s) => write!(f, "ExitSet({})", s.name()),
            EventKind::Near { landmark, distance } => {
                write!(f, "Near({};{:.3e})", landmark.name(), distance)
            }
            EventKind::MonotoneViolation { quantity } => write!(f, "MonotoneViolation({quantity})"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Event {
    pub kind: EventKind,
    pub eta: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Terminal {
    SpanExhausted,
    ConvergedTo(CriticalPoint),
    Blowup,
    StepFailure { reason: &'static str },
    /// Projection was off and a residual exceeded `1e3 * rtol`.
    ConstraintBreach { residual: f64 },
    /// A watched set was entered while `stop_on_enter` was set.
    StoppedOnEnter(SetId),
}

impl fmt::Display for Terminal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Terminal::SpanExhausted => write!(f, "SpanExhausted"),
            Terminal::ConvergedTo(c) => write!(f, "ConvergedTo({})", c.name()),
            Terminal::Blowup => write!(f, "Blowup"),
            Terminal::StepFailure { reason } => write!(f, "StepFailure({reason})"),
            Terminal::ConstraintBreach { residual } => write!(f, "ConstraintBreach({residual:.3e})"),
            Terminal::StoppedOnEnter(s) => write!(f, "StoppedOnEnter({})", s.name()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sample {
    pub eta: f64,
    pub point: PhasePoint,
    pub residuals: ResidualReport,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub samples: Vec<Sample>,
    pub events: Vec<Event>,
    pub terminal: Terminal,
}

impl Trajectory {
    pub fn last(&self) -> Option<&Sample> {
        self.samples.last()
    }

    /// Smallest sampled distance to `target`.
    pub fn min_distance_to(&self, target: &PhasePoint) -> f64 {
        self.samples
            .iter()
            .map(|s| s.point.distance(target))
            .fold(f64::INFINITY, f64::min)
    }

    /// Largest relative residual over all samples.
    pub fn max_relative_residual(&self) -> f64 {
        self.samples
            .iter()
            .map(|s| s.residuals.relative_norm())
            .fold(0.0, f64::max)
    }

    /// Largest absolute conservation or trace residual over all samples.
    pub fn max_conservation_trace(&self) -> f64 {
        self.samples
            .iter()
            .map(|s| s.residuals.conservation.abs().max(s.residuals.trace.abs()))
            .fold(0.0, f64::max)
    }

    pub fn first_enter(&self) -> Option<(SetId, f64)> {
        self.events.iter().find_map(|e| match e.kind {
            EventKind::EnterSet(s) => Some((s, e.eta)),
            _ => None,
        })
    }

    pub fn has_exit(&self, id: SetId) -> bool {
        self.events.iter().any(|e| e.kind == EventKind::ExitSet(id))
    }
}

const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

type State = [f64; 8];

/// One Dormand-Prince step; returns the fifth-order solution and the error estimate.
fn dp_step(y: &State, f0: &State, h: f64, pair: &CoprimePair) -> (State, State) {
    let mut k = [[0.0; 8]; 7];
    k[0] = *f0;
    for s in 1..7 {
        let mut ys = *y;
        for (j, kj) in k.iter().enumerate().take(s) {
            let a = A[s][j];
            if a != 0.0 {
                for i in 0..8 {
                    ys[i] += h * a * kj[i];
                }
            }
        }
        if s == 6 {
            k[6] = field_of(&ys, pair);
            let mut err = [0.0; 8];
            for i in 0..8 {
                err[i] = h * (0..7).map(|j| E[j] * k[j][i]).sum::<f64>();
            }
            return (ys, err);
        }
        k[s] = field_of(&ys, pair);
    }
    unreachable!()
}

/// Fixed-step classical Runge-Kutta; used as an independent reference in tests.
pub fn rk4_fixed(start: &PhasePoint, pair: &CoprimePair, h: f64, steps: usize) -> PhasePoint {
    let mut y = start.to_array();
    let add = |a: &State, b: &State, c: f64| -> State { std::array::from_fn(|i| a[i] + c * b[i]) };
    for _ in 0..steps {
        let k1 = field_of(&y, pair);
        let k2 = field_of(&add(&y, &k1, h / 2.0), pair);
        let k3 = field_of(&add(&y, &k2, h / 2.0), pair);
        let k4 = field_of(&add(&y, &k3, h), pair);
        for i in 0..8 {
            y[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
    }
    PhasePoint::from_array(y)
}

struct Stepper<'a> {
    pair: &'a CoprimePair,
    branch: Branch,
    settings: &'a IntegratorSettings,
}

impl Stepper<'_> {
    fn post_process(&self, y: State) -> PhasePoint {
        let p = PhasePoint::from_array(y);
        let mut p = match self.settings.projection {
            Projection::Off => p,
            Projection::TraceOnly => project_trace(&p),
            Projection::Full => project_full(&p, self.pair, self.branch),
        };
        let atol = self.settings.atol;
        for z in p.z.iter_mut() {
            if *z < 0.0 && *z >= -atol {
                *z = 0.0;
            }
        }
        if p.x[3] < 0.0 && p.x[3] >= -atol {
            p.x[3] = 0.0;
        }
        p
    }

    fn error_norm(&self, y: &State, y1: &State, err: &State) -> f64 {
        let s = self.settings;
        let mut acc = 0.0;
        for i in 0..8 {
            let sc = s.atol + s.rtol * y[i].abs().max(y1[i].abs());
            acc += (err[i] / sc).powi(2);
        }
        (acc / 8.0).sqrt()
    }

    /// Uncontrolled step of length `h` followed by projection; used to refine crossings.
    fn substep(&self, p: &PhasePoint, h: f64) -> PhasePoint {
        let y = p.to_array();
        let f0 = field_of(&y, self.pair);
        self.post_process(dp_step(&y, &f0, h, self.pair).0)
    }
}

fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    (s, (a - (s - bb)) + (b - bb))
}

fn volume_ratio(p: &PhasePoint) -> Option<f64> {
    let prod = p.z[0] * p.z[1] * p.z[2];
    if prod > 0.0 {
        Some(p.z[3] / (prod * prod))
    } else {
        None
    }
}

/// Integrates forward in `eta` from `start`, watching `watch` and `landmarks`.
pub fn integrate(
    start: &PhasePoint,
    pair: &CoprimePair,
    branch: Branch,
    settings: &IntegratorSettings,
    watch: &[SetId],
    landmarks: &[CriticalPoint],
) -> Result<Trajectory> {
    integrate_from(0.0, start, pair, branch, settings, watch, landmarks)
}

/// As [`integrate`] with an explicit starting label `eta0`.
pub fn integrate_from(
    eta0: f64,
    start: &PhasePoint,
    pair: &CoprimePair,
    branch: Branch,
    settings: &IntegratorSettings,
    watch: &[SetId],
    landmarks: &[CriticalPoint],
) -> Result<Trajectory> {
    settings.validate()?;
    if !start.is_finite() {
        return Err(Error::DomainError {
            what: "start point",
            value: f64::NAN,
        });
    }
    let r0 = residuals(start, pair, branch);
    let allowed = (10.0 * settings.rtol).max(1e-12);
    if r0.relative_norm() > allowed {
        return Err(Error::OffSurface {
            residual: r0.relative_norm(),
            allowed,
        });
    }

    let st = Stepper {
        pair,
        branch,
        settings,
    };
    let stride = settings.sample_stride;
    let eta_end = eta0 + settings.eta_max_span;
    let margin_of = |p: &PhasePoint, id: SetId| event_margin(p, id, pair, branch);
    let inside_of = |p: &PhasePoint, id: SetId| margin_of(p, id) >= -MEMBER_TOL;

    let mut samples = vec![Sample {
        eta: eta0,
        point: *start,
        residuals: r0,
    }];
    let mut events = Vec::new();

    let mut inside: Vec<bool> = watch.iter().map(|&id| inside_of(start, id)).collect();
    for (i, &id) in watch.iter().enumerate() {
        if inside[i] {
            events.push(Event {
                kind: EventKind::EnterSet(id),
                eta: eta0,
            });
            if settings.stop_on_enter {
                return Ok(Trajectory {
                    samples,
                    events,
                    terminal: Terminal::StoppedOnEnter(id),
                });
            }
        }
    }
    let dist0: Vec<f64> = landmarks.iter().map(|l| start.distance(&l.point)).collect();
    let mut near: Vec<bool> = dist0.iter().map(|&d| d < NEAR_DISTANCE).collect();
    let mut armed: Vec<bool> = dist0.iter().map(|&d| d >= NEAR_DISTANCE).collect();
    let mut last_ratio = volume_ratio(start);

    let mut p = *start;
    let mut eta = eta0;
    let mut eta_lo = 0.0;
    let mut n_grid: u64 = 1;
    let mut h = stride.min(1e-2);
    let mut err_prev: f64 = 1.0;
    let mut steps = 0usize;

    let terminal = loop {
        if eta >= eta_end {
            break Terminal::SpanExhausted;
        }
        if steps >= settings.max_steps {
            break Terminal::StepFailure {
                reason: "max_steps exhausted",
            };
        }
        let next_grid = (eta0 + n_grid as f64 * stride).min(eta_end);
        let to_grid = (next_grid - eta) - eta_lo;
        let capped = h >= to_grid;
        let h_try = if capped { to_grid } else { h };
        if h_try <= 1e-6 * f64::EPSILON * eta.abs().max(1.0) {
            break Terminal::StepFailure {
                reason: "step size underflow",
            };
        }
        let y = p.to_array();
        let f0 = field_of(&y, pair);
        let (y1, errv) = dp_step(&y, &f0, h_try, pair);
        steps += 1;
        let en = st.error_norm(&y, &y1, &errv);
        if !en.is_finite() || en > 1.0 {
            let fac = if en.is_finite() { (0.9 * en.powf(-0.2)).max(0.2) } else { 0.2 };
            h = h_try * fac;
            continue;
        }
        let fac = (0.9 * en.max(1e-10).powf(-0.14) * err_prev.powf(0.08)).clamp(0.2, 5.0);
        err_prev = en.max(1e-4);
        let h_grow = h_try * fac;
        h = if capped { h.max(h_grow) } else { h_grow };

        let prev = p;
        let prev_eta = eta;
        p = st.post_process(y1);
        if capped {
            eta = next_grid;
            eta_lo = 0.0;
            n_grid += 1;
        } else {
            let (s, e) = two_sum(eta, h_try);
            (eta, eta_lo) = two_sum(s, eta_lo + e);
        }
        if !p.is_finite() {
            break Terminal::StepFailure {
                reason: "non-finite state",
            };
        }

        for (i, &id) in watch.iter().enumerate() {
            let now = inside_of(&p, id);
            if now != inside[i] {
                let mut lo = 0.0;
                let mut hi = h_try;
                while hi - lo > EVENT_RESOLUTION {
                    let mid = 0.5 * (lo + hi);
                    if inside_of(&st.substep(&prev, mid), id) == now {
                        hi = mid;
                    } else {
                        lo = mid;
                    }
                }
                let kind = if now {
                    EventKind::EnterSet(id)
                } else {
                    EventKind::ExitSet(id)
                };
                events.push(Event {
                    kind,
                    eta: prev_eta + 0.5 * (lo + hi),
                });
                inside[i] = now;
            }
        }

        let ratio = volume_ratio(&p);
        if let (Some(a), Some(b)) = (last_ratio, ratio) {
            if b > a * (1.0 + MONOTONE_SLACK) {
                events.push(Event {
                    kind: EventKind::MonotoneViolation {
                        quantity: "Z4/(Z1 Z2 Z3)^2",
                    },
                    eta,
                });
            }
        }
        last_ratio = ratio;

        let mut converged = None;
        for (i, l) in landmarks.iter().enumerate() {
            let d = p.distance(&l.point);
            if d >= NEAR_DISTANCE {
                armed[i] = true;
                near[i] = false;
            } else if !near[i] {
                near[i] = true;
                events.push(Event {
                    kind: EventKind::Near {
                        landmark: *l,
                        distance: d,
                    },
                    eta,
                });
            }
            if armed[i]
                && d < CONVERGED_DISTANCE
                && converged.is_none()
                && vector_field(&p, pair).inf_norm() < CONVERGED_FIELD
            {
                converged = Some(*l);
            }
        }

        let res = residuals(&p, pair, branch);
        let on_grid = capped;
        let mut stop = None;
        if let Some(c) = converged {
            stop = Some(Terminal::ConvergedTo(c));
        } else if p.inf_norm() > BLOWUP || p.z[3] > BLOWUP {
            stop = Some(Terminal::Blowup);
        } else if settings.projection == Projection::Off && res.relative_norm() > 1e3 * settings.rtol {
            stop = Some(Terminal::ConstraintBreach {
                residual: res.relative_norm(),
            });
        } else if settings.stop_on_enter {
            if let Some(e) = events.iter().find_map(|e| match e.kind {
                EventKind::EnterSet(s) => Some(s),
                _ => None,
            }) {
                stop = Some(Terminal::StoppedOnEnter(e));
            }
        }
        if on_grid || stop.is_some() {
            samples.push(Sample {
                eta,
                point: p,
                residuals: res,
            });
        }
        if let Some(t) = stop {
            break t;
        }
    };

    if samples.last().map(|s| s.eta) != Some(eta) {
        samples.push(Sample {
            eta,
            point: p,
            residuals: residuals(&p, pair, branch),
        });
    }
    Ok(Trajectory {
        samples,
        events,
        terminal,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct MonotoneReport {
    pub checked: usize,
    /// `(sample index, eta, relative increase)` for every flagged pair of samples.
    pub violations: Vec<(usize, f64, f64)>,
    pub max_relative_increase: f64,
}

/// Checks that `Z4 / (Z1 Z2 Z3)^2` never increases between consecutive samples.
pub fn monotone_check(traj: &Trajectory) -> Result<MonotoneReport> {
    let values: Vec<f64> = traj
        .samples
        .iter()
        .enumerate()
        .map(|(i, s)| volume_ratio(&s.point).ok_or(Error::DegenerateSample { index: i }))
        .collect::<Result<_>>()?;
    monotone_check_values(&values, &traj.samples.iter().map(|s| s.eta).collect::<Vec<_>>())
}

/// Harness behind [`monotone_check`] on a bare sequence.
pub fn monotone_check_values(values: &[f64], etas: &[f64]) -> Result<MonotoneReport> {
    if values.is_empty() {
        return Err(Error::EmptyTrajectory);
    }
    let mut violations = Vec::new();
    let mut worst: f64 = 0.0;
    for i in 1..values.len() {
        let (a, b) = (values[i - 1], values[i]);
        let rel = (b - a) / a.abs().max(f64::MIN_POSITIVE);
        worst = worst.max(rel);
        if b > a * (1.0 + MONOTONE_SLACK) {
            violations.push((i, etas.get(i).copied().unwrap_or(f64::NAN), rel));
        }
    }
    Ok(MonotoneReport {
        checked: values.len(),
        violations,
        max_relative_increase: worst,
    })
}

pub const CSV_HEADER: &str = "eta,X1,X2,X3,X4,Z1,Z2,Z3,Z4,res_cons,res_trace,res_s1,res_s2,res_s3,res_s4";

/// Serialises a trajectory with 17 significant digits per value.
pub fn to_csv(traj: &Trajectory) -> String {
    let mut out = String::with_capacity(traj.samples.len() * 256);
    out.push_str(CSV_HEADER);
    out.push('\n');
    for s in &traj.samples {
        let a = s.point.to_array();
        let r = &s.residuals;
        let row = [s.eta]
            .iter()
            .chain(a.iter())
            .chain([r.conservation, r.trace].iter())
            .chain(r.spin7.iter())
            .map(|v| format!("{v:.16e}"))
            .collect::<Vec<_>>()
            .join(",");
        out.push_str(&row);
        out.push('\n');
    }
    for e in &traj.events {
        let _ = writeln!(out, "# event,{},{:.16e}", e.kind, e.eta);
    }
    let _ = writeln!(out, "# terminal,{}", traj.terminal);
    out
}

/// One parsed CSV row.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CsvRow {
    pub eta: f64,
    pub point: PhasePoint,
    pub residuals: ResidualReport,
}

/// Parses the trajectory CSV format; comment lines are skipped.
pub fn parse_csv(text: &str) -> Result<Vec<CsvRow>> {
    let mut rows = Vec::new();
    let mut header_seen = false;
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if !header_seen {
            if line != CSV_HEADER {
                return Err(Error::Parse {
                    line: n + 1,
                    message: "unexpected header".into(),
                });
            }
            header_seen = true;
            continue;
        }
        let vals: Vec<f64> = line
            .split(',')
            .map(|t| t.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::Parse {
                line: n + 1,
                message: e.to_string(),
            })?;
        if vals.len() != 15 {
            return Err(Error::Parse {
                line: n + 1,
                message: format!("expected 15 columns, found {}", vals.len()),
            });
        }
        let point = PhasePoint::from_array(std::array::from_fn(|i| vals[1 + i]));
        let m = point.inf_norm();
        let residuals = ResidualReport {
            conservation: vals[9],
            trace: vals[10],
            spin7: [vals[11], vals[12], vals[13], vals[14]],
            zsum: zsum_expr(&point.to_array()),
            scale: 1.0 + crate::dynamics::eval_g(&point) + m * m,
        };
        rows.push(CsvRow {
            eta: vals[0],
            point,
            residuals,
        });
    }
    if !header_seen {
        return Err(Error::Parse {
            line: 0,
            message: "missing header".into(),
        });
    }
    Ok(rows)
}

impl Trajectory {
    /// Rebuilds a trajectory from parsed CSV rows; events are not restored.
    pub fn from_rows(rows: &[CsvRow]) -> Self {
        Trajectory {
            samples: rows
                .iter()
                .map(|r| Sample {
                    eta: r.eta,
                    point: r.point,
                    residuals: r.residuals,
                })
                .collect(),
            events: Vec::new(),
            terminal: Terminal::SpanExhausted,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::critical::{alc_point, solve_ac, type1_point};
    use crate::phase::{validate_pair, Orbit};

    fn p21() -> CoprimePair {
        validate_pair(2, 1).unwrap()
    }

    #[test]
    fn fixed_point_stays_put() {
        let pair = p21();
        let p0 = type1_point(&pair, Orbit::KplusL);
        let t = integrate(
            &p0.point,
            &pair,
            Branch::Plus,
            &IntegratorSettings::default(),
            &[],
            &[p0],
        )
        .unwrap();
        assert_eq!(t.terminal, Terminal::SpanExhausted);
        assert!(t.samples.iter().all(|s| s.point.distance(&p0.point) < 1e-15));
        assert_eq!(t.samples.len(), 1201);
    }

    #[test]
    fn samples_strictly_increase() {
        let pair = p21();
        let start = PhasePoint::new([0.3, 0.05, 0.02, 0.0], [0.0; 4]);
        let start = crate::phase::project_full(
            &PhasePoint::new(start.x, [0.15, 0.2, 0.18, 0.5]),
            &pair,
            Branch::Plus,
        );
        let s = IntegratorSettings {
            eta_max_span: 5.0,
            ..Default::default()
        };
        let t = integrate(&start, &pair, Branch::Plus, &s, &[], &[]).unwrap();
        assert!(t.samples.windows(2).all(|w| w[1].eta > w[0].eta));
        assert!((t.samples.last().unwrap().eta - 5.0).abs() < 1e-12);
    }

    #[test]
    fn agrees_with_fixed_step_reference() {
        let pair = p21();
        let start = crate::phase::project_full(
            &PhasePoint::new([0.0; 4], [0.15, 0.2, 0.18, 0.5]),
            &pair,
            Branch::Plus,
        );
        let s = IntegratorSettings {
            eta_max_span: 2.0,
            projection: Projection::Off,
            ..Default::default()
        };
        let t = integrate(&start, &pair, Branch::Plus, &s, &[], &[]).unwrap();
        let reference = rk4_fixed(&start, &pair, 1e-3, 2000);
        let d = t.last().unwrap().point.distance(&reference);
        assert!(d < 1e-9, "{d}");
    }

    #[test]
    fn off_surface_start_is_rejected() {
        let pair = p21();
        let p = PhasePoint::new([0.3, 0.3, 0.3, 0.3], [0.1; 4]);
        let r = integrate(&p, &pair, Branch::Plus, &IntegratorSettings::default(), &[], &[]);
        assert!(matches!(r, Err(Error::OffSurface { .. })));
    }

    #[test]
    fn invalid_settings_are_rejected() {
        let pair = p21();
        let s = IntegratorSettings {
            rtol: 0.0,
            ..Default::default()
        };
        let r = integrate(&alc_point().point, &pair, Branch::Plus, &s, &[], &[]);
        assert!(matches!(r, Err(Error::InvalidSettings(_))));
    }

    #[test]
    fn monotone_harness_flags_injected_increase() {
        let v = [5.0, 4.0, 3.0, 3.5, 2.0];
        let e = [0.0, 1.0, 2.0, 3.0, 4.0];
        let r = monotone_check_values(&v, &e).unwrap();
        assert_eq!(r.violations.len(), 1);
        assert_eq!(r.violations[0].0, 3);
    }

    #[test]
    fn monotone_constant_at_cone_point() {
        let pair = p21();
        let ac = solve_ac(&pair, Branch::Minus).unwrap();
        let s = IntegratorSettings {
            eta_max_span: 3.0,
            ..Default::default()
        };
        let t = integrate(&ac.point, &pair, Branch::Minus, &s, &[], &[]).unwrap();
        let r = monotone_check(&t).unwrap();
        assert!(r.violations.is_empty());
        assert!(r.max_relative_increase.abs() < 1e-12);
    }

    #[test]
    fn monotone_rejects_degenerate_samples() {
        let pair = p21();
        let p0 = type1_point(&pair, Orbit::KplusL);
        let s = IntegratorSettings {
            eta_max_span: 0.2,
            ..Default::default()
        };
        let t = integrate(&p0.point, &pair, Branch::Plus, &s, &[], &[]).unwrap();
        assert!(matches!(monotone_check(&t), Err(Error::DegenerateSample { index: 0 })));
    }

    #[test]
    fn csv_round_trip() {
        let pair = p21();
        let start = crate::phase::project_full(
            &PhasePoint::new([0.0; 4], [0.15, 0.2, 0.18, 0.5]),
            &pair,
            Branch::Plus,
        );
        let s = IntegratorSettings {
            eta_max_span: 1.0,
            ..Default::default()
        };
        let t = integrate(&start, &pair, Branch::Plus, &s, &[], &[]).unwrap();
        let text = to_csv(&t);
        let rows = parse_csv(&text).unwrap();
        assert_eq!(rows.len(), t.samples.len());
        for (r, s) in rows.iter().zip(&t.samples) {
            assert_eq!(r.eta, s.eta);
            assert_eq!(r.point, s.point);
        }
        assert!(text.lines().last().unwrap().starts_with("# terminal,"));
    }

    #[test]
    fn csv_rejects_garbage() {
        assert!(parse_csv("nope\n1,2").is_err());
        let bad = format!("{CSV_HEADER}\n1,2,3\n");
        assert!(matches!(parse_csv(&bad), Err(Error::Parse { line: 2, .. })));
    }
}
