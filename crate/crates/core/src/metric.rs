//! Recovery of the metric coefficients `(t, a, b, c, f)` from a phase trajectory.

use std::fmt::Write as _;

use crate::dynamics::eval_g;
use crate::error::{Error, Result};
use crate::integrator::Trajectory;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricRow {
    pub t: f64,
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub f: f64,
    pub trl: f64,
}

impl MetricRow {
    /// All four coefficients finite.
    pub fn is_regular(&self) -> bool {
        self.a.is_finite() && self.b.is_finite() && self.c.is_finite() && self.f.is_finite()
    }
}

/// Integration constants fixed at the first sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Gauge {
    pub eta_ref: f64,
    pub trl_ref: f64,
    /// Estimate of how far the first sample sits from the singular orbit in `t`.
    pub t_ref: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricProfile {
    pub rows: Vec<MetricRow>,
    pub gauge: Gauge,
}

fn inv_sqrt_or_inf(u: f64, p: f64) -> f64 {
    if p > 0.0 {
        u / p.sqrt()
    } else {
        f64::INFINITY
    }
}

/// Integrates `(1/trL)' = G/trL` and `t' = 1/trL` by the trapezoid rule on the sample grid.
pub fn reconstruct(traj: &Trajectory, gauge_trl0: f64) -> Result<MetricProfile> {
    if traj.samples.is_empty() {
        return Err(Error::EmptyTrajectory);
    }
    if !(gauge_trl0 > 0.0) || !gauge_trl0.is_finite() {
        return Err(Error::NonPositiveGauge(gauge_trl0));
    }
    let s = &traj.samples;
    let mut log_u = -gauge_trl0.ln();
    let mut u = 1.0 / gauge_trl0;
    let mut t = 0.0;
    let mut g_prev = eval_g(&s[0].point);
    let mut rows = Vec::with_capacity(s.len());
    for (i, smp) in s.iter().enumerate() {
        let g = eval_g(&smp.point);
        if i > 0 {
            let h = smp.eta - s[i - 1].eta;
            log_u += 0.5 * h * (g_prev + g);
            let u_new = log_u.exp();
            t += 0.5 * h * (u + u_new);
            u = u_new;
        }
        g_prev = g;
        let [z1, z2, z3, z4] = smp.point.z;
        rows.push(MetricRow {
            t,
            a: inv_sqrt_or_inf(u, z2 * z3),
            b: inv_sqrt_or_inf(u, z1 * z3),
            c: inv_sqrt_or_inf(u, z1 * z2),
            f: z4 * u,
            trl: 1.0 / u,
        });
    }
    let g0 = eval_g(&s[0].point);
    Ok(MetricProfile {
        rows,
        gauge: Gauge {
            eta_ref: s[0].eta,
            trl_ref: gauge_trl0,
            t_ref: if g0 > 0.0 { 1.0 / (gauge_trl0 * g0) } else { f64::NAN },
        },
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AsymptoticKind {
    Alc,
    Ac,
    Inconclusive,
}

impl AsymptoticKind {
    pub fn name(self) -> &'static str {
        match self {
            AsymptoticKind::Alc => "ALC",
            AsymptoticKind::Ac => "AC",
            AsymptoticKind::Inconclusive => "Inconclusive",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearFit {
    pub intercept: f64,
    pub slope: f64,
    /// RMS residual divided by the largest magnitude in the window.
    pub relative_residual: f64,
}

/// Ordinary least squares `y = intercept + slope * x`.
pub fn fit_line(x: &[f64], y: &[f64]) -> LinearFit {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx) * (v - mx)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let intercept = my - slope * mx;
    let rss: f64 = x
        .iter()
        .zip(y)
        .map(|(a, b)| (b - intercept - slope * a).powi(2))
        .sum();
    let ymax = y.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let relative_residual = if ymax > 0.0 { (rss / n).sqrt() / ymax } else { 0.0 };
    LinearFit {
        intercept,
        slope,
        relative_residual,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Asymptotics {
    pub kind: AsymptoticKind,
    pub f_limit: Option<f64>,
    /// Slopes of `a, b, c, f` against `t` in the fit window.
    pub slopes: Option<[f64; 4]>,
    pub fit_window: (f64, f64),
    /// Largest relative residual among the fits the verdict relies on.
    pub fit_residual: f64,
    /// `(max f - min f) / mean f` over the window.
    pub f_variation: f64,
}

/// Relative fit residual below which a component counts as linear.
pub const LINEAR_TOL: f64 = 1e-3;
/// Relative variation of `f` below which it counts as settled.
pub const F_SETTLED: f64 = 0.01;

/// Fits the final decade of `t` and decides between locally conical and conical ends.
pub fn classify_asymptotics(profile: &MetricProfile) -> Result<Asymptotics> {
    let last = profile.rows.last().ok_or(Error::EmptyTrajectory)?;
    let scale = 1.0 / profile.gauge.trl_ref;
    let t_max = last.t;
    let decades = if t_max > 0.0 { (t_max / scale).log10() } else { f64::NEG_INFINITY };
    if !(decades >= 2.0) {
        return Err(Error::WindowTooShort {
            decades: decades.max(-99.0),
        });
    }
    let t_lo = t_max / 10.0;
    let window: Vec<&MetricRow> = profile
        .rows
        .iter()
        .filter(|r| r.t >= t_lo && r.is_regular())
        .collect();
    let inconclusive = |fit_residual: f64, f_variation: f64| Asymptotics {
        kind: AsymptoticKind::Inconclusive,
        f_limit: None,
        slopes: None,
        fit_window: (t_lo, t_max),
        fit_residual,
        f_variation,
    };
    if window.len() < 3 {
        return Ok(inconclusive(f64::INFINITY, f64::NAN));
    }
    let t: Vec<f64> = window.iter().map(|r| r.t).collect();
    let fits: Vec<LinearFit> = [
        window.iter().map(|r| r.a).collect::<Vec<_>>(),
        window.iter().map(|r| r.b).collect(),
        window.iter().map(|r| r.c).collect(),
        window.iter().map(|r| r.f).collect(),
    ]
    .iter()
    .map(|y| fit_line(&t, y))
    .collect();
    let slopes = [fits[0].slope, fits[1].slope, fits[2].slope, fits[3].slope];
    let f_vals: Vec<f64> = window.iter().map(|r| r.f).collect();
    let f_mean = f_vals.iter().sum::<f64>() / f_vals.len() as f64;
    let f_max = f_vals.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v));
    let f_min = f_vals.iter().fold(f64::INFINITY, |m, &v| m.min(v));
    let f_variation = if f_mean > 0.0 { (f_max - f_min) / f_mean } else { f64::INFINITY };
    let abc_res = fits[..3].iter().map(|f| f.relative_residual).fold(0.0, f64::max);
    let abc_grow = slopes[..3].iter().all(|&s| s > 0.0);

    if abc_grow && abc_res < LINEAR_TOL && f_mean > 0.0 && f_variation < F_SETTLED {
        return Ok(Asymptotics {
            kind: AsymptoticKind::Alc,
            f_limit: Some(window.last().unwrap().f),
            slopes: Some(slopes),
            fit_window: (t_lo, t_max),
            fit_residual: abc_res,
            f_variation,
        });
    }
    let all_res = abc_res.max(fits[3].relative_residual);
    if abc_grow && all_res < LINEAR_TOL && slopes[3] > 1e-3 * slopes[0] {
        return Ok(Asymptotics {
            kind: AsymptoticKind::Ac,
            f_limit: None,
            slopes: Some(slopes),
            fit_window: (t_lo, t_max),
            fit_residual: all_res,
            f_variation,
        });
    }
    Ok(inconclusive(all_res, f_variation))
}

pub const PROFILE_HEADER: &str = "t,a,b,c,f,trL";

pub fn profile_to_csv(profile: &MetricProfile) -> String {
    let mut out = String::with_capacity(profile.rows.len() * 150);
    out.push_str(PROFILE_HEADER);
    out.push('\n');
    for r in &profile.rows {
        let _ = writeln!(
            out,
            "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
            r.t, r.a, r.b, r.c, r.f, r.trl
        );
    }
    out
}

/// Key-value report for a classification.
pub fn asymptotics_report(a: &Asymptotics) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "kind: {}", a.kind.name());
    if let Some(f) = a.f_limit {
        let _ = writeln!(out, "f_limit: {f:.16e}");
    }
    if let Some(s) = a.slopes {
        let _ = writeln!(out, "slopes: {:.16e} {:.16e} {:.16e} {:.16e}", s[0], s[1], s[2], s[3]);
    }
    let _ = writeln!(out, "fit_window: {:.16e} {:.16e}", a.fit_window.0, a.fit_window.1);
    let _ = writeln!(out, "fit_residual: {:.3e}", a.fit_residual);
    let _ = writeln!(out, "f_variation: {:.3e}", a.f_variation);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::critical::{alc_point, solve_ac};
    use crate::integrator::{integrate, IntegratorSettings};
    use crate::phase::{validate_pair, Branch};

    fn constant_run(p: crate::phase::PhasePoint, branch: Branch, span: f64) -> Trajectory {
        let pair = validate_pair(2, 1).unwrap();
        let s = IntegratorSettings {
            eta_max_span: span,
            ..Default::default()
        };
        integrate(&p, &pair, branch, &s, &[], &[]).unwrap()
    }

    #[test]
    fn errors() {
        let t = Trajectory {
            samples: vec![],
            events: vec![],
            terminal: crate::integrator::Terminal::SpanExhausted,
        };
        assert_eq!(reconstruct(&t, 1.0), Err(Error::EmptyTrajectory));
        let t = constant_run(alc_point().point, Branch::Plus, 1.0);
        assert_eq!(reconstruct(&t, 0.0), Err(Error::NonPositiveGauge(0.0)));
    }

    #[test]
    fn cone_is_exactly_linear() {
        let pair = validate_pair(2, 1).unwrap();
        let ac = solve_ac(&pair, Branch::Plus).unwrap();
        let t = constant_run(ac.point, Branch::Plus, 60.0);
        let prof = reconstruct(&t, 1.0).unwrap();
        for r in &prof.rows {
            assert!((r.f * r.trl - ac.point.z[3]).abs() < 1e-8 * ac.point.z[3]);
        }
        let a = classify_asymptotics(&prof).unwrap();
        assert_eq!(a.kind, AsymptoticKind::Ac);
        assert!(a.fit_residual < 1e-10, "{}", a.fit_residual);
    }

    #[test]
    fn alc_point_flags_vanishing_fibre() {
        let t = constant_run(alc_point().point, Branch::Plus, 2.0);
        let prof = reconstruct(&t, 1.0).unwrap();
        assert!(prof.rows.iter().all(|r| r.f == 0.0 && r.a.is_finite()));
    }

    #[test]
    fn short_run_is_rejected() {
        let pair = validate_pair(2, 1).unwrap();
        let ac = solve_ac(&pair, Branch::Minus).unwrap();
        let prof = reconstruct(&constant_run(ac.point, Branch::Minus, 5.0), 1.0).unwrap();
        assert!(matches!(
            classify_asymptotics(&prof),
            Err(Error::WindowTooShort { .. })
        ));
    }

    #[test]
    fn line_fit_recovers_coefficients() {
        let x: Vec<f64> = (0..10).map(|i| i as f64).collect();
        let y: Vec<f64> = x.iter().map(|v| 3.0 - 0.5 * v).collect();
        let f = fit_line(&x, &y);
        assert!((f.slope + 0.5).abs() < 1e-14 && (f.intercept - 3.0).abs() < 1e-13);
        assert!(f.relative_residual < 1e-15);
    }
}
