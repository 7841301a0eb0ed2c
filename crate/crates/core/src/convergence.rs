//! Sample-count convergence: doubling until a relative stopping rule holds,
//! and fitting `v(s) = A / s^α + C` to read off the large-sample limit.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConvergencePolicy {
    pub start_samples: u64,
    pub max_samples: u64,
    pub rel_threshold: f64,
}

impl Default for ConvergencePolicy {
    fn default() -> Self {
        ConvergencePolicy {
            start_samples: 100_000,
            max_samples: 100_000_000,
            rel_threshold: 0.05,
        }
    }
}

impl ConvergencePolicy {
    /// Checks the thresholds and that the first measurement can populate a
    /// `bins × bins` table.
    pub fn validate(&self, bins: u32) -> Result<()> {
        if !(self.rel_threshold > 0.0 && self.rel_threshold < 1.0) {
            return Err(Error::Config(format!(
                "relative threshold must lie in (0, 1), got {}",
                self.rel_threshold
            )));
        }
        let min_start = (bins as u64).saturating_mul(bins as u64);
        if self.start_samples < min_start.max(1) {
            return Err(Error::Config(format!(
                "start samples {} below bins² = {min_start}",
                self.start_samples
            )));
        }
        if self.max_samples < self.start_samples {
            return Err(Error::Config(format!(
                "max samples {} below start samples {}",
                self.max_samples, self.start_samples
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TracePoint {
    pub samples: u64,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceOutcome {
    pub value: f64,
    pub samples_used: u64,
    pub converged: bool,
    pub trace: Vec<TracePoint>,
}

/// Evaluates `measure` at `s, 2s, 4s, …` from `policy.start_samples` and
/// stops once the change over the last doubling is below
/// `rel_threshold · |latest|`. When the next doubling would pass
/// `max_samples` the latest value is returned with `converged = false`.
pub fn doubling_until_converged<F>(mut measure: F, policy: &ConvergencePolicy) -> Result<ConvergenceOutcome>
where
    F: FnMut(u64) -> Result<f64>,
{
    if policy.start_samples == 0 || policy.max_samples < policy.start_samples {
        return Err(Error::Config("doubling needs 0 < start_samples <= max_samples".into()));
    }
    let mut s = policy.start_samples;
    let mut prev = measure(s)?;
    let mut trace = vec![TracePoint {
        samples: s,
        value: prev,
    }];
    loop {
        let next = match s.checked_mul(2) {
            Some(n) if n <= policy.max_samples => n,
            _ => {
                return Ok(ConvergenceOutcome {
                    value: prev,
                    samples_used: s,
                    converged: false,
                    trace,
                })
            }
        };
        let v = measure(next)?;
        trace.push(TracePoint {
            samples: next,
            value: v,
        });
        let delta = (v - prev).abs();
        log::debug!("doubling: {next} samples, value {v}, delta {delta}");
        if delta == 0.0 || delta < policy.rel_threshold * v.abs() {
            return Ok(ConvergenceOutcome {
                value: v,
                samples_used: next,
                converged: true,
                trace,
            });
        }
        s = next;
        prev = v;
    }
}

/// Sample counts 100K, 200K, …, 2M used for extrapolation fits.
pub fn extrapolation_schedule() -> Vec<u64> {
    (1..=20).map(|k| k * 100_000).collect()
}

/// Sample count at which fitted curves are read off as the asymptote.
pub const EXTRAPOLATION_HORIZON: f64 = 1e15;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExtrapolationFit {
    pub a: f64,
    pub alpha: f64,
    pub c: f64,
    /// Sum of squared errors over the fitted points.
    pub residual: f64,
}

const ALPHA_MIN: f64 = 0.05;
const ALPHA_MAX: f64 = 2.0;
const ALPHA_GRID: usize = 200;

fn alpha_grid() -> impl Iterator<Item = f64> {
    let ratio = (ALPHA_MAX / ALPHA_MIN).ln();
    (0..ALPHA_GRID).map(move |k| ALPHA_MIN * (ratio * k as f64 / (ALPHA_GRID - 1) as f64).exp())
}

/// Least-squares `(A, C)` at a fixed exponent, with `C ≥ 0`.
fn solve_at(points: &[(f64, f64)], alpha: f64) -> ExtrapolationFit {
    let n = points.len() as f64;
    let u: Vec<f64> = points.iter().map(|&(s, _)| s.powf(-alpha)).collect();
    let mu = u.iter().sum::<f64>() / n;
    let mv = points.iter().map(|p| p.1).sum::<f64>() / n;
    let (mut suu, mut suv) = (0.0, 0.0);
    for (ui, &(_, v)) in u.iter().zip(points) {
        suu += (ui - mu) * (ui - mu);
        suv += (ui - mu) * (v - mv);
    }
    let (mut a, mut c) = if suu > 0.0 {
        let a = suv / suu;
        (a, mv - a * mu)
    } else {
        (0.0, mv)
    };
    if c < 0.0 {
        let uu: f64 = u.iter().map(|x| x * x).sum();
        let uv: f64 = u.iter().zip(points).map(|(x, p)| x * p.1).sum();
        a = if uu > 0.0 { uv / uu } else { 0.0 };
        c = 0.0;
    }
    let residual = u
        .iter()
        .zip(points)
        .map(|(x, &(_, v))| {
            let e = v - (a * x + c);
            e * e
        })
        .sum();
    ExtrapolationFit { a, alpha, c, residual }
}

/// Fits `v = A / s^α + C` to `(samples, value)` points: a log-spaced scan of
/// α over `[0.05, 2]` with an exact linear solve for `(A, C)` at each α,
/// followed by golden-section refinement of α around the best grid cell.
pub fn fit_extrapolation(points: &[(f64, f64)]) -> Result<ExtrapolationFit> {
    if points.len() < 4 {
        return Err(Error::Config(format!(
            "need at least 4 points to fit, got {}",
            points.len()
        )));
    }
    for &(s, v) in points {
        if !(s.is_finite() && s > 0.0) || !v.is_finite() {
            return Err(Error::Domain(format!("invalid fit point ({s}, {v})")));
        }
    }
    let mut xs: Vec<f64> = points.iter().map(|p| p.0).collect();
    xs.sort_by(f64::total_cmp);
    if xs.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::Config("fit points need distinct sample counts".into()));
    }
    let first = points[0].1;
    if points.iter().all(|p| p.1 == first) {
        return Ok(ExtrapolationFit {
            a: 0.0,
            alpha: ALPHA_MIN,
            c: first,
            residual: 0.0,
        });
    }

    let grid: Vec<f64> = alpha_grid().collect();
    let fits: Vec<ExtrapolationFit> = grid.iter().map(|&a| solve_at(points, a)).collect();
    let best = (0..fits.len())
        .min_by(|&i, &j| fits[i].residual.total_cmp(&fits[j].residual))
        .expect("non-empty grid");

    let mut lo = grid[best.saturating_sub(1)];
    let mut hi = grid[(best + 1).min(grid.len() - 1)];
    let phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = hi - phi * (hi - lo);
    let mut x2 = lo + phi * (hi - lo);
    let mut f1 = solve_at(points, x1);
    let mut f2 = solve_at(points, x2);
    for _ in 0..200 {
        if hi - lo <= 1e-14 * hi {
            break;
        }
        if f1.residual <= f2.residual {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - phi * (hi - lo);
            f1 = solve_at(points, x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + phi * (hi - lo);
            f2 = solve_at(points, x2);
        }
    }
    Ok([fits[best], f1, f2]
        .into_iter()
        .min_by(|a, b| a.residual.total_cmp(&b.residual))
        .expect("three candidates"))
}

/// Evaluates the fitted curve at `s` samples.
pub fn extrapolate(fit: &ExtrapolationFit, s: f64) -> Result<f64> {
    if !(s.is_finite() && s > 0.0) {
        return Err(Error::Domain(format!("sample count must be positive, got {s}")));
    }
    Ok(fit.a * s.powf(-fit.alpha) + fit.c)
}

/// Writes `samples,value` rows with a header.
pub fn write_trace_csv<W: Write>(trace: &[TracePoint], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let io = |e: csv::Error| Error::Config(format!("writing convergence trace: {e}"));
    w.write_record(["samples", "value"]).map_err(io)?;
    for p in trace {
        w.write_record([p.samples.to_string(), p.value.to_string()])
            .map_err(io)?;
    }
    w.flush()
        .map_err(|e| Error::Config(format!("writing convergence trace: {e}")))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn synthetic(a: f64, alpha: f64, c: f64) -> Vec<(f64, f64)> {
        extrapolation_schedule()
            .into_iter()
            .map(|s| (s as f64, a / (s as f64).powf(alpha) + c))
            .collect()
    }

    #[test]
    fn constant_measure_stops_after_one_doubling() {
        let policy = ConvergencePolicy::default();
        let out = doubling_until_converged(|_| Ok(1.25), &policy).unwrap();
        assert!(out.converged);
        assert_eq!(out.samples_used, 2 * policy.start_samples);
        assert_eq!(out.trace.len(), 2);
        assert_eq!(out.value, 1.25);
    }

    #[test]
    fn power_law_measure_converges_near_limit() {
        let out =
            doubling_until_converged(|s| Ok(3.0 / (s as f64).sqrt() + 2.0), &ConvergencePolicy::default()).unwrap();
        assert!(out.converged);
        assert!(out.samples_used <= 100_000_000);
        assert!((out.value - 2.0).abs() < 0.05 * 2.0);
    }

    #[test]
    fn diverging_measure_is_flagged() {
        let policy = ConvergencePolicy::default();
        let out = doubling_until_converged(|s| Ok((s as f64).powi(2)), &policy).unwrap();
        assert!(!out.converged);
        assert!(out.samples_used <= policy.max_samples);
        assert!(out.samples_used * 2 > policy.max_samples);
    }

    #[test]
    fn eventually_constant_measure_returns_constant() {
        let policy = ConvergencePolicy::default();
        let out = doubling_until_converged(|s| Ok(if s < 1_000_000 { s as f64 } else { 0.75 }), &policy).unwrap();
        assert!(out.converged);
        assert_eq!(out.value, 0.75);
    }

    #[test]
    fn measure_errors_propagate() {
        let r = doubling_until_converged(|_| Err(Error::EmptyData("x")), &ConvergencePolicy::default());
        assert!(matches!(r, Err(Error::EmptyData(_))));
    }

    #[test]
    fn policy_validation() {
        assert!(ConvergencePolicy::default().validate(8).is_ok());
        let p = ConvergencePolicy {
            rel_threshold: 1.0,
            ..Default::default()
        };
        assert!(p.validate(8).is_err());
        let p = ConvergencePolicy {
            start_samples: 100,
            ..Default::default()
        };
        assert!(p.validate(16).is_err());
    }

    #[test]
    fn noiseless_fit_recovers_asymptote() {
        let fit = fit_extrapolation(&synthetic(3.0, 0.5, 2.0)).unwrap();
        assert!((fit.c - 2.0).abs() < 1e-6, "{fit:?}");
        assert!((fit.alpha - 0.5).abs() < 1e-4, "{fit:?}");
        let far = extrapolate(&fit, EXTRAPOLATION_HORIZON).unwrap();
        assert!((far - 2.0).abs() < 1e-6);
    }

    #[test]
    fn constant_series_is_degenerate_fit() {
        let pts: Vec<(f64, f64)> = extrapolation_schedule().iter().map(|&s| (s as f64, 1.5)).collect();
        let fit = fit_extrapolation(&pts).unwrap();
        assert_eq!(fit.a, 0.0);
        assert_eq!(fit.c, 1.5);
        assert_eq!(fit.alpha, ALPHA_MIN);
    }

    #[test]
    fn extrapolate_closed_forms() {
        let fit = ExtrapolationFit {
            a: 3.0,
            alpha: 0.5,
            c: 2.0,
            residual: 0.0,
        };
        assert!((extrapolate(&fit, 1e15).unwrap() - 2.000_000_094_868_33).abs() < 1e-12);
        assert_eq!(extrapolate(&fit, 1.0).unwrap(), 5.0);
        let flat = ExtrapolationFit { a: 0.0, ..fit };
        assert_eq!(extrapolate(&flat, 123.0).unwrap(), 2.0);
        assert!(extrapolate(&fit, 0.0).is_err());
    }

    #[test]
    fn fit_rejects_bad_input() {
        assert!(fit_extrapolation(&[(1.0, 1.0), (2.0, 1.0), (3.0, 1.0)]).is_err());
        assert!(fit_extrapolation(&[(1.0, 1.0), (1.0, 2.0), (3.0, 1.0), (4.0, 0.0)]).is_err());
        assert!(fit_extrapolation(&[(0.0, 1.0), (1.0, 2.0), (3.0, 1.0), (4.0, 0.0)]).is_err());
    }

    #[test]
    fn trace_csv_has_header_and_rows() {
        let mut buf = Vec::new();
        let trace = [
            TracePoint {
                samples: 10,
                value: 0.5,
            },
            TracePoint {
                samples: 20,
                value: 0.25,
            },
        ];
        write_trace_csv(&trace, &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "samples,value\n10,0.5\n20,0.25\n");
    }

    proptest! {
        #[test]
        fn fit_beats_constant_model(vals in proptest::collection::vec(0.0f64..5.0, 4..12)) {
            let pts: Vec<(f64, f64)> = vals.iter().enumerate().map(|(k, &v)| (1e5 * (k + 1) as f64, v)).collect();
            let fit = fit_extrapolation(&pts).unwrap();
            let mean = vals.iter().sum::<f64>() / vals.len() as f64;
            let flat: f64 = vals.iter().map(|v| (v - mean).powi(2)).sum();
            prop_assert!(fit.residual <= flat * (1.0 + 1e-12) + 1e-15);
            prop_assert!(fit.c >= 0.0);
            prop_assert!(fit.alpha > 0.0);
        }

        #[test]
        fn positive_curve_decreases_in_samples(a in 0.01f64..10.0, alpha in 0.05f64..2.0, c in 0.0f64..5.0, s in 1.0f64..1e12) {
            let fit = ExtrapolationFit { a, alpha, c, residual: 0.0 };
            prop_assert!(extrapolate(&fit, s * 2.0).unwrap() <= extrapolate(&fit, s).unwrap());
        }
    }
}
