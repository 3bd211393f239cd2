//! Peak, average and half times of the hitting-rate curve, and sweeps over
//! release radius and aspect ratio.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::Serialize;

use crate::analytic::{select_truncation, ChannelGeometry, ImpulseModel};
use crate::eigen::{roots_below, ModeCache};
use crate::error::{Error, Result};
use crate::specfun::MAX_ARGUMENT;

const GRID_POINTS: usize = 80;
const GOLDEN_TOL: f64 = 1e-7;
const INV_PHI: f64 = 0.618_033_988_749_894_9;

/// Characteristic times of one geometry, in seconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CharacteristicTimes {
    pub geometry: ChannelGeometry,
    pub tau_peak: f64,
    pub tau_average: f64,
    pub tau_half: f64,
}

fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let (a, b) = (lo.ln(), hi.ln());
    (0..n).map(|i| (a + (b - a) * i as f64 / (n - 1) as f64).exp()).collect()
}

/// Time of the maximum of the hitting rate.
///
/// A log-spaced scan of `(r0 - d0)^2 / (4 D) * [1/100, 100]` (clipped to the
/// certified range, widened upward if needed) brackets the maximum, and a
/// golden-section search refines it.
pub fn peak_time(model: &ImpulseModel) -> Result<f64> {
    let g = model.geometry();
    let seed = (g.r0 - g.d0).powi(2) / (4.0 * g.diffusion);
    let floor = model.t_min();
    let mut lo = (seed / 100.0).max(floor);
    let mut hi = (seed * 100.0).max(lo * 10.0);
    for _ in 0..6 {
        let grid = log_grid(lo, hi, GRID_POINTS);
        let values = grid.iter().map(|&t| model.hitting_rate(t)).collect::<Result<Vec<_>>>()?;
        let best = (0..values.len())
            .max_by(|&i, &j| values[i].total_cmp(&values[j]))
            .expect("non-empty grid");
        if best == 0 {
            if lo <= floor {
                return Err(Error::Numerical(format!(
                    "rate maximum lies at or before the certified time {floor:e} s"
                )));
            }
            lo = (lo / 100.0).max(floor);
            continue;
        }
        if best == values.len() - 1 {
            hi *= 100.0;
            continue;
        }
        return golden_max(|t| model.hitting_rate(t), grid[best - 1], grid[best + 1]);
    }
    Err(Error::Numerical("could not bracket the rate maximum".into()))
}

fn golden_max(f: impl Fn(f64) -> Result<f64>, mut a: f64, mut b: f64) -> Result<f64> {
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let mut fc = f(c)?;
    let mut fd = f(d)?;
    while (b - a) > GOLDEN_TOL * 0.5 * (a + b) {
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = f(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = f(d)?;
        }
    }
    Ok(0.5 * (a + b))
}

/// Median absorption time: the root of `cumulative(t) = 1/2`.
pub fn half_time(model: &ImpulseModel) -> Result<f64> {
    let mut lo = model.t_min();
    if model.cumulative_hits(lo)? >= 0.5 {
        return Err(Error::Numerical(format!(
            "half of the absorption happens before the certified time {lo:e} s"
        )));
    }
    let mut hi = 2.0 * lo;
    while model.cumulative_hits(hi)? < 0.5 {
        lo = hi;
        hi *= 2.0;
        if !hi.is_finite() {
            return Err(Error::Numerical("cumulative absorption never reaches 1/2".into()));
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if hi - lo <= 1e-13 * mid {
            break;
        }
        if model.cumulative_hits(mid)? < 0.5 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

pub fn characteristic_times(model: &ImpulseModel) -> Result<CharacteristicTimes> {
    Ok(CharacteristicTimes {
        geometry: *model.geometry(),
        tau_peak: peak_time(model)?,
        tau_average: model.average_time(),
        tau_half: half_time(model)?,
    })
}

/// One sweep point; failed points keep their error.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub alpha: f64,
    pub r0: f64,
    pub times: std::result::Result<CharacteristicTimes, Error>,
}

/// Earliest certifiable time for order 0 at `tol`, given the eigenvalue cap.
pub fn earliest_time(geom: &ChannelGeometry, tol: f64) -> Result<f64> {
    let roots = roots_below(0, geom.aspect_ratio()?, MAX_ARGUMENT)?;
    let last = *roots.last().ok_or_else(|| Error::Numerical("no eigenvalues below the cap".into()))?;
    // A hair above the exact bound so the last root certifies it.
    Ok(-tol.ln() / (geom.rate_scale() * last * last) * (1.0 + 1e-9))
}

/// Characteristic times over release radii and aspect ratios.
///
/// `outer_radius` and `diffusion` are fixed; for each `alpha` the receiver is
/// `d0 = alpha * outer_radius` and every `r0` in `radii` is evaluated. The
/// series is truncated at the earliest time the eigenvalue cap allows, and
/// each aspect ratio's modes come from `cache`. Rows are ordered by
/// `(alpha, r0)` as given.
pub fn sweep(
    outer_radius: f64,
    diffusion: f64,
    alphas: &[f64],
    radii: &[f64],
    tol: f64,
    cache: &ModeCache,
) -> Vec<SweepRow> {
    let mut rows = Vec::with_capacity(alphas.len() * radii.len());
    for &alpha in alphas {
        let d0 = alpha * outer_radius;
        let setup = || -> Result<_> {
            // Any admissible release radius fixes the truncation.
            let probe = ChannelGeometry::new(d0, outer_radius, 0.5 * (d0 + outer_radius), diffusion)?;
            let t_min = earliest_time(&probe, tol)?;
            let truncation = select_truncation(&probe, t_min, tol, false)?;
            let modes = cache.get(probe.aspect_ratio()?, 0, truncation.radial[0])?;
            Ok((truncation, modes))
        };
        let prepared = setup();
        let per_alpha: Vec<SweepRow> = radii
            .par_iter()
            .map(|&r0| {
                let times = match &prepared {
                    Err(e) => Err(e.clone()),
                    Ok((truncation, modes)) => ChannelGeometry::new(d0, outer_radius, r0, diffusion)
                        .and_then(|g| ImpulseModel::new(g, modes, truncation.clone()))
                        .and_then(|m| characteristic_times(&m)),
                };
                SweepRow { alpha, r0, times }
            })
            .collect();
        rows.extend(per_alpha);
    }
    rows
}

/// Sweep CSV with header `alpha,r0,tau_peak,tau_average,tau_half`; failed points have `NaN` times.
pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from("alpha,r0,tau_peak,tau_average,tau_half\n");
    for row in rows {
        let (p, a, h) = match &row.times {
            Ok(t) => (t.tau_peak, t.tau_average, t.tau_half),
            Err(_) => (f64::NAN, f64::NAN, f64::NAN),
        };
        let _ = writeln!(out, "{:.16e},{:.16e},{p:.16e},{a:.16e},{h:.16e}", row.alpha, row.r0);
    }
    out
}

/// Log-log slope analysis of one time column against `r0 - d0`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SlopeAnalysis {
    /// Least-squares slope over points with `r0 - d0 <= l_c / 3`.
    pub near_slope: f64,
    /// `((r0 - d0) / l_c, slope)` for every sliding triple, at the middle point.
    pub local: Vec<(f64, f64)>,
    /// First `(r0 - d0) / l_c` whose local slope deviates from 2 by more than 10%.
    pub transition: Option<f64>,
}

fn fit_slope(points: &[(f64, f64)]) -> f64 {
    let n = points.len() as f64;
    let (sx, sy) = points.iter().fold((0.0, 0.0), |(a, b), &(x, y)| (a + x.ln(), b + y.ln()));
    let (mx, my) = (sx / n, sy / n);
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for &(x, y) in points {
        sxy += (x.ln() - mx) * (y.ln() - my);
        sxx += (x.ln() - mx).powi(2);
    }
    sxy / sxx
}

/// `distances` are `r0 - d0` values in increasing order, `values` the times.
pub fn slope_analysis(distances: &[f64], values: &[f64], channel_length: f64) -> Result<SlopeAnalysis> {
    if distances.len() != values.len() || distances.len() < 3 {
        return Err(Error::Domain("slope analysis needs at least three matching points".into()));
    }
    let pts: Vec<(f64, f64)> = distances.iter().copied().zip(values.iter().copied()).collect();
    let near: Vec<(f64, f64)> =
        pts.iter().copied().filter(|&(x, _)| x <= channel_length / 3.0).collect();
    if near.len() < 2 {
        return Err(Error::Domain("fewer than two points in the near region".into()));
    }
    let local: Vec<(f64, f64)> = pts
        .windows(3)
        .map(|w| (w[1].0 / channel_length, fit_slope(w)))
        .collect();
    let transition = local
        .iter()
        .find(|&&(_, s)| (s / 2.0 - 1.0).abs() > 0.1)
        .map(|&(x, _)| x);
    Ok(SlopeAnalysis { near_slope: fit_slope(&near), local, transition })
}
