//! Brownian-dynamics simulation of the channel.
//!
//! Each particle starts at `(r0, 0)` and takes Euler steps with independent
//! `N(0, 2 D dt)` increments per axis. Absorption is tested at step endpoints
//! only; the recorded angle is where the last step's segment first meets the
//! receiver circle. The outer wall folds overshooting endpoints back radially.
//!
//! Every particle draws from its own ChaCha8 stream (key from the seed, stream
//! number from the particle index), so results do not depend on scheduling.
//!
//! Far from every boundary, `k` steps can be drawn as one Gaussian step of
//! variance `2 D k dt` without changing the law of what is recorded: the
//! endpoints that were skipped could only have mattered by crossing a
//! boundary at least `MACRO_MARGIN` standard deviations away.

use std::f64::consts::PI;
use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;

use crate::analytic::{ChannelGeometry, ImpulseModel, ImpulseResponse};
use crate::error::{domain, Error, Result};
use crate::specfun::gaussian_tail;

/// Safety distance for merged steps, in units of the merged step's standard deviation.
/// The chance that a skipped endpoint crossed the boundary is below `4 Q(8)`, about 2.5e-15.
pub const MACRO_MARGIN: f64 = 8.0;
const MAX_MERGED: u64 = 1 << 20;
/// Stream offset for the axial coordinate, keeping it independent of the planar walk.
const AXIAL_STREAM: u64 = 1 << 63;

/// Monte-Carlo run settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct McConfig {
    pub n_particles: usize,
    /// Time step, s.
    pub dt: f64,
    /// Horizon, s.
    pub t_max: f64,
    pub seed: u64,
    /// Counting half-angle; `None` counts the whole receiver.
    pub theta_f: Option<f64>,
    /// Merge steps far from the boundaries.
    pub merge_steps: bool,
}

impl McConfig {
    /// Defaults: `dt = 1e-4` s, merged steps enabled.
    pub fn new(n_particles: usize, t_max: f64, seed: u64) -> Self {
        Self { n_particles, dt: 1e-4, t_max, seed, theta_f: None, merge_steps: true }
    }

    /// Step size and horizon checks against a geometry.
    pub fn check(&self, geom: &ChannelGeometry) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::Config(format!("time step {} must be positive", self.dt)));
        }
        if !(self.t_max >= self.dt && self.t_max.is_finite()) {
            return Err(Error::Config(format!(
                "horizon {} must be at least one time step",
                self.t_max
            )));
        }
        if let Some(theta) = self.theta_f {
            if !(theta > 0.0 && theta <= PI) {
                return Err(Error::Config(format!("half-angle {theta} outside (0, pi]")));
            }
        }
        let sigma = (2.0 * geom.diffusion * self.dt).sqrt();
        if sigma >= geom.channel_length() / 10.0 || sigma >= geom.d0 / 4.0 {
            return Err(Error::Config(format!(
                "step deviation {sigma:e} m must stay below (D0 - d0)/10 = {:e} and d0/4 = {:e}",
                geom.channel_length() / 10.0,
                geom.d0 / 4.0
            )));
        }
        Ok(())
    }

    fn steps(&self) -> u64 {
        (self.t_max / self.dt + 1e-9).floor() as u64
    }
}

/// One absorption event.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HitRecord {
    /// s.
    pub time: f64,
    /// Angle in `(-pi, pi]`.
    pub angle: f64,
}

/// Behaviour of the planes `z = 0` and `z = h` in the 3-D model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum CapMode {
    /// The channel continues beyond the planes; the receiver is the solid
    /// cylinder `r <= d0, 0 <= z <= h` and absorbs on every face.
    Open,
    /// The planes reflect, which makes the axial motion irrelevant to absorption.
    Reflecting,
}

/// Cylindrical channel of finite receiver height.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Geometry3D {
    pub channel: ChannelGeometry,
    /// Receiver height `h`, m.
    pub height: f64,
    /// Release height `h0`, m.
    pub release_height: f64,
    pub caps: CapMode,
}

impl Geometry3D {
    pub fn new(channel: ChannelGeometry, height: f64, release_height: f64, caps: CapMode) -> Result<Self> {
        if !(release_height > 0.0 && release_height < height && height.is_finite()) {
            return Err(Error::Config(format!(
                "need 0 < h0 < h, got h0 = {release_height:e}, h = {height:e}"
            )));
        }
        Ok(Self { channel, height, release_height, caps })
    }
}

/// Particles whose walk ever crossed each plane.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct CapContacts {
    pub bottom: usize,
    pub top: usize,
    /// Particles that crossed either plane.
    pub any: usize,
}

/// Result of a simulation run.
#[derive(Debug, Clone, PartialEq)]
pub struct SimOutcome {
    /// Sorted by time, then angle.
    pub hits: Vec<HitRecord>,
    /// Final positions `[x, y, z]` of unabsorbed particles (`z = 0` in 2-D).
    pub survivor_positions: Vec<[f64; 3]>,
    pub n_particles: usize,
    pub caps: Option<CapContacts>,
}

impl SimOutcome {
    pub fn survivors(&self) -> usize {
        self.survivor_positions.len()
    }

    /// Hits within `[-theta_f, theta_f]`.
    pub fn counted(&self, theta_f: f64) -> usize {
        self.hits.iter().filter(|h| h.angle.abs() <= theta_f).count()
    }
}

struct Fate {
    hit: Option<HitRecord>,
    position: [f64; 3],
    bottom: bool,
    top: bool,
}

/// Parameters shared by every walker of a run.
struct Walk {
    d0: f64,
    outer: f64,
    r0: f64,
    sigma: f64,
    dt: f64,
    steps: u64,
    merge: bool,
    axial: Option<Geometry3D>,
}

impl Walk {
    fn new(geom: &ChannelGeometry, cfg: &McConfig, axial: Option<Geometry3D>) -> Self {
        Self {
            d0: geom.d0,
            outer: geom.outer_radius,
            r0: geom.r0,
            sigma: (2.0 * geom.diffusion * cfg.dt).sqrt(),
            dt: cfg.dt,
            steps: cfg.steps(),
            merge: cfg.merge_steps,
            axial,
        }
    }

    /// Number of steps that can be merged from a position with the given boundary distance.
    fn merged(&self, margin: f64, remaining: u64) -> u64 {
        if !self.merge {
            return 1;
        }
        let k = (margin / (MACRO_MARGIN * self.sigma)).powi(2).floor();
        if k < 2.0 {
            return 1;
        }
        (k as u64).min(MAX_MERGED).min(remaining)
    }

    fn run(&self, seed: u64, index: u64) -> Result<Fate> {
        let mut planar = ChaCha8Rng::seed_from_u64(seed);
        planar.set_stream(index);
        let mut axial_rng = ChaCha8Rng::seed_from_u64(seed);
        axial_rng.set_stream(index | AXIAL_STREAM);

        let (mut x, mut y) = (self.r0, 0.0);
        let mut z = self.axial.map_or(0.0, |g| g.release_height);
        let (mut bottom, mut top) = (false, false);
        let mut step = 0u64;
        while step < self.steps {
            let r = x.hypot(y);
            let mut margin = (r - self.d0).min(self.outer - r);
            if let Some(g) = &self.axial {
                if !bottom {
                    margin = margin.min(z.abs());
                }
                if !top {
                    margin = margin.min((g.height - z).abs());
                }
            }
            let k = self.merged(margin, self.steps - step);
            let s = self.sigma * (k as f64).sqrt();
            let nx: f64 = planar.sample(StandardNormal);
            let ny: f64 = planar.sample(StandardNormal);
            let (px, py) = (x + s * nx, y + s * ny);
            step += k;

            let mut inside_height = true;
            if let Some(g) = &self.axial {
                let nz: f64 = axial_rng.sample(StandardNormal);
                let mut pz = z + s * nz;
                if pz < 0.0 {
                    bottom = true;
                }
                if pz > g.height {
                    top = true;
                }
                if g.caps == CapMode::Reflecting {
                    pz = fold_interval(pz, g.height);
                }
                inside_height = (0.0..=g.height).contains(&pz);
                z = pz;
            }

            let pr = px.hypot(py);
            if pr <= self.d0 && inside_height {
                let angle = if r > self.d0 {
                    entry_angle(x, y, px, py, self.d0)
                } else {
                    // Entered through an end face of the receiver.
                    py.atan2(px)
                };
                let hit = HitRecord { time: step as f64 * self.dt, angle: wrap_angle(angle) };
                return Ok(Fate { hit: Some(hit), position: [px, py, z], bottom, top });
            }
            if pr >= self.outer {
                let folded = 2.0 * self.outer - pr;
                if folded <= self.d0 {
                    return Err(Error::Config(format!(
                        "step overshoots the outer wall by {:e} m; reduce dt",
                        pr - self.outer
                    )));
                }
                let f = folded / pr;
                x = px * f;
                y = py * f;
            } else {
                x = px;
                y = py;
            }
        }
        Ok(Fate { hit: None, position: [x, y, z], bottom, top })
    }
}

/// Reflects `z` into `[0, h]`.
fn fold_interval(z: f64, h: f64) -> f64 {
    let period = 2.0 * h;
    let w = z.rem_euclid(period);
    if w > h {
        period - w
    } else {
        w
    }
}

/// Angle at which the segment from `(x, y)` (outside) to `(px, py)` first meets the circle of radius `d0`.
fn entry_angle(x: f64, y: f64, px: f64, py: f64, d0: f64) -> f64 {
    let (dx, dy) = (px - x, py - y);
    let a = dx * dx + dy * dy;
    let b = x * dx + y * dy;
    let c = x * x + y * y - d0 * d0;
    let disc = (b * b - a * c).max(0.0);
    let s = if a > 0.0 { ((-b - disc.sqrt()) / a).clamp(0.0, 1.0) } else { 0.0 };
    (y + s * dy).atan2(x + s * dx)
}

fn wrap_angle(a: f64) -> f64 {
    if a <= -PI {
        a + 2.0 * PI
    } else {
        a
    }
}

fn run_all(walk: &Walk, cfg: &McConfig) -> Result<SimOutcome> {
    let fates = (0..cfg.n_particles as u64)
        .into_par_iter()
        .map(|i| walk.run(cfg.seed, i))
        .collect::<Result<Vec<_>>>()?;
    let mut hits = Vec::new();
    let mut survivor_positions = Vec::new();
    let mut caps = CapContacts::default();
    for fate in fates {
        match fate.hit {
            Some(h) => hits.push(h),
            None => survivor_positions.push(fate.position),
        }
        caps.bottom += usize::from(fate.bottom);
        caps.top += usize::from(fate.top);
        caps.any += usize::from(fate.bottom || fate.top);
    }
    hits.sort_by(|a, b| a.time.total_cmp(&b.time).then(a.angle.total_cmp(&b.angle)));
    Ok(SimOutcome {
        hits,
        survivor_positions,
        n_particles: cfg.n_particles,
        caps: walk.axial.map(|_| caps),
    })
}

/// Simulates the 2-D annulus.
pub fn simulate_2d(geom: &ChannelGeometry, cfg: &McConfig) -> Result<SimOutcome> {
    cfg.check(geom)?;
    run_all(&Walk::new(geom, cfg, None), cfg)
}

/// Simulates the cylindrical channel with an axial coordinate.
pub fn simulate_3d(geom: &Geometry3D, cfg: &McConfig) -> Result<SimOutcome> {
    cfg.check(&geom.channel)?;
    run_all(&Walk::new(&geom.channel, cfg, Some(*geom)), cfg)
}

/// Outcome of the end-reach bound for the planar reduction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Reduction {
    /// `Q((h - h0)/sqrt(2 D t)) + Q(h0/sqrt(2 D t))`.
    pub tail: f64,
    pub epsilon: f64,
    /// `epsilon - tail`; positive when the bound holds.
    pub margin: f64,
    pub passes: bool,
}

/// Probability bound that a free axial walk from `h0` has left `[0, h]` by `t`.
pub fn reduction_valid(h: f64, h0: f64, diffusion: f64, t: f64, epsilon: f64) -> Result<Reduction> {
    if !(h > 0.0 && h0 > 0.0 && diffusion > 0.0 && t > 0.0 && epsilon > 0.0) {
        return domain("reduction check needs positive h, h0, D, t and epsilon");
    }
    let spread = (2.0 * diffusion * t).sqrt();
    let tail = gaussian_tail((h - h0) / spread)? + gaussian_tail(h0 / spread)?;
    Ok(Reduction { tail, epsilon, margin: epsilon - tail, passes: tail < epsilon })
}

/// Histogram estimate of the hitting rate.
///
/// Row `k` covers `((k) w, (k + 1) w]` and is reported at its right edge; the
/// last bin is shortened to end at `t_max`. Hits outside `[-theta_f, theta_f]`
/// are absorbed but not counted.
pub fn estimate_rate(
    hits: &[HitRecord],
    n_particles: usize,
    bin_width: f64,
    t_max: f64,
    theta_f: Option<f64>,
) -> Result<ImpulseResponse> {
    if !(bin_width > 0.0 && t_max > 0.0) {
        return domain("bin width and horizon must be positive");
    }
    let bins = (t_max / bin_width - 1e-9).ceil().max(1.0) as usize;
    let mut counts = vec![0usize; bins];
    let window = theta_f.unwrap_or(PI);
    for h in hits {
        if h.time > t_max || h.angle.abs() > window {
            continue;
        }
        let k = ((h.time / bin_width).ceil() as usize).saturating_sub(1).min(bins - 1);
        counts[k] += 1;
    }
    let n = n_particles.max(1) as f64;
    let mut times = Vec::with_capacity(bins);
    let mut rate = Vec::with_capacity(bins);
    let mut cumulative = Vec::with_capacity(bins);
    let mut total = 0usize;
    for (k, &c) in counts.iter().enumerate() {
        let lo = k as f64 * bin_width;
        let hi = ((k + 1) as f64 * bin_width).min(t_max);
        total += c;
        times.push(hi);
        rate.push(c as f64 / (n * (hi - lo)));
        cumulative.push(total as f64 / n);
    }
    ImpulseResponse::new(times, rate, cumulative)
}

/// Binned agreement between simulated hits and the analytic rate.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Comparison {
    /// Bin edges, starting at the first compared time.
    pub edges: Vec<f64>,
    /// Analytic bin averages of the rate.
    pub analytic: Vec<f64>,
    /// Simulated bin averages of the rate.
    pub empirical: Vec<f64>,
    /// Largest analytic rate on the compared range.
    pub peak: f64,
    /// Largest bin deviation divided by `peak`.
    pub max_deviation: f64,
    pub cumulative_analytic: f64,
    pub cumulative_empirical: f64,
}

impl Comparison {
    pub fn cumulative_deviation(&self) -> f64 {
        (self.cumulative_analytic - self.cumulative_empirical).abs()
    }

    pub fn passes(&self, threshold: f64, cumulative_threshold: f64) -> bool {
        self.max_deviation <= threshold && self.cumulative_deviation() <= cumulative_threshold
    }

    /// CSV with header `t_start,t_end,analytic,empirical`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t_start,t_end,analytic,empirical\n");
        for k in 0..self.analytic.len() {
            let _ = writeln!(
                out,
                "{:.16e},{:.16e},{:.16e},{:.16e}",
                self.edges[k],
                self.edges[k + 1],
                self.analytic[k],
                self.empirical[k]
            );
        }
        out
    }
}

/// Compares hits against `model` on bins of `bin_width` from `start` to `t_max`.
///
/// Bin averages on both sides come from cumulative differences, so the
/// comparison has no quadrature error. `start` must be certified for the
/// window. The cumulative check counts every hit up to `t_max`.
pub fn compare_with_model(
    model: &ImpulseModel,
    hits: &[HitRecord],
    n_particles: usize,
    start: f64,
    bin_width: f64,
    t_max: f64,
    theta_f: Option<f64>,
) -> Result<Comparison> {
    if !(bin_width > 0.0 && start >= 0.0 && t_max > start) || n_particles == 0 {
        return domain("comparison needs 0 <= start < t_max, a positive bin width and particles");
    }
    let window = theta_f.unwrap_or(PI);
    let cumulative = |t: f64| match theta_f {
        Some(th) => model.cumulative_hits_angular(th, t),
        None => model.cumulative_hits(t),
    };
    let rate = |t: f64| match theta_f {
        Some(th) => model.hitting_rate_angular(th, t),
        None => model.hitting_rate(t),
    };
    let bins = ((t_max - start) / bin_width - 1e-9).ceil().max(1.0) as usize;
    let edges: Vec<f64> = (0..=bins).map(|k| (start + k as f64 * bin_width).min(t_max)).collect();
    let mut counts = vec![0usize; bins];
    let mut total = 0usize;
    for h in hits.iter().filter(|h| h.time <= t_max && h.angle.abs() <= window) {
        total += 1;
        if h.time > start {
            let k = (((h.time - start) / bin_width).ceil() as usize).saturating_sub(1).min(bins - 1);
            counts[k] += 1;
        }
    }
    let n = n_particles as f64;
    let mut analytic = Vec::with_capacity(bins);
    let mut empirical = Vec::with_capacity(bins);
    let mut prev = cumulative(edges[0])?;
    for k in 0..bins {
        let width = edges[k + 1] - edges[k];
        let next = cumulative(edges[k + 1])?;
        analytic.push((next - prev) / width);
        empirical.push(counts[k] as f64 / (n * width));
        prev = next;
    }
    let grid = 4000;
    let (a, b) = (start.max(t_max * 1e-12).ln(), t_max.ln());
    let mut peak = 0.0f64;
    for i in 0..=grid {
        let t = (a + (b - a) * i as f64 / grid as f64).exp();
        peak = peak.max(rate(t)?);
    }
    let max_deviation = analytic
        .iter()
        .zip(&empirical)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
        / peak;
    Ok(Comparison {
        edges,
        analytic,
        empirical,
        peak,
        max_deviation,
        cumulative_analytic: prev,
        cumulative_empirical: total as f64 / n,
    })
}

/// Hit-record CSV with header `time,angle`.
pub fn hits_csv(hits: &[HitRecord]) -> String {
    let mut out = String::from("time,angle\n");
    for h in hits {
        let _ = writeln!(out, "{:.16e},{:.16e}", h.time, h.angle);
    }
    out
}

/// Two-sample Kolmogorov-Smirnov statistic.
pub fn ks_statistic(a: &[f64], b: &[f64]) -> f64 {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j, mut d) = (0, 0, 0.0f64);
    while i < a.len() && j < b.len() {
        let v = a[i].min(b[j]);
        while i < a.len() && a[i] <= v {
            i += 1;
        }
        while j < b.len() && b[j] <= v {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    d
}

/// Asymptotic two-sample KS critical value at significance 1%.
pub fn ks_critical_1pct(na: usize, nb: usize) -> f64 {
    let (na, nb) = (na as f64, nb as f64);
    1.627_624 * ((na + nb) / (na * nb)).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn reference_channel() -> ChannelGeometry {
        ChannelGeometry::new(10e-6, 100e-6, 20e-6, 80e-12).unwrap()
    }

    #[test]
    fn guard_rejects_coarse_steps() {
        let g = reference_channel();
        let mut cfg = McConfig::new(10, 1.0, 1);
        cfg.dt = 0.1;
        assert!(matches!(simulate_2d(&g, &cfg), Err(Error::Config(_))));
        cfg.dt = 1e-4;
        assert!(simulate_2d(&g, &cfg).is_ok());
        cfg.theta_f = Some(4.0);
        assert!(cfg.check(&g).is_err());
    }

    #[test]
    fn motionless_particles_never_hit() {
        let g = ChannelGeometry::new(10e-6, 100e-6, 20e-6, 1e-30).unwrap();
        let out = simulate_2d(&g, &McConfig::new(50, 0.5, 3)).unwrap();
        assert!(out.hits.is_empty());
        assert_eq!(out.survivors(), 50);
    }

    #[test]
    fn release_next_to_the_receiver_hits_at_once_and_in_front() {
        let g = ChannelGeometry::new(10e-6, 100e-6, 10.05e-6, 80e-12).unwrap();
        let mut cfg = McConfig::new(400, 2.0, 5);
        cfg.dt = 1e-6;
        let out = simulate_2d(&g, &cfg).unwrap();
        let mut times: Vec<f64> = out.hits.iter().map(|h| h.time).collect();
        times.sort_by(f64::total_cmp);
        assert!(times[times.len() / 2] < 1e-3);
        let near: usize = out.hits.iter().filter(|h| h.angle.abs() < 0.1).count();
        assert!(near as f64 > 0.5 * out.hits.len() as f64);
    }

    #[test]
    fn deterministic_and_conserving() {
        let g = reference_channel();
        let cfg = McConfig::new(300, 3.0, 11);
        let a = simulate_2d(&g, &cfg).unwrap();
        let b = simulate_2d(&g, &cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.hits.len() + a.survivors(), 300);
        let pool = rayon::ThreadPoolBuilder::new().num_threads(3).build().unwrap();
        let c = pool.install(|| simulate_2d(&g, &cfg).unwrap());
        assert_eq!(a, c);
        let d = simulate_2d(&g, &McConfig::new(300, 3.0, 12)).unwrap();
        assert_ne!(a, d);
        assert!(a.hits.windows(2).all(|w| w[0].time <= w[1].time));
        for h in &a.hits {
            assert!(h.time > 0.0 && h.time <= 3.0);
            assert!(h.angle > -PI && h.angle <= PI);
        }
    }

    #[test]
    fn survivors_stay_inside_the_annulus() {
        let g = ChannelGeometry::new(10e-6, 30e-6, 25e-6, 80e-12).unwrap();
        let out = simulate_2d(&g, &McConfig::new(200, 2.0, 2)).unwrap();
        for p in &out.survivor_positions {
            let r = p[0].hypot(p[1]);
            assert!(r > g.d0 && r <= g.outer_radius);
        }
    }

    #[test]
    fn hit_angles_are_symmetric() {
        let g = reference_channel();
        let out = simulate_2d(&g, &McConfig::new(4000, 5.0, 7)).unwrap();
        let n = out.hits.len() as f64;
        let mean = out.hits.iter().map(|h| h.angle).sum::<f64>() / n;
        let var = out.hits.iter().map(|h| (h.angle - mean).powi(2)).sum::<f64>() / (n - 1.0);
        assert!(mean.abs() < 3.0 * (var / n).sqrt());
    }

    #[test]
    fn merged_steps_do_not_change_the_law() {
        let g = reference_channel();
        let mut plain = McConfig::new(3000, 4.0, 21);
        plain.merge_steps = false;
        let merged = McConfig::new(3000, 4.0, 22);
        let a = simulate_2d(&g, &plain).unwrap();
        let b = simulate_2d(&g, &merged).unwrap();
        let ta: Vec<f64> = a.hits.iter().map(|h| h.time).collect();
        let tb: Vec<f64> = b.hits.iter().map(|h| h.time).collect();
        assert!(ks_statistic(&ta, &tb) < ks_critical_1pct(ta.len(), tb.len()));
        let pa = a.hits.len() as f64 / 3000.0;
        let pb = b.hits.len() as f64 / 3000.0;
        let se = (pa * (1.0 - pa) * 2.0 / 3000.0).sqrt();
        assert!((pa - pb).abs() < 4.0 * se);
    }

    #[test]
    fn symmetric_release_splits_cap_contacts() {
        let g = reference_channel();
        let g3 = Geometry3D::new(g, 4e-6, 2e-6, CapMode::Reflecting).unwrap();
        let out = simulate_3d(&g3, &McConfig::new(2000, 0.5, 9)).unwrap();
        let caps = out.caps.unwrap();
        let n = (caps.top + caps.bottom) as f64;
        assert!(n > 500.0);
        let diff = caps.top as f64 - caps.bottom as f64;
        assert!(diff.abs() < 4.0 * n.sqrt(), "{caps:?}");
    }

    #[test]
    fn axial_spread_is_free_diffusion_before_cap_contact() {
        let g = reference_channel();
        let h = 1e-3;
        let g3 = Geometry3D::new(g, h, h / 2.0, CapMode::Open).unwrap();
        let t = 0.5;
        let out = simulate_3d(&g3, &McConfig::new(4000, t, 13)).unwrap();
        assert_eq!(out.caps.unwrap().any, 0);
        // Chi-square against N(h0, 2 D t) on equiprobable bins.
        let sd = (2.0 * g.diffusion * t).sqrt();
        let mut counts = [0usize; 6];
        for p in &out.survivor_positions {
            let u = (p[2] - h / 2.0) / sd;
            let k = [-0.9674, -0.4307, 0.0, 0.4307, 0.9674]
                .iter()
                .take_while(|&&e| u > e)
                .count();
            counts[k] += 1;
        }
        let n = out.survivors() as f64;
        let probs = [
            gaussian_tail(0.9674).unwrap(),
            gaussian_tail(0.4307).unwrap() - gaussian_tail(0.9674).unwrap(),
            0.5 - gaussian_tail(0.4307).unwrap(),
            0.5 - gaussian_tail(0.4307).unwrap(),
            gaussian_tail(0.4307).unwrap() - gaussian_tail(0.9674).unwrap(),
            gaussian_tail(0.9674).unwrap(),
        ];
        let chi2: f64 = counts
            .iter()
            .zip(probs)
            .map(|(&c, p)| (c as f64 - n * p).powi(2) / (n * p))
            .sum();
        // 1% critical value of chi-square with 5 degrees of freedom.
        assert!(chi2 < 15.086, "chi2 = {chi2}, counts {counts:?}");
    }

    #[test]
    fn reflecting_caps_reduce_exactly_to_two_dimensions() {
        // Same planar streams, and reflecting caps never absorb: identical hits.
        let g = reference_channel();
        let g3 = Geometry3D::new(g, 2e-6, 1e-6, CapMode::Reflecting).unwrap();
        let mut cfg = McConfig::new(200, 2.0, 4);
        cfg.merge_steps = false;
        let a = simulate_2d(&g, &cfg).unwrap();
        let b = simulate_3d(&g3, &cfg).unwrap();
        assert_eq!(a.hits, b.hits);
    }

    #[test]
    fn reduction_bound() {
        let (h, d, t) = (1e-4, 80e-12, 10.0);
        let r = reduction_valid(h, h / 2.0, d, t, 1e-3).unwrap();
        let single = 2.0 * gaussian_tail(h / (2.0 * (2.0 * d * t).sqrt())).unwrap();
        assert_eq!(r.tail, single);
        let spread = (2.0 * d * t).sqrt();
        let deep = reduction_valid(16.0 * spread, 8.0 * spread, d, t, 1e-3).unwrap();
        // 2 Q(8) is 1.22e-15.
        assert!(deep.tail < 1.25e-15 && deep.passes);
        assert!(reduction_valid(-1.0, 0.5, d, t, 1e-3).is_err());
    }

    #[test]
    fn reduction_boundary_matches_tail_inverse() {
        // Bisect Q(u) = 5e-4 independently of the reduction check.
        let (mut lo, mut hi) = (0.0, 10.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if gaussian_tail(mid).unwrap() > 5e-4 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let u = 0.5 * (lo + hi);
        assert!((u - 3.290527).abs() < 1e-5);
        let (d, t): (f64, f64) = (80e-12, 10.0);
        let spread = (2.0 * d * t).sqrt();
        let at = |u: f64| reduction_valid(2.0 * u * spread, u * spread, d, t, 1e-3).unwrap();
        assert!(at(u * (1.0 + 1e-6)).passes);
        assert!(!at(u * (1.0 - 1e-6)).passes);
    }

    #[test]
    fn rate_estimator_definitions() {
        let hits = vec![
            HitRecord { time: 0.25, angle: 0.1 },
            HitRecord { time: 0.3, angle: -2.0 },
            HitRecord { time: 0.3, angle: 3.0 },
        ];
        let r = estimate_rate(&hits, 10, 0.5, 2.0, None).unwrap();
        assert_eq!(r.len(), 4);
        assert_eq!(r.rate[0], 3.0 / 10.0 / 0.5);
        assert!(r.rate[1..].iter().all(|&v| v == 0.0));
        assert_eq!(*r.cumulative.last().unwrap(), 0.3);
        let w = estimate_rate(&hits, 10, 0.5, 2.0, Some(PI / 2.0)).unwrap();
        assert_eq!(*w.cumulative.last().unwrap(), 0.1);
        assert_eq!(estimate_rate(&hits, 10, 0.5, 2.0, Some(PI)).unwrap(), r);
        let empty = estimate_rate(&[], 0, 0.5, 2.0, None).unwrap();
        assert!(empty.rate.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn entry_point_lies_on_the_receiver() {
        let a = entry_angle(1.5, 0.2, 0.5, 0.4, 1.0);
        let s = (0.2f64).atan2(1.5);
        assert!(a > s - 1.0 && a < 1.0);
        let b = entry_angle(0.0, 2.0, 0.0, -0.5, 1.0);
        assert!((b - PI / 2.0).abs() < 1e-12);
        assert!((fold_interval(-0.3, 1.0) - 0.3).abs() < 1e-15);
        assert!((fold_interval(1.25, 1.0) - 0.75).abs() < 1e-15);
    }

    #[test]
    fn ks_statistic_basics() {
        let a = [1.0, 2.0, 3.0];
        assert_eq!(ks_statistic(&a, &a), 0.0);
        assert_eq!(ks_statistic(&[1.0, 2.0], &[3.0, 4.0]), 1.0);
    }

    #[test]
    fn comparison_of_quantile_hits_is_tight() {
        let model = ImpulseModel::certified(reference_channel(), 0.1, 1e-10, false).unwrap();
        let (n, t_max) = (20_000usize, 20.0);
        let limit = model.cumulative_hits(t_max).unwrap();
        let mut hits = Vec::new();
        for i in 0..n {
            let u = (i as f64 + 0.5) / n as f64;
            if u >= limit {
                break;
            }
            let (mut lo, mut hi) = (0.1, t_max);
            for _ in 0..80 {
                let mid = 0.5 * (lo + hi);
                if model.cumulative_hits(mid).unwrap() < u {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            hits.push(HitRecord { time: hi, angle: 0.0 });
        }
        let c = compare_with_model(&model, &hits, n, 0.1, 0.5, t_max, None).unwrap();
        assert!(c.max_deviation < 1e-3, "{}", c.max_deviation);
        assert!(c.cumulative_deviation() <= 1.0 / n as f64);
        assert!(c.passes(0.05, 0.01));
        assert_eq!(c.to_csv().lines().count(), c.analytic.len() + 1);
        assert!(compare_with_model(&model, &hits, n, 0.1, 0.0, t_max, None).is_err());
    }
}
