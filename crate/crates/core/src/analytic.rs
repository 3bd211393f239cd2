//! Eigenfunction-series evaluation of the impulse response.
//!
//! Every series term has the form `coefficient * exp(-lambda t)` with
//! `lambda = beta^2 D / D0^2`. The hitting rate, survival probability,
//! cumulative absorption and mean hitting time are sums over the same terms,
//! so one precomputed table of `(lambda, flux, source)` serves all of them.
//!
//! A truncation is certified down to a time `t_min`: every retained order has
//! its last eigenvalue past the bound `exp(-beta^2 D t_min / D0^2) <= tol`.
//! Rate and density queries below `t_min` are refused.

use std::f64::consts::PI;
use std::fmt::Write as _;

use serde::Serialize;

use crate::eigen::{build_modeset_ragged, find_roots, roots_below, AspectRatio, Mode, ModeSet};
use crate::error::{domain, Error, Result};
use crate::specfun::{MAX_ARGUMENT, MAX_ORDER};

const RADIUS_SLACK: f64 = 1e-12;

/// Annular channel: absorbing receiver of radius `d0`, reflecting wall at
/// `outer_radius`, point release at `r0` (angle 0), diffusion coefficient in m^2/s.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ChannelGeometry {
    pub d0: f64,
    pub outer_radius: f64,
    pub r0: f64,
    pub diffusion: f64,
}

impl ChannelGeometry {
    pub fn new(d0: f64, outer_radius: f64, r0: f64, diffusion: f64) -> Result<Self> {
        let all_finite = [d0, outer_radius, r0, diffusion].iter().all(|v| v.is_finite());
        if !all_finite || !(d0 > 0.0 && d0 < r0 && r0 < outer_radius) {
            return Err(Error::Config(format!(
                "need 0 < d0 < r0 < D0, got d0 = {d0:e}, r0 = {r0:e}, D0 = {outer_radius:e}"
            )));
        }
        if !(diffusion > 0.0) {
            return Err(Error::Config(format!("diffusion coefficient {diffusion:e} must be positive")));
        }
        let geom = Self { d0, outer_radius, r0, diffusion };
        geom.aspect_ratio().map_err(|e| Error::Config(e.to_string()))?;
        Ok(geom)
    }

    pub fn alpha(&self) -> f64 {
        self.d0 / self.outer_radius
    }

    pub fn aspect_ratio(&self) -> Result<AspectRatio> {
        AspectRatio::new(self.alpha())
    }

    /// Channel length `D0 - d0`.
    pub fn channel_length(&self) -> f64 {
        self.outer_radius - self.d0
    }

    /// `D / D0^2`, the factor turning `beta^2` into a decay rate.
    pub fn rate_scale(&self) -> f64 {
        self.diffusion / (self.outer_radius * self.outer_radius)
    }

    /// Same channel with every length multiplied by `s`.
    pub fn scaled(&self, s: f64) -> Result<Self> {
        Self::new(self.d0 * s, self.outer_radius * s, self.r0 * s, self.diffusion)
    }

    /// Same channel with a different release radius.
    pub fn with_release(&self, r0: f64) -> Result<Self> {
        Self::new(self.d0, self.outer_radius, r0, self.diffusion)
    }
}

/// Radial term counts per angular order plus the certificate they satisfy.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Truncation {
    /// `radial[m]` terms are kept for order `m`; the length fixes `M`.
    pub radial: Vec<usize>,
    pub t_min: f64,
    pub tol: f64,
}

impl Truncation {
    pub fn max_order(&self) -> u32 {
        (self.radial.len() - 1) as u32
    }

    fn check(t_min: f64, tol: f64) -> Result<()> {
        if !(t_min > 0.0 && t_min.is_finite()) {
            return domain(format!("t_min must be positive, got {t_min:e}"));
        }
        if !(tol > 0.0 && tol < 1.0) {
            return domain(format!("tolerance must lie in (0, 1), got {tol:e}"));
        }
        Ok(())
    }
}

/// Eigenvalue bound: terms with `beta` at or above it are below `tol` at `t`.
fn eigenvalue_bound(geom: &ChannelGeometry, t: f64, tol: f64) -> f64 {
    (-tol.ln() / (geom.rate_scale() * t)).sqrt()
}

/// Earliest time at which terms with eigenvalue `beta` are below `tol`.
fn time_for_bound(geom: &ChannelGeometry, beta: f64, tol: f64) -> f64 {
    -tol.ln() / (geom.rate_scale() * beta * beta)
}

/// Smallest term counts meeting the tail bound at `t_min`.
///
/// With `angular` false only order 0 is kept (the angle-integrated problem).
/// Otherwise orders are added while their first eigenvalue is below the bound.
pub fn select_truncation(
    geom: &ChannelGeometry,
    t_min: f64,
    tol: f64,
    angular: bool,
) -> Result<Truncation> {
    Truncation::check(t_min, tol)?;
    let alpha = geom.aspect_ratio()?;
    let bound = eigenvalue_bound(geom, t_min, tol);
    let mut radial = Vec::new();
    let mut smallest_last = f64::INFINITY;
    let top = if angular { MAX_ORDER } else { 0 };
    for m in 0..=top {
        let roots = roots_below(m, alpha, MAX_ARGUMENT)?;
        if let Some(&last) = roots.last() {
            smallest_last = smallest_last.min(last);
        }
        if m > 0 && roots.first().is_none_or(|&b| b >= bound) {
            return Ok(Truncation { radial, t_min, tol });
        }
        match roots.iter().position(|&b| b >= bound) {
            Some(i) => radial.push(i + 1),
            None => {
                return Err(Error::TruncationUnreachable {
                    limit: MAX_ARGUMENT,
                    achievable_t_min: achievable(geom, tol, angular, smallest_last),
                })
            }
        }
    }
    if !angular {
        return Ok(Truncation { radial, t_min, tol });
    }
    // Every order up to the cap is needed; the next one is only known to
    // start above its order.
    if f64::from(MAX_ORDER + 1) >= bound {
        return Ok(Truncation { radial, t_min, tol });
    }
    Err(Error::TruncationUnreachable {
        limit: MAX_ARGUMENT,
        achievable_t_min: achievable(geom, tol, angular, smallest_last),
    })
}

fn achievable(geom: &ChannelGeometry, tol: f64, angular: bool, smallest_last: f64) -> f64 {
    let mut beta = smallest_last;
    if angular {
        beta = beta.min(f64::from(MAX_ORDER + 1));
    }
    time_for_bound(geom, beta, tol)
}

#[derive(Debug, Clone, Copy)]
struct Term {
    m: u32,
    beta: f64,
    lambda: f64,
    /// Contribution to the receiver flux at `t = 0`, before the angular weight.
    flux: f64,
    /// `eta_m(beta r0 / D0) / (k pi D0^2 I)` with `k = 2` for `m = 0`, else 1.
    source: f64,
    mode: Mode,
}

/// Series model of one channel with a fixed set of modes.
#[derive(Debug, Clone)]
pub struct ImpulseModel {
    geom: ChannelGeometry,
    modes: ModeSet,
    truncation: Truncation,
    /// Earliest certified time for angle-resolved quantities.
    angular_t_min: f64,
    terms: Vec<Term>,
    /// Order-0 terms are the first `order0` entries of `terms`.
    order0: usize,
    /// Largest `|flux| / beta` among retained terms, per order.
    envelope: Vec<f64>,
    /// Lower bound on the first eigenvalue of the first omitted order.
    omitted_start: f64,
}

impl ImpulseModel {
    /// Selects a certified truncation for `t_min` and builds its modes.
    pub fn certified(geom: ChannelGeometry, t_min: f64, tol: f64, angular: bool) -> Result<Self> {
        let truncation = select_truncation(&geom, t_min, tol, angular)?;
        let modes = build_modeset_ragged(geom.aspect_ratio()?, &truncation.radial)?;
        Self::new(geom, &modes, truncation)
    }

    /// Uses the modes of `modes` that the truncation asks for.
    ///
    /// The radial counts must satisfy the tail bound at `truncation.t_min`.
    pub fn new(geom: ChannelGeometry, modes: &ModeSet, truncation: Truncation) -> Result<Self> {
        Truncation::check(truncation.t_min, truncation.tol)?;
        if (modes.alpha().value() - geom.alpha()).abs() > 1e-12 {
            return domain(format!(
                "mode set built for alpha = {}, geometry has alpha = {}",
                modes.alpha().value(),
                geom.alpha()
            ));
        }
        let modes = modes.truncated(&truncation.radial)?;
        let bound = eigenvalue_bound(&geom, truncation.t_min, truncation.tol);
        for order in 0..=truncation.max_order() {
            let last = modes.order(order).last().expect("truncated orders are non-empty");
            if last.beta < bound * (1.0 - 1e-12) {
                return domain(format!(
                    "order {order} stops at beta = {} below the bound {bound} for t_min = {:e}",
                    last.beta, truncation.t_min
                ));
            }
        }
        Self::assemble(geom, modes, truncation)
    }

    /// Uses all of `modes` and derives the earliest time they certify at `tol`.
    pub fn from_modes(geom: ChannelGeometry, modes: &ModeSet, tol: f64) -> Result<Self> {
        let radial: Vec<usize> = (0..=modes.max_order()).map(|m| modes.radial_count(m)).collect();
        let t_min = (0..=modes.max_order())
            .map(|m| time_for_bound(&geom, modes.order(m).last().expect("non-empty").beta, tol))
            .fold(0.0, f64::max);
        Self::new(geom, modes, Truncation { radial, t_min, tol })
    }

    fn assemble(geom: ChannelGeometry, modes: ModeSet, truncation: Truncation) -> Result<Self> {
        let alpha = geom.alpha();
        let outer2 = geom.outer_radius * geom.outer_radius;
        let x0 = geom.r0 / geom.outer_radius;
        let mut terms = Vec::with_capacity(modes.len());
        let mut envelope = vec![0.0f64; modes.max_order() as usize + 1];
        for mode in modes.iter() {
            let at_source = mode.eta(x0)?;
            let slope = mode.eta_prime(alpha)?;
            let flux = geom.diffusion * alpha * mode.beta * at_source * slope / (outer2 * mode.norm);
            let k = if mode.m == 0 { 2.0 } else { 1.0 };
            let source = at_source / (k * PI * outer2 * mode.norm);
            envelope[mode.m as usize] = envelope[mode.m as usize].max(flux.abs() / mode.beta);
            terms.push(Term {
                m: mode.m,
                beta: mode.beta,
                lambda: mode.decay_rate(geom.diffusion, geom.outer_radius),
                flux,
                source,
                mode: *mode,
            });
        }
        let order0 = modes.radial_count(0);

        let max_order = modes.max_order();
        let omitted_start = if max_order < MAX_ORDER {
            find_roots(max_order + 1, modes.alpha(), 1)?[0]
        } else {
            f64::from(max_order + 1)
        };
        let angular_t_min = truncation
            .t_min
            .max(time_for_bound(&geom, omitted_start, truncation.tol));
        Ok(Self {
            geom,
            modes,
            truncation,
            angular_t_min,
            terms,
            order0,
            envelope,
            omitted_start,
        })
    }

    pub fn geometry(&self) -> &ChannelGeometry {
        &self.geom
    }

    pub fn truncation(&self) -> &Truncation {
        &self.truncation
    }

    pub fn modes(&self) -> &ModeSet {
        &self.modes
    }

    /// Earliest certified time for the full-window rate.
    pub fn t_min(&self) -> f64 {
        self.truncation.t_min
    }

    /// Earliest certified time for angle-resolved queries (`theta_f < pi`, `pdf`).
    pub fn angular_t_min(&self) -> f64 {
        self.angular_t_min
    }

    fn order_zero(&self) -> &[Term] {
        &self.terms[..self.order0]
    }

    fn require(&self, t: f64, t_min: f64) -> Result<()> {
        if !(t > 0.0) || !t.is_finite() {
            return domain(format!("time must be positive and finite, got {t:e}"));
        }
        if t < t_min * (1.0 - 1e-12) {
            return Err(Error::NotCertified { t, t_min });
        }
        Ok(())
    }

    fn check_window(&self, theta_f: f64) -> Result<()> {
        if !(theta_f > 0.0 && theta_f <= PI) {
            return domain(format!("half-angle {theta_f} outside (0, pi]"));
        }
        if theta_f < PI && self.modes.max_order() == 0 {
            return domain("angle-resolved quantities need angular orders m >= 1");
        }
        Ok(())
    }

    fn check_radius(&self, r: f64) -> Result<f64> {
        let g = &self.geom;
        let slack = RADIUS_SLACK * g.outer_radius;
        if !(r >= g.d0 - slack && r <= g.outer_radius + slack) {
            return domain(format!("radius {r:e} outside [{:e}, {:e}]", g.d0, g.outer_radius));
        }
        Ok((r / g.outer_radius).clamp(g.alpha(), 1.0))
    }

    /// Angular weight of order `m` for the window `[-theta_f, theta_f]`.
    fn weight(m: u32, theta_f: f64) -> f64 {
        if m == 0 {
            theta_f / PI
        } else if theta_f == PI {
            0.0
        } else {
            let mf = f64::from(m);
            2.0 * (mf * theta_f).sin() / (mf * PI)
        }
    }

    /// Angular distribution of the release-to-position density at `(r, theta)`, 1/m^2.
    ///
    /// A model with only order 0 gives the angle-averaged density.
    pub fn pdf(&self, r: f64, theta: f64, t: f64) -> Result<f64> {
        let x = self.check_radius(r)?;
        self.require(t, self.density_t_min())?;
        let mut sum = 0.0;
        for term in &self.terms {
            let angular = if term.m == 0 { 1.0 } else { (f64::from(term.m) * theta).cos() };
            sum += angular * term.source * term.mode.eta(x)? * (-term.lambda * t).exp();
        }
        Ok(sum)
    }

    /// `d pdf / dr` at `(r, theta)`, 1/m^3.
    pub fn pdf_radial_derivative(&self, r: f64, theta: f64, t: f64) -> Result<f64> {
        let x = self.check_radius(r)?;
        self.require(t, self.density_t_min())?;
        let mut sum = 0.0;
        for term in &self.terms {
            let angular = if term.m == 0 { 1.0 } else { (f64::from(term.m) * theta).cos() };
            let slope = term.beta / self.geom.outer_radius * term.mode.eta_prime(x)?;
            sum += angular * term.source * slope * (-term.lambda * t).exp();
        }
        Ok(sum)
    }

    fn density_t_min(&self) -> f64 {
        if self.modes.max_order() == 0 {
            self.t_min()
        } else {
            self.angular_t_min
        }
    }

    /// Probability per unit radius of finding the molecule at `r`, `2 pi r` times the
    /// angle-averaged density, 1/m.
    pub fn radial_density(&self, r: f64, t: f64) -> Result<f64> {
        let x = self.check_radius(r)?;
        self.require(t, self.t_min())?;
        let mut sum = 0.0;
        for term in self.order_zero() {
            sum += term.source * term.mode.eta(x)? * (-term.lambda * t).exp();
        }
        Ok(2.0 * PI * r * sum)
    }

    /// Receiver flux over the whole circle, 1/s.
    pub fn hitting_rate(&self, t: f64) -> Result<f64> {
        self.require(t, self.t_min())?;
        let (sum, magnitude) = self.order_zero().iter().fold((0.0, 0.0), |(s, a), term| {
            let v = term.flux * (-term.lambda * t).exp();
            (s + v, a + v.abs())
        });
        self.check_sign(sum, magnitude, self.truncation_error(t), t)?;
        Ok(sum)
    }

    /// Flux through the window `[-theta_f, theta_f]` of the receiver, 1/s.
    pub fn hitting_rate_angular(&self, theta_f: f64, t: f64) -> Result<f64> {
        self.check_window(theta_f)?;
        // Orders m >= 1 carry zero weight on the full circle.
        self.require(t, if theta_f == PI { self.t_min() } else { self.angular_t_min })?;
        let (sum, magnitude) = self.terms.iter().fold((0.0, 0.0), |(s, a), term| {
            let v = Self::weight(term.m, theta_f) * term.flux * (-term.lambda * t).exp();
            (s + v, a + v.abs())
        });
        self.check_sign(sum, magnitude, self.truncation_error_angular(theta_f, t)?, t)?;
        Ok(sum)
    }

    fn check_sign(&self, sum: f64, magnitude: f64, error: f64, t: f64) -> Result<()> {
        if sum < -(error + 1e-12 * magnitude) {
            return Err(Error::Numerical(format!(
                "negative hitting rate {sum:e} at t = {t:e} exceeds the truncation error {error:e}"
            )));
        }
        Ok(())
    }

    /// Series value of the full-window rate without the certification check.
    /// Only meant for truncation studies below `t_min`.
    pub fn raw_rate(&self, t: f64) -> f64 {
        self.order_zero().iter().map(|term| term.flux * (-term.lambda * t).exp()).sum()
    }

    /// `d rate / dt`, 1/s^2.
    pub fn rate_derivative(&self, t: f64) -> Result<f64> {
        self.require(t, self.t_min())?;
        Ok(self
            .order_zero()
            .iter()
            .map(|term| -term.lambda * term.flux * (-term.lambda * t).exp())
            .sum())
    }

    /// Probability that the molecule has not been absorbed by `t`.
    pub fn survival(&self, t: f64) -> Result<f64> {
        if !(t >= 0.0) || !t.is_finite() {
            return domain(format!("time must be non-negative and finite, got {t:e}"));
        }
        if t == 0.0 {
            return Ok(1.0);
        }
        let s: f64 = self
            .order_zero()
            .iter()
            .map(|term| term.flux / term.lambda * (-term.lambda * t).exp())
            .sum();
        Ok(s.clamp(0.0, 1.0))
    }

    /// Probability of absorption by `t`, `1 - survival(t)`.
    pub fn cumulative_hits(&self, t: f64) -> Result<f64> {
        Ok(1.0 - self.survival(t)?)
    }

    /// Probability of eventually being absorbed inside the window
    /// `[-theta_f, theta_f]`: the harmonic measure of the window seen from the release point.
    pub fn window_probability(&self, theta_f: f64) -> Result<f64> {
        if !(theta_f > 0.0 && theta_f <= PI) {
            return domain(format!("half-angle {theta_f} outside (0, pi]"));
        }
        if theta_f == PI {
            return Ok(1.0);
        }
        let g = &self.geom;
        let q = g.d0 / g.r0;
        let p2 = (g.r0 / g.outer_radius).powi(2);
        let a2 = (g.d0 / g.outer_radius).powi(2);
        let mut sum = theta_f / PI;
        let (mut qm, mut pm, mut am) = (1.0, 1.0, 1.0);
        for m in 1..10_000_000u32 {
            qm *= q;
            pm *= p2;
            am *= a2;
            if qm < 1e-17 {
                break;
            }
            let u = qm * (1.0 + pm) / (1.0 + am);
            sum += Self::weight(m, theta_f) * u;
        }
        Ok(sum)
    }

    /// Probability of absorption inside the window by `t`.
    pub fn cumulative_hits_angular(&self, theta_f: f64, t: f64) -> Result<f64> {
        self.check_window(theta_f)?;
        if theta_f == PI {
            return self.cumulative_hits(t);
        }
        if !(t >= 0.0) || !t.is_finite() {
            return domain(format!("time must be non-negative and finite, got {t:e}"));
        }
        let total = self.window_probability(theta_f)?;
        if t == 0.0 {
            return Ok(0.0);
        }
        let remaining: f64 = self
            .terms
            .iter()
            .map(|term| {
                Self::weight(term.m, theta_f) * term.flux / term.lambda * (-term.lambda * t).exp()
            })
            .sum();
        Ok((total - remaining).clamp(0.0, total))
    }

    /// Mean absorption time, s.
    pub fn average_time(&self) -> f64 {
        self.order_zero().iter().map(|term| term.flux / (term.lambda * term.lambda)).sum()
    }

    /// Bound on `sum_k a (b + k delta) exp(-(b + k delta)^2 s)` over `k >= first`.
    fn tail(amplitude: f64, start: f64, delta: f64, s: f64, first: u32) -> f64 {
        let mut total = 0.0;
        for k in first..100_000 {
            let b = start + f64::from(k) * delta;
            let term = amplitude * b * (-b * b * s).exp();
            total += term;
            if term <= 1e-6 * total || term == 0.0 {
                break;
            }
        }
        total
    }

    fn spacing(&self) -> f64 {
        PI / (1.0 - self.geom.alpha())
    }

    /// Largest `|flux|` coefficient of the retained order-0 terms, 1/s.
    ///
    /// Each dropped term is at most `tol` times its coefficient at `t_min`,
    /// so `tol * coefficient_scale()` is the natural unit for truncation checks.
    pub fn coefficient_scale(&self) -> f64 {
        self.order_zero().iter().map(|t| t.flux.abs()).fold(0.0, f64::max)
    }

    /// Estimated magnitude of the dropped order-0 terms at `t`, 1/s.
    ///
    /// Flux coefficients grow like `beta` with an oscillating sign, so the
    /// envelope `max |flux| / beta` of the kept terms is extrapolated along the
    /// asymptotic eigenvalue spacing, with a factor 2 of headroom.
    pub fn truncation_error(&self, t: f64) -> f64 {
        let s = self.geom.rate_scale() * t;
        let last = self.terms[self.order0 - 1].beta;
        2.0 * Self::tail(self.envelope[0], last, self.spacing(), s, 1)
    }

    /// Estimated magnitude of the dropped terms of the windowed rate at `t`, 1/s.
    pub fn truncation_error_angular(&self, theta_f: f64, t: f64) -> Result<f64> {
        self.check_window(theta_f)?;
        if theta_f == PI {
            return Ok(self.truncation_error(t));
        }
        let s = self.geom.rate_scale() * t;
        let delta = self.spacing();
        let widest = self.envelope.iter().copied().fold(0.0, f64::max);
        let mut total = 0.0;
        let mut start = 0;
        for (m, &amp) in self.envelope.iter().enumerate() {
            let count = self.modes.radial_count(m as u32);
            let last = self.terms[start + count - 1].beta;
            start += count;
            total += Self::weight(m as u32, theta_f).abs() * Self::tail(amp, last, delta, s, 1);
        }
        let mut m = self.modes.max_order() + 1;
        loop {
            let first = self.omitted_start.max(f64::from(m));
            let w = 2.0 / (f64::from(m) * PI);
            let term = w * Self::tail(widest, first, delta, s, 0);
            total += term;
            if term <= 1e-6 * total || term == 0.0 || m > 100_000 {
                break;
            }
            m += 1;
        }
        Ok(2.0 * total)
    }

    /// Rate and cumulative absorption on a time grid, for the full receiver
    /// or the window `[-theta_f, theta_f]`.
    pub fn response(&self, times: &[f64], theta_f: Option<f64>) -> Result<ImpulseResponse> {
        let theta_f = theta_f.unwrap_or(PI);
        let mut rate = Vec::with_capacity(times.len());
        let mut cumulative = Vec::with_capacity(times.len());
        for &t in times {
            rate.push(self.hitting_rate_angular(theta_f, t)?);
            cumulative.push(self.cumulative_hits_angular(theta_f, t)?);
        }
        ImpulseResponse::new(times.to_vec(), rate, cumulative)
    }

    /// Certificate for run metadata.
    pub fn certificate(&self) -> Certificate {
        Certificate {
            t_min: self.t_min(),
            angular_t_min: self.angular_t_min,
            tol: self.truncation.tol,
            radial_terms: self.truncation.radial.clone(),
            modeset_digest: self.modes.digest(),
        }
    }
}

/// Truncation facts embedded in exported metadata.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Certificate {
    pub t_min: f64,
    pub angular_t_min: f64,
    pub tol: f64,
    pub radial_terms: Vec<usize>,
    pub modeset_digest: String,
}

/// Hitting rate and cumulative absorption on a time grid.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ImpulseResponse {
    pub times: Vec<f64>,
    /// 1/s.
    pub rate: Vec<f64>,
    pub cumulative: Vec<f64>,
}

impl ImpulseResponse {
    pub fn new(times: Vec<f64>, rate: Vec<f64>, cumulative: Vec<f64>) -> Result<Self> {
        if times.len() != rate.len() || times.len() != cumulative.len() {
            return domain("response columns differ in length");
        }
        if times.windows(2).any(|w| !(w[1] > w[0])) {
            return domain("response times must be strictly increasing");
        }
        Ok(Self { times, rate, cumulative })
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// CSV with header `t,rate,cumulative`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,rate,cumulative\n");
        for i in 0..self.times.len() {
            let _ = writeln!(
                out,
                "{:.16e},{:.16e},{:.16e}",
                self.times[i], self.rate[i], self.cumulative[i]
            );
        }
        out
    }
}

/// Whether the channel at time `t` behaves like an unbounded plane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Validity {
    /// `r0 / D0`.
    pub release_ratio: f64,
    /// `sqrt(D t) / D0`.
    pub spread_ratio: f64,
    pub threshold: f64,
    pub valid: bool,
}

/// Both ratios must lie strictly below `threshold` (0.1 is the usual choice).
pub fn unbounded_validity(geom: &ChannelGeometry, t: f64, threshold: f64) -> Result<Validity> {
    if !(t > 0.0) || !t.is_finite() {
        return domain(format!("time must be positive, got {t:e}"));
    }
    let release_ratio = geom.r0 / geom.outer_radius;
    let spread_ratio = (geom.diffusion * t).sqrt() / geom.outer_radius;
    Ok(Validity {
        release_ratio,
        spread_ratio,
        threshold,
        valid: release_ratio < threshold && spread_ratio < threshold,
    })
}
