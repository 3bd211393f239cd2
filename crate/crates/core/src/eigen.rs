//! Eigenmodes of the annulus with an absorbing inner circle and a
//! reflecting outer circle.
//!
//! Lengths are scaled by the outer radius, so the domain is `alpha <= x <= 1`
//! with `alpha = d0 / D0`. Mode `(m, n)` has radial profile
//! `eta_m(beta x) = J_m(beta x) + c Y_m(beta x)` with `eta_m(alpha beta) = 0`
//! and `eta_m'(beta) = 0`.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, OnceLock};

use rayon::prelude::*;
use sha2::{Digest, Sha256};

use crate::error::{domain, Error, Result};
use crate::specfun::{bessel_jy, Cylinder, MAX_ARGUMENT, MAX_ORDER};

/// Largest accepted aspect ratio; thinner annuli are rejected.
pub const MAX_ALPHA: f64 = 0.99;
/// Largest allowed gap, in radians, between the mixing angles `atan(c)` implied
/// by the two boundary conditions.
pub const MIX_CONSISTENCY: f64 = 1e-7;
const DOMAIN_SLACK: f64 = 1e-12;

/// Ratio of receiver radius to boundary radius, `0 < alpha <= 0.99`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct AspectRatio(f64);

impl AspectRatio {
    pub fn new(alpha: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha <= MAX_ALPHA) {
            return domain(format!("aspect ratio {alpha} outside (0, {MAX_ALPHA}]"));
        }
        Ok(Self(alpha))
    }

    pub fn value(self) -> f64 {
        self.0
    }

    /// Sign-scan step: an eighth of the smaller of the two asymptotic root spacings.
    pub fn scan_step(self) -> f64 {
        let a = self.0;
        (PI / (1.0 - a)).min(PI / a) / 8.0
    }
}

/// One eigenmode `(m, n)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mode {
    pub m: u32,
    pub n: usize,
    pub beta: f64,
    /// Mix coefficient of `Y_m` in `eta_m`.
    pub c: f64,
    /// `I_mn = int_alpha^1 eta_m(beta x)^2 x dx`.
    pub norm: f64,
    pub alpha: f64,
}

impl Mode {
    fn cylinder(&self, order: u32, arg: f64) -> Result<Cylinder> {
        bessel_jy(order, arg)
    }

    fn check_scaled(&self, x: f64) -> Result<()> {
        if !(x >= self.alpha - DOMAIN_SLACK && x <= 1.0 + DOMAIN_SLACK) {
            return domain(format!("scaled radius {x} outside [{}, 1]", self.alpha));
        }
        Ok(())
    }

    /// `eta_m(beta x)` for `x` in `[alpha, 1]`.
    pub fn eta(&self, x: f64) -> Result<f64> {
        self.check_scaled(x)?;
        let b = self.cylinder(self.m, self.beta * x)?;
        Ok(b.j + self.c * b.y)
    }

    /// Derivative of `eta_m` with respect to its argument `beta x`.
    pub fn eta_prime(&self, x: f64) -> Result<f64> {
        self.check_scaled(x)?;
        let b = self.cylinder(self.m, self.beta * x)?;
        Ok(b.jp + self.c * b.yp)
    }

    /// `J_k(beta x) + c Y_k(beta x)`: the same mix with a different Bessel order.
    pub fn eta_with_order(&self, order: u32, x: f64) -> Result<f64> {
        self.check_scaled(x)?;
        let b = self.cylinder(order, self.beta * x)?;
        Ok(b.j + self.c * b.y)
    }

    /// Temporal decay rate `beta^2 D / D0^2` in 1/s.
    pub fn decay_rate(&self, diffusion: f64, outer_radius: f64) -> f64 {
        self.beta * self.beta * diffusion / (outer_radius * outer_radius)
    }
}

/// Cross-product form of the characteristic equation,
/// `J_m'(beta) Y_m(alpha beta) - Y_m'(beta) J_m(alpha beta)`.
pub fn characteristic_residual(m: u32, alpha: AspectRatio, beta: f64) -> Result<f64> {
    if !(beta > 0.0) {
        return domain(format!("characteristic residual needs beta > 0, got {beta}"));
    }
    let outer = bessel_jy(m, beta)?;
    let inner = bessel_jy(m, alpha.value() * beta)?;
    let f = outer.jp * inner.y - outer.yp * inner.j;
    if !f.is_finite() {
        return Err(Error::Numerical(format!(
            "characteristic residual overflows at m = {m}, beta = {beta}"
        )));
    }
    Ok(f)
}

fn scan_start(m: u32, step: f64) -> f64 {
    // Every root of order m >= 1 lies above the first zero of J_m', which exceeds m.
    if m == 0 {
        1e-6 * step
    } else {
        f64::from(m)
    }
}

fn bisect(m: u32, alpha: AspectRatio, mut lo: f64, mut hi: f64, mut f_lo: f64) -> Result<f64> {
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let f_mid = characteristic_residual(m, alpha, mid)?;
        if f_mid == 0.0 {
            return Ok(mid);
        }
        if (f_mid < 0.0) == (f_lo < 0.0) {
            lo = mid;
            f_lo = f_mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Scans upward from the order's lower bound and returns roots until `stop`
/// says enough, or the argument cap is reached.
fn scan_roots(
    m: u32,
    alpha: AspectRatio,
    step: f64,
    mut stop: impl FnMut(&[f64]) -> bool,
) -> Result<Vec<f64>> {
    let mut roots = Vec::new();
    let mut lo = scan_start(m, step);
    let mut f_lo = characteristic_residual(m, alpha, lo)?;
    while lo < MAX_ARGUMENT && !stop(&roots) {
        let hi = (lo + step).min(MAX_ARGUMENT);
        let f_hi = characteristic_residual(m, alpha, hi)?;
        if f_hi == 0.0 {
            roots.push(hi);
            // Step past the exact root so it is not counted twice.
            lo = hi + 1e-9 * step;
            f_lo = characteristic_residual(m, alpha, lo)?;
            continue;
        }
        if (f_lo < 0.0) != (f_hi < 0.0) {
            roots.push(bisect(m, alpha, lo, hi, f_lo)?);
        }
        lo = hi;
        f_lo = f_hi;
    }
    Ok(roots)
}

/// The first `count` roots of the characteristic equation for order `m`, ascending.
pub fn find_roots(m: u32, alpha: AspectRatio, count: usize) -> Result<Vec<f64>> {
    if count == 0 {
        return domain("root count must be at least 1");
    }
    if m > MAX_ORDER {
        return domain(format!("order {m} exceeds {MAX_ORDER}"));
    }
    let roots = scan_roots(m, alpha, alpha.scan_step(), |r| r.len() >= count)?;
    if roots.len() < count {
        return Err(Error::IncompleteEnumeration {
            order: m,
            found: roots.len(),
            requested: count,
            limit: MAX_ARGUMENT,
        });
    }
    Ok(roots)
}

/// All roots of order `m` strictly below `bound` (which must not exceed the argument cap).
pub fn roots_below(m: u32, alpha: AspectRatio, bound: f64) -> Result<Vec<f64>> {
    let mut roots = scan_roots(m, alpha, alpha.scan_step(), |r| {
        r.last().is_some_and(|&b| b >= bound)
    })?;
    roots.retain(|&b| b < bound);
    Ok(roots)
}

/// Number of sign changes of the residual on `(start, bound]` with an explicit scan step.
pub fn count_sign_changes(m: u32, alpha: AspectRatio, bound: f64, step: f64) -> Result<usize> {
    let mut count = 0;
    let mut lo = scan_start(m, alpha.scan_step());
    let mut f_lo = characteristic_residual(m, alpha, lo)?;
    while lo < bound {
        let hi = (lo + step).min(bound);
        let f_hi = characteristic_residual(m, alpha, hi)?;
        if (f_lo < 0.0) != (f_hi < 0.0) {
            count += 1;
        }
        lo = hi;
        f_lo = f_hi;
    }
    Ok(count)
}

/// Builds mode `(m, n)` from a root of the characteristic equation.
pub fn build_mode(m: u32, n: usize, alpha: AspectRatio, beta: f64) -> Result<Mode> {
    let a = alpha.value();
    let outer = bessel_jy(m, beta)?;
    let inner = bessel_jy(m, a * beta)?;
    let c_neumann = -outer.jp / outer.yp;
    let c_dirichlet = -inner.j / inner.y;
    // Compare the two estimates as mixing angles, c = tan(phi), which stays
    // meaningful when c is tiny or huge.
    let phi_neumann = (-outer.jp).atan2(outer.yp);
    let phi_dirichlet = (-inner.j).atan2(inner.y);
    let mut gap = (phi_neumann - phi_dirichlet).rem_euclid(PI);
    gap = gap.min(PI - gap);
    if !c_neumann.is_finite() || !c_dirichlet.is_finite() || gap > MIX_CONSISTENCY {
        return Err(Error::RootQuality {
            order: m,
            index: n,
            detail: format!(
                "beta = {beta}: Neumann c = {c_neumann:e}, Dirichlet c = {c_dirichlet:e}"
            ),
        });
    }
    // A root error moves each angle at a rate inversely proportional to the
    // squared modulus of its pair; keep the estimate from the steadier side.
    let mf = f64::from(m);
    let drift_outer = (1.0 - mf * mf / (beta * beta)).abs() / (beta * (outer.jp.powi(2) + outer.yp.powi(2)));
    let drift_inner = 1.0 / (beta * (inner.j.powi(2) + inner.y.powi(2)));
    let c = if drift_inner <= drift_outer { c_dirichlet } else { c_neumann };
    let mut mode = Mode { m, n, beta, c, norm: 0.0, alpha: a };
    mode.norm = norm_constant(&mode)?;
    Ok(mode)
}

/// `I_mn = (1 - m^2/beta^2) eta_m(beta)^2 / 2 - alpha^2 eta_m'(alpha beta)^2 / 2`.
pub fn norm_constant(mode: &Mode) -> Result<f64> {
    let m = f64::from(mode.m);
    let a = mode.alpha;
    let eta_outer = mode.eta(1.0)?;
    let slope_inner = mode.eta_prime(a)?;
    let norm = 0.5 * (1.0 - m * m / (mode.beta * mode.beta)) * eta_outer * eta_outer
        - 0.5 * a * a * slope_inner * slope_inner;
    if !(norm > 0.0) || !norm.is_finite() {
        return Err(Error::Numerical(format!(
            "non-positive norm constant {norm:e} for mode ({}, {})",
            mode.m, mode.n
        )));
    }
    Ok(norm)
}

/// Modes for one aspect ratio, indexed `[m][n - 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ModeSet {
    alpha: AspectRatio,
    orders: Vec<Vec<Mode>>,
}

impl ModeSet {
    pub fn alpha(&self) -> AspectRatio {
        self.alpha
    }

    /// Highest angular order present.
    pub fn max_order(&self) -> u32 {
        (self.orders.len() - 1) as u32
    }

    /// Radial count for order `m` (zero if the order is absent).
    pub fn radial_count(&self, m: u32) -> usize {
        self.orders.get(m as usize).map_or(0, Vec::len)
    }

    pub fn order(&self, m: u32) -> &[Mode] {
        self.orders.get(m as usize).map_or(&[], Vec::as_slice)
    }

    pub fn get(&self, m: u32, n: usize) -> Option<&Mode> {
        self.order(m).get(n.checked_sub(1)?)
    }

    pub fn iter(&self) -> impl Iterator<Item = &Mode> {
        self.orders.iter().flatten()
    }

    pub fn len(&self) -> usize {
        self.orders.iter().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Keeps the first `counts[m]` modes of each order `m < counts.len()`.
    pub fn truncated(&self, counts: &[usize]) -> Result<ModeSet> {
        if counts.is_empty() {
            return domain("truncation needs at least one angular order");
        }
        let mut orders = Vec::with_capacity(counts.len());
        for (m, &count) in counts.iter().enumerate() {
            let have = self.radial_count(m as u32);
            if count == 0 || count > have {
                return domain(format!("order {m}: requested {count} modes, {have} available"));
            }
            orders.push(self.orders[m][..count].to_vec());
        }
        Ok(ModeSet { alpha: self.alpha, orders })
    }

    /// Eigen-table CSV: header `m,n,beta,c,norm`, 17 significant digits.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("m,n,beta,c,norm\n");
        for mode in self.iter() {
            let _ = writeln!(
                out,
                "{},{},{:.16e},{:.16e},{:.16e}",
                mode.m, mode.n, mode.beta, mode.c, mode.norm
            );
        }
        out
    }

    /// Parses an eigen-table, checking rectangular-per-order coverage and the
    /// boundary conditions of every row.
    pub fn from_csv(alpha: AspectRatio, text: &str) -> Result<ModeSet> {
        let mut lines = text.lines();
        match lines.next().map(str::trim) {
            Some("m,n,beta,c,norm") => {}
            other => return Err(Error::Parse(format!("bad eigen-table header {other:?}"))),
        }
        let mut orders: Vec<Vec<Mode>> = Vec::new();
        for (lineno, line) in lines.enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            let bad = || Error::Parse(format!("eigen-table row {}: {line:?}", lineno + 2));
            if fields.len() != 5 {
                return Err(bad());
            }
            let m: u32 = fields[0].parse().map_err(|_| bad())?;
            let n: usize = fields[1].parse().map_err(|_| bad())?;
            let beta: f64 = fields[2].parse().map_err(|_| bad())?;
            let c: f64 = fields[3].parse().map_err(|_| bad())?;
            let norm: f64 = fields[4].parse().map_err(|_| bad())?;
            if m as usize != orders.len().saturating_sub(1) && m as usize != orders.len() {
                return Err(Error::Parse(format!("eigen-table skips to order {m}")));
            }
            if m as usize == orders.len() {
                orders.push(Vec::new());
            }
            let order = &mut orders[m as usize];
            if n != order.len() + 1 {
                return Err(Error::Parse(format!("eigen-table order {m} skips to n = {n}")));
            }
            order.push(Mode { m, n, beta, c, norm, alpha: alpha.value() });
        }
        if orders.is_empty() {
            return Err(Error::Parse("empty eigen-table".into()));
        }
        let set = ModeSet { alpha, orders };
        set.validate()?;
        Ok(set)
    }

    /// Checks ordering and both boundary conditions of every mode.
    pub fn validate(&self) -> Result<()> {
        for order in &self.orders {
            for pair in order.windows(2) {
                if !(pair[1].beta > pair[0].beta) {
                    return Err(Error::Numerical(format!(
                        "eigenvalues of order {} not increasing at n = {}",
                        pair[1].m, pair[1].n
                    )));
                }
            }
            for mode in order {
                let inner = mode.eta(mode.alpha)?;
                let outer = mode.eta_prime(1.0)?;
                if inner.abs() > 1e-9 || outer.abs() > 1e-9 || !(mode.norm > 0.0) {
                    return Err(Error::RootQuality {
                        order: mode.m,
                        index: mode.n,
                        detail: format!("boundary residuals {inner:e}, {outer:e}"),
                    });
                }
            }
        }
        Ok(())
    }

    /// Short content hash of the eigen-table, for run metadata.
    pub fn digest(&self) -> String {
        let hash = Sha256::digest(self.to_csv().as_bytes());
        hash.iter().take(8).fold(String::new(), |mut s, b| {
            let _ = write!(s, "{b:02x}");
            s
        })
    }
}

fn build_order(m: u32, alpha: AspectRatio, count: usize) -> Result<Vec<Mode>> {
    find_roots(m, alpha, count)?
        .into_iter()
        .enumerate()
        .map(|(i, beta)| build_mode(m, i + 1, alpha, beta))
        .collect()
}

/// Rectangular mode set: orders `0..=max_order`, `radial` modes each.
pub fn build_modeset(alpha: AspectRatio, max_order: u32, radial: usize) -> Result<ModeSet> {
    build_modeset_ragged(alpha, &vec![radial; max_order as usize + 1])
}

/// Mode set with `counts[m]` radial modes for order `m`.
pub fn build_modeset_ragged(alpha: AspectRatio, counts: &[usize]) -> Result<ModeSet> {
    if counts.is_empty() || counts.contains(&0) {
        return domain("every angular order needs at least one radial mode");
    }
    if counts.len() > MAX_ORDER as usize + 1 {
        return domain(format!("angular orders beyond {MAX_ORDER} are unsupported"));
    }
    let orders = counts
        .par_iter()
        .enumerate()
        .map(|(m, &count)| build_order(m as u32, alpha, count))
        .collect::<Result<Vec<_>>>()?;
    Ok(ModeSet { alpha, orders })
}

/// Every mode of orders `0..=max_order` whose eigenvalue lies below `bound`.
pub fn build_modeset_below(alpha: AspectRatio, max_order: u32, bound: f64) -> Result<ModeSet> {
    if max_order > MAX_ORDER {
        return domain(format!("angular orders beyond {MAX_ORDER} are unsupported"));
    }
    let orders = (0..=max_order)
        .into_par_iter()
        .map(|m| {
            roots_below(m, alpha, bound)?
                .into_iter()
                .enumerate()
                .map(|(i, beta)| build_mode(m, i + 1, alpha, beta))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    if orders[0].is_empty() {
        return Err(Error::IncompleteEnumeration { order: 0, found: 0, requested: 1, limit: bound });
    }
    let keep = orders.iter().take_while(|o| !o.is_empty()).count();
    Ok(ModeSet { alpha, orders: orders.into_iter().take(keep).collect() })
}

type CacheKey = (String, u32, usize);

/// Mode sets keyed by `(alpha to 12 digits, M, N)`, held in memory and
/// optionally persisted as eigen-table CSV files in a directory.
#[derive(Debug, Default)]
pub struct ModeCache {
    dir: Option<PathBuf>,
    memory: Mutex<HashMap<CacheKey, Arc<ModeSet>>>,
}

impl ModeCache {
    pub fn in_memory() -> Self {
        Self::default()
    }

    pub fn with_dir(dir: impl Into<PathBuf>) -> Self {
        Self { dir: Some(dir.into()), memory: Mutex::default() }
    }

    /// Process-wide in-memory cache.
    pub fn global() -> &'static ModeCache {
        static CACHE: OnceLock<ModeCache> = OnceLock::new();
        CACHE.get_or_init(ModeCache::in_memory)
    }

    fn key(alpha: AspectRatio, max_order: u32, radial: usize) -> CacheKey {
        (format!("{:.12e}", alpha.value()), max_order, radial)
    }

    fn file(dir: &Path, key: &CacheKey) -> PathBuf {
        dir.join(format!("eigen_a{}_M{}_N{}.csv", key.0, key.1, key.2))
    }

    pub fn get(&self, alpha: AspectRatio, max_order: u32, radial: usize) -> Result<Arc<ModeSet>> {
        let key = Self::key(alpha, max_order, radial);
        if let Some(hit) = self.memory.lock().expect("cache lock").get(&key) {
            return Ok(Arc::clone(hit));
        }
        let loaded = match &self.dir {
            Some(dir) => {
                let path = Self::file(dir, &key);
                match std::fs::read_to_string(&path) {
                    Ok(text) => Some(ModeSet::from_csv(alpha, &text)?),
                    Err(_) => None,
                }
            }
            None => None,
        };
        let set = match loaded {
            Some(set) => set,
            None => {
                let set = build_modeset(alpha, max_order, radial)?;
                if let Some(dir) = &self.dir {
                    std::fs::create_dir_all(dir)?;
                    crate::io::write_atomic(&Self::file(dir, &key), set.to_csv().as_bytes())?;
                }
                set
            }
        };
        let set = Arc::new(set);
        self.memory.lock().expect("cache lock").insert(key, Arc::clone(&set));
        Ok(set)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::specfun::{bessel_j, bessel_y};
    use crate::quadrature::integrate;

    fn alpha(a: f64) -> AspectRatio {
        AspectRatio::new(a).unwrap()
    }

    #[test]
    fn aspect_ratio_bounds() {
        assert!(AspectRatio::new(0.0).is_err());
        assert!(AspectRatio::new(0.995).is_err());
        assert!(AspectRatio::new(f64::NAN).is_err());
        assert!(AspectRatio::new(0.99).is_ok());
    }

    #[test]
    fn residual_near_tabulated_roots() {
        let a = alpha(0.1);
        assert!(characteristic_residual(0, a, 1.103).unwrap().abs() < 2e-3);
        let mid = characteristic_residual(0, a, 2.5).unwrap();
        let left = characteristic_residual(0, a, 2.0).unwrap();
        let right = characteristic_residual(0, a, 6.0).unwrap();
        assert!(mid != 0.0);
        assert_eq!(mid.signum(), left.signum());
        assert_eq!(mid.signum(), -right.signum());
        assert!(characteristic_residual(0, a, 0.0).is_err());
        assert!(characteristic_residual(0, a, -1.0).is_err());
    }

    #[test]
    fn residual_matches_ratio_form_for_order_zero() {
        // Away from poles the ratio form vanishes exactly where the cross product does.
        let a = alpha(0.1);
        let root = find_roots(0, a, 1).unwrap()[0];
        let ratio = bessel_j(1, root).unwrap() / bessel_y(1, root).unwrap()
            - bessel_j(0, a.value() * root).unwrap() / bessel_y(0, a.value() * root).unwrap();
        assert!(ratio.abs() < 1e-12);
    }

    #[test]
    fn roots_change_sign() {
        let a = alpha(0.1);
        for beta in find_roots(3, a, 5).unwrap() {
            let lo = characteristic_residual(3, a, beta - 1e-10).unwrap();
            let hi = characteristic_residual(3, a, beta + 1e-10).unwrap();
            assert!(lo.signum() != hi.signum(), "beta = {beta}");
        }
    }

    #[test]
    fn first_table_entries() {
        let a = alpha(0.1);
        let r = find_roots(0, a, 3).unwrap();
        for (got, want) in r.iter().zip([1.103, 4.979, 8.554]) {
            assert!((got - want).abs() < 5e-4, "{got} vs {want}");
        }
        let r = find_roots(10, a, 1).unwrap();
        assert!((r[0] - 11.771).abs() < 5e-4);
    }

    #[test]
    fn spacing_tends_to_asymptote() {
        let a = alpha(0.1);
        let r = find_roots(0, a, 40).unwrap();
        let asymptote = PI / 0.9;
        let gaps: Vec<f64> = r.windows(2).map(|w| w[1] - w[0]).collect();
        assert!(gaps.iter().all(|&g| g > 0.0));
        assert!((gaps[11] - 3.494).abs() < 1e-3);
        assert!((gaps.last().unwrap() - asymptote).abs() < 5e-3);
    }

    #[test]
    fn no_roots_missed_against_quarter_step_scan() {
        for a in [0.01, 0.1, 0.5, 0.9] {
            let a = alpha(a);
            for m in [0, 1, 4, 17] {
                // Wide annuli have few roots below the cap.
                let roots = roots_below(m, a, MAX_ARGUMENT).unwrap();
                assert!(!roots.is_empty());
                let bound = roots.last().unwrap() + 1e-6;
                let fine = count_sign_changes(m, a, bound, a.scan_step() / 4.0).unwrap();
                assert_eq!(fine, roots.len(), "alpha {} m {m}", a.value());
            }
        }
    }

    #[test]
    fn enumeration_cap_is_reported() {
        let err = find_roots(0, alpha(0.1), 100).unwrap_err();
        assert!(matches!(err, Error::IncompleteEnumeration { requested: 100, .. }));
    }

    #[test]
    fn mode_boundary_conditions() {
        let a = alpha(0.1);
        let set = build_modeset(a, 6, 6).unwrap();
        for mode in set.iter() {
            assert!(mode.eta(0.1).unwrap().abs() < 1e-9);
            assert!(mode.eta_prime(1.0).unwrap().abs() < 1e-9);
            assert!(mode.norm > 0.0);
        }
        let first = set.get(0, 1).unwrap();
        let c = -bessel_j(1, first.beta).unwrap() / bessel_y(1, first.beta).unwrap();
        assert!((first.c - c).abs() < 1e-12 * c.abs());
        assert!(first.eta(0.1).unwrap().abs() < 1e-6);
    }

    #[test]
    fn eta_domain_is_enforced() {
        let mode = build_modeset(alpha(0.1), 0, 1).unwrap().order(0)[0];
        assert!(mode.eta(0.05).is_err());
        assert!(mode.eta(1.01).is_err());
        assert!(mode.eta(1.0 + 1e-13).is_ok());
    }

    #[test]
    fn order_zero_derivative_is_minus_order_one() {
        let set = build_modeset(alpha(0.1), 0, 4).unwrap();
        for mode in set.iter() {
            let lhs = mode.eta_prime(0.5).unwrap();
            let rhs = -mode.eta_with_order(1, 0.5).unwrap();
            assert!((lhs - rhs).abs() < 1e-12);
        }
    }

    #[test]
    fn order_zero_norm_matches_two_term_form() {
        let a = 0.1;
        for mode in build_modeset(alpha(a), 0, 8).unwrap().iter() {
            let eta1 = mode.eta_with_order(1, a).unwrap();
            let eta0 = mode.eta(1.0).unwrap();
            let two_term = 0.5 * (eta0 * eta0 - a * a * eta1 * eta1);
            assert!(((mode.norm - two_term) / two_term).abs() < 1e-14);
        }
    }

    #[test]
    fn norm_matches_quadrature_and_modes_are_orthogonal() {
        let a = 0.1;
        let set = build_modeset(alpha(a), 5, 5).unwrap();
        for m in 0..=5 {
            for mode in set.order(m) {
                let q = integrate(|x| mode.eta(x).unwrap().powi(2) * x, a, 1.0, 1e-12);
                assert!(((q - mode.norm) / q).abs() < 1e-8, "({m},{}) {q} vs {}", mode.n, mode.norm);
            }
            let o = set.order(m);
            let cross = integrate(|x| o[0].eta(x).unwrap() * o[3].eta(x).unwrap() * x, a, 1.0, 1e-12);
            assert!(cross.abs() < 1e-8 * o[0].norm.max(o[3].norm).max(1.0), "m={m}: {cross}");
        }
    }

    #[test]
    fn csv_round_trip_and_cache() {
        let a = alpha(0.25);
        let set = build_modeset(a, 2, 3).unwrap();
        let back = ModeSet::from_csv(a, &set.to_csv()).unwrap();
        assert_eq!(set, back);
        assert_eq!(set.digest(), back.digest());

        let dir = tempfile::tempdir().unwrap();
        let cache = ModeCache::with_dir(dir.path());
        let first = cache.get(a, 2, 3).unwrap();
        assert_eq!(*first, set);
        let fresh = ModeCache::with_dir(dir.path());
        assert_eq!(*fresh.get(a, 2, 3).unwrap(), set);
    }

    #[test]
    fn csv_rejects_gaps() {
        let a = alpha(0.1);
        let set = build_modeset(a, 1, 2).unwrap();
        let text = set.to_csv();
        let gapped: String = text.lines().enumerate().filter(|(i, _)| *i != 1).map(|(_, l)| format!("{l}\n")).collect();
        assert!(ModeSet::from_csv(a, &gapped).is_err());
        assert!(ModeSet::from_csv(a, "m,n,beta\n").is_err());
    }
}
