//! Bessel functions of integer order and the Gaussian tail function.
//!
//! Orders 0 and 1 come from their power series below `x = 2` and from
//! Steed's method (two continued fractions tied together by the Wronskian)
//! above it. Higher orders of the first kind are obtained by downward
//! recurrence seeded from the ratio continued fraction and normalised against
//! the order-0/1 values, so tiny values keep their relative accuracy. Higher
//! orders of the second kind use upward recurrence, which is stable for `Y`.

use std::f64::consts::{FRAC_2_PI, PI};

use crate::error::{domain, Error, Result};

/// Largest supported angular order.
pub const MAX_ORDER: u32 = 128;
/// Largest supported argument.
pub const MAX_ARGUMENT: f64 = 200.0;

const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;
const SERIES_LIMIT: f64 = 2.0;
const EPS: f64 = 1e-16;
const FPMIN: f64 = 1e-300;
const MAX_ITER: usize = 10_000;
const RESCALE: f64 = 1e200;

/// Values and argument-derivatives of `J_m` and `Y_m` at one point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cylinder {
    pub j: f64,
    pub y: f64,
    pub jp: f64,
    pub yp: f64,
}

fn check_order(m: u32) -> Result<()> {
    if m > MAX_ORDER {
        return domain(format!("Bessel order {m} exceeds the supported maximum {MAX_ORDER}"));
    }
    Ok(())
}

fn check_argument(x: f64) -> Result<()> {
    if !x.is_finite() {
        return domain(format!("Bessel argument {x} is not finite"));
    }
    if x > MAX_ARGUMENT {
        return domain(format!("Bessel argument {x} exceeds the working range {MAX_ARGUMENT}"));
    }
    Ok(())
}

/// `J_m(x)` for `x >= 0`.
pub fn bessel_j(m: u32, x: f64) -> Result<f64> {
    check_order(m)?;
    check_argument(x)?;
    if x < 0.0 {
        return domain(format!("J_{m} evaluated at negative argument {x}"));
    }
    if x == 0.0 {
        return Ok(if m == 0 { 1.0 } else { 0.0 });
    }
    let (j0, j1, _, _) = order_zero_one(x);
    Ok(match m {
        0 => j0,
        1 => j1,
        _ => first_kind_pair(m, x, j0, j1).1,
    })
}

/// `Y_m(x)` for `x > 0`.
pub fn bessel_y(m: u32, x: f64) -> Result<f64> {
    Ok(bessel_jy(m, x)?.y)
}

/// `dJ_m/dx`.
pub fn bessel_j_prime(m: u32, x: f64) -> Result<f64> {
    if x == 0.0 {
        check_order(m)?;
        if m == 0 {
            return Ok(0.0);
        }
        return domain(format!("derivative recurrence for J_{m} is singular at x = 0"));
    }
    Ok(bessel_jy(m, x)?.jp)
}

/// `dY_m/dx`.
pub fn bessel_y_prime(m: u32, x: f64) -> Result<f64> {
    Ok(bessel_jy(m, x)?.yp)
}

/// Both kinds and their derivatives at once, for `x > 0`.
pub fn bessel_jy(m: u32, x: f64) -> Result<Cylinder> {
    check_order(m)?;
    check_argument(x)?;
    if x <= 0.0 {
        return domain(format!("Y_{m} is singular for x = {x} <= 0"));
    }
    let (j0, j1, y0, y1) = order_zero_one(x);
    if m == 0 {
        return Ok(Cylinder { j: j0, y: y0, jp: -j1, yp: -y1 });
    }
    let (j_prev, j) = if m == 1 { (j0, j1) } else { first_kind_pair(m, x, j0, j1) };
    let (y_prev, y) = second_kind_pair(m, x, y0, y1);
    if !y.is_finite() || !y_prev.is_finite() {
        return Err(Error::Numerical(format!("Y_{m}({x}) overflows")));
    }
    let mx = f64::from(m) / x;
    Ok(Cylinder {
        j,
        y,
        jp: j_prev - mx * j,
        yp: y_prev - mx * y,
    })
}

/// `(J_0, J_1, Y_0, Y_1)` at `x > 0`.
fn order_zero_one(x: f64) -> (f64, f64, f64, f64) {
    if x < SERIES_LIMIT {
        series_zero_one(x)
    } else {
        steed_zero_one(x)
    }
}

fn series_zero_one(x: f64) -> (f64, f64, f64, f64) {
    let q = -0.25 * x * x;
    let log_term = (0.5 * x).ln() + EULER_GAMMA;

    // J_0 and the harmonic-number sum of Y_0 share the same powers.
    let mut term = 1.0;
    let mut j0 = 1.0;
    let mut y0_sum = 0.0;
    let mut harmonic = 0.0;
    for k in 1..60 {
        let kf = k as f64;
        term *= q / (kf * kf);
        harmonic += 1.0 / kf;
        j0 += term;
        y0_sum += harmonic * term;
        if term.abs() < 1e-18 * j0.abs() {
            break;
        }
    }

    // J_1 and the digamma sum of Y_1.
    let half = 0.5 * x;
    let mut term = 1.0;
    let mut j1_sum = 1.0;
    let mut harmonic = 0.0;
    let mut y1_sum = 2.0 * (-EULER_GAMMA) + 1.0;
    for k in 1..60 {
        let kf = k as f64;
        term *= q / (kf * (kf + 1.0));
        harmonic += 1.0 / kf;
        let psi_sum = -2.0 * EULER_GAMMA + harmonic + harmonic + 1.0 / (kf + 1.0);
        j1_sum += term;
        y1_sum += psi_sum * term;
        if term.abs() < 1e-18 * j1_sum.abs() {
            break;
        }
    }
    let j1 = half * j1_sum;
    let y0 = FRAC_2_PI * (log_term * j0 - y0_sum);
    let y1 = -FRAC_2_PI / x + FRAC_2_PI * (0.5 * x).ln() * j1 - half * y1_sum / PI;
    (j0, j1, y0, y1)
}

/// Steed's method for order zero.
fn steed_zero_one(x: f64) -> (f64, f64, f64, f64) {
    let xi = 1.0 / x;
    let xi2 = 2.0 * xi;
    let w = xi2 / PI;

    // CF1: f = J_0'/J_0; the sign of J_0 follows from the Lentz denominators.
    let mut sign = 1.0;
    let mut h = FPMIN;
    let mut b = 0.0;
    let mut d = 0.0;
    let mut c = h;
    for _ in 0..MAX_ITER {
        b += xi2;
        d = b - d;
        if d.abs() < FPMIN {
            d = FPMIN;
        }
        c = b - 1.0 / c;
        if c.abs() < FPMIN {
            c = FPMIN;
        }
        d = 1.0 / d;
        let del = c * d;
        h *= del;
        if d < 0.0 {
            sign = -sign;
        }
        if (del - 1.0).abs() < EPS {
            break;
        }
    }
    let f = h;

    // CF2: p + iq = (J_0' + iY_0') / (J_0 + iY_0).
    let mut a = 0.25;
    let mut p = -0.5 * xi;
    let mut q = 1.0;
    let br = 2.0 * x;
    let mut bi = 2.0;
    let mut fact = a * xi / (p * p + q * q);
    let mut cr = br + q * fact;
    let mut ci = bi + p * fact;
    let mut den = br * br + bi * bi;
    let mut dr = br / den;
    let mut di = -bi / den;
    let mut dlr = cr * dr - ci * di;
    let mut dli = cr * di + ci * dr;
    let mut temp = p * dlr - q * dli;
    q = p * dli + q * dlr;
    p = temp;
    for i in 2..MAX_ITER {
        a += 2.0 * (i as f64 - 1.0);
        bi += 2.0;
        dr = a * dr + br;
        di = a * di + bi;
        if dr.abs() + di.abs() < FPMIN {
            dr = FPMIN;
        }
        fact = a / (cr * cr + ci * ci);
        cr = br + cr * fact;
        ci = bi - ci * fact;
        if cr.abs() + ci.abs() < FPMIN {
            cr = FPMIN;
        }
        den = dr * dr + di * di;
        dr /= den;
        di /= -den;
        dlr = cr * dr - ci * di;
        dli = cr * di + ci * dr;
        temp = p * dlr - q * dli;
        q = p * dli + q * dlr;
        p = temp;
        if (dlr - 1.0).abs() + dli.abs() < EPS {
            break;
        }
    }

    let gam = (p - f) / q;
    let j0 = (w / ((p - f) * gam + q)).sqrt().copysign(sign);
    let y0 = j0 * gam;
    let j0p = f * j0;
    let y0p = p * y0 + q * j0;
    (j0, -j0p, y0, -y0p)
}

/// `(J_{m-1}, J_m)` for `m >= 2` by downward recurrence from the ratio
/// `J_m / J_{m-1}`, normalised to whichever of `J_0`, `J_1` is larger.
fn first_kind_pair(m: u32, x: f64, j0: f64, j1: f64) -> (f64, f64) {
    let ratio = 1.0 / ratio_fraction(m, x);

    let mut top = ratio; // j_m
    let mut upper = ratio; // j_{k+1}
    let mut lower = 1.0; // j_k, starting at k = m - 1
    let mut top_prev = 1.0; // j_{m-1}
    for k in (1..m).rev() {
        let next = 2.0 * f64::from(k) / x * lower - upper;
        upper = lower;
        lower = next;
        if lower.abs() > RESCALE {
            let s = 1.0 / RESCALE;
            lower *= s;
            upper *= s;
            top *= s;
            top_prev *= s;
        }
    }
    // Now lower = j_0, upper = j_1.
    let scale = if j0.abs() >= j1.abs() { j0 / lower } else { j1 / upper };
    (top_prev * scale, top * scale)
}

/// `2m/x - J_{m+1}/J_m` as a continued fraction (modified Lentz).
fn ratio_fraction(m: u32, x: f64) -> f64 {
    let b = |k: u32| 2.0 * f64::from(k) / x;
    let mut f = b(m);
    if f.abs() < FPMIN {
        f = FPMIN;
    }
    let mut c = f;
    let mut d = 0.0;
    for i in 1..MAX_ITER as u32 {
        let bi = b(m + i);
        d = bi - d;
        if d.abs() < FPMIN {
            d = FPMIN;
        }
        c = bi - 1.0 / c;
        if c.abs() < FPMIN {
            c = FPMIN;
        }
        d = 1.0 / d;
        let del = c * d;
        f *= del;
        if (del - 1.0).abs() < EPS {
            break;
        }
    }
    f
}

/// `(Y_{m-1}, Y_m)` by upward recurrence.
fn second_kind_pair(m: u32, x: f64, y0: f64, y1: f64) -> (f64, f64) {
    let (mut prev, mut cur) = (y0, y1);
    for k in 1..m {
        let next = 2.0 * f64::from(k) / x * cur - prev;
        prev = cur;
        cur = next;
    }
    (prev, cur)
}

/// Upper tail of the standard normal distribution, `P(N(0,1) > x)`.
pub fn gaussian_tail(x: f64) -> Result<f64> {
    if !x.is_finite() {
        return domain(format!("gaussian_tail argument {x} is not finite"));
    }
    if x < 0.0 {
        return Ok(1.0 - upper_tail(-x));
    }
    Ok(upper_tail(x))
}

fn upper_tail(x: f64) -> f64 {
    let z = x / std::f64::consts::SQRT_2;
    0.5 * erfc_nonneg(z)
}

fn erfc_nonneg(z: f64) -> f64 {
    let inv_sqrt_pi = 1.0 / PI.sqrt();
    if z < 2.5 {
        // erf(z) = 2/sqrt(pi) e^{-z^2} sum 2^n z^{2n+1} / (2n+1)!!; all terms positive.
        let z2 = z * z;
        let mut term = z;
        let mut sum = z;
        for n in 1..200 {
            term *= 2.0 * z2 / (2.0 * n as f64 + 1.0);
            sum += term;
            if term < 1e-17 * sum {
                break;
            }
        }
        1.0 - 2.0 * inv_sqrt_pi * (-z2).exp() * sum
    } else {
        // Laplace continued fraction z + (1/2)/(z + 1/(z + (3/2)/(z + ...))).
        let mut f = z;
        let mut c = z;
        let mut d = 0.0;
        for k in 1..500 {
            let a = 0.5 * k as f64;
            d = z + a * d;
            if d.abs() < FPMIN {
                d = FPMIN;
            }
            c = z + a / c;
            if c.abs() < FPMIN {
                c = FPMIN;
            }
            d = 1.0 / d;
            let del = c * d;
            f *= del;
            if (del - 1.0).abs() < EPS {
                break;
            }
        }
        (-z * z).exp() * inv_sqrt_pi / f
    }
}
