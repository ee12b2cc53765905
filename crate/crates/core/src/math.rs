//! Special functions shared by the filter constructions.
//!
//! `I0` is evaluated by its power series, which has only positive terms and
//! therefore keeps full relative precision for every non-negative argument we
//! ever need (Kaiser shape parameters stay well below 100).
//!
//! `J1` uses the power series near the origin and the periodic trapezoid rule
//! on Bessel's integral elsewhere. The integrand is analytic and periodic, so
//! the trapezoid rule converges geometrically once the node count exceeds the
//! argument; the absolute error is at the level of double rounding.

use std::f64::consts::PI;

/// Normalized sinc, `sin(pi x) / (pi x)`.
pub fn sinc(x: f64) -> f64 {
    if x == 0.0 {
        return 1.0;
    }
    if x.fract() == 0.0 {
        return 0.0;
    }
    let px = PI * x;
    px.sin() / px
}

/// Zeroth-order modified Bessel function of the first kind.
pub fn bessel_i0(x: f64) -> f64 {
    let q = 0.25 * x * x;
    let mut term = 1.0;
    let mut sum = 1.0;
    let mut k = 1.0;
    loop {
        term *= q / (k * k);
        sum += term;
        if term <= sum * 1e-17 {
            return sum;
        }
        k += 1.0;
    }
}

/// First-order Bessel function of the first kind.
pub fn bessel_j1(x: f64) -> f64 {
    if x < 0.0 {
        return -bessel_j1(-x);
    }
    if x < 1.0 {
        // sum_k (-1)^k (x/2)^(2k+1) / (k! (k+1)!)
        let half = 0.5 * x;
        let q = -half * half;
        let mut term = half;
        let mut sum = half;
        let mut k = 1.0;
        while term.abs() > 1e-18 * sum.abs() {
            term *= q / (k * (k + 1.0));
            sum += term;
            k += 1.0;
        }
        return sum;
    }
    // J1(x) = 1/(2 pi) \int_0^{2 pi} cos(t - x sin t) dt, trapezoid with N nodes.
    let nodes = 2 * ((x.ceil() as usize) + 40);
    let h = 2.0 * PI / nodes as f64;
    let sum: f64 = (0..nodes)
        .map(|k| {
            let t = k as f64 * h;
            (t - x * t.sin()).cos()
        })
        .sum();
    sum / nodes as f64
}

/// Radially symmetric counterpart of sinc, `2 J1(pi x) / (pi x)`; `jinc(0) = 1`.
pub fn jinc(x: f64) -> f64 {
    if x == 0.0 {
        return 1.0;
    }
    let px = PI * x;
    2.0 * bessel_j1(px) / px
}
