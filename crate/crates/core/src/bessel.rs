//! First-order Bessel function of the first kind and the radial jinc.

use std::f64::consts::{FRAC_PI_4, PI};

// Below this argument the power series is used; above it the Hankel
// asymptotic expansion is accurate to better than 1e-10.
const SERIES_LIMIT: f64 = 12.0;

/// J₁(x), absolute error ≲ 1e-12 over the real line.
pub fn j1(x: f64) -> f64 {
    let ax = x.abs();
    let v = if ax < SERIES_LIMIT {
        j1_series(ax)
    } else {
        j1_asymptotic(ax)
    };
    if x < 0.0 {
        -v
    } else {
        v
    }
}

fn j1_series(x: f64) -> f64 {
    let half = 0.5 * x;
    let q = -half * half;
    let mut term = half;
    let mut sum = term;
    let mut k = 0.0;
    loop {
        k += 1.0;
        term *= q / (k * (k + 1.0));
        sum += term;
        if term.abs() < 1e-18 * sum.abs().max(1e-300) || k > 200.0 {
            break;
        }
    }
    sum
}

fn j1_asymptotic(x: f64) -> f64 {
    // a_k = prod_{j=1..k} (mu - (2j-1)^2) / (k! 8^k) with mu = 4
    let mu = 4.0;
    let mut p = 0.0;
    let mut q = 0.0;
    let mut a = 1.0;
    let mut last = f64::INFINITY;
    for k in 0..60 {
        let term = a / x.powi(k);
        if term.abs() > last {
            break;
        }
        last = term.abs();
        match k % 4 {
            0 => p += term,
            1 => q += term,
            2 => p -= term,
            _ => q -= term,
        }
        if term.abs() < 1e-17 {
            break;
        }
        let kk = (k + 1) as f64;
        let odd = 2.0 * kk - 1.0;
        a *= (mu - odd * odd) / (kk * 8.0);
    }
    let chi = x - 3.0 * FRAC_PI_4;
    (2.0 / (PI * x)).sqrt() * (p * chi.cos() - q * chi.sin())
}

/// Radial jinc, `J₁(π r) / (2 r)` with `r = √(u² + v²)`; equals π/4 at the origin.
pub fn jinc(u: f64, v: f64) -> f64 {
    jinc_r(u.hypot(v))
}

/// [`jinc`] as a function of the radius.
pub fn jinc_r(r: f64) -> f64 {
    if r == 0.0 {
        return FRAC_PI_4;
    }
    j1(PI * r) / (2.0 * r)
}
