//! Tolerant rounding for quantities derived from floating-point job parameters.
//!
//! Worker counts come from products like `d * M * (tau + 2e/b)` that are exact
//! in decimal but not in binary, so a plain `ceil` can overshoot by one.

const REL_EPS: f64 = 1e-9;

fn slack(x: f64) -> f64 {
    REL_EPS * x.abs().max(1.0)
}

/// Smallest integer `n` with `n >= x - eps`.
pub fn ceil_tol(x: f64) -> u64 {
    if x <= 0.0 {
        return 0;
    }
    let c = x.ceil();
    let n = if c - x > 1.0 - slack(x) { c - 1.0 } else { c };
    n.max(0.0) as u64
}

/// Largest integer `n` with `n <= x + eps`, clamped at zero.
pub fn floor_tol(x: f64) -> u64 {
    if x <= 0.0 {
        return 0;
    }
    let f = x.floor();
    let n = if x - f > 1.0 - slack(x) { f + 1.0 } else { f };
    n as u64
}

/// `a <= b` up to relative tolerance.
pub fn le_tol(a: f64, b: f64) -> bool {
    a <= b + slack(b.abs().max(a.abs()))
}
