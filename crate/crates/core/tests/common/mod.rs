//! Reference implementations used to check the library. Each one follows a
//! different computational path from the code it checks.

#![allow(dead_code)]

use std::f64::consts::PI;

/// Transmission amplitude in plain real arithmetic, using
/// `1/(1 − iΔ′) = (1 + iΔ′)/(1 + Δ′²)`. Returns `(re, im)`.
pub fn amplitude_oracle(
    eta: f64,
    kappa: f64,
    f_c: f64,
    cooperativity: f64,
    gamma: f64,
    f_laser: f64,
    f_qd: f64,
) -> (f64, f64) {
    let d = 2.0 * (2.0 * PI * (f_laser - f_c)) / kappa;
    let dq = 2.0 * PI * (f_laser - f_qd) / gamma;
    let w = 1.0 + dq * dq;
    let a = 1.0 + 2.0 * cooperativity / w;
    let b = -d + 2.0 * cooperativity * dq / w;
    let n = a * a + b * b;
    (eta * a / n, -eta * b / n)
}

/// Sign changes of `g` on a uniform grid, located by linear interpolation.
pub fn dense_roots<G: Fn(f64) -> f64>(g: G, lo: f64, hi: f64, step: f64) -> Vec<f64> {
    let n = ((hi - lo) / step).ceil() as usize;
    let mut roots = Vec::new();
    let mut x0 = lo;
    let mut g0 = g(x0);
    if g0 == 0.0 {
        roots.push(x0);
    }
    for i in 1..=n {
        let x1 = (lo + i as f64 * step).min(hi);
        let g1 = g(x1);
        if g1 == 0.0 {
            roots.push(x1);
        } else if g0 != 0.0 && (g0 < 0.0) != (g1 < 0.0) {
            roots.push(x0 - g0 * (x1 - x0) / (g1 - g0));
        }
        x0 = x1;
        g0 = g1;
    }
    roots
}

/// Forward-Euler charge trajectory, sampled every `every` steps.
pub fn euler_charge(gamma_c: f64, beta: f64, q0: f64, p: f64, h: f64, n_steps: usize, every: usize) -> Vec<f64> {
    let mut q = q0;
    let mut out = vec![q];
    for i in 1..=n_steps {
        let loss = if q > 0.0 { (q / gamma_c).powf(1.0 / beta) } else { 0.0 };
        q = (q + h * (p - loss)).max(0.0);
        if i % every == 0 {
            out.push(q);
        }
    }
    out
}

/// `a·x^b` through `exp(b·ln x)`.
pub fn power(a: f64, x: f64, b: f64) -> f64 {
    a * (b * x.ln()).exp()
}

pub fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(|a, b| a.total_cmp(b));
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}
