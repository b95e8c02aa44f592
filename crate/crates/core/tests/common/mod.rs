//! Independent reference computations shared by the integration tests.
//! Nothing here calls into the library.

#![allow(dead_code, clippy::too_many_arguments)]

use std::f64::consts::PI;

fn simpson_step(
    f: &dyn Fn(f64) -> f64,
    a: f64,
    fa: f64,
    b: f64,
    fb: f64,
    m: f64,
    fm: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> f64 {
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol {
        return left + right + delta / 15.0;
    }
    simpson_step(f, a, fa, m, fm, lm, flm, left, 0.5 * tol, depth - 1)
        + simpson_step(f, m, fm, b, fb, rm, frm, right, 0.5 * tol, depth - 1)
}

/// Adaptive Simpson quadrature of `f` over `[a, b]`.
pub fn integrate(f: impl Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    if b <= a {
        return 0.0;
    }
    let m = 0.5 * (a + b);
    let (fa, fb, fm) = (f(a), f(b), f(m));
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    simpson_step(&f, a, fa, b, fb, m, fm, whole, tol, 50)
}

/// Integrate over consecutive pieces split at `knots` (ascending).
pub fn integrate_pieces(f: impl Fn(f64) -> f64, knots: &[f64], tol: f64) -> f64 {
    knots
        .windows(2)
        .map(|w| integrate(&f, w[0], w[1], tol))
        .sum()
}

/// Standard half-normal density.
pub fn hn_pdf(b: f64) -> f64 {
    if b < 0.0 {
        0.0
    } else {
        (2.0 / PI).sqrt() * (-0.5 * b * b).exp()
    }
}

const UPPER: f64 = 40.0;

pub fn knots(points: &[f64]) -> Vec<f64> {
    let mut k: Vec<f64> = (0..=10).map(f64::from).chain([UPPER]).collect();
    k.extend(points.iter().copied().filter(|p| *p > 0.0 && *p < UPPER));
    k.sort_by(f64::total_cmp);
    k.dedup();
    k
}

/// `E[min(B, s)]` by quadrature.
pub fn hn_first(s: f64) -> f64 {
    integrate_pieces(|b| b.min(s) * hn_pdf(b), &knots(&[s]), 1e-15)
}

/// `E[clamp(B - c, 0, s)]` by quadrature.
pub fn hn_second(s: f64, c: f64) -> f64 {
    integrate_pieces(
        |b| (b - c).clamp(0.0, s) * hn_pdf(b),
        &knots(&[c, c + s]),
        1e-15,
    )
}

/// Mixed equilibrium from throughput moments, written directly from the
/// indifference conditions: each firm's CDF makes the rival indifferent on
/// `[L, R)`, the firm with the larger second/first ratio holds the atom at R.
#[derive(Debug, Clone, Copy)]
pub struct RefEquilibrium {
    pub holder: usize,
    pub payoff: [f64; 2],
    pub low: f64,
    pub atom: f64,
    pub rho: [f64; 2],
}

pub fn reference_equilibrium(first: [f64; 2], second: [f64; 2], r: f64) -> RefEquilibrium {
    let ratio = |i: usize| second[i] / first[i];
    let holder = if ratio(0) >= ratio(1) { 0 } else { 1 };
    let other = 1 - holder;
    let mut payoff = [0.0; 2];
    payoff[holder] = r * second[holder];
    let low = payoff[holder] / first[holder];
    payoff[other] = low * first[other];
    // cdf of firm i on [L, R): keeps the rival j indifferent at payoff[j]
    let cdf = |i: usize, x: f64| {
        let j = 1 - i;
        (first[j] - payoff[j] / x) / (first[j] - second[j])
    };
    let atom = 1.0 - cdf(holder, r);
    // E[p] = R - int_L^R F(x) dx
    let rho = [0, 1].map(|i| r - integrate(|x| cdf(i, x), low, r, 1e-14));
    RefEquilibrium {
        holder,
        payoff,
        low,
        atom,
        rho,
    }
}
