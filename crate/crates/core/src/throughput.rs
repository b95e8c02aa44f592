//! Expected absolute throughput of each firm by merit-order position.
//!
//! `x_low[i]` is firm `i`'s expected total `sum_t |X_i^t|` when it is served
//! first in every period, `x_high[i]` when it is served second. These four
//! numbers are all the pricing game needs to know about storage physics and
//! the imbalance process.
//!
//! ```
//! use baleq::throughput::closed_form_deterministic;
//!
//! let m = closed_form_deterministic(2.0, 1.5, 1.0).unwrap();
//! assert_eq!(m.x_low, [1.5, 1.0]);
//! assert_eq!(m.x_high, [1.0, 0.5]);
//! ```

use std::f64::consts::FRAC_2_PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dispatch::{step_in_place, throughput_in_order, StorageUnit};
use crate::error::{invalid, Result};
use crate::imbalance::{half_normal_sf, ImbalanceModel};
use crate::numeric::mean_and_std_err;

/// Default Monte Carlo sample count.
pub const DEFAULT_SAMPLES: usize = 100_000;

/// Priority-ordered expected throughputs for a duopoly.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThroughputMoments {
    /// Firm served first.
    pub x_low: [f64; 2],
    /// Firm served second.
    pub x_high: [f64; 2],
    pub std_err_low: [f64; 2],
    pub std_err_high: [f64; 2],
    /// Number of sample paths (0 for closed forms).
    pub sample_count: usize,
}

impl ThroughputMoments {
    /// Exact moments with zero standard error.
    pub fn exact(x_low: [f64; 2], x_high: [f64; 2]) -> Self {
        Self {
            x_low,
            x_high,
            std_err_low: [0.0; 2],
            std_err_high: [0.0; 2],
            sample_count: 0,
        }
    }

    /// Swap the firm labels.
    pub fn swapped(&self) -> Self {
        let sw = |a: [f64; 2]| [a[1], a[0]];
        Self {
            x_low: sw(self.x_low),
            x_high: sw(self.x_high),
            std_err_low: sw(self.std_err_low),
            std_err_high: sw(self.std_err_high),
            sample_count: self.sample_count,
        }
    }
}

/// Per-path throughputs: `[low_0, low_1, high_0, high_1]`.
pub type PathThroughput = [f64; 4];

fn check_duopoly(units: &[StorageUnit]) -> Result<()> {
    if units.len() != 2 {
        return Err(invalid(format!(
            "throughput moments need exactly two firms, got {}",
            units.len()
        )));
    }
    Ok(())
}

/// Throughputs on one imbalance path, simulated once with firm 0 first and
/// once with firm 1 first.
pub fn path_throughput(units: &[StorageUnit], path: &[f64]) -> PathThroughput {
    let first0 = throughput_in_order(units, &[0, 1], path);
    let first1 = throughput_in_order(units, &[1, 0], path);
    [first0[0], first1[1], first1[0], first0[1]]
}

/// Cumulative per-path throughputs at each horizon in `horizons` (sorted
/// ascending), from one simulation of length `max(horizons) + 1` per
/// priority order. `path` must cover the longest horizon.
pub fn path_throughput_prefixes(
    units: &[StorageUnit],
    path: &[f64],
    horizons: &[usize],
) -> Vec<PathThroughput> {
    let mut out = vec![[0.0; 4]; horizons.len()];
    for (first, order) in [[0usize, 1usize], [1, 0]].iter().enumerate() {
        let mut charge: Vec<f64> = units.iter().map(|u| u.initial_charge).collect();
        let mut alloc = [0.0; 2];
        let mut total = [0.0; 2];
        let mut next = 0;
        for (t, &b) in path.iter().enumerate() {
            if next == horizons.len() {
                break;
            }
            step_in_place(units, &mut charge, order, b, &mut alloc);
            total[0] += alloc[0].abs();
            total[1] += alloc[1].abs();
            while next < horizons.len() && horizons[next] == t {
                // first == 0: firm 0 is served first, firm 1 second
                let o = &mut out[next];
                if first == 0 {
                    o[0] = total[0];
                    o[3] = total[1];
                } else {
                    o[1] = total[1];
                    o[2] = total[0];
                }
                next += 1;
            }
        }
    }
    out
}

/// Per-path throughputs for paths `0..count`, in path order.
pub fn sample_path_throughputs(
    units: &[StorageUnit],
    model: &ImbalanceModel,
    horizon: usize,
    count: usize,
    seed: u64,
) -> Result<Vec<PathThroughput>> {
    check_duopoly(units)?;
    if count == 0 {
        return Err(invalid("sample count must be >= 1"));
    }
    (0..count as u64)
        .into_par_iter()
        .map(|k| {
            model
                .sample_path(horizon, seed, k)
                .map(|path| path_throughput(units, &path))
        })
        .collect()
}

/// Reduce per-path throughputs to moments with standard errors.
pub fn moments_from_paths(samples: &[PathThroughput]) -> ThroughputMoments {
    let column = |j: usize| mean_and_std_err(&samples.iter().map(|s| s[j]).collect::<Vec<_>>());
    let [(l0, e0), (l1, e1), (h0, f0), (h1, f1)] = [column(0), column(1), column(2), column(3)];
    ThroughputMoments {
        x_low: [l0, l1],
        x_high: [h0, h1],
        std_err_low: [e0, e1],
        std_err_high: [f0, f1],
        sample_count: samples.len(),
    }
}

/// Monte Carlo estimate of the moments. Both priority orders are run on the
/// same sample paths.
pub fn estimate_moments_mc(
    units: &[StorageUnit],
    model: &ImbalanceModel,
    horizon: usize,
    count: usize,
    seed: u64,
) -> Result<ThroughputMoments> {
    let samples = sample_path_throughputs(units, model, horizon, count, seed)?;
    Ok(moments_from_paths(&samples))
}

/// Single deterministic period with empty storages and `b >= 0`.
pub fn closed_form_deterministic(b: f64, s1: f64, s2: f64) -> Result<ThroughputMoments> {
    if !(b.is_finite() && b >= 0.0) {
        return Err(invalid(format!(
            "closed form needs a finite imbalance >= 0, got {b}"
        )));
    }
    if !(s1 >= 0.0 && s2 >= 0.0) {
        return Err(invalid("capacities must be >= 0"));
    }
    let first = |s: f64| b.clamp(0.0, s);
    let second = |s: f64, other: f64| (b - first(other)).clamp(0.0, s);
    Ok(ThroughputMoments::exact(
        [first(s1), first(s2)],
        [second(s1, s2), second(s2, s1)],
    ))
}

/// `E[min(B, s)]` for a standard half-normal `B`.
pub fn half_normal_x_low(s: f64) -> f64 {
    if s <= 0.0 {
        return 0.0;
    }
    FRAC_2_PI.sqrt() * (-(0.5 * s * s)).exp_m1().abs() + s * half_normal_sf(s)
}

/// `E[clamp(B - other, 0, s)]`: what a firm of size `s` absorbs when a firm
/// of size `other` is served first.
pub fn half_normal_x_high(s: f64, other: f64) -> f64 {
    if s <= 0.0 {
        return 0.0;
    }
    let c = other.max(0.0);
    let top = c + s;
    FRAC_2_PI.sqrt() * ((-0.5 * c * c).exp() - (-0.5 * top * top).exp())
        - c * (half_normal_sf(c) - half_normal_sf(top))
        + s * half_normal_sf(top)
}

/// Single half-normal period with empty storages.
pub fn closed_form_half_normal(s1: f64, s2: f64) -> Result<ThroughputMoments> {
    if !(s1.is_finite() && s2.is_finite() && s1 >= 0.0 && s2 >= 0.0) {
        return Err(invalid("capacities must be finite and >= 0"));
    }
    Ok(ThroughputMoments::exact(
        [half_normal_x_low(s1), half_normal_x_low(s2)],
        [half_normal_x_high(s1, s2), half_normal_x_high(s2, s1)],
    ))
}
