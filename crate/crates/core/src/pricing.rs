//! Mixed-strategy price equilibrium of the storage duopoly.
//!
//! Given the priority-ordered throughputs `a_i = x_low[i]` and
//! `b_i = x_high[i]`, a firm pricing at `x` against a rival with price CDF
//! `G` earns `x (b_i G(x) + a_i (1 - G(x)))`. In equilibrium both firms mix
//! over a common support `[L, R]`, where `R` is the reservation utility.
//! Exactly one firm, the *large* firm, carries an atom at `R`; the other is
//! atomless. With the large firm labelled 1:
//!
//! * payoffs `pi_1 = R b_1` and `pi_2 = R b_1 a_2 / a_1`,
//! * lower support `L = R b_1 / a_1`,
//! * CDFs `G_2(x) = (a_1 - pi_1 / x) / (a_1 - b_1)` and
//!   `G_1(x) = (a_2 - pi_2 / x) / (a_2 - b_2)` on `[L, R)`,
//! * atom `(a_2 b_1 - b_2 a_1) / (a_1 (a_2 - b_2))` at `R`.
//!
//! The atom is nonnegative only when the large firm has the larger ratio
//! `b_i / a_i`, so that is how the large firm is chosen; ties keep input
//! order. For single-period storage games this is the firm with the larger
//! capacity.
//!
//! ```
//! use baleq::pricing::solve_pricing;
//! use baleq::throughput::ThroughputMoments;
//!
//! let m = ThroughputMoments::exact([1.5, 1.0], [1.0, 0.5]);
//! let eq = solve_pricing(&m, 1.0).unwrap();
//! assert!((eq.payoff_small - 2.0 / 3.0).abs() < 1e-15);
//! assert!((eq.atom_mass_large - 1.0 / 3.0).abs() < 1e-15);
//! ```

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dispatch::{horizon_throughput, StorageUnit, TieRedraw};
use crate::error::{invalid, Error, Result};
use crate::imbalance::ImbalanceModel;
use crate::numeric::mean_and_std_err;
use crate::rng::{derive_seed, stream_rng, Stream};
use crate::throughput::ThroughputMoments;

/// Relative gap below which `x_low - x_high` counts as zero.
pub const DEGENERACY_TOL: f64 = 1e-9;

/// Which pure-strategy special case applies, if any.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Degeneracy {
    None,
    /// No firm sells anything when priced above its rival: both price at 0.
    AllZeroPrice,
    /// Sales do not depend on the price order: both price at `R`.
    AllReservationPrice,
}

/// Equilibrium of the pricing game.
///
/// In the degenerate cases the support collapses to the pure price and
/// `atom_mass_large` is 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PricingEquilibrium {
    pub reservation: f64,
    /// Index of the firm carrying the atom at `R`.
    pub large_firm: usize,
    pub payoff_large: f64,
    pub payoff_small: f64,
    pub support_low: f64,
    pub support_high: f64,
    pub atom_mass_large: f64,
    pub moments: ThroughputMoments,
    pub degenerate_flag: Degeneracy,
}

impl PricingEquilibrium {
    pub fn small_firm(&self) -> usize {
        1 - self.large_firm
    }

    /// Equilibrium payoff of firm `firm` (input index).
    pub fn payoff(&self, firm: usize) -> f64 {
        if firm == self.large_firm {
            self.payoff_large
        } else {
            self.payoff_small
        }
    }

    /// Payoffs indexed by firm.
    pub fn payoffs(&self) -> [f64; 2] {
        [self.payoff(0), self.payoff(1)]
    }

    /// Firm `firm`'s equilibrium price distribution.
    pub fn strategy(&self, firm: usize) -> MixedStrategy {
        let (low, high) = (self.support_low, self.support_high);
        match self.degenerate_flag {
            Degeneracy::AllZeroPrice => return MixedStrategy::pure(0.0),
            Degeneracy::AllReservationPrice => return MixedStrategy::pure(self.reservation),
            Degeneracy::None => {}
        }
        // A firm's CDF is pinned down by its rival's indifference.
        let rival = 1 - firm;
        let a = self.moments.x_low[rival];
        let b = self.moments.x_high[rival].min(a);
        let gap = a - b;
        let rival_payoff = self.payoff(rival);
        let atom = if firm == self.large_firm {
            self.atom_mass_large
        } else {
            0.0
        };
        MixedStrategy {
            low,
            high,
            kind: StrategyKind::Continuous {
                level: a / gap,
                scale: rival_payoff / gap,
                atom,
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum StrategyKind {
    Pure(f64),
    /// CDF `level - scale / x` on `[low, high)` plus `atom` at `high`.
    Continuous {
        level: f64,
        scale: f64,
        atom: f64,
    },
}

/// A price distribution on `[low, high]`: either a point mass or a density
/// `scale / x^2` with an optional atom at `high`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MixedStrategy {
    pub low: f64,
    pub high: f64,
    kind: StrategyKind,
}

impl MixedStrategy {
    pub fn pure(price: f64) -> Self {
        Self {
            low: price,
            high: price,
            kind: StrategyKind::Pure(price),
        }
    }

    pub fn is_pure(&self) -> bool {
        matches!(self.kind, StrategyKind::Pure(_))
    }

    /// Point mass at `high`.
    pub fn atom(&self) -> f64 {
        match self.kind {
            StrategyKind::Pure(_) => 1.0,
            StrategyKind::Continuous { atom, .. } => atom,
        }
    }

    /// Probability of a price `<= x`. Below the support this is 0 and from
    /// `high` on it is 1; just below `high` it excludes the atom.
    pub fn cdf(&self, x: f64) -> f64 {
        match self.kind {
            StrategyKind::Pure(p) => {
                if x >= p {
                    1.0
                } else {
                    0.0
                }
            }
            StrategyKind::Continuous { level, scale, .. } => {
                if x < self.low {
                    0.0
                } else if x >= self.high {
                    1.0
                } else {
                    (level - scale / x).clamp(0.0, 1.0)
                }
            }
        }
    }

    /// Density of the continuous part (0 outside `[low, high)`).
    pub fn density(&self, x: f64) -> f64 {
        match self.kind {
            StrategyKind::Continuous { scale, .. } if x >= self.low && x < self.high => {
                scale / (x * x)
            }
            _ => 0.0,
        }
    }

    /// Mass of the continuous part, `scale (1/low - 1/high)`.
    pub fn continuous_mass(&self) -> f64 {
        match self.kind {
            StrategyKind::Pure(_) => 0.0,
            StrategyKind::Continuous { scale, .. } => scale * (1.0 / self.low - 1.0 / self.high),
        }
    }

    /// Inverse CDF: maps `u` in `[0, 1)` to a price. Values of `u` that fall
    /// in the atom return `high` exactly.
    pub fn quantile(&self, u: f64) -> f64 {
        match self.kind {
            StrategyKind::Pure(p) => p,
            StrategyKind::Continuous { level, scale, atom } => {
                if atom > 0.0 && u >= 1.0 - atom {
                    self.high
                } else {
                    (scale / (level - u)).clamp(self.low, self.high)
                }
            }
        }
    }

    pub fn mean(&self) -> f64 {
        match self.kind {
            StrategyKind::Pure(p) => p,
            StrategyKind::Continuous { scale, atom, .. } => {
                scale * (self.high / self.low).ln() + atom * self.high
            }
        }
    }
}

fn check_moments(m: &ThroughputMoments) -> Result<ThroughputMoments> {
    let mut out = *m;
    for i in 0..2 {
        let (a, b) = (m.x_low[i], m.x_high[i]);
        if !(a.is_finite() && b.is_finite() && a >= 0.0 && b >= 0.0) {
            return Err(invalid(format!(
                "firm {i}: moments must be finite and >= 0 (x_low {a}, x_high {b})"
            )));
        }
        if b > a {
            let se = m.std_err_low[i].hypot(m.std_err_high[i]);
            if b - a > 3.0 * se + 1e-12 * a.max(1.0) {
                return Err(Error::InconsistentMoments {
                    firm: i,
                    x_low: a,
                    x_high: b,
                });
            }
            out.x_high[i] = a;
        }
    }
    Ok(out)
}

/// Fraction of first-priority sales a firm keeps when served second. A firm
/// that never sells is unaffected by the order and counts as 1.
fn retention_ratio(a: f64, b: f64) -> f64 {
    if a <= DEGENERACY_TOL {
        1.0
    } else {
        b / a
    }
}

/// Solve the pricing game for the given moments and reservation utility.
pub fn solve_pricing(moments: &ThroughputMoments, reservation: f64) -> Result<PricingEquilibrium> {
    if !(reservation.is_finite() && reservation > 0.0) {
        return Err(invalid(format!(
            "reservation utility must be > 0, got {reservation}"
        )));
    }
    let m = check_moments(moments)?;
    let r = reservation;
    let (a, b) = (m.x_low, m.x_high);

    if b[0] < DEGENERACY_TOL && b[1] < DEGENERACY_TOL {
        return Ok(PricingEquilibrium {
            reservation: r,
            large_firm: 0,
            payoff_large: 0.0,
            payoff_small: 0.0,
            support_low: 0.0,
            support_high: 0.0,
            atom_mass_large: 1.0,
            moments: m,
            degenerate_flag: Degeneracy::AllZeroPrice,
        });
    }

    let large = if retention_ratio(a[1], b[1]) > retention_ratio(a[0], b[0]) {
        1
    } else {
        0
    };
    let small = 1 - large;
    let (a_l, b_l, a_s, b_s) = (a[large], b[large], a[small], b[small]);

    if a_l - b_l < DEGENERACY_TOL * a_l.max(1.0) {
        // The large firm sells the same whatever the order, so it prices at
        // R; the rival then earns its first-priority sales at R.
        return Ok(PricingEquilibrium {
            reservation: r,
            large_firm: large,
            payoff_large: r * b_l,
            payoff_small: r * a_s,
            support_low: r,
            support_high: r,
            atom_mass_large: 1.0,
            moments: m,
            degenerate_flag: Degeneracy::AllReservationPrice,
        });
    }

    let atom = ((a_s * b_l - b_s * a_l) / (a_l * (a_s - b_s))).clamp(0.0, 1.0);
    Ok(PricingEquilibrium {
        reservation: r,
        large_firm: large,
        payoff_large: r * b_l,
        payoff_small: r * b_l * a_s / a_l,
        support_low: r * b_l / a_l,
        support_high: r,
        atom_mass_large: atom,
        moments: m,
        degenerate_flag: Degeneracy::None,
    })
}

/// `G_firm(x)`, the probability that `firm` prices at or below `x`.
pub fn strategy_cdf(eq: &PricingEquilibrium, firm: usize, x: f64) -> f64 {
    eq.strategy(firm).cdf(x)
}

/// Inverse-transform sample of `firm`'s equilibrium price.
pub fn sample_price(eq: &PricingEquilibrium, firm: usize, u: f64) -> f64 {
    eq.strategy(firm).quantile(u)
}

/// Expected equilibrium price of each firm, by input index.
pub fn expected_prices(eq: &PricingEquilibrium) -> [f64; 2] {
    [eq.strategy(0).mean(), eq.strategy(1).mean()]
}

/// One firm's deviation payoffs over the price grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FirmResponse {
    pub firm: usize,
    pub equilibrium_payoff: f64,
    pub prices: Vec<f64>,
    pub payoffs: Vec<f64>,
    pub std_errs: Vec<f64>,
    /// Whether the grid price lies where the firm's strategy puts mass.
    pub on_support: Vec<bool>,
    pub max_on_support_deviation: f64,
    pub max_off_support_gain: f64,
    /// Largest standard error among the off-support grid points.
    pub off_support_noise: f64,
}

/// Result of the empirical best-response check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BestResponseReport {
    pub firms: Vec<FirmResponse>,
    pub max_on_support_deviation: f64,
    pub max_off_support_gain: f64,
}

fn on_support(eq: &PricingEquilibrium, firm: usize, p: f64) -> bool {
    match eq.degenerate_flag {
        Degeneracy::AllZeroPrice => p == 0.0,
        Degeneracy::AllReservationPrice => p == eq.reservation,
        // The atomless firm earns less exactly at R, where it ties the
        // rival's atom; that single point carries no mass.
        Degeneracy::None => {
            p >= eq.support_low
                && (p < eq.support_high || (firm == eq.large_firm && p == eq.support_high))
        }
    }
}

/// Estimate each firm's payoff from every grid price against the rival's
/// equilibrium mixture, by sampling rival prices and imbalance paths with
/// the dispatch engine. `units` must be indexed like the equilibrium's
/// moments. The same rival draws and paths are reused at every grid price.
#[allow(clippy::too_many_arguments)]
pub fn verify_best_response(
    eq: &PricingEquilibrium,
    units: &[StorageUnit],
    model: &ImbalanceModel,
    horizon: usize,
    price_grid: &[f64],
    count: usize,
    seed: u64,
) -> Result<BestResponseReport> {
    if units.len() != 2 {
        return Err(invalid("best-response check needs exactly two firms"));
    }
    if count == 0 || price_grid.is_empty() {
        return Err(invalid("need at least one sample and one grid price"));
    }
    let paths = (0..count as u64)
        .into_par_iter()
        .map(|k| model.sample_path(horizon, seed, k))
        .collect::<Result<Vec<_>>>()?;

    let mut firms = Vec::with_capacity(2);
    for firm in 0..2 {
        let rival = 1 - firm;
        let rival_strategy = eq.strategy(rival);
        let rival_prices: Vec<f64> = (0..count as u64)
            .map(|k| {
                let u: f64 = stream_rng(seed, Stream::Strategy, 2 * k + firm as u64).random();
                rival_strategy.quantile(u)
            })
            .collect();
        let estimates: Vec<(f64, f64)> = price_grid
            .par_iter()
            .map(|&p| {
                let values: Vec<f64> = (0..count)
                    .map(|k| {
                        let mut prices = [0.0; 2];
                        prices[firm] = p;
                        prices[rival] = rival_prices[k];
                        let tie_seed = derive_seed(seed, Stream::Tie, 2 * k as u64 + firm as u64);
                        let x = horizon_throughput(
                            units,
                            &prices,
                            &paths[k],
                            tie_seed,
                            TieRedraw::PerPeriod,
                        );
                        p * x[firm]
                    })
                    .collect();
                mean_and_std_err(&values)
            })
            .collect();

        let target = eq.payoff(firm);
        let mut on_dev = 0.0f64;
        let mut off_gain = f64::NEG_INFINITY;
        let mut off_noise = 0.0f64;
        let mut flags = Vec::with_capacity(price_grid.len());
        for (&p, &(v, se)) in price_grid.iter().zip(&estimates) {
            let on = on_support(eq, firm, p);
            flags.push(on);
            if on {
                on_dev = on_dev.max((v - target).abs());
            } else {
                off_gain = off_gain.max(v - target);
                off_noise = off_noise.max(se);
            }
        }
        firms.push(FirmResponse {
            firm,
            equilibrium_payoff: target,
            prices: price_grid.to_vec(),
            payoffs: estimates.iter().map(|e| e.0).collect(),
            std_errs: estimates.iter().map(|e| e.1).collect(),
            on_support: flags,
            max_on_support_deviation: on_dev,
            max_off_support_gain: off_gain,
            off_support_noise: off_noise,
        });
    }
    let max_on = firms
        .iter()
        .map(|f| f.max_on_support_deviation)
        .fold(0.0, f64::max);
    let max_off = firms
        .iter()
        .map(|f| f.max_off_support_gain)
        .fold(f64::NEG_INFINITY, f64::max);
    Ok(BestResponseReport {
        firms,
        max_on_support_deviation: max_on,
        max_off_support_gain: max_off,
    })
}
