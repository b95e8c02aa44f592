//! Merit-order allocation of energy imbalances across leaky storages.
//!
//! In every period the imbalance is offered to the storages in ascending
//! price order. A positive imbalance fills headroom, a negative one drains
//! stored energy, and whatever no storage can take falls to the backstop (the
//! conventional reserve, infinitely large and priced at the reservation
//! utility). Stored energy leaks before allocation: a unit holding `s` at
//! the start of a period has only `alpha * s` available.

use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::rng::{stream_rng, Stream};

/// Physical parameters of one storage firm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StorageUnit {
    pub capacity: f64,
    /// Fraction of the state of charge kept from one period to the next.
    pub leakage_retention: f64,
    pub initial_charge: f64,
}

impl StorageUnit {
    pub fn new(capacity: f64, leakage_retention: f64, initial_charge: f64) -> Result<Self> {
        if !(capacity.is_finite() && capacity >= 0.0) {
            return Err(invalid(format!(
                "capacity must be finite and >= 0, got {capacity}"
            )));
        }
        if !(0.0..=1.0).contains(&leakage_retention) {
            return Err(invalid(format!(
                "leakage retention must lie in [0, 1], got {leakage_retention}"
            )));
        }
        if !(0.0..=capacity).contains(&initial_charge) {
            return Err(invalid(format!(
                "initial charge {initial_charge} outside [0, {capacity}]"
            )));
        }
        Ok(Self {
            capacity,
            leakage_retention,
            initial_charge,
        })
    }

    /// Unit whose initial charge is `fraction` of its capacity.
    pub fn with_charge_fraction(
        capacity: f64,
        leakage_retention: f64,
        fraction: f64,
    ) -> Result<Self> {
        if !(0.0..=1.0).contains(&fraction) {
            return Err(invalid(format!(
                "charge fraction must lie in [0, 1], got {fraction}"
            )));
        }
        Self::new(capacity, leakage_retention, capacity * fraction)
    }

    /// Lossless unit that starts empty.
    pub fn empty(capacity: f64) -> Result<Self> {
        Self::new(capacity, 1.0, 0.0)
    }
}

/// State of charge of every firm at the start of a period.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StorageState {
    pub charge_per_firm: Vec<f64>,
}

impl StorageState {
    pub fn initial(units: &[StorageUnit]) -> Self {
        Self {
            charge_per_firm: units.iter().map(|u| u.initial_charge).collect(),
        }
    }

    pub fn validate(&self, units: &[StorageUnit]) -> Result<()> {
        if self.charge_per_firm.len() != units.len() {
            return Err(Error::Precondition(format!(
                "state has {} entries for {} firms",
                self.charge_per_firm.len(),
                units.len()
            )));
        }
        for (i, (&s, u)) in self.charge_per_firm.iter().zip(units).enumerate() {
            if !(0.0..=u.capacity).contains(&s) {
                return Err(Error::Precondition(format!(
                    "firm {i}: charge {s} outside [0, {}]",
                    u.capacity
                )));
            }
        }
        Ok(())
    }
}

/// Firm prices plus the backstop (reservation) price.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriceProfile {
    pub firm_prices: Vec<f64>,
    pub backstop_price: f64,
}

impl PriceProfile {
    pub fn new(firm_prices: Vec<f64>, backstop_price: f64) -> Result<Self> {
        if !(backstop_price.is_finite() && backstop_price > 0.0) {
            return Err(invalid(format!(
                "backstop price must be > 0, got {backstop_price}"
            )));
        }
        if let Some(p) = firm_prices.iter().find(|p| !(p.is_finite() && **p >= 0.0)) {
            return Err(invalid(format!(
                "firm prices must be finite and >= 0, got {p}"
            )));
        }
        Ok(Self {
            firm_prices,
            backstop_price,
        })
    }
}

/// Outcome of dispatching one period.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AllocationStep {
    pub firm_allocations: Vec<f64>,
    pub backstop_allocation: f64,
    pub next_state: StorageState,
}

/// Firm indices in dispatch order: ascending price, equal prices ordered by
/// their position in `tie_priority` (earlier wins).
pub fn merit_order(prices: &[f64], tie_priority: &[usize]) -> Vec<usize> {
    let mut rank = vec![usize::MAX; prices.len()];
    for (pos, &firm) in tie_priority.iter().enumerate() {
        if firm < rank.len() {
            rank[firm] = pos;
        }
    }
    let mut order: Vec<usize> = (0..prices.len()).collect();
    order.sort_by(|&a, &b| {
        prices[a]
            .total_cmp(&prices[b])
            .then(rank[a].cmp(&rank[b]))
            .then(a.cmp(&b))
    });
    order
}

/// Allocate one period in a fixed priority order, updating `charge` in
/// place and writing each firm's allocation into `out`. Returns the backstop
/// allocation. No validation; callers check the state once up front.
#[inline]
pub(crate) fn step_in_place(
    units: &[StorageUnit],
    charge: &mut [f64],
    order: &[usize],
    imbalance: f64,
    out: &mut [f64],
) -> f64 {
    let mut remaining = imbalance;
    for &i in order {
        let unit = &units[i];
        let held = unit.leakage_retention * charge[i];
        let x = if remaining > 0.0 {
            remaining.min(unit.capacity - held).max(0.0)
        } else if remaining < 0.0 {
            remaining.max(-held).min(0.0)
        } else {
            0.0
        };
        remaining -= x;
        out[i] = x;
        charge[i] = (held + x).clamp(0.0, unit.capacity);
    }
    remaining
}

fn check_tie_draw(tie_draw: &[usize], n: usize) -> Result<()> {
    let mut seen = vec![false; n];
    if tie_draw.len() != n {
        return Err(Error::Precondition(format!(
            "tie draw has {} entries for {n} firms",
            tie_draw.len()
        )));
    }
    for &f in tie_draw {
        if f >= n || std::mem::replace(&mut seen[f], true) {
            return Err(Error::Precondition(format!(
                "tie draw {tie_draw:?} is not a permutation"
            )));
        }
    }
    Ok(())
}

/// Apply leakage and dispatch one period's imbalance in merit order.
pub fn leak_and_allocate(
    units: &[StorageUnit],
    state: &StorageState,
    prices: &PriceProfile,
    imbalance: f64,
    tie_draw: &[usize],
) -> Result<AllocationStep> {
    if prices.firm_prices.len() != units.len() {
        return Err(invalid(format!(
            "{} prices for {} firms",
            prices.firm_prices.len(),
            units.len()
        )));
    }
    check_tie_draw(tie_draw, units.len())?;
    let order = merit_order(&prices.firm_prices, tie_draw);
    allocate_in_order(units, state, &order, imbalance)
}

/// Dispatch one period with an explicit priority order (first entry is
/// served first). The backstop is always last.
pub fn allocate_in_order(
    units: &[StorageUnit],
    state: &StorageState,
    order: &[usize],
    imbalance: f64,
) -> Result<AllocationStep> {
    if !imbalance.is_finite() {
        return Err(invalid(format!(
            "imbalance must be finite, got {imbalance}"
        )));
    }
    state.validate(units)?;
    check_tie_draw(order, units.len())?;
    let mut charge = state.charge_per_firm.clone();
    let mut alloc = vec![0.0; units.len()];
    let backstop = step_in_place(units, &mut charge, order, imbalance, &mut alloc);
    Ok(AllocationStep {
        firm_allocations: alloc,
        backstop_allocation: backstop,
        next_state: StorageState {
            charge_per_firm: charge,
        },
    })
}

/// When the priority permutation between tied firms is drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TieRedraw {
    #[default]
    PerPeriod,
    PerHorizon,
}

/// Result of running a price profile over a whole imbalance sequence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HorizonOutcome {
    /// `sum_t |X_i^t|` per firm.
    pub throughput: Vec<f64>,
    /// States at t = 0..=T+1 (initial state first).
    pub trajectory: Vec<StorageState>,
    /// `p_i * throughput_i`.
    pub profits: Vec<f64>,
}

fn draw_priority(rng: &mut ChaCha8Rng, n: usize) -> Vec<usize> {
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(rng);
    perm
}

/// Run the market over `imbalances` (periods t = 0..=T) with prices fixed
/// for the whole horizon.
pub fn simulate_horizon(
    units: &[StorageUnit],
    prices: &PriceProfile,
    imbalances: &[f64],
    tie_seed: u64,
    redraw: TieRedraw,
) -> Result<HorizonOutcome> {
    if imbalances.is_empty() {
        return Err(invalid("imbalance sequence is empty"));
    }
    if prices.firm_prices.len() != units.len() {
        return Err(invalid(format!(
            "{} prices for {} firms",
            prices.firm_prices.len(),
            units.len()
        )));
    }
    if let Some(b) = imbalances.iter().find(|b| !b.is_finite()) {
        return Err(invalid(format!("imbalance must be finite, got {b}")));
    }
    let mut state = StorageState::initial(units);
    state.validate(units)?;

    let n = units.len();
    let mut rng = stream_rng(tie_seed, Stream::Tie, 0);
    let mut order = merit_order(&prices.firm_prices, &draw_priority(&mut rng, n));
    let mut throughput = vec![0.0; n];
    let mut alloc = vec![0.0; n];
    let mut trajectory = Vec::with_capacity(imbalances.len() + 1);
    trajectory.push(state.clone());
    for (t, &b) in imbalances.iter().enumerate() {
        if t > 0 && redraw == TieRedraw::PerPeriod {
            order = merit_order(&prices.firm_prices, &draw_priority(&mut rng, n));
        }
        step_in_place(units, &mut state.charge_per_firm, &order, b, &mut alloc);
        for (acc, x) in throughput.iter_mut().zip(&alloc) {
            *acc += x.abs();
        }
        trajectory.push(state.clone());
    }
    let profits = throughput
        .iter()
        .zip(&prices.firm_prices)
        .map(|(x, p)| x * p)
        .collect();
    Ok(HorizonOutcome {
        throughput,
        trajectory,
        profits,
    })
}

/// Total absolute throughput per firm over `imbalances` with a fixed
/// priority order. This is the fast path used by the Monte Carlo estimators.
pub fn throughput_in_order(units: &[StorageUnit], order: &[usize], imbalances: &[f64]) -> Vec<f64> {
    let mut charge: Vec<f64> = units.iter().map(|u| u.initial_charge).collect();
    let mut alloc = vec![0.0; units.len()];
    let mut total = vec![0.0; units.len()];
    for &b in imbalances {
        step_in_place(units, &mut charge, order, b, &mut alloc);
        for (acc, x) in total.iter_mut().zip(&alloc) {
            *acc += x.abs();
        }
    }
    total
}

/// Throughput of [`simulate_horizon`] without the trajectory or input
/// checks. Draws the same tie permutations for the same `tie_seed`.
pub fn horizon_throughput(
    units: &[StorageUnit],
    firm_prices: &[f64],
    imbalances: &[f64],
    tie_seed: u64,
    redraw: TieRedraw,
) -> Vec<f64> {
    let n = units.len();
    let mut rng = stream_rng(tie_seed, Stream::Tie, 0);
    let mut order = merit_order(firm_prices, &draw_priority(&mut rng, n));
    let mut charge: Vec<f64> = units.iter().map(|u| u.initial_charge).collect();
    let mut alloc = vec![0.0; n];
    let mut total = vec![0.0; n];
    for (t, &b) in imbalances.iter().enumerate() {
        if t > 0 && redraw == TieRedraw::PerPeriod {
            order = merit_order(firm_prices, &draw_priority(&mut rng, n));
        }
        step_in_place(units, &mut charge, &order, b, &mut alloc);
        for (acc, x) in total.iter_mut().zip(&alloc) {
            *acc += x.abs();
        }
    }
    total
}

/// Objective `sum_i p_i |X_i| + R |X_backstop|` of an allocation.
pub fn dispatch_cost(
    prices: &PriceProfile,
    firm_allocations: &[f64],
    backstop_allocation: f64,
) -> f64 {
    prices
        .firm_prices
        .iter()
        .zip(firm_allocations)
        .map(|(p, x)| p * x.abs())
        .sum::<f64>()
        + prices.backstop_price * backstop_allocation.abs()
}

/// Exact optimum of the per-period allocation program, found by enumerating
/// vertices: in each sign orthant the program is a box-constrained LP with a
/// single equality, so some optimum has every variable but one at a bound
/// (lower, zero or upper) and the remaining one fixed by the balance.
pub fn exact_dispatch_cost(
    units: &[StorageUnit],
    state: &StorageState,
    prices: &PriceProfile,
    imbalance: f64,
) -> f64 {
    let n = units.len();
    let bounds: Vec<[f64; 3]> = units
        .iter()
        .zip(&state.charge_per_firm)
        .map(|(u, &s)| {
            let held = u.leakage_retention * s;
            [-held, 0.0, u.capacity - held]
        })
        .collect();
    let feasible = |i: usize, x: f64| -> bool {
        if i == n {
            return true;
        }
        x >= bounds[i][0] - 1e-12 && x <= bounds[i][2] + 1e-12
    };
    let mut best = f64::INFINITY;
    let combos = 3usize.pow(n as u32);
    for free in 0..=n {
        for code in 0..combos {
            let mut x = vec![0.0; n + 1];
            let mut c = code;
            for (i, b) in bounds.iter().enumerate() {
                x[i] = b[c % 3];
                c /= 3;
            }
            x[n] = 0.0;
            let others: f64 = (0..=n).filter(|&j| j != free).map(|j| x[j]).sum();
            x[free] = imbalance - others;
            if !feasible(free, x[free]) {
                continue;
            }
            let cost = dispatch_cost(prices, &x[..n], x[n]);
            best = best.min(cost);
        }
    }
    best
}

/// True iff greedy merit-order dispatch attains the exact optimum of the
/// allocation program within 1e-9. Intended for up to three firms.
pub fn lp_oracle_check(
    units: &[StorageUnit],
    state: &StorageState,
    prices: &PriceProfile,
    imbalance: f64,
) -> bool {
    let n = units.len();
    let greedy =
        match leak_and_allocate(units, state, prices, imbalance, &(0..n).collect::<Vec<_>>()) {
            Ok(step) => step,
            Err(_) => return false,
        };
    let greedy_cost = dispatch_cost(prices, &greedy.firm_allocations, greedy.backstop_allocation);
    let exact = exact_dispatch_cost(units, state, prices, imbalance);
    (greedy_cost - exact).abs() <= 1e-9 * (1.0 + exact.abs())
}
