//! Capacity investment game played before price competition.
//!
//! Firm `i` commits capacity `S_i` at opportunity cost `gamma_i` per unit
//! and then earns its single-period price equilibrium payoff:
//!
//! `psi_i(S) = -gamma_i S_i + pi_bar(S_i, S_-i)` if `S_i >= S_-i`, and
//! `-gamma_i S_i + pi_under(S_-i, S_i)` otherwise,
//!
//! where `pi_bar` and `pi_under` are the equilibrium payoffs of the larger
//! and smaller firm. Under half-normal demand the only possible pure
//! equilibria are the two candidates built from `lambda1` (where the larger
//! firm's marginal value meets its cost) and `lambda2` (the smaller firm's
//! best response along the line `S_1 + S_2 = lambda1`). Candidates are
//! checked against the equilibrium definition directly.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::imbalance::{
    half_normal_cdf, half_normal_pdf, half_normal_quantile, half_normal_sf, ImbalanceModel,
};
use crate::numeric::{bisect, golden_max, linspace};
use crate::pricing::solve_pricing;
use crate::throughput::{
    closed_form_deterministic, closed_form_half_normal, half_normal_x_high, half_normal_x_low,
    ThroughputMoments,
};

/// Lower end of the `lambda2` bracket.
pub const LAMBDA2_BRACKET_LOW: f64 = 1e-9;
/// Points in the `lambda2` uniqueness scan and the deviation grid.
pub const SCAN_POINTS: usize = 1000;
/// Deviation tolerance relative to `R * lambda1`.
pub const DEVIATION_TOL_REL: f64 = 1e-4;

/// Parameters of the capacity game.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CapacityGameConfig {
    /// Opportunity cost per unit of capacity, per firm.
    pub gamma: [f64; 2],
    /// Reservation utility `R`.
    pub reservation: f64,
    /// `HalfNormal` or a single-value `Deterministic` imbalance.
    pub demand: ImbalanceModel,
}

impl CapacityGameConfig {
    pub fn new(gamma: [f64; 2], reservation: f64, demand: ImbalanceModel) -> Result<Self> {
        let cfg = Self {
            gamma,
            reservation,
            demand,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let r = self.reservation;
        if !(r.is_finite() && r > 0.0) {
            return Err(invalid(format!("reservation utility must be > 0, got {r}")));
        }
        for (i, &g) in self.gamma.iter().enumerate() {
            if !(g > 0.0 && g <= r) {
                return Err(invalid(format!(
                    "opportunity cost of firm {} must satisfy 0 < gamma <= R = {r}, got {g}",
                    i + 1
                )));
            }
        }
        match &self.demand {
            ImbalanceModel::HalfNormal => Ok(()),
            ImbalanceModel::Deterministic(v) if v.len() == 1 && v[0].is_finite() && v[0] >= 0.0 => Ok(()),
            other => Err(invalid(format!(
                "capacity game needs half-normal or a single nonnegative deterministic imbalance, got {other:?}"
            ))),
        }
    }

    fn moments(&self, s_big: f64, s_small: f64) -> ThroughputMoments {
        match &self.demand {
            ImbalanceModel::Deterministic(v) => closed_form_deterministic(v[0], s_big, s_small),
            _ => closed_form_half_normal(s_big, s_small),
        }
        .expect("validated capacities")
    }

    /// `F^{-1}(u)` of the demand distribution for `u` in `[0, 1)`.
    fn quantile(&self, u: f64) -> Result<f64> {
        match &self.demand {
            ImbalanceModel::Deterministic(v) => Ok(if u == 0.0 { 0.0 } else { v[0] }),
            _ => half_normal_quantile(u),
        }
    }

    fn is_half_normal(&self) -> bool {
        matches!(self.demand, ImbalanceModel::HalfNormal)
    }

    /// Natural capacity scale: the demand quantile at 0.999 or the fixed
    /// imbalance.
    fn scale(&self) -> f64 {
        match &self.demand {
            ImbalanceModel::Deterministic(v) => v[0],
            _ => half_normal_quantile(0.999).unwrap_or(3.3),
        }
    }
}

fn check_capacity(s: f64) -> Result<()> {
    if !(s.is_finite() && s >= 0.0) {
        return Err(invalid(format!(
            "capacity must be finite and >= 0, got {s}"
        )));
    }
    Ok(())
}

fn pair_unchecked(s_big: f64, s_small: f64, cfg: &CapacityGameConfig) -> (f64, f64) {
    let m = cfg.moments(s_big, s_small);
    let eq = solve_pricing(&m, cfg.reservation).expect("closed-form moments are consistent");
    (eq.payoff(0), eq.payoff(1))
}

/// Price equilibrium payoffs `(pi_bar, pi_under)` of the larger and the
/// smaller firm.
pub fn payoff_pair(s_big: f64, s_small: f64, cfg: &CapacityGameConfig) -> Result<(f64, f64)> {
    cfg.validate()?;
    check_capacity(s_big)?;
    check_capacity(s_small)?;
    if s_big < s_small {
        return Err(invalid(format!(
            "payoff_pair expects the larger capacity first, got ({s_big}, {s_small})"
        )));
    }
    Ok(pair_unchecked(s_big, s_small, cfg))
}

fn net_unchecked(own: f64, other: f64, firm: usize, cfg: &CapacityGameConfig) -> f64 {
    let gross = if own >= other {
        pair_unchecked(own, other, cfg).0
    } else {
        pair_unchecked(other, own, cfg).1
    };
    gross - cfg.gamma[firm] * own
}

/// Net profit `psi_firm` when `firm` commits `own` and its rival `other`.
pub fn net_payoff(own: f64, other: f64, firm: usize, cfg: &CapacityGameConfig) -> Result<f64> {
    cfg.validate()?;
    check_capacity(own)?;
    check_capacity(other)?;
    if firm > 1 {
        return Err(invalid(format!("firm index must be 0 or 1, got {firm}")));
    }
    Ok(net_unchecked(own, other, firm, cfg))
}

/// Both firms' net profits at the profile `capacities`.
pub fn net_payoffs(capacities: [f64; 2], cfg: &CapacityGameConfig) -> Result<[f64; 2]> {
    Ok([
        net_payoff(capacities[0], capacities[1], 0, cfg)?,
        net_payoff(capacities[1], capacities[0], 1, cfg)?,
    ])
}

/// Equilibria of the game with a known imbalance `B`: every split of `B`
/// with `S_i >= B (R - gamma_i) / (2R - gamma_i)`. Both firms then price
/// at `R` and sell their full capacity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EquilibriumSegment {
    pub total: f64,
    pub lower_bounds: [f64; 2],
    /// Range of `S_1`; `S_2 = total - S_1`.
    pub s1_min: f64,
    pub s1_max: f64,
    /// `R - gamma_i`, the net profit per unit of capacity.
    pub margins: [f64; 2],
}

impl EquilibriumSegment {
    /// Capacities at `S_1 = s1`.
    pub fn capacities(&self, s1: f64) -> [f64; 2] {
        [s1, self.total - s1]
    }

    /// Net profits `(R - gamma_i) S_i` at `S_1 = s1`.
    pub fn payoffs(&self, s1: f64) -> [f64; 2] {
        let s = self.capacities(s1);
        [self.margins[0] * s[0], self.margins[1] * s[1]]
    }

    pub fn total_profit(&self, s1: f64) -> f64 {
        let [a, b] = self.payoffs(s1);
        a + b
    }

    /// Minimum, midpoint and maximum of total profit over the segment.
    pub fn total_profit_range(&self) -> (f64, f64, f64) {
        let lo = self.total_profit(self.s1_min);
        let hi = self.total_profit(self.s1_max);
        let mid = self.total_profit(0.5 * (self.s1_min + self.s1_max));
        (lo.min(hi), mid, lo.max(hi))
    }
}

/// Equilibrium segment for a deterministic imbalance `b > 0`. Only the
/// opportunity costs and `R` of `cfg` are used.
pub fn deterministic_equilibrium_set(
    b: f64,
    cfg: &CapacityGameConfig,
) -> Result<EquilibriumSegment> {
    if !(b.is_finite() && b > 0.0) {
        return Err(invalid(format!(
            "deterministic imbalance must be > 0, got {b}"
        )));
    }
    let r = cfg.reservation;
    let det = CapacityGameConfig {
        demand: ImbalanceModel::constant(b),
        ..cfg.clone()
    };
    det.validate()?;
    let lower = cfg.gamma.map(|g| b * (r - g) / (2.0 * r - g));
    Ok(EquilibriumSegment {
        total: b,
        lower_bounds: lower,
        s1_min: lower[0],
        s1_max: b - lower[1],
        margins: cfg.gamma.map(|g| r - g),
    })
}

/// `F^{-1}(1 - gamma / R)`: the total capacity at which the larger firm's
/// marginal revenue equals `gamma`.
pub fn lambda1(gamma: f64, cfg: &CapacityGameConfig) -> Result<f64> {
    let r = cfg.reservation;
    if gamma.is_nan() || gamma <= 0.0 {
        return Err(Error::Domain(format!(
            "lambda1 needs gamma > 0, got {gamma}"
        )));
    }
    if gamma > r {
        return Err(invalid(format!(
            "lambda1 needs gamma <= R = {r}, got {gamma}"
        )));
    }
    cfg.quantile(1.0 - gamma / r)
}

fn dpi_small_unchecked(s_small: f64, s_big: f64, cfg: &CapacityGameConfig) -> f64 {
    let r = cfg.reservation;
    let x_big = half_normal_x_low(s_big);
    let pi_bar = r * half_normal_x_high(s_big, s_small);
    let mass_between = half_normal_cdf(s_small + s_big) - half_normal_cdf(s_small);
    ((half_normal_sf(s_small)) * pi_bar - r * mass_between * half_normal_x_low(s_small)) / x_big
}

/// `d pi_under / d S_small` under half-normal demand, holding the larger
/// capacity fixed.
pub fn dpi_small_ds(s_small: f64, s_big: f64, cfg: &CapacityGameConfig) -> Result<f64> {
    cfg.validate()?;
    if !cfg.is_half_normal() {
        return Err(invalid("dpi_small_ds needs half-normal demand"));
    }
    check_capacity(s_small)?;
    check_capacity(s_big)?;
    if half_normal_x_low(s_big) <= 0.0 {
        return Err(Error::Domain("larger firm has zero capacity".into()));
    }
    Ok(dpi_small_unchecked(s_small, s_big, cfg))
}

/// `d pi_bar / d S_big = R (1 - F(S_big + S_small))` under half-normal demand.
pub fn dpi_big_ds(s_big: f64, s_small: f64, cfg: &CapacityGameConfig) -> Result<f64> {
    cfg.validate()?;
    if !cfg.is_half_normal() {
        return Err(invalid("dpi_big_ds needs half-normal demand"));
    }
    check_capacity(s_big)?;
    check_capacity(s_small)?;
    Ok(cfg.reservation * half_normal_sf(s_big + s_small))
}

/// `d^2 pi_bar / d S_big^2 = -R f(S_big + S_small)`.
pub fn d2pi_big_ds2(s_big: f64, s_small: f64, cfg: &CapacityGameConfig) -> f64 {
    -cfg.reservation * half_normal_pdf(s_big + s_small)
}

/// The smaller firm's capacity on the line `S_small + S_big = lambda1_big`
/// at which its marginal revenue equals `gamma_small`.
///
/// Scans the bracket `[1e-9, lambda1_big / 2]` for sign changes first: none
/// gives [`Error::NoRoot`], more than one gives [`Error::Ambiguous`].
pub fn lambda2(gamma_small: f64, lambda1_big: f64, cfg: &CapacityGameConfig) -> Result<f64> {
    cfg.validate()?;
    if !cfg.is_half_normal() {
        return Err(invalid("lambda2 needs half-normal demand"));
    }
    if !(lambda1_big > 0.0 && lambda1_big.is_finite()) {
        return Err(Error::Domain(format!(
            "lambda2 needs lambda1 > 0, got {lambda1_big}"
        )));
    }
    let g = |s: f64| dpi_small_unchecked(s, lambda1_big - s, cfg) - gamma_small;
    let (lo, hi) = (LAMBDA2_BRACKET_LOW, 0.5 * lambda1_big);
    if hi <= lo {
        return Err(Error::NoRoot {
            lo,
            hi,
            left_value: g(lo),
        });
    }
    let grid = linspace(lo, hi, SCAN_POINTS);
    let values: Vec<f64> = grid.iter().map(|&s| g(s)).collect();
    let mut roots = Vec::new();
    for k in 1..grid.len() {
        if (values[k - 1] > 0.0) != (values[k] > 0.0) {
            roots.push(bisect(g, grid[k - 1], grid[k], 1e-10));
        }
    }
    match roots.len() {
        0 => Err(Error::NoRoot {
            lo,
            hi,
            left_value: values[0],
        }),
        1 => Ok(roots[0]),
        _ => Err(Error::Ambiguous { roots }),
    }
}

/// How the smaller capacity of a candidate was obtained.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Lambda2Status {
    /// Interior root of the first-order condition.
    Root,
    /// Marginal revenue is below cost already at zero capacity, so the
    /// smaller firm stays out.
    Corner,
    /// `lambda1 = 0`: the larger firm does not invest either.
    Degenerate,
    /// Marginal revenue exceeds cost on the whole bracket.
    NoRoot,
    Ambiguous {
        roots: Vec<f64>,
    },
}

/// A candidate profile `(lambda1_i - lambda2, lambda2)` with firm `i` large.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CapacityCandidate {
    /// Indexed by firm.
    pub capacities: [f64; 2],
    pub large_firm: usize,
    pub lambda1: f64,
    /// `None` when the first-order condition has no unique root.
    pub lambda2: Option<f64>,
    pub status: Lambda2Status,
    /// Larger entry >= smaller entry >= 0 and `lambda2` was determined.
    pub valid: bool,
}

/// Outcome of checking a profile against every unilateral deviation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NashVerdict {
    pub is_equilibrium: bool,
    /// Largest improvement any firm can obtain by deviating.
    pub worst_deviation_gain: f64,
    /// Firm achieving that improvement.
    pub deviating_firm: usize,
    /// Profile after the most profitable deviation.
    pub best_deviation_point: [f64; 2],
    pub tolerance: f64,
}

/// Best deviation of `firm` against rival capacity `other`: the maximum of
/// a grid sweep, golden-section searches on the two branches and a few
/// analytic candidate points.
fn best_deviation(other: f64, firm: usize, cfg: &CapacityGameConfig) -> (f64, f64) {
    let psi = |s: f64| net_unchecked(s, other, firm, cfg);
    let own_l1 = lambda1(cfg.gamma[firm], cfg).unwrap_or(0.0);
    let hi = 1.5 * other.max(own_l1).max(cfg.scale()).max(1e-3);

    let mut best = (0.0, psi(0.0));
    let mut consider = |s: f64, v: f64| {
        if v > best.1 {
            best = (s, v);
        }
    };
    for s in linspace(0.0, hi, SCAN_POINTS) {
        consider(s, psi(s));
    }
    if other > 0.0 {
        let (s, v) = golden_max(psi, 0.0, other, 1e-10);
        consider(s, v);
    }
    let (s, v) = golden_max(psi, other, hi, 1e-10);
    consider(s, v);
    let mut points = vec![other, (own_l1 - other).max(other)];
    if let ImbalanceModel::Deterministic(v) = &cfg.demand {
        points.extend([v[0], (v[0] - other).max(0.0)]);
    }
    for s in points {
        consider(s, psi(s));
    }
    best
}

/// Check `capacities` against the equilibrium definition: no firm may gain
/// more than `tol` by changing its capacity alone.
pub fn deviation_check(
    capacities: [f64; 2],
    cfg: &CapacityGameConfig,
    tol: f64,
) -> Result<NashVerdict> {
    cfg.validate()?;
    check_capacity(capacities[0])?;
    check_capacity(capacities[1])?;
    let tol = tol.max(1e-12);
    let mut verdict = NashVerdict {
        is_equilibrium: true,
        worst_deviation_gain: f64::NEG_INFINITY,
        deviating_firm: 0,
        best_deviation_point: capacities,
        tolerance: tol,
    };
    for firm in 0..2 {
        let other = capacities[1 - firm];
        let current = net_unchecked(capacities[firm], other, firm, cfg);
        let (s, v) = best_deviation(other, firm, cfg);
        let gain = v - current;
        if gain > verdict.worst_deviation_gain {
            verdict.worst_deviation_gain = gain;
            verdict.deviating_firm = firm;
            let mut point = capacities;
            point[firm] = s;
            verdict.best_deviation_point = point;
        }
    }
    verdict.is_equilibrium = verdict.worst_deviation_gain <= tol;
    Ok(verdict)
}

/// Candidates, their verdicts and net profits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CapacityOutcome {
    pub config: CapacityGameConfig,
    pub candidates: Vec<CapacityCandidate>,
    /// `None` for invalid candidates.
    pub nash_verdicts: Vec<Option<NashVerdict>>,
    /// Net profits `psi_i` at each candidate (zeros if invalid).
    pub payoffs: Vec<[f64; 2]>,
}

impl CapacityOutcome {
    /// Candidates that passed the equilibrium check.
    pub fn equilibria(&self) -> impl Iterator<Item = (&CapacityCandidate, &[f64; 2])> {
        self.candidates
            .iter()
            .zip(&self.nash_verdicts)
            .zip(&self.payoffs)
            .filter(|((_, v), _)| v.as_ref().is_some_and(|v| v.is_equilibrium))
            .map(|((c, _), p)| (c, p))
    }
}

fn build_candidate(large: usize, cfg: &CapacityGameConfig) -> Result<CapacityCandidate> {
    let small = 1 - large;
    let l1 = lambda1(cfg.gamma[large], cfg)?;
    let (l2, status) = if l1 <= 0.0 {
        (Some(0.0), Lambda2Status::Degenerate)
    } else {
        match lambda2(cfg.gamma[small], l1, cfg) {
            Ok(root) => (Some(root), Lambda2Status::Root),
            Err(Error::NoRoot { left_value, .. }) if left_value <= 0.0 => {
                (Some(0.0), Lambda2Status::Corner)
            }
            Err(Error::NoRoot { .. }) => (None, Lambda2Status::NoRoot),
            Err(Error::Ambiguous { roots }) => (None, Lambda2Status::Ambiguous { roots }),
            Err(e) => return Err(e),
        }
    };
    let mut capacities = [0.0; 2];
    let valid = l2.is_some_and(|l2| l2 >= 0.0 && l1 - l2 >= l2);
    if let Some(l2) = l2 {
        capacities[large] = l1 - l2;
        capacities[small] = l2;
    }
    Ok(CapacityCandidate {
        capacities,
        large_firm: large,
        lambda1: l1,
        lambda2: l2,
        status,
        valid,
    })
}

/// Build both candidates (firm 0 large, then firm 1 large) and verify each
/// valid one against all unilateral deviations with tolerance
/// `1e-4 R lambda1`.
pub fn solve_capacity_equilibria(cfg: &CapacityGameConfig) -> Result<CapacityOutcome> {
    cfg.validate()?;
    if !cfg.is_half_normal() {
        return Err(invalid(
            "candidate equilibria need half-normal demand; use deterministic_equilibrium_set",
        ));
    }
    let mut outcome = CapacityOutcome {
        config: cfg.clone(),
        candidates: Vec::with_capacity(2),
        nash_verdicts: Vec::with_capacity(2),
        payoffs: Vec::with_capacity(2),
    };
    for large in 0..2 {
        let cand = build_candidate(large, cfg)?;
        if cand.valid {
            let tol = DEVIATION_TOL_REL * cfg.reservation * cand.lambda1;
            outcome
                .nash_verdicts
                .push(Some(deviation_check(cand.capacities, cfg, tol)?));
            outcome.payoffs.push(net_payoffs(cand.capacities, cfg)?);
        } else {
            outcome.nash_verdicts.push(None);
            outcome.payoffs.push([0.0; 2]);
        }
        outcome.candidates.push(cand);
    }
    Ok(outcome)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn half_normal(gamma: [f64; 2]) -> CapacityGameConfig {
        CapacityGameConfig::new(gamma, 1.0, ImbalanceModel::HalfNormal).unwrap()
    }

    fn det(b: f64, gamma: [f64; 2]) -> CapacityGameConfig {
        CapacityGameConfig::new(gamma, 1.0, ImbalanceModel::constant(b)).unwrap()
    }

    #[test]
    fn config_validation() {
        assert!(CapacityGameConfig::new([0.0, 0.5], 1.0, ImbalanceModel::HalfNormal).is_err());
        assert!(CapacityGameConfig::new([1.1, 0.5], 1.0, ImbalanceModel::HalfNormal).is_err());
        assert!(CapacityGameConfig::new([1.0, 1.0], 1.0, ImbalanceModel::HalfNormal).is_ok());
        let iid = ImbalanceModel::iid_normal(1.0).unwrap();
        assert!(CapacityGameConfig::new([0.5, 0.5], 1.0, iid).is_err());
    }

    #[test]
    fn payoff_pair_examples() {
        let (hi, lo) = payoff_pair(1.5, 1.0, &det(2.0, [0.5, 0.5])).unwrap();
        assert!((hi - 1.0).abs() < 1e-12 && (lo - 2.0 / 3.0).abs() < 1e-12);
        let cfg = half_normal([0.5, 0.5]);
        let (hi, lo) = payoff_pair(0.5, 0.3, &cfg).unwrap();
        assert!((hi - 0.293_108_016_444_889).abs() < 1e-9);
        assert!((lo - 0.192_613_202_832_506_05).abs() < 1e-9);
        let (hi, lo) = payoff_pair(0.5, 0.0, &cfg).unwrap();
        assert_eq!(lo, 0.0);
        assert!((hi - half_normal_x_low(0.5)).abs() < 1e-12);
        assert!(payoff_pair(0.3, 0.5, &cfg).is_err());
    }

    #[test]
    fn net_payoff_examples() {
        let cfg = det(2.0, [0.5, 0.5]);
        let psi = net_payoffs([1.5, 1.0], &cfg).unwrap();
        assert!((psi[0] - 0.25).abs() < 1e-12);
        assert!((psi[1] - 1.0 / 6.0).abs() < 1e-12);
        assert_eq!(
            net_payoffs([0.0, 0.0], &half_normal([0.5, 0.5])).unwrap(),
            [0.0, 0.0]
        );
    }

    #[test]
    fn net_payoff_continuous_across_kink() {
        let cfg = half_normal([0.3, 0.6]);
        for other in [0.2, 0.7, 1.3] {
            let left = net_payoff(other - 1e-9, other, 0, &cfg).unwrap();
            let right = net_payoff(other + 1e-9, other, 0, &cfg).unwrap();
            assert!((left - right).abs() < 1e-6);
        }
    }

    #[test]
    fn deterministic_segment() {
        let seg = deterministic_equilibrium_set(1.0, &half_normal([0.5, 0.5])).unwrap();
        assert!((seg.s1_min - 1.0 / 3.0).abs() < 1e-15);
        assert!((seg.s1_max - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(seg.payoffs(0.5), [0.25, 0.25]);
        let seg = deterministic_equilibrium_set(2.0, &half_normal([1.0, 1.0])).unwrap();
        assert_eq!((seg.s1_min, seg.s1_max), (0.0, 2.0));
        assert!(deterministic_equilibrium_set(0.0, &half_normal([0.5, 0.5])).is_err());
    }

    #[test]
    fn deterministic_segment_passes_definition() {
        let cfg = det(1.0, [0.5, 0.5]);
        let seg = deterministic_equilibrium_set(1.0, &cfg).unwrap();
        let tol = DEVIATION_TOL_REL;
        for s1 in linspace(seg.s1_min, seg.s1_max, 7) {
            let v = deviation_check(seg.capacities(s1), &cfg, tol).unwrap();
            assert!(v.is_equilibrium, "s1 = {s1}: {v:?}");
        }
        let v = deviation_check([0.2, 0.8], &cfg, tol).unwrap();
        assert!(!v.is_equilibrium);
        assert_eq!(v.deviating_firm, 0);
    }

    #[test]
    fn lambda1_examples() {
        let cfg = half_normal([0.5, 0.5]);
        assert_eq!(lambda1(1.0, &cfg).unwrap(), 0.0);
        assert!((lambda1(0.5, &cfg).unwrap() - 0.674_489_750_196_081_7).abs() < 1e-9);
        assert!((lambda1(0.25, &cfg).unwrap() - 1.150_349_380_376_007_9).abs() < 1e-9);
        assert!(matches!(lambda1(0.0, &cfg), Err(Error::Domain(_))));
    }

    #[test]
    fn small_firm_slope() {
        let cfg = half_normal([0.5, 0.5]);
        let d = dpi_small_ds(0.3, 0.5, &cfg).unwrap();
        assert!((d - 0.333_042_27).abs() < 1e-6);
        let start = dpi_small_ds(0.0, 0.5, &cfg).unwrap();
        let (pi_bar, _) = payoff_pair(0.5, 0.0, &cfg).unwrap();
        assert!((start - pi_bar / half_normal_x_low(0.5)).abs() < 1e-12);
        assert!(matches!(
            dpi_small_ds(0.3, 0.0, &cfg),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn lambda2_root_contract() {
        let cfg = half_normal([0.5, 0.5]);
        let l1 = lambda1(0.5, &cfg).unwrap();
        let l2 = lambda2(0.5, l1, &cfg).unwrap();
        let g = dpi_small_ds(l2, l1 - l2, &cfg).unwrap() - 0.5;
        assert!(g.abs() < 1e-9);
        assert!(matches!(
            lambda2(1.0, 1e-3, &cfg),
            Err(Error::NoRoot { .. })
        ));
        assert!(matches!(lambda2(0.5, 0.0, &cfg), Err(Error::Domain(_))));
    }

    #[test]
    fn symmetric_costs_give_mirror_equilibria() {
        let out = solve_capacity_equilibria(&half_normal([0.5, 0.5])).unwrap();
        let eq: Vec<_> = out.equilibria().collect();
        assert_eq!(eq.len(), 2);
        let (a, b) = (eq[0].0.capacities, eq[1].0.capacities);
        assert!((a[0] - b[1]).abs() < 1e-12 && (a[1] - b[0]).abs() < 1e-12);
        assert!(a[0] > a[1]);
    }

    #[test]
    fn lower_cost_firm_is_large() {
        let out = solve_capacity_equilibria(&half_normal([0.2, 0.8])).unwrap();
        let eq: Vec<_> = out.equilibria().collect();
        assert_eq!(eq.len(), 1);
        assert_eq!(eq[0].0.large_firm, 0);
    }

    #[test]
    fn zero_margin_is_degenerate() {
        let out = solve_capacity_equilibria(&half_normal([1.0, 1.0])).unwrap();
        for (c, v) in out.candidates.iter().zip(&out.nash_verdicts) {
            assert_eq!(c.status, Lambda2Status::Degenerate);
            assert_eq!(c.capacities, [0.0, 0.0]);
            assert!(v.as_ref().unwrap().is_equilibrium);
        }
    }
}
