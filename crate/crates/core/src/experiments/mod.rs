//! Parameter sweeps behind the horizon, leakage, capacity and pricing-format
//! experiments, written as CSV tables with gnuplot scripts.
//!
//! Every sweep draws its imbalance paths from the master seed by path
//! index alone, so all grid points see the same underlying randomness and
//! curves are smooth in the swept parameter. Expected-price standard errors
//! come from 10 batch means, since prices are a nonlinear function of the
//! throughput moments.

mod config;
mod table;

use std::f64::consts::FRAC_2_PI;
use std::path::PathBuf;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use config::{step_grid, Scenario, ScenarioConfig, SWEEP_SAMPLES};
pub use table::{PlotSpec, ResultTable};

use crate::capacity::{
    deterministic_equilibrium_set, solve_capacity_equilibria, CapacityGameConfig, Lambda2Status,
};
use crate::dispatch::StorageUnit;
use crate::error::Result;
use crate::imbalance::ImbalanceModel;
use crate::numeric::{mean_and_std_err, pairwise_sum};
use crate::pricing::{expected_prices, solve_pricing, Degeneracy};
use crate::throughput::{path_throughput_prefixes, PathThroughput, ThroughputMoments};

/// Number of batches used for batch-means standard errors.
pub const BATCHES: usize = 10;

/// Note attached to outputs that use the deterministic capacity equilibrium set.
pub const SEGMENT_NOTE: &str =
    "deterministic capacity equilibria taken as {S1 + S2 = B, Si >= B (R - gi) / (2R - gi)}; \
the additional literal condition Si <= S-i for both firms would force S1 = S2 and is not applied";

/// Expected prices at one grid point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PricePoint {
    pub rho: [f64; 2],
    pub std_err: [f64; 2],
    pub degenerate: Degeneracy,
    pub moments: ThroughputMoments,
}

fn degeneracy_code(d: Degeneracy) -> f64 {
    match d {
        Degeneracy::None => 0.0,
        Degeneracy::AllZeroPrice => 1.0,
        Degeneracy::AllReservationPrice => 2.0,
    }
}

fn moments_of(samples: &[&PathThroughput]) -> ThroughputMoments {
    let stats: Vec<(f64, f64)> = (0..4)
        .map(|j| mean_and_std_err(&samples.iter().map(|s| s[j]).collect::<Vec<_>>()))
        .collect();
    ThroughputMoments {
        x_low: [stats[0].0, stats[1].0],
        x_high: [stats[2].0, stats[3].0],
        std_err_low: [stats[0].1, stats[1].1],
        std_err_high: [stats[2].1, stats[3].1],
        sample_count: samples.len(),
    }
}

/// Expected equilibrium prices at each horizon in `horizons` (ascending)
/// for one set of storage units, from `count` paths of `model`.
pub fn price_points(
    units: &[StorageUnit],
    model: &ImbalanceModel,
    horizons: &[usize],
    count: usize,
    seed: u64,
    reservation: f64,
) -> Result<Vec<PricePoint>> {
    let t_max = horizons.iter().copied().max().unwrap_or(0);
    let per_path: Vec<Vec<PathThroughput>> = (0..count as u64)
        .into_par_iter()
        .map(|k| {
            model
                .sample_path(t_max, seed, k)
                .map(|p| path_throughput_prefixes(units, &p, horizons))
        })
        .collect::<Result<_>>()?;
    let batches = BATCHES.min(count).max(1);
    let bounds: Vec<usize> = (0..=batches).map(|b| b * count / batches).collect();

    let mut points = Vec::with_capacity(horizons.len());
    for h in 0..horizons.len() {
        let column: Vec<&PathThroughput> = per_path.iter().map(|p| &p[h]).collect();
        let m = moments_of(&column);
        let eq = solve_pricing(&m, reservation)?;
        let rho = expected_prices(&eq);
        let mut batch_rho = [Vec::with_capacity(batches), Vec::with_capacity(batches)];
        for w in bounds.windows(2) {
            let beq = solve_pricing(&moments_of(&column[w[0]..w[1]]), reservation)?;
            let r = expected_prices(&beq);
            batch_rho[0].push(r[0]);
            batch_rho[1].push(r[1]);
        }
        let std_err = if batches < 2 {
            [0.0; 2]
        } else {
            batch_rho.map(|r| mean_and_std_err(&r).1)
        };
        points.push(PricePoint {
            rho,
            std_err,
            degenerate: eq.degenerate_flag,
            moments: m,
        });
    }
    Ok(points)
}

fn sorted_unique(xs: &[usize]) -> Vec<usize> {
    let mut v = xs.to_vec();
    v.sort_unstable();
    v.dedup();
    v
}

fn base_metadata(table: &mut ResultTable, cfg: &ScenarioConfig) {
    table.add_metadata("scenario", cfg.scenario.id());
    table.add_metadata("version", env!("CARGO_PKG_VERSION"));
    table.add_metadata("seed", cfg.seed.to_string());
    table.add_metadata("samples", cfg.samples.to_string());
    table.add_metadata(
        "config",
        serde_json::to_string(cfg).expect("config serializes"),
    );
}

fn units_for(cfg: &ScenarioConfig, alpha: f64, s0_frac: f64) -> Result<Vec<StorageUnit>> {
    cfg.capacities
        .iter()
        .map(|&c| StorageUnit::with_charge_fraction(c, alpha, s0_frac))
        .collect()
}

/// Expected prices against horizon for every variance and initial charge.
/// Uses the first leakage value of the config (1 by default).
pub fn run_horizon_sweep(cfg: &ScenarioConfig) -> Result<ResultTable> {
    cfg.validate()?;
    let horizons = sorted_unique(&cfg.horizons);
    let alpha = cfg.alphas[0];
    let mut table = ResultTable::new(
        "fig1",
        &[
            "T",
            "sigma",
            "s0_frac",
            "rho1",
            "rho2",
            "se1",
            "se2",
            "degenerate",
        ],
    );
    base_metadata(&mut table, cfg);
    for &sigma in &cfg.sigmas {
        let model = ImbalanceModel::iid_normal(sigma)?;
        for &frac in &cfg.s0_fracs {
            let units = units_for(cfg, alpha, frac)?;
            let points = price_points(
                &units,
                &model,
                &horizons,
                cfg.samples,
                cfg.seed,
                cfg.reservation,
            )?;
            for (&t, p) in horizons.iter().zip(&points) {
                table.push_row(vec![
                    t as f64,
                    sigma,
                    frac,
                    p.rho[0],
                    p.rho[1],
                    p.std_err[0],
                    p.std_err[1],
                    degeneracy_code(p.degenerate),
                ])?;
            }
        }
    }
    Ok(table)
}

/// Expected prices against leakage retention at the first configured
/// horizon and initial charge (100 and 1/2 by default).
pub fn run_leakage_sweep(cfg: &ScenarioConfig) -> Result<ResultTable> {
    cfg.validate()?;
    let horizon = cfg.horizons[0];
    let frac = cfg.s0_fracs[0];
    let mut table = ResultTable::new(
        "fig2",
        &["alpha", "sigma", "rho1", "rho2", "se1", "se2", "degenerate"],
    );
    base_metadata(&mut table, cfg);
    for &sigma in &cfg.sigmas {
        let model = ImbalanceModel::iid_normal(sigma)?;
        for &alpha in &cfg.alphas {
            let units = units_for(cfg, alpha, frac)?;
            let p = price_points(
                &units,
                &model,
                &[horizon],
                cfg.samples,
                cfg.seed,
                cfg.reservation,
            )?[0];
            table.push_row(vec![
                alpha,
                sigma,
                p.rho[0],
                p.rho[1],
                p.std_err[0],
                p.std_err[1],
                degeneracy_code(p.degenerate),
            ])?;
        }
    }
    Ok(table)
}

fn status_code(s: &Lambda2Status) -> f64 {
    match s {
        Lambda2Status::Root => 0.0,
        Lambda2Status::Corner => 1.0,
        Lambda2Status::Degenerate => 2.0,
        Lambda2Status::NoRoot => 3.0,
        Lambda2Status::Ambiguous { .. } => 4.0,
    }
}

fn capacity_config(cfg: &ScenarioConfig, gamma1: f64) -> Result<CapacityGameConfig> {
    CapacityGameConfig::new(
        [gamma1, cfg.gamma2],
        cfg.reservation,
        ImbalanceModel::HalfNormal,
    )
}

/// Both capacity candidates and their verdicts for every `gamma1`.
///
/// `status` codes the smaller capacity: 0 interior root, 1 corner (zero),
/// 2 no investment at all, 3 no root, 4 ambiguous. Invalid candidates have
/// zero capacities and payoffs and `is_nash = 0`.
pub fn run_capacity_sweep(cfg: &ScenarioConfig) -> Result<ResultTable> {
    cfg.validate()?;
    let mut table = ResultTable::new(
        "fig3",
        &[
            "gamma1",
            "candidate_id",
            "large_firm",
            "S_large",
            "S_small",
            "psi1",
            "psi2",
            "is_nash",
            "valid",
            "status",
            "worst_gain",
        ],
    );
    base_metadata(&mut table, cfg);
    table.add_metadata("demand", "half-normal, single period");
    table.add_metadata(
        "tolerance",
        "deviation gains up to 1e-4 * R * lambda1 are accepted",
    );
    let outcomes = cfg
        .gamma1
        .par_iter()
        .map(|&g| solve_capacity_equilibria(&capacity_config(cfg, g)?))
        .collect::<Result<Vec<_>>>()?;
    for (&g, out) in cfg.gamma1.iter().zip(&outcomes) {
        for (id, ((c, v), psi)) in out
            .candidates
            .iter()
            .zip(&out.nash_verdicts)
            .zip(&out.payoffs)
            .enumerate()
        {
            let (s_large, s_small) = if c.valid {
                (c.capacities[c.large_firm], c.capacities[1 - c.large_firm])
            } else {
                (0.0, 0.0)
            };
            table.push_row(vec![
                g,
                id as f64,
                c.large_firm as f64 + 1.0,
                s_large,
                s_small,
                psi[0],
                psi[1],
                v.as_ref()
                    .map_or(0.0, |v| f64::from(u8::from(v.is_equilibrium))),
                f64::from(u8::from(c.valid)),
                status_code(&c.status),
                v.as_ref().map_or(0.0, |v| v.worst_deviation_gain),
            ])?;
        }
    }
    Ok(table)
}

/// Total net profit under energy pricing (best verified capacity
/// equilibrium) against capacity pricing with a deterministic requirement
/// equal to the mean imbalance, for every `gamma1`.
pub fn run_format_comparison(cfg: &ScenarioConfig) -> Result<ResultTable> {
    cfg.validate()?;
    let b = FRAC_2_PI.sqrt();
    let mut table = ResultTable::new(
        "fig4",
        &[
            "gamma1",
            "energy_total_profit",
            "capacity_profit_min",
            "capacity_profit_mid",
            "capacity_profit_max",
            "energy_total_capacity",
            "capacity_total_capacity",
            "energy_equilibria",
        ],
    );
    base_metadata(&mut table, cfg);
    table.add_metadata("capacity_requirement", format!("{b}"));
    table.add_metadata(
        "energy_side",
        "largest total net profit over verified equilibria; 0 if none verified",
    );
    table.add_metadata("note", SEGMENT_NOTE);
    let outcomes = cfg
        .gamma1
        .par_iter()
        .map(|&g| solve_capacity_equilibria(&capacity_config(cfg, g)?))
        .collect::<Result<Vec<_>>>()?;
    for (&g, out) in cfg.gamma1.iter().zip(&outcomes) {
        let mut energy: Option<(f64, f64)> = None;
        let mut count = 0;
        for (c, psi) in out.equilibria() {
            count += 1;
            let total = pairwise_sum(psi);
            if energy.is_none_or(|(best, _)| total > best) {
                energy = Some((total, c.capacities[0] + c.capacities[1]));
            }
        }
        let (energy_profit, energy_capacity) = energy.unwrap_or((0.0, 0.0));
        let seg = deterministic_equilibrium_set(b, &capacity_config(cfg, g)?)?;
        let (lo, mid, hi) = seg.total_profit_range();
        table.push_row(vec![
            g,
            energy_profit,
            lo,
            mid,
            hi,
            energy_capacity,
            seg.total,
            count as f64,
        ])?;
    }
    Ok(table)
}

fn plot_spec(scenario: Scenario) -> PlotSpec {
    let s = |v: &[&str]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>();
    match scenario {
        Scenario::Fig1 => PlotSpec {
            title: "Expected equilibrium price against market horizon".into(),
            x_column: "T".into(),
            x_label: "horizon T".into(),
            y_columns: s(&["rho1", "rho2"]),
            y_label: "expected price".into(),
            group_by: s(&["sigma", "s0_frac"]),
        },
        Scenario::Fig2 => PlotSpec {
            title: "Expected equilibrium price against leakage retention".into(),
            x_column: "alpha".into(),
            x_label: "retention alpha".into(),
            y_columns: s(&["rho1", "rho2"]),
            y_label: "expected price".into(),
            group_by: s(&["sigma"]),
        },
        Scenario::Fig3 => PlotSpec {
            title: "Capacity equilibria".into(),
            x_column: "gamma1".into(),
            x_label: "opportunity cost gamma1".into(),
            y_columns: s(&["S_large", "S_small", "psi1", "psi2"]),
            y_label: "capacity / net profit".into(),
            group_by: s(&["candidate_id"]),
        },
        Scenario::Fig4 => PlotSpec {
            title: "Total profit under energy and capacity pricing".into(),
            x_column: "gamma1".into(),
            x_label: "opportunity cost gamma1".into(),
            y_columns: s(&[
                "energy_total_profit",
                "capacity_profit_min",
                "capacity_profit_mid",
                "capacity_profit_max",
            ]),
            y_label: "total net profit".into(),
            group_by: vec![],
        },
    }
}

/// Files written by [`run_scenario`].
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioOutput {
    pub table: ResultTable,
    pub csv_path: PathBuf,
    pub plot_path: PathBuf,
}

/// Run the table for `cfg.scenario` without writing anything.
pub fn run_table(cfg: &ScenarioConfig) -> Result<ResultTable> {
    match cfg.scenario {
        Scenario::Fig1 => run_horizon_sweep(cfg),
        Scenario::Fig2 => run_leakage_sweep(cfg),
        Scenario::Fig3 => run_capacity_sweep(cfg),
        Scenario::Fig4 => run_format_comparison(cfg),
    }
}

/// Run the scenario and write `<out_dir>/<id>.csv` and `<out_dir>/<id>.gp`.
pub fn run_scenario(cfg: &ScenarioConfig) -> Result<ScenarioOutput> {
    let table = run_table(cfg)?;
    let id = cfg.scenario.id();
    let csv_name = format!("{id}.csv");
    let csv_path = cfg.out_dir.join(&csv_name);
    let plot_path = cfg.out_dir.join(format!("{id}.gp"));
    table.write_csv(&csv_path)?;
    let script = table.plot_script(&csv_name, &plot_spec(cfg.scenario))?;
    table::write_file(&plot_path, script.as_bytes())?;
    Ok(ScenarioOutput {
        table,
        csv_path,
        plot_path,
    })
}
