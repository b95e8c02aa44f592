use std::path::PathBuf;
use std::process::ExitCode;
use std::str::FromStr;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::Rng;
use serde_json::{json, Value};

use baleq::capacity::{
    deterministic_equilibrium_set, solve_capacity_equilibria, CapacityGameConfig, Lambda2Status,
};
use baleq::dispatch::{
    lp_oracle_check, throughput_in_order, PriceProfile, StorageState, StorageUnit,
};
use baleq::experiments::{run_scenario, step_grid, Scenario, ScenarioConfig};
use baleq::imbalance::ImbalanceModel;
use baleq::numeric::linspace;
use baleq::pricing::{expected_prices, solve_pricing, verify_best_response, PricingEquilibrium};
use baleq::rng::{stream_rng, Stream};
use baleq::throughput::{
    closed_form_deterministic, closed_form_half_normal, estimate_moments_mc, ThroughputMoments,
};

#[derive(Parser)]
#[command(
    name = "baleq",
    version,
    about = "Price and capacity equilibria for energy storage in balancing markets"
)]
struct Cli {
    /// Worker threads for sampling and sweeps (default: all cores)
    #[arg(long, env = "BALEQ_THREADS", global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Expected throughput of each firm when served first and second
    Throughput(MarketArgs),
    /// Mixed-strategy price equilibrium and expected prices
    Pricing(PricingArgs),
    /// Capacity equilibria of the investment stage
    Capacity(CapacityArgs),
    /// Expected prices against market horizon
    Fig1(FigArgs),
    /// Expected prices against leakage retention
    Fig2(FigArgs),
    /// Capacity equilibria against the first firm's opportunity cost
    Fig3(FigArgs),
    /// Total profit under energy and capacity pricing
    Fig4(FigArgs),
    /// Best-response check of the price equilibrium plus dispatch invariants
    Verify(VerifyArgs),
}

/// A value pair such as `1.5,1`.
#[derive(Debug, Clone, Copy)]
struct Pair([f64; 2]);

impl FromStr for Pair {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let v = parse_list(s)?;
        match v[..] {
            [a, b] => Ok(Pair([a, b])),
            _ => Err(format!("expected two comma-separated values, got {s:?}")),
        }
    }
}

/// A number, optionally written as a fraction like `1/4`.
fn parse_num(s: &str) -> Result<f64, String> {
    let s = s.trim();
    let v = match s.split_once('/') {
        Some((a, b)) => {
            let a: f64 = a.trim().parse().map_err(|_| format!("bad number {s:?}"))?;
            let b: f64 = b.trim().parse().map_err(|_| format!("bad number {s:?}"))?;
            a / b
        }
        None => s.parse().map_err(|_| format!("bad number {s:?}"))?,
    };
    if !v.is_finite() {
        return Err(format!("{s:?} is not a finite number"));
    }
    Ok(v)
}

/// Comma-separated numbers or a range `lo:hi:step`.
fn parse_list(s: &str) -> Result<Vec<f64>, String> {
    let parts: Vec<&str> = s.split(':').collect();
    if let [lo, hi, step] = parts[..] {
        return step_grid(parse_num(lo)?, parse_num(hi)?, parse_num(step)?)
            .map_err(|e| e.to_string());
    }
    s.split(',').map(parse_num).collect()
}

/// A numeric grid: comma-separated values or `lo:hi:step`.
#[derive(Debug, Clone)]
struct Grid(Vec<f64>);

impl FromStr for Grid {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        parse_list(s).map(Grid)
    }
}

/// A list of market horizons.
#[derive(Debug, Clone)]
struct Horizons(Vec<usize>);

impl FromStr for Horizons {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        parse_horizons(s).map(Horizons)
    }
}

fn parse_horizons(s: &str) -> Result<Vec<usize>, String> {
    parse_list(s)?
        .into_iter()
        .map(|v| {
            if v >= 0.0 && v.fract() == 0.0 {
                Ok(v as usize)
            } else {
                Err(format!("horizon must be a nonnegative integer, got {v}"))
            }
        })
        .collect()
}

/// Imbalance model given on the command line.
#[derive(Debug, Clone)]
enum DemandSpec {
    HalfNormal,
    Det(f64),
    Normal(f64),
    File(PathBuf),
}

impl FromStr for DemandSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.split_once(':') {
            None if s == "halfnormal" => Ok(DemandSpec::HalfNormal),
            Some(("det", v)) => parse_num(v).map(DemandSpec::Det),
            Some(("normal", v)) => parse_num(v).map(DemandSpec::Normal),
            Some(("file", p)) => Ok(DemandSpec::File(p.into())),
            _ => Err(format!(
                "expected halfnormal, det:<value>, normal:<variance> or file:<path>, got {s:?}"
            )),
        }
    }
}

#[derive(Args, Clone)]
struct MarketArgs {
    /// Storage capacities S1,S2 (energy units)
    #[arg(long, default_value = "1.5,1")]
    caps: Pair,
    /// Leakage retention alpha1,alpha2 (fraction of charge kept per period)
    #[arg(long, default_value = "1,1")]
    alphas: Pair,
    /// Initial charge of both firms as a fraction of capacity
    #[arg(long, value_parser = parse_num, default_value = "0")]
    s0_frac: f64,
    /// Variance of the per-period normal imbalance (energy^2); shorthand for --demand normal:<v>
    #[arg(long, value_parser = parse_num, conflicts_with = "demand")]
    sigma: Option<f64>,
    /// Imbalance model: halfnormal, det:<energy>, normal:<variance> or file:<path> (one path per line)
    #[arg(long)]
    demand: Option<DemandSpec>,
    /// Market horizon T; periods run 0..=T
    #[arg(long, default_value_t = 0)]
    horizon: usize,
    /// Monte Carlo sample paths (ignored for file demand, which uses every path)
    #[arg(long, default_value_t = 100_000)]
    samples: usize,
    /// Master random seed
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Use single-period closed forms (horizon 0, empty storage) instead of Monte Carlo
    #[arg(long)]
    closed_form: bool,
}

struct Market {
    units: Vec<StorageUnit>,
    model: ImbalanceModel,
    samples: usize,
}

impl MarketArgs {
    fn build(&self) -> Result<Market> {
        let units = (0..2)
            .map(|i| {
                StorageUnit::with_charge_fraction(self.caps.0[i], self.alphas.0[i], self.s0_frac)
            })
            .collect::<baleq::Result<Vec<_>>>()?;
        let spec = match (&self.demand, self.sigma) {
            (_, Some(v)) => DemandSpec::Normal(v),
            (Some(d), None) => d.clone(),
            (None, None) => DemandSpec::HalfNormal,
        };
        let mut samples = self.samples;
        let model = match spec {
            DemandSpec::HalfNormal => ImbalanceModel::HalfNormal,
            DemandSpec::Det(v) => ImbalanceModel::Deterministic(vec![v; self.horizon + 1]),
            DemandSpec::Normal(v) => ImbalanceModel::iid_normal(v)?,
            DemandSpec::File(p) => {
                let m = ImbalanceModel::load_external(&p)?;
                if let ImbalanceModel::ExternalSequence(paths) = &m {
                    samples = paths.len();
                }
                m
            }
        };
        Ok(Market {
            units,
            model,
            samples,
        })
    }

    fn moments(&self, market: &Market) -> Result<ThroughputMoments> {
        if self.closed_form {
            if self.horizon != 0 || self.s0_frac != 0.0 {
                bail!(baleq::Error::InvalidInput(
                    "closed forms need --horizon 0 and --s0-frac 0".into()
                ));
            }
            let [s1, s2] = self.caps.0;
            return Ok(match &market.model {
                ImbalanceModel::HalfNormal => closed_form_half_normal(s1, s2)?,
                ImbalanceModel::Deterministic(v) => closed_form_deterministic(v[0], s1, s2)?,
                _ => bail!(baleq::Error::InvalidInput(
                    "closed forms exist for halfnormal and det demand".into()
                )),
            });
        }
        Ok(estimate_moments_mc(
            &market.units,
            &market.model,
            self.horizon,
            market.samples,
            self.seed,
        )?)
    }
}

#[derive(Args)]
struct PricingArgs {
    #[command(flatten)]
    market: MarketArgs,
    /// Reservation utility R (money per energy unit)
    #[arg(long, value_parser = parse_num, default_value = "1")]
    reservation: f64,
}

#[derive(Args)]
struct CapacityArgs {
    /// Opportunity costs gamma1,gamma2 (money per unit of capacity), each in (0, R]
    #[arg(long)]
    gamma: Pair,
    /// Reservation utility R (money per energy unit)
    #[arg(long, value_parser = parse_num, default_value = "1")]
    reservation: f64,
    /// Demand: halfnormal, or det:<energy> for a known imbalance
    #[arg(long, default_value = "halfnormal")]
    demand: DemandSpec,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Args)]
struct FigArgs {
    /// Run configuration file (.toml or .json); flags override it
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory for <fig>.csv and <fig>.gp
    #[arg(long)]
    out: Option<PathBuf>,
    /// Monte Carlo sample paths per grid point
    #[arg(long)]
    samples: Option<usize>,
    /// Master random seed
    #[arg(long)]
    seed: Option<u64>,
    /// Market horizons T, as a list or lo:hi:step
    #[arg(long)]
    horizons: Option<Horizons>,
    /// Alias for --horizons with a single value
    #[arg(long, conflicts_with = "horizons")]
    horizon: Option<usize>,
    /// Imbalance variances (energy^2), as a list or lo:hi:step
    #[arg(long)]
    sigma: Option<Grid>,
    /// Initial charge fractions, as a list or lo:hi:step
    #[arg(long)]
    s0_frac: Option<Grid>,
    /// Leakage retention grid, as a list or lo:hi:step
    #[arg(long)]
    alpha_grid: Option<Grid>,
    /// Opportunity cost grid for firm 1 (money per unit capacity), as a list or lo:hi:step
    #[arg(long)]
    gamma_grid: Option<Grid>,
    /// Opportunity cost of firm 2 (money per unit capacity)
    #[arg(long, value_parser = parse_num)]
    gamma2: Option<f64>,
    /// Storage capacities S1,S2 (energy units)
    #[arg(long)]
    caps: Option<Pair>,
    /// Reservation utility R (money per energy unit)
    #[arg(long, value_parser = parse_num)]
    reservation: Option<f64>,
    /// Print the table to stdout as csv or json (files are always written)
    #[arg(long, value_enum, default_value = "csv")]
    format: Format,
}

impl FigArgs {
    fn config(&self, scenario: Scenario) -> Result<ScenarioConfig> {
        let mut cfg = match &self.config {
            Some(p) => {
                let cfg = ScenarioConfig::load(p)?;
                if cfg.scenario != scenario {
                    bail!(baleq::Error::InvalidInput(format!(
                        "{} is a {} config, not {}",
                        p.display(),
                        cfg.scenario.id(),
                        scenario.id()
                    )));
                }
                cfg
            }
            None => ScenarioConfig::defaults(scenario),
        };
        if let Some(v) = &self.out {
            cfg.out_dir = v.clone();
        }
        if let Some(v) = self.samples {
            cfg.samples = v;
        }
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        if let Some(v) = &self.horizons {
            cfg.horizons = v.0.clone();
        }
        if let Some(v) = self.horizon {
            cfg.horizons = vec![v];
        }
        if let Some(v) = &self.sigma {
            cfg.sigmas = v.0.clone();
        }
        if let Some(v) = &self.s0_frac {
            cfg.s0_fracs = v.0.clone();
        }
        if let Some(v) = &self.alpha_grid {
            cfg.alphas = v.0.clone();
        }
        if let Some(v) = &self.gamma_grid {
            cfg.gamma1 = v.0.clone();
        }
        if let Some(v) = self.gamma2 {
            cfg.gamma2 = v;
        }
        if let Some(v) = self.caps {
            cfg.capacities = v.0;
        }
        if let Some(v) = self.reservation {
            cfg.reservation = v;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Args)]
struct VerifyArgs {
    #[command(flatten)]
    market: MarketArgs,
    /// Reservation utility R (money per energy unit)
    #[arg(long, value_parser = parse_num, default_value = "1")]
    reservation: f64,
    /// Spacing of the deviation price grid on [0, R]
    #[arg(long, value_parser = parse_num, default_value = "0.01")]
    grid_step: f64,
    /// Sample paths per grid price in the best-response check
    #[arg(long, default_value_t = 20_000)]
    br_samples: usize,
    /// Random instances for the dispatch invariant checks
    #[arg(long, default_value_t = 1000)]
    instances: usize,
}

fn print_json(value: &Value) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

fn equilibrium_json(eq: &PricingEquilibrium, samples: usize, seed: u64) -> Result<Value> {
    let mut v = serde_json::to_value(eq)?;
    let obj = v
        .as_object_mut()
        .expect("equilibrium serializes to an object");
    obj.insert("L".into(), json!(eq.support_low));
    obj.insert("atom".into(), json!(eq.atom_mass_large));
    obj.insert("payoffs_by_firm".into(), json!(eq.payoffs()));
    obj.insert("expected_prices".into(), json!(expected_prices(eq)));
    obj.insert("samples".into(), json!(samples));
    obj.insert("seed".into(), json!(seed));
    Ok(v)
}

fn cmd_throughput(args: &MarketArgs) -> Result<()> {
    let market = args.build()?;
    let m = args.moments(&market)?;
    let mut v = serde_json::to_value(m)?;
    v["seed"] = json!(args.seed);
    print_json(&v)
}

fn cmd_pricing(args: &PricingArgs) -> Result<()> {
    let market = args.market.build()?;
    let m = args.market.moments(&market)?;
    let eq = solve_pricing(&m, args.reservation)?;
    print_json(&equilibrium_json(&eq, m.sample_count, args.market.seed)?)
}

fn cmd_capacity(args: &CapacityArgs) -> Result<()> {
    match args.demand {
        DemandSpec::HalfNormal => {
            let cfg = CapacityGameConfig::new(
                args.gamma.0,
                args.reservation,
                ImbalanceModel::HalfNormal,
            )?;
            let out = solve_capacity_equilibria(&cfg)?;
            print_json(&serde_json::to_value(&out)?)?;
            if let Some(c) = out
                .candidates
                .iter()
                .find(|c| matches!(c.status, Lambda2Status::Ambiguous { .. }))
            {
                let Lambda2Status::Ambiguous { roots } = &c.status else {
                    unreachable!()
                };
                bail!(baleq::Error::Ambiguous {
                    roots: roots.clone()
                });
            }
            Ok(())
        }
        DemandSpec::Det(b) => {
            let cfg = CapacityGameConfig::new(
                args.gamma.0,
                args.reservation,
                ImbalanceModel::constant(b),
            )?;
            let seg = deterministic_equilibrium_set(b, &cfg)?;
            let (lo, mid, hi) = seg.total_profit_range();
            let mut v = serde_json::to_value(seg)?;
            v["total_profit_min"] = json!(lo);
            v["total_profit_mid"] = json!(mid);
            v["total_profit_max"] = json!(hi);
            v["note"] = json!(baleq::experiments::SEGMENT_NOTE);
            print_json(&v)
        }
        _ => bail!(baleq::Error::InvalidInput(
            "capacity demand must be halfnormal or det:<value>".into()
        )),
    }
}

fn cmd_fig(scenario: Scenario, args: &FigArgs) -> Result<()> {
    let cfg = args.config(scenario)?;
    let out = run_scenario(&cfg)?;
    match args.format {
        Format::Csv => print!("{}", out.table.to_csv_string()?),
        Format::Json => print_json(&serde_json::to_value(&out.table)?)?,
    }
    eprintln!(
        "wrote {} and {}",
        out.csv_path.display(),
        out.plot_path.display()
    );
    Ok(())
}

fn report(name: &str, pass: bool, detail: String) -> bool {
    println!("{} {name}: {detail}", if pass { "PASS" } else { "FAIL" });
    pass
}

fn cmd_verify(args: &VerifyArgs) -> Result<bool> {
    let market = args.market.build()?;
    let m = args.market.moments(&market)?;
    let r = args.reservation;
    let eq = solve_pricing(&m, r)?;
    let mut ok = true;

    let ordered = (0..2).all(|i| m.x_low[i] >= m.x_high[i]);
    ok &= report(
        "moment_ordering",
        ordered,
        format!("served first {:?}, served second {:?}", m.x_low, m.x_high),
    );

    let mass: Vec<f64> = (0..2)
        .map(|f| {
            let s = eq.strategy(f);
            (s.continuous_mass() + s.atom() - 1.0).abs()
        })
        .collect();
    ok &= report(
        "strategy_normalization",
        mass.iter().all(|e| *e < 1e-9),
        format!("errors {mass:?}"),
    );

    let n = (r / args.grid_step).round() as usize;
    let grid = linspace(0.0, r, n + 1);
    let br = verify_best_response(
        &eq,
        &market.units,
        &market.model,
        args.market.horizon,
        &grid,
        args.br_samples,
        args.market.seed,
    )?;
    for f in &br.firms {
        let on_noise = f
            .std_errs
            .iter()
            .zip(&f.on_support)
            .filter(|(_, on)| **on)
            .map(|(se, _)| *se)
            .fold(0.0, f64::max);
        let on_tol = 0.02 * f.equilibrium_payoff + 3.0 * on_noise + 1e-12;
        let off_tol = 3.0 * f.off_support_noise + 1e-12;
        ok &= report(
            &format!("best_response_firm{}", f.firm + 1),
            f.max_on_support_deviation <= on_tol && f.max_off_support_gain <= off_tol,
            format!(
                "payoff {:.6}, on-support deviation {:.3e} (tol {:.3e}), off-support gain {:.3e} (tol {:.3e})",
                f.equilibrium_payoff, f.max_on_support_deviation, on_tol, f.max_off_support_gain, off_tol
            ),
        );
    }

    let mut lp_fail = 0;
    let mut mono_fail = 0;
    for k in 0..args.instances as u64 {
        let mut rng = stream_rng(args.market.seed, Stream::Strategy, k);
        let firms = rng.random_range(1..=3usize);
        let units: Vec<StorageUnit> = (0..firms)
            .map(|_| {
                let cap = rng.random_range(0.0..2.0);
                StorageUnit::new(
                    cap,
                    rng.random_range(0.0..=1.0),
                    rng.random_range(0.0..=cap),
                )
            })
            .collect::<baleq::Result<_>>()?;
        let state = StorageState::initial(&units);
        let prices = PriceProfile::new((0..firms).map(|_| rng.random_range(0.0..r)).collect(), r)?;
        if !lp_oracle_check(&units, &state, &prices, rng.random_range(-3.0..3.0)) {
            lp_fail += 1;
        }
        if firms == 2 {
            let path: Vec<f64> = (0..rng.random_range(1..30))
                .map(|_| rng.random_range(-2.0..2.0))
                .collect();
            let first = throughput_in_order(&units, &[0, 1], &path);
            let second = throughput_in_order(&units, &[1, 0], &path);
            if first[0] < second[0] - 1e-12 || first[1] > second[1] + 1e-12 {
                mono_fail += 1;
            }
        }
    }
    ok &= report(
        "dispatch_lp_oracle",
        lp_fail == 0,
        format!("{lp_fail} of {} instances differ", args.instances),
    );
    ok &= report(
        "throughput_monotonicity",
        mono_fail == 0,
        format!("{mono_fail} violating paths"),
    );
    Ok(ok)
}

fn run(cli: Cli) -> Result<ExitCode> {
    if let Some(t) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .context("configuring worker threads")?;
    }
    match &cli.command {
        Command::Throughput(a) => cmd_throughput(a)?,
        Command::Pricing(a) => cmd_pricing(a)?,
        Command::Capacity(a) => cmd_capacity(a)?,
        Command::Fig1(a) => cmd_fig(Scenario::Fig1, a)?,
        Command::Fig2(a) => cmd_fig(Scenario::Fig2, a)?,
        Command::Fig3(a) => cmd_fig(Scenario::Fig3, a)?,
        Command::Fig4(a) => cmd_fig(Scenario::Fig4, a)?,
        Command::Verify(a) => {
            if !cmd_verify(a)? {
                return Ok(ExitCode::FAILURE);
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            let solver = e
                .downcast_ref::<baleq::Error>()
                .is_some_and(|e| e.is_solver_failure());
            ExitCode::from(if solver { 3 } else { 2 })
        }
    }
}
