use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Which experiment to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scenario {
    /// Expected prices against market horizon.
    Fig1,
    /// Expected prices against leakage retention.
    Fig2,
    /// Capacity equilibria against the first firm's opportunity cost.
    Fig3,
    /// Total profit under energy and capacity pricing.
    Fig4,
}

impl Scenario {
    pub fn id(self) -> &'static str {
        match self {
            Scenario::Fig1 => "fig1",
            Scenario::Fig2 => "fig2",
            Scenario::Fig3 => "fig3",
            Scenario::Fig4 => "fig4",
        }
    }
}

impl std::str::FromStr for Scenario {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fig1" => Ok(Scenario::Fig1),
            "fig2" => Ok(Scenario::Fig2),
            "fig3" => Ok(Scenario::Fig3),
            "fig4" => Ok(Scenario::Fig4),
            _ => Err(invalid(format!("unknown scenario {s:?}"))),
        }
    }
}

/// Default sample count for sweeps.
pub const SWEEP_SAMPLES: usize = 10_000;

/// Full parameter set of one experiment. Grids unused by the scenario are
/// ignored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub scenario: Scenario,
    /// Market horizons `T` (periods `0..=T`).
    pub horizons: Vec<usize>,
    /// Variances of the per-period normal imbalance.
    pub sigmas: Vec<f64>,
    /// Initial state of charge as a fraction of capacity, same for both firms.
    pub s0_fracs: Vec<f64>,
    /// Leakage retention grid, same for both firms.
    pub alphas: Vec<f64>,
    /// Opportunity cost grid for firm 1.
    pub gamma1: Vec<f64>,
    pub gamma2: f64,
    pub capacities: [f64; 2],
    pub reservation: f64,
    pub samples: usize,
    pub seed: u64,
    pub out_dir: PathBuf,
}

/// Grid `lo, lo + step, ...` up to `hi`, rounded to 12 decimals so that
/// `0.15` comes out as `0.15`.
pub fn step_grid(lo: f64, hi: f64, step: f64) -> Result<Vec<f64>> {
    if !(step > 0.0 && hi >= lo && lo.is_finite() && hi.is_finite()) {
        return Err(invalid(format!("bad grid {lo}:{hi}:{step}")));
    }
    let n = ((hi - lo) / step + 1e-9).floor() as usize;
    Ok((0..=n)
        .map(|k| ((lo + k as f64 * step) * 1e12).round() / 1e12)
        .collect())
}

impl ScenarioConfig {
    /// Defaults for `scenario`: capacities (1.5, 1), `R = 1`, seed 1,
    /// 10^4 samples, output to the current directory.
    pub fn defaults(scenario: Scenario) -> Self {
        let mut cfg = Self {
            scenario,
            horizons: (0..=100).collect(),
            sigmas: vec![0.25, 4.0],
            s0_fracs: vec![0.0, 0.25, 0.5],
            alphas: vec![1.0],
            gamma1: step_grid(0.05, 1.0, 0.05).expect("static grid"),
            gamma2: 0.5,
            capacities: [1.5, 1.0],
            reservation: 1.0,
            samples: SWEEP_SAMPLES,
            seed: 1,
            out_dir: PathBuf::from("."),
        };
        if scenario == Scenario::Fig2 {
            cfg.horizons = vec![100];
            cfg.sigmas = vec![0.1, 1.0, 10.0];
            cfg.s0_fracs = vec![0.5];
            cfg.alphas = step_grid(0.0, 1.0, 0.05).expect("static grid");
        }
        cfg
    }

    pub fn validate(&self) -> Result<()> {
        let nonempty = |name: &str, len: usize| {
            if len == 0 {
                Err(invalid(format!("{name} grid is empty")))
            } else {
                Ok(())
            }
        };
        match self.scenario {
            Scenario::Fig1 | Scenario::Fig2 => {
                nonempty("horizon", self.horizons.len())?;
                nonempty("sigma", self.sigmas.len())?;
                nonempty("s0 fraction", self.s0_fracs.len())?;
                nonempty("alpha", self.alphas.len())?;
                if self.samples == 0 {
                    return Err(invalid("sample count must be >= 1"));
                }
                if let Some(s) = self.sigmas.iter().find(|s| !(s.is_finite() && **s > 0.0)) {
                    return Err(invalid(format!("variance must be > 0, got {s}")));
                }
                if let Some(f) = self.s0_fracs.iter().find(|f| !(0.0..=1.0).contains(*f)) {
                    return Err(invalid(format!("s0 fraction must lie in [0, 1], got {f}")));
                }
                if let Some(a) = self.alphas.iter().find(|a| !(0.0..=1.0).contains(*a)) {
                    return Err(invalid(format!(
                        "leakage retention must lie in [0, 1], got {a}"
                    )));
                }
                if let Some(c) = self
                    .capacities
                    .iter()
                    .find(|c| !(c.is_finite() && **c >= 0.0))
                {
                    return Err(invalid(format!("capacity must be >= 0, got {c}")));
                }
            }
            Scenario::Fig3 | Scenario::Fig4 => {
                nonempty("gamma1", self.gamma1.len())?;
                let r = self.reservation;
                if let Some(g) = self
                    .gamma1
                    .iter()
                    .chain([&self.gamma2])
                    .find(|g| !(**g > 0.0 && **g <= r))
                {
                    return Err(invalid(format!(
                        "opportunity cost must satisfy 0 < gamma <= R = {r}, got {g}"
                    )));
                }
            }
        }
        if !(self.reservation.is_finite() && self.reservation > 0.0) {
            return Err(invalid(format!(
                "reservation utility must be > 0, got {}",
                self.reservation
            )));
        }
        Ok(())
    }

    /// Parse a TOML document. Missing fields take the defaults of the
    /// document's `scenario`.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let value: toml::Table = text
            .parse()
            .map_err(|e: toml::de::Error| invalid(format!("config: {e}")))?;
        let json = serde_json::to_value(value).map_err(|e| invalid(format!("config: {e}")))?;
        Self::from_value(json)
    }

    /// Parse a JSON document. Missing fields take the defaults of the
    /// document's `scenario`.
    pub fn from_json_str(text: &str) -> Result<Self> {
        let json: serde_json::Value =
            serde_json::from_str(text).map_err(|e| invalid(format!("config: {e}")))?;
        Self::from_value(json)
    }

    fn from_value(value: serde_json::Value) -> Result<Self> {
        let serde_json::Value::Object(fields) = value else {
            return Err(invalid("config must be a table"));
        };
        let scenario: Scenario = fields
            .get("scenario")
            .cloned()
            .map(serde_json::from_value)
            .transpose()
            .map_err(|e| invalid(format!("config: {e}")))?
            .ok_or_else(|| invalid("config needs a `scenario` field"))?;
        let serde_json::Value::Object(mut merged) =
            serde_json::to_value(Self::defaults(scenario)).expect("config serializes")
        else {
            unreachable!("config serializes to an object")
        };
        for (k, v) in fields {
            if !merged.contains_key(&k) {
                return Err(invalid(format!("config: unknown field {k:?}")));
            }
            merged.insert(k, v);
        }
        let cfg: Self = serde_json::from_value(serde_json::Value::Object(merged))
            .map_err(|e| invalid(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Load a `.toml` or `.json` config file.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_owned(),
            source,
        })?;
        match path.extension().and_then(|e| e.to_str()) {
            Some("json") => Self::from_json_str(&text),
            _ => Self::from_toml_str(&text),
        }
    }
}
