//! Imbalance processes and the standard half-normal distribution.
//!
//! Sample paths are generated one at a time from a generator keyed by
//! `(seed, path index)`, so a batch is identical however it is split across
//! threads. IID normal paths are scaled standard normals: the same seed gives
//! the same underlying draws for every variance and every horizon prefix.

use std::f64::consts::{FRAC_2_PI, SQRT_2};
use std::path::Path;

use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::numeric::bisect;
use crate::rng::{stream_rng, Stream};

/// Distribution of the imbalance sequence `B^0, ..., B^T`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ImbalanceModel {
    /// Fixed values, one per period.
    Deterministic(Vec<f64>),
    /// Independent zero-mean normals; `variance` is the variance, so draws
    /// have standard deviation `sqrt(variance)`.
    IidNormal { variance: f64 },
    /// Independent standard half-normals `|Z|`.
    HalfNormal,
    /// Pre-recorded paths, one per line of an input file.
    ExternalSequence(Vec<Vec<f64>>),
}

impl ImbalanceModel {
    pub fn iid_normal(variance: f64) -> Result<Self> {
        if !(variance.is_finite() && variance > 0.0) {
            return Err(invalid(format!("variance must be > 0, got {variance}")));
        }
        Ok(Self::IidNormal { variance })
    }

    /// Single-period deterministic imbalance.
    pub fn constant(value: f64) -> Self {
        Self::Deterministic(vec![value])
    }

    /// Parse external paths: one sequence per line, comma-separated
    /// numbers. Blank lines are skipped.
    pub fn parse_external(text: &str) -> Result<Self> {
        let mut paths = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let path = line
                .split(',')
                .map(|tok| {
                    let tok = tok.trim();
                    tok.parse::<f64>()
                        .ok()
                        .filter(|v| v.is_finite())
                        .ok_or_else(|| invalid(format!("line {}: bad number {tok:?}", lineno + 1)))
                })
                .collect::<Result<Vec<_>>>()?;
            paths.push(path);
        }
        if paths.is_empty() {
            return Err(invalid("external sequence file contains no paths"));
        }
        Ok(Self::ExternalSequence(paths))
    }

    pub fn load_external(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_owned(),
            source,
        })?;
        Self::parse_external(&text)
    }

    /// Whether every draw is the same (no sampling noise).
    pub fn is_deterministic(&self) -> bool {
        matches!(self, Self::Deterministic(_))
    }

    /// Path `index` of length `horizon + 1` under `seed`.
    pub fn sample_path(&self, horizon: usize, seed: u64, index: u64) -> Result<Vec<f64>> {
        let len = horizon + 1;
        match self {
            Self::Deterministic(values) => {
                if values.len() != len {
                    return Err(invalid(format!(
                        "deterministic imbalance has {} values, horizon needs {len}",
                        values.len()
                    )));
                }
                Ok(values.clone())
            }
            Self::IidNormal { variance } => {
                let sd = variance.sqrt();
                let mut rng = stream_rng(seed, Stream::Imbalance, index);
                Ok((0..len)
                    .map(|_| {
                        let z: f64 = StandardNormal.sample(&mut rng);
                        sd * z
                    })
                    .collect())
            }
            Self::HalfNormal => {
                let mut rng = stream_rng(seed, Stream::Imbalance, index);
                Ok((0..len)
                    .map(|_| {
                        let z: f64 = StandardNormal.sample(&mut rng);
                        z.abs()
                    })
                    .collect())
            }
            Self::ExternalSequence(paths) => {
                let path = paths.get(index as usize).ok_or_else(|| {
                    invalid(format!(
                        "external sequence has {} paths, path {index} requested",
                        paths.len()
                    ))
                })?;
                if path.len() != len {
                    return Err(invalid(format!(
                        "external path {index} has {} values, horizon needs {len}",
                        path.len()
                    )));
                }
                Ok(path.clone())
            }
        }
    }
}

/// A reproducible batch of imbalance paths.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleBatch {
    pub paths: Vec<Vec<f64>>,
    pub seed: u64,
    pub count: usize,
}

/// Draw `count` paths of length `horizon + 1`.
pub fn sample_sequences(
    model: &ImbalanceModel,
    horizon: usize,
    count: usize,
    seed: u64,
) -> Result<SampleBatch> {
    if count == 0 {
        return Err(invalid("sample count must be >= 1"));
    }
    let paths = (0..count as u64)
        .into_par_iter()
        .map(|k| model.sample_path(horizon, seed, k))
        .collect::<Result<Vec<_>>>()?;
    Ok(SampleBatch { paths, seed, count })
}

/// Density of the standard half-normal, `sqrt(2/pi) exp(-b^2/2)` on `b >= 0`.
pub fn half_normal_pdf(b: f64) -> f64 {
    if b < 0.0 {
        0.0
    } else {
        FRAC_2_PI.sqrt() * (-0.5 * b * b).exp()
    }
}

/// Cumulative distribution of the standard half-normal (0 for `b <= 0`).
pub fn half_normal_cdf(b: f64) -> f64 {
    if b <= 0.0 {
        0.0
    } else {
        libm::erf(b / SQRT_2)
    }
}

/// Survival function `1 - F(b)`, accurate in the upper tail.
pub fn half_normal_sf(b: f64) -> f64 {
    if b <= 0.0 {
        1.0
    } else {
        libm::erfc(b / SQRT_2)
    }
}

/// Inverse of [`half_normal_cdf`] on `[0, 1)`, by bisection to 1e-12.
/// `u = 0` maps to 0.
pub fn half_normal_quantile(u: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&u) {
        return Err(Error::Domain(format!(
            "half-normal quantile defined on [0, 1), got {u}"
        )));
    }
    if u == 0.0 {
        return Ok(0.0);
    }
    let mut hi = 1.0;
    while half_normal_cdf(hi) < u {
        hi *= 2.0;
        if hi > 64.0 {
            // cdf has saturated at 1 in double precision
            break;
        }
    }
    Ok(bisect(|b| half_normal_cdf(b) - u, 0.0, hi, 1e-13))
}
