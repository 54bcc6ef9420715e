//! JSON scenario files.
//!
//! ```json
//! {
//!   "users": [{"mu": 0.2}, {"mu": 0.5, "snr_db": 12.0}],
//!   "files": [0.5, 0.5],
//!   "total_bits": 27000,
//!   "modulation": {"family": "psk", "m": 3},
//!   "schemes": ["proposed", "zero_padding"],
//!   "demands": "worst_case",
//!   "sweep": {"start_db": 0, "stop_db": 20, "step_db": 2},
//!   "trials_per_cell": 100000,
//!   "seed": 1,
//!   "output": "results.csv"
//! }
//! ```
//!
//! Users without `snr_db` follow the sweep. Explicit demands are one-based
//! file numbers. Unknown fields are rejected.

use std::path::PathBuf;

use cachemod::{CacheProfile, Constellation, DemandVector, Family, Library, Scheme};
use serde::Deserialize;

use crate::CliError;

pub const DEFAULT_TRIALS: u64 = 100_000;
pub const DEFAULT_SWEEP: Sweep = Sweep {
    start_db: 0.0,
    stop_db: 20.0,
    step_db: 2.0,
};

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    users: Vec<RawUser>,
    files: Vec<f64>,
    total_bits: u64,
    modulation: RawModulation,
    schemes: Option<Vec<RawScheme>>,
    demands: Option<RawDemands>,
    sweep: Option<Sweep>,
    trials_per_cell: Option<u64>,
    seed: Option<u64>,
    output: Option<PathBuf>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawUser {
    mu: f64,
    snr_db: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawModulation {
    family: RawFamily,
    m: u32,
}

#[derive(Debug, Deserialize)]
#[serde(rename_all = "lowercase")]
enum RawFamily {
    Psk,
    Qam,
}

#[derive(Debug, Deserialize, PartialEq, Eq, PartialOrd, Ord, Clone, Copy)]
#[serde(rename_all = "snake_case")]
enum RawScheme {
    Proposed,
    ZeroPadding,
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum RawDemands {
    Named(DemandRule),
    Explicit(Vec<usize>),
}

#[derive(Debug, Deserialize)]
#[serde(rename_all = "snake_case")]
enum DemandRule {
    WorstCase,
}

/// Inclusive dB grid.
#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sweep {
    pub start_db: f64,
    pub stop_db: f64,
    pub step_db: f64,
}

impl Sweep {
    pub fn points(&self) -> Vec<f64> {
        let span = (self.stop_db - self.start_db) / self.step_db;
        let n = (span + 1e-9).floor() as usize + 1;
        (0..n)
            .map(|i| {
                let x = self.start_db + i as f64 * self.step_db;
                (x * 1e9).round() / 1e9
            })
            .collect()
    }
}

/// A validated scenario.
#[derive(Debug, Clone)]
pub struct ScenarioConfig {
    pub library: Library,
    pub caches: CacheProfile,
    pub demands: DemandVector,
    pub family: Family,
    pub bits_per_symbol: u32,
    pub schemes: Vec<Scheme>,
    /// Fixed SNR per user in dB; `None` follows the sweep.
    pub fixed_snr_db: Vec<Option<f64>>,
    pub sweep: Sweep,
    pub trials_per_cell: u64,
    pub seed: u64,
    pub output: Option<PathBuf>,
}

impl ScenarioConfig {
    pub fn num_users(&self) -> usize {
        self.caches.num_users()
    }

    pub fn constellation(&self) -> Result<Constellation, CliError> {
        Constellation::new(self.family, self.bits_per_symbol)
            .map_err(|e| CliError::config("modulation", e))
    }

    pub fn sweep_points(&self) -> Vec<f64> {
        self.sweep.points()
    }
}

/// Parses and validates a scenario document.
pub fn parse_config(text: &str) -> Result<ScenarioConfig, CliError> {
    let raw: RawConfig =
        serde_json::from_str(text).map_err(|e| CliError::config("config", e))?;

    if raw.users.is_empty() {
        return Err(CliError::config("users", "at least one user is required"));
    }
    let caches = CacheProfile::new(raw.users.iter().map(|u| u.mu).collect())
        .map_err(|e| CliError::config("users", e))?;
    let fixed_snr_db: Vec<Option<f64>> = raw.users.iter().map(|u| u.snr_db).collect();
    if let Some(k) = fixed_snr_db.iter().position(|s| s.is_some_and(|x| !x.is_finite())) {
        return Err(CliError::config(
            format!("users[{k}].snr_db"),
            "must be a finite number",
        ));
    }

    if raw.files.is_empty() {
        return Err(CliError::config("files", "at least one file is required"));
    }
    let sum: f64 = raw.files.iter().sum();
    if (sum - 1.0).abs() > 1e-12 {
        return Err(CliError::config("files", format!("file fractions sum to {sum}")));
    }
    let library =
        Library::new(raw.files, raw.total_bits).map_err(|e| CliError::config("files", e))?;

    let family = match raw.modulation.family {
        RawFamily::Psk => Family::Psk,
        RawFamily::Qam => Family::Qam,
    };
    Constellation::new(family, raw.modulation.m).map_err(|e| CliError::config("modulation", e))?;

    let demands = match raw.demands {
        None | Some(RawDemands::Named(DemandRule::WorstCase)) => {
            DemandVector::largest_first(&library, caches.num_users())
        }
        Some(RawDemands::Explicit(list)) => {
            if list.len() != caches.num_users() {
                return Err(CliError::config(
                    "demands",
                    format!("{} demands for {} users", list.len(), caches.num_users()),
                ));
            }
            if list.contains(&0) {
                return Err(CliError::config("demands", "file numbers start at 1"));
            }
            DemandVector::new(list.iter().map(|d| d - 1).collect(), library.num_files())
        }
    }
    .map_err(|e| CliError::config("demands", e))?;

    let mut schemes: Vec<RawScheme> = raw
        .schemes
        .unwrap_or_else(|| vec![RawScheme::Proposed, RawScheme::ZeroPadding]);
    schemes.sort();
    schemes.dedup();
    if schemes.is_empty() {
        return Err(CliError::config("schemes", "at least one scheme is required"));
    }
    let schemes = schemes
        .into_iter()
        .map(|s| match s {
            RawScheme::Proposed => Scheme::Proposed,
            RawScheme::ZeroPadding => Scheme::ZeroPadding,
        })
        .collect();

    let sweep = raw.sweep.unwrap_or(DEFAULT_SWEEP);
    if !(sweep.step_db > 0.0) || !(sweep.stop_db >= sweep.start_db) || !sweep.start_db.is_finite() {
        return Err(CliError::config(
            "sweep",
            "need finite start_db <= stop_db and step_db > 0",
        ));
    }

    let seed = raw.seed.unwrap_or_else(|| {
        log::info!("no seed given; using 0");
        0
    });

    Ok(ScenarioConfig {
        library,
        caches,
        demands,
        family,
        bits_per_symbol: raw.modulation.m,
        schemes,
        fixed_snr_db,
        sweep,
        trials_per_cell: raw.trials_per_cell.unwrap_or(DEFAULT_TRIALS),
        seed,
        output: raw.output,
    })
}
