//! Analytic and Monte Carlo sweeps over SNR and padding scheme.

use std::cmp::Ordering;
use std::fmt;

use cachemod::analysis::{analytic_report, db_to_linear, SnrProfile};
use cachemod::caching::{build_delivery_plan, expected_subfile_lengths};
use cachemod::mc_sim::{run_campaign, CampaignConfig};
use cachemod::{Scheme, SerReport};

use crate::config::ScenarioConfig;
use crate::CliError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum RowUser {
    /// One-based user number.
    User(usize),
    /// Mean over users.
    Average,
}

impl fmt::Display for RowUser {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RowUser::User(k) => write!(f, "{k}"),
            RowUser::Average => f.write_str("avg"),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ResultRow {
    pub snr_db: f64,
    pub scheme: Scheme,
    pub user: RowUser,
    /// `L_k`; the sum over users on average rows.
    pub useful_symbols: usize,
    pub analytic: f64,
    pub mc: Option<f64>,
    pub mc_stderr: Option<f64>,
    pub load: f64,
}

impl ResultRow {
    fn sort_key_cmp(&self, other: &Self) -> Ordering {
        self.snr_db
            .total_cmp(&other.snr_db)
            .then(self.scheme.cmp(&other.scheme))
            .then(self.user.cmp(&other.user))
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ResultSet {
    pub rows: Vec<ResultRow>,
}

impl ResultSet {
    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn find(&self, snr_db: f64, scheme: Scheme, user: RowUser) -> Option<&ResultRow> {
        self.rows
            .iter()
            .find(|r| r.snr_db == snr_db && r.scheme == scheme && r.user == user)
    }
}

fn rows_for(
    snr_db: f64,
    scheme: Scheme,
    analytic: &SerReport,
    empirical: Option<&SerReport>,
) -> Vec<ResultRow> {
    let mut rows: Vec<ResultRow> = analytic
        .per_user
        .iter()
        .map(|u| ResultRow {
            snr_db,
            scheme,
            user: RowUser::User(u.user + 1),
            useful_symbols: u.useful_symbols,
            analytic: u.ser,
            mc: empirical.map(|e| e.per_user[u.user].ser),
            mc_stderr: empirical.and_then(|e| e.per_user[u.user].std_error),
            load: analytic.load,
        })
        .collect();
    rows.push(ResultRow {
        snr_db,
        scheme,
        user: RowUser::Average,
        useful_symbols: analytic.per_user.iter().map(|u| u.useful_symbols).sum(),
        analytic: analytic.average,
        mc: empirical.map(|e| e.average),
        mc_stderr: empirical.and_then(|e| e.average_std_error),
        load: analytic.load,
    });
    rows
}

/// Runs every scheme at every sweep point. Users with a fixed SNR keep it
/// across the sweep. Monte Carlo is skipped when `trials_per_cell` is 0.
pub fn run_scenario(cfg: &ScenarioConfig) -> Result<ResultSet, CliError> {
    let c = cfg.constellation()?;
    let map = expected_subfile_lengths(&cfg.library, &cfg.caches);
    let campaign = (cfg.trials_per_cell > 0)
        .then(|| CampaignConfig::new(cfg.trials_per_cell, cfg.seed))
        .transpose()?;
    let plans = cfg
        .schemes
        .iter()
        .map(|&s| build_delivery_plan(&map, &cfg.demands, s, cfg.bits_per_symbol))
        .collect::<Result<Vec<_>, _>>()?;

    let mut rows = Vec::new();
    for snr_db in cfg.sweep_points() {
        let gammas = cfg
            .fixed_snr_db
            .iter()
            .map(|fixed| db_to_linear(fixed.unwrap_or(snr_db)))
            .collect();
        let snr = SnrProfile::new(gammas)?;
        for plan in &plans {
            let analytic = analytic_report(plan, &c, &snr)?;
            let empirical = campaign
                .as_ref()
                .map(|cc| run_campaign(plan, &c, &snr, cc))
                .transpose()?;
            rows.extend(rows_for(snr_db, plan.scheme(), &analytic, empirical.as_ref()));
        }
    }
    rows.sort_by(ResultRow::sort_key_cmp);
    Ok(ResultSet { rows })
}
