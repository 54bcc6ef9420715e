//! Closed-form symbol error rates.
//!
//! Every useful block is charged the nearest-neighbour bound of the
//! subconstellation its receiver is left with after removing the known label
//! bits; per-user rates average these over the user's useful symbols.

use std::collections::{BTreeMap, HashMap};
use std::f64::consts::SQRT_2;

use crate::caching::{build_delivery_plan, DeliveryPlan, DemandVector, Scheme, SubfileMap, UserSet};
use crate::error::{Error, Result};
use crate::modem::{min_distance, Constellation, Family, MaskShape};

/// Linear receiver SNR of every user.
#[derive(Clone, Debug, PartialEq)]
pub struct SnrProfile {
    gammas: Vec<f64>,
}

impl SnrProfile {
    pub fn new(gammas: Vec<f64>) -> Result<Self> {
        if let Some((k, g)) = gammas.iter().enumerate().find(|(_, g)| !(**g > 0.0 && g.is_finite())) {
            return Err(Error::InvalidArgument(format!(
                "SNR of user {} must be positive, got {g}",
                k + 1
            )));
        }
        Ok(SnrProfile { gammas })
    }

    pub fn uniform(num_users: usize, gamma: f64) -> Result<Self> {
        SnrProfile::new(vec![gamma; num_users])
    }

    pub fn from_db(db: &[f64]) -> Result<Self> {
        SnrProfile::new(db.iter().map(|&x| db_to_linear(x)).collect())
    }

    pub fn num_users(&self) -> usize {
        self.gammas.len()
    }

    pub fn gamma(&self, user: usize) -> f64 {
        self.gammas[user]
    }

    pub fn gammas(&self) -> &[f64] {
        &self.gammas
    }
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

/// Gaussian tail probability `Q(x) = erfc(x / sqrt 2) / 2`.
pub fn q_function(x: f64) -> f64 {
    0.5 * libm::erfc(x / SQRT_2)
}

/// Nearest-neighbour bound for a unit-energy constellation under unit-power
/// noise, clamped to 1: `2Q(sqrt(gamma/2) dmin)` for PSK and
/// `4Q(sqrt(gamma/2) dmin)` for QAM.
pub fn symbol_error_bound(family: Family, gamma: f64, dmin: f64) -> Result<f64> {
    if !(gamma > 0.0) || !(dmin > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "SNR and minimum distance must be positive (gamma = {gamma}, dmin = {dmin})"
        )));
    }
    let factor = match family {
        Family::Psk => 2.0,
        Family::Qam => 4.0,
    };
    Ok((factor * q_function((gamma / 2.0).sqrt() * dmin)).min(1.0))
}

/// Memoized [`min_distance`] for one constellation.
#[derive(Debug)]
pub struct DistanceCache<'a> {
    constellation: &'a Constellation,
    known: HashMap<MaskShape, f64>,
}

impl<'a> DistanceCache<'a> {
    pub fn new(constellation: &'a Constellation) -> Self {
        DistanceCache {
            constellation,
            known: HashMap::new(),
        }
    }

    pub fn get(&mut self, shape: MaskShape) -> Result<f64> {
        if let Some(&d) = self.known.get(&shape) {
            return Ok(d);
        }
        let d = min_distance(self.constellation, shape)?;
        self.known.insert(shape, d);
        Ok(d)
    }
}

/// Error probability of every useful `(subset, block, user)` cell.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct BlockErrorTable {
    entries: BTreeMap<(UserSet, usize, usize), f64>,
}

impl BlockErrorTable {
    pub fn get(&self, subset: UserSet, block: usize, user: usize) -> Option<f64> {
        self.entries.get(&(subset, block, user)).copied()
    }

    pub fn insert(&mut self, subset: UserSet, block: usize, user: usize, p: f64) {
        self.entries.insert((subset, block, user), p);
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = ((UserSet, usize, usize), f64)> + '_ {
        self.entries.iter().map(|(k, v)| (*k, *v))
    }
}

fn check_dimensions(plan: &DeliveryPlan, c: &Constellation, snr: &SnrProfile) -> Result<()> {
    if plan.label_len() != c.bits_per_symbol() {
        return Err(Error::DimensionMismatch(format!(
            "plan uses {}-bit labels but the constellation carries {} bits",
            plan.label_len(),
            c.bits_per_symbol()
        )));
    }
    if snr.num_users() != plan.num_users() {
        return Err(Error::DimensionMismatch(format!(
            "{} SNR values for {} users",
            snr.num_users(),
            plan.num_users()
        )));
    }
    Ok(())
}

pub fn block_error_table(
    plan: &DeliveryPlan,
    c: &Constellation,
    snr: &SnrProfile,
) -> Result<BlockErrorTable> {
    check_dimensions(plan, c, snr)?;
    let mut distances = DistanceCache::new(c);
    let mut table = BlockErrorTable::default();
    for block in plan.blocks() {
        for piece in block.pieces.iter().filter(|p| p.len > 0) {
            let dmin = distances.get(block.known_shape(piece.user)?)?;
            let p = symbol_error_bound(c.family(), snr.gamma(piece.user), dmin)?;
            table.insert(block.subset, block.block_index, piece.user, p);
        }
    }
    Ok(table)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ReportKind {
    Analytic,
    Empirical,
}

/// Symbol error statistics of one user.
#[derive(Clone, Debug, PartialEq)]
pub struct UserSer {
    pub user: usize,
    /// `L_k`
    pub useful_symbols: usize,
    /// `S_k`, expected or observed.
    pub errored_symbols: f64,
    /// `T_k = S_k / L_k`; zero when the user has no useful symbols.
    pub ser: f64,
    /// Standard error of `ser`, for empirical reports.
    pub std_error: Option<f64>,
    pub no_useful_symbols: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SerReport {
    pub kind: ReportKind,
    pub per_user: Vec<UserSer>,
    /// Mean of the per-user rates.
    pub average: f64,
    pub average_std_error: Option<f64>,
    pub load: f64,
}

impl SerReport {
    /// Builds a report from per-user `(L_k, S_k, std_error)` triples.
    pub fn from_counts(
        kind: ReportKind,
        counts: impl IntoIterator<Item = (usize, f64, Option<f64>)>,
        load: f64,
    ) -> Self {
        let per_user: Vec<UserSer> = counts
            .into_iter()
            .enumerate()
            .map(|(user, (useful, errored, std_error))| {
                let empty = useful == 0;
                UserSer {
                    user,
                    useful_symbols: useful,
                    errored_symbols: errored,
                    ser: if empty { 0.0 } else { errored / useful as f64 },
                    std_error: std_error.map(|s| if empty { 0.0 } else { s }),
                    no_useful_symbols: empty,
                }
            })
            .collect();
        let k = per_user.len().max(1) as f64;
        let average = per_user.iter().map(|u| u.ser).sum::<f64>() / k;
        let average_std_error = per_user
            .iter()
            .map(|u| u.std_error.map(|s| s * s))
            .sum::<Option<f64>>()
            .map(|v| v.sqrt() / k);
        SerReport {
            kind,
            per_user,
            average,
            average_std_error,
            load,
        }
    }

    pub fn ser(&self, user: usize) -> f64 {
        self.per_user[user].ser
    }
}

/// Per-user useful-symbol counts and expected error counts from a block table.
pub fn user_metrics(plan: &DeliveryPlan, table: &BlockErrorTable) -> Result<SerReport> {
    let k = plan.num_users();
    let mut errored = vec![0.0; k];
    for block in plan.blocks() {
        for piece in block.pieces.iter().filter(|p| p.len > 0) {
            let p = table
                .get(block.subset, block.block_index, piece.user)
                .ok_or_else(|| {
                    Error::InvalidArgument(format!(
                        "no error probability for block {} of {} at user {}",
                        block.block_index,
                        block.subset,
                        piece.user + 1
                    ))
                })?;
            errored[piece.user] += p;
        }
    }
    Ok(SerReport::from_counts(
        ReportKind::Analytic,
        (0..k).map(|u| (plan.useful_symbols(u), errored[u], None)),
        plan.load(),
    ))
}

/// Analytic report of a plan in one call.
pub fn analytic_report(plan: &DeliveryPlan, c: &Constellation, snr: &SnrProfile) -> Result<SerReport> {
    user_metrics(plan, &block_error_table(plan, c, snr)?)
}

#[derive(Clone, Debug, PartialEq)]
pub struct UserComparison {
    pub user: usize,
    pub proposed: f64,
    pub zero_padding: f64,
    /// `zero_padding - proposed`
    pub delta: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SchemeComparison {
    pub per_user: Vec<UserComparison>,
    pub load_proposed: f64,
    pub load_zero_padding: f64,
}

/// Analytic per-user rates of both padding schemes on the same instance.
pub fn compare_schemes(
    map: &SubfileMap,
    demands: &DemandVector,
    c: &Constellation,
    snr: &SnrProfile,
) -> Result<SchemeComparison> {
    let m = c.bits_per_symbol();
    let proposed = build_delivery_plan(map, demands, Scheme::Proposed, m)?;
    let padded = build_delivery_plan(map, demands, Scheme::ZeroPadding, m)?;
    let rp = analytic_report(&proposed, c, snr)?;
    let rz = analytic_report(&padded, c, snr)?;
    let per_user = rp
        .per_user
        .iter()
        .zip(&rz.per_user)
        .map(|(p, z)| UserComparison {
            user: p.user,
            proposed: p.ser,
            zero_padding: z.ser,
            delta: z.ser - p.ser,
        })
        .collect();
    Ok(SchemeComparison {
        per_user,
        load_proposed: rp.load,
        load_zero_padding: rz.load,
    })
}
