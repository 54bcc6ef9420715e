//! Monte Carlo symbol error rates over the complex AWGN broadcast channel.
//!
//! Useful symbols are grouped into cells that share a mask shape and an SNR;
//! each cell is simulated once with uniformly random labels on its own RNG
//! substream, so results do not depend on evaluation order or thread count.

use std::collections::{BTreeMap, BTreeSet};

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::analysis::{ReportKind, SerReport, SnrProfile};
use crate::caching::{
    decode_block, encode_block, DeliveryPlan, DemandVector, PlacementRealization, UserSet,
};
use crate::error::{Error, Result};
use crate::modem::{demodulate, modulate, Constellation, Family, KnownMask, MaskShape};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CampaignConfig {
    pub trials_per_cell: u64,
    pub master_seed: u64,
}

impl CampaignConfig {
    pub fn new(trials_per_cell: u64, master_seed: u64) -> Result<Self> {
        if trials_per_cell == 0 {
            return Err(Error::InvalidArgument("at least one trial per cell is required".into()));
        }
        Ok(CampaignConfig {
            trials_per_cell,
            master_seed,
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CellEstimate {
    pub ser: f64,
    /// `sqrt(ser (1 - ser) / trials)`
    pub std_error: f64,
    pub trials: u64,
    pub errors: u64,
}

impl CellEstimate {
    fn from_counts(errors: u64, trials: u64) -> Self {
        let ser = errors as f64 / trials as f64;
        CellEstimate {
            ser,
            std_error: (ser * (1.0 - ser) / trials as f64).sqrt(),
            trials,
            errors,
        }
    }
}

/// `y = sqrt(gamma) x + noise`.
pub fn awgn_channel(x: Complex64, gamma: f64, noise: Complex64) -> Complex64 {
    x * gamma.sqrt() + noise
}

/// Circular complex Gaussian sample with unit total power.
pub fn draw_noise<R: Rng + ?Sized>(rng: &mut R) -> Complex64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

fn mix(mut z: u64) -> u64 {
    // splitmix64 finalizer
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Stable identifier of a simulation cell.
pub fn cell_id(family: Family, m: u32, shape: MaskShape, gamma: f64) -> u64 {
    let family = match family {
        Family::Psk => 1,
        Family::Qam => 2,
    };
    [family, u64::from(m), u64::from(shape.prefix), u64::from(shape.suffix), gamma.to_bits()]
        .into_iter()
        .fold(0x6a09_e667_f3bc_c908, |acc, v| mix(acc ^ v))
}

/// Substream `cell_id` of the generator seeded by `master_seed`.
fn substream(master_seed: u64, cell_id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(cell_id);
    rng
}

/// Symbol error rate of one mask shape at one SNR.
///
/// Each trial draws a uniform label, reveals its known positions to the
/// receiver, sends it through [`awgn_channel`] and demodulates with
/// [`demodulate`].
pub fn estimate_cell_ser(
    c: &Constellation,
    shape: MaskShape,
    gamma: f64,
    cfg: &CampaignConfig,
    cell_id: u64,
) -> Result<CellEstimate> {
    let m = c.bits_per_symbol();
    shape.validate(m)?;
    if !(gamma > 0.0) {
        return Err(Error::InvalidArgument(format!("SNR must be positive, got {gamma}")));
    }
    if cfg.trials_per_cell == 0 {
        return Err(Error::InvalidArgument("at least one trial per cell is required".into()));
    }
    let mut rng = substream(cfg.master_seed, cell_id);
    let sqrt_snr = gamma.sqrt();
    let mut errors = 0u64;
    for _ in 0..cfg.trials_per_cell {
        let label = rng.gen_range(0..1u32 << m);
        let mask = KnownMask::from_label(shape, m, label);
        let y = awgn_channel(c.points()[label as usize], gamma, draw_noise(&mut rng));
        if demodulate(c, y, sqrt_snr, &mask)? != label {
            errors += 1;
        }
    }
    Ok(CellEstimate::from_counts(errors, cfg.trials_per_cell))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
struct CellKey {
    shape: MaskShape,
    gamma_bits: u64,
}

/// Empirical per-user symbol error rates of a plan.
pub fn run_campaign(
    plan: &DeliveryPlan,
    c: &Constellation,
    snr: &SnrProfile,
    cfg: &CampaignConfig,
) -> Result<SerReport> {
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
    let k = plan.num_users();
    let mut usage: Vec<BTreeMap<CellKey, usize>> = vec![BTreeMap::new(); k];
    for block in plan.blocks() {
        for piece in block.pieces.iter().filter(|p| p.len > 0) {
            let key = CellKey {
                shape: block.known_shape(piece.user)?,
                gamma_bits: snr.gamma(piece.user).to_bits(),
            };
            *usage[piece.user].entry(key).or_default() += 1;
        }
    }
    let keys: Vec<CellKey> = usage
        .iter()
        .flat_map(|u| u.keys().copied())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let estimates: Vec<CellEstimate> = keys
        .par_iter()
        .map(|key| {
            let gamma = f64::from_bits(key.gamma_bits);
            let id = cell_id(c.family(), c.bits_per_symbol(), key.shape, gamma);
            estimate_cell_ser(c, key.shape, gamma, cfg, id)
        })
        .collect::<Result<_>>()?;
    let cells: BTreeMap<CellKey, CellEstimate> = keys.into_iter().zip(estimates).collect();

    let counts = usage.iter().map(|u| {
        let useful: usize = u.values().sum();
        let mut errored = 0.0;
        let mut variance = 0.0;
        for (key, &n) in u {
            let est = &cells[key];
            errored += n as f64 * est.ser;
            variance += (n as f64 * est.std_error).powi(2);
        }
        let std_error = if useful == 0 {
            0.0
        } else {
            variance.sqrt() / useful as f64
        };
        (useful, errored, Some(std_error))
    });
    let mut report =
        SerReport::from_counts(ReportKind::Empirical, counts.collect::<Vec<_>>(), plan.load());

    // Users that read the same cell share its estimate, so the average is a
    // linear combination over cells, not over independent users.
    let mut weights: BTreeMap<CellKey, f64> = BTreeMap::new();
    for u in &usage {
        let useful: usize = u.values().sum();
        if useful == 0 {
            continue;
        }
        for (key, &n) in u {
            *weights.entry(*key).or_default() += n as f64 / (useful * k) as f64;
        }
    }
    let variance: f64 = weights
        .iter()
        .map(|(key, w)| (w * cells[key].std_error).powi(2))
        .sum();
    report.average_std_error = Some(variance.sqrt());
    Ok(report)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Decodability {
    Pass,
    /// First bit of the demanded file that was not recovered.
    Fail { file: usize, position: usize },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct UserOutcome {
    pub user: usize,
    pub outcome: Decodability,
}

impl UserOutcome {
    pub fn passed(&self) -> bool {
        self.outcome == Decodability::Pass
    }
}

/// Subfile contents and bit positions of a placement, indexed
/// `[file][subset bitmask]`.
struct Subfiles {
    bits: Vec<Vec<Vec<u8>>>,
    positions: Vec<Vec<Vec<usize>>>,
}

impl Subfiles {
    fn new(placement: &PlacementRealization) -> Self {
        let sets = 1usize << placement.num_users();
        let mut bits = vec![vec![Vec::new(); sets]; placement.num_files()];
        let mut positions = vec![vec![Vec::new(); sets]; placement.num_files()];
        for file in 0..placement.num_files() {
            for (pos, &b) in placement.file(file).iter().enumerate() {
                let s = placement.cached_by(file, pos).bits() as usize;
                bits[file][s].push(b);
                positions[file][s].push(pos);
            }
        }
        Subfiles { bits, positions }
    }

    fn get(&self, file: usize, subset: UserSet) -> &[u8] {
        &self.bits[file][subset.bits() as usize]
    }
}

/// Sends every block of `plan` through a noiseless channel and checks that
/// each user rebuilds its demanded file from its cache and the received
/// labels.
pub fn end_to_end_noiseless(
    placement: &PlacementRealization,
    plan: &DeliveryPlan,
    demands: &DemandVector,
    c: &Constellation,
) -> Result<Vec<UserOutcome>> {
    if plan.demands() != demands.as_slice() {
        return Err(Error::DimensionMismatch("demands differ from the plan's demands".into()));
    }
    if plan.num_users() != placement.num_users() {
        return Err(Error::PlacementMismatch(format!(
            "plan has {} users, placement {}",
            plan.num_users(),
            placement.num_users()
        )));
    }
    if plan.label_len() != c.bits_per_symbol() {
        return Err(Error::DimensionMismatch(format!(
            "plan uses {}-bit labels but the constellation carries {} bits",
            plan.label_len(),
            c.bits_per_symbol()
        )));
    }
    if let Some(&d) = demands.as_slice().iter().find(|&&d| d >= placement.num_files()) {
        return Err(Error::PlacementMismatch(format!(
            "file {} requested but the placement holds {} files",
            d + 1,
            placement.num_files()
        )));
    }
    let subfiles = Subfiles::new(placement);
    for sched in plan.subsets() {
        for &(u, len) in &sched.subfile_len {
            let actual = subfiles.get(demands.file_of(u), sched.subset.without(u)).len() as u64;
            if actual != len {
                return Err(Error::PlacementMismatch(format!(
                    "subfile for user {} in {} has {actual} bits, plan expects {len}",
                    u + 1,
                    sched.subset
                )));
            }
        }
    }

    let m = plan.label_len();
    let mut outcomes = Vec::with_capacity(plan.num_users());
    for user in 0..plan.num_users() {
        let file = demands.file_of(user);
        let mut rebuilt: Vec<Option<u8>> = (0..placement.file(file).len())
            .map(|pos| placement.is_cached(user, file, pos).then(|| placement.file(file)[pos]))
            .collect();
        for sched in plan.subsets().iter().filter(|s| s.subset.contains(user)) {
            let own_subset = sched.subset.without(user);
            let mut decoded = vec![0u8; subfiles.get(file, own_subset).len()];
            for block in plan.subset_blocks(sched.subset) {
                let piece_bits = |p: &crate::caching::Piece| -> Vec<u8> {
                    let src = subfiles.get(demands.file_of(p.user), sched.subset.without(p.user));
                    src[p.offset..p.offset + p.len].to_vec()
                };
                let all: BTreeMap<usize, Vec<u8>> =
                    block.pieces.iter().map(|p| (p.user, piece_bits(p))).collect();
                let label = encode_block(block, &all)?;
                if !block.is_useful_to(user) {
                    continue;
                }
                let own = *block.piece(user).expect("useful block has a piece");
                let mut cached = all.clone();
                cached.remove(&user);
                let mut blanked = cached.clone();
                blanked.insert(user, vec![0; own.len]);
                let known_label = encode_block(block, &blanked)?;
                let mask = KnownMask::from_label(block.known_shape(user)?, m, known_label);
                let y = modulate(c, label)?;
                let heard = demodulate(c, y, 1.0, &mask)?;
                let piece = decode_block(heard, block, user, &cached)?;
                decoded[own.offset..own.offset + own.len].copy_from_slice(&piece);
            }
            for (&pos, &b) in subfiles.positions[file][own_subset.bits() as usize]
                .iter()
                .zip(&decoded)
            {
                rebuilt[pos] = Some(b);
            }
        }
        let mismatch = rebuilt
            .iter()
            .zip(placement.file(file))
            .position(|(got, &want)| *got != Some(want));
        outcomes.push(UserOutcome {
            user,
            outcome: match mismatch {
                None => Decodability::Pass,
                Some(position) => Decodability::Fail { file, position },
            },
        });
    }
    Ok(outcomes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::q_function;
    use crate::caching::{
        build_delivery_plan, realized_subfile_map, sample_placement, CacheProfile, Library, Scheme,
    };
    use crate::modem::{build_psk, build_qam, min_distance};

    #[test]
    fn channel_without_noise_scales() {
        let x = Complex64::new(0.6, -0.8);
        assert_eq!(awgn_channel(x, 4.0, Complex64::new(0.0, 0.0)), x * 2.0);
        assert_eq!(awgn_channel(x, 1.0, Complex64::new(0.0, 0.0)), x);
    }

    #[test]
    fn noise_has_unit_power() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 1_000_000;
        let (mut power, mut re2) = (0.0, 0.0);
        for _ in 0..n {
            let z = draw_noise(&mut rng);
            power += z.norm_sqr();
            re2 += z.re * z.re;
        }
        assert!((power / n as f64 - 1.0).abs() < 0.01);
        assert!((re2 / n as f64 - 0.5).abs() < 0.01);
    }

    #[test]
    fn antipodal_cell_matches_exact_rate() {
        let c = build_psk(3).unwrap();
        let shape = MaskShape::new(2, 0);
        let d = min_distance(&c, shape).unwrap();
        let cfg = CampaignConfig::new(200_000, 11).unwrap();
        for gamma in [1.0, 4.0] {
            let est = estimate_cell_ser(&c, shape, gamma, &cfg, cell_id(c.family(), 3, shape, gamma)).unwrap();
            let exact = q_function((gamma / 2.0).sqrt() * d);
            assert!((est.ser - exact).abs() <= 3.0 * est.std_error, "{est:?} vs {exact}");
        }
    }

    #[test]
    fn cells_are_deterministic() {
        let c = build_qam(4).unwrap();
        let cfg = CampaignConfig::new(5_000, 9).unwrap();
        let a = estimate_cell_ser(&c, MaskShape::NONE, 2.0, &cfg, 77).unwrap();
        let b = estimate_cell_ser(&c, MaskShape::NONE, 2.0, &cfg, 77).unwrap();
        assert_eq!(a, b);
        let other = estimate_cell_ser(&c, MaskShape::NONE, 2.0, &cfg, 78).unwrap();
        assert_ne!(a.errors, other.errors);
    }

    #[test]
    fn high_snr_is_error_free() {
        let c = build_psk(3).unwrap();
        let cfg = CampaignConfig::new(100_000, 1).unwrap();
        let est = estimate_cell_ser(&c, MaskShape::new(2, 0), 1e4, &cfg, 5).unwrap();
        assert_eq!(est.errors, 0);
        assert!(CampaignConfig::new(0, 1).is_err());
    }

    #[test]
    fn single_user_without_cache_receives_everything() {
        let lib = Library::new(vec![1.0], 50).unwrap();
        let caches = CacheProfile::new(vec![0.0]).unwrap();
        let placement = sample_placement(&lib, &caches, 2).unwrap();
        let map = realized_subfile_map(&placement);
        let demands = DemandVector::new(vec![0], 1).unwrap();
        let c = build_psk(3).unwrap();
        for scheme in [Scheme::Proposed, Scheme::ZeroPadding] {
            let plan = build_delivery_plan(&map, &demands, scheme, 3).unwrap();
            assert_eq!(plan.subsets().len(), 1);
            let out = end_to_end_noiseless(&placement, &plan, &demands, &c).unwrap();
            assert!(out[0].passed());
        }
    }

    #[test]
    fn mismatched_placement_is_rejected() {
        let lib = Library::uniform(2, 200).unwrap();
        let caches = CacheProfile::new(vec![0.3, 0.6]).unwrap();
        let a = sample_placement(&lib, &caches, 1).unwrap();
        let b = sample_placement(&lib, &caches, 2).unwrap();
        let demands = DemandVector::new(vec![0, 1], 2).unwrap();
        let plan = build_delivery_plan(&realized_subfile_map(&a), &demands, Scheme::Proposed, 3).unwrap();
        let c = build_psk(3).unwrap();
        assert!(matches!(
            end_to_end_noiseless(&b, &plan, &demands, &c),
            Err(Error::PlacementMismatch(_))
        ));
    }

    #[test]
    fn shared_cells_do_not_shrink_the_average_error() {
        use crate::analysis::SnrProfile;
        use crate::caching::expected_subfile_lengths;
        let lib = Library::uniform(3, 27_000).unwrap();
        let caches = CacheProfile::new(vec![0.2, 1.0 / 3.0, 0.5]).unwrap();
        let map = expected_subfile_lengths(&lib, &caches);
        let demands = DemandVector::new(vec![0, 1, 2], 3).unwrap();
        let plan = build_delivery_plan(&map, &demands, Scheme::ZeroPadding, 3).unwrap();
        let c = build_psk(3).unwrap();
        let snr = SnrProfile::uniform(3, 4.0).unwrap();
        let cfg = CampaignConfig::new(20_000, 4).unwrap();
        let report = run_campaign(&plan, &c, &snr, &cfg).unwrap();
        // Every zero-padding block with one piece per user reads the same
        // fully unknown cell, so all users carry the same estimate.
        let se = report.per_user[0].std_error.unwrap();
        assert!(report.per_user.iter().all(|u| u.std_error == Some(se)));
        assert!((report.average_std_error.unwrap() - se).abs() <= 1e-15);
    }
}
