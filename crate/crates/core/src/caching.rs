//! Decentralized cache placement and clique-cover delivery.
//!
//! Users, files and blocks are indexed from zero. Bit strings are slices of
//! `u8` holding `0` or `1`. A multicast label of `m` bits is stored in the low
//! `m` bits of a `u32`; label position 0 is the most significant bit.

use std::collections::BTreeMap;
use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::modem::MaskShape;

/// Largest number of users a [`UserSet`] can hold.
pub const MAX_USERS: usize = 16;

/// Largest library that [`sample_placement`] will enumerate bit by bit.
pub const PLACEMENT_BIT_LIMIT: u64 = 10_000_000;

/// Largest label width a delivery plan accepts.
pub const MAX_LABEL_BITS: u32 = 16;

const FRACTION_TOLERANCE: f64 = 1e-12;

/// A subset of users, stored as a bitmask (bit `k` set means user `k`).
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct UserSet(u32);

impl UserSet {
    pub const EMPTY: UserSet = UserSet(0);

    pub fn from_bits(bits: u32) -> Self {
        UserSet(bits)
    }

    pub fn bits(self) -> u32 {
        self.0
    }

    /// The full set `{0, .., num_users - 1}`.
    pub fn full(num_users: usize) -> Self {
        debug_assert!(num_users <= MAX_USERS);
        UserSet(((1u64 << num_users) - 1) as u32)
    }

    pub fn contains(self, user: usize) -> bool {
        user < 32 && self.0 & (1 << user) != 0
    }

    pub fn with(self, user: usize) -> Self {
        UserSet(self.0 | (1 << user))
    }

    pub fn without(self, user: usize) -> Self {
        UserSet(self.0 & !(1 << user))
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    /// Members in increasing order.
    pub fn users(self) -> impl Iterator<Item = usize> {
        (0..32).filter(move |&k| self.0 & (1 << k) != 0)
    }

    /// Every subset of `{0, .., num_users - 1}`, including the empty set, in
    /// increasing bitmask order.
    pub fn all(num_users: usize) -> impl Iterator<Item = UserSet> {
        (0..(1u32 << num_users)).map(UserSet)
    }
}

impl FromIterator<usize> for UserSet {
    fn from_iter<I: IntoIterator<Item = usize>>(iter: I) -> Self {
        iter.into_iter().fold(UserSet::EMPTY, UserSet::with)
    }
}

/// Displays one-based user numbers, e.g. `{1,3}`.
impl fmt::Display for UserSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{")?;
        for (i, k) in self.users().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{}", k + 1)?;
        }
        write!(f, "}}")
    }
}

/// Splits `total` into integer parts proportional to `weights` with the
/// largest-remainder method. Ties go to the lower index.
fn largest_remainder(weights: &[f64], total: u64) -> Vec<u64> {
    let sum: f64 = weights.iter().sum();
    if sum <= 0.0 {
        return vec![0; weights.len()];
    }
    let exact: Vec<f64> = weights.iter().map(|w| w / sum * total as f64).collect();
    let mut parts: Vec<u64> = exact.iter().map(|x| x.floor() as u64).collect();
    let assigned: u64 = parts.iter().sum();
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = exact[a] - exact[a].floor();
        let rb = exact[b] - exact[b].floor();
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    let missing = total.saturating_sub(assigned) as usize;
    for &i in order.iter().take(missing) {
        parts[i] += 1;
    }
    parts
}

/// File-size fractions and total library size.
#[derive(Clone, Debug, PartialEq)]
pub struct Library {
    file_fractions: Vec<f64>,
    total_bits: u64,
    file_bits: Vec<u64>,
}

impl Library {
    pub fn new(file_fractions: Vec<f64>, total_bits: u64) -> Result<Self> {
        if file_fractions.is_empty() {
            return Err(Error::InvalidLibrary("no files".into()));
        }
        if total_bits == 0 {
            return Err(Error::InvalidLibrary("total size must be at least 1 bit".into()));
        }
        if let Some((i, f)) = file_fractions
            .iter()
            .enumerate()
            .find(|(_, f)| !(f.is_finite() && **f > 0.0))
        {
            return Err(Error::InvalidLibrary(format!(
                "file {} has non-positive fraction {f}",
                i + 1
            )));
        }
        let sum: f64 = file_fractions.iter().sum();
        if (sum - 1.0).abs() > FRACTION_TOLERANCE {
            return Err(Error::InvalidLibrary(format!(
                "file fractions sum to {sum}"
            )));
        }
        let file_bits = largest_remainder(&file_fractions, total_bits);
        Ok(Library {
            file_fractions,
            total_bits,
            file_bits,
        })
    }

    /// Files of equal size.
    pub fn uniform(num_files: usize, total_bits: u64) -> Result<Self> {
        if num_files == 0 {
            return Err(Error::InvalidLibrary("no files".into()));
        }
        Library::new(vec![1.0 / num_files as f64; num_files], total_bits)
    }

    pub fn num_files(&self) -> usize {
        self.file_fractions.len()
    }

    pub fn fraction(&self, file: usize) -> f64 {
        self.file_fractions[file]
    }

    pub fn fractions(&self) -> &[f64] {
        &self.file_fractions
    }

    pub fn total_bits(&self) -> u64 {
        self.total_bits
    }

    /// Integer size of a file. `F_i * B` rounded so that all files add up to
    /// exactly `B`.
    pub fn file_bits(&self, file: usize) -> u64 {
        self.file_bits[file]
    }
}

/// Normalized cache sizes, one per user, sorted non-decreasing.
#[derive(Clone, Debug, PartialEq)]
pub struct CacheProfile {
    mus: Vec<f64>,
}

impl CacheProfile {
    pub fn new(mus: Vec<f64>) -> Result<Self> {
        if mus.is_empty() {
            return Err(Error::InvalidCacheProfile("no users".into()));
        }
        if mus.len() > MAX_USERS {
            return Err(Error::InvalidCacheProfile(format!(
                "{} users exceed the supported maximum of {MAX_USERS}",
                mus.len()
            )));
        }
        if let Some((k, mu)) = mus
            .iter()
            .enumerate()
            .find(|(_, mu)| !(0.0..=1.0).contains(*mu))
        {
            return Err(Error::InvalidCacheProfile(format!(
                "cache fraction of user {} is {mu}, outside [0, 1]",
                k + 1
            )));
        }
        if let Some(k) = mus.windows(2).position(|w| w[0] > w[1]) {
            return Err(Error::InvalidCacheProfile(format!(
                "cache fractions must be non-decreasing (user {} > user {})",
                k + 1,
                k + 2
            )));
        }
        Ok(CacheProfile { mus })
    }

    pub fn num_users(&self) -> usize {
        self.mus.len()
    }

    pub fn mu(&self, user: usize) -> f64 {
        self.mus[user]
    }

    pub fn mus(&self) -> &[f64] {
        &self.mus
    }
}

/// The file requested by each user. Demands are pairwise distinct.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DemandVector {
    demands: Vec<usize>,
}

impl DemandVector {
    pub fn new(demands: Vec<usize>, num_files: usize) -> Result<Self> {
        if let Some((k, d)) = demands.iter().enumerate().find(|(_, d)| **d >= num_files) {
            return Err(Error::InvalidDemands(format!(
                "user {} requests file {} but the library has {num_files} files",
                k + 1,
                d + 1
            )));
        }
        for (a, da) in demands.iter().enumerate() {
            if let Some(b) = demands[a + 1..].iter().position(|db| db == da) {
                return Err(Error::InvalidDemands(format!(
                    "users {} and {} both request file {}",
                    a + 1,
                    a + b + 2,
                    da + 1
                )));
            }
        }
        Ok(DemandVector { demands })
    }

    /// Distinct files in decreasing size handed to users in increasing cache
    /// order, so the smallest cache asks for the largest file.
    pub fn largest_first(library: &Library, num_users: usize) -> Result<Self> {
        if num_users > library.num_files() {
            return Err(Error::InvalidDemands(format!(
                "{num_users} users need distinct files but the library has {}",
                library.num_files()
            )));
        }
        let mut files: Vec<usize> = (0..library.num_files()).collect();
        files.sort_by(|&a, &b| {
            library
                .fraction(b)
                .total_cmp(&library.fraction(a))
                .then(a.cmp(&b))
        });
        files.truncate(num_users);
        DemandVector::new(files, library.num_files())
    }

    pub fn len(&self) -> usize {
        self.demands.len()
    }

    pub fn is_empty(&self) -> bool {
        self.demands.is_empty()
    }

    pub fn file_of(&self, user: usize) -> usize {
        self.demands[user]
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.demands
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MapKind {
    /// Law-of-large-numbers lengths, real valued.
    Expected,
    /// Bit counts of an actual placement.
    Realized,
}

/// Length in bits of every subfile `W_{i,S}`.
#[derive(Clone, Debug, PartialEq)]
pub struct SubfileMap {
    kind: MapKind,
    num_users: usize,
    file_bits: Vec<u64>,
    /// `lengths[file][subset bitmask]`
    lengths: Vec<Vec<f64>>,
}

impl SubfileMap {
    pub fn kind(&self) -> MapKind {
        self.kind
    }

    pub fn num_users(&self) -> usize {
        self.num_users
    }

    pub fn num_files(&self) -> usize {
        self.lengths.len()
    }

    pub fn file_bits(&self, file: usize) -> u64 {
        self.file_bits[file]
    }

    pub fn length(&self, file: usize, subset: UserSet) -> f64 {
        self.lengths[file][subset.bits() as usize]
    }

    /// Integer lengths. Expected maps are quantized per file by largest
    /// remainder so that each file still sums to its integer size.
    pub fn integer_lengths(&self) -> Vec<Vec<u64>> {
        match self.kind {
            MapKind::Realized => self
                .lengths
                .iter()
                .map(|row| row.iter().map(|&x| x as u64).collect())
                .collect(),
            MapKind::Expected => self
                .lengths
                .iter()
                .zip(&self.file_bits)
                .map(|(row, &bits)| largest_remainder(row, bits))
                .collect(),
        }
    }
}

/// Expected subfile lengths `F_i B prod_{j in S} mu_j prod_{k not in S} (1 - mu_k)`.
pub fn expected_subfile_lengths(library: &Library, caches: &CacheProfile) -> SubfileMap {
    let k = caches.num_users();
    let lengths = (0..library.num_files())
        .map(|i| {
            let size = library.fraction(i) * library.total_bits() as f64;
            UserSet::all(k)
                .map(|s| {
                    (0..k)
                        .map(|j| {
                            if s.contains(j) {
                                caches.mu(j)
                            } else {
                                1.0 - caches.mu(j)
                            }
                        })
                        .product::<f64>()
                        * size
                })
                .collect()
        })
        .collect();
    SubfileMap {
        kind: MapKind::Expected,
        num_users: k,
        file_bits: (0..library.num_files()).map(|i| library.file_bits(i)).collect(),
        lengths,
    }
}

/// Library content together with the exact set of users caching each bit.
#[derive(Clone, Debug, PartialEq)]
pub struct PlacementRealization {
    num_users: usize,
    files: Vec<Vec<u8>>,
    cached_by: Vec<Vec<UserSet>>,
}

impl PlacementRealization {
    /// Builds a realization from explicit content and per-bit caching sets.
    pub fn from_parts(
        num_users: usize,
        files: Vec<Vec<u8>>,
        cached_by: Vec<Vec<UserSet>>,
    ) -> Result<Self> {
        if num_users == 0 || num_users > MAX_USERS {
            return Err(Error::InvalidArgument(format!(
                "{num_users} users outside 1..={MAX_USERS}"
            )));
        }
        if files.len() != cached_by.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} files but {} caching maps",
                files.len(),
                cached_by.len()
            )));
        }
        let full = UserSet::full(num_users);
        for (i, (bits, sets)) in files.iter().zip(&cached_by).enumerate() {
            if bits.len() != sets.len() {
                return Err(Error::DimensionMismatch(format!(
                    "file {} has {} bits but {} caching entries",
                    i + 1,
                    bits.len(),
                    sets.len()
                )));
            }
            if bits.iter().any(|&b| b > 1) {
                return Err(Error::InvalidArgument(format!(
                    "file {} contains a non-binary value",
                    i + 1
                )));
            }
            if sets.iter().any(|s| s.bits() & !full.bits() != 0) {
                return Err(Error::InvalidArgument(format!(
                    "file {} is cached by an unknown user",
                    i + 1
                )));
            }
        }
        Ok(PlacementRealization {
            num_users,
            files,
            cached_by,
        })
    }

    pub fn num_users(&self) -> usize {
        self.num_users
    }

    pub fn num_files(&self) -> usize {
        self.files.len()
    }

    pub fn file(&self, file: usize) -> &[u8] {
        &self.files[file]
    }

    /// The exact set of users caching bit `pos` of `file`.
    pub fn cached_by(&self, file: usize, pos: usize) -> UserSet {
        self.cached_by[file][pos]
    }

    pub fn is_cached(&self, user: usize, file: usize, pos: usize) -> bool {
        self.cached_by[file][pos].contains(user)
    }

    /// Number of bits of `file` in the cache of `user`.
    pub fn cached_count(&self, user: usize, file: usize) -> usize {
        self.cached_by[file].iter().filter(|s| s.contains(user)).count()
    }

    /// Cache content `Z_k` as `(file, position)` pairs.
    pub fn cache_content(&self, user: usize) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.cached_by.iter().enumerate().flat_map(move |(i, sets)| {
            sets.iter()
                .enumerate()
                .filter(move |(_, s)| s.contains(user))
                .map(move |(pos, _)| (i, pos))
        })
    }

    /// Positions of the bits of `file` cached by exactly `subset`, in order.
    pub fn subfile_positions(&self, file: usize, subset: UserSet) -> Vec<usize> {
        self.cached_by[file]
            .iter()
            .enumerate()
            .filter(|(_, s)| **s == subset)
            .map(|(pos, _)| pos)
            .collect()
    }

    /// Content of the subfile `W_{file,subset}`.
    pub fn subfile(&self, file: usize, subset: UserSet) -> Vec<u8> {
        self.subfile_positions(file, subset)
            .into_iter()
            .map(|pos| self.files[file][pos])
            .collect()
    }
}

/// Draws pseudo-random library content and caches every bit of file `i` at
/// user `k` independently with probability `mu_k`.
pub fn sample_placement(
    library: &Library,
    caches: &CacheProfile,
    seed: u64,
) -> Result<PlacementRealization> {
    if library.total_bits() > PLACEMENT_BIT_LIMIT {
        return Err(Error::TooManyBits {
            bits: library.total_bits(),
            limit: PLACEMENT_BIT_LIMIT,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let k = caches.num_users();
    let mut files = Vec::with_capacity(library.num_files());
    let mut cached_by = Vec::with_capacity(library.num_files());
    for i in 0..library.num_files() {
        let n = library.file_bits(i) as usize;
        let mut bits = Vec::with_capacity(n);
        let mut sets = Vec::with_capacity(n);
        for _ in 0..n {
            bits.push(rng.gen::<bool>() as u8);
            let set = (0..k)
                .filter(|&j| rng.gen_bool(caches.mu(j)))
                .collect::<UserSet>();
            sets.push(set);
        }
        files.push(bits);
        cached_by.push(sets);
    }
    Ok(PlacementRealization {
        num_users: k,
        files,
        cached_by,
    })
}

/// Counts the bits of each file per caching subset.
pub fn realized_subfile_map(placement: &PlacementRealization) -> SubfileMap {
    let k = placement.num_users;
    let lengths = placement
        .cached_by
        .iter()
        .map(|sets| {
            let mut row = vec![0.0; 1 << k];
            for s in sets {
                row[s.bits() as usize] += 1.0;
            }
            row
        })
        .collect();
    SubfileMap {
        kind: MapKind::Realized,
        num_users: k,
        file_bits: placement.files.iter().map(|f| f.len() as u64).collect(),
        lengths,
    }
}

/// How subfiles are cut into `m`-bit labels.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Scheme {
    /// Symbol-level padding: every subfile is spread evenly over all blocks
    /// of its message and each piece sits at the end of the label.
    Proposed,
    /// Subfile-level padding: subfiles are zero-extended at the end and cut
    /// into consecutive `m`-bit blocks.
    ZeroPadding,
}

impl Scheme {
    pub fn name(self) -> &'static str {
        match self {
            Scheme::Proposed => "proposed",
            Scheme::ZeroPadding => "zero_padding",
        }
    }

    fn alignment(self) -> PieceAlignment {
        match self {
            Scheme::Proposed => PieceAlignment::Trailing,
            Scheme::ZeroPadding => PieceAlignment::Leading,
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Where a piece shorter than the label sits inside it.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PieceAlignment {
    /// Piece occupies the last positions; leading positions are padding.
    Trailing,
    /// Piece occupies the first positions; trailing positions are padding.
    Leading,
}

/// The slice of one user's subfile carried by one block.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Piece {
    pub user: usize,
    /// Start of the piece within `W_{d_k, S \ {k}}`.
    pub offset: usize,
    pub len: usize,
}

/// One `m`-bit multicast block `P_S^i`.
#[derive(Clone, Debug, PartialEq)]
pub struct MulticastBlockSpec {
    pub subset: UserSet,
    pub block_index: usize,
    pub label_len: u32,
    pub alignment: PieceAlignment,
    /// One entry per member of `subset`, increasing user order.
    pub pieces: Vec<Piece>,
}

impl MulticastBlockSpec {
    pub fn piece(&self, user: usize) -> Option<&Piece> {
        self.pieces.iter().find(|p| p.user == user)
    }

    pub fn piece_len(&self, user: usize) -> Option<usize> {
        self.piece(user).map(|p| p.len)
    }

    /// Longest piece in the block.
    pub fn occupancy(&self) -> usize {
        self.pieces.iter().map(|p| p.len).max().unwrap_or(0)
    }

    pub fn is_useful_to(&self, user: usize) -> bool {
        self.piece_len(user).is_some_and(|len| len > 0)
    }

    /// Label positions known to `user` from its cache: everything outside
    /// its own piece.
    pub fn known_shape(&self, user: usize) -> Result<MaskShape> {
        let len = self.piece_len(user).ok_or_else(|| Error::UserNotInSubset {
            user,
            subset: self.subset.to_string(),
        })?;
        if len == 0 {
            return Err(Error::UselessBlock {
                subset: self.subset.to_string(),
                block: self.block_index,
                user,
            });
        }
        let free = self.label_len - len as u32;
        Ok(match self.alignment {
            PieceAlignment::Trailing => MaskShape::new(free, 0),
            PieceAlignment::Leading => MaskShape::new(0, free),
        })
    }

    /// Label value of a piece placed according to the block alignment.
    fn place(&self, bits: &[u8]) -> u32 {
        let value = bits.iter().fold(0u32, |acc, &b| (acc << 1) | (b & 1) as u32);
        match self.alignment {
            PieceAlignment::Trailing => value,
            PieceAlignment::Leading => value << (self.label_len - bits.len() as u32),
        }
    }

    fn extract(&self, label: u32, len: usize) -> Vec<u8> {
        let shift = match self.alignment {
            PieceAlignment::Trailing => 0,
            PieceAlignment::Leading => self.label_len - len as u32,
        };
        (0..len)
            .rev()
            .map(|j| ((label >> (shift + j as u32)) & 1) as u8)
            .collect()
    }
}

/// Per-subset summary of a delivery plan.
#[derive(Clone, Debug, PartialEq)]
pub struct SubsetSchedule {
    pub subset: UserSet,
    /// `l_S`: longest requested subfile in the message, in bits.
    pub ell: u64,
    /// `n_S = ceil(l_S / m)` symbols.
    pub num_blocks: usize,
    /// `(user, |W_{d_k, S \ {k}}|)` for every member.
    pub subfile_len: Vec<(usize, u64)>,
    /// `(user, n_{S,k})`: blocks that carry a non-empty piece for the user.
    pub useful_blocks: Vec<(usize, usize)>,
    first_block: usize,
}

impl SubsetSchedule {
    pub fn useful_for(&self, user: usize) -> usize {
        self.useful_blocks
            .iter()
            .find(|(k, _)| *k == user)
            .map_or(0, |(_, n)| *n)
    }

    pub fn subfile_len_of(&self, user: usize) -> Option<u64> {
        self.subfile_len.iter().find(|(k, _)| *k == user).map(|(_, l)| *l)
    }
}

/// Ordered multicast schedule for one padding scheme.
#[derive(Clone, Debug, PartialEq)]
pub struct DeliveryPlan {
    scheme: Scheme,
    label_len: u32,
    num_users: usize,
    total_bits: u64,
    demands: Vec<usize>,
    blocks: Vec<MulticastBlockSpec>,
    subsets: Vec<SubsetSchedule>,
    load: f64,
}

impl DeliveryPlan {
    pub fn scheme(&self) -> Scheme {
        self.scheme
    }

    /// Bits per symbol `m`.
    pub fn label_len(&self) -> u32 {
        self.label_len
    }

    pub fn num_users(&self) -> usize {
        self.num_users
    }

    pub fn demands(&self) -> &[usize] {
        &self.demands
    }

    pub fn blocks(&self) -> &[MulticastBlockSpec] {
        &self.blocks
    }

    pub fn subsets(&self) -> &[SubsetSchedule] {
        &self.subsets
    }

    pub fn subset(&self, subset: UserSet) -> Option<&SubsetSchedule> {
        self.subsets.iter().find(|s| s.subset == subset)
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    /// Blocks of one subset, in transmission order.
    pub fn subset_blocks(&self, subset: UserSet) -> &[MulticastBlockSpec] {
        match self.subset(subset) {
            Some(s) => &self.blocks[s.first_block..s.first_block + s.num_blocks],
            None => &[],
        }
    }

    pub fn block(&self, subset: UserSet, block_index: usize) -> Result<&MulticastBlockSpec> {
        self.subset_blocks(subset)
            .get(block_index)
            .ok_or_else(|| Error::NoSuchBlock {
                subset: subset.to_string(),
                block: block_index,
            })
    }

    /// Load `R`: transmitted subfile bits `sum_S l_S` over the library size.
    pub fn load(&self) -> f64 {
        self.load
    }

    /// Broadcast length `L` in symbols.
    pub fn total_symbols(&self) -> usize {
        self.blocks.len()
    }

    /// `L_k = sum_{S containing k} n_{S,k}`.
    pub fn useful_symbols(&self, user: usize) -> usize {
        self.subsets.iter().map(|s| s.useful_for(user)).sum()
    }
}

/// Compiles demands into multicast blocks of `m` bits.
///
/// Expected maps are quantized with [`SubfileMap::integer_lengths`] first.
/// Subsets whose longest requested subfile is empty carry no message.
pub fn build_delivery_plan(
    map: &SubfileMap,
    demands: &DemandVector,
    scheme: Scheme,
    m: u32,
) -> Result<DeliveryPlan> {
    if m == 0 || m > MAX_LABEL_BITS {
        return Err(Error::InvalidArgument(format!(
            "bits per symbol {m} outside 1..={MAX_LABEL_BITS}"
        )));
    }
    let k = map.num_users();
    if demands.len() != k {
        return Err(Error::DimensionMismatch(format!(
            "{} demands for {k} users",
            demands.len()
        )));
    }
    if let Some(&d) = demands.as_slice().iter().find(|&&d| d >= map.num_files()) {
        return Err(Error::InvalidDemands(format!(
            "file {} requested but the map covers {} files",
            d + 1,
            map.num_files()
        )));
    }
    let lengths = map.integer_lengths();
    let total_bits: u64 = (0..map.num_files()).map(|i| map.file_bits(i)).sum();
    let alignment = scheme.alignment();
    let mw = m as usize;

    let mut blocks = Vec::new();
    let mut subsets = Vec::new();
    let mut transmitted: u64 = 0;
    for subset in UserSet::all(k).filter(|s| !s.is_empty()) {
        let subfile_len: Vec<(usize, u64)> = subset
            .users()
            .map(|u| (u, lengths[demands.file_of(u)][subset.without(u).bits() as usize]))
            .collect();
        let ell = subfile_len.iter().map(|(_, l)| *l).max().unwrap_or(0);
        if ell == 0 {
            continue;
        }
        let n = ell.div_ceil(m as u64) as usize;
        let first_block = blocks.len();
        for b in 0..n {
            let pieces = subfile_len
                .iter()
                .map(|&(user, w)| {
                    let w = w as usize;
                    let (offset, len) = match scheme {
                        Scheme::Proposed => {
                            let (q, r) = (w / n, w % n);
                            (b * q + b.min(r), q + usize::from(b < r))
                        }
                        Scheme::ZeroPadding => {
                            let start = (b * mw).min(w);
                            (start, (w - start).min(mw))
                        }
                    };
                    Piece { user, offset, len }
                })
                .collect();
            blocks.push(MulticastBlockSpec {
                subset,
                block_index: b,
                label_len: m,
                alignment,
                pieces,
            });
        }
        let useful_blocks = subset
            .users()
            .map(|u| {
                let count = blocks[first_block..]
                    .iter()
                    .filter(|blk| blk.is_useful_to(u))
                    .count();
                (u, count)
            })
            .collect();
        transmitted += ell;
        subsets.push(SubsetSchedule {
            subset,
            ell,
            num_blocks: n,
            subfile_len,
            useful_blocks,
            first_block,
        });
    }
    Ok(DeliveryPlan {
        scheme,
        label_len: m,
        num_users: k,
        total_bits,
        demands: demands.as_slice().to_vec(),
        blocks,
        subsets,
        load: transmitted as f64 / total_bits as f64,
    })
}

fn check_piece(block: &MulticastBlockSpec, piece: &Piece, bits: &[u8]) -> Result<()> {
    if bits.len() > block.label_len as usize {
        return Err(Error::PieceTooLong {
            len: bits.len(),
            m: block.label_len,
        });
    }
    if bits.len() != piece.len {
        return Err(Error::PieceLengthMismatch {
            user: piece.user,
            expected: piece.len,
            got: bits.len(),
        });
    }
    Ok(())
}

/// XOR of the placed pieces of every member of the block. Members whose
/// piece is empty may be omitted from `pieces`.
pub fn encode_block(block: &MulticastBlockSpec, pieces: &BTreeMap<usize, Vec<u8>>) -> Result<u32> {
    if let Some(bits) = pieces.values().find(|b| b.len() > block.label_len as usize) {
        return Err(Error::PieceTooLong {
            len: bits.len(),
            m: block.label_len,
        });
    }
    if let Some(&user) = pieces.keys().find(|&&u| block.piece(u).is_none()) {
        return Err(Error::UserNotInSubset {
            user,
            subset: block.subset.to_string(),
        });
    }
    let mut label = 0u32;
    for piece in &block.pieces {
        match pieces.get(&piece.user) {
            Some(bits) => {
                check_piece(block, piece, bits)?;
                label ^= block.place(bits);
            }
            None if piece.len == 0 => {}
            None => return Err(Error::MissingPiece(piece.user)),
        }
    }
    Ok(label)
}

/// Recovers the piece of `user` from a label and the pieces of the other
/// members, which the user holds in its cache.
pub fn decode_block(
    label: u32,
    block: &MulticastBlockSpec,
    user: usize,
    cached_pieces: &BTreeMap<usize, Vec<u8>>,
) -> Result<Vec<u8>> {
    let own = block.piece(user).ok_or_else(|| Error::UserNotInSubset {
        user,
        subset: block.subset.to_string(),
    })?;
    let mut acc = label;
    for piece in block.pieces.iter().filter(|p| p.user != user) {
        match cached_pieces.get(&piece.user) {
            Some(bits) => {
                check_piece(block, piece, bits)?;
                acc ^= block.place(bits);
            }
            None if piece.len == 0 => {}
            None => return Err(Error::MissingPiece(piece.user)),
        }
    }
    Ok(block.extract(acc, own.len))
}

/// Counts of leading and trailing label bits that `user` knows in block
/// `block_index` of `subset`.
///
/// Blocks that carry nothing for the user are rejected rather than reported
/// as fully known.
pub fn known_bit_mask(
    plan: &DeliveryPlan,
    subset: UserSet,
    block_index: usize,
    user: usize,
) -> Result<MaskShape> {
    if !subset.contains(user) {
        return Err(Error::UserNotInSubset {
            user,
            subset: subset.to_string(),
        });
    }
    plan.block(subset, block_index)?.known_shape(user)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set(users: &[usize]) -> UserSet {
        users.iter().copied().collect()
    }

    fn bits(s: &str) -> Vec<u8> {
        s.bytes().map(|c| c - b'0').collect()
    }

    /// Two files A = 101001010 and B = 111001 split as
    /// A = (101, 001, 010, -) and B = (11, 10, 01, -) over (none, {1}, {2}, {1,2}).
    fn two_user_fixture() -> PlacementRealization {
        let split = |parts: &[(usize, UserSet)]| -> Vec<UserSet> {
            parts
                .iter()
                .flat_map(|&(n, s)| std::iter::repeat(s).take(n))
                .collect()
        };
        let a = split(&[(3, UserSet::EMPTY), (3, set(&[0])), (3, set(&[1]))]);
        let b = split(&[(2, UserSet::EMPTY), (2, set(&[0])), (2, set(&[1]))]);
        PlacementRealization::from_parts(2, vec![bits("101001010"), bits("111001")], vec![a, b])
            .unwrap()
    }

    fn map_from(lens: &[(usize, UserSet, u64)], num_users: usize, num_files: usize) -> SubfileMap {
        let mut lengths = vec![vec![0.0; 1 << num_users]; num_files];
        for &(i, s, l) in lens {
            lengths[i][s.bits() as usize] = l as f64;
        }
        SubfileMap {
            kind: MapKind::Realized,
            num_users,
            file_bits: lengths
                .iter()
                .map(|r| r.iter().sum::<f64>() as u64)
                .collect(),
            lengths,
        }
    }

    #[test]
    fn user_set_display_is_one_based() {
        assert_eq!(set(&[0, 2]).to_string(), "{1,3}");
        assert_eq!(UserSet::EMPTY.to_string(), "{}");
        assert_eq!(UserSet::all(3).count(), 8);
    }

    #[test]
    fn library_validation() {
        assert!(Library::new(vec![0.5, 0.6], 10).is_err());
        assert!(Library::new(vec![1.0, 0.0], 10).is_err());
        assert!(Library::new(vec![1.0], 0).is_err());
        let lib = Library::new(vec![0.6, 0.4], 15).unwrap();
        assert_eq!((lib.file_bits(0), lib.file_bits(1)), (9, 6));
        let lib = Library::uniform(3, 10).unwrap();
        assert_eq!((0..3).map(|i| lib.file_bits(i)).sum::<u64>(), 10);
    }

    #[test]
    fn cache_profile_validation() {
        assert!(CacheProfile::new(vec![0.5, 0.2]).is_err());
        assert!(CacheProfile::new(vec![-0.1]).is_err());
        assert!(CacheProfile::new(vec![1.1]).is_err());
        assert!(CacheProfile::new(vec![0.0, 1.0]).is_ok());
    }

    #[test]
    fn duplicate_demands_rejected() {
        assert!(matches!(
            DemandVector::new(vec![0, 0], 2),
            Err(Error::InvalidDemands(_))
        ));
        assert!(DemandVector::new(vec![2], 2).is_err());
    }

    #[test]
    fn largest_first_demands() {
        let lib = Library::new(vec![0.2, 0.5, 0.3], 10).unwrap();
        let d = DemandVector::largest_first(&lib, 3).unwrap();
        assert_eq!(d.as_slice(), &[1, 2, 0]);
        assert!(DemandVector::largest_first(&lib, 4).is_err());
    }

    #[test]
    fn expected_lengths_hand_evaluated() {
        let lib = Library::new(vec![0.6, 0.4], 15).unwrap();
        let caches = CacheProfile::new(vec![1.0 / 3.0, 1.0 / 3.0]).unwrap();
        let map = expected_subfile_lengths(&lib, &caches);
        assert_eq!(map.kind(), MapKind::Expected);
        assert!((map.length(0, set(&[1])) - 2.0).abs() < 1e-12);
        for i in 0..2 {
            let total: f64 = UserSet::all(2).map(|s| map.length(i, s)).sum();
            assert!((total - lib.fraction(i) * 15.0).abs() < 1e-9);
        }
    }

    #[test]
    fn expected_lengths_extremes() {
        let lib = Library::new(vec![0.6, 0.4], 15).unwrap();
        let none = expected_subfile_lengths(&lib, &CacheProfile::new(vec![0.0, 0.0]).unwrap());
        let all = expected_subfile_lengths(&lib, &CacheProfile::new(vec![1.0, 1.0]).unwrap());
        for i in 0..2 {
            let size = lib.fraction(i) * 15.0;
            for s in UserSet::all(2) {
                let want_none = if s.is_empty() { size } else { 0.0 };
                let want_all = if s == UserSet::full(2) { size } else { 0.0 };
                assert!((none.length(i, s) - want_none).abs() < 1e-12);
                assert!((all.length(i, s) - want_all).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn quantized_expected_lengths_conserve_file_size() {
        let lib = Library::new(vec![0.55, 0.45], 1001).unwrap();
        let caches = CacheProfile::new(vec![0.2, 0.35, 0.7]).unwrap();
        let map = expected_subfile_lengths(&lib, &caches);
        let ints = map.integer_lengths();
        for (i, row) in ints.iter().enumerate() {
            assert_eq!(row.iter().sum::<u64>(), lib.file_bits(i));
            for (s, &l) in row.iter().enumerate() {
                assert!((l as f64 - map.length(i, UserSet::from_bits(s as u32))).abs() < 1.0);
            }
        }
    }

    #[test]
    fn two_user_fixture_realized_map() {
        let p = two_user_fixture();
        let map = realized_subfile_map(&p);
        assert_eq!(map.kind(), MapKind::Realized);
        assert_eq!(map.length(0, set(&[1])), 3.0);
        assert_eq!(map.length(1, set(&[0])), 2.0);
        assert_eq!(p.subfile(0, set(&[1])), bits("010"));
        assert_eq!(p.subfile(1, set(&[0])), bits("10"));
        let z1: Vec<_> = p.cache_content(0).collect();
        assert_eq!(z1, vec![(0, 3), (0, 4), (0, 5), (1, 2), (1, 3)]);
    }

    #[test]
    fn placement_is_deterministic_and_honours_full_caches() {
        let lib = Library::new(vec![0.5, 0.5], 2000).unwrap();
        let caches = CacheProfile::new(vec![0.3, 1.0]).unwrap();
        let a = sample_placement(&lib, &caches, 7).unwrap();
        let b = sample_placement(&lib, &caches, 7).unwrap();
        assert_eq!(a, b);
        for i in 0..2 {
            assert_eq!(a.cached_count(1, i), lib.file_bits(i) as usize);
        }
        let empty = sample_placement(&lib, &CacheProfile::new(vec![0.0]).unwrap(), 1).unwrap();
        let map = realized_subfile_map(&empty);
        assert_eq!(map.length(0, UserSet::EMPTY), 1000.0);
    }

    #[test]
    fn placement_guard() {
        let lib = Library::new(vec![1.0], PLACEMENT_BIT_LIMIT + 1).unwrap();
        let caches = CacheProfile::new(vec![0.5]).unwrap();
        assert!(matches!(
            sample_placement(&lib, &caches, 0),
            Err(Error::TooManyBits { .. })
        ));
    }

    #[test]
    fn two_user_fixture_plan_and_encoding() {
        let p = two_user_fixture();
        let map = realized_subfile_map(&p);
        let demands = DemandVector::new(vec![0, 1], 2).unwrap();
        let plan = build_delivery_plan(&map, &demands, Scheme::Proposed, 3).unwrap();
        let pair = set(&[0, 1]);
        let sched = plan.subset(pair).unwrap();
        assert_eq!((sched.ell, sched.num_blocks), (3, 1));
        let block = plan.block(pair, 0).unwrap();
        assert_eq!(block.piece_len(0), Some(3));
        assert_eq!(block.piece_len(1), Some(2));

        let pieces = BTreeMap::from([(0, bits("010")), (1, bits("10"))]);
        let label = encode_block(block, &pieces).unwrap();
        assert_eq!(label, 0b000);
        let cached = BTreeMap::from([(0, bits("010"))]);
        assert_eq!(decode_block(label, block, 1, &cached).unwrap(), bits("10"));

        assert_eq!(known_bit_mask(&plan, pair, 0, 1).unwrap(), MaskShape::new(1, 0));
        assert_eq!(known_bit_mask(&plan, pair, 0, 0).unwrap(), MaskShape::new(0, 0));
        // singletons carry the uncached parts: A_none (3 bits) and B_none (2 bits)
        assert_eq!(plan.subset(set(&[0])).unwrap().ell, 3);
        assert_eq!(plan.subset(set(&[1])).unwrap().ell, 2);
        assert!((plan.load() - 8.0 / 15.0).abs() < 1e-12);
    }

    #[test]
    fn three_user_proposed_and_zero_padding() {
        let pair = set(&[0, 1]);
        let map = map_from(&[(0, set(&[1]), 9), (1, set(&[0]), 3)], 2, 2);
        let demands = DemandVector::new(vec![0, 1], 2).unwrap();

        let prop = build_delivery_plan(&map, &demands, Scheme::Proposed, 3).unwrap();
        assert_eq!(prop.subset(pair).unwrap().num_blocks, 3);
        for (i, blk) in prop.subset_blocks(pair).iter().enumerate() {
            assert_eq!(blk.piece_len(0), Some(3));
            assert_eq!(blk.piece_len(1), Some(1));
            assert_eq!(known_bit_mask(&prop, pair, i, 1).unwrap(), MaskShape::new(2, 0));
        }
        assert_eq!(prop.subset(pair).unwrap().useful_for(1), 3);

        let zp = build_delivery_plan(&map, &demands, Scheme::ZeroPadding, 3).unwrap();
        let sched = zp.subset(pair).unwrap();
        assert_eq!(sched.num_blocks, 3);
        assert_eq!(sched.useful_for(1), 1);
        assert_eq!(sched.useful_for(0), 3);
        assert_eq!(known_bit_mask(&zp, pair, 0, 1).unwrap(), MaskShape::new(0, 0));
        assert!(matches!(
            known_bit_mask(&zp, pair, 1, 1),
            Err(Error::UselessBlock { .. })
        ));
        assert_eq!(prop.load(), zp.load());
    }

    #[test]
    fn zero_padding_partial_block_has_known_suffix() {
        let pair = set(&[0, 1]);
        let map = map_from(&[(0, set(&[1]), 9), (1, set(&[0]), 4)], 2, 2);
        let demands = DemandVector::new(vec![0, 1], 2).unwrap();
        let zp = build_delivery_plan(&map, &demands, Scheme::ZeroPadding, 3).unwrap();
        assert_eq!(known_bit_mask(&zp, pair, 1, 1).unwrap(), MaskShape::new(0, 2));
        assert!(known_bit_mask(&zp, pair, 2, 1).is_err());
        assert!(matches!(
            known_bit_mask(&zp, pair, 3, 1),
            Err(Error::NoSuchBlock { .. })
        ));
        assert!(matches!(
            known_bit_mask(&zp, set(&[0]), 0, 1),
            Err(Error::UserNotInSubset { .. })
        ));
    }

    #[test]
    fn uneven_proposed_split_puts_larger_pieces_first() {
        let pair = set(&[0, 1]);
        let map = map_from(&[(0, set(&[1]), 10), (1, set(&[0]), 5)], 2, 2);
        let demands = DemandVector::new(vec![0, 1], 2).unwrap();
        let plan = build_delivery_plan(&map, &demands, Scheme::Proposed, 3).unwrap();
        let lens0: Vec<_> = plan.subset_blocks(pair).iter().map(|b| b.piece_len(0).unwrap()).collect();
        let lens1: Vec<_> = plan.subset_blocks(pair).iter().map(|b| b.piece_len(1).unwrap()).collect();
        assert_eq!(lens0, vec![3, 3, 2, 2]);
        assert_eq!(lens1, vec![2, 1, 1, 1]);
        let offs1: Vec<_> = plan.subset_blocks(pair).iter().map(|b| b.piece(1).unwrap().offset).collect();
        assert_eq!(offs1, vec![0, 2, 3, 4]);
    }

    #[test]
    fn plan_rejects_bad_arguments() {
        let map = map_from(&[(0, set(&[1]), 9)], 2, 2);
        let demands = DemandVector::new(vec![0, 1], 2).unwrap();
        assert!(build_delivery_plan(&map, &demands, Scheme::Proposed, 0).is_err());
        let short = DemandVector::new(vec![0], 2).unwrap();
        assert!(matches!(
            build_delivery_plan(&map, &short, Scheme::Proposed, 3),
            Err(Error::DimensionMismatch(_))
        ));
        let empty = map_from(&[], 2, 2);
        let plan = build_delivery_plan(&empty, &demands, Scheme::Proposed, 3).unwrap();
        assert!(plan.is_empty());
    }

    #[test]
    fn encode_edge_cases() {
        let map = map_from(&[(0, set(&[1]), 3), (1, set(&[0]), 3)], 2, 2);
        let demands = DemandVector::new(vec![0, 1], 2).unwrap();
        let plan = build_delivery_plan(&map, &demands, Scheme::Proposed, 3).unwrap();
        let block = plan.block(set(&[0, 1]), 0).unwrap();
        let zeros = BTreeMap::from([(0, bits("000")), (1, bits("000"))]);
        assert_eq!(encode_block(block, &zeros).unwrap(), 0);
        let long = BTreeMap::from([(0, bits("0000")), (1, bits("000"))]);
        assert!(matches!(encode_block(block, &long), Err(Error::PieceTooLong { .. })));
        let missing = BTreeMap::from([(0, bits("101"))]);
        assert!(matches!(encode_block(block, &missing), Err(Error::MissingPiece(1))));
        assert!(matches!(
            decode_block(0, block, 0, &BTreeMap::new()),
            Err(Error::MissingPiece(1))
        ));

        let single = build_delivery_plan(&map, &demands, Scheme::Proposed, 3).unwrap();
        let solo = single.block(set(&[0]), 0);
        assert!(solo.is_err());
        let map = map_from(&[(0, UserSet::EMPTY, 3)], 2, 2);
        let plan = build_delivery_plan(&map, &demands, Scheme::Proposed, 3).unwrap();
        let blk = plan.block(set(&[0]), 0).unwrap();
        let label = encode_block(blk, &BTreeMap::from([(0, bits("110"))])).unwrap();
        assert_eq!(label, 0b110);
        assert_eq!(decode_block(label, blk, 0, &BTreeMap::new()).unwrap(), bits("110"));
    }
}
