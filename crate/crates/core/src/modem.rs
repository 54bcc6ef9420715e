//! Set-partition labeled PSK and QAM constellations.
//!
//! Labels are `m`-bit integers; label position 0 is the most significant
//! bit. With set-partitioning labels, fixing the first `n` label bits leaves a
//! subconstellation whose minimum distance is `2 sin(pi / 2^(m-n))` for PSK
//! and `sqrt(2)^n d` for square QAM with grid spacing `d`.

use std::f64::consts::PI;
use std::fmt;

use num_complex::Complex64;

use crate::error::{Error, Result};

pub const MAX_PSK_BITS: u32 = 8;
pub const MAX_QAM_BITS: u32 = 8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Family {
    Psk,
    Qam,
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Family::Psk => "psk",
            Family::Qam => "qam",
        })
    }
}

/// Numbers of leading and trailing label bits known to a receiver.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct MaskShape {
    pub prefix: u32,
    pub suffix: u32,
}

impl MaskShape {
    pub const NONE: MaskShape = MaskShape { prefix: 0, suffix: 0 };

    pub fn new(prefix: u32, suffix: u32) -> Self {
        MaskShape { prefix, suffix }
    }

    pub fn known(self) -> u32 {
        self.prefix + self.suffix
    }

    pub fn validate(self, m: u32) -> Result<()> {
        if self.known() > m {
            return Err(Error::InvalidMask(format!(
                "{} prefix + {} suffix bits exceed a {m}-bit label",
                self.prefix, self.suffix
            )));
        }
        Ok(())
    }
}

/// Known label bits together with their values.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub struct KnownMask {
    pub shape: MaskShape,
    /// Values of the leading `shape.prefix` bits, as an integer.
    pub prefix_value: u32,
    /// Values of the trailing `shape.suffix` bits, as an integer.
    pub suffix_value: u32,
}

impl KnownMask {
    pub const NONE: KnownMask = KnownMask {
        shape: MaskShape::NONE,
        prefix_value: 0,
        suffix_value: 0,
    };

    /// Mask from a bit string listing the prefix values followed by the
    /// suffix values.
    pub fn new(shape: MaskShape, m: u32, known_values: &[u8]) -> Result<Self> {
        shape.validate(m)?;
        if known_values.len() != shape.known() as usize {
            return Err(Error::InvalidMask(format!(
                "{} known values for {} known positions",
                known_values.len(),
                shape.known()
            )));
        }
        let to_int = |bits: &[u8]| bits.iter().fold(0u32, |acc, &b| (acc << 1) | (b & 1) as u32);
        let (pre, suf) = known_values.split_at(shape.prefix as usize);
        Ok(KnownMask {
            shape,
            prefix_value: to_int(pre),
            suffix_value: to_int(suf),
        })
    }

    /// The mask a receiver holds when the transmitted label is `label`.
    pub fn from_label(shape: MaskShape, m: u32, label: u32) -> Self {
        debug_assert!(shape.known() <= m);
        KnownMask {
            shape,
            prefix_value: label.checked_shr(m - shape.prefix).unwrap_or(0),
            suffix_value: label & low_bits(shape.suffix),
        }
    }

    pub fn accepts(&self, m: u32, label: u32) -> bool {
        label.checked_shr(m - self.shape.prefix).unwrap_or(0) == self.prefix_value
            && label & low_bits(self.shape.suffix) == self.suffix_value
    }

    /// Labels compatible with the mask, in increasing order.
    fn labels(self, m: u32) -> impl Iterator<Item = u32> {
        let free = m - self.shape.known();
        let high = self.prefix_value.checked_shl(m - self.shape.prefix).unwrap_or(0);
        (0..1u32 << free).map(move |mid| high | (mid << self.shape.suffix) | self.suffix_value)
    }
}

fn low_bits(n: u32) -> u32 {
    1u32.checked_shl(n).map_or(u32::MAX, |v| v - 1)
}

/// Reverses the low `m` bits of `x`.
fn bit_reverse(x: u32, m: u32) -> u32 {
    x.reverse_bits() >> (32 - m)
}

/// A unit-energy constellation indexed by label.
#[derive(Clone, Debug, PartialEq)]
pub struct Constellation {
    family: Family,
    m: u32,
    points: Vec<Complex64>,
    spacing: f64,
}

impl Constellation {
    pub fn new(family: Family, m: u32) -> Result<Self> {
        match family {
            Family::Psk => build_psk(m),
            Family::Qam => build_qam(m),
        }
    }

    pub fn family(&self) -> Family {
        self.family
    }

    pub fn bits_per_symbol(&self) -> u32 {
        self.m
    }

    pub fn size(&self) -> usize {
        self.points.len()
    }

    /// Points ordered by label.
    pub fn points(&self) -> &[Complex64] {
        &self.points
    }

    /// Grid spacing `d` after normalization for QAM; the unit radius for PSK.
    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn average_energy(&self) -> f64 {
        self.points.iter().map(|p| p.norm_sqr()).sum::<f64>() / self.points.len() as f64
    }

    /// Closed-form minimum distance with the first `known` label bits fixed.
    pub fn partition_distance(&self, known: u32) -> f64 {
        match self.family {
            Family::Psk => 2.0 * (PI / f64::from(1u32 << (self.m - known))).sin(),
            Family::Qam => 2f64.sqrt().powi(known as i32) * self.spacing,
        }
    }
}

/// `2^m`-PSK with angular index `k` at angle `2 pi k / 2^m` carrying the
/// bit-reversed label of `k`.
pub fn build_psk(m: u32) -> Result<Constellation> {
    if !(1..=MAX_PSK_BITS).contains(&m) {
        return Err(Error::InvalidModulation(format!(
            "PSK needs 1..={MAX_PSK_BITS} bits per symbol, got {m}"
        )));
    }
    let size = 1usize << m;
    let mut points = vec![Complex64::new(0.0, 0.0); size];
    for k in 0..size as u32 {
        let angle = 2.0 * PI * f64::from(k) / size as f64;
        points[bit_reverse(k, m) as usize] = Complex64::from_polar(1.0, angle);
    }
    Ok(Constellation {
        family: Family::Psk,
        m,
        points,
        spacing: 1.0,
    })
}

/// Square `2^m`-QAM labeled along the binary lattice partition chain
/// `Z^2 / RZ^2 / 2Z^2 / 2RZ^2 / ...`: label bit `j` (MSB first) selects the
/// coset representative `(2^(j/2), 0)` for even `j` and
/// `(2^(j/2), 2^(j/2))` for odd `j`, summed modulo the grid side.
pub fn build_qam(m: u32) -> Result<Constellation> {
    if m % 2 != 0 || !(2..=MAX_QAM_BITS).contains(&m) {
        return Err(Error::InvalidModulation(format!(
            "square QAM needs an even number of bits per symbol in 2..={MAX_QAM_BITS}, got {m}"
        )));
    }
    let side = 1u32 << (m / 2);
    let energy = 2.0 * (f64::from(side * side) - 1.0) / 3.0;
    let scale = 1.0 / energy.sqrt();
    let points = (0..1u32 << m)
        .map(|label| {
            let (mut x, mut y) = (0u32, 0u32);
            for j in 0..m {
                if label >> (m - 1 - j) & 1 == 1 {
                    let step = 1 << (j / 2);
                    x += step;
                    if j % 2 == 1 {
                        y += step;
                    }
                }
            }
            let (x, y) = (x % side, y % side);
            let centre = f64::from(side - 1);
            Complex64::new(
                (2.0 * f64::from(x) - centre) * scale,
                (2.0 * f64::from(y) - centre) * scale,
            )
        })
        .collect();
    Ok(Constellation {
        family: Family::Qam,
        m,
        points,
        spacing: 2.0 * scale,
    })
}

/// Labels whose known positions agree with `mask`, in increasing order.
pub fn subconstellation(c: &Constellation, mask: &KnownMask) -> Result<Vec<u32>> {
    mask.shape.validate(c.m)?;
    Ok(mask.labels(c.m).collect())
}

fn min_pairwise(points: impl Iterator<Item = Complex64>) -> f64 {
    let pts: Vec<Complex64> = points.collect();
    let mut best = f64::INFINITY;
    for (i, a) in pts.iter().enumerate() {
        for b in &pts[i + 1..] {
            best = best.min((a - b).norm());
        }
    }
    best
}

/// Minimum pairwise distance inside the subconstellation left by `shape`,
/// minimized over every value the known bits can take.
pub fn min_distance(c: &Constellation, shape: MaskShape) -> Result<f64> {
    shape.validate(c.m)?;
    let size = 1usize << (c.m - shape.known());
    if size < 2 {
        return Err(Error::DegenerateSubconstellation(size));
    }
    let mut best = f64::INFINITY;
    for prefix_value in 0..1u32 << shape.prefix {
        for suffix_value in 0..1u32 << shape.suffix {
            let mask = KnownMask {
                shape,
                prefix_value,
                suffix_value,
            };
            best = best.min(min_pairwise(
                mask.labels(c.m).map(|l| c.points[l as usize]),
            ));
        }
    }
    Ok(best)
}

pub fn modulate(c: &Constellation, label: u32) -> Result<Complex64> {
    c.points
        .get(label as usize)
        .copied()
        .ok_or(Error::LabelOutOfRange { label, m: c.m })
}

/// ML decision restricted to the labels compatible with `mask`: the label
/// minimizing `|y - sqrt_snr * x|`, smallest label on exact ties.
pub fn demodulate(c: &Constellation, y: Complex64, sqrt_snr: f64, mask: &KnownMask) -> Result<u32> {
    mask.shape.validate(c.m)?;
    if !(sqrt_snr > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "square-root SNR must be positive, got {sqrt_snr}"
        )));
    }
    let mut best = (f64::INFINITY, None);
    for label in mask.labels(c.m) {
        let dist = (y - c.points[label as usize] * sqrt_snr).norm_sqr();
        if dist < best.0 {
            best = (dist, Some(label));
        }
    }
    best.1.ok_or(Error::DegenerateSubconstellation(0))
}
