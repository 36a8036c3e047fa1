//! Low-PAPR base sequences and UCI to cyclic-shift encoding for PUCCH
//! Format 0.
//!
//! A Format 0 transmission is one length-12 base sequence
//! `r(k) = exp(j*phi(k)*pi/4)` rotated by a per-subcarrier phase ramp
//! `exp(j*alpha*k)`, where `alpha = 2*pi*idx/12` and
//! `idx = (m0 + m_cs + n_cs) mod 12`. The UCI content only selects `m_cs`.

use crate::error::{Error, Result};
use num_complex::Complex64;
use std::f64::consts::PI;
use std::fmt;

/// Subcarriers per resource block.
pub const N_SC: usize = 12;

/// Number of base-sequence groups.
pub const N_GROUPS: usize = 30;

/// Phase factors for length-12 low-PAPR sequences (TS 38.211 Table
/// 5.2.2.2-2), one row per group `u`.
#[rustfmt::skip]
const PHI_12: [[i8; N_SC]; N_GROUPS] = [
    [-3,  1, -3, -3, -3,  3, -3, -1,  1,  1,  1, -3],
    [-3,  3,  1, -3,  1,  3, -1, -1,  1,  3,  3,  3],
    [-3,  3,  3,  1, -3,  3, -1,  1,  3, -3,  3, -3],
    [-3, -3, -1,  3,  3,  3, -3,  3, -3,  1, -1, -3],
    [-3, -1, -1,  1,  3,  1,  1, -1,  1, -1, -3,  1],
    [-3, -3,  3,  1, -3, -3, -3, -1,  3, -1,  1,  3],
    [ 1, -1,  3, -1, -1, -1, -3, -1,  1,  1,  1, -3],
    [-1, -3,  3, -1, -3, -3, -3, -1,  1, -1,  1, -3],
    [-3, -1,  3,  1, -3, -1, -3,  3,  1,  3,  3,  1],
    [-3, -1, -1, -3, -3, -1, -3,  3,  1,  3, -1, -3],
    [-3,  3, -3,  3,  3, -3, -1, -1,  3,  3,  1, -3],
    [-3, -1, -3, -1, -1, -3,  3,  3, -1, -1,  1, -3],
    [-3, -1,  3, -3, -3, -1, -3,  1, -1, -3,  3,  3],
    [-3,  1, -1, -1,  3,  3, -3, -1, -1, -3, -1, -3],
    [ 1,  3, -3,  1,  3,  3,  3,  1, -1,  1, -1,  3],
    [-3,  1,  3, -1, -1, -3, -3, -1, -1,  3,  1, -3],
    [-1, -1, -1, -1,  1, -3, -1,  3,  3, -1, -3,  1],
    [-1,  1,  1, -1,  1,  3,  3, -1, -1, -3,  1, -3],
    [-3,  1,  3,  3, -1, -1, -3,  3,  3, -3,  3, -3],
    [-3, -3,  3, -3, -1,  3,  3,  3, -1, -3,  1, -3],
    [ 3,  1,  3,  1,  3, -3, -1,  1,  3,  1, -1, -3],
    [-3,  3,  1,  3, -3,  1,  1,  1,  1,  3, -3,  3],
    [-3,  3,  3,  3, -1, -3, -3, -1, -3,  1,  3, -3],
    [ 3, -1, -3,  3, -3, -1,  3,  3,  3, -3, -1, -3],
    [-3, -1,  1, -3,  1,  3,  3,  3, -1, -3,  3,  3],
    [-3,  3,  1, -1,  3,  3, -3,  1, -1,  1, -1,  1],
    [-1,  1,  3, -3,  1, -1,  1, -1, -1, -3,  1, -1],
    [-3, -3,  3,  3,  3, -3, -1,  1, -3,  3,  1, -3],
    [ 1, -1,  3,  1,  1, -1, -1, -1,  1,  3, -3,  1],
    [-3,  3, -3,  3, -3, -3,  3, -1, -1,  1,  3, -3],
];

/// `exp(j*2*pi*m/12)` for `m = 0..12`.
fn twelfth_root(m: usize) -> Complex64 {
    Complex64::from_polar(1.0, 2.0 * PI * (m % N_SC) as f64 / N_SC as f64)
}

/// Returns the phase-factor row for group `u`.
pub fn phi_row(u: usize) -> Result<[i8; N_SC]> {
    PHI_12
        .get(u)
        .copied()
        .ok_or_else(|| Error::Domain(format!("base sequence group {u} outside 0..=29")))
}

/// Base sequence identity `(u, v)`. For length-12 sequences only `v = 0`
/// exists, so only the group number is stored.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct BaseSequenceId {
    u: u8,
}

impl BaseSequenceId {
    pub fn new(u: u8) -> Result<Self> {
        phi_row(u as usize)?;
        Ok(Self { u })
    }

    pub fn group(&self) -> u8 {
        self.u
    }

    pub fn sequence(&self) -> u8 {
        0
    }
}

/// Twelve frequency-domain samples, one per subcarrier of the resource block.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FreqSequence(pub [Complex64; N_SC]);

impl FreqSequence {
    pub fn zeros() -> Self {
        Self([Complex64::new(0.0, 0.0); N_SC])
    }

    pub fn samples(&self) -> &[Complex64; N_SC] {
        &self.0
    }

    pub fn is_unit_modulus(&self, tol: f64) -> bool {
        self.0.iter().all(|s| (s.norm() - 1.0).abs() <= tol)
    }

    /// `sum_k conj(self[k]) * other[k]`.
    pub fn inner(&self, other: &FreqSequence) -> Complex64 {
        self.0
            .iter()
            .zip(other.0.iter())
            .map(|(a, b)| a.conj() * b)
            .sum()
    }
}

impl std::ops::Index<usize> for FreqSequence {
    type Output = Complex64;

    fn index(&self, k: usize) -> &Complex64 {
        &self.0[k]
    }
}

pub fn base_sequence(id: BaseSequenceId) -> Result<FreqSequence> {
    let phi = phi_row(id.u as usize)?;
    let mut out = [Complex64::new(0.0, 0.0); N_SC];
    for (o, &p) in out.iter_mut().zip(phi.iter()) {
        *o = Complex64::from_polar(1.0, p as f64 * PI / 4.0);
    }
    Ok(FreqSequence(out))
}

/// Cyclic-shift index `idx` in `0..12`; the phase ramp is `alpha = 2*pi*idx/12`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct CyclicShiftIndex(u8);

impl CyclicShiftIndex {
    pub fn new(idx: u8) -> Result<Self> {
        if (idx as usize) < N_SC {
            Ok(Self(idx))
        } else {
            Err(Error::Domain(format!("cyclic shift index {idx} outside 0..=11")))
        }
    }

    /// Reduces any integer modulo 12.
    pub fn wrapping(idx: i64) -> Self {
        Self(idx.rem_euclid(N_SC as i64) as u8)
    }

    pub fn index(self) -> u8 {
        self.0
    }

    /// The phase slope in radians per subcarrier.
    pub fn alpha(self) -> f64 {
        2.0 * PI * self.0 as f64 / N_SC as f64
    }
}

impl fmt::Display for CyclicShiftIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// A set of cyclic-shift indices stored as a 12-bit mask; bit `b` set means
/// index `b` is present. Used for labels and decoder outputs alike.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, PartialOrd, Ord)]
pub struct AlphaSet(u16);

impl AlphaSet {
    pub const FULL_MASK: u16 = (1 << N_SC) - 1;

    pub fn empty() -> Self {
        Self(0)
    }

    pub fn from_mask(mask: u16) -> Result<Self> {
        if mask & !Self::FULL_MASK != 0 {
            return Err(Error::Domain(format!("label mask {mask} exceeds 12 bits")));
        }
        Ok(Self(mask))
    }

    pub fn mask(self) -> u16 {
        self.0
    }

    pub fn insert(&mut self, s: CyclicShiftIndex) {
        self.0 |= 1 << s.0;
    }

    pub fn contains(self, s: CyclicShiftIndex) -> bool {
        self.0 & (1 << s.0) != 0
    }

    pub fn contains_index(self, idx: usize) -> bool {
        idx < N_SC && self.0 & (1 << idx) != 0
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn iter(self) -> impl Iterator<Item = CyclicShiftIndex> {
        (0..N_SC as u8)
            .filter(move |b| self.0 & (1 << b) != 0)
            .map(CyclicShiftIndex)
    }
}

impl FromIterator<CyclicShiftIndex> for AlphaSet {
    fn from_iter<I: IntoIterator<Item = CyclicShiftIndex>>(iter: I) -> Self {
        let mut set = AlphaSet::empty();
        for s in iter {
            set.insert(s);
        }
        set
    }
}

/// Which UCI fields a PUCCH resource carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum UciKind {
    Harq1,
    Harq2,
    SrOnly,
    Harq1Sr,
    Harq2Sr,
}

impl UciKind {
    pub const ALL: [UciKind; 5] = [
        UciKind::Harq1,
        UciKind::Harq2,
        UciKind::SrOnly,
        UciKind::Harq1Sr,
        UciKind::Harq2Sr,
    ];

    pub fn harq_bits(self) -> usize {
        match self {
            UciKind::SrOnly => 0,
            UciKind::Harq1 | UciKind::Harq1Sr => 1,
            UciKind::Harq2 | UciKind::Harq2Sr => 2,
        }
    }

    pub fn has_sr(self) -> bool {
        matches!(self, UciKind::SrOnly | UciKind::Harq1Sr | UciKind::Harq2Sr)
    }

    /// Kind for a given HARQ bit count and SR bit count; `(0, 0)` has none.
    pub fn from_bit_lengths(harq: usize, sr: usize) -> Option<UciKind> {
        match (harq, sr) {
            (1, 0) => Some(UciKind::Harq1),
            (2, 0) => Some(UciKind::Harq2),
            (0, 1) => Some(UciKind::SrOnly),
            (1, 1) => Some(UciKind::Harq1Sr),
            (2, 1) => Some(UciKind::Harq2Sr),
            _ => None,
        }
    }

    /// Every `m_cs` this kind may produce. A UE of this kind reserves all of
    /// them (shifted by its `m0 + n_cs`) so that multiplexed UEs never
    /// collide whatever their content.
    pub fn possible_shift_offsets(self) -> &'static [u8] {
        match self {
            UciKind::Harq1 => &[0, 6],
            UciKind::Harq2 | UciKind::Harq1Sr => &[0, 3, 6, 9],
            UciKind::SrOnly => &[0],
            UciKind::Harq2Sr => &[0, 1, 3, 4, 6, 7, 9, 10],
        }
    }

    /// Every payload of this kind, including the untransmitted negative SR.
    pub fn payloads(self) -> Vec<UciPayload> {
        let b = [false, true];
        let mut out = Vec::new();
        for x in b {
            for y in b {
                for s in b {
                    let p = match self {
                        UciKind::Harq1 => UciPayload::Harq1(x),
                        UciKind::Harq2 => UciPayload::Harq2(x, y),
                        UciKind::SrOnly => UciPayload::SrOnly(x),
                        UciKind::Harq1Sr => UciPayload::Harq1Sr(x, y),
                        UciKind::Harq2Sr => UciPayload::Harq2Sr(x, y, s),
                    };
                    if !out.contains(&p) {
                        out.push(p);
                    }
                }
            }
        }
        out
    }
}

pub fn possible_shift_offsets(kind: UciKind) -> &'static [u8] {
    kind.possible_shift_offsets()
}

/// UCI content of one UE. HARQ bits are `true` for ACK; the SR flag is
/// `true` for a positive scheduling request.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum UciPayload {
    Harq1(bool),
    Harq2(bool, bool),
    SrOnly(bool),
    Harq1Sr(bool, bool),
    Harq2Sr(bool, bool, bool),
}

impl UciPayload {
    pub fn kind(&self) -> UciKind {
        match self {
            UciPayload::Harq1(..) => UciKind::Harq1,
            UciPayload::Harq2(..) => UciKind::Harq2,
            UciPayload::SrOnly(..) => UciKind::SrOnly,
            UciPayload::Harq1Sr(..) => UciKind::Harq1Sr,
            UciPayload::Harq2Sr(..) => UciKind::Harq2Sr,
        }
    }

    pub fn harq_bits(&self) -> Vec<bool> {
        match *self {
            UciPayload::Harq1(a) | UciPayload::Harq1Sr(a, _) => vec![a],
            UciPayload::Harq2(a, b) | UciPayload::Harq2Sr(a, b, _) => vec![a, b],
            UciPayload::SrOnly(_) => vec![],
        }
    }

    pub fn sr(&self) -> Option<bool> {
        match *self {
            UciPayload::SrOnly(s) | UciPayload::Harq1Sr(_, s) | UciPayload::Harq2Sr(_, _, s) => {
                Some(s)
            }
            _ => None,
        }
    }

    /// Draws a uniformly random payload of `kind`.
    pub fn random(kind: UciKind, rng: &mut crate::rng::SimRng) -> Self {
        match kind {
            UciKind::Harq1 => UciPayload::Harq1(rng.coin()),
            UciKind::Harq2 => UciPayload::Harq2(rng.coin(), rng.coin()),
            UciKind::SrOnly => UciPayload::SrOnly(rng.coin()),
            UciKind::Harq1Sr => UciPayload::Harq1Sr(rng.coin(), rng.coin()),
            UciKind::Harq2Sr => UciPayload::Harq2Sr(rng.coin(), rng.coin(), rng.coin()),
        }
    }
}

const ACK: bool = true;
const NACK: bool = false;

/// UCI-dependent shift `m_cs`, or `None` when nothing is transmitted
/// (negative SR on an SR-only resource).
pub fn mcs_of_uci(p: UciPayload) -> Option<u8> {
    let m = match p {
        UciPayload::Harq1(ACK) => 0,
        UciPayload::Harq1(NACK) => 6,
        UciPayload::Harq2(NACK, NACK) => 0,
        UciPayload::Harq2(NACK, ACK) => 3,
        UciPayload::Harq2(ACK, ACK) => 6,
        UciPayload::Harq2(ACK, NACK) => 9,
        UciPayload::SrOnly(true) => 0,
        UciPayload::SrOnly(false) => return None,
        UciPayload::Harq1Sr(NACK, false) => 0,
        UciPayload::Harq1Sr(NACK, true) => 3,
        UciPayload::Harq1Sr(ACK, false) => 6,
        UciPayload::Harq1Sr(ACK, true) => 9,
        UciPayload::Harq2Sr(NACK, NACK, false) => 0,
        UciPayload::Harq2Sr(NACK, NACK, true) => 1,
        UciPayload::Harq2Sr(NACK, ACK, false) => 3,
        UciPayload::Harq2Sr(NACK, ACK, true) => 4,
        UciPayload::Harq2Sr(ACK, ACK, false) => 6,
        UciPayload::Harq2Sr(ACK, ACK, true) => 7,
        UciPayload::Harq2Sr(ACK, NACK, false) => 9,
        UciPayload::Harq2Sr(ACK, NACK, true) => 10,
    };
    Some(m)
}

/// Inverse of [`mcs_of_uci`] for a known payload kind.
pub fn uci_of_mcs(kind: UciKind, m_cs: u8) -> Result<UciPayload> {
    let p = match (kind, m_cs) {
        (UciKind::Harq1, 0) => UciPayload::Harq1(ACK),
        (UciKind::Harq1, 6) => UciPayload::Harq1(NACK),
        (UciKind::Harq2, 0) => UciPayload::Harq2(NACK, NACK),
        (UciKind::Harq2, 3) => UciPayload::Harq2(NACK, ACK),
        (UciKind::Harq2, 6) => UciPayload::Harq2(ACK, ACK),
        (UciKind::Harq2, 9) => UciPayload::Harq2(ACK, NACK),
        (UciKind::SrOnly, 0) => UciPayload::SrOnly(true),
        (UciKind::Harq1Sr, 0) => UciPayload::Harq1Sr(NACK, false),
        (UciKind::Harq1Sr, 3) => UciPayload::Harq1Sr(NACK, true),
        (UciKind::Harq1Sr, 6) => UciPayload::Harq1Sr(ACK, false),
        (UciKind::Harq1Sr, 9) => UciPayload::Harq1Sr(ACK, true),
        (UciKind::Harq2Sr, 0) => UciPayload::Harq2Sr(NACK, NACK, false),
        (UciKind::Harq2Sr, 1) => UciPayload::Harq2Sr(NACK, NACK, true),
        (UciKind::Harq2Sr, 3) => UciPayload::Harq2Sr(NACK, ACK, false),
        (UciKind::Harq2Sr, 4) => UciPayload::Harq2Sr(NACK, ACK, true),
        (UciKind::Harq2Sr, 6) => UciPayload::Harq2Sr(ACK, ACK, false),
        (UciKind::Harq2Sr, 7) => UciPayload::Harq2Sr(ACK, ACK, true),
        (UciKind::Harq2Sr, 9) => UciPayload::Harq2Sr(ACK, NACK, false),
        (UciKind::Harq2Sr, 10) => UciPayload::Harq2Sr(ACK, NACK, true),
        (kind, m) => {
            return Err(Error::Decode(format!("m_cs {m} is not a legal value for {kind:?}")))
        }
    };
    Ok(p)
}

/// L2-configured shift components `(m0, n_cs)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct ShiftContext {
    m0: u8,
    n_cs: u8,
}

impl ShiftContext {
    pub fn new(m0: u8, n_cs: u8) -> Result<Self> {
        if m0 as usize >= N_SC || n_cs as usize >= N_SC {
            return Err(Error::Domain(format!(
                "shift context (m0={m0}, n_cs={n_cs}) outside 0..=11"
            )));
        }
        Ok(Self { m0, n_cs })
    }

    pub fn m0(&self) -> u8 {
        self.m0
    }

    pub fn n_cs(&self) -> u8 {
        self.n_cs
    }
}

pub fn alpha_index(ctx: ShiftContext, m_cs: u8) -> CyclicShiftIndex {
    CyclicShiftIndex::wrapping(ctx.m0 as i64 + m_cs as i64 + ctx.n_cs as i64)
}

/// `out[k] = exp(j*2*pi*s*k/12) * base[k]`.
pub fn apply_shift(base: &FreqSequence, s: CyclicShiftIndex) -> FreqSequence {
    let mut out = base.0;
    for (k, o) in out.iter_mut().enumerate() {
        // Reduce the phase index first so composition stays exact.
        *o *= twelfth_root(s.0 as usize * k);
    }
    FreqSequence(out)
}
