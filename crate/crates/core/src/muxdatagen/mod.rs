//! Multiplexed-UE configuration sampling and labeled dataset generation.

mod io;

pub use io::{
    read_binary, read_csv, read_dataset, write_binary, write_csv, write_dataset, DatasetFormat,
    BINARY_MAGIC, BINARY_RECORD_LEN, BINARY_VERSION, CSV_HEADER,
};

use crate::channel::{realize_channel, synthesize_rx, ChannelModel, NoiseSpec};
use crate::error::{Error, Result};
use crate::rng::{mix_seed, SimRng};
use crate::waveform::{
    alpha_index, base_sequence, mcs_of_uci, AlphaSet, BaseSequenceId, CyclicShiftIndex,
    FreqSequence, ShiftContext, UciKind, UciPayload, N_SC,
};
use num_complex::Complex64;
use rayon::prelude::*;

pub const MAX_UES: usize = N_SC;

/// One UE's PUCCH resource and content.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct UeAllocation {
    pub ctx: ShiftContext,
    pub payload: UciPayload,
    /// `None` when the UE does not transmit (negative SR on an SR-only
    /// resource).
    pub alpha: Option<CyclicShiftIndex>,
}

impl UeAllocation {
    pub fn new(ctx: ShiftContext, payload: UciPayload) -> Self {
        let alpha = mcs_of_uci(payload).map(|m| alpha_index(ctx, m));
        Self { ctx, payload, alpha }
    }

    /// Every shift index this UE may occupy, as a 12-bit mask.
    pub fn reserved_mask(&self) -> u16 {
        reserved_mask(self.payload.kind(), self.ctx.m0() + self.ctx.n_cs())
    }
}

fn reserved_mask(kind: UciKind, start: u8) -> u16 {
    kind.possible_shift_offsets()
        .iter()
        .fold(0u16, |m, &o| m | 1 << ((start + o) as usize % N_SC))
}

/// UEs sharing one resource block.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct MuxConfig {
    pub ues: Vec<UeAllocation>,
}

impl MuxConfig {
    /// Checks that the reserved shift sets are pairwise disjoint.
    pub fn validate(&self) -> Result<()> {
        if self.ues.len() > MAX_UES {
            return Err(Error::Config(format!("{} UEs exceed 12", self.ues.len())));
        }
        let mut used = 0u16;
        for (i, ue) in self.ues.iter().enumerate() {
            let mask = ue.reserved_mask();
            if used & mask != 0 {
                return Err(Error::Config(format!(
                    "UE {i} ({:?}, m0={}) overlaps earlier reservations",
                    ue.payload.kind(),
                    ue.ctx.m0()
                )));
            }
            if let Some(a) = ue.alpha {
                if Some(a) != mcs_of_uci(ue.payload).map(|m| alpha_index(ue.ctx, m)) {
                    return Err(Error::Config(format!("UE {i} alpha inconsistent with payload")));
                }
            }
            used |= mask;
        }
        Ok(())
    }

    /// Multi-hot set of transmitted shift indices.
    pub fn label(&self) -> AlphaSet {
        self.ues.iter().filter_map(|u| u.alpha).collect()
    }

    pub fn transmitting(&self) -> usize {
        self.ues.iter().filter(|u| u.alpha.is_some()).count()
    }
}

/// Options controlling how payloads are drawn.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PayloadPolicy {
    /// Probability that an SR-only UE has a negative SR (and so stays
    /// silent). Training data uses 0.
    pub sr_only_negative_prob: f64,
}

impl Default for PayloadPolicy {
    fn default() -> Self {
        Self {
            sr_only_negative_prob: 0.0,
        }
    }
}

/// Draws a payload kind as `bit_len_harq in {0,1,2}`, `bit_len_sr in {0,1}`,
/// resampling the empty `(0, 0)` combination.
pub fn random_kind(rng: &mut SimRng) -> UciKind {
    loop {
        let harq = rng.below(3);
        let sr = rng.below(2);
        if let Some(kind) = UciKind::from_bit_lengths(harq, sr) {
            return kind;
        }
    }
}

/// Samples a feasible configuration with exactly `n_ue` UEs.
///
/// UEs are placed one at a time. For each UE the candidate kinds are tried
/// in random order (the first candidate drawn as in [`random_kind`]) and the
/// free starting shifts in shuffled order; a placement is accepted only if
/// it leaves at least one free shift per UE still to be placed. Since an
/// SR-only UE needs a single shift, that condition keeps every partial
/// configuration completable, so the search never dead-ends.
pub fn sample_mux_config(
    n_ue: usize,
    n_cs: u8,
    policy: &PayloadPolicy,
    rng: &mut SimRng,
) -> Result<MuxConfig> {
    if n_ue > MAX_UES {
        return Err(Error::Domain(format!("n_ue {n_ue} exceeds 12")));
    }
    ShiftContext::new(0, n_cs)?;

    let mut used = 0u16;
    let mut ues = Vec::with_capacity(n_ue);
    for placed in 0..n_ue {
        let remaining_after = n_ue - placed - 1;
        let first = random_kind(rng);
        let mut kinds: Vec<UciKind> = UciKind::ALL.iter().copied().filter(|&k| k != first).collect();
        rng.shuffle(&mut kinds);
        kinds.insert(0, first);

        let mut chosen = None;
        'kinds: for kind in kinds {
            let mut starts: Vec<u8> = (0..N_SC as u8).collect();
            rng.shuffle(&mut starts);
            for m0 in starts {
                let mask = reserved_mask(kind, m0 + n_cs);
                if used & mask != 0 {
                    continue;
                }
                let free_after = N_SC - (used | mask).count_ones() as usize;
                if free_after >= remaining_after {
                    chosen = Some((kind, m0, mask));
                    break 'kinds;
                }
            }
        }
        // Unreachable while free >= remaining: SR-only always fits.
        let (kind, m0, mask) = chosen.ok_or_else(|| {
            Error::Config(format!("no feasible placement for UE {placed} of {n_ue}"))
        })?;
        used |= mask;

        let payload = match kind {
            UciKind::SrOnly => UciPayload::SrOnly(!rng.bernoulli(policy.sr_only_negative_prob)),
            k => UciPayload::random(k, rng),
        };
        ues.push(UeAllocation::new(ShiftContext::new(m0, n_cs)?, payload));
    }
    Ok(MuxConfig { ues })
}

/// One labeled received resource block.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PucchRecord {
    pub seed: u64,
    pub snr_db: f32,
    /// Number of UEs that actually transmitted.
    pub n_ue_true: u8,
    pub n_cs: u8,
    pub label: AlphaSet,
    /// `Re(y(0..12))` followed by `Im(y(0..12))`.
    pub iq: [f32; 2 * N_SC],
}

impl PucchRecord {
    pub fn rx(&self) -> FreqSequence {
        let mut y = [Complex64::new(0.0, 0.0); N_SC];
        for (k, yk) in y.iter_mut().enumerate() {
            *yk = Complex64::new(self.iq[k] as f64, self.iq[N_SC + k] as f64);
        }
        FreqSequence(y)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_ue_true as usize > MAX_UES || self.n_cs as usize >= N_SC {
            return Err(Error::Domain(format!(
                "record {}: n_ue_true={} n_cs={} out of range",
                self.seed, self.n_ue_true, self.n_cs
            )));
        }
        if self.label.len() != self.n_ue_true as usize {
            return Err(Error::Domain(format!(
                "record {}: label has {} bits but n_ue_true={}",
                self.seed,
                self.label.len(),
                self.n_ue_true
            )));
        }
        Ok(())
    }
}

fn iq_of(y: &FreqSequence) -> [f32; 2 * N_SC] {
    let mut iq = [0f32; 2 * N_SC];
    for k in 0..N_SC {
        iq[k] = y[k].re as f32;
        iq[N_SC + k] = y[k].im as f32;
    }
    iq
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSpec {
    pub snr_list: Vec<f64>,
    pub n_ue_list: Vec<usize>,
    pub iters: usize,
    pub allocs_per_grid: usize,
    pub channel: ChannelModel,
    pub master_seed: u64,
    pub n_cs: u8,
    pub base: BaseSequenceId,
    pub policy: PayloadPolicy,
}

impl DatasetSpec {
    /// Desk-scale defaults: 5 SNRs, all 13 UE counts, 100 iterations of 32
    /// allocations, flat Rayleigh fading.
    pub fn desk(master_seed: u64) -> Self {
        Self {
            snr_list: vec![0.0, 5.0, 10.0, 15.0, 20.0],
            n_ue_list: (0..=MAX_UES).collect(),
            iters: 100,
            allocs_per_grid: 32,
            channel: ChannelModel::FlatRayleigh,
            master_seed,
            n_cs: 0,
            base: BaseSequenceId::default(),
            policy: PayloadPolicy::default(),
        }
    }

    pub fn record_count(&self) -> usize {
        self.snr_list.len() * self.n_ue_list.len() * self.iters * self.allocs_per_grid
    }

    pub fn validate(&self) -> Result<()> {
        if self.iters == 0 || self.allocs_per_grid == 0 {
            return Err(Error::Config("iters and allocs_per_grid must be >= 1".into()));
        }
        if let Some(&n) = self.n_ue_list.iter().find(|&&n| n > MAX_UES) {
            return Err(Error::Domain(format!("n_ue {n} exceeds 12")));
        }
        if self.snr_list.iter().any(|s| s.is_nan()) {
            return Err(Error::Config("NaN SNR".into()));
        }
        if !(0.0..=1.0).contains(&self.policy.sr_only_negative_prob) {
            return Err(Error::Config("negative-SR probability outside [0, 1]".into()));
        }
        ShiftContext::new(0, self.n_cs)?;
        self.channel.validate()
    }
}

/// Builds the record for index tuple `(snr, n_ue, iter, alloc)`.
pub fn generate_record(
    spec: &DatasetSpec,
    base: &FreqSequence,
    snr_db: f64,
    n_ue: usize,
    iter: usize,
    alloc: usize,
) -> Result<PucchRecord> {
    let seed = mix_seed(
        spec.master_seed,
        &[snr_db.to_bits(), n_ue as u64, iter as u64, alloc as u64],
    );
    let mut rng = SimRng::new(seed);
    let config = sample_mux_config(n_ue, spec.n_cs, &spec.policy, &mut rng)?;
    let mut allocs = Vec::with_capacity(n_ue);
    for ue in &config.ues {
        let h = realize_channel(&spec.channel, &mut rng)?;
        if let Some(a) = ue.alpha {
            allocs.push((a, h));
        }
    }
    let noise = NoiseSpec::from_snr_db(snr_db)?;
    let y = synthesize_rx(&allocs, base, &noise, &mut rng)?;
    let label = config.label();
    Ok(PucchRecord {
        seed,
        snr_db: snr_db as f32,
        n_ue_true: label.len() as u8,
        n_cs: spec.n_cs,
        label,
        iq: iq_of(&y),
    })
}

/// Generates every record of `spec`, ordered by `(snr, n_ue, iter, alloc)`
/// in the order the lists are given. Each record has its own derived seed,
/// so the output does not depend on how many threads run the job.
pub fn generate_dataset(spec: &DatasetSpec) -> Result<Vec<PucchRecord>> {
    spec.validate()?;
    let base = base_sequence(spec.base)?;
    let per_snr = spec.n_ue_list.len() * spec.iters * spec.allocs_per_grid;
    let per_nue = spec.iters * spec.allocs_per_grid;
    (0..spec.record_count())
        .into_par_iter()
        .map(|i| {
            let snr = spec.snr_list[i / per_snr];
            let n_ue = spec.n_ue_list[(i % per_snr) / per_nue];
            let iter = (i % per_nue) / spec.allocs_per_grid;
            let alloc = i % spec.allocs_per_grid;
            generate_record(spec, &base, snr, n_ue, iter, alloc)
        })
        .collect()
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Split {
    pub train: Vec<PucchRecord>,
    pub val: Vec<PucchRecord>,
    pub test: Vec<PucchRecord>,
}

/// Shuffles and partitions records: `train_frac` of the data goes to
/// training, of which `val_frac_of_train` is held out for validation; the
/// rest is the test set.
pub fn train_test_split(
    records: &[PucchRecord],
    train_frac: f64,
    val_frac_of_train: f64,
    rng: &mut SimRng,
) -> Result<Split> {
    if records.is_empty() {
        return Err(Error::Config("cannot split an empty dataset".into()));
    }
    for (name, f) in [("train", train_frac), ("validation", val_frac_of_train)] {
        if !(f > 0.0 && f < 1.0) {
            return Err(Error::Config(format!("{name} fraction {f} outside (0, 1)")));
        }
    }
    let mut order: Vec<usize> = (0..records.len()).collect();
    rng.shuffle(&mut order);
    let n_train_total = (records.len() as f64 * train_frac).round() as usize;
    let n_val = (n_train_total as f64 * val_frac_of_train).round() as usize;
    let n_train = n_train_total - n_val;
    let pick = |ix: &[usize]| ix.iter().map(|&i| records[i]).collect::<Vec<_>>();
    Ok(Split {
        train: pick(&order[..n_train]),
        val: pick(&order[n_train..n_train_total]),
        test: pick(&order[n_train_total..]),
    })
}
