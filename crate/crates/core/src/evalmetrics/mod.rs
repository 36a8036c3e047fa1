//! Scoring for both receivers.
//!
//! At evaluation time the receiver is told an upper bound `n_tilde` on the
//! number of transmitting UEs, drawn uniformly from `[n, min(n + delta, 12)]`.
//! Predictions are scored by exact set match, per-shift binary confusion,
//! a true-vs-predicted UE-count matrix and a per-shift column chart.

mod report;

pub use report::{
    merge_reports, write_reports, ACCURACY_VS_NUE, ACCURACY_VS_SNR, ALPHA_CHART, FIG_ACCURACY_VS_NUE,
    FIG_ACCURACY_VS_SNR, MULTILABEL_CM, NUE_CM, REPORT_FILES,
};

use crate::dft_baseline::DftDecoder;
use crate::error::{Error, Result};
use crate::muxdatagen::{PucchRecord, MAX_UES};
use crate::neuralnet::{decide, Decision, Mode, ModelInput, ModelParams, INPUT_LEN, OUTPUT_LEN};
use crate::rng::{mix_seed, SimRng};
use crate::waveform::{AlphaSet, FreqSequence, N_SC};
use rayon::prelude::*;

/// Maximum offset between the true and the announced UE count.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct DeltaSpec {
    pub delta: u8,
}

/// Uniform integer in `[n_ue_true, min(n_ue_true + delta, 12)]`.
pub fn sample_ntilde(n_ue_true: u8, delta: u8, rng: &mut SimRng) -> u8 {
    let hi = (n_ue_true as usize + delta as usize).min(MAX_UES);
    let lo = (n_ue_true as usize).min(hi);
    rng.int_inclusive(lo, hi) as u8
}

fn check_lengths(preds: &[AlphaSet], labels: &[AlphaSet]) -> Result<()> {
    if preds.len() != labels.len() {
        return Err(Error::Config(format!(
            "{} predictions for {} labels",
            preds.len(),
            labels.len()
        )));
    }
    Ok(())
}

/// Fraction of instances whose predicted set equals the label exactly.
/// Returns 0 for empty input.
pub fn subset_accuracy(preds: &[AlphaSet], labels: &[AlphaSet]) -> Result<f64> {
    check_lengths(preds, labels)?;
    if preds.is_empty() {
        return Ok(0.0);
    }
    let hits = preds.iter().zip(labels).filter(|(p, l)| p == l).count();
    Ok(hits as f64 / preds.len() as f64)
}

/// Fraction of the `12 * n` individual shift decisions that are right.
pub fn per_label_accuracy(preds: &[AlphaSet], labels: &[AlphaSet]) -> Result<f64> {
    check_lengths(preds, labels)?;
    if preds.is_empty() {
        return Ok(0.0);
    }
    let wrong: u32 = preds
        .iter()
        .zip(labels)
        .map(|(p, l)| (p.mask() ^ l.mask()).count_ones())
        .sum();
    Ok(1.0 - wrong as f64 / (N_SC * preds.len()) as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct BinaryCounts {
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
    pub tn: u64,
}

impl BinaryCounts {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }
}

/// Per-shift binary confusion, one entry per cyclic shift index.
pub fn multilabel_confusion(preds: &[AlphaSet], labels: &[AlphaSet]) -> Result<[BinaryCounts; N_SC]> {
    check_lengths(preds, labels)?;
    let mut out = [BinaryCounts::default(); N_SC];
    for (p, l) in preds.iter().zip(labels) {
        for (a, c) in out.iter_mut().enumerate() {
            match (p.contains_index(a), l.contains_index(a)) {
                (true, true) => c.tp += 1,
                (true, false) => c.fp += 1,
                (false, true) => c.fn_ += 1,
                (false, false) => c.tn += 1,
            }
        }
    }
    Ok(out)
}

pub type NueMatrix = [[u64; MAX_UES + 1]; MAX_UES + 1];

/// `m[true count][predicted count]`.
pub fn nue_confusion(preds: &[AlphaSet], labels: &[AlphaSet]) -> Result<NueMatrix> {
    check_lengths(preds, labels)?;
    let mut m = [[0u64; MAX_UES + 1]; MAX_UES + 1];
    for (p, l) in preds.iter().zip(labels) {
        m[l.len()][p.len()] += 1;
    }
    Ok(m)
}

/// Mass above and below the diagonal of a UE-count matrix.
pub fn triangle_masses(m: &NueMatrix) -> (u64, u64) {
    let mut upper = 0;
    let mut lower = 0;
    for (t, row) in m.iter().enumerate() {
        for (p, &c) in row.iter().enumerate() {
            if p > t {
                upper += c;
            } else if p < t {
                lower += c;
            }
        }
    }
    (upper, lower)
}

/// One bar pair of the column chart. Percentages are `None` when their
/// denominator is zero.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ChartColumn {
    pub correct_pct: Option<f64>,
    pub incorrect_pct: Option<f64>,
    /// Instances where the shift was transmitted (for the No-Tx column:
    /// instances with an empty label).
    pub n: u64,
}

pub const NO_TX_COLUMN: usize = N_SC;

fn pct(num: u64, den: u64) -> Option<f64> {
    (den > 0).then(|| 100.0 * num as f64 / den as f64)
}

/// Columns 0..12 are the shifts: correct = TP/(TP+FN), incorrect =
/// FP/(FP+TN). Column 12 (No-Tx) covers empty labels: correct when the
/// prediction is empty too.
pub fn alpha_chart(preds: &[AlphaSet], labels: &[AlphaSet]) -> Result<[ChartColumn; N_SC + 1]> {
    let cm = multilabel_confusion(preds, labels)?;
    let mut out = [ChartColumn::default(); N_SC + 1];
    for (col, c) in out.iter_mut().zip(&cm) {
        *col = ChartColumn {
            correct_pct: pct(c.tp, c.tp + c.fn_),
            incorrect_pct: pct(c.fp, c.fp + c.tn),
            n: c.tp + c.fn_,
        };
    }
    let empty = labels.iter().filter(|l| l.is_empty()).count() as u64;
    let empty_hit = preds
        .iter()
        .zip(labels)
        .filter(|(p, l)| l.is_empty() && p.is_empty())
        .count() as u64;
    out[NO_TX_COLUMN] = ChartColumn {
        correct_pct: pct(empty_hit, empty),
        incorrect_pct: pct(empty - empty_hit, empty),
        n: empty,
    };
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub n: usize,
    pub subset_accuracy: f64,
    pub per_label_accuracy: f64,
    pub per_alpha: [BinaryCounts; N_SC],
    pub nue_confusion: NueMatrix,
    pub alpha_chart: [ChartColumn; N_SC + 1],
}

impl EvalReport {
    pub fn from_predictions(preds: &[AlphaSet], labels: &[AlphaSet]) -> Result<Self> {
        Ok(Self {
            n: preds.len(),
            subset_accuracy: subset_accuracy(preds, labels)?,
            per_label_accuracy: per_label_accuracy(preds, labels)?,
            per_alpha: multilabel_confusion(preds, labels)?,
            nue_confusion: nue_confusion(preds, labels)?,
            alpha_chart: alpha_chart(preds, labels)?,
        })
    }
}

/// Receiver under test.
#[derive(Debug, Clone, Copy)]
pub enum Decoder<'a> {
    Nn {
        model: &'a ModelParams<f32>,
        decision: Decision,
        meta_scale: f32,
    },
    Dft(DftDecoder),
}

impl Decoder<'_> {
    pub fn name(&self) -> &'static str {
        match self {
            Decoder::Nn { .. } => "nn",
            Decoder::Dft(_) => "dft",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GroupBy {
    Snr,
    NUe,
}

impl std::str::FromStr for GroupBy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "snr" => Ok(GroupBy::Snr),
            "n_ue" => Ok(GroupBy::NUe),
            other => Err(Error::Config(format!("unknown group key '{other}' (expected snr or n_ue)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GroupKey {
    Snr(f32),
    NUe(u8),
}

impl GroupKey {
    fn of(by: GroupBy, r: &PucchRecord) -> Self {
        match by {
            GroupBy::Snr => GroupKey::Snr(r.snr_db),
            GroupBy::NUe => GroupKey::NUe(r.n_ue_true),
        }
    }

    fn sort_key(&self) -> f64 {
        match *self {
            GroupKey::Snr(s) => s as f64,
            GroupKey::NUe(n) => n as f64,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroupReport {
    pub key: GroupKey,
    pub report: EvalReport,
}

/// Predictions for one evaluation pass, in record order. Instances skipped
/// by the protocol are `None`.
#[derive(Debug, Clone, PartialEq)]
pub struct Predictions {
    pub delta: u8,
    pub pred: Vec<Option<AlphaSet>>,
    pub ntilde: Vec<u8>,
}

/// Announced UE count for a record; depends only on the seeds and delta.
pub fn ntilde_for(record: &PucchRecord, delta: u8, eval_seed: u64) -> u8 {
    let mut rng = SimRng::new(mix_seed(eval_seed, &[record.seed, delta as u64]));
    sample_ntilde(record.n_ue_true, delta, &mut rng)
}

/// Runs the decoder over every record. With `delta = 0`, records without a
/// transmitting UE are skipped since the receiver would not run.
pub fn predict(
    records: &[PucchRecord],
    base: &FreqSequence,
    decoder: Decoder<'_>,
    delta: u8,
    eval_seed: u64,
) -> Result<Predictions> {
    const CHUNK: usize = 256;
    let ntilde: Vec<u8> = records.iter().map(|r| ntilde_for(r, delta, eval_seed)).collect();
    let skip = |r: &PucchRecord| delta == 0 && r.n_ue_true == 0;

    let pred: Vec<Option<AlphaSet>> = match decoder {
        Decoder::Dft(dft) => records
            .par_iter()
            .zip(ntilde.par_iter())
            .map(|(r, &n)| (!skip(r)).then(|| dft.decode(&r.rx(), base, n as usize)))
            .collect(),
        Decoder::Nn {
            model,
            decision,
            meta_scale,
        } => {
            if model.input_len() != INPUT_LEN || model.output_len() != OUTPUT_LEN {
                return Err(Error::Config(format!(
                    "model shape {:?} does not map 25 inputs to 12 outputs",
                    model.arch()
                )));
            }
            let chunks: Vec<Result<Vec<Option<AlphaSet>>>> = records
                .par_chunks(CHUNK)
                .zip(ntilde.par_chunks(CHUNK))
                .map(|(rs, ns)| {
                    let mut x = Vec::with_capacity(rs.len() * INPUT_LEN);
                    for (r, &n) in rs.iter().zip(ns) {
                        x.extend_from_slice(&ModelInput::from_record(r, n, meta_scale)?.x);
                    }
                    let probs = model.forward(&x, rs.len(), Mode::Infer)?.probabilities();
                    Ok(probs
                        .chunks_exact(OUTPUT_LEN)
                        .zip(rs.iter().zip(ns))
                        .map(|(p, (r, &n))| (!skip(r)).then(|| decide(p, decision, n)))
                        .collect())
                })
                .collect();
            let mut out = Vec::with_capacity(records.len());
            for c in chunks {
                out.extend(c?);
            }
            out
        }
    };
    Ok(Predictions { delta, pred, ntilde })
}

/// Groups scored predictions by SNR or UE count, keys ascending.
pub fn group_reports(records: &[PucchRecord], preds: &Predictions, by: GroupBy) -> Result<Vec<GroupReport>> {
    if preds.pred.len() != records.len() {
        return Err(Error::Config("predictions do not match the dataset".into()));
    }
    let mut keys: Vec<GroupKey> = Vec::new();
    for r in records {
        let k = GroupKey::of(by, r);
        if !keys.contains(&k) {
            keys.push(k);
        }
    }
    keys.sort_by(|a, b| a.sort_key().total_cmp(&b.sort_key()));
    let mut out = Vec::new();
    for key in keys {
        let (p, l): (Vec<AlphaSet>, Vec<AlphaSet>) = records
            .iter()
            .zip(&preds.pred)
            .filter(|(r, _)| GroupKey::of(by, r) == key)
            .filter_map(|(r, p)| p.map(|p| (p, r.label)))
            .unzip();
        if p.is_empty() {
            continue;
        }
        out.push(GroupReport {
            key,
            report: EvalReport::from_predictions(&p, &l)?,
        });
    }
    Ok(out)
}

/// Predicts and groups in one go.
pub fn run_sweep(
    records: &[PucchRecord],
    base: &FreqSequence,
    decoder: Decoder<'_>,
    delta: u8,
    group_by: GroupBy,
    eval_seed: u64,
) -> Result<Vec<GroupReport>> {
    let preds = predict(records, base, decoder, delta, eval_seed)?;
    group_reports(records, &preds, group_by)
}

/// Report over all non-skipped instances.
pub fn overall_report(records: &[PucchRecord], preds: &Predictions) -> Result<EvalReport> {
    let (p, l): (Vec<AlphaSet>, Vec<AlphaSet>) = records
        .iter()
        .zip(&preds.pred)
        .filter_map(|(r, p)| p.map(|p| (p, r.label)))
        .unzip();
    EvalReport::from_predictions(&p, &l)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::waveform::CyclicShiftIndex;

    fn set(ix: &[u8]) -> AlphaSet {
        ix.iter().map(|&i| CyclicShiftIndex::new(i).unwrap()).collect()
    }

    #[test]
    fn ntilde_examples() {
        let mut rng = SimRng::new(1);
        for _ in 0..1000 {
            assert_eq!(sample_ntilde(5, 0, &mut rng), 5);
        }
        let mut seen = [0usize; 13];
        for _ in 0..30_000 {
            seen[sample_ntilde(3, 2, &mut rng) as usize] += 1;
        }
        for (n, &c) in seen.iter().enumerate() {
            if (3..=5).contains(&n) {
                assert!((c as f64 / 10_000.0 - 1.0).abs() < 0.05, "{n}: {c}");
            } else {
                assert_eq!(c, 0);
            }
        }
        for _ in 0..1000 {
            assert!(matches!(sample_ntilde(11, 4, &mut rng), 11 | 12));
        }
    }

    #[test]
    fn ntilde_bounds_exhaustive() {
        let mut rng = SimRng::new(2);
        for n in 0..=12u8 {
            for delta in 0..=4u8 {
                for _ in 0..10_000 {
                    let t = sample_ntilde(n, delta, &mut rng);
                    assert!(t >= n && t <= 12 && t <= n + delta);
                }
            }
        }
    }

    #[test]
    fn subset_accuracy_cases() {
        assert_eq!(subset_accuracy(&[set(&[4, 6, 8])], &[set(&[4, 6, 8])]).unwrap(), 1.0);
        assert_eq!(subset_accuracy(&[set(&[])], &[set(&[])]).unwrap(), 1.0);
        assert_eq!(subset_accuracy(&[set(&[4])], &[set(&[4, 6])]).unwrap(), 0.0);
        assert!(subset_accuracy(&[set(&[4])], &[]).is_err());
        let pl = per_label_accuracy(&[set(&[4])], &[set(&[4, 6])]).unwrap();
        assert!((pl - 11.0 / 12.0).abs() < 1e-12);
    }

    #[test]
    fn confusion_perfect_and_empty() {
        let labels = vec![set(&[0, 3]), set(&[3]), set(&[]), set(&[11])];
        let cm = multilabel_confusion(&labels, &labels).unwrap();
        assert!(cm.iter().all(|c| c.fp == 0 && c.fn_ == 0 && c.total() == 4));
        assert_eq!(cm[3].tp, 2);

        let all_sr = vec![AlphaSet::from_mask(AlphaSet::FULL_MASK).unwrap(); 7];
        let empty = vec![AlphaSet::empty(); 7];
        let cm = multilabel_confusion(&empty, &all_sr).unwrap();
        assert!(cm.iter().all(|c| c.tp == 0 && c.fn_ == 7));

        let m = nue_confusion(&labels, &labels).unwrap();
        assert_eq!(m[2][2], 1);
        assert_eq!(m[1][1], 2);
        assert_eq!(m[0][0], 1);
        assert_eq!(m.iter().flatten().sum::<u64>(), 4);
        assert_eq!(triangle_masses(&m), (0, 0));
    }

    #[test]
    fn confusion_matches_brute_force() {
        let mut rng = SimRng::new(3);
        for _ in 0..50 {
            let n = 1 + rng.below(30);
            let preds: Vec<AlphaSet> = (0..n).map(|_| AlphaSet::from_mask(rng.below(4096) as u16).unwrap()).collect();
            let labels: Vec<AlphaSet> = (0..n).map(|_| AlphaSet::from_mask(rng.below(4096) as u16).unwrap()).collect();
            let cm = multilabel_confusion(&preds, &labels).unwrap();
            for a in 0..12u8 {
                let s = CyclicShiftIndex::new(a).unwrap();
                let mut want = BinaryCounts::default();
                for i in 0..n {
                    let (p, l) = (preds[i].iter().any(|x| x == s), labels[i].iter().any(|x| x == s));
                    match (p, l) {
                        (true, true) => want.tp += 1,
                        (true, false) => want.fp += 1,
                        (false, true) => want.fn_ += 1,
                        (false, false) => want.tn += 1,
                    }
                }
                assert_eq!(cm[a as usize], want);
            }
            let m = nue_confusion(&preds, &labels).unwrap();
            assert_eq!(m.iter().flatten().sum::<u64>(), n as u64);
        }
    }

    #[test]
    fn chart_hand_tally() {
        // 10 instances, hand-counted below.
        let labels = [
            set(&[0]),
            set(&[0]),
            set(&[0, 1]),
            set(&[1]),
            set(&[]),
            set(&[]),
            set(&[]),
            set(&[2]),
            set(&[2]),
            set(&[0]),
        ];
        let preds = [
            set(&[0]),
            set(&[]),
            set(&[0, 1]),
            set(&[0]),
            set(&[]),
            set(&[1]),
            set(&[]),
            set(&[2]),
            set(&[2, 3]),
            set(&[0]),
        ];
        let c = alpha_chart(&preds, &labels).unwrap();
        // alpha 0: transmitted in 4 of them, found in 3; predicted once in 6 absent.
        assert_eq!(c[0].n, 4);
        assert!((c[0].correct_pct.unwrap() - 75.0).abs() < 1e-12);
        assert!((c[0].incorrect_pct.unwrap() - 100.0 / 6.0).abs() < 1e-12);
        // alpha 1: transmitted 2, found 1; false alarm once in 8.
        assert!((c[1].correct_pct.unwrap() - 50.0).abs() < 1e-12);
        assert!((c[1].incorrect_pct.unwrap() - 12.5).abs() < 1e-12);
        // alpha 3: never transmitted, one false alarm in 10.
        assert_eq!(c[3].correct_pct, None);
        assert!((c[3].incorrect_pct.unwrap() - 10.0).abs() < 1e-12);
        // No-Tx: 3 empty labels, 2 predicted empty.
        assert_eq!(c[NO_TX_COLUMN].n, 3);
        assert!((c[NO_TX_COLUMN].correct_pct.unwrap() - 200.0 / 3.0).abs() < 1e-9);
        assert!((c[NO_TX_COLUMN].incorrect_pct.unwrap() - 100.0 / 3.0).abs() < 1e-9);

        let perfect = alpha_chart(&labels, &labels).unwrap();
        for col in perfect.iter() {
            if let Some(p) = col.correct_pct {
                assert_eq!(p, 100.0);
            }
            if let Some(p) = col.incorrect_pct {
                assert_eq!(p, 0.0);
            }
        }
    }

    #[test]
    fn group_key_parsing() {
        assert_eq!("snr".parse::<GroupBy>().unwrap(), GroupBy::Snr);
        assert_eq!("n_ue".parse::<GroupBy>().unwrap(), GroupBy::NUe);
        assert!("slot".parse::<GroupBy>().is_err());
    }
}
