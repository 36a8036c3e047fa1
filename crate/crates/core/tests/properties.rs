use proptest::prelude::*;
use pucch0::channel::{synthesize_rx, ChannelRealization, NoiseSpec};
use pucch0::dft_baseline::{dft_decode, recover_mcs};
use pucch0::evalmetrics::{
    alpha_chart, multilabel_confusion, nue_confusion, sample_ntilde, subset_accuracy, EvalReport, NO_TX_COLUMN,
};
use pucch0::muxdatagen::{sample_mux_config, PayloadPolicy};
use pucch0::rng::SimRng;
use pucch0::waveform::{
    alpha_index, apply_shift, base_sequence, AlphaSet, BaseSequenceId, CyclicShiftIndex, ShiftContext,
};

fn noiseless_rx(seed: u64, n_ue: usize, u: u8, n_cs: u8) -> (AlphaSet, pucch0::waveform::FreqSequence, pucch0::waveform::FreqSequence) {
    let mut rng = SimRng::new(seed);
    let cfg = sample_mux_config(n_ue, n_cs, &PayloadPolicy::default(), &mut rng).unwrap();
    let base = base_sequence(BaseSequenceId::new(u).unwrap()).unwrap();
    let allocs: Vec<_> = cfg
        .ues
        .iter()
        .filter_map(|ue| ue.alpha.map(|a| (a, ChannelRealization::unit())))
        .collect();
    let y = synthesize_rx(&allocs, &base, &NoiseSpec::noiseless(), &mut rng).unwrap();
    (cfg.label(), y, base)
}

fn arb_set() -> impl Strategy<Value = AlphaSet> {
    (0u16..4096).prop_map(|m| AlphaSet::from_mask(m).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]

    #[test]
    fn sampled_configs_are_feasible(seed in any::<u64>(), n_ue in 0usize..=12, n_cs in 0u8..12) {
        let mut rng = SimRng::new(seed);
        let cfg = sample_mux_config(n_ue, n_cs, &PayloadPolicy::default(), &mut rng).unwrap();
        prop_assert_eq!(cfg.ues.len(), n_ue);
        prop_assert!(cfg.validate().is_ok());
        let mut used = 0u16;
        for ue in &cfg.ues {
            prop_assert_eq!(used & ue.reserved_mask(), 0);
            used |= ue.reserved_mask();
        }
        prop_assert_eq!(cfg.label().len(), cfg.transmitting());
    }

    #[test]
    fn noiseless_dft_recovers_every_label(seed in any::<u64>(), n_ue in 0usize..=12, u in 0u8..30, n_cs in 0u8..12) {
        let (label, y, base) = noiseless_rx(seed, n_ue, u, n_cs);
        prop_assert_eq!(dft_decode(&y, &base, label.len()), label);
    }

    #[test]
    fn dft_with_too_large_ntilde_is_wrong(seed in any::<u64>(), n_ue in 0usize..12, extra in 1usize..=4) {
        let (label, y, base) = noiseless_rx(seed, n_ue, 0, 0);
        let pred = dft_decode(&y, &base, label.len() + extra);
        prop_assert_ne!(pred, label);
    }

    #[test]
    fn shift_composition(u in 0u8..30, a in 0u8..12, b in 0u8..12) {
        let base = base_sequence(BaseSequenceId::new(u).unwrap()).unwrap();
        let sa = CyclicShiftIndex::new(a).unwrap();
        let sb = CyclicShiftIndex::new(b).unwrap();
        let twice = apply_shift(&apply_shift(&base, sa), sb);
        let once = apply_shift(&base, CyclicShiftIndex::wrapping(a as i64 + b as i64));
        for k in 0..12 {
            prop_assert!((twice[k] - once[k]).norm() < 1e-12);
        }
    }

    #[test]
    fn mcs_round_trip(m0 in 0u8..12, n_cs in 0u8..12, m in 0u8..12) {
        let ctx = ShiftContext::new(m0, n_cs).unwrap();
        prop_assert_eq!(recover_mcs(alpha_index(ctx, m), m0, n_cs), m);
    }

    #[test]
    fn ntilde_stays_in_range(seed in any::<u64>(), n in 0u8..=12, delta in 0u8..=8) {
        let mut rng = SimRng::new(seed);
        for _ in 0..32 {
            let t = sample_ntilde(n, delta, &mut rng);
            prop_assert!(t >= n && t <= 12 && t as usize <= n as usize + delta as usize);
        }
    }

    #[test]
    fn report_totals_are_conserved(pairs in prop::collection::vec((arb_set(), arb_set()), 0..60)) {
        let (preds, labels): (Vec<AlphaSet>, Vec<AlphaSet>) = pairs.into_iter().unzip();
        let n = preds.len() as u64;
        let cm = multilabel_confusion(&preds, &labels).unwrap();
        prop_assert!(cm.iter().all(|c| c.total() == n));
        let m = nue_confusion(&preds, &labels).unwrap();
        prop_assert_eq!(m.iter().flatten().sum::<u64>(), n);
        for (t, row) in m.iter().enumerate() {
            let want = labels.iter().filter(|l| l.len() == t).count() as u64;
            prop_assert_eq!(row.iter().sum::<u64>(), want);
        }
        let chart = alpha_chart(&preds, &labels).unwrap();
        for (a, col) in chart.iter().take(12).enumerate() {
            prop_assert_eq!(col.n, cm[a].tp + cm[a].fn_);
            for p in [col.correct_pct, col.incorrect_pct].into_iter().flatten() {
                prop_assert!((0.0..=100.0).contains(&p));
            }
        }
        let empties = labels.iter().filter(|l| l.is_empty()).count() as u64;
        prop_assert_eq!(chart[NO_TX_COLUMN].n, empties);
        let acc = subset_accuracy(&preds, &labels).unwrap();
        let diag: u64 = preds.iter().zip(&labels).filter(|(p, l)| p == l).count() as u64;
        if n > 0 {
            prop_assert!((acc - diag as f64 / n as f64).abs() < 1e-12);
            let r = EvalReport::from_predictions(&preds, &labels).unwrap();
            prop_assert_eq!(r.n as u64, n);
        }
    }
}

#[test]
fn noiseless_oracle_covers_every_ue_count() {
    for n_ue in 0..=12 {
        for seed in 0..200 {
            let (label, y, base) = noiseless_rx(seed * 13 + n_ue as u64, n_ue, 0, 0);
            assert_eq!(label.len(), n_ue);
            assert_eq!(dft_decode(&y, &base, n_ue), label);
        }
    }
}
