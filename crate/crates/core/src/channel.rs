//! Per-resource-block fading channels and multi-user received-signal
//! synthesis.
//!
//! The received resource block is
//!
//! ```text
//! y(k) = sum_m h_m(k) * exp(j*alpha_m*k) * r(k) + w(k),   w(k) ~ CN(0, sigma2)
//! ```
//!
//! SNR is per UE and per subcarrier: each UE contributes unit average power
//! (unit-modulus sequence, `E|h|^2 = 1`), so `sigma2 = 10^(-snr_db/10)` and
//! the aggregate received power grows with the number of UEs.

use crate::error::{Error, Result};
use crate::rng::SimRng;
use crate::waveform::{apply_shift, CyclicShiftIndex, FreqSequence, N_SC};
use num_complex::Complex64;
use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

#[derive(Debug, Clone, PartialEq)]
pub enum ChannelModel {
    /// `h(k) = 1`.
    AwgnOnly,
    /// One `CN(0, 1)` gain shared by all subcarriers.
    FlatRayleigh,
    /// Independent `CN(0, p_t)` taps at integer sample delays `d_t`;
    /// `h(k) = sum_t g_t * exp(-j*2*pi*k*d_t/12)`.
    TappedDelay {
        tap_powers: Vec<f64>,
        tap_delays: Vec<usize>,
    },
}

impl ChannelModel {
    /// Three taps with exponentially decaying power at delays 0, 1 and 2.
    /// The closest desk-scale stand-in for a delay-spread profile such as
    /// TDL-C.
    pub fn tdl_lite() -> Self {
        let raw: Vec<f64> = (0..3).map(|t| (-(t as f64)).exp()).collect();
        let total: f64 = raw.iter().sum();
        ChannelModel::TappedDelay {
            tap_powers: raw.iter().map(|p| p / total).collect(),
            tap_delays: vec![0, 1, 2],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let ChannelModel::TappedDelay {
            tap_powers,
            tap_delays,
        } = self
        {
            if tap_powers.is_empty() {
                return Err(Error::Config("tapped-delay model has no taps".into()));
            }
            if tap_powers.len() != tap_delays.len() {
                return Err(Error::Config(format!(
                    "{} tap powers but {} tap delays",
                    tap_powers.len(),
                    tap_delays.len()
                )));
            }
            if tap_powers.iter().any(|&p| !(p > 0.0 && p.is_finite())) {
                return Err(Error::Config("tap powers must be positive".into()));
            }
            let total: f64 = tap_powers.iter().sum();
            if (total - 1.0).abs() > 1e-9 {
                return Err(Error::Config(format!("tap powers sum to {total}, expected 1")));
            }
        }
        Ok(())
    }
}

impl fmt::Display for ChannelModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ChannelModel::AwgnOnly => f.write_str("awgn"),
            ChannelModel::FlatRayleigh => f.write_str("rayleigh"),
            m if *m == ChannelModel::tdl_lite() => f.write_str("tdl-lite"),
            ChannelModel::TappedDelay { .. } => f.write_str("tapped-delay"),
        }
    }
}

impl FromStr for ChannelModel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "awgn" => Ok(ChannelModel::AwgnOnly),
            "rayleigh" => Ok(ChannelModel::FlatRayleigh),
            "tdl-lite" => Ok(ChannelModel::tdl_lite()),
            other => Err(Error::Config(format!(
                "unknown channel '{other}' (expected awgn, rayleigh or tdl-lite)"
            ))),
        }
    }
}

/// Per-subcarrier complex gains of one UE's link.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelRealization {
    pub h: [Complex64; N_SC],
}

impl ChannelRealization {
    pub fn unit() -> Self {
        Self {
            h: [Complex64::new(1.0, 0.0); N_SC],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseSpec {
    snr_db: f64,
    sigma2: f64,
}

impl NoiseSpec {
    /// `snr_db = +inf` gives a noiseless spec.
    pub fn from_snr_db(snr_db: f64) -> Result<Self> {
        if snr_db.is_nan() || snr_db == f64::NEG_INFINITY {
            return Err(Error::Domain(format!("invalid SNR {snr_db} dB")));
        }
        Ok(Self {
            snr_db,
            sigma2: snr_to_sigma2(snr_db),
        })
    }

    pub fn noiseless() -> Self {
        Self {
            snr_db: f64::INFINITY,
            sigma2: 0.0,
        }
    }

    pub fn snr_db(&self) -> f64 {
        self.snr_db
    }

    pub fn sigma2(&self) -> f64 {
        self.sigma2
    }
}

pub fn snr_to_sigma2(snr_db: f64) -> f64 {
    10f64.powf(-snr_db / 10.0)
}

pub fn realize_channel(model: &ChannelModel, rng: &mut SimRng) -> Result<ChannelRealization> {
    model.validate()?;
    let h = match model {
        ChannelModel::AwgnOnly => return Ok(ChannelRealization::unit()),
        ChannelModel::FlatRayleigh => [rng.complex_gaussian(1.0); N_SC],
        ChannelModel::TappedDelay {
            tap_powers,
            tap_delays,
        } => {
            let gains: Vec<Complex64> = tap_powers
                .iter()
                .map(|&p| rng.complex_gaussian(p))
                .collect();
            let mut h = [Complex64::new(0.0, 0.0); N_SC];
            for (k, hk) in h.iter_mut().enumerate() {
                for (g, &d) in gains.iter().zip(tap_delays) {
                    let phase = -2.0 * PI * ((k * d) % N_SC) as f64 / N_SC as f64;
                    *hk += g * Complex64::from_polar(1.0, phase);
                }
            }
            h
        }
    };
    Ok(ChannelRealization { h })
}

/// Superposes the shifted, faded copies of `base` and adds complex AWGN.
///
/// With no allocations the result is pure noise. Duplicate shift indices are
/// rejected since two UEs on one shift cannot be separated.
pub fn synthesize_rx(
    allocs: &[(CyclicShiftIndex, ChannelRealization)],
    base: &FreqSequence,
    noise: &NoiseSpec,
    rng: &mut SimRng,
) -> Result<FreqSequence> {
    if allocs.len() > N_SC {
        return Err(Error::Config(format!("{} UEs exceed 12", allocs.len())));
    }
    let mut seen = 0u16;
    for (s, _) in allocs {
        let bit = 1u16 << s.index();
        if seen & bit != 0 {
            return Err(Error::Config(format!("duplicate cyclic shift {s}")));
        }
        seen |= bit;
    }

    let mut y = [Complex64::new(0.0, 0.0); N_SC];
    for (s, ch) in allocs {
        let tx = apply_shift(base, *s);
        for k in 0..N_SC {
            y[k] += ch.h[k] * tx[k];
        }
    }
    if noise.sigma2() > 0.0 {
        for yk in y.iter_mut() {
            *yk += rng.complex_gaussian(noise.sigma2());
        }
    }
    Ok(FreqSequence(y))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::waveform::{base_sequence, BaseSequenceId};

    fn shift(i: u8) -> CyclicShiftIndex {
        CyclicShiftIndex::new(i).unwrap()
    }

    #[test]
    fn sigma2_values() {
        assert_eq!(snr_to_sigma2(0.0), 1.0);
        assert!((snr_to_sigma2(10.0) - 0.1).abs() < 1e-15);
        assert!((snr_to_sigma2(20.0) - 0.01).abs() < 1e-15);
        assert_eq!(NoiseSpec::from_snr_db(f64::INFINITY).unwrap().sigma2(), 0.0);
        assert!(NoiseSpec::from_snr_db(f64::NAN).is_err());
    }

    #[test]
    fn awgn_only_is_unit() {
        let mut rng = SimRng::new(1);
        let r = realize_channel(&ChannelModel::AwgnOnly, &mut rng).unwrap();
        assert_eq!(r, ChannelRealization::unit());
    }

    #[test]
    fn flat_rayleigh_power_and_flatness() {
        let mut rng = SimRng::new(2);
        let n = 1_000_000;
        let mut acc = 0.0;
        for _ in 0..n {
            let r = realize_channel(&ChannelModel::FlatRayleigh, &mut rng).unwrap();
            assert!(r.h.iter().all(|&x| x == r.h[0]));
            acc += r.h[0].norm_sqr();
        }
        let mean = acc / n as f64;
        assert!((mean - 1.0).abs() < 0.01, "mean |h|^2 = {mean}");
    }

    #[test]
    fn flat_rayleigh_phase_is_uniform() {
        // One-sample Kolmogorov-Smirnov against U[0, 2pi).
        let mut rng = SimRng::new(3);
        let n = 100_000;
        let mut phases: Vec<f64> = (0..n)
            .map(|_| {
                let h = realize_channel(&ChannelModel::FlatRayleigh, &mut rng).unwrap().h[0];
                h.arg().rem_euclid(2.0 * PI) / (2.0 * PI)
            })
            .collect();
        phases.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let d = phases
            .iter()
            .enumerate()
            .map(|(i, &f)| {
                let lo = i as f64 / n as f64;
                let hi = (i + 1) as f64 / n as f64;
                (f - lo).abs().max((hi - f).abs())
            })
            .fold(0.0, f64::max);
        let critical = 1.628 / (n as f64).sqrt();
        assert!(d < critical, "KS D = {d}, critical {critical}");
    }

    #[test]
    fn single_tap_delay_zero_is_flat() {
        let model = ChannelModel::TappedDelay {
            tap_powers: vec![1.0],
            tap_delays: vec![0],
        };
        let mut a = SimRng::new(4);
        let mut b = SimRng::new(4);
        let r = realize_channel(&model, &mut a).unwrap();
        let flat = realize_channel(&ChannelModel::FlatRayleigh, &mut b).unwrap();
        for k in 0..N_SC {
            assert!((r.h[k] - flat.h[0]).norm() < 1e-15);
        }
    }

    #[test]
    fn tapped_delay_validation() {
        let mut rng = SimRng::new(5);
        let empty = ChannelModel::TappedDelay {
            tap_powers: vec![],
            tap_delays: vec![],
        };
        assert!(matches!(realize_channel(&empty, &mut rng), Err(Error::Config(_))));
        let unnormalized = ChannelModel::TappedDelay {
            tap_powers: vec![0.5, 0.6],
            tap_delays: vec![0, 1],
        };
        assert!(realize_channel(&unnormalized, &mut rng).is_err());
        assert!(ChannelModel::tdl_lite().validate().is_ok());
    }

    #[test]
    fn tdl_lite_has_unit_average_power() {
        let mut rng = SimRng::new(6);
        let n = 200_000;
        let mut acc = [0.0; N_SC];
        for _ in 0..n {
            let r = realize_channel(&ChannelModel::tdl_lite(), &mut rng).unwrap();
            for k in 0..N_SC {
                acc[k] += r.h[k].norm_sqr() / n as f64;
            }
        }
        for p in acc {
            assert!((p - 1.0).abs() < 0.02, "{p}");
        }
    }

    #[test]
    fn noiseless_synthesis() {
        let base = base_sequence(BaseSequenceId::default()).unwrap();
        let mut rng = SimRng::new(7);
        let y = synthesize_rx(&[], &base, &NoiseSpec::noiseless(), &mut rng).unwrap();
        assert_eq!(y, FreqSequence::zeros());

        let y = synthesize_rx(
            &[(shift(4), ChannelRealization::unit())],
            &base,
            &NoiseSpec::noiseless(),
            &mut rng,
        )
        .unwrap();
        assert_eq!(y, apply_shift(&base, shift(4)));
    }

    #[test]
    fn duplicate_shifts_rejected() {
        let base = base_sequence(BaseSequenceId::default()).unwrap();
        let mut rng = SimRng::new(8);
        let u = ChannelRealization::unit();
        let r = synthesize_rx(&[(shift(3), u), (shift(3), u)], &base, &NoiseSpec::noiseless(), &mut rng);
        assert!(matches!(r, Err(Error::Config(_))));
    }

    #[test]
    fn noiseless_synthesis_is_linear() {
        let base = base_sequence(BaseSequenceId::new(11).unwrap()).unwrap();
        let mut rng = SimRng::new(9);
        let u = ChannelRealization::unit();
        let a: Vec<_> = [0u8, 5, 7].iter().map(|&i| (shift(i), u)).collect();
        let b: Vec<_> = [2u8, 9].iter().map(|&i| (shift(i), u)).collect();
        let both: Vec<_> = a.iter().chain(b.iter()).copied().collect();
        let n = NoiseSpec::noiseless();
        let ya = synthesize_rx(&a, &base, &n, &mut rng).unwrap();
        let yb = synthesize_rx(&b, &base, &n, &mut rng).unwrap();
        let yab = synthesize_rx(&both, &base, &n, &mut rng).unwrap();
        for k in 0..N_SC {
            assert!((yab[k] - ya[k] - yb[k]).norm() < 1e-12);
        }
    }

    #[test]
    fn noise_variance_matches() {
        let base = base_sequence(BaseSequenceId::default()).unwrap();
        let mut rng = SimRng::new(10);
        let noise = NoiseSpec::from_snr_db(7.0).unwrap();
        let records = 1_000_000 / N_SC + 1;
        let mut acc = 0.0;
        let mut count = 0;
        for _ in 0..records {
            let y = synthesize_rx(&[], &base, &noise, &mut rng).unwrap();
            for k in 0..N_SC {
                acc += y[k].norm_sqr();
                count += 1;
            }
        }
        let var = acc / count as f64;
        assert!((var / noise.sigma2() - 1.0).abs() < 0.01, "{var} vs {}", noise.sigma2());
    }

    #[test]
    fn noise_samples_uncorrelated_across_subcarriers() {
        let base = base_sequence(BaseSequenceId::default()).unwrap();
        let mut rng = SimRng::new(12);
        let noise = NoiseSpec::from_snr_db(0.0).unwrap();
        let n = 100_000;
        let mut cov = [[Complex64::new(0.0, 0.0); N_SC]; N_SC];
        for _ in 0..n {
            let y = synthesize_rx(&[], &base, &noise, &mut rng).unwrap();
            for i in 0..N_SC {
                for j in 0..N_SC {
                    cov[i][j] += y[i] * y[j].conj() / n as f64;
                }
            }
        }
        for i in 0..N_SC {
            assert!((cov[i][i].re - 1.0).abs() < 0.02);
            for j in 0..N_SC {
                if i != j {
                    assert!(cov[i][j].norm() < 0.01, "cov[{i}][{j}] = {}", cov[i][j]);
                }
            }
        }
    }
}
