//! Conventional Format 0 receiver.
//!
//! Multiplying the received block by the conjugate base sequence leaves a
//! sum of phase ramps `h_m * exp(j*alpha_m*k)`; a 12-point DFT turns each
//! ramp into a peak at its shift index. The decoder keeps the `n_expected`
//! largest peaks.

use crate::waveform::{AlphaSet, CyclicShiftIndex, FreqSequence, N_SC};
use num_complex::Complex64;
use std::f64::consts::PI;

fn w12(m: usize) -> Complex64 {
    Complex64::from_polar(1.0, -2.0 * PI * (m % N_SC) as f64 / N_SC as f64)
}

/// `X(n) = sum_k z(k) * exp(-j*2*pi*n*k/12)`, unnormalized.
///
/// Computed as a 3 x 4 Cooley-Tukey split: 3-point transforms over
/// `z(4*a + b)`, twiddles `W^(b*c)`, then 4-point transforms over `b`.
pub fn dft12(z: &[Complex64; N_SC]) -> [Complex64; N_SC] {
    let mut stage = [[Complex64::new(0.0, 0.0); 4]; 3];
    for b in 0..4 {
        let (x0, x1, x2) = (z[b], z[4 + b], z[8 + b]);
        for c in 0..3 {
            // W_3^(a*c) = W_12^(4*a*c)
            let v = x0 + x1 * w12(4 * c) + x2 * w12(8 * c);
            stage[c][b] = v * w12(b * c);
        }
    }
    let mut out = [Complex64::new(0.0, 0.0); N_SC];
    for (c, row) in stage.iter().enumerate() {
        for d in 0..4 {
            // W_4^(b*d) = W_12^(3*b*d)
            out[c + 3 * d] = (0..4).map(|b| row[b] * w12(3 * b * d)).sum();
        }
    }
    out
}

/// Correlation magnitudes `|X(n)|` of `y` against every shift of `base`.
pub fn correlation_magnitudes(y: &FreqSequence, base: &FreqSequence) -> [f64; N_SC] {
    let mut z = [Complex64::new(0.0, 0.0); N_SC];
    for k in 0..N_SC {
        z[k] = y[k] * base[k].conj();
    }
    dft12(&z).map(|x| x.norm())
}

/// Indices of the `n` largest values; ties go to the lower index.
fn top_n(mags: &[f64; N_SC], n: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..N_SC).collect();
    order.sort_by(|&a, &b| mags[b].total_cmp(&mags[a]).then(a.cmp(&b)));
    order.truncate(n.min(N_SC));
    order
}

/// DFT receiver settings. With `threshold = None` (the default) exactly
/// `n_expected` peaks are returned; a threshold additionally drops peaks
/// whose magnitude falls below it.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct DftDecoder {
    pub threshold: Option<f64>,
}

impl DftDecoder {
    pub fn decode(&self, y: &FreqSequence, base: &FreqSequence, n_expected: usize) -> AlphaSet {
        let mags = correlation_magnitudes(y, base);
        top_n(&mags, n_expected)
            .into_iter()
            .filter(|&i| self.threshold.map_or(true, |t| mags[i] >= t))
            .map(|i| CyclicShiftIndex::wrapping(i as i64))
            .collect()
    }
}

/// Top-`n_expected` peak decoder without a power threshold.
pub fn dft_decode(y: &FreqSequence, base: &FreqSequence, n_expected: usize) -> AlphaSet {
    DftDecoder::default().decode(y, base, n_expected)
}

/// UCI shift `m_cs = (alpha_idx - m0 - n_cs) mod 12`.
pub fn recover_mcs(alpha_idx: CyclicShiftIndex, m0: u8, n_cs: u8) -> u8 {
    (alpha_idx.index() as i64 - m0 as i64 - n_cs as i64).rem_euclid(N_SC as i64) as u8
}
