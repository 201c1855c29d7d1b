//! Small shared DSP pieces: cached FFT plans, windows, power spectra.

use std::cell::RefCell;
use std::collections::HashMap;
use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

thread_local! {
    static PLANS: RefCell<HashMap<usize, Arc<dyn Fft<f64>>>> = RefCell::new(HashMap::new());
}

fn plan(n: usize) -> Arc<dyn Fft<f64>> {
    PLANS.with(|p| {
        p.borrow_mut()
            .entry(n)
            .or_insert_with(|| FftPlanner::new().plan_fft_forward(n))
            .clone()
    })
}

/// One-sided power spectrum `|X[k]|^2` for `k = 0..=fft_size/2` of a frame
/// zero-padded to `fft_size` points.
pub fn power_spectrum(frame: &[f64], fft_size: usize) -> Vec<f64> {
    assert!(fft_size.is_power_of_two(), "fft_size must be a power of two");
    assert!(frame.len() <= fft_size, "frame longer than fft_size");
    let mut buf: Vec<Complex<f64>> = frame
        .iter()
        .map(|&x| Complex::new(x, 0.0))
        .chain(std::iter::repeat(Complex::new(0.0, 0.0)))
        .take(fft_size)
        .collect();
    plan(fft_size).process(&mut buf);
    buf[..=fft_size / 2].iter().map(|c| c.norm_sqr()).collect()
}

/// Hamming window of length `n`.
pub fn hamming(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| 0.54 - 0.46 * (std::f64::consts::TAU * i as f64 / (n - 1) as f64).cos())
        .collect()
}

/// Orthonormal DCT-II of the input.
pub fn dct2_orthonormal(xs: &[f64]) -> Vec<f64> {
    let m = xs.len();
    let mut out = vec![0.0; m];
    for (k, o) in out.iter_mut().enumerate() {
        let mut acc = 0.0;
        for (n, &x) in xs.iter().enumerate() {
            acc += x * (std::f64::consts::PI * k as f64 * (n as f64 + 0.5) / m as f64).cos();
        }
        let scale = if k == 0 {
            (1.0 / m as f64).sqrt()
        } else {
            (2.0 / m as f64).sqrt()
        };
        *o = acc * scale;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dct_of_constant_is_pure_c0() {
        let out = dct2_orthonormal(&[3.0; 26]);
        assert!((out[0] - 3.0 * 26f64.sqrt()).abs() < 1e-12);
        for c in &out[1..] {
            assert!(c.abs() < 1e-12);
        }
    }

    #[test]
    fn power_spectrum_of_tone_peaks_at_bin() {
        // bin 32 of a 256-point FFT at 8 kHz is 1 kHz
        let frame: Vec<f64> = (0..256)
            .map(|n| (std::f64::consts::TAU * 32.0 * n as f64 / 256.0).cos())
            .collect();
        let ps = power_spectrum(&frame, 256);
        let peak = ps
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .unwrap()
            .0;
        assert_eq!(peak, 32);
    }

    #[test]
    fn hamming_is_symmetric() {
        let w = hamming(240);
        for i in 0..120 {
            assert!((w[i] - w[239 - i]).abs() < 1e-12);
        }
        assert!((w[0] - 0.08).abs() < 1e-12);
    }
}
