//! Toy LPC vocoder at 3.2 kbit/s: the low-rate covert codec.
//!
//! Each 20 ms frame is analyzed independently (no cross-frame state):
//! order-10 autocorrelation LPC via Levinson-Durbin, LSF conversion with
//! 5-bit scalar quantization per coefficient, voiced/unvoiced decision from
//! zero crossings and energy, 6-bit pitch index over lags 32..=95, 5-bit log
//! gain. The 64-bit frame starts with a fixed 2-bit sync pattern, which is
//! the structure a warden's codec validity test can check.
//!
//! Frame layout (MSB first): sync(2)=0b10, voiced(1), pitch(6), gain(5),
//! ten 5-bit LSF indices = 64 bits.

use super::CodecError;
use crate::dsp;

pub const FRAME_SAMPLES: usize = 160;
pub const FRAME_BYTES: usize = 8;
pub const LPC_ORDER: usize = 10;
pub const SYNC_VALUE: u8 = 0b10;

const PITCH_MIN: usize = 32;
const PITCH_MAX: usize = 100;
const LSF_LEVELS: u32 = 32;
const GAIN_LOG2_MAX: f64 = 15.0;
const MIN_LSF_SEP: f64 = 0.015;

/// Bit widths of the frame fields, MSB first.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FrameLayout {
    pub sync_bits: u32,
    pub sync_value: u8,
    pub voiced_bits: u32,
    pub pitch_bits: u32,
    pub gain_bits: u32,
    pub lsf_bits: u32,
}

impl FrameLayout {
    pub fn total_bits(&self) -> u32 {
        self.sync_bits + self.voiced_bits + self.pitch_bits + self.gain_bits + self.lsf_bits
    }
}

pub fn frame_layout() -> FrameLayout {
    FrameLayout {
        sync_bits: 2,
        sync_value: SYNC_VALUE,
        voiced_bits: 1,
        pitch_bits: 6,
        gain_bits: 5,
        lsf_bits: 50,
    }
}

/// True when the payload's first two bits carry the sync pattern.
pub fn frame_sync_ok(payload: &[u8]) -> bool {
    !payload.is_empty() && (payload[0] >> 6) == SYNC_VALUE
}

pub fn encode_frame(frame: &[i16]) -> [u8; FRAME_BYTES] {
    assert_eq!(frame.len(), FRAME_SAMPLES);
    let x: Vec<f64> = frame.iter().map(|&s| s as f64).collect();
    let rms = (x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64).sqrt();

    let gain_idx = quantize_gain(rms);
    let (voiced, pitch_idx) = if gain_idx == 0 {
        (false, 0)
    } else {
        let zcr = zero_crossing_rate(frame);
        let voiced = zcr < 0.28 && rms > 50.0;
        (voiced, quantize_pitch(best_pitch_lag(&x)))
    };

    let lsfs = if gain_idx == 0 {
        default_lsfs()
    } else {
        analyze_lsfs(&x)
    };
    let mut lsf_indices = [0u32; LPC_ORDER];
    for (i, &f) in lsfs.iter().enumerate() {
        lsf_indices[i] = quantize_lsf(f);
    }

    let mut word: u64 = 0;
    let mut push = |val: u64, bits: u32| {
        word = (word << bits) | (val & ((1u64 << bits) - 1));
    };
    push(SYNC_VALUE as u64, 2);
    push(voiced as u64, 1);
    push(pitch_idx as u64, 6);
    push(gain_idx as u64, 5);
    for idx in lsf_indices {
        push(idx as u64, 5);
    }
    word.to_be_bytes()
}

pub fn decode_frame(payload: &[u8]) -> Result<[i16; FRAME_SAMPLES], CodecError> {
    if payload.len() != FRAME_BYTES {
        return Err(CodecError::WrongPayloadLength {
            expected: FRAME_BYTES,
            got: payload.len(),
        });
    }
    let word = u64::from_be_bytes(payload.try_into().unwrap());
    let mut remaining = 64u32;
    let mut pull = |bits: u32| -> u64 {
        remaining -= bits;
        (word >> remaining) & ((1u64 << bits) - 1)
    };
    let sync = pull(2) as u8;
    if sync != SYNC_VALUE {
        return Err(CodecError::InvalidFrame(format!(
            "bad sync pattern {sync:#04b}"
        )));
    }
    let voiced = pull(1) != 0;
    let pitch_idx = pull(6) as u32;
    let gain_idx = pull(5) as u32;
    let mut lsfs = [0.0f64; LPC_ORDER];
    for f in lsfs.iter_mut() {
        *f = dequantize_lsf(pull(5) as u32);
    }

    let mut out = [0i16; FRAME_SAMPLES];
    if gain_idx == 0 {
        return Ok(out);
    }
    let target_rms = dequantize_gain(gain_idx);

    stabilize_lsfs(&mut lsfs);
    let a = lsf_to_lpc(&lsfs);

    // excitation at unit scale; the output is rescaled to the coded gain
    let mut exc = [0.0f64; FRAME_SAMPLES];
    if voiced {
        let lag = (PITCH_MIN + pitch_idx as usize).min(PITCH_MAX);
        let mut pos = 0;
        while pos < FRAME_SAMPLES {
            exc[pos] = (lag as f64).sqrt();
            pos += lag;
        }
    } else {
        let mut seed = word | 1;
        for e in exc.iter_mut() {
            *e = 2.0 * xorshift_unit(&mut seed) - 1.0;
        }
    }

    let mut y = [0.0f64; FRAME_SAMPLES];
    for n in 0..FRAME_SAMPLES {
        let mut v = exc[n];
        for k in 1..=LPC_ORDER {
            if n >= k {
                v -= a[k] * y[n - k];
            }
        }
        y[n] = v;
    }

    let rms = (y.iter().map(|v| v * v).sum::<f64>() / y.len() as f64).sqrt();
    let g = if rms > 0.0 { target_rms / rms } else { 0.0 };
    for (o, v) in out.iter_mut().zip(y.iter()) {
        *o = ((v * g).round() as i32).clamp(-32768, 32767) as i16;
    }
    Ok(out)
}

fn xorshift_unit(s: &mut u64) -> f64 {
    let mut x = *s;
    x ^= x << 13;
    x ^= x >> 7;
    x ^= x << 17;
    *s = x;
    (x >> 11) as f64 / (1u64 << 53) as f64
}

fn zero_crossing_rate(frame: &[i16]) -> f64 {
    let crossings = frame
        .windows(2)
        .filter(|w| (w[0] >= 0) != (w[1] >= 0))
        .count();
    crossings as f64 / (frame.len() - 1) as f64
}

fn best_pitch_lag(x: &[f64]) -> usize {
    let mut best = PITCH_MIN;
    let mut best_r = f64::NEG_INFINITY;
    for lag in PITCH_MIN..=PITCH_MAX {
        let mut r = 0.0;
        for n in lag..x.len() {
            r += x[n] * x[n - lag];
        }
        if r > best_r {
            best_r = r;
            best = lag;
        }
    }
    best
}

fn quantize_pitch(lag: usize) -> u32 {
    (lag.saturating_sub(PITCH_MIN)).min(63) as u32
}

fn quantize_gain(rms: f64) -> u32 {
    if rms < 1.0 {
        return 0;
    }
    let idx = (rms.log2() / GAIN_LOG2_MAX * 31.0).round();
    (idx as i64).clamp(1, 31) as u32
}

fn dequantize_gain(idx: u32) -> f64 {
    if idx == 0 {
        0.0
    } else {
        (idx as f64 / 31.0 * GAIN_LOG2_MAX).exp2()
    }
}

fn quantize_lsf(f: f64) -> u32 {
    let idx = (f * (LSF_LEVELS + 1) as f64 / std::f64::consts::PI - 1.0).round();
    (idx as i64).clamp(0, LSF_LEVELS as i64 - 1) as u32
}

fn dequantize_lsf(idx: u32) -> f64 {
    (idx + 1) as f64 * std::f64::consts::PI / (LSF_LEVELS + 1) as f64
}

fn default_lsfs() -> [f64; LPC_ORDER] {
    let mut out = [0.0; LPC_ORDER];
    for (i, o) in out.iter_mut().enumerate() {
        *o = (i + 1) as f64 * std::f64::consts::PI / (LPC_ORDER + 1) as f64;
    }
    out
}

/// Force strictly increasing LSFs with a minimum separation; keeps the
/// synthesis filter minimum phase after coarse quantization.
fn stabilize_lsfs(lsfs: &mut [f64; LPC_ORDER]) {
    lsfs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut prev = 0.0;
    for f in lsfs.iter_mut() {
        if *f < prev + MIN_LSF_SEP {
            *f = prev + MIN_LSF_SEP;
        }
        prev = *f;
    }
    let top = std::f64::consts::PI - MIN_LSF_SEP;
    let mut next = top;
    for f in lsfs.iter_mut().rev() {
        if *f > next {
            *f = next;
        }
        next = *f - MIN_LSF_SEP;
    }
}

fn analyze_lsfs(x: &[f64]) -> [f64; LPC_ORDER] {
    let w = dsp::hamming(x.len());
    let xw: Vec<f64> = x.iter().zip(&w).map(|(v, w)| v * w).collect();
    let mut r = [0.0f64; LPC_ORDER + 1];
    for (lag, rl) in r.iter_mut().enumerate() {
        for n in lag..xw.len() {
            *rl += xw[n] * xw[n - lag];
        }
    }
    if r[0] <= 0.0 {
        return default_lsfs();
    }
    r[0] *= 1.0001;

    let a = match levinson(&r) {
        Some(a) => a,
        None => return default_lsfs(),
    };
    match lpc_to_lsf(&a) {
        Some(l) => l,
        None => default_lsfs(),
    }
}

/// Levinson-Durbin recursion; returns `a` with `a[0] = 1` such that the
/// analysis filter is `A(z) = 1 + sum a[k] z^-k`.
fn levinson(r: &[f64; LPC_ORDER + 1]) -> Option<[f64; LPC_ORDER + 1]> {
    let mut a = [0.0f64; LPC_ORDER + 1];
    a[0] = 1.0;
    let mut e = r[0];
    for i in 1..=LPC_ORDER {
        if e <= 0.0 {
            return None;
        }
        let mut acc = r[i];
        for j in 1..i {
            acc += a[j] * r[i - j];
        }
        let k = -acc / e;
        if k.abs() >= 1.0 {
            return None;
        }
        let mut new_a = a;
        for j in 1..i {
            new_a[j] = a[j] + k * a[i - j];
        }
        new_a[i] = k;
        a = new_a;
        e *= 1.0 - k * k;
    }
    Some(a)
}

/// Evaluate the symmetric half-polynomial in the Chebyshev basis at
/// `x = cos(w)`.
fn cheb_eval(coef: &[f64; LPC_ORDER / 2 + 1], x: f64) -> f64 {
    let m = LPC_ORDER / 2;
    let mut t = [0.0f64; LPC_ORDER / 2 + 1];
    t[0] = 1.0;
    t[1] = x;
    for i in 2..=m {
        t[i] = 2.0 * x * t[i - 1] - t[i - 2];
    }
    (0..=m).map(|i| coef[m - i] * t[i]).sum()
}

/// Convert LPC to line spectral frequencies by grid search plus bisection
/// over the Chebyshev-transformed sum/difference polynomials.
fn lpc_to_lsf(a: &[f64; LPC_ORDER + 1]) -> Option<[f64; LPC_ORDER]> {
    let m = LPC_ORDER / 2;
    let mut p = [0.0f64; LPC_ORDER / 2 + 1];
    let mut q = [0.0f64; LPC_ORDER / 2 + 1];
    p[0] = 1.0;
    q[0] = 1.0;
    for i in 1..=m {
        p[i] = a[i] + a[LPC_ORDER + 1 - i] - p[i - 1];
        q[i] = a[i] - a[LPC_ORDER + 1 - i] + q[i - 1];
    }
    for i in 0..m {
        p[i] *= 2.0;
        q[i] *= 2.0;
    }

    const DELTA: f64 = 0.005;
    const BISECTIONS: usize = 40;
    let mut freqs = [0.0f64; LPC_ORDER];
    let mut xl = 1.0f64;
    for (j, fj) in freqs.iter_mut().enumerate() {
        let coef = if j % 2 == 0 { &p } else { &q };
        let mut psum_l = cheb_eval(coef, xl);
        let mut found = false;
        let mut xr = xl - DELTA;
        while xr >= -1.0 - 1e-12 {
            let psum_r = cheb_eval(coef, xr);
            if psum_l * psum_r <= 0.0 {
                let mut lo = xl;
                let mut hi = xr;
                let mut flo = psum_l;
                for _ in 0..BISECTIONS {
                    let mid = 0.5 * (lo + hi);
                    let fmid = cheb_eval(coef, mid);
                    if flo * fmid > 0.0 {
                        lo = mid;
                        flo = fmid;
                    } else {
                        hi = mid;
                    }
                }
                let root = 0.5 * (lo + hi);
                *fj = root.clamp(-1.0, 1.0).acos();
                xl = root;
                found = true;
                break;
            }
            psum_l = psum_r;
            xl = xr;
            xr -= DELTA;
        }
        if !found {
            return None;
        }
    }
    Some(freqs)
}

/// Rebuild LPC coefficients from LSFs by cascading the second-order
/// sections of the sum and difference polynomials.
fn lsf_to_lpc(lsfs: &[f64; LPC_ORDER]) -> [f64; LPC_ORDER + 1] {
    let half = LPC_ORDER / 2;
    let x: Vec<f64> = lsfs.iter().map(|f| f.cos()).collect();
    let mut wp = vec![0.0f64; LPC_ORDER * 4 + 2];
    let mut ak = [0.0f64; LPC_ORDER + 1];
    let mut xin1 = 1.0;
    let mut xin2 = 1.0;
    for aj in ak.iter_mut() {
        let mut n4 = 0;
        for i in 0..half {
            let n1 = i * 4;
            let n2 = n1 + 1;
            let n3 = n2 + 1;
            n4 = n3 + 1;
            let xout1 = xin1 - 2.0 * x[2 * i] * wp[n1] + wp[n2];
            let xout2 = xin2 - 2.0 * x[2 * i + 1] * wp[n3] + wp[n4];
            wp[n2] = wp[n1];
            wp[n4] = wp[n3];
            wp[n1] = xin1;
            wp[n3] = xin2;
            xin1 = xout1;
            xin2 = xout2;
        }
        let xout1 = xin1 + wp[n4 + 1];
        let xout2 = xin2 - wp[n4 + 2];
        *aj = (xout1 + xout2) * 0.5;
        wp[n4 + 1] = xin1;
        wp[n4 + 2] = xin2;
        xin1 = 0.0;
        xin2 = 0.0;
    }
    ak
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::audio::mean_energy_dbfs;

    #[test]
    fn layout_is_64_bits() {
        let l = frame_layout();
        assert_eq!(l.total_bits(), 64);
        assert_eq!(2 + 1 + 6 + 5 + 50, 64);
    }

    #[test]
    fn encoded_frames_carry_sync() {
        let frame: Vec<i16> = (0..160)
            .map(|n| (4000.0 * (std::f64::consts::TAU * 200.0 * n as f64 / 8000.0).sin()) as i16)
            .collect();
        let payload = encode_frame(&frame);
        assert!(frame_sync_ok(&payload));
        assert_eq!(payload[0] >> 6, SYNC_VALUE);
    }

    #[test]
    fn decoder_rejects_bad_sync() {
        let mut payload = encode_frame(&[0i16; 160]);
        payload[0] ^= 0x80;
        assert!(matches!(
            decode_frame(&payload),
            Err(CodecError::InvalidFrame(_))
        ));
    }

    #[test]
    fn silence_round_trips_to_near_silence() {
        let payload = encode_frame(&[0i16; 160]);
        let out = decode_frame(&payload).unwrap();
        let e = mean_energy_dbfs(&out);
        assert!(e <= -50.0, "energy {e} dBFS");
    }

    #[test]
    fn lsf_round_trip_recovers_lpc() {
        // a mildly resonant stable filter survives lpc -> lsf -> lpc
        let r: [f64; LPC_ORDER + 1] = {
            let mut x = vec![0.0f64; 400];
            let mut s = 1234567u64;
            for v in x.iter_mut() {
                *v = 2.0 * xorshift_unit(&mut s) - 1.0;
            }
            // color the noise a little
            for i in 1..x.len() {
                x[i] += 0.8 * x[i - 1];
            }
            let mut r = [0.0; LPC_ORDER + 1];
            for (lag, rl) in r.iter_mut().enumerate() {
                for n in lag..x.len() {
                    *rl += x[n] * x[n - lag];
                }
            }
            r
        };
        let a = levinson(&r).unwrap();
        let lsfs = lpc_to_lsf(&a).unwrap();
        for w in lsfs.windows(2) {
            assert!(w[0] < w[1], "LSFs not increasing: {lsfs:?}");
        }
        let back = lsf_to_lpc(&lsfs);
        for k in 0..=LPC_ORDER {
            assert!(
                (a[k] - back[k]).abs() < 1e-4,
                "coef {k}: {} vs {}",
                a[k],
                back[k]
            );
        }
    }

    #[test]
    fn random_payload_sync_rate_is_quarter() {
        let mut s = 42u64;
        let mut ok = 0;
        let trials = 4000;
        for _ in 0..trials {
            let b = (xorshift_unit(&mut s) * 256.0) as u8;
            if frame_sync_ok(&[b]) {
                ok += 1;
            }
        }
        let rate = ok as f64 / trials as f64;
        assert!((rate - 0.25).abs() < 0.05, "sync rate {rate}");
    }
}
