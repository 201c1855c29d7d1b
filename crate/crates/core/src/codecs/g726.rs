//! G.726 ADPCM at 40/32/24/16 kbit/s.
//!
//! Fixed-point implementation following the classic CCITT reference
//! structure: adaptive quantizer with log-domain step size (yu/yl mixing via
//! the speed control ap), two-pole/six-zero adaptive predictor, tone and
//! transition detection. Arithmetic is done in i32 with explicit truncation
//! to 16 bits wherever the reference kept values in 16-bit registers, so the
//! encoder and decoder state machines stay in lockstep.

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum G726Rate {
    R16,
    R24,
    R32,
    R40,
}

impl G726Rate {
    pub fn bits_per_code(self) -> u32 {
        match self {
            G726Rate::R16 => 2,
            G726Rate::R24 => 3,
            G726Rate::R32 => 4,
            G726Rate::R40 => 5,
        }
    }

    fn code_mask(self) -> i32 {
        (1 << self.bits_per_code()) - 1
    }

    fn sign_bit(self) -> i32 {
        1 << (self.bits_per_code() - 1)
    }

    fn dq_mask(self) -> i32 {
        match self {
            G726Rate::R40 => 0x7FFF,
            _ => 0x3FFF,
        }
    }

    fn qtab(self) -> &'static [i32] {
        match self {
            G726Rate::R16 => &QTAB_16,
            G726Rate::R24 => &QTAB_24,
            G726Rate::R32 => &QTAB_32,
            G726Rate::R40 => &QTAB_40,
        }
    }

    fn dqlntab(self) -> &'static [i32] {
        match self {
            G726Rate::R16 => &DQLN_16,
            G726Rate::R24 => &DQLN_24,
            G726Rate::R32 => &DQLN_32,
            G726Rate::R40 => &DQLN_40,
        }
    }

    fn witab(self) -> &'static [i32] {
        match self {
            G726Rate::R16 => &WI_16,
            G726Rate::R24 => &WI_24,
            G726Rate::R32 => &WI_32,
            G726Rate::R40 => &WI_40,
        }
    }

    fn fitab(self) -> &'static [i32] {
        match self {
            G726Rate::R16 => &FI_16,
            G726Rate::R24 => &FI_24,
            G726Rate::R32 => &FI_32,
            G726Rate::R40 => &FI_40,
        }
    }
}

// Decision levels, reconstruction levels (log domain), scale-factor
// multipliers (pre-scaled by 32) and speed-control weights per rate.
// Negative codes mirror the positive half (one's complement).
static QTAB_16: [i32; 1] = [261];
static DQLN_16: [i32; 4] = [116, 365, 365, 116];
static WI_16: [i32; 4] = [-704, 14048, 14048, -704];
static FI_16: [i32; 4] = [0, 0xE00, 0xE00, 0];

static QTAB_24: [i32; 3] = [8, 218, 331];
static DQLN_24: [i32; 8] = [-2048, 135, 273, 373, 373, 273, 135, -2048];
static WI_24: [i32; 8] = [-128, 960, 4384, 18624, 18624, 4384, 960, -128];
static FI_24: [i32; 8] = [0, 0x200, 0x400, 0xE00, 0xE00, 0x400, 0x200, 0];

static QTAB_32: [i32; 7] = [-124, 80, 178, 246, 300, 349, 400];
static DQLN_32: [i32; 16] = [
    -2048, 4, 135, 213, 273, 323, 373, 425, 425, 373, 323, 273, 213, 135, 4, -2048,
];
static WI_32: [i32; 16] = [
    -384, 576, 1312, 2048, 3584, 6336, 11360, 35904, 35904, 11360, 6336, 3584, 2048, 1312, 576,
    -384,
];
static FI_32: [i32; 16] = [
    0, 0, 0, 0x200, 0x200, 0x200, 0x600, 0xE00, 0xE00, 0x600, 0x200, 0x200, 0x200, 0, 0, 0,
];

static QTAB_40: [i32; 15] = [
    -122, -16, 67, 138, 197, 249, 297, 338, 377, 412, 444, 474, 501, 527, 552,
];
static DQLN_40: [i32; 32] = [
    -2048, -66, 28, 104, 169, 224, 274, 318, 358, 395, 429, 459, 488, 514, 539, 566, 566, 539,
    514, 488, 459, 429, 395, 358, 318, 274, 224, 169, 104, 28, -66, -2048,
];
static WI_40: [i32; 32] = [
    448, 448, 768, 1248, 1280, 1312, 1856, 3200, 4512, 5728, 7008, 8960, 11456, 14080, 16928,
    22272, 22272, 16928, 14080, 11456, 8960, 7008, 5728, 4512, 3200, 1856, 1312, 1280, 1248, 768,
    448, 448,
];
static FI_40: [i32; 32] = [
    0, 0, 0, 0, 0, 0x200, 0x200, 0x200, 0x200, 0x200, 0x400, 0x600, 0x800, 0xA00, 0xC00, 0xC00,
    0xC00, 0xA00, 0x800, 0x600, 0x400, 0x200, 0x200, 0x200, 0x200, 0x200, 0, 0, 0, 0, 0, 0,
];

static POWER2: [i32; 15] = [
    1, 2, 4, 8, 0x10, 0x20, 0x40, 0x80, 0x100, 0x200, 0x400, 0x800, 0x1000, 0x2000, 0x4000,
];

/// Truncate to 16 bits like an assignment into a 16-bit register.
#[inline]
fn s16(x: i32) -> i32 {
    x as i16 as i32
}

/// Index of the first table entry strictly above `val`.
fn quan(val: i32, table: &[i32]) -> usize {
    table.iter().position(|&t| val < t).unwrap_or(table.len())
}

/// Product of a 14-bit magnitude (`an`) and a 4-bit-exponent/6-bit-mantissa
/// floating value (`srn`).
fn fmult(an: i32, srn: i32) -> i32 {
    let anmag = if an > 0 { an } else { (-an) & 0x1FFF };
    let anexp = quan(anmag, &POWER2) as i32 - 6;
    let anmant = if anmag == 0 {
        32
    } else if anexp >= 0 {
        anmag >> anexp
    } else {
        anmag << -anexp
    };
    let wanexp = anexp + ((srn >> 6) & 0xF) - 13;
    let wanmant = (anmant * (srn & 0x3F) + 0x30) >> 4;
    let retval = if wanexp >= 0 {
        (wanmant << wanexp) & 0x7FFF
    } else {
        wanmant >> -wanexp
    };
    if (an ^ srn) < 0 {
        -retval
    } else {
        retval
    }
}

/// Adaptive quantizer/predictor registers carried across samples.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct G726State {
    yl: i32,
    yu: i32,
    dms: i32,
    dml: i32,
    ap: i32,
    a: [i32; 2],
    b: [i32; 6],
    pk: [i32; 2],
    dq: [i32; 6],
    sr: [i32; 2],
    td: i32,
}

impl Default for G726State {
    fn default() -> Self {
        Self::new()
    }
}

impl G726State {
    /// Standard initial state.
    pub fn new() -> Self {
        G726State {
            yl: 34816,
            yu: 544,
            dms: 0,
            dml: 0,
            ap: 0,
            a: [0, 0],
            b: [0; 6],
            pk: [0, 0],
            dq: [32; 6],
            sr: [32, 32],
            td: 0,
        }
    }

    fn predictor_zero(&self) -> i32 {
        (0..6).map(|i| fmult(self.b[i] >> 2, self.dq[i])).sum()
    }

    fn predictor_pole(&self) -> i32 {
        fmult(self.a[1] >> 2, self.sr[1]) + fmult(self.a[0] >> 2, self.sr[0])
    }

    fn step_size(&self) -> i32 {
        if self.ap >= 256 {
            self.yu
        } else {
            let mut y = self.yl >> 6;
            let dif = self.yu - y;
            let al = self.ap >> 2;
            if dif > 0 {
                y += (dif * al) >> 6;
            } else if dif < 0 {
                y += (dif * al + 0x3F) >> 6;
            }
            y
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn update(&mut self, rate: G726Rate, y: i32, wi: i32, fi: i32, dq: i32, sr: i32, dqsez: i32) {
        let pk0 = if dqsez < 0 { 1 } else { 0 };
        let mut mag = dq & 0x7FFF;

        // transition detect against the locked scale factor
        let ylint = self.yl >> 15;
        let ylfrac = (self.yl >> 10) & 0x1F;
        let thr1 = (32 + ylfrac) << ylint;
        let thr2 = if ylint > 9 { 31 << 10 } else { thr1 };
        let dqthr = (thr2 + (thr2 >> 1)) >> 1;
        let tr = if self.td == 0 {
            0
        } else if mag <= dqthr {
            0
        } else {
            1
        };

        // quantizer scale factor adaptation
        self.yu = (y + ((wi - y) >> 5)).clamp(544, 5120);
        self.yl += self.yu + ((-self.yl) >> 6);

        let mut a2p = 0;
        if tr == 1 {
            self.a = [0, 0];
            self.b = [0; 6];
        } else {
            let pks1 = pk0 ^ self.pk[0];

            a2p = self.a[1] - (self.a[1] >> 7);
            if dqsez != 0 {
                let fa1 = if pks1 != 0 { self.a[0] } else { -self.a[0] };
                if fa1 < -8191 {
                    a2p -= 0x100;
                } else if fa1 > 8191 {
                    a2p += 0xFF;
                } else {
                    a2p += fa1 >> 5;
                }

                if (pk0 ^ self.pk[1]) != 0 {
                    if a2p <= -12160 {
                        a2p = -12288;
                    } else if a2p >= 12416 {
                        a2p = 12288;
                    } else {
                        a2p -= 0x80;
                    }
                } else if a2p <= -12416 {
                    a2p = -12288;
                } else if a2p >= 12160 {
                    a2p = 12288;
                } else {
                    a2p += 0x80;
                }
            }
            self.a[1] = a2p;

            self.a[0] -= self.a[0] >> 8;
            if dqsez != 0 {
                if pks1 == 0 {
                    self.a[0] += 192;
                } else {
                    self.a[0] -= 192;
                }
            }
            let a1ul = 15360 - a2p;
            self.a[0] = self.a[0].clamp(-a1ul, a1ul);

            for cnt in 0..6 {
                if rate == G726Rate::R40 {
                    self.b[cnt] -= self.b[cnt] >> 9;
                } else {
                    self.b[cnt] -= self.b[cnt] >> 8;
                }
                if dq & 0x7FFF != 0 {
                    if (dq ^ self.dq[cnt]) >= 0 {
                        self.b[cnt] += 128;
                    } else {
                        self.b[cnt] -= 128;
                    }
                }
                self.b[cnt] = s16(self.b[cnt]);
            }
        }

        for cnt in (1..6).rev() {
            self.dq[cnt] = self.dq[cnt - 1];
        }
        // store dq as 4-bit exponent + 6-bit mantissa float
        if mag == 0 {
            self.dq[0] = if dq >= 0 { 0x20 } else { 0x20 - 0x400 };
        } else {
            let exp = quan(mag, &POWER2) as i32;
            self.dq[0] = if dq >= 0 {
                (exp << 6) + ((mag << 6) >> exp)
            } else {
                (exp << 6) + ((mag << 6) >> exp) - 0x400
            };
        }

        self.sr[1] = self.sr[0];
        if sr == 0 {
            self.sr[0] = 0x20;
        } else if sr > 0 {
            let exp = quan(sr, &POWER2) as i32;
            self.sr[0] = (exp << 6) + ((sr << 6) >> exp);
        } else if sr > -32768 {
            mag = -sr;
            let exp = quan(mag, &POWER2) as i32;
            self.sr[0] = (exp << 6) + ((mag << 6) >> exp) - 0x400;
        } else {
            self.sr[0] = 0x20 - 0x400;
        }

        self.pk[1] = self.pk[0];
        self.pk[0] = pk0;

        self.td = if tr == 1 {
            0
        } else if a2p < -11776 {
            1
        } else {
            0
        };

        self.dms += (fi - self.dms) >> 5;
        self.dml += ((fi << 2) - self.dml) >> 7;

        if tr == 1 {
            self.ap = 256;
        } else if y < 1536 || self.td == 1 || ((self.dms << 2) - self.dml).abs() >= (self.dml >> 3)
        {
            self.ap += (0x200 - self.ap) >> 4;
        } else {
            self.ap += (-self.ap) >> 4;
        }
    }

    /// Encode one linear sample, returning the ADPCM code word.
    pub fn encode_sample(&mut self, rate: G726Rate, sample: i16) -> u8 {
        let sl = (sample as i32) >> 2;
        let sezi = s16(self.predictor_zero());
        let sez = s16(sezi >> 1);
        let se = s16((sezi + self.predictor_pole()) >> 1);
        let d = s16(sl - se);
        let y = self.step_size();
        let i = quantize(d, y, rate);
        self.advance(rate, i, se, sez, y);
        i as u8
    }

    /// Decode one ADPCM code word to a linear sample.
    pub fn decode_sample(&mut self, rate: G726Rate, code: u8) -> i16 {
        let i = (code as i32) & rate.code_mask();
        let sezi = s16(self.predictor_zero());
        let sez = s16(sezi >> 1);
        let se = s16((sezi + self.predictor_pole()) >> 1);
        let y = self.step_size();
        let sr = self.advance(rate, i, se, sez, y);
        s16(sr << 2).clamp(-32768, 32767) as i16
    }

    /// Shared reconstruction + state update; returns the reconstructed signal.
    fn advance(&mut self, rate: G726Rate, i: i32, se: i32, sez: i32, y: i32) -> i32 {
        let dq = reconstruct((i & rate.sign_bit()) != 0, rate.dqlntab()[i as usize], y);
        let sr = if dq < 0 {
            s16(se - (dq & rate.dq_mask()))
        } else {
            s16(se + dq)
        };
        let dqsez = s16(sr + sez - se);
        self.update(
            rate,
            y,
            rate.witab()[i as usize],
            rate.fitab()[i as usize],
            dq,
            sr,
            dqsez,
        );
        sr
    }
}

fn quantize(d: i32, y: i32, rate: G726Rate) -> i32 {
    // base-2 log of |d|, 7-bit mantissa
    let dqm = d.abs();
    let exp = quan(dqm >> 1, &POWER2) as i32;
    let mant = ((dqm << 7) >> exp) & 0x7F;
    let dl = (exp << 7) + mant;
    let dln = dl - (y >> 2);

    let qtab = rate.qtab();
    let size = qtab.len() as i32;
    let i = quan(dln, qtab) as i32;
    if d < 0 {
        (size << 1) + 1 - i
    } else if i == 0 && rate != G726Rate::R16 {
        // positive zero is sent as the all-ones code
        (size << 1) + 1
    } else {
        i
    }
}

fn reconstruct(sign: bool, dqln: i32, y: i32) -> i32 {
    let dql = dqln + (y >> 2);
    if dql < 0 {
        if sign {
            -0x8000
        } else {
            0
        }
    } else {
        let dex = (dql >> 7) & 15;
        let dqt = 128 + (dql & 127);
        let dq = (dqt << 7) >> (14 - dex);
        if sign {
            dq - 0x8000
        } else {
            dq
        }
    }
}

/// Encode a block of samples, packing code words LSB-first within bytes.
pub fn encode_block(state: &mut G726State, rate: G726Rate, samples: &[i16]) -> Vec<u8> {
    let bits = rate.bits_per_code();
    debug_assert_eq!(samples.len() as u32 * bits % 8, 0);
    let mut out = Vec::with_capacity(samples.len() * bits as usize / 8);
    let mut acc: u32 = 0;
    let mut nbits = 0;
    for &s in samples {
        let code = state.encode_sample(rate, s) as u32;
        acc |= code << nbits;
        nbits += bits;
        while nbits >= 8 {
            out.push((acc & 0xFF) as u8);
            acc >>= 8;
            nbits -= 8;
        }
    }
    out
}

/// Decode a block of packed code words (LSB-first within bytes).
pub fn decode_block(state: &mut G726State, rate: G726Rate, payload: &[u8]) -> Vec<i16> {
    let bits = rate.bits_per_code();
    let n = payload.len() * 8 / bits as usize;
    let mask = rate.code_mask() as u32;
    let mut out = Vec::with_capacity(n);
    let mut acc: u32 = 0;
    let mut nbits = 0;
    let mut bytes = payload.iter();
    for _ in 0..n {
        while nbits < bits {
            acc |= (*bytes.next().unwrap() as u32) << nbits;
            nbits += 8;
        }
        let code = (acc & mask) as u8;
        acc >>= bits;
        nbits -= bits;
        out.push(state.decode_sample(rate, code));
    }
    out
}
