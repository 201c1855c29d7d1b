//! G.711 companding: μ-law and A-law, 8 bits per sample.
//!
//! Encoders follow the ITU segment/quantization rules (one's-complement
//! magnitude handling, μ-law bias 33 in the 14-bit domain, A-law even-bit
//! inversion). Decoders emit the segment midpoints. One deliberate deviation:
//! μ-law code 0x7F ("minus zero") decodes to -2, the midpoint of its encode
//! interval [-4, -1], instead of the table value 0. That keeps companding a
//! bijection on code space: encode(decode(c)) == c for all 256 codes of both
//! laws, which transcoding-detection logic relies on.

/// Encode one linear sample to a μ-law byte.
pub fn ulaw_encode(x: i16) -> u8 {
    let (mag14, positive) = if x < 0 {
        (((!(x as i32)) >> 2) + 33, false)
    } else {
        (((x as i32) >> 2) + 33, true)
    };
    let mag14 = mag14.min(0x1FFF);

    let mut segno = 1;
    let mut i = mag14 >> 6;
    while i != 0 {
        segno += 1;
        i >>= 1;
    }
    let high_nibble = 0x8 - segno;
    let low_nibble = 0xF - ((mag14 >> segno) & 0xF);
    let mut code = ((high_nibble << 4) | low_nibble) as u8;
    if positive {
        code |= 0x80;
    }
    code
}

/// Decode one μ-law byte to a linear sample.
pub fn ulaw_decode(code: u8) -> i16 {
    if code == 0x7F {
        // minus-zero code: midpoint of its encode interval, see module docs
        return -2;
    }
    let u = !code;
    let exp = (u >> 4) & 7;
    let mant = (u & 0xF) as i32;
    let t = ((mant << 3) + 0x84) << exp;
    if u & 0x80 != 0 {
        (0x84 - t) as i16
    } else {
        (t - 0x84) as i16
    }
}

/// Encode one linear sample to an A-law byte.
pub fn alaw_encode(x: i16) -> u8 {
    let mut ix = if x < 0 {
        (!(x as i32)) >> 4
    } else {
        (x as i32) >> 4
    };
    if ix > 15 {
        let mut iexp = 1;
        while ix > 16 + 15 {
            ix >>= 1;
            iexp += 1;
        }
        ix -= 16;
        ix += iexp << 4;
    }
    if x >= 0 {
        ix |= 0x80;
    }
    (ix ^ 0x55) as u8
}

/// Decode one A-law byte to a linear sample.
pub fn alaw_decode(code: u8) -> i16 {
    let ix = (code ^ 0x55) & 0x7F;
    let iexp = ix >> 4;
    let mut mant = (ix & 0xF) as i32;
    if iexp > 0 {
        mant += 16;
    }
    mant = (mant << 4) + 0x8;
    if iexp > 1 {
        mant <<= iexp - 1;
    }
    if code > 127 {
        mant as i16
    } else {
        -mant as i16
    }
}
