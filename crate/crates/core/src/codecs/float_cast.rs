//! Down-casting to 16- and 8-bit floating-point formats.
//!
//! All conversions round to nearest, ties to even, and saturate at the
//! largest finite value of the target format instead of producing
//! infinities. Subnormals of the target format are produced normally.

use half::{bf16, f16};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FloatFormat {
    Fp16,
    Bf16,
    /// 4 exponent bits, 3 mantissa bits, bias 7, no infinities.
    Fp8E4m3,
    /// 5 exponent bits, 2 mantissa bits, bias 15.
    Fp8E5m2,
}

impl FloatFormat {
    pub const ALL: [FloatFormat; 4] = [Self::Fp16, Self::Bf16, Self::Fp8E4m3, Self::Fp8E5m2];

    pub fn bits(self) -> u32 {
        match self {
            Self::Fp16 | Self::Bf16 => 16,
            Self::Fp8E4m3 | Self::Fp8E5m2 => 8,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Fp16 => "fp16",
            Self::Bf16 => "bf16",
            Self::Fp8E4m3 => "fp8_e4m3",
            Self::Fp8E5m2 => "fp8_e5m2",
        }
    }

    /// Encodes one value into the low `bits()` bits of the result.
    pub fn encode(self, v: f32) -> u16 {
        match self {
            Self::Fp16 => {
                let h = f16::from_f32(v);
                if h.is_infinite() { f16::MAX.copysign(h) } else { h }.to_bits()
            }
            Self::Bf16 => {
                let h = bf16::from_f32(v);
                if h.is_infinite() { bf16::MAX.copysign(h) } else { h }.to_bits()
            }
            Self::Fp8E4m3 => E4M3.encode(v),
            Self::Fp8E5m2 => E5M2.encode(v),
        }
    }

    pub fn decode(self, code: u16) -> f32 {
        match self {
            Self::Fp16 => f16::from_bits(code).to_f32(),
            Self::Bf16 => bf16::from_bits(code).to_f32(),
            Self::Fp8E4m3 => E4M3.decode(code as u8),
            Self::Fp8E5m2 => E5M2.decode(code as u8),
        }
    }

    /// Round trip through the format.
    pub fn quantize(self, v: f32) -> f32 {
        self.decode(self.encode(v))
    }
}

/// A sign-magnitude binary float with `exp_bits` exponent bits and
/// `man_bits` stored mantissa bits, at most 16 bits wide.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MiniFloat {
    pub exp_bits: u32,
    pub man_bits: u32,
    pub bias: i32,
    /// Magnitude bits (sign excluded) of the largest finite value.
    pub max_finite: u32,
    /// Whether an all-ones exponent encodes inf/NaN (IEEE style).
    pub ieee_special: bool,
}

pub const E4M3: MiniFloat =
    MiniFloat { exp_bits: 4, man_bits: 3, bias: 7, max_finite: 0x7E, ieee_special: false };
pub const E5M2: MiniFloat =
    MiniFloat { exp_bits: 5, man_bits: 2, bias: 15, max_finite: 0x7B, ieee_special: true };

impl MiniFloat {
    fn sign_shift(&self) -> u32 {
        self.exp_bits + self.man_bits
    }

    /// Round-to-nearest-even encoding with saturation. NaN maps to the
    /// canonical NaN pattern.
    pub fn encode(&self, v: f32) -> u16 {
        let sign = (v.is_sign_negative() as u16) << self.sign_shift();
        if v.is_nan() {
            return sign | ((1u16 << self.sign_shift()) - 1);
        }
        let a = (v as f64).abs();
        if a == 0.0 {
            return sign;
        }
        let emin = 1 - self.bias;
        let implicit = 1u64 << self.man_bits;
        // Magnitude codes are monotone in value, and a subnormal whose
        // mantissa rounds up to `implicit` is exactly the smallest normal.
        let mag: u64 = if a < 2f64.powi(emin) {
            let m = (a / 2f64.powi(emin - self.man_bits as i32)).round_ties_even();
            m as u64
        } else {
            let mut e = exponent_of(a);
            let mut m = (a / 2f64.powi(e - self.man_bits as i32)).round_ties_even() as u64;
            if m == 2 * implicit {
                e += 1;
                m = implicit;
            }
            let field = (e + self.bias) as u64;
            (field << self.man_bits) | (m - implicit)
        };
        sign | mag.min(self.max_finite as u64) as u16
    }

    pub fn decode(&self, code: u8) -> f32 {
        self.decode_bits(code as u16)
    }

    pub fn decode_bits(&self, code: u16) -> f32 {
        let sign = if (code >> self.sign_shift()) & 1 == 1 { -1.0 } else { 1.0 };
        let mag = code & ((1u16 << self.sign_shift()) - 1);
        let exp_field = (mag >> self.man_bits) as i32;
        let man = (mag & ((1u16 << self.man_bits) - 1)) as f64;
        let exp_max = (1i32 << self.exp_bits) - 1;
        if self.ieee_special && exp_field == exp_max {
            return if man == 0.0 { sign * f32::INFINITY } else { f32::NAN };
        }
        if mag as u32 > self.max_finite {
            return f32::NAN;
        }
        let scale = 2f64.powi(self.man_bits as i32);
        let v = if exp_field == 0 {
            man / scale * 2f64.powi(1 - self.bias)
        } else {
            (1.0 + man / scale) * 2f64.powi(exp_field - self.bias)
        };
        sign * v as f32
    }

    pub fn max_value(&self) -> f32 {
        self.decode_bits(self.max_finite as u16)
    }
}

/// `floor(log2(a))` for positive finite `a`, exact.
fn exponent_of(a: f64) -> i32 {
    let bits = a.to_bits();
    let field = ((bits >> 52) & 0x7FF) as i32;
    if field == 0 {
        // f64 subnormal; never reached from f32 inputs.
        a.log2().floor() as i32
    } else {
        field - 1023
    }
}
