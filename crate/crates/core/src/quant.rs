//! Uniform symmetric weight quantization to unsigned codes, and MSB
//! triplication.
//!
//! A real range `[-A, A]` is mapped onto `b`-bit unsigned codes centered at
//! `2^(b-1)`: `code = clamp(round(w / s) + 2^(b-1), 0, 2^b - 1)` with
//! `s = A / (2^(b-1) - 1)`. Rounding is half away from zero.
//!
//! A protected word stores the code in bits `0..b` and two copies of its
//! MSB in bits `b` and `b + 1`; decoding takes the 2-of-3 majority of the
//! three MSB positions.

use std::io::{self, Read, Write};
use std::path::Path;

use thiserror::Error;

pub const MIN_BITS: u32 = 2;
pub const MAX_BITS: u32 = 8;

const TENSOR_MAGIC: &[u8; 4] = b"FTQT";
const TENSOR_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum QuantError {
    #[error("cannot quantize an empty tensor")]
    EmptyTensor,
    #[error("weight {index} is not finite ({value})")]
    NonFiniteWeight { index: usize, value: f32 },
    #[error("code {code} outside the {bits}-bit range")]
    CodeOutOfRange { code: u32, bits: u32 },
    #[error("bit width {0} outside [{MIN_BITS}, {MAX_BITS}]")]
    InvalidBits(u32),
    #[error("malformed tensor file: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuantScheme {
    bits: u32,
    scale: f64,
}

impl QuantScheme {
    pub fn new(bits: u32, scale: f64) -> Result<Self, QuantError> {
        check_bits(bits)?;
        if !(scale.is_finite() && scale > 0.0) {
            return Err(QuantError::Format(format!("scale must be positive, got {scale}")));
        }
        Ok(Self { bits, scale })
    }

    pub fn bits(&self) -> u32 {
        self.bits
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn zero_code(&self) -> u32 {
        1 << (self.bits - 1)
    }

    pub fn max_code(&self) -> u32 {
        (1 << self.bits) - 1
    }

    /// Signed level of a code, `code - zero_code`.
    pub fn level(&self, code: u32) -> i32 {
        code as i32 - self.zero_code() as i32
    }
}

fn check_bits(bits: u32) -> Result<(), QuantError> {
    if (MIN_BITS..=MAX_BITS).contains(&bits) {
        Ok(())
    } else {
        Err(QuantError::InvalidBits(bits))
    }
}

pub fn quantize(weights: &[f32], bits: u32) -> Result<(Vec<u32>, QuantScheme), QuantError> {
    check_bits(bits)?;
    if weights.is_empty() {
        return Err(QuantError::EmptyTensor);
    }
    if let Some((index, &value)) = weights.iter().enumerate().find(|(_, w)| !w.is_finite()) {
        return Err(QuantError::NonFiniteWeight { index, value });
    }
    let amax = weights.iter().fold(0.0f64, |m, &w| m.max(f64::from(w).abs()));
    let qmax = f64::from((1u32 << (bits - 1)) - 1);
    let (scale, ratio) = if amax == 0.0 { (1.0, 0.0) } else { (amax / qmax, qmax / amax) };
    let scheme = QuantScheme { bits, scale };
    let zero = i64::from(scheme.zero_code());
    let top = i64::from(scheme.max_code());
    let codes = weights
        .iter()
        // w * (qmax / A) instead of w / s keeps exact ties such as 1.5 exact.
        .map(|&w| ((f64::from(w) * ratio).round() as i64 + zero).clamp(0, top) as u32)
        .collect();
    Ok((codes, scheme))
}

pub fn dequantize(codes: &[u32], scheme: &QuantScheme) -> Result<Vec<f64>, QuantError> {
    codes
        .iter()
        .map(|&code| {
            if code > scheme.max_code() {
                Err(QuantError::CodeOutOfRange { code, bits: scheme.bits })
            } else {
                Ok(f64::from(scheme.level(code)) * scheme.scale)
            }
        })
        .collect()
}

/// A `b`-bit code plus two redundant copies of its MSB.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ProtectedWord {
    pub code: u32,
    pub msb_copy_1: bool,
    pub msb_copy_2: bool,
    pub bits: u32,
}

impl ProtectedWord {
    /// Stored layout: code in bits `0..b`, copies at `b` and `b + 1`.
    pub fn to_stored(self) -> u32 {
        self.code | (u32::from(self.msb_copy_1) << self.bits) | (u32::from(self.msb_copy_2) << (self.bits + 1))
    }

    pub fn from_stored(word: u32, bits: u32) -> Self {
        Self {
            code: word & ((1 << bits) - 1),
            msb_copy_1: word >> bits & 1 == 1,
            msb_copy_2: word >> (bits + 1) & 1 == 1,
            bits,
        }
    }

    pub fn stored_width(&self) -> u32 {
        self.bits + 2
    }
}

pub fn protect(code: u32, bits: u32) -> ProtectedWord {
    debug_assert!(code < 1 << bits);
    let msb = code >> (bits - 1) & 1 == 1;
    ProtectedWord { code, msb_copy_1: msb, msb_copy_2: msb, bits }
}

/// 2-of-3 vote over the stored MSB and its copies; lower bits pass through.
pub fn majority_decode(p: ProtectedWord) -> u32 {
    let msb_pos = p.bits - 1;
    let votes = (p.code >> msb_pos & 1) + u32::from(p.msb_copy_1) + u32::from(p.msb_copy_2);
    let low = p.code & ((1 << msb_pos) - 1);
    low | (u32::from(votes >= 2) << msb_pos)
}

/// Stored weight-memory footprint in bits.
pub fn protected_memory_bits(param_count: u64, bits: u32, protected: bool) -> u64 {
    let width = if protected { bits + 2 } else { bits };
    param_count * u64::from(width)
}

/// A quantized tensor as stored in weight memory.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantTensor {
    pub scheme: QuantScheme,
    pub protected: bool,
    /// Stored words: plain codes, or [`ProtectedWord::to_stored`] layouts.
    pub words: Vec<u32>,
}

impl QuantTensor {
    pub fn from_weights(weights: &[f32], bits: u32, protected: bool) -> Result<Self, QuantError> {
        let (codes, scheme) = quantize(weights, bits)?;
        let words = if protected {
            codes.iter().map(|&c| protect(c, bits).to_stored()).collect()
        } else {
            codes
        };
        Ok(Self { scheme, protected, words })
    }

    pub fn stored_width(&self) -> u32 {
        self.scheme.bits + if self.protected { 2 } else { 0 }
    }

    /// Code as read through the decoder (majority vote when protected).
    pub fn read_code(&self, word: u32) -> u32 {
        if self.protected {
            majority_decode(ProtectedWord::from_stored(word, self.scheme.bits))
        } else {
            word
        }
    }

    pub fn memory_bits(&self) -> u64 {
        protected_memory_bits(self.words.len() as u64, self.scheme.bits, self.protected)
    }

    /// Binary layout, all little-endian: magic `FTQT`, version u32, bits u32,
    /// protected u32, scale f64, len u64, then one u16 per stored word.
    pub fn write_to(&self, mut w: impl Write) -> Result<(), QuantError> {
        w.write_all(TENSOR_MAGIC)?;
        w.write_all(&TENSOR_VERSION.to_le_bytes())?;
        w.write_all(&self.scheme.bits.to_le_bytes())?;
        w.write_all(&u32::from(self.protected).to_le_bytes())?;
        w.write_all(&self.scheme.scale.to_le_bytes())?;
        w.write_all(&(self.words.len() as u64).to_le_bytes())?;
        for &word in &self.words {
            w.write_all(&(word as u16).to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_from(mut r: impl Read) -> Result<Self, QuantError> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != TENSOR_MAGIC {
            return Err(QuantError::Format("bad magic".into()));
        }
        let version = read_u32(&mut r)?;
        if version != TENSOR_VERSION {
            return Err(QuantError::Format(format!("unsupported version {version}")));
        }
        let bits = read_u32(&mut r)?;
        let protected = match read_u32(&mut r)? {
            0 => false,
            1 => true,
            other => return Err(QuantError::Format(format!("bad protected flag {other}"))),
        };
        let mut b8 = [0u8; 8];
        r.read_exact(&mut b8)?;
        let scheme = QuantScheme::new(bits, f64::from_le_bytes(b8))?;
        r.read_exact(&mut b8)?;
        let len = u64::from_le_bytes(b8) as usize;
        let width = bits + if protected { 2 } else { 0 };
        let mut words = Vec::with_capacity(len);
        let mut b2 = [0u8; 2];
        for _ in 0..len {
            r.read_exact(&mut b2)?;
            let word = u32::from(u16::from_le_bytes(b2));
            if word >> width != 0 {
                return Err(QuantError::Format(format!("word {word:#x} wider than {width} bits")));
            }
            words.push(word);
        }
        Ok(Self { scheme, protected, words })
    }
}

fn read_u32(r: &mut impl Read) -> Result<u32, QuantError> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

/// Load a flat little-endian f32 file, checking the element count.
pub fn read_f32_file(path: &Path, expected_len: usize) -> Result<Vec<f32>, QuantError> {
    let bytes = std::fs::read(path)?;
    if bytes.len() != expected_len * 4 {
        return Err(QuantError::Format(format!(
            "{}: expected {} f32 values, found {} bytes",
            path.display(),
            expected_len,
            bytes.len()
        )));
    }
    Ok(bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect())
}

pub fn write_f32_file(path: &Path, values: &[f32]) -> Result<(), QuantError> {
    let bytes: Vec<u8> = values.iter().flat_map(|v| v.to_le_bytes()).collect();
    std::fs::write(path, bytes)?;
    Ok(())
}
