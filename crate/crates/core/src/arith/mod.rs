//! Unsigned integer multipliers: the exact reference, Mitchell's logarithmic
//! multiplier, and AdAM, the adaptive fault-tolerant variant that duplicates
//! the high-order slice of the mantissa adder.
//!
//! All multipliers are pure functions of their operands and configuration.
//! Operands are unsigned `n`-bit words; products are returned as `u64`.
//!
//! The logarithmic datapath is modeled bit-exactly:
//!
//! 1. a leading-one detector yields the characteristic `k` of each operand;
//! 2. the operand is shifted so the leading one sits at the MSB, and the
//!    `n - 1` bits below it form the mantissa;
//! 3. the mantissa is truncated to `n - 1 - t` bits by dropping low bits;
//! 4. the mantissas are added in a `(n - 1 - t)`-bit adder with carry-out;
//! 5. the product is rebuilt by the piecewise antilog shift.
//!
//! AdAM adds a duplicate of the top adder slice, see [`duplication_span`].

mod logmul;
mod mare;

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use logmul::{adam_mul, duplication_span, mitchell_mul};
pub use mare::{mare, SamplePolicy, EXHAUSTIVE_MAX_WIDTH};

/// Smallest supported operand width.
pub const MIN_WIDTH: u32 = 2;
/// Largest supported operand width.
pub const MAX_WIDTH: u32 = 16;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ArithError {
    #[error("leading-one detection on a zero operand")]
    ZeroOperand,
    #[error("operand {value} does not fit in {width} bits")]
    OperandOutOfRange { value: u32, width: u32 },
    #[error("unsupported operand width {0} (supported: {MIN_WIDTH}..={MAX_WIDTH})")]
    UnsupportedWidth(u32),
    #[error("invalid multiplier configuration: {0}")]
    InvalidConfig(String),
    #[error("{found} configuration passed to the {expected} multiplier")]
    FamilyMismatch { expected: Family, found: Family },
    #[error("exhaustive sweep requested for {0}-bit operands; use a sampled policy")]
    ExhaustiveTooLarge(u32),
    #[error("adder bit {bit} outside the {width}-bit mantissa adder output")]
    AdderBitOutOfRange { bit: u32, width: u32 },
    #[error("the exact multiplier has no modeled adder; internal faults cannot be routed to it")]
    NoAdderModel,
}

/// An unsigned operand of fixed bit width.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct UWord {
    value: u32,
    width: u32,
}

impl UWord {
    pub fn new(value: u32, width: u32) -> Result<Self, ArithError> {
        check_width(width)?;
        if u64::from(value) >= 1u64 << width {
            return Err(ArithError::OperandOutOfRange { value, width });
        }
        Ok(Self { value, width })
    }

    pub fn value(self) -> u32 {
        self.value
    }

    pub fn width(self) -> u32 {
        self.width
    }
}

/// Position of the leading one: `2^k <= x < 2^(k+1)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct LodIndex(pub u32);

/// Leading-one detector.
pub fn lod(x: UWord) -> Result<LodIndex, ArithError> {
    if x.value == 0 {
        return Err(ArithError::ZeroOperand);
    }
    Ok(LodIndex(31 - x.value.leading_zeros()))
}

/// Exact unsigned product.
pub fn exact_mul(a: UWord, b: UWord) -> u64 {
    u64::from(a.value) * u64::from(b.value)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Exact,
    Mitchell,
    Adam,
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Family::Exact => "Exact",
            Family::Mitchell => "Mitchell",
            Family::Adam => "AdAM",
        })
    }
}

/// Multiplier family and parameters.
///
/// `trunc` (t) drops the low mantissa bits; `dup` (h) is the AdAM
/// duplication level. Both are ignored by the exact multiplier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MultConfig {
    pub family: Family,
    pub width: u32,
    #[serde(default)]
    pub trunc: u32,
    #[serde(default)]
    pub dup: u32,
}

impl MultConfig {
    pub fn exact(width: u32) -> Self {
        Self { family: Family::Exact, width, trunc: 0, dup: 0 }
    }

    pub fn mitchell(width: u32, trunc: u32) -> Self {
        Self { family: Family::Mitchell, width, trunc, dup: 0 }
    }

    /// AdAM(t, h): truncation first, duplication level second.
    pub fn adam(width: u32, trunc: u32, dup: u32) -> Self {
        Self { family: Family::Adam, width, trunc, dup }
    }

    pub fn validate(&self) -> Result<(), ArithError> {
        check_width(self.width)?;
        if self.family == Family::Exact {
            return Ok(());
        }
        if self.trunc + 1 >= self.width {
            return Err(ArithError::InvalidConfig(format!(
                "truncation t={} leaves no mantissa bits at width {}",
                self.trunc, self.width
            )));
        }
        if self.dup >= self.width {
            return Err(ArithError::InvalidConfig(format!(
                "duplication level h={} must be below width {}",
                self.dup, self.width
            )));
        }
        Ok(())
    }

    /// Kept mantissa width `n - 1 - t`.
    pub fn mantissa_width(&self) -> u32 {
        self.width - 1 - self.trunc
    }

    /// Output width of the mantissa adder including its carry-out, i.e. the
    /// number of addressable internal fault sites. Zero for the exact family.
    pub fn adder_width(&self) -> u32 {
        match self.family {
            Family::Exact => 0,
            _ => self.mantissa_width() + 1,
        }
    }

    pub fn operand(&self, value: u32) -> Result<UWord, ArithError> {
        UWord::new(value, self.width)
    }

    /// Multiply through whichever datapath the family selects.
    ///
    /// `flips` are internal adder output flips; they are rejected for the
    /// exact family and applied without detection for Mitchell.
    pub fn multiply(&self, a: u32, b: u32, flips: AdderFlips) -> Result<MulOutcome, ArithError> {
        self.validate()?;
        let (a, b) = (self.operand(a)?, self.operand(b)?);
        match self.family {
            Family::Exact => {
                if !flips.is_empty() {
                    return Err(ArithError::NoAdderModel);
                }
                Ok(MulOutcome::clean(exact_mul(a, b)))
            }
            Family::Mitchell => logmul::log_mul(a, b, self, 0, flips),
            Family::Adam => adam_mul(a, b, self, flips),
        }
    }

    /// Hot-loop variant of [`MultConfig::multiply`] for configurations and
    /// operands the caller has already validated.
    pub(crate) fn multiply_trusted(&self, a: u32, b: u32, flips: AdderFlips) -> MulOutcome {
        debug_assert!(self.validate().is_ok());
        match self.family {
            Family::Exact => MulOutcome::clean(u64::from(a) * u64::from(b)),
            family => {
                let dup = if family == Family::Adam { self.dup } else { 0 };
                let a = UWord { value: a, width: self.width };
                let b = UWord { value: b, width: self.width };
                logmul::log_mul(a, b, self, dup, flips).expect("validated multiplier inputs")
            }
        }
    }
}

impl fmt::Display for MultConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.family {
            Family::Exact => write!(f, "Exact@{}", self.width),
            Family::Mitchell => write!(f, "Mitchell({})@{}", self.trunc, self.width),
            Family::Adam => write!(f, "AdAM({},{})@{}", self.trunc, self.dup, self.width),
        }
    }
}

/// Result of one multiplication.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MulOutcome {
    pub product: u64,
    pub fault_detected: bool,
    /// Set when detected faulty bits were zeroed. Implies `fault_detected`.
    pub mitigated: bool,
}

impl MulOutcome {
    pub fn clean(product: u64) -> Self {
        Self { product, fault_detected: false, mitigated: false }
    }
}

/// Bit flips applied to the primary mantissa adder output (bit `w` is the
/// carry-out, where `w` is the kept mantissa width).
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash)]
pub struct AdderFlips(u32);

impl AdderFlips {
    pub const NONE: AdderFlips = AdderFlips(0);

    pub fn single(bit: u32) -> Self {
        assert!(bit < 32, "adder bit {bit} out of range");
        AdderFlips(1 << bit)
    }

    pub fn from_mask(mask: u32) -> Self {
        AdderFlips(mask)
    }

    pub fn with(self, bit: u32) -> Self {
        AdderFlips(self.0 ^ AdderFlips::single(bit).0)
    }

    pub fn mask(self) -> u32 {
        self.0
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    fn check(self, adder_width: u32) -> Result<(), ArithError> {
        if adder_width < 32 && self.0 >> adder_width != 0 {
            let bit = 31 - self.0.leading_zeros();
            return Err(ArithError::AdderBitOutOfRange { bit, width: adder_width });
        }
        Ok(())
    }
}

fn check_width(width: u32) -> Result<(), ArithError> {
    if (MIN_WIDTH..=MAX_WIDTH).contains(&width) {
        Ok(())
    } else {
        Err(ArithError::UnsupportedWidth(width))
    }
}
