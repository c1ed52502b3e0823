use super::{lod, AdderFlips, ArithError, Family, MulOutcome, MultConfig, UWord};

/// Mitchell's logarithmic multiplier with mantissa truncation `cfg.trunc`.
pub fn mitchell_mul(a: UWord, b: UWord, cfg: &MultConfig) -> Result<MulOutcome, ArithError> {
    expect_family(cfg, Family::Mitchell)?;
    check_operands(a, b, cfg)?;
    log_mul(a, b, cfg, 0, AdderFlips::NONE)
}

/// AdAM: Mitchell datapath plus a duplicated high-order adder slice.
///
/// `flips` are applied to the primary adder output before the duplicate
/// comparison. A mismatch inside the duplicated slice sets
/// `fault_detected` and zeroes the disagreeing sum bits before the antilog.
pub fn adam_mul(
    a: UWord,
    b: UWord,
    cfg: &MultConfig,
    flips: AdderFlips,
) -> Result<MulOutcome, ArithError> {
    expect_family(cfg, Family::Adam)?;
    check_operands(a, b, cfg)?;
    log_mul(a, b, cfg, cfg.dup, flips)
}

/// Number of high-order mantissa-adder sum bits duplicated for this operand
/// pair (the carry-out is compared as well whenever this is nonzero).
///
/// The mantissa of an operand with leading one at `k` carries only `k`
/// significant bits, so the larger operand leaves `w - min(k_max, w)` low
/// adder positions unused. Those positions host the duplicate, capped by
/// the duplication level `h`. Zero operands and the non-AdAM families
/// duplicate nothing.
pub fn duplication_span(a: UWord, b: UWord, cfg: &MultConfig) -> u32 {
    if cfg.family != Family::Adam || a.value() == 0 || b.value() == 0 {
        return 0;
    }
    let k_max = a.value().max(b.value()).ilog2();
    span(k_max, cfg.mantissa_width(), cfg.dup)
}

fn span(k_max: u32, w: u32, dup: u32) -> u32 {
    let unused = w - k_max.min(w);
    dup.min(unused)
}

pub(super) fn log_mul(
    a: UWord,
    b: UWord,
    cfg: &MultConfig,
    dup: u32,
    flips: AdderFlips,
) -> Result<MulOutcome, ArithError> {
    let w = cfg.mantissa_width();
    flips.check(w + 1)?;
    if a.value() == 0 || b.value() == 0 {
        // Zero products bypass the LOD and the adder entirely.
        return Ok(MulOutcome::clean(0));
    }
    let ka = lod(a)?.0;
    let kb = lod(b)?.0;
    let ma = mantissa(a.value(), ka, cfg);
    let mb = mantissa(b.value(), kb, cfg);

    let sum = ma + mb;
    let mut observed = sum ^ flips.mask();
    let mut outcome = MulOutcome::clean(0);

    let d = span(ka.max(kb), w, dup);
    if d > 0 {
        let lo = w - d;
        let low_mask = (1u32 << lo) - 1;
        let carry_in = ((ma & low_mask) + (mb & low_mask)) >> lo;
        let duplicate = (ma >> lo) + (mb >> lo) + carry_in;
        let mismatch = ((observed >> lo) ^ duplicate) << lo;
        if mismatch != 0 {
            observed &= !mismatch;
            outcome.fault_detected = true;
            outcome.mitigated = true;
        }
    }

    outcome.product = antilog(observed, ka + kb, w);
    Ok(outcome)
}

/// Truncated mantissa: the `n - 1` bits below the leading one, minus the low
/// `t` bits.
fn mantissa(x: u32, k: u32, cfg: &MultConfig) -> u32 {
    let n = cfg.width;
    let frac_mask = (1u32 << (n - 1)) - 1;
    ((x << (n - 1 - k)) & frac_mask) >> cfg.trunc
}

/// Piecewise antilog of `2^k * (1 + sum / 2^w)`: without carry-out the
/// implicit one is prepended; with carry-out the sum already holds it and
/// the characteristic grows by one. Fractional bits are dropped.
fn antilog(sum: u32, k: u32, w: u32) -> u64 {
    let sum = u64::from(sum);
    if sum >> w == 0 {
        ((1u64 << w) | sum) << k >> w
    } else {
        sum << (k + 1) >> w
    }
}

fn expect_family(cfg: &MultConfig, expected: Family) -> Result<(), ArithError> {
    if cfg.family != expected {
        return Err(ArithError::FamilyMismatch { expected, found: cfg.family });
    }
    cfg.validate()
}

fn check_operands(a: UWord, b: UWord, cfg: &MultConfig) -> Result<(), ArithError> {
    for x in [a, b] {
        if x.width() != cfg.width {
            return Err(ArithError::InvalidConfig(format!(
                "{}-bit operand passed to a {}-bit multiplier",
                x.width(),
                cfg.width
            )));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn w8(v: u32) -> UWord {
        UWord::new(v, 8).unwrap()
    }

    #[test]
    fn powers_of_two_are_exact() {
        let cfg = MultConfig::mitchell(8, 0);
        assert_eq!(mitchell_mul(w8(4), w8(8), &cfg).unwrap().product, 32);
    }

    #[test]
    fn three_times_three_underestimates() {
        let cfg = MultConfig::mitchell(8, 0);
        let out = mitchell_mul(w8(3), w8(3), &cfg).unwrap();
        assert_eq!(out.product, 8);
        assert!(!out.fault_detected);
    }

    #[test]
    fn zero_short_circuits() {
        let cfg = MultConfig::adam(8, 0, 4);
        let out = adam_mul(w8(0), w8(200), &cfg, AdderFlips::single(6)).unwrap();
        assert_eq!(out, MulOutcome::clean(0));
    }

    #[test]
    fn family_is_checked() {
        let cfg = MultConfig::adam(8, 0, 4);
        assert!(matches!(
            mitchell_mul(w8(3), w8(3), &cfg),
            Err(ArithError::FamilyMismatch { .. })
        ));
    }

    #[test]
    fn duplicated_flip_is_detected_and_mitigated() {
        // k_max = 3 leaves 4 of 7 adder positions unused; h = 4 duplicates sum
        // bits 3..=6 plus the carry.
        let cfg = MultConfig::adam(8, 0, 4);
        let (a, b) = (w8(9), w8(12));
        assert_eq!(duplication_span(a, b, &cfg), 4);
        let out = adam_mul(a, b, &cfg, AdderFlips::single(5)).unwrap();
        assert!(out.fault_detected && out.mitigated);
    }

    #[test]
    fn undetected_low_flip_changes_product() {
        let cfg = MultConfig::adam(8, 0, 4);
        let (a, b) = (w8(8), w8(8));
        let clean = adam_mul(a, b, &cfg, AdderFlips::NONE).unwrap();
        let out = adam_mul(a, b, &cfg, AdderFlips::single(2)).unwrap();
        assert!(!out.fault_detected);
        assert_ne!(out.product, clean.product);
    }

    #[test]
    fn flip_outside_adder_is_rejected() {
        let cfg = MultConfig::adam(8, 2, 4);
        // w = 5, adder output is 6 bits wide.
        assert!(adam_mul(w8(3), w8(3), &cfg, AdderFlips::single(5)).is_ok());
        assert_eq!(
            adam_mul(w8(3), w8(3), &cfg, AdderFlips::single(6)),
            Err(ArithError::AdderBitOutOfRange { bit: 6, width: 6 })
        );
    }

    #[test]
    fn large_operands_get_no_duplicate() {
        let cfg = MultConfig::adam(8, 0, 7);
        assert_eq!(duplication_span(w8(200), w8(3), &cfg), 0);
        assert_eq!(duplication_span(w8(1), w8(1), &cfg), 7);
    }
}
