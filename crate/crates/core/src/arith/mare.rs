use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{AdderFlips, ArithError, MultConfig};

/// Widest operand for which an exhaustive sweep is allowed.
pub const EXHAUSTIVE_MAX_WIDTH: u32 = 8;

const SAMPLE_CHUNK: u64 = 1 << 16;

/// Operand-pair population for a MARE measurement.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SamplePolicy {
    /// Every operand pair.
    Exhaustive,
    /// `count` uniform pairs drawn from the ChaCha8 stream of `seed`; pair
    /// `i` always uses stream word `2i`, so the sample set is independent
    /// of chunking and thread count.
    Sampled { count: u64, seed: u64 },
}

/// Mean absolute relative error, in percent, over pairs with nonzero exact
/// product.
///
/// The reduction is done in fixed chunks summed in index order, so the
/// result does not depend on the rayon schedule.
pub fn mare(cfg: &MultConfig, policy: SamplePolicy) -> Result<f64, ArithError> {
    cfg.validate()?;
    let partials: Vec<Partial> = match policy {
        SamplePolicy::Exhaustive => {
            if cfg.width > EXHAUSTIVE_MAX_WIDTH {
                return Err(ArithError::ExhaustiveTooLarge(cfg.width));
            }
            let top = 1u32 << cfg.width;
            (1..top)
                .into_par_iter()
                .map(|a| {
                    let mut acc = Partial::default();
                    for b in 1..top {
                        acc.add(relative_error(cfg, a, b));
                    }
                    acc
                })
                .collect()
        }
        SamplePolicy::Sampled { count, seed } => {
            let mask = (1u64 << cfg.width) - 1;
            let chunks = count.div_ceil(SAMPLE_CHUNK);
            (0..chunks)
                .into_par_iter()
                .map(|c| {
                    let start = c * SAMPLE_CHUNK;
                    let end = (start + SAMPLE_CHUNK).min(count);
                    let mut rng = ChaCha8Rng::seed_from_u64(seed);
                    rng.set_word_pos(u128::from(start) * 2);
                    let mut acc = Partial::default();
                    for _ in start..end {
                        let x = rng.next_u64();
                        let a = (x & mask) as u32;
                        let b = ((x >> 32) & mask) as u32;
                        if a != 0 && b != 0 {
                            acc.add(relative_error(cfg, a, b));
                        }
                    }
                    acc
                })
                .collect()
        }
    };

    let mut total = Partial::default();
    for p in &partials {
        total.merge(p);
    }
    if total.count == 0 {
        return Ok(0.0);
    }
    Ok(100.0 * total.sum() / total.count as f64)
}

fn relative_error(cfg: &MultConfig, a: u32, b: u32) -> f64 {
    let exact = u64::from(a) * u64::from(b);
    let approx = cfg
        .multiply(a, b, AdderFlips::NONE)
        .expect("validated operands")
        .product;
    exact.abs_diff(approx) as f64 / exact as f64
}

/// Neumaier-compensated running sum.
#[derive(Debug, Default, Clone, Copy)]
struct Partial {
    sum: f64,
    comp: f64,
    count: u64,
}

impl Partial {
    fn add(&mut self, x: f64) {
        self.push(x);
        self.count += 1;
    }

    fn push(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    fn merge(&mut self, other: &Partial) {
        self.push(other.sum);
        self.push(other.comp);
        self.count += other.count;
    }

    fn sum(&self) -> f64 {
        self.sum + self.comp
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_is_zero() {
        assert_eq!(mare(&MultConfig::exact(8), SamplePolicy::Exhaustive).unwrap(), 0.0);
        let sampled = SamplePolicy::Sampled { count: 10_000, seed: 1 };
        assert_eq!(mare(&MultConfig::exact(16), sampled).unwrap(), 0.0);
    }

    #[test]
    fn exhaustive_16_bit_is_refused() {
        assert_eq!(
            mare(&MultConfig::mitchell(16, 0), SamplePolicy::Exhaustive),
            Err(ArithError::ExhaustiveTooLarge(16))
        );
    }

    #[test]
    fn sampled_is_reproducible() {
        let cfg = MultConfig::adam(16, 4, 4);
        let p = SamplePolicy::Sampled { count: 200_003, seed: 42 };
        assert_eq!(mare(&cfg, p).unwrap().to_bits(), mare(&cfg, p).unwrap().to_bits());
        let q = SamplePolicy::Sampled { count: 200_003, seed: 43 };
        assert_ne!(mare(&cfg, p).unwrap(), mare(&cfg, q).unwrap());
    }
}
