//! Reproducible fault plans and bit-flip injection.
//!
//! A [`FaultPlan`] is an immutable, sorted list of single-bit sites. Plans are
//! built from a seed with a counter-based generator (ChaCha8, one 64-bit draw
//! per candidate bit at a fixed stream position), so the same
//! `(shape, ber, seed, stream)` always yields the same plan regardless of how
//! the work is split.
//!
//! Text format (one site per line, after a header):
//!
//! ```text
//! # ftqnn fault plan v1
//! seed=42
//! ber=0.001
//! kind,target,element,bit,invocation
//! weight,0,17,3,0
//! ```
//!
//! `ber=-` marks a hand-built plan.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use rand::seq::index;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

const HEADER: &str = "# ftqnn fault plan v1";
const COLUMNS: &str = "kind,target,element,bit,invocation";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FaultError {
    #[error("{what} index {index} out of range (limit {limit})")]
    IndexOutOfRange { what: &'static str, index: u64, limit: u64 },
    #[error("bit error rate {0} outside [0, 1]")]
    InvalidBer(f64),
    #[error("fault plan line {line}: {message}")]
    Parse { line: usize, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum SiteKind {
    /// Persistent flip of a stored weight word.
    WeightBit,
    /// Transient flip of a quantized activation word during one inference.
    ActivationBit,
    /// Transient flip of a mantissa-adder output bit in one multiplication.
    AdderInternalBit,
}

impl SiteKind {
    fn as_str(self) -> &'static str {
        match self {
            SiteKind::WeightBit => "weight",
            SiteKind::ActivationBit => "activation",
            SiteKind::AdderInternalBit => "adder",
        }
    }
}

impl FromStr for SiteKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "weight" => Ok(SiteKind::WeightBit),
            "activation" => Ok(SiteKind::ActivationBit),
            "adder" => Ok(SiteKind::AdderInternalBit),
            other => Err(format!("unknown site kind `{other}`")),
        }
    }
}

/// One single-bit fault location.
///
/// `target` is the layer index. `element` indexes the weight word, the
/// layer-input activation word, or the MAC position
/// (`output_index * reduction_len + reduction_index`) depending on `kind`.
/// `invocation` is the sample index within an evaluated batch for transient
/// kinds and 0 for weights.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct FaultSite {
    pub kind: SiteKind,
    pub target: u32,
    pub element: u64,
    pub bit: u32,
    pub invocation: u64,
}

impl FaultSite {
    pub fn weight(target: u32, element: u64, bit: u32) -> Self {
        Self { kind: SiteKind::WeightBit, target, element, bit, invocation: 0 }
    }

    pub fn activation(target: u32, element: u64, bit: u32, invocation: u64) -> Self {
        Self { kind: SiteKind::ActivationBit, target, element, bit, invocation }
    }

    pub fn adder(target: u32, element: u64, bit: u32, invocation: u64) -> Self {
        Self { kind: SiteKind::AdderInternalBit, target, element, bit, invocation }
    }
}

/// Seed plus stream selector for the counter-based generator.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RngSpec {
    pub seed: u64,
    pub stream_id: u64,
}

impl RngSpec {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        Self { seed, stream_id }
    }

    pub(crate) fn generator(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream_id);
        rng
    }
}

/// A stored tensor as seen by the weight-fault planner.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WordTensor {
    pub target: u32,
    pub len: usize,
    /// Stored word width in bits, including any redundant copies.
    pub width: u32,
}

impl WordTensor {
    fn bits(&self) -> u64 {
        self.len as u64 * u64::from(self.width)
    }
}

/// How many sites a BER plan draws.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BerMode {
    /// Every bit flips independently with probability `ber`.
    #[default]
    Bernoulli,
    /// Exactly `round(ber * total_bits)` distinct bits flip.
    FixedCount,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct FaultPlan {
    sites: Vec<FaultSite>,
    seed: u64,
    ber: Option<f64>,
}

impl FaultPlan {
    pub fn empty() -> Self {
        Self::default()
    }

    /// Hand-built plan; sites are sorted and deduplicated.
    pub fn from_sites(sites: impl IntoIterator<Item = FaultSite>, seed: u64, ber: Option<f64>) -> Self {
        let sites: BTreeSet<FaultSite> = sites.into_iter().collect();
        Self { sites: sites.into_iter().collect(), seed, ber }
    }

    pub fn sites(&self) -> &[FaultSite] {
        &self.sites
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn ber(&self) -> Option<f64> {
        self.ber
    }

    pub fn len(&self) -> usize {
        self.sites.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sites.is_empty()
    }

    /// Union of two plans, keeping this plan's seed and BER. Used to build
    /// multi-bit fault patterns from single-bit plans.
    pub fn union(&self, other: &FaultPlan) -> FaultPlan {
        FaultPlan::from_sites(
            self.sites.iter().chain(other.sites.iter()).copied(),
            self.seed,
            self.ber,
        )
    }

    pub fn of_kind(&self, kind: SiteKind) -> impl Iterator<Item = &FaultSite> {
        self.sites.iter().filter(move |s| s.kind == kind)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        out.push_str(HEADER);
        out.push('\n');
        out.push_str(&format!("seed={}\n", self.seed));
        match self.ber {
            Some(ber) => out.push_str(&format!("ber={ber:?}\n")),
            None => out.push_str("ber=-\n"),
        }
        out.push_str(COLUMNS);
        out.push('\n');
        for s in &self.sites {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                s.kind.as_str(),
                s.target,
                s.element,
                s.bit,
                s.invocation
            ));
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self, FaultError> {
        let err = |line: usize, message: String| FaultError::Parse { line, message };
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim_end_matches('\r')));

        let mut next = |expect: &str| {
            lines
                .next()
                .ok_or_else(|| err(0, format!("missing {expect}")))
        };
        let (n, header) = next("header")?;
        if header != HEADER {
            return Err(err(n, format!("expected `{HEADER}`")));
        }
        let (n, seed_line) = next("seed")?;
        let seed = seed_line
            .strip_prefix("seed=")
            .and_then(|v| v.parse::<u64>().ok())
            .ok_or_else(|| err(n, "expected `seed=<u64>`".into()))?;
        let (n, ber_line) = next("ber")?;
        let ber = match ber_line.strip_prefix("ber=") {
            Some("-") => None,
            Some(v) => Some(
                v.parse::<f64>()
                    .map_err(|_| err(n, format!("bad ber value `{v}`")))?,
            ),
            None => return Err(err(n, "expected `ber=<f64|->`".into())),
        };
        if let Some(b) = ber {
            check_ber(b)?;
        }
        let (n, cols) = next("column header")?;
        if cols != COLUMNS {
            return Err(err(n, format!("expected `{COLUMNS}`")));
        }

        let mut sites = Vec::new();
        for (n, line) in lines {
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 5 {
                return Err(err(n, format!("expected 5 fields, found {}", fields.len())));
            }
            let kind = fields[0].parse::<SiteKind>().map_err(|m| err(n, m))?;
            let num = |i: usize| {
                fields[i]
                    .parse::<u64>()
                    .map_err(|_| err(n, format!("bad integer `{}`", fields[i])))
            };
            let target = u32::try_from(num(1)?).map_err(|_| err(n, "target too large".into()))?;
            let bit = u32::try_from(num(3)?).map_err(|_| err(n, "bit too large".into()))?;
            sites.push(FaultSite { kind, target, element: num(2)?, bit, invocation: num(4)? });
        }
        let plan = FaultPlan::from_sites(sites.iter().copied(), seed, ber);
        if plan.len() != sites.len() {
            return Err(err(0, "duplicate or unsorted sites".into()));
        }
        if plan.sites != sites {
            return Err(err(0, "sites are not in canonical order".into()));
        }
        Ok(plan)
    }
}

impl fmt::Display for FaultPlan {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_text())
    }
}

fn check_ber(ber: f64) -> Result<(), FaultError> {
    if (0.0..=1.0).contains(&ber) {
        Ok(())
    } else {
        Err(FaultError::InvalidBer(ber))
    }
}

/// Uniform draw in [0, 1) from the top 53 bits.
fn unit(x: u64) -> f64 {
    (x >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Weight-memory BER plan over the given tensors.
///
/// Bits are linearized tensor by tensor, word by word, low bit first; bit
/// `i` of that order flips when draw `i` of the `(seed, stream_id)` stream
/// falls below `ber`.
pub fn plan_ber_weight_faults(
    shape: &[WordTensor],
    ber: f64,
    rng: RngSpec,
) -> Result<FaultPlan, FaultError> {
    plan_ber_weight_faults_with(shape, ber, rng, BerMode::Bernoulli)
}

pub fn plan_ber_weight_faults_with(
    shape: &[WordTensor],
    ber: f64,
    rng: RngSpec,
    mode: BerMode,
) -> Result<FaultPlan, FaultError> {
    check_ber(ber)?;
    let total: u64 = shape.iter().map(WordTensor::bits).sum();
    let mut gen = rng.generator();
    let mut sites = Vec::new();
    match mode {
        BerMode::Bernoulli => {
            if ber > 0.0 {
                for_each_bit(shape, |site| {
                    if unit(gen.next_u64()) < ber {
                        sites.push(site);
                    }
                });
            }
        }
        BerMode::FixedCount => {
            let count = ((ber * total as f64).round() as u64).min(total);
            let total = usize::try_from(total).expect("bit count fits in usize");
            let mut chosen: Vec<usize> =
                index::sample(&mut gen, total, count as usize).into_iter().collect();
            chosen.sort_unstable();
            let mut next = chosen.into_iter().peekable();
            let mut linear = 0usize;
            for_each_bit(shape, |site| {
                if next.peek() == Some(&linear) {
                    sites.push(site);
                    next.next();
                }
                linear += 1;
            });
        }
    }
    Ok(FaultPlan::from_sites(sites, rng.seed, Some(ber)))
}

fn for_each_bit(shape: &[WordTensor], mut f: impl FnMut(FaultSite)) {
    for t in shape {
        for element in 0..t.len as u64 {
            for bit in 0..t.width {
                f(FaultSite::weight(t.target, element, bit));
            }
        }
    }
}

/// Activation words feeding one layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ActivationTarget {
    pub layer: u32,
    pub len: usize,
    pub width: u32,
}

/// A plan holding exactly one activation-bit site.
pub fn plan_single_activation_fault(
    target: ActivationTarget,
    element: u64,
    bit: u32,
    invocation: u64,
) -> Result<FaultPlan, FaultError> {
    if element >= target.len as u64 {
        return Err(FaultError::IndexOutOfRange {
            what: "activation element",
            index: element,
            limit: target.len as u64,
        });
    }
    if bit >= target.width {
        return Err(FaultError::IndexOutOfRange {
            what: "activation bit",
            index: u64::from(bit),
            limit: u64::from(target.width),
        });
    }
    Ok(FaultPlan::from_sites(
        [FaultSite::activation(target.layer, element, bit, invocation)],
        0,
        None,
    ))
}

/// XOR every weight site of `plan` aimed at `target` into a copy of `words`.
/// Sites of other targets or other kinds are ignored.
pub fn apply_word_faults(
    words: &[u32],
    width: u32,
    target: u32,
    plan: &FaultPlan,
) -> Result<Vec<u32>, FaultError> {
    let mut out = words.to_vec();
    for s in plan.of_kind(SiteKind::WeightBit).filter(|s| s.target == target) {
        let idx = usize::try_from(s.element)
            .ok()
            .filter(|&i| i < out.len())
            .ok_or(FaultError::IndexOutOfRange {
                what: "weight element",
                index: s.element,
                limit: out.len() as u64,
            })?;
        if s.bit >= width {
            return Err(FaultError::IndexOutOfRange {
                what: "weight bit",
                index: u64::from(s.bit),
                limit: u64::from(width),
            });
        }
        out[idx] ^= 1 << s.bit;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn one_tensor(len: usize, width: u32) -> [WordTensor; 1] {
        [WordTensor { target: 0, len, width }]
    }

    #[test]
    fn zero_ber_is_empty() {
        let plan = plan_ber_weight_faults(&one_tensor(100, 8), 0.0, RngSpec::new(1, 0)).unwrap();
        assert!(plan.is_empty());
        assert_eq!(plan.ber(), Some(0.0));
    }

    #[test]
    fn unit_ber_hits_every_bit_once() {
        let shape = [
            WordTensor { target: 0, len: 5, width: 8 },
            WordTensor { target: 1, len: 3, width: 10 },
        ];
        let plan = plan_ber_weight_faults(&shape, 1.0, RngSpec::new(9, 0)).unwrap();
        assert_eq!(plan.len(), 5 * 8 + 3 * 10);
        let words = vec![0u32; 3];
        let flipped = apply_word_faults(&words, 10, 1, &plan).unwrap();
        assert_eq!(flipped, vec![0x3ff; 3]);
    }

    #[test]
    fn invalid_ber_is_rejected() {
        assert_eq!(
            plan_ber_weight_faults(&one_tensor(1, 8), 1.5, RngSpec::new(0, 0)),
            Err(FaultError::InvalidBer(1.5))
        );
    }

    #[test]
    fn fixed_count_mode_draws_exact_count() {
        let shape = one_tensor(1000, 8);
        for seed in 0..20 {
            let plan = plan_ber_weight_faults_with(&shape, 1e-3, RngSpec::new(seed, 0), BerMode::FixedCount)
                .unwrap();
            assert_eq!(plan.len(), 8);
        }
    }

    #[test]
    fn streams_are_independent() {
        let shape = one_tensor(1000, 8);
        let a = plan_ber_weight_faults(&shape, 0.01, RngSpec::new(5, 0)).unwrap();
        let b = plan_ber_weight_faults(&shape, 0.01, RngSpec::new(5, 1)).unwrap();
        let c = plan_ber_weight_faults(&shape, 0.01, RngSpec::new(5, 0)).unwrap();
        assert_ne!(a, b);
        assert_eq!(a, c);
    }

    #[test]
    fn single_activation_plans() {
        let target = ActivationTarget { layer: 0, len: 4, width: 8 };
        let plan = plan_single_activation_fault(target, 0, 7, 0).unwrap();
        assert_eq!(plan.len(), 1);
        assert_eq!(plan.sites()[0].kind, SiteKind::ActivationBit);
        assert!(matches!(
            plan_single_activation_fault(target, 0, 8, 0),
            Err(FaultError::IndexOutOfRange { what: "activation bit", .. })
        ));
        assert!(plan_single_activation_fault(target, 4, 0, 0).is_err());

        let mut all = BTreeSet::new();
        for e in 0..4 {
            for b in 0..8 {
                all.insert(plan_single_activation_fault(target, e, b, 0).unwrap().to_text());
            }
        }
        assert_eq!(all.len(), 32);
    }

    #[test]
    fn apply_examples() {
        let plan = FaultPlan::from_sites([FaultSite::weight(0, 0, 2)], 0, None);
        assert_eq!(apply_word_faults(&[0b0000], 4, 0, &plan).unwrap(), vec![0b0100]);
        assert_eq!(apply_word_faults(&[7, 9], 4, 0, &FaultPlan::empty()).unwrap(), vec![7, 9]);
        let bad = FaultPlan::from_sites([FaultSite::weight(0, 3, 0)], 0, None);
        assert!(apply_word_faults(&[1, 2], 4, 0, &bad).is_err());
        let wide = FaultPlan::from_sites([FaultSite::weight(0, 0, 4)], 0, None);
        assert!(apply_word_faults(&[1], 4, 0, &wide).is_err());
    }

    #[test]
    fn text_round_trip_is_exact() {
        let plan = plan_ber_weight_faults(&one_tensor(300, 10), 0.0123456789, RngSpec::new(77, 3))
            .unwrap()
            .union(&FaultPlan::from_sites(
                [FaultSite::activation(1, 5, 7, 12), FaultSite::adder(0, 99, 3, 4)],
                0,
                None,
            ));
        let text = plan.to_text();
        let back = FaultPlan::parse(&text).unwrap();
        assert_eq!(back, plan);
        assert_eq!(back.ber().unwrap().to_bits(), 0.0123456789f64.to_bits());
        assert_eq!(back.to_text(), text);
    }

    #[test]
    fn parse_errors_name_the_line() {
        let text = format!("{HEADER}\nseed=1\nber=-\n{COLUMNS}\nweight,0,x,1,0\n");
        assert!(matches!(FaultPlan::parse(&text), Err(FaultError::Parse { line: 5, .. })));
        assert!(FaultPlan::parse("nonsense").is_err());
    }

    proptest! {
        #[test]
        fn double_application_restores_words(
            words in proptest::collection::vec(0u32..1024, 1..64),
            ber in 0.0f64..0.5,
            seed in any::<u64>(),
        ) {
            let shape = [WordTensor { target: 2, len: words.len(), width: 10 }];
            let plan = plan_ber_weight_faults(&shape, ber, RngSpec::new(seed, 0)).unwrap();
            let once = apply_word_faults(&words, 10, 2, &plan).unwrap();
            let twice = apply_word_faults(&once, 10, 2, &plan).unwrap();
            prop_assert_eq!(twice, words);
        }

        #[test]
        fn plans_are_deterministic(len in 1usize..200, ber in 0.0f64..1.0, seed in any::<u64>()) {
            let shape = one_tensor(len, 8);
            let a = plan_ber_weight_faults(&shape, ber, RngSpec::new(seed, 0)).unwrap();
            let b = plan_ber_weight_faults(&shape, ber, RngSpec::new(seed, 0)).unwrap();
            prop_assert_eq!(a, b);
        }
    }
}
