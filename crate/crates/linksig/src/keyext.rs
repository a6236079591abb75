//! Key bits from link signatures: 32-level quantization, 5-bit binary
//! expansion, key cutting, and challenge-response reconciliation.

use crate::chansynth::ChannelImpulseResponse;
use crate::{Error, Result};

/// Number of quantization levels (5 bits per signature point).
pub const LEVELS: u8 = 32;
/// Bits contributed by one quantized point.
pub const BITS_PER_LEVEL: usize = 5;
/// Default secret-key length in bits.
pub const DEFAULT_KEY_BITS: usize = 75;

/// A CIR quantized to integer levels in `[0, 31]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QuantizedSignature {
    pub levels: Vec<u8>,
    pub source_length: usize,
}

/// An extracted bit key.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BitKey {
    pub bits: Vec<bool>,
}

impl BitKey {
    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    /// ASCII serialization: one '0'/'1' per bit.
    pub fn to_bit_string(&self) -> String {
        self.bits.iter().map(|&b| if b { '1' } else { '0' }).collect()
    }

    pub fn from_bit_string(s: &str) -> Result<Self> {
        let mut bits = Vec::with_capacity(s.len());
        for (i, ch) in s.chars().enumerate() {
            match ch {
                '0' => bits.push(false),
                '1' => bits.push(true),
                _ => {
                    return Err(Error::Parse {
                        line: 1,
                        msg: format!("bit string has {ch:?} at position {i}"),
                    })
                }
            }
        }
        Ok(BitKey { bits })
    }
}

/// Normalize by the peak tap, multiply by 32, round half-up, clamp to 31.
///
/// The literal rule maps the peak to 32, outside the stated [0, 31] range;
/// the clamp pins it to 31.
pub fn quantize(cir: &ChannelImpulseResponse) -> Result<QuantizedSignature> {
    let max = cir.max_tap();
    if !(max > 0.0) {
        return Err(Error::AllZeroCir);
    }
    let levels = cir
        .taps
        .iter()
        .map(|&tap| {
            let v = (f64::from(LEVELS) * tap / max).round();
            (v.min(f64::from(LEVELS - 1)).max(0.0)) as u8
        })
        .collect();
    Ok(QuantizedSignature {
        levels,
        source_length: cir.len(),
    })
}

/// Concatenate each level as exactly 5 bits, most significant first.
pub fn to_bits(q: &QuantizedSignature) -> Vec<bool> {
    let mut bits = Vec::with_capacity(q.levels.len() * BITS_PER_LEVEL);
    for &level in &q.levels {
        for shift in (0..BITS_PER_LEVEL).rev() {
            bits.push(level >> shift & 1 == 1);
        }
    }
    bits
}

/// Decode 5-bit groups back to levels; inverse of [`to_bits`].
pub fn levels_from_bits(bits: &[bool]) -> Result<Vec<u8>> {
    if bits.len() % BITS_PER_LEVEL != 0 {
        return Err(Error::LengthMismatch {
            left: bits.len(),
            right: bits.len() / BITS_PER_LEVEL * BITS_PER_LEVEL,
        });
    }
    Ok(bits
        .chunks(BITS_PER_LEVEL)
        .map(|chunk| chunk.iter().fold(0u8, |acc, &b| acc << 1 | u8::from(b)))
        .collect())
}

/// Contiguous `[offset, offset + key_length)` slice of the bit stream.
pub fn cut_key(bits: &[bool], key_length: usize, offset: usize) -> Result<BitKey> {
    let end = offset
        .checked_add(key_length)
        .ok_or_else(|| Error::OutOfRange("key slice overflows".into()))?;
    if end > bits.len() {
        return Err(Error::OutOfRange(format!(
            "slice [{offset}, {end}) exceeds the {}-bit stream",
            bits.len()
        )));
    }
    Ok(BitKey {
        bits: bits[offset..end].to_vec(),
    })
}

/// Quantize, expand to bits, and cut: the whole extraction pipeline.
pub fn extract_key(
    cir: &ChannelImpulseResponse,
    key_length: usize,
    offset: usize,
) -> Result<BitKey> {
    let q = quantize(cir)?;
    cut_key(&to_bits(&q), key_length, offset)
}

/// Fraction of positions where the two keys agree.
pub fn bit_agreement_rate(a: &BitKey, b: &BitKey) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    if a.is_empty() {
        return Err(Error::InvalidConfig("empty keys".into()));
    }
    let same = a.bits.iter().zip(&b.bits).filter(|(x, y)| x == y).count();
    Ok(same as f64 / a.len() as f64)
}

/// Result of a reconciliation session.
#[derive(Debug, Clone, PartialEq)]
pub enum ReconcileOutcome {
    /// Both parties extracted the same key in `rounds` attempts.
    Agreed { key: BitKey, rounds: usize },
    /// All rounds mismatched; carries the last round's agreement rate.
    Failed { rounds: usize, final_agreement: f64 },
}

/// Re-measure and re-extract until both keys match, up to `max_rounds`.
///
/// `pair_sampler(round)` yields one fresh pair of CIR measurements (party A,
/// party B). Verification models the challenge-response exchange as exact
/// key equality.
pub fn reconcile<F>(
    mut pair_sampler: F,
    key_length: usize,
    offset: usize,
    max_rounds: usize,
) -> Result<ReconcileOutcome>
where
    F: FnMut(usize) -> Result<(ChannelImpulseResponse, ChannelImpulseResponse)>,
{
    if max_rounds == 0 {
        return Err(Error::InvalidConfig("max_rounds must be >= 1".into()));
    }
    let mut last_agreement = 0.0;
    for round in 1..=max_rounds {
        let (cir_a, cir_b) = pair_sampler(round)?;
        let key_a = extract_key(&cir_a, key_length, offset)?;
        let key_b = extract_key(&cir_b, key_length, offset)?;
        if key_a == key_b {
            return Ok(ReconcileOutcome::Agreed {
                key: key_a,
                rounds: round,
            });
        }
        last_agreement = bit_agreement_rate(&key_a, &key_b)?;
    }
    Ok(ReconcileOutcome::Failed {
        rounds: max_rounds,
        final_agreement: last_agreement,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chansynth::DEFAULT_SAMPLING_INTERVAL;
    use proptest::prelude::*;

    fn cir(taps: Vec<f64>) -> ChannelImpulseResponse {
        ChannelImpulseResponse {
            taps,
            sampling_interval: DEFAULT_SAMPLING_INTERVAL,
        }
    }

    #[test]
    fn worked_quantization_example() {
        let q = quantize(&cir(vec![0.5, 1.0, 0.25])).unwrap();
        assert_eq!(q.levels, vec![16, 31, 8]);
        let bits = to_bits(&q);
        let s: String = bits.iter().map(|&b| if b { '1' } else { '0' }).collect();
        assert_eq!(s, "100001111101000");
    }

    #[test]
    fn equal_taps_peg_to_the_top_level() {
        let q = quantize(&cir(vec![0.7; 6])).unwrap();
        assert!(q.levels.iter().all(|&l| l == 31));
    }

    #[test]
    fn all_zero_cir_is_rejected() {
        assert!(matches!(quantize(&cir(vec![0.0; 8])), Err(Error::AllZeroCir)));
    }

    #[test]
    fn fifty_taps_give_250_bits() {
        let taps: Vec<f64> = (1..=50).map(|i| i as f64).collect();
        let q = quantize(&cir(taps)).unwrap();
        assert_eq!(to_bits(&q).len(), 250);
    }

    #[test]
    fn zero_level_encodes_as_five_zeros() {
        let bits = to_bits(&QuantizedSignature {
            levels: vec![0],
            source_length: 1,
        });
        assert_eq!(bits, vec![false; 5]);
    }

    #[test]
    fn cut_key_slices() {
        let taps: Vec<f64> = (1..=50).map(|i| i as f64).collect();
        let bits = to_bits(&quantize(&cir(taps)).unwrap());
        let first = cut_key(&bits, 75, 0).unwrap();
        assert_eq!(first.bits, bits[..75].to_vec());
        let identity = cut_key(&bits, bits.len(), 0).unwrap();
        assert_eq!(identity.bits, bits);
        let tail = cut_key(&bits, 75, bits.len() - 75).unwrap();
        assert_eq!(tail.bits, bits[175..].to_vec());
        assert!(cut_key(&bits, 75, 200).is_err());
    }

    #[test]
    fn agreement_rate_counts_matches() {
        let a = BitKey::from_bit_string(&"1".repeat(75)).unwrap();
        assert_eq!(bit_agreement_rate(&a, &a).unwrap(), 1.0);
        let b = BitKey::from_bit_string(&"0".repeat(75)).unwrap();
        assert_eq!(bit_agreement_rate(&a, &b).unwrap(), 0.0);
        let mut c = a.clone();
        c.bits[10] = false;
        assert!((bit_agreement_rate(&a, &c).unwrap() - 74.0 / 75.0).abs() < 1e-12);
        let short = BitKey::from_bit_string("101").unwrap();
        assert!(bit_agreement_rate(&a, &short).is_err());
    }

    #[test]
    fn bit_string_round_trip() {
        let key = BitKey::from_bit_string("10011").unwrap();
        assert_eq!(key.to_bit_string(), "10011");
        assert!(BitKey::from_bit_string("10x1").is_err());
    }

    #[test]
    fn identical_measurements_reconcile_in_one_round() {
        let base = cir(vec![
            0.5, 1.0, 0.25, 0.125, 0.75, 0.9, 0.1, 0.3, 0.55, 0.42, 0.61, 0.15, 0.33, 0.08, 0.97,
        ]);
        let outcome = reconcile(|_| Ok((base.clone(), base.clone())), 75, 0, 5).unwrap();
        match outcome {
            ReconcileOutcome::Agreed { rounds, .. } => assert_eq!(rounds, 1),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn fixed_distinct_measurements_never_reconcile() {
        let a = cir(vec![0.5, 1.0, 0.25]);
        let b = cir(vec![1.0, 0.5, 0.25]);
        let outcome = reconcile(|_| Ok((a.clone(), b.clone())), 15, 0, 7).unwrap();
        match outcome {
            ReconcileOutcome::Failed {
                rounds,
                final_agreement,
            } => {
                assert_eq!(rounds, 7);
                assert!(final_agreement < 1.0);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn mean_rounds_follow_the_geometric_law() {
        use rand::{Rng, SeedableRng};
        let base: Vec<f64> = (0..15).map(|i| 0.2 + 0.05 * i as f64).collect();
        let sigma = 0.004;
        let noisy = |rng: &mut rand_chacha::ChaCha8Rng| {
            let taps: Vec<f64> = base
                .iter()
                .map(|&t| (t + sigma * rng.gen_range(-1.0..1.0)).max(0.0))
                .collect();
            cir(taps)
        };

        // measure the per-round agreement probability
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(500);
        let probes = 4000;
        let mut agreements = 0;
        for _ in 0..probes {
            let ka = extract_key(&noisy(&mut rng), 75, 0).unwrap();
            let kb = extract_key(&noisy(&mut rng), 75, 0).unwrap();
            if ka == kb {
                agreements += 1;
            }
        }
        let p = agreements as f64 / probes as f64;
        assert!(p > 0.1 && p < 0.9, "tune sigma: p = {p}");

        let trials = 1000;
        let mut total_rounds = 0usize;
        for t in 0..trials {
            let mut trial_rng = rand_chacha::ChaCha8Rng::seed_from_u64(9000 + t);
            let outcome = reconcile(
                |_| Ok((noisy(&mut trial_rng), noisy(&mut trial_rng))),
                75,
                0,
                400,
            )
            .unwrap();
            match outcome {
                ReconcileOutcome::Agreed { rounds, .. } => total_rounds += rounds,
                ReconcileOutcome::Failed { .. } => panic!("p is far from zero"),
            }
        }
        let mean_rounds = total_rounds as f64 / trials as f64;
        let expected = 1.0 / p;
        assert!(
            (mean_rounds - expected).abs() <= 0.15 * expected,
            "mean {mean_rounds} vs 1/p {expected}"
        );
    }

    proptest! {
        #[test]
        fn scale_invariance(
            taps in proptest::collection::vec(1e-6f64..1.0, 1..64),
            scale in 1e-3f64..1e6,
        ) {
            let original = quantize(&cir(taps.clone())).unwrap();
            let scaled = quantize(&cir(taps.iter().map(|t| t * scale).collect())).unwrap();
            prop_assert_eq!(original, scaled);
        }

        #[test]
        fn bits_round_trip(levels in proptest::collection::vec(0u8..32, 1..64)) {
            let q = QuantizedSignature { source_length: levels.len(), levels };
            let decoded = levels_from_bits(&to_bits(&q)).unwrap();
            prop_assert_eq!(decoded, q.levels);
        }

        #[test]
        fn pipeline_is_deterministic(taps in proptest::collection::vec(0.0f64..1.0, 15..50)) {
            prop_assume!(taps.iter().any(|&t| t > 0.0));
            let a = extract_key(&cir(taps.clone()), 75, 0).unwrap();
            let b = extract_key(&cir(taps), 75, 0).unwrap();
            prop_assert_eq!(a, b);
        }
    }
}
