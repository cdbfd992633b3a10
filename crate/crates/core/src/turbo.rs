//! Rate-1/2 four-state parallel-concatenated convolutional code with QPSK
//! mapping, and a BCJR decoder driven by generic per-edge transition
//! metrics.
//!
//! The decoder works on externally supplied gamma tables rather than scalar
//! channel LLRs: in the MIMO detector the systematic and parity bits of an
//! edge select a QPSK symbol jointly, so the transition likelihood does not
//! factor per bit.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::Cplx;

/// Posterior and extrinsic LLRs are clamped to this magnitude so the
/// certainty limit stays finite.
pub const LLR_CLAMP: f64 = 50.0;

/// Recursive systematic convolutional constituent code, tabulated as
/// `state x input bit -> (next state, parity bit)`.
#[derive(Debug, Clone)]
pub struct RscCode {
    /// Feedback polynomial, bit `i` = coefficient of `D^i`.
    pub feedback: u32,
    /// Feedforward polynomial, bit `i` = coefficient of `D^i`.
    pub feedforward: u32,
    memory: usize,
    next_state: Vec<[usize; 2]>,
    parity: Vec<[u8; 2]>,
}

impl RscCode {
    /// Builds the trellis tables for `[1, feedforward/feedback]`. The
    /// constant coefficient of the feedback polynomial must be 1.
    pub fn new(feedback: u32, feedforward: u32) -> Self {
        assert!(feedback & 1 == 1, "feedback polynomial must have D^0 = 1");
        let memory = (32 - feedback.leading_zeros() - 1) as usize;
        let states = 1usize << memory;
        let mut next_state = vec![[0usize; 2]; states];
        let mut parity = vec![[0u8; 2]; states];
        // state bit i holds the register content delayed by i+1 samples
        for m in 0..states {
            for x in 0..2u32 {
                let mut a = x;
                for i in 0..memory {
                    if (feedback >> (i + 1)) & 1 == 1 {
                        a ^= (m >> i) as u32 & 1;
                    }
                }
                let mut p = if feedforward & 1 == 1 { a } else { 0 };
                for i in 0..memory {
                    if (feedforward >> (i + 1)) & 1 == 1 {
                        p ^= (m >> i) as u32 & 1;
                    }
                }
                next_state[m][x as usize] = ((m << 1) | a as usize) & (states - 1);
                parity[m][x as usize] = p as u8;
            }
        }
        Self {
            feedback,
            feedforward,
            memory,
            next_state,
            parity,
        }
    }

    /// The code used throughout: generator `[1, (1+D^2)/(1+D+D^2)]`.
    pub fn four_state() -> Self {
        Self::new(0b111, 0b101)
    }

    pub fn states(&self) -> usize {
        1 << self.memory
    }

    #[inline]
    pub fn next_state(&self, state: usize, bit: u8) -> usize {
        self.next_state[state][bit as usize]
    }

    #[inline]
    pub fn parity(&self, state: usize, bit: u8) -> u8 {
        self.parity[state][bit as usize]
    }
}

/// Encodes `bits` with the recursive systematic machine started in state
/// zero; returns the parity stream. No termination bits are appended.
pub fn rsc_encode(code: &RscCode, bits: &[u8]) -> Vec<u8> {
    let mut state = 0usize;
    bits.iter()
        .map(|&b| {
            let p = code.parity(state, b);
            state = code.next_state(state, b);
            p
        })
        .collect()
}

/// Seeded random bijection of `{0 .. len-1}`, used for the frame subcarrier
/// scattering, the preamble placement and the turbo-internal permutation.
#[derive(Debug, Clone)]
pub struct InterleaverMap {
    forward: Vec<usize>,
    inverse: Vec<usize>,
    /// Seed the permutation was drawn from (`u64::MAX` for identity).
    pub seed: u64,
}

impl InterleaverMap {
    /// Uniform random permutation, reproducible from `(len, seed)`.
    pub fn random(len: usize, seed: u64) -> Self {
        let mut forward: Vec<usize> = (0..len).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        // Fisher-Yates
        for i in (1..len).rev() {
            let j = rng.gen_range(0..=i);
            forward.swap(i, j);
        }
        Self::from_forward(forward, seed)
    }

    pub fn identity(len: usize) -> Self {
        Self::from_forward((0..len).collect(), u64::MAX)
    }

    /// Wraps an explicitly constructed permutation after checking it is
    /// bijective.
    pub fn from_permutation(forward: Vec<usize>, seed: u64) -> Result<Self> {
        let len = forward.len();
        let mut seen = vec![false; len];
        for &p in &forward {
            if p >= len || seen[p] {
                return Err(Error::InvalidConfig(format!(
                    "not a permutation of 0..{len}"
                )));
            }
            seen[p] = true;
        }
        Ok(Self::from_forward(forward, seed))
    }

    fn from_forward(forward: Vec<usize>, seed: u64) -> Self {
        let mut inverse = vec![0usize; forward.len()];
        for (i, &p) in forward.iter().enumerate() {
            inverse[p] = i;
        }
        Self {
            forward,
            inverse,
            seed,
        }
    }

    pub fn len(&self) -> usize {
        self.forward.len()
    }

    pub fn is_empty(&self) -> bool {
        self.forward.is_empty()
    }

    /// Destination of position `i`.
    #[inline]
    pub fn forward(&self, i: usize) -> usize {
        self.forward[i]
    }

    /// Source of position `i` (inverse of [`Self::forward`]).
    #[inline]
    pub fn inverse(&self, i: usize) -> usize {
        self.inverse[i]
    }

    /// `out[j] = x[forward(j)]`.
    pub fn interleave<T: Copy>(&self, x: &[T]) -> Vec<T> {
        assert_eq!(x.len(), self.forward.len());
        self.forward.iter().map(|&p| x[p]).collect()
    }

    /// Inverse of [`Self::interleave`]: `out[forward(j)] = x[j]`.
    pub fn deinterleave<T: Copy>(&self, x: &[T]) -> Vec<T> {
        assert_eq!(x.len(), self.forward.len());
        self.inverse.iter().map(|&p| x[p]).collect()
    }
}

/// Parallel-concatenated encoder output.
#[derive(Debug, Clone)]
pub struct TurboStreams {
    pub systematic: Vec<u8>,
    pub parity1: Vec<u8>,
    /// Parity of the interleaved systematic stream.
    pub parity2: Vec<u8>,
    /// The interleaved systematic stream itself (transmitted by the second
    /// antenna together with `parity2`).
    pub interleaved: Vec<u8>,
}

/// Encodes one frame: `parity1` from the natural-order bits, `parity2`
/// from the interleaved bits.
pub fn turbo_encode(code: &RscCode, bits: &[u8], map: &InterleaverMap) -> Result<TurboStreams> {
    if bits.len() != map.len() {
        return Err(Error::LengthMismatch {
            context: "turbo_encode",
            expected: map.len(),
            actual: bits.len(),
        });
    }
    let interleaved = map.interleave(bits);
    Ok(TurboStreams {
        systematic: bits.to_vec(),
        parity1: rsc_encode(code, bits),
        parity2: rsc_encode(code, &interleaved),
        interleaved,
    })
}

/// Gray QPSK: `(b_i, b_q) -> (1 - 2 b_i) + j (1 - 2 b_q)`.
#[inline]
pub fn qpsk_map(b_i: u8, b_q: u8) -> Cplx {
    Cplx::new(1.0 - 2.0 * b_i as f64, 1.0 - 2.0 * b_q as f64)
}

/// The four QPSK symbols in bit order `(b_i, b_q) = (0,0), (0,1), (1,0), (1,1)`.
pub const QPSK_ALPHABET: [(u8, u8); 4] = [(0, 0), (0, 1), (1, 0), (1, 1)];

/// Edge count of the four-state trellis at one trellis step.
pub const EDGES: usize = 8;

/// Transition likelihoods `gamma[i][m][b]` for one decoder, one value per
/// trellis edge `(state m, input bit b)` and data position `i`.
///
/// Stored in exponentiated form with a per-position normalization to a
/// maximum of one; BCJR decisions are invariant to per-position scaling, and
/// the normalization keeps the certainty limit away from a vanishing table.
#[derive(Debug, Clone)]
pub struct GammaTable {
    rows: Vec<[f64; EDGES]>,
}

impl GammaTable {
    /// Builds the table from log-domain metrics (`log gamma <= 0` after the
    /// per-position shift).
    pub fn from_log(mut rows: Vec<[f64; EDGES]>) -> Self {
        for row in rows.iter_mut() {
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            for v in row.iter_mut() {
                *v = (*v - max).exp();
            }
        }
        Self { rows }
    }

    /// Builds the table from already exponentiated metrics.
    pub fn from_probs(rows: Vec<[f64; EDGES]>) -> Result<Self> {
        for (i, row) in rows.iter().enumerate() {
            if row.iter().any(|v| !v.is_finite() || *v < 0.0) {
                return Err(Error::NumericalDegeneracy(format!(
                    "gamma row {i} contains a negative or non-finite entry"
                )));
            }
        }
        Ok(Self { rows })
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64; EDGES] {
        &self.rows[i]
    }

    #[inline]
    pub fn value(&self, i: usize, state: usize, bit: u8) -> f64 {
        self.rows[i][state * 2 + bit as usize]
    }
}

/// Posterior and extrinsic information of one BCJR pass.
pub struct BcjrOutput {
    pub posterior: Vec<f64>,
    pub extrinsic: Vec<f64>,
}

fn prior_probs(llr: f64) -> [f64; 2] {
    let l = llr.clamp(-LLR_CLAMP, LLR_CLAMP);
    let p1 = 1.0 / (1.0 + l.exp());
    [1.0 - p1, p1]
}

fn clamp_llr(x: f64) -> f64 {
    if x.is_nan() {
        0.0
    } else {
        x.clamp(-LLR_CLAMP, LLR_CLAMP)
    }
}

/// Forward/backward recursions over one gamma table.
///
/// State metric vectors are normalized to unit sum after every step. The
/// extrinsic output is the posterior minus the prior; the channel
/// information of an edge lives entirely in its gamma value and is not
/// separable into a systematic component here.
pub fn bcjr_decode(code: &RscCode, gamma: &GammaTable, prior: &[f64]) -> Result<BcjrOutput> {
    let n = gamma.len();
    if prior.len() != n {
        return Err(Error::LengthMismatch {
            context: "bcjr_decode prior",
            expected: n,
            actual: prior.len(),
        });
    }
    let states = code.states();
    assert_eq!(states * 2, EDGES);

    let degenerate = |i: usize| {
        Error::NumericalDegeneracy(format!("state metrics vanished at trellis step {i}"))
    };

    let priors: Vec<[f64; 2]> = prior.iter().map(|&l| prior_probs(l)).collect();

    // beta[i][m], i in 0..=n; no termination, so the recursion starts uniform
    let mut beta = vec![[0.0f64; 4]; n + 1];
    beta[n] = [1.0 / states as f64; 4];
    for i in (0..n).rev() {
        let row = gamma.row(i);
        let p = &priors[i];
        let mut acc = [0.0f64; 4];
        for (m, a) in acc.iter_mut().enumerate() {
            for b in 0..2usize {
                *a += row[m * 2 + b] * p[b] * beta[i + 1][code.next_state(m, b as u8)];
            }
        }
        let sum: f64 = acc.iter().sum();
        if sum <= 0.0 || !sum.is_finite() {
            return Err(degenerate(i));
        }
        for a in acc.iter_mut() {
            *a /= sum;
        }
        debug_assert!((acc.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        beta[i] = acc;
    }

    let mut posterior = Vec::with_capacity(n);
    let mut extrinsic = Vec::with_capacity(n);

    // forward pass; the encoder starts in state zero
    let mut alpha = [0.0f64; 4];
    alpha[0] = 1.0;
    for i in 0..n {
        let row = gamma.row(i);
        let p = &priors[i];
        // extrinsic sums exclude the prior factor of the current bit
        let mut num = [0.0f64; 2];
        let mut next_alpha = [0.0f64; 4];
        for m in 0..states {
            for b in 0..2usize {
                let to = code.next_state(m, b as u8);
                let g = row[m * 2 + b];
                num[b] += alpha[m] * g * beta[i + 1][to];
                next_alpha[to] += alpha[m] * g * p[b];
            }
        }
        if num[0] <= 0.0 && num[1] <= 0.0 {
            return Err(degenerate(i));
        }
        let ext = clamp_llr((num[0] / num[1]).ln());
        extrinsic.push(ext);
        posterior.push(clamp_llr(prior[i] + ext));

        let sum: f64 = next_alpha.iter().sum();
        if sum <= 0.0 || !sum.is_finite() {
            return Err(degenerate(i));
        }
        for a in next_alpha.iter_mut() {
            *a /= sum;
        }
        debug_assert!((next_alpha.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        alpha = next_alpha;
    }

    Ok(BcjrOutput {
        posterior,
        extrinsic,
    })
}

/// Iterative exchange between the two constituent decoders.
///
/// `gamma1` is indexed in natural order, `gamma2` in interleaved order.
/// Each round runs decoder 1, hands its interleaved extrinsic to decoder 2
/// and feeds the deinterleaved extrinsic back. The hard decision is taken
/// on decoder 2's deinterleaved posterior after the last round; with
/// `iters = 0` it is taken on a single decoder-1 pass with zero prior.
pub fn turbo_decode(
    code: &RscCode,
    gamma1: &GammaTable,
    gamma2: &GammaTable,
    map: &InterleaverMap,
    iters: usize,
) -> Result<Vec<u8>> {
    let n = map.len();
    if gamma1.len() != n || gamma2.len() != n {
        return Err(Error::LengthMismatch {
            context: "turbo_decode gamma tables",
            expected: n,
            actual: gamma1.len().min(gamma2.len()),
        });
    }
    let hard = |llrs: &[f64]| llrs.iter().map(|&l| (l < 0.0) as u8).collect();

    if iters == 0 {
        let out = bcjr_decode(code, gamma1, &vec![0.0; n])?;
        return Ok(hard(&out.posterior));
    }

    let mut prior1 = vec![0.0f64; n];
    let mut last_posterior2 = Vec::new();
    for _ in 0..iters {
        let out1 = bcjr_decode(code, gamma1, &prior1)?;
        let prior2 = map.interleave(&out1.extrinsic);
        let out2 = bcjr_decode(code, gamma2, &prior2)?;
        prior1 = map.deinterleave(&out2.extrinsic);
        last_posterior2 = out2.posterior;
    }
    Ok(hard(&map.deinterleave(&last_posterior2)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn trellis_is_deterministic_and_complete() {
        let code = RscCode::four_state();
        assert_eq!(code.states(), 4);
        let mut preds = [0usize; 4];
        for m in 0..4 {
            for b in 0..2u8 {
                preds[code.next_state(m, b)] += 1;
            }
        }
        // every state has exactly two predecessors
        assert!(preds.iter().all(|&c| c == 2));
    }

    #[test]
    fn rsc_impulse_response() {
        let code = RscCode::four_state();
        let impulse = [1, 0, 0, 0, 0, 0, 0, 0];
        assert_eq!(rsc_encode(&code, &impulse), vec![1, 1, 1, 0, 1, 1, 0, 1]);
        assert_eq!(rsc_encode(&code, &[0u8; 8]), vec![0u8; 8]);
    }

    #[test]
    fn rsc_linearity() {
        let code = RscCode::four_state();
        let a = [1, 0, 0, 1, 0, 0, 0, 0];
        let b = [0, 0, 0, 1, 1, 0, 1, 0];
        let xor: Vec<u8> = a.iter().zip(b.iter()).map(|(x, y)| x ^ y).collect();
        let pa = rsc_encode(&code, &a);
        let pb = rsc_encode(&code, &b);
        let pxor = rsc_encode(&code, &xor);
        let expect: Vec<u8> = pa.iter().zip(pb.iter()).map(|(x, y)| x ^ y).collect();
        assert_eq!(pxor, expect);

        // two impulses superpose to shifted impulse responses
        let two = [1, 0, 0, 1, 0, 0, 0, 0];
        let imp = rsc_encode(&code, &[1, 0, 0, 0, 0, 0, 0, 0]);
        let shifted: Vec<u8> = (0..8)
            .map(|i| if i >= 3 { imp[i - 3] } else { 0 })
            .collect();
        let expect: Vec<u8> = imp.iter().zip(shifted.iter()).map(|(x, y)| x ^ y).collect();
        assert_eq!(rsc_encode(&code, &two), expect);
    }

    #[test]
    fn interleaver_round_trip_and_reproducibility() {
        for len in [1usize, 2, 17, 512] {
            let map = InterleaverMap::random(len, 42);
            let x: Vec<usize> = (100..100 + len).collect();
            assert_eq!(map.deinterleave(&map.interleave(&x)), x);
            assert_eq!(map.interleave(&map.deinterleave(&x)), x);
            // bijection
            let mut seen = vec![false; len];
            for i in 0..len {
                seen[map.forward(i)] = true;
                assert_eq!(map.inverse(map.forward(i)), i);
            }
            assert!(seen.iter().all(|&s| s));
        }
        let a = InterleaverMap::random(64, 7);
        let b = InterleaverMap::random(64, 7);
        assert_eq!(a.forward, b.forward);
        let c = InterleaverMap::random(64, 8);
        assert_ne!(a.forward, c.forward);
    }

    #[test]
    fn turbo_encode_structure() {
        let code = RscCode::four_state();
        let map = InterleaverMap::identity(16);
        let bits = vec![0u8; 16];
        let s = turbo_encode(&code, &bits, &map).unwrap();
        assert_eq!(s.systematic, bits);
        assert_eq!(s.parity1, bits);
        assert_eq!(s.parity2, bits);

        // identity interleaver makes both parities identical
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let bits: Vec<u8> = (0..16).map(|_| rng.gen_range(0..2) as u8).collect();
        let s = turbo_encode(&code, &bits, &map).unwrap();
        assert_eq!(s.parity1, s.parity2);

        // parity2 is the parity of the permuted bits
        let map = InterleaverMap::random(16, 7);
        let s = turbo_encode(&code, &bits, &map).unwrap();
        assert_eq!(s.parity2, rsc_encode(&code, &map.interleave(&bits)));

        assert!(turbo_encode(&code, &bits[..8], &map).is_err());
    }

    #[test]
    fn qpsk_mapping() {
        assert_eq!(qpsk_map(0, 0), Cplx::new(1.0, 1.0));
        assert_eq!(qpsk_map(1, 0), Cplx::new(-1.0, 1.0));
        assert_eq!(qpsk_map(1, 1), Cplx::new(-1.0, -1.0));
        assert_eq!(qpsk_map(0, 1), Cplx::new(1.0, -1.0));
    }

    /// Gamma table that is certain about a given bit sequence.
    fn certain_gamma(code: &RscCode, bits: &[u8]) -> GammaTable {
        let mut state = 0usize;
        let rows = bits
            .iter()
            .map(|&b| {
                let mut row = [0.0f64; EDGES];
                row[state * 2 + b as usize] = 1.0;
                state = code.next_state(state, b);
                row
            })
            .collect();
        GammaTable::from_probs(rows).unwrap()
    }

    #[test]
    fn bcjr_certainty_limit() {
        let code = RscCode::four_state();
        let bits = [1u8, 0, 1, 1, 0, 0, 1, 0];
        let gamma = certain_gamma(&code, &bits);
        let out = bcjr_decode(&code, &gamma, &vec![0.0; bits.len()]).unwrap();
        for (i, &b) in bits.iter().enumerate() {
            let l = out.posterior[i];
            assert_eq!((l < 0.0) as u8, b);
            assert_eq!(l.abs(), LLR_CLAMP);
        }
    }

    #[test]
    fn bcjr_uniform_gamma_is_uninformative() {
        let code = RscCode::four_state();
        let rows = vec![[0.25f64; EDGES]; 12];
        let gamma = GammaTable::from_probs(rows).unwrap();
        let out = bcjr_decode(&code, &gamma, &[0.0; 12]).unwrap();
        for l in out.posterior {
            assert!(l.abs() < 1e-12);
        }
    }

    #[test]
    fn bcjr_rejects_degenerate_gamma() {
        let code = RscCode::four_state();
        let mut rows = vec![[0.25f64; EDGES]; 4];
        rows[2] = [0.0; EDGES];
        let gamma = GammaTable::from_probs(rows).unwrap();
        assert!(matches!(
            bcjr_decode(&code, &gamma, &[0.0; 4]),
            Err(Error::NumericalDegeneracy(_))
        ));
    }

    #[test]
    fn turbo_decode_noiseless_and_zero_iters() {
        let code = RscCode::four_state();
        let map = InterleaverMap::random(24, 9);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let bits: Vec<u8> = (0..24).map(|_| rng.gen_range(0..2) as u8).collect();
        let interleaved = map.interleave(&bits);
        let g1 = certain_gamma(&code, &bits);
        let g2 = certain_gamma(&code, &interleaved);
        assert_eq!(turbo_decode(&code, &g1, &g2, &map, 8).unwrap(), bits);
        // iters = 0 falls back to a single decoder-1 pass
        assert_eq!(turbo_decode(&code, &g1, &g2, &map, 0).unwrap(), bits);
    }
}
