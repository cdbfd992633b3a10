//! Shared helpers for the integration suites, most importantly the
//! exhaustive MAP oracle the BCJR implementation is checked against. The
//! oracle enumerates every input sequence and never touches the
//! forward/backward recursions.

use mimo_ofdm::turbo::{GammaTable, RscCode, EDGES, LLR_CLAMP};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Per-bit posterior LLRs by brute-force marginalization over all `2^n`
/// input sequences: weight of a sequence is the product of its path's
/// gamma values and prior probabilities.
#[allow(clippy::needless_range_loop)] // the index ties word bits to table rows
pub fn exhaustive_map_posteriors(code: &RscCode, gamma: &GammaTable, prior: &[f64]) -> Vec<f64> {
    let n = gamma.len();
    assert!(n <= 20, "oracle cost grows as 2^n");
    assert_eq!(prior.len(), n);
    let prior_probs: Vec<[f64; 2]> = prior
        .iter()
        .map(|&l| {
            let l = l.clamp(-LLR_CLAMP, LLR_CLAMP);
            let p1 = 1.0 / (1.0 + l.exp());
            [1.0 - p1, p1]
        })
        .collect();

    let mut bucket = vec![[0.0f64; 2]; n];
    for word in 0u64..(1u64 << n) {
        let mut state = 0usize;
        let mut weight = 1.0f64;
        for i in 0..n {
            let bit = ((word >> i) & 1) as u8;
            weight *= gamma.value(i, state, bit) * prior_probs[i][bit as usize];
            state = code.next_state(state, bit);
        }
        if weight == 0.0 {
            continue;
        }
        for i in 0..n {
            let bit = ((word >> i) & 1) as usize;
            bucket[i][bit] += weight;
        }
    }
    bucket
        .iter()
        .map(|b| (b[0] / b[1]).ln().clamp(-LLR_CLAMP, LLR_CLAMP))
        .collect()
}

/// Random gamma table with moderate dynamic range, normalized per
/// position like the detector output.
pub fn random_gamma(len: usize, seed: u64) -> GammaTable {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rows = (0..len)
        .map(|_| {
            let mut row = [0.0f64; EDGES];
            for v in row.iter_mut() {
                *v = -4.0 * rng.gen::<f64>();
            }
            row
        })
        .collect();
    GammaTable::from_log(rows)
}

/// Random prior LLRs in `[-3, 3]`.
pub fn random_priors(len: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    (0..len).map(|_| 6.0 * (rng.gen::<f64>() - 0.5)).collect()
}
