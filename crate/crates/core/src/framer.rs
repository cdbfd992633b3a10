//! Per-antenna frame construction: frequency-domain preamble and payload,
//! synthesis IFFTs, cyclic prefix/suffix attachment, and the convolution
//! matrix of the overlapped preamble used for channel estimation.
//!
//! Frame layout in time: `[preamble | cyclic suffix | cyclic prefix | data
//! block]`. The cyclic suffix replicates the head of the preamble so the
//! preamble correlates circularly over every lag the receiver can observe;
//! the cyclic prefix is the tail of the data IFFT as usual.
//!
//! In the frequency domain the data block is `[buffer | data | postamble |
//! fill]`, with the data+postamble region scattered by the frame
//! interleaver and the buffer/fill regions carrying fixed known symbols.

use rand::{Rng, RngCore};

use crate::config::{DerivedLengths, Mode, SystemConfig};
use crate::error::{Error, Result};
use crate::fft::ifft;
use crate::rng::{run_stream, StreamRole};
use crate::turbo::{qpsk_map, turbo_encode, InterleaverMap, RscCode, TurboStreams};
use crate::Cplx;

fn random_qpsk(rng: &mut impl Rng, scale: f64) -> Cplx {
    let b_i = rng.gen_range(0..2u8);
    let b_q = rng.gen_range(0..2u8);
    qpsk_map(b_i, b_q) * scale
}

/// Known frequency-domain preamble of every transmit antenna, in both
/// domains, plus the placement map that produced it.
#[derive(Debug, Clone)]
pub struct PreambleSpec {
    /// `freq[nt][i]`, length `Lp` per antenna.
    pub freq: Vec<Vec<Cplx>>,
    /// `time[nt][n] = (1/Lp) IDFT(freq[nt])`.
    pub time: Vec<Vec<Cplx>>,
    /// Placement permutation over the `Lp` subcarriers.
    pub map: InterleaverMap,
    pub seed: u64,
}

/// Builds the per-antenna preambles.
///
/// Joint mode assigns antenna `nt` the subcarrier comb `{nt + Nt m}` and
/// scatters its random QPSK values over that comb. Disjoint combs make the
/// cross-antenna products vanish identically, and the comb structure makes
/// each antenna's own correlation an exact delta over every lag shorter
/// than the comb spacing, which the config validator guarantees covers the
/// receiver span.
///
/// Near-capacity mode gives every antenna the same dense preamble of
/// constant-modulus QPSK values (distinct carriers keep them orthogonal).
pub fn build_preamble(cfg: &SystemConfig, seed: u64) -> Result<PreambleSpec> {
    let lp = cfg.lp;
    if lp == 0 {
        return Ok(PreambleSpec {
            freq: vec![Vec::new(); cfg.nt],
            time: vec![Vec::new(); cfg.nt],
            map: InterleaverMap::identity(0),
            seed,
        });
    }
    let mut value_rng = run_stream(seed, StreamRole::PreambleValues);
    let mut map_rng = run_stream(seed, StreamRole::PreambleMap);

    let (freq, map) = match cfg.mode {
        Mode::Joint => {
            if !lp.is_multiple_of(cfg.nt) {
                return Err(Error::InvalidConfig(format!(
                    "Lp = {} is not divisible by Nt = {}",
                    lp, cfg.nt
                )));
            }
            let per_antenna = lp / cfg.nt;
            let scale = (lp as f64 * cfg.nt as f64 / cfg.ld as f64).sqrt();
            let values: Vec<Cplx> = (0..lp)
                .map(|_| random_qpsk(&mut value_rng, scale))
                .collect();
            // forward[i4 + m] = comb position of antenna nt, in random order
            let mut forward = vec![0usize; lp];
            for nt in 0..cfg.nt {
                let order = InterleaverMap::random(per_antenna, map_rng.next_u64());
                for m in 0..per_antenna {
                    forward[nt * per_antenna + m] = nt + cfg.nt * order.forward(m);
                }
            }
            let map = InterleaverMap::from_permutation(forward, seed)?;
            let mut freq = vec![vec![Cplx::new(0.0, 0.0); lp]; cfg.nt];
            for (nt, row) in freq.iter_mut().enumerate() {
                for m in 0..per_antenna {
                    let i = nt * per_antenna + m;
                    row[map.forward(i)] = values[i];
                }
            }
            (freq, map)
        }
        Mode::NearCapacity => {
            let scale = (lp as f64 / cfg.ld as f64).sqrt();
            let one: Vec<Cplx> = (0..lp)
                .map(|_| random_qpsk(&mut value_rng, scale))
                .collect();
            (vec![one; cfg.nt], InterleaverMap::identity(lp))
        }
    };

    let time = freq.iter().map(|f| ifft(f)).collect();
    Ok(PreambleSpec {
        freq,
        time,
        map,
        seed,
    })
}

impl PreambleSpec {
    /// The overlapped preamble `s5[n] = s1[n] + s4[n - Lp]`, i.e. the first
    /// `Lp + Lcs` transmitted samples of the frame.
    pub fn overlapped(&self, nt: usize, lcs: usize) -> Vec<Cplx> {
        let s1 = &self.time[nt];
        let mut s5 = Vec::with_capacity(s1.len() + lcs);
        s5.extend_from_slice(s1);
        s5.extend_from_slice(&s1[..lcs]);
        s5
    }
}

/// Known payload content shared between transmitter and receiver: buffer,
/// postamble and fill symbols plus the two permutations.
#[derive(Debug, Clone)]
pub struct FrameLayout {
    /// Scatters the `Ld2 + Lo` data+postamble symbols over their subcarrier
    /// range.
    pub frame_perm: InterleaverMap,
    /// Turbo-internal permutation over the `Ld2` information bits.
    pub turbo_perm: InterleaverMap,
    /// `buffer[nt][0..B]`, fixed known QPSK.
    pub buffer: Vec<Vec<Cplx>>,
    /// `postamble[nt][0..Lo]`, fixed known QPSK.
    pub postamble: Vec<Vec<Cplx>>,
    /// Trailing fill `[B + Ld2 + Lo, Ld)`, fixed known QPSK.
    pub fill: Vec<Vec<Cplx>>,
    /// Subcarrier of data symbol `i`: `B + pi(i)`.
    pub data_subcarrier: Vec<usize>,
    /// Subcarrier of postamble symbol `j`: `B + pi(Ld2 + j)`.
    pub postamble_subcarrier: Vec<usize>,
}

impl FrameLayout {
    pub fn new(cfg: &SystemConfig, seed: u64) -> Self {
        let mut perm_rng = run_stream(seed, StreamRole::FramePermutation);
        let mut turbo_rng = run_stream(seed, StreamRole::TurboPermutation);
        let frame_perm = InterleaverMap::random(cfg.ld2 + cfg.lo, perm_rng.next_u64());
        let turbo_perm = InterleaverMap::random(cfg.ld2, turbo_rng.next_u64());

        let mut buf_rng = run_stream(seed, StreamRole::BufferSymbols);
        let mut post_rng = run_stream(seed, StreamRole::PostambleSymbols);
        let fill_len = cfg.ld - cfg.buffer_len - cfg.ld2 - cfg.lo;
        let draw = |rng: &mut rand_chacha::ChaCha8Rng, n: usize| -> Vec<Vec<Cplx>> {
            (0..cfg.nt)
                .map(|_| (0..n).map(|_| random_qpsk(rng, 1.0)).collect())
                .collect()
        };
        let buffer = draw(&mut buf_rng, cfg.buffer_len);
        let fill = draw(&mut buf_rng, fill_len);
        let postamble = draw(&mut post_rng, cfg.lo);

        let data_subcarrier = (0..cfg.ld2)
            .map(|i| cfg.buffer_len + frame_perm.forward(i))
            .collect();
        let postamble_subcarrier = (0..cfg.lo)
            .map(|j| cfg.buffer_len + frame_perm.forward(cfg.ld2 + j))
            .collect();

        Self {
            frame_perm,
            turbo_perm,
            buffer,
            postamble,
            fill,
            data_subcarrier,
            postamble_subcarrier,
        }
    }
}

/// One assembled frame: time-domain samples per antenna plus the
/// frequency-domain content and encoder streams that produced them.
#[derive(Debug, Clone)]
pub struct TxFrame {
    /// `samples[nt]`, length `L`.
    pub samples: Vec<Vec<Cplx>>,
    /// Frequency-domain data vector `freq[nt]`, length `Ld`.
    pub freq: Vec<Vec<Cplx>>,
    /// Information bits carried by the frame.
    pub bits: Vec<u8>,
    /// Encoder output used for the antenna mapping.
    pub streams: TurboStreams,
}

/// Antenna-to-stream mapping: the QPSK symbol of data position `i` on
/// antenna `nt`. Antenna 0 carries `(systematic, parity1)`, antenna 1
/// carries `(interleaved systematic, parity2)`.
pub fn data_symbol(streams: &TurboStreams, nt: usize, i: usize) -> Cplx {
    match nt {
        0 => qpsk_map(streams.systematic[i], streams.parity1[i]),
        1 => qpsk_map(streams.interleaved[i], streams.parity2[i]),
        _ => unreachable!("the code spans exactly two transmit antennas"),
    }
}

/// The full `Ld`-point frequency-domain symbol vector of one antenna:
/// `[buffer | scattered data + postamble | fill]`.
pub fn frequency_symbols(
    cfg: &SystemConfig,
    layout: &FrameLayout,
    streams: &TurboStreams,
    nt: usize,
) -> Vec<Cplx> {
    let mut x = vec![Cplx::new(0.0, 0.0); cfg.ld];
    x[..cfg.buffer_len].copy_from_slice(&layout.buffer[nt]);
    for i in 0..cfg.ld2 {
        x[layout.data_subcarrier[i]] = data_symbol(streams, nt, i);
    }
    for j in 0..cfg.lo {
        x[layout.postamble_subcarrier[j]] = layout.postamble[nt][j];
    }
    let fill_start = cfg.buffer_len + cfg.ld2 + cfg.lo;
    x[fill_start..].copy_from_slice(&layout.fill[nt]);
    x
}

/// Builds the frequency-domain vectors and the full time-domain frame.
pub fn assemble_frame(
    cfg: &SystemConfig,
    derived: &DerivedLengths,
    code: &RscCode,
    preamble: &PreambleSpec,
    layout: &FrameLayout,
    bits: &[u8],
) -> Result<TxFrame> {
    if bits.len() != cfg.ld2 {
        return Err(Error::LengthMismatch {
            context: "assemble_frame data bits",
            expected: cfg.ld2,
            actual: bits.len(),
        });
    }
    let streams = turbo_encode(code, bits, &layout.turbo_perm)?;

    let mut freq = Vec::with_capacity(cfg.nt);
    let mut samples = Vec::with_capacity(cfg.nt);
    for nt in 0..cfg.nt {
        let x = frequency_symbols(cfg, layout, &streams, nt);
        let data_block = ifft(&x);
        let mut frame = Vec::with_capacity(derived.total);
        frame.extend_from_slice(&preamble.time[nt]); // preamble
        frame.extend_from_slice(&preamble.time[nt][..derived.lcs]); // cyclic suffix
        frame.extend_from_slice(&data_block[cfg.ld - derived.lcp..]); // cyclic prefix
        frame.extend_from_slice(&data_block);
        debug_assert_eq!(frame.len(), derived.total);

        freq.push(x);
        samples.push(frame);
    }

    Ok(TxFrame {
        samples,
        freq,
        bits: bits.to_vec(),
        streams,
    })
}

/// The `Lp x Lhr` convolution matrix of the overlapped preamble, one per
/// transmit antenna. Entry `(r, c)` is `s5[Lhr - 1 + r - c]`; the matrix is
/// Toeplitz so only `s5` is stored.
#[derive(Debug, Clone)]
pub struct ChestMatrix {
    s5: Vec<Vec<Cplx>>,
    pub lp: usize,
    pub lhr: usize,
    /// The scalar value of the normal matrix diagonal, `2 Lp / Ld`.
    pub gram_scale: f64,
}

/// Builds the channel estimation matrix from a preamble.
pub fn build_chest_matrix(
    cfg: &SystemConfig,
    derived: &DerivedLengths,
    preamble: &PreambleSpec,
) -> ChestMatrix {
    let s5 = (0..cfg.nt)
        .map(|nt| preamble.overlapped(nt, derived.lcs))
        .collect();
    ChestMatrix {
        s5,
        lp: cfg.lp,
        lhr: derived.lhr,
        gram_scale: 2.0 * cfg.lp as f64 / cfg.ld as f64,
    }
}

impl ChestMatrix {
    #[inline]
    pub fn entry(&self, nt: usize, r: usize, c: usize) -> Cplx {
        self.s5[nt][self.lhr - 1 + r - c]
    }

    /// `s5_nt^H . window` (length `Lhr`).
    pub fn project(&self, nt: usize, window: &[Cplx]) -> Vec<Cplx> {
        assert_eq!(window.len(), self.lp);
        let s5 = &self.s5[nt];
        (0..self.lhr)
            .map(|c| {
                let mut acc = Cplx::new(0.0, 0.0);
                for (r, w) in window.iter().enumerate() {
                    acc += s5[self.lhr - 1 + r - c].conj() * w;
                }
                acc
            })
            .collect()
    }

    /// `s5_nt . taps` (length `Lp`), the preamble window a given tap vector
    /// would produce.
    pub fn synthesize(&self, nt: usize, taps: &[Cplx]) -> Vec<Cplx> {
        assert_eq!(taps.len(), self.lhr);
        let s5 = &self.s5[nt];
        (0..self.lp)
            .map(|r| {
                let mut acc = Cplx::new(0.0, 0.0);
                for (c, t) in taps.iter().enumerate() {
                    acc += s5[self.lhr - 1 + r - c] * t;
                }
                acc
            })
            .collect()
    }

    /// `s5_mt^H . s5_nt`, the `Lhr x Lhr` cross (or normal) matrix.
    pub fn gram(&self, mt: usize, nt: usize) -> Vec<Vec<Cplx>> {
        (0..self.lhr)
            .map(|c1| {
                (0..self.lhr)
                    .map(|c2| {
                        let mut acc = Cplx::new(0.0, 0.0);
                        for r in 0..self.lp {
                            acc += self.s5[mt][self.lhr - 1 + r - c1].conj()
                                * self.s5[nt][self.lhr - 1 + r - c2];
                        }
                        acc
                    })
                    .collect()
            })
            .collect()
    }
}
