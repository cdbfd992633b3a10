//! Data-block demodulation and turbo metric construction.
//!
//! Joint mode (one carrier, 2x2): an edge of decoder 1 fixes antenna 0's
//! QPSK symbol and the reconstruction distance is minimized exhaustively
//! over antenna 1's four candidates, summed over both receive antennas;
//! decoder 2 mirrors the roles. Near-capacity mode (one carrier per
//! antenna): decoder `d` sees only antenna `d`'s diversity arms and the
//! per-arm metrics multiply, i.e. their logs add.
//!
//! Metric exponents are computed in log domain; exponentiation happens at
//! the BCJR table boundary with a per-position normalization that leaves
//! decisions unchanged.

use crate::config::SystemConfig;
use crate::error::{Error, Result};
use crate::fft::fft;
use crate::framer::{data_symbol, FrameLayout};
use crate::turbo::{
    qpsk_map, turbo_decode, GammaTable, RscCode, TurboStreams, EDGES, QPSK_ALPHABET,
};
use crate::Cplx;

/// FFT outputs of the data block plus the metric noise scale.
#[derive(Debug, Clone)]
pub struct DemodGrid {
    /// One `Ld`-point spectrum per receive antenna (joint mode) or per
    /// diversity arm of one chain (near-capacity mode).
    pub spectra: Vec<Vec<Cplx>>,
    /// `2 Ld sigma_w_sq`, the exponent denominator of every metric built
    /// from this grid.
    pub noise_scale: f64,
}

/// Unnormalized `Ld`-point transform of `r[m2 .. m2 + Ld)` per stream.
pub fn demod_fft(
    streams: &[Vec<Cplx>],
    m2: usize,
    cfg: &SystemConfig,
    noise_var: f64,
) -> Result<DemodGrid> {
    for s in streams {
        if m2 + cfg.ld > s.len() {
            return Err(Error::LengthMismatch {
                context: "demod_fft window",
                expected: m2 + cfg.ld,
                actual: s.len(),
            });
        }
    }
    let spectra = streams
        .iter()
        .map(|s| fft(&s[m2..m2 + cfg.ld], cfg.ld))
        .collect();
    Ok(DemodGrid {
        spectra,
        noise_scale: 2.0 * cfg.ld as f64 * noise_var,
    })
}

/// Reconstruction distance of one joint-mode edge: the edge fixes the
/// symbol of antenna `decoder`, and the distance is minimized over the
/// four QPSK candidates of the other antenna, summed over both receive
/// antennas.
///
/// `gains[nr][nt][i]` are the frequency responses used for reconstruction.
pub fn joint_edge_distance(
    spectra: &[Vec<Cplx>],
    gains: &[Vec<Vec<Cplx>>],
    subcarrier: usize,
    decoder: usize,
    edge_symbol: Cplx,
) -> f64 {
    let other = 1 - decoder;
    let mut best = f64::INFINITY;
    for &(b_i, b_q) in QPSK_ALPHABET.iter() {
        let cand = qpsk_map(b_i, b_q);
        let mut dist = 0.0;
        for (spec, g) in spectra.iter().zip(gains.iter()) {
            let recon = g[decoder][subcarrier] * edge_symbol + g[other][subcarrier] * cand;
            dist += (spec[subcarrier] - recon).norm_sqr();
        }
        if dist < best {
            best = dist;
        }
    }
    best
}

fn edge_symbols(code: &RscCode) -> [Cplx; EDGES] {
    let mut syms = [Cplx::new(0.0, 0.0); EDGES];
    for m in 0..code.states() {
        for b in 0..2u8 {
            syms[m * 2 + b as usize] = qpsk_map(b, code.parity(m, b));
        }
    }
    syms
}

/// Builds both decoders' gamma tables for the joint 2x2 mode.
pub fn build_joint_tables(
    grid: &DemodGrid,
    gains: &[Vec<Vec<Cplx>>],
    layout: &FrameLayout,
    code: &RscCode,
    cfg: &SystemConfig,
) -> (GammaTable, GammaTable) {
    assert_eq!(cfg.nt, 2, "joint metrics are defined for two antennas");
    let syms = edge_symbols(code);
    let build = |decoder: usize| {
        let rows = (0..cfg.ld2)
            .map(|i| {
                let i3 = layout.data_subcarrier[i];
                let mut row = [0.0f64; EDGES];
                for (e, s) in syms.iter().enumerate() {
                    let z = joint_edge_distance(&grid.spectra, gains, i3, decoder, *s);
                    row[e] = -z / grid.noise_scale;
                }
                row
            })
            .collect();
        GammaTable::from_log(rows)
    };
    (build(0), build(1))
}

/// Log metric of one near-capacity edge: arm distances add.
pub fn diversity_edge_log_metric(
    spectra: &[Vec<Cplx>],
    gains: &[Vec<Cplx>],
    subcarrier: usize,
    edge_symbol: Cplx,
    noise_scale: f64,
) -> f64 {
    let mut acc = 0.0;
    for (spec, g) in spectra.iter().zip(gains.iter()) {
        acc -= (spec[subcarrier] - g[subcarrier] * edge_symbol).norm_sqr() / noise_scale;
    }
    acc
}

/// Builds both decoders' gamma tables for near-capacity mode. Decoder `d`
/// observes the grid and gains of antenna `d`'s chain.
pub fn build_diversity_tables(
    grids: &[DemodGrid],
    gains: &[Vec<Vec<Cplx>>],
    layout: &FrameLayout,
    code: &RscCode,
    cfg: &SystemConfig,
) -> (GammaTable, GammaTable) {
    assert_eq!(cfg.nt, 2, "the code spans two transmit antennas");
    let syms = edge_symbols(code);
    let build = |decoder: usize| {
        let grid = &grids[decoder];
        let arm_gains = &gains[decoder];
        let rows = (0..cfg.ld2)
            .map(|i| {
                let i3 = layout.data_subcarrier[i];
                let mut row = [0.0f64; EDGES];
                for (e, s) in syms.iter().enumerate() {
                    row[e] = diversity_edge_log_metric(
                        &grid.spectra,
                        arm_gains,
                        i3,
                        *s,
                        grid.noise_scale,
                    );
                }
                row
            })
            .collect();
        GammaTable::from_log(rows)
    };
    (build(0), build(1))
}

/// Decoded bits and their error count against the transmitted truth.
#[derive(Debug, Clone)]
pub struct DetectionResult {
    pub bits: Vec<u8>,
    pub bit_errors: usize,
}

pub fn count_errors(decided: &[u8], truth: &[u8]) -> usize {
    decided
        .iter()
        .zip(truth.iter())
        .filter(|(a, b)| a != b)
        .count()
}

/// Joint-mode detection: builds both metric tables, runs the iterative
/// decoder and counts errors.
pub fn detect_frame_joint(
    grid: &DemodGrid,
    gains: &[Vec<Vec<Cplx>>],
    layout: &FrameLayout,
    code: &RscCode,
    cfg: &SystemConfig,
    truth: &[u8],
) -> Result<DetectionResult> {
    let (g1, g2) = build_joint_tables(grid, gains, layout, code, cfg);
    let bits = turbo_decode(code, &g1, &g2, &layout.turbo_perm, cfg.turbo_iters)?;
    let bit_errors = count_errors(&bits, truth);
    Ok(DetectionResult { bits, bit_errors })
}

/// Near-capacity detection over per-chain grids.
pub fn detect_frame_diversity(
    grids: &[DemodGrid],
    gains: &[Vec<Vec<Cplx>>],
    layout: &FrameLayout,
    code: &RscCode,
    cfg: &SystemConfig,
    truth: &[u8],
) -> Result<DetectionResult> {
    let (g1, g2) = build_diversity_tables(grids, gains, layout, code, cfg);
    let bits = turbo_decode(code, &g1, &g2, &layout.turbo_perm, cfg.turbo_iters)?;
    let bit_errors = count_errors(&bits, truth);
    Ok(DetectionResult { bits, bit_errors })
}

/// The transmitted symbol of a decoder's trellis edge equals the symbol the
/// true bit sequence selects; exposed for the noiseless tests.
pub fn true_edge_symbol(streams: &TurboStreams, decoder: usize, i: usize) -> Cplx {
    data_symbol(streams, decoder, i)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{draw_channel, draw_flat_iid, propagate, ChannelRealization};
    use crate::config::{Mode, Receiver};
    use crate::framer::{assemble_frame, build_preamble, FrameLayout};
    use crate::rng::{frame_stream, StreamRole};
    use crate::sync::ChannelEstimate;
    use rand::Rng;

    fn cfg_small() -> SystemConfig {
        SystemConfig {
            nt: 2,
            nr: 2,
            lp: 64,
            ld: 256,
            ld2: 128,
            lo: 64,
            buffer_len: 64,
            lh: 4,
            turbo_iters: 4,
            ..SystemConfig::default()
        }
    }

    struct Setup {
        cfg: SystemConfig,
        derived: crate::config::DerivedLengths,
        layout: FrameLayout,
        code: RscCode,
    }

    fn setup(cfg: SystemConfig, seed: u64) -> Setup {
        let derived = cfg.derived().unwrap();
        let layout = FrameLayout::new(&cfg, seed);
        Setup {
            cfg,
            derived,
            layout,
            code: RscCode::four_state(),
        }
    }

    fn bits(n: usize, seed: u64) -> Vec<u8> {
        let mut rng = frame_stream(seed, 0, StreamRole::DataBits);
        (0..n).map(|_| rng.gen_range(0..2) as u8).collect()
    }

    /// Noiseless aligned demodulation with the true channel; the offset is
    /// zeroed because these tests bypass synchronization entirely.
    fn noiseless_grid(
        s: &Setup,
        ch: &ChannelRealization,
        data: &[u8],
    ) -> (DemodGrid, Vec<Vec<Vec<Cplx>>>, TurboStreams) {
        let ch = &ChannelRealization {
            taps: ch.taps.clone(),
            cfo: 0.0,
        };
        let preamble = build_preamble(&s.cfg, 1).unwrap();
        let tx = assemble_frame(&s.cfg, &s.derived, &s.code, &preamble, &s.layout, data).unwrap();
        let mut quiet = frame_stream(0, 0, StreamRole::Noise);
        let r = propagate(&tx.samples, ch, 0.0, &mut quiet).unwrap();
        let m2 = s.cfg.lp + s.derived.lcs + s.derived.lcp;
        let grid = demod_fft(&r, m2, &s.cfg, 1e-4).unwrap();
        let est = ChannelEstimate::from_true_channel(ch, &s.derived, s.cfg.ld);
        (grid, est.freq, tx.streams)
    }

    #[test]
    fn demod_matches_frequency_domain_model() {
        let s = setup(cfg_small(), 7);
        let ch = draw_channel(&s.cfg, &mut frame_stream(5, 0, StreamRole::ChannelTaps));
        let ch = ChannelRealization {
            taps: ch.taps,
            cfo: 0.0,
        };
        let data = bits(s.cfg.ld2, 3);
        let preamble = build_preamble(&s.cfg, 1).unwrap();
        let tx = assemble_frame(&s.cfg, &s.derived, &s.code, &preamble, &s.layout, &data).unwrap();
        let mut quiet = frame_stream(0, 0, StreamRole::Noise);
        let r = propagate(&tx.samples, &ch, 0.0, &mut quiet).unwrap();
        let m2 = s.cfg.lp + s.derived.lcs + s.derived.lcp;
        let grid = demod_fft(&r, m2, &s.cfg, 0.0).unwrap();

        let mut peak = 0.0f64;
        for spec in &grid.spectra {
            for v in spec {
                peak = peak.max(v.norm());
            }
        }
        for nr in 0..2 {
            for i in 0..s.cfg.ld {
                let mut expect = Cplx::new(0.0, 0.0);
                for nt in 0..2 {
                    let h = crate::fft::fft(&ch.taps[nr][nt], s.cfg.ld);
                    expect += h[i] * tx.freq[nt][i];
                }
                assert!((grid.spectra[nr][i] - expect).norm() <= 1e-9 * peak);
            }
        }

        // zero input gives a zero grid
        let zeros = vec![vec![Cplx::new(0.0, 0.0); r[0].len()]; 2];
        let grid = demod_fft(&zeros, m2, &s.cfg, 0.0).unwrap();
        assert!(grid.spectra.iter().flatten().all(|v| v.norm() == 0.0));

        // out-of-range window
        assert!(demod_fft(&r, r[0].len(), &s.cfg, 0.0).is_err());
    }

    #[test]
    fn demod_noise_statistics() {
        let cfg = cfg_small();
        let sigma_w_sq: f64 = 0.01;
        let mut acc = 0.0f64;
        let mut count = 0usize;
        for t in 0..60 {
            let mut rng = frame_stream(11, t, StreamRole::Noise);
            let noise: Vec<Vec<Cplx>> = (0..1)
                .map(|_| {
                    (0..cfg.ld)
                        .map(|_| {
                            let re: f64 = rng.gen::<f64>();
                            let im: f64 = rng.gen::<f64>();
                            // Box-Muller pairs from uniform draws
                            let r = (-2.0 * re.max(1e-12).ln()).sqrt() * sigma_w_sq.sqrt();
                            Cplx::new(
                                r * (2.0 * std::f64::consts::PI * im).cos(),
                                r * (2.0 * std::f64::consts::PI * im).sin(),
                            )
                        })
                        .collect()
                })
                .collect();
            let grid = demod_fft(&noise, 0, &cfg, sigma_w_sq).unwrap();
            for v in &grid.spectra[0] {
                acc += 0.5 * v.norm_sqr();
                count += 1;
            }
        }
        let mean = acc / count as f64;
        let expect = cfg.ld as f64 * sigma_w_sq;
        assert!((mean - expect).abs() / expect < 0.05, "{mean} vs {expect}");
        assert!(count >= 10_000);
    }

    #[test]
    fn joint_edge_distance_brute_force_and_symmetries() {
        let s = setup(cfg_small(), 13);
        let ch = draw_channel(&s.cfg, &mut frame_stream(17, 0, StreamRole::ChannelTaps));
        let data = bits(s.cfg.ld2, 5);
        let (grid, gains, streams) = noiseless_grid(&s, &ch, &data);

        // noiseless true edges reconstruct exactly: Z = 0
        for i in [0usize, 7, s.cfg.ld2 - 1] {
            let i3 = s.layout.data_subcarrier[i];
            for decoder in 0..2 {
                let z = joint_edge_distance(
                    &grid.spectra,
                    &gains,
                    i3,
                    decoder,
                    true_edge_symbol(&streams, decoder, i),
                );
                assert!(z.abs() < 1e-16, "decoder {decoder} position {i}: {z}");
            }
        }

        // equals a direct four-candidate brute force
        let i3 = s.layout.data_subcarrier[11];
        let sym = qpsk_map(1, 0);
        let mut brute = f64::INFINITY;
        for &(bi, bq) in QPSK_ALPHABET.iter() {
            let cand = qpsk_map(bi, bq);
            let mut d = 0.0;
            for (g, spec) in gains.iter().zip(grid.spectra.iter()) {
                let recon = g[0][i3] * sym + g[1][i3] * cand;
                d += (spec[i3] - recon).norm_sqr();
            }
            brute = brute.min(d);
        }
        let z = joint_edge_distance(&grid.spectra, &gains, i3, 0, sym);
        assert!((z - brute).abs() <= 1e-12 * brute.max(1.0));

        // relabeling receive antennas leaves the distance unchanged
        let spectra_swapped = vec![grid.spectra[1].clone(), grid.spectra[0].clone()];
        let gains_swapped = vec![gains[1].clone(), gains[0].clone()];
        let z_swapped = joint_edge_distance(&spectra_swapped, &gains_swapped, i3, 0, sym);
        assert!((z - z_swapped).abs() <= 1e-12 * z.max(1.0));
    }

    #[test]
    fn diversity_metric_factorizes_over_arms() {
        let cfg = SystemConfig {
            nr: 2,
            ..SystemConfig::near_capacity_ideal(2)
        };
        let mut rng = frame_stream(23, 0, StreamRole::ChannelTaps);
        let ch = draw_flat_iid(&cfg, &mut rng);
        let spectra: Vec<Vec<Cplx>> = (0..2)
            .map(|l| {
                (0..cfg.ld)
                    .map(|i| ch.gains[0][l][i] * qpsk_map(0, 1) + Cplx::new(0.3, -0.2))
                    .collect()
            })
            .collect();
        let noise_scale = 2.0 * cfg.ld as f64 * 1e-3;
        let sym = qpsk_map(1, 1);
        let i = 77;
        let both = diversity_edge_log_metric(&spectra, &ch.gains[0], i, sym, noise_scale);
        let arm0 =
            diversity_edge_log_metric(&spectra[0..1], &ch.gains[0][0..1], i, sym, noise_scale);
        let arm1 =
            diversity_edge_log_metric(&spectra[1..2], &ch.gains[0][1..2], i, sym, noise_scale);
        assert!((both - (arm0 + arm1)).abs() < 1e-12 * both.abs().max(1.0));

        // single arm reduces to one exponential distance
        let d = (spectra[0][i] - ch.gains[0][0][i] * sym).norm_sqr();
        assert!((arm0 + d / noise_scale).abs() < 1e-12 * d.max(1.0));
    }

    #[test]
    fn gamma_scale_invariance_keeps_decisions() {
        let s = setup(cfg_small(), 29);
        let ch = draw_channel(&s.cfg, &mut frame_stream(31, 0, StreamRole::ChannelTaps));
        let data = bits(s.cfg.ld2, 9);
        let (mut grid, gains, _) = noiseless_grid(&s, &ch, &data);
        // perturb the grid so metrics are not trivially certain
        for spec in grid.spectra.iter_mut() {
            for (n, v) in spec.iter_mut().enumerate() {
                *v += Cplx::new(0.11, -0.07) * ((n % 5) as f64 - 2.0) * 0.2;
            }
        }
        let (g1, g2) = build_joint_tables(&grid, &gains, &s.layout, &s.code, &s.cfg);
        let reference = turbo_decode(&s.code, &g1, &g2, &s.layout.turbo_perm, 2).unwrap();

        // rebuild decoder 1's table with per-position scaling
        let rows: Vec<[f64; EDGES]> = (0..g1.len())
            .map(|i| {
                let scale = 0.25 + (i % 7) as f64;
                let mut row = [0.0; EDGES];
                for (e, r) in row.iter_mut().enumerate() {
                    *r = g1.row(i)[e] * scale;
                }
                row
            })
            .collect();
        let g1_scaled = GammaTable::from_probs(rows).unwrap();
        let scaled = turbo_decode(&s.code, &g1_scaled, &g2, &s.layout.turbo_perm, 2).unwrap();
        assert_eq!(reference, scaled);
    }

    #[test]
    fn joint_detection_noiseless_and_useless_channel() {
        let s = setup(cfg_small(), 37);
        let ch = draw_channel(&s.cfg, &mut frame_stream(41, 0, StreamRole::ChannelTaps));
        let data = bits(s.cfg.ld2, 13);
        let (grid, gains, _) = noiseless_grid(&s, &ch, &data);
        let det = detect_frame_joint(&grid, &gains, &s.layout, &s.code, &s.cfg, &data).unwrap();
        assert_eq!(det.bit_errors, 0);
        assert_eq!(det.bits, data);

        // infinite noise scale: metrics are uniform and decisions carry no
        // information, so roughly half the bits disagree
        let useless = DemodGrid {
            spectra: grid.spectra.clone(),
            noise_scale: f64::INFINITY,
        };
        let mut errors = 0usize;
        let mut total = 0usize;
        for seed in 0..6 {
            let data = bits(s.cfg.ld2, 100 + seed);
            let det =
                detect_frame_joint(&useless, &gains, &s.layout, &s.code, &s.cfg, &data).unwrap();
            errors += det.bit_errors;
            total += s.cfg.ld2;
        }
        let ber = errors as f64 / total as f64;
        assert!((0.35..0.65).contains(&ber), "useless-channel BER {ber}");
    }

    #[test]
    fn diversity_detection_noiseless() {
        let cfg = SystemConfig {
            ld: 256,
            ld2: 256,
            turbo_iters: 4,
            ..SystemConfig::near_capacity_ideal(2)
        };
        let derived = cfg.derived().unwrap();
        let _ = derived;
        let layout = FrameLayout::new(&cfg, 3);
        let code = RscCode::four_state();
        let data = bits(cfg.ld2, 21);
        let streams = crate::turbo::turbo_encode(&code, &data, &layout.turbo_perm).unwrap();
        let ch = draw_flat_iid(&cfg, &mut frame_stream(43, 0, StreamRole::ChannelTaps));

        let grids: Vec<DemodGrid> = (0..2)
            .map(|nt| {
                let spectra: Vec<Vec<Cplx>> = (0..cfg.nr)
                    .map(|l| {
                        let mut spec = vec![Cplx::new(0.0, 0.0); cfg.ld];
                        for i in 0..cfg.ld2 {
                            let i3 = layout.data_subcarrier[i];
                            spec[i3] = ch.gains[nt][l][i3] * data_symbol(&streams, nt, i);
                        }
                        spec
                    })
                    .collect();
                DemodGrid {
                    spectra,
                    noise_scale: 2.0 * cfg.ld as f64 * 1e-6,
                }
            })
            .collect();
        let det = detect_frame_diversity(&grids, &ch.gains, &layout, &code, &cfg, &data).unwrap();
        assert_eq!(det.bit_errors, 0);
    }

    #[test]
    fn mode_enums_are_exercised() {
        // silence unused-import warnings for Mode/Receiver in this module
        assert_ne!(Mode::Joint, Mode::NearCapacity);
        assert_ne!(Receiver::Ideal, Receiver::Practical);
    }
}
