//! End-to-end receiver invariants that need full frames rather than single
//! operations.

mod common;

use mimo_ofdm::framer::{data_symbol, FrameLayout};
use mimo_ofdm::harness::{simulate_frame, sweep, LinkSetup, RunSpec};
use mimo_ofdm::rx::{detect_frame_diversity, DemodGrid};
use mimo_ofdm::turbo::{bcjr_decode, turbo_encode, RscCode};
use mimo_ofdm::{Cplx, SystemConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Distribution;

/// After the three offset stages, the residual entering the data FFT stays
/// within two superfine quanta for nearly all detected frames at 0 dB SNR
/// per bit with the full-length preamble.
#[test]
fn residual_offset_bound_holds_for_most_frames() {
    let cfg = SystemConfig::default();
    let setup = LinkSetup::new(&cfg, 77).unwrap();
    let sigma_w_sq = cfg.noise_var_for_snr(1.0).unwrap(); // 0 dB
    let bound = 2.0 * 2.0 * std::f64::consts::PI / (cfg.interp as f64 * cfg.ld as f64);

    let frames = 60u64;
    let mut detected = 0u64;
    let mut within = 0u64;
    for frame in 0..frames {
        let rec = simulate_frame(&setup, sigma_w_sq, 77, frame).unwrap();
        if rec.erased || rec.failed {
            continue;
        }
        detected += 1;
        if rec.fo_residual_err.unwrap() <= bound {
            within += 1;
        }
    }
    assert!(
        detected >= frames - 3,
        "too many erasures: {detected}/{frames}"
    );
    let fraction = within as f64 / detected as f64;
    assert!(
        fraction >= 0.95,
        "residual bound held in only {within}/{detected} frames"
    );
}

/// A second receive arm never hurts: at 3 dB the two-arm link is at least
/// as good as the single-arm one over a common frame budget.
#[test]
fn extra_diversity_arm_does_not_degrade_ber() {
    let run = |nr: usize| {
        let spec = RunSpec {
            cfg: SystemConfig::near_capacity_ideal(nr),
            snr_db: vec![3.0],
            frames: 200,
            master_seed: 21,
            workers: 2,
        };
        sweep(&spec).unwrap()[0].ber
    };
    let single = run(1);
    let double = run(2);
    assert!(
        double <= single,
        "Nr=2 BER {double} exceeds Nr=1 BER {single}"
    );
}

/// Exhaustive-MAP agreement on short blocks, here with certainty-free
/// random tables and a second pass through the iterative decoder to cover
/// the prior exchange.
#[test]
fn bcjr_matches_oracle_on_short_blocks() {
    let code = RscCode::four_state();
    for block in 0..10u64 {
        let gamma = common::random_gamma(12, 31 + block);
        let prior = common::random_priors(12, 77 + block);
        let out = bcjr_decode(&code, &gamma, &prior).unwrap();
        let oracle = common::exhaustive_map_posteriors(&code, &gamma, &prior);
        for (a, b) in out.posterior.iter().zip(oracle.iter()) {
            assert!((a - b).abs() <= 1e-9);
        }
    }
}

/// Flat unfaded channel at high SNR: a hundred frames decode without a
/// single bit error.
#[test]
fn awgn_only_high_snr_is_error_free() {
    let cfg = SystemConfig {
        ld: 1024,
        ld2: 1024,
        turbo_iters: 8,
        ..SystemConfig::near_capacity_ideal(1)
    };
    let layout = FrameLayout::new(&cfg, 3);
    let code = RscCode::four_state();
    let sigma_w_sq = cfg.noise_var_for_snr(10f64.powf(0.9)).unwrap(); // 9 dB
    let fd_sigma = (cfg.ld as f64 * sigma_w_sq).sqrt();
    let unit_gains: Vec<Vec<Vec<Cplx>>> = vec![vec![vec![Cplx::new(1.0, 0.0); cfg.ld]; 1]; 2];

    let mut total_errors = 0usize;
    for frame in 0..100u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(900 + frame);
        let bits: Vec<u8> = (0..cfg.ld2).map(|_| rng.gen_range(0..2) as u8).collect();
        let streams = turbo_encode(&code, &bits, &layout.turbo_perm).unwrap();
        let grids: Vec<DemodGrid> = (0..2)
            .map(|nt| {
                let spectra = vec![(0..cfg.ld)
                    .map(|i3| {
                        let i = layout.frame_perm.inverse(i3);
                        let noise = Cplx::new(
                            rand_distr::StandardNormal.sample(&mut rng),
                            rand_distr::StandardNormal.sample(&mut rng),
                        ) * fd_sigma;
                        data_symbol(&streams, nt, i) + noise
                    })
                    .collect()];
                DemodGrid {
                    spectra,
                    noise_scale: 2.0 * cfg.ld as f64 * sigma_w_sq,
                }
            })
            .collect();
        let det = detect_frame_diversity(&grids, &unit_gains, &layout, &code, &cfg, &bits).unwrap();
        total_errors += det.bit_errors;
    }
    assert_eq!(total_errors, 0);
}
