//! Seeded Monte Carlo harness: independent frame trials over an SNR sweep,
//! order-independent aggregation and byte-stable CSV output.
//!
//! Every frame derives its own random streams from `(master seed, frame
//! index)`, so the results are a pure function of the run spec no matter
//! how trials are scheduled across workers. Trials are collected in frame
//! order and reduced serially.

use std::time::Instant;

use rand::Rng;
use rayon::prelude::*;

use crate::channel::{draw_channel, draw_flat_iid, propagate};
use crate::config::{DerivedLengths, Mode, Receiver, SystemConfig};
use crate::error::{Error, Result};
use crate::framer::{
    assemble_frame, build_chest_matrix, build_preamble, frequency_symbols, ChestMatrix,
    FrameLayout, PreambleSpec,
};
use crate::rng::{frame_stream, StreamRole};
use crate::rx::{demod_fft, detect_frame_diversity, detect_frame_joint, DemodGrid};
use crate::sync::{derotate, synchronize, ChannelEstimate};
use crate::turbo::{turbo_encode, RscCode};
use crate::Cplx;

/// One sweep request.
#[derive(Debug, Clone)]
pub struct RunSpec {
    pub cfg: SystemConfig,
    /// SNR-per-bit points in dB.
    pub snr_db: Vec<f64>,
    /// Frames per point.
    pub frames: u64,
    pub master_seed: u64,
    pub workers: usize,
}

impl RunSpec {
    pub fn validate(&self) -> Result<()> {
        self.cfg.validate()?;
        if self.frames < 1 {
            return Err(Error::Usage("frame budget must be at least 1".into()));
        }
        if self.snr_db.is_empty() {
            return Err(Error::Usage("SNR list must not be empty".into()));
        }
        if self.workers < 1 {
            return Err(Error::Usage("worker count must be at least 1".into()));
        }
        Ok(())
    }
}

/// Outcome of one frame trial.
#[derive(Debug, Clone, Copy)]
pub struct TrialRecord {
    pub frame: u64,
    pub erased: bool,
    /// Decoder hit a numerical degeneracy; counted separately, never mixed
    /// into the BER.
    pub failed: bool,
    pub bit_errors: u64,
    pub bits: u64,
    /// `|coarse estimate - true offset|` (practical receiver only).
    pub fo_coarse_err: Option<f64>,
    /// `|coarse + fine estimate - true offset|`.
    pub fo_fine_err: Option<f64>,
    /// `|total estimate - true offset|` after all three stages.
    pub fo_residual_err: Option<f64>,
    /// Frame-averaged channel power `(1/Ld) sum_i |H_i|^2`.
    pub snr_proxy: f64,
}

/// Per-SNR-point aggregate.
#[derive(Debug, Clone, Copy)]
pub struct AggregateStats {
    pub snr_db: f64,
    pub frames: u64,
    pub erasures: u64,
    pub decode_failures: u64,
    /// Bits counted over detected frames.
    pub bits: u64,
    pub bit_errors: u64,
    pub ber: f64,
    /// Normal-approximation 95% confidence half-width of the BER.
    pub ber_ci: f64,
    /// Detected frames with at least one bit error.
    pub frame_errors: u64,
    /// Frame error rate over detected frames.
    pub fer: f64,
    pub fo_rms_coarse: f64,
    pub fo_max_coarse: f64,
    pub fo_rms_fine: f64,
    pub fo_rms_residual: f64,
    pub seconds: f64,
}

/// Run-level state shared read-only by all frame trials.
pub struct LinkSetup {
    pub cfg: SystemConfig,
    pub derived: DerivedLengths,
    pub code: RscCode,
    pub layout: FrameLayout,
    pub preamble: PreambleSpec,
    pub chest: Option<ChestMatrix>,
    /// Single-antenna view used by the per-carrier chains of the
    /// near-capacity practical receiver.
    chain: Option<ChainSetup>,
}

struct ChainSetup {
    cfg: SystemConfig,
    preamble: PreambleSpec,
    chest: ChestMatrix,
    layouts: Vec<FrameLayout>,
}

impl LinkSetup {
    pub fn new(cfg: &SystemConfig, master_seed: u64) -> Result<Self> {
        cfg.validate()?;
        let derived = cfg.derived()?;
        let layout = FrameLayout::new(cfg, master_seed);
        let preamble = build_preamble(cfg, master_seed)?;
        let chest = if cfg.lp > 0 {
            Some(build_chest_matrix(cfg, &derived, &preamble))
        } else {
            None
        };

        let chain = if cfg.mode == Mode::NearCapacity && cfg.receiver == Receiver::Practical {
            let chain_cfg = SystemConfig {
                nt: 1,
                ..cfg.clone()
            };
            let chain_preamble = PreambleSpec {
                freq: vec![preamble.freq[0].clone()],
                time: vec![preamble.time[0].clone()],
                map: preamble.map.clone(),
                seed: preamble.seed,
            };
            let chain_chest = build_chest_matrix(&chain_cfg, &derived, &chain_preamble);
            // chain `nt` sees only antenna nt's known symbols
            let layouts = (0..cfg.nt)
                .map(|nt| FrameLayout {
                    frame_perm: layout.frame_perm.clone(),
                    turbo_perm: layout.turbo_perm.clone(),
                    buffer: vec![layout.buffer[nt].clone()],
                    postamble: vec![layout.postamble[nt].clone()],
                    fill: vec![layout.fill[nt].clone()],
                    data_subcarrier: layout.data_subcarrier.clone(),
                    postamble_subcarrier: layout.postamble_subcarrier.clone(),
                })
                .collect();
            Some(ChainSetup {
                cfg: chain_cfg,
                preamble: chain_preamble,
                chest: chain_chest,
                layouts,
            })
        } else {
            None
        };

        Ok(Self {
            cfg: cfg.clone(),
            derived,
            code: RscCode::four_state(),
            layout,
            preamble,
            chest,
            chain,
        })
    }
}

fn draw_bits(cfg: &SystemConfig, master_seed: u64, frame: u64) -> Vec<u8> {
    let mut rng = frame_stream(master_seed, frame, StreamRole::DataBits);
    (0..cfg.ld2).map(|_| rng.gen_range(0..2) as u8).collect()
}

fn erased_record(frame: u64, snr_proxy: f64) -> TrialRecord {
    TrialRecord {
        frame,
        erased: true,
        failed: false,
        bit_errors: 0,
        bits: 0,
        fo_coarse_err: None,
        fo_fine_err: None,
        fo_residual_err: None,
        snr_proxy,
    }
}

/// Runs one frame end to end. Numerical decoder failures are recorded, not
/// propagated; structural errors abort the run.
pub fn simulate_frame(
    setup: &LinkSetup,
    sigma_w_sq: f64,
    master_seed: u64,
    frame: u64,
) -> Result<TrialRecord> {
    let cfg = &setup.cfg;
    match (cfg.mode, cfg.receiver) {
        (Mode::Joint, _) => simulate_joint(setup, sigma_w_sq, master_seed, frame),
        (Mode::NearCapacity, Receiver::Ideal) => {
            simulate_nearcap_ideal(setup, sigma_w_sq, master_seed, frame)
        }
        (Mode::NearCapacity, Receiver::Practical) => {
            simulate_nearcap_practical(setup, sigma_w_sq, master_seed, frame)
        }
    }
}

fn finish_detection(
    detection: std::result::Result<crate::rx::DetectionResult, Error>,
    frame: u64,
    bits: usize,
    fo_coarse_err: Option<f64>,
    fo_fine_err: Option<f64>,
    fo_residual_err: Option<f64>,
    snr_proxy: f64,
) -> Result<TrialRecord> {
    match detection {
        Ok(det) => Ok(TrialRecord {
            frame,
            erased: false,
            failed: false,
            bit_errors: det.bit_errors as u64,
            bits: bits as u64,
            fo_coarse_err,
            fo_fine_err,
            fo_residual_err,
            snr_proxy,
        }),
        Err(Error::NumericalDegeneracy(_)) => Ok(TrialRecord {
            frame,
            erased: false,
            failed: true,
            bit_errors: 0,
            bits: 0,
            fo_coarse_err,
            fo_fine_err,
            fo_residual_err,
            snr_proxy,
        }),
        Err(other) => Err(other),
    }
}

fn simulate_joint(
    setup: &LinkSetup,
    sigma_w_sq: f64,
    master_seed: u64,
    frame: u64,
) -> Result<TrialRecord> {
    let cfg = &setup.cfg;
    let bits = draw_bits(cfg, master_seed, frame);
    let tx = assemble_frame(
        cfg,
        &setup.derived,
        &setup.code,
        &setup.preamble,
        &setup.layout,
        &bits,
    )?;
    let ch = draw_channel(
        cfg,
        &mut frame_stream(master_seed, frame, StreamRole::ChannelTaps),
    );
    let mut noise_rng = frame_stream(master_seed, frame, StreamRole::Noise);
    let r = propagate(&tx.samples, &ch, sigma_w_sq, &mut noise_rng)?;

    let snr_proxy = ch
        .taps
        .iter()
        .flatten()
        .map(|h| h.iter().map(|t| t.norm_sqr()).sum::<f64>())
        .sum::<f64>()
        / (cfg.nr * cfg.nt) as f64;

    match cfg.receiver {
        Receiver::Ideal => {
            let stream: Vec<Vec<Cplx>> = r.iter().map(|a| derotate(a, ch.cfo)).collect();
            let m2 = cfg.lp + setup.derived.lcs + setup.derived.lcp;
            let grid = demod_fft(&stream, m2, cfg, sigma_w_sq)?;
            let est = ChannelEstimate::from_true_channel(&ch, &setup.derived, cfg.ld);
            let det = detect_frame_joint(&grid, &est.freq, &setup.layout, &setup.code, cfg, &bits);
            finish_detection(
                det,
                frame,
                cfg.ld2,
                Some(0.0),
                Some(0.0),
                Some(0.0),
                snr_proxy,
            )
        }
        Receiver::Practical => {
            let chest = setup
                .chest
                .as_ref()
                .expect("practical receiver has a preamble");
            let sync = match synchronize(
                &r,
                &setup.preamble,
                chest,
                &setup.layout,
                cfg,
                &setup.derived,
            )? {
                Some(s) => s,
                None => return Ok(erased_record(frame, snr_proxy)),
            };
            let grid = demod_fft(&sync.stream, sync.m2, cfg, sync.noise_var)?;
            let det = detect_frame_joint(
                &grid,
                &sync.channel.freq,
                &setup.layout,
                &setup.code,
                cfg,
                &bits,
            );
            finish_detection(
                det,
                frame,
                cfg.ld2,
                Some((sync.fo.coarse - ch.cfo).abs()),
                Some((sync.fo.coarse + sync.fo.fine - ch.cfo).abs()),
                Some((sync.fo.total() - ch.cfo).abs()),
                snr_proxy,
            )
        }
    }
}

fn simulate_nearcap_ideal(
    setup: &LinkSetup,
    sigma_w_sq: f64,
    master_seed: u64,
    frame: u64,
) -> Result<TrialRecord> {
    let cfg = &setup.cfg;
    let bits = draw_bits(cfg, master_seed, frame);
    let streams = turbo_encode(&setup.code, &bits, &setup.layout.turbo_perm)?;
    let ch = draw_flat_iid(
        cfg,
        &mut frame_stream(master_seed, frame, StreamRole::ChannelTaps),
    );
    let mut noise_rng = frame_stream(master_seed, frame, StreamRole::Noise);

    // frequency-domain model: R = H X + W per subcarrier and arm, with
    // per-dimension FFT noise variance Ld sigma_w_sq
    let fd_sigma = (cfg.ld as f64 * sigma_w_sq).sqrt();
    let grids: Vec<DemodGrid> = (0..cfg.nt)
        .map(|nt| {
            let x = frequency_symbols(cfg, &setup.layout, &streams, nt);
            let spectra = (0..cfg.nr)
                .map(|l| {
                    x.iter()
                        .enumerate()
                        .map(|(i, s)| {
                            let noise = Cplx::new(
                                rand_distr::Distribution::sample(
                                    &rand_distr::StandardNormal,
                                    &mut noise_rng,
                                ),
                                rand_distr::Distribution::sample(
                                    &rand_distr::StandardNormal,
                                    &mut noise_rng,
                                ),
                            ) * fd_sigma;
                            ch.gains[nt][l][i] * s + noise
                        })
                        .collect()
                })
                .collect();
            DemodGrid {
                spectra,
                noise_scale: 2.0 * cfg.ld as f64 * sigma_w_sq,
            }
        })
        .collect();

    let snr_proxy = ch
        .gains
        .iter()
        .flatten()
        .map(|g| g.iter().map(|v| v.norm_sqr()).sum::<f64>() / cfg.ld as f64)
        .sum::<f64>()
        / (cfg.nt * cfg.nr) as f64;

    let det = detect_frame_diversity(&grids, &ch.gains, &setup.layout, &setup.code, cfg, &bits);
    finish_detection(
        det,
        frame,
        cfg.ld2,
        Some(0.0),
        Some(0.0),
        Some(0.0),
        snr_proxy,
    )
}

fn simulate_nearcap_practical(
    setup: &LinkSetup,
    sigma_w_sq: f64,
    master_seed: u64,
    frame: u64,
) -> Result<TrialRecord> {
    let cfg = &setup.cfg;
    let chain = setup.chain.as_ref().expect("practical near-capacity setup");
    let bits = draw_bits(cfg, master_seed, frame);
    let tx = assemble_frame(
        cfg,
        &setup.derived,
        &setup.code,
        &setup.preamble,
        &setup.layout,
        &bits,
    )?;
    let mut tap_rng = frame_stream(master_seed, frame, StreamRole::ChannelTaps);
    let mut cfo_rng = frame_stream(master_seed, frame, StreamRole::CarrierOffset);
    let mut noise_rng = frame_stream(master_seed, frame, StreamRole::Noise);

    let mut grids = Vec::with_capacity(cfg.nt);
    let mut gains = Vec::with_capacity(cfg.nt);
    let mut snr_proxy = 0.0;
    let mut coarse_err = 0.0f64;
    let mut fine_err = 0.0f64;
    let mut residual_err = 0.0f64;
    for nt in 0..cfg.nt {
        // each carrier has its own oscillator: independent offset per chain
        let mut ch = draw_channel(&chain.cfg, &mut tap_rng);
        ch.cfo = cfo_rng.gen_range(-cfg.cfo_max..=cfg.cfo_max);
        snr_proxy += ch
            .taps
            .iter()
            .map(|row| row[0].iter().map(|t| t.norm_sqr()).sum::<f64>())
            .sum::<f64>()
            / (cfg.nt * cfg.nr) as f64;

        let r = propagate(
            std::slice::from_ref(&tx.samples[nt]),
            &ch,
            sigma_w_sq,
            &mut noise_rng,
        )?;
        let sync = match synchronize(
            &r,
            &chain.preamble,
            &chain.chest,
            &chain.layouts[nt],
            &chain.cfg,
            &setup.derived,
        )? {
            Some(s) => s,
            None => return Ok(erased_record(frame, snr_proxy)),
        };
        coarse_err = coarse_err.max((sync.fo.coarse - ch.cfo).abs());
        fine_err = fine_err.max((sync.fo.coarse + sync.fo.fine - ch.cfo).abs());
        residual_err = residual_err.max((sync.fo.total() - ch.cfo).abs());

        let grid = demod_fft(&sync.stream, sync.m2, &chain.cfg, sync.noise_var)?;
        gains.push(
            sync.channel
                .freq
                .iter()
                .map(|per_tx| per_tx[0].clone())
                .collect::<Vec<_>>(),
        );
        grids.push(grid);
    }

    let det = detect_frame_diversity(&grids, &gains, &setup.layout, &setup.code, cfg, &bits);
    finish_detection(
        det,
        frame,
        cfg.ld2,
        Some(coarse_err),
        Some(fine_err),
        Some(residual_err),
        snr_proxy,
    )
}

/// Runs one SNR point over `frames` independently seeded trials.
pub fn run_point(
    setup: &LinkSetup,
    snr_db: f64,
    frames: u64,
    master_seed: u64,
    pool: &rayon::ThreadPool,
) -> Result<AggregateStats> {
    let started = Instant::now();
    let sigma_w_sq = setup.cfg.noise_var_for_snr(10f64.powf(snr_db / 10.0))?;
    let records: Vec<Result<TrialRecord>> = pool.install(|| {
        (0..frames)
            .into_par_iter()
            .map(|frame| simulate_frame(setup, sigma_w_sq, master_seed, frame))
            .collect()
    });

    // serial reduction in frame order keeps aggregation order-independent
    // of worker scheduling
    let mut erasures = 0u64;
    let mut failures = 0u64;
    let mut bits = 0u64;
    let mut bit_errors = 0u64;
    let mut frame_errors = 0u64;
    let mut detected = 0u64;
    let mut coarse_sq = 0.0f64;
    let mut coarse_max = 0.0f64;
    let mut fine_sq = 0.0f64;
    let mut residual_sq = 0.0f64;
    let mut measured = 0u64;
    for rec in records {
        let rec = rec?;
        if rec.erased {
            erasures += 1;
            continue;
        }
        if rec.failed {
            failures += 1;
            continue;
        }
        detected += 1;
        bits += rec.bits;
        bit_errors += rec.bit_errors;
        if rec.bit_errors > 0 {
            frame_errors += 1;
        }
        if let (Some(c), Some(f), Some(r)) =
            (rec.fo_coarse_err, rec.fo_fine_err, rec.fo_residual_err)
        {
            coarse_sq += c * c;
            fine_sq += f * f;
            residual_sq += r * r;
            coarse_max = coarse_max.max(c);
            measured += 1;
        }
    }
    let ber = if bits > 0 {
        bit_errors as f64 / bits as f64
    } else {
        0.0
    };
    let ber_ci = if bits > 0 {
        1.96 * (ber * (1.0 - ber) / bits as f64).sqrt()
    } else {
        0.0
    };
    let fer = if detected > 0 {
        frame_errors as f64 / detected as f64
    } else {
        0.0
    };
    let (fo_rms_coarse, fo_rms_fine, fo_rms_residual) = if measured > 0 {
        (
            (coarse_sq / measured as f64).sqrt(),
            (fine_sq / measured as f64).sqrt(),
            (residual_sq / measured as f64).sqrt(),
        )
    } else {
        (0.0, 0.0, 0.0)
    };

    Ok(AggregateStats {
        snr_db,
        frames,
        erasures,
        decode_failures: failures,
        bits,
        bit_errors,
        ber,
        ber_ci,
        frame_errors,
        fer,
        fo_rms_coarse,
        fo_max_coarse: coarse_max,
        fo_rms_fine,
        fo_rms_residual,
        seconds: started.elapsed().as_secs_f64(),
    })
}

pub const CSV_HEADER: &str =
    "snr_db,frames,erasures,bits,bit_errors,ber,ber_ci,fo_rms_coarse,fo_max_coarse,fo_rms_residual,seconds";

fn fmt(x: f64) -> String {
    format!("{x:.5e}")
}

/// One CSV data row, scientific notation with six significant digits.
pub fn csv_row(row: &AggregateStats) -> String {
    format!(
        "{},{},{},{},{},{},{},{},{},{},{}",
        fmt(row.snr_db),
        row.frames,
        row.erasures,
        row.bits,
        row.bit_errors,
        fmt(row.ber),
        fmt(row.ber_ci),
        fmt(row.fo_rms_coarse),
        fmt(row.fo_max_coarse),
        fmt(row.fo_rms_residual),
        fmt(row.seconds),
    )
}

/// Renders the full results file.
pub fn csv_text(rows: &[AggregateStats]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for row in rows {
        out.push_str(&csv_row(row));
        out.push('\n');
    }
    out
}

/// Runs every SNR point of the run spec.
pub fn sweep(spec: &RunSpec) -> Result<Vec<AggregateStats>> {
    spec.validate()?;
    let setup = LinkSetup::new(&spec.cfg, spec.master_seed)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(spec.workers)
        .build()
        .map_err(|e| Error::Usage(format!("cannot build worker pool: {e}")))?;
    spec.snr_db
        .iter()
        .map(|&snr| run_point(&setup, snr, spec.frames, spec.master_seed, &pool))
        .collect()
}
