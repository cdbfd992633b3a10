//! Acquisition chain of the practical receiver: start-of-frame detection
//! with coarse frequency binning, ML channel estimation from the overlapped
//! preamble, fine offset search against the reconstructed preamble echo,
//! superfine offset recovery by interpolated-FFT postamble matched
//! filtering, and noise variance estimation from the preamble fit residual.
//!
//! All grid searches are exhaustive over their stated ranges and break
//! exact ties towards the lowest index, so results do not depend on
//! evaluation order.

use crate::channel::ChannelRealization;
use crate::config::{DerivedLengths, SystemConfig};
use crate::error::{Error, Result};
use crate::fft::{fft, MatchedFilter};
use crate::framer::{ChestMatrix, FrameLayout, PreambleSpec};
use crate::Cplx;

/// `x[n] e^{-j omega n}`, evaluated by an incremental oscillator that is
/// renormalized every step.
pub fn derotate(x: &[Cplx], omega: f64) -> Vec<Cplx> {
    if omega == 0.0 {
        return x.to_vec();
    }
    let step = Cplx::from_polar(1.0, -omega);
    let mut rot = Cplx::new(1.0, 0.0);
    x.iter()
        .map(|v| {
            let out = v * rot;
            rot *= step;
            rot /= rot.norm();
            out
        })
        .collect()
}

/// Correlation peak of one `(receive antenna, transmit antenna)` pair.
#[derive(Debug, Clone, Copy)]
pub struct PairPeak {
    /// Lag of the correlation maximum.
    pub m_hat: usize,
    /// Winning coarse bin center in radians/sample.
    pub nu_hat: f64,
    /// Correlation magnitude at the maximum.
    pub magnitude: f64,
}

/// Outcome of the joint start-of-frame / coarse offset search.
#[derive(Debug, Clone)]
pub struct SofResult {
    /// `peaks[nr][nt]`.
    pub peaks: Vec<Vec<PairPeak>>,
    /// Set when any pair peaks outside the valid lag window.
    pub erased: bool,
    /// Mean winning bin center over all pairs.
    pub omega_coarse: f64,
    /// Frame start offset from the `(1, 1)` pair; only meaningful when the
    /// frame is not erased.
    pub m0: usize,
}

/// Centers of `bins` equal subdivisions of `[-half_range, half_range]`.
pub fn bin_centers(half_range: f64, bins: usize) -> Vec<f64> {
    (0..bins)
        .map(|b| -half_range + (2 * b + 1) as f64 * half_range / bins as f64)
        .collect()
}

fn scan_peak(corr: &[Cplx]) -> (usize, f64) {
    let mut best = (0usize, f64::NEG_INFINITY);
    for (m, v) in corr.iter().enumerate() {
        let mag = v.norm();
        if mag > best.1 {
            best = (m, mag);
        }
    }
    (best.0, best.1)
}

/// Exhaustive search over every lag and every coarse frequency bin of
/// `|(r e^{-j nu m}) corr s1_nt|` for each antenna pair.
///
/// A pair whose global maximum falls outside `[Lp - 1, Lp + Lh - 2]`
/// declares the frame erased.
pub fn detect_sof_coarse(
    r: &[Vec<Cplx>],
    preamble: &PreambleSpec,
    cfg: &SystemConfig,
) -> SofResult {
    let nr = r.len();
    let nt = cfg.nt;
    let filters: Vec<MatchedFilter> = (0..nt)
        .map(|a| MatchedFilter::new(&preamble.time[a], r[0].len()))
        .collect();
    let fft_len = filters[0].fft_len();

    let mut best: Vec<Vec<(f64, usize, f64)>> = vec![vec![(f64::NEG_INFINITY, 0, 0.0); nt]; nr];
    for nu in bin_centers(cfg.cfo_max, cfg.coarse_bins) {
        for (ant, r_ant) in r.iter().enumerate() {
            let spec = fft(&derotate(r_ant, nu), fft_len);
            for (a, filter) in filters.iter().enumerate() {
                let corr = filter.correlate_spectrum(&spec);
                let (m, mag) = scan_peak(&corr);
                // ties resolve to the earliest (bin, lag) by strict >
                if mag > best[ant][a].0 {
                    best[ant][a] = (mag, m, nu);
                }
            }
        }
    }

    let peaks: Vec<Vec<PairPeak>> = best
        .iter()
        .map(|row| {
            row.iter()
                .map(|&(magnitude, m_hat, nu_hat)| PairPeak {
                    m_hat,
                    nu_hat,
                    magnitude,
                })
                .collect()
        })
        .collect();

    let lo = cfg.lp - 1;
    let hi = cfg.lp + cfg.lh - 2;
    let erased = peaks.iter().flatten().any(|p| p.m_hat < lo || p.m_hat > hi);
    let omega_coarse = peaks.iter().flatten().map(|p| p.nu_hat).sum::<f64>() / (nr * nt) as f64;
    let m0 = peaks[0][0].m_hat.saturating_sub(cfg.lp - 1);

    SofResult {
        peaks,
        erased,
        omega_coarse,
        m0,
    }
}

/// ML channel estimate: receiver-span taps and their `Ld`-point frequency
/// response.
#[derive(Debug, Clone)]
pub struct ChannelEstimate {
    /// `taps[nr][nt][0..Lhr]`.
    pub taps: Vec<Vec<Vec<Cplx>>>,
    /// `freq[nr][nt][0..Ld]`.
    pub freq: Vec<Vec<Vec<Cplx>>>,
}

impl ChannelEstimate {
    /// Wraps the true channel as an estimate (genie-aided receiver). The
    /// taps sit at the head of the receiver span, matching a frame aligned
    /// at `m0 = Lh - 1`.
    pub fn from_true_channel(ch: &ChannelRealization, derived: &DerivedLengths, ld: usize) -> Self {
        let taps: Vec<Vec<Vec<Cplx>>> = ch
            .taps
            .iter()
            .map(|row| {
                row.iter()
                    .map(|h| {
                        let mut t = vec![Cplx::new(0.0, 0.0); derived.lhr];
                        t[..h.len()].copy_from_slice(h);
                        t
                    })
                    .collect()
            })
            .collect();
        let freq = taps
            .iter()
            .map(|row| row.iter().map(|t| fft(t, ld)).collect())
            .collect();
        Self { taps, freq }
    }
}

/// Least-squares fit of the preamble window starting at `m1`; the preamble
/// orthogonality reduces the normal matrix inverse to the scalar
/// `Ld / (2 Lp)`.
pub fn estimate_channel(
    r_rotated: &[Vec<Cplx>],
    chest: &ChestMatrix,
    m1: usize,
    cfg: &SystemConfig,
    derived: &DerivedLengths,
) -> Result<ChannelEstimate> {
    if chest.gram_scale <= 0.0 {
        return Err(Error::NumericalDegeneracy(
            "preamble normal matrix is singular".into(),
        ));
    }
    let inv = 1.0 / chest.gram_scale;
    let mut taps = Vec::with_capacity(r_rotated.len());
    for r_ant in r_rotated {
        let window = &r_ant[m1..m1 + cfg.lp];
        let per_tx: Vec<Vec<Cplx>> = (0..cfg.nt)
            .map(|nt| chest.project(nt, window).iter().map(|v| v * inv).collect())
            .collect();
        taps.push(per_tx);
    }
    let freq = taps
        .iter()
        .map(|row| row.iter().map(|t| fft(t, cfg.ld)).collect())
        .collect();
    let _ = derived;
    Ok(ChannelEstimate { taps, freq })
}

/// Fine offset search: correlates the received stream against the
/// reconstructed preamble echo `s1 * h_hat` over `B2` bins spanning
/// `omega_coarse +- fine_halfwidth`, averaged over antenna pairs.
pub fn fine_fo(
    r: &[Vec<Cplx>],
    est: &ChannelEstimate,
    preamble: &PreambleSpec,
    cfg: &SystemConfig,
    omega_coarse: f64,
) -> f64 {
    let nr = r.len();
    let nt = cfg.nt;
    // y1[nr][nt] = s1_nt conv taps; length L2 = Lp + Lhr - 1
    let templates: Vec<Vec<Vec<Cplx>>> = (0..nr)
        .map(|ant| {
            (0..nt)
                .map(|a| convolve(&preamble.time[a], &est.taps[ant][a]))
                .collect()
        })
        .collect();
    let filters: Vec<Vec<MatchedFilter>> = templates
        .iter()
        .map(|row| {
            row.iter()
                .map(|t| MatchedFilter::new(t, r[0].len()))
                .collect()
        })
        .collect();
    let fft_len = filters[0][0].fft_len();

    let mut best: Vec<Vec<(f64, f64)>> = vec![vec![(f64::NEG_INFINITY, 0.0); nt]; nr];
    for nu in bin_centers(cfg.fine_halfwidth, cfg.fine_bins) {
        for (ant, r_ant) in r.iter().enumerate() {
            let spec = fft(&derotate(r_ant, omega_coarse + nu), fft_len);
            for a in 0..nt {
                let corr = filters[ant][a].correlate_spectrum(&spec);
                let (_, mag) = scan_peak(&corr);
                if mag > best[ant][a].0 {
                    best[ant][a] = (mag, nu);
                }
            }
        }
    }
    best.iter().flatten().map(|&(_, nu)| nu).sum::<f64>() / (nr * nt) as f64
}

fn convolve(a: &[Cplx], b: &[Cplx]) -> Vec<Cplx> {
    let mut out = vec![Cplx::new(0.0, 0.0); a.len() + b.len() - 1];
    for (i, x) in a.iter().enumerate() {
        for (j, y) in b.iter().enumerate() {
            out[i + j] += x * y;
        }
    }
    out
}

/// Residual offset left after the coarse and fine stages, measured as a
/// circular shift of the interpolated data-block spectrum against the
/// postamble matched filter.
///
/// The spectrum shift search covers `+- 4 I` interpolated positions around
/// the zero-shift point `I Ld - 1`; the estimate resolution is
/// `2 pi / (I Ld)` radians/sample.
pub fn superfine_fo(
    r_rotated: &[Vec<Cplx>],
    est: &ChannelEstimate,
    layout: &FrameLayout,
    cfg: &SystemConfig,
    m2: usize,
) -> f64 {
    let interp_len = cfg.interp * cfg.ld;
    let window = 4 * cfg.interp as isize;
    let mut sum_shift = 0.0f64;
    for (ant, r_ant) in r_rotated.iter().enumerate() {
        let spectrum = fft(&r_ant[m2..m2 + cfg.ld], interp_len);
        // postamble matched filter coefficients at their interpolated
        // subcarrier positions
        let template: Vec<(usize, Cplx)> = layout
            .postamble_subcarrier
            .iter()
            .enumerate()
            .map(|(j, &i3)| {
                let mut g = Cplx::new(0.0, 0.0);
                for a in 0..cfg.nt {
                    g += est.freq[ant][a][i3] * layout.postamble[a][j];
                }
                (i3 * cfg.interp, g)
            })
            .collect();
        let mut best = (f64::NEG_INFINITY, 0isize);
        for s in -window..=window {
            let mut acc = Cplx::new(0.0, 0.0);
            for &(i4, g) in &template {
                let idx = (i4 as isize + s).rem_euclid(interp_len as isize) as usize;
                acc += spectrum[idx] * g.conj();
            }
            let mag = acc.norm();
            if mag > best.0 {
                best = (mag, s);
            }
        }
        sum_shift += best.1 as f64;
    }
    2.0 * std::f64::consts::PI * sum_shift / (interp_len as f64 * r_rotated.len() as f64)
}

/// Noise variance from the preamble fit residual, normalized by
/// `2 Lp Nr`.
pub fn estimate_noise_var(
    r_rotated: &[Vec<Cplx>],
    chest: &ChestMatrix,
    est: &ChannelEstimate,
    m1: usize,
    cfg: &SystemConfig,
) -> f64 {
    let mut energy = 0.0f64;
    for (ant, r_ant) in r_rotated.iter().enumerate() {
        let window = &r_ant[m1..m1 + cfg.lp];
        let mut residual: Vec<Cplx> = window.to_vec();
        for a in 0..cfg.nt {
            let fit = chest.synthesize(a, &est.taps[ant][a]);
            for (res, f) in residual.iter_mut().zip(fit.iter()) {
                *res -= f;
            }
        }
        energy += residual.iter().map(|v| v.norm_sqr()).sum::<f64>();
    }
    energy / (2.0 * cfg.lp as f64 * r_rotated.len() as f64)
}

/// Frequency offset estimates of the three stages.
#[derive(Debug, Clone, Copy, Default)]
pub struct FoEstimates {
    pub coarse: f64,
    pub fine: f64,
    pub superfine: f64,
}

impl FoEstimates {
    pub fn total(&self) -> f64 {
        self.coarse + self.fine + self.superfine
    }
}

/// Everything the detector needs after successful acquisition.
pub struct Synchronized {
    pub sof: SofResult,
    pub fo: FoEstimates,
    pub channel: ChannelEstimate,
    pub noise_var: f64,
    /// Start of the data-block FFT window.
    pub m2: usize,
    /// Received stream with all three offset estimates removed.
    pub stream: Vec<Vec<Cplx>>,
}

/// Runs the full acquisition pipeline. Returns `None` when the frame is
/// erased.
///
/// Order of operations: coarse SoF/offset, channel estimate, fine offset,
/// re-estimated channel, noise variance from that fit, superfine offset,
/// final derotation.
pub fn synchronize(
    r: &[Vec<Cplx>],
    preamble: &PreambleSpec,
    chest: &ChestMatrix,
    layout: &FrameLayout,
    cfg: &SystemConfig,
    derived: &DerivedLengths,
) -> Result<Option<Synchronized>> {
    let sof = detect_sof_coarse(r, preamble, cfg);
    if sof.erased {
        return Ok(None);
    }
    let m1 = sof.m0 + cfg.lh - 1;

    let r_coarse: Vec<Vec<Cplx>> = r.iter().map(|a| derotate(a, sof.omega_coarse)).collect();
    let first_pass = estimate_channel(&r_coarse, chest, m1, cfg, derived)?;

    let fine = fine_fo(r, &first_pass, preamble, cfg, sof.omega_coarse);
    let r_fine: Vec<Vec<Cplx>> = r
        .iter()
        .map(|a| derotate(a, sof.omega_coarse + fine))
        .collect();
    let channel = estimate_channel(&r_fine, chest, m1, cfg, derived)?;
    let noise_var = estimate_noise_var(&r_fine, chest, &channel, m1, cfg);

    let m2 = m1 + cfg.lp + derived.lcs;
    let superfine = superfine_fo(&r_fine, &channel, layout, cfg, m2);
    let stream = r_fine.iter().map(|a| derotate(a, superfine)).collect();

    let fo = FoEstimates {
        coarse: sof.omega_coarse,
        fine,
        superfine,
    };
    Ok(Some(Synchronized {
        sof,
        fo,
        channel,
        noise_var,
        m2,
        stream,
    }))
}
