//! Closed-form capacity limits, the SNR-per-frame variance comparison
//! between flat i.i.d. and multipath fading, and the pulse-shaping lowpass
//! filter with its transmit power spectral density.

use std::f64::consts::PI;

use crate::error::{Error, Result};

/// Capacity/SNR pair over one complex dimension.
#[derive(Debug, Clone, Copy)]
pub struct CapacityPoint {
    /// Bits per transmission.
    pub capacity: f64,
    /// Average SNR per bit, linear.
    pub snr_b: f64,
    /// Average SNR per bit in dB.
    pub snr_b_db: f64,
}

/// Minimum average SNR per bit sustaining capacity `c`:
/// `(2^c - 1) / c`, with the analytic limit `ln 2` at `c = 0`.
pub fn min_snr_per_bit(c: f64) -> Result<CapacityPoint> {
    if c < 0.0 {
        return Err(Error::NonpositiveInput("capacity"));
    }
    let snr_b = if c == 0.0 {
        std::f64::consts::LN_2
    } else {
        ((2.0f64).powf(c) - 1.0) / c
    };
    Ok(CapacityPoint {
        capacity: c,
        snr_b,
        snr_b_db: 10.0 * snr_b.log10(),
    })
}

/// Channel capacity over one complex dimension: `log2(1 + snr)` bits per
/// transmission.
pub fn capacity_bits(snr: f64) -> f64 {
    (1.0 + snr).log2()
}

/// Log2 of the number of distinguishable messages over `n` transmissions,
/// `n * log2(1 + snr)`. The raw count overflows any fixed width for
/// realistic `n`, so only the log form is exposed.
pub fn message_count_log2(snr: f64, n: usize) -> f64 {
    n as f64 * capacity_bits(snr)
}

/// Variances of the per-frame SNR proxy under the two channel models.
#[derive(Debug, Clone, Copy)]
pub struct SnrVarianceReport {
    /// Flat i.i.d. per-subcarrier fading: `4 Lh^2 sigma_f^4 / Ld`.
    pub flat_var: f64,
    /// `Lh`-tap multipath fading: `4 Lh sigma_f^4`.
    pub multipath_var: f64,
    /// `multipath_var / flat_var = Ld / Lh`.
    pub ratio: f64,
}

/// Closed forms for the variance of the frame-averaged channel power
/// `(1/Ld) sum_i |H_i|^2` under both models.
pub fn snr_variance_report(lh: usize, ld: usize, sigma_f_sq: f64) -> SnrVarianceReport {
    let s4 = sigma_f_sq * sigma_f_sq;
    let flat_var = 4.0 * (lh * lh) as f64 * s4 / ld as f64;
    let multipath_var = 4.0 * lh as f64 * s4;
    SnrVarianceReport {
        flat_var,
        multipath_var,
        ratio: multipath_var / flat_var,
    }
}

/// Linear-phase FIR lowpass, Hamming-windowed sinc.
#[derive(Debug, Clone)]
pub struct LpfDesign {
    pub taps: Vec<f64>,
    /// Edge of the occupied band in radians; the transition band sits just
    /// below it.
    pub cutoff: f64,
    /// Transition bandwidth in radians.
    pub transition: f64,
}

/// Designs the pulse-shaping lowpass.
///
/// Length follows the Hamming-window rule `L = 8 pi / transition` (rounded
/// up, kept even for symmetric half-sample delay). The sinc prototype is
/// centered half a transition below `cutoff` so the response reaches the
/// stopband at `cutoff`; taps are normalized to unit DC gain.
pub fn design_lpf(cutoff: f64, transition: f64) -> Result<LpfDesign> {
    if !(cutoff > 0.0 && cutoff < PI) {
        return Err(Error::NonpositiveInput("cutoff outside (0, pi)"));
    }
    if !(transition > 0.0 && transition < PI) {
        return Err(Error::NonpositiveInput("transition outside (0, pi)"));
    }
    let mut len = (8.0 * PI / transition).ceil() as usize;
    if len % 2 == 1 {
        len += 1;
    }
    let proto = (cutoff - transition / 2.0).max(transition / 2.0).min(PI);
    let alpha = (len - 1) as f64 / 2.0;
    let mut taps: Vec<f64> = (0..len)
        .map(|n| {
            let x = n as f64 - alpha;
            let ideal = if x.abs() < 1e-12 {
                proto / PI
            } else {
                (proto * x).sin() / (PI * x)
            };
            let window = 0.54 - 0.46 * (2.0 * PI * n as f64 / (len - 1) as f64).cos();
            ideal * window
        })
        .collect();
    let dc: f64 = taps.iter().sum();
    for t in taps.iter_mut() {
        *t /= dc;
    }
    Ok(LpfDesign {
        taps,
        cutoff,
        transition,
    })
}

impl LpfDesign {
    /// DTFT magnitude at digital frequency `omega`.
    pub fn response(&self, omega: f64) -> f64 {
        let mut re = 0.0;
        let mut im = 0.0;
        for (n, t) in self.taps.iter().enumerate() {
            re += t * (omega * n as f64).cos();
            im -= t * (omega * n as f64).sin();
        }
        (re * re + im * im).sqrt()
    }
}

/// Span of the filtered channel: the physical taps convolved with the
/// pulse shape.
pub fn equivalent_span(lpf_len: usize, channel_taps: usize) -> usize {
    lpf_len + channel_taps - 1
}

/// Sampled transmit PSD of the shaped signal.
#[derive(Debug, Clone)]
pub struct PsdCurve {
    /// One-sided frequency grid in Hz, `0 ..= 1/(2 Ts)`.
    pub freq_hz: Vec<f64>,
    /// Linear PSD values.
    pub psd: Vec<f64>,
    /// One-sided occupied bandwidth in Hz: beyond this frequency the PSD
    /// stays 40 dB below its peak.
    pub occupied_bw_hz: f64,
}

/// Evaluates `S(F) = (1/Ts) (sigma_s_sq / 2) |P(F)|^2` over one-sided
/// baseband frequencies, `P` being the filter's DTFT at `omega = 2 pi F Ts`.
pub fn shaped_psd(design: &LpfDesign, sigma_s_sq: f64, ts: f64, points: usize) -> PsdCurve {
    let points = points.max(16);
    let scale = sigma_s_sq / (2.0 * ts);
    let mut freq_hz = Vec::with_capacity(points);
    let mut psd = Vec::with_capacity(points);
    for k in 0..points {
        let omega = PI * k as f64 / (points - 1) as f64;
        let p = design.response(omega);
        freq_hz.push(omega / (2.0 * PI * ts));
        psd.push(scale * p * p);
    }
    let peak = psd.iter().cloned().fold(0.0f64, f64::max);
    let floor = peak * 1e-4; // -40 dB
    let mut last_above = 0usize;
    for (k, &v) in psd.iter().enumerate() {
        if v > floor {
            last_above = k;
        }
    }
    let occupied_bw_hz = if last_above + 1 < points {
        freq_hz[last_above + 1]
    } else {
        freq_hz[points - 1]
    };
    PsdCurve {
        freq_hz,
        psd,
        occupied_bw_hz,
    }
}
