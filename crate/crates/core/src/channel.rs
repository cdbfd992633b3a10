//! Quasi-static frequency-selective Rayleigh channel with carrier
//! frequency offset and AWGN, plus the per-subcarrier flat i.i.d. model of
//! the near-capacity study.
//!
//! One realization is drawn per frame and held fixed across it; taps are
//! independent across delay, antenna pair and frame (uniform power delay
//! profile).

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::config::SystemConfig;
use crate::error::{Error, Result};
use crate::Cplx;

fn complex_gaussian(rng: &mut impl Rng, sigma_per_dim: f64) -> Cplx {
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    Cplx::new(re * sigma_per_dim, im * sigma_per_dim)
}

/// Multipath taps and frequency offset of one frame.
#[derive(Debug, Clone)]
pub struct ChannelRealization {
    /// `taps[nr][nt][0..Lh]`, complex Gaussian with per-dimension variance
    /// `sigma_f_sq`.
    pub taps: Vec<Vec<Vec<Cplx>>>,
    /// Carrier frequency offset in radians/sample, uniform over
    /// `[-cfo_max, cfo_max]`.
    pub cfo: f64,
}

/// Draws taps and offset for one frame.
pub fn draw_channel(cfg: &SystemConfig, rng: &mut impl Rng) -> ChannelRealization {
    let sigma = cfg.sigma_f_sq.sqrt();
    let taps = (0..cfg.nr)
        .map(|_| {
            (0..cfg.nt)
                .map(|_| (0..cfg.lh).map(|_| complex_gaussian(rng, sigma)).collect())
                .collect()
        })
        .collect();
    let cfo = rng.gen_range(-cfg.cfo_max..=cfg.cfo_max);
    ChannelRealization { taps, cfo }
}

impl ChannelRealization {
    /// Channel realization with no fading, no delay spread and no offset.
    pub fn identity(nr: usize, nt: usize, lh: usize) -> Self {
        let mut taps = vec![vec![vec![Cplx::new(0.0, 0.0); lh]; nt]; nr];
        for row in taps.iter_mut() {
            for t in row.iter_mut() {
                t[0] = Cplx::new(1.0, 0.0);
            }
        }
        Self { taps, cfo: 0.0 }
    }

    /// `Ld`-point frequency response of the `(nr, nt)` tap vector.
    pub fn frequency_response(&self, nr: usize, nt: usize, ld: usize) -> Vec<Cplx> {
        crate::fft::fft(&self.taps[nr][nt], ld)
    }
}

/// Applies per-pair linear convolution, the common CFO rotation and AWGN:
/// `r[nr][n] = (sum_nt s[nt] * h[nr][nt])[n] e^{j w n} + noise`.
///
/// Output length is `L + Lh - 1`. With `sigma_w_sq = 0` no noise stream is
/// consumed.
pub fn propagate(
    frames: &[Vec<Cplx>],
    ch: &ChannelRealization,
    sigma_w_sq: f64,
    rng: &mut impl Rng,
) -> Result<Vec<Vec<Cplx>>> {
    let nt = frames.len();
    let nr = ch.taps.len();
    if nr == 0 || nt == 0 || ch.taps[0].len() != nt {
        return Err(Error::LengthMismatch {
            context: "propagate antenna counts",
            expected: nt,
            actual: ch.taps.first().map_or(0, |t| t.len()),
        });
    }
    let frame_len = frames[0].len();
    if frames.iter().any(|f| f.len() != frame_len) {
        return Err(Error::LengthMismatch {
            context: "propagate frame lengths",
            expected: frame_len,
            actual: frames.iter().map(|f| f.len()).min().unwrap_or(0),
        });
    }
    let lh = ch.taps[0][0].len();
    let out_len = frame_len + lh - 1;
    let sigma_w = sigma_w_sq.sqrt();

    let mut received = Vec::with_capacity(nr);
    for taps_nr in &ch.taps {
        let mut y = vec![Cplx::new(0.0, 0.0); out_len];
        for (frame, taps) in frames.iter().zip(taps_nr.iter()) {
            for (d, h) in taps.iter().enumerate() {
                if h.norm_sqr() == 0.0 {
                    continue;
                }
                for (n, s) in frame.iter().enumerate() {
                    y[n + d] += s * h;
                }
            }
        }
        if ch.cfo != 0.0 {
            let step = Cplx::from_polar(1.0, ch.cfo);
            let mut rot = Cplx::new(1.0, 0.0);
            for v in y.iter_mut() {
                *v *= rot;
                rot *= step;
                // keep the recursive oscillator on the unit circle
                rot /= rot.norm();
            }
        }
        if sigma_w > 0.0 {
            for v in y.iter_mut() {
                *v += complex_gaussian(rng, sigma_w);
            }
        }
        received.push(y);
    }
    Ok(received)
}

/// Per-subcarrier flat i.i.d. gains of the near-capacity study.
#[derive(Debug, Clone)]
pub struct FlatIidChannel {
    /// `gains[nt][l][0..Ld]`, complex Gaussian with per-dimension variance
    /// `Lh sigma_f_sq`, independent over subcarrier and diversity arm.
    pub gains: Vec<Vec<Vec<Cplx>>>,
}

/// Draws the flat model: every subcarrier and every arm fades
/// independently with per-dimension variance `Lh sigma_f_sq`.
pub fn draw_flat_iid(cfg: &SystemConfig, rng: &mut impl Rng) -> FlatIidChannel {
    let sigma = (cfg.lh as f64 * cfg.sigma_f_sq).sqrt();
    let gains = (0..cfg.nt)
        .map(|_| {
            (0..cfg.nr)
                .map(|_| (0..cfg.ld).map(|_| complex_gaussian(rng, sigma)).collect())
                .collect()
        })
        .collect();
    FlatIidChannel { gains }
}
