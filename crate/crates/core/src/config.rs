//! System parameters, derived frame lengths and SNR conversions.
//!
//! A [`SystemConfig`] is immutable after [`SystemConfig::validate`] and is
//! shared read-only by any number of concurrent trial workers.

use std::fmt;
use std::path::Path;

use crate::error::{Error, Result};

/// Average power of the QPSK alphabet `{±1 ± j}`.
pub const QPSK_POWER: f64 = 2.0;

/// Antenna arrangement of the link.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// All transmit antennas share one carrier; the receiver resolves the
    /// spatial mixture jointly (2x2 only).
    Joint,
    /// Each transmit antenna uses its own carrier with `nr` dedicated
    /// receive antennas, so streams stay orthogonal.
    NearCapacity,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Mode::Joint => write!(f, "joint"),
            Mode::NearCapacity => write!(f, "nearcap"),
        }
    }
}

/// Receiver front end selection.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Receiver {
    /// Genie-aided: true channel, true frequency offset and true noise
    /// variance are handed to the detector.
    Ideal,
    /// Full acquisition chain: SoF detection, coarse/fine/superfine offset
    /// recovery, ML channel estimation, noise variance estimation.
    Practical,
}

impl fmt::Display for Receiver {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Receiver::Ideal => write!(f, "ideal"),
            Receiver::Practical => write!(f, "practical"),
        }
    }
}

/// Every scalar parameter of the link.
///
/// Field names map one-to-one onto the config file keys listed in
/// [`SystemConfig::from_key_values`].
#[derive(Debug, Clone, PartialEq)]
pub struct SystemConfig {
    /// Transmit antenna count (`Nt`).
    pub nt: usize,
    /// Receive antenna count (`Nr`); per transmit antenna in
    /// near-capacity mode.
    pub nr: usize,
    /// Preamble length in samples (`Lp`). Zero is allowed only with the
    /// ideal receiver, which never touches the preamble.
    pub lp: usize,
    /// Data block / FFT length in samples (`Ld`).
    pub ld: usize,
    /// Data symbol count per frame (`Ld2`).
    pub ld2: usize,
    /// Postamble length in symbols (`Lo`).
    pub lo: usize,
    /// Leading buffer length in symbols (`B`).
    pub buffer_len: usize,
    /// True channel span in taps (`Lh`).
    pub lh: usize,
    /// Per-dimension tap variance (`sigma_f_sq`).
    pub sigma_f_sq: f64,
    /// Carrier frequency offset magnitude bound in radians/sample
    /// (`cfo_max`).
    pub cfo_max: f64,
    /// Coarse frequency search bin count (`B1`).
    pub coarse_bins: usize,
    /// Fine frequency search bin count (`B2`).
    pub fine_bins: usize,
    /// Fine search half-range in radians (`fine_halfwidth`).
    pub fine_halfwidth: f64,
    /// Superfine FFT interpolation factor (`I`).
    pub interp: usize,
    /// Turbo decoder iterations (`turbo_iters`).
    pub turbo_iters: usize,
    /// Information bits per transmission per transmit antenna (`kappa`).
    pub kappa: f64,
    /// Antenna arrangement (`mode`).
    pub mode: Mode,
    /// Receiver front end (`receiver`).
    pub receiver: Receiver,
}

impl Default for SystemConfig {
    /// The 2x2 joint configuration with `Lp = 1024`, `Lo = 512` and a
    /// 10-tap channel of per-dimension tap variance 0.5.
    fn default() -> Self {
        Self {
            nt: 2,
            nr: 2,
            lp: 1024,
            ld: 4096,
            ld2: 3072,
            lo: 512,
            buffer_len: 512,
            lh: 10,
            sigma_f_sq: 0.5,
            cfo_max: 0.04,
            coarse_bins: 64,
            fine_bins: 64,
            fine_halfwidth: 0.005,
            interp: 16,
            turbo_iters: 8,
            kappa: 0.5,
            mode: Mode::Joint,
            receiver: Receiver::Practical,
        }
    }
}

/// Lengths derived from a [`SystemConfig`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DerivedLengths {
    /// Channel span assumed by the receiver: `Lhr = 2 Lh - 1`.
    pub lhr: usize,
    /// Cyclic prefix length: `Lcp = Lhr - 1`.
    pub lcp: usize,
    /// Cyclic suffix length: `Lcs = Lhr - 1`.
    pub lcs: usize,
    /// Total frame length: `L = Lp + Lcs + Lcp + Ld`.
    pub total: usize,
    /// Per-sample time-domain power target `sigma_s_sq = 2 / Ld`.
    pub sigma_s_sq: f64,
}

impl SystemConfig {
    /// Checks every invariant, or reports the first violated one.
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::InvalidConfig(msg));
        if self.nt < 1 || self.nr < 1 {
            return fail("Nt and Nr must be at least 1".into());
        }
        if self.lh < 1 {
            return fail("Lh must be at least 1".into());
        }
        if self.ld2 < 1 {
            return fail("Ld2 must be at least 1".into());
        }
        if !self.ld.is_power_of_two() {
            return fail(format!("Ld = {} must be a power of two", self.ld));
        }
        if self.lp == 0 {
            if self.receiver != Receiver::Ideal {
                return fail("Lp = 0 requires the ideal receiver".into());
            }
            if self.lh != 1 {
                return fail(
                    "Lp = 0 leaves no preamble to build the cyclic suffix from; Lh must be 1"
                        .into(),
                );
            }
        } else if !self.lp.is_power_of_two() {
            return fail(format!("Lp = {} must be a power of two", self.lp));
        }
        if self.mode == Mode::Joint && !self.lp.is_multiple_of(self.nt.max(1)) {
            return fail(format!(
                "joint mode splits preamble subcarriers evenly: Lp = {} is not divisible by Nt = {}",
                self.lp, self.nt
            ));
        }
        if self.mode == Mode::Joint && (self.nt != 2 || self.nr != 2) {
            return fail(format!(
                "joint mode detection is defined for Nt = Nr = 2, got {}x{}",
                self.nt, self.nr
            ));
        }
        if self.buffer_len + self.ld2 + self.lo > self.ld {
            return fail(format!(
                "frame does not fit the FFT: B + Ld2 + Lo = {} exceeds Ld = {}",
                self.buffer_len + self.ld2 + self.lo,
                self.ld
            ));
        }
        if !(self.cfo_max > 0.0 && self.cfo_max < std::f64::consts::PI) {
            return fail(format!("cfo_max = {} must lie in (0, pi)", self.cfo_max));
        }
        if self.fine_halfwidth >= self.cfo_max {
            return fail(format!(
                "fine_halfwidth = {} must be smaller than cfo_max = {}",
                self.fine_halfwidth, self.cfo_max
            ));
        }
        if self.fine_halfwidth <= 0.0 {
            return fail("fine_halfwidth must be positive".into());
        }
        if self.sigma_f_sq <= 0.0 {
            return fail("sigma_f_sq must be positive".into());
        }
        if self.kappa <= 0.0 {
            return fail("kappa must be positive".into());
        }
        if self.coarse_bins == 0 || self.fine_bins == 0 {
            return fail("B1 and B2 must be positive".into());
        }
        if self.interp == 0 {
            return fail("I must be positive".into());
        }
        // The scalar preamble normal matrix requires the comb
        // autocorrelation to vanish over all receiver lags.
        if self.lp > 0 {
            let lhr = 2 * self.lh - 1;
            let spacing = match self.mode {
                Mode::Joint => self.lp / self.nt,
                Mode::NearCapacity => self.lp,
            };
            if lhr > spacing {
                return fail(format!(
                    "receiver span Lhr = {lhr} exceeds the preamble comb spacing {spacing}; \
                     increase Lp or reduce Lh"
                ));
            }
        }
        Ok(())
    }

    /// Computes the guard-interval and frame lengths.
    pub fn derived(&self) -> Result<DerivedLengths> {
        self.validate()?;
        let lhr = 2 * self.lh - 1;
        let lcp = lhr - 1;
        Ok(DerivedLengths {
            lhr,
            lcp,
            lcs: lcp,
            total: self.lp + lcp + lcp + self.ld,
            sigma_s_sq: 2.0 / self.ld as f64,
        })
    }

    /// Fraction of frame samples carrying payload:
    /// `Ld2 / (Ld + Lp + Lcp + Lcs)`.
    pub fn throughput(&self, derived: &DerivedLengths) -> f64 {
        self.ld2 as f64 / (self.ld + self.lp + derived.lcp + derived.lcs) as f64
    }

    /// Per-dimension noise variance that realizes a given linear average
    /// SNR per bit.
    pub fn noise_var_for_snr(&self, snr_b: f64) -> Result<f64> {
        if snr_b <= 0.0 {
            return Err(Error::NonpositiveInput("snr_b"));
        }
        Ok(
            self.lh as f64 * self.sigma_f_sq * QPSK_POWER * self.nr as f64
                / (self.ld as f64 * self.kappa * snr_b),
        )
    }

    /// Inverse of [`Self::noise_var_for_snr`].
    pub fn snr_per_bit_for_noise_var(&self, sigma_w_sq: f64) -> Result<f64> {
        if sigma_w_sq <= 0.0 {
            return Err(Error::NonpositiveInput("sigma_w_sq"));
        }
        Ok(
            self.lh as f64 * self.sigma_f_sq * QPSK_POWER * self.nr as f64
                / (self.ld as f64 * self.kappa * sigma_w_sq),
        )
    }

    /// Parses the flat `key=value` config format: one pair per line, `#`
    /// starts a comment, unknown keys are errors. Keys not present keep
    /// their default values.
    pub fn from_key_values(text: &str, path: &str) -> Result<Self> {
        let mut cfg = SystemConfig::default();
        for (idx, raw) in text.lines().enumerate() {
            let line = match raw.find('#') {
                Some(pos) => &raw[..pos],
                None => raw,
            }
            .trim();
            if line.is_empty() {
                continue;
            }
            let parse_err = |msg: String| Error::ConfigParse {
                path: path.to_string(),
                line: idx + 1,
                msg,
            };
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| parse_err("expected key=value".into()))?;
            let key = key.trim();
            let value = value.trim();
            let int = |v: &str| -> Result<usize> {
                v.parse::<usize>()
                    .map_err(|e| parse_err(format!("bad integer `{v}`: {e}")))
            };
            let float = |v: &str| -> Result<f64> {
                v.parse::<f64>()
                    .map_err(|e| parse_err(format!("bad number `{v}`: {e}")))
            };
            match key {
                "Nt" => cfg.nt = int(value)?,
                "Nr" => cfg.nr = int(value)?,
                "Lp" => cfg.lp = int(value)?,
                "Ld" => cfg.ld = int(value)?,
                "Ld2" => cfg.ld2 = int(value)?,
                "Lo" => cfg.lo = int(value)?,
                "B" => cfg.buffer_len = int(value)?,
                "Lh" => cfg.lh = int(value)?,
                "sigma_f_sq" => cfg.sigma_f_sq = float(value)?,
                "cfo_max" => cfg.cfo_max = float(value)?,
                "B1" => cfg.coarse_bins = int(value)?,
                "B2" => cfg.fine_bins = int(value)?,
                "fine_halfwidth" => cfg.fine_halfwidth = float(value)?,
                "I" => cfg.interp = int(value)?,
                "turbo_iters" => cfg.turbo_iters = int(value)?,
                "kappa" => cfg.kappa = float(value)?,
                "mode" => {
                    cfg.mode = match value {
                        "joint-mimo" | "joint" => Mode::Joint,
                        "near-capacity" | "nearcap" => Mode::NearCapacity,
                        other => return Err(parse_err(format!("unknown mode `{other}`"))),
                    }
                }
                "receiver" => {
                    cfg.receiver = match value {
                        "ideal" => Receiver::Ideal,
                        "practical" => Receiver::Practical,
                        other => return Err(parse_err(format!("unknown receiver `{other}`"))),
                    }
                }
                other => return Err(parse_err(format!("unknown key `{other}`"))),
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads a config file in the format of [`Self::from_key_values`].
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_key_values(&text, &path.display().to_string())
    }

    /// Canned setup for the near-capacity study: no preamble or guard
    /// overhead, every subcarrier carries data, flat per-subcarrier fading
    /// with unit mean power (`Lh sigma_f_sq = 0.5`).
    pub fn near_capacity_ideal(nr: usize) -> Self {
        Self {
            nt: 2,
            nr,
            lp: 0,
            ld: 4096,
            ld2: 4096,
            lo: 0,
            buffer_len: 0,
            lh: 1,
            sigma_f_sq: 0.5,
            mode: Mode::NearCapacity,
            receiver: Receiver::Ideal,
            ..Self::default()
        }
    }
}

/// Channel span in taps implied by a path-length spread `d0` (meters) at a
/// given baud rate: `round(d0 * baud / c)`, at least one tap.
pub fn channel_span_from_geometry(d0: f64, baud: f64, c: f64) -> Result<usize> {
    if d0 <= 0.0 {
        return Err(Error::NonpositiveInput("d0"));
    }
    if baud <= 0.0 {
        return Err(Error::NonpositiveInput("baud"));
    }
    if c <= 0.0 {
        return Err(Error::NonpositiveInput("c"));
    }
    Ok(((d0 * baud / c).round() as usize).max(1))
}
