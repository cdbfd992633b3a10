//! Baseband Monte Carlo simulator for turbo-coded MIMO-OFDM transmission
//! over frequency-selective Rayleigh fading with carrier frequency offset
//! and AWGN.
//!
//! The crate is organized along the signal path:
//!
//! - [`config`]: system parameters, derived frame lengths, SNR conversions
//! - [`turbo`]: rate-1/2 four-state parallel-concatenated code and BCJR decoder
//! - [`framer`]: per-antenna preamble/frame construction and the channel
//!   estimation matrix
//! - [`channel`]: quasi-static Rayleigh multipath, CFO rotation and AWGN
//! - [`sync`]: start-of-frame detection, coarse/fine/superfine frequency
//!   offset recovery, ML channel estimation, noise variance estimation
//! - [`rx`]: FFT demodulation, trellis transition metrics, frame detection
//! - [`capacity`]: capacity formulas, SNR-per-frame variance study, pulse
//!   shaping filter design
//! - [`harness`]: seeded parallel frame trials, sweeps and CSV output

pub mod capacity;
pub mod channel;
pub mod config;
pub mod error;
pub mod fft;
pub mod framer;
pub mod harness;
pub mod rng;
pub mod rx;
pub mod sync;
pub mod turbo;

pub use config::{DerivedLengths, Mode, Receiver, SystemConfig};
pub use error::Error;

/// Complex baseband sample type used throughout the crate.
pub type Cplx = rustfft::num_complex::Complex<f64>;
