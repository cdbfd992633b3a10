//! Thin wrappers around `rustfft` plus FFT-based linear correlation.
//!
//! Conventions: the analysis transform [`fft`] is unnormalized, the
//! synthesis transform [`ifft`] carries the full `1/N` factor. All other
//! modules go through these two so the scaling is fixed in one place.

use std::sync::Mutex;

use rustfft::FftPlanner;

use crate::Cplx;

// FftPlanner caches the plans it hands out; one global planner behind a
// mutex keeps plan construction off the per-frame hot path.
static PLANNER: Mutex<Option<FftPlanner<f64>>> = Mutex::new(None);

fn run_fft(buf: &mut [Cplx], inverse: bool) {
    let plan = {
        let mut guard = PLANNER.lock().unwrap();
        let planner = guard.get_or_insert_with(FftPlanner::new);
        if inverse {
            planner.plan_fft_inverse(buf.len())
        } else {
            planner.plan_fft_forward(buf.len())
        }
    };
    plan.process(buf);
}

/// Forward DFT, unnormalized: `X[i] = sum_n x[n] e^{-j 2 pi n i / N}`.
pub fn fft_in_place(buf: &mut [Cplx]) {
    run_fft(buf, false);
}

/// Inverse DFT with synthesis scaling: `x[n] = (1/N) sum_i X[i] e^{j 2 pi n i / N}`.
pub fn ifft_in_place(buf: &mut [Cplx]) {
    run_fft(buf, true);
    let scale = 1.0 / buf.len() as f64;
    for v in buf.iter_mut() {
        *v *= scale;
    }
}

/// Forward DFT of `x`, optionally zero-padded to `len`.
pub fn fft(x: &[Cplx], len: usize) -> Vec<Cplx> {
    assert!(len >= x.len());
    let mut buf = vec![Cplx::new(0.0, 0.0); len];
    buf[..x.len()].copy_from_slice(x);
    fft_in_place(&mut buf);
    buf
}

/// Inverse DFT of `x` (length preserved).
pub fn ifft(x: &[Cplx]) -> Vec<Cplx> {
    let mut buf = x.to_vec();
    ifft_in_place(&mut buf);
    buf
}

/// Matched filter against a fixed template, evaluated as FFT-based linear
/// correlation. The template spectrum is precomputed once and shared across
/// the frequency-bin grid of the acquisition search.
#[derive(Clone)]
pub struct MatchedFilter {
    template_spec: Vec<Cplx>,
    template_len: usize,
    out_len: usize,
    fft_len: usize,
}

impl MatchedFilter {
    /// Prepares correlation of signals of length `signal_len` against
    /// `template`. Output index `m` holds
    /// `sum_j x[m - Lt + 1 + j] * conj(template[j])` so a template aligned at
    /// signal offset `d` peaks at `m = Lt - 1 + d`.
    pub fn new(template: &[Cplx], signal_len: usize) -> Self {
        let template_len = template.len();
        let out_len = signal_len + template_len - 1;
        let fft_len = out_len.next_power_of_two();
        // conj-reversed template turns convolution into correlation
        let mut buf = vec![Cplx::new(0.0, 0.0); fft_len];
        for (n, t) in template.iter().enumerate() {
            buf[template_len - 1 - n] = t.conj();
        }
        fft_in_place(&mut buf);
        Self {
            template_spec: buf,
            template_len,
            out_len,
            fft_len,
        }
    }

    pub fn fft_len(&self) -> usize {
        self.fft_len
    }

    pub fn template_len(&self) -> usize {
        self.template_len
    }

    /// Full correlation of `x` against the template.
    pub fn correlate(&self, x: &[Cplx]) -> Vec<Cplx> {
        self.correlate_spectrum(&fft(x, self.fft_len))
    }

    /// Correlation from a precomputed signal spectrum of length `fft_len()`.
    /// Lets one signal FFT be reused across several templates.
    pub fn correlate_spectrum(&self, x_spec: &[Cplx]) -> Vec<Cplx> {
        assert_eq!(x_spec.len(), self.fft_len);
        let mut buf: Vec<Cplx> = x_spec
            .iter()
            .zip(self.template_spec.iter())
            .map(|(a, b)| a * b)
            .collect();
        ifft_in_place(&mut buf);
        buf.truncate(self.out_len);
        buf
    }
}

/// Direct O(n^2) linear correlation, the oracle for [`MatchedFilter`].
pub fn correlate_direct(x: &[Cplx], template: &[Cplx]) -> Vec<Cplx> {
    let lt = template.len();
    let out_len = x.len() + lt - 1;
    let mut out = vec![Cplx::new(0.0, 0.0); out_len];
    for (m, o) in out.iter_mut().enumerate() {
        let mut acc = Cplx::new(0.0, 0.0);
        for (j, t) in template.iter().enumerate() {
            let idx = m as isize - (lt as isize - 1) + j as isize;
            if idx >= 0 && (idx as usize) < x.len() {
                acc += x[idx as usize] * t.conj();
            }
        }
        *o = acc;
    }
    out
}
