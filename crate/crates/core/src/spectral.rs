//! FFT plumbing shared by the channel and the matched filter.

use std::cell::RefCell;
use std::f64::consts::PI;

use num_complex::Complex64;
use rustfft::FftPlanner;

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

/// In-place forward DFT, no scaling.
pub fn fft(buf: &mut [Complex64]) {
    if buf.is_empty() {
        return;
    }
    let plan = PLANNER.with(|p| p.borrow_mut().plan_fft_forward(buf.len()));
    plan.process(buf);
}

/// In-place inverse DFT scaled by `1/N`.
pub fn ifft(buf: &mut [Complex64]) {
    if buf.is_empty() {
        return;
    }
    let plan = PLANNER.with(|p| p.borrow_mut().plan_fft_inverse(buf.len()));
    plan.process(buf);
    let scale = 1.0 / buf.len() as f64;
    for v in buf.iter_mut() {
        *v *= scale;
    }
}

/// Signed frequency of DFT bin `m` in cycles/sample, in `[-1/2, 1/2)`.
#[inline]
pub fn bin_frequency(m: usize, n: usize) -> f64 {
    if 2 * m < n {
        m as f64 / n as f64
    } else {
        m as f64 / n as f64 - 1.0
    }
}

/// Circular fractional delay of `buf` by `delay` samples via a spectral
/// phase ramp. Exact for band-limited periodic signals. The Nyquist bin of
/// an even-length transform takes the symmetric (cosine) factor.
pub fn fractional_delay(buf: &mut [Complex64], delay: f64) {
    let n = buf.len();
    if n == 0 || delay == 0.0 {
        return;
    }
    fft(buf);
    for (m, v) in buf.iter_mut().enumerate() {
        let factor = if 2 * m == n {
            Complex64::new((PI * delay).cos(), 0.0)
        } else {
            let f = bin_frequency(m, n);
            Complex64::from_polar(1.0, -2.0 * PI * f * delay)
        };
        *v *= factor;
    }
    ifft(buf);
}

/// Zero-pads a length-`n` spectrum to `n * factor` bins so that the inverse
/// transform is the trigonometric interpolant of the original sequence on a
/// grid `factor` times finer. The Nyquist bin of an even `n` is split evenly
/// between the positive and negative halves.
pub fn zero_pad_spectrum(spec: &[Complex64], factor: usize) -> Vec<Complex64> {
    let n = spec.len();
    if factor <= 1 {
        return spec.to_vec();
    }
    let big = n * factor;
    let mut out = vec![Complex64::new(0.0, 0.0); big];
    let gain = factor as f64;
    if n % 2 == 1 {
        let h = n.div_ceil(2);
        for m in 0..h {
            out[m] = spec[m] * gain;
        }
        for m in h..n {
            out[big - (n - m)] = spec[m] * gain;
        }
    } else {
        let h = n / 2;
        for m in 0..h {
            out[m] = spec[m] * gain;
        }
        out[h] = spec[h] * (0.5 * gain);
        out[big - h] = spec[h] * (0.5 * gain);
        for m in (h + 1)..n {
            out[big - (n - m)] = spec[m] * gain;
        }
    }
    out
}
