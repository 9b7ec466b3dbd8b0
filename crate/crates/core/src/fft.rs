//! Real-input DFT with an unnormalized forward and a 1/N inverse.
//!
//! With the `std` feature the transforms are delegated to `rustfft`. Without
//! it a radix-2 kernel handles power-of-two lengths and a direct O(N²) sum
//! handles the rest.

use crate::prelude::*;
use num_complex::Complex64;

#[cfg(feature = "std")]
use std::sync::Arc;

pub(crate) struct RealDft {
    n: usize,
    #[cfg(feature = "std")]
    forward: Arc<dyn rustfft::Fft<f64>>,
    #[cfg(feature = "std")]
    inverse: Arc<dyn rustfft::Fft<f64>>,
}

impl RealDft {
    pub(crate) fn new(n: usize) -> Self {
        #[cfg(feature = "std")]
        {
            let mut planner = rustfft::FftPlanner::new();
            Self {
                n,
                forward: planner.plan_fft_forward(n),
                inverse: planner.plan_fft_inverse(n),
            }
        }
        #[cfg(not(feature = "std"))]
        {
            Self { n }
        }
    }

    pub(crate) fn bins(&self) -> usize {
        self.n / 2 + 1
    }

    /// Writes the `n/2 + 1` non-negative-frequency bins of `input` into `out`.
    pub(crate) fn forward(&self, input: &[f64], buf: &mut Vec<Complex64>, out: &mut [Complex64]) {
        debug_assert_eq!(input.len(), self.n);
        debug_assert_eq!(out.len(), self.bins());
        buf.clear();
        buf.extend(input.iter().map(|&x| Complex64::new(x, 0.0)));
        self.transform(buf, false);
        out.copy_from_slice(&buf[..self.bins()]);
    }

    /// Hermitian-extends `spectrum` and writes the real inverse into `out`.
    /// Imaginary parts of the DC and (even-length) Nyquist bins are ignored.
    pub(crate) fn inverse(
        &self,
        spectrum: &[Complex64],
        buf: &mut Vec<Complex64>,
        out: &mut [f64],
    ) {
        let n = self.n;
        debug_assert_eq!(spectrum.len(), self.bins());
        debug_assert_eq!(out.len(), n);
        buf.clear();
        buf.resize(n, Complex64::new(0.0, 0.0));
        buf[0] = Complex64::new(spectrum[0].re, 0.0);
        for k in 1..spectrum.len() {
            if 2 * k == n {
                buf[k] = Complex64::new(spectrum[k].re, 0.0);
            } else {
                buf[k] = spectrum[k];
                buf[n - k] = spectrum[k].conj();
            }
        }
        self.transform(buf, true);
        let scale = 1.0 / n as f64;
        for (o, c) in out.iter_mut().zip(buf.iter()) {
            *o = c.re * scale;
        }
    }

    #[cfg(feature = "std")]
    fn transform(&self, buf: &mut [Complex64], inverse: bool) {
        if inverse {
            self.inverse.process(buf);
        } else {
            self.forward.process(buf);
        }
    }

    #[cfg(not(feature = "std"))]
    fn transform(&self, buf: &mut [Complex64], inverse: bool) {
        if self.n.is_power_of_two() {
            radix2(buf, inverse);
        } else {
            let out = direct_dft(buf, inverse);
            buf.copy_from_slice(&out);
        }
    }
}

/// Unnormalized DFT by direct summation; `inverse` flips the exponent sign.
#[allow(dead_code)]
pub(crate) fn direct_dft(input: &[Complex64], inverse: bool) -> Vec<Complex64> {
    let n = input.len();
    let sign = if inverse { 1.0 } else { -1.0 };
    (0..n)
        .map(|k| {
            input
                .iter()
                .enumerate()
                .map(|(j, &x)| {
                    // reduce k*j mod n first so the angle stays small
                    let phase =
                        sign * 2.0 * core::f64::consts::PI * ((k * j) % n) as f64 / n as f64;
                    x * Complex64::new(phase.cos(), phase.sin())
                })
                .fold(Complex64::new(0.0, 0.0), |acc, v| acc + v)
        })
        .collect()
}

#[allow(dead_code)]
pub(crate) fn radix2(buf: &mut [Complex64], inverse: bool) {
    let n = buf.len();
    if n <= 1 {
        return;
    }
    let bits = n.trailing_zeros();
    for i in 0..n {
        let j = i.reverse_bits() >> (usize::BITS - bits);
        if j > i {
            buf.swap(i, j);
        }
    }
    let sign = if inverse { 1.0 } else { -1.0 };
    let mut len = 2;
    while len <= n {
        let half = len / 2;
        for start in (0..n).step_by(len) {
            for k in 0..half {
                let angle = sign * 2.0 * core::f64::consts::PI * k as f64 / len as f64;
                let w = Complex64::new(angle.cos(), angle.sin());
                let a = buf[start + k];
                let b = buf[start + k + half] * w;
                buf[start + k] = a + b;
                buf[start + k + half] = a - b;
            }
        }
        len <<= 1;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn signal(n: usize) -> Vec<f64> {
        (0..n)
            .map(|i| ((i * 7 + 3) % 11) as f64 - 5.0 + 0.25 * (i as f64).sin())
            .collect()
    }

    #[test]
    fn forward_matches_direct_sum() {
        for n in [2usize, 4, 7, 16, 30, 64] {
            let x = signal(n);
            let dft = RealDft::new(n);
            let mut buf = Vec::new();
            let mut out = vec![Complex64::new(0.0, 0.0); dft.bins()];
            dft.forward(&x, &mut buf, &mut out);
            let input: Vec<Complex64> = x.iter().map(|&v| Complex64::new(v, 0.0)).collect();
            let oracle = direct_dft(&input, false);
            for k in 0..dft.bins() {
                assert!((out[k] - oracle[k]).norm() < 1e-9, "n={n} k={k}");
            }
        }
    }

    #[test]
    fn inverse_undoes_forward() {
        for n in [4usize, 9, 32] {
            let x = signal(n);
            let dft = RealDft::new(n);
            let mut buf = Vec::new();
            let mut spec = vec![Complex64::new(0.0, 0.0); dft.bins()];
            dft.forward(&x, &mut buf, &mut spec);
            let mut back = vec![0.0; n];
            dft.inverse(&spec, &mut buf, &mut back);
            for (a, b) in x.iter().zip(&back) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn radix2_matches_direct_sum() {
        let input: Vec<Complex64> = (0..32)
            .map(|i| Complex64::new((i as f64 * 0.3).cos(), (i as f64 * 0.7).sin()))
            .collect();
        for inverse in [false, true] {
            let mut buf = input.clone();
            radix2(&mut buf, inverse);
            let oracle = direct_dft(&input, inverse);
            for (a, b) in buf.iter().zip(&oracle) {
                assert!((a - b).norm() < 1e-10);
            }
        }
    }
}
