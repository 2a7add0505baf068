//! One-dimensional trigonometric series over a period `[0, T)`.

use std::f64::consts::PI;

use crate::fields::{c, plan, C64, I};

/// Uniform samples of a (complex) T-periodic function with its FFT.
#[derive(Clone, Debug)]
pub struct Series1D {
    pub period: f64,
    pub samples: Vec<C64>,
    coeffs: Vec<C64>,
}

/// Integer frequencies in FFT order.
pub fn freqs(n: usize) -> Vec<f64> {
    (0..n).map(|m| if m < n / 2 { m as f64 } else { m as f64 - n as f64 }).collect()
}

impl Series1D {
    pub fn new(samples: Vec<C64>, period: f64) -> Series1D {
        let n = samples.len();
        let mut coeffs = samples.clone();
        plan(n, false).process(&mut coeffs);
        for v in &mut coeffs {
            *v /= n as f64;
        }
        Series1D { period, samples, coeffs }
    }

    pub fn from_real(samples: &[f64], period: f64) -> Series1D {
        Series1D::new(samples.iter().map(|&v| c(v, 0.0)).collect(), period)
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }
    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn coeffs(&self) -> &[C64] {
        &self.coeffs
    }

    pub fn x(&self, j: usize) -> f64 {
        self.period * j as f64 / self.len() as f64
    }

    /// Series value at arbitrary x (Nyquist mode taken as a cosine).
    pub fn eval(&self, x: f64) -> C64 {
        let n = self.len();
        let w = 2.0 * PI / self.period;
        let mut acc = self.coeffs[0];
        let step = C64::from_polar(1.0, w * x);
        let mut e = step;
        for m in 1..n / 2 {
            acc += self.coeffs[m] * e + self.coeffs[n - m] * e.conj();
            e *= step;
        }
        if n % 2 == 0 {
            acc += self.coeffs[n / 2] * (w * (n / 2) as f64 * x).cos();
        }
        acc
    }

    /// Samples of the `order`-th derivative. The Nyquist mode is dropped for odd orders.
    pub fn derivative(&self, order: u32) -> Vec<C64> {
        let n = self.len();
        let w = 2.0 * PI / self.period;
        let mut d = self.coeffs.clone();
        for (m, f) in freqs(n).into_iter().enumerate() {
            if n % 2 == 0 && m == n / 2 && order % 2 == 1 {
                d[m] = C64::new(0.0, 0.0);
            } else {
                d[m] *= (I * w * f).powu(order);
            }
        }
        plan(n, true).process(&mut d);
        d
    }

    /// Mean value times period.
    pub fn integral(&self) -> C64 {
        self.coeffs[0] * self.period
    }
}

/// Derivative of a quasi-periodic function χ(x+T) = μ·χ(x) from uniform samples.
pub fn quasiperiodic_derivative(samples: &[C64], period: f64, mu: C64) -> Vec<C64> {
    let n = samples.len();
    let beta = mu.ln() / period;
    let g: Vec<C64> = (0..n)
        .map(|j| samples[j] * (-beta * (period * j as f64 / n as f64)).exp())
        .collect();
    let s = Series1D::new(g.clone(), period);
    let dg = s.derivative(1);
    (0..n)
        .map(|j| (dg[j] + beta * g[j]) * (beta * (period * j as f64 / n as f64)).exp())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn derivative_of_sine() {
        let t = 3.0;
        let n = 32;
        let s: Vec<f64> = (0..n).map(|j| (2.0 * PI * j as f64 / n as f64).sin()).collect();
        let d = Series1D::from_real(&s, t).derivative(1);
        for (j, v) in d.iter().enumerate() {
            let x = t * j as f64 / n as f64;
            assert!((v.re - 2.0 * PI / t * (2.0 * PI * x / t).cos()).abs() < 1e-12);
        }
    }

    #[test]
    fn eval_matches_samples_off_grid() {
        let t = 2.0;
        let f = |x: f64| (PI * x).cos() + 0.3 * (3.0 * PI * x).sin();
        let s: Vec<f64> = (0..16).map(|j| f(t * j as f64 / 16.0)).collect();
        let ser = Series1D::from_real(&s, t);
        assert!((ser.eval(0.123).re - f(0.123)).abs() < 1e-13);
    }

    #[test]
    fn quasi_periodic_exponential() {
        let t = 1.5;
        let k = c(0.3, 1.1);
        let n = 16;
        let s: Vec<C64> = (0..n).map(|j| (k * (t * j as f64 / n as f64)).exp()).collect();
        let d = quasiperiodic_derivative(&s, t, (k * t).exp());
        for j in 0..n {
            assert!((d[j] - k * s[j]).norm() < 1e-12);
        }
    }
}
