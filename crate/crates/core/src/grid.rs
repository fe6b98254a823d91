//! Uniform grids, FFT-based spectral operators and the resolution monitor.

use std::cell::RefCell;
use std::f64::consts::PI;

use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

/// Uniform discretization of the circle [0, L).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PeriodicGrid {
    length: f64,
    n: usize,
}

/// Build a periodic grid with `n` nodes `x_j = j L / n`.
pub fn make_periodic_grid(length: f64, n: usize) -> Result<PeriodicGrid> {
    PeriodicGrid::new(length, n)
}

impl PeriodicGrid {
    pub fn new(length: f64, n: usize) -> Result<Self> {
        if !(length > 0.0) || !length.is_finite() {
            return Err(Error::InvalidGrid(format!("period must be positive, got {length}")));
        }
        if n < 8 || n % 2 != 0 {
            return Err(Error::InvalidGrid(format!("node count must be even and >= 8, got {n}")));
        }
        Ok(Self { length, n })
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn dx(&self) -> f64 {
        self.length / self.n as f64
    }

    /// `pi / L`.
    pub fn mu(&self) -> f64 {
        PI / self.length
    }

    pub fn node(&self, j: usize) -> f64 {
        j as f64 * self.length / self.n as f64
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..self.n).map(|j| self.node(j)).collect()
    }

    /// Index of the node `L/2`.
    pub fn half(&self) -> usize {
        self.n / 2
    }

    /// Angular wavenumber `2 pi k / L` of FFT bin `idx`.
    pub fn angular(&self, idx: usize) -> f64 {
        2.0 * PI * wavenumber(idx, self.n) as f64 / self.length
    }

    /// Smallest |k| counted as "top third" (and removed by dealiasing).
    pub fn tail_cutoff(&self) -> usize {
        self.n / 3
    }

    pub fn sample<F: Fn(f64) -> f64>(&self, f: F) -> Vec<f64> {
        (0..self.n).map(|j| f(self.node(j))).collect()
    }
}

/// Uniform discretization of a truncated log-coordinate line.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogGrid {
    xi_min: f64,
    xi_max: f64,
    m: usize,
}

impl LogGrid {
    pub fn new(xi_min: f64, xi_max: f64, m: usize) -> Result<Self> {
        if !(xi_min < xi_max) || !xi_min.is_finite() || !xi_max.is_finite() {
            return Err(Error::InvalidGrid(format!("need xi_min < xi_max, got [{xi_min}, {xi_max}]")));
        }
        if m < 16 {
            return Err(Error::InvalidGrid(format!("log grid needs at least 16 nodes, got {m}")));
        }
        Ok(Self { xi_min, xi_max, m })
    }

    pub fn xi_min(&self) -> f64 {
        self.xi_min
    }

    pub fn xi_max(&self) -> f64 {
        self.xi_max
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn h(&self) -> f64 {
        (self.xi_max - self.xi_min) / (self.m - 1) as f64
    }

    pub fn node(&self, j: usize) -> f64 {
        self.xi_min + j as f64 * self.h()
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..self.m).map(|j| self.node(j)).collect()
    }

    pub fn sample<F: Fn(f64) -> f64>(&self, f: F) -> Vec<f64> {
        (0..self.m).map(|j| f(self.node(j))).collect()
    }
}

/// Signed integer wavenumber of FFT bin `idx` for length `n`.
#[inline]
pub fn wavenumber(idx: usize, n: usize) -> i64 {
    if idx <= n / 2 {
        idx as i64
    } else {
        idx as i64 - n as i64
    }
}

/// Unnormalized forward DFT of real samples.
pub fn fft_real(f: &[f64]) -> Vec<Complex64> {
    let mut buf: Vec<Complex64> = f.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    let fft = PLANNER.with(|p| p.borrow_mut().plan_fft_forward(buf.len()));
    fft.process(&mut buf);
    buf
}

/// Inverse DFT (normalized by 1/n), returning the real part.
pub fn ifft_real(mut spec: Vec<Complex64>) -> Vec<f64> {
    let n = spec.len();
    let fft = PLANNER.with(|p| p.borrow_mut().plan_fft_inverse(n));
    fft.process(&mut spec);
    let s = 1.0 / n as f64;
    spec.into_iter().map(|c| c.re * s).collect()
}

/// Apply a Fourier multiplier given as a function of the signed wavenumber.
pub fn apply_multiplier<M: Fn(i64) -> Complex64>(f: &[f64], multiplier: M) -> Vec<f64> {
    let n = f.len();
    let mut spec = fft_real(f);
    for (idx, c) in spec.iter_mut().enumerate() {
        *c *= multiplier(wavenumber(idx, n));
    }
    ifft_real(spec)
}

/// d/dx by the Fourier multiplier `i k 2 pi / L`; the Nyquist mode is zeroed.
pub fn spectral_derivative(f: &[f64], grid: &PeriodicGrid) -> Result<Vec<f64>> {
    check_len(grid.n(), f.len())?;
    let n = grid.n() as i64;
    let scale = 2.0 * PI / grid.length();
    Ok(apply_multiplier(f, |k| {
        if k.abs() == n / 2 {
            Complex64::new(0.0, 0.0)
        } else {
            Complex64::new(0.0, k as f64 * scale)
        }
    }))
}

/// Spectral derivative of samples on an arbitrary uniform grid treated as
/// periodic with period `n h` (valid for compactly supported data).
pub fn periodic_derivative(f: &[f64], h: f64) -> Vec<f64> {
    let n = f.len() as i64;
    let scale = 2.0 * PI / (n as f64 * h);
    apply_multiplier(f, |k| {
        if 2 * k.abs() == n {
            Complex64::new(0.0, 0.0)
        } else {
            Complex64::new(0.0, k as f64 * scale)
        }
    })
}

/// Remove all modes with |k| >= n/3 (the "2/3 rule").
pub fn dealias(f: &[f64]) -> Vec<f64> {
    let n = f.len();
    let cut = (n / 3) as i64;
    apply_multiplier(f, |k| {
        if k.abs() >= cut {
            Complex64::new(0.0, 0.0)
        } else {
            Complex64::new(1.0, 0.0)
        }
    })
}

/// Spectral-tail summary of a sampled field.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectrumReport {
    /// Share of the non-mean squared-coefficient mass in |k| >= n/3.
    pub tail_fraction: f64,
    /// Largest |k| whose coefficient exceeds 1e-13 of the largest one.
    pub max_wavenumber_active: usize,
}

/// Resolution monitor on the periodic grid.
pub fn tail_fraction(f: &[f64], grid: &PeriodicGrid) -> Result<SpectrumReport> {
    check_len(grid.n(), f.len())?;
    Ok(spectrum_report(f))
}

/// Resolution monitor for any sampled array (periodic extension).
pub fn spectrum_report(f: &[f64]) -> SpectrumReport {
    let n = f.len();
    let spec = fft_real(f);
    let cut = (n / 3) as i64;
    let mut total = 0.0;
    let mut tail = 0.0;
    let mut peak: f64 = 0.0;
    for (idx, c) in spec.iter().enumerate() {
        let k = wavenumber(idx, n);
        if k == 0 {
            continue;
        }
        let p = c.norm_sqr();
        total += p;
        peak = peak.max(p);
        if k.abs() >= cut {
            tail += p;
        }
    }
    let mut active = 0usize;
    if peak > 0.0 {
        for (idx, c) in spec.iter().enumerate() {
            let k = wavenumber(idx, n).unsigned_abs() as usize;
            if k > 0 && c.norm_sqr() > 1e-26 * peak {
                active = active.max(k);
            }
        }
    }
    let tail_fraction = if total > 0.0 && tail > 0.0 {
        (tail / total).clamp(0.0, 1.0)
    } else {
        0.0
    };
    SpectrumReport { tail_fraction, max_wavenumber_active: active }
}

/// Trigonometric interpolant of periodic samples, evaluable anywhere.
#[derive(Debug, Clone)]
pub struct TrigInterpolant {
    coeffs: Vec<Complex64>,
    length: f64,
}

impl TrigInterpolant {
    pub fn new(f: &[f64], grid: &PeriodicGrid) -> Result<Self> {
        check_len(grid.n(), f.len())?;
        let n = f.len();
        let s = 1.0 / n as f64;
        let coeffs = fft_real(f).into_iter().map(|c| c * s).collect();
        Ok(Self { coeffs, length: grid.length() })
    }

    pub fn eval(&self, x: f64) -> f64 {
        let n = self.coeffs.len();
        let theta = 2.0 * PI * x / self.length;
        let step = Complex64::from_polar(1.0, theta);
        let mut acc = self.coeffs[0].re;
        let mut e = Complex64::new(1.0, 0.0);
        for k in 1..n / 2 {
            e *= step;
            if k % 64 == 0 {
                e = Complex64::from_polar(1.0, theta * k as f64);
            }
            acc += 2.0 * (self.coeffs[k] * e).re;
        }
        acc + self.coeffs[n / 2].re * (theta * (n / 2) as f64).cos()
    }

    pub fn derivative(&self) -> Self {
        let n = self.coeffs.len();
        let scale = 2.0 * PI / self.length;
        let coeffs = self
            .coeffs
            .iter()
            .enumerate()
            .map(|(idx, c)| {
                let k = wavenumber(idx, n);
                if 2 * k.unsigned_abs() as usize == n {
                    Complex64::new(0.0, 0.0)
                } else {
                    c * Complex64::new(0.0, k as f64 * scale)
                }
            })
            .collect();
        Self { coeffs, length: self.length }
    }
}

/// Resample periodic data onto a grid with a different node count by
/// trigonometric interpolation (zero padding or truncation in Fourier space).
pub fn regrid(f: &[f64], from: &PeriodicGrid, to: &PeriodicGrid) -> Result<Vec<f64>> {
    check_len(from.n(), f.len())?;
    if (from.length() - to.length()).abs() > 1e-12 * from.length() {
        return Err(Error::InvalidGrid("regrid requires equal periods".into()));
    }
    let (n0, n1) = (from.n(), to.n());
    let spec = fft_real(f);
    let mut out = vec![Complex64::new(0.0, 0.0); n1];
    let kmax = (n0.min(n1) / 2) as i64;
    for (idx, c) in spec.iter().enumerate() {
        let k = wavenumber(idx, n0);
        if k.abs() < kmax {
            let j = if k >= 0 { k as usize } else { (n1 as i64 + k) as usize };
            out[j] = c * (n1 as f64 / n0 as f64);
        } else if k.abs() == kmax {
            // split the shared Nyquist content symmetrically
            let j_pos = kmax as usize;
            let j_neg = n1 - kmax as usize;
            let v = c * (n1 as f64 / n0 as f64);
            if n1 > n0 {
                out[j_pos] += 0.5 * v;
                out[j_neg] += 0.5 * v;
            } else {
                out[j_pos] += v;
            }
        }
    }
    Ok(ifft_real(out))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn grid_construction() {
        let g = make_periodic_grid(2.0 * PI, 8).unwrap();
        let nodes = g.nodes();
        for (j, x) in nodes.iter().enumerate() {
            assert!((x - j as f64 * PI / 4.0).abs() < 1e-15);
        }
        assert!((g.mu() - 0.5).abs() < 1e-15);
        assert!(matches!(make_periodic_grid(2.0 * PI, 7), Err(Error::InvalidGrid(_))));
        assert!(matches!(make_periodic_grid(0.0, 8), Err(Error::InvalidGrid(_))));
        assert!(matches!(make_periodic_grid(1.0, 6), Err(Error::InvalidGrid(_))));
        let g = make_periodic_grid(1.0, 256).unwrap();
        assert!((g.dx() - 1.0 / 256.0).abs() < 1e-18);
        assert!((g.mu() - PI).abs() < 1e-15);
        assert!((g.mu() * g.length() - PI).abs() < 1e-15);
    }

    #[test]
    fn log_grid_construction() {
        let g = LogGrid::new(-2.0, 2.0, 17).unwrap();
        assert!((g.h() - 0.25).abs() < 1e-15);
        assert!(LogGrid::new(1.0, 1.0, 32).is_err());
        assert!(LogGrid::new(0.0, 1.0, 8).is_err());
    }

    #[test]
    fn derivative_of_resolved_mode() {
        let g = make_periodic_grid(2.0 * PI, 64).unwrap();
        let mu = g.mu();
        let f = g.sample(|x| (2.0 * mu * x).sin());
        let d = spectral_derivative(&f, &g).unwrap();
        for (j, v) in d.iter().enumerate() {
            assert!((v - g.node(j).cos()).abs() < 1e-12);
        }
        let c = vec![3.5; 64];
        let d = spectral_derivative(&c, &g).unwrap();
        assert!(d.iter().all(|v| v.abs() < 1e-14));
        assert!(matches!(spectral_derivative(&c[..10], &g), Err(Error::Shape { .. })));
    }

    #[test]
    fn derivative_matches_fine_finite_differences() {
        // oracle: fourth-order centered differences at N = 8192
        let l = 3.0;
        let g = make_periodic_grid(l, 128).unwrap();
        let f = |x: f64| (2.0 * PI * x / l).sin().exp();
        let d = spectral_derivative(&g.sample(f), &g).unwrap();
        let fine = 8192usize;
        let h = l / fine as f64;
        let stride = fine / 128;
        let mut max_rel: f64 = 0.0;
        let scale = d.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for j in 0..128 {
            let x = (j * stride) as f64 * h;
            let fd = (f(x - 2.0 * h) - 8.0 * f(x - h) + 8.0 * f(x + h) - f(x + 2.0 * h)) / (12.0 * h);
            max_rel = max_rel.max((d[j] - fd).abs() / scale);
        }
        assert!(max_rel < 1e-6, "{max_rel}");
    }

    #[test]
    fn every_resolved_mode_is_scaled_exactly() {
        let l = 5.0;
        let g = make_periodic_grid(l, 32).unwrap();
        for k in 1..16 {
            let w = 2.0 * PI * k as f64 / l;
            let f = g.sample(|x| (w * x).cos());
            let d = spectral_derivative(&f, &g).unwrap();
            for (j, v) in d.iter().enumerate() {
                assert!((v + w * (w * g.node(j)).sin()).abs() < 1e-12 * w.max(1.0));
            }
        }
    }

    #[test]
    fn tail_fraction_examples() {
        let l = 2.0;
        let g = make_periodic_grid(l, 64).unwrap();
        let r = tail_fraction(&g.sample(|x| (2.0 * PI * x / l).sin()), &g).unwrap();
        assert!(r.tail_fraction < 1e-28);
        assert_eq!(r.max_wavenumber_active, 1);
        let r = tail_fraction(&g.sample(|x| (2.0 * PI * 21.0 * x / l).cos()), &g).unwrap();
        assert!((r.tail_fraction - 1.0).abs() < 1e-14);
        assert_eq!(r.max_wavenumber_active, 21);
    }

    #[test]
    fn tail_fraction_matches_direct_dft() {
        let l = 1.0;
        let n = 64;
        let g = make_periodic_grid(l, n).unwrap();
        let f = g.sample(|x| (-50.0 * (x - l / 2.0).powi(2)).exp());
        // oracle: O(n^2) direct DFT summation
        let mut total = 0.0;
        let mut tail = 0.0;
        for k in -(n as i64) / 2 + 1..=(n as i64) / 2 {
            if k == 0 {
                continue;
            }
            let (mut re, mut im) = (0.0, 0.0);
            for (j, v) in f.iter().enumerate() {
                let a = -2.0 * PI * k as f64 * j as f64 / n as f64;
                re += v * a.cos();
                im += v * a.sin();
            }
            let p = re * re + im * im;
            total += p;
            if k.unsigned_abs() as usize >= n / 3 {
                tail += p;
            }
        }
        let r = tail_fraction(&f, &g).unwrap();
        assert!((r.tail_fraction - tail / total).abs() < 1e-12);
    }

    #[test]
    fn trig_interpolant_and_regrid() {
        let l = 2.0 * PI;
        let g = make_periodic_grid(l, 32).unwrap();
        let f = |x: f64| (x.sin()).exp();
        let ti = TrigInterpolant::new(&g.sample(f), &g).unwrap();
        assert!((ti.eval(0.123) - f(0.123)).abs() < 1e-9);
        let d = ti.derivative();
        assert!((d.eval(1.7) - 1.7f64.cos() * f(1.7)).abs() < 1e-8);
        let fine = make_periodic_grid(l, 64).unwrap();
        let up = regrid(&g.sample(f), &g, &fine).unwrap();
        for (j, v) in up.iter().enumerate() {
            assert!((v - f(fine.node(j))).abs() < 1e-9);
        }
        let back = regrid(&up, &fine, &g).unwrap();
        for (a, b) in back.iter().zip(g.sample(f)) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    proptest! {
        #[test]
        fn derivative_is_linear(a in -3.0f64..3.0, b in -3.0f64..3.0, seed in 0u64..1000) {
            let g = make_periodic_grid(2.0, 32).unwrap();
            let f: Vec<f64> = (0..32).map(|j| ((j as u64 * 7919 + seed) % 101) as f64 / 50.0 - 1.0).collect();
            let h: Vec<f64> = (0..32).map(|j| ((j as u64 * 104729 + 3 * seed) % 97) as f64 / 48.0 - 1.0).collect();
            let comb: Vec<f64> = f.iter().zip(&h).map(|(x, y)| a * x + b * y).collect();
            let lhs = spectral_derivative(&comb, &g).unwrap();
            let df = spectral_derivative(&f, &g).unwrap();
            let dh = spectral_derivative(&h, &g).unwrap();
            for i in 0..32 {
                prop_assert!((lhs[i] - (a * df[i] + b * dh[i])).abs() < 1e-10);
            }
        }

        #[test]
        fn tail_fraction_ignores_constants(c in -10.0f64..10.0) {
            let g = make_periodic_grid(1.0, 48).unwrap();
            let f = g.sample(|x| (2.0 * PI * x).sin() + 0.01 * (2.0 * PI * 20.0 * x).cos());
            let shifted: Vec<f64> = f.iter().map(|v| v + c).collect();
            let a = tail_fraction(&f, &g).unwrap().tail_fraction;
            let b = tail_fraction(&shifted, &g).unwrap().tail_fraction;
            prop_assert!((a - b).abs() < 1e-12);
        }
    }
}
