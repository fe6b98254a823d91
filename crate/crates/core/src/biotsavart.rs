//! Velocity reconstruction for every Biot-Savart law in the model family.
//!
//! Each periodic law has a Fourier-multiplier fast path and a direct
//! O(N^2) quadrature that serves as an independent oracle.

use std::f64::consts::{LN_2, PI};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::grid::{apply_multiplier, fft_real, ifft_real, periodic_derivative, LogGrid, PeriodicGrid};
use crate::kernels::{log_kernel, periodic_k};
use crate::quad::{cubic_cardinals, gauss, gl10, tanh_sinh, CubicIntegrator, Ghost};

/// How a velocity is reconstructed from vorticity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum BiotSavartMethod {
    #[default]
    Spectral,
    Direct,
    Mollified { a_layer: f64 },
}

/// Velocity and its derivative sampled on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct VelocityField {
    pub u: Vec<f64>,
    pub ux: Vec<f64>,
    pub method: BiotSavartMethod,
}

/// Periodic Hilbert transform `H omega = (1/L) PV int omega(y) cot(mu (x - y)) dy`.
pub fn hilbert_ux(omega: &[f64], grid: &PeriodicGrid, method: BiotSavartMethod) -> Result<Vec<f64>> {
    check_len(grid.n(), omega.len())?;
    match method {
        BiotSavartMethod::Spectral => Ok(hilbert_spectral(omega)),
        BiotSavartMethod::Direct => Ok(hilbert_direct(omega, grid)),
        BiotSavartMethod::Mollified { a_layer } => Ok(velocity_mollified_periodic(omega, grid, a_layer)?.ux),
    }
}

fn hilbert_spectral(omega: &[f64]) -> Vec<f64> {
    let n = omega.len() as i64;
    apply_multiplier(omega, |k| {
        if k == 0 || 2 * k.abs() == n {
            Complex64::new(0.0, 0.0)
        } else {
            Complex64::new(0.0, -(k.signum() as f64))
        }
    })
}

/// PV quadrature on the nodes of opposite parity to the target node. The
/// singular node drops out and the rule is exact for resolved modes.
fn hilbert_direct(omega: &[f64], grid: &PeriodicGrid) -> Vec<f64> {
    let n = grid.n();
    let mu = grid.mu();
    let h = grid.dx();
    // cot(mu (x_i - x_j)) depends only on (i - j) mod n
    let cot: Vec<f64> = (0..n)
        .map(|d| if d % 2 == 1 { 1.0 / (mu * d as f64 * h).tan() } else { 0.0 })
        .collect();
    let w = 2.0 * h / grid.length();
    (0..n)
        .map(|i| {
            let mut acc = 0.0;
            let mut j = (i + 1) % 2;
            while j < n {
                acc += omega[j] * cot[(i + n - j) % n];
                j += 2;
            }
            w * acc
        })
        .collect()
}

/// `u = (1/pi) int_0^L omega(y) log|sin(mu (x - y))| dy` together with `u_x`.
pub fn velocity_periodic(omega: &[f64], grid: &PeriodicGrid, method: BiotSavartMethod) -> Result<VelocityField> {
    check_len(grid.n(), omega.len())?;
    match method {
        BiotSavartMethod::Spectral => {
            let l = grid.length();
            let u = apply_multiplier(omega, |k| {
                if k == 0 {
                    Complex64::new(-l / PI * LN_2, 0.0)
                } else {
                    Complex64::new(-l / (2.0 * PI * k.abs() as f64), 0.0)
                }
            });
            Ok(VelocityField { u, ux: hilbert_spectral(omega), method })
        }
        BiotSavartMethod::Direct => {
            let n = grid.n();
            let mu = grid.mu();
            let h = grid.dx();
            let logs: Vec<f64> = (0..n)
                .map(|d| if d == 0 { 0.0 } else { (mu * d as f64 * h).sin().abs().ln() })
                .collect();
            // diagonal weight of the corrected punctured trapezoid rule for a
            // logarithmic singularity; exact for constants
            let cell = h * (mu * h / (2.0 * PI)).ln();
            let u = (0..n)
                .map(|i| {
                    let mut acc = 0.0;
                    for j in 0..n {
                        acc += omega[j] * logs[(i + n - j) % n];
                    }
                    (h * acc + omega[i] * cell) / PI
                })
                .collect();
            Ok(VelocityField { u, ux: hilbert_direct(omega, grid), method })
        }
        BiotSavartMethod::Mollified { a_layer } => velocity_mollified_periodic(omega, grid, a_layer),
    }
}

/// The mollified kernel `(1/pi) log(|x| / sqrt(x^2 + a^2))`.
pub fn mollified_kernel(x: f64, a_layer: f64) -> f64 {
    let r = a_layer / x;
    -(0.5 / PI) * (r * r).ln_1p()
}

/// Mollified velocity on the circle. The periodized kernel has Fourier
/// coefficients `-(1 - exp(-a |xi|)) / |xi|` at `xi = 2 pi k / L`
/// (value `-a` at `k = 0`).
pub fn velocity_mollified_periodic(omega: &[f64], grid: &PeriodicGrid, a_layer: f64) -> Result<VelocityField> {
    check_len(grid.n(), omega.len())?;
    check_layer(a_layer)?;
    let l = grid.length();
    let n = grid.n() as i64;
    let symbol = move |k: i64| -> f64 {
        if k == 0 {
            -a_layer
        } else {
            let xi = 2.0 * PI * k.abs() as f64 / l;
            -(-(-a_layer * xi).exp_m1()) / xi
        }
    };
    let u = apply_multiplier(omega, |k| Complex64::new(symbol(k), 0.0));
    let ux = apply_multiplier(omega, |k| {
        if 2 * k.abs() == n {
            Complex64::new(0.0, 0.0)
        } else {
            Complex64::new(0.0, symbol(k) * 2.0 * PI * k as f64 / l)
        }
    });
    Ok(VelocityField { u, ux, method: BiotSavartMethod::Mollified { a_layer } })
}

/// Mollified velocity for compactly supported samples on a uniform line grid
/// with spacing `h`.
pub fn velocity_mollified_line(omega: &[f64], h: f64, a_layer: f64) -> Result<VelocityField> {
    check_layer(a_layer)?;
    if omega.len() < 16 {
        return Err(Error::InvalidGrid("line data needs at least 16 samples".into()));
    }
    check_compact(omega, "omega")?;
    let conv = LineConvolution::new(|x| mollified_kernel(x, a_layer), h, omega.len(), true);
    let u = conv.apply(omega)?;
    let ux = conv.apply(&periodic_derivative(omega, h))?;
    Ok(VelocityField { u, ux, method: BiotSavartMethod::Mollified { a_layer } })
}

fn check_layer(a_layer: f64) -> Result<()> {
    if !(a_layer > 0.0) || !a_layer.is_finite() {
        return Err(Error::Parameter(format!("a_layer must be positive, got {a_layer}")));
    }
    Ok(())
}

/// Precomputed `u cot(mu x)` operator on the half-period nodes
/// `x_i = i L / N`, i = 0..=N/2, built from the kernel `K(x, y)`.
#[derive(Debug, Clone)]
pub struct HalflineOperator {
    grid: PeriodicGrid,
    rows: Vec<Vec<f64>>,
}

impl HalflineOperator {
    pub fn new(grid: &PeriodicGrid) -> Self {
        let half = grid.half();
        let rows = (0..=half)
            .map(|i| {
                if i == half {
                    vec![0.0; half + 1]
                } else {
                    halfline_row(grid, grid.node(i))
                }
            })
            .collect();
        Self { grid: *grid, rows }
    }

    pub fn grid(&self) -> &PeriodicGrid {
        &self.grid
    }

    /// `u cot(mu x)` at the half-period nodes for full-period samples of
    /// an odd `omega`.
    pub fn apply(&self, omega: &[f64]) -> Result<Vec<f64>> {
        let f = cot_weighted(omega, &self.grid)?;
        Ok(self
            .rows
            .iter()
            .map(|row| -row.iter().zip(&f).map(|(w, v)| w * v).sum::<f64>() / PI)
            .collect())
    }
}

/// `omega(y) cot(mu y)` on nodes 0..=N/2 with the limits at both ends.
fn cot_weighted(omega: &[f64], grid: &PeriodicGrid) -> Result<Vec<f64>> {
    check_len(grid.n(), omega.len())?;
    let half = grid.half();
    let mu = grid.mu();
    let d0 = omega_slope_at_zero(omega, grid);
    Ok((0..=half)
        .map(|j| {
            if j == 0 {
                d0 / mu
            } else if j == half {
                0.0
            } else {
                omega[j] / (mu * grid.node(j)).tan()
            }
        })
        .collect())
}

fn omega_slope_at_zero(omega: &[f64], grid: &PeriodicGrid) -> f64 {
    let n = grid.n() as f64;
    let spec = fft_real(omega);
    let scale = 2.0 * PI / grid.length() / n;
    let nn = spec.len();
    let mut acc = 0.0;
    for (idx, c) in spec.iter().enumerate() {
        let k = crate::grid::wavenumber(idx, nn);
        if 2 * k.unsigned_abs() as usize != nn {
            acc += -c.im * k as f64 * scale;
        }
    }
    acc
}

/// Weights `w_j` with `int_0^{L/2} K(x, y) f(y) dy ~ sum_j w_j f_j`, where
/// `f` is interpolated piecewise-cubically on nodes 0..=N/2 and continued
/// evenly past both ends.
fn halfline_row(grid: &PeriodicGrid, x: f64) -> Vec<f64> {
    let half = grid.half();
    let h = grid.dx();
    let mu = grid.mu();
    let mut w = vec![0.0; half + 1];
    let fold = |j: isize| -> usize {
        if j < 0 {
            (-j) as usize
        } else if j as usize > half {
            2 * half - j as usize
        } else {
            j as usize
        }
    };
    let kernel = |y: f64| periodic_k(x, y, mu);
    for c in 0..half {
        let y0 = grid.node(c);
        let y1 = grid.node(c + 1);
        let mut cell = [0.0; 4];
        if x >= y0 && x <= y1 {
            for (k, slot) in cell.iter_mut().enumerate() {
                let left = if x > y0 {
                    tanh_sinh(
                        |y, _dl, _dr| kernel(y) * cubic_cardinals((y - y0) / h)[k],
                        y0,
                        x,
                        1e-14,
                    )
                } else {
                    0.0
                };
                let right = if x < y1 {
                    tanh_sinh(
                        |y, _dl, _dr| kernel(y) * cubic_cardinals((y - y0) / h)[k],
                        x,
                        y1,
                        1e-14,
                    )
                } else {
                    0.0
                };
                *slot = left + right;
            }
        } else {
            let (nodes, weights) = gl10();
            let mid = 0.5 * (y0 + y1);
            for (t, wt) in nodes.iter().zip(weights) {
                let y = mid + 0.5 * h * t;
                let kv = kernel(y) * 0.5 * h * wt;
                let card = cubic_cardinals(0.5 + 0.5 * t);
                for k in 0..4 {
                    cell[k] += kv * card[k];
                }
            }
        }
        for (k, v) in cell.iter().enumerate() {
            w[fold(c as isize - 1 + k as isize)] += v;
        }
    }
    w
}

/// `u(x) cot(mu x)` at one point `x` in (0, L/2) from full-period samples
/// of an odd `omega`.
pub fn velocity_halfline_representation(omega: &[f64], grid: &PeriodicGrid, x: f64) -> Result<f64> {
    let half_len = 0.5 * grid.length();
    if !(x > 0.0 && x < half_len) {
        return Err(Error::Domain(format!("x = {x} outside (0, {half_len})")));
    }
    let f = cot_weighted(omega, grid)?;
    let row = halfline_row(grid, x);
    Ok(-row.iter().zip(&f).map(|(w, v)| w * v).sum::<f64>() / PI)
}

/// CKY law `u(x) = -x int_x^{X} omega(y) / y dy` on an increasing grid.
pub fn velocity_cky(omega: &[f64], xgrid: &[f64]) -> Result<VelocityField> {
    check_len(xgrid.len(), omega.len())?;
    let n = xgrid.len();
    if n < 2 {
        return Err(Error::InvalidGrid("need at least two nodes".into()));
    }
    if xgrid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::InvalidGrid("x nodes must be strictly increasing".into()));
    }
    if xgrid[0] < 0.0 {
        return Err(Error::Domain("x nodes must be nonnegative".into()));
    }
    if xgrid[0] == 0.0 && omega[0] != 0.0 {
        return Err(Error::QuadratureSingular("omega(0) != 0 makes omega/y non-integrable at 0".into()));
    }
    let ratio: Vec<f64> = (0..n)
        .map(|i| if xgrid[i] == 0.0 { 0.0 } else { omega[i] / xgrid[i] })
        .collect();
    let mut tail = vec![0.0; n];
    for i in (0..n - 1).rev() {
        tail[i] = tail[i + 1] + 0.5 * (xgrid[i + 1] - xgrid[i]) * (ratio[i] + ratio[i + 1]);
    }
    let u: Vec<f64> = (0..n).map(|i| -xgrid[i] * tail[i]).collect();
    let ux = (0..n).map(|i| -tail[i] + omega[i]).collect();
    Ok(VelocityField { u, ux, method: BiotSavartMethod::Direct })
}

/// Kernel of the log-coordinate velocity law.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LogKernel {
    Hl,
    Cky,
}

/// Linear convolution `(k * f)(xi_i)` of compactly supported samples on a
/// uniform line grid. Weights come from exact integration of the kernel
/// against the piecewise-cubic interpolant of `f`; cells touching a kernel
/// singularity at 0 use tanh-sinh quadrature.
#[derive(Debug, Clone)]
pub struct LineConvolution {
    m: usize,
    kernel_hat: Vec<Complex64>,
}

impl LineConvolution {
    pub fn new<K: Fn(f64) -> f64>(kernel: K, h: f64, m: usize, singular_at_zero: bool) -> Self {
        let reach = m as isize - 1;
        let mut w = Vec::with_capacity(2 * m - 1);
        for off in -reach..=reach {
            let mut acc = 0.0;
            for c in -2isize..=1 {
                let idx = (1 - c) as usize;
                let (a, b) = (c as f64, (c + 1) as f64);
                let cell = if singular_at_zero && (c == off || c + 1 == off) {
                    let left_singular = c == off;
                    tanh_sinh(
                        |t, dl, dr| {
                            let arg = if left_singular { -h * dl } else { h * dr };
                            kernel(arg) * cubic_cardinals(t - a)[idx]
                        },
                        a,
                        b,
                        1e-14,
                    )
                } else {
                    gauss(|t| kernel(h * (off as f64 - t)) * cubic_cardinals(t - a)[idx], a, b, gl10())
                };
                acc += h * cell;
            }
            w.push(acc);
        }
        let len = (3 * m).next_power_of_two();
        let mut padded = vec![0.0; len];
        padded[..w.len()].copy_from_slice(&w);
        Self { m, kernel_hat: fft_real(&padded) }
    }

    pub fn len(&self) -> usize {
        self.m
    }

    pub fn is_empty(&self) -> bool {
        self.m == 0
    }

    pub fn apply(&self, f: &[f64]) -> Result<Vec<f64>> {
        check_len(self.m, f.len())?;
        let len = self.kernel_hat.len();
        let mut padded = vec![0.0; len];
        padded[..self.m].copy_from_slice(f);
        let spec: Vec<Complex64> = fft_real(&padded).iter().zip(&self.kernel_hat).map(|(a, b)| a * b).collect();
        let full = ifft_real(spec);
        Ok(full[self.m - 1..2 * self.m - 1].to_vec())
    }
}

/// Reject data that is not negligible at the two outermost nodes of either end.
pub fn check_compact(f: &[f64], name: &str) -> Result<()> {
    let peak = f.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if !peak.is_finite() {
        return Err(Error::NanDetected { t: f64::NAN });
    }
    let n = f.len();
    let edge = [f[0], f[1], f[n - 2], f[n - 1]].iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if edge > 1e-10 * peak {
        return Err(Error::Truncation(format!("{name} does not vanish at the ends of the grid")));
    }
    Ok(())
}

/// Log-coordinate velocity `U` for a compactly supported `Omega`.
#[derive(Debug, Clone)]
pub struct LogVelocity {
    grid: LogGrid,
    kernel: LogKernel,
    conv: Option<LineConvolution>,
}

impl LogVelocity {
    pub fn new(grid: &LogGrid, kernel: LogKernel) -> Self {
        let conv = match kernel {
            LogKernel::Hl => Some(LineConvolution::new(log_kernel, grid.h(), grid.m(), true)),
            LogKernel::Cky => None,
        };
        Self { grid: *grid, kernel, conv }
    }

    pub fn grid(&self) -> &LogGrid {
        &self.grid
    }

    pub fn kernel(&self) -> LogKernel {
        self.kernel
    }

    /// `U` at the grid nodes.
    pub fn velocity(&self, omega: &[f64]) -> Result<Vec<f64>> {
        check_len(self.grid.m(), omega.len())?;
        check_compact(omega, "Omega")?;
        Ok(self.velocity_unchecked(omega))
    }

    fn velocity_unchecked(&self, omega: &[f64]) -> Vec<f64> {
        match &self.conv {
            Some(c) => c.apply(omega).expect("length checked"),
            None => {
                let h = self.grid.h();
                let x0 = self.grid.xi_min();
                let integ = CubicIntegrator::new(omega, x0, h, Ghost::Zero, Ghost::Zero);
                (0..self.grid.m())
                    .map(|i| 2.0 / PI * integ.integral(x0, self.grid.node(i)))
                    .collect()
            }
        }
    }

    /// `U_xi` at the grid nodes (the convolution applied to `Omega_xi`).
    pub fn velocity_derivative(&self, omega: &[f64]) -> Result<Vec<f64>> {
        check_len(self.grid.m(), omega.len())?;
        check_compact(omega, "Omega")?;
        Ok(match &self.conv {
            Some(c) => c.apply(&periodic_derivative(omega, self.grid.h()))?,
            None => omega.iter().map(|v| 2.0 / PI * v).collect(),
        })
    }
}

/// `U = K * Omega` (HL) or `(2/pi) int_{-inf}^xi Omega` (CKY).
pub fn velocity_log_convolution(omega: &[f64], grid: &LogGrid, kernel: LogKernel) -> Result<Vec<f64>> {
    LogVelocity::new(grid, kernel).velocity(omega)
}
