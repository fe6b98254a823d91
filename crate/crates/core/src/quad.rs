//! Quadrature building blocks: Gauss-Legendre rules, double-exponential
//! (tanh-sinh) integration for endpoint singularities, and piecewise-cubic
//! integration of uniformly sampled data.

use std::sync::OnceLock;

/// Gauss-Legendre nodes and weights on [-1, 1].
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(n, x);
        if d != 0.0 {
            dp = d;
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let pn = if n == 0 { 1.0 } else { p1 };
    let dpn = n as f64 * (x * pn - p0) / (x * x - 1.0);
    (pn, dpn)
}

/// Cached 10-point rule.
pub fn gl10() -> &'static (Vec<f64>, Vec<f64>) {
    static RULE: OnceLock<(Vec<f64>, Vec<f64>)> = OnceLock::new();
    RULE.get_or_init(|| gauss_legendre(10))
}

/// Fixed Gauss-Legendre integration of `f` over [a, b].
pub fn gauss<F: FnMut(f64) -> f64>(mut f: F, a: f64, b: f64, rule: &(Vec<f64>, Vec<f64>)) -> f64 {
    let c = 0.5 * (a + b);
    let d = 0.5 * (b - a);
    rule.0
        .iter()
        .zip(&rule.1)
        .map(|(&x, &w)| w * f(c + d * x))
        .sum::<f64>()
        * d
}

/// Tanh-sinh integration over (a, b). The integrand is evaluated strictly
/// inside the interval; `f` receives the abscissa together with its
/// distances to the left and right endpoints so that kernels singular at
/// an endpoint can be evaluated without cancellation.
pub fn tanh_sinh<F>(mut f: F, a: f64, b: f64, rel_tol: f64) -> f64
where
    F: FnMut(f64, f64, f64) -> f64,
{
    if a == b {
        return 0.0;
    }
    let half = 0.5 * (b - a);
    let pi2 = std::f64::consts::FRAC_PI_2;
    let t_max = 3.5_f64;
    let mut eval = |t: f64| -> f64 {
        let u = pi2 * t.sinh();
        let cu = u.cosh();
        // distance from the nearer endpoint in units of `half`
        let q = 1.0 / (u.abs().exp() * cu); // = 1 - tanh|u|
        if q * half.abs() < 1e-300 {
            return 0.0;
        }
        let w = pi2 * t.cosh() / (cu * cu);
        let (x, dl, dr) = if u >= 0.0 {
            let dr = half * q;
            (b - dr, 2.0 * half - dr, dr)
        } else {
            let dl = half * q;
            (a + dl, dl, 2.0 * half - dl)
        };
        let v = f(x, dl, dr);
        if v.is_finite() {
            half * w * v
        } else {
            0.0
        }
    };
    let mut h = 1.0;
    let mut sum = eval(0.0);
    let mut k = 1;
    while k as f64 * h <= t_max {
        sum += eval(k as f64 * h) + eval(-(k as f64) * h);
        k += 1;
    }
    let mut estimate = sum * h;
    for _level in 0..9 {
        h *= 0.5;
        let mut k = 1;
        let mut add = 0.0;
        while k as f64 * h <= t_max {
            add += eval(k as f64 * h) + eval(-(k as f64) * h);
            k += 2;
        }
        sum += add;
        let next = sum * h;
        let done = (next - estimate).abs() <= rel_tol * next.abs().max(1e-300);
        estimate = next;
        if done && h < 0.25 {
            break;
        }
    }
    estimate
}

/// Cardinal functions of four-point Lagrange interpolation on the cell
/// [0, 1] with nodes -1, 0, 1, 2.
#[inline]
pub fn cubic_cardinals(t: f64) -> [f64; 4] {
    [
        -t * (t - 1.0) * (t - 2.0) / 6.0,
        (t + 1.0) * (t - 1.0) * (t - 2.0) / 2.0,
        -(t + 1.0) * t * (t - 2.0) / 2.0,
        (t + 1.0) * t * (t - 1.0) / 6.0,
    ]
}

/// Integrals over [0, tau] of the cardinals in [`cubic_cardinals`].
#[inline]
pub fn cubic_cardinal_integrals(tau: f64) -> [f64; 4] {
    let t2 = tau * tau;
    let t3 = t2 * tau;
    let t4 = t3 * tau;
    [
        -(t4 / 4.0 - t3 + t2) / 6.0,
        (t4 / 4.0 - 2.0 * t3 / 3.0 - t2 / 2.0 + 2.0 * tau) / 2.0,
        -(t4 / 4.0 - t3 / 3.0 - t2) / 2.0,
        (t4 / 4.0 - t2 / 2.0) / 6.0,
    ]
}

/// How samples are continued past either end of a uniformly sampled range.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Ghost {
    /// Mirror about the end node (function even about the endpoint).
    Even,
    /// Anti-mirror about the end node (function odd about the endpoint).
    Odd,
    /// Identically zero outside.
    Zero,
    /// Cubic extrapolation from the last four samples.
    Extrapolate,
}

/// Piecewise-cubic integration of samples on the uniform nodes
/// `x0 + j h`, j = 0..n.
#[derive(Debug, Clone)]
pub struct CubicIntegrator {
    x0: f64,
    h: f64,
    ext: Vec<f64>,
    prefix: Vec<f64>,
}

impl CubicIntegrator {
    pub fn new(samples: &[f64], x0: f64, h: f64, left: Ghost, right: Ghost) -> Self {
        let n = samples.len();
        assert!(n >= 4, "need at least four samples");
        let mut ext = Vec::with_capacity(n + 2);
        let lg = match left {
            Ghost::Even => samples[1],
            Ghost::Odd => 2.0 * samples[0] - samples[1],
            Ghost::Zero => 0.0,
            Ghost::Extrapolate => 4.0 * samples[0] - 6.0 * samples[1] + 4.0 * samples[2] - samples[3],
        };
        let rg = match right {
            Ghost::Even => samples[n - 2],
            Ghost::Odd => 2.0 * samples[n - 1] - samples[n - 2],
            Ghost::Zero => 0.0,
            Ghost::Extrapolate => {
                4.0 * samples[n - 1] - 6.0 * samples[n - 2] + 4.0 * samples[n - 3] - samples[n - 4]
            }
        };
        ext.push(lg);
        ext.extend_from_slice(samples);
        ext.push(rg);
        let full = cubic_cardinal_integrals(1.0);
        let mut prefix = Vec::with_capacity(n);
        prefix.push(0.0);
        for j in 0..n - 1 {
            let cell: f64 = (0..4).map(|k| full[k] * ext[j + k]).sum();
            prefix.push(prefix[j] + h * cell);
        }
        Self { x0, h, ext, prefix }
    }

    fn cumulative(&self, x: f64) -> f64 {
        let n = self.prefix.len();
        let s = ((x - self.x0) / self.h).clamp(0.0, (n - 1) as f64);
        let j = (s.floor() as usize).min(n - 2);
        let tau = s - j as f64;
        let part = cubic_cardinal_integrals(tau);
        let cell: f64 = (0..4).map(|k| part[k] * self.ext[j + k]).sum();
        self.prefix[j] + self.h * cell
    }

    /// Integral over [a, b], both clamped to the sampled range.
    pub fn integral(&self, a: f64, b: f64) -> f64 {
        self.cumulative(b) - self.cumulative(a)
    }

    /// Integral over the whole sampled range.
    pub fn total(&self) -> f64 {
        *self.prefix.last().unwrap()
    }

    /// Value of the cubic interpolant at `x`.
    pub fn interpolate(&self, x: f64) -> f64 {
        let n = self.prefix.len();
        let s = ((x - self.x0) / self.h).clamp(0.0, (n - 1) as f64);
        let j = (s.floor() as usize).min(n - 2);
        let c = cubic_cardinals(s - j as f64);
        (0..4).map(|k| c[k] * self.ext[j + k]).sum()
    }
}

/// Fourth-order centered first derivative on a uniform grid with ghost
/// continuation at both ends (two ghost values per side).
pub fn fd4_derivative(samples: &[f64], h: f64, left: Ghost, right: Ghost) -> Vec<f64> {
    let n = samples.len();
    assert!(n >= 5);
    let get = |i: isize| -> f64 {
        if i >= 0 && (i as usize) < n {
            return samples[i as usize];
        }
        if i < 0 {
            let m = (-i) as usize;
            match left {
                Ghost::Even => samples[m],
                Ghost::Odd => 2.0 * samples[0] - samples[m],
                Ghost::Zero => 0.0,
                Ghost::Extrapolate => unreachable!(),
            }
        } else {
            let m = i as usize - (n - 1);
            match right {
                Ghost::Even => samples[n - 1 - m],
                Ghost::Odd => 2.0 * samples[n - 1] - samples[n - 1 - m],
                Ghost::Zero => 0.0,
                Ghost::Extrapolate => unreachable!(),
            }
        }
    };
    let one_sided = |i: usize, dir: f64| -> f64 {
        // fourth-order one-sided difference
        let s = |k: usize| -> f64 {
            if dir > 0.0 {
                samples[i + k]
            } else {
                samples[i - k]
            }
        };
        dir * (-25.0 * s(0) + 48.0 * s(1) - 36.0 * s(2) + 16.0 * s(3) - 3.0 * s(4)) / (12.0 * h)
    };
    (0..n)
        .map(|i| {
            let ii = i as isize;
            let near_left = i < 2 && left == Ghost::Extrapolate;
            let near_right = i + 2 >= n && right == Ghost::Extrapolate;
            if near_left {
                if i == 0 {
                    one_sided(0, 1.0)
                } else {
                    (-3.0 * samples[0] - 10.0 * samples[1] + 18.0 * samples[2] - 6.0 * samples[3]
                        + samples[4])
                        / (12.0 * h)
                }
            } else if near_right {
                if i == n - 1 {
                    one_sided(n - 1, -1.0)
                } else {
                    -(-3.0 * samples[n - 1] - 10.0 * samples[n - 2] + 18.0 * samples[n - 3]
                        - 6.0 * samples[n - 4]
                        + samples[n - 5])
                        / (12.0 * h)
                }
            } else {
                (get(ii - 2) - 8.0 * get(ii - 1) + 8.0 * get(ii + 1) - get(ii + 2)) / (12.0 * h)
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_legendre_integrates_polynomials_exactly() {
        let rule = gauss_legendre(6);
        let v = gauss(|x| x.powi(10) + 3.0 * x.powi(3), -1.0, 1.0, &rule);
        assert!((v - 2.0 / 11.0).abs() < 1e-14);
        let rule = gl10();
        let v = gauss(|x| x.exp(), 0.0, 2.0, rule);
        assert!((v - (2f64.exp() - 1.0)).abs() < 1e-13);
    }

    #[test]
    fn tanh_sinh_handles_log_endpoint() {
        // int_0^1 ln x dx = -1
        let v = tanh_sinh(|_, dl, _| dl.ln(), 0.0, 1.0, 1e-14);
        assert!((v + 1.0).abs() < 1e-13, "{v}");
        // int_0^1 x^{-1/2} dx = 2
        let v = tanh_sinh(|_, dl, _| 1.0 / dl.sqrt(), 0.0, 1.0, 1e-13);
        assert!((v - 2.0).abs() < 1e-10, "{v}");
        // right endpoint singularity, shifted interval
        let v = tanh_sinh(|_, _, dr| dr.ln(), 3.0, 5.0, 1e-14);
        assert!((v - 2.0 * (2f64.ln() - 1.0)).abs() < 1e-12, "{v}");
    }

    #[test]
    fn cubic_integrator_is_exact_for_cubics() {
        let h = 0.1;
        let xs: Vec<f64> = (0..21).map(|j| j as f64 * h).collect();
        let f = |x: f64| 1.0 + x - 2.0 * x * x + 0.5 * x * x * x;
        let fi = |x: f64| x + x * x / 2.0 - 2.0 * x.powi(3) / 3.0 + x.powi(4) / 8.0;
        let s: Vec<f64> = xs.iter().map(|&x| f(x)).collect();
        let ci = CubicIntegrator::new(&s, 0.0, h, Ghost::Extrapolate, Ghost::Extrapolate);
        assert!((ci.integral(0.37, 1.81) - (fi(1.81) - fi(0.37))).abs() < 1e-13);
        assert!((ci.interpolate(0.555) - f(0.555)).abs() < 1e-13);
    }

    #[test]
    fn fd4_is_fourth_order() {
        let err = |n: usize| {
            let h = 1.0 / (n - 1) as f64;
            let s: Vec<f64> = (0..n).map(|j| (j as f64 * h * 3.0).sin()).collect();
            let d = fd4_derivative(&s, h, Ghost::Extrapolate, Ghost::Extrapolate);
            d.iter()
                .enumerate()
                .map(|(j, v)| (v - 3.0 * (j as f64 * h * 3.0).cos()).abs())
                .fold(0.0, f64::max)
        };
        let ratio = err(41) / err(81);
        assert!(ratio > 12.0, "{ratio}");
    }
}
