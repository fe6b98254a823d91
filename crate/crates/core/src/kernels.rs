//! Closed-form Biot-Savart kernels and numerical certification of their
//! sign and monotonicity properties.
//!
//! Whole-line kernels live in two coordinate systems: the multiplicative
//! kernel `M(s) = (1/s) log|(s+1)/(s-1)|` on `s > 0`, and its log-coordinate
//! form `K(xi) = M(exp(-xi)) / pi`. The periodic kernel is
//! `K(x, y) = s log|(s+1)/(s-1)|` with `s = tan(mu y) / tan(mu x)`.

use std::f64::consts::{FRAC_1_PI, PI};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Width of the band `|s - 1| < SINGULAR_BAND` excluded from all sampling.
pub const SINGULAR_BAND: f64 = 1e-8;

/// `log|(s+1)/(s-1)|` for `s >= 0`, evaluated as `2 atanh(min(s, 1/s))`.
#[inline]
pub fn log_ratio(s: f64) -> f64 {
    if s <= 1.0 {
        2.0 * s.atanh()
    } else {
        2.0 * (1.0 / s).atanh()
    }
}

/// `atanh(q) / q`, finite at `q = 0`.
#[inline]
fn atanh_over(q: f64) -> f64 {
    if q < 1e-4 {
        let q2 = q * q;
        1.0 + q2 / 3.0 + q2 * q2 / 5.0
    } else {
        q.atanh() / q
    }
}

/// Values of `M` and its symmetric / antisymmetric parts at one point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MValues {
    pub m: f64,
    pub m_sym: f64,
    pub m_a: f64,
}

/// `M(s)`, `M_sym(s)` and `M_a(s)`.
pub fn eval_m(s: f64) -> Result<MValues> {
    if !(s > 0.0) || !s.is_finite() {
        return Err(Error::Domain(format!("M(s) needs s > 0, got {s}")));
    }
    if s == 1.0 {
        return Err(Error::Singular("M has a logarithmic singularity at s = 1".into()));
    }
    Ok(m_values_unchecked(s))
}

fn m_values_unchecked(s: f64) -> MValues {
    let (q, small) = if s < 1.0 { (s, true) } else { (1.0 / s, false) };
    let ratio = atanh_over(q); // atanh(q)/q
    // log-ratio = 2 q ratio
    let (m, m_sym, m_a) = if small {
        // 1/s * 2 s r = 2 r ; s * 2 s r = 2 s^2 r
        let m = 2.0 * ratio;
        let m_sym = ratio * (1.0 + s * s);
        let m_a = ratio * (1.0 - s * s);
        (m, m_sym, m_a)
    } else {
        // q = 1/s : (1/s) 2 q r = 2 q^2 r ; s * 2 q r = 2 r
        let m = 2.0 * q * q * ratio;
        let m_sym = ratio * (1.0 + q * q);
        let m_a = -ratio * (1.0 - q * q);
        (m, m_sym, m_a)
    };
    MValues { m, m_sym, m_a }
}

/// Analytic derivative `M'(s)`.
pub fn m_derivative(s: f64) -> f64 {
    if s < 1.0 {
        if s < 0.5 {
            // 2 sum_{n>=1} 2n/(2n+1) s^{2n-1}
            let s2 = s * s;
            let mut p = s;
            let mut acc = 0.0;
            for n in 1..80 {
                let nf = n as f64;
                let term = p * 2.0 * nf / (2.0 * nf + 1.0);
                acc += term;
                if term <= 1e-18 * acc {
                    break;
                }
                p *= s2;
            }
            return 2.0 * acc;
        }
        2.0 * (s / (1.0 - s * s) - s.atanh()) / (s * s)
    } else {
        let q = 1.0 / s;
        -2.0 * q * q * (q.atanh() + q / (1.0 - q * q))
    }
}

/// `q - (1 + q^2) atanh(q)` for `0 <= q < 1`, summed termwise for small `q`.
fn anti_slope_core(q: f64) -> f64 {
    if q < 0.5 {
        // -sum_{n>=1} (1/(2n+1) + 1/(2n-1)) q^{2n+1}
        let q2 = q * q;
        let mut p = q * q2;
        let mut acc = 0.0;
        for n in 1..80 {
            let nf = n as f64;
            let term = p * (1.0 / (2.0 * nf + 1.0) + 1.0 / (2.0 * nf - 1.0));
            acc += term;
            if term <= 1e-18 * acc {
                break;
            }
            p *= q2;
        }
        -acc
    } else {
        q - (1.0 + q * q) * q.atanh()
    }
}

/// Analytic derivative `M_a'(s)` with `M_a = (1/s - s) atanh(min(s,1/s))`.
pub fn m_a_derivative(s: f64) -> f64 {
    if s < 1.0 {
        anti_slope_core(s) / (s * s)
    } else {
        anti_slope_core(1.0 / s)
    }
}

/// Log-coordinate HL kernel `K(xi) = M(exp(-xi)) / pi`; infinite at 0.
#[inline]
pub fn log_kernel(xi: f64) -> f64 {
    if xi == 0.0 {
        return f64::INFINITY;
    }
    let q = (-xi.abs()).exp();
    if xi > 0.0 {
        2.0 * FRAC_1_PI * atanh_over(q)
    } else {
        2.0 * FRAC_1_PI * q * q.atanh()
    }
}

/// Symmetric part `(K(xi) + K(-xi)) / 2`.
pub fn log_kernel_sym(xi: f64) -> f64 {
    if xi == 0.0 {
        return f64::INFINITY;
    }
    let q = (-xi.abs()).exp();
    FRAC_1_PI * (1.0 + q * q) * atanh_over(q)
}

/// Antisymmetric part `(K(xi) - K(-xi)) / 2`.
pub fn log_kernel_anti(xi: f64) -> f64 {
    if xi == 0.0 {
        return 0.0;
    }
    let q = (-xi.abs()).exp();
    xi.signum() * FRAC_1_PI * (1.0 - q * q) * atanh_over(q)
}

/// Classical derivative `K'(xi)` for `xi != 0`.
pub fn log_kernel_derivative(xi: f64) -> f64 {
    let q = (-xi.abs()).exp();
    if xi > 0.0 {
        2.0 * FRAC_1_PI * (atanh_over(q) - 1.0 / (1.0 - q * q))
    } else {
        2.0 * FRAC_1_PI * (q * q.atanh() + q * q / (1.0 - q * q))
    }
}

/// Derivative of the antisymmetric part, `(K'(xi) + K'(-xi)) / 2`, in the
/// form `((1/q + q) atanh(q) - 1) / pi` with `q = exp(-|xi|)`.
pub fn log_kernel_anti_derivative(xi: f64) -> f64 {
    let q = (-xi.abs()).exp();
    if q < 0.5 {
        // sum_{n>=1} (1/(2n+1) + 1/(2n-1)) q^{2n}
        let q2 = q * q;
        let mut p = q2;
        let mut acc = 0.0;
        for n in 1..80 {
            let nf = n as f64;
            let term = p * (1.0 / (2.0 * nf + 1.0) + 1.0 / (2.0 * nf - 1.0));
            acc += term;
            if term <= 1e-18 * acc {
                break;
            }
            p *= q2;
        }
        FRAC_1_PI * acc
    } else {
        FRAC_1_PI * ((1.0 / q + q) * q.atanh() - 1.0)
    }
}

/// Evaluation of the periodic kernel family at one point pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelValues {
    pub k: f64,
    pub s: f64,
    pub g: f64,
    pub t: f64,
}

/// `log|(s+1)/(s-1)| - 2s/(s^2-1)`, summed as a series where the two
/// terms nearly cancel.
pub fn g_bracket(s: f64) -> f64 {
    if s < 1.0 {
        log_ratio(s) + 2.0 * s / (1.0 - s * s)
    } else {
        let r = 1.0 / s;
        if r < 0.5 {
            // -2 sum_{n>=1} r^{2n+1} 2n/(2n+1)
            let r2 = r * r;
            let mut p = r * r2;
            let mut acc = 0.0;
            for n in 1..60 {
                let nf = n as f64;
                let term = p * 2.0 * nf / (2.0 * nf + 1.0);
                acc += term;
                if term < 1e-18 * acc {
                    break;
                }
                p *= r2;
            }
            -2.0 * acc
        } else {
            log_ratio(s) - 2.0 * s / (s * s - 1.0)
        }
    }
}

fn check_half_open(x: f64, half: f64, name: &str) -> Result<()> {
    if !(x > 0.0 && x < half) {
        return Err(Error::Domain(format!("{name} = {x} outside (0, {half})")));
    }
    Ok(())
}

/// `s(x, y) = tan(mu y) / tan(mu x)`.
#[inline]
pub fn s_ratio(x: f64, y: f64, mu: f64) -> f64 {
    (mu * y).tan() / (mu * x).tan()
}

/// `K(x, y)` only, for interior points (no validation); `K(0, y) = 2`.
#[inline]
pub fn periodic_k(x: f64, y: f64, mu: f64) -> f64 {
    if x == 0.0 {
        return 2.0;
    }
    let tx = (mu * x).tan();
    let ty = (mu * y).tan();
    if ty > tx {
        // s > 1: K = 2 atanh(r)/r with r = 1/s
        2.0 * atanh_over(tx / ty)
    } else {
        let s = ty / tx;
        2.0 * s * s.atanh()
    }
}

/// `G(x, y) = K_x(x, y)` by its closed form.
#[inline]
pub fn periodic_g(x: f64, y: f64, mu: f64) -> f64 {
    let sx = (mu * x).sin();
    let s = s_ratio(x, y, mu);
    -mu / (sx * sx) * (mu * y).tan() * g_bracket(s)
}

/// `T(x, y) = cot(mu y) G(x, y) + cot(mu x) G(y, x)`.
#[inline]
pub fn periodic_t(x: f64, y: f64, mu: f64) -> f64 {
    let cy = 1.0 / (mu * y).tan();
    let cx = 1.0 / (mu * x).tan();
    cy * periodic_g(x, y, mu) + cx * periodic_g(y, x, mu)
}

/// Second closed form of `T` written directly in `csc^2` terms.
pub fn periodic_t_closed(x: f64, y: f64, mu: f64) -> f64 {
    let cx = 1.0 / (mu * x).sin().powi(2);
    let cy = 1.0 / (mu * y).sin().powi(2);
    let s = s_ratio(x, y, mu);
    -mu * (cx + cy) * log_ratio(s) + mu * (cx - cy) * 2.0 * s / (s * s - 1.0)
}

/// `K`, `s`, `G = K_x` and `T` at `(x, y)` in `(0, L/2)^2`.
pub fn eval_k_periodic(x: f64, y: f64, length: f64) -> Result<KernelValues> {
    let half = 0.5 * length;
    check_half_open(x, half, "x")?;
    check_half_open(y, half, "y")?;
    if x == y {
        return Err(Error::Singular("K(x, y) is singular on the diagonal".into()));
    }
    let mu = PI / length;
    Ok(KernelValues {
        k: periodic_k(x, y, mu),
        s: s_ratio(x, y, mu),
        g: periodic_g(x, y, mu),
        t: periodic_t(x, y, mu),
    })
}

/// The kernel functions exercised by [`verify_kernel_properties_with`].
/// Overriding a method lets a caller confirm that a violated property is
/// actually reported.
pub trait KernelFamily: Sync {
    fn m(&self, s: f64) -> MValues {
        m_values_unchecked(s)
    }
    fn m_prime(&self, s: f64) -> f64 {
        m_derivative(s)
    }
    fn m_a_prime(&self, s: f64) -> f64 {
        m_a_derivative(s)
    }
    fn k(&self, x: f64, y: f64, mu: f64) -> f64 {
        periodic_k(x, y, mu)
    }
    fn g(&self, x: f64, y: f64, mu: f64) -> f64 {
        periodic_g(x, y, mu)
    }
    fn log_k_sym(&self, xi: f64) -> f64 {
        log_kernel_sym(xi)
    }
    fn log_k_anti(&self, xi: f64) -> f64 {
        log_kernel_anti(xi)
    }
    fn log_k_anti_prime(&self, xi: f64) -> f64 {
        log_kernel_anti_derivative(xi)
    }
}

/// The kernels as defined.
#[derive(Debug, Default, Clone, Copy)]
pub struct StandardKernels;

impl KernelFamily for StandardKernels {}

/// Sampling plan for the property sweep.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SamplingPlan {
    pub deterministic: usize,
    pub random: usize,
    pub seed: u64,
    pub tolerance: f64,
    pub length: f64,
}

impl Default for SamplingPlan {
    fn default() -> Self {
        Self { deterministic: 10_000, random: 10_000, seed: 0, tolerance: 1e-12, length: 2.0 * PI }
    }
}

/// Outcome of one property check.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct KernelReport {
    pub property: String,
    pub samples: usize,
    /// Most negative normalized margin; nonnegative when the property holds.
    pub worst_violation: f64,
    pub worst_location: Vec<f64>,
    pub tolerance: f64,
    pub pass: bool,
}

/// A one-sided check `value >= 0` normalized by `max(1, scale)`.
#[derive(Debug, Clone, Copy)]
struct Margin {
    value: f64,
    loc: [f64; 2],
}

fn margin(value: f64, scale: f64, loc: [f64; 2]) -> Margin {
    let v = value / scale.abs().max(1.0);
    Margin { value: if v.is_nan() { f64::NEG_INFINITY } else { v }, loc }
}

fn worst(a: Margin, b: Margin) -> Margin {
    if b.value < a.value {
        b
    } else {
        a
    }
}

fn report(property: &str, margins: Vec<Margin>, tolerance: f64) -> KernelReport {
    let samples = margins.len();
    let w = margins
        .into_iter()
        .fold(Margin { value: f64::INFINITY, loc: [f64::NAN; 2] }, worst);
    KernelReport {
        property: property.to_string(),
        samples,
        worst_violation: w.value,
        worst_location: w.loc.to_vec(),
        tolerance,
        pass: w.value >= -tolerance,
    }
}

/// Points in (0, 1) excluding the singular band: `plan.deterministic`
/// uniform and end-clustered points, then `plan.random` seeded ones.
fn unit_samples(plan: &SamplingPlan) -> Vec<f64> {
    let d = plan.deterministic.max(2);
    let inside = |s: f64| s > 0.0 && s < 1.0 - SINGULAR_BAND;
    let mut v: Vec<f64> = Vec::with_capacity(d + plan.random);
    let half = d / 2;
    for i in 1..=half {
        v.push(i as f64 / (half + 1) as f64);
    }
    for i in 0..d - half {
        // logarithmic clustering towards 0 (down to 1e-12) and 1 (down to the band)
        let r = (i as f64 + 0.5) / (d - half) as f64;
        v.push(if i % 2 == 0 { 10f64.powf(-12.0 * r) } else { 1.0 - 10f64.powf(-7.9 * r) });
    }
    v.retain(|&s| inside(s));
    let mut rng = ChaCha8Rng::seed_from_u64(plan.seed);
    let mut accepted = 0;
    while accepted < plan.random {
        let u: f64 = rng.gen_range(0.0..1.0);
        let s = if rng.gen_bool(0.5) { u } else { u * u * u };
        if inside(s) {
            v.push(s);
            accepted += 1;
        }
    }
    v
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Region {
    All,
    Below,
    Above,
}

/// Point pairs in (0, L/2)^2 off the diagonal band, restricted to `x < y`
/// (`Below`), `y < x` (`Above`) or either: at least `plan.deterministic`
/// clustered grid pairs plus exactly `plan.random` seeded pairs.
fn pair_samples(plan: &SamplingPlan, mu: f64, region: Region) -> Vec<[f64; 2]> {
    let half = 0.5 * plan.length;
    let ok = |p: [f64; 2]| {
        p[0] > 0.0
            && p[0] < half
            && p[1] > 0.0
            && p[1] < half
            && match region {
                Region::All => p[0] != p[1],
                Region::Below => p[0] < p[1],
                Region::Above => p[1] < p[0],
            }
            && {
                let s = s_ratio(p[0], p[1], mu);
                (s - 1.0).abs() >= SINGULAR_BAND && s.is_finite()
            }
    };
    let d = plan.deterministic as f64;
    let mut side = match region {
        Region::All => d.sqrt().ceil() as usize + 1,
        _ => (0.5 + (0.25 + 2.0 * d).sqrt()).ceil() as usize,
    };
    let mut v = Vec::with_capacity(side * side + plan.random);
    loop {
        v.clear();
        for i in 0..side {
            for j in 0..side {
                // Chebyshev-like clustering at both ends of (0, L/2)
                let a = 0.5 * (1.0 - (PI * (i as f64 + 0.5) / side as f64).cos()) * half;
                let b = 0.5 * (1.0 - (PI * (j as f64 + 0.5) / side as f64).cos()) * half;
                if ok([a, b]) {
                    v.push([a, b]);
                }
            }
        }
        if v.len() >= plan.deterministic {
            break;
        }
        side += 1;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(plan.seed ^ 0x9e37_79b9_7f4a_7c15);
    let mut accepted = 0;
    while accepted < plan.random {
        let a: f64 = rng.gen_range(0.0..1.0);
        let b: f64 = rng.gen_range(0.0..1.0);
        let a = if rng.gen_bool(0.25) { a.powi(4) } else { a };
        let b = if rng.gen_bool(0.25) { 1.0 - b.powi(4) } else { b };
        let mut p = [a * half, b * half];
        if (region == Region::Below && p[0] > p[1]) || (region == Region::Above && p[1] > p[0]) {
            p.swap(0, 1);
        }
        if ok(p) {
            v.push(p);
            accepted += 1;
        }
    }
    v
}

/// Check every kernel property with the standard kernels.
pub fn verify_kernel_properties(plan: &SamplingPlan) -> Vec<KernelReport> {
    verify_kernel_properties_with(plan, &StandardKernels)
}

/// Check every kernel property for an arbitrary kernel family.
pub fn verify_kernel_properties_with<F: KernelFamily>(plan: &SamplingPlan, fam: &F) -> Vec<KernelReport> {
    let tol = plan.tolerance;
    let mu = PI / plan.length;
    let unit = unit_samples(plan);
    let mut out = Vec::new();

    // M increasing on (0,1): analytic slope and sampled slopes
    let mut sorted = unit.clone();
    sorted.sort_by(f64::total_cmp);
    sorted.dedup();
    let slopes = |g: &dyn Fn(f64) -> f64, pts: &[f64], sign: f64| -> Vec<Margin> {
        pts.windows(2)
            .map(|w| {
                let (a, b) = (w[0], w[1]);
                let (ga, gb) = (g(a), g(b));
                let diff = sign * (gb - ga);
                // rounding in ga, gb scales with their magnitude
                margin(diff, 1e4 * (ga.abs() + gb.abs()), [a, b])
            })
            .collect()
    };
    let mut m_inc: Vec<Margin> = unit
        .par_iter()
        .map(|&s| margin(fam.m_prime(s), fam.m(s).m, [s, f64::NAN]))
        .collect();
    m_inc.extend(slopes(&|s| fam.m(s).m, &sorted, 1.0));
    out.push(report("M increasing on (0,1)", m_inc, tol));

    // M decreasing on (1, inf): s = 1/u
    let inv: Vec<f64> = sorted.iter().rev().map(|u| 1.0 / u).collect();
    let mut m_dec: Vec<Margin> = inv
        .par_iter()
        .map(|&s| margin(-fam.m_prime(s), fam.m(s).m, [s, f64::NAN]))
        .collect();
    m_dec.extend(slopes(&|s| fam.m(s).m, &inv, -1.0));
    out.push(report("M decreasing on (1,inf)", m_dec, tol));

    // M_a decreasing on (0, inf)
    let all: Vec<f64> = sorted.iter().copied().chain(inv.iter().copied()).collect();
    let mut ma_dec: Vec<Margin> = all
        .par_iter()
        .map(|&s| margin(-fam.m_a_prime(s), fam.m(s).m_a, [s, f64::NAN]))
        .collect();
    ma_dec.extend(slopes(&|s| fam.m(s).m_a, &sorted, -1.0));
    ma_dec.extend(slopes(&|s| fam.m(s).m_a, &inv, -1.0));
    out.push(report("M_a decreasing on (0,inf)", ma_dec, tol));

    // limits at 0+ and the large-s asymptote
    let mut lim = Vec::new();
    for &s in &[1e-8, 1e-10, 1e-12] {
        let v = fam.m(s);
        lim.push(margin(1e-6 - (v.m - 2.0).abs(), 1.0, [s, f64::NAN]));
        lim.push(margin(1e-6 - (v.m_a - 1.0).abs(), 1.0, [s, f64::NAN]));
        let ds = 1e-3 * s;
        let slope = (fam.m(s + ds).m - v.m) / ds;
        lim.push(margin(1e-6 - slope.abs(), 1.0, [s, f64::NAN]));
    }
    for &s in &[1e3, 1e4, 1e6] {
        let dev = (fam.m(s).m - 2.0 / (s * s)).abs();
        lim.push(margin(10.0 / s.powi(3) - dev, 1.0, [s, f64::NAN]));
    }
    out.push(report("M limits: M(0+)=2, M'(0+)=0, M_a(0+)=1, M=2/s^2+O(s^-3)", lim, tol));

    let pairs = pair_samples(plan, mu, Region::All);

    let k_pos: Vec<Margin> = pairs
        .par_iter()
        .map(|p| {
            let k = fam.k(p[0], p[1], mu);
            margin(k, k, *p)
        })
        .collect();
    out.push(report("K(x,y) >= 0", k_pos, tol));

    let below = pair_samples(plan, mu, Region::Below);
    let above = pair_samples(plan, mu, Region::Above);

    let k_ge2: Vec<Margin> = below
        .par_iter()
        .map(|p| {
            let k = fam.k(p[0], p[1], mu);
            margin(k - 2.0, k, *p)
        })
        .collect();
    out.push(report("K(x,y) >= 2 for x < y", k_ge2, tol));

    let kx_pos: Vec<Margin> = below
        .par_iter()
        .map(|p| {
            let g = fam.g(p[0], p[1], mu);
            margin(g, 0.0, *p)
        })
        .collect();
    out.push(report("K_x(x,y) >= 0 for x < y", kx_pos, tol));

    let k_ge2s2: Vec<Margin> = above
        .par_iter()
        .map(|p| {
            let k = fam.k(p[0], p[1], mu);
            let s = s_ratio(p[0], p[1], mu);
            margin(k - 2.0 * s * s, k, *p)
        })
        .collect();
    out.push(report("K(x,y) >= 2 s^2 for y < x", k_ge2s2, tol));

    let kx_neg: Vec<Margin> = above
        .par_iter()
        .map(|p| {
            let g = fam.g(p[0], p[1], mu);
            margin(-g, 0.0, *p)
        })
        .collect();
    out.push(report("K_x(x,y) <= 0 for y < x", kx_neg, tol));

    let log_bound: Vec<Margin> = all
        .par_iter()
        .map(|&s| {
            let l = log_ratio(s);
            margin(l - 2.0 * s / (s * s + 1.0), l, [s, f64::NAN])
        })
        .collect();
    out.push(report("log|(s+1)/(s-1)| >= 2s/(s^2+1)", log_bound, tol));

    let t_neg: Vec<Margin> = pairs
        .par_iter()
        .map(|p| {
            let (x, y) = (p[0], p[1]);
            let a = 1.0 / (mu * y).tan() * fam.g(x, y, mu);
            let b = 1.0 / (mu * x).tan() * fam.g(y, x, mu);
            margin(-(a + b), a.abs() + b.abs(), *p)
        })
        .collect();
    out.push(report("T(x,y) <= 0", t_neg, tol));

    // log-coordinate kernel parts on xi in (-40, 40)
    let xis: Vec<f64> = sorted
        .iter()
        .map(|&u| 40.0 * (2.0 * u - 1.0))
        .filter(|xi| xi.abs() > 1e-8)
        .collect();
    let mut ka_inc: Vec<Margin> = xis
        .par_iter()
        .map(|&xi| margin(fam.log_k_anti_prime(xi), 1.0, [xi, f64::NAN]))
        .collect();
    let mut xs = xis.clone();
    xs.sort_by(f64::total_cmp);
    ka_inc.extend(slopes(&|xi| fam.log_k_anti(xi), &xs, 1.0));
    out.push(report("K_a increasing", ka_inc, tol));

    let mut ka_lim = Vec::new();
    for &xi in &[40.0, 60.0, 200.0] {
        ka_lim.push(margin(1e-12 - (fam.log_k_anti(xi) - FRAC_1_PI).abs(), 1.0, [xi, f64::NAN]));
        ka_lim.push(margin(1e-12 - (fam.log_k_anti(-xi) + FRAC_1_PI).abs(), 1.0, [-xi, f64::NAN]));
    }
    for &xi in &xis {
        ka_lim.push(margin(FRAC_1_PI - fam.log_k_anti(xi).abs(), 1.0, [xi, f64::NAN]));
    }
    out.push(report("K_a limits +-1/pi", ka_lim, tol));

    let ksym: Vec<Margin> = xis
        .par_iter()
        .map(|&xi| {
            let v = fam.log_k_sym(xi);
            margin(v - FRAC_1_PI, v, [xi, f64::NAN])
        })
        .collect();
    out.push(report("K_sym >= 1/pi", ksym, tol));

    out
}
