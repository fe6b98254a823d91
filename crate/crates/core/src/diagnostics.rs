//! Blow-up functionals, norms, inequality margins and quadratic forms.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::biotsavart::{velocity_periodic, BiotSavartMethod, HalflineOperator, LogKernel, LogVelocity, VelocityField};
use crate::error::{check_len, Error, Result};
use crate::fields::{trapezoid, FieldState, LogState};
use crate::grid::{fft_real, spectral_derivative, LogGrid, PeriodicGrid, TrigInterpolant};
use crate::quad::{fd4_derivative, tanh_sinh, CubicIntegrator, Ghost};

/// One row of diagnostics. Quantities that do not apply to a run (log
/// functionals on a periodic run and vice versa) are NaN, as are the
/// derivative margins until [`fill_margins`] has seen the neighbouring rows.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiagnosticsRecord {
    pub t: f64,
    pub dt: f64,
    pub i: f64,
    pub j: f64,
    pub d_i_dt_minus_j: f64,
    pub d_j_dt_minus_c0_i2: f64,
    pub max_omega: f64,
    pub max_thetax: f64,
    pub max_ux: f64,
    pub bkm_ux: f64,
    pub bkm_thetax: f64,
    pub bkm_omega: f64,
    pub l1_omega: f64,
    pub l1_bound_margin: f64,
    pub u_l2: f64,
    pub u_lp: f64,
    pub u_bmo_proxy: f64,
    pub tail_fraction: f64,
    pub entropy: f64,
    pub f: f64,
    pub f_from_theta: f64,
    pub g: f64,
    pub lemma3_margin: f64,
    pub lemma3_shift: f64,
    pub mass: f64,
    pub d_f_dt_minus_g: f64,
    pub d_g_dt_minus_f2: f64,
    pub entropy_ddot_margin: f64,
}

impl DiagnosticsRecord {
    /// Column names, in the order of [`DiagnosticsRecord::to_array`].
    pub const NAMES: [&'static str; 28] = [
        "t",
        "dt",
        "I",
        "J",
        "dIdt_minus_J",
        "dJdt_minus_c0I2",
        "max_omega",
        "max_thetax",
        "max_ux",
        "bkm_ux",
        "bkm_thetax",
        "bkm_omega",
        "l1_omega",
        "l1_bound_margin",
        "u_l2",
        "u_lp",
        "u_bmo_proxy",
        "tail_fraction",
        "entropy",
        "F",
        "F_from_theta",
        "G",
        "lemma3_margin",
        "lemma3_shift",
        "mass",
        "dFdt_minus_G",
        "dGdt_minus_F2",
        "entropy_ddot_margin",
    ];

    pub fn empty(t: f64) -> Self {
        Self::from_array([f64::NAN; 28]).with_time(t)
    }

    fn with_time(mut self, t: f64) -> Self {
        self.t = t;
        self
    }

    pub fn to_array(&self) -> [f64; 28] {
        [
            self.t,
            self.dt,
            self.i,
            self.j,
            self.d_i_dt_minus_j,
            self.d_j_dt_minus_c0_i2,
            self.max_omega,
            self.max_thetax,
            self.max_ux,
            self.bkm_ux,
            self.bkm_thetax,
            self.bkm_omega,
            self.l1_omega,
            self.l1_bound_margin,
            self.u_l2,
            self.u_lp,
            self.u_bmo_proxy,
            self.tail_fraction,
            self.entropy,
            self.f,
            self.f_from_theta,
            self.g,
            self.lemma3_margin,
            self.lemma3_shift,
            self.mass,
            self.d_f_dt_minus_g,
            self.d_g_dt_minus_f2,
            self.entropy_ddot_margin,
        ]
    }

    pub fn from_array(a: [f64; 28]) -> Self {
        Self {
            t: a[0],
            dt: a[1],
            i: a[2],
            j: a[3],
            d_i_dt_minus_j: a[4],
            d_j_dt_minus_c0_i2: a[5],
            max_omega: a[6],
            max_thetax: a[7],
            max_ux: a[8],
            bkm_ux: a[9],
            bkm_thetax: a[10],
            bkm_omega: a[11],
            l1_omega: a[12],
            l1_bound_margin: a[13],
            u_l2: a[14],
            u_lp: a[15],
            u_bmo_proxy: a[16],
            tail_fraction: a[17],
            entropy: a[18],
            f: a[19],
            f_from_theta: a[20],
            g: a[21],
            lemma3_margin: a[22],
            lemma3_shift: a[23],
            mass: a[24],
            d_f_dt_minus_g: a[25],
            d_g_dt_minus_f2: a[26],
            entropy_ddot_margin: a[27],
        }
    }

    /// Value of a column by its name.
    pub fn get(&self, name: &str) -> Option<f64> {
        Self::NAMES.iter().position(|n| *n == name).map(|i| self.to_array()[i])
    }
}

fn check_normalized(state: &FieldState) -> Result<()> {
    let scale = state.theta.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    if state.theta[0].abs() > 1e-10 * scale {
        return Err(Error::Normalization(format!("theta(0) = {} must vanish", state.theta[0])));
    }
    Ok(())
}

/// `I = int_0^{L/2} theta cot(mu x) dx`.
///
/// The integrand is odd about 0 and about L/2, so only odd sine modes
/// contribute: `I = sum_{k odd} b_k L / (pi k)`.
pub fn functional_i(state: &FieldState) -> Result<f64> {
    check_normalized(state)?;
    let g = &state.grid;
    let n = g.n();
    let mu = g.mu();
    let f: Vec<f64> = (0..n)
        .map(|j| {
            if j == 0 || 2 * j == n {
                0.0
            } else {
                state.theta[j] / (mu * g.node(j)).tan()
            }
        })
        .collect();
    let spec = fft_real(&f);
    let l = g.length();
    let mut acc = 0.0;
    let mut k = 1;
    while 2 * k < n {
        let b = -2.0 * spec[k].im / n as f64;
        acc += b * l / (PI * k as f64);
        k += 2;
    }
    Ok(acc)
}

/// `J = (2/pi) int_0^{L/2} theta omega cot(mu x) dx`; the integrand is even
/// about 0 and L/2, so the half-period integral is half the periodic
/// trapezoid sum.
pub fn functional_j(state: &FieldState) -> Result<f64> {
    check_normalized(state)?;
    let g = &state.grid;
    let n = g.n();
    let mu = g.mu();
    let mut acc = 0.0;
    for j in 1..n {
        if 2 * j != n {
            acc += state.theta[j] * state.omega[j] / (mu * g.node(j)).tan();
        }
    }
    Ok(2.0 / PI * 0.5 * g.dx() * acc)
}

/// `I` in integrated-by-parts form `-(1/mu) int_0^{L/2} theta_x log|sin(mu x)| dx`,
/// evaluated by adaptive quadrature of the trigonometric interpolant.
pub fn functional_i_by_parts(state: &FieldState) -> Result<f64> {
    check_normalized(state)?;
    let g = &state.grid;
    let mu = g.mu();
    let thx = TrigInterpolant::new(&state.theta, g)?.derivative();
    let v = tanh_sinh(
        |x, dl, _| {
            let s = if x < 0.25 * g.length() { (mu * dl).sin() } else { (mu * x).sin() };
            thx.eval(x) * s.ln()
        },
        0.0,
        0.5 * g.length(),
        1e-13,
    );
    Ok(-v / mu)
}

/// Log-coordinate functionals of one state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogFunctionals {
    pub entropy: f64,
    pub f: f64,
    pub f_from_theta: f64,
    pub g: f64,
    pub lemma3_lhs: f64,
    pub lemma3_rhs: f64,
    pub lemma3_margin: f64,
    /// Shift applied so that the normalized density is supported in `[0, inf)`.
    pub shift: f64,
    pub mass: f64,
}

/// Relative size of negative `rho` values tolerated as discretization ringing.
pub const DENSITY_SIGN_TOLERANCE: f64 = 1e-6;

/// `rho >= 0` up to [`DENSITY_SIGN_TOLERANCE`] of its peak.
pub fn check_density_sign(rho: &[f64], grid: &LogGrid) -> Result<()> {
    let peak = sup_norm(rho);
    match rho.iter().enumerate().find(|(_, r)| **r < -DENSITY_SIGN_TOLERANCE * peak) {
        Some((i, r)) => Err(Error::Sign(format!("rho = {r} < 0 at xi = {}", grid.node(i)))),
        None => Ok(()),
    }
}

/// Entropy, `F`, `G` and the Lemma-3 margin of a log state.
pub fn functionals_log(state: &LogState) -> Result<LogFunctionals> {
    let grid = &state.grid;
    let h = grid.h();
    check_density_sign(&state.rho, grid)?;
    let peak = sup_norm(&state.rho);
    let mass = trapezoid(&state.rho, h);
    if !(mass > 0.0) {
        return Err(Error::Degenerate("rho has no positive mass".into()));
    }
    let p: Vec<f64> = state.rho.iter().map(|r| r.max(0.0) / mass).collect();
    let plogp: Vec<f64> = p.iter().map(|&v| if v > 0.0 { -v * v.ln() } else { 0.0 }).collect();
    let entropy = trapezoid(&plogp, h);
    let xs = grid.nodes();
    let xr: Vec<f64> = xs.iter().zip(&state.rho).map(|(x, r)| x * r).collect();
    let f = trapezoid(&xr, h);
    let f_from_theta = grid.xi_min() * mass - trapezoid(&state.theta, h);
    let wt: Vec<f64> = state.omega.iter().zip(&state.theta).map(|(w, t)| w * t).collect();
    let g = -2.0 / PI * trapezoid(&wt, h);
    let left = p
        .iter()
        .position(|&v| v > 1e-14 * (peak / mass))
        .map(|i| xs[i])
        .unwrap_or(0.0);
    let shift = (-left).max(0.0);
    let lemma3_lhs = f / mass + shift;
    let lemma3_rhs = (entropy - 1.0).exp();
    Ok(LogFunctionals {
        entropy,
        f,
        f_from_theta,
        g,
        lemma3_lhs,
        lemma3_rhs,
        lemma3_margin: lemma3_lhs - lemma3_rhs,
        shift,
        mass,
    })
}

/// `I(Omega, xi) = int_{-inf}^{xi} U_xi Omega` with `U = K * Omega` (HL kernel).
#[derive(Debug, Clone)]
pub struct QuadformLine {
    vel: LogVelocity,
}

impl QuadformLine {
    pub fn new(grid: &LogGrid) -> Self {
        Self { vel: LogVelocity::new(grid, LogKernel::Hl) }
    }

    /// Integrand `U_xi Omega` at the nodes.
    pub fn density(&self, omega: &[f64]) -> Result<Vec<f64>> {
        let ux = self.vel.velocity_derivative(omega)?;
        Ok(ux.iter().zip(omega).map(|(a, b)| a * b).collect())
    }

    pub fn eval(&self, omega: &[f64], xi: f64) -> Result<f64> {
        let d = self.density(omega)?;
        let g = self.vel.grid();
        Ok(CubicIntegrator::new(&d, g.xi_min(), g.h(), Ghost::Zero, Ghost::Zero).integral(g.xi_min(), xi))
    }

    /// Values at several split points sharing one velocity evaluation.
    pub fn eval_many(&self, omega: &[f64], xis: &[f64]) -> Result<Vec<f64>> {
        let d = self.density(omega)?;
        let g = self.vel.grid();
        let integ = CubicIntegrator::new(&d, g.xi_min(), g.h(), Ghost::Zero, Ghost::Zero);
        Ok(xis.iter().map(|&xi| integ.integral(g.xi_min(), xi)).collect())
    }
}

pub fn quadform_line(omega: &[f64], xi: f64, grid: &LogGrid) -> Result<f64> {
    check_len(grid.m(), omega.len())?;
    QuadformLine::new(grid).eval(omega, xi)
}

/// How `[u cot(mu x)]_x` is formed in the periodic quadratic form.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum QuadformMethod {
    /// Kernel representation `-(1/pi) int K(x,y) omega cot(mu y) dy`, then
    /// fourth-order differences on the half-period nodes.
    #[default]
    Representation,
    /// Spectral velocity, spectral derivative of `u cot(mu x)`.
    Spectral,
}

/// `int_a^{L/2} omega [u cot(mu x)]_x dx` for odd `omega`.
#[derive(Debug, Clone)]
pub struct PeriodicQuadform {
    grid: PeriodicGrid,
    method: QuadformMethod,
    op: Option<HalflineOperator>,
}

impl PeriodicQuadform {
    pub fn new(grid: &PeriodicGrid, method: QuadformMethod) -> Self {
        let op = match method {
            QuadformMethod::Representation => Some(HalflineOperator::new(grid)),
            QuadformMethod::Spectral => None,
        };
        Self { grid: *grid, method, op }
    }

    pub fn method(&self) -> QuadformMethod {
        self.method
    }

    /// `omega [u cot]_x` on nodes 0..=N/2.
    pub fn density(&self, omega: &[f64]) -> Result<Vec<f64>> {
        check_len(self.grid.n(), omega.len())?;
        let half = self.grid.half();
        let h = self.grid.dx();
        let vx = match &self.op {
            Some(op) => {
                let v = op.apply(omega)?;
                fd4_derivative(&v, h, Ghost::Even, Ghost::Even)
            }
            None => {
                let vel = velocity_periodic(omega, &self.grid, BiotSavartMethod::Spectral)?;
                let mu = self.grid.mu();
                let n = self.grid.n();
                let v: Vec<f64> = (0..n)
                    .map(|j| {
                        if j == 0 {
                            vel.ux[0] / mu
                        } else if 2 * j == n {
                            0.0
                        } else {
                            vel.u[j] / (mu * self.grid.node(j)).tan()
                        }
                    })
                    .collect();
                let mut d = spectral_derivative(&v, &self.grid)?;
                d.truncate(half + 1);
                d
            }
        };
        Ok((0..=half).map(|j| omega[j] * vx[j]).collect())
    }

    pub fn eval(&self, omega: &[f64], a: f64) -> Result<f64> {
        Ok(self.eval_many(omega, &[a])?[0])
    }

    pub fn eval_many(&self, omega: &[f64], points: &[f64]) -> Result<Vec<f64>> {
        let half_len = 0.5 * self.grid.length();
        if let Some(a) = points.iter().find(|a| !(**a >= 0.0 && **a <= half_len)) {
            return Err(Error::Domain(format!("a = {a} outside [0, {half_len}]")));
        }
        let d = self.density(omega)?;
        let integ = CubicIntegrator::new(&d, 0.0, self.grid.dx(), Ghost::Even, Ghost::Even);
        Ok(points.iter().map(|&a| integ.integral(a, half_len)).collect())
    }
}

pub fn quadform_periodic(omega: &[f64], a: f64, grid: &PeriodicGrid, method: QuadformMethod) -> Result<f64> {
    PeriodicQuadform::new(grid, method).eval(omega, a)
}

/// CKY analogue `int_a^{X} omega (u/x)_x dx = int_a^X omega^2 / x dx` by the
/// trapezoid rule on an increasing grid, with a linear partial first cell.
pub fn quadform_cky(omega: &[f64], xgrid: &[f64], a: f64) -> Result<f64> {
    check_len(xgrid.len(), omega.len())?;
    let n = xgrid.len();
    if n < 2 || xgrid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::InvalidGrid("x nodes must be strictly increasing".into()));
    }
    if !(a > 0.0) || a < xgrid[0] || a > xgrid[n - 1] {
        return Err(Error::Domain(format!("a = {a} outside (0, X] or the grid")));
    }
    let f = |i: usize| omega[i] * omega[i] / xgrid[i];
    let k = xgrid.partition_point(|&x| x <= a).max(1) - 1;
    let mut acc = 0.0;
    if k + 1 < n {
        let t = (a - xgrid[k]) / (xgrid[k + 1] - xgrid[k]);
        let fa = (1.0 - t) * f(k) + t * f(k + 1);
        acc += 0.5 * (xgrid[k + 1] - a) * (fa + f(k + 1));
    }
    for i in k + 1..n - 1 {
        acc += 0.5 * (xgrid[i + 1] - xgrid[i]) * (f(i) + f(i + 1));
    }
    Ok(acc)
}

/// `int |f|` by the periodic trapezoid rule.
pub fn l1_norm(f: &[f64], h: f64) -> f64 {
    h * f.iter().map(|v| v.abs()).sum::<f64>()
}

/// `(int |f|^p)^{1/p}` by the periodic trapezoid rule.
pub fn lp_norm(f: &[f64], h: f64, p: f64) -> f64 {
    (h * f.iter().map(|v| v.abs().powf(p)).sum::<f64>()).powf(1.0 / p)
}

pub fn sup_norm(f: &[f64]) -> f64 {
    f.iter().fold(0.0f64, |m, v| m.max(v.abs()))
}

/// Largest mean oscillation `avg_I |f - avg_I f|` over dyadic node intervals.
pub fn bmo_proxy(f: &[f64]) -> f64 {
    fn rec(f: &[f64]) -> f64 {
        if f.len() < 2 {
            return 0.0;
        }
        let mean = f.iter().sum::<f64>() / f.len() as f64;
        let osc = f.iter().map(|v| (v - mean).abs()).sum::<f64>() / f.len() as f64;
        let mid = f.len() / 2;
        osc.max(rec(&f[..mid])).max(rec(&f[mid..]))
    }
    rec(f)
}

/// Running time integrals of the sup norms of `u_x`, `theta_x`, `omega`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct BkmIntegrals {
    pub ux: f64,
    pub thetax: f64,
    pub omega: f64,
}

impl BkmIntegrals {
    /// Trapezoid update over a step of length `dt` between norm triples.
    pub fn update(&mut self, dt: f64, before: [f64; 3], after: [f64; 3]) {
        self.ux += 0.5 * dt * (before[0] + after[0]);
        self.thetax += 0.5 * dt * (before[1] + after[1]);
        self.omega += 0.5 * dt * (before[2] + after[2]);
    }
}

/// Reference values fixed at the start of a run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunBaseline {
    pub t0: f64,
    pub l1_omega0: f64,
    pub theta_inf0: f64,
}

impl RunBaseline {
    pub fn of(state: &FieldState) -> Self {
        Self { t0: state.t, l1_omega0: l1_norm(&state.omega, state.grid.dx()), theta_inf0: sup_norm(&state.theta) }
    }
}

/// Record fields for a periodic state.
pub fn norms_and_bounds(
    state: &FieldState,
    vel: &VelocityField,
    bkm: &BkmIntegrals,
    baseline: &RunBaseline,
    lp: f64,
) -> Result<DiagnosticsRecord> {
    let grid = &state.grid;
    let h = grid.dx();
    let thx = state.theta_x();
    let mut r = DiagnosticsRecord::empty(state.t);
    r.i = functional_i(state)?;
    r.j = functional_j(state)?;
    r.max_omega = sup_norm(&state.omega);
    r.max_thetax = sup_norm(&thx);
    r.max_ux = sup_norm(&vel.ux);
    r.bkm_ux = bkm.ux;
    r.bkm_thetax = bkm.thetax;
    r.bkm_omega = bkm.omega;
    r.l1_omega = l1_norm(&state.omega, h);
    r.l1_bound_margin = baseline.l1_omega0 + 2.0 * baseline.theta_inf0 * (state.t - baseline.t0) - r.l1_omega;
    r.u_l2 = lp_norm(&vel.u, h, 2.0);
    r.u_lp = lp_norm(&vel.u, h, lp);
    r.u_bmo_proxy = bmo_proxy(&vel.u);
    r.tail_fraction = crate::grid::spectrum_report(&state.omega).tail_fraction;
    Ok(r)
}

/// Record fields for a log state.
pub fn log_record(state: &LogState, vel: &LogVelocity, bkm: &BkmIntegrals) -> Result<DiagnosticsRecord> {
    let fun = functionals_log(state)?;
    let u = vel.velocity(&state.omega)?;
    let ux = vel.velocity_derivative(&state.omega)?;
    let forcing: Vec<f64> = state.grid.nodes().iter().zip(&state.rho).map(|(x, r)| x.exp() * r).collect();
    let mut r = DiagnosticsRecord::empty(state.t);
    r.max_omega = sup_norm(&state.omega);
    r.max_thetax = sup_norm(&forcing);
    r.max_ux = sup_norm(&ux);
    r.bkm_ux = bkm.ux;
    r.bkm_thetax = bkm.thetax;
    r.bkm_omega = bkm.omega;
    r.l1_omega = trapezoid(&state.omega.iter().map(|v| v.abs()).collect::<Vec<_>>(), state.grid.h());
    r.u_l2 = sup_norm(&u);
    r.tail_fraction = crate::grid::spectrum_report(&state.omega)
        .tail_fraction
        .max(crate::grid::spectrum_report(&state.rho).tail_fraction);
    r.entropy = fun.entropy;
    r.f = fun.f;
    r.f_from_theta = fun.f_from_theta;
    r.g = fun.g;
    r.lemma3_margin = fun.lemma3_margin;
    r.lemma3_shift = fun.shift;
    r.mass = fun.mass;
    Ok(r)
}

/// First and second derivatives of samples `y(t)` on an increasing,
/// possibly non-uniform time grid: three-point centered formulas inside,
/// three-point one-sided formulas at the ends.
pub fn time_derivatives(t: &[f64], y: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let n = t.len();
    let mut d1 = vec![f64::NAN; n];
    let mut d2 = vec![f64::NAN; n];
    if n < 3 {
        if n == 2 {
            let s = (y[1] - y[0]) / (t[1] - t[0]);
            d1 = vec![s, s];
        }
        return (d1, d2);
    }
    // derivative of the quadratic through (t0,t1,t2) evaluated at x
    let quad = |i: usize, x: f64| -> (f64, f64) {
        let (a, b, c) = (t[i], t[i + 1], t[i + 2]);
        let (ya, yb, yc) = (y[i], y[i + 1], y[i + 2]);
        let la = ((x - b) + (x - c)) / ((a - b) * (a - c));
        let lb = ((x - a) + (x - c)) / ((b - a) * (b - c));
        let lc = ((x - a) + (x - b)) / ((c - a) * (c - b));
        let sa = 2.0 / ((a - b) * (a - c));
        let sb = 2.0 / ((b - a) * (b - c));
        let sc = 2.0 / ((c - a) * (c - b));
        (ya * la + yb * lb + yc * lc, ya * sa + yb * sb + yc * sc)
    };
    for k in 0..n {
        let i = k.saturating_sub(1).min(n - 3);
        let (a, b) = quad(i, t[k]);
        d1[k] = a;
        d2[k] = b;
    }
    (d1, d2)
}

/// Fill the derivative margins of a record sequence in place.
///
/// Periodic runs: `dI/dt - J` and `dJ/dt - c0 I^2`. Log runs:
/// `dF/dt - G`, `dG/dt - F^2/pi`, and `d^2 S/dt^2 - (2/pi) exp(e^{S-1} - S)`
/// for the entropy `S`.
pub fn fill_margins(records: &mut [DiagnosticsRecord], c0: f64) {
    let t: Vec<f64> = records.iter().map(|r| r.t).collect();
    let col = |f: fn(&DiagnosticsRecord) -> f64| -> Vec<f64> { records.iter().map(f).collect() };
    let i = col(|r| r.i);
    let j = col(|r| r.j);
    let f = col(|r| r.f);
    let g = col(|r| r.g);
    let s = col(|r| r.entropy);
    let (di, _) = time_derivatives(&t, &i);
    let (dj, _) = time_derivatives(&t, &j);
    let (df, _) = time_derivatives(&t, &f);
    let (dg, _) = time_derivatives(&t, &g);
    let (_, dds) = time_derivatives(&t, &s);
    for (k, r) in records.iter_mut().enumerate() {
        r.d_i_dt_minus_j = di[k] - j[k];
        r.d_j_dt_minus_c0_i2 = dj[k] - c0 * i[k] * i[k];
        r.d_f_dt_minus_g = df[k] - g[k];
        r.d_g_dt_minus_f2 = dg[k] - f[k] * f[k] / PI;
        r.entropy_ddot_margin = dds[k] - 2.0 / PI * ((s[k] - 1.0).exp() - s[k]).exp();
    }
}

/// Reciprocal-extrapolation estimate of a blow-up time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlowupEstimate {
    pub t_star: f64,
    /// Coefficient of determination of the linear fit of `1/max_omega`.
    pub fit_quality: f64,
    pub samples: usize,
}

/// Fit `1/max_omega = a + b t` on the trailing `window` samples.
pub fn blowup_time_estimate(times: &[f64], max_omega: &[f64], window: usize) -> Result<BlowupEstimate> {
    check_len(times.len(), max_omega.len())?;
    let window = window.max(8);
    if times.len() < window {
        return Err(Error::UnreliableEstimate(format!(
            "need at least {window} samples, got {}",
            times.len()
        )));
    }
    let start = times.len() - window;
    let t = &times[start..];
    let m = &max_omega[start..];
    if m.windows(2).any(|w| !(w[1] > w[0])) || t.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::UnreliableEstimate("max_omega is not strictly increasing in the window".into()));
    }
    let y: Vec<f64> = m.iter().map(|v| 1.0 / v).collect();
    let nf = window as f64;
    let tm = t.iter().sum::<f64>() / nf;
    let ym = y.iter().sum::<f64>() / nf;
    let stt: f64 = t.iter().map(|v| (v - tm).powi(2)).sum();
    let sty: f64 = t.iter().zip(&y).map(|(a, b)| (a - tm) * (b - ym)).sum();
    let b = sty / stt;
    let a = ym - b * tm;
    if !(b < 0.0) {
        return Err(Error::UnreliableEstimate("1/max_omega is not decreasing".into()));
    }
    let ss_res: f64 = t.iter().zip(&y).map(|(tv, yv)| (yv - a - b * tv).powi(2)).sum();
    let ss_tot: f64 = y.iter().map(|v| (v - ym).powi(2)).sum();
    let fit_quality = if ss_tot > 0.0 { 1.0 - ss_res / ss_tot } else { 1.0 };
    Ok(BlowupEstimate { t_star: -a / b, fit_quality, samples: window })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::{preset_initial_data, smooth_bump};
    use crate::kernels::{log_kernel_anti, log_kernel_derivative};
    use crate::quad::{gauss, gl10};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::collections::BTreeMap;

    fn basic(n: usize, l: f64) -> FieldState {
        preset_initial_data("paper-basic", &PeriodicGrid::new(l, n).unwrap(), &BTreeMap::new()).unwrap()
    }

    #[test]
    fn functional_i_examples() {
        let s = basic(128, 2.0 * PI);
        assert!((functional_i(&s).unwrap() - 1.0).abs() <= 1e-8);
        let s3 = basic(128, 3.0);
        assert!((functional_i(&s3).unwrap() - 3.0 / (2.0 * PI)).abs() <= 1e-8);
        let z = FieldState::zero(PeriodicGrid::new(1.0, 16).unwrap());
        assert_eq!(functional_i(&z).unwrap(), 0.0);
        let mut bad = s.clone();
        bad.theta.iter_mut().for_each(|v| *v += 0.5);
        assert!(matches!(functional_i(&bad), Err(Error::Normalization(_))));
    }

    #[test]
    fn functional_i_by_parts_agrees() {
        let g = PeriodicGrid::new(2.0 * PI, 256).unwrap();
        let s = preset_initial_data("quarter-support", &g, &BTreeMap::new()).unwrap();
        let a = functional_i(&s).unwrap();
        let b = functional_i_by_parts(&s).unwrap();
        assert!(a > 0.0);
        assert!((a - b).abs() <= 1e-6 * a.abs(), "{a} {b}");
        let s = basic(256, 2.0 * PI);
        let b = functional_i_by_parts(&s).unwrap();
        assert!((b - 1.0).abs() <= 1e-6);
    }

    #[test]
    fn functional_j_against_fine_quadrature() {
        let s = basic(256, 2.0 * PI);
        let j = functional_j(&s).unwrap();
        // 10^6-node midpoint oracle of (2/pi) int_0^pi sin^2(x/2) sin(x) cot(x/2) dx
        let n = 1_000_000;
        let h = PI / n as f64;
        let mut acc = 0.0;
        for k in 0..n {
            let x = (k as f64 + 0.5) * h;
            acc += (0.5 * x).sin().powi(2) * x.sin() / (0.5 * x).tan();
        }
        let oracle = 2.0 / PI * acc * h;
        assert!((j - oracle).abs() <= 1e-10, "{j} {oracle}");
        assert!(j > 0.0);
        let mut z = s.clone();
        z.omega.iter_mut().for_each(|v| *v = 0.0);
        assert_eq!(functional_j(&z).unwrap(), 0.0);
    }

    fn exp_density(grid: &LogGrid) -> LogState {
        let rho = grid.sample(|x| (-x).exp());
        LogState::from_density(0.0, *grid, vec![0.0; grid.m()], rho).unwrap()
    }

    #[test]
    fn log_functionals_exponential_density() {
        // rho = e^{-xi} on [0, 40]
        let g = LogGrid::new(0.0, 40.0, 160_001).unwrap();
        let s = exp_density(&g);
        let f = functionals_log(&s).unwrap();
        assert!((f.entropy - 1.0).abs() <= 1e-6, "{}", f.entropy);
        assert!((f.f - 1.0).abs() <= 1e-6);
        assert!(f.lemma3_margin.abs() <= 1e-6);
    }

    #[test]
    fn log_functionals_shift_and_signs() {
        let g = LogGrid::new(-6.0, 14.0, 2001).unwrap();
        let mk = |c: f64| {
            let raw = g.sample(|x| smooth_bump(x - c));
            let m = trapezoid(&raw, g.h());
            let rho: Vec<f64> = raw.iter().map(|v| v / m).collect();
            let omega = g.sample(|x| smooth_bump((x - 2.0) / 1.5));
            LogState::from_density(0.0, g, omega, rho).unwrap()
        };
        let a = functionals_log(&mk(2.0)).unwrap();
        let b = functionals_log(&mk(3.5)).unwrap();
        assert!((a.entropy - b.entropy).abs() <= 1e-12);
        assert!((b.f - a.f - 1.5).abs() <= 1e-10);
        assert!((a.f_from_theta - a.f).abs() <= 1e-8);
        assert!(a.g >= 0.0);
        assert!(a.lemma3_margin >= 0.0);
        assert_eq!(a.shift, 0.0);
        let c = functionals_log(&mk(-2.0)).unwrap();
        assert!(c.shift > 0.0);
        assert!(c.lemma3_margin >= 0.0);
        let mut neg = mk(2.0);
        neg.rho[1000] = -0.5;
        assert!(matches!(functionals_log(&neg), Err(Error::Sign(_))));
        let mut zero = mk(2.0);
        zero.rho.iter_mut().for_each(|v| *v = 0.0);
        assert!(matches!(functionals_log(&zero), Err(Error::Degenerate(_))));
    }

    #[test]
    fn quadform_line_examples() {
        let g = LogGrid::new(-8.0, 8.0, 1601).unwrap();
        let q = QuadformLine::new(&g);
        let w = g.sample(|x| smooth_bump((x - 1.0) / 2.0));
        assert_eq!(q.eval(&w, -3.5).unwrap(), 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let norm2: f64 = trapezoid(&w.iter().map(|v| v * v).collect::<Vec<_>>(), g.h());
        for _ in 0..20 {
            let xi = rng.gen_range(-4.0..5.0);
            assert!(q.eval(&w, xi).unwrap() >= -1e-8 * norm2);
        }
    }

    /// Term-by-term evaluation of the two-bump split: a self term
    /// `int int K_a'(eta - zeta) Omega_l Omega_l` (by parts, with the inner
    /// convolution split at its singular point) plus the smooth cross term.
    #[test]
    fn quadform_line_matches_split_decomposition() {
        let (cl, wl) = (-1.0, 0.8);
        let (cr, wr) = (2.0, 0.8);
        let bl = |x: f64| smooth_bump((x - cl) / wl);
        let br = |x: f64| 0.7 * smooth_bump((x - cr) / wr);
        let dbl = |x: f64| {
            let r = (x - cl) / wl;
            if r.abs() < 1.0 {
                let q = 1.0 - r * r;
                bl(x) * (-2.0 * r / (q * q)) / wl
            } else {
                0.0
            }
        };
        let g = LogGrid::new(-6.0, 6.0, 4801).unwrap();
        let w = g.sample(|x| bl(x) + br(x));
        let xi = 0.6;
        let got = QuadformLine::new(&g).eval(&w, xi).unwrap();

        // self term: -int (K_a * Omega_l)(eta) Omega_l'(eta) d eta
        let panels = 64;
        let (a, b) = (cl - wl, cl + wl);
        let inner = |eta: f64| {
            tanh_sinh(|z, _, _| log_kernel_anti(eta - z) * bl(z), a, eta, 1e-14)
                + tanh_sinh(|z, _, _| log_kernel_anti(eta - z) * bl(z), eta, b, 1e-14)
        };
        let mut self_term = 0.0;
        for p in 0..panels {
            let lo = a + (b - a) * p as f64 / panels as f64;
            let hi = a + (b - a) * (p + 1) as f64 / panels as f64;
            self_term -= gauss(|eta| inner(eta) * dbl(eta), lo, hi, gl10());
        }
        // cross term: int int K'(eta - zeta) Omega_r(zeta) Omega_l(eta)
        let mut cross = 0.0;
        for p in 0..panels {
            let lo = a + (b - a) * p as f64 / panels as f64;
            let hi = a + (b - a) * (p + 1) as f64 / panels as f64;
            cross += gauss(
                |eta| {
                    let mut acc = 0.0;
                    for q in 0..panels {
                        let zl = cr - wr + 2.0 * wr * q as f64 / panels as f64;
                        let zh = cr - wr + 2.0 * wr * (q + 1) as f64 / panels as f64;
                        acc += gauss(|z| log_kernel_derivative(eta - z) * br(z), zl, zh, gl10());
                    }
                    acc * bl(eta)
                },
                lo,
                hi,
                gl10(),
            );
        }
        let want = self_term + cross;
        assert!(self_term >= 0.0 && cross >= 0.0);
        assert!((got - want).abs() <= 1e-8, "{got} {want}");
    }

    fn odd_bump_state(g: &PeriodicGrid, c: f64, w: f64, amp: f64) -> Vec<f64> {
        let l = g.length();
        g.sample(|x| {
            let b = |z: f64| smooth_bump((z - c) / w);
            amp * (b(x) - b(l - x) + b(x + l) - b(-x))
        })
    }

    #[test]
    fn quadform_periodic_examples() {
        let l = 2.0 * PI;
        let g = PeriodicGrid::new(l, 256).unwrap();
        let rep = PeriodicQuadform::new(&g, QuadformMethod::Representation);
        let spe = PeriodicQuadform::new(&g, QuadformMethod::Spectral);
        let w = odd_bump_state(&g, 1.3, 0.9, 1.0);
        assert!(rep.eval(&w, l / 2.0).unwrap().abs() <= 1e-15);
        let norm2 = crate::diagnostics::lp_norm(&w, g.dx(), 2.0).powi(2);
        for &a in &[0.0, 0.4, 1.0, 1.7, 2.5] {
            let x = rep.eval(&w, a).unwrap();
            let y = spe.eval(&w, a).unwrap();
            assert!(x >= -1e-6 * norm2);
            assert!((x - y).abs() <= 1e-5 * norm2, "{a} {x} {y}");
        }
        assert!(matches!(rep.eval(&w, -0.1), Err(Error::Domain(_))));
        assert!(matches!(rep.eval(&w, 3.2), Err(Error::Domain(_))));
    }

    #[test]
    fn quadform_cky_closed_form() {
        let n = 200_001;
        let x: Vec<f64> = (0..n).map(|i| i as f64 / (n - 1) as f64).collect();
        let w: Vec<f64> = x.iter().map(|&x| x * (1.0 - x)).collect();
        for &a in &[0.1, 0.25, 0.5] {
            let got = quadform_cky(&w, &x, a).unwrap();
            // int_a^1 x (1-x)^2 dx
            let prim = |x: f64| x * x / 2.0 - 2.0 * x.powi(3) / 3.0 + x.powi(4) / 4.0;
            let want = prim(1.0) - prim(a);
            assert!(got >= 0.0);
            assert!((got - want).abs() <= 1e-10, "{got} {want}");
        }
    }

    #[test]
    fn polarization_identity() {
        let l = 2.0 * PI;
        let g = PeriodicGrid::new(l, 128).unwrap();
        let q = PeriodicQuadform::new(&g, QuadformMethod::Representation);
        let w1 = odd_bump_state(&g, 1.0, 0.6, 1.0);
        let w2 = odd_bump_state(&g, 2.0, 0.7, 0.5);
        let add: Vec<f64> = w1.iter().zip(&w2).map(|(a, b)| a + b).collect();
        let sub: Vec<f64> = w1.iter().zip(&w2).map(|(a, b)| a - b).collect();
        let a = 0.8;
        let lhs = q.eval(&add, a).unwrap() + q.eval(&sub, a).unwrap();
        let rhs = 2.0 * q.eval(&w1, a).unwrap() + 2.0 * q.eval(&w2, a).unwrap();
        assert!((lhs - rhs).abs() <= 1e-10);

        let lg = LogGrid::new(-6.0, 6.0, 601).unwrap();
        let ql = QuadformLine::new(&lg);
        let v1 = lg.sample(|x| smooth_bump(x + 1.0));
        let v2 = lg.sample(|x| 0.3 * smooth_bump((x - 1.0) / 2.0));
        let add: Vec<f64> = v1.iter().zip(&v2).map(|(a, b)| a + b).collect();
        let sub: Vec<f64> = v1.iter().zip(&v2).map(|(a, b)| a - b).collect();
        let lhs = ql.eval(&add, 0.3).unwrap() + ql.eval(&sub, 0.3).unwrap();
        let rhs = 2.0 * ql.eval(&v1, 0.3).unwrap() + 2.0 * ql.eval(&v2, 0.3).unwrap();
        assert!((lhs - rhs).abs() <= 1e-10);
    }

    #[test]
    fn norms_examples() {
        let l = 3.0;
        let g = PeriodicGrid::new(l, 64).unwrap();
        let u = g.sample(|x| (2.0 * PI * x / l).sin());
        assert!((lp_norm(&u, g.dx(), 2.0) - (l / 2.0).sqrt()).abs() <= 1e-13);
        let mut b = BkmIntegrals::default();
        for _ in 0..10 {
            b.update(0.1, [2.0, 3.0, 4.0], [2.0, 3.0, 4.0]);
        }
        assert!((b.ux - 2.0).abs() < 1e-14 && (b.thetax - 3.0).abs() < 1e-14 && (b.omega - 4.0).abs() < 1e-14);
        assert_eq!(bmo_proxy(&[1.0; 16]), 0.0);
        // a step function: whole-interval oscillation is 1/2
        let step: Vec<f64> = (0..16).map(|i| if i < 8 { 0.0 } else { 1.0 }).collect();
        assert!((bmo_proxy(&step) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn time_derivatives_are_exact_for_quadratics() {
        let t = [0.0, 0.1, 0.25, 0.3, 0.7];
        let y: Vec<f64> = t.iter().map(|s| 1.0 + 2.0 * s + 3.0 * s * s).collect();
        let (d1, d2) = time_derivatives(&t, &y);
        for k in 0..t.len() {
            assert!((d1[k] - (2.0 + 6.0 * t[k])).abs() < 1e-12);
            assert!((d2[k] - 6.0).abs() < 1e-10);
        }
    }

    #[test]
    fn blowup_estimate_examples() {
        let t: Vec<f64> = (0..20).map(|k| k as f64 * 0.05).collect();
        let m: Vec<f64> = t.iter().map(|s| 1.0 / (2.0 - s)).collect();
        let e = blowup_time_estimate(&t, &m, 10).unwrap();
        assert!((e.t_star - 2.0).abs() <= 1e-10);
        assert!((e.fit_quality - 1.0).abs() <= 1e-12);
        let m: Vec<f64> = t.iter().map(|s| (2.0 - s).powf(-0.5)).collect();
        let e = blowup_time_estimate(&t, &m, 10).unwrap();
        assert!((e.t_star - 2.0).abs() > 1e-3);
        assert!(e.fit_quality < 1.0);
        assert!(matches!(blowup_time_estimate(&t[..5], &m[..5], 8), Err(Error::UnreliableEstimate(_))));
        let flat = vec![1.0; 20];
        assert!(matches!(blowup_time_estimate(&t, &flat, 8), Err(Error::UnreliableEstimate(_))));
    }

    #[test]
    fn records_round_trip_through_arrays() {
        let mut r = DiagnosticsRecord::empty(0.5);
        r.i = 2.0;
        r.g = -1.0;
        let back = DiagnosticsRecord::from_array(r.to_array());
        assert_eq!(back.t, 0.5);
        assert_eq!(back.get("I"), Some(2.0));
        assert_eq!(back.get("G"), Some(-1.0));
        assert!(back.get("J").unwrap().is_nan());
    }
}
