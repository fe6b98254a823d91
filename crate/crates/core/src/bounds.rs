//! Comparison ODEs behind the blow-up arguments: lower envelopes and
//! blow-up time bounds to hold simulations against.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Why an integration stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Stop {
    Horizon,
    /// The stop predicate fired (a value cap was crossed).
    Event,
    /// The right-hand side overflowed or the step size collapsed.
    Singular,
}

/// Accepted steps of an adaptive integration with Hermite dense output.
#[derive(Debug, Clone, PartialEq)]
pub struct OdeSolution {
    pub t: Vec<f64>,
    pub y: Vec<Vec<f64>>,
    pub dy: Vec<Vec<f64>>,
    pub stop: Stop,
}

impl OdeSolution {
    pub fn t_final(&self) -> f64 {
        *self.t.last().unwrap()
    }

    pub fn last(&self) -> &[f64] {
        self.y.last().unwrap()
    }

    /// Cubic Hermite interpolation of component `c`; `None` outside the
    /// integrated interval.
    pub fn value(&self, t: f64, c: usize) -> Option<f64> {
        let n = self.t.len();
        if !(t >= self.t[0] && t <= self.t[n - 1]) {
            return None;
        }
        let k = self.t.partition_point(|&s| s <= t).clamp(1, n.max(2) - 1);
        if n == 1 {
            return Some(self.y[0][c]);
        }
        let (t0, t1) = (self.t[k - 1], self.t[k]);
        let h = t1 - t0;
        let s = (t - t0) / h;
        let (y0, y1) = (self.y[k - 1][c], self.y[k][c]);
        let (d0, d1) = (self.dy[k - 1][c], self.dy[k][c]);
        let h00 = (1.0 + 2.0 * s) * (1.0 - s) * (1.0 - s);
        let h10 = s * (1.0 - s) * (1.0 - s);
        let h01 = s * s * (3.0 - 2.0 * s);
        let h11 = s * s * (s - 1.0);
        Some(h00 * y0 + h10 * h * d0 + h01 * y1 + h11 * h * d1)
    }
}

/// Error tolerances of [`dopri5`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerance {
    pub rtol: f64,
    pub atol: f64,
}

impl Default for Tolerance {
    fn default() -> Self {
        Self { rtol: 1e-12, atol: 1e-14 }
    }
}

const C: [f64; 7] = [0.0, 0.2, 0.3, 0.8, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [0.2, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

/// Dormand-Prince 5(4) with PI-free step control. Integrates from `t0`
/// until `t_end`, until `stop(t, y)` is true, or until the solution
/// overflows.
pub fn dopri5<F, S>(f: F, t0: f64, y0: &[f64], t_end: f64, tol: Tolerance, stop: S) -> OdeSolution
where
    F: Fn(f64, &[f64]) -> Vec<f64>,
    S: Fn(f64, &[f64]) -> bool,
{
    let n = y0.len();
    let mut t = t0;
    let mut y = y0.to_vec();
    let mut k0 = f(t, &y);
    let mut out = OdeSolution { t: vec![t], y: vec![y.clone()], dy: vec![k0.clone()], stop: Stop::Horizon };
    if !k0.iter().all(|v| v.is_finite()) {
        out.stop = Stop::Singular;
        return out;
    }
    if stop(t, &y) {
        out.stop = Stop::Event;
        return out;
    }
    let span = t_end - t0;
    let mut h = (1e-3 * span).min(span);
    let h_min = 1e-15 * span.max(1.0);
    loop {
        if t >= t_end {
            out.stop = Stop::Horizon;
            return out;
        }
        h = h.min(t_end - t);
        let mut k = vec![k0.clone()];
        let mut finite = true;
        for s in 1..7 {
            let ys: Vec<f64> = (0..n)
                .map(|i| y[i] + h * (0..s).map(|j| A[s][j] * k[j][i]).sum::<f64>())
                .collect();
            let ks = f(t + C[s] * h, &ys);
            finite &= ks.iter().chain(&ys).all(|v| v.is_finite());
            k.push(ks);
            if !finite {
                break;
            }
        }
        if !finite {
            h *= 0.25;
            if h < h_min {
                out.stop = Stop::Singular;
                return out;
            }
            continue;
        }
        let y_new: Vec<f64> = (0..n)
            .map(|i| y[i] + h * (0..6).map(|j| A[6][j] * k[j][i]).sum::<f64>())
            .collect();
        let mut err = 0.0f64;
        for i in 0..n {
            let e = h * (0..7).map(|j| E[j] * k[j][i]).sum::<f64>();
            let sc = tol.atol + tol.rtol * y[i].abs().max(y_new[i].abs());
            err = err.max((e / sc).abs());
        }
        if err <= 1.0 {
            t += h;
            y = y_new;
            k0 = k[6].clone();
            out.t.push(t);
            out.y.push(y.clone());
            out.dy.push(k0.clone());
            if stop(t, &y) {
                out.stop = Stop::Event;
                return out;
            }
        }
        let fac = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
        h *= if err <= 1.0 { fac } else { fac.min(1.0) };
        if h < h_min {
            out.stop = Stop::Singular;
            return out;
        }
    }
}

/// Which comparison system an envelope integrates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BoundKind {
    Gengron,
    Entropy,
    Fg,
}

/// Equality solution of a comparison system.
#[derive(Debug, Clone, PartialEq)]
pub struct Envelope {
    pub kind: BoundKind,
    /// Names of the solution components, in order.
    pub columns: Vec<&'static str>,
    pub solution: OdeSolution,
    /// First time the leading component exceeds the cap (blow-up proxy).
    pub t_star: Option<f64>,
    /// Rigorous upper bound on the blow-up time, when the argument gives one.
    pub t_star_upper: Option<f64>,
}

impl Envelope {
    /// Leading component (I, entropy, or F) at time `t`.
    pub fn value(&self, t: f64) -> Option<f64> {
        self.solution.value(t, 0)
    }
}

/// Value cap used as the blow-up proxy unless overridden.
pub const DEFAULT_CAP: f64 = 1e3;

fn positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::Parameter(format!("{name} must be positive and finite, got {v}")))
    }
}

fn t_star_of(sol: &OdeSolution) -> Option<f64> {
    match sol.stop {
        Stop::Event | Stop::Singular => Some(sol.t_final()),
        Stop::Horizon => None,
    }
}

/// Blow-up time of the comparison function `h` started at `t0`:
/// `t0 + 3 (alpha t0)^{-1/3} (3 c0 / 2)^{-2/3}`.
pub fn closed_form_bound(alpha: f64, c0: f64, t0: f64) -> f64 {
    t0 + 3.0 * (alpha * t0).powf(-1.0 / 3.0) * (1.5 * c0).powf(-2.0 / 3.0)
}

/// Minimizer of [`closed_form_bound`] over `t0 > 0`.
pub fn optimal_t0(alpha: f64, c0: f64) -> f64 {
    (alpha.powf(-1.0 / 3.0) * (1.5 * c0).powf(-2.0 / 3.0)).powf(0.75)
}

/// Golden-section minimization of `f` on `[a, b]`.
pub fn golden_section<F: Fn(f64) -> f64>(f: F, mut a: f64, mut b: f64, tol: f64) -> f64 {
    let r = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - r * (b - a);
    let mut d = a + r * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while (b - a).abs() > tol * (1.0 + a.abs() + b.abs()) {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - r * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + r * (b - a);
            fd = f(d);
        }
    }
    0.5 * (a + b)
}

/// Upper bound on the blow-up time from `I(0) = i0`, minimizing the
/// closed-form bound over `t0` in `(0, horizon]`.
pub fn t_star_upper(i0: f64, c0: f64, horizon: f64) -> Result<f64> {
    if !(i0 > 0.0) {
        return Err(Error::Inapplicable(format!("I(0) = {i0} must be positive")));
    }
    positive("c0", c0)?;
    positive("horizon", horizon)?;
    let alpha = i0 * i0;
    let t0 = golden_section(|t| closed_form_bound(alpha, c0, t), 1e-12 * horizon, horizon, 1e-12);
    Ok(closed_form_bound(alpha, c0, t0))
}

/// Equality case `I' = J0 + c0 int_0^t I^2` of the Grönwall-type chain.
pub fn gengron_envelope(i0: f64, j0: f64, c0: f64, horizon: f64) -> Result<Envelope> {
    gengron_envelope_with(i0, j0, c0, horizon, DEFAULT_CAP, Tolerance::default())
}

pub fn gengron_envelope_with(i0: f64, j0: f64, c0: f64, horizon: f64, cap: f64, tol: Tolerance) -> Result<Envelope> {
    if !(i0 > 0.0) {
        return Err(Error::Inapplicable(format!("I(0) = {i0} must be positive")));
    }
    if !(j0 >= 0.0) {
        return Err(Error::Parameter(format!("J(0) must be nonnegative, got {j0}")));
    }
    positive("c0", c0)?;
    positive("horizon", horizon)?;
    positive("cap", cap)?;
    let sol = dopri5(
        |_, y| vec![j0 + c0 * y[1], y[0] * y[0]],
        0.0,
        &[i0, 0.0],
        horizon,
        tol,
        |_, y| y[0] > cap,
    );
    Ok(Envelope {
        kind: BoundKind::Gengron,
        columns: vec!["I", "int_I2"],
        t_star: t_star_of(&sol),
        t_star_upper: Some(t_star_upper(i0, c0, horizon.max(optimal_t0(i0 * i0, c0)))?),
        solution: sol,
    })
}

/// Comparison function `h'' = 2 c0 h (h')^{1/2}`, `h(0) = 0`, `h'(0) = alpha`.
pub fn comparison_h(alpha: f64, c0: f64, horizon: f64, tol: Tolerance) -> Result<OdeSolution> {
    positive("alpha", alpha)?;
    positive("c0", c0)?;
    positive("horizon", horizon)?;
    Ok(dopri5(
        |_, y| vec![y[1], 2.0 * c0 * y[0] * y[1].max(0.0).sqrt()],
        0.0,
        &[0.0, alpha],
        horizon,
        tol,
        |_, y| y[0] > 1e12,
    ))
}

/// Residual of `(h')^{3/2} = alpha^{3/2} + (3/2) c0 h^2`, relative to the
/// size of the terms.
pub fn comparison_invariant(alpha: f64, c0: f64, h: f64, hp: f64) -> f64 {
    let lhs = hp.powf(1.5);
    let rhs = alpha.powf(1.5) + 1.5 * c0 * h * h;
    (lhs - rhs) / lhs.abs().max(rhs.abs()).max(1.0)
}

/// Right-hand side of the entropy comparison `I'' = (2/pi) exp(e^{I-1} - I)`.
pub fn entropy_rhs(i: f64) -> f64 {
    2.0 / PI * ((i - 1.0).exp() - i).exp()
}

/// Equality solution of the entropy inequality.
pub fn entropy_envelope(i0: f64, idot0: f64, horizon: f64) -> Result<Envelope> {
    entropy_envelope_with(i0, idot0, horizon, DEFAULT_CAP, Tolerance::default())
}

pub fn entropy_envelope_with(i0: f64, idot0: f64, horizon: f64, cap: f64, tol: Tolerance) -> Result<Envelope> {
    if !i0.is_finite() || !idot0.is_finite() {
        return Err(Error::Parameter("initial values must be finite".into()));
    }
    if !(idot0 >= 0.0) {
        return Err(Error::Parameter(format!("dI/dt(0) must be nonnegative, got {idot0}")));
    }
    positive("horizon", horizon)?;
    positive("cap", cap)?;
    let sol = dopri5(|_, y| vec![y[1], entropy_rhs(y[0])], 0.0, &[i0, idot0], horizon, tol, |_, y| y[0] > cap);
    Ok(Envelope {
        kind: BoundKind::Entropy,
        columns: vec!["I", "dIdt"],
        t_star: t_star_of(&sol),
        t_star_upper: None,
        solution: sol,
    })
}

/// Equality system `F' = G`, `G' = F^2 / pi`.
pub fn fg_envelope(f0: f64, g0: f64, horizon: f64) -> Result<Envelope> {
    fg_envelope_with(f0, g0, horizon, DEFAULT_CAP, Tolerance::default())
}

pub fn fg_envelope_with(f0: f64, g0: f64, horizon: f64, cap: f64, tol: Tolerance) -> Result<Envelope> {
    if !(f0 >= 0.0) {
        return Err(Error::Inapplicable(format!("F(0) = {f0} must be nonnegative")));
    }
    if !(g0 >= 0.0) {
        return Err(Error::Parameter(format!("G(0) must be nonnegative, got {g0}")));
    }
    positive("horizon", horizon)?;
    positive("cap", cap)?;
    let sol = dopri5(|_, y| vec![y[1], y[0] * y[0] / PI], 0.0, &[f0, g0], horizon, tol, |_, y| y[0] > cap);
    Ok(Envelope {
        kind: BoundKind::Fg,
        columns: vec!["F", "G"],
        t_star: t_star_of(&sol),
        t_star_upper: None,
        solution: sol,
    })
}

/// A comparison problem as given on the command line.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum BoundsProblem {
    Gengron { i0: f64, j0: f64, c0: f64, horizon: f64, cap: f64 },
    Entropy { i0: f64, idot0: f64, horizon: f64, cap: f64 },
    Fg { f0: f64, g0: f64, horizon: f64, cap: f64 },
}

impl BoundsProblem {
    /// Build from `key = value` pairs. Keys: gengron `I0 J0 c0 horizon`,
    /// entropy `I0 Idot0 horizon`, fg `F0 G0 horizon`; all accept `cap`.
    pub fn from_params(kind: &str, params: &BTreeMap<String, f64>) -> Result<Self> {
        let allowed: &[&str] = match kind {
            "gengron" => &["I0", "J0", "c0", "horizon", "cap"],
            "entropy" => &["I0", "Idot0", "horizon", "cap"],
            "fg" => &["F0", "G0", "horizon", "cap"],
            _ => return Err(Error::Parameter(format!("unknown bounds kind `{kind}` (gengron, entropy, fg)"))),
        };
        if let Some(k) = params.keys().find(|k| !allowed.contains(&k.as_str())) {
            return Err(Error::Parameter(format!("unknown key `{k}` for {kind}; expected one of {allowed:?}")));
        }
        let get = |k: &str| -> Result<f64> {
            params.get(k).copied().ok_or_else(|| Error::Parameter(format!("missing key `{k}` for {kind}")))
        };
        let cap = params.get("cap").copied().unwrap_or(DEFAULT_CAP);
        Ok(match kind {
            "gengron" => BoundsProblem::Gengron {
                i0: get("I0")?,
                j0: params.get("J0").copied().unwrap_or(0.0),
                c0: get("c0")?,
                horizon: get("horizon")?,
                cap,
            },
            "entropy" => BoundsProblem::Entropy {
                i0: get("I0")?,
                idot0: params.get("Idot0").copied().unwrap_or(0.0),
                horizon: get("horizon")?,
                cap,
            },
            _ => BoundsProblem::Fg {
                f0: get("F0")?,
                g0: params.get("G0").copied().unwrap_or(0.0),
                horizon: get("horizon")?,
                cap,
            },
        })
    }

    pub fn solve(&self) -> Result<Envelope> {
        let tol = Tolerance::default();
        match *self {
            BoundsProblem::Gengron { i0, j0, c0, horizon, cap } => gengron_envelope_with(i0, j0, c0, horizon, cap, tol),
            BoundsProblem::Entropy { i0, idot0, horizon, cap } => entropy_envelope_with(i0, idot0, horizon, cap, tol),
            BoundsProblem::Fg { f0, g0, horizon, cap } => fg_envelope_with(f0, g0, horizon, cap, tol),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn dopri5_exponential_and_dense_output() {
        let sol = dopri5(|_, y| vec![y[0]], 0.0, &[1.0], 2.0, Tolerance::default(), |_, _| false);
        assert_eq!(sol.stop, Stop::Horizon);
        assert!((sol.last()[0] - 2f64.exp()).abs() <= 1e-10);
        for &t in &[0.3, 1.1, 1.77] {
            assert!((sol.value(t, 0).unwrap() - f64::exp(t)).abs() <= 1e-8);
        }
        assert!(sol.value(2.5, 0).is_none());
    }

    #[test]
    fn closed_form_value() {
        let want = 1.0 + 3.0 * 1.5f64.powf(-2.0 / 3.0);
        assert!((closed_form_bound(1.0, 1.0, 1.0) - want).abs() <= 1e-12);
        assert!((want - 3.2894).abs() < 1e-4);
    }

    #[test]
    fn golden_section_finds_the_closed_form_minimizer() {
        for &(a, c) in &[(1.0, 1.0), (0.3, 2.0), (4.0, 0.05)] {
            let t0 = optimal_t0(a, c);
            let g = golden_section(|t| closed_form_bound(a, c, t), 1e-9, 10.0 * t0, 1e-12);
            assert!((g - t0).abs() <= 1e-6 * t0);
        }
    }

    #[test]
    fn comparison_invariant_holds() {
        for &(alpha, c0) in &[(1.0, 1.0), (0.25, 0.5), (2.0, 2.0 / (4.0 * PI * PI))] {
            let sol = comparison_h(alpha, c0, 50.0, Tolerance::default()).unwrap();
            for (y, _) in sol.y.iter().zip(&sol.t) {
                assert!(comparison_invariant(alpha, c0, y[0], y[1]).abs() <= 1e-8);
            }
            let t_bound = closed_form_bound(alpha, c0, optimal_t0(alpha, c0));
            assert!(sol.t_final() <= t_bound);
        }
    }

    #[test]
    fn gengron_blows_up_before_the_bound() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..100 {
            let i0 = rng.gen_range(0.1..3.0);
            let c0 = rng.gen_range(0.02..2.0);
            let env = gengron_envelope_with(i0, 0.0, c0, 1e4, 1e8, Tolerance::default()).unwrap();
            let ts = env.t_star.expect("equality ODE blows up");
            assert!(ts <= env.t_star_upper.unwrap(), "{i0} {c0} {ts} {:?}", env.t_star_upper);
        }
    }

    #[test]
    fn gengron_integral_form_and_monotone_in_c0() {
        let (i0, j0, c0) = (1.0, 0.5, 2.0 / (4.0 * PI * PI));
        let env = gengron_envelope(i0, j0, c0, 20.0).unwrap();
        let s = &env.solution;
        for k in 0..s.t.len() {
            let resid = s.dy[k][0] - j0 - c0 * s.y[k][1];
            assert!(resid.abs() <= 1e-8 * s.dy[k][0].abs().max(1.0));
        }
        let quick = gengron_envelope(i0, j0, 4.0 * c0, 20.0).unwrap();
        assert!(quick.t_star.unwrap() < env.t_star.unwrap());
        for &t in &[0.5, 1.0, 2.0] {
            assert!(quick.value(t).unwrap() >= env.value(t).unwrap());
        }
        assert!(matches!(gengron_envelope(0.0, 0.0, 1.0, 1.0), Err(Error::Inapplicable(_))));
        assert!(matches!(gengron_envelope(-1.0, 0.0, 1.0, 1.0), Err(Error::Inapplicable(_))));
    }

    #[test]
    fn step_halving_is_invisible() {
        let a = gengron_envelope(1.0, 0.2, 0.3, 2.0).unwrap();
        let b = gengron_envelope_with(1.0, 0.2, 0.3, 2.0, DEFAULT_CAP, Tolerance { rtol: 1e-13, atol: 1e-15 }).unwrap();
        for &t in &[0.5, 1.0, 1.5, 2.0] {
            let (x, y) = (a.value(t).unwrap(), b.value(t).unwrap());
            assert!((x - y).abs() <= 1e-8 * y.abs());
        }
    }

    #[test]
    fn entropy_envelope_properties() {
        assert!((entropy_rhs(1.0) - 2.0 / PI).abs() <= 1e-15);
        let e = entropy_envelope(1.0, 0.0, 50.0).unwrap();
        assert!(e.t_star.is_some());
        let s = &e.solution;
        let ts: Vec<f64> = (0..200).map(|k| k as f64 * 0.95 * e.t_star.unwrap() / 199.0).collect();
        let v: Vec<f64> = ts.iter().map(|&t| s.value(t, 0).unwrap()).collect();
        for k in 1..v.len() - 1 {
            assert!(v[k + 1] - 2.0 * v[k] + v[k - 1] >= -1e-10);
            assert!(v[k + 1] >= v[k]);
        }
        let later = entropy_envelope(2.0, 0.0, 50.0).unwrap();
        assert!(later.t_star.unwrap() < e.t_star.unwrap());
    }

    #[test]
    fn fg_envelope_properties() {
        let z = fg_envelope(0.0, 0.0, 10.0).unwrap();
        assert!(z.t_star.is_none());
        assert!(z.solution.y.iter().all(|y| y[0] == 0.0 && y[1] == 0.0));
        let a = fg_envelope(1.0, 0.0, 100.0).unwrap();
        let b = fg_envelope(0.5, 0.0, 100.0).unwrap();
        assert!(a.t_star.unwrap() < b.t_star.unwrap());
        for w in a.solution.y.windows(2) {
            assert!(w[1][1] >= w[0][1]);
        }
        assert!(matches!(fg_envelope(-1.0, 0.0, 1.0), Err(Error::Inapplicable(_))));
    }

    #[test]
    fn problems_from_params() {
        let mut p = BTreeMap::new();
        p.insert("I0".to_string(), 1.0);
        p.insert("c0".to_string(), 1.0);
        p.insert("horizon".to_string(), 10.0);
        let e = BoundsProblem::from_params("gengron", &p).unwrap().solve().unwrap();
        assert!(e.t_star.is_some());
        p.insert("bogus".to_string(), 1.0);
        assert!(BoundsProblem::from_params("gengron", &p).is_err());
        assert!(BoundsProblem::from_params("nope", &BTreeMap::new()).is_err());
        assert!(BoundsProblem::from_params("fg", &BTreeMap::new()).is_err());
    }
}
