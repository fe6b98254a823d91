//! Field states, the odd symmetry class, initial-data presets and the
//! logarithmic change of variables `x = exp(-xi)`.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::biotsavart::{velocity_periodic, BiotSavartMethod, VelocityField};
use crate::error::{check_len, Error, Result};
use crate::grid::{apply_multiplier, spectral_derivative, LogGrid, PeriodicGrid, TrigInterpolant};
use crate::quad::{CubicIntegrator, Ghost};

/// The seven rows of the model table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Model {
    Euler2d,
    Clm,
    DeGregorio,
    Osw { a: f64 },
    Ccf,
    Hl,
    Cky,
}

impl Model {
    pub fn name(&self) -> &'static str {
        match self {
            Model::Euler2d => "euler2d",
            Model::Clm => "clm",
            Model::DeGregorio => "de-gregorio",
            Model::Osw { .. } => "osw",
            Model::Ccf => "ccf",
            Model::Hl => "hl",
            Model::Cky => "cky",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Domain {
    Periodic,
    LogLine,
}

/// Which model to evolve, on which domain, with which velocity law.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub model: Model,
    pub domain: Domain,
    pub biot_savart: BiotSavartMethod,
}

impl ModelSpec {
    pub fn new(model: Model, domain: Domain, biot_savart: BiotSavartMethod) -> Result<Self> {
        let spec = Self { model, domain, biot_savart };
        spec.validate()?;
        Ok(spec)
    }

    pub fn periodic(model: Model) -> Self {
        Self { model, domain: Domain::Periodic, biot_savart: BiotSavartMethod::Spectral }
    }

    pub fn log_line(model: Model) -> Self {
        Self { model, domain: Domain::LogLine, biot_savart: BiotSavartMethod::Spectral }
    }

    pub fn validate(&self) -> Result<()> {
        if let Model::Osw { a } = self.model {
            if !a.is_finite() {
                return Err(Error::Spec(format!("OSW parameter must be finite, got {a}")));
            }
        }
        if let BiotSavartMethod::Mollified { a_layer } = self.biot_savart {
            if !(a_layer > 0.0) || !a_layer.is_finite() {
                return Err(Error::Parameter(format!("a_layer must be positive, got {a_layer}")));
            }
        }
        match (self.domain, self.model) {
            (Domain::Periodic, Model::Cky) => {
                Err(Error::Spec("the CKY model is evolved in log coordinates (domain = log-line)".into()))
            }
            (Domain::LogLine, Model::Hl | Model::Cky) => {
                if self.biot_savart != BiotSavartMethod::Spectral {
                    return Err(Error::Spec("log-line runs use the log-coordinate kernel; biot_savart must be spectral".into()));
                }
                Ok(())
            }
            (Domain::LogLine, m) => Err(Error::Spec(format!("model {} is only available on the periodic domain", m.name()))),
            (Domain::Periodic, _) => Ok(()),
        }
    }
}

/// Time-stamped `(omega, theta)` samples on a periodic grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldState {
    pub t: f64,
    pub grid: PeriodicGrid,
    pub omega: Vec<f64>,
    pub theta: Vec<f64>,
}

impl FieldState {
    pub fn new(t: f64, grid: PeriodicGrid, omega: Vec<f64>, theta: Vec<f64>) -> Result<Self> {
        check_len(grid.n(), omega.len())?;
        check_len(grid.n(), theta.len())?;
        Ok(Self { t, grid, omega, theta })
    }

    pub fn zero(grid: PeriodicGrid) -> Self {
        Self { t: 0.0, grid, omega: vec![0.0; grid.n()], theta: vec![0.0; grid.n()] }
    }

    pub fn theta_x(&self) -> Vec<f64> {
        spectral_derivative(&self.theta, &self.grid).expect("state lengths are checked")
    }

    pub fn velocity(&self, method: BiotSavartMethod) -> Result<VelocityField> {
        velocity_periodic(&self.omega, &self.grid, method)
    }

    /// Largest violation of `omega(L - x) = -omega(x)`, `theta(L - x) = theta(x)`.
    pub fn symmetry_defect(&self) -> f64 {
        let n = self.grid.n();
        let mut d = self.omega[0].abs();
        for j in 1..n {
            d = d.max((self.omega[j] + self.omega[n - j]).abs());
            d = d.max((self.theta[j] - self.theta[n - j]).abs());
        }
        d
    }

    pub fn is_finite(&self) -> bool {
        self.omega.iter().chain(&self.theta).all(|v| v.is_finite())
    }
}

/// `(Omega, Theta, rho)` on a log grid, with `rho = Theta_xi`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogState {
    pub t: f64,
    pub grid: LogGrid,
    pub omega: Vec<f64>,
    pub theta: Vec<f64>,
    pub rho: Vec<f64>,
    /// Trapezoid integral of `rho`.
    pub mass: f64,
}

impl LogState {
    /// Build a state from `Omega` and `rho`; `Theta = -int_xi^inf rho`.
    pub fn from_density(t: f64, grid: LogGrid, omega: Vec<f64>, rho: Vec<f64>) -> Result<Self> {
        check_len(grid.m(), omega.len())?;
        check_len(grid.m(), rho.len())?;
        let theta = theta_from_density(&rho, &grid);
        let mass = trapezoid(&rho, grid.h());
        Ok(Self { t, grid, omega, theta, rho, mass })
    }

    pub fn is_finite(&self) -> bool {
        self.omega.iter().chain(&self.rho).all(|v| v.is_finite())
    }
}

pub(crate) fn trapezoid(f: &[f64], h: f64) -> f64 {
    let n = f.len();
    if n < 2 {
        return 0.0;
    }
    h * (f.iter().sum::<f64>() - 0.5 * (f[0] + f[n - 1]))
}

/// `-int_{xi_i}^{xi_max} rho` at every node (cubic cumulative integration).
pub fn theta_from_density(rho: &[f64], grid: &LogGrid) -> Vec<f64> {
    let integ = CubicIntegrator::new(rho, grid.xi_min(), grid.h(), Ghost::Zero, Ghost::Zero);
    let total = integ.total();
    (0..grid.m())
        .map(|i| -(total - integ.integral(grid.xi_min(), grid.node(i))))
        .collect()
}

/// `exp(1 - 1/(1 - r^2))` on `|r| < 1`, zero elsewhere; equals 1 at r = 0.
pub fn smooth_bump(r: f64) -> f64 {
    if r.abs() < 1.0 {
        (1.0 - 1.0 / (1.0 - r * r)).exp()
    } else {
        0.0
    }
}

fn param(params: &BTreeMap<String, f64>, key: &str, default: f64) -> f64 {
    params.get(key).copied().unwrap_or(default)
}

fn nonnegative(params: &BTreeMap<String, f64>, key: &str, default: f64) -> Result<f64> {
    let v = param(params, key, default);
    if !v.is_finite() || v < 0.0 {
        return Err(Error::InvalidData(format!(
            "{key} = {v} breaks the sign condition omega0, theta0_x >= 0 on [0, L/2]"
        )));
    }
    Ok(v)
}

/// Names accepted by [`preset_initial_data`].
pub const PERIODIC_PRESETS: [&str; 3] = ["paper-basic", "quarter-support", "custom-modes"];

/// Initial data in the odd symmetry class.
///
/// * `paper-basic`: `omega0 = A sin(2 mu x)`, `theta0 = B sin^2(mu x)`.
/// * `quarter-support`: `omega0 = A sin(2 mu x) chi(4x/L)`, `theta0_x` the
///   same profile, scaled so that `max theta0 = B`; both vanish on `[L/4, 3L/4]`.
/// * `custom-modes`: `omega0 = sum a_k sin(2 pi k x / L)`,
///   `theta0 = sum b_k sin^2(pi k x / L)` from keys `a1, a2, ...`, `b1, b2, ...`.
pub fn preset_initial_data(name: &str, grid: &PeriodicGrid, params: &BTreeMap<String, f64>) -> Result<FieldState> {
    let l = grid.length();
    let mu = grid.mu();
    let (omega, theta) = match name {
        "paper-basic" => {
            let a = nonnegative(params, "A", 1.0)?;
            let b = nonnegative(params, "B", 1.0)?;
            (grid.sample(|x| a * (2.0 * mu * x).sin()), grid.sample(|x| b * (mu * x).sin().powi(2)))
        }
        "quarter-support" => {
            let a = nonnegative(params, "A", 1.0)?;
            let b = nonnegative(params, "B", 1.0)?;
            let profile = |x: f64| {
                let z = if x < 0.5 * l { x } else { x - l };
                (2.0 * mu * z).sin() * smooth_bump(4.0 * z / l)
            };
            let omega = grid.sample(|x| a * profile(x));
            let thx = grid.sample(profile);
            let mut theta = antiderivative(&thx, grid);
            let t0 = theta[0];
            theta.iter_mut().for_each(|v| *v -= t0);
            let peak = theta.iter().fold(0.0f64, |m, v| m.max(*v));
            theta.iter_mut().for_each(|v| *v *= b / peak);
            (omega, theta)
        }
        "custom-modes" => {
            let mut omega = vec![0.0; grid.n()];
            let mut theta = vec![0.0; grid.n()];
            for (key, &v) in params {
                let (kind, k) = key.split_at(1);
                let k: usize = k
                    .parse()
                    .map_err(|_| Error::InvalidData(format!("custom-modes key `{key}` is not a1.. or b1..")))?;
                if k == 0 || !v.is_finite() {
                    return Err(Error::InvalidData(format!("custom-modes key `{key}` out of range")));
                }
                let kf = k as f64;
                for (j, x) in grid.nodes().into_iter().enumerate() {
                    match kind {
                        "a" => omega[j] += v * (2.0 * PI * kf * x / l).sin(),
                        "b" => theta[j] += v * (PI * kf * x / l).sin().powi(2),
                        _ => return Err(Error::InvalidData(format!("custom-modes key `{key}` is not a1.. or b1.."))),
                    }
                }
            }
            let state = FieldState::new(0.0, *grid, omega.clone(), theta.clone())?;
            check_sign_conditions(&state)?;
            (omega, theta)
        }
        other => return Err(Error::UnknownPreset(other.to_string())),
    };
    FieldState::new(0.0, *grid, omega, theta)
}

fn check_sign_conditions(state: &FieldState) -> Result<()> {
    let half = state.grid.half();
    let thx = state.theta_x();
    let wmax = state.omega.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let tmax = thx.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    for j in 0..=half {
        if state.omega[j] < -1e-12 * wmax.max(1e-300) || thx[j] < -1e-10 * tmax.max(1e-300) {
            return Err(Error::InvalidData(format!(
                "sign condition omega0, theta0_x >= 0 fails at x = {}",
                state.grid.node(j)
            )));
        }
    }
    Ok(())
}

/// Periodic antiderivative of zero-mean samples (the mean mode is dropped).
fn antiderivative(f: &[f64], grid: &PeriodicGrid) -> Vec<f64> {
    let n = grid.n() as i64;
    let scale = 2.0 * PI / grid.length();
    apply_multiplier(f, |k| {
        if k == 0 || 2 * k.abs() == n {
            Complex64::new(0.0, 0.0)
        } else {
            Complex64::new(0.0, -1.0 / (k as f64 * scale))
        }
    })
}

/// Names accepted by [`preset_log_data`].
pub const LOG_PRESETS: [&str; 1] = ["log-bump"];

/// Log-coordinate data: unit-mass `rho0 = c chi((xi - rho_center)/rho_width)`
/// and `Omega0 = omega_amp chi((xi - omega_center)/omega_width)`.
pub fn preset_log_data(name: &str, grid: &LogGrid, params: &BTreeMap<String, f64>) -> Result<LogState> {
    if name != "log-bump" {
        return Err(Error::UnknownPreset(name.to_string()));
    }
    let rc = param(params, "rho_center", 2.0);
    let rw = param(params, "rho_width", 1.0);
    let oc = param(params, "omega_center", 1.0);
    let ow = param(params, "omega_width", 1.0);
    let amp = nonnegative(params, "omega_amp", 1.0)?;
    if !(rw > 0.0) || !(ow > 0.0) {
        return Err(Error::InvalidData("bump widths must be positive".into()));
    }
    let inside = |c: f64, w: f64| c - w > grid.xi_min() + 2.0 * grid.h() && c + w < grid.xi_max() - 2.0 * grid.h();
    if !inside(rc, rw) || !inside(oc, ow) {
        return Err(Error::Truncation("initial bumps must lie strictly inside the log grid".into()));
    }
    let raw = grid.sample(|xi| smooth_bump((xi - rc) / rw));
    let m = trapezoid(&raw, grid.h());
    let rho: Vec<f64> = raw.iter().map(|v| v / m).collect();
    let omega = grid.sample(|xi| amp * smooth_bump((xi - oc) / ow));
    LogState::from_density(0.0, *grid, omega, rho)
}

/// Project onto the symmetry class: `omega` odd, `theta` even with `theta(0) = 0`.
pub fn enforce_symmetry(state: &FieldState) -> FieldState {
    let mut out = state.clone();
    project_symmetric(&mut out.omega, &mut out.theta);
    out
}

pub(crate) fn project_symmetric(omega: &mut [f64], theta: &mut [f64]) {
    let n = omega.len();
    omega[0] = 0.0;
    for j in 1..=n / 2 {
        let a = 0.5 * (omega[j] - omega[n - j]);
        omega[j] = a;
        omega[n - j] = -a;
        let b = 0.5 * (theta[j] + theta[n - j]);
        theta[j] = b;
        theta[n - j] = b;
    }
    if n % 2 == 0 {
        omega[n / 2] = 0.0;
    }
    let t0 = theta[0];
    theta.iter_mut().for_each(|v| *v -= t0);
}

/// Log-coordinate view of arbitrary profiles: `Omega(xi) = omega(x)`,
/// `Theta(xi) = -theta(x) + theta(0)`, `rho(xi) = x theta_x(x)` at `x = exp(-xi)`.
pub fn to_log_coordinates_with<W, T, D>(
    omega: W,
    theta: T,
    theta_x: D,
    half_length: f64,
    t: f64,
    grid_out: &LogGrid,
) -> Result<LogState>
where
    W: Fn(f64) -> f64,
    T: Fn(f64) -> f64,
    D: Fn(f64) -> f64,
{
    let x_max = (-grid_out.xi_min()).exp();
    if x_max > half_length * (1.0 + 1e-14) {
        return Err(Error::Domain(format!(
            "exp(-xi_min) = {x_max} exceeds the half period {half_length}"
        )));
    }
    let theta0 = theta(0.0);
    let xs: Vec<f64> = grid_out.nodes().iter().map(|xi| (-xi).exp()).collect();
    let omega_v = xs.iter().map(|&x| omega(x)).collect();
    let theta_v: Vec<f64> = xs.iter().map(|&x| -theta(x) + theta0).collect();
    let rho: Vec<f64> = xs.iter().map(|&x| x * theta_x(x)).collect();
    let mass = trapezoid(&rho, grid_out.h());
    Ok(LogState { t, grid: *grid_out, omega: omega_v, theta: theta_v, rho, mass })
}

/// Log-coordinate view of a periodic state restricted to `(0, L/2]`.
pub fn to_log_coordinates(state: &FieldState, grid_out: &LogGrid) -> Result<LogState> {
    let w = TrigInterpolant::new(&state.omega, &state.grid)?;
    let th = TrigInterpolant::new(&state.theta, &state.grid)?;
    let thx = th.derivative();
    to_log_coordinates_with(
        |x| w.eval(x),
        |x| th.eval(x),
        |x| thx.eval(x),
        0.5 * state.grid.length(),
        state.t,
        grid_out,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::biotsavart::velocity_periodic;
    use proptest::prelude::*;

    fn params(kv: &[(&str, f64)]) -> BTreeMap<String, f64> {
        kv.iter().map(|(k, v)| (k.to_string(), *v)).collect()
    }

    #[test]
    fn paper_basic_preset() {
        let g = PeriodicGrid::new(2.0 * PI, 64).unwrap();
        let s = preset_initial_data("paper-basic", &g, &params(&[("A", 1.0), ("B", 1.0)])).unwrap();
        // x = pi/2 is node 16
        assert!((s.omega[16] - 1.0).abs() < 1e-15);
        assert_eq!(s.theta[0], 0.0);
        assert!(s.symmetry_defect() <= 1e-14);
        assert!(matches!(
            preset_initial_data("paper-basic", &g, &params(&[("A", -1.0)])),
            Err(Error::InvalidData(_))
        ));
        assert!(matches!(preset_initial_data("bogus", &g, &BTreeMap::new()), Err(Error::UnknownPreset(_))));
    }

    #[test]
    fn quarter_support_preset() {
        let l = 2.0 * PI;
        let g = PeriodicGrid::new(l, 256).unwrap();
        let s = preset_initial_data("quarter-support", &g, &BTreeMap::new()).unwrap();
        for j in 0..=g.half() {
            let x = g.node(j);
            if x >= l / 4.0 {
                assert!(s.omega[j].abs() <= 1e-14);
            }
            assert!(s.omega[j] >= 0.0);
        }
        let thx = s.theta_x();
        for j in 0..=g.half() {
            assert!(thx[j] >= -1e-10);
            if g.node(j) >= l / 4.0 + 0.1 {
                assert!(thx[j].abs() <= 1e-10);
            }
        }
        assert_eq!(s.theta[0], 0.0);
        assert!(s.symmetry_defect() <= 1e-13);
        let tmax = s.theta.iter().fold(0.0f64, |m, v| m.max(*v));
        assert!((tmax - 1.0).abs() < 1e-12);
    }

    #[test]
    fn custom_modes_preset() {
        let g = PeriodicGrid::new(2.0 * PI, 64).unwrap();
        let s = preset_initial_data("custom-modes", &g, &params(&[("a1", 1.0), ("a2", 0.3), ("b1", 2.0)])).unwrap();
        assert!(s.symmetry_defect() <= 1e-14);
        let bad = preset_initial_data("custom-modes", &g, &params(&[("a1", 0.1), ("a2", 1.0)]));
        assert!(matches!(bad, Err(Error::InvalidData(_))));
        let bad = preset_initial_data("custom-modes", &g, &params(&[("zz", 1.0)]));
        assert!(matches!(bad, Err(Error::InvalidData(_))));
    }

    #[test]
    fn symmetry_projection() {
        let g = PeriodicGrid::new(2.0 * PI, 64).unwrap();
        let s = preset_initial_data("paper-basic", &g, &BTreeMap::new()).unwrap();
        let p = enforce_symmetry(&s);
        for j in 0..64 {
            assert!((p.omega[j] - s.omega[j]).abs() <= 1e-15);
            assert!((p.theta[j] - s.theta[j]).abs() <= 1e-15);
        }
        let mut shifted = s.clone();
        shifted.omega.iter_mut().for_each(|v| *v += 0.1);
        let p = enforce_symmetry(&shifted);
        // reflection-average oracle
        for j in 0..64 {
            let want = 0.5 * (shifted.omega[j] - shifted.omega[(64 - j) % 64]);
            assert!((p.omega[j] - want).abs() <= 1e-15);
        }
        assert!(p.symmetry_defect() <= 1e-14);
        let q = enforce_symmetry(&p);
        assert_eq!(p, q);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn projection_is_idempotent(v in proptest::collection::vec(-5.0f64..5.0, 32), w in proptest::collection::vec(-5.0f64..5.0, 32)) {
            let g = PeriodicGrid::new(1.0, 32).unwrap();
            let s = FieldState::new(0.0, g, v, w).unwrap();
            let p = enforce_symmetry(&s);
            let q = enforce_symmetry(&p);
            for j in 0..32 {
                prop_assert!((p.omega[j] - q.omega[j]).abs() <= 1e-15);
                prop_assert!((p.theta[j] - q.theta[j]).abs() <= 1e-15);
            }
            prop_assert!(p.symmetry_defect() <= 1e-14);
        }
    }

    #[test]
    fn log_coordinates_closed_forms() {
        let g = LogGrid::new(0.0, 4.0, 41).unwrap();
        let s = to_log_coordinates_with(|_| 0.0, |x| x, |_| 1.0, 1.0, 0.0, &g).unwrap();
        // xi = 1 is node 10
        assert!((s.theta[10] + (-1.0f64).exp()).abs() < 1e-15);
        assert!((s.rho[10] - (-1.0f64).exp()).abs() < 1e-15);
        let bad = LogGrid::new(-2.0, 4.0, 41).unwrap();
        assert!(matches!(to_log_coordinates_with(|_| 0.0, |x| x, |_| 1.0, 1.0, 0.0, &bad), Err(Error::Domain(_))));
    }

    #[test]
    fn log_coordinates_of_periodic_state() {
        let l = 2.0 * PI;
        let g = PeriodicGrid::new(l, 256).unwrap();
        let s = preset_initial_data("paper-basic", &g, &BTreeMap::new()).unwrap();
        let lg = LogGrid::new(-(l / 2.0).ln(), 12.0, 512).unwrap();
        let ls = to_log_coordinates(&s, &lg).unwrap();
        let mu = g.mu();
        for i in 0..lg.m() {
            let x = (-lg.node(i)).exp();
            assert!((ls.omega[i] - (2.0 * mu * x).sin()).abs() <= 1e-12);
            assert!((ls.theta[i] + (mu * x).sin().powi(2)).abs() <= 1e-12);
            let want = x * mu * (2.0 * mu * x).sin();
            assert!((ls.rho[i] - want).abs() <= 1e-6 * want.abs() + 1e-13);
            assert!(ls.theta[i] <= 1e-15);
            if i > 0 {
                assert!(ls.theta[i] >= ls.theta[i - 1] - 1e-14);
            }
        }
        // velocity sign on the half period, as used by U = -u/x >= 0
        let v = velocity_periodic(&s.omega, &g, BiotSavartMethod::Spectral).unwrap();
        assert!(v.u[..=g.half()].iter().all(|&u| u <= 1e-12));
    }

    #[test]
    fn log_preset_and_density() {
        let g = LogGrid::new(-4.0, 12.0, 3201).unwrap();
        let s = preset_log_data("log-bump", &g, &BTreeMap::new()).unwrap();
        assert!((s.mass - 1.0).abs() < 1e-14);
        assert!(s.rho.iter().all(|&r| r >= 0.0));
        assert!(s.omega.iter().all(|&r| r >= 0.0));
        // Theta = -int_xi^inf rho, against adaptive quadrature of the raw bump
        let m = trapezoid(&g.sample(|y| smooth_bump(y - 2.0)), g.h());
        for i in 0..g.m() {
            let xi = g.node(i);
            let want = if xi < 3.0 {
                -crate::quad::tanh_sinh(|y, _, _| smooth_bump(y - 2.0), xi.max(1.0), 3.0, 1e-14) / m
            } else {
                0.0
            };
            assert!((s.theta[i] - want).abs() <= 1e-8, "{xi} {} {want}", s.theta[i]);
        }
        assert!(matches!(preset_log_data("bogus", &g, &BTreeMap::new()), Err(Error::UnknownPreset(_))));
        let far = params(&[("rho_center", 11.5)]);
        assert!(matches!(preset_log_data("log-bump", &g, &far), Err(Error::Truncation(_))));
    }

    #[test]
    fn model_spec_validation() {
        assert!(ModelSpec::new(Model::Cky, Domain::Periodic, BiotSavartMethod::Spectral).is_err());
        assert!(ModelSpec::new(Model::Cky, Domain::LogLine, BiotSavartMethod::Spectral).is_ok());
        assert!(ModelSpec::new(Model::Clm, Domain::LogLine, BiotSavartMethod::Spectral).is_err());
        assert!(ModelSpec::new(Model::Osw { a: f64::NAN }, Domain::Periodic, BiotSavartMethod::Spectral).is_err());
        assert!(ModelSpec::new(Model::Hl, Domain::Periodic, BiotSavartMethod::Mollified { a_layer: -1.0 }).is_err());
    }
}
