//! Time integration of the model family: tendencies, RK4 steps, adaptive
//! runs with resolution monitoring, and checkpoint/restart.

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::biotsavart::{check_compact, hilbert_ux, velocity_periodic, LogKernel, LogVelocity, VelocityField};
use crate::diagnostics::{
    check_density_sign, fill_margins, log_record, norms_and_bounds, sup_norm, BkmIntegrals, DiagnosticsRecord, RunBaseline,
};
use crate::error::{Error, Result};
use crate::fields::{project_symmetric, Domain, FieldState, LogState, Model, ModelSpec};
use crate::grid::{apply_multiplier, spectral_derivative, spectrum_report, PeriodicGrid};

use num_complex::Complex64;

/// Step-size and resolution controls.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StepControl {
    pub cfl: f64,
    pub dt_min: f64,
    pub dt_max: f64,
    pub tail_threshold: f64,
    pub dealias: bool,
    /// Project onto the odd-omega / even-theta class after every step.
    pub symmetric: bool,
}

impl Default for StepControl {
    fn default() -> Self {
        Self { cfl: 0.4, dt_min: 1e-10, dt_max: 1e-2, tail_threshold: 1e-6, dealias: true, symmetric: true }
    }
}

impl StepControl {
    pub fn validate(&self) -> Result<()> {
        if !(self.cfl > 0.0 && self.cfl <= 1.0) {
            return Err(Error::Parameter(format!("cfl must lie in (0, 1], got {}", self.cfl)));
        }
        if !(self.dt_min > 0.0 && self.dt_min < self.dt_max) || !self.dt_max.is_finite() {
            return Err(Error::Parameter(format!(
                "need 0 < dt_min < dt_max, got {} and {}",
                self.dt_min, self.dt_max
            )));
        }
        if !(self.tail_threshold > 0.0 && self.tail_threshold < 1.0) {
            return Err(Error::Parameter(format!(
                "tail_threshold must lie in (0, 1), got {}",
                self.tail_threshold
            )));
        }
        Ok(())
    }
}

/// Why a run stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Termination {
    TimeReached,
    ResolutionLost,
    CflFloor,
    NanDetected,
}

impl Termination {
    pub fn as_str(&self) -> &'static str {
        match self {
            Termination::TimeReached => "time-reached",
            Termination::ResolutionLost => "resolution-lost",
            Termination::CflFloor => "cfl-floor",
            Termination::NanDetected => "nan-detected",
        }
    }
}

/// Time derivatives of the two evolved fields. For log runs the second
/// slot holds `rho_t`.
#[derive(Debug, Clone, PartialEq)]
pub struct Tendency {
    pub omega: Vec<f64>,
    pub theta: Vec<f64>,
}

fn mask(n: usize, dealias: bool) -> impl Fn(i64) -> bool {
    let cut = (n / 3) as i64;
    move |k| !dealias || k.abs() < cut
}

/// Velocity by the model's Biot-Savart law (CCF: `u = H omega`).
pub fn model_velocity(spec: &ModelSpec, omega: &[f64], grid: &PeriodicGrid) -> Result<VelocityField> {
    match spec.model {
        Model::Ccf => {
            let u = hilbert_ux(omega, grid, spec.biot_savart)?;
            let ux = spectral_derivative(&u, grid)?;
            Ok(VelocityField { u, ux, method: spec.biot_savart })
        }
        _ => velocity_periodic(omega, grid, spec.biot_savart),
    }
}

fn periodic_spec(spec: &ModelSpec) -> Result<()> {
    spec.validate()?;
    if spec.domain != Domain::Periodic {
        return Err(Error::Spec(format!("{} on a log-line domain needs a log state", spec.model.name())));
    }
    Ok(())
}

fn log_spec(spec: &ModelSpec) -> Result<LogKernel> {
    spec.validate()?;
    match (spec.domain, spec.model) {
        (Domain::LogLine, Model::Hl) => Ok(LogKernel::Hl),
        (Domain::LogLine, Model::Cky) => Ok(LogKernel::Cky),
        _ => Err(Error::Spec(format!("{} is not a log-line model", spec.model.name()))),
    }
}

fn rhs_arrays(spec: &ModelSpec, grid: &PeriodicGrid, omega: &[f64], theta: &[f64], dealias: bool) -> Result<Tendency> {
    let n = grid.n();
    let keep = mask(n, dealias);
    let scale = 2.0 * std::f64::consts::PI / grid.length();
    let filt = |f: &[f64]| -> Vec<f64> {
        if dealias {
            apply_multiplier(f, |k| Complex64::new(if keep(k) { 1.0 } else { 0.0 }, 0.0))
        } else {
            f.to_vec()
        }
    };
    let dfilt = |f: &[f64]| -> Vec<f64> {
        apply_multiplier(f, |k| {
            if keep(k) && 2 * k.abs() != n as i64 {
                Complex64::new(0.0, k as f64 * scale)
            } else {
                Complex64::new(0.0, 0.0)
            }
        })
    };
    let vel = model_velocity(spec, omega, grid)?;
    let zero = || vec![0.0; n];
    let out = match spec.model {
        Model::Hl => {
            let u = filt(&vel.u);
            let wx = dfilt(omega);
            let thx_d = dfilt(theta);
            let thx = spectral_derivative(theta, grid)?;
            let dw = (0..n).map(|j| -u[j] * wx[j] + thx[j]).collect();
            let dth = (0..n).map(|j| -u[j] * thx_d[j]).collect();
            Tendency { omega: dw, theta: dth }
        }
        Model::Euler2d | Model::Ccf => {
            let u = filt(&vel.u);
            let wx = dfilt(omega);
            Tendency { omega: (0..n).map(|j| -u[j] * wx[j]).collect(), theta: zero() }
        }
        Model::Clm => {
            let ux = filt(&vel.ux);
            let w = filt(omega);
            Tendency { omega: (0..n).map(|j| ux[j] * w[j]).collect(), theta: zero() }
        }
        Model::DeGregorio | Model::Osw { .. } => {
            let a = if let Model::Osw { a } = spec.model { a } else { 1.0 };
            let u = filt(&vel.u);
            let ux = filt(&vel.ux);
            let w = filt(omega);
            let wx = dfilt(omega);
            Tendency { omega: (0..n).map(|j| -a * u[j] * wx[j] + ux[j] * w[j]).collect(), theta: zero() }
        }
        Model::Cky => unreachable!("rejected by periodic_spec"),
    };
    Ok(out)
}

/// Tendencies `(omega_t, theta_t)` of a periodic state.
pub fn rhs(spec: &ModelSpec, state: &FieldState, dealias: bool) -> Result<Tendency> {
    periodic_spec(spec)?;
    rhs_arrays(spec, &state.grid, &state.omega, &state.theta, dealias)
}

fn axpy(y: &[f64], a: f64, x: &[f64]) -> Vec<f64> {
    y.iter().zip(x).map(|(p, q)| p + a * q).collect()
}

/// Classical RK4 on a pair of arrays.
fn rk4<F>(a: &[f64], b: &[f64], dt: f64, f: F) -> Result<(Vec<f64>, Vec<f64>)>
where
    F: Fn(&[f64], &[f64]) -> Result<(Vec<f64>, Vec<f64>)>,
{
    let (ka1, kb1) = f(a, b)?;
    let (ka2, kb2) = f(&axpy(a, 0.5 * dt, &ka1), &axpy(b, 0.5 * dt, &kb1))?;
    let (ka3, kb3) = f(&axpy(a, 0.5 * dt, &ka2), &axpy(b, 0.5 * dt, &kb2))?;
    let (ka4, kb4) = f(&axpy(a, dt, &ka3), &axpy(b, dt, &kb3))?;
    let comb = |y: &[f64], k1: &[f64], k2: &[f64], k3: &[f64], k4: &[f64]| -> Vec<f64> {
        (0..y.len())
            .map(|j| y[j] + dt / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]))
            .collect()
    };
    Ok((comb(a, &ka1, &ka2, &ka3, &ka4), comb(b, &kb1, &kb2, &kb3, &kb4)))
}

/// One RK4 step, followed by the `theta(0) = 0` normalization and, in
/// symmetric mode, the symmetry projection.
pub fn step(spec: &ModelSpec, state: &FieldState, dt: f64, control: &StepControl) -> Result<FieldState> {
    periodic_spec(spec)?;
    if !(dt > 0.0) {
        return Err(Error::Parameter(format!("dt must be positive, got {dt}")));
    }
    if spec.model == Model::Ccf && control.symmetric {
        return Err(Error::Spec("CCF does not preserve the odd symmetry class; set symmetric = false".into()));
    }
    let grid = state.grid;
    let (mut omega, mut theta) = rk4(&state.omega, &state.theta, dt, |w, th| {
        let t = rhs_arrays(spec, &grid, w, th, control.dealias)?;
        Ok((t.omega, t.theta))
    })?;
    if control.symmetric {
        project_symmetric(&mut omega, &mut theta);
    } else {
        let t0 = theta[0];
        theta.iter_mut().for_each(|v| *v -= t0);
    }
    let out = FieldState { t: state.t + dt, grid, omega, theta };
    if !out.is_finite() {
        return Err(Error::NanDetected { t: out.t });
    }
    Ok(out)
}

/// Cached log-coordinate operator for HL or CKY on a fixed grid.
#[derive(Debug, Clone)]
pub struct LogDynamics {
    spec: ModelSpec,
    control: StepControl,
    vel: LogVelocity,
    exp_xi: Vec<f64>,
}

impl LogDynamics {
    pub fn new(spec: ModelSpec, grid: &crate::grid::LogGrid, control: StepControl) -> Result<Self> {
        let kernel = log_spec(&spec)?;
        control.validate()?;
        let exp_xi = grid.nodes().iter().map(|x| x.exp()).collect();
        Ok(Self { spec, control, vel: LogVelocity::new(grid, kernel), exp_xi })
    }

    pub fn velocity(&self) -> &LogVelocity {
        &self.vel
    }

    /// `Omega_t = -U Omega_xi + e^xi rho`, `rho_t = -(U rho)_xi`.
    ///
    /// Both transport terms use upwind WENO5-Z reconstructions with zero
    /// data outside the grid, so compact fields stay compact and `rho`
    /// does not develop dispersive undershoots. No Fourier filter is used.
    pub fn tendency(&self, omega: &[f64], rho: &[f64]) -> Result<Tendency> {
        check_compact(rho, "rho")?;
        let u = self.vel.velocity(omega)?;
        let h = self.vel.grid().h();
        let m = omega.len();
        // interface j holds the value at xi_j + h/2, j = -1..m-1 (stored at j+1)
        let face_u: Vec<f64> = (0..=m)
            .map(|j| {
                let l = if j == 0 { u[0] } else { u[j - 1] };
                let r = if j == m { u[m - 1] } else { u[j] };
                0.5 * (l + r)
            })
            .collect();
        let upwind = |v: &[f64], f: usize| -> f64 {
            // face f sits between nodes f-1 and f
            if face_u[f] >= 0.0 {
                weno5_face(v, f as isize - 1, false)
            } else {
                weno5_face(v, f as isize, true)
            }
        };
        let w_face: Vec<f64> = (0..=m).map(|f| upwind(omega, f)).collect();
        let r_face: Vec<f64> = (0..=m).map(|f| face_u[f] * upwind(rho, f)).collect();
        Ok(Tendency {
            omega: (0..m)
                .map(|j| -u[j] * (w_face[j + 1] - w_face[j]) / h + self.exp_xi[j] * rho[j])
                .collect(),
            theta: (0..m).map(|j| -(r_face[j + 1] - r_face[j]) / h).collect(),
        })
    }

    pub fn step(&self, state: &LogState, dt: f64) -> Result<LogState> {
        if !(dt > 0.0) {
            return Err(Error::Parameter(format!("dt must be positive, got {dt}")));
        }
        let (omega, rho) = rk4(&state.omega, &state.rho, dt, |w, r| {
            let t = self.tendency(w, r)?;
            Ok((t.omega, t.theta))
        })?;
        let out = LogState::from_density(state.t + dt, state.grid, omega, rho)?;
        if !out.is_finite() {
            return Err(Error::NanDetected { t: out.t });
        }
        Ok(out)
    }
}

/// WENO5-Z reconstruction at the face between nodes `i` and `i+1`:
/// left-biased from `i`, or right-biased from `i+1` when `from_right`
/// (then `i` names the right node). Samples outside the array are zero.
fn weno5_face(v: &[f64], i: isize, from_right: bool) -> f64 {
    let n = v.len() as isize;
    let get = |k: isize| if k >= 0 && k < n { v[k as usize] } else { 0.0 };
    let s = if from_right { -1 } else { 1 };
    let (a, b, c, d, e) = (get(i - 2 * s), get(i - s), get(i), get(i + s), get(i + 2 * s));
    let q0 = (2.0 * a - 7.0 * b + 11.0 * c) / 6.0;
    let q1 = (-b + 5.0 * c + 2.0 * d) / 6.0;
    let q2 = (2.0 * c + 5.0 * d - e) / 6.0;
    let b0 = 13.0 / 12.0 * (a - 2.0 * b + c).powi(2) + 0.25 * (a - 4.0 * b + 3.0 * c).powi(2);
    let b1 = 13.0 / 12.0 * (b - 2.0 * c + d).powi(2) + 0.25 * (b - d).powi(2);
    let b2 = 13.0 / 12.0 * (c - 2.0 * d + e).powi(2) + 0.25 * (3.0 * c - 4.0 * d + e).powi(2);
    let tau = (b0 - b2).abs();
    let eps = 1e-40;
    let w0 = 0.1 * (1.0 + tau / (b0 + eps));
    let w1 = 0.6 * (1.0 + tau / (b1 + eps));
    let w2 = 0.3 * (1.0 + tau / (b2 + eps));
    (w0 * q0 + w1 * q1 + w2 * q2) / (w0 + w1 + w2)
}

/// Tendencies `(Omega_t, rho_t)` of a log state.
pub fn rhs_log(spec: &ModelSpec, state: &LogState, dealias: bool) -> Result<Tendency> {
    let control = StepControl { dealias, ..StepControl::default() };
    LogDynamics::new(*spec, &state.grid, control)?.tendency(&state.omega, &state.rho)
}

/// Cheap per-step quantities at the current state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Probe {
    /// Largest stable step allowed by the CFL condition.
    pub dt_cfl: f64,
    /// Sup norms of `u_x`, `theta_x` (log: `e^xi rho`), `omega`.
    pub norms: [f64; 3],
    pub tail: f64,
}

/// What a [`Runner`] needs from a state space.
pub trait Dynamics: Sized {
    type State: Clone + Serialize + DeserializeOwned;

    fn build(spec: ModelSpec, control: StepControl, state: &Self::State, lp: f64) -> Result<Self>;
    fn spec(&self) -> ModelSpec;
    fn control(&self) -> StepControl;
    fn lp(&self) -> f64;
    fn time(state: &Self::State) -> f64;
    fn set_time(state: &mut Self::State, t: f64);
    fn advance(&self, state: &Self::State, dt: f64) -> Result<Self::State>;
    fn probe(&self, state: &Self::State) -> Result<Probe>;
    fn baseline(&self, state: &Self::State) -> RunBaseline;
    fn record(&self, state: &Self::State, bkm: &BkmIntegrals, baseline: &RunBaseline) -> Result<DiagnosticsRecord>;
    /// Constant in the `dJ/dt >= c0 I^2` margin.
    fn c0(&self, state: &Self::State) -> f64;
}

/// Periodic models on `[0, L)`.
#[derive(Debug, Clone)]
pub struct PeriodicDynamics {
    spec: ModelSpec,
    control: StepControl,
    lp: f64,
}

impl Dynamics for PeriodicDynamics {
    type State = FieldState;

    fn build(spec: ModelSpec, control: StepControl, _state: &FieldState, lp: f64) -> Result<Self> {
        periodic_spec(&spec)?;
        control.validate()?;
        if spec.model == Model::Ccf && control.symmetric {
            return Err(Error::Spec("CCF does not preserve the odd symmetry class; set symmetric = false".into()));
        }
        if !(lp >= 1.0) {
            return Err(Error::Parameter(format!("lp_exponent must be >= 1, got {lp}")));
        }
        Ok(Self { spec, control, lp })
    }
    fn spec(&self) -> ModelSpec {
        self.spec
    }
    fn control(&self) -> StepControl {
        self.control
    }
    fn lp(&self) -> f64 {
        self.lp
    }
    fn time(state: &FieldState) -> f64 {
        state.t
    }
    fn set_time(state: &mut FieldState, t: f64) {
        state.t = t;
    }
    fn advance(&self, state: &FieldState, dt: f64) -> Result<FieldState> {
        step(&self.spec, state, dt, &self.control)
    }
    fn probe(&self, state: &FieldState) -> Result<Probe> {
        if !state.is_finite() {
            return Err(Error::NanDetected { t: state.t });
        }
        let vel = model_velocity(&self.spec, &state.omega, &state.grid)?;
        let dx = state.grid.dx();
        let umax = sup_norm(&vel.u);
        let uxmax = sup_norm(&vel.ux);
        let speed = umax.max(uxmax * dx);
        let dt_cfl = if speed > 0.0 { self.control.cfl * dx / speed } else { f64::INFINITY };
        Ok(Probe {
            dt_cfl,
            norms: [uxmax, sup_norm(&state.theta_x()), sup_norm(&state.omega)],
            tail: spectrum_report(&state.omega).tail_fraction,
        })
    }
    fn baseline(&self, state: &FieldState) -> RunBaseline {
        RunBaseline::of(state)
    }
    fn record(&self, state: &FieldState, bkm: &BkmIntegrals, baseline: &RunBaseline) -> Result<DiagnosticsRecord> {
        let vel = model_velocity(&self.spec, &state.omega, &state.grid)?;
        norms_and_bounds(state, &vel, bkm, baseline, self.lp)
    }
    fn c0(&self, state: &FieldState) -> f64 {
        2.0 / state.grid.length().powi(2)
    }
}

impl Dynamics for LogDynamics {
    type State = LogState;

    fn build(spec: ModelSpec, control: StepControl, state: &LogState, _lp: f64) -> Result<Self> {
        LogDynamics::new(spec, &state.grid, control)
    }
    fn spec(&self) -> ModelSpec {
        self.spec
    }
    fn control(&self) -> StepControl {
        self.control
    }
    fn lp(&self) -> f64 {
        2.0
    }
    fn time(state: &LogState) -> f64 {
        state.t
    }
    fn set_time(state: &mut LogState, t: f64) {
        state.t = t;
    }
    fn advance(&self, state: &LogState, dt: f64) -> Result<LogState> {
        self.step(state, dt)
    }
    fn probe(&self, state: &LogState) -> Result<Probe> {
        if !state.is_finite() {
            return Err(Error::NanDetected { t: state.t });
        }
        check_compact(&state.rho, "rho")?;
        check_density_sign(&state.rho, &state.grid)?;
        let u = self.vel.velocity(&state.omega)?;
        let ux = self.vel.velocity_derivative(&state.omega)?;
        let h = self.vel.grid().h();
        let speed = sup_norm(&u).max(sup_norm(&ux) * h);
        let dt_cfl = if speed > 0.0 { self.control.cfl * h / speed } else { f64::INFINITY };
        let forcing: Vec<f64> = self.exp_xi.iter().zip(&state.rho).map(|(e, r)| e * r).collect();
        Ok(Probe {
            dt_cfl,
            norms: [sup_norm(&ux), sup_norm(&forcing), sup_norm(&state.omega)],
            tail: spectrum_report(&state.omega).tail_fraction.max(spectrum_report(&state.rho).tail_fraction),
        })
    }
    fn baseline(&self, state: &LogState) -> RunBaseline {
        RunBaseline {
            t0: state.t,
            l1_omega0: crate::diagnostics::l1_norm(&state.omega, state.grid.h()),
            theta_inf0: sup_norm(&state.theta),
        }
    }
    fn record(&self, state: &LogState, bkm: &BkmIntegrals, _baseline: &RunBaseline) -> Result<DiagnosticsRecord> {
        log_record(state, &self.vel, bkm)
    }
    fn c0(&self, _state: &LogState) -> f64 {
        f64::NAN
    }
}

/// Result of [`Runner::advance`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Event {
    /// A new record (with this index) was appended.
    Recorded(usize),
    Finished(Termination),
}

/// Serializable snapshot of a [`Runner`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Checkpoint<S> {
    pub spec: ModelSpec,
    pub control: StepControl,
    pub lp: f64,
    pub state: S,
    pub t_end: f64,
    pub record_every: f64,
    pub t_origin: f64,
    pub next_output: u64,
    pub steps: u64,
    pub last_dt: f64,
    pub bkm: BkmIntegrals,
    pub baseline: RunBaseline,
    pub termination: Option<Termination>,
    /// Records as arrays in [`DiagnosticsRecord::NAMES`] order; NaN as null.
    pub records: Vec<Vec<Option<f64>>>,
}

/// Adaptive RK4 driver that stops exactly on output times
/// `t0 + k record_every` and records diagnostics there.
#[derive(Debug, Clone)]
pub struct Runner<D: Dynamics> {
    dynamics: D,
    state: D::State,
    probe: Probe,
    t_end: f64,
    record_every: f64,
    t_origin: f64,
    next_output: u64,
    steps: u64,
    last_dt: f64,
    bkm: BkmIntegrals,
    baseline: RunBaseline,
    termination: Option<Termination>,
    records: Vec<DiagnosticsRecord>,
    last_recorded_t: f64,
}

pub type PeriodicRunner = Runner<PeriodicDynamics>;
pub type LogRunner = Runner<LogDynamics>;

fn finishing(e: &Error) -> Option<Termination> {
    match e {
        Error::Truncation(_) | Error::Sign(_) => Some(Termination::ResolutionLost),
        Error::NanDetected { .. } => Some(Termination::NanDetected),
        _ => None,
    }
}

impl<D: Dynamics> Runner<D> {
    pub fn new(
        spec: ModelSpec,
        state0: D::State,
        control: StepControl,
        t_end: f64,
        record_every: f64,
        lp: f64,
    ) -> Result<Self> {
        let dynamics = D::build(spec, control, &state0, lp)?;
        let t0 = D::time(&state0);
        if !(t_end > t0) || !(record_every > 0.0) {
            return Err(Error::Parameter(format!(
                "need t_end > t0 and record_every > 0, got t_end = {t_end}, record_every = {record_every}"
            )));
        }
        let probe = dynamics.probe(&state0)?;
        let baseline = dynamics.baseline(&state0);
        let mut r = Self {
            dynamics,
            state: state0,
            probe,
            t_end,
            record_every,
            t_origin: t0,
            next_output: 1,
            steps: 0,
            last_dt: 0.0,
            bkm: BkmIntegrals::default(),
            baseline,
            termination: None,
            records: Vec::new(),
            last_recorded_t: f64::NAN,
        };
        r.push_record()?;
        if !(r.probe.tail <= control.tail_threshold) {
            r.termination = Some(Termination::ResolutionLost);
        }
        Ok(r)
    }

    pub fn state(&self) -> &D::State {
        &self.state
    }

    pub fn records(&self) -> &[DiagnosticsRecord] {
        &self.records
    }

    pub fn termination(&self) -> Option<Termination> {
        self.termination
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn dynamics(&self) -> &D {
        &self.dynamics
    }

    fn push_record(&mut self) -> Result<usize> {
        let mut rec = self.dynamics.record(&self.state, &self.bkm, &self.baseline)?;
        rec.dt = self.last_dt;
        self.records.push(rec);
        self.last_recorded_t = D::time(&self.state);
        Ok(self.records.len() - 1)
    }

    fn finish(&mut self, why: Termination) -> Result<Event> {
        self.termination = Some(why);
        if D::time(&self.state) != self.last_recorded_t {
            let i = self.push_record()?;
            return Ok(Event::Recorded(i));
        }
        Ok(Event::Finished(why))
    }

    /// Step until the next record is written or the run ends.
    pub fn advance(&mut self) -> Result<Event> {
        if let Some(t) = self.termination {
            return Ok(Event::Finished(t));
        }
        let control = self.dynamics.control();
        loop {
            let t = D::time(&self.state);
            // output times stay on the lattice so a halted run and its resume see the same targets
            let slack = 1e-9 * self.record_every;
            let lattice = self.t_origin + self.next_output as f64 * self.record_every;
            let target = if lattice <= self.t_end + slack { lattice } else { self.t_end };
            if self.probe.dt_cfl < control.dt_min {
                return self.finish(Termination::CflFloor);
            }
            let dt_allowed = self.probe.dt_cfl.min(control.dt_max);
            let remaining = target - t;
            let nsteps = (remaining / dt_allowed).ceil().max(1.0);
            let dt = remaining / nsteps;
            let landing = nsteps <= 1.0;
            let mut next = match self.dynamics.advance(&self.state, dt) {
                Ok(s) => s,
                Err(e) => match finishing(&e) {
                    Some(why) => return self.finish(why),
                    None => return Err(e),
                },
            };
            D::set_time(&mut next, if landing { target } else { t + dt });
            let probe = match self.dynamics.probe(&next) {
                Ok(p) => p,
                Err(e) => match finishing(&e) {
                    Some(why) => return self.finish(why),
                    None => return Err(e),
                },
            };
            self.bkm.update(dt, self.probe.norms, probe.norms);
            self.state = next;
            self.probe = probe;
            self.last_dt = dt;
            self.steps += 1;
            if !(probe.tail <= control.tail_threshold) {
                return self.finish(Termination::ResolutionLost);
            }
            if landing {
                let i = self.push_record()?;
                self.next_output += 1;
                if target >= self.t_end - slack {
                    self.termination = Some(Termination::TimeReached);
                }
                return Ok(Event::Recorded(i));
            }
        }
    }

    /// Run to termination, calling `on_record` with every new record.
    pub fn run_to_end<F: FnMut(&D::State, &DiagnosticsRecord)>(&mut self, mut on_record: F) -> Result<Termination> {
        loop {
            match self.advance()? {
                Event::Recorded(i) => on_record(&self.state, &self.records[i]),
                Event::Finished(t) => return Ok(t),
            }
        }
    }

    /// Records with the derivative margins filled in.
    pub fn finalized_records(&self) -> Vec<DiagnosticsRecord> {
        let mut out = self.records.clone();
        fill_margins(&mut out, self.dynamics.c0(&self.state));
        out
    }

    pub fn checkpoint(&self) -> Checkpoint<D::State> {
        Checkpoint {
            spec: self.dynamics.spec(),
            control: self.dynamics.control(),
            lp: self.dynamics.lp(),
            state: self.state.clone(),
            t_end: self.t_end,
            record_every: self.record_every,
            t_origin: self.t_origin,
            next_output: self.next_output,
            steps: self.steps,
            last_dt: self.last_dt,
            bkm: self.bkm,
            baseline: self.baseline,
            termination: self.termination,
            records: self
                .records
                .iter()
                .map(|r| r.to_array().iter().map(|v| if v.is_nan() { None } else { Some(*v) }).collect())
                .collect(),
        }
    }

    pub fn resume(ck: Checkpoint<D::State>) -> Result<Self> {
        let dynamics = D::build(ck.spec, ck.control, &ck.state, ck.lp)?;
        let probe = dynamics.probe(&ck.state)?;
        let mut records = Vec::with_capacity(ck.records.len());
        for row in &ck.records {
            if row.len() != DiagnosticsRecord::NAMES.len() {
                return Err(Error::Shape { expected: DiagnosticsRecord::NAMES.len(), got: row.len() });
            }
            let mut a = [f64::NAN; 28];
            for (k, v) in row.iter().enumerate() {
                a[k] = v.unwrap_or(f64::NAN);
            }
            records.push(DiagnosticsRecord::from_array(a));
        }
        let last_recorded_t = records.last().map(|r| r.t).unwrap_or(f64::NAN);
        Ok(Self {
            dynamics,
            state: ck.state,
            probe,
            t_end: ck.t_end,
            record_every: ck.record_every,
            t_origin: ck.t_origin,
            next_output: ck.next_output,
            steps: ck.steps,
            last_dt: ck.last_dt,
            bkm: ck.bkm,
            baseline: ck.baseline,
            termination: ck.termination,
            records,
            last_recorded_t,
        })
    }
}

/// States and diagnostics at every output time.
#[derive(Debug, Clone)]
pub struct Trajectory<S> {
    pub states: Vec<S>,
    pub records: Vec<DiagnosticsRecord>,
    pub termination: Termination,
}

fn collect<D: Dynamics>(mut runner: Runner<D>) -> Result<Trajectory<D::State>> {
    let mut states = vec![runner.state().clone()];
    let termination = runner.run_to_end(|s, _| states.push(s.clone()))?;
    Ok(Trajectory { states, records: runner.finalized_records(), termination })
}

/// Integrate a periodic model from `state0` to `t_end`.
pub fn run(
    spec: &ModelSpec,
    state0: &FieldState,
    control: &StepControl,
    t_end: f64,
    record_every: f64,
) -> Result<Trajectory<FieldState>> {
    collect(PeriodicRunner::new(*spec, state0.clone(), *control, t_end, record_every, 2.0)?)
}

/// Integrate HL or CKY in log coordinates.
pub fn run_log(
    spec: &ModelSpec,
    state0: &LogState,
    control: &StepControl,
    t_end: f64,
    record_every: f64,
) -> Result<Trajectory<LogState>> {
    collect(LogRunner::new(*spec, state0.clone(), *control, t_end, record_every, 2.0)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::{enforce_symmetry, preset_initial_data, preset_log_data};
    use crate::grid::LogGrid;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::collections::BTreeMap;
    use std::f64::consts::PI;

    fn basic(n: usize) -> FieldState {
        preset_initial_data("paper-basic", &PeriodicGrid::new(2.0 * PI, n).unwrap(), &BTreeMap::new()).unwrap()
    }

    fn random_state(n: usize, seed: u64) -> FieldState {
        let g = PeriodicGrid::new(2.0 * PI, n).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let c: Vec<(f64, f64)> = (0..6).map(|_| (rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect();
        let omega = g.sample(|x| c.iter().enumerate().map(|(k, (a, _))| a * ((k + 1) as f64 * x).sin()).sum());
        let theta = g.sample(|x| c.iter().enumerate().map(|(k, (_, b))| b * (1.0 - ((k + 1) as f64 * x).cos())).sum());
        FieldState::new(0.0, g, omega, theta).unwrap()
    }

    #[test]
    fn stationary_state_has_zero_tendency() {
        let g = PeriodicGrid::new(2.0 * PI, 64).unwrap();
        let s = FieldState::new(0.0, g, vec![0.0; 64], vec![0.7; 64]).unwrap();
        let t = rhs(&ModelSpec::periodic(Model::Hl), &s, true).unwrap();
        assert!(sup_norm(&t.omega) <= 1e-14 && sup_norm(&t.theta) <= 1e-14);
        let mut z = s.clone();
        z.theta = vec![0.0; 64];
        let next = step(&ModelSpec::periodic(Model::Hl), &z, 0.1, &StepControl::default()).unwrap();
        assert!(sup_norm(&next.omega) <= 1e-14 && sup_norm(&next.theta) <= 1e-14);
    }

    #[test]
    fn osw_at_one_is_de_gregorio() {
        let s = random_state(128, 9);
        for dealias in [true, false] {
            let a = rhs(&ModelSpec::periodic(Model::Osw { a: 1.0 }), &s, dealias).unwrap();
            let b = rhs(&ModelSpec::periodic(Model::DeGregorio), &s, dealias).unwrap();
            for j in 0..128 {
                assert!((a.omega[j] - b.omega[j]).abs() <= 1e-14);
            }
        }
    }

    #[test]
    fn clm_tendency_on_a_single_mode() {
        let l = 3.0;
        let g = PeriodicGrid::new(l, 128).unwrap();
        let k = 2.0 * PI / l;
        let s = FieldState::new(0.0, g, g.sample(|x| (k * x).sin()), vec![0.0; 128]).unwrap();
        let t = rhs(&ModelSpec::periodic(Model::Clm), &s, true).unwrap();
        for (j, x) in g.nodes().iter().enumerate() {
            assert!((t.omega[j] + (k * x).cos() * (k * x).sin()).abs() <= 1e-10);
        }
    }

    #[test]
    fn model_tendencies_match_formulas() {
        let s = random_state(64, 4);
        let g = s.grid;
        let v = velocity_periodic(&s.omega, &g, Default::default()).unwrap();
        let wx = spectral_derivative(&s.omega, &g).unwrap();
        let e = rhs(&ModelSpec::periodic(Model::Euler2d), &s, false).unwrap();
        let o = rhs(&ModelSpec::periodic(Model::Osw { a: -0.5 }), &s, false).unwrap();
        for j in 0..64 {
            assert!((e.omega[j] + v.u[j] * wx[j]).abs() <= 1e-12);
            assert!((o.omega[j] - (0.5 * v.u[j] * wx[j] + v.ux[j] * s.omega[j])).abs() <= 1e-12);
        }
        assert!(sup_norm(&e.theta) == 0.0);
        let c = rhs(&ModelSpec::periodic(Model::Ccf), &s, false).unwrap();
        let h = hilbert_ux(&s.omega, &g, Default::default()).unwrap();
        for j in 0..64 {
            assert!((c.omega[j] + h[j] * wx[j]).abs() <= 1e-12);
        }
    }

    #[test]
    fn domain_mismatch_is_a_spec_error() {
        let s = basic(32);
        assert!(matches!(rhs(&ModelSpec::log_line(Model::Hl), &s, true), Err(Error::Spec(_))));
        let ccf = ModelSpec::periodic(Model::Ccf);
        assert!(matches!(step(&ccf, &s, 0.01, &StepControl::default()), Err(Error::Spec(_))));
        let lg = LogGrid::new(-4.0, 8.0, 241).unwrap();
        let ls = preset_log_data("log-bump", &lg, &BTreeMap::new()).unwrap();
        assert!(matches!(rhs_log(&ModelSpec::periodic(Model::Hl), &ls, true), Err(Error::Spec(_))));
    }

    #[test]
    fn symmetric_step_keeps_the_class() {
        let s = enforce_symmetry(&random_state(128, 1));
        let next = step(&ModelSpec::periodic(Model::Hl), &s, 0.01, &StepControl::default()).unwrap();
        assert!(next.symmetry_defect() <= 1e-12);
        assert_eq!(next.theta[0], 0.0);
    }

    #[test]
    fn rk4_is_fourth_order() {
        let spec = ModelSpec::periodic(Model::Hl);
        let s0 = basic(64);
        let ctl = StepControl::default();
        let integrate = |steps: usize| {
            let dt = 0.1 / steps as f64;
            let mut s = s0.clone();
            for _ in 0..steps {
                s = step(&spec, &s, dt, &ctl).unwrap();
            }
            s
        };
        let reference = integrate(64);
        let err = |s: &FieldState| {
            s.omega
                .iter()
                .zip(&reference.omega)
                .chain(s.theta.iter().zip(&reference.theta))
                .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()))
        };
        let e1 = err(&integrate(4));
        let e2 = err(&integrate(8));
        let ratio = e1 / e2;
        assert!((11.2..=20.8).contains(&ratio), "ratio {ratio} ({e1}, {e2})");
    }

    #[test]
    fn zero_data_runs_to_the_end() {
        let g = PeriodicGrid::new(2.0 * PI, 32).unwrap();
        let tr = run(&ModelSpec::periodic(Model::Hl), &FieldState::zero(g), &StepControl::default(), 0.1, 0.05).unwrap();
        assert_eq!(tr.termination, Termination::TimeReached);
        assert_eq!(tr.records.len(), 3);
        for r in &tr.records {
            assert_eq!(r.max_omega, 0.0);
            assert_eq!(r.i, 0.0);
            assert_eq!(r.bkm_ux, 0.0);
        }
        assert!((tr.records[2].t - 0.1).abs() == 0.0);
    }

    #[test]
    fn checkpoint_resume_is_exact() {
        let spec = ModelSpec::periodic(Model::Hl);
        let ctl = StepControl::default();
        let mut a = PeriodicRunner::new(spec, basic(64), ctl, 0.3, 0.05, 2.0).unwrap();
        a.run_to_end(|_, _| {}).unwrap();
        let mut b = PeriodicRunner::new(spec, basic(64), ctl, 0.3, 0.05, 2.0).unwrap();
        b.advance().unwrap();
        b.advance().unwrap();
        let text = serde_json::to_string(&b.checkpoint()).unwrap();
        let mut c = PeriodicRunner::resume(serde_json::from_str(&text).unwrap()).unwrap();
        c.run_to_end(|_, _| {}).unwrap();
        let ra = a.finalized_records();
        let rc = c.finalized_records();
        assert_eq!(ra.len(), rc.len());
        for (x, y) in ra.iter().zip(&rc) {
            for (p, q) in x.to_array().iter().zip(y.to_array().iter()) {
                assert!(p.to_bits() == q.to_bits() || (p.is_nan() && q.is_nan()));
            }
        }
    }

    #[test]
    fn log_run_conserves_mass() {
        let lg = LogGrid::new(-6.0, 12.0, 1441).unwrap();
        let s0 = preset_log_data("log-bump", &lg, &BTreeMap::new()).unwrap();
        for model in [Model::Cky, Model::Hl] {
            let tr = run_log(&ModelSpec::log_line(model), &s0, &StepControl::default(), 0.2, 0.05).unwrap();
            assert_eq!(tr.termination, Termination::TimeReached, "{model:?}");
            for r in &tr.records {
                assert!((r.mass - 1.0).abs() <= 1e-10);
            }
            assert!(tr.records.last().unwrap().max_omega > tr.records[0].max_omega);
        }
    }
}
