//! Inverted pendulum benchmark driven by iterative linearization: at every
//! step the dynamics are linearized at the current angle, a controller of the
//! requested family is synthesized (or fetched from a cache) for the frozen
//! plant, one control is applied, and the true nonlinear state is advanced by
//! forward Euler.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::ToString;
use alloc::vec::Vec;

use crate::controllers::{self, Causality, Controller, ControllerState, Horizon, Kind};
use crate::error::{Error, Result};
use crate::factorization;
use crate::linalg::{self, Mat, Vector};
use crate::model::LtiPlant;
use crate::search::{self, SearchOptions};
use crate::sim::{Failure, Trace};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PendulumParams {
    pub m: f64,
    pub l: f64,
    pub g: f64,
    pub j: f64,
    pub dt: f64,
}

impl Default for PendulumParams {
    fn default() -> Self {
        Self { m: 1.0, l: 1.0, g: 1.0, j: 1.0, dt: 0.001 }
    }
}

impl PendulumParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [self.m, self.l, self.g, self.j].iter().all(|v| *v > 0.0 && v.is_finite());
        if !positive {
            return Err(Error::InvalidArgument("pendulum parameters must be positive".into()));
        }
        if !(self.dt > 0.0 && self.dt <= 0.1) {
            return Err(Error::InvalidArgument(format!("dt must lie in (0, 0.1], got {}", self.dt)));
        }
        Ok(())
    }

    fn gravity_gain(&self) -> f64 {
        self.m * self.g * self.l / self.j
    }

    fn input_gain(&self) -> f64 {
        self.l / self.j
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PendulumState {
    pub theta: f64,
    pub theta_dot: f64,
}

impl PendulumState {
    pub fn to_vector(self) -> Vector {
        Vector::from_vec(alloc::vec![self.theta, self.theta_dot])
    }
}

/// `(d theta, d theta_dot)` of the upright pendulum with torque `u + w`.
pub fn pendulum_derivative(s: PendulumState, u: f64, w: f64, p: &PendulumParams) -> (f64, f64) {
    let c = libm::cos(s.theta);
    (s.theta_dot, p.gravity_gain() * libm::sin(s.theta) + p.input_gain() * (u + w) * c)
}

/// Forward-Euler discretization of the Jacobian at `(s, u = 0, w = 0)`:
/// returns `(A_d, B_u, B_w)`.
pub fn linearize(s: PendulumState, p: &PendulumParams) -> (Mat, Mat, Mat) {
    let c = libm::cos(s.theta);
    let a = Mat::from_row_slice(2, 2, &[1.0, p.dt, p.dt * p.gravity_gain() * c, 1.0]);
    let b = Mat::from_row_slice(2, 1, &[0.0, p.dt * p.input_gain() * c]);
    (a, b.clone(), b)
}

/// The frozen plant at `theta` with unit state and control weights.
pub fn frozen_plant(theta: f64, p: &PendulumParams) -> Result<LtiPlant> {
    let (a, b_u, b_w) = linearize(PendulumState { theta, theta_dot: 0.0 }, p);
    LtiPlant::new(a, b_u, b_w, Mat::identity(2, 2))
}

/// Angle resolution of the gain cache, in radians.
pub const ANGLE_QUANTUM: f64 = 1e-3;
/// State norm treated as divergence.
pub const DIVERGENCE: f64 = 1e6;

pub fn angle_key(theta: f64) -> i64 {
    libm::round(theta / ANGLE_QUANTUM) as i64
}

fn key_angle(key: i64) -> f64 {
    key as f64 * ANGLE_QUANTUM
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GammaPolicy {
    /// Use this level throughout.
    Fixed(f64),
    /// Bisect once at the initial linearization and multiply by this factor.
    OptimalTimes(f64),
}

impl Default for GammaPolicy {
    fn default() -> Self {
        GammaPolicy::OptimalTimes(1.01)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dynamics {
    Nonlinear,
    /// Linear dynamics and gains frozen at the initial state.
    Frozen,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MpcConfig {
    pub params: PendulumParams,
    pub gamma_policy: GammaPolicy,
    pub dynamics: Dynamics,
    pub x0: PendulumState,
    pub search_tol: f64,
}

impl Default for MpcConfig {
    fn default() -> Self {
        Self {
            params: PendulumParams::default(),
            gamma_policy: GammaPolicy::default(),
            dynamics: Dynamics::Nonlinear,
            x0: PendulumState::default(),
            search_tol: search::DEFAULT_TOL,
        }
    }
}

/// Offline comparator tables for one frozen plant, indexed by steps to go `k`:
/// with `P_k` the value matrix `k` steps before the end,
/// `u = -gain[k] (A x + B_w w) - hb[k] q` and `q_prev = e[k] w + f[k] q`.
#[derive(Debug, Clone)]
struct OfflineTable {
    a: Mat,
    b_w: Mat,
    gain: Vec<Mat>,
    hb: Vec<Mat>,
    e: Vec<Mat>,
    f: Vec<Mat>,
}

impl OfflineTable {
    fn build(plant: &LtiPlant, len: usize) -> Result<Self> {
        let (a, b, b_w, q) = (plant.a(), plant.b_u(), plant.b_w(), plant.q());
        let m = b.ncols();
        let n = a.nrows();
        let mut p = Mat::zeros(n, n);
        let (mut gain, mut hb, mut e, mut f) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
        for _ in 0..len {
            let pb = &p * b;
            let h = linalg::symmetrize(&(Mat::identity(m, m) + b.transpose() * &pb));
            let chol = h.cholesky().ok_or(Error::Numeric("I + B'PB is not positive definite".into()))?;
            let hinv_bt = chol.solve(&b.transpose());
            let g = &hinv_bt * &p;
            let mid = &p - &pb * &g;
            e.push(a.transpose() * &mid * b_w);
            f.push(a.transpose() * (Mat::identity(n, n) - &pb * &hinv_bt));
            gain.push(g);
            hb.push(hinv_bt);
            p = linalg::symmetrize(&(q + a.transpose() * &mid * a));
        }
        Ok(Self { a: a.clone(), b_w: b_w.clone(), gain, hb, e, f })
    }

    /// First control of the clairvoyant problem over `w` from state `x`.
    fn first_control(&self, x: &Vector, w: &[Vector]) -> Vector {
        let t_len = w.len();
        let mut q = Vector::zeros(x.len());
        // q for step j uses the tables with T - 1 - j steps to go
        for j in (1..t_len).rev() {
            let k = t_len - 1 - j;
            q = &self.e[k] * &w[j] + &self.f[k] * q;
        }
        let k = t_len - 1;
        let y = &self.a * x + &self.b_w * &w[0];
        -(&self.gain[k] * y) - &self.hb[k] * q
    }
}

/// Controllers and offline tables per quantized angle, plus the levels
/// chosen once by the gamma policy. Reusable across rollouts with the same
/// configuration.
#[derive(Debug, Clone, Default)]
pub struct GainCache {
    controllers: BTreeMap<(u8, i64), core::result::Result<Controller, Error>>,
    offline: BTreeMap<i64, OfflineTable>,
    gamma_hinf: Option<f64>,
    gamma_competitive: Option<f64>,
    pub hits: usize,
    pub misses: usize,
}

fn kind_tag(kind: Kind) -> u8 {
    match kind {
        Kind::H2 => 0,
        Kind::Hinf => 1,
        Kind::Competitive => 2,
        Kind::Offline => 3,
        Kind::Zero => 4,
    }
}

impl GainCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.controllers.len() + self.offline.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Level used for `kind`, resolving the policy on first use.
    pub fn gamma(&mut self, kind: Kind, cfg: &MpcConfig) -> Result<Option<f64>> {
        let slot = match kind {
            Kind::Hinf => &mut self.gamma_hinf,
            Kind::Competitive => &mut self.gamma_competitive,
            _ => return Ok(None),
        };
        if let Some(g) = slot {
            return Ok(Some(*g));
        }
        let g = match cfg.gamma_policy {
            GammaPolicy::Fixed(g) => g,
            GammaPolicy::OptimalTimes(factor) => {
                let plant = frozen_plant(key_angle(angle_key(cfg.x0.theta)), &cfg.params)?;
                let opt = match kind {
                    Kind::Hinf => {
                        search::min_gamma(
                            |g| controllers::synth_hinf(&plant, g, Causality::Causal, Horizon::Infinite).map(|_| ()),
                            SearchOptions { audit: false, ..SearchOptions::hinf(cfg.search_tol) },
                        )?
                        .gamma
                    }
                    _ => {
                        let factor = factorization::spectral_factor_ih(&plant)?;
                        search::min_gamma(
                            |g| {
                                controllers::synth_competitive_with_factor(&plant, &factor, g, Causality::Causal)
                                    .map(|_| ())
                            },
                            SearchOptions { audit: false, ..SearchOptions::competitive(cfg.search_tol) },
                        )?
                        .gamma
                    }
                };
                opt * factor
            }
        };
        *slot = Some(g);
        Ok(Some(g))
    }

    /// Controller of `kind` for the plant frozen at `theta` (quantized).
    pub fn controller(&mut self, kind: Kind, theta: f64, cfg: &MpcConfig) -> Result<&Controller> {
        let key = angle_key(theta);
        let gamma = self.gamma(kind, cfg)?;
        let entry_key = (kind_tag(kind), key);
        if self.controllers.contains_key(&entry_key) {
            self.hits += 1;
        } else {
            self.misses += 1;
            let made = synthesize(kind, key_angle(key), gamma, &cfg.params);
            self.controllers.insert(entry_key, made);
        }
        match &self.controllers[&entry_key] {
            Ok(c) => Ok(c),
            Err(e) => Err(e.clone()),
        }
    }

    fn offline_table(&mut self, theta: f64, len: usize, params: &PendulumParams) -> Result<&OfflineTable> {
        let key = angle_key(theta);
        let stale = self.offline.get(&key).map_or(true, |t| t.gain.len() < len);
        if stale {
            self.misses += 1;
            let table = OfflineTable::build(&frozen_plant(key_angle(key), params)?, len)?;
            self.offline.insert(key, table);
        } else {
            self.hits += 1;
        }
        Ok(&self.offline[&key])
    }
}

/// Fresh synthesis for the plant frozen at `theta`.
pub fn synthesize(kind: Kind, theta: f64, gamma: Option<f64>, params: &PendulumParams) -> Result<Controller> {
    let plant = frozen_plant(theta, params)?;
    let need = || gamma.ok_or_else(|| Error::InvalidArgument("a level gamma is required".into()));
    match kind {
        Kind::H2 => controllers::synth_h2_ih(&plant, Causality::Causal),
        Kind::Hinf => controllers::synth_hinf(&plant, need()?, Causality::Causal, Horizon::Infinite),
        Kind::Competitive => controllers::synth_competitive(&plant, need()?, Causality::Causal, Horizon::Infinite),
        Kind::Zero => Ok(Controller::zero(2, 1, 1)),
        Kind::Offline => Err(Error::InvalidArgument("the offline comparator is not a cached controller".into())),
    }
}

fn advance(x: PendulumState, u: f64, w: f64, cfg: &MpcConfig, frozen: Option<&LtiPlant>) -> PendulumState {
    match frozen {
        Some(plant) => {
            let v = plant.stage().next_state(&x.to_vector(), &Vector::from_element(1, u), &Vector::from_element(1, w));
            PendulumState { theta: v[0], theta_dot: v[1] }
        }
        None => {
            let (d_theta, d_omega) = pendulum_derivative(x, u, w, &cfg.params);
            PendulumState { theta: x.theta + cfg.params.dt * d_theta, theta_dot: x.theta_dot + cfg.params.dt * d_omega }
        }
    }
}

/// Runs one MPC episode over the scalar disturbances `w` (each of length 1).
/// Cost per step is `theta^2 + theta_dot^2 + u^2`.
pub fn mpc_rollout(kind: Kind, w: &[Vector], cfg: &MpcConfig, cache: &mut GainCache) -> Result<Trace> {
    cfg.params.validate()?;
    if let Some(bad) = w.iter().find(|v| v.len() != 1) {
        return Err(Error::Dimension(format!("pendulum disturbances are scalars, got length {}", bad.len())));
    }
    let frozen = match cfg.dynamics {
        Dynamics::Frozen => Some(frozen_plant(cfg.x0.theta, &cfg.params)?),
        Dynamics::Nonlinear => None,
    };
    let mut trace = Trace::new(match kind {
        Kind::Offline => "offline".to_string(),
        k => k.name().to_string(),
    });
    let mut x = cfg.x0;
    let mut state: Option<ControllerState> = None;
    for (t, wt) in w.iter().enumerate() {
        let lin_theta = if frozen.is_some() { cfg.x0.theta } else { x.theta };
        let xv = x.to_vector();
        let (u, wprime, xi) = if kind == Kind::Offline {
            let table = match cache.offline_table(lin_theta, w.len() - t, &cfg.params) {
                Ok(tb) => tb,
                Err(e) => {
                    trace.failure = Some(Failure::Synthesis { step: t, verdict: None, message: e.to_string() });
                    break;
                }
            };
            (table.first_control(&xv, &w[t..]), None, None)
        } else {
            let c = match cache.controller(kind, lin_theta, cfg) {
                Ok(c) => c,
                Err(e) => {
                    let verdict = match &e {
                        Error::Infeasible(v) => Some(*v),
                        _ => None,
                    };
                    trace.failure = Some(Failure::Synthesis { step: t, verdict, message: e.to_string() });
                    break;
                }
            };
            let st = state.get_or_insert_with(|| ControllerState::new(c));
            let out = controllers::control_step(c, st, &xv, wt)?;
            let xi = if st.xi.is_empty() { None } else { Some(st.xi.clone()) };
            (out.u, out.wprime, xi)
        };
        let cost = xv.norm_squared() + u.norm_squared();
        let next = advance(x, u[0], wt[0], cfg, frozen.as_ref());
        if !cost.is_finite() || !next.theta.is_finite() || !next.theta_dot.is_finite() {
            trace.failure = Some(Failure::NonFinite { step: t });
            break;
        }
        trace.push(t, wt.clone(), wprime, xv, xi, u, cost);
        x = next;
        if libm::hypot(x.theta, x.theta_dot) > DIVERGENCE {
            trace.failure = Some(Failure::Diverged { step: t + 1 });
            break;
        }
    }
    Ok(trace)
}
