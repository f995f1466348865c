//! Synthesis and runtime stepping of the controller families: H2, H-infinity,
//! competitive (H-infinity on the synthetic system driven by `w'`), the
//! clairvoyant offline optimum, and the zero controller.

use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Infeasibility, Reason, Result};
use crate::factorization::{self, FilterMaps, SyntheticSystem, WPrimeFilter, PBH_TOL};
use crate::linalg::{self, Mat, Vector};
use crate::model::{self, LtiPlant, LtvPlant};
use crate::riccati::{self, GameStage, RiccatiFixedPoint, RiccatiSchedule, STRICT_MARGIN};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Kind {
    H2,
    Hinf,
    Competitive,
    Offline,
    Zero,
}

impl Kind {
    pub fn name(self) -> &'static str {
        match self {
            Kind::H2 => "h2",
            Kind::Hinf => "hinf",
            Kind::Competitive => "competitive",
            Kind::Offline => "offline",
            Kind::Zero => "zero",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "h2" => Kind::H2,
            "hinf" => Kind::Hinf,
            "competitive" => Kind::Competitive,
            "offline" => Kind::Offline,
            "zero" => Kind::Zero,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Causality {
    Causal,
    StrictlyCausal,
    Noncausal,
}

impl Causality {
    pub fn name(self) -> &'static str {
        match self {
            Causality::Causal => "causal",
            Causality::StrictlyCausal => "strictly-causal",
            Causality::Noncausal => "noncausal",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "causal" => Causality::Causal,
            "strictly-causal" | "strict" => Causality::StrictlyCausal,
            "noncausal" => Causality::Noncausal,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Horizon {
    Finite(usize),
    Infinite,
}

/// `u = -(state * z + input * v)` where `z` is the plant state (or `xi`)
/// and `v` is the current disturbance (or `w'_{t+1}`).
#[derive(Debug, Clone, PartialEq)]
pub struct Gain {
    pub state: Mat,
    pub input: Mat,
}

#[derive(Debug, Clone, PartialEq)]
pub enum GainSchedule {
    Constant(Gain),
    Varying(Vec<Gain>),
}

impl GainSchedule {
    pub fn at(&self, t: usize) -> Option<&Gain> {
        match self {
            GainSchedule::Constant(g) => Some(g),
            GainSchedule::Varying(gs) => gs.get(t),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Law {
    Zero,
    /// Full-information feedback on the plant state and current disturbance.
    StateFeedback(GainSchedule),
    /// Feedback on the synthetic state `xi` and `w'_{t+1}`.
    Competitive { gains: GainSchedule, synthetic: SyntheticSystem, filter: WPrimeFilter },
    /// Batch only; see [`offline_optimal`].
    Offline,
}

/// Numbers collected during synthesis, reported but not part of the law.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Diagnostics {
    pub riccati_residual: Option<f64>,
    pub riccati_iterations: Option<usize>,
    /// Spectral radius of the closed loop (infinite horizon).
    pub closed_loop_radius: Option<f64>,
    pub factor_residual: Option<f64>,
    pub factor_radius: Option<f64>,
    /// Outcome of the strictly causal u-channel `B_u' P B_u < gamma^2 I` check
    /// (reported, does not gate synthesis).
    pub strict_u_channel: Option<Infeasibility>,
    /// `Some(ConditionUntestable)` when the infinite-horizon strictly causal
    /// side condition is not a square symmetric matrix.
    pub strict_extra: Option<Reason>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Controller {
    pub kind: Kind,
    pub causality: Causality,
    pub horizon: Horizon,
    pub gamma: Option<f64>,
    /// Plant dimensions `(n, m, p)`.
    pub dims: (usize, usize, usize),
    pub law: Law,
    pub diagnostics: Diagnostics,
}

impl Controller {
    pub fn zero(n: usize, m: usize, p: usize) -> Self {
        Self {
            kind: Kind::Zero,
            causality: Causality::StrictlyCausal,
            horizon: Horizon::Infinite,
            gamma: None,
            dims: (n, m, p),
            law: Law::Zero,
            diagnostics: Diagnostics::default(),
        }
    }

    pub fn offline(n: usize, m: usize, p: usize) -> Self {
        Self {
            kind: Kind::Offline,
            causality: Causality::Noncausal,
            horizon: Horizon::Infinite,
            gamma: None,
            dims: (n, m, p),
            law: Law::Offline,
            diagnostics: Diagnostics::default(),
        }
    }

    pub fn internal_dim(&self) -> usize {
        match &self.law {
            Law::Competitive { synthetic, .. } => synthetic.state_dim(),
            _ => 0,
        }
    }

    pub fn is_online(&self) -> bool {
        !matches!(self.law, Law::Offline)
    }

    /// Short label such as `competitive` or `hinf-strict`.
    pub fn label(&self) -> alloc::string::String {
        match self.causality {
            Causality::StrictlyCausal if self.kind != Kind::Zero => format!("{}-strict", self.kind.name()),
            _ => self.kind.name().into(),
        }
    }
}

fn check_gamma(gamma: f64) -> Result<()> {
    if gamma > 0.0 && gamma.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("gamma must be positive and finite, got {gamma}")))
    }
}

/// Gains `H^{-1} B_u' P A` and `H^{-1} B_u' P B_w` with `H = I + B_u' P B_u`.
/// The strictly causal variant drops the input term; for game controllers use
/// [`game_gain`], which also replaces `P`.
pub fn feedback_gain(a: &Mat, b_u: &Mat, b_w: &Mat, p: &Mat, causality: Causality) -> Result<Gain> {
    let m = b_u.ncols();
    let pb = p * b_u;
    let h = Mat::identity(m, m) + b_u.transpose() * &pb;
    let bp = pb.transpose();
    let state = linalg::spd_solve(&h, &(&bp * a))?;
    let input = match causality {
        Causality::Causal => linalg::spd_solve(&h, &(&bp * b_w))?,
        _ => Mat::zeros(m, b_w.ncols()),
    };
    Ok(Gain { state, input })
}

/// Strictly causal game gain: the disturbance player moves after `u`, so the
/// control sees `P^ = P + P B_w (gamma^2 I - B_w' P B_w)^{-1} B_w' P` in place
/// of `P`. Requires `B_w' P B_w < gamma^2 I`.
pub fn strict_game_gain(a: &Mat, b_u: &Mat, b_w: &Mat, p: &Mat, gamma: f64) -> Result<Gain> {
    let pw = p * b_w;
    let k = b_w.ncols();
    let slack = Mat::identity(k, k) * (gamma * gamma) - b_w.transpose() * &pw;
    let p_hat = linalg::symmetrize(&(p + &pw * linalg::spd_solve(&slack, &pw.transpose())?));
    feedback_gain(a, b_u, b_w, &p_hat, Causality::StrictlyCausal)
}

/// Gain of a level-`gamma` game controller.
pub fn game_gain(a: &Mat, b_u: &Mat, b_w: &Mat, p: &Mat, gamma: f64, causality: Causality) -> Result<Gain> {
    match causality {
        Causality::StrictlyCausal => strict_game_gain(a, b_u, b_w, p, gamma),
        _ => feedback_gain(a, b_u, b_w, p, causality),
    }
}

fn require_online(causality: Causality) -> Result<()> {
    if causality == Causality::Noncausal {
        return Err(Error::InvalidArgument("online synthesis needs a causal or strictly causal variant".into()));
    }
    Ok(())
}

/// Infinite-horizon LQR (H2) controller. The strictly causal variant is
/// `u = -(I + B'PB)^{-1} B'PA x`; the causal variant adds the full-information
/// feedforward `-(I + B'PB)^{-1} B'P B_w w`.
pub fn synth_h2_ih(plant: &LtiPlant, causality: Causality) -> Result<Controller> {
    require_online(causality)?;
    if !linalg::is_stabilizable(plant.a(), plant.b_u(), PBH_TOL)? {
        return Err(Error::Precondition("(A, B_u) is not stabilizable".into()));
    }
    if !linalg::is_detectable(plant.a(), plant.q_sqrt(), PBH_TOL)? {
        return Err(Error::Precondition("(A, Q^{1/2}) is not detectable".into()));
    }
    let fp = riccati::lqr_fixed_point(plant.a(), plant.b_u(), plant.q())?;
    if let Some(v) = fp.verdict {
        return Err(v.into());
    }
    let gain = feedback_gain(plant.a(), plant.b_u(), plant.b_w(), &fp.p, causality)?;
    let radius = linalg::spectral_radius(&(plant.a() - plant.b_u() * &gain.state))?;
    Ok(Controller {
        kind: Kind::H2,
        causality,
        horizon: Horizon::Infinite,
        gamma: None,
        dims: (plant.n(), plant.m(), plant.p()),
        law: Law::StateFeedback(GainSchedule::Constant(gain)),
        diagnostics: Diagnostics {
            riccati_residual: Some(fp.residual),
            riccati_iterations: Some(fp.iterations),
            closed_loop_radius: Some(radius),
            ..Default::default()
        },
    })
}

/// Gates a finite-horizon schedule and returns the per-step gains.
fn schedule_gains<S: GameStage>(
    stages: &[S],
    sched: &RiccatiSchedule,
    causality: Causality,
) -> Result<Vec<Gain>> {
    let verdict = match causality {
        Causality::Causal => sched.causal,
        _ => sched.causal.or(sched.strict),
    };
    if let Some(v) = verdict {
        return Err(v.into());
    }
    stages
        .iter()
        .enumerate()
        .map(|(t, s)| game_gain(s.a(), s.b_u(), s.b_w(), &sched.p[t + 1], sched.gamma, causality))
        .collect()
}

/// Extra infinite-horizon conditions for strictly causal synthesis:
/// `B_w' P B_w < gamma^2 I` gates; the u-channel form `B_u' P B_u < gamma^2 I` is only reported;
/// `I + B_w' P (I - gamma^2 B_u B_u' P)^{-1} B_u > 0` is evaluated only when
/// it is a square symmetric matrix.
fn strict_ih_checks<S: GameStage>(stage: &S, p: &Mat, gamma: f64, diag: &mut Diagnostics) -> Result<()> {
    let g2 = gamma * gamma;
    let sw = linalg::max_eig(&(stage.b_w().transpose() * p * stage.b_w()));
    if sw >= g2 - STRICT_MARGIN {
        return Err(Infeasibility::new(Reason::StrictCausalCondition).with_value(sw / g2).into());
    }
    let su = linalg::max_eig(&(stage.b_u().transpose() * p * stage.b_u()));
    if su >= g2 - STRICT_MARGIN {
        diag.strict_u_channel = Some(Infeasibility::new(Reason::StrictCausalCondition).with_value(su / g2));
    }
    let (m, pw, n) = (stage.b_u().ncols(), stage.b_w().ncols(), p.nrows());
    if m != pw {
        diag.strict_extra = Some(Reason::ConditionUntestable);
        return Ok(());
    }
    let inner = Mat::identity(n, n) - stage.b_u() * stage.b_u().transpose() * p * g2;
    let Some(x) = inner.lu().solve(stage.b_u()) else {
        diag.strict_extra = Some(Reason::ConditionUntestable);
        return Ok(());
    };
    let c = Mat::identity(m, m) + stage.b_w().transpose() * p * x;
    if !linalg::is_symmetric(&c, 1e-8) {
        diag.strict_extra = Some(Reason::ConditionUntestable);
        return Ok(());
    }
    let lo = linalg::min_eig(&c);
    if lo <= STRICT_MARGIN {
        return Err(Infeasibility::new(Reason::StrictCausalCondition).with_value(lo).into());
    }
    Ok(())
}

/// Conditions 1-3 (stable closed loop, matching inertia, PSD) gate both
/// variants; a strictly causal controller at level gamma implies a causal one.
fn gate_fixed_point(fp: &RiccatiFixedPoint) -> Result<()> {
    match fp.verdict {
        Some(v) => Err(v.into()),
        None => Ok(()),
    }
}

/// Finite-horizon H-infinity controller for a time-varying plant.
pub fn synth_hinf_ltv(plant: &LtvPlant, gamma: f64, causality: Causality) -> Result<Controller> {
    check_gamma(gamma)?;
    require_online(causality)?;
    let sched = riccati::hinf_backward(plant, gamma)?;
    let gains = schedule_gains(plant.stages(), &sched, causality)?;
    Ok(Controller {
        kind: Kind::Hinf,
        causality,
        horizon: Horizon::Finite(plant.horizon()),
        gamma: Some(gamma),
        dims: (plant.n(), plant.m(), plant.p()),
        law: Law::StateFeedback(GainSchedule::Varying(gains)),
        diagnostics: Diagnostics { strict_u_channel: sched.strict_u, ..Default::default() },
    })
}

pub fn synth_hinf(plant: &LtiPlant, gamma: f64, causality: Causality, horizon: Horizon) -> Result<Controller> {
    check_gamma(gamma)?;
    require_online(causality)?;
    if let Horizon::Finite(t) = horizon {
        return synth_hinf_ltv(&plant.to_ltv(t), gamma, causality);
    }
    let fp = riccati::hinf_fixed_point(plant.a(), plant.b_u(), plant.b_w(), plant.q(), gamma)?;
    gate_fixed_point(&fp)?;
    let mut diagnostics = Diagnostics {
        riccati_residual: Some(fp.residual),
        riccati_iterations: Some(fp.iterations),
        ..Default::default()
    };
    if causality == Causality::StrictlyCausal {
        strict_ih_checks(plant.stage(), &fp.p, gamma, &mut diagnostics)?;
    }
    let gain = game_gain(plant.a(), plant.b_u(), plant.b_w(), &fp.p, gamma, causality)?;
    diagnostics.closed_loop_radius = Some(linalg::spectral_radius(&(plant.a() - plant.b_u() * &gain.state))?);
    Ok(Controller {
        kind: Kind::Hinf,
        causality,
        horizon: Horizon::Infinite,
        gamma: Some(gamma),
        dims: (plant.n(), plant.m(), plant.p()),
        law: Law::StateFeedback(GainSchedule::Constant(gain)),
        diagnostics,
    })
}

/// Finite-horizon competitive controller for a time-varying plant.
pub fn synth_competitive_ltv(plant: &LtvPlant, gamma: f64, causality: Causality) -> Result<Controller> {
    check_gamma(gamma)?;
    require_online(causality)?;
    let whitening = factorization::whitening_fh(plant)?;
    let synthetic = factorization::build_synthetic_fh(plant, &whitening);
    let filter = WPrimeFilter::for_schedule(plant, &whitening);
    let sched = riccati::hinf_backward_stages(&synthetic.stages, gamma)?;
    let gains = schedule_gains(&synthetic.stages, &sched, causality)?;
    Ok(Controller {
        kind: Kind::Competitive,
        causality,
        horizon: Horizon::Finite(plant.horizon()),
        gamma: Some(gamma),
        dims: (plant.n(), plant.m(), plant.p()),
        law: Law::Competitive { gains: GainSchedule::Varying(gains), synthetic, filter },
        diagnostics: Diagnostics { strict_u_channel: sched.strict_u, ..Default::default() },
    })
}

pub fn synth_competitive(plant: &LtiPlant, gamma: f64, causality: Causality, horizon: Horizon) -> Result<Controller> {
    check_gamma(gamma)?;
    require_online(causality)?;
    if let Horizon::Finite(t) = horizon {
        return synth_competitive_ltv(&plant.to_ltv(t), gamma, causality);
    }
    let factor = factorization::spectral_factor_ih(plant)?;
    synth_competitive_with_factor(plant, &factor, gamma, causality)
}

/// Infinite-horizon competitive synthesis reusing a precomputed spectral factor
/// (the factor does not depend on `gamma`).
pub fn synth_competitive_with_factor(
    plant: &LtiPlant,
    factor: &factorization::SpectralFactor,
    gamma: f64,
    causality: Causality,
) -> Result<Controller> {
    check_gamma(gamma)?;
    require_online(causality)?;
    let synthetic = factorization::build_synthetic_ih(plant, factor);
    let filter = WPrimeFilter::for_factor(plant, factor);
    let st = &synthetic.stages[0];
    let fp = riccati::hinf_fixed_point(&st.a, &st.b_u, &st.b_w, &st.q, gamma)?;
    gate_fixed_point(&fp)?;
    let mut diagnostics = Diagnostics {
        riccati_residual: Some(fp.residual),
        riccati_iterations: Some(fp.iterations),
        factor_residual: Some(factor.residual),
        factor_radius: Some(factor.radius),
        ..Default::default()
    };
    if causality == Causality::StrictlyCausal {
        strict_ih_checks(st, &fp.p, gamma, &mut diagnostics)?;
    }
    let gain = game_gain(&st.a, &st.b_u, &st.b_w, &fp.p, gamma, causality)?;
    let mut c = Controller {
        kind: Kind::Competitive,
        causality,
        horizon: Horizon::Infinite,
        gamma: Some(gamma),
        dims: (plant.n(), plant.m(), plant.p()),
        law: Law::Competitive { gains: GainSchedule::Constant(gain), synthetic, filter },
        diagnostics,
    };
    let loop_ = crate::freq::closed_loop(plant, &c)?;
    c.diagnostics.closed_loop_radius = Some(linalg::spectral_radius(&loop_.a)?);
    Ok(c)
}

/// Runtime state of an online controller.
#[derive(Debug, Clone, PartialEq)]
pub struct ControllerState {
    pub t: usize,
    /// Synthetic state `xi` (competitive controllers only, else empty).
    pub xi: Vector,
    /// `w'` filter state `nu` (competitive controllers only, else empty).
    pub nu: Vector,
}

impl ControllerState {
    pub fn new(controller: &Controller) -> Self {
        let (n, k) = match &controller.law {
            Law::Competitive { synthetic, .. } => (controller.dims.0, synthetic.state_dim()),
            _ => (0, 0),
        };
        Self { t: 0, xi: Vector::zeros(k), nu: Vector::zeros(n) }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutput {
    pub u: Vector,
    /// `w'_t` seen at this step (competitive controllers only).
    pub wprime: Option<Vector>,
}

fn filter_output(filter: &WPrimeFilter, t: usize, nu: &Vector) -> Vector {
    match filter.maps(t) {
        Some(FilterMaps { c_w, .. }) => c_w * nu,
        None => Vector::zeros(nu.len()),
    }
}

/// Computes `u_t` and advances the controller state. Strictly causal
/// controllers never read `w` before `u_t` is formed.
pub fn control_step(controller: &Controller, state: &mut ControllerState, x: &Vector, w: &Vector) -> Result<StepOutput> {
    let (n, m, p) = controller.dims;
    if x.len() != n || w.len() != p {
        return Err(Error::Dimension(format!("expected x of length {n} and w of length {p}")));
    }
    if let Horizon::Finite(horizon) = controller.horizon {
        if state.t >= horizon {
            return Err(Error::HorizonExceeded { t: state.t, horizon });
        }
    }
    let t = state.t;
    let causal = controller.causality == Causality::Causal;
    let out = match &controller.law {
        Law::Zero => StepOutput { u: Vector::zeros(m), wprime: None },
        Law::Offline => {
            return Err(Error::Precondition("the offline controller has no online step".into()));
        }
        Law::StateFeedback(gains) => {
            let g = gains.at(t).ok_or(Error::HorizonExceeded { t, horizon: t })?;
            let mut u = -(&g.state * x);
            if causal {
                u -= &g.input * w;
            }
            StepOutput { u, wprime: None }
        }
        Law::Competitive { gains, synthetic, filter } => {
            let g = gains.at(t).ok_or(Error::HorizonExceeded { t, horizon: t })?;
            let st = synthetic.stage(t);
            let wprime_now = filter_output(filter, t, &state.nu);
            let mut u = -(&g.state * &state.xi);
            let maps = filter.maps(t).ok_or(Error::HorizonExceeded { t, horizon: t })?;
            state.nu = &maps.a_w * &state.nu + &maps.b_w * w;
            let wprime_next = filter_output(filter, t + 1, &state.nu);
            if causal {
                u -= &g.input * &wprime_next;
            }
            state.xi = &st.a * &state.xi + &st.b_u * &u + &st.b_w * &wprime_next;
            StepOutput { u, wprime: Some(wprime_now) }
        }
    };
    state.t += 1;
    Ok(out)
}

/// Result of the clairvoyant offline problem.
#[derive(Debug, Clone, PartialEq)]
pub struct OfflineSolution {
    pub u: Vec<Vector>,
    pub cost: f64,
}

/// Largest `T * n` solved through the dense stacked operators.
pub const DENSE_LIMIT: usize = 2000;

/// `u* = -(I + F'F)^{-1} F'G w` and `OPT = w'G'(I + FF')^{-1} G w`.
pub fn offline_optimal(plant: &LtvPlant, w: &[Vector]) -> Result<OfflineSolution> {
    if w.len() != plant.horizon() {
        return Err(Error::Dimension(format!("expected {} disturbances, got {}", plant.horizon(), w.len())));
    }
    let zero_start = plant.x0.iter().all(|v| *v == 0.0);
    if zero_start && plant.horizon() * plant.n() <= DENSE_LIMIT {
        DenseOffline::new(plant)?.solve(w)
    } else {
        offline_sweep(plant, w)
    }
}

/// Dense offline solver with both Cholesky factors cached, for repeated solves.
pub struct DenseOffline {
    ops: model::DenseOperators,
    u_chol: nalgebra::Cholesky<f64, nalgebra::Dyn>,
    s_chol: nalgebra::Cholesky<f64, nalgebra::Dyn>,
}

impl DenseOffline {
    pub fn new(plant: &LtvPlant) -> Result<Self> {
        let ops = model::build_dense_operators(plant)?;
        let u_chol = linalg::symmetrize(&ops.i_plus_ftf())
            .cholesky()
            .ok_or(Error::Numeric("I + F'F is not positive definite".into()))?;
        let s_chol = linalg::symmetrize(&ops.i_plus_fft())
            .cholesky()
            .ok_or(Error::Numeric("I + FF' is not positive definite".into()))?;
        Ok(Self { ops, u_chol, s_chol })
    }

    pub fn solve(&self, w: &[Vector]) -> Result<OfflineSolution> {
        let ops = &self.ops;
        if w.len() != ops.horizon || w.iter().any(|v| v.len() != ops.p) {
            return Err(Error::Dimension("disturbance sequence does not match the plant".into()));
        }
        let gw = &ops.g * model::stack(w);
        let u = -self.u_chol.solve(&(ops.f.transpose() * &gw));
        let cost = gw.dot(&self.s_chol.solve(&gw));
        Ok(OfflineSolution { u: model::unstack(&u, ops.m), cost })
    }
}

/// Backward value-function sweep with an affine term; handles `x_0 != 0`
/// and is linear in `T`.
pub fn offline_sweep(plant: &LtvPlant, w: &[Vector]) -> Result<OfflineSolution> {
    let t_len = plant.horizon();
    if w.len() != t_len {
        return Err(Error::Dimension(format!("expected {t_len} disturbances, got {}", w.len())));
    }
    let n = plant.n();
    // p_next, q_next describe V_{t+1}(x) = x'Px + 2q'x + c
    let mut p_next = Mat::zeros(n, n);
    let mut q_next = Vector::zeros(n);
    let mut laws = Vec::with_capacity(t_len);
    for t in (0..t_len).rev() {
        let s = plant.stage(t);
        let pb = &p_next * &s.b_u;
        let h = Mat::identity(s.m(), s.m()) + s.b_u.transpose() * &pb;
        let chol = linalg::symmetrize(&h).cholesky().ok_or(Error::Numeric("I + B'PB is not positive definite".into()))?;
        let hinv_bp = chol.solve(&pb.transpose());
        let mid = &p_next - &pb * &hinv_bp;
        let hinv_bq = chol.solve(&(s.b_u.transpose() * &q_next));
        let q_t = s.a.transpose() * (&mid * (&s.b_w * &w[t]) + &q_next - &pb * &hinv_bq);
        let p_t = linalg::symmetrize(&(&s.q + s.a.transpose() * &mid * &s.a));
        laws.push((hinv_bp, hinv_bq));
        p_next = p_t;
        q_next = q_t;
    }
    laws.reverse();
    let mut x = plant.x0.clone();
    let mut cost = 0.0;
    let mut u_all = Vec::with_capacity(t_len);
    for (t, (hinv_bp, hinv_bq)) in laws.iter().enumerate() {
        let s = plant.stage(t);
        let y = &s.a * &x + &s.b_w * &w[t];
        let u = -(hinv_bp * &y) - hinv_bq;
        cost += s.step_cost(&x, &u);
        x = y + &s.b_u * &u;
        u_all.push(u);
    }
    Ok(OfflineSolution { u: u_all, cost })
}
