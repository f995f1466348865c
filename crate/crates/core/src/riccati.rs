//! Indefinite Riccati recursions for the dynamic game behind H-infinity
//! synthesis, their infinite-horizon fixed points, and feasibility checks.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Infeasibility, Reason, Result};
use crate::linalg::{self, Inertia, Mat, SymFactor, INERTIA_TOL};
use crate::model::{LtvPlant, Stage};

/// Margin used for strict matrix inequalities on extreme eigenvalues.
pub const STRICT_MARGIN: f64 = 1e-9;
/// PSD acceptance threshold for Riccati solutions.
pub const PSD_TOL: f64 = 1e-9;

/// Matrices of one step of a state-space game. Implemented by plant stages
/// and by the stages of the synthetic competitive system.
pub trait GameStage {
    fn a(&self) -> &Mat;
    fn b_u(&self) -> &Mat;
    fn b_w(&self) -> &Mat;
    fn q(&self) -> &Mat;
}

impl GameStage for Stage {
    fn a(&self) -> &Mat {
        &self.a
    }
    fn b_u(&self) -> &Mat {
        &self.b_u
    }
    fn b_w(&self) -> &Mat {
        &self.b_w
    }
    fn q(&self) -> &Mat {
        &self.q
    }
}

/// `diag(I_m, -gamma^2 I_p)`.
pub fn game_weight(m: usize, p: usize, gamma: f64) -> Mat {
    let mut r = Mat::zeros(m + p, m + p);
    for i in 0..m {
        r[(i, i)] = 1.0;
    }
    for i in m..m + p {
        r[(i, i)] = -gamma * gamma;
    }
    r
}

struct Update {
    p: Mat,
    h_tilde: Mat,
    factor: SymFactor,
}

/// One backward step `P <- Q + A'PA - A'P B~ H~^{-1} B~' P A`.
/// Returns `None` when `H~ = R~ + B~' P B~` is singular.
fn update(a: &Mat, b_tilde: &Mat, r_tilde: &Mat, q: &Mat, p: &Mat) -> Option<Update> {
    let pb = p * b_tilde;
    let h_tilde = linalg::symmetrize(&(r_tilde + b_tilde.transpose() * &pb));
    let factor = SymFactor::new(&h_tilde)?;
    let pa = p * a;
    let bpa = pb.transpose() * a;
    let next = q + a.transpose() * &pa - bpa.transpose() * factor.solve(&bpa);
    Some(Update { p: linalg::symmetrize(&next), h_tilde, factor })
}

/// Largest eigenvalue of `B_w'[P - P B_u H^{-1} B_u' P]B_w` together with
/// `H = I + B_u' P B_u`. `None` when `H` is not positive definite.
fn causal_quantity(b_u: &Mat, b_w: &Mat, p: &Mat) -> Option<(f64, Mat)> {
    let m = b_u.ncols();
    let pbu = p * b_u;
    let h = linalg::symmetrize(&(Mat::identity(m, m) + b_u.transpose() * &pbu));
    if m > 0 && linalg::min_eig(&h) <= INERTIA_TOL {
        return None;
    }
    let inner = if m == 0 { p.clone() } else { p - &pbu * linalg::spd_solve(&h, &pbu.transpose()).ok()? };
    let c = b_w.transpose() * inner * b_w;
    Some((linalg::max_eig(&c), h))
}

/// Backward schedule `P_t`, `t = 0..=T`, with per-step verdicts.
#[derive(Debug, Clone)]
pub struct RiccatiSchedule {
    pub gamma: f64,
    /// `P_0..P_T`, `P_T = 0`. If the recursion stopped on a singular `H~`
    /// at step `t`, entries before `t + 1` are filled with NaN.
    pub p: Vec<Mat>,
    /// `H_t = I + B_u' P_{t+1} B_u`.
    pub h: Vec<Mat>,
    /// `H~_t = R~ + B~' P_{t+1} B~`.
    pub h_tilde: Vec<Mat>,
    /// First violation of the causal existence condition, if any.
    pub causal: Option<Infeasibility>,
    /// First violation of `B_w' P_{t+1} B_w < gamma^2 I` (gates strictly causal synthesis).
    pub strict: Option<Infeasibility>,
    /// First violation of `B_u' P_{t+1} B_u < gamma^2 I`, reported only.
    pub strict_u: Option<Infeasibility>,
}

impl RiccatiSchedule {
    pub fn horizon(&self) -> usize {
        self.p.len() - 1
    }

    pub fn is_feasible(&self) -> bool {
        self.causal.is_none()
    }

    pub fn is_strictly_feasible(&self) -> bool {
        self.causal.is_none() && self.strict.is_none()
    }
}

/// Finite-horizon game recursion over arbitrary stages.
pub fn hinf_backward_stages<S: GameStage>(stages: &[S], gamma: f64) -> Result<RiccatiSchedule> {
    if !(gamma > 0.0) || !gamma.is_finite() {
        return Err(Error::InvalidArgument(format!("gamma must be positive, got {gamma}")));
    }
    let t_len = stages.len();
    if t_len == 0 {
        return Err(Error::InvalidArgument("horizon must be at least 1".into()));
    }
    let n = stages[0].a().nrows();
    let g2 = gamma * gamma;
    let nan = Mat::from_element(n, n, f64::NAN);
    let mut p = vec![nan; t_len + 1];
    p[t_len] = Mat::zeros(n, n);
    let mut h = vec![Mat::zeros(0, 0); t_len];
    let mut h_tilde = vec![Mat::zeros(0, 0); t_len];
    let mut causal = None;
    let mut strict = None;
    let mut strict_u = None;

    for t in (0..t_len).rev() {
        let s = &stages[t];
        let (m, pw) = (s.b_u().ncols(), s.b_w().ncols());
        let p_next = &p[t + 1];
        let b_tilde = linalg::hstack(&[s.b_u(), s.b_w()]);
        let r_tilde = game_weight(m, pw, gamma);

        match causal_quantity(s.b_u(), s.b_w(), p_next) {
            Some((lmax, h_t)) => {
                h[t] = h_t;
                if lmax >= g2 - STRICT_MARGIN {
                    causal = Some(Infeasibility::at(Reason::CausalCondition, t).with_value(lmax / g2));
                }
            }
            None => {
                causal = Some(Infeasibility::at(Reason::InertiaMismatch, t));
            }
        }
        let sw = linalg::max_eig(&(s.b_w().transpose() * p_next * s.b_w()));
        if sw >= g2 - STRICT_MARGIN {
            strict = Some(Infeasibility::at(Reason::StrictCausalCondition, t).with_value(sw / g2));
        }
        let su = linalg::max_eig(&(s.b_u().transpose() * p_next * s.b_u()));
        if su >= g2 - STRICT_MARGIN {
            strict_u = Some(Infeasibility::at(Reason::StrictCausalCondition, t).with_value(su / g2));
        }

        match update(s.a(), &b_tilde, &r_tilde, s.q(), p_next) {
            Some(u) => {
                h_tilde[t] = u.h_tilde;
                p[t] = u.p;
            }
            None => {
                h_tilde[t] = linalg::symmetrize(&(&r_tilde + b_tilde.transpose() * p_next * &b_tilde));
                let v = Some(Infeasibility::at(Reason::SingularHtilde, t));
                causal = v;
                strict = strict.or(v);
                break;
            }
        }
    }
    Ok(RiccatiSchedule { gamma, p, h, h_tilde, causal, strict, strict_u })
}

/// Finite-horizon H-infinity recursion for a time-varying plant.
pub fn hinf_backward(plant: &LtvPlant, gamma: f64) -> Result<RiccatiSchedule> {
    hinf_backward_stages(plant.stages(), gamma)
}

/// Controls for the fixed-point iteration.
#[derive(Debug, Clone, Copy)]
pub struct FixedPointOptions {
    pub max_iter: usize,
    /// Stop when `max|P_{k+1} - P_k| / max(1, max|P_{k+1}|)` drops below this.
    pub tol: f64,
    /// Check the inertia of `H~` at every iterate and stop at the first mismatch.
    pub early_inertia_exit: bool,
}

impl Default for FixedPointOptions {
    fn default() -> Self {
        Self { max_iter: 100_000, tol: 1e-11, early_inertia_exit: true }
    }
}

const DIVERGENCE: f64 = 1e12;
const STALL_LEVEL: f64 = 1e-9;
const STALL_WINDOW: usize = 500;

#[derive(Debug, Clone)]
pub struct RiccatiFixedPoint {
    pub p: Mat,
    /// Relative one-step defect at the returned `P`.
    pub residual: f64,
    pub iterations: usize,
    /// Spectral radius of `A - B~ H~^{-1} B~' P A`.
    pub radius: f64,
    pub inertia_match: bool,
    pub psd: bool,
    pub h_tilde: Mat,
    /// `None` when converged with all three conditions holding.
    pub verdict: Option<Infeasibility>,
}

impl RiccatiFixedPoint {
    pub fn is_feasible(&self) -> bool {
        self.verdict.is_none()
    }

    fn failed(n: usize, k: usize, verdict: Infeasibility, p: Mat) -> Self {
        Self {
            p,
            residual: f64::INFINITY,
            iterations: k,
            radius: f64::NAN,
            inertia_match: false,
            psd: false,
            h_tilde: Mat::zeros(n, n),
            verdict: Some(verdict),
        }
    }
}

fn rel_change(new: &Mat, old: &Mat) -> f64 {
    linalg::max_abs(&(new - old)) / linalg::max_abs(new).max(1.0)
}

/// Iterates the backward recursion from `P = 0` to its fixed point.
pub fn dare_fixed_point(
    a: &Mat,
    b_tilde: &Mat,
    r_tilde: &Mat,
    q: &Mat,
    opts: FixedPointOptions,
) -> Result<RiccatiFixedPoint> {
    let n = a.nrows();
    if a.ncols() != n || b_tilde.nrows() != n || q.shape() != (n, n) {
        return Err(Error::Dimension("A, B~ and Q are inconsistent".into()));
    }
    let k_dim = b_tilde.ncols();
    if r_tilde.shape() != (k_dim, k_dim) {
        return Err(Error::Dimension(format!("R~ must be {k_dim}x{k_dim}")));
    }
    let target = SymFactor::new(r_tilde)
        .ok_or_else(|| Error::Precondition("R~ must be nonsingular".into()))?
        .inertia();

    let mut p = Mat::zeros(n, n);
    let mut best = f64::INFINITY;
    let mut since_best = 0;
    let mut converged = None;
    for k in 0..opts.max_iter {
        let Some(u) = update(a, b_tilde, r_tilde, q, &p) else {
            return Ok(RiccatiFixedPoint::failed(n, k, Infeasibility::at(Reason::SingularHtilde, k), p));
        };
        if opts.early_inertia_exit && u.factor.inertia() != target {
            return Ok(RiccatiFixedPoint::failed(n, k, Infeasibility::at(Reason::InertiaMismatch, k), p));
        }
        if !u.p.iter().all(|v| v.is_finite()) || linalg::max_abs(&u.p) > DIVERGENCE {
            return Ok(RiccatiFixedPoint::failed(
                n,
                k,
                Infeasibility::at(Reason::NoStabilizingSolution, k),
                u.p,
            ));
        }
        let change = rel_change(&u.p, &p);
        p = u.p;
        if change < opts.tol {
            converged = Some(k + 1);
            break;
        }
        if change < best * 0.999 {
            best = change;
            since_best = 0;
        } else {
            since_best += 1;
        }
        if best < STALL_LEVEL && since_best >= STALL_WINDOW {
            converged = Some(k + 1);
            break;
        }
    }
    let Some(iterations) = converged else {
        return Ok(RiccatiFixedPoint::failed(
            n,
            opts.max_iter,
            Infeasibility::at(Reason::NoStabilizingSolution, opts.max_iter),
            p,
        ));
    };
    let Some(u) = update(a, b_tilde, r_tilde, q, &p) else {
        return Ok(RiccatiFixedPoint::failed(n, iterations, Infeasibility::new(Reason::SingularHtilde), p));
    };
    let residual = rel_change(&u.p, &p);
    let bpa = (&p * b_tilde).transpose() * a;
    let closed = a - b_tilde * u.factor.solve(&bpa);
    let radius = match linalg::spectral_radius(&closed) {
        Ok(r) => r,
        Err(_) => {
            return Ok(RiccatiFixedPoint::failed(n, iterations, Infeasibility::new(Reason::NumericFailure), p));
        }
    };
    let inertia_match = u.factor.inertia() == target;
    let min_p = linalg::min_eig(&p);
    let psd = min_p >= -PSD_TOL;
    let verdict = if !inertia_match {
        Some(Infeasibility::new(Reason::InertiaMismatch))
    } else if radius >= 1.0 - linalg::STABILITY_MARGIN {
        Some(Infeasibility::new(Reason::Unstable).with_value(radius))
    } else if !psd {
        Some(Infeasibility::new(Reason::NotPsd).with_value(min_p))
    } else {
        None
    };
    Ok(RiccatiFixedPoint { p, residual, iterations, radius, inertia_match, psd, h_tilde: u.h_tilde, verdict })
}

/// Infinite-horizon game Riccati equation for `(A, B_u, B_w, Q)` at level `gamma`.
pub fn hinf_fixed_point(a: &Mat, b_u: &Mat, b_w: &Mat, q: &Mat, gamma: f64) -> Result<RiccatiFixedPoint> {
    if !(gamma > 0.0) || !gamma.is_finite() {
        return Err(Error::InvalidArgument(format!("gamma must be positive, got {gamma}")));
    }
    let b_tilde = linalg::hstack(&[b_u, b_w]);
    let r_tilde = game_weight(b_u.ncols(), b_w.ncols(), gamma);
    dare_fixed_point(a, &b_tilde, &r_tilde, q, FixedPointOptions::default())
}

/// LQR fixed point `P = Q + A'PA - A'PB(I + B'PB)^{-1}B'PA`.
pub fn lqr_fixed_point(a: &Mat, b: &Mat, q: &Mat) -> Result<RiccatiFixedPoint> {
    let m = b.ncols();
    dare_fixed_point(a, b, &Mat::identity(m, m), q, FixedPointOptions::default())
}

pub fn inertia(m: &Mat) -> Inertia {
    linalg::inertia(m, INERTIA_TOL)
}
