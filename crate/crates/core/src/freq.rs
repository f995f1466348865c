//! Frequency-domain view of infinite-horizon closed loops: the transfer from
//! `w` to the stacked cost signal `[s; u]`, the per-frequency competitive
//! ratio against the offline cost density, and extremal DC directions.

use alloc::format;
use alloc::vec::Vec;
use nalgebra::SymmetricEigen;
use num_complex::Complex64;

use crate::controllers::{Controller, GainSchedule, Law};
use crate::error::{Error, Result};
use crate::linalg::{self, CMat, Mat, Vector};
use crate::model::LtiPlant;

/// `x' = a x + b w`, `[s; u] = c x + d w`.
#[derive(Debug, Clone, PartialEq)]
pub struct ClosedLoop {
    pub a: Mat,
    pub b: Mat,
    pub c: Mat,
    pub d: Mat,
}

fn constant_gain(gains: &GainSchedule) -> Result<&crate::controllers::Gain> {
    match gains {
        GainSchedule::Constant(g) => Ok(g),
        GainSchedule::Varying(_) => Err(Error::InvalidArgument("frequency analysis needs a time-invariant controller".into())),
    }
}

/// Realization of plant plus controller. State-feedback loops have the plant
/// state; competitive loops use `(alpha, nu)` with `x = alpha + nu`, where
/// `alpha` is the top half of `xi` and `nu` the `w'` filter state.
pub fn closed_loop(plant: &LtiPlant, controller: &Controller) -> Result<ClosedLoop> {
    let (n, m, p) = (plant.n(), plant.m(), plant.p());
    let (a, b_u, b_w, q_sqrt) = (plant.a(), plant.b_u(), plant.b_w(), plant.q_sqrt());
    match &controller.law {
        Law::Zero => Ok(ClosedLoop {
            a: a.clone(),
            b: b_w.clone(),
            c: linalg::vstack(&[q_sqrt, &Mat::zeros(m, n)]),
            d: Mat::zeros(n + m, p),
        }),
        Law::StateFeedback(gains) => {
            let g = constant_gain(gains)?;
            Ok(ClosedLoop {
                a: a - b_u * &g.state,
                b: b_w - b_u * &g.input,
                c: linalg::vstack(&[q_sqrt, &(-&g.state)]),
                d: linalg::vstack(&[&Mat::zeros(n, p), &(-&g.input)]),
            })
        }
        Law::Competitive { gains, filter, .. } => {
            let g = constant_gain(gains)?;
            let maps = filter.maps(0).ok_or_else(|| Error::InvalidArgument("empty filter".into()))?;
            let k_top = g.state.columns(0, n).into_owned();
            let k_bot = g.state.columns(n, n).into_owned();
            // w'_{t+1} = l_nu nu_t + l_w w_t
            let l_nu = &maps.c_w * &maps.a_w;
            let l_w = &maps.c_w * &maps.b_w;
            // w'_t = c_w nu_t, and K Sigma^{1/2} w'_t = (A - a_w) nu_t
            let coupling = a - &maps.a_w;
            let u_alpha = -k_top;
            let u_nu = -(&k_bot * &maps.c_w) - &g.input * &l_nu;
            let u_w = -(&g.input * &l_w);
            let mut acl = Mat::zeros(2 * n, 2 * n);
            acl.view_mut((0, 0), (n, n)).copy_from(&(a + b_u * &u_alpha));
            acl.view_mut((0, n), (n, n)).copy_from(&(&coupling + b_u * &u_nu));
            acl.view_mut((n, n), (n, n)).copy_from(&maps.a_w);
            let bcl = linalg::vstack(&[&(b_u * &u_w), &maps.b_w]);
            let mut c = Mat::zeros(n + m, 2 * n);
            c.view_mut((0, 0), (n, n)).copy_from(q_sqrt);
            c.view_mut((0, n), (n, n)).copy_from(q_sqrt);
            c.view_mut((n, 0), (m, n)).copy_from(&u_alpha);
            c.view_mut((n, n), (m, n)).copy_from(&u_nu);
            let d = linalg::vstack(&[&Mat::zeros(n, p), &u_w]);
            Ok(ClosedLoop { a: acl, b: bcl, c, d })
        }
        Law::Offline => Err(Error::InvalidArgument("the offline controller has no state-space closed loop".into())),
    }
}

pub fn unit_circle(omega: f64) -> Complex64 {
    Complex64::from_polar(1.0, omega)
}

/// `T(e^{i omega}) = C (e^{i omega} I - A)^{-1} B + D`.
pub fn transfer_at(cl: &ClosedLoop, omega: f64) -> Result<CMat> {
    let r = linalg::resolvent_apply(&cl.a, unit_circle(omega), &linalg::to_complex(&cl.b))?;
    Ok(linalg::to_complex(&cl.c) * r + linalg::to_complex(&cl.d))
}

pub fn sigma_max(t: &CMat) -> f64 {
    if t.is_empty() {
        return 0.0;
    }
    t.clone().svd(false, false).singular_values.iter().cloned().fold(0.0, f64::max)
}

/// Offline cost density `N = G*(I + F F*)^{-1} G` at `e^{i omega}`.
pub fn offline_density(plant: &LtiPlant, omega: f64) -> Result<CMat> {
    let z = unit_circle(omega);
    let f = plant.f_at(z)?;
    let g = plant.g_at(z)?;
    let n = plant.n();
    let s = CMat::identity(n, n) + &f * f.adjoint();
    let x = s.lu().solve(&g).ok_or_else(|| Error::Numeric("I + FF* is singular".into()))?;
    Ok(linalg::hermitian_part(&(g.adjoint() * x)))
}

/// Threshold below which the offline density counts as singular.
pub const DEGENERATE_TOL: f64 = 1e-12;

/// Worst-direction ratio `lambda_max(N^{-1/2} T*T N^{-1/2})` at one frequency.
/// `None` flags a degenerate frequency (singular `N`).
pub fn per_freq_cr_loop(plant: &LtiPlant, cl: &ClosedLoop, omega: f64) -> Result<Option<f64>> {
    let t = transfer_at(cl, omega)?;
    let m = linalg::hermitian_part(&(t.adjoint() * &t));
    let n = offline_density(plant, omega)?;
    let scale = n.iter().fold(0.0_f64, |a, v| a.max(v.norm()));
    let eig_n = SymmetricEigen::new(n.clone());
    let n_min = eig_n.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
    if !(n_min > DEGENERATE_TOL * scale.max(1.0)) {
        return Ok(None);
    }
    let Some(chol) = n.cholesky() else { return Ok(None) };
    // L^{-1} M L^{-*}
    let l_inv_m = chol.l().solve_lower_triangular(&m).ok_or_else(|| Error::Numeric("triangular solve".into()))?;
    let inner = chol
        .l()
        .solve_lower_triangular(&l_inv_m.adjoint())
        .ok_or_else(|| Error::Numeric("triangular solve".into()))?;
    let e = SymmetricEigen::new(linalg::hermitian_part(&inner));
    Ok(Some(e.eigenvalues.iter().cloned().fold(f64::NEG_INFINITY, f64::max)))
}

pub fn per_freq_cr(plant: &LtiPlant, controller: &Controller, omega: f64) -> Result<Option<f64>> {
    per_freq_cr_loop(plant, &closed_loop(plant, controller)?, omega)
}

/// Default number of grid points on `[0, pi]`.
pub const DEFAULT_GRID: usize = 512;

pub fn grid(points: usize) -> Vec<f64> {
    match points {
        0 => Vec::new(),
        1 => alloc::vec![0.0],
        k => (0..k).map(|i| core::f64::consts::PI * i as f64 / (k - 1) as f64).collect(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FreqPoint {
    pub omega: f64,
    pub sigma_max: f64,
    pub per_freq_cr: Option<f64>,
}

pub fn sweep(plant: &LtiPlant, controller: &Controller, omegas: &[f64]) -> Result<Vec<FreqPoint>> {
    let cl = closed_loop(plant, controller)?;
    if !linalg::is_schur_stable(&cl.a)? {
        return Err(Error::Precondition(format!("{} closed loop is not stable", controller.label())));
    }
    omegas
        .iter()
        .map(|&omega| {
            Ok(FreqPoint {
                omega,
                sigma_max: sigma_max(&transfer_at(&cl, omega)?),
                per_freq_cr: per_freq_cr_loop(plant, &cl, omega)?,
            })
        })
        .collect()
}

/// Flips `v` so its first non-negligible coordinate is positive.
pub fn canonical_sign(mut v: Vector) -> Vector {
    if let Some(first) = v.iter().find(|x| x.abs() > 1e-12) {
        if *first < 0.0 {
            v = -v;
        }
    }
    v
}

/// Unit eigenvectors of `T(1)'T(1)` for the smallest (best case) and largest
/// (worst case) eigenvalue, with their eigenvalues.
#[derive(Debug, Clone, PartialEq)]
pub struct DcDirections {
    pub best: Vector,
    pub worst: Vector,
    pub best_gain: f64,
    pub worst_gain: f64,
}

pub fn extremal_dc(plant: &LtiPlant, controller: &Controller) -> Result<DcDirections> {
    let cl = closed_loop(plant, controller)?;
    let t = transfer_at(&cl, 0.0)?;
    let re = t.map(|z| z.re);
    let e = SymmetricEigen::new(linalg::symmetrize(&(re.transpose() * &re)));
    let (mut lo, mut hi) = (0, 0);
    for i in 0..e.eigenvalues.len() {
        if e.eigenvalues[i] < e.eigenvalues[lo] {
            lo = i;
        }
        if e.eigenvalues[i] > e.eigenvalues[hi] {
            hi = i;
        }
    }
    let unit = |i: usize| canonical_sign(e.eigenvectors.column(i).normalize());
    Ok(DcDirections {
        best: unit(lo),
        worst: unit(hi),
        best_gain: e.eigenvalues[lo],
        worst_gain: e.eigenvalues[hi],
    })
}
