//! Causal factorization `Delta Delta* = I + F F*` of the offline cost operator
//! (forward Kalman-filter recursion for finite horizons, its stabilizing
//! fixed point for LTI plants), the doubled synthetic system built from it,
//! and the online filter producing the synthetic disturbance `w'`.

use alloc::format;
use alloc::sync::Arc;
use alloc::vec::Vec;
use num_complex::Complex64;

use crate::error::{Error, Infeasibility, Reason, Result};
use crate::linalg::{self, CMat, Mat, Vector};
use crate::model::{LtiPlant, LtvPlant, Stage};
use crate::riccati::GameStage;

/// PBH tolerance for the stabilizability / detectability preconditions.
pub const PBH_TOL: f64 = 1e-8;

/// Filter-side quantities of one step: `Sigma = I + Q^{1/2} P Q^{1/2}` and
/// `K = A P Q^{1/2} Sigma^{-1}`.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterStep {
    pub p: Mat,
    pub k: Mat,
    pub sigma: Mat,
    pub sigma_sqrt: Mat,
    pub sigma_inv_sqrt: Mat,
}

fn filter_step(stage: &Stage, p: &Mat) -> Result<FilterStep> {
    let n = stage.n();
    let sigma = linalg::symmetrize(&(Mat::identity(n, n) + &stage.q_sqrt * p * &stage.q_sqrt));
    let sigma_inv_sqrt = linalg::pd_inv_sqrt(&sigma, "Sigma")?;
    let sigma_sqrt = linalg::psd_sqrt(&sigma);
    // K = A P Q^{1/2} Sigma^{-1}, via Sigma K' = Q^{1/2} P A'
    let rhs = &stage.q_sqrt * p * stage.a.transpose();
    let k = linalg::spd_solve(&sigma, &rhs)?.transpose();
    Ok(FilterStep { p: p.clone(), k, sigma, sigma_sqrt, sigma_inv_sqrt })
}

/// `A P A' + B_u B_u' - K Sigma K'`.
fn filter_next(stage: &Stage, f: &FilterStep) -> Mat {
    let next = &stage.a * &f.p * stage.a.transpose() + &stage.b_u * stage.b_u.transpose()
        - &f.k * &f.sigma * f.k.transpose();
    linalg::symmetrize(&next)
}

/// Forward filtering schedule over a finite horizon.
#[derive(Debug, Clone, PartialEq)]
pub struct WhiteningSchedule {
    pub steps: Vec<FilterStep>,
}

impl WhiteningSchedule {
    pub fn horizon(&self) -> usize {
        self.steps.len()
    }
}

pub fn whitening_fh(plant: &LtvPlant) -> Result<WhiteningSchedule> {
    let n = plant.n();
    let mut p = Mat::zeros(n, n);
    let mut steps = Vec::with_capacity(plant.horizon());
    for stage in plant.stages() {
        let f = filter_step(stage, &p).map_err(|_| Error::infeasible(Reason::NumericFailure))?;
        p = filter_next(stage, &f);
        steps.push(f);
    }
    Ok(WhiteningSchedule { steps })
}

/// Dense lower-triangular `Delta` implied by the schedule: diagonal blocks
/// `Sigma_t^{1/2}`, block `(t, j < t)` equal to
/// `Q_t^{1/2} A_{t-1} ... A_{j+1} K_j Sigma_j^{1/2}`.
pub fn dense_delta(plant: &LtvPlant, schedule: &WhiteningSchedule) -> Mat {
    let (n, t_len) = (plant.n(), plant.horizon());
    let mut d = Mat::zeros(n * t_len, n * t_len);
    for j in 0..t_len {
        let fj = &schedule.steps[j];
        d.view_mut((j * n, j * n), (n, n)).copy_from(&fj.sigma_sqrt);
        let mut col = &fj.k * &fj.sigma_sqrt;
        for t in (j + 1)..t_len {
            let st = plant.stage(t);
            d.view_mut((t * n, j * n), (n, n)).copy_from(&(&st.q_sqrt * &col));
            col = &st.a * col;
        }
    }
    d
}

/// Stabilizing solution of `P = A P A' + B_u B_u' - K Sigma K'` and the
/// canonical factor `Delta(z) = (I + Q^{1/2}(zI - A)^{-1} K) Sigma^{1/2}`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralFactor {
    pub step: FilterStep,
    /// `A - K Q^{1/2}`.
    pub a_w: Mat,
    pub residual: f64,
    pub iterations: usize,
    pub radius: f64,
}

const SF_MAX_ITER: usize = 100_000;
const SF_TOL: f64 = 1e-11;

pub fn spectral_factor_ih(plant: &LtiPlant) -> Result<SpectralFactor> {
    let stage = plant.stage();
    if !linalg::is_stabilizable(&stage.a, &stage.b_u, PBH_TOL)? {
        return Err(Error::Precondition("(A, B_u) is not stabilizable".into()));
    }
    if !linalg::is_detectable(&stage.a, &stage.q_sqrt, PBH_TOL)? {
        return Err(Error::Precondition("(A, Q^{1/2}) is not detectable".into()));
    }
    let n = plant.n();
    let mut p = Mat::zeros(n, n);
    let mut best = f64::INFINITY;
    let mut since_best = 0usize;
    let mut iterations = None;
    for k in 0..SF_MAX_ITER {
        let f = filter_step(stage, &p)?;
        let next = filter_next(stage, &f);
        if !next.iter().all(|v| v.is_finite()) || linalg::max_abs(&next) > 1e12 {
            return Err(Infeasibility::at(Reason::NoStabilizingSolution, k).into());
        }
        let change = linalg::max_abs(&(&next - &p)) / linalg::max_abs(&next).max(1.0);
        p = next;
        if change < SF_TOL {
            iterations = Some(k + 1);
            break;
        }
        if change < best * 0.999 {
            best = change;
            since_best = 0;
        } else {
            since_best += 1;
        }
        if best < 1e-9 && since_best >= 500 {
            iterations = Some(k + 1);
            break;
        }
    }
    let iterations = iterations.ok_or(Infeasibility::at(Reason::NoStabilizingSolution, SF_MAX_ITER))?;
    let step = filter_step(stage, &p)?;
    let residual = linalg::max_abs(&(filter_next(stage, &step) - &p)) / linalg::max_abs(&p).max(1.0);
    let a_w = &stage.a - &step.k * &stage.q_sqrt;
    let radius = linalg::spectral_radius(&a_w)?;
    if radius >= 1.0 - linalg::STABILITY_MARGIN {
        return Err(Infeasibility::new(Reason::Unstable).with_value(radius).into());
    }
    Ok(SpectralFactor { step, a_w, residual, iterations, radius })
}

/// `Delta(z) = (I + Q^{1/2}(zI - A)^{-1} K) Sigma^{1/2}`.
pub fn delta_at(plant: &LtiPlant, factor: &SpectralFactor, z: Complex64) -> Result<CMat> {
    let n = plant.n();
    let r = linalg::resolvent_apply(plant.a(), z, &linalg::to_complex(&factor.step.k))?;
    let inner = CMat::identity(n, n) + linalg::to_complex(plant.q_sqrt()) * r;
    Ok(inner * linalg::to_complex(&factor.step.sigma_sqrt))
}

/// One step of the doubled system with state `xi = [x; w']`:
/// `xi_{t+1} = A^ xi_t + B^_u u_t + B^_w w'_{t+1}` and `s_t = [Q^{1/2} Sigma^{1/2}] xi_t`.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticStage {
    pub a: Mat,
    pub b_u: Mat,
    pub b_w: Mat,
    pub q: Mat,
    /// `[Q^{1/2} Sigma^{1/2}]`, so that `q = output' output`.
    pub output: Mat,
}

impl GameStage for SyntheticStage {
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

fn synthetic_stage(stage: &Stage, f: &FilterStep) -> SyntheticStage {
    let (n, m) = (stage.n(), stage.m());
    let mut a = Mat::zeros(2 * n, 2 * n);
    a.view_mut((0, 0), (n, n)).copy_from(&stage.a);
    a.view_mut((0, n), (n, n)).copy_from(&(&f.k * &f.sigma_sqrt));
    let b_u = linalg::vstack(&[&stage.b_u, &Mat::zeros(n, m)]);
    let b_w = linalg::vstack(&[&Mat::zeros(n, n), &Mat::identity(n, n)]);
    let output = linalg::hstack(&[&stage.q_sqrt, &f.sigma_sqrt]);
    let q = linalg::symmetrize(&(output.transpose() * &output));
    SyntheticStage { a, b_u, b_w, q, output }
}

/// The doubled system. Time-invariant systems hold a single stage.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSystem {
    pub stages: Vec<SyntheticStage>,
    pub time_invariant: bool,
}

impl SyntheticSystem {
    pub fn stage(&self, t: usize) -> &SyntheticStage {
        if self.time_invariant {
            &self.stages[0]
        } else {
            &self.stages[t]
        }
    }

    pub fn state_dim(&self) -> usize {
        self.stages[0].a.nrows()
    }
}

pub fn build_synthetic_fh(plant: &LtvPlant, schedule: &WhiteningSchedule) -> SyntheticSystem {
    let stages = plant.stages().iter().zip(&schedule.steps).map(|(s, f)| synthetic_stage(s, f)).collect();
    SyntheticSystem { stages, time_invariant: false }
}

pub fn build_synthetic_ih(plant: &LtiPlant, factor: &SpectralFactor) -> SyntheticSystem {
    SyntheticSystem { stages: alloc::vec![synthetic_stage(plant.stage(), &factor.step)], time_invariant: true }
}

/// Matrices of one filter step: `nu' = a_w nu + b_w w`, `w' = c_w nu`.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterMaps {
    pub a_w: Mat,
    pub b_w: Mat,
    pub c_w: Mat,
}

fn filter_maps(stage: &Stage, f: &FilterStep) -> FilterMaps {
    FilterMaps {
        a_w: &stage.a - &f.k * &stage.q_sqrt,
        b_w: stage.b_w.clone(),
        c_w: &f.sigma_inv_sqrt * &stage.q_sqrt,
    }
}

/// Online computation of `w'`. Starts from `nu_0 = 0`; `w'_t` depends only
/// on `w_0..w_{t-1}`.
#[derive(Debug, Clone, PartialEq)]
pub struct WPrimeFilter {
    maps: Arc<[FilterMaps]>,
    time_invariant: bool,
    nu: Vector,
    t: usize,
}

impl WPrimeFilter {
    pub fn for_schedule(plant: &LtvPlant, schedule: &WhiteningSchedule) -> Self {
        let maps: Vec<_> = plant.stages().iter().zip(&schedule.steps).map(|(s, f)| filter_maps(s, f)).collect();
        Self { maps: maps.into(), time_invariant: false, nu: Vector::zeros(plant.n()), t: 0 }
    }

    pub fn for_factor(plant: &LtiPlant, factor: &SpectralFactor) -> Self {
        let maps = alloc::vec![filter_maps(plant.stage(), &factor.step)];
        Self { maps: maps.into(), time_invariant: true, nu: Vector::zeros(plant.n()), t: 0 }
    }

    /// Fresh filter over stored maps; a time-invariant filter holds one map.
    pub fn from_maps(maps: Vec<FilterMaps>, time_invariant: bool) -> Result<Self> {
        let first = maps.first().ok_or_else(|| Error::InvalidArgument("a filter needs at least one map".into()))?;
        let n = first.a_w.nrows();
        for m in &maps {
            if m.a_w.shape() != (n, n) || m.b_w.nrows() != n || m.c_w.ncols() != n {
                return Err(Error::Dimension("filter maps have inconsistent shapes".into()));
            }
        }
        Ok(Self { maps: maps.into(), time_invariant, nu: Vector::zeros(n), t: 0 })
    }

    pub fn all_maps(&self) -> &[FilterMaps] {
        &self.maps
    }

    pub fn is_time_invariant(&self) -> bool {
        self.time_invariant
    }

    pub fn maps(&self, t: usize) -> Option<&FilterMaps> {
        if self.time_invariant {
            self.maps.first()
        } else {
            self.maps.get(t)
        }
    }

    pub fn t(&self) -> usize {
        self.t
    }

    pub fn nu(&self) -> &Vector {
        &self.nu
    }

    pub fn input_dim(&self) -> usize {
        self.maps[0].b_w.ncols()
    }

    /// `w'_t` at the current time. Zero past the end of a finite schedule.
    pub fn current(&self) -> Vector {
        match self.maps(self.t) {
            Some(m) => &m.c_w * &self.nu,
            None => Vector::zeros(self.nu.len()),
        }
    }

    /// Absorbs `w_t` and returns `w'_{t+1}`.
    pub fn step(&mut self, w: &Vector) -> Result<Vector> {
        if w.len() != self.input_dim() {
            return Err(Error::Dimension(format!("w has length {}, expected {}", w.len(), self.input_dim())));
        }
        let m = self.maps(self.t).ok_or(Error::HorizonExceeded { t: self.t, horizon: self.maps.len() })?;
        self.nu = &m.a_w * &self.nu + &m.b_w * w;
        self.t += 1;
        Ok(self.current())
    }

    /// A fresh copy at `t = 0`, `nu = 0`.
    pub fn reset(&self) -> Self {
        Self { maps: self.maps.clone(), time_invariant: self.time_invariant, nu: Vector::zeros(self.nu.len()), t: 0 }
    }
}

/// `w'_0..w'_{T-1}` for `w_0..w_{T-1}`, starting from a fresh filter.
pub fn wprime_run(filter: &WPrimeFilter, w: &[Vector]) -> Result<Vec<Vector>> {
    let mut f = filter.reset();
    let mut out = Vec::with_capacity(w.len());
    for wt in w {
        out.push(f.current());
        f.step(wt)?;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::build_dense_operators;
    use approx::assert_relative_eq;

    fn s(v: f64) -> Mat {
        Mat::from_element(1, 1, v)
    }

    fn unit_plant() -> LtiPlant {
        LtiPlant::new(s(1.0), s(1.0), s(1.0), s(1.0)).unwrap()
    }

    #[test]
    fn single_step_whitening_is_identity() {
        let ltv = unit_plant().to_ltv(1);
        let w = whitening_fh(&ltv).unwrap();
        assert_eq!(w.steps[0].sigma, s(1.0));
        assert_eq!(w.steps[0].k, s(0.0));
        assert_eq!(dense_delta(&ltv, &w), s(1.0));
    }

    #[test]
    fn two_step_scalar_whitening() {
        let ltv = unit_plant().to_ltv(2);
        let w = whitening_fh(&ltv).unwrap();
        assert_relative_eq!(w.steps[1].sigma[(0, 0)], 2.0, epsilon = 1e-15);
        assert_relative_eq!(w.steps[1].k[(0, 0)], 0.5, epsilon = 1e-15);
        let d = dense_delta(&ltv, &w);
        let expected = Mat::from_row_slice(2, 2, &[1.0, 0.0, 0.0, libm::sqrt(2.0)]);
        assert_relative_eq!(d, expected, epsilon = 1e-14);
        let ops = build_dense_operators(&ltv).unwrap();
        assert_relative_eq!(&d * d.transpose(), ops.i_plus_fft(), epsilon = 1e-14);
    }

    #[test]
    fn first_synthetic_disturbance() {
        let ltv = unit_plant().to_ltv(3);
        let sched = whitening_fh(&ltv).unwrap();
        let mut f = WPrimeFilter::for_schedule(&ltv, &sched);
        assert_eq!(f.current()[0], 0.0);
        let w1 = f.step(&Vector::from_element(1, 1.0)).unwrap();
        assert_relative_eq!(w1[0], 1.0 / libm::sqrt(2.0), epsilon = 1e-15);
    }

    #[test]
    fn synthetic_blocks_for_trivial_factor() {
        let plant = LtiPlant::new(s(1.0), s(1.0), s(1.0), s(1.0)).unwrap();
        let f = FilterStep { p: s(0.0), k: s(0.0), sigma: s(1.0), sigma_sqrt: s(1.0), sigma_inv_sqrt: s(1.0) };
        let st = synthetic_stage(plant.stage(), &f);
        assert_eq!(st.a, Mat::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]));
        assert_eq!(st.q, Mat::from_element(2, 2, 1.0));
    }

    #[test]
    fn scalar_spectral_factor_identity() {
        let plant = LtiPlant::new(s(0.5), s(1.0), s(1.0), s(1.0)).unwrap();
        let sf = spectral_factor_ih(&plant).unwrap();
        // P = 0.25P + 1 - 0.25P^2/(1+P)  =>  P^2 - 0.25P - 1 = 0 at the fixed point
        let p = sf.step.p[(0, 0)];
        assert_relative_eq!(p * p - 0.25 * p - 1.0, 0.0, epsilon = 1e-10);
        for w in [0.0, core::f64::consts::FRAC_PI_2, core::f64::consts::PI] {
            let z = Complex64::from_polar(1.0, w);
            let d = delta_at(&plant, &sf, z).unwrap();
            let f = plant.f_at(z).unwrap();
            let lhs = &d * d.adjoint();
            let rhs = CMat::identity(1, 1) + &f * f.adjoint();
            assert!((lhs[(0, 0)] - rhs[(0, 0)]).norm() < 1e-10);
        }
    }

    #[test]
    fn zero_weight_factor_is_trivial() {
        let a = Mat::from_row_slice(2, 2, &[0.5, 0.2, 0.0, 0.1]);
        let plant = LtiPlant::new(a, Mat::identity(2, 2), Mat::identity(2, 2), Mat::zeros(2, 2)).unwrap();
        let sf = spectral_factor_ih(&plant).unwrap();
        assert_eq!(sf.step.sigma, Mat::identity(2, 2));
        assert_eq!(sf.step.k, Mat::zeros(2, 2));
        let d = delta_at(&plant, &sf, Complex64::new(0.0, 1.0)).unwrap();
        assert_relative_eq!(d.map(|v| v.re), Mat::identity(2, 2), epsilon = 1e-15);
    }

    #[test]
    fn undetectable_plant_rejected() {
        let plant = LtiPlant::new(s(2.0), s(1.0), s(1.0), s(0.0)).unwrap();
        assert!(matches!(spectral_factor_ih(&plant), Err(Error::Precondition(_))));
    }
}
