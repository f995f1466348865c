//! Plants, control-weight normalization and the stacked finite-horizon operators.
//!
//! Every plant stores its control channel already rescaled so that the
//! effective control weight is the identity; `r_sqrt` keeps the original
//! `R^{1/2}` so controls can be mapped back with `u = R^{-1/2} u'`.

use alloc::format;
use alloc::vec::Vec;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::linalg::{self, CMat, Mat, Vector};

const SYMMETRY_TOL: f64 = 1e-10;
const PSD_TOL: f64 = 1e-10;
const PD_TOL: f64 = 1e-12;

fn check_state_weight(q: &Mat, n: usize) -> Result<Mat> {
    if q.shape() != (n, n) {
        return Err(Error::Dimension(format!("Q is {:?}, expected ({n}, {n})", q.shape())));
    }
    if !linalg::is_symmetric(q, SYMMETRY_TOL) {
        return Err(Error::NotPsd { what: "Q", detail: "not symmetric".into() });
    }
    let lo = linalg::min_eig(q);
    if lo < -PSD_TOL {
        return Err(Error::NotPsd { what: "Q", detail: format!("min eigenvalue {lo:e}") });
    }
    Ok(if lo < 0.0 { linalg::psd_clamp(q) } else { linalg::symmetrize(q) })
}

/// Returns `(B_u R^{-1/2}, R^{1/2})`.
fn normalize_input(b_u: &Mat, r: &Mat) -> Result<(Mat, Mat)> {
    let m = b_u.ncols();
    if r.shape() != (m, m) {
        return Err(Error::Dimension(format!("R is {:?}, expected ({m}, {m})", r.shape())));
    }
    if *r == Mat::identity(m, m) {
        return Ok((b_u.clone(), r.clone()));
    }
    if !linalg::is_symmetric(r, SYMMETRY_TOL) {
        return Err(Error::NotPositiveDefinite { what: "R", min_eig: f64::NAN });
    }
    let lo = linalg::min_eig(r);
    if lo <= PD_TOL {
        return Err(Error::NotPositiveDefinite { what: "R", min_eig: lo });
    }
    let r_inv_sqrt = linalg::pd_inv_sqrt(r, "R")?;
    Ok((b_u * r_inv_sqrt, linalg::psd_sqrt(r)))
}

/// One time step of a (possibly time-varying) plant.
#[derive(Debug, Clone, PartialEq)]
pub struct Stage {
    pub a: Mat,
    pub b_u: Mat,
    pub b_w: Mat,
    pub q: Mat,
    pub q_sqrt: Mat,
    /// `R^{1/2}` of the weight absorbed into `b_u`.
    pub r_sqrt: Mat,
}

impl Stage {
    pub fn new(a: Mat, b_u: Mat, b_w: Mat, q: Mat) -> Result<Self> {
        let m = b_u.ncols();
        Self::with_control_weight(a, b_u, b_w, q, Mat::identity(m, m))
    }

    pub fn with_control_weight(a: Mat, b_u: Mat, b_w: Mat, q: Mat, r: Mat) -> Result<Self> {
        let n = a.nrows();
        if a.ncols() != n {
            return Err(Error::Dimension("A must be square".into()));
        }
        if b_u.nrows() != n || b_w.nrows() != n {
            return Err(Error::Dimension(format!(
                "B_u has {} rows and B_w has {} rows, expected {n}",
                b_u.nrows(),
                b_w.nrows()
            )));
        }
        let q = check_state_weight(&q, n)?;
        let (b_u, r_sqrt) = normalize_input(&b_u, &r)?;
        let q_sqrt = linalg::psd_sqrt(&q);
        Ok(Self { a, b_u, b_w, q, q_sqrt, r_sqrt })
    }

    pub fn n(&self) -> usize {
        self.a.nrows()
    }

    pub fn m(&self) -> usize {
        self.b_u.ncols()
    }

    pub fn p(&self) -> usize {
        self.b_w.ncols()
    }

    pub fn next_state(&self, x: &Vector, u: &Vector, w: &Vector) -> Vector {
        &self.a * x + &self.b_u * u + &self.b_w * w
    }

    /// `x' Q x + u' u` in normalized units.
    pub fn step_cost(&self, x: &Vector, u: &Vector) -> f64 {
        x.dot(&(&self.q * x)) + u.norm_squared()
    }
}

/// Time-invariant plant `x_{t+1} = A x_t + B_u u_t + B_w w_t` with cost weight `Q`.
#[derive(Debug, Clone, PartialEq)]
pub struct LtiPlant {
    stage: Stage,
    pub x0: Vector,
}

impl LtiPlant {
    pub fn new(a: Mat, b_u: Mat, b_w: Mat, q: Mat) -> Result<Self> {
        let stage = Stage::new(a, b_u, b_w, q)?;
        let x0 = Vector::zeros(stage.n());
        Ok(Self { stage, x0 })
    }

    pub fn with_initial_state(mut self, x0: Vector) -> Result<Self> {
        if x0.len() != self.n() {
            return Err(Error::Dimension(format!("x0 has length {}, expected {}", x0.len(), self.n())));
        }
        self.x0 = x0;
        Ok(self)
    }

    pub fn stage(&self) -> &Stage {
        &self.stage
    }

    pub fn a(&self) -> &Mat {
        &self.stage.a
    }

    pub fn b_u(&self) -> &Mat {
        &self.stage.b_u
    }

    pub fn b_w(&self) -> &Mat {
        &self.stage.b_w
    }

    pub fn q(&self) -> &Mat {
        &self.stage.q
    }

    pub fn q_sqrt(&self) -> &Mat {
        &self.stage.q_sqrt
    }

    pub fn r_sqrt(&self) -> &Mat {
        &self.stage.r_sqrt
    }

    pub fn n(&self) -> usize {
        self.stage.n()
    }

    pub fn m(&self) -> usize {
        self.stage.m()
    }

    pub fn p(&self) -> usize {
        self.stage.p()
    }

    /// Replicates the plant over `horizon` steps.
    pub fn to_ltv(&self, horizon: usize) -> LtvPlant {
        LtvPlant { stages: alloc::vec![self.stage.clone(); horizon], x0: self.x0.clone() }
    }

    /// Maps a normalized control back to the original units, `u = R^{-1/2} u'`.
    pub fn control_to_original(&self, u: &Vector) -> Vector {
        match self.stage.r_sqrt.clone().lu().solve(u) {
            Some(v) => v,
            None => u.clone(),
        }
    }

    /// `F(z) = Q^{1/2}(zI - A)^{-1} B_u`.
    pub fn f_at(&self, z: Complex64) -> Result<CMat> {
        let r = linalg::resolvent_apply(self.a(), z, &linalg::to_complex(self.b_u()))?;
        Ok(linalg::to_complex(self.q_sqrt()) * r)
    }

    /// `G(z) = Q^{1/2}(zI - A)^{-1} B_w`.
    pub fn g_at(&self, z: Complex64) -> Result<CMat> {
        let r = linalg::resolvent_apply(self.a(), z, &linalg::to_complex(self.b_w()))?;
        Ok(linalg::to_complex(self.q_sqrt()) * r)
    }
}

/// Absorbs a control weight `R` into the input matrix: `B_u' = B_u R^{-1/2}`.
pub fn normalize_control_weight(a: Mat, b_u: Mat, b_w: Mat, q: Mat, r: Mat) -> Result<LtiPlant> {
    let stage = Stage::with_control_weight(a, b_u, b_w, q, r)?;
    let x0 = Vector::zeros(stage.n());
    Ok(LtiPlant { stage, x0 })
}

/// Finite-horizon time-varying plant.
#[derive(Debug, Clone, PartialEq)]
pub struct LtvPlant {
    stages: Vec<Stage>,
    pub x0: Vector,
}

impl LtvPlant {
    pub fn new(stages: Vec<Stage>, x0: Option<Vector>) -> Result<Self> {
        let first = stages
            .first()
            .ok_or_else(|| Error::InvalidArgument("horizon must be at least 1".into()))?;
        let (n, m, p) = (first.n(), first.m(), first.p());
        for (t, s) in stages.iter().enumerate() {
            if s.n() != n || s.m() != m || s.p() != p {
                return Err(Error::Dimension(format!("stage {t} dimensions differ from stage 0")));
            }
        }
        let x0 = x0.unwrap_or_else(|| Vector::zeros(n));
        if x0.len() != n {
            return Err(Error::Dimension(format!("x0 has length {}, expected {n}", x0.len())));
        }
        Ok(Self { stages, x0 })
    }

    pub fn horizon(&self) -> usize {
        self.stages.len()
    }

    pub fn stage(&self, t: usize) -> &Stage {
        &self.stages[t]
    }

    pub fn stages(&self) -> &[Stage] {
        &self.stages
    }

    pub fn n(&self) -> usize {
        self.stages[0].n()
    }

    pub fn m(&self) -> usize {
        self.stages[0].m()
    }

    pub fn p(&self) -> usize {
        self.stages[0].p()
    }

    /// Open-loop simulation for given control and disturbance sequences.
    /// Returns the visited states `x_0..x_{T}` and the total cost.
    pub fn simulate(&self, u: &[Vector], w: &[Vector]) -> Result<(Vec<Vector>, f64)> {
        let t_len = self.horizon();
        if u.len() != t_len || w.len() != t_len {
            return Err(Error::Dimension(format!(
                "expected {t_len} controls and disturbances, got {} and {}",
                u.len(),
                w.len()
            )));
        }
        let mut xs = Vec::with_capacity(t_len + 1);
        let mut x = self.x0.clone();
        let mut cost = 0.0;
        for (t, stage) in self.stages.iter().enumerate() {
            cost += stage.step_cost(&x, &u[t]);
            let next = stage.next_state(&x, &u[t], &w[t]);
            xs.push(x);
            x = next;
        }
        xs.push(x);
        Ok((xs, cost))
    }
}

/// Stacked operators with `s = F u + G w`, where `s_t = Q_t^{1/2} x_t` and `x_0 = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseOperators {
    pub f: Mat,
    pub g: Mat,
    pub n: usize,
    pub m: usize,
    pub p: usize,
    pub horizon: usize,
}

impl DenseOperators {
    /// `I + F F'`.
    pub fn i_plus_fft(&self) -> Mat {
        let k = self.f.nrows();
        Mat::identity(k, k) + &self.f * self.f.transpose()
    }

    /// `I + F' F`.
    pub fn i_plus_ftf(&self) -> Mat {
        let k = self.f.ncols();
        Mat::identity(k, k) + self.f.transpose() * &self.f
    }
}

pub fn build_dense_operators(plant: &LtvPlant) -> Result<DenseOperators> {
    if plant.x0.iter().any(|v| *v != 0.0) {
        return Err(Error::Precondition("dense operators assume x0 = 0".into()));
    }
    let (n, m, p, t_len) = (plant.n(), plant.m(), plant.p(), plant.horizon());
    let mut f = Mat::zeros(n * t_len, m * t_len);
    let mut g = Mat::zeros(n * t_len, p * t_len);
    for j in 0..t_len {
        let sj = plant.stage(j);
        // propagated input columns: Phi(t, j+1) B_{.,j}
        let mut pu = sj.b_u.clone();
        let mut pw = sj.b_w.clone();
        for t in (j + 1)..t_len {
            let st = plant.stage(t);
            f.view_mut((t * n, j * m), (n, m)).copy_from(&(&st.q_sqrt * &pu));
            g.view_mut((t * n, j * p), (n, p)).copy_from(&(&st.q_sqrt * &pw));
            pu = &st.a * pu;
            pw = &st.a * pw;
        }
    }
    Ok(DenseOperators { f, g, n, m, p, horizon: t_len })
}

pub fn stack(parts: &[Vector]) -> Vector {
    let len = parts.iter().map(|v| v.len()).sum();
    let mut out = Vector::zeros(len);
    let mut i = 0;
    for v in parts {
        out.rows_mut(i, v.len()).copy_from(v);
        i += v.len();
    }
    out
}

pub fn unstack(v: &Vector, dim: usize) -> Vec<Vector> {
    if dim == 0 {
        return Vec::new();
    }
    (0..v.len() / dim).map(|t| v.rows(t * dim, dim).into_owned()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn scalar(v: f64) -> Mat {
        Mat::from_element(1, 1, v)
    }

    #[test]
    fn scalar_normalization() {
        let p = normalize_control_weight(scalar(1.0), scalar(2.0), scalar(1.0), scalar(1.0), scalar(4.0))
            .unwrap();
        assert_relative_eq!(p.b_u()[(0, 0)], 1.0, epsilon = 1e-14);
        assert_relative_eq!(p.r_sqrt()[(0, 0)], 2.0, epsilon = 1e-14);
    }

    #[test]
    fn identity_weight_leaves_plant_unchanged() {
        let b = Mat::from_row_slice(2, 1, &[0.3, -1.2]);
        let p = normalize_control_weight(
            Mat::identity(2, 2),
            b.clone(),
            Mat::identity(2, 2),
            Mat::identity(2, 2),
            Mat::identity(1, 1),
        )
        .unwrap();
        assert_eq!(p.b_u(), &b);
    }

    #[test]
    fn rejects_indefinite_weights() {
        let err = normalize_control_weight(scalar(1.0), scalar(1.0), scalar(1.0), scalar(1.0), scalar(0.0));
        assert!(matches!(err, Err(Error::NotPositiveDefinite { what: "R", .. })));
        let err = LtiPlant::new(scalar(1.0), scalar(1.0), scalar(1.0), scalar(-1.0));
        assert!(matches!(err, Err(Error::NotPsd { what: "Q", .. })));
    }

    #[test]
    fn single_step_operators_vanish() {
        let p = LtiPlant::new(scalar(0.7), scalar(1.0), scalar(1.0), scalar(1.0)).unwrap();
        let ops = build_dense_operators(&p.to_ltv(1)).unwrap();
        assert_eq!(ops.f, scalar(0.0));
        assert_eq!(ops.g, scalar(0.0));
    }

    #[test]
    fn two_step_scalar_operators() {
        let p = LtiPlant::new(scalar(1.0), scalar(1.0), scalar(1.0), scalar(1.0)).unwrap();
        let ops = build_dense_operators(&p.to_ltv(2)).unwrap();
        let expected = Mat::from_row_slice(2, 2, &[0.0, 0.0, 1.0, 0.0]);
        assert_eq!(ops.f, expected);
        assert_eq!(ops.g, expected);
    }

    #[test]
    fn nonzero_initial_state_rejected_by_dense_path() {
        let p = LtiPlant::new(scalar(1.0), scalar(1.0), scalar(1.0), scalar(1.0))
            .unwrap()
            .with_initial_state(Vector::from_element(1, 1.0))
            .unwrap();
        assert!(matches!(build_dense_operators(&p.to_ltv(3)), Err(Error::Precondition(_))));
    }
}
