#![allow(dead_code)]

use compctl_core::linalg::{Mat, Vector};
use compctl_core::model::{LtiPlant, LtvPlant};

pub fn boeing() -> LtiPlant {
    let a = Mat::from_row_slice(4, 4, &[
        0.99, 0.03, -0.02, -0.32,
        0.01, 0.47, 4.7, 0.0,
        0.02, -0.06, 0.40, 0.0,
        0.01, -0.04, 0.72, 0.99,
    ]);
    let b_u = Mat::from_row_slice(4, 2, &[
        0.01, 0.99,
        -3.44, 1.66,
        -0.83, 0.44,
        -0.47, 0.25,
    ]);
    LtiPlant::new(a, b_u, Mat::identity(4, 4), Mat::identity(4, 4)).unwrap()
}

pub fn at_rest(plant: &LtiPlant, horizon: usize) -> LtvPlant {
    let mut p = plant.to_ltv(horizon);
    p.x0 = Vector::zeros(plant.n());
    p
}

pub fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let k = v.len();
    if k % 2 == 1 { v[k / 2] } else { 0.5 * (v[k / 2 - 1] + v[k / 2]) }
}
