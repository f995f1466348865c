//! Disturbance generation, closed-loop rollouts and cost comparison.
//!
//! Random disturbances come from ChaCha20 (`rand_chacha`) seeded with
//! `seed_from_u64(seed)`. Component `i` of a mixture (and the single
//! component of a plain spec, `i = 0`) draws from stream `i`. Gaussian
//! samples are drawn time-major, coordinate-minor.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::controllers::{self, Controller, ControllerState, Law};
use crate::error::{Error, Infeasibility, Result};
use crate::linalg::Vector;
use crate::model::LtvPlant;

#[derive(Debug, Clone, PartialEq)]
pub enum Disturbance {
    /// i.i.d. `N(0, sigma^2)` in every coordinate.
    WhiteGaussian { sigma: f64 },
    /// `amplitude * sin(omega * t) * direction`.
    Sinusoid { omega: f64, amplitude: f64, direction: Option<Vec<f64>> },
    /// `levels[j] * direction` where `j` counts the switch times `<= t`.
    Step { levels: Vec<f64>, switch_times: Vec<usize>, direction: Option<Vec<f64>> },
    /// Constant `direction`.
    Dc { direction: Option<Vec<f64>> },
    /// i.i.d. `N(mean_amplitude * sin(mean_omega * t), sigma^2)` per coordinate of `direction`'s support;
    /// the mean is applied along `direction`.
    SineMeanGaussian { sigma: f64, mean_amplitude: f64, mean_omega: f64, direction: Option<Vec<f64>> },
    /// Weighted sum of components.
    Mixture { components: Vec<Disturbance>, weights: Vec<f64> },
}

impl Disturbance {
    /// Equal-weight mixture of `components`.
    pub fn mixture(components: Vec<Disturbance>) -> Self {
        let k = components.len().max(1);
        let weights = vec![1.0 / k as f64; components.len()];
        Disturbance::Mixture { components, weights }
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            Disturbance::WhiteGaussian { .. } => "white-gaussian",
            Disturbance::Sinusoid { .. } => "sinusoid",
            Disturbance::Step { .. } => "step",
            Disturbance::Dc { .. } => "dc",
            Disturbance::SineMeanGaussian { .. } => "sine-mean-gaussian",
            Disturbance::Mixture { .. } => "mixture",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DisturbanceSpec {
    pub kind: Disturbance,
    pub length: usize,
    pub seed: u64,
}

fn unit_direction(direction: &Option<Vec<f64>>, p: usize) -> Result<Vector> {
    let v = match direction {
        Some(d) => {
            if d.len() != p {
                return Err(Error::Dimension(format!("direction has length {}, expected {p}", d.len())));
            }
            Vector::from_column_slice(d)
        }
        None => Vector::from_element(p, 1.0),
    };
    let norm = v.norm();
    if norm == 0.0 || !norm.is_finite() {
        return Err(Error::InvalidArgument("direction must be a nonzero finite vector".into()));
    }
    Ok(v / norm)
}

fn expand(kind: &Disturbance, length: usize, p: usize, seed: u64, stream: u64) -> Result<Vec<Vector>> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    Ok(match kind {
        Disturbance::WhiteGaussian { sigma } => (0..length)
            .map(|_| Vector::from_iterator(p, (0..p).map(|_| sigma * sample(&mut rng))))
            .collect(),
        Disturbance::Sinusoid { omega, amplitude, direction } => {
            let d = unit_direction(direction, p)?;
            (0..length).map(|t| &d * (amplitude * libm::sin(omega * t as f64))).collect()
        }
        Disturbance::Step { levels, switch_times, direction } => {
            if levels.len() != switch_times.len() + 1 {
                return Err(Error::InvalidArgument("step needs one more level than switch times".into()));
            }
            let d = unit_direction(direction, p)?;
            (0..length)
                .map(|t| {
                    let j = switch_times.iter().filter(|&&s| s <= t).count();
                    &d * levels[j]
                })
                .collect()
        }
        Disturbance::Dc { direction } => {
            let d = unit_direction(direction, p)?;
            vec![d; length]
        }
        Disturbance::SineMeanGaussian { sigma, mean_amplitude, mean_omega, direction } => {
            let d = unit_direction(direction, p)?;
            (0..length)
                .map(|t| {
                    let mean = &d * (mean_amplitude * libm::sin(mean_omega * t as f64));
                    mean + Vector::from_iterator(p, (0..p).map(|_| sigma * sample(&mut rng)))
                })
                .collect()
        }
        Disturbance::Mixture { components, weights } => {
            if components.len() != weights.len() || components.is_empty() {
                return Err(Error::InvalidArgument("mixture needs one weight per component".into()));
            }
            let mut out = vec![Vector::zeros(p); length];
            for (i, (c, wgt)) in components.iter().zip(weights).enumerate() {
                if matches!(c, Disturbance::Mixture { .. }) {
                    return Err(Error::InvalidArgument("nested mixtures are not supported".into()));
                }
                for (acc, v) in out.iter_mut().zip(expand(c, length, p, seed, i as u64)?) {
                    *acc += v * *wgt;
                }
            }
            out
        }
    })
}

fn sample(rng: &mut ChaCha20Rng) -> f64 {
    StandardNormal.sample(rng)
}

/// Expands a spec into `w_0..w_{T-1}` with `p` coordinates each.
pub fn generate_disturbance(spec: &DisturbanceSpec, p: usize) -> Result<Vec<Vector>> {
    expand(&spec.kind, spec.length, p, spec.seed, 0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub t: usize,
    pub w: Vector,
    pub wprime: Option<Vector>,
    pub x: Vector,
    pub xi: Option<Vector>,
    pub u: Vector,
    pub step_cost: f64,
    pub cum_cost: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Failure {
    /// State or cost became non-finite at this step.
    NonFinite { step: usize },
    /// State norm exceeded the divergence threshold.
    Diverged { step: usize },
    /// Synthesis failed at this step (MPC re-synthesis).
    Synthesis { step: usize, verdict: Option<Infeasibility>, message: String },
}

impl Failure {
    pub fn code(&self) -> &'static str {
        match self {
            Failure::NonFinite { .. } => "non-finite",
            Failure::Diverged { .. } => "diverged",
            Failure::Synthesis { .. } => "synthesis-failed",
        }
    }

    pub fn step(&self) -> usize {
        match self {
            Failure::NonFinite { step } | Failure::Diverged { step } | Failure::Synthesis { step, .. } => *step,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub label: String,
    pub rows: Vec<TraceRow>,
    pub total_cost: f64,
    pub failure: Option<Failure>,
}

impl Trace {
    pub fn new(label: impl Into<String>) -> Self {
        Self { label: label.into(), rows: Vec::new(), total_cost: 0.0, failure: None }
    }

    pub fn push(&mut self, t: usize, w: Vector, wprime: Option<Vector>, x: Vector, xi: Option<Vector>, u: Vector, step_cost: f64) {
        self.total_cost += step_cost;
        let cum_cost = self.total_cost;
        self.rows.push(TraceRow { t, w, wprime, x, xi, u, step_cost, cum_cost });
    }

    pub fn is_complete(&self) -> bool {
        self.failure.is_none()
    }
}

/// Simulates `x_{t+1} = A_t x_t + B_u u_t + B_w w_t` under `controller`.
/// The offline controller is solved in batch first and then replayed.
pub fn rollout(plant: &LtvPlant, controller: &Controller, w: &[Vector]) -> Result<Trace> {
    if w.len() > plant.horizon() {
        return Err(Error::Dimension(format!("plant horizon {} is shorter than {} disturbances", plant.horizon(), w.len())));
    }
    if let Some(bad) = w.iter().find(|v| v.len() != plant.p()) {
        return Err(Error::Dimension(format!("disturbance of length {}, expected {}", bad.len(), plant.p())));
    }
    let offline = match controller.law {
        Law::Offline => {
            let sub = LtvPlant::new(plant.stages()[..w.len()].to_vec(), Some(plant.x0.clone()))?;
            Some(controllers::offline_optimal(&sub, w)?.u)
        }
        _ => None,
    };
    let mut trace = Trace::new(controller.label());
    let mut state = ControllerState::new(controller);
    let mut x = plant.x0.clone();
    for (t, wt) in w.iter().enumerate() {
        let stage = plant.stage(t);
        let (u, wprime) = match &offline {
            Some(us) => (us[t].clone(), None),
            None => {
                let out = controllers::control_step(controller, &mut state, &x, wt)?;
                (out.u, out.wprime)
            }
        };
        let cost = stage.step_cost(&x, &u);
        let next = stage.next_state(&x, &u, wt);
        let xi = if state.xi.is_empty() { None } else { Some(state.xi.clone()) };
        if !cost.is_finite() || !next.iter().all(|v| v.is_finite()) {
            trace.failure = Some(Failure::NonFinite { step: t });
            break;
        }
        trace.push(t, wt.clone(), wprime, x, xi, u, cost);
        x = next;
    }
    Ok(trace)
}

/// Both costs below this count as zero when forming ratios.
pub const ZERO_COST: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Ratio {
    Value(f64),
    /// OPT is zero but the controller's cost is not.
    DegenerateDenominator,
}

impl Ratio {
    pub fn of(cost: f64, opt: f64) -> Self {
        if opt < ZERO_COST {
            if cost < ZERO_COST {
                Ratio::Value(1.0)
            } else {
                Ratio::DegenerateDenominator
            }
        } else {
            Ratio::Value(cost / opt)
        }
    }

    pub fn value(self) -> Option<f64> {
        match self {
            Ratio::Value(v) => Some(v),
            Ratio::DegenerateDenominator => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonRow {
    pub name: String,
    pub total_cost: f64,
    pub ratio_to_opt: Ratio,
    pub failure: Option<Failure>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    pub opt_cost: f64,
    pub rows: Vec<ComparisonRow>,
    pub traces: Vec<Trace>,
}

/// Rolls out every controller on the same `w` and reports costs against the
/// offline optimum over the same window. The offline row comes first.
pub fn compare(plant: &LtvPlant, controllers: &[(String, Controller)], w: &[Vector]) -> Result<Comparison> {
    let (n, m, p) = (plant.n(), plant.m(), plant.p());
    let offline = Controller::offline(n, m, p);
    let opt_trace = rollout(plant, &offline, w)?;
    let opt_cost = opt_trace.total_cost;
    let mut rows = vec![ComparisonRow {
        name: "offline".into(),
        total_cost: opt_cost,
        ratio_to_opt: Ratio::of(opt_cost, opt_cost),
        failure: None,
    }];
    let mut traces = vec![opt_trace];
    for (name, c) in controllers {
        if matches!(c.law, Law::Offline) {
            continue;
        }
        let mut tr = rollout(plant, c, w)?;
        tr.label = name.clone();
        rows.push(ComparisonRow {
            name: name.clone(),
            total_cost: tr.total_cost,
            ratio_to_opt: Ratio::of(tr.total_cost, opt_cost),
            failure: tr.failure.clone(),
        });
        traces.push(tr);
    }
    Ok(Comparison { opt_cost, rows, traces })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::Mat;
    use crate::model::LtiPlant;

    fn s(v: f64) -> Mat {
        Mat::from_element(1, 1, v)
    }

    #[test]
    fn dc_repeats_direction() {
        let spec = DisturbanceSpec { kind: Disturbance::Dc { direction: Some(vec![1.0, 0.0]) }, length: 3, seed: 0 };
        let w = generate_disturbance(&spec, 2).unwrap();
        assert_eq!(w, vec![Vector::from_vec(vec![1.0, 0.0]); 3]);
    }

    #[test]
    fn step_switches_sign() {
        let spec = DisturbanceSpec {
            kind: Disturbance::Step { levels: vec![1.0, -1.0], switch_times: vec![500], direction: None },
            length: 1000,
            seed: 0,
        };
        let w = generate_disturbance(&spec, 1).unwrap();
        assert!(w[..500].iter().all(|v| v[0] == 1.0));
        assert!(w[500..].iter().all(|v| v[0] == -1.0));
    }

    #[test]
    fn white_noise_is_reproducible() {
        let spec = DisturbanceSpec { kind: Disturbance::WhiteGaussian { sigma: 1.0 }, length: 50, seed: 7 };
        let a = generate_disturbance(&spec, 3).unwrap();
        let b = generate_disturbance(&spec, 3).unwrap();
        assert_eq!(a, b);
        let other = generate_disturbance(&DisturbanceSpec { seed: 8, ..spec }, 3).unwrap();
        assert_ne!(a, other);
    }

    #[test]
    fn sine_mean_has_right_mean_shape() {
        let spec = DisturbanceSpec {
            kind: Disturbance::SineMeanGaussian { sigma: 0.0, mean_amplitude: 1.0, mean_omega: 0.001, direction: None },
            length: 1001,
            seed: 1,
        };
        let w = generate_disturbance(&spec, 1).unwrap();
        assert_eq!(w.len(), 1001);
        assert_eq!(w[1000][0], libm::sin(1.0));
    }

    #[test]
    fn zero_controller_on_zero_disturbance() {
        let plant = LtiPlant::new(s(0.9), s(1.0), s(1.0), s(1.0)).unwrap().to_ltv(5);
        let tr = rollout(&plant, &Controller::zero(1, 1, 1), &vec![Vector::zeros(1); 5]).unwrap();
        assert_eq!(tr.total_cost, 0.0);
        assert!(tr.rows.iter().all(|r| r.x[0] == 0.0 && r.u[0] == 0.0));
    }

    #[test]
    fn offline_replay_matches_example() {
        let plant = LtiPlant::new(s(0.0), s(1.0), s(1.0), s(1.0)).unwrap().to_ltv(2);
        let w = vec![Vector::from_element(1, 1.0), Vector::zeros(1)];
        let tr = rollout(&plant, &Controller::offline(1, 1, 1), &w).unwrap();
        assert!((tr.total_cost - 0.5).abs() < 1e-14);
    }

    #[test]
    fn ratio_conventions() {
        assert_eq!(Ratio::of(0.0, 0.0), Ratio::Value(1.0));
        assert_eq!(Ratio::of(1.0, 0.0), Ratio::DegenerateDenominator);
        assert_eq!(Ratio::of(3.0, 2.0), Ratio::Value(1.5));
    }
}
