//! Property suite checking the factorization, offline solution and
//! controller guarantees of one plant against independent dense oracles.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::controllers::{self, Causality, Controller, GainSchedule, Horizon, Law};
use crate::error::{Error, Result};
use crate::factorization::{self, WPrimeFilter};
use crate::freq;
use crate::linalg::{Mat, Vector};
use crate::model::{self, LtiPlant, LtvPlant};
use crate::random;
use crate::search;
use crate::sim;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Pass,
    Fail,
    /// Preconditions of the property do not hold for this plant.
    Skipped,
}

impl Status {
    pub fn name(self) -> &'static str {
        match self {
            Status::Pass => "pass",
            Status::Fail => "fail",
            Status::Skipped => "skipped",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PropertyResult {
    pub name: &'static str,
    pub status: Status,
    /// Measured error (or ratio margin); compared against `tolerance`.
    pub value: f64,
    pub tolerance: f64,
    pub detail: String,
}

impl PropertyResult {
    fn check(name: &'static str, value: f64, tolerance: f64) -> Self {
        let status = if value <= tolerance { Status::Pass } else { Status::Fail };
        Self { name, status, value, tolerance, detail: String::new() }
    }

    fn skipped(name: &'static str, why: String) -> Self {
        Self { name, status: Status::Skipped, value: f64::NAN, tolerance: f64::NAN, detail: why }
    }

    fn errored(name: &'static str, e: &Error) -> Self {
        Self { name, status: Status::Fail, value: f64::NAN, tolerance: f64::NAN, detail: format!("{e}") }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct VerifyOptions {
    pub horizon: usize,
    /// Random `(u, w)` pairs or disturbance sequences per property.
    pub samples: usize,
    pub frequencies: usize,
    pub seed: u64,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self { horizon: 12, samples: 5, frequencies: 64, seed: 0 }
    }
}

fn rel_fro(a: &Mat, b: &Mat) -> f64 {
    (a - b).norm() / b.norm().max(f64::MIN_POSITIVE)
}

/// Finite-horizon copy of `plant` started at rest.
fn at_rest(plant: &LtiPlant, horizon: usize) -> LtvPlant {
    let mut p = plant.to_ltv(horizon);
    p.x0 = Vector::zeros(plant.n());
    p
}

/// Simulated outputs `Q^{1/2} x_t` versus `F u + G w`.
pub fn dense_operator_consistency(plant: &LtvPlant, samples: usize, seed: u64) -> Result<f64> {
    let ops = model::build_dense_operators(plant)?;
    let mut rng = random::rng(seed, 1);
    let mut worst: f64 = 0.0;
    for _ in 0..samples {
        let u = random::gaussian_sequence(&mut rng, plant.m(), plant.horizon());
        let w = random::gaussian_sequence(&mut rng, plant.p(), plant.horizon());
        let (xs, _) = plant.simulate(&u, &w)?;
        let s: Vec<Vector> = xs.iter().take(plant.horizon()).enumerate().map(|(t, x)| &plant.stage(t).q_sqrt * x).collect();
        let s = model::stack(&s);
        let dense = &ops.f * model::stack(&u) + &ops.g * model::stack(&w);
        worst = worst.max((&s - &dense).norm() / dense.norm().max(1.0));
    }
    Ok(worst)
}

/// `||Delta Delta' - (I + F F')||_F / ||I + F F'||_F` for the whitening schedule.
pub fn fh_factorization_error(plant: &LtvPlant) -> Result<f64> {
    let ops = model::build_dense_operators(plant)?;
    let schedule = factorization::whitening_fh(plant)?;
    let d = factorization::dense_delta(plant, &schedule);
    Ok(rel_fro(&(&d * d.transpose()), &ops.i_plus_fft()))
}

/// Worst relative error of `Delta(z) Delta(z)* = I + F(z) F(z)*` on `points`
/// frequencies in `[0, pi]`.
pub fn ih_factorization_error(plant: &LtiPlant, points: usize) -> Result<f64> {
    let factor = factorization::spectral_factor_ih(plant)?;
    let n = plant.n();
    let mut worst: f64 = 0.0;
    for omega in freq::grid(points) {
        let z = freq::unit_circle(omega);
        let d = factorization::delta_at(plant, &factor, z)?;
        let f = plant.f_at(z)?;
        let target = crate::linalg::CMat::identity(n, n) + &f * f.adjoint();
        worst = worst.max((&d * d.adjoint() - &target).norm() / target.norm());
    }
    Ok(worst)
}

/// Offline controls and cost versus the stacked least-squares problem
/// `min_u ||F u + G w||^2 + ||u||^2` solved by SVD. Returns the larger of the
/// relative control and cost errors.
pub fn offline_vs_least_squares(plant: &LtvPlant, w: &[Vector]) -> Result<f64> {
    let ops = model::build_dense_operators(plant)?;
    let k = ops.f.ncols();
    let lhs = crate::linalg::vstack(&[&ops.f, &Mat::identity(k, k)]);
    let gw = &ops.g * model::stack(w);
    let mut rhs = Vector::zeros(lhs.nrows());
    rhs.rows_mut(0, gw.len()).copy_from(&(-&gw));
    let u_ls = lhs.svd(true, true).solve(&rhs, 1e-14).map_err(|e| Error::Numeric(format!("least squares: {e}")))?;
    let s = &ops.f * &u_ls + &gw;
    let cost_ls = s.norm_squared() + u_ls.norm_squared();
    let sol = controllers::offline_optimal(plant, w)?;
    let sweep = controllers::offline_sweep(plant, w)?;
    let u = model::stack(&sol.u);
    let u_err = (&u - &u_ls).norm() / u_ls.norm().max(1.0);
    let sweep_err = (model::stack(&sweep.u) - &u_ls).norm() / u_ls.norm().max(1.0);
    let cost_err = (sol.cost - cost_ls).abs().max((sweep.cost - cost_ls).abs()) / cost_ls.max(1.0);
    Ok(u_err.max(sweep_err).max(cost_err))
}

/// `||w'||^2` equals the offline cost `OPT` (the filter whitens `G w`).
pub fn wprime_energy_error(plant: &LtvPlant, w: &[Vector]) -> Result<f64> {
    let schedule = factorization::whitening_fh(plant)?;
    let filter = WPrimeFilter::for_schedule(plant, &schedule);
    let wp = factorization::wprime_run(&filter, w)?;
    let energy: f64 = wp.iter().map(|v| v.norm_squared()).sum();
    let opt = controllers::offline_optimal(plant, w)?.cost;
    Ok((energy - opt).abs() / opt.max(1.0))
}

/// Largest change in `w'_0..w'_{t+1}` when `w_{t+1}..` is replaced by fresh
/// noise; zero for a strictly causal filter.
pub fn strict_causality_violation(plant: &LtvPlant, w: &[Vector], seed: u64) -> Result<f64> {
    let schedule = factorization::whitening_fh(plant)?;
    let filter = WPrimeFilter::for_schedule(plant, &schedule);
    let base = factorization::wprime_run(&filter, w)?;
    let mut rng = random::rng(seed, 2);
    let mut worst: f64 = 0.0;
    for t in 0..w.len().saturating_sub(1) {
        let mut alt = w.to_vec();
        for v in alt.iter_mut().skip(t + 1) {
            *v = random::gaussian_vec(&mut rng, v.len()) * 10.0;
        }
        let other = factorization::wprime_run(&filter, &alt)?;
        for s in 0..=(t + 1).min(w.len() - 1) {
            worst = worst.max((&base[s] - &other[s]).amax());
        }
    }
    Ok(worst)
}

/// Costs of `controllers` and the offline optimum on shared disturbances.
/// Returns the largest `(OPT - cost) / OPT`, which must not be positive.
pub fn offline_minimality(plant: &LtvPlant, controllers: &[(String, Controller)], ws: &[Vec<Vector>]) -> Result<f64> {
    let mut worst = f64::NEG_INFINITY;
    for w in ws {
        let cmp = sim::compare(plant, controllers, w)?;
        for row in &cmp.rows {
            worst = worst.max((cmp.opt_cost - row.total_cost) / cmp.opt_cost.max(1e-300));
        }
    }
    Ok(worst)
}

/// Largest `cost / OPT - gamma^2` for the controller over `ws`.
pub fn competitive_bound_margin(plant: &LtvPlant, controller: &Controller, ws: &[Vec<Vector>]) -> Result<f64> {
    let gamma = controller.gamma.ok_or_else(|| Error::InvalidArgument("controller has no level".into()))?;
    let mut worst = f64::NEG_INFINITY;
    for w in ws {
        let trace = sim::rollout(plant, controller, w)?;
        let opt = controllers::offline_optimal(plant, w)?.cost;
        let ratio = match sim::Ratio::of(trace.total_cost, opt) {
            sim::Ratio::Value(r) => r,
            // 0 / 0 is within any bound; c / 0 with c > 0 is not
            sim::Ratio::DegenerateDenominator => {
                if trace.total_cost <= sim::ZERO_COST {
                    continue;
                }
                f64::INFINITY
            }
        };
        worst = worst.max(ratio - gamma * gamma);
    }
    Ok(worst)
}

/// Largest `cost / ||w||^2 - gamma^2` for the controller over `ws`.
pub fn hinf_bound_margin(plant: &LtvPlant, controller: &Controller, ws: &[Vec<Vector>]) -> Result<f64> {
    let gamma = controller.gamma.ok_or_else(|| Error::InvalidArgument("controller has no level".into()))?;
    let mut worst = f64::NEG_INFINITY;
    for w in ws {
        let trace = sim::rollout(plant, controller, w)?;
        let energy: f64 = w.iter().map(|v| v.norm_squared()).sum();
        worst = worst.max(trace.total_cost / energy - gamma * gamma);
    }
    Ok(worst)
}

fn constant_gain(c: &Controller) -> Option<Mat> {
    match &c.law {
        Law::StateFeedback(GainSchedule::Constant(g)) => Some(crate::linalg::hstack(&[&g.state, &g.input])),
        _ => None,
    }
}

/// Largest entry of `K_hinf(gamma) - K_lqr` for the causal gains `[state, input]`.
pub fn hinf_lqr_gap(plant: &LtiPlant, gamma: f64) -> Result<f64> {
    let h = controllers::synth_hinf(plant, gamma, Causality::Causal, Horizon::Infinite)?;
    let l = controllers::synth_h2_ih(plant, Causality::Causal)?;
    match (constant_gain(&h), constant_gain(&l)) {
        (Some(a), Some(b)) => Ok((a - b).amax()),
        _ => Err(Error::Numeric("expected constant state-feedback gains".into())),
    }
}

/// Runs every property on `plant`.
pub fn run_suite(plant: &LtiPlant, opts: &VerifyOptions) -> Vec<PropertyResult> {
    let t = opts.horizon.max(2);
    let ltv = at_rest(plant, t);
    let mut rng = random::rng(opts.seed, 3);
    let ws: Vec<Vec<Vector>> =
        (0..opts.samples.max(1)).map(|_| random::gaussian_sequence(&mut rng, plant.p(), t)).collect();
    let mut out = Vec::new();

    let push = |out: &mut Vec<PropertyResult>, name: &'static str, r: Result<f64>, tol: f64| {
        out.push(match r {
            Ok(v) => PropertyResult::check(name, v, tol),
            Err(e) => PropertyResult::errored(name, &e),
        })
    };
    push(&mut out, "dense-operators-match-simulation", dense_operator_consistency(&ltv, opts.samples, opts.seed), 1e-10);
    push(&mut out, "finite-horizon-factorization", fh_factorization_error(&ltv), 1e-8);
    push(&mut out, "offline-matches-least-squares", worst_of(&ws, |w| offline_vs_least_squares(&ltv, w)), 1e-8);
    push(&mut out, "wprime-energy-equals-offline-cost", worst_of(&ws, |w| wprime_energy_error(&ltv, w)), 1e-8);
    push(&mut out, "wprime-strictly-causal", strict_causality_violation(&ltv, &ws[0], opts.seed), 0.0);

    let fh = search::optimal_competitive(plant, Causality::Causal, Horizon::Finite(t), 1e-4)
        .and_then(|s| controllers::synth_competitive(plant, s.gamma * 1.001, Causality::Causal, Horizon::Finite(t)));
    push(&mut out, "competitive-cost-bound", fh.as_ref().map_err(Clone::clone).and_then(|c| competitive_bound_margin(&ltv, c, &ws)), 1e-3);
    let hinf = search::optimal_hinf(plant, Causality::Causal, Horizon::Finite(t), 1e-4)
        .and_then(|s| controllers::synth_hinf(plant, s.gamma * 1.01, Causality::Causal, Horizon::Finite(t)));
    push(&mut out, "hinf-energy-bound", hinf.as_ref().map_err(Clone::clone).and_then(|c| hinf_bound_margin(&ltv, c, &ws)), 1e-3);
    let online: Result<Vec<(String, Controller)>> = (|| {
        let mut v = alloc::vec![("zero".into(), Controller::zero(plant.n(), plant.m(), plant.p()))];
        v.push(("competitive".into(), fh.clone()?));
        v.push(("hinf".into(), hinf.clone()?));
        Ok(v)
    })();
    push(&mut out, "offline-is-minimal", online.and_then(|c| offline_minimality(&ltv, &c, &ws)), 1e-12);

    let ih_name = "infinite-horizon-factorization";
    let lqr_name = "hinf-approaches-lqr";
    match ih_preconditions(plant) {
        Some(why) => {
            out.push(PropertyResult::skipped(ih_name, why.clone()));
            out.push(PropertyResult::skipped(lqr_name, why));
        }
        None => {
            push(&mut out, ih_name, ih_factorization_error(plant, opts.frequencies), 1e-7);
            push(&mut out, lqr_name, hinf_lqr_gap(plant, 1e6), 1e-4);
        }
    }
    out
}

fn worst_of<F: FnMut(&[Vector]) -> Result<f64>>(ws: &[Vec<Vector>], mut f: F) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for w in ws {
        worst = worst.max(f(w)?);
    }
    Ok(worst)
}

/// Reason the infinite-horizon properties do not apply, if any.
fn ih_preconditions(plant: &LtiPlant) -> Option<String> {
    let tol = factorization::PBH_TOL;
    match crate::linalg::is_stabilizable(plant.a(), plant.b_u(), tol) {
        Ok(true) => {}
        Ok(false) => return Some("(A, B_u) is not stabilizable".into()),
        Err(e) => return Some(format!("{e}")),
    }
    match crate::linalg::is_detectable(plant.a(), plant.q_sqrt(), tol) {
        Ok(true) => None,
        Ok(false) => Some("(A, Q^{1/2}) is not detectable".into()),
        Err(e) => Some(format!("{e}")),
    }
}

pub fn all_passed(results: &[PropertyResult]) -> bool {
    results.iter().all(|r| r.status != Status::Fail)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn random_plant_passes() {
        let plant = random::random_plant(1, 3, 2, 2).unwrap();
        let results = run_suite(&plant, &VerifyOptions::default());
        for r in &results {
            assert_eq!(r.status, Status::Pass, "{r:?}");
        }
        assert_eq!(results.len(), 10);
    }

    #[test]
    fn undetectable_plant_skips_infinite_horizon() {
        let s = |v: f64| Mat::from_element(1, 1, v);
        let plant = LtiPlant::new(s(2.0), s(1.0), s(1.0), s(0.0)).unwrap();
        let results = run_suite(&plant, &VerifyOptions { samples: 2, ..Default::default() });
        let ih = results.iter().find(|r| r.name == "infinite-horizon-factorization").unwrap();
        assert_eq!(ih.status, Status::Skipped);
    }
}
