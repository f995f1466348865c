mod common;

use common::boeing;
use compctl_core::controllers::{synth_competitive, synth_h2_ih, Causality, Horizon};
use compctl_core::freq;
use compctl_core::search;

#[test]
fn competitive_level_brackets() {
    let plant = boeing();
    assert!(synth_competitive(&plant, 1.335, Causality::Causal, Horizon::Infinite).is_ok());
    assert!(synth_competitive(&plant, 1.30, Causality::Causal, Horizon::Infinite).is_err());
    assert!(synth_competitive(&plant, 1.20, Causality::Causal, Horizon::Infinite).is_err());
}

#[test]
fn competitive_search_and_frequency_profile() {
    let plant = boeing();
    let r = search::optimal_competitive(&plant, Causality::Causal, Horizon::Infinite, 1e-3).unwrap();
    let g2 = r.gamma * r.gamma;
    assert!((1.75..=1.79).contains(&g2), "{g2}");
    assert!(r.warnings.is_empty());
    let pts = freq::sweep(&plant, &r.result, &freq::grid(64)).unwrap();
    let worst = pts.iter().map(|p| p.per_freq_cr.unwrap()).fold(0.0, f64::max);
    assert!(worst <= g2 + 1e-3, "{worst}");
    let h2 = synth_h2_ih(&plant, Causality::Causal).unwrap();
    for p in freq::sweep(&plant, &h2, &freq::grid(64)).unwrap() {
        let v = p.per_freq_cr.unwrap();
        assert!((2.65..=2.95).contains(&v), "{v}");
    }
}

use common::{at_rest, median};
use compctl_core::controllers::{self, synth_hinf, ControllerState};
use compctl_core::linalg::{self, Mat, Vector};
use compctl_core::riccati;
use compctl_core::sim::{self, Disturbance, DisturbanceSpec};

#[test]
fn causal_hinf_matches_closed_form() {
    let plant = boeing();
    let gamma = 30.0;
    let c = synth_hinf(&plant, gamma, Causality::Causal, Horizon::Infinite).unwrap();
    let fp = riccati::hinf_fixed_point(plant.a(), plant.b_u(), plant.b_w(), plant.q(), gamma).unwrap();
    let p = &fp.p;
    let h = Mat::identity(2, 2) + plant.b_u().transpose() * p * plant.b_u();
    let mut state = ControllerState::new(&c);
    let x = Vector::from_vec(vec![0.3, -1.0, 0.2, 0.5]);
    let w = Vector::from_vec(vec![1.0, 0.0, -0.5, 2.0]);
    let out = controllers::control_step(&c, &mut state, &x, &w).unwrap();
    let y = plant.a() * &x + plant.b_w() * &w;
    let expect = -h.lu().solve(&(plant.b_u().transpose() * p * y)).unwrap();
    assert!((&out.u - &expect).amax() <= 1e-9 * expect.amax().max(1.0));
}

fn white(seed: u64, len: usize) -> Vec<Vector> {
    let spec = DisturbanceSpec { kind: Disturbance::WhiteGaussian { sigma: 1.0 }, length: len, seed };
    sim::generate_disturbance(&spec, 4).unwrap()
}

#[test]
fn white_noise_competitive_close_to_h2() {
    let plant = boeing();
    let ltv = at_rest(&plant, 1000);
    let comp = synth_competitive(&plant, 1.3315, Causality::Causal, Horizon::Infinite).unwrap();
    let h2 = synth_h2_ih(&plant, Causality::Causal).unwrap();
    let ratios: Vec<f64> = (0..10)
        .map(|seed| {
            let w = white(seed, 1000);
            sim::rollout(&ltv, &comp, &w).unwrap().total_cost / sim::rollout(&ltv, &h2, &w).unwrap().total_cost
        })
        .collect();
    let m = median(ratios);
    assert!(m <= 1.15, "{m}");
}

#[test]
fn dc_directions_order_costs() {
    let plant = boeing();
    let comp = synth_competitive(&plant, 1.3315, Causality::Causal, Horizon::Infinite).unwrap();
    let dirs = freq::extremal_dc(&plant, &comp).unwrap();
    assert!(dirs.best.dot(&dirs.worst).abs() <= 1e-8);
    let t = 400;
    let ltv = at_rest(&plant, t);
    let cost = |v: &Vector| sim::rollout(&ltv, &comp, &vec![v.clone(); t]).unwrap().total_cost;
    let worst = cost(&dirs.worst);
    let best = cost(&dirs.best);
    assert!(best < worst);
    let mut rng = compctl_core::random::rng(5, 0);
    for _ in 0..8 {
        let v = compctl_core::random::gaussian_vec(&mut rng, 4).normalize();
        let c = cost(&v);
        assert!(c <= worst * (1.0 + 1e-9), "{c} > {worst}");
    }
}

#[test]
fn dc_ratios_at_long_horizon() {
    let plant = boeing();
    let comp = synth_competitive(&plant, 1.3315, Causality::Causal, Horizon::Infinite).unwrap();
    let dirs = freq::extremal_dc(&plant, &comp).unwrap();
    let t = 1000;
    let ltv = at_rest(&plant, t);
    let ratio = |v: &Vector| {
        let w = vec![v.clone(); t];
        sim::rollout(&ltv, &comp, &w).unwrap().total_cost / controllers::offline_optimal(&ltv, &w).unwrap().cost
    };
    let best = ratio(&dirs.best);
    let worst = ratio(&dirs.worst);
    assert!((1.0..=1.02).contains(&best), "{best}");
    assert!((1.3..=1.77).contains(&worst), "{worst}");
}

#[test]
fn sinusoid_power_matches_transfer() {
    let plant = boeing();
    let comp = synth_competitive(&plant, 1.34, Causality::Causal, Horizon::Infinite).unwrap();
    let cl = freq::closed_loop(&plant, &comp).unwrap();
    let t = 4000;
    let ltv = at_rest(&plant, t);
    for (omega, dir) in [(0.3, vec![1.0, 0.0, 0.0, 0.0]), (1.7, vec![0.5, -0.5, 0.5, 0.5])] {
        let v = Vector::from_vec(dir);
        let spec = DisturbanceSpec {
            kind: Disturbance::Sinusoid { omega, amplitude: 1.0, direction: Some(v.iter().cloned().collect()) },
            length: t,
            seed: 0,
        };
        let w = sim::generate_disturbance(&spec, 4).unwrap();
        let trace = sim::rollout(&ltv, &comp, &w).unwrap();
        let tail: f64 = trace.rows[1000..].iter().map(|r| r.step_cost).sum::<f64>() / 3000.0;
        let tv = freq::transfer_at(&cl, omega).unwrap() * linalg::to_complex(&Mat::from_column_slice(4, 1, v.as_slice()));
        let predicted = 0.5 * tv.norm_squared();
        assert!((tail - predicted).abs() <= 0.05 * predicted, "omega {omega}: {tail} vs {predicted}");
    }
}

#[test]
fn hinf_frequency_peak_and_h2_flat() {
    let plant = boeing();
    let h = search::optimal_hinf(&plant, Causality::Causal, Horizon::Infinite, 1e-5).unwrap();
    let pts = freq::sweep(&plant, &h.result, &freq::grid(512)).unwrap();
    let peak = pts.iter().filter_map(|p| p.per_freq_cr).fold(0.0, f64::max);
    assert!((39.0..=48.0).contains(&peak), "{peak}");
}
