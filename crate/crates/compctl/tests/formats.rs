use compctl::formats::{self, DisturbanceSpecJson};
use compctl::AppError;
use compctl_core::controllers::{self, control_step, Causality, Controller, ControllerState, Horizon};
use compctl_core::linalg::Vector;
use compctl_core::random;
use serde_json::Value;

fn round_trip(c: &Controller) -> Controller {
    let text = serde_json::to_string(&formats::controller_to_json(c)).unwrap();
    formats::controller_from_json(&serde_json::from_str::<Value>(&text).unwrap()).unwrap()
}

/// Same controls on a shared input sequence, bit for bit.
fn same_behavior(a: &Controller, b: &Controller, steps: usize) {
    let (n, _, p) = a.dims;
    let mut rng = random::rng(42, 0);
    let (mut sa, mut sb) = (ControllerState::new(a), ControllerState::new(b));
    for _ in 0..steps {
        let x = random::gaussian_vec(&mut rng, n);
        let w = random::gaussian_vec(&mut rng, p);
        let ua = control_step(a, &mut sa, &x, &w).unwrap();
        let ub = control_step(b, &mut sb, &x, &w).unwrap();
        assert_eq!(ua.u, ub.u);
        assert_eq!(ua.wprime, ub.wprime);
    }
}

#[test]
fn infinite_horizon_controllers_round_trip() {
    let plant = formats::boeing();
    for c in [
        controllers::synth_h2_ih(&plant, Causality::Causal).unwrap(),
        controllers::synth_hinf(&plant, 50.0, Causality::StrictlyCausal, Horizon::Infinite).unwrap(),
        controllers::synth_competitive(&plant, 1.34, Causality::Causal, Horizon::Infinite).unwrap(),
        Controller::zero(4, 2, 4),
    ] {
        let back = round_trip(&c);
        assert_eq!(back, c);
        same_behavior(&c, &back, 20);
    }
}

#[test]
fn finite_horizon_competitive_round_trips() {
    let plant = random::random_plant(3, 3, 2, 2).unwrap();
    let c = controllers::synth_competitive(&plant, 5.0, Causality::Causal, Horizon::Finite(6)).unwrap();
    let back = round_trip(&c);
    assert_eq!(back, c);
    same_behavior(&c, &back, 6);
}

#[test]
fn controller_json_has_version_and_no_level_for_h2() {
    let plant = formats::boeing();
    let v = formats::controller_to_json(&controllers::synth_h2_ih(&plant, Causality::Causal).unwrap());
    assert_eq!(v["schema_version"], 1);
    assert_eq!(v["horizon"], "infinite");
    assert!(v.get("gamma").is_none());
}

#[test]
fn unknown_schema_version_is_rejected() {
    let plant = formats::boeing();
    let mut v = formats::controller_to_json(&Controller::zero(plant.n(), plant.m(), plant.p()));
    v["schema_version"] = 2.into();
    assert!(matches!(formats::controller_from_json(&v), Err(AppError::Format { .. })));
    let text = r#"{"schema_version": 9, "A": [[1]], "Bu": [[1]], "Bw": [[1]], "Q": [[1]]}"#;
    assert!(formats::parse_plant(text).is_err());
}

#[test]
fn disturbance_spec_round_trips() {
    let text = r#"{"kind": "sine-mean-gaussian", "sigma": 1.0, "mean_amplitude": 1.0, "mean_omega": 0.001, "length": 1001, "seed": 4}"#;
    let d = formats::parse_disturbance(text).unwrap();
    let back: DisturbanceSpecJson = serde_json::from_str(&serde_json::to_string(&d).unwrap()).unwrap();
    assert_eq!(back, d);
    let spec = d.to_core(None, 0).unwrap();
    assert_eq!((spec.length, spec.seed), (1001, 4));
    let w = compctl_core::sim::generate_disturbance(&spec, 1).unwrap();
    assert_eq!(w.len(), 1001);
    assert!(w.iter().all(|v: &Vector| v.len() == 1));
}

#[test]
fn plant_file_round_trips() {
    let text = formats::BOEING_JSON;
    let file: formats::PlantFile = serde_json::from_str(text).unwrap();
    let again: formats::PlantFile = serde_json::from_str(&serde_json::to_string(&file).unwrap()).unwrap();
    let a = file.into_plant().unwrap().plant;
    let b = again.into_plant().unwrap().plant;
    assert_eq!(a.a(), b.a());
    assert_eq!(a.b_u(), b.b_u());
}
