//! The five commands as library functions. Each returns a JSON report (also
//! printed by the binary) and writes its artifacts atomically.

use std::path::{Path, PathBuf};

use compctl_core::controllers::{self, Causality, Controller, Horizon, Kind};
use compctl_core::freq;
use compctl_core::linalg::Vector;
use compctl_core::model::LtiPlant;
use compctl_core::mpc::{self, Dynamics, GainCache, GammaPolicy, MpcConfig};
use compctl_core::random;
use compctl_core::search::{self, GammaSearch};
use compctl_core::sim::{self, Comparison, ComparisonRow, Ratio, Trace};
use compctl_core::verify::{self, PropertyResult, VerifyOptions};
use serde_json::{json, Value};

use crate::error::{AppError, AppResult};
use crate::formats::{self, LoadedPlant, ScenarioFile, SCHEMA_VERSION};
use crate::output::{self, write_atomic};

/// Environment variable supplying the default seed.
pub const SEED_ENV: &str = "COMPCTL_SEED";

pub const COMPETITIVE_TOL: f64 = 1e-3;
pub const HINF_TOL: f64 = 1e-5;

/// `boeing` names the bundled plant; anything else is a path.
pub fn load_plant(spec: &str) -> AppResult<LoadedPlant> {
    if spec == "boeing" {
        return formats::parse_plant(formats::BOEING_JSON);
    }
    formats::parse_plant(&output::read_text(Path::new(spec))?)
}

pub fn parse_horizon(s: &str) -> AppResult<Horizon> {
    if s == "infinite" {
        return Ok(Horizon::Infinite);
    }
    match s.parse::<usize>() {
        Ok(t) if t >= 1 => Ok(Horizon::Finite(t)),
        _ => Err(AppError::Usage(format!("horizon must be \"infinite\" or a positive integer, got {s:?}"))),
    }
}

pub fn parse_kind(s: &str) -> AppResult<Kind> {
    Kind::parse(s).ok_or_else(|| AppError::Usage(format!("unknown controller kind {s:?}")))
}

pub fn parse_causality(s: &str) -> AppResult<Causality> {
    Causality::parse(s).ok_or_else(|| AppError::Usage(format!("unknown causality {s:?}")))
}

fn horizon_json(h: Horizon) -> Value {
    match h {
        Horizon::Infinite => json!("infinite"),
        Horizon::Finite(t) => json!(t),
    }
}

fn search_json<T>(s: &GammaSearch<T>) -> Value {
    json!({
        "lo": s.lo,
        "hi": s.hi,
        "iterations": s.iterations,
        "evaluations": s.evaluations,
        "tolerance_achieved": s.tolerance_achieved(),
        "audit_warnings": s.warnings.iter().map(|w| json!({"gamma": w.gamma, "expected_feasible": w.expected_feasible})).collect::<Vec<_>>(),
    })
}

// ---- synth

#[derive(Debug, Clone)]
pub struct SynthArgs {
    pub plant: String,
    pub mode: Kind,
    pub causality: Causality,
    pub horizon: Horizon,
    pub gamma: Option<f64>,
    pub optimize_gamma: bool,
    pub tol: Option<f64>,
    pub out: Option<PathBuf>,
}

/// Synthesizes one controller, either at a fixed level or at the smallest
/// feasible level found by bisection.
pub fn synthesize(plant: &LtiPlant, a: &SynthArgs) -> AppResult<(Controller, Option<Value>)> {
    let h = a.horizon;
    match a.mode {
        Kind::H2 => {
            if a.gamma.is_some() || a.optimize_gamma {
                return Err(AppError::Usage("h2 takes no level".into()));
            }
            if h != Horizon::Infinite {
                return Err(AppError::Usage("h2 is synthesized for the infinite horizon only".into()));
            }
            let c = controllers::synth_h2_ih(plant, a.causality)?;
            Ok((c, None))
        }
        Kind::Hinf | Kind::Competitive => match (a.gamma, a.optimize_gamma) {
            (Some(_), true) => Err(AppError::Usage("pass either --gamma or --optimize-gamma".into())),
            (None, false) => Err(AppError::Usage(format!("{} needs --gamma or --optimize-gamma", a.mode.name()))),
            (Some(g), false) => Ok((
                if a.mode == Kind::Hinf {
                    controllers::synth_hinf(plant, g, a.causality, h)?
                } else {
                    controllers::synth_competitive(plant, g, a.causality, h)?
                },
                None,
            )),
            (None, true) => {
                let s = if a.mode == Kind::Hinf {
                    search::optimal_hinf(plant, a.causality, h, a.tol.unwrap_or(HINF_TOL))?
                } else {
                    search::optimal_competitive(plant, a.causality, h, a.tol.unwrap_or(COMPETITIVE_TOL))?
                };
                let info = search_json(&s);
                Ok((s.result, Some(info)))
            }
        },
        Kind::Offline | Kind::Zero => Ok((
            if a.mode == Kind::Zero {
                Controller::zero(plant.n(), plant.m(), plant.p())
            } else {
                Controller::offline(plant.n(), plant.m(), plant.p())
            },
            None,
        )),
    }
}

pub fn cmd_synth(a: &SynthArgs) -> AppResult<Value> {
    let plant = load_plant(&a.plant)?.plant;
    let (c, search) = synthesize(&plant, a)?;
    let cj = formats::controller_to_json(&c);
    if let Some(out) = &a.out {
        write_atomic(out, &output::json_bytes(&cj))?;
    }
    let mut report = json!({
        "schema_version": SCHEMA_VERSION,
        "mode": c.kind.name(),
        "causality": c.causality.name(),
        "horizon": horizon_json(c.horizon),
        "diagnostics": cj["diagnostics"],
    });
    if let Some(g) = c.gamma {
        report["gamma"] = json!(g);
        report["gamma_squared"] = json!(g * g);
    }
    if let Some(s) = search {
        report["search"] = s;
    }
    if let Some(out) = &a.out {
        report["controller"] = json!(out);
    }
    Ok(report)
}

// ---- simulate and freq

/// A controller selection: a kind name synthesized on the plant or a
/// controller JSON file.
#[derive(Debug, Clone)]
pub struct Selection {
    pub causality: Causality,
    pub horizon: Horizon,
    pub gamma_competitive: Option<f64>,
    pub gamma_hinf: Option<f64>,
}

impl Default for Selection {
    fn default() -> Self {
        Self { causality: Causality::Causal, horizon: Horizon::Infinite, gamma_competitive: None, gamma_hinf: None }
    }
}

/// Resolves names such as `h2` or `controller.json` into controllers.
/// Competitive and H-infinity controllers without an explicit level use
/// the bisection optimum.
pub fn resolve_controllers(plant: &LtiPlant, names: &[String], sel: &Selection) -> AppResult<Vec<(String, Controller)>> {
    let mut out: Vec<(String, Controller)> = Vec::new();
    for name in names {
        let (label, c) = if let Some(kind) = Kind::parse(name) {
            let (gamma, optimize) = match kind {
                Kind::Competitive => (sel.gamma_competitive, sel.gamma_competitive.is_none()),
                Kind::Hinf => (sel.gamma_hinf, sel.gamma_hinf.is_none()),
                _ => (None, false),
            };
            let args = SynthArgs {
                plant: String::new(),
                mode: kind,
                causality: sel.causality,
                horizon: sel.horizon,
                gamma,
                optimize_gamma: optimize,
                tol: None,
                out: None,
            };
            (kind.name().to_string(), synthesize(plant, &args)?.0)
        } else {
            let text = output::read_text(Path::new(name))?;
            let v: Value = serde_json::from_str(&text).map_err(|e| AppError::format(name.as_str(), e))?;
            let c = formats::controller_from_json(&v)?;
            if c.dims != (plant.n(), plant.m(), plant.p()) {
                return Err(AppError::format(name.as_str(), "controller dimensions do not match the plant"));
            }
            let stem = Path::new(name).file_stem().and_then(|s| s.to_str()).unwrap_or("controller").to_string();
            (stem, c)
        };
        let mut unique = label.clone();
        let mut k = 2;
        while out.iter().any(|(l, _)| *l == unique) || unique == "offline" && c.kind != Kind::Offline {
            unique = format!("{label}-{k}");
            k += 1;
        }
        out.push((unique, c));
    }
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct SimulateArgs {
    pub plant: String,
    pub controllers: Vec<String>,
    pub selection: Selection,
    /// Path to a disturbance JSON file, or the JSON itself.
    pub disturbance: String,
    pub steps: Option<usize>,
    pub seed: u64,
    pub out: PathBuf,
    /// Write controls in the plant's original units when it had a weight `R`.
    pub original_units: bool,
}

pub fn load_disturbance(spec: &str) -> AppResult<formats::DisturbanceSpecJson> {
    if spec.trim_start().starts_with('{') {
        formats::parse_disturbance(spec)
    } else {
        formats::parse_disturbance(&output::read_text(Path::new(spec))?)
    }
}

fn safe_name(name: &str) -> String {
    name.chars().map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' }).collect()
}

fn write_traces(out: &Path, traces: &[Trace], dims: (usize, usize, usize)) -> AppResult<Vec<PathBuf>> {
    let mut paths = Vec::new();
    for tr in traces {
        let path = out.join(format!("{}.csv", safe_name(&tr.label)));
        write_atomic(&path, &output::trace_csv(tr, dims)?)?;
        paths.push(path);
    }
    Ok(paths)
}

pub fn run_simulation(a: &SimulateArgs) -> AppResult<Comparison> {
    let loaded = load_plant(&a.plant)?;
    let plant = loaded.plant;
    let dist = load_disturbance(&a.disturbance)?;
    let spec = dist.to_core(a.steps.or(loaded.horizon), a.seed)?;
    let w = sim::generate_disturbance(&spec, plant.p())?;
    let ctrls = resolve_controllers(&plant, &a.controllers, &a.selection)?;
    let mut cmp = sim::compare(&plant.to_ltv(w.len()), &ctrls, &w)?;
    if a.original_units {
        for tr in &mut cmp.traces {
            for r in &mut tr.rows {
                r.u = plant.control_to_original(&r.u);
            }
        }
    }
    Ok(cmp)
}

pub fn cmd_simulate(a: &SimulateArgs) -> AppResult<Value> {
    let cmp = run_simulation(a)?;
    let plant = load_plant(&a.plant)?.plant;
    let paths = write_traces(&a.out, &cmp.traces, (plant.n(), plant.m(), plant.p()))?;
    let report = formats::comparison_json(&cmp);
    write_atomic(&a.out.join("comparison.json"), &output::json_bytes(&report))?;
    let mut shown = report.clone();
    shown["traces"] = json!(paths);
    Ok(shown)
}

#[derive(Debug, Clone)]
pub struct FreqArgs {
    pub plant: String,
    pub controllers: Vec<String>,
    pub selection: Selection,
    pub grid: usize,
    pub out: PathBuf,
}

pub fn cmd_freq(a: &FreqArgs) -> AppResult<Value> {
    if a.grid == 0 {
        return Err(AppError::Usage("grid must have at least one point".into()));
    }
    let plant = load_plant(&a.plant)?.plant;
    let ctrls = resolve_controllers(&plant, &a.controllers, &a.selection)?;
    let omegas = freq::grid(a.grid);
    let mut rows = Vec::new();
    let mut summary = Vec::new();
    let mut extremal = Vec::new();
    for (name, c) in &ctrls {
        if c.kind == Kind::Offline {
            return Err(AppError::Usage("the offline controller has no closed-loop transfer".into()));
        }
        let pts = freq::sweep(&plant, c, &omegas)?;
        let peak_cr = pts.iter().filter_map(|p| p.per_freq_cr).fold(f64::NEG_INFINITY, f64::max);
        let min_cr = pts.iter().filter_map(|p| p.per_freq_cr).fold(f64::INFINITY, f64::min);
        let peak_sigma = pts.iter().map(|p| p.sigma_max).fold(0.0, f64::max);
        summary.push(json!({
            "name": name,
            "gamma": c.gamma,
            "max_per_freq_cr": if peak_cr.is_finite() { json!(peak_cr) } else { Value::Null },
            "min_per_freq_cr": if min_cr.is_finite() { json!(min_cr) } else { Value::Null },
            "max_sigma": peak_sigma,
        }));
        let dc = freq::extremal_dc(&plant, c)?;
        let dir = |v: &Vector| v.iter().cloned().collect::<Vec<f64>>();
        extremal.push(json!({
            "name": name,
            "best_gain": dc.best_gain,
            "worst_gain": dc.worst_gain,
            "best": {"kind": "dc", "direction": dir(&dc.best)},
            "worst": {"kind": "dc", "direction": dir(&dc.worst)},
        }));
        rows.push((name.clone(), pts));
    }
    write_atomic(&a.out.join("freq.csv"), &output::freq_csv(&rows)?)?;
    let ext = json!({ "schema_version": SCHEMA_VERSION, "controllers": extremal });
    write_atomic(&a.out.join("extremal.json"), &output::json_bytes(&ext))?;
    Ok(json!({ "schema_version": SCHEMA_VERSION, "grid": a.grid, "controllers": summary }))
}

// ---- mpc

/// Gain caches keyed by gamma policy, shared across episodes of one scenario.
#[derive(Debug, Default)]
pub struct MpcSession {
    caches: Vec<(GammaPolicy, Dynamics, GainCache)>,
}

impl MpcSession {
    pub fn new() -> Self {
        Self::default()
    }

    fn cache(&mut self, policy: GammaPolicy, dynamics: Dynamics) -> &mut GainCache {
        let i = match self.caches.iter().position(|(p, d, _)| *p == policy && *d == dynamics) {
            Some(i) => i,
            None => {
                self.caches.push((policy, dynamics, GainCache::new()));
                self.caches.len() - 1
            }
        };
        &mut self.caches[i].2
    }

    /// Runs the offline comparator and every scenario controller on the
    /// disturbance drawn with `seed` (unless the scenario fixes one).
    pub fn run(&mut self, scenario: &ScenarioFile, seed: u64, dynamics: Dynamics) -> AppResult<Comparison> {
        let spec = scenario.disturbance.to_core(Some(scenario.steps), seed)?;
        let w = sim::generate_disturbance(&spec, 1)?;
        let base = MpcConfig {
            params: scenario.params(),
            dynamics,
            x0: scenario.initial_state(),
            ..MpcConfig::default()
        };
        let opt = mpc::mpc_rollout(Kind::Offline, &w, &base, self.cache(base.gamma_policy, dynamics))?;
        let opt_cost = opt.total_cost;
        let mut rows = vec![ComparisonRow {
            name: "offline".into(),
            total_cost: opt_cost,
            ratio_to_opt: Ratio::of(opt_cost, opt_cost),
            failure: opt.failure.clone(),
        }];
        let mut traces = vec![opt];
        for sc in scenario.controller_list()? {
            let kind = parse_kind(&sc.kind)?;
            if kind == Kind::Offline {
                continue;
            }
            let cfg = MpcConfig { gamma_policy: sc.gamma_policy.map(Into::into).unwrap_or_default(), ..base };
            let mut tr = mpc::mpc_rollout(kind, &w, &cfg, self.cache(cfg.gamma_policy, dynamics))?;
            let mut label = kind.name().to_string();
            let mut k = 2;
            while traces.iter().any(|t| t.label == label) {
                label = format!("{}-{k}", kind.name());
                k += 1;
            }
            tr.label = label.clone();
            rows.push(ComparisonRow {
                name: label,
                total_cost: tr.total_cost,
                ratio_to_opt: Ratio::of(tr.total_cost, opt_cost),
                failure: tr.failure.clone(),
            });
            traces.push(tr);
        }
        Ok(Comparison { opt_cost, rows, traces })
    }

    /// Levels chosen by the policies so far, by controller kind.
    pub fn levels(&mut self, scenario: &ScenarioFile, dynamics: Dynamics) -> AppResult<Vec<(String, Option<f64>)>> {
        let base = MpcConfig { params: scenario.params(), dynamics, x0: scenario.initial_state(), ..MpcConfig::default() };
        let mut out = Vec::new();
        for sc in scenario.controller_list()? {
            let kind = parse_kind(&sc.kind)?;
            if kind == Kind::Offline {
                continue;
            }
            let cfg = MpcConfig { gamma_policy: sc.gamma_policy.map(Into::into).unwrap_or_default(), ..base };
            let g = self.cache(cfg.gamma_policy, dynamics).gamma(kind, &cfg)?;
            out.push((kind.name().to_string(), g));
        }
        Ok(out)
    }
}

#[derive(Debug, Clone)]
pub struct MpcArgs {
    pub scenario: PathBuf,
    pub seed: u64,
    pub frozen: bool,
    pub out: PathBuf,
}

pub fn cmd_mpc(a: &MpcArgs) -> AppResult<Value> {
    let scenario = formats::parse_scenario(&output::read_text(&a.scenario)?)?;
    let dynamics = if a.frozen { Dynamics::Frozen } else { Dynamics::Nonlinear };
    let mut session = MpcSession::new();
    let cmp = session.run(&scenario, a.seed, dynamics)?;
    let paths = write_traces(&a.out, &cmp.traces, (2, 1, 1))?;
    let mut report = formats::comparison_json(&cmp);
    report["gamma"] = session
        .levels(&scenario, dynamics)?
        .into_iter()
        .map(|(k, g)| (k, json!(g)))
        .collect::<serde_json::Map<String, Value>>()
        .into();
    write_atomic(&a.out.join("comparison.json"), &output::json_bytes(&report))?;
    report["traces"] = json!(paths);
    Ok(report)
}

// ---- verify

#[derive(Debug, Clone)]
pub struct VerifyArgs {
    /// Plant file or `boeing`; `None` draws a random plant from `random_seed`.
    pub plant: Option<String>,
    pub random_seed: Option<u64>,
    pub dims: (usize, usize, usize),
    pub options: VerifyOptions,
}

pub fn verify_plant(a: &VerifyArgs) -> AppResult<(LtiPlant, Vec<PropertyResult>)> {
    let plant = match (&a.plant, a.random_seed) {
        (Some(p), None) => load_plant(p)?.plant,
        (None, Some(seed)) => {
            let (n, m, p) = a.dims;
            random::random_plant(seed, n, m, p)?
        }
        _ => return Err(AppError::Usage("pass exactly one of --plant and --random".into())),
    };
    let results = verify::run_suite(&plant, &a.options);
    Ok((plant, results))
}

pub fn verify_report(results: &[PropertyResult]) -> Value {
    let props: Vec<Value> = results
        .iter()
        .map(|r| {
            json!({
                "name": r.name,
                "status": r.status.name(),
                "value": if r.value.is_finite() { json!(r.value) } else { Value::Null },
                "tolerance": if r.tolerance.is_finite() { json!(r.tolerance) } else { Value::Null },
                "detail": r.detail,
            })
        })
        .collect();
    json!({ "schema_version": SCHEMA_VERSION, "all_passed": verify::all_passed(results), "properties": props })
}

/// One line per property, e.g. `pass  offline-matches-least-squares  3.1e-15 <= 1e-8`.
pub fn verify_lines(results: &[PropertyResult]) -> Vec<String> {
    results
        .iter()
        .map(|r| {
            let mut line = format!("{:<7} {}", r.status.name(), r.name);
            if r.value.is_finite() {
                line.push_str(&format!("  {:.3e} <= {:.0e}", r.value, r.tolerance));
            }
            if !r.detail.is_empty() {
                line.push_str(&format!("  ({})", r.detail));
            }
            line
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn horizon_parsing() {
        assert_eq!(parse_horizon("infinite").unwrap(), Horizon::Infinite);
        assert_eq!(parse_horizon("12").unwrap(), Horizon::Finite(12));
        assert!(parse_horizon("0").is_err());
        assert!(parse_horizon("forever").is_err());
    }

    #[test]
    fn duplicate_names_get_suffixes() {
        let plant = formats::boeing();
        let names = vec!["h2".to_string(), "h2".to_string(), "zero".to_string()];
        let got = resolve_controllers(&plant, &names, &Selection::default()).unwrap();
        let labels: Vec<&str> = got.iter().map(|(l, _)| l.as_str()).collect();
        assert_eq!(labels, ["h2", "h2-2", "zero"]);
    }

    #[test]
    fn synth_requires_a_level_choice() {
        let plant = formats::boeing();
        let a = SynthArgs {
            plant: "boeing".into(),
            mode: Kind::Hinf,
            causality: Causality::Causal,
            horizon: Horizon::Infinite,
            gamma: None,
            optimize_gamma: false,
            tol: None,
            out: None,
        };
        assert!(matches!(synthesize(&plant, &a), Err(AppError::Usage(_))));
    }
}
