//! JSON schemas for plants, controllers, disturbances, MPC scenarios and
//! comparison tables. Matrices are row-major nested arrays.

use compctl_core::controllers::{Causality, Controller, Diagnostics, Gain, GainSchedule, Horizon, Kind, Law};
use compctl_core::factorization::{FilterMaps, SyntheticStage, SyntheticSystem, WPrimeFilter};
use compctl_core::linalg::{Mat, Vector};
use compctl_core::model::{self, LtiPlant};
use compctl_core::mpc::{GammaPolicy, PendulumParams, PendulumState};
use compctl_core::sim::{Comparison, Disturbance, DisturbanceSpec, Failure, Ratio};
use compctl_core::{Infeasibility, Reason};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::error::{AppError, AppResult};

pub const SCHEMA_VERSION: u32 = 1;

pub type Rows = Vec<Vec<f64>>;

pub fn mat_to_rows(m: &Mat) -> Rows {
    (0..m.nrows()).map(|i| m.row(i).iter().cloned().collect()).collect()
}

/// Rows of equal length; `cols` fixes the width of an empty matrix.
pub fn rows_to_mat(rows: &Rows, what: &str, cols: Option<usize>) -> AppResult<Mat> {
    let width = rows.first().map(|r| r.len()).or(cols).unwrap_or(0);
    if rows.iter().any(|r| r.len() != width) {
        return Err(AppError::format(what, "rows have different lengths"));
    }
    if rows.iter().flatten().any(|v| !v.is_finite()) {
        return Err(AppError::format(what, "entries must be finite"));
    }
    Ok(Mat::from_row_iterator(rows.len(), width, rows.iter().flatten().cloned()))
}

fn check_version(v: Option<u32>, what: &str) -> AppResult<()> {
    match v {
        None => Ok(()),
        Some(SCHEMA_VERSION) => Ok(()),
        Some(other) => Err(AppError::format(what, format!("unsupported schema_version {other}"))),
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlantFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub schema_version: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(rename = "A")]
    pub a: Rows,
    #[serde(rename = "Bu")]
    pub b_u: Rows,
    #[serde(rename = "Bw")]
    pub b_w: Rows,
    #[serde(rename = "Q")]
    pub q: Rows,
    #[serde(rename = "R", default, skip_serializing_if = "Option::is_none")]
    pub r: Option<Rows>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x0: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub horizon: Option<usize>,
}

/// A parsed plant; `horizon` selects finite-horizon replication.
#[derive(Debug, Clone)]
pub struct LoadedPlant {
    pub plant: LtiPlant,
    pub horizon: Option<usize>,
    pub name: Option<String>,
}

impl PlantFile {
    pub fn into_plant(self) -> AppResult<LoadedPlant> {
        check_version(self.schema_version, "plant")?;
        let n = self.a.len();
        let a = rows_to_mat(&self.a, "plant.A", Some(n))?;
        let b_u = rows_to_mat(&self.b_u, "plant.Bu", None)?;
        let b_w = rows_to_mat(&self.b_w, "plant.Bw", None)?;
        let q = rows_to_mat(&self.q, "plant.Q", Some(n))?;
        let mut plant = match &self.r {
            Some(r) => model::normalize_control_weight(a, b_u, b_w, q, rows_to_mat(r, "plant.R", None)?)?,
            None => LtiPlant::new(a, b_u, b_w, q)?,
        };
        if let Some(x0) = self.x0 {
            plant = plant.with_initial_state(Vector::from_vec(x0))?;
        }
        if self.horizon == Some(0) {
            return Err(AppError::format("plant.horizon", "must be at least 1"));
        }
        Ok(LoadedPlant { plant, horizon: self.horizon, name: self.name })
    }
}

pub fn parse_plant(text: &str) -> AppResult<LoadedPlant> {
    let file: PlantFile = serde_json::from_str(text).map_err(|e| AppError::format("plant", e))?;
    file.into_plant()
}

pub const BOEING_JSON: &str = include_str!("../data/boeing.json");

pub fn boeing() -> LtiPlant {
    parse_plant(BOEING_JSON).expect("bundled plant parses").plant
}

// ---- controllers

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GainJson {
    state: Rows,
    input: Rows,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "schedule", rename_all = "kebab-case", deny_unknown_fields)]
enum GainsJson {
    Constant { gain: GainJson },
    Varying { gains: Vec<GainJson> },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SyntheticStageJson {
    a: Rows,
    b_u: Rows,
    b_w: Rows,
    q: Rows,
    output: Rows,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SyntheticJson {
    time_invariant: bool,
    stages: Vec<SyntheticStageJson>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FilterMapsJson {
    a_w: Rows,
    b_w: Rows,
    c_w: Rows,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FilterJson {
    time_invariant: bool,
    maps: Vec<FilterMapsJson>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct VerdictJson {
    pub reason: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub step: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub value: Option<f64>,
}

impl VerdictJson {
    pub fn from_core(v: &Infeasibility) -> Self {
        Self { reason: v.reason.code().into(), step: v.step, value: v.value }
    }

    fn to_core(&self) -> AppResult<Infeasibility> {
        let reason = parse_reason(&self.reason)?;
        Ok(Infeasibility { reason, step: self.step, value: self.value })
    }
}

fn parse_reason(code: &str) -> AppResult<Reason> {
    Reason::parse(code).ok_or_else(|| AppError::format("verdict", format!("unknown reason {code:?}")))
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DiagnosticsJson {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    riccati_residual: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    riccati_iterations: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    closed_loop_radius: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    factor_residual: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    factor_radius: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    strict_u_channel: Option<VerdictJson>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    strict_extra: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControllerFile {
    schema_version: u32,
    kind: String,
    causality: String,
    /// `"infinite"` or the number of steps.
    horizon: Value,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    gamma: Option<f64>,
    n: usize,
    m: usize,
    p: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    gains: Option<GainsJson>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    synthetic: Option<SyntheticJson>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    filter: Option<FilterJson>,
    #[serde(default)]
    diagnostics: DiagnosticsJson,
}

fn gain_json(g: &Gain) -> GainJson {
    GainJson { state: mat_to_rows(&g.state), input: mat_to_rows(&g.input) }
}

fn gains_json(s: &GainSchedule) -> GainsJson {
    match s {
        GainSchedule::Constant(g) => GainsJson::Constant { gain: gain_json(g) },
        GainSchedule::Varying(gs) => GainsJson::Varying { gains: gs.iter().map(gain_json).collect() },
    }
}

fn gain_from(g: &GainJson, rows: usize, cols: (usize, usize)) -> AppResult<Gain> {
    Ok(Gain {
        state: rows_to_mat(&g.state, "gain.state", Some(cols.0))?,
        input: rows_to_mat(&g.input, "gain.input", Some(cols.1))?,
    })
    .and_then(|gain: Gain| {
        if gain.state.shape() != (rows, cols.0) || gain.input.shape() != (rows, cols.1) {
            Err(AppError::format("gain", "shape does not match the controller dimensions"))
        } else {
            Ok(gain)
        }
    })
}

fn gains_from(g: &GainsJson, rows: usize, cols: (usize, usize)) -> AppResult<GainSchedule> {
    Ok(match g {
        GainsJson::Constant { gain } => GainSchedule::Constant(gain_from(gain, rows, cols)?),
        GainsJson::Varying { gains } => {
            GainSchedule::Varying(gains.iter().map(|x| gain_from(x, rows, cols)).collect::<AppResult<_>>()?)
        }
    })
}

pub fn controller_to_json(c: &Controller) -> Value {
    let (n, m, p) = c.dims;
    let mut file = ControllerFile {
        schema_version: SCHEMA_VERSION,
        kind: c.kind.name().into(),
        causality: c.causality.name().into(),
        horizon: match c.horizon {
            Horizon::Infinite => json!("infinite"),
            Horizon::Finite(t) => json!(t),
        },
        gamma: c.gamma,
        n,
        m,
        p,
        gains: None,
        synthetic: None,
        filter: None,
        diagnostics: DiagnosticsJson {
            riccati_residual: c.diagnostics.riccati_residual,
            riccati_iterations: c.diagnostics.riccati_iterations,
            closed_loop_radius: c.diagnostics.closed_loop_radius,
            factor_residual: c.diagnostics.factor_residual,
            factor_radius: c.diagnostics.factor_radius,
            strict_u_channel: c.diagnostics.strict_u_channel.as_ref().map(VerdictJson::from_core),
            strict_extra: c.diagnostics.strict_extra.map(|r| r.code().into()),
        },
    };
    match &c.law {
        Law::Zero | Law::Offline => {}
        Law::StateFeedback(g) => file.gains = Some(gains_json(g)),
        Law::Competitive { gains, synthetic, filter } => {
            file.gains = Some(gains_json(gains));
            file.synthetic = Some(SyntheticJson {
                time_invariant: synthetic.time_invariant,
                stages: synthetic
                    .stages
                    .iter()
                    .map(|s| SyntheticStageJson {
                        a: mat_to_rows(&s.a),
                        b_u: mat_to_rows(&s.b_u),
                        b_w: mat_to_rows(&s.b_w),
                        q: mat_to_rows(&s.q),
                        output: mat_to_rows(&s.output),
                    })
                    .collect(),
            });
            file.filter = Some(FilterJson {
                time_invariant: filter.is_time_invariant(),
                maps: filter
                    .all_maps()
                    .iter()
                    .map(|f| FilterMapsJson { a_w: mat_to_rows(&f.a_w), b_w: mat_to_rows(&f.b_w), c_w: mat_to_rows(&f.c_w) })
                    .collect(),
            });
        }
    }
    serde_json::to_value(file).expect("controller serializes")
}

fn parse_horizon(v: &Value) -> AppResult<Horizon> {
    match v {
        Value::String(s) if s == "infinite" => Ok(Horizon::Infinite),
        Value::Number(t) => t
            .as_u64()
            .filter(|t| *t >= 1)
            .map(|t| Horizon::Finite(t as usize))
            .ok_or_else(|| AppError::format("controller.horizon", "must be a positive integer or \"infinite\"")),
        _ => Err(AppError::format("controller.horizon", "must be a positive integer or \"infinite\"")),
    }
}

pub fn controller_from_json(v: &Value) -> AppResult<Controller> {
    let f: ControllerFile = serde_json::from_value(v.clone()).map_err(|e| AppError::format("controller", e))?;
    check_version(Some(f.schema_version), "controller")?;
    let kind = Kind::parse(&f.kind).ok_or_else(|| AppError::format("controller.kind", f.kind.clone()))?;
    let causality =
        Causality::parse(&f.causality).ok_or_else(|| AppError::format("controller.causality", f.causality.clone()))?;
    let horizon = parse_horizon(&f.horizon)?;
    let (n, m, p) = (f.n, f.m, f.p);
    let missing = |what: &str| AppError::format("controller", format!("{} controller needs {what}", kind.name()));
    let law = match kind {
        Kind::Zero => Law::Zero,
        Kind::Offline => Law::Offline,
        Kind::H2 | Kind::Hinf => Law::StateFeedback(gains_from(f.gains.as_ref().ok_or_else(|| missing("gains"))?, m, (n, p))?),
        Kind::Competitive => {
            let syn = f.synthetic.as_ref().ok_or_else(|| missing("synthetic"))?;
            let stages = syn
                .stages
                .iter()
                .map(|s| {
                    Ok(SyntheticStage {
                        a: rows_to_mat(&s.a, "synthetic.a", Some(2 * n))?,
                        b_u: rows_to_mat(&s.b_u, "synthetic.b_u", Some(m))?,
                        b_w: rows_to_mat(&s.b_w, "synthetic.b_w", Some(n))?,
                        q: rows_to_mat(&s.q, "synthetic.q", Some(2 * n))?,
                        output: rows_to_mat(&s.output, "synthetic.output", Some(2 * n))?,
                    })
                })
                .collect::<AppResult<Vec<_>>>()?;
            if stages.is_empty() {
                return Err(missing("at least one synthetic stage"));
            }
            let synthetic = SyntheticSystem { stages, time_invariant: syn.time_invariant };
            let fj = f.filter.as_ref().ok_or_else(|| missing("filter"))?;
            let maps = fj
                .maps
                .iter()
                .map(|x| {
                    Ok(FilterMaps {
                        a_w: rows_to_mat(&x.a_w, "filter.a_w", Some(n))?,
                        b_w: rows_to_mat(&x.b_w, "filter.b_w", Some(p))?,
                        c_w: rows_to_mat(&x.c_w, "filter.c_w", Some(n))?,
                    })
                })
                .collect::<AppResult<Vec<_>>>()?;
            let filter = WPrimeFilter::from_maps(maps, fj.time_invariant)?;
            let gains = gains_from(f.gains.as_ref().ok_or_else(|| missing("gains"))?, m, (2 * n, n))?;
            Law::Competitive { gains, synthetic, filter }
        }
    };
    let d = &f.diagnostics;
    let diagnostics = Diagnostics {
        riccati_residual: d.riccati_residual,
        riccati_iterations: d.riccati_iterations,
        closed_loop_radius: d.closed_loop_radius,
        factor_residual: d.factor_residual,
        factor_radius: d.factor_radius,
        strict_u_channel: d.strict_u_channel.as_ref().map(|v| v.to_core()).transpose()?,
        strict_extra: d.strict_extra.as_deref().map(parse_reason).transpose()?,
    };
    Ok(Controller { kind, causality, horizon, gamma: f.gamma, dims: (n, m, p), law, diagnostics })
}

// ---- disturbances

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum DisturbanceJson {
    WhiteGaussian {
        #[serde(default = "one")]
        sigma: f64,
    },
    Sinusoid {
        omega: f64,
        #[serde(default = "one")]
        amplitude: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        direction: Option<Vec<f64>>,
    },
    Step {
        levels: Vec<f64>,
        switch_times: Vec<usize>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        direction: Option<Vec<f64>>,
    },
    Dc {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        direction: Option<Vec<f64>>,
    },
    SineMeanGaussian {
        #[serde(default = "one")]
        sigma: f64,
        #[serde(default = "one")]
        mean_amplitude: f64,
        mean_omega: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        direction: Option<Vec<f64>>,
    },
    Mixture {
        components: Vec<DisturbanceJson>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        weights: Option<Vec<f64>>,
    },
}

impl DisturbanceJson {
    pub fn to_core(&self) -> AppResult<Disturbance> {
        Ok(match self.clone() {
            DisturbanceJson::WhiteGaussian { sigma } => Disturbance::WhiteGaussian { sigma },
            DisturbanceJson::Sinusoid { omega, amplitude, direction } => Disturbance::Sinusoid { omega, amplitude, direction },
            DisturbanceJson::Step { levels, switch_times, direction } => {
                Disturbance::Step { levels, switch_times, direction }
            }
            DisturbanceJson::Dc { direction } => Disturbance::Dc { direction },
            DisturbanceJson::SineMeanGaussian { sigma, mean_amplitude, mean_omega, direction } => {
                Disturbance::SineMeanGaussian { sigma, mean_amplitude, mean_omega, direction }
            }
            DisturbanceJson::Mixture { components, weights } => {
                let components = components.iter().map(|c| c.to_core()).collect::<AppResult<Vec<_>>>()?;
                match weights {
                    Some(weights) => Disturbance::Mixture { components, weights },
                    None => Disturbance::mixture(components),
                }
            }
        })
    }
}

/// A disturbance kind plus optional `length` and `seed` (filled from the
/// command line when absent).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DisturbanceSpecJson {
    #[serde(flatten)]
    pub kind: DisturbanceJson,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub length: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl DisturbanceSpecJson {
    pub fn to_core(&self, length: Option<usize>, seed: u64) -> AppResult<DisturbanceSpec> {
        let length = length
            .or(self.length)
            .ok_or_else(|| AppError::format("disturbance", "length is required (or pass --steps)"))?;
        Ok(DisturbanceSpec { kind: self.kind.to_core()?, length, seed: self.seed.unwrap_or(seed) })
    }
}

pub fn parse_disturbance(text: &str) -> AppResult<DisturbanceSpecJson> {
    serde_json::from_str(text).map_err(|e| AppError::format("disturbance", e))
}

// ---- MPC scenarios

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamsJson {
    #[serde(default = "one")]
    pub m: f64,
    #[serde(default = "one")]
    pub l: f64,
    #[serde(default = "one")]
    pub g: f64,
    #[serde(rename = "J", default = "one")]
    pub j: f64,
    #[serde(default = "default_dt")]
    pub dt: f64,
}

fn default_dt() -> f64 {
    PendulumParams::default().dt
}

impl Default for ParamsJson {
    fn default() -> Self {
        let p = PendulumParams::default();
        Self { m: p.m, l: p.l, g: p.g, j: p.j, dt: p.dt }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum GammaPolicyJson {
    OptimalTimes { factor: f64 },
    Fixed { gamma: f64 },
}

impl From<GammaPolicyJson> for GammaPolicy {
    fn from(g: GammaPolicyJson) -> Self {
        match g {
            GammaPolicyJson::OptimalTimes { factor } => GammaPolicy::OptimalTimes(factor),
            GammaPolicyJson::Fixed { gamma } => GammaPolicy::Fixed(gamma),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioController {
    pub kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma_policy: Option<GammaPolicyJson>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub schema_version: Option<u32>,
    #[serde(default)]
    pub params: ParamsJson,
    pub steps: usize,
    pub disturbance: DisturbanceSpecJson,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub controller: Option<ScenarioController>,
    /// Several controllers compared on the same disturbance.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub controllers: Option<Vec<ScenarioController>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x0: Option<[f64; 2]>,
}

impl ScenarioFile {
    pub fn params(&self) -> PendulumParams {
        let p = &self.params;
        PendulumParams { m: p.m, l: p.l, g: p.g, j: p.j, dt: p.dt }
    }

    pub fn initial_state(&self) -> PendulumState {
        let [theta, theta_dot] = self.x0.unwrap_or([0.0, 0.0]);
        PendulumState { theta, theta_dot }
    }

    pub fn controller_list(&self) -> AppResult<Vec<ScenarioController>> {
        let mut list: Vec<ScenarioController> = self.controller.iter().cloned().collect();
        list.extend(self.controllers.iter().flatten().cloned());
        if list.is_empty() {
            return Err(AppError::format("scenario", "needs \"controller\" or \"controllers\""));
        }
        Ok(list)
    }
}

pub fn parse_scenario(text: &str) -> AppResult<ScenarioFile> {
    let s: ScenarioFile = serde_json::from_str(text).map_err(|e| AppError::format("scenario", e))?;
    check_version(s.schema_version, "scenario")?;
    if s.steps == 0 {
        return Err(AppError::format("scenario.steps", "must be at least 1"));
    }
    Ok(s)
}

// ---- comparisons

pub fn failure_json(f: &Failure) -> Value {
    let mut v = json!({ "code": f.code(), "step": f.step() });
    if let Failure::Synthesis { verdict, message, .. } = f {
        v["message"] = json!(message);
        if let Some(verdict) = verdict {
            v["verdict"] = serde_json::to_value(VerdictJson::from_core(verdict)).expect("verdict serializes");
        }
    }
    v
}

fn ratio_json(r: Ratio) -> Value {
    match r {
        Ratio::Value(v) => json!(v),
        Ratio::DegenerateDenominator => json!("degenerate-denominator"),
    }
}

pub fn comparison_json(c: &Comparison) -> Value {
    let rows: Vec<Value> = c
        .rows
        .iter()
        .map(|r| {
            let mut v = json!({ "name": r.name, "total_cost": r.total_cost, "ratio_to_opt": ratio_json(r.ratio_to_opt) });
            if let Some(f) = &r.failure {
                v["failure"] = failure_json(f);
            }
            v
        })
        .collect();
    json!({ "schema_version": SCHEMA_VERSION, "opt_cost": c.opt_cost, "controllers": rows })
}
