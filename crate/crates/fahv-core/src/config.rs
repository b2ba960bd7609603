//! Scenario files: TOML text layered over the shipped defaults, with dotted-key
//! overrides and per-key validation.

use serde::{Deserialize, Serialize};
use toml::Value;

use crate::controller::GainSet;
use crate::error::{Error, Result};
use crate::model::{
    ActuatorLimits, AeroModel, DisturbanceProfile, FaultConfig, PerChannel, PlantOptions,
};
use crate::observers::{FtNnGains, SigTrackerParams};
use crate::ppc::{ErrorTransformConfig, PerformanceFunction};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    /// `phi(t)` multiplier active, record-and-continue on breaches unless `strict`.
    Proposed,
    /// `phi = 1`, strict prescribed-performance checks.
    Baseline,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialConditions {
    /// `V(0) - V_d(0)`, ft/s.
    pub v_error: f64,
    /// `h(0) - h_d(0)`, ft.
    pub h_error: f64,
    pub gamma: f64,
    /// Start at the trim pitch angle instead of `theta`.
    pub trim_theta: bool,
    pub theta: f64,
    pub q: f64,
}

impl Default for InitialConditions {
    fn default() -> Self {
        InitialConditions {
            v_error: 8.0,
            h_error: 40.0,
            gamma: 0.0,
            trim_theta: true,
            theta: 0.0,
            q: 0.0,
        }
    }
}

/// Step commands smoothed by critically damped second-order responses.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReferenceConfig {
    pub v_initial: f64,
    pub v_final: f64,
    pub omega_v: f64,
    pub h_initial: f64,
    pub h_final: f64,
    pub omega_h: f64,
}

impl Default for ReferenceConfig {
    fn default() -> Self {
        ReferenceConfig {
            v_initial: 7846.4,
            v_final: 10032.0,
            omega_v: 0.05,
            h_initial: 85000.0,
            h_final: 105583.0,
            omega_h: 0.03,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransformSettings {
    pub beta: f64,
    pub a_exp: f64,
    pub mu: f64,
    pub t_p: f64,
    /// Lower `beta` to `beta_for_initial_error` when the initial error needs it.
    pub auto_beta: bool,
}

impl TransformSettings {
    fn with_t_p(t_p: f64) -> Self {
        let c = ErrorTransformConfig::with_t_p(t_p);
        TransformSettings {
            beta: c.beta,
            a_exp: c.a_exp,
            mu: c.mu,
            t_p,
            auto_beta: false,
        }
    }

    pub fn config(&self) -> ErrorTransformConfig {
        ErrorTransformConfig {
            beta: self.beta,
            a_exp: self.a_exp,
            mu: self.mu,
            t_p: self.t_p,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelPair<T> {
    pub velocity: T,
    pub altitude: T,
}

/// RBF layout shared by the five observers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkConfig {
    pub nodes_per_dim: usize,
    /// Gaussian width in units of the node spacing.
    pub width_factor: f64,
    pub v_range: [f64; 2],
    pub gamma_range: [f64; 2],
    pub theta_range: [f64; 2],
    pub q_range: [f64; 2],
}

impl Default for NetworkConfig {
    fn default() -> Self {
        let deg = std::f64::consts::PI / 180.0;
        NetworkConfig {
            nodes_per_dim: 3,
            width_factor: 1.5,
            v_range: [7500.0, 11000.0],
            gamma_range: [-2.0 * deg, 2.0 * deg],
            theta_range: [-5.0 * deg, 5.0 * deg],
            q_range: [-10.0 * deg, 10.0 * deg],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObserverConfig {
    pub tracker_h: SigTrackerParams,
    pub tracker_gamma: SigTrackerParams,
    pub network: NetworkConfig,
    pub gains: PerChannel<FtNnGains>,
}

impl Default for ObserverConfig {
    fn default() -> Self {
        let g = |l1: f64, l3: f64, gamma_w: f64| FtNnGains {
            l1,
            l2: l1,
            l3,
            k: 0.01,
            gamma_w,
            alpha1: 0.5,
            beta1: 2.0,
        };
        ObserverConfig {
            tracker_h: SigTrackerParams::new(20.0, 1.5),
            tracker_gamma: SigTrackerParams::new(15.0, 1.5),
            network: NetworkConfig::default(),
            gains: PerChannel {
                v: g(5.0, 1.0, 1.2),
                h: g(5.0, 1.0, 1.5),
                gamma: g(10.0, 1.0, 2.0),
                theta: g(10.0, 1.0, 2.0),
                q: g(20.0, 1.0, 10.0),
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BaselineConfig {
    /// Baseline initial envelope width as a multiple of the proposed `xi_a`.
    pub xi_a_scale: f64,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        BaselineConfig { xi_a_scale: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub duration: f64,
    pub dt: f64,
    /// Logging period, s.
    pub log_interval: f64,
    pub variant: Variant,
    /// Abort on the first prescribed-performance breach.
    pub strict: bool,
    pub initial: InitialConditions,
    pub reference: ReferenceConfig,
    pub model: AeroModel,
    /// Multipliers applied to the true plant's `f_i`, `g_i`.
    pub uncertainty: PerChannel<f64>,
    pub plant: PlantOptions,
    pub disturbance: DisturbanceProfile,
    pub fault: FaultConfig,
    pub actuator: ActuatorLimits,
    pub gains: GainSet,
    pub transform: ChannelPair<TransformSettings>,
    pub performance: ChannelPair<PerformanceFunction>,
    pub observers: ObserverConfig,
    pub baseline: BaselineConfig,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            duration: 100.0,
            dt: 5e-4,
            log_interval: 0.01,
            variant: Variant::Proposed,
            strict: false,
            initial: InitialConditions::default(),
            reference: ReferenceConfig::default(),
            model: AeroModel::default(),
            uncertainty: PerChannel {
                v: 1.3,
                h: 1.3,
                gamma: 1.3,
                theta: 1.0,
                q: 1.3,
            },
            plant: PlantOptions::default(),
            disturbance: DisturbanceProfile::default(),
            fault: FaultConfig::default(),
            actuator: ActuatorLimits::default(),
            gains: GainSet::default(),
            transform: ChannelPair {
                velocity: TransformSettings::with_t_p(2.5),
                altitude: TransformSettings::with_t_p(5.0),
            },
            performance: ChannelPair {
                velocity: PerformanceFunction {
                    xi_a: 6.0,
                    xi_b: 0.2,
                    t_s: 10.0,
                    n: 2,
                },
                altitude: PerformanceFunction {
                    xi_a: 40.6,
                    xi_b: 0.6,
                    t_s: 30.0,
                    n: 2,
                },
            },
            observers: ObserverConfig::default(),
            baseline: BaselineConfig::default(),
        }
    }
}

fn positive(key: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::validation(key, "must be positive"))
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        positive("dt", self.dt)?;
        positive("duration", self.duration)?;
        positive("log_interval", self.log_interval)?;
        if self.log_interval < self.dt {
            return Err(Error::validation("log_interval", "must be >= dt"));
        }
        let r = &self.reference;
        positive("reference.omega_v", r.omega_v)?;
        positive("reference.omega_h", r.omega_h)?;
        for (key, v) in [
            ("reference.v_initial", r.v_initial),
            ("reference.v_final", r.v_final),
            ("reference.h_initial", r.h_initial),
            ("reference.h_final", r.h_final),
            ("initial.v_error", self.initial.v_error),
            ("initial.h_error", self.initial.h_error),
            ("initial.gamma", self.initial.gamma),
            ("initial.theta", self.initial.theta),
            ("initial.q", self.initial.q),
        ] {
            if !v.is_finite() {
                return Err(Error::validation(key, "must be finite"));
            }
        }
        self.model.validate()?;
        for (ch, k) in self.uncertainty.iter() {
            positive(&format!("uncertainty.{}", ch.name().to_lowercase()), *k)?;
        }
        self.disturbance.validate()?;
        self.fault.validate()?;
        self.actuator.validate()?;
        self.gains.validate()?;
        for (name, tr, pf) in [
            ("velocity", &self.transform.velocity, &self.performance.velocity),
            ("altitude", &self.transform.altitude, &self.performance.altitude),
        ] {
            tr.config().validate(&format!("transform.{name}"))?;
            pf.validate(&format!("performance.{name}"))?;
            if !(pf.t_s > tr.t_p) {
                return Err(Error::validation(
                    format!("performance.{name}.t_s"),
                    "must exceed the transform's t_p",
                ));
            }
            if self.duration < pf.t_s {
                return Err(Error::validation(
                    "duration",
                    format!("must cover performance.{name}.t_s"),
                ));
            }
        }
        let obs = &self.observers;
        obs.tracker_h.validate("observers.tracker_h")?;
        obs.tracker_gamma.validate("observers.tracker_gamma")?;
        for (ch, g) in obs.gains.iter() {
            g.validate(&format!("observers.gains.{}", ch.name().to_lowercase()))?;
        }
        let n = &obs.network;
        if n.nodes_per_dim < 2 {
            return Err(Error::validation("observers.network.nodes_per_dim", "must be >= 2"));
        }
        positive("observers.network.width_factor", n.width_factor)?;
        for (key, rg) in [
            ("observers.network.v_range", n.v_range),
            ("observers.network.gamma_range", n.gamma_range),
            ("observers.network.theta_range", n.theta_range),
            ("observers.network.q_range", n.q_range),
        ] {
            if !(rg[0] < rg[1]) {
                return Err(Error::validation(key, "lower end must be below upper end"));
            }
        }
        positive("baseline.xi_a_scale", self.baseline.xi_a_scale)?;
        Ok(())
    }

    /// Serializes the complete configuration, defaults included.
    pub fn to_text(&self) -> String {
        toml::to_string(self).expect("scenario config is always representable")
    }

    fn default_tree() -> Value {
        Value::try_from(ScenarioConfig::default()).expect("defaults serialize")
    }

    fn from_tree(tree: Value) -> Result<Self> {
        let cfg: ScenarioConfig = tree
            .try_into()
            .map_err(|e: toml::de::Error| Error::Parse(e.message().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Copies every key of `src` into `dst`, recursing through tables.
fn merge(dst: &mut Value, src: Value, path: &str) -> Result<()> {
    match (dst, src) {
        (Value::Table(d), Value::Table(s)) => {
            for (k, v) in s {
                let sub = if path.is_empty() {
                    k.clone()
                } else {
                    format!("{path}.{k}")
                };
                match d.get_mut(&k) {
                    Some(slot) => merge(slot, v, &sub)?,
                    None => {
                        // absent from defaults: only legal where the default table is open-ended
                        d.insert(k, v);
                    }
                }
            }
            Ok(())
        }
        (slot, v) => {
            *slot = coerce(slot, v, path)?;
            Ok(())
        }
    }
}

/// Integers are accepted where floats are expected.
fn coerce(template: &Value, v: Value, path: &str) -> Result<Value> {
    match (template, v) {
        (Value::Float(_), Value::Integer(i)) => Ok(Value::Float(i as f64)),
        (Value::Array(t), Value::Array(items)) if t.first().is_some_and(|x| x.is_float()) => items
            .into_iter()
            .map(|x| match x {
                Value::Integer(i) => Ok(Value::Float(i as f64)),
                other => Ok(other),
            })
            .collect::<Result<Vec<_>>>()
            .map(Value::Array),
        (Value::Table(_), other) if !other.is_table() => Err(Error::validation(
            path,
            "expected a table, got a scalar",
        )),
        (_, v) => Ok(v),
    }
}

/// Parses a scenario file; every absent key keeps its default.
pub fn parse_config(text: &str) -> Result<ScenarioConfig> {
    parse_config_with_overrides(text, &[])
}

/// Parses a scenario file, then applies `key=value` overrides in order.
pub fn parse_config_with_overrides(text: &str, overrides: &[String]) -> Result<ScenarioConfig> {
    let user: Value = toml::from_str::<toml::Table>(text)
        .map(Value::Table)
        .map_err(|e| Error::Parse(format_parse_error(text, &e)))?;
    let mut tree = ScenarioConfig::default_tree();
    merge(&mut tree, user, "")?;
    for ov in overrides {
        apply_override(&mut tree, ov)?;
    }
    ScenarioConfig::from_tree(tree)
}

fn format_parse_error(text: &str, e: &toml::de::Error) -> String {
    match e.span() {
        Some(span) => {
            let line = text[..span.start.min(text.len())].matches('\n').count() + 1;
            format!("line {line}: {}", e.message())
        }
        None => e.message().to_string(),
    }
}

/// Applies one dotted `key=value` override; the key must already exist.
pub fn apply_override(tree: &mut Value, assignment: &str) -> Result<()> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| Error::Parse(format!("override `{assignment}` is not key=value")))?;
    let key = key.trim();
    let raw = raw.trim();
    let value = parse_value(raw);
    let mut node = tree;
    let mut walked = String::new();
    let parts: Vec<&str> = key.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        if !walked.is_empty() {
            walked.push('.');
        }
        walked.push_str(part);
        let (name, index) = split_index(part)?;
        let table = node
            .as_table_mut()
            .ok_or_else(|| Error::validation(walked.clone(), "is not a table"))?;
        node = table
            .get_mut(name)
            .ok_or_else(|| Error::validation(key, "unknown configuration key"))?;
        if let Some(idx) = index {
            let arr = node
                .as_array_mut()
                .ok_or_else(|| Error::validation(walked.clone(), "is not an array"))?;
            let len = arr.len();
            node = arr
                .get_mut(idx)
                .ok_or_else(|| Error::validation(key, format!("index out of range (len {len})")))?;
        }
        if i + 1 == parts.len() {
            *node = coerce(node, value.clone(), key)?;
            return Ok(());
        }
    }
    Err(Error::validation(key, "empty key"))
}

fn split_index(part: &str) -> Result<(&str, Option<usize>)> {
    match part.split_once('[') {
        Some((name, rest)) => {
            let idx = rest
                .strip_suffix(']')
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| Error::Parse(format!("bad index in `{part}`")))?;
            Ok((name, Some(idx)))
        }
        None => Ok((part, None)),
    }
}

/// TOML literal if it parses as one, bare string otherwise.
fn parse_value(raw: &str) -> Value {
    toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| Value::String(raw.to_string()))
}

/// Applies overrides to an already-built configuration.
pub fn with_overrides(cfg: &ScenarioConfig, overrides: &[String]) -> Result<ScenarioConfig> {
    let mut tree = Value::try_from(cfg).map_err(|e| Error::Parse(e.to_string()))?;
    for ov in overrides {
        apply_override(&mut tree, ov)?;
    }
    ScenarioConfig::from_tree(tree)
}
