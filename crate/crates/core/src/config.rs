//! Scenario configuration files.
//!
//! ```text
//! # comment
//! [params]
//! mu = 0.2
//! ...
//! [controls]
//! k1 = 0.5
//! [initial]
//! Q = 1000
//! [integration]      # optional, defaults apply
//! method = adaptive
//! [outputs]          # optional
//! dir = out
//! ```

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::PathBuf;

use serde::Serialize;
use thiserror::Error;

use crate::error::Result;
use crate::integrate::{IntegrationSettings, Method};
use crate::model::{Controls, ModelParams, State, COMPARTMENTS};

const PARAM_KEYS: [&str; 12] =
    ["sigma", "upsilon", "mu", "lambda", "eta", "gamma", "alpha", "beta", "omega", "delta", "theta", "f"];
const CONTROL_KEYS: [&str; 2] = ["k1", "k2"];
const INTEGRATION_KEYS: [&str; 7] = ["method", "dt", "rtol", "atol", "t0", "t_end", "sample_dt"];
const OUTPUT_KEYS: [&str; 2] = ["dir", "pretty_json"];

const REFERENCE: &str = include_str!("../configs/reference.conf");

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: unknown key `{key}`")]
    UnknownKey { key: String, line: usize },

    #[error("line {line}: unknown section `[{section}]`")]
    UnknownSection { section: String, line: usize },

    #[error("line {line}: duplicate key `{key}`")]
    DuplicateKey { key: String, line: usize },

    #[error("missing required keys: {}", .0.join(", "))]
    MissingKeys(Vec<String>),

    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct OutputSettings {
    pub dir: PathBuf,
    pub pretty_json: bool,
}

impl Default for OutputSettings {
    fn default() -> Self {
        OutputSettings { dir: PathBuf::from("out"), pretty_json: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScenarioConfig {
    pub params: ModelParams,
    pub controls: Controls,
    pub initial: State,
    pub integration: IntegrationSettings,
    pub outputs: OutputSettings,
}

impl ScenarioConfig {
    /// The bundled reference scenario.
    pub fn reference() -> Self {
        parse_config(REFERENCE).expect("bundled config is valid")
    }

    pub fn reference_text() -> &'static str {
        REFERENCE
    }

    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        self.controls.validate()?;
        self.integration.validate()?;
        if let Some((name, v)) = COMPARTMENTS.iter().zip(self.initial.to_array()).find(|(_, v)| !(v.is_finite() && *v >= 0.0)) {
            return Err(crate::Error::InvalidParameter { name, reason: format!("initial value {v} must be finite and >= 0") });
        }
        Ok(())
    }
}

struct Entry {
    value: String,
    line: usize,
}

fn section_keys(section: &str) -> Option<&'static [&'static str]> {
    match section {
        "params" => Some(&PARAM_KEYS),
        "controls" => Some(&CONTROL_KEYS),
        "initial" => Some(&COMPARTMENTS),
        "integration" => Some(&INTEGRATION_KEYS),
        "outputs" => Some(&OUTPUT_KEYS),
        _ => None,
    }
}

fn number(entries: &BTreeMap<(String, String), Entry>, section: &str, key: &str) -> Result<Option<f64>, ConfigError> {
    let Some(e) = entries.get(&(section.to_string(), key.to_string())) else {
        return Ok(None);
    };
    e.value
        .parse::<f64>()
        .map(Some)
        .map_err(|_| ConfigError::Parse { line: e.line, msg: format!("`{key}`: `{}` is not a number", e.value) })
}

/// Parse and validate a configuration. Only `[integration]` and `[outputs]`
/// fall back to defaults.
pub fn parse_config(text: &str) -> Result<ScenarioConfig> {
    let mut entries: BTreeMap<(String, String), Entry> = BTreeMap::new();
    let mut section: Option<String> = None;

    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        if let Some(rest) = content.strip_prefix('[') {
            let name = rest
                .strip_suffix(']')
                .ok_or_else(|| ConfigError::Parse { line, msg: format!("malformed section header `{content}`") })?
                .trim();
            if section_keys(name).is_none() {
                return Err(ConfigError::UnknownSection { section: name.to_string(), line }.into());
            }
            section = Some(name.to_string());
            continue;
        }
        let (key, value) = content
            .split_once('=')
            .ok_or_else(|| ConfigError::Parse { line, msg: format!("expected `key = value`, got `{content}`") })?;
        let (key, value) = (key.trim(), value.trim());
        let Some(sec) = section.as_deref() else {
            return Err(ConfigError::UnknownKey { key: key.to_string(), line }.into());
        };
        if !section_keys(sec).is_some_and(|keys| keys.contains(&key)) {
            return Err(ConfigError::UnknownKey { key: key.to_string(), line }.into());
        }
        let slot = (sec.to_string(), key.to_string());
        if entries.contains_key(&slot) {
            return Err(ConfigError::DuplicateKey { key: key.to_string(), line }.into());
        }
        entries.insert(slot, Entry { value: value.to_string(), line });
    }

    let mut missing = Vec::new();
    for (sec, keys) in [("params", &PARAM_KEYS[..]), ("controls", &CONTROL_KEYS[..]), ("initial", &COMPARTMENTS[..])] {
        for key in keys {
            if !entries.contains_key(&(sec.to_string(), key.to_string())) {
                missing.push(format!("{sec}.{key}"));
            }
        }
    }
    if !missing.is_empty() {
        return Err(ConfigError::MissingKeys(missing).into());
    }

    let req = |sec: &str, key: &str| -> Result<f64, ConfigError> { Ok(number(&entries, sec, key)?.expect("checked above")) };
    let params = ModelParams {
        sigma: req("params", "sigma")?,
        upsilon: req("params", "upsilon")?,
        mu: req("params", "mu")?,
        lambda_param: req("params", "lambda")?,
        eta: req("params", "eta")?,
        gamma: req("params", "gamma")?,
        alpha: req("params", "alpha")?,
        beta: req("params", "beta")?,
        omega: req("params", "omega")?,
        delta: req("params", "delta")?,
        theta: req("params", "theta")?,
        f: req("params", "f")?,
    };
    let controls = Controls { k1: req("controls", "k1")?, k2: req("controls", "k2")? };
    let c = |k: &str| req("initial", k);
    let initial = State::new(c("Q")?, c("S")?, c("L")?, c("I")?, c("R")?, c("T")?);

    let mut integration = IntegrationSettings::default();
    if let Some(e) = entries.get(&("integration".to_string(), "method".to_string())) {
        integration.method = e.value.parse::<Method>().map_err(|msg| ConfigError::Parse { line: e.line, msg })?;
    }
    for (key, slot) in [
        ("dt", &mut integration.dt),
        ("rtol", &mut integration.rtol),
        ("atol", &mut integration.atol),
        ("t0", &mut integration.t0),
        ("t_end", &mut integration.t_end),
        ("sample_dt", &mut integration.sample_dt),
    ] {
        if let Some(v) = number(&entries, "integration", key)? {
            *slot = v;
        }
    }

    let mut outputs = OutputSettings::default();
    if let Some(e) = entries.get(&("outputs".to_string(), "dir".to_string())) {
        outputs.dir = PathBuf::from(&e.value);
    }
    if let Some(e) = entries.get(&("outputs".to_string(), "pretty_json".to_string())) {
        outputs.pretty_json = match e.value.as_str() {
            "true" => true,
            "false" => false,
            other => return Err(ConfigError::Parse { line: e.line, msg: format!("`pretty_json`: `{other}` is not a boolean") }.into()),
        };
    }

    let config = ScenarioConfig { params, controls, initial, integration, outputs };
    config.validate()?;
    Ok(config)
}

/// Serialize to the text format; `parse_config(&render(c)) == c`.
pub fn render(config: &ScenarioConfig) -> String {
    let mut out = String::from("[params]\n");
    for (key, value) in config.params.fields() {
        writeln!(out, "{key} = {value:?}").unwrap();
    }
    out.push_str("\n[controls]\n");
    writeln!(out, "k1 = {:?}", config.controls.k1).unwrap();
    writeln!(out, "k2 = {:?}", config.controls.k2).unwrap();
    out.push_str("\n[initial]\n");
    for (key, value) in COMPARTMENTS.iter().zip(config.initial.to_array()) {
        writeln!(out, "{key} = {value:?}").unwrap();
    }
    let s = &config.integration;
    out.push_str("\n[integration]\n");
    writeln!(out, "method = {}", s.method.name()).unwrap();
    for (key, value) in [("dt", s.dt), ("rtol", s.rtol), ("atol", s.atol), ("t0", s.t0), ("t_end", s.t_end), ("sample_dt", s.sample_dt)] {
        writeln!(out, "{key} = {value:?}").unwrap();
    }
    out.push_str("\n[outputs]\n");
    writeln!(out, "dir = {}", config.outputs.dir.display()).unwrap();
    writeln!(out, "pretty_json = {}", config.outputs.pretty_json).unwrap();
    out
}
