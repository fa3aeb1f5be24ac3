//! JSON model configuration shared by the command-line front end and the
//! browser demo. Unknown keys are rejected so that config files double as
//! documentation.

use serde::{Deserialize, Serialize};

use crate::density::ModelBundle;
use crate::error::{Error, Result};
use crate::law::ScalarDensity;
use crate::models::{
    make_brownian_bridge_process, make_brownian_motion_process, make_general_sine_process,
    DiffusionSpec, NuSeq,
};

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub process: ProcessConfig,
    pub diffusion: DiffusionConfig,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "name", rename_all = "snake_case", deny_unknown_fields)]
pub enum ProcessConfig {
    BrownianBridge,
    BrownianMotion,
    GeneralSine { nu: NuConfig, xi_law: XiLawConfig },
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "rule", rename_all = "snake_case", deny_unknown_fields)]
pub enum NuConfig {
    /// 1/(pi^2 j^2)
    InverseSquare,
    /// 1/(j^3 (1 + ln j))
    CubicLog,
    /// explicit finite spectrum
    Values { values: Vec<f64> },
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "name", rename_all = "snake_case", deny_unknown_fields)]
pub enum XiLawConfig {
    /// standard normal
    Normal,
    /// sqrt(2)/(pi (1 + x^4))
    QuarticTail,
    /// uniform on (-sqrt3, sqrt3)
    UniformUnit,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "name", rename_all = "snake_case", deny_unknown_fields)]
pub enum DiffusionConfig {
    Uniform { lo: f64, hi: f64 },
}

impl NuConfig {
    fn to_seq(&self) -> NuSeq {
        match self {
            NuConfig::InverseSquare => NuSeq::InverseSquare,
            NuConfig::CubicLog => NuSeq::CubicLog,
            NuConfig::Values { values } => NuSeq::Values(std::sync::Arc::new(values.clone())),
        }
    }
}

impl XiLawConfig {
    fn to_law(&self) -> Result<ScalarDensity> {
        Ok(match self {
            XiLawConfig::Normal => ScalarDensity::standard_normal(),
            XiLawConfig::QuarticTail => ScalarDensity::quartic_tail(1.0)?,
            XiLawConfig::UniformUnit => ScalarDensity::uniform_unit(),
        })
    }
}

/// Canonical JSON of a model configuration (stable field order).
pub fn canonical_json(cfg: &ModelConfig) -> String {
    serde_json::to_string(cfg).expect("model config serializes")
}

/// Build the process/diffusion bundle described by a configuration.
pub fn build_bundle(cfg: &ModelConfig) -> Result<ModelBundle> {
    let process = match &cfg.process {
        ProcessConfig::BrownianBridge => make_brownian_bridge_process(),
        ProcessConfig::BrownianMotion => make_brownian_motion_process(),
        ProcessConfig::GeneralSine { nu, xi_law } => {
            make_general_sine_process(nu.to_seq(), xi_law.to_law()?)?
        }
    };
    let diffusion = match &cfg.diffusion {
        DiffusionConfig::Uniform { lo, hi } => DiffusionSpec::uniform(*lo, *hi)?,
    };
    let mut bundle = ModelBundle::new(process, diffusion);
    bundle.descriptor = Some(canonical_json(cfg));
    Ok(bundle)
}

fn check_keys(
    value: &serde_json::Value,
    path: &str,
    allowed: &[&str],
    errors: &mut Vec<String>,
) {
    if let Some(obj) = value.as_object() {
        for key in obj.keys() {
            if !allowed.contains(&key.as_str()) {
                errors.push(format!("unknown key '{key}' in {path}"));
            }
        }
    } else {
        errors.push(format!("{path} must be a JSON object"));
    }
}

/// Reject unknown keys anywhere in a model configuration value.
///
/// serde's deny_unknown_fields does not apply inside internally tagged
/// enums, so the schema is enforced explicitly here.
pub fn validate_model_value(value: &serde_json::Value) -> Result<()> {
    let mut errors = Vec::new();
    check_keys(value, "model", &["process", "diffusion"], &mut errors);
    if let Some(process) = value.get("process") {
        match process.get("name").and_then(|n| n.as_str()) {
            Some("brownian_bridge") | Some("brownian_motion") => {
                check_keys(process, "model.process", &["name"], &mut errors);
            }
            Some("general_sine") => {
                check_keys(process, "model.process", &["name", "nu", "xi_law"], &mut errors);
                if let Some(nu) = process.get("nu") {
                    let allowed: &[&str] =
                        if nu.get("rule").and_then(|r| r.as_str()) == Some("values") {
                            &["rule", "values"]
                        } else {
                            &["rule"]
                        };
                    check_keys(nu, "model.process.nu", allowed, &mut errors);
                }
                if let Some(xi) = process.get("xi_law") {
                    check_keys(xi, "model.process.xi_law", &["name"], &mut errors);
                }
            }
            Some(other) => errors.push(format!("unknown process name '{other}'")),
            None => errors.push("model.process needs a 'name'".into()),
        }
    } else {
        errors.push("model needs a 'process'".into());
    }
    if let Some(diffusion) = value.get("diffusion") {
        match diffusion.get("name").and_then(|n| n.as_str()) {
            Some("uniform") => {
                check_keys(diffusion, "model.diffusion", &["name", "lo", "hi"], &mut errors);
            }
            Some(other) => errors.push(format!("unknown diffusion name '{other}'")),
            None => errors.push("model.diffusion needs a 'name'".into()),
        }
    } else {
        errors.push("model needs a 'diffusion'".into());
    }
    if errors.is_empty() {
        Ok(())
    } else {
        Err(Error::InvalidModel(errors.join("; ")))
    }
}

/// Parse a model configuration from a JSON value, rejecting unknown keys.
pub fn parse_model_value(value: &serde_json::Value) -> Result<ModelConfig> {
    validate_model_value(value)?;
    serde_json::from_value(value.clone())
        .map_err(|e| Error::InvalidModel(format!("model config: {e}")))
}

/// Parse a model configuration from JSON, rejecting unknown keys.
pub fn parse_model(json: &str) -> Result<ModelConfig> {
    let value: serde_json::Value = serde_json::from_str(json)
        .map_err(|e| Error::InvalidModel(format!("model config: {e}")))?;
    parse_model_value(&value)
}
