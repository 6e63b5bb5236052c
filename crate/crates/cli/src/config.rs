//! Run configuration: JSON file plus dotted `--set` overrides.

use std::path::Path;

use hjbvi::model::{linear_ode_spec, LinearOdeParams};
use hjbvi::{recursive_utility_spec, BenchmarkParams, ProblemSpec, SchemeParams};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::CliError;

/// A number, or an arithmetic rule such as `"h/15"`, `"2*h"` or `"1/640"`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Quantity {
    Number(f64),
    Rule(String),
}

impl Quantity {
    /// Evaluates left to right over `*` and `/`; the token `h` is the mesh size.
    pub fn resolve(&self, h: Option<f64>) -> Result<f64, String> {
        let rule = match self {
            Quantity::Number(v) => return Ok(*v),
            Quantity::Rule(s) => s,
        };
        let mut acc: Option<f64> = None;
        let mut op = '*';
        let mut token = String::new();
        let apply = |acc: Option<f64>, op: char, token: &str| -> Result<f64, String> {
            let t = token.trim();
            let v = if t == "h" {
                h.ok_or_else(|| format!("rule '{rule}' refers to h, which is not defined here"))?
            } else {
                t.parse::<f64>()
                    .map_err(|_| format!("cannot read '{t}' in rule '{rule}'"))?
            };
            Ok(match (acc, op) {
                (None, _) => v,
                (Some(a), '*') => a * v,
                (Some(a), _) => a / v,
            })
        };
        for ch in rule.chars() {
            if ch == '*' || ch == '/' {
                acc = Some(apply(acc, op, &token)?);
                token.clear();
                op = ch;
            } else {
                token.push(ch);
            }
        }
        let v = apply(acc, op, &token)?;
        if v.is_finite() {
            Ok(v)
        } else {
            Err(format!("rule '{rule}' is not finite"))
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", content = "params", rename_all = "snake_case")]
pub enum ModelConfig {
    RecursiveUtility(BenchmarkParams),
    LinearOde(LinearOdeParams),
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SchemeConfig {
    pub h: Quantity,
    pub dt: Quantity,
    pub epsilon: Quantity,
    pub theta: Quantity,
    pub cost: Quantity,
    #[serde(default)]
    pub k_sl: Option<Quantity>,
    #[serde(default = "default_controls")]
    pub controls: usize,
    #[serde(default)]
    pub picard_tol: Option<f64>,
    #[serde(default)]
    pub picard_max: Option<usize>,
    #[serde(default)]
    pub record_policy: bool,
    #[serde(default = "default_true")]
    pub parallel_components: bool,
}

fn default_controls() -> usize {
    2
}
fn default_true() -> bool {
    true
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudyConfig {
    #[serde(default)]
    pub h: Vec<Quantity>,
    #[serde(default)]
    pub cost: Vec<Quantity>,
    #[serde(default)]
    pub controls: Vec<usize>,
    /// Also time serial component solves in the control study.
    #[serde(default)]
    pub timing: bool,
    #[serde(default)]
    pub domain: Option<(f64, f64)>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default = "default_dir")]
    pub dir: String,
    /// Time steps between rows of the value surface (0: about 50 rows).
    #[serde(default)]
    pub surface_every: usize,
    /// Time steps between rows of the policy file.
    #[serde(default = "default_one")]
    pub policy_every: usize,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig {
            dir: default_dir(),
            surface_every: 0,
            policy_every: 1,
        }
    }
}

fn default_dir() -> String {
    "out".into()
}
fn default_one() -> usize {
    1
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub scheme: SchemeConfig,
    #[serde(default)]
    pub study: StudyConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

fn json_error(origin: &str, e: serde_json::Error) -> CliError {
    if e.line() > 0 {
        CliError::Config(format!(
            "{origin}: line {} column {}: {e}",
            e.line(),
            e.column()
        ))
    } else {
        CliError::Config(format!("{origin}: {e}"))
    }
}

/// Sets `path` (dot separated) in `root` to `raw`, read as JSON when possible
/// and as a string otherwise.
pub fn apply_override(root: &mut Value, assignment: &str) -> Result<(), CliError> {
    let (path, raw) = assignment.split_once('=').ok_or_else(|| {
        CliError::Config(format!(
            "override '{assignment}' is not of the form key=value"
        ))
    })?;
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let keys: Vec<&str> = path.split('.').collect();
    if keys.iter().any(|k| k.is_empty()) {
        return Err(CliError::Config(format!(
            "override key '{path}' is malformed"
        )));
    }
    let mut node = root;
    for key in &keys[..keys.len() - 1] {
        let obj = node.as_object_mut().ok_or_else(|| {
            CliError::Config(format!(
                "override '{path}': '{key}' is not inside a section"
            ))
        })?;
        node = obj
            .entry(key.to_string())
            .or_insert_with(|| Value::Object(Default::default()));
    }
    let obj = node
        .as_object_mut()
        .ok_or_else(|| CliError::Config(format!("override '{path}' does not address a section")))?;
    obj.insert(keys[keys.len() - 1].to_string(), value);
    Ok(())
}

pub fn load(path: &Path, overrides: &[String]) -> Result<RunConfig, CliError> {
    let origin = path.display().to_string();
    let text =
        std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{origin}: {e}")))?;
    parse(&text, &origin, overrides)
}

pub fn parse(text: &str, origin: &str, overrides: &[String]) -> Result<RunConfig, CliError> {
    let mut root: Value = serde_json::from_str(text).map_err(|e| json_error(origin, e))?;
    let cfg: RunConfig = if overrides.is_empty() {
        serde_json::from_str(text).map_err(|e| json_error(origin, e))?
    } else {
        for o in overrides {
            apply_override(&mut root, o)?;
        }
        serde_json::from_value(root)
            .map_err(|e| json_error(&format!("{origin} with overrides"), e))?
    };
    cfg.check()?;
    Ok(cfg)
}

fn cfg_err(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

impl RunConfig {
    fn check(&self) -> Result<(), CliError> {
        let hs = self.study_hs()?;
        if hs.windows(2).any(|w| w[1] > w[0]) {
            return Err(cfg_err("study.h must be sorted from coarse to fine"));
        }
        if self.scheme.controls == 0 {
            return Err(cfg_err("scheme.controls must be at least 1"));
        }
        if self.output.policy_every == 0 {
            return Err(cfg_err("output.policy_every must be at least 1"));
        }
        Ok(())
    }

    pub fn study_hs(&self) -> Result<Vec<f64>, CliError> {
        self.study
            .h
            .iter()
            .map(|q| q.resolve(None).map_err(cfg_err))
            .collect()
    }

    pub fn study_costs(&self) -> Result<Vec<f64>, CliError> {
        self.study
            .cost
            .iter()
            .map(|q| q.resolve(None).map_err(cfg_err))
            .collect()
    }

    pub fn base_h(&self) -> Result<f64, CliError> {
        self.scheme.h.resolve(None).map_err(cfg_err)
    }

    /// Scheme parameters at mesh size `h` and switching cost `cost`.
    pub fn scheme_at(&self, h: f64, cost: f64) -> Result<SchemeParams, CliError> {
        let s = &self.scheme;
        let r = |q: &Quantity, what: &str| {
            q.resolve(Some(h))
                .map_err(|e| cfg_err(format!("scheme.{what}: {e}")))
        };
        let p = SchemeParams {
            h,
            dt: r(&s.dt, "dt")?,
            k_sl: s.k_sl.as_ref().map(|q| r(q, "k_sl")).transpose()?,
            epsilon: r(&s.epsilon, "epsilon")?,
            theta: r(&s.theta, "theta")?,
            cost,
            picard_tol: s.picard_tol.unwrap_or(1e-10),
            picard_max: s.picard_max.unwrap_or(200),
            record_policy: s.record_policy,
            parallel_components: s.parallel_components,
            snapshot_every: 0,
            check_residual: false,
        };
        p.validate().map_err(|e| cfg_err(e.to_string()))?;
        Ok(p)
    }

    pub fn scheme(&self) -> Result<SchemeParams, CliError> {
        let h = self.base_h()?;
        let cost = self.scheme.cost.resolve(Some(h)).map_err(cfg_err)?;
        self.scheme_at(h, cost)
    }

    pub fn spec(&self) -> Result<ProblemSpec, CliError> {
        let spec = match &self.model {
            ModelConfig::RecursiveUtility(p) => {
                let mut p = p.clone();
                if let Some(d) = self.study.domain {
                    p.domain = d;
                }
                recursive_utility_spec(&p)
            }
            ModelConfig::LinearOde(p) => {
                let mut p = p.clone();
                if let Some(d) = self.study.domain {
                    p.domain = d;
                }
                linear_ode_spec(&p)
            }
        };
        spec.map_err(|e| cfg_err(e.to_string()))
    }

    /// The configuration with every rule replaced by its value.
    pub fn resolved(&self) -> Result<RunConfig, CliError> {
        let mut out = self.clone();
        let h = self.base_h()?;
        let num = |q: &Quantity| q.resolve(Some(h)).map(Quantity::Number).map_err(cfg_err);
        out.scheme.h = Quantity::Number(h);
        out.scheme.dt = num(&self.scheme.dt)?;
        out.scheme.epsilon = num(&self.scheme.epsilon)?;
        out.scheme.theta = num(&self.scheme.theta)?;
        out.scheme.cost = num(&self.scheme.cost)?;
        out.scheme.k_sl = self.scheme.k_sl.as_ref().map(num).transpose()?;
        out.study.h = self.study_hs()?.into_iter().map(Quantity::Number).collect();
        out.study.cost = self
            .study_costs()?
            .into_iter()
            .map(Quantity::Number)
            .collect();
        Ok(out)
    }
}
