//! Experiment configuration: one TOML file with `[environment]`, `[model]`,
//! `[agent]` and `[output]` sections.
//!
//! Everything is validated when the file is loaded. Validation failures name
//! the offending field and, when it can be found, its line in the file.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::active::ActiveInferenceOptions;
use crate::error::{Error, Result};
use crate::model::{GenerativeModelSpec, Horizon, ModelFile, DEFAULT_ENUM_CAP};
use crate::motivation::{
    ExpectedReward, MotivationFunctional, NegativeExpectedEntropy, RewardStructure,
};
use crate::pa_loop::{EnvironmentSpec, RewardCoordinate};
use crate::prob::Categorical;
use crate::variational::{Init, UpdateSchedule, VariationalOptions};

fn invalid(field: impl Into<String>, message: impl ToString) -> Error {
    Error::Invalid {
        field: field.into(),
        message: message.to_string(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvironmentFile {
    pub env_size: usize,
    pub sensor_size: usize,
    pub action_size: usize,
    pub initial: Vec<f64>,
    /// `[action][env] -> row over next env`
    pub transition: Vec<Vec<Vec<f64>>>,
    /// `[env] -> row over sensors`
    pub sensor: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reward_coordinate: Option<RewardCoordinate>,
}

fn row(field: String, raw: &[f64], len: usize) -> Result<Categorical> {
    if raw.len() != len {
        return Err(invalid(
            field,
            format!("row has {} entries, expected {len}", raw.len()),
        ));
    }
    Categorical::new(raw.to_vec()).map_err(|e| invalid(field, e))
}

fn table(field: &str, raw: &[Vec<f64>], rows: usize, len: usize) -> Result<Vec<Categorical>> {
    if raw.len() != rows {
        return Err(invalid(
            field,
            format!("{} rows, expected {rows}", raw.len()),
        ));
    }
    raw.iter()
        .enumerate()
        .map(|(i, r)| row(format!("{field}[{i}]"), r, len))
        .collect()
}

impl EnvironmentFile {
    pub fn build(&self) -> Result<EnvironmentSpec> {
        for (field, size) in [
            ("environment.env_size", self.env_size),
            ("environment.sensor_size", self.sensor_size),
            ("environment.action_size", self.action_size),
        ] {
            if size == 0 {
                return Err(invalid(field, "must be at least 1"));
            }
        }
        let initial = row("environment.initial".into(), &self.initial, self.env_size)?;
        if self.transition.len() != self.action_size {
            return Err(invalid(
                "environment.transition",
                format!(
                    "{} action blocks, expected action_size = {}",
                    self.transition.len(),
                    self.action_size
                ),
            ));
        }
        let transition = self
            .transition
            .iter()
            .enumerate()
            .map(|(a, raw)| {
                table(
                    &format!("environment.transition[{a}]"),
                    raw,
                    self.env_size,
                    self.env_size,
                )
            })
            .collect::<Result<Vec<_>>>()?;
        let sensor = table(
            "environment.sensor",
            &self.sensor,
            self.env_size,
            self.sensor_size,
        )?;
        let spec = EnvironmentSpec::new(initial, transition, sensor)
            .map_err(|e| invalid("environment", e))?;
        match &self.reward_coordinate {
            Some(rc) => spec
                .with_reward_coordinate(rc.clone())
                .map_err(|e| invalid("environment.reward_coordinate", e)),
            None => Ok(spec),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum AgentMode {
    /// Exact active posterior, then its induced policy.
    ExactInduced,
    /// CAVI-optimised posterior, then its induced policy.
    VariationalInduced,
    /// Joint minimisation over posterior and third policy.
    ActiveInference,
}

impl AgentMode {
    pub const ALL: [AgentMode; 3] = [
        AgentMode::ExactInduced,
        AgentMode::VariationalInduced,
        AgentMode::ActiveInference,
    ];

    pub fn name(self) -> &'static str {
        match self {
            AgentMode::ExactInduced => "exact-induced",
            AgentMode::VariationalInduced => "variational-induced",
            AgentMode::ActiveInference => "active-inference",
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MotivationKind {
    #[default]
    ExpectedReward,
    NegativeExpectedEntropy,
}

fn default_gamma() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentConfig {
    pub mode: AgentMode,
    #[serde(default = "default_gamma")]
    pub gamma: f64,
    #[serde(default)]
    pub motivation: MotivationKind,
    /// Reward per sensor symbol; defaults to the environment's reward
    /// coordinate when one is declared.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rewards: Option<Vec<f64>>,
    #[serde(default = "defaults::tol")]
    pub tol: f64,
    #[serde(default = "defaults::max_iters")]
    pub max_iters: usize,
    #[serde(default = "defaults::sweeps")]
    pub sweeps: usize,
    #[serde(default = "defaults::outer_tol")]
    pub outer_tol: f64,
    #[serde(default = "defaults::max_outer")]
    pub max_outer: usize,
    #[serde(default)]
    pub init: Init,
    /// Also compute exact posteriors and write the geometry CSV.
    #[serde(default)]
    pub exact_oracle: bool,
}

mod defaults {
    use crate::active::ActiveInferenceOptions;

    pub fn tol() -> f64 {
        ActiveInferenceOptions::default().variational.tol
    }
    pub fn max_iters() -> usize {
        ActiveInferenceOptions::default().variational.max_iters
    }
    pub fn sweeps() -> usize {
        ActiveInferenceOptions::default().sweeps
    }
    pub fn outer_tol() -> f64 {
        ActiveInferenceOptions::default().outer_tol
    }
    pub fn max_outer() -> usize {
        ActiveInferenceOptions::default().max_outer
    }
}

impl AgentConfig {
    pub fn new(mode: AgentMode) -> Self {
        AgentConfig {
            mode,
            gamma: default_gamma(),
            motivation: MotivationKind::default(),
            rewards: None,
            tol: defaults::tol(),
            max_iters: defaults::max_iters(),
            sweeps: defaults::sweeps(),
            outer_tol: defaults::outer_tol(),
            max_outer: defaults::max_outer(),
            init: Init::default(),
            exact_oracle: false,
        }
    }

    pub fn options(&self) -> ActiveInferenceOptions {
        ActiveInferenceOptions {
            variational: VariationalOptions {
                tol: self.tol,
                max_iters: self.max_iters,
                schedule: UpdateSchedule::Default,
                init: self.init,
                exact_oracle: self.exact_oracle,
            },
            sweeps: self.sweeps,
            outer_tol: self.outer_tol,
            max_outer: self.max_outer,
        }
    }

    /// Whether exact posteriors are computed at every step.
    pub fn needs_exact(&self) -> bool {
        self.exact_oracle || self.mode == AgentMode::ExactInduced
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: PathBuf,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig {
            dir: PathBuf::from("out"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub steps: usize,
    pub environment: EnvironmentFile,
    pub model: ModelFile,
    pub agent: AgentConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub steps: Option<usize>,
    pub mode: Option<AgentMode>,
    pub gamma: Option<f64>,
    pub out: Option<PathBuf>,
    pub exact_oracle: Option<bool>,
    pub enum_cap: Option<u64>,
}

/// A validated configuration with its built components.
pub struct Experiment {
    /// Fully resolved: defaults filled in, overrides applied.
    pub config: ExperimentConfig,
    pub environment: EnvironmentSpec,
    pub model: GenerativeModelSpec,
    pub motivation: Box<dyn MotivationFunctional>,
}

impl std::fmt::Debug for Experiment {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Experiment")
            .field("config", &self.config)
            .field("motivation", &self.motivation.name())
            .finish_non_exhaustive()
    }
}

fn model_error(e: Error) -> Error {
    match e {
        Error::Config(msg) => match msg.split_once(": ") {
            Some((field, rest)) if field.starts_with("model.") => invalid(field, rest),
            _ => invalid("model", msg),
        },
        Error::Invalid { .. } => e,
        other => invalid("model.theta", other),
    }
}

fn check_mismatch(
    env_field: &str,
    env_size: usize,
    model_field: &str,
    model_size: usize,
) -> Result<()> {
    if env_size != model_size {
        return Err(invalid(
            env_field,
            format!("{env_field} = {env_size} but {model_field} = {model_size}"),
        ));
    }
    Ok(())
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(seed) = o.seed {
            self.seed = seed;
        }
        if let Some(steps) = o.steps {
            self.steps = steps;
        }
        if let Some(mode) = o.mode {
            self.agent.mode = mode;
        }
        if let Some(gamma) = o.gamma {
            self.agent.gamma = gamma;
        }
        if let Some(out) = &o.out {
            self.output.dir = out.clone();
        }
        if let Some(flag) = o.exact_oracle {
            self.agent.exact_oracle = flag;
        }
        if let Some(cap) = o.enum_cap {
            self.model.enum_cap = Some(cap);
        }
    }

    /// Validates everything and fills in derived defaults.
    pub fn resolve(mut self) -> Result<Experiment> {
        if self.seed > i64::MAX as u64 {
            return Err(invalid("seed", "must fit in a signed 64-bit integer"));
        }
        if self.steps == 0 {
            return Err(invalid("steps", "must be at least 1"));
        }
        let cap = self.model.enum_cap.unwrap_or(DEFAULT_ENUM_CAP as u64);
        if cap == 0 || cap > i64::MAX as u64 {
            return Err(invalid("model.enum_cap", "must be between 1 and 2^63 - 1"));
        }
        self.model.enum_cap = Some(cap);

        let environment = self.environment.build()?;
        let model = self.model.build().map_err(model_error)?;
        check_mismatch(
            "environment.sensor_size",
            self.environment.sensor_size,
            "model.sensor_size",
            self.model.sensor_size,
        )?;
        check_mismatch(
            "environment.action_size",
            self.environment.action_size,
            "model.action_size",
            self.model.action_size,
        )?;
        model
            .check_compatible(&environment)
            .map_err(|e| invalid("model", e))?;

        let last = self.steps - 1;
        if let Horizon::Fixed { final_step } = self.model.horizon {
            if final_step < last {
                return Err(invalid(
                    "model.horizon",
                    format!("final_step = {final_step} ends before the last step {last}"),
                ));
            }
        }
        // The largest layout and sequence set occur at the last step.
        model
            .action_sequences(last)
            .map_err(|e| invalid("model.enum_cap", e))?;
        if self.agent.needs_exact() {
            model
                .checked_layout(last)
                .map_err(|e| invalid("model.enum_cap", e))?;
        }

        let a = &self.agent;
        if !(a.gamma.is_finite() && a.gamma >= 0.0) {
            return Err(invalid("agent.gamma", "must be finite and non-negative"));
        }
        if !(a.tol.is_finite() && a.tol > 0.0) {
            return Err(invalid("agent.tol", "must be positive"));
        }
        if !(a.outer_tol.is_finite() && a.outer_tol >= 0.0) {
            return Err(invalid(
                "agent.outer_tol",
                "must be finite and non-negative",
            ));
        }
        for (field, v) in [
            ("agent.max_iters", a.max_iters),
            ("agent.sweeps", a.sweeps),
            ("agent.max_outer", a.max_outer),
        ] {
            if v == 0 {
                return Err(invalid(field, "must be at least 1"));
            }
        }

        let motivation: Box<dyn MotivationFunctional> = match a.motivation {
            MotivationKind::NegativeExpectedEntropy => Box::new(NegativeExpectedEntropy),
            MotivationKind::ExpectedReward => {
                let values =
                    match (&a.rewards, environment.reward_coordinate()) {
                        (Some(r), _) => r.clone(),
                        (None, Some(rc)) => rc.symbol_rewards(),
                        (None, None) => return Err(invalid(
                            "agent.rewards",
                            "required for expected-reward without environment.reward_coordinate",
                        )),
                    };
                if values.len() != self.model.sensor_size {
                    return Err(invalid(
                        "agent.rewards",
                        format!(
                            "{} values but model.sensor_size = {}",
                            values.len(),
                            self.model.sensor_size
                        ),
                    ));
                }
                let rewards = RewardStructure::new(values.clone())
                    .map_err(|e| invalid("agent.rewards", e))?;
                self.agent.rewards = Some(values);
                Box::new(ExpectedReward { rewards })
            }
        };
        Ok(Experiment {
            config: self,
            environment,
            model,
            motivation,
        })
    }
}

/// Best-effort line (1-based) of `field` in a TOML document.
///
/// Array-of-tables entries are addressed as `name[k]`; when the exact key
/// is not found, enclosing keys and tables are tried.
pub fn locate(text: &str, field: &str) -> Option<usize> {
    let mut entries: Vec<(String, usize)> = Vec::new();
    let mut current = String::new();
    let mut counts: std::collections::HashMap<String, usize> = Default::default();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if let Some(inner) = line.strip_prefix("[[").and_then(|l| l.split("]]").next()) {
            let name = inner.trim().to_string();
            let k = counts.entry(name.clone()).or_insert(0);
            current = format!("{name}[{k}]");
            *k += 1;
            entries.push((current.clone(), i + 1));
        } else if let Some(inner) = line.strip_prefix('[').and_then(|l| l.split(']').next()) {
            current = inner.trim().to_string();
            entries.push((current.clone(), i + 1));
        } else if let Some((key, _)) = line.split_once('=') {
            let key = key.trim().trim_matches('"');
            if key.is_empty() || key.starts_with('#') {
                continue;
            }
            let full = if current.is_empty() {
                key.to_string()
            } else {
                format!("{current}.{key}")
            };
            entries.push((full, i + 1));
        }
    }
    let mut candidate = field.to_string();
    loop {
        if let Some((_, line)) = entries.iter().find(|(name, _)| *name == candidate) {
            return Some(*line);
        }
        if let Some(stripped) = candidate
            .strip_suffix(']')
            .and_then(|c| c.rfind('[').map(|i| c[..i].to_string()))
        {
            candidate = stripped;
        } else {
            candidate.truncate(candidate.rfind('.')?);
        }
    }
}

/// Reads, overrides and validates a config file. Errors carry the file
/// path and the offending line.
pub fn load(path: &Path, overrides: &Overrides) -> Result<Experiment> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut config = ExperimentConfig::from_toml_str(&text).map_err(|e| {
        Error::Config(format!(
            "{}: {}",
            path.display(),
            e.to_string().trim_start_matches("config: ")
        ))
    })?;
    config.apply(overrides);
    config.resolve().map_err(|e| match e {
        Error::Invalid { field, message } => {
            let at = match locate(&text, &field) {
                Some(line) => format!("{}:{line}", path.display()),
                None => path.display().to_string(),
            };
            Error::Config(format!("{at}: {field}: {message}"))
        }
        other => other,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) const MINIMAL: &str = r#"
seed = 7
steps = 1

[environment]
env_size = 1
sensor_size = 1
action_size = 1
initial = [1.0]
transition = [[[1.0]]]
sensor = [[1.0]]

[model]
env_size = 1
sensor_size = 1
action_size = 1
horizon = { mode = "rolling", lookahead = 1 }

[[model.theta]]
weight = 1.0
initial = [1.0]
transition = [[[1.0]]]
sensor = [[1.0]]

[agent]
mode = "active-inference"
rewards = [0.0]
"#;

    fn write(text: &str) -> (tempfile::TempDir, PathBuf) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("exp.toml");
        std::fs::write(&path, text).unwrap();
        (dir, path)
    }

    #[test]
    fn minimal_config_resolves_with_defaults() {
        let exp = ExperimentConfig::from_toml_str(MINIMAL)
            .unwrap()
            .resolve()
            .unwrap();
        assert_eq!(exp.config.agent.gamma, 1.0);
        assert_eq!(exp.config.agent.tol, 1e-10);
        assert_eq!(exp.config.model.enum_cap, Some(DEFAULT_ENUM_CAP as u64));
        assert_eq!(exp.config.output.dir, PathBuf::from("out"));
        assert_eq!(exp.motivation.name(), "expected-reward");
    }

    #[test]
    fn resolved_config_round_trips_through_toml() {
        let exp = ExperimentConfig::from_toml_str(MINIMAL)
            .unwrap()
            .resolve()
            .unwrap();
        let text = exp.config.to_toml_string().unwrap();
        let again = ExperimentConfig::from_toml_str(&text)
            .unwrap()
            .resolve()
            .unwrap();
        assert_eq!(again.config, exp.config);
        assert_eq!(again.config.to_toml_string().unwrap(), text);
    }

    #[test]
    fn mismatched_sensor_sizes_name_both_fields_and_the_line() {
        let text = MINIMAL
            .replacen(
                "sensor_size = 1\naction_size = 1\nhorizon",
                "sensor_size = 2\naction_size = 1\nhorizon",
                1,
            )
            .replace(
                "sensor = [[1.0]]\n\n[agent]",
                "sensor = [[0.5, 0.5]]\n\n[agent]",
            );
        let (_dir, path) = write(&text);
        let err = load(&path, &Overrides::default()).unwrap_err().to_string();
        assert!(err.contains("environment.sensor_size"), "{err}");
        assert!(err.contains("model.sensor_size"), "{err}");
        assert!(err.contains("exp.toml:7:"), "{err}");
    }

    #[test]
    fn bad_row_reports_its_path_and_line() {
        let text = MINIMAL.replacen("transition = [[[1.0]]]", "transition = [[[0.9]]]", 1);
        let (_dir, path) = write(&text);
        let err = load(&path, &Overrides::default()).unwrap_err().to_string();
        assert!(err.contains(":10: environment.transition[0][0]"), "{err}");

        let text = MINIMAL.replace(
            "weight = 1.0\ninitial = [1.0]",
            "weight = 1.0\ninitial = [0.5]",
        );
        let (_dir, path) = write(&text);
        let err = load(&path, &Overrides::default()).unwrap_err().to_string();
        assert!(err.contains(":21: model.theta[0].initial"), "{err}");
    }

    #[test]
    fn syntax_and_unknown_field_errors_carry_lines() {
        let (_dir, path) = write(&MINIMAL.replace(
            "mode = \"active-inference\"",
            "mode = \"active-inference\"\nbogus = 1",
        ));
        let err = load(&path, &Overrides::default()).unwrap_err().to_string();
        assert!(err.contains("line 27"), "{err}");
        assert!(err.contains("bogus"), "{err}");
        let (_dir, path) =
            write(&MINIMAL.replace("mode = \"active-inference\"", "mode = \"psychic\""));
        assert!(load(&path, &Overrides::default()).is_err());
    }

    #[test]
    fn missing_rewards_are_rejected() {
        let (_dir, path) = write(&MINIMAL.replace("rewards = [0.0]\n", ""));
        let err = load(&path, &Overrides::default()).unwrap_err().to_string();
        assert!(err.contains("agent.rewards"), "{err}");
    }

    #[test]
    fn overrides_win_and_are_recorded() {
        let (_dir, path) = write(MINIMAL);
        let o = Overrides {
            seed: Some(99),
            steps: Some(3),
            mode: Some(AgentMode::ExactInduced),
            gamma: Some(2.5),
            out: Some(PathBuf::from("elsewhere")),
            exact_oracle: Some(true),
            enum_cap: Some(500),
        };
        let exp = load(&path, &o).unwrap();
        let c = &exp.config;
        assert_eq!(
            (c.seed, c.steps, c.agent.mode, c.agent.gamma),
            (99, 3, AgentMode::ExactInduced, 2.5)
        );
        assert_eq!(c.output.dir, PathBuf::from("elsewhere"));
        assert!(c.agent.exact_oracle);
        assert_eq!(exp.model.enum_cap(), 500);
    }

    #[test]
    fn cap_and_horizon_are_checked_up_front() {
        let (_dir, path) = write(MINIMAL);
        let o = Overrides {
            steps: Some(5),
            mode: Some(AgentMode::ExactInduced),
            enum_cap: Some(1),
            ..Overrides::default()
        };
        // one state, one sensor: every layout has a single cell
        assert!(load(&path, &o).is_ok());

        let text = MINIMAL.replace(
            "horizon = { mode = \"rolling\", lookahead = 1 }",
            "horizon = { mode = \"fixed\", final_step = 2 }",
        );
        let (_dir, path) = write(&text);
        let o = Overrides {
            steps: Some(4),
            ..Overrides::default()
        };
        let err = load(&path, &o).unwrap_err().to_string();
        assert!(err.contains(":17: model.horizon"), "{err}");
    }

    #[test]
    fn locate_handles_tables_and_arrays() {
        let text = "a = 1\n[x]\nb = 2\n[[y.z]]\nc = 3\n[[y.z]]\nc = 4\n";
        assert_eq!(locate(text, "a"), Some(1));
        assert_eq!(locate(text, "x.b"), Some(3));
        assert_eq!(locate(text, "y.z[1].c"), Some(7));
        assert_eq!(locate(text, "y.z[1].c[0][2]"), Some(7));
        assert_eq!(locate(text, "x.missing"), Some(2));
        assert_eq!(locate(text, "nowhere"), None);
    }
}
