//! Runs a configured experiment and writes its output files:
//!
//! - `manifest.toml`: the resolved config; feeding it back reproduces the run
//! - `trajectory.jsonl`: one `{step, env_state, sensor, action}` per line
//! - `diagnostics.jsonl`: one [`StepSummary`] per line
//! - `geometry.csv`: only with the exact oracle enabled

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::active::{active_inference_step, combined_objective, ThirdPolicyParams};
use crate::config::{AgentMode, Experiment, ExperimentConfig};
use crate::error::{Error, Result};
use crate::exact::exact_active_posterior;
use crate::geometry::{self, GeometrySnapshot};
use crate::pa_loop::{run_loop, Diagnostics, History, SeedStreams, TrajectoryRecord};
use crate::policy::induce_policy;
use crate::variational::optimize_all;

pub const MANIFEST_FILE: &str = "manifest.toml";
pub const TRAJECTORY_FILE: &str = "trajectory.jsonl";
pub const DIAGNOSTICS_FILE: &str = "diagnostics.jsonl";
pub const GEOMETRY_FILE: &str = "geometry.csv";
pub const COMPARISON_FILE: &str = "comparison.csv";

/// What the agent computed at one step. Vectors follow `action_sequences`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepSummary {
    pub t: usize,
    pub mode: AgentMode,
    pub action_sequences: Vec<String>,
    pub free_energy: Vec<f64>,
    pub motivation: Vec<f64>,
    pub d1: f64,
    pub d2: f64,
    pub total: f64,
    pub joint_form: Option<f64>,
    /// The policy the action was sampled from.
    pub s: Vec<f64>,
    /// Policy induced by the variational posterior.
    pub r_induced: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub log_evidence: Option<Vec<f64>>,
    /// Outer iterations of the joint optimisation (active-inference only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub outer_iterations: Option<usize>,
    pub action_seq: String,
    pub action: usize,
}

impl StepSummary {
    fn diagnostics(&self) -> Result<Diagnostics> {
        match serde_json::to_value(self)? {
            serde_json::Value::Object(map) => Ok(map.into_iter().collect()),
            _ => unreachable!("structs serialise to objects"),
        }
    }
}

/// One agent decision; also the exact-oracle geometry when enabled.
pub fn decide(
    exp: &Experiment,
    history: &History,
    rng: &mut dyn RngCore,
) -> Result<(StepSummary, Option<GeometrySnapshot>)> {
    let agent = &exp.config.agent;
    let opts = agent.options();
    let m = exp.motivation.as_ref();
    let gamma = agent.gamma;
    let exact = if agent.needs_exact() {
        Some(exact_active_posterior(&exp.model, history)?)
    } else {
        None
    };

    let (phi, s, breakdown, action_seq, outer) = match agent.mode {
        AgentMode::ActiveInference => {
            let out = active_inference_step(&exp.model, history, m, gamma, &opts, rng)?;
            let breakdown = out.last().clone();
            let outer = out.trace.len();
            (out.phi, out.rho, breakdown, out.action_seq, Some(outer))
        }
        AgentMode::VariationalInduced | AgentMode::ExactInduced => {
            let phi = optimize_all(&exp.model, history, &opts.variational)?.params;
            let s = match &exact {
                Some(exact) if agent.mode == AgentMode::ExactInduced => {
                    induce_policy(exact, m, gamma)?
                }
                _ => induce_policy(&phi, m, gamma)?,
            };
            let breakdown = combined_objective(
                &exp.model,
                history,
                &phi,
                &ThirdPolicyParams::Direct(s.clone()),
                m,
                gamma,
            )?;
            let seq = s.sample(rng).clone();
            (phi, s, breakdown, seq, None)
        }
    };
    let action = action_seq
        .first()
        .ok_or_else(|| Error::InvalidParameter("empty action sequence".into()))?;
    let snapshot = match &exact {
        Some(exact) if agent.exact_oracle => Some(geometry::snapshot(
            history.len(),
            exact,
            &phi,
            &s,
            m,
            gamma,
        )?),
        _ => None,
    };
    let summary = StepSummary {
        t: history.len(),
        mode: agent.mode,
        action_sequences: phi
            .action_sequences
            .iter()
            .map(ToString::to_string)
            .collect(),
        free_energy: breakdown.free_energies,
        motivation: breakdown.motivation,
        d1: breakdown.d1,
        d2: breakdown.d2,
        total: breakdown.total,
        joint_form: breakdown.joint_form,
        s: s.probs.probs().to_vec(),
        r_induced: breakdown.induced.probs.probs().to_vec(),
        log_evidence: exact.map(|e| e.log_evidence),
        outer_iterations: outer,
        action_seq: action_seq.to_string(),
        action,
    };
    Ok((summary, snapshot))
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub trajectory: TrajectoryRecord,
    pub steps: Vec<StepSummary>,
    pub geometry: Vec<GeometrySnapshot>,
    pub files: Vec<PathBuf>,
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(
        File::create(path).map_err(|e| Error::io(path, e))?,
    ))
}

fn finish(mut w: BufWriter<File>, path: &Path) -> Result<()> {
    w.flush().map_err(|e| Error::io(path, e))
}

/// Runs the loop with the configured agent and writes all outputs to the
/// configured directory.
pub fn run_experiment(exp: &Experiment) -> Result<RunOutput> {
    let dir = &exp.config.output.dir;
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut files = Vec::new();

    let manifest = dir.join(MANIFEST_FILE);
    fs::write(&manifest, exp.config.to_toml_string()?).map_err(|e| Error::io(&manifest, e))?;
    files.push(manifest);

    let mut seeds = SeedStreams::new(exp.config.seed);
    let mut steps = Vec::with_capacity(exp.config.steps);
    let mut snapshots = Vec::new();
    let trajectory = run_loop(
        &exp.environment,
        |history, rng| {
            let (summary, snapshot) = decide(exp, history, rng)?;
            let diagnostics = summary.diagnostics()?;
            let action = summary.action;
            steps.push(summary);
            snapshots.extend(snapshot);
            Ok((action, diagnostics))
        },
        exp.config.steps,
        &mut seeds,
    )?;

    let path = dir.join(DIAGNOSTICS_FILE);
    let mut w = create(&path)?;
    for summary in &steps {
        serde_json::to_writer(&mut w, summary)?;
        w.write_all(b"\n").map_err(|e| Error::io(&path, e))?;
    }
    finish(w, &path)?;
    files.push(path);

    let path = dir.join(TRAJECTORY_FILE);
    let bare = TrajectoryRecord {
        steps: trajectory
            .steps
            .iter()
            .map(|s| crate::pa_loop::StepRecord {
                diagnostics: Diagnostics::new(),
                ..s.clone()
            })
            .collect(),
    };
    let mut w = create(&path)?;
    bare.write_jsonl(&mut w)?;
    finish(w, &path)?;
    files.push(path);

    if exp.config.agent.exact_oracle {
        let path = dir.join(GEOMETRY_FILE);
        geometry::export_csv(&snapshots, &path)?;
        files.push(path);
    }
    Ok(RunOutput {
        trajectory,
        steps,
        geometry: snapshots,
        files,
    })
}

/// Runs every mode from the same seed, each into `<out>/<mode>/`, and
/// writes `<out>/comparison.csv` with one row per step, mode and sequence.
pub fn compare_modes(
    config: &ExperimentConfig,
    modes: &[AgentMode],
) -> Result<Vec<(AgentMode, RunOutput)>> {
    if modes.is_empty() {
        return Err(Error::InvalidParameter("no modes to compare".into()));
    }
    if let Some(dup) = modes
        .iter()
        .enumerate()
        .find(|(i, m)| modes[..*i].contains(m))
    {
        return Err(Error::InvalidParameter(format!(
            "mode {} listed twice",
            dup.1.name()
        )));
    }
    let out = config.output.dir.clone();
    // validate every mode before running any
    let experiments = modes
        .iter()
        .map(|&mode| {
            let mut c = config.clone();
            c.agent.mode = mode;
            c.output.dir = out.join(mode.name());
            c.resolve()
        })
        .collect::<Result<Vec<_>>>()?;
    let runs = modes
        .iter()
        .zip(&experiments)
        .map(|(&mode, exp)| Ok((mode, run_experiment(exp)?)))
        .collect::<Result<Vec<_>>>()?;

    let path = out.join(COMPARISON_FILE);
    let mut w = csv::Writer::from_writer(create(&path)?);
    w.write_record([
        "step",
        "mode",
        "action",
        "chosen_seq",
        "action_seq",
        "policy_prob",
        "free_energy",
        "d1",
        "d2",
        "total",
    ])?;
    let f = |v: f64| format!("{v:.16e}");
    for t in 0..config.steps {
        for (mode, run) in &runs {
            let s = &run.steps[t];
            for (k, seq) in s.action_sequences.iter().enumerate() {
                w.write_record([
                    t.to_string(),
                    mode.name().to_string(),
                    s.action.to_string(),
                    s.action_seq.clone(),
                    seq.clone(),
                    f(s.s[k]),
                    f(s.free_energy[k]),
                    f(s.d1),
                    f(s.d2),
                    f(s.total),
                ])?;
            }
        }
    }
    w.flush().map_err(|e| Error::io(&path, e))?;
    Ok(runs)
}
