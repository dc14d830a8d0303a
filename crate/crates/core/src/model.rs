//! The agent's generative model `q` over hatted variables with a finite
//! parameter support.
//!
//! Free variables at time `t` with final modelled step `T̂` are laid out as a
//! dense table with axes `[θ, ê_0, …, ê_T̂, ŝ_t, …, ŝ_T̂]` (θ slowest, last
//! sensor fastest). The past sensors `ŝ_τ = s_τ` and actions `â_τ = a_τ`
//! for `τ < t` are clamped from the history.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pa_loop::{check_rows, EnvironmentSpec, History};
use crate::prob::{Alphabet, Categorical};

/// Default bound on the number of free-assignment cells per action sequence.
pub const DEFAULT_ENUM_CAP: u128 = 1_000_000;

/// One parameter point θ = (θ¹, θ², θ³).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThetaPoint {
    /// θ¹: `sensor[ê]` is `q(ŝ | ê)`.
    pub sensor: Vec<Categorical>,
    /// θ²: `transition[â][ê]` is `q(ê' | â, ê)`.
    pub transition: Vec<Vec<Categorical>>,
    /// θ³: `q(ê_0)`.
    pub initial: Categorical,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ThetaSupport {
    points: Vec<ThetaPoint>,
    prior: Categorical,
}

impl ThetaSupport {
    pub fn new(points: Vec<ThetaPoint>, prior: Categorical) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::EmptyInput);
        }
        if prior.len() != points.len() {
            return Err(Error::ShapeMismatch {
                left: vec![points.len()],
                right: vec![prior.len()],
            });
        }
        Ok(ThetaSupport { points, prior })
    }

    pub fn single(point: ThetaPoint) -> Self {
        ThetaSupport {
            points: vec![point],
            prior: Categorical::point_mass(1, 0).expect("size one"),
        }
    }

    pub fn points(&self) -> &[ThetaPoint] {
        &self.points
    }

    pub fn prior(&self) -> &Categorical {
        &self.prior
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Final modelled step `T̂`: fixed, or `t + lookahead` at every step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum Horizon {
    Fixed { final_step: usize },
    Rolling { lookahead: usize },
}

impl Horizon {
    pub fn final_step(self, t: usize) -> Result<usize> {
        match self {
            Horizon::Fixed { final_step } if t > final_step => {
                Err(Error::HorizonExceeded { t, final_step })
            }
            Horizon::Fixed { final_step } => Ok(final_step),
            Horizon::Rolling { lookahead } => Ok(t + lookahead),
        }
    }
}

/// Log-kernels cached at construction; zero probabilities map to `-inf`.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct LogKernels {
    pub prior: Vec<f64>,
    /// `[θ][ê]`
    pub initial: Vec<Vec<f64>>,
    /// `[θ][â][ê][ê']`
    pub transition: Vec<Vec<Vec<Vec<f64>>>>,
    /// `[θ][ê][ŝ]`
    pub sensor: Vec<Vec<Vec<f64>>>,
}

fn ln_row(c: &Categorical) -> Vec<f64> {
    c.probs().iter().map(|p| p.ln()).collect()
}

impl LogKernels {
    fn build(theta: &ThetaSupport) -> Self {
        LogKernels {
            prior: ln_row(&theta.prior),
            initial: theta.points.iter().map(|p| ln_row(&p.initial)).collect(),
            transition: theta
                .points
                .iter()
                .map(|p| {
                    p.transition
                        .iter()
                        .map(|rows| rows.iter().map(ln_row).collect())
                        .collect()
                })
                .collect(),
            sensor: theta
                .points
                .iter()
                .map(|p| p.sensor.iter().map(ln_row).collect())
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenerativeModelSpec {
    env: Alphabet,
    sensor: Alphabet,
    action: Alphabet,
    theta: ThetaSupport,
    horizon: Horizon,
    enum_cap: u128,
    logs: LogKernels,
}

impl GenerativeModelSpec {
    pub fn new(
        env: Alphabet,
        sensor: Alphabet,
        action: Alphabet,
        theta: ThetaSupport,
        horizon: Horizon,
    ) -> Result<Self> {
        for point in &theta.points {
            if point.initial.len() != env.size() {
                return Err(Error::AlphabetMismatch {
                    first: "theta.initial".into(),
                    first_size: point.initial.len(),
                    second: "model.env_size".into(),
                    second_size: env.size(),
                });
            }
            check_rows(
                "theta sensor kernel",
                &point.sensor,
                env.size(),
                sensor.size(),
            )?;
            if point.transition.len() != action.size() {
                return Err(Error::AlphabetMismatch {
                    first: "theta.transition (action rows)".into(),
                    first_size: point.transition.len(),
                    second: "model.action_size".into(),
                    second_size: action.size(),
                });
            }
            for rows in &point.transition {
                check_rows("theta transition kernel", rows, env.size(), env.size())?;
            }
        }
        let logs = LogKernels::build(&theta);
        Ok(GenerativeModelSpec {
            env,
            sensor,
            action,
            theta,
            horizon,
            enum_cap: DEFAULT_ENUM_CAP,
            logs,
        })
    }

    pub fn with_enum_cap(mut self, cap: u128) -> Self {
        self.enum_cap = cap;
        self
    }

    pub fn env_alphabet(&self) -> Alphabet {
        self.env
    }

    pub fn sensor_alphabet(&self) -> Alphabet {
        self.sensor
    }

    pub fn action_alphabet(&self) -> Alphabet {
        self.action
    }

    pub fn theta(&self) -> &ThetaSupport {
        &self.theta
    }

    pub fn horizon(&self) -> Horizon {
        self.horizon
    }

    pub fn enum_cap(&self) -> u128 {
        self.enum_cap
    }

    /// The model must speak the loop's sensor and action alphabets.
    pub fn check_compatible(&self, env: &EnvironmentSpec) -> Result<()> {
        if self.sensor != env.sensor_alphabet() {
            return Err(Error::AlphabetMismatch {
                first: "environment.sensor_size".into(),
                first_size: env.sensor_alphabet().size(),
                second: "model.sensor_size".into(),
                second_size: self.sensor.size(),
            });
        }
        if self.action != env.action_alphabet() {
            return Err(Error::AlphabetMismatch {
                first: "environment.action_size".into(),
                first_size: env.action_alphabet().size(),
                second: "model.action_size".into(),
                second_size: self.action.size(),
            });
        }
        Ok(())
    }

    pub fn layout(&self, t: usize) -> Result<FreeLayout> {
        Ok(FreeLayout {
            t,
            final_step: self.horizon.final_step(t)?,
            n_theta: self.theta.len(),
            n_env: self.env.size(),
            n_sensor: self.sensor.size(),
        })
    }

    /// Layout at the history's time step, with the enumeration cap enforced.
    pub fn checked_layout(&self, t: usize) -> Result<FreeLayout> {
        let layout = self.layout(t)?;
        let size = layout.size();
        if size > self.enum_cap {
            return Err(Error::HorizonTooLarge {
                size,
                cap: self.enum_cap,
            });
        }
        Ok(layout)
    }

    pub(crate) fn check_history(&self, history: &History) -> Result<()> {
        for (s, a) in history.pairs() {
            self.sensor.check("history sensor", *s)?;
            self.action.check("history action", *a)?;
        }
        Ok(())
    }

    /// Every future action sequence `â_{t:T̂}` in lexicographic order.
    pub fn action_sequences(&self, t: usize) -> Result<Vec<ActionSeq>> {
        let len = self.horizon.final_step(t)? - t + 1;
        let count = (self.action.size() as u128).checked_pow(len as u32);
        match count {
            Some(c) if c <= self.enum_cap => {
                Ok(enumerate_action_sequences(self.action.size(), len))
            }
            _ => Err(Error::HorizonTooLarge {
                size: count.unwrap_or(u128::MAX),
                cap: self.enum_cap,
            }),
        }
    }

    pub fn conditioned<'a>(
        &'a self,
        history: &History,
        action_seq: &ActionSeq,
    ) -> Result<Conditioned<'a>> {
        self.check_history(history)?;
        let layout = self.layout(history.len())?;
        if action_seq.len() != layout.horizon_len() {
            return Err(Error::ShapeMismatch {
                left: vec![layout.horizon_len()],
                right: vec![action_seq.len()],
            });
        }
        for &a in action_seq.actions() {
            self.action.check("future action", a)?;
        }
        let mut actions: Vec<usize> = history.actions().collect();
        actions.extend_from_slice(action_seq.actions());
        Ok(Conditioned {
            logs: &self.logs,
            layout,
            actions,
            past_sensors: history.sensors().collect(),
        })
    }
}

/// A future action sequence `â_{t:T̂}`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ActionSeq(Vec<usize>);

impl ActionSeq {
    pub fn new(actions: Vec<usize>) -> Self {
        ActionSeq(actions)
    }

    pub fn actions(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn first(&self) -> Option<usize> {
        self.0.first().copied()
    }
}

impl fmt::Display for ActionSeq {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, a) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(":")?;
            }
            write!(f, "{a}")?;
        }
        Ok(())
    }
}

/// All sequences of length `len` over `n_actions`, first action slowest.
pub fn enumerate_action_sequences(n_actions: usize, len: usize) -> Vec<ActionSeq> {
    let count = n_actions.pow(len as u32);
    (0..count)
        .map(|mut k| {
            let mut seq = vec![0; len];
            for slot in seq.iter_mut().rev() {
                *slot = k % n_actions;
                k /= n_actions;
            }
            ActionSeq(seq)
        })
        .collect()
}

/// Shape of the free-variable space at time `t`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FreeLayout {
    pub t: usize,
    pub final_step: usize,
    pub n_theta: usize,
    pub n_env: usize,
    pub n_sensor: usize,
}

impl FreeLayout {
    /// Number of latent environment nodes `ê_0..ê_T̂`.
    pub fn env_len(&self) -> usize {
        self.final_step + 1
    }

    /// Number of free future sensors and future actions, `T̂ - t + 1`.
    pub fn horizon_len(&self) -> usize {
        self.final_step + 1 - self.t
    }

    pub fn dims(&self) -> Vec<usize> {
        let mut dims = vec![self.n_theta];
        dims.extend(std::iter::repeat_n(self.n_env, self.env_len()));
        dims.extend(std::iter::repeat_n(self.n_sensor, self.horizon_len()));
        dims
    }

    pub fn size(&self) -> u128 {
        self.dims().iter().map(|&d| d as u128).product()
    }

    pub fn theta_axis(&self) -> usize {
        0
    }

    pub fn env_axis(&self, tau: usize) -> usize {
        1 + tau
    }

    /// Axis of `ŝ_τ` for `t ≤ τ ≤ T̂`.
    pub fn sensor_axis(&self, tau: usize) -> usize {
        1 + self.env_len() + (tau - self.t)
    }

    pub fn sensor_axes(&self) -> Vec<usize> {
        (self.t..=self.final_step)
            .map(|tau| self.sensor_axis(tau))
            .collect()
    }

    /// Splits a flat cell index into `(θ, ê_{0:T̂}, ŝ_{t:T̂})`.
    pub fn decode(&self, mut flat: usize, env: &mut [usize], sensors: &mut [usize]) -> usize {
        for s in sensors.iter_mut().rev() {
            *s = flat % self.n_sensor;
            flat /= self.n_sensor;
        }
        for e in env.iter_mut().rev() {
            *e = flat % self.n_env;
            flat /= self.n_env;
        }
        flat
    }
}

/// The model conditioned on a history and one future action sequence.
#[derive(Debug, Clone)]
pub struct Conditioned<'a> {
    pub(crate) logs: &'a LogKernels,
    pub(crate) layout: FreeLayout,
    /// `â_0..â_T̂`, past part clamped from the history.
    pub(crate) actions: Vec<usize>,
    /// `s_0..s_{t-1}`.
    pub(crate) past_sensors: Vec<usize>,
}

impl Conditioned<'_> {
    pub fn layout(&self) -> FreeLayout {
        self.layout
    }

    /// `log q(s_{≺t}, ŝ_{t:T̂}, ê_{0:T̂}, θ | â_{t:T̂}, a_{≺t})`; `-inf` for
    /// impossible assignments.
    pub fn log_joint(&self, theta: usize, env: &[usize], future_sensors: &[usize]) -> f64 {
        let l = self.logs;
        let mut acc = l.prior[theta] + l.initial[theta][env[0]];
        for tau in 1..env.len() {
            acc += l.transition[theta][self.actions[tau]][env[tau - 1]][env[tau]];
        }
        for (tau, &s) in self.past_sensors.iter().enumerate() {
            acc += l.sensor[theta][env[tau]][s];
        }
        let t = self.layout.t;
        for (k, &s) in future_sensors.iter().enumerate() {
            acc += l.sensor[theta][env[t + k]][s];
        }
        // -inf + finite stays -inf; never NaN since no +inf terms exist
        acc
    }

    /// Log-joint of every free cell in layout order.
    pub fn log_joint_table(&self) -> Vec<f64> {
        let size = self.layout.size() as usize;
        let mut env = vec![0; self.layout.env_len()];
        let mut sensors = vec![0; self.layout.horizon_len()];
        (0..size)
            .map(|flat| {
                let theta = self.layout.decode(flat, &mut env, &mut sensors);
                self.log_joint(theta, &env, &sensors)
            })
            .collect()
    }
}

/// A complete assignment of every model node.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModelAssignment {
    pub theta: usize,
    /// `ê_0..ê_T̂`
    pub env: Vec<usize>,
    /// `ŝ_0..ŝ_T̂`; the first `clamped` entries come from the history.
    pub sensors: Vec<usize>,
    /// `â_0..â_T̂`; the first `clamped` entries come from the history.
    pub actions: Vec<usize>,
    pub clamped: usize,
}

impl ModelAssignment {
    pub fn new(
        history: &History,
        action_seq: &ActionSeq,
        theta: usize,
        env: Vec<usize>,
        future_sensors: &[usize],
    ) -> Self {
        let mut sensors: Vec<usize> = history.sensors().collect();
        sensors.extend_from_slice(future_sensors);
        let mut actions: Vec<usize> = history.actions().collect();
        actions.extend_from_slice(action_seq.actions());
        ModelAssignment {
            theta,
            env,
            sensors,
            actions,
            clamped: history.len(),
        }
    }

    pub fn future_sensors(&self) -> &[usize] {
        &self.sensors[self.clamped..]
    }
}

/// Log-probability of a full assignment under `q`, actions treated as
/// conditioned. Returns `-inf` for zero-probability assignments.
pub fn joint_log_prob(spec: &GenerativeModelSpec, a: &ModelAssignment) -> Result<f64> {
    if a.theta >= spec.theta.len() {
        return Err(Error::IndexOutOfAlphabet {
            what: "theta index",
            value: a.theta,
            size: spec.theta.len(),
        });
    }
    let n = a.env.len();
    if n == 0 || a.sensors.len() != n || a.actions.len() != n || a.clamped > n {
        return Err(Error::ShapeMismatch {
            left: vec![n, n, n],
            right: vec![a.env.len(), a.sensors.len(), a.actions.len()],
        });
    }
    for &e in &a.env {
        spec.env.check("latent environment", e)?;
    }
    for &s in &a.sensors {
        spec.sensor.check("sensor", s)?;
    }
    for &act in &a.actions {
        spec.action.check("action", act)?;
    }
    let l = &spec.logs;
    let th = a.theta;
    let mut acc = l.prior[th] + l.initial[th][a.env[0]];
    for tau in 1..n {
        acc += l.transition[th][a.actions[tau]][a.env[tau - 1]][a.env[tau]];
    }
    for tau in 0..n {
        acc += l.sensor[th][a.env[tau]][a.sensors[tau]];
    }
    Ok(acc)
}

/// Iterates every free assignment for a fixed history and action sequence
/// in layout order: θ slowest, then `ê_0..ê_T̂`, then `ŝ_t..ŝ_T̂`.
pub fn enumerate_assignments<'a>(
    spec: &GenerativeModelSpec,
    history: &'a History,
    action_seq: &'a ActionSeq,
) -> Result<impl Iterator<Item = ModelAssignment> + 'a> {
    spec.check_history(history)?;
    let layout = spec.checked_layout(history.len())?;
    if action_seq.len() != layout.horizon_len() {
        return Err(Error::ShapeMismatch {
            left: vec![layout.horizon_len()],
            right: vec![action_seq.len()],
        });
    }
    let size = layout.size() as usize;
    Ok((0..size).map(move |flat| {
        let mut env = vec![0; layout.env_len()];
        let mut sensors = vec![0; layout.horizon_len()];
        let theta = layout.decode(flat, &mut env, &mut sensors);
        ModelAssignment::new(history, action_seq, theta, env, &sensors)
    }))
}

/// On-disk model description (TOML), kernels given row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelFile {
    pub env_size: usize,
    pub sensor_size: usize,
    pub action_size: usize,
    pub horizon: Horizon,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub enum_cap: Option<u64>,
    pub theta: Vec<ThetaFile>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ThetaFile {
    pub weight: f64,
    pub initial: Vec<f64>,
    /// `[action][env] -> row over next env`
    pub transition: Vec<Vec<Vec<f64>>>,
    /// `[env] -> row over sensors`
    pub sensor: Vec<Vec<f64>>,
}

fn rows(field: &str, raw: &[Vec<f64>]) -> Result<Vec<Categorical>> {
    raw.iter()
        .enumerate()
        .map(|(i, r)| {
            Categorical::new(r.clone()).map_err(|e| Error::Config(format!("{field}[{i}]: {e}")))
        })
        .collect()
}

impl ModelFile {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn build(&self) -> Result<GenerativeModelSpec> {
        let env = Alphabet::new(self.env_size)?;
        let sensor = Alphabet::new(self.sensor_size)?;
        let action = Alphabet::new(self.action_size)?;
        let mut points = Vec::with_capacity(self.theta.len());
        for (k, th) in self.theta.iter().enumerate() {
            let initial = Categorical::new(th.initial.clone())
                .map_err(|e| Error::Config(format!("model.theta[{k}].initial: {e}")))?;
            let sensor_rows = rows(&format!("model.theta[{k}].sensor"), &th.sensor)?;
            let transition = th
                .transition
                .iter()
                .enumerate()
                .map(|(a, r)| rows(&format!("model.theta[{k}].transition[{a}]"), r))
                .collect::<Result<Vec<_>>>()?;
            points.push(ThetaPoint {
                sensor: sensor_rows,
                transition,
                initial,
            });
        }
        let weights: Vec<f64> = self.theta.iter().map(|t| t.weight).collect();
        let prior = Categorical::from_weights(weights)
            .map_err(|e| Error::Config(format!("model.theta weights: {e}")))?;
        let theta = ThetaSupport::new(points, prior)?;
        let spec = GenerativeModelSpec::new(env, sensor, action, theta, self.horizon)?;
        Ok(match self.enum_cap {
            Some(cap) => spec.with_enum_cap(cap as u128),
            None => spec,
        })
    }
}
