//! True environment dynamics and the perception-action loop.
//!
//! Per step `t` the agent sees the history `(s_τ, a_τ)` for `τ < t`, picks
//! `a_t`, then the environment moves and emits `s_t`. At `t = 0` the
//! environment state is drawn from the initial distribution and `a_0` has no
//! effect, matching the generative model where `Ê_0` has no action parent.

use std::collections::BTreeMap;
use std::io::Write;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::prob::{Alphabet, Categorical};

/// Free-form per-step diagnostics attached by the agent.
pub type Diagnostics = BTreeMap<String, serde_json::Value>;

/// Factored sensor alphabet in which one factor carries reward.
///
/// Composite sensor symbols are decoded row-major over `factor_sizes`
/// (last factor fastest).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewardCoordinate {
    pub factor_sizes: Vec<usize>,
    pub reward_factor: usize,
    pub reward_values: Vec<f64>,
}

impl RewardCoordinate {
    pub fn validate(&self, sensor: Alphabet) -> Result<()> {
        let product: usize = self.factor_sizes.iter().product();
        if product != sensor.size() {
            return Err(Error::AlphabetMismatch {
                first: "reward_coordinate.factor_sizes (product)".into(),
                first_size: product,
                second: "sensor_size".into(),
                second_size: sensor.size(),
            });
        }
        let size = *self
            .factor_sizes
            .get(self.reward_factor)
            .ok_or_else(|| Error::Config("reward_factor out of range".into()))?;
        if self.reward_values.len() != size {
            return Err(Error::AlphabetMismatch {
                first: "reward_coordinate.reward_values".into(),
                first_size: self.reward_values.len(),
                second: "reward factor size".into(),
                second_size: size,
            });
        }
        Ok(())
    }

    /// Reward of every composite sensor symbol.
    pub fn symbol_rewards(&self) -> Vec<f64> {
        let total: usize = self.factor_sizes.iter().product();
        let stride: usize = self.factor_sizes[self.reward_factor + 1..].iter().product();
        let size = self.factor_sizes[self.reward_factor];
        (0..total)
            .map(|s| self.reward_values[(s / stride) % size])
            .collect()
    }
}

/// Time-homogeneous environment `p`: initial state, transitions and sensors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvironmentSpec {
    env: Alphabet,
    sensor: Alphabet,
    action: Alphabet,
    initial: Categorical,
    /// `transition[a][e]` is `p(e' | a, e)`.
    transition: Vec<Vec<Categorical>>,
    /// `sensor_kernel[e]` is `p(s | e)`.
    sensor_kernel: Vec<Categorical>,
    reward_coordinate: Option<RewardCoordinate>,
}

impl EnvironmentSpec {
    pub fn new(
        initial: Categorical,
        transition: Vec<Vec<Categorical>>,
        sensor_kernel: Vec<Categorical>,
    ) -> Result<Self> {
        let env = Alphabet::new(initial.len())?;
        let action = Alphabet::new(transition.len())?;
        let sensor = Alphabet::new(sensor_kernel.first().map_or(0, Categorical::len))?;
        check_rows("sensor kernel", &sensor_kernel, env.size(), sensor.size())?;
        for rows in &transition {
            check_rows("transition kernel", rows, env.size(), env.size())?;
        }
        Ok(EnvironmentSpec {
            env,
            sensor,
            action,
            initial,
            transition,
            sensor_kernel,
            reward_coordinate: None,
        })
    }

    pub fn with_reward_coordinate(mut self, coordinate: RewardCoordinate) -> Result<Self> {
        coordinate.validate(self.sensor)?;
        self.reward_coordinate = Some(coordinate);
        Ok(self)
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

    pub fn initial(&self) -> &Categorical {
        &self.initial
    }

    pub fn transition(&self, action: usize, env: usize) -> &Categorical {
        &self.transition[action][env]
    }

    pub fn sensor(&self, env: usize) -> &Categorical {
        &self.sensor_kernel[env]
    }

    pub fn reward_coordinate(&self) -> Option<&RewardCoordinate> {
        self.reward_coordinate.as_ref()
    }
}

pub(crate) fn check_rows(
    what: &'static str,
    rows: &[Categorical],
    expected_rows: usize,
    row_len: usize,
) -> Result<()> {
    if rows.len() != expected_rows {
        return Err(Error::ShapeMismatch {
            left: vec![expected_rows, row_len],
            right: vec![rows.len()],
        });
    }
    if let Some(bad) = rows.iter().find(|r| r.len() != row_len) {
        return Err(Error::Config(format!(
            "{what}: row of length {} where {row_len} expected",
            bad.len()
        )));
    }
    Ok(())
}

/// Draws `(e_0, s_0)`: initial state first, sensor second.
pub fn env_reset<R: Rng + ?Sized>(spec: &EnvironmentSpec, rng: &mut R) -> (usize, usize) {
    let e = spec.initial.sample(rng);
    let s = spec.sensor(e).sample(rng);
    (e, s)
}

/// One environment transition under action `a`; transition draw first,
/// sensor draw second.
pub fn env_step<R: Rng + ?Sized>(
    spec: &EnvironmentSpec,
    e: usize,
    a: usize,
    rng: &mut R,
) -> Result<(usize, usize)> {
    spec.env.check("environment state", e)?;
    spec.action.check("action", a)?;
    let next = spec.transition(a, e).sample(rng);
    let s = spec.sensor(next).sample(rng);
    Ok((next, s))
}

/// Perfect memory `sa_{≺t}`: the agent's only view of the world.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct History {
    pairs: Vec<(usize, usize)>,
}

impl History {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_pairs(pairs: Vec<(usize, usize)>) -> Self {
        History { pairs }
    }

    pub fn push(&mut self, sensor: usize, action: usize) {
        self.pairs.push((sensor, action));
    }

    pub fn pairs(&self) -> &[(usize, usize)] {
        &self.pairs
    }

    /// Current time step `t`.
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn sensors(&self) -> impl Iterator<Item = usize> + '_ {
        self.pairs.iter().map(|p| p.0)
    }

    pub fn actions(&self) -> impl Iterator<Item = usize> + '_ {
        self.pairs.iter().map(|p| p.1)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    pub env_state: usize,
    pub sensor: usize,
    pub action: usize,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub diagnostics: Diagnostics,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    pub steps: Vec<StepRecord>,
}

impl TrajectoryRecord {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    /// One JSON object per line.
    pub fn write_jsonl<W: Write>(&self, mut out: W) -> Result<()> {
        for step in &self.steps {
            serde_json::to_writer(&mut out, step)?;
            out.write_all(b"\n")
                .map_err(|e| Error::io("<trajectory>", e))?;
        }
        Ok(())
    }

    pub fn read_jsonl(text: &str) -> Result<Self> {
        let steps = text
            .lines()
            .filter(|l| !l.trim().is_empty())
            .map(serde_json::from_str)
            .collect::<std::result::Result<Vec<StepRecord>, _>>()?;
        Ok(TrajectoryRecord { steps })
    }
}

/// Independent per-purpose random streams derived from one root seed.
pub struct SeedStreams {
    pub environment: ChaCha8Rng,
    pub agent: ChaCha8Rng,
}

impl SeedStreams {
    pub fn new(seed: u64) -> Self {
        let mut environment = ChaCha8Rng::seed_from_u64(seed);
        environment.set_stream(0);
        let mut agent = ChaCha8Rng::seed_from_u64(seed);
        agent.set_stream(1);
        SeedStreams { environment, agent }
    }
}

/// Runs `steps` iterations of the loop.
///
/// The agent callback sees only the history and its own random stream; it
/// returns an action plus diagnostics to log.
pub fn run_loop<F>(
    spec: &EnvironmentSpec,
    mut agent: F,
    steps: usize,
    seeds: &mut SeedStreams,
) -> Result<TrajectoryRecord>
where
    F: FnMut(&History, &mut dyn RngCore) -> Result<(usize, Diagnostics)>,
{
    if steps == 0 {
        return Err(Error::InvalidParameter("steps must be at least 1".into()));
    }
    let mut history = History::new();
    let mut record = TrajectoryRecord::default();
    let mut env_state = None;
    for t in 0..steps {
        let (action, diagnostics) =
            agent(&history, &mut seeds.agent).map_err(|e| Error::Agent {
                step: t,
                source: Box::new(e),
            })?;
        spec.action
            .check("action", action)
            .map_err(|e| Error::Agent {
                step: t,
                source: Box::new(e),
            })?;
        let (e, s) = match env_state {
            None => env_reset(spec, &mut seeds.environment),
            Some(prev) => env_step(spec, prev, action, &mut seeds.environment)?,
        };
        env_state = Some(e);
        record.steps.push(StepRecord {
            step: t,
            env_state: e,
            sensor: s,
            action,
            diagnostics,
        });
        history.push(s, action);
    }
    Ok(record)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn identity_spec() -> EnvironmentSpec {
        let n = 2;
        let rows: Vec<Categorical> = (0..n)
            .map(|i| Categorical::point_mass(n, i).unwrap())
            .collect();
        EnvironmentSpec::new(
            Categorical::point_mass(n, 1).unwrap(),
            vec![rows.clone(), rows.clone()],
            rows,
        )
        .unwrap()
    }

    fn uniform_spec() -> EnvironmentSpec {
        let u = Categorical::uniform(2).unwrap();
        EnvironmentSpec::new(
            u.clone(),
            vec![vec![u.clone(), u.clone()]],
            vec![u.clone(), u],
        )
        .unwrap()
    }

    #[test]
    fn point_mass_step() {
        let spec = identity_spec();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(env_step(&spec, 1, 0, &mut rng).unwrap(), (1, 1));
        assert!(matches!(
            env_step(&spec, 2, 0, &mut rng),
            Err(Error::IndexOutOfAlphabet { .. })
        ));
        assert!(matches!(
            env_step(&spec, 0, 5, &mut rng),
            Err(Error::IndexOutOfAlphabet { .. })
        ));
    }

    #[test]
    fn seeded_step_replays() {
        let spec = uniform_spec();
        let a: Vec<_> = {
            let mut rng = ChaCha8Rng::seed_from_u64(42);
            (0..20)
                .map(|_| env_step(&spec, 0, 0, &mut rng).unwrap())
                .collect()
        };
        let b: Vec<_> = {
            let mut rng = ChaCha8Rng::seed_from_u64(42);
            (0..20)
                .map(|_| env_step(&spec, 0, 0, &mut rng).unwrap())
                .collect()
        };
        assert_eq!(a, b);
    }

    #[test]
    fn transition_frequencies_match_row() {
        let row = Categorical::new(vec![0.25, 0.75]).unwrap();
        let spec = EnvironmentSpec::new(
            row.clone(),
            vec![vec![row.clone(), row]],
            vec![
                Categorical::point_mass(2, 0).unwrap(),
                Categorical::point_mass(2, 0).unwrap(),
            ],
        )
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let n = 100_000;
        let ones = (0..n)
            .filter(|_| env_step(&spec, 0, 0, &mut rng).unwrap().0 == 1)
            .count();
        let freq = ones as f64 / n as f64;
        assert!((freq - 0.75).abs() < 0.01, "{freq}");
    }

    #[test]
    fn constant_agent_three_steps() {
        let spec = identity_spec();
        let mut seeds = SeedStreams::new(1);
        let traj = run_loop(&spec, |_, _| Ok((0, Diagnostics::new())), 3, &mut seeds).unwrap();
        assert_eq!(traj.len(), 3);
        for s in &traj.steps {
            assert_eq!((s.env_state, s.sensor, s.action), (1, 1, 0));
        }
    }

    #[test]
    fn history_length_equals_step() {
        let spec = uniform_spec();
        let mut seeds = SeedStreams::new(5);
        let mut calls = Vec::new();
        run_loop(
            &spec,
            |h, _| {
                calls.push(h.len());
                Ok((0, Diagnostics::new()))
            },
            4,
            &mut seeds,
        )
        .unwrap();
        assert_eq!(calls, vec![0, 1, 2, 3]);

        let mut count = 0;
        run_loop(
            &spec,
            |h, _| {
                assert!(h.is_empty());
                count += 1;
                Ok((0, Diagnostics::new()))
            },
            1,
            &mut SeedStreams::new(5),
        )
        .unwrap();
        assert_eq!(count, 1);
    }

    #[test]
    fn same_seed_same_trajectory() {
        let spec = uniform_spec();
        let agent = |_: &History, rng: &mut dyn RngCore| {
            let mut d = Diagnostics::new();
            let x = rng.next_u32();
            d.insert("draw".into(), x.into());
            Ok((0, d))
        };
        let a = run_loop(&spec, agent, 10, &mut SeedStreams::new(9)).unwrap();
        let b = run_loop(&spec, agent, 10, &mut SeedStreams::new(9)).unwrap();
        assert_eq!(a, b);
        let mut buf = Vec::new();
        a.write_jsonl(&mut buf).unwrap();
        let back = TrajectoryRecord::read_jsonl(std::str::from_utf8(&buf).unwrap()).unwrap();
        assert_eq!(back, a);
    }

    #[test]
    fn agent_stream_does_not_perturb_environment() {
        let spec = uniform_spec();
        let quiet = run_loop(
            &spec,
            |_, _| Ok((0, Diagnostics::new())),
            8,
            &mut SeedStreams::new(3),
        )
        .unwrap();
        let noisy = run_loop(
            &spec,
            |_, rng| {
                rng.next_u64();
                rng.next_u64();
                Ok((0, Diagnostics::new()))
            },
            8,
            &mut SeedStreams::new(3),
        )
        .unwrap();
        let envs = |t: &TrajectoryRecord| {
            t.steps
                .iter()
                .map(|s| (s.env_state, s.sensor))
                .collect::<Vec<_>>()
        };
        assert_eq!(envs(&quiet), envs(&noisy));
    }

    #[test]
    fn agent_errors_carry_step() {
        let spec = uniform_spec();
        let err = run_loop(
            &spec,
            |h, _| {
                if h.len() == 2 {
                    Err(Error::EmptyInput)
                } else {
                    Ok((0, Diagnostics::new()))
                }
            },
            5,
            &mut SeedStreams::new(0),
        )
        .unwrap_err();
        assert!(matches!(err, Error::Agent { step: 2, .. }));
    }

    #[test]
    fn reward_coordinate_decodes_factor() {
        let rc = RewardCoordinate {
            factor_sizes: vec![3, 2],
            reward_factor: 1,
            reward_values: vec![0.0, 1.0],
        };
        rc.validate(Alphabet::new(6).unwrap()).unwrap();
        assert_eq!(rc.symbol_rewards(), vec![0.0, 1.0, 0.0, 1.0, 0.0, 1.0]);
        assert!(rc.validate(Alphabet::new(4).unwrap()).is_err());
    }
}
