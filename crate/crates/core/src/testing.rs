//! Random and canonical instances for tests, benchmarks and studies.

use rand::Rng;

use crate::model::{FreeLayout, GenerativeModelSpec, Horizon, ThetaPoint, ThetaSupport};
use crate::pa_loop::{EnvironmentSpec, History};
use crate::prob::{Alphabet, Categorical};
use crate::variational::MeanFieldBlock;

/// Strictly positive random probability vector.
pub fn random_categorical<R: Rng + ?Sized>(rng: &mut R, n: usize) -> Categorical {
    let w: Vec<f64> = (0..n).map(|_| rng.gen_range(0.05..1.0)).collect();
    Categorical::from_weights(w).expect("positive weights")
}

pub fn random_theta_point<R: Rng + ?Sized>(
    rng: &mut R,
    n_env: usize,
    n_sensor: usize,
    n_action: usize,
) -> ThetaPoint {
    ThetaPoint {
        sensor: (0..n_env)
            .map(|_| random_categorical(rng, n_sensor))
            .collect(),
        transition: (0..n_action)
            .map(|_| (0..n_env).map(|_| random_categorical(rng, n_env)).collect())
            .collect(),
        initial: random_categorical(rng, n_env),
    }
}

/// Model with strictly positive random kernels and a random θ prior.
pub fn random_spec<R: Rng + ?Sized>(
    rng: &mut R,
    n_env: usize,
    n_sensor: usize,
    n_action: usize,
    n_theta: usize,
    horizon: Horizon,
) -> GenerativeModelSpec {
    let points = (0..n_theta)
        .map(|_| random_theta_point(rng, n_env, n_sensor, n_action))
        .collect();
    let prior = random_categorical(rng, n_theta);
    GenerativeModelSpec::new(
        Alphabet::new(n_env).unwrap(),
        Alphabet::new(n_sensor).unwrap(),
        Alphabet::new(n_action).unwrap(),
        ThetaSupport::new(points, prior).unwrap(),
        horizon,
    )
    .unwrap()
}

/// Model whose active posterior factorises over every free variable once
/// at least one sensor value has been observed: a single θ point, and each
/// action sends the latent state to a fixed action-dependent state. Only
/// `ê_0` stays uncertain, and for `t ≥ 1` its sensor child is clamped.
pub fn factorizing_spec<R: Rng + ?Sized>(
    rng: &mut R,
    n_env: usize,
    n_sensor: usize,
    n_action: usize,
    horizon: Horizon,
) -> GenerativeModelSpec {
    let targets: Vec<usize> = (0..n_action).map(|_| rng.gen_range(0..n_env)).collect();
    let point = ThetaPoint {
        sensor: (0..n_env)
            .map(|_| random_categorical(rng, n_sensor))
            .collect(),
        transition: targets
            .iter()
            .map(|&e| vec![Categorical::point_mass(n_env, e).unwrap(); n_env])
            .collect(),
        initial: random_categorical(rng, n_env),
    };
    GenerativeModelSpec::new(
        Alphabet::new(n_env).unwrap(),
        Alphabet::new(n_sensor).unwrap(),
        Alphabet::new(n_action).unwrap(),
        ThetaSupport::single(point),
        horizon,
    )
    .unwrap()
}

/// Model with positive kernels whose active posterior factorises at every
/// `t`: sensors are independent of the latent state and transitions ignore
/// the previous state.
pub fn independent_spec<R: Rng + ?Sized>(
    rng: &mut R,
    n_env: usize,
    n_sensor: usize,
    n_action: usize,
    horizon: Horizon,
) -> GenerativeModelSpec {
    let sensor_row = random_categorical(rng, n_sensor);
    let point = ThetaPoint {
        sensor: vec![sensor_row; n_env],
        transition: (0..n_action)
            .map(|_| vec![random_categorical(rng, n_env); n_env])
            .collect(),
        initial: random_categorical(rng, n_env),
    };
    GenerativeModelSpec::new(
        Alphabet::new(n_env).unwrap(),
        Alphabet::new(n_sensor).unwrap(),
        Alphabet::new(n_action).unwrap(),
        ThetaSupport::single(point),
        horizon,
    )
    .unwrap()
}

pub fn random_history<R: Rng + ?Sized>(
    rng: &mut R,
    n_sensor: usize,
    n_action: usize,
    t: usize,
) -> History {
    History::from_pairs(
        (0..t)
            .map(|_| (rng.gen_range(0..n_sensor), rng.gen_range(0..n_action)))
            .collect(),
    )
}

/// Strictly positive random mean-field block for a layout.
pub fn random_block<R: Rng + ?Sized>(rng: &mut R, layout: &FreeLayout) -> MeanFieldBlock {
    MeanFieldBlock {
        theta: random_categorical(rng, layout.n_theta),
        env: (0..layout.env_len())
            .map(|_| random_categorical(rng, layout.n_env))
            .collect(),
        sensors: (0..layout.horizon_len())
            .map(|_| random_categorical(rng, layout.n_sensor))
            .collect(),
    }
}

/// Two-action deterministic bandit: action `a` moves the world to state `a`,
/// state 0 emits sensor 1 and state 1 emits sensor 0. With rewards (0, 1)
/// per sensor symbol, action 0 is the rewarding one.
pub fn bandit_environment() -> EnvironmentSpec {
    let to = |e: usize| Categorical::point_mass(2, e).unwrap();
    EnvironmentSpec::new(
        Categorical::uniform(2).unwrap(),
        vec![vec![to(0), to(0)], vec![to(1), to(1)]],
        vec![to(1), to(0)],
    )
    .unwrap()
}

/// The bandit's dynamics as a single-point generative model.
pub fn bandit_model(horizon: Horizon) -> GenerativeModelSpec {
    let to = |e: usize| Categorical::point_mass(2, e).unwrap();
    let point = ThetaPoint {
        sensor: vec![to(1), to(0)],
        transition: vec![vec![to(0), to(0)], vec![to(1), to(1)]],
        initial: Categorical::uniform(2).unwrap(),
    };
    let two = Alphabet::new(2).unwrap();
    GenerativeModelSpec::new(two, two, two, ThetaSupport::single(point), horizon).unwrap()
}

/// Reward per bandit sensor symbol.
pub const BANDIT_REWARDS: [f64; 2] = [0.0, 1.0];
