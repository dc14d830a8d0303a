//! Brute-force reference computations, written against the raw θ-point
//! kernels in probability space. Deliberately shares nothing with the
//! crate's log-kernel caches, layouts or enumeration helpers.

#![allow(dead_code)]

use actinf::model::Horizon;
use actinf::variational::MeanFieldBlock;
use actinf::{GenerativeModelSpec, History};

/// Every free assignment `[θ, e_0..e_T, s_t..s_T]` with its joint probability
/// `q(s_{<t}, x | actions)`, in row-major order (last index fastest).
pub struct Enumeration {
    pub t: usize,
    pub final_step: usize,
    pub cells: Vec<(Vec<usize>, f64)>,
}

impl Enumeration {
    pub fn evidence(&self) -> f64 {
        self.cells.iter().map(|c| c.1).sum()
    }

    pub fn log_evidence(&self) -> f64 {
        self.evidence().ln()
    }

    /// Posterior probability of every cell.
    pub fn posterior(&self) -> Vec<f64> {
        let z = self.evidence();
        self.cells.iter().map(|c| c.1 / z).collect()
    }
}

pub fn final_step(spec: &GenerativeModelSpec, t: usize) -> usize {
    match spec.horizon() {
        Horizon::Fixed { final_step } => final_step,
        Horizon::Rolling { lookahead } => t + lookahead,
    }
}

pub fn enumerate(spec: &GenerativeModelSpec, history: &History, future: &[usize]) -> Enumeration {
    let t = history.len();
    let big_t = final_step(spec, t);
    assert_eq!(future.len(), big_t - t + 1);
    let n_theta = spec.theta().len();
    let n_env = spec.env_alphabet().size();
    let n_sensor = spec.sensor_alphabet().size();
    let past: Vec<(usize, usize)> = history.pairs().to_vec();
    let action = |tau: usize| {
        if tau < t {
            past[tau].1
        } else {
            future[tau - t]
        }
    };

    let mut dims = vec![n_theta];
    dims.extend(std::iter::repeat_n(n_env, big_t + 1));
    dims.extend(std::iter::repeat_n(n_sensor, big_t - t + 1));

    let mut cells = Vec::new();
    let mut idx = vec![0usize; dims.len()];
    loop {
        let th = idx[0];
        let e = &idx[1..big_t + 2];
        let s_free = &idx[big_t + 2..];
        let point = &spec.theta().points()[th];
        let mut p = spec.theta().prior().probs()[th] * point.initial.probs()[e[0]];
        for tau in 1..=big_t {
            p *= point.transition[action(tau)][e[tau - 1]].probs()[e[tau]];
        }
        for tau in 0..=big_t {
            let s = if tau < t {
                past[tau].0
            } else {
                s_free[tau - t]
            };
            p *= point.sensor[e[tau]].probs()[s];
        }
        cells.push((idx.clone(), p));

        // odometer, last position fastest
        let mut pos = dims.len();
        loop {
            if pos == 0 {
                return Enumeration {
                    t,
                    final_step: big_t,
                    cells,
                };
            }
            pos -= 1;
            idx[pos] += 1;
            if idx[pos] < dims[pos] {
                break;
            }
            idx[pos] = 0;
        }
    }
}

/// Lexicographic list of all action sequences of a given length.
pub fn all_sequences(n_action: usize, len: usize) -> Vec<Vec<usize>> {
    let mut out = vec![vec![]];
    for _ in 0..len {
        out = out
            .into_iter()
            .flat_map(|prefix| {
                (0..n_action).map(move |a| {
                    let mut p = prefix.clone();
                    p.push(a);
                    p
                })
            })
            .collect();
    }
    out
}

/// `r(x)` of a mean-field block at one assignment `[θ, e.., s..]`.
pub fn block_prob(block: &MeanFieldBlock, idx: &[usize]) -> f64 {
    let n_e = block.env.len();
    let mut p = block.theta.probs()[idx[0]];
    for (k, f) in block.env.iter().enumerate() {
        p *= f.probs()[idx[1 + k]];
    }
    for (k, f) in block.sensors.iter().enumerate() {
        p *= f.probs()[idx[1 + n_e + k]];
    }
    p
}

/// `Σ_x r(x) ln[r(x) / q(s_{<t}, x)]`; +inf if `r` covers a model zero.
pub fn free_energy(en: &Enumeration, block: &MeanFieldBlock) -> f64 {
    let mut f = 0.0;
    for (idx, q) in &en.cells {
        let r = block_prob(block, idx);
        if r > 0.0 {
            if *q == 0.0 {
                return f64::INFINITY;
            }
            f += r * (r.ln() - q.ln());
        }
    }
    f
}

/// `KL(r || exact posterior)`.
pub fn kl_block_to_posterior(en: &Enumeration, block: &MeanFieldBlock) -> f64 {
    let z = en.evidence();
    let mut kl = 0.0;
    for (idx, q) in &en.cells {
        let r = block_prob(block, idx);
        if r > 0.0 {
            kl += r * (r.ln() - (q / z).ln());
        }
    }
    kl
}

/// Expected undiscounted reward of the free sensors under a mean-field block.
pub fn mean_field_expected_reward(block: &MeanFieldBlock, rewards: &[f64]) -> f64 {
    block
        .sensors
        .iter()
        .map(|f| {
            f.probs()
                .iter()
                .zip(rewards)
                .map(|(p, r)| p * r)
                .sum::<f64>()
        })
        .sum()
}

/// Expected undiscounted reward of the free sensors under the exact posterior.
pub fn posterior_expected_reward(en: &Enumeration, rewards: &[f64]) -> f64 {
    let z = en.evidence();
    let n_free_env = en.final_step + 1;
    en.cells
        .iter()
        .map(|(idx, q)| {
            q / z
                * idx[1 + n_free_env..]
                    .iter()
                    .map(|&s| rewards[s])
                    .sum::<f64>()
        })
        .sum()
}

/// `exp(γ v_k) / Σ_j exp(γ v_j)`, by direct max-shifted exponentiation.
pub fn softmax(values: &[f64], gamma: f64) -> Vec<f64> {
    let m = values
        .iter()
        .map(|v| gamma * v)
        .fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = values.iter().map(|v| (gamma * v - m).exp()).collect();
    let z: f64 = w.iter().sum();
    w.iter().map(|x| x / z).collect()
}
