//! Joint inference and action selection.
//!
//! The objective over `(φ, ρ)` is
//!
//! ```text
//! D1 + D2 = Σ_â s(â|ρ) F[â, φ]  +  KL[s(·|ρ) || r(·|φ)]
//! ```
//!
//! where `r(·|φ)` is the policy induced by the variational posterior. It
//! equals the single joint expression
//!
//! ```text
//! Σ_{â,x} s(â) r(x|â) log[ s(â) r(x|â) / (q(s_{≺t}, x | â, a_{≺t}) r(â|φ)) ]
//! ```
//!
//! which is evaluated separately cell by cell and checked against the sum.
//! For fixed `φ` the minimiser over `s` is `s*(â) ∝ r(â|φ) exp(-F[â, φ])`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ActionSeq, GenerativeModelSpec};
use crate::motivation::MotivationFunctional;
use crate::pa_loop::History;
use crate::policy::{motivation_values, PolicyDistribution, Provenance};
use crate::prob::{log_sum_exp, softmax, Categorical};
use crate::variational::{
    free_energy, refine_block, restart_if_stuck, VariationalOptions, VariationalParams,
};

const IDENTITY_TOLERANCE: f64 = 1e-9;

/// ρ, the parameters of the third policy `s(·|ρ)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ThirdPolicyParams {
    Direct(PolicyDistribution),
    /// Unnormalised scores mapped through a unit-temperature softmax.
    Logits(Vec<f64>),
}

impl ThirdPolicyParams {
    pub fn policy(&self, action_sequences: &[ActionSeq]) -> Result<PolicyDistribution> {
        let policy = match self {
            ThirdPolicyParams::Direct(p) => PolicyDistribution {
                provenance: Provenance::ThirdPolicy,
                ..p.clone()
            },
            ThirdPolicyParams::Logits(logits) => PolicyDistribution::new(
                action_sequences.to_vec(),
                softmax(logits, 1.0)?,
                Provenance::ThirdPolicy,
            )?,
        };
        if policy.action_sequences != action_sequences {
            return Err(Error::ShapeMismatch {
                left: vec![action_sequences.len()],
                right: vec![policy.len()],
            });
        }
        Ok(policy)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveBreakdown {
    /// `Σ_â s(â) F[â, φ]`
    pub d1: f64,
    /// `KL[s || r-induced]`
    pub d2: f64,
    pub total: f64,
    /// The rewritten single-sum form; `None` beyond the enumeration cap.
    pub joint_form: Option<f64>,
    pub free_energies: Vec<f64>,
    pub motivation: Vec<f64>,
    pub third: PolicyDistribution,
    pub induced: PolicyDistribution,
}

fn log_softmax(values: &[f64], gamma: f64) -> Result<Vec<f64>> {
    let scaled: Vec<f64> = values.iter().map(|v| gamma * v).collect();
    let lse = log_sum_exp(&scaled)?;
    Ok(scaled.iter().map(|v| v - lse).collect())
}

fn per_sequence_free_energy(
    spec: &GenerativeModelSpec,
    history: &History,
    phi: &VariationalParams,
) -> Result<Vec<f64>> {
    phi.action_sequences
        .iter()
        .zip(&phi.blocks)
        .map(|(seq, block)| {
            free_energy(spec, history, seq, block).map_err(|e| Error::Block {
                action_seq: seq.to_string(),
                source: Box::new(e),
            })
        })
        .collect()
}

fn joint_form(
    spec: &GenerativeModelSpec,
    history: &History,
    phi: &VariationalParams,
    s: &PolicyDistribution,
    log_induced: &[f64],
) -> Result<Option<f64>> {
    let layout = phi.layout;
    if layout.size() > spec.enum_cap() {
        return Ok(None);
    }
    let mut env = vec![0; layout.env_len()];
    let mut sensors = vec![0; layout.horizon_len()];
    let mut total = 0.0;
    for (k, (seq, block)) in phi.action_sequences.iter().zip(&phi.blocks).enumerate() {
        let sk = s.prob(k);
        if sk == 0.0 {
            continue;
        }
        let cond = spec.conditioned(history, seq)?;
        for flat in 0..layout.size() as usize {
            let th = layout.decode(flat, &mut env, &mut sensors);
            let r = block.prob(th, &env, &sensors);
            if r == 0.0 {
                continue;
            }
            let lq = cond.log_joint(th, &env, &sensors);
            if lq == f64::NEG_INFINITY {
                return Err(Error::ModelZero {
                    action_seq: seq.to_string(),
                });
            }
            let joint = sk * r;
            total += joint * (joint.ln() - lq - log_induced[k]);
        }
    }
    Ok(Some(total))
}

/// Evaluates `D1`, `D2` and the rewritten joint form for given `(φ, ρ)`.
pub fn combined_objective(
    spec: &GenerativeModelSpec,
    history: &History,
    phi: &VariationalParams,
    rho: &ThirdPolicyParams,
    m: &dyn MotivationFunctional,
    gamma: f64,
) -> Result<ObjectiveBreakdown> {
    let free_energies = per_sequence_free_energy(spec, history, phi)?;
    let motivation = motivation_values(phi, m)?;
    let log_induced = log_softmax(&motivation, gamma)?;
    let induced = PolicyDistribution::new(
        phi.action_sequences.clone(),
        softmax(&motivation, gamma)?,
        Provenance::VariationalInduced,
    )?;
    let third = rho.policy(&phi.action_sequences)?;

    let d1: f64 = third
        .probs
        .probs()
        .iter()
        .zip(&free_energies)
        .filter(|(&p, _)| p > 0.0)
        .map(|(p, f)| p * f)
        .sum();
    let d2 = third.kl_to(&induced)?;
    let total = d1 + d2;
    let joint_form = joint_form(spec, history, phi, &third, &log_induced)?;
    if let Some(j) = joint_form {
        if (j - total).abs() > IDENTITY_TOLERANCE * total.abs().max(1.0) {
            return Err(Error::IdentityViolation {
                what: "joint form vs D1 + D2",
                lhs: j,
                rhs: total,
            });
        }
    }
    Ok(ObjectiveBreakdown {
        d1,
        d2,
        total,
        joint_form,
        free_energies,
        motivation,
        third,
        induced,
    })
}

/// `s*(â) ∝ exp(γ 𝔐_â - F_â)`, normalised in log space.
pub fn third_policy_closed_form(
    action_sequences: Vec<ActionSeq>,
    motivation: &[f64],
    free_energies: &[f64],
    gamma: f64,
) -> Result<PolicyDistribution> {
    if motivation.len() != free_energies.len() || motivation.len() != action_sequences.len() {
        return Err(Error::ShapeMismatch {
            left: vec![action_sequences.len()],
            right: vec![motivation.len(), free_energies.len()],
        });
    }
    let log_weights: Vec<f64> = motivation
        .iter()
        .zip(free_energies)
        .map(|(v, f)| gamma * v - f)
        .collect();
    if log_weights.iter().any(|w| w.is_nan()) {
        return Err(Error::NonFiniteInput);
    }
    let probs = Categorical::from_log_weights(&log_weights)?;
    PolicyDistribution::new(action_sequences, probs, Provenance::ThirdPolicy)
}

/// Minimiser of `D1 + D2` over the third policy for fixed `φ`.
pub fn optimal_third_policy(
    phi: &VariationalParams,
    free_energies: &[f64],
    m: &dyn MotivationFunctional,
    gamma: f64,
) -> Result<PolicyDistribution> {
    let motivation = motivation_values(phi, m)?;
    third_policy_closed_form(
        phi.action_sequences.clone(),
        &motivation,
        free_energies,
        gamma,
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActiveInferenceOptions {
    pub variational: VariationalOptions,
    /// CAVI sweeps per block in each outer iteration.
    pub sweeps: usize,
    /// Stop once the total objective decreases by less than this.
    pub outer_tol: f64,
    pub max_outer: usize,
}

impl Default for ActiveInferenceOptions {
    fn default() -> Self {
        ActiveInferenceOptions {
            variational: VariationalOptions::default(),
            sweeps: 1,
            outer_tol: 1e-8,
            max_outer: 50,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepOutcome {
    pub phi: VariationalParams,
    pub rho: PolicyDistribution,
    pub trace: Vec<ObjectiveBreakdown>,
    pub action_seq: ActionSeq,
    /// First action of the sampled sequence, the one executed now.
    pub action: usize,
}

impl StepOutcome {
    pub fn last(&self) -> &ObjectiveBreakdown {
        self.trace.last().expect("at least one outer iteration")
    }
}

/// Alternates CAVI sweeps on every block with the exact third-policy update,
/// then samples a sequence from `s(·|ρ*)` and returns its first action.
pub fn active_inference_step<R: Rng + ?Sized>(
    spec: &GenerativeModelSpec,
    history: &History,
    m: &dyn MotivationFunctional,
    gamma: f64,
    opts: &ActiveInferenceOptions,
    rng: &mut R,
) -> Result<StepOutcome> {
    if opts.max_outer == 0 {
        return Err(Error::InvalidParameter(
            "max_outer must be at least 1".into(),
        ));
    }
    if opts.variational.tol.is_nan() || opts.variational.tol <= 0.0 {
        return Err(Error::InvalidParameter("tol must be positive".into()));
    }
    let mut phi = VariationalParams::initial(spec, history, opts.variational.init)?;
    let mut trace: Vec<ObjectiveBreakdown> = Vec::new();
    let mut rho = None;
    for _ in 0..opts.max_outer {
        for (seq, block) in phi.action_sequences.iter().zip(phi.blocks.iter_mut()) {
            refine_block(spec, history, seq, block, &opts.variational, opts.sweeps)
                .and_then(|_| restart_if_stuck(spec, history, seq, block, &opts.variational))
                .map_err(|e| Error::Block {
                    action_seq: seq.to_string(),
                    source: Box::new(e),
                })?;
        }
        let free_energies = per_sequence_free_energy(spec, history, &phi)?;
        let s = optimal_third_policy(&phi, &free_energies, m, gamma)?;
        let breakdown = combined_objective(
            spec,
            history,
            &phi,
            &ThirdPolicyParams::Direct(s.clone()),
            m,
            gamma,
        )?;
        let previous = trace.last().map(|b| b.total);
        let current = breakdown.total;
        trace.push(breakdown);
        rho = Some(s);
        if let Some(prev) = previous {
            if prev - current < opts.outer_tol {
                break;
            }
        }
    }
    let rho = rho.expect("max_outer >= 1");
    let action_seq = rho.sample(rng).clone();
    let action = action_seq
        .first()
        .ok_or_else(|| Error::InvalidParameter("empty action sequence".into()))?;
    Ok(StepOutcome {
        phi,
        rho,
        trace,
        action_seq,
        action,
    })
}
