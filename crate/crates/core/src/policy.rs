//! Softmax action selection over future action sequences.

use std::borrow::Cow;
use std::fmt;
use std::io::Write;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exact::ActivePosteriorTable;
use crate::model::{ActionSeq, FreeLayout};
use crate::motivation::{MotivationFunctional, PosteriorView};
use crate::prob::{kl_divergence, softmax, Categorical, JointTable};
use crate::variational::VariationalParams;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Provenance {
    ExactInduced,
    VariationalInduced,
    ThirdPolicy,
}

impl fmt::Display for Provenance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Provenance::ExactInduced => "exact-induced",
            Provenance::VariationalInduced => "variational-induced",
            Provenance::ThirdPolicy => "third-policy",
        })
    }
}

/// Distribution over future action sequences in lexicographic order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyDistribution {
    pub action_sequences: Vec<ActionSeq>,
    pub probs: Categorical,
    pub provenance: Provenance,
}

impl PolicyDistribution {
    pub fn new(
        action_sequences: Vec<ActionSeq>,
        probs: Categorical,
        provenance: Provenance,
    ) -> Result<Self> {
        if action_sequences.len() != probs.len() {
            return Err(Error::ShapeMismatch {
                left: vec![action_sequences.len()],
                right: vec![probs.len()],
            });
        }
        Ok(PolicyDistribution {
            action_sequences,
            probs,
            provenance,
        })
    }

    pub fn len(&self) -> usize {
        self.action_sequences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.action_sequences.is_empty()
    }

    pub fn prob(&self, index: usize) -> f64 {
        self.probs.get(index)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> &ActionSeq {
        &self.action_sequences[self.probs.sample(rng)]
    }

    /// Total mass on sequences whose first action is `action`.
    pub fn first_action_mass(&self, action: usize) -> f64 {
        self.action_sequences
            .iter()
            .zip(self.probs.probs())
            .filter(|(s, _)| s.first() == Some(action))
            .map(|(_, p)| p)
            .sum()
    }

    pub fn kl_to(&self, other: &PolicyDistribution) -> Result<f64> {
        if self.action_sequences != other.action_sequences {
            return Err(Error::ShapeMismatch {
                left: vec![self.len()],
                right: vec![other.len()],
            });
        }
        kl_divergence(&self.probs, &other.probs)
    }
}

/// Anything holding one posterior table per future action sequence.
pub trait PosteriorSource {
    fn layout(&self) -> &FreeLayout;
    fn action_sequences(&self) -> &[ActionSeq];
    fn table(&self, index: usize) -> Result<Cow<'_, JointTable>>;
    fn provenance(&self) -> Provenance;
}

impl PosteriorSource for ActivePosteriorTable {
    fn layout(&self) -> &FreeLayout {
        &self.layout
    }

    fn action_sequences(&self) -> &[ActionSeq] {
        &self.action_sequences
    }

    fn table(&self, index: usize) -> Result<Cow<'_, JointTable>> {
        Ok(Cow::Borrowed(&self.tables[index]))
    }

    fn provenance(&self) -> Provenance {
        Provenance::ExactInduced
    }
}

impl PosteriorSource for VariationalParams {
    fn layout(&self) -> &FreeLayout {
        &self.layout
    }

    fn action_sequences(&self) -> &[ActionSeq] {
        &self.action_sequences
    }

    fn table(&self, index: usize) -> Result<Cow<'_, JointTable>> {
        Ok(Cow::Owned(self.blocks[index].to_table(&self.layout)?))
    }

    fn provenance(&self) -> Provenance {
        Provenance::VariationalInduced
    }
}

/// `𝔐(posterior_â, â)` for every sequence; errors carry the sequence label.
pub fn motivation_values<P: PosteriorSource + ?Sized>(
    posterior: &P,
    m: &dyn MotivationFunctional,
) -> Result<Vec<f64>> {
    let layout = posterior.layout();
    posterior
        .action_sequences()
        .iter()
        .enumerate()
        .map(|(i, seq)| {
            let label = |e: Error| Error::Block {
                action_seq: seq.to_string(),
                source: Box::new(e),
            };
            let table = posterior.table(i).map_err(label)?;
            let view = PosteriorView::new(layout, &table).map_err(label)?;
            let v = m.evaluate(view, seq).map_err(label)?;
            if !v.is_finite() {
                return Err(label(Error::NonFiniteInput));
            }
            Ok(v)
        })
        .collect()
}

/// Softmax of precomputed motivation values.
pub fn policy_from_values(
    action_sequences: Vec<ActionSeq>,
    values: &[f64],
    gamma: f64,
    provenance: Provenance,
) -> Result<PolicyDistribution> {
    PolicyDistribution::new(action_sequences, softmax(values, gamma)?, provenance)
}

/// Induced policy `σ_γ^𝔐[posterior](â) ∝ exp(γ 𝔐(posterior_â, â))`.
pub fn induce_policy<P: PosteriorSource + ?Sized>(
    posterior: &P,
    m: &dyn MotivationFunctional,
    gamma: f64,
) -> Result<PolicyDistribution> {
    let values = motivation_values(posterior, m)?;
    policy_from_values(
        posterior.action_sequences().to_vec(),
        &values,
        gamma,
        posterior.provenance(),
    )
}

/// Most probable sequence; ties go to the lexicographically smallest.
pub fn greedy_action_sequence(policy: &PolicyDistribution) -> &ActionSeq {
    &policy.action_sequences[policy.probs.argmax()]
}

/// Writes `(action_seq, probability, provenance)` rows.
pub fn write_policy_csv<W: Write>(out: W, policies: &[PolicyDistribution]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["action_seq", "probability", "provenance"])?;
    for policy in policies {
        for (seq, p) in policy.action_sequences.iter().zip(policy.probs.probs()) {
            w.write_record([
                seq.to_string(),
                format!("{p:.16e}"),
                policy.provenance.to_string(),
            ])?;
        }
    }
    w.flush().map_err(|e| Error::io("<policy csv>", e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exact::exact_active_posterior;
    use crate::model::{enumerate_action_sequences, Horizon};
    use crate::motivation::ExpectedReward;
    use crate::motivation::RewardStructure;
    use crate::pa_loop::History;
    use crate::testing::{random_history, random_spec};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Returns a preset value per action sequence (lexicographic index).
    struct Preset(Vec<f64>, usize);

    impl MotivationFunctional for Preset {
        fn name(&self) -> &str {
            "preset"
        }

        fn evaluate(&self, _p: PosteriorView<'_>, seq: &ActionSeq) -> Result<f64> {
            let idx = seq.actions().iter().fold(0, |acc, &a| acc * self.1 + a);
            Ok(self.0[idx])
        }
    }

    fn posterior(seed: u64) -> ActivePosteriorTable {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let spec = random_spec(&mut rng, 2, 2, 2, 1, Horizon::Rolling { lookahead: 1 });
        let h = random_history(&mut rng, 2, 2, 1);
        exact_active_posterior(&spec, &h).unwrap()
    }

    #[test]
    fn gamma_zero_and_constant_values_are_uniform() {
        let post = posterior(1);
        let m = ExpectedReward {
            rewards: RewardStructure::new(vec![0.0, 3.0]).unwrap(),
        };
        let p = induce_policy(&post, &m, 0.0).unwrap();
        assert!(p.probs.probs().iter().all(|&x| x == 0.25));
        assert_eq!(p.provenance, Provenance::ExactInduced);
        let flat = Preset(vec![2.5; 4], 2);
        let p = induce_policy(&post, &flat, 7.0).unwrap();
        assert!(p.probs.probs().iter().all(|&x| (x - 0.25).abs() < 1e-15));
    }

    #[test]
    fn two_sequences_ln3() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let spec = random_spec(&mut rng, 2, 2, 2, 1, Horizon::Rolling { lookahead: 0 });
        let post = exact_active_posterior(&spec, &History::from_pairs(vec![(0, 0)])).unwrap();
        let p = induce_policy(&post, &Preset(vec![1.0, 0.0], 2), 3f64.ln()).unwrap();
        assert!((p.prob(0) - 0.75).abs() < 1e-15);
        assert!((p.prob(1) - 0.25).abs() < 1e-15);
        assert_eq!(greedy_action_sequence(&p).actions(), &[0]);
    }

    #[test]
    fn greedy_breaks_ties_lexicographically() {
        let seqs = enumerate_action_sequences(2, 1);
        let p = policy_from_values(seqs, &[0.0, 0.0], 1.0, Provenance::ThirdPolicy).unwrap();
        assert_eq!(greedy_action_sequence(&p).actions(), &[0]);
    }

    #[test]
    fn large_gamma_concentrates_on_raw_argmax() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let post = posterior(2);
        for _ in 0..50 {
            let values: Vec<f64> = (0..4).map(|_| rng.gen_range(-5.0..5.0)).collect();
            let p = induce_policy(&post, &Preset(values.clone(), 2), 1e4).unwrap();
            let raw = (0..4).fold(0, |b, i| if values[i] > values[b] { i } else { b });
            assert_eq!(greedy_action_sequence(&p), &post.action_sequences[raw]);
        }
    }

    #[test]
    fn variational_source_is_tagged() {
        use crate::variational::{optimize_all, VariationalOptions};
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let spec = random_spec(&mut rng, 2, 2, 2, 1, Horizon::Rolling { lookahead: 1 });
        let opt = optimize_all(&spec, &History::new(), &VariationalOptions::default()).unwrap();
        let m = ExpectedReward {
            rewards: RewardStructure::new(vec![0.0, 1.0]).unwrap(),
        };
        let p = induce_policy(&opt.params, &m, 1.0).unwrap();
        assert_eq!(p.provenance, Provenance::VariationalInduced);
        assert_eq!(p.len(), 4);
    }

    #[test]
    fn motivation_errors_are_labelled() {
        let post = posterior(3);
        let m = ExpectedReward {
            rewards: RewardStructure::new(vec![0.0, 1.0, 2.0]).unwrap(),
        };
        let err = induce_policy(&post, &m, 1.0).unwrap_err();
        assert!(err.to_string().starts_with("action sequence 0:0"), "{err}");
    }

    #[test]
    fn csv_rows() {
        let seqs = enumerate_action_sequences(2, 1);
        let p = policy_from_values(seqs, &[1.0, 0.0], 1.0, Provenance::ExactInduced).unwrap();
        let mut buf = Vec::new();
        write_policy_csv(&mut buf, &[p]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 3);
        assert!(text.contains(",exact-induced"));
    }
}
