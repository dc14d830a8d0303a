//! Exact active posterior by full enumeration of the free variables.
//!
//! This is the ground truth the variational machinery is checked against.
//! It is gated by the model's enumeration cap.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ActionSeq, FreeLayout, GenerativeModelSpec};
use crate::pa_loop::History;
use crate::prob::{log_sum_exp, JointTable};

/// `q(ŝ_{t:T̂}, ê_{0:T̂}, θ | â_{t:T̂}, sa_{≺t})` for every future action
/// sequence, in lexicographic order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActivePosteriorTable {
    pub layout: FreeLayout,
    pub action_sequences: Vec<ActionSeq>,
    pub tables: Vec<JointTable>,
    /// `log q(s_{≺t} | â_{t:T̂}, a_{≺t})` per sequence.
    pub log_evidence: Vec<f64>,
}

impl ActivePosteriorTable {
    pub fn len(&self) -> usize {
        self.tables.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tables.is_empty()
    }

    /// Posterior θ-marginal for one action sequence.
    pub fn theta_marginal(&self, index: usize) -> Result<JointTable> {
        self.tables[index].marginal(&[self.layout.theta_axis()])
    }
}

fn posterior_for(
    spec: &GenerativeModelSpec,
    history: &History,
    action_seq: &ActionSeq,
) -> Result<(JointTable, f64)> {
    let cond = spec.conditioned(history, action_seq)?;
    let logs = cond.log_joint_table();
    let lse = log_sum_exp(&logs)?;
    if lse == f64::NEG_INFINITY {
        return Err(Error::ZeroEvidence {
            action_seq: action_seq.to_string(),
        });
    }
    let values: Vec<f64> = logs.iter().map(|l| (l - lse).exp()).collect();
    let table = JointTable::normalized(cond.layout().dims(), values)?;
    Ok((table, lse))
}

pub fn exact_active_posterior(
    spec: &GenerativeModelSpec,
    history: &History,
) -> Result<ActivePosteriorTable> {
    let layout = spec.checked_layout(history.len())?;
    let action_sequences = spec.action_sequences(history.len())?;
    let mut tables = Vec::with_capacity(action_sequences.len());
    let mut log_evidence = Vec::with_capacity(action_sequences.len());
    for seq in &action_sequences {
        let (table, lse) = posterior_for(spec, history, seq)?;
        tables.push(table);
        log_evidence.push(lse);
    }
    Ok(ActivePosteriorTable {
        layout,
        action_sequences,
        tables,
        log_evidence,
    })
}

/// `log Σ_free exp(joint_log_prob)`; `-inf` when the history is impossible.
pub fn log_evidence(
    spec: &GenerativeModelSpec,
    history: &History,
    action_seq: &ActionSeq,
) -> Result<f64> {
    spec.checked_layout(history.len())?;
    let cond = spec.conditioned(history, action_seq)?;
    log_sum_exp(&cond.log_joint_table())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{enumerate_assignments, joint_log_prob, Horizon, ThetaPoint, ThetaSupport};
    use crate::prob::{Alphabet, Categorical, ProbTable};
    use crate::testing::random_spec;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn pm(n: usize, i: usize) -> Categorical {
        Categorical::point_mass(n, i).unwrap()
    }

    fn identity_model() -> GenerativeModelSpec {
        let rows: Vec<Categorical> = (0..2).map(|i| pm(2, i)).collect();
        let th = ThetaPoint {
            sensor: rows.clone(),
            transition: vec![rows.clone(), rows],
            initial: pm(2, 1),
        };
        let two = Alphabet::new(2).unwrap();
        GenerativeModelSpec::new(
            two,
            two,
            two,
            ThetaSupport::single(th),
            Horizon::Rolling { lookahead: 0 },
        )
        .unwrap()
    }

    #[test]
    fn point_mass_model_gives_point_mass_posterior() {
        let spec = identity_model();
        let h = History::from_pairs(vec![(1, 0)]);
        let post = exact_active_posterior(&spec, &h).unwrap();
        assert_eq!(post.len(), 2);
        for (i, table) in post.tables.iter().enumerate() {
            // ê_0 = 1, ê_1 = 1 (identity transition), ŝ_1 = 1
            assert_eq!(table.get(&[0, 1, 1, 1]).unwrap(), 1.0);
            assert_eq!(post.log_evidence[i], 0.0);
        }
        let inconsistent = History::from_pairs(vec![(0, 0)]);
        assert!(matches!(
            exact_active_posterior(&spec, &inconsistent),
            Err(Error::ZeroEvidence { .. })
        ));
        let seq = ActionSeq::new(vec![0]);
        assert_eq!(
            log_evidence(&spec, &inconsistent, &seq).unwrap(),
            f64::NEG_INFINITY
        );
    }

    #[test]
    fn falsified_theta_point_gets_zero_mass() {
        let u = Categorical::uniform(2).unwrap();
        let blind = ThetaPoint {
            sensor: vec![pm(2, 0), pm(2, 0)],
            transition: vec![vec![u.clone(), u.clone()]],
            initial: u.clone(),
        };
        let noisy = ThetaPoint {
            sensor: vec![u.clone(), u.clone()],
            transition: vec![vec![u.clone(), u.clone()]],
            initial: u.clone(),
        };
        let theta = ThetaSupport::new(vec![blind, noisy], u).unwrap();
        let two = Alphabet::new(2).unwrap();
        let spec = GenerativeModelSpec::new(
            two,
            two,
            Alphabet::new(1).unwrap(),
            theta,
            Horizon::Rolling { lookahead: 0 },
        )
        .unwrap();
        let post = exact_active_posterior(&spec, &History::from_pairs(vec![(1, 0)])).unwrap();
        let m = post.theta_marginal(0).unwrap();
        assert_eq!(m.values(), &[0.0, 1.0]);
    }

    #[test]
    fn uniform_sensor_evidence_is_half() {
        let u = Categorical::uniform(2).unwrap();
        let th = ThetaPoint {
            sensor: vec![u.clone(), u.clone()],
            transition: vec![vec![u.clone(), u.clone()]],
            initial: Categorical::new(vec![0.3, 0.7]).unwrap(),
        };
        let two = Alphabet::new(2).unwrap();
        let spec = GenerativeModelSpec::new(
            two,
            two,
            Alphabet::new(1).unwrap(),
            ThetaSupport::single(th),
            Horizon::Rolling { lookahead: 0 },
        )
        .unwrap();
        let le = log_evidence(
            &spec,
            &History::from_pairs(vec![(0, 0)]),
            &ActionSeq::new(vec![0]),
        )
        .unwrap();
        assert!((le - 0.5f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn bayes_consistency_and_theta_marginal() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let spec = random_spec(&mut rng, 2, 2, 2, 2, Horizon::Rolling { lookahead: 1 });
        let h = History::from_pairs(vec![(0, 1), (1, 0)]);
        let post = exact_active_posterior(&spec, &h).unwrap();
        for (k, seq) in post.action_sequences.iter().enumerate() {
            for (i, a) in enumerate_assignments(&spec, &h, seq).unwrap().enumerate() {
                let lhs = joint_log_prob(&spec, &a).unwrap().exp();
                let rhs = post.tables[k].values()[i] * post.log_evidence[k].exp();
                assert!(
                    (lhs - rhs).abs() <= 1e-10 * lhs.abs().max(1e-300),
                    "{lhs} {rhs}"
                );
            }
            // θ-marginal equals renormalised θ-wise evidences
            let mut per_theta = vec![0.0; 2];
            for a in enumerate_assignments(&spec, &h, seq).unwrap() {
                per_theta[a.theta] += joint_log_prob(&spec, &a).unwrap().exp();
            }
            let z: f64 = per_theta.iter().sum();
            let m = post.theta_marginal(k).unwrap();
            for (v, w) in m.values().iter().zip(&per_theta) {
                assert!((v - w / z).abs() < 1e-12);
            }
        }
        // future actions do not change the evidence of the past
        let first = post.log_evidence[0];
        assert!(post.log_evidence.iter().all(|l| (l - first).abs() < 1e-12));
    }
}
