//! Divergences between the exact and variational objects, in posterior
//! space and in policy space, and their CSV export.

use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exact::ActivePosteriorTable;
use crate::model::ActionSeq;
use crate::motivation::MotivationFunctional;
use crate::policy::{induce_policy, PolicyDistribution};
use crate::prob::kl_divergence;
use crate::variational::VariationalParams;

pub const CSV_HEADER: [&str; 4] = ["step", "quantity_name", "action_seq", "value"];

/// Divergences at one loop step. A KL whose support condition fails is
/// stored as `+inf`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeometrySnapshot {
    pub step: usize,
    pub action_sequences: Vec<ActionSeq>,
    /// `KL(r_â || q_â)` per sequence.
    pub kl_variational_exact: Vec<f64>,
    /// `KL(q_â || r_â)` per sequence.
    pub kl_exact_variational: Vec<f64>,
    /// `KL(s || r-induced)`, the objective's D2.
    pub kl_s_r_induced: f64,
    pub kl_r_induced_q_induced: f64,
    pub kl_s_q_induced: f64,
    /// `Σ_â s(â) F[â]` with `F = -log evidence + KL(r || q)`.
    pub d1: f64,
    pub d2: f64,
}

fn kl_or_inf(result: Result<f64>) -> Result<f64> {
    match result {
        Ok(v) => Ok(v),
        Err(Error::SupportViolation { .. }) => Ok(f64::INFINITY),
        Err(e) => Err(e),
    }
}

pub fn snapshot(
    step: usize,
    exact: &ActivePosteriorTable,
    phi: &VariationalParams,
    s: &PolicyDistribution,
    m: &dyn MotivationFunctional,
    gamma: f64,
) -> Result<GeometrySnapshot> {
    if exact.action_sequences != phi.action_sequences || exact.layout != phi.layout {
        return Err(Error::ShapeMismatch {
            left: exact.layout.dims(),
            right: phi.layout.dims(),
        });
    }
    let tables = phi.tables()?;
    let mut kl_variational_exact = Vec::with_capacity(tables.len());
    let mut kl_exact_variational = Vec::with_capacity(tables.len());
    for (r, q) in tables.iter().zip(&exact.tables) {
        kl_variational_exact.push(kl_or_inf(kl_divergence(r, q))?);
        kl_exact_variational.push(kl_or_inf(kl_divergence(q, r))?);
    }
    let r_induced = induce_policy(phi, m, gamma)?;
    let q_induced = induce_policy(exact, m, gamma)?;
    let kl_s_r_induced = kl_or_inf(s.kl_to(&r_induced))?;
    let d1 = s
        .probs
        .probs()
        .iter()
        .zip(exact.log_evidence.iter().zip(&kl_variational_exact))
        .filter(|(&p, _)| p > 0.0)
        .map(|(p, (le, kl))| p * (kl - le))
        .sum();
    Ok(GeometrySnapshot {
        step,
        action_sequences: exact.action_sequences.clone(),
        kl_variational_exact,
        kl_exact_variational,
        kl_s_r_induced,
        kl_r_induced_q_induced: kl_or_inf(r_induced.kl_to(&q_induced))?,
        kl_s_q_induced: kl_or_inf(s.kl_to(&q_induced))?,
        d1,
        d2: kl_s_r_induced,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeometryRow {
    pub step: usize,
    pub quantity_name: String,
    pub action_seq: String,
    pub value: f64,
}

impl GeometrySnapshot {
    /// `2 K + 5` rows for `K` action sequences.
    pub fn rows(&self) -> Vec<GeometryRow> {
        let row = |name: &str, seq: String, value: f64| GeometryRow {
            step: self.step,
            quantity_name: name.to_string(),
            action_seq: seq,
            value,
        };
        let mut rows = Vec::with_capacity(2 * self.action_sequences.len() + 5);
        for (k, seq) in self.action_sequences.iter().enumerate() {
            rows.push(row(
                "kl_variational_exact",
                seq.to_string(),
                self.kl_variational_exact[k],
            ));
            rows.push(row(
                "kl_exact_variational",
                seq.to_string(),
                self.kl_exact_variational[k],
            ));
        }
        let scalar = |name, v| row(name, "-".to_string(), v);
        rows.push(scalar("kl_s_r_induced", self.kl_s_r_induced));
        rows.push(scalar(
            "kl_r_induced_q_induced",
            self.kl_r_induced_q_induced,
        ));
        rows.push(scalar("kl_s_q_induced", self.kl_s_q_induced));
        rows.push(scalar("d1", self.d1));
        rows.push(scalar("d2", self.d2));
        rows
    }
}

pub fn write_csv<W: std::io::Write>(out: W, snapshots: &[GeometrySnapshot]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_HEADER)?;
    for snap in snapshots {
        for r in snap.rows() {
            w.write_record([
                r.step.to_string(),
                r.quantity_name,
                r.action_seq,
                format!("{:.16e}", r.value),
            ])?;
        }
    }
    w.flush().map_err(|e| Error::io("<geometry csv>", e))?;
    Ok(())
}

pub fn export_csv(snapshots: &[GeometrySnapshot], path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_csv(BufWriter::new(file), snapshots)
}

pub fn read_csv(path: &Path) -> Result<Vec<GeometryRow>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::Reader::from_reader(file);
    let header = reader.headers()?.clone();
    if header.iter().ne(CSV_HEADER) {
        return Err(Error::Config(format!(
            "{}: unexpected header {:?}",
            path.display(),
            header
        )));
    }
    reader
        .deserialize()
        .map(|r| r.map_err(Error::from))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exact::exact_active_posterior;
    use crate::model::Horizon;
    use crate::motivation::{ExpectedReward, RewardStructure};
    use crate::pa_loop::History;
    use crate::policy::induce_policy;
    use crate::testing::{factorizing_spec, random_history, random_spec};
    use crate::variational::{optimize_all, VariationalOptions};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn m() -> ExpectedReward {
        ExpectedReward {
            rewards: RewardStructure::new(vec![0.0, 1.0]).unwrap(),
        }
    }

    #[test]
    fn factorizing_model_has_tiny_posterior_distances() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let spec = factorizing_spec(&mut rng, 2, 2, 2, Horizon::Rolling { lookahead: 1 });
        let h = random_history(&mut rng, 2, 2, 2);
        let exact = exact_active_posterior(&spec, &h).unwrap();
        let phi = optimize_all(&spec, &h, &VariationalOptions::default())
            .unwrap()
            .params;
        let s = induce_policy(&phi, &m(), 1.0).unwrap();
        let snap = snapshot(2, &exact, &phi, &s, &m(), 1.0).unwrap();
        assert!(snap.kl_variational_exact.iter().all(|&k| k <= 1e-6));
        assert!(snap.kl_exact_variational.iter().all(|&k| k <= 1e-6));
        assert_eq!(snap.kl_s_r_induced, 0.0);
        assert_eq!(snap.d2, 0.0);
    }

    #[test]
    fn one_action_model_has_zero_policy_distances() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let spec = random_spec(&mut rng, 2, 2, 1, 2, Horizon::Rolling { lookahead: 1 });
        let h = random_history(&mut rng, 2, 1, 1);
        let exact = exact_active_posterior(&spec, &h).unwrap();
        let phi = optimize_all(&spec, &h, &VariationalOptions::default())
            .unwrap()
            .params;
        let s = induce_policy(&exact, &m(), 3.0).unwrap();
        let snap = snapshot(0, &exact, &phi, &s, &m(), 3.0).unwrap();
        assert_eq!(snap.kl_s_r_induced, 0.0);
        assert_eq!(snap.kl_r_induced_q_induced, 0.0);
        assert_eq!(snap.kl_s_q_induced, 0.0);
        assert!(snap.kl_variational_exact[0] >= 0.0);
    }

    fn sample_snapshot(step: usize) -> GeometrySnapshot {
        let mut rng = ChaCha8Rng::seed_from_u64(step as u64 + 10);
        let spec = random_spec(&mut rng, 2, 2, 2, 2, Horizon::Rolling { lookahead: 1 });
        let h = random_history(&mut rng, 2, 2, 1);
        let exact = exact_active_posterior(&spec, &h).unwrap();
        let phi = optimize_all(&spec, &h, &VariationalOptions::default())
            .unwrap()
            .params;
        let s = induce_policy(&exact, &m(), 0.7).unwrap();
        snapshot(step, &exact, &phi, &s, &m(), 0.7).unwrap()
    }

    #[test]
    fn csv_export_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let empty = dir.path().join("empty.csv");
        export_csv(&[], &empty).unwrap();
        assert_eq!(
            std::fs::read_to_string(&empty).unwrap(),
            "step,quantity_name,action_seq,value\n"
        );
        assert!(read_csv(&empty).unwrap().is_empty());

        let snaps = vec![sample_snapshot(0), sample_snapshot(1)];
        let path = dir.path().join("geometry.csv");
        export_csv(&snaps, &path).unwrap();
        let rows = read_csv(&path).unwrap();
        let per_snapshot = 2 * snaps[0].action_sequences.len() + 5;
        assert_eq!(rows.len(), 2 * per_snapshot);
        let expected: Vec<GeometryRow> = snaps.iter().flat_map(GeometrySnapshot::rows).collect();
        for (a, b) in rows.iter().zip(&expected) {
            assert_eq!(
                (a.step, &a.quantity_name, &a.action_seq),
                (b.step, &b.quantity_name, &b.action_seq)
            );
            assert!((a.value - b.value).abs() <= 1e-12 * b.value.abs().max(1.0));
        }
    }

    #[test]
    fn infinite_divergence_round_trips() {
        let mut snap = sample_snapshot(3);
        snap.kl_exact_variational[0] = f64::INFINITY;
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("g.csv");
        export_csv(&[snap], &path).unwrap();
        let rows = read_csv(&path).unwrap();
        assert_eq!(rows[1].value, f64::INFINITY);
    }

    #[test]
    fn io_errors_name_the_path() {
        let err = export_csv(&[], Path::new("/nonexistent-dir/x.csv")).unwrap_err();
        assert!(err.to_string().contains("/nonexistent-dir/x.csv"));
        let _ = History::new();
    }
}
