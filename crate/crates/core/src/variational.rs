//! Mean-field variational active posterior `r(· | â, φ)`, its free energy and
//! per-sequence minimisation by coordinate ascent (CAVI).
//!
//! Each block `φ_â` holds one categorical factor per latent state `ê_τ`
//! (`τ = 0..T̂`), one per free sensor `ŝ_τ` (`τ = t..T̂`) and one over θ.
//! The free energy of a block depends on no other block, so blocks are
//! optimised independently.
//!
//! Zero kernel entries enter the coordinate updates as the finite log value
//! [`ZERO_LOG_PENALTY`]. Factor values whose weight then underflows become
//! exact zeros, which keeps the expected log-joint finite without leaving
//! residual mass on impossible assignments.

use std::io::Write;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exact::log_evidence;
use crate::model::{ActionSeq, Conditioned, FreeLayout, GenerativeModelSpec};
use crate::pa_loop::History;
use crate::prob::{Categorical, JointTable};

/// Stand-in for `log 0` inside coordinate updates.
pub const ZERO_LOG_PENALTY: f64 = -1e4;

/// Slack for the monotonicity guard and the ELBO bound.
pub const MONOTONE_SLACK: f64 = 1e-9;

/// Seed of the perturbation a stuck block restarts from.
pub const RESTART_SEED: u64 = 0;

const DECOMPOSITION_TOLERANCE: f64 = 1e-10;

/// Mean-field factors for one action sequence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeanFieldBlock {
    pub theta: Categorical,
    /// `r(ê_τ)` for `τ = 0..=T̂`.
    pub env: Vec<Categorical>,
    /// `r(ŝ_τ)` for `τ = t..=T̂`.
    pub sensors: Vec<Categorical>,
}

impl MeanFieldBlock {
    pub fn uniform(layout: &FreeLayout) -> Result<Self> {
        Ok(MeanFieldBlock {
            theta: Categorical::uniform(layout.n_theta)?,
            env: vec![Categorical::uniform(layout.n_env)?; layout.env_len()],
            sensors: vec![Categorical::uniform(layout.n_sensor)?; layout.horizon_len()],
        })
    }

    /// Uniform factors multiplied by normalised positive noise in `[1, 2)`.
    pub fn perturbed(layout: &FreeLayout, rng: &mut ChaCha8Rng) -> Result<Self> {
        use rand::Rng;
        let mut draw = |n: usize| {
            let w: Vec<f64> = (0..n).map(|_| 1.0 + rng.gen::<f64>()).collect();
            Categorical::from_weights(w)
        };
        Ok(MeanFieldBlock {
            theta: draw(layout.n_theta)?,
            env: (0..layout.env_len())
                .map(|_| draw(layout.n_env))
                .collect::<Result<_>>()?,
            sensors: (0..layout.horizon_len())
                .map(|_| draw(layout.n_sensor))
                .collect::<Result<_>>()?,
        })
    }

    pub fn validate(&self, layout: &FreeLayout) -> Result<()> {
        let shape_ok = self.theta.len() == layout.n_theta
            && self.env.len() == layout.env_len()
            && self.env.iter().all(|f| f.len() == layout.n_env)
            && self.sensors.len() == layout.horizon_len()
            && self.sensors.iter().all(|f| f.len() == layout.n_sensor);
        if shape_ok {
            Ok(())
        } else {
            let mut right = vec![self.theta.len()];
            right.extend(self.env.iter().map(Categorical::len));
            right.extend(self.sensors.iter().map(Categorical::len));
            Err(Error::ShapeMismatch {
                left: layout.dims(),
                right,
            })
        }
    }

    /// Sum of factor entropies, which is the entropy of the product.
    pub fn entropy(&self) -> f64 {
        self.theta.entropy()
            + self.env.iter().map(Categorical::entropy).sum::<f64>()
            + self.sensors.iter().map(Categorical::entropy).sum::<f64>()
    }

    pub fn prob(&self, theta: usize, env: &[usize], sensors: &[usize]) -> f64 {
        let mut p = self.theta.get(theta);
        for (f, &e) in self.env.iter().zip(env) {
            p *= f.get(e);
        }
        for (f, &s) in self.sensors.iter().zip(sensors) {
            p *= f.get(s);
        }
        p
    }

    fn ln_prob(&self, theta: usize, env: &[usize], sensors: &[usize]) -> f64 {
        let mut l = self.theta.get(theta).ln();
        for (f, &e) in self.env.iter().zip(env) {
            l += f.get(e).ln();
        }
        for (f, &s) in self.sensors.iter().zip(sensors) {
            l += f.get(s).ln();
        }
        l
    }

    /// Dense product table in the layout's axis order.
    pub fn to_table(&self, layout: &FreeLayout) -> Result<JointTable> {
        self.validate(layout)?;
        let size = checked_usize(layout)?;
        let mut env = vec![0; layout.env_len()];
        let mut sensors = vec![0; layout.horizon_len()];
        let values = (0..size)
            .map(|flat| {
                let th = layout.decode(flat, &mut env, &mut sensors);
                self.prob(th, &env, &sensors)
            })
            .collect();
        JointTable::normalized(layout.dims(), values)
    }

    fn factor_mut(&mut self, id: FactorId, t: usize) -> &mut Categorical {
        match id {
            FactorId::Theta => &mut self.theta,
            FactorId::Env(tau) => &mut self.env[tau],
            FactorId::Sensor(tau) => &mut self.sensors[tau - t],
        }
    }
}

fn checked_usize(layout: &FreeLayout) -> Result<usize> {
    usize::try_from(layout.size()).map_err(|_| Error::HorizonTooLarge {
        size: layout.size(),
        cap: usize::MAX as u128,
    })
}

/// Identifies one factor of a block; sensor indices are absolute time steps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FactorId {
    Theta,
    Env(usize),
    Sensor(usize),
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum UpdateSchedule {
    /// θ, then `ê_0..ê_T̂`, then `ŝ_t..ŝ_T̂`.
    #[default]
    Default,
    /// Any permutation of the block's factors.
    Custom(Vec<FactorId>),
}

impl UpdateSchedule {
    fn order(&self, layout: &FreeLayout) -> Result<Vec<FactorId>> {
        let mut default = vec![FactorId::Theta];
        default.extend((0..layout.env_len()).map(FactorId::Env));
        default.extend((layout.t..=layout.final_step).map(FactorId::Sensor));
        match self {
            UpdateSchedule::Default => Ok(default),
            UpdateSchedule::Custom(order) => {
                let covers =
                    order.len() == default.len() && default.iter().all(|f| order.contains(f));
                if covers {
                    Ok(order.clone())
                } else {
                    Err(Error::InvalidParameter(
                        "custom schedule must list every factor exactly once".into(),
                    ))
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Init {
    #[default]
    Uniform,
    Perturbed {
        seed: u64,
    },
}

impl Init {
    /// Initial block for the `index`-th action sequence.
    pub fn block(&self, layout: &FreeLayout, index: usize) -> Result<MeanFieldBlock> {
        match *self {
            Init::Uniform => MeanFieldBlock::uniform(layout),
            Init::Perturbed { seed } => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(index as u64);
                MeanFieldBlock::perturbed(layout, &mut rng)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariationalOptions {
    pub tol: f64,
    pub max_iters: usize,
    pub schedule: UpdateSchedule,
    pub init: Init,
    /// Report the gap to the exact log evidence (requires enumeration).
    pub exact_oracle: bool,
}

impl Default for VariationalOptions {
    fn default() -> Self {
        VariationalOptions {
            tol: 1e-10,
            max_iters: 500,
            schedule: UpdateSchedule::Default,
            init: Init::Uniform,
            exact_oracle: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FreeEnergyEntry {
    pub action_seq: ActionSeq,
    pub free_energy: f64,
    /// `F + log evidence`, non-negative up to slack.
    pub gap: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FreeEnergyReport {
    pub entries: Vec<FreeEnergyEntry>,
}

impl FreeEnergyReport {
    pub fn free_energies(&self) -> Vec<f64> {
        self.entries.iter().map(|e| e.free_energy).collect()
    }
}

/// φ: one block per future action sequence, in lexicographic order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariationalParams {
    pub layout: FreeLayout,
    pub action_sequences: Vec<ActionSeq>,
    pub blocks: Vec<MeanFieldBlock>,
}

impl VariationalParams {
    pub fn initial(spec: &GenerativeModelSpec, history: &History, init: Init) -> Result<Self> {
        let layout = spec.layout(history.len())?;
        let action_sequences = spec.action_sequences(history.len())?;
        let blocks = (0..action_sequences.len())
            .map(|i| init.block(&layout, i))
            .collect::<Result<_>>()?;
        Ok(VariationalParams {
            layout,
            action_sequences,
            blocks,
        })
    }

    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    /// Materialised `r(· | â, φ)` for every sequence.
    pub fn tables(&self) -> Result<Vec<JointTable>> {
        self.blocks
            .iter()
            .map(|b| b.to_table(&self.layout))
            .collect()
    }
}

/// Log kernels with every `-inf` replaced by [`ZERO_LOG_PENALTY`].
struct PenalizedLogs {
    prior: Vec<f64>,
    initial: Vec<Vec<f64>>,
    transition: Vec<Vec<Vec<Vec<f64>>>>,
    sensor: Vec<Vec<Vec<f64>>>,
}

fn pen(v: f64) -> f64 {
    if v == f64::NEG_INFINITY {
        ZERO_LOG_PENALTY
    } else {
        v
    }
}

impl PenalizedLogs {
    fn from(cond: &Conditioned<'_>) -> Self {
        let l = cond.logs;
        let map2 = |m: &Vec<Vec<f64>>| {
            m.iter()
                .map(|r| r.iter().copied().map(pen).collect())
                .collect()
        };
        PenalizedLogs {
            prior: l.prior.iter().copied().map(pen).collect(),
            initial: map2(&l.initial),
            transition: l
                .transition
                .iter()
                .map(|per_a| per_a.iter().map(map2).collect())
                .collect(),
            sensor: l.sensor.iter().map(map2).collect(),
        }
    }
}

/// Read-only view of either exact or penalised log kernels.
#[derive(Clone, Copy)]
struct Kernels<'k> {
    prior: &'k [f64],
    initial: &'k [Vec<f64>],
    transition: &'k [Vec<Vec<Vec<f64>>>],
    sensor: &'k [Vec<Vec<f64>>],
}

impl<'k> From<&'k PenalizedLogs> for Kernels<'k> {
    fn from(p: &'k PenalizedLogs) -> Self {
        Kernels {
            prior: &p.prior,
            initial: &p.initial,
            transition: &p.transition,
            sensor: &p.sensor,
        }
    }
}

/// `w · l` with the convention `0 · (-inf) = 0`.
#[inline]
fn wmul(w: f64, l: f64) -> f64 {
    if w == 0.0 {
        0.0
    } else {
        w * l
    }
}

fn dot(weights: &[f64], logs: &[f64]) -> f64 {
    weights.iter().zip(logs).map(|(&w, &l)| wmul(w, l)).sum()
}

struct BlockObjective<'a> {
    layout: FreeLayout,
    actions: &'a [usize],
    past_sensors: &'a [usize],
}

impl BlockObjective<'_> {
    /// `E_{r_{-θ}}[log q | θ]`.
    fn expected_given_theta(&self, k: Kernels<'_>, b: &MeanFieldBlock, th: usize) -> f64 {
        let t = self.layout.t;
        let mut acc = k.prior[th] + dot(b.env[0].probs(), &k.initial[th]);
        for tau in 1..self.layout.env_len() {
            let table = &k.transition[th][self.actions[tau]];
            for (e_prev, &wp) in b.env[tau - 1].probs().iter().enumerate() {
                if wp == 0.0 {
                    continue;
                }
                acc += wp * dot(b.env[tau].probs(), &table[e_prev]);
            }
        }
        for (tau, &s) in self.past_sensors.iter().enumerate() {
            for (e, &w) in b.env[tau].probs().iter().enumerate() {
                acc += wmul(w, k.sensor[th][e][s]);
            }
        }
        for tau in t..self.layout.env_len() {
            let rs = b.sensors[tau - t].probs();
            for (e, &w) in b.env[tau].probs().iter().enumerate() {
                if w == 0.0 {
                    continue;
                }
                acc += w * dot(rs, &k.sensor[th][e]);
            }
        }
        acc
    }

    /// `E_r[log q]`; `-inf` when `r` reaches a zero of `q` with exact logs.
    fn expected_log_joint(&self, k: Kernels<'_>, b: &MeanFieldBlock) -> f64 {
        b.theta
            .probs()
            .iter()
            .enumerate()
            .map(|(th, &w)| wmul(w, self.expected_given_theta(k, b, th)))
            .sum()
    }

    fn update(&self, k: Kernels<'_>, b: &mut MeanFieldBlock, id: FactorId) -> Result<()> {
        let t = self.layout.t;
        let last = self.layout.final_step;
        let logits: Vec<f64> = match id {
            FactorId::Theta => (0..self.layout.n_theta)
                .map(|th| self.expected_given_theta(k, b, th))
                .collect(),
            FactorId::Env(tau) => (0..self.layout.n_env)
                .map(|e| {
                    let mut acc = 0.0;
                    for (th, &wt) in b.theta.probs().iter().enumerate() {
                        if wt == 0.0 {
                            continue;
                        }
                        let mut term = 0.0;
                        if tau == 0 {
                            term += k.initial[th][e];
                        } else {
                            let table = &k.transition[th][self.actions[tau]];
                            for (e_prev, &wp) in b.env[tau - 1].probs().iter().enumerate() {
                                term += wmul(wp, table[e_prev][e]);
                            }
                        }
                        if tau < last {
                            let row = &k.transition[th][self.actions[tau + 1]][e];
                            term += dot(b.env[tau + 1].probs(), row);
                        }
                        if tau < t {
                            term += k.sensor[th][e][self.past_sensors[tau]];
                        } else {
                            term += dot(b.sensors[tau - t].probs(), &k.sensor[th][e]);
                        }
                        acc += wt * term;
                    }
                    acc
                })
                .collect(),
            FactorId::Sensor(tau) => (0..self.layout.n_sensor)
                .map(|s| {
                    let mut acc = 0.0;
                    for (th, &wt) in b.theta.probs().iter().enumerate() {
                        for (e, &we) in b.env[tau].probs().iter().enumerate() {
                            acc += wmul(wt * we, k.sensor[th][e][s]);
                        }
                    }
                    acc
                })
                .collect(),
        };
        *b.factor_mut(id, t) = Categorical::from_log_weights(&logits)?;
        Ok(())
    }
}

fn objective<'a>(cond: &'a Conditioned<'_>) -> BlockObjective<'a> {
    BlockObjective {
        layout: cond.layout,
        actions: &cond.actions,
        past_sensors: &cond.past_sensors,
    }
}

fn exact_kernels<'a>(cond: &'a Conditioned<'_>) -> Kernels<'a> {
    let l = cond.logs;
    Kernels {
        prior: &l.prior,
        initial: &l.initial,
        transition: &l.transition,
        sensor: &l.sensor,
    }
}

/// `F[â, φ, sa_{≺t}] = Σ_x r(x | â, φ) log[r(x | â, φ) / q(s_{≺t}, x | â, a_{≺t})]`.
///
/// Computed as cross-entropy minus entropy from the factor structure, and,
/// when the free space is within the enumeration cap, also by direct
/// summation over all cells; the two routes must agree to 1e-10.
pub fn free_energy(
    spec: &GenerativeModelSpec,
    history: &History,
    action_seq: &ActionSeq,
    block: &MeanFieldBlock,
) -> Result<f64> {
    let cond = spec.conditioned(history, action_seq)?;
    block.validate(&cond.layout)?;
    let model_zero = || Error::ModelZero {
        action_seq: action_seq.to_string(),
    };
    let cross = objective(&cond).expected_log_joint(exact_kernels(&cond), block);
    if cross == f64::NEG_INFINITY {
        return Err(model_zero());
    }
    let decomposed = -block.entropy() - cross;
    if cond.layout.size() > spec.enum_cap() {
        return Ok(decomposed);
    }

    let layout = cond.layout;
    let mut env = vec![0; layout.env_len()];
    let mut sensors = vec![0; layout.horizon_len()];
    let mut direct = 0.0;
    for flat in 0..layout.size() as usize {
        let th = layout.decode(flat, &mut env, &mut sensors);
        let r = block.prob(th, &env, &sensors);
        if r == 0.0 {
            continue;
        }
        let lq = cond.log_joint(th, &env, &sensors);
        if lq == f64::NEG_INFINITY {
            return Err(model_zero());
        }
        direct += r * (block.ln_prob(th, &env, &sensors) - lq);
    }
    if (direct - decomposed).abs() > DECOMPOSITION_TOLERANCE * direct.abs().max(1.0) {
        return Err(Error::IdentityViolation {
            what: "free energy: direct sum vs cross-entropy minus entropy",
            lhs: direct,
            rhs: decomposed,
        });
    }
    Ok(direct)
}

/// Result of minimising one block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaviOutcome {
    pub block: MeanFieldBlock,
    pub report: FreeEnergyEntry,
    /// Objective before the first sweep and after every sweep.
    pub trace: Vec<f64>,
}

impl CaviOutcome {
    pub fn sweeps(&self) -> usize {
        self.trace.len() - 1
    }
}

/// Objective tracked by the sweeps: the free energy with `log 0` replaced by
/// [`ZERO_LOG_PENALTY`]. Equal to `F` whenever `r` avoids zeros of `q`.
fn penalized_free_energy(obj: &BlockObjective<'_>, k: Kernels<'_>, b: &MeanFieldBlock) -> f64 {
    -b.entropy() - obj.expected_log_joint(k, b)
}

/// Runs at most `sweeps` coordinate sweeps on `block` in place and returns
/// the objective after each one; stops early once a sweep improves by less
/// than `tol`.
fn run_sweeps(
    cond: &Conditioned<'_>,
    block: &mut MeanFieldBlock,
    schedule: &UpdateSchedule,
    tol: f64,
    sweeps: usize,
) -> Result<Vec<f64>> {
    let order = schedule.order(&cond.layout)?;
    let pen = PenalizedLogs::from(cond);
    let k = Kernels::from(&pen);
    let obj = objective(cond);
    let mut previous = penalized_free_energy(&obj, k, block);
    let mut trace = vec![previous];
    for sweep in 1..=sweeps {
        for &id in &order {
            obj.update(k, block, id)?;
        }
        let current = penalized_free_energy(&obj, k, block);
        if current > previous + MONOTONE_SLACK {
            return Err(Error::NonDecreasingGuard {
                sweep,
                previous,
                current,
            });
        }
        trace.push(current);
        if previous - current < tol {
            break;
        }
        previous = current;
    }
    Ok(trace)
}

fn entry_for(
    spec: &GenerativeModelSpec,
    history: &History,
    action_seq: &ActionSeq,
    block: &MeanFieldBlock,
    exact_oracle: bool,
) -> Result<FreeEnergyEntry> {
    let f = free_energy(spec, history, action_seq, block)?;
    let gap = if exact_oracle {
        let g = f + log_evidence(spec, history, action_seq)?;
        if g < -MONOTONE_SLACK {
            return Err(Error::IdentityViolation {
                what: "evidence bound F + log evidence >= 0",
                lhs: g,
                rhs: 0.0,
            });
        }
        Some(g)
    } else {
        None
    };
    Ok(FreeEnergyEntry {
        action_seq: action_seq.clone(),
        free_energy: f,
        gap,
    })
}

/// Minimises `F[â, ·]` over one block by full coordinate sweeps.
pub fn cavi_minimize(
    spec: &GenerativeModelSpec,
    history: &History,
    action_seq: &ActionSeq,
    init: MeanFieldBlock,
    opts: &VariationalOptions,
) -> Result<CaviOutcome> {
    if opts.tol.is_nan() || opts.tol <= 0.0 {
        return Err(Error::InvalidParameter(format!(
            "tol must be positive, got {}",
            opts.tol
        )));
    }
    let cond = spec.conditioned(history, action_seq)?;
    init.validate(&cond.layout)?;
    let mut block = init;
    let trace = run_sweeps(&cond, &mut block, &opts.schedule, opts.tol, opts.max_iters)?;
    let report = entry_for(spec, history, action_seq, &block, opts.exact_oracle)?;
    Ok(CaviOutcome {
        block,
        report,
        trace,
    })
}

/// Continues CAVI on an existing block for at most `sweeps` sweeps.
pub(crate) fn refine_block(
    spec: &GenerativeModelSpec,
    history: &History,
    action_seq: &ActionSeq,
    block: &mut MeanFieldBlock,
    opts: &VariationalOptions,
    sweeps: usize,
) -> Result<Vec<f64>> {
    let cond = spec.conditioned(history, action_seq)?;
    block.validate(&cond.layout)?;
    run_sweeps(&cond, block, &opts.schedule, opts.tol, sweeps)
}

/// Uniform factors are a fixed point of the sweeps whenever the model is
/// symmetric in an unobserved variable (say, an unknown initial state behind
/// a deterministic sensor). If that fixed point keeps mass on assignments the
/// model rules out, `F` is infinite; the block then restarts once from a
/// seeded perturbation and runs to convergence. Returns whether it restarted.
///
/// Every sequence gets the same perturbation, so blocks that differ only in
/// their actions settle on the same side of the symmetry.
pub(crate) fn restart_if_stuck(
    spec: &GenerativeModelSpec,
    history: &History,
    action_seq: &ActionSeq,
    block: &mut MeanFieldBlock,
    opts: &VariationalOptions,
) -> Result<bool> {
    match free_energy(spec, history, action_seq, block) {
        Err(Error::ModelZero { .. }) => {
            let layout = spec.conditioned(history, action_seq)?.layout;
            *block = Init::Perturbed { seed: RESTART_SEED }.block(&layout, 0)?;
            refine_block(spec, history, action_seq, block, opts, opts.max_iters)?;
            Ok(true)
        }
        Err(e) => Err(e),
        Ok(_) => Ok(false),
    }
}

/// φ* for every action sequence, plus the per-sequence reports and traces.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Optimized {
    pub params: VariationalParams,
    pub report: FreeEnergyReport,
    pub traces: Vec<Vec<f64>>,
}

pub fn optimize_all(
    spec: &GenerativeModelSpec,
    history: &History,
    opts: &VariationalOptions,
) -> Result<Optimized> {
    let initial = VariationalParams::initial(spec, history, opts.init)?;
    let mut blocks = Vec::with_capacity(initial.len());
    let mut report = FreeEnergyReport::default();
    let mut traces = Vec::with_capacity(initial.len());
    for (seq, init) in initial.action_sequences.iter().zip(initial.blocks) {
        let out = match cavi_minimize(spec, history, seq, init, opts) {
            Err(Error::ModelZero { .. }) => {
                let restart = Init::Perturbed { seed: RESTART_SEED }.block(&initial.layout, 0)?;
                cavi_minimize(spec, history, seq, restart, opts)
            }
            other => other,
        }
        .map_err(|e| Error::Block {
            action_seq: seq.to_string(),
            source: Box::new(e),
        })?;
        blocks.push(out.block);
        report.entries.push(out.report);
        traces.push(out.trace);
    }
    Ok(Optimized {
        params: VariationalParams {
            layout: initial.layout,
            action_sequences: initial.action_sequences,
            blocks,
        },
        report,
        traces,
    })
}

/// Writes `(action_seq, sweep, free_energy)` rows.
pub fn write_trace_csv<W: Write>(
    out: W,
    sequences: &[ActionSeq],
    traces: &[Vec<f64>],
) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["action_seq", "sweep", "free_energy"])?;
    for (seq, trace) in sequences.iter().zip(traces) {
        for (sweep, f) in trace.iter().enumerate() {
            w.write_record([seq.to_string(), sweep.to_string(), format!("{f:.16e}")])?;
        }
    }
    w.flush().map_err(|e| Error::io("<trace csv>", e))?;
    Ok(())
}
