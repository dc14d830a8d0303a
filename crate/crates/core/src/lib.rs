//! Active inference over discrete perception-action loops: exact and
//! mean-field variational active posteriors, induced and third policies,
//! and an experiment runner.

pub mod active;
pub mod config;
pub mod error;
pub mod exact;
pub mod geometry;
pub mod model;
pub mod motivation;
pub mod pa_loop;
pub mod policy;
pub mod prob;
pub mod runner;
pub mod testing;
pub mod variational;

pub use active::{
    active_inference_step, combined_objective, third_policy_closed_form, ActiveInferenceOptions,
};
pub use config::{AgentMode, Experiment, ExperimentConfig, Overrides};
pub use error::{Error, Result};
pub use exact::{exact_active_posterior, ActivePosteriorTable};
pub use model::{ActionSeq, GenerativeModelSpec, Horizon, ThetaPoint, ThetaSupport};
pub use motivation::{
    ExpectedReward, MotivationFunctional, NegativeExpectedEntropy, RewardStructure,
};
pub use pa_loop::{run_loop, EnvironmentSpec, History, SeedStreams, TrajectoryRecord};
pub use policy::{induce_policy, PolicyDistribution, Provenance};
pub use prob::{kl_divergence, softmax, Categorical, JointTable};
pub use runner::{compare_modes, run_experiment};
pub use variational::{
    cavi_minimize, free_energy, optimize_all, VariationalOptions, VariationalParams,
};
