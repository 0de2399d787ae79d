//! Learning loops: behavior cloning, rollout collection, critic and
//! posterior updates, reward assembly, advantage estimation and the outer
//! adversarial iteration.

mod adversary;
mod bc;
mod buffer;
mod metrics;
mod policy_update;
mod reward;
mod rollout;
mod run;

pub use adversary::{
    critic_objective, critic_objective_grad, posterior_loss_grad, update_critic, update_posterior,
};
pub use bc::{bc_loss_grad, bc_nll, bc_pretrain, BcReport};
pub use buffer::{sample_pairs, Pair, ReplayBuffer};
pub use metrics::{read_metrics, write_metrics, IterMetrics, METRICS_HEADER};
pub use policy_update::{policy_update, PolicySample, TrpoRecord};
pub use reward::{
    assemble_step_rewards, compute_advantages, discounted_returns, fit_baseline, normalize,
    RewardAugmentation, RewardWeights,
};
pub use rollout::{collect_rollouts, rollout_with_code};
pub use run::{infogail_train, Algo, Models, TrainRun};
