#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "shaperl/dataset.hpp"
#include "shaperl/env.hpp"
#include "shaperl/nn.hpp"
#include "shaperl/pipeline.hpp"
#include "shaperl/rng.hpp"

namespace shaperl {

// Learner hyperparameters.  The distributional critic keeps M quantiles per
// ensemble member and drops the d largest per member (pooled) when forming
// bootstrap targets; entropy temperature is tuned toward a target of -n_act.
struct TqcConfig {
  std::string algorithm = "tqc";  // the only implemented variant
  int n_critics = 3;
  int n_quantiles = 25;     // M, per critic
  int drop_per_critic = 6;  // d, removed from the pooled tail per critic
  double gamma = 0.97;
  double tau = 0.005;  // Polyak rate for target critics
  int batch = 1024;
  std::int64_t buffer_capacity = 1000000;
  std::int64_t warmup_steps = 10000;  // uniform-random action steps
  int updates_per_step = 1;
  double initial_alpha = 0.2;
  double aux_weight = 1.0;  // shape-reconstruction head weight
  std::int64_t total_steps = 1000000;
  std::vector<int> hidden{256, 256};
  double learning_rate = 3e-5;
  double weight_decay = 1e-4;
  double alpha_lr = 3e-4;  // plain gradient step on log-alpha
  double dropout_p = 0.3;  // per-episode sensor dropout probability
  std::int64_t normalizer_freeze = 150000;
  bool no_aux = false;   // ablation: auxiliary loss weight forced to 0
  bool no_priv = false;  // ablation: critic sees the actor input only
};

// Throws ValidationError on out-of-range values; the unimplemented "sac"
// variant is rejected with a "not implemented" message.
void validate_config(const TqcConfig& cfg);

// Number of pooled atoms kept after truncation: n_critics * (M - d).
int kept_atoms(const TqcConfig& cfg);

// One stored environment step.  Observations are raw (post-noise,
// pre-standardization, pre-mask) together with the episode's dropout mask;
// standardization happens at sample time with the then-current statistics.
// priv = [pivot errors (16) | x-point error (2)] against the target in force
// at that step; deriv = backward difference of [obs | priv] over one control
// period (zero on the first step of an episode).  The next state's derivative
// block is ([next_obs|next_priv] - [obs|priv]) / dt and is not stored.
struct Transition {
  std::vector<double> obs;
  std::vector<double> action;
  double reward = 0.0;
  double done = 0.0;  // 1.0 on episode-terminal steps
  std::vector<double> next_obs;
  std::vector<double> priv;
  std::vector<double> next_priv;
  std::vector<double> deriv;
  MaskSpec mask;
};

// Fixed-capacity ring with FIFO overwrite and uniform sampling.
class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::int64_t capacity);

  // Validates sizes against the first pushed transition and finiteness.
  void push(Transition t);
  std::size_t size() const { return data_.size(); }
  std::int64_t capacity() const { return capacity_; }
  const Transition& operator[](std::size_t i) const { return data_[i]; }

  // n uniform indices with replacement; buffer must be non-empty.
  std::vector<std::size_t> sample(std::size_t n, Rng& rng) const;

 private:
  std::int64_t capacity_ = 0;
  std::size_t write_ = 0;  // next slot once full
  std::vector<Transition> data_;
};

// Mean over (quantile index, target atom) pairs of the asymmetric Huber
// quantile loss with midpoints tau_m = (2m-1)/(2M) and threshold kappa.
double quantile_huber_loss(const std::vector<double>& predicted,
                           const std::vector<double>& target_atoms,
                           double kappa = 1.0);

// d(loss)/d(predicted), scaled by `scale`, accumulated into dpred.
void quantile_huber_grad(const std::vector<double>& predicted,
                         const std::vector<double>& target_atoms, double kappa,
                         double scale, double* dpred);

// Sorts the pooled atoms ascending and returns all but the n_drop largest.
std::vector<double> truncate_pooled(std::vector<double> pooled, int n_drop);

// target <- (1 - tau) * target + tau * online.
void polyak_update(std::vector<double>& target,
                   const std::vector<double>& online, double tau);

// Asymmetric TQC learner: squashed-Gaussian actor with a linear
// shape-reconstruction head off the trunk, an ensemble of quantile critics
// that additionally see signed shape errors and time derivatives, and
// entropy temperature tuned toward -n_act.  All state is public so the
// checkpoint codec and the tests can reach it.
struct TqcAgent {
  TqcAgent(const EnvConfig& env_config, const TqcConfig& config,
           std::uint64_t seed);

  EnvConfig env_cfg;
  TqcConfig cfg;
  ObsSpans spans;

  int obs_dim = 0;     // actor input width
  int n_act = 0;       // action width
  int priv_dim = 0;    // pivot + x-point error block width (18)
  int critic_state_dim = 0;  // critic input width before the action

  // Actor trunk ends in a rectified layer; the policy head emits
  // [mean | log_std]; the aux head is a single affine map to the 16 signed
  // pivot-error components (raw meters).
  Mlp trunk;
  Mlp policy_head;
  Mlp aux_head;
  Mlp critic_arch;  // shared architecture across ensemble members

  std::vector<double> trunk_p, policy_p, aux_p;
  std::vector<std::vector<double>> critic_p;
  std::vector<std::vector<double>> target_p;
  double log_alpha = 0.0;

  AdamW trunk_opt, policy_opt, aux_opt;
  std::vector<AdamW> critic_opt;

  Normalizer actor_norm;   // over raw observations
  Normalizer critic_norm;  // over [obs | priv | deriv]

  std::int64_t env_steps = 0;
  std::int64_t grad_steps = 0;
  std::int64_t episodes_done = 0;

  double alpha() const;
  double entropy_target() const { return -static_cast<double>(n_act); }
  double aux_weight_effective() const {
    return cfg.no_aux ? 0.0 : cfg.aux_weight;
  }

  // Standardizes with current statistics and applies the episode mask.
  std::vector<double> actor_input(std::span<const double> raw_obs,
                                  const MaskSpec& mask) const;
  // Standardized [obs | priv | deriv]; under no_priv, the actor input.
  std::vector<double> critic_state(const std::vector<double>& raw_obs,
                                   const std::vector<double>& priv,
                                   const std::vector<double>& deriv,
                                   const MaskSpec& mask) const;
  std::vector<double> next_deriv(const Transition& t) const;

  // Policy evaluation.  Deterministic -> tanh(mean); stochastic draws the
  // squashing noise from rng (required in that case).
  std::vector<double> act(std::span<const double> raw_obs,
                          const MaskSpec& mask, bool deterministic,
                          Rng* rng) const;

  // Per-sample bootstrap atom sets (kept_atoms wide) for the given batch.
  // next_eps supplies the squashing noise for the next action, row-major
  // (batch x n_act), so tests can pin it.
  std::vector<std::vector<double>> compute_targets(
      const ReplayBuffer& buf, const std::vector<std::size_t>& idx,
      const std::vector<double>& next_eps) const;

  // Mean quantile-Huber loss of one ensemble member on the batch.
  double critic_loss(int critic, const ReplayBuffer& buf,
                     const std::vector<std::size_t>& idx,
                     const std::vector<std::vector<double>>& targets) const;

  // Same loss with its parameter gradient (overwritten), no optimizer step.
  double critic_grad_eval(int critic, const ReplayBuffer& buf,
                          const std::vector<std::size_t>& idx,
                          const std::vector<std::vector<double>>& targets,
                          std::vector<double>& grad) const;

  // Gradient step on every ensemble member against shared targets, then a
  // Polyak update of the target ensemble.  Returns the mean member loss.
  double critic_update(const ReplayBuffer& buf,
                       const std::vector<std::size_t>& idx,
                       const std::vector<std::vector<double>>& targets);

  struct ActorLosses {
    double actor = 0.0;      // alpha * logp - mean critic quantile
    double aux = 0.0;        // squared pivot-error residual
    double total = 0.0;      // actor + weight * aux
    double mean_logp = 0.0;  // batch mean log-likelihood
  };

  // Loss evaluation without parameter updates (finite-difference hook).
  ActorLosses actor_loss_eval(const ReplayBuffer& buf,
                              const std::vector<std::size_t>& idx,
                              const std::vector<double>& eps) const;

  // Loss plus gradients of the total objective w.r.t. the three actor
  // parameter blocks (overwritten), no optimizer step.
  ActorLosses actor_grad_eval(const ReplayBuffer& buf,
                              const std::vector<std::size_t>& idx,
                              const std::vector<double>& eps,
                              std::vector<double>& g_trunk,
                              std::vector<double>& g_policy,
                              std::vector<double>& g_aux) const;

  // One AdamW step on trunk, policy head, and aux head.
  ActorLosses actor_update(const ReplayBuffer& buf,
                           const std::vector<std::size_t>& idx,
                           const std::vector<double>& eps);

  // Plain gradient step on log-alpha toward the entropy target, given the
  // batch mean log-likelihood from the actor update.
  void alpha_update(double mean_logp);

  struct UpdateStats {
    double critic_loss = 0.0;
    double actor_loss = 0.0;
    double aux_loss = 0.0;
    double mean_logp = 0.0;
    double alpha = 0.0;
  };

  // One full gradient update (critics, actor, temperature) on a sampled
  // batch; draws all noise from rng.
  UpdateStats update(const ReplayBuffer& buf, Rng& rng);
};

// Per-episode training record; steps is the cumulative environment step
// count when the episode ended.
struct EpisodeRecord {
  std::int64_t episode = 0;
  std::int64_t steps = 0;
  double mean_reward = 0.0;
  double mean_d_shape = 0.0;
  double mean_d_xpt = 0.0;
  std::int64_t eplen = 0;
  double mask_fraction = 0.0;
};

struct TrainResult {
  std::vector<EpisodeRecord> episodes;
  std::int64_t env_steps = 0;
  std::int64_t grad_updates = 0;
};

// Runs the full training loop for cfg.total_steps environment steps: one
// episode at a time with a fresh dropout mask per episode, periodic target
// resampling, uniform-random actions during warmup, one gradient update per
// step afterwards, and running-statistics updates until the freeze point.
// If fault_checkpoint_dir is non-empty, a checkpoint is written there before
// re-throwing a mid-training RuntimeFault.
TrainResult train_agent(const SurrogateEnv& env, TqcAgent& agent,
                        const std::vector<ShapeGoal>& shapes,
                        std::uint64_t seed,
                        const std::string& fault_checkpoint_dir = "");

// Metrics CSV with header
// episode,steps,mean_reward,mean_d_shape_m,mean_d_xpt_m,eplen,mask_fraction.
void write_metrics_csv(const std::string& path,
                       const std::vector<EpisodeRecord>& episodes);

void to_json(nlohmann::json& j, const TqcConfig& c);
void from_json(const nlohmann::json& j, TqcConfig& c);

}  // namespace shaperl
