#include "shaperl/tqc.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "shaperl/checkpoint.hpp"
#include "shaperl/errors.hpp"

namespace shaperl {

namespace {

void require(bool ok, const std::string& msg) {
  if (!ok) throw ValidationError(msg);
}

void check_finite(const std::vector<double>& v, const char* what) {
  for (double x : v) {
    if (!std::isfinite(x))
      throw ValidationError(std::string("transition has non-finite ") + what);
  }
}

// Splits the configured stack into the rectified trunk and its output width.
// The trunk's final layer is rectified so heads share its representation.
MlpSpec trunk_spec(int in_dim, const std::vector<int>& hidden) {
  MlpSpec s;
  s.in_dim = in_dim;
  s.hidden.assign(hidden.begin(), hidden.end() - 1);
  s.out_dim = hidden.back();
  s.relu_output = true;
  return s;
}

MlpSpec head_spec(int in_dim, int out_dim) {
  return MlpSpec{in_dim, {}, out_dim, false};
}

}  // namespace

void validate_config(const TqcConfig& cfg) {
  if (cfg.algorithm == "sac")
    throw ValidationError("algorithm \"sac\" is not implemented");
  require(cfg.algorithm == "tqc", "algorithm must be \"tqc\"");
  require(cfg.n_critics >= 1, "n_critics must be >= 1");
  require(cfg.n_quantiles >= 1, "n_quantiles must be >= 1");
  require(cfg.drop_per_critic >= 0, "drop_per_critic must be >= 0");
  require(cfg.drop_per_critic < cfg.n_quantiles,
          "drop_per_critic must be < n_quantiles");
  require(cfg.gamma > 0.0 && cfg.gamma <= 1.0, "gamma must be in (0, 1]");
  require(cfg.tau >= 0.0 && cfg.tau <= 1.0, "tau must be in [0, 1]");
  require(cfg.batch >= 1, "batch must be >= 1");
  require(cfg.buffer_capacity >= 1, "buffer_capacity must be >= 1");
  require(cfg.warmup_steps >= 0, "warmup_steps must be >= 0");
  require(cfg.updates_per_step >= 0, "updates_per_step must be >= 0");
  require(cfg.initial_alpha > 0.0, "initial_alpha must be > 0");
  require(cfg.aux_weight >= 0.0, "aux_weight must be >= 0");
  require(cfg.total_steps >= 0, "total_steps must be >= 0");
  require(!cfg.hidden.empty(), "hidden must have at least one layer");
  for (int h : cfg.hidden) require(h >= 1, "hidden widths must be >= 1");
  require(cfg.learning_rate > 0.0, "learning_rate must be > 0");
  require(cfg.weight_decay >= 0.0, "weight_decay must be >= 0");
  require(cfg.alpha_lr >= 0.0, "alpha_lr must be >= 0");
  require(cfg.dropout_p >= 0.0 && cfg.dropout_p < 1.0,
          "dropout_p must be in [0, 1)");
  require(cfg.normalizer_freeze >= 0, "normalizer_freeze must be >= 0");
}

int kept_atoms(const TqcConfig& cfg) {
  return cfg.n_critics * (cfg.n_quantiles - cfg.drop_per_critic);
}

// ---------------------------------------------------------------------------
// Replay buffer

ReplayBuffer::ReplayBuffer(std::int64_t capacity) : capacity_(capacity) {
  require(capacity >= 1, "replay capacity must be >= 1");
}

void ReplayBuffer::push(Transition t) {
  if (!data_.empty()) {
    const Transition& ref = data_.front();
    require(t.obs.size() == ref.obs.size() &&
                t.next_obs.size() == ref.next_obs.size() &&
                t.action.size() == ref.action.size() &&
                t.priv.size() == ref.priv.size() &&
                t.next_priv.size() == ref.next_priv.size() &&
                t.deriv.size() == ref.deriv.size(),
            "transition block sizes changed between pushes");
  }
  require(t.deriv.size() == t.obs.size() + t.priv.size(),
          "derivative block must cover observation and error channels");
  require(t.priv.size() == t.next_priv.size(),
          "error blocks must match between steps");
  check_finite(t.obs, "observation");
  check_finite(t.next_obs, "next observation");
  check_finite(t.action, "action");
  check_finite(t.priv, "error block");
  check_finite(t.next_priv, "next error block");
  check_finite(t.deriv, "derivative block");
  if (!std::isfinite(t.reward) || !std::isfinite(t.done))
    throw ValidationError("transition has non-finite reward or done flag");

  if (static_cast<std::int64_t>(data_.size()) < capacity_) {
    data_.push_back(std::move(t));
  } else {
    data_[write_] = std::move(t);
    write_ = (write_ + 1) % data_.size();
  }
}

std::vector<std::size_t> ReplayBuffer::sample(std::size_t n, Rng& rng) const {
  require(!data_.empty(), "cannot sample from an empty replay buffer");
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i)
    idx[i] = static_cast<std::size_t>(rng.uniform_int(data_.size()));
  return idx;
}

// ---------------------------------------------------------------------------
// Distributional pieces

namespace {

double huber(double u, double kappa) {
  const double au = std::fabs(u);
  if (au <= kappa) return 0.5 * u * u;
  return kappa * (au - 0.5 * kappa);
}

double huber_deriv(double u, double kappa) {
  if (std::fabs(u) <= kappa) return u;
  return u > 0.0 ? kappa : -kappa;
}

}  // namespace

double quantile_huber_loss(const std::vector<double>& predicted,
                           const std::vector<double>& target_atoms,
                           double kappa) {
  require(!predicted.empty() && !target_atoms.empty(),
          "quantile loss needs non-empty inputs");
  const int m_count = static_cast<int>(predicted.size());
  double sum = 0.0;
  for (int m = 0; m < m_count; ++m) {
    const double tau_m = (2.0 * m + 1.0) / (2.0 * m_count);
    for (double y : target_atoms) {
      const double u = y - predicted[m];
      const double w = std::fabs(tau_m - (u < 0.0 ? 1.0 : 0.0));
      sum += w * huber(u, kappa);
    }
  }
  return sum / (static_cast<double>(m_count) *
                static_cast<double>(target_atoms.size()));
}

void quantile_huber_grad(const std::vector<double>& predicted,
                         const std::vector<double>& target_atoms, double kappa,
                         double scale, double* dpred) {
  const int m_count = static_cast<int>(predicted.size());
  const double norm =
      scale / (static_cast<double>(m_count) *
               static_cast<double>(target_atoms.size()));
  for (int m = 0; m < m_count; ++m) {
    const double tau_m = (2.0 * m + 1.0) / (2.0 * m_count);
    double g = 0.0;
    for (double y : target_atoms) {
      const double u = y - predicted[m];
      const double w = std::fabs(tau_m - (u < 0.0 ? 1.0 : 0.0));
      g -= w * huber_deriv(u, kappa);  // d u / d predicted = -1
    }
    dpred[m] += norm * g;
  }
}

std::vector<double> truncate_pooled(std::vector<double> pooled, int n_drop) {
  require(n_drop >= 0 && n_drop < static_cast<int>(pooled.size()),
          "drop count must leave at least one atom");
  std::sort(pooled.begin(), pooled.end());
  pooled.resize(pooled.size() - static_cast<std::size_t>(n_drop));
  return pooled;
}

void polyak_update(std::vector<double>& target,
                   const std::vector<double>& online, double tau) {
  require(target.size() == online.size(),
          "polyak: size mismatch between target and online parameters");
  for (std::size_t i = 0; i < target.size(); ++i)
    target[i] = (1.0 - tau) * target[i] + tau * online[i];
}

// ---------------------------------------------------------------------------
// Agent

TqcAgent::TqcAgent(const EnvConfig& env_config, const TqcConfig& config,
                   std::uint64_t seed)
    : env_cfg(env_config),
      cfg(config),
      spans(obs_spans(env_config.layout)),
      trunk(trunk_spec(spans.total(), config.hidden)),
      policy_head(head_spec(config.hidden.back(), 2 * env_config.n_act)),
      aux_head(head_spec(config.hidden.back(), 2 * kNumPivots)),
      critic_arch(head_spec(1, 1))  // replaced below once dims are known
{
  validate_config(cfg);
  require(env_cfg.n_act >= 1, "environment must expose at least one actuator");

  obs_dim = spans.total();
  n_act = env_cfg.n_act;
  priv_dim = 2 * kNumPivots + 2;
  critic_state_dim = cfg.no_priv ? obs_dim : 2 * (obs_dim + priv_dim);

  critic_arch = Mlp(MlpSpec{critic_state_dim + n_act, cfg.hidden,
                            cfg.n_quantiles, false});

  Rng init_rng = substream(seed, "init");
  trunk.init_params(trunk_p, init_rng);
  policy_head.init_params(policy_p, init_rng, 0.01);
  aux_head.init_params(aux_p, init_rng, 0.01);
  critic_p.resize(cfg.n_critics);
  for (auto& p : critic_p) critic_arch.init_params(p, init_rng);
  target_p = critic_p;

  log_alpha = std::log(cfg.initial_alpha);

  auto make_opt = [&](std::size_t n) {
    AdamW o;
    o.lr = cfg.learning_rate;
    o.weight_decay = cfg.weight_decay;
    o.m.assign(n, 0.0);
    o.v.assign(n, 0.0);
    return o;
  };
  trunk_opt = make_opt(trunk_p.size());
  policy_opt = make_opt(policy_p.size());
  aux_opt = make_opt(aux_p.size());
  critic_opt.resize(cfg.n_critics);
  for (int i = 0; i < cfg.n_critics; ++i)
    critic_opt[i] = make_opt(critic_p[i].size());

  actor_norm = Normalizer(obs_dim, cfg.normalizer_freeze);
  critic_norm =
      Normalizer(2 * (obs_dim + priv_dim), cfg.normalizer_freeze);
}

double TqcAgent::alpha() const { return std::exp(log_alpha); }

std::vector<double> TqcAgent::actor_input(std::span<const double> raw_obs,
                                          const MaskSpec& mask) const {
  std::vector<double> x = actor_norm.standardize(raw_obs);
  apply_mask_inplace(x, mask, spans);
  return x;
}

std::vector<double> TqcAgent::critic_state(const std::vector<double>& raw_obs,
                                           const std::vector<double>& priv,
                                           const std::vector<double>& deriv,
                                           const MaskSpec& mask) const {
  if (cfg.no_priv) return actor_input(raw_obs, mask);
  std::vector<double> s;
  s.reserve(static_cast<std::size_t>(2 * (obs_dim + priv_dim)));
  s.insert(s.end(), raw_obs.begin(), raw_obs.end());
  s.insert(s.end(), priv.begin(), priv.end());
  s.insert(s.end(), deriv.begin(), deriv.end());
  critic_norm.standardize_inplace(s);
  return s;
}

std::vector<double> TqcAgent::next_deriv(const Transition& t) const {
  const std::size_t n = t.obs.size() + t.priv.size();
  std::vector<double> d(n);
  for (std::size_t i = 0; i < t.obs.size(); ++i)
    d[i] = (t.next_obs[i] - t.obs[i]) / env_cfg.dt;
  for (std::size_t i = 0; i < t.priv.size(); ++i)
    d[t.obs.size() + i] = (t.next_priv[i] - t.priv[i]) / env_cfg.dt;
  return d;
}

std::vector<double> TqcAgent::act(std::span<const double> raw_obs,
                                  const MaskSpec& mask, bool deterministic,
                                  Rng* rng) const {
  require(static_cast<int>(raw_obs.size()) == obs_dim,
          "observation width does not match the agent");
  std::vector<double> x = actor_input(raw_obs, mask);
  Mlp::Cache tc, pc;
  std::vector<double> z, head;
  trunk.forward(trunk_p, x.data(), 1, tc, z);
  policy_head.forward(policy_p, z.data(), 1, pc, head);
  std::vector<double> a(static_cast<std::size_t>(n_act));
  if (deterministic) {
    squash_mean_action(head.data(), n_act, a.data());
  } else {
    require(rng != nullptr, "stochastic action needs a generator");
    SquashSample s;
    squash_sample(head.data(), n_act, SquashConfig{}, *rng, s);
    a = s.action;
  }
  return a;
}

std::vector<std::vector<double>> TqcAgent::compute_targets(
    const ReplayBuffer& buf, const std::vector<std::size_t>& idx,
    const std::vector<double>& next_eps) const {
  const int batch = static_cast<int>(idx.size());
  require(next_eps.size() == static_cast<std::size_t>(batch) *
                                 static_cast<std::size_t>(n_act),
          "next-action noise must be batch x n_act");

  // Next actions from the live actor on the next observations.
  std::vector<double> x(static_cast<std::size_t>(batch) * obs_dim);
  for (int b = 0; b < batch; ++b) {
    const Transition& t = buf[idx[static_cast<std::size_t>(b)]];
    std::vector<double> xi = actor_input(t.next_obs, t.mask);
    std::copy(xi.begin(), xi.end(), x.begin() + static_cast<std::size_t>(b) * obs_dim);
  }
  Mlp::Cache tc, pc;
  std::vector<double> z, head;
  trunk.forward(trunk_p, x.data(), batch, tc, z);
  policy_head.forward(policy_p, z.data(), batch, pc, head);

  std::vector<double> logp(static_cast<std::size_t>(batch));
  const int u_dim = critic_state_dim + n_act;
  std::vector<double> u(static_cast<std::size_t>(batch) * u_dim);
  SquashSample s;
  for (int b = 0; b < batch; ++b) {
    const Transition& t = buf[idx[static_cast<std::size_t>(b)]];
    squash_sample_with_eps(head.data() + static_cast<std::size_t>(b) * 2 * n_act,
                           n_act, SquashConfig{},
                           next_eps.data() + static_cast<std::size_t>(b) * n_act,
                           s);
    logp[static_cast<std::size_t>(b)] = s.logp;
    std::vector<double> cs = critic_state(t.next_obs, t.next_priv,
                                          next_deriv(t), t.mask);
    double* row = u.data() + static_cast<std::size_t>(b) * u_dim;
    std::copy(cs.begin(), cs.end(), row);
    std::copy(s.action.begin(), s.action.end(), row + critic_state_dim);
  }

  // Pool every target member's quantiles, then truncate the upper tail.
  std::vector<std::vector<double>> q(static_cast<std::size_t>(cfg.n_critics));
  Mlp::Cache cc;
  for (int i = 0; i < cfg.n_critics; ++i)
    critic_arch.forward(target_p[static_cast<std::size_t>(i)], u.data(), batch,
                        cc, q[static_cast<std::size_t>(i)]);

  const double a = alpha();
  const int n_drop = cfg.n_critics * cfg.drop_per_critic;
  std::vector<std::vector<double>> targets(static_cast<std::size_t>(batch));
  std::vector<double> pooled;
  for (int b = 0; b < batch; ++b) {
    const Transition& t = buf[idx[static_cast<std::size_t>(b)]];
    pooled.clear();
    for (int i = 0; i < cfg.n_critics; ++i) {
      const double* row = q[static_cast<std::size_t>(i)].data() +
                          static_cast<std::size_t>(b) * cfg.n_quantiles;
      pooled.insert(pooled.end(), row, row + cfg.n_quantiles);
    }
    std::vector<double> kept = truncate_pooled(pooled, n_drop);
    const double boot = t.done > 0.5 ? 0.0 : 1.0;
    const double correction = a * logp[static_cast<std::size_t>(b)];
    for (double& atom : kept)
      atom = t.reward + cfg.gamma * boot * (atom - correction);
    targets[static_cast<std::size_t>(b)] = std::move(kept);
  }
  return targets;
}

namespace {

// Assembles the row-major critic input block [state | stored action].
std::vector<double> critic_batch_input(const TqcAgent& agent,
                                       const ReplayBuffer& buf,
                                       const std::vector<std::size_t>& idx) {
  const int batch = static_cast<int>(idx.size());
  const int u_dim = agent.critic_state_dim + agent.n_act;
  std::vector<double> u(static_cast<std::size_t>(batch) * u_dim);
  for (int b = 0; b < batch; ++b) {
    const Transition& t = buf[idx[static_cast<std::size_t>(b)]];
    std::vector<double> cs =
        agent.critic_state(t.obs, t.priv, t.deriv, t.mask);
    double* row = u.data() + static_cast<std::size_t>(b) * u_dim;
    std::copy(cs.begin(), cs.end(), row);
    std::copy(t.action.begin(), t.action.end(), row + agent.critic_state_dim);
  }
  return u;
}

}  // namespace

double TqcAgent::critic_loss(int critic, const ReplayBuffer& buf,
                             const std::vector<std::size_t>& idx,
                             const std::vector<std::vector<double>>& targets) const {
  const int batch = static_cast<int>(idx.size());
  std::vector<double> u = critic_batch_input(*this, buf, idx);
  Mlp::Cache cc;
  std::vector<double> q;
  critic_arch.forward(critic_p[static_cast<std::size_t>(critic)], u.data(),
                      batch, cc, q);
  double loss = 0.0;
  std::vector<double> row(static_cast<std::size_t>(cfg.n_quantiles));
  for (int b = 0; b < batch; ++b) {
    const double* qb = q.data() + static_cast<std::size_t>(b) * cfg.n_quantiles;
    row.assign(qb, qb + cfg.n_quantiles);
    loss += quantile_huber_loss(row, targets[static_cast<std::size_t>(b)]);
  }
  return loss / batch;
}

double TqcAgent::critic_grad_eval(int critic, const ReplayBuffer& buf,
                                  const std::vector<std::size_t>& idx,
                                  const std::vector<std::vector<double>>& targets,
                                  std::vector<double>& grad) const {
  const int batch = static_cast<int>(idx.size());
  require(targets.size() == idx.size(), "one target atom set per sample");
  std::vector<double> u = critic_batch_input(*this, buf, idx);

  Mlp::Cache cc;
  std::vector<double> q;
  critic_arch.forward(critic_p[static_cast<std::size_t>(critic)], u.data(),
                      batch, cc, q);
  double loss = 0.0;
  std::vector<double> dq(static_cast<std::size_t>(batch) * cfg.n_quantiles,
                         0.0);
  std::vector<double> row(static_cast<std::size_t>(cfg.n_quantiles));
  for (int b = 0; b < batch; ++b) {
    const double* qb = q.data() + static_cast<std::size_t>(b) * cfg.n_quantiles;
    row.assign(qb, qb + cfg.n_quantiles);
    loss += quantile_huber_loss(row, targets[static_cast<std::size_t>(b)]);
    quantile_huber_grad(row, targets[static_cast<std::size_t>(b)], 1.0,
                        1.0 / batch,
                        dq.data() + static_cast<std::size_t>(b) * cfg.n_quantiles);
  }
  grad.assign(critic_p[static_cast<std::size_t>(critic)].size(), 0.0);
  critic_arch.backward(critic_p[static_cast<std::size_t>(critic)], cc,
                       dq.data(), grad, nullptr);
  return loss / batch;
}

double TqcAgent::critic_update(const ReplayBuffer& buf,
                               const std::vector<std::size_t>& idx,
                               const std::vector<std::vector<double>>& targets) {
  double loss_sum = 0.0;
  std::vector<double> grad;
  for (int i = 0; i < cfg.n_critics; ++i) {
    loss_sum += critic_grad_eval(i, buf, idx, targets, grad);
    critic_opt[static_cast<std::size_t>(i)].step(
        critic_p[static_cast<std::size_t>(i)], grad,
        "critic_" + std::to_string(i));
  }
  for (int i = 0; i < cfg.n_critics; ++i)
    polyak_update(target_p[static_cast<std::size_t>(i)],
                  critic_p[static_cast<std::size_t>(i)], cfg.tau);
  return loss_sum / cfg.n_critics;
}

namespace {

struct ActorPass {
  TqcAgent::ActorLosses losses;
  std::vector<double> grad_trunk, grad_policy, grad_aux;
};

// Forward (and optionally backward) pass of the total actor objective:
// alpha * log pi - mean critic quantile + weight * pivot-error residual.
// Critic parameters stay fixed; their input gradient reaches the actor only
// through the action slice.
ActorPass actor_pass(const TqcAgent& agent, const ReplayBuffer& buf,
                     const std::vector<std::size_t>& idx,
                     const std::vector<double>& eps, bool with_grad) {
  const int batch = static_cast<int>(idx.size());
  const int n_act = agent.n_act;
  const int obs_dim = agent.obs_dim;
  if (eps.size() != static_cast<std::size_t>(batch) * n_act)
    throw ValidationError("actor noise must be batch x n_act");

  // Trunk and heads on the stored observations.
  std::vector<double> x(static_cast<std::size_t>(batch) * obs_dim);
  for (int b = 0; b < batch; ++b) {
    const Transition& t = buf[idx[static_cast<std::size_t>(b)]];
    std::vector<double> xi = agent.actor_input(t.obs, t.mask);
    std::copy(xi.begin(), xi.end(),
              x.begin() + static_cast<std::size_t>(b) * obs_dim);
  }
  Mlp::Cache tc, pc, ac;
  std::vector<double> z, head, aux_out;
  agent.trunk.forward(agent.trunk_p, x.data(), batch, tc, z);
  agent.policy_head.forward(agent.policy_p, z.data(), batch, pc, head);
  agent.aux_head.forward(agent.aux_p, z.data(), batch, ac, aux_out);

  // Reparameterized actions and critic evaluation at (state, action).
  const int u_dim = agent.critic_state_dim + n_act;
  std::vector<double> u(static_cast<std::size_t>(batch) * u_dim);
  std::vector<SquashSample> samples(static_cast<std::size_t>(batch));
  double logp_sum = 0.0;
  for (int b = 0; b < batch; ++b) {
    const Transition& t = buf[idx[static_cast<std::size_t>(b)]];
    SquashSample& s = samples[static_cast<std::size_t>(b)];
    squash_sample_with_eps(head.data() + static_cast<std::size_t>(b) * 2 * n_act,
                           n_act, SquashConfig{},
                           eps.data() + static_cast<std::size_t>(b) * n_act, s);
    logp_sum += s.logp;
    std::vector<double> cs = agent.critic_state(t.obs, t.priv, t.deriv, t.mask);
    double* row = u.data() + static_cast<std::size_t>(b) * u_dim;
    std::copy(cs.begin(), cs.end(), row);
    std::copy(s.action.begin(), s.action.end(), row + agent.critic_state_dim);
  }

  const int n_critics = agent.cfg.n_critics;
  const int m_count = agent.cfg.n_quantiles;
  std::vector<Mlp::Cache> ccs(static_cast<std::size_t>(n_critics));
  std::vector<std::vector<double>> q(static_cast<std::size_t>(n_critics));
  double q_sum = 0.0;
  for (int i = 0; i < n_critics; ++i) {
    agent.critic_arch.forward(agent.critic_p[static_cast<std::size_t>(i)],
                              u.data(), batch,
                              ccs[static_cast<std::size_t>(i)],
                              q[static_cast<std::size_t>(i)]);
    for (double v : q[static_cast<std::size_t>(i)]) q_sum += v;
  }

  const double a = agent.alpha();
  const double w_aux = agent.aux_weight_effective();
  const int aux_dim = agent.aux_head.spec().out_dim;
  double aux_sum = 0.0;
  for (int b = 0; b < batch; ++b) {
    const Transition& t = buf[idx[static_cast<std::size_t>(b)]];
    const double* pb = aux_out.data() + static_cast<std::size_t>(b) * aux_dim;
    for (int k = 0; k < aux_dim; ++k) {
      const double r = pb[k] - t.priv[static_cast<std::size_t>(k)];
      aux_sum += r * r;
    }
  }

  ActorPass out;
  out.losses.mean_logp = logp_sum / batch;
  out.losses.actor =
      a * out.losses.mean_logp -
      q_sum / (static_cast<double>(batch) * n_critics * m_count);
  out.losses.aux = aux_sum / batch;
  out.losses.total = out.losses.actor + w_aux * out.losses.aux;
  if (!with_grad) return out;

  // Critic input gradients; only the action slice reaches the actor.
  std::vector<double> da(static_cast<std::size_t>(batch) * n_act, 0.0);
  {
    std::vector<double> dq(static_cast<std::size_t>(batch) * m_count,
                           -1.0 / (static_cast<double>(batch) * n_critics *
                                   m_count));
    std::vector<double> scratch(agent.critic_p[0].size());
    std::vector<double> du(static_cast<std::size_t>(batch) * u_dim);
    for (int i = 0; i < n_critics; ++i) {
      agent.critic_arch.backward(agent.critic_p[static_cast<std::size_t>(i)],
                                 ccs[static_cast<std::size_t>(i)], dq.data(),
                                 scratch, du.data());
      for (int b = 0; b < batch; ++b) {
        const double* row =
            du.data() + static_cast<std::size_t>(b) * u_dim +
            agent.critic_state_dim;
        double* dst = da.data() + static_cast<std::size_t>(b) * n_act;
        for (int k = 0; k < n_act; ++k) dst[k] += row[k];
      }
    }
  }

  // Through the squashed sampler into the policy head.
  std::vector<double> dhead(static_cast<std::size_t>(batch) * 2 * n_act, 0.0);
  for (int b = 0; b < batch; ++b) {
    squash_backward(samples[static_cast<std::size_t>(b)], a / batch,
                    da.data() + static_cast<std::size_t>(b) * n_act,
                    dhead.data() + static_cast<std::size_t>(b) * 2 * n_act);
  }
  out.grad_policy.assign(agent.policy_p.size(), 0.0);
  std::vector<double> dz_policy(z.size());
  agent.policy_head.backward(agent.policy_p, pc, dhead.data(), out.grad_policy,
                             dz_policy.data());

  // Auxiliary residual into the aux head.
  std::vector<double> dp(static_cast<std::size_t>(batch) * aux_dim);
  for (int b = 0; b < batch; ++b) {
    const Transition& t = buf[idx[static_cast<std::size_t>(b)]];
    const double* pb = aux_out.data() + static_cast<std::size_t>(b) * aux_dim;
    double* db = dp.data() + static_cast<std::size_t>(b) * aux_dim;
    for (int k = 0; k < aux_dim; ++k)
      db[k] = w_aux * 2.0 * (pb[k] - t.priv[static_cast<std::size_t>(k)]) /
              batch;
  }
  out.grad_aux.assign(agent.aux_p.size(), 0.0);
  std::vector<double> dz_aux(z.size());
  agent.aux_head.backward(agent.aux_p, ac, dp.data(), out.grad_aux,
                          dz_aux.data());

  for (std::size_t i = 0; i < dz_policy.size(); ++i) dz_policy[i] += dz_aux[i];
  out.grad_trunk.assign(agent.trunk_p.size(), 0.0);
  agent.trunk.backward(agent.trunk_p, tc, dz_policy.data(), out.grad_trunk,
                       nullptr);
  return out;
}

}  // namespace

TqcAgent::ActorLosses TqcAgent::actor_loss_eval(
    const ReplayBuffer& buf, const std::vector<std::size_t>& idx,
    const std::vector<double>& eps) const {
  return actor_pass(*this, buf, idx, eps, false).losses;
}

TqcAgent::ActorLosses TqcAgent::actor_grad_eval(
    const ReplayBuffer& buf, const std::vector<std::size_t>& idx,
    const std::vector<double>& eps, std::vector<double>& g_trunk,
    std::vector<double>& g_policy, std::vector<double>& g_aux) const {
  ActorPass pass = actor_pass(*this, buf, idx, eps, true);
  g_trunk = std::move(pass.grad_trunk);
  g_policy = std::move(pass.grad_policy);
  g_aux = std::move(pass.grad_aux);
  return pass.losses;
}

TqcAgent::ActorLosses TqcAgent::actor_update(const ReplayBuffer& buf,
                                             const std::vector<std::size_t>& idx,
                                             const std::vector<double>& eps) {
  ActorPass pass = actor_pass(*this, buf, idx, eps, true);
  if (!std::isfinite(pass.losses.total)) {
    char buf_msg[160];
    std::snprintf(buf_msg, sizeof buf_msg,
                  "actor update produced a non-finite loss (actor=%g aux=%g "
                  "mean_logp=%g alpha=%g)",
                  pass.losses.actor, pass.losses.aux, pass.losses.mean_logp,
                  alpha());
    throw RuntimeFault(buf_msg);
  }
  // All three gradients must be clean before any parameter moves.
  for (const auto* g : {&pass.grad_trunk, &pass.grad_policy, &pass.grad_aux}) {
    for (double v : *g) {
      if (!std::isfinite(v))
        throw RuntimeFault("actor update produced a non-finite gradient");
    }
  }
  trunk_opt.step(trunk_p, pass.grad_trunk, "actor_trunk");
  policy_opt.step(policy_p, pass.grad_policy, "actor_policy_head");
  aux_opt.step(aux_p, pass.grad_aux, "actor_aux_head");
  return pass.losses;
}

void TqcAgent::alpha_update(double mean_logp) {
  // Objective E[-alpha * (log pi + target)]; descent on log-alpha moves the
  // temperature up whenever entropy falls short of the target.
  const double grad = -alpha() * (mean_logp + entropy_target());
  log_alpha -= cfg.alpha_lr * grad;
}

TqcAgent::UpdateStats TqcAgent::update(const ReplayBuffer& buf, Rng& rng) {
  std::vector<std::size_t> idx =
      buf.sample(static_cast<std::size_t>(cfg.batch), rng);
  const std::size_t n_eps =
      static_cast<std::size_t>(cfg.batch) * static_cast<std::size_t>(n_act);
  std::vector<double> next_eps(n_eps), eps(n_eps);
  for (double& v : next_eps) v = rng.normal();
  for (double& v : eps) v = rng.normal();

  UpdateStats stats;
  std::vector<std::vector<double>> targets = compute_targets(buf, idx, next_eps);
  stats.critic_loss = critic_update(buf, idx, targets);
  ActorLosses al = actor_update(buf, idx, eps);
  stats.actor_loss = al.actor;
  stats.aux_loss = al.aux;
  stats.mean_logp = al.mean_logp;
  alpha_update(al.mean_logp);
  stats.alpha = alpha();
  ++grad_steps;
  return stats;
}

// ---------------------------------------------------------------------------
// Training loop

namespace {

std::vector<double> pack_errors(const StepInfo& info) {
  std::vector<double> p;
  p.reserve(2 * kNumPivots + 2);
  p.insert(p.end(), info.delta_p.begin(), info.delta_p.end());
  p.insert(p.end(), info.delta_x.begin(), info.delta_x.end());
  return p;
}

}  // namespace

TrainResult train_agent(const SurrogateEnv& env, TqcAgent& agent,
                        const std::vector<ShapeGoal>& shapes,
                        std::uint64_t seed,
                        const std::string& fault_checkpoint_dir) {
  require(!shapes.empty(), "training needs a non-empty shape dataset");
  require(env.spans().total() == agent.obs_dim &&
              env.config().n_act == agent.n_act,
          "environment and agent disagree on interface widths");

  Rng env_rng = substream(seed, "env");
  Rng noise_rng = substream(seed, "noise");
  Rng mask_rng = substream(seed, "masks");
  Rng action_rng = substream(seed, "actions");
  Rng update_rng = substream(seed, "updates");

  const TqcConfig& cfg = agent.cfg;
  const int chan_dim = agent.obs_dim + agent.priv_dim;
  ReplayBuffer buf(cfg.buffer_capacity);
  TrainResult out;

  try {
    while (agent.env_steps < cfg.total_steps) {
      EnvState st = env.reset(shapes, env_rng);
      MaskSpec mask = sample_mask(env.spans(), cfg.dropout_p, mask_rng);
      std::vector<double> obs = env.observe(st, &noise_rng);
      std::vector<double> priv = pack_errors(env.info_for(st));
      std::vector<double> prev_chan(static_cast<std::size_t>(chan_dim), 0.0);
      std::vector<double> cur_chan(static_cast<std::size_t>(chan_dim));
      std::vector<double> deriv(static_cast<std::size_t>(chan_dim), 0.0);
      std::vector<double> critic_chan(static_cast<std::size_t>(2 * chan_dim));

      double ep_reward = 0.0, ep_dshape = 0.0, ep_dxpt = 0.0;
      std::int64_t ep_steps = 0;

      while (!st.done && agent.env_steps < cfg.total_steps) {
        if (env.maybe_resample_target(st, shapes, env_rng)) {
          env.refresh_goal(obs, st);
          priv = pack_errors(env.info_for(st));
        }
        std::copy(obs.begin(), obs.end(), cur_chan.begin());
        std::copy(priv.begin(), priv.end(), cur_chan.begin() + agent.obs_dim);
        if (st.step_index == 0) {
          std::fill(deriv.begin(), deriv.end(), 0.0);
        } else {
          for (int i = 0; i < chan_dim; ++i)
            deriv[static_cast<std::size_t>(i)] =
                (cur_chan[static_cast<std::size_t>(i)] -
                 prev_chan[static_cast<std::size_t>(i)]) /
                env.config().dt;
        }

        std::vector<double> action(static_cast<std::size_t>(agent.n_act));
        if (agent.env_steps < cfg.warmup_steps) {
          for (double& a : action) a = action_rng.uniform(-1.0, 1.0);
        } else {
          action = agent.act(obs, mask, false, &action_rng);
        }

        // Statistics absorb this step only after it has been acted on.
        agent.actor_norm.update(obs);
        std::copy(cur_chan.begin(), cur_chan.end(), critic_chan.begin());
        std::copy(deriv.begin(), deriv.end(),
                  critic_chan.begin() + chan_dim);
        agent.critic_norm.update(critic_chan);

        StepResult res = env.step(st, action, noise_rng);

        Transition tr;
        tr.obs = obs;
        tr.action = action;
        tr.reward = res.reward;
        tr.done = res.done ? 1.0 : 0.0;
        tr.next_obs = res.obs;
        tr.priv = priv;
        tr.next_priv = pack_errors(res.info);
        tr.deriv = deriv;
        tr.mask = mask;
        buf.push(std::move(tr));

        ++agent.env_steps;
        ep_reward += res.reward;
        ep_dshape += res.info.d_shape;
        ep_dxpt += res.info.d_xpt;
        ++ep_steps;

        if (agent.env_steps >= cfg.warmup_steps) {
          for (int u = 0; u < cfg.updates_per_step; ++u)
            agent.update(buf, update_rng);
        }

        obs = res.obs;
        priv = pack_errors(res.info);
        std::swap(prev_chan, cur_chan);
      }

      EpisodeRecord rec;
      rec.episode = agent.episodes_done;
      rec.steps = agent.env_steps;
      rec.mean_reward = ep_reward / static_cast<double>(ep_steps);
      rec.mean_d_shape = ep_dshape / static_cast<double>(ep_steps);
      rec.mean_d_xpt = ep_dxpt / static_cast<double>(ep_steps);
      rec.eplen = ep_steps;
      rec.mask_fraction = mask.masked_fraction();
      out.episodes.push_back(rec);
      ++agent.episodes_done;
    }
  } catch (const RuntimeFault&) {
    if (!fault_checkpoint_dir.empty())
      save_checkpoint(agent, fault_checkpoint_dir);
    throw;
  }

  out.env_steps = agent.env_steps;
  out.grad_updates = agent.grad_steps;
  return out;
}

void to_json(nlohmann::json& j, const TqcConfig& c) {
  j = nlohmann::json::object();
  j["algorithm"] = c.algorithm;
  j["n_critics"] = c.n_critics;
  j["n_quantiles"] = c.n_quantiles;
  j["drop_per_critic"] = c.drop_per_critic;
  j["gamma"] = c.gamma;
  j["tau"] = c.tau;
  j["batch"] = c.batch;
  j["buffer_capacity"] = c.buffer_capacity;
  j["warmup_steps"] = c.warmup_steps;
  j["updates_per_step"] = c.updates_per_step;
  j["initial_alpha"] = c.initial_alpha;
  j["aux_weight"] = c.aux_weight;
  j["total_steps"] = c.total_steps;
  j["hidden"] = c.hidden;
  j["learning_rate"] = c.learning_rate;
  j["weight_decay"] = c.weight_decay;
  j["alpha_lr"] = c.alpha_lr;
  j["dropout_p"] = c.dropout_p;
  j["normalizer_freeze"] = c.normalizer_freeze;
  j["no_aux"] = c.no_aux;
  j["no_priv"] = c.no_priv;
}

void from_json(const nlohmann::json& j, TqcConfig& c) {
  c.algorithm = j.at("algorithm").get<std::string>();
  c.n_critics = j.at("n_critics").get<int>();
  c.n_quantiles = j.at("n_quantiles").get<int>();
  c.drop_per_critic = j.at("drop_per_critic").get<int>();
  c.gamma = j.at("gamma").get<double>();
  c.tau = j.at("tau").get<double>();
  c.batch = j.at("batch").get<int>();
  c.buffer_capacity = j.at("buffer_capacity").get<std::int64_t>();
  c.warmup_steps = j.at("warmup_steps").get<std::int64_t>();
  c.updates_per_step = j.at("updates_per_step").get<int>();
  c.initial_alpha = j.at("initial_alpha").get<double>();
  c.aux_weight = j.at("aux_weight").get<double>();
  c.total_steps = j.at("total_steps").get<std::int64_t>();
  c.hidden = j.at("hidden").get<std::vector<int>>();
  c.learning_rate = j.at("learning_rate").get<double>();
  c.weight_decay = j.at("weight_decay").get<double>();
  c.alpha_lr = j.at("alpha_lr").get<double>();
  c.dropout_p = j.at("dropout_p").get<double>();
  c.normalizer_freeze = j.at("normalizer_freeze").get<std::int64_t>();
  c.no_aux = j.at("no_aux").get<bool>();
  c.no_priv = j.at("no_priv").get<bool>();
}

void write_metrics_csv(const std::string& path,
                       const std::vector<EpisodeRecord>& episodes) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw ValidationError("cannot open metrics file: " + path);
  f << "episode,steps,mean_reward,mean_d_shape_m,mean_d_xpt_m,eplen,"
       "mask_fraction\n";
  char num[32];
  auto put = [&](double v) {
    std::snprintf(num, sizeof num, "%.17g", v);
    f << num;
  };
  for (const EpisodeRecord& r : episodes) {
    f << r.episode << ',' << r.steps << ',';
    put(r.mean_reward);
    f << ',';
    put(r.mean_d_shape);
    f << ',';
    put(r.mean_d_xpt);
    f << ',' << r.eplen << ',';
    put(r.mask_fraction);
    f << '\n';
  }
  if (!f) throw RuntimeFault("failed writing metrics file: " + path);
}

}  // namespace shaperl
