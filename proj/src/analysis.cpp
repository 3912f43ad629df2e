#include "shaperl/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <exception>
#include <fstream>
#include <limits>
#include <numeric>
#include <thread>

#include "shaperl/errors.hpp"
#include "shaperl/geometry.hpp"
#include "shaperl/nn.hpp"

namespace shaperl {

namespace {

void require(bool ok, const std::string& msg) {
  if (!ok) throw ValidationError(msg);
}

// Trunk + reconstruction head forward on one standardized input row.
std::vector<double> predict_errors(const TqcAgent& agent,
                                   const std::vector<double>& x) {
  Mlp::Cache tc, ac;
  std::vector<double> z, pred;
  agent.trunk.forward(agent.trunk_p, x.data(), 1, tc, z);
  agent.aux_head.forward(agent.aux_p, z.data(), 1, ac, pred);
  return pred;
}

struct EpisodeAccum {
  double reward = 0.0, d_shape = 0.0, d_xpt = 0.0;
  double aux = 0.0, zero = 0.0;
  std::int64_t steps = 0;

  void add(const EpisodeAccum& other) {
    reward += other.reward;
    d_shape += other.d_shape;
    d_xpt += other.d_xpt;
    aux += other.aux;
    zero += other.zero;
    steps += other.steps;
  }
};

// One evaluation episode with shape `target_idx` held as the target.
// Everything random comes from the episode's own substream, so rows do not
// depend on scheduling.  `settled` collects steps past the transient
// window; `all` collects every step as the fallback when an episode ends
// before the window opens.
void run_episode(const SurrogateEnv& env, const TqcAgent& agent,
                 const std::vector<ShapeGoal>& dataset, const MaskSpec& mask,
                 const EvalConfig& eval_cfg, std::uint64_t seed,
                 int target_idx, int episode, EpisodeAccum& settled,
                 EpisodeAccum& all) {
  const EnvConfig& cfg = env.config();
  Rng er = substream(seed, "eval/" + std::to_string(target_idx) + "/" +
                               std::to_string(episode));
  const ShapeGoal& init =
      dataset[(static_cast<std::size_t>(target_idx) + 1 +
               static_cast<std::size_t>(episode)) %
              dataset.size()];
  const double ip =
      cfg.ip_nominal * (1.0 + cfg.ip_band * er.uniform(-1.0, 1.0));
  const double bus = cfg.bus_nominal + cfg.bus_jitter * er.uniform(-1.0, 1.0);
  EnvState st = env.reset_to(init, dataset[static_cast<std::size_t>(target_idx)],
                             ip, bus);
  std::vector<double> obs = env.observe(st, &er);

  const int skip = static_cast<int>(std::ceil(0.05 / cfg.dt));
  std::vector<double> action(static_cast<std::size_t>(agent.n_act));
  for (int k = 0; k < eval_cfg.episode_len && !st.done; ++k) {
    if (eval_cfg.random_policy) {
      for (double& a : action) a = er.uniform(-1.0, 1.0);
    } else {
      action = agent.act(obs, mask, true, nullptr);
    }
    const StepResult res = env.step(st, action, er);

    EpisodeAccum line;
    line.reward = res.reward;
    line.d_shape = res.info.d_shape;
    line.d_xpt = res.info.d_xpt;
    const std::vector<double> pred =
        predict_errors(agent, agent.actor_input(res.obs, mask));
    for (std::size_t i = 0; i < pred.size(); ++i) {
      const double truth = res.info.delta_p[i];
      line.aux += (pred[i] - truth) * (pred[i] - truth);
      line.zero += truth * truth;
    }
    line.steps = 1;

    all.add(line);
    if (st.step_index > skip) settled.add(line);
    obs = res.obs;
  }
}

void eval_one_shape(const SurrogateEnv& env, const TqcAgent& agent,
                    const std::vector<ShapeGoal>& dataset,
                    const MaskSpec& mask, const EvalConfig& eval_cfg,
                    std::uint64_t seed, int target_idx, ShapeEval& row) {
  EpisodeAccum settled, all;
  for (int e = 0; e < eval_cfg.episodes_per_shape; ++e)
    run_episode(env, agent, dataset, mask, eval_cfg, seed, target_idx, e,
                settled, all);
  // Episodes that end inside the transient window still need defined
  // metrics; fall back to the full-episode average.
  const EpisodeAccum& use = settled.steps > 0 ? settled : all;
  const double n = static_cast<double>(use.steps);
  row.shape = target_idx;
  row.mean_reward = use.reward / n;
  row.mean_d_shape = use.d_shape / n;
  row.mean_d_xpt = use.d_xpt / n;
  row.aux_mse = use.aux / n;
  row.zero_mse = use.zero / n;
}

double sample_std(const std::vector<double>& v, double mean) {
  if (v.size() < 2) return 0.0;
  double acc = 0.0;
  for (double x : v) acc += (x - mean) * (x - mean);
  return std::sqrt(acc / static_cast<double>(v.size() - 1));
}

}  // namespace

EvalSummary evaluate_policy(const SurrogateEnv& env, const TqcAgent& agent,
                            const std::vector<ShapeGoal>& dataset,
                            const MaskSpec& mask, const EvalConfig& eval_cfg,
                            std::uint64_t seed) {
  require(!dataset.empty(), "evaluation needs a non-empty shape dataset");
  require(eval_cfg.episodes_per_shape >= 1,
          "episodes_per_shape must be >= 1");
  require(eval_cfg.episode_len >= 1, "episode_len must be >= 1");
  require(env.spans().total() == agent.obs_dim &&
              env.config().n_act == agent.n_act,
          "environment and agent disagree on interface widths");

  EvalSummary out;
  out.rows.resize(dataset.size());
  const int n_shapes = static_cast<int>(dataset.size());
  const int workers =
      std::max(1, std::min(eval_cfg.workers, n_shapes));

  if (workers == 1) {
    for (int i = 0; i < n_shapes; ++i)
      eval_one_shape(env, agent, dataset, mask, eval_cfg, seed, i,
                     out.rows[static_cast<std::size_t>(i)]);
  } else {
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> faults(static_cast<std::size_t>(workers));
    for (int w = 0; w < workers; ++w) {
      pool.emplace_back([&, w]() {
        try {
          for (int i = w; i < n_shapes; i += workers)
            eval_one_shape(env, agent, dataset, mask, eval_cfg, seed, i,
                           out.rows[static_cast<std::size_t>(i)]);
        } catch (...) {
          faults[static_cast<std::size_t>(w)] = std::current_exception();
        }
      });
    }
    for (auto& t : pool) t.join();
    for (const auto& f : faults)
      if (f) std::rethrow_exception(f);
  }

  std::vector<double> rewards, dshapes, dxpts;
  for (const ShapeEval& r : out.rows) {
    rewards.push_back(r.mean_reward);
    dshapes.push_back(r.mean_d_shape);
    dxpts.push_back(r.mean_d_xpt);
    out.aux_mse += r.aux_mse;
    out.zero_mse += r.zero_mse;
  }
  const double n = static_cast<double>(out.rows.size());
  out.mean_reward = std::accumulate(rewards.begin(), rewards.end(), 0.0) / n;
  out.mean_d_shape = std::accumulate(dshapes.begin(), dshapes.end(), 0.0) / n;
  out.mean_d_xpt = std::accumulate(dxpts.begin(), dxpts.end(), 0.0) / n;
  out.std_reward = sample_std(rewards, out.mean_reward);
  out.std_d_shape = sample_std(dshapes, out.mean_d_shape);
  out.std_d_xpt = sample_std(dxpts, out.mean_d_xpt);
  out.aux_mse /= n;
  out.zero_mse /= n;
  return out;
}

std::vector<std::vector<double>> collect_states(
    const SurrogateEnv& env, const TqcAgent& agent,
    const std::vector<ShapeGoal>& dataset, const MaskSpec& mask,
    std::int64_t n_states, std::uint64_t seed) {
  require(!dataset.empty(), "state collection needs a non-empty dataset");
  require(n_states >= 0, "n_states must be >= 0");
  std::vector<std::vector<double>> states;
  states.reserve(static_cast<std::size_t>(n_states));
  Rng rng = substream(seed, "collect");
  while (static_cast<std::int64_t>(states.size()) < n_states) {
    EnvState st = env.reset(dataset, rng);
    std::vector<double> obs = env.observe(st, &rng);
    while (!st.done &&
           static_cast<std::int64_t>(states.size()) < n_states) {
      states.push_back(obs);
      const std::vector<double> action = agent.act(obs, mask, true, nullptr);
      const StepResult res = env.step(st, action, rng);
      obs = res.obs;
    }
  }
  return states;
}

// ---------------------------------------------------------------------------
// Gradient sensitivity

SensitivityReport gradient_sensitivity(
    const TqcAgent& agent, const std::vector<std::vector<double>>& states) {
  require(!states.empty(), "sensitivity needs at least one state");
  const int obs_dim = agent.obs_dim;
  const int batch = static_cast<int>(states.size());
  const int out_dim = agent.aux_head.spec().out_dim;

  // Standardize once; every channel stays present (no mask, no rescale).
  std::vector<double> x(static_cast<std::size_t>(batch) * obs_dim);
  for (int b = 0; b < batch; ++b) {
    const auto& s = states[static_cast<std::size_t>(b)];
    require(static_cast<int>(s.size()) == obs_dim,
            "state width does not match the agent");
    const std::vector<double> std_row = agent.actor_norm.standardize(s);
    std::copy(std_row.begin(), std_row.end(),
              x.begin() + static_cast<std::size_t>(b) * obs_dim);
  }

  Mlp::Cache tc, ac;
  std::vector<double> z, pred;
  agent.trunk.forward(agent.trunk_p, x.data(), batch, tc, z);
  agent.aux_head.forward(agent.aux_p, z.data(), batch, ac, pred);

  // One backward pass per prediction component accumulates the squared
  // input partials; the score is the mean over states of the per-channel
  // Euclidean norm across components.
  std::vector<double> sq(static_cast<std::size_t>(batch) * obs_dim, 0.0);
  std::vector<double> dy(static_cast<std::size_t>(batch) * out_dim);
  std::vector<double> dz(z.size());
  std::vector<double> dx(static_cast<std::size_t>(batch) * obs_dim);
  std::vector<double> scratch_aux(agent.aux_p.size());
  std::vector<double> scratch_trunk(agent.trunk_p.size());
  for (int k = 0; k < out_dim; ++k) {
    std::fill(dy.begin(), dy.end(), 0.0);
    for (int b = 0; b < batch; ++b)
      dy[static_cast<std::size_t>(b) * out_dim + k] = 1.0;
    std::fill(scratch_aux.begin(), scratch_aux.end(), 0.0);
    std::fill(scratch_trunk.begin(), scratch_trunk.end(), 0.0);
    agent.aux_head.backward(agent.aux_p, ac, dy.data(), scratch_aux,
                            dz.data());
    agent.trunk.backward(agent.trunk_p, tc, dz.data(), scratch_trunk,
                         dx.data());
    for (std::size_t i = 0; i < sq.size(); ++i) sq[i] += dx[i] * dx[i];
  }

  SensitivityReport report;
  report.n_states = batch;
  report.score.assign(static_cast<std::size_t>(obs_dim), 0.0);
  for (int b = 0; b < batch; ++b)
    for (int i = 0; i < obs_dim; ++i)
      report.score[static_cast<std::size_t>(i)] +=
          std::sqrt(sq[static_cast<std::size_t>(b) * obs_dim + i]);
  for (double& s : report.score) s /= static_cast<double>(batch);
  report.labels.reserve(static_cast<std::size_t>(obs_dim));
  for (int i = 0; i < obs_dim; ++i)
    report.labels.push_back(channel_label(agent.spans, i));
  return report;
}

std::string channel_label(const ObsSpans& spans, int channel) {
  require(channel >= 0 && channel < spans.total(),
          "channel index out of range");
  char buf[32];
  const int local = spans.local_index(channel);
  switch (spans.type_of(channel)) {
    case ChannelType::kProbe:
      std::snprintf(buf, sizeof buf, "probe_%02d", local);
      return buf;
    case ChannelType::kLoop:
      std::snprintf(buf, sizeof buf, "loop_%02d", local);
      return buf;
    case ChannelType::kCoil:
      std::snprintf(buf, sizeof buf, "coil_%02d", local);
      return buf;
    case ChannelType::kPlasmaCurrent:
      return "ip";
    case ChannelType::kGoal:
      return std::string("goal_") + goal_field_names()[static_cast<std::size_t>(local)];
  }
  throw ValidationError("channel index out of range");
}

// ---------------------------------------------------------------------------
// Sensor selection

namespace {

// Probe share of K, rounded to nearest and clamped so the loop share stays
// feasible.
int probe_share(const ObsSpans& spans, int K) {
  const double ideal = static_cast<double>(K) * spans.n_probes /
                       static_cast<double>(spans.maskable());
  int probes = static_cast<int>(std::lround(ideal));
  probes = std::min(probes, std::min(spans.n_probes, K));
  probes = std::max(probes, std::max(0, K - spans.n_loops));
  return probes;
}

// Highest-score channel indices from [begin, begin + count), ties toward
// the lower index.
std::vector<int> top_of_type(const std::vector<double>& score, int begin,
                             int count, int want) {
  std::vector<int> idx(static_cast<std::size_t>(count));
  std::iota(idx.begin(), idx.end(), begin);
  std::stable_sort(idx.begin(), idx.end(), [&](int a, int b) {
    return score[static_cast<std::size_t>(a)] >
           score[static_cast<std::size_t>(b)];
  });
  idx.resize(static_cast<std::size_t>(want));
  return idx;
}

}  // namespace

MaskSpec topk_proportional(const std::vector<double>& score,
                           const ObsSpans& spans, int K) {
  require(K >= 1 && K <= spans.maskable(),
          "K must be between 1 and the maskable channel count");
  require(static_cast<int>(score.size()) == spans.total(),
          "score vector must cover every observation channel");
  const int probes = probe_share(spans, K);
  const int loops = K - probes;

  MaskSpec mask;
  mask.dropout_p = 0.0;
  mask.keep.assign(static_cast<std::size_t>(spans.maskable()), 0);
  for (int i : top_of_type(score, spans.probes_begin(), spans.n_probes, probes))
    mask.keep[static_cast<std::size_t>(i)] = 1;
  for (int i : top_of_type(score, spans.loops_begin(), spans.n_loops, loops))
    mask.keep[static_cast<std::size_t>(i)] = 1;
  return mask;
}

MaskSpec random_k_mask(const ObsSpans& spans, int K, Rng& rng) {
  require(K >= 1 && K <= spans.maskable(),
          "K must be between 1 and the maskable channel count");
  const int probes = probe_share(spans, K);
  const int loops = K - probes;

  auto pick = [&rng](int begin, int count, int want) {
    std::vector<int> idx(static_cast<std::size_t>(count));
    std::iota(idx.begin(), idx.end(), begin);
    for (int i = 0; i < want; ++i) {
      const std::size_t j =
          static_cast<std::size_t>(i) +
          rng.uniform_int(static_cast<std::uint64_t>(count - i));
      std::swap(idx[static_cast<std::size_t>(i)], idx[j]);
    }
    idx.resize(static_cast<std::size_t>(want));
    return idx;
  };

  MaskSpec mask;
  mask.dropout_p = 0.0;
  mask.keep.assign(static_cast<std::size_t>(spans.maskable()), 0);
  for (int i : pick(spans.probes_begin(), spans.n_probes, probes))
    mask.keep[static_cast<std::size_t>(i)] = 1;
  for (int i : pick(spans.loops_begin(), spans.n_loops, loops))
    mask.keep[static_cast<std::size_t>(i)] = 1;
  return mask;
}

MaskSpec fixed_disabled_mask(const ObsSpans& spans, int n_disabled,
                             std::uint64_t seed) {
  require(n_disabled >= 0 && n_disabled <= spans.maskable(),
          "disabled count must be between 0 and the maskable channel count");
  Rng rng = substream(seed, "fixed_mask");
  std::vector<int> idx(static_cast<std::size_t>(spans.maskable()));
  std::iota(idx.begin(), idx.end(), 0);
  for (int i = 0; i < n_disabled; ++i) {
    const std::size_t j =
        static_cast<std::size_t>(i) +
        rng.uniform_int(static_cast<std::uint64_t>(spans.maskable() - i));
    std::swap(idx[static_cast<std::size_t>(i)], idx[j]);
  }
  MaskSpec mask;
  mask.dropout_p = 0.0;
  mask.keep.assign(static_cast<std::size_t>(spans.maskable()), 1);
  for (int i = 0; i < n_disabled; ++i)
    mask.keep[static_cast<std::size_t>(idx[static_cast<std::size_t>(i)])] = 0;
  return mask;
}

// ---------------------------------------------------------------------------
// Rank statistics

namespace {

// Average ranks (1-based) with ties sharing the mean of their positions.
std::vector<double> average_ranks(const std::vector<double>& v) {
  const std::size_t n = v.size();
  std::vector<std::size_t> ord(n);
  std::iota(ord.begin(), ord.end(), 0);
  std::stable_sort(ord.begin(), ord.end(),
                   [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> r(n);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && v[ord[j + 1]] == v[ord[i]]) ++j;
    const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) r[ord[k]] = avg;
    i = j + 1;
  }
  return r;
}

}  // namespace

double spearman(const std::vector<double>& a, const std::vector<double>& b) {
  require(a.size() == b.size(), "rank correlation needs equal lengths");
  require(a.size() >= 2, "rank correlation needs at least two entries");
  const std::vector<double> ra = average_ranks(a);
  const std::vector<double> rb = average_ranks(b);
  const double n = static_cast<double>(a.size());
  double ma = 0.0, mb = 0.0;
  for (std::size_t i = 0; i < ra.size(); ++i) {
    ma += ra[i];
    mb += rb[i];
  }
  ma /= n;
  mb /= n;
  double cov = 0.0, va = 0.0, vb = 0.0;
  for (std::size_t i = 0; i < ra.size(); ++i) {
    const double da = ra[i] - ma;
    const double db = rb[i] - mb;
    cov += da * db;
    va += da * da;
    vb += db * db;
  }
  if (va == 0.0 || vb == 0.0)
    return std::numeric_limits<double>::quiet_NaN();
  return cov / std::sqrt(va * vb);
}

Matrix spearman_matrix(const std::vector<std::vector<double>>& scores,
                       const std::vector<int>& subset) {
  require(!scores.empty(), "rank matrix needs at least one score vector");
  const int m = static_cast<int>(scores.size());
  auto restricted = [&](int which) {
    const auto& full = scores[static_cast<std::size_t>(which)];
    if (subset.empty()) return full;
    std::vector<double> sub;
    sub.reserve(subset.size());
    for (int i : subset) {
      require(i >= 0 && i < static_cast<int>(full.size()),
              "subset index out of range");
      sub.push_back(full[static_cast<std::size_t>(i)]);
    }
    return sub;
  };
  Matrix rho(m, m);
  for (int i = 0; i < m; ++i) {
    rho(i, i) = 1.0;
    const std::vector<double> si = restricted(i);
    for (int j = i + 1; j < m; ++j) {
      const double r = spearman(si, restricted(j));
      rho(i, j) = r;
      rho(j, i) = r;
    }
  }
  return rho;
}

std::vector<int> top_channels_by_mean(
    const std::vector<std::vector<double>>& scores, int n) {
  require(!scores.empty(), "top-channel selection needs score vectors");
  const std::size_t dim = scores[0].size();
  for (const auto& s : scores)
    require(s.size() == dim, "score vectors must share a length");
  std::vector<double> mean(dim, 0.0);
  for (const auto& s : scores)
    for (std::size_t i = 0; i < dim; ++i) mean[i] += s[i];
  std::vector<int> idx(dim);
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](int a, int b) {
    return mean[static_cast<std::size_t>(a)] >
           mean[static_cast<std::size_t>(b)];
  });
  idx.resize(static_cast<std::size_t>(
      std::min<std::size_t>(static_cast<std::size_t>(std::max(n, 0)), dim)));
  std::sort(idx.begin(), idx.end());
  return idx;
}

// ---------------------------------------------------------------------------
// Report files

void write_eval_csv(const std::string& path, const EvalSummary& summary) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw ValidationError("cannot open evaluation file: " + path);
  f << "shape,mean_reward,mean_d_shape_m,mean_d_xpt_m,aux_mse,zero_mse\n";
  char num[32];
  auto put = [&](double v) {
    std::snprintf(num, sizeof num, "%.17g", v);
    f << num;
  };
  for (const ShapeEval& r : summary.rows) {
    f << r.shape << ',';
    put(r.mean_reward);
    f << ',';
    put(r.mean_d_shape);
    f << ',';
    put(r.mean_d_xpt);
    f << ',';
    put(r.aux_mse);
    f << ',';
    put(r.zero_mse);
    f << '\n';
  }
  if (!f) throw RuntimeFault("failed writing evaluation file: " + path);
}

void write_sensitivity_csv(const std::string& path,
                           const SensitivityReport& report) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw ValidationError("cannot open sensitivity file: " + path);
  f << "channel,label,score\n";
  char num[32];
  for (std::size_t i = 0; i < report.score.size(); ++i) {
    std::snprintf(num, sizeof num, "%.17g", report.score[i]);
    f << i << ',' << report.labels[i] << ',' << num << '\n';
  }
  if (!f) throw RuntimeFault("failed writing sensitivity file: " + path);
}

nlohmann::json rank_matrix_json(const std::vector<double>& p_values,
                                const Matrix& m) {
  nlohmann::json j;
  j["p"] = p_values;
  nlohmann::json rows = nlohmann::json::array();
  for (int i = 0; i < m.rows; ++i) {
    nlohmann::json row = nlohmann::json::array();
    for (int k = 0; k < m.cols; ++k) row.push_back(m(i, k));
    rows.push_back(row);
  }
  j["rho"] = rows;
  return j;
}

}  // namespace shaperl
