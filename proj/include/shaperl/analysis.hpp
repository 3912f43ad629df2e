#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "shaperl/env.hpp"
#include "shaperl/linalg.hpp"
#include "shaperl/pipeline.hpp"
#include "shaperl/tqc.hpp"

namespace shaperl {

// ---------------------------------------------------------------------------
// Policy evaluation

// Fixed-length evaluation episodes with each dataset shape held as the
// target.  Metrics average over the settled window -- the steps after the
// first ceil(0.05 / dt) of an episode -- so transients right after a target
// change do not pollute the comparison.  The reconstruction columns compare
// the trunk's pivot-error prediction against the simulator's ground truth on
// the same steps (zero_mse is the all-zeros predictor on identical data).
struct ShapeEval {
  int shape = 0;  // dataset index of the held target
  double mean_reward = 0.0;
  double mean_d_shape = 0.0;  // m
  double mean_d_xpt = 0.0;    // m
  double aux_mse = 0.0;
  double zero_mse = 0.0;
};

struct EvalConfig {
  int episodes_per_shape = 1;
  int episode_len = 250;       // steps per evaluation episode
  bool random_policy = false;  // uniform actions instead of the agent
  int workers = 1;             // shapes fan out across this many threads
};

struct EvalSummary {
  std::vector<ShapeEval> rows;  // one per dataset shape, in dataset order
  double mean_reward = 0.0;     // unweighted means over rows
  double mean_d_shape = 0.0;
  double mean_d_xpt = 0.0;
  double std_reward = 0.0;  // sample deviation across rows
  double std_d_shape = 0.0;
  double std_d_xpt = 0.0;
  double aux_mse = 0.0;
  double zero_mse = 0.0;
};

// Deterministic for a given seed regardless of worker count: every
// (shape, episode) pair draws from its own named substream and rows
// aggregate in dataset order.
EvalSummary evaluate_policy(const SurrogateEnv& env, const TqcAgent& agent,
                            const std::vector<ShapeGoal>& dataset,
                            const MaskSpec& mask, const EvalConfig& eval_cfg,
                            std::uint64_t seed);

// Raw observations gathered from deterministic-policy rollouts on targets
// drawn from the dataset; the feed for the sensitivity expectation.
std::vector<std::vector<double>> collect_states(
    const SurrogateEnv& env, const TqcAgent& agent,
    const std::vector<ShapeGoal>& dataset, const MaskSpec& mask,
    std::int64_t n_states, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Gradient sensitivity

// Per-channel importance of the observation inputs to the trunk's
// pivot-error prediction: the expectation over states of the Euclidean norm
// of each input channel's partials across all prediction components.
// Computed in standardized-input space with every channel present.
struct SensitivityReport {
  std::vector<double> score;        // one per observation channel, >= 0
  std::vector<std::string> labels;  // channel_label() per channel
  std::int64_t n_states = 0;
};

SensitivityReport gradient_sensitivity(
    const TqcAgent& agent, const std::vector<std::vector<double>>& states);

// "probe_03", "loop_11", "coil_00", "ip", "goal_R_c", ...
std::string channel_label(const ObsSpans& spans, int channel);

// ---------------------------------------------------------------------------
// Sensor selection

// Keeps the K highest-scoring maskable channels, split across probes and
// loops in proportion to their counts (probes rounded to nearest first, the
// remainder going to loops); ties break toward the lower channel index.
// The returned mask has dropout_p = 0; callers set the rescale rate their
// deployment convention requires.
MaskSpec topk_proportional(const std::vector<double>& score,
                           const ObsSpans& spans, int K);

// Random mask with the same proportional split, for selection baselines.
MaskSpec random_k_mask(const ObsSpans& spans, int K, Rng& rng);

// Disables a seeded uniform subset of n_disabled maskable channels -- the
// fixed "deployment" outage pattern shared by robustness comparisons.
MaskSpec fixed_disabled_mask(const ObsSpans& spans, int n_disabled,
                             std::uint64_t seed);

// ---------------------------------------------------------------------------
// Rank statistics

// Spearman rank correlation with average ranks for ties.  Zero rank
// variance on either side yields NaN (the undefined case is reported, not
// masked).
double spearman(const std::vector<double>& a, const std::vector<double>& b);

// Pairwise Spearman of score vectors restricted to `subset` (empty = all
// channels).  Symmetric with unit diagonal by construction.
Matrix spearman_matrix(const std::vector<std::vector<double>>& scores,
                       const std::vector<int>& subset);

// Indices of the n channels with the highest mean score across the given
// score vectors; the shared subset for "top channel" stability matrices.
std::vector<int> top_channels_by_mean(
    const std::vector<std::vector<double>>& scores, int n);

// ---------------------------------------------------------------------------
// Report files

void write_eval_csv(const std::string& path, const EvalSummary& summary);
void write_sensitivity_csv(const std::string& path,
                           const SensitivityReport& report);
nlohmann::json rank_matrix_json(const std::vector<double>& p_values,
                                const Matrix& m);

}  // namespace shaperl
