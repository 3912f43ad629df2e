#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include <json.hpp>

#include "shaperl/layout.hpp"
#include "shaperl/rng.hpp"

namespace shaperl {

// Per-channel running standardizer (Welford).  Statistics stop updating
// after `freeze_after` updates so the input distribution seen by the nets
// stays fixed for the rest of a long run.
class Normalizer {
 public:
  Normalizer() = default;
  Normalizer(int dim, std::int64_t freeze_after);

  // One sample; no-op once frozen.  Rejects non-finite input.
  void update(std::span<const double> x);
  // (x - mean) / max(std, 1e-6).  With fewer than two samples the scale
  // falls back to 1 so early steps stay bounded.
  std::vector<double> standardize(std::span<const double> x) const;
  void standardize_inplace(std::span<double> x) const;

  int dim() const { return static_cast<int>(mean_.size()); }
  std::int64_t count() const { return count_; }
  bool frozen() const { return freeze_after_ >= 0 && count_ >= freeze_after_; }
  double mean(int i) const { return mean_[i]; }
  double stddev(int i) const;

  void to_json(nlohmann::json& j) const;
  static Normalizer from_json(const nlohmann::json& j);

 private:
  std::vector<double> mean_;
  std::vector<double> m2_;
  std::int64_t count_ = 0;
  std::int64_t freeze_after_ = -1;  // -1 = never freeze
};

// Per-episode dropout pattern over the maskable channels (probes then
// loops, in observation order).  keep[i] == 0 means the channel reads as
// missing for the whole episode.
struct MaskSpec {
  std::vector<std::uint8_t> keep;
  double dropout_p = 0.0;

  int n_masked() const;
  double masked_fraction() const;
};

// Bernoulli(p) drop per maskable channel.
MaskSpec sample_mask(const ObsSpans& spans, double dropout_p, Rng& rng);
// All channels present (rescale still uses dropout_p, matching deployment).
MaskSpec full_mask(const ObsSpans& spans, double dropout_p);

// Applies the mask to a *standardized* observation: masked channels become
// exactly 0 (the mean in raw units), surviving maskable channels are scaled
// by 1/(1-p).  Channels outside the maskable block are untouched.  There is
// no indicator channel.
void apply_mask_inplace(std::span<double> standardized_obs, const MaskSpec& mask,
                        const ObsSpans& spans);

struct NoiseConfig {
  double probe_sigma = 1e-5;  // tesla
  double loop_sigma = 1e-5;   // weber
  double coil_sigma = 100.0;  // ampere
};

// Additive Gaussian noise on the physical sensor channels, in raw units.
// The plasma-current and goal channels stay noiseless.
void add_observation_noise(std::span<double> raw_obs, const NoiseConfig& noise,
                           const ObsSpans& spans, Rng& rng);

void to_json(nlohmann::json& j, const MaskSpec& m);
void from_json(const nlohmann::json& j, MaskSpec& m);
void to_json(nlohmann::json& j, const NoiseConfig& n);
void from_json(const nlohmann::json& j, NoiseConfig& n);

}  // namespace shaperl
