#include "shaperl/pipeline.hpp"

#include <cmath>

#include "shaperl/errors.hpp"

namespace shaperl {

Normalizer::Normalizer(int dim, std::int64_t freeze_after)
    : mean_(dim, 0.0), m2_(dim, 0.0), freeze_after_(freeze_after) {
  if (dim < 1) throw ValidationError("normalizer: dim must be >= 1");
}

void Normalizer::update(std::span<const double> x) {
  if (static_cast<int>(x.size()) != dim())
    throw ValidationError("normalizer: dimension mismatch");
  for (double v : x)
    if (!std::isfinite(v))
      throw ValidationError("normalizer: non-finite input");
  if (frozen()) return;
  ++count_;
  const double inv_n = 1.0 / static_cast<double>(count_);
  for (int i = 0; i < dim(); ++i) {
    const double delta = x[i] - mean_[i];
    mean_[i] += delta * inv_n;
    m2_[i] += delta * (x[i] - mean_[i]);
  }
}

double Normalizer::stddev(int i) const {
  if (count_ < 2) return 0.0;
  return std::sqrt(m2_[i] / static_cast<double>(count_ - 1));
}

std::vector<double> Normalizer::standardize(std::span<const double> x) const {
  std::vector<double> out(x.begin(), x.end());
  standardize_inplace(out);
  return out;
}

void Normalizer::standardize_inplace(std::span<double> x) const {
  if (static_cast<int>(x.size()) != dim())
    throw ValidationError("normalizer: dimension mismatch");
  if (count_ < 2) {
    // Not enough samples for a scale estimate; just center on what we have.
    for (int i = 0; i < dim(); ++i) x[i] -= mean_[i];
    return;
  }
  const double inv_nm1 = 1.0 / static_cast<double>(count_ - 1);
  for (int i = 0; i < dim(); ++i) {
    const double sd = std::sqrt(m2_[i] * inv_nm1);
    x[i] = (x[i] - mean_[i]) / std::max(sd, 1e-6);
  }
}

void Normalizer::to_json(nlohmann::json& j) const {
  j = nlohmann::json::object();
  j["count"] = count_;
  j["freeze_after"] = freeze_after_;
  j["mean"] = mean_;
  j["m2"] = m2_;
}

Normalizer Normalizer::from_json(const nlohmann::json& j) {
  Normalizer n;
  n.count_ = j.at("count").get<std::int64_t>();
  n.freeze_after_ = j.at("freeze_after").get<std::int64_t>();
  n.mean_ = j.at("mean").get<std::vector<double>>();
  n.m2_ = j.at("m2").get<std::vector<double>>();
  if (n.mean_.size() != n.m2_.size())
    throw ValidationError("normalizer: mean/m2 size mismatch in file");
  return n;
}

int MaskSpec::n_masked() const {
  int n = 0;
  for (auto k : keep)
    if (!k) ++n;
  return n;
}

double MaskSpec::masked_fraction() const {
  if (keep.empty()) return 0.0;
  return static_cast<double>(n_masked()) / static_cast<double>(keep.size());
}

static void check_p(double p) {
  if (!(p >= 0.0 && p < 1.0))
    throw ValidationError("dropout: p must be in [0, 1)");
}

MaskSpec sample_mask(const ObsSpans& spans, double dropout_p, Rng& rng) {
  check_p(dropout_p);
  MaskSpec m;
  m.dropout_p = dropout_p;
  m.keep.resize(spans.maskable());
  for (auto& k : m.keep) k = rng.bernoulli(dropout_p) ? 0 : 1;
  return m;
}

MaskSpec full_mask(const ObsSpans& spans, double dropout_p) {
  check_p(dropout_p);
  MaskSpec m;
  m.dropout_p = dropout_p;
  m.keep.assign(spans.maskable(), 1);
  return m;
}

void apply_mask_inplace(std::span<double> standardized_obs, const MaskSpec& mask,
                        const ObsSpans& spans) {
  if (static_cast<int>(standardized_obs.size()) != spans.total())
    throw ValidationError("apply_mask: observation length mismatch");
  if (static_cast<int>(mask.keep.size()) != spans.maskable())
    throw ValidationError("apply_mask: mask length mismatch");
  check_p(mask.dropout_p);
  const double scale = 1.0 / (1.0 - mask.dropout_p);
  for (int i = 0; i < spans.maskable(); ++i) {
    if (mask.keep[i])
      standardized_obs[i] *= scale;
    else
      standardized_obs[i] = 0.0;
  }
}

void add_observation_noise(std::span<double> raw_obs, const NoiseConfig& noise,
                           const ObsSpans& spans, Rng& rng) {
  if (static_cast<int>(raw_obs.size()) != spans.total())
    throw ValidationError("observation noise: length mismatch");
  for (int i = 0; i < spans.n_probes; ++i)
    raw_obs[spans.probes_begin() + i] += noise.probe_sigma * rng.normal();
  for (int i = 0; i < spans.n_loops; ++i)
    raw_obs[spans.loops_begin() + i] += noise.loop_sigma * rng.normal();
  for (int i = 0; i < spans.n_coils; ++i)
    raw_obs[spans.coils_begin() + i] += noise.coil_sigma * rng.normal();
}

void to_json(nlohmann::json& j, const MaskSpec& m) {
  j = nlohmann::json::object();
  j["dropout_p"] = m.dropout_p;
  j["keep"] = nlohmann::json::array();
  for (auto k : m.keep) j["keep"].push_back(static_cast<int>(k));
}

void from_json(const nlohmann::json& j, MaskSpec& m) {
  m.dropout_p = j.at("dropout_p").get<double>();
  m.keep.clear();
  for (const auto& v : j.at("keep")) {
    const int k = v.get<int>();
    if (k != 0 && k != 1) throw ValidationError("mask file: keep entries must be 0/1");
    m.keep.push_back(static_cast<std::uint8_t>(k));
  }
}

void to_json(nlohmann::json& j, const NoiseConfig& n) {
  j = {{"probe_sigma", n.probe_sigma},
       {"loop_sigma", n.loop_sigma},
       {"coil_sigma", n.coil_sigma}};
}

void from_json(const nlohmann::json& j, NoiseConfig& n) {
  n.probe_sigma = j.at("probe_sigma").get<double>();
  n.loop_sigma = j.at("loop_sigma").get<double>();
  n.coil_sigma = j.at("coil_sigma").get<double>();
}

}  // namespace shaperl
