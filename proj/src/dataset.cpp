#include "shaperl/dataset.hpp"

#include <cmath>
#include <fstream>

#include "shaperl/errors.hpp"

namespace shaperl {

namespace {

// Reflect a walker coordinate back into [0, 1].
double reflect_unit(double x) {
  // A large excursion can bounce more than once.
  for (int guard = 0; guard < 64; ++guard) {
    if (x < 0.0)
      x = -x;
    else if (x > 1.0)
      x = 2.0 - x;
    else
      return x;
  }
  throw RuntimeFault("corpus walk: reflection failed to converge");
}

ShapeGoal goal_at(const std::array<double, kGoalDim>& unit,
                  const ShapeEnvelope& envelope, double margin) {
  std::array<double, kGoalDim> v;
  for (int i = 0; i < kGoalDim; ++i) {
    const double lo = envelope.lo[i] + margin;
    const double hi = envelope.hi[i] - margin;
    v[i] = lo + unit[i] * (hi - lo);
  }
  return goal_from_array(v);
}

}  // namespace

std::vector<ShapeGoal> generate_corpus(int n, std::uint64_t seed,
                                       const ShapeEnvelope& envelope,
                                       double walk_step) {
  if (n < 1) throw ValidationError("corpus: n must be >= 1");
  if (!(walk_step > 0.0) || !std::isfinite(walk_step))
    throw ValidationError("corpus: walk_step must be positive and finite");
  const double margin = 1e-3;
  validate_envelope(envelope, margin);

  Rng rng = substream(seed, "corpus");
  std::array<double, kGoalDim> unit;
  for (int i = 0; i < kGoalDim; ++i) unit[i] = rng.uniform(0.0, 1.0);

  std::vector<ShapeGoal> out;
  out.reserve(n);
  for (int k = 0; k < n; ++k) {
    // Rejection loop: with a validated envelope every box point is a valid
    // goal, so this only guards against future envelope extensions.
    for (int attempt = 0;; ++attempt) {
      std::array<double, kGoalDim> next = unit;
      if (k > 0) {
        for (int i = 0; i < kGoalDim; ++i)
          next[i] = reflect_unit(next[i] + walk_step * rng.normal());
      }
      ShapeGoal g = goal_at(next, envelope, margin);
      try {
        validate_goal(g);
      } catch (const ValidationError&) {
        if (attempt >= 1000)
          throw RuntimeFault("corpus: could not draw a valid goal after 1000 tries");
        continue;
      }
      unit = next;
      out.push_back(g);
      break;
    }
  }
  return out;
}

ShapeDataset greedy_select(const std::vector<ShapeGoal>& corpus,
                           double threshold) {
  if (corpus.empty()) throw ValidationError("greedy_select: corpus is empty");
  if (!(threshold >= 0.0) || !std::isfinite(threshold))
    throw ValidationError("greedy_select: threshold must be finite and >= 0");
  ShapeDataset ds;
  ds.provenance.threshold = threshold;
  ds.shapes.push_back(corpus.front());
  PivotSet last = pivot_points(corpus.front());
  for (size_t i = 1; i < corpus.size(); ++i) {
    const PivotSet cur = pivot_points(corpus[i]);
    if (pivot_distance_mean(cur, last) > threshold) {
      ds.shapes.push_back(corpus[i]);
      last = cur;
    }
  }
  return ds;
}

ShapeDataset build_dataset(const CorpusParams& params,
                           const ShapeEnvelope& envelope, double threshold) {
  const auto corpus =
      generate_corpus(params.n, params.seed, envelope, params.walk_step);
  ShapeDataset ds = greedy_select(corpus, threshold);
  ds.provenance.corpus_seed = params.seed;
  ds.provenance.corpus_n = params.n;
  ds.provenance.walk_step = params.walk_step;
  return ds;
}

void validate_dataset(const ShapeDataset& ds) {
  if (ds.shapes.size() < 2)
    throw ValidationError("dataset: need at least two shapes");
  for (const auto& g : ds.shapes) validate_goal(g);
}

ExtremeIndices find_extremes(const std::vector<ShapeGoal>& shapes) {
  if (shapes.empty()) throw ValidationError("find_extremes: no shapes");
  ExtremeIndices e;
  for (int i = 1; i < static_cast<int>(shapes.size()); ++i) {
    if (shapes[i].z_max < shapes[e.min_z_max].z_max) e.min_z_max = i;
    if (shapes[i].z_max > shapes[e.max_z_max].z_max) e.max_z_max = i;
    if (shapes[i].R_x < shapes[e.min_r_x].R_x) e.min_r_x = i;
    if (shapes[i].R_x > shapes[e.max_r_x].R_x) e.max_r_x = i;
  }
  return e;
}

void to_json(nlohmann::json& j, const DatasetProvenance& p) {
  j = nlohmann::json::object();
  j["corpus_seed"] = p.corpus_seed;
  j["corpus_n"] = p.corpus_n;
  j["walk_step"] = p.walk_step;
  j["threshold"] = p.threshold;
}

void from_json(const nlohmann::json& j, DatasetProvenance& p) {
  j.at("corpus_seed").get_to(p.corpus_seed);
  j.at("corpus_n").get_to(p.corpus_n);
  j.at("walk_step").get_to(p.walk_step);
  j.at("threshold").get_to(p.threshold);
}

void to_json(nlohmann::json& j, const ShapeDataset& ds) {
  j = nlohmann::json::object();
  j["provenance"] = ds.provenance;
  j["shapes"] = ds.shapes;
}

void from_json(const nlohmann::json& j, ShapeDataset& ds) {
  j.at("provenance").get_to(ds.provenance);
  ds.shapes = j.at("shapes").get<std::vector<ShapeGoal>>();
}

void save_dataset(const std::string& path, const ShapeDataset& ds) {
  std::ofstream out(path);
  if (!out) throw RuntimeFault("dataset: cannot open for writing: " + path);
  const nlohmann::json j = ds;
  out << j.dump(2) << "\n";
  if (!out) throw RuntimeFault("dataset: write failed: " + path);
}

ShapeDataset load_dataset(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("dataset: cannot open: " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("dataset: malformed JSON in " + path + ": " + e.what());
  }
  ShapeDataset ds;
  try {
    ds = j.get<ShapeDataset>();
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("dataset: bad schema in " + path + ": " + e.what());
  }
  validate_dataset(ds);
  return ds;
}

}  // namespace shaperl
