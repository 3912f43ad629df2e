#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <string>
#include <vector>

#include "shaperl/dataset.hpp"
#include "shaperl/errors.hpp"

using namespace shaperl;

namespace {

ShapeGoal shifted(const ShapeGoal& g, double dz) {
  ShapeGoal out = g;
  out.Z_c += dz;
  out.z_max += dz;
  out.Z_x += dz;
  return out;
}

std::string temp_path(const char* name) {
  return std::string("/tmp/shaperl_test_") + name;
}

}  // namespace

TEST_CASE("corpus entries are valid, inside the envelope, and deterministic") {
  const ShapeEnvelope env = default_envelope();
  const auto corpus = generate_corpus(10000, 42, env, 0.05);
  REQUIRE(corpus.size() == 10000);
  for (const auto& g : corpus) {
    CHECK_NOTHROW(validate_goal(g));
    const auto v = goal_to_array(g);
    for (int i = 0; i < kGoalDim; ++i) {
      CHECK(v[i] >= env.lo[i]);
      CHECK(v[i] <= env.hi[i]);
    }
  }
  const auto again = generate_corpus(10000, 42, env, 0.05);
  for (size_t i = 0; i < corpus.size(); ++i)
    CHECK(goal_to_array(corpus[i]) == goal_to_array(again[i]));
  const auto other = generate_corpus(100, 43, env, 0.05);
  CHECK(goal_to_array(other[0]) != goal_to_array(corpus[0]));
}

TEST_CASE("corpus walk is smooth: consecutive shapes are far closer than random pairs") {
  const ShapeEnvelope env = default_envelope();
  const auto corpus = generate_corpus(2000, 7, env, 0.05);
  double consec = 0.0;
  for (size_t i = 1; i < corpus.size(); ++i)
    consec += pivot_distance_mean(pivot_points(corpus[i]), pivot_points(corpus[i - 1]));
  consec /= corpus.size() - 1;
  double apart = 0.0;
  int n_apart = 0;
  for (size_t i = 500; i < corpus.size(); i += 100) {
    apart += pivot_distance_mean(pivot_points(corpus[i]), pivot_points(corpus[i - 500]));
    ++n_apart;
  }
  apart /= n_apart;
  CHECK(consec < 0.5 * apart);
}

TEST_CASE("single-entry corpus") {
  const auto corpus = generate_corpus(1, 5, default_envelope(), 0.05);
  REQUIRE(corpus.size() == 1);
  CHECK_NOTHROW(validate_goal(corpus[0]));
}

TEST_CASE("greedy selection on degenerate corpora") {
  const ShapeGoal g = envelope_midpoint(default_envelope());

  SUBCASE("identical shapes collapse to one") {
    const std::vector<ShapeGoal> corpus(50, g);
    const auto ds = greedy_select(corpus, 0.08);
    CHECK(ds.shapes.size() == 1);
  }

  SUBCASE("two shapes 10 cm apart alternate: everything kept") {
    // A uniform vertical translation by 0.1 m moves every pivot by exactly
    // 0.1 m, so the mean pivot distance is 0.1 > 0.08.
    const ShapeGoal h = shifted(g, 0.1);
    std::vector<ShapeGoal> corpus;
    for (int i = 0; i < 40; ++i) corpus.push_back(i % 2 ? h : g);
    const auto ds = greedy_select(corpus, 0.08);
    CHECK(ds.shapes.size() == corpus.size());
  }

  SUBCASE("empty corpus is rejected") {
    CHECK_THROWS_WITH_AS(greedy_select({}, 0.08), doctest::Contains("empty"),
                         ValidationError);
  }

  SUBCASE("negative threshold is rejected") {
    CHECK_THROWS_AS(greedy_select(std::vector<ShapeGoal>{g}, -0.01),
                    ValidationError);
  }
}

TEST_CASE("selection matches an independent one-pass reimplementation") {
  const auto corpus = generate_corpus(5000, 99, default_envelope(), 0.05);
  const double threshold = 0.08;
  const auto ds = greedy_select(corpus, threshold);

  // Scalar re-walk: no reuse of the selection code path.
  std::vector<int> picked;
  picked.push_back(0);
  for (int i = 1; i < static_cast<int>(corpus.size()); ++i) {
    const PivotSet a = pivot_points(corpus[i]);
    const PivotSet b = pivot_points(corpus[picked.back()]);
    double total = 0.0;
    for (int k = 0; k < kNumPivots; ++k) {
      const double dr = a.p[k].r - b.p[k].r;
      const double dz = a.p[k].z - b.p[k].z;
      total += std::sqrt(dr * dr + dz * dz);
    }
    if (total / kNumPivots > threshold) picked.push_back(i);
  }
  REQUIRE(ds.shapes.size() == picked.size());
  for (size_t k = 0; k < picked.size(); ++k)
    CHECK(goal_to_array(ds.shapes[k]) == goal_to_array(corpus[picked[k]]));
}

TEST_CASE("selection output properties") {
  const auto corpus = generate_corpus(3000, 11, default_envelope(), 0.05);
  const auto ds = greedy_select(corpus, 0.08);
  // consecutive kept shapes exceed the threshold
  for (size_t i = 1; i < ds.shapes.size(); ++i)
    CHECK(pivot_distance_mean(pivot_points(ds.shapes[i]),
                              pivot_points(ds.shapes[i - 1])) > 0.08);
  // order-preserving subsequence of the corpus
  size_t cursor = 0;
  for (const auto& s : ds.shapes) {
    while (cursor < corpus.size() &&
           goal_to_array(corpus[cursor]) != goal_to_array(s))
      ++cursor;
    CHECK(cursor < corpus.size());
    ++cursor;
  }
  // threshold zero keeps a strictly-moving walk in full
  const auto all = greedy_select(corpus, 0.0);
  CHECK(all.shapes.size() == corpus.size());
}

TEST_CASE("default corpus parameters select close to 120 shapes") {
  const auto ds = build_dataset(CorpusParams{}, default_envelope(), 0.08);
  CHECK(ds.shapes.size() >= 96);   // 120 - 20%
  CHECK(ds.shapes.size() <= 144);  // 120 + 20%
  CHECK(ds.provenance.corpus_seed == CorpusParams{}.seed);
  CHECK(ds.provenance.corpus_n == CorpusParams{}.n);
  CHECK(ds.provenance.threshold == 0.08);
}

TEST_CASE("extreme-shape indices pick out the boundary configurations") {
  std::vector<ShapeGoal> shapes;
  const ShapeGoal mid = envelope_midpoint(default_envelope());
  for (int i = 0; i < 10; ++i) {
    ShapeGoal g = mid;
    g.z_max = 0.80 + 0.02 * i;
    g.R_x = 1.55 - 0.01 * i;
    shapes.push_back(g);
  }
  const auto e = find_extremes(shapes);
  CHECK(e.min_z_max == 0);
  CHECK(e.max_z_max == 9);
  CHECK(e.min_r_x == 9);
  CHECK(e.max_r_x == 0);
  CHECK_THROWS_AS(find_extremes({}), ValidationError);
}

TEST_CASE("dataset file round-trips and rejects bad input") {
  const auto ds = build_dataset(CorpusParams{300, 17, 0.05}, default_envelope(), 0.08);
  REQUIRE(ds.shapes.size() >= 2);
  const std::string path = temp_path("dataset.json");
  save_dataset(path, ds);
  const auto back = load_dataset(path);
  CHECK(back.provenance.corpus_seed == ds.provenance.corpus_seed);
  CHECK(back.provenance.corpus_n == ds.provenance.corpus_n);
  CHECK(back.provenance.walk_step == ds.provenance.walk_step);
  CHECK(back.provenance.threshold == ds.provenance.threshold);
  REQUIRE(back.shapes.size() == ds.shapes.size());
  for (size_t i = 0; i < ds.shapes.size(); ++i)
    CHECK(goal_to_array(back.shapes[i]) == goal_to_array(ds.shapes[i]));

  // saving twice produces identical bytes
  const std::string path2 = temp_path("dataset2.json");
  save_dataset(path2, ds);
  std::ifstream a(path), b(path2);
  std::string sa((std::istreambuf_iterator<char>(a)), std::istreambuf_iterator<char>());
  std::string sb((std::istreambuf_iterator<char>(b)), std::istreambuf_iterator<char>());
  CHECK(sa == sb);

  CHECK_THROWS_AS(load_dataset(temp_path("missing.json")), ValidationError);
  {
    std::ofstream bad(temp_path("bad.json"));
    bad << "{ not json";
  }
  CHECK_THROWS_WITH_AS(load_dataset(temp_path("bad.json")),
                       doctest::Contains("malformed"), ValidationError);
  {
    std::ofstream bad(temp_path("schema.json"));
    bad << "{\"provenance\": {}, \"shapes\": []}";
  }
  CHECK_THROWS_AS(load_dataset(temp_path("schema.json")), ValidationError);
  std::remove(path.c_str());
  std::remove(path2.c_str());
  std::remove(temp_path("bad.json").c_str());
  std::remove(temp_path("schema.json").c_str());
}

TEST_CASE("a size-one dataset fails training validation") {
  ShapeDataset ds;
  ds.shapes.push_back(envelope_midpoint(default_envelope()));
  CHECK_THROWS_WITH_AS(validate_dataset(ds), doctest::Contains("two"),
                       ValidationError);
}

TEST_CASE("corpus input validation") {
  const ShapeEnvelope env = default_envelope();
  CHECK_THROWS_AS(generate_corpus(0, 1, env, 0.05), ValidationError);
  CHECK_THROWS_AS(generate_corpus(10, 1, env, 0.0), ValidationError);
  CHECK_THROWS_AS(generate_corpus(10, 1, env, -0.1), ValidationError);
  ShapeEnvelope bad = env;
  bad.lo[2] = -0.2;  // a minor radius range touching zero
  CHECK_THROWS_AS(generate_corpus(10, 1, bad, 0.05), ValidationError);
}
