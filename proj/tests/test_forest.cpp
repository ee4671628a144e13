// Copyright (c) 2026, the oodkit authors
// SPDX-License-Identifier: Apache-2.0

#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <set>

#include "oodkit/forest.hpp"
#include "oodkit/rng.hpp"

using namespace oodkit;
using forest::ForestModel;
using forest::ForestParams;
using forest::SampleMatrix;

namespace {

SampleMatrix matrix_1d(const std::vector<float>& xs) {
  SampleMatrix m(xs.size(), 1);
  for (std::size_t i = 0; i < xs.size(); ++i) m.at(i, 0) = xs[i];
  return m;
}

ForestParams stump_params(std::uint64_t seed = 0) {
  ForestParams p;
  p.n_trees = 1;
  p.max_depth = 1;
  p.bootstrap = false;
  p.features_per_split = forest::FeaturesPerSplit::all_features();
  p.rng_seed = seed;
  return p;
}

/// Exhaustive root-split search on a 1D dataset: every midpoint between
/// consecutive distinct sorted values, weighted Gini decrease computed
/// from the plain impurity definition.
struct OracleCandidate {
  double threshold = 0.0;
  double gain = 0.0;
};

std::vector<OracleCandidate> brute_force_root_splits(const std::vector<float>& xs,
                                                     const std::vector<int>& ys,
                                                     const std::array<double, 2>& class_w,
                                                     int min_samples_leaf) {
  auto gini = [](double w0, double w1) {
    const double w = w0 + w1;
    if (w <= 0.0) return 0.0;
    const double p0 = w0 / w, p1 = w1 / w;
    return 1.0 - p0 * p0 - p1 * p1;
  };
  std::vector<std::size_t> order(xs.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return xs[a] < xs[b]; });
  double tot0 = 0.0, tot1 = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i)
    (ys[i] == 0 ? tot0 : tot1) += class_w[static_cast<std::size_t>(ys[i])];
  const double parent = (tot0 + tot1) * gini(tot0, tot1);

  std::vector<OracleCandidate> out;
  double l0 = 0.0, l1 = 0.0;
  for (std::size_t i = 0; i + 1 < order.size(); ++i) {
    const std::size_t s = order[i];
    (ys[s] == 0 ? l0 : l1) += class_w[static_cast<std::size_t>(ys[s])];
    if (xs[order[i + 1]] == xs[s]) continue;
    if (i + 1 < static_cast<std::size_t>(min_samples_leaf) ||
        order.size() - i - 1 < static_cast<std::size_t>(min_samples_leaf))
      continue;
    double thr = (static_cast<double>(xs[s]) + static_cast<double>(xs[order[i + 1]])) / 2.0;
    if (thr == static_cast<double>(xs[order[i + 1]])) thr = static_cast<double>(xs[s]);
    const double r0 = tot0 - l0, r1 = tot1 - l1;
    const double gain = parent - (l0 + l1) * gini(l0, l1) - (r0 + r1) * gini(r0, r1);
    out.push_back({thr, gain});
  }
  return out;
}

}  // namespace

TEST_CASE("a stump separates 1D two-cluster data") {
  const SampleMatrix x = matrix_1d({1, 2, 8, 9});
  const std::vector<int> y{0, 0, 1, 1};
  const ForestModel model = forest::fit(x, y, stump_params());
  REQUIRE(model.trees.size() == 1);
  const auto& root = model.trees[0].nodes[0];
  REQUIRE_FALSE(root.is_leaf());
  CHECK(root.threshold > 2.0);
  CHECK(root.threshold < 8.0);
  for (std::size_t i = 0; i < 4; ++i) {
    const double p = forest::predict_proba(model, std::span<const float>(x.row(i), 1));
    CHECK((p >= 0.5 ? 1 : 0) == y[i]);
  }
}

TEST_CASE("balanced class weights equalize per-class mass") {
  std::vector<int> y(100, 0);
  for (int i = 0; i < 10; ++i) y[static_cast<std::size_t>(90 + i)] = 1;
  const auto w = forest::class_weights(y, forest::ClassWeight::balanced);
  CHECK(w[0] == Catch::Approx(100.0 / 180.0).epsilon(1e-12));
  CHECK(w[1] == Catch::Approx(5.0).epsilon(1e-12));
  double mass0 = 0.0, mass1 = 0.0;
  for (int label : y) (label == 0 ? mass0 : mass1) += w[static_cast<std::size_t>(label)];
  CHECK(std::abs(mass0 - mass1) <= 1e-9);
}

TEST_CASE("fit rejects bad inputs") {
  const SampleMatrix x = matrix_1d({1, 2, 3, 4});
  CHECK_THROWS_AS(forest::fit(x, {0, 0, 0, 0}, stump_params()), SingleClassError);
  CHECK_THROWS_AS(forest::fit(x, {0, 1}, stump_params()), std::invalid_argument);
  SampleMatrix bad = x;
  bad.at(1, 0) = std::numeric_limits<float>::quiet_NaN();
  CHECK_THROWS_AS(forest::fit(bad, {0, 0, 1, 1}, stump_params()), std::invalid_argument);
  CHECK_THROWS_AS(forest::fit(x, {0, 1, 0, 2}, stump_params()), std::invalid_argument);
}

TEST_CASE("predict_proba: pure stump sides and tree averaging") {
  const SampleMatrix x = matrix_1d({1, 2, 8, 9});
  const std::vector<int> y{0, 0, 1, 1};
  const ForestModel stump = forest::fit(x, y, stump_params());
  const float hi = 9.5f, lo = 0.5f;
  CHECK(forest::predict_proba(stump, std::span<const float>(&hi, 1)) == 1.0);
  CHECK(forest::predict_proba(stump, std::span<const float>(&lo, 1)) == 0.0);

  // Two manual trees voting 1.0 and 0.0 average to 0.5.
  ForestModel two;
  two.feature_dim = 1;
  two.params = stump_params();
  two.params.n_trees = 2;
  forest::Tree t1, t0;
  t1.nodes.push_back({-1, 0.0, -1, -1, 0.0, 1.0});
  t0.nodes.push_back({-1, 0.0, -1, -1, 1.0, 0.0});
  two.trees = {t1, t0};
  const float any = 0.0f;
  CHECK(forest::predict_proba(two, std::span<const float>(&any, 1)) == 0.5);

  CHECK_THROWS_AS(forest::predict_proba(stump, std::vector<float>{1.0f, 2.0f}),
                  std::invalid_argument);
}

TEST_CASE("a training point in a pure-leaf forest recovers its class") {
  Rng rng(5);
  SampleMatrix x(40, 3);
  std::vector<int> y(40);
  for (std::size_t i = 0; i < 40; ++i) {
    y[i] = i < 20 ? 0 : 1;
    for (std::size_t f = 0; f < 3; ++f)
      x.at(i, f) = static_cast<float>(rng.normal() + (y[i] ? 6.0 : 0.0));
  }
  ForestParams p;
  p.n_trees = 50;
  p.max_depth = 16;
  p.rng_seed = 4;
  const ForestModel model = forest::fit(x, y, p);
  for (std::size_t i = 0; i < 40; ++i) {
    const double prob = forest::predict_proba(model, std::span<const float>(x.row(i), 3));
    if (y[i] == 1)
      CHECK(prob >= 0.99);
    else
      CHECK(prob <= 0.01);
  }
}

TEST_CASE("impurity importance concentrates on the informative feature") {
  Rng rng(9);
  SampleMatrix x(120, 6);
  std::vector<int> y(120);
  for (std::size_t i = 0; i < 120; ++i) {
    y[i] = static_cast<int>(i % 2);
    x.at(i, 0) = static_cast<float>(rng.normal() + (y[i] ? 4.0 : 0.0));
    for (std::size_t f = 1; f < 6; ++f) x.at(i, f) = static_cast<float>(rng.normal());
  }
  ForestParams p;
  p.n_trees = 60;
  p.rng_seed = 10;
  const ForestModel model = forest::fit(x, y, p);
  const auto imp = forest::feature_importance(model);
  double sum = 0.0;
  for (double v : imp) sum += v;
  CHECK(std::abs(sum - 1.0) <= 1e-9);
  for (std::size_t f = 1; f < 6; ++f) CHECK(imp[0] > imp[f]);
}

TEST_CASE("permutation importance of a constant feature is a no-op") {
  Rng rng(13);
  SampleMatrix x(80, 3);
  std::vector<int> y(80);
  for (std::size_t i = 0; i < 80; ++i) {
    y[i] = static_cast<int>(i % 2);
    x.at(i, 0) = static_cast<float>(rng.normal() + (y[i] ? 3.0 : 0.0));
    x.at(i, 1) = 7.0f;  // constant: never split on
    x.at(i, 2) = static_cast<float>(rng.normal());
  }
  ForestParams p;
  p.n_trees = 40;
  p.rng_seed = 2;
  const ForestModel model = forest::fit(x, y, p);
  Rng perm_rng(77);
  const auto imp = forest::permutation_importance(model, x, y, perm_rng);
  CHECK(std::abs(imp[1]) <= 0.02);
  CHECK(imp[0] > imp[1]);
}

TEST_CASE("rfe keeps the informative feature") {
  Rng rng(17);
  SampleMatrix x(100, 10);
  std::vector<int> y(100);
  for (std::size_t i = 0; i < 100; ++i) {
    y[i] = static_cast<int>(i % 2);
    for (std::size_t f = 0; f < 10; ++f) x.at(i, f) = static_cast<float>(rng.normal());
    x.at(i, 3) = static_cast<float>(rng.normal() + (y[i] ? 5.0 : 0.0));
  }
  ForestParams p;
  p.n_trees = 40;
  p.rng_seed = 6;
  const auto selected = forest::rfe(x, y, p, 1);
  REQUIRE(selected.size() == 1);
  CHECK(selected[0] == 3);

  const auto identity = forest::rfe(x, y, p, 10);
  CHECK(identity.size() == 10);
  for (std::size_t f = 0; f < 10; ++f) CHECK(identity[f] == f);

  CHECK_THROWS_AS(forest::rfe(x, y, p, 0), std::invalid_argument);
}

TEST_CASE("training is bit-reproducible across runs and thread counts") {
  Rng rng(23);
  SampleMatrix x(60, 8);
  std::vector<int> y(60);
  for (std::size_t i = 0; i < 60; ++i) {
    y[i] = static_cast<int>(i % 2);
    for (std::size_t f = 0; f < 8; ++f)
      x.at(i, f) = static_cast<float>(rng.normal() + (y[i] ? 0.8 : 0.0));
  }
  ForestParams p;
  p.n_trees = 24;
  p.rng_seed = 31;
  const auto a = forest::fit(x, y, p, 1);
  const auto b = forest::fit(x, y, p, 1);
  const auto c = forest::fit(x, y, p, 8);
  const std::string ja = forest::forest_to_json(a).dump();
  CHECK(ja == forest::forest_to_json(b).dump());
  CHECK(ja == forest::forest_to_json(c).dump());
}

TEST_CASE("full-depth forests memorize consistent data") {
  Rng rng(29);
  SampleMatrix x(50, 4);
  std::vector<int> y(50);
  std::set<std::array<float, 4>> seen;
  for (std::size_t i = 0; i < 50; ++i) {
    std::array<float, 4> row;
    do {
      for (auto& v : row) v = static_cast<float>(rng.uniform_int(0, 9));
    } while (!seen.insert(row).second);  // distinct x rows => consistent labels
    for (std::size_t f = 0; f < 4; ++f) x.at(i, f) = row[f];
    y[i] = static_cast<int>(rng.uniform_int(0, 1));
  }
  const bool single_class = std::all_of(y.begin(), y.end(), [&](int v) { return v == y[0]; });
  if (single_class) y[0] ^= 1;
  ForestParams p;
  p.n_trees = 10;
  p.max_depth = 64;
  p.bootstrap = false;
  p.rng_seed = 3;
  const ForestModel model = forest::fit(x, y, p);
  for (std::size_t i = 0; i < 50; ++i) {
    const double prob = forest::predict_proba(model, std::span<const float>(x.row(i), 4));
    CHECK((prob >= 0.5 ? 1 : 0) == y[i]);
  }
}

TEST_CASE("probabilities stay in [0, 1] on arbitrary queries") {
  Rng rng(37);
  SampleMatrix x(30, 5);
  std::vector<int> y(30);
  for (std::size_t i = 0; i < 30; ++i) {
    y[i] = static_cast<int>(i % 2);
    for (std::size_t f = 0; f < 5; ++f) x.at(i, f) = static_cast<float>(rng.normal());
  }
  ForestParams p;
  p.n_trees = 20;
  p.rng_seed = 8;
  const ForestModel model = forest::fit(x, y, p);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<float> q(5);
    for (auto& v : q) v = static_cast<float>(rng.normal() * 10.0);
    const double prob = forest::predict_proba(model, q);
    CHECK(prob >= 0.0);
    CHECK(prob <= 1.0);
  }
}

TEST_CASE("single-tree, no-bootstrap leaf purity is exact on training data") {
  const SampleMatrix x = matrix_1d({0, 0, 1, 1, 2, 2});
  const std::vector<int> y{0, 0, 0, 1, 1, 1};
  ForestParams p = stump_params();
  p.max_depth = 1;  // forced stump: the x=1 pair is mixed
  const ForestModel model = forest::fit(x, y, p);
  const auto& root = model.trees[0].nodes[0];
  REQUIRE_FALSE(root.is_leaf());
  const auto& left = model.trees[0].nodes[static_cast<std::size_t>(root.left)];
  const auto& right = model.trees[0].nodes[static_cast<std::size_t>(root.right)];
  // Leaf probabilities equal the leaf's weighted class-1 fraction exactly.
  for (const auto* leaf : {&left, &right}) {
    const double frac = leaf->mass1 / (leaf->mass0 + leaf->mass1);
    CHECK(frac >= 0.0);
    CHECK(frac <= 1.0);
  }
  const float probe = 0.0f;
  CHECK(forest::predict_proba(model, std::span<const float>(&probe, 1)) ==
        left.mass1 / (left.mass0 + left.mass1));
}

TEST_CASE("root splits match exhaustive Gini search on small 1D data") {
  Rng rng(43);
  for (int trial = 0; trial < 300; ++trial) {
    const int n = static_cast<int>(rng.uniform_int(2, 12));
    std::vector<float> xs(static_cast<std::size_t>(n));
    std::vector<int> ys(static_cast<std::size_t>(n));
    for (auto& v : xs) v = static_cast<float>(rng.uniform_int(0, 4));
    bool has0 = false, has1 = false;
    for (auto& label : ys) {
      label = static_cast<int>(rng.uniform_int(0, 1));
      (label ? has1 : has0) = true;
    }
    if (!has0 || !has1) continue;

    const ForestParams p = stump_params(static_cast<std::uint64_t>(trial));
    const ForestModel model = forest::fit(matrix_1d(xs), ys, p);
    const auto w = forest::class_weights(ys, forest::ClassWeight::balanced);
    const auto candidates = brute_force_root_splits(xs, ys, w, p.min_samples_leaf);
    const auto& root = model.trees[0].nodes[0];
    if (candidates.empty()) {
      CHECK(root.is_leaf());
      continue;
    }
    REQUIRE_FALSE(root.is_leaf());
    double oracle_max = candidates.front().gain;
    for (const auto& c : candidates) oracle_max = std::max(oracle_max, c.gain);
    // The chosen threshold is a real candidate and attains the exhaustive
    // maximum; exact-tie breaking is pinned by a constructed case below.
    double chosen_gain = -1.0;
    for (const auto& c : candidates)
      if (c.threshold == root.threshold) chosen_gain = c.gain;
    REQUIRE(chosen_gain >= 0.0);
    CHECK(chosen_gain >= oracle_max - 1e-12);
  }
}

TEST_CASE("exact Gini ties break to the lowest threshold") {
  // {0,0,1,1,2,2} with labels {0,0,0,1,1,1}: thresholds 0.5 and 1.5 tie at
  // gain 1.5 exactly (all quantities dyadic), so 0.5 must win.
  const SampleMatrix x = matrix_1d({0, 0, 1, 1, 2, 2});
  const std::vector<int> y{0, 0, 0, 1, 1, 1};
  const ForestModel model = forest::fit(x, y, stump_params());
  const auto& root = model.trees[0].nodes[0];
  REQUIRE_FALSE(root.is_leaf());
  CHECK(root.threshold == 0.5);
}

TEST_CASE("forest JSON round-trips preserve predictions exactly") {
  Rng rng(51);
  SampleMatrix x(40, 4);
  std::vector<int> y(40);
  for (std::size_t i = 0; i < 40; ++i) {
    y[i] = static_cast<int>(i % 2);
    for (std::size_t f = 0; f < 4; ++f)
      x.at(i, f) = static_cast<float>(rng.normal() + (y[i] ? 1.5 : 0.0));
  }
  ForestParams p;
  p.n_trees = 12;
  p.rng_seed = 19;
  const ForestModel model = forest::fit(x, y, p);
  const auto j = forest::forest_to_json(model);
  const ForestModel back = forest::forest_from_json(nlohmann::json::parse(j.dump()));
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<float> q(4);
    for (auto& v : q) v = static_cast<float>(rng.normal() * 3.0);
    CHECK(forest::predict_proba(model, q) == forest::predict_proba(back, q));
  }
}
