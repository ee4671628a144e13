// Copyright (c) 2026, the oodkit authors
// SPDX-License-Identifier: Apache-2.0
//
// From-scratch binary random forest: CART trees with weighted Gini
// impurity, bootstrap sampling, balanced class weights, probability
// prediction, impurity/permutation importances, and recursive feature
// elimination. Training is bit-reproducible for a given seed regardless
// of thread count: each tree draws from its own derived substream.

#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <numeric>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "oodkit/errors.hpp"
#include "oodkit/eval.hpp"
#include "oodkit/rng.hpp"

namespace oodkit::forest {

/// Row-major sample matrix.
struct SampleMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<float> data;

  SampleMatrix() = default;
  SampleMatrix(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0f) {}
  const float* row(std::size_t r) const { return data.data() + r * cols; }
  float* row(std::size_t r) { return data.data() + r * cols; }
  float at(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
  float& at(std::size_t r, std::size_t c) { return data[r * cols + c]; }
};

enum class ClassWeight { balanced, uniform };

struct FeaturesPerSplit {
  enum class Mode { sqrt_all, all, fixed };
  Mode mode = Mode::sqrt_all;
  int k = 0;  // used when mode == fixed

  static FeaturesPerSplit sqrt() { return {Mode::sqrt_all, 0}; }
  static FeaturesPerSplit all_features() { return {Mode::all, 0}; }
  static FeaturesPerSplit fixed(int k) { return {Mode::fixed, k}; }

  int resolve(std::size_t d) const {
    switch (mode) {
      case Mode::all:
        return static_cast<int>(d);
      case Mode::fixed:
        return std::clamp(k, 1, static_cast<int>(d));
      case Mode::sqrt_all:
      default:
        return static_cast<int>(std::ceil(std::sqrt(static_cast<double>(d))));
    }
  }
};

struct ForestParams {
  int n_trees = 1000;
  int max_depth = 20;
  ClassWeight class_weight = ClassWeight::balanced;
  FeaturesPerSplit features_per_split = FeaturesPerSplit::sqrt();
  int min_samples_leaf = 1;
  bool bootstrap = true;
  std::uint64_t rng_seed = 0;

  void validate() const {
    if (n_trees < 1) throw std::invalid_argument("ForestParams: n_trees must be >= 1");
    if (max_depth < 1) throw std::invalid_argument("ForestParams: max_depth must be >= 1");
    if (min_samples_leaf < 1)
      throw std::invalid_argument("ForestParams: min_samples_leaf must be >= 1");
  }
};

/// Flat node. Internal nodes carry a split (left receives values <=
/// threshold); every node stores its weighted class mass so leaf
/// probabilities and impurity importances read straight off the tree.
struct TreeNode {
  int feature = -1;  // -1 marks a leaf
  double threshold = 0.0;
  int left = -1;
  int right = -1;
  double mass0 = 0.0;
  double mass1 = 0.0;

  bool is_leaf() const { return feature < 0; }
};

struct Tree {
  std::vector<TreeNode> nodes;  // root at index 0
};

struct ForestModel {
  ForestParams params;
  std::size_t feature_dim = 0;
  std::array<double, 2> class_weight_per_sample{1.0, 1.0};  // weights actually applied
  std::vector<Tree> trees;
};

namespace detail {

/// 2 * W0 * W1 / W: the node's weighted Gini impurity scaled by its
/// weight, the quantity CART split gains are expressed in.
inline double weighted_gini_mass(double w0, double w1) {
  const double w = w0 + w1;
  if (w <= 0.0) return 0.0;
  return 2.0 * w0 * w1 / w;
}

struct SplitCandidate {
  double gain = -1.0;
  int feature = -1;
  double threshold = 0.0;

  bool better_than(const SplitCandidate& o) const {
    if (gain != o.gain) return gain > o.gain;
    if (feature != o.feature) return feature < o.feature;
    return threshold < o.threshold;
  }
  bool valid() const { return feature >= 0 && gain >= 0.0; }
};

struct TreeBuilder {
  const SampleMatrix& x;
  const std::vector<int>& y;
  const std::vector<double>& sample_weight;  // per original sample, full-set weights
  const ForestParams& params;
  int max_features;
  Rng rng;

  std::vector<std::uint32_t> work;  // bootstrap occurrence list, partitioned in place
  std::vector<std::pair<float, std::uint32_t>> sorted;  // scratch: (value, occurrence)
  std::vector<int> feature_order;                       // scratch for lazy Fisher-Yates
  Tree tree;

  Tree build() {
    const std::size_t n = x.rows;
    work.clear();
    if (params.bootstrap) {
      work.reserve(n);
      for (std::size_t i = 0; i < n; ++i)
        work.push_back(static_cast<std::uint32_t>(rng.uniform_u64(n)));
    } else {
      work.resize(n);
      std::iota(work.begin(), work.end(), 0u);
    }
    tree.nodes.clear();
    grow(0, work.size(), 0);
    return std::move(tree);
  }

  int grow(std::size_t begin, std::size_t end, int depth) {
    double w0 = 0.0, w1 = 0.0;
    for (std::size_t i = begin; i < end; ++i) {
      const std::uint32_t s = work[i];
      (y[s] == 0 ? w0 : w1) += sample_weight[s];
    }
    const int node_id = static_cast<int>(tree.nodes.size());
    tree.nodes.push_back({});
    tree.nodes[static_cast<std::size_t>(node_id)].mass0 = w0;
    tree.nodes[static_cast<std::size_t>(node_id)].mass1 = w1;

    const std::size_t count = end - begin;
    const bool pure = (w0 == 0.0) || (w1 == 0.0);
    if (depth >= params.max_depth || pure ||
        count < 2 * static_cast<std::size_t>(params.min_samples_leaf)) {
      return node_id;
    }

    const SplitCandidate best = find_best_split(begin, end, w0, w1);
    if (!best.valid()) return node_id;

    const auto mid = std::partition(work.begin() + static_cast<std::ptrdiff_t>(begin),
                                    work.begin() + static_cast<std::ptrdiff_t>(end),
                                    [&](std::uint32_t s) {
                                      return static_cast<double>(
                                                 x.at(s, static_cast<std::size_t>(best.feature))) <=
                                             best.threshold;
                                    });
    const std::size_t split_at = static_cast<std::size_t>(mid - work.begin());
    const int left = grow(begin, split_at, depth + 1);
    const int right = grow(split_at, end, depth + 1);
    auto& node = tree.nodes[static_cast<std::size_t>(node_id)];
    node.feature = best.feature;
    node.threshold = best.threshold;
    node.left = left;
    node.right = right;
    return node_id;
  }

  /// Best split across a random feature draw: a lazy Fisher-Yates walk
  /// over all features that stops after `max_features` non-constant ones
  /// have been scanned (constant features do not use up the budget, so an
  /// impure splittable node always splits). Ties resolve to the lowest
  /// feature index, then the lowest threshold.
  SplitCandidate find_best_split(std::size_t begin, std::size_t end, double w0, double w1) {
    const std::size_t d = x.cols;
    feature_order.resize(d);
    std::iota(feature_order.begin(), feature_order.end(), 0);
    const double parent_mass = weighted_gini_mass(w0, w1);
    SplitCandidate best;
    int scanned_informative = 0;

    for (std::size_t t = 0; t < d && scanned_informative < max_features; ++t) {
      const std::size_t j =
          t + static_cast<std::size_t>(rng.uniform_u64(static_cast<std::uint64_t>(d - t)));
      std::swap(feature_order[t], feature_order[j]);
      const int f = feature_order[t];

      sorted.clear();
      for (std::size_t i = begin; i < end; ++i)
        sorted.push_back({x.at(work[i], static_cast<std::size_t>(f)), work[i]});
      std::sort(sorted.begin(), sorted.end(),
                [](const auto& a, const auto& b) { return a.first < b.first; });
      if (sorted.front().first == sorted.back().first) continue;  // constant here
      ++scanned_informative;

      double left0 = 0.0, left1 = 0.0;
      std::size_t left_count = 0;
      const std::size_t total = sorted.size();
      for (std::size_t i = 0; i + 1 < total; ++i) {
        const auto [v, s] = sorted[i];
        (y[s] == 0 ? left0 : left1) += sample_weight[s];
        ++left_count;
        if (sorted[i + 1].first == v) continue;  // not a boundary between distinct values
        if (left_count < static_cast<std::size_t>(params.min_samples_leaf) ||
            total - left_count < static_cast<std::size_t>(params.min_samples_leaf))
          continue;
        double thr = (static_cast<double>(v) + static_cast<double>(sorted[i + 1].first)) / 2.0;
        if (thr == static_cast<double>(sorted[i + 1].first)) thr = static_cast<double>(v);
        const double gain = parent_mass - weighted_gini_mass(left0, left1) -
                            weighted_gini_mass(w0 - left0, w1 - left1);
        SplitCandidate cand{gain, f, thr};
        if (cand.gain >= 0.0 && (!best.valid() || cand.better_than(best))) best = cand;
      }
    }
    return best;
  }
};

inline void check_training_inputs(const SampleMatrix& x, const std::vector<int>& y) {
  if (x.rows != y.size()) throw std::invalid_argument("fit: X rows and y length differ");
  if (x.rows < 2) throw std::invalid_argument("fit: need at least 2 samples");
  std::size_t c0 = 0, c1 = 0;
  for (int label : y) {
    if (label == 0)
      ++c0;
    else if (label == 1)
      ++c1;
    else
      throw std::invalid_argument("fit: labels must be 0 or 1");
  }
  if (c0 == 0 || c1 == 0) throw SingleClassError("fit: both classes must be present");
  for (float v : x.data)
    if (!std::isfinite(v)) throw std::invalid_argument("fit: X contains non-finite values");
}

template <typename Fn>
inline void parallel_for(std::size_t count, int threads, Fn&& fn) {
  if (threads <= 1 || count <= 1) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next.fetch_add(1); i < count; i = next.fetch_add(1)) fn(i);
  };
  std::vector<std::thread> pool;
  const int n_threads = std::min<int>(threads, static_cast<int>(count));
  pool.reserve(static_cast<std::size_t>(n_threads));
  for (int t = 0; t < n_threads; ++t) pool.emplace_back(worker);
  for (auto& th : pool) th.join();
}

}  // namespace detail

/// Per-sample weights for the configured class weighting. Balanced weights
/// are computed from the full training set: w_i = n / (2 * n_class(y_i)),
/// so each class carries equal total weight.
inline std::array<double, 2> class_weights(const std::vector<int>& y, ClassWeight mode) {
  if (mode == ClassWeight::uniform) return {1.0, 1.0};
  double n0 = 0.0, n1 = 0.0;
  for (int label : y) (label == 0 ? n0 : n1) += 1.0;
  const double n = n0 + n1;
  return {n / (2.0 * n0), n / (2.0 * n1)};
}

inline ForestModel fit(const SampleMatrix& x, const std::vector<int>& y,
                       const ForestParams& params, int threads = 1) {
  params.validate();
  detail::check_training_inputs(x, y);

  ForestModel model;
  model.params = params;
  model.feature_dim = x.cols;
  model.class_weight_per_sample = class_weights(y, params.class_weight);

  std::vector<double> w(y.size());
  for (std::size_t i = 0; i < y.size(); ++i)
    w[i] = model.class_weight_per_sample[static_cast<std::size_t>(y[i])];

  const int max_features = params.features_per_split.resolve(x.cols);
  model.trees.resize(static_cast<std::size_t>(params.n_trees));
  detail::parallel_for(static_cast<std::size_t>(params.n_trees), threads, [&](std::size_t t) {
    detail::TreeBuilder builder{x, y, w, params, max_features,
                                Rng::derived(params.rng_seed, "tree", t)};
    model.trees[t] = builder.build();
  });
  return model;
}

/// Probability of the positive (OOD) class: mean over trees of the leaf's
/// weighted class-1 mass fraction.
inline double predict_proba(const ForestModel& model, std::span<const float> x) {
  if (x.size() != model.feature_dim)
    throw std::invalid_argument("predict_proba: feature dimension mismatch");
  if (model.trees.empty()) throw std::invalid_argument("predict_proba: untrained model");
  double sum = 0.0;
  for (const auto& tree : model.trees) {
    int node = 0;
    while (!tree.nodes[static_cast<std::size_t>(node)].is_leaf()) {
      const auto& nd = tree.nodes[static_cast<std::size_t>(node)];
      node = static_cast<double>(x[static_cast<std::size_t>(nd.feature)]) <= nd.threshold
                 ? nd.left
                 : nd.right;
    }
    const auto& leaf = tree.nodes[static_cast<std::size_t>(node)];
    sum += leaf.mass1 / (leaf.mass0 + leaf.mass1);
  }
  return sum / static_cast<double>(model.trees.size());
}

/// Mean decrease in weighted Gini, normalized per tree and then across the
/// forest to sum to 1 (all zeros for forests that never split).
inline std::vector<double> feature_importance(const ForestModel& model) {
  if (model.trees.empty()) throw std::invalid_argument("feature_importance: untrained model");
  std::vector<double> total(model.feature_dim, 0.0);
  std::vector<double> per_tree(model.feature_dim, 0.0);
  for (const auto& tree : model.trees) {
    std::fill(per_tree.begin(), per_tree.end(), 0.0);
    double tree_sum = 0.0;
    for (const auto& nd : tree.nodes) {
      if (nd.is_leaf()) continue;
      const auto& l = tree.nodes[static_cast<std::size_t>(nd.left)];
      const auto& r = tree.nodes[static_cast<std::size_t>(nd.right)];
      const double gain = detail::weighted_gini_mass(nd.mass0, nd.mass1) -
                          detail::weighted_gini_mass(l.mass0, l.mass1) -
                          detail::weighted_gini_mass(r.mass0, r.mass1);
      per_tree[static_cast<std::size_t>(nd.feature)] += gain;
      tree_sum += gain;
    }
    if (tree_sum > 0.0)
      for (std::size_t f = 0; f < model.feature_dim; ++f) total[f] += per_tree[f] / tree_sum;
  }
  double grand = 0.0;
  for (double v : total) grand += v;
  if (grand > 0.0)
    for (auto& v : total) v /= grand;
  return total;
}

/// Permutation importance: baseline AUROC minus the AUROC after shuffling
/// one feature column, averaged over `repeats` shuffles.
inline std::vector<double> permutation_importance(const ForestModel& model, const SampleMatrix& x,
                                                  const std::vector<int>& y, Rng& rng,
                                                  int repeats = 5) {
  if (model.trees.empty()) throw std::invalid_argument("permutation_importance: untrained model");
  if (x.rows != y.size()) throw std::invalid_argument("permutation_importance: size mismatch");
  auto scores_for = [&](const SampleMatrix& m) {
    std::vector<double> id, ood;
    for (std::size_t i = 0; i < m.rows; ++i) {
      const double p = predict_proba(model, std::span<const float>(m.row(i), m.cols));
      (y[i] == 0 ? id : ood).push_back(p);
    }
    return eval::auroc(id, ood);
  };
  const double baseline = scores_for(x);
  std::vector<double> out(x.cols, 0.0);
  SampleMatrix shuffled = x;
  std::vector<float> column(x.rows);
  for (std::size_t f = 0; f < x.cols; ++f) {
    double drop = 0.0;
    for (int r = 0; r < repeats; ++r) {
      for (std::size_t i = 0; i < x.rows; ++i) column[i] = x.at(i, f);
      rng.shuffle(column);
      for (std::size_t i = 0; i < x.rows; ++i) shuffled.at(i, f) = column[i];
      drop += baseline - scores_for(shuffled);
    }
    for (std::size_t i = 0; i < x.rows; ++i) shuffled.at(i, f) = x.at(i, f);
    out[f] = drop / static_cast<double>(repeats);
  }
  return out;
}

/// Recursive feature elimination: repeatedly fit, drop the lowest-impurity
/// `step_fraction` of the surviving features, stop at `target_k`. Returns
/// surviving indices in original coordinates, ascending.
inline std::vector<std::size_t> rfe(const SampleMatrix& x, const std::vector<int>& y,
                                    const ForestParams& params, std::size_t target_k,
                                    double step_fraction = 0.10, int threads = 1) {
  if (target_k < 1 || target_k > x.cols)
    throw std::invalid_argument("rfe: target_k must be in [1, d]");
  if (!(step_fraction > 0.0) || step_fraction > 1.0)
    throw std::invalid_argument("rfe: step_fraction must be in (0, 1]");
  std::vector<std::size_t> active(x.cols);
  std::iota(active.begin(), active.end(), std::size_t{0});
  std::uint64_t round = 0;
  while (active.size() > target_k) {
    SampleMatrix sub(x.rows, active.size());
    for (std::size_t i = 0; i < x.rows; ++i)
      for (std::size_t f = 0; f < active.size(); ++f) sub.at(i, f) = x.at(i, active[f]);
    ForestParams p = params;
    p.rng_seed = derive_seed(params.rng_seed, "rfe-round", round++);
    const ForestModel model = fit(sub, y, p, threads);
    const auto importance = feature_importance(model);

    std::size_t drop = static_cast<std::size_t>(
        std::ceil(step_fraction * static_cast<double>(active.size())));
    drop = std::min(drop, active.size() - target_k);
    drop = std::max<std::size_t>(drop, 1);
    // Lowest importance first; equal importances drop the higher original
    // index so early features are retained deterministically.
    std::vector<std::size_t> order(active.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      if (importance[a] != importance[b]) return importance[a] < importance[b];
      return active[a] > active[b];
    });
    std::vector<bool> dead(active.size(), false);
    for (std::size_t i = 0; i < drop; ++i) dead[order[i]] = true;
    std::vector<std::size_t> next;
    next.reserve(active.size() - drop);
    for (std::size_t i = 0; i < active.size(); ++i)
      if (!dead[i]) next.push_back(active[i]);
    active = std::move(next);
  }
  return active;
}

// ---------------------------------------------------------------------------
// Persistence: versioned JSON, human-inspectable
// ---------------------------------------------------------------------------

inline nlohmann::json forest_to_json(const ForestModel& model) {
  nlohmann::json j;
  j["version"] = 1;
  j["feature_dim"] = model.feature_dim;
  j["class_weight_per_sample"] = {model.class_weight_per_sample[0],
                                  model.class_weight_per_sample[1]};
  nlohmann::json p;
  p["n_trees"] = model.params.n_trees;
  p["max_depth"] = model.params.max_depth;
  p["class_weight"] = model.params.class_weight == ClassWeight::balanced ? "balanced" : "uniform";
  p["features_per_split"] =
      model.params.features_per_split.mode == FeaturesPerSplit::Mode::all
          ? "all"
          : (model.params.features_per_split.mode == FeaturesPerSplit::Mode::fixed
                 ? std::to_string(model.params.features_per_split.k)
                 : "sqrt");
  p["min_samples_leaf"] = model.params.min_samples_leaf;
  p["bootstrap"] = model.params.bootstrap;
  p["rng_seed"] = model.params.rng_seed;
  j["params"] = p;
  auto& trees = j["trees"] = nlohmann::json::array();
  for (const auto& tree : model.trees) {
    nlohmann::json nodes = nlohmann::json::array();
    for (const auto& nd : tree.nodes)
      nodes.push_back({nd.feature, nd.threshold, nd.left, nd.right, nd.mass0, nd.mass1});
    trees.push_back(std::move(nodes));
  }
  return j;
}

inline ForestModel forest_from_json(const nlohmann::json& j) {
  ForestModel model;
  try {
    if (j.at("version").get<int>() != 1) throw DataFormatError("forest: unsupported version");
    model.feature_dim = j.at("feature_dim").get<std::size_t>();
    const auto cw = j.at("class_weight_per_sample");
    model.class_weight_per_sample = {cw[0].get<double>(), cw[1].get<double>()};
    const auto& p = j.at("params");
    model.params.n_trees = p.at("n_trees").get<int>();
    model.params.max_depth = p.at("max_depth").get<int>();
    model.params.class_weight = p.at("class_weight").get<std::string>() == "balanced"
                                    ? ClassWeight::balanced
                                    : ClassWeight::uniform;
    const std::string fps = p.at("features_per_split").get<std::string>();
    if (fps == "sqrt")
      model.params.features_per_split = FeaturesPerSplit::sqrt();
    else if (fps == "all")
      model.params.features_per_split = FeaturesPerSplit::all_features();
    else
      model.params.features_per_split = FeaturesPerSplit::fixed(std::stoi(fps));
    model.params.min_samples_leaf = p.at("min_samples_leaf").get<int>();
    model.params.bootstrap = p.at("bootstrap").get<bool>();
    model.params.rng_seed = p.at("rng_seed").get<std::uint64_t>();
    for (const auto& tj : j.at("trees")) {
      Tree tree;
      for (const auto& nj : tj) {
        TreeNode nd;
        nd.feature = nj[0].get<int>();
        nd.threshold = nj[1].get<double>();
        nd.left = nj[2].get<int>();
        nd.right = nj[3].get<int>();
        nd.mass0 = nj[4].get<double>();
        nd.mass1 = nj[5].get<double>();
        tree.nodes.push_back(nd);
      }
      model.trees.push_back(std::move(tree));
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataFormatError(std::string("forest: malformed model JSON: ") + e.what());
  }
  return model;
}

inline void save_forest(const ForestModel& model, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataFormatError("cannot write forest model " + path);
  out << forest_to_json(model).dump() << "\n";
}

inline ForestModel load_forest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataFormatError("cannot open forest model " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw DataFormatError("forest model " + path + ": " + e.what());
  }
  return forest_from_json(j);
}

}  // namespace oodkit::forest
