// Copyright (c) 2026, the oodkit authors
// SPDX-License-Identifier: Apache-2.0
//
// OOD detectors and scoring conventions: the RF classifier on pooled deep
// features (outlier exposure), the Mahalanobis detector with Ledoit-Wolf
// covariance shrinkage, the three logit-based scores, and the five
// training strategies (dataset-specific, ensemble, unified, LODO, LODO+).
// Orientation is fixed everywhere: higher value = more likely OOD.

#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "oodkit/errors.hpp"
#include "oodkit/features.hpp"
#include "oodkit/forest.hpp"
#include "oodkit/grid.hpp"
#include "oodkit/rvol.hpp"

namespace oodkit::detectors {

using features::DescriptorSet;
using features::ScanDescriptor;
using forest::ForestModel;
using forest::ForestParams;
using forest::SampleMatrix;

struct OodScore {
  std::string scan_id;
  std::string method;
  double value = 0.0;  // higher = more OOD
};

inline SampleMatrix to_matrix(const DescriptorSet& set) {
  SampleMatrix m(set.rows.size(), set.dim);
  for (std::size_t r = 0; r < set.rows.size(); ++r)
    std::copy(set.rows[r].vec.begin(), set.rows[r].vec.end(), m.row(r));
  return m;
}

inline Eigen::MatrixXd to_matrix_d(const DescriptorSet& set) {
  Eigen::MatrixXd m(static_cast<Eigen::Index>(set.rows.size()),
                    static_cast<Eigen::Index>(set.dim));
  for (std::size_t r = 0; r < set.rows.size(); ++r)
    for (std::size_t c = 0; c < set.dim; ++c)
      m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) =
          static_cast<double>(set.rows[r].vec[c]);
  return m;
}

namespace detail {

/// Order-insensitive mean: summed in sorted order so scan-level scores are
/// bit-identical under any ROI permutation.
inline double sorted_mean(std::vector<double> values) {
  std::sort(values.begin(), values.end());
  double s = 0.0;
  for (double v : values) s += v;
  return s / static_cast<double>(values.size());
}

}  // namespace detail

// ---------------------------------------------------------------------------
// RF-Deep
// ---------------------------------------------------------------------------

/// Trains the RF on every ROI descriptor individually (outlier exposure:
/// OOD rows are the positive class).
inline ForestModel rf_deep_train(const DescriptorSet& id_rois, const DescriptorSet& ood_rois,
                                 const ForestParams& params, int threads = 1) {
  if (id_rois.empty() || ood_rois.empty())
    throw std::invalid_argument("rf_deep_train: both cohorts must be nonempty");
  if (id_rois.dim != ood_rois.dim)
    throw std::invalid_argument("rf_deep_train: descriptor dimension mismatch");
  SampleMatrix x(id_rois.rows.size() + ood_rois.rows.size(), id_rois.dim);
  std::vector<int> y(x.rows);
  std::size_t r = 0;
  for (const auto& row : id_rois.rows) {
    std::copy(row.vec.begin(), row.vec.end(), x.row(r));
    y[r++] = 0;
  }
  for (const auto& row : ood_rois.rows) {
    std::copy(row.vec.begin(), row.vec.end(), x.row(r));
    y[r++] = 1;
  }
  return forest::fit(x, y, params, threads);
}

/// Scan-level score: the mean OOD probability across the scan's ROIs.
inline double rf_deep_score(const ForestModel& model,
                            const std::vector<const ScanDescriptor*>& scan_rois) {
  if (scan_rois.empty()) throw NoSegmentationError("rf_deep_score: no ROI descriptors for scan");
  std::vector<double> probs;
  probs.reserve(scan_rois.size());
  for (const auto* row : scan_rois)
    probs.push_back(forest::predict_proba(model, row->vec));
  return detail::sorted_mean(std::move(probs));
}

// ---------------------------------------------------------------------------
// Ledoit-Wolf shrinkage and MD-Deep
// ---------------------------------------------------------------------------

struct LedoitWolfResult {
  Eigen::MatrixXd sigma;  // (1-delta) S + delta mu I
  double delta = 0.0;     // shrinkage intensity in [0, 1]
  double mu = 0.0;        // trace(S) / d
};

/// Ledoit-Wolf optimal shrinkage toward the scaled identity. Empirical
/// covariance divides by n (the convention of the derivation; n vs n-1
/// changes delta).
inline LedoitWolfResult ledoit_wolf(const Eigen::MatrixXd& x) {
  const Eigen::Index n = x.rows();
  const Eigen::Index d = x.cols();
  if (n < 2) throw std::invalid_argument("ledoit_wolf: need at least 2 samples");
  if (!x.allFinite()) throw std::invalid_argument("ledoit_wolf: non-finite input");

  const Eigen::RowVectorXd mean = x.colwise().mean();
  const Eigen::MatrixXd z = x.rowwise() - mean;
  const Eigen::MatrixXd s = (z.transpose() * z) / static_cast<double>(n);

  LedoitWolfResult out;
  out.mu = s.trace() / static_cast<double>(d);

  // d^2 = ||S - mu I||_F^2 / d   (dispersion of S around the target)
  Eigen::MatrixXd centered = s;
  centered.diagonal().array() -= out.mu;
  const double dd = centered.squaredNorm() / static_cast<double>(d);

  // b^2 = min(d^2, (1/(n^2 d)) sum_i ||z_i z_i^T - S||_F^2)
  double acc = 0.0;
  const double s_norm2 = s.squaredNorm();
  for (Eigen::Index i = 0; i < n; ++i) {
    const double zz = z.row(i).squaredNorm();
    const double zsz = z.row(i) * s * z.row(i).transpose();
    acc += zz * zz - 2.0 * zsz + s_norm2;
  }
  const double bbar = acc / (static_cast<double>(n) * static_cast<double>(n) *
                             static_cast<double>(d));
  const double bb = std::min(bbar, dd);
  out.delta = dd > 0.0 ? bb / dd : 0.0;

  out.sigma = (1.0 - out.delta) * s;
  out.sigma.diagonal().array() += out.delta * out.mu;
  return out;
}

/// Single Gaussian fitted on ID descriptors with a shrunk covariance.
struct GaussianOodModel {
  Eigen::VectorXd mean;
  Eigen::MatrixXd covariance;
  Eigen::MatrixXd precision;
  double shrinkage = 0.0;
};

/// Fits on ID descriptors only (no outlier exposure). Shrinkage keeps the
/// covariance invertible even when d exceeds n; `delta_override` pins the
/// intensity (0 disables shrinkage entirely, which can fail on degenerate
/// data and then raises EstimationError).
inline GaussianOodModel md_fit(const DescriptorSet& id_rois,
                               std::optional<double> delta_override = std::nullopt) {
  if (id_rois.empty()) throw std::invalid_argument("md_fit: empty ID descriptor set");
  const Eigen::MatrixXd x = to_matrix_d(id_rois);
  GaussianOodModel model;
  model.mean = x.colwise().mean().transpose();

  if (delta_override) {
    if (*delta_override < 0.0 || *delta_override > 1.0)
      throw std::invalid_argument("md_fit: delta override must be in [0, 1]");
    const Eigen::MatrixXd z = x.rowwise() - model.mean.transpose();
    const Eigen::MatrixXd s = (z.transpose() * z) / static_cast<double>(x.rows());
    const double mu = s.trace() / static_cast<double>(x.cols());
    model.covariance = (1.0 - *delta_override) * s;
    model.covariance.diagonal().array() += *delta_override * mu;
    model.shrinkage = *delta_override;
  } else {
    LedoitWolfResult lw = ledoit_wolf(x);
    model.covariance = std::move(lw.sigma);
    model.shrinkage = lw.delta;
  }

  const Eigen::LLT<Eigen::MatrixXd> llt(model.covariance);
  if (llt.info() != Eigen::Success)
    throw EstimationError("md_fit: shrunk covariance is not positive definite");
  model.precision =
      llt.solve(Eigen::MatrixXd::Identity(model.covariance.rows(), model.covariance.cols()));
  return model;
}

inline double md_distance(const GaussianOodModel& model, std::span<const float> x) {
  if (static_cast<Eigen::Index>(x.size()) != model.mean.size())
    throw std::invalid_argument("md_distance: dimension mismatch");
  Eigen::VectorXd z(model.mean.size());
  for (Eigen::Index i = 0; i < z.size(); ++i) z(i) = static_cast<double>(x[static_cast<std::size_t>(i)]);
  z -= model.mean;
  const double sq = z.dot(model.precision * z);
  return std::sqrt(std::max(0.0, sq));
}

/// Scan-level MD-Deep score: mean of per-ROI Mahalanobis distances
/// (matching RF-Deep's ROI averaging). Already oriented higher = more OOD.
inline double md_score(const GaussianOodModel& model,
                       const std::vector<const ScanDescriptor*>& scan_rois) {
  if (scan_rois.empty()) throw NoSegmentationError("md_score: no ROI descriptors for scan");
  std::vector<double> dists;
  dists.reserve(scan_rois.size());
  for (const auto* row : scan_rois) dists.push_back(md_distance(model, row->vec));
  return detail::sorted_mean(std::move(dists));
}

// ---------------------------------------------------------------------------
// Logit-based scores
// ---------------------------------------------------------------------------

/// Per-voxel background/tumor logits with the derived positive-prediction
/// mask. Argmax ties assign the voxel to tumor. The optional probability
/// threshold additionally requires softmax(tumor) >= threshold (off by
/// default).
struct LogitVolume {
  grid3d::Vec3i dims;
  std::vector<float> logit_bg;  // f0
  std::vector<float> logit_fg;  // f1
  std::optional<double> fg_prob_threshold;

  void validate() const {
    grid3d::check_dims(dims);
    const auto n = static_cast<std::size_t>(grid3d::voxel_count(dims));
    if (logit_bg.size() != n || logit_fg.size() != n)
      throw std::invalid_argument("LogitVolume: field lengths must equal nx*ny*nz");
    for (std::size_t i = 0; i < n; ++i)
      if (!std::isfinite(logit_bg[i]) || !std::isfinite(logit_fg[i]))
        throw std::invalid_argument("LogitVolume: non-finite logits");
  }
};

inline double softmax_fg(double f0, double f1) {
  // exp(f1) / (exp(f0) + exp(f1)), stable form
  return 1.0 / (1.0 + std::exp(f0 - f1));
}

inline grid3d::LabelMask predicted_positive(const LogitVolume& lv) {
  lv.validate();
  grid3d::LabelMask mask(lv.dims);
  for (std::size_t i = 0; i < lv.logit_fg.size(); ++i) {
    bool pos = lv.logit_fg[i] >= lv.logit_bg[i];
    if (pos && lv.fg_prob_threshold)
      pos = softmax_fg(lv.logit_bg[i], lv.logit_fg[i]) >= *lv.fg_prob_threshold;
    mask.bits[i] = pos ? 1 : 0;
  }
  return mask;
}

namespace detail {

template <typename PerVoxel>
inline double negated_mean_over_positive(const LogitVolume& lv, PerVoxel&& per_voxel) {
  const grid3d::LabelMask mask = predicted_positive(lv);
  double sum = 0.0;
  std::int64_t count = 0;
  for (std::size_t i = 0; i < mask.bits.size(); ++i) {
    if (!mask.bits[i]) continue;
    sum += per_voxel(static_cast<double>(lv.logit_bg[i]), static_cast<double>(lv.logit_fg[i]));
    ++count;
  }
  if (count == 0)
    throw NoSegmentationError("logit score: no voxels predicted positive");
  return -sum / static_cast<double>(count);
}

inline double log_sum_exp2(double a, double b) {
  const double m = std::max(a, b);
  return m + std::log(std::exp(a - m) + std::exp(b - m));
}

}  // namespace detail

/// S = -(1/|V+|) sum softmax_fg.
inline OodScore maxsoftmax_score(const LogitVolume& lv, const std::string& scan_id = "") {
  return {scan_id, "maxsoftmax",
          detail::negated_mean_over_positive(lv, [](double f0, double f1) {
            return softmax_fg(f0, f1);
          })};
}

/// S = -(1/|V+|) sum f1.
inline OodScore maxlogit_score(const LogitVolume& lv, const std::string& scan_id = "") {
  return {scan_id, "maxlogit",
          detail::negated_mean_over_positive(lv, [](double, double f1) { return f1; })};
}

/// S = -(1/|V+|) sum log(exp(f0) + exp(f1)), with a stable log-sum-exp.
inline OodScore energy_score(const LogitVolume& lv, const std::string& scan_id = "") {
  return {scan_id, "energy",
          detail::negated_mean_over_positive(lv, [](double f0, double f1) {
            return detail::log_sum_exp2(f0, f1);
          })};
}

// ---------------------------------------------------------------------------
// Boundary / interior MaxLogit analysis
// ---------------------------------------------------------------------------

struct RegionStats {
  std::size_t n = 0;
  double mean = 0.0;
  double sd = 0.0;  // population standard deviation
};

struct BoundaryInteriorStats {
  RegionStats overall;
  RegionStats boundary;
  RegionStats interior;
  bool interior_present = true;
};

namespace detail {

inline RegionStats region_stats(const LogitVolume& lv, const grid3d::LabelMask& region) {
  RegionStats s;
  double sum = 0.0;
  for (std::size_t i = 0; i < region.bits.size(); ++i)
    if (region.bits[i]) {
      sum += lv.logit_fg[i];
      ++s.n;
    }
  if (s.n == 0) return s;
  s.mean = sum / static_cast<double>(s.n);
  double var = 0.0;
  for (std::size_t i = 0; i < region.bits.size(); ++i)
    if (region.bits[i]) {
      const double d = lv.logit_fg[i] - s.mean;
      var += d * d;
    }
  s.sd = std::sqrt(var / static_cast<double>(s.n));
  return s;
}

}  // namespace detail

/// Mean and spread of the raw (un-negated) tumor logit inside the
/// predicted-positive region, stratified into overall / boundary ring /
/// interior. Regions are restricted to V+.
inline BoundaryInteriorStats boundary_interior_stats(const LogitVolume& lv) {
  const grid3d::LabelMask vplus = predicted_positive(lv);
  if (vplus.empty())
    throw NoSegmentationError("boundary_interior_stats: no voxels predicted positive");
  const auto split = grid3d::boundary_interior_split(vplus);
  BoundaryInteriorStats out;
  out.overall = detail::region_stats(lv, vplus);
  out.boundary = detail::region_stats(lv, grid3d::mask_intersection(split.boundary, vplus));
  out.interior = detail::region_stats(lv, split.interior);
  out.interior_present = !split.interior_empty;
  return out;
}

// ---------------------------------------------------------------------------
// Training strategies
// ---------------------------------------------------------------------------

enum class StrategyMode { dataset_specific, ensemble, unified, lodo, lodo_plus };

inline std::string strategy_name(StrategyMode m) {
  switch (m) {
    case StrategyMode::dataset_specific: return "dataset-specific";
    case StrategyMode::ensemble: return "ensemble";
    case StrategyMode::unified: return "unified";
    case StrategyMode::lodo: return "lodo";
    case StrategyMode::lodo_plus: return "lodo-plus";
  }
  return "?";
}

inline StrategyMode strategy_from_name(const std::string& s) {
  if (s == "ds" || s == "dataset-specific") return StrategyMode::dataset_specific;
  if (s == "ensemble") return StrategyMode::ensemble;
  if (s == "unified") return StrategyMode::unified;
  if (s == "lodo") return StrategyMode::lodo;
  if (s == "lodo-plus" || s == "lodo+") return StrategyMode::lodo_plus;
  throw UsageError("unknown strategy: " + s);
}

struct StrategyConfig {
  StrategyMode mode = StrategyMode::dataset_specific;
  std::string held_out;                                    // lodo modes
  std::size_t background_roi_count = static_cast<std::size_t>(-1);  // lodo_plus cap
};

/// Labeled training cohorts: the ID set, the named OOD sets, and the
/// optional background-ROI set consumed by LODO+.
struct LabeledCohorts {
  DescriptorSet id;
  std::vector<std::pair<std::string, DescriptorSet>> ood;
  DescriptorSet background;
};

/// A trained strategy: one forest per OOD dataset (dataset-specific /
/// ensemble) or a single pooled forest (unified / LODO / LODO+), plus an
/// audit of which dataset tags contributed training rows.
struct RfBundle {
  StrategyConfig cfg;
  ForestParams params;
  std::string method_label;  // e.g. "rf-deep", "rf-deep-lodo"
  std::vector<std::pair<std::string, ForestModel>> forests;
  std::map<std::string, std::size_t> training_rows_per_tag;
};

namespace detail {

inline DescriptorSet concat(const std::vector<const DescriptorSet*>& parts) {
  DescriptorSet out;
  for (const auto* p : parts) {
    if (p->empty()) continue;
    if (out.rows.empty()) out.dim = p->dim;
    if (p->dim != out.dim) throw std::invalid_argument("cohort descriptor dimension mismatch");
    out.rows.insert(out.rows.end(), p->rows.begin(), p->rows.end());
  }
  return out;
}

}  // namespace detail

inline RfBundle train_strategy(const StrategyConfig& cfg, const LabeledCohorts& cohorts,
                               const ForestParams& params, int threads = 1) {
  if (cohorts.id.empty()) throw std::invalid_argument("train_strategy: empty ID cohort");
  if (cohorts.ood.empty()) throw std::invalid_argument("train_strategy: no OOD cohorts");
  for (const auto& [tag, set] : cohorts.ood)
    if (set.empty()) throw std::invalid_argument("train_strategy: empty OOD cohort " + tag);

  const bool lodo_mode = cfg.mode == StrategyMode::lodo || cfg.mode == StrategyMode::lodo_plus;
  if (lodo_mode) {
    const bool present = std::any_of(cohorts.ood.begin(), cohorts.ood.end(),
                                     [&](const auto& p) { return p.first == cfg.held_out; });
    if (!present)
      throw UsageError("train_strategy: held-out dataset \"" + cfg.held_out +
                       "\" not found in training cohorts");
    if (cohorts.ood.size() < 2)
      throw UsageError("train_strategy: LODO needs at least 2 OOD datasets");
  }

  RfBundle bundle;
  bundle.cfg = cfg;
  bundle.params = params;
  bundle.method_label = cfg.mode == StrategyMode::dataset_specific
                            ? "rf-deep"
                            : "rf-deep-" + strategy_name(cfg.mode);
  auto count_rows = [&](const std::string& tag, const DescriptorSet& set) {
    bundle.training_rows_per_tag[tag] += set.rows.size();
  };

  switch (cfg.mode) {
    case StrategyMode::dataset_specific:
    case StrategyMode::ensemble: {
      for (const auto& [tag, set] : cohorts.ood) {
        ForestParams p = params;
        p.rng_seed = derive_seed(params.rng_seed, "strategy-forest:" + tag);
        bundle.forests.push_back({tag, rf_deep_train(cohorts.id, set, p, threads)});
        count_rows("ID", cohorts.id);
        count_rows(tag, set);
      }
      break;
    }
    case StrategyMode::unified:
    case StrategyMode::lodo:
    case StrategyMode::lodo_plus: {
      std::vector<const DescriptorSet*> parts;
      for (const auto& [tag, set] : cohorts.ood) {
        if (lodo_mode && tag == cfg.held_out) continue;
        parts.push_back(&set);
        count_rows(tag, set);
      }
      DescriptorSet pooled = detail::concat(parts);
      if (cfg.mode == StrategyMode::lodo_plus) {
        if (cohorts.background.empty())
          throw UsageError("train_strategy: LODO+ requires background ROI descriptors");
        // Background rows are labeled OOD: non-tumor anatomy the detector
        // should treat as suspicious context.
        std::size_t used = 0;
        for (const auto& row : cohorts.background.rows) {
          if (used >= cfg.background_roi_count) break;
          ScanDescriptor r = row;
          r.label = 1;
          pooled.push(std::move(r));
          ++used;
        }
        bundle.training_rows_per_tag["background"] = used;
      }
      if (pooled.empty()) throw std::invalid_argument("train_strategy: pooled OOD set is empty");
      ForestParams p = params;
      p.rng_seed = derive_seed(params.rng_seed, "strategy-forest:pooled");
      bundle.forests.push_back({"pooled", rf_deep_train(cohorts.id, pooled, p, threads)});
      count_rows("ID", cohorts.id);
      break;
    }
  }
  return bundle;
}

/// Scores one scan. For dataset-specific bundles `eval_dataset` selects
/// the forest to score against (each cohort is scored against its own);
/// the other modes ignore it.
inline double score_scan(const RfBundle& bundle, const std::string& eval_dataset,
                         const std::vector<const ScanDescriptor*>& rois) {
  if (bundle.forests.empty()) throw std::invalid_argument("score_scan: empty bundle");
  switch (bundle.cfg.mode) {
    case StrategyMode::dataset_specific: {
      for (const auto& [tag, model] : bundle.forests)
        if (tag == eval_dataset) return rf_deep_score(model, rois);
      throw UsageError("score_scan: no dataset-specific forest for \"" + eval_dataset + "\"");
    }
    case StrategyMode::ensemble: {
      std::vector<double> scores;
      scores.reserve(bundle.forests.size());
      for (const auto& [tag, model] : bundle.forests) scores.push_back(rf_deep_score(model, rois));
      return detail::sorted_mean(std::move(scores));
    }
    default:
      return rf_deep_score(bundle.forests.front().second, rois);
  }
}

// ---------------------------------------------------------------------------
// Detector bundle persistence
// ---------------------------------------------------------------------------

inline void save_rf_bundle(const RfBundle& bundle, const std::string& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  nlohmann::json j;
  j["type"] = "rf-deep";
  j["method_label"] = bundle.method_label;
  j["strategy"] = strategy_name(bundle.cfg.mode);
  j["held_out"] = bundle.cfg.held_out;
  j["background_roi_count"] = bundle.cfg.background_roi_count;
  j["training_rows_per_tag"] = bundle.training_rows_per_tag;
  auto& forests = j["forests"] = nlohmann::json::array();
  for (std::size_t i = 0; i < bundle.forests.size(); ++i) {
    const std::string file = "forest_" + std::to_string(i) + ".json";
    forests.push_back({{"dataset", bundle.forests[i].first}, {"file", file}});
    forest::save_forest(bundle.forests[i].second, (fs::path(dir) / file).string());
  }
  std::ofstream out(fs::path(dir) / "manifest.json");
  if (!out) throw DataFormatError("cannot write bundle manifest in " + dir);
  out << j.dump(2) << "\n";
}

inline RfBundle load_rf_bundle(const std::string& dir) {
  namespace fs = std::filesystem;
  std::ifstream in(fs::path(dir) / "manifest.json");
  if (!in) throw DataFormatError("cannot open bundle manifest in " + dir);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw DataFormatError("bundle manifest in " + dir + ": " + e.what());
  }
  RfBundle bundle;
  try {
    if (j.at("type").get<std::string>() != "rf-deep")
      throw DataFormatError("bundle in " + dir + " is not an rf-deep bundle");
    bundle.method_label = j.at("method_label").get<std::string>();
    bundle.cfg.mode = strategy_from_name(j.at("strategy").get<std::string>());
    bundle.cfg.held_out = j.at("held_out").get<std::string>();
    bundle.cfg.background_roi_count = j.at("background_roi_count").get<std::size_t>();
    bundle.training_rows_per_tag =
        j.at("training_rows_per_tag").get<std::map<std::string, std::size_t>>();
    for (const auto& fj : j.at("forests")) {
      const std::string tag = fj.at("dataset").get<std::string>();
      const std::string file = fj.at("file").get<std::string>();
      bundle.forests.push_back({tag, forest::load_forest((fs::path(dir) / file).string())});
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataFormatError("bundle manifest in " + dir + ": " + e.what());
  }
  if (!bundle.forests.empty()) bundle.params = bundle.forests.front().second.params;
  return bundle;
}

/// Gaussian model persistence: JSON header plus a binary blob holding the
/// mean then the row-major covariance as f64; the precision is rebuilt on
/// load from the identical covariance bits.
inline void save_md_model(const GaussianOodModel& model, const std::string& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  const Eigen::Index d = model.mean.size();
  nlohmann::json j;
  j["type"] = "md-deep";
  j["dim"] = d;
  j["shrinkage"] = model.shrinkage;
  j["blob"] = "gaussian.raw";
  std::ofstream out(fs::path(dir) / "manifest.json");
  if (!out) throw DataFormatError("cannot write bundle manifest in " + dir);
  out << j.dump(2) << "\n";
  std::ofstream blob(fs::path(dir) / "gaussian.raw", std::ios::binary);
  if (!blob) throw DataFormatError("cannot write gaussian blob in " + dir);
  blob.write(reinterpret_cast<const char*>(model.mean.data()),
             static_cast<std::streamsize>(sizeof(double) * static_cast<std::size_t>(d)));
  for (Eigen::Index r = 0; r < d; ++r)
    for (Eigen::Index c = 0; c < d; ++c) {
      const double v = model.covariance(r, c);
      blob.write(reinterpret_cast<const char*>(&v), sizeof(double));
    }
}

inline GaussianOodModel load_md_model(const std::string& dir) {
  namespace fs = std::filesystem;
  std::ifstream in(fs::path(dir) / "manifest.json");
  if (!in) throw DataFormatError("cannot open bundle manifest in " + dir);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw DataFormatError("bundle manifest in " + dir + ": " + e.what());
  }
  GaussianOodModel model;
  Eigen::Index d = 0;
  std::string blob_name;
  try {
    if (j.at("type").get<std::string>() != "md-deep")
      throw DataFormatError("bundle in " + dir + " is not an md-deep bundle");
    d = j.at("dim").get<Eigen::Index>();
    model.shrinkage = j.at("shrinkage").get<double>();
    blob_name = j.at("blob").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw DataFormatError("bundle manifest in " + dir + ": " + e.what());
  }
  std::ifstream blob(fs::path(dir) / blob_name, std::ios::binary);
  if (!blob) throw DataFormatError("cannot open gaussian blob in " + dir);
  model.mean.resize(d);
  blob.read(reinterpret_cast<char*>(model.mean.data()),
            static_cast<std::streamsize>(sizeof(double) * static_cast<std::size_t>(d)));
  model.covariance.resize(d, d);
  for (Eigen::Index r = 0; r < d; ++r)
    for (Eigen::Index c = 0; c < d; ++c) {
      double v = 0.0;
      blob.read(reinterpret_cast<char*>(&v), sizeof(double));
      model.covariance(r, c) = v;
    }
  if (!blob) throw DataFormatError("gaussian blob in " + dir + " is truncated");
  const Eigen::LLT<Eigen::MatrixXd> llt(model.covariance);
  if (llt.info() != Eigen::Success)
    throw EstimationError("load_md_model: covariance is not positive definite");
  model.precision = llt.solve(Eigen::MatrixXd::Identity(d, d));
  return model;
}

}  // namespace oodkit::detectors
