// Copyright (c) 2026, the oodkit authors
// SPDX-License-Identifier: Apache-2.0
//
// Feature descriptor construction: GAP pooling of encoder stage maps,
// stage-subset selection, and a synthetic descriptor generator for
// desk-scale verification. The encoder itself is an external feature
// provider; its stage maps arrive as channel-major binaries.

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "oodkit/errors.hpp"
#include "oodkit/grid.hpp"
#include "oodkit/rng.hpp"

namespace oodkit::features {

using grid3d::Vec3i;

/// Encoder stage channel widths: the patch embedding (48) followed by the
/// four transformer stages (96, 192, 384, 768).
inline constexpr std::array<int, 5> kStageChannels{48, 96, 192, 384, 768};
/// Frozen slice offsets of each stage inside the full descriptor.
inline constexpr std::array<int, 5> kStageOffsets{0, 48, 144, 336, 720};
/// Full descriptor length (sum of stage widths).
inline constexpr int kDescriptorDim = 1488;

/// One encoder stage map, channel-major: value(c, s) = values[c*vol + s]
/// where s runs x-fastest over the spatial grid.
struct StageFeatureMap {
  int stage_index = 0;  // 0..4
  int channels = 0;
  Vec3i grid;
  std::vector<float> values;

  std::int64_t spatial_size() const { return grid3d::voxel_count(grid); }
  void validate() const {
    if (stage_index < 0 || stage_index > 4)
      throw std::invalid_argument("StageFeatureMap: stage_index must be 0..4");
    if (channels != kStageChannels[static_cast<std::size_t>(stage_index)])
      throw std::invalid_argument("StageFeatureMap: channel count does not match stage width");
    grid3d::check_dims(grid);
    if (static_cast<std::int64_t>(values.size()) != channels * spatial_size())
      throw std::invalid_argument("StageFeatureMap: values length must be channels * volume");
  }
};

/// Nonempty subset of encoder stages {0..4}, kept sorted and unique.
struct StageSelection {
  std::vector<int> included_stages;

  static StageSelection all() { return StageSelection{{0, 1, 2, 3, 4}}; }
  static StageSelection of(std::vector<int> stages) {
    std::sort(stages.begin(), stages.end());
    stages.erase(std::unique(stages.begin(), stages.end()), stages.end());
    StageSelection s{std::move(stages)};
    s.validate();
    return s;
  }
  void validate() const {
    if (included_stages.empty()) throw std::invalid_argument("StageSelection: empty");
    for (int s : included_stages)
      if (s < 0 || s > 4) throw std::invalid_argument("StageSelection: stage out of range");
  }
  int dim() const {
    int d = 0;
    for (int s : included_stages) d += kStageChannels[static_cast<std::size_t>(s)];
    return d;
  }
};

/// Pooled per-ROI feature vector with provenance. Label convention is
/// fixed: OOD is the positive class (id = 0, ood = 1).
struct ScanDescriptor {
  std::string scan_id;
  int roi_index = 0;
  std::string dataset;
  int label = 0;
  std::vector<float> vec;
};

struct DescriptorSet {
  std::size_t dim = 0;
  std::vector<ScanDescriptor> rows;

  void push(ScanDescriptor d) {
    if (rows.empty() && dim == 0) dim = d.vec.size();
    if (d.vec.size() != dim)
      throw std::invalid_argument("DescriptorSet: inconsistent descriptor length");
    rows.push_back(std::move(d));
  }
  bool empty() const { return rows.empty(); }
};

/// Rows of one scan in stored order, grouped by first appearance.
inline std::vector<std::pair<std::string, std::vector<const ScanDescriptor*>>> group_scans(
    const DescriptorSet& set) {
  std::vector<std::pair<std::string, std::vector<const ScanDescriptor*>>> groups;
  std::map<std::string, std::size_t> pos;
  for (const auto& row : set.rows) {
    auto it = pos.find(row.scan_id);
    if (it == pos.end()) {
      pos.emplace(row.scan_id, groups.size());
      groups.push_back({row.scan_id, {&row}});
    } else {
      groups[it->second].second.push_back(&row);
    }
  }
  return groups;
}

// ---------------------------------------------------------------------------
// Pooling
// ---------------------------------------------------------------------------

/// Global average pooling: per channel, the arithmetic mean over the
/// spatial grid; selected stages are concatenated in stage order. The full
/// selection yields the 1488-length descriptor.
inline std::vector<float> gap_pool(std::span<const StageFeatureMap> maps,
                                   const StageSelection& selection) {
  selection.validate();
  std::vector<float> out;
  out.reserve(static_cast<std::size_t>(selection.dim()));
  for (int stage : selection.included_stages) {
    const StageFeatureMap* map = nullptr;
    for (const auto& m : maps)
      if (m.stage_index == stage) {
        if (map) throw std::invalid_argument("gap_pool: duplicate map for stage " + std::to_string(stage));
        map = &m;
      }
    if (!map) throw std::invalid_argument("gap_pool: missing map for stage " + std::to_string(stage));
    map->validate();
    const std::int64_t vol = map->spatial_size();
    for (int c = 0; c < map->channels; ++c) {
      double sum = 0.0;
      const float* base = map->values.data() + static_cast<std::size_t>(c) * vol;
      for (std::int64_t s = 0; s < vol; ++s) {
        if (!std::isfinite(base[s])) throw std::invalid_argument("gap_pool: non-finite input");
        sum += base[s];
      }
      out.push_back(static_cast<float>(sum / static_cast<double>(vol)));
    }
  }
  return out;
}

/// Slices a full-length descriptor down to the selected stages using the
/// frozen offsets; selecting everything is the identity.
inline std::vector<float> stage_subset(const std::vector<float>& descriptor,
                                       const StageSelection& selection) {
  selection.validate();
  if (descriptor.size() != static_cast<std::size_t>(kDescriptorDim))
    throw std::invalid_argument("stage_subset: descriptor must be full-length (1488)");
  std::vector<float> out;
  out.reserve(static_cast<std::size_t>(selection.dim()));
  for (int s : selection.included_stages) {
    const int off = kStageOffsets[static_cast<std::size_t>(s)];
    const int w = kStageChannels[static_cast<std::size_t>(s)];
    out.insert(out.end(), descriptor.begin() + off, descriptor.begin() + off + w);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Synthetic descriptor generator
// ---------------------------------------------------------------------------

/// One synthetic OOD cohort: its mean is shifted by `shift` on a random
/// `informative_fraction` of dimensions (sparse shifts, so classifier
/// feature selection is actually exercised).
struct SynthCohortSpec {
  std::string name;
  std::size_t n_scans = 60;
  double shift = 1.0;
  double informative_fraction = 0.1;
};

struct SynthConfig {
  std::size_t dim = 64;
  std::size_t n_id_scans = 60;
  int n_rois = 4;
  double overlap = 1.0;      // per-ROI noise scale
  double scan_sigma = 0.5;   // per-scan offset scale
  std::vector<SynthCohortSpec> cohorts;
  std::uint64_t rng_seed = 0;

  /// Two near cohorts at a small shift and two far cohorts at a large one.
  static SynthConfig default_four_cohorts(std::uint64_t seed, std::size_t n_ood = 60,
                                          double near_shift = 1.2, double far_shift = 6.0,
                                          double informative_fraction = 0.1) {
    SynthConfig cfg;
    cfg.rng_seed = seed;
    cfg.cohorts = {{"near1", n_ood, near_shift, informative_fraction},
                   {"near2", n_ood, near_shift, informative_fraction},
                   {"far1", n_ood, far_shift, informative_fraction},
                   {"far2", n_ood, far_shift, informative_fraction}};
    return cfg;
  }

  void validate() const {
    if (dim < 1) throw std::invalid_argument("SynthConfig: dim must be >= 1");
    if (n_rois < 1) throw std::invalid_argument("SynthConfig: n_rois must be >= 1");
    if (!(overlap >= 0) || !(scan_sigma >= 0))
      throw std::invalid_argument("SynthConfig: noise scales must be >= 0");
    for (const auto& c : cohorts) {
      if (c.shift < 0) throw std::invalid_argument("SynthConfig: shift must be >= 0");
      if (!(c.informative_fraction > 0) || c.informative_fraction > 1)
        throw std::invalid_argument("SynthConfig: informative_fraction must be in (0, 1]");
    }
  }
};

struct SynthResult {
  DescriptorSet id;
  std::vector<std::pair<std::string, DescriptorSet>> cohorts;
  std::map<std::string, std::vector<double>> cohort_means;  // configured means, incl. "ID"
};

namespace detail {

inline std::vector<std::size_t> pick_dims(std::size_t dim, double fraction, Rng& rng) {
  std::size_t k = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(dim)));
  k = std::clamp<std::size_t>(k, 1, dim);
  std::vector<std::size_t> all(dim);
  std::iota(all.begin(), all.end(), std::size_t{0});
  for (std::size_t i = 0; i < k; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(rng.uniform_u64(dim - i));
    std::swap(all[i], all[j]);
  }
  all.resize(k);
  std::sort(all.begin(), all.end());
  return all;
}

inline DescriptorSet generate_cohort(const SynthConfig& cfg, const std::string& name,
                                     std::size_t n_scans, const std::vector<double>& mean,
                                     int label) {
  DescriptorSet set;
  set.dim = cfg.dim;
  for (std::size_t s = 0; s < n_scans; ++s) {
    Rng rng = Rng::derived(cfg.rng_seed, "synth-scan:" + name, s);
    std::vector<double> center(cfg.dim);
    for (std::size_t d = 0; d < cfg.dim; ++d)
      center[d] = mean[d] + cfg.scan_sigma * rng.normal();
    char scan_id[64];
    std::snprintf(scan_id, sizeof scan_id, "%s_%04zu", name.c_str(), s);
    for (int r = 0; r < cfg.n_rois; ++r) {
      ScanDescriptor row;
      row.scan_id = scan_id;
      row.roi_index = r;
      row.dataset = name;
      row.label = label;
      row.vec.resize(cfg.dim);
      for (std::size_t d = 0; d < cfg.dim; ++d)
        row.vec[d] = static_cast<float>(center[d] + cfg.overlap * rng.normal());
      set.rows.push_back(std::move(row));
    }
  }
  return set;
}

}  // namespace detail

/// Deterministic synthetic descriptor sets: ID from a zero-mean diagonal
/// Gaussian; each OOD cohort mean-shifted on its own random informative
/// dimensions. ROIs of a scan share a per-scan offset.
inline SynthResult synth_generate(const SynthConfig& cfg) {
  cfg.validate();
  SynthResult out;
  out.cohort_means["ID"] = std::vector<double>(cfg.dim, 0.0);
  out.id = detail::generate_cohort(cfg, "ID", cfg.n_id_scans, out.cohort_means["ID"], 0);
  for (const auto& spec : cfg.cohorts) {
    Rng dims_rng = Rng::derived(cfg.rng_seed, "synth-dims:" + spec.name);
    const auto dims = detail::pick_dims(cfg.dim, spec.informative_fraction, dims_rng);
    std::vector<double> mean(cfg.dim, 0.0);
    for (auto d : dims) mean[d] = spec.shift;
    out.cohort_means[spec.name] = mean;
    out.cohorts.push_back(
        {spec.name, detail::generate_cohort(cfg, spec.name, spec.n_scans, mean, 1)});
  }
  return out;
}

}  // namespace oodkit::features
