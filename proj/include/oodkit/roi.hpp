// Copyright (c) 2026, the oodkit authors
// SPDX-License-Identifier: Apache-2.0
//
// Tumor-anchored and background ROI geometry: the n crops per scan that
// feed feature pooling.

#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "oodkit/errors.hpp"
#include "oodkit/grid.hpp"
#include "oodkit/rng.hpp"

namespace oodkit::roi {

using grid3d::BoxRegion;
using grid3d::LabelMask;
using grid3d::Vec3i;
using grid3d::VolumeGrid;

enum class RoiKind { tumor_anchored, background };

struct RoiSpec {
  BoxRegion box;
  int anchor_component = -1;  // index into the descending-size component list
  RoiKind kind = RoiKind::tumor_anchored;
  std::uint64_t seed_draw = 0;      // RNG draw count when this ROI was produced
  bool overlap_violating = false;   // background only: best-effort box above threshold
  bool operator==(const RoiSpec&) const = default;
};

struct RoiConfig {
  int n_rois = 4;
  int crop_size_vox = 128;
  std::uint64_t rng_seed = 0;

  void validate() const {
    if (n_rois < 1) throw std::invalid_argument("RoiConfig: n_rois must be >= 1");
    if (crop_size_vox < 8) throw std::invalid_argument("RoiConfig: crop_size must be >= 8");
  }
};

namespace detail {

/// Clamp a corner so the box [corner, corner+size) stays inside the grid;
/// the size shrinks only when the grid itself is smaller than the crop.
inline void clamp_box(BoxRegion& box, const Vec3i& dims) {
  for (int a = 0; a < 3; ++a) {
    box.size[a] = std::min(box.size[a], dims[a]);
    box.corner[a] = std::clamp(box.corner[a], 0, dims[a] - box.size[a]);
  }
}

}  // namespace detail

/// Tumor-anchored ROI sampling. Components are assigned round-robin in
/// descending-size order; each corner is drawn uniformly from the corners
/// that fully contain the anchor bbox, then clamped to the grid. Anchors
/// larger than the crop get a centroid-centered box instead.
inline std::vector<RoiSpec> anchor_rois(const LabelMask& mask, const Vec3i& grid_dims,
                                        const RoiConfig& cfg, Rng& rng,
                                        grid3d::Connectivity connectivity = grid3d::Connectivity::full26) {
  cfg.validate();
  if (mask.dims != grid_dims)
    throw std::invalid_argument("anchor_rois: mask dims must match grid dims");
  const auto comps = grid3d::connected_components(mask, connectivity);
  if (comps.empty())
    throw NoSegmentationError("anchor_rois: mask has no foreground component");

  const int K = cfg.crop_size_vox;
  std::vector<RoiSpec> out;
  out.reserve(static_cast<std::size_t>(cfg.n_rois));
  for (int r = 0; r < cfg.n_rois; ++r) {
    const int ci = r % static_cast<int>(comps.size());
    const BoxRegion& bbox = comps[static_cast<std::size_t>(ci)].bbox;
    RoiSpec spec;
    spec.kind = RoiKind::tumor_anchored;
    spec.anchor_component = ci;
    spec.seed_draw = rng.draw_count();
    spec.box.size = {K, K, K};
    const bool fits = bbox.size.x <= K && bbox.size.y <= K && bbox.size.z <= K;
    for (int a = 0; a < 3; ++a) {
      if (fits) {
        const int lo = bbox.corner[a] + bbox.size[a] - K;  // containing-corner range
        const int hi = bbox.corner[a];
        spec.box.corner[a] = static_cast<int>(rng.uniform_int(lo, hi));
      } else {
        const double centroid = bbox.corner[a] + (bbox.size[a] - 1) / 2.0;
        spec.box.corner[a] = static_cast<int>(std::llround(centroid - (K - 1) / 2.0));
      }
    }
    detail::clamp_box(spec.box, grid_dims);
    out.push_back(spec);
  }
  return out;
}

/// Background (non-tumor-centric) ROI sampling: corners uniform over valid
/// positions, redrawn while the box holds more than `max_overlap` tumor
/// foreground, up to `max_attempts`; after that the least-overlapping box
/// is kept and flagged.
inline std::vector<RoiSpec> sample_background_rois(const LabelMask& mask, const Vec3i& grid_dims,
                                                   int n, const RoiConfig& cfg, Rng& rng,
                                                   double max_overlap = 0.10,
                                                   int max_attempts = 100) {
  cfg.validate();
  if (mask.dims != grid_dims)
    throw std::invalid_argument("sample_background_rois: mask dims must match grid dims");
  const int K = cfg.crop_size_vox;
  for (int a = 0; a < 3; ++a)
    if (grid_dims[a] < K)
      throw std::invalid_argument("sample_background_rois: grid smaller than crop");

  const double box_volume = static_cast<double>(K) * K * K;
  std::vector<RoiSpec> out;
  out.reserve(static_cast<std::size_t>(n));
  for (int r = 0; r < n; ++r) {
    RoiSpec best;
    double best_frac = std::numeric_limits<double>::infinity();
    for (int attempt = 0; attempt < max_attempts; ++attempt) {
      RoiSpec spec;
      spec.kind = RoiKind::background;
      spec.anchor_component = -1;
      spec.seed_draw = rng.draw_count();
      spec.box.size = {K, K, K};
      for (int a = 0; a < 3; ++a)
        spec.box.corner[a] = static_cast<int>(rng.uniform_int(0, grid_dims[a] - K));
      std::int64_t tumor = 0;
      for (int k = spec.box.corner.z; k < spec.box.corner.z + K; ++k)
        for (int j = spec.box.corner.y; j < spec.box.corner.y + K; ++j)
          for (int i = spec.box.corner.x; i < spec.box.corner.x + K; ++i)
            tumor += mask.at(i, j, k);
      const double frac = static_cast<double>(tumor) / box_volume;
      if (frac < best_frac) {
        best = spec;
        best_frac = frac;
      }
      if (frac <= max_overlap) break;
    }
    best.overlap_violating = best_frac > max_overlap;
    out.push_back(best);
  }
  return out;
}

/// Extracts exactly box.size voxels; regions outside the grid are filled
/// with pad_value. Spacing is preserved.
inline VolumeGrid crop(const VolumeGrid& volume, const BoxRegion& box, float pad_value) {
  if (box.size.x < 1 || box.size.y < 1 || box.size.z < 1)
    throw std::invalid_argument("crop: box size must be >= 1 per axis");
  VolumeGrid out;
  out.dims = box.size;
  out.spacing_mm = volume.spacing_mm;
  out.values.resize(static_cast<std::size_t>(grid3d::voxel_count(box.size)), pad_value);
  std::size_t o = 0;
  for (int k = 0; k < box.size.z; ++k)
    for (int j = 0; j < box.size.y; ++j)
      for (int i = 0; i < box.size.x; ++i, ++o) {
        const int si = box.corner.x + i, sj = box.corner.y + j, sk = box.corner.z + k;
        if (si >= 0 && sj >= 0 && sk >= 0 && si < volume.dims.x && sj < volume.dims.y &&
            sk < volume.dims.z)
          out.values[o] = volume.at(si, sj, sk);
      }
  return out;
}

// ---------------------------------------------------------------------------
// ROI manifests (JSON lines, one record per ROI)
// ---------------------------------------------------------------------------

inline std::string kind_name(RoiKind k) {
  return k == RoiKind::tumor_anchored ? "tumor_anchored" : "background";
}

inline RoiKind kind_from_name(const std::string& s) {
  if (s == "tumor_anchored") return RoiKind::tumor_anchored;
  if (s == "background") return RoiKind::background;
  throw DataFormatError("unknown ROI kind: " + s);
}

inline void write_roi_manifest(const std::string& path, const std::string& scan_id,
                               const std::vector<RoiSpec>& rois) {
  std::ofstream out(path);
  if (!out) throw DataFormatError("cannot write ROI manifest " + path);
  for (const auto& r : rois) {
    nlohmann::json j;
    j["scan_id"] = scan_id;
    j["kind"] = kind_name(r.kind);
    j["corner"] = {r.box.corner.x, r.box.corner.y, r.box.corner.z};
    j["size"] = {r.box.size.x, r.box.size.y, r.box.size.z};
    j["anchor_component"] = r.anchor_component;
    j["seed_draw"] = r.seed_draw;
    if (r.kind == RoiKind::background) j["overlap_violating"] = r.overlap_violating;
    out << j.dump() << "\n";
  }
}

struct ManifestEntry {
  std::string scan_id;
  RoiSpec spec;
};

inline std::vector<ManifestEntry> read_roi_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataFormatError("cannot open ROI manifest " + path);
  std::vector<ManifestEntry> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
      ManifestEntry e;
      e.scan_id = j.at("scan_id").get<std::string>();
      e.spec.kind = kind_from_name(j.at("kind").get<std::string>());
      const auto c = j.at("corner");
      const auto s = j.at("size");
      e.spec.box.corner = {c[0].get<int>(), c[1].get<int>(), c[2].get<int>()};
      e.spec.box.size = {s[0].get<int>(), s[1].get<int>(), s[2].get<int>()};
      e.spec.anchor_component = j.at("anchor_component").get<int>();
      e.spec.seed_draw = j.at("seed_draw").get<std::uint64_t>();
      e.spec.overlap_violating = j.value("overlap_violating", false);
      out.push_back(std::move(e));
    } catch (const nlohmann::json::exception& ex) {
      throw DataFormatError("ROI manifest " + path + " line " + std::to_string(lineno) + ": " +
                            ex.what());
    }
  }
  return out;
}

}  // namespace oodkit::roi
