// Copyright (c) 2026, the oodkit authors
// SPDX-License-Identifier: Apache-2.0

#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <map>
#include <set>

#include "oodkit/grid.hpp"
#include "oodkit/roi.hpp"

using namespace oodkit;
using grid3d::LabelMask;
using grid3d::Vec3i;
using grid3d::VolumeGrid;

namespace {

LabelMask block(Vec3i dims, Vec3i corner, Vec3i size) {
  LabelMask m(dims);
  for (int k = corner.z; k < corner.z + size.z; ++k)
    for (int j = corner.y; j < corner.y + size.y; ++j)
      for (int i = corner.x; i < corner.x + size.x; ++i) m.set(i, j, k);
  return m;
}

bool contains(const grid3d::BoxRegion& box, const grid3d::BoxRegion& inner) {
  for (int a = 0; a < 3; ++a) {
    if (box.corner[a] > inner.corner[a]) return false;
    if (box.corner[a] + box.size[a] < inner.corner[a] + inner.size[a]) return false;
  }
  return true;
}

}  // namespace

TEST_CASE("anchored ROIs contain a small bbox and vary") {
  const Vec3i dims{256, 256, 256};
  const LabelMask mask = block(dims, {118, 118, 118}, {20, 20, 20});
  roi::RoiConfig cfg;
  cfg.n_rois = 4;
  cfg.crop_size_vox = 128;
  Rng rng(99);
  const auto rois = roi::anchor_rois(mask, dims, cfg, rng);
  REQUIRE(rois.size() == 4);
  const grid3d::BoxRegion bbox{{118, 118, 118}, {20, 20, 20}};
  std::set<std::tuple<int, int, int>> corners;
  for (const auto& r : rois) {
    CHECK(r.kind == roi::RoiKind::tumor_anchored);
    CHECK(r.anchor_component == 0);
    CHECK(r.box.size == Vec3i{128, 128, 128});
    CHECK(contains(r.box, bbox));
    corners.insert({r.box.corner.x, r.box.corner.y, r.box.corner.z});
  }
  CHECK(corners.size() > 1);  // feasible corner set is huge; draws differ
}

TEST_CASE("oversized tumors get centroid-centered clamped crops") {
  const Vec3i dims{200, 200, 200};
  const LabelMask mask = block(dims, {20, 20, 20}, {150, 150, 150});
  roi::RoiConfig cfg;
  cfg.n_rois = 4;
  cfg.crop_size_vox = 128;
  Rng rng(1);
  const auto rois = roi::anchor_rois(mask, dims, cfg, rng);
  REQUIRE(rois.size() == 4);
  for (const auto& r : rois) {
    CHECK(r.box == rois.front().box);  // no randomness on the oversize path
    // centroid 94.5 -> corner round(94.5 - 63.5) = 31
    CHECK(r.box.corner == Vec3i{31, 31, 31});
    CHECK(r.box.size == Vec3i{128, 128, 128});
  }
}

TEST_CASE("components are assigned round-robin by size") {
  const Vec3i dims{64, 64, 64};
  LabelMask mask = block(dims, {4, 4, 4}, {6, 6, 6});  // larger first
  for (int k = 40; k < 43; ++k)
    for (int j = 40; j < 43; ++j)
      for (int i = 40; i < 43; ++i) mask.set(i, j, k);
  roi::RoiConfig cfg;
  cfg.n_rois = 4;
  cfg.crop_size_vox = 16;
  Rng rng(5);
  const auto rois = roi::anchor_rois(mask, dims, cfg, rng);
  REQUIRE(rois.size() == 4);
  CHECK(rois[0].anchor_component == 0);
  CHECK(rois[1].anchor_component == 1);
  CHECK(rois[2].anchor_component == 0);
  CHECK(rois[3].anchor_component == 1);
}

TEST_CASE("round-robin fairness for arbitrary component counts") {
  const Vec3i dims{60, 20, 20};
  LabelMask mask(dims);
  for (int c = 0; c < 3; ++c) mask.set(5 + 20 * c, 10, 10);
  roi::RoiConfig cfg;
  cfg.n_rois = 7;
  cfg.crop_size_vox = 8;
  Rng rng(2);
  const auto rois = roi::anchor_rois(mask, dims, cfg, rng);
  std::map<int, int> counts;
  for (const auto& r : rois) counts[r.anchor_component]++;
  for (const auto& [comp, n] : counts) {
    CHECK(n >= 7 / 3);
    CHECK(n <= (7 + 2) / 3);
  }
}

TEST_CASE("anchor_rois is deterministic and clamped") {
  const Vec3i dims{40, 50, 60};
  const LabelMask mask = block(dims, {2, 45, 55}, {5, 4, 3});  // near the far corner
  roi::RoiConfig cfg;
  cfg.n_rois = 6;
  cfg.crop_size_vox = 24;
  Rng rng_a(123), rng_b(123);
  const auto a = roi::anchor_rois(mask, dims, cfg, rng_a);
  const auto b = roi::anchor_rois(mask, dims, cfg, rng_b);
  CHECK(a == b);
  for (const auto& r : a) {
    for (int ax = 0; ax < 3; ++ax) {
      CHECK(r.box.corner[ax] >= 0);
      CHECK(r.box.corner[ax] + r.box.size[ax] <= dims[ax]);
    }
    CHECK(contains(r.box, grid3d::BoxRegion{{2, 45, 55}, {5, 4, 3}}));
  }
}

TEST_CASE("empty mask raises NoSegmentation") {
  roi::RoiConfig cfg;
  cfg.crop_size_vox = 8;
  Rng rng(0);
  CHECK_THROWS_AS(roi::anchor_rois(LabelMask({16, 16, 16}), {16, 16, 16}, cfg, rng),
                  NoSegmentationError);
}

TEST_CASE("background ROIs respect the tumor-overlap threshold") {
  const Vec3i dims{64, 64, 64};
  const LabelMask mask = block(dims, {10, 10, 10}, {10, 10, 10});
  roi::RoiConfig cfg;
  cfg.crop_size_vox = 32;
  Rng rng(31);
  const auto rois = roi::sample_background_rois(mask, dims, 3, cfg, rng);
  REQUIRE(rois.size() == 3);
  for (const auto& r : rois) {
    CHECK(r.kind == roi::RoiKind::background);
    CHECK_FALSE(r.overlap_violating);
    std::int64_t tumor = 0;
    for (int k = r.box.corner.z; k < r.box.corner.z + 32; ++k)
      for (int j = r.box.corner.y; j < r.box.corner.y + 32; ++j)
        for (int i = r.box.corner.x; i < r.box.corner.x + 32; ++i) tumor += mask.at(i, j, k);
    CHECK(static_cast<double>(tumor) / (32.0 * 32.0 * 32.0) <= 0.10);
  }
}

TEST_CASE("background sampling on an empty mask accepts the first draw") {
  const Vec3i dims{32, 32, 32};
  Rng rng(8);
  roi::RoiConfig cfg;
  cfg.crop_size_vox = 16;
  const auto rois = roi::sample_background_rois(LabelMask(dims), dims, 2, cfg, rng);
  REQUIRE(rois.size() == 2);
  // One corner draw per axis and per ROI: no rejections happened.
  CHECK(rois[1].seed_draw == rois[0].seed_draw + 3);
}

TEST_CASE("a mask filling the grid forces flagged background boxes") {
  const Vec3i dims{24, 24, 24};
  const LabelMask full = block(dims, {0, 0, 0}, dims);
  roi::RoiConfig cfg;
  cfg.crop_size_vox = 16;
  Rng rng(77);
  const auto rois = roi::sample_background_rois(full, dims, 2, cfg, rng);
  REQUIRE(rois.size() == 2);
  for (const auto& r : rois) CHECK(r.overlap_violating);
}

TEST_CASE("background sampling rejects grids smaller than the crop") {
  roi::RoiConfig cfg;
  cfg.crop_size_vox = 64;
  Rng rng(0);
  CHECK_THROWS_AS(
      roi::sample_background_rois(LabelMask({32, 64, 64}), {32, 64, 64}, 1, cfg, rng),
      std::invalid_argument);
}

TEST_CASE("crop copies the subarray and pads outside the grid") {
  VolumeGrid v({4, 4, 4}, {1, 1, 1}, {});
  v.values.resize(64);
  for (std::size_t i = 0; i < 64; ++i) v.values[i] = static_cast<float>(i);

  const auto inside = roi::crop(v, {{1, 1, 1}, {2, 2, 2}}, -1.0f);
  CHECK(inside.dims == Vec3i{2, 2, 2});
  for (int k = 0; k < 2; ++k)
    for (int j = 0; j < 2; ++j)
      for (int i = 0; i < 2; ++i) CHECK(inside.at(i, j, k) == v.at(i + 1, j + 1, k + 1));

  const auto past = roi::crop(v, {{3, 0, 0}, {2, 4, 4}}, 0.0f);
  for (int k = 0; k < 4; ++k)
    for (int j = 0; j < 4; ++j) {
      CHECK(past.at(0, j, k) == v.at(3, j, k));
      CHECK(past.at(1, j, k) == 0.0f);  // the out-of-grid slab
    }

  const auto constant = roi::crop(VolumeGrid::filled({3, 3, 3}, {1, 1, 1}, 4.0f),
                                  {{-1, -1, -1}, {2, 2, 2}}, 4.0f);
  for (float x : constant.values) CHECK(x == 4.0f);
}

TEST_CASE("ROI manifests round-trip") {
  namespace fs = std::filesystem;
  const Vec3i dims{64, 64, 64};
  const LabelMask mask = block(dims, {20, 20, 20}, {8, 8, 8});
  roi::RoiConfig cfg;
  cfg.crop_size_vox = 32;
  Rng rng(15);
  auto rois = roi::anchor_rois(mask, dims, cfg, rng);
  const auto bg = roi::sample_background_rois(mask, dims, 2, cfg, rng);
  rois.insert(rois.end(), bg.begin(), bg.end());

  const auto path = (fs::temp_directory_path() / "oodkit_rois.jsonl").string();
  roi::write_roi_manifest(path, "scan42", rois);
  const auto back = roi::read_roi_manifest(path);
  REQUIRE(back.size() == rois.size());
  for (std::size_t i = 0; i < rois.size(); ++i) {
    CHECK(back[i].scan_id == "scan42");
    CHECK(back[i].spec == rois[i]);
  }
}
