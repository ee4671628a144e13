// Copyright (c) 2026, the oodkit authors
// SPDX-License-Identifier: Apache-2.0

#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>

#include "oodkit/eval.hpp"
#include "oodkit/feature_table.hpp"
#include "oodkit/features.hpp"
#include "oodkit/rng.hpp"

using namespace oodkit;
using features::DescriptorSet;
using features::ScanDescriptor;
using features::StageFeatureMap;
using features::StageSelection;

namespace {

/// Lattice-valued map so double accumulation is exact and pooling is
/// bit-invariant under spatial permutation.
StageFeatureMap random_map(int stage, grid3d::Vec3i grid, Rng& rng) {
  StageFeatureMap m;
  m.stage_index = stage;
  m.channels = features::kStageChannels[static_cast<std::size_t>(stage)];
  m.grid = grid;
  m.values.resize(static_cast<std::size_t>(m.channels) * grid3d::voxel_count(grid));
  for (auto& v : m.values)
    v = static_cast<float>(rng.uniform_int(-8192, 8192)) / 1024.0f;
  return m;
}

std::vector<StageFeatureMap> full_maps(grid3d::Vec3i grid, Rng& rng) {
  std::vector<StageFeatureMap> maps;
  for (int s = 0; s < 5; ++s) maps.push_back(random_map(s, grid, rng));
  return maps;
}

}  // namespace

TEST_CASE("gap_pool of constant maps is constant and full-length") {
  std::vector<StageFeatureMap> maps;
  for (int s = 0; s < 5; ++s) {
    StageFeatureMap m;
    m.stage_index = s;
    m.channels = features::kStageChannels[static_cast<std::size_t>(s)];
    m.grid = {2, 2, 2};
    m.values.assign(static_cast<std::size_t>(m.channels) * 8, 3.25f);
    maps.push_back(std::move(m));
  }
  const auto vec = features::gap_pool(maps, StageSelection::all());
  REQUIRE(vec.size() == 1488);
  for (float v : vec) CHECK(v == 3.25f);
}

TEST_CASE("gap_pool stage-0 selection yields 48 channels") {
  Rng rng(1);
  const auto maps = full_maps({3, 3, 3}, rng);
  const auto vec = features::gap_pool(maps, StageSelection::of({0}));
  CHECK(vec.size() == 48);
}

TEST_CASE("gap_pool averages a 2x2x2 channel") {
  StageFeatureMap m;
  m.stage_index = 0;
  m.channels = 48;
  m.grid = {2, 2, 2};
  m.values.assign(48 * 8, 0.0f);
  for (int s = 4; s < 8; ++s) m.values[static_cast<std::size_t>(s)] = 1.0f;  // channel 0
  const std::vector<StageFeatureMap> maps{m};
  const auto vec = features::gap_pool(maps, StageSelection::of({0}));
  CHECK(vec[0] == 0.5f);
  CHECK(vec[1] == 0.0f);
}

TEST_CASE("gap_pool rejects missing stages and non-finite inputs") {
  Rng rng(2);
  auto maps = full_maps({2, 2, 2}, rng);
  maps.pop_back();  // drop stage 4
  CHECK_THROWS_AS(features::gap_pool(maps, StageSelection::all()), std::invalid_argument);

  auto maps2 = full_maps({2, 2, 2}, rng);
  maps2[1].values[3] = std::numeric_limits<float>::infinity();
  CHECK_THROWS_AS(features::gap_pool(maps2, StageSelection::all()), std::invalid_argument);
}

TEST_CASE("gap_pool is invariant under spatial permutation") {
  Rng rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    auto map = random_map(1, {3, 2, 2}, rng);
    const std::vector<StageFeatureMap> maps{map};
    const auto base = features::gap_pool(maps, StageSelection::of({1}));

    // Permute spatial positions consistently across channels.
    const std::int64_t vol = map.spatial_size();
    std::vector<std::size_t> perm(static_cast<std::size_t>(vol));
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    rng.shuffle(perm);
    StageFeatureMap shuffled = map;
    for (int c = 0; c < map.channels; ++c)
      for (std::int64_t s = 0; s < vol; ++s)
        shuffled.values[static_cast<std::size_t>(c * vol + static_cast<std::int64_t>(perm[static_cast<std::size_t>(s)]))] =
            map.values[static_cast<std::size_t>(c * vol + s)];
    const std::vector<StageFeatureMap> smaps{shuffled};
    CHECK(features::gap_pool(smaps, StageSelection::of({1})) == base);
  }
}

TEST_CASE("gap_pool is linear") {
  Rng rng(4);
  const auto x = random_map(2, {2, 2, 2}, rng);
  const auto y = random_map(2, {2, 2, 2}, rng);
  const double alpha = 0.5, beta = 0.25;  // exact in binary
  StageFeatureMap mix = x;
  for (std::size_t i = 0; i < mix.values.size(); ++i)
    mix.values[i] = static_cast<float>(alpha * x.values[i] + beta * y.values[i]);
  const std::vector<StageFeatureMap> mx{x}, my{y}, mm{mix};
  const auto px = features::gap_pool(mx, StageSelection::of({2}));
  const auto py = features::gap_pool(my, StageSelection::of({2}));
  const auto pm = features::gap_pool(mm, StageSelection::of({2}));
  for (std::size_t i = 0; i < pm.size(); ++i)
    CHECK(pm[i] == Catch::Approx(alpha * px[i] + beta * py[i]).margin(1e-6));
}

TEST_CASE("stage_subset slices by the frozen offsets") {
  std::vector<float> full(1488);
  for (std::size_t i = 0; i < full.size(); ++i) full[i] = static_cast<float>(i);

  CHECK(features::stage_subset(full, StageSelection::all()) == full);

  const auto s4 = features::stage_subset(full, StageSelection::of({4}));
  REQUIRE(s4.size() == 768);
  CHECK(s4.front() == 720.0f);
  CHECK(s4.back() == 1487.0f);

  CHECK(features::stage_subset(full, StageSelection::of({1, 2})).size() == 288);

  // A partition of stages reconstructs the original by concatenation.
  const auto a = features::stage_subset(full, StageSelection::of({0, 1}));
  const auto b = features::stage_subset(full, StageSelection::of({2, 3, 4}));
  std::vector<float> glued = a;
  glued.insert(glued.end(), b.begin(), b.end());
  CHECK(glued == full);

  CHECK_THROWS_AS(features::stage_subset(std::vector<float>(100), StageSelection::of({1})),
                  std::invalid_argument);
  CHECK_THROWS_AS(StageSelection::of({}), std::invalid_argument);
  CHECK_THROWS_AS(StageSelection::of({5}), std::invalid_argument);
}

TEST_CASE("synth_generate is deterministic and shift-0 is indistinguishable") {
  features::SynthConfig cfg;
  cfg.dim = 24;
  cfg.n_id_scans = 40;
  cfg.rng_seed = 97;
  cfg.cohorts = {{"flat", 40, 0.0, 0.25}};
  const auto a = features::synth_generate(cfg);
  const auto b = features::synth_generate(cfg);
  REQUIRE(a.id.rows.size() == b.id.rows.size());
  for (std::size_t i = 0; i < a.id.rows.size(); ++i)
    CHECK(a.id.rows[i].vec == b.id.rows[i].vec);
  REQUIRE(a.cohorts.size() == 1);
  for (std::size_t i = 0; i < a.cohorts[0].second.rows.size(); ++i)
    CHECK(a.cohorts[0].second.rows[i].vec == b.cohorts[0].second.rows[i].vec);

  // With zero shift, a simple sum-score detector sits at chance level.
  std::vector<double> id_scores, ood_scores;
  for (const auto& row : a.id.rows) {
    double s = 0.0;
    for (float v : row.vec) s += v;
    id_scores.push_back(s);
  }
  for (const auto& row : a.cohorts[0].second.rows) {
    double s = 0.0;
    for (float v : row.vec) s += v;
    ood_scores.push_back(s);
  }
  CHECK(eval::auroc(id_scores, ood_scores) == Catch::Approx(0.5).margin(0.05));
}

TEST_CASE("synth cohort sample means converge to the configured means") {
  features::SynthConfig cfg;
  cfg.dim = 16;
  cfg.n_id_scans = 200;
  cfg.rng_seed = 11;
  cfg.cohorts = {{"shifted", 200, 2.0, 0.25}};
  const auto res = features::synth_generate(cfg);
  const auto& mean = res.cohort_means.at("shifted");

  const auto& rows = res.cohorts[0].second.rows;
  const double n_scans = 200.0;
  const double n_rows = static_cast<double>(rows.size());
  // Scan offsets are shared across a scan's ROIs: var(mean) =
  // scan_sigma^2/n_scans + overlap^2/n_rows.
  const double sd = std::sqrt(cfg.scan_sigma * cfg.scan_sigma / n_scans +
                              cfg.overlap * cfg.overlap / n_rows);
  for (std::size_t d = 0; d < cfg.dim; ++d) {
    double s = 0.0;
    for (const auto& row : rows) s += row.vec[d];
    const double sample_mean = s / n_rows;
    CHECK(std::abs(sample_mean - mean[d]) <= 4.0 * sd);
  }
}

TEST_CASE("feature tables round-trip bit-exactly") {
  namespace fs = std::filesystem;
  const fs::path dir = fs::temp_directory_path() / "oodkit_tables";
  fs::create_directories(dir);

  features::SynthConfig cfg;
  cfg.dim = 9;
  cfg.n_id_scans = 6;
  cfg.rng_seed = 3;
  cfg.cohorts = {{"c1", 5, 1.0, 0.5}};
  const auto synth = features::synth_generate(cfg);

  const std::string csv = (dir / "t.csv").string();
  features::save_feature_table(synth.id, csv);
  const auto back = features::load_feature_table(csv);
  REQUIRE(back.rows.size() == synth.id.rows.size());
  CHECK(back.dim == synth.id.dim);
  for (std::size_t i = 0; i < back.rows.size(); ++i) {
    CHECK(back.rows[i].scan_id == synth.id.rows[i].scan_id);
    CHECK(back.rows[i].roi_index == synth.id.rows[i].roi_index);
    CHECK(back.rows[i].dataset == synth.id.rows[i].dataset);
    CHECK(back.rows[i].label == synth.id.rows[i].label);
    CHECK(back.rows[i].vec == synth.id.rows[i].vec);
  }

  const std::string bin = (dir / "t.json").string();
  features::save_feature_table(synth.cohorts[0].second, bin);
  const auto bin_back = features::load_feature_table(bin);
  REQUIRE(bin_back.rows.size() == synth.cohorts[0].second.rows.size());
  for (std::size_t i = 0; i < bin_back.rows.size(); ++i)
    CHECK(bin_back.rows[i].vec == synth.cohorts[0].second.rows[i].vec);
}

TEST_CASE("feature table errors name the offending row") {
  namespace fs = std::filesystem;
  const fs::path dir = fs::temp_directory_path() / "oodkit_tables_bad";
  fs::create_directories(dir);

  const std::string path = (dir / "bad.csv").string();
  std::ofstream(path) << "scan_id,roi_index,dataset,label,f0000,f0001\n"
                      << "s1,0,ID,0,1.0,2.0\n"
                      << "s2,1,ID,0,3.0\n";  // short row
  try {
    features::load_feature_table(path);
    FAIL("expected DataFormatError");
  } catch (const DataFormatError& e) {
    CHECK(std::string(e.what()).find("row 3") != std::string::npos);
  }

  const std::string nf = (dir / "nonfinite.csv").string();
  std::ofstream(nf) << "scan_id,roi_index,dataset,label,f0000\n"
                    << "s1,0,ID,0,inf\n";
  CHECK_THROWS_AS(features::load_feature_table(nf), DataFormatError);

  const std::string empty = (dir / "empty.csv").string();
  std::ofstream(empty) << "scan_id,roi_index,dataset,label,f0000,f0001\n";
  const auto set = features::load_feature_table(empty);
  CHECK(set.rows.empty());
  CHECK(set.dim == 2);
}

TEST_CASE("stage maps round-trip through the sidecar format") {
  namespace fs = std::filesystem;
  const fs::path dir = fs::temp_directory_path() / "oodkit_stagemaps";
  fs::create_directories(dir);
  Rng rng(21);
  const auto map = random_map(3, {2, 3, 2}, rng);
  const std::string path = (dir / "roi0_stage3.json").string();
  features::write_stage_map(path, map);
  const auto back = features::read_stage_map(path);
  CHECK(back.stage_index == map.stage_index);
  CHECK(back.channels == map.channels);
  CHECK(back.grid == map.grid);
  CHECK(back.values == map.values);
}
