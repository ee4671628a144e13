// Copyright (c) 2026, the oodkit authors
// SPDX-License-Identifier: Apache-2.0
//
// Matched-seed experiment harness: per-run scan-level train/test splits,
// detector training, scan scoring, and balanced evaluation. Every method
// in a run shares the identical split and resample draws, so per-run
// metric differences are paired.

#pragma once

#include <map>
#include <string>
#include <vector>

#include "oodkit/detectors.hpp"
#include "oodkit/eval.hpp"
#include "oodkit/features.hpp"
#include "oodkit/rng.hpp"

namespace oodkit::experiments {

using detectors::LabeledCohorts;
using features::DescriptorSet;
using features::ScanDescriptor;

/// Splits a descriptor set scan-wise (all ROIs of a scan stay together).
inline std::pair<DescriptorSet, DescriptorSet> split_by_scan(const DescriptorSet& set,
                                                             double train_fraction, Rng& rng) {
  const auto groups = features::group_scans(set);
  if (groups.size() < 2)
    throw std::invalid_argument("split_by_scan: need at least 2 scans to split");
  std::vector<std::size_t> order(groups.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  rng.shuffle(order);
  std::size_t n_train = static_cast<std::size_t>(
      std::llround(train_fraction * static_cast<double>(groups.size())));
  n_train = std::clamp<std::size_t>(n_train, 1, groups.size() - 1);

  DescriptorSet train, test;
  train.dim = test.dim = set.dim;
  for (std::size_t i = 0; i < order.size(); ++i) {
    auto& dst = i < n_train ? train : test;
    for (const auto* row : groups[order[i]].second) dst.rows.push_back(*row);
  }
  return {std::move(train), std::move(test)};
}

struct MetricPair {
  double auroc_pct = 0.0;
  double fpr95_pct = 0.0;
};

/// method -> dataset -> metrics for one run.
using RunTable = std::map<std::string, std::map<std::string, MetricPair>>;

struct ExperimentConfig {
  double train_fraction = 0.5;
  int n_draws = 10;
  int n_runs = 100;
  std::uint64_t master_seed = 0;
  forest::ForestParams forest_params;
  int threads = 1;
};

namespace detail {

inline std::vector<double> scan_scores_rf(const forest::ForestModel& model,
                                          const DescriptorSet& set) {
  std::vector<double> out;
  for (const auto& [scan, rois] : features::group_scans(set))
    out.push_back(detectors::rf_deep_score(model, rois));
  return out;
}

inline std::vector<double> scan_scores_md(const detectors::GaussianOodModel& model,
                                          const DescriptorSet& set) {
  std::vector<double> out;
  for (const auto& [scan, rois] : features::group_scans(set))
    out.push_back(detectors::md_score(model, rois));
  return out;
}

inline MetricPair balanced_pair(const std::vector<double>& id_scores,
                                const std::vector<double>& ood_scores, int n_draws,
                                std::uint64_t draw_seed) {
  Rng rng(draw_seed);
  const auto m = eval::balanced_eval(id_scores, ood_scores, n_draws, rng);
  return {100.0 * m.auroc_mean, 100.0 * m.fpr95_mean};
}

}  // namespace detail

/// RF-Deep (dataset-specific) versus MD-Deep under matched seeds: run r
/// derives one split per cohort, trains both detectors on the identical
/// training rows, scores the identical test scans, and evaluates with the
/// identical balanced draws.
inline std::vector<RunTable> run_rf_md_matched(const LabeledCohorts& cohorts,
                                               const ExperimentConfig& cfg) {
  std::vector<RunTable> runs(static_cast<std::size_t>(cfg.n_runs));
  for (int r = 0; r < cfg.n_runs; ++r) {
    const std::uint64_t run_seed = derive_seed(cfg.master_seed, "run", static_cast<std::uint64_t>(r));

    Rng id_split_rng = Rng::derived(run_seed, "split:ID");
    auto [id_train, id_test] = split_by_scan(cohorts.id, cfg.train_fraction, id_split_rng);

    const detectors::GaussianOodModel md = detectors::md_fit(id_train);
    const std::vector<double> id_scores_md = detail::scan_scores_md(md, id_test);

    RunTable table;
    for (const auto& [tag, set] : cohorts.ood) {
      Rng split_rng = Rng::derived(run_seed, "split:" + tag);
      auto [ood_train, ood_test] = split_by_scan(set, cfg.train_fraction, split_rng);

      forest::ForestParams params = cfg.forest_params;
      params.rng_seed = derive_seed(run_seed, "rf:" + tag);
      const forest::ForestModel rf = detectors::rf_deep_train(id_train, ood_train, params, cfg.threads);

      const std::vector<double> id_scores_rf = detail::scan_scores_rf(rf, id_test);
      const std::vector<double> ood_scores_rf = detail::scan_scores_rf(rf, ood_test);
      const std::vector<double> ood_scores_md = detail::scan_scores_md(md, ood_test);

      const std::uint64_t draw_seed = derive_seed(run_seed, "draw:" + tag);
      table["rf-deep"][tag] = detail::balanced_pair(id_scores_rf, ood_scores_rf, cfg.n_draws, draw_seed);
      table["md-deep"][tag] = detail::balanced_pair(id_scores_md, ood_scores_md, cfg.n_draws, draw_seed);
    }
    runs[static_cast<std::size_t>(r)] = std::move(table);
  }
  return runs;
}

/// The five training strategies under matched seeds. Each OOD dataset D is
/// evaluated per strategy; for the LODO modes D is the held-out dataset.
/// Background descriptors (all of them) feed LODO+ as extra OOD-labeled
/// training rows.
inline std::vector<RunTable> run_strategies_matched(const LabeledCohorts& cohorts,
                                                    const ExperimentConfig& cfg) {
  std::vector<RunTable> runs(static_cast<std::size_t>(cfg.n_runs));
  for (int r = 0; r < cfg.n_runs; ++r) {
    const std::uint64_t run_seed = derive_seed(cfg.master_seed, "run", static_cast<std::uint64_t>(r));

    Rng id_split_rng = Rng::derived(run_seed, "split:ID");
    auto [id_train, id_test] = split_by_scan(cohorts.id, cfg.train_fraction, id_split_rng);

    LabeledCohorts train_cohorts;
    train_cohorts.id = id_train;
    train_cohorts.background = cohorts.background;
    std::map<std::string, DescriptorSet> test_sets;
    for (const auto& [tag, set] : cohorts.ood) {
      Rng split_rng = Rng::derived(run_seed, "split:" + tag);
      auto [ood_train, ood_test] = split_by_scan(set, cfg.train_fraction, split_rng);
      train_cohorts.ood.push_back({tag, std::move(ood_train)});
      test_sets[tag] = std::move(ood_test);
    }

    forest::ForestParams params = cfg.forest_params;

    auto eval_bundle = [&](const detectors::RfBundle& bundle, const std::string& tag) {
      std::vector<double> id_scores, ood_scores;
      for (const auto& [scan, rois] : features::group_scans(id_test))
        id_scores.push_back(detectors::score_scan(bundle, tag, rois));
      for (const auto& [scan, rois] : features::group_scans(test_sets.at(tag)))
        ood_scores.push_back(detectors::score_scan(bundle, tag, rois));
      return detail::balanced_pair(id_scores, ood_scores, cfg.n_draws,
                                   derive_seed(run_seed, "draw:" + tag));
    };

    RunTable table;
    {
      detectors::StrategyConfig sc{detectors::StrategyMode::dataset_specific, "", 0};
      params.rng_seed = derive_seed(run_seed, "strategy:ds");
      const auto ds = detectors::train_strategy(sc, train_cohorts, params, cfg.threads);
      detectors::RfBundle ens = ds;  // same forests, averaged at test time
      ens.cfg.mode = detectors::StrategyMode::ensemble;
      for (const auto& [tag, _] : cohorts.ood) {
        table["dataset-specific"][tag] = eval_bundle(ds, tag);
        table["ensemble"][tag] = eval_bundle(ens, tag);
      }
    }
    {
      detectors::StrategyConfig sc{detectors::StrategyMode::unified, "", 0};
      params.rng_seed = derive_seed(run_seed, "strategy:unified");
      const auto uni = detectors::train_strategy(sc, train_cohorts, params, cfg.threads);
      for (const auto& [tag, _] : cohorts.ood) table["unified"][tag] = eval_bundle(uni, tag);
    }
    for (const auto& [tag, _] : cohorts.ood) {
      detectors::StrategyConfig lodo{detectors::StrategyMode::lodo, tag, 0};
      params.rng_seed = derive_seed(run_seed, "strategy:lodo:" + tag);
      table["lodo"][tag] = eval_bundle(detectors::train_strategy(lodo, train_cohorts, params, cfg.threads), tag);

      detectors::StrategyConfig plus{detectors::StrategyMode::lodo_plus, tag,
                                     static_cast<std::size_t>(-1)};
      params.rng_seed = derive_seed(run_seed, "strategy:lodo+:" + tag);
      table["lodo-plus"][tag] =
          eval_bundle(detectors::train_strategy(plus, train_cohorts, params, cfg.threads), tag);
    }
    runs[static_cast<std::size_t>(r)] = std::move(table);
  }
  return runs;
}

}  // namespace oodkit::experiments
