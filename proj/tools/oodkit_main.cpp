// Copyright (c) 2026, the oodkit authors
// SPDX-License-Identifier: Apache-2.0
//
// oodkit CLI: batch surface over the scan-level OOD detection pipeline.
//
//   synth     write synthetic feature tables (ID + OOD cohorts)
//   rois      sample tumor-anchored (and background) ROIs from a mask
//   pool      GAP-pool encoder stage maps into a feature table
//   train     train a detector bundle (rf-deep / md-deep, five strategies)
//   score     score scans with a bundle or a logit-based method
//   eval      balanced evaluation with bootstrap CIs over matched runs
//   boundary  boundary/interior MaxLogit statistics per scan
//
// Exit codes: 0 success, 2 usage/config error, 3 no segmentation,
// 4 data-format error.

#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "oodkit/detectors.hpp"
#include "oodkit/eval.hpp"
#include "oodkit/experiments.hpp"
#include "oodkit/feature_table.hpp"
#include "oodkit/features.hpp"
#include "oodkit/forest.hpp"
#include "oodkit/roi.hpp"
#include "oodkit/rvol.hpp"

namespace fs = std::filesystem;
using namespace oodkit;

namespace {

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

features::StageSelection parse_stages(const std::string& spec) {
  std::vector<int> stages;
  std::size_t start = 0;
  while (start <= spec.size()) {
    const std::size_t comma = spec.find(',', start);
    const std::string tok = spec.substr(start, comma == std::string::npos ? std::string::npos
                                                                          : comma - start);
    if (!tok.empty()) stages.push_back(std::stoi(tok));
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return features::StageSelection::of(std::move(stages));
}

// ---------------------------------------------------------------------------
// Score files: scan_id,method,detector,dataset,score
// ---------------------------------------------------------------------------

struct ScoreRow {
  std::string scan_id;
  std::string method;
  std::string detector;  // "-" unless a dataset-specific forest produced it
  std::string dataset;
  double score = 0.0;
};

void write_score_rows(std::vector<ScoreRow> rows, const std::string& path) {
  std::sort(rows.begin(), rows.end(), [](const ScoreRow& a, const ScoreRow& b) {
    return std::tie(a.scan_id, a.method, a.detector, a.dataset) <
           std::tie(b.scan_id, b.method, b.detector, b.dataset);
  });
  std::ofstream out(path);
  if (!out) throw DataFormatError("cannot write score file " + path);
  out << "scan_id,method,detector,dataset,score\n";
  for (const auto& r : rows)
    out << r.scan_id << ',' << r.method << ',' << r.detector << ',' << r.dataset << ','
        << format_double(r.score) << "\n";
}

std::vector<ScoreRow> read_score_rows(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataFormatError("cannot open score file " + path);
  std::string line;
  if (!std::getline(in, line) || line.rfind("scan_id,method,detector,dataset,score", 0) != 0)
    throw DataFormatError("score file " + path + ": malformed header");
  std::vector<ScoreRow> rows;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto fields = features::detail::split_csv_line(line);
    if (fields.size() != 5)
      throw DataFormatError("score file " + path + ": row " + std::to_string(lineno) +
                            " has wrong field count");
    char* end = nullptr;
    const double v = std::strtod(fields[4].c_str(), &end);
    if (end == fields[4].c_str() || *end != '\0' || !std::isfinite(v))
      throw DataFormatError("score file " + path + ": row " + std::to_string(lineno) +
                            ": bad score value");
    rows.push_back({fields[0], fields[1], fields[2], fields[3], v});
  }
  return rows;
}

// ---------------------------------------------------------------------------
// Logit-volume manifests: JSONL {scan_id, dataset, f0, f1}
// ---------------------------------------------------------------------------

struct LogitEntry {
  std::string scan_id;
  std::string dataset;
  detectors::LogitVolume volume;
};

std::vector<LogitEntry> read_logit_manifest(const std::string& path,
                                            std::optional<double> fg_threshold) {
  std::ifstream in(path);
  if (!in) throw DataFormatError("cannot open logit manifest " + path);
  const fs::path base = fs::path(path).parent_path();
  std::vector<LogitEntry> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw DataFormatError("logit manifest " + path + " line " + std::to_string(lineno) + ": " +
                            e.what());
    }
    LogitEntry entry;
    try {
      entry.scan_id = j.at("scan_id").get<std::string>();
      entry.dataset = j.value("dataset", std::string{});
      const auto resolve = [&](const std::string& p) {
        return fs::path(p).is_absolute() ? p : (base / p).string();
      };
      const grid3d::VolumeGrid f0 = rvol::read_volume(resolve(j.at("f0").get<std::string>()));
      const grid3d::VolumeGrid f1 = rvol::read_volume(resolve(j.at("f1").get<std::string>()));
      if (f0.dims != f1.dims)
        throw DataFormatError("logit manifest " + path + " line " + std::to_string(lineno) +
                              ": f0/f1 dims differ");
      entry.volume.dims = f0.dims;
      entry.volume.logit_bg = f0.values;
      entry.volume.logit_fg = f1.values;
      entry.volume.fg_prob_threshold = fg_threshold;
    } catch (const nlohmann::json::exception& e) {
      throw DataFormatError("logit manifest " + path + " line " + std::to_string(lineno) + ": " +
                            e.what());
    }
    out.push_back(std::move(entry));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Subcommand configs
// ---------------------------------------------------------------------------

struct SynthCli {
  std::string out_dir;
  std::uint64_t seed = 0;
  std::size_t dim = 64;
  std::size_t n_id = 60;
  std::size_t n_ood = 60;
  int n_rois = 4;
  double near_shift = 1.2;
  double far_shift = 6.0;
  double overlap = 1.0;
  double scan_sigma = 0.5;
  double informative_fraction = 0.1;
  bool background = false;
  std::size_t background_scans = 60;
  double background_shift = 0.9;
  double background_fraction = 0.5;
  std::string format = "csv";
};

int cmd_synth(const SynthCli& c) {
  features::SynthConfig cfg = features::SynthConfig::default_four_cohorts(
      c.seed, c.n_ood, c.near_shift, c.far_shift, c.informative_fraction);
  cfg.dim = c.dim;
  cfg.n_id_scans = c.n_id;
  cfg.n_rois = c.n_rois;
  cfg.overlap = c.overlap;
  cfg.scan_sigma = c.scan_sigma;
  if (c.background)
    cfg.cohorts.push_back({"background", c.background_scans, c.background_shift,
                           c.background_fraction});
  const features::SynthResult synth = features::synth_generate(cfg);

  fs::create_directories(c.out_dir);
  const std::string ext = c.format == "bin" ? ".json" : ".csv";
  features::save_feature_table(synth.id, (fs::path(c.out_dir) / ("id" + ext)).string());
  for (const auto& [name, set] : synth.cohorts)
    features::save_feature_table(set, (fs::path(c.out_dir) / (name + ext)).string());

  nlohmann::json manifest;
  manifest["dim"] = cfg.dim;
  manifest["n_id_scans"] = cfg.n_id_scans;
  manifest["n_rois"] = cfg.n_rois;
  manifest["overlap"] = cfg.overlap;
  manifest["scan_sigma"] = cfg.scan_sigma;
  manifest["rng_seed"] = cfg.rng_seed;
  manifest["format"] = c.format;
  auto& cj = manifest["cohorts"] = nlohmann::json::array();
  for (const auto& spec : cfg.cohorts)
    cj.push_back({{"name", spec.name},
                  {"n_scans", spec.n_scans},
                  {"shift", spec.shift},
                  {"informative_fraction", spec.informative_fraction}});
  std::ofstream mout(fs::path(c.out_dir) / "manifest.json");
  if (!mout) throw DataFormatError("cannot write synth manifest in " + c.out_dir);
  mout << manifest.dump(2) << "\n";
  return 0;
}

struct RoisCli {
  std::string mask_path;
  std::string out_path;
  std::uint64_t seed = 0;
  int n_rois = 4;
  int crop_size = 128;
  int background = 0;
  int connectivity = 26;
  std::string scan_id;
};

int cmd_rois(const RoisCli& c) {
  const auto [mask, spacing] = rvol::read_mask(c.mask_path);
  roi::RoiConfig cfg;
  cfg.n_rois = c.n_rois;
  cfg.crop_size_vox = c.crop_size;
  cfg.rng_seed = c.seed;
  const auto connectivity = c.connectivity == 6 ? grid3d::Connectivity::faces6
                                                : grid3d::Connectivity::full26;
  const std::string scan_id =
      c.scan_id.empty() ? fs::path(c.mask_path).stem().stem().string() : c.scan_id;

  Rng rng = Rng::derived(cfg.rng_seed, "rois:" + scan_id);
  std::vector<roi::RoiSpec> rois =
      roi::anchor_rois(mask, mask.dims, cfg, rng, connectivity);
  if (c.background > 0) {
    Rng bg_rng = Rng::derived(cfg.rng_seed, "background-rois:" + scan_id);
    const auto bg = roi::sample_background_rois(mask, mask.dims, c.background, cfg, bg_rng);
    rois.insert(rois.end(), bg.begin(), bg.end());
  }
  roi::write_roi_manifest(c.out_path, scan_id, rois);
  return 0;
}

struct PoolCli {
  std::string maps_manifest;
  std::string out_table;
  std::string stages = "0,1,2,3,4";
};

int cmd_pool(const PoolCli& c) {
  const features::StageSelection selection = parse_stages(c.stages);
  std::ifstream in(c.maps_manifest);
  if (!in) throw DataFormatError("cannot open stage-map manifest " + c.maps_manifest);
  const fs::path base = fs::path(c.maps_manifest).parent_path();
  features::DescriptorSet set;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
      features::ScanDescriptor row;
      row.scan_id = j.at("scan_id").get<std::string>();
      row.roi_index = j.value("roi_index", 0);
      row.dataset = j.value("dataset", std::string{});
      row.label = j.value("label", 0);
      std::vector<features::StageFeatureMap> maps;
      for (int s : selection.included_stages) {
        const auto key = std::to_string(s);
        const std::string stem = j.at("stages").at(key).get<std::string>();
        maps.push_back(features::read_stage_map(
            fs::path(stem).is_absolute() ? stem : (base / stem).string()));
      }
      row.vec = features::gap_pool(maps, selection);
      set.push(std::move(row));
    } catch (const nlohmann::json::exception& e) {
      throw DataFormatError("stage-map manifest " + c.maps_manifest + " line " +
                            std::to_string(lineno) + ": " + e.what());
    }
  }
  set.dim = set.rows.empty() ? static_cast<std::size_t>(selection.dim()) : set.dim;
  features::save_feature_table(set, c.out_table);
  return 0;
}

struct TrainCli {
  std::vector<std::string> tables;
  std::string out_dir;
  std::uint64_t seed = 0;
  std::string method = "rf-deep";
  std::string strategy = "ds";
  std::string held_out;
  int n_trees = 1000;
  int max_depth = 20;
  std::string class_weight = "balanced";
  std::string features_per_split = "sqrt";
  int min_samples_leaf = 1;
  bool no_bootstrap = false;
  std::size_t background_rois = static_cast<std::size_t>(-1);
  int threads = 1;
};

detectors::LabeledCohorts load_cohorts(const std::vector<std::string>& tables) {
  detectors::LabeledCohorts cohorts;
  std::map<std::string, features::DescriptorSet> ood;
  std::vector<std::string> ood_order;
  for (const auto& path : tables) {
    const features::DescriptorSet set = features::load_feature_table(path);
    for (const auto& row : set.rows) {
      if (row.label == 0) {
        cohorts.id.push(row);
      } else if (row.dataset == "background") {
        cohorts.background.push(row);
      } else {
        auto it = ood.find(row.dataset);
        if (it == ood.end()) {
          ood_order.push_back(row.dataset);
          it = ood.emplace(row.dataset, features::DescriptorSet{}).first;
        }
        it->second.push(row);
      }
    }
  }
  for (const auto& tag : ood_order) cohorts.ood.push_back({tag, std::move(ood.at(tag))});
  return cohorts;
}

int cmd_train(const TrainCli& c) {
  const detectors::LabeledCohorts cohorts = load_cohorts(c.tables);
  if (c.method == "md-deep") {
    if (cohorts.id.empty()) throw UsageError("train: md-deep needs ID (label 0) rows");
    const auto model = detectors::md_fit(cohorts.id);
    detectors::save_md_model(model, c.out_dir);
    return 0;
  }
  if (c.method != "rf-deep") throw UsageError("train: unknown method " + c.method);

  detectors::StrategyConfig sc;
  sc.mode = detectors::strategy_from_name(c.strategy);
  sc.held_out = c.held_out;
  sc.background_roi_count = c.background_rois;
  if ((sc.mode == detectors::StrategyMode::lodo ||
       sc.mode == detectors::StrategyMode::lodo_plus) &&
      c.held_out.empty())
    throw UsageError("train: --held-out is required for LODO strategies");

  forest::ForestParams params;
  params.n_trees = c.n_trees;
  params.max_depth = c.max_depth;
  params.class_weight =
      c.class_weight == "uniform" ? forest::ClassWeight::uniform : forest::ClassWeight::balanced;
  if (c.features_per_split == "sqrt")
    params.features_per_split = forest::FeaturesPerSplit::sqrt();
  else if (c.features_per_split == "all")
    params.features_per_split = forest::FeaturesPerSplit::all_features();
  else
    params.features_per_split = forest::FeaturesPerSplit::fixed(std::stoi(c.features_per_split));
  params.min_samples_leaf = c.min_samples_leaf;
  params.bootstrap = !c.no_bootstrap;
  params.rng_seed = c.seed;

  const detectors::RfBundle bundle = detectors::train_strategy(sc, cohorts, params, c.threads);
  detectors::save_rf_bundle(bundle, c.out_dir);
  return 0;
}

struct ScoreCli {
  std::string bundle_dir;
  std::string table;
  std::string method;  // maxlogit | maxsoftmax | energy when scoring logits
  std::string logits;
  std::string out_path;
  double fg_threshold = -1.0;  // <0 disables
};

int cmd_score(const ScoreCli& c) {
  std::vector<ScoreRow> rows;
  if (!c.logits.empty()) {
    if (c.method != "maxlogit" && c.method != "maxsoftmax" && c.method != "energy")
      throw UsageError("score: --logits requires --method maxlogit|maxsoftmax|energy");
    const std::optional<double> thr =
        c.fg_threshold >= 0.0 ? std::optional<double>(c.fg_threshold) : std::nullopt;
    for (auto& entry : read_logit_manifest(c.logits, thr)) {
      detectors::OodScore s;
      if (c.method == "maxlogit")
        s = detectors::maxlogit_score(entry.volume, entry.scan_id);
      else if (c.method == "maxsoftmax")
        s = detectors::maxsoftmax_score(entry.volume, entry.scan_id);
      else
        s = detectors::energy_score(entry.volume, entry.scan_id);
      rows.push_back({entry.scan_id, s.method, "-", entry.dataset, s.value});
    }
    write_score_rows(std::move(rows), c.out_path);
    return 0;
  }

  if (c.bundle_dir.empty() || c.table.empty())
    throw UsageError("score: need --bundle and --table (or --logits with --method)");
  const features::DescriptorSet set = features::load_feature_table(c.table);
  const auto groups = features::group_scans(set);

  std::ifstream manifest(fs::path(c.bundle_dir) / "manifest.json");
  if (!manifest) throw DataFormatError("cannot open bundle manifest in " + c.bundle_dir);
  nlohmann::json mj;
  manifest >> mj;
  const std::string type = mj.value("type", std::string{});

  if (type == "md-deep") {
    const auto model = detectors::load_md_model(c.bundle_dir);
    for (const auto& [scan_id, rois] : groups)
      rows.push_back({scan_id, "md-deep", "-", rois.front()->dataset,
                      detectors::md_score(model, rois)});
  } else if (type == "rf-deep") {
    const auto bundle = detectors::load_rf_bundle(c.bundle_dir);
    for (const auto& [scan_id, rois] : groups) {
      const std::string dataset = rois.front()->dataset;
      if (bundle.cfg.mode == detectors::StrategyMode::dataset_specific) {
        if (dataset == "ID" || rois.front()->label == 0) {
          // ID scans are scored once per dataset-specific forest so each
          // cohort can be evaluated against its own detector.
          for (const auto& [tag, model] : bundle.forests)
            rows.push_back({scan_id, bundle.method_label, tag, dataset,
                            detectors::rf_deep_score(model, rois)});
        } else {
          rows.push_back({scan_id, bundle.method_label, dataset, dataset,
                          detectors::score_scan(bundle, dataset, rois)});
        }
      } else {
        rows.push_back({scan_id, bundle.method_label, "-", dataset,
                        detectors::score_scan(bundle, dataset, rois)});
      }
    }
  } else {
    throw DataFormatError("score: unknown bundle type in " + c.bundle_dir);
  }
  write_score_rows(std::move(rows), c.out_path);
  return 0;
}

struct EvalCli {
  std::vector<std::string> score_files;
  std::string out_path;
  std::uint64_t seed = 0;
  int n_runs = 100;
  int n_draws = 10;
  double ci = 0.95;
  double tpr = 0.95;
  std::string id_dataset = "ID";
  std::string format = "both";
};

int cmd_eval(const EvalCli& c) {
  if (c.n_runs < 2) throw UsageError("eval: --n-runs must be >= 2 to form CIs");
  std::vector<ScoreRow> rows;
  for (const auto& f : c.score_files) {
    auto part = read_score_rows(f);
    rows.insert(rows.end(), part.begin(), part.end());
  }
  if (rows.empty()) throw UsageError("eval: no score rows");

  // (method, detector) -> { id scores, dataset -> ood scores }
  struct Group {
    std::vector<double> id;
    std::map<std::string, std::vector<double>> ood;
  };
  std::map<std::pair<std::string, std::string>, Group> groups;
  for (const auto& r : rows) {
    auto& g = groups[{r.method, r.detector}];
    if (r.dataset == c.id_dataset)
      g.id.push_back(r.score);
    else
      g.ood[r.dataset].push_back(r.score);
  }

  eval::EvalProtocol protocol;
  protocol.n_draws = c.n_draws;
  protocol.n_runs = c.n_runs;
  protocol.ci_level = c.ci;
  protocol.master_seed = c.seed;
  protocol.validate();

  eval::EvalReport report;
  report.protocol = protocol;
  // per (method, dataset, run) AUROC values, for the paired tests
  std::map<std::string, std::map<std::string, std::vector<double>>> auroc_runs;

  for (const auto& [key, g] : groups) {
    const auto& [method, detector] = key;
    if (g.id.empty())
      throw UsageError("eval: method " + method + " has no rows for ID dataset \"" +
                       c.id_dataset + "\"");
    for (const auto& [dataset, pool] : g.ood) {
      if (detector != "-" && detector != dataset) continue;  // DS forests score their own cohort
      protocol.n_id = g.id.size();
      std::vector<double> run_auroc, run_fpr;
      for (int r = 0; r < c.n_runs; ++r) {
        const std::uint64_t run_seed =
            derive_seed(c.seed, "eval-run", static_cast<std::uint64_t>(r));
        Rng rng = Rng::derived(run_seed, "draw:" + dataset);  // matched across methods
        const auto m = eval::balanced_eval(g.id, pool, c.n_draws, rng, c.tpr);
        run_auroc.push_back(100.0 * m.auroc_mean);
        run_fpr.push_back(100.0 * m.fpr95_mean);
      }
      eval::CellResult cell;
      cell.method = method;
      cell.dataset = dataset;
      cell.auroc = eval::summarize_runs(run_auroc, c.ci);
      cell.fpr95 = eval::summarize_runs(run_fpr, c.ci);
      report.cells.push_back(std::move(cell));
      auroc_runs[dataset][method] = std::move(run_auroc);
    }
  }
  report.protocol.n_id = protocol.n_id;

  for (const auto& [dataset, by_method] : auroc_runs) {
    for (auto a = by_method.begin(); a != by_method.end(); ++a)
      for (auto b = std::next(a); b != by_method.end(); ++b) {
        std::vector<double> diffs(a->second.size());
        for (std::size_t i = 0; i < diffs.size(); ++i) diffs[i] = a->second[i] - b->second[i];
        const bool all_zero = std::all_of(diffs.begin(), diffs.end(),
                                          [](double d) { return d == 0.0; });
        if (all_zero) continue;
        const auto t = eval::wilcoxon_signed_rank(diffs);
        report.tests.push_back({dataset, a->first, b->first, "auroc", t.statistic,
                                t.p_two_sided, t.effect_r, t.n});
      }
  }

  const fs::path out(c.out_path);
  if (out.extension() == ".json") {
    eval::emit_report(report, eval::ReportFormat::json, c.out_path);
  } else if (out.extension() == ".csv") {
    eval::emit_report(report, eval::ReportFormat::csv, c.out_path);
  } else {
    if (c.format == "json" || c.format == "both")
      eval::emit_report(report, eval::ReportFormat::json, c.out_path + ".json");
    if (c.format == "csv" || c.format == "both")
      eval::emit_report(report, eval::ReportFormat::csv, c.out_path + ".csv");
  }
  return 0;
}

struct BoundaryCli {
  std::string logits;
  std::string out_path;
  double fg_threshold = -1.0;
};

int cmd_boundary(const BoundaryCli& c) {
  const std::optional<double> thr =
      c.fg_threshold >= 0.0 ? std::optional<double>(c.fg_threshold) : std::nullopt;
  auto entries = read_logit_manifest(c.logits, thr);
  std::sort(entries.begin(), entries.end(),
            [](const LogitEntry& a, const LogitEntry& b) { return a.scan_id < b.scan_id; });
  std::ofstream out(c.out_path);
  if (!out) throw DataFormatError("cannot write boundary table " + c.out_path);
  out << "scan_id,dataset,overall_n,overall_mean,overall_sd,boundary_n,boundary_mean,"
         "boundary_sd,interior_n,interior_mean,interior_sd,interior_present\n";
  for (const auto& e : entries) {
    const auto s = detectors::boundary_interior_stats(e.volume);
    out << e.scan_id << ',' << e.dataset << ',' << s.overall.n << ','
        << format_double(s.overall.mean) << ',' << format_double(s.overall.sd) << ','
        << s.boundary.n << ',' << format_double(s.boundary.mean) << ','
        << format_double(s.boundary.sd) << ',' << s.interior.n << ','
        << format_double(s.interior.mean) << ',' << format_double(s.interior.sd) << ','
        << (s.interior_present ? 1 : 0) << "\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"oodkit: scan-level OOD detection for 3D tumor-segmentation pipelines"};
  app.require_subcommand(1);
  app.set_config("--config", "", "Key/value config file; command-line flags win");

  SynthCli synth;
  auto* synth_cmd = app.add_subcommand("synth", "Write synthetic feature tables");
  synth_cmd->add_option("--out", synth.out_dir, "Output directory")->required();
  synth_cmd->add_option("--seed", synth.seed, "Master RNG seed")->required();
  synth_cmd->add_option("--dim", synth.dim, "Descriptor length");
  synth_cmd->add_option("--n-id", synth.n_id, "ID scan count");
  synth_cmd->add_option("--n-ood", synth.n_ood, "OOD scan count per cohort");
  synth_cmd->add_option("--n-rois", synth.n_rois, "ROIs per scan");
  synth_cmd->add_option("--near-shift", synth.near_shift, "Mean shift of the near cohorts");
  synth_cmd->add_option("--far-shift", synth.far_shift, "Mean shift of the far cohorts");
  synth_cmd->add_option("--overlap", synth.overlap, "Per-ROI noise scale");
  synth_cmd->add_option("--scan-sigma", synth.scan_sigma, "Per-scan offset scale");
  synth_cmd->add_option("--informative-fraction", synth.informative_fraction,
                        "Fraction of dimensions carrying each cohort shift");
  synth_cmd->add_flag("--background", synth.background, "Also write a background cohort");
  synth_cmd->add_option("--background-scans", synth.background_scans, "Background scan count");
  synth_cmd->add_option("--background-shift", synth.background_shift, "Background mean shift");
  synth_cmd->add_option("--background-fraction", synth.background_fraction,
                        "Fraction of dimensions shifted in the background cohort");
  synth_cmd->add_option("--format", synth.format, "csv or bin")
      ->check(CLI::IsMember({"csv", "bin"}));

  RoisCli rois;
  auto* rois_cmd = app.add_subcommand("rois", "Sample ROIs from a segmentation mask");
  rois_cmd->add_option("--mask", rois.mask_path, "RVOL mask header (.json)")->required();
  rois_cmd->add_option("--out", rois.out_path, "Output ROI manifest (JSONL)")->required();
  rois_cmd->add_option("--seed", rois.seed, "Master RNG seed")->required();
  rois_cmd->add_option("--n-rois", rois.n_rois, "Tumor-anchored ROIs per scan");
  rois_cmd->add_option("--crop-size", rois.crop_size, "Cubic crop edge in voxels");
  rois_cmd->add_option("--background", rois.background, "Additional background ROIs");
  rois_cmd->add_option("--connectivity", rois.connectivity, "Component connectivity (6 or 26)")
      ->check(CLI::IsMember({6, 26}));
  rois_cmd->add_option("--scan-id", rois.scan_id, "Scan identifier (default: mask stem)");

  PoolCli pool;
  auto* pool_cmd = app.add_subcommand("pool", "GAP-pool stage maps into a feature table");
  pool_cmd->add_option("--maps", pool.maps_manifest, "Stage-map manifest (JSONL)")->required();
  pool_cmd->add_option("--out", pool.out_table, "Output feature table (.csv or .json)")
      ->required();
  pool_cmd->add_option("--stages", pool.stages, "Comma-separated stage subset");

  TrainCli train;
  auto* train_cmd = app.add_subcommand("train", "Train a detector bundle");
  train_cmd->add_option("--tables", train.tables, "Feature tables")->required()->expected(-1);
  train_cmd->add_option("--out", train.out_dir, "Output bundle directory")->required();
  train_cmd->add_option("--seed", train.seed, "Master RNG seed")->required();
  train_cmd->add_option("--method", train.method, "rf-deep or md-deep")
      ->check(CLI::IsMember({"rf-deep", "md-deep"}));
  train_cmd->add_option("--strategy", train.strategy,
                        "ds | ensemble | unified | lodo | lodo-plus");
  train_cmd->add_option("--held-out", train.held_out, "Held-out dataset for LODO strategies");
  train_cmd->add_option("--n-trees", train.n_trees, "Trees in the forest");
  train_cmd->add_option("--max-depth", train.max_depth, "Maximum tree depth");
  train_cmd->add_option("--class-weight", train.class_weight, "balanced or uniform")
      ->check(CLI::IsMember({"balanced", "uniform"}));
  train_cmd->add_option("--features-per-split", train.features_per_split,
                        "sqrt, all, or a fixed count");
  train_cmd->add_option("--min-samples-leaf", train.min_samples_leaf, "Leaf size floor");
  train_cmd->add_flag("--no-bootstrap", train.no_bootstrap, "Disable bootstrap resampling");
  train_cmd->add_option("--background-rois", train.background_rois,
                        "Cap on background rows consumed by LODO+");
  train_cmd->add_option("--threads", train.threads, "Training thread cap");

  ScoreCli score;
  auto* score_cmd = app.add_subcommand("score", "Score scans");
  score_cmd->add_option("--bundle", score.bundle_dir, "Detector bundle directory");
  score_cmd->add_option("--table", score.table, "Feature table to score");
  score_cmd->add_option("--method", score.method, "maxlogit | maxsoftmax | energy");
  score_cmd->add_option("--logits", score.logits, "Logit-volume manifest (JSONL)");
  score_cmd->add_option("--out", score.out_path, "Output score file")->required();
  score_cmd->add_option("--fg-threshold", score.fg_threshold,
                        "Optional softmax foreground threshold (default off)");

  EvalCli evalc;
  auto* eval_cmd = app.add_subcommand("eval", "Balanced evaluation with bootstrap CIs");
  eval_cmd->add_option("--scores", evalc.score_files, "Score files")->required()->expected(-1);
  eval_cmd->add_option("--out", evalc.out_path, "Report stem or .json/.csv path")->required();
  eval_cmd->add_option("--seed", evalc.seed, "Master RNG seed")->required();
  eval_cmd->add_option("--n-runs", evalc.n_runs, "Matched-seed runs");
  eval_cmd->add_option("--n-draws", evalc.n_draws, "Balanced resample draws per run");
  eval_cmd->add_option("--ci", evalc.ci, "Confidence level");
  eval_cmd->add_option("--tpr", evalc.tpr, "Sensitivity target for FPR");
  eval_cmd->add_option("--id-dataset", evalc.id_dataset, "Dataset tag of the ID side");
  eval_cmd->add_option("--format", evalc.format, "json, csv, or both")
      ->check(CLI::IsMember({"json", "csv", "both"}));

  BoundaryCli boundary;
  auto* boundary_cmd =
      app.add_subcommand("boundary", "Boundary/interior MaxLogit statistics per scan");
  boundary_cmd->add_option("--logits", boundary.logits, "Logit-volume manifest (JSONL)")
      ->required();
  boundary_cmd->add_option("--out", boundary.out_path, "Output CSV")->required();
  boundary_cmd->add_option("--fg-threshold", boundary.fg_threshold,
                           "Optional softmax foreground threshold (default off)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (synth_cmd->parsed()) return cmd_synth(synth);
    if (rois_cmd->parsed()) return cmd_rois(rois);
    if (pool_cmd->parsed()) return cmd_pool(pool);
    if (train_cmd->parsed()) return cmd_train(train);
    if (score_cmd->parsed()) return cmd_score(score);
    if (eval_cmd->parsed()) return cmd_eval(evalc);
    if (boundary_cmd->parsed()) return cmd_boundary(boundary);
  } catch (const NoSegmentationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const DataFormatError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 4;
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
