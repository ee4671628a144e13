// Copyright (c) 2026, the oodkit authors
// SPDX-License-Identifier: Apache-2.0
//
// Evaluation harness: AUROC, FPR at fixed TPR, balanced resampling,
// bootstrap confidence intervals over matched-seed runs, rank tests, and
// report emission. Score orientation everywhere: higher = more OOD, OOD
// is the positive class.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "oodkit/errors.hpp"
#include "oodkit/rng.hpp"

namespace oodkit::eval {

namespace detail {

/// Average ranks (1-based) of a sorted value sequence, with rank sums per
/// tie group handled by the caller through the group bounds.
inline double normal_sf(double z) { return 0.5 * std::erfc(z / std::sqrt(2.0)); }

inline double nearest_rank_percentile(std::vector<double> values, double p) {
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  std::size_t rank = static_cast<std::size_t>(std::ceil(p * static_cast<double>(n)));
  rank = std::clamp<std::size_t>(rank, 1, n);
  return values[rank - 1];
}

inline double mean_of(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Threshold-free metrics
// ---------------------------------------------------------------------------

/// Mann-Whitney AUROC via rank sums: the probability that a random OOD
/// score exceeds a random ID score, ties counting half. Exactly equal to
/// the O(n^2) pairwise definition.
inline double auroc(std::span<const double> id_scores, std::span<const double> ood_scores) {
  if (id_scores.empty() || ood_scores.empty())
    throw std::invalid_argument("auroc: both score sets must be nonempty");
  struct Item {
    double v;
    bool ood;
  };
  std::vector<Item> all;
  all.reserve(id_scores.size() + ood_scores.size());
  for (double v : id_scores) all.push_back({v, false});
  for (double v : ood_scores) all.push_back({v, true});
  std::sort(all.begin(), all.end(), [](const Item& a, const Item& b) { return a.v < b.v; });

  double rank_sum_ood = 0.0;
  std::size_t i = 0;
  while (i < all.size()) {
    std::size_t j = i;
    while (j < all.size() && all[j].v == all[i].v) ++j;
    const double avg_rank = 0.5 * (static_cast<double>(i + 1) + static_cast<double>(j));
    for (std::size_t t = i; t < j; ++t)
      if (all[t].ood) rank_sum_ood += avg_rank;
    i = j;
  }
  const double n_ood = static_cast<double>(ood_scores.size());
  const double n_id = static_cast<double>(id_scores.size());
  const double u = rank_sum_ood - n_ood * (n_ood + 1.0) / 2.0;
  return u / (n_id * n_ood);
}

/// False positive rate at the largest threshold that keeps OOD sensitivity
/// at or above `tpr_target` (maximal specificity subject to the
/// sensitivity constraint).
inline double fpr_at_tpr(std::span<const double> id_scores, std::span<const double> ood_scores,
                         double tpr_target = 0.95) {
  if (id_scores.empty() || ood_scores.empty())
    throw std::invalid_argument("fpr_at_tpr: both score sets must be nonempty");
  if (!(tpr_target > 0.0) || tpr_target > 1.0)
    throw std::invalid_argument("fpr_at_tpr: target must be in (0, 1]");
  std::vector<double> ood(ood_scores.begin(), ood_scores.end());
  std::sort(ood.begin(), ood.end());
  const double m = static_cast<double>(ood.size());
  // Walk distinct OOD values from the largest down; the first achieving
  // TPR >= target is the maximal feasible threshold.
  double tau = ood.front();
  for (std::size_t i = ood.size(); i-- > 0;) {
    if (i > 0 && ood[i] == ood[i - 1]) continue;  // same threshold as lower copy
    const auto below = static_cast<double>(
        std::lower_bound(ood.begin(), ood.end(), ood[i]) - ood.begin());
    const double tpr = (m - below) / m;
    if (tpr >= tpr_target) {
      tau = ood[i];
      break;
    }
  }
  std::size_t fp = 0;
  for (double v : id_scores) fp += (v >= tau);
  return static_cast<double>(fp) / static_cast<double>(id_scores.size());
}

// ---------------------------------------------------------------------------
// Balanced resampling
// ---------------------------------------------------------------------------

struct BalancedMetrics {
  double auroc_mean = 0.0;
  double fpr95_mean = 0.0;
  std::vector<double> per_draw_auroc;
  std::vector<double> per_draw_fpr95;
};

/// Balances the OOD side against the ID count by sampling the pool with
/// replacement `n_draws` times and averaging the metrics. When `groups`
/// is provided (one id per pool element), whole groups are drawn so that
/// related scans never straddle a draw.
inline BalancedMetrics balanced_eval(std::span<const double> id_scores,
                                     std::span<const double> ood_pool, int n_draws, Rng& rng,
                                     double tpr_target = 0.95,
                                     const std::vector<int>* groups = nullptr) {
  if (ood_pool.empty()) throw std::invalid_argument("balanced_eval: empty OOD pool");
  if (id_scores.empty()) throw std::invalid_argument("balanced_eval: empty ID scores");
  if (n_draws < 1) throw std::invalid_argument("balanced_eval: n_draws must be >= 1");
  if (groups && groups->size() != ood_pool.size())
    throw std::invalid_argument("balanced_eval: group metadata size mismatch");

  std::map<int, std::vector<std::size_t>> by_group;
  std::vector<int> group_keys;
  if (groups) {
    for (std::size_t i = 0; i < groups->size(); ++i) by_group[(*groups)[i]].push_back(i);
    for (const auto& [g, _] : by_group) group_keys.push_back(g);
  }

  const std::size_t target = id_scores.size();
  BalancedMetrics out;
  out.per_draw_auroc.reserve(static_cast<std::size_t>(n_draws));
  out.per_draw_fpr95.reserve(static_cast<std::size_t>(n_draws));
  std::vector<double> sample;
  for (int d = 0; d < n_draws; ++d) {
    sample.clear();
    if (!groups) {
      for (std::size_t t = 0; t < target; ++t)
        sample.push_back(ood_pool[static_cast<std::size_t>(rng.uniform_u64(ood_pool.size()))]);
    } else {
      while (sample.size() < target) {
        const int g = group_keys[static_cast<std::size_t>(rng.uniform_u64(group_keys.size()))];
        for (std::size_t idx : by_group[g]) {
          sample.push_back(ood_pool[idx]);
          if (sample.size() == target) break;
        }
      }
    }
    out.per_draw_auroc.push_back(auroc(id_scores, sample));
    out.per_draw_fpr95.push_back(fpr_at_tpr(id_scores, sample, tpr_target));
  }
  out.auroc_mean = detail::mean_of(out.per_draw_auroc);
  out.fpr95_mean = detail::mean_of(out.per_draw_fpr95);
  return out;
}

// ---------------------------------------------------------------------------
// Bootstrap confidence intervals
// ---------------------------------------------------------------------------

struct Ci {
  double point = 0.0;
  double lo = 0.0;
  double hi = 0.0;
};

enum class CiMethod {
  percentile,  // empirical percentiles of the per-run values (default)
  resample     // bootstrap-resampled means of the per-run values
};

/// Confidence interval over matched-seed run values: the point estimate is
/// the mean of runs and the interval the nearest-rank percentile band.
inline Ci bootstrap_ci(std::span<const double> per_run_values, double ci_level = 0.95,
                       CiMethod method = CiMethod::percentile, Rng* rng = nullptr,
                       int n_boot = 1000) {
  if (per_run_values.size() < 2)
    throw std::invalid_argument("bootstrap_ci: need at least 2 runs");
  if (!(ci_level > 0.0) || !(ci_level < 1.0))
    throw std::invalid_argument("bootstrap_ci: ci_level must be in (0, 1)");
  Ci ci;
  ci.point = detail::mean_of(per_run_values);
  const double alpha = (1.0 - ci_level) / 2.0;
  std::vector<double> values(per_run_values.begin(), per_run_values.end());
  if (method == CiMethod::percentile) {
    ci.lo = detail::nearest_rank_percentile(values, alpha);
    ci.hi = detail::nearest_rank_percentile(values, 1.0 - alpha);
  } else {
    if (!rng) throw std::invalid_argument("bootstrap_ci: resample method requires an rng");
    std::vector<double> means(static_cast<std::size_t>(n_boot));
    for (auto& m : means) {
      double s = 0.0;
      for (std::size_t i = 0; i < values.size(); ++i)
        s += values[static_cast<std::size_t>(rng->uniform_u64(values.size()))];
      m = s / static_cast<double>(values.size());
    }
    ci.lo = detail::nearest_rank_percentile(means, alpha);
    ci.hi = detail::nearest_rank_percentile(means, 1.0 - alpha);
  }
  return ci;
}

// ---------------------------------------------------------------------------
// Rank tests
// ---------------------------------------------------------------------------

struct RankTestResult {
  double statistic = 0.0;  // U (Mann-Whitney) or negative-rank sum W (Wilcoxon)
  double z = 0.0;
  double p_two_sided = 1.0;
  double effect_r = 0.0;
  std::size_t n = 0;  // total sample size used
};

namespace detail {

/// Average ranks plus the tie-correction sum over tie groups.
inline std::pair<std::vector<double>, double> average_ranks(std::vector<double> sorted_values,
                                                            const std::vector<double>& values) {
  std::sort(sorted_values.begin(), sorted_values.end());
  std::vector<double> ranks(values.size());
  double tie_term = 0.0;
  std::size_t i = 0;
  while (i < sorted_values.size()) {
    std::size_t j = i;
    while (j < sorted_values.size() && sorted_values[j] == sorted_values[i]) ++j;
    const double t = static_cast<double>(j - i);
    if (t > 1) tie_term += t * t * t - t;
    i = j;
  }
  for (std::size_t k = 0; k < values.size(); ++k) {
    const auto lo = std::lower_bound(sorted_values.begin(), sorted_values.end(), values[k]);
    const auto hi = std::upper_bound(sorted_values.begin(), sorted_values.end(), values[k]);
    const double first = static_cast<double>(lo - sorted_values.begin()) + 1.0;
    const double last = static_cast<double>(hi - sorted_values.begin());
    ranks[k] = 0.5 * (first + last);
  }
  return {ranks, tie_term};
}

inline double continuity_corrected_z(double diff, double sigma) {
  if (sigma <= 0.0) return 0.0;
  if (std::abs(diff) <= 0.5) return 0.0;
  return (diff - (diff > 0 ? 0.5 : -0.5)) / sigma;
}

}  // namespace detail

/// Mann-Whitney U test (normal approximation with tie and continuity
/// corrections). The statistic is U_a = #{pairs a > b} + 0.5 #{ties}.
inline RankTestResult mann_whitney_u(std::span<const double> a, std::span<const double> b) {
  if (a.empty() || b.empty())
    throw std::invalid_argument("mann_whitney_u: both samples must be nonempty");
  std::vector<double> all(a.begin(), a.end());
  all.insert(all.end(), b.begin(), b.end());
  auto [ranks, tie_term] = detail::average_ranks(all, all);
  const double na = static_cast<double>(a.size());
  const double nb = static_cast<double>(b.size());
  const double n = na + nb;
  double rank_sum_a = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) rank_sum_a += ranks[i];
  RankTestResult res;
  res.n = a.size() + b.size();
  res.statistic = rank_sum_a - na * (na + 1.0) / 2.0;  // U_a
  const double mu = na * nb / 2.0;
  const double var = na * nb / 12.0 * ((n + 1.0) - tie_term / (n * (n - 1.0)));
  const double sigma = var > 0.0 ? std::sqrt(var) : 0.0;
  res.z = detail::continuity_corrected_z(res.statistic - mu, sigma);
  res.p_two_sided = sigma > 0.0 ? std::min(1.0, 2.0 * detail::normal_sf(std::abs(res.z))) : 1.0;
  res.effect_r = res.z / std::sqrt(n);
  return res;
}

/// Wilcoxon signed-rank test on paired differences; zero differences are
/// dropped. The statistic is the negative-rank sum.
inline RankTestResult wilcoxon_signed_rank(std::span<const double> paired_diffs) {
  std::vector<double> diffs;
  for (double d : paired_diffs)
    if (d != 0.0) diffs.push_back(d);
  if (diffs.empty())
    throw std::invalid_argument("wilcoxon_signed_rank: all paired differences are zero");
  std::vector<double> absd(diffs.size());
  for (std::size_t i = 0; i < diffs.size(); ++i) absd[i] = std::abs(diffs[i]);
  auto [ranks, tie_term] = detail::average_ranks(absd, absd);
  double w_neg = 0.0;
  for (std::size_t i = 0; i < diffs.size(); ++i)
    if (diffs[i] < 0.0) w_neg += ranks[i];
  const double n = static_cast<double>(diffs.size());
  RankTestResult res;
  res.n = diffs.size();
  res.statistic = w_neg;
  const double mu = n * (n + 1.0) / 4.0;
  const double var = n * (n + 1.0) * (2.0 * n + 1.0) / 24.0 - tie_term / 48.0;
  const double sigma = var > 0.0 ? std::sqrt(var) : 0.0;
  res.z = detail::continuity_corrected_z(w_neg - mu, sigma);
  res.p_two_sided = sigma > 0.0 ? std::min(1.0, 2.0 * detail::normal_sf(std::abs(res.z))) : 1.0;
  res.effect_r = res.z / std::sqrt(n);
  return res;
}

// ---------------------------------------------------------------------------
// Reports
// ---------------------------------------------------------------------------

struct EvalProtocol {
  std::size_t n_id = 140;
  int n_draws = 10;
  int n_runs = 100;
  double ci_level = 0.95;
  std::uint64_t master_seed = 0;

  void validate() const {
    if (n_runs < 2) throw std::invalid_argument("EvalProtocol: n_runs must be >= 2 for CIs");
    if (n_draws < 1) throw std::invalid_argument("EvalProtocol: n_draws must be >= 1");
    if (!(ci_level > 0.0) || !(ci_level < 1.0))
      throw std::invalid_argument("EvalProtocol: ci_level must be in (0, 1)");
  }
};

/// Point estimate, CI bounds, and the raw per-run values (all in percent).
struct MetricSummary {
  double point = 0.0;
  double lo = 0.0;
  double hi = 0.0;
  std::vector<double> per_run;
};

struct CellResult {
  std::string method;
  std::string dataset;
  MetricSummary auroc;
  MetricSummary fpr95;
};

struct PairedTestResult {
  std::string dataset;
  std::string method_a;
  std::string method_b;
  std::string metric;
  double statistic = 0.0;
  double p_value = 1.0;
  double effect_r = 0.0;
  std::size_t n = 0;
};

struct EvalReport {
  int schema_version = 1;
  EvalProtocol protocol;
  std::vector<CellResult> cells;
  std::vector<PairedTestResult> tests;
};

inline MetricSummary summarize_runs(std::vector<double> per_run_pct, double ci_level) {
  const Ci ci = bootstrap_ci(per_run_pct, ci_level);
  MetricSummary s;
  s.point = ci.point;
  s.lo = ci.lo;
  s.hi = ci.hi;
  s.per_run = std::move(per_run_pct);
  return s;
}

enum class ReportFormat { json, csv };

namespace detail {

inline std::string fixed6(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

inline void sort_report(EvalReport& r) {
  std::sort(r.cells.begin(), r.cells.end(), [](const CellResult& a, const CellResult& b) {
    return std::tie(a.method, a.dataset) < std::tie(b.method, b.dataset);
  });
  std::sort(r.tests.begin(), r.tests.end(),
            [](const PairedTestResult& a, const PairedTestResult& b) {
              return std::tie(a.dataset, a.method_a, a.method_b, a.metric) <
                     std::tie(b.dataset, b.method_a, b.method_b, b.metric);
            });
}

}  // namespace detail

/// Canonical JSON: sorted cells/tests, alphabetical keys, every float
/// printed with 6 decimal places. Two emissions of the same report are
/// byte-identical.
inline std::string report_to_json(EvalReport report) {
  detail::sort_report(report);
  std::string s;
  auto app = [&s](const std::string& t) { s += t; };
  app("{\n");
  app("  \"cells\": [\n");
  for (std::size_t i = 0; i < report.cells.size(); ++i) {
    const auto& c = report.cells[i];
    auto metric = [&](const MetricSummary& m) {
      std::string t = "{\"hi\": " + detail::fixed6(m.hi) + ", \"lo\": " + detail::fixed6(m.lo) +
                      ", \"per_run\": [";
      for (std::size_t k = 0; k < m.per_run.size(); ++k) {
        if (k) t += ", ";
        t += detail::fixed6(m.per_run[k]);
      }
      t += "], \"point\": " + detail::fixed6(m.point) + "}";
      return t;
    };
    app("    {\"auroc\": " + metric(c.auroc) + ", \"dataset\": \"" + c.dataset +
        "\", \"fpr95\": " + metric(c.fpr95) + ", \"method\": \"" + c.method + "\"}");
    app(i + 1 < report.cells.size() ? ",\n" : "\n");
  }
  app("  ],\n");
  app("  \"protocol\": {\"ci_level\": " + detail::fixed6(report.protocol.ci_level) +
      ", \"master_seed\": " + std::to_string(report.protocol.master_seed) +
      ", \"n_draws\": " + std::to_string(report.protocol.n_draws) +
      ", \"n_id\": " + std::to_string(report.protocol.n_id) +
      ", \"n_runs\": " + std::to_string(report.protocol.n_runs) + "},\n");
  app("  \"schema_version\": " + std::to_string(report.schema_version) + ",\n");
  app("  \"tests\": [\n");
  for (std::size_t i = 0; i < report.tests.size(); ++i) {
    const auto& t = report.tests[i];
    app("    {\"dataset\": \"" + t.dataset + "\", \"effect_r\": " + detail::fixed6(t.effect_r) +
        ", \"method_a\": \"" + t.method_a + "\", \"method_b\": \"" + t.method_b +
        "\", \"metric\": \"" + t.metric + "\", \"n\": " + std::to_string(t.n) +
        ", \"p_value\": " + detail::fixed6(t.p_value) +
        ", \"statistic\": " + detail::fixed6(t.statistic) + "}");
    app(i + 1 < report.tests.size() ? ",\n" : "\n");
  }
  app("  ]\n");
  app("}\n");
  return s;
}

inline std::string report_to_csv(EvalReport report) {
  detail::sort_report(report);
  std::string s = "method,dataset,auroc,auroc_lo,auroc_hi,fpr95,fpr95_lo,fpr95_hi,n_runs\n";
  for (const auto& c : report.cells) {
    s += c.method + "," + c.dataset + "," + detail::fixed6(c.auroc.point) + "," +
         detail::fixed6(c.auroc.lo) + "," + detail::fixed6(c.auroc.hi) + "," +
         detail::fixed6(c.fpr95.point) + "," + detail::fixed6(c.fpr95.lo) + "," +
         detail::fixed6(c.fpr95.hi) + "," + std::to_string(c.auroc.per_run.size()) + "\n";
  }
  return s;
}

inline void emit_report(const EvalReport& report, ReportFormat format, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataFormatError("cannot write report " + path);
  out << (format == ReportFormat::json ? report_to_json(report) : report_to_csv(report));
}

inline EvalReport parse_report_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataFormatError("cannot open report " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw DataFormatError("report " + path + ": " + e.what());
  }
  EvalReport r;
  try {
    r.schema_version = j.at("schema_version").get<int>();
    const auto& p = j.at("protocol");
    r.protocol.ci_level = p.at("ci_level").get<double>();
    r.protocol.master_seed = p.at("master_seed").get<std::uint64_t>();
    r.protocol.n_draws = p.at("n_draws").get<int>();
    r.protocol.n_id = p.at("n_id").get<std::size_t>();
    r.protocol.n_runs = p.at("n_runs").get<int>();
    for (const auto& cj : j.at("cells")) {
      CellResult c;
      c.method = cj.at("method").get<std::string>();
      c.dataset = cj.at("dataset").get<std::string>();
      auto metric = [](const nlohmann::json& mj) {
        MetricSummary m;
        m.point = mj.at("point").get<double>();
        m.lo = mj.at("lo").get<double>();
        m.hi = mj.at("hi").get<double>();
        for (const auto& v : mj.at("per_run")) m.per_run.push_back(v.get<double>());
        return m;
      };
      c.auroc = metric(cj.at("auroc"));
      c.fpr95 = metric(cj.at("fpr95"));
      r.cells.push_back(std::move(c));
    }
    for (const auto& tj : j.at("tests")) {
      PairedTestResult t;
      t.dataset = tj.at("dataset").get<std::string>();
      t.method_a = tj.at("method_a").get<std::string>();
      t.method_b = tj.at("method_b").get<std::string>();
      t.metric = tj.at("metric").get<std::string>();
      t.statistic = tj.at("statistic").get<double>();
      t.p_value = tj.at("p_value").get<double>();
      t.effect_r = tj.at("effect_r").get<double>();
      t.n = tj.at("n").get<std::size_t>();
      r.tests.push_back(std::move(t));
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataFormatError("report " + path + ": " + e.what());
  }
  return r;
}

}  // namespace oodkit::eval
