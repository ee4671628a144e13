// Copyright (c) 2026, the oodkit authors
// SPDX-License-Identifier: Apache-2.0
//
// Feature table IO. CSV: header scan_id,roi_index,dataset,label,f0000..;
// binary: JSON header (row count, dim, provenance arrays) paired with a
// row-major little-endian f32 block. Stage-map files use the same
// sidecar-plus-payload convention, channel-major.

#pragma once

#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "oodkit/errors.hpp"
#include "oodkit/features.hpp"
#include "oodkit/rvol.hpp"

namespace oodkit::features {

namespace detail {

inline std::string float_to_string(float v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.9g", static_cast<double>(v));
  return buf;
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    if (comma == std::string::npos) {
      fields.push_back(line.substr(start));
      break;
    }
    fields.push_back(line.substr(start, comma - start));
    start = comma + 1;
  }
  if (!fields.empty() && !fields.back().empty() && fields.back().back() == '\r')
    fields.back().pop_back();
  return fields;
}

}  // namespace detail

inline void save_feature_table_csv(const DescriptorSet& set, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataFormatError("cannot write feature table " + path);
  out << "scan_id,roi_index,dataset,label";
  for (std::size_t d = 0; d < set.dim; ++d) {
    char buf[16];
    std::snprintf(buf, sizeof buf, ",f%04zu", d);
    out << buf;
  }
  out << "\n";
  for (const auto& row : set.rows) {
    out << row.scan_id << ',' << row.roi_index << ',' << row.dataset << ',' << row.label;
    for (float v : row.vec) out << ',' << detail::float_to_string(v);
    out << "\n";
  }
}

inline DescriptorSet load_feature_table_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataFormatError("cannot open feature table " + path);
  std::string line;
  if (!std::getline(in, line)) throw DataFormatError("feature table " + path + ": empty file");
  const auto header = detail::split_csv_line(line);
  if (header.size() < 5 || header[0] != "scan_id" || header[1] != "roi_index" ||
      header[2] != "dataset" || header[3] != "label")
    throw DataFormatError("feature table " + path + ": malformed header");
  const std::size_t dim = header.size() - 4;
  DescriptorSet set;
  set.dim = dim;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto fields = detail::split_csv_line(line);
    if (fields.size() != header.size())
      throw DataFormatError("feature table " + path + ": row " + std::to_string(lineno) +
                            " has " + std::to_string(fields.size()) + " fields, expected " +
                            std::to_string(header.size()));
    ScanDescriptor row;
    row.scan_id = fields[0];
    try {
      row.roi_index = std::stoi(fields[1]);
      row.label = std::stoi(fields[3]);
    } catch (const std::exception&) {
      throw DataFormatError("feature table " + path + ": row " + std::to_string(lineno) +
                            ": bad roi_index/label");
    }
    row.dataset = fields[2];
    row.vec.resize(dim);
    for (std::size_t d = 0; d < dim; ++d) {
      const std::string& f = fields[4 + d];
      char* end = nullptr;
      const float v = std::strtof(f.c_str(), &end);
      if (end == f.c_str() || *end != '\0' || !std::isfinite(v))
        throw DataFormatError("feature table " + path + ": row " + std::to_string(lineno) +
                              ": non-finite or unparsable value \"" + f + "\"");
      row.vec[d] = v;
    }
    set.rows.push_back(std::move(row));
  }
  return set;
}

inline void save_feature_table_binary(const DescriptorSet& set, const std::string& header_path) {
  const auto p = rvol::detail::resolve(header_path);
  nlohmann::json j;
  j["version"] = 1;
  j["rows"] = set.rows.size();
  j["dim"] = set.dim;
  auto& sid = j["scan_ids"] = nlohmann::json::array();
  auto& roi = j["roi_indices"] = nlohmann::json::array();
  auto& ds = j["datasets"] = nlohmann::json::array();
  auto& lab = j["labels"] = nlohmann::json::array();
  for (const auto& row : set.rows) {
    sid.push_back(row.scan_id);
    roi.push_back(row.roi_index);
    ds.push_back(row.dataset);
    lab.push_back(row.label);
  }
  std::ofstream hout(p.header);
  if (!hout) throw DataFormatError("cannot write feature table header " + p.header.string());
  hout << j.dump(2) << "\n";
  std::ofstream bout(p.payload, std::ios::binary);
  if (!bout) throw DataFormatError("cannot write feature table payload " + p.payload.string());
  for (const auto& row : set.rows)
    bout.write(reinterpret_cast<const char*>(row.vec.data()),
               static_cast<std::streamsize>(row.vec.size() * sizeof(float)));
}

inline DescriptorSet load_feature_table_binary(const std::string& header_path) {
  const auto p = rvol::detail::resolve(header_path);
  std::ifstream hin(p.header);
  if (!hin) throw DataFormatError("cannot open feature table header " + p.header.string());
  nlohmann::json j;
  try {
    hin >> j;
  } catch (const nlohmann::json::exception& e) {
    throw DataFormatError("feature table header " + p.header.string() + ": " + e.what());
  }
  DescriptorSet set;
  std::size_t rows = 0;
  try {
    rows = j.at("rows").get<std::size_t>();
    set.dim = j.at("dim").get<std::size_t>();
  } catch (const nlohmann::json::exception& e) {
    throw DataFormatError("feature table header " + p.header.string() + ": " + e.what());
  }
  const auto& sid = j.at("scan_ids");
  const auto& roi = j.at("roi_indices");
  const auto& ds = j.at("datasets");
  const auto& lab = j.at("labels");
  if (sid.size() != rows || roi.size() != rows || ds.size() != rows || lab.size() != rows)
    throw DataFormatError("feature table header " + p.header.string() +
                          ": provenance arrays do not match row count");
  auto payload = rvol::detail::read_payload<float>(
      p.payload, static_cast<std::int64_t>(rows * set.dim));
  for (std::size_t r = 0; r < rows; ++r) {
    ScanDescriptor row;
    row.scan_id = sid[r].get<std::string>();
    row.roi_index = roi[r].get<int>();
    row.dataset = ds[r].get<std::string>();
    row.label = lab[r].get<int>();
    row.vec.assign(payload.begin() + static_cast<std::ptrdiff_t>(r * set.dim),
                   payload.begin() + static_cast<std::ptrdiff_t>((r + 1) * set.dim));
    for (float v : row.vec)
      if (!std::isfinite(v))
        throw DataFormatError("feature table " + p.payload.string() + ": non-finite entry in row " +
                              std::to_string(r));
    set.rows.push_back(std::move(row));
  }
  return set;
}

/// Dispatch on extension: .csv for text, .json for the binary pair.
inline void save_feature_table(const DescriptorSet& set, const std::string& path) {
  const auto ext = std::filesystem::path(path).extension();
  if (ext == ".csv")
    save_feature_table_csv(set, path);
  else if (ext == ".json")
    save_feature_table_binary(set, path);
  else
    throw DataFormatError("feature table path must end in .csv or .json: " + path);
}

inline DescriptorSet load_feature_table(const std::string& path) {
  const auto ext = std::filesystem::path(path).extension();
  if (ext == ".csv") return load_feature_table_csv(path);
  if (ext == ".json") return load_feature_table_binary(path);
  throw DataFormatError("feature table path must end in .csv or .json: " + path);
}

// ---------------------------------------------------------------------------
// Stage-map files: JSON sidecar + channel-major f32 payload
// ---------------------------------------------------------------------------

inline void write_stage_map(const std::string& path, const StageFeatureMap& map) {
  map.validate();
  const auto p = rvol::detail::resolve(path);
  nlohmann::json j;
  j["stage_index"] = map.stage_index;
  j["channels"] = map.channels;
  j["grid"] = {map.grid.x, map.grid.y, map.grid.z};
  j["dtype"] = "f32";
  j["order"] = "channel-major";
  std::ofstream hout(p.header);
  if (!hout) throw DataFormatError("cannot write stage map header " + p.header.string());
  hout << j.dump(2) << "\n";
  rvol::detail::write_payload(p.payload, map.values);
}

inline StageFeatureMap read_stage_map(const std::string& path) {
  const auto p = rvol::detail::resolve(path);
  std::ifstream hin(p.header);
  if (!hin) throw DataFormatError("cannot open stage map header " + p.header.string());
  nlohmann::json j;
  try {
    hin >> j;
  } catch (const nlohmann::json::exception& e) {
    throw DataFormatError("stage map header " + p.header.string() + ": " + e.what());
  }
  StageFeatureMap map;
  try {
    map.stage_index = j.at("stage_index").get<int>();
    map.channels = j.at("channels").get<int>();
    const auto g = j.at("grid");
    map.grid = {g[0].get<int>(), g[1].get<int>(), g[2].get<int>()};
    if (j.at("dtype").get<std::string>() != "f32" ||
        j.at("order").get<std::string>() != "channel-major")
      throw DataFormatError("stage map " + p.header.string() + ": unsupported dtype/order");
  } catch (const nlohmann::json::exception& e) {
    throw DataFormatError("stage map header " + p.header.string() + ": " + e.what());
  }
  map.values = rvol::detail::read_payload<float>(
      p.payload, static_cast<std::int64_t>(map.channels) * grid3d::voxel_count(map.grid));
  map.validate();
  return map;
}

}  // namespace oodkit::features
