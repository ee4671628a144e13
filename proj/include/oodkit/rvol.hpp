// Copyright (c) 2026, the oodkit authors
// SPDX-License-Identifier: Apache-2.0
//
// RVOL raw-volume format: a JSON sidecar describing dims/spacing/dtype
// paired with a little-endian binary payload. f32 for intensities,
// u8 (0/1) for masks. Storage order is x-fastest.

#pragma once

#include <bit>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "oodkit/errors.hpp"
#include "oodkit/grid.hpp"

namespace oodkit::rvol {

static_assert(std::endian::native == std::endian::little,
              "RVOL payloads are little-endian; big-endian hosts are unsupported");

namespace detail {

struct Paths {
  std::filesystem::path header;
  std::filesystem::path payload;
};

/// "vol.json" -> {vol.json, vol.raw}; any other path is treated as a stem.
inline Paths resolve(const std::string& path) {
  std::filesystem::path p(path);
  if (p.extension() == ".json") {
    std::filesystem::path raw = p;
    raw.replace_extension(".raw");
    return {p, raw};
  }
  return {std::filesystem::path(path + ".json"), std::filesystem::path(path + ".raw")};
}

struct Header {
  grid3d::Vec3i dims;
  grid3d::Vec3d spacing;
  std::string dtype;
};

inline Header read_header(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw DataFormatError("RVOL: cannot open header " + file.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw DataFormatError("RVOL: invalid JSON header " + file.string() + ": " + e.what());
  }
  Header h;
  try {
    const auto d = j.at("dims");
    const auto s = j.at("spacing_mm");
    if (d.size() != 3 || s.size() != 3) throw DataFormatError("RVOL: dims/spacing must have 3 entries");
    h.dims = {d[0].get<int>(), d[1].get<int>(), d[2].get<int>()};
    h.spacing = {s[0].get<double>(), s[1].get<double>(), s[2].get<double>()};
    h.dtype = j.at("dtype").get<std::string>();
    if (j.at("order").get<std::string>() != "x-fastest")
      throw DataFormatError("RVOL: unsupported storage order");
  } catch (const nlohmann::json::exception& e) {
    throw DataFormatError("RVOL: malformed header " + file.string() + ": " + e.what());
  }
  if (h.dims.x < 1 || h.dims.y < 1 || h.dims.z < 1)
    throw DataFormatError("RVOL: dims must be >= 1");
  if (!(h.spacing.x > 0) || !(h.spacing.y > 0) || !(h.spacing.z > 0))
    throw DataFormatError("RVOL: spacing must be > 0");
  return h;
}

inline void write_header(const std::filesystem::path& file, const grid3d::Vec3i& dims,
                         const grid3d::Vec3d& spacing, const std::string& dtype) {
  nlohmann::json j;
  j["dims"] = {dims.x, dims.y, dims.z};
  j["spacing_mm"] = {spacing.x, spacing.y, spacing.z};
  j["dtype"] = dtype;
  j["order"] = "x-fastest";
  std::ofstream out(file);
  if (!out) throw DataFormatError("RVOL: cannot write header " + file.string());
  out << j.dump(2) << "\n";
}

template <typename T>
inline std::vector<T> read_payload(const std::filesystem::path& file, std::int64_t count) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw DataFormatError("RVOL: cannot open payload " + file.string());
  in.seekg(0, std::ios::end);
  const auto bytes = static_cast<std::int64_t>(in.tellg());
  if (bytes != count * static_cast<std::int64_t>(sizeof(T)))
    throw DataFormatError("RVOL: payload size mismatch in " + file.string());
  in.seekg(0);
  std::vector<T> data(static_cast<std::size_t>(count));
  in.read(reinterpret_cast<char*>(data.data()), bytes);
  if (!in) throw DataFormatError("RVOL: short read from " + file.string());
  return data;
}

template <typename T>
inline void write_payload(const std::filesystem::path& file, const std::vector<T>& data) {
  std::ofstream out(file, std::ios::binary);
  if (!out) throw DataFormatError("RVOL: cannot write payload " + file.string());
  out.write(reinterpret_cast<const char*>(data.data()),
            static_cast<std::streamsize>(data.size() * sizeof(T)));
}

}  // namespace detail

inline void write_volume(const std::string& path, const grid3d::VolumeGrid& volume) {
  const auto p = detail::resolve(path);
  detail::write_header(p.header, volume.dims, volume.spacing_mm, "f32");
  detail::write_payload(p.payload, volume.values);
}

inline grid3d::VolumeGrid read_volume(const std::string& path) {
  const auto p = detail::resolve(path);
  const auto h = detail::read_header(p.header);
  if (h.dtype != "f32") throw DataFormatError("RVOL: expected dtype f32 in " + p.header.string());
  auto values = detail::read_payload<float>(p.payload, grid3d::voxel_count(h.dims));
  return grid3d::VolumeGrid(h.dims, h.spacing, std::move(values));
}

inline void write_mask(const std::string& path, const grid3d::LabelMask& mask,
                       const grid3d::Vec3d& spacing_mm = {1.0, 1.0, 1.0}) {
  const auto p = detail::resolve(path);
  detail::write_header(p.header, mask.dims, spacing_mm, "u8");
  detail::write_payload(p.payload, mask.bits);
}

inline std::pair<grid3d::LabelMask, grid3d::Vec3d> read_mask(const std::string& path) {
  const auto p = detail::resolve(path);
  const auto h = detail::read_header(p.header);
  if (h.dtype != "u8") throw DataFormatError("RVOL: expected dtype u8 in " + p.header.string());
  auto bits = detail::read_payload<std::uint8_t>(p.payload, grid3d::voxel_count(h.dims));
  for (auto b : bits)
    if (b > 1) throw DataFormatError("RVOL: mask payload must be 0/1 in " + p.payload.string());
  return {grid3d::LabelMask(h.dims, std::move(bits)), h.spacing};
}

}  // namespace oodkit::rvol
