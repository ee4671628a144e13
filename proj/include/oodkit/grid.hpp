// Copyright (c) 2026, the oodkit authors
// SPDX-License-Identifier: Apache-2.0
//
// 3D volume and mask primitives: intensity normalization, resampling,
// morphology, connected components, and segmentation quality metrics.

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <vector>

#include "oodkit/errors.hpp"

namespace oodkit::grid3d {

struct Vec3i {
  int x = 0, y = 0, z = 0;
  bool operator==(const Vec3i&) const = default;
  int operator[](int a) const { return a == 0 ? x : (a == 1 ? y : z); }
  int& operator[](int a) { return a == 0 ? x : (a == 1 ? y : z); }
};

struct Vec3d {
  double x = 0, y = 0, z = 0;
  bool operator==(const Vec3d&) const = default;
  double operator[](int a) const { return a == 0 ? x : (a == 1 ? y : z); }
  double& operator[](int a) { return a == 0 ? x : (a == 1 ? y : z); }
};

inline std::int64_t voxel_count(const Vec3i& dims) {
  return static_cast<std::int64_t>(dims.x) * dims.y * dims.z;
}

inline void check_dims(const Vec3i& dims) {
  if (dims.x < 1 || dims.y < 1 || dims.z < 1)
    throw std::invalid_argument("grid dims must be >= 1 per axis");
}

inline void check_spacing(const Vec3d& s) {
  if (!(s.x > 0.0) || !(s.y > 0.0) || !(s.z > 0.0) || !std::isfinite(s.x) ||
      !std::isfinite(s.y) || !std::isfinite(s.z))
    throw std::invalid_argument("spacing must be finite and > 0 per axis");
}

/// Scalar intensity grid. Voxel storage is x-fastest:
/// index = i + nx * (j + ny * k).
struct VolumeGrid {
  Vec3i dims;
  Vec3d spacing_mm{1.0, 1.0, 1.0};
  std::vector<float> values;

  VolumeGrid() = default;
  VolumeGrid(Vec3i d, Vec3d s, std::vector<float> v)
      : dims(d), spacing_mm(s), values(std::move(v)) {
    check_dims(dims);
    check_spacing(spacing_mm);
    if (static_cast<std::int64_t>(values.size()) != voxel_count(dims))
      throw std::invalid_argument("values length must equal nx*ny*nz");
  }
  static VolumeGrid filled(Vec3i d, Vec3d s, float value) {
    return VolumeGrid(d, s, std::vector<float>(static_cast<std::size_t>(voxel_count(d)), value));
  }

  std::int64_t index(int i, int j, int k) const {
    return i + static_cast<std::int64_t>(dims.x) * (j + static_cast<std::int64_t>(dims.y) * k);
  }
  float at(int i, int j, int k) const { return values[static_cast<std::size_t>(index(i, j, k))]; }
  float& at(int i, int j, int k) { return values[static_cast<std::size_t>(index(i, j, k))]; }
  std::int64_t size() const { return voxel_count(dims); }
};

/// Binary label grid, same storage order as VolumeGrid.
struct LabelMask {
  Vec3i dims;
  std::vector<std::uint8_t> bits;

  LabelMask() = default;
  explicit LabelMask(Vec3i d)
      : dims(d), bits(static_cast<std::size_t>(voxel_count(d)), 0) {
    check_dims(dims);
  }
  LabelMask(Vec3i d, std::vector<std::uint8_t> b) : dims(d), bits(std::move(b)) {
    check_dims(dims);
    if (static_cast<std::int64_t>(bits.size()) != voxel_count(dims))
      throw std::invalid_argument("bits length must equal nx*ny*nz");
  }

  std::int64_t index(int i, int j, int k) const {
    return i + static_cast<std::int64_t>(dims.x) * (j + static_cast<std::int64_t>(dims.y) * k);
  }
  bool at(int i, int j, int k) const { return bits[static_cast<std::size_t>(index(i, j, k))] != 0; }
  void set(int i, int j, int k, bool v = true) {
    bits[static_cast<std::size_t>(index(i, j, k))] = v ? 1 : 0;
  }
  bool in_bounds(int i, int j, int k) const {
    return i >= 0 && j >= 0 && k >= 0 && i < dims.x && j < dims.y && k < dims.z;
  }
  std::int64_t count() const {
    std::int64_t n = 0;
    for (auto b : bits) n += (b != 0);
    return n;
  }
  bool empty() const { return count() == 0; }
  std::int64_t size() const { return voxel_count(dims); }
  bool operator==(const LabelMask&) const = default;
};

/// Hounsfield clamp window. Default is the lung window [-400, 400].
struct NormalizationWindow {
  double lo_hu = -400.0;
  double hi_hu = 400.0;

  void validate() const {
    if (!(lo_hu < hi_hu) || !std::isfinite(lo_hu) || !std::isfinite(hi_hu))
      throw std::invalid_argument("normalization window requires finite lo < hi");
  }
};

/// Axis-aligned voxel box: minimum corner plus extent.
struct BoxRegion {
  Vec3i corner;
  Vec3i size;
  bool operator==(const BoxRegion&) const = default;
};

/// One connected foreground region.
struct Component {
  std::vector<std::int64_t> voxels;  // sorted linear indices
  BoxRegion bbox;
  double volume_mm3 = 0.0;
};

// ---------------------------------------------------------------------------
// Intensity operations
// ---------------------------------------------------------------------------

/// Clamp to [lo, hi] and rescale to [0, 1]. Dims and spacing unchanged.
inline VolumeGrid normalize_hu(const VolumeGrid& volume, const NormalizationWindow& window) {
  window.validate();
  VolumeGrid out = volume;
  const double lo = window.lo_hu;
  const double inv = 1.0 / (window.hi_hu - window.lo_hu);
  for (auto& v : out.values) {
    const double c = std::clamp(static_cast<double>(v), window.lo_hu, window.hi_hu);
    v = static_cast<float>((c - lo) * inv);
  }
  return out;
}

enum class ResampleMode { trilinear, nearest };

namespace detail {

inline int clamp_index(std::int64_t i, int n) {
  return static_cast<int>(std::clamp<std::int64_t>(i, 0, n - 1));
}

}  // namespace detail

/// Resamples to a new physical spacing. Output dims are
/// round(dims * spacing / target) with a minimum of 1 per axis; sampling
/// maps output voxel centers into the input grid. Resampling to the
/// current spacing reproduces the input bit-for-bit.
inline VolumeGrid resample(const VolumeGrid& volume, const Vec3d& target_spacing_mm,
                           ResampleMode mode) {
  check_spacing(target_spacing_mm);
  Vec3i odims;
  for (int a = 0; a < 3; ++a) {
    const double extent = volume.dims[a] * volume.spacing_mm[a] / target_spacing_mm[a];
    odims[a] = static_cast<int>(std::max<std::int64_t>(1, std::llround(extent)));
  }
  VolumeGrid out;
  out.dims = odims;
  out.spacing_mm = target_spacing_mm;
  out.values.resize(static_cast<std::size_t>(voxel_count(odims)));

  const Vec3d ratio{target_spacing_mm.x / volume.spacing_mm.x,
                    target_spacing_mm.y / volume.spacing_mm.y,
                    target_spacing_mm.z / volume.spacing_mm.z};
  std::size_t o = 0;
  for (int k = 0; k < odims.z; ++k) {
    const double w = (k + 0.5) * ratio.z - 0.5;
    for (int j = 0; j < odims.y; ++j) {
      const double v = (j + 0.5) * ratio.y - 0.5;
      for (int i = 0; i < odims.x; ++i, ++o) {
        const double u = (i + 0.5) * ratio.x - 0.5;
        if (mode == ResampleMode::nearest) {
          const int si = detail::clamp_index(std::llround(u), volume.dims.x);
          const int sj = detail::clamp_index(std::llround(v), volume.dims.y);
          const int sk = detail::clamp_index(std::llround(w), volume.dims.z);
          out.values[o] = volume.at(si, sj, sk);
        } else {
          const std::int64_t i0 = static_cast<std::int64_t>(std::floor(u));
          const std::int64_t j0 = static_cast<std::int64_t>(std::floor(v));
          const std::int64_t k0 = static_cast<std::int64_t>(std::floor(w));
          const double fx = u - static_cast<double>(i0);
          const double fy = v - static_cast<double>(j0);
          const double fz = w - static_cast<double>(k0);
          const int ia = detail::clamp_index(i0, volume.dims.x);
          const int ib = detail::clamp_index(i0 + 1, volume.dims.x);
          const int ja = detail::clamp_index(j0, volume.dims.y);
          const int jb = detail::clamp_index(j0 + 1, volume.dims.y);
          const int ka = detail::clamp_index(k0, volume.dims.z);
          const int kb = detail::clamp_index(k0 + 1, volume.dims.z);
          const double c00 = volume.at(ia, ja, ka) * (1 - fx) + volume.at(ib, ja, ka) * fx;
          const double c10 = volume.at(ia, jb, ka) * (1 - fx) + volume.at(ib, jb, ka) * fx;
          const double c01 = volume.at(ia, ja, kb) * (1 - fx) + volume.at(ib, ja, kb) * fx;
          const double c11 = volume.at(ia, jb, kb) * (1 - fx) + volume.at(ib, jb, kb) * fx;
          const double c0 = c00 * (1 - fy) + c10 * fy;
          const double c1 = c01 * (1 - fy) + c11 * fy;
          out.values[o] = static_cast<float>(c0 * (1 - fz) + c1 * fz);
        }
      }
    }
  }
  return out;
}

/// Nearest-neighbour resampling of a mask.
inline LabelMask resample_mask(const LabelMask& mask, const Vec3d& spacing_mm,
                               const Vec3d& target_spacing_mm) {
  VolumeGrid tmp;
  tmp.dims = mask.dims;
  tmp.spacing_mm = spacing_mm;
  tmp.values.assign(mask.bits.begin(), mask.bits.end());
  const VolumeGrid res = resample(tmp, target_spacing_mm, ResampleMode::nearest);
  LabelMask out(res.dims);
  for (std::size_t i = 0; i < res.values.size(); ++i) out.bits[i] = res.values[i] > 0.5f ? 1 : 0;
  return out;
}

// ---------------------------------------------------------------------------
// Connected components
// ---------------------------------------------------------------------------

enum class Connectivity { faces6 = 6, full26 = 26 };

namespace detail {

inline const std::vector<Vec3i>& neighbor_offsets(Connectivity c) {
  static const std::vector<Vec3i> six = {{1, 0, 0}, {-1, 0, 0}, {0, 1, 0},
                                         {0, -1, 0}, {0, 0, 1}, {0, 0, -1}};
  static const std::vector<Vec3i> twentysix = [] {
    std::vector<Vec3i> v;
    for (int dk = -1; dk <= 1; ++dk)
      for (int dj = -1; dj <= 1; ++dj)
        for (int di = -1; di <= 1; ++di)
          if (di || dj || dk) v.push_back({di, dj, dk});
    return v;
  }();
  return c == Connectivity::faces6 ? six : twentysix;
}

}  // namespace detail

/// Maximal connected foreground regions, ordered by descending voxel count
/// with ties broken by the smaller linearized bbox corner. An empty mask
/// yields an empty list.
inline std::vector<Component> connected_components(const LabelMask& mask, Connectivity connectivity,
                                                   const Vec3d& spacing_mm = {1.0, 1.0, 1.0}) {
  const auto& offs = detail::neighbor_offsets(connectivity);
  const double voxel_mm3 = spacing_mm.x * spacing_mm.y * spacing_mm.z;
  std::vector<std::uint8_t> seen(mask.bits.size(), 0);
  std::vector<Component> comps;
  std::vector<std::int64_t> stack;

  for (int k = 0; k < mask.dims.z; ++k)
    for (int j = 0; j < mask.dims.y; ++j)
      for (int i = 0; i < mask.dims.x; ++i) {
        const std::int64_t lin = mask.index(i, j, k);
        if (!mask.bits[static_cast<std::size_t>(lin)] || seen[static_cast<std::size_t>(lin)])
          continue;
        Component comp;
        Vec3i lo{i, j, k}, hi{i, j, k};
        stack.clear();
        stack.push_back(lin);
        seen[static_cast<std::size_t>(lin)] = 1;
        while (!stack.empty()) {
          const std::int64_t cur = stack.back();
          stack.pop_back();
          comp.voxels.push_back(cur);
          const int ci = static_cast<int>(cur % mask.dims.x);
          const int cj = static_cast<int>((cur / mask.dims.x) % mask.dims.y);
          const int ck = static_cast<int>(cur / (static_cast<std::int64_t>(mask.dims.x) * mask.dims.y));
          lo.x = std::min(lo.x, ci); lo.y = std::min(lo.y, cj); lo.z = std::min(lo.z, ck);
          hi.x = std::max(hi.x, ci); hi.y = std::max(hi.y, cj); hi.z = std::max(hi.z, ck);
          for (const auto& d : offs) {
            const int ni = ci + d.x, nj = cj + d.y, nk = ck + d.z;
            if (!mask.in_bounds(ni, nj, nk)) continue;
            const std::int64_t nl = mask.index(ni, nj, nk);
            if (mask.bits[static_cast<std::size_t>(nl)] && !seen[static_cast<std::size_t>(nl)]) {
              seen[static_cast<std::size_t>(nl)] = 1;
              stack.push_back(nl);
            }
          }
        }
        std::sort(comp.voxels.begin(), comp.voxels.end());
        comp.bbox.corner = lo;
        comp.bbox.size = {hi.x - lo.x + 1, hi.y - lo.y + 1, hi.z - lo.z + 1};
        comp.volume_mm3 = static_cast<double>(comp.voxels.size()) * voxel_mm3;
        comps.push_back(std::move(comp));
      }

  std::sort(comps.begin(), comps.end(), [&](const Component& a, const Component& b) {
    if (a.voxels.size() != b.voxels.size()) return a.voxels.size() > b.voxels.size();
    const auto alin = a.bbox.corner.x + static_cast<std::int64_t>(mask.dims.x) *
                                            (a.bbox.corner.y + static_cast<std::int64_t>(mask.dims.y) * a.bbox.corner.z);
    const auto blin = b.bbox.corner.x + static_cast<std::int64_t>(mask.dims.x) *
                                            (b.bbox.corner.y + static_cast<std::int64_t>(mask.dims.y) * b.bbox.corner.z);
    return alin < blin;
  });
  return comps;
}

// ---------------------------------------------------------------------------
// Morphology
// ---------------------------------------------------------------------------

namespace detail {

/// Structuring element: the 6-neighborhood ball of the given radius,
/// i.e. all offsets with |di|+|dj|+|dk| <= r (radius 1 is the 7-voxel cross).
inline std::vector<Vec3i> cross_element(int radius) {
  std::vector<Vec3i> offs;
  for (int dk = -radius; dk <= radius; ++dk)
    for (int dj = -radius; dj <= radius; ++dj)
      for (int di = -radius; di <= radius; ++di)
        if (std::abs(di) + std::abs(dj) + std::abs(dk) <= radius) offs.push_back({di, dj, dk});
  return offs;
}

}  // namespace detail

/// Erosion with the cross element; out-of-grid voxels count as background,
/// so foreground touching the grid border erodes away.
inline LabelMask erode(const LabelMask& mask, int radius_vox) {
  if (radius_vox < 0) throw std::invalid_argument("erode: radius must be >= 0");
  if (radius_vox == 0) return mask;
  const auto offs = detail::cross_element(radius_vox);
  LabelMask out(mask.dims);
  for (int k = 0; k < mask.dims.z; ++k)
    for (int j = 0; j < mask.dims.y; ++j)
      for (int i = 0; i < mask.dims.x; ++i) {
        if (!mask.at(i, j, k)) continue;
        bool keep = true;
        for (const auto& d : offs) {
          const int ni = i + d.x, nj = j + d.y, nk = k + d.z;
          if (!mask.in_bounds(ni, nj, nk) || !mask.at(ni, nj, nk)) {
            keep = false;
            break;
          }
        }
        if (keep) out.set(i, j, k);
      }
  return out;
}

/// Dilation with the cross element, clipped at the grid boundary.
inline LabelMask dilate(const LabelMask& mask, int radius_vox) {
  if (radius_vox < 0) throw std::invalid_argument("dilate: radius must be >= 0");
  if (radius_vox == 0) return mask;
  const auto offs = detail::cross_element(radius_vox);
  LabelMask out(mask.dims);
  for (int k = 0; k < mask.dims.z; ++k)
    for (int j = 0; j < mask.dims.y; ++j)
      for (int i = 0; i < mask.dims.x; ++i) {
        bool hit = false;
        for (const auto& d : offs) {
          const int ni = i + d.x, nj = j + d.y, nk = k + d.z;
          if (mask.in_bounds(ni, nj, nk) && mask.at(ni, nj, nk)) {
            hit = true;
            break;
          }
        }
        if (hit) out.set(i, j, k);
      }
  return out;
}

inline LabelMask mask_complement(const LabelMask& m) {
  LabelMask out = m;
  for (auto& b : out.bits) b = b ? 0 : 1;
  return out;
}

inline LabelMask mask_difference(const LabelMask& a, const LabelMask& b) {
  if (a.dims != b.dims) throw std::invalid_argument("mask_difference: dim mismatch");
  LabelMask out = a;
  for (std::size_t i = 0; i < out.bits.size(); ++i)
    if (b.bits[i]) out.bits[i] = 0;
  return out;
}

inline LabelMask mask_intersection(const LabelMask& a, const LabelMask& b) {
  if (a.dims != b.dims) throw std::invalid_argument("mask_intersection: dim mismatch");
  LabelMask out = a;
  for (std::size_t i = 0; i < out.bits.size(); ++i) out.bits[i] = (a.bits[i] && b.bits[i]) ? 1 : 0;
  return out;
}

/// Boundary ring / interior partition of a mask: interior is the radius-1
/// erosion, boundary is the radius-1 dilation minus the interior (a band
/// roughly 3 voxels thick straddling the contour).
struct BoundarySplit {
  LabelMask boundary;
  LabelMask interior;
  bool interior_empty = false;
};

inline BoundarySplit boundary_interior_split(const LabelMask& mask) {
  if (mask.empty())
    throw std::invalid_argument("boundary_interior_split: mask must be nonempty");
  BoundarySplit out;
  out.interior = erode(mask, 1);
  out.boundary = mask_difference(dilate(mask, 1), out.interior);
  out.interior_empty = out.interior.empty();
  return out;
}

// ---------------------------------------------------------------------------
// Segmentation quality metrics
// ---------------------------------------------------------------------------

/// Dice similarity coefficient. Two empty masks agree perfectly (1.0).
inline double dice(const LabelMask& a, const LabelMask& b) {
  if (a.dims != b.dims) throw std::invalid_argument("dice: dim mismatch");
  std::int64_t na = 0, nb = 0, ni = 0;
  for (std::size_t i = 0; i < a.bits.size(); ++i) {
    na += a.bits[i] != 0;
    nb += b.bits[i] != 0;
    ni += (a.bits[i] && b.bits[i]);
  }
  if (na + nb == 0) return 1.0;
  return 2.0 * static_cast<double>(ni) / static_cast<double>(na + nb);
}

namespace detail {

/// Foreground voxels with at least one background 6-neighbor
/// (out-of-grid counts as background).
inline std::vector<Vec3i> surface_voxels(const LabelMask& m) {
  std::vector<Vec3i> surf;
  for (int k = 0; k < m.dims.z; ++k)
    for (int j = 0; j < m.dims.y; ++j)
      for (int i = 0; i < m.dims.x; ++i) {
        if (!m.at(i, j, k)) continue;
        const bool border =
            !(m.in_bounds(i - 1, j, k) && m.at(i - 1, j, k)) ||
            !(m.in_bounds(i + 1, j, k) && m.at(i + 1, j, k)) ||
            !(m.in_bounds(i, j - 1, k) && m.at(i, j - 1, k)) ||
            !(m.in_bounds(i, j + 1, k) && m.at(i, j + 1, k)) ||
            !(m.in_bounds(i, j, k - 1) && m.at(i, j, k - 1)) ||
            !(m.in_bounds(i, j, k + 1) && m.at(i, j, k + 1));
        if (border) surf.push_back({i, j, k});
      }
  return surf;
}

inline double nearest_rank(std::vector<double>& values, double p) {
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  std::size_t rank = static_cast<std::size_t>(std::ceil(p * static_cast<double>(n)));
  rank = std::clamp<std::size_t>(rank, 1, n);
  return values[rank - 1];
}

}  // namespace detail

/// 95th percentile (nearest-rank) of the pooled directed surface distances
/// A->B and B->A in physical millimetres.
inline double hd95(const LabelMask& a, const LabelMask& b, const Vec3d& spacing_mm) {
  if (a.dims != b.dims) throw std::invalid_argument("hd95: dim mismatch");
  if (a.empty() || b.empty()) throw std::invalid_argument("hd95: masks must be nonempty");
  check_spacing(spacing_mm);
  const auto sa = detail::surface_voxels(a);
  const auto sb = detail::surface_voxels(b);
  auto directed = [&](const std::vector<Vec3i>& from, const std::vector<Vec3i>& to,
                      std::vector<double>& out) {
    for (const auto& p : from) {
      double best = std::numeric_limits<double>::infinity();
      for (const auto& q : to) {
        const double dx = (p.x - q.x) * spacing_mm.x;
        const double dy = (p.y - q.y) * spacing_mm.y;
        const double dz = (p.z - q.z) * spacing_mm.z;
        best = std::min(best, dx * dx + dy * dy + dz * dz);
      }
      out.push_back(std::sqrt(best));
    }
  };
  std::vector<double> pooled;
  pooled.reserve(sa.size() + sb.size());
  directed(sa, sb, pooled);
  directed(sb, sa, pooled);
  return detail::nearest_rank(pooled, 0.95);
}

}  // namespace oodkit::grid3d
