#pragma once

#include "featsense/map_store.hpp"
#include "featsense/scan_io.hpp"
#include "featsense/types.hpp"

#include <atomic>
#include <cstdint>
#include <vector>

namespace featsense::tsdf {

/// Signed distance in millimeters and confidence weight.
struct VoxelCell {
  std::int16_t value = 0;
  std::uint16_t weight = 0;
  bool operator==(const VoxelCell&) const = default;
};

/// value in the high half, weight in the low half of one 32-bit word.
constexpr std::uint32_t pack(VoxelCell c) {
  return (static_cast<std::uint32_t>(static_cast<std::uint16_t>(c.value)) << 16) | c.weight;
}

constexpr VoxelCell unpack(std::uint32_t w) {
  return {static_cast<std::int16_t>(static_cast<std::uint16_t>(w >> 16)),
          static_cast<std::uint16_t>(w & 0xFFFFu)};
}

/// Strict total order used by min_combine: observed before unobserved, then
/// smaller |value|, larger weight, smaller value.
constexpr bool precedes(std::uint32_t a, std::uint32_t b) {
  const VoxelCell ca = unpack(a), cb = unpack(b);
  if ((ca.weight == 0) != (cb.weight == 0)) return ca.weight != 0;
  if (ca.weight == 0) return false;
  const int ma = ca.value < 0 ? -ca.value : ca.value;
  const int mb = cb.value < 0 ? -cb.value : cb.value;
  if (ma != mb) return ma < mb;
  if (ca.weight != cb.weight) return ca.weight > cb.weight;
  return ca.value < cb.value;
}

/// Lock-free minimum assignment: compare-and-exchange until the stored word
/// precedes or equals the candidate.
inline void min_combine(std::uint32_t& cell, std::uint32_t candidate) {
  std::atomic_ref<std::uint32_t> ref(cell);
  std::uint32_t assumed = ref.load(std::memory_order_relaxed);
  while (precedes(candidate, assumed)) {
    if (ref.compare_exchange_weak(assumed, candidate, std::memory_order_relaxed)) return;
  }
}

struct TsdfParams {
  double voxel_size = 0.064;
  double tau = 0.6;
  std::uint16_t weight_max = 1024;
  std::uint16_t weight_unit = 64;
  double behind_factor = 0.5;
  int chunk_size = 64;

  int tau_mm() const;
  void validate() const;
  StoreHeader store_header() const;
};

/// Dense grid aligned to a global chunk lattice. Local voxel (0,0,0) has its
/// min corner at origin_chunk * chunk_size * voxel_size.
struct GridGeometry {
  Vec3i origin_chunk = Vec3i::Zero();
  Vec3i dims_chunks = Vec3i::Ones();
  double voxel_size = 0.064;
  int chunk_size = 64;

  static GridGeometry centered(const Vec3& center, const Vec3& size_m, double voxel_size, int chunk_size);

  Vec3i dims() const { return dims_chunks * chunk_size; }
  std::size_t cell_count() const;
  double chunk_extent() const { return chunk_size * voxel_size; }
  Vec3 origin() const { return origin_chunk.cast<double>() * chunk_extent(); }
  Vec3 center() const { return origin() + 0.5 * dims().cast<double>() * voxel_size; }
  bool contains(const Vec3i& v) const;
  std::size_t index(const Vec3i& v) const;
  Vec3i voxel_of(const Vec3& world) const;
  Vec3 voxel_center(const Vec3i& v) const;
  bool operator==(const GridGeometry& o) const;
};

class TsdfVolume {
 public:
  TsdfVolume(GridGeometry geometry, TsdfParams params);

  const GridGeometry& geometry() const { return geometry_; }
  const TsdfParams& params() const { return params_; }
  std::vector<std::uint32_t>& words() { return cells_; }
  const std::vector<std::uint32_t>& words() const { return cells_; }

  VoxelCell cell(const Vec3i& v) const { return unpack(cells_[geometry_.index(v)]); }
  void set_cell(const Vec3i& v, VoxelCell c) { cells_[geometry_.index(v)] = pack(c); }
  std::size_t observed_count() const;

  std::vector<std::uint32_t> extract_chunk(const Vec3i& local_chunk) const;
  void insert_chunk(const Vec3i& local_chunk, std::span<const std::uint32_t> cells);
  void set_origin_chunk(const Vec3i& origin_chunk) { geometry_.origin_chunk = origin_chunk; }

 private:
  GridGeometry geometry_;
  TsdfParams params_;
  std::vector<std::uint32_t> cells_;
};

/// Per-scan volume; tracks the bounding box of touched voxels so reset and
/// integration only visit that region.
class CandidateVolume {
 public:
  explicit CandidateVolume(GridGeometry geometry);

  const GridGeometry& geometry() const { return geometry_; }
  std::vector<std::uint32_t>& words() { return cells_; }
  const std::vector<std::uint32_t>& words() const { return cells_; }
  VoxelCell cell(const Vec3i& v) const { return unpack(cells_[geometry_.index(v)]); }

  bool touched() const { return (touched_hi_.array() >= touched_lo_.array()).all(); }
  const Vec3i& touched_lo() const { return touched_lo_; }
  const Vec3i& touched_hi() const { return touched_hi_; }
  void mark_touched(const Vec3i& lo, const Vec3i& hi);
  void reset();
  void set_geometry(const GridGeometry& g);

 private:
  GridGeometry geometry_;
  std::vector<std::uint32_t> cells_;
  Vec3i touched_lo_;
  Vec3i touched_hi_;
};

/// Normalized d x (d x up). Throws Error(DegenerateDirection) when d || up.
Vec3 interpolation_vector(const Vec3& d, const Vec3& up);

/// tan(vfov / hlines in radians) * len.
double vertical_extent(double len, double vfov_deg, int hlines);

struct CandidateStats {
  std::size_t points = 0;
  std::size_t points_out_of_volume = 0;
  std::size_t samples = 0;
  std::size_t samples_out_of_volume = 0;
};

/// Ray-marches every valid point over its truncation band with vertical
/// interpolation, min-combining into `out`. Any worker count produces the
/// same volume.
CandidateStats generate_candidate(const StructuredScan& scan, const Pose& pose, const TsdfParams& params,
                                  CandidateVolume& out, std::size_t workers = 1);

/// Weighted running average of observed candidate cells into the global
/// volume (single writer).
void integrate(TsdfVolume& global, const CandidateVolume& candidate);

/// Moves the window by whole chunks toward new_center, persisting evicted
/// chunks and loading entering ones.
void shift_local_map(TsdfVolume& volume, const Vec3& new_center, MapStore& store);

/// Writes every chunk of the window that is observed or already stored.
void persist_volume(const TsdfVolume& volume, MapStore& store);

/// Linear zero-crossing samples between axis neighbors of opposite sign.
std::vector<Vec3> export_zero_crossings(const TsdfVolume& volume);
std::vector<Vec3> export_zero_crossings(const MapStore& store);

void write_ply(const std::vector<Vec3>& points, const std::filesystem::path& path);

}  // namespace featsense::tsdf
