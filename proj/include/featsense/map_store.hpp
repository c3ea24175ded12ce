#pragma once

#include <compare>
#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <vector>

namespace featsense::tsdf {

struct ChunkCoord {
  std::int32_t x = 0, y = 0, z = 0;
  auto operator<=>(const ChunkCoord&) const = default;
};

struct StoreHeader {
  double voxel_size = 0.064;
  double tau = 0.6;
  std::uint32_t chunk_size = 64;
  std::uint32_t weight_max = 1024;
  bool operator==(const StoreHeader&) const = default;
};

/// Single-file chunk store. Layout (little-endian):
///   "FTSD" | f64 voxel_size | f64 tau | u32 chunk_size | u32 weight_max |
///   u64 n | n x (i32 cx, i32 cy, i32 cz, u64 byte offset) |
///   n x chunk_size^3 packed u32 cells (x fastest)
/// Index entries are sorted by chunk coordinate. Writes are buffered until
/// flush(), which rewrites the file atomically.
class MapStore {
 public:
  static MapStore create(const std::filesystem::path& path, const StoreHeader& header);
  static MapStore open(const std::filesystem::path& path);

  const StoreHeader& header() const { return header_; }
  const std::filesystem::path& path() const { return path_; }
  std::size_t chunk_cells() const {
    return static_cast<std::size_t>(header_.chunk_size) * header_.chunk_size * header_.chunk_size;
  }

  bool contains(const ChunkCoord& c) const;
  std::vector<ChunkCoord> chunk_coords() const;
  std::size_t size() const { return chunk_coords().size(); }
  std::vector<std::uint32_t> read_chunk(const ChunkCoord& c) const;
  void write_chunk(const ChunkCoord& c, std::span<const std::uint32_t> cells);
  void flush();

 private:
  MapStore(std::filesystem::path path, StoreHeader header) : path_(std::move(path)), header_(header) {}
  void load_index();

  std::filesystem::path path_;
  StoreHeader header_;
  std::map<ChunkCoord, std::uint64_t> on_disk_;
  std::map<ChunkCoord, std::vector<std::uint32_t>> dirty_;
};

}  // namespace featsense::tsdf
