#include "featsense/map_store.hpp"

#include "featsense/error.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <set>

namespace featsense::tsdf {

namespace {

static_assert(std::endian::native == std::endian::little, "map store assumes a little-endian host");

constexpr std::array<char, 4> kMagic{'F', 'T', 'S', 'D'};
constexpr std::size_t kHeaderBytes = 4 + 8 + 8 + 4 + 4 + 8;
constexpr std::size_t kEntryBytes = 4 * 3 + 8;

template <class T>
void put(std::ostream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T get(std::istream& in) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  return v;
}

}  // namespace

MapStore MapStore::create(const std::filesystem::path& path, const StoreHeader& header) {
  if (header.chunk_size == 0 || !(header.voxel_size > 0.0))
    throw Error(Errc::StoreIo, "invalid store header");
  MapStore store(path, header);
  store.flush();
  return store;
}

MapStore MapStore::open(const std::filesystem::path& path) {
  MapStore store(path, {});
  store.load_index();
  return store;
}

void MapStore::load_index() {
  std::ifstream in(path_, std::ios::binary);
  if (!in) throw Error(Errc::StoreIo, "cannot open " + path_.string());
  in.seekg(0, std::ios::end);
  const auto file_size = static_cast<std::uint64_t>(in.tellg());
  in.seekg(0);
  std::array<char, 4> magic{};
  in.read(magic.data(), 4);
  if (!in || magic != kMagic) throw Error(Errc::StoreIo, path_.string() + ": bad magic");
  StoreHeader h;
  h.voxel_size = get<double>(in);
  h.tau = get<double>(in);
  h.chunk_size = get<std::uint32_t>(in);
  h.weight_max = get<std::uint32_t>(in);
  const auto n = get<std::uint64_t>(in);
  if (!in || h.chunk_size == 0 || h.chunk_size > 1024 || !(h.voxel_size > 0.0))
    throw Error(Errc::StoreIo, path_.string() + ": corrupt header");
  header_ = h;
  const std::uint64_t chunk_bytes = chunk_cells() * 4;
  if (n > (file_size - kHeaderBytes) / kEntryBytes) throw Error(Errc::StoreIo, path_.string() + ": corrupt index");
  on_disk_.clear();
  for (std::uint64_t i = 0; i < n; ++i) {
    ChunkCoord c;
    c.x = get<std::int32_t>(in);
    c.y = get<std::int32_t>(in);
    c.z = get<std::int32_t>(in);
    const auto offset = get<std::uint64_t>(in);
    if (!in || offset + chunk_bytes > file_size) throw Error(Errc::StoreIo, path_.string() + ": corrupt index");
    on_disk_[c] = offset;
  }
}

bool MapStore::contains(const ChunkCoord& c) const { return dirty_.count(c) != 0 || on_disk_.count(c) != 0; }

std::vector<ChunkCoord> MapStore::chunk_coords() const {
  std::set<ChunkCoord> all;
  for (const auto& [c, off] : on_disk_) all.insert(c);
  for (const auto& [c, data] : dirty_) all.insert(c);
  return {all.begin(), all.end()};
}

std::vector<std::uint32_t> MapStore::read_chunk(const ChunkCoord& c) const {
  if (auto it = dirty_.find(c); it != dirty_.end()) return it->second;
  const auto it = on_disk_.find(c);
  if (it == on_disk_.end()) throw Error(Errc::StoreIo, "chunk not in store");
  std::ifstream in(path_, std::ios::binary);
  if (!in) throw Error(Errc::StoreIo, "cannot open " + path_.string());
  in.seekg(static_cast<std::streamoff>(it->second));
  std::vector<std::uint32_t> cells(chunk_cells());
  in.read(reinterpret_cast<char*>(cells.data()), static_cast<std::streamsize>(cells.size() * 4));
  if (!in) throw Error(Errc::StoreIo, path_.string() + ": truncated chunk");
  return cells;
}

void MapStore::write_chunk(const ChunkCoord& c, std::span<const std::uint32_t> cells) {
  if (cells.size() != chunk_cells()) throw Error(Errc::StoreIo, "chunk has wrong cell count");
  dirty_[c].assign(cells.begin(), cells.end());
}

void MapStore::flush() {
  const std::vector<ChunkCoord> coords = chunk_coords();
  const std::filesystem::path tmp = path_.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(Errc::StoreIo, "cannot write " + tmp.string());
    out.write(kMagic.data(), 4);
    put<double>(out, header_.voxel_size);
    put<double>(out, header_.tau);
    put<std::uint32_t>(out, header_.chunk_size);
    put<std::uint32_t>(out, header_.weight_max);
    put<std::uint64_t>(out, coords.size());
    const std::uint64_t chunk_bytes = chunk_cells() * 4;
    std::uint64_t offset = kHeaderBytes + coords.size() * kEntryBytes;
    for (const ChunkCoord& c : coords) {
      put<std::int32_t>(out, c.x);
      put<std::int32_t>(out, c.y);
      put<std::int32_t>(out, c.z);
      put<std::uint64_t>(out, offset);
      offset += chunk_bytes;
    }
    for (const ChunkCoord& c : coords) {
      const std::vector<std::uint32_t> cells = read_chunk(c);
      out.write(reinterpret_cast<const char*>(cells.data()), static_cast<std::streamsize>(chunk_bytes));
    }
    if (!out) throw Error(Errc::StoreIo, "short write to " + tmp.string());
  }
  std::filesystem::rename(tmp, path_);
  dirty_.clear();
  load_index();
}

}  // namespace featsense::tsdf
