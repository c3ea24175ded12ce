#include "featsense/tsdf.hpp"

#include "featsense/error.hpp"
#include "featsense/parallel.hpp"
#include "featsense/simd/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <numbers>

namespace featsense::tsdf {

namespace {

std::int32_t floor_div(std::int64_t a, std::int64_t b) {
  std::int64_t q = a / b;
  if ((a % b != 0) && ((a < 0) != (b < 0))) --q;
  return static_cast<std::int32_t>(q);
}

bool any_observed(std::span<const std::uint32_t> cells) {
  return std::any_of(cells.begin(), cells.end(), [](std::uint32_t w) { return (w & 0xFFFFu) != 0; });
}

ChunkCoord to_coord(const Vec3i& v) { return {v.x(), v.y(), v.z()}; }

}  // namespace

int TsdfParams::tau_mm() const { return static_cast<int>(std::lround(tau * 1000.0)); }

void TsdfParams::validate() const {
  if (!(voxel_size > 0.0)) throw Error(Errc::Config, "tsdf voxel_size must be > 0");
  if (!(tau >= 2.0 * voxel_size)) throw Error(Errc::Config, "tsdf tau must be >= 2 * voxel_size");
  if (tau_mm() > std::numeric_limits<std::int16_t>::max()) throw Error(Errc::Config, "tsdf tau does not fit i16 mm");
  if (weight_max == 0 || weight_unit == 0) throw Error(Errc::Config, "tsdf weights must be > 0");
  if (!(behind_factor > 0.0)) throw Error(Errc::Config, "tsdf behind_factor must be > 0");
  if (chunk_size <= 0) throw Error(Errc::Config, "tsdf chunk_size must be > 0");
}

StoreHeader TsdfParams::store_header() const {
  return {voxel_size, tau, static_cast<std::uint32_t>(chunk_size), weight_max};
}

GridGeometry GridGeometry::centered(const Vec3& center, const Vec3& size_m, double voxel_size, int chunk_size) {
  GridGeometry g;
  g.voxel_size = voxel_size;
  g.chunk_size = chunk_size;
  const double ext = g.chunk_extent();
  for (int a = 0; a < 3; ++a) {
    g.dims_chunks[a] = std::max(1, static_cast<int>(std::ceil(size_m[a] / ext - 1e-9)));
    g.origin_chunk[a] = static_cast<int>(std::lround(center[a] / ext - 0.5 * g.dims_chunks[a]));
  }
  return g;
}

std::size_t GridGeometry::cell_count() const {
  const Vec3i d = dims();
  return static_cast<std::size_t>(d.x()) * d.y() * d.z();
}

bool GridGeometry::contains(const Vec3i& v) const {
  const Vec3i d = dims();
  return v.x() >= 0 && v.y() >= 0 && v.z() >= 0 && v.x() < d.x() && v.y() < d.y() && v.z() < d.z();
}

std::size_t GridGeometry::index(const Vec3i& v) const {
  const Vec3i d = dims();
  return (static_cast<std::size_t>(v.z()) * d.y() + v.y()) * d.x() + v.x();
}

Vec3i GridGeometry::voxel_of(const Vec3& world) const {
  const Vec3 rel = (world - origin()) / voxel_size;
  return {static_cast<int>(std::floor(rel.x())), static_cast<int>(std::floor(rel.y())),
          static_cast<int>(std::floor(rel.z()))};
}

Vec3 GridGeometry::voxel_center(const Vec3i& v) const {
  return origin() + (v.cast<double>() + Vec3::Constant(0.5)) * voxel_size;
}

bool GridGeometry::operator==(const GridGeometry& o) const {
  return origin_chunk == o.origin_chunk && dims_chunks == o.dims_chunks && voxel_size == o.voxel_size &&
         chunk_size == o.chunk_size;
}

TsdfVolume::TsdfVolume(GridGeometry geometry, TsdfParams params)
    : geometry_(geometry), params_(params), cells_(geometry.cell_count(), 0u) {
  params_.validate();
  if (geometry_.chunk_size != params_.chunk_size || geometry_.voxel_size != params_.voxel_size)
    throw Error(Errc::GeometryMismatch, "grid geometry disagrees with tsdf params");
}

std::size_t TsdfVolume::observed_count() const {
  return static_cast<std::size_t>(
      std::count_if(cells_.begin(), cells_.end(), [](std::uint32_t w) { return (w & 0xFFFFu) != 0; }));
}

std::vector<std::uint32_t> TsdfVolume::extract_chunk(const Vec3i& local_chunk) const {
  const int cs = geometry_.chunk_size;
  std::vector<std::uint32_t> out(static_cast<std::size_t>(cs) * cs * cs);
  const Vec3i base = local_chunk * cs;
  std::size_t o = 0;
  for (int z = 0; z < cs; ++z)
    for (int y = 0; y < cs; ++y) {
      const std::size_t row = geometry_.index(base + Vec3i(0, y, z));
      std::copy_n(cells_.begin() + static_cast<std::ptrdiff_t>(row), cs, out.begin() + static_cast<std::ptrdiff_t>(o));
      o += static_cast<std::size_t>(cs);
    }
  return out;
}

void TsdfVolume::insert_chunk(const Vec3i& local_chunk, std::span<const std::uint32_t> cells) {
  const int cs = geometry_.chunk_size;
  if (cells.size() != static_cast<std::size_t>(cs) * cs * cs)
    throw Error(Errc::GeometryMismatch, "chunk has wrong cell count");
  const Vec3i base = local_chunk * cs;
  std::size_t o = 0;
  for (int z = 0; z < cs; ++z)
    for (int y = 0; y < cs; ++y) {
      const std::size_t row = geometry_.index(base + Vec3i(0, y, z));
      std::copy_n(cells.begin() + static_cast<std::ptrdiff_t>(o), cs, cells_.begin() + static_cast<std::ptrdiff_t>(row));
      o += static_cast<std::size_t>(cs);
    }
}

CandidateVolume::CandidateVolume(GridGeometry geometry)
    : geometry_(geometry), cells_(geometry.cell_count(), 0u) {
  touched_lo_ = geometry_.dims();
  touched_hi_ = Vec3i::Constant(-1);
}

void CandidateVolume::mark_touched(const Vec3i& lo, const Vec3i& hi) {
  touched_lo_ = touched_lo_.cwiseMin(lo);
  touched_hi_ = touched_hi_.cwiseMax(hi);
}

void CandidateVolume::reset() {
  if (touched()) {
    const int n = touched_hi_.x() - touched_lo_.x() + 1;
    for (int z = touched_lo_.z(); z <= touched_hi_.z(); ++z)
      for (int y = touched_lo_.y(); y <= touched_hi_.y(); ++y)
        std::fill_n(cells_.begin() + static_cast<std::ptrdiff_t>(geometry_.index({touched_lo_.x(), y, z})), n, 0u);
  }
  touched_lo_ = geometry_.dims();
  touched_hi_ = Vec3i::Constant(-1);
}

void CandidateVolume::set_geometry(const GridGeometry& g) {
  if (g.dims_chunks != geometry_.dims_chunks || g.chunk_size != geometry_.chunk_size) {
    geometry_ = g;
    cells_.assign(g.cell_count(), 0u);
    touched_lo_ = geometry_.dims();
    touched_hi_ = Vec3i::Constant(-1);
    return;
  }
  reset();
  geometry_ = g;
}

Vec3 interpolation_vector(const Vec3& d, const Vec3& up) {
  const Vec3 v = d.cross(d.cross(up));
  const double n = v.norm();
  if (!(n > 1e-12 * d.squaredNorm() * up.norm()))
    throw Error(Errc::DegenerateDirection, "ray direction parallel to scan-line normal");
  return v / n;
}

double vertical_extent(double len, double vfov_deg, int hlines) {
  const double delta_z = std::tan((vfov_deg / hlines) * std::numbers::pi / 180.0);
  return delta_z * len;
}

CandidateStats generate_candidate(const StructuredScan& scan, const Pose& pose, const TsdfParams& params,
                                  CandidateVolume& out, std::size_t workers) {
  const GridGeometry& geom = out.geometry();
  if (geom.voxel_size != params.voxel_size) throw Error(Errc::GeometryMismatch, "candidate voxel size");
  std::vector<std::size_t> valid;
  valid.reserve(scan.size());
  for (std::size_t i = 0; i < scan.size(); ++i)
    if (scan.valid[i]) valid.push_back(i);

  const double vs = params.voxel_size;
  const double tau = params.tau;
  const int tau_mm = params.tau_mm();
  const double behind = tau * params.behind_factor;
  const int steps_front = static_cast<int>(std::floor(tau / vs + 1e-9));
  const int steps_behind = static_cast<int>(std::floor(behind / vs + 1e-9));
  const Vec3 sensor = pose.translation;
  const Vec3 up = pose.rotation * Vec3::UnitZ();
  const Vec3 origin = geom.origin();
  const Vec3i dims = geom.dims();
  const int hlines = static_cast<int>(scan.rows);
  std::uint32_t* cells = out.words().data();

  const std::size_t n_workers = std::max<std::size_t>(1, workers);
  std::vector<CandidateStats> stats(n_workers);
  std::vector<Vec3i> lo(n_workers, dims), hi(n_workers, Vec3i::Constant(-1));

  parallel_for(valid.size(), n_workers, [&](std::size_t w, std::size_t begin, std::size_t end) {
    CandidateStats& st = stats[w];
    Vec3i& wlo = lo[w];
    Vec3i& whi = hi[w];
    auto write = [&](const Vec3& pos, std::uint32_t word) {
      ++st.samples;
      const Vec3 rel = (pos - origin) / vs;
      const Vec3i v(static_cast<int>(std::floor(rel.x())), static_cast<int>(std::floor(rel.y())),
                    static_cast<int>(std::floor(rel.z())));
      if (v.x() < 0 || v.y() < 0 || v.z() < 0 || v.x() >= dims.x() || v.y() >= dims.y() || v.z() >= dims.z()) {
        ++st.samples_out_of_volume;
        return;
      }
      min_combine(cells[(static_cast<std::size_t>(v.z()) * dims.y() + v.y()) * dims.x() + v.x()], word);
      wlo = wlo.cwiseMin(v);
      whi = whi.cwiseMax(v);
    };

    for (std::size_t i = begin; i < end; ++i) {
      const Vec3 x = pose.apply(scan.points[valid[i]]);
      ++st.points;
      if (!geom.contains(geom.voxel_of(x))) {
        ++st.points_out_of_volume;
        continue;
      }
      const Vec3 ray = x - sensor;
      const double range = ray.norm();
      const Vec3 d = ray / range;
      Vec3 interp = Vec3::Zero();
      bool can_fill = true;
      try {
        interp = interpolation_vector(d, up);
      } catch (const Error&) {
        can_fill = false;
      }
      for (int k = -steps_front; k <= steps_behind; ++k) {
        const double l = range + k * vs;
        if (l < 0.0) continue;
        const double sdf = range - l;
        int weight = params.weight_unit;
        if (sdf < 0.0) weight = static_cast<int>(std::lround(params.weight_unit * (1.0 + sdf / behind)));
        if (weight <= 0) continue;
        const int value = std::clamp(static_cast<int>(std::lround(sdf * 1000.0)), -tau_mm, tau_mm);
        const std::uint32_t word =
            pack({static_cast<std::int16_t>(value), static_cast<std::uint16_t>(weight)});
        const Vec3 pos = sensor + l * d;
        write(pos, word);
        if (!can_fill) continue;
        const double h = vertical_extent(l, scan.vfov_deg, hlines);
        const int n_fill = h > 0.0 ? static_cast<int>(std::ceil(h / vs)) : 0;
        for (int j = 1; j <= n_fill; ++j) {
          const Vec3 off = std::min(j * vs, h) * interp;
          write(pos + off, word);
          write(pos - off, word);
        }
      }
    }
  });

  CandidateStats total;
  for (std::size_t w = 0; w < n_workers; ++w) {
    total.points += stats[w].points;
    total.points_out_of_volume += stats[w].points_out_of_volume;
    total.samples += stats[w].samples;
    total.samples_out_of_volume += stats[w].samples_out_of_volume;
    if ((hi[w].array() >= lo[w].array()).all()) out.mark_touched(lo[w], hi[w]);
  }
  return total;
}

void integrate(TsdfVolume& global, const CandidateVolume& candidate) {
  if (!(global.geometry() == candidate.geometry()))
    throw Error(Errc::GeometryMismatch, "candidate and global volumes differ in geometry");
  if (!candidate.touched()) return;
  const auto& kern = simd::active_kernels();
  const GridGeometry& g = global.geometry();
  const Vec3i& lo = candidate.touched_lo();
  const Vec3i& hi = candidate.touched_hi();
  const std::size_t n = static_cast<std::size_t>(hi.x() - lo.x() + 1);
  std::uint32_t* dst = global.words().data();
  const std::uint32_t* src = candidate.words().data();
  for (int z = lo.z(); z <= hi.z(); ++z)
    for (int y = lo.y(); y <= hi.y(); ++y) {
      const std::size_t row = g.index({lo.x(), y, z});
      kern.integrate(dst + row, src + row, n, global.params().weight_max);
    }
}

void shift_local_map(TsdfVolume& volume, const Vec3& new_center, MapStore& store) {
  if (!(store.header() == volume.params().store_header()))
    throw Error(Errc::GeometryMismatch, "map store header differs from volume parameters");
  const GridGeometry old = volume.geometry();
  const Vec3 delta_m = (new_center - old.center()) / old.chunk_extent();
  const Vec3i delta(static_cast<int>(std::lround(delta_m.x())), static_cast<int>(std::lround(delta_m.y())),
                    static_cast<int>(std::lround(delta_m.z())));
  if (delta == Vec3i::Zero()) return;

  const Vec3i n = old.dims_chunks;
  auto inside = [&](const Vec3i& local) { return (local.array() >= 0).all() && (local.array() < n.array()).all(); };

  std::map<ChunkCoord, std::vector<std::uint32_t>> kept;
  for (int z = 0; z < n.z(); ++z)
    for (int y = 0; y < n.y(); ++y)
      for (int x = 0; x < n.x(); ++x) {
        const Vec3i local(x, y, z);
        const Vec3i global = old.origin_chunk + local;
        std::vector<std::uint32_t> data = volume.extract_chunk(local);
        if (inside(global - (old.origin_chunk + delta))) {
          kept.emplace(to_coord(global), std::move(data));
        } else if (any_observed(data) || store.contains(to_coord(global))) {
          store.write_chunk(to_coord(global), data);
        }
      }

  volume.set_origin_chunk(old.origin_chunk + delta);
  std::fill(volume.words().begin(), volume.words().end(), 0u);
  for (int z = 0; z < n.z(); ++z)
    for (int y = 0; y < n.y(); ++y)
      for (int x = 0; x < n.x(); ++x) {
        const Vec3i local(x, y, z);
        const ChunkCoord c = to_coord(volume.geometry().origin_chunk + local);
        if (auto it = kept.find(c); it != kept.end()) {
          volume.insert_chunk(local, it->second);
        } else if (store.contains(c)) {
          volume.insert_chunk(local, store.read_chunk(c));
        }
      }
}

void persist_volume(const TsdfVolume& volume, MapStore& store) {
  if (!(store.header() == volume.params().store_header()))
    throw Error(Errc::GeometryMismatch, "map store header differs from volume parameters");
  const GridGeometry& g = volume.geometry();
  for (int z = 0; z < g.dims_chunks.z(); ++z)
    for (int y = 0; y < g.dims_chunks.y(); ++y)
      for (int x = 0; x < g.dims_chunks.x(); ++x) {
        const Vec3i local(x, y, z);
        const ChunkCoord c = to_coord(g.origin_chunk + local);
        std::vector<std::uint32_t> data = volume.extract_chunk(local);
        if (any_observed(data) || store.contains(c)) store.write_chunk(c, data);
      }
}

namespace {

// Scans every observed cell against its +x/+y/+z neighbor. `lookup` maps a
// global voxel coordinate to its packed word (0 when absent).
template <class Lookup, class Visit>
void zero_crossings_over(double voxel_size, Lookup&& lookup, Visit&& visit_cell, std::vector<Vec3>& out) {
  visit_cell([&](const Vec3i& gv, std::uint32_t word) {
    const VoxelCell a = unpack(word);
    if (a.weight == 0) return;
    for (int axis = 0; axis < 3; ++axis) {
      Vec3i nb = gv;
      nb[axis] += 1;
      const VoxelCell b = unpack(lookup(nb));
      if (b.weight == 0) continue;
      if ((a.value >= 0) == (b.value >= 0)) continue;
      const double t = static_cast<double>(a.value) / (static_cast<double>(a.value) - b.value);
      Vec3 p = (gv.cast<double>() + Vec3::Constant(0.5)) * voxel_size;
      p[axis] += t * voxel_size;
      out.push_back(p);
    }
  });
}

}  // namespace

std::vector<Vec3> export_zero_crossings(const TsdfVolume& volume) {
  const GridGeometry& g = volume.geometry();
  const Vec3i base = g.origin_chunk * g.chunk_size;
  std::vector<Vec3> out;
  auto lookup = [&](const Vec3i& gv) -> std::uint32_t {
    const Vec3i local = gv - base;
    return g.contains(local) ? volume.words()[g.index(local)] : 0u;
  };
  auto visit = [&](auto&& fn) {
    const Vec3i d = g.dims();
    for (int z = 0; z < d.z(); ++z)
      for (int y = 0; y < d.y(); ++y)
        for (int x = 0; x < d.x(); ++x) {
          const std::uint32_t w = volume.words()[g.index({x, y, z})];
          if (w & 0xFFFFu) fn(base + Vec3i(x, y, z), w);
        }
  };
  zero_crossings_over(g.voxel_size, lookup, visit, out);
  return out;
}

std::vector<Vec3> export_zero_crossings(const MapStore& store) {
  const int cs = static_cast<int>(store.header().chunk_size);
  std::map<ChunkCoord, std::vector<std::uint32_t>> chunks;
  for (const ChunkCoord& c : store.chunk_coords()) chunks.emplace(c, store.read_chunk(c));
  auto local_index = [cs](int x, int y, int z) {
    return (static_cast<std::size_t>(z) * cs + y) * cs + x;
  };
  auto lookup = [&](const Vec3i& gv) -> std::uint32_t {
    const ChunkCoord c{floor_div(gv.x(), cs), floor_div(gv.y(), cs), floor_div(gv.z(), cs)};
    const auto it = chunks.find(c);
    if (it == chunks.end()) return 0u;
    return it->second[local_index(gv.x() - c.x * cs, gv.y() - c.y * cs, gv.z() - c.z * cs)];
  };
  auto visit = [&](auto&& fn) {
    for (const auto& [c, data] : chunks)
      for (int z = 0; z < cs; ++z)
        for (int y = 0; y < cs; ++y)
          for (int x = 0; x < cs; ++x) {
            const std::uint32_t w = data[local_index(x, y, z)];
            if (w & 0xFFFFu) fn(Vec3i(c.x * cs + x, c.y * cs + y, c.z * cs + z), w);
          }
  };
  std::vector<Vec3> out;
  zero_crossings_over(store.header().voxel_size, lookup, visit, out);
  return out;
}

void write_ply(const std::vector<Vec3>& points, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error(Errc::Io, "cannot write " + path.string());
  out << "ply\nformat ascii 1.0\nelement vertex " << points.size()
      << "\nproperty float x\nproperty float y\nproperty float z\nend_header\n";
  char buf[128];
  for (const Vec3& p : points) {
    std::snprintf(buf, sizeof(buf), "%.6f %.6f %.6f\n", p.x(), p.y(), p.z());
    out << buf;
  }
  if (!out) throw Error(Errc::Io, "short write to " + path.string());
}

}  // namespace featsense::tsdf
