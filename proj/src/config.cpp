#include "featsense/config.hpp"

#include "featsense/error.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <functional>
#include <sstream>
#include <utility>

namespace featsense {

namespace {

std::string trim(std::string s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

double to_double(const std::string& key, const std::string& v) {
  double out = 0.0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc{} || ptr != v.data() + v.size()) throw Error(Errc::Config, key + ": expected a number, got '" + v + "'");
  return out;
}

long long to_int(const std::string& key, const std::string& v) {
  long long out = 0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc{} || ptr != v.data() + v.size()) throw Error(Errc::Config, key + ": expected an integer, got '" + v + "'");
  return out;
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw Error(Errc::Config, key + ": expected true/false, got '" + v + "'");
}

std::string unquote(std::string v) {
  if (v.size() >= 2 && v.front() == '"' && v.back() == '"') return v.substr(1, v.size() - 2);
  return v;
}

template <class T>
T in_range(const std::string& key, long long v, long long lo, long long hi) {
  if (v < lo || v > hi) throw Error(Errc::Config, key + ": out of range");
  return static_cast<T>(v);
}

using Setter = std::function<void(PipelineConfig&, const std::string& key, const std::string& value,
                                  const std::filesystem::path& base)>;

std::vector<std::pair<std::string, Setter>> build_table() {
  std::vector<std::pair<std::string, Setter>> t;
  auto path = [&t](std::string k, std::filesystem::path PipelineConfig::*m) {
    t.emplace_back(std::move(k), [m](PipelineConfig& c, const std::string&, const std::string& v,
                                     const std::filesystem::path& base) {
      std::filesystem::path p = unquote(v);
      c.*m = (p.empty() || p.is_absolute() || base.empty()) ? p : base / p;
    });
  };
  auto num = [&t](std::string k, auto getter) {
    t.emplace_back(std::move(k), [getter](PipelineConfig& c, const std::string& key, const std::string& v,
                                          const std::filesystem::path&) { getter(c) = to_double(key, v); });
  };
  auto integer = [&t](std::string k, auto getter, long long lo, long long hi) {
    t.emplace_back(std::move(k), [getter, lo, hi](PipelineConfig& c, const std::string& key, const std::string& v,
                                                  const std::filesystem::path&) {
      auto& ref = getter(c);
      ref = in_range<std::remove_reference_t<decltype(ref)>>(key, to_int(key, v), lo, hi);
    });
  };
  auto boolean = [&t](std::string k, auto getter) {
    t.emplace_back(std::move(k), [getter](PipelineConfig& c, const std::string& key, const std::string& v,
                                          const std::filesystem::path&) { getter(c) = to_bool(key, v); });
  };
  constexpr long long kBig = 1LL << 40;

  path("dataset", &PipelineConfig::dataset);
  path("trajectory_out", &PipelineConfig::trajectory_out);
  path("map_out", &PipelineConfig::map_out);
  path("stats_out", &PipelineConfig::stats_out);
  integer("workers", [](PipelineConfig& c) -> auto& { return c.workers; }, 1, 1024);
  boolean("realtime", [](PipelineConfig& c) -> auto& { return c.realtime; });
  num("realtime_budget_ms", [](PipelineConfig& c) -> auto& { return c.realtime_budget_ms; });

  num("image.gauss_sigma", [](PipelineConfig& c) -> auto& { return c.image.gauss_sigma; });
  integer("image.gauss_ksize", [](PipelineConfig& c) -> auto& { return c.image.gauss_ksize; }, 1, 99);
  num("image.bilateral_sigma_space", [](PipelineConfig& c) -> auto& { return c.image.bilateral_sigma_space; });
  num("image.bilateral_sigma_range", [](PipelineConfig& c) -> auto& { return c.image.bilateral_sigma_range; });
  integer("image.bilateral_ksize", [](PipelineConfig& c) -> auto& { return c.image.bilateral_ksize; }, 1, 99);
  num("image.sobel_threshold", [](PipelineConfig& c) -> auto& { return c.image.sobel_threshold; });
  t.emplace_back("image.debug_dir", [](PipelineConfig& c, const std::string&, const std::string& v,
                                       const std::filesystem::path& base) {
    std::filesystem::path p = unquote(v);
    c.image.debug_dir = (p.empty() || p.is_absolute() || base.empty()) ? p : base / p;
  });

  integer("features.half_window", [](PipelineConfig& c) -> auto& { return c.features.half_window; }, 1, 64);
  integer("features.n_subregions", [](PipelineConfig& c) -> auto& { return c.features.n_subregions; }, 1, 1024);
  num("features.edge_min", [](PipelineConfig& c) -> auto& { return c.features.edge_min; });
  num("features.edge_max", [](PipelineConfig& c) -> auto& { return c.features.edge_max; });
  num("features.surf_max", [](PipelineConfig& c) -> auto& { return c.features.surf_max; });
  integer("features.max_edges_per_subregion", [](PipelineConfig& c) -> auto& { return c.features.max_edges_per_subregion; }, 0, 100000);
  integer("features.max_surf_per_subregion", [](PipelineConfig& c) -> auto& { return c.features.max_surf_per_subregion; }, 0, 100000);
  integer("features.suppress_radius", [](PipelineConfig& c) -> auto& { return c.features.suppress_radius; }, 0, 1024);
  num("features.parallel_angle_deg", [](PipelineConfig& c) -> auto& { return c.features.parallel_angle_deg; });
  num("features.occlusion_gap", [](PipelineConfig& c) -> auto& { return c.features.occlusion_gap; });
  boolean("features.intensity_fusion", [](PipelineConfig& c) -> auto& { return c.features.intensity_fusion; });

  integer("odometry.opt_steps", [](PipelineConfig& c) -> auto& { return c.odometry.opt_steps; }, 1, 1000);
  num("odometry.eig_ratio", [](PipelineConfig& c) -> auto& { return c.odometry.eig_ratio; });
  num("odometry.max_point_dist", [](PipelineConfig& c) -> auto& { return c.odometry.max_point_dist; });
  num("odometry.edge_half_len", [](PipelineConfig& c) -> auto& { return c.odometry.edge_half_len; });
  num("odometry.corr_max_dist", [](PipelineConfig& c) -> auto& { return c.odometry.corr_max_dist; });
  num("odometry.huber_delta", [](PipelineConfig& c) -> auto& { return c.odometry.huber_delta; });
  t.emplace_back("odometry.weight_mode", [](PipelineConfig& c, const std::string& key, const std::string& v,
                                            const std::filesystem::path&) {
    const std::string s = unquote(v);
    if (s == "curvature") c.odometry.weight_mode = odometry::WeightMode::Curvature;
    else if (s == "uniform") c.odometry.weight_mode = odometry::WeightMode::Uniform;
    else throw Error(Errc::Config, key + ": expected curvature|uniform");
  });
  integer("odometry.max_inner_iterations", [](PipelineConfig& c) -> auto& { return c.odometry.max_inner_iterations; }, 1, 1000);
  num("odometry.lambda_init", [](PipelineConfig& c) -> auto& { return c.odometry.lambda_init; });
  num("odometry.update_tolerance", [](PipelineConfig& c) -> auto& { return c.odometry.update_tolerance; });
  integer("odometry.min_correspondences", [](PipelineConfig& c) -> auto& { return c.odometry.min_correspondences; }, 1, kBig);
  num("odometry.leaf_edge", [](PipelineConfig& c) -> auto& { return c.odometry.leaf_edge; });
  num("odometry.leaf_surf", [](PipelineConfig& c) -> auto& { return c.odometry.leaf_surf; });
  num("odometry.local_radius", [](PipelineConfig& c) -> auto& { return c.odometry.local_radius; });
  num("odometry.bias_x", [](PipelineConfig& c) -> auto& { return c.odom_bias.x(); });
  num("odometry.bias_y", [](PipelineConfig& c) -> auto& { return c.odom_bias.y(); });
  num("odometry.bias_z", [](PipelineConfig& c) -> auto& { return c.odom_bias.z(); });

  boolean("refine.enabled", [](PipelineConfig& c) -> auto& { return c.refine_enabled; });
  num("refine.trigger_distance", [](PipelineConfig& c) -> auto& { return c.refine.trigger_distance; });
  num("refine.voxel_size", [](PipelineConfig& c) -> auto& { return c.refine.voxel_size; });
  integer("refine.knn", [](PipelineConfig& c) -> auto& { return c.refine.knn; }, 3, 1000);
  num("refine.scan_leaf", [](PipelineConfig& c) -> auto& { return c.refine.scan_leaf; });
  integer("refine.max_iterations", [](PipelineConfig& c) -> auto& { return c.refine.vgicp.max_iterations; }, 1, 1000);
  integer("refine.min_active", [](PipelineConfig& c) -> auto& { return c.refine.vgicp.min_active; }, 1, kBig);

  boolean("tsdf.enabled", [](PipelineConfig& c) -> auto& { return c.tsdf_enabled; });
  num("tsdf.voxel_size", [](PipelineConfig& c) -> auto& { return c.tsdf.voxel_size; });
  num("tsdf.tau", [](PipelineConfig& c) -> auto& { return c.tsdf.tau; });
  integer("tsdf.weight_max", [](PipelineConfig& c) -> auto& { return c.tsdf.weight_max; }, 1, 65535);
  integer("tsdf.weight_unit", [](PipelineConfig& c) -> auto& { return c.tsdf.weight_unit; }, 1, 65535);
  num("tsdf.behind_factor", [](PipelineConfig& c) -> auto& { return c.tsdf.behind_factor; });
  integer("tsdf.chunk_size", [](PipelineConfig& c) -> auto& { return c.tsdf.chunk_size; }, 1, 1024);
  num("tsdf.map_size_x", [](PipelineConfig& c) -> auto& { return c.map_size.x(); });
  num("tsdf.map_size_y", [](PipelineConfig& c) -> auto& { return c.map_size.y(); });
  num("tsdf.map_size_z", [](PipelineConfig& c) -> auto& { return c.map_size.z(); });

  num("eval.max_dt", [](PipelineConfig& c) -> auto& { return c.eval_max_dt; });
  return t;
}

const std::vector<std::pair<std::string, Setter>>& table() {
  static const auto t = build_table();
  return t;
}

void require(bool ok, const char* what) {
  if (!ok) throw Error(Errc::Config, what);
}

}  // namespace

void PipelineConfig::validate() const {
  require(workers >= 1, "workers must be >= 1");
  require(realtime_budget_ms > 0.0, "realtime_budget_ms must be > 0");
  require(image.gauss_sigma > 0.0 && image.gauss_ksize % 2 == 1, "image gaussian needs sigma > 0 and odd ksize");
  require(image.bilateral_sigma_space > 0.0 && image.bilateral_sigma_range > 0.0 && image.bilateral_ksize % 2 == 1,
          "image bilateral needs positive sigmas and odd ksize");
  require(image.sobel_threshold >= 0.0, "image.sobel_threshold must be >= 0");
  require(features.edge_min < features.edge_max, "features.edge_min must be < edge_max");
  require(features.surf_max > 0.0 && features.surf_max <= features.edge_min, "features.surf_max must be in (0, edge_min]");
  require(features.occlusion_gap > 0.0, "features.occlusion_gap must be > 0");
  require(odometry.eig_ratio > 1.0, "odometry.eig_ratio must be > 1");
  require(odometry.max_point_dist > 0.0 && odometry.corr_max_dist > 0.0 && odometry.edge_half_len > 0.0,
          "odometry distances must be > 0");
  require(odometry.huber_delta > 0.0 && odometry.lambda_init > 0.0, "odometry huber_delta/lambda_init must be > 0");
  require(odometry.leaf_edge > 0.0 && odometry.leaf_surf > 0.0 && odometry.local_radius > 0.0,
          "odometry map parameters must be > 0");
  require(refine.trigger_distance > 0.0 && refine.voxel_size > 0.0, "refine distances must be > 0");
  require(refine.scan_leaf >= 0.0, "refine.scan_leaf must be >= 0");
  require((map_size.array() > 0.0).all(), "tsdf map size must be > 0");
  require(eval_max_dt > 0.0, "eval.max_dt must be > 0");
  require(odom_bias.allFinite(), "odometry bias must be finite");
  try {
    tsdf.validate();
  } catch (const Error& e) {
    throw Error(Errc::Config, e.what());
  }
}

PipelineConfig parse_config(const std::string& text, const std::filesystem::path& base_dir) {
  PipelineConfig cfg;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw Error(Errc::Config, "line " + std::to_string(lineno) + ": expected key = value");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    const auto& t = table();
    const auto it = std::find_if(t.begin(), t.end(), [&](const auto& e) { return e.first == key; });
    if (it == t.end()) throw Error(Errc::Config, "line " + std::to_string(lineno) + ": unknown key '" + key + "'");
    it->second(cfg, key, value, base_dir);
  }
  cfg.odometry.edge_min = cfg.features.edge_min;
  cfg.odometry.surf_max = cfg.features.surf_max;
  cfg.validate();
  return cfg;
}

PipelineConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::Config, "cannot open config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), path.parent_path());
}

std::vector<std::string> config_keys() {
  std::vector<std::string> out;
  for (const auto& [k, _] : table()) out.push_back(k);
  return out;
}

}  // namespace featsense
