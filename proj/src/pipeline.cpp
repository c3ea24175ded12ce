#include "featsense/pipeline.hpp"

#include "featsense/error.hpp"
#include "featsense/features.hpp"
#include "featsense/image.hpp"
#include "featsense/map_store.hpp"
#include "featsense/odometry.hpp"
#include "featsense/refine.hpp"
#include "featsense/synth.hpp"
#include "featsense/tsdf.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <thread>

namespace featsense {

namespace {

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

std::vector<std::filesystem::path> frames_of(const std::filesystem::path& dataset) {
  if (!std::filesystem::is_directory(dataset)) throw Error(Errc::Io, "dataset not found: " + dataset.string());
  return synth::dataset_frames(dataset);
}

bool outside_center(const tsdf::GridGeometry& g, const Vec3& p) {
  return ((p - g.center()).cwiseAbs().array() > 0.5 * g.chunk_extent()).any();
}

}  // namespace

void StageTiming::add(double ms) {
  if (count == 0) {
    min_ms = max_ms = ms;
  } else {
    min_ms = std::min(min_ms, ms);
    max_ms = std::max(max_ms, ms);
  }
  total_ms += ms;
  ++count;
}

RunResult run(const PipelineConfig& cfg) {
  cfg.validate();
  const auto frames = frames_of(cfg.dataset);
  RunResult result;
  RunStats& stats = result.stats;

  std::optional<tsdf::MapStore> store;
  if (!cfg.map_out.empty()) store = tsdf::MapStore::create(cfg.map_out, cfg.tsdf.store_header());
  std::optional<tsdf::TsdfVolume> volume;
  std::optional<tsdf::CandidateVolume> candidate;

  odometry::FeatureMap fmap;
  std::vector<Pose> odom;  // odometry frame
  Pose correction;         // odometry -> global
  refine::RefineState refine_state(refine::RefineParams{cfg.refine.trigger_distance, cfg.refine.voxel_size,
                                                        cfg.refine.knn, cfg.refine.scan_leaf, cfg.realtime,
                                                        cfg.refine.vgicp});
  refine::AsyncRefiner async;

  auto apply_correction = [&](const std::optional<Pose>& c) {
    if (!c) return;
    correction = *c * correction;
    correction.normalize();
    ++stats.refinements;
  };

  for (const auto& path : frames) {
    const auto t_frame = Clock::now();
    const StructuredScan scan = read_scan(path);

    auto t0 = Clock::now();
    const image::EdgeMask mask = image::intensity_edge_mask(scan, cfg.image);
    const features::CurvatureGrid curv = features::compute_curvature(scan, cfg.features.half_window);
    const features::FeatureCloud feats = features::classify_features(scan, curv, mask, cfg.features);
    stats.stages["preprocess"].add(ms_since(t0));

    t0 = Clock::now();
    Pose pose = Pose::identity(scan.timestamp);
    if (!fmap.empty()) {
      Pose predicted = odom.size() >= 2 ? odometry::predict_motion(odom.back(), odom[odom.size() - 2]) : odom.back();
      predicted.timestamp = scan.timestamp;
      try {
        pose = odometry::register_scan(feats, fmap, predicted, cfg.odometry);
      } catch (const Error& e) {
        if (e.code() != Errc::Degenerate && e.code() != Errc::MapEmpty) throw;
        pose = predicted;
        ++stats.degenerate_frames;
      }
      pose.translation += cfg.odom_bias;
    }
    pose.timestamp = scan.timestamp;
    odom.push_back(pose);
    fmap = odometry::update_feature_maps(fmap, feats, pose, cfg.odometry);
    stats.stages["registration"].add(ms_since(t0));

    if (cfg.refine_enabled) {
      t0 = Clock::now();
      refine_state.push(valid_points(scan), pose);
      const Pose global_now = correction * pose;
      if (cfg.realtime) {
        apply_correction(async.poll());
        async.try_start(refine_state, global_now);
      } else {
        apply_correction(refine::maybe_refine(refine_state, global_now));
      }
      stats.stages["refine"].add(ms_since(t0));
    }

    Pose global = correction * pose;
    global.timestamp = scan.timestamp;
    result.trajectory.poses.push_back(global);

    if (cfg.tsdf_enabled) {
      t0 = Clock::now();
      if (!volume) {
        const auto g = tsdf::GridGeometry::centered(global.translation, cfg.map_size, cfg.tsdf.voxel_size,
                                                    cfg.tsdf.chunk_size);
        volume.emplace(g, cfg.tsdf);
        candidate.emplace(g);
      } else if (store && outside_center(volume->geometry(), global.translation)) {
        tsdf::shift_local_map(*volume, global.translation, *store);
        candidate->set_geometry(volume->geometry());
        ++stats.map_shifts;
      }
      candidate->reset();
      tsdf::generate_candidate(scan, global, cfg.tsdf, *candidate, cfg.workers);
      stats.stages["tsdf_generate"].add(ms_since(t0));
      t0 = Clock::now();
      tsdf::integrate(*volume, *candidate);
      stats.stages["tsdf_integrate"].add(ms_since(t0));
    }

    const double frame_ms = ms_since(t_frame);
    stats.stages["total"].add(frame_ms);
    if (cfg.realtime && frame_ms > cfg.realtime_budget_ms) ++stats.budget_overruns;
    ++stats.frames;
  }

  if (cfg.realtime) apply_correction(async.wait());

  if (!cfg.trajectory_out.empty()) write_trajectory(result.trajectory, cfg.trajectory_out);
  if (store) {
    if (volume) tsdf::persist_volume(*volume, *store);
    store->flush();
  }
  if (!cfg.stats_out.empty()) {
    std::ofstream out(cfg.stats_out, std::ios::trunc);
    if (!out) throw Error(Errc::Io, "cannot write " + cfg.stats_out.string());
    out << format_stats(stats);
  }
  return result;
}

std::string format_stats(const RunStats& stats) {
  std::string out;
  char buf[160];
  std::snprintf(buf, sizeof(buf), "frames=%zu degenerate=%zu refinements=%zu map_shifts=%zu budget_overruns=%zu\n",
                stats.frames, stats.degenerate_frames, stats.refinements, stats.map_shifts, stats.budget_overruns);
  out += buf;
  std::snprintf(buf, sizeof(buf), "%-16s %10s %10s %10s\n", "stage [ms]", "min", "max", "avg");
  out += buf;
  for (const char* name : {"preprocess", "registration", "refine", "tsdf_generate", "tsdf_integrate", "total"}) {
    const auto it = stats.stages.find(name);
    if (it == stats.stages.end()) continue;
    std::snprintf(buf, sizeof(buf), "%-16s %10.3f %10.3f %10.3f\n", name, it->second.min_ms, it->second.max_ms,
                  it->second.avg_ms());
    out += buf;
  }
  return out;
}

BenchReport bench(const PipelineConfig& cfg, const std::vector<std::size_t>& threads) {
  cfg.validate();
  BenchReport report;
  report.hardware_threads = std::thread::hardware_concurrency();
  const auto frames = frames_of(cfg.dataset);
  if (frames.empty() || threads.empty()) return report;

  std::vector<StructuredScan> scans;
  scans.reserve(frames.size());
  for (const auto& f : frames) scans.push_back(read_scan(f));
  std::vector<Pose> poses(scans.size(), Pose::identity());
  const auto gt_path = cfg.dataset / "groundtruth.txt";
  if (std::filesystem::exists(gt_path)) {
    const Trajectory gt = read_trajectory(gt_path);
    for (std::size_t i = 0; i < poses.size() && i < gt.size(); ++i) poses[i] = gt.poses[i];
  }

  const auto geom = tsdf::GridGeometry::centered(poses.front().translation, cfg.map_size, cfg.tsdf.voxel_size,
                                                 cfg.tsdf.chunk_size);
  std::vector<std::uint32_t> baseline;
  for (std::size_t n : threads) {
    if (n == 0) throw Error(Errc::Config, "thread count must be >= 1");
    tsdf::TsdfVolume volume(geom, cfg.tsdf);
    tsdf::CandidateVolume candidate(geom);
    BenchRow row;
    row.threads = n;
    for (std::size_t k = 0; k < scans.size(); ++k) {
      candidate.reset();
      const auto t0 = Clock::now();
      tsdf::generate_candidate(scans[k], poses[k], cfg.tsdf, candidate, n);
      tsdf::integrate(volume, candidate);
      row.timing.add(ms_since(t0));
    }
    if (baseline.empty()) {
      baseline = volume.words();
    } else if (volume.words() != baseline) {
      report.identical = false;
    }
    report.rows.push_back(row);
  }
  const double base_avg = report.rows.front().timing.avg_ms();
  for (BenchRow& r : report.rows) r.speedup = r.timing.avg_ms() > 0.0 ? base_avg / r.timing.avg_ms() : 0.0;
  return report;
}

std::string format_bench(const BenchReport& report) {
  std::string out;
  char buf[160];
  std::snprintf(buf, sizeof(buf), "%8s %10s %10s %10s %8s\n", "threads", "min [ms]", "max [ms]", "avg [ms]",
                "speedup");
  out += buf;
  for (const BenchRow& r : report.rows) {
    std::snprintf(buf, sizeof(buf), "%8zu %10.3f %10.3f %10.3f %8.2f\n", r.threads, r.timing.min_ms, r.timing.max_ms,
                  r.timing.avg_ms(), r.speedup);
    out += buf;
  }
  std::snprintf(buf, sizeof(buf), "identical_volumes=%s hardware_threads=%u\n", report.identical ? "yes" : "no",
                report.hardware_threads);
  out += buf;
  return out;
}

}  // namespace featsense
