#pragma once

#include "featsense/config.hpp"
#include "featsense/types.hpp"

#include <map>
#include <string>
#include <vector>

namespace featsense {

struct StageTiming {
  std::size_t count = 0;
  double min_ms = 0.0;
  double max_ms = 0.0;
  double total_ms = 0.0;

  void add(double ms);
  double avg_ms() const { return count ? total_ms / static_cast<double>(count) : 0.0; }
};

struct RunStats {
  std::size_t frames = 0;
  std::size_t degenerate_frames = 0;
  std::size_t refinements = 0;
  std::size_t map_shifts = 0;
  std::size_t budget_overruns = 0;
  std::map<std::string, StageTiming> stages;
};

struct RunResult {
  Trajectory trajectory;
  RunStats stats;
};

/// Processes every frame of cfg.dataset and writes the trajectory, the map
/// store and (if configured) the stats file.
RunResult run(const PipelineConfig& cfg);

/// Table II/III-style per-stage timing table.
std::string format_stats(const RunStats& stats);

struct BenchRow {
  std::size_t threads = 0;
  StageTiming timing;  // candidate generation + integration per frame
  double speedup = 0.0;  // baseline avg / this avg
};

struct BenchReport {
  std::vector<BenchRow> rows;
  bool identical = true;  // every thread count produced the baseline volume
  unsigned hardware_threads = 0;
};

/// Integrates every dataset frame at each worker count into a fresh volume
/// and compares the results. Frame poses come from the dataset's
/// groundtruth.txt when present, identity otherwise.
BenchReport bench(const PipelineConfig& cfg, const std::vector<std::size_t>& threads);

std::string format_bench(const BenchReport& report);

}  // namespace featsense
