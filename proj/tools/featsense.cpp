// featsense command-line front end: run / eval / export / bench / synth.

#include "featsense/config.hpp"
#include "featsense/error.hpp"
#include "featsense/eval.hpp"
#include "featsense/map_store.hpp"
#include "featsense/pipeline.hpp"
#include "featsense/scan_io.hpp"
#include "featsense/synth.hpp"
#include "featsense/tsdf.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <iostream>

namespace fs = featsense;

namespace {

fs::synth::Scene builtin_scene(const std::string& name, std::uint64_t seed) {
  // Low enough that a 30 deg scanner sees floor and ceiling, so z is observable.
  if (name == "room") return fs::synth::box_room(fs::Vec3(-4, -3, -0.8), fs::Vec3(5, 4, 1.2));
  if (name == "corridor") return fs::synth::corridor();
  if (name == "plane") return fs::synth::single_plane(fs::Vec3::UnitX(), 5.0);
  if (name == "poles") return fs::synth::pole_forest(seed);
  return fs::synth::read_scene(name);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"FeatSense LiDAR odometry and TSDF mapping"};
  app.require_subcommand(1);

  std::string config_path;
  auto* run_cmd = app.add_subcommand("run", "Run odometry, refinement and mapping over a dataset");
  run_cmd->add_option("--config", config_path, "Config file (key = value)")->required();

  std::string est_path, gt_path;
  bool align = false;
  double max_dt = 0.02;
  auto* eval_cmd = app.add_subcommand("eval", "Absolute trajectory error against ground truth");
  eval_cmd->add_option("--est", est_path, "Estimated trajectory")->required();
  eval_cmd->add_option("--gt", gt_path, "Ground-truth trajectory")->required();
  eval_cmd->add_flag("--align", align, "Rigidly align before computing errors");
  eval_cmd->add_option("--max-dt", max_dt, "Association window in seconds");

  std::string map_path, out_path;
  auto* export_cmd = app.add_subcommand("export", "Export the zero-crossing surface of a map store as PLY");
  export_cmd->add_option("--map", map_path, "Map store")->required();
  export_cmd->add_option("--out", out_path, "Output PLY")->required();

  std::vector<std::size_t> threads{1, 2, 4, 8};
  auto* bench_cmd = app.add_subcommand("bench", "Time TSDF generation at several worker counts");
  bench_cmd->add_option("--config", config_path, "Config file")->required();
  bench_cmd->add_option("--threads", threads, "Comma-separated worker counts")->delimiter(',');

  std::string scene = "corridor", out_dir;
  std::size_t n_frames = 50;
  std::vector<double> step{0.1, 0.0, 0.0};
  fs::synth::SensorParams sensor;
  fs::synth::NoiseParams noise;
  auto* synth_cmd = app.add_subcommand("synth", "Generate a synthetic dataset");
  synth_cmd->add_option("--scene", scene, "room | corridor | plane | poles | scene file");
  synth_cmd->add_option("--out", out_dir, "Output directory")->required();
  synth_cmd->add_option("--frames", n_frames, "Number of frames");
  synth_cmd->add_option("--step", step, "Per-frame translation x,y,z")->delimiter(',')->expected(3);
  synth_cmd->add_option("--rows", sensor.rows, "Scan lines");
  synth_cmd->add_option("--cols", sensor.cols, "Azimuth columns");
  synth_cmd->add_option("--vfov", sensor.vfov_deg, "Vertical field of view, degrees");
  synth_cmd->add_option("--range-sigma", noise.range_sigma, "Gaussian range noise, meters");
  synth_cmd->add_option("--intensity-sigma", noise.intensity_sigma, "Gaussian intensity noise");
  synth_cmd->add_option("--seed", noise.seed, "Noise seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 2;
  }

  try {
    if (*run_cmd) {
      const fs::PipelineConfig cfg = fs::load_config(config_path);
      const fs::RunResult r = fs::run(cfg);
      std::cout << fs::format_stats(r.stats);
    } else if (*eval_cmd) {
      const auto pairs = fs::eval::associate(fs::read_trajectory(est_path), fs::read_trajectory(gt_path), max_dt);
      const auto report = fs::eval::ate(pairs, align);
      std::cout << fs::eval::format_table(report) << '\n' << fs::eval::format_key_values(report);
    } else if (*export_cmd) {
      const auto store = fs::tsdf::MapStore::open(map_path);
      const auto pts = fs::tsdf::export_zero_crossings(store);
      fs::tsdf::write_ply(pts, out_path);
      std::cout << "points=" << pts.size() << '\n';
    } else if (*bench_cmd) {
      const fs::PipelineConfig cfg = fs::load_config(config_path);
      std::cout << fs::format_bench(fs::bench(cfg, threads));
    } else if (*synth_cmd) {
      const auto sc = builtin_scene(scene, noise.seed);
      const auto traj = fs::synth::straight_line(n_frames, fs::Vec3::Zero(), fs::Vec3(step[0], step[1], step[2]));
      fs::synth::make_dataset(sc, traj, sensor, noise, out_dir);
      std::cout << "frames=" << n_frames << '\n';
    }
  } catch (const fs::Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return e.code() == fs::Errc::Config ? 2 : 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
