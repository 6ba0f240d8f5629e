// trajlabel: command-line front end for the road labelling pipeline.
//
//   trajlabel synth  --output DIR [--frames N --seed S ...]
//   trajlabel fit    --input SEQ --output DIR
//   trajlabel label  --input SEQ --output DIR
//   trajlabel eval   --pred DIR --gt DIR [--output DIR]
//   trajlabel ablate --input SEQ --output DIR
//   trajlabel all    --input SEQ --output DIR
//
// Every subcommand takes --config, --set key=value, --workers N and
// --dump-debug. Without --config, TRAJLABEL_CONFIG names the config file.
#include "trajlabel/trajlabel.hpp"

#include <CLI11.hpp>

#include <atomic>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <mutex>
#include <thread>

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace trajlabel;

namespace {

constexpr const char* kVersion = "trajlabel 0.1.0";
constexpr const char* kConfigEnv = "TRAJLABEL_CONFIG";

struct Common {
  std::string config;
  std::vector<std::string> overrides;
  int workers = 1;
  std::string output;
  bool dump_debug = false;
};

void add_common(CLI::App* cmd, Common& c, bool output_required) {
  cmd->add_option("--config", c.config, "YAML config file (default: $TRAJLABEL_CONFIG)");
  cmd->add_option("--set", c.overrides, "Override a config key, key=value")->take_all();
  cmd->add_option("--workers", c.workers, "Worker threads")->check(CLI::PositiveNumber);
  auto* out = cmd->add_option("--output", c.output, "Output directory");
  if (output_required) out->required();
  cmd->add_flag("--dump-debug", c.dump_debug, "Write per-frame debug files");
}

fs::path config_path(const Common& c) {
  if (!c.config.empty()) return c.config;
  if (const char* env = std::getenv(kConfigEnv); env && *env) return env;
  return {};
}

PipelineConfig resolve_config(const Common& c) {
  const fs::path path = config_path(c);
  if (!path.empty() && !fs::exists(path)) throw std::runtime_error("config file not found: " + path.string());
  return load_config(path, c.overrides);
}

void require_file(const fs::path& p) {
  if (!fs::exists(p)) throw std::runtime_error("missing file: " + p.string());
}

// Writes through a temporary name so a frame's outputs never appear half
// written.
template <typename Write>
void write_atomic(const fs::path& path, Write&& write) {
  fs::path tmp = path;
  tmp += ".part";
  write(tmp);
  fs::rename(tmp, path);
}

void write_text(const fs::path& path, const std::string& text) {
  write_atomic(path, [&](const fs::path& p) {
    std::ofstream os(p);
    if (!os) throw std::runtime_error("cannot open for writing: " + p.string());
    os << text;
  });
}

template <typename Fn>
void parallel_for(std::size_t n, int workers, Fn fn) {
  std::atomic<std::size_t> next{0};
  const auto worker = [&] {
    for (std::size_t i = next++; i < n; i = next++) fn(i);
  };
  const int threads = std::max(1, std::min<int>(workers, static_cast<int>(n)));
  if (threads == 1) return worker();
  std::vector<std::jthread> pool;
  for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
}

struct Sequence {
  SequencePaths paths;
  Calibration calib;
  std::vector<SyncedFrame> frames;
};

Sequence open_sequence(const fs::path& dir, const PipelineConfig& cfg) {
  if (!fs::is_directory(dir)) throw std::runtime_error("sequence directory not found: " + dir.string());
  Sequence s{SequencePaths{dir}, {}, {}};
  for (const auto& p : {s.paths.calibration(), s.paths.poses(), s.paths.image_index(), s.paths.scan_index()}) {
    require_file(p);
  }
  s.calib = load_calibration(s.paths.calibration());
  const auto poses = read_poses(s.paths.poses());
  const auto images = read_index(s.paths.image_index());
  const auto scans = read_index(s.paths.scan_index());
  auto synced = synchronize(images, scans, poses, cfg.ingest.sync_tolerance_s, cfg.ingest.future_travel_m);
  synced = exclude_frames(std::move(synced), cfg.ingest.excluded_frames);
  s.frames = sample_by_distance(synced, cfg.ingest.sample_spacing_m);
  if (s.frames.empty()) throw std::runtime_error("zero frames after synchronization: " + dir.string());
  return s;
}

// Geometry-only frame input; no feature map.
FrameInput load_geometry(const Sequence& seq, std::size_t i, const PipelineConfig& cfg) {
  return to_analysis_size(load_frame(seq.paths, seq.frames[i], seq.calib), std::nullopt, cfg.camera);
}

void check_feature_files(const Sequence& seq, const PipelineConfig& cfg) {
  if (!cfg.components.camera) return;
  for (const auto& f : seq.frames) {
    const fs::path p = seq.paths.features(f.frame_id);
    if (!fs::exists(p)) throw std::runtime_error("missing feature file: " + p.string());
  }
}

std::string vec_csv(const Vec3& v) {
  std::ostringstream os;
  os.precision(9);
  os << v.x() << ',' << v.y() << ',' << v.z();
  return os.str();
}

std::string fit_csv(const TrajectoryFit& fit, const RingScan& scan) {
  std::ostringstream os;
  os << "ring,valid,failed_rule,center_idx,left_idx,right_idx,pose_distance,"
        "center_x,center_y,center_z,left_x,left_y,left_z,right_x,right_y,right_z\n";
  const auto point = [&](int ring, int idx) {
    return idx >= 0 ? vec_csv(scan.rings[ring][idx].xyz) : std::string("nan,nan,nan");
  };
  for (std::size_t k = 0; k < fit.rings.size(); ++k) {
    const auto& r = fit.rings[k];
    os << r.ring << ',' << (r.valid ? 1 : 0) << ',' << rule_name(r.failed) << ',' << r.center_idx << ','
       << r.left_idx << ',' << r.right_idx << ',' << fit.candidates[k].center.pose_distance << ','
       << point(r.ring, r.center_idx) << ',' << point(r.ring, r.left_idx) << ',' << point(r.ring, r.right_idx)
       << '\n';
  }
  return os.str();
}

std::string points_csv(const FrameLidarLabels& labels) {
  std::ostringstream os;
  os.precision(9);
  os << "ring,index,x,y,z,height,gradient,lidar\n";
  const auto opt = [](const std::optional<double>& v) { return v ? std::to_string(*v) : std::string(); };
  for (const auto& p : labels.points) {
    os << p.ring << ',' << p.index << ',' << vec_csv(p.xyz) << ',' << opt(p.height) << ',' << opt(p.gradient) << ','
       << opt(p.value) << '\n';
  }
  return os.str();
}

// Lidar label values where covered, 0 elsewhere.
Grid<double> covered_values(const LabelImage& l) {
  Grid<double> out(l.height(), l.width(), 0.0);
  for (std::size_t i = 0; i < out.count(); ++i) {
    if (l.coverage.data()[i]) out.data()[i] = l.values.data()[i];
  }
  return out;
}

void write_debug(const fs::path& dir, const std::string& id, const FrameResult& r) {
  write_text(dir / (id + "_fit.csv"), fit_csv(r.fit, r.fov_scan));
  write_text(dir / (id + "_points.csv"), points_csv(r.lidar_points));
  if (r.trajectory.count() > 0) write_atomic(dir / (id + "_trajectory.png"), [&](const fs::path& p) { write_mask_png(p, r.trajectory); });
}

json provenance_stats(const FrameResult& r) {
  json j{{"lidar_covered_pixels", r.lidar ? r.lidar->covered_count() : 0},
         {"valid_rings", r.fit.valid_count()},
         {"candidate_rings", r.fit.rings.size()},
         {"prototype_carried", r.prototype_carried}};
  if (r.fused) {
    std::size_t fused = 0;
    for (auto p : r.fused->provenance.data()) fused += p == Provenance::fused ? 1 : 0;
    j["fused_pixels"] = fused;
    j["camera_only_pixels"] = r.fused->provenance.count() - fused;
  }
  if (r.ok) j["road_pixels"] = std::count(r.mask.data().begin(), r.mask.data().end(), 1);
  return j;
}

// ---------------------------------------------------------------------------

struct SynthArgs {
  int frames = 20;
  std::uint64_t seed = 0;
  double spacing = 5.0;
  double curvature = 0.0;
  double lane_offset = -1.0;
  double road_width = 6.0;
  double bank_height = 0.5;
  double roughness = 0.02;
  double feature_noise = 0.1;
};

int cmd_synth(const Common& c, const SynthArgs& a) {
  if (a.frames <= 0) throw std::runtime_error("--frames must be positive");
  synth::SceneParams p;
  p.curvature = a.curvature;
  p.lane_offset = a.lane_offset;
  p.road_width = a.road_width;
  p.bank_height = a.bank_height;
  p.road_roughness_std = a.roughness;
  p.feature_noise_std = a.feature_noise;
  synth::SequenceSpec spec;
  spec.frames = a.frames;
  spec.frame_spacing = a.spacing;
  spec.seed = a.seed;
  synth::write_sequence(c.output, p, spec);
  std::cout << "wrote " << a.frames << " frames to " << c.output << '\n';
  return 0;
}

int cmd_fit(const Common& c, const fs::path& input) {
  const PipelineConfig cfg = resolve_config(c);
  const Sequence seq = open_sequence(input, cfg);
  const fs::path out = fs::path(c.output) / "fit";
  fs::create_directories(out);
  std::vector<json> status(seq.frames.size());
  parallel_for(seq.frames.size(), c.workers, [&](std::size_t i) {
    const std::string& id = seq.frames[i].frame_id;
    try {
      const FrameInput in = load_geometry(seq, i, cfg);
      const RingScan scan = limit_fov(in.scan, cfg.trajectory.fov_deg);
      const auto poses = poses_to_lidar(in.future_poses, in.calib.world_to_lidar(in.pose));
      const TrajectoryFit fit = fit_trajectory(scan, poses, in.calib, cfg.trajectory);
      write_text(out / (id + ".csv"), fit_csv(fit, scan));
      if (c.dump_debug) {
        const Mask m = trajectory_mask(fit, scan, in.calib, in.image.size());
        write_atomic(out / (id + "_trajectory.png"), [&](const fs::path& p) { write_mask_png(p, m); });
      }
      status[i] = {{"frame_id", id}, {"status", "ok"}, {"valid_rings", fit.valid_count()}};
    } catch (const std::exception& e) {
      status[i] = {{"frame_id", id}, {"status", "skipped"}, {"reason", e.what()}};
    }
  });
  write_text(out / "summary.json", json(status).dump(2) + "\n");
  return 0;
}

int cmd_label(const Common& c, const fs::path& input) {
  const PipelineConfig cfg = resolve_config(c);
  const Sequence seq = open_sequence(input, cfg);
  check_feature_files(seq, cfg);
  const fs::path out = fs::path(c.output) / "labels";
  fs::create_directories(out);
  std::vector<json> status(seq.frames.size());
  label_frames(
      seq.frames.size(), cfg, c.workers, [&](std::size_t i) { return load_frame_input(seq.paths, seq.frames[i], seq.calib, cfg); },
      [&](std::size_t i, const FrameInput&, const FrameResult& r) {
        const std::string& id = seq.frames[i].frame_id;
        if (r.lidar) {
          write_atomic(out / (id + "_lidar.png"), [&](const fs::path& p) { write_label_png(p, covered_values(*r.lidar)); });
          write_atomic(out / (id + "_lidar_coverage.png"), [&](const fs::path& p) { write_mask_png(p, r.lidar->coverage); });
        }
        if (r.camera) write_atomic(out / (id + "_camera.png"), [&](const fs::path& p) { write_label_png(p, r.camera->values); });
        if (r.fused) write_atomic(out / (id + "_fused.png"), [&](const fs::path& p) { write_label_png(p, r.fused->values); });
        if (c.dump_debug) write_debug(out, id, r);
        status[i] = {{"frame_id", id}, {"status", r.ok ? "ok" : "skipped"}};
        if (!r.ok) status[i]["reason"] = r.reason;
      });
  write_text(out / "summary.json", json(status).dump(2) + "\n");
  return 0;
}

int cmd_eval(const Common& c, const fs::path& pred_dir, const fs::path& gt_dir) {
  if (!fs::is_directory(gt_dir)) throw std::runtime_error("ground-truth directory not found: " + gt_dir.string());
  if (!fs::is_directory(pred_dir)) throw std::runtime_error("prediction directory not found: " + pred_dir.string());
  std::vector<fs::path> gts;
  for (const auto& e : fs::directory_iterator(gt_dir)) {
    if (e.is_regular_file() && e.path().extension() == ".png") gts.push_back(e.path());
  }
  std::sort(gts.begin(), gts.end());
  if (gts.empty()) throw std::runtime_error("no ground-truth masks in " + gt_dir.string());
  std::vector<FrameMetrics> frames(gts.size());
  parallel_for(gts.size(), c.workers, [&](std::size_t i) {
    const Mask gt = read_mask_png(gts[i]);
    const fs::path pred = pred_dir / gts[i].filename();
    FrameMetrics fm;
    fm.frame_id = gts[i].stem().string();
    fm.skipped = !fs::exists(pred);
    // A frame without a prediction counts as predicting no road.
    fm.counts = confusion(fm.skipped ? Mask(gt.height(), gt.width(), 0) : read_mask_png(pred), gt);
    fm.values = metrics(fm.counts);
    frames[i] = std::move(fm);
  });
  MetricsReport report;
  report.tag = "eval";
  for (auto& f : frames) report.add(std::move(f));
  report.finalize();
  const std::string table = "micro\n" + format_table({report}) + "macro\n" + format_table({report}, true);
  std::cout << table;
  if (!c.output.empty()) {
    fs::create_directories(c.output);
    write_text(fs::path(c.output) / "metrics.json", to_json(report).dump(2) + "\n");
    write_text(fs::path(c.output) / "metrics.txt", table);
  }
  return 0;
}

int cmd_ablate(const Common& c, const fs::path& input) {
  const PipelineConfig cfg = resolve_config(c);
  const Sequence seq = open_sequence(input, cfg);
  PipelineConfig with_camera = cfg;
  with_camera.components = Components::parse("C+H+G+CRF");
  check_feature_files(seq, with_camera);
  std::vector<LabeledFrame> frames(seq.frames.size());
  parallel_for(frames.size(), c.workers, [&](std::size_t i) {
    frames[i].input = load_frame_input(seq.paths, seq.frames[i], seq.calib, with_camera);
    frames[i].ground_truth = read_mask_png(seq.paths.ground_truth(seq.frames[i].frame_id));
  });
  for (const auto& f : frames) {
    if (f.ground_truth.size() != f.input.image.size()) {
      throw std::runtime_error("ground truth size differs from analysis size: " +
                               seq.paths.ground_truth(f.input.frame_id).string());
    }
  }
  const auto reports = run_ablation(frames, cfg, ablation_rows(), c.workers);
  fs::create_directories(c.output);
  const std::string table = format_table(reports);
  write_text(fs::path(c.output) / "ablation.txt", table);
  write_text(fs::path(c.output) / "ablation_macro.txt", format_table(reports, true));
  json j = json::array();
  for (const auto& r : reports) j.push_back(to_json(r));
  write_text(fs::path(c.output) / "ablation.json", j.dump(2) + "\n");
  std::cout << table;
  return 0;
}

int cmd_all(const Common& c, const fs::path& input) {
  const PipelineConfig cfg = resolve_config(c);
  const Sequence seq = open_sequence(input, cfg);
  const fs::path out = c.output;
  fs::create_directories(out / "masks");
  fs::create_directories(out / "fused");
  if (c.dump_debug) fs::create_directories(out / "debug");
  const bool have_gt = fs::is_directory(seq.paths.root / "gt");

  std::vector<json> status(seq.frames.size());
  std::vector<std::optional<FrameMetrics>> scores(seq.frames.size());
  label_frames(
      seq.frames.size(), cfg, c.workers, [&](std::size_t i) { return load_frame_input(seq.paths, seq.frames[i], seq.calib, cfg); },
      [&](std::size_t i, const FrameInput&, const FrameResult& r) {
        const std::string& id = seq.frames[i].frame_id;
        json s{{"frame_id", id}, {"scan_id", seq.frames[i].scan_id}, {"status", r.ok ? "ok" : "skipped"}};
        if (!r.ok) s["reason"] = r.reason;
        s["provenance"] = provenance_stats(r);
        if (r.ok) {
          write_atomic(out / "masks" / (id + ".png"), [&](const fs::path& p) { write_mask_png(p, r.mask); });
          write_atomic(out / "fused" / (id + ".png"), [&](const fs::path& p) { write_label_png(p, r.fused->values); });
        }
        if (c.dump_debug) write_debug(out / "debug", id, r);
        const fs::path gt = seq.paths.ground_truth(id);
        if (have_gt && fs::exists(gt)) scores[i] = score_frame(r, read_mask_png(gt));
        status[i] = std::move(s);
      });

  const fs::path cfg_path = config_path(c);
  write_text(out / "config.yaml", config_to_yaml(cfg));
  std::size_t ok = 0;
  for (const auto& s : status) ok += s["status"] == "ok" ? 1 : 0;
  json manifest{{"version", kVersion},
                {"input", fs::absolute(input).string()},
                {"output", fs::absolute(out).string()},
                {"config_file", cfg_path.empty() ? "" : fs::absolute(cfg_path).string()},
                {"overrides", c.overrides},
                {"config", config_values(cfg)},
                {"config_hash", config_hash(cfg)},
                {"frames_total", status.size()},
                {"frames_ok", ok},
                {"frames", status}};

  MetricsReport report;
  report.tag = cfg.components.tag();
  for (auto& s : scores) {
    if (s) report.add(std::move(*s));
  }
  if (!report.frames.empty()) {
    report.finalize();
    write_text(out / "metrics.json", to_json(report).dump(2) + "\n");
    manifest["metrics"] = {{"micro", to_json(report.micro)}, {"macro", to_json(report.macro)}};
  }
  write_text(out / "manifest.json", manifest.dump(2) + "\n");
  std::cout << ok << "/" << status.size() << " frames labelled, config " << config_hash(cfg) << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Trajectory-based road autolabelling"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);

  Common common;
  std::string input, pred, gt;
  SynthArgs synth;

  auto* s = app.add_subcommand("synth", "Write a synthetic sequence");
  add_common(s, common, true);
  s->add_option("--frames", synth.frames, "Number of frames");
  s->add_option("--seed", synth.seed, "Random seed");
  s->add_option("--spacing", synth.spacing, "Meters between frames");
  s->add_option("--curvature", synth.curvature, "Road curvature, 1/m");
  s->add_option("--lane-offset", synth.lane_offset, "Vehicle offset from the road centre, m");
  s->add_option("--road-width", synth.road_width, "Road width, m");
  s->add_option("--bank-height", synth.bank_height, "Snow bank height, m");
  s->add_option("--roughness", synth.roughness, "Road surface height std, m");
  s->add_option("--feature-noise", synth.feature_noise, "Patch feature noise std");

  const auto seq_cmd = [&](const char* name, const char* help) {
    auto* cmd = app.add_subcommand(name, help);
    add_common(cmd, common, true);
    cmd->add_option("--input", input, "Sequence directory")->required();
    return cmd;
  };
  auto* fit = seq_cmd("fit", "Dump the fitted trajectory per frame");
  auto* label = seq_cmd("label", "Write lidar, camera and fused label images");
  auto* ablate = seq_cmd("ablate", "Run the component ablation against ground truth");
  auto* all = seq_cmd("all", "Label a sequence end to end and write a run manifest");
  auto* ev = app.add_subcommand("eval", "Score predicted masks against ground truth");
  add_common(ev, common, false);
  ev->add_option("--pred", pred, "Directory of predicted masks")->required();
  ev->add_option("--gt", gt, "Directory of ground-truth masks")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (s->parsed()) return cmd_synth(common, synth);
    if (fit->parsed()) return cmd_fit(common, input);
    if (label->parsed()) return cmd_label(common, input);
    if (ev->parsed()) return cmd_eval(common, pred, gt);
    if (ablate->parsed()) return cmd_ablate(common, input);
    if (all->parsed()) return cmd_all(common, input);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 1;
}
