#pragma once

#include "trajlabel/camera_label.hpp"
#include "trajlabel/config.hpp"
#include "trajlabel/fusion_crf.hpp"
#include "trajlabel/ingest.hpp"
#include "trajlabel/lidar_label.hpp"
#include "trajlabel/metrics.hpp"
#include "trajlabel/trajectory_fit.hpp"

#include <algorithm>
#include <atomic>
#include <exception>
#include <optional>
#include <string>
#include <thread>
#include <vector>

namespace trajlabel {

// Everything one frame needs; image and calibration at analysis resolution.
struct FrameInput {
  std::string frame_id;
  RgbImage image;
  RingScan scan;
  Pose pose;
  std::vector<Pose> future_poses;  // world frame
  Calibration calib;
  std::optional<PatchFeatureMap> features;
};

// Resamples image and intrinsics to the configured analysis size.
inline FrameInput to_analysis_size(FrameSample sample, std::optional<PatchFeatureMap> features,
                                   const CameraParams& camera) {
  const ImageSize target{camera.analysis_width, camera.analysis_height};
  FrameInput in;
  in.frame_id = std::move(sample.frame_id);
  in.calib = sample.calib.image_size == target ? sample.calib : sample.calib.scaled_to(target);
  if (sample.image.size() != target) {
    if (sample.image.size() != sample.calib.image_size) {
      throw std::runtime_error("frame " + in.frame_id + ": image size does not match calibration");
    }
    in.image = resize_bilinear(sample.image, target);
  } else {
    in.image = std::move(sample.image);
  }
  in.scan = std::move(sample.scan);
  in.pose = sample.pose;
  in.future_poses = std::move(sample.future_poses);
  in.features = std::move(features);
  return in;
}

struct FrameResult {
  std::string frame_id;
  bool ok = false;
  std::string reason;  // why the frame was skipped

  RingScan fov_scan;
  TrajectoryFit fit;
  Mask trajectory;
  FrameLidarLabels lidar_points;
  std::optional<LabelImage> lidar;
  std::optional<LabelImage> camera;
  std::optional<Prototype> prototype;
  bool prototype_carried = false;
  bool needs_carry = false;  // skipped only for lack of a carried prototype
  std::optional<FusedLabel> fused;
  Mask mask;
};

// Runs the labelling chain frame by frame. Holds the carried-over camera
// prototype, so frames of one sequence must be fed in timestamp order.
class FrameLabeler {
 public:
  explicit FrameLabeler(PipelineConfig config) : config_(std::move(config)) {}

  const PipelineConfig& config() const { return config_; }
  const std::optional<Prototype>& carried_prototype() const { return carry_; }
  void set_carried_prototype(std::optional<Prototype> p) { carry_ = std::move(p); }

  FrameResult process(const FrameInput& in) {
    const Components& comp = config_.components;
    FrameResult out;
    out.frame_id = in.frame_id;
    const ImageSize size = in.image.size();

    out.fov_scan = limit_fov(in.scan, config_.trajectory.fov_deg);
    const auto poses = poses_to_lidar(in.future_poses, in.calib.world_to_lidar(in.pose));
    out.fit = fit_trajectory(out.fov_scan, poses, in.calib, config_.trajectory);
    out.trajectory = trajectory_mask(out.fit, out.fov_scan, in.calib, size);

    if (comp.any_lidar()) {
      const LidarCues cues{comp.height, comp.gradient, comp.gradient_threshold};
      out.lidar_points = label_frame(out.fov_scan, out.fit, config_.lidar, cues);
      out.lidar = rasterize(out.lidar_points.points, in.calib, size, config_.lidar.max_triangle_edge_px);
    }

    if (comp.camera) {
      if (!in.features) return skip(std::move(out), "no feature map");
      const PatchFeatureMap& fm = *in.features;
      const int p = config_.camera.patch_size;
      if (fm.rows != size.height / p || fm.cols != size.width / p) {
        return skip(std::move(out), "feature grid " + std::to_string(fm.rows) + "x" + std::to_string(fm.cols) +
                                        " does not match image at patch size " + std::to_string(p));
      }
      const Mask patches = trajectory_patches(out.trajectory, p, fm.rows, fm.cols, config_.camera.membership_fraction);
      const bool enough = count_set(patches) >= config_.camera.min_prototype_patches;
      out.prototype = compute_prototype(fm, patches, carry_, config_.camera.min_prototype_patches);
      if (!out.prototype) {
        out.needs_carry = true;
        return skip(std::move(out), "fewer than " + std::to_string(config_.camera.min_prototype_patches) + " trajectory patches and no carried prototype");
      }
      out.prototype_carried = !enough;
      if (enough) carry_ = out.prototype;
      SimilarityMap sim;
      try {
        sim = similarity_map(fm, *out.prototype);
      } catch (const std::invalid_argument& e) {
        return skip(std::move(out), e.what());
      }
      const auto patch_labels = camera_label(sim.values, config_.camera.sigma_c);
      if (!patch_labels) return skip(std::move(out), "maximum similarity <= 0");
      out.camera = upsample(*patch_labels, p, size);
    }

    if (out.camera && out.lidar) {
      out.fused = fuse(*out.camera, *out.lidar);
    } else if (out.camera) {
      out.fused = FusedLabel{out.camera->values, Grid<Provenance>(size.height, size.width, Provenance::camera_only)};
    } else {
      // Lidar-only rows: unlabelled pixels are background.
      FusedLabel f{Grid<double>(size.height, size.width, 0.0), Grid<Provenance>(size.height, size.width, Provenance::fused)};
      for (std::size_t i = 0; i < f.values.count(); ++i) {
        if (out.lidar->coverage.data()[i]) f.values.data()[i] = out.lidar->values.data()[i];
      }
      out.fused = std::move(f);
    }

    out.mask = comp.crf ? crf_refine(in.image, *out.fused, config_.crf) : binarize(*out.fused, config_.binarize_threshold);
    out.ok = true;
    return out;
  }

 private:
  FrameResult skip(FrameResult r, std::string reason) {
    r.ok = false;
    r.reason = std::move(reason);
    return r;
  }

  PipelineConfig config_;
  std::optional<Prototype> carry_;
};

// Loads one synchronized frame of a sequence at analysis resolution. The
// feature map is read only when the camera cue is enabled.
inline FrameInput load_frame_input(const SequencePaths& seq, const SyncedFrame& f, const Calibration& calib,
                                   const PipelineConfig& cfg) {
  std::optional<PatchFeatureMap> features;
  if (cfg.components.camera) {
    const int p = cfg.camera.patch_size;
    features = load_feature_map(seq.features(f.frame_id),
                                FeatureGridDims{cfg.camera.analysis_height / p, cfg.camera.analysis_width / p}, p);
  }
  return to_analysis_size(load_frame(seq, f, calib), std::move(features), cfg.camera);
}

// Labels frames 0..n-1 on up to `workers` threads with results identical to
// feeding them in order through one FrameLabeler. Frames are first labelled
// independently; the few that depend on a carried prototype are then redone
// in order with the prototype of the latest earlier frame that had its own.
// `load(i)` may throw; the frame is then reported as skipped with the
// message. `consume(i, input, result)` sees every frame exactly once and may
// be called concurrently. Loaded inputs are not kept between the passes.
template <typename Load, typename Consume>
void label_frames(std::size_t n, const PipelineConfig& cfg, int workers, Load load, Consume consume) {
  std::vector<std::optional<Prototype>> own(n);
  std::vector<char> deferred(n, 0);
  const auto run = [&](std::size_t i, FrameLabeler& labeler, bool first_pass) {
    if (first_pass) labeler.set_carried_prototype(std::nullopt);
    FrameInput in;
    FrameResult r;
    try {
      in = load(i);
      r = labeler.process(in);
    } catch (const std::exception& e) {
      r = FrameResult{};
      r.frame_id = in.frame_id;
      r.reason = e.what();
    }
    if (first_pass && r.needs_carry) {
      deferred[i] = 1;
      return;
    }
    if (r.prototype && !r.prototype_carried) own[i] = r.prototype;
    consume(i, in, r);
  };

  std::atomic<std::size_t> next{0};
  const auto worker = [&] {
    FrameLabeler labeler(cfg);
    for (std::size_t i = next++; i < n; i = next++) run(i, labeler, true);
  };
  const int threads = std::max(1, std::min<int>(workers, static_cast<int>(n)));
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
  }

  FrameLabeler labeler(cfg);
  for (std::size_t i = 0; i < n; ++i) {
    if (!deferred[i]) continue;
    std::optional<Prototype> carry;
    for (std::size_t j = i; j-- > 0;) {
      if (own[j]) {
        carry = own[j];
        break;
      }
    }
    labeler.set_carried_prototype(carry);
    run(i, labeler, false);
  }
}

// Rows of the component ablation, in table order.
inline std::vector<std::string> ablation_rows() {
  return {"C", "H", "G-nothr", "G", "H+G", "C+H", "C+G", "C+H+G", "C+H+G+CRF"};
}

struct LabeledFrame {
  FrameInput input;
  Mask ground_truth;
};

inline FrameMetrics score_frame(const FrameResult& r, const Mask& gt) {
  FrameMetrics fm;
  fm.frame_id = r.frame_id;
  fm.skipped = !r.ok;
  // A skipped frame predicts no road.
  const Mask pred = r.ok ? r.mask : Mask(gt.height(), gt.width(), 0);
  fm.counts = confusion(pred, gt);
  fm.values = metrics(fm.counts);
  return fm;
}

// One report per configuration row. Each row runs the frames in order with
// its own prototype carry-over; rows run on up to `workers` threads.
inline std::vector<MetricsReport> run_ablation(const std::vector<LabeledFrame>& frames, const PipelineConfig& base,
                                               const std::vector<std::string>& rows = ablation_rows(),
                                               int workers = 1) {
  for (const auto& tag : rows) Components::parse(tag);  // throw here, not on a worker
  std::vector<MetricsReport> reports(rows.size());
  const auto run_row = [&](std::size_t k) {
    PipelineConfig cfg = base;
    cfg.components = Components::parse(rows[k]);
    FrameLabeler labeler(cfg);
    MetricsReport& report = reports[k];
    report.tag = rows[k];
    for (const auto& f : frames) report.add(score_frame(labeler.process(f.input), f.ground_truth));
    report.finalize();
  };
  std::atomic<std::size_t> next{0};
  const auto worker = [&] {
    for (std::size_t k = next++; k < rows.size(); k = next++) run_row(k);
  };
  const int threads = std::max(1, std::min<int>(workers, static_cast<int>(rows.size())));
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
  }
  return reports;
}

}  // namespace trajlabel
