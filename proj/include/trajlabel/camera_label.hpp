#pragma once

#include "trajlabel/image.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace trajlabel {

struct CameraParams {
  double sigma_c = 0.6;
  int patch_size = 14;
  double membership_fraction = 0.5;  // strict >
  int min_prototype_patches = 200;
  int analysis_width = 1224;
  int analysis_height = 400;
};

// Hp x Wp grid of D-dimensional patch descriptors, stored row-major as f32
// (patch-major, feature-minor).
struct PatchFeatureMap {
  int rows = 0;
  int cols = 0;
  int dim = 0;
  int patch_size = 14;
  std::string frame_id;
  std::vector<float> data;

  PatchFeatureMap() = default;
  PatchFeatureMap(int rows_, int cols_, int dim_, int patch = 14)
      : rows(rows_), cols(cols_), dim(dim_), patch_size(patch),
        data(static_cast<std::size_t>(rows_) * cols_ * dim_, 0.0f) {}

  const float* at(int r, int c) const { return data.data() + (static_cast<std::size_t>(r) * cols + c) * dim; }
  float* at(int r, int c) { return data.data() + (static_cast<std::size_t>(r) * cols + c) * dim; }
};

struct Prototype {
  std::vector<double> vector;
  std::string source_frame;
  int patch_count = 0;
};

// A patch belongs to the trajectory when more than `fraction` of its pixels
// are trajectory pixels.
inline Mask trajectory_patches(const Mask& traj, int patch_size, int rows, int cols, double fraction = 0.5) {
  Mask out(rows, cols, 0);
  const double total = static_cast<double>(patch_size) * patch_size;
  for (int pr = 0; pr < rows; ++pr) {
    for (int pc = 0; pc < cols; ++pc) {
      int hits = 0;
      for (int r = pr * patch_size; r < (pr + 1) * patch_size && r < traj.height(); ++r) {
        for (int c = pc * patch_size; c < (pc + 1) * patch_size && c < traj.width(); ++c) hits += traj(r, c) ? 1 : 0;
      }
      out(pr, pc) = hits / total > fraction ? 1 : 0;
    }
  }
  return out;
}

inline int count_set(const Mask& m) {
  return static_cast<int>(std::count(m.data().begin(), m.data().end(), 1));
}

// Mean feature over trajectory patches when at least `min_patches` are
// available, else the carried prototype, else nullopt.
inline std::optional<Prototype> compute_prototype(const PatchFeatureMap& features, const Mask& traj_patches,
                                                  const std::optional<Prototype>& carry, int min_patches = 200) {
  const int count = count_set(traj_patches);
  if (count >= min_patches && count > 0) {
    Prototype p;
    p.vector.assign(features.dim, 0.0);
    for (int r = 0; r < features.rows; ++r) {
      for (int c = 0; c < features.cols; ++c) {
        if (!traj_patches(r, c)) continue;
        const float* f = features.at(r, c);
        for (int k = 0; k < features.dim; ++k) p.vector[k] += f[k];
      }
    }
    for (auto& v : p.vector) v /= count;
    p.source_frame = features.frame_id;
    p.patch_count = count;
    return p;
  }
  return carry;
}

struct SimilarityMap {
  Grid<double> values;
  int zero_norm_patches = 0;
};

// Cosine similarity of every patch to the prototype. Zero-norm patches get 0.
inline SimilarityMap similarity_map(const PatchFeatureMap& features, const Prototype& proto) {
  if (static_cast<int>(proto.vector.size()) != features.dim) {
    throw std::invalid_argument("similarity_map: prototype dimension mismatch");
  }
  double pn = 0.0;
  for (double v : proto.vector) pn += v * v;
  pn = std::sqrt(pn);
  if (!(pn > 0.0) || !std::isfinite(pn)) throw std::invalid_argument("similarity_map: zero-norm prototype");
  SimilarityMap out{Grid<double>(features.rows, features.cols, 0.0), 0};
  for (int r = 0; r < features.rows; ++r) {
    for (int c = 0; c < features.cols; ++c) {
      const float* f = features.at(r, c);
      double dot = 0.0, fn = 0.0;
      for (int k = 0; k < features.dim; ++k) {
        dot += f[k] * proto.vector[k];
        fn += static_cast<double>(f[k]) * f[k];
      }
      if (fn <= 0.0) {
        ++out.zero_norm_patches;
        continue;
      }
      out.values(r, c) = dot / (std::sqrt(fn) * pn);
    }
  }
  return out;
}

// Per-frame max normalisation, clamp to [0, 1], then
// exp(-(1 - C_norm)^2 / sigma_c^2). nullopt when the frame max is <= 0.
inline std::optional<Grid<double>> camera_label(const Grid<double>& sim, double sigma_c) {
  if (sim.empty()) return std::nullopt;
  const double mx = *std::max_element(sim.data().begin(), sim.data().end());
  if (!(mx > 0.0)) return std::nullopt;
  Grid<double> out(sim.height(), sim.width());
  for (std::size_t i = 0; i < sim.count(); ++i) {
    const double c = std::clamp(sim.data()[i] / mx, 0.0, 1.0);
    out.data()[i] = std::exp(-((1.0 - c) * (1.0 - c)) / (sigma_c * sigma_c));
  }
  return out;
}

// Bilinear sample of a patch grid at pixel coordinates (u, v); patch (r, c)
// has its centre at ((c + 0.5) * P - 0.5, (r + 0.5) * P - 0.5). Outside the
// outermost centres the edge values extend.
inline double sample_patch_grid(const Grid<double>& grid, int patch_size, double u, double v) {
  const double half = (patch_size - 1) / 2.0;
  const double gx = std::clamp((u - half) / patch_size, 0.0, grid.width() - 1.0);
  const double gy = std::clamp((v - half) / patch_size, 0.0, grid.height() - 1.0);
  const int x0 = static_cast<int>(gx);
  const int y0 = static_cast<int>(gy);
  const int x1 = std::min(x0 + 1, grid.width() - 1);
  const int y1 = std::min(y0 + 1, grid.height() - 1);
  const double fx = gx - x0;
  const double fy = gy - y0;
  const double top = grid(y0, x0) * (1 - fx) + grid(y0, x1) * fx;
  const double bot = grid(y1, x0) * (1 - fx) + grid(y1, x1) * fx;
  return top * (1 - fy) + bot * fy;
}

inline LabelImage upsample(const Grid<double>& patch_labels, int patch_size, ImageSize size) {
  LabelImage img(size.height, size.width);
  std::fill(img.coverage.data().begin(), img.coverage.data().end(), 1);
  if (patch_labels.empty()) return img;
  for (int r = 0; r < size.height; ++r) {
    for (int c = 0; c < size.width; ++c) img.values(r, c) = sample_patch_grid(patch_labels, patch_size, c, r);
  }
  return img;
}

// Source of patch features for an image at analysis resolution.
class FeatureProvider {
 public:
  virtual ~FeatureProvider() = default;
  virtual PatchFeatureMap features(const RgbImage& image, const std::string& frame_id) = 0;
};

// Cheap descriptor for tests and demos: per-patch mean colour (centred on
// mid-grey) and per-channel standard deviation, D = 6.
class ToyFeatureExtractor final : public FeatureProvider {
 public:
  explicit ToyFeatureExtractor(int patch_size = 14) : patch_size_(patch_size) {}

  PatchFeatureMap features(const RgbImage& image, const std::string& frame_id) override {
    const int rows = image.height() / patch_size_;
    const int cols = image.width() / patch_size_;
    PatchFeatureMap fm(rows, cols, 6, patch_size_);
    fm.frame_id = frame_id;
    const double n = static_cast<double>(patch_size_) * patch_size_;
    for (int pr = 0; pr < rows; ++pr) {
      for (int pc = 0; pc < cols; ++pc) {
        double sum[3] = {0, 0, 0}, sq[3] = {0, 0, 0};
        for (int r = pr * patch_size_; r < (pr + 1) * patch_size_; ++r) {
          for (int c = pc * patch_size_; c < (pc + 1) * patch_size_; ++c) {
            for (int k = 0; k < 3; ++k) {
              const double x = image(r, c)[k] / 255.0;
              sum[k] += x;
              sq[k] += x * x;
            }
          }
        }
        float* f = fm.at(pr, pc);
        for (int k = 0; k < 3; ++k) {
          const double mean = sum[k] / n;
          f[k] = static_cast<float>(mean - 0.5);
          f[3 + k] = static_cast<float>(std::sqrt(std::max(sq[k] / n - mean * mean, 0.0)));
        }
      }
    }
    return fm;
  }

 private:
  int patch_size_;
};

}  // namespace trajlabel
