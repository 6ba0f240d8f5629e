#pragma once

#include "trajlabel/image.hpp"
#include "trajlabel/permutohedral.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

namespace trajlabel {

enum class Provenance : std::uint8_t { camera_only = 0, fused = 1 };

struct FusedLabel {
  Grid<double> values;
  Grid<Provenance> provenance;

  int height() const { return values.height(); }
  int width() const { return values.width(); }
};

// Mean of camera and lidar labels where the lidar label is defined, camera
// label elsewhere.
inline FusedLabel fuse(const LabelImage& cam, const LabelImage& lid) {
  if (cam.size() != lid.size()) throw std::invalid_argument("fuse: label image dimensions differ");
  FusedLabel out{Grid<double>(cam.height(), cam.width()), Grid<Provenance>(cam.height(), cam.width())};
  for (std::size_t i = 0; i < cam.values.count(); ++i) {
    if (lid.coverage.data()[i]) {
      out.values.data()[i] = (cam.values.data()[i] + lid.values.data()[i]) / 2.0;
      out.provenance.data()[i] = Provenance::fused;
    } else {
      out.values.data()[i] = cam.values.data()[i];
      out.provenance.data()[i] = Provenance::camera_only;
    }
  }
  return out;
}

// value >= threshold -> road.
inline Mask binarize(const Grid<double>& values, double threshold = 0.5) {
  Mask m(values.height(), values.width());
  std::transform(values.data().begin(), values.data().end(), m.data().begin(),
                 [threshold](double v) { return v >= threshold ? std::uint8_t{1} : std::uint8_t{0}; });
  return m;
}

inline Mask binarize(const FusedLabel& fused, double threshold = 0.5) { return binarize(fused.values, threshold); }

struct CrfParams {
  int iterations = 5;
  double spatial_sigma = 3.0;
  double spatial_weight = 3.0;
  double bilateral_sigma_xy = 60.0;
  double bilateral_sigma_rgb = 10.0;
  double bilateral_weight = 5.0;
  double unary_clip = 0.05;
};

enum class MessagePassing { approximate, exact };

struct MeanFieldResult {
  Grid<double> q_road;
  double max_normalization_error = 0.0;  // max |Q_road + Q_bg - 1| over all iterations
};

namespace crf_detail {

// Normalised Gaussian filter sum_j k_ij v_j / sum_j k_ij over all pixels
// (self included). Exact O(N^2) evaluation; k factorises into spatial and
// colour parts which are tabulated.
class ExactFilter {
 public:
  ExactFilter(const RgbImage& image, double sigma_xy, double sigma_rgb, bool use_color)
      : image_(image), use_color_(use_color) {
    const int h = image.height(), w = image.width();
    const int span = std::max(h, w);
    xy_.resize(static_cast<std::size_t>(span) * span);
    for (int dy = 0; dy < span; ++dy) {
      for (int dx = 0; dx < span; ++dx) {
        xy_[static_cast<std::size_t>(dy) * span + dx] =
            std::exp(-(static_cast<double>(dx) * dx + static_cast<double>(dy) * dy) / (2.0 * sigma_xy * sigma_xy));
      }
    }
    span_ = span;
    if (use_color) {
      rgb_.resize(3 * 255 * 255 + 1);
      for (std::size_t s = 0; s < rgb_.size(); ++s) rgb_[s] = std::exp(-static_cast<double>(s) / (2.0 * sigma_rgb * sigma_rgb));
    }
  }

  void apply(std::span<const double> in, std::span<double> out) const {
    const int h = image_.height(), w = image_.width();
    for (int yi = 0; yi < h; ++yi) {
      for (int xi = 0; xi < w; ++xi) {
        const Rgb& ci = image_(yi, xi);
        double num = 0.0, den = 0.0;
        for (int yj = 0; yj < h; ++yj) {
          const double* row = xy_.data() + static_cast<std::size_t>(std::abs(yi - yj)) * span_;
          for (int xj = 0; xj < w; ++xj) {
            double k = row[std::abs(xi - xj)];
            if (use_color_) {
              const Rgb& cj = image_(yj, xj);
              const int dr = ci[0] - cj[0], dg = ci[1] - cj[1], db = ci[2] - cj[2];
              k *= rgb_[dr * dr + dg * dg + db * db];
            }
            num += k * in[static_cast<std::size_t>(yj) * w + xj];
            den += k;
          }
        }
        out[static_cast<std::size_t>(yi) * w + xi] = num / den;
      }
    }
  }

 private:
  const RgbImage& image_;
  bool use_color_;
  int span_ = 0;
  std::vector<double> xy_;
  std::vector<double> rgb_;
};

// Normalised separable Gaussian blur, truncated at 4 sigma.
inline void gaussian_blur_normalized(std::span<const double> in, std::span<double> out, int h, int w, double sigma) {
  const int radius = std::max(1, static_cast<int>(std::ceil(4.0 * sigma)));
  std::vector<double> kernel(2 * radius + 1);
  for (int k = -radius; k <= radius; ++k) kernel[k + radius] = std::exp(-(k * k) / (2.0 * sigma * sigma));
  std::vector<double> tmp_v(static_cast<std::size_t>(h) * w), tmp_n(tmp_v.size());
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double s = 0.0, n = 0.0;
      for (int k = std::max(-radius, -x); k <= std::min(radius, w - 1 - x); ++k) {
        s += kernel[k + radius] * in[static_cast<std::size_t>(y) * w + x + k];
        n += kernel[k + radius];
      }
      tmp_v[static_cast<std::size_t>(y) * w + x] = s;
      tmp_n[static_cast<std::size_t>(y) * w + x] = n;
    }
  }
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double s = 0.0, n = 0.0;
      for (int k = std::max(-radius, -y); k <= std::min(radius, h - 1 - y); ++k) {
        s += kernel[k + radius] * tmp_v[static_cast<std::size_t>(y + k) * w + x];
        n += kernel[k + radius] * tmp_n[static_cast<std::size_t>(y + k) * w + x];
      }
      out[static_cast<std::size_t>(y) * w + x] = s / n;
    }
  }
}

// Normalised bilateral filter on the permutohedral lattice.
class LatticeBilateral {
 public:
  LatticeBilateral(const RgbImage& image, double sigma_xy, double sigma_rgb)
      : n_(static_cast<int>(image.count())), lattice_(make_features(image, sigma_xy, sigma_rgb), 5) {
    std::vector<double> ones(n_, 1.0);
    norm_.assign(n_, 0.0);
    lattice_.filter(ones, norm_, 1);
  }

  void apply(std::span<const double> in, std::span<double> out) const {
    lattice_.filter(in, out, 1);
    for (int i = 0; i < n_; ++i) out[i] /= norm_[i];
  }

 private:
  static std::vector<float> make_features(const RgbImage& image, double sigma_xy, double sigma_rgb) {
    std::vector<float> f;
    f.reserve(image.count() * 5);
    for (int y = 0; y < image.height(); ++y) {
      for (int x = 0; x < image.width(); ++x) {
        const Rgb& c = image(y, x);
        f.push_back(static_cast<float>(x / sigma_xy));
        f.push_back(static_cast<float>(y / sigma_xy));
        for (int k = 0; k < 3; ++k) f.push_back(static_cast<float>(c[k] / sigma_rgb));
      }
    }
    return f;
  }

  int n_;
  PermutohedralLattice lattice_;
  std::vector<double> norm_;
};

}  // namespace crf_detail

// Two-label fully connected CRF, mean-field inference with Potts
// compatibility. Unary = -log(clip(p)), pairwise = spatial Gaussian plus
// bilateral (position + colour) Gaussian, both normalised.
inline MeanFieldResult mean_field(const RgbImage& image, const Grid<double>& road_prob, const CrfParams& params,
                                  MessagePassing method = MessagePassing::approximate) {
  if (image.size() != road_prob.size()) throw std::invalid_argument("crf: image and label dimensions differ");
  const int h = road_prob.height(), w = road_prob.width();
  const std::size_t n = road_prob.count();
  std::vector<double> u_road(n), u_bg(n), q_road(n), q_bg(n);
  const double lo = params.unary_clip, hi = 1.0 - params.unary_clip;
  for (std::size_t i = 0; i < n; ++i) {
    const double p = std::clamp(road_prob.data()[i], lo, hi);
    u_road[i] = -std::log(p);
    u_bg[i] = -std::log(1.0 - p);
  }
  double max_err = 0.0;
  const auto normalize = [&](const std::vector<double>& e_road, const std::vector<double>& e_bg) {
    for (std::size_t i = 0; i < n; ++i) {
      const double m = std::min(e_road[i], e_bg[i]);
      const double a = std::exp(-(e_road[i] - m));
      const double b = std::exp(-(e_bg[i] - m));
      q_road[i] = a / (a + b);
      q_bg[i] = b / (a + b);
      max_err = std::max(max_err, std::abs(q_road[i] + q_bg[i] - 1.0));
    }
  };
  normalize(u_road, u_bg);

  const bool pairwise = params.iterations > 0 && (params.spatial_weight != 0.0 || params.bilateral_weight != 0.0);
  if (pairwise) {
    std::vector<double> msg_s_road(n), msg_s_bg(n), msg_b_road(n), msg_b_bg(n), e_road(n), e_bg(n);
    std::optional<crf_detail::ExactFilter> exact_s, exact_b;
    std::optional<crf_detail::LatticeBilateral> lattice_b;
    if (method == MessagePassing::exact) {
      exact_s.emplace(image, params.spatial_sigma, 1.0, false);
      exact_b.emplace(image, params.bilateral_sigma_xy, params.bilateral_sigma_rgb, true);
    } else if (params.bilateral_weight != 0.0) {
      lattice_b.emplace(image, params.bilateral_sigma_xy, params.bilateral_sigma_rgb);
    }
    for (int it = 0; it < params.iterations; ++it) {
      if (params.spatial_weight != 0.0) {
        if (exact_s) {
          exact_s->apply(q_road, msg_s_road);
          exact_s->apply(q_bg, msg_s_bg);
        } else {
          crf_detail::gaussian_blur_normalized(q_road, msg_s_road, h, w, params.spatial_sigma);
          crf_detail::gaussian_blur_normalized(q_bg, msg_s_bg, h, w, params.spatial_sigma);
        }
      }
      if (params.bilateral_weight != 0.0) {
        if (exact_b) {
          exact_b->apply(q_road, msg_b_road);
          exact_b->apply(q_bg, msg_b_bg);
        } else {
          lattice_b->apply(q_road, msg_b_road);
          lattice_b->apply(q_bg, msg_b_bg);
        }
      }
      // Potts: label l pays for neighbour mass on the other label.
      for (std::size_t i = 0; i < n; ++i) {
        e_road[i] = u_road[i] + params.spatial_weight * msg_s_bg[i] + params.bilateral_weight * msg_b_bg[i];
        e_bg[i] = u_bg[i] + params.spatial_weight * msg_s_road[i] + params.bilateral_weight * msg_b_road[i];
      }
      normalize(e_road, e_bg);
    }
  }
  MeanFieldResult result{Grid<double>(h, w), max_err};
  result.q_road.data() = std::move(q_road);
  return result;
}

// Per-pixel argmax of the mean-field marginals; ties go to road. Without a
// pairwise term the argmax is p >= 0.5, decided on p itself so that
// round-off in the unaries cannot flip pixels within an ulp of 0.5.
inline Mask crf_refine(const RgbImage& image, const FusedLabel& fused, const CrfParams& params,
                       MessagePassing method = MessagePassing::approximate) {
  if (image.size() != fused.values.size()) throw std::invalid_argument("crf: image and label dimensions differ");
  if (params.iterations == 0 || (params.spatial_weight == 0.0 && params.bilateral_weight == 0.0)) {
    return binarize(fused.values, 0.5);
  }
  const MeanFieldResult mf = mean_field(image, fused.values, params, method);
  Mask m(mf.q_road.height(), mf.q_road.width());
  for (std::size_t i = 0; i < m.count(); ++i) m.data()[i] = mf.q_road.data()[i] >= 0.5 ? 1 : 0;
  return m;
}

}  // namespace trajlabel
