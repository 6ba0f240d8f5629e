#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

namespace trajlabel {

// Gaussian filtering in a d-dimensional feature space on the permutohedral
// lattice (splat, blur along the d+1 lattice axes, slice). Features must be
// pre-scaled by the inverse standard deviation of each dimension. The lattice
// approximates sum_j exp(-|f_i - f_j|^2 / 2) v_j up to a global scale, so
// callers use it for normalised filtering.
class PermutohedralLattice {
 public:
  PermutohedralLattice(std::span<const float> features, int dim) : d_(dim) {
    if (dim <= 0 || features.size() % static_cast<std::size_t>(dim) != 0) {
      throw std::invalid_argument("PermutohedralLattice: bad feature layout");
    }
    n_ = static_cast<int>(features.size() / dim);
    build(features);
  }

  int lattice_points() const { return static_cast<int>(keys_.size() / d_); }

  // in, out: n x value_dim, row-major.
  void filter(std::span<const double> in, std::span<double> out, int value_dim) const {
    const int d1 = d_ + 1;
    const int m = lattice_points();
    std::vector<double> values(static_cast<std::size_t>(m + 1) * value_dim, 0.0);
    std::vector<double> scratch(values.size(), 0.0);
    // splat; slot m is a zero sink for missing neighbours
    for (int i = 0; i < n_; ++i) {
      for (int k = 0; k < d1; ++k) {
        const std::size_t s = static_cast<std::size_t>(i) * d1 + k;
        const double w = weights_[s];
        double* dst = values.data() + static_cast<std::size_t>(offsets_[s]) * value_dim;
        const double* src = in.data() + static_cast<std::size_t>(i) * value_dim;
        for (int c = 0; c < value_dim; ++c) dst[c] += w * src[c];
      }
    }
    // blur
    for (int j = 0; j < d1; ++j) {
      for (int p = 0; p < m; ++p) {
        const int n1 = neighbours_[(static_cast<std::size_t>(j) * m + p) * 2];
        const int n2 = neighbours_[(static_cast<std::size_t>(j) * m + p) * 2 + 1];
        const double* c0 = values.data() + static_cast<std::size_t>(p) * value_dim;
        const double* a = values.data() + static_cast<std::size_t>(n1) * value_dim;
        const double* b = values.data() + static_cast<std::size_t>(n2) * value_dim;
        double* dst = scratch.data() + static_cast<std::size_t>(p) * value_dim;
        for (int c = 0; c < value_dim; ++c) dst[c] = 0.5 * c0[c] + 0.25 * (a[c] + b[c]);
      }
      std::swap(values, scratch);
      std::fill(values.begin() + static_cast<std::ptrdiff_t>(m) * value_dim, values.end(), 0.0);
    }
    // slice
    for (int i = 0; i < n_; ++i) {
      double* dst = out.data() + static_cast<std::size_t>(i) * value_dim;
      std::fill(dst, dst + value_dim, 0.0);
      for (int k = 0; k < d1; ++k) {
        const std::size_t s = static_cast<std::size_t>(i) * d1 + k;
        const double w = weights_[s];
        const double* src = values.data() + static_cast<std::size_t>(offsets_[s]) * value_dim;
        for (int c = 0; c < value_dim; ++c) dst[c] += w * src[c];
      }
    }
  }

 private:
  // Open-addressing table of d-dimensional integer keys.
  class KeyTable {
   public:
    explicit KeyTable(int dim, std::size_t expected) : d_(dim) {
      std::size_t cap = 64;
      while (cap < expected * 2) cap <<= 1;
      slots_.assign(cap, -1);
    }

    int find_or_insert(const std::int16_t* key, std::vector<std::int16_t>& keys) {
      if ((count_ + 1) * 2 > slots_.size()) grow(keys);
      std::size_t h = hash(key) & (slots_.size() - 1);
      while (true) {
        const int idx = slots_[h];
        if (idx < 0) {
          slots_[h] = count_;
          keys.insert(keys.end(), key, key + d_);
          return static_cast<int>(count_++);
        }
        if (std::equal(key, key + d_, keys.data() + static_cast<std::size_t>(idx) * d_)) return idx;
        h = (h + 1) & (slots_.size() - 1);
      }
    }

    int find(const std::int16_t* key, const std::vector<std::int16_t>& keys) const {
      std::size_t h = hash(key) & (slots_.size() - 1);
      while (true) {
        const int idx = slots_[h];
        if (idx < 0) return -1;
        if (std::equal(key, key + d_, keys.data() + static_cast<std::size_t>(idx) * d_)) return idx;
        h = (h + 1) & (slots_.size() - 1);
      }
    }

   private:
    std::size_t hash(const std::int16_t* key) const {
      std::uint64_t h = 1469598103934665603ull;
      for (int i = 0; i < d_; ++i) {
        h ^= static_cast<std::uint16_t>(key[i]);
        h *= 1099511628211ull;
      }
      return static_cast<std::size_t>(h ^ (h >> 29));
    }

    void grow(const std::vector<std::int16_t>& keys) {
      std::vector<int> old(slots_.size() * 2, -1);
      slots_.swap(old);
      for (int idx : old) {
        if (idx < 0) continue;
        std::size_t h = hash(keys.data() + static_cast<std::size_t>(idx) * d_) & (slots_.size() - 1);
        while (slots_[h] >= 0) h = (h + 1) & (slots_.size() - 1);
        slots_[h] = idx;
      }
    }

    int d_;
    std::vector<int> slots_;
    std::size_t count_ = 0;
  };

  void build(std::span<const float> features) {
    const int d = d_;
    const int d1 = d + 1;
    offsets_.assign(static_cast<std::size_t>(n_) * d1, 0);
    weights_.assign(static_cast<std::size_t>(n_) * d1, 0.0);

    std::vector<double> scale(d);
    const double inv_std = std::sqrt(2.0 / 3.0) * d1;
    for (int i = 0; i < d; ++i) scale[i] = inv_std / std::sqrt((i + 1.0) * (i + 2.0));

    std::vector<int> canonical(static_cast<std::size_t>(d1) * d1);
    for (int i = 0; i <= d; ++i) {
      for (int j = 0; j <= d - i; ++j) canonical[i * d1 + j] = i;
      for (int j = d - i + 1; j <= d; ++j) canonical[i * d1 + j] = i - d1;
    }

    KeyTable table(d, static_cast<std::size_t>(n_) * d1 / 4 + 16);
    std::vector<double> elevated(d1), barycentric(d + 2);
    std::vector<int> rem0(d1), rank(d1);
    std::vector<std::int16_t> key(d);
    for (int p = 0; p < n_; ++p) {
      const float* f = features.data() + static_cast<std::size_t>(p) * d;
      double sm = 0.0;
      for (int j = d; j > 0; --j) {
        const double cf = f[j - 1] * scale[j - 1];
        elevated[j] = sm - j * cf;
        sm += cf;
      }
      elevated[0] = sm;

      int sum = 0;
      for (int i = 0; i <= d; ++i) {
        const double v = elevated[i] / d1;
        const int up = static_cast<int>(std::ceil(v)) * d1;
        const int down = static_cast<int>(std::floor(v)) * d1;
        rem0[i] = (up - elevated[i] < elevated[i] - down) ? up : down;
        sum += rem0[i];
      }
      sum /= d1;

      std::fill(rank.begin(), rank.end(), 0);
      for (int i = 0; i < d; ++i) {
        const double di = elevated[i] - rem0[i];
        for (int j = i + 1; j <= d; ++j) {
          if (di < elevated[j] - rem0[j]) {
            ++rank[i];
          } else {
            ++rank[j];
          }
        }
      }
      if (sum > 0) {
        for (int i = 0; i <= d; ++i) {
          if (rank[i] >= d1 - sum) {
            rem0[i] -= d1;
            rank[i] += sum - d1;
          } else {
            rank[i] += sum;
          }
        }
      } else if (sum < 0) {
        for (int i = 0; i <= d; ++i) {
          if (rank[i] < -sum) {
            rem0[i] += d1;
            rank[i] += d1 + sum;
          } else {
            rank[i] += sum;
          }
        }
      }

      std::fill(barycentric.begin(), barycentric.end(), 0.0);
      for (int i = 0; i <= d; ++i) {
        const double v = (elevated[i] - rem0[i]) / d1;
        barycentric[d - rank[i]] += v;
        barycentric[d1 - rank[i]] -= v;
      }
      barycentric[0] += 1.0 + barycentric[d1];

      for (int k = 0; k <= d; ++k) {
        for (int i = 0; i < d; ++i) key[i] = static_cast<std::int16_t>(rem0[i] + canonical[k * d1 + rank[i]]);
        const std::size_t s = static_cast<std::size_t>(p) * d1 + k;
        offsets_[s] = table.find_or_insert(key.data(), keys_);
        weights_[s] = barycentric[k];
      }
    }

    const int m = lattice_points();
    neighbours_.assign(static_cast<std::size_t>(d1) * m * 2, m);
    std::vector<std::int16_t> n1(d1), n2(d1);
    for (int j = 0; j <= d; ++j) {
      for (int p = 0; p < m; ++p) {
        const std::int16_t* k = keys_.data() + static_cast<std::size_t>(p) * d;
        for (int i = 0; i < d; ++i) {
          n1[i] = static_cast<std::int16_t>(k[i] + 1);
          n2[i] = static_cast<std::int16_t>(k[i] - 1);
        }
        if (j < d) {
          n1[j] = static_cast<std::int16_t>(k[j] - d);
          n2[j] = static_cast<std::int16_t>(k[j] + d);
        }
        const int a = table.find(n1.data(), keys_);
        const int b = table.find(n2.data(), keys_);
        neighbours_[(static_cast<std::size_t>(j) * m + p) * 2] = a < 0 ? m : a;
        neighbours_[(static_cast<std::size_t>(j) * m + p) * 2 + 1] = b < 0 ? m : b;
      }
    }
  }

  int d_;
  int n_ = 0;
  std::vector<std::int16_t> keys_;
  std::vector<int> offsets_;
  std::vector<double> weights_;
  std::vector<int> neighbours_;
};

}  // namespace trajlabel
