#include "gapnas/data.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include "gapnas/error.hpp"

namespace gapnas {

namespace {

Tensor gather_rows(const Tensor& samples, const std::vector<std::int64_t>& rows) {
  Shape shape = samples.shape();
  const std::size_t stride = samples.size() / static_cast<std::size_t>(shape[0]);
  shape[0] = static_cast<std::int64_t>(rows.size());
  Tensor out(shape);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    std::copy_n(samples.data().begin() + static_cast<std::ptrdiff_t>(static_cast<std::size_t>(rows[i]) * stride),
                stride, out.data().begin() + static_cast<std::ptrdiff_t>(i * stride));
  }
  return out;
}

}  // namespace

Dataset::Dataset(std::string name, const Tensor& samples, Rng& rng, double train_fraction)
    : name_(std::move(name)), all_(samples) {
  if (samples.rank() < 2 || samples.dim(0) < 2) throw ConfigError("dataset " + name_ + " needs at least two samples");
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) throw ConfigError("split ratio must be in (0, 1)");
  sample_shape_.assign(samples.shape().begin() + 1, samples.shape().end());
  std::vector<std::int64_t> order(static_cast<std::size_t>(samples.dim(0)));
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  const auto n = static_cast<double>(order.size());
  const auto half = static_cast<std::ptrdiff_t>(std::clamp(std::round(train_fraction * n), 1.0, n - 1.0));
  train_idx_.assign(order.begin(), order.begin() + half);
  val_idx_.assign(order.begin() + half, order.end());
  std::sort(train_idx_.begin(), train_idx_.end());
  std::sort(val_idx_.begin(), val_idx_.end());
  train_ = gather_rows(samples, train_idx_);
  val_ = gather_rows(samples, val_idx_);
}

Dataset Dataset::resplit(double train_fraction, Rng& rng) const {
  Dataset out(name_, all_, rng, train_fraction);
  out.modes = modes;
  out.mode_std = mode_std;
  return out;
}

Tensor Dataset::batch(Split s, std::int64_t size, Rng& rng) const {
  if (size < 1) throw ConfigError("batch size must be >= 1");
  const Tensor& src = split(s);
  std::uniform_int_distribution<std::int64_t> pick(0, src.dim(0) - 1);
  std::vector<std::int64_t> rows(static_cast<std::size_t>(size));
  for (auto& r : rows) r = pick(rng);
  return gather_rows(src, rows);
}

Dataset make_ring8(std::int64_t n, Rng& rng, double radius, double std) {
  std::vector<std::array<double, 2>> modes;
  for (int k = 0; k < 8; ++k) {
    const double a = 2.0 * std::numbers::pi * k / 8.0;
    modes.push_back({radius * std::cos(a), radius * std::sin(a)});
  }
  Tensor x({n, 2});
  std::uniform_int_distribution<int> comp(0, 7);
  for (std::int64_t i = 0; i < n; ++i) {
    const auto& m = modes[static_cast<std::size_t>(comp(rng))];
    x[static_cast<std::size_t>(2 * i)] = m[0] + std * standard_normal(rng);
    x[static_cast<std::size_t>(2 * i + 1)] = m[1] + std * standard_normal(rng);
  }
  Dataset d("ring8", x, rng);
  d.modes = std::move(modes);
  d.mode_std = std;
  return d;
}

Tensor linear_pushforward_matrix(int latent_dim, int data_dim, Rng& matrix_rng, double scale) {
  return randn({latent_dim, data_dim}, matrix_rng, scale / std::sqrt(static_cast<double>(latent_dim)));
}

Dataset make_linear_pushforward(std::int64_t n, int latent_dim, int data_dim, Rng& matrix_rng, Rng& rng,
                                double scale) {
  const Tensor a = linear_pushforward_matrix(latent_dim, data_dim, matrix_rng, scale);
  Tensor x({n, data_dim}, 0.0);
  std::vector<double> z(static_cast<std::size_t>(latent_dim));
  for (std::int64_t i = 0; i < n; ++i) {
    for (auto& v : z) v = standard_normal(rng);
    for (int j = 0; j < data_dim; ++j) {
      double s = 0.0;
      for (int k = 0; k < latent_dim; ++k) s += z[static_cast<std::size_t>(k)] * a[static_cast<std::size_t>(k * data_dim + j)];
      x[static_cast<std::size_t>(i * data_dim + j)] = s;
    }
  }
  return Dataset("linear", x, rng);
}

Dataset make_shapes(std::int64_t n, int size, Rng& rng) {
  if (size < 8) throw ConfigError("shapes dataset needs images of at least 8x8");
  constexpr int kSuper = 4;  // supersampling per axis for anti-aliasing
  Tensor x({n, 1, size, size}, -1.0);
  const double s = size;
  for (std::int64_t i = 0; i < n; ++i) {
    const bool disc = uniform01(rng) < 0.5;
    const double extent = s * (0.15 + 0.25 * uniform01(rng));  // radius or half side
    const double cx = extent + (s - 2.0 * extent) * uniform01(rng);
    const double cy = extent + (s - 2.0 * extent) * uniform01(rng);
    const double aspect = 0.6 + 0.8 * uniform01(rng);
    const double hx = extent, hy = std::min(extent * aspect, s / 2.0);
    auto inside = [&](double px, double py) {
      if (disc) return (px - cx) * (px - cx) + (py - cy) * (py - cy) <= extent * extent;
      return std::abs(px - cx) <= hx && std::abs(py - cy) <= hy;
    };
    for (int r = 0; r < size; ++r) {
      for (int c = 0; c < size; ++c) {
        int hits = 0;
        for (int sr = 0; sr < kSuper; ++sr) {
          for (int sc = 0; sc < kSuper; ++sc) {
            hits += inside(c + (sc + 0.5) / kSuper, r + (sr + 0.5) / kSuper) ? 1 : 0;
          }
        }
        const double coverage = static_cast<double>(hits) / (kSuper * kSuper);
        x[static_cast<std::size_t>((i * size + r) * size + c)] = 2.0 * coverage - 1.0;
      }
    }
  }
  return Dataset("shapes", x, rng);
}

}  // namespace gapnas
