#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Dense>

#include "gapnas/tensor.hpp"

namespace gapnas {

/// Gaussian fit of a sample set.
struct SampleStats {
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;
  std::int64_t n = 0;

  int dim() const { return static_cast<int>(mean.size()); }
  /// Throws NumericalError unless cov is symmetric (1e-12) with eigenvalues >= -1e-10.
  void check_psd() const;
};

/// Mean and unbiased covariance of `samples` [N, ...] (trailing axes flattened).
SampleStats fit_stats(const Tensor& samples);

/// Squared 2-Wasserstein distance between the two fitted Gaussians:
/// |mu_a - mu_b|^2 + Tr(S_a + S_b - 2 (S_a S_b)^{1/2}).
double frechet_distance(const SampleStats& a, const SampleStats& b);

struct ModeReport {
  int modes_hit = 0;
  double high_quality_fraction = 0.0;
};

/// `samples` [N, d], `centers` [M, d].
ModeReport mode_coverage(const Tensor& samples, const Tensor& centers, double radius);

/// Trailing moving average; entry i averages the last min(window, i + 1) values.
std::vector<double> moving_average(const std::vector<double>& values, int window);

/// Fixed random projection of flattened images to `dim` features. The
/// projection depends only on `seed` and the input size.
Tensor projection_features(const Tensor& images, int dim = 16, std::uint64_t seed = 0x5eed);

}  // namespace gapnas
