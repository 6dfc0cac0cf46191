#include "gapnas/metrics.hpp"

#include <algorithm>
#include <cmath>

#include "gapnas/error.hpp"
#include "gapnas/rng.hpp"

namespace gapnas {

namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

Eigen::Map<const RowMatrix> as_rows(const Tensor& t) {
  if (t.rank() < 1) throw ShapeError("expected a batch of samples, got a scalar");
  const auto n = static_cast<Eigen::Index>(t.dim(0));
  return {t.data().data(), n, static_cast<Eigen::Index>(t.size()) / n};
}

Eigen::MatrixXd psd_sqrt(const Eigen::MatrixXd& m) {
  const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (m + m.transpose()));
  const Eigen::VectorXd root = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return es.eigenvectors() * root.asDiagonal() * es.eigenvectors().transpose();
}

}  // namespace

void SampleStats::check_psd() const {
  if (cov.rows() != mean.size() || cov.cols() != mean.size()) throw ShapeError("sample stats: covariance shape mismatch");
  const double scale = std::max(1.0, cov.cwiseAbs().maxCoeff());
  if ((cov - cov.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale) {
    throw NumericalError("sample stats: covariance is not symmetric");
  }
  const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cov, Eigen::EigenvaluesOnly);
  if (es.eigenvalues().minCoeff() < -1e-10 * scale) throw NumericalError("sample stats: covariance is not PSD");
}

SampleStats fit_stats(const Tensor& samples) {
  const auto x = as_rows(samples);
  if (x.rows() < 2) throw ConfigError("fit_stats needs at least two samples");
  SampleStats s;
  s.n = x.rows();
  s.mean = x.colwise().mean().transpose();
  const Eigen::MatrixXd centered = x.rowwise() - s.mean.transpose();
  s.cov = centered.transpose() * centered / static_cast<double>(s.n - 1);
  s.cov = 0.5 * (s.cov + s.cov.transpose());
  return s;
}

double frechet_distance(const SampleStats& a, const SampleStats& b) {
  if (a.dim() != b.dim()) throw ShapeError("frechet_distance: dimension mismatch");
  if (a.n < a.dim() + 1 || b.n < b.dim() + 1) {
    throw ConfigError("frechet_distance: stats need at least dim + 1 samples");
  }
  a.check_psd();
  b.check_psd();
  // Tr (S_a S_b)^{1/2} = Tr (S_a^{1/2} S_b S_a^{1/2})^{1/2}, a symmetric PSD product.
  const Eigen::MatrixXd ra = psd_sqrt(a.cov);
  const Eigen::MatrixXd inner = ra * b.cov * ra;
  const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (inner + inner.transpose()), Eigen::EigenvaluesOnly);
  const double cross = es.eigenvalues().cwiseMax(0.0).cwiseSqrt().sum();
  const double d2 = (a.mean - b.mean).squaredNorm() + a.cov.trace() + b.cov.trace() - 2.0 * cross;
  return std::max(d2, 0.0);
}

ModeReport mode_coverage(const Tensor& samples, const Tensor& centers, double radius) {
  if (!(radius > 0.0)) throw ConfigError("mode_coverage: radius must be > 0");
  const auto x = as_rows(samples);
  const auto c = as_rows(centers);
  if (x.cols() != c.cols()) throw ShapeError("mode_coverage: sample and center dimensions differ");
  const double r2 = radius * radius;
  std::vector<char> hit(static_cast<std::size_t>(c.rows()), 0);
  std::int64_t good = 0;
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    bool near = false;
    for (Eigen::Index k = 0; k < c.rows(); ++k) {
      if ((x.row(i) - c.row(k)).squaredNorm() <= r2) {
        hit[static_cast<std::size_t>(k)] = 1;
        near = true;
      }
    }
    good += near ? 1 : 0;
  }
  ModeReport r;
  r.modes_hit = static_cast<int>(std::count(hit.begin(), hit.end(), 1));
  r.high_quality_fraction = static_cast<double>(good) / static_cast<double>(x.rows());
  return r;
}

std::vector<double> moving_average(const std::vector<double>& values, int window) {
  if (window < 1) throw ConfigError("moving_average: window must be >= 1");
  std::vector<double> out(values.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < values.size(); ++i) {
    sum += values[i];
    if (i >= static_cast<std::size_t>(window)) sum -= values[i - static_cast<std::size_t>(window)];
    out[i] = sum / static_cast<double>(std::min(i + 1, static_cast<std::size_t>(window)));
  }
  return out;
}

Tensor projection_features(const Tensor& images, int dim, std::uint64_t seed) {
  if (dim < 1) throw ConfigError("projection_features: dim must be >= 1");
  const auto x = as_rows(images);
  Rng rng = derive_rng(seed, "feature-projection");
  const Tensor p = randn({x.cols(), dim}, rng, 1.0 / std::sqrt(static_cast<double>(x.cols())));
  Tensor out({x.rows(), dim});
  Eigen::Map<RowMatrix>(out.data().data(), x.rows(), dim) =
      x * Eigen::Map<const RowMatrix>(p.data().data(), x.cols(), dim);
  return out;
}

}  // namespace gapnas
