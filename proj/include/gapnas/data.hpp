#pragma once

#include <array>
#include <string>
#include <vector>

#include "gapnas/rng.hpp"
#include "gapnas/tensor.hpp"

namespace gapnas {

enum class Split { kTrain, kValidation };

/// Finite sample set split into disjoint train and validation halves.
class Dataset {
 public:
  Dataset() = default;
  /// `samples` is [N, ...]; a random `train_fraction` of the rows (drawn
  /// from `rng`) becomes the train split, the rest the validation split.
  Dataset(std::string name, const Tensor& samples, Rng& rng, double train_fraction = 0.5);

  /// Same samples split again with a different fraction.
  Dataset resplit(double train_fraction, Rng& rng) const;
  /// Every sample in original order.
  const Tensor& all() const { return all_; }

  const std::string& name() const { return name_; }
  /// Shape of one sample (without the batch axis).
  const Shape& sample_shape() const { return sample_shape_; }
  const Tensor& split(Split s) const { return s == Split::kTrain ? train_ : val_; }
  std::int64_t size(Split s) const { return split(s).dim(0); }
  /// Indices into the original sample order for each split.
  const std::vector<std::int64_t>& indices(Split s) const { return s == Split::kTrain ? train_idx_ : val_idx_; }

  /// `size` rows drawn uniformly with replacement from one split.
  Tensor batch(Split s, std::int64_t size, Rng& rng) const;

  /// Mixture centres for mode-coverage metrics (empty when not a mixture).
  std::vector<std::array<double, 2>> modes;
  double mode_std = 0.0;

 private:
  std::string name_;
  Shape sample_shape_;
  Tensor all_, train_, val_;
  std::vector<std::int64_t> train_idx_, val_idx_;
};

/// Eight Gaussians with std `std` on a circle of radius `radius`.
Dataset make_ring8(std::int64_t n, Rng& rng, double radius = 2.0, double std = 0.02);

/// x = z A with z ~ N(0, I_latent) and a fixed matrix A [latent, data_dim]
/// drawn from `matrix_rng` (entries N(0, scale^2 / latent)).
Dataset make_linear_pushforward(std::int64_t n, int latent_dim, int data_dim, Rng& matrix_rng, Rng& rng,
                                double scale = 1.5);
/// The matrix used by make_linear_pushforward for the same matrix stream.
Tensor linear_pushforward_matrix(int latent_dim, int data_dim, Rng& matrix_rng, double scale = 1.5);

/// Anti-aliased filled rectangles and discs at random positions and sizes,
/// values in [-1, 1] on a single channel.
Dataset make_shapes(std::int64_t n, int size, Rng& rng);

}  // namespace gapnas
