#pragma once

#include <memory>
#include <string>

#include "gapnas/data.hpp"
#include "gapnas/models.hpp"

namespace gapnas {

enum class AdvLoss { kHinge, kNonSaturating };

std::string_view loss_name(AdvLoss l);
AdvLoss parse_loss(std::string_view name);

// Score batches are [B] or [B, 1]. D minimizes d_loss; G minimizes g_loss.
Var hinge_d_loss(Var real_scores, Var fake_scores);
Var hinge_g_loss(Var fake_scores);
Var nonsat_d_loss(Var real_scores, Var fake_scores);
Var nonsat_g_loss(Var fake_scores);
Var d_loss(AdvLoss loss, Var real_scores, Var fake_scores);
Var g_loss(AdvLoss loss, Var fake_scores);
/// Canonical zero-sum payoff Adv = -d_loss: D maximizes it, G minimizes it.
Var adv_payoff(AdvLoss loss, Var real_scores, Var fake_scores);

/// Inputs for one evaluation of the game. Analytic games ignore it.
struct GameBatch {
  Tensor real;
  Tensor z;
};

struct EvalOptions {
  /// Noise for Gumbel relaxation (required only in that mode).
  Rng* gumbel = nullptr;
  /// Update batch-norm running statistics (generator training steps only).
  bool update_stats = false;
};

/// Two-player zero-sum game Adv(G, D): D maximizes, G minimizes.
class Game {
 public:
  virtual ~Game() = default;
  virtual std::string name() const = 0;
  virtual GameBatch sample(Split split, Rng& rng) const = 0;
  virtual Var payoff(Tape& tape, Player& g, Player& d, const GameBatch& batch, const EvalOptions& opt) const = 0;
  /// Objective D minimizes while training (defaults to -payoff).
  virtual Var d_loss(Tape& tape, Player& g, Player& d, const GameBatch& batch, const EvalOptions& opt) const;
  /// Objective G minimizes while training (defaults to payoff).
  virtual Var g_loss(Tape& tape, Player& g, Player& d, const GameBatch& batch, const EvalOptions& opt) const;
};

/// GAN game over GeneratorNet / DiscriminatorNet players.
class GanGame : public Game {
 public:
  GanGame(std::shared_ptr<const Dataset> data, AdvLoss loss, std::int64_t batch_size, int latent_dim);

  std::string name() const override { return "gan:" + data_->name(); }
  GameBatch sample(Split split, Rng& rng) const override;
  Var payoff(Tape& tape, Player& g, Player& d, const GameBatch& batch, const EvalOptions& opt) const override;
  Var d_loss(Tape& tape, Player& g, Player& d, const GameBatch& batch, const EvalOptions& opt) const override;
  Var g_loss(Tape& tape, Player& g, Player& d, const GameBatch& batch, const EvalOptions& opt) const override;

  const Dataset& data() const { return *data_; }
  AdvLoss loss() const { return loss_; }
  std::int64_t batch_size() const { return batch_size_; }
  int latent_dim() const { return latent_dim_; }

 private:
  struct Scores {
    Var real;
    Var fake;
  };
  Scores scores(Tape& tape, Player& g, Player& d, const GameBatch& batch, const EvalOptions& opt) const;

  std::shared_ptr<const Dataset> data_;
  AdvLoss loss_;
  std::int64_t batch_size_;
  int latent_dim_;
};

/// Player holding a single real vector (analytic games).
class VectorPlayer : public Player {
 public:
  VectorPlayer(std::string name, Tensor value) : p_(make_param(std::move(name), std::move(value))) {}

  const ParamPtr& param() const { return p_; }
  const Tensor& value() const { return p_->value; }
  ParamList weights() const override { return {p_}; }
  ParamList arch() const override { return {}; }
  std::unique_ptr<Player> clone(ArchCloning) const override {
    return std::make_unique<VectorPlayer>(p_->name, p_->value);
  }

 private:
  ParamPtr p_;
};

/// Game with closed-form best responses and an exact duality gap.
class AnalyticGame : public Game {
 public:
  GameBatch sample(Split, Rng&) const override { return {}; }
  Var payoff(Tape& tape, Player& g, Player& d, const GameBatch& batch, const EvalOptions& opt) const override;

  virtual int x_dim() const = 0;
  virtual int y_dim() const = 0;
  /// Adv(x, y) on the tape; x belongs to the minimizing player.
  virtual Var adv(Var x, Var y) const = 0;
  virtual double adv_value(const Tensor& x, const Tensor& y) const = 0;
  /// max_y Adv(x, y).
  virtual double max_over_y(const Tensor& x) const = 0;
  /// min_x Adv(x, y).
  virtual double min_over_x(const Tensor& y) const = 0;
  virtual Tensor nash_x() const { return Tensor({x_dim()}, 0.0); }
  virtual Tensor nash_y() const { return Tensor({y_dim()}, 0.0); }

  /// V(x, y) = max_y' Adv(x, y') - min_x' Adv(x', y).
  double exact_gap(const Tensor& x, const Tensor& y) const { return max_over_y(x) - min_over_x(y); }
};

/// Adv(x, y) = |x|^2 - |y|^2; Nash at the origin, V = |x|^2 + |y|^2.
class QuadraticGame : public AnalyticGame {
 public:
  explicit QuadraticGame(int dim = 1);
  std::string name() const override { return "quadratic"; }
  int x_dim() const override { return dim_; }
  int y_dim() const override { return dim_; }
  Var adv(Var x, Var y) const override;
  double adv_value(const Tensor& x, const Tensor& y) const override;
  double max_over_y(const Tensor& x) const override;
  double min_over_x(const Tensor& y) const override;

 private:
  int dim_;
};

/// Adv(x, y) = x^T A y + (lambda / 2)(|x|^2 - |y|^2), lambda > 0.
class BilinearRegularizedGame : public AnalyticGame {
 public:
  BilinearRegularizedGame(Tensor a, double lambda);
  std::string name() const override { return "bilinear"; }
  int x_dim() const override { return static_cast<int>(a_.dim(0)); }
  int y_dim() const override { return static_cast<int>(a_.dim(1)); }
  Var adv(Var x, Var y) const override;
  double adv_value(const Tensor& x, const Tensor& y) const override;
  double max_over_y(const Tensor& x) const override;
  double min_over_x(const Tensor& y) const override;
  /// argmax_y Adv(x, y) = A^T x / lambda.
  Tensor best_y(const Tensor& x) const;
  /// argmin_x Adv(x, y) = -A y / lambda.
  Tensor best_x(const Tensor& y) const;

 private:
  Tensor a_;
  double lambda_;
};

}  // namespace gapnas
