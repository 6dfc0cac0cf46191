#include "gapnas/games.hpp"

#include <Eigen/Dense>

#include "gapnas/error.hpp"
#include "gapnas/ops.hpp"

namespace gapnas {

namespace {

void check_scores(Var s, const char* what) {
  if (s.value().size() == 0 || s.shape().empty() || s.shape()[0] == 0) {
    throw ShapeError(std::string(what) + ": empty score batch");
  }
}

Eigen::Map<const Eigen::VectorXd> as_vec(const Tensor& t) {
  return {t.data().data(), static_cast<Eigen::Index>(t.size())};
}

VectorPlayer& as_vector_player(Player& p) {
  auto* v = dynamic_cast<VectorPlayer*>(&p);
  if (v == nullptr) throw Error("analytic games need VectorPlayer players");
  return *v;
}

}  // namespace

std::string_view loss_name(AdvLoss l) { return l == AdvLoss::kHinge ? "hinge" : "nonsat"; }

AdvLoss parse_loss(std::string_view name) {
  if (name == "hinge") return AdvLoss::kHinge;
  if (name == "nonsat") return AdvLoss::kNonSaturating;
  throw ConfigError("unknown loss '" + std::string(name) + "' (hinge or nonsat)");
}

Var hinge_d_loss(Var real_scores, Var fake_scores) {
  check_scores(real_scores, "hinge_d_loss");
  check_scores(fake_scores, "hinge_d_loss");
  return ops::add(ops::mean(ops::relu(ops::shift(ops::scale(real_scores, -1.0), 1.0))),
                  ops::mean(ops::relu(ops::shift(fake_scores, 1.0))));
}

Var hinge_g_loss(Var fake_scores) {
  check_scores(fake_scores, "hinge_g_loss");
  return ops::scale(ops::mean(fake_scores), -1.0);
}

Var nonsat_d_loss(Var real_scores, Var fake_scores) {
  check_scores(real_scores, "nonsat_d_loss");
  check_scores(fake_scores, "nonsat_d_loss");
  return ops::add(ops::mean(ops::softplus(ops::scale(real_scores, -1.0))), ops::mean(ops::softplus(fake_scores)));
}

Var nonsat_g_loss(Var fake_scores) {
  check_scores(fake_scores, "nonsat_g_loss");
  return ops::mean(ops::softplus(ops::scale(fake_scores, -1.0)));
}

Var d_loss(AdvLoss loss, Var real_scores, Var fake_scores) {
  return loss == AdvLoss::kHinge ? hinge_d_loss(real_scores, fake_scores) : nonsat_d_loss(real_scores, fake_scores);
}

Var g_loss(AdvLoss loss, Var fake_scores) {
  return loss == AdvLoss::kHinge ? hinge_g_loss(fake_scores) : nonsat_g_loss(fake_scores);
}

Var adv_payoff(AdvLoss loss, Var real_scores, Var fake_scores) {
  return ops::scale(d_loss(loss, real_scores, fake_scores), -1.0);
}

Var Game::d_loss(Tape& tape, Player& g, Player& d, const GameBatch& batch, const EvalOptions& opt) const {
  return ops::scale(payoff(tape, g, d, batch, opt), -1.0);
}

Var Game::g_loss(Tape& tape, Player& g, Player& d, const GameBatch& batch, const EvalOptions& opt) const {
  return payoff(tape, g, d, batch, opt);
}

// ---------------------------------------------------------------------------

GanGame::GanGame(std::shared_ptr<const Dataset> data, AdvLoss loss, std::int64_t batch_size, int latent_dim)
    : data_(std::move(data)), loss_(loss), batch_size_(batch_size), latent_dim_(latent_dim) {
  if (!data_) throw ConfigError("gan game needs a dataset");
  if (batch_size_ < 1) throw ConfigError("batch size must be >= 1");
  if (latent_dim_ < 1) throw ConfigError("latent_dim must be >= 1");
}

GameBatch GanGame::sample(Split split, Rng& rng) const {
  GameBatch b;
  b.real = data_->batch(split, batch_size_, rng);
  b.z = randn({batch_size_, latent_dim_}, rng);
  return b;
}

GanGame::Scores GanGame::scores(Tape& tape, Player& g, Player& d, const GameBatch& batch,
                                const EvalOptions& opt) const {
  auto* gen = dynamic_cast<GeneratorNet*>(&g);
  auto* dis = dynamic_cast<DiscriminatorNet*>(&d);
  if (gen == nullptr || dis == nullptr) throw Error("gan game needs GeneratorNet and DiscriminatorNet players");
  const auto bn = opt.update_stats ? ops::BatchNormMode::kTrain : ops::BatchNormMode::kTrainFrozen;
  const Var fake = gen->forward(tape, tape.constant(batch.z), opt.gumbel, bn);
  return {dis->forward(tape, tape.constant(batch.real), opt.gumbel), dis->forward(tape, fake, opt.gumbel)};
}

Var GanGame::payoff(Tape& tape, Player& g, Player& d, const GameBatch& batch, const EvalOptions& opt) const {
  const auto s = scores(tape, g, d, batch, opt);
  return adv_payoff(loss_, s.real, s.fake);
}

Var GanGame::d_loss(Tape& tape, Player& g, Player& d, const GameBatch& batch, const EvalOptions& opt) const {
  const auto s = scores(tape, g, d, batch, opt);
  return gapnas::d_loss(loss_, s.real, s.fake);
}

Var GanGame::g_loss(Tape& tape, Player& g, Player& d, const GameBatch& batch, const EvalOptions& opt) const {
  auto* gen = dynamic_cast<GeneratorNet*>(&g);
  auto* dis = dynamic_cast<DiscriminatorNet*>(&d);
  if (gen == nullptr || dis == nullptr) throw Error("gan game needs GeneratorNet and DiscriminatorNet players");
  const auto bn = opt.update_stats ? ops::BatchNormMode::kTrain : ops::BatchNormMode::kTrainFrozen;
  const Var fake = gen->forward(tape, tape.constant(batch.z), opt.gumbel, bn);
  return gapnas::g_loss(loss_, dis->forward(tape, fake, opt.gumbel));
}

// ---------------------------------------------------------------------------

Var AnalyticGame::payoff(Tape& tape, Player& g, Player& d, const GameBatch&, const EvalOptions&) const {
  return adv(tape.param(as_vector_player(g).param()), tape.param(as_vector_player(d).param()));
}

QuadraticGame::QuadraticGame(int dim) : dim_(dim) {
  if (dim < 1) throw ConfigError("quadratic game dimension must be >= 1");
}

Var QuadraticGame::adv(Var x, Var y) const { return ops::sub(ops::sum(ops::mul(x, x)), ops::sum(ops::mul(y, y))); }

double QuadraticGame::adv_value(const Tensor& x, const Tensor& y) const {
  return as_vec(x).squaredNorm() - as_vec(y).squaredNorm();
}

double QuadraticGame::max_over_y(const Tensor& x) const { return as_vec(x).squaredNorm(); }

double QuadraticGame::min_over_x(const Tensor& y) const { return -as_vec(y).squaredNorm(); }

BilinearRegularizedGame::BilinearRegularizedGame(Tensor a, double lambda) : a_(std::move(a)), lambda_(lambda) {
  if (a_.rank() != 2) throw ShapeError("bilinear game: coupling matrix must be 2-D, got " + shape_str(a_.shape()));
  if (!(lambda_ > 0.0)) throw ConfigError("bilinear game: regularization must be > 0 (best responses unbounded)");
}

namespace {

Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> as_mat(const Tensor& t) {
  return {t.data().data(), static_cast<Eigen::Index>(t.dim(0)), static_cast<Eigen::Index>(t.dim(1))};
}

Tensor from_vec(const Eigen::VectorXd& v) {
  return Tensor({v.size()}, std::vector<double>(v.data(), v.data() + v.size()));
}

}  // namespace

Var BilinearRegularizedGame::adv(Var x, Var y) const {
  Tape& tape = *x.tape();
  const Var xr = ops::reshape(x, {1, x_dim()});
  const Var yc = ops::reshape(y, {y_dim(), 1});
  const Var coupling = ops::sum(ops::matmul(ops::matmul(xr, tape.constant(a_)), yc));
  const Var reg = ops::sub(ops::sum(ops::mul(x, x)), ops::sum(ops::mul(y, y)));
  return ops::add(coupling, ops::scale(reg, lambda_ / 2.0));
}

double BilinearRegularizedGame::adv_value(const Tensor& x, const Tensor& y) const {
  const auto xv = as_vec(x);
  const auto yv = as_vec(y);
  return xv.dot(as_mat(a_) * yv) + lambda_ / 2.0 * (xv.squaredNorm() - yv.squaredNorm());
}

Tensor BilinearRegularizedGame::best_y(const Tensor& x) const {
  return from_vec(as_mat(a_).transpose() * as_vec(x) / lambda_);
}

Tensor BilinearRegularizedGame::best_x(const Tensor& y) const { return from_vec(-(as_mat(a_) * as_vec(y)) / lambda_); }

double BilinearRegularizedGame::max_over_y(const Tensor& x) const { return adv_value(x, best_y(x)); }

double BilinearRegularizedGame::min_over_x(const Tensor& y) const { return adv_value(best_x(y), y); }

}  // namespace gapnas
