#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "support.hpp"
#include "tnfdt/attack.hpp"
#include "tnfdt/errors.hpp"
#include "tnfdt/losses.hpp"

using namespace tnfdt;
using namespace tnfdt::attack;

namespace {

// Predicts scripted classes per call; zero input gradient.
class ScriptedTarget final : public AttackTarget<float> {
 public:
  // calls[c][i]: prediction for image i at call c (call 0 is the clean pass).
  explicit ScriptedTarget(std::vector<std::vector<int>> calls) : calls_(std::move(calls)) {}
  std::size_t classes() const override { return 2; }
  Tensor logits(const Tensor& images) override {
    const auto& pred = calls_.at(std::min(call_++, calls_.size() - 1));
    Tensor out(Shape(images.shape().n(), 2, 1, 1));
    for (std::size_t i = 0; i < images.shape().n(); ++i) out(i, static_cast<std::size_t>(pred[i]), 0, 0) = 1.0f;
    return out;
  }
  Tensor input_gradient(const Tensor& images, std::span<const int>) override { return Tensor(images.shape()); }

 private:
  std::vector<std::vector<int>> calls_;
  std::size_t call_ = 0;
};

// Always answers `answer(label)`; zero input gradient.
class OracleTarget final : public AttackTarget<float> {
 public:
  explicit OracleTarget(bool right) : right_(right) {}
  void set_labels(std::vector<int> labels) { labels_ = std::move(labels); }
  std::size_t classes() const override { return 3; }
  Tensor logits(const Tensor& images) override {
    Tensor out(Shape(images.shape().n(), 3, 1, 1));
    for (std::size_t i = 0; i < images.shape().n(); ++i) {
      const int l = labels_[offset_ + i];
      out(i, static_cast<std::size_t>(right_ ? l : (l + 1) % 3), 0, 0) = 1.0f;
    }
    return out;
  }
  Tensor input_gradient(const Tensor& images, std::span<const int>) override { return Tensor(images.shape()); }

 private:
  bool right_;
  std::vector<int> labels_;
  std::size_t offset_ = 0;
};

nn::Model<double> linear_model(std::size_t in, std::size_t classes, Rng& rng) {
  nn::ModelSpec spec;
  spec.arch = "linear";
  spec.channels = 1;
  spec.height = 1;
  spec.width = in;
  spec.classes = classes;
  return nn::build_model<double>(spec, rng);
}

nn::Dense<double>& head(nn::Model<double>& m) { return dynamic_cast<nn::Dense<double>&>(m.body().at(0)); }

}  // namespace

TEST_SUITE("attack") {
  TEST_CASE("alpha rule") {
    CHECK(default_alpha(0.1) == doctest::Approx(0.1 / 30).epsilon(1e-15));
    CHECK(std::abs(default_alpha(0.1) - 0.0033333333333333335) < 1e-15);
    AttackConfig cfg;
    cfg.epsilon = 0.1;
    CHECK(cfg.step() == default_alpha(0.1));
    CHECK(cfg.iterations == 40);
    cfg.alpha = 0.5;
    CHECK(cfg.step() == 0.5);
    AttackConfig bad;
    bad.epsilon = -1;
    CHECK_THROWS_AS(bad.validate(), DomainError);
  }

  TEST_CASE("input gradient of a one-pixel linear model") {
    Rng rng(1);
    auto model = linear_model(1, 2, rng);
    head(model).weights = TensorD(Shape(2, 1, 1, 1), {2.0, 0.0});
    head(model).bias = TensorD(Shape(2, 1, 1, 1), 0.0);
    const TensorD x(Shape(1, 1, 1, 1), 0.3);
    // L = -log softmax(2x, 0)[label]; dL/dx = -2 (1 - p0) for label 0 and 2 p0 for label 1.
    const double p0 = 1 / (1 + std::exp(-0.6));
    const std::vector<int> zero{0}, one{1};
    const TensorD g0 = input_gradient(model, x, zero);
    const TensorD g1 = input_gradient(model, x, one);
    CHECK(g0[0] < 0);
    CHECK(g1[0] > 0);
    CHECK(g0[0] == doctest::Approx(-2 * (1 - p0)));
    CHECK(g1[0] == doctest::Approx(2 * p0));
  }

  TEST_CASE("input gradient matches finite differences") {
    Rng rng(2);
    nn::ModelSpec spec;
    spec.arch = "reference";
    spec.height = spec.width = 8;
    spec.classes = 4;
    spec.base_width = 3;
    auto model = nn::build_model<double>(spec, rng);
    // Give BatchNorm non-trivial running statistics.
    model.forward(test::random_tensor<double>(Shape(6, 1, 8, 8), rng), nn::Mode::train);
    model.zero_grad();
    TensorD x = test::random_tensor<double>(Shape(2, 1, 8, 8), rng);
    const std::vector<int> labels{1, 3};
    const TensorD g = input_gradient(model, x, labels);
    const auto loss_at = [&](const TensorD& in) {
      return loss::multiclass_log_loss(labels, loss::ClassMatrix<double>::from_logits(model.logits(in))).loss;
    };
    for (int i = 0; i < 5; ++i) {
      const std::size_t p = rng.int_below(x.size());
      const double saved = x[p], h = 1e-5;
      x[p] = saved + h;
      const double up = loss_at(x);
      x[p] = saved - h;
      const double down = loss_at(x);
      x[p] = saved;
      const double fd = (up - down) / (2 * h);
      CHECK(std::abs(fd - g[p]) / std::max({std::abs(fd), std::abs(g[p]), 1e-3}) < 1e-4);
    }
  }

  TEST_CASE("zero-weight model has zero input gradient") {
    Rng rng(3);
    auto model = linear_model(4, 3, rng);
    std::fill(head(model).weights.values().begin(), head(model).weights.values().end(), 0.0);
    const std::vector<int> labels{2};
    const TensorD g = input_gradient(model, test::random_tensor<double>(Shape(1, 1, 1, 4), rng), labels);
    CHECK(g == TensorD(g.shape(), 0.0));
  }

  TEST_CASE("pgd step") {
    const Tensor x0(Shape(1, 1, 1, 3), {0.5f, 0.5f, 0.5f});
    const Tensor g(Shape(1, 1, 1, 3), {1.0f, -2.0f, 0.0f});
    CHECK(pgd_step(x0, x0, g, 0.1, 0.0) == x0);
    const Tensor x1 = pgd_step(x0, x0, g, 0.0033, 0.1);
    CHECK(x1[0] == doctest::Approx(0.5033));
    CHECK(x1[1] == doctest::Approx(0.4967));
    CHECK(x1[2] == 0.5f);
    CHECK_THROWS_AS(pgd_step(x0, x0, Tensor(Shape(1, 1, 1, 2)), 0.1, 0.1), ShapeError);
  }

  TEST_CASE("pgd budget saturates after 40 steps") {
    Rng rng(4);
    const TensorD x0 = test::random_tensor<double>(Shape(2, 3, 4, 4), rng);
    for (double eps : {1e-1, 1e-2, 1e-3, 1e-4}) {
      TensorD x = x0;
      for (int t = 0; t < 40; ++t) {
        x = pgd_step(x, x0, test::random_tensor<double>(x0.shape(), rng), eps / 30, eps);
        REQUIRE(max_abs(x - x0) <= eps + 1e-7);
      }
      TensorD y = x0;
      const TensorD up(x0.shape(), 1.0);
      for (int t = 0; t < 40; ++t) y = pgd_step(y, x0, up, eps / 30, eps);
      CHECK(max_abs(y - x0) == doctest::Approx(eps));
    }
  }

  TEST_CASE("robust accuracy counting oracle") {
    // Image A correct at all 40 iterations, B at 20, C at none; the clean pass is not counted.
    const std::vector<int> labels{1, 1, 1};
    std::vector<std::vector<int>> calls{{0, 0, 0}};
    for (int t = 0; t < 40; ++t) calls.push_back({1, t < 20 ? 1 : 0, 0});
    ScriptedTarget target(calls);
    AttackConfig cfg;
    cfg.epsilon = 0.1;
    const auto report = score_trajectory(pgd_attack(target, Tensor(Shape(3, 1, 2, 2)), labels, cfg), labels, 0.1);
    CHECK(report.robust_accuracy == 0.5);
    CHECK(report.correct_total() == 60);
    CHECK(report.clean_accuracy == 0.0);
    CHECK(report.iterations == 40);
    CHECK(report.images == 3);
  }

  TEST_CASE("stub models") {
    const std::vector<int> labels{0, 2, 1, 1};
    const Tensor images(Shape(4, 1, 2, 2), 0.25f);
    AttackConfig cfg;
    cfg.epsilon = 0.1;
    OracleTarget right(true), wrong(false);
    right.set_labels(labels);
    wrong.set_labels(labels);
    const auto good = robust_accuracy<float>(right, images, labels, cfg, 0);
    CHECK(good.robust_accuracy == 1.0);
    CHECK(good.clean_accuracy == 1.0);
    CHECK(robust_accuracy<float>(wrong, images, labels, cfg, 0).robust_accuracy == 0.0);
    CHECK_THROWS_AS(robust_accuracy<float>(right, Tensor(Shape(1, 1, 2, 2)), std::span<const int>(), cfg), DomainError);
  }

  TEST_CASE("zero gradients leave every iterate at x0") {
    const std::vector<int> labels{0};
    std::vector<std::vector<int>> calls(41, std::vector<int>{0});
    ScriptedTarget target(calls);
    AttackConfig cfg;
    cfg.epsilon = 0.3;
    const auto tr = pgd_attack(target, Tensor(Shape(1, 1, 3, 3), 0.4f), labels, cfg);
    for (double d : tr.max_perturbation) CHECK(d == 0.0);
  }

  TEST_CASE("real model: epsilon zero, budget, monotonicity, determinism") {
    Rng rng(5);
    nn::ModelSpec spec;
    spec.arch = "mlp";
    spec.height = spec.width = 6;
    spec.classes = 3;
    spec.hidden = 16;
    auto model = nn::build_model<float>(spec, rng);
    const Tensor images = test::random_tensor(Shape(30, 1, 6, 6), rng);
    std::vector<int> labels;
    for (int i = 0; i < 30; ++i) labels.push_back(static_cast<int>(rng.int_below(3)));
    ModelTarget<float> target(model);

    AttackConfig zero;
    zero.epsilon = 0;
    const auto r0 = robust_accuracy(target, images, labels, zero, 7);
    CHECK(r0.robust_accuracy == r0.clean_accuracy);
    CHECK(r0.max_perturbation == 0.0);

    double previous = 1.0;
    for (double eps : {1e-4, 1e-3, 1e-2, 1e-1, 1.0}) {
      AttackConfig cfg;
      cfg.epsilon = eps;
      const auto r = robust_accuracy(target, images, labels, cfg, 7);
      // Iterates are stored in float, so the bound holds up to rounding of x0 + delta.
      CHECK(r.max_perturbation <= eps + 1e-6);
      CHECK(r.robust_accuracy <= previous + 0.01);
      previous = r.robust_accuracy;
      const auto again = robust_accuracy(target, images, labels, cfg, 7);
      CHECK(again.correct_per_iteration == r.correct_per_iteration);
      CHECK(again.robust_accuracy == r.robust_accuracy);
    }
    CHECK(previous < r0.robust_accuracy);
  }
}
