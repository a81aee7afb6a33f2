#include <doctest.h>

#include <cmath>

#include "support.hpp"
#include "tnfdt/errors.hpp"
#include "tnfdt/losses.hpp"

using namespace tnfdt;
using namespace tnfdt::loss;

namespace {

ClassMatrix<double> column(std::initializer_list<double> v) {
  return ClassMatrix<double>(v.size(), 1, std::vector<double>(v));
}

// Logits whose softmax is `probs` exactly up to rounding.
ClassMatrix<double> logits_for(std::initializer_list<double> probs) {
  std::vector<double> v;
  for (double p : probs) v.push_back(std::log(p));
  return ClassMatrix<double>(v.size(), 1, v);
}

ClassMatrix<double> random_matrix(std::size_t classes, std::size_t batch, Rng& rng, double scale) {
  ClassMatrix<double> m(classes, batch);
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t y = 0; y < classes; ++y) m.at(y, b) = scale * rng.normal01();
  return m;
}

}  // namespace

TEST_SUITE("losses") {
  TEST_CASE("softmax") {
    const auto a = softmax(column({0, 0}));
    CHECK(a.at(0, 0) == doctest::Approx(0.5));
    CHECK(a.at(1, 0) == doctest::Approx(0.5));
    const auto b = softmax(column({std::log(3.0), 0}));
    CHECK(b.at(0, 0) == doctest::Approx(0.75));
    CHECK(b.at(1, 0) == doctest::Approx(0.25));
    const auto c = softmax(column({1000, 0}));
    CHECK(std::isfinite(c.at(0, 0)));
    CHECK(c.at(0, 0) == doctest::Approx(1.0));
    CHECK(c.at(1, 0) == doctest::Approx(0.0));
  }

  TEST_CASE("softmax columns sum to one and ignore shifts") {
    Rng rng(1);
    for (int trial = 0; trial < 50; ++trial) {
      const auto p = random_matrix(7, 4, rng, 10.0);
      auto shifted = p;
      const double c = 100 * rng.normal01();
      for (std::size_t b = 0; b < 4; ++b)
        for (std::size_t y = 0; y < 7; ++y) shifted.at(y, b) += c;
      const auto s = softmax(p), t = softmax(shifted);
      for (std::size_t b = 0; b < 4; ++b) {
        double total = 0;
        for (std::size_t y = 0; y < 7; ++y) {
          total += s.at(y, b);
          REQUIRE(std::abs(s.at(y, b) - t.at(y, b)) < 1e-6);
        }
        REQUIRE(std::abs(total - 1.0) < 1e-6);
      }
    }
  }

  TEST_CASE("multiclass hand trace") {
    const std::vector<int> label{0};
    const auto r = multiclass_log_loss(label, column({0, 0}));
    CHECK(r.loss == doctest::Approx(std::log(2.0)));
    CHECK(r.error.at(0, 0) == doctest::Approx(-0.5));
    CHECK(r.error.at(1, 0) == doctest::Approx(0.5));
  }

  TEST_CASE("multiclass perfect prediction") {
    const std::vector<int> label{1};
    const auto r = multiclass_log_loss(label, column({-1e4, 0, -1e4}));
    CHECK(r.loss == 0.0);
    for (double e : r.error.values()) CHECK(e == 0.0);
  }

  TEST_CASE("multiclass batch averaging") {
    const std::vector<int> one{1}, two{1, 1};
    const auto single = multiclass_log_loss(one, column({0.3, -1.2, 2.0}));
    const auto pair = multiclass_log_loss(
        two, ClassMatrix<double>(3, 2, std::vector<double>{0.3, -1.2, 2.0, 0.3, -1.2, 2.0}));
    CHECK(pair.loss == doctest::Approx(single.loss).epsilon(1e-14));
    CHECK(pair.error.at(0, 1) == doctest::Approx(single.error.at(0, 0) / 2));
  }

  TEST_CASE("multiclass rejects bad labels") {
    const std::vector<int> bad{2}, negative{-1};
    CHECK_THROWS_AS(multiclass_log_loss(bad, column({0, 0})), DomainError);
    CHECK_THROWS_AS(multiclass_log_loss(negative, column({0, 0})), DomainError);
    const std::vector<int> too_many{0, 0};
    CHECK_THROWS_AS(multiclass_log_loss(too_many, column({0, 0})), ShapeError);
  }

  TEST_CASE("multilabel with one-hot targets equals multiclass") {
    Rng rng(2);
    for (int trial = 0; trial < 20; ++trial) {
      const auto p = random_matrix(10, 5, rng, 3.0);
      std::vector<int> labels;
      for (int b = 0; b < 5; ++b) labels.push_back(static_cast<int>(rng.int_below(10)));
      const auto mc = multiclass_log_loss(labels, p);
      const auto ml = multilabel_log_loss(one_hot(labels, 10), p);
      REQUIRE(std::abs(mc.loss - ml.loss) <= 1e-12);
      for (std::size_t i = 0; i < mc.error.values().size(); ++i) {
        REQUIRE(std::abs(mc.error.values()[i] - ml.error.values()[i]) <= 1e-12);
      }
    }
  }

  TEST_CASE("multilabel hand traces") {
    const auto gt = column({2.0 / 3, 1.0 / 3});
    const auto a = multilabel_log_loss(gt, column({0, 0}));
    CHECK(a.loss == doctest::Approx(2 * std::log(2.0)));
    CHECK(a.error.at(0, 0) == doctest::Approx(-1.0 / 6));
    CHECK(a.error.at(1, 0) == doctest::Approx(1.0 / 6));

    const auto b = multilabel_log_loss(gt, logits_for({2.0 / 3, 1.0 / 3}));
    CHECK(std::abs(b.error.at(0, 0)) < 1e-15);
    CHECK(std::abs(b.error.at(1, 0)) < 1e-15);
    CHECK(b.loss == doctest::Approx(-std::log(2.0 / 3) - std::log(1.0 / 3)));
  }

  TEST_CASE("multilabel error outside the support") {
    const auto gt = column({0.0, 1.0, 0.0});
    const auto p = column({0.4, -0.1, 1.3});
    const auto r = multilabel_log_loss(gt, p);
    const auto s = softmax(p);
    CHECK(r.error.at(0, 0) == doctest::Approx(s.at(0, 0)));
    CHECK(r.error.at(2, 0) == doctest::Approx(s.at(2, 0)));
  }

  TEST_CASE("multilabel rejects invalid distributions") {
    CHECK_THROWS_AS(multilabel_log_loss(column({0.5, 0.4}), column({0, 0})), DomainError);
    CHECK_THROWS_AS(multilabel_log_loss(column({1.5, -0.5}), column({0, 0})), DomainError);
    CHECK_THROWS_AS(multilabel_log_loss(column({1.0, 0.0, 0.0}), column({0, 0})), ShapeError);
  }

  TEST_CASE("error columns sum to zero") {
    Rng rng(3);
    const auto p = random_matrix(6, 4, rng, 2.0);
    ClassMatrix<double> gt(6, 4);
    gt.at(0, 0) = 1.0;
    gt.at(2, 1) = 2.0 / 3, gt.at(5, 1) = 1.0 / 3;
    gt.at(1, 2) = 6.0 / 11, gt.at(3, 2) = 3.0 / 11, gt.at(4, 2) = 2.0 / 11;
    for (std::size_t y = 0; y < 6; ++y) gt.at(y, 3) = 1.0 / 6;
    const std::vector<int> labels{0, 2, 1, 5};
    for (const auto& r : {multilabel_log_loss(gt, p), multiclass_log_loss(labels, p)}) {
      for (std::size_t b = 0; b < 4; ++b) {
        double s = 0;
        for (double e : r.error.column(b)) s += e;
        CHECK(std::abs(s) < 1e-6);
      }
    }
  }

  TEST_CASE("multilabel loss gradient is k * P_S - support") {
    const auto gt = column({2.0 / 3, 1.0 / 3, 0.0});
    const auto p = column({0.2, 0.1, -0.4});
    const auto s = softmax(p);
    const auto g = multilabel_loss_gradient(gt, p);
    CHECK(g.at(0, 0) == doctest::Approx(2 * s.at(0, 0) - 1));
    CHECK(g.at(1, 0) == doctest::Approx(2 * s.at(1, 0) - 1));
    CHECK(g.at(2, 0) == doctest::Approx(2 * s.at(2, 0)));
  }

  TEST_CASE("float and double agree") {
    const std::vector<int> labels{2};
    const ClassMatrix<float> pf(3, 1, std::vector<float>{0.1f, 0.5f, -0.2f});
    const auto rf = multiclass_log_loss(labels, pf);
    const auto rd = multiclass_log_loss(labels, column({0.1f, 0.5f, -0.2f}));
    CHECK(rf.loss == doctest::Approx(rd.loss).epsilon(1e-6));
  }

  TEST_CASE("predicted classes and one hot") {
    const ClassMatrix<double> p(3, 2, std::vector<double>{0.1, 0.9, 0.3, 2.0, -1.0, 0.0});
    CHECK(predicted_classes(p) == std::vector<int>{1, 0});
    const std::vector<int> labels{2, 0};
    const auto oh = one_hot(labels, 3);
    CHECK(oh.at(2, 0) == 1.0);
    CHECK(oh.at(0, 1) == 1.0);
    CHECK(oh.at(0, 0) == 0.0);
  }
}
