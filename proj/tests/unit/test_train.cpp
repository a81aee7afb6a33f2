#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <limits>

#include "support.hpp"
#include "tnfdt/errors.hpp"
#include "tnfdt/train.hpp"

using namespace tnfdt;
using namespace tnfdt::train;

namespace {

nn::ParamRef<double> param(TensorD& value, TensorD& grad, bool decay = true) {
  nn::ParamRef<double> p;
  p.name = "p";
  p.value = &value;
  p.grad = &grad;
  p.decay = decay;
  return p;
}

data::LabeledDataset two_class_set(std::uint64_t seed, std::size_t count) {
  Rng rng(seed);
  return data::synthetic_dataset(rng, 2, count, 8, 8, {.noise = 40.0});
}

nn::ModelSpec small_cnn(bool tn = false) {
  nn::ModelSpec spec;
  spec.height = spec.width = 8;
  spec.classes = 2;
  spec.base_width = 4;
  spec.tn = tn;
  return spec;
}

TrainConfig quick_config() {
  TrainConfig cfg;
  cfg.batch_size = 20;
  cfg.epochs = 5;
  cfg.learning_rate = 0.05;
  cfg.augmentation.max_shift = 1;
  return cfg;
}

}  // namespace

TEST_SUITE("train") {
  TEST_CASE("sgd hand examples") {
    TensorD w(Shape(1, 1, 1, 2), {1.0, -2.0});
    TensorD g(Shape(1, 1, 1, 2), {0.5, 0.25});
    const std::vector<nn::ParamRef<double>> params{param(w, g)};
    OptimizerState<double> state;
    sgd_update<double>(params, state, 0.1, 0.9, 0.0);
    CHECK(w[0] == doctest::Approx(0.95));
    CHECK(w[1] == doctest::Approx(-2.025));
    // Second step: v = 0.9 * 0.5 + 0.5 = 0.95.
    sgd_update<double>(params, state, 0.1, 0.9, 0.0);
    CHECK(state.velocity[0][0] == doctest::Approx(0.95));
    CHECK(w[0] == doctest::Approx(0.855));

    TensorD w2(Shape(1, 1, 1, 1), {2.0});
    TensorD g2(Shape(1, 1, 1, 1), {0.0});
    const std::vector<nn::ParamRef<double>> decayed{param(w2, g2)};
    OptimizerState<double> s2;
    sgd_update<double>(decayed, s2, 0.1, 0.0, 0.5);
    CHECK(w2[0] == doctest::Approx(1.9));

    TensorD w3(Shape(1, 1, 1, 1), {2.0});
    const std::vector<nn::ParamRef<double>> exempt{param(w3, g2, false)};
    OptimizerState<double> s3;
    sgd_update<double>(exempt, s3, 0.1, 0.0, 0.5);
    CHECK(w3[0] == 2.0);
  }

  TEST_CASE("sgd rejects mismatched state") {
    TensorD w(Shape(1, 1, 1, 2)), g(Shape(1, 1, 1, 2)), bad(Shape(1, 1, 1, 3));
    const std::vector<nn::ParamRef<double>> params{param(w, g)};
    OptimizerState<double> state;
    state.velocity.emplace_back(Shape(1, 1, 1, 3));
    CHECK_THROWS_AS(sgd_update<double>(params, state, 0.1, 0.9, 0.0), UsageError);
    OptimizerState<double> two;
    two.velocity.resize(2);
    CHECK_THROWS_AS(sgd_update<double>(params, two, 0.1, 0.9, 0.0), UsageError);
    const std::vector<nn::ParamRef<double>> wrong_grad{param(w, bad)};
    OptimizerState<double> fresh;
    CHECK_THROWS_AS(sgd_update<double>(wrong_grad, fresh, 0.1, 0.9, 0.0), UsageError);
  }

  TEST_CASE("weight decay alone shrinks the weight norm") {
    Rng rng(1);
    TensorD w = test::random_tensor<double>(Shape(3, 4, 2, 2), rng);
    TensorD g(w.shape());
    const std::vector<nn::ParamRef<double>> params{param(w, g)};
    OptimizerState<double> state;
    double previous = std::sqrt(sum(elementwise(ElementwiseOp::mul, w, w)));
    for (int i = 0; i < 20; ++i) {
      sgd_update<double>(params, state, 0.1, 0.9, 5e-4);
      const double norm = std::sqrt(sum(elementwise(ElementwiseOp::mul, w, w)));
      REQUIRE(norm < previous);
      previous = norm;
    }
  }

  TEST_CASE("lr schedule") {
    TrainConfig cfg;
    CHECK(lr_schedule(0, cfg) == 0.1);
    CHECK(lr_schedule(4, cfg) == 0.1);
    CHECK(lr_schedule(5, cfg) == doctest::Approx(0.01));
    CHECK(lr_schedule(14, cfg) == doctest::Approx(0.001));
    cfg.lr_drop_period = 3;
    cfg.lr_drop_factor = 0.5;
    CHECK(lr_schedule(7, cfg) == doctest::Approx(0.025));
  }

  TEST_CASE("config validation and variant names") {
    TrainConfig cfg;
    CHECK_NOTHROW(cfg.validate());
    cfg.momentum = 1.0;
    CHECK_THROWS_AS(cfg.validate(), DomainError);
    cfg = TrainConfig{};
    cfg.batch_size = 0;
    CHECK_THROWS_AS(cfg.validate(), DomainError);
    CHECK(parse_variant("fdt") == Variant::fdt);
    CHECK(parse_variant("ov") == Variant::overlay);
    CHECK(to_string(Variant::baseline) == "baseline");
    CHECK_THROWS_AS(parse_variant("mixup"), DomainError);
  }

  TEST_CASE("zero learning rate leaves the parameters bit-identical") {
    const auto ds = two_class_set(2, 40);
    Rng init(3);
    auto model = nn::build_model<float>(small_cnn(), init);
    std::vector<Tensor> before;
    for (const auto& p : model.params()) before.push_back(*p.value);
    auto cfg = quick_config();
    cfg.learning_rate = 0;
    OptimizerState<float> state;
    train_epoch(model, ds, cfg, state, 0);
    const auto after = model.params();
    for (std::size_t i = 0; i < before.size(); ++i) CHECK(*after[i].value == before[i]);
  }

  TEST_CASE("baseline learns the synthetic two-class set") {
    const auto ds = two_class_set(4, 200);
    Rng init(5);
    auto model = nn::build_model<float>(small_cnn(), init);
    const auto log = fit(model, ds, nullptr, quick_config());
    REQUIRE(log.records.size() == 5);
    CHECK(log.records.back().train_accuracy > 0.95);
    CHECK(log.records.back().val_accuracy == -1);
  }

  TEST_CASE("training is deterministic") {
    const auto ds = two_class_set(6, 60);
    for (Variant v : {Variant::baseline, Variant::overlay, Variant::fdt}) {
      auto cfg = quick_config();
      cfg.epochs = 2;
      cfg.variant = v;
      Rng a(7), b(7);
      auto m1 = nn::build_model<float>(small_cnn(true), a);
      auto m2 = nn::build_model<float>(small_cnn(true), b);
      const auto l1 = fit(m1, ds, &ds, cfg);
      const auto l2 = fit(m2, ds, &ds, cfg);
      CHECK(l1.to_csv() == l2.to_csv());
      const auto p1 = m1.params(), p2 = m2.params();
      for (std::size_t i = 0; i < p1.size(); ++i) CHECK(*p1[i].value == *p2[i].value);
    }
  }

  TEST_CASE("variants differ only in the variant header line") {
    const auto ds = two_class_set(8, 40);
    auto cfg = quick_config();
    cfg.epochs = 1;
    std::vector<std::vector<std::pair<std::string, std::string>>> headers;
    for (Variant v : {Variant::baseline, Variant::overlay, Variant::fdt}) {
      cfg.variant = v;
      Rng init(9);
      auto model = nn::build_model<float>(small_cnn(), init);
      headers.push_back(fit(model, ds, nullptr, cfg).header);
    }
    for (std::size_t h = 1; h < headers.size(); ++h) {
      REQUIRE(headers[h].size() == headers[0].size());
      std::size_t differing = 0;
      for (std::size_t i = 0; i < headers[0].size(); ++i) {
        if (headers[h][i] != headers[0][i]) {
          ++differing;
          CHECK(headers[h][i].first == "variant");
        }
      }
      CHECK(differing == 1);
    }
  }

  TEST_CASE("tensor normalization keeps live activations channel-centred") {
    const auto ds = two_class_set(10, 40);
    Rng init(11);
    auto model = nn::build_model<float>(small_cnn(true), init);
    auto cfg = quick_config();
    cfg.epochs = 1;
    std::size_t observed = 0;
    double worst = 0;
    model.set_observer([&](const nn::Layer<float>& layer, const Tensor& out) {
      if (layer.kind() != "tensornorm" && layer.kind() != "relu_tensornorm") return;
      ++observed;
      const Shape s = out.shape();
      for (std::size_t n = 0; n < s.n(); ++n) {
        for (std::size_t y = 0; y < s.y(); ++y) {
          for (std::size_t x = 0; x < s.x(); ++x) {
            double m = 0;
            for (std::size_t z = 0; z < s.z(); ++z) m += out(n, z, y, x);
            worst = std::max(worst, std::abs(m / static_cast<double>(s.z())));
          }
        }
      }
    });
    fit(model, ds, nullptr, cfg);
    CHECK(observed > 0);
    CHECK(worst < 1e-5);
  }

  TEST_CASE("non-finite values raise a numeric error with the epoch") {
    auto ds = two_class_set(12, 40);
    for (float& v : ds.images.sample(0)) v = std::numeric_limits<float>::quiet_NaN();
    Rng init(13);
    auto model = nn::build_model<float>(small_cnn(), init);
    try {
      fit(model, ds, nullptr, quick_config());
      FAIL("expected NumericError");
    } catch (const NumericError& e) {
      CHECK(e.epoch() == 0);
    }
  }

  TEST_CASE("class-count mismatch") {
    Rng rng(14);
    const auto ds = data::synthetic_dataset(rng, 3, 30, 8, 8);
    auto model = nn::build_model<float>(small_cnn(), rng);
    OptimizerState<float> state;
    CHECK_THROWS_AS(train_epoch(model, ds, quick_config(), state, 0), UsageError);
  }

  TEST_CASE("evaluate") {
    Rng rng(15);
    nn::ModelSpec spec;
    spec.arch = "linear";
    spec.height = spec.width = 2;
    spec.classes = 2;
    auto model = nn::build_model<float>(spec, rng);
    auto& dense = dynamic_cast<nn::Dense<float>&>(model.body().at(0));
    // Class 1 scores the pixel sum; class 0 scores nothing.
    std::fill(dense.weights.values().begin(), dense.weights.values().end(), 0.0f);
    std::fill(dense.bias.values().begin(), dense.bias.values().end(), 0.0f);
    for (std::size_t i = 0; i < 4; ++i) dense.weights(1, i, 0, 0) = 1.0f;
    const Tensor images(Shape(4, 1, 2, 2), {1, 1, 1, 1, -1, -1, -1, -1, 2, 0, 0, 0, -3, 0, 0, 0});
    const std::vector<int> right{1, 0, 1, 0}, wrong{0, 1, 0, 1}, half{1, 1, 0, 0};
    CHECK(evaluate(model, images, right) == 1.0);
    CHECK(evaluate(model, images, wrong) == 0.0);
    CHECK(evaluate(model, images, half, 3) == 0.5);
    CHECK_THROWS_AS(evaluate(model, Tensor(Shape(1, 1, 2, 2)), std::span<const int>()), DomainError);
  }

  TEST_CASE("metrics log") {
    MetricsLog log;
    log.header = {{"variant", "fdt"}};
    log.append({0, 0.5, 0.25, 0.125, 0.1, 3.0});
    CHECK_THROWS_AS(log.append({0, 0, 0, 0, 0, 0}), UsageError);
    CHECK(log.to_csv() == "# variant=fdt\nepoch,train_loss,train_accuracy,val_accuracy,learning_rate\n"
                          "0,0.5,0.25,0.125,0.10000000000000001\n");
    CHECK(log.to_csv(true).find("wall_seconds") != std::string::npos);
  }
}
