#include <doctest.h>

#include <cmath>

#include "support.hpp"
#include "tnfdt/errors.hpp"
#include "tnfdt/gradcheck.hpp"
#include "tnfdt/nn/model.hpp"

using namespace tnfdt;
using namespace tnfdt::nn;

namespace {

// Direct cross-correlation with zero padding, no shortcuts.
TensorD naive_conv(const TensorD& in, const TensorD& w, const TensorD& b, std::size_t stride, std::size_t pad) {
  const std::size_t n = in.shape().n(), cin = in.shape().z(), h = in.shape().y(), wd = in.shape().x();
  const std::size_t cout = w.shape().n(), k = w.shape().y();
  const std::size_t oh = (h + 2 * pad - k) / stride + 1, ow = (wd + 2 * pad - k) / stride + 1;
  TensorD out(Shape(n, cout, oh, ow));
  for (std::size_t s = 0; s < n; ++s)
    for (std::size_t o = 0; o < cout; ++o)
      for (std::size_t y = 0; y < oh; ++y)
        for (std::size_t x = 0; x < ow; ++x) {
          double acc = b(o, 0, 0, 0);
          for (std::size_t c = 0; c < cin; ++c)
            for (std::size_t ky = 0; ky < k; ++ky)
              for (std::size_t kx = 0; kx < k; ++kx) {
                const long iy = static_cast<long>(y * stride + ky) - static_cast<long>(pad);
                const long ix = static_cast<long>(x * stride + kx) - static_cast<long>(pad);
                if (iy < 0 || ix < 0 || iy >= static_cast<long>(h) || ix >= static_cast<long>(wd)) continue;
                acc += w(o, c, ky, kx) * in(s, c, static_cast<std::size_t>(iy), static_cast<std::size_t>(ix));
              }
          out(s, o, y, x) = acc;
        }
  return out;
}

double max_rel(const TensorD& a, const TensorD& b) {
  double m = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    m = std::max(m, std::abs(a[i] - b[i]) / std::max({std::abs(a[i]), std::abs(b[i]), 1e-12}));
  }
  return m;
}

}  // namespace

TEST_SUITE("nn_layers") {
  TEST_CASE("he init statistics") {
    CHECK(he_std(2) == 1.0);
    CHECK(he_std(8) == 0.5);
    CHECK_THROWS_AS(he_std(0), DomainError);
    for (const auto& [fan_in, expected, tol] : {std::tuple{2u, 1.0, 0.02}, std::tuple{8u, 0.5, 0.01}}) {
      Rng rng(fan_in);
      TensorD w(Shape(100000, 1, 1, 1));
      he_init(w, fan_in, rng);
      double s = 0, s2 = 0;
      for (double v : w.values()) {
        s += v;
        s2 += v * v;
      }
      const double mean = s / 1e5;
      CHECK(std::abs(mean) < 0.02);
      CHECK(std::abs(std::sqrt(s2 / 1e5 - mean * mean) - expected) < tol);
    }
    Rng rng(1);
    Conv2d<float> conv(2, 3, 3);
    conv.init(rng);
    CHECK(conv.bias == Tensor(conv.bias.shape(), 0.0f));
  }

  TEST_CASE("conv identity and bias-only kernels") {
    Rng rng(2);
    const Tensor in = test::random_tensor(Shape(2, 1, 4, 5), rng);
    Conv2d<float> id(1, 1, 1);
    id.weights[0] = 1.0f;
    CHECK(id.forward(in, Mode::train) == in);

    Conv2d<float> bias_only(1, 2, 3, 1, 1);
    bias_only.bias[0] = 1.5f;
    bias_only.bias[1] = -2.0f;
    const Tensor out = bias_only.forward(in, Mode::train);
    CHECK(out.shape() == Shape(2, 2, 4, 5));
    for (std::size_t n = 0; n < 2; ++n)
      for (std::size_t y = 0; y < 4; ++y)
        for (std::size_t x = 0; x < 5; ++x) {
          CHECK(out(n, 0, y, x) == 1.5f);
          CHECK(out(n, 1, y, x) == -2.0f);
        }
  }

  TEST_CASE("conv matches the nested-loop oracle") {
    Rng rng(3);
    {
      Conv2d<double> conv(3, 2, 3, 1, 1);
      conv.init(rng);
      conv.bias = test::random_tensor<double>(conv.bias.shape(), rng);
      const TensorD in = test::random_tensor<double>(Shape(1, 3, 5, 5), rng);
      CHECK(max_rel(conv.forward(in, Mode::train), naive_conv(in, conv.weights, conv.bias, 1, 1)) <= 1e-6);
    }
    for (int trial = 0; trial < 20; ++trial) {
      const std::size_t cin = 1 + rng.int_below(3), cout = 1 + rng.int_below(4), k = 1 + rng.int_below(3);
      const std::size_t stride = 1 + rng.int_below(2), pad = rng.int_below(k);
      const std::size_t h = k + rng.int_below(5), w = k + rng.int_below(5);
      Conv2d<double> conv(cin, cout, k, stride, pad);
      conv.init(rng);
      conv.bias = test::random_tensor<double>(conv.bias.shape(), rng);
      const TensorD in = test::random_tensor<double>(Shape(1 + rng.int_below(2), cin, h, w), rng);
      const TensorD got = conv.forward(in, Mode::train);
      const TensorD want = naive_conv(in, conv.weights, conv.bias, stride, pad);
      REQUIRE(got.shape() == want.shape());
      REQUIRE(max_rel(got, want) <= 1e-6);
    }
  }

  TEST_CASE("conv rejects incompatible input") {
    Conv2d<float> conv(3, 2, 3);
    CHECK_THROWS_AS(conv.forward(Tensor(Shape(1, 2, 5, 5)), Mode::train), ShapeError);
    CHECK_THROWS_AS(conv.forward(Tensor(Shape(1, 3, 2, 5)), Mode::train), ShapeError);
    CHECK_THROWS_AS(Conv2d<float>(3, 2, 0), ShapeError);
  }

  TEST_CASE("dense hand chain rule") {
    Dense<double> d(1, 1);
    d.weights[0] = 2.0;
    const double x = 0.75, g = -1.25;
    d.forward(TensorD(Shape(1, 1, 1, 1), x), Mode::train);
    const TensorD down = d.backward(TensorD(Shape(1, 1, 1, 1), g));
    CHECK(down[0] == doctest::Approx(2 * g));
    CHECK(d.weight_grad[0] == doctest::Approx(g * x));
    CHECK(d.bias_grad[0] == doctest::Approx(g));
  }

  TEST_CASE("backward without forward is a usage error") {
    Dense<float> d(2, 2);
    CHECK_THROWS_AS(d.backward(Tensor(Shape(1, 2, 1, 1))), UsageError);
    Relu<float> r;
    CHECK_THROWS_AS(r.backward(Tensor(Shape(1, 2, 1, 1))), UsageError);
    TensorNorm<float> tn;
    CHECK_THROWS_AS(tn.backward(Tensor(Shape(1, 2, 1, 1))), UsageError);
    // The cache is spent by one backward.
    d.forward(Tensor(Shape(1, 2, 1, 1)), Mode::train);
    d.backward(Tensor(Shape(1, 2, 1, 1)));
    CHECK_THROWS_AS(d.backward(Tensor(Shape(1, 2, 1, 1))), UsageError);
  }

  TEST_CASE("batchnorm train mode standardizes") {
    Rng rng(4);
    BatchNorm2d<double> bn(3);
    const TensorD in = test::random_tensor<double>(Shape(4, 3, 5, 5), rng, 3.0) + TensorD(Shape(4, 3, 5, 5), 2.0);
    const TensorD out = bn.forward(in, Mode::train);
    for (std::size_t c = 0; c < 3; ++c) {
      double s = 0, s2 = 0, m = 0;
      for (std::size_t n = 0; n < 4; ++n)
        for (std::size_t i = 0; i < 25; ++i) {
          const double v = out.sample(n)[c * 25 + i];
          s += v, s2 += v * v, m += 1;
        }
      CHECK(std::abs(s / m) < 1e-5);
      CHECK(std::abs(s2 / m - 1.0) < 1e-5 * 10);
    }
  }

  TEST_CASE("batchnorm affine") {
    Rng rng(5);
    BatchNorm2d<double> bn(1);
    bn.gamma[0] = 2.0;
    bn.beta[0] = 3.0;
    TensorD in = test::random_tensor<double>(Shape(8, 1, 6, 6), rng);
    const TensorD out = bn.forward(in, Mode::train);
    double s = 0, s2 = 0;
    for (double v : out.values()) s += v, s2 += v * v;
    const double mean = s / out.size();
    CHECK(mean == doctest::Approx(3.0).epsilon(1e-4));
    CHECK(std::sqrt(s2 / out.size() - mean * mean) == doctest::Approx(2.0).epsilon(1e-4));

    BatchNorm2d<float> constant(1);
    constant.beta[0] = 0.7f;
    CHECK(constant.forward(Tensor(Shape(2, 1, 3, 3), 5.0f), Mode::train) == Tensor(Shape(2, 1, 3, 3), 0.7f));
  }

  TEST_CASE("batchnorm running statistics") {
    BatchNorm2d<double> bn(1);
    const TensorD in(Shape(1, 1, 1, 2), {1.0, 3.0});
    // Infer before any update uses mean 0, variance 1.
    const TensorD fresh = bn.forward(in, Mode::infer);
    CHECK(fresh[0] == doctest::Approx(1.0 / std::sqrt(1.0 + 1e-5)));
    bn.forward(in, Mode::train);
    CHECK(bn.running_mean[0] == doctest::Approx(0.9 * 0 + 0.1 * 2.0));
    CHECK(bn.running_var[0] == doctest::Approx(0.9 * 1 + 0.1 * 1.0));
    CHECK_THROWS_AS(bn.forward(TensorD(Shape(1, 2, 1, 1)), Mode::train), ShapeError);
  }

  TEST_CASE("gradient check suite passes") {
    const auto results = gradcheck::run_suite();
    CHECK(results.size() >= 20);
    for (const auto& r : results) {
      INFO(r.name << " max error " << r.max_error << " at " << r.worst);
      CHECK(r.passed);
      CHECK(r.max_error < 1e-5);
    }
  }

  TEST_CASE("conv 1x1x3x3 against finite differences of a scalar readout") {
    Rng rng(6);
    Conv2d<double> conv(1, 2, 2, 1, 0);
    conv.init(rng);
    const TensorD in = test::random_tensor<double>(Shape(1, 1, 3, 3), rng);
    const auto r = gradcheck::check_layer("conv", conv, in, Mode::train, rng, {});
    CHECK(r.passed);
    CHECK(r.max_error < 1e-5);
  }

  TEST_CASE("a corrupted dense backward fails and is named") {
    gradcheck::Options opt;
    opt.wrap = [](const std::string& check, LayerPtr<double> layer) -> LayerPtr<double> {
      if (check != "dense") return layer;
      return std::make_unique<gradcheck::FaultyBackward>(std::move(layer), 1.05);
    };
    const auto results = gradcheck::run_suite(opt);
    std::vector<std::string> failed;
    for (const auto& r : results) {
      if (!r.passed) failed.push_back(r.name);
    }
    REQUIRE(failed.size() == 1);
    CHECK(failed[0] == "dense");
  }

  TEST_CASE("tn pass-through differs from the true derivative") {
    // Sanity check that the frozen-mean check is not vacuous: the plain finite
    // difference of the real forward does not match the pass-through.
    Rng rng(7);
    TensorNorm<double> tn(false);
    const auto r = gradcheck::check_layer("tn", tn, test::random_tensor<double>(Shape(1, 3, 2, 2), rng),
                                          Mode::train, rng, {});
    CHECK_FALSE(r.passed);
  }

  TEST_CASE("model spec round trip") {
    ModelSpec s;
    s.arch = "mlp";
    s.hidden = 17;
    s.tn = true;
    CHECK(ModelSpec::parse(s.serialize()) == s);
    CHECK_THROWS_AS(ModelSpec::parse("arch=mlp;bogus=1"), FormatError);
  }

  TEST_CASE("tn layers follow every conv-block relu") {
    Rng rng(8);
    ModelSpec spec;
    spec.tn = true;
    spec.base_width = 4;
    Model<float> model = build_model<float>(spec, rng);
    std::size_t relus = 0, tns = 0;
    std::string previous;
    model.set_observer([&](const Layer<float>& layer, const Tensor&) {
      if (layer.kind() == "relu") ++relus;
      if (layer.kind() == "tensornorm") {
        ++tns;
        CHECK(previous == "relu");
      }
      if (layer.kind() != "sequential" && layer.kind() != "residual") previous = layer.kind();
    });
    model.forward(test::random_tensor(Shape(2, 1, 28, 28), rng), Mode::train);
    CHECK(relus == 7);
    CHECK(tns == relus);
  }
}
