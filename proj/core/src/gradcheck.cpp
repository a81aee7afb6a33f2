#include "tnfdt/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "tnfdt/losses.hpp"
#include "tnfdt/nn/model.hpp"

namespace tnfdt::gradcheck {

double relative_error(double analytic, double numeric, double floor) {
  const double scale = std::max({std::abs(analytic), std::abs(numeric), floor});
  return std::abs(analytic - numeric) / scale;
}

namespace {

struct Coord {
  std::string label;
  double* value;
  double analytic;
};

CheckResult finite_difference(const std::string& name, const std::vector<Coord>& coords,
                              const std::function<double()>& objective, const Options& opt) {
  CheckResult r;
  r.name = name;
  r.coordinates = coords.size();
  for (const Coord& c : coords) {
    const double saved = *c.value;
    *c.value = saved + opt.step;
    const double plus = objective();
    *c.value = saved - opt.step;
    const double minus = objective();
    *c.value = saved;
    const double numeric = (plus - minus) / (2 * opt.step);
    const double err = relative_error(c.analytic, numeric, opt.floor);
    const double e = std::isnan(err) ? INFINITY : err;
    if (r.worst.empty() || e > r.max_error) {
      r.max_error = e;
      r.worst = c.label;
    }
  }
  r.passed = r.max_error < opt.tolerance;
  return r;
}

double dot(const TensorD& a, const TensorD& b) {
  require_same_shape(a.shape(), b.shape(), "gradcheck dot");
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

TensorD normal_tensor(const Shape& shape, Rng& rng, double scale = 1.0) {
  TensorD t(shape);
  for (double& v : t.values()) v = scale * rng.normal01();
  return t;
}

// Keeps every entry at least `gap` away from zero so no ReLU kink sits within the step.
TensorD kink_free(const Shape& shape, Rng& rng, double gap = 0.05) {
  TensorD t = normal_tensor(shape, rng);
  for (double& v : t.values()) {
    if (std::abs(v) < gap) v = v < 0 ? v - gap : v + gap;
  }
  return t;
}

// Distinct values spaced 0.01 apart in random order, so pooling windows have no ties.
TensorD distinct_values(const Shape& shape, Rng& rng) {
  TensorD t(shape);
  std::vector<std::size_t> order(t.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  for (std::size_t i = order.size() - 1; i > 0; --i) {
    std::swap(order[i], order[static_cast<std::size_t>(rng.int_below(i + 1))]);
  }
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = 0.01 * static_cast<double>(order[i]) - 0.5;
  return t;
}

using Forward = std::function<TensorD(const TensorD&)>;
using Backward = std::function<TensorD(const TensorD&)>;

// Objective sum(upstream * forward(x)); checks the input error and every parameter gradient.
CheckResult check_function(const std::string& name, const Forward& forward, const Backward& backward,
                           std::vector<nn::ParamRef<double>> params, const TensorD& input, Rng& rng,
                           const Options& opt) {
  TensorD x = input;
  const TensorD out = forward(x);
  const TensorD upstream = normal_tensor(out.shape(), rng);
  for (auto& p : params) std::fill(p.grad->values().begin(), p.grad->values().end(), 0.0);
  const TensorD dx = backward(upstream);
  require_same_shape(dx.shape(), x.shape(), "gradcheck input error");

  std::vector<Coord> coords;
  for (std::size_t i = 0; i < x.size(); ++i) coords.push_back({"input[" + std::to_string(i) + "]", &x[i], dx[i]});
  for (auto& p : params) {
    for (std::size_t j = 0; j < p.value->size(); ++j) {
      coords.push_back({p.name + "[" + std::to_string(j) + "]", &(*p.value)[j], (*p.grad)[j]});
    }
  }
  return finite_difference(name, coords, [&] { return dot(upstream, forward(x)); }, opt);
}

nn::LayerPtr<double> wrapped(const std::string& name, nn::LayerPtr<double> layer, const Options& opt) {
  return opt.wrap ? opt.wrap(name, std::move(layer)) : std::move(layer);
}

// Input error of a loss against central differences of its value.
CheckResult check_loss(const std::string& name, const TensorD& logits, const std::function<double(const TensorD&)>& f,
                       const TensorD& analytic, const Options& opt) {
  TensorD x = logits;
  std::vector<Coord> coords;
  for (std::size_t i = 0; i < x.size(); ++i) coords.push_back({"logit[" + std::to_string(i) + "]", &x[i], analytic[i]});
  return finite_difference(name, coords, [&] { return f(x); }, opt);
}

}  // namespace

CheckResult check_layer(const std::string& name, nn::Layer<double>& layer, const TensorD& input, nn::Mode mode,
                        Rng& rng, const Options& options) {
  std::vector<nn::ParamRef<double>> params;
  layer.collect_params(name + ".", params);
  return check_function(
      name, [&](const TensorD& x) { return layer.forward(x, mode); },
      [&](const TensorD& g) { return layer.backward(g); }, params, input, rng, options);
}

std::vector<CheckResult> run_suite(const Options& opt) {
  using namespace nn;
  std::vector<CheckResult> results;
  Rng rng(opt.seed);

  auto layer_case = [&](const std::string& name, LayerPtr<double> layer, const TensorD& input, Mode mode) {
    LayerPtr<double> l = wrapped(name, std::move(layer), opt);
    results.push_back(check_layer(name, *l, input, mode, rng, opt));
  };

  {
    auto conv = std::make_unique<Conv2d<double>>(3, 4, 3, 1, 0);
    conv->init(rng);
    conv->bias = normal_tensor(conv->bias.shape(), rng, 0.1);
    layer_case("conv2d", std::move(conv), normal_tensor(Shape(2, 3, 5, 5), rng), Mode::train);
  }
  {
    auto conv = std::make_unique<Conv2d<double>>(2, 3, 3, 2, 1);
    conv->init(rng);
    layer_case("conv2d_stride2_pad1", std::move(conv), normal_tensor(Shape(2, 2, 6, 5), rng), Mode::train);
  }
  {
    auto conv = std::make_unique<Conv2d<double>>(3, 2, 1, 2, 0);
    conv->init(rng);
    layer_case("conv2d_1x1_stride2", std::move(conv), normal_tensor(Shape(2, 3, 4, 4), rng), Mode::train);
  }
  {
    auto dense = std::make_unique<Dense<double>>(12, 5);
    dense->init(rng);
    dense->bias = normal_tensor(dense->bias.shape(), rng, 0.1);
    layer_case("dense", std::move(dense), normal_tensor(Shape(3, 3, 2, 2), rng), Mode::train);
  }
  {
    auto bn = std::make_unique<BatchNorm2d<double>>(3);
    bn->gamma = normal_tensor(bn->gamma.shape(), rng);
    bn->beta = normal_tensor(bn->beta.shape(), rng);
    layer_case("batchnorm2d_train", std::move(bn), normal_tensor(Shape(3, 3, 3, 2), rng, 2.0), Mode::train);
  }
  {
    auto bn = std::make_unique<BatchNorm2d<double>>(3);
    bn->gamma = normal_tensor(bn->gamma.shape(), rng);
    bn->beta = normal_tensor(bn->beta.shape(), rng);
    bn->running_mean = normal_tensor(bn->running_mean.shape(), rng);
    for (std::size_t c = 0; c < 3; ++c) bn->running_var[c] = 0.5 + rng.uniform01();
    layer_case("batchnorm2d_infer", std::move(bn), normal_tensor(Shape(2, 3, 3, 3), rng), Mode::infer);
  }
  layer_case("relu", std::make_unique<Relu<double>>(), kink_free(Shape(2, 3, 3, 3), rng), Mode::train);
  layer_case("maxpool2d", std::make_unique<MaxPool2d<double>>(2, 2), distinct_values(Shape(2, 2, 5, 4), rng),
             Mode::train);
  layer_case("maxpool2d_overlap", std::make_unique<MaxPool2d<double>>(3, 2),
             distinct_values(Shape(1, 2, 5, 5), rng), Mode::train);
  layer_case("global_avg_pool", std::make_unique<GlobalAvgPool<double>>(), normal_tensor(Shape(2, 3, 3, 2), rng),
             Mode::train);
  layer_case("flatten", std::make_unique<Flatten<double>>(), normal_tensor(Shape(2, 2, 2, 3), rng), Mode::train);
  {
    auto res = std::make_unique<Residual<double>>();
    res->main().add<Conv2d<double>>(2, 3, 3, 2, 1).init(rng);
    res->main().add<BatchNorm2d<double>>(3);
    res->shortcut().add<Conv2d<double>>(2, 3, 1, 2, 0).init(rng);
    layer_case("residual_projection", std::move(res), normal_tensor(Shape(2, 2, 4, 4), rng), Mode::train);
  }
  {
    auto res = std::make_unique<Residual<double>>();
    res->main().add<Conv2d<double>>(2, 2, 3, 1, 1).init(rng);
    layer_case("residual_identity", std::move(res), normal_tensor(Shape(2, 2, 3, 3), rng), Mode::train);
  }

  // Tensor normalization: the default backward passes the error through
  // unchanged, which is the exact derivative of the forward with the
  // per-pixel mean held fixed.
  {
    LayerPtr<double> tn = wrapped("tensornorm_frozen_mean", std::make_unique<TensorNorm<double>>(false), opt);
    const TensorD input = normal_tensor(Shape(2, 4, 3, 3), rng);
    tn->forward(input, Mode::train);
    const TensorD frozen = tn_mean(input);
    results.push_back(check_function(
        "tensornorm_frozen_mean", [&](const TensorD& x) { return subtract_pixel_mean(x, frozen); },
        [&](const TensorD& g) {
          tn->forward(input, Mode::train);
          return tn->backward(g);
        },
        {}, input, rng, opt));
  }
  layer_case("tensornorm_exact", std::make_unique<TensorNorm<double>>(true), normal_tensor(Shape(2, 4, 3, 3), rng),
             Mode::train);
  {
    LayerPtr<double> fused = wrapped("relu_tensornorm_frozen_mean", std::make_unique<ReluTensorNorm<double>>(false), opt);
    const TensorD input = kink_free(Shape(2, 4, 3, 3), rng);
    const TensorD frozen = tn_mean(relu_forward(input));
    results.push_back(check_function(
        "relu_tensornorm_frozen_mean", [&](const TensorD& x) { return subtract_pixel_mean(relu_forward(x), frozen); },
        [&](const TensorD& g) {
          fused->forward(input, Mode::train);
          return fused->backward(g);
        },
        {}, input, rng, opt));
  }
  layer_case("relu_tensornorm_exact", std::make_unique<ReluTensorNorm<double>>(true),
             kink_free(Shape(2, 4, 3, 3), rng), Mode::train);

  // Losses over logits of shape (batch, classes).
  {
    const std::size_t batch = 3, classes = 5;
    const TensorD logits = normal_tensor(Shape(batch, classes, 1, 1), rng, 2.0);
    const std::vector<int> labels = {4, 0, 2};
    const auto mc = loss::multiclass_log_loss(labels, loss::ClassMatrix<double>::from_logits(logits));
    results.push_back(check_loss(
        "multiclass_log_loss", logits,
        [&](const TensorD& z) {
          return loss::multiclass_log_loss(labels, loss::ClassMatrix<double>::from_logits(z)).loss;
        },
        mc.error.to_tensor(), opt));

    loss::ClassMatrix<double> gt(classes, batch);
    gt.at(1, 0) = 6.0 / 11, gt.at(3, 0) = 3.0 / 11, gt.at(0, 0) = 2.0 / 11;
    gt.at(2, 1) = 1.0;
    gt.at(4, 2) = 2.0 / 3, gt.at(0, 2) = 1.0 / 3;
    const auto preds = loss::ClassMatrix<double>::from_logits(logits);
    results.push_back(check_loss(
        "multilabel_log_loss", logits,
        [&](const TensorD& z) { return loss::multilabel_log_loss(gt, loss::ClassMatrix<double>::from_logits(z)).loss; },
        loss::multilabel_loss_gradient(gt, preds).to_tensor(), opt));

    // The propagated error equals the gradient of the distribution-weighted cross-entropy.
    const double scale = 1.0 / static_cast<double>(batch);
    results.push_back(check_loss(
        "multilabel_error_vs_weighted_cross_entropy", logits,
        [&](const TensorD& z) {
          double total = 0;
          for (std::size_t b = 0; b < batch; ++b) {
            double top = -INFINITY;
            for (std::size_t y = 0; y < classes; ++y) top = std::max(top, z(b, y, 0, 0));
            double sum = 0;
            for (std::size_t y = 0; y < classes; ++y) sum += std::exp(z(b, y, 0, 0) - top);
            const double log_norm = top + std::log(sum);
            for (std::size_t y = 0; y < classes; ++y) total -= gt.at(y, b) * (z(b, y, 0, 0) - log_norm);
          }
          return scale * total;
        },
        loss::multilabel_log_loss(gt, preds).error.to_tensor(), opt));
  }

  // End to end through small models in training mode.
  auto model_case = [&](const std::string& name, const ModelSpec& spec, std::size_t batch) {
    Model<double> model = build_model<double>(spec, rng);
    const TensorD input = normal_tensor(Shape(batch, spec.channels, spec.height, spec.width), rng);
    results.push_back(check_function(
        name, [&](const TensorD& x) { return model.forward(x, Mode::train); },
        [&](const TensorD& g) { return model.backward(g, true); }, model.params(), input, rng, opt));
  };
  ModelSpec ref;
  ref.arch = "reference";
  ref.channels = 1;
  ref.height = ref.width = 12;
  ref.classes = 3;
  ref.base_width = 2;
  model_case("model_reference", ref, 3);
  ModelSpec ref_tn = ref;
  ref_tn.tn = true;
  ref_tn.tn_exact_backward = true;
  model_case("model_reference_tn_exact", ref_tn, 3);
  ModelSpec mlp;
  mlp.arch = "mlp";
  mlp.channels = 2;
  mlp.height = mlp.width = 3;
  mlp.classes = 4;
  mlp.hidden = 6;
  model_case("model_mlp", mlp, 3);

  return results;
}

}  // namespace tnfdt::gradcheck
