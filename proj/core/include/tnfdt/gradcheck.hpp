#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "tnfdt/nn/layers.hpp"

namespace tnfdt::gradcheck {

struct Options {
  double step = 1e-5;        // central difference half-width
  double tolerance = 1e-5;   // max relative error
  double floor = 1e-3;       // denominator floor for near-zero gradients
  std::uint64_t seed = 7;
  // Applied to every layer under test before checking; lets a fixture swap in a faulty backward.
  std::function<nn::LayerPtr<double>(const std::string& check, nn::LayerPtr<double>)> wrap;
};

struct CheckResult {
  std::string name;
  double max_error = 0;      // max relative error over all checked coordinates
  std::size_t coordinates = 0;
  std::string worst;         // coordinate with the largest error
  bool passed = false;
};

// |a - n| / max(|a|, |n|, floor)
double relative_error(double analytic, double numeric, double floor);

// Compares the backward of `layer` (input error and parameter gradients)
// against central differences of sum(upstream * forward(x)).
CheckResult check_layer(const std::string& name, nn::Layer<double>& layer, const TensorD& input, nn::Mode mode,
                        Rng& rng, const Options& options);

// All layers, both losses, tensor normalization against the frozen-mean
// forward, and small end-to-end models.
std::vector<CheckResult> run_suite(const Options& options = {});

// Decorator whose backward scales the wrapped layer's input error by `factor`.
class FaultyBackward final : public nn::Layer<double> {
 public:
  FaultyBackward(nn::LayerPtr<double> inner, double factor) : inner_(std::move(inner)), factor_(factor) {}
  std::string kind() const override { return inner_->kind(); }
  TensorD forward(const TensorD& input, nn::Mode mode) override { return inner_->forward(input, mode); }
  TensorD backward(const TensorD& upstream) override { return inner_->backward(upstream) * factor_; }
  void collect_params(const std::string& prefix, std::vector<nn::ParamRef<double>>& out) override {
    inner_->collect_params(prefix, out);
  }

 private:
  nn::LayerPtr<double> inner_;
  double factor_;
};

}  // namespace tnfdt::gradcheck
