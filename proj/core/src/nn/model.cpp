#include "tnfdt/nn/model.hpp"

#include <map>
#include <sstream>

namespace tnfdt::nn {

std::string ModelSpec::serialize() const {
  std::ostringstream out;
  out << "arch=" << arch << ";channels=" << channels << ";height=" << height << ";width=" << width
      << ";classes=" << classes << ";base_width=" << base_width << ";hidden=" << hidden
      << ";tn=" << tn << ";tn_fused=" << tn_fused << ";tn_exact_backward=" << tn_exact_backward;
  return out.str();
}

ModelSpec ModelSpec::parse(const std::string& text) {
  std::map<std::string, std::string> kv;
  std::istringstream in(text);
  std::string item;
  while (std::getline(in, item, ';')) {
    const auto eq = item.find('=');
    if (eq == std::string::npos) throw FormatError("model_spec", "entry without '=': " + item);
    kv[item.substr(0, eq)] = item.substr(eq + 1);
  }
  ModelSpec spec;
  auto take = [&](const char* key) -> std::string {
    auto it = kv.find(key);
    if (it == kv.end()) throw FormatError("model_spec", std::string("missing key ") + key);
    std::string v = it->second;
    kv.erase(it);
    return v;
  };
  auto size = [&](const char* key) {
    const std::string v = take(key);
    try {
      return static_cast<std::size_t>(std::stoull(v));
    } catch (const std::exception&) {
      throw FormatError("model_spec", std::string(key) + " is not an integer: " + v);
    }
  };
  auto flag = [&](const char* key) {
    const std::string v = take(key);
    if (v != "0" && v != "1") throw FormatError("model_spec", std::string(key) + " is not 0/1: " + v);
    return v == "1";
  };
  spec.arch = take("arch");
  spec.channels = size("channels");
  spec.height = size("height");
  spec.width = size("width");
  spec.classes = size("classes");
  spec.base_width = size("base_width");
  spec.hidden = size("hidden");
  spec.tn = flag("tn");
  spec.tn_fused = flag("tn_fused");
  spec.tn_exact_backward = flag("tn_exact_backward");
  if (!kv.empty()) throw FormatError("model_spec", "unknown key " + kv.begin()->first);
  return spec;
}

template <typename T>
Model<T>::Model(ModelSpec spec, Sequential<T> body)
    : spec_(std::move(spec)), body_(std::move(body)), observer_(std::make_unique<ActivationObserver<T>>()) {
  body_.set_input_grad_needed(false);
}

template <typename T>
BasicTensor<T> Model<T>::forward(const BasicTensor<T>& images, Mode mode) {
  const Shape& s = images.shape();
  if (s.z() != spec_.channels || s.y() != spec_.height || s.x() != spec_.width) {
    throw ShapeError("model expects images (n," + std::to_string(spec_.channels) + "," +
                     std::to_string(spec_.height) + "," + std::to_string(spec_.width) + "), got " + s.str());
  }
  return body_.forward(images, mode);
}

template <typename T>
BasicTensor<T> Model<T>::backward(const BasicTensor<T>& upstream, bool input_grad) {
  body_.set_input_grad_needed(input_grad);
  return body_.backward(upstream);
}

template <typename T>
std::vector<ParamRef<T>> Model<T>::params() {
  std::vector<ParamRef<T>> out;
  body_.collect_params("", out);
  return out;
}

template <typename T>
std::vector<StateRef<T>> Model<T>::state() {
  std::vector<StateRef<T>> out;
  body_.collect_state("", out);
  return out;
}

template <typename T>
void Model<T>::zero_grad() {
  for (auto& p : params()) std::fill(p.grad->values().begin(), p.grad->values().end(), T(0));
}

namespace {

template <typename T>
void attach_observer(Layer<T>& layer, const ActivationObserver<T>* observer) {
  if (auto* seq = dynamic_cast<Sequential<T>*>(&layer)) seq->set_observer(observer);
  layer.for_each_child([observer](Layer<T>& child) { attach_observer(child, observer); });
}

template <typename T>
void add_activation(Sequential<T>& seq, const ModelSpec& spec) {
  if (!spec.tn) {
    seq.template add<Relu<T>>();
  } else if (spec.tn_fused) {
    seq.template add<ReluTensorNorm<T>>(spec.tn_exact_backward);
  } else {
    seq.template add<Relu<T>>();
    seq.template add<TensorNorm<T>>(spec.tn_exact_backward);
  }
}

template <typename T>
void add_stage(Sequential<T>& body, const ModelSpec& spec, std::size_t in, std::size_t out,
               std::size_t stride, Rng& rng) {
  auto& block = body.template add<Residual<T>>();
  block.main().template add<Conv2d<T>>(in, out, 3, stride, 1).init(rng);
  block.main().template add<BatchNorm2d<T>>(out);
  add_activation(block.main(), spec);
  block.main().template add<Conv2d<T>>(out, out, 3, 1, 1).init(rng);
  block.main().template add<BatchNorm2d<T>>(out);
  if (in != out || stride != 1) {
    block.shortcut().template add<Conv2d<T>>(in, out, 1, stride, 0).init(rng);
    block.shortcut().template add<BatchNorm2d<T>>(out);
  }
  add_activation(body, spec);
}

}  // namespace

template <typename T>
void Model<T>::set_observer(ActivationObserver<T> observer) {
  *observer_ = std::move(observer);
  attach_observer<T>(body_, *observer_ ? observer_.get() : nullptr);
}

template <typename T>
Model<T> build_model(const ModelSpec& spec, Rng& rng) {
  if (spec.channels == 0 || spec.height == 0 || spec.width == 0 || spec.classes < 2) {
    throw DomainError("model spec needs positive input dims and at least 2 classes");
  }
  Sequential<T> body;
  const std::size_t flat = spec.channels * spec.height * spec.width;
  if (spec.arch == "linear") {
    body.template add<Dense<T>>(flat, spec.classes).init(rng);
  } else if (spec.arch == "mlp") {
    body.template add<Flatten<T>>();
    body.template add<Dense<T>>(flat, spec.hidden).init(rng);
    body.template add<Relu<T>>();
    body.template add<Dense<T>>(spec.hidden, spec.classes).init(rng);
  } else if (spec.arch == "reference") {
    const std::size_t w = spec.base_width;
    if (w == 0) throw DomainError("base_width must be >= 1");
    if (spec.height < 8 || spec.width < 8) throw ShapeError("reference model needs inputs of at least 8x8");
    body.template add<Conv2d<T>>(spec.channels, w, 3, 1, 1).init(rng);
    body.template add<BatchNorm2d<T>>(w);
    add_activation(body, spec);
    body.template add<MaxPool2d<T>>(2, 2);
    add_stage(body, spec, w, w, 1, rng);
    add_stage(body, spec, w, 2 * w, 2, rng);
    add_stage(body, spec, 2 * w, 4 * w, 2, rng);
    body.template add<GlobalAvgPool<T>>();
    body.template add<Dense<T>>(4 * w, spec.classes).init(rng);
  } else {
    throw DomainError("unknown architecture '" + spec.arch + "'");
  }
  return Model<T>(spec, std::move(body));
}

template class Model<float>;
template class Model<double>;
template Model<float> build_model<float>(const ModelSpec&, Rng&);
template Model<double> build_model<double>(const ModelSpec&, Rng&);

}  // namespace tnfdt::nn
