#include "config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>

namespace tnfdt::cli {

namespace {

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> parts;
  std::string part;
  std::istringstream in(s);
  while (std::getline(in, part, sep)) parts.push_back(trim(part));
  return parts;
}

std::uint64_t to_u64(const std::string& key, const std::string& value) {
  std::uint64_t out = 0;
  const auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
  if (ec != std::errc() || ptr != value.data() + value.size() || value.empty()) {
    throw ConfigError(key, "expected a non-negative integer, got '" + value + "'");
  }
  return out;
}

std::size_t to_size(const std::string& key, const std::string& value) {
  return static_cast<std::size_t>(to_u64(key, value));
}

double to_double(const std::string& key, const std::string& value) {
  try {
    std::size_t used = 0;
    const double v = std::stod(value, &used);
    if (used == value.size()) return v;
  } catch (const std::exception&) {
  }
  throw ConfigError(key, "expected a number, got '" + value + "'");
}

bool to_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1") return true;
  if (value == "false" || value == "0") return false;
  throw ConfigError(key, "expected true or false, got '" + value + "'");
}

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& value) {
  const std::filesystem::path p(value);
  return p.empty() || p.is_absolute() || base.empty() ? p : base / p;
}

std::string fmt(double v) {
  std::ostringstream out;
  out.precision(17);
  out << v;
  return out.str();
}

std::string join(const std::vector<std::filesystem::path>& paths) {
  std::string out;
  for (const auto& p : paths) out += (out.empty() ? "" : ",") + p.string();
  return out;
}

}  // namespace

std::vector<double> parse_epsilons(const std::string& text) {
  std::vector<double> out;
  for (const auto& part : split(text, ',')) {
    if (part.empty()) continue;
    const double e = to_double("epsilons", part);
    if (!(e >= 0)) throw ConfigError("epsilons", "values must be >= 0, got " + part);
    out.push_back(e);
  }
  if (out.empty()) throw ConfigError("epsilons", "empty list");
  return out;
}

ExperimentConfig parse_config(const std::string& text, const std::filesystem::path& base_dir) {
  ExperimentConfig c;
  DatasetConfig& d = c.dataset;
  train::TrainConfig& t = c.train;
  const auto path = [&](std::filesystem::path& field) {
    return [&field, &base_dir](const std::string& v) { field = resolve(base_dir, v); };
  };
  const auto paths = [&](std::vector<std::filesystem::path>& field) {
    return [&field, &base_dir](const std::string& v) {
      field.clear();
      for (const auto& p : split(v, ',')) field.push_back(resolve(base_dir, p));
    };
  };
  using Setter = std::function<void(const std::string&)>;
  const std::map<std::string, std::function<void(const std::string&, const std::string&)>> setters = [&] {
    std::map<std::string, std::function<void(const std::string&, const std::string&)>> m;
    auto on = [&m](const std::string& key, Setter s) {
      m[key] = [s = std::move(s)](const std::string&, const std::string& v) { s(v); };
    };
    auto on_key = [&m](const std::string& key, std::function<void(const std::string&, const std::string&)> s) {
      m[key] = std::move(s);
    };
    on_key("dataset", [&](const std::string& k, const std::string& v) {
      if (v != "idx" && v != "cifar10" && v != "synthetic") throw ConfigError(k, "unknown dataset kind '" + v + "'");
      d.kind = v;
    });
    on_key("classes", [&](const std::string& k, const std::string& v) { d.classes = to_size(k, v); });
    on("train_images", path(d.train_images));
    on("train_labels", path(d.train_labels));
    on("val_images", path(d.val_images));
    on("val_labels", path(d.val_labels));
    on("train_files", paths(d.train_files));
    on("val_files", paths(d.val_files));
    on_key("train_limit", [&](const std::string& k, const std::string& v) { d.train_limit = to_size(k, v); });
    on_key("val_limit", [&](const std::string& k, const std::string& v) { d.val_limit = to_size(k, v); });
    on_key("synthetic_train", [&](const std::string& k, const std::string& v) { d.synthetic_train = to_size(k, v); });
    on_key("synthetic_val", [&](const std::string& k, const std::string& v) { d.synthetic_val = to_size(k, v); });
    on_key("synthetic_noise", [&](const std::string& k, const std::string& v) { d.synthetic_noise = to_double(k, v); });
    on_key("height", [&](const std::string& k, const std::string& v) { d.height = to_size(k, v); });
    on_key("width", [&](const std::string& k, const std::string& v) { d.width = to_size(k, v); });
    on_key("channels", [&](const std::string& k, const std::string& v) { d.channels = to_size(k, v); });

    on_key("arch", [&](const std::string& k, const std::string& v) {
      if (v != "reference" && v != "mlp" && v != "linear") throw ConfigError(k, "unknown architecture '" + v + "'");
      c.model.arch = v;
    });
    on_key("base_width", [&](const std::string& k, const std::string& v) { c.model.base_width = to_size(k, v); });
    on_key("hidden", [&](const std::string& k, const std::string& v) { c.model.hidden = to_size(k, v); });
    on_key("tn", [&](const std::string& k, const std::string& v) { c.model.tn = to_bool(k, v); });
    on_key("tn_fused", [&](const std::string& k, const std::string& v) { c.model.tn_fused = to_bool(k, v); });
    on_key("tn_exact_backward",
           [&](const std::string& k, const std::string& v) { c.model.tn_exact_backward = to_bool(k, v); });

    on_key("variant", [&](const std::string& k, const std::string& v) {
      try {
        t.variant = train::parse_variant(v);
      } catch (const DomainError& e) {
        throw ConfigError(k, e.what());
      }
    });
    on_key("epochs", [&](const std::string& k, const std::string& v) { t.epochs = to_size(k, v); });
    on_key("batch_size", [&](const std::string& k, const std::string& v) { t.batch_size = to_size(k, v); });
    on_key("learning_rate", [&](const std::string& k, const std::string& v) { t.learning_rate = to_double(k, v); });
    on_key("momentum", [&](const std::string& k, const std::string& v) { t.momentum = to_double(k, v); });
    on_key("weight_decay", [&](const std::string& k, const std::string& v) { t.weight_decay = to_double(k, v); });
    on_key("lr_drop_period", [&](const std::string& k, const std::string& v) { t.lr_drop_period = to_size(k, v); });
    on_key("lr_drop_factor", [&](const std::string& k, const std::string& v) { t.lr_drop_factor = to_double(k, v); });
    on_key("augment", [&](const std::string& k, const std::string& v) { t.augment = to_bool(k, v); });
    on_key("max_shift", [&](const std::string& k, const std::string& v) {
      t.augmentation.max_shift = static_cast<int>(to_size(k, v));
    });
    on_key("flip_prob", [&](const std::string& k, const std::string& v) {
      t.augmentation.flip_prob = to_double(k, v);
    });

    on_key("epsilons", [&](const std::string&, const std::string& v) { c.epsilons = parse_epsilons(v); });
    on_key("attack_iterations", [&](const std::string& k, const std::string& v) { c.attack_iterations = to_size(k, v); });
    on_key("attack_limit", [&](const std::string& k, const std::string& v) { c.attack_limit = to_size(k, v); });
    on("out", path(c.out));
    on_key("seed", [&](const std::string& k, const std::string& v) { c.seed = to_u64(k, v); });
    return m;
  }();

  std::set<std::string> seen;
  std::istringstream in(text);
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("line " + std::to_string(number), "expected key = value");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    const auto it = setters.find(key);
    if (it == setters.end()) throw ConfigError(key, "unknown key");
    if (!seen.insert(key).second) throw ConfigError(key, "repeated key");
    it->second(key, value);
  }

  if (d.classes < 1) throw ConfigError("classes", "must be >= 1");
  if (c.attack_iterations < 1) throw ConfigError("attack_iterations", "must be >= 1");
  try {
    t.validate();
  } catch (const DomainError& e) {
    throw ConfigError("train", e.what());
  }
  t.seed = c.seed;
  return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config", "cannot read " + path.string());
  std::ostringstream text;
  text << in.rdbuf();
  return parse_config(text.str(), path.parent_path());
}

std::string ExperimentConfig::to_text() const {
  std::ostringstream o;
  const DatasetConfig& d = dataset;
  o << "dataset = " << d.kind << "\n"
    << "classes = " << d.classes << "\n";
  if (d.kind == "idx") {
    o << "train_images = " << d.train_images.string() << "\n"
      << "train_labels = " << d.train_labels.string() << "\n"
      << "val_images = " << d.val_images.string() << "\n"
      << "val_labels = " << d.val_labels.string() << "\n";
  } else if (d.kind == "cifar10") {
    o << "train_files = " << join(d.train_files) << "\n"
      << "val_files = " << join(d.val_files) << "\n";
  } else {
    o << "synthetic_train = " << d.synthetic_train << "\n"
      << "synthetic_val = " << d.synthetic_val << "\n"
      << "synthetic_noise = " << fmt(d.synthetic_noise) << "\n"
      << "height = " << d.height << "\n"
      << "width = " << d.width << "\n"
      << "channels = " << d.channels << "\n";
  }
  o << "train_limit = " << d.train_limit << "\n"
    << "val_limit = " << d.val_limit << "\n"
    << "arch = " << model.arch << "\n"
    << "base_width = " << model.base_width << "\n"
    << "hidden = " << model.hidden << "\n"
    << "tn = " << (model.tn ? "true" : "false") << "\n"
    << "tn_fused = " << (model.tn_fused ? "true" : "false") << "\n"
    << "tn_exact_backward = " << (model.tn_exact_backward ? "true" : "false") << "\n";
  for (const auto& [k, v] : train.describe()) {
    if (k != "seed") o << k << " = " << v << "\n";
  }
  if (!epsilons.empty()) {
    o << "epsilons = ";
    for (std::size_t i = 0; i < epsilons.size(); ++i) o << (i ? "," : "") << fmt(epsilons[i]);
    o << "\n";
  }
  o << "attack_iterations = " << attack_iterations << "\n"
    << "attack_limit = " << attack_limit << "\n"
    << "out = " << out.string() << "\n"
    << "seed = " << seed << "\n";
  return o.str();
}

void check_paths(const DatasetConfig& d) {
  const auto require = [](const char* key, const std::filesystem::path& p) {
    if (p.empty()) throw ConfigError(key, "missing");
    if (!std::filesystem::exists(p)) throw ConfigError(key, "no such file " + p.string());
  };
  if (d.kind == "idx") {
    require("train_images", d.train_images);
    require("train_labels", d.train_labels);
    require("val_images", d.val_images);
    require("val_labels", d.val_labels);
  } else if (d.kind == "cifar10") {
    if (d.train_files.empty()) throw ConfigError("train_files", "missing");
    if (d.val_files.empty()) throw ConfigError("val_files", "missing");
    for (const auto& p : d.train_files) require("train_files", p);
    for (const auto& p : d.val_files) require("val_files", p);
  }
}

Datasets load_datasets(const DatasetConfig& d, std::uint64_t seed) {
  check_paths(d);
  Datasets out;
  if (d.kind == "idx") {
    out.train = data::load_idx(d.train_images, d.train_labels, data::Split::train, d.classes);
    out.validation = data::load_idx(d.val_images, d.val_labels, data::Split::validation, d.classes);
  } else if (d.kind == "cifar10") {
    out.train = data::load_cifar10_binary(d.train_files, data::Split::train, d.classes);
    out.validation = data::load_cifar10_binary(d.val_files, data::Split::validation, d.classes);
  } else {
    const Rng root(seed);
    data::SyntheticOptions opts;
    opts.noise = d.synthetic_noise;
    opts.channels = d.channels;
    Rng train_rng = root.split(0x7261696e);
    Rng val_rng = root.split(0x76616c);
    out.train = data::synthetic_dataset(train_rng, d.classes, d.synthetic_train, d.height, d.width, opts);
    out.validation = data::synthetic_dataset(val_rng, d.classes, d.synthetic_val, d.height, d.width, opts);
    out.validation.split = data::Split::validation;
  }
  if (d.train_limit > 0) out.train = data::head(out.train, d.train_limit);
  if (d.val_limit > 0) out.validation = data::head(out.validation, d.val_limit);
  return out;
}

data::LabeledDataset load_dataset_spec(const std::string& spec, std::size_t classes) {
  const auto colon = spec.find(':');
  if (colon == std::string::npos) throw ConfigError("dataset", "expected KIND:ARGS, got '" + spec + "'");
  const std::string kind = spec.substr(0, colon);
  const std::vector<std::string> args = split(spec.substr(colon + 1), ',');
  if (kind == "idx") {
    if (args.size() != 2) throw ConfigError("dataset", "idx needs IMAGES,LABELS");
    for (const auto& a : args) {
      if (!std::filesystem::exists(a)) throw ConfigError("dataset", "no such file " + a);
    }
    return data::load_idx(args[0], args[1], data::Split::validation, classes);
  }
  if (kind == "cifar10") {
    std::vector<std::filesystem::path> files;
    for (const auto& a : args) {
      if (!std::filesystem::exists(a)) throw ConfigError("dataset", "no such file " + a);
      files.emplace_back(a);
    }
    if (files.empty()) throw ConfigError("dataset", "cifar10 needs at least one file");
    return data::load_cifar10_binary(files, data::Split::validation, classes);
  }
  if (kind == "synthetic") {
    std::size_t count = 100, height = 8, width = 8;
    std::uint64_t seed = 0;
    data::SyntheticOptions opts;
    for (const auto& a : args) {
      const auto eq = a.find('=');
      if (eq == std::string::npos) throw ConfigError("dataset", "expected key=value in '" + a + "'");
      const std::string k = a.substr(0, eq), v = a.substr(eq + 1);
      if (k == "classes") classes = to_size("dataset." + k, v);
      else if (k == "count") count = to_size("dataset." + k, v);
      else if (k == "height") height = to_size("dataset." + k, v);
      else if (k == "width") width = to_size("dataset." + k, v);
      else if (k == "channels") opts.channels = to_size("dataset." + k, v);
      else if (k == "noise") opts.noise = to_double("dataset." + k, v);
      else if (k == "seed") seed = to_u64("dataset." + k, v);
      else throw ConfigError("dataset." + k, "unknown key");
    }
    Rng rng(seed);
    auto ds = data::synthetic_dataset(rng, classes, count, height, width, opts);
    ds.split = data::Split::validation;
    return ds;
  }
  throw ConfigError("dataset", "unknown dataset kind '" + kind + "'");
}

}  // namespace tnfdt::cli
