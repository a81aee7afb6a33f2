#include "commands.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "config.hpp"
#include "tnfdt/fdt.hpp"
#include "tnfdt/gradcheck.hpp"
#include "tnfdt/serialize.hpp"

namespace tnfdt::cli {

namespace {

using json = nlohmann::ordered_json;

std::string numbered(const char* stem, std::size_t i, const char* ext) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%s-%04zu%s", stem, i, ext);
  return buf;
}

nn::ModelSpec spec_for(nn::ModelSpec spec, const data::LabeledDataset& ds) {
  const Shape& s = ds.images.shape();
  spec.channels = s.z();
  spec.height = s.y();
  spec.width = s.x();
  spec.classes = ds.classes;
  return spec;
}

void require_compatible(const nn::ModelSpec& spec, const data::LabeledDataset& ds) {
  const Shape& s = ds.images.shape();
  if (s.z() != spec.channels || s.y() != spec.height || s.x() != spec.width || ds.classes != spec.classes) {
    throw ConfigError("dataset", "images " + s.str() + " with " + std::to_string(ds.classes) +
                                     " classes do not fit the model (" + spec.serialize() + ")");
  }
}

data::LabeledDataset evaluation_set(const std::optional<std::string>& dataset,
                                    const std::optional<std::filesystem::path>& config, std::size_t classes,
                                    std::size_t limit) {
  data::LabeledDataset ds;
  if (dataset) {
    ds = load_dataset_spec(*dataset, classes);
  } else if (config) {
    const ExperimentConfig c = load_config(*config);
    ds = load_datasets(c.dataset, c.seed).validation;
  } else {
    throw ConfigError("dataset", "give --dataset or --config");
  }
  if (limit > 0) ds = data::head(ds, limit);
  return ds;
}

std::string summary_json(const ExperimentConfig& c, const train::MetricsLog& log, double seconds,
                         const std::filesystem::path& model_file) {
  json j;
  j["seed"] = c.seed;
  j["variant"] = train::to_string(c.train.variant);
  j["model"] = c.model.serialize();
  j["model_file"] = model_file.filename().string();
  json epochs = json::array();
  for (const auto& r : log.records) {
    epochs.push_back({{"epoch", r.epoch},
                      {"train_loss", r.train_loss},
                      {"train_accuracy", r.train_accuracy},
                      {"val_accuracy", r.val_accuracy},
                      {"learning_rate", r.learning_rate},
                      {"wall_seconds", r.wall_seconds}});
  }
  j["epochs"] = epochs;
  j["final_val_accuracy"] = log.records.empty() ? -1.0 : log.records.back().val_accuracy;
  j["wall_seconds"] = seconds;
  return j.dump(2) + "\n";
}

// 8-bit preview of a normalized image: PGM for one channel, PPM for three.
std::string preview(const Tensor& image, const data::AugmentConfig& aug) {
  const Tensor raw = data::denormalize(image, aug);
  const Shape& s = raw.shape();
  std::ostringstream o;
  o << (s.z() == 3 ? "P6" : "P5") << "\n" << s.x() << " " << s.y() << "\n255\n";
  for (std::size_t y = 0; y < s.y(); ++y) {
    for (std::size_t x = 0; x < s.x(); ++x) {
      for (std::size_t z = 0; z < (s.z() == 3 ? 3u : 1u); ++z) {
        const double v = std::clamp(std::round(static_cast<double>(raw(0, z, y, x))), 0.0, 255.0);
        o.put(static_cast<char>(static_cast<unsigned char>(v)));
      }
    }
  }
  return o.str();
}

}  // namespace

std::filesystem::path create_run_dir(const std::filesystem::path& root) {
  std::filesystem::create_directories(root);
  for (std::size_t i = 1; i < 100000; ++i) {
    const auto dir = root / numbered("run", i, "");
    if (std::filesystem::create_directory(dir)) return dir;
  }
  throw std::runtime_error("no free run directory under " + root.string());
}

std::vector<attack::AttackReport> attack_sweep(attack::AttackTarget<float>& target, const Tensor& images,
                                               std::span<const int> labels, std::span<const double> epsilons,
                                               std::size_t iterations) {
  std::vector<attack::AttackReport> out;
  for (double eps : epsilons) {
    attack::AttackConfig cfg;
    cfg.epsilon = eps;
    cfg.iterations = iterations;
    out.push_back(attack::robust_accuracy(target, images, labels, cfg));
  }
  return out;
}

std::string report_json(const attack::AttackReport& r) {
  json j;
  j["epsilon"] = r.epsilon;
  j["robust_accuracy"] = r.robust_accuracy;
  j["clean_accuracy"] = r.clean_accuracy;
  j["n"] = r.images;
  j["t"] = r.iterations;
  return j.dump();
}

int cmd_train(const TrainArgs& args, std::ostream& out, std::ostream& log) {
  ExperimentConfig c = load_config(args.config);
  if (args.seed) c.seed = *args.seed;
  if (args.out) c.out = *args.out;
  c.train.seed = c.seed;
  const Datasets ds = load_datasets(c.dataset, c.seed);
  c.model = spec_for(c.model, ds.train);

  Rng init = Rng(c.seed).split(0x696e6974);
  nn::Model<float> model = nn::build_model<float>(c.model, init);
  const auto dir = create_run_dir(c.out);
  io::write_file_atomic(dir / "config.txt", c.to_text());
  log << "run " << dir.string() << ": " << train::to_string(c.train.variant) << ", " << ds.train.size()
      << " train / " << ds.validation.size() << " validation images\n";

  const auto start = std::chrono::steady_clock::now();
  const auto metrics = train::fit(model, ds.train, &ds.validation, c.train, [&](const train::EpochRecord& r) {
    log << "epoch " << r.epoch << "  loss " << std::fixed << std::setprecision(4) << r.train_loss << "  train "
        << r.train_accuracy << "  val " << r.val_accuracy << "  lr " << r.learning_rate << "  "
        << std::setprecision(1) << r.wall_seconds << " s\n"
        << std::defaultfloat;
  });
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

  const auto model_file = dir / "model.bin";
  io::save_model(model, model_file);
  io::write_file_atomic(dir / "metrics.csv", metrics.to_csv());
  io::write_file_atomic(dir / "summary.json", summary_json(c, metrics, seconds, model_file));
  out << dir.string() << "\n";
  return kOk;
}

int cmd_eval(const EvalArgs& args, std::ostream& out, std::ostream&) {
  nn::Model<float> model = io::load_model<float>(args.model);
  const auto ds = evaluation_set(args.dataset, args.config, model.classes(), args.limit);
  require_compatible(model.spec(), ds);
  const data::AugmentConfig aug;
  const double acc = train::evaluate(model, ds, aug);
  json j;
  j["accuracy"] = acc;
  j["n"] = ds.size();
  out << j.dump() << "\n";
  return kOk;
}

int cmd_attack(const AttackArgs& args, std::ostream& out, std::ostream& log) {
  nn::Model<float> model = io::load_model<float>(args.model);
  std::optional<ExperimentConfig> config;
  if (args.config) config = load_config(*args.config);
  std::vector<double> epsilons;
  if (args.epsilons) {
    epsilons = *args.epsilons;
  } else if (config && !config->epsilons.empty()) {
    epsilons = config->epsilons;
  } else {
    throw ConfigError("epsilons", "give --epsilons or set epsilons in the config");
  }
  for (double e : epsilons) {
    if (!(e >= 0)) throw ConfigError("epsilons", "values must be >= 0");
  }
  const std::size_t iterations = args.iterations ? *args.iterations : (config ? config->attack_iterations : 40);
  if (iterations < 1) throw ConfigError("iterations", "must be >= 1");
  const std::size_t limit = args.limit > 0 ? args.limit : (config ? config->attack_limit : 0);
  const auto ds = evaluation_set(args.dataset, args.config, model.classes(), limit);
  require_compatible(model.spec(), ds);

  const Tensor images = data::normalize(ds.images, data::AugmentConfig{});
  attack::ModelTarget<float> target(model);
  std::string lines;
  for (double eps : epsilons) {
    log << "attacking " << ds.size() << " images at epsilon " << eps << "\n";
    const auto reports = attack_sweep(target, images, ds.labels, std::span<const double>(&eps, 1), iterations);
    const std::string line = report_json(reports.front()) + "\n";
    out << line << std::flush;
    lines += line;
  }
  const std::filesystem::path root = args.out ? *args.out : (config ? config->out : "runs");
  const auto dir = create_run_dir(root);
  io::write_file_atomic(dir / "attack.jsonl", lines);
  log << "report " << (dir / "attack.jsonl").string() << "\n";
  return kOk;
}

int cmd_gradcheck(const GradcheckArgs& args, std::ostream& out, std::ostream&) {
  gradcheck::Options opt;
  if (!args.corrupt.empty()) {
    opt.wrap = [name = args.corrupt](const std::string& check, nn::LayerPtr<double> layer) -> nn::LayerPtr<double> {
      if (check != name) return layer;
      return std::make_unique<gradcheck::FaultyBackward>(std::move(layer), 1.1);
    };
  }
  const auto results = gradcheck::run_suite(opt);
  bool ok = true;
  out << std::left << std::setw(44) << "check" << std::right << std::setw(12) << "max rel err" << std::setw(8)
      << "coords"
      << "  result\n";
  for (const auto& r : results) {
    out << std::left << std::setw(44) << r.name << std::right << std::setw(12) << std::scientific
        << std::setprecision(2) << r.max_error << std::defaultfloat << std::setw(8) << r.coordinates << "  "
        << (r.passed ? "PASS" : "FAIL at " + r.worst) << "\n";
    ok = ok && r.passed;
  }
  out << (ok ? "all checks passed" : "gradient check FAILED") << "\n";
  return ok ? kOk : kFailure;
}

int cmd_compose(const ComposeArgs& args, std::ostream& out, std::ostream&) {
  if (args.count == 0) throw ConfigError("count", "must be >= 1");
  data::LabeledDataset ds;
  if (args.dataset) {
    ds = load_dataset_spec(*args.dataset);
  } else if (args.config) {
    const ExperimentConfig c = load_config(*args.config);
    ds = load_datasets(c.dataset, c.seed).train;
  } else {
    throw ConfigError("dataset", "give --dataset or --config");
  }
  if (args.k && (*args.k == 0 || *args.k > ds.classes)) {
    throw ConfigError("k", "must be in 1.." + std::to_string(ds.classes));
  }
  const data::AugmentConfig aug;
  fdt::FdtOptions opts;
  opts.forced_k = args.k;
  opts.fetch = [&](std::size_t i, Rng&) { return data::normalize(ds.image(i), aug); };
  const fdt::FdtBatch batch = fdt::fdt_batch(ds, data::class_index(ds), args.count, Rng(args.seed), opts);

  const auto dir = create_run_dir(args.out);
  const Shape one = ds.images.shape().with_batch(1);
  for (std::size_t i = 0; i < args.count; ++i) {
    const auto values = batch.images.sample(i);
    const Tensor image(one, std::vector<float>(values.begin(), values.end()));
    io::write_file_atomic(dir / numbered("composite", i, ".f32"),
                          std::string_view(reinterpret_cast<const char*>(image.data()), image.size() * sizeof(float)));
    io::write_file_atomic(dir / numbered("composite", i, one.z() == 3 ? ".ppm" : ".pgm"), preview(image, aug));
    const auto& ex = batch.examples[i];
    std::ostringstream side;
    side << std::setprecision(17) << "shape = " << one.n() << " " << one.z() << " " << one.y() << " " << one.x()
         << "\nclasses =";
    for (int c : ex.classes) side << " " << c;
    side << "\nfactors =";
    for (double f : ex.factors) side << " " << f;
    side << "\nsources =";
    for (std::size_t s : ex.sources) side << " " << s;
    side << "\n";
    io::write_file_atomic(dir / numbered("composite", i, ".txt"), side.str());
  }
  out << dir.string() << "\n";
  return kOk;
}

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& log) {
  CLI::App app{"Tensor normalization and full distribution training experiments"};
  app.require_subcommand(1);

  TrainArgs train_args;
  std::uint64_t seed = 0;
  std::string out_dir;
  auto* train_cmd = app.add_subcommand("train", "train a model from a config file");
  train_cmd->add_option("--config", train_args.config, "key=value config file")->required();
  auto* train_seed = train_cmd->add_option("--seed", seed, "override the config seed");
  auto* train_out = train_cmd->add_option("--out", out_dir, "override the output root");

  EvalArgs eval_args;
  std::string eval_dataset, eval_config;
  auto* eval_cmd = app.add_subcommand("eval", "clean accuracy of a saved model");
  eval_cmd->add_option("--model", eval_args.model, "model blob")->required();
  auto* eval_ds = eval_cmd->add_option("--dataset", eval_dataset, "dataset spec, e.g. idx:IMAGES,LABELS");
  auto* eval_cfg = eval_cmd->add_option("--config", eval_config, "use the validation split of this config");
  eval_cmd->add_option("--limit", eval_args.limit, "evaluate only the first N images");

  AttackArgs attack_args;
  std::string attack_dataset, attack_config, attack_eps, attack_out;
  std::uint64_t attack_seed = 0;
  std::size_t attack_iters = 0;
  auto* attack_cmd = app.add_subcommand("attack", "PGD robust accuracy for a list of epsilons");
  attack_cmd->add_option("--model", attack_args.model, "model blob")->required();
  auto* attack_ds = attack_cmd->add_option("--dataset", attack_dataset, "dataset spec");
  auto* attack_cfg = attack_cmd->add_option("--config", attack_config, "use the validation split of this config");
  auto* attack_e = attack_cmd->add_option("--epsilons", attack_eps, "comma-separated epsilons, e.g. 0.1,0.01");
  auto* attack_s = attack_cmd->add_option("--seed", attack_seed, "recorded for reproducibility; PGD is deterministic");
  auto* attack_o = attack_cmd->add_option("--out", attack_out, "output root for the report");
  auto* attack_t = attack_cmd->add_option("--iterations", attack_iters, "PGD iterations T (default 40)");
  attack_cmd->add_option("--limit", attack_args.limit, "attack only the first N images");

  GradcheckArgs grad_args;
  auto* grad_cmd = app.add_subcommand("gradcheck", "finite-difference check of every backward");
  grad_cmd->add_option("--corrupt", grad_args.corrupt)->group("");

  ComposeArgs compose_args;
  std::string compose_dataset, compose_config, compose_out;
  std::size_t compose_k = 0;
  auto* compose_cmd = app.add_subcommand("compose", "dump composite training examples for inspection");
  auto* compose_ds = compose_cmd->add_option("--dataset", compose_dataset, "dataset spec");
  auto* compose_cfg = compose_cmd->add_option("--config", compose_config, "use the training split of this config");
  compose_cmd->add_option("--count", compose_args.count, "number of composites")->check(CLI::PositiveNumber);
  compose_cmd->add_option("--seed", compose_args.seed, "seed");
  auto* compose_kopt = compose_cmd->add_option("--k", compose_k, "force the number of combined images");
  auto* compose_o = compose_cmd->add_option("--out", compose_out, "output root");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kOk;
  } catch (const CLI::ParseError& e) {
    log << "error: " << e.what() << "\n";
    return kConfig;
  }

  try {
    if (*train_cmd) {
      if (*train_seed) train_args.seed = seed;
      if (*train_out) train_args.out = out_dir;
      return cmd_train(train_args, out, log);
    }
    if (*eval_cmd) {
      if (*eval_ds) eval_args.dataset = eval_dataset;
      if (*eval_cfg) eval_args.config = eval_config;
      return cmd_eval(eval_args, out, log);
    }
    if (*attack_cmd) {
      if (*attack_ds) attack_args.dataset = attack_dataset;
      if (*attack_cfg) attack_args.config = attack_config;
      if (*attack_e) attack_args.epsilons = parse_epsilons(attack_eps);
      if (*attack_s) attack_args.seed = attack_seed;
      if (*attack_o) attack_args.out = attack_out;
      if (*attack_t) attack_args.iterations = attack_iters;
      return cmd_attack(attack_args, out, log);
    }
    if (*grad_cmd) return cmd_gradcheck(grad_args, out, log);
    if (*compose_cmd) {
      if (*compose_ds) compose_args.dataset = compose_dataset;
      if (*compose_cfg) compose_args.config = compose_config;
      if (*compose_kopt) compose_args.k = compose_k;
      if (*compose_o) compose_args.out = compose_out;
      return cmd_compose(compose_args, out, log);
    }
  } catch (const ConfigError& e) {
    log << "config error: " << e.what() << "\n";
    return kConfig;
  } catch (const NumericError& e) {
    log << "numeric failure in epoch " << e.epoch() << ": " << e.what() << "\n";
    return kNumeric;
  } catch (const io::ArtifactMismatch& e) {
    log << "artifact mismatch: " << e.what() << "\n";
    return kArtifact;
  } catch (const std::exception& e) {
    log << "error: " << e.what() << "\n";
    return kFailure;
  }
  return kFailure;
}

}  // namespace tnfdt::cli
