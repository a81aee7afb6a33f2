#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "tnfdt/attack.hpp"

namespace tnfdt::cli {

// Stable process exit codes.
enum ExitCode : int { kOk = 0, kFailure = 1, kConfig = 2, kNumeric = 3, kArtifact = 4 };

struct TrainArgs {
  std::filesystem::path config;
  std::optional<std::uint64_t> seed;
  std::optional<std::filesystem::path> out;
};

struct EvalArgs {
  std::filesystem::path model;
  std::optional<std::string> dataset;         // spec string, see load_dataset_spec
  std::optional<std::filesystem::path> config;  // validation split of a train config
  std::size_t limit = 0;
};

struct AttackArgs {
  std::filesystem::path model;
  std::optional<std::string> dataset;
  std::optional<std::filesystem::path> config;
  std::optional<std::vector<double>> epsilons;
  std::optional<std::uint64_t> seed;
  std::optional<std::filesystem::path> out;
  std::optional<std::size_t> iterations;
  std::size_t limit = 0;
};

struct GradcheckArgs {
  std::string corrupt;  // name of a check whose backward gets scaled; test fixture only
};

struct ComposeArgs {
  std::optional<std::string> dataset;
  std::optional<std::filesystem::path> config;
  std::size_t count = 8;
  std::uint64_t seed = 0;
  std::optional<std::size_t> k;
  std::filesystem::path out = "compose";
};

// Creates the next free `root/run-NNNN` directory.
std::filesystem::path create_run_dir(const std::filesystem::path& root);

// One record per epsilon, in input order.
std::vector<attack::AttackReport> attack_sweep(attack::AttackTarget<float>& target, const Tensor& images,
                                               std::span<const int> labels, std::span<const double> epsilons,
                                               std::size_t iterations);
// {"epsilon":..,"robust_accuracy":..,"clean_accuracy":..,"n":..,"t":..}
std::string report_json(const attack::AttackReport& report);

// Each command throws on failure; run() maps exceptions to exit codes.
int cmd_train(const TrainArgs& args, std::ostream& out, std::ostream& log);
int cmd_eval(const EvalArgs& args, std::ostream& out, std::ostream& log);
int cmd_attack(const AttackArgs& args, std::ostream& out, std::ostream& log);
int cmd_gradcheck(const GradcheckArgs& args, std::ostream& out, std::ostream& log);
int cmd_compose(const ComposeArgs& args, std::ostream& out, std::ostream& log);

// Parses argv, dispatches, and converts errors to exit codes.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& log);

}  // namespace tnfdt::cli
