#pragma once

// Subcommand implementations behind the `marginlab` CLI. Each returns the
// process exit code: 0 success, 1 usage/config, 2 runtime/divergence, 3 I/O.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace marginlab::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitRuntime = 2;
inline constexpr int kExitIo = 3;

struct ExperimentOptions {
  std::optional<std::filesystem::path> config;
  std::optional<std::uint64_t> seed;  // replaces the config's seed list
  std::optional<std::filesystem::path> out;
  std::optional<std::vector<double>> m_grid;
  bool quiet = false;
};

struct TrainOptions : ExperimentOptions {
  // Also write held-out features.csv / pairs.csv / gallery.csv here.
  std::optional<std::filesystem::path> export_holdout;
};

struct BoundsOptions {
  std::size_t classes = 0;
  std::size_t dim = 0;
  double p_w = 0.0;
  std::optional<double> s;
  std::optional<double> m;
  bool json = false;
  std::optional<std::filesystem::path> out;
};

struct RegionsOptions {
  std::string kind = "LMCL";
  double margin = 0.0;
  double w1_norm = 1.0;
  double w2_norm = 1.0;
  std::size_t resolution = 512;
  std::filesystem::path out = "regions.csv";
  bool quiet = false;
};

struct EvalOptions {
  std::filesystem::path features;
  std::optional<std::filesystem::path> pairs;
  std::optional<std::filesystem::path> gallery;
  std::string mode = "verify";  // verify | identify
  std::vector<double> far = {0.01, 0.001};
  std::optional<std::filesystem::path> out;
};

int cmd_train(const TrainOptions& opts, std::ostream& out, std::ostream& err);
int cmd_toy2d(const ExperimentOptions& opts, std::ostream& out, std::ostream& err);
int cmd_msweep(const ExperimentOptions& opts, std::ostream& out, std::ostream& err);
int cmd_bounds(const BoundsOptions& opts, std::ostream& out, std::ostream& err);
int cmd_regions(const RegionsOptions& opts, std::ostream& out, std::ostream& err);
int cmd_eval(const EvalOptions& opts, std::ostream& out, std::ostream& err);

// Parses "0,0.1,0.2". Throws ConfigError.
std::vector<double> parse_number_list(const std::string& text);

// Maps library exceptions to exit codes, printing the message to err.
int exit_code_for_current_exception(std::ostream& err);

}  // namespace marginlab::cli
