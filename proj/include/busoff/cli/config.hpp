#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "busoff/acc_scenario.hpp"
#include "busoff/cli/table.hpp"
#include "busoff/control_synthesis.hpp"
#include "busoff/errors.hpp"
#include "busoff/simulator.hpp"

namespace busoff::cli {

using Json = nlohmann::json;

/// Environment variable naming the default output directory.
inline constexpr const char* kOutDirEnv = "BUSOFF_OUT_DIR";
inline constexpr const char* kDefaultOutDir = "busoff-out";

/// A config value that is missing, mistyped or unknown. The message starts
/// with the dotted key path.
class ConfigError : public ValidationError {
 public:
  ConfigError(const std::string& key, const std::string& what)
      : ValidationError("config key '" + key + "': " + what) {}
};

/// Parses a JSON config file. Syntax errors report line and column.
Json load_config_file(const std::filesystem::path& path);

/// Sets "a.b.c" in `config`, creating intermediate objects.
void set_key(Json& config, std::string_view dotted, Json value);

enum class TraceMode { None, First, All };

enum class ModelKind { Discrete, Continuous, Acc };

/// Fully resolved run configuration. `json` echoes every setting with its
/// default filled in and is what the manifest records.
struct RunConfig {
  std::string subcommand;
  Json json;

  ModelKind model = ModelKind::Discrete;
  LinearSystem sys;
  CostSpec cost;  // horizon is the ladder horizon for synth
  acc::AccRunOptions acc;  // model == Acc only

  std::optional<double> p;
  std::vector<double> sweep_p;

  std::string attacker_name;
  AttackerKind attacker_kind = AttackerKind::ClosedLoop;
  Json attacker_json;  // explicit policies are built per p

  ErrorCounterConfig counter;
  int s0 = 0;

  std::string controller;  // stationary | ladder | zero
  Eigen::VectorXd x0;
  int horizon = 0;
  bool continue_after_busoff = true;

  std::uint64_t base_seed = 1;
  int n_seeds = 1;
  unsigned threads = 0;

  FixedPointOptions synthesis;
  double tol_rho = 0.005;

  std::vector<double> ht_p;
  std::vector<double> ht_q;
  bool paper_closed_form = false;

  std::filesystem::path out_dir;
  Format format = Format::Csv;
  TraceMode traces = TraceMode::None;

  /// Attacker for transmission probability p.
  AttackerSpec attacker(double p) const;

  std::vector<std::uint64_t> seeds() const;
};

/// Validates `user` against the schema for `subcommand` and expands
/// defaults. Unknown keys and non-finite numbers are rejected.
RunConfig resolve_config(const Json& user, std::string_view subcommand);

/// Writes a matrix as nested row-major arrays.
Json matrix_to_json(const Eigen::MatrixXd& M);

}  // namespace busoff::cli
