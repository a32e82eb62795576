#pragma once

// Run configuration: a flat JSON object of dotted keys ("solver.eta"), filled
// with documented defaults, overridden by --key value flags, and converted to
// the typed library configs. Unknown keys and bad values are ConfigErrors.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <json.hpp>

#include "cbo/cid.hpp"
#include "cbo/testbed/adversarial.hpp"
#include "cbo/testbed/quadratic.hpp"

namespace cbo::cli {

enum class Command { kRunQuadratic, kRunDone, kAuditGradients, kScalingStudy, kEvaluate };

std::optional<Command> parse_command(std::string_view name);
std::string_view command_name(Command command);

enum class KeyType { kInteger, kNumber, kBool, kString, kNumberList, kIntegerList };

struct KeySpec {
  std::string key;
  KeyType type;
  nlohmann::json default_value;  // null means "derived", see help
  std::string help;
};

const std::vector<KeySpec>& config_keys();

enum class EmitFormat { kCsv, kJson };

struct RunConfig {
  Command command = Command::kRunQuadratic;
  nlohmann::json values;  // every registered key
  std::filesystem::path output_dir;

  std::uint64_t seed() const;
  EmitFormat emit() const;
  bool emit_timing() const;

  cid::SolverConfig solver() const;
  testbed::QuadraticOptions quadratic() const;
  testbed::BlobOptions train_data() const;
  testbed::BlobOptions test_data() const;
  testbed::LogitLossKind attack_loss() const;
  double epsilon() const;
  testbed::EvalOptions eval() const;
  testbed::UniformAtOptions uniform_at() const;
  std::vector<std::size_t> scaling_T() const;
  std::vector<std::size_t> scaling_K() const;

  template <typename T>
  T get(const std::string& key) const {
    return values.at(key).get<T>();
  }
  bool is_set(const std::string& key) const { return !values.at(key).is_null(); }

  // Builds every typed view the command needs; throws ConfigError naming the
  // offending key.
  void validate() const;
};

// Reads a JSON object of dotted keys. Nested objects are flattened
// ({"solver": {"eta": 0.5}} is solver.eta).
nlohmann::json load_config_file(const std::filesystem::path& path);

using Override = std::pair<std::string, std::string>;

// Defaults, then file values, then CBO_SEED (when given), then overrides.
RunConfig build_config(Command command, const nlohmann::json& file_values,
                       const std::vector<Override>& overrides,
                       const std::optional<std::string>& env_seed = std::nullopt);

// Splits "--key value" / "--key=value" tokens; resolves short aliases
// such as --eta and --T.
std::vector<Override> parse_overrides(const std::vector<std::string>& tokens);

}  // namespace cbo::cli
