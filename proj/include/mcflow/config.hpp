#pragma once

#include <map>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "mcflow/environment.hpp"

namespace mcflow {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// One value from a configuration file: a number, a string, or a list of
/// numbers.
using ConfigValue = std::variant<double, std::string, std::vector<double>>;

/// Flat view of a configuration document. Keys are qualified by their
/// section ("flow.v_mm_s"); top-level keys carry no prefix.
struct ConfigDocument {
  std::map<std::string, ConfigValue> entries;
};

/// Parses the key/value format used for channel parameters:
///
///   # comment
///   [transmitter]
///   n_em = 10000
///   [flow]
///   v_mm_s = [2.0, 0.0, 0.0]
///
/// Throws ConfigError with the offending line number on malformed input.
[[nodiscard]] ConfigDocument parse_config(std::string_view text);
[[nodiscard]] ConfigDocument load_config_file(const std::string& path);

/// Keys recognized by apply_config, in their native config units.
inline constexpr std::string_view kConfigKeys[] = {
    "n_em", "p1", "b_len", "t_int_ms", "d_a", "x0_um", "r_obs_nm", "noise_mean", "dt_us", "v_mm_s", "m",
};

/// Overlays every recognized key of `doc` onto `env`. Sections are only used
/// for grouping: a key may appear in any section but at most once. Unknown
/// keys are rejected.
void apply_config(const ConfigDocument& doc, PhysicalEnv& env);

/// Applies one `key=value` override in config units (as given on a command
/// line). Arrays use the same bracket syntax as the file format.
void apply_override(std::string_view key, std::string_view value, PhysicalEnv& env);

/// Renders `env` back into the file format; parse + apply of the result
/// reproduces `env`.
[[nodiscard]] std::string render_config(const PhysicalEnv& env);

}  // namespace mcflow
