#include "mcflow/config.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include <fmt/format.h>

namespace mcflow {

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

bool valid_key(std::string_view key) {
  if (key.empty()) return false;
  return std::all_of(key.begin(), key.end(), [](char c) {
    return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-' || c == '.';
  });
}

std::string_view strip_comment(std::string_view line) {
  bool in_string = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    if (line[i] == '"') in_string = !in_string;
    if (line[i] == '#' && !in_string) return line.substr(0, i);
  }
  return line;
}

bool parse_number(std::string_view text, double& out) {
  text = trim(text);
  if (text.empty()) return false;
  if (text.front() == '+') text.remove_prefix(1);
  std::string cleaned;
  cleaned.reserve(text.size());
  for (char c : text) {
    if (c != '_') cleaned.push_back(c);
  }
  const char* first = cleaned.data();
  const char* last = cleaned.data() + cleaned.size();
  auto [ptr, ec] = std::from_chars(first, last, out);
  return ec == std::errc{} && ptr == last && std::isfinite(out);
}

ConfigValue parse_value(std::string_view raw, std::size_t line_no) {
  raw = trim(raw);
  if (raw.empty()) throw ConfigError(fmt::format("line {}: missing value", line_no));
  if (raw.front() == '"') {
    if (raw.size() < 2 || raw.back() != '"') {
      throw ConfigError(fmt::format("line {}: unterminated string", line_no));
    }
    return std::string(raw.substr(1, raw.size() - 2));
  }
  if (raw.front() == '[') {
    if (raw.back() != ']') throw ConfigError(fmt::format("line {}: unterminated array", line_no));
    std::vector<double> values;
    std::string_view body = trim(raw.substr(1, raw.size() - 2));
    while (!body.empty()) {
      const auto comma = body.find(',');
      const auto item = trim(body.substr(0, comma));
      double v = 0;
      if (item.empty() && comma == std::string_view::npos) break;  // trailing comma
      if (!parse_number(item, v)) {
        throw ConfigError(fmt::format("line {}: array element '{}' is not a number", line_no, item));
      }
      values.push_back(v);
      if (comma == std::string_view::npos) break;
      body = trim(body.substr(comma + 1));
    }
    return values;
  }
  double v = 0;
  if (!parse_number(raw, v)) throw ConfigError(fmt::format("line {}: cannot parse value '{}'", line_no, raw));
  return v;
}

double as_number(const ConfigValue& value, std::string_view key) {
  if (const auto* d = std::get_if<double>(&value)) return *d;
  throw ConfigError(fmt::format("key '{}' expects a number", key));
}

template <typename Int>
Int as_count(const ConfigValue& value, std::string_view key) {
  const double d = as_number(value, key);
  if (d < 0 || std::floor(d) != d) throw ConfigError(fmt::format("key '{}' expects a non-negative integer", key));
  return static_cast<Int>(d);
}

void apply_key(std::string_view key, const ConfigValue& value, PhysicalEnv& env) {
  if (key == "n_em") {
    env.molecules_per_emission = as_count<std::uint64_t>(value, key);
  } else if (key == "p1") {
    env.p_one = as_number(value, key);
  } else if (key == "b_len") {
    env.sequence_length = as_count<std::uint32_t>(value, key);
  } else if (key == "t_int_ms") {
    env.bit_interval = as_number(value, key) * 1e-3;
  } else if (key == "d_a") {
    env.diffusion_coefficient = as_number(value, key);
  } else if (key == "x0_um") {
    env.transmitter_offset = as_number(value, key) * 1e-6;
  } else if (key == "r_obs_nm") {
    env.receiver_radius = as_number(value, key) * 1e-9;
  } else if (key == "noise_mean") {
    env.noise_mean = as_number(value, key);
  } else if (key == "dt_us") {
    env.sim_step = as_number(value, key) * 1e-6;
  } else if (key == "m") {
    env.samples_per_interval = as_count<std::uint32_t>(value, key);
  } else if (key == "v_mm_s") {
    const auto* list = std::get_if<std::vector<double>>(&value);
    if (list == nullptr || list->size() != 3) throw ConfigError("key 'v_mm_s' expects [vx, vy, vz]");
    env.flow = FlowVector{(*list)[0] * 1e-3, (*list)[1] * 1e-3, (*list)[2] * 1e-3};
  } else {
    throw ConfigError(fmt::format("unknown configuration key '{}'", key));
  }
}

std::string_view leaf(std::string_view qualified) {
  const auto dot = qualified.rfind('.');
  return dot == std::string_view::npos ? qualified : qualified.substr(dot + 1);
}

}  // namespace

ConfigDocument parse_config(std::string_view text) {
  ConfigDocument doc;
  std::string section;
  std::size_t line_no = 0;
  while (!text.empty()) {
    ++line_no;
    const auto nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);

    line = trim(strip_comment(line));
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError(fmt::format("line {}: malformed section header", line_no));
      const auto name = trim(line.substr(1, line.size() - 2));
      if (!valid_key(name)) throw ConfigError(fmt::format("line {}: invalid section name", line_no));
      section = std::string(name);
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) throw ConfigError(fmt::format("line {}: expected key = value", line_no));
    const auto key = trim(line.substr(0, eq));
    if (!valid_key(key)) throw ConfigError(fmt::format("line {}: invalid key '{}'", line_no, key));
    std::string qualified = section.empty() ? std::string(key) : section + "." + std::string(key);
    if (doc.entries.contains(qualified)) {
      throw ConfigError(fmt::format("line {}: duplicate key '{}'", line_no, qualified));
    }
    doc.entries.emplace(std::move(qualified), parse_value(line.substr(eq + 1), line_no));
  }
  return doc;
}

ConfigDocument load_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(fmt::format("cannot open configuration file '{}'", path));
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse_config(buffer.str());
}

void apply_config(const ConfigDocument& doc, PhysicalEnv& env) {
  std::map<std::string, std::string, std::less<>> seen;
  for (const auto& [qualified, value] : doc.entries) {
    const auto key = std::string(leaf(qualified));
    if (auto it = seen.find(key); it != seen.end()) {
      throw ConfigError(fmt::format("key '{}' given twice ('{}' and '{}')", key, it->second, qualified));
    }
    seen.emplace(key, qualified);
    apply_key(key, value, env);
  }
}

void apply_override(std::string_view key, std::string_view value, PhysicalEnv& env) {
  apply_key(leaf(key), parse_value(value, 0), env);
}

std::string render_config(const PhysicalEnv& env) {
  return fmt::format(
      "[transmitter]\n"
      "n_em = {}\n"
      "p1 = {:.17g}\n"
      "b_len = {}\n"
      "t_int_ms = {:.17g}\n"
      "\n"
      "[environment]\n"
      "d_a = {:.17g}\n"
      "x0_um = {:.17g}\n"
      "r_obs_nm = {:.17g}\n"
      "noise_mean = {:.17g}\n"
      "\n"
      "[flow]\n"
      "v_mm_s = [{:.17g}, {:.17g}, {:.17g}]\n"
      "\n"
      "[receiver]\n"
      "m = {}\n"
      "\n"
      "[simulation]\n"
      "dt_us = {:.17g}\n",
      env.molecules_per_emission, env.p_one, env.sequence_length, env.bit_interval * 1e3,
      env.diffusion_coefficient, env.transmitter_offset * 1e6, env.receiver_radius * 1e9, env.noise_mean,
      env.flow.vx * 1e3, env.flow.vy * 1e3, env.flow.vz * 1e3, env.samples_per_interval, env.sim_step * 1e6);
}

}  // namespace mcflow
