#pragma once

// Flat `key = value` scenario files. Blank lines and `#` comments are ignored;
// unknown or duplicate keys are rejected.
//
//   horizon_T = 10
//   ramp_delta = 0.3
//   revenue = quartic_root        # log_quadratic | quartic_root | polynomial
//   cp_fraction = 0.6             # or cp_rate = <value>, never both
//   load_model = gaussian         # gaussian (load_mean, load_std) | uniform (load_low, load_high)

#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "cpeak/domain.hpp"
#include "cpeak/format.hpp"

namespace cpeak {

using ConfigEntries = std::map<std::string, std::string>;

inline ConfigEntries parse_config_entries(std::string_view text) {
  ConfigEntries entries;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const auto nl = text.find('\n', pos);
    std::string_view line = text.substr(pos, nl == std::string_view::npos ? text.size() - pos : nl - pos);
    pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos)
      throw ConfigError("line " + std::to_string(line_no) + ": expected `key = value`");
    std::string key(trim(line.substr(0, eq)));
    std::string value(trim(line.substr(eq + 1)));
    if (key.empty()) throw ConfigError("line " + std::to_string(line_no) + ": empty key");
    if (!entries.emplace(key, value).second)
      throw ConfigError("line " + std::to_string(line_no) + ": duplicate key '" + key + "'");
  }
  return entries;
}

namespace detail {

inline double config_number(const ConfigEntries& e, const std::string& key, double fallback) {
  const auto it = e.find(key);
  if (it == e.end()) return fallback;
  const auto v = parse_double(it->second);
  if (!v || !std::isfinite(*v)) throw ConfigError("key '" + key + "': not a number: " + it->second);
  return *v;
}

inline std::vector<double> config_list(const std::string& key, const std::string& text) {
  std::vector<double> out;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const auto comma = text.find(',', pos);
    const auto token = text.substr(pos, comma == std::string::npos ? std::string::npos : comma - pos);
    const auto v = parse_double(token);
    if (!v) throw ConfigError("key '" + key + "': bad list entry '" + token + "'");
    out.push_back(*v);
    if (comma == std::string::npos) break;
    pos = comma + 1;
  }
  return out;
}

}  // namespace detail

inline ScenarioConfig config_from_entries(const ConfigEntries& e) {
  static const char* const kKnown[] = {
      "horizon_T", "ramp_delta", "x_min",     "x_max",    "cp_rate",   "cp_fraction",
      "revenue",   "revenue_coefficients",    "load_model", "load_mean", "load_std",
      "load_low",  "load_high", "initial_x", "rng_seed"};
  for (const auto& [key, value] : e) {
    bool known = false;
    for (const char* k : kKnown) known = known || key == k;
    if (!known) throw ConfigError("unknown configuration key '" + key + "'");
  }

  ScenarioConfig cfg;
  if (const auto it = e.find("horizon_T"); it != e.end()) {
    const auto v = parse_int(it->second);
    if (!v || *v < 1 || *v > 1'000'000) throw ConfigError("key 'horizon_T': expected a positive integer");
    cfg.horizon_T = static_cast<int>(*v);
  }
  cfg.ramp_delta = detail::config_number(e, "ramp_delta", cfg.ramp_delta);
  cfg.x_min = detail::config_number(e, "x_min", cfg.x_min);
  cfg.x_max = detail::config_number(e, "x_max", cfg.x_max);

  const bool has_rate = e.contains("cp_rate");
  const bool has_fraction = e.contains("cp_fraction");
  if (has_rate && has_fraction) throw ConfigError("cp_rate and cp_fraction are mutually exclusive");
  if (has_rate) cfg.cp_charge = CpCharge::rate(detail::config_number(e, "cp_rate", 0.0));
  if (has_fraction) cfg.cp_charge = CpCharge::fraction(detail::config_number(e, "cp_fraction", 0.6));

  const auto revenue = e.contains("revenue") ? e.at("revenue") : std::string("log_quadratic");
  if (revenue == "log_quadratic") {
    cfg.revenue = RevenueFunction::log_quadratic();
  } else if (revenue == "quartic_root") {
    cfg.revenue = RevenueFunction::quartic_root();
  } else if (revenue == "polynomial") {
    if (!e.contains("revenue_coefficients"))
      throw ConfigError("revenue = polynomial requires revenue_coefficients");
    cfg.revenue = RevenueFunction::polynomial(
        detail::config_list("revenue_coefficients", e.at("revenue_coefficients")));
  } else {
    throw ConfigError("key 'revenue': unknown revenue function '" + revenue + "'");
  }
  if (revenue != "polynomial" && e.contains("revenue_coefficients"))
    throw ConfigError("revenue_coefficients only applies to revenue = polynomial");

  const auto load = e.contains("load_model") ? e.at("load_model") : std::string("gaussian");
  if (load == "gaussian") {
    if (e.contains("load_low") || e.contains("load_high"))
      throw ConfigError("load_low/load_high only apply to load_model = uniform");
    cfg.load_model = LoadModel::gaussian(detail::config_number(e, "load_mean", 0.0),
                                         detail::config_number(e, "load_std", 1.0));
  } else if (load == "uniform") {
    if (e.contains("load_mean") || e.contains("load_std"))
      throw ConfigError("load_mean/load_std only apply to load_model = gaussian");
    cfg.load_model = LoadModel::uniform(detail::config_number(e, "load_low", 0.0),
                                        detail::config_number(e, "load_high", 1.0));
  } else {
    throw ConfigError("key 'load_model': unknown load model '" + load + "'");
  }

  if (e.contains("initial_x")) cfg.initial_x = detail::config_number(e, "initial_x", 0.0);
  if (const auto it = e.find("rng_seed"); it != e.end()) {
    const auto v = parse_u64(it->second);
    if (!v) throw ConfigError("key 'rng_seed': expected an unsigned 64-bit integer");
    cfg.rng_seed = *v;
  }
  cfg.validate();
  return cfg;
}

inline ScenarioConfig parse_config(std::string_view text) {
  return config_from_entries(parse_config_entries(text));
}

inline ScenarioConfig load_config(const std::filesystem::path& path) {
  std::string text;
  try {
    text = read_file(path);
  } catch (const IoError& err) {
    throw ConfigError(err.what());
  }
  return parse_config(text);
}

/// Every key written explicitly; parse_config(serialize_config(c)) == c.
inline std::string serialize_config(const ScenarioConfig& cfg) {
  std::string out;
  const auto put = [&out](std::string_view key, const std::string& value) {
    out.append(key).append(" = ").append(value).push_back('\n');
  };
  put("horizon_T", std::to_string(cfg.horizon_T));
  put("ramp_delta", format_double(cfg.ramp_delta));
  put("x_min", format_double(cfg.x_min));
  put("x_max", format_double(cfg.x_max));
  if (cfg.cp_charge.mode == CpCharge::Mode::Rate)
    put("cp_rate", format_double(cfg.cp_charge.amount));
  else
    put("cp_fraction", format_double(cfg.cp_charge.amount));
  switch (cfg.revenue.kind()) {
    case RevenueKind::LogQuadratic: put("revenue", "log_quadratic"); break;
    case RevenueKind::QuarticRoot: put("revenue", "quartic_root"); break;
    case RevenueKind::Custom: {
      put("revenue", "polynomial");
      std::string list;
      for (double c : cfg.revenue.coefficients()) {
        if (!list.empty()) list += ',';
        list += format_double(c);
      }
      put("revenue_coefficients", list);
      break;
    }
  }
  if (cfg.load_model.kind() == LoadKind::Gaussian) {
    put("load_model", "gaussian");
    put("load_mean", format_double(cfg.load_model.first()));
    put("load_std", format_double(cfg.load_model.second()));
  } else {
    put("load_model", "uniform");
    put("load_low", format_double(cfg.load_model.first()));
    put("load_high", format_double(cfg.load_model.second()));
  }
  if (cfg.initial_x) put("initial_x", format_double(*cfg.initial_x));
  put("rng_seed", std::to_string(cfg.rng_seed));
  return out;
}

}  // namespace cpeak
