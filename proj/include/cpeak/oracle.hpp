#pragma once

// Backward-induction solution of the CP mitigation problem on a grid over
// (current consumption, observed maximum load).
//
// State after round t: current consumption x, running max s_m and the
// consumption x_pk held when s_m was realized. The terminal charge is
// pi_cp * x_pk unless a later round sets a new maximum, and the probability of
// that, F(s_m)^(T-t), does not depend on actions. The value therefore splits as
//
//   V_t(x, s_m, x_pk) = W_t(x, s_m) - pi_cp * x_pk * F(s_m)^(T-t)
//
// and only W_t needs tabulating:
//
//   W_T = 0
//   W_t(x, s_m) = max_{a in F(x)} g(a) + sum_j w_j [ s_j > s_m ? W_{t+1}(a, s_j) - pi_cp a F(s_j)^(T-t-1)
//                                                 : W_{t+1}(a, s_m) ]
//
// with loads restricted to the grid nodes s_j carrying cell probabilities w_j.

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "cpeak/domain.hpp"
#include "cpeak/format.hpp"
#include "cpeak/reward.hpp"
#include "cpeak/rng.hpp"

namespace cpeak {

/// Discretization of consumption and load. Load node j stands for the cell
/// between the midpoints to its neighbours (outer cells extend to infinity).
struct GridSpec {
  std::vector<double> x_nodes;
  std::vector<double> s_nodes;
  std::vector<double> weights;

  std::size_t n_x() const noexcept { return x_nodes.size(); }
  std::size_t n_s() const noexcept { return s_nodes.size(); }
};

inline std::vector<double> linspace(double lo, double hi, std::size_t n) {
  std::vector<double> v(n);
  for (std::size_t i = 0; i < n; ++i)
    v[i] = i + 1 == n ? hi : lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(n - 1);
  return v;
}

/// Grid over [x_min, x_max] and the load model's 0.9999-mass support.
inline GridSpec make_grid(const ScenarioConfig& cfg, std::size_t n_x = 101, std::size_t n_s = 101) {
  if (n_x < 2 || n_s < 2) throw ConfigError("grid needs at least 2 points per axis");
  GridSpec grid;
  grid.x_nodes = linspace(cfg.x_min, cfg.x_max, n_x);
  const auto [s_lo, s_hi] = cfg.load_model.support();
  grid.s_nodes = linspace(s_lo, s_hi, n_s);
  grid.weights.resize(n_s);
  double below = 0.0;
  for (std::size_t j = 0; j + 1 < n_s; ++j) {
    const double edge = 0.5 * (grid.s_nodes[j] + grid.s_nodes[j + 1]);
    const double cdf = cfg.load_model.cdf(edge);
    grid.weights[j] = cdf - below;
    below = cdf;
  }
  grid.weights[n_s - 1] = 1.0 - below;
  double total = 0.0;
  for (double w : grid.weights) total += w;
  for (double& w : grid.weights) w /= total;
  return grid;
}

/// Optimal next consumption and continuation value W_t for rounds 1..T-1.
struct PolicyTable {
  int horizon_T = 0;
  double ramp_delta = 0.0;
  double x_min = 0.0;
  double x_max = 1.0;
  double s_lo = 0.0;
  double s_hi = 1.0;
  std::size_t n_x = 0;
  std::size_t n_s = 0;
  /// actions[t-1][ix * n_s + is]
  std::vector<std::vector<double>> actions;
  /// values[t-1][ix * n_s + is]: expected revenue of rounds t+1..T minus expected
  /// charges landing on those rounds.
  std::vector<std::vector<double>> values;

  double x_node(std::size_t i) const noexcept {
    return i + 1 == n_x ? x_max : x_min + (x_max - x_min) * static_cast<double>(i) / static_cast<double>(n_x - 1);
  }
  double s_node(std::size_t j) const noexcept {
    return j + 1 == n_s ? s_hi : s_lo + (s_hi - s_lo) * static_cast<double>(j) / static_cast<double>(n_s - 1);
  }
  double action(int t, std::size_t ix, std::size_t is) const { return actions.at(t - 1).at(ix * n_s + is); }
  double value(int t, std::size_t ix, std::size_t is) const { return values.at(t - 1).at(ix * n_s + is); }

  friend bool operator==(const PolicyTable&, const PolicyTable&) = default;
};

namespace detail {

/// Per x-node index window of feasible action nodes.
inline std::size_t ramp_reach(const GridSpec& grid, const ScenarioConfig& cfg) {
  const double spacing = (cfg.x_max - cfg.x_min) / static_cast<double>(grid.n_x() - 1);
  if (spacing > 2.0 * cfg.ramp_delta)
    throw ConfigError("consumption grid spacing exceeds twice the ramp limit; refine n_x");
  return static_cast<std::size_t>(std::floor(cfg.ramp_delta / spacing + 1e-9));
}

inline std::vector<double> discrete_cdf(const GridSpec& grid) {
  std::vector<double> cdf(grid.n_s());
  double acc = 0.0;
  for (std::size_t j = 0; j < grid.n_s(); ++j) cdf[j] = acc += grid.weights[j];
  return cdf;
}

}  // namespace detail

inline PolicyTable solve_grid_dp(const ScenarioConfig& cfg, const GridSpec& grid, unsigned threads = 1) {
  cfg.validate();
  if (grid.n_x() < 2 || grid.n_s() < 2 || grid.weights.size() != grid.n_s())
    throw ConfigError("malformed grid");
  const std::size_t reach = detail::ramp_reach(grid, cfg);
  const std::size_t nx = grid.n_x();
  const std::size_t ns = grid.n_s();
  const int T = cfg.horizon_T;
  const double price = cfg.cp_rate();
  const auto cdf = detail::discrete_cdf(grid);

  PolicyTable table;
  table.horizon_T = T;
  table.ramp_delta = cfg.ramp_delta;
  table.x_min = cfg.x_min;
  table.x_max = cfg.x_max;
  table.s_lo = grid.s_nodes.front();
  table.s_hi = grid.s_nodes.back();
  table.n_x = nx;
  table.n_s = ns;
  table.actions.assign(std::max(T - 1, 0), std::vector<double>(nx * ns));
  table.values.assign(std::max(T - 1, 0), std::vector<double>(nx * ns));

  std::vector<double> next(nx * ns, 0.0);  // W_{t+1}
  std::vector<double> cont(nx * ns);       // continuation of choosing action node k at s_m node i
  std::vector<double> charge_tail(ns);
  for (int t = T - 1; t >= 1; --t) {
    const int after = T - t - 1;
    double tail = 0.0;
    for (std::size_t i = ns; i-- > 0;) {
      charge_tail[i] = tail;
      tail += grid.weights[i] * std::pow(cdf[i], after);
    }
    parallel_for(nx, threads, [&](std::size_t k) {
      const double a = grid.x_nodes[k];
      const double revenue = cfg.revenue.value(a);
      const double* w_next = next.data() + k * ns;
      double tail_value = 0.0;
      for (std::size_t i = ns; i-- > 0;) {
        cont[k * ns + i] = revenue + tail_value - price * a * charge_tail[i] + cdf[i] * w_next[i];
        tail_value += grid.weights[i] * w_next[i];
      }
    });
    auto& act = table.actions[t - 1];
    auto& val = table.values[t - 1];
    parallel_for(nx, threads, [&](std::size_t ix) {
      const std::size_t k_lo = ix >= reach ? ix - reach : 0;
      const std::size_t k_hi = std::min(nx - 1, ix + reach);
      for (std::size_t i = 0; i < ns; ++i) {
        std::size_t best = k_lo;
        double best_value = cont[k_lo * ns + i];
        for (std::size_t k = k_lo + 1; k <= k_hi; ++k) {
          if (cont[k * ns + i] > best_value) {
            best_value = cont[k * ns + i];
            best = k;
          }
        }
        act[ix * ns + i] = grid.x_nodes[best];
        val[ix * ns + i] = best_value;
      }
    });
    next = val;
  }
  return table;
}

/// Expected total reward of starting at consumption node ix before any load is seen.
inline double grid_expected_reward(const PolicyTable& table, const GridSpec& grid, const ScenarioConfig& cfg,
                                   std::size_t ix) {
  const double x = grid.x_nodes.at(ix);
  const auto cdf = detail::discrete_cdf(grid);
  double total = cfg.revenue.value(x);
  for (std::size_t j = 0; j < grid.n_s(); ++j) {
    const double future = table.horizon_T >= 2 ? table.value(1, ix, j) : 0.0;
    total += grid.weights[j] * (future - cfg.cp_rate() * x * std::pow(cdf[j], table.horizon_T - 1));
  }
  return total;
}

/// Best round-1 consumption node under the grid model.
inline double grid_best_initial(const PolicyTable& table, const GridSpec& grid, const ScenarioConfig& cfg) {
  std::size_t best = 0;
  double best_value = grid_expected_reward(table, grid, cfg, 0);
  for (std::size_t ix = 1; ix < grid.n_x(); ++ix) {
    const double v = grid_expected_reward(table, grid, cfg, ix);
    if (v > best_value) {
      best_value = v;
      best = ix;
    }
  }
  return grid.x_nodes[best];
}

/// Nearest-node lookup, then projection onto the ramp-feasible interval of x_t.
inline double grid_policy_act(const PolicyTable& table, double x_t, double s_m, int t) {
  if (t < 1 || t >= table.horizon_T) throw DomainError("grid policy round must satisfy 1 <= t < T");
  if (!(x_t >= table.x_min && x_t <= table.x_max)) throw DomainError("consumption outside the table bounds");
  if (std::isnan(s_m)) throw DomainError("observed maximum is NaN");
  const auto nearest = [](double v, double lo, double hi, std::size_t n) -> std::size_t {
    if (v <= lo) return 0;
    if (v >= hi) return n - 1;
    const double pos = (v - lo) / (hi - lo) * static_cast<double>(n - 1);
    return std::min(n - 1, static_cast<std::size_t>(std::llround(pos)));
  };
  const std::size_t ix = nearest(x_t, table.x_min, table.x_max, table.n_x);
  const std::size_t is = nearest(s_m, table.s_lo, table.s_hi, table.n_s);
  const FeasibleInterval range{std::max(table.x_min, x_t - table.ramp_delta),
                               std::min(table.x_max, x_t + table.ramp_delta)};
  return range.project(table.action(t, ix, is));
}

// Binary table file, little-endian:
//   "CPDP" | u16 version | u32 T | u32 n_x | u32 n_s
//   | f64 x_min | f64 x_max | f64 s_lo | f64 s_hi | f64 ramp_delta
//   | for t = 1..T-1: action matrix | for t = 1..T-1: value matrix   (row-major over (x, s))

inline constexpr std::uint16_t kPolicyTableVersion = 1;

namespace detail {

template <class U>
void put_le(std::string& out, U v) {
  for (std::size_t b = 0; b < sizeof(U); ++b) out.push_back(static_cast<char>((v >> (8 * b)) & 0xFF));
}

template <class U>
U get_le(std::string_view in, std::size_t& pos) {
  if (in.size() - pos < sizeof(U)) throw ParseError("truncated policy table");
  U v = 0;
  for (std::size_t b = 0; b < sizeof(U); ++b)
    v |= static_cast<U>(static_cast<unsigned char>(in[pos + b])) << (8 * b);
  pos += sizeof(U);
  return v;
}

}  // namespace detail

inline std::string serialize_policy_table(const PolicyTable& table) {
  std::string out = "CPDP";
  detail::put_le<std::uint16_t>(out, kPolicyTableVersion);
  detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(table.horizon_T));
  detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(table.n_x));
  detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(table.n_s));
  for (double v : {table.x_min, table.x_max, table.s_lo, table.s_hi, table.ramp_delta})
    detail::put_le(out, std::bit_cast<std::uint64_t>(v));
  for (const auto* block : {&table.actions, &table.values})
    for (const auto& m : *block)
      for (double v : m) detail::put_le(out, std::bit_cast<std::uint64_t>(v));
  return out;
}

inline PolicyTable parse_policy_table(std::string_view bytes) {
  if (bytes.substr(0, 4) != "CPDP") throw ParseError("not a policy table (bad magic)");
  std::size_t pos = 4;
  const auto version = detail::get_le<std::uint16_t>(bytes, pos);
  if (version != kPolicyTableVersion)
    throw ParseError("unsupported policy table version " + std::to_string(version));
  PolicyTable table;
  table.horizon_T = static_cast<int>(detail::get_le<std::uint32_t>(bytes, pos));
  table.n_x = detail::get_le<std::uint32_t>(bytes, pos);
  table.n_s = detail::get_le<std::uint32_t>(bytes, pos);
  if (table.horizon_T < 1 || table.n_x < 2 || table.n_s < 2) throw ParseError("invalid policy table header");
  const auto f64 = [&] { return std::bit_cast<double>(detail::get_le<std::uint64_t>(bytes, pos)); };
  table.x_min = f64();
  table.x_max = f64();
  table.s_lo = f64();
  table.s_hi = f64();
  table.ramp_delta = f64();
  const std::size_t cells = table.n_x * table.n_s;
  const std::size_t rounds = static_cast<std::size_t>(table.horizon_T - 1);
  if ((bytes.size() - pos) != 2 * rounds * cells * sizeof(double))
    throw ParseError("policy table payload size does not match its header");
  for (auto* block : {&table.actions, &table.values}) {
    block->assign(rounds, std::vector<double>(cells));
    for (auto& m : *block)
      for (double& v : m) v = f64();
  }
  return table;
}

inline void save_policy_table(const PolicyTable& table, const std::filesystem::path& path) {
  write_file_atomic(path, serialize_policy_table(table));
}

inline PolicyTable load_policy_table(const std::filesystem::path& path) {
  return parse_policy_table(read_file(path));
}

}  // namespace cpeak
