#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "cpeak/domain.hpp"
#include "cpeak/format.hpp"
#include "cpeak/neural.hpp"
#include "cpeak/oracle.hpp"
#include "cpeak/reward.hpp"
#include "cpeak/rng.hpp"

namespace cpeak {

/// Uniform act(x_t, s_m, t) over the naive benchmark, the grid oracle, a trained
/// network, and a uniform-random feasible baseline.
class PolicyHandle {
 public:
  enum class Kind { Naive, GridOracle, Neural, Random };

  static PolicyHandle naive(const ScenarioConfig& cfg) {
    return PolicyHandle{Kind::Naive, "naive", NaiveState{naive_consumption(cfg), cfg.horizon_T}};
  }
  static PolicyHandle grid(std::shared_ptr<const PolicyTable> table) {
    if (!table) throw DomainError("grid policy needs a table");
    return PolicyHandle{Kind::GridOracle, "grid", std::move(table)};
  }
  static PolicyHandle neural(MlpPolicy policy) {
    return PolicyHandle{Kind::Neural, "nn", std::make_shared<const MlpPolicy>(std::move(policy))};
  }
  static PolicyHandle random() { return PolicyHandle{Kind::Random, "random", std::monostate{}}; }

  Kind kind() const noexcept { return kind_; }
  const std::string& name() const noexcept { return name_; }
  PolicyHandle& rename(std::string name) {
    name_ = std::move(name);
    return *this;
  }

  /// Throws HorizonMismatch when the policy was built for another T.
  void check_horizon(const ScenarioConfig& cfg) const {
    int built_for = cfg.horizon_T;
    if (kind_ == Kind::Naive) built_for = std::get<NaiveState>(state_).horizon_T;
    if (kind_ == Kind::GridOracle) built_for = std::get<TablePtr>(state_)->horizon_T;
    if (kind_ == Kind::Neural) built_for = std::get<NetPtr>(state_)->horizon_T;
    if (built_for != cfg.horizon_T)
      throw HorizonMismatch("policy '" + name_ + "' was built for T=" + std::to_string(built_for) +
                            " but the scenario has T=" + std::to_string(cfg.horizon_T));
  }

  /// Round-1 consumption: the naive policy starts at its own level, all others at
  /// the scenario's initial consumption.
  double initial(const ScenarioConfig& cfg) const {
    if (kind_ == Kind::Naive) return std::get<NaiveState>(state_).level;
    return initial_consumption(cfg);
  }

  /// Next consumption after observing max load s_m at round t; always feasible w.r.t. x_t.
  double act(double x_t, double s_m, int t, const ScenarioConfig& cfg, Rng& rng) const {
    const auto range = feasible_interval(x_t, cfg);
    switch (kind_) {
      case Kind::Naive:
        return range.project(std::get<NaiveState>(state_).level);
      case Kind::GridOracle:
        return range.project(grid_policy_act(*std::get<TablePtr>(state_), x_t, s_m, t));
      case Kind::Neural:
        return policy_act(*std::get<NetPtr>(state_), x_t, s_m, cfg.horizon_T - t, cfg);
      case Kind::Random:
        if (range.lo == range.hi) return range.lo;
        return range.project(std::uniform_real_distribution<double>{range.lo, range.hi}(rng));
    }
    return x_t;
  }

 private:
  struct NaiveState {
    double level;
    int horizon_T;
  };
  using TablePtr = std::shared_ptr<const PolicyTable>;
  using NetPtr = std::shared_ptr<const MlpPolicy>;
  using State = std::variant<std::monostate, NaiveState, TablePtr, NetPtr>;

  PolicyHandle(Kind kind, std::string name, State state)
      : kind_(kind), name_(std::move(name)), state_(std::move(state)) {}

  Kind kind_;
  std::string name_;
  State state_;
};

/// One billing horizon. All T loads are drawn from `rng` before any action, so
/// policies given equal streams face identical loads.
inline EpisodeTrace simulate_episode(const PolicyHandle& policy, const ScenarioConfig& cfg, Rng& rng) {
  policy.check_horizon(cfg);
  const std::size_t T = static_cast<std::size_t>(cfg.horizon_T);
  std::vector<double> loads(T), xs(T);
  for (double& s : loads) s = cfg.load_model.sample(rng);
  xs[0] = policy.initial(cfg);
  double s_m = loads[0];
  for (std::size_t t = 1; t < T; ++t) {
    xs[t] = policy.act(xs[t - 1], s_m, static_cast<int>(t), cfg, rng);
    s_m = std::max(s_m, loads[t]);
  }
  return episode_reward(xs, loads, cfg);
}

struct PolicyStats {
  std::string name;
  double mean = 0.0;
  double std = 0.0;
  double stderr_ = 0.0;
  std::size_t n = 0;
  std::vector<double> rewards;
};

struct ComparisonReport {
  std::uint64_t seed = 0;
  int horizon_T = 0;
  std::vector<PolicyStats> entries;

  const PolicyStats& at(std::string_view name) const {
    for (const auto& e : entries)
      if (e.name == name) return e;
    throw DomainError("no policy named '" + std::string(name) + "' in report");
  }
};

inline PolicyStats summarize(std::string name, std::vector<double> rewards) {
  PolicyStats s;
  s.name = std::move(name);
  s.n = rewards.size();
  double total = 0.0;
  for (double r : rewards) total += r;
  s.mean = s.n ? total / static_cast<double>(s.n) : 0.0;
  double ss = 0.0;
  for (double r : rewards) ss += (r - s.mean) * (r - s.mean);
  s.std = s.n > 1 ? std::sqrt(ss / static_cast<double>(s.n - 1)) : 0.0;
  s.stderr_ = s.n ? s.std / std::sqrt(static_cast<double>(s.n)) : 0.0;
  s.rewards = std::move(rewards);
  return s;
}

/// Episode e of every policy uses stream (seed, e): common random loads.
inline ComparisonReport compare_policies(std::span<const PolicyHandle> policies, const ScenarioConfig& cfg,
                                         std::size_t n_episodes, std::uint64_t seed, unsigned threads = 1) {
  if (n_episodes < 1) throw DomainError("comparison needs at least one episode");
  for (const auto& p : policies) p.check_horizon(cfg);
  ComparisonReport report;
  report.seed = seed;
  report.horizon_T = cfg.horizon_T;
  for (const auto& policy : policies) {
    std::vector<double> rewards(n_episodes);
    parallel_for(n_episodes, threads, [&](std::size_t e) {
      Rng rng = make_stream(seed, e);
      rewards[e] = simulate_episode(policy, cfg, rng).reward;
    });
    report.entries.push_back(summarize(policy.name(), std::move(rewards)));
  }
  return report;
}

struct PairedDifference {
  double mean = 0.0;
  double stderr_ = 0.0;
};

/// Mean and standard error of the per-episode difference a - b.
inline PairedDifference paired_difference(const PolicyStats& a, const PolicyStats& b) {
  if (a.rewards.size() != b.rewards.size() || a.rewards.empty())
    throw DomainError("paired difference needs equal, nonempty episode counts");
  std::vector<double> diff(a.rewards.size());
  for (std::size_t i = 0; i < diff.size(); ++i) diff[i] = a.rewards[i] - b.rewards[i];
  const auto s = summarize("diff", std::move(diff));
  return {s.mean, s.stderr_};
}

inline constexpr std::string_view kReportHeader = "policy,T,mean,std,stderr,n";

inline std::string report_csv(std::span<const ComparisonReport> reports) {
  std::string out(kReportHeader);
  out += '\n';
  for (const auto& r : reports)
    for (const auto& e : r.entries)
      out += e.name + ',' + std::to_string(r.horizon_T) + ',' + format_double(e.mean) + ',' + format_double(e.std) +
             ',' + format_double(e.stderr_) + ',' + std::to_string(e.n) + '\n';
  return out;
}

/// actions[row][col] = x_{t+1} for t = t_values[row], s_m = s_m_grid[col], at x_t = x_fixed.
inline std::vector<std::vector<double>> policy_slice(const PolicyHandle& policy, double x_fixed,
                                                     std::span<const int> t_values, std::span<const double> s_m_grid,
                                                     const ScenarioConfig& cfg) {
  if (!cfg.in_bounds(x_fixed)) throw DomainError("slice consumption outside [x_min, x_max]");
  Rng rng(cfg.rng_seed);
  std::vector<std::vector<double>> out;
  out.reserve(t_values.size());
  for (int t : t_values) {
    std::vector<double> row;
    row.reserve(s_m_grid.size());
    for (double s : s_m_grid) row.push_back(policy.act(x_fixed, s, t, cfg, rng));
    out.push_back(std::move(row));
  }
  return out;
}

inline std::string slice_csv(std::span<const int> t_values, std::span<const double> s_m_grid,
                             const std::vector<std::vector<double>>& actions) {
  std::string out = "t,s_m,action\n";
  for (std::size_t r = 0; r < t_values.size(); ++r)
    for (std::size_t c = 0; c < s_m_grid.size(); ++c)
      out += std::to_string(t_values[r]) + ',' + format_double(s_m_grid[c]) + ',' + format_double(actions[r][c]) + '\n';
  return out;
}

/// Static SVG line chart of mean reward against T, one polyline per policy.
inline std::string reward_chart_svg(std::span<const ComparisonReport> reports) {
  std::map<std::string, std::vector<std::pair<int, double>>> series;
  std::vector<std::string> order;
  double y_lo = 0.0, y_hi = 0.0;
  int t_lo = 0, t_hi = 0;
  bool first = true;
  for (const auto& r : reports)
    for (const auto& e : r.entries) {
      if (!series.contains(e.name)) order.push_back(e.name);
      series[e.name].emplace_back(r.horizon_T, e.mean);
      if (first) {
        y_lo = y_hi = e.mean;
        t_lo = t_hi = r.horizon_T;
        first = false;
      }
      y_lo = std::min(y_lo, e.mean);
      y_hi = std::max(y_hi, e.mean);
      t_lo = std::min(t_lo, r.horizon_T);
      t_hi = std::max(t_hi, r.horizon_T);
    }
  if (y_hi == y_lo) {
    y_lo -= 1.0;
    y_hi += 1.0;
  }
  if (t_hi == t_lo) {
    t_lo -= 1;
    t_hi += 1;
  }
  constexpr double W = 640, H = 400, L = 70, R = 150, Tm = 30, B = 50;
  const auto px = [&](double t) { return L + (t - t_lo) / (t_hi - t_lo) * (W - L - R); };
  const auto py = [&](double y) { return H - B - (y - y_lo) / (y_hi - y_lo) * (H - Tm - B); };
  static const char* const kColors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"};

  std::string svg = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"640\" height=\"400\" font-family=\"sans-serif\" font-size=\"12\">\n";
  svg += "<rect width=\"640\" height=\"400\" fill=\"white\"/>\n";
  svg += "<line x1=\"" + format_fixed(L, 1) + "\" y1=\"" + format_fixed(H - B, 1) + "\" x2=\"" + format_fixed(W - R, 1) +
         "\" y2=\"" + format_fixed(H - B, 1) + "\" stroke=\"black\"/>\n";
  svg += "<line x1=\"" + format_fixed(L, 1) + "\" y1=\"" + format_fixed(Tm, 1) + "\" x2=\"" + format_fixed(L, 1) +
         "\" y2=\"" + format_fixed(H - B, 1) + "\" stroke=\"black\"/>\n";
  for (int t = t_lo; t <= t_hi; ++t)
    svg += "<text x=\"" + format_fixed(px(t), 1) + "\" y=\"" + format_fixed(H - B + 18, 1) +
           "\" text-anchor=\"middle\">" + std::to_string(t) + "</text>\n";
  for (int k = 0; k <= 4; ++k) {
    const double y = y_lo + (y_hi - y_lo) * k / 4.0;
    svg += "<text x=\"" + format_fixed(L - 6, 1) + "\" y=\"" + format_fixed(py(y) + 4, 1) + "\" text-anchor=\"end\">" +
           format_fixed(y, 2) + "</text>\n";
  }
  svg += "<text x=\"" + format_fixed((L + W - R) / 2, 1) + "\" y=\"" + format_fixed(H - 10, 1) +
         "\" text-anchor=\"middle\">horizon T</text>\n";
  svg += "<text x=\"16\" y=\"" + format_fixed(H / 2, 1) + "\" transform=\"rotate(-90 16 " + format_fixed(H / 2, 1) +
         ")\" text-anchor=\"middle\">mean reward</text>\n";
  for (std::size_t i = 0; i < order.size(); ++i) {
    auto pts = series[order[i]];
    std::sort(pts.begin(), pts.end());
    const char* color = kColors[i % std::size(kColors)];
    std::string path;
    for (const auto& [t, y] : pts) path += format_fixed(px(t), 2) + ',' + format_fixed(py(y), 2) + ' ';
    if (!path.empty()) path.pop_back();
    svg += "<polyline fill=\"none\" stroke=\"" + std::string(color) + "\" stroke-width=\"2\" points=\"" + path + "\"/>\n";
    for (const auto& [t, y] : pts)
      svg += "<circle cx=\"" + format_fixed(px(t), 2) + "\" cy=\"" + format_fixed(py(y), 2) + "\" r=\"3\" fill=\"" +
             color + "\"/>\n";
    const double ly = Tm + 18.0 * static_cast<double>(i);
    svg += "<line x1=\"" + format_fixed(W - R + 15, 1) + "\" y1=\"" + format_fixed(ly, 1) + "\" x2=\"" +
           format_fixed(W - R + 35, 1) + "\" y2=\"" + format_fixed(ly, 1) + "\" stroke=\"" + color +
           "\" stroke-width=\"2\"/>\n";
    svg += "<text x=\"" + format_fixed(W - R + 40, 1) + "\" y=\"" + format_fixed(ly + 4, 1) + "\">" + order[i] +
           "</text>\n";
  }
  svg += "</svg>\n";
  return svg;
}

}  // namespace cpeak
