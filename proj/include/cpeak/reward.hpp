#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "cpeak/domain.hpp"

namespace cpeak {

/// Realized consumption and loads of one billing horizon with the reward split.
struct EpisodeTrace {
  std::vector<double> consumption;
  std::vector<double> loads;
  std::size_t peak_index = 1;  ///< 1-based round of the system peak.
  double gross_revenue = 0.0;
  double cp_charge = 0.0;
  double reward = 0.0;
};

/// 1-based index of the largest load; ties go to the earliest round.
inline std::size_t coincident_peak_index(std::span<const double> loads) {
  if (loads.empty()) throw DomainError("coincident peak of an empty load sequence");
  std::size_t best = 0;
  for (std::size_t i = 1; i < loads.size(); ++i)
    if (loads[i] > loads[best]) best = i;
  return best + 1;
}

/// Sum of g(x_t) minus cp_rate * x at the peak round. No validation.
inline double trace_reward(std::span<const double> consumption, std::span<const double> loads,
                           const RevenueFunction& revenue, double cp_rate) noexcept {
  double gross = 0.0;
  std::size_t peak = 0;
  for (std::size_t i = 0; i < consumption.size(); ++i) {
    gross += revenue.value(consumption[i]);
    if (loads[i] > loads[peak]) peak = i;
  }
  return gross - cp_rate * consumption[peak];
}

/// Bounds hold every round and each step stays inside feasible_interval of the
/// previous one (the same arithmetic the policies project with).
inline bool trace_is_feasible(std::span<const double> consumption, const ScenarioConfig& cfg) {
  for (std::size_t t = 0; t < consumption.size(); ++t) {
    if (!cfg.in_bounds(consumption[t])) return false;
    if (t > 0 && !feasible_interval(consumption[t - 1], cfg).contains(consumption[t])) return false;
  }
  return true;
}

/// Scores a consumption trace. Ramp feasibility is not checked here.
inline EpisodeTrace episode_reward(std::span<const double> consumption, std::span<const double> loads,
                                   const ScenarioConfig& cfg) {
  if (consumption.empty()) throw DomainError("episode has no rounds");
  if (consumption.size() != loads.size())
    throw DomainError("consumption and load sequences differ in length");
  EpisodeTrace trace;
  trace.consumption.assign(consumption.begin(), consumption.end());
  trace.loads.assign(loads.begin(), loads.end());
  for (double x : consumption) {
    if (!cfg.in_bounds(x)) throw DomainError("consumption outside [x_min, x_max]");
    trace.gross_revenue += cfg.revenue.value(x);
  }
  trace.peak_index = coincident_peak_index(loads);
  trace.cp_charge = cfg.cp_rate() * consumption[trace.peak_index - 1];
  trace.reward = trace.gross_revenue - trace.cp_charge;
  return trace;
}

namespace detail {

inline constexpr double kRootTolerance = 1e-12;
inline constexpr int kRootScanIntervals = 1024;
/// Lower end of the scan; keeps the quarter-root slope finite.
inline constexpr double kSlopeFloor = 1e-9;

/// Roots of g'(x) = level on [lo, hi], bracketed on a uniform scan and refined by bisection.
inline std::vector<double> slope_roots(const RevenueFunction& g, double level, double lo, double hi) {
  std::vector<double> roots;
  const double a0 = std::max(lo, kSlopeFloor);
  if (!(hi > a0)) return roots;
  const auto h = [&](double x) { return g.slope(x) - level; };
  double left = a0;
  double h_left = h(left);
  for (int k = 1; k <= kRootScanIntervals; ++k) {
    const double right = k == kRootScanIntervals ? hi : a0 + (hi - a0) * k / kRootScanIntervals;
    const double h_right = h(right);
    if (h_left == 0.0) {
      roots.push_back(left);
    } else if ((h_left < 0.0) != (h_right < 0.0) && h_right != 0.0) {
      double a = left, b = right, ha = h_left;
      while (b - a > kRootTolerance) {
        const double m = 0.5 * (a + b);
        const double hm = h(m);
        if (hm == 0.0) {
          a = b = m;
          break;
        }
        if ((hm < 0.0) == (ha < 0.0)) {
          a = m;
          ha = hm;
        } else {
          b = m;
        }
      }
      roots.push_back(0.5 * (a + b));
    }
    left = right;
    h_left = h_right;
  }
  if (h_left == 0.0) roots.push_back(hi);
  return roots;
}

inline double penalized(const RevenueFunction& g, double price, double x) {
  return g.value(x) - price * x;
}

}  // namespace detail

/// Solution of the first-order condition g'(x) = price on [lo, hi].
///
/// Without a sign change the boundary the slope points to is returned (hi when
/// g' > price throughout, lo when g' < price throughout). With several roots the
/// one with the largest g(x) - price * x wins.
inline double first_order_point(const RevenueFunction& g, double price, double lo, double hi) {
  const auto roots = detail::slope_roots(g, price, lo, hi);
  if (roots.empty()) {
    const double probe = std::max(lo, detail::kSlopeFloor);
    return g.slope(std::min(probe, hi)) > price ? hi : lo;
  }
  double best = roots.front();
  for (double r : roots)
    if (detail::penalized(g, price, r) > detail::penalized(g, price, best)) best = r;
  return best;
}

/// argmax over [lo, hi] of g(x) - price * x, comparing stationary points and both ends.
inline double maximize_penalized(const RevenueFunction& g, double price, double lo, double hi) {
  double best = lo;
  double best_value = detail::penalized(g, price, lo);
  const auto consider = [&](double x) {
    const double v = detail::penalized(g, price, x);
    if (v > best_value) {
      best = x;
      best_value = v;
    }
  };
  for (double r : detail::slope_roots(g, price, lo, hi)) consider(r);
  consider(hi);
  return best;
}

/// Naive benchmark: constant consumption solving T g'(x) = pi_cp.
inline double naive_consumption(const ScenarioConfig& cfg) {
  const double per_round_price = cfg.cp_rate() / static_cast<double>(cfg.horizon_T);
  return first_order_point(cfg.revenue, per_round_price, cfg.x_min, cfg.x_max);
}

/// Reward of holding the naive consumption every round: T g(x*) - pi_cp x*.
inline double naive_reward(const ScenarioConfig& cfg) {
  const double x = naive_consumption(cfg);
  return static_cast<double>(cfg.horizon_T) * cfg.revenue.value(x) - cfg.cp_rate() * x;
}

/// Round-1 consumption shared by every simulated policy.
inline double initial_consumption(const ScenarioConfig& cfg) {
  return cfg.initial_x ? *cfg.initial_x : naive_consumption(cfg);
}

/// Probability that one specific remaining round sets a new maximum above s_m,
/// after round t: (1 - F(s_m)^(T-t)) / (T-t).
inline double prob_round_is_peak(double s_m, int t, const ScenarioConfig& cfg) {
  if (t < 1 || t >= cfg.horizon_T) throw DomainError("round must satisfy 1 <= t < T");
  const int remaining = cfg.horizon_T - t;
  return (1.0 - std::pow(load_cdf(cfg.load_model, s_m), remaining)) / remaining;
}

/// Probability that any of the remaining T - t rounds exceeds s_m.
inline double prob_any_future_peak(double s_m, int t, const ScenarioConfig& cfg) {
  if (t < 1 || t > cfg.horizon_T) throw DomainError("round must satisfy 1 <= t <= T");
  return 1.0 - std::pow(load_cdf(cfg.load_model, s_m), cfg.horizon_T - t);
}

/// Unconstrained last-round consumption: maximizer of g(x) - pi_cp (1 - F(s_m)) x
/// over [x_min, x_max].
inline double final_round_unconstrained_target(double s_m, const ScenarioConfig& cfg) {
  const double p_last = 1.0 - load_cdf(cfg.load_model, s_m);
  return maximize_penalized(cfg.revenue, cfg.cp_rate() * p_last, cfg.x_min, cfg.x_max);
}

/// Optimal x_T given x_{T-1} and the observed maximum s_m: the maximizer of
/// g(x) - pi_cp (1 - F(s_m)) x over the ramp-feasible interval. For concave g this
/// is the unconstrained target projected onto the interval.
inline double final_round_target(double x_prev, double s_m, const ScenarioConfig& cfg) {
  const auto range = feasible_interval(x_prev, cfg);
  const double p_last = 1.0 - load_cdf(cfg.load_model, s_m);
  return maximize_penalized(cfg.revenue, cfg.cp_rate() * p_last, range.lo, range.hi);
}

}  // namespace cpeak
