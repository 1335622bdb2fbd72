#pragma once

// Problem parameters shared by every module: revenue functions, the system load
// model, scenario configuration and ramp feasibility.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "cpeak/errors.hpp"
#include "cpeak/rng.hpp"

namespace cpeak {

/// Coefficient of the quarter-root revenue function, kept at its published
/// three-decimal value rather than 2 ln 2.
inline constexpr double kQuarticRootCoefficient = 1.386;

enum class RevenueKind { LogQuadratic, QuarticRoot, Custom };

/// Consumer revenue g(x) for consumption x >= 0.
///
/// LogQuadratic: g(x) = 2 log(1 + x^2).
/// QuarticRoot:  g(x) = 1.386 x^(1/4).
/// Custom:       polynomial g(x) = sum_k c_k x^k with g' taken termwise.
class RevenueFunction {
 public:
  RevenueFunction() = default;

  static RevenueFunction log_quadratic() { return RevenueFunction{RevenueKind::LogQuadratic, {}}; }
  static RevenueFunction quartic_root() { return RevenueFunction{RevenueKind::QuarticRoot, {}}; }
  static RevenueFunction polynomial(std::vector<double> coefficients) {
    if (coefficients.empty()) throw ConfigError("custom revenue needs at least one coefficient");
    for (double c : coefficients)
      if (!std::isfinite(c)) throw ConfigError("custom revenue coefficient is not finite");
    return RevenueFunction{RevenueKind::Custom, std::move(coefficients)};
  }

  RevenueKind kind() const noexcept { return kind_; }
  std::span<const double> coefficients() const noexcept { return coefficients_; }

  /// Unchecked evaluation; callers guarantee x >= 0.
  double value(double x) const noexcept {
    switch (kind_) {
      case RevenueKind::LogQuadratic:
        return 2.0 * std::log1p(x * x);
      case RevenueKind::QuarticRoot:
        return kQuarticRootCoefficient * std::sqrt(std::sqrt(x));
      case RevenueKind::Custom: {
        double acc = 0.0;
        for (auto it = coefficients_.rbegin(); it != coefficients_.rend(); ++it) acc = acc * x + *it;
        return acc;
      }
    }
    return 0.0;
  }

  /// Unchecked derivative; QuarticRoot returns +inf at 0.
  double slope(double x) const noexcept {
    switch (kind_) {
      case RevenueKind::LogQuadratic:
        return 4.0 * x / (1.0 + x * x);
      case RevenueKind::QuarticRoot:
        return 0.25 * kQuarticRootCoefficient / std::pow(x, 0.75);
      case RevenueKind::Custom: {
        double acc = 0.0;
        for (std::size_t k = coefficients_.size(); k-- > 1;)
          acc = acc * x + static_cast<double>(k) * coefficients_[k];
        return acc;
      }
    }
    return 0.0;
  }

  friend bool operator==(const RevenueFunction&, const RevenueFunction&) = default;

 private:
  RevenueFunction(RevenueKind kind, std::vector<double> coefficients)
      : kind_(kind), coefficients_(std::move(coefficients)) {}

  RevenueKind kind_ = RevenueKind::LogQuadratic;
  std::vector<double> coefficients_;
};

inline double revenue_eval(const RevenueFunction& fn, double x) {
  if (!(x >= 0.0)) throw DomainError("revenue is undefined for negative consumption");
  return fn.value(x);
}

inline double revenue_derivative(const RevenueFunction& fn, double x) {
  if (!(x >= 0.0)) throw DomainError("revenue derivative is undefined for negative consumption");
  if (x == 0.0 && fn.kind() == RevenueKind::QuarticRoot)
    throw DomainError("quarter-root revenue derivative is singular at 0");
  return fn.slope(x);
}

enum class LoadKind { Gaussian, Uniform };

/// Distribution of the per-round system load. Draws are iid across rounds.
class LoadModel {
 public:
  LoadModel() = default;

  static LoadModel gaussian(double mean, double stddev) {
    if (!(stddev > 0.0) || !std::isfinite(stddev) || !std::isfinite(mean))
      throw ConfigError("gaussian load model needs finite mean and std > 0");
    return LoadModel{LoadKind::Gaussian, mean, stddev};
  }
  static LoadModel uniform(double low, double high) {
    if (!(high > low) || !std::isfinite(low) || !std::isfinite(high))
      throw ConfigError("uniform load model needs finite low < high");
    return LoadModel{LoadKind::Uniform, low, high};
  }

  LoadKind kind() const noexcept { return kind_; }
  /// Gaussian: (mean, std). Uniform: (low, high).
  double first() const noexcept { return a_; }
  double second() const noexcept { return b_; }

  double mean() const noexcept { return kind_ == LoadKind::Gaussian ? a_ : 0.5 * (a_ + b_); }
  double stddev() const noexcept {
    return kind_ == LoadKind::Gaussian ? b_ : (b_ - a_) / std::sqrt(12.0);
  }

  double cdf(double s) const noexcept {
    if (kind_ == LoadKind::Gaussian) {
      if (std::isinf(s)) return s > 0 ? 1.0 : 0.0;
      return 0.5 * std::erfc(-(s - a_) / (b_ * std::numbers::sqrt2));
    }
    if (s <= a_) return 0.0;
    if (s >= b_) return 1.0;
    return (s - a_) / (b_ - a_);
  }

  /// Interval holding at least 0.9999 of the probability mass.
  std::pair<double, double> support() const noexcept {
    if (kind_ == LoadKind::Gaussian) return {a_ - 4.0 * b_, a_ + 4.0 * b_};
    return {a_, b_};
  }

  double sample(Rng& rng) const {
    if (kind_ == LoadKind::Gaussian) return std::normal_distribution<double>{a_, b_}(rng);
    return std::uniform_real_distribution<double>{a_, b_}(rng);
  }

  friend bool operator==(const LoadModel&, const LoadModel&) = default;

 private:
  LoadModel(LoadKind kind, double a, double b) : kind_(kind), a_(a), b_(b) {}

  LoadKind kind_ = LoadKind::Gaussian;
  double a_ = 0.0;
  double b_ = 1.0;
};

inline double load_cdf(const LoadModel& model, double s) { return model.cdf(s); }

struct FeasibleInterval {
  double lo = 0.0;
  double hi = 0.0;

  double width() const noexcept { return hi - lo; }
  bool contains(double x) const noexcept { return x >= lo && x <= hi; }
  double project(double x) const noexcept { return x < lo ? lo : (x > hi ? hi : x); }
};

/// CP charge given either as an absolute rate or as a fraction of the maximum
/// gross revenue over the horizon.
struct CpCharge {
  enum class Mode { Rate, Fraction };
  Mode mode = Mode::Fraction;
  double amount = 0.6;

  static CpCharge rate(double r) { return {Mode::Rate, r}; }
  static CpCharge fraction(double f) { return {Mode::Fraction, f}; }

  friend bool operator==(const CpCharge&, const CpCharge&) = default;
};

struct ScenarioConfig {
  int horizon_T = 4;
  double ramp_delta = 0.3;
  double x_min = 0.0;
  double x_max = 1.0;
  CpCharge cp_charge;
  RevenueFunction revenue;
  LoadModel load_model;
  /// Round-1 consumption. Unset means the naive benchmark consumption.
  std::optional<double> initial_x;
  std::uint64_t rng_seed = 1;

  /// pi_cp; with a fraction this is fraction * T * g(x_max).
  double cp_rate() const noexcept {
    if (cp_charge.mode == CpCharge::Mode::Rate) return cp_charge.amount;
    return cp_charge.amount * static_cast<double>(horizon_T) * revenue.value(x_max);
  }

  bool in_bounds(double x) const noexcept { return x >= x_min && x <= x_max; }

  void validate() const {
    if (horizon_T < 1) throw ConfigError("horizon_T must be >= 1");
    if (!(ramp_delta >= 0.0) || !std::isfinite(ramp_delta))
      throw ConfigError("ramp_delta must be a finite value >= 0");
    if (!(x_min >= 0.0) || !std::isfinite(x_min)) throw ConfigError("x_min must be >= 0");
    if (!(x_max > x_min) || !std::isfinite(x_max)) throw ConfigError("x_max must exceed x_min");
    if (cp_charge.mode == CpCharge::Mode::Rate) {
      if (!(cp_charge.amount >= 0.0) || !std::isfinite(cp_charge.amount))
        throw ConfigError("cp_rate must be a finite value >= 0");
    } else if (!(cp_charge.amount >= 0.0 && cp_charge.amount <= 1.0)) {
      throw ConfigError("cp_fraction must lie in [0, 1]");
    }
    if (initial_x && !in_bounds(*initial_x))
      throw ConfigError("initial_x must lie in [x_min, x_max]");
  }

  friend bool operator==(const ScenarioConfig&, const ScenarioConfig&) = default;
};

/// Consumption range reachable from x_prev in one round.
inline FeasibleInterval feasible_interval(double x_prev, const ScenarioConfig& cfg) {
  if (!cfg.in_bounds(x_prev)) throw DomainError("previous consumption outside [x_min, x_max]");
  return {std::max(cfg.x_min, x_prev - cfg.ramp_delta), std::min(cfg.x_max, x_prev + cfg.ramp_delta)};
}

}  // namespace cpeak
