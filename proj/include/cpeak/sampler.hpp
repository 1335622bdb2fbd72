#pragma once

// Monte Carlo path sampling of near-optimal next consumptions, and assembly of
// the neural-policy training set from those targets.

#include <algorithm>
#include <cstdint>
#include <limits>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "cpeak/domain.hpp"
#include "cpeak/format.hpp"
#include "cpeak/reward.hpp"
#include "cpeak/rng.hpp"

namespace cpeak {

struct TrainingSample {
  double x_t = 0.0;
  double s_m = 0.0;
  int rounds_left = 1;  ///< T - t
  double target = 0.0;  ///< estimated optimal x_{t+1}

  friend bool operator==(const TrainingSample&, const TrainingSample&) = default;
};

struct SamplerParams {
  int n_rollouts = 100;          ///< C
  int n_action_grid = 25;        ///< candidate x_{t+1} values across the feasible interval
  int samples_per_round = 1000;
  /// Charge x_t when no later round beats s_m (the rollout trace starts [x_t, ...]
  /// with load s_m). Off drops that term, which is identical across candidates in
  /// expectation.
  bool charge_past_peak = true;

  void validate() const {
    if (n_rollouts < 1 || n_action_grid < 1 || samples_per_round < 1)
      throw ConfigError("sampler parameters must all be >= 1");
  }
};

/// Estimated best x_{t+1} from state (x_t, s_m) after round t.
///
/// Each of n_action_grid evenly spaced candidates in the feasible interval of x_t
/// is scored by the mean reward of n_rollouts forward simulations. A rollout
/// draws loads for rounds t+1..T and, from round t+2 on, picks consumption
/// uniformly within the ramp-feasible interval of the previous round; it is
/// scored on x = [x_t, x_{t+1}, ..., x_T], s = [s_m, s_{t+1}, ..., s_T].
inline double sample_target(double x_t, double s_m, int t, const ScenarioConfig& cfg,
                            const SamplerParams& params, Rng& rng) {
  params.validate();
  const int T = cfg.horizon_T;
  if (t < 1 || t >= T) throw DomainError("sampling round must satisfy 1 <= t < T");
  const auto range = feasible_interval(x_t, cfg);
  const double price = cfg.cp_rate();
  const std::uint64_t base = rng();
  const std::size_t len = static_cast<std::size_t>(T - t + 1);
  std::vector<double> xs(len), ss(len);
  const std::size_t n = static_cast<std::size_t>(params.n_action_grid);

  double best_x = range.hi;
  double best_mean = 0.0;
  for (std::size_t c = 0; c < n; ++c) {
    const double candidate =
        n == 1 ? 0.5 * (range.lo + range.hi)
               : (c + 1 == n ? range.hi : range.lo + range.width() * static_cast<double>(c) / static_cast<double>(n - 1));
    Rng stream = make_stream(base, c);
    double total = 0.0;
    for (int j = 0; j < params.n_rollouts; ++j) {
      xs[0] = x_t;
      ss[0] = params.charge_past_peak ? s_m : -std::numeric_limits<double>::infinity();
      xs[1] = candidate;
      ss[1] = cfg.load_model.sample(stream);
      for (std::size_t k = 2; k < len; ++k) {
        ss[k] = cfg.load_model.sample(stream);
        const double lo = std::max(cfg.x_min, xs[k - 1] - cfg.ramp_delta);
        const double hi = std::min(cfg.x_max, xs[k - 1] + cfg.ramp_delta);
        xs[k] = lo == hi ? lo : std::uniform_real_distribution<double>{lo, hi}(stream);
        if (xs[k] > hi) xs[k] = hi;
      }
      total += trace_reward(xs, ss, cfg.revenue, price);
    }
    const double mean = total / params.n_rollouts;
    if (c == 0 || mean > best_mean) {
      best_mean = mean;
      best_x = candidate;
    }
  }
  return best_x;
}

/// (T-1) * samples_per_round samples ordered by round, then sample index.
/// Sample (t, i) uses its own RNG stream, so output is independent of `threads`.
inline std::vector<TrainingSample> generate_dataset(const ScenarioConfig& cfg, const SamplerParams& params,
                                                    std::uint64_t seed, unsigned threads = 1) {
  cfg.validate();
  params.validate();
  if (cfg.horizon_T < 2) throw DomainError("dataset generation needs T >= 2");
  const std::size_t per_round = static_cast<std::size_t>(params.samples_per_round);
  const std::size_t rounds = static_cast<std::size_t>(cfg.horizon_T - 1);
  std::vector<TrainingSample> out(rounds * per_round);
  parallel_for(out.size(), threads, [&](std::size_t idx) {
    const int t = static_cast<int>(idx / per_round) + 1;
    Rng rng = make_stream(seed, static_cast<std::uint64_t>(t), idx % per_round);
    TrainingSample& sample = out[idx];
    sample.x_t = std::uniform_real_distribution<double>{cfg.x_min, cfg.x_max}(rng);
    double s_m = cfg.load_model.sample(rng);
    for (int k = 1; k < t; ++k) s_m = std::max(s_m, cfg.load_model.sample(rng));
    sample.s_m = s_m;
    sample.rounds_left = cfg.horizon_T - t;
    sample.target = sample_target(sample.x_t, s_m, t, cfg, params, rng);
  });
  return out;
}

inline constexpr std::string_view kDatasetHeader = "x_t,s_m,rounds_left,target";

inline std::string dataset_to_csv(const std::vector<TrainingSample>& samples) {
  std::string out(kDatasetHeader);
  out.push_back('\n');
  for (const auto& s : samples) {
    out += format_double(s.x_t);
    out += ',';
    out += format_double(s.s_m);
    out += ',';
    out += std::to_string(s.rounds_left);
    out += ',';
    out += format_double(s.target);
    out += '\n';
  }
  return out;
}

inline std::vector<TrainingSample> dataset_from_csv(std::string_view text) {
  std::vector<TrainingSample> samples;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  bool header_seen = false;
  while (pos < text.size()) {
    const auto nl = text.find('\n', pos);
    auto line = text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
    pos = nl == std::string_view::npos ? text.size() : nl + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (!header_seen) {
      if (line != kDatasetHeader) throw ParseError("expected header '" + std::string(kDatasetHeader) + "'", line_no);
      header_seen = true;
      continue;
    }
    if (line.empty()) continue;
    std::string_view fields[4];
    std::size_t start = 0;
    for (int f = 0; f < 4; ++f) {
      const auto comma = line.find(',', start);
      if ((f < 3) == (comma == std::string_view::npos)) throw ParseError("expected 4 fields", line_no);
      fields[f] = line.substr(start, f < 3 ? comma - start : std::string_view::npos);
      start = comma + 1;
    }
    const auto x = parse_double(fields[0]);
    const auto s = parse_double(fields[1]);
    const auto r = parse_int(fields[2]);
    const auto y = parse_double(fields[3]);
    if (!x || !s || !r || !y || *r < 1) throw ParseError("malformed dataset row", line_no);
    samples.push_back({*x, *s, static_cast<int>(*r), *y});
  }
  if (!header_seen) throw ParseError("empty dataset file");
  return samples;
}

}  // namespace cpeak
