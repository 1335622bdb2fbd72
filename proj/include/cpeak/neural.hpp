#pragma once

// Single-hidden-layer policy network: inputs (x_t, s_m, T - t, 1), four sigmoid
// hidden units, affine output. Trained by minibatch SGD on mean squared error.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "cpeak/domain.hpp"
#include "cpeak/format.hpp"
#include "cpeak/rng.hpp"
#include "cpeak/sampler.hpp"

namespace cpeak {

inline constexpr std::size_t kHidden = 4;
inline constexpr std::size_t kInputs = 4;  // x_t, s_m, rounds left, constant 1
inline constexpr std::size_t kParameterCount = kHidden * kInputs + kHidden + 1;

/// Affine map of the three raw features: (raw - offset) / scale.
struct InputScaling {
  std::array<double, 3> offset{0.0, 0.0, 0.0};
  std::array<double, 3> scale{1.0, 1.0, 1.0};

  friend bool operator==(const InputScaling&, const InputScaling&) = default;
};

/// x to [0, 1] by the bounds, s_m standardized by the load model, rounds left divided by T.
inline InputScaling make_input_scaling(const ScenarioConfig& cfg) {
  return {{cfg.x_min, cfg.load_model.mean(), 0.0},
          {cfg.x_max - cfg.x_min, cfg.load_model.stddev(), static_cast<double>(cfg.horizon_T)}};
}

struct TrainingMeta {
  double learning_rate = 0.05;
  int batch_size = 32;
  int epochs = 2000;
  std::uint64_t seed = 0;
  double final_loss = 0.0;

  friend bool operator==(const TrainingMeta&, const TrainingMeta&) = default;
};

struct MlpPolicy {
  /// input_weights[h][i]; column 3 multiplies the constant bias input.
  std::array<std::array<double, kInputs>, kHidden> input_weights{};
  std::array<double, kHidden> output_weights{};
  double output_bias = 0.0;
  InputScaling input_scaling;
  int horizon_T = 0;
  TrainingMeta training_meta;

  std::array<double, kParameterCount> parameters() const {
    std::array<double, kParameterCount> p{};
    std::size_t k = 0;
    for (const auto& row : input_weights)
      for (double w : row) p[k++] = w;
    for (double v : output_weights) p[k++] = v;
    p[k] = output_bias;
    return p;
  }

  void set_parameters(const std::array<double, kParameterCount>& p) {
    std::size_t k = 0;
    for (auto& row : input_weights)
      for (double& w : row) w = p[k++];
    for (double& v : output_weights) v = p[k++];
    output_bias = p[k];
  }

  friend bool operator==(const MlpPolicy&, const MlpPolicy&) = default;
};

struct TrainHyper {
  double learning_rate = 0.05;
  int batch_size = 32;
  int epochs = 2000;
  std::uint64_t seed = 0;
  /// Share of the dataset held out for the validation loss (skipped below 10 samples).
  double validation_fraction = 0.1;
};

struct TrainReport {
  std::vector<double> epoch_loss;
  double validation_loss = 0.0;
  int epochs = 0;
};

struct TrainResult {
  MlpPolicy policy;
  TrainReport report;
};

namespace detail {

inline double sigmoid(double z) noexcept { return 1.0 / (1.0 + std::exp(-z)); }

struct ForwardCache {
  std::array<double, kInputs> input{};
  std::array<double, kHidden> hidden{};
  double output = 0.0;
};

inline ForwardCache forward(const MlpPolicy& p, double x_t, double s_m, double rounds_left) noexcept {
  ForwardCache c;
  const std::array<double, 3> raw{x_t, s_m, rounds_left};
  for (std::size_t i = 0; i < 3; ++i) c.input[i] = (raw[i] - p.input_scaling.offset[i]) / p.input_scaling.scale[i];
  c.input[3] = 1.0;
  c.output = p.output_bias;
  for (std::size_t h = 0; h < kHidden; ++h) {
    double z = 0.0;
    for (std::size_t i = 0; i < kInputs; ++i) z += p.input_weights[h][i] * c.input[i];
    c.hidden[h] = sigmoid(z);
    c.output += p.output_weights[h] * c.hidden[h];
  }
  return c;
}

/// Adds scale * d(prediction - target)^2 / d(parameters) into grad.
inline void accumulate_gradient(const MlpPolicy& p, const ForwardCache& c, double target, double scale,
                                std::array<double, kParameterCount>& grad) noexcept {
  const double e = 2.0 * (c.output - target) * scale;
  std::size_t k = 0;
  for (std::size_t h = 0; h < kHidden; ++h) {
    const double back = e * p.output_weights[h] * c.hidden[h] * (1.0 - c.hidden[h]);
    for (std::size_t i = 0; i < kInputs; ++i) grad[k++] += back * c.input[i];
  }
  for (std::size_t h = 0; h < kHidden; ++h) grad[k++] += e * c.hidden[h];
  grad[k] += e;
}

inline void check_finite_inputs(double x_t, double s_m, int rounds_left) {
  if (!std::isfinite(x_t) || !std::isfinite(s_m)) throw DomainError("policy inputs must be finite");
  if (rounds_left < 1) throw DomainError("rounds_left must be >= 1");
}

}  // namespace detail

/// Raw network output for x_{t+1}; not projected onto the feasible interval.
inline double mlp_forward(const MlpPolicy& policy, double x_t, double s_m, int rounds_left) {
  detail::check_finite_inputs(x_t, s_m, rounds_left);
  return detail::forward(policy, x_t, s_m, static_cast<double>(rounds_left)).output;
}

/// Backpropagated gradient of (prediction - target)^2.
inline std::array<double, kParameterCount> loss_gradient(const MlpPolicy& policy, const TrainingSample& sample) {
  std::array<double, kParameterCount> grad{};
  const auto cache = detail::forward(policy, sample.x_t, sample.s_m, sample.rounds_left);
  detail::accumulate_gradient(policy, cache, sample.target, 1.0, grad);
  return grad;
}

inline double sample_loss(const MlpPolicy& policy, const TrainingSample& sample) {
  const double err = detail::forward(policy, sample.x_t, sample.s_m, sample.rounds_left).output - sample.target;
  return err * err;
}

inline double mean_squared_error(const MlpPolicy& policy, std::span<const TrainingSample> samples) {
  if (samples.empty()) return 0.0;
  double total = 0.0;
  for (const auto& s : samples) total += sample_loss(policy, s);
  return total / static_cast<double>(samples.size());
}

/// Largest relative gap between the backpropagated gradient and central finite
/// differences, |bp - fd| / max(|bp|, |fd|, 1e-4). Zero when both vanish.
inline double gradient_check(const MlpPolicy& policy, const TrainingSample& sample, double eps) {
  if (!(eps > 0.0)) throw DomainError("finite-difference step must be positive");
  const auto analytic = loss_gradient(policy, sample);
  // Exact fit: every analytic gradient is zero and the metric is defined as 0.
  if (mlp_forward(policy, sample.x_t, sample.s_m, sample.rounds_left) == sample.target) return 0.0;
  const auto base = policy.parameters();
  MlpPolicy probe = policy;
  double worst = 0.0;
  for (std::size_t k = 0; k < kParameterCount; ++k) {
    auto p = base;
    p[k] = base[k] + eps;
    probe.set_parameters(p);
    const double up = sample_loss(probe, sample);
    p[k] = base[k] - eps;
    probe.set_parameters(p);
    const double down = sample_loss(probe, sample);
    const double numeric = (up - down) / (2.0 * eps);
    const double gap = std::abs(analytic[k] - numeric);
    if (gap == 0.0) continue;
    worst = std::max(worst, gap / std::max({std::abs(analytic[k]), std::abs(numeric), 1e-4}));
  }
  return worst;
}

/// Minibatch SGD from uniform[-0.5, 0.5] weights. Deterministic in (dataset, hyper).
inline TrainResult train(std::span<const TrainingSample> dataset, const ScenarioConfig& cfg, const TrainHyper& hyper) {
  if (dataset.empty()) throw TrainingError("training dataset is empty");
  if (!(hyper.learning_rate > 0.0) || hyper.batch_size < 1 || hyper.epochs < 1)
    throw ConfigError("learning rate, batch size and epochs must be positive");
  if (!(hyper.validation_fraction >= 0.0 && hyper.validation_fraction < 1.0))
    throw ConfigError("validation fraction must lie in [0, 1)");

  Rng rng(hyper.seed);
  std::vector<std::size_t> order(dataset.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::shuffle(order.begin(), order.end(), rng);
  std::size_t n_val = 0;
  if (dataset.size() >= 10)
    n_val = static_cast<std::size_t>(std::floor(hyper.validation_fraction * static_cast<double>(dataset.size())));
  std::vector<TrainingSample> validation, training;
  for (std::size_t i = 0; i < order.size(); ++i)
    (i < n_val ? validation : training).push_back(dataset[order[i]]);
  if (validation.empty()) validation = training;

  MlpPolicy policy;
  policy.input_scaling = make_input_scaling(cfg);
  policy.horizon_T = cfg.horizon_T;
  {
    std::uniform_real_distribution<double> init(-0.5, 0.5);
    std::array<double, kParameterCount> p{};
    for (double& w : p) w = init(rng);
    policy.set_parameters(p);
  }

  TrainReport report;
  report.epochs = hyper.epochs;
  report.epoch_loss.reserve(static_cast<std::size_t>(hyper.epochs));
  std::vector<std::size_t> idx(training.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  const std::size_t batch = static_cast<std::size_t>(hyper.batch_size);
  for (int epoch = 1; epoch <= hyper.epochs; ++epoch) {
    std::shuffle(idx.begin(), idx.end(), rng);
    double epoch_total = 0.0;
    for (std::size_t start = 0; start < idx.size(); start += batch) {
      const std::size_t end = std::min(idx.size(), start + batch);
      const double scale = 1.0 / static_cast<double>(end - start);
      std::array<double, kParameterCount> grad{};
      for (std::size_t b = start; b < end; ++b) {
        const auto& s = training[idx[b]];
        const auto cache = detail::forward(policy, s.x_t, s.s_m, s.rounds_left);
        const double err = cache.output - s.target;
        epoch_total += err * err;
        detail::accumulate_gradient(policy, cache, s.target, scale, grad);
      }
      auto p = policy.parameters();
      for (std::size_t k = 0; k < kParameterCount; ++k) p[k] -= hyper.learning_rate * grad[k];
      policy.set_parameters(p);
    }
    const double loss = epoch_total / static_cast<double>(training.size());
    if (!std::isfinite(loss)) throw TrainingError("training diverged at epoch " + std::to_string(epoch));
    report.epoch_loss.push_back(loss);
  }
  for (double w : policy.parameters())
    if (!std::isfinite(w)) throw TrainingError("non-finite weights after epoch " + std::to_string(hyper.epochs));

  report.validation_loss = mean_squared_error(policy, validation);
  policy.training_meta = {hyper.learning_rate, hyper.batch_size, hyper.epochs, hyper.seed,
                          mean_squared_error(policy, training)};
  return {policy, report};
}

/// Network output projected onto the feasible interval of x_t.
inline double policy_act(const MlpPolicy& policy, double x_t, double s_m, int rounds_left, const ScenarioConfig& cfg) {
  const double raw = mlp_forward(policy, x_t, s_m, rounds_left);
  return feasible_interval(x_t, cfg).project(raw);
}

inline void check_policy_horizon(const MlpPolicy& policy, const ScenarioConfig& cfg) {
  if (policy.horizon_T != cfg.horizon_T)
    throw HorizonMismatch("neural policy was trained for T=" + std::to_string(policy.horizon_T) +
                          " but the scenario has T=" + std::to_string(cfg.horizon_T));
}

inline std::string loss_curve_csv(const TrainReport& report) {
  std::string out = "epoch,loss\n";
  for (std::size_t e = 0; e < report.epoch_loss.size(); ++e)
    out += std::to_string(e + 1) + ',' + format_double(report.epoch_loss[e]) + '\n';
  return out;
}

// Weight file:
//   CPNN v1
//   horizon_T <int>
//   input_offset <3 reals>
//   input_scale <3 reals>
//   hidden_0 .. hidden_3 <4 reals each; last column is the bias input>
//   output_weights <4 reals>
//   output_bias <real>
//   learning_rate, batch_size, epochs, seed, final_loss

inline std::string serialize_policy(const MlpPolicy& p) {
  std::string out = "CPNN v1\n";
  const auto row = [&out](std::string_view label, std::span<const double> values) {
    out += label;
    for (double v : values) out += ' ' + format_double(v);
    out += '\n';
  };
  out += "horizon_T " + std::to_string(p.horizon_T) + '\n';
  row("input_offset", p.input_scaling.offset);
  row("input_scale", p.input_scaling.scale);
  for (std::size_t h = 0; h < kHidden; ++h) row("hidden_" + std::to_string(h), p.input_weights[h]);
  row("output_weights", p.output_weights);
  row("output_bias", std::span<const double>(&p.output_bias, 1));
  row("learning_rate", std::span<const double>(&p.training_meta.learning_rate, 1));
  out += "batch_size " + std::to_string(p.training_meta.batch_size) + '\n';
  out += "epochs " + std::to_string(p.training_meta.epochs) + '\n';
  out += "seed " + std::to_string(p.training_meta.seed) + '\n';
  row("final_loss", std::span<const double>(&p.training_meta.final_loss, 1));
  return out;
}

inline MlpPolicy parse_policy(std::string_view text) {
  std::vector<std::string_view> lines;
  for (std::size_t pos = 0; pos < text.size();) {
    const auto nl = text.find('\n', pos);
    lines.push_back(text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos));
    pos = nl == std::string_view::npos ? text.size() : nl + 1;
  }
  std::size_t cursor = 0;
  // Tokens of the next line after checking its label and arity.
  const auto expect = [&](std::string_view label, std::size_t count) {
    const std::size_t line_no = cursor + 1;
    if (cursor >= lines.size()) throw ParseError("unexpected end of file, expected '" + std::string(label) + "'", line_no);
    std::string_view line = lines[cursor++];
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    std::vector<std::string_view> tokens;
    for (std::size_t p = 0; p < line.size();) {
      const auto sp = line.find(' ', p);
      const auto tok = line.substr(p, sp == std::string_view::npos ? std::string_view::npos : sp - p);
      if (!tok.empty()) tokens.push_back(tok);
      p = sp == std::string_view::npos ? line.size() : sp + 1;
    }
    if (tokens.empty() || tokens[0] != label) throw ParseError("expected '" + std::string(label) + "'", line_no);
    if (tokens.size() != count + 1)
      throw ParseError("'" + std::string(label) + "' needs " + std::to_string(count) + " values", line_no);
    return std::make_pair(std::vector<std::string_view>(tokens.begin() + 1, tokens.end()), line_no);
  };
  const auto reals = [&](std::string_view label, std::span<double> dst) {
    const auto [tokens, line_no] = expect(label, dst.size());
    for (std::size_t i = 0; i < dst.size(); ++i) {
      const auto v = parse_double(tokens[i]);
      if (!v || !std::isfinite(*v)) throw ParseError("bad number '" + std::string(tokens[i]) + "'", line_no);
      dst[i] = *v;
    }
  };
  const auto integer = [&](std::string_view label) {
    const auto [tokens, line_no] = expect(label, 1);
    const auto v = parse_int(tokens[0]);
    if (!v) throw ParseError("bad integer '" + std::string(tokens[0]) + "'", line_no);
    return *v;
  };

  if (lines.empty() || (lines[0] != "CPNN v1" && lines[0] != "CPNN v1\r"))
    throw ParseError("missing 'CPNN v1' header", 1);
  cursor = 1;
  MlpPolicy p;
  p.horizon_T = static_cast<int>(integer("horizon_T"));
  reals("input_offset", p.input_scaling.offset);
  reals("input_scale", p.input_scaling.scale);
  for (std::size_t h = 0; h < kHidden; ++h) reals("hidden_" + std::to_string(h), p.input_weights[h]);
  reals("output_weights", p.output_weights);
  reals("output_bias", std::span<double>(&p.output_bias, 1));
  reals("learning_rate", std::span<double>(&p.training_meta.learning_rate, 1));
  p.training_meta.batch_size = static_cast<int>(integer("batch_size"));
  p.training_meta.epochs = static_cast<int>(integer("epochs"));
  {
    const auto [tokens, line_no] = expect("seed", 1);
    const auto v = parse_u64(tokens[0]);
    if (!v) throw ParseError("bad seed", line_no);
    p.training_meta.seed = *v;
  }
  reals("final_loss", std::span<double>(&p.training_meta.final_loss, 1));
  for (; cursor < lines.size(); ++cursor)
    if (!trim(lines[cursor]).empty()) throw ParseError("trailing content", cursor + 1);
  if (p.horizon_T < 1) throw ParseError("horizon_T must be >= 1", 2);
  for (double s : p.input_scaling.scale)
    if (s == 0.0) throw ParseError("input scale must be nonzero", 4);
  return p;
}

inline void save_policy(const MlpPolicy& policy, const std::filesystem::path& path) {
  write_file_atomic(path, serialize_policy(policy));
}

inline MlpPolicy load_policy(const std::filesystem::path& path) { return parse_policy(read_file(path)); }

}  // namespace cpeak
