#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <random>
#include <vector>

#include "cpeak/neural.hpp"

namespace cpeak {
namespace {

MlpPolicy random_policy(Rng& rng, double spread = 1.0) {
  std::uniform_real_distribution<double> u(-spread, spread);
  std::array<double, kParameterCount> p{};
  for (double& v : p) v = u(rng);
  MlpPolicy policy;
  policy.set_parameters(p);
  policy.input_scaling = make_input_scaling(ScenarioConfig{});
  policy.horizon_T = 4;
  return policy;
}

TrainingSample random_sample(Rng& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::normal_distribution<double> n(0.0, 1.0);
  return {u(rng), n(rng), 1 + static_cast<int>(rng() % 3), u(rng)};
}

TEST(Forward, ZeroWeightsGiveZero) {
  const MlpPolicy policy;
  EXPECT_EQ(mlp_forward(policy, 0.7, -1.2, 3), 0.0);
  EXPECT_EQ(mlp_forward(policy, 0.0, 5.0, 1), 0.0);
}

TEST(Forward, OutputBiasAloneIsConstant) {
  Rng rng(2);
  auto policy = random_policy(rng);
  policy.output_weights = {0.0, 0.0, 0.0, 0.0};
  policy.output_bias = 0.37;
  for (int i = 0; i < 50; ++i) {
    const auto s = random_sample(rng);
    EXPECT_EQ(mlp_forward(policy, s.x_t, s.s_m, s.rounds_left), 0.37);
  }
}

TEST(Forward, SingleHiddenUnitHandCase) {
  MlpPolicy policy;
  policy.input_weights[0] = {1.0, 0.0, 0.0, 0.0};
  policy.output_weights[0] = 2.0;
  EXPECT_DOUBLE_EQ(mlp_forward(policy, 0.0, 0.4, 2), 1.0);
  EXPECT_DOUBLE_EQ(mlp_forward(policy, 1.0, 0.4, 2), 2.0 / (1.0 + std::exp(-1.0)));
}

TEST(Forward, RejectsNonFiniteInputs) {
  const MlpPolicy policy;
  EXPECT_THROW(mlp_forward(policy, NAN, 0.0, 1), DomainError);
  EXPECT_THROW(mlp_forward(policy, 0.1, INFINITY, 1), DomainError);
  EXPECT_THROW(mlp_forward(policy, 0.1, 0.0, 0), DomainError);
}

TEST(Gradient, MatchesCentralDifferences) {
  Rng rng(404);
  double worst = 0.0;
  for (int i = 0; i < 100; ++i) {
    const auto policy = random_policy(rng);
    worst = std::max(worst, gradient_check(policy, random_sample(rng), 1e-6));
  }
  EXPECT_LT(worst, 1e-4);
}

TEST(Gradient, ZeroErrorSampleHasZeroGradient) {
  Rng rng(5);
  const auto policy = random_policy(rng);
  auto sample = random_sample(rng);
  sample.target = mlp_forward(policy, sample.x_t, sample.s_m, sample.rounds_left);
  const auto grad = loss_gradient(policy, sample);
  EXPECT_EQ(grad[kParameterCount - 1], 0.0);
  for (double g : grad) EXPECT_EQ(g, 0.0);
  EXPECT_EQ(gradient_check(policy, sample, 1e-6), 0.0);
  EXPECT_THROW(gradient_check(policy, sample, 0.0), DomainError);
}

std::vector<TrainingSample> toy_dataset(std::size_t n, double (*target)(double), std::uint64_t seed) {
  Rng rng(seed);
  std::vector<TrainingSample> data(n);
  for (auto& s : data) {
    s = random_sample(rng);
    s.target = target(s.x_t);
  }
  return data;
}

TEST(Train, ConstantTargetIsLearned) {
  const auto data = toy_dataset(300, [](double) { return 0.42; }, 1);
  const auto result = train(data, ScenarioConfig{}, TrainHyper{});
  EXPECT_LT(result.report.epoch_loss.back(), 1e-4);
  for (const auto& s : data) EXPECT_NEAR(mlp_forward(result.policy, s.x_t, s.s_m, s.rounds_left), 0.42, 0.01);
}

TEST(Train, LinearTargetReachesSmallValidationLoss) {
  const auto data = toy_dataset(500, [](double x) { return 0.5 * x; }, 2);
  // Sanity bound: ordinary least squares of target on x_t fits exactly.
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (const auto& s : data) sx += s.x_t, sy += s.target, sxx += s.x_t * s.x_t, sxy += s.x_t * s.target;
  const double n = static_cast<double>(data.size());
  const double slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
  EXPECT_NEAR(slope, 0.5, 1e-9);

  const auto result = train(data, ScenarioConfig{}, TrainHyper{});
  EXPECT_LT(result.report.validation_loss, 1e-3);
  EXPECT_EQ(result.report.epochs, 2000);
  EXPECT_EQ(result.report.epoch_loss.size(), 2000u);
}

TEST(Train, DeterministicForSeed) {
  const auto data = toy_dataset(200, [](double x) { return x * x; }, 3);
  TrainHyper hyper;
  hyper.epochs = 100;
  hyper.seed = 9;
  const auto a = train(data, ScenarioConfig{}, hyper);
  const auto b = train(data, ScenarioConfig{}, hyper);
  EXPECT_EQ(a.policy, b.policy);
  EXPECT_EQ(a.report.epoch_loss, b.report.epoch_loss);
  hyper.seed = 10;
  EXPECT_NE(train(data, ScenarioConfig{}, hyper).policy, a.policy);
}

TEST(Train, WindowedLossDoesNotIncrease) {
  const auto data = toy_dataset(400, [](double x) { return 0.2 + 0.6 * x; }, 4);
  const auto result = train(data, ScenarioConfig{}, TrainHyper{});
  const auto& loss = result.report.epoch_loss;
  double prev = INFINITY;
  for (std::size_t w = 0; w + 200 <= loss.size(); w += 200) {
    double mean = 0.0;
    for (std::size_t e = w; e < w + 200; ++e) {
      ASSERT_TRUE(std::isfinite(loss[e]));
      ASSERT_GE(loss[e], 0.0);
      mean += loss[e] / 200.0;
    }
    EXPECT_LE(mean, prev * 1.05 + 1e-9);
    prev = mean;
  }
}

TEST(Train, DivergenceNamesEpoch) {
  const auto data = toy_dataset(100, [](double x) { return 1e6 * x; }, 5);
  TrainHyper hyper;
  hyper.learning_rate = 1e3;
  try {
    train(data, ScenarioConfig{}, hyper);
    FAIL() << "expected divergence";
  } catch (const TrainingError& e) {
    EXPECT_NE(std::string(e.what()).find("epoch"), std::string::npos);
  }
}

TEST(Train, RejectsBadArguments) {
  const std::vector<TrainingSample> empty;
  EXPECT_THROW(train(empty, ScenarioConfig{}, TrainHyper{}), TrainingError);
  const auto data = toy_dataset(20, [](double x) { return x; }, 6);
  TrainHyper hyper;
  hyper.batch_size = 0;
  EXPECT_THROW(train(data, ScenarioConfig{}, hyper), ConfigError);
}

TEST(PolicyAct, ProjectsRawOutput) {
  const ScenarioConfig cfg;
  MlpPolicy policy;
  policy.horizon_T = cfg.horizon_T;
  policy.output_bias = 5.0;
  EXPECT_EQ(policy_act(policy, 0.3, 0.0, 1, cfg), 0.6);
  policy.output_bias = -1.0;
  EXPECT_EQ(policy_act(policy, 0.3, 0.0, 1, cfg), 0.0);
  policy.output_bias = 0.45;
  EXPECT_EQ(policy_act(policy, 0.3, 0.0, 1, cfg), 0.45);
}

TEST(PolicyAct, AlwaysFeasible) {
  const ScenarioConfig cfg;
  Rng rng(606);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::normal_distribution<double> n(0.0, 3.0);
  auto policy = random_policy(rng, 20.0);
  for (int i = 0; i < 1'000'000; ++i) {
    if (i % 1000 == 0) policy = random_policy(rng, 20.0);
    const double x = u(rng);
    const double a = policy_act(policy, x, n(rng), 1 + static_cast<int>(rng() % 3), cfg);
    ASSERT_TRUE(feasible_interval(x, cfg).contains(a)) << x << " -> " << a;
  }
}

TEST(PolicyFile, SaveLoadIsByteIdentical) {
  Rng rng(7);
  auto policy = random_policy(rng);
  policy.training_meta = {0.05, 32, 2000, 123, 0.0123456789};
  const auto path = std::filesystem::temp_directory_path() / "cpeak_test_policy.cpnn";
  save_policy(policy, path);
  const auto back = load_policy(path);
  EXPECT_EQ(back, policy);
  EXPECT_EQ(serialize_policy(back), read_file(path));
  std::filesystem::remove(path);
}

TEST(PolicyFile, TruncationIsParseError) {
  Rng rng(8);
  const auto text = serialize_policy(random_policy(rng));
  for (std::size_t cut : {std::size_t{0}, text.size() / 3, text.size() / 2, text.size() - 20}) {
    EXPECT_THROW(parse_policy(text.substr(0, cut)), ParseError) << cut;
  }
  EXPECT_THROW(load_policy("/nonexistent/dir/p.cpnn"), IoError);
}

TEST(PolicyFile, HorizonMismatchIsReported) {
  Rng rng(9);
  const auto policy = random_policy(rng);
  ScenarioConfig cfg;
  cfg.horizon_T = 4;
  EXPECT_NO_THROW(check_policy_horizon(policy, cfg));
  cfg.horizon_T = 6;
  EXPECT_THROW(check_policy_horizon(policy, cfg), HorizonMismatch);
}

}  // namespace
}  // namespace cpeak
