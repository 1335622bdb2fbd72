// Acceptance run: one PASS/FAIL line per criterion, nonzero exit if any fail.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include "cpeak/cli.hpp"
#include "cpeak/cpeak.hpp"

using namespace cpeak;
namespace fs = std::filesystem;

namespace {

constexpr std::uint64_t kSeed = 2019;
constexpr std::uint64_t kEvalSeed = 4049;
constexpr std::size_t kEpisodes = 100000;

int failures = 0;

void report(int id, bool ok, const std::string& detail) {
  std::printf("%s criterion %d: %s\n", ok ? "PASS" : "FAIL", id, detail.c_str());
  std::fflush(stdout);
  if (!ok) ++failures;
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

ScenarioConfig scenario(RevenueFunction g, int T) {
  ScenarioConfig cfg;
  cfg.revenue = g;
  cfg.horizon_T = T;
  cfg.rng_seed = kSeed;
  return cfg;
}

MlpPolicy trained(const ScenarioConfig& cfg, int rollouts = 100, int samples = 1000) {
  SamplerParams params;
  params.n_rollouts = rollouts;
  params.samples_per_round = samples;
  const auto data = generate_dataset(cfg, params, cfg.rng_seed, default_threads());
  TrainHyper hyper;
  hyper.seed = cfg.rng_seed;
  return train(data, cfg, hyper).policy;
}

void criterion_1() {
  const auto cfg = scenario(RevenueFunction::quartic_root(), 10);
  const auto t0 = std::chrono::steady_clock::now();
  const double x = naive_consumption(cfg);
  const double dt = seconds_since(t0);
  report(1, std::abs(x - 0.311) <= 0.001 && dt < 1e-3, fmt("naive g2 T=10 x=%.6f (%.3f ms)", x, dt * 1e3));
}

void criterion_2() {
  double worst = 0.0;
  for (const auto& g : {RevenueFunction::log_quadratic(), RevenueFunction::quartic_root()}) {
    const double ref = naive_consumption(scenario(g, 2));
    for (int T = 3; T <= 10; ++T) worst = std::max(worst, std::abs(naive_consumption(scenario(g, T)) - ref));
  }
  report(2, worst <= 1e-9, fmt("max naive deviation over T=2..10 = %.3g", worst));
}

void criterion_3() {
  Rng rng(3);
  std::uniform_real_distribution<double> u(-1.0, 1.0), x(0.0, 1.0);
  std::normal_distribution<double> n(0.0, 1.0);
  const auto t0 = std::chrono::steady_clock::now();
  double worst = 0.0;
  for (int i = 0; i < 100; ++i) {
    MlpPolicy p;
    std::array<double, kParameterCount> w{};
    for (double& v : w) v = u(rng);
    p.set_parameters(w);
    p.input_scaling = make_input_scaling(ScenarioConfig{});
    const TrainingSample s{x(rng), n(rng), 1 + static_cast<int>(rng() % 9), x(rng)};
    worst = std::max(worst, gradient_check(p, s, 1e-6));
  }
  const double dt = seconds_since(t0);
  report(3, worst < 1e-4 && dt < 1.0, fmt("max relative gradient error %.3g (%.3f s)", worst, dt));
}

// Full-state (x, s_m, x_pk) backward induction over the same discrete loads.
double enumerate(const ScenarioConfig& cfg, const GridSpec& grid, std::size_t reach, int t, std::size_t ix,
                 std::size_t is, std::size_t ipk, std::map<std::tuple<int, std::size_t, std::size_t, std::size_t>, double>& memo) {
  if (t == cfg.horizon_T) return -cfg.cp_rate() * grid.x_nodes[ipk];
  const auto key = std::make_tuple(t, ix, is, ipk);
  if (auto it = memo.find(key); it != memo.end()) return it->second;
  double best = -INFINITY;
  for (std::size_t k = ix >= reach ? ix - reach : 0; k <= std::min(grid.n_x() - 1, ix + reach); ++k) {
    double v = cfg.revenue.value(grid.x_nodes[k]);
    for (std::size_t j = 0; j < grid.n_s(); ++j)
      v += grid.weights[j] * (j > is ? enumerate(cfg, grid, reach, t + 1, k, j, k, memo)
                                     : enumerate(cfg, grid, reach, t + 1, k, is, ipk, memo));
    best = std::max(best, v);
  }
  return memo[key] = best;
}

void criterion_4() {
  double worst = 0.0;
  for (const auto& g : {RevenueFunction::log_quadratic(), RevenueFunction::quartic_root()}) {
    const auto cfg = scenario(g, 2);
    const auto grid = make_grid(cfg, 21, 21);
    const auto table = solve_grid_dp(cfg, grid);
    const auto cdf = detail::discrete_cdf(grid);
    std::map<std::tuple<int, std::size_t, std::size_t, std::size_t>, double> memo;
    for (std::size_t ix = 0; ix < 21; ++ix)
      for (std::size_t is = 0; is < 21; ++is)
        for (std::size_t ipk = 0; ipk < 21; ++ipk) {
          const double full = enumerate(cfg, grid, detail::ramp_reach(grid, cfg), 1, ix, is, ipk, memo);
          const double split = table.value(1, ix, is) - cfg.cp_rate() * grid.x_nodes[ipk] * cdf[is];
          worst = std::max(worst, std::abs(full - split));
        }
  }
  report(4, worst <= 1e-9, fmt("max |backward induction - enumeration| = %.3g (T=2, 21x21)", worst));
}

struct SweepPoint {
  double naive = 0.0, nn = 0.0, diff = 0.0, diff_se = 0.0;
};

SweepPoint compare_nn_naive(const ScenarioConfig& cfg, const MlpPolicy& policy) {
  const PolicyHandle pair[] = {PolicyHandle::naive(cfg), PolicyHandle::neural(policy)};
  const auto r = compare_policies(pair, cfg, kEpisodes, kEvalSeed, default_threads());
  const auto d = paired_difference(r.at("nn"), r.at("naive"));
  return {r.at("naive").mean, r.at("nn").mean, d.mean, d.stderr_};
}

std::map<std::pair<int, int>, MlpPolicy> policies;  // (revenue kind, T)

const MlpPolicy& policy_for(const RevenueFunction& g, int T) {
  const auto key = std::make_pair(static_cast<int>(g.kind()), T);
  auto it = policies.find(key);
  if (it == policies.end()) it = policies.emplace(key, trained(scenario(g, T))).first;
  return it->second;
}

void criterion_5() {
  bool ok = true;
  std::string detail;
  for (int T : {2, 3, 4}) {
    const auto t0 = std::chrono::steady_clock::now();
    const auto cfg = scenario(RevenueFunction::log_quadratic(), T);
    const auto& nn = policy_for(cfg.revenue, T);
    const auto table = std::make_shared<const PolicyTable>(solve_grid_dp(cfg, make_grid(cfg, 101, 101), default_threads()));
    const PolicyHandle three[] = {PolicyHandle::naive(cfg), PolicyHandle::neural(nn), PolicyHandle::grid(table)};
    const auto r = compare_policies(three, cfg, kEpisodes, kEvalSeed, default_threads());
    const auto d = paired_difference(r.at("nn"), r.at("naive"));
    const double nn_mean = r.at("nn").mean, grid_mean = r.at("grid").mean;
    const bool near_oracle = nn_mean >= 0.97 * grid_mean;
    const bool beats_naive = d.mean > 3.0 * d.stderr_;
    ok = ok && near_oracle && beats_naive;
    detail += fmt("T=%d naive=%.4f nn=%.4f grid=%.4f nn/grid=%.3f nn-naive=%.4f(se %.4f) %.0fs; ", T,
                  r.at("naive").mean, nn_mean, grid_mean, nn_mean / grid_mean, d.mean, d.stderr_, seconds_since(t0));
  }
  report(5, ok, detail);
}

void criterion_6() {
  bool ok = true;
  std::string detail;
  const auto t0 = std::chrono::steady_clock::now();
  for (const auto& g : {RevenueFunction::log_quadratic(), RevenueFunction::quartic_root()}) {
    double prev = -INFINITY;
    detail += g.kind() == RevenueKind::LogQuadratic ? "g1:" : "g2:";
    for (int T = 2; T <= 10; ++T) {
      const auto cfg = scenario(g, T);
      const auto p = compare_nn_naive(cfg, policy_for(g, T));
      const bool dominance = p.diff >= -p.diff_se;
      const bool increasing = p.nn > prev;
      ok = ok && dominance && increasing;
      detail += fmt(" T%d nn=%.3f naive=%.3f%s%s", T, p.nn, p.naive, dominance ? "" : "[<naive]",
                    increasing ? "" : "[not increasing]");
      prev = p.nn;
    }
    detail += "; ";
  }
  for (int T : {4, 8}) {
    const auto cfg = scenario(RevenueFunction::log_quadratic(), T);
    const auto p = compare_nn_naive(cfg, trained(cfg, 25, 250));
    const bool dominance = p.diff >= -p.diff_se;
    ok = ok && dominance;
    detail += fmt("smoke T%d nn=%.3f naive=%.3f%s; ", T, p.nn, p.naive, dominance ? "" : "[<naive]");
  }
  detail += fmt("%.0fs", seconds_since(t0));
  report(6, ok, detail);
}

void criterion_7() {
  Rng rng(7);
  std::normal_distribution<double> n(0.0, 1.0);
  double worst = 0.0;
  for (int k = 0; k < 20; ++k) {
    const int T = 2 + static_cast<int>(rng() % 9);
    const int t = 1 + static_cast<int>(rng() % (T - 1));
    const double s_m = std::uniform_real_distribution<double>(-2.0, 2.0)(rng);
    const auto cfg = scenario(RevenueFunction::log_quadratic(), T);
    const int later = T - t;
    long hits = 0;
    for (int trial = 0; trial < 1'000'000; ++trial) {
      const double first = n(rng);
      bool peak = first > s_m;
      for (int j = 1; j < later; ++j)
        if (n(rng) >= first) peak = false;
      hits += peak;
    }
    worst = std::max(worst, std::abs(hits / 1e6 - prob_round_is_peak(s_m, t, cfg)));
  }
  report(7, worst <= 0.003, fmt("max |formula - Monte Carlo| over 20 triples = %.4f", worst));
}

void criterion_8() {
  const std::map<int, double> quantile{{2, 10.827566}, {5, 18.466827}, {10, 27.877165}};
  bool ok = true;
  std::string detail;
  for (const auto& [T, q] : quantile) {
    const auto cfg = scenario(RevenueFunction::log_quadratic(), T);
    std::vector<long> counts(T, 0);
    for (std::size_t e = 0; e < kEpisodes; ++e) {
      Rng rng = make_stream(808, e);
      std::vector<double> loads(T);
      for (double& s : loads) s = cfg.load_model.sample(rng);
      ++counts[coincident_peak_index(loads) - 1];
    }
    const double expected = static_cast<double>(kEpisodes) / T;
    double chi2 = 0.0;
    for (long c : counts) chi2 += (c - expected) * (c - expected) / expected;
    ok = ok && chi2 < q;
    detail += fmt("T=%d chi2=%.2f (limit %.2f) ", T, chi2, q);
  }
  report(8, ok, detail);
}

void criterion_9() {
  const auto cfg = scenario(RevenueFunction::log_quadratic(), 4);
  const auto table = std::make_shared<const PolicyTable>(solve_grid_dp(cfg, make_grid(cfg), default_threads()));
  const PolicyHandle all[] = {PolicyHandle::naive(cfg), PolicyHandle::random(), PolicyHandle::grid(table),
                              PolicyHandle::neural(policy_for(cfg.revenue, 4))};
  long violations = 0;
  for (const auto& policy : all)
    for (std::size_t e = 0; e < kEpisodes; ++e) {
      Rng rng = make_stream(909, e);
      violations += !trace_is_feasible(simulate_episode(policy, cfg, rng).consumption, cfg);
    }
  report(9, violations == 0, fmt("%ld violations in 4 x %zu episodes", violations, kEpisodes));
}

int cli_run(std::vector<std::string> args) {
  args.insert(args.begin(), "cpeak");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  return cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
}

void criterion_10() {
  const fs::path dir = fs::temp_directory_path() / "cpeak_acceptance_determinism";
  fs::remove_all(dir);
  fs::create_directories(dir);
  const std::string cfg = (dir / "g1.cfg").string();
  write_file_atomic(cfg, serialize_config(scenario(RevenueFunction::log_quadratic(), 3)));
  const auto at = [&](const std::string& p) { return (dir / p).string(); };
  struct Run {
    std::string name;
    std::vector<std::string> args;
    std::vector<std::string> files;
  };
  const std::vector<Run> runs{
      {"dataset", {"dataset", "--config", cfg, "--samples", "100", "--C", "20"}, {"dataset.csv"}},
      {"train", {"train", "--config", cfg, "--dataset", at("dataset_1/dataset.csv"), "--epochs", "200"},
       {"policy.cpnn", "loss.csv"}},
      {"grid", {"grid", "--config", cfg, "--nx", "61", "--ns", "41"}, {"table.cpdp"}},
      {"eval",
       {"eval", "--config", cfg, "--policy", "naive", "--policy", "random", "--policy",
        "nn:" + at("train_1/policy.cpnn"), "--policy", "grid:" + at("grid_1/table.cpdp"), "--episodes", "20000"},
       {"report.csv", "reward_vs_T.svg"}},
      {"slice", {"slice", "--config", cfg, "--policy", "nn:" + at("train_1/policy.cpnn")}, {"slice.csv"}}};
  bool ok = true;
  std::string detail;
  for (const auto& run : runs) {
    for (const char* threads : {"1", "8"}) {
      auto args = run.args;
      args.insert(args.end(), {"--threads", threads, "--out", at(run.name + "_" + threads)});
      if (cli_run(args) != 0) {
        ok = false;
        detail += run.name + " failed; ";
      }
    }
    if (cli_run({"replay", "--manifest", at(run.name + "_8/manifest.json"), "--out", at(run.name + "_replay"),
                 "--threads", "1"}) != 0) {
      ok = false;
      detail += run.name + " replay failed; ";
    }
    for (const auto& f : run.files) {
      const auto ref = read_file(at(run.name + "_1/" + f));
      const bool same = ref == read_file(at(run.name + "_8/" + f)) && ref == read_file(at(run.name + "_replay/" + f));
      if (!same) detail += run.name + "/" + f + " differs; ";
      ok = ok && same;
    }
  }
  fs::remove_all(dir);
  report(10, ok, detail.empty() ? "all outputs byte-identical across threads 1/8 and manifest replay" : detail);
}

}  // namespace

int main() {
  const std::vector<std::function<void()>> criteria{criterion_1, criterion_2, criterion_3, criterion_4,
                                                    criterion_5, criterion_6, criterion_7, criterion_8,
                                                    criterion_9, criterion_10};
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    try {
      criteria[i]();
    } catch (const std::exception& e) {
      report(static_cast<int>(i + 1), false, std::string("exception: ") + e.what());
    }
  }
  std::printf("%d of %zu criteria failed\n", failures, criteria.size());
  return failures == 0 ? 0 : 1;
}
