#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "gpmgc/harness.hpp"

namespace {

using namespace gpmgc;

RegretTrace constant_trace(const std::string& fn, PolicyKind p, std::uint64_t seed, int steps, double regret) {
  RegretTrace t{fn, p, seed, {}, std::nullopt};
  for (int i = 0; i < 3; ++i) t.observations.push_back({0, Vector::Zero(2), -1.0, regret, 0.0});
  for (int s = 1; s <= steps; ++s) t.observations.push_back({s, Vector::Zero(2), 0.0, regret, 1.0});
  return t;
}

ExperimentConfig small_config(PolicyKind policy) {
  ExperimentConfig cfg;
  cfg.objective = "camel-2";
  cfg.policy = policy;
  cfg.steps = 4;
  cfg.seeds = {0, 1};
  cfg.samples = 8;
  cfg.features = 100;
  cfg.sample_budget = 200;
  cfg.acquisition_budget = 200;
  cfg.fit_budget = 60;
  return cfg;
}

std::filesystem::path temp_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("gpmgc_harness_" + name);
  std::filesystem::remove_all(p);
  return p;
}

std::string strip_timing(const std::string& csv) {
  std::istringstream is(csv);
  std::string line, out;
  while (std::getline(is, line)) out += line.substr(0, line.rfind(',')) + "\n";
  return out;
}

std::string csv_of(const std::vector<RegretTrace>& traces) {
  std::ostringstream os;
  write_traces_csv(os, traces);
  return os.str();
}

}  // namespace

TEST(RegretCurve, RunningBest) {
  const auto r = regret_curve({1.0, 0.5, 2.0, 1.5, 3.0}, 3.0);
  const std::vector<double> expected{2.0, 2.0, 1.0, 1.0, 0.0};
  EXPECT_EQ(r, expected);
  EXPECT_THROW(regret_curve({}, 1.0), InvalidArgument);
}

TEST(CumulativeTable, ConstantAndZeroRegret) {
  std::vector<RegretTrace> traces;
  for (std::uint64_t s = 0; s < 3; ++s) {
    traces.push_back(constant_trace("camel-2", PolicyKind::random, s, 40, 1.0));
    traces.push_back(constant_trace("camel-2", PolicyKind::gp_mgc, s, 40, 0.0));
  }
  const auto table = cumulative_table(traces);
  const auto* random = table.find("camel-2", PolicyKind::random);
  const auto* mgc = table.find("camel-2", PolicyKind::gp_mgc);
  ASSERT_TRUE(random && mgc);
  EXPECT_EQ(random->mean, (std::vector<double>{20.0, 20.0}));
  EXPECT_EQ(mgc->mean, (std::vector<double>{0.0, 0.0}));
  EXPECT_EQ(random->seeds, 3);
  EXPECT_EQ(random->final_mean, 1.0);
}

TEST(CumulativeTable, WindowBeyondTraceThrows) {
  const std::vector<RegretTrace> traces{constant_trace("camel-2", PolicyKind::ei, 0, 30, 1.0)};
  EXPECT_THROW(cumulative_table(traces), InvalidArgument);
  EXPECT_NO_THROW(cumulative_table(traces, fitting_windows(traces)));
  EXPECT_EQ(fitting_windows(traces).size(), 1u);
}

TEST(CumulativeTable, ErroredTracesAreSkipped) {
  std::vector<RegretTrace> traces{constant_trace("camel-2", PolicyKind::ei, 0, 40, 1.0)};
  RegretTrace failed = constant_trace("camel-2", PolicyKind::ei, 1, 5, 9.0);
  failed.error = "boom";
  traces.push_back(failed);
  const auto table = cumulative_table(traces);
  EXPECT_EQ(table.find("camel-2", PolicyKind::ei)->seeds, 1);
}

TEST(PlotData, MeanMatchesPerSeedAverage) {
  std::vector<RegretTrace> traces;
  for (std::uint64_t s = 0; s < 4; ++s) {
    RegretTrace t = constant_trace("hartmann-3", PolicyKind::ucb, s, 5, 0.0);
    for (auto& o : t.observations) o.regret = o.step == 0 ? 10.0 : 1.0 / (o.step + s);
    traces.push_back(t);
  }
  const auto points = plot_data(traces);
  ASSERT_EQ(points.size(), 5u);
  for (const auto& p : points) {
    double avg = 0.0;
    for (std::uint64_t s = 0; s < 4; ++s) avg += 1.0 / (p.step + s) / 4.0;
    EXPECT_NEAR(p.mean_regret, avg, 1e-15);
    EXPECT_EQ(p.seeds, 4);
  }
}

TEST(Csv, RoundTripIsExact) {
  RegretTrace t{"levy-4", PolicyKind::mes, 7, {}, std::nullopt};
  Vector x(4);
  x << 0.1, -1.0 / 3.0, 9.999999999999998, -1e-300;
  t.observations.push_back({0, x, -std::sqrt(2.0), 4.0 / 3.0, 0.125});
  t.observations.push_back({1, x * 0.5, 1e-17, 0.0, 12.5});
  const auto back = [&] {
    std::istringstream is(csv_of({t}));
    return read_traces_csv(is);
  }();
  ASSERT_EQ(back.size(), 1u);
  EXPECT_EQ(back[0].function, "levy-4");
  EXPECT_EQ(back[0].policy, PolicyKind::mes);
  EXPECT_EQ(back[0].seed, 7u);
  ASSERT_EQ(back[0].observations.size(), 2u);
  for (std::size_t i = 0; i < 2; ++i) {
    EXPECT_EQ(back[0].observations[i].step, t.observations[i].step);
    EXPECT_EQ(back[0].observations[i].x, t.observations[i].x);
    EXPECT_EQ(back[0].observations[i].y, t.observations[i].y);
    EXPECT_EQ(back[0].observations[i].regret, t.observations[i].regret);
    EXPECT_EQ(back[0].observations[i].elapsed_ms, t.observations[i].elapsed_ms);
  }
  EXPECT_EQ(csv_of(back), csv_of({t}));
}

TEST(Csv, RejectsBadInput) {
  std::istringstream wrong_header("a,b\n");
  EXPECT_THROW(read_traces_csv(wrong_header), InvalidArgument);
  std::istringstream short_row(std::string(kCsvHeader) + "\ncamel-2,ei,0,1\n");
  EXPECT_THROW(read_traces_csv(short_row), InvalidArgument);
}

TEST(RunSeed, RandomPolicyEvaluationCountAndMonotoneRegret) {
  auto cfg = small_config(PolicyKind::random);
  cfg.steps = 10;
  const auto trace = run_seed(cfg, 3);
  ASSERT_FALSE(trace.error) << *trace.error;
  EXPECT_EQ(trace.initial_points(), 3);
  EXPECT_EQ(trace.steps(), 10);
  for (std::size_t i = 1; i < trace.observations.size(); ++i)
    EXPECT_LE(trace.observations[i].regret, trace.observations[i - 1].regret);
  const auto& f = find_function("camel-2");
  for (const auto& o : trace.observations) {
    EXPECT_TRUE(f.box.contains(o.x));
    EXPECT_EQ(o.y, f(o.x));
    EXPECT_GE(o.regret, 0.0);
  }
}

TEST(RunSeed, EveryPolicyCompletes) {
  for (auto p : {PolicyKind::ei, PolicyKind::ucb, PolicyKind::mes, PolicyKind::gp_dc, PolicyKind::gp_mgc}) {
    const auto trace = run_seed(small_config(p), 0);
    ASSERT_FALSE(trace.error) << to_string(p) << ": " << *trace.error;
    EXPECT_EQ(trace.observations.size(), 7u);
  }
}

TEST(RunExperiment, DeterministicApartFromTiming) {
  const auto cfg = small_config(PolicyKind::gp_mgc);
  const auto a = csv_of(run_experiment(cfg));
  const auto b = csv_of(run_experiment(cfg));
  EXPECT_EQ(strip_timing(a), strip_timing(b));
  auto parallel = cfg;
  parallel.jobs = 2;
  parallel.workers = 2;
  EXPECT_EQ(strip_timing(csv_of(run_experiment(parallel))), strip_timing(a));
}

TEST(RunExperiment, NoiseChangesObservationsNotRegretDefinition) {
  auto cfg = small_config(PolicyKind::random);
  cfg.noise = 0.5;
  const auto trace = run_seed(cfg, 0);
  ASSERT_FALSE(trace.error);
  const auto& f = find_function("camel-2");
  double best = -1e300;
  bool any_noise = false;
  for (const auto& o : trace.observations) {
    best = std::max(best, f(o.x));
    EXPECT_NEAR(o.regret, f.f_max - best, 1e-12);
    any_noise |= o.y != f(o.x);
  }
  EXPECT_TRUE(any_noise);
}

TEST(RunExperiment, ExternalObjectiveViaSubprocess) {
  ExperimentConfig cfg = small_config(PolicyKind::ei);
  cfg.objective = std::string("cmd:") + GPMGC_PYTHON + " " + GPMGC_STUB_DIR + "/echo_first.py";
  cfg.box = SearchBox({0.0, 0.0}, {1.0, 1.0});
  cfg.f_max = 1.0;
  cfg.seeds = {0};
  const auto traces = run_experiment(cfg);
  ASSERT_EQ(traces.size(), 1u);
  ASSERT_FALSE(traces[0].error) << *traces[0].error;
  for (const auto& o : traces[0].observations) EXPECT_EQ(o.y, o.x[0]);
}

TEST(RunExperiment, ObjectiveFailureIsRecorded) {
  ExperimentConfig cfg = small_config(PolicyKind::random);
  cfg.objective = std::string("cmd:") + GPMGC_PYTHON + " " + GPMGC_STUB_DIR + "/malformed.py";
  cfg.box = SearchBox({0.0}, {1.0});
  cfg.seeds = {0};
  const auto traces = run_experiment(cfg);
  ASSERT_TRUE(traces[0].error);
  EXPECT_NE(traces[0].error->find("malformed"), std::string::npos);
  EXPECT_TRUE(traces[0].observations.empty());
}

TEST(RunExperiment, UnknownFmaxGivesNanRegret) {
  ExperimentConfig cfg = small_config(PolicyKind::random);
  cfg.objective = std::string("cmd:") + GPMGC_PYTHON + " " + GPMGC_STUB_DIR + "/echo_first.py";
  cfg.box = SearchBox({0.0}, {1.0});
  cfg.seeds = {0};
  const auto traces = run_experiment(cfg);
  ASSERT_FALSE(traces[0].error);
  EXPECT_TRUE(std::isnan(traces[0].observations.back().regret));
}

TEST(Config, ValidationErrors) {
  ExperimentConfig cfg;
  cfg.objective = "nope";
  EXPECT_THROW(cfg.validate(), InvalidArgument);
  cfg = ExperimentConfig{};
  cfg.objective = "cmd:true";
  EXPECT_THROW(cfg.validate(), InvalidArgument);
  cfg = ExperimentConfig{};
  cfg.samples = 3;
  EXPECT_THROW(cfg.validate(), InvalidArgument);
  cfg = ExperimentConfig{};
  cfg.box = SearchBox({0.0}, {1.0});
  EXPECT_THROW(cfg.validate(), InvalidArgument);
  EXPECT_NO_THROW(ExperimentConfig{}.validate());
}

TEST(Config, JsonRoundTrip) {
  ExperimentConfig cfg;
  cfg.objective = "hartmann-3";
  cfg.policy = PolicyKind::gp_dc;
  cfg.steps = 12;
  cfg.seeds = {4, 9};
  cfg.noise = 0.01;
  cfg.box = SearchBox({0, 0, 0}, {1, 1, 0.5});
  cfg.f_max = 3.0;
  const auto back = config_from_json(config_to_json(cfg));
  EXPECT_EQ(config_to_json(back), config_to_json(cfg));
  EXPECT_EQ(back.seeds, cfg.seeds);
  EXPECT_EQ(config_from_json(nlohmann::json{{"seeds", 3}}).seeds, (std::vector<std::uint64_t>{0, 1, 2}));
  EXPECT_THROW(config_from_json(nlohmann::json{{"stepz", 3}}), InvalidArgument);
}

TEST(Emit, WritesReadableFiles) {
  std::vector<RegretTrace> traces;
  for (std::uint64_t s = 0; s < 2; ++s) traces.push_back(constant_trace("camel-2", PolicyKind::ei, s, 40, 0.5));
  const auto dir = temp_dir("emit");
  const auto files = emit(traces, dir);
  EXPECT_EQ(csv_of(load_traces(dir)), csv_of(traces));

  std::ifstream js(files.summary);
  const auto summary = nlohmann::json::parse(js);
  EXPECT_EQ(summary, [&] {
    auto j = table_to_json(cumulative_table(traces));
    j["errors"] = nlohmann::json::array();
    return j;
  }());
  EXPECT_EQ(summary["entries"][0]["cumulative_regret_mean"][1].get<double>(), 10.0);

  std::ifstream plot(files.plot);
  std::string header;
  std::getline(plot, header);
  EXPECT_EQ(header, "function,policy,step,mean_regret,stderr,seeds");
  std::filesystem::remove_all(dir);
}

TEST(Emit, ErrorsOnEmptyOrUnwritable) {
  EXPECT_THROW(emit({}, temp_dir("empty")), InvalidArgument);
  const std::vector<RegretTrace> traces{constant_trace("camel-2", PolicyKind::ei, 0, 2, 0.5)};
  EXPECT_THROW(emit(traces, "/proc/gpmgc-cannot-write-here"), InvalidArgument);
}
