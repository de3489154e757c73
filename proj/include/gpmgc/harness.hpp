#pragma once

// Experiment driver: runs the Bayesian-optimization loop for one policy over a
// list of seeds, and turns the observations into regret traces, cumulative
// regret tables and plot data. Also reads and writes the result files.
//
// Result schema v1
//   traces.csv    function,policy,seed,step,x,y,regret,elapsed_ms
//                 one row per observation; initial points have step 0, the
//                 sequential queries steps 1..T; x is ';'-separated; reals use
//                 17 significant digits.
//   summary.json  {"version":1,"windows":[[a,b],...],"entries":[...]}
//   plotdata.csv  function,policy,step,mean_regret,stderr,seeds

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <map>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "gpmgc/acquisition.hpp"
#include "gpmgc/benchmarks.hpp"
#include "gpmgc/box.hpp"
#include "gpmgc/cmaes.hpp"
#include "gpmgc/error.hpp"
#include "gpmgc/gp.hpp"
#include "gpmgc/kernel.hpp"
#include "gpmgc/random.hpp"
#include "gpmgc/subprocess.hpp"

namespace gpmgc {

inline constexpr std::string_view kExternalPrefix = "cmd:";

struct ExperimentConfig {
  std::string objective = "camel-2";  // builtin name or "cmd:<shell command>"
  PolicyKind policy = PolicyKind::gp_mgc;
  int initial_points = 3;
  int steps = 40;
  std::vector<std::uint64_t> seeds = default_seeds(30);
  int samples = 50;    // M, posterior functions per step
  int features = 500;  // B, random features
  long sample_budget = 2000;
  long acquisition_budget = 4000;
  long fit_budget = 300;
  int cma_restarts = 4;
  double noise = 0.0;  // observation noise standard deviation
  std::optional<SearchBox> box;  // required for external objectives
  std::optional<double> f_max;   // overrides the builtin maximum
  double timeout_seconds = 60.0;
  int jobs = 1;     // seeds run concurrently
  int workers = 1;  // threads for the per-step sample maximizations
  std::string output_dir;

  static std::vector<std::uint64_t> default_seeds(int n) {
    std::vector<std::uint64_t> s(static_cast<std::size_t>(std::max(0, n)));
    for (std::size_t i = 0; i < s.size(); ++i) s[i] = i;
    return s;
  }

  bool external() const { return objective.rfind(kExternalPrefix, 0) == 0; }

  void validate() const {
    if (steps < 1) throw InvalidArgument("ExperimentConfig: steps must be >= 1");
    if (initial_points < 1) throw InvalidArgument("ExperimentConfig: initial points must be >= 1");
    if (seeds.empty()) throw InvalidArgument("ExperimentConfig: at least one seed is required");
    if (samples < 1) throw InvalidArgument("ExperimentConfig: sample count must be >= 1");
    if ((policy == PolicyKind::gp_dc || policy == PolicyKind::gp_mgc) &&
        samples < static_cast<int>(kMinDependenceSamples))
      throw InvalidArgument("ExperimentConfig: dependence policies need at least 4 samples");
    if (features < 1) throw InvalidArgument("ExperimentConfig: feature count must be >= 1");
    if (!(noise >= 0.0)) throw InvalidArgument("ExperimentConfig: noise must be nonnegative");
    if (!(timeout_seconds > 0.0)) throw InvalidArgument("ExperimentConfig: timeout must be positive");
    if (external()) {
      if (!box) throw InvalidArgument("ExperimentConfig: external objectives need an explicit box");
      if (objective.size() == kExternalPrefix.size())
        throw InvalidArgument("ExperimentConfig: empty external command");
    } else {
      const auto& f = find_function(objective);
      if (box && box->dim() != f.dim)
        throw InvalidArgument("ExperimentConfig: box dimension does not match " + f.name);
    }
    if (box) box->validate();
  }
};

struct Observation {
  int step = 0;  // 0 for initial points
  Vector x;
  double y = 0.0;
  double regret = 0.0;
  double elapsed_ms = 0.0;
};

struct RegretTrace {
  std::string function;
  PolicyKind policy = PolicyKind::random;
  std::uint64_t seed = 0;
  std::vector<Observation> observations;
  std::optional<std::string> error;

  int initial_points() const {
    return static_cast<int>(std::count_if(observations.begin(), observations.end(),
                                          [](const Observation& o) { return o.step == 0; }));
  }
  int steps() const { return static_cast<int>(observations.size()) - initial_points(); }

  /// r_1..r_T, regret after each sequential query.
  std::vector<double> step_regrets() const {
    std::vector<double> r;
    for (const auto& o : observations)
      if (o.step > 0) r.push_back(o.regret);
    return r;
  }
};

/// r_t = f_max - max(values[0..t]).
inline std::vector<double> regret_curve(const std::vector<double>& values, double f_max) {
  if (values.empty()) throw InvalidArgument("regret_curve: empty trace");
  if (!std::isfinite(f_max)) throw InvalidArgument("regret_curve: f_max must be finite");
  std::vector<double> r;
  r.reserve(values.size());
  double best = -std::numeric_limits<double>::infinity();
  for (double v : values) {
    best = std::max(best, v);
    r.push_back(f_max - best);
  }
  return r;
}

/// A callable objective plus its domain and (if known) maximum.
struct ObjectiveSession {
  std::string name;
  SearchBox box;
  std::optional<double> f_max;
  std::function<double(const Vector&)> evaluate;
};

inline ObjectiveSession open_objective(const ExperimentConfig& cfg) {
  if (cfg.external()) {
    const std::string command = cfg.objective.substr(kExternalPrefix.size());
    auto child = std::make_shared<ExternalObjective>(
        command, std::chrono::milliseconds(static_cast<long>(cfg.timeout_seconds * 1000.0)));
    return {cfg.objective, *cfg.box, cfg.f_max, [child](const Vector& x) { return (*child)(x); }};
  }
  const TestFunction& f = find_function(cfg.objective);
  return {f.name, cfg.box.value_or(f.box), cfg.f_max ? cfg.f_max : std::optional<double>(f.f_max),
          [&f](const Vector& x) { return f(x); }};
}

namespace detail {

inline CmaConfig inner_cma(long budget, int restarts) {
  CmaConfig c;
  c.max_evaluations = budget;
  c.restarts = restarts;
  return c;
}

}  // namespace detail

/// One seed of the optimization loop. Objective failures (and any other error)
/// end the run early and are recorded in the trace.
inline RegretTrace run_seed(const ExperimentConfig& cfg, std::uint64_t seed) {
  using clock = std::chrono::steady_clock;
  RegretTrace trace;
  trace.function = cfg.objective;
  trace.policy = cfg.policy;
  trace.seed = seed;

  try {
    ObjectiveSession objective = open_objective(cfg);
    trace.function = objective.name;
    const SearchBox& box = objective.box;
    const double f_max = objective.f_max.value_or(std::numeric_limits<double>::quiet_NaN());

    Rng init_rng(derive_seed(seed, {1}));
    Rng noise_rng(derive_seed(seed, {2}));
    Rng policy_rng(derive_seed(seed, {3}));
    std::normal_distribution<double> normal(0.0, 1.0);

    Dataset data(box);
    // Regret tracks the noise-free value; the model sees the noisy one.
    double best = -std::numeric_limits<double>::infinity();
    auto observe = [&](int step, const Vector& x, clock::time_point started) {
      const double f = objective.evaluate(x);
      double y = f;
      if (cfg.noise > 0.0) y += cfg.noise * normal(noise_rng);
      data.add(x, y);
      best = std::max(best, f);
      const double ms = std::chrono::duration<double, std::milli>(clock::now() - started).count();
      trace.observations.push_back({step, x, y, f_max - best, ms});
    };

    for (int i = 0; i < cfg.initial_points; ++i) {
      const auto started = clock::now();
      observe(0, box.sample_uniform(init_rng), started);
    }

    const CmaConfig sample_cma = detail::inner_cma(cfg.sample_budget, cfg.cma_restarts);
    const CmaConfig acq_cma = detail::inner_cma(cfg.acquisition_budget, cfg.cma_restarts);
    GpHyperParams hyper;
    for (int t = 1; t <= cfg.steps; ++t) {
      const auto started = clock::now();
      Vector x;
      if (cfg.policy == PolicyKind::random) {
        x = box.sample_uniform(policy_rng);
      } else {
        if (data.size() >= 2) {
          FitOptions fit;
          fit.budget = cfg.fit_budget;
          hyper = fit_hyperparams(data, default_hyper_bounds(data), hyper, policy_rng, fit);
        }
        auto gp = std::make_shared<const GpPosterior>(data, hyper);
        std::optional<MaxValueSamples> samples;
        if (needs_max_samples(cfg.policy)) {
          auto fm = std::make_shared<const FeatureMap>(sample_feature_map(
              hyper.kernel.lengthscale, static_cast<int>(box.dim()), cfg.features, policy_rng));
          samples = sample_maxima(*gp, cfg.samples, fm, sample_cma, policy_rng, cfg.workers);
        }
        const AcquisitionState state(gp, t, std::move(samples));
        x = next_point(cfg.policy, state, acq_cma, policy_rng);
      }
      observe(t, x, started);
    }
  } catch (const std::exception& e) {
    trace.error = e.what();
  }
  return trace;
}

/// Runs every seed (concurrently when cfg.jobs > 1); traces come back in seed order.
inline std::vector<RegretTrace> run_experiment(const ExperimentConfig& cfg) {
  cfg.validate();
  std::vector<RegretTrace> traces(cfg.seeds.size());
  detail::parallel_for(cfg.seeds.size(), cfg.jobs,
                       [&](std::size_t i) { traces[i] = run_seed(cfg, cfg.seeds[i]); });
  return traces;
}

struct Window {
  int first = 1;  // inclusive, 1-based step indices
  int last = 20;
};

inline std::vector<Window> default_windows() { return {{1, 20}, {21, 40}}; }

struct TableEntry {
  std::string function;
  PolicyKind policy = PolicyKind::random;
  int seeds = 0;
  std::vector<double> mean;  // per window: mean over seeds of the summed regret
  std::vector<double> sem;   // standard deviation of the mean
  double final_mean = 0.0;   // regret after the last step
  double final_sem = 0.0;
};

struct ResultTable {
  std::vector<Window> windows;
  std::vector<TableEntry> entries;

  const TableEntry* find(std::string_view function, PolicyKind policy) const {
    for (const auto& e : entries)
      if (e.function == function && e.policy == policy) return &e;
    return nullptr;
  }
};

namespace detail {

inline std::pair<double, double> mean_sem(const std::vector<double>& v) {
  if (v.empty()) return {std::numeric_limits<double>::quiet_NaN(), 0.0};
  double m = 0.0;
  for (double x : v) m += x;
  m /= static_cast<double>(v.size());
  if (v.size() < 2) return {m, 0.0};
  double ss = 0.0;
  for (double x : v) ss += (x - m) * (x - m);
  const double sd = std::sqrt(ss / static_cast<double>(v.size() - 1));
  return {m, sd / std::sqrt(static_cast<double>(v.size()))};
}

// Groups successful traces by (function, policy), in order of first appearance.
inline std::vector<std::vector<const RegretTrace*>> group_traces(const std::vector<RegretTrace>& traces) {
  std::vector<std::vector<const RegretTrace*>> groups;
  for (const auto& t : traces) {
    if (t.error) continue;
    auto it = std::find_if(groups.begin(), groups.end(), [&](const auto& g) {
      return g.front()->function == t.function && g.front()->policy == t.policy;
    });
    if (it == groups.end()) groups.push_back({&t});
    else it->push_back(&t);
  }
  return groups;
}

}  // namespace detail

/// Cumulative regret per window, averaged over seeds. Traces that ended with an
/// error are skipped.
inline ResultTable cumulative_table(const std::vector<RegretTrace>& traces,
                                    const std::vector<Window>& windows = default_windows()) {
  ResultTable table;
  table.windows = windows;
  for (const auto& w : windows)
    if (w.first < 1 || w.last < w.first) throw InvalidArgument("cumulative_table: invalid window");
  for (const auto& group : detail::group_traces(traces)) {
    TableEntry e;
    e.function = group.front()->function;
    e.policy = group.front()->policy;
    e.seeds = static_cast<int>(group.size());
    std::vector<double> finals;
    for (const auto& w : windows) {
      std::vector<double> sums;
      for (const RegretTrace* t : group) {
        const auto r = t->step_regrets();
        if (static_cast<int>(r.size()) < w.last)
          throw InvalidArgument("cumulative_table: window " + std::to_string(w.first) + "-" +
                                std::to_string(w.last) + " exceeds trace length " +
                                std::to_string(r.size()));
        double s = 0.0;
        for (int k = w.first; k <= w.last; ++k) s += r[static_cast<std::size_t>(k - 1)];
        sums.push_back(s);
      }
      const auto [m, se] = detail::mean_sem(sums);
      e.mean.push_back(m);
      e.sem.push_back(se);
    }
    for (const RegretTrace* t : group) {
      const auto r = t->step_regrets();
      if (!r.empty()) finals.push_back(r.back());
    }
    std::tie(e.final_mean, e.final_sem) = detail::mean_sem(finals);
    table.entries.push_back(std::move(e));
  }
  return table;
}

struct PlotPoint {
  std::string function;
  PolicyKind policy = PolicyKind::random;
  int step = 0;
  double mean_regret = 0.0;
  double stderr_regret = 0.0;
  int seeds = 0;
};

/// Per-step mean regret and its standard error across seeds.
inline std::vector<PlotPoint> plot_data(const std::vector<RegretTrace>& traces) {
  std::vector<PlotPoint> out;
  for (const auto& group : detail::group_traces(traces)) {
    std::size_t steps = std::numeric_limits<std::size_t>::max();
    for (const RegretTrace* t : group) steps = std::min(steps, t->step_regrets().size());
    for (std::size_t k = 0; k < steps; ++k) {
      std::vector<double> v;
      for (const RegretTrace* t : group) v.push_back(t->step_regrets()[k]);
      const auto [m, se] = detail::mean_sem(v);
      out.push_back({group.front()->function, group.front()->policy, static_cast<int>(k + 1), m, se,
                     static_cast<int>(v.size())});
    }
  }
  return out;
}

// ---- serialization ---------------------------------------------------------

inline std::string format_real(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline constexpr std::string_view kCsvHeader = "function,policy,seed,step,x,y,regret,elapsed_ms";

inline void write_traces_csv(std::ostream& os, const std::vector<RegretTrace>& traces) {
  os << kCsvHeader << '\n';
  for (const auto& t : traces) {
    for (const auto& o : t.observations) {
      os << t.function << ',' << to_string(t.policy) << ',' << t.seed << ',' << o.step << ',';
      for (Eigen::Index i = 0; i < o.x.size(); ++i) os << (i ? ";" : "") << format_real(o.x[i]);
      os << ',' << format_real(o.y) << ',' << format_real(o.regret) << ','
         << format_real(o.elapsed_ms) << '\n';
    }
  }
}

namespace detail {

inline std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> parts;
  std::string cur;
  for (char c : s) {
    if (c == sep) {
      parts.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  parts.push_back(cur);
  return parts;
}

inline double parse_real(const std::string& s) {
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (s.empty() || end != s.c_str() + s.size())
    throw InvalidArgument("traces.csv: bad number '" + s + "'");
  return v;
}

}  // namespace detail

inline std::vector<RegretTrace> read_traces_csv(std::istream& is) {
  std::string line;
  if (!std::getline(is, line) || line != kCsvHeader)
    throw InvalidArgument("traces.csv: missing or unexpected header");
  std::vector<RegretTrace> traces;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const auto f = detail::split(line, ',');
    if (f.size() != 8) throw InvalidArgument("traces.csv: expected 8 columns: " + line);
    const PolicyKind policy = parse_policy(f[1]);
    const std::uint64_t seed = std::stoull(f[2]);
    if (traces.empty() || traces.back().function != f[0] || traces.back().policy != policy ||
        traces.back().seed != seed) {
      traces.push_back({f[0], policy, seed, {}, std::nullopt});
    }
    Observation o;
    o.step = std::stoi(f[3]);
    const auto xs = detail::split(f[4], ';');
    o.x.resize(static_cast<Eigen::Index>(xs.size()));
    for (std::size_t i = 0; i < xs.size(); ++i) o.x[static_cast<Eigen::Index>(i)] = detail::parse_real(xs[i]);
    o.y = detail::parse_real(f[5]);
    o.regret = detail::parse_real(f[6]);
    o.elapsed_ms = detail::parse_real(f[7]);
    traces.back().observations.push_back(std::move(o));
  }
  return traces;
}

inline nlohmann::json table_to_json(const ResultTable& table) {
  nlohmann::json j;
  j["version"] = 1;
  j["windows"] = nlohmann::json::array();
  for (const auto& w : table.windows) j["windows"].push_back({w.first, w.last});
  j["entries"] = nlohmann::json::array();
  for (const auto& e : table.entries) {
    j["entries"].push_back({{"function", e.function},
                            {"policy", std::string(to_string(e.policy))},
                            {"seeds", e.seeds},
                            {"cumulative_regret_mean", e.mean},
                            {"cumulative_regret_sem", e.sem},
                            {"final_regret_mean", e.final_mean},
                            {"final_regret_sem", e.final_sem}});
  }
  return j;
}

inline void write_plot_csv(std::ostream& os, const std::vector<PlotPoint>& points) {
  os << "function,policy,step,mean_regret,stderr,seeds\n";
  for (const auto& p : points)
    os << p.function << ',' << to_string(p.policy) << ',' << p.step << ',' << format_real(p.mean_regret)
       << ',' << format_real(p.stderr_regret) << ',' << p.seeds << '\n';
}

/// Default windows that fit inside every successful trace.
inline std::vector<Window> fitting_windows(const std::vector<RegretTrace>& traces) {
  int shortest = std::numeric_limits<int>::max();
  for (const auto& t : traces)
    if (!t.error) shortest = std::min(shortest, t.steps());
  std::vector<Window> out;
  for (const auto& w : default_windows())
    if (w.last <= shortest) out.push_back(w);
  return out;
}

namespace detail {

inline std::ofstream open_output(const std::filesystem::path& p) {
  std::ofstream os(p, std::ios::binary);
  if (!os) throw InvalidArgument("cannot write '" + p.string() + "'");
  return os;
}

}  // namespace detail

struct EmittedFiles {
  std::filesystem::path traces, summary, plot;
};

/// Writes traces.csv, summary.json and plotdata.csv into `dir`.
inline EmittedFiles emit(const std::vector<RegretTrace>& traces, const std::filesystem::path& dir) {
  if (traces.empty()) throw InvalidArgument("emit: no results");
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw InvalidArgument("emit: cannot create '" + dir.string() + "': " + ec.message());
  EmittedFiles files{dir / "traces.csv", dir / "summary.json", dir / "plotdata.csv"};
  {
    auto os = detail::open_output(files.traces);
    write_traces_csv(os, traces);
  }
  {
    auto os = detail::open_output(files.summary);
    nlohmann::json j = table_to_json(cumulative_table(traces, fitting_windows(traces)));
    j["errors"] = nlohmann::json::array();
    for (const auto& t : traces)
      if (t.error)
        j["errors"].push_back({{"function", t.function},
                               {"policy", std::string(to_string(t.policy))},
                               {"seed", t.seed},
                               {"message", *t.error}});
    os << j.dump(2) << '\n';
  }
  {
    auto os = detail::open_output(files.plot);
    write_plot_csv(os, plot_data(traces));
  }
  return files;
}

inline std::vector<RegretTrace> load_traces(const std::filesystem::path& dir) {
  const auto path = std::filesystem::is_directory(dir) ? dir / "traces.csv" : dir;
  std::ifstream is(path, std::ios::binary);
  if (!is) throw InvalidArgument("cannot read '" + path.string() + "'");
  return read_traces_csv(is);
}

// ---- configuration file ----------------------------------------------------

/// Reads an ExperimentConfig from JSON. Unknown keys are rejected; missing keys
/// keep their defaults. "seeds" is either a count or an explicit list.
inline ExperimentConfig config_from_json(const nlohmann::json& j, ExperimentConfig cfg = {}) {
  if (!j.is_object()) throw InvalidArgument("config: expected a JSON object");
  for (const auto& [key, value] : j.items()) {
    if (key == "objective") cfg.objective = value.get<std::string>();
    else if (key == "policy") cfg.policy = parse_policy(value.get<std::string>());
    else if (key == "init") cfg.initial_points = value.get<int>();
    else if (key == "steps") cfg.steps = value.get<int>();
    else if (key == "seeds") {
      if (value.is_number_integer()) cfg.seeds = ExperimentConfig::default_seeds(value.get<int>());
      else cfg.seeds = value.get<std::vector<std::uint64_t>>();
    } else if (key == "samples") cfg.samples = value.get<int>();
    else if (key == "features") cfg.features = value.get<int>();
    else if (key == "sample_budget") cfg.sample_budget = value.get<long>();
    else if (key == "acquisition_budget") cfg.acquisition_budget = value.get<long>();
    else if (key == "fit_budget") cfg.fit_budget = value.get<long>();
    else if (key == "cma_restarts") cfg.cma_restarts = value.get<int>();
    else if (key == "noise") cfg.noise = value.get<double>();
    else if (key == "box") {
      std::vector<double> lo, hi;
      for (const auto& b : value) {
        const auto pair = b.get<std::vector<double>>();
        if (pair.size() != 2) throw InvalidArgument("config: box entries must be [lower, upper]");
        lo.push_back(pair[0]);
        hi.push_back(pair[1]);
      }
      cfg.box = SearchBox(lo, hi);
    } else if (key == "fmax") cfg.f_max = value.get<double>();
    else if (key == "timeout") cfg.timeout_seconds = value.get<double>();
    else if (key == "jobs") cfg.jobs = value.get<int>();
    else if (key == "workers") cfg.workers = value.get<int>();
    else if (key == "out") cfg.output_dir = value.get<std::string>();
    else throw InvalidArgument("config: unknown key '" + key + "'");
  }
  return cfg;
}

inline nlohmann::json config_to_json(const ExperimentConfig& cfg) {
  nlohmann::json j{{"objective", cfg.objective},
                   {"policy", std::string(to_string(cfg.policy))},
                   {"init", cfg.initial_points},
                   {"steps", cfg.steps},
                   {"seeds", cfg.seeds},
                   {"samples", cfg.samples},
                   {"features", cfg.features},
                   {"sample_budget", cfg.sample_budget},
                   {"acquisition_budget", cfg.acquisition_budget},
                   {"fit_budget", cfg.fit_budget},
                   {"cma_restarts", cfg.cma_restarts},
                   {"noise", cfg.noise},
                   {"timeout", cfg.timeout_seconds},
                   {"jobs", cfg.jobs},
                   {"workers", cfg.workers},
                   {"out", cfg.output_dir}};
  if (cfg.box) {
    nlohmann::json b = nlohmann::json::array();
    for (std::size_t i = 0; i < cfg.box->dim(); ++i) b.push_back({cfg.box->lower[i], cfg.box->upper[i]});
    j["box"] = b;
  }
  if (cfg.f_max) j["fmax"] = *cfg.f_max;
  return j;
}

}  // namespace gpmgc
