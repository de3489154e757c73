// Command-line front end: run experiments, summarize results, recompute maxima.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#if __has_include(<CLI/CLI.hpp>)
#include <CLI/CLI.hpp>
#else
#include <CLI11.hpp>
#endif

#include "gpmgc/gpmgc.hpp"

namespace {

using gpmgc::ExperimentConfig;

struct RunFlags {
  std::string config_path;
  std::string objective, policy, out, box;
  std::optional<int> init, steps, seeds, samples, features, cma_restarts, jobs, workers;
  std::optional<long> sample_budget, acquisition_budget, fit_budget;
  std::optional<double> noise, fmax, timeout;
  std::vector<std::uint64_t> seed_list;
};

// "lo:hi,lo:hi,..." -> SearchBox
gpmgc::SearchBox parse_box(const std::string& text) {
  std::vector<double> lo, hi;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto colon = item.find(':');
    if (colon == std::string::npos) throw gpmgc::InvalidArgument("--box: expected lo:hi pairs, got '" + item + "'");
    lo.push_back(std::stod(item.substr(0, colon)));
    hi.push_back(std::stod(item.substr(colon + 1)));
  }
  return gpmgc::SearchBox(lo, hi);
}

ExperimentConfig build_config(const RunFlags& f) {
  ExperimentConfig cfg;
  if (!f.config_path.empty()) {
    std::ifstream is(f.config_path);
    if (!is) throw gpmgc::InvalidArgument("cannot read config '" + f.config_path + "'");
    cfg = gpmgc::config_from_json(nlohmann::json::parse(is), cfg);
  }
  if (!f.objective.empty()) cfg.objective = f.objective;
  if (!f.policy.empty()) cfg.policy = gpmgc::parse_policy(f.policy);
  if (!f.out.empty()) cfg.output_dir = f.out;
  if (!f.box.empty()) cfg.box = parse_box(f.box);
  if (f.init) cfg.initial_points = *f.init;
  if (f.steps) cfg.steps = *f.steps;
  if (f.seeds) cfg.seeds = ExperimentConfig::default_seeds(*f.seeds);
  if (!f.seed_list.empty()) cfg.seeds = f.seed_list;
  if (f.samples) cfg.samples = *f.samples;
  if (f.features) cfg.features = *f.features;
  if (f.cma_restarts) cfg.cma_restarts = *f.cma_restarts;
  if (f.jobs) cfg.jobs = *f.jobs;
  if (f.workers) cfg.workers = *f.workers;
  if (f.sample_budget) cfg.sample_budget = *f.sample_budget;
  if (f.acquisition_budget) cfg.acquisition_budget = *f.acquisition_budget;
  if (f.fit_budget) cfg.fit_budget = *f.fit_budget;
  if (f.noise) cfg.noise = *f.noise;
  if (f.fmax) cfg.f_max = *f.fmax;
  if (f.timeout) cfg.timeout_seconds = *f.timeout;
  return cfg;
}

void print_table(const gpmgc::ResultTable& table) {
  std::printf("%-14s %-8s %5s", "function", "policy", "seeds");
  for (const auto& w : table.windows) std::printf("   steps %2d-%-2d    ", w.first, w.last);
  std::printf("   final regret\n");
  for (const auto& e : table.entries) {
    std::printf("%-14s %-8s %5d", e.function.c_str(), std::string(gpmgc::to_string(e.policy)).c_str(), e.seeds);
    for (std::size_t i = 0; i < e.mean.size(); ++i) std::printf("  %8.3f +- %6.3f", e.mean[i], e.sem[i]);
    std::printf("  %8.4f +- %6.4f\n", e.final_mean, e.final_sem);
  }
}

int run(const RunFlags& flags) {
  const ExperimentConfig cfg = build_config(flags);
  if (cfg.output_dir.empty()) throw gpmgc::InvalidArgument("run: --out is required");
  const auto traces = gpmgc::run_experiment(cfg);
  const auto files = gpmgc::emit(traces, cfg.output_dir);
  {
    std::ofstream os(std::filesystem::path(cfg.output_dir) / "config.json");
    os << gpmgc::config_to_json(cfg).dump(2) << '\n';
  }
  int failed = 0;
  for (const auto& t : traces) {
    if (!t.error) continue;
    ++failed;
    std::cerr << "seed " << t.seed << " failed: " << *t.error << '\n';
  }
  print_table(gpmgc::cumulative_table(traces, gpmgc::fitting_windows(traces)));
  std::cerr << "wrote " << files.traces.string() << ", " << files.summary.string() << ", "
            << files.plot.string() << '\n';
  return failed == 0 ? 0 : 2;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"GP-MGC Bayesian optimization experiments"};
  app.require_subcommand(1);

  RunFlags rf;
  auto* run_cmd = app.add_subcommand("run", "Run the optimization loop over one or more seeds");
  run_cmd->add_option("--config", rf.config_path, "JSON config file; flags override its values");
  run_cmd->add_option("--objective", rf.objective, "Benchmark name or cmd:<shell command>");
  run_cmd->add_option("--policy", rf.policy, "random, ei, ucb, mes, gp-dc or gp-mgc");
  run_cmd->add_option("--init", rf.init, "Initial uniform random points");
  run_cmd->add_option("--steps", rf.steps, "Sequential queries after initialization");
  auto* seeds_opt = run_cmd->add_option("--seeds", rf.seeds, "Number of seeds (0..n-1)");
  run_cmd->add_option("--seed-list", rf.seed_list, "Explicit seeds")->excludes(seeds_opt);
  run_cmd->add_option("--out", rf.out, "Output directory");
  run_cmd->add_option("--box", rf.box, "Search box as lo:hi,lo:hi,... (required for cmd: objectives)");
  run_cmd->add_option("--fmax", rf.fmax, "Known maximum used for regret");
  run_cmd->add_option("--samples", rf.samples, "Posterior function samples per step");
  run_cmd->add_option("--features", rf.features, "Random features per sampled function");
  run_cmd->add_option("--sample-budget", rf.sample_budget, "CMA-ES evaluations per sample maximization");
  run_cmd->add_option("--acquisition-budget", rf.acquisition_budget, "CMA-ES evaluations per acquisition maximization");
  run_cmd->add_option("--fit-budget", rf.fit_budget, "CMA-ES evaluations per hyperparameter fit");
  run_cmd->add_option("--cma-restarts", rf.cma_restarts, "CMA-ES restarts");
  run_cmd->add_option("--noise", rf.noise, "Gaussian observation noise standard deviation");
  run_cmd->add_option("--timeout", rf.timeout, "Seconds to wait for an external objective");
  run_cmd->add_option("--jobs", rf.jobs, "Seeds run concurrently");
  run_cmd->add_option("--workers", rf.workers, "Threads for the per-step sample maximizations");

  std::string table_in;
  auto* table_cmd = app.add_subcommand("table", "Cumulative-regret table from a results directory");
  table_cmd->add_option("--in", table_in, "Results directory or traces.csv")->required();

  std::string plot_in, plot_out;
  auto* plot_cmd = app.add_subcommand("plotdata", "Per-step mean regret and standard error");
  plot_cmd->add_option("--in", plot_in, "Results directory or traces.csv")->required();
  plot_cmd->add_option("--out", plot_out, "Write CSV here instead of stdout");

  std::string oracle_name;
  int oracle_starts = 10000;
  std::uint64_t oracle_seed = 1;
  auto* oracle_cmd = app.add_subcommand("oracle-max", "Recompute a benchmark maximum by multistart local search");
  oracle_cmd->add_option("--objective", oracle_name, "Benchmark name")->required();
  oracle_cmd->add_option("--starts", oracle_starts, "Random starting points");
  oracle_cmd->add_option("--seed", oracle_seed, "Seed for the starting points");

  app.add_subcommand("list", "List the builtin benchmark functions");

  CLI11_PARSE(app, argc, argv);

  try {
    if (run_cmd->parsed()) return run(rf);
    if (table_cmd->parsed()) {
      const auto traces = gpmgc::load_traces(table_in);
      print_table(gpmgc::cumulative_table(traces, gpmgc::fitting_windows(traces)));
      return 0;
    }
    if (plot_cmd->parsed()) {
      const auto points = gpmgc::plot_data(gpmgc::load_traces(plot_in));
      if (plot_out.empty()) {
        gpmgc::write_plot_csv(std::cout, points);
      } else {
        std::ofstream os(plot_out);
        if (!os) throw gpmgc::InvalidArgument("cannot write '" + plot_out + "'");
        gpmgc::write_plot_csv(os, points);
      }
      return 0;
    }
    if (oracle_cmd->parsed()) {
      const auto& f = gpmgc::find_function(oracle_name);
      const auto r = gpmgc::oracle_max(f, oracle_starts, oracle_seed);
      std::printf("%s: f_max = %s at [", f.name.c_str(), gpmgc::format_real(r.f_max).c_str());
      for (Eigen::Index i = 0; i < r.x.size(); ++i)
        std::printf("%s%s", i ? ", " : "", gpmgc::format_real(r.x[i]).c_str());
      std::printf("]  (stored %s, %ld evaluations)\n", gpmgc::format_real(f.f_max).c_str(), r.evaluations);
      return 0;
    }
    for (const auto& f : gpmgc::catalog()) {
      std::printf("%-14s D=%zu  f_max=%s  box=", f.name.c_str(), f.dim, gpmgc::format_real(f.f_max).c_str());
      for (std::size_t i = 0; i < f.dim; ++i) std::printf("%s[%g, %g]", i ? "x" : "", f.box.lower[i], f.box.upper[i]);
      std::printf("\n");
    }
    return 0;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
