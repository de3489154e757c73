#pragma once

// (mu/mu_w, lambda)-CMA-ES maximizer on a box, with IPOP restarts.
//
// The search runs in box-normalized coordinates [0,1]^D. Candidates falling
// outside are resampled up to ten times and then clipped, so the objective is
// only ever evaluated inside the box.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <numeric>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "gpmgc/box.hpp"
#include "gpmgc/error.hpp"
#include "gpmgc/random.hpp"

namespace gpmgc {

struct CmaConfig {
  int population = 0;          // 0 selects 4 + floor(3 ln D)
  double initial_step = 0.3;   // box-normalized
  long max_evaluations = 1000;
  int restarts = 4;
  std::uint64_t seed = 0;
  std::optional<Vector> initial_mean;  // box coordinates; uniform random when unset
  int stagnation_generations = 20;
  double stagnation_tolerance = 1e-12;
  // Called after each generation with (generation index, best value so far).
  std::function<void(int, double)> progress;
};

struct CmaResult {
  Vector x_best;
  double f_best = -std::numeric_limits<double>::infinity();
  double f_lowest = std::numeric_limits<double>::infinity();  // smallest value evaluated
  long evaluations = 0;
  int restarts_used = 0;
};

inline int default_population(std::size_t dim) {
  return 4 + static_cast<int>(std::floor(3.0 * std::log(static_cast<double>(dim))));
}

namespace detail {

class CmaRun {
 public:
  CmaRun(int dim, int lambda, double sigma0, Vector mean)
      : n_(dim), lambda_(lambda), sigma_(sigma0), mean_(std::move(mean)) {
    mu_ = lambda_ / 2;
    weights_.resize(mu_);
    for (int i = 0; i < mu_; ++i) weights_[i] = std::log(mu_ + 0.5) - std::log(i + 1.0);
    weights_ /= weights_.sum();
    mueff_ = 1.0 / weights_.squaredNorm();

    const double n = n_;
    cc_ = (4.0 + mueff_ / n) / (n + 4.0 + 2.0 * mueff_ / n);
    cs_ = (mueff_ + 2.0) / (n + mueff_ + 5.0);
    c1_ = 2.0 / ((n + 1.3) * (n + 1.3) + mueff_);
    cmu_ = std::min(1.0 - c1_, 2.0 * (mueff_ - 2.0 + 1.0 / mueff_) / ((n + 2.0) * (n + 2.0) + mueff_));
    damps_ = 1.0 + 2.0 * std::max(0.0, std::sqrt((mueff_ - 1.0) / (n + 1.0)) - 1.0) + cs_;
    chi_n_ = std::sqrt(n) * (1.0 - 1.0 / (4.0 * n) + 1.0 / (21.0 * n * n));

    pc_ = Vector::Zero(n_);
    ps_ = Vector::Zero(n_);
    cov_ = Matrix::Identity(n_, n_);
    basis_ = Matrix::Identity(n_, n_);
    scales_ = Vector::Ones(n_);
  }

  int lambda() const noexcept { return lambda_; }

  // Draws one candidate in [0,1]^n.
  Vector sample(Rng& rng) {
    std::normal_distribution<double> normal(0.0, 1.0);
    Vector z(n_);
    Vector x(n_);
    for (int attempt = 0; attempt < 10; ++attempt) {
      for (int i = 0; i < n_; ++i) z[i] = normal(rng);
      x = mean_ + sigma_ * (basis_ * scales_.cwiseProduct(z));
      if ((x.array() >= 0.0).all() && (x.array() <= 1.0).all()) return x;
    }
    return x.cwiseMax(0.0).cwiseMin(1.0);
  }

  // Candidates sorted best-first.
  void update(const std::vector<Vector>& ranked) {
    ++generation_;
    const Vector old_mean = mean_;
    mean_.setZero();
    for (int i = 0; i < mu_; ++i) mean_ += weights_[i] * ranked[i];
    const Vector yw = (mean_ - old_mean) / sigma_;

    const Vector inv_sqrt_yw = basis_ * (basis_.transpose() * yw).cwiseQuotient(scales_);
    ps_ = (1.0 - cs_) * ps_ + std::sqrt(cs_ * (2.0 - cs_) * mueff_) * inv_sqrt_yw;
    const double ps_norm = ps_.norm();
    const double decay = 1.0 - std::pow(1.0 - cs_, 2.0 * generation_);
    const bool hsig = ps_norm / std::sqrt(decay) / chi_n_ < 1.4 + 2.0 / (n_ + 1.0);
    pc_ = (1.0 - cc_) * pc_;
    if (hsig) pc_ += std::sqrt(cc_ * (2.0 - cc_) * mueff_) * yw;

    Matrix rank_mu = Matrix::Zero(n_, n_);
    for (int i = 0; i < mu_; ++i) {
      const Vector yi = (ranked[i] - old_mean) / sigma_;
      rank_mu.noalias() += weights_[i] * yi * yi.transpose();
    }
    const double hsig_correction = hsig ? 0.0 : cc_ * (2.0 - cc_);
    cov_ = (1.0 - c1_ - cmu_) * cov_ + c1_ * (pc_ * pc_.transpose() + hsig_correction * cov_) +
           cmu_ * rank_mu;
    sigma_ *= std::exp((cs_ / damps_) * (ps_norm / chi_n_ - 1.0));
    sigma_ = std::min(sigma_, 1e3);

    cov_ = 0.5 * (cov_ + cov_.transpose());
    Eigen::SelfAdjointEigenSolver<Matrix> eig(cov_);
    basis_ = eig.eigenvectors();
    scales_ = eig.eigenvalues().cwiseMax(1e-300).cwiseSqrt();
  }

  // Largest coordinate-wise standard deviation of the search distribution.
  double spread() const noexcept { return sigma_ * scales_.maxCoeff(); }

  bool degenerate() const {
    return !std::isfinite(sigma_) || !mean_.allFinite() ||
           scales_.maxCoeff() > 1e7 * scales_.minCoeff();
  }

 private:
  int n_;
  int lambda_;
  int mu_ = 0;
  double sigma_;
  Vector mean_;
  Vector weights_;
  double mueff_ = 0, cc_ = 0, cs_ = 0, c1_ = 0, cmu_ = 0, damps_ = 0, chi_n_ = 0;
  Vector pc_, ps_, scales_;
  Matrix cov_, basis_;
  int generation_ = 0;
};

}  // namespace detail

/// Maximizes `objective` over `box`. Returns the best point ever evaluated.
template <class Objective>
CmaResult maximize(Objective&& objective, const SearchBox& box, const CmaConfig& cfg) {
  box.validate();
  const int n = static_cast<int>(box.dim());
  int lambda = cfg.population > 0 ? cfg.population : default_population(box.dim());
  if (lambda < 2) throw InvalidArgument("maximize: population must be >= 2");
  if (cfg.max_evaluations < lambda)
    throw InvalidArgument("maximize: evaluation budget must be >= population");
  if (!(cfg.initial_step > 0.0)) throw InvalidArgument("maximize: initial step must be positive");
  if (cfg.initial_mean && (cfg.initial_mean->size() != n || !box.contains(*cfg.initial_mean)))
    throw InvalidArgument("maximize: initial mean must lie inside the box");

  Rng rng(cfg.seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  auto random_mean = [&] {
    Vector m(n);
    for (int i = 0; i < n; ++i) m[i] = unif(rng);
    return m;
  };

  CmaResult result;
  int global_generation = 0;
  Vector start = cfg.initial_mean ? box.to_unit(*cfg.initial_mean) : random_mean();

  for (int run_index = 0;; ++run_index) {
    detail::CmaRun run(n, lambda, cfg.initial_step, start);
    double run_best = -std::numeric_limits<double>::infinity();
    int since_improvement = 0;

    std::vector<Vector> candidates(lambda);
    std::vector<double> values(lambda);
    std::vector<int> order(lambda);
    std::vector<Vector> ranked(lambda);

    while (cfg.max_evaluations - result.evaluations >= lambda) {
      for (int k = 0; k < lambda; ++k) {
        candidates[k] = run.sample(rng);
        const Vector x = box.from_unit(candidates[k]);
        const double f = objective(x);
        ++result.evaluations;
        if (!std::isfinite(f))
          throw NumericalError("maximize: objective returned a non-finite value at evaluation " +
                               std::to_string(result.evaluations));
        values[k] = f;
        result.f_lowest = std::min(result.f_lowest, f);
        if (f > result.f_best) {
          result.f_best = f;
          result.x_best = x;
        }
      }
      std::iota(order.begin(), order.end(), 0);
      std::stable_sort(order.begin(), order.end(),
                       [&](int a, int b) { return values[a] > values[b]; });
      for (int k = 0; k < lambda; ++k) ranked[k] = candidates[order[k]];

      const double gen_best = values[order[0]];
      if (gen_best > run_best + cfg.stagnation_tolerance) {
        since_improvement = 0;
      } else {
        ++since_improvement;
      }
      run_best = std::max(run_best, gen_best);

      run.update(ranked);
      if (cfg.progress) cfg.progress(global_generation, result.f_best);
      ++global_generation;

      if (since_improvement >= cfg.stagnation_generations || run.spread() < 1e-13 ||
          run.degenerate())
        break;
    }

    const long remaining = cfg.max_evaluations - result.evaluations;
    if (run_index >= cfg.restarts || remaining < 2) break;
    lambda = static_cast<int>(std::min<long>(2L * lambda, remaining));
    if (lambda < 2) break;
    start = random_mean();
    ++result.restarts_used;
  }
  return result;
}

}  // namespace gpmgc
