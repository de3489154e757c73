#pragma once

// Exact Gaussian-process regression with a Matérn-5/2 kernel, marginal
// likelihood fitting, and posterior function draws through random features.
//
// Inputs are mapped affinely from the dataset box onto [0,1]^D and outputs are
// (optionally) standardized; hyperparameters live in that normalized space.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <memory>
#include <numbers>
#include <random>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Dense>

#include "gpmgc/box.hpp"
#include "gpmgc/cmaes.hpp"
#include "gpmgc/error.hpp"
#include "gpmgc/kernel.hpp"
#include "gpmgc/random.hpp"

namespace gpmgc {

/// Ordered observations inside a search box.
class Dataset {
 public:
  Dataset() = default;
  explicit Dataset(SearchBox box) : box_(std::move(box)) { box_.validate(); }

  void add(const Vector& x, double y) {
    if (static_cast<std::size_t>(x.size()) != box_.dim())
      throw InvalidArgument("Dataset::add: point dimension does not match box");
    if (!box_.contains(x)) throw InvalidArgument("Dataset::add: point outside the box");
    if (!std::isfinite(y)) throw InvalidArgument("Dataset::add: value must be finite");
    points_.push_back(x);
    values_.push_back(y);
  }

  const SearchBox& box() const noexcept { return box_; }
  const std::vector<Vector>& points() const noexcept { return points_; }
  const std::vector<double>& values() const noexcept { return values_; }
  std::size_t size() const noexcept { return values_.size(); }
  bool empty() const noexcept { return values_.empty(); }
  std::size_t dim() const noexcept { return box_.dim(); }

  double best_value() const {
    if (empty()) throw InvalidState("Dataset::best_value: no observations");
    double best = values_.front();
    for (double v : values_) best = std::max(best, v);
    return best;
  }

 private:
  SearchBox box_;
  std::vector<Vector> points_;
  std::vector<double> values_;
};

struct GpHyperParams {
  KernelParams kernel{0.2, 1.0};
  double noise = 1e-6;  // sigma^2 in normalized output units

  void validate() const {
    kernel.validate();
    if (!(noise >= 0.0) || !std::isfinite(noise))
      throw InvalidArgument("GpHyperParams: noise variance must be finite and nonnegative");
  }
};

struct GpOptions {
  bool standardize_outputs = true;
};

// Always added to the Gram diagonal (relative to C); escalated x10 on failure.
inline constexpr double kJitterFloor = 1e-10;
inline constexpr double kJitterCeiling = 1e-4;

/// Affine maps between user coordinates and the GP's normalized space.
struct IoTransform {
  SearchBox box;
  double y_offset = 0.0;
  double y_scale = 1.0;

  Vector to_unit(const Vector& x) const { return box.to_unit(x); }
  double to_normalized(double y) const { return (y - y_offset) / y_scale; }
  double from_normalized(double z) const { return y_offset + y_scale * z; }
};

inline IoTransform make_transform(const Dataset& data, const GpOptions& opts) {
  IoTransform t{data.box(), 0.0, 1.0};
  if (!opts.standardize_outputs || data.empty()) return t;
  const auto& y = data.values();
  double mean = 0.0;
  for (double v : y) mean += v;
  mean /= static_cast<double>(y.size());
  double var = 0.0;
  for (double v : y) var += (v - mean) * (v - mean);
  var /= static_cast<double>(y.size());
  t.y_offset = mean;
  t.y_scale = var > 0.0 ? std::sqrt(var) : 1.0;
  return t;
}

namespace detail {

inline Matrix unit_inputs(const Dataset& data, const IoTransform& t) {
  Matrix x(static_cast<Eigen::Index>(data.size()), static_cast<Eigen::Index>(data.dim()));
  for (std::size_t i = 0; i < data.size(); ++i) x.row(i) = t.to_unit(data.points()[i]).transpose();
  return x;
}

inline Vector normalized_targets(const Dataset& data, const IoTransform& t) {
  Vector y(static_cast<Eigen::Index>(data.size()));
  for (std::size_t i = 0; i < data.size(); ++i) y[i] = t.to_normalized(data.values()[i]);
  return y;
}

inline Matrix gram(const Matrix& x, const KernelParams& k) {
  const Eigen::Index n = x.rows();
  Matrix g(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    g(i, i) = k.amplitude;
    for (Eigen::Index j = 0; j < i; ++j) {
      const double v = k.amplitude * matern52((x.row(i) - x.row(j)).norm(), k.lengthscale);
      g(i, j) = v;
      g(j, i) = v;
    }
  }
  return g;
}

struct JitteredCholesky {
  Eigen::LLT<Matrix> llt;
  double jitter = 0.0;  // absolute value added to the diagonal on top of the noise
};

// Factorizes base + (noise + jitter) I, escalating the jitter on failure.
inline JitteredCholesky factorize(const Matrix& base, double noise, double amplitude,
                                  const char* who) {
  JitteredCholesky out;
  const Eigen::Index n = base.rows();
  for (double rel = kJitterFloor; rel <= kJitterCeiling * (1.0 + 1e-9); rel *= 10.0) {
    Matrix m = base;
    m.diagonal().array() += noise + rel * amplitude;
    out.llt.compute(m);
    if (out.llt.info() == Eigen::Success && out.llt.matrixLLT().diagonal().minCoeff() > 0.0) {
      out.jitter = rel * amplitude;
      return out;
    }
  }
  std::ostringstream msg;
  msg << who << ": Gram matrix not positive definite (n=" << n << ", noise=" << noise
      << ", amplitude=" << amplitude << ", jitter up to " << kJitterCeiling * amplitude
      << ", diagonal range [" << (n ? base.diagonal().minCoeff() : 0.0) << ", "
      << (n ? base.diagonal().maxCoeff() : 0.0) << "])";
  throw NumericalError(msg.str());
}

}  // namespace detail

struct Prediction {
  double mean = 0.0;
  double variance = 0.0;
  double stddev() const { return std::sqrt(variance); }
};

/// Fitted GP: dataset, hyperparameters and the factorized K + sigma^2 I.
class GpPosterior {
 public:
  GpPosterior(Dataset data, GpHyperParams params, GpOptions opts = {})
      : data_(std::move(data)), params_(params), opts_(opts) {
    params_.validate();
    transform_ = make_transform(data_, opts_);
    x_unit_ = detail::unit_inputs(data_, transform_);
    y_norm_ = detail::normalized_targets(data_, transform_);
    if (!data_.empty()) {
      auto chol = detail::factorize(detail::gram(x_unit_, params_.kernel), params_.noise,
                                    params_.kernel.amplitude, "GpPosterior");
      llt_ = std::move(chol.llt);
      jitter_ = chol.jitter;
      weights_ = llt_.solve(y_norm_);
    }
  }

  const Dataset& data() const noexcept { return data_; }
  const GpHyperParams& params() const noexcept { return params_; }
  const GpOptions& options() const noexcept { return opts_; }
  const IoTransform& transform() const noexcept { return transform_; }
  const Matrix& unit_inputs() const noexcept { return x_unit_; }
  const Vector& normalized_targets() const noexcept { return y_norm_; }
  double jitter() const noexcept { return jitter_; }
  // Total diagonal regularization: noise plus jitter.
  double effective_noise() const noexcept { return params_.noise + jitter_; }

  /// Prediction in normalized units at a unit-cube point.
  Prediction predict_unit(const Vector& u) const {
    const double c = params_.kernel.amplitude;
    if (data_.empty()) return {0.0, c};
    const Eigen::Index n = x_unit_.rows();
    Vector kstar(n);
    for (Eigen::Index i = 0; i < n; ++i)
      kstar[i] = c * matern52((x_unit_.row(i).transpose() - u).norm(), params_.kernel.lengthscale);
    const double mean = kstar.dot(weights_);
    const Vector v = llt_.matrixL().solve(kstar);
    return {mean, std::max(0.0, c - v.squaredNorm())};
  }

 private:
  Dataset data_;
  GpHyperParams params_;
  GpOptions opts_;
  IoTransform transform_;
  Matrix x_unit_;
  Vector y_norm_;
  Eigen::LLT<Matrix> llt_;
  Vector weights_;
  double jitter_ = 0.0;
};

/// Posterior mean and variance at x (user units).
inline Prediction posterior_mean_var(const GpPosterior& gp, const Vector& x) {
  if (static_cast<std::size_t>(x.size()) != gp.data().dim())
    throw InvalidArgument("posterior_mean_var: point dimension mismatch");
  const auto& t = gp.transform();
  const Prediction p = gp.predict_unit(t.to_unit(x));
  return {t.from_normalized(p.mean), p.variance * t.y_scale * t.y_scale};
}

/// log N(y | 0, K + sigma^2 I) in normalized space.
inline double log_marginal_likelihood(const Dataset& data, const GpHyperParams& params,
                                      const GpOptions& opts = {}) {
  if (data.empty()) throw InvalidArgument("log_marginal_likelihood: empty dataset");
  params.validate();
  const auto t = make_transform(data, opts);
  const Matrix x = detail::unit_inputs(data, t);
  const Vector y = detail::normalized_targets(data, t);
  const auto chol = detail::factorize(detail::gram(x, params.kernel), params.noise,
                                      params.kernel.amplitude, "log_marginal_likelihood");
  const Vector a = chol.llt.matrixL().solve(y);
  const double log_det = 2.0 * chol.llt.matrixLLT().diagonal().array().log().sum();
  const double n = static_cast<double>(data.size());
  return -0.5 * a.squaredNorm() - 0.5 * log_det - 0.5 * n * std::log(2.0 * std::numbers::pi);
}

/// Log-space box for (lengthscale, amplitude, noise), normalized units.
struct HyperBounds {
  double lengthscale_lo, lengthscale_hi;
  double amplitude_lo, amplitude_hi;
  double noise_lo, noise_hi;
};

inline HyperBounds default_hyper_bounds(const Dataset& data, const GpOptions& opts = {}) {
  const double diag = std::sqrt(static_cast<double>(data.dim()));
  double var = 1.0;
  if (!opts.standardize_outputs && data.size() >= 2) {
    const auto t = make_transform(data, GpOptions{true});
    var = t.y_scale * t.y_scale;
  }
  return {1e-2 * diag, 10.0 * diag, 1e-2 * var, 1e2 * var, 1e-8 * var, 1e-2 * var};
}

struct FitOptions {
  long budget = 300;
  GpOptions gp;
};

/// Maximizes the log marginal likelihood over log-space bounds with CMA-ES,
/// warm-started at the incumbent (clipped into the bounds). Never returns
/// parameters whose likelihood is below the incumbent's.
inline GpHyperParams fit_hyperparams(const Dataset& data, const HyperBounds& bounds,
                                     const GpHyperParams& incumbent, Rng& rng,
                                     const FitOptions& opts = {}) {
  if (data.empty()) throw InvalidArgument("fit_hyperparams: empty dataset");
  if (data.size() < 2) throw InvalidArgument("fit_hyperparams: need at least two observations");

  const SearchBox box({std::log(bounds.lengthscale_lo), std::log(bounds.amplitude_lo),
                       std::log(bounds.noise_lo)},
                      {std::log(bounds.lengthscale_hi), std::log(bounds.amplitude_hi),
                       std::log(bounds.noise_hi)});
  auto decode = [](const Vector& z) {
    GpHyperParams p;
    p.kernel.lengthscale = std::exp(z[0]);
    p.kernel.amplitude = std::exp(z[1]);
    p.noise = std::exp(z[2]);
    return p;
  };
  auto objective = [&](const Vector& z) {
    try {
      return log_marginal_likelihood(data, decode(z), opts.gp);
    } catch (const NumericalError&) {
      return -1e100;
    }
  };

  Vector start(3);
  start << std::log(incumbent.kernel.lengthscale), std::log(incumbent.kernel.amplitude),
      std::log(std::max(incumbent.noise, 1e-300));
  for (int i = 0; i < 3; ++i) start[i] = std::clamp(start[i], box.lower[i], box.upper[i]);

  const double start_value = objective(start);

  CmaConfig cfg;
  cfg.max_evaluations = std::max<long>(opts.budget, default_population(3));
  cfg.restarts = 2;
  cfg.seed = rng();
  cfg.initial_mean = start;
  const CmaResult res = maximize(objective, box, cfg);

  if (res.f_best >= start_value) return decode(res.x_best);
  return decode(start);
}

/// A function drawn (approximately) from the GP posterior:
/// f(x) = from_normalized(theta^T phi(unit(x))).
struct PosteriorFunctionSample {
  Vector weights;  // theta, length B
  std::shared_ptr<const FeatureMap> features;
  double amplitude = 1.0;
  IoTransform transform;

  double operator()(const Vector& x) const {
    return transform.from_normalized(weights.dot(feature_vector(transform.to_unit(x), *features)));
  }
};

/// Prepared state for repeated theta draws from one posterior and one feature
/// map. Uses the n x n inner matrix (C Phi^T Phi + sigma^2 I_n). Each draw is
/// theta = theta0 + C Phi A^{-1} (y - Phi^T theta0 - eps), theta0 ~ N(0, C I_B),
/// eps ~ N(0, sigma^2 I_n), which has exactly the posterior mean and covariance.
class ThetaSampler {
 public:
  ThetaSampler(const GpPosterior& gp, std::shared_ptr<const FeatureMap> fm)
      : features_(std::move(fm)), transform_(gp.transform()) {
    if (!features_) throw InvalidArgument("ThetaSampler: null feature map");
    if (features_->dim() != gp.data().dim())
      throw InvalidArgument("sample_posterior_function: feature map dimension mismatch");
    amplitude_ = gp.params().kernel.amplitude;
    noise_ = gp.params().noise;
    const Eigen::Index n = gp.unit_inputs().rows();
    const Eigen::Index b = static_cast<Eigen::Index>(features_->count());
    phi_.resize(b, n);
    for (Eigen::Index i = 0; i < n; ++i)
      phi_.col(i) = feature_vector(gp.unit_inputs().row(i).transpose(), *features_);
    y_ = gp.normalized_targets();
    if (n > 0) {
      const Matrix inner = amplitude_ * (phi_.transpose() * phi_);
      auto chol = detail::factorize(inner, noise_, amplitude_, "sample_posterior_function");
      llt_ = std::move(chol.llt);
      noise_ += chol.jitter;
    }
  }

  std::size_t count() const noexcept { return features_->count(); }
  // sigma^2 used in the inner matrix, jitter included.
  double noise() const noexcept { return noise_; }
  const Matrix& features_at_data() const noexcept { return phi_; }

  /// Posterior mean of theta: C Phi A^{-1} y.
  Vector mean() const {
    if (y_.size() == 0) return Vector::Zero(static_cast<Eigen::Index>(count()));
    return amplitude_ * (phi_ * llt_.solve(y_));
  }

  Vector draw(Rng& rng) const {
    std::normal_distribution<double> normal(0.0, 1.0);
    const Eigen::Index b = static_cast<Eigen::Index>(count());
    Vector theta(b);
    const double sd = std::sqrt(amplitude_);
    for (Eigen::Index i = 0; i < b; ++i) theta[i] = sd * normal(rng);
    const Eigen::Index n = y_.size();
    if (n == 0) return theta;
    Vector resid = y_ - phi_.transpose() * theta;
    const double noise_sd = std::sqrt(noise_);
    for (Eigen::Index i = 0; i < n; ++i) resid[i] -= noise_sd * normal(rng);
    theta += amplitude_ * (phi_ * llt_.solve(resid));
    return theta;
  }

  PosteriorFunctionSample make_sample(Vector theta) const {
    return {std::move(theta), features_, amplitude_, transform_};
  }

  const std::shared_ptr<const FeatureMap>& features() const noexcept { return features_; }
  const IoTransform& transform() const noexcept { return transform_; }

 private:
  std::shared_ptr<const FeatureMap> features_;
  IoTransform transform_;
  double amplitude_ = 1.0;
  double noise_ = 0.0;
  Matrix phi_;  // B x n
  Vector y_;
  Eigen::LLT<Matrix> llt_;
};

inline PosteriorFunctionSample sample_posterior_function(const GpPosterior& gp,
                                                         std::shared_ptr<const FeatureMap> fm,
                                                         Rng& rng) {
  ThetaSampler sampler(gp, std::move(fm));
  return sampler.make_sample(sampler.draw(rng));
}

}  // namespace gpmgc
