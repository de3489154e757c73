#pragma once

// Acquisition functions and next-point selection: the MGC- and
// distance-correlation-based max-value acquisitions plus the random, EI,
// GP-UCB and MES baselines.

#include <algorithm>
#include <atomic>
#include <exception>
#include <cmath>
#include <cstdint>
#include <functional>
#include <iostream>
#include <limits>
#include <memory>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include "gpmgc/box.hpp"
#include "gpmgc/cmaes.hpp"
#include "gpmgc/dependence.hpp"
#include "gpmgc/error.hpp"
#include "gpmgc/gp.hpp"
#include "gpmgc/kernel.hpp"
#include "gpmgc/random.hpp"

namespace gpmgc {

enum class PolicyKind { random, ei, ucb, mes, gp_dc, gp_mgc };

inline std::string_view to_string(PolicyKind p) {
  switch (p) {
    case PolicyKind::random: return "random";
    case PolicyKind::ei: return "ei";
    case PolicyKind::ucb: return "ucb";
    case PolicyKind::mes: return "mes";
    case PolicyKind::gp_dc: return "gp-dc";
    case PolicyKind::gp_mgc: return "gp-mgc";
  }
  return "unknown";
}

inline PolicyKind parse_policy(std::string_view name) {
  for (auto p : {PolicyKind::random, PolicyKind::ei, PolicyKind::ucb, PolicyKind::mes,
                 PolicyKind::gp_dc, PolicyKind::gp_mgc})
    if (to_string(p) == name) return p;
  throw InvalidArgument("unknown policy '" + std::string(name) +
                        "' (expected random, ei, ucb, mes, gp-dc or gp-mgc)");
}

// Policies that need sampled posterior maxima.
constexpr bool needs_max_samples(PolicyKind p) {
  return p == PolicyKind::mes || p == PolicyKind::gp_dc || p == PolicyKind::gp_mgc;
}

inline std::function<void(const std::string&)>& warning_sink() {
  static std::function<void(const std::string&)> sink = [](const std::string& msg) {
    std::cerr << "gpmgc warning: " << msg << '\n';
  };
  return sink;
}

inline void warn(const std::string& msg) {
  if (auto& sink = warning_sink()) sink(msg);
}

namespace detail {

inline double normal_pdf(double z) {
  return std::exp(-0.5 * z * z) / std::sqrt(2.0 * std::numbers::pi);
}

inline double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }

// log Phi(z), accurate in both tails.
inline double log_normal_cdf(double z) {
  if (z > 0.0) return std::log1p(-0.5 * std::erfc(z / std::numbers::sqrt2));
  if (z > -30.0) return std::log(normal_cdf(z));
  const double z2 = z * z;
  const double series = 1.0 - 1.0 / z2 + 3.0 / (z2 * z2) - 15.0 / (z2 * z2 * z2);
  return -0.5 * z2 - std::log(-z) - 0.5 * std::log(2.0 * std::numbers::pi) + std::log(series);
}

// phi(z) / Phi(z), stable for very negative z.
inline double inverse_mills(double z) {
  if (z > -30.0) return normal_pdf(z) / normal_cdf(z);
  const double z2 = z * z;
  return -z / (1.0 - 1.0 / z2 + 3.0 / (z2 * z2) - 15.0 / (z2 * z2 * z2));
}

// Runs fn(i) for i in [0, n) on up to `workers` threads.
template <class Fn>
void parallel_for(std::size_t n, int workers, Fn&& fn) {
  if (workers <= 1 || n <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::atomic<bool> failed{false};
  std::vector<std::thread> pool;
  const auto count = std::min<std::size_t>(n, static_cast<std::size_t>(workers));
  for (std::size_t w = 0; w < count; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n && !failed; i = next++) {
        try {
          fn(i);
        } catch (...) {
          if (!failed.exchange(true)) error = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

}  // namespace detail

/// One term of the max-value entropy acquisition at standardized gap gamma.
inline double mes_term(double gamma) {
  return 0.5 * gamma * detail::inverse_mills(gamma) - detail::log_normal_cdf(gamma);
}

/// Sampled posterior maxima F_m together with the sampled functions.
struct MaxValueSamples {
  std::vector<double> maxima;
  std::vector<Vector> maximizers;
  std::vector<PosteriorFunctionSample> functions;

  std::size_t size() const noexcept { return maxima.size(); }
};

namespace detail {

// Stacked weights for evaluating all samples at once from one feature vector.
struct SampleBank {
  Matrix weights;  // M x B
  std::shared_ptr<const FeatureMap> features;
  IoTransform transform;
  bool shared_features = false;

  explicit SampleBank(const MaxValueSamples& s) {
    if (s.functions.empty()) return;
    features = s.functions.front().features;
    transform = s.functions.front().transform;
    shared_features = true;
    for (const auto& f : s.functions)
      if (f.features != features) shared_features = false;
    if (!shared_features) return;
    weights.resize(static_cast<Eigen::Index>(s.functions.size()),
                   static_cast<Eigen::Index>(features->count()));
    for (std::size_t m = 0; m < s.functions.size(); ++m)
      weights.row(static_cast<Eigen::Index>(m)) = s.functions[m].weights.transpose();
  }
};

}  // namespace detail

/// Everything an acquisition function reads: the fitted posterior, optional
/// max-value samples, the step index and the incumbent.
class AcquisitionState {
 public:
  AcquisitionState(std::shared_ptr<const GpPosterior> gp, int step,
                   std::optional<MaxValueSamples> samples = std::nullopt)
      : gp_(std::move(gp)), step_(step), samples_(std::move(samples)) {
    if (!gp_) throw InvalidArgument("AcquisitionState: null posterior");
    if (samples_) {
      for (const auto& f : samples_->functions)
        if (f.features && f.features->dim() != gp_->data().dim())
          throw InvalidArgument("AcquisitionState: sample dimension mismatch");
      bank_ = std::make_shared<detail::SampleBank>(*samples_);
      if (samples_->size() >= kMinDependenceSamples) {
        mgc_profile_ = std::make_shared<DistanceProfile>(samples_->maxima, Centering::mgc);
        dc_profile_ = std::make_shared<DistanceProfile>(samples_->maxima, Centering::biased);
      }
    }
  }

  const GpPosterior& gp() const noexcept { return *gp_; }
  const SearchBox& box() const noexcept { return gp_->data().box(); }
  int step() const noexcept { return step_; }
  const std::optional<MaxValueSamples>& samples() const noexcept { return samples_; }

  double incumbent() const {
    if (gp_->data().empty()) throw InvalidState("acquisition: incumbent undefined for empty dataset");
    return gp_->data().best_value();
  }

  /// f_m(x) for every sample m.
  Vector sample_values(const Vector& x) const {
    if (!samples_) throw InvalidState("acquisition: max-value samples required");
    const auto& fns = samples_->functions;
    if (bank_ && bank_->shared_features) {
      const Vector phi = feature_vector(bank_->transform.to_unit(x), *bank_->features);
      Vector v = bank_->weights * phi;
      for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = bank_->transform.from_normalized(v[i]);
      return v;
    }
    Vector v(static_cast<Eigen::Index>(fns.size()));
    for (std::size_t m = 0; m < fns.size(); ++m) v[static_cast<Eigen::Index>(m)] = fns[m](x);
    return v;
  }

  const DistanceProfile& maxima_profile(Centering c) const {
    if (!samples_) throw InvalidState("acquisition: max-value samples required");
    if (samples_->size() < kMinDependenceSamples)
      throw TooFewSamples("acquisition: dependence statistics need at least 4 posterior samples, got " +
                          std::to_string(samples_->size()));
    return c == Centering::mgc ? *mgc_profile_ : *dc_profile_;
  }

 private:
  std::shared_ptr<const GpPosterior> gp_;
  int step_;
  std::optional<MaxValueSamples> samples_;
  std::shared_ptr<detail::SampleBank> bank_;
  std::shared_ptr<DistanceProfile> mgc_profile_;
  std::shared_ptr<DistanceProfile> dc_profile_;
};

/// Draws M posterior functions sharing one feature map and maximizes each with
/// CMA-ES. Per-sample seeds are derived up front, so the result does not
/// depend on evaluation order or on `workers`.
inline MaxValueSamples sample_maxima(const GpPosterior& gp, int count,
                                     std::shared_ptr<const FeatureMap> fm, const CmaConfig& cma,
                                     Rng& rng, int workers = 1) {
  if (count < 1) throw InvalidArgument("sample_maxima: sample count must be >= 1");
  const ThetaSampler sampler(gp, std::move(fm));
  const std::uint64_t base = rng();
  const SearchBox& box = gp.data().box();

  MaxValueSamples out;
  out.maxima.resize(static_cast<std::size_t>(count));
  out.maximizers.resize(static_cast<std::size_t>(count));
  out.functions.resize(static_cast<std::size_t>(count));
  detail::parallel_for(static_cast<std::size_t>(count), workers, [&](std::size_t m) {
    Rng local(derive_seed(base, {m, 0}));
    PosteriorFunctionSample f = sampler.make_sample(sampler.draw(local));
    CmaConfig cfg = cma;
    cfg.seed = derive_seed(base, {m, 1});
    cfg.progress = nullptr;
    const IoTransform& t = f.transform;
    const FeatureMap& features = *f.features;
    Vector phi(static_cast<Eigen::Index>(features.count()));
    auto objective = [&](const Vector& x) {
      feature_vector_into(t.to_unit(x), features, phi);
      return t.from_normalized(f.weights.dot(phi));
    };
    const CmaResult res = maximize(objective, box, cfg);
    out.maxima[m] = res.f_best;
    out.maximizers[m] = res.x_best;
    out.functions[m] = std::move(f);
  });
  return out;
}

namespace detail {

inline bool degenerate(const Vector& v) {
  const double lo = v.minCoeff();
  const double hi = v.maxCoeff();
  return !(hi - lo > 1e-12 * std::max(1.0, v.cwiseAbs().maxCoeff()));
}

inline double dcor_against(const DistanceProfile& u, const Vector& v) {
  const Matrix b = double_center(pairwise_distances(std::span<const double>(v.data(), v.size())));
  const Matrix& a = u.centered();
  const double mm = static_cast<double>(a.rows()) * a.rows();
  const double dvar_u = a.squaredNorm() / mm;
  const double dvar_v = b.squaredNorm() / mm;
  if (!(dvar_u > 0.0) || !(dvar_v > 0.0)) return 0.0;
  const double dcov2 = a.cwiseProduct(b).sum() / mm;
  return std::sqrt(std::max(0.0, dcov2) / std::sqrt(dvar_u * dvar_v));
}

}  // namespace detail

/// MGC between the sampled maxima and sample values (any sizes >= 4).
inline double mgc_acquisition_value(std::span<const double> maxima, std::span<const double> values) {
  detail::check_pair(maxima, values, "alpha_mgc");
  const Vector v = Eigen::Map<const Vector>(values.data(), static_cast<Eigen::Index>(values.size()));
  if (detail::degenerate(v)) return 0.0;
  return mgc_statistic(maxima, values).statistic;
}

inline double dc_acquisition_value(std::span<const double> maxima, std::span<const double> values) {
  detail::check_pair(maxima, values, "alpha_dc");
  const Vector v = Eigen::Map<const Vector>(values.data(), static_cast<Eigen::Index>(values.size()));
  if (detail::degenerate(v)) return 0.0;
  return distance_correlation(maxima, values).statistic;
}

inline double alpha_mgc(const Vector& x, const AcquisitionState& state) {
  const DistanceProfile& pu = state.maxima_profile(Centering::mgc);
  const Vector v = state.sample_values(x);
  if (detail::degenerate(v)) return 0.0;
  const DistanceProfile pv(std::span<const double>(v.data(), v.size()), Centering::mgc);
  return mgc_from_map(local_correlation_map(pu, pv)).statistic;
}

inline double alpha_dc(const Vector& x, const AcquisitionState& state) {
  const DistanceProfile& pu = state.maxima_profile(Centering::biased);
  const Vector v = state.sample_values(x);
  if (detail::degenerate(v)) return 0.0;
  return detail::dcor_against(pu, v);
}

inline double expected_improvement(double mean, double stddev, double incumbent) {
  if (!(stddev > 1e-300)) return std::max(0.0, mean - incumbent);
  const double gamma = (mean - incumbent) / stddev;
  return std::max(0.0, stddev * (gamma * detail::normal_cdf(gamma) + detail::normal_pdf(gamma)));
}

inline double alpha_ei(const Vector& x, const AcquisitionState& state) {
  if (state.gp().data().empty()) throw InvalidState("alpha_ei: empty dataset");
  const Prediction p = posterior_mean_var(state.gp(), x);
  return expected_improvement(p.mean, p.stddev(), state.incumbent());
}

/// beta_t = 2 log(D t^2 pi^2 / (6 delta)), delta = 0.1.
inline double ucb_beta(std::size_t dim, int step) {
  const double t = std::max(1, step);
  return 2.0 * std::log(static_cast<double>(dim) * t * t * std::numbers::pi * std::numbers::pi /
                        (6.0 * 0.1));
}

inline double alpha_ucb(const Vector& x, const GpPosterior& gp, double beta) {
  const Prediction p = posterior_mean_var(gp, x);
  return p.mean + std::sqrt(std::max(0.0, beta)) * p.stddev();
}

inline double alpha_ucb(const Vector& x, const AcquisitionState& state) {
  return alpha_ucb(x, state.gp(), ucb_beta(state.gp().data().dim(), state.step()));
}

inline double mes_value(double mean, double stddev, std::span<const double> maxima) {
  if (maxima.empty()) throw InvalidState("alpha_mes: max-value samples required");
  if (!(stddev > 1e-12 * std::max(1.0, std::abs(mean)))) return 0.0;
  double total = 0.0;
  for (double fm : maxima) total += mes_term((fm - mean) / stddev);
  return total / static_cast<double>(maxima.size());
}

inline double alpha_mes(const Vector& x, const AcquisitionState& state) {
  if (!state.samples() || state.samples()->maxima.empty())
    throw InvalidState("alpha_mes: max-value samples required");
  const Prediction p = posterior_mean_var(state.gp(), x);
  const auto& maxima = state.samples()->maxima;
  if (state.gp().data().empty()) return mes_value(p.mean, p.stddev(), maxima);
  // The true maximum is at least the best observation; sampled maxima that fall
  // below it (feature-approximation error) are lifted just above it.
  const double floor = state.incumbent() + 5.0 * std::sqrt(state.gp().effective_noise()) *
                                               state.gp().transform().y_scale;
  std::vector<double> lifted(maxima.begin(), maxima.end());
  for (double& f : lifted) f = std::max(f, floor);
  return mes_value(p.mean, p.stddev(), lifted);
}

inline double acquisition_value(PolicyKind policy, const Vector& x, const AcquisitionState& state) {
  switch (policy) {
    case PolicyKind::ei: return alpha_ei(x, state);
    case PolicyKind::ucb: return alpha_ucb(x, state);
    case PolicyKind::mes: return alpha_mes(x, state);
    case PolicyKind::gp_dc: return alpha_dc(x, state);
    case PolicyKind::gp_mgc: return alpha_mgc(x, state);
    case PolicyKind::random: break;
  }
  throw InvalidArgument("acquisition_value: the random policy has no acquisition function");
}

/// Next query point: uniform for `random`, otherwise the CMA-ES argmax of the
/// policy's acquisition. A flat acquisition landscape falls back to a uniform
/// draw and emits a warning.
inline Vector next_point(PolicyKind policy, const AcquisitionState& state, const CmaConfig& cma,
                         Rng& rng) {
  const SearchBox& box = state.box();
  if (policy == PolicyKind::random) return box.sample_uniform(rng);
  if (needs_max_samples(policy) && !state.samples())
    throw InvalidState("next_point: policy " + std::string(to_string(policy)) +
                       " requires max-value samples");
  CmaConfig cfg = cma;
  cfg.seed = rng();
  const CmaResult res =
      maximize([&](const Vector& x) { return acquisition_value(policy, x, state); }, box, cfg);
  if (!(res.f_best > res.f_lowest)) {
    warn("acquisition '" + std::string(to_string(policy)) +
         "' is constant over all evaluated points; choosing a uniform random point");
    return box.sample_uniform(rng);
  }
  return res.x_best;
}

}  // namespace gpmgc
