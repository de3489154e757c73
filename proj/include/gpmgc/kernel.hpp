#pragma once

// Matérn-5/2 kernel, its spectral density and random cosine features.

#include <cmath>
#include <cstddef>
#include <numbers>
#include <random>

#include "gpmgc/box.hpp"
#include "gpmgc/error.hpp"
#include "gpmgc/random.hpp"

namespace gpmgc {

struct KernelParams {
  double lengthscale = 1.0;  // input units
  double amplitude = 1.0;    // C, squared output units

  void validate() const {
    if (!(lengthscale > 0.0) || !std::isfinite(lengthscale))
      throw InvalidArgument("KernelParams: lengthscale must be positive and finite");
    if (!(amplitude > 0.0) || !std::isfinite(amplitude))
      throw InvalidArgument("KernelParams: amplitude must be positive and finite");
  }
};

/// Unit-amplitude Matérn-5/2 correlation at distance r.
inline double matern52(double r, double lengthscale) {
  if (!std::isfinite(r) || r < 0.0)
    throw InvalidArgument("matern52: distance must be finite and nonnegative");
  if (!(lengthscale > 0.0) || !std::isfinite(lengthscale))
    throw InvalidArgument("matern52: lengthscale must be positive");
  const double z = std::sqrt(5.0) * r / lengthscale;
  return (1.0 + z + z * z / 3.0) * std::exp(-z);
}

/// Full kernel C * k52(|x - y|).
inline double kernel(const Vector& x, const Vector& y, const KernelParams& p) {
  return p.amplitude * matern52((x - y).norm(), p.lengthscale);
}

/// Spectral density of the Matérn-5/2 kernel in D dimensions, as a function of
/// the frequency magnitude s (cycles per input unit). Integrates to one over R^D
/// under the convention k(r) = \int e^{2 pi i s.r} S(s) ds.
inline double spectral_density(double s, double lengthscale, int dim) {
  if (!(lengthscale > 0.0) || !std::isfinite(lengthscale))
    throw InvalidArgument("spectral_density: lengthscale must be positive");
  if (dim < 1) throw InvalidArgument("spectral_density: dimension must be >= 1");
  if (!std::isfinite(s) || s < 0.0)
    throw InvalidArgument("spectral_density: frequency must be finite and nonnegative");
  using std::numbers::pi;
  const double d = dim;
  const double log_prefactor = std::lgamma((d + 5.0) / 2.0) + 2.5 * std::log(5.0) -
                               (d + 11.0) / 2.0 * std::log(pi) - std::log(24.0) -
                               5.0 * std::log(lengthscale);
  const double base = s * s + 5.0 / (4.0 * pi * pi * lengthscale * lengthscale);
  return std::exp(log_prefactor - (d + 5.0) / 2.0 * std::log(base));
}

/// Random cosine features phi_i(x) = sqrt(2/B) cos(2 pi (s_i.x + b_i)).
/// Amplitude-free: the kernel amplitude enters through the weight prior.
struct FeatureMap {
  Matrix frequencies;  // B x D
  Vector phases;       // B, each in [0, 1)

  std::size_t count() const noexcept { return static_cast<std::size_t>(phases.size()); }
  std::size_t dim() const noexcept { return static_cast<std::size_t>(frequencies.cols()); }
};

/// Draws B frequencies from the spectral density using the multivariate
/// Student-t representation s = z sqrt(5/u) / (2 pi l), z ~ N(0, I_D), u ~ chi2(5).
inline FeatureMap sample_feature_map(double lengthscale, int dim, int count, Rng& rng) {
  if (count < 1) throw InvalidArgument("sample_feature_map: feature count must be >= 1");
  if (dim < 1) throw InvalidArgument("sample_feature_map: dimension must be >= 1");
  if (!(lengthscale > 0.0) || !std::isfinite(lengthscale))
    throw InvalidArgument("sample_feature_map: lengthscale must be positive");

  std::normal_distribution<double> normal(0.0, 1.0);
  std::chi_squared_distribution<double> chi2(5.0);
  std::uniform_real_distribution<double> unif(0.0, 1.0);

  FeatureMap fm;
  fm.frequencies.resize(count, dim);
  fm.phases.resize(count);
  const double scale = 1.0 / (2.0 * std::numbers::pi * lengthscale);
  for (int i = 0; i < count; ++i) {
    for (int j = 0; j < dim; ++j) fm.frequencies(i, j) = normal(rng);
    double u = chi2(rng);
    while (!(u > 0.0)) u = chi2(rng);
    fm.frequencies.row(i) *= std::sqrt(5.0 / u) * scale;
    double b = unif(rng);
    if (b >= 1.0) b = 0.0;
    fm.phases[i] = b;
  }
  return fm;
}

inline void feature_vector_into(const Vector& x, const FeatureMap& fm, Vector& out) {
  if (static_cast<std::size_t>(x.size()) != fm.dim())
    throw InvalidArgument("feature_vector: point dimension does not match feature map");
  const double norm = std::sqrt(2.0 / static_cast<double>(fm.count()));
  const double two_pi = 2.0 * std::numbers::pi;
  out.resize(static_cast<Eigen::Index>(fm.count()));
  out.noalias() = fm.frequencies * x;
  for (Eigen::Index i = 0; i < out.size(); ++i)
    out[i] = norm * std::cos(two_pi * (out[i] + fm.phases[i]));
}

inline Vector feature_vector(const Vector& x, const FeatureMap& fm) {
  Vector out(static_cast<Eigen::Index>(fm.count()));
  feature_vector_into(x, fm, out);
  return out;
}

/// phi(x)^T phi(y), the Monte-Carlo estimate of k52(|x - y|).
inline double approx_kernel(const Vector& x, const Vector& y, const FeatureMap& fm) {
  if (x.size() != y.size()) throw InvalidArgument("approx_kernel: dimension mismatch");
  return feature_vector(x, fm).dot(feature_vector(y, fm));
}

}  // namespace gpmgc
