#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "gpmgc/error.hpp"

namespace gpmgc {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

// Axis-aligned search domain.
struct SearchBox {
  std::vector<double> lower;
  std::vector<double> upper;

  SearchBox() = default;
  SearchBox(std::vector<double> lo, std::vector<double> hi)
      : lower(std::move(lo)), upper(std::move(hi)) {
    validate();
  }

  static SearchBox unit(std::size_t dim) {
    return SearchBox(std::vector<double>(dim, 0.0), std::vector<double>(dim, 1.0));
  }

  std::size_t dim() const noexcept { return lower.size(); }

  void validate() const {
    if (lower.empty() || lower.size() != upper.size())
      throw InvalidArgument("SearchBox: bounds must be nonempty and of equal length");
    for (std::size_t i = 0; i < lower.size(); ++i) {
      if (!std::isfinite(lower[i]) || !std::isfinite(upper[i]) || !(lower[i] < upper[i]))
        throw InvalidArgument("SearchBox: need finite lower < upper in dimension " +
                              std::to_string(i));
    }
  }

  bool contains(const Vector& x) const noexcept {
    if (static_cast<std::size_t>(x.size()) != dim()) return false;
    for (std::size_t i = 0; i < dim(); ++i)
      if (!(x[i] >= lower[i] && x[i] <= upper[i])) return false;
    return true;
  }

  double width(std::size_t i) const { return upper[i] - lower[i]; }

  Vector to_unit(const Vector& x) const {
    Vector u(x.size());
    for (Eigen::Index i = 0; i < x.size(); ++i) u[i] = (x[i] - lower[i]) / width(i);
    return u;
  }

  // Maps a unit-cube point back; the result is clipped so rounding never leaves the box.
  Vector from_unit(const Vector& u) const {
    Vector x(u.size());
    for (Eigen::Index i = 0; i < u.size(); ++i) {
      const double v = lower[i] + u[i] * width(i);
      x[i] = std::min(upper[i], std::max(lower[i], v));
    }
    return x;
  }

  template <class Gen>
  Vector sample_uniform(Gen& rng) const {
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    Vector u(static_cast<Eigen::Index>(dim()));
    for (Eigen::Index i = 0; i < u.size(); ++i) u[i] = unif(rng);
    return from_unit(u);
  }
};

}  // namespace gpmgc
