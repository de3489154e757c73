#pragma once

// Distance correlation and multiscale graph correlation (MGC) for paired
// scalar samples.
//
// Conventions:
//  * distance_correlation is the V-statistic form: both distance matrices are
//    double-centered, dCov^2 = mean(A o B), dCor = sqrt(dCov^2 / sqrt(dVar^2_u dVar^2_v)).
//  * The MGC local map ranks neighbours per row (row i lists j by increasing
//    |u_i - u_j|, ties broken by index). Under Centering::mgc each row of the
//    distance matrix has its row sum / (M - 1) subtracted and the diagonal is
//    zeroed. Under Centering::biased the double-centered matrix is used and the
//    global-scale entry equals dCor^2.
//  * Any side with zero (or nonpositive) variance yields a statistic of 0.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <boost/math/special_functions/beta.hpp>
#include <Eigen/Dense>

#include "gpmgc/box.hpp"
#include "gpmgc/error.hpp"

namespace gpmgc {

inline constexpr std::size_t kMinDependenceSamples = 4;

enum class Centering { mgc, biased };

struct DependenceResult {
  double statistic = 0.0;
  int scale_u = 0;  // optimal neighbourhood sizes (k*, l*), 1-based
  int scale_v = 0;
};

namespace detail {

inline void check_finite(std::span<const double> s, const char* who) {
  for (double v : s)
    if (!std::isfinite(v)) throw InvalidArgument(std::string(who) + ": non-finite sample");
}

inline void check_pair(std::span<const double> u, std::span<const double> v, const char* who) {
  if (u.size() != v.size())
    throw InvalidArgument(std::string(who) + ": samples must have equal length");
  if (u.size() < kMinDependenceSamples)
    throw TooFewSamples(std::string(who) + ": need at least 4 paired samples, got " +
                        std::to_string(u.size()));
  check_finite(u, who);
  check_finite(v, who);
}

inline Matrix double_center(const Matrix& d) {
  const Vector row_mean = d.rowwise().mean();
  const Vector col_mean = d.colwise().mean().transpose();
  const double grand = d.mean();
  Matrix a = d;
  a.colwise() -= row_mean;
  a.rowwise() -= col_mean.transpose();
  a.array() += grand;
  return a;
}

}  // namespace detail

/// M x M matrix of |s_i - s_j|.
inline Matrix pairwise_distances(std::span<const double> samples) {
  if (samples.size() < 2) throw InvalidArgument("pairwise_distances: need at least two samples");
  detail::check_finite(samples, "pairwise_distances");
  const Eigen::Index m = static_cast<Eigen::Index>(samples.size());
  Matrix d(m, m);
  for (Eigen::Index i = 0; i < m; ++i) {
    d(i, i) = 0.0;
    for (Eigen::Index j = 0; j < i; ++j) {
      const double v = std::abs(samples[i] - samples[j]);
      d(i, j) = v;
      d(j, i) = v;
    }
  }
  return d;
}

inline DependenceResult distance_correlation(std::span<const double> u, std::span<const double> v) {
  detail::check_pair(u, v, "distance_correlation");
  const int m = static_cast<int>(u.size());
  const Matrix a = detail::double_center(pairwise_distances(u));
  const Matrix b = detail::double_center(pairwise_distances(v));
  const double dcov2 = a.cwiseProduct(b).mean();
  const double dvar_u = a.squaredNorm() / (double(m) * m);
  const double dvar_v = b.squaredNorm() / (double(m) * m);
  if (!(dvar_u > 0.0) || !(dvar_v > 0.0)) return {0.0, m, m};
  const double r2 = std::max(0.0, dcov2) / std::sqrt(dvar_u * dvar_v);
  return {std::sqrt(r2), m, m};
}

/// Centered distances and per-row neighbour ranks for one side of a pair.
/// Reusable when one side stays fixed across many evaluations.
class DistanceProfile {
 public:
  DistanceProfile(std::span<const double> samples, Centering centering) {
    if (samples.size() < kMinDependenceSamples)
      throw TooFewSamples("DistanceProfile: need at least 4 samples");
    const Matrix d = pairwise_distances(samples);
    const Eigen::Index m = d.rows();
    if (centering == Centering::biased) {
      centered_ = detail::double_center(d);
    } else {
      centered_ = d;
      const Vector row_sum = d.rowwise().sum();
      for (Eigen::Index i = 0; i < m; ++i) {
        centered_.row(i).array() -= row_sum[i] / static_cast<double>(m - 1);
        centered_(i, i) = 0.0;
      }
    }
    // rank(i, j): 0-based position of j among row i sorted by distance, ties by index.
    ranks_.resize(m, m);
    std::vector<int> order(static_cast<std::size_t>(m));
    for (Eigen::Index i = 0; i < m; ++i) {
      std::iota(order.begin(), order.end(), 0);
      std::stable_sort(order.begin(), order.end(),
                       [&](int x, int y) { return d(i, x) < d(i, y); });
      for (Eigen::Index r = 0; r < m; ++r) ranks_(i, order[r]) = static_cast<int>(r);
    }
    // Local variances over the nested neighbourhoods.
    Vector sums = Vector::Zero(m);
    Vector prod = Vector::Zero(m);
    for (Eigen::Index i = 0; i < m; ++i) {
      for (Eigen::Index j = 0; j < m; ++j) {
        sums[ranks_(i, j)] += centered_(i, j);
        prod[std::max(ranks_(i, j), ranks_(j, i))] += centered_(i, j) * centered_(j, i);
      }
    }
    for (Eigen::Index k = 1; k < m; ++k) {
      sums[k] += sums[k - 1];
      prod[k] += prod[k - 1];
    }
    const double m2 = static_cast<double>(m) * m;
    partial_sums_ = sums;
    variances_ = prod - sums.cwiseProduct(sums) / m2;
  }

  Eigen::Index size() const noexcept { return centered_.rows(); }
  const Matrix& centered() const noexcept { return centered_; }
  const Eigen::MatrixXi& ranks() const noexcept { return ranks_; }
  // variances()[k] is the local variance restricted to the k+1 nearest neighbours.
  const Vector& variances() const noexcept { return variances_; }
  const Vector& partial_sums() const noexcept { return partial_sums_; }

 private:
  Matrix centered_;
  Eigen::MatrixXi ranks_;
  Vector variances_;
  Vector partial_sums_;
};

/// Map of local correlations c(k, l), k, l = 1..M, stored 0-based.
inline Matrix local_correlation_map(const DistanceProfile& pu, const DistanceProfile& pv) {
  const Eigen::Index m = pu.size();
  if (pv.size() != m) throw InvalidArgument("local_correlation_map: sample sizes differ");
  Matrix cov = Matrix::Zero(m, m);
  const Matrix& a = pu.centered();
  const Matrix& b = pv.centered();
  const auto& ru = pu.ranks();
  const auto& rv = pv.ranks();
  for (Eigen::Index i = 0; i < m; ++i)
    for (Eigen::Index j = 0; j < m; ++j) cov(ru(i, j), rv(i, j)) += a(i, j) * b(i, j);
  // 2-D inclusive prefix sums. The two neighbours are added together first so
  // that swapping u and v yields exactly the transposed map.
  for (Eigen::Index k = 0; k < m; ++k) {
    for (Eigen::Index l = 0; l < m; ++l) {
      const double up = k > 0 ? cov(k - 1, l) : 0.0;
      const double left = l > 0 ? cov(k, l - 1) : 0.0;
      const double diag = (k > 0 && l > 0) ? cov(k - 1, l - 1) : 0.0;
      cov(k, l) = cov(k, l) + (up + left) - diag;
    }
  }

  const double m2 = static_cast<double>(m) * m;
  const Vector& su = pu.partial_sums();
  const Vector& sv = pv.partial_sums();
  const Vector& vu = pu.variances();
  const Vector& vv = pv.variances();
  Matrix corr(m, m);
  for (Eigen::Index k = 0; k < m; ++k) {
    for (Eigen::Index l = 0; l < m; ++l) {
      if (!(vu[k] > 0.0) || !(vv[l] > 0.0)) {
        corr(k, l) = 0.0;
        continue;
      }
      const double c = (cov(k, l) - su[k] * sv[l] / m2) / std::sqrt(vu[k] * vv[l]);
      corr(k, l) = std::isfinite(c) ? std::clamp(c, -1.0, 1.0) : 0.0;
    }
  }
  return corr;
}

inline Matrix local_correlation_map(std::span<const double> u, std::span<const double> v,
                                    Centering centering = Centering::mgc) {
  detail::check_pair(u, v, "local_correlation_map");
  return local_correlation_map(DistanceProfile(u, centering), DistanceProfile(v, centering));
}

/// Global-scale correlation (every pair included), computed without ranks.
inline double global_correlation(std::span<const double> u, std::span<const double> v,
                                 Centering centering = Centering::mgc) {
  detail::check_pair(u, v, "global_correlation");
  const DistanceProfile pu(u, centering);
  const DistanceProfile pv(v, centering);
  const Matrix& a = pu.centered();
  const Matrix& b = pv.centered();
  const double m2 = static_cast<double>(a.rows()) * a.rows();
  const double cov = a.cwiseProduct(b).sum() - a.sum() * b.sum() / m2;
  const double vu = a.cwiseProduct(a.transpose()).sum() - a.sum() * a.sum() / m2;
  const double vv = b.cwiseProduct(b.transpose()).sum() - b.sum() * b.sum() / m2;
  if (!(vu > 0.0) || !(vv > 0.0)) return 0.0;
  return std::clamp(cov / std::sqrt(vu * vv), -1.0, 1.0);
}

namespace detail {

// Null quantile of a local correlation under a symmetric beta approximation,
// at level 1 - 0.02 / (M - 1), mapped from [0,1] to [-1,1].
inline double mgc_threshold(Eigen::Index m) {
  const double n = static_cast<double>(m - 1);
  const double shape = n * (n - 3.0) / 4.0 - 0.5;
  if (!(shape > 0.0)) return 1.0;  // too small for the approximation: nothing is significant
  const double level = 1.0 - 0.02 / n;
  return boost::math::ibeta_inv(shape, shape, level) * 2.0 - 1.0;
}

}  // namespace detail

/// Smoothed maximum of a local correlation map: threshold it, keep the largest
/// 4-connected region of significant scales, and report its maximum when the
/// region covers at least 2M scales. Falls back to the global-scale entry.
inline DependenceResult mgc_from_map(const Matrix& map) {
  const Eigen::Index m = map.rows();
  const double global = map(m - 1, m - 1);
  DependenceResult out{global, static_cast<int>(m), static_cast<int>(m)};

  const double threshold = std::max(detail::mgc_threshold(m), global);
  Eigen::MatrixXi label = Eigen::MatrixXi::Zero(m, m);
  int best_label = 0;
  long best_area = 0;
  int next_label = 0;
  std::vector<std::pair<Eigen::Index, Eigen::Index>> stack;
  for (Eigen::Index k = 0; k < m; ++k) {
    for (Eigen::Index l = 0; l < m; ++l) {
      if (!(map(k, l) > threshold) || label(k, l) != 0) continue;
      ++next_label;
      long area = 0;
      stack.assign(1, {k, l});
      label(k, l) = next_label;
      while (!stack.empty()) {
        const auto [r, c] = stack.back();
        stack.pop_back();
        ++area;
        const std::pair<Eigen::Index, Eigen::Index> nbrs[] = {
            {r - 1, c}, {r + 1, c}, {r, c - 1}, {r, c + 1}};
        for (const auto& [nr, nc] : nbrs) {
          if (nr < 0 || nc < 0 || nr >= m || nc >= m) continue;
          if (label(nr, nc) != 0 || !(map(nr, nc) > threshold)) continue;
          label(nr, nc) = next_label;
          stack.emplace_back(nr, nc);
        }
      }
      if (area > best_area) {
        best_area = area;
        best_label = next_label;
      }
    }
  }
  if (best_label == 0 || best_area < 2 * m) return out;

  double best = -2.0;
  Eigen::Index best_k = 0, best_l = 0;
  for (Eigen::Index k = 0; k < m; ++k)
    for (Eigen::Index l = 0; l < m; ++l)
      if (label(k, l) == best_label && map(k, l) >= best) {
        best = map(k, l);
        best_k = k;
        best_l = l;
      }
  if (best >= global) {
    out.statistic = best;
    out.scale_u = static_cast<int>(best_k + 1);
    out.scale_v = static_cast<int>(best_l + 1);
  }
  return out;
}

inline DependenceResult mgc_statistic(std::span<const double> u, std::span<const double> v,
                                      Centering centering = Centering::mgc) {
  return mgc_from_map(local_correlation_map(u, v, centering));
}

}  // namespace gpmgc
