#pragma once

// Synthetic benchmark functions in maximization form (negated standard
// minimization definitions), and a multistart Nelder-Mead oracle for their
// maxima.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <numeric>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "gpmgc/box.hpp"
#include "gpmgc/error.hpp"
#include "gpmgc/random.hpp"

namespace gpmgc {

struct TestFunction {
  std::string name;
  std::size_t dim = 0;
  SearchBox box;
  double f_max = 0.0;  // known global maximum
  Vector argmax;       // one maximizer
  double (*evaluator)(const Vector&) = nullptr;

  double operator()(const Vector& x) const {
    if (!box.contains(x))
      throw InvalidArgument("benchmark '" + name + "': point outside the domain");
    return evaluator(x);
  }
};

namespace bench {

inline double michalewicz(const Vector& x) {
  constexpr int steepness = 10;
  double s = 0.0;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double inner = std::sin((i + 1.0) * x[i] * x[i] / std::numbers::pi);
    s += std::sin(x[i]) * std::pow(inner, 2 * steepness);
  }
  return s;
}

inline double six_hump_camel(const Vector& x) {
  const double a = x[0], b = x[1];
  const double a2 = a * a, b2 = b * b;
  const double v = (4.0 - 2.1 * a2 + a2 * a2 / 3.0) * a2 + a * b + (-4.0 + 4.0 * b2) * b2;
  return -v;
}

inline double hartmann(const Vector& x, const double* alpha, const double* a, const double* p,
                       int dim) {
  double s = 0.0;
  for (int i = 0; i < 4; ++i) {
    double inner = 0.0;
    for (int j = 0; j < dim; ++j) {
      const double d = x[j] - p[i * dim + j];
      inner += a[i * dim + j] * d * d;
    }
    s += alpha[i] * std::exp(-inner);
  }
  return s;
}

inline constexpr double kHartmannAlpha[4] = {1.0, 1.2, 3.0, 3.2};

inline double hartmann3(const Vector& x) {
  static constexpr double a[12] = {3.0, 10, 30, 0.1, 10, 35, 3.0, 10, 30, 0.1, 10, 35};
  static constexpr double p[12] = {0.3689, 0.1170, 0.2673, 0.4699, 0.4387, 0.7470,
                                   0.1091, 0.8732, 0.5547, 0.0381, 0.5743, 0.8828};
  return hartmann(x, kHartmannAlpha, a, p, 3);
}

inline double hartmann6(const Vector& x) {
  static constexpr double a[24] = {10,   3,  17,   3.50, 1.7, 8,  0.05, 10, 17, 0.1, 8,  14,
                                   3,    3.5, 1.7, 10,   17,  8,  17,   8,  0.05, 10, 0.1, 14};
  static constexpr double p[24] = {0.1312, 0.1696, 0.5569, 0.0124, 0.8283, 0.5886,
                                   0.2329, 0.4135, 0.8307, 0.3736, 0.1004, 0.9991,
                                   0.2348, 0.1451, 0.3522, 0.2883, 0.3047, 0.6650,
                                   0.4047, 0.8828, 0.8732, 0.5743, 0.1091, 0.0381};
  return hartmann(x, kHartmannAlpha, a, p, 6);
}

inline double ackley(const Vector& x) {
  constexpr double a = 20.0, b = 0.2, c = 2.0 * std::numbers::pi;
  const double n = static_cast<double>(x.size());
  double sq = 0.0, cs = 0.0;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    sq += x[i] * x[i];
    cs += std::cos(c * x[i]);
  }
  // Written so that the origin evaluates to exactly zero.
  const double v = a * (1.0 - std::exp(-b * std::sqrt(sq / n))) + (std::numbers::e - std::exp(cs / n));
  return -v;
}

inline double levy(const Vector& x) {
  using std::numbers::pi;
  const Eigen::Index d = x.size();
  auto w = [&](Eigen::Index i) { return 1.0 + (x[i] - 1.0) / 4.0; };
  const double s0 = std::sin(pi * w(0));
  double v = s0 * s0;
  for (Eigen::Index i = 0; i + 1 < d; ++i) {
    const double wi = w(i);
    const double s = std::sin(pi * wi + 1.0);
    v += (wi - 1.0) * (wi - 1.0) * (1.0 + 10.0 * s * s);
  }
  const double wd = w(d - 1);
  const double sd = std::sin(2.0 * pi * wd);
  v += (wd - 1.0) * (wd - 1.0) * (1.0 + sd * sd);
  return -v;
}

inline Vector point(std::initializer_list<double> v) {
  Vector x(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double e : v) x[i++] = e;
  return x;
}

}  // namespace bench

/// The six benchmark problems, in a fixed order.
inline const std::vector<TestFunction>& catalog() {
  static const std::vector<TestFunction> functions = [] {
    using std::numbers::pi;
    std::vector<TestFunction> f;
    f.push_back({"michalewicz-2", 2, SearchBox({0.0, 0.0}, {pi, pi}), 1.8013034100985537,
                 bench::point({2.2029055201726, 1.5707963267949}), &bench::michalewicz});
    f.push_back({"camel-2", 2, SearchBox({-3.0, -2.0}, {3.0, 2.0}), 1.0316284534898774,
                 bench::point({0.0898420131003, -0.7126564030207}), &bench::six_hump_camel});
    f.push_back({"hartmann-3", 3, SearchBox::unit(3), 3.8627797873326628,
                 bench::point({0.11458888812486656, 0.5556488947712197, 0.85254698542070395}), &bench::hartmann3});
    f.push_back({"ackley-3", 3, SearchBox(std::vector<double>(3, -32.768), std::vector<double>(3, 32.768)),
                 0.0, bench::point({0.0, 0.0, 0.0}), &bench::ackley});
    f.push_back({"levy-4", 4, SearchBox(std::vector<double>(4, -10.0), std::vector<double>(4, 10.0)),
                 0.0, bench::point({1.0, 1.0, 1.0, 1.0}), &bench::levy});
    f.push_back({"hartmann-6", 6, SearchBox::unit(6), 3.3223680114155156,
                 bench::point({0.20168952, 0.15001069, 0.47687398, 0.27533243, 0.31165162, 0.65730054}),
                 &bench::hartmann6});
    return f;
  }();
  return functions;
}

inline const TestFunction& find_function(std::string_view name) {
  for (const auto& f : catalog())
    if (f.name == name) return f;
  std::string known;
  for (const auto& f : catalog()) known += (known.empty() ? "" : ", ") + f.name;
  throw InvalidArgument("unknown benchmark function '" + std::string(name) + "' (known: " + known + ")");
}

inline double evaluate(std::string_view name, const Vector& x) {
  const TestFunction& f = find_function(name);
  if (static_cast<std::size_t>(x.size()) != f.dim)
    throw InvalidArgument("evaluate: point has wrong dimension for '" + f.name + "'");
  return f(x);
}

struct LocalSearchResult {
  Vector x;
  double f = 0.0;
  long evaluations = 0;
};

/// Nelder-Mead maximization in box-normalized coordinates; vertices are clipped
/// into the box. Restarts around the best vertex until a restart no longer improves.
template <class Objective>
LocalSearchResult nelder_mead_maximize(Objective&& fn, const SearchBox& box, const Vector& start,
                                       double initial_size = 0.1, double tol = 1e-12,
                                       long max_evaluations = 20000) {
  const Eigen::Index n = static_cast<Eigen::Index>(box.dim());
  LocalSearchResult out;
  auto eval = [&](const Vector& u) {
    ++out.evaluations;
    return fn(box.from_unit(u));
  };
  auto clip = [](Vector u) { return Vector(u.cwiseMax(0.0).cwiseMin(1.0)); };

  Vector best = clip(box.to_unit(start));
  double best_f = eval(best);
  double size = initial_size;
  for (int restart = 0; restart < 20 && out.evaluations < max_evaluations; ++restart) {
    std::vector<Vector> simplex(static_cast<std::size_t>(n + 1), best);
    std::vector<double> values(static_cast<std::size_t>(n + 1), best_f);
    for (Eigen::Index i = 0; i < n; ++i) {
      Vector v = best;
      v[i] += (v[i] + size <= 1.0) ? size : -size;
      simplex[i + 1] = clip(v);
      values[i + 1] = eval(simplex[i + 1]);
    }
    std::vector<std::size_t> order(simplex.size());
    while (out.evaluations < max_evaluations) {
      std::iota(order.begin(), order.end(), 0);
      std::sort(order.begin(), order.end(), [&](auto a, auto b) { return values[a] > values[b]; });
      const std::size_t hi = order.front(), lo = order.back(), second_lo = order[order.size() - 2];
      double spread = 0.0;
      for (const auto& v : simplex) spread = std::max(spread, (v - simplex[hi]).cwiseAbs().maxCoeff());
      if (std::abs(values[hi] - values[lo]) <= tol * (1.0 + std::abs(values[hi])) && spread < 1e-9)
        break;
      if (spread < 1e-12) break;

      Vector centroid = Vector::Zero(n);
      for (std::size_t i = 0; i < simplex.size(); ++i)
        if (i != lo) centroid += simplex[i];
      centroid /= static_cast<double>(n);

      const Vector xr = clip(centroid + (centroid - simplex[lo]));
      const double fr = eval(xr);
      if (fr > values[hi]) {
        const Vector xe = clip(centroid + 2.0 * (centroid - simplex[lo]));
        const double fe = eval(xe);
        if (fe > fr) { simplex[lo] = xe; values[lo] = fe; }
        else { simplex[lo] = xr; values[lo] = fr; }
      } else if (fr > values[second_lo]) {
        simplex[lo] = xr;
        values[lo] = fr;
      } else {
        const bool outside = fr > values[lo];
        const Vector xc = outside ? clip(centroid + 0.5 * (xr - centroid))
                                  : clip(centroid + 0.5 * (simplex[lo] - centroid));
        const double fc = eval(xc);
        if (fc > std::max(fr, values[lo])) {
          simplex[lo] = xc;
          values[lo] = fc;
        } else {
          for (std::size_t i = 0; i < simplex.size(); ++i) {
            if (i == hi) continue;
            simplex[i] = simplex[hi] + 0.5 * (simplex[i] - simplex[hi]);
            values[i] = eval(simplex[i]);
          }
        }
      }
    }
    const auto top = std::max_element(values.begin(), values.end()) - values.begin();
    const bool improved = values[top] > best_f + tol * (1.0 + std::abs(best_f));
    if (values[top] >= best_f) {
      best = simplex[top];
      best_f = values[top];
    }
    if (!improved && restart > 0) break;
    size = std::max(1e-4, size * 0.5);
  }
  out.x = box.from_unit(best);
  out.f = best_f;
  return out;
}

struct OracleResult {
  Vector x;
  double f_max = 0.0;
  long evaluations = 0;
  int starts = 0;
};

/// Multistart local-search estimate of a function's global maximum: `starts`
/// uniform random starting points each refined by Nelder-Mead.
template <class Objective>
OracleResult multistart_maximum(Objective&& fn, const SearchBox& box, int starts,
                                std::uint64_t seed) {
  if (starts < 1) throw InvalidArgument("multistart_maximum: need at least one start");
  Rng rng(seed);
  OracleResult best;
  best.f_max = -std::numeric_limits<double>::infinity();
  best.starts = starts;
  for (int s = 0; s < starts; ++s) {
    const Vector x0 = box.sample_uniform(rng);
    const auto r = nelder_mead_maximize(fn, box, x0);
    best.evaluations += r.evaluations;
    if (r.f > best.f_max) {
      best.f_max = r.f;
      best.x = r.x;
    }
  }
  return best;
}

inline OracleResult oracle_max(const TestFunction& f, int starts = 10000, std::uint64_t seed = 1) {
  return multistart_maximum([&](const Vector& x) { return f.evaluator(x); }, f.box, starts, seed);
}

}  // namespace gpmgc
