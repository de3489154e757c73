// Maximizes a user-defined function with the GP-MGC loop written out by hand.

#include <cmath>
#include <cstdio>
#include <memory>

#include "gpmgc/gpmgc.hpp"

int main() {
  using namespace gpmgc;

  // A tilted bump with a decoy: global maximum near (0.7, 0.3).
  auto objective = [](const Vector& x) {
    const double a = std::exp(-20.0 * ((x[0] - 0.7) * (x[0] - 0.7) + (x[1] - 0.3) * (x[1] - 0.3)));
    const double b = 0.6 * std::exp(-30.0 * ((x[0] - 0.2) * (x[0] - 0.2) + (x[1] - 0.8) * (x[1] - 0.8)));
    return a + b + 0.1 * x[0];
  };

  const SearchBox box({0.0, 0.0}, {1.0, 1.0});
  Rng rng(2024);
  Dataset data(box);
  for (int i = 0; i < 3; ++i) {
    const Vector x = box.sample_uniform(rng);
    data.add(x, objective(x));
  }

  CmaConfig inner;
  inner.max_evaluations = 1000;
  GpHyperParams hyper;
  for (int t = 1; t <= 15; ++t) {
    hyper = fit_hyperparams(data, default_hyper_bounds(data), hyper, rng);
    auto gp = std::make_shared<const GpPosterior>(data, hyper);
    auto features = std::make_shared<const FeatureMap>(
        sample_feature_map(hyper.kernel.lengthscale, static_cast<int>(box.dim()), 500, rng));
    auto maxima = sample_maxima(*gp, 30, features, inner, rng);
    const AcquisitionState state(gp, t, std::move(maxima));
    const Vector x = next_point(PolicyKind::gp_mgc, state, inner, rng);
    const double y = objective(x);
    data.add(x, y);
    std::printf("step %2d  x = (%.4f, %.4f)  y = %.5f  best = %.5f\n", t, x[0], x[1], y, data.best_value());
  }
  return 0;
}
