// Distance correlation and MGC on linear, nonlinear and independent pairs.

#include <cmath>
#include <cstdio>
#include <random>
#include <vector>

#include "gpmgc/dependence.hpp"
#include "gpmgc/random.hpp"

int main() {
  gpmgc::Rng rng(7);
  std::normal_distribution<double> normal(0.0, 1.0);
  const int m = 100;
  std::vector<double> u(m), linear(m), circle(m), independent(m);
  for (int i = 0; i < m; ++i) {
    u[i] = normal(rng);
    linear[i] = 2.0 * u[i] + 0.5 * normal(rng);
    circle[i] = std::sqrt(std::max(0.0, 4.0 - u[i] * u[i])) * (i % 2 ? 1.0 : -1.0) + 0.1 * normal(rng);
    independent[i] = normal(rng);
  }
  const std::pair<const char*, const std::vector<double>*> cases[] = {
      {"linear", &linear}, {"circle", &circle}, {"independent", &independent}};
  std::printf("%-12s %8s %8s %10s\n", "relation", "dcor", "mgc", "scale");
  for (const auto& [name, v] : cases) {
    const auto dc = gpmgc::distance_correlation(u, *v);
    const auto mgc = gpmgc::mgc_statistic(u, *v);
    std::printf("%-12s %8.4f %8.4f %4d x %-4d\n", name, dc.statistic, mgc.statistic, mgc.scale_u, mgc.scale_v);
  }
  return 0;
}
