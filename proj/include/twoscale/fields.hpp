#pragma once

// Space-time fields used for data, forcing terms and manufactured
// solutions. Two-scale fields are stored as sums of separable terms
// T(t) * g(x) * mu(y); every integral over Omega x Y then factors into a
// macro and a micro integral, which is what keeps the coupled loads cheap.

#include <array>
#include <functional>
#include <vector>

namespace twoscale {

using TimeFn = std::function<double(double)>;
using SpaceFn = std::function<double(double, double)>;
using SpaceGradFn = std::function<std::array<double, 2>(double, double)>;

struct MacroField {
  std::function<double(double, double, double)> value;  // (t, x1, x2)
  std::function<std::array<double, 2>(double, double, double)> grad;
  std::function<double(double, double, double)> dt;
  std::function<double(double, double, double)> laplacian;

  bool empty() const { return !value; }
};

struct SeparableTerm {
  TimeFn time = [](double) { return 1.0; };
  TimeFn time_dt = [](double) { return 0.0; };
  SpaceFn macro = [](double, double) { return 1.0; };
  SpaceGradFn macro_grad = [](double, double) { return std::array<double, 2>{0.0, 0.0}; };
  SpaceFn micro = [](double, double) { return 1.0; };
  SpaceGradFn micro_grad = [](double, double) { return std::array<double, 2>{0.0, 0.0}; };
  SpaceFn micro_laplacian = [](double, double) { return 0.0; };
};

struct TwoScaleField {
  std::vector<SeparableTerm> terms;

  bool empty() const { return terms.empty(); }

  double value(double t, double x1, double x2, double y1, double y2) const {
    double v = 0.0;
    for (const auto& s : terms) v += s.time(t) * s.macro(x1, x2) * s.micro(y1, y2);
    return v;
  }

  std::array<double, 2> grad_y(double t, double x1, double x2, double y1, double y2) const {
    std::array<double, 2> g{0.0, 0.0};
    for (const auto& s : terms) {
      const double c = s.time(t) * s.macro(x1, x2);
      const auto mg = s.micro_grad(y1, y2);
      g[0] += c * mg[0];
      g[1] += c * mg[1];
    }
    return g;
  }

  double dt(double t, double x1, double x2, double y1, double y2) const {
    double v = 0.0;
    for (const auto& s : terms) v += s.time_dt(t) * s.macro(x1, x2) * s.micro(y1, y2);
    return v;
  }
};

}  // namespace twoscale
