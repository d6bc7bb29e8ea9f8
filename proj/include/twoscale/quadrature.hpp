#pragma once

// Gauss-Legendre rules on [0,1]. The 2-point rule is exact for the
// products of per-direction-linear basis functions that appear in all
// assembled forms; the 4-point rule is used for integrals against
// non-polynomial fields.

#include <array>
#include <cstddef>

namespace twoscale {

struct QuadPoint1D {
  double x;
  double w;
};

inline constexpr std::array<QuadPoint1D, 2> kGauss2 = {{
    {0.21132486540518711775, 0.5},
    {0.78867513459481288225, 0.5},
}};

inline constexpr std::array<QuadPoint1D, 4> kGauss4 = {{
    {0.069431844202973712388, 0.17392742256872692869},
    {0.33000947820757186760, 0.32607257743127307131},
    {0.66999052179242813240, 0.32607257743127307131},
    {0.93056815579702628812, 0.17392742256872692869},
}};

// Runtime-selected rule (2 or 4 points).
inline const QuadPoint1D* gauss_rule(int points, int* count) {
  if (points == 2) {
    *count = 2;
    return kGauss2.data();
  }
  *count = 4;
  return kGauss4.data();
}

// Values of the four bilinear corner basis functions at (xi,eta) in [0,1]^2,
// corner order (0,0),(1,0),(0,1),(1,1).
inline std::array<double, 4> bilinear_values(double xi, double eta) {
  return {(1 - xi) * (1 - eta), xi * (1 - eta), (1 - xi) * eta, xi * eta};
}

// Reference gradients; scale by 1/h for an element of side h.
inline std::array<std::array<double, 2>, 4> bilinear_gradients(double xi, double eta) {
  return {{{-(1 - eta), -(1 - xi)}, {(1 - eta), -xi}, {-eta, (1 - xi)}, {eta, xi}}};
}

}  // namespace twoscale
