#pragma once

// H^1-orthogonal (elliptic) projection of a known field onto the macro
// space, the per-square error indicator built from its complement part,
// and the threshold marking rule.

#include <span>
#include <vector>

#include "twoscale/assembly.hpp"
#include "twoscale/fields.hpp"

namespace twoscale {

// Projection coefficients per time node, defined by
// <u - R_u, phi_k>_{H^1(Omega)} = 0 for every free basis function.
struct EllipticProjection {
  std::vector<double> times;
  std::vector<std::vector<double>> coefficients;
};

EllipticProjection elliptic_project(const MacroField& u, const FeSpaceMacro& space,
                                    const FeSystem& system, std::span<const double> time_nodes,
                                    double cg_tol = 1e-12);

// nu(Q)^2 = int_S int_Q (e^2 + |grad e|^2) dx dt with e = u - R_u,
// composite trapezoid in time, 4-point tensor Gauss per element (elements
// coincide with the squares of the partition).
struct IndicatorReport {
  int generation = 0;
  std::vector<double> values;  // per element, same order as space.elements()
  double max_value = 0.0;
  double sum_squares = 0.0;    // equals the squared global space-time H1 norm of e
  double beta = 0.0;
  std::vector<int> marked;     // element indices with nu >= beta * max
  int closure_splits = 0;
  int dof_count = 0;
};

IndicatorReport error_indicator(const MacroField& u, const EllipticProjection& projection,
                                const FeSpaceMacro& space);

// J = { Q : nu(Q) >= beta * max nu }; nonempty for beta in (0,1).
std::vector<int> mark(std::span<const double> values, double beta);

// Spearman rank correlation (average ranks on ties); +1 means perfectly
// increasing.
double spearman_rank_correlation(std::span<const double> x, std::span<const double> y);

}  // namespace twoscale
