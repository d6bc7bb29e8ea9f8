#pragma once

// Assembly of the mass, stiffness and interface-trace operators on the
// macro and micro spaces, load vectors, quadrature of error integrands and
// the interpolation-trace inequality sampler.

#include <functional>
#include <span>
#include <vector>

#include "twoscale/fe_space.hpp"
#include "twoscale/linalg.hpp"
#include "twoscale/quadrature.hpp"

namespace twoscale {

// All operators act on free dofs; hanging-node constraints are already
// folded in. t_y[j] = integral of psi_j over Gamma^R, s_r = |Gamma^R|.
struct FeSystem {
  SparseMatrix m_omega, k_omega;        // macro mass / stiffness
  SparseMatrix m_y, k_y;                // micro mass / stiffness
  SparseMatrix b_y;                     // Gamma^R boundary mass
  std::vector<double> t_y;              // Gamma^R trace vector
  double s_r = 0.0;
  int n1 = 0;                           // macro dofs
  int n2 = 0;                           // micro dofs
};

FeSystem assemble(const FeSpaceMacro& macro, const FeSpaceMicro& micro);

// Boundary mass over the chosen sides (all four for the trace sampler).
SparseMatrix assemble_boundary_mass(const FeSpaceMicro& micro, const std::vector<Side>& sides);

// u^T (M + K) v; the H^1(Omega) resp. fiberwise H^1(Y) product.
double h1_inner_product(const SparseMatrix& mass, const SparseMatrix& stiffness,
                        std::span<const double> u, std::span<const double> v);

using Fn2 = std::function<double(double, double)>;
using GradFn2 = std::function<std::array<double, 2>(double, double)>;

// Load vectors. gauss = 2 for polynomial integrands, 4 against smooth
// non-polynomial fields.
std::vector<double> macro_load(const FeSpaceMacro& space, const Fn2& f, int gauss = 4);
std::vector<double> macro_load_h1(const FeSpaceMacro& space, const Fn2& f, const GradFn2& grad,
                                  int gauss = 4);
std::vector<double> micro_load(const FeSpaceMicro& space, const Fn2& f, int gauss = 4);
std::vector<double> micro_load_h1(const FeSpaceMicro& space, const Fn2& f, const GradFn2& grad,
                                  int gauss = 4);
// gradient-only loads: integral of grad f . grad basis
std::vector<double> macro_load_gradient(const FeSpaceMacro& space, const GradFn2& grad,
                                        int gauss = 4);
std::vector<double> micro_load_gradient(const FeSpaceMicro& space, const GradFn2& grad,
                                        int gauss = 4);
// integral of f psi_l over Gamma^R
std::vector<double> micro_edge_load(const FeSpaceMicro& space, const Fn2& f, int gauss = 4);

// Plain quadrature of pointwise functions (no FE space involved).
double macro_integral(const FeSpaceMacro& space, const Fn2& f, int gauss = 4);
double micro_integral(const FeSpaceMicro& space, const Fn2& f, int gauss = 4);
double micro_edge_integral(const FeSpaceMicro& space, const std::vector<Side>& sides, const Fn2& f,
                           int gauss = 4);

// Interpolation-trace inequality sampler: for random micro coefficient
// vectors reports the smallest constant c_rho with
//   trace term <= rho * gradient term + c_rho * mass term
// over the sample set.
struct TraceInequalityReport {
  double rho = 0.0;
  int samples = 0;
  double c_required = 0.0;   // max over samples of (trace - rho*grad)/mass
  double c_min = 0.0;
  bool dominated = false;    // a single finite constant covers all samples
};

TraceInequalityReport trace_inequality_check(const FeSpaceMicro& micro, double rho, int samples,
                                             std::uint64_t seed = 12345);

}  // namespace twoscale
