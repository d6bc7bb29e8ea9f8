#pragma once

// Manufactured exact solutions with analytically derived forcing, error
// norms in the mixed space-time norms, the continuity-with-data experiment
// and experimental-order-of-convergence fitting.
//
// The macro boundary condition on Gamma^R is generally incompatible with a
// separable manufactured micro field; the analytic flux mismatch is added
// to the weak form as an extra boundary forcing term (the mode is recorded
// on the problem).

#include <memory>
#include <string>
#include <vector>

#include "twoscale/refine.hpp"
#include "twoscale/solver.hpp"

namespace twoscale {

// One separable macro term T(t) * g(x).
struct MacroTerm {
  TimeFn time = [](double) { return 1.0; };
  TimeFn time_dt = [](double) { return 0.0; };
  SpaceFn g = [](double, double) { return 1.0; };
  SpaceGradFn g_grad = [](double, double) { return std::array<double, 2>{0.0, 0.0}; };
  SpaceFn g_laplacian = [](double, double) { return 0.0; };
};

struct ProblemCoefficients {
  double d_u = 1.0, d_v = 1.0, d_w = 1.0;
  double alpha = 1.0;
  double gamma = 1.0;
  double t_final = 1.0;
  std::vector<Side> gamma_r = {Side::top};
};

struct ManufacturedProblem {
  std::string id;
  ProblemCoefficients coefficients;

  std::vector<MacroTerm> u_terms;  // exact macro field as separable terms
  MacroField u;                    // the same field with closed-form derivatives
  TwoScaleField v, w;
  ReactionLaw eta;

  MacroField forcing_u;
  TwoScaleField forcing_v, forcing_w;
  TwoScaleField robin_forcing;
  bool flux_mismatch_mode = true;

  // Packaged data for the solver (boundary/initial values and forcing).
  ModelParams params() const;
};

// Registry: "constant", "separable-smooth", "layer".
ManufacturedProblem make_problem(const std::string& id, const ProblemCoefficients& c = {});
std::vector<std::string> problem_registry();

// ---------------------------------------------------------------------------
// error norms

struct ErrorNorms {
  double eu_l2l2 = 0.0;  // ||U - Utilde|| in L2(S, L2)
  double eu_l2h1 = 0.0;  // ... in L2(S, H1)
  double ev_x = 0.0;     // micro errors in X = L2(S, L2(Omega, H1(Y)))
  double ew_x = 0.0;
  double e1_l2h1 = 0.0;  // projected part R_U - Utilde
  double e2_l2h1 = 0.0;  // complement part U - R_U
  double e1_at_0_l2 = 0.0;
  double pythagoras_defect = 0.0;  // max over time of the relative split defect
};

// Streaming accumulator usable as a solver observer; finalize() applies the
// trapezoid rule over the observed times.
class ErrorNormAccumulator {
 public:
  ErrorNormAccumulator(const ManufacturedProblem& problem, const FeSpaceMacro& macro,
                       const FeSpaceMicro& micro, const FeSystem& system, bool with_split);
  ~ErrorNormAccumulator();

  void observe(const TwoScaleState& s, int step, const StepDiagnostics* diag);
  ErrorNorms finalize() const;

  TwoScaleSolver::Observer observer() {
    return [this](const TwoScaleState& s, int step, const StepDiagnostics* d) {
      observe(s, step, d);
    };
  }

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

ErrorNorms error_norms(const std::vector<TwoScaleState>& trajectory,
                       const ManufacturedProblem& problem, const FeSpaceMacro& macro,
                       const FeSpaceMicro& micro, const FeSystem& system, bool with_split = true);

// Direct tensor-quadrature micro error at one time (no factorization, no
// cancellation); used where errors approach machine precision.
struct MicroErrorAtTime {
  double l2_sq = 0.0;
  double x_sq = 0.0;  // L2(Omega, H1(Y))
};
MicroErrorAtTime micro_error_direct(const TwoScaleField& field, std::span<const double> tensor_coeffs,
                                    const FeSpaceMacro& macro, const FeSpaceMicro& micro, double t,
                                    int gauss = 4);

// Fiberwise H1(Y) projection error of a separable field (the micro
// counterpart of the elliptic projection); drives the micro-rate study.
struct MicroProjectionError {
  double l2 = 0.0;  // L2(S, L2(Omega, L2(Y)))
  double h1 = 0.0;  // L2(S, L2(Omega, H1(Y)))
};
MicroProjectionError micro_projection_error(const TwoScaleField& chi, const FeSpaceMacro& macro,
                                            const FeSpaceMicro& micro, const FeSystem& system,
                                            std::span<const double> time_nodes);

// ---------------------------------------------------------------------------
// weak-residual consistency audit of a manufactured problem

struct WeakResidualReport {
  double residual_u = 0.0;  // max |R . z| over random unit test vectors
  double residual_v = 0.0;
  double residual_w = 0.0;
};

WeakResidualReport weak_residual_check(const ManufacturedProblem& problem,
                                       const FeSpaceMacro& macro, const FeSpaceMicro& micro,
                                       const FeSystem& system, int n_times = 3,
                                       int n_test_samples = 8, std::uint64_t seed = 2024);

// ---------------------------------------------------------------------------
// continuity with respect to data

struct ContinuityReport {
  double numerator = 0.0;    // ||v2-v1||_X^2 + ||w2-w1||_X^2
  double denominator = 0.0;  // ||U2-U1||^2_{L2(S,L2)}
  double rho_cont = 0.0;
  bool identical_inputs = false;
};

ContinuityReport continuity_experiment(const std::function<double(double, double, double)>& u1,
                                       const std::function<double(double, double, double)>& u2,
                                       const MicroSystemParams& base, const FeSpaceMacro& macro,
                                       const FeSpaceMicro& micro, const FeSystem& system,
                                       double dt, SolverOptions options = {});

// ---------------------------------------------------------------------------
// EOC fitting

struct EocTable {
  std::vector<double> h;
  std::vector<double> error;
  std::vector<double> slopes;  // between consecutive levels
};

EocTable eoc(const std::vector<std::pair<double, double>>& table);

}  // namespace twoscale
