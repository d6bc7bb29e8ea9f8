#pragma once

// Semi-discrete two-scale Galerkin system and its time integration. The
// spatial system couples a macro concentration (coefficients a) with two
// micro concentrations on the cell attached to every macro point
// (tensor coefficients b, c, laid out micro-fastest).
//
// Time stepping is backward Euler with the reaction term taken explicitly
// at the previous state. Scaling the macro equation by 1/gamma makes the
// coupled step operator symmetric positive definite, so each step is one
// preconditioned CG solve on the 3-block system.

#include <algorithm>
#include <cmath>
#include <functional>
#include <memory>
#include <span>
#include <vector>

#include "twoscale/assembly.hpp"
#include "twoscale/fields.hpp"

namespace twoscale {

struct ReactionLaw {
  enum class Kind { zero, linear, truncated_bilinear };

  Kind kind = Kind::zero;
  double rate = 1.0;   // k
  double cap = 1e3;    // clamp bound M for the truncated-bilinear law

  double operator()(double v, double w) const {
    switch (kind) {
      case Kind::zero: return 0.0;
      case Kind::linear: return rate * (v + w);
      case Kind::truncated_bilinear: {
        const double cv = std::min(std::max(v, 0.0), cap);
        const double cw = std::min(std::max(w, 0.0), cap);
        return rate * cv * cw;
      }
    }
    return 0.0;
  }

  double lipschitz() const {
    switch (kind) {
      case Kind::zero: return 0.0;
      case Kind::linear: return rate;
      case Kind::truncated_bilinear: return rate * cap;
    }
    return 0.0;
  }

  static ReactionLaw zero() { return {}; }
  static ReactionLaw linear(double k) { return {Kind::linear, k, 0.0}; }
  static ReactionLaw truncated_bilinear(double k, double cap) {
    return {Kind::truncated_bilinear, k, cap};
  }
};

struct ModelParams {
  double d_u = 1.0, d_v = 1.0, d_w = 1.0;  // diffusivities, positive (A3)
  double alpha = 1.0;                      // interface exchange rate
  double gamma = 1.0;                      // upscaling factor
  double t_final = 1.0;
  ReactionLaw eta;

  std::function<double(double, double, double)> dirichlet;  // U_D(t, x1, x2)
  std::function<double(double, double)> initial_u;
  std::function<double(double, double, double, double)> initial_v;  // (x1,x2,y1,y2)
  std::function<double(double, double, double, double)> initial_w;

  // optional forcing; empty means zero
  MacroField forcing_u;
  TwoScaleField forcing_v, forcing_w;
  TwoScaleField robin_forcing;  // extra boundary load on Omega x Gamma^R in the v equation

  void validate() const;
};

struct TwoScaleState {
  double t = 0.0;
  std::vector<double> a;  // macro coefficients, length N1
  std::vector<double> b;  // micro-fastest tensor coefficients, length N1*N2
  std::vector<double> c;
};

struct StepDiagnostics {
  double t = 0.0;
  double dt = 0.0;
  int cg_iterations = 0;
  double residual = 0.0;
};

struct SolverOptions {
  double cg_tol = 1e-10;
  int cg_maxit = 0;                  // 0: 10*sqrt(dim)+200
  bool lumped_preconditioner = false;  // diagonal instead of factorized blocks
};

class TwoScaleSolver {
 public:
  TwoScaleSolver(const FeSpaceMacro& macro, const FeSpaceMicro& micro, const FeSystem& system,
                 ModelParams params, SolverOptions options = {});

  const FeSpaceMacro& macro() const { return macro_; }
  const FeSpaceMicro& micro() const { return micro_; }
  const FeSystem& system() const { return system_; }
  const ModelParams& params() const { return params_; }

  TwoScaleState initial_state() const;

  // One backward-Euler step; Dirichlet dofs of a are set to U_D(t+dt).
  TwoScaleState step(const TwoScaleState& s, double dt, StepDiagnostics* diag = nullptr) const;

  using Observer = std::function<void(const TwoScaleState&, int step, const StepDiagnostics*)>;

  // States at t = 0, dt, ..., t_final. The observer sees every state; the
  // returned trajectory is empty when store is false (large runs).
  std::vector<TwoScaleState> solve(double dt, const Observer& observer = nullptr,
                                   bool store = true) const;

  struct Residual {
    std::vector<double> a, b, c;
  };

  // Galerkin residuals of the semi-discrete system at the given state and
  // rate of change.
  Residual semidiscrete_residual(const TwoScaleState& s, std::span<const double> a_dot,
                                 std::span<const double> b_dot, std::span<const double> c_dot) const;

  // Discrete mass bookkeeping across one accepted step: time derivative of
  // the gamma-weighted total mass against boundary flux plus sources. The
  // two sides agree to solver tolerance.
  struct ConservationCheck {
    double mass_rate = 0.0;   // d/dt [ int U + gamma int v ]
    double flux_and_sources = 0.0;
  };
  ConservationCheck conservation_check(const TwoScaleState& before,
                                       const TwoScaleState& after) const;

  // load of the reaction term at the given state (quadrature for the
  // truncated-bilinear law, closed form otherwise); empty when eta == 0
  std::vector<double> reaction_load(const TwoScaleState& s) const;

  std::vector<double> forcing_load_u(double t) const;
  std::vector<double> forcing_load_v(double t) const;  // includes the Robin boundary load
  std::vector<double> forcing_load_w(double t) const;

 private:
  struct StepContext;

  const StepContext& context(double dt) const;
  void apply_coupling_ab(std::span<const double> b, std::span<double> out) const;  // (M (x) t^T) b
  void apply_coupling_ba(std::span<const double> a, std::span<double> out) const;  // (M a) (x) t

  const FeSpaceMacro& macro_;
  const FeSpaceMicro& micro_;
  const FeSystem& system_;
  ModelParams params_;
  SolverOptions options_;

  // precomputed separable load factors (time-independent)
  struct LoadFactors {
    std::vector<std::vector<double>> macro;  // per term
    std::vector<std::vector<double>> micro;
    const TwoScaleField* field = nullptr;
  };
  LoadFactors forcing_v_factors_, forcing_w_factors_, robin_factors_;

  mutable std::unique_ptr<StepContext> context_;
};

struct TimeDerivativeReport {
  double dt_norm_u_sq = 0.0;  // discrete ||d_t U||^2 over S x Omega
  double dt_norm_v_sq = 0.0;
  double dt_norm_w_sq = 0.0;
  double grad_energy_u = 0.0;  // time-integrated gradient energies
  double grad_energy_v = 0.0;
  double grad_energy_w = 0.0;
  double sup_grad_u = 0.0;
  double sup_grad_v = 0.0;
  double sup_grad_w = 0.0;
  double solution_l2_sq = 0.0;  // time-integrated L2 norms of the solution
  double initial_energy = 0.0;  // gradient energies + interface term at t = 0
  double lhs = 0.0;             // time-derivative norms + gradient energies
  double rhs = 0.0;             // initial energy + solution L2 norms
  double ratio = 0.0;
};

// Difference-quotient stability diagnostic over a stored trajectory.
TimeDerivativeReport time_derivative_diagnostic(const std::vector<TwoScaleState>& states,
                                                const FeSystem& system,
                                                double initial_energy_override = -1.0);

// Auxiliary micro system with a frozen macro input: the coupled system with
// the macro equation removed and the exchange term driven by given data.
struct MicroSystemParams {
  double d_v = 1.0, d_w = 1.0;
  double alpha = 1.0;
  double t_final = 1.0;
  ReactionLaw eta;
  std::function<double(double, double, double)> macro_data;  // (t, x1, x2)
  std::function<double(double, double, double, double)> initial_v;
  std::function<double(double, double, double, double)> initial_w;
};

class MicroSystemSolver {
 public:
  MicroSystemSolver(const FeSpaceMacro& macro, const FeSpaceMicro& micro, const FeSystem& system,
                    MicroSystemParams params, SolverOptions options = {});

  TwoScaleState initial_state() const;  // a is left empty
  TwoScaleState step(const TwoScaleState& s, double dt, StepDiagnostics* diag = nullptr) const;
  std::vector<TwoScaleState> solve(double dt) const;

 private:
  const FeSpaceMacro& macro_;
  const FeSpaceMicro& micro_;
  const FeSystem& system_;
  MicroSystemParams params_;
  SolverOptions options_;

  struct Context;
  const Context& context(double dt) const;
  mutable std::unique_ptr<Context> context_;
};

}  // namespace twoscale
