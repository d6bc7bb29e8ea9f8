#include "twoscale/solver.hpp"

#include <cmath>

namespace twoscale {

namespace {

void add_outer(std::span<const double> macro, std::span<const double> micro, double scale,
               std::span<double> out) {
  const int n1 = static_cast<int>(macro.size());
  const int n2 = static_cast<int>(micro.size());
  for (int i = 0; i < n1; ++i) {
    const double s = scale * macro[i];
    if (s == 0.0) continue;
    double* o = out.data() + static_cast<std::size_t>(i) * n2;
    for (int j = 0; j < n2; ++j) o[j] += s * micro[j];
  }
}

// z = (M^-1 (x) G^-1) r for factor Cholesky decompositions
void kron_inverse_apply(const ProfileCholesky& macro_chol, const ProfileCholesky& micro_chol,
                        std::span<const double> r, std::span<double> z) {
  const int n1 = macro_chol.dim();
  const int n2 = micro_chol.dim();
  std::vector<double> w(static_cast<std::size_t>(n1) * n2);
  for (int i = 0; i < n1; ++i)
    micro_chol.solve(r.subspan(static_cast<std::size_t>(i) * n2, n2),
                     std::span<double>(w.data() + static_cast<std::size_t>(i) * n2, n2));
  std::vector<double> strided(n1), solved(n1);
  for (int j = 0; j < n2; ++j) {
    for (int i = 0; i < n1; ++i) strided[i] = w[static_cast<std::size_t>(i) * n2 + j];
    macro_chol.solve(strided, solved);
    for (int i = 0; i < n1; ++i) z[static_cast<std::size_t>(i) * n2 + j] = solved[i];
  }
}

std::vector<double> precompute_macro_factor(const FeSpaceMacro& space, const SeparableTerm& term) {
  return macro_load(space, term.macro, 4);
}

}  // namespace

void ModelParams::validate() const {
  if (d_u <= 0 || d_v <= 0 || d_w <= 0)
    throw ValidationError("(A3): diffusivities D_U, D_v, D_w must be positive");
  if (alpha <= 0) throw ValidationError("model: interface exchange rate alpha must be positive");
  if (gamma <= 0) throw ValidationError("model: upscaling factor gamma must be positive");
  if (t_final <= 0) throw ValidationError("model: final time must be positive");
}

struct TwoScaleSolver::StepContext {
  double dt = 0.0;
  SparseMatrix s_a;        // (1/gamma)(M/dt + D_U K) + alpha s_R M
  SparseMatrix g_v, g_w;   // M_Y/dt + D K_Y (+ alpha B_Y for v)
  std::unique_ptr<ProfileCholesky> chol_a;        // dirichlet rows/cols identity
  std::unique_ptr<ProfileCholesky> chol_m_omega;  // macro mass factor
  std::unique_ptr<ProfileCholesky> chol_g_v, chol_g_w;
  std::vector<double> diag_a, diag_b, diag_c;     // lumped fallback
  KroneckerOperator op_bb, op_cc, mass_bb;
};

TwoScaleSolver::TwoScaleSolver(const FeSpaceMacro& macro, const FeSpaceMicro& micro,
                               const FeSystem& system, ModelParams params, SolverOptions options)
    : macro_(macro), micro_(micro), system_(system), params_(std::move(params)), options_(options) {
  params_.validate();
  auto prep = [this](const TwoScaleField& field, LoadFactors* out, bool edge) {
    out->field = &field;
    for (const auto& term : field.terms) {
      out->macro.push_back(precompute_macro_factor(macro_, term));
      out->micro.push_back(edge ? micro_edge_load(micro_, term.micro, 4)
                                : micro_load(micro_, term.micro, 4));
    }
  };
  prep(params_.forcing_v, &forcing_v_factors_, false);
  prep(params_.forcing_w, &forcing_w_factors_, false);
  prep(params_.robin_forcing, &robin_factors_, true);
}

const TwoScaleSolver::StepContext& TwoScaleSolver::context(double dt) const {
  if (context_ && context_->dt == dt) return *context_;
  auto ctx = std::make_unique<StepContext>();
  ctx->dt = dt;
  const double g = params_.gamma;
  ctx->s_a = SparseMatrix::weighted_sum({{1.0 / (g * dt) + params_.alpha * system_.s_r, &system_.m_omega},
                                         {params_.d_u / g, &system_.k_omega}});
  ctx->g_v = SparseMatrix::weighted_sum(
      {{1.0 / dt, &system_.m_y}, {params_.d_v, &system_.k_y}, {params_.alpha, &system_.b_y}});
  ctx->g_w = SparseMatrix::weighted_sum({{1.0 / dt, &system_.m_y}, {params_.d_w, &system_.k_y}});
  ctx->op_bb = {&system_.m_omega, &ctx->g_v};
  ctx->op_cc = {&system_.m_omega, &ctx->g_w};
  ctx->mass_bb = {&system_.m_omega, &system_.m_y};

  const std::vector<int>& dir = macro_.dirichlet_dofs();
  if (options_.lumped_preconditioner) {
    const SparseMatrix s_a_dir = ctx->s_a.with_identity_rows(dir);
    ctx->diag_a = s_a_dir.diagonal();
    const auto dm = system_.m_omega.diagonal();
    const auto dv = ctx->g_v.diagonal();
    const auto dw = ctx->g_w.diagonal();
    ctx->diag_b.resize(static_cast<std::size_t>(system_.n1) * system_.n2);
    ctx->diag_c.resize(ctx->diag_b.size());
    for (int i = 0; i < system_.n1; ++i)
      for (int j = 0; j < system_.n2; ++j) {
        ctx->diag_b[static_cast<std::size_t>(i) * system_.n2 + j] = dm[i] * dv[j];
        ctx->diag_c[static_cast<std::size_t>(i) * system_.n2 + j] = dm[i] * dw[j];
      }
  } else {
    ctx->chol_a = std::make_unique<ProfileCholesky>(ctx->s_a.with_identity_rows(dir));
    ctx->chol_m_omega = std::make_unique<ProfileCholesky>(system_.m_omega);
    ctx->chol_g_v = std::make_unique<ProfileCholesky>(ctx->g_v);
    ctx->chol_g_w = std::make_unique<ProfileCholesky>(ctx->g_w);
  }
  context_ = std::move(ctx);
  return *context_;
}

TwoScaleState TwoScaleSolver::initial_state() const {
  TwoScaleState s;
  s.t = 0.0;
  s.a = macro_.interpolate(params_.initial_u);
  const int n1 = system_.n1, n2 = system_.n2;
  s.b.resize(static_cast<std::size_t>(n1) * n2);
  s.c.resize(s.b.size());
  for (int i = 0; i < n1; ++i) {
    const double x1 = macro_.dof_x(i), x2 = macro_.dof_y(i);
    for (int j = 0; j < n2; ++j) {
      const double y1 = micro_.dof_y1(j), y2 = micro_.dof_y2(j);
      s.b[static_cast<std::size_t>(i) * n2 + j] = params_.initial_v(x1, x2, y1, y2);
      s.c[static_cast<std::size_t>(i) * n2 + j] = params_.initial_w(x1, x2, y1, y2);
    }
  }
  return s;
}

void TwoScaleSolver::apply_coupling_ab(std::span<const double> b, std::span<double> out) const {
  // out = (M (x) t^T) b: first contract each micro slice with t, then M
  const int n1 = system_.n1, n2 = system_.n2;
  std::vector<double> s(n1);
  for (int i = 0; i < n1; ++i)
    s[i] = dot(std::span<const double>(b.data() + static_cast<std::size_t>(i) * n2, n2),
               system_.t_y);
  system_.m_omega.multiply(s, out);
}

void TwoScaleSolver::apply_coupling_ba(std::span<const double> a, std::span<double> out) const {
  const int n1 = system_.n1, n2 = system_.n2;
  std::vector<double> ma(n1);
  system_.m_omega.multiply(a, ma);
  std::fill(out.begin(), out.end(), 0.0);
  add_outer(ma, system_.t_y, 1.0, out);
}

std::vector<double> TwoScaleSolver::reaction_load(const TwoScaleState& s) const {
  const int n1 = system_.n1, n2 = system_.n2;
  switch (params_.eta.kind) {
    case ReactionLaw::Kind::zero:
      return {};
    case ReactionLaw::Kind::linear: {
      std::vector<double> sum(s.b.size());
      for (std::size_t i = 0; i < sum.size(); ++i) sum[i] = s.b[i] + s.c[i];
      std::vector<double> out(sum.size());
      KroneckerOperator mm{&system_.m_omega, &system_.m_y};
      mm.apply(sum, out);
      for (auto& x : out) x *= params_.eta.rate;
      return out;
    }
    case ReactionLaw::Kind::truncated_bilinear:
      break;
  }
  // quadrature over Omega x Y with the fields evaluated from the tensor basis
  std::vector<double> out(static_cast<std::size_t>(n1) * n2, 0.0);
  int nq = 0;
  const QuadPoint1D* qp = gauss_rule(2, &nq);
  std::vector<double> slice_b(4 * n2), slice_c(4 * n2), v_at_x(n2), w_at_x(n2);
  for (const auto& el : macro_.elements()) {
    // nodal micro slices of b and c at the four corners
    for (int c = 0; c < 4; ++c) {
      double* sb = slice_b.data() + c * n2;
      double* sc = slice_c.data() + c * n2;
      std::fill(sb, sb + n2, 0.0);
      std::fill(sc, sc + n2, 0.0);
      for (const auto& [dof, w] : macro_.node_expansion(el.nodes[c]))
        for (int j = 0; j < n2; ++j) {
          sb[j] += w * s.b[static_cast<std::size_t>(dof) * n2 + j];
          sc[j] += w * s.c[static_cast<std::size_t>(dof) * n2 + j];
        }
    }
    const double jac = el.h * el.h;
    for (int qx = 0; qx < nq; ++qx)
      for (int qy = 0; qy < nq; ++qy) {
        const auto bv = bilinear_values(qp[qx].x, qp[qy].x);
        for (int j = 0; j < n2; ++j) {
          v_at_x[j] = bv[0] * slice_b[j] + bv[1] * slice_b[n2 + j] + bv[2] * slice_b[2 * n2 + j] +
                      bv[3] * slice_b[3 * n2 + j];
          w_at_x[j] = bv[0] * slice_c[j] + bv[1] * slice_c[n2 + j] + bv[2] * slice_c[2 * n2 + j] +
                      bv[3] * slice_c[3 * n2 + j];
        }
        const auto eta_fn = [&](double y1, double y2) {
          return params_.eta(micro_.value(v_at_x, y1, y2), micro_.value(w_at_x, y1, y2));
        };
        const std::vector<double> micro_l = micro_load(micro_, eta_fn, 2);
        const double w0 = qp[qx].w * qp[qy].w * jac;
        for (int c = 0; c < 4; ++c) {
          const double bc = bv[c] * w0;
          for (const auto& [dof, wexp] : macro_.node_expansion(el.nodes[c])) {
            double* o = out.data() + static_cast<std::size_t>(dof) * n2;
            const double scale = bc * wexp;
            for (int j = 0; j < n2; ++j) o[j] += scale * micro_l[j];
          }
        }
      }
  }
  return out;
}

std::vector<double> TwoScaleSolver::forcing_load_u(double t) const {
  if (params_.forcing_u.empty()) return std::vector<double>(system_.n1, 0.0);
  const auto& f = params_.forcing_u.value;
  return macro_load(macro_, [&](double x1, double x2) { return f(t, x1, x2); }, 4);
}

namespace {

std::vector<double> combine_factors(double t, const TwoScaleSolver* /*unused*/, int n1, int n2,
                                    const std::vector<std::vector<double>>& macro_f,
                                    const std::vector<std::vector<double>>& micro_f,
                                    const TwoScaleField* field) {
  std::vector<double> out(static_cast<std::size_t>(n1) * n2, 0.0);
  for (std::size_t r = 0; r < macro_f.size(); ++r) {
    const double tt = field->terms[r].time(t);
    if (tt == 0.0) continue;
    const int nn1 = static_cast<int>(macro_f[r].size());
    const int nn2 = static_cast<int>(micro_f[r].size());
    for (int i = 0; i < nn1; ++i) {
      const double s = tt * macro_f[r][i];
      if (s == 0.0) continue;
      double* o = out.data() + static_cast<std::size_t>(i) * nn2;
      for (int j = 0; j < nn2; ++j) o[j] += s * micro_f[r][j];
    }
  }
  return out;
}

}  // namespace

std::vector<double> TwoScaleSolver::forcing_load_v(double t) const {
  std::vector<double> out = combine_factors(t, this, system_.n1, system_.n2,
                                            forcing_v_factors_.macro, forcing_v_factors_.micro,
                                            forcing_v_factors_.field);
  if (!robin_factors_.macro.empty()) {
    const std::vector<double> robin =
        combine_factors(t, this, system_.n1, system_.n2, robin_factors_.macro,
                        robin_factors_.micro, robin_factors_.field);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += robin[i];
  }
  return out;
}

std::vector<double> TwoScaleSolver::forcing_load_w(double t) const {
  return combine_factors(t, this, system_.n1, system_.n2, forcing_w_factors_.macro,
                         forcing_w_factors_.micro, forcing_w_factors_.field);
}

TwoScaleState TwoScaleSolver::step(const TwoScaleState& s, double dt, StepDiagnostics* diag) const {
  if (dt <= 0.0) throw ValidationError("step: dt must be positive");
  const double lip = params_.eta.lipschitz();
  if (lip > 0.0 && dt > 0.5 / lip)
    throw ValidationError("step: dt exceeds the reaction stability guard 1/(2L) with L = " +
                          format_full(lip));
  const StepContext& ctx = context(dt);
  const int n1 = system_.n1, n2 = system_.n2;
  const std::size_t nb = static_cast<std::size_t>(n1) * n2;
  const double t_new = s.t + dt;
  const double alpha = params_.alpha;
  const double gamma = params_.gamma;

  // boundary values at the new time level
  std::vector<double> ghat(n1, 0.0);
  for (int d : macro_.dirichlet_dofs()) ghat[d] = params_.dirichlet(t_new, macro_.dof_x(d), macro_.dof_y(d));

  // right-hand side
  std::vector<double> rhs(static_cast<std::size_t>(n1) + 2 * nb, 0.0);
  auto rhs_a = std::span<double>(rhs.data(), n1);
  auto rhs_b = std::span<double>(rhs.data() + n1, nb);
  auto rhs_c = std::span<double>(rhs.data() + n1 + nb, nb);

  {
    std::vector<double> ma(n1);
    system_.m_omega.multiply(s.a, ma);
    const std::vector<double> fu = forcing_load_u(t_new);
    for (int i = 0; i < n1; ++i) rhs_a[i] = (ma[i] / dt + fu[i]) / gamma;
  }
  {
    std::vector<double> scratch;
    std::vector<double> mb(nb);
    ctx.mass_bb.apply(s.b, mb, &scratch);
    const std::vector<double> fv = forcing_load_v(t_new);
    const std::vector<double> nv = reaction_load(s);
    for (std::size_t i = 0; i < nb; ++i)
      rhs_b[i] = mb[i] / dt + fv[i] - (nv.empty() ? 0.0 : nv[i]);
    ctx.mass_bb.apply(s.c, mb, &scratch);
    const std::vector<double> fw = forcing_load_w(t_new);
    for (std::size_t i = 0; i < nb; ++i)
      rhs_c[i] = mb[i] / dt + fw[i] - (nv.empty() ? 0.0 : nv[i]);
  }

  // eliminate Dirichlet values: rhs_a <- P(rhs_a - S_a ghat) + ghat,
  // rhs_b <- rhs_b + alpha (M ghat) (x) t
  {
    std::vector<double> sg(n1);
    ctx.s_a.multiply(ghat, sg);
    for (int i = 0; i < n1; ++i) rhs_a[i] -= sg[i];
    for (int d : macro_.dirichlet_dofs()) rhs_a[d] = ghat[d];
    std::vector<double> mg(n1);
    system_.m_omega.multiply(ghat, mg);
    add_outer(mg, system_.t_y, alpha, rhs_b);
  }

  // step operator on (a, b, c); the a-block carries the Dirichlet identity
  BlockOperator3 op;
  op.dims = {n1, static_cast<int>(nb), static_cast<int>(nb)};
  const std::vector<int>& dir = macro_.dirichlet_dofs();
  op.block[0][0] = [&](std::span<const double> x, std::span<double> y) {
    std::vector<double> xa(x.begin(), x.end());
    for (int d : dir) xa[d] = 0.0;
    std::vector<double> tmp(n1);
    ctx.s_a.multiply(xa, tmp);
    for (int i = 0; i < n1; ++i) y[i] += tmp[i];
    for (int d : dir) y[d] = x[d];
  };
  op.block[0][1] = [&](std::span<const double> x, std::span<double> y) {
    std::vector<double> tmp(n1);
    apply_coupling_ab(x, tmp);
    std::vector<char> isdir(n1, 0);
    for (int d : dir) isdir[d] = 1;
    for (int i = 0; i < n1; ++i)
      if (!isdir[i]) y[i] -= alpha * tmp[i];
  };
  op.block[1][0] = [&](std::span<const double> x, std::span<double> y) {
    std::vector<double> xa(x.begin(), x.end());
    for (int d : dir) xa[d] = 0.0;
    std::vector<double> tmp(nb);
    apply_coupling_ba(xa, tmp);
    for (std::size_t i = 0; i < nb; ++i) y[i] -= alpha * tmp[i];
  };
  op.block[1][1] = [&](std::span<const double> x, std::span<double> y) {
    std::vector<double> scratch, tmp(nb);
    ctx.op_bb.apply(x, tmp, &scratch);
    for (std::size_t i = 0; i < nb; ++i) y[i] += tmp[i];
  };
  op.block[2][2] = [&](std::span<const double> x, std::span<double> y) {
    std::vector<double> scratch, tmp(nb);
    ctx.op_cc.apply(x, tmp, &scratch);
    for (std::size_t i = 0; i < nb; ++i) y[i] += tmp[i];
  };

  if (options_.lumped_preconditioner) {
    op.precondition[0] = [&](std::span<const double> r, std::span<double> z) {
      for (int i = 0; i < n1; ++i) z[i] = r[i] / ctx.diag_a[i];
    };
    op.precondition[1] = [&](std::span<const double> r, std::span<double> z) {
      for (std::size_t i = 0; i < nb; ++i) z[i] = r[i] / ctx.diag_b[i];
    };
    op.precondition[2] = [&](std::span<const double> r, std::span<double> z) {
      for (std::size_t i = 0; i < nb; ++i) z[i] = r[i] / ctx.diag_c[i];
    };
  } else {
    op.precondition[0] = [&](std::span<const double> r, std::span<double> z) {
      ctx.chol_a->solve(r, z);
    };
    op.precondition[1] = [&](std::span<const double> r, std::span<double> z) {
      kron_inverse_apply(*ctx.chol_m_omega, *ctx.chol_g_v, r, z);
    };
    op.precondition[2] = [&](std::span<const double> r, std::span<double> z) {
      kron_inverse_apply(*ctx.chol_m_omega, *ctx.chol_g_w, r, z);
    };
  }

  // warm start from the previous state with boundary values injected
  std::vector<double> x0(rhs.size());
  std::copy(s.a.begin(), s.a.end(), x0.begin());
  for (int d : dir) x0[d] = ghat[d];
  std::copy(s.b.begin(), s.b.end(), x0.begin() + n1);
  std::copy(s.c.begin(), s.c.end(), x0.begin() + n1 + nb);

  const BlockSolveResult sol = block_solve(op, rhs, options_.cg_tol, options_.cg_maxit, x0);

  TwoScaleState out;
  out.t = t_new;
  out.a.assign(sol.x.begin(), sol.x.begin() + n1);
  out.b.assign(sol.x.begin() + n1, sol.x.begin() + n1 + nb);
  out.c.assign(sol.x.begin() + n1 + nb, sol.x.end());
  if (diag) {
    diag->t = t_new;
    diag->dt = dt;
    diag->cg_iterations = sol.iterations;
    diag->residual = sol.relative_residual;
  }
  return out;
}

std::vector<TwoScaleState> TwoScaleSolver::solve(double dt, const Observer& observer,
                                                 bool store) const {
  if (dt <= 0.0) throw ValidationError("solve: dt must be positive");
  const double steps_real = params_.t_final / dt;
  const long long n_steps = std::llround(steps_real);
  if (n_steps < 1 || std::abs(steps_real - static_cast<double>(n_steps)) > 1e-9 * std::max(1.0, steps_real))
    throw ValidationError("solve: t_final / dt = " + format_full(steps_real) +
                          " is not an integer within rounding");
  const double dt_exact = params_.t_final / static_cast<double>(n_steps);

  std::vector<TwoScaleState> trajectory;
  TwoScaleState current = initial_state();
  if (observer) observer(current, 0, nullptr);
  if (store) trajectory.push_back(current);
  for (long long k = 0; k < n_steps; ++k) {
    StepDiagnostics diag;
    TwoScaleState next = step(current, dt_exact, &diag);
    if (observer) observer(next, static_cast<int>(k + 1), &diag);
    if (store) trajectory.push_back(next);
    current = std::move(next);
  }
  return trajectory;
}

TwoScaleSolver::Residual TwoScaleSolver::semidiscrete_residual(const TwoScaleState& s,
                                                               std::span<const double> a_dot,
                                                               std::span<const double> b_dot,
                                                               std::span<const double> c_dot) const {
  const int n1 = system_.n1;
  const std::size_t nb = static_cast<std::size_t>(n1) * system_.n2;
  if (a_dot.size() != static_cast<std::size_t>(n1) || b_dot.size() != nb || c_dot.size() != nb)
    throw ValidationError("residual: rate dimension mismatch");
  Residual r;
  r.a.assign(n1, 0.0);
  r.b.assign(nb, 0.0);
  r.c.assign(nb, 0.0);
  const double alpha = params_.alpha, gamma = params_.gamma;

  // R_a = M a' + D_U K a - gamma alpha [ (M (x) t^T) b - s_R M a ] - F_U
  {
    std::vector<double> tmp(n1);
    system_.m_omega.multiply(a_dot, tmp);
    for (int i = 0; i < n1; ++i) r.a[i] = tmp[i];
    system_.k_omega.multiply(s.a, tmp);
    for (int i = 0; i < n1; ++i) r.a[i] += params_.d_u * tmp[i];
    apply_coupling_ab(s.b, tmp);
    for (int i = 0; i < n1; ++i) r.a[i] -= gamma * alpha * tmp[i];
    system_.m_omega.multiply(s.a, tmp);
    for (int i = 0; i < n1; ++i) r.a[i] += gamma * alpha * system_.s_r * tmp[i];
    const std::vector<double> fu = forcing_load_u(s.t);
    for (int i = 0; i < n1; ++i) r.a[i] -= fu[i];
  }

  const std::vector<double> nv = reaction_load(s);

  // R_b = (M (x) M_Y) b' + D_v (M (x) K_Y) b + alpha [ (M (x) B_Y) b - (M a)(x)t ] + N - F_v
  {
    std::vector<double> scratch, tmp(nb);
    KroneckerOperator mm{&system_.m_omega, &system_.m_y};
    mm.apply(b_dot, tmp, &scratch);
    for (std::size_t i = 0; i < nb; ++i) r.b[i] = tmp[i];
    KroneckerOperator mk{&system_.m_omega, &system_.k_y};
    mk.apply(s.b, tmp, &scratch);
    for (std::size_t i = 0; i < nb; ++i) r.b[i] += params_.d_v * tmp[i];
    KroneckerOperator mb{&system_.m_omega, &system_.b_y};
    mb.apply(s.b, tmp, &scratch);
    for (std::size_t i = 0; i < nb; ++i) r.b[i] += alpha * tmp[i];
    apply_coupling_ba(s.a, tmp);
    for (std::size_t i = 0; i < nb; ++i) r.b[i] -= alpha * tmp[i];
    const std::vector<double> fv = forcing_load_v(s.t);
    for (std::size_t i = 0; i < nb; ++i)
      r.b[i] += (nv.empty() ? 0.0 : nv[i]) - fv[i];
  }

  // R_c = (M (x) M_Y) c' + D_w (M (x) K_Y) c + N - F_w
  {
    std::vector<double> scratch, tmp(nb);
    KroneckerOperator mm{&system_.m_omega, &system_.m_y};
    mm.apply(c_dot, tmp, &scratch);
    for (std::size_t i = 0; i < nb; ++i) r.c[i] = tmp[i];
    KroneckerOperator mk{&system_.m_omega, &system_.k_y};
    mk.apply(s.c, tmp, &scratch);
    for (std::size_t i = 0; i < nb; ++i) r.c[i] += params_.d_w * tmp[i];
    const std::vector<double> fw = forcing_load_w(s.t);
    for (std::size_t i = 0; i < nb; ++i)
      r.c[i] += (nv.empty() ? 0.0 : nv[i]) - fw[i];
  }
  return r;
}

TwoScaleSolver::ConservationCheck TwoScaleSolver::conservation_check(
    const TwoScaleState& before, const TwoScaleState& after) const {
  const int n1 = system_.n1, n2 = system_.n2;
  const std::size_t nb = static_cast<std::size_t>(n1) * n2;
  const double dt = after.t - before.t;
  const double alpha = params_.alpha, gamma = params_.gamma;

  const std::vector<double> m1 = system_.m_omega.row_sums();        // M 1
  const std::vector<double> my1 = system_.m_y.row_sums();           // M_Y 1

  ConservationCheck check;
  // d/dt [ int U + gamma int v ]
  double mass_rate = 0.0;
  for (int i = 0; i < n1; ++i) mass_rate += m1[i] * (after.a[i] - before.a[i]);
  for (int i = 0; i < n1; ++i)
    for (int j = 0; j < n2; ++j)
      mass_rate += gamma * m1[i] * my1[j] *
                   (after.b[static_cast<std::size_t>(i) * n2 + j] -
                    before.b[static_cast<std::size_t>(i) * n2 + j]);
  check.mass_rate = mass_rate / dt;

  // defect of the replaced Dirichlet rows = discrete boundary flux
  std::vector<double> row(n1, 0.0);
  {
    std::vector<double> tmp(n1);
    system_.m_omega.multiply(after.a, tmp);
    std::vector<double> tmp2(n1);
    system_.m_omega.multiply(before.a, tmp2);
    for (int i = 0; i < n1; ++i) row[i] = (tmp[i] - tmp2[i]) / dt;
    system_.k_omega.multiply(after.a, tmp);
    for (int i = 0; i < n1; ++i) row[i] += params_.d_u * tmp[i];
    apply_coupling_ab(after.b, tmp);
    for (int i = 0; i < n1; ++i) row[i] -= gamma * alpha * tmp[i];
    system_.m_omega.multiply(after.a, tmp);
    for (int i = 0; i < n1; ++i) row[i] += gamma * alpha * system_.s_r * tmp[i];
    const std::vector<double> fu = forcing_load_u(after.t);
    for (int i = 0; i < n1; ++i) row[i] -= fu[i];
  }
  double flux = 0.0;
  for (int d : macro_.dirichlet_dofs()) flux += row[d];

  // volume sources
  const std::vector<double> fu = forcing_load_u(after.t);
  double sources = 0.0;
  for (int i = 0; i < n1; ++i) sources += fu[i];
  const std::vector<double> fv = forcing_load_v(after.t);
  for (std::size_t i = 0; i < nb; ++i) sources += gamma * fv[i];
  const std::vector<double> nv = reaction_load(before);
  if (!nv.empty())
    for (std::size_t i = 0; i < nb; ++i) sources -= gamma * nv[i];

  check.flux_and_sources = flux + sources;
  return check;
}

TimeDerivativeReport time_derivative_diagnostic(const std::vector<TwoScaleState>& states,
                                                const FeSystem& system,
                                                double initial_energy_override) {
  if (states.size() < 2)
    throw ValidationError("time derivative diagnostic: need at least two states");
  TimeDerivativeReport rep;
  const int n1 = system.n1, n2 = system.n2;
  const std::size_t nb = static_cast<std::size_t>(n1) * n2;
  KroneckerOperator mm{&system.m_omega, &system.m_y};
  KroneckerOperator mk{&system.m_omega, &system.k_y};
  KroneckerOperator mby{&system.m_omega, &system.b_y};

  std::vector<double> scratch, tmp(nb), q(nb), qa(n1);

  auto macro_quad = [&](const SparseMatrix& m, std::span<const double> u) {
    return m.quadratic_form(u, u);
  };
  auto kron_quad = [&](const KroneckerOperator& k, std::span<const double> u) {
    k.apply(u, tmp, &scratch);
    return dot(u, tmp);
  };

  // difference-quotient norms
  for (std::size_t s = 0; s + 1 < states.size(); ++s) {
    const double dt = states[s + 1].t - states[s].t;
    for (int i = 0; i < n1; ++i) qa[i] = (states[s + 1].a[i] - states[s].a[i]) / dt;
    rep.dt_norm_u_sq += dt * macro_quad(system.m_omega, qa);
    for (std::size_t i = 0; i < nb; ++i) q[i] = (states[s + 1].b[i] - states[s].b[i]) / dt;
    rep.dt_norm_v_sq += dt * kron_quad(mm, q);
    for (std::size_t i = 0; i < nb; ++i) q[i] = (states[s + 1].c[i] - states[s].c[i]) / dt;
    rep.dt_norm_w_sq += dt * kron_quad(mm, q);
  }

  // trapezoid-in-time energies
  for (std::size_t s = 0; s < states.size(); ++s) {
    double w;
    if (s == 0)
      w = (states[1].t - states[0].t) / 2;
    else if (s + 1 == states.size())
      w = (states[s].t - states[s - 1].t) / 2;
    else
      w = (states[s + 1].t - states[s - 1].t) / 2;
    const double gu = macro_quad(system.k_omega, states[s].a);
    const double gv = kron_quad(mk, states[s].b);
    const double gw = kron_quad(mk, states[s].c);
    rep.grad_energy_u += w * gu;
    rep.grad_energy_v += w * gv;
    rep.grad_energy_w += w * gw;
    rep.sup_grad_u = std::max(rep.sup_grad_u, gu);
    rep.sup_grad_v = std::max(rep.sup_grad_v, gv);
    rep.sup_grad_w = std::max(rep.sup_grad_w, gw);
    rep.solution_l2_sq += w * (macro_quad(system.m_omega, states[s].a) + kron_quad(mm, states[s].b) +
                               kron_quad(mm, states[s].c));
  }

  if (initial_energy_override >= 0.0) {
    rep.initial_energy = initial_energy_override;
  } else {
    // gradient energies at t=0 plus the interface term int (v^2 - 2 U v)
    const TwoScaleState& s0 = states.front();
    double theta = 0.0;
    mby.apply(s0.b, tmp, &scratch);
    theta += dot(s0.b, tmp);
    std::vector<double> coup(n1), tvec(n1);
    // (M (x) t^T) b
    for (int i = 0; i < n1; ++i)
      tvec[i] = dot(std::span<const double>(s0.b.data() + static_cast<std::size_t>(i) * n2, n2),
                    system.t_y);
    system.m_omega.multiply(tvec, coup);
    theta -= 2.0 * dot(s0.a, coup);
    rep.initial_energy = macro_quad(system.k_omega, s0.a) + kron_quad(mk, s0.b) +
                         kron_quad(mk, s0.c) + theta;
  }

  rep.lhs = rep.dt_norm_u_sq + rep.dt_norm_v_sq + rep.dt_norm_w_sq + rep.grad_energy_u +
            rep.grad_energy_v + rep.grad_energy_w;
  rep.rhs = rep.initial_energy + rep.solution_l2_sq;
  rep.ratio = rep.lhs / std::max(rep.rhs, 1e-300);
  return rep;
}

struct MicroSystemSolver::Context {
  double dt = 0.0;
  SparseMatrix g_v, g_w;
  std::unique_ptr<ProfileCholesky> chol_m_omega, chol_g_v, chol_g_w;
  KroneckerOperator op_bb, op_cc, mass_bb;
};

MicroSystemSolver::MicroSystemSolver(const FeSpaceMacro& macro, const FeSpaceMicro& micro,
                                     const FeSystem& system, MicroSystemParams params,
                                     SolverOptions options)
    : macro_(macro), micro_(micro), system_(system), params_(std::move(params)), options_(options) {
  if (params_.d_v <= 0 || params_.d_w <= 0)
    throw ValidationError("(A3): diffusivities D_v, D_w must be positive");
  if (params_.alpha <= 0) throw ValidationError("micro system: alpha must be positive");
}

const MicroSystemSolver::Context& MicroSystemSolver::context(double dt) const {
  if (context_ && context_->dt == dt) return *context_;
  auto ctx = std::make_unique<Context>();
  ctx->dt = dt;
  ctx->g_v = SparseMatrix::weighted_sum(
      {{1.0 / dt, &system_.m_y}, {params_.d_v, &system_.k_y}, {params_.alpha, &system_.b_y}});
  ctx->g_w = SparseMatrix::weighted_sum({{1.0 / dt, &system_.m_y}, {params_.d_w, &system_.k_y}});
  ctx->chol_m_omega = std::make_unique<ProfileCholesky>(system_.m_omega);
  ctx->chol_g_v = std::make_unique<ProfileCholesky>(ctx->g_v);
  ctx->chol_g_w = std::make_unique<ProfileCholesky>(ctx->g_w);
  ctx->op_bb = {&system_.m_omega, &ctx->g_v};
  ctx->op_cc = {&system_.m_omega, &ctx->g_w};
  ctx->mass_bb = {&system_.m_omega, &system_.m_y};
  context_ = std::move(ctx);
  return *context_;
}

TwoScaleState MicroSystemSolver::initial_state() const {
  TwoScaleState s;
  s.t = 0.0;
  const int n1 = system_.n1, n2 = system_.n2;
  s.b.resize(static_cast<std::size_t>(n1) * n2);
  s.c.resize(s.b.size());
  for (int i = 0; i < n1; ++i) {
    const double x1 = macro_.dof_x(i), x2 = macro_.dof_y(i);
    for (int j = 0; j < n2; ++j) {
      s.b[static_cast<std::size_t>(i) * n2 + j] =
          params_.initial_v(x1, x2, micro_.dof_y1(j), micro_.dof_y2(j));
      s.c[static_cast<std::size_t>(i) * n2 + j] =
          params_.initial_w(x1, x2, micro_.dof_y1(j), micro_.dof_y2(j));
    }
  }
  return s;
}

TwoScaleState MicroSystemSolver::step(const TwoScaleState& s, double dt,
                                      StepDiagnostics* diag) const {
  const double lip = params_.eta.lipschitz();
  if (lip > 0.0 && dt > 0.5 / lip)
    throw ValidationError("micro step: dt exceeds the reaction stability guard 1/(2L)");
  const Context& ctx = context(dt);
  const int n1 = system_.n1, n2 = system_.n2;
  const std::size_t nb = static_cast<std::size_t>(n1) * n2;
  const double t_new = s.t + dt;

  // lagged reaction at the previous state
  std::vector<double> nv;
  if (params_.eta.kind == ReactionLaw::Kind::linear) {
    std::vector<double> sum(nb);
    for (std::size_t i = 0; i < nb; ++i) sum[i] = s.b[i] + s.c[i];
    nv.resize(nb);
    KroneckerOperator mm{&system_.m_omega, &system_.m_y};
    mm.apply(sum, nv);
    for (auto& x : nv) x *= params_.eta.rate;
  } else if (params_.eta.kind == ReactionLaw::Kind::truncated_bilinear) {
    // quadrature path shared with the full solver via a throwaway instance
    ModelParams mp;
    mp.eta = params_.eta;
    mp.dirichlet = [](double, double, double) { return 0.0; };
    mp.initial_u = [](double, double) { return 0.0; };
    mp.initial_v = [](double, double, double, double) { return 0.0; };
    mp.initial_w = mp.initial_v;
    TwoScaleSolver helper(macro_, micro_, system_, mp, options_);
    nv = helper.reaction_load(s);
  }

  // macro-data exchange load: alpha * (load of U(t+dt)) (x) t
  const std::vector<double> u_load = macro_load(
      macro_, [&](double x1, double x2) { return params_.macro_data(t_new, x1, x2); }, 4);

  std::vector<double> rhs_b(nb), rhs_c(nb), scratch;
  {
    std::vector<double> mb(nb);
    ctx.mass_bb.apply(s.b, mb, &scratch);
    for (std::size_t i = 0; i < nb; ++i) rhs_b[i] = mb[i] / dt - (nv.empty() ? 0.0 : nv[i]);
    add_outer(u_load, system_.t_y, params_.alpha, rhs_b);
    ctx.mass_bb.apply(s.c, mb, &scratch);
    for (std::size_t i = 0; i < nb; ++i) rhs_c[i] = mb[i] / dt - (nv.empty() ? 0.0 : nv[i]);
  }

  TwoScaleState out;
  out.t = t_new;
  out.b = s.b;
  out.c = s.c;
  CgOptions opt;
  opt.tol = options_.cg_tol;
  opt.max_iterations = options_.cg_maxit;
  opt.precondition = [&](std::span<const double> r, std::span<double> z) {
    kron_inverse_apply(*ctx.chol_m_omega, *ctx.chol_g_v, r, z);
  };
  CgResult r1 = cg_solve(
      [&](std::span<const double> x, std::span<double> y) { ctx.op_bb.apply(x, y); }, rhs_b, out.b,
      opt);
  opt.precondition = [&](std::span<const double> r, std::span<double> z) {
    kron_inverse_apply(*ctx.chol_m_omega, *ctx.chol_g_w, r, z);
  };
  CgResult r2 = cg_solve(
      [&](std::span<const double> x, std::span<double> y) { ctx.op_cc.apply(x, y); }, rhs_c, out.c,
      opt);
  if (diag) {
    diag->t = t_new;
    diag->dt = dt;
    diag->cg_iterations = r1.iterations + r2.iterations;
    diag->residual = std::max(r1.relative_residual, r2.relative_residual);
  }
  return out;
}

std::vector<TwoScaleState> MicroSystemSolver::solve(double dt) const {
  const double steps_real = params_.t_final / dt;
  const long long n_steps = std::llround(steps_real);
  if (n_steps < 1 || std::abs(steps_real - static_cast<double>(n_steps)) > 1e-9 * std::max(1.0, steps_real))
    throw ValidationError("micro solve: t_final / dt is not an integer within rounding");
  const double dt_exact = params_.t_final / static_cast<double>(n_steps);
  std::vector<TwoScaleState> trajectory;
  trajectory.push_back(initial_state());
  for (long long k = 0; k < n_steps; ++k)
    trajectory.push_back(step(trajectory.back(), dt_exact, nullptr));
  return trajectory;
}

}  // namespace twoscale
