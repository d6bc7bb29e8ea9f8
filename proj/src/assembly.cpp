#include "twoscale/assembly.hpp"

#include <cmath>
#include <limits>

namespace twoscale {

namespace {

// 1D blocks on an interval of length h; products of the 2D bilinear basis
// factor into these.
struct Blocks1D {
  double m[2][2];
  double k[2][2];
};

Blocks1D blocks_1d(double h) {
  Blocks1D b;
  b.m[0][0] = b.m[1][1] = h / 3.0;
  b.m[0][1] = b.m[1][0] = h / 6.0;
  b.k[0][0] = b.k[1][1] = 1.0 / h;
  b.k[0][1] = b.k[1][0] = -1.0 / h;
  return b;
}

// local 4x4 mass and stiffness in corner order (0,0),(1,0),(0,1),(1,1)
void local_matrices(double h, double m[4][4], double k[4][4]) {
  const Blocks1D b = blocks_1d(h);
  for (int a = 0; a < 4; ++a) {
    const int ax = a & 1, ay = a >> 1;
    for (int c = 0; c < 4; ++c) {
      const int cx = c & 1, cy = c >> 1;
      m[a][c] = b.m[ax][cx] * b.m[ay][cy];
      k[a][c] = b.k[ax][cx] * b.m[ay][cy] + b.m[ax][cx] * b.k[ay][cy];
    }
  }
}

// scatter a local matrix through the hanging-node expansions
void scatter_macro(const FeSpaceMacro& space, const FeSpaceMacro::Element& el,
                   const double local[4][4], std::vector<Triplet>* trip) {
  for (int a = 0; a < 4; ++a) {
    const auto& ra = space.node_expansion(el.nodes[a]);
    for (int c = 0; c < 4; ++c) {
      const auto& rc = space.node_expansion(el.nodes[c]);
      for (const auto& [da, wa] : ra)
        for (const auto& [dc, wc] : rc) trip->push_back({da, dc, wa * wc * local[a][c]});
    }
  }
}

}  // namespace

FeSystem assemble(const FeSpaceMacro& macro, const FeSpaceMicro& micro) {
  FeSystem sys;
  sys.n1 = macro.dof_count();
  sys.n2 = micro.dof_count();

  {
    std::vector<Triplet> tm, tk;
    double m[4][4], k[4][4];
    for (const auto& el : macro.elements()) {
      local_matrices(el.h, m, k);
      scatter_macro(macro, el, m, &tm);
      scatter_macro(macro, el, k, &tk);
    }
    sys.m_omega = SparseMatrix::from_triplets(sys.n1, sys.n1, std::move(tm));
    sys.k_omega = SparseMatrix::from_triplets(sys.n1, sys.n1, std::move(tk));
  }

  {
    std::vector<Triplet> tm, tk;
    double m[4][4], k[4][4];
    local_matrices(micro.element_side(), m, k);
    for (const auto& el : micro.elements())
      for (int a = 0; a < 4; ++a)
        for (int c = 0; c < 4; ++c) {
          tm.push_back({el.nodes[a], el.nodes[c], m[a][c]});
          tk.push_back({el.nodes[a], el.nodes[c], k[a][c]});
        }
    sys.m_y = SparseMatrix::from_triplets(sys.n2, sys.n2, std::move(tm));
    sys.k_y = SparseMatrix::from_triplets(sys.n2, sys.n2, std::move(tk));
  }

  {
    const Blocks1D b = blocks_1d(micro.element_side());
    std::vector<Triplet> tb;
    sys.t_y.assign(sys.n2, 0.0);
    sys.s_r = 0.0;
    for (const auto& e : micro.gamma_r_edges()) {
      const int nodes[2] = {e.node_a, e.node_b};
      for (int a = 0; a < 2; ++a)
        for (int c = 0; c < 2; ++c) tb.push_back({nodes[a], nodes[c], b.m[a][c]});
      sys.t_y[e.node_a] += micro.element_side() / 2.0;
      sys.t_y[e.node_b] += micro.element_side() / 2.0;
      sys.s_r += micro.element_side();
    }
    sys.b_y = SparseMatrix::from_triplets(sys.n2, sys.n2, std::move(tb));
  }
  return sys;
}

SparseMatrix assemble_boundary_mass(const FeSpaceMicro& micro, const std::vector<Side>& sides) {
  const Blocks1D b = blocks_1d(micro.element_side());
  std::vector<Triplet> tb;
  for (const auto& e : micro.boundary_edges()) {
    bool active = false;
    for (Side s : sides) active = active || (s == e.side);
    if (!active) continue;
    const int nodes[2] = {e.node_a, e.node_b};
    for (int a = 0; a < 2; ++a)
      for (int c = 0; c < 2; ++c) tb.push_back({nodes[a], nodes[c], b.m[a][c]});
  }
  return SparseMatrix::from_triplets(micro.dof_count(), micro.dof_count(), std::move(tb));
}

double h1_inner_product(const SparseMatrix& mass, const SparseMatrix& stiffness,
                        std::span<const double> u, std::span<const double> v) {
  if (static_cast<int>(u.size()) != mass.rows() || static_cast<int>(v.size()) != mass.rows())
    throw ValidationError("h1 inner product: dimension mismatch");
  return mass.quadratic_form(u, v) + stiffness.quadratic_form(u, v);
}

std::vector<double> macro_load(const FeSpaceMacro& space, const Fn2& f, int gauss) {
  int nq = 0;
  const QuadPoint1D* qp = gauss_rule(gauss, &nq);
  std::vector<double> load(space.dof_count(), 0.0);
  for (const auto& el : space.elements()) {
    const double jac = el.h * el.h;
    for (int qx = 0; qx < nq; ++qx)
      for (int qy = 0; qy < nq; ++qy) {
        const double x = el.x0 + el.h * qp[qx].x;
        const double y = el.y0 + el.h * qp[qy].x;
        const double w = qp[qx].w * qp[qy].w * jac * f(x, y);
        const auto bv = bilinear_values(qp[qx].x, qp[qy].x);
        for (int c = 0; c < 4; ++c)
          for (const auto& [dof, cw] : space.node_expansion(el.nodes[c]))
            load[dof] += w * bv[c] * cw;
      }
  }
  return load;
}

std::vector<double> macro_load_h1(const FeSpaceMacro& space, const Fn2& f, const GradFn2& grad,
                                  int gauss) {
  int nq = 0;
  const QuadPoint1D* qp = gauss_rule(gauss, &nq);
  std::vector<double> load(space.dof_count(), 0.0);
  for (const auto& el : space.elements()) {
    const double jac = el.h * el.h;
    for (int qx = 0; qx < nq; ++qx)
      for (int qy = 0; qy < nq; ++qy) {
        const double x = el.x0 + el.h * qp[qx].x;
        const double y = el.y0 + el.h * qp[qy].x;
        const double w = qp[qx].w * qp[qy].w * jac;
        const double fv = f(x, y);
        const auto fg = grad(x, y);
        const auto bv = bilinear_values(qp[qx].x, qp[qy].x);
        const auto bg = bilinear_gradients(qp[qx].x, qp[qy].x);
        for (int c = 0; c < 4; ++c) {
          const double contrib =
              w * (fv * bv[c] + fg[0] * bg[c][0] / el.h + fg[1] * bg[c][1] / el.h);
          for (const auto& [dof, cw] : space.node_expansion(el.nodes[c]))
            load[dof] += contrib * cw;
        }
      }
  }
  return load;
}

std::vector<double> micro_load(const FeSpaceMicro& space, const Fn2& f, int gauss) {
  int nq = 0;
  const QuadPoint1D* qp = gauss_rule(gauss, &nq);
  const double h = space.element_side();
  std::vector<double> load(space.dof_count(), 0.0);
  for (const auto& el : space.elements()) {
    for (int qx = 0; qx < nq; ++qx)
      for (int qy = 0; qy < nq; ++qy) {
        const double y1 = el.y0 + h * qp[qx].x;
        const double y2 = el.y1 + h * qp[qy].x;
        const double w = qp[qx].w * qp[qy].w * h * h * f(y1, y2);
        const auto bv = bilinear_values(qp[qx].x, qp[qy].x);
        for (int c = 0; c < 4; ++c) load[el.nodes[c]] += w * bv[c];
      }
  }
  return load;
}

std::vector<double> micro_load_h1(const FeSpaceMicro& space, const Fn2& f, const GradFn2& grad,
                                  int gauss) {
  int nq = 0;
  const QuadPoint1D* qp = gauss_rule(gauss, &nq);
  const double h = space.element_side();
  std::vector<double> load(space.dof_count(), 0.0);
  for (const auto& el : space.elements()) {
    for (int qx = 0; qx < nq; ++qx)
      for (int qy = 0; qy < nq; ++qy) {
        const double y1 = el.y0 + h * qp[qx].x;
        const double y2 = el.y1 + h * qp[qy].x;
        const double w = qp[qx].w * qp[qy].w * h * h;
        const double fv = f(y1, y2);
        const auto fg = grad(y1, y2);
        const auto bv = bilinear_values(qp[qx].x, qp[qy].x);
        const auto bg = bilinear_gradients(qp[qx].x, qp[qy].x);
        for (int c = 0; c < 4; ++c)
          load[el.nodes[c]] += w * (fv * bv[c] + fg[0] * bg[c][0] / h + fg[1] * bg[c][1] / h);
      }
  }
  return load;
}

std::vector<double> macro_load_gradient(const FeSpaceMacro& space, const GradFn2& grad,
                                        int gauss) {
  int nq = 0;
  const QuadPoint1D* qp = gauss_rule(gauss, &nq);
  std::vector<double> load(space.dof_count(), 0.0);
  for (const auto& el : space.elements()) {
    const double jac = el.h * el.h;
    for (int qx = 0; qx < nq; ++qx)
      for (int qy = 0; qy < nq; ++qy) {
        const double x = el.x0 + el.h * qp[qx].x;
        const double y = el.y0 + el.h * qp[qy].x;
        const double w = qp[qx].w * qp[qy].w * jac;
        const auto fg = grad(x, y);
        const auto bg = bilinear_gradients(qp[qx].x, qp[qy].x);
        for (int c = 0; c < 4; ++c) {
          const double contrib = w * (fg[0] * bg[c][0] / el.h + fg[1] * bg[c][1] / el.h);
          for (const auto& [dof, cw] : space.node_expansion(el.nodes[c]))
            load[dof] += contrib * cw;
        }
      }
  }
  return load;
}

std::vector<double> micro_load_gradient(const FeSpaceMicro& space, const GradFn2& grad, int gauss) {
  int nq = 0;
  const QuadPoint1D* qp = gauss_rule(gauss, &nq);
  const double h = space.element_side();
  std::vector<double> load(space.dof_count(), 0.0);
  for (const auto& el : space.elements()) {
    for (int qx = 0; qx < nq; ++qx)
      for (int qy = 0; qy < nq; ++qy) {
        const double y1 = el.y0 + h * qp[qx].x;
        const double y2 = el.y1 + h * qp[qy].x;
        const double w = qp[qx].w * qp[qy].w * h * h;
        const auto fg = grad(y1, y2);
        const auto bg = bilinear_gradients(qp[qx].x, qp[qy].x);
        for (int c = 0; c < 4; ++c)
          load[el.nodes[c]] += w * (fg[0] * bg[c][0] / h + fg[1] * bg[c][1] / h);
      }
  }
  return load;
}

namespace {

// point on a boundary edge parametrized by s in [0,1] from node_a to node_b
std::array<double, 2> edge_point(const FeSpaceMicro& space, const FeSpaceMicro::BoundaryEdge& e,
                                 double s) {
  const double a1 = space.dof_y1(e.node_a), a2 = space.dof_y2(e.node_a);
  const double b1 = space.dof_y1(e.node_b), b2 = space.dof_y2(e.node_b);
  return {a1 + s * (b1 - a1), a2 + s * (b2 - a2)};
}

}  // namespace

std::vector<double> micro_edge_load(const FeSpaceMicro& space, const Fn2& f, int gauss) {
  int nq = 0;
  const QuadPoint1D* qp = gauss_rule(gauss, &nq);
  const double h = space.element_side();
  std::vector<double> load(space.dof_count(), 0.0);
  for (const auto& e : space.gamma_r_edges()) {
    for (int q = 0; q < nq; ++q) {
      const auto p = edge_point(space, e, qp[q].x);
      const double w = qp[q].w * h * f(p[0], p[1]);
      load[e.node_a] += w * (1.0 - qp[q].x);
      load[e.node_b] += w * qp[q].x;
    }
  }
  return load;
}

double macro_integral(const FeSpaceMacro& space, const Fn2& f, int gauss) {
  int nq = 0;
  const QuadPoint1D* qp = gauss_rule(gauss, &nq);
  double total = 0.0;
  for (const auto& el : space.elements()) {
    const double jac = el.h * el.h;
    for (int qx = 0; qx < nq; ++qx)
      for (int qy = 0; qy < nq; ++qy)
        total += qp[qx].w * qp[qy].w * jac * f(el.x0 + el.h * qp[qx].x, el.y0 + el.h * qp[qy].x);
  }
  return total;
}

double micro_integral(const FeSpaceMicro& space, const Fn2& f, int gauss) {
  int nq = 0;
  const QuadPoint1D* qp = gauss_rule(gauss, &nq);
  const double h = space.element_side();
  double total = 0.0;
  for (const auto& el : space.elements())
    for (int qx = 0; qx < nq; ++qx)
      for (int qy = 0; qy < nq; ++qy)
        total += qp[qx].w * qp[qy].w * h * h * f(el.y0 + h * qp[qx].x, el.y1 + h * qp[qy].x);
  return total;
}

double micro_edge_integral(const FeSpaceMicro& space, const std::vector<Side>& sides, const Fn2& f,
                           int gauss) {
  int nq = 0;
  const QuadPoint1D* qp = gauss_rule(gauss, &nq);
  const double h = space.element_side();
  double total = 0.0;
  for (const auto& e : space.boundary_edges()) {
    bool active = false;
    for (Side s : sides) active = active || (s == e.side);
    if (!active) continue;
    for (int q = 0; q < nq; ++q) {
      const auto p = edge_point(space, e, qp[q].x);
      total += qp[q].w * h * f(p[0], p[1]);
    }
  }
  return total;
}

TraceInequalityReport trace_inequality_check(const FeSpaceMicro& micro, double rho, int samples,
                                             std::uint64_t seed) {
  if (rho <= 0.0) throw ValidationError("trace check: rho must be positive");
  if (samples < 1) throw ValidationError("trace check: need at least one sample");
  const SparseMatrix b_full = assemble_boundary_mass(
      micro, {Side::bottom, Side::right, Side::top, Side::left});
  std::vector<Triplet> tm, tk;
  {
    // mass and stiffness straight from local blocks
    double m[4][4], k[4][4];
    local_matrices(micro.element_side(), m, k);
    for (const auto& el : micro.elements())
      for (int a = 0; a < 4; ++a)
        for (int c = 0; c < 4; ++c) {
          tm.push_back({el.nodes[a], el.nodes[c], m[a][c]});
          tk.push_back({el.nodes[a], el.nodes[c], k[a][c]});
        }
  }
  const SparseMatrix m_y =
      SparseMatrix::from_triplets(micro.dof_count(), micro.dof_count(), std::move(tm));
  const SparseMatrix k_y =
      SparseMatrix::from_triplets(micro.dof_count(), micro.dof_count(), std::move(tk));

  Rng rng(seed);
  TraceInequalityReport report;
  report.rho = rho;
  report.samples = samples;
  report.c_required = -std::numeric_limits<double>::infinity();
  report.c_min = std::numeric_limits<double>::infinity();
  report.dominated = true;
  std::vector<double> f(micro.dof_count());
  for (int s = 0; s < samples; ++s) {
    for (auto& x : f) x = rng.normal();
    const double trace = b_full.quadratic_form(f, f);
    const double grad = k_y.quadratic_form(f, f);
    const double mass = m_y.quadratic_form(f, f);
    if (mass <= 0.0) {
      report.dominated = false;
      continue;
    }
    const double c = (trace - rho * grad) / mass;
    report.c_required = std::max(report.c_required, c);
    report.c_min = std::min(report.c_min, c);
  }
  report.dominated = report.dominated && std::isfinite(report.c_required);
  return report;
}

}  // namespace twoscale
