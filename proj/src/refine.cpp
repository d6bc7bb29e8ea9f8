#include "twoscale/refine.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace twoscale {

EllipticProjection elliptic_project(const MacroField& u, const FeSpaceMacro& space,
                                    const FeSystem& system, std::span<const double> time_nodes,
                                    double cg_tol) {
  if (!u.value || !u.grad)
    throw ValidationError("elliptic projection: field needs value and gradient");
  EllipticProjection proj;
  proj.times.assign(time_nodes.begin(), time_nodes.end());
  proj.coefficients.reserve(time_nodes.size());

  const SparseMatrix a = SparseMatrix::weighted_sum({{1.0, &system.m_omega}, {1.0, &system.k_omega}});
  const std::vector<double> diag = a.diagonal();
  CgOptions opt;
  opt.tol = cg_tol;
  opt.precondition = [&diag](std::span<const double> r, std::span<double> z) {
    for (std::size_t i = 0; i < r.size(); ++i) z[i] = r[i] / diag[i];
  };

  std::vector<double> x(space.dof_count(), 0.0);  // warm start across time nodes
  for (double t : time_nodes) {
    const std::vector<double> load = macro_load_h1(
        space, [&](double x1, double x2) { return u.value(t, x1, x2); },
        [&](double x1, double x2) { return u.grad(t, x1, x2); }, 4);
    cg_solve([&a](std::span<const double> in, std::span<double> out) { a.multiply(in, out); },
             load, x, opt);
    proj.coefficients.push_back(x);
  }
  return proj;
}

IndicatorReport error_indicator(const MacroField& u, const EllipticProjection& projection,
                                const FeSpaceMacro& space) {
  if (projection.times.empty()) throw ValidationError("indicator: projection has no time nodes");
  IndicatorReport rep;
  rep.generation = space.partition().generation();
  rep.dof_count = space.dof_count();
  const int n_el = static_cast<int>(space.elements().size());
  rep.values.assign(n_el, 0.0);

  int nq = 0;
  const QuadPoint1D* qp = gauss_rule(4, &nq);
  const std::size_t n_t = projection.times.size();

  for (std::size_t s = 0; s < n_t; ++s) {
    double w_t;
    if (n_t == 1)
      w_t = 1.0;
    else if (s == 0)
      w_t = (projection.times[1] - projection.times[0]) / 2;
    else if (s + 1 == n_t)
      w_t = (projection.times[s] - projection.times[s - 1]) / 2;
    else
      w_t = (projection.times[s + 1] - projection.times[s - 1]) / 2;
    const double t = projection.times[s];
    const std::vector<double>& coeffs = projection.coefficients[s];

    for (int e = 0; e < n_el; ++e) {
      const auto& el = space.elements()[e];
      double acc = 0.0;
      for (int qx = 0; qx < nq; ++qx)
        for (int qy = 0; qy < nq; ++qy) {
          const double x = el.x0 + el.h * qp[qx].x;
          const double y = el.y0 + el.h * qp[qy].x;
          double fe_v;
          std::array<double, 2> fe_g;
          space.eval_local(e, coeffs, qp[qx].x, qp[qy].x, &fe_v, &fe_g);
          const double ev = u.value(t, x, y) - fe_v;
          const auto ug = u.grad(t, x, y);
          const double gx = ug[0] - fe_g[0];
          const double gy = ug[1] - fe_g[1];
          acc += qp[qx].w * qp[qy].w * (ev * ev + gx * gx + gy * gy);
        }
      rep.values[e] += w_t * acc * el.h * el.h;
    }
  }

  for (int e = 0; e < n_el; ++e) {
    rep.sum_squares += rep.values[e];
    rep.values[e] = std::sqrt(rep.values[e]);
    rep.max_value = std::max(rep.max_value, rep.values[e]);
  }
  return rep;
}

std::vector<int> mark(std::span<const double> values, double beta) {
  if (!(beta > 0.0 && beta < 1.0))
    throw ValidationError("mark: beta must lie in the open interval (0,1)");
  if (values.empty()) throw ValidationError("mark: no indicator values");
  double max_v = 0.0;
  for (double v : values) max_v = std::max(max_v, v);
  std::vector<int> marked;
  const double threshold = beta * max_v;
  for (std::size_t i = 0; i < values.size(); ++i)
    if (values[i] >= threshold) marked.push_back(static_cast<int>(i));
  return marked;
}

namespace {

std::vector<double> ranks(std::span<const double> v) {
  const std::size_t n = v.size();
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&v](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> r(n, 0.0);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && v[idx[j + 1]] == v[idx[i]]) ++j;
    const double avg = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
    for (std::size_t k = i; k <= j; ++k) r[idx[k]] = avg;
    i = j + 1;
  }
  return r;
}

}  // namespace

double spearman_rank_correlation(std::span<const double> x, std::span<const double> y) {
  const std::size_t n = x.size();
  if (n != y.size() || n < 2) throw ValidationError("spearman: need two samples of equal length");
  const std::vector<double> rx = ranks(x);
  const std::vector<double> ry = ranks(y);
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < n; ++i) {
    mx += rx[i];
    my += ry[i];
  }
  mx /= n;
  my /= n;
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < n; ++i) {
    sxy += (rx[i] - mx) * (ry[i] - my);
    sxx += (rx[i] - mx) * (rx[i] - mx);
    syy += (ry[i] - my) * (ry[i] - my);
  }
  if (sxx == 0 || syy == 0) return 0.0;
  return sxy / std::sqrt(sxx * syy);
}

}  // namespace twoscale
